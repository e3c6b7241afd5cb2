//! Dense strictly convex quadratic programming with the dual active-set
//! method of Goldfarb and Idnani.
//!
//! ```text
//!     minimize    ½ zᵀHz + gᵀz
//!     subject to  A_eq z = b_eq
//!                 A_in z ≤ b_in
//! ```
//!
//! The method starts from the unconstrained minimizer and adds violated
//! constraints one at a time, so it needs no feasible starting point and
//! reports infeasibility when no step can restore a violated constraint.

use nalgebra::{DMatrix, DVector};

use super::SolverError;

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    /// Problem with inequality constraints only.
    pub fn inequality(
        h: DMatrix<f64>,
        g: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in,
            b_in,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    fn check(&self) -> Result<(), SolverError> {
        let n = self.g.len();
        let ok = self.h.nrows() == n
            && self.h.ncols() == n
            && self.a_eq.ncols() == n
            && self.a_eq.nrows() == self.b_eq.len()
            && self.a_in.ncols() == n
            && self.a_in.nrows() == self.b_in.len();
        if ok {
            Ok(())
        } else {
            Err(SolverError::Dimension(format!(
                "qp: H {}x{}, g {}, A_eq {}x{}, b_eq {}, A_in {}x{}, b_in {}",
                self.h.nrows(),
                self.h.ncols(),
                n,
                self.a_eq.nrows(),
                self.a_eq.ncols(),
                self.b_eq.len(),
                self.a_in.nrows(),
                self.a_in.ncols(),
                self.b_in.len()
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    /// Multipliers for the equality rows followed by the inequality rows.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Factorization of a QP whose Hessian, gradient and constraint matrices are
/// fixed, so that repeated solves with different inequality right-hand sides
/// skip the Cholesky step.
#[derive(Clone, Debug)]
pub struct QpFactor {
    problem: QpProblem,
    // J = L⁻ᵀ for the (possibly regularized) Hessian
    j0: DMatrix<f64>,
    z0: DVector<f64>,
    norms: Vec<f64>,
}

impl QpFactor {
    pub fn new(problem: QpProblem) -> Result<Self, SolverError> {
        problem.check()?;
        let n = problem.dim();
        let (h, g) = match problem.h.clone().cholesky() {
            Some(_) => (problem.h.clone(), problem.g.clone()),
            None => {
                // Positive definite on the equality null space only: add a
                // penalty that vanishes on the feasible set.
                if problem.a_eq.nrows() == 0 {
                    return Err(SolverError::NotConvex);
                }
                let rho = 1.0 + problem.h.amax();
                let at = problem.a_eq.transpose();
                (
                    &problem.h + rho * &at * &problem.a_eq,
                    &problem.g - rho * &at * &problem.b_eq,
                )
            }
        };
        let chol = h.clone().cholesky().ok_or(SolverError::NotConvex)?;
        let l = chol.l();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(SolverError::NotConvex)?;
        let j0 = l_inv.transpose();
        let z0 = -chol.solve(&g);
        let norms = problem
            .a_eq
            .row_iter()
            .chain(problem.a_in.row_iter())
            .map(|r| r.norm().max(1e-300))
            .collect();
        Ok(Self {
            problem,
            j0,
            z0,
            norms,
        })
    }

    pub fn problem(&self) -> &QpProblem {
        &self.problem
    }

    /// Solve with the stored inequality right-hand side.
    pub fn solve(&self, tol: f64, max_iter: usize) -> QpSolution {
        self.solve_with_rhs(&self.problem.b_in, tol, max_iter)
    }

    /// Solve with a replacement inequality right-hand side.
    pub fn solve_with_rhs(&self, b_in: &DVector<f64>, tol: f64, max_iter: usize) -> QpSolution {
        assert_eq!(b_in.len(), self.problem.a_in.nrows(), "rhs length");
        GoldfarbIdnani::new(self, b_in).run(tol, max_iter)
    }
}

/// One-shot solve of `p`.
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, SolverError> {
    Ok(QpFactor::new(p.clone())?.solve(tol, max_iter))
}

struct GoldfarbIdnani<'a> {
    f: &'a QpFactor,
    b_in: &'a DVector<f64>,
    n: usize,
    meq: usize,
    z: DVector<f64>,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    active: Vec<usize>,
    // sign applied to an active row so that it reads `sign * a z >= sign * b`
    signs: Vec<f64>,
    u: Vec<f64>,
}

impl<'a> GoldfarbIdnani<'a> {
    fn new(f: &'a QpFactor, b_in: &'a DVector<f64>) -> Self {
        let n = f.problem.dim();
        Self {
            f,
            b_in,
            n,
            meq: f.problem.a_eq.nrows(),
            z: f.z0.clone(),
            j: f.j0.clone(),
            r: DMatrix::zeros(n, n),
            active: Vec::with_capacity(n),
            signs: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
        }
    }

    fn row(&self, i: usize) -> DVector<f64> {
        if i < self.meq {
            self.f.problem.a_eq.row(i).transpose()
        } else {
            self.f.problem.a_in.row(i - self.meq).transpose()
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        if i < self.meq {
            self.f.problem.b_eq[i]
        } else {
            self.b_in[i - self.meq]
        }
    }

    /// Most violated constraint as (index, sign) with the constraint read as
    /// `sign·a z ≥ sign·b`.
    fn most_violated(&self, tol: f64) -> Option<(usize, f64)> {
        let p = &self.f.problem;
        let mut best: Option<(usize, f64, f64)> = None;
        let eq_res = &p.a_eq * &self.z - &p.b_eq;
        let in_res = &p.a_in * &self.z - self.b_in;
        for i in 0..self.meq + p.a_in.nrows() {
            if self.active.contains(&i) {
                continue;
            }
            let (viol, sign) = if i < self.meq {
                let s = eq_res[i];
                (s.abs(), if s > 0.0 { -1.0 } else { 1.0 })
            } else {
                (in_res[i - self.meq], -1.0)
            };
            let scaled = viol / self.f.norms[i];
            let thresh = tol * (1.0 + self.rhs(i).abs() / self.f.norms[i]);
            if scaled > thresh && best.is_none_or(|(_, _, v)| scaled > v) {
                best = Some((i, sign, scaled));
            }
        }
        best.map(|(i, s, _)| (i, s))
    }

    fn run(mut self, tol: f64, max_iter: usize) -> QpSolution {
        let mut iterations = 0usize;
        let status = 'outer: loop {
            let Some((p, sign)) = self.most_violated(tol) else {
                break QpStatus::Optimal;
            };
            let np = sign * self.row(p);
            let cp = sign * self.rhs(p);
            let mut up = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iter {
                    break 'outer QpStatus::MaxIter;
                }
                let q = self.active.len();
                let d = self.j.tr_mul(&np);
                let mut zdir = DVector::zeros(self.n);
                for k in q..self.n {
                    zdir.axpy(d[k], &self.j.column(k), 1.0);
                }
                let rdir = self.solve_r(&d.rows(0, q).into_owned());

                let mut t1 = f64::INFINITY;
                let mut drop_at = None;
                for (k, &c) in self.active.iter().enumerate() {
                    if c >= self.meq && rdir[k] > 0.0 {
                        let ratio = self.u[k] / rdir[k];
                        if ratio < t1 {
                            t1 = ratio;
                            drop_at = Some(k);
                        }
                    }
                }
                let zn = zdir.dot(&np);
                let full_norm = d.norm_squared();
                let slack = np.dot(&self.z) - cp;
                let t2 = if zn <= 1e-13 * full_norm.max(1e-300) {
                    f64::INFINITY
                } else {
                    (-slack / zn).max(0.0)
                };
                if t1.is_infinite() && t2.is_infinite() {
                    break 'outer QpStatus::Infeasible;
                }
                let t = t1.min(t2);
                if t2.is_finite() {
                    self.z.axpy(t, &zdir, 1.0);
                }
                for k in 0..q {
                    self.u[k] -= t * rdir[k];
                }
                up += t;
                if t2 <= t1 {
                    self.add(p, sign, up, d);
                    break;
                }
                let k = drop_at.expect("partial step implies a blocking multiplier");
                self.drop(k);
            }
        };
        let pr = &self.f.problem;
        let mut multipliers = DVector::zeros(self.meq + pr.a_in.nrows());
        for (k, &c) in self.active.iter().enumerate() {
            // multipliers of the original rows (A_in z ≤ b has u ≥ 0)
            multipliers[c] = -self.signs[k] * self.u[k];
        }
        let objective = pr.objective(&self.z);
        QpSolution {
            z: self.z,
            objective,
            status,
            multipliers,
            iterations,
        }
    }

    fn solve_r(&self, d1: &DVector<f64>) -> DVector<f64> {
        let q = d1.len();
        let mut x = d1.clone();
        for i in (0..q).rev() {
            let mut s = x[i];
            for k in i + 1..q {
                s -= self.r[(i, k)] * x[k];
            }
            x[i] = s / self.r[(i, i)];
        }
        x
    }

    fn add(&mut self, p: usize, sign: f64, up: f64, mut d: DVector<f64>) {
        let q = self.active.len();
        for k in (q + 1..self.n).rev() {
            let (a, b) = (d[k - 1], d[k]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[k - 1] = h;
            d[k] = 0.0;
            rotate_columns(&mut self.j, k - 1, k, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.active.push(p);
        self.signs.push(sign);
        self.u.push(up);
    }

    fn drop(&mut self, k: usize) {
        let q = self.active.len();
        for col in k..q - 1 {
            for i in 0..=col + 1 {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for col in k..q - 1 {
            let (a, b) = (self.r[(col, col)], self.r[(col + 1, col)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for jc in col..q - 1 {
                let (x, y) = (self.r[(col, jc)], self.r[(col + 1, jc)]);
                self.r[(col, jc)] = c * x + s * y;
                self.r[(col + 1, jc)] = -s * x + c * y;
            }
            self.r[(col + 1, col)] = 0.0;
            rotate_columns(&mut self.j, col, col + 1, c, s);
        }
        self.active.remove(k);
        self.signs.remove(k);
        self.u.remove(k);
    }
}

fn rotate_columns(j: &mut DMatrix<f64>, a: usize, b: usize, c: f64, s: f64) {
    for i in 0..j.nrows() {
        let (x, y) = (j[(i, a)], j[(i, b)]);
        j[(i, a)] = c * x + s * y;
        j[(i, b)] = -s * x + c * y;
    }
}
