//! Dense linear programming for `max cᵀx s.t. Ax ≤ b` with free `x`.
//!
//! The primal has few variables (the state dimension) and potentially many
//! rows, so the simplex method runs on the dual
//!
//! ```text
//!     min bᵀy   s.t.   Aᵀy = c,  y ≥ 0
//! ```
//!
//! whose tableau only has `n` rows. The primal optimizer is recovered from the
//! simplex multipliers of the final dual basis.

use nalgebra::{DMatrix, DVector};

use super::SolverError;

/// Termination status of [`solve_lp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    /// Primal optimizer; `None` unless `status` is optimal.
    pub x: Option<DVector<f64>>,
    /// Optimal value `cᵀx` (`NaN` unless optimal).
    pub value: f64,
    pub status: LpStatus,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Maximize `cᵀx` subject to `a x ≤ b`.
pub fn solve_lp(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<LpSolution, SolverError> {
    let n = c.len();
    if a.ncols() != n || a.nrows() != b.len() {
        return Err(SolverError::Dimension(format!(
            "lp: c has {} entries, A is {}x{}, b has {}",
            n,
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    match dual_simplex(c, a, b)? {
        DualOutcome::Optimal(x) => {
            let value = c.dot(&x);
            Ok(LpSolution {
                x: Some(x),
                value,
                status: LpStatus::Optimal,
            })
        }
        DualOutcome::DualUnbounded => Ok(LpSolution {
            x: None,
            value: f64::NAN,
            status: LpStatus::Infeasible,
        }),
        DualOutcome::DualInfeasible => {
            // Primal is unbounded or infeasible; settle it with a zero objective.
            let zero = DVector::zeros(n);
            let status = match dual_simplex(&zero, a, b)? {
                DualOutcome::Optimal(_) => LpStatus::Unbounded,
                _ => LpStatus::Infeasible,
            };
            Ok(LpSolution {
                x: None,
                value: f64::NAN,
                status,
            })
        }
    }
}

/// True when `{x : a x ≤ b}` is nonempty.
pub fn is_feasible(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<bool, SolverError> {
    let zero = DVector::zeros(a.ncols());
    Ok(solve_lp(&zero, a, b)?.status != LpStatus::Infeasible)
}

enum DualOutcome {
    Optimal(DVector<f64>),
    DualInfeasible,
    DualUnbounded,
}

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // row-major, `cols + 1` entries per row, the last one is the right-hand side
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, prow: usize, pcol: usize) {
        let w = self.cols + 1;
        let p = self.data[prow * w + pcol];
        for j in 0..w {
            self.data[prow * w + j] /= p;
        }
        for i in 0..self.rows {
            if i == prow {
                continue;
            }
            let f = self.data[i * w + pcol];
            if f != 0.0 {
                for j in 0..w {
                    let v = self.data[prow * w + j];
                    self.data[i * w + j] -= f * v;
                }
            }
        }
        if self.data[prow * w + self.cols] < 0.0 {
            self.data[prow * w + self.cols] = 0.0;
        }
        self.basis[prow] = pcol;
    }

    /// Primal simplex on the tableau for `min costᵀy`, only letting columns
    /// accepted by `allowed` enter.
    fn run(
        &mut self,
        cost: &[f64],
        allowed: impl Fn(usize) -> bool,
        max_iter: usize,
    ) -> Result<Phase, SolverError> {
        let scale = 1.0 + cost.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rc_tol = 1e-11 * scale;
        let piv_tol = 1e-11;
        let mut degenerate_streak = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate_streak > 2 * self.rows + 10;
            let mut entering = None;
            let mut best = -rc_tol;
            for j in 0..self.cols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..self.rows {
                    r -= cost[self.basis[i]] * self.at(i, j);
                }
                if r < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = r;
                }
            }
            let Some(col) = entering else {
                return Ok(Phase::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let e = self.at(i, col);
                if e > piv_tol {
                    let ratio = self.rhs(i) / e;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, r)) => {
                            if ratio < r - 1e-14
                                || (ratio <= r + 1e-14 && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, r))
                            }
                        }
                    };
                }
            }
            let Some((row, ratio)) = leave else {
                return Ok(Phase::Unbounded);
            };
            if ratio.abs() <= 1e-14 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.pivot(row, col);
        }
        Err(SolverError::IterationLimit("lp simplex"))
    }
}

fn dual_simplex(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DualOutcome, SolverError> {
    let n = c.len();
    let m = a.nrows();
    let cols = m + n;
    let w = cols + 1;
    // Equality rows k: sign_k * (Aᵀ y)_k + t_k = |c_k|.
    let sign: Vec<f64> = c.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut data = vec![0.0; n * w];
    for k in 0..n {
        for j in 0..m {
            data[k * w + j] = sign[k] * a[(j, k)];
        }
        data[k * w + m + k] = 1.0;
        data[k * w + cols] = c[k].abs();
    }
    let mut tab = Tableau {
        rows: n,
        cols,
        data,
        basis: (m..m + n).collect(),
    };
    let max_iter = 1000 + 50 * cols;

    // Phase 1: drive the artificials to zero.
    let mut cost1 = vec![0.0; cols];
    cost1[m..].fill(1.0);
    tab.run(&cost1, |_| true, max_iter)?;
    let infeas: f64 = (0..n)
        .filter(|&i| tab.basis[i] >= m)
        .map(|i| tab.rhs(i))
        .sum();
    let c_scale = 1.0 + c.amax();
    if infeas > 1e-9 * c_scale {
        return Ok(DualOutcome::DualInfeasible);
    }
    for i in 0..n {
        if tab.basis[i] >= m {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..m {
                let v = tab.at(i, j).abs();
                if v > 1e-9 && !tab.basis.contains(&j) && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                tab.pivot(i, j);
            }
        }
    }

    // Phase 2 on the original dual objective.
    let mut cost2 = vec![0.0; cols];
    cost2[..m].copy_from_slice(b.as_slice());
    match tab.run(&cost2, |j| j < m, max_iter)? {
        Phase::Unbounded => Ok(DualOutcome::DualUnbounded),
        Phase::Optimal => {
            let mut x = DVector::zeros(n);
            for k in 0..n {
                let mut pi = 0.0;
                for i in 0..n {
                    pi += cost2[tab.basis[i]] * tab.at(i, m + k);
                }
                x[k] = sign[k] * pi;
            }
            Ok(DualOutcome::Optimal(x))
        }
    }
}
