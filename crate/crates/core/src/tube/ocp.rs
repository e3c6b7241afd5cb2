//! Condensed tube-MPC problem over `z = (x̄₀, ū₀, …, ū_{N−1})`.
//!
//! Nominal states are eliminated with `x̄ᵢ = Φᵢ z + γᵢ`. Only the tube
//! membership rows `x − x̄₀ ∈ Z` depend on the measurement, so the Hessian is
//! factored once per template and reused for every solve.

use nalgebra::{DMatrix, DVector};

use super::{sol, CostWeights, LinearSystem, TubeError, TubeIngredients};
use crate::geometry::Polytope;
use crate::solvers::{QpFactor, QpProblem, QpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Build-time switches of the OCP.
#[derive(Clone, Debug, PartialEq)]
pub struct OcpOptions {
    /// Enforce `x̄_N ∈ X_f`.
    pub terminal_constraint: bool,
    /// KKT tolerance of the QP solve.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OcpOptions {
    fn default() -> Self {
        Self {
            terminal_constraint: true,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OcpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct OcpSolution {
    /// `x̄*₀`.
    pub x0_nominal: DVector<f64>,
    /// `ū*₀ … ū*_{N−1}`.
    pub controls: Vec<DVector<f64>>,
    /// `x̄*₀ … x̄*_N`.
    pub states: Vec<DVector<f64>>,
    /// `Υ*`: ½Σ(x̄ᵀQx̄ + ūᵀRū) + ½x̄_NᵀPx̄_N.
    pub value: f64,
    pub status: OcpStatus,
    pub iterations: usize,
}

impl OcpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == OcpStatus::Optimal
    }
}

/// Parametric QP in the measured state.
#[derive(Clone, Debug)]
pub struct OcpTemplate {
    n: usize,
    m: usize,
    horizon: usize,
    phi: Vec<DMatrix<f64>>,
    gamma: Vec<DVector<f64>>,
    const_cost: f64,
    factor: QpFactor,
    z_rows: std::ops::Range<usize>,
    z_normals: DMatrix<f64>,
    z_offsets: DVector<f64>,
    tol: f64,
    max_iter: usize,
}

impl OcpTemplate {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// QP tolerance chosen at build time.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Number of decision variables, `n + N m`.
    pub fn decision_dim(&self) -> usize {
        self.n + self.horizon * self.m
    }

    pub fn num_constraints(&self) -> usize {
        self.factor.problem().b_in.len()
    }

    /// Nominal state `x̄ᵢ` for a decision vector.
    pub fn nominal_state(&self, z: &DVector<f64>, i: usize) -> DVector<f64> {
        &self.phi[i] * z + &self.gamma[i]
    }

    pub fn problem(&self) -> &QpProblem {
        self.factor.problem()
    }

    fn rhs(&self, x_meas: &DVector<f64>) -> DVector<f64> {
        let mut b = self.factor.problem().b_in.clone();
        let shift = &self.z_offsets - &self.z_normals * x_meas;
        b.rows_mut(self.z_rows.start, self.z_rows.len()).copy_from(&shift);
        b
    }
}

/// Condense the tube OCP for `sys` with horizon `horizon`.
pub fn build_ocp(
    sys: &LinearSystem,
    ing: &TubeIngredients,
    weights: &CostWeights,
    horizon: usize,
    opts: &OcpOptions,
) -> Result<OcpTemplate, TubeError> {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if horizon == 0 {
        return Err(TubeError::Dimension("horizon must be at least 1".into()));
    }
    if ing.p.shape() != (n, n) || ing.k.shape() != (m, n) || ing.z.dim() != n {
        return Err(TubeError::Dimension("ingredients do not match the system".into()));
    }
    let nz = n + horizon * m;

    let mut phi = Vec::with_capacity(horizon + 1);
    let mut gamma = Vec::with_capacity(horizon + 1);
    let mut cur = DMatrix::zeros(n, nz);
    cur.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut g0 = DVector::zeros(n);
    phi.push(cur.clone());
    gamma.push(g0.clone());
    for i in 0..horizon {
        let mut next = &sys.a * &cur;
        let mut view = next.view_mut((0, n + i * m), (n, m));
        view += &sys.b;
        g0 = &sys.a * &g0 + &sys.offset;
        cur = next;
        phi.push(cur.clone());
        gamma.push(g0.clone());
    }

    let mut h = DMatrix::zeros(nz, nz);
    let mut g = DVector::zeros(nz);
    let mut const_cost = 0.0;
    for i in 0..=horizon {
        let w = if i < horizon { &weights.q } else { &ing.p };
        let pw = phi[i].transpose() * w;
        h += &pw * &phi[i];
        g += &pw * &gamma[i];
        const_cost += 0.5 * gamma[i].dot(&(w * &gamma[i]));
    }
    for i in 0..horizon {
        let mut block = h.view_mut((n + i * m, n + i * m), (m, m));
        block += &weights.r;
    }
    let h = (&h + h.transpose()) * 0.5;

    let mut rows: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    let xt = &ing.x_tight;
    for i in 0..horizon {
        rows.push((xt.normals() * &phi[i], xt.offsets() - xt.normals() * &gamma[i]));
    }
    let ut = &ing.u_tight;
    for i in 0..horizon {
        let mut a = DMatrix::zeros(ut.num_constraints(), nz);
        a.view_mut((0, n + i * m), (ut.num_constraints(), m)).copy_from(ut.normals());
        rows.push((a, ut.offsets().clone()));
    }
    if opts.terminal_constraint {
        let xf = &ing.x_f;
        rows.push((
            xf.normals() * &phi[horizon],
            xf.offsets() - xf.normals() * &gamma[horizon],
        ));
    }
    let z_start: usize = rows.iter().map(|(a, _)| a.nrows()).sum();
    let z = &ing.z;
    let mut az = DMatrix::zeros(z.num_constraints(), nz);
    az.view_mut((0, 0), (z.num_constraints(), n)).copy_from(&(-z.normals()));
    rows.push((az, z.offsets().clone()));

    let total: usize = rows.iter().map(|(a, _)| a.nrows()).sum();
    let mut a_in = DMatrix::zeros(total, nz);
    let mut b_in = DVector::zeros(total);
    let mut r0 = 0;
    for (a, b) in &rows {
        a_in.rows_mut(r0, a.nrows()).copy_from(a);
        b_in.rows_mut(r0, b.len()).copy_from(b);
        r0 += a.nrows();
    }
    let problem = QpProblem::inequality(h, g, a_in, b_in);
    let factor = QpFactor::new(problem).map_err(sol("ocp"))?;
    Ok(OcpTemplate {
        n,
        m,
        horizon,
        phi,
        gamma,
        const_cost,
        factor,
        z_rows: z_start..total,
        z_normals: z.normals().clone(),
        z_offsets: z.offsets().clone(),
        tol: opts.tol,
        max_iter: opts.max_iter,
    })
}

/// Solve the OCP at a measured state. Infeasibility is reported in the status.
pub fn solve_ocp(t: &OcpTemplate, x_meas: &DVector<f64>, tol: f64) -> OcpSolution {
    assert_eq!(x_meas.len(), t.n, "measured state has the wrong dimension");
    let qp = t.factor.solve_with_rhs(&t.rhs(x_meas), tol, t.max_iter);
    let status = match qp.status {
        QpStatus::Optimal => OcpStatus::Optimal,
        QpStatus::Infeasible => OcpStatus::Infeasible,
        QpStatus::MaxIter => OcpStatus::MaxIter,
    };
    let z = qp.z;
    let controls = (0..t.horizon)
        .map(|i| z.rows(t.n + i * t.m, t.m).into_owned())
        .collect();
    let states = (0..=t.horizon).map(|i| t.nominal_state(&z, i)).collect();
    OcpSolution {
        x0_nominal: z.rows(0, t.n).into_owned(),
        controls,
        states,
        value: qp.objective + t.const_cost,
        status,
        iterations: qp.iterations,
    }
}

/// Tube feedback law `ū*₀ + K(x − x̄*₀)`.
pub fn control_from_solution(
    sol: &OcpSolution,
    x_meas: &DVector<f64>,
    k: &DMatrix<f64>,
) -> DVector<f64> {
    &sol.controls[0] + k * (x_meas - &sol.x0_nominal)
}

/// Feasibility of the OCP at each grid point.
pub fn sample_feasible_region(t: &OcpTemplate, grid: &[DVector<f64>]) -> Vec<bool> {
    grid.iter()
        .map(|x| solve_ocp(t, x, t.tol).is_optimal())
        .collect()
}

/// Saturated fallback: the largest `s ∈ [0, 1]` with `s·Kx ∈ U`, applied as `s·Kx`.
pub fn saturated_feedback(k: &DMatrix<f64>, x: &DVector<f64>, u_set: &Polytope) -> DVector<f64> {
    let u = k * x;
    let cu = u_set.normals() * &u;
    let mut s: f64 = 1.0;
    for i in 0..cu.len() {
        if cu[i] > u_set.offsets()[i] {
            s = s.min((u_set.offsets()[i] / cu[i]).max(0.0));
        }
    }
    u * s
}
