use nalgebra::{DMatrix, DVector};

use super::{geo, sol, CostWeights, LinearSystem, TubeError, TubeIngredients};
use crate::geometry::{mrpi_approx_detailed, GeometryError, Polytope, TOL};
use crate::solvers::{eig_min_sym, solve_dare, solve_stein, spectral_radius};

/// Residual tolerance for the LMI eigenvalue test.
const LMI_TOL: f64 = 1e-9;
/// Absolute accuracy of the attack-offset bisection.
const OFFSET_TOL: f64 = 1e-8;

/// `(X ⊖ Z, U ⊖ KZ)`.
pub fn tighten_constraints(
    sys: &LinearSystem,
    k: &DMatrix<f64>,
    z: &Polytope,
) -> Result<(Polytope, Polytope), TubeError> {
    if k.shape() != (sys.input_dim(), sys.state_dim()) {
        return Err(TubeError::Dimension(format!(
            "gain is {:?}, expected {:?}",
            k.shape(),
            (sys.input_dim(), sys.state_dim())
        )));
    }
    let x_tight = tighten_states(sys, z)?;
    // U ⊖ KZ row by row: h_KZ(c) = h_Z(Kᵀc), which avoids projecting Z
    let (c, d) = (sys.u_set.normals(), sys.u_set.offsets());
    let mut shrunk = d.clone();
    for i in 0..c.nrows() {
        let dir = k.transpose() * c.row(i).transpose();
        shrunk[i] -= z.support(&dir).map_err(geo("input tightening"))?;
    }
    let u_tight = Polytope::new(c.clone(), shrunk).map_err(geo("input tightening"))?;
    if u_tight.is_empty().map_err(geo("input tightening"))? {
        return Err(TubeError::InputInfeasible("U_tight is empty".into()));
    }
    Ok((x_tight, u_tight.remove_redundant().map_err(geo("input tightening"))?))
}

fn tighten_states(sys: &LinearSystem, z: &Polytope) -> Result<Polytope, TubeError> {
    let x_tight = sys.x_set.pontryagin_diff(z).map_err(geo("state tightening"))?;
    if x_tight.is_empty().map_err(geo("state tightening"))? {
        return Err(TubeError::EmptySet("X_tight"));
    }
    x_tight.remove_redundant().map_err(geo("state tightening"))
}

/// Smallest eigenvalue of the terminal-cost LMI assembled at disturbance `w`.
///
/// Block layout (sizes `n, 1, n, n, m`), with `S = P⁻¹`:
///
/// ```text
/// [ S    0   (A S + B K S)ᵀ   S     (K S)ᵀ ]
/// [ 0    α   wᵀ               0     0      ]
/// [ *    *   S                0     0      ]
/// [ *    *   *                Q⁻¹   0      ]
/// [ *    *   *                *     R⁻¹    ]
/// ```
pub fn lmi_residual(
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
    alpha_term: f64,
    sys: &LinearSystem,
    weights: &CostWeights,
    w: &DVector<f64>,
) -> Result<f64, TubeError> {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if p.shape() != (n, n) || k.shape() != (m, n) || w.len() != n {
        return Err(TubeError::Dimension("LMI operands".into()));
    }
    let s = p
        .clone()
        .try_inverse()
        .ok_or(TubeError::Solver {
            stage: "LMI",
            source: crate::solvers::SolverError::Singular("P"),
        })?;
    let q_inv = weights.q.clone().try_inverse().ok_or(TubeError::Weights(
        "Q must be invertible for the terminal LMI".into(),
    ))?;
    let r_inv = weights
        .r
        .clone()
        .try_inverse()
        .ok_or(TubeError::Weights("R is singular".into()))?;
    let size = 3 * n + 1 + m;
    let (b1, b2, b3, b4, b5) = (0, n, n + 1, 2 * n + 1, 3 * n + 1);
    let mut lmi = DMatrix::zeros(size, size);
    let ks = k * &s;
    let cross = (&sys.a * &s + &sys.b * &ks).transpose();
    lmi.view_mut((b1, b1), (n, n)).copy_from(&s);
    lmi[(b2, b2)] = alpha_term;
    lmi.view_mut((b3, b3), (n, n)).copy_from(&s);
    lmi.view_mut((b4, b4), (n, n)).copy_from(&q_inv);
    lmi.view_mut((b5, b5), (m, m)).copy_from(&r_inv);
    lmi.view_mut((b1, b3), (n, n)).copy_from(&cross);
    lmi.view_mut((b1, b4), (n, n)).copy_from(&s);
    lmi.view_mut((b1, b5), (n, m)).copy_from(&ks.transpose());
    lmi.view_mut((b2, b3), (1, n)).copy_from(&w.transpose());
    for i in 0..size {
        for j in 0..i {
            lmi[(i, j)] = lmi[(j, i)];
        }
    }
    // P⁻¹ is symmetric only up to rounding
    let lmi = (&lmi + lmi.transpose()) * 0.5;
    eig_min_sym(&lmi).map_err(sol("LMI"))
}

/// Vertices of `W ⊕ B·{a : ‖a‖_∞ ≤ a_norm}`: the worst-case one-step
/// perturbations of the terminal controller.
pub fn offset_vertices(
    sys: &LinearSystem,
    w_set: &Polytope,
    a_norm: f64,
) -> Result<Vec<DVector<f64>>, TubeError> {
    let wv = w_set.vertices().map_err(geo("attack offset"))?;
    if a_norm <= 0.0 {
        return Ok(wv);
    }
    let m = sys.input_dim();
    let mut out = Vec::with_capacity(wv.len() << m);
    for w in &wv {
        for corner in 0..1usize << m {
            let a = DVector::from_fn(m, |i, _| if corner >> i & 1 == 1 { a_norm } else { -a_norm });
            out.push(w + &sys.b * a);
        }
    }
    Ok(out)
}

/// Smallest `α‖𝒜‖ ≥ 0` (bisection) such that the LMI residual is at least
/// `−1e-9` at every perturbation vertex.
pub fn minimize_attack_offset(
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
    sys: &LinearSystem,
    weights: &CostWeights,
    w_set: &Polytope,
    a_norm: f64,
) -> Result<f64, TubeError> {
    let verts = offset_vertices(sys, w_set, a_norm)?;
    let violated = |alpha: f64| -> Result<Option<usize>, TubeError> {
        for (i, v) in verts.iter().enumerate() {
            if lmi_residual(k, p, alpha, sys, weights, v)? < -LMI_TOL {
                return Ok(Some(i));
            }
        }
        Ok(None)
    };
    if violated(0.0)?.is_none() {
        return Ok(0.0);
    }
    // beyond this the eigenvalue test only passes through its tolerance band
    let cap = 1e6 * (1.0 + verts.iter().map(|e| e.dot(&(p * e)) + e.norm_squared()).fold(0.0, f64::max));
    let mut hi = 1.0;
    loop {
        match violated(hi)? {
            None => break,
            Some(i) if hi > cap => {
                return Err(TubeError::OffsetInfeasible {
                    vertex: verts[i].iter().copied().collect(),
                })
            }
            Some(_) => hi *= 4.0,
        }
    }
    let mut lo = 0.0;
    while hi - lo > OFFSET_TOL {
        let mid = 0.5 * (lo + hi);
        if violated(mid)?.is_none() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // A genuine solution is strictly feasible once the offset is doubled; a
    // singular Schur block only ever creeps up to zero from below.
    for v in &verts {
        if lmi_residual(k, p, 2.0 * hi + OFFSET_TOL, sys, weights, v)? <= 0.0 {
            return Err(TubeError::OffsetInfeasible {
                vertex: v.iter().copied().collect(),
            });
        }
    }
    Ok(hi)
}

/// Closed form of the LMI bound for `P = (1 + δ) P₀`:
/// `max_e (1+δ) eᵀPe + (1+δ)²/δ · eᵀPA_K M⁻¹A_KᵀPe` with `M = Q + KᵀRK`.
struct OffsetModel {
    quad: Vec<f64>,
    cross: Vec<f64>,
}

impl OffsetModel {
    fn new(
        p: &DMatrix<f64>,
        a_k: &DMatrix<f64>,
        m: &DMatrix<f64>,
        verts: &[DVector<f64>],
    ) -> Result<Self, TubeError> {
        let chol = m
            .clone()
            .cholesky()
            .ok_or(TubeError::Weights("Q + KᵀRK must be positive definite".into()))?;
        let mut quad = Vec::new();
        let mut cross = Vec::new();
        for e in verts {
            let pe = p * e;
            quad.push(e.dot(&pe));
            let t = a_k.transpose() * &pe;
            cross.push(t.dot(&chol.solve(&t)));
        }
        Ok(Self { quad, cross })
    }

    fn value(&self, delta: f64) -> f64 {
        self.quad
            .iter()
            .zip(&self.cross)
            .map(|(q, c)| (1.0 + delta) * q + (1.0 + delta).powi(2) / delta * c)
            .fold(0.0, f64::max)
    }

    /// Golden-section search of the convex map `δ ↦ value(δ)` over `ln δ`.
    fn best_delta(&self) -> f64 {
        let (mut a, mut b) = (1e-4f64.ln(), 10f64.ln());
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let f = |t: f64| self.value(t.exp());
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..80 {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = f(d);
            }
        }
        (0.5 * (a + b)).exp()
    }
}

/// Maximal positively invariant subset of `s0` under `x⁺ = A_K x`.
///
/// Returns the set and the number `ξ` of refinement steps taken.
pub fn max_positively_invariant_set(
    a_k: &DMatrix<f64>,
    s0: &Polytope,
    max_iter: usize,
) -> Result<(Polytope, usize), TubeError> {
    let stage = "terminal set";
    let rho = spectral_radius(a_k);
    if rho >= 1.0 {
        return Err(TubeError::Geometry {
            stage,
            source: GeometryError::NotContractive(rho),
        });
    }
    let base = s0.remove_redundant().map_err(geo(stage))?;
    if base.is_empty().map_err(geo(stage))? {
        return Err(TubeError::EmptySet("S0"));
    }
    let mut set = base.clone();
    let mut power = a_k.clone();
    for step in 0..=max_iter {
        let mut violated = Vec::new();
        for j in 0..base.num_constraints() {
            let dir = power.transpose() * base.normals().row(j).transpose();
            let h = set.support(&dir).map_err(geo(stage))?;
            if h > base.offsets()[j] + TOL {
                violated.push(j);
            }
        }
        if violated.is_empty() {
            return Ok((set, step));
        }
        let rows = base.normals().select_rows(&violated) * &power;
        let cut = Polytope::new(rows, base.offsets().select_rows(&violated)).map_err(geo(stage))?;
        set = set
            .intersect(&cut)
            .map_err(geo(stage))?
            .remove_redundant()
            .map_err(geo(stage))?;
        power = a_k * power;
    }
    Err(TubeError::NoFixedPoint(max_iter))
}

/// Tunables of [`synthesize_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisOptions {
    /// Accuracy of the invariant tube cross-section.
    pub mrpi_eps: f64,
    /// Iteration cap for the terminal-set fixed point.
    pub pi_max_iter: usize,
    /// Fixed terminal scaling `δ`; searched when `None`.
    pub terminal_scale: Option<f64>,
    /// Weights of the ancillary gain when it should differ from the cost's
    /// Riccati gain. The terminal cost then solves the Lyapunov equation of
    /// that gain instead of the Riccati equation.
    pub gain_weights: Option<CostWeights>,
    /// Compute the maximal invariant terminal set. When off, `x_f` is the
    /// admissible set `{x ∈ X ⊖ Z : Kx ∈ U ⊖ KZ}`, which is only meaningful
    /// for problems without a terminal constraint.
    pub invariant_terminal_set: bool,
    /// Tighten `U` by `KZ`. When off, `U_tight = U` and the caller must
    /// saturate the applied input instead.
    pub tighten_inputs: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            mrpi_eps: 1e-3,
            pi_max_iter: 500,
            terminal_scale: None,
            gain_weights: None,
            invariant_terminal_set: true,
            tighten_inputs: true,
        }
    }
}

/// Terminal ingredients with default options and the given mRPI accuracy.
pub fn synthesize(
    sys: &LinearSystem,
    weights: &CostWeights,
    a_norm: f64,
    eps: f64,
) -> Result<TubeIngredients, TubeError> {
    synthesize_with(
        sys,
        weights,
        a_norm,
        &SynthesisOptions {
            mrpi_eps: eps,
            ..SynthesisOptions::default()
        },
    )
}

/// Ancillary gain, tube, tightened sets, terminal set and attack offset.
///
/// The base cost `P₀` (Riccati solution, or the Lyapunov solution of a
/// prescribed gain) satisfies the terminal LMI only at `w = 0`, so the
/// terminal cost is inflated to `(1 + δ) P₀`, which leaves a decrease margin
/// `δ(Q + KᵀRK)` that absorbs nonzero perturbations.
pub fn synthesize_with(
    sys: &LinearSystem,
    weights: &CostWeights,
    a_norm: f64,
    opts: &SynthesisOptions,
) -> Result<TubeIngredients, TubeError> {
    sys.validate()?;
    weights.validate()?;
    if weights.q.shape() != (sys.state_dim(), sys.state_dim())
        || weights.r.shape() != (sys.input_dim(), sys.input_dim())
    {
        return Err(TubeError::Dimension("cost weights".into()));
    }
    let (k, p_base) = match &opts.gain_weights {
        None => {
            let dare = solve_dare(&sys.a, &sys.b, &weights.q, &weights.r).map_err(sol("riccati"))?;
            (dare.k, dare.p)
        }
        Some(g) => {
            g.validate()?;
            let k = solve_dare(&sys.a, &sys.b, &g.q, &g.r).map_err(sol("riccati"))?.k;
            let m = &weights.q + k.transpose() * &weights.r * &k;
            let p = solve_stein(&sys.closed_loop(&k), &m).map_err(sol("lyapunov"))?;
            (k, p)
        }
    };
    let a_k = sys.closed_loop(&k);
    let (z, mrpi) = mrpi_approx_detailed(&a_k, &sys.w_set, opts.mrpi_eps).map_err(geo("tube"))?;
    let (x_tight, u_tight) = if opts.tighten_inputs {
        tighten_constraints(sys, &k, &z)?
    } else {
        (tighten_states(sys, &z)?, sys.u_set.clone())
    };
    let s0 = x_tight
        .intersect(&u_tight.preimage(&k).map_err(geo("terminal set"))?)
        .map_err(geo("terminal set"))?;
    let (x_f, terminal_steps) = if opts.invariant_terminal_set {
        max_positively_invariant_set(&a_k, &s0, opts.pi_max_iter)?
    } else {
        (s0.remove_redundant().map_err(geo("terminal set"))?, 0)
    };

    let verts = offset_vertices(sys, &sys.w_set, a_norm)?;
    let trivial = verts.iter().all(|v| v.amax() == 0.0);
    let delta = match opts.terminal_scale {
        Some(d) => d,
        None if trivial => 0.0,
        None => {
            let m = &weights.q + k.transpose() * &weights.r * &k;
            OffsetModel::new(&p_base, &a_k, &m, &verts)?.best_delta()
        }
    };
    let p = &p_base * (1.0 + delta);
    let attack_offset = minimize_attack_offset(&k, &p, sys, weights, &sys.w_set, a_norm)?;
    Ok(TubeIngredients {
        k,
        p,
        z,
        x_tight,
        u_tight,
        x_f,
        terminal_steps,
        attack_offset,
        terminal_scale: delta,
        mrpi,
    })
}
