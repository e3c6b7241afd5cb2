use nalgebra::DMatrix;

use super::{spectral_radius, SolverError};

/// Stabilizing solution of `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA` and the
/// associated gain `K = −(R + BᵀPB)⁻¹BᵀPA` (control law `u = Kx`).
#[derive(Clone, Debug)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub residual: f64,
}

const MAX_DOUBLING: usize = 100;
const MAX_POLISH: usize = 200;

/// Solve the DARE by structure-preserving doubling, then polish with plain
/// Riccati fixed-point steps until the residual stops improving.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution, SolverError> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square()
        || b.nrows() != n
        || q.shape() != (n, n)
        || r.shape() != (m, m)
    {
        return Err(SolverError::Dimension(format!(
            "dare: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or(SolverError::Singular("R"))?;
    let eye = DMatrix::<f64>::identity(n, n);

    let mut ak = a.clone();
    let mut gk = b * &r_inv * b.transpose();
    let mut hk = q.clone();
    for _ in 0..MAX_DOUBLING {
        let w = (&eye + &gk * &hk)
            .try_inverse()
            .ok_or_else(|| SolverError::NotStabilizable("singular doubling step".into()))?;
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let change = (&h_next - &hk).amax();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if !hk.iter().all(|v| v.is_finite()) || hk.amax() > 1e14 {
            return Err(SolverError::NotStabilizable("Riccati iterate diverged".into()));
        }
        if change <= 1e-14 * (1.0 + hk.amax()) {
            break;
        }
    }
    let mut p = (&hk + hk.transpose()) * 0.5;

    let mut best = riccati_residual(a, b, q, r, &p)?;
    for _ in 0..MAX_POLISH {
        let next = riccati_step(a, b, q, r, &p)?;
        let res = riccati_residual(a, b, q, r, &next)?;
        if res >= best {
            break;
        }
        p = next;
        best = res;
    }

    let k = gain(a, b, r, &p)?;
    let rho = spectral_radius(&(a + b * &k));
    if rho >= 1.0 || !best.is_finite() {
        return Err(SolverError::NotStabilizable(format!(
            "closed-loop spectral radius {rho:.6}"
        )));
    }
    Ok(DareSolution {
        p,
        k,
        residual: best,
    })
}

fn gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SolverError> {
    let s = r + b.transpose() * p * b;
    let s_inv = s.try_inverse().ok_or(SolverError::Singular("R + BᵀPB"))?;
    Ok(-(s_inv * b.transpose() * p * a))
}

fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SolverError> {
    let k = gain(a, b, r, p)?;
    let next = q + a.transpose() * p * a + a.transpose() * p * b * &k;
    Ok((&next + next.transpose()) * 0.5)
}

/// Max-abs entry of `Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA − P`.
pub(crate) fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64, SolverError> {
    Ok((riccati_step(a, b, q, r, p)? - p).amax())
}

/// Solution of the Stein equation `P = AᵀPA + M` for a Schur-stable `A`,
/// summed by doubling: `P = Σ (Aᵀ)ⁱ M Aⁱ`.
pub fn solve_stein(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>, SolverError> {
    let n = a.nrows();
    if !a.is_square() || m.shape() != (n, n) {
        return Err(SolverError::Dimension(format!("stein: A {:?}, M {:?}", a.shape(), m.shape())));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(SolverError::NotStabilizable(format!("closed loop has spectral radius {rho}")));
    }
    let mut p = m.clone();
    let mut t = a.clone();
    for _ in 0..MAX_DOUBLING {
        let add = t.transpose() * &p * &t;
        p += &add;
        t = &t * &t;
        if add.amax() <= 1e-16 * p.amax() {
            return Ok((&p + p.transpose()) * 0.5);
        }
    }
    Err(SolverError::IterationLimit("stein"))
}
