//! Outer ε-approximation of the minimal robust positively invariant set of
//! `x⁺ = A_K x + w`, `w ∈ W`, by a scaled truncated Minkowski power sum.
//!
//! For the smallest `s` with `A_Kˢ W ⊆ α W` and `α ≤ ε / (ε + M(s))` the set
//! `Z = (1 − α)⁻¹ ⊕_{i<s} A_Kⁱ W` is robustly invariant and lies within an
//! ε-ball (∞-norm) of the true minimal set.

use nalgebra::{DMatrix, DVector};

use super::hull::convex_hull;
use super::zonotope::Zonotope;
use super::{GeometryError, Polytope, MAX_DIM, TOL};
use crate::solvers::spectral_radius;

/// Iteration data of [`mrpi_approx_detailed`].
#[derive(Clone, Debug, PartialEq)]
pub struct MrpiInfo {
    /// Number of Minkowski terms.
    pub terms: usize,
    /// Contraction factor with `A_Kˢ W ⊆ α W`.
    pub alpha: f64,
    /// `M(s)`: ∞-norm radius bound of the unscaled power sum.
    pub radius: f64,
}

const MAX_TERMS: usize = 100_000;

pub fn mrpi_approx(a_k: &DMatrix<f64>, w: &Polytope, eps: f64) -> Result<Polytope, GeometryError> {
    Ok(mrpi_approx_detailed(a_k, w, eps)?.0)
}

pub fn mrpi_approx_detailed(
    a_k: &DMatrix<f64>,
    w: &Polytope,
    eps: f64,
) -> Result<(Polytope, MrpiInfo), GeometryError> {
    let n = w.dim();
    if !a_k.is_square() || a_k.nrows() != n {
        return Err(GeometryError::Dimension {
            expected: n,
            found: a_k.nrows(),
        });
    }
    if n > MAX_DIM {
        return Err(GeometryError::DimensionTooLarge(n));
    }
    if !(eps > 0.0) {
        return Err(GeometryError::InvalidEpsilon(eps));
    }
    let rho = spectral_radius(a_k);
    if rho >= 1.0 {
        return Err(GeometryError::NotContractive(rho));
    }
    let w_verts = w.vertices()?;
    let zero = DVector::zeros(n);
    if !w.contains(&zero, TOL) {
        return Err(GeometryError::OriginNotInterior);
    }
    let w_scale = w_verts.iter().map(|v| v.amax()).fold(0.0, f64::max);
    if w_scale <= TOL {
        return Ok((
            Polytope::origin(n),
            MrpiInfo {
                terms: 0,
                alpha: 0.0,
                radius: 0.0,
            },
        ));
    }
    let w = w.remove_redundant()?;
    let g = w.offsets();
    if g.min() <= TOL * (1.0 + w_scale) {
        return Err(GeometryError::OriginNotInterior);
    }
    let f = w.normals();
    let h_w = |d: &DVector<f64>| w_verts.iter().map(|v| d.dot(v)).fold(f64::NEG_INFINITY, f64::max);

    // running sums of h_W(±(Aⁱ)ᵀ e_j) for the radius bound
    let mut sum_pos = DVector::<f64>::zeros(n);
    let mut sum_neg = DVector::<f64>::zeros(n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut powers = Vec::new();
    let mut terms = 0;
    let mut alpha;
    let mut radius;
    loop {
        // add the i = terms contribution, then test with s = terms + 1
        for j in 0..n {
            let row = power.row(j).transpose();
            sum_pos[j] += h_w(&row);
            sum_neg[j] += h_w(&(-row));
        }
        powers.push(power.clone());
        terms += 1;
        power = a_k * &power;
        radius = sum_pos.max().max(sum_neg.max());
        alpha = 0.0f64;
        for i in 0..f.nrows() {
            let dir = power.transpose() * f.row(i).transpose();
            alpha = alpha.max(h_w(&dir) / g[i]);
        }
        if alpha <= eps / (eps + radius) {
            break;
        }
        if terms >= MAX_TERMS {
            return Err(GeometryError::NoConvergence(terms));
        }
    }

    let info = MrpiInfo {
        terms,
        alpha,
        radius,
    };
    let inflate = 1.0 / (1.0 - alpha);
    if let Some(wz) = Zonotope::from_parallelotope(&w) {
        let mut acc = wz.clone();
        for p in powers.iter().skip(1) {
            acc = acc.sum(&wz.linear_image(p));
        }
        return Ok((acc.scale(inflate).to_polytope()?, info));
    }

    let mut acc: Vec<DVector<f64>> = w_verts.clone();
    for p in powers.iter().skip(1) {
        let img: Vec<DVector<f64>> = w_verts.iter().map(|v| p * v).collect();
        if img.iter().all(|v| v.amax() <= 1e-14 * w_scale) {
            continue;
        }
        let mut pts = Vec::with_capacity(acc.len() * img.len());
        for a in &acc {
            for b in &img {
                pts.push(a + b);
            }
        }
        acc = convex_hull(&pts)?.vertices;
    }
    let pts: Vec<DVector<f64>> = acc.into_iter().map(|v| v * inflate).collect();
    Ok((Polytope::from_points(&pts)?, info))
}
