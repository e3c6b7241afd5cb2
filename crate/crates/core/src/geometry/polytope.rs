use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hull::{convex_hull, dedup_points, Hull};
use super::{GeometryError, MAX_DIM, TOL};
use crate::solvers::{solve_lp, LpStatus};

/// Convex set `{x : Cx ≤ d}` with unit-norm rows.
///
/// Rows are normalized on construction, so offsets are Euclidean distances
/// and support values along rows are directly comparable.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

impl Polytope {
    /// Build from a half-space description. Rows must be nonzero and finite.
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self, GeometryError> {
        if normals.nrows() != offsets.len() {
            return Err(GeometryError::Dimension {
                expected: normals.nrows(),
                found: offsets.len(),
            });
        }
        if normals.iter().chain(offsets.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut c = normals;
        let mut d = offsets;
        for i in 0..c.nrows() {
            let n = c.row(i).norm();
            if n == 0.0 {
                return Err(GeometryError::ZeroRow(i));
            }
            c.row_mut(i).unscale_mut(n);
            d[i] /= n;
        }
        Ok(Self {
            normals: c,
            offsets: d,
        })
    }

    /// Like [`Polytope::new`] but zero rows are dropped when trivially true and
    /// turn the set empty when violated.
    pub(crate) fn from_rows_lenient(c: DMatrix<f64>, d: DVector<f64>) -> Result<Self, GeometryError> {
        let dim = c.ncols();
        let scale = 1.0 + d.amax();
        let mut keep = Vec::new();
        for i in 0..c.nrows() {
            let n = c.row(i).norm();
            if n <= 1e-12 * scale {
                if d[i] < -TOL {
                    return Ok(Self::empty(dim));
                }
            } else {
                keep.push(i);
            }
        }
        let c2 = c.select_rows(&keep);
        let d2 = d.select_rows(&keep);
        Self::new(c2, d2)
    }

    /// Axis-aligned box `lower ≤ x ≤ upper`.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::Dimension {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(GeometryError::InvalidBounds(i));
        }
        let n = lower.len();
        let mut c = DMatrix::zeros(2 * n, n);
        let mut d = DVector::zeros(2 * n);
        for i in 0..n {
            c[(i, i)] = 1.0;
            d[i] = upper[i];
            c[(n + i, i)] = -1.0;
            d[n + i] = -lower[i];
        }
        Self::new(c, d)
    }

    /// Box symmetric about the origin, `|x_i| ≤ half_width_i`.
    pub fn symmetric_box(half_width: &[f64]) -> Result<Self, GeometryError> {
        let lower: Vec<f64> = half_width.iter().map(|v| -v).collect();
        Self::from_box(&lower, half_width)
    }

    /// The single point `p`.
    pub fn singleton(p: &[f64]) -> Self {
        Self::from_box(p, p).expect("degenerate box is valid")
    }

    /// The set `{0} ⊂ R^dim`.
    pub fn origin(dim: usize) -> Self {
        Self::singleton(&vec![0.0; dim])
    }

    /// A canonical empty set in `R^dim` (`dim ≥ 1`).
    pub fn empty(dim: usize) -> Self {
        let mut c = DMatrix::zeros(2, dim);
        c[(0, 0)] = 1.0;
        c[(1, 0)] = -1.0;
        Self {
            normals: c,
            offsets: DVector::from_element(2, -1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.normals.nrows()
    }

    /// Row-normal matrix `C`.
    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    /// Offset vector `d`.
    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    /// `Cx ≤ d + tol` entrywise. A dimension mismatch is never contained.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        (&self.normals * x - &self.offsets).iter().all(|v| *v <= tol)
    }

    /// Largest constraint violation `max_i (Cx − d)_i` (negative inside).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        (&self.normals * x - &self.offsets).max()
    }

    pub fn is_empty(&self) -> Result<bool, GeometryError> {
        let zero = DVector::zeros(self.dim());
        Ok(solve_lp(&zero, &self.normals, &self.offsets)?.status == LpStatus::Infeasible)
    }

    /// `max_{x∈P} dirᵀx`.
    pub fn support(&self, dir: &DVector<f64>) -> Result<f64, GeometryError> {
        Ok(self.support_point(dir)?.1)
    }

    /// Maximizer and value of `dirᵀx` over the set.
    pub fn support_point(&self, dir: &DVector<f64>) -> Result<(DVector<f64>, f64), GeometryError> {
        self.check_dim(dir.len())?;
        let sol = solve_lp(dir, &self.normals, &self.offsets)?;
        match sol.status {
            LpStatus::Optimal => Ok((sol.x.expect("optimal LP has a point"), sol.value)),
            LpStatus::Infeasible => Err(GeometryError::Empty),
            LpStatus::Unbounded => Err(GeometryError::Unbounded),
        }
    }

    /// Coordinate-wise bounds `(lower, upper)` of the set.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            hi[i] = self.support(&e)?;
            lo[i] = -self.support(&(-e))?;
        }
        Ok((lo, hi))
    }

    /// `max_{x∈P} ‖x‖_∞`.
    pub fn inf_norm_radius(&self) -> Result<f64, GeometryError> {
        let (lo, hi) = self.bounding_box()?;
        Ok(lo.amax().max(hi.amax()))
    }

    /// Center and radius of the largest inscribed ball.
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64), GeometryError> {
        let n = self.dim();
        let m = self.num_constraints();
        // variables (x, r); rows: C x + r ≤ d, −r ≤ 0
        let mut a = DMatrix::zeros(m + 1, n + 1);
        let mut b = DVector::zeros(m + 1);
        for i in 0..m {
            for j in 0..n {
                a[(i, j)] = self.normals[(i, j)];
            }
            a[(i, n)] = 1.0;
            b[i] = self.offsets[i];
        }
        a[(m, n)] = -1.0;
        let mut c = DVector::zeros(n + 1);
        c[n] = 1.0;
        let sol = solve_lp(&c, &a, &b)?;
        match sol.status {
            LpStatus::Optimal => {
                let z = sol.x.expect("optimal LP has a point");
                Ok((z.rows(0, n).into_owned(), z[n]))
            }
            LpStatus::Infeasible => Err(GeometryError::Empty),
            LpStatus::Unbounded => Err(GeometryError::Unbounded),
        }
    }

    /// Vertex set with near-duplicates merged.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>, GeometryError> {
        let n = self.dim();
        if n > MAX_DIM {
            return Err(GeometryError::DimensionTooLarge(n));
        }
        if n == 0 {
            return Err(GeometryError::Degenerate("zero-dimensional set".into()));
        }
        let (lo, hi) = self.bounding_box()?;
        let scale = 1.0 + lo.amax().max(hi.amax());
        let (center, radius) = self.chebyshev_center()?;
        if radius > 1e-7 * scale {
            self.vertices_polar(&center, scale)
        } else {
            self.vertices_brute(scale)
        }
    }

    /// Vertices of a full-dimensional set from the facets of its polar.
    fn vertices_polar(&self, center: &DVector<f64>, scale: f64) -> Result<Vec<DVector<f64>>, GeometryError> {
        let slack = &self.offsets - &self.normals * center;
        let dual: Vec<DVector<f64>> = (0..self.num_constraints())
            .map(|i| self.normals.row(i).transpose() / slack[i])
            .collect();
        let hull = convex_hull(&dual)?;
        let mut out = Vec::with_capacity(hull.offsets.len());
        for f in 0..hull.offsets.len() {
            let o = hull.offsets[f];
            if o <= 1e-12 {
                return Err(GeometryError::Unbounded);
            }
            out.push(center + hull.normals.row(f).transpose() / o);
        }
        Ok(dedup_points(out, 1e-8 * scale))
    }

    /// Enumerate all `n`-row intersections. Used for flat sets only.
    fn vertices_brute(&self, scale: f64) -> Result<Vec<DVector<f64>>, GeometryError> {
        let n = self.dim();
        let m = self.num_constraints();
        let mut out = Vec::new();
        let mut idx: Vec<usize> = (0..n).collect();
        if m < n {
            return Err(GeometryError::Unbounded);
        }
        loop {
            let a = self.normals.select_rows(&idx);
            let b = self.offsets.select_rows(&idx);
            if let Some(x) = a.lu().solve(&b) {
                if x.iter().all(|v| v.is_finite()) && self.contains(&x, 1e-8 * scale) {
                    out.push(x);
                }
            }
            // next combination in lexicographic order
            let mut i = n;
            loop {
                if i == 0 {
                    return Ok(dedup_points(out, 1e-8 * scale));
                }
                i -= 1;
                if idx[i] < m - n + i {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn from_hull(h: Hull) -> Result<Self, GeometryError> {
        Self::new(h.normals, h.offsets)
    }

    /// Convex hull of a finite point set.
    pub fn from_points(points: &[DVector<f64>]) -> Result<Self, GeometryError> {
        if let Some(p) = points.first() {
            if p.len() > MAX_DIM {
                return Err(GeometryError::DimensionTooLarge(p.len()));
            }
        }
        Self::from_hull(convex_hull(points)?)
    }

    /// `P ⊕ Q = {p + q}`.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self, GeometryError> {
        self.check_dim(other.dim())?;
        let a = self.vertices()?;
        let b = other.vertices()?;
        let mut pts = Vec::with_capacity(a.len() * b.len());
        for p in &a {
            for q in &b {
                pts.push(p + q);
            }
        }
        Self::from_points(&pts)
    }

    /// `P ⊖ Q = {x : x + Q ⊆ P}`. The result may be empty.
    pub fn pontryagin_diff(&self, other: &Self) -> Result<Self, GeometryError> {
        self.check_dim(other.dim())?;
        let mut d = self.offsets.clone();
        for i in 0..self.num_constraints() {
            d[i] -= other.support(&self.normals.row(i).transpose())?;
        }
        Ok(Self {
            normals: self.normals.clone(),
            offsets: d,
        })
    }

    /// `{Mx : x ∈ P}` for a matrix with `dim()` columns.
    pub fn affine_image(&self, m: &DMatrix<f64>) -> Result<Self, GeometryError> {
        self.check_dim(m.ncols())?;
        if m.nrows() > MAX_DIM {
            return Err(GeometryError::DimensionTooLarge(m.nrows()));
        }
        let pts: Vec<DVector<f64>> = self.vertices()?.iter().map(|v| m * v).collect();
        Self::from_points(&pts)
    }

    /// `{x : Mx ∈ P}`.
    pub fn preimage(&self, m: &DMatrix<f64>) -> Result<Self, GeometryError> {
        self.check_dim(m.nrows())?;
        Self::from_rows_lenient(&self.normals * m, self.offsets.clone())
    }

    /// `{x + t : x ∈ P}`.
    pub fn translate(&self, t: &DVector<f64>) -> Result<Self, GeometryError> {
        self.check_dim(t.len())?;
        Ok(Self {
            normals: self.normals.clone(),
            offsets: &self.offsets + &self.normals * t,
        })
    }

    /// `{s x : x ∈ P}` for `s ≥ 0`.
    pub fn scale(&self, s: f64) -> Result<Self, GeometryError> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if s == 0.0 {
            if self.is_empty()? {
                return Ok(self.clone());
            }
            return Ok(Self::origin(self.dim()));
        }
        Ok(Self {
            normals: self.normals.clone(),
            offsets: &self.offsets * s,
        })
    }

    /// `P ∩ Q`.
    pub fn intersect(&self, other: &Self) -> Result<Self, GeometryError> {
        self.check_dim(other.dim())?;
        let mut c = DMatrix::zeros(self.num_constraints() + other.num_constraints(), self.dim());
        c.rows_mut(0, self.num_constraints()).copy_from(&self.normals);
        c.rows_mut(self.num_constraints(), other.num_constraints())
            .copy_from(&other.normals);
        let mut d = DVector::zeros(c.nrows());
        d.rows_mut(0, self.num_constraints()).copy_from(&self.offsets);
        d.rows_mut(self.num_constraints(), other.num_constraints())
            .copy_from(&other.offsets);
        Ok(Self {
            normals: c,
            offsets: d,
        })
    }

    /// Drop rows implied by the others. An empty set collapses to
    /// [`Polytope::empty`].
    pub fn remove_redundant(&self) -> Result<Self, GeometryError> {
        if self.is_empty()? {
            return Ok(Self::empty(self.dim()));
        }
        let m = self.num_constraints();
        let mut keep: Vec<bool> = vec![true; m];
        // exact duplicates and dominated parallel rows first
        for i in 0..m {
            for j in 0..i {
                if keep[j]
                    && (self.normals.row(i) - self.normals.row(j)).amax() <= 1e-12
                {
                    if self.offsets[i] >= self.offsets[j] {
                        keep[i] = false;
                    } else {
                        keep[j] = false;
                    }
                    if !keep[i] {
                        break;
                    }
                }
            }
        }
        for i in 0..m {
            if !keep[i] {
                continue;
            }
            let mut rows: Vec<usize> = (0..m).filter(|&j| keep[j] && j != i).collect();
            rows.push(i);
            let a = self.normals.select_rows(&rows);
            let mut b = self.offsets.select_rows(&rows);
            let last = b.len() - 1;
            b[last] += 1.0;
            let dir = self.normals.row(i).transpose();
            let sol = solve_lp(&dir, &a, &b)?;
            if sol.status == LpStatus::Optimal && sol.value <= self.offsets[i] + TOL {
                keep[i] = false;
            }
        }
        let rows: Vec<usize> = (0..m).filter(|&j| keep[j]).collect();
        Ok(Self {
            normals: self.normals.select_rows(&rows),
            offsets: self.offsets.select_rows(&rows),
        })
    }

    /// `other ⊆ self` up to `tol`, checked by support functions.
    pub fn contains_set(&self, other: &Self, tol: f64) -> Result<bool, GeometryError> {
        self.check_dim(other.dim())?;
        if other.is_empty()? {
            return Ok(true);
        }
        for i in 0..self.num_constraints() {
            match other.support(&self.normals.row(i).transpose()) {
                Ok(h) if h <= self.offsets[i] + tol => {}
                Ok(_) | Err(GeometryError::Unbounded) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// Mutual containment up to `tol`.
    pub fn set_eq(&self, other: &Self, tol: f64) -> Result<bool, GeometryError> {
        Ok(self.contains_set(other, tol)? && other.contains_set(self, tol)?)
    }

    /// Deterministic sample of points in the set: all vertices followed by
    /// random convex combinations of them.
    pub fn sample_points(&self, count: usize, seed: u64) -> Result<Vec<DVector<f64>>, GeometryError> {
        let verts = self.vertices()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<DVector<f64>> = verts.iter().take(count).cloned().collect();
        while out.len() < count {
            let w: Vec<f64> = verts.iter().map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let total: f64 = w.iter().sum();
            let mut p = DVector::zeros(self.dim());
            for (v, wi) in verts.iter().zip(&w) {
                p.axpy(wi / total, v, 1.0);
            }
            out.push(p);
        }
        Ok(out)
    }

    fn check_dim(&self, found: usize) -> Result<(), GeometryError> {
        if found != self.dim() {
            return Err(GeometryError::Dimension {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}
