//! Zonotopes `c ⊕ G·[−1, 1]^m` and their exact half-space form.
//!
//! Every facet normal of a full-dimensional zonotope in `ℝⁿ` is orthogonal to
//! `n − 1` of its generators, so the H-representation follows from generator
//! tuples without any hull computation.

use nalgebra::{DMatrix, DVector};

use super::hull::generalized_cross;
use super::{GeometryError, Polytope, MAX_DIM};

/// Relative sine below which two generators are merged. The merged segment
/// misses a sliver of width `sin·|g||h|/|g+h|`, far below membership tolerance.
const PARALLEL_TOL: f64 = 1e-7;

/// Grid on which unit facet normals are identified.
const NORMAL_GRID: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Zonotope {
    pub center: DVector<f64>,
    pub generators: Vec<DVector<f64>>,
}

impl Zonotope {
    /// Recognizes a parallelotope: `2n` rows forming antipodal pairs with an
    /// invertible pair matrix. `w` must be irredundant.
    pub fn from_parallelotope(w: &Polytope) -> Option<Self> {
        let n = w.dim();
        let (f, g) = (w.normals(), w.offsets());
        if n == 0 || f.nrows() != 2 * n {
            return None;
        }
        let mut used = vec![false; 2 * n];
        let mut m = DMatrix::zeros(n, n);
        let mut mid = DVector::zeros(n);
        let mut half = DVector::zeros(n);
        let mut k = 0;
        for i in 0..2 * n {
            if used[i] {
                continue;
            }
            let j = (i + 1..2 * n).find(|&j| !used[j] && (f.row(i) + f.row(j)).amax() <= 1e-12)?;
            used[i] = true;
            used[j] = true;
            m.set_row(k, &f.row(i));
            // f x ∈ [−g_j, g_i]
            mid[k] = 0.5 * (g[i] - g[j]);
            half[k] = 0.5 * (g[i] + g[j]);
            k += 1;
        }
        let inv = m.try_inverse()?;
        let center = &inv * mid;
        let generators = (0..n).map(|c| inv.column(c) * half[c]).collect();
        Some(Self { center, generators })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn linear_image(&self, a: &DMatrix<f64>) -> Self {
        Self {
            center: a * &self.center,
            generators: self.generators.iter().map(|g| a * g).collect(),
        }
    }

    /// Minkowski sum; parallel generators are merged and zero ones dropped.
    pub fn sum(&self, other: &Self) -> Self {
        let mut z = Self {
            center: &self.center + &other.center,
            generators: self.generators.clone(),
        };
        for g in &other.generators {
            z.push_generator(g.clone());
        }
        z
    }

    fn push_generator(&mut self, mut g: DVector<f64>) {
        // round-off in otherwise decoupled coordinates would split every
        // facet of the decoupled block into a fan of slivers
        let big = g.amax();
        g.iter_mut().filter(|x| x.abs() <= 1e-12 * big).for_each(|x| *x = 0.0);
        let gn = g.norm();
        if gn == 0.0 {
            return;
        }
        for h in self.generators.iter_mut() {
            let hn = h.norm();
            let dot = h.dot(&g);
            let sin2 = 1.0 - (dot / (hn * gn)).powi(2);
            if sin2 <= PARALLEL_TOL * PARALLEL_TOL {
                // ⟨h⟩ ⊕ ⟨g⟩ = ⟨h ± g⟩ for parallel segments
                if dot >= 0.0 {
                    *h += &g;
                } else {
                    *h -= &g;
                }
                return;
            }
        }
        self.generators.push(g);
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            center: &self.center * s,
            generators: self.generators.iter().map(|g| g * s).collect(),
        }
    }

    #[cfg(test)]
    pub fn support(&self, d: &DVector<f64>) -> f64 {
        d.dot(&self.center) + self.generators.iter().map(|g| d.dot(g).abs()).sum::<f64>()
    }

    /// Exact H-representation. Fails when the generators do not span `ℝⁿ`.
    pub fn to_polytope(&self) -> Result<Polytope, GeometryError> {
        let n = self.dim();
        if n > MAX_DIM {
            return Err(GeometryError::DimensionTooLarge(n));
        }
        let gens: Vec<Vec<f64>> = self.generators.iter().map(|g| g.iter().copied().collect()).collect();
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        let mut tuple = Vec::with_capacity(n);
        collect_normals(&gens, n, 0, &mut tuple, &mut dirs);
        let dirs = dedup_directions(dirs);
        if dirs.len() < n {
            return Err(GeometryError::Degenerate("zonotope generators do not span the space".into()));
        }
        let mut c = DMatrix::zeros(2 * dirs.len(), n);
        let mut d = DVector::zeros(2 * dirs.len());
        for (i, dir) in dirs.iter().enumerate() {
            let v = DVector::from_row_slice(dir);
            let spread: f64 = self.generators.iter().map(|g| v.dot(g).abs()).sum();
            let at = v.dot(&self.center);
            c.set_row(2 * i, &v.transpose());
            d[2 * i] = at + spread;
            c.set_row(2 * i + 1, &(-&v).transpose());
            d[2 * i + 1] = -at + spread;
        }
        Polytope::new(c, d)
    }
}

/// Unit normals orthogonal to every `(n − 1)`-subset of generators that spans
/// a hyperplane.
fn collect_normals(gens: &[Vec<f64>], n: usize, start: usize, tuple: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
    if tuple.len() + 1 == n {
        let rows: Vec<Vec<f64>> = tuple.iter().map(|&i| gens[i].clone()).collect();
        let mut v = generalized_cross(&rows, n);
        let scale: f64 = rows.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).product();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > PARALLEL_TOL * scale.max(f64::MIN_POSITIVE) {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
        return;
    }
    for i in start..gens.len() {
        tuple.push(i);
        collect_normals(gens, n, i + 1, tuple, out);
        tuple.pop();
    }
}

/// Sign-canonical unit normals with near-duplicates removed.
fn dedup_directions(dirs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for mut d in dirs {
        let lead = d.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            d.iter_mut().for_each(|x| *x = -*x);
        }
        let key: Vec<i64> = d.iter().map(|x| (x / NORMAL_GRID).round() as i64).collect();
        if seen.insert(key) {
            out.push(d);
        }
    }
    out
}
