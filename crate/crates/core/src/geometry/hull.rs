//! Convex hull of a finite point set in dimension ≤ 4, returned as a
//! half-space description plus the hull vertices.
//!
//! Points that span only an affine subspace are hulled inside that subspace
//! and the result is closed off with slabs along the flat directions, so a
//! single point or a segment in the plane still yields a valid H-description.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::GeometryError;

#[derive(Clone, Debug)]
pub(crate) struct Hull {
    pub normals: DMatrix<f64>,
    pub offsets: DVector<f64>,
    pub vertices: Vec<DVector<f64>>,
}

pub(crate) fn convex_hull(points: &[DVector<f64>]) -> Result<Hull, GeometryError> {
    let Some(first) = points.first() else {
        return Err(GeometryError::Empty);
    };
    let d = first.len();
    if points.iter().any(|p| p.len() != d) {
        return Err(GeometryError::Dimension {
            expected: d,
            found: points.iter().map(|p| p.len()).find(|&l| l != d).unwrap_or(d),
        });
    }
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(GeometryError::NonFinite);
    }
    let scale = points
        .iter()
        .map(|p| p.amax())
        .fold(1.0f64, f64::max);
    let eps = 1e-10 * scale;

    let (origin, basis) = affine_basis(points, eps);
    let k = basis.len();

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut vertex_ids: Vec<usize> = Vec::new();

    // slabs along the directions the points do not span
    for dir in orthogonal_complement(&basis, d) {
        let (lo, hi) = extent(points, &dir);
        rows.push((dir.iter().copied().collect(), hi));
        rows.push((dir.iter().map(|v| -v).collect(), -lo));
    }

    match k {
        0 => vertex_ids.push(0),
        1 => {
            let dir = &basis[0];
            let proj: Vec<f64> = points.iter().map(|p| dir.dot(p)).collect();
            let (imin, imax) = argminmax(&proj);
            rows.push((dir.iter().copied().collect(), proj[imax]));
            rows.push((dir.iter().map(|v| -v).collect(), -proj[imin]));
            vertex_ids.push(imin);
            if (proj[imax] - proj[imin]).abs() > eps {
                vertex_ids.push(imax);
            }
        }
        _ => {
            let local: Vec<Vec<f64>> = points
                .iter()
                .map(|p| {
                    let c = p - &origin;
                    basis.iter().map(|b| b.dot(&c)).collect()
                })
                .collect();
            let qh = quickhull(&local, eps)?;
            for (normal, offset) in qh.facets {
                let mut full = DVector::zeros(d);
                for (coef, b) in normal.iter().zip(&basis) {
                    full.axpy(*coef, b, 1.0);
                }
                let off = offset + full.dot(&origin);
                rows.push((full.iter().copied().collect(), off));
            }
            vertex_ids = qh.vertices;
        }
    }

    let rows = merge_rows(rows, 1e-9, 1e-9 * scale);
    let mut normals = DMatrix::zeros(rows.len(), d);
    let mut offsets = DVector::zeros(rows.len());
    for (i, (n, o)) in rows.iter().enumerate() {
        for j in 0..d {
            normals[(i, j)] = n[j];
        }
        offsets[i] = *o;
    }
    vertex_ids.sort_unstable();
    vertex_ids.dedup();
    let vertices = dedup_points(vertex_ids.iter().map(|&i| points[i].clone()), eps * 10.0);
    Ok(Hull {
        normals,
        offsets,
        vertices,
    })
}

/// Greedy orthonormal basis of the affine hull of `points`.
fn affine_basis(points: &[DVector<f64>], eps: f64) -> (DVector<f64>, Vec<DVector<f64>>) {
    let d = points[0].len();
    let first = {
        let (i, _) = argminmax(&points.iter().map(|p| p[0]).collect::<Vec<_>>());
        i
    };
    let origin = points[first].clone();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while basis.len() < d {
        let mut best = (0usize, 0.0f64);
        for (i, p) in points.iter().enumerate() {
            let mut r = p - &origin;
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
            let n = r.norm();
            if n > best.1 {
                best = (i, n);
            }
        }
        if best.1 <= eps {
            break;
        }
        let mut r = &points[best.0] - &origin;
        // two passes of Gram-Schmidt for stability
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let n = r.norm();
        basis.push(r / n);
    }
    (origin, basis)
}

fn orthogonal_complement(basis: &[DVector<f64>], d: usize) -> Vec<DVector<f64>> {
    let mut all: Vec<DVector<f64>> = basis.to_vec();
    let mut out = Vec::new();
    for axis in 0..d {
        if all.len() == d {
            break;
        }
        let mut r = DVector::zeros(d);
        r[axis] = 1.0;
        for _ in 0..2 {
            for b in &all {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let n = r.norm();
        if n > 1e-6 {
            let v = r / n;
            all.push(v.clone());
            out.push(v);
        }
    }
    out
}

fn extent(points: &[DVector<f64>], dir: &DVector<f64>) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let v = dir.dot(p);
        (lo.min(v), hi.max(v))
    })
}

fn argminmax(v: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[imin] {
            imin = i;
        }
        if *x > v[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

pub(crate) fn dedup_points(
    points: impl IntoIterator<Item = DVector<f64>>,
    tol: f64,
) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    let mut sorted: Vec<DVector<f64>> = points.into_iter().collect();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    for p in sorted {
        let dup = out
            .iter()
            .rev()
            .take_while(|q| p[0] - q[0] <= tol)
            .any(|q| (q - &p).amax() <= tol);
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Merge rows whose normals and offsets agree within tolerance.
fn merge_rows(mut rows: Vec<(Vec<f64>, f64)>, ntol: f64, otol: f64) -> Vec<(Vec<f64>, f64)> {
    rows.sort_by(|a, b| {
        for (x, y) in a.0.iter().zip(&b.0) {
            let c = x.total_cmp(y);
            if c != std::cmp::Ordering::Equal {
                return c;
            }
        }
        a.1.total_cmp(&b.1)
    });
    let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
    for (n, o) in rows {
        let merged = out.iter_mut().rev().take(8).find(|(m, p)| {
            m.iter().zip(&n).all(|(x, y)| (x - y).abs() <= ntol) && (p.abs() - o.abs()).abs() <= otol.max(1e-9 * o.abs()) * 10.0
        });
        match merged {
            Some((_, p)) => *p = p.max(o),
            None => out.push((n, o)),
        }
    }
    out
}

struct QuickHull {
    facets: Vec<(Vec<f64>, f64)>,
    vertices: Vec<usize>,
}

struct Facet {
    verts: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quickhull on full-dimensional points in `R^k`, `2 ≤ k ≤ 4`.
fn quickhull(pts: &[Vec<f64>], eps: f64) -> Result<QuickHull, GeometryError> {
    let k = pts[0].len();
    if k > 4 {
        return Err(GeometryError::DimensionTooLarge(k));
    }
    let simplex = initial_simplex(pts, eps)
        .ok_or_else(|| GeometryError::Degenerate("point set is not full-dimensional".into()))?;
    let mut interior = vec![0.0; k];
    for &i in &simplex {
        for j in 0..k {
            interior[j] += pts[i][j] / (k + 1) as f64;
        }
    }

    let mut facets: Vec<Facet> = Vec::new();
    for skip in 0..=k {
        let verts: Vec<usize> = simplex
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, v)| *v)
            .collect();
        facets.push(make_facet(pts, verts, &interior)?);
    }
    let in_simplex: Vec<bool> = {
        let mut v = vec![false; pts.len()];
        for &i in &simplex {
            v[i] = true;
        }
        v
    };
    for (i, p) in pts.iter().enumerate() {
        if in_simplex[i] {
            continue;
        }
        assign(&mut facets, 0, i, p, eps);
    }

    let mut stack: Vec<usize> = (0..facets.len()).collect();
    while let Some(fi) = stack.pop() {
        if !facets[fi].alive || facets[fi].outside.is_empty() {
            continue;
        }
        let apex = {
            let f = &facets[fi];
            *f.outside
                .iter()
                .max_by(|&&a, &&b| {
                    let da = dot(&f.normal, &pts[a]) - f.offset;
                    let db = dot(&f.normal, &pts[b]) - f.offset;
                    da.total_cmp(&db)
                })
                .expect("nonempty outside set")
        };
        let p = &pts[apex];
        let visible: Vec<usize> = (0..facets.len())
            .filter(|&j| facets[j].alive && dot(&facets[j].normal, p) - facets[j].offset > eps)
            .collect();

        let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
        for &j in &visible {
            let verts = &facets[j].verts;
            for skip in 0..verts.len() {
                let mut r: Vec<usize> = verts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, v)| *v)
                    .collect();
                r.sort_unstable();
                *ridges.entry(r).or_insert(0) += 1;
            }
        }
        let mut orphans: Vec<usize> = Vec::new();
        for &j in &visible {
            facets[j].alive = false;
            orphans.append(&mut facets[j].outside);
        }
        let first_new = facets.len();
        let mut horizon: Vec<Vec<usize>> = ridges
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .map(|(r, _)| r)
            .collect();
        horizon.sort();
        for mut r in horizon {
            r.push(apex);
            facets.push(make_facet(pts, r, &interior)?);
        }
        for o in orphans {
            if o != apex {
                assign(&mut facets, first_new, o, &pts[o], eps);
            }
        }
        stack.extend(first_new..facets.len());
        if facets.len() > 4 * first_new.max(64) {
            // compact dead facets
            let mut remap = vec![usize::MAX; facets.len()];
            let mut kept = Vec::new();
            for (i, f) in facets.into_iter().enumerate() {
                if f.alive {
                    remap[i] = kept.len();
                    kept.push(f);
                }
            }
            facets = kept;
            stack = stack
                .into_iter()
                .filter_map(|i| (remap[i] != usize::MAX).then(|| remap[i]))
                .collect();
        }
    }

    let mut vertices = Vec::new();
    let mut out = Vec::new();
    for f in facets.into_iter().filter(|f| f.alive) {
        vertices.extend_from_slice(&f.verts);
        out.push((f.normal, f.offset));
    }
    Ok(QuickHull {
        facets: out,
        vertices,
    })
}

fn assign(facets: &mut [Facet], from: usize, idx: usize, p: &[f64], eps: f64) {
    let mut best: Option<(usize, f64)> = None;
    for (j, f) in facets.iter().enumerate().skip(from) {
        if !f.alive {
            continue;
        }
        let dist = dot(&f.normal, p) - f.offset;
        if dist > eps && best.is_none_or(|(_, b)| dist > b) {
            best = Some((j, dist));
        }
    }
    if let Some((j, _)) = best {
        facets[j].outside.push(idx);
    }
}

fn initial_simplex(pts: &[Vec<f64>], eps: f64) -> Option<Vec<usize>> {
    let k = pts[0].len();
    let (i0, _) = argminmax(&pts.iter().map(|p| p[0]).collect::<Vec<_>>());
    let mut chosen = vec![i0];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while chosen.len() < k + 1 {
        let mut best = (0usize, 0.0f64);
        for (i, p) in pts.iter().enumerate() {
            let mut r: Vec<f64> = p.iter().zip(&pts[i0]).map(|(a, b)| a - b).collect();
            for b in &basis {
                let c = dot(b, &r);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let n = dot(&r, &r).sqrt();
            if n > best.1 {
                best = (i, n);
            }
        }
        if best.1 <= eps {
            return None;
        }
        let mut r: Vec<f64> = pts[best.0].iter().zip(&pts[i0]).map(|(a, b)| a - b).collect();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &r);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&r, &r).sqrt();
        basis.push(r.into_iter().map(|v| v / n).collect());
        chosen.push(best.0);
    }
    Some(chosen)
}

fn make_facet(pts: &[Vec<f64>], verts: Vec<usize>, interior: &[f64]) -> Result<Facet, GeometryError> {
    let k = pts[0].len();
    let p0 = &pts[verts[0]];
    let rows: Vec<Vec<f64>> = verts[1..]
        .iter()
        .map(|&v| pts[v].iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    let mut normal = generalized_cross(&rows, k);
    let norm = dot(&normal, &normal).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(GeometryError::Degenerate("flat hull facet".into()));
    }
    normal.iter_mut().for_each(|v| *v /= norm);
    let mut offset = dot(&normal, p0);
    if dot(&normal, interior) > offset {
        normal.iter_mut().for_each(|v| *v = -*v);
        offset = -offset;
    }
    Ok(Facet {
        verts,
        normal,
        offset,
        outside: Vec::new(),
        alive: true,
    })
}

/// Vector orthogonal to the `k - 1` rows of `rows` (cofactor expansion).
pub(super) fn generalized_cross(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..k)
        .map(|j| {
            let minor: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(c, _)| *c != j)
                        .map(|(_, v)| *v)
                        .collect()
                })
                .collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * det(&minor)
        })
        .collect()
}

fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        n => {
            let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
            mat.determinant()
        }
    }
}
