use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rtmpc::geometry::{mrpi_approx, Polytope};

fn boxed(lo: &[f64], width: &[f64]) -> Polytope {
    let hi: Vec<f64> = lo.iter().zip(width).map(|(l, w)| l + w).collect();
    Polytope::from_box(lo, &hi).unwrap()
}

fn grid(p: &Polytope, per_axis: usize) -> Vec<DVector<f64>> {
    let (lo, hi) = p.bounding_box().unwrap();
    let mut out = Vec::new();
    for i in 0..=per_axis {
        for j in 0..=per_axis {
            let t = i as f64 / per_axis as f64;
            let s = j as f64 / per_axis as f64;
            out.push(DVector::from_vec(vec![
                lo[0] + t * (hi[0] - lo[0]),
                lo[1] + s * (hi[1] - lo[1]),
            ]));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn erosion_then_dilation_stays_inside(
        plo in prop::collection::vec(-3.0..0.0f64, 2),
        pw in prop::collection::vec(1.0..6.0f64, 2),
        qlo in prop::collection::vec(-0.5..0.0f64, 2),
        qw in prop::collection::vec(0.0..1.0f64, 2),
    ) {
        let p = boxed(&plo, &pw);
        let q = boxed(&qlo, &qw);
        let e = p.pontryagin_diff(&q).unwrap();
        prop_assume!(!e.is_empty().unwrap());
        let back = e.minkowski_sum(&q).unwrap();
        for x in grid(&back, 12) {
            if back.contains(&x, 0.0) {
                prop_assert!(p.contains(&x, 1e-9));
            }
        }
    }

    #[test]
    fn support_is_additive_over_sums(
        a in prop::collection::vec(-2.0..2.0f64, 6),
        b in prop::collection::vec(-2.0..2.0f64, 8),
        dir in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let pts = |v: &[f64]| v.chunks(2).map(DVector::from_row_slice).collect::<Vec<_>>();
        let p = Polytope::from_points(&pts(&a)).unwrap();
        let q = Polytope::from_points(&pts(&b)).unwrap();
        let s = p.minkowski_sum(&q).unwrap();
        let d = DVector::from_vec(dir);
        let lhs = s.support(&d).unwrap();
        let rhs = p.support(&d).unwrap() + q.support(&d).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn vertices_and_contains_agree(
        raw in prop::collection::vec(-3.0..3.0f64, 9..24),
        weights in prop::collection::vec(0.0..1.0f64, 8),
    ) {
        let pts: Vec<DVector<f64>> = raw.chunks_exact(3).map(DVector::from_row_slice).collect();
        let p = Polytope::from_points(&pts).unwrap();
        let verts = p.vertices().unwrap();
        for v in &verts {
            prop_assert!(p.contains(v, 1e-9));
        }
        let total: f64 = weights.iter().take(verts.len()).sum::<f64>() + 1e-12;
        let mut comb = DVector::zeros(3);
        for (v, w) in verts.iter().zip(&weights) {
            comb.axpy(w / total, v, 1.0);
        }
        if weights.len() >= verts.len() {
            prop_assert!(p.contains(&comb, 1e-9));
        }
        // every input point is covered by the hull
        for q in &pts {
            prop_assert!(p.contains(q, 1e-9));
        }
    }

    #[test]
    fn mrpi_is_robustly_invariant(
        entries in prop::collection::vec(-1.0..1.0f64, 4),
        shrink in 0.2..0.9f64,
        half in prop::collection::vec(0.05..1.0f64, 2),
    ) {
        let a = DMatrix::from_row_slice(2, 2, &entries);
        let rho = rtmpc::solvers::spectral_radius(&a);
        prop_assume!(rho > 1e-6);
        let a_k = a * (shrink / rho);
        let w = Polytope::symmetric_box(&half).unwrap();
        let eps = 1e-3;
        let z = mrpi_approx(&a_k, &w, eps).unwrap();
        let size = z.inf_norm_radius().unwrap();
        let wv = w.vertices().unwrap();
        for x in z.sample_points(1000, 11).unwrap() {
            for wi in &wv {
                let next = &a_k * &x + wi;
                prop_assert!(z.contains(&next, eps * size), "escape by {}", z.violation(&next));
            }
        }
    }
}
