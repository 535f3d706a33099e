//! Randomized invariants that hold for every input, not just the seeded
//! instances of the unit tests.

use nalgebra::DVector;
use proptest::prelude::*;

use tracereg::sampling::SamplingOperator;
use tracereg::symmat::{
    inv_svec, nuclear_norm, pos_neg_parts, proj_nuclear_ball, proj_psd, proj_spectraplex,
    project_l1_ball, project_simplex, svec, sym_dim, SVec, SymMat,
};

fn sym_from_upper(m: usize, upper: &[f64]) -> SymMat {
    let mut idx = 0;
    SymMat::from_fn(m, |_, _| {
        let v = upper[idx % upper.len()];
        idx += 1;
        v
    })
}

fn entries(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, sym_dim(m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_svec_round_trip_isometry(upper in entries(5), other in entries(5)) {
        let a = sym_from_upper(5, &upper);
        let b = sym_from_upper(5, &other);
        // round trip
        let back = inv_svec(&svec(&a));
        prop_assert!(back.sub(&a).max_abs() <= 1e-10 * (1.0 + a.max_abs()));
        // isometry of the inner product
        let direct = a.frob_inner(&b);
        let mapped = svec(&a).coords().dot(svec(&b).coords());
        prop_assert!((direct - mapped).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn prop_proj_psd_idempotent_nonexpansive(ua in entries(4), ub in entries(4)) {
        let a = sym_from_upper(4, &ua);
        let b = sym_from_upper(4, &ub);
        let pa = proj_psd(&a).unwrap();
        let pb = proj_psd(&b).unwrap();
        let again = proj_psd(&pa).unwrap();
        prop_assert!(again.sub(&pa).max_abs() <= 1e-9 * (1.0 + pa.max_abs()));
        // firmly contained in the cone
        prop_assert!(pa.min_eigenvalue().unwrap() >= -1e-10 * (1.0 + pa.max_abs()));
        // 1-Lipschitz in Frobenius norm
        prop_assert!(pa.sub(&pb).frob_norm() <= a.sub(&b).frob_norm() + 1e-9);
    }

    #[test]
    fn prop_pos_neg_split_norms(upper in entries(5)) {
        let m = sym_from_upper(5, &upper);
        let (pos, neg) = pos_neg_parts(&m).unwrap();
        let total = nuclear_norm(&m).unwrap();
        let split = nuclear_norm(&pos).unwrap() + nuclear_norm(&neg).unwrap();
        prop_assert!((total - split).abs() <= 1e-8 * (1.0 + total));
        prop_assert!(pos.add(&neg).sub(&m).max_abs() <= 1e-9 * (1.0 + m.max_abs()));
        prop_assert!(pos.frob_inner(&neg).abs() <= 1e-8 * (1.0 + m.frob_norm()));
    }

    #[test]
    fn prop_spectraplex_feasibility(upper in entries(4), t in 0.25..4.0f64) {
        let m = sym_from_upper(4, &upper);
        let p = proj_spectraplex(&m, t).unwrap();
        prop_assert!((p.trace() - t).abs() <= 1e-9 * t);
        prop_assert!(p.min_eigenvalue().unwrap() >= -1e-10 * (1.0 + t));
    }

    #[test]
    fn prop_nuclear_ball_feasibility(upper in entries(4), radius in 0.25..4.0f64) {
        let m = sym_from_upper(4, &upper);
        let p = proj_nuclear_ball(&m, radius).unwrap();
        prop_assert!(nuclear_norm(&p).unwrap() <= radius * (1.0 + 1e-9));
        // points already inside stay put
        let inside = m.scale(radius / (2.0 * nuclear_norm(&m).unwrap().max(1e-9)));
        let q = proj_nuclear_ball(&inside, radius).unwrap();
        prop_assert!(q.sub(&inside).max_abs() <= 1e-12);
    }

    #[test]
    fn prop_vector_projections(v in prop::collection::vec(-5.0..5.0f64, 6), t in 0.1..3.0f64) {
        let s = project_simplex(&v, t);
        prop_assert!(s.iter().all(|&x| x >= 0.0));
        prop_assert!((s.iter().sum::<f64>() - t).abs() <= 1e-9 * t);
        let b = project_l1_ball(&v, t);
        prop_assert!(b.iter().map(|x| x.abs()).sum::<f64>() <= t * (1.0 + 1e-12));
    }

    #[test]
    fn prop_adjoint_identity(
        upper in entries(4),
        meas in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, sym_dim(4)), 3..8),
        weights in prop::collection::vec(-3.0..3.0f64, 8),
    ) {
        let a = sym_from_upper(4, &upper);
        let ms: Vec<SymMat> = meas.iter().map(|u| sym_from_upper(4, u)).collect();
        let n = ms.len();
        let op = SamplingOperator::from_measurements(ms).unwrap();
        let b = DVector::from_fn(n, |i, _| weights[i % weights.len()]);
        let lhs = op.apply(&a).unwrap().dot(&b);
        let rhs = a.frob_inner(&op.adjoint(&b).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        // the design cache rows are the svec images
        for (i, x) in op.measurements().iter().enumerate() {
            let row = op.design().row(i).transpose();
            let diff = (row - svec(x).coords()).abs().max();
            prop_assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn prop_svec_raw_length_validation(len in 1usize..40) {
        let v = DVector::from_element(len, 1.0);
        let ok = SVec::dim_from_len(len).is_some();
        prop_assert_eq!(tracereg::symmat::inv_svec_raw(v).is_ok(), ok);
    }
}
