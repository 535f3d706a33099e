//! End-to-end behaviour of the error bounds on instances with known
//! geometry, including the constructive non-identifiability witness when
//! the separation constant vanishes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use tracereg::experiments::gen_subspace_t;
use tracereg::geometry::{est_error_bound, lambda0, mu_t, phi_sq_t, tau_sq_t, EFFECTIVE_ZERO};
use tracereg::sampling::{gen_orthonormal_basis_design, gen_wishart, SamplingOperator};
use tracereg::solvers::{solve_cls, SolverConfig};
use tracereg::subspace::SubspaceT;
use tracereg::symmat::{nuclear_norm, sym_dim, SymMat};
use tracereg::RngSeed;

/// When the separation constant is zero there is a second cone point with
/// an identical fit, built directly from the invisible slice direction.
#[test]
fn test_zero_separation_gives_second_solution() {
    let m = 4;
    // canonical splitting: T is spanned by e1, the complement holds e2..e4
    let u_par = DMatrix::from_fn(m, 1, |j, _| if j == 0 { 1.0 } else { 0.0 });
    let t = SubspaceT::from_parallel_basis(u_par).unwrap();

    // drop every basis measurement touching row/column 2, making the slice
    // direction e2 e2^T invisible
    let full = gen_orthonormal_basis_design(m);
    let kept: Vec<SymMat> = full
        .measurements()
        .iter()
        .filter(|x| (0..m).all(|k| x.get(1, k) == 0.0))
        .cloned()
        .collect();
    let op = SamplingOperator::from_measurements(kept).unwrap();
    let zero_sep = tau_sq_t(&op, &t).unwrap();
    assert!(zero_sep.value <= 1e-10, "separation {}", zero_sep.value);

    // the witness pair: target in T, plus the invisible slice element
    let target = SymMat::from_fn(m, |j, k| if j == 0 && k == 0 { 1.0 } else { 0.0 });
    let invisible = SymMat::from_fn(m, |j, k| if j == 1 && k == 1 { 1.0 } else { 0.0 });
    let second = target.add(&invisible);
    assert!(second.min_eigenvalue().unwrap() >= -1e-12);
    let fit_gap = (op.apply(&target).unwrap() - op.apply(&second).unwrap()).norm();
    assert!(fit_gap <= 1e-12, "fits differ by {fit_gap}");
    assert!(second.sub(&target).frob_norm() > 0.5);
    // and the bound evaluator refuses to certify anything here
    assert!(est_error_bound(0.1, zero_sep.value, 1.0, 0.0).is_infinite());
}

/// On an instance with positive constants, the nuclear error obeys the
/// three-constant bound once the heuristic correlation estimate is replaced
/// by an inflated trial value; the raw heuristic value is only logged.
#[test]
fn test_estimation_error_bound_end_to_end() {
    let m = 12;
    let r = 1;
    let n = 2 * sym_dim(m); // comfortably identifiable
    let sigma = 0.05;
    let op = gen_wishart(m, n, 1, RngSeed(21));
    let t = gen_subspace_t(m, r, RngSeed(22)).unwrap();

    // rank-one target supported on T
    let u = t.u_par().column(0).into_owned();
    let target = SymMat::outer(&u).scale(3.0);

    let mut rng = RngSeed(23).stream(&[1]);
    let noise = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let y = op.apply(&target).unwrap() + &noise;
    let report = solve_cls(&op, &y, &SolverConfig::tight()).unwrap();
    let err = nuclear_norm(&report.estimate.sub(&target)).unwrap();

    let l0 = lambda0(&op, &noise).unwrap();
    let tau = tau_sq_t(&op, &t).unwrap().value;
    let phi = phi_sq_t(&op, &t, 8, RngSeed(24)).unwrap();
    let mu = mu_t(&op, &t, 8, RngSeed(25)).unwrap();
    assert!(tau > EFFECTIVE_ZERO && phi.certified_lower > EFFECTIVE_ZERO);

    // the heuristic mu is a lower estimate; inflating it can only enlarge
    // the bound, so any upper trial value must keep the inequality valid
    for inflate in [2.0, 5.0, 10.0] {
        let bound = est_error_bound(l0, tau, phi.certified_lower, mu * inflate + 0.1);
        assert!(
            err <= bound,
            "error {err:.4e} above bound {bound:.4e} at inflation {inflate}"
        );
    }
    let raw_bound = est_error_bound(l0, tau, phi.certified_lower, mu);
    if err > raw_bound {
        // not asserted: the correlation constant from alternating ascent is
        // a lower estimate, so the evaluated bound can be optimistic
        eprintln!(
            "note: raw heuristic-mu bound violated: error {err:.4e} vs bound {raw_bound:.4e}"
        );
    }
    // bound grows with the correlation constant
    assert!(raw_bound <= est_error_bound(l0, tau, phi.certified_lower, mu + 1.0));
}
