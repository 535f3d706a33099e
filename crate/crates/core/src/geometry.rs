//! Design geometry: the computable constants that decide whether the
//! cone-constrained estimator can work, their dual certificates, and the
//! prediction/estimation error bounds assembled from them.
//!
//! For a sampling operator `X` and (optionally) the tangent subspace `T` of
//! a low-rank target, this module computes
//!
//! * `tau0_sq` - minimal normalized measurement energy over the trace-one
//!   cone slice; zero means some nonzero PSD matrix is invisible to `X`.
//! * `tau_sq_r` - squared distance between the images of the trace-`R` and
//!   trace-one slices, plus a dual lower bound on it.
//! * `check_prop3` - a sufficient-condition certificate built from a single
//!   unit vector: a positive definite element of the range of the adjoint.
//! * `tau_sq_t` - separation between the image of `T` and the image of the
//!   trace-one slice of `T_perp`.
//! * `phi_sq_t` - minimal measurement energy over nuclear-norm-one elements
//!   of `T` (a heuristic upper estimate plus a certified lower bound).
//! * `mu_t` - maximal normalized correlation between the images of `T` and
//!   of the `T_perp` slice (alternating maximization, heuristic).
//! * `lambda0` and its tail bound - the effective noise level.
//! * the prediction-error (slow rate) and estimation-error bound evaluators.
//!
//! Convex programs run on the shared accelerated projected gradient engine
//! at a 1e-9 fixed-point tolerance with a 50_000 iteration cap; values from
//! runs that hit the cap are still reported but flagged as not converged.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::fista::{prox_gradient, ProxGradOptions, ProxGradSpec};
use crate::rng::RngSeed;
use crate::sampling::{EnsembleKind, SamplingOperator};
use crate::subspace::{Component, SubspaceT};
use crate::symmat::{
    eig_sym, inv_svec, proj_nuclear_ball, proj_spectraplex, spectral_norm, svec, sym_dim, SVec,
    SymMat,
};

/// Values at or below this threshold are treated as numerically zero when
/// constants gate a bound.
pub const EFFECTIVE_ZERO: f64 = 1e-6;

const GEOM_MAX_ITERS: usize = 50_000;
const GEOM_FP_TOL: f64 = 1e-9;
const GEOM_OBJ_TOL: f64 = 1e-13;

/// Value of a geometry program together with a convergence marker. A value
/// from a run that exhausted its iteration budget is still the best
/// objective seen (the programs are convex), but consumers may wish to
/// treat it as heuristic.
#[derive(Debug, Clone, Copy)]
pub struct GeomEstimate {
    pub value: f64,
    pub converged: bool,
}

fn geom_opts(lipschitz: f64) -> ProxGradOptions {
    ProxGradOptions {
        lipschitz,
        max_iters: GEOM_MAX_ITERS,
        rel_obj_tol: GEOM_OBJ_TOL,
        fixed_point_tol: GEOM_FP_TOL,
        acceleration: true,
        restart: true,
        keep_trace: false,
    }
}

/// Minimal normalized measurement energy over the trace-one slice of the
/// cone: `min (1/n) ||X(D)||^2` over `D >= 0, tr(D) = 1`.
pub fn tau0_sq(op: &SamplingOperator) -> Result<GeomEstimate> {
    let n = op.n() as f64;
    let m = op.dim_m();
    let f = |s: &SymMat| op.apply(s).expect("dims fixed").norm_squared() / n;
    let grad = |s: &SymMat| {
        let r = op.apply(s).expect("dims fixed");
        op.adjoint(&r).expect("dims fixed").scale(2.0 / n)
    };
    let prox = |s: &SymMat, _: f64| proj_spectraplex(s, 1.0);
    let g = |_: &SymMat| 0.0;
    let spec = ProxGradSpec {
        grad: &grad,
        f: &f,
        prox: &prox,
        g: &g,
    };
    let lip = 2.0 * op.lipschitz_estimate()?;
    let out = prox_gradient(
        SymMat::identity(m).scale(1.0 / m as f64),
        &spec,
        &geom_opts(lip),
    )?;
    Ok(GeomEstimate {
        value: out.objective,
        converged: out.converged,
    })
}

/// Result of the two-slice separation program at radius `R`.
#[derive(Debug, Clone)]
pub struct TauSqR {
    /// `min (1/n) ||X(A) - X(B)||^2` over `tr(A) = R`, `tr(B) = 1`, both PSD.
    pub value: f64,
    /// The minimizing pair `(A, B)`.
    pub primal: (SymMat, SymMat),
    /// `max(theta R - delta, 0)^2` for the dual candidate read off the
    /// primal residual direction; a lower bound on `value` by weak duality.
    pub dual_value: f64,
    pub converged: bool,
}

/// Squared distance between the images of the trace-`R` and trace-one cone
/// slices, with a dual certificate.
pub fn tau_sq_r(op: &SamplingOperator, r: f64) -> Result<TauSqR> {
    if !(r > 1.0) {
        return Err(invalid(format!("R must exceed 1, got {r}")));
    }
    let n = op.n() as f64;
    let m = op.dim_m();
    let lip = 4.0 * op.lipschitz_estimate()?;
    let step = 1.0 / lip.max(f64::MIN_POSITIVE);

    let mut a = SymMat::identity(m).scale(r / m as f64);
    let mut b = SymMat::identity(m).scale(1.0 / m as f64);
    let mut ya = a.clone();
    let mut yb = b.clone();
    let mut theta = 1.0_f64;
    let objective = |a: &SymMat, b: &SymMat| -> f64 {
        (op.apply(a).unwrap() - op.apply(b).unwrap()).norm_squared() / n
    };
    let mut obj = objective(&a, &b);
    let mut converged = false;

    for _ in 0..GEOM_MAX_ITERS {
        let resid = op.apply(&ya)? - op.apply(&yb)?;
        let grad = op.adjoint(&resid)?.scale(2.0 / n);
        let a_next = proj_spectraplex(&ya.axpy(-step, &grad), r)?;
        let b_next = proj_spectraplex(&yb.axpy(step, &grad), 1.0)?;
        let obj_next = objective(&a_next, &b_next);

        let (a_next, b_next, obj_next) = if obj_next > obj {
            // monotone restart: plain step from the current pair
            theta = 1.0;
            let resid = op.apply(&a)? - op.apply(&b)?;
            let grad = op.adjoint(&resid)?.scale(2.0 / n);
            let pa = proj_spectraplex(&a.axpy(-step, &grad), r)?;
            let pb = proj_spectraplex(&b.axpy(step, &grad), 1.0)?;
            let po = objective(&pa, &pb);
            (pa, pb, po.min(obj))
        } else {
            (a_next, b_next, obj_next)
        };

        let da = a_next.sub(&a);
        let db = b_next.sub(&b);
        let fp = (da.frob_norm() / a.frob_norm().max(1.0))
            .max(db.frob_norm() / b.frob_norm().max(1.0));
        let rel = (obj - obj_next).abs() / obj.abs().max(1.0);

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        ya = a_next.axpy(beta, &da);
        yb = b_next.axpy(beta, &db);
        theta = theta_next;
        a = a_next;
        b = b_next;
        obj = obj_next;

        if fp <= GEOM_FP_TOL || rel <= GEOM_OBJ_TOL {
            converged = true;
            break;
        }
    }

    // Dual candidate from the stationarity direction of the final residual.
    let resid = op.apply(&a)? - op.apply(&b)?;
    let dual_value = if resid.norm() <= f64::MIN_POSITIVE.sqrt() {
        0.0
    } else {
        let unit = &resid / resid.norm();
        let d = op.adjoint(&unit)?.scale(1.0 / n.sqrt());
        let eig = eig_sym(&d)?;
        let theta_min = eig.eigvals[op.dim_m() - 1];
        let delta_max = eig.eigvals[0];
        (theta_min * r - delta_max).max(0.0).powi(2)
    };

    Ok(TauSqR {
        value: obj,
        primal: (a, b),
        dual_value,
        converged,
    })
}

/// Certificate produced by the sufficient condition: a unit-ball vector `a`
/// whose back-projection `X*(a)/sqrt(n)` is positive definite.
#[derive(Debug, Clone, Copy)]
pub struct Prop3Certificate {
    pub r_star: f64,
    pub tau_star_sq: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

/// Evaluate the sufficient condition for the two-slice separation: returns
/// `None` when the smallest eigenvalue of `X*(a)/sqrt(n)` is not positive.
pub fn check_prop3(
    op: &SamplingOperator,
    a: &DVector<f64>,
    zeta: f64,
) -> Result<Option<Prop3Certificate>> {
    if a.len() != op.n() {
        return Err(invalid("certificate vector length must equal n"));
    }
    if a.norm() > 1.0 + 1e-12 {
        return Err(invalid("certificate vector must lie in the unit ball"));
    }
    if !(zeta > 1.0) {
        return Err(invalid("zeta must exceed 1"));
    }
    let d = op.adjoint(a)?.scale(1.0 / (op.n() as f64).sqrt());
    let eig = eig_sym(&d)?;
    let phi_max = eig.eigvals[0];
    let phi_min = eig.eigvals[op.dim_m() - 1];
    if phi_min <= 0.0 {
        return Ok(None);
    }
    Ok(Some(Prop3Certificate {
        r_star: zeta * phi_max / phi_min,
        tau_star_sq: (zeta - 1.0).powi(2) * phi_max * phi_max,
        phi_min,
        phi_max,
    }))
}

/// The `n x dim(T)` and `n x dim(S^{m-r})` reduced design matrices: row `i`
/// holds the coefficients of `X_i` against the orthonormal bases of `T` and
/// of the lifted complement. Both come from one congruence per measurement.
fn reduced_designs(op: &SamplingOperator, t: &SubspaceT) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = op.dim_m();
    let r = t.rank();
    let n = op.n();
    let dim_t = t.dim_t();
    let delta_perp = sym_dim(m - r);
    let frame = t.full_frame();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut d_t = DMatrix::zeros(n, dim_t);
    let mut g_perp = DMatrix::zeros(n, delta_perp);
    for (i, x) in op.measurements().iter().enumerate() {
        let w = frame.transpose() * x.as_matrix() * &frame;
        let mut col = 0;
        for a in 0..r {
            for b in a..m {
                d_t[(i, col)] = if a == b { w[(a, a)] } else { sqrt2 * w[(a, b)] };
                col += 1;
            }
        }
        let mut col = 0;
        for a in r..m {
            for b in a..m {
                g_perp[(i, col)] = if a == b { w[(a, a)] } else { sqrt2 * w[(a, b)] };
                col += 1;
            }
        }
    }
    (d_t, g_perp)
}

/// Separation between the image of `T` and the image of the trace-one PSD
/// slice of `T_perp`: `min (1/n) ||X(Theta) - X(Lambda)||^2`.
///
/// The minimization over `Theta in T` is a linear least squares problem for
/// any fixed `Lambda` and is eliminated exactly by projecting out the column
/// space of the design restricted to `T`; projected gradient then runs on
/// the compressed `Lambda` block alone.
pub fn tau_sq_t(op: &SamplingOperator, t: &SubspaceT) -> Result<GeomEstimate> {
    if t.dim_m() != op.dim_m() {
        return Err(invalid("subspace dimension does not match the operator"));
    }
    let n = op.n() as f64;
    let mr = op.dim_m() - t.rank();
    let (d_t, g_perp) = reduced_designs(op, t);

    // Orthonormal basis of the column space of the T-restricted design.
    let svd = d_t.clone().svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let sv_max = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cutoff = sv_max * 1e-12 * (op.n().max(t.dim_t()) as f64).sqrt();
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let u_range = u.columns(0, rank).into_owned();

    // Residualize the complement design against that column space.
    let g_tilde = &g_perp - &u_range * (u_range.transpose() * &g_perp);

    let lip = 2.0 * top_gram_eigenvalue(&g_tilde) / n * (1.0 + 1e-4);
    let f = |a: &SymMat| (&g_tilde * svec(a).coords()).norm_squared() / n;
    let grad = |a: &SymMat| {
        let w = g_tilde.transpose() * (&g_tilde * svec(a).coords()) * (2.0 / n);
        inv_svec(&SVec::new(a.dim(), w).expect("lengths match"))
    };
    let prox = |a: &SymMat, _: f64| proj_spectraplex(a, 1.0);
    let g = |_: &SymMat| 0.0;
    let spec = ProxGradSpec {
        grad: &grad,
        f: &f,
        prox: &prox,
        g: &g,
    };
    let out = prox_gradient(
        SymMat::identity(mr).scale(1.0 / mr as f64),
        &spec,
        &geom_opts(lip.max(f64::MIN_POSITIVE)),
    )?;
    Ok(GeomEstimate {
        value: out.objective,
        converged: out.converged,
    })
}

/// Largest eigenvalue of `D^T D` by power iteration.
fn top_gram_eigenvalue(d: &DMatrix<f64>) -> f64 {
    let cols = d.ncols();
    if cols == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(cols, 1.0 / (cols as f64).sqrt());
    let mut lambda = 0.0_f64;
    for _ in 0..10_000 {
        let w = d.transpose() * (d * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (norm - lambda).abs() <= 1e-8 * norm {
            return norm;
        }
        lambda = norm;
    }
    lambda
}

/// Restricted-eigenvalue estimate over `T`.
#[derive(Debug, Clone, Copy)]
pub struct PhiSqT {
    /// Best local minimum of the normalized energy over nuclear-norm-one
    /// elements of `T` (heuristic upper bound on the true constant).
    pub estimate: f64,
    /// `sigma_min^2` of the `T`-restricted design over `2r n`, valid because
    /// elements of `T` have rank at most `2r`.
    pub certified_lower: f64,
}

/// Minimal normalized measurement energy over `{D in T, ||D||_1 = 1}`.
///
/// The program is the reciprocal of maximizing the nuclear norm over the
/// energy ellipsoid `{c : c^T H c <= 1}` in tangent coordinates, a convex
/// maximization. Each local-search pass linearizes the nuclear norm at the
/// current point (its spectral-sign subgradient) and moves to the exact
/// maximizer of the linearization over the ellipsoid, which never decreases
/// the norm, so the pass terminates at a stationary point in a handful of
/// steps. Restarts diversify; the smallest feasible value found is the
/// estimate.
pub fn phi_sq_t(
    op: &SamplingOperator,
    t: &SubspaceT,
    restarts: usize,
    seed: RngSeed,
) -> Result<PhiSqT> {
    if restarts < 1 {
        return Err(invalid("restarts must be at least 1"));
    }
    if t.dim_m() != op.dim_m() {
        return Err(invalid("subspace dimension does not match the operator"));
    }
    let n = op.n() as f64;
    let dim_t = t.dim_t();
    let basis = t.basis_par_svec();
    let (d_t, _) = reduced_designs(op, t);
    let svd = d_t.clone().svd(false, true);
    let sv_max = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let sv_min = if op.n() >= dim_t {
        svd.singular_values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    } else {
        0.0
    };
    let certified_lower = sv_min * sv_min / (n * 2.0 * t.rank() as f64);

    // spectral decomposition of the reduced Gram H = D^T D / n
    let v_t = svd.v_t.as_ref().expect("v requested");
    let gram_eigvecs = v_t.transpose(); // columns are eigenvectors of H
    let gram_eigvals: Vec<f64> = svd.singular_values.iter().map(|&s| s * s / n).collect();
    let rank_cut = sv_max * sv_max / n * 1e-14;

    let to_matrix = |c: &DVector<f64>| -> SymMat {
        inv_svec(&SVec::new(t.dim_m(), &basis * c).expect("lengths match"))
    };
    let energy = |c: &DVector<f64>| -> f64 { (&d_t * c).norm_squared() / n };
    // subgradient of the nuclear norm at c, expressed in tangent coordinates
    let sign_subgradient = |c: &DVector<f64>| -> Result<DVector<f64>> {
        let eig = eig_sym(&to_matrix(c))?;
        let top = eig.eigvals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let vals: Vec<f64> = eig
            .eigvals
            .iter()
            .map(|&v| {
                if v.abs() <= 1e-14 * top.max(1.0) {
                    0.0
                } else {
                    v.signum()
                }
            })
            .collect();
        let sign_mat = eig.reconstruct_with(&vals);
        Ok(basis.transpose() * svec(&sign_mat).coords())
    };

    let mut best = f64::INFINITY;
    'restart: for restart in 0..restarts {
        // restart 0 starts from the flattest direction of the restricted
        // design; later restarts are random tangent elements
        let c0 = if restart == 0 && gram_eigvecs.ncols() == dim_t && dim_t > 0 {
            gram_eigvecs.column(dim_t - 1).into_owned()
        } else {
            let mut rng = seed.stream(&[0x9991, restart as u64]);
            DVector::from_fn(dim_t, |_, _| rng.sample::<f64, _>(StandardNormal))
        };
        let nuc0 = crate::symmat::nuclear_norm(&to_matrix(&c0))?;
        if nuc0 <= 1e-300 {
            continue;
        }
        let mut c = c0 / nuc0;
        let mut value = energy(&c);
        best = best.min(value);
        for _ in 0..200 {
            let s = sign_subgradient(&c)?;
            // maximize <s, w> over { w^T H w <= 1 } in H's eigenbasis;
            // the thin SVD only spans rank(H) directions and everything
            // outside it belongs to the nullspace
            let spanned = gram_eigvecs.ncols();
            let coeff = gram_eigvecs.transpose() * &s;
            let mut null_dir = &s - &gram_eigvecs * &coeff;
            let mut scaled = DVector::zeros(spanned);
            for j in 0..spanned {
                if gram_eigvals[j] <= rank_cut {
                    null_dir += gram_eigvecs.column(j) * coeff[j];
                } else {
                    scaled[j] = coeff[j] / gram_eigvals[j];
                }
            }
            if null_dir.norm() > 1e-10 * s.norm().max(1e-300) {
                // the subgradient sees the nullspace of the restricted
                // design: the norm is unbounded on the ellipsoid and the
                // constant is zero
                let nuc = crate::symmat::nuclear_norm(&to_matrix(&null_dir))?;
                if nuc > 1e-300 {
                    best = best.min(energy(&(null_dir / nuc)));
                    continue 'restart;
                }
            }
            let w = &gram_eigvecs * scaled;
            let denom = s.dot(&w);
            if denom <= 0.0 {
                break;
            }
            let w = w / denom.sqrt();
            let nuc = crate::symmat::nuclear_norm(&to_matrix(&w))?;
            if nuc <= 1e-300 {
                break;
            }
            let c_next = w / nuc;
            let value_next = energy(&c_next);
            let rel = (value - value_next).abs() / value.abs().max(1e-300);
            c = c_next;
            value = value_next;
            best = best.min(value);
            if rel <= 1e-12 {
                break;
            }
        }
    }
    // the certificate can exceed a non-global local minimum only through
    // rounding; clamp so reported pairs always satisfy the ordering
    Ok(PhiSqT {
        estimate: best,
        certified_lower: certified_lower.min(best),
    })
}

/// Maximal normalized correlation between the image of the nuclear ball of
/// `T` and the image of the trace-one slice of `T_perp`, by alternating
/// maximization (closed-form eigenvector step in the `T_perp` block,
/// projected gradient ascent in the `T` block). The returned value is a
/// feasible lower estimate of the true maximum.
pub fn mu_t(op: &SamplingOperator, t: &SubspaceT, restarts: usize, seed: RngSeed) -> Result<f64> {
    if restarts < 1 {
        return Err(invalid("restarts must be at least 1"));
    }
    if t.dim_m() != op.dim_m() {
        return Err(invalid("subspace dimension does not match the operator"));
    }
    let n = op.n() as f64;
    let m = op.dim_m();

    let correlate = |delta: &SymMat, delta_perp: &SymMat| -> Result<f64> {
        Ok(op.apply(delta)?.dot(&op.apply(delta_perp)?) / n)
    };
    // pull a tangent candidate into the feasible part of the nuclear ball
    let make_feasible = |raw: &SymMat| -> Result<SymMat> {
        let mut d = t.proj(raw, Component::Par)?;
        for _ in 0..100 {
            let ball = proj_nuclear_ball(&d, 1.0)?;
            let back = t.proj(&ball, Component::Par)?;
            let drift = back.sub(&d).frob_norm();
            d = back;
            if drift <= 1e-12 {
                break;
            }
        }
        let nuc = crate::symmat::nuclear_norm(&d)?;
        if nuc > 1.0 {
            d = d.scale(1.0 / nuc);
        }
        Ok(d)
    };

    let mut best = 0.0_f64;
    for restart in 0..restarts {
        let mut rng = seed.stream(&[0x9992, restart as u64]);
        let g = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut delta = make_feasible(&SymMat::outer(&g))?;
        let mut value = f64::NEG_INFINITY;
        for _ in 0..200 {
            // T_perp block: top eigenvector of the compressed back-projection
            let back = op.adjoint(&op.apply(&delta)?)?.scale(1.0 / n);
            let w = t.compress_perp(&back);
            let eig = eig_sym(&w)?;
            let v = eig.eigvecs.column(0).into_owned();
            let delta_perp = t.lift_perp(&SymMat::outer(&v));

            // T block: ascend the linear objective <V, delta>
            let v_dir = t.proj(&op.adjoint(&op.apply(&delta_perp)?)?.scale(1.0 / n), Component::Par)?;
            let mut inner_val = v_dir.frob_inner(&delta);
            let mut step = 1.0 / v_dir.frob_norm().max(1e-12);
            for _ in 0..200 {
                let cand = make_feasible(&delta.axpy(step, &v_dir))?;
                let cand_val = v_dir.frob_inner(&cand);
                if cand_val > inner_val + 1e-14 {
                    delta = cand;
                    inner_val = cand_val;
                } else {
                    step *= 0.5;
                    if step < 1e-10 {
                        break;
                    }
                }
            }

            let new_value = correlate(&delta, &delta_perp)?;
            if (new_value - value).abs() <= 1e-9 * value.abs().max(1.0) {
                value = new_value;
                break;
            }
            value = new_value;
        }
        best = best.max(value);
    }
    Ok(best.max(0.0))
}

/// Spectral norm of the noise back-projection, `||X*(eps)||_inf / n`.
pub fn lambda0(op: &SamplingOperator, eps: &DVector<f64>) -> Result<f64> {
    if eps.len() != op.n() {
        return Err(invalid("noise vector length must equal n"));
    }
    Ok(spectral_norm(&op.adjoint(eps)?)? / op.n() as f64)
}

/// The tail bound on `lambda0` and its ingredients.
#[derive(Debug, Clone, Copy)]
pub struct Lambda0Bound {
    /// `sigma sqrt((1 + mu) 2 log(2m) V_n^2 / n)`.
    pub bound: f64,
    /// `V_n^2 = || (1/n) sum X_i^2 ||_inf`, computed exactly.
    pub vn_sq: f64,
    /// Analytic ceiling for `V_n^2` under the sample-covariance ensemble,
    /// present only when the operator is tagged as such.
    pub wishart_ceiling: Option<f64>,
}

/// High-probability bound on the effective noise level.
pub fn lambda0_bound(op: &SamplingOperator, sigma: f64, tail_mu: f64) -> Result<Lambda0Bound> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma must be positive"));
    }
    if tail_mu < 0.0 {
        return Err(invalid("tail_mu must be nonnegative"));
    }
    let m = op.dim_m();
    let n = op.n() as f64;
    let mut acc = DMatrix::<f64>::zeros(m, m);
    for x in op.measurements() {
        acc += x.as_matrix() * x.as_matrix();
    }
    let vn_sq = spectral_norm(&SymMat::from_nearly_symmetric(acc / n))?;
    let bound = sigma * ((1.0 + tail_mu) * 2.0 * (2.0 * m as f64).ln() * vn_sq / n).sqrt();
    let wishart_ceiling = match op.kind() {
        EnsembleKind::Wishart { q } => {
            let q = q as f64;
            let mf = m as f64;
            let first = 1.0 + q.powf(-0.5) + (mf / (n * q)).sqrt();
            let second = 1.0 + (mf / q).sqrt() + (4.0 * (mf / q) * n.ln()).sqrt();
            Some(first.powi(2) * second.powi(2))
        }
        _ => None,
    };
    Ok(Lambda0Bound {
        bound,
        vn_sq,
        wishart_ceiling,
    })
}

/// Prediction-error bound
/// `max{2(1+R) l0 N1, 2 l0 N1 + 8 (l0 R / tau)^2}` for a certified pair
/// `(R, tau^2)`.
pub fn slow_rate_bound(norm1_target: f64, lambda0: f64, r_star: f64, tau_star_sq: f64) -> f64 {
    assert!(r_star > 1.0, "R must exceed 1");
    assert!(tau_star_sq > 0.0, "tau^2 must be positive");
    assert!(norm1_target >= 0.0 && lambda0 >= 0.0);
    let first = 2.0 * (1.0 + r_star) * lambda0 * norm1_target;
    let second = 2.0 * lambda0 * norm1_target + 8.0 * (lambda0 * r_star).powi(2) / tau_star_sq;
    first.max(second)
}

/// The grid variant: minimize the bound over caller-supplied `(R, tau^2(R))`
/// pairs, skipping pairs with a vanishing constant.
pub fn slow_rate_bound_min_over_grid(
    norm1_target: f64,
    lambda0: f64,
    pairs: &[(f64, f64)],
) -> Option<f64> {
    pairs
        .iter()
        .filter(|(r, tau_sq)| *r > 1.0 && *tau_sq > 0.0)
        .map(|&(r, tau_sq)| slow_rate_bound(norm1_target, lambda0, r, tau_sq))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
}

/// Estimation-error bound in nuclear norm from the three subspace constants.
/// Returns infinity when the separation or restricted-eigenvalue constant is
/// at or below the effective-zero threshold.
pub fn est_error_bound(lambda0: f64, tau_sq_t: f64, phi_sq_t: f64, mu_t: f64) -> f64 {
    if tau_sq_t <= EFFECTIVE_ZERO || phi_sq_t <= EFFECTIVE_ZERO {
        return f64::INFINITY;
    }
    let t1 = 8.0 * lambda0 * mu_t / (tau_sq_t * phi_sq_t) * (1.5 + mu_t / phi_sq_t)
        + 4.0 * lambda0 * (1.0 / phi_sq_t + 1.0 / tau_sq_t);
    let t2 = 8.0 * lambda0 / phi_sq_t * (1.0 + mu_t / phi_sq_t);
    let t3 = 8.0 * lambda0 / tau_sq_t;
    t1.max(t2).max(t3)
}

/// Everything the geometry pass produced for one operator (and optional
/// subspace / noise vector), ready for flat key-value serialization.
#[derive(Debug, Clone)]
pub struct GeometryReport {
    pub tau0_sq: f64,
    pub tau_sq_at_r: Vec<(f64, f64)>,
    pub tau_sq_t: Option<f64>,
    pub phi_sq_t_estimate: Option<f64>,
    pub phi_sq_t_certified_lower: Option<f64>,
    pub mu_t_estimate: Option<f64>,
    pub lambda0: Option<f64>,
    pub lambda0_bound: Option<f64>,
    pub vn_sq: f64,
    pub slow_rate_bound: Option<f64>,
    pub est_error_bound: Option<f64>,
    pub heuristic_flags: Vec<String>,
}

impl GeometryReport {
    /// One `name value` pair per line; absent quantities are omitted,
    /// infinities serialize as `inf`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let fmt = |v: f64| {
            if v.is_infinite() {
                "inf".to_string()
            } else {
                format!("{v:.16e}")
            }
        };
        let mut push = |name: &str, v: f64| {
            out.push_str(name);
            out.push(' ');
            out.push_str(&fmt(v));
            out.push('\n');
        };
        push("tau0_sq", self.tau0_sq);
        for (i, (r, v)) in self.tau_sq_at_r.iter().enumerate() {
            push(&format!("tau_sq_R_{i}_R"), *r);
            push(&format!("tau_sq_R_{i}_value"), *v);
        }
        if let Some(v) = self.tau_sq_t {
            push("tau_sq_T", v);
        }
        if let Some(v) = self.phi_sq_t_estimate {
            push("phi_sq_T_estimate", v);
        }
        if let Some(v) = self.phi_sq_t_certified_lower {
            push("phi_sq_T_certified_lower", v);
        }
        if let Some(v) = self.mu_t_estimate {
            push("mu_T_estimate", v);
        }
        if let Some(v) = self.lambda0 {
            push("lambda0", v);
        }
        if let Some(v) = self.lambda0_bound {
            push("lambda0_bound", v);
        }
        push("vn_sq", self.vn_sq);
        if let Some(v) = self.slow_rate_bound {
            push("slow_rate_bound", v);
        }
        if let Some(v) = self.est_error_bound {
            push("est_error_bound", v);
        }
        if !self.heuristic_flags.is_empty() {
            out.push_str("heuristic_flags ");
            out.push_str(&self.heuristic_flags.join(","));
            out.push('\n');
        }
        out
    }
}

/// Inputs for [`compute_geometry_report`].
#[derive(Debug, Clone)]
pub struct GeometryRequest<'a> {
    pub subspace: Option<&'a SubspaceT>,
    /// Realized noise vector; enables the `lambda0` entries.
    pub noise: Option<&'a DVector<f64>>,
    /// Noise standard deviation assumed by the tail bound.
    pub sigma: f64,
    pub tail_mu: f64,
    /// Radii for the two-slice separation sweep.
    pub r_grid: Vec<f64>,
    /// Nuclear norm of the target, for the prediction-error bound.
    pub norm1_target: Option<f64>,
    pub prop3_zeta: f64,
    pub restarts: usize,
    pub seed: RngSeed,
}

impl Default for GeometryRequest<'_> {
    fn default() -> Self {
        Self {
            subspace: None,
            noise: None,
            sigma: 1.0,
            tail_mu: 1.0,
            r_grid: vec![1.5, 2.0, 4.0],
            norm1_target: None,
            prop3_zeta: 2.0,
            restarts: 10,
            seed: RngSeed(0),
        }
    }
}

/// Run the full geometry pass for one operator.
pub fn compute_geometry_report(
    op: &SamplingOperator,
    req: &GeometryRequest<'_>,
) -> Result<GeometryReport> {
    let mut flags = Vec::new();
    let t0 = tau0_sq(op)?;
    if !t0.converged {
        flags.push("tau0_sq_not_converged".to_string());
    }
    if t0.value <= EFFECTIVE_ZERO {
        flags.push("tau0_sq_effective_zero".to_string());
    }

    let mut tau_sq_at_r = Vec::new();
    for &r in &req.r_grid {
        let tr = tau_sq_r(op, r)?;
        if !tr.converged {
            flags.push(format!("tau_sq_R_{r}_not_converged"));
        }
        tau_sq_at_r.push((r, tr.value));
    }

    let (tau_t, phi, mu) = match req.subspace {
        Some(t) => {
            let tt = tau_sq_t(op, t)?;
            if !tt.converged {
                flags.push("tau_sq_T_not_converged".to_string());
            }
            let p = phi_sq_t(op, t, req.restarts, req.seed)?;
            flags.push("phi_sq_T_estimate_heuristic".to_string());
            let mu = mu_t(op, t, req.restarts, req.seed)?;
            flags.push("mu_T_heuristic".to_string());
            (Some(tt.value), Some(p), Some(mu))
        }
        None => (None, None, None),
    };

    let l0 = match req.noise {
        Some(eps) => Some(lambda0(op, eps)?),
        None => None,
    };
    let lb = lambda0_bound(op, req.sigma, req.tail_mu)?;

    // prediction-error bound from the uniform-vector certificate, falling
    // back to the grid minimum when the certificate is rejected
    let slow = match req.norm1_target {
        Some(n1) => {
            let l0v = l0.unwrap_or(lb.bound);
            let uniform =
                DVector::from_element(op.n(), 1.0 / (op.n() as f64).sqrt());
            match check_prop3(op, &uniform, req.prop3_zeta)? {
                Some(cert) => Some(slow_rate_bound(n1, l0v, cert.r_star, cert.tau_star_sq)),
                None => slow_rate_bound_min_over_grid(n1, l0v, &tau_sq_at_r),
            }
        }
        None => None,
    };

    let est = match (l0, tau_t, &phi, mu) {
        (Some(l0v), Some(tt), Some(p), Some(muv)) => {
            Some(est_error_bound(l0v, tt, p.certified_lower, muv))
        }
        _ => None,
    };

    Ok(GeometryReport {
        tau0_sq: t0.value,
        tau_sq_at_r,
        tau_sq_t: tau_t,
        phi_sq_t_estimate: phi.as_ref().map(|p| p.estimate),
        phi_sq_t_certified_lower: phi.as_ref().map(|p| p.certified_lower),
        mu_t_estimate: mu,
        lambda0: l0,
        lambda0_bound: Some(lb.bound),
        vn_sq: lb.vn_sq,
        slow_rate_bound: slow,
        est_error_bound: est,
        heuristic_flags: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{gen_goe, gen_orthonormal_basis_design, gen_wishart, SamplingOperator};
    use nalgebra::DMatrix;

    fn single_identity_op(m: usize) -> SamplingOperator {
        // one measurement sqrt(n) I with n = 1
        SamplingOperator::from_measurements(vec![SymMat::identity(m)]).unwrap()
    }

    fn random_subspace(m: usize, r: usize, seed: u64) -> SubspaceT {
        let mut rng = RngSeed(seed).stream(&[0x77]);
        let g = DMatrix::from_fn(m, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        SubspaceT::from_parallel_basis(g.qr().q()).unwrap()
    }

    #[test]
    fn test_tau0_single_identity() {
        // X(D) = tr(D) = 1 on the whole slice
        let est = tau0_sq(&single_identity_op(3)).unwrap();
        assert!((est.value - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn test_tau0_orthonormal_design() {
        // energy is ||D||_F^2 / delta, minimized by the flat spectrum
        let m = 4;
        let op = gen_orthonormal_basis_design(m);
        let expect = 1.0 / (m as f64 * op.n() as f64);
        let est = tau0_sq(&op).unwrap();
        assert!((est.value - expect).abs() <= 1e-8, "got {}", est.value);
    }

    #[test]
    fn test_tau0_goe_undersampled_hits_zero() {
        // below half the ambient dimension a PSD direction is invisible
        let op = gen_goe(10, 20, RngSeed(5)); // delta_10 = 55, n < 27
        let est = tau0_sq(&op).unwrap();
        assert!(est.value <= EFFECTIVE_ZERO, "got {}", est.value);
    }

    #[test]
    fn test_tau_sq_r_single_identity() {
        let op = single_identity_op(3);
        for r in [1.5, 2.0, 4.0] {
            let out = tau_sq_r(&op, r).unwrap();
            assert!(
                (out.value - (r - 1.0).powi(2)).abs() <= 1e-6,
                "R={r} value {}",
                out.value
            );
            // dual certificate is tight here
            assert!(out.dual_value <= out.value + 1e-6);
            assert!((out.dual_value - out.value).abs() <= 1e-5);
            assert!((out.primal.0.trace() - r).abs() <= 1e-8);
            assert!((out.primal.1.trace() - 1.0).abs() <= 1e-8);
        }
        assert!(tau_sq_r(&op, 1.0).is_err());
    }

    #[test]
    fn test_tau_sq_r_weak_duality_and_chain() {
        for seed in 0..5 {
            let op = gen_wishart(5, 40, 1, RngSeed(seed));
            let t0 = tau0_sq(&op).unwrap().value;
            for r in [1.5, 2.0, 4.0] {
                let out = tau_sq_r(&op, r).unwrap();
                assert!(out.dual_value <= out.value + 1e-6);
                // the two-slice distance is dominated by scaling one point
                assert!(out.value <= (r - 1.0).powi(2) * t0 + 1e-8);
            }
        }
    }

    #[test]
    fn test_tau_sq_r_dual_scaling_inequality() {
        // for R >= R0: tau^2(X, R) >= (R/R0)^2 tau^2(X, R0)
        let op = gen_wishart(4, 30, 1, RngSeed(11));
        let base = tau_sq_r(&op, 2.0).unwrap().value;
        for r in [2.5, 3.0, 4.0] {
            let v = tau_sq_r(&op, r).unwrap().value;
            assert!(v >= (r / 2.0).powi(2) * base * (1.0 - 1e-6) - 1e-12);
        }
    }

    #[test]
    fn test_check_prop3_worked_example() {
        let op = single_identity_op(4);
        let a = DVector::from_row_slice(&[1.0]);
        let cert = check_prop3(&op, &a, 2.0).unwrap().unwrap();
        assert!((cert.r_star - 2.0).abs() <= 1e-12);
        assert!((cert.tau_star_sq - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn test_check_prop3_uniform_vector_is_gram_mean() {
        let op = gen_wishart(4, 50, 1, RngSeed(3));
        let n = op.n();
        let a = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let cert = check_prop3(&op, &a, 2.0).unwrap().unwrap();
        // X*(a)/sqrt(n) equals the average measurement
        let mut mean = DMatrix::<f64>::zeros(4, 4);
        for x in op.measurements() {
            mean += x.as_matrix();
        }
        mean /= n as f64;
        let eig = eig_sym(&SymMat::from_nearly_symmetric(mean)).unwrap();
        assert!((cert.phi_max - eig.eigvals[0]).abs() <= 1e-10);
        assert!((cert.phi_min - eig.eigvals[3]).abs() <= 1e-10);
    }

    #[test]
    fn test_check_prop3_rejections() {
        let op = single_identity_op(3);
        // zero vector has phi_min = 0
        assert!(check_prop3(&op, &DVector::from_row_slice(&[0.0]), 2.0)
            .unwrap()
            .is_none());
        // vector outside the unit ball is a precondition violation
        assert!(check_prop3(&op, &DVector::from_row_slice(&[1.5]), 2.0).is_err());
    }

    #[test]
    fn test_tau_sq_t_orthonormal_design() {
        // orthogonality forces Theta = 0 and the flattest perp spectrum
        let m = 5;
        let r = 2;
        let op = gen_orthonormal_basis_design(m);
        let t = random_subspace(m, r, 1);
        let expect = 1.0 / ((m - r) as f64 * op.n() as f64);
        let est = tau_sq_t(&op, &t).unwrap();
        assert!((est.value - expect).abs() <= 1e-8, "got {}", est.value);
    }

    #[test]
    fn test_tau_sq_t_nullspace_gives_zero() {
        // keep only the measurements that see T: the perp slice is invisible
        let m = 4;
        let t = SubspaceT::from_parallel_basis(DMatrix::from_fn(m, 1, |j, _| {
            if j == 0 {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        let full = gen_orthonormal_basis_design(m);
        let kept: Vec<SymMat> = full
            .measurements()
            .iter()
            .filter(|x| x.get(0, 0) != 0.0 || (0..m).any(|k| x.get(0, k) != 0.0))
            .cloned()
            .collect();
        let op = SamplingOperator::from_measurements(kept).unwrap();
        let est = tau_sq_t(&op, &t).unwrap();
        assert!(est.value <= 1e-10, "got {}", est.value);
    }

    #[test]
    fn test_tau_sq_t_wishart_positive_when_oversampled() {
        let m = 10;
        let t = random_subspace(m, 1, 7);
        let mut positives = 0;
        for seed in 0..10 {
            let n = (1.1 * sym_dim(m) as f64).round() as usize;
            let op = gen_wishart(m, n, 1, RngSeed(100 + seed));
            if tau_sq_t(&op, &t).unwrap().value > EFFECTIVE_ZERO {
                positives += 1;
            }
        }
        assert!(positives >= 9, "only {positives}/10 positive");
    }

    #[test]
    fn test_phi_sq_t_orthonormal_design() {
        // rank-two balanced elements are flattest: estimate = certified = 1/(2 delta)
        let m = 5;
        let op = gen_orthonormal_basis_design(m);
        let t = random_subspace(m, 1, 3);
        let out = phi_sq_t(&op, &t, 5, RngSeed(1)).unwrap();
        let expect = 1.0 / (2.0 * op.n() as f64);
        assert!((out.estimate - expect).abs() <= 1e-7, "estimate {}", out.estimate);
        assert!((out.certified_lower - expect).abs() <= 1e-12);
        assert!(out.certified_lower <= out.estimate + 1e-9);
    }

    #[test]
    fn test_phi_sq_t_nullspace_design() {
        // removing the rows that see T leaves its image at zero
        let m = 4;
        let t = SubspaceT::from_parallel_basis(DMatrix::from_fn(m, 1, |j, _| {
            if j == 0 {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        let full = gen_orthonormal_basis_design(m);
        let kept: Vec<SymMat> = full
            .measurements()
            .iter()
            .filter(|x| (0..m).all(|k| x.get(0, k) == 0.0))
            .cloned()
            .collect();
        let op = SamplingOperator::from_measurements(kept).unwrap();
        let out = phi_sq_t(&op, &t, 3, RngSeed(2)).unwrap();
        assert!(out.estimate <= 1e-10, "estimate {}", out.estimate);
        assert_eq!(out.certified_lower, 0.0);
    }

    #[test]
    fn test_mu_t_orthonormal_design_is_zero() {
        let op = gen_orthonormal_basis_design(5);
        let t = random_subspace(5, 2, 9);
        let v = mu_t(&op, &t, 3, RngSeed(3)).unwrap();
        assert!(v.abs() <= 1e-9, "got {v}");
    }

    #[test]
    fn test_mu_t_scaling_and_nonnegativity() {
        let m = 5;
        let t = random_subspace(m, 1, 13);
        let op = gen_wishart(m, sym_dim(m), 1, RngSeed(17));
        let v1 = mu_t(&op, &t, 4, RngSeed(5)).unwrap();
        assert!(v1 >= 0.0);
        assert!(v1.is_finite());
        let op3 = op.scaled(3.0).unwrap();
        let v3 = mu_t(&op3, &t, 4, RngSeed(5)).unwrap();
        assert!((v3 - 9.0 * v1).abs() <= 1e-4 * (1.0 + v3), "v1={v1} v3={v3}");
    }

    #[test]
    fn test_lambda0_examples() {
        let op = single_identity_op(2);
        let v = lambda0(&op, &DVector::from_row_slice(&[3.0])).unwrap();
        assert!((v - 3.0).abs() <= 1e-12);
        assert_eq!(lambda0(&op, &DVector::from_row_slice(&[0.0])).unwrap(), 0.0);
        assert!(lambda0(&op, &DVector::zeros(2)).is_err());

        // random check against the eigenvalue oracle
        let op = gen_goe(4, 9, RngSeed(23));
        let mut rng = RngSeed(29).stream(&[1]);
        let eps = DVector::from_fn(9, |_, _| rng.sample::<f64, _>(StandardNormal));
        let direct = lambda0(&op, &eps).unwrap();
        let eig = eig_sym(&op.adjoint(&eps).unwrap()).unwrap();
        let oracle = eig.eigvals.iter().fold(0.0_f64, |a, v| a.max(v.abs())) / 9.0;
        assert!((direct - oracle).abs() <= 1e-10);
    }

    #[test]
    fn test_lambda0_bound_examples() {
        let op = single_identity_op(2);
        let out = lambda0_bound(&op, 1.0, 0.0).unwrap();
        assert!((out.vn_sq - 1.0).abs() <= 1e-12);

        // m = 1, n = 1, X = (1): bound = sqrt(2 log 2)
        let op1 = SamplingOperator::from_measurements(vec![SymMat::identity(1)]).unwrap();
        let out1 = lambda0_bound(&op1, 1.0, 0.0).unwrap();
        assert!((out1.bound - (2.0 * (2.0_f64).ln()).sqrt()).abs() <= 1e-12);
        assert!(out1.wishart_ceiling.is_none());

        let opw = gen_wishart(4, 10, 1, RngSeed(31));
        assert!(lambda0_bound(&opw, 1.0, 0.0).unwrap().wishart_ceiling.is_some());
    }

    #[test]
    fn test_lambda0_tail_bound_monte_carlo() {
        let op = gen_wishart(10, 80, 1, RngSeed(37));
        let bound = lambda0_bound(&op, 1.0, 1.0).unwrap().bound;
        let mut hits = 0;
        for rep in 0..50 {
            let mut rng = RngSeed(41).stream(&[rep]);
            let eps = DVector::from_fn(80, |_, _| rng.sample::<f64, _>(StandardNormal));
            if lambda0(&op, &eps).unwrap() <= bound {
                hits += 1;
            }
        }
        assert!(hits >= 49, "bound held in only {hits}/50 draws");
    }

    #[test]
    fn test_slow_rate_bound_arithmetic() {
        let v = slow_rate_bound(1.0, 0.1, 2.0, 1.0);
        assert!((v - 0.6).abs() <= 1e-12);
        assert_eq!(slow_rate_bound(1.0, 0.0, 2.0, 1.0), 0.0);
        let grid = slow_rate_bound_min_over_grid(1.0, 0.1, &[(2.0, 1.0), (3.0, 2.0)]).unwrap();
        assert!(grid <= v + 1e-12);
    }

    #[test]
    fn test_est_error_bound_arithmetic() {
        let v = est_error_bound(0.1, 1.0, 1.0, 0.0);
        assert!((v - 0.8).abs() <= 1e-12);
        assert!(est_error_bound(0.1, 0.0, 1.0, 0.0).is_infinite());
        assert!(est_error_bound(0.1, 1.0, 1e-7, 0.0).is_infinite());
        assert_eq!(est_error_bound(0.0, 1.0, 1.0, 0.5), 0.0);
    }

    #[test]
    fn test_geometry_report_text() {
        let op = gen_wishart(4, 30, 1, RngSeed(43));
        let t = random_subspace(4, 1, 19);
        let mut rng = RngSeed(47).stream(&[2]);
        let eps = DVector::from_fn(30, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
        let req = GeometryRequest {
            subspace: Some(&t),
            noise: Some(&eps),
            norm1_target: Some(1.0),
            restarts: 2,
            r_grid: vec![2.0],
            ..GeometryRequest::default()
        };
        let report = compute_geometry_report(&op, &req).unwrap();
        let text = report.to_text();
        for key in [
            "tau0_sq ",
            "tau_sq_R_0_R ",
            "tau_sq_T ",
            "phi_sq_T_estimate ",
            "phi_sq_T_certified_lower ",
            "mu_T_estimate ",
            "lambda0 ",
            "vn_sq ",
            "slow_rate_bound ",
            "est_error_bound ",
        ] {
            assert!(text.contains(key), "missing `{key}` in:\n{text}");
        }
        let phi_est = report.phi_sq_t_estimate.unwrap();
        let phi_cert = report.phi_sq_t_certified_lower.unwrap();
        assert!(phi_cert <= phi_est + 1e-9);
    }

    use crate::rng::RngSeed;
    use rand::Rng;
    use rand_distr::StandardNormal;
}
