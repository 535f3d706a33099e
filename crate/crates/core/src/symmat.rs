//! Symmetric matrix values and the spectral toolbox built on them.
//!
//! Everything downstream (solvers, geometry constants, experiment harnesses)
//! manipulates dense real symmetric matrices through this module: the
//! [`SymMat`] value type, the isometric vectorization [`svec`]/[`inv_svec`],
//! eigendecompositions, Schatten norms, and the Frobenius projections onto
//! the positive semidefinite cone, the fixed-trace spectraplex, and the
//! nuclear-norm ball.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, numeric, Result};

/// Relative tolerance for accepting an input matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues below `RANK_TOL * spectral_norm` are treated as zero when
/// deciding ranks.
pub const RANK_TOL: f64 = 1e-10;

/// Iteration cap handed to the internal eigensolver.
const EIG_MAX_SWEEPS: usize = 100_000;

/// Dimension of the space of symmetric `m x m` matrices, `m(m+1)/2`.
pub fn sym_dim(m: usize) -> usize {
    m * (m + 1) / 2
}

/// A dense real symmetric matrix.
///
/// Construction symmetrizes the input as `(M + M^T)/2` after checking that
/// the asymmetry is within [`SYMMETRY_TOL`] relative to the largest entry,
/// so every stored value is exactly symmetric. Values are immutable; all
/// operations return fresh matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    dim: usize,
    data: DMatrix<f64>,
}

impl SymMat {
    /// Validate and symmetrize a square matrix.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.nrows() != data.ncols() {
            return Err(invalid(format!(
                "expected a nonempty square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let mut max_abs = 0.0_f64;
        for &v in data.iter() {
            if !v.is_finite() {
                return Err(invalid("matrix has non-finite entries"));
            }
            max_abs = max_abs.max(v.abs());
        }
        let mut asym = 0.0_f64;
        for j in 0..data.nrows() {
            for k in (j + 1)..data.ncols() {
                asym = asym.max((data[(j, k)] - data[(k, j)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * (1.0 + max_abs) {
            return Err(invalid(format!(
                "matrix is not symmetric: max asymmetry {asym:.3e} exceeds tolerance"
            )));
        }
        Ok(Self::from_nearly_symmetric(data))
    }

    /// Symmetrize without the asymmetry check. For matrices that are
    /// symmetric by construction up to rounding (sums of symmetric matrices,
    /// `V diag(w) V^T` reconstructions, ...).
    pub(crate) fn from_nearly_symmetric(mut data: DMatrix<f64>) -> Self {
        let m = data.nrows();
        for j in 0..m {
            for k in (j + 1)..m {
                let avg = 0.5 * (data[(j, k)] + data[(k, j)]);
                data[(j, k)] = avg;
                data[(k, j)] = avg;
            }
        }
        Self { dim: m, data }
    }

    /// Build from a function of the (row, col) index; only `j <= k` is
    /// evaluated and mirrored.
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = DMatrix::zeros(m, m);
        for j in 0..m {
            for k in j..m {
                let v = f(j, k);
                data[(j, k)] = v;
                data[(k, j)] = v;
            }
        }
        Self { dim: m, data }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            dim: m,
            data: DMatrix::zeros(m, m),
        }
    }

    pub fn identity(m: usize) -> Self {
        Self {
            dim: m,
            data: DMatrix::identity(m, m),
        }
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |j, k| if j == k { diag[j] } else { 0.0 })
    }

    /// The symmetric rank-one matrix `v v^T`.
    pub fn outer(v: &DVector<f64>) -> Self {
        let m = v.len();
        Self::from_fn(m, |j, k| v[j] * v[k])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[(j, k)]
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Frobenius inner product `tr(A B)`.
    pub fn frob_inner(&self, other: &SymMat) -> f64 {
        self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_inner(self).max(0.0).sqrt()
    }

    pub fn scale(&self, c: f64) -> SymMat {
        SymMat {
            dim: self.dim,
            data: &self.data * c,
        }
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        SymMat {
            dim: self.dim,
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        SymMat {
            dim: self.dim,
            data: &self.data - &other.data,
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &SymMat) -> SymMat {
        SymMat {
            dim: self.dim,
            data: &self.data + &other.data * c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Number of eigenvalues exceeding `RANK_TOL` times the spectral norm.
    pub fn rank_by_eig(&self) -> Result<usize> {
        let eig = eig_sym(self)?;
        let top = eig.eigvals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if top == 0.0 {
            return Ok(0);
        }
        Ok(eig
            .eigvals
            .iter()
            .filter(|v| v.abs() > RANK_TOL * top)
            .count())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = eig_sym(self)?;
        Ok(eig.eigvals[self.dim - 1])
    }

    /// Best rank-`r` approximation by truncating the eigendecomposition to
    /// the `r` eigenvalues of largest magnitude.
    pub fn truncate_rank(&self, r: usize) -> Result<SymMat> {
        let eig = eig_sym(self)?;
        let mut idx: Vec<usize> = (0..self.dim).collect();
        idx.sort_by(|&a, &b| {
            eig.eigvals[b]
                .abs()
                .partial_cmp(&eig.eigvals[a].abs())
                .unwrap()
        });
        let mut vals = vec![0.0; self.dim];
        for &i in idx.iter().take(r.min(self.dim)) {
            vals[i] = eig.eigvals[i];
        }
        Ok(eig.reconstruct_with(&vals))
    }
}

/// The image of a symmetric matrix under the symmetric vectorization.
///
/// Coordinates are ordered row-major over the upper triangle with
/// off-diagonal entries scaled by `sqrt(2)`, so the map is an isometry
/// between the Frobenius and Euclidean inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct SVec {
    dim_m: usize,
    coords: DVector<f64>,
}

impl SVec {
    pub fn new(dim_m: usize, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != sym_dim(dim_m) {
            return Err(invalid(format!(
                "svec for m={} must have length {}, got {}",
                dim_m,
                sym_dim(dim_m),
                coords.len()
            )));
        }
        Ok(Self { dim_m, coords })
    }

    /// Reconstruct the matrix dimension from a coordinate length, if the
    /// length is of the form `m(m+1)/2`.
    pub fn dim_from_len(len: usize) -> Option<usize> {
        let m = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
        (sym_dim(m) == len).then_some(m)
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }
}

/// Symmetric vectorization: `(s_11, sqrt2 s_12, ..., sqrt2 s_1m, s_22, ...)`.
pub fn svec(m: &SymMat) -> SVec {
    let d = m.dim();
    let mut coords = DVector::zeros(sym_dim(d));
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut p = 0;
    for j in 0..d {
        coords[p] = m.get(j, j);
        p += 1;
        for k in (j + 1)..d {
            coords[p] = sqrt2 * m.get(j, k);
            p += 1;
        }
    }
    SVec {
        dim_m: d,
        coords,
    }
}

/// Inverse of [`svec`].
pub fn inv_svec(v: &SVec) -> SymMat {
    let d = v.dim_m;
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut data = DMatrix::zeros(d, d);
    let mut p = 0;
    for j in 0..d {
        data[(j, j)] = v.coords[p];
        p += 1;
        for k in (j + 1)..d {
            let x = v.coords[p] * inv_sqrt2;
            data[(j, k)] = x;
            data[(k, j)] = x;
            p += 1;
        }
    }
    SymMat { dim: d, data }
}

/// Parse raw coordinates of triangular length into a matrix.
pub fn inv_svec_raw(coords: DVector<f64>) -> Result<SymMat> {
    let m = SVec::dim_from_len(coords.len()).ok_or_else(|| {
        invalid(format!(
            "length {} is not of the form m(m+1)/2",
            coords.len()
        ))
    })?;
    Ok(inv_svec(&SVec {
        dim_m: m,
        coords,
    }))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending
/// with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
}

impl EigDecomp {
    /// `V diag(vals) V^T` for replacement eigenvalues `vals`.
    pub fn reconstruct_with(&self, vals: &[f64]) -> SymMat {
        debug_assert_eq!(vals.len(), self.eigvecs.nrows());
        let mut scaled = self.eigvecs.clone();
        for (j, &v) in vals.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        SymMat::from_nearly_symmetric(&scaled * self.eigvecs.transpose())
    }

    pub fn reconstruct(&self) -> SymMat {
        self.reconstruct_with(self.eigvals.as_slice())
    }
}

/// Eigendecomposition via tridiagonalization + implicit QL.
///
/// Deterministic for a fixed input. Fails with a numeric error carrying the
/// sweep cap if the internal iteration does not converge.
pub fn eig_sym(m: &SymMat) -> Result<EigDecomp> {
    let se = nalgebra::SymmetricEigen::try_new(m.data.clone(), f64::EPSILON, EIG_MAX_SWEEPS)
        .ok_or_else(|| {
            numeric(format!(
                "eigensolver did not converge within {EIG_MAX_SWEEPS} sweeps"
            ))
        })?;
    let d = m.dim();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
    let mut eigvals = DVector::zeros(d);
    let mut eigvecs = DMatrix::zeros(d, d);
    for (new, &old) in idx.iter().enumerate() {
        eigvals[new] = se.eigenvalues[old];
        eigvecs.set_column(new, &se.eigenvectors.column(old));
    }
    Ok(EigDecomp { eigvals, eigvecs })
}

/// Which Schatten norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schatten {
    /// Sum of absolute eigenvalues (nuclear norm).
    One,
    /// Frobenius norm.
    Two,
    /// Largest absolute eigenvalue (spectral norm).
    Inf,
}

/// Schatten norm of a symmetric matrix.
pub fn schatten_norm(m: &SymMat, q: Schatten) -> Result<f64> {
    match q {
        // Frobenius is eigenvalue-free.
        Schatten::Two => Ok(m.frob_norm()),
        Schatten::One => {
            let eig = eig_sym(m)?;
            Ok(eig.eigvals.iter().map(|v| v.abs()).sum())
        }
        Schatten::Inf => {
            let eig = eig_sym(m)?;
            Ok(eig.eigvals.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
        }
    }
}

pub fn nuclear_norm(m: &SymMat) -> Result<f64> {
    schatten_norm(m, Schatten::One)
}

pub fn spectral_norm(m: &SymMat) -> Result<f64> {
    schatten_norm(m, Schatten::Inf)
}

/// Frobenius projection onto the positive semidefinite cone: clip negative
/// eigenvalues to zero.
pub fn proj_psd(m: &SymMat) -> Result<SymMat> {
    let eig = eig_sym(m)?;
    if eig.eigvals.iter().all(|&v| v >= 0.0) {
        return Ok(m.clone());
    }
    let vals: Vec<f64> = eig.eigvals.iter().map(|&v| v.max(0.0)).collect();
    Ok(eig.reconstruct_with(&vals))
}

/// Split into the positive semidefinite and negative semidefinite parts of
/// the eigendecomposition: `m = pos + neg` with `<pos, neg> = 0`.
pub fn pos_neg_parts(m: &SymMat) -> Result<(SymMat, SymMat)> {
    let eig = eig_sym(m)?;
    let pos: Vec<f64> = eig.eigvals.iter().map(|&v| v.max(0.0)).collect();
    let neg: Vec<f64> = eig.eigvals.iter().map(|&v| v.min(0.0)).collect();
    Ok((eig.reconstruct_with(&pos), eig.reconstruct_with(&neg)))
}

/// Frobenius projection onto `{ S >= 0, tr(S) = t }`: the eigenvalues are
/// projected onto the simplex of radius `t`, eigenvectors are kept.
pub fn proj_spectraplex(m: &SymMat, t: f64) -> Result<SymMat> {
    if !(t > 0.0) {
        return Err(invalid(format!("spectraplex radius must be positive, got {t}")));
    }
    let eig = eig_sym(m)?;
    let vals = project_simplex(eig.eigvals.as_slice(), t);
    Ok(eig.reconstruct_with(&vals))
}

/// Frobenius projection onto the nuclear-norm ball of the given radius:
/// eigenvalues are projected onto the l1 ball, eigenvectors are kept.
pub fn proj_nuclear_ball(m: &SymMat, radius: f64) -> Result<SymMat> {
    if !(radius > 0.0) {
        return Err(invalid(format!(
            "nuclear ball radius must be positive, got {radius}"
        )));
    }
    let eig = eig_sym(m)?;
    let nuc: f64 = eig.eigvals.iter().map(|v| v.abs()).sum();
    if nuc <= radius {
        return Ok(m.clone());
    }
    let vals = project_l1_ball(eig.eigvals.as_slice(), radius);
    Ok(eig.reconstruct_with(&vals))
}

/// Soft-threshold the eigenvalues at level `t >= 0`.
pub fn eig_soft_threshold(m: &SymMat, t: f64) -> Result<SymMat> {
    let eig = eig_sym(m)?;
    let vals: Vec<f64> = eig
        .eigvals
        .iter()
        .map(|&v| v.signum() * (v.abs() - t).max(0.0))
        .collect();
    Ok(eig.reconstruct_with(&vals))
}

/// Shift the eigenvalues down by `t >= 0` and clip at zero. This is the
/// proximal map of `t * tr(.)` restricted to the positive semidefinite cone.
pub fn eig_shift_clip(m: &SymMat, t: f64) -> Result<SymMat> {
    let eig = eig_sym(m)?;
    let vals: Vec<f64> = eig.eigvals.iter().map(|&v| (v - t).max(0.0)).collect();
    Ok(eig.reconstruct_with(&vals))
}

/// Euclidean projection of a vector onto the simplex `{x >= 0, sum x = t}`
/// by sort and threshold. Exact in `O(d log d)`.
pub fn project_simplex(y: &[f64], t: f64) -> Vec<f64> {
    assert!(t > 0.0, "simplex radius must be positive");
    let mut u: Vec<f64> = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let cand = (cumsum - t) / (j + 1) as f64;
        if uj - cand > 0.0 {
            rho = j + 1;
            theta = cand;
        }
    }
    debug_assert!(rho > 0);
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Euclidean projection of a vector onto the l1 ball of the given radius.
pub fn project_l1_ball(y: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius > 0.0, "l1 radius must be positive");
    let norm1: f64 = y.iter().map(|v| v.abs()).sum();
    if norm1 <= radius {
        return y.to_vec();
    }
    let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let proj = project_simplex(&abs, radius);
    y.iter()
        .zip(proj.iter())
        .map(|(&v, &p)| v.signum() * p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn random_sym(m: usize, seed: u64) -> SymMat {
        let mut rng = RngSeed(seed).stream(&[0xfeed]);
        SymMat::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_psd(m: usize, seed: u64) -> SymMat {
        let mut rng = RngSeed(seed).stream(&[0xfacade]);
        let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        SymMat::from_nearly_symmetric(&g * g.transpose())
    }

    #[test]
    fn test_new_rejects_nonfinite_and_asymmetric() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(SymMat::new(bad).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(SymMat::new(asym).is_err());
    }

    #[test]
    fn test_new_symmetrizes_tiny_asymmetry() {
        let eps = 1e-14;
        let m = SymMat::new(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0 + eps, 2.0 - eps, 3.0],
        ))
        .unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn test_svec_examples() {
        // [[1,2],[2,3]] -> (1, 2 sqrt2, 3)
        let m = SymMat::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0])).unwrap();
        let v = svec(&m);
        let expect = [1.0, 2.0 * std::f64::consts::SQRT_2, 3.0];
        for (a, b) in v.coords().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        // identity -> (1, 0, 1)
        let v = svec(&SymMat::identity(2));
        assert_eq!(v.coords().as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn test_svec_isometry_against_entrywise_sum() {
        for seed in 0..5 {
            let a = random_sym(5, seed);
            let b = random_sym(5, seed + 100);
            // brute-force double sum for the Frobenius inner product
            let mut brute = 0.0;
            for j in 0..5 {
                for k in 0..5 {
                    brute += a.get(j, k) * b.get(j, k);
                }
            }
            let dot = svec(&a).coords().dot(svec(&b).coords());
            assert!((brute - dot).abs() <= 1e-10 * (1.0 + brute.abs()));
        }
    }

    #[test]
    fn test_inv_svec_examples() {
        let v = SVec::new(2, DVector::from_row_slice(&[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(inv_svec(&v), SymMat::identity(2));
        let v = SVec::new(
            2,
            DVector::from_row_slice(&[1.0, 2.0 * std::f64::consts::SQRT_2, 3.0]),
        )
        .unwrap();
        let m = inv_svec(&v);
        assert!((m.get(0, 1) - 2.0).abs() < 1e-15);
        assert!((m.get(1, 1) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn test_svec_round_trip() {
        let mut rng = RngSeed(3).stream(&[1]);
        let v = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = inv_svec_raw(v.clone()).unwrap();
        let back = svec(&m);
        for (a, b) in back.coords().iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let m2 = inv_svec(&svec(&random_sym(5, 9)));
        let m1 = random_sym(5, 9);
        assert!(m1.sub(&m2).max_abs() < 1e-12);
    }

    #[test]
    fn test_inv_svec_rejects_bad_length() {
        assert!(inv_svec_raw(DVector::zeros(4)).is_err());
        assert!(inv_svec_raw(DVector::zeros(7)).is_err());
    }

    #[test]
    fn test_eig_sym_examples() {
        let e = eig_sym(&SymMat::from_diagonal(&[3.0, -1.0])).unwrap();
        assert!((e.eigvals[0] - 3.0).abs() < 1e-12);
        assert!((e.eigvals[1] + 1.0).abs() < 1e-12);
        let e = eig_sym(&SymMat::identity(4)).unwrap();
        assert!(e.eigvals.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn test_eig_sym_reconstruction_and_orthonormality() {
        let m = random_sym(6, 17);
        let e = eig_sym(&m).unwrap();
        // eigenvalues non-increasing
        for j in 1..6 {
            assert!(e.eigvals[j] <= e.eigvals[j - 1] + 1e-14);
        }
        let vtv = e.eigvecs.transpose() * &e.eigvecs;
        let id = DMatrix::<f64>::identity(6, 6);
        assert!((vtv - id).abs().max() <= 1e-10);
        let resid = e.reconstruct().sub(&m).max_abs();
        assert!(resid <= 1e-9 * (1.0 + m.max_abs()));
    }

    #[test]
    fn test_schatten_examples() {
        let m = SymMat::from_diagonal(&[3.0, -4.0]);
        assert!((schatten_norm(&m, Schatten::One).unwrap() - 7.0).abs() < 1e-12);
        assert!((schatten_norm(&m, Schatten::Two).unwrap() - 5.0).abs() < 1e-12);
        assert!((schatten_norm(&m, Schatten::Inf).unwrap() - 4.0).abs() < 1e-12);
        let z = SymMat::zeros(3);
        for q in [Schatten::One, Schatten::Two, Schatten::Inf] {
            assert_eq!(schatten_norm(&z, q).unwrap(), 0.0);
        }
    }

    #[test]
    fn test_frobenius_matches_entrywise() {
        let m = random_sym(5, 23);
        let brute: f64 = (0..5)
            .flat_map(|j| (0..5).map(move |k| (j, k)))
            .map(|(j, k)| m.get(j, k) * m.get(j, k))
            .sum::<f64>()
            .sqrt();
        assert!((schatten_norm(&m, Schatten::Two).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn test_proj_psd_examples() {
        let p = proj_psd(&SymMat::from_diagonal(&[2.0, -3.0])).unwrap();
        assert!(p.sub(&SymMat::from_diagonal(&[2.0, 0.0])).max_abs() < 1e-12);
        let psd = random_psd(4, 2);
        assert!(proj_psd(&psd).unwrap().sub(&psd).max_abs() < 1e-10);
    }

    #[test]
    fn test_proj_psd_variational_inequality() {
        // <M - P(M), Q - P(M)> <= 0 for any PSD Q characterizes the projection.
        let m = random_sym(4, 5);
        let p = proj_psd(&m).unwrap();
        let gap = m.sub(&p);
        for seed in 0..100 {
            let q = random_psd(4, 1000 + seed);
            assert!(gap.frob_inner(&q.sub(&p)) <= 1e-8 * (1.0 + q.frob_norm()));
        }
    }

    #[test]
    fn test_pos_neg_parts() {
        let (p, n) = pos_neg_parts(&SymMat::from_diagonal(&[2.0, -3.0])).unwrap();
        assert!(p.sub(&SymMat::from_diagonal(&[2.0, 0.0])).max_abs() < 1e-12);
        assert!(n.sub(&SymMat::from_diagonal(&[0.0, -3.0])).max_abs() < 1e-12);

        let psd = random_psd(4, 8);
        let (p, n) = pos_neg_parts(&psd).unwrap();
        assert!(p.sub(&psd).max_abs() < 1e-9);
        assert!(n.max_abs() < 1e-9);

        let m = random_sym(5, 77);
        let (p, n) = pos_neg_parts(&m).unwrap();
        assert!(p.add(&n).sub(&m).max_abs() < 1e-9);
        assert!(p.frob_inner(&n).abs() < 1e-9);
        assert!(p.min_eigenvalue().unwrap() > -1e-10);
        assert!(n.scale(-1.0).min_eigenvalue().unwrap() > -1e-10);
    }

    #[test]
    fn test_proj_spectraplex_examples() {
        // hand water-filling: eigenvalues (5, 1) onto the unit simplex -> (1, 0)
        let p = proj_spectraplex(&SymMat::from_diagonal(&[5.0, 1.0]), 1.0).unwrap();
        assert!(p.sub(&SymMat::from_diagonal(&[1.0, 0.0])).max_abs() < 1e-12);

        // already a trace-1 PSD point
        let m = SymMat::from_diagonal(&[0.6, 0.4]);
        assert!(proj_spectraplex(&m, 1.0).unwrap().sub(&m).max_abs() < 1e-12);

        assert!(proj_spectraplex(&SymMat::identity(2), 0.0).is_err());
    }

    #[test]
    fn test_proj_spectraplex_invariants_and_vi() {
        for seed in 0..10 {
            let m = random_sym(4, 200 + seed);
            let p = proj_spectraplex(&m, 1.0).unwrap();
            assert!((p.trace() - 1.0).abs() <= 1e-9);
            assert!(p.min_eigenvalue().unwrap() >= -1e-10);
            // variational inequality against random feasible points
            let gap = m.sub(&p);
            for q_seed in 0..20 {
                let q = proj_spectraplex(&random_sym(4, 900 + q_seed), 1.0).unwrap();
                assert!(gap.frob_inner(&q.sub(&p)) <= 1e-8);
            }
        }
    }

    #[test]
    fn test_simplex_projection_against_grid_oracle() {
        // 2-d case checked against a dense grid over the simplex.
        let y = [1.7, -0.4];
        let p = project_simplex(&y, 1.0);
        let mut best = f64::INFINITY;
        let mut best_x = [0.0, 0.0];
        let steps = 20_000;
        for i in 0..=steps {
            let x0 = i as f64 / steps as f64;
            let x = [x0, 1.0 - x0];
            let d = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
            if d < best {
                best = d;
                best_x = x;
            }
        }
        assert!((p[0] - best_x[0]).abs() < 1e-4);
        assert!((p[1] - best_x[1]).abs() < 1e-4);
    }

    #[test]
    fn test_proj_nuclear_ball_examples() {
        let inside = SymMat::from_diagonal(&[0.3, -0.2]);
        assert_eq!(proj_nuclear_ball(&inside, 1.0).unwrap(), inside);

        let p = proj_nuclear_ball(&SymMat::from_diagonal(&[2.0, 0.0]), 1.0).unwrap();
        assert!(p.sub(&SymMat::from_diagonal(&[1.0, 0.0])).max_abs() < 1e-12);

        // eigenvalues (2, -1) project onto the l1 ball as (1, 0)
        let p = proj_nuclear_ball(&SymMat::from_diagonal(&[2.0, -1.0]), 1.0).unwrap();
        let l1 = project_l1_ball(&[2.0, -1.0], 1.0);
        assert!(p.sub(&SymMat::from_diagonal(&l1)).max_abs() < 1e-12);
        assert_eq!(l1, vec![1.0, 0.0]);
    }

    #[test]
    fn test_l1_projection_subgradient_oracle() {
        // optimality: the projection p of y satisfies
        // <y - p, q - p> <= 0 for feasible q (sampled).
        let y = [2.2, -0.7, 0.1, -1.9];
        let p = project_l1_ball(&y, 1.5);
        assert!((p.iter().map(|v| v.abs()).sum::<f64>() - 1.5).abs() < 1e-12);
        let mut rng = RngSeed(5).stream(&[3]);
        for _ in 0..200 {
            let mut q: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n1: f64 = q.iter().map(|v| v.abs()).sum();
            if n1 > 1.5 {
                q.iter_mut().for_each(|v| *v *= 1.5 / n1);
            }
            let ip: f64 = (0..4).map(|j| (y[j] - p[j]) * (q[j] - p[j])).sum();
            assert!(ip <= 1e-10);
        }
    }

    #[test]
    fn test_rank_and_truncate() {
        let m = random_psd(5, 4);
        assert_eq!(m.rank_by_eig().unwrap(), 5);
        let t = m.truncate_rank(2).unwrap();
        assert_eq!(t.rank_by_eig().unwrap(), 2);
        assert_eq!(SymMat::zeros(3).rank_by_eig().unwrap(), 0);
    }
}
