//! The sampling operator and measurement ensembles.
//!
//! A [`SamplingOperator`] holds `n` symmetric measurement matrices together
//! with a cached `n x m(m+1)/2` design matrix whose rows are the `svec`
//! images of the measurements. Applying the operator and its adjoint then
//! reduce to dense matrix-vector products with the cache, which is what every
//! solver iteration spends its time on.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, numeric, Result};
use crate::rng::RngSeed;
use crate::symmat::{inv_svec_raw, svec, sym_dim, SymMat};

const STREAM_GOE: u64 = 0x10;
const STREAM_WISHART: u64 = 0x11;
const STREAM_BLOCK: u64 = 0x12;

/// How an operator was generated. Geometry bounds specialize for the
/// sample-covariance ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    OrthonormalBasis,
    Goe,
    /// Averages of `q` outer products of standard Gaussian vectors.
    Wishart { q: usize },
    /// Example-1 style block-sign measurements.
    BlockSign,
    Custom,
}

/// A linear map from symmetric matrices to measurement vectors,
/// `(X(M))_i = tr(X_i M)`, with adjoint `v -> sum_i v_i X_i`.
#[derive(Debug, Clone)]
pub struct SamplingOperator {
    dim_m: usize,
    n: usize,
    measurements: Vec<SymMat>,
    design: DMatrix<f64>,
    kind: EnsembleKind,
}

impl SamplingOperator {
    /// Build an operator from explicit measurement matrices.
    pub fn from_measurements(measurements: Vec<SymMat>) -> Result<Self> {
        Self::with_kind(measurements, EnsembleKind::Custom)
    }

    fn with_kind(measurements: Vec<SymMat>, kind: EnsembleKind) -> Result<Self> {
        if measurements.is_empty() {
            return Err(invalid("operator needs at least one measurement"));
        }
        let dim_m = measurements[0].dim();
        if measurements.iter().any(|x| x.dim() != dim_m) {
            return Err(invalid("measurements have inconsistent dimensions"));
        }
        let n = measurements.len();
        let delta = sym_dim(dim_m);
        let mut design = DMatrix::zeros(n, delta);
        for (i, x) in measurements.iter().enumerate() {
            design.set_row(i, &svec(x).coords().transpose());
        }
        Ok(Self {
            dim_m,
            n,
            measurements,
            design,
            kind,
        })
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta_m(&self) -> usize {
        sym_dim(self.dim_m)
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn measurements(&self) -> &[SymMat] {
        &self.measurements
    }

    /// The cached `n x delta_m` design matrix.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// `(tr(X_1 M), ..., tr(X_n M))` via the design cache.
    pub fn apply(&self, m: &SymMat) -> Result<DVector<f64>> {
        if m.dim() != self.dim_m {
            return Err(invalid(format!(
                "dimension mismatch: operator is for {}x{} matrices, got {}x{}",
                self.dim_m,
                self.dim_m,
                m.dim(),
                m.dim()
            )));
        }
        Ok(&self.design * svec(m).coords())
    }

    /// `sum_i v_i X_i`. Computed as `inv_svec(design^T v)`.
    pub fn adjoint(&self, v: &DVector<f64>) -> Result<SymMat> {
        if v.len() != self.n {
            return Err(invalid(format!(
                "length mismatch: operator has n={}, vector has length {}",
                self.n,
                v.len()
            )));
        }
        inv_svec_raw(self.design.transpose() * v)
    }

    /// Largest eigenvalue of the map `M -> (1/n) X*(X(M))`, estimated by
    /// power iteration on the design Gram matrix to relative tolerance 1e-6
    /// and inflated by `1 + 1e-4` so the returned value upper-bounds the
    /// Lipschitz constant of the least squares gradient.
    ///
    /// The start vector is a fixed pseudo-random direction; structured
    /// designs can be exactly orthogonal to deterministic patterns like the
    /// all-ones vector, which would stall the iteration at zero.
    pub fn lipschitz_estimate(&self) -> Result<f64> {
        let delta = self.delta_m();
        let max_iters = 10_000;
        for start in 0..4u64 {
            let mut rng = RngSeed(0x11b5).stream(&[start]);
            let mut v = DVector::from_fn(delta, |_, _| rng.sample::<f64, _>(StandardNormal));
            v /= v.norm();
            let mut lambda = 0.0_f64;
            for it in 0..max_iters {
                let w = self.design.transpose() * (&self.design * &v) / self.n as f64;
                let norm = w.norm();
                if norm == 0.0 {
                    // orthogonal start or zero operator; try the next start
                    break;
                }
                let next = w / norm;
                let lambda_next = norm;
                let done =
                    (lambda_next - lambda).abs() <= 1e-6 * lambda_next.max(f64::MIN_POSITIVE);
                v = next;
                lambda = lambda_next;
                if done && it > 0 {
                    return Ok(lambda * (1.0 + 1e-4));
                }
            }
            if lambda > 0.0 {
                return Err(numeric(format!(
                    "power iteration did not reach relative tolerance 1e-6 within {max_iters} iterations"
                )));
            }
        }
        // every start annihilated immediately: the operator is zero
        Ok(0.0)
    }

    /// All measurements scaled by `c`.
    pub fn scaled(&self, c: f64) -> Result<SamplingOperator> {
        Self::with_kind(
            self.measurements.iter().map(|x| x.scale(c)).collect(),
            EnsembleKind::Custom,
        )
    }

    /// Serialize as a header line `m n` followed by one line per
    /// measurement holding `svec(X_i)` at 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.dim_m, self.n)?;
        for i in 0..self.n {
            let row = self.design.row(i);
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Parse the textual format produced by [`Self::write_text`].
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| invalid("empty operator file"))??;
        let mut parts = header.split_whitespace();
        let m: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| invalid("header must be `m n`"))?;
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| invalid("header must be `m n`"))?;
        if parts.next().is_some() {
            return Err(invalid("header must be exactly `m n`"));
        }
        let delta = sym_dim(m);
        let mut measurements = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| invalid(format!("expected {n} measurement lines, found {i}")))??;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| invalid(format!("bad number `{s}` on measurement line {}", i + 1)))
                })
                .collect::<Result<_>>()?;
            if vals.len() != delta {
                return Err(invalid(format!(
                    "measurement line {} has {} values, expected {}",
                    i + 1,
                    vals.len(),
                    delta
                )));
            }
            measurements.push(inv_svec_raw(DVector::from_vec(vals))?);
        }
        Self::with_kind(measurements, EnsembleKind::Custom)
    }
}

/// The canonical orthonormal basis of the symmetric matrices:
/// `e_j e_j^T` and `(e_j e_k^T + e_k e_j^T)/sqrt(2)` in row-major upper
/// triangle order, so the design matrix is exactly the identity.
pub fn gen_orthonormal_basis_design(m: usize) -> SamplingOperator {
    assert!(m >= 1);
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut measurements = Vec::with_capacity(sym_dim(m));
    for j in 0..m {
        for k in j..m {
            measurements.push(SymMat::from_fn(m, |a, b| {
                if j == k {
                    if a == j && b == j {
                        1.0
                    } else {
                        0.0
                    }
                } else if (a, b) == (j, k) || (a, b) == (k, j) {
                    inv_sqrt2
                } else {
                    0.0
                }
            }));
        }
    }
    SamplingOperator::with_kind(measurements, EnsembleKind::OrthonormalBasis)
        .expect("orthonormal basis is well formed")
}

/// `n` i.i.d. draws from the Gaussian orthogonal ensemble: diagonal entries
/// `N(0,1)`, off-diagonal `N(0,1/2)`. One child stream per measurement.
pub fn gen_goe(m: usize, n: usize, seed: RngSeed) -> SamplingOperator {
    assert!(m >= 1 && n >= 1);
    let offdiag_sd = (0.5_f64).sqrt();
    let measurements = (0..n)
        .map(|i| {
            let mut rng = seed.stream(&[STREAM_GOE, i as u64]);
            SymMat::from_fn(m, |j, k| {
                let g: f64 = rng.sample(StandardNormal);
                if j == k {
                    g
                } else {
                    offdiag_sd * g
                }
            })
        })
        .collect();
    SamplingOperator::with_kind(measurements, EnsembleKind::Goe).expect("goe is well formed")
}

/// `n` i.i.d. draws `X_i = (1/q) sum_k z_k z_k^T` with standard Gaussian
/// vectors `z_k`. Every measurement is positive semidefinite with rank
/// `min(q, m)` almost surely; `q = 1` gives rank-one measurements.
pub fn gen_wishart(m: usize, n: usize, q: usize, seed: RngSeed) -> SamplingOperator {
    assert!(m >= 1 && n >= 1 && q >= 1);
    let measurements = (0..n)
        .map(|i| {
            let mut rng = seed.stream(&[STREAM_WISHART, i as u64]);
            let mut acc = DMatrix::zeros(m, m);
            for _ in 0..q {
                let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                acc += &z * z.transpose();
            }
            SymMat::from_nearly_symmetric(acc / q as f64)
        })
        .collect();
    SamplingOperator::with_kind(measurements, EnsembleKind::Wishart { q })
        .expect("wishart is well formed")
}

/// Block-sign measurements `diag(W_i, -W_i)` with `W_i` drawn from the GOE
/// in dimension `m/2`. On these designs the cone constraint is vacuous: the
/// objective only sees the difference of the diagonal blocks.
pub fn gen_block_design(m: usize, n: usize, seed: RngSeed) -> Result<SamplingOperator> {
    if m < 2 || m % 2 != 0 {
        return Err(invalid(format!("block design needs even m >= 2, got {m}")));
    }
    let half = m / 2;
    let offdiag_sd = (0.5_f64).sqrt();
    let measurements = (0..n)
        .map(|i| {
            let mut rng = seed.stream(&[STREAM_BLOCK, i as u64]);
            let inner = SymMat::from_fn(half, |j, k| {
                let g: f64 = rng.sample(StandardNormal);
                if j == k {
                    g
                } else {
                    offdiag_sd * g
                }
            });
            SymMat::from_fn(m, |j, k| {
                if j < half && k < half {
                    inner.get(j, k)
                } else if j >= half && k >= half {
                    -inner.get(j - half, k - half)
                } else {
                    0.0
                }
            })
        })
        .collect();
    SamplingOperator::with_kind(measurements, EnsembleKind::BlockSign)
}
