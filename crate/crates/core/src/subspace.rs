//! The tangent subspace of a rank-`r` symmetric matrix and its projectors.
//!
//! Given orthonormal bases `U_par` (m x r) and `U_perp` (m x (m-r)) of a
//! column space and its complement, the subspace is
//! `T = { U_par B + B^T U_par^T }` with orthogonal complement
//! `T_perp = { U_perp A U_perp^T }`. Low-rank targets whose column space is
//! spanned by `U_par` live in `T`; the geometry constants of the recovery
//! problem are all defined relative to this pair.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::symmat::{eig_sym, svec, sym_dim, SymMat};

/// Orthonormality tolerance for the basis invariants.
pub const ORTHO_TOL: f64 = 1e-10;

/// Which side of the splitting a projection targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Par,
    Perp,
}

/// Orthonormal bases for the tangent subspace of a rank-`r` matrix.
#[derive(Debug, Clone)]
pub struct SubspaceT {
    u_par: DMatrix<f64>,
    u_perp: DMatrix<f64>,
    rank_r: usize,
}

impl SubspaceT {
    /// Validate a pair of bases: columns orthonormal, mutually orthogonal.
    pub fn new(u_par: DMatrix<f64>, u_perp: DMatrix<f64>) -> Result<Self> {
        let m = u_par.nrows();
        let r = u_par.ncols();
        if r == 0 || r >= m {
            return Err(invalid(format!("rank must satisfy 1 <= r < m, got r={r}, m={m}")));
        }
        if u_perp.nrows() != m || u_perp.ncols() != m - r {
            return Err(invalid(format!(
                "perpendicular basis must be {}x{}, got {}x{}",
                m,
                m - r,
                u_perp.nrows(),
                u_perp.ncols()
            )));
        }
        let check_ortho = |u: &DMatrix<f64>, label: &str| -> Result<()> {
            let gram = u.transpose() * u;
            let id = DMatrix::<f64>::identity(u.ncols(), u.ncols());
            if (gram - id).abs().max() > ORTHO_TOL {
                return Err(invalid(format!("{label} basis is not orthonormal")));
            }
            Ok(())
        };
        check_ortho(&u_par, "parallel")?;
        check_ortho(&u_perp, "perpendicular")?;
        if (u_par.transpose() * &u_perp).abs().max() > ORTHO_TOL {
            return Err(invalid("bases are not mutually orthogonal"));
        }
        Ok(Self { u_par, u_perp, rank_r: r })
    }

    /// Complete an orthonormal `m x r` frame to a full splitting. The
    /// complement is read off the eigenvalue-one eigenspace of the projector
    /// `I - U U^T`.
    pub fn from_parallel_basis(u_par: DMatrix<f64>) -> Result<Self> {
        let m = u_par.nrows();
        let r = u_par.ncols();
        if r == 0 || r >= m {
            return Err(invalid(format!("rank must satisfy 1 <= r < m, got r={r}, m={m}")));
        }
        let proj = DMatrix::<f64>::identity(m, m) - &u_par * u_par.transpose();
        let eig = eig_sym(&SymMat::new(proj)?)?;
        let u_perp = eig.eigvecs.columns(0, m - r).into_owned();
        Self::new(u_par, u_perp)
    }

    pub fn dim_m(&self) -> usize {
        self.u_par.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank_r
    }

    /// Dimension of the tangent subspace, `m r - r(r-1)/2`.
    pub fn dim_t(&self) -> usize {
        let m = self.dim_m();
        let r = self.rank_r;
        m * r - r * (r - 1) / 2
    }

    pub fn u_par(&self) -> &DMatrix<f64> {
        &self.u_par
    }

    pub fn u_perp(&self) -> &DMatrix<f64> {
        &self.u_perp
    }

    /// Orthogonal projection of a symmetric matrix onto the chosen side.
    ///
    /// The perpendicular part is `U_perp (U_perp^T M U_perp) U_perp^T`; the
    /// parallel part is the remainder.
    pub fn proj(&self, m: &SymMat, which: Component) -> Result<SymMat> {
        if m.dim() != self.dim_m() {
            return Err(invalid(format!(
                "dimension mismatch: matrix is {}x{}, subspace lives in dimension {}",
                m.dim(),
                m.dim(),
                self.dim_m()
            )));
        }
        let compressed = self.compress_perp(m);
        let perp = self.lift_perp(&compressed);
        match which {
            Component::Perp => Ok(perp),
            Component::Par => Ok(m.sub(&perp)),
        }
    }

    /// `U_perp^T M U_perp` as a symmetric `(m-r) x (m-r)` matrix.
    pub fn compress_perp(&self, m: &SymMat) -> SymMat {
        SymMat::from_nearly_symmetric(self.u_perp.transpose() * m.as_matrix() * &self.u_perp)
    }

    /// `U_perp A U_perp^T` for a symmetric `(m-r) x (m-r)` matrix.
    pub fn lift_perp(&self, a: &SymMat) -> SymMat {
        SymMat::from_nearly_symmetric(&self.u_perp * a.as_matrix() * self.u_perp.transpose())
    }

    /// An orthonormal basis of `svec(T)`, one column per basis matrix.
    ///
    /// The basis matrices are `u_i u_i^T` for `i <= r` and
    /// `(u_i u_j^T + u_j u_i^T)/sqrt(2)` for `i <= r < j` or `i < j <= r`,
    /// built from the combined frame `[U_par U_perp]`.
    pub fn basis_par_svec(&self) -> DMatrix<f64> {
        let m = self.dim_m();
        let r = self.rank_r;
        let delta = sym_dim(m);
        let mut basis = DMatrix::zeros(delta, self.dim_t());
        let mut col = 0;
        let frame = self.full_frame();
        for i in 0..r {
            for j in i..m {
                let h = basis_matrix(&frame, i, j);
                basis.set_column(col, svec(&h).coords());
                col += 1;
            }
        }
        debug_assert_eq!(col, self.dim_t());
        basis
    }

    /// The combined orthonormal frame `[U_par U_perp]`.
    pub fn full_frame(&self) -> DMatrix<f64> {
        let m = self.dim_m();
        let mut frame = DMatrix::zeros(m, m);
        for c in 0..self.rank_r {
            frame.set_column(c, &self.u_par.column(c));
        }
        for c in 0..(m - self.rank_r) {
            frame.set_column(self.rank_r + c, &self.u_perp.column(c));
        }
        frame
    }
}

fn basis_matrix(frame: &DMatrix<f64>, i: usize, j: usize) -> SymMat {
    let ui: DVector<f64> = frame.column(i).into_owned();
    let uj: DVector<f64> = frame.column(j).into_owned();
    if i == j {
        SymMat::outer(&ui)
    } else {
        let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
        let outer = &ui * uj.transpose();
        SymMat::from_nearly_symmetric((&outer + outer.transpose()) * inv_sqrt2)
    }
}
