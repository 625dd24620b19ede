//! Symmetric-matrix vectorization and the standard-form conic program shared
//! by the SDP builders and the interior-point solver.
//!
//! The canonical program is a minimization over one dense PSD block `X`, a
//! nonnegative slack vector `s` and a free vector `u`:
//!
//! ```text
//! min  <C, X> + c_lin . s + c_free . u
//! s.t. <A_i, X> + a_i . s + f_i . u = b_i     (i = 1..M)
//!      X in PSD(d),  s >= 0,  u free
//! ```
//!
//! The occupation-moment program uses only `(X, s)`; the value-function
//! program additionally needs the free block for the unconstrained quadratic
//! coefficients.

use crate::error::{Error, Result};
use crate::scalar::{as_f64, fl, FloatT};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Dense symmetric matrix storing the lower triangle in row-major order:
/// `(0,0), (1,0), (1,1), (2,0), (2,1), (2,2), ...`
///
/// Symmetry is exact by construction since only one triangle exists.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix<T: FloatT> {
    dim: usize,
    data: Vec<T>,
}

/// `d * (d + 1) / 2`.
#[inline]
pub fn triangular_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl<T: FloatT> SymmetricMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); triangular_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, T::one());
        }
        m
    }

    /// Builds from a dense square matrix, storing the symmetric part
    /// `(M + M^T) / 2`.
    pub fn from_dense(m: &DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix from {}x{} input",
                m.nrows(),
                m.ncols()
            )));
        }
        let dim = m.nrows();
        let half = fl::<T>(0.5);
        let mut out = Self::zeros(dim);
        let mut idx = 0;
        for i in 0..dim {
            for j in 0..=i {
                out.data[idx] = (m[(i, j)] + m[(j, i)]) * half;
                idx += 1;
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn tri_index(i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        r * (r + 1) / 2 + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[Self::tri_index(i, j)]
    }

    /// Sets the `(i, j)` and `(j, i)` entries.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[Self::tri_index(i, j)] = v;
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Frobenius inner product `<self, other>`.
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim, "inner product dims");
        let two = fl::<T>(2.0);
        let mut acc = T::zero();
        let mut idx = 0;
        for i in 0..self.dim {
            for j in 0..=i {
                let w = if i == j { T::one() } else { two };
                acc += w * self.data[idx] * other.data[idx];
                idx += 1;
            }
        }
        acc
    }

    /// Frobenius inner product against a dense matrix (assumed symmetric).
    pub fn inner_dense(&self, other: &DMatrix<T>) -> T {
        assert_eq!(self.dim, other.nrows(), "inner product dims");
        let two = fl::<T>(2.0);
        let mut acc = T::zero();
        for i in 0..self.dim {
            for j in 0..=i {
                let w = if i == j { T::one() } else { two };
                acc += w * self.get(i, j) * other[(i, j)];
            }
        }
        acc
    }

    pub fn norm_frobenius(&self) -> T {
        self.inner(self).sqrt()
    }
}

/// Vectorizes a symmetric matrix with sqrt(2)-scaled off-diagonals so that
/// `svec(A) . svec(B) = <A, B>` (Frobenius).
///
/// Entry order matches the [`SymmetricMatrix`] storage:
/// `(0,0), (1,0), (1,1), (2,0), ...`
pub fn svec<T: FloatT>(m: &SymmetricMatrix<T>) -> DVector<T> {
    let sqrt2 = fl::<T>(std::f64::consts::SQRT_2);
    let mut v = DVector::zeros(triangular_len(m.dim()));
    let mut idx = 0;
    for i in 0..m.dim() {
        for j in 0..=i {
            v[idx] = if i == j { m.get(i, j) } else { m.get(i, j) * sqrt2 };
            idx += 1;
        }
    }
    v
}

/// Inverse of [`svec`]: `smat(svec(M)) == M` exactly.
pub fn smat<T: FloatT>(v: &DVector<T>) -> Result<SymmetricMatrix<T>> {
    let len = v.len();
    // Invert len = d(d+1)/2.
    let dim = ((((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1)) / 2;
    if triangular_len(dim) != len {
        return Err(Error::NotTriangular { len });
    }
    let inv_sqrt2 = fl::<T>(std::f64::consts::FRAC_1_SQRT_2);
    let mut m = SymmetricMatrix::zeros(dim);
    let mut idx = 0;
    for i in 0..dim {
        for j in 0..=i {
            m.set(i, j, if i == j { v[idx] } else { v[idx] * inv_sqrt2 });
            idx += 1;
        }
    }
    Ok(m)
}

/// Where a named model variable lives inside a [`ConicProgram`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarSpan {
    /// Single entry of the PSD block.
    Entry(usize, usize),
    /// Rectangular sub-block of the PSD block: row range, column range.
    Block {
        rows: (usize, usize),
        cols: (usize, usize),
    },
    /// Range inside the free vector.
    FreeRange(usize, usize),
    /// Range inside the nonnegative slack vector.
    SlackRange(usize, usize),
    /// Range of equality-row indices.
    EqRange(usize, usize),
}

/// Which builder produced a program. Extraction routines use this to refuse
/// mismatched inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProgramKind {
    #[default]
    Generic,
    /// Occupation-moment program (PSD block is the moment matrix `Z`).
    MomentPrimal,
    /// Value-function program (PSD block is the Bellman LMI slack).
    ValueDual,
}

/// Builder metadata: maps model-variable names (`"m"`, `"m_x"`, `"Z_xx"`,
/// `"P"`, `"gamma"`, ...) to positions inside the program.
#[derive(Debug, Clone, Default)]
pub struct ProgramMeta {
    pub kind: ProgramKind,
    pub num_states: usize,
    pub num_inputs: usize,
    pub names: BTreeMap<String, VarSpan>,
}

impl ProgramMeta {
    pub fn span(&self, name: &str) -> Result<&VarSpan> {
        self.names
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no `{name}` entry in program metadata")))
    }
}

/// One equality row `<mat, X> + lin . s + free . u = rhs`.
#[derive(Debug, Clone)]
pub struct EqualityRow<T: FloatT> {
    pub mat: SymmetricMatrix<T>,
    pub lin: DVector<T>,
    pub free: DVector<T>,
    pub rhs: T,
}

/// Standard-form minimization program. See the module docs for the geometry.
#[derive(Debug, Clone)]
pub struct ConicProgram<T: FloatT> {
    pub psd_dim: usize,
    pub num_nonneg: usize,
    pub num_free: usize,
    pub obj_mat: SymmetricMatrix<T>,
    pub obj_lin: DVector<T>,
    pub obj_free: DVector<T>,
    pub equalities: Vec<EqualityRow<T>>,
    pub meta: ProgramMeta,
}

impl<T: FloatT> ConicProgram<T> {
    /// Structural validity: nonempty equality list, consistent dimensions.
    pub fn validate(&self) -> Result<()> {
        if self.psd_dim == 0 {
            return Err(Error::InvalidArgument("psd_dim must be >= 1".into()));
        }
        if self.equalities.is_empty() {
            return Err(Error::InvalidArgument("equality list must be nonempty".into()));
        }
        if self.obj_mat.dim() != self.psd_dim
            || self.obj_lin.len() != self.num_nonneg
            || self.obj_free.len() != self.num_free
        {
            return Err(Error::DimensionMismatch("objective blocks".into()));
        }
        for (i, row) in self.equalities.iter().enumerate() {
            if row.mat.dim() != self.psd_dim
                || row.lin.len() != self.num_nonneg
                || row.free.len() != self.num_free
            {
                return Err(Error::DimensionMismatch(format!("equality row {i}")));
            }
        }
        Ok(())
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
    InfeasibleSuspected,
}

/// Primal-dual solution returned by the interior-point solver.
///
/// `x` is the PSD block, `slacks`/`free` the remaining primal variables, `y`
/// the equality multipliers, and `dual_mat`/`dual_lin` the dual slacks
/// `S = C - sum_i y_i A_i` and `z = c_lin - sum_i y_i a_i`.
#[derive(Debug, Clone)]
pub struct ConicSolution<T: FloatT> {
    pub x: DMatrix<T>,
    pub slacks: DVector<T>,
    pub free: DVector<T>,
    pub y: DVector<T>,
    pub dual_mat: DMatrix<T>,
    pub dual_lin: DVector<T>,
    pub primal_obj: T,
    pub dual_obj: T,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Complementarity measure per accepted iteration, for diagnostics.
    pub mu_trace: Vec<T>,
}

/// Residual triple of a candidate primal-dual pair.
#[derive(Debug, Clone, Copy)]
pub struct ProgramResiduals<T: FloatT> {
    /// `max_i |<A_i,X> + a_i.s + f_i.u - b_i| / (1 + |b_i|)`
    pub primal_infeas: T,
    /// Max over the PSD part `||C - sum y_i A_i - S||_F / (1 + ||C||_F)` and
    /// the analogous nonnegative and free parts.
    pub dual_infeas: T,
    /// `|primal_obj - dual_obj| / (1 + |primal_obj| + |dual_obj|)`
    pub duality_gap: T,
}

impl<T: FloatT> ProgramResiduals<T> {
    pub fn max(&self) -> T {
        self.primal_infeas.max(self.dual_infeas).max(self.duality_gap)
    }
}

/// Recomputes the standard residual triple of `sol` for `prog` from scratch.
pub fn program_residuals<T: FloatT>(
    prog: &ConicProgram<T>,
    sol: &ConicSolution<T>,
) -> Result<ProgramResiduals<T>> {
    prog.validate()?;
    if sol.x.nrows() != prog.psd_dim
        || sol.slacks.len() != prog.num_nonneg
        || sol.free.len() != prog.num_free
        || sol.y.len() != prog.num_equalities()
    {
        return Err(Error::DimensionMismatch("solution blocks".into()));
    }

    let mut primal = T::zero();
    for (i, row) in prog.equalities.iter().enumerate() {
        let lhs = row.mat.inner_dense(&sol.x) + row.lin.dot(&sol.slacks) + row.free.dot(&sol.free);
        let rel = (lhs - row.rhs).abs() / (T::one() + row.rhs.abs());
        if rel > primal {
            primal = rel;
        }
        let _ = i;
    }

    // PSD part of dual feasibility.
    let mut resid = prog.obj_mat.to_dense() - &sol.dual_mat;
    for (i, row) in prog.equalities.iter().enumerate() {
        resid -= row.mat.to_dense() * sol.y[i];
    }
    let c_norm = prog.obj_mat.norm_frobenius();
    let mut dual = resid.norm() / (T::one() + c_norm);

    // Nonnegative part.
    if prog.num_nonneg > 0 {
        let mut lin = prog.obj_lin.clone() - &sol.dual_lin;
        for (i, row) in prog.equalities.iter().enumerate() {
            lin -= row.lin.scale(sol.y[i]);
        }
        let d = lin.norm() / (T::one() + prog.obj_lin.norm());
        dual = dual.max(d);
    }

    // Free part (no dual slack).
    if prog.num_free > 0 {
        let mut fr = prog.obj_free.clone();
        for (i, row) in prog.equalities.iter().enumerate() {
            fr -= row.free.scale(sol.y[i]);
        }
        let d = fr.norm() / (T::one() + prog.obj_free.norm());
        dual = dual.max(d);
    }

    let gap = (sol.primal_obj - sol.dual_obj).abs()
        / (T::one() + sol.primal_obj.abs() + sol.dual_obj.abs());

    Ok(ProgramResiduals {
        primal_infeas: primal,
        dual_infeas: dual,
        duality_gap: gap,
    })
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn min_eigenvalue<T: FloatT>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    let sym = (m + m.transpose()).scale(fl(0.5));
    let eig = sym.symmetric_eigenvalues();
    eig.iter().copied().fold(eig[0], |a, b| a.min(b))
}

/// Reports `min_eigenvalue` in f64 for diagnostics.
pub fn min_eigenvalue_f64<T: FloatT>(m: &DMatrix<T>) -> f64 {
    as_f64(min_eigenvalue(m))
}
