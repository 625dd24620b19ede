//! Self-contained primal-dual interior-point solver for the standard-form
//! conic programs of [`crate::symcone`].
//!
//! Path-following with Nesterov-Todd scaling and a Mehrotra-style
//! predictor-corrector. The Newton system is reduced to a Schur complement
//! over the equality multipliers and factored with dense Cholesky; free
//! variables enter through a second, smaller Schur complement. Everything is
//! dense and serial in a fixed order, so a solve is bit-for-bit deterministic
//! on a fixed platform.
//!
//! There is no homogeneous self-dual embedding: target problems are feasible
//! by construction, and infeasibility detection is a divergence heuristic.

use crate::error::{Error, Result};
use crate::scalar::{fl, fl_usize, FloatT};
use crate::symcone::{program_residuals, ConicProgram, ConicSolution, ProgramResiduals, SolveStatus};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T: FloatT> {
    /// Relative duality-gap tolerance.
    pub tol_gap: T,
    /// Relative primal/dual feasibility tolerance.
    pub tol_feas: T,
    pub max_iter: usize,
    /// Magnitude of the identity initialization `X = S = scale * I`.
    pub initial_scale: T,
}

impl<T: FloatT> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol_gap: fl(1e-9),
            tol_feas: fl(1e-9),
            max_iter: 200,
            initial_scale: T::one(),
        }
    }
}

impl<T: FloatT> SolverOptions<T> {
    /// Raises the initial iterate to the scale of a feasible moment matrix.
    ///
    /// The mass coordinate of every feasible occupation-moment matrix equals
    /// `1/(1 - alpha)`, so a unit start can sit orders of magnitude below the
    /// solution and waste most iterations growing; starting at the mass scale
    /// removes that phase.
    pub fn with_moment_scale(mut self, total_mass: T) -> Self {
        self.initial_scale = self.initial_scale.max(total_mass);
        self
    }
}

/// Fraction-to-boundary coefficient.
const STEP_FRACTION: f64 = 0.98;
/// Iterate-norm threshold of the divergence heuristic.
const DIVERGENCE_NORM: f64 = 1e12;
/// Below this step size the iteration has stalled.
const MIN_STEP: f64 = 1e-10;

/// Independent post-solve certificate: the residual triple plus cone margins
/// and complementarity, recomputed from scratch in plain arithmetic.
#[derive(Debug, Clone)]
pub struct CertificateReport<T: FloatT> {
    pub residuals: ProgramResiduals<T>,
    pub min_eig_x: T,
    pub min_eig_s: T,
    pub min_slack: T,
    pub min_dual_slack: T,
    /// `<X, S>` (Frobenius).
    pub psd_complementarity: T,
    /// `s . z`.
    pub lin_complementarity: T,
}

/// Recomputes residuals and cone margins of a candidate solution.
pub fn certify<T: FloatT>(
    prog: &ConicProgram<T>,
    sol: &ConicSolution<T>,
) -> Result<CertificateReport<T>> {
    let residuals = program_residuals(prog, sol)?;
    let min_eig_x = crate::symcone::min_eigenvalue(&sol.x);
    let min_eig_s = crate::symcone::min_eigenvalue(&sol.dual_mat);
    let fold_min = |v: &DVector<T>| v.iter().copied().fold(T::zero(), |a, b| a.min(b));
    let psd_comp = sol
        .x
        .iter()
        .zip(sol.dual_mat.iter())
        .fold(T::zero(), |acc, (a, b)| acc + *a * *b);
    Ok(CertificateReport {
        residuals,
        min_eig_x,
        min_eig_s,
        min_slack: fold_min(&sol.slacks),
        min_dual_slack: fold_min(&sol.dual_lin),
        psd_complementarity: psd_comp,
        lin_complementarity: sol.slacks.dot(&sol.dual_lin),
    })
}

struct Data<T: FloatT> {
    d: usize,
    ns: usize,
    nf: usize,
    m: usize,
    a_mats: Vec<DMatrix<T>>,
    a_lin: DMatrix<T>,  // m x ns
    a_free: DMatrix<T>, // m x nf
    b: DVector<T>,
    c_mat: DMatrix<T>,
    c_lin: DVector<T>,
    c_free: DVector<T>,
    /// Magnitude estimate of the constraint data, for regularization.
    scale: T,
}

impl<T: FloatT> Data<T> {
    fn new(prog: &ConicProgram<T>) -> Self {
        let m = prog.num_equalities();
        let a_mats: Vec<_> = prog.equalities.iter().map(|r| r.mat.to_dense()).collect();
        let a_lin = DMatrix::from_fn(m, prog.num_nonneg, |i, j| prog.equalities[i].lin[j]);
        let a_free = DMatrix::from_fn(m, prog.num_free, |i, j| prog.equalities[i].free[j]);
        let b = DVector::from_fn(m, |i, _| prog.equalities[i].rhs);
        let scale = a_mats
            .iter()
            .map(|a| a.norm())
            .fold(T::one(), |acc, v| acc.max(v))
            .max(a_lin.norm())
            .max(a_free.norm());
        Data {
            d: prog.psd_dim,
            ns: prog.num_nonneg,
            nf: prog.num_free,
            m,
            a_mats,
            a_lin,
            a_free,
            b,
            c_mat: prog.obj_mat.to_dense(),
            c_lin: prog.obj_lin.clone(),
            c_free: prog.obj_free.clone(),
            scale,
        }
    }

    fn frob(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
        a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
    }

    /// `A(X, s, u)` applied row-wise.
    fn apply_primal(&self, x: &DMatrix<T>, s: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.m);
        for i in 0..self.m {
            out[i] = Self::frob(&self.a_mats[i], x)
                + self.a_lin.row(i).transpose().dot(s)
                + self.a_free.row(i).transpose().dot(u);
        }
        out
    }

    /// `A*(y) = sum_i y_i A_i`.
    fn adjoint_mat(&self, y: &DVector<T>) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.d, self.d);
        for i in 0..self.m {
            out += self.a_mats[i].scale(y[i]);
        }
        out
    }
}

struct Iterate<T: FloatT> {
    x: DMatrix<T>,
    s: DVector<T>,
    u: DVector<T>,
    y: DVector<T>,
    smat: DMatrix<T>,
    z: DVector<T>,
}

struct Residuals<T: FloatT> {
    rp: DVector<T>,
    rd_mat: DMatrix<T>,
    rd_lin: DVector<T>,
    rd_free: DVector<T>,
    measures: ProgramResiduals<T>,
}

struct Direction<T: FloatT> {
    dx: DMatrix<T>,
    ds: DVector<T>,
    du: DVector<T>,
    dy: DVector<T>,
    dsmat: DMatrix<T>,
    dz: DVector<T>,
}

fn symmetrize<T: FloatT>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()).scale(fl(0.5))
}

/// Symmetric eigendecomposition helper returning `(Q, lambda)`.
fn sym_eig<T: FloatT>(m: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let eig = symmetrize(m).symmetric_eigen();
    (eig.eigenvectors, eig.eigenvalues)
}

/// `Q f(L) Q^T` for a spectral function `f`.
fn spectral_map<T: FloatT>(q: &DMatrix<T>, lam: &DVector<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let d = lam.len();
    let mut scaled = q.clone();
    for j in 0..d {
        let fj = f(lam[j]);
        for i in 0..d {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * q.transpose()
}

struct Scaling<T: FloatT> {
    w: DMatrix<T>,
    n_half: DMatrix<T>,
    n_half_inv: DMatrix<T>,
    v_q: DMatrix<T>,
    v_lam: DVector<T>,
    d2: DVector<T>,
}

impl<T: FloatT> Scaling<T> {
    /// Nesterov-Todd scaling point of `(X, S)` plus the diagonal scaling of
    /// the nonnegative block.
    fn compute(it: &Iterate<T>) -> Option<Self> {
        let lx = Cholesky::<T, Dyn>::new(it.x.clone())?;
        let g = symmetrize(&(lx.l().transpose() * &it.smat * lx.l()));
        let (gq, glam) = sym_eig(&g);
        if glam.iter().any(|&e| e <= T::zero()) {
            return None;
        }
        let g_inv_sqrt = spectral_map(&gq, &glam, |e| T::one() / e.sqrt());
        let w = symmetrize(&(lx.l() * g_inv_sqrt * lx.l().transpose()));
        let (wq, wlam) = sym_eig(&w);
        if wlam.iter().any(|&e| e <= T::zero()) {
            return None;
        }
        let n_half = spectral_map(&wq, &wlam, |e| e.sqrt());
        let n_half_inv = spectral_map(&wq, &wlam, |e| T::one() / e.sqrt());
        let v = symmetrize(&(&n_half_inv * &it.x * &n_half_inv));
        let (v_q, v_lam) = sym_eig(&v);
        if v_lam.iter().any(|&e| e <= T::zero()) {
            return None;
        }
        let mut d2 = DVector::zeros(it.s.len());
        for i in 0..it.s.len() {
            if it.s[i] <= T::zero() || it.z[i] <= T::zero() {
                return None;
            }
            d2[i] = it.s[i] / it.z[i];
        }
        Some(Scaling {
            w,
            n_half,
            n_half_inv,
            v_q,
            v_lam,
            d2,
        })
    }

    /// `L_V^{-1}(M)` in the scaled space.
    fn lv_inv(&self, m: &DMatrix<T>) -> DMatrix<T> {
        let mh = self.v_q.transpose() * m * &self.v_q;
        let d = self.v_lam.len();
        let two = fl::<T>(2.0);
        let mut out = mh;
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = two * out[(i, j)] / (self.v_lam[i] + self.v_lam[j]);
            }
        }
        &self.v_q * out * self.v_q.transpose()
    }
}

/// Unpivoted LDL' factorization of a symmetric quasi-definite matrix.
struct Ldlt<T: FloatT> {
    l: DMatrix<T>,
    d: DVector<T>,
}

impl<T: FloatT> Ldlt<T> {
    fn new(k: &DMatrix<T>) -> Option<Self> {
        let n = k.nrows();
        let mut l = DMatrix::<T>::identity(n, n);
        let mut d = DVector::<T>::zeros(n);
        let tiny = fl::<T>(1e-300);
        for j in 0..n {
            let mut dj = k[(j, j)];
            for t in 0..j {
                dj -= l[(j, t)] * l[(j, t)] * d[t];
            }
            if dj.abs() < tiny {
                return None;
            }
            d[j] = dj;
            for i in j + 1..n {
                let mut v = k[(i, j)];
                for t in 0..j {
                    v -= l[(i, t)] * l[(j, t)] * d[t];
                }
                l[(i, j)] = v / dj;
            }
        }
        Some(Self { l, d })
    }

    fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.d.len();
        let mut x = b.clone();
        for i in 0..n {
            for t in 0..i {
                let c = self.l[(i, t)] * x[t];
                x[i] -= c;
            }
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            for t in i + 1..n {
                let c = self.l[(t, i)] * x[t];
                x[i] -= c;
            }
        }
        x
    }
}

struct KktFactors<T: FloatT> {
    m: usize,
    nf: usize,
    /// Unregularized saddle matrix `[[Ms, F], [F', 0]]`, for refinement.
    saddle: DMatrix<T>,
    /// Ruiz-style symmetric scaling applied before factorization.
    scaling: DVector<T>,
    factors: Ldlt<T>,
    wa_w: Vec<DMatrix<T>>,
}

impl<T: FloatT> KktFactors<T> {
    fn build(data: &Data<T>, sc: &Scaling<T>) -> Option<Self> {
        let m = data.m;
        let nf = data.nf;
        let wa_w: Vec<DMatrix<T>> = data
            .a_mats
            .iter()
            .map(|a| symmetrize(&(&sc.w * a * &sc.w)))
            .collect();
        let mut saddle = DMatrix::zeros(m + nf, m + nf);
        for i in 0..m {
            for j in 0..=i {
                let mut v = Data::frob(&data.a_mats[i], &wa_w[j]);
                for k in 0..data.ns {
                    v += data.a_lin[(i, k)] * sc.d2[k] * data.a_lin[(j, k)];
                }
                saddle[(i, j)] = v;
                saddle[(j, i)] = v;
            }
        }
        for i in 0..m {
            for j in 0..nf {
                saddle[(i, m + j)] = data.a_free[(i, j)];
                saddle[(m + j, i)] = data.a_free[(i, j)];
            }
        }

        // Ruiz-style symmetric equilibration narrows the dynamic range of the
        // factorization as the barrier parameter vanishes.
        let dim = m + nf;
        let mut scaling = DVector::from_element(dim, T::one());
        for _ in 0..3 {
            for i in 0..dim {
                let mut row_norm = T::zero();
                for j in 0..dim {
                    row_norm = row_norm.max((scaling[i] * saddle[(i, j)] * scaling[j]).abs());
                }
                if row_norm > T::zero() {
                    scaling[i] /= row_norm.sqrt();
                }
            }
        }
        let scaled = DMatrix::from_fn(dim, dim, |i, j| scaling[i] * saddle[(i, j)] * scaling[j]);

        // Static quasi-definite regularization (+delta on the multiplier
        // block, -delta on the free block); refinement solves against the
        // unregularized matrix afterwards. The magnitude is tied to the fixed
        // problem data, NOT the iteration-dependent Ms scale, which blows up
        // as the barrier parameter vanishes.
        let mut delta = fl::<T>(1e-13) * data.scale;
        for _ in 0..8 {
            let mut reg = scaled.clone();
            for i in 0..m {
                reg[(i, i)] += delta * scaling[i] * scaling[i];
            }
            for j in 0..nf {
                reg[(m + j, m + j)] -= delta * scaling[m + j] * scaling[m + j];
            }
            if let Some(factors) = Ldlt::new(&reg) {
                // The multiplier block must factor positive and the free
                // block negative, otherwise escalate the regularization.
                let ok = (0..m).all(|i| factors.d[i] > T::zero())
                    && (0..nf).all(|j| factors.d[m + j] < T::zero());
                if ok {
                    return Some(KktFactors {
                        m,
                        nf,
                        saddle,
                        scaling,
                        factors,
                        wa_w,
                    });
                }
            }
            delta *= fl::<T>(100.0);
        }
        None
    }

    fn solve_scaled(&self, rhs: &DVector<T>) -> DVector<T> {
        let dim = self.m + self.nf;
        let scaled_rhs = DVector::from_fn(dim, |i, _| rhs[i] * self.scaling[i]);
        let raw = self.factors.solve(&scaled_rhs);
        DVector::from_fn(dim, |i, _| raw[i] * self.scaling[i])
    }

    /// Solves `[[Ms, F],[F', 0]] [dy; du] = [h; g]` with iterative refinement
    /// against the unregularized saddle matrix.
    fn solve_saddle(&self, h: &DVector<T>, g: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let mut rhs = DVector::zeros(self.m + self.nf);
        rhs.rows_mut(0, self.m).copy_from(h);
        rhs.rows_mut(self.m, self.nf).copy_from(g);
        let mut sol = self.solve_scaled(&rhs);
        let mut best_norm = fl::<T>(f64::INFINITY);
        for _ in 0..6 {
            let residual = &rhs - &self.saddle * &sol;
            let norm = residual.norm();
            if !(norm < best_norm * fl(0.5)) && best_norm.is_finite() {
                break;
            }
            best_norm = norm;
            sol += self.solve_scaled(&residual);
        }
        (
            sol.rows(0, self.m).into_owned(),
            sol.rows(self.m, self.nf).into_owned(),
        )
    }
}

/// Largest `t` with `X + t D` still PSD, given `X` PD.
fn psd_step_to_boundary<T: FloatT>(x: &DMatrix<T>, d: &DMatrix<T>) -> T {
    let huge = fl::<T>(f64::INFINITY);
    let Some(chol) = Cholesky::<T, Dyn>::new(x.clone()) else {
        return T::zero();
    };
    let l = chol.l();
    let y = l.solve_lower_triangular(d).unwrap_or_else(|| d.clone());
    let z = l
        .solve_lower_triangular(&y.transpose())
        .unwrap_or_else(|| y.transpose());
    let m = symmetrize(&z.transpose());
    let (_, lam) = sym_eig(&m);
    let min = lam.iter().copied().fold(T::zero(), |a, b| a.min(b));
    if min >= T::zero() {
        huge
    } else {
        -(T::one() / min)
    }
}

fn lin_step_to_boundary<T: FloatT>(v: &DVector<T>, dv: &DVector<T>) -> T {
    let mut t = fl::<T>(f64::INFINITY);
    for i in 0..v.len() {
        if dv[i] < T::zero() {
            t = t.min(-(v[i] / dv[i]));
        }
    }
    t
}

fn residuals<T: FloatT>(data: &Data<T>, it: &Iterate<T>) -> Residuals<T> {
    let rp = &data.b - data.apply_primal(&it.x, &it.s, &it.u);
    let rd_mat = &data.c_mat - data.adjoint_mat(&it.y) - &it.smat;
    let rd_lin = &data.c_lin - data.a_lin.transpose() * &it.y - &it.z;
    let rd_free = &data.c_free - data.a_free.transpose() * &it.y;

    let mut primal = T::zero();
    for i in 0..data.m {
        let rel = rp[i].abs() / (T::one() + data.b[i].abs());
        primal = primal.max(rel);
    }
    let mut dual = rd_mat.norm() / (T::one() + data.c_mat.norm());
    if data.ns > 0 {
        dual = dual.max(rd_lin.norm() / (T::one() + data.c_lin.norm()));
    }
    if data.nf > 0 {
        dual = dual.max(rd_free.norm() / (T::one() + data.c_free.norm()));
    }
    let pobj = primal_objective(data, it);
    let dobj = data.b.dot(&it.y);
    let gap = (pobj - dobj).abs() / (T::one() + pobj.abs() + dobj.abs());
    Residuals {
        rp,
        rd_mat,
        rd_lin,
        rd_free,
        measures: ProgramResiduals {
            primal_infeas: primal,
            dual_infeas: dual,
            duality_gap: gap,
        },
    }
}

fn primal_objective<T: FloatT>(data: &Data<T>, it: &Iterate<T>) -> T {
    Data::frob(&data.c_mat, &it.x) + data.c_lin.dot(&it.s) + data.c_free.dot(&it.u)
}

fn solution_from<T: FloatT>(
    data: &Data<T>,
    it: &Iterate<T>,
    status: SolveStatus,
    iterations: usize,
    mu_trace: Vec<T>,
) -> ConicSolution<T> {
    ConicSolution {
        x: it.x.clone(),
        slacks: it.s.clone(),
        free: it.u.clone(),
        y: it.y.clone(),
        dual_mat: it.smat.clone(),
        dual_lin: it.z.clone(),
        primal_obj: primal_objective(data, it),
        dual_obj: data.b.dot(&it.y),
        status,
        iterations,
        mu_trace,
    }
}

/// Exact elimination of the free block before the interior-point iteration.
///
/// With `F = Q [R; 0]` (full column rank), the top `nf` rotated equality rows
/// define `u = R^{-1} Q1'(b - A(X) - A_s s)` outright, and the remaining rows
/// form a pure-cone program over `(X, s)` with an adjusted objective. The
/// multipliers of the original rows are recovered as `y = w + Q2 y_reduced`
/// with `w = Q1 R^{-T} c_u`, which satisfies the free-block dual feasibility
/// `F'y = c_u` exactly. Interior-point endgames behave much better without
/// unconstrained directions in the Newton system.
fn solve_with_free_block<T: FloatT>(
    prog: &ConicProgram<T>,
    opts: &SolverOptions<T>,
) -> Result<ConicSolution<T>> {
    let m = prog.num_equalities();
    let nf = prog.num_free;
    let f = DMatrix::from_fn(m, nf, |i, j| prog.equalities[i].free[j]);
    let qr = f.clone().qr();
    let r = qr.r();
    let diag_max = (0..nf)
        .map(|i| r[(i, i)].abs())
        .fold(T::zero(), |a, b| a.max(b));
    if (0..nf).any(|i| r[(i, i)].abs() <= fl::<T>(1e-12) * (T::one() + diag_max)) {
        return Err(Error::Singular(
            "free-variable columns are (numerically) linearly dependent".into(),
        ));
    }
    // Full Q' as an explicit matrix.
    let mut q_t = DMatrix::<T>::identity(m, m);
    qr.q_tr_mul(&mut q_t);

    // w = Q1 R^{-T} c_u.
    let rt_solve = r
        .transpose()
        .solve_lower_triangular(&prog.obj_free)
        .ok_or_else(|| Error::Singular("R' in the free-block reduction".into()))?;
    let mut w = DVector::<T>::zeros(m);
    for i in 0..m {
        for k in 0..nf {
            w[i] += q_t[(k, i)] * rt_solve[k];
        }
    }

    // Reduced objective and equality rows (bottom m - nf rotated rows).
    let mut obj_mat = prog.obj_mat.to_dense();
    for (i, row) in prog.equalities.iter().enumerate() {
        obj_mat -= row.mat.to_dense().scale(w[i]);
    }
    let mut obj_lin = prog.obj_lin.clone();
    for (i, row) in prog.equalities.iter().enumerate() {
        obj_lin -= row.lin.scale(w[i]);
    }
    let constant = w.dot(&DVector::from_fn(m, |i, _| prog.equalities[i].rhs));

    let mut equalities = Vec::with_capacity(m - nf);
    for k in nf..m {
        let mut mat = DMatrix::<T>::zeros(prog.psd_dim, prog.psd_dim);
        let mut lin = DVector::<T>::zeros(prog.num_nonneg);
        let mut rhs = T::zero();
        for i in 0..m {
            let c = q_t[(k, i)];
            if c != T::zero() {
                mat += prog.equalities[i].mat.to_dense().scale(c);
                lin += prog.equalities[i].lin.scale(c);
                rhs += c * prog.equalities[i].rhs;
            }
        }
        equalities.push(crate::symcone::EqualityRow {
            mat: crate::symcone::SymmetricMatrix::from_dense(&mat)?,
            lin,
            free: DVector::zeros(0),
            rhs,
        });
    }
    let reduced = ConicProgram {
        psd_dim: prog.psd_dim,
        num_nonneg: prog.num_nonneg,
        num_free: 0,
        obj_mat: crate::symcone::SymmetricMatrix::from_dense(&obj_mat)?,
        obj_lin,
        obj_free: DVector::zeros(0),
        equalities,
        meta: crate::symcone::ProgramMeta::default(),
    };
    let inner = solve_conic(&reduced, opts)?;

    // Recover the free block: R u = Q1'(b - A(X) - A_s s).
    let data = Data::new(prog);
    let residual = &data.b - data.apply_primal(&inner.x, &inner.slacks, &DVector::zeros(nf));
    let mut top = DVector::<T>::zeros(nf);
    for k in 0..nf {
        for i in 0..m {
            top[k] += q_t[(k, i)] * residual[i];
        }
    }
    let u = r
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::Singular("R in the free-block recovery".into()))?;

    // y = w + Q2 y_reduced.
    let mut y = w;
    for k in nf..m {
        let yk = inner.y[k - nf];
        for i in 0..m {
            y[i] += q_t[(k, i)] * yk;
        }
    }

    let primal_obj = inner.primal_obj + constant;
    let dual_obj = inner.dual_obj + constant;
    Ok(ConicSolution {
        x: inner.x,
        slacks: inner.slacks,
        free: u,
        y,
        dual_mat: inner.dual_mat,
        dual_lin: inner.dual_lin,
        primal_obj,
        dual_obj,
        status: inner.status,
        iterations: inner.iterations,
        mu_trace: inner.mu_trace,
    })
}

/// Solves a standard-form conic program.
///
/// Returns `Err` only for structurally invalid programs; numerical outcomes
/// are reported through [`SolveStatus`]. On [`SolveStatus::Optimal`] the
/// [`program_residuals`] triple is within `max(tol_gap, tol_feas)`.
pub fn solve_conic<T: FloatT>(
    prog: &ConicProgram<T>,
    opts: &SolverOptions<T>,
) -> Result<ConicSolution<T>> {
    prog.validate()?;
    if opts.max_iter == 0 || opts.tol_gap <= T::zero() || opts.tol_feas <= T::zero() {
        return Err(Error::InvalidArgument(
            "solver options must have positive tolerances and max_iter >= 1".into(),
        ));
    }
    if prog.num_free > 0 {
        if prog.num_free >= prog.num_equalities() {
            return Err(Error::InvalidArgument(
                "more free variables than equality rows".into(),
            ));
        }
        return solve_with_free_block(prog, opts);
    }
    let data = Data::new(prog);

    // Attempts restart from a larger identity initialization whenever the
    // iteration wedges: tiny steps far from tolerance mean the iterate scale
    // is far below the solution scale, and no amount of further stepping
    // recovers from that.
    let mut scale = opts.initial_scale;
    let mut budget = opts.max_iter;
    let mut fallback: Option<(T, ConicSolution<T>)> = None;
    for attempt in 0..4 {
        let outcome = run_attempt(&data, opts, scale, budget);
        match outcome {
            Attempt::Finished(sol) => {
                if sol.status == SolveStatus::Optimal || attempt == 3 {
                    return Ok(sol);
                }
                let merit = residual_merit(&data, &sol);
                if fallback.as_ref().map_or(true, |(m, _)| merit < *m) {
                    fallback = Some((merit, sol));
                }
            }
            Attempt::Wedged { best, used } => {
                if let Some((merit, sol)) = best {
                    if fallback.as_ref().map_or(true, |(m, _)| merit < *m) {
                        fallback = Some((merit, sol));
                    }
                }
                if budget.saturating_sub(used) < 20 {
                    break;
                }
                budget -= used;
            }
        }
        scale *= fl(100.0);
    }
    Ok(fallback
        .map(|(_, s)| s)
        .expect("every attempt records a fallback iterate"))
}

fn residual_merit<T: FloatT>(data: &Data<T>, sol: &ConicSolution<T>) -> T {
    let it = Iterate {
        x: sol.x.clone(),
        s: sol.slacks.clone(),
        u: sol.free.clone(),
        y: sol.y.clone(),
        smat: sol.dual_mat.clone(),
        z: sol.dual_lin.clone(),
    };
    residuals(data, &it).measures.max()
}

enum Attempt<T: FloatT> {
    Finished(ConicSolution<T>),
    /// Progress stopped far from tolerance; `best` is the best iterate seen.
    Wedged {
        best: Option<(T, ConicSolution<T>)>,
        used: usize,
    },
}

fn run_attempt<T: FloatT>(
    data: &Data<T>,
    opts: &SolverOptions<T>,
    scale: T,
    budget: usize,
) -> Attempt<T> {
    let mut it = Iterate {
        x: DMatrix::identity(data.d, data.d) * scale,
        s: DVector::from_element(data.ns, scale),
        u: DVector::zeros(data.nf),
        y: DVector::zeros(data.m),
        smat: DMatrix::identity(data.d, data.d) * scale,
        z: DVector::from_element(data.ns, scale),
    };
    let cone_order = fl_usize::<T>(data.d + data.ns);
    let tau = fl::<T>(STEP_FRACTION);
    let mut mu_trace: Vec<T> = Vec::new();
    // Starting scales of the infeasible-path neighborhood.
    let mu0 = (Data::frob(&it.x, &it.smat) + it.s.dot(&it.z)) / cone_order;
    let res0 = {
        let r = residuals(data, &it);
        r.measures
            .primal_infeas
            .max(r.measures.dual_infeas)
            .max(fl(1e-12))
    };
    let wedge_tol = fl::<T>(1e3) * opts.tol_feas.max(opts.tol_gap);

    let mut best: Option<(T, ConicSolution<T>)> = None;
    let mut stalls = 0usize;
    let mut tiny_steps = 0usize;
    let mut recent_merits: Vec<T> = Vec::new();

    for iter in 0..=budget {
        let res = residuals(data, &it);
        let merit = res.measures.max();

        if best.as_ref().map_or(true, |(b, _)| merit < *b) {
            best = Some((merit, solution_from(data, &it, SolveStatus::MaxIter, iter, vec![])));
        }

        if res.measures.primal_infeas <= opts.tol_feas
            && res.measures.dual_infeas <= opts.tol_feas
            && res.measures.duality_gap <= opts.tol_gap
        {
            return Attempt::Finished(solution_from(data, &it, SolveStatus::Optimal, iter, mu_trace));
        }

        // Divergence heuristic: iterates blow up while residuals stagnate.
        let iterate_norm = it.x.norm().max(it.s.norm()).max(it.y.norm()).max(it.u.norm());
        recent_merits.push(merit);
        if iterate_norm > fl(DIVERGENCE_NORM) && recent_merits.len() > 5 {
            let window = &recent_merits[recent_merits.len() - 5..];
            if window[4] > window[0] * fl(0.9) {
                let mut sol = best.map(|(_, s)| s).unwrap_or_else(|| {
                    solution_from(data, &it, SolveStatus::InfeasibleSuspected, iter, vec![])
                });
                sol.status = SolveStatus::InfeasibleSuspected;
                sol.mu_trace = mu_trace;
                return Attempt::Finished(sol);
            }
        }

        if iter == budget {
            break;
        }

        let mu = (Data::frob(&it.x, &it.smat) + it.s.dot(&it.z)) / cone_order;
        mu_trace.push(mu);

        let Some(sc) = Scaling::compute(&it) else {
            return Attempt::Wedged { best, used: iter + 1 };
        };
        let Some(kkt) = KktFactors::build(data, &sc) else {
            return Attempt::Wedged { best, used: iter + 1 };
        };

        let newton = |r_nt: &DMatrix<T>, r_c: &DVector<T>| -> Direction<T> {
            // h_i = rp_i - <A_i, R_nt - W Rd W> - a_i . (r_c - D^2 rd_lin)
            let w_rd_w = symmetrize(&(&sc.w * &res.rd_mat * &sc.w));
            let lhs_mat = r_nt - &w_rd_w;
            let mut h = res.rp.clone();
            for i in 0..data.m {
                h[i] -= Data::frob(&data.a_mats[i], &lhs_mat);
                for k in 0..data.ns {
                    h[i] -= data.a_lin[(i, k)] * (r_c[k] - sc.d2[k] * res.rd_lin[k]);
                }
            }
            let (dy, du) = kkt.solve_saddle(&h, &res.rd_free);
            let dsmat = symmetrize(&(&res.rd_mat - data.adjoint_mat(&dy)));
            let mut w_ds_w = DMatrix::zeros(data.d, data.d);
            // W dS W assembled from the cached W A_i W pieces plus W Rd W.
            for i in 0..data.m {
                w_ds_w -= kkt.wa_w[i].scale(dy[i]);
            }
            w_ds_w += &w_rd_w;
            let dx = symmetrize(&(r_nt - w_ds_w));
            let dz = &res.rd_lin - data.a_lin.transpose() * &dy;
            let mut ds = DVector::zeros(data.ns);
            for k in 0..data.ns {
                ds[k] = r_c[k] - sc.d2[k] * dz[k];
            }
            Direction {
                dx,
                ds,
                du,
                dy,
                dsmat,
                dz,
            }
        };

        // Predictor: pure Newton step toward the boundary.
        let aff = newton(&(-&it.x), &(-&it.s));
        let ap_aff = T::one()
            .min(tau * psd_step_to_boundary(&it.x, &aff.dx))
            .min(tau * lin_step_to_boundary(&it.s, &aff.ds));
        let ad_aff = T::one()
            .min(tau * psd_step_to_boundary(&it.smat, &aff.dsmat))
            .min(tau * lin_step_to_boundary(&it.z, &aff.dz));

        let mu_aff = {
            let xa = &it.x + aff.dx.scale(ap_aff);
            let sa = &it.smat + aff.dsmat.scale(ad_aff);
            let mut acc = Data::frob(&xa, &sa);
            for k in 0..data.ns {
                acc += (it.s[k] + ap_aff * aff.ds[k]) * (it.z[k] + ad_aff * aff.dz[k]);
            }
            acc / cone_order
        };
        let ratio = (mu_aff / mu).max(T::zero()).min(T::one());
        let mut sigma = (ratio * ratio * ratio).max(fl(1e-10));

        // Corrector RHS in the scaled space:
        // R = sigma mu I - V^2 - sym(dXhat dShat).
        // The second-order cross terms are scaled by the achieved affine step
        // lengths; the unit-step products blow up far from feasibility.
        let corr = ap_aff * ad_aff;
        let dx_hat = symmetrize(&(&sc.n_half_inv * &aff.dx * &sc.n_half_inv));
        let ds_hat = symmetrize(&(&sc.n_half * &aff.dsmat * &sc.n_half));
        let cross = symmetrize(&(&dx_hat * &ds_hat)).scale(corr);
        let v2 = spectral_map(&sc.v_q, &sc.v_lam, |e| e * e);

        // Complementarity must not outrun feasibility: once mu drops far
        // below the residuals the iterate gets pinned to the cone boundary
        // while still infeasible and steps collapse. Keep the iterate in the
        // infeasible-path neighborhood mu/mu0 >= kappa * res/res0; when the
        // predicted step would leave it, recenter with a larger sigma (same
        // factorization, corrector backsolves only).
        let centrality = fl::<T>(0.1);
        let mut dir;
        let mut ap;
        let mut ad;
        loop {
            let mut r_hat = -cross.clone();
            for i in 0..data.d {
                r_hat[(i, i)] += sigma * mu;
            }
            r_hat -= &v2;
            let r_nt = symmetrize(&(&sc.n_half * sc.lv_inv(&r_hat) * &sc.n_half));
            let mut r_c = DVector::zeros(data.ns);
            for k in 0..data.ns {
                r_c[k] = sigma * mu / it.z[k] - it.s[k] - corr * aff.ds[k] * aff.dz[k] / it.z[k];
            }
            dir = newton(&r_nt, &r_c);
            ap = T::one()
                .min(tau * psd_step_to_boundary(&it.x, &dir.dx))
                .min(tau * lin_step_to_boundary(&it.s, &dir.ds));
            ad = T::one()
                .min(tau * psd_step_to_boundary(&it.smat, &dir.dsmat))
                .min(tau * lin_step_to_boundary(&it.z, &dir.dz));
            if sigma >= fl(0.9) {
                break;
            }
            let mu_next = {
                let xa = &it.x + dir.dx.scale(ap);
                let sa = &it.smat + dir.dsmat.scale(ad);
                let mut acc = Data::frob(&xa, &sa);
                for k in 0..data.ns {
                    acc += (it.s[k] + ap * dir.ds[k]) * (it.z[k] + ad * dir.dz[k]);
                }
                acc / cone_order
            };
            // Newton directions shrink the residuals by exactly the step
            // fractions, so the post-step measures are predictable.
            let shrink = T::one() - ap.min(ad);
            let res_next = shrink * res.measures.primal_infeas.max(res.measures.dual_infeas);
            if mu_next * res0 >= centrality * res_next * mu0 || res_next <= opts.tol_feas {
                break;
            }
            sigma = (sigma * fl(8.0) + fl(0.05)).min(fl(0.9));
        }

        // Wedge detection: consecutive near-zero steps while far from
        // tolerance mean this initialization cannot reach the solution scale.
        if ap.max(ad) < fl(0.01) && merit > wedge_tol {
            tiny_steps += 1;
            if tiny_steps >= 6 {
                return Attempt::Wedged { best, used: iter + 1 };
            }
        } else {
            tiny_steps = 0;
        }

        if ap < fl(MIN_STEP) && ad < fl(MIN_STEP) {
            stalls += 1;
            if stalls >= 2 {
                let mut sol = best
                    .map(|(_, s)| s)
                    .unwrap_or_else(|| solution_from(data, &it, SolveStatus::NumericalFailure, iter, vec![]));
                sol.status = SolveStatus::NumericalFailure;
                sol.mu_trace = mu_trace;
                return Attempt::Finished(sol);
            }
        } else {
            stalls = 0;
        }

        it.x = symmetrize(&(&it.x + dir.dx.scale(ap)));
        it.s += dir.ds.scale(ap);
        it.u += dir.du.scale(ap);
        it.y += dir.dy.scale(ad);
        it.smat = symmetrize(&(&it.smat + dir.dsmat.scale(ad)));
        it.z += dir.dz.scale(ad);
    }

    let mut sol = best
        .clone()
        .map(|(_, s)| s)
        .unwrap_or_else(|| solution_from(data, &it, SolveStatus::MaxIter, budget, vec![]));
    sol.status = SolveStatus::MaxIter;
    sol.mu_trace = mu_trace;
    Attempt::Finished(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcone::{EqualityRow, ProgramMeta, SymmetricMatrix};
    use approx::assert_relative_eq;

    fn trace_program(objective_diag: &[f64]) -> ConicProgram<f64> {
        let d = objective_diag.len();
        let mut c = SymmetricMatrix::zeros(d);
        for (i, &v) in objective_diag.iter().enumerate() {
            c.set(i, i, v);
        }
        ConicProgram {
            psd_dim: d,
            num_nonneg: 0,
            num_free: 0,
            obj_mat: c,
            obj_lin: DVector::zeros(0),
            obj_free: DVector::zeros(0),
            equalities: vec![EqualityRow {
                mat: SymmetricMatrix::identity(d),
                lin: DVector::zeros(0),
                free: DVector::zeros(0),
                rhs: 1.0,
            }],
            meta: ProgramMeta::default(),
        }
    }

    #[test]
    fn identity_objective_on_trace_one() {
        let prog = trace_program(&[1.0, 1.0]);
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.primal_obj, 1.0, epsilon = 1e-8);
        let res = program_residuals(&prog, &sol).unwrap();
        assert!(res.max() <= 1e-9);
    }

    #[test]
    fn weighted_trace_picks_smallest_eigendirection() {
        let prog = trace_program(&[1.0, 2.0]);
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.primal_obj, 1.0, epsilon = 1e-7);
        assert_relative_eq!(sol.x[(0, 0)], 1.0, epsilon = 1e-6);
        assert!(sol.x[(1, 1)].abs() <= 1e-6);
    }

    #[test]
    fn nonnegative_block_linear_program() {
        // min s1 + 2 s2 + Tr(X) s.t. s1 + s2 = 1 -> optimum 1 at s = (1, 0).
        let prog = ConicProgram {
            psd_dim: 1,
            num_nonneg: 2,
            num_free: 0,
            obj_mat: SymmetricMatrix::identity(1),
            obj_lin: DVector::from_vec(vec![1.0, 2.0]),
            obj_free: DVector::zeros(0),
            equalities: vec![EqualityRow {
                mat: SymmetricMatrix::zeros(1),
                lin: DVector::from_vec(vec![1.0, 1.0]),
                free: DVector::zeros(0),
                rhs: 1.0,
            }],
            meta: ProgramMeta::default(),
        };
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.primal_obj, 1.0, epsilon = 1e-7);
        assert_relative_eq!(sol.slacks[0], 1.0, epsilon = 1e-6);
        assert!(sol.slacks[1] <= 1e-6);
    }

    #[test]
    fn free_variables_are_pinned_by_equalities() {
        // min Tr(X) s.t. u = 3, X_11 + u = 4: X_11 = 1 at the optimum.
        let prog = ConicProgram {
            psd_dim: 1,
            num_nonneg: 0,
            num_free: 1,
            obj_mat: SymmetricMatrix::identity(1),
            obj_lin: DVector::zeros(0),
            obj_free: DVector::zeros(1),
            equalities: vec![
                EqualityRow {
                    mat: SymmetricMatrix::zeros(1),
                    lin: DVector::zeros(0),
                    free: DVector::from_vec(vec![1.0]),
                    rhs: 3.0,
                },
                EqualityRow {
                    mat: SymmetricMatrix::identity(1),
                    lin: DVector::zeros(0),
                    free: DVector::from_vec(vec![1.0]),
                    rhs: 4.0,
                },
            ],
            meta: ProgramMeta::default(),
        };
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.free[0], 3.0, epsilon = 1e-7);
        assert_relative_eq!(sol.x[(0, 0)], 1.0, epsilon = 1e-7);
        let res = program_residuals(&prog, &sol).unwrap();
        assert!(res.max() <= 1e-9);
    }

    #[test]
    fn objective_scaling_leaves_argmin_fixed() {
        let lam = 3.7;
        let base = trace_program(&[1.0, 2.0]);
        let scaled = trace_program(&[lam, 2.0 * lam]);
        let opts = SolverOptions::default();
        let s1 = solve_conic(&base, &opts).unwrap();
        let s2 = solve_conic(&scaled, &opts).unwrap();
        assert_relative_eq!(s2.primal_obj, lam * s1.primal_obj, max_relative = 1e-7);
        for i in 0..2 {
            for j in 0..2 {
                assert!((s1.x[(i, j)] - s2.x[(i, j)]).abs() <= 10.0 * 1e-9);
            }
        }
    }

    #[test]
    fn mu_trace_decreases_monotonically() {
        let prog = trace_program(&[1.0, 2.0]);
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert!(sol.mu_trace.len() >= 2);
        for pair in sol.mu_trace.windows(2) {
            assert!(pair[1] <= 0.999 * pair[0], "mu did not decrease: {pair:?}");
        }
    }

    #[test]
    fn cone_membership_of_output() {
        let prog = trace_program(&[1.0, 2.0]);
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        let mex = crate::symcone::min_eigenvalue(&sol.x);
        let mes = crate::symcone::min_eigenvalue(&sol.dual_mat);
        assert!(mex >= -1e-9 * (1.0 + sol.x.trace()));
        assert!(mes >= -1e-9 * (1.0 + sol.dual_mat.trace()));
    }

    #[test]
    fn solver_is_deterministic() {
        let prog = trace_program(&[1.0, 2.0]);
        let a = solve_conic(&prog, &SolverOptions::default()).unwrap();
        let b = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert!(a.x.iter().zip(b.x.iter()).all(|(p, q)| p == q));
        assert!(a.y.iter().zip(b.y.iter()).all(|(p, q)| p == q));
        assert_eq!(a.primal_obj, b.primal_obj);
    }

    #[test]
    fn certify_reports_corruption() {
        let prog = trace_program(&[1.0, 2.0]);
        let mut sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        let report = certify(&prog, &sol).unwrap();
        assert!(report.residuals.max() <= 1e-8);
        assert!(report.psd_complementarity.abs() / 2.0 <= 1e-8);

        sol.x[(0, 0)] = -1.0;
        let report = certify(&prog, &sol).unwrap();
        assert!(report.min_eig_x < -0.5);
    }
}
