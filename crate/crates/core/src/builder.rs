//! Assembly of the two semidefinite programs of the synthesis pipeline and
//! the mapping between solver output and model-level objects.
//!
//! The moment program minimizes `Tr(Q0 Z_xx) + Tr(R0 Z_uu)` over the
//! discounted occupation moments, subject to
//!
//! ```text
//! (C0)  alpha m - m + 1 = 0
//! (C1)  m0 - m_x + alpha (A m_x + B m_u) = 0
//! (C2)  Sigma0 + m0 m0' - Z_xx
//!         + alpha (A Z_xx A' + A Z_xu B' + B Z_xu'A' + B Z_uu B' + m W) = 0
//! (Cp)  Z = [[m, m_x', m_u'], [m_x, Z_xx, Z_xu], [m_u, Z_xu', Z_uu]] >= 0
//! ```
//!
//! plus one slacked trace row per moment bound. `(C2)` is imposed on the
//! upper triangle only; duplicate rows would degenerate the interior-point
//! KKT system.
//!
//! The value program maximizes
//! `Tr(P Sigma0) + m0'P m0 + q'm0 + r - sum_i gamma_i beta_i`
//! over the quadratic `v(x) = x'Px + q'x + r` and multipliers `gamma >= 0`,
//! subject to the Bellman LMI; it is encoded as a minimization of the
//! negated objective with the LMI slack as the PSD block and `(P, q, r)` in
//! the free block. The two programs are exact conic duals of each other, so
//! the equality multipliers of a moment-program solve recover `(P, q, r,
//! gamma)` as well.

use crate::error::{Error, Result};
use crate::problem::DiscountedLqgProblem;
use crate::scalar::{fl, FloatT};
use crate::symcone::{
    min_eigenvalue, triangular_len, ConicProgram, ConicSolution, EqualityRow, ProgramKind,
    ProgramMeta, SolveStatus, SymmetricMatrix, VarSpan,
};
use nalgebra::{DMatrix, DVector};

/// Discounted moments of the occupation measure, in the raw (unnormalized)
/// scaling where the total mass is `m = 1/(1 - alpha)`.
#[derive(Debug, Clone)]
pub struct OccupationMoments<T: FloatT> {
    pub m: T,
    pub m_x: DVector<T>,
    pub m_u: DVector<T>,
    pub z_xx: DMatrix<T>,
    pub z_xu: DMatrix<T>,
    pub z_uu: DMatrix<T>,
}

impl<T: FloatT> OccupationMoments<T> {
    pub fn num_states(&self) -> usize {
        self.m_x.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.m_u.len()
    }

    /// Stacks the blocks into the full `(1 + n + p)` moment matrix `Z`.
    pub fn assemble(&self) -> DMatrix<T> {
        let n = self.num_states();
        let p = self.num_inputs();
        let d = 1 + n + p;
        let mut z = DMatrix::zeros(d, d);
        z[(0, 0)] = self.m;
        for i in 0..n {
            z[(1 + i, 0)] = self.m_x[i];
            z[(0, 1 + i)] = self.m_x[i];
        }
        for l in 0..p {
            z[(1 + n + l, 0)] = self.m_u[l];
            z[(0, 1 + n + l)] = self.m_u[l];
        }
        for i in 0..n {
            for j in 0..n {
                z[(1 + i, 1 + j)] = self.z_xx[(i, j)];
            }
            for l in 0..p {
                z[(1 + i, 1 + n + l)] = self.z_xu[(i, l)];
                z[(1 + n + l, 1 + i)] = self.z_xu[(i, l)];
            }
        }
        for k in 0..p {
            for l in 0..p {
                z[(1 + n + k, 1 + n + l)] = self.z_uu[(k, l)];
            }
        }
        z
    }

    /// Reads the blocks back out of a full moment matrix.
    pub fn from_z(z: &DMatrix<T>, n: usize, p: usize) -> Result<Self> {
        if z.nrows() != 1 + n + p || z.ncols() != 1 + n + p {
            return Err(Error::DimensionMismatch(format!(
                "moment matrix is {}x{}, expected {}",
                z.nrows(),
                z.ncols(),
                1 + n + p
            )));
        }
        Ok(Self {
            m: z[(0, 0)],
            m_x: DVector::from_fn(n, |i, _| z[(1 + i, 0)]),
            m_u: DVector::from_fn(p, |l, _| z[(1 + n + l, 0)]),
            z_xx: z.view((1, 1), (n, n)).into_owned(),
            z_xu: z.view((1, 1 + n), (n, p)).into_owned(),
            z_uu: z.view((1 + n, 1 + n), (p, p)).into_owned(),
        })
    }
}

/// Quadratic value function `v(x) = x'Px + q'x + r`. `P` need not be PSD a
/// priori; only the Bellman LMI constrains it.
#[derive(Debug, Clone)]
pub struct QuadraticValueFunction<T: FloatT> {
    pub p: DMatrix<T>,
    pub q: DVector<T>,
    pub r: T,
}

fn ensure_buildable<T: FloatT>(p: &DiscountedLqgProblem<T>) -> Result<()> {
    p.check_dimensions()?;
    if !p.chance_specs.is_empty() {
        return Err(Error::InvalidArgument(
            "chance specs must be translated to moment bounds first (chance::expand_chance_specs)"
                .into(),
        ));
    }
    Ok(())
}

/// Selection matrices picking the `x` and `u` blocks of the lifted vector
/// `(1, x, u)`, plus the first coordinate.
fn selections<T: FloatT>(n: usize, p: usize) -> (DMatrix<T>, DMatrix<T>, DVector<T>) {
    let d = 1 + n + p;
    let mut u_sel = DMatrix::zeros(n, d);
    for i in 0..n {
        u_sel[(i, 1 + i)] = T::one();
    }
    let mut v_sel = DMatrix::zeros(p, d);
    for l in 0..p {
        v_sel[(l, 1 + n + l)] = T::one();
    }
    let mut e0 = DVector::zeros(d);
    e0[0] = T::one();
    (u_sel, v_sel, e0)
}

fn moment_meta(n: usize, p: usize, bounds: usize) -> ProgramMeta {
    let tri = triangular_len(n);
    let mut meta = ProgramMeta {
        kind: ProgramKind::MomentPrimal,
        num_states: n,
        num_inputs: p,
        ..Default::default()
    };
    let names = &mut meta.names;
    names.insert("m".into(), VarSpan::Entry(0, 0));
    names.insert(
        "m_x".into(),
        VarSpan::Block { rows: (1, 1 + n), cols: (0, 1) },
    );
    names.insert(
        "m_u".into(),
        VarSpan::Block { rows: (1 + n, 1 + n + p), cols: (0, 1) },
    );
    names.insert(
        "Z_xx".into(),
        VarSpan::Block { rows: (1, 1 + n), cols: (1, 1 + n) },
    );
    names.insert(
        "Z_xu".into(),
        VarSpan::Block { rows: (1, 1 + n), cols: (1 + n, 1 + n + p) },
    );
    names.insert(
        "Z_uu".into(),
        VarSpan::Block { rows: (1 + n, 1 + n + p), cols: (1 + n, 1 + n + p) },
    );
    names.insert("eq_mass".into(), VarSpan::EqRange(0, 1));
    names.insert("eq_mean".into(), VarSpan::EqRange(1, 1 + n));
    names.insert("eq_second_moment".into(), VarSpan::EqRange(1 + n, 1 + n + tri));
    names.insert(
        "eq_bounds".into(),
        VarSpan::EqRange(1 + n + tri, 1 + n + tri + bounds),
    );
    names.insert("slack_bounds".into(), VarSpan::SlackRange(0, bounds));
    meta
}

/// Builds the occupation-moment program. The PSD block is the moment matrix
/// `Z` of side `1 + n + p`; each moment bound contributes one nonnegative
/// slack.
pub fn build_primal<T: FloatT>(p: &DiscountedLqgProblem<T>) -> Result<ConicProgram<T>> {
    ensure_buildable(p)?;
    let n = p.num_states();
    let np = p.num_inputs();
    let d = 1 + n + np;
    let nb = p.moment_bounds.len();
    let alpha = p.alpha;
    let (u_sel, v_sel, e0) = selections::<T>(n, np);
    let f_sel = &p.system.a * &u_sel + &p.system.b * &v_sel; // state update of (1,x,u)
    let g_sel = (&p.system.a * &u_sel).scale(alpha) - &u_sel + (&p.system.b * &v_sel).scale(alpha);

    let sym = |m: &DMatrix<T>| SymmetricMatrix::from_dense(m);

    let mut equalities = Vec::with_capacity(1 + n + triangular_len(n) + nb);

    // (C0): (alpha - 1) m = -1.
    let mut mass_mat = SymmetricMatrix::zeros(d);
    mass_mat.set(0, 0, alpha - T::one());
    equalities.push(EqualityRow {
        mat: mass_mat,
        lin: DVector::zeros(nb),
        free: DVector::zeros(0),
        rhs: -T::one(),
    });

    // (C1), row j: <sym(e0 e_j' G), Z> = -m0_j.
    for j in 0..n {
        let row = g_sel.row(j).clone_owned();
        let mat = &e0 * row; // d x d, only first row populated
        equalities.push(EqualityRow {
            mat: sym(&mat)?,
            lin: DVector::zeros(nb),
            free: DVector::zeros(0),
            rhs: -p.init.mean[j],
        });
    }

    // (C2), upper triangle (j <= k):
    // <sym(-U'e_j e_k'U + alpha F'e_j e_k'F + alpha W_jk e0 e0'), Z>
    //   = -(Sigma0 + m0 m0')_jk.
    let init_second = &p.init.cov + &p.init.mean * p.init.mean.transpose();
    for j in 0..n {
        for k in j..n {
            let uj = u_sel.row(j).clone_owned();
            let uk = u_sel.row(k).clone_owned();
            let fj = f_sel.row(j).clone_owned();
            let fk = f_sel.row(k).clone_owned();
            let mut mat = (fj.transpose() * fk).scale(alpha) - uj.transpose() * uk;
            let w_jk = (p.system.w[(j, k)] + p.system.w[(k, j)]) * fl::<T>(0.5);
            mat += (&e0 * e0.transpose()).scale(alpha * w_jk);
            equalities.push(EqualityRow {
                mat: sym(&mat)?,
                lin: DVector::zeros(nb),
                free: DVector::zeros(0),
                rhs: -init_second[(j, k)],
            });
        }
    }

    // One slacked trace row per moment bound.
    for (i, bound) in p.moment_bounds.iter().enumerate() {
        let mat = u_sel.transpose() * &bound.cost.q * &u_sel
            + v_sel.transpose() * &bound.cost.r * &v_sel;
        let mut lin = DVector::zeros(nb);
        lin[i] = T::one();
        equalities.push(EqualityRow {
            mat: sym(&mat)?,
            lin,
            free: DVector::zeros(0),
            rhs: bound.beta,
        });
    }

    let obj = u_sel.transpose() * &p.cost.q * &u_sel + v_sel.transpose() * &p.cost.r * &v_sel;

    let prog = ConicProgram {
        psd_dim: d,
        num_nonneg: nb,
        num_free: 0,
        obj_mat: sym(&obj)?,
        obj_lin: DVector::zeros(nb),
        obj_free: DVector::zeros(0),
        equalities,
        meta: moment_meta(n, np, nb),
    };
    prog.validate()?;
    Ok(prog)
}

/// The Bellman LMI of the value program:
///
/// ```text
/// [ r(alpha-1) + alpha Tr(PW)   s1'                 s2'              ]
/// [ s1                          alpha A'PA - P + Q  alpha A'PB       ]
/// [ s2                          alpha B'PA          R + alpha B'PB   ]
/// ```
///
/// with `s1 = (1/2)(-I + alpha A') q`, `s2 = (alpha/2) B'q`,
/// `Q = Q0 + sum_i gamma_i Q_i` and `R = R0 + sum_i gamma_i R_i`.
pub fn lmi_matrix<T: FloatT>(
    prob: &DiscountedLqgProblem<T>,
    p_mat: &DMatrix<T>,
    q_vec: &DVector<T>,
    r: T,
    gammas: &[T],
) -> DMatrix<T> {
    let n = prob.num_states();
    let np = prob.num_inputs();
    let d = 1 + n + np;
    let alpha = prob.alpha;
    let a = &prob.system.a;
    let b = &prob.system.b;
    let half = fl::<T>(0.5);

    let mut q_eff = prob.cost.q.clone();
    let mut r_eff = prob.cost.r.clone();
    for (g, bound) in gammas.iter().zip(prob.moment_bounds.iter()) {
        q_eff += bound.cost.q.scale(*g);
        r_eff += bound.cost.r.scale(*g);
    }

    let s0 = r * (alpha - T::one()) + alpha * (p_mat * &prob.system.w).trace();
    let s1 = (a.transpose().scale(alpha) - DMatrix::identity(n, n)) * q_vec * half;
    let s2 = (b.transpose() * q_vec).scale(alpha * half);
    let s11 = (a.transpose() * p_mat * a).scale(alpha) - p_mat + q_eff;
    let s12 = (a.transpose() * p_mat * b).scale(alpha);
    let s22 = r_eff + (b.transpose() * p_mat * b).scale(alpha);

    let mut out = DMatrix::zeros(d, d);
    out[(0, 0)] = s0;
    for i in 0..n {
        out[(1 + i, 0)] = s1[i];
        out[(0, 1 + i)] = s1[i];
        for j in 0..n {
            out[(1 + i, 1 + j)] = s11[(i, j)];
        }
        for l in 0..np {
            out[(1 + i, 1 + n + l)] = s12[(i, l)];
            out[(1 + n + l, 1 + i)] = s12[(i, l)];
        }
    }
    for k in 0..np {
        out[(1 + n + k, 0)] = s2[k];
        out[(0, 1 + n + k)] = s2[k];
        for l in 0..np {
            out[(1 + n + k, 1 + n + l)] = s22[(k, l)];
        }
    }
    out
}

/// Storage order of the free `P` entries: lower triangle, row-major, matching
/// [`SymmetricMatrix`].
fn p_entry_order(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(triangular_len(n));
    for i in 0..n {
        for j in 0..=i {
            out.push((i, j));
        }
    }
    out
}

fn value_vars_to_parts<T: FloatT>(
    n: usize,
    vars: &DVector<T>,
) -> (DMatrix<T>, DVector<T>, T) {
    let order = p_entry_order(n);
    let mut p_mat = DMatrix::zeros(n, n);
    for (idx, &(i, j)) in order.iter().enumerate() {
        p_mat[(i, j)] = vars[idx];
        p_mat[(j, i)] = vars[idx];
    }
    let tri = order.len();
    let q_vec = DVector::from_fn(n, |j, _| vars[tri + j]);
    let r = vars[tri + n];
    (p_mat, q_vec, r)
}

/// Builds the value-function program as a standard-form minimization: the PSD
/// block is the LMI slack, `(P, q, r)` live in the free block, and each
/// moment bound contributes one nonnegative multiplier `gamma_i`.
pub fn build_dual<T: FloatT>(p: &DiscountedLqgProblem<T>) -> Result<ConicProgram<T>> {
    ensure_buildable(p)?;
    let n = p.num_states();
    let np = p.num_inputs();
    let d = 1 + n + np;
    let nb = p.moment_bounds.len();
    let tri = triangular_len(n);
    let nf = tri + n + 1;

    let zero_p = DMatrix::zeros(n, n);
    let zero_q = DVector::zeros(n);
    let zero_g = vec![T::zero(); nb];
    let base = lmi_matrix(p, &zero_p, &zero_q, T::zero(), &zero_g);

    // Linear pieces of the LMI, one per decision variable, by evaluation.
    let mut free_cols: Vec<DMatrix<T>> = Vec::with_capacity(nf);
    for &(i, j) in p_entry_order(n).iter() {
        let mut unit = DMatrix::zeros(n, n);
        unit[(i, j)] = T::one();
        unit[(j, i)] = T::one();
        free_cols.push(lmi_matrix(p, &unit, &zero_q, T::zero(), &zero_g) - &base);
    }
    for j in 0..n {
        let mut unit = DVector::zeros(n);
        unit[j] = T::one();
        free_cols.push(lmi_matrix(p, &zero_p, &unit, T::zero(), &zero_g) - &base);
    }
    free_cols.push(lmi_matrix(p, &zero_p, &zero_q, T::one(), &zero_g) - &base);

    let mut gamma_cols: Vec<DMatrix<T>> = Vec::with_capacity(nb);
    for i in 0..nb {
        let mut g = vec![T::zero(); nb];
        g[i] = T::one();
        gamma_cols.push(lmi_matrix(p, &zero_p, &zero_q, T::zero(), &g) - &base);
    }

    // Equalities: X_jk - [linear part]_jk = [base]_jk, upper triangle.
    let mut equalities = Vec::with_capacity(triangular_len(d));
    let half = fl::<T>(0.5);
    for j in 0..d {
        for k in j..d {
            let mut sel = SymmetricMatrix::zeros(d);
            sel.set(j, k, if j == k { T::one() } else { half });
            let free = DVector::from_fn(nf, |l, _| -free_cols[l][(j, k)]);
            let lin = DVector::from_fn(nb, |i, _| -gamma_cols[i][(j, k)]);
            equalities.push(EqualityRow {
                mat: sel,
                lin,
                free,
                rhs: base[(j, k)],
            });
        }
    }

    // Objective: minimize the negated value
    // -(Tr(P Sigma0) + m0'P m0 + q'm0 + r) + sum_i gamma_i beta_i.
    let init_second = &p.init.cov + &p.init.mean * p.init.mean.transpose();
    let mut obj_free = DVector::zeros(nf);
    for (idx, &(i, j)) in p_entry_order(n).iter().enumerate() {
        let two = fl::<T>(2.0);
        obj_free[idx] = if i == j {
            -init_second[(i, i)]
        } else {
            -two * init_second[(i, j)]
        };
    }
    for j in 0..n {
        obj_free[tri + j] = -p.init.mean[j];
    }
    obj_free[tri + n] = -T::one();
    let obj_lin = DVector::from_fn(nb, |i, _| p.moment_bounds[i].beta);

    let mut meta = ProgramMeta {
        kind: ProgramKind::ValueDual,
        num_states: n,
        num_inputs: np,
        ..Default::default()
    };
    meta.names.insert("P".into(), VarSpan::FreeRange(0, tri));
    meta.names.insert("q".into(), VarSpan::FreeRange(tri, tri + n));
    meta.names.insert("r".into(), VarSpan::FreeRange(tri + n, tri + n + 1));
    meta.names.insert("gamma".into(), VarSpan::SlackRange(0, nb));
    meta.names.insert(
        "lmi".into(),
        VarSpan::Block { rows: (0, d), cols: (0, d) },
    );

    let prog = ConicProgram {
        psd_dim: d,
        num_nonneg: nb,
        num_free: nf,
        obj_mat: SymmetricMatrix::zeros(d),
        obj_lin,
        obj_free,
        equalities,
        meta,
    };
    prog.validate()?;
    Ok(prog)
}

fn require_optimal<T: FloatT>(sol: &ConicSolution<T>) -> Result<()> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal { status: sol.status });
    }
    Ok(())
}

/// Reads the occupation moments out of a moment-program solution.
pub fn extract_moments<T: FloatT>(
    prog: &ConicProgram<T>,
    sol: &ConicSolution<T>,
) -> Result<OccupationMoments<T>> {
    require_optimal(sol)?;
    if prog.meta.kind != ProgramKind::MomentPrimal {
        return Err(Error::InvalidArgument(
            "extract_moments requires a moment program".into(),
        ));
    }
    OccupationMoments::from_z(&sol.x, prog.meta.num_states, prog.meta.num_inputs)
}

/// Recovers the value function and bound multipliers from a solution of
/// either program.
///
/// From a value-program solution, `(P, q, r)` are the free variables and
/// `gamma` the nonnegative block. From a moment-program solution they are
/// read off the equality multipliers `y` (the two programs are conic duals):
/// `r = -y_mass`, `q = -y_mean`, `P_jj = -y_jj`, `P_jk = -y_jk / 2` for
/// `j < k`, `gamma_i = max(0, -y_bound_i)`.
pub fn extract_value<T: FloatT>(
    prog: &ConicProgram<T>,
    sol: &ConicSolution<T>,
) -> Result<(QuadraticValueFunction<T>, DVector<T>)> {
    require_optimal(sol)?;
    let n = prog.meta.num_states;
    match prog.meta.kind {
        ProgramKind::ValueDual => {
            let (p_mat, q_vec, r) = value_vars_to_parts(n, &sol.free);
            let gammas = DVector::from_fn(sol.slacks.len(), |i, _| sol.slacks[i].max(T::zero()));
            Ok((QuadraticValueFunction { p: p_mat, q: q_vec, r }, gammas))
        }
        ProgramKind::MomentPrimal => {
            let tri = triangular_len(n);
            let r = -sol.y[0];
            let q_vec = DVector::from_fn(n, |j, _| -sol.y[1 + j]);
            let mut p_mat = DMatrix::zeros(n, n);
            let mut idx = 1 + n;
            let half = fl::<T>(0.5);
            for j in 0..n {
                for k in j..n {
                    let y = sol.y[idx];
                    idx += 1;
                    if j == k {
                        p_mat[(j, j)] = -y;
                    } else {
                        p_mat[(j, k)] = -y * half;
                        p_mat[(k, j)] = -y * half;
                    }
                }
            }
            let nb = sol.y.len() - (1 + n + tri);
            let gammas =
                DVector::from_fn(nb, |i, _| (-sol.y[1 + n + tri + i]).max(T::zero()));
            Ok((QuadraticValueFunction { p: p_mat, q: q_vec, r }, gammas))
        }
        ProgramKind::Generic => Err(Error::InvalidArgument(
            "extract_value requires a moment or value program".into(),
        )),
    }
}

/// `Tr(Q0 Z_xx) + Tr(R0 Z_uu)`.
pub fn moment_objective<T: FloatT>(
    p: &DiscountedLqgProblem<T>,
    mom: &OccupationMoments<T>,
) -> T {
    (&p.cost.q * &mom.z_xx).trace() + (&p.cost.r * &mom.z_uu).trace()
}

/// Worst relative violation of `(C0)`, `(C1)`, `(C2)` and `(Cp)` by a set of
/// candidate moments. Used to check that oracle-generated moments are
/// feasible and that solver moments satisfy the model constraints.
pub fn moment_feasibility_error<T: FloatT>(
    p: &DiscountedLqgProblem<T>,
    mom: &OccupationMoments<T>,
) -> T {
    let alpha = p.alpha;
    let a = &p.system.a;
    let b = &p.system.b;
    let mut worst = (alpha * mom.m - mom.m + T::one()).abs() / fl::<T>(2.0);

    let mean_res = &p.init.mean - &mom.m_x + (a * &mom.m_x + b * &mom.m_u).scale(alpha);
    for j in 0..p.num_states() {
        let rel = mean_res[j].abs() / (T::one() + p.init.mean[j].abs());
        worst = worst.max(rel);
    }

    let init_second = &p.init.cov + &p.init.mean * p.init.mean.transpose();
    let closed = a * &mom.z_xx * a.transpose()
        + a * &mom.z_xu * b.transpose()
        + b * mom.z_xu.transpose() * a.transpose()
        + b * &mom.z_uu * b.transpose()
        + p.system.w.scale(mom.m);
    let second_res = &init_second - &mom.z_xx + closed.scale(alpha);
    for j in 0..p.num_states() {
        for k in 0..p.num_states() {
            let rel = second_res[(j, k)].abs() / (T::one() + init_second[(j, k)].abs());
            worst = worst.max(rel);
        }
    }

    let z = mom.assemble();
    let min_eig = min_eigenvalue(&z);
    let cone = (-min_eig).max(T::zero()) / (T::one() + z.trace().abs());
    worst.max(cone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipm::{solve_conic, SolverOptions};
    use crate::problem::{
        InitialDistribution, LinearStochasticSystem, MomentBound, QuadraticStageCost,
    };
    use crate::riccati;
    use approx::assert_relative_eq;

    fn scalar_problem() -> DiscountedLqgProblem<f64> {
        DiscountedLqgProblem {
            system: LinearStochasticSystem {
                a: DMatrix::from_element(1, 1, 0.5),
                b: DMatrix::from_element(1, 1, 1.0),
                w: DMatrix::from_element(1, 1, 1.0),
            },
            init: InitialDistribution {
                mean: DVector::zeros(1),
                cov: DMatrix::from_element(1, 1, 1.0),
            },
            cost: QuadraticStageCost {
                q: DMatrix::from_element(1, 1, 1.0),
                r: DMatrix::from_element(1, 1, 1.0),
            },
            alpha: 0.9,
            moment_bounds: vec![],
            chance_specs: vec![],
        }
    }

    fn two_state_printed() -> DiscountedLqgProblem<f64> {
        DiscountedLqgProblem {
            system: LinearStochasticSystem {
                a: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
                b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
                w: DMatrix::identity(2, 2) * 0.1,
            },
            init: InitialDistribution {
                mean: DVector::from_vec(vec![-0.46, 0.58]),
                cov: DMatrix::identity(2, 2),
            },
            cost: QuadraticStageCost {
                q: DMatrix::identity(2, 2),
                r: DMatrix::from_element(1, 1, 1.0),
            },
            alpha: 0.99,
            moment_bounds: vec![],
            chance_specs: vec![],
        }
    }

    fn with_second_state_bound(mut p: DiscountedLqgProblem<f64>, beta: f64) -> DiscountedLqgProblem<f64> {
        p.moment_bounds.push(MomentBound {
            cost: QuadraticStageCost {
                q: DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])),
                r: DMatrix::zeros(1, 1),
            },
            beta,
        });
        p
    }

    fn scalar_p() -> f64 {
        (0.125 + 3.615625f64.sqrt()) / 1.8
    }

    #[test]
    fn primal_program_dimensions_two_state() {
        let p = with_second_state_bound(two_state_printed(), 15.0);
        let prog = build_primal(&p).unwrap();
        assert_eq!(prog.psd_dim, 4);
        assert_eq!(prog.num_nonneg, 1);
        // 1 mass + 2 mean + 3 second-moment rows, plus the bound row.
        assert_eq!(prog.num_equalities(), 6 + 1);
        assert_eq!(prog.num_free, 0);
    }

    #[test]
    fn primal_rejects_untranslated_chance_specs() {
        let mut p = two_state_printed();
        p.chance_specs.push(crate::problem::ChanceSpec {
            g: DVector::from_vec(vec![0.0, 1.0]),
            h: 1.0,
            eps: 0.1,
            mode: crate::problem::ChanceMode::Markov,
        });
        assert!(build_primal(&p).is_err());
        assert!(build_dual(&p).is_err());
    }

    #[test]
    fn scalar_primal_solve_matches_closed_form() {
        let p = scalar_problem();
        let prog = build_primal(&p).unwrap();
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        // Optimal objective equals 10 P with P the Riccati root.
        assert_relative_eq!(sol.primal_obj, 10.0 * scalar_p(), max_relative = 1e-7);
        assert_relative_eq!(sol.primal_obj, 11.25822, max_relative = 1e-5);

        let mom = extract_moments(&prog, &sol).unwrap();
        assert_relative_eq!(mom.m, 10.0, epsilon = 1e-6);
        // Z_xx against the discounted Lyapunov closed form.
        let k = -(0.9 * scalar_p() * 0.5) / (1.0 + 0.9 * scalar_p());
        let m_cl = 0.5 + k;
        let z_xx = 10.0 / (1.0 - 0.9 * m_cl * m_cl);
        assert_relative_eq!(mom.z_xx[(0, 0)], z_xx, max_relative = 1e-5);
        assert_relative_eq!(mom.z_xx[(0, 0)], 10.5877, max_relative = 1e-4);
        let z = mom.assemble();
        assert!(min_eigenvalue(&z) >= -1e-7);
    }

    #[test]
    fn scalar_dual_solve_recovers_value_function() {
        let p = scalar_problem();
        let prog = build_dual(&p).unwrap();
        assert_eq!(prog.psd_dim, 3);
        assert_eq!(prog.num_free, 3); // P, q, r for n = 1
        assert_eq!(prog.num_equalities(), 6);
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let (v, gammas) = extract_value(&prog, &sol).unwrap();
        assert_eq!(gammas.len(), 0);
        assert_relative_eq!(v.p[(0, 0)], scalar_p(), max_relative = 1e-6);
        assert_relative_eq!(v.p[(0, 0)], 1.125822, max_relative = 1e-5);
        assert!(v.q[0].abs() <= 1e-6);
        // r = alpha/(1-alpha) Tr(PW) = 9 P.
        assert_relative_eq!(v.r, 9.0 * scalar_p(), max_relative = 1e-6);
        // Maximized value = -primal_obj of the minimization encoding.
        assert_relative_eq!(-sol.primal_obj, 10.0 * scalar_p(), max_relative = 1e-6);
        let expected = riccati::optimal_cost(&v.p, &v.q, v.r, &p.init);
        assert_relative_eq!(expected, -sol.primal_obj, max_relative = 1e-6);
    }

    #[test]
    fn dual_objective_reduces_to_trace_p_without_noise() {
        // W = 0, m0 = 0, Sigma0 = I: maximized value equals Tr(P).
        let mut p = two_state_printed();
        p.system.w = DMatrix::zeros(2, 2);
        p.init.mean = DVector::zeros(2);
        let prog = build_dual(&p).unwrap();
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let (v, _) = extract_value(&prog, &sol).unwrap();
        assert_relative_eq!(-sol.primal_obj, v.p.trace(), max_relative = 1e-7);
        assert!(v.q.norm() <= 1e-6);
    }

    #[test]
    fn value_function_from_moment_multipliers_matches_dual_solve() {
        for p in [scalar_problem(), two_state_printed()] {
            let opts = SolverOptions::default();
            let primal = build_primal(&p).unwrap();
            let psol = solve_conic(&primal, &opts).unwrap();
            assert_eq!(psol.status, SolveStatus::Optimal);
            let (v_from_y, _) = extract_value(&primal, &psol).unwrap();

            let dual = build_dual(&p).unwrap();
            let dsol = solve_conic(&dual, &opts).unwrap();
            assert_eq!(dsol.status, SolveStatus::Optimal);
            let (v_from_dual, _) = extract_value(&dual, &dsol).unwrap();

            assert_relative_eq!(v_from_y.p, v_from_dual.p, epsilon = 1e-5);
            assert_relative_eq!(v_from_y.r, v_from_dual.r, max_relative = 1e-5);
            assert!((v_from_y.q.clone() - v_from_dual.q).norm() <= 1e-5);

            // Strong duality across the two independent solves.
            let gap = (psol.primal_obj - (-dsol.primal_obj)).abs() / (1.0 + psol.primal_obj.abs());
            assert!(gap <= 1e-6, "gap {gap}");
        }
    }

    #[test]
    fn inactive_bound_has_zero_multiplier() {
        let p = with_second_state_bound(scalar_problem_with_two_states(), 1e6);
        let prog = build_primal(&p).unwrap();
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let (_, gammas) = extract_value(&prog, &sol).unwrap();
        assert!(gammas[0] <= 1e-7, "gamma = {}", gammas[0]);
    }

    fn scalar_problem_with_two_states() -> DiscountedLqgProblem<f64> {
        two_state_printed()
    }

    #[test]
    fn tightening_a_bound_never_decreases_cost() {
        let unconstrained = two_state_printed();
        let prog = build_primal(&unconstrained).unwrap();
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        let mom = extract_moments(&prog, &sol).unwrap();
        let spare = mom.z_xx[(1, 1)];

        let mut last = sol.primal_obj;
        for beta in [spare * 0.8, spare * 0.5] {
            let p = with_second_state_bound(two_state_printed(), beta);
            let prog = build_primal(&p).unwrap();
            let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!(
                sol.primal_obj >= last - 1e-6 * (1.0 + last.abs()),
                "objective decreased when tightening: {} -> {}",
                last,
                sol.primal_obj
            );
            last = sol.primal_obj;
        }
    }

    #[test]
    fn oracle_moments_are_feasible_for_any_stabilizing_gain() {
        let p = two_state_printed();
        for k_gain in [
            DMatrix::from_row_slice(1, 2, &[-0.3, -0.9]),
            DMatrix::from_row_slice(1, 2, &[-0.5, -1.2]),
        ] {
            let mom = riccati::closed_loop_moments(&p, &k_gain).unwrap();
            let err = moment_feasibility_error(&p, &mom);
            assert!(err <= 1e-8, "feasibility error {err}");
        }
    }

    #[test]
    fn extraction_requires_optimal_status() {
        let p = scalar_problem();
        let prog = build_primal(&p).unwrap();
        let mut sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        sol.status = SolveStatus::MaxIter;
        assert!(matches!(
            extract_moments(&prog, &sol),
            Err(Error::NotOptimal { .. })
        ));
        assert!(matches!(
            extract_value(&prog, &sol),
            Err(Error::NotOptimal { .. })
        ));
    }
}
