//! Independent ground truth for the SDP pipeline: discounted Riccati fixed
//! point, discounted Lyapunov moments, and the analytic optimal cost.
//!
//! Everything here is deliberately free of any conic-program code so it can
//! cross-validate the solver. The Riccati recursion and the gain use the
//! sign-corrected forms
//!
//! ```text
//! P = Q + a A'PA - a^2 A'PB (R + a B'PB)^{-1} B'PA
//! K = -(R + a B'PB)^{-1} a B'PA
//! ```
//!
//! which are the ones consistent with complementary slackness of the moment
//! and value programs (see the tests, which also evaluate the sign-flipped
//! variants and show they do not vanish at the fixed point).

use crate::builder::OccupationMoments;
use crate::error::{Error, Result};
use crate::problem::DiscountedLqgProblem;
use crate::scalar::{as_f64, fl, FloatT};
use nalgebra::{DMatrix, DVector};

/// Default convergence tolerance of the fixed-point iteration. The oracle
/// must out-precise the solver it validates.
pub const DEFAULT_DARE_TOL: f64 = 1e-12;
/// Default iteration cap of the fixed-point iteration.
pub const DEFAULT_DARE_MAX_ITER: usize = 100_000;

/// Outcome of [`solve_dare`]. When the iteration cap is hit the last iterate
/// and its step residual are still returned, with `converged = false`.
#[derive(Debug, Clone)]
pub struct DareSolution<T: FloatT> {
    pub p: DMatrix<T>,
    pub iterations: usize,
    /// `||P_{k+1} - P_k||_F / (1 + ||P_k||_F)` at the final step.
    pub residual: T,
    pub converged: bool,
}

fn symmetrize<T: FloatT>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()).scale(fl(0.5))
}

/// One application of the discounted Riccati map to `p`.
fn riccati_map<T: FloatT>(
    p: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    alpha: T,
) -> Result<DMatrix<T>> {
    let bpa = b.transpose() * p * a;
    let g = r + (b.transpose() * p * b).scale(alpha);
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("R + alpha B'PB in the Riccati map".into()))?;
    let correction = (a.transpose() * p * b) * chol.solve(&bpa);
    Ok(symmetrize(
        &(q + (a.transpose() * p * a).scale(alpha) - correction.scale(alpha * alpha)),
    ))
}

/// Solves the discounted discrete algebraic Riccati equation by fixed-point
/// (value) iteration started at `P_0 = Q`.
pub fn solve_dare<T: FloatT>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    alpha: T,
    tol: T,
    max_iter: usize,
) -> Result<DareSolution<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch("solve_dare inputs".into()));
    }
    if r.nrows() != b.ncols() || r.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch("R against B".into()));
    }
    let mut p = symmetrize(q);
    let mut residual = T::zero();
    for k in 1..=max_iter {
        let next = riccati_map(&p, a, b, q, r, alpha)?;
        residual = (&next - &p).norm() / (T::one() + p.norm());
        p = next;
        if residual <= tol {
            return Ok(DareSolution {
                p,
                iterations: k,
                residual,
                converged: true,
            });
        }
    }
    Ok(DareSolution {
        p,
        iterations: max_iter,
        residual,
        converged: false,
    })
}

/// Frobenius residual of the (sign-corrected) discounted Riccati equation at
/// the candidate `p`.
pub fn dare_residual<T: FloatT>(
    p: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    alpha: T,
) -> Result<T> {
    Ok((riccati_map(p, a, b, q, r, alpha)? - p).norm())
}

/// Optimal feedback gain `K = -(R + a B'PB)^{-1} a B'PA`; the policy is
/// `u = K x`.
pub fn gain_from_value<T: FloatT>(
    p: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    r: &DMatrix<T>,
    alpha: T,
) -> Result<DMatrix<T>> {
    let g = r + (b.transpose() * p * b).scale(alpha);
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("R + alpha B'PB in gain_from_value".into()))?;
    Ok(-chol.solve(&(b.transpose() * p * a).scale(alpha)))
}

/// Spectral radius of `sqrt(alpha) * M`.
pub fn discounted_spectral_radius<T: FloatT>(m: &DMatrix<T>, alpha: T) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    let eig = m.clone().complex_eigenvalues();
    let rho = eig
        .iter()
        .map(|c| (c.re * c.re + c.im * c.im).sqrt())
        .fold(T::zero(), |a, b| a.max(b));
    alpha.sqrt() * rho
}

/// Solves `Z = RHS + alpha * M Z M^T` by a direct Kronecker linear solve.
///
/// Intended for small systems (the linear system is `n^2 x n^2`); requires
/// `spectral_radius(sqrt(alpha) * M) < 1`.
pub fn lyapunov_solve<T: FloatT>(
    m: &DMatrix<T>,
    rhs: &DMatrix<T>,
    alpha: T,
) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if m.ncols() != n || rhs.nrows() != n || rhs.ncols() != n {
        return Err(Error::DimensionMismatch("lyapunov_solve inputs".into()));
    }
    let rho = discounted_spectral_radius(m, alpha);
    if rho >= T::one() {
        return Err(Error::Unstable {
            rho: as_f64(rho),
            context: "lyapunov_solve".into(),
        });
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    // (I - alpha M (x) M) vec(Z) = vec(RHS), column-major vec.
    let nn = n * n;
    let mut sys = DMatrix::<T>::identity(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for l in 0..n {
                for k in 0..n {
                    let col = k + n * l;
                    sys[(row, col)] -= alpha * m[(i, k)] * m[(j, l)];
                }
            }
        }
    }
    let mut vec_rhs = DVector::<T>::zeros(nn);
    for j in 0..n {
        for i in 0..n {
            vec_rhs[i + n * j] = rhs[(i, j)];
        }
    }
    let lu = sys.lu();
    let sol = lu
        .solve(&vec_rhs)
        .ok_or_else(|| Error::Singular("discounted Lyapunov operator".into()))?;
    let z = DMatrix::from_fn(n, n, |i, j| sol[i + n * j]);
    Ok(symmetrize(&z))
}

/// Closed-loop discounted occupation moments under the linear policy
/// `u = K x`:
///
/// ```text
/// m    = 1 / (1 - alpha)
/// m_x  = (I - alpha (A + BK))^{-1} m0
/// Z_xx = Sigma0 + m0 m0' + alpha m W + alpha (A+BK) Z_xx (A+BK)'
/// Z_xu = Z_xx K',  Z_uu = K Z_xx K',  m_u = K m_x
/// ```
pub fn closed_loop_moments<T: FloatT>(
    p: &DiscountedLqgProblem<T>,
    k: &DMatrix<T>,
) -> Result<OccupationMoments<T>> {
    p.check_dimensions()?;
    let n = p.num_states();
    if k.nrows() != p.num_inputs() || k.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            p.num_inputs(),
            n
        )));
    }
    let alpha = p.alpha;
    let closed = &p.system.a + &p.system.b * k;
    let rho = discounted_spectral_radius(&closed, alpha);
    if rho >= T::one() {
        return Err(Error::Unstable {
            rho: as_f64(rho),
            context: "closed_loop_moments".into(),
        });
    }
    let mass = T::one() / (T::one() - alpha);
    let eye = DMatrix::<T>::identity(n, n);
    let m_x = (&eye - closed.scale(alpha))
        .lu()
        .solve(&p.init.mean)
        .ok_or_else(|| Error::Singular("I - alpha (A + BK)".into()))?;
    let rhs = &p.init.cov
        + &p.init.mean * p.init.mean.transpose()
        + p.system.w.scale(alpha * mass);
    let z_xx = lyapunov_solve(&closed, &rhs, alpha)?;
    let m_u = k * &m_x;
    let z_xu = &z_xx * k.transpose();
    let z_uu = k * &z_xx * k.transpose();
    Ok(OccupationMoments {
        m: mass,
        m_x,
        m_u,
        z_xx,
        z_xu,
        z_uu,
    })
}

/// Expected value of the quadratic `v(x) = x'Px + q'x + r` under the initial
/// law: `Tr(P Sigma0) + m0'P m0 + q'm0 + r`.
pub fn optimal_cost<T: FloatT>(
    p_mat: &DMatrix<T>,
    q_vec: &DVector<T>,
    r: T,
    init: &crate::problem::InitialDistribution<T>,
) -> T {
    let trace = (p_mat * &init.cov).trace();
    trace + (p_mat * &init.mean).dot(&init.mean) + q_vec.dot(&init.mean) + r
}
