//! Discounted LQG problem instances, constraint specifications, and the
//! standing-assumption checks.

use crate::error::{Error, Result};
use crate::scalar::{as_f64, fl, FloatT};
use nalgebra::{DMatrix, DVector};

/// `x_{t+1} = A x_t + B u_t + w_t`, with `w_t ~ N(0, W)` i.i.d.
#[derive(Debug, Clone)]
pub struct LinearStochasticSystem<T: FloatT> {
    /// State transition, `n x n`.
    pub a: DMatrix<T>,
    /// Input map, `n x p`.
    pub b: DMatrix<T>,
    /// Process-noise covariance, `n x n` symmetric PSD.
    pub w: DMatrix<T>,
}

/// Initial state law `x_0 ~ N(mean, cov)`.
#[derive(Debug, Clone)]
pub struct InitialDistribution<T: FloatT> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

/// Stage cost `x^T Q x + u^T R u`.
#[derive(Debug, Clone)]
pub struct QuadraticStageCost<T: FloatT> {
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

/// Bound `E sum_t alpha^t (x^T Q_i x + u^T R_i u) <= beta` on a secondary
/// objective.
#[derive(Debug, Clone)]
pub struct MomentBound<T: FloatT> {
    pub cost: QuadraticStageCost<T>,
    pub beta: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChanceMode {
    /// Markov-inequality translation: sound for any policy.
    Markov,
    /// Tighter translation assuming the closed-loop occupancy behaves like a
    /// scaled Gaussian; see [`crate::chance`] for the caveat.
    Gaussian,
}

/// Discounted chance requirement `sum_t alpha^t Pr(|g^T x_t| >= h) <= eps`.
#[derive(Debug, Clone)]
pub struct ChanceSpec<T: FloatT> {
    pub g: DVector<T>,
    pub h: T,
    pub eps: T,
    pub mode: ChanceMode,
}

/// A complete problem instance.
#[derive(Debug, Clone)]
pub struct DiscountedLqgProblem<T: FloatT> {
    pub system: LinearStochasticSystem<T>,
    pub init: InitialDistribution<T>,
    pub cost: QuadraticStageCost<T>,
    /// Discount factor in `(0, 1)`.
    pub alpha: T,
    pub moment_bounds: Vec<MomentBound<T>>,
    pub chance_specs: Vec<ChanceSpec<T>>,
}

impl<T: FloatT> DiscountedLqgProblem<T> {
    pub fn num_states(&self) -> usize {
        self.system.a.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.system.b.ncols()
    }

    /// Total discounted mass `1 / (1 - alpha)`.
    pub fn total_mass(&self) -> T {
        T::one() / (T::one() - self.alpha)
    }

    /// Checks every matrix and vector dimension. This is the only hard
    /// precondition; all other validation is advisory.
    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.num_states();
        let p = self.num_inputs();
        let square = |name: &str, m: &DMatrix<T>, d: usize| -> Result<()> {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(())
        };
        square("A", &self.system.a, n)?;
        if self.system.b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {n}",
                self.system.b.nrows()
            )));
        }
        square("W", &self.system.w, n)?;
        if self.init.mean.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "m0 has length {}, expected {n}",
                self.init.mean.len()
            )));
        }
        square("Sigma0", &self.init.cov, n)?;
        square("Q0", &self.cost.q, n)?;
        square("R0", &self.cost.r, p)?;
        for (i, b) in self.moment_bounds.iter().enumerate() {
            square(&format!("Q{}", i + 1), &b.cost.q, n)?;
            square(&format!("R{}", i + 1), &b.cost.r, p)?;
        }
        for (i, c) in self.chance_specs.iter().enumerate() {
            if c.g.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "chance spec {i}: g has length {}, expected {n}",
                    c.g.len()
                )));
            }
        }
        Ok(())
    }
}

/// One named validation check with its computed quantity.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The computed quantity behind the verdict (a rank, a min eigenvalue, ...).
    pub value: f64,
    pub detail: String,
}

/// Outcome of [`validate_problem`]: failures are warnings, not hard errors,
/// since the moment programs stay well-posed under several assumption
/// violations and the solver reports its own status.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn sym_eigenvalues<T: FloatT>(m: &DMatrix<T>) -> DVector<T> {
    let sym = (m + m.transpose()).scale(fl(0.5));
    sym.symmetric_eigenvalues()
}

fn min_max_eig<T: FloatT>(m: &DMatrix<T>) -> (T, T) {
    let eig = sym_eigenvalues(m);
    let mut lo = eig[0];
    let mut hi = eig[0].abs();
    for &e in eig.iter() {
        lo = lo.min(e);
        hi = hi.max(e.abs());
    }
    (lo, hi)
}

/// Numerical rank with the conventional threshold
/// `1e-8 * sigma_max * max(dim)`.
pub fn numerical_rank<T: FloatT>(m: &DMatrix<T>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let dim = fl_usize_max(m.nrows(), m.ncols());
    let thresh = fl::<T>(1e-8) * smax * dim;
    svd.singular_values.iter().filter(|&&s| s > thresh).count()
}

fn fl_usize_max<T: FloatT>(a: usize, b: usize) -> T {
    fl::<T>(a.max(b) as f64)
}

/// Controllability matrix `[B, AB, ..., A^{n-1} B]`.
pub fn controllability_matrix<T: FloatT>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let p = b.ncols();
    let mut out = DMatrix::zeros(n, n * p);
    let mut block = b.clone();
    for j in 0..n {
        out.view_mut((0, j * p), (n, p)).copy_from(&block);
        block = a * &block;
    }
    out
}

/// Observability matrix `[C; CA; ...; C A^{n-1}]`.
pub fn observability_matrix<T: FloatT>(a: &DMatrix<T>, c: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let k = c.nrows();
    let mut out = DMatrix::zeros(k * n, n);
    let mut block = c.clone();
    for j in 0..n {
        out.view_mut((j * k, 0), (k, n)).copy_from(&block);
        block = &block * a;
    }
    out
}

/// Factors a symmetric PSD matrix as `Q = C^T C` with `C` of full row rank.
///
/// Eigenvalues below `1e-10 * ||Q||` (spectral) are discarded; an eigenvalue
/// below `-1e-8 * ||Q||` is an error.
pub fn symmetric_factor<T: FloatT>(q: &DMatrix<T>) -> Result<DMatrix<T>> {
    if q.nrows() != q.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "symmetric_factor on {}x{} input",
            q.nrows(),
            q.ncols()
        )));
    }
    let n = q.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (q + q.transpose()).scale(fl(0.5));
    let eig = sym.symmetric_eigen();
    let norm = eig
        .eigenvalues
        .iter()
        .map(|e| e.abs())
        .fold(T::zero(), |a, b| a.max(b));
    let neg_tol = fl::<T>(1e-8) * norm;
    let drop_tol = fl::<T>(1e-10) * norm;
    let mut kept: Vec<usize> = Vec::new();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -neg_tol {
            return Err(Error::NotPsd {
                name: "Q".into(),
                min_eig: as_f64(lam),
            });
        }
        if lam > drop_tol {
            kept.push(i);
        }
    }
    let k = kept.len();
    let mut c = DMatrix::zeros(k, n);
    for (row, &i) in kept.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt();
        for col in 0..n {
            c[(row, col)] = scale * eig.eigenvectors[(col, i)];
        }
    }
    Ok(c)
}

/// Runs the standing-assumption checks and returns a diagnostic report.
///
/// The checks: `alpha` in `(0,1)`; `Q0`, `W`, `Sigma0` PSD; `R0` positive
/// definite; `(A, B)` controllable; `(A, C)` observable with `C` a symmetric
/// factor of `Q0`. Dimension mismatches error out before any check runs.
pub fn validate_problem<T: FloatT>(p: &DiscountedLqgProblem<T>) -> Result<ValidationReport> {
    p.check_dimensions()?;
    let n = p.num_states();
    let mut checks = Vec::new();

    let alpha = as_f64(p.alpha);
    checks.push(Check {
        name: "alpha_in_range".into(),
        passed: alpha > 0.0 && alpha < 1.0,
        value: alpha,
        detail: "discount factor must lie in (0, 1)".into(),
    });

    let psd_check = |name: &str, m: &DMatrix<T>| -> Check {
        let (lo, hi) = min_max_eig(m);
        let tol = fl::<T>(1e-10) * hi;
        Check {
            name: format!("{name}_psd"),
            passed: lo >= -tol,
            value: as_f64(lo),
            detail: format!("min eigenvalue of {name}"),
        }
    };
    checks.push(psd_check("q0", &p.cost.q));
    checks.push(psd_check("w", &p.system.w));
    checks.push(psd_check("sigma0", &p.init.cov));

    let (r_lo, _) = min_max_eig(&p.cost.r);
    checks.push(Check {
        name: "r0_pd".into(),
        passed: r_lo > T::zero(),
        value: as_f64(r_lo),
        detail: "min eigenvalue of R0 (must be > 0)".into(),
    });

    let ctrb = controllability_matrix(&p.system.a, &p.system.b);
    let ctrb_rank = numerical_rank(&ctrb);
    checks.push(Check {
        name: "controllability".into(),
        passed: ctrb_rank == n,
        value: ctrb_rank as f64,
        detail: format!("rank of [B, AB, ..., A^{}B], expected {n}", n.saturating_sub(1)),
    });

    match symmetric_factor(&p.cost.q) {
        Ok(c) => {
            let obs = observability_matrix(&p.system.a, &c);
            let obs_rank = numerical_rank(&obs);
            checks.push(Check {
                name: "observability".into(),
                passed: obs_rank == n,
                value: obs_rank as f64,
                detail: format!("rank of [C; CA; ...; CA^{}] with Q0 = C^T C", n.saturating_sub(1)),
            });
        }
        Err(e) => checks.push(Check {
            name: "observability".into(),
            passed: false,
            value: f64::NAN,
            detail: format!("Q0 factorization failed: {e}"),
        }),
    }

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn two_state_printed() -> DiscountedLqgProblem<f64> {
        DiscountedLqgProblem {
            system: LinearStochasticSystem {
                a: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
                b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
                w: DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.1])),
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

    #[test]
    fn two_state_system_passes_all_checks() {
        let report = validate_problem(&two_state_printed()).unwrap();
        assert!(report.all_passed(), "failed: {:?}", report.failed());
    }

    #[test]
    fn zero_input_map_fails_controllability_with_rank_zero() {
        let p = DiscountedLqgProblem {
            system: LinearStochasticSystem {
                a: DMatrix::zeros(1, 1),
                b: DMatrix::zeros(1, 1),
                w: DMatrix::identity(1, 1),
            },
            init: InitialDistribution {
                mean: DVector::zeros(1),
                cov: DMatrix::identity(1, 1),
            },
            cost: QuadraticStageCost {
                q: DMatrix::identity(1, 1),
                r: DMatrix::identity(1, 1),
            },
            alpha: 0.9,
            moment_bounds: vec![],
            chance_specs: vec![],
        };
        let report = validate_problem(&p).unwrap();
        let ctrb = report.checks.iter().find(|c| c.name == "controllability").unwrap();
        assert!(!ctrb.passed);
        assert_eq!(ctrb.value, 0.0);
    }

    #[test]
    fn zero_r0_fails_positive_definiteness_with_zero_eigenvalue() {
        let mut p = two_state_printed();
        p.cost.r = DMatrix::zeros(1, 1);
        let report = validate_problem(&p).unwrap();
        let r0 = report.checks.iter().find(|c| c.name == "r0_pd").unwrap();
        assert!(!r0.passed);
        assert_eq!(r0.value, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_a_hard_error() {
        let mut p = two_state_printed();
        p.system.b = DMatrix::zeros(3, 1);
        assert!(matches!(validate_problem(&p), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn validation_is_deterministic() {
        let p = two_state_printed();
        let a = validate_problem(&p).unwrap();
        let b = validate_problem(&p).unwrap();
        for (ca, cb) in a.checks.iter().zip(b.checks.iter()) {
            assert_eq!(ca.name, cb.name);
            assert_eq!(ca.passed, cb.passed);
            assert!(ca.value == cb.value || (ca.value.is_nan() && cb.value.is_nan()));
        }
    }

    #[test]
    fn symmetric_factor_identity() {
        let c = symmetric_factor(&DMatrix::<f64>::identity(2, 2)).unwrap();
        assert_eq!(c.nrows(), 2);
        let back = c.transpose() * &c;
        assert_relative_eq!(back, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn symmetric_factor_rank_one_diagonal() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        let c = symmetric_factor(&q).unwrap();
        assert_eq!(c.nrows(), 1);
        let back = c.transpose() * &c;
        assert_relative_eq!(back, q, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_factor_dense_psd_reconstructs() {
        // Oracle: eigendecomposition reconstruction of [[2,1],[1,2]].
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let c = symmetric_factor(&q).unwrap();
        let back = c.transpose() * &c;
        assert!((back - &q).norm() <= 1e-10 * (1.0 + q.norm()));
    }

    #[test]
    fn symmetric_factor_rejects_indefinite() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(symmetric_factor(&q), Err(Error::NotPsd { .. })));
    }

    /// Exact rank of a small integer matrix by fraction-free (Bareiss)
    /// elimination. Serves as the independent oracle for the SVD-based
    /// numerical rank on sign matrices.
    fn exact_rank_int(m: &DMatrix<f64>) -> usize {
        let rows = m.nrows();
        let cols = m.ncols();
        let mut a: Vec<Vec<i128>> = (0..rows)
            .map(|i| (0..cols).map(|j| m[(i, j)].round() as i128).collect())
            .collect();
        let mut rank = 0;
        let mut prev = 1i128;
        for col in 0..cols {
            let pivot = (rank..rows).find(|&r| a[r][col] != 0);
            let Some(pr) = pivot else { continue };
            a.swap(rank, pr);
            for r in rank + 1..rows {
                for c in col + 1..cols {
                    a[r][c] = (a[r][c] * a[rank][col] - a[r][col] * a[rank][c]) / prev;
                }
                a[r][col] = 0;
            }
            prev = a[rank][col];
            rank += 1;
            if rank == rows {
                break;
            }
        }
        rank
    }

    #[test]
    fn controllability_rank_matches_exact_elimination_exhaustive_n2() {
        // All 2-state single-input systems with entries in {-1, 0, 1}.
        for code in 0..3usize.pow(6) {
            let mut digits = code;
            let mut vals = [0.0f64; 6];
            for v in vals.iter_mut() {
                *v = (digits % 3) as f64 - 1.0;
                digits /= 3;
            }
            let a = DMatrix::from_row_slice(2, 2, &vals[0..4]);
            let b = DMatrix::from_column_slice(2, 1, &vals[4..6]);
            let ctrb = controllability_matrix(&a, &b);
            assert_eq!(
                numerical_rank(&ctrb),
                exact_rank_int(&ctrb),
                "A = {a}, B = {b}"
            );
        }
    }

    proptest! {
        #[test]
        fn controllability_rank_matches_exact_elimination_sampled(
            n in 3usize..=4,
            p in 1usize..=2,
            seed in 0u64..400,
        ) {
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(3);
            let mut trit = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                ((state >> 33) % 3) as f64 - 1.0
            };
            let a = DMatrix::from_fn(n, n, |_, _| trit());
            let b = DMatrix::from_fn(n, p, |_, _| trit());
            let ctrb = controllability_matrix(&a, &b);
            prop_assert_eq!(numerical_rank(&ctrb), exact_rank_int(&ctrb));
        }

        #[test]
        fn symmetric_factor_roundtrip_random_psd(n in 1usize..=6, seed in 0u64..150) {
            let mut state = seed.wrapping_mul(0xda942042e4dd58b5).wrapping_add(11);
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            };
            let g = DMatrix::from_fn(n, n, |_, _| next());
            let q = g.transpose() * &g;
            let c = symmetric_factor(&q).unwrap();
            prop_assert!(c.nrows() <= n);
            let back = c.transpose() * &c;
            prop_assert!((back - &q).norm() <= 1e-10 * (1.0 + q.norm()));
        }
    }
}
