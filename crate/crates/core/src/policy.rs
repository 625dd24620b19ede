//! Recovery of control policies and optimality certificates from occupation
//! moments and value functions.

use crate::builder::{lmi_matrix, OccupationMoments, QuadraticValueFunction};
use crate::problem::DiscountedLqgProblem;
use crate::scalar::{fl, FloatT};
use nalgebra::{DMatrix, DVector};

/// Affine policy with Gaussian randomization: `u = K x + k + eta`,
/// `eta ~ N(0, cov)`. The policy is deterministic iff `cov = 0`.
#[derive(Debug, Clone)]
pub struct AffineGaussianPolicy<T: FloatT> {
    pub gain: DMatrix<T>,
    pub offset: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: FloatT> AffineGaussianPolicy<T> {
    /// Deterministic linear policy `u = K x`.
    pub fn linear(gain: DMatrix<T>) -> Self {
        let p = gain.nrows();
        Self {
            offset: DVector::zeros(p),
            cov: DMatrix::zeros(p, p),
            gain,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.cov.iter().all(|&v| v == T::zero())
    }
}

/// Result of [`gain_from_moments`]: the recovered policy plus the numerical
/// rank of `Z_xx` (a deficiency means the gain is only determined on the
/// excited subspace and the pseudo-inverse picked the minimum-norm one).
#[derive(Debug, Clone)]
pub struct MomentPolicyExtraction<T: FloatT> {
    pub policy: AffineGaussianPolicy<T>,
    pub zxx_rank: usize,
    pub rank_deficient: bool,
}

/// Recovers the conditional-Gaussian policy parameters from moments:
///
/// ```text
/// K   = Z_xu' pinv(Z_xx)
/// k   = m_u - K m_x
/// cov = (1/m) (Z_uu - Z_xu' pinv(Z_xx) Z_xu), eigenvalue-floored at zero
/// ```
///
/// At an optimum the conditional covariance vanishes and `k = 0`, so the
/// policy is the deterministic `u = Kx`. The offset is kept in the raw
/// discounted scaling of the moment vector.
pub fn gain_from_moments<T: FloatT>(
    mom: &OccupationMoments<T>,
    rank_tol: T,
) -> MomentPolicyExtraction<T> {
    let n = mom.num_states();
    let sym_zxx = (&mom.z_xx + mom.z_xx.transpose()).scale(fl(0.5));
    let svd = sym_zxx.svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b));
    let eps = rank_tol * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let pinv = svd
        .pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(n, n));

    let gain = mom.z_xu.transpose() * &pinv;
    let offset = &mom.m_u - &gain * &mom.m_x;
    let raw = (&mom.z_uu - mom.z_xu.transpose() * &pinv * &mom.z_xu).scale(T::one() / mom.m);
    let eig = (&raw + raw.transpose()).scale(fl::<T>(0.5)).symmetric_eigen();
    let mut cov = DMatrix::zeros(gain.nrows(), gain.nrows());
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > T::zero() {
            let col = eig.eigenvectors.column(i);
            cov += (col * col.transpose()).scale(lam);
        }
    }
    MomentPolicyExtraction {
        policy: AffineGaussianPolicy { gain, offset, cov },
        zxx_rank: rank,
        rank_deficient: rank < n,
    }
}

/// Complementary-slackness residual `||Z S|| / (1 + ||Z|| ||S||)` between the
/// state-input moment block and the value-function LMI block, with `Q`, `R`
/// including the active multipliers `gamma`.
pub fn complementarity_residual<T: FloatT>(
    mom: &OccupationMoments<T>,
    v: &QuadraticValueFunction<T>,
    p: &DiscountedLqgProblem<T>,
    gammas: &[T],
) -> T {
    let n = mom.num_states();
    let np = mom.num_inputs();
    let d = n + np;
    let mut z_block = DMatrix::zeros(d, d);
    z_block.view_mut((0, 0), (n, n)).copy_from(&mom.z_xx);
    z_block.view_mut((0, n), (n, np)).copy_from(&mom.z_xu);
    z_block
        .view_mut((n, 0), (np, n))
        .copy_from(&mom.z_xu.transpose());
    z_block.view_mut((n, n), (np, np)).copy_from(&mom.z_uu);

    let lmi = lmi_matrix(p, &v.p, &v.q, v.r, gammas);
    let s_block = lmi.view((1, 1), (d, d)).into_owned();

    let prod = &z_block * &s_block;
    prod.norm() / (T::one() + z_block.norm() * s_block.norm())
}

/// Minimum over the samples of the Bellman-inequality slack
/// `c0(x, u) - v(x) + alpha E[v(Ax + Bu + w)]`, with the Gaussian expectation
/// in closed form (it contributes `alpha Tr(PW)`). Nonnegative everywhere iff
/// `v` is feasible for the value program; zero at `(x, Kx)` of an optimal
/// pair. Returns positive infinity for an empty sample list.
pub fn bellman_gap<T: FloatT>(
    v: &QuadraticValueFunction<T>,
    p: &DiscountedLqgProblem<T>,
    samples: &[(DVector<T>, DVector<T>)],
) -> T {
    let alpha = p.alpha;
    let trace_pw = (&v.p * &p.system.w).trace();
    let mut min = fl::<T>(f64::INFINITY);
    for (x, u) in samples {
        let c0 = (&p.cost.q * x).dot(x) + (&p.cost.r * u).dot(u);
        let vx = (&v.p * x).dot(x) + v.q.dot(x) + v.r;
        let next = &p.system.a * x + &p.system.b * u;
        let ev = (&v.p * &next).dot(&next) + v.q.dot(&next) + v.r + trace_pw;
        let gap = c0 - vx + alpha * ev;
        min = min.min(gap);
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_dual, build_primal, extract_moments, extract_value};
    use crate::ipm::{solve_conic, SolverOptions};
    use crate::problem::{
        InitialDistribution, LinearStochasticSystem, QuadraticStageCost,
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

    fn two_state() -> DiscountedLqgProblem<f64> {
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

    #[test]
    fn gain_roundtrips_through_closed_loop_moments() {
        let p = two_state();
        let k0 = DMatrix::from_row_slice(1, 2, &[-0.4, -1.1]);
        let mom = riccati::closed_loop_moments(&p, &k0).unwrap();
        let ext = gain_from_moments(&mom, 1e-10);
        assert!(!ext.rank_deficient);
        assert!((ext.policy.gain.clone() - &k0).norm() <= 1e-8);
        assert!(ext.policy.offset.norm() <= 1e-8);
        assert!(ext.policy.cov.norm() <= 1e-8);
    }

    #[test]
    fn zero_state_moments_give_pure_offset_policy() {
        let mom = OccupationMoments {
            m: 10.0,
            m_x: DVector::zeros(2),
            m_u: DVector::from_vec(vec![5.0]),
            z_xx: DMatrix::zeros(2, 2),
            z_xu: DMatrix::zeros(2, 1),
            z_uu: DMatrix::from_element(1, 1, 2.5),
        };
        let ext = gain_from_moments(&mom, 1e-10);
        assert_eq!(ext.policy.gain, DMatrix::zeros(1, 2));
        assert_eq!(ext.zxx_rank, 0);
        assert!(ext.rank_deficient);
        assert_relative_eq!(ext.policy.offset[0], 5.0);
    }

    #[test]
    fn optimal_moments_recover_oracle_gain_with_zero_covariance() {
        let p = scalar_problem();
        let prog = build_primal(&p).unwrap();
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        let mom = extract_moments(&prog, &sol).unwrap();
        let ext = gain_from_moments(&mom, 1e-10);
        assert_relative_eq!(ext.policy.gain[(0, 0)], -0.2516441, epsilon = 1e-5);
        assert!(ext.policy.cov[(0, 0)] <= 1e-7);
        assert!(ext.policy.offset[0].abs() <= 1e-6);
    }

    #[test]
    fn complementarity_vanishes_at_the_scalar_optimum() {
        let p = scalar_problem();
        let prog = build_primal(&p).unwrap();
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        let mom = extract_moments(&prog, &sol).unwrap();
        let (v, gammas) = extract_value(&prog, &sol).unwrap();
        let res = complementarity_residual(&mom, &v, &p, gammas.as_slice());
        assert!(res <= 1e-7, "complementarity residual {res}");
    }

    #[test]
    fn complementarity_positive_for_zero_value_function() {
        let p = scalar_problem();
        let k = DMatrix::from_element(1, 1, -0.25);
        let mom = riccati::closed_loop_moments(&p, &k).unwrap();
        let v0 = QuadraticValueFunction {
            p: DMatrix::zeros(1, 1),
            q: DVector::zeros(1),
            r: 0.0,
        };
        // With P = 0 and Q0 > 0 the product reduces to Z * diag(Q0, R0) != 0.
        let res = complementarity_residual(&mom, &v0, &p, &[]);
        assert!(res > 1e-3);

        let zero = OccupationMoments {
            m: 0.0_f64.max(1.0),
            m_x: DVector::zeros(1),
            m_u: DVector::zeros(1),
            z_xx: DMatrix::zeros(1, 1),
            z_xu: DMatrix::zeros(1, 1),
            z_uu: DMatrix::zeros(1, 1),
        };
        assert_eq!(complementarity_residual(&zero, &v0, &p, &[]), 0.0);
    }

    #[test]
    fn bellman_gap_nonnegative_at_dual_optimum() {
        let p = scalar_problem();
        let prog = build_dual(&p).unwrap();
        let sol = solve_conic(&prog, &SolverOptions::default()).unwrap();
        let (v, _) = extract_value(&prog, &sol).unwrap();

        let mut samples = Vec::new();
        let mut state = 0x12345u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 6.0 - 3.0
        };
        for _ in 0..200 {
            samples.push((
                DVector::from_vec(vec![next()]),
                DVector::from_vec(vec![next()]),
            ));
        }
        let gap = bellman_gap(&v, &p, &samples);
        assert!(gap >= -1e-7, "gap {gap}");

        // Along the optimal action the inequality is tight.
        let k = riccati::gain_from_value(&v.p, &p.system.a, &p.system.b, &p.cost.r, p.alpha)
            .unwrap();
        let on_policy: Vec<_> = (0..20)
            .map(|i| {
                let x = DVector::from_vec(vec![-2.0 + 0.2 * i as f64]);
                let u = &k * &x;
                (x, u)
            })
            .collect();
        let gap = bellman_gap(&v, &p, &on_policy).abs();
        assert!(gap <= 1e-6, "on-policy gap {gap}");
    }

    #[test]
    fn bellman_gap_nonnegative_for_zero_value_function() {
        let p = scalar_problem();
        let v0 = QuadraticValueFunction {
            p: DMatrix::zeros(1, 1),
            q: DVector::zeros(1),
            r: 0.0,
        };
        let samples = vec![
            (DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])),
            (DVector::from_vec(vec![-2.0]), DVector::from_vec(vec![0.5])),
        ];
        // v = 0 leaves exactly the PSD stage cost.
        assert!(bellman_gap(&v0, &p, &samples) >= 0.0);
    }

    #[test]
    fn moment_gain_agrees_with_riccati_gain() {
        let p = two_state();
        let prog = build_primal(&p).unwrap();
        // Gain extraction divides by Z_xx, so ask for more than the default
        // accuracy.
        let opts = SolverOptions {
            tol_gap: 1e-11,
            tol_feas: 1e-11,
            max_iter: 300,
            ..SolverOptions::default()
        };
        let sol = solve_conic(&prog, &opts).unwrap();
        let mom = extract_moments(&prog, &sol).unwrap();
        let ext = gain_from_moments(&mom, 1e-10);
        let dare = riccati::solve_dare(
            &p.system.a,
            &p.system.b,
            &p.cost.q,
            &p.cost.r,
            p.alpha,
            1e-12,
            100_000,
        )
        .unwrap();
        let k_dare =
            riccati::gain_from_value(&dare.p, &p.system.a, &p.system.b, &p.cost.r, p.alpha)
                .unwrap();
        assert!(
            (ext.policy.gain.clone() - &k_dare).norm() <= 1e-5,
            "gain mismatch: {} vs {}",
            ext.policy.gain,
            k_dare
        );
    }
}
