//! Seeded Monte Carlo closed-loop simulation with counter-based random
//! streams.
//!
//! Every Gaussian draw is a pure function of `(seed, trajectory, step, draw)`
//! through the mixing function [`mix64`], so results are independent of
//! execution order and degree of parallelism; estimators reduce in a fixed
//! serial order. Draw-index layout per trajectory:
//!
//! * step `0`, draws `0..n`: the initial-state deviation;
//! * step `t + 1`, draws `0..n`: the process noise entering `x_{t+1}`;
//! * step `t + 1`, draws `n..n+p`: the policy jitter applied at time `t`
//!   (only drawn for randomized policies).

use crate::builder::OccupationMoments;
use crate::error::{Error, Result};
use crate::policy::AffineGaussianPolicy;
use crate::problem::{DiscountedLqgProblem, QuadraticStageCost};
use crate::scalar::{as_f64, fl, FloatT};
use nalgebra::{DMatrix, DVector};

/// SplitMix64 finalizer: two xor-shift multiply rounds plus a final shift.
/// This is the entire source of randomness in the simulator.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based Gaussian stream keyed by a 64-bit seed.
#[derive(Debug, Clone, Copy)]
pub struct GaussianStream {
    seed: u64,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Uniform in `(0, 1]` from one counter value.
    fn uniform(&self, traj: u64, step: u64, word: u64) -> f64 {
        let mut h = mix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        h = mix64(h ^ traj.wrapping_mul(0xd6e8_feb8_6659_fd93));
        h = mix64(h ^ step.wrapping_mul(0xa076_1d64_78bd_642f));
        h = mix64(h ^ word.wrapping_mul(0xe703_7ed1_a0b4_28db));
        ((h >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal by the Box-Muller cosine branch. Two uniforms per
    /// draw; the sibling sine value is discarded to keep the mapping from
    /// `(traj, step, draw)` one-to-one.
    pub fn normal<T: FloatT>(&self, traj: u64, step: u64, draw: u64) -> T {
        let u1 = self.uniform(traj, step, 2 * draw);
        let u2 = self.uniform(traj, step, 2 * draw + 1);
        let mag = (-2.0 * u1.ln()).sqrt();
        fl::<T>(mag * (2.0 * std::f64::consts::PI * u2).cos())
    }
}

/// Diagonal-pivoted Cholesky factor with zero-fill: returns lower-triangular
/// (up to the pivot permutation) `L` with `L L' = M` for symmetric PSD `M`,
/// including singular ones. Errs on significantly indefinite input.
pub fn psd_factor<T: FloatT>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch("psd_factor input".into()));
    }
    let mut a = (m + m.transpose()).scale(fl(0.5));
    let scale = (0..n)
        .map(|i| a[(i, i)].abs())
        .fold(T::zero(), |x, y| x.max(y));
    let tol = fl::<T>(1e-12) * (T::one() + scale);
    let mut l = DMatrix::<T>::zeros(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        // Largest remaining diagonal entry becomes the pivot.
        let (arg, dmax) = (k..n)
            .map(|j| (j, a[(perm[j], perm[j])]))
            .fold((k, a[(perm[k], perm[k])]), |best, cand| {
                if cand.1 > best.1 {
                    cand
                } else {
                    best
                }
            });
        if dmax <= tol {
            for j in k..n {
                if a[(perm[j], perm[j])] < -tol {
                    return Err(Error::NotPsd {
                        name: "psd_factor input".into(),
                        min_eig: as_f64(a[(perm[j], perm[j])]),
                    });
                }
            }
            break; // remaining block is numerically zero
        }
        perm.swap(k, arg);
        let pk = perm[k];
        let root = dmax.sqrt();
        l[(pk, k)] = root;
        for j in k + 1..n {
            let pj = perm[j];
            l[(pj, k)] = a[(pj, pk)] / root;
        }
        for j in k + 1..n {
            let pj = perm[j];
            for i in j..n {
                let pi = perm[i];
                let upd = a[(pi, pj)] - l[(pi, k)] * l[(pj, k)];
                a[(pi, pj)] = upd;
                a[(pj, pi)] = upd;
            }
        }
    }
    Ok(l)
}

/// Smallest `T >= 0` with `alpha^{T+1} / (1 - alpha) <= tail_tol`.
pub fn truncation_horizon<T: FloatT>(alpha: T, tail_tol: T) -> Result<usize> {
    if alpha <= T::zero() || alpha >= T::one() || tail_tol <= T::zero() {
        return Err(Error::InvalidArgument(
            "truncation_horizon needs alpha in (0,1) and tail_tol > 0".into(),
        ));
    }
    let bound = |t: usize| alpha.powi(t as i32 + 1) / (T::one() - alpha);
    // Closed-form guess, then exact fix-up in integer steps.
    let guess = (as_f64(tail_tol) * (1.0 - as_f64(alpha))).ln() / as_f64(alpha).ln() - 1.0;
    let mut t = guess.max(0.0).ceil() as usize;
    while bound(t) > tail_tol {
        t += 1;
    }
    while t > 0 && bound(t - 1) <= tail_tol {
        t -= 1;
    }
    Ok(t)
}

/// Simulation horizon: a fixed number of steps or automatic truncation at a
/// discounted tail tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Fixed(usize),
    Auto { tail_tol: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub n_traj: usize,
    pub horizon: Horizon,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_traj: 10_000,
            horizon: Horizon::Auto { tail_tol: 1e-6 },
            seed: 0,
        }
    }
}

/// Scalar estimate with its standard error `sample std / sqrt(n)`.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<T: FloatT> {
    pub value: T,
    pub std_error: T,
    pub n: usize,
}

fn mean_and_se<T: FloatT>(values: &[T]) -> Estimate<T> {
    let n = values.len();
    let nf = fl::<T>(n as f64);
    let mean = values.iter().copied().fold(T::zero(), |a, b| a + b) / nf;
    if n < 2 {
        return Estimate {
            value: mean,
            std_error: T::zero(),
            n,
        };
    }
    let var = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .fold(T::zero(), |a, b| a + b)
        / (nf - T::one());
    Estimate {
        value: mean,
        std_error: (var / nf).sqrt(),
        n,
    }
}

/// Dense per-step storage of a batch of closed-loop rollouts.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch<T: FloatT> {
    pub n_traj: usize,
    /// Simulated steps; states and inputs are recorded at `t = 0..=horizon`.
    pub horizon: usize,
    pub num_states: usize,
    pub num_inputs: usize,
    states: Vec<T>,
    inputs: Vec<T>,
}

impl<T: FloatT> TrajectoryBatch<T> {
    pub fn state(&self, traj: usize, t: usize) -> &[T] {
        let base = (traj * (self.horizon + 1) + t) * self.num_states;
        &self.states[base..base + self.num_states]
    }

    pub fn input(&self, traj: usize, t: usize) -> &[T] {
        let base = (traj * (self.horizon + 1) + t) * self.num_inputs;
        &self.inputs[base..base + self.num_inputs]
    }
}

/// Rolls out `cfg.n_traj` closed-loop trajectories of
/// `x_{t+1} = A x_t + B u_t + w_t` under the affine policy.
pub fn simulate_batch<T: FloatT>(
    p: &DiscountedLqgProblem<T>,
    policy: &AffineGaussianPolicy<T>,
    cfg: &SimConfig,
) -> Result<TrajectoryBatch<T>> {
    p.check_dimensions()?;
    let n = p.num_states();
    let np = p.num_inputs();
    if policy.gain.nrows() != np || policy.gain.ncols() != n || policy.offset.len() != np {
        return Err(Error::DimensionMismatch("policy against system".into()));
    }
    if cfg.n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be >= 1".into()));
    }
    let horizon = match cfg.horizon {
        Horizon::Fixed(t) => t,
        Horizon::Auto { tail_tol } => truncation_horizon(p.alpha, fl::<T>(tail_tol))?,
    };

    let l_init = psd_factor(&p.init.cov)?;
    let l_noise = psd_factor(&p.system.w)?;
    let jitter = if policy.cov.iter().any(|&v| v != T::zero()) {
        Some(psd_factor(&policy.cov)?)
    } else {
        None
    };
    let init_zero = l_init.iter().all(|&v| v == T::zero());
    let noise_zero = l_noise.iter().all(|&v| v == T::zero());

    let stream = GaussianStream::new(cfg.seed);
    let records = cfg.n_traj * (horizon + 1);
    let mut states = vec![T::zero(); records * n];
    let mut inputs = vec![T::zero(); records * np];

    let mut xi = DVector::<T>::zeros(n);
    for traj in 0..cfg.n_traj {
        let tid = traj as u64;
        let mut x = p.init.mean.clone();
        if !init_zero {
            for i in 0..n {
                xi[i] = stream.normal(tid, 0, i as u64);
            }
            x += &l_init * &xi;
        }
        for t in 0..=horizon {
            let mut u = &policy.gain * &x + &policy.offset;
            if let Some(lc) = &jitter {
                let mut eta = DVector::<T>::zeros(np);
                for l in 0..np {
                    eta[l] = stream.normal(tid, t as u64 + 1, (n + l) as u64);
                }
                u += lc * eta;
            }
            let sbase = (traj * (horizon + 1) + t) * n;
            states[sbase..sbase + n].copy_from_slice(x.as_slice());
            let ubase = (traj * (horizon + 1) + t) * np;
            inputs[ubase..ubase + np].copy_from_slice(u.as_slice());

            if t < horizon {
                let mut next = &p.system.a * &x + &p.system.b * &u;
                if !noise_zero {
                    for i in 0..n {
                        xi[i] = stream.normal(tid, t as u64 + 1, i as u64);
                    }
                    next += &l_noise * &xi;
                }
                x = next;
            }
        }
    }
    Ok(TrajectoryBatch {
        n_traj: cfg.n_traj,
        horizon,
        num_states: n,
        num_inputs: np,
        states,
        inputs,
    })
}

/// Per-trajectory discounted cost `sum_t alpha^t (x'Qx + u'Ru)`, averaged.
pub fn estimate_discounted_cost<T: FloatT>(
    batch: &TrajectoryBatch<T>,
    cost: &QuadraticStageCost<T>,
    alpha: T,
) -> Estimate<T> {
    let n = batch.num_states;
    let np = batch.num_inputs;
    let mut totals = Vec::with_capacity(batch.n_traj);
    for traj in 0..batch.n_traj {
        let mut acc = T::zero();
        let mut disc = T::one();
        for t in 0..=batch.horizon {
            let x = batch.state(traj, t);
            let u = batch.input(traj, t);
            let mut stage = T::zero();
            for i in 0..n {
                for j in 0..n {
                    stage += x[i] * cost.q[(i, j)] * x[j];
                }
            }
            for k in 0..np {
                for l in 0..np {
                    stage += u[k] * cost.r[(k, l)] * u[l];
                }
            }
            acc += disc * stage;
            disc *= alpha;
        }
        totals.push(acc);
    }
    mean_and_se(&totals)
}

/// Empirical occupation moments with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments<T: FloatT> {
    pub mean: OccupationMoments<T>,
    pub std_error: OccupationMoments<T>,
}

/// Discounted empirical sums of `(1, x, u, xx', xu', uu')`, averaged over
/// trajectories. The mass entry has zero sampling variance by construction.
pub fn estimate_occupation_moments<T: FloatT>(
    batch: &TrajectoryBatch<T>,
    alpha: T,
) -> EmpiricalMoments<T> {
    let n = batch.num_states;
    let np = batch.num_inputs;
    // Flattened per-trajectory summary: [m, m_x, m_u, Z_xx, Z_xu, Z_uu].
    let width = 1 + n + np + n * n + n * np + np * np;
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(batch.n_traj);
    for traj in 0..batch.n_traj {
        let mut row = vec![T::zero(); width];
        let mut disc = T::one();
        for t in 0..=batch.horizon {
            let x = batch.state(traj, t);
            let u = batch.input(traj, t);
            row[0] += disc;
            for i in 0..n {
                row[1 + i] += disc * x[i];
            }
            for k in 0..np {
                row[1 + n + k] += disc * u[k];
            }
            let zxx = 1 + n + np;
            for i in 0..n {
                for j in 0..n {
                    row[zxx + i * n + j] += disc * x[i] * x[j];
                }
            }
            let zxu = zxx + n * n;
            for i in 0..n {
                for k in 0..np {
                    row[zxu + i * np + k] += disc * x[i] * u[k];
                }
            }
            let zuu = zxu + n * np;
            for k in 0..np {
                for l in 0..np {
                    row[zuu + k * np + l] += disc * u[k] * u[l];
                }
            }
            disc *= alpha;
        }
        rows.push(row);
    }

    let mut mean_flat = vec![T::zero(); width];
    let mut se_flat = vec![T::zero(); width];
    let mut column = Vec::with_capacity(batch.n_traj);
    for c in 0..width {
        column.clear();
        column.extend(rows.iter().map(|r| r[c]));
        let est = mean_and_se(&column);
        mean_flat[c] = est.value;
        se_flat[c] = est.std_error;
    }

    let unflatten = |flat: &[T]| -> OccupationMoments<T> {
        let zxx = 1 + n + np;
        let zxu = zxx + n * n;
        let zuu = zxu + n * np;
        OccupationMoments {
            m: flat[0],
            m_x: DVector::from_fn(n, |i, _| flat[1 + i]),
            m_u: DVector::from_fn(np, |k, _| flat[1 + n + k]),
            z_xx: DMatrix::from_fn(n, n, |i, j| flat[zxx + i * n + j]),
            z_xu: DMatrix::from_fn(n, np, |i, k| flat[zxu + i * np + k]),
            z_uu: DMatrix::from_fn(np, np, |k, l| flat[zuu + k * np + l]),
        }
    };
    EmpiricalMoments {
        mean: unflatten(&mean_flat),
        std_error: unflatten(&se_flat),
    }
}

/// Empirical discounted mass of the event `|g'x_t| >= h`.
pub fn estimate_chance_mass<T: FloatT>(
    batch: &TrajectoryBatch<T>,
    g: &DVector<T>,
    h: T,
    alpha: T,
) -> Estimate<T> {
    let n = batch.num_states;
    assert_eq!(g.len(), n, "chance direction dimension");
    let mut totals = Vec::with_capacity(batch.n_traj);
    for traj in 0..batch.n_traj {
        let mut acc = T::zero();
        let mut disc = T::one();
        for t in 0..=batch.horizon {
            let x = batch.state(traj, t);
            let mut proj = T::zero();
            for i in 0..n {
                proj += g[i] * x[i];
            }
            if proj.abs() >= h {
                acc += disc;
            }
            disc *= alpha;
        }
        totals.push(acc);
    }
    mean_and_se(&totals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{InitialDistribution, LinearStochasticSystem};
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

    fn scalar_k() -> f64 {
        let p = (0.125 + 3.615625f64.sqrt()) / 1.8;
        -(0.9 * p * 0.5) / (1.0 + 0.9 * p)
    }

    #[test]
    fn truncation_horizon_examples() {
        assert_eq!(truncation_horizon(0.9, 1e-6).unwrap(), 152);
        // alpha = 0.99: ceil(ln(1e-8)/ln(0.99)) - 1.
        let expected = ((1e-8f64).ln() / 0.99f64.ln()).ceil() as usize - 1;
        assert_eq!(truncation_horizon(0.99, 1e-6).unwrap(), expected);
        assert_eq!(expected, 1832);
        // Small alpha with tail_tol >= alpha: zero steps suffice.
        assert_eq!(truncation_horizon(0.05, 0.1).unwrap(), 0);
        // Exactness: the bound holds at T and fails at T - 1.
        let t = truncation_horizon(0.97, 1e-5).unwrap();
        let bound = |t: i32| 0.97f64.powi(t + 1) / 0.03;
        assert!(bound(t as i32) <= 1e-5);
        assert!(bound(t as i32 - 1) > 1e-5);
    }

    #[test]
    fn psd_factor_handles_singular_matrices() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let l = psd_factor(&m).unwrap();
        let back = &l * l.transpose();
        assert!((back - &m).norm() <= 1e-10 * (1.0 + m.norm()));

        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(psd_factor(&indefinite), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn same_seed_gives_bit_identical_batches() {
        let p = scalar_problem();
        let policy = AffineGaussianPolicy::linear(DMatrix::from_element(1, 1, scalar_k()));
        let cfg = SimConfig {
            n_traj: 32,
            horizon: Horizon::Fixed(50),
            seed: 42,
        };
        let a = simulate_batch(&p, &policy, &cfg).unwrap();
        let b = simulate_batch(&p, &policy, &cfg).unwrap();
        assert!(a.states.iter().zip(b.states.iter()).all(|(x, y)| x == y));
        assert!(a.inputs.iter().zip(b.inputs.iter()).all(|(x, y)| x == y));
    }

    #[test]
    fn trajectories_are_pure_functions_of_their_index() {
        let p = scalar_problem();
        let policy = AffineGaussianPolicy::linear(DMatrix::from_element(1, 1, scalar_k()));
        let small = SimConfig {
            n_traj: 3,
            horizon: Horizon::Fixed(40),
            seed: 7,
        };
        let large = SimConfig { n_traj: 8, ..small };
        let a = simulate_batch(&p, &policy, &small).unwrap();
        let b = simulate_batch(&p, &policy, &large).unwrap();
        for traj in 0..3 {
            for t in 0..=40 {
                assert_eq!(a.state(traj, t), b.state(traj, t));
                assert_eq!(a.input(traj, t), b.input(traj, t));
            }
        }
    }

    #[test]
    fn noiseless_simulation_matches_exact_recursion() {
        let mut p = scalar_problem();
        p.system.w = DMatrix::zeros(1, 1);
        p.init.cov = DMatrix::zeros(1, 1);
        p.init.mean = DVector::from_element(1, 2.0);
        let k = -0.3;
        let policy = AffineGaussianPolicy::linear(DMatrix::from_element(1, 1, k));
        let cfg = SimConfig {
            n_traj: 1,
            horizon: Horizon::Fixed(30),
            seed: 9,
        };
        let batch = simulate_batch(&p, &policy, &cfg).unwrap();
        let mut x = 2.0f64;
        for t in 0..=30 {
            assert_eq!(batch.state(0, t)[0], x);
            assert_eq!(batch.input(0, t)[0], k * x);
            x = 0.5 * x + 1.0 * (k * x);
        }
    }

    #[test]
    fn scalar_cost_estimate_matches_oracle_within_three_sigma() {
        let p = scalar_problem();
        let policy = AffineGaussianPolicy::linear(DMatrix::from_element(1, 1, scalar_k()));
        let cfg = SimConfig {
            n_traj: 4000,
            horizon: Horizon::Auto { tail_tol: 1e-6 },
            seed: 1234,
        };
        let batch = simulate_batch(&p, &policy, &cfg).unwrap();
        let est = estimate_discounted_cost(&batch, &p.cost, p.alpha);
        let oracle = 10.0 * (0.125 + 3.615625f64.sqrt()) / 1.8;
        let slack = 3.0 * est.std_error + 1e-6 * oracle;
        assert!(
            (est.value - oracle).abs() <= slack,
            "cost {} vs {} (3se = {})",
            est.value,
            oracle,
            3.0 * est.std_error
        );
    }

    #[test]
    fn mass_estimate_is_deterministic_and_truncated() {
        let p = scalar_problem();
        let policy = AffineGaussianPolicy::linear(DMatrix::from_element(1, 1, scalar_k()));
        let cfg = SimConfig {
            n_traj: 200,
            horizon: Horizon::Auto { tail_tol: 1e-6 },
            seed: 5,
        };
        let batch = simulate_batch(&p, &policy, &cfg).unwrap();
        let emp = estimate_occupation_moments(&batch, p.alpha);
        // The discounted mass has identical summands across trajectories, so
        // its sampling variance is pure rounding noise.
        assert!(emp.std_error.m <= 1e-12);
        let exact = (1.0 - 0.9f64.powi(batch.horizon as i32 + 1)) / 0.1;
        assert_relative_eq!(emp.mean.m, exact, epsilon = 1e-10);
        assert!((emp.mean.m - 10.0).abs() <= 1e-5);
        // m0 = 0 and the problem is symmetric, so m_x is zero in expectation.
        assert!(emp.mean.m_x[0].abs() <= 3.0 * emp.std_error.m_x[0] + 1e-9);
    }

    #[test]
    fn zero_threshold_collects_the_full_mass() {
        let p = scalar_problem();
        let policy = AffineGaussianPolicy::linear(DMatrix::from_element(1, 1, scalar_k()));
        let cfg = SimConfig {
            n_traj: 50,
            horizon: Horizon::Fixed(60),
            seed: 17,
        };
        let batch = simulate_batch(&p, &policy, &cfg).unwrap();
        let est = estimate_chance_mass(&batch, &DVector::from_element(1, 1.0), 0.0, p.alpha);
        let exact = (1.0 - 0.9f64.powi(61)) / 0.1;
        assert_relative_eq!(est.value, exact, epsilon = 1e-10);
        assert!(est.std_error <= 1e-12);
    }

    #[test]
    fn deterministic_zero_state_has_zero_chance_mass() {
        let mut p = scalar_problem();
        p.system.w = DMatrix::zeros(1, 1);
        p.init.cov = DMatrix::zeros(1, 1);
        let policy = AffineGaussianPolicy::linear(DMatrix::zeros(1, 1));
        let cfg = SimConfig {
            n_traj: 10,
            horizon: Horizon::Fixed(40),
            seed: 3,
        };
        let batch = simulate_batch(&p, &policy, &cfg).unwrap();
        let est = estimate_chance_mass(&batch, &DVector::from_element(1, 1.0), 0.5, p.alpha);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn randomized_policy_jitter_shows_up_in_input_moments() {
        let p = scalar_problem();
        let policy = AffineGaussianPolicy {
            gain: DMatrix::zeros(1, 1),
            offset: DVector::zeros(1),
            cov: DMatrix::from_element(1, 1, 4.0),
        };
        let cfg = SimConfig {
            n_traj: 3000,
            horizon: Horizon::Fixed(30),
            seed: 11,
        };
        let batch = simulate_batch(&p, &policy, &cfg).unwrap();
        let emp = estimate_occupation_moments(&batch, p.alpha);
        // E Z_uu = 4 * sum_{t<=30} 0.9^t.
        let expect = 4.0 * (1.0 - 0.9f64.powi(31)) / 0.1;
        assert!(
            (emp.mean.z_uu[(0, 0)] - expect).abs() <= 3.0 * emp.std_error.z_uu[(0, 0)],
            "z_uu {} vs {}",
            emp.mean.z_uu[(0, 0)],
            expect
        );
    }
}
