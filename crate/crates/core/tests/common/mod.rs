//! Shared helpers for the integration tests: a deterministic random-problem
//! generator built on the crate's own counter-based mixing function.

use lqgsdp::problem::{
    DiscountedLqgProblem, InitialDistribution, LinearStochasticSystem, QuadraticStageCost,
};
use lqgsdp::riccati;
use lqgsdp::sim::mix64;
use nalgebra::{DMatrix, DVector};

pub struct TestRng {
    counter: u64,
    seed: u64,
}

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self { counter: 0, seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ mix64(self.counter))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.normal())
    }

    pub fn psd(&mut self, dim: usize, ridge: f64) -> DMatrix<f64> {
        let g = self.matrix(dim, dim);
        g.transpose() * &g + DMatrix::identity(dim, dim) * ridge
    }
}

/// A validated random problem: discounted-stable `A`, positive-definite
/// `R0`, `W`, `Sigma0`, PD `Q0`, nonzero `m0`.
pub fn random_problem(seed: u64, max_states: usize) -> DiscountedLqgProblem<f64> {
    let mut rng = TestRng::new(seed);
    let n = 1 + (rng.next_u64() as usize) % max_states;
    let p = 1 + (rng.next_u64() as usize) % 2;
    let alpha = rng.range(0.7, 0.97);

    let mut a = rng.matrix(n, n);
    let rho = a
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    let target = rng.range(0.2, 0.9) / alpha.sqrt();
    if rho > 1e-12 {
        a.scale_mut(target / rho);
    }
    let b = rng.matrix(n, p);

    DiscountedLqgProblem {
        system: LinearStochasticSystem {
            a,
            b,
            w: rng.psd(n, 0.05),
        },
        init: InitialDistribution {
            mean: DVector::from_fn(n, |_, _| rng.normal()),
            cov: rng.psd(n, 0.1),
        },
        cost: QuadraticStageCost {
            q: rng.psd(n, 0.1),
            r: rng.psd(p, 0.1),
        },
        alpha,
        moment_bounds: vec![],
        chance_specs: vec![],
    }
}

/// A random gain that keeps the discounted closed loop stable: the optimal
/// gain plus a shrinking perturbation.
pub fn random_stabilizing_gain(p: &DiscountedLqgProblem<f64>, rng: &mut TestRng) -> DMatrix<f64> {
    let dare = riccati::solve_dare(
        &p.system.a,
        &p.system.b,
        &p.cost.q,
        &p.cost.r,
        p.alpha,
        1e-12,
        100_000,
    )
    .expect("random problems are solvable");
    let k_opt =
        riccati::gain_from_value(&dare.p, &p.system.a, &p.system.b, &p.cost.r, p.alpha).unwrap();
    let noise = rng.matrix(k_opt.nrows(), k_opt.ncols());
    let mut scale = 0.5;
    loop {
        let k = &k_opt + noise.scale(scale);
        let closed = &p.system.a + &p.system.b * &k;
        if riccati::discounted_spectral_radius(&closed, p.alpha) < 0.98 {
            return k;
        }
        scale *= 0.5;
    }
}
