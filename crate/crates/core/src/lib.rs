//! Synthesis of optimal and constrained discounted LQG controllers through a
//! pair of semidefinite programs over occupation moments and quadratic value
//! functions, cross-validated by Riccati/Lyapunov oracles and seeded Monte
//! Carlo simulation.
//!
//! Everything is generic over the scalar type via [`scalar::FloatT`]; the
//! `*64` aliases at the crate root pin `f64`, which the default solver
//! tolerances are calibrated for.

pub mod builder;
pub mod chance;
pub mod error;
pub mod ipm;
pub mod policy;
pub mod problem;
pub mod riccati;
pub mod scalar;
pub mod sim;
pub mod symcone;

pub use error::{Error, Result};
pub use scalar::FloatT;

pub type DiscountedLqgProblem64 = problem::DiscountedLqgProblem<f64>;
pub type LinearStochasticSystem64 = problem::LinearStochasticSystem<f64>;
pub type InitialDistribution64 = problem::InitialDistribution<f64>;
pub type QuadraticStageCost64 = problem::QuadraticStageCost<f64>;
pub type MomentBound64 = problem::MomentBound<f64>;
pub type ChanceSpec64 = problem::ChanceSpec<f64>;
pub type ConicProgram64 = symcone::ConicProgram<f64>;
pub type ConicSolution64 = symcone::ConicSolution<f64>;
pub type SymmetricMatrix64 = symcone::SymmetricMatrix<f64>;
pub type OccupationMoments64 = builder::OccupationMoments<f64>;
pub type QuadraticValueFunction64 = builder::QuadraticValueFunction<f64>;
pub type SolverOptions64 = ipm::SolverOptions<f64>;
pub type AffineGaussianPolicy64 = policy::AffineGaussianPolicy<f64>;
pub type Estimate64 = sim::Estimate<f64>;
