//! Result documents and plottable file emission. JSON numbers use the
//! shortest round-trip representation (lossless doubles); CSV numbers are
//! printed with 17 significant digits. Both are byte-stable across runs for
//! fixed inputs.

use crate::config::matrix_rows;
use crate::error::CliError;
use lqgsdp::builder::{OccupationMoments, QuadraticValueFunction};
use lqgsdp::policy::MomentPolicyExtraction;
use lqgsdp::problem::ValidationReport;
use lqgsdp::sim::{Estimate, TrajectoryBatch};
use lqgsdp::symcone::{ProgramResiduals, SolveStatus};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

pub fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::NumericalFailure => "numerical_failure",
        SolveStatus::InfeasibleSuspected => "infeasible_suspected",
    }
}

#[derive(Serialize)]
pub struct CheckDoc {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

pub fn validation_doc(report: &ValidationReport) -> Vec<CheckDoc> {
    report
        .checks
        .iter()
        .map(|c| CheckDoc {
            name: c.name.clone(),
            passed: c.passed,
            value: c.value,
            detail: c.detail.clone(),
        })
        .collect()
}

#[derive(Serialize)]
pub struct ResidualsDoc {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub duality_gap: f64,
}

impl From<ProgramResiduals<f64>> for ResidualsDoc {
    fn from(r: ProgramResiduals<f64>) -> Self {
        Self {
            primal_infeasibility: r.primal_infeas,
            dual_infeasibility: r.dual_infeas,
            duality_gap: r.duality_gap,
        }
    }
}

#[derive(Serialize)]
pub struct SolveSideDoc {
    pub status: String,
    pub iterations: usize,
    pub objective: f64,
    pub residuals: ResidualsDoc,
}

#[derive(Serialize)]
pub struct MomentsDoc {
    pub m: f64,
    pub m_x: Vec<f64>,
    pub m_u: Vec<f64>,
    #[serde(rename = "Z_xx")]
    pub z_xx: Vec<Vec<f64>>,
    #[serde(rename = "Z_xu")]
    pub z_xu: Vec<Vec<f64>>,
    #[serde(rename = "Z_uu")]
    pub z_uu: Vec<Vec<f64>>,
}

impl From<&OccupationMoments<f64>> for MomentsDoc {
    fn from(m: &OccupationMoments<f64>) -> Self {
        Self {
            m: m.m,
            m_x: m.m_x.iter().copied().collect(),
            m_u: m.m_u.iter().copied().collect(),
            z_xx: matrix_rows(&m.z_xx),
            z_xu: matrix_rows(&m.z_xu),
            z_uu: matrix_rows(&m.z_uu),
        }
    }
}

#[derive(Serialize)]
pub struct ValueFunctionDoc {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub r: f64,
}

impl From<&QuadraticValueFunction<f64>> for ValueFunctionDoc {
    fn from(v: &QuadraticValueFunction<f64>) -> Self {
        Self {
            p: matrix_rows(&v.p),
            q: v.q.iter().copied().collect(),
            r: v.r,
        }
    }
}

#[derive(Serialize)]
pub struct PolicyDoc {
    #[serde(rename = "K")]
    pub gain: Vec<Vec<f64>>,
    pub k: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub zxx_rank: usize,
    pub rank_deficient: bool,
}

impl From<&MomentPolicyExtraction<f64>> for PolicyDoc {
    fn from(e: &MomentPolicyExtraction<f64>) -> Self {
        Self {
            gain: matrix_rows(&e.policy.gain),
            k: e.policy.offset.iter().copied().collect(),
            cov: matrix_rows(&e.policy.cov),
            zxx_rank: e.zxx_rank,
            rank_deficient: e.rank_deficient,
        }
    }
}

#[derive(Serialize)]
pub struct RiccatiDoc {
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    /// Residual of the effective-cost Riccati equation at the value-function
    /// `P` recovered from the solve.
    pub dare_residual_of_value_p: f64,
    /// Frobenius gap between the moment-extracted gain and the oracle gain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_note: Option<String>,
}

#[derive(Serialize)]
pub struct BoundActivityDoc {
    pub beta: f64,
    pub value: f64,
    pub slack: f64,
    pub gamma: f64,
    pub active: bool,
}

#[derive(Serialize)]
pub struct ProblemSummaryDoc {
    pub num_states: usize,
    pub num_inputs: usize,
    pub alpha: f64,
    pub total_mass: f64,
    pub num_bounds: usize,
    pub num_chance_specs: usize,
}

#[derive(Serialize)]
pub struct SolveReportDoc {
    pub problem: ProblemSummaryDoc,
    pub validation: Vec<CheckDoc>,
    pub primal: SolveSideDoc,
    pub dual: SolveSideDoc,
    /// `|primal - dual| / (1 + |primal|)` across the two solves.
    pub cross_gap: f64,
    pub value_function: ValueFunctionDoc,
    pub multipliers: Vec<f64>,
    pub moments: MomentsDoc,
    pub policy: PolicyDoc,
    pub riccati: RiccatiDoc,
    pub bound_activity: Vec<BoundActivityDoc>,
}

#[derive(Serialize)]
pub struct EstimateDoc {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl From<Estimate<f64>> for EstimateDoc {
    fn from(e: Estimate<f64>) -> Self {
        Self {
            value: e.value,
            std_error: e.std_error,
            n: e.n,
        }
    }
}

#[derive(Serialize)]
pub struct ChanceEstimateDoc {
    pub g: Vec<f64>,
    pub h: f64,
    pub eps: f64,
    pub mode: String,
    pub estimate: EstimateDoc,
    pub analytic_mass: f64,
    pub analytic_truncation: f64,
}

#[derive(Serialize)]
pub struct SimulationReportDoc {
    pub n_traj: usize,
    pub horizon: usize,
    pub seed: u64,
    pub cost: EstimateDoc,
    pub moments_mean: MomentsDoc,
    pub moments_std_error: MomentsDoc,
    pub chance: Vec<ChanceEstimateDoc>,
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::Input(format!("serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// 17 significant digits, locale-free.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv(
    path: &Path,
    batch: &TrajectoryBatch<f64>,
    traj: usize,
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push('t');
    for i in 0..batch.num_states {
        let _ = write!(out, ",x{}", i + 1);
    }
    for l in 0..batch.num_inputs {
        let _ = write!(out, ",u{}", l + 1);
    }
    out.push('\n');
    for t in 0..=batch.horizon {
        let _ = write!(out, "{t}");
        for v in batch.state(traj, t) {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        for v in batch.input(traj, t) {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_ellipse_csv(path: &Path, points: &[(f64, f64)]) -> Result<(), CliError> {
    let mut out = String::from("x1,x2\n");
    for (x1, x2) in points {
        let _ = writeln!(out, "{},{}", fmt_f64(*x1), fmt_f64(*x2));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Boundary points of `{x : (x - m_x)' Z_xx^{-1} (x - m_x) = 1}` for a
/// two-dimensional state.
pub fn ellipse_points(
    z_xx: &DMatrix<f64>,
    m_x: &nalgebra::DVector<f64>,
    n_points: usize,
) -> Result<Vec<(f64, f64)>, CliError> {
    if z_xx.nrows() != 2 {
        return Err(CliError::Input(format!(
            "occupancy ellipses need a two-dimensional state, got {}",
            z_xx.nrows()
        )));
    }
    let l = lqgsdp::sim::psd_factor(z_xx).map_err(|e| CliError::Solver(e.to_string()))?;
    let mut points = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n_points as f64;
        let c = theta.cos();
        let s = theta.sin();
        points.push((
            m_x[0] + l[(0, 0)] * c + l[(0, 1)] * s,
            m_x[1] + l[(1, 0)] * c + l[(1, 1)] * s,
        ));
    }
    Ok(points)
}
