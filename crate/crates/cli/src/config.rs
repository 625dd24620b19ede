//! The JSON experiment document: system, initial law, costs, discount,
//! bounds, chance requirements, solver and simulation settings. Matrices are
//! row-major nested arrays.

use crate::error::CliError;
use lqgsdp::problem::{
    ChanceMode, ChanceSpec, DiscountedLqgProblem, InitialDistribution, LinearStochasticSystem,
    MomentBound, QuadraticStageCost,
};
use lqgsdp::sim::{Horizon, SimConfig};
use lqgsdp::SolverOptions64;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    /// Free-form commentary; carried through verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub system: SystemDoc,
    pub init: InitDoc,
    pub cost: CostDoc,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chance: Vec<ChanceDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitDoc {
    pub m0: Vec<f64>,
    #[serde(rename = "Sigma0")]
    pub sigma0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CostDoc {
    #[serde(rename = "Q0")]
    pub q0: Vec<Vec<f64>>,
    #[serde(rename = "R0")]
    pub r0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundDoc {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChanceDoc {
    pub g: Vec<f64>,
    pub h: f64,
    pub eps: f64,
    pub mode: ChanceModeDoc,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ChanceModeDoc {
    Markov,
    Gaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverDoc {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    200
}

impl Default for SolverDoc {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimDoc {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: HorizonDoc,
}

fn default_n_traj() -> usize {
    10_000
}

fn default_horizon() -> HorizonDoc {
    HorizonDoc::Auto("auto".into())
}

impl Default for SimDoc {
    fn default() -> Self {
        Self {
            n_traj: default_n_traj(),
            seed: 0,
            horizon: default_horizon(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum HorizonDoc {
    Steps(usize),
    Auto(String),
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: ConfigDoc = serde_json::from_str(text)
            .map_err(|e| CliError::Input(format!("config parse error: {e}")))?;
        doc.validate()?;
        Ok(doc)
    }

    /// Canonical serialization; `parse(emit(doc)) == doc`.
    pub fn emit(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("config serializes");
        out.push('\n');
        out
    }

    fn validate(&self) -> Result<(), CliError> {
        matrix_of("system.A", &self.a_rows())?;
        matrix_of("system.B", &self.system.b)?;
        matrix_of("system.W", &self.system.w)?;
        matrix_of("init.Sigma0", &self.init.sigma0)?;
        matrix_of("cost.Q0", &self.cost.q0)?;
        matrix_of("cost.R0", &self.cost.r0)?;
        for (i, b) in self.bounds.iter().enumerate() {
            matrix_of(&format!("bounds[{i}].Q"), &b.q)?;
            matrix_of(&format!("bounds[{i}].R"), &b.r)?;
        }
        if let Some(HorizonDoc::Auto(word)) = self.sim.as_ref().map(|s| &s.horizon) {
            if word != "auto" {
                return Err(CliError::Input(format!(
                    "sim.horizon must be an integer or \"auto\", got \"{word}\""
                )));
            }
        }
        Ok(())
    }

    fn a_rows(&self) -> Vec<Vec<f64>> {
        self.system.a.clone()
    }

    pub fn to_problem(&self) -> Result<DiscountedLqgProblem<f64>, CliError> {
        let problem = DiscountedLqgProblem {
            system: LinearStochasticSystem {
                a: to_matrix("system.A", &self.system.a)?,
                b: to_matrix("system.B", &self.system.b)?,
                w: to_matrix("system.W", &self.system.w)?,
            },
            init: InitialDistribution {
                mean: DVector::from_vec(self.init.m0.clone()),
                cov: to_matrix("init.Sigma0", &self.init.sigma0)?,
            },
            cost: QuadraticStageCost {
                q: to_matrix("cost.Q0", &self.cost.q0)?,
                r: to_matrix("cost.R0", &self.cost.r0)?,
            },
            alpha: self.alpha,
            moment_bounds: self
                .bounds
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    Ok(MomentBound {
                        cost: QuadraticStageCost {
                            q: to_matrix(&format!("bounds[{i}].Q"), &b.q)?,
                            r: to_matrix(&format!("bounds[{i}].R"), &b.r)?,
                        },
                        beta: b.beta,
                    })
                })
                .collect::<Result<_, CliError>>()?,
            chance_specs: self
                .chance
                .iter()
                .map(|c| ChanceSpec {
                    g: DVector::from_vec(c.g.clone()),
                    h: c.h,
                    eps: c.eps,
                    mode: match c.mode {
                        ChanceModeDoc::Markov => ChanceMode::Markov,
                        ChanceModeDoc::Gaussian => ChanceMode::Gaussian,
                    },
                })
                .collect(),
        };
        problem
            .check_dimensions()
            .map_err(|e| CliError::Input(e.to_string()))?;
        Ok(problem)
    }

    pub fn solver_options(&self) -> SolverOptions64 {
        let doc = self.solver.clone().unwrap_or_default();
        SolverOptions64 {
            tol_gap: doc.tol,
            tol_feas: doc.tol,
            max_iter: doc.max_iter,
            ..SolverOptions64::default()
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let doc = self.sim.clone().unwrap_or_default();
        SimConfig {
            n_traj: doc.n_traj,
            seed: doc.seed,
            horizon: match doc.horizon {
                HorizonDoc::Steps(t) => Horizon::Fixed(t),
                HorizonDoc::Auto(_) => Horizon::Auto { tail_tol: 1e-6 },
            },
        }
    }
}

fn matrix_of(name: &str, rows: &[Vec<f64>]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Input(format!("{name}: matrix has no rows")));
    }
    let cols = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(CliError::Input(format!(
                "{name}: row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
    }
    Ok(())
}

fn to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    matrix_of(name, rows)?;
    let r = rows.len();
    let c = rows[0].len();
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Row-major nested array from a dense matrix, for emission.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
