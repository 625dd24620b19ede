//! Subcommand implementations: the solve pipeline, the Riccati oracle runner,
//! Monte Carlo emission, occupancy-ellipse sweeps, and the bundled case
//! studies.

use crate::cases;
use crate::config::{matrix_rows, ChanceModeDoc, ConfigDoc};
use crate::error::CliError;
use crate::output::{self, write_json};
use lqgsdp::builder::{
    build_dual, build_primal, extract_moments, extract_value, moment_objective,
};
use lqgsdp::chance::{analytic_chance_mass, expand_chance_specs};
use lqgsdp::ipm::solve_conic;
use lqgsdp::policy::{gain_from_moments, MomentPolicyExtraction};
use lqgsdp::problem::{validate_problem, DiscountedLqgProblem};
use lqgsdp::riccati;
use lqgsdp::sim::{
    estimate_chance_mass, estimate_discounted_cost, estimate_occupation_moments, simulate_batch,
    Horizon, SimConfig,
};
use lqgsdp::symcone::{program_residuals, SolveStatus};
use lqgsdp::{builder::OccupationMoments, ConicSolution64, SolverOptions64};
use nalgebra::DVector;
use std::path::Path;

/// Everything the full primal-plus-dual pipeline produces for one problem.
pub struct PipelineOutcome {
    /// Problem with chance specs already translated to moment bounds.
    pub expanded: DiscountedLqgProblem<f64>,
    pub primal_solution: ConicSolution64,
    pub moments: OccupationMoments<f64>,
    pub multipliers: Vec<f64>,
    pub extraction: MomentPolicyExtraction<f64>,
    pub report: output::SolveReportDoc,
}

fn require_optimal(name: &str, sol: &ConicSolution64) -> Result<(), CliError> {
    if sol.status != SolveStatus::Optimal {
        return Err(CliError::Solver(format!(
            "{name} solve ended with status {} after {} iterations",
            output::status_name(sol.status),
            sol.iterations
        )));
    }
    Ok(())
}

/// Runs validation, chance translation, both solves, extraction and the
/// oracle cross-check.
pub fn run_pipeline(
    problem: &DiscountedLqgProblem<f64>,
    opts: &SolverOptions64,
) -> Result<PipelineOutcome, CliError> {
    let validation = validate_problem(problem).map_err(|e| CliError::Input(e.to_string()))?;
    let expanded = expand_chance_specs(problem)?;

    let primal_prog = build_primal(&expanded)?;
    let primal_opts = opts.with_moment_scale(expanded.total_mass());
    let primal_solution = solve_conic(&primal_prog, &primal_opts)?;
    require_optimal("primal", &primal_solution)?;
    let primal_res = program_residuals(&primal_prog, &primal_solution)?;

    let dual_prog = build_dual(&expanded)?;
    let dual_solution = solve_conic(&dual_prog, opts)?;
    require_optimal("dual", &dual_solution)?;
    let dual_res = program_residuals(&dual_prog, &dual_solution)?;

    let moments = extract_moments(&primal_prog, &primal_solution)?;
    let (value, multipliers) = extract_value(&dual_prog, &dual_solution)?;
    let extraction = gain_from_moments(&moments, 1e-10);

    let dual_value = -dual_solution.primal_obj;
    let cross_gap =
        (primal_solution.primal_obj - dual_value).abs() / (1.0 + primal_solution.primal_obj.abs());

    // Oracle cross-check with the effective cost (active multipliers folded
    // into Q and R).
    let gammas: Vec<f64> = multipliers.iter().copied().collect();
    let mut q_eff = expanded.cost.q.clone();
    let mut r_eff = expanded.cost.r.clone();
    for (g, b) in gammas.iter().zip(expanded.moment_bounds.iter()) {
        q_eff += b.cost.q.scale(*g);
        r_eff += b.cost.r.scale(*g);
    }
    let dare_residual_of_value_p = riccati::dare_residual(
        &value.p,
        &expanded.system.a,
        &expanded.system.b,
        &q_eff,
        &r_eff,
        expanded.alpha,
    )
    .map_err(|e| CliError::Solver(e.to_string()))?;
    let riccati_doc = match riccati::solve_dare(
        &expanded.system.a,
        &expanded.system.b,
        &q_eff,
        &r_eff,
        expanded.alpha,
        1e-12,
        100_000,
    ) {
        Ok(dare) if dare.converged => {
            let k = riccati::gain_from_value(
                &dare.p,
                &expanded.system.a,
                &expanded.system.b,
                &r_eff,
                expanded.alpha,
            )
            .map_err(|e| CliError::Solver(e.to_string()))?;
            let r_const =
                expanded.alpha / (1.0 - expanded.alpha) * (&dare.p * &expanded.system.w).trace();
            let cost = riccati::optimal_cost(
                &dare.p,
                &DVector::zeros(expanded.num_states()),
                r_const,
                &expanded.init,
            );
            let gain_gap = (extraction.policy.gain.clone() - &k).norm();
            output::RiccatiDoc {
                p: Some(matrix_rows(&dare.p)),
                gain: Some(matrix_rows(&k)),
                cost: Some(cost),
                dare_residual_of_value_p,
                gain_gap: Some(gain_gap),
                oracle_note: None,
            }
        }
        Ok(dare) => output::RiccatiDoc {
            p: None,
            gain: None,
            cost: None,
            dare_residual_of_value_p,
            gain_gap: None,
            oracle_note: Some(format!(
                "fixed-point iteration stopped at residual {:e} without converging",
                dare.residual
            )),
        },
        Err(e) => output::RiccatiDoc {
            p: None,
            gain: None,
            cost: None,
            dare_residual_of_value_p,
            gain_gap: None,
            oracle_note: Some(e.to_string()),
        },
    };

    let bound_activity = expanded
        .moment_bounds
        .iter()
        .zip(gammas.iter())
        .map(|(b, g)| {
            let value = (&b.cost.q * &moments.z_xx).trace() + (&b.cost.r * &moments.z_uu).trace();
            output::BoundActivityDoc {
                beta: b.beta,
                value,
                slack: b.beta - value,
                gamma: *g,
                active: *g > 1e-6,
            }
        })
        .collect();

    let report = output::SolveReportDoc {
        problem: output::ProblemSummaryDoc {
            num_states: expanded.num_states(),
            num_inputs: expanded.num_inputs(),
            alpha: expanded.alpha,
            total_mass: expanded.total_mass(),
            num_bounds: expanded.moment_bounds.len(),
            num_chance_specs: problem.chance_specs.len(),
        },
        validation: output::validation_doc(&validation),
        primal: output::SolveSideDoc {
            status: output::status_name(primal_solution.status).into(),
            iterations: primal_solution.iterations,
            objective: primal_solution.primal_obj,
            residuals: primal_res.into(),
        },
        dual: output::SolveSideDoc {
            status: output::status_name(dual_solution.status).into(),
            iterations: dual_solution.iterations,
            objective: dual_value,
            residuals: dual_res.into(),
        },
        cross_gap,
        value_function: (&value).into(),
        multipliers: gammas.clone(),
        moments: (&moments).into(),
        policy: (&extraction).into(),
        riccati: riccati_doc,
        bound_activity,
    };

    Ok(PipelineOutcome {
        expanded,
        primal_solution,
        moments,
        multipliers: gammas,
        extraction,
        report,
    })
}

fn load_config(path: &Path) -> Result<ConfigDoc, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    ConfigDoc::parse(&text)
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

pub fn cmd_solve(
    config_path: &Path,
    out_dir: &Path,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> Result<(), CliError> {
    let doc = load_config(config_path)?;
    let problem = doc.to_problem()?;
    let mut opts = doc.solver_options();
    if let Some(t) = tol {
        opts.tol_gap = t;
        opts.tol_feas = t;
    }
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    let outcome = run_pipeline(&problem, &opts)?;
    ensure_out_dir(out_dir)?;
    write_json(&out_dir.join("result.json"), &outcome.report)?;
    println!(
        "primal {:.6} dual {:.6} gap {:.3e} -> {}",
        outcome.report.primal.objective,
        outcome.report.dual.objective,
        outcome.report.cross_gap,
        out_dir.join("result.json").display()
    );
    Ok(())
}

pub fn cmd_riccati(config_path: &Path) -> Result<(), CliError> {
    let doc = load_config(config_path)?;
    let problem = doc.to_problem()?;
    let dare = riccati::solve_dare(
        &problem.system.a,
        &problem.system.b,
        &problem.cost.q,
        &problem.cost.r,
        problem.alpha,
        1e-12,
        100_000,
    )
    .map_err(|e| CliError::Solver(e.to_string()))?;
    if !dare.converged {
        return Err(CliError::Solver(format!(
            "fixed-point iteration did not converge (residual {:e} after {} iterations); \
             the system may be unstabilizable",
            dare.residual, dare.iterations
        )));
    }
    let k = riccati::gain_from_value(
        &dare.p,
        &problem.system.a,
        &problem.system.b,
        &problem.cost.r,
        problem.alpha,
    )
    .map_err(|e| CliError::Solver(e.to_string()))?;
    let r_const = problem.alpha / (1.0 - problem.alpha) * (&dare.p * &problem.system.w).trace();
    let cost = riccati::optimal_cost(
        &dare.p,
        &DVector::zeros(problem.num_states()),
        r_const,
        &problem.init,
    );
    println!("P:");
    for i in 0..dare.p.nrows() {
        let row: Vec<String> = (0..dare.p.ncols())
            .map(|j| output::fmt_f64(dare.p[(i, j)]))
            .collect();
        println!("  {}", row.join(" "));
    }
    println!("K:");
    for i in 0..k.nrows() {
        let row: Vec<String> = (0..k.ncols()).map(|j| output::fmt_f64(k[(i, j)])).collect();
        println!("  {}", row.join(" "));
    }
    println!("cost: {}", output::fmt_f64(cost));
    println!("iterations: {}", dare.iterations);
    Ok(())
}

pub fn cmd_simulate(
    config_path: &Path,
    out_dir: &Path,
    trajectories: Option<usize>,
    seed: Option<u64>,
    horizon: Option<String>,
) -> Result<(), CliError> {
    let doc = load_config(config_path)?;
    let problem = doc.to_problem()?;
    let mut cfg = doc.sim_config();
    if let Some(n) = trajectories {
        cfg.n_traj = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(h) = horizon {
        cfg.horizon = parse_horizon(&h)?;
    }
    let outcome = run_pipeline(&problem, &doc.solver_options())?;
    ensure_out_dir(out_dir)?;
    write_simulation(&problem, &doc, &outcome, &cfg, out_dir)?;
    Ok(())
}

fn parse_horizon(text: &str) -> Result<Horizon, CliError> {
    if text == "auto" {
        return Ok(Horizon::Auto { tail_tol: 1e-6 });
    }
    text.parse::<usize>()
        .map(Horizon::Fixed)
        .map_err(|_| CliError::Input(format!("horizon must be an integer or \"auto\", got {text}")))
}

fn write_simulation(
    problem: &DiscountedLqgProblem<f64>,
    doc: &ConfigDoc,
    outcome: &PipelineOutcome,
    cfg: &SimConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    let batch = simulate_batch(&outcome.expanded, &outcome.extraction.policy, cfg)?;
    output::write_trajectory_csv(&out_dir.join("trajectory.csv"), &batch, 0)?;

    let cost = estimate_discounted_cost(&batch, &problem.cost, problem.alpha);
    let emp = estimate_occupation_moments(&batch, problem.alpha);
    let mut chance_docs = Vec::new();
    for c in &doc.chance {
        let g = DVector::from_vec(c.g.clone());
        let est = estimate_chance_mass(&batch, &g, c.h, problem.alpha);
        let analytic =
            analytic_chance_mass(&outcome.expanded, &outcome.extraction.policy.gain, &g, c.h, 1e-9)?;
        chance_docs.push(output::ChanceEstimateDoc {
            g: c.g.clone(),
            h: c.h,
            eps: c.eps,
            mode: match c.mode {
                ChanceModeDoc::Markov => "markov".into(),
                ChanceModeDoc::Gaussian => "gaussian".into(),
            },
            estimate: est.into(),
            analytic_mass: analytic.mass,
            analytic_truncation: analytic.truncation,
        });
    }
    let report = output::SimulationReportDoc {
        n_traj: batch.n_traj,
        horizon: batch.horizon,
        seed: cfg.seed,
        cost: cost.into(),
        moments_mean: (&emp.mean).into(),
        moments_std_error: (&emp.std_error).into(),
        chance: chance_docs,
    };
    write_json(&out_dir.join("estimates.json"), &report)?;
    println!(
        "simulated {} trajectories over {} steps -> {}",
        batch.n_traj,
        batch.horizon,
        out_dir.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct SweepEntryDoc {
    label: String,
    beta: Option<f64>,
    objective: f64,
    bound_value: Option<f64>,
    m_x: Vec<f64>,
    ellipse_file: String,
}

pub fn cmd_ellipse(
    config_path: &Path,
    out_dir: &Path,
    points: usize,
    sweep: Option<String>,
) -> Result<(), CliError> {
    let doc = load_config(config_path)?;
    let problem = doc.to_problem()?;
    if problem.num_states() != 2 {
        return Err(CliError::Input(format!(
            "occupancy ellipses need a two-dimensional state, got {}",
            problem.num_states()
        )));
    }
    if points < 3 {
        return Err(CliError::Input("need at least 3 ellipse points".into()));
    }
    let betas: Option<Vec<f64>> = match sweep {
        None => None,
        Some(text) => Some(
            text.split(',')
                .map(|part| {
                    part.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Input(format!("bad sweep value `{part}`")))
                })
                .collect::<Result<_, _>>()?,
        ),
    };
    if betas.is_some() && problem.moment_bounds.is_empty() && problem.chance_specs.is_empty() {
        return Err(CliError::Input(
            "--sweep needs a moment bound (or chance spec) in the config to vary".into(),
        ));
    }
    ensure_out_dir(out_dir)?;
    let opts = doc.solver_options();

    let mut entries = Vec::new();
    let runs: Vec<(String, Option<f64>)> = match &betas {
        None => vec![("base".to_string(), None)],
        Some(list) => list
            .iter()
            .enumerate()
            .map(|(i, b)| (format!("{i:02}_beta_{b}"), Some(*b)))
            .collect(),
    };
    for (label, beta) in runs {
        let mut p = problem.clone();
        if let Some(b) = beta {
            if let Some(first) = p.moment_bounds.first_mut() {
                first.beta = b;
            } else {
                return Err(CliError::Input(
                    "--sweep needs a moment bound in the config to vary".into(),
                ));
            }
        }
        let outcome = run_pipeline(&p, &opts)?;
        let pts = output::ellipse_points(&outcome.moments.z_xx, &outcome.moments.m_x, points)?;
        let file = format!("ellipse_{label}.csv");
        output::write_ellipse_csv(&out_dir.join(&file), &pts)?;
        let bound_value = outcome.report.bound_activity.first().map(|b| b.value);
        entries.push(SweepEntryDoc {
            label,
            beta,
            objective: outcome.primal_solution.primal_obj,
            bound_value,
            m_x: outcome.moments.m_x.iter().copied().collect(),
            ellipse_file: file,
        });
    }
    write_json(&out_dir.join("sweep.json"), &entries)?;
    println!("wrote {} ellipse file(s) -> {}", entries.len(), out_dir.display());
    Ok(())
}

struct CheckLine {
    name: String,
    passed: bool,
    detail: String,
}

fn finish_checks(out_dir: &Path, checks: Vec<CheckLine>) -> Result<(), CliError> {
    #[derive(serde::Serialize)]
    struct CheckOut {
        name: String,
        passed: bool,
        detail: String,
    }
    let docs: Vec<CheckOut> = checks
        .iter()
        .map(|c| CheckOut {
            name: c.name.clone(),
            passed: c.passed,
            detail: c.detail.clone(),
        })
        .collect();
    write_json(&out_dir.join("checks.json"), &docs)?;
    let mut all = true;
    for c in &checks {
        println!("{}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        all &= c.passed;
    }
    if all {
        Ok(())
    } else {
        Err(CliError::Check("one or more reproduction checks failed".into()))
    }
}

pub fn cmd_reproduce(case: &str, out_dir: &Path) -> Result<(), CliError> {
    match case {
        "two-state" => reproduce_two_state(out_dir),
        "helicopter" => reproduce_helicopter(out_dir),
        other => Err(CliError::Input(format!(
            "unknown case `{other}`; expected `two-state` or `helicopter`"
        ))),
    }
}

fn reproduce_two_state(out_dir: &Path) -> Result<(), CliError> {
    ensure_out_dir(out_dir)?;
    let doc = ConfigDoc::parse(cases::TWO_STATE)?;
    std::fs::write(out_dir.join("two_state_config.json"), doc.emit())?;
    let constrained = doc.to_problem()?;
    let mut unconstrained = constrained.clone();
    unconstrained.moment_bounds.clear();
    let opts = doc.solver_options();

    let base = run_pipeline(&unconstrained, &opts)?;
    write_json(&out_dir.join("result_unconstrained.json"), &base.report)?;
    let cost_u = base.primal_solution.primal_obj;
    let q1 = &constrained.moment_bounds[0].cost.q;
    let spare = (q1 * &base.moments.z_xx).trace();

    let tight = run_pipeline(&constrained, &opts)?;
    write_json(&out_dir.join("result_beta15.json"), &tight.report)?;
    let cost_c = tight.primal_solution.primal_obj;

    // Occupancy-ellipse sweep from the unconstrained level down to the
    // tightest case.
    let sweep = [spare, 50.0, 40.0, 30.0, 22.0, 15.0];
    let mut entries = Vec::new();
    let mut objectives = Vec::new();
    let mut bound_values = Vec::new();
    for (i, &beta) in sweep.iter().enumerate() {
        let mut p = constrained.clone();
        p.moment_bounds[0].beta = beta;
        let outcome = run_pipeline(&p, &opts)?;
        let pts = output::ellipse_points(&outcome.moments.z_xx, &outcome.moments.m_x, 256)?;
        let file = format!("ellipse_{i:02}_beta_{beta}.csv");
        output::write_ellipse_csv(&out_dir.join(&file), &pts)?;
        objectives.push(outcome.primal_solution.primal_obj);
        bound_values.push((q1 * &outcome.moments.z_xx).trace());
        entries.push(SweepEntryDoc {
            label: format!("{i:02}"),
            beta: Some(beta),
            objective: outcome.primal_solution.primal_obj,
            bound_value: Some(*bound_values.last().unwrap()),
            m_x: outcome.moments.m_x.iter().copied().collect(),
            ellipse_file: file,
        });
    }
    write_json(&out_dir.join("sweep.json"), &entries)?;

    let monotone_obj = objectives.windows(2).all(|w| w[1] >= w[0] - 1e-6 * (1.0 + w[0].abs()));
    let monotone_val = bound_values
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-6 * (1.0 + w[0].abs()));

    let checks = vec![
        CheckLine {
            name: "unconstrained_cost".into(),
            passed: (cost_u - 378.0).abs() / 378.0 <= 0.02,
            detail: format!("cost {cost_u:.3}, reference 378, tolerance 2%"),
        },
        CheckLine {
            name: "constrained_cost_beta15".into(),
            passed: (cost_c - 981.0).abs() / 981.0 <= 0.02,
            detail: format!("cost {cost_c:.3}, reference 981, tolerance 2%"),
        },
        CheckLine {
            name: "sweep_objective_monotone".into(),
            passed: monotone_obj,
            detail: format!("objectives along tightening sweep: {objectives:.3?}"),
        },
        CheckLine {
            name: "sweep_bound_value_monotone".into(),
            passed: monotone_val,
            detail: format!("second objective along sweep: {bound_values:.3?}"),
        },
    ];
    finish_checks(out_dir, checks)
}

fn reproduce_helicopter(out_dir: &Path) -> Result<(), CliError> {
    ensure_out_dir(out_dir)?;
    let doc = ConfigDoc::parse(cases::HELICOPTER)?;
    std::fs::write(out_dir.join("helicopter_config.json"), doc.emit())?;
    let constrained = doc.to_problem()?;
    let mut unconstrained = constrained.clone();
    unconstrained.moment_bounds.clear();
    let opts = doc.solver_options();
    let r1 = &constrained.moment_bounds[0].cost.r;
    let beta = constrained.moment_bounds[0].beta;

    let base = run_pipeline(&unconstrained, &opts)?;
    write_json(&out_dir.join("result_unconstrained.json"), &base.report)?;
    let energy_u = (r1 * &base.moments.z_uu).trace();
    let regulation_u = moment_objective(&unconstrained, &base.moments);

    let tight = run_pipeline(&constrained, &opts)?;
    write_json(&out_dir.join("result_constrained.json"), &tight.report)?;
    let energy_c = (r1 * &tight.moments.z_uu).trace();
    let regulation_c = (&constrained.cost.q * &tight.moments.z_xx).trace();
    let gamma = tight.multipliers[0];

    // One closed-loop realization per policy for regulation/energy plots.
    let cfg = SimConfig {
        n_traj: 1,
        horizon: Horizon::Auto { tail_tol: 1e-4 },
        seed: doc.sim_config().seed,
    };
    let batch_u = simulate_batch(&base.expanded, &base.extraction.policy, &cfg)?;
    output::write_trajectory_csv(&out_dir.join("trajectory_unconstrained.csv"), &batch_u, 0)?;
    let batch_c = simulate_batch(&tight.expanded, &tight.extraction.policy, &cfg)?;
    output::write_trajectory_csv(&out_dir.join("trajectory_constrained.csv"), &batch_c, 0)?;

    let checks = vec![
        CheckLine {
            name: "constrained_energy_within_bound".into(),
            passed: energy_c <= beta + 1e-6,
            detail: format!("Tr(R1 Z_uu) = {energy_c:.6} vs beta = {beta}"),
        },
        CheckLine {
            name: "bound_is_active".into(),
            passed: gamma > 1e-6,
            detail: format!("multiplier gamma = {gamma:.6e}"),
        },
        CheckLine {
            name: "unconstrained_energy_exceeds_bound".into(),
            passed: energy_u > beta,
            detail: format!("unconstrained Tr(R1 Z_uu) = {energy_u:.3}"),
        },
        CheckLine {
            name: "regulation_cost_increases".into(),
            passed: regulation_c > regulation_u,
            detail: format!("Tr(Q0 Z_xx): {regulation_c:.3} constrained vs {regulation_u:.3}"),
        },
    ];
    finish_checks(out_dir, checks)
}
