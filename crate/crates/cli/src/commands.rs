use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use proactive_core::eval::{self, Engine, EvalConfig};
use proactive_core::experiment::{reproduce_scaling, reproduce_two_user, TwoUserCost};
use proactive_core::optim::PgOptions;
use proactive_core::proactive::{active_sets, marginal_ratio, reduction_bounds, solve_proactive};
use proactive_core::recommend::{solve_rating, PreferenceMapping, RatingVector};
use proactive_core::report::{
    write_scaling_csv, write_slot_csv, write_sweep_csv, write_table, write_trace_csv, RunReport,
};
use proactive_core::scenario::Scenario;
use proactive_core::shaping::{shape_demand, ShapeOptions};
use proactive_core::{Cube, Error};

use crate::{
    Command, EngineArg, EngineFlags, Experiment, OptimizeArgs, OutputFlags, RecommendArgs, ReproduceArgs,
    ScaleArgs, ShapeArgs, SimulateArgs, SolverFlags,
};

pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Runs one subcommand and returns the JSON report text.
pub fn run(command: Command) -> Result<String> {
    let report = match command {
        Command::Simulate(a) => simulate(a)?,
        Command::Optimize(a) => optimize(a)?,
        Command::Shape(a) => shape(a)?,
        Command::Recommend(a) => recommend(a)?,
        Command::Scale(a) => scale(a)?,
        Command::ReproducePaper(a) => reproduce(a)?,
    };
    Ok(report)
}

fn finish(report: RunReport, output: &OutputFlags) -> Result<String> {
    let text = report.to_json()?;
    if let Some(path) = &output.report {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(text)
}

fn load(path: &Path, flags: &EngineFlags) -> Result<(Scenario, EvalConfig)> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = flags.seed {
        scenario = scenario.with_seed(seed)?;
    }
    let cfg = engine_config(&scenario, flags)?;
    cfg.check(scenario.instance.users(), scenario.instance.items(), &scenario.instance.cost)?;
    Ok((scenario, cfg))
}

fn engine_config(scenario: &Scenario, flags: &EngineFlags) -> Result<EvalConfig> {
    let seed = scenario.eval.seed;
    let samples = flags.samples.map(|s| s as usize);
    let engine = match (flags.engine, samples) {
        (None, None) => scenario.eval.engine,
        (None | Some(EngineArg::MonteCarlo), Some(samples)) => Engine::MonteCarlo { samples },
        (Some(EngineArg::MonteCarlo), None) => match scenario.eval.engine {
            e @ Engine::MonteCarlo { .. } => e,
            _ => return Err(Error::Invalid("monte_carlo needs --samples".into()).into()),
        },
        (Some(_), Some(_)) => return Err(Error::Invalid("--samples only applies to monte_carlo".into()).into()),
        (Some(EngineArg::Enumerate), None) => Engine::Enumerate,
        (Some(EngineArg::AnalyticQuadratic), None) => Engine::AnalyticQuadratic,
    };
    Ok(EvalConfig { engine, seed })
}

fn pg_options(s: &SolverFlags) -> Result<PgOptions> {
    if !(s.tol > 0.0 && s.tol.is_finite()) {
        return Err(Error::Invalid(format!("--tol must be positive, got {}", s.tol)).into());
    }
    Ok(PgOptions {
        tol: s.tol,
        max_iters: s.max_iters,
        ..PgOptions::default()
    })
}

fn cube_rows(cube: &Cube) -> Vec<Vec<String>> {
    let (users, slots, items) = cube.dims();
    let mut rows = Vec::with_capacity(users * slots * items);
    for n in 0..users {
        for t in 0..slots {
            for m in 0..items {
                rows.push(vec![n.to_string(), t.to_string(), m.to_string(), cube.get(n, t, m).to_string()]);
            }
        }
    }
    rows
}

fn simulate(a: SimulateArgs) -> Result<String> {
    let (scenario, cfg) = load(&a.scenario, &a.engine)?;
    let cost = eval::nonproactive_cost(&scenario.instance, &cfg)?;
    let mut report = RunReport::new("simulate", Some(scenario.hash.clone()));
    report.metric("engine", cfg.engine.name())?;
    report.metric("seed", cfg.seed)?;
    report.metric("c_nonproactive", cost.value())?;
    report.metric("stderr", cost.total.stderr)?;
    report.metric("per_slot", &cost.per_slot)?;
    if let Some(path) = &a.output.out {
        write_slot_csv(path, &cfg, &cost)?;
        report.attach(path)?;
    }
    finish(report, &a.output)
}

fn optimize(a: OptimizeArgs) -> Result<String> {
    let (scenario, cfg) = load(&a.scenario, &a.engine)?;
    let opts = pg_options(&a.solver)?;
    let inst = &scenario.instance;
    let base = eval::nonproactive_cost(inst, &cfg)?;
    let (alloc, opt) = solve_proactive(inst, &cfg, &opts)?;
    let mut report = RunReport::new("optimize", Some(scenario.hash.clone()));
    report.metric("engine", cfg.engine.name())?;
    report.metric("c_nonproactive", base.value())?;
    report.metric("c_proactive", opt.value())?;
    report.metric("delta_c", base.value() - opt.value())?;
    report.metric("ratio", (base.value() - opt.value()) / base.value())?;
    report.metric("stderr", opt.total.stderr)?;
    if a.bounds {
        let bounds = reduction_bounds(inst, &cfg, &opts)?;
        let sets = active_sets(inst, &cfg)?;
        report.metric("bounds", &bounds)?;
        report.metric("marginal_ratio", marginal_ratio(inst, &cfg, &sets)?)?;
    }
    if let Some(path) = &a.output.out {
        write_table(path, &["user", "slot", "item", "x"], cube_rows(alloc.cube()))?;
        report.attach(path)?;
    }
    finish(report, &a.output)
}

fn shape(a: ShapeArgs) -> Result<String> {
    let (scenario, cfg) = load(&a.scenario, &a.engine)?;
    if !(a.tol > 0.0 && a.tol.is_finite()) {
        return Err(Error::Invalid(format!("--tol must be positive, got {}", a.tol)).into());
    }
    let alpha = match a.alpha {
        Some(x) if x >= 0.0 && x.is_finite() => vec![x; scenario.instance.users()],
        Some(x) => return Err(Error::Invalid(format!("--alpha must be nonnegative, got {x}")).into()),
        None => scenario.alpha.clone(),
    };
    let opts = ShapeOptions {
        tol: a.tol,
        max_outer: a.max_iters,
        ..ShapeOptions::default()
    };
    let result = shape_demand(&scenario.instance, &alpha, &cfg, &opts)?;
    let objective = result.trace.objective();
    let mut report = RunReport::new("shape", Some(scenario.hash.clone()));
    report.metric("engine", cfg.engine.name())?;
    report.metric("alpha", &alpha)?;
    report.metric("converged", result.trace.converged)?;
    report.metric("iterations", objective.len())?;
    report.metric("f0_initial", objective.first())?;
    report.metric("f0_final", objective.last())?;
    report.metric("boundary", &result.trace.boundary)?;
    if let Some(path) = &a.trace {
        let rows: Vec<_> = result
            .trace
            .iterates
            .iter()
            .enumerate()
            .map(|(iter, it)| proactive_core::experiment::TraceRow {
                iter,
                f0: it.f0,
                residual: it.max_residual,
            })
            .collect();
        write_trace_csv(path, &rows)?;
        report.attach(path)?;
    }
    if let Some(path) = &a.output.out {
        write_table(path, &["user", "slot", "item", "p"], cube_rows(result.profile.probs()))?;
        report.attach(path)?;
    }
    finish(report, &a.output)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetRow {
    target: Vec<f64>,
    #[serde(default)]
    silence: Option<f64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
        .map_err(Into::into)
}

fn recommend(a: RecommendArgs) -> Result<String> {
    let targets: Vec<TargetRow> = read_json(&a.profile)?;
    let ratings: Vec<RatingVector> = read_json(&a.ratings)?;
    if targets.len() != ratings.len() {
        bail!(Error::Invalid(format!(
            "{} profile rows but {} rating vectors",
            targets.len(),
            ratings.len()
        )));
    }
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    for (i, (row, original)) in targets.iter().zip(&ratings).enumerate() {
        let silence = row.silence.unwrap_or_else(|| 1.0 - row.target.iter().sum::<f64>());
        let sol = solve_rating(&row.target, silence, original, PreferenceMapping::LinearFractional)
            .with_context(|| format!("profile row {i}"))?;
        for (m, v) in sol.ratings.as_slice().iter().enumerate() {
            rows.push(vec![i.to_string(), m.to_string(), v.to_string()]);
        }
        solutions.push(serde_json::json!({
            "ratings": sol.ratings.as_slice(),
            "scale": sol.scale,
            "clamped": sol.clamped,
            "unconstrained": sol.unconstrained,
        }));
    }
    let mut report = RunReport::new("recommend", None);
    report.metric("solutions", solutions)?;
    if let Some(path) = &a.output.out {
        write_table(path, &["row", "item", "rating"], rows)?;
        report.attach(path)?;
    }
    finish(report, &a.output)
}

fn scale(a: ScaleArgs) -> Result<String> {
    if a.family != "zipf" {
        bail!(Error::Invalid(format!("unknown family `{}` (expected zipf)", a.family)));
    }
    let opts = pg_options(&a.solver)?;
    let curve = reproduce_scaling(&a.users, a.seed, &opts)?;
    let mut report = RunReport::new("scale", None);
    report.metric("family", &a.family)?;
    report.metric("seed", a.seed)?;
    report.metric("points", &curve.points)?;
    report.metric("exponent", curve.exponent)?;
    if let Some(path) = &a.output.out {
        write_scaling_csv(path, &curve)?;
        report.attach(path)?;
    }
    finish(report, &a.output)
}

fn reproduce(a: ReproduceArgs) -> Result<String> {
    let name = match a.experiment {
        Experiment::TwoUserQuadratic => TwoUserCost::Quadratic.name(),
        Experiment::TwoUserOutage => TwoUserCost::Outage.name(),
        Experiment::Scaling => "scaling",
    };
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from(name));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut report = RunReport::new(format!("reproduce-paper {name}"), None);
    match a.experiment {
        Experiment::TwoUserQuadratic | Experiment::TwoUserOutage => {
            let cost = if a.experiment == Experiment::TwoUserQuadratic {
                TwoUserCost::Quadratic
            } else {
                TwoUserCost::Outage
            };
            let r = reproduce_two_user(cost, a.alpha, &ShapeOptions::default())?;
            report.metric("alpha", a.alpha)?;
            report.metric("sweep", &r.sweep)?;
            report.metric("converged", r.converged)?;
            report.metric("table", &r.table)?;
            report.metric("boundary", &r.boundary)?;

            let sweep = dir.join("sweep.csv");
            write_sweep_csv(&sweep, &r.sweep)?;
            report.attach(&sweep)?;
            let trace = dir.join("trace.csv");
            write_trace_csv(&trace, &r.trace)?;
            report.attach(&trace)?;
            let table = dir.join("table.csv");
            let mut rows = Vec::new();
            for row in &r.table {
                for m in 0..row.original.len() {
                    rows.push(vec![
                        row.user.to_string(),
                        m.to_string(),
                        row.original[m].to_string(),
                        row.shaped[m].to_string(),
                        row.ratings[m].to_string(),
                    ]);
                }
            }
            write_table(&table, &["user", "item", "original", "shaped", "rating"], rows)?;
            report.attach(&table)?;
        }
        Experiment::Scaling => {
            let curve = reproduce_scaling(&proactive_core::experiment::SCALING_LADDER, a.seed, &PgOptions::default())?;
            report.metric("seed", a.seed)?;
            report.metric("points", &curve.points)?;
            report.metric("exponent", curve.exponent)?;
            let path = dir.join("scaling.csv");
            write_scaling_csv(&path, &curve)?;
            report.attach(&path)?;
        }
    }
    let text = report.to_json()?;
    std::fs::write(dir.join("report.json"), format!("{text}\n"))?;
    Ok(text)
}
