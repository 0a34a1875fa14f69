use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use bandit_poison::analysis::{
    egreedy_cost_bound, egreedy_pull_bounds_curve, ucb_bounds, verify_suite, TrialView,
    VerifyReport,
};
use bandit_poison::{
    run_experiment, AttackStrategy, ExperimentConfig, ExperimentResult, LearnerSpec,
};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::output::{read_trial_views, write_rounds, Meta, RowWriter};
use crate::presets::{fmt_param, preset, PRESETS};
use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(
    name = "bandit-poison",
    version,
    about = "Reward-poisoning attacks on stochastic bandits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one preset or config and write rows.csv and meta.json.
    Run(RunArgs),
    /// Run a base experiment over a parameter grid.
    Sweep(SweepArgs),
    /// Check a results directory against the structural and per-arm guarantees.
    Verify(VerifyArgs),
    /// Evaluate the closed-form bounds on the checkpoint grid.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// One of fig1a, fig1b, fig1c, fig2a, fig2b, fig2c, appD-eps, appD-ucb.
    #[arg(long)]
    pub preset: Option<String>,
    /// Flat `key = value` file, applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Divide horizon and trial count by this factor (rounding up).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Record every round in rounds.csv.
    #[arg(long)]
    pub full_log: bool,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite output files in an existing directory.
    #[arg(long)]
    pub force: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Re-run exactly the experiments recorded in a meta.json.
    #[arg(long, conflicts_with_all = ["preset", "config", "trials", "horizon", "seed", "scale", "full_log"])]
    pub from_meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// `key=v1,v2,…` with key one of delta1, sigma, delta0, A, c, delta.
    /// Repeat for a cartesian product.
    #[arg(long = "grid")]
    pub grid: Vec<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Directory written by `run` or `sweep`.
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Write `<out>/bounds.csv` instead of printing to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub const GRID_KEYS: &[&str] = &["delta1", "sigma", "delta0", "A", "c", "delta"];

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Verify(a) => cmd_verify(&a.dir).map(|_| ()),
        Command::Bounds(a) => cmd_bounds(&a),
    }
}

fn base_layers(exp: &ExperimentArgs) -> CliResult<Vec<Settings>> {
    let mut layers = match &exp.preset {
        Some(name) => preset(name).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown preset `{name}` (known: {})",
                PRESETS.join(", ")
            ))
        })?,
        None => vec![Settings::default()],
    };
    if let Some(path) = &exp.config {
        let file = Settings::load(path)?;
        layers = layers.iter().map(|l| l.merged(&file)).collect();
    } else if exp.preset.is_none() {
        return Err(CliError::Validation(
            "nothing to run: give --preset, --config, or both".into(),
        ));
    }
    Ok(layers)
}

fn finish(layer: Settings, exp: &ExperimentArgs) -> CliResult<ExperimentConfig<f64>> {
    let layer = match exp.scale {
        Some(s) => layer.scaled(s)?,
        None => layer,
    };
    let flags = Settings {
        trials: exp.trials,
        horizon: exp.horizon,
        seed: exp.seed,
        full_log: exp.full_log.then_some(true),
        ..Default::default()
    };
    layer.merged(&flags).resolve()
}

pub fn resolve_experiments(exp: &ExperimentArgs) -> CliResult<Vec<ExperimentConfig<f64>>> {
    base_layers(exp)?
        .into_iter()
        .map(|l| finish(l, exp))
        .collect()
}

fn parse_grid(specs: &[String]) -> CliResult<Vec<(String, Vec<f64>)>> {
    if specs.is_empty() {
        return Err(CliError::Validation(
            "empty parameter grid: give at least one --grid key=v1,v2,…".into(),
        ));
    }
    let mut out: Vec<(String, Vec<f64>)> = vec![];
    for spec in specs {
        let bad = |m: String| CliError::Validation(format!("--grid {spec}: {m}"));
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| bad("expected key=v1,v2,…".into()))?;
        let key = key.trim();
        if !GRID_KEYS.contains(&key) {
            return Err(bad(format!(
                "`{key}` is not sweepable (use one of {})",
                GRID_KEYS.join(", ")
            )));
        }
        if out.iter().any(|(k, _)| k == key) {
            return Err(bad(format!("`{key}` given twice")));
        }
        let values = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("`{v}` is not a number")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        if values.is_empty() {
            return Err(bad("no values".into()));
        }
        out.push((key.to_string(), values));
    }
    Ok(out)
}

pub fn sweep_experiments(a: &SweepArgs) -> CliResult<Vec<ExperimentConfig<f64>>> {
    let grid = parse_grid(&a.grid)?;
    let bases = base_layers(&a.exp)?;
    let mut points: Vec<Vec<(&str, f64)>> = vec![vec![]];
    for (key, values) in &grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((key.as_str(), v));
                    q
                })
            })
            .collect();
    }
    let mut out = vec![];
    for base in &bases {
        let base_id = base.name.clone().unwrap_or_else(|| "custom".into());
        for point in &points {
            let mut layer = Settings::default();
            let mut id = base_id.clone();
            for &(key, v) in point {
                layer
                    .set(key, Value::from(v))
                    .map_err(CliError::Validation)?;
                id.push_str(&format!("/{key}={}", fmt_param(v)));
            }
            layer.name = Some(id);
            out.push(finish(base.merged(&layer), &a.exp)?);
        }
    }
    Ok(out)
}

const OWNED_FILES: &[&str] = &["rows.csv", "meta.json", "rounds.csv", "verify.json"];

fn prepare_out(out: &OutArgs) -> CliResult<()> {
    let dir = &out.out;
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .map_err(CliError::io(dir))?
            .next()
            .is_some();
        if non_empty && !out.force {
            return Err(CliError::Validation(format!(
                "output directory {} exists and is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
        for f in OWNED_FILES {
            let p = dir.join(f);
            if p.exists() {
                std::fs::remove_file(&p).map_err(CliError::io(&p))?;
            }
        }
    } else {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    Ok(())
}

fn set_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Runs `configs` and writes the result files into `out.out`.
pub fn execute(command: &str, configs: &[ExperimentConfig<f64>], out: &OutArgs) -> CliResult<()> {
    let mut seen = std::collections::HashSet::new();
    for c in configs {
        if !seen.insert(c.name.as_str()) {
            return Err(CliError::Validation(format!(
                "duplicate experiment id `{}`",
                c.name
            )));
        }
    }
    set_threads(out.threads)?;
    prepare_out(out)?;
    let meta = Meta::new(command, configs);
    for e in &meta.experiments {
        for w in &e.warnings {
            eprintln!("warning: {}: {w}", e.id);
        }
    }
    let rows_path = out.out.join("rows.csv");
    let mut rows = RowWriter::create(&rows_path)?;
    let mut logged: Vec<ExperimentResult<f64>> = vec![];
    for config in configs {
        let result = run_experiment(config)?;
        rows.experiment(&result)?;
        let last = result.aggregate.points.last().expect("grid is non-empty");
        println!(
            "{}: T={} trials={} mean cost {:.4} median target pulls {} event E {:.3}",
            config.name,
            config.horizon,
            config.trials,
            last.cost.mean,
            last.target_pulls.median,
            result.aggregate.event_e_fraction
        );
        if config.full_log {
            logged.push(result);
        }
    }
    rows.finish()?.flush().map_err(CliError::io(&rows_path))?;
    if !logged.is_empty() {
        write_rounds(&out.out.join("rounds.csv"), &logged)?;
    }
    meta.write(&out.out.join("meta.json"))
}

pub fn cmd_run(a: &RunArgs) -> CliResult<()> {
    let configs = match &a.from_meta {
        Some(path) => Meta::read(path)?
            .experiments
            .into_iter()
            .map(|e| {
                e.config.validate()?;
                Ok(e.config)
            })
            .collect::<CliResult<Vec<_>>>()?,
        None => resolve_experiments(&a.exp)?,
    };
    execute("run", &configs, &a.out)
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    let configs = sweep_experiments(a)?;
    execute("sweep", &configs, &a.out)
}

/// Verifies a results directory and writes `verify.json` next to it.
pub fn cmd_verify(dir: &Path) -> CliResult<Vec<VerifyReport>> {
    let meta = Meta::read(&dir.join("meta.json"))?;
    let arms: BTreeMap<String, usize> = meta
        .experiments
        .iter()
        .map(|e| (e.id.clone(), e.config.num_arms()))
        .collect();
    let mut views = read_trial_views(&dir.join("rows.csv"), &arms)?;
    let mut reports = vec![];
    for e in &meta.experiments {
        let trials: Vec<TrialView> = views.remove(&e.id).ok_or_else(|| {
            CliError::Parse(format!(
                "rows.csv has no trial rows for experiment `{}`",
                e.id
            ))
        })?;
        if trials.len() as u64 != e.config.trials {
            return Err(CliError::Parse(format!(
                "rows.csv has {} trials for `{}`, meta.json says {}",
                trials.len(),
                e.id,
                e.config.trials
            )));
        }
        reports.push(verify_suite(&e.config, &trials));
    }
    let path = dir.join("verify.json");
    let mut text = serde_json::to_string_pretty(&reports).expect("report serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(CliError::io(&path))?;

    let mut failed = vec![];
    for r in &reports {
        for c in &r.checks {
            let status = match &c.verdict {
                bandit_poison::analysis::Verdict::Pass { evaluated } => {
                    format!("pass ({evaluated} comparisons)")
                }
                bandit_poison::analysis::Verdict::Fail { failures, first } => {
                    failed.push(format!("{} {}", r.experiment, c.id));
                    let arm = first.arm.map(|a| format!(" arm {a}")).unwrap_or_default();
                    let t = first.t.map(|t| format!(" t={t}")).unwrap_or_default();
                    format!(
                        "FAIL ({failures} failures; first: trial {}{t}{arm}: {})",
                        first.trial, first.detail
                    )
                }
                bandit_poison::analysis::Verdict::NotApplicable { reason } => {
                    format!("not applicable ({reason})")
                }
                bandit_poison::analysis::Verdict::NotCheckable { reason } => {
                    format!("not checkable ({reason})")
                }
            };
            println!("{} {}: {status}", r.experiment, c.id);
        }
    }
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

/// `bound_*` rows for one experiment on its checkpoint grid; empty when no
/// closed-form guarantee covers the learner/attack pair.
pub fn bound_rows<W: Write>(
    config: &ExperimentConfig<f64>,
    w: &mut RowWriter<W>,
) -> CliResult<bool> {
    let exp = config.name.as_str();
    let inst = &config.instance;
    let k = inst.num_arms();
    let gaps = inst.compute_gaps(0.0)?;
    let grid = config.checkpoints.points(config.horizon)?;
    match (&config.learner, config.attack) {
        (LearnerSpec::EpsilonGreedy { schedule, .. }, AttackStrategy::AdaptiveEgreedy) => {
            let curve = egreedy_pull_bounds_curve(schedule, k, config.delta, &grid)?;
            for (&t, b) in grid.iter().zip(&curve) {
                w.real(exp, "bound", t, "bound_ntilde", b.ntilde)?;
                w.real(exp, "bound", t, "bound_ntilde_target", b.ntilde_target)?;
                w.count(
                    exp,
                    "bound",
                    t,
                    "bound_precondition",
                    b.precondition_ok as u64,
                )?;
                if let Ok(cost) = egreedy_cost_bound(&gaps, b, config.delta, inst.sigma()) {
                    w.real(exp, "bound", t, "bound_cost_egreedy", cost)?;
                }
            }
            Ok(true)
        }
        (LearnerSpec::Ucb, AttackStrategy::AdaptiveUcb { delta0 }) => {
            for &t in grid.iter().filter(|&&t| t >= 2 * k as u64) {
                let b = ucb_bounds(&gaps, inst.target(), config.delta, inst.sigma(), delta0, t)?;
                w.real(exp, "bound", t, "bound_pulls_per_arm", b.per_arm_pulls)?;
                w.real(exp, "bound", t, "bound_pulls_nontarget", b.nontarget_pulls)?;
                w.real(exp, "bound", t, "bound_pulls_target", b.target_pulls)?;
                w.real(exp, "bound", t, "bound_cost_ucb", b.cost)?;
            }
            Ok(true)
        }
        _ => Ok(false),
    }
}

pub fn cmd_bounds(a: &BoundsArgs) -> CliResult<()> {
    let configs = resolve_experiments(&a.exp)?;
    let mut buf = RowWriter::new(Vec::new())?;
    let mut any = false;
    for c in &configs {
        if bound_rows(c, &mut buf)? {
            any = true;
        } else {
            eprintln!(
                "note: {}: no closed-form bound for {} under attack {}",
                c.name,
                c.learner.name(),
                c.attack.name()
            );
        }
    }
    if !any {
        return Err(CliError::Validation(
            "no experiment has a closed-form bound (needs adaptive_egreedy with egreedy, or adaptive_ucb with ucb)".into(),
        ));
    }
    let bytes = buf.finish()?;
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
            let path = dir.join("bounds.csv");
            if path.exists() && !a.force {
                return Err(CliError::Validation(format!(
                    "{} exists; pass --force to overwrite",
                    path.display()
                )));
            }
            std::fs::write(&path, bytes).map_err(CliError::io(&path))
        }
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(CliError::io("<stdout>")),
    }
}
