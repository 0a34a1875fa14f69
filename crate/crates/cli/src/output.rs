//! On-disk artifacts: `rows.csv`, `meta.json`, `rounds.csv`.
//!
//! `rows.csv` is tidy: header `experiment,trial,t,metric,value`, one metric
//! per row, `trial` either a trial index, `agg` for cross-trial summaries or
//! `bound` for closed-form curves. Reals are written with 17 significant
//! digits so files round-trip exactly; counts are plain integers. Arms in
//! metric names are 1-based.
//!
//! Metric vocabulary:
//!
//! | metric | trial | meaning |
//! |---|---|---|
//! | `cost_cum` | index | `Σ_{s≤t} \|α_s\|` |
//! | `pulls_target` | index | `N_K(t)` |
//! | `pulls_arm_i` | index | `N_i(t)` |
//! | `attack_arm_i` | index | signed `Σ_{s∈τ_i(t)} α_s` |
//! | `lastatk_round_arm_i`, `lastatk_pulls_arm_i`, `lastatk_target_arm_i` | index | round and `(N_i, N_K)` at the last `α > 0` on arm `i`; absent if never |
//! | `event_E`, `exploit_violations` | index | at `t = T` only |
//! | `event_E_violation_arm` | index | at the first failing round, if any |
//! | `cost_{mean,median,p05,p95}`, `pulls_target_{…}` | `agg` | across trials |
//! | `event_E_fraction` | `agg` | at `t = T` |
//! | `bound_*` | `bound` | see the `bounds` command |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bandit_poison::analysis::{CheckpointView, TrialView};
use bandit_poison::{AttackSnapshot, ExperimentConfig, ExperimentResult, Summary};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ROWS_HEADER: [&str; 5] = ["experiment", "trial", "t", "metric", "value"];
pub const ROUNDS_HEADER: [&str; 8] = [
    "experiment",
    "trial",
    "t",
    "arm",
    "pre_reward",
    "alpha",
    "post_reward",
    "explored",
];
pub const SCHEMA: &str = "rows/1";

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct RowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl RowWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> CliResult<Self> {
        let f = File::create(path).map_err(CliError::io(path))?;
        Self::new(BufWriter::new(f))
    }
}

impl<W: Write> RowWriter<W> {
    pub fn new(w: W) -> CliResult<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        inner.write_record(ROWS_HEADER).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn row(
        &mut self,
        exp: &str,
        trial: &str,
        t: u64,
        metric: &str,
        value: &str,
    ) -> CliResult<()> {
        self.inner
            .write_record([exp, trial, &t.to_string(), metric, value])
            .map_err(csv_err)
    }

    pub fn real(&mut self, exp: &str, trial: &str, t: u64, metric: &str, v: f64) -> CliResult<()> {
        self.row(exp, trial, t, metric, &fmt_real(v))
    }

    pub fn count(&mut self, exp: &str, trial: &str, t: u64, metric: &str, v: u64) -> CliResult<()> {
        self.row(exp, trial, t, metric, &v.to_string())
    }

    pub fn experiment(&mut self, result: &ExperimentResult<f64>) -> CliResult<()> {
        let exp = result.config.name.as_str();
        let horizon = result.config.horizon;
        for r in &result.trials {
            let trial = r.trial.to_string();
            let trial = trial.as_str();
            for c in &r.checkpoints {
                let t = c.t;
                self.real(exp, trial, t, "cost_cum", c.cost)?;
                self.count(exp, trial, t, "pulls_target", c.target_pulls)?;
                for (i, &n) in c.pulls.iter().enumerate() {
                    self.count(exp, trial, t, &format!("pulls_arm_{}", i + 1), n)?;
                }
                for (i, &a) in c.attack.iter().enumerate() {
                    self.real(exp, trial, t, &format!("attack_arm_{}", i + 1), a)?;
                }
                for (i, s) in c.last_attack.iter().enumerate() {
                    if let Some(s) = s {
                        let arm = i + 1;
                        self.count(exp, trial, t, &format!("lastatk_round_arm_{arm}"), s.round)?;
                        self.count(
                            exp,
                            trial,
                            t,
                            &format!("lastatk_pulls_arm_{arm}"),
                            s.arm_pulls,
                        )?;
                        self.count(
                            exp,
                            trial,
                            t,
                            &format!("lastatk_target_arm_{arm}"),
                            s.target_pulls,
                        )?;
                    }
                }
            }
            self.count(exp, trial, horizon, "event_E", r.event_e_holds as u64)?;
            self.count(
                exp,
                trial,
                horizon,
                "exploit_violations",
                r.exploitation_violations,
            )?;
            if let Some(v) = r.event_e_violation {
                self.count(exp, trial, v.t, "event_E_violation_arm", v.arm as u64 + 1)?;
            }
        }
        for p in &result.aggregate.points {
            self.summary(exp, p.t, "cost", &p.cost)?;
            self.summary(exp, p.t, "pulls_target", &p.target_pulls)?;
        }
        self.real(
            exp,
            "agg",
            horizon,
            "event_E_fraction",
            result.aggregate.event_e_fraction,
        )
    }

    fn summary(&mut self, exp: &str, t: u64, name: &str, s: &Summary) -> CliResult<()> {
        self.real(exp, "agg", t, &format!("{name}_mean"), s.mean)?;
        self.real(exp, "agg", t, &format!("{name}_median"), s.median)?;
        self.real(exp, "agg", t, &format!("{name}_p05"), s.p05)?;
        self.real(exp, "agg", t, &format!("{name}_p95"), s.p95)
    }

    pub fn finish(mut self) -> CliResult<W> {
        self.inner
            .flush()
            .map_err(|e| CliError::Parse(e.to_string()))?;
        self.inner
            .into_inner()
            .map_err(|e| CliError::Parse(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Parse(format!("csv: {e}"))
}

pub fn write_rounds(path: &Path, results: &[ExperimentResult<f64>]) -> CliResult<()> {
    let f = File::create(path).map_err(CliError::io(path))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(f));
    w.write_record(ROUNDS_HEADER).map_err(csv_err)?;
    for result in results {
        for r in &result.trials {
            let Some(log) = &r.log else { continue };
            for rec in log {
                w.write_record([
                    result.config.name.clone(),
                    r.trial.to_string(),
                    rec.t.to_string(),
                    (rec.arm + 1).to_string(),
                    fmt_real(rec.pre_reward),
                    fmt_real(rec.alpha),
                    fmt_real(rec.post_reward),
                    (rec.explored as u8).to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(CliError::io(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaExperiment {
    pub id: String,
    pub config: ExperimentConfig<f64>,
    pub base_seed: u64,
    pub stream_ids: Vec<u64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub artifact: String,
    pub version: String,
    pub schema: String,
    pub command: String,
    pub experiments: Vec<MetaExperiment>,
}

impl Meta {
    pub fn new(command: &str, configs: &[ExperimentConfig<f64>]) -> Self {
        Self {
            artifact: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema: SCHEMA.into(),
            command: command.into(),
            experiments: configs
                .iter()
                .map(|c| MetaExperiment {
                    id: c.name.clone(),
                    config: c.clone(),
                    base_seed: c.base_seed,
                    stream_ids: (0..c.trials).collect(),
                    warnings: c.warnings(),
                })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("meta serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(CliError::io(path))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let meta: Meta = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        if meta.schema != SCHEMA {
            return Err(CliError::Parse(format!(
                "{}: unsupported schema `{}` (expected `{SCHEMA}`)",
                path.display(),
                meta.schema
            )));
        }
        Ok(meta)
    }
}

#[derive(Default)]
struct PartialCheckpoint {
    cost: Option<f64>,
    target_pulls: Option<u64>,
    pulls: BTreeMap<usize, u64>,
    attack: BTreeMap<usize, f64>,
    last_round: BTreeMap<usize, u64>,
    last_pulls: BTreeMap<usize, u64>,
    last_target: BTreeMap<usize, u64>,
}

#[derive(Default)]
struct PartialTrial {
    event_e: Option<bool>,
    exploitation_violations: Option<u64>,
    checkpoints: BTreeMap<u64, PartialCheckpoint>,
}

fn dense<T: Copy>(m: &BTreeMap<usize, T>, k: usize) -> Option<Vec<T>> {
    (0..k).map(|i| m.get(&i).copied()).collect()
}

/// Per-arm metric like `pulls_arm_3`, returned as `("pulls_arm", 2)`.
fn split_arm(metric: &str) -> Option<(&str, usize)> {
    let (stem, arm) = metric.rsplit_once('_')?;
    let arm: usize = arm.parse().ok()?;
    Some((stem, arm.checked_sub(1)?))
}

/// Rebuilds per-trial views from a rows file. `arms` maps experiment id to
/// arm count; rows for other experiments are an error.
pub fn read_trial_views(
    path: &Path,
    arms: &BTreeMap<String, usize>,
) -> CliResult<BTreeMap<String, Vec<TrialView>>> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ROWS_HEADER {
        return Err(CliError::Parse(format!(
            "{}: header is {:?}, expected {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            ROWS_HEADER
        )));
    }
    let mut exps: BTreeMap<String, BTreeMap<u64, PartialTrial>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |msg: String| CliError::Parse(format!("{}:{line}: {msg}", path.display()));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", rec.len())));
        }
        let (exp, trial, t, metric, value) = (&rec[0], &rec[1], &rec[2], &rec[3], &rec[4]);
        let Some(&k) = arms.get(exp) else {
            return Err(bad(format!(
                "experiment `{exp}` is not described in meta.json"
            )));
        };
        let t: u64 = t.parse().map_err(|_| bad(format!("bad round `{t}`")))?;
        if trial == "agg" || trial == "bound" {
            value
                .parse::<f64>()
                .map_err(|_| bad(format!("bad value `{value}`")))?;
            continue;
        }
        let trial: u64 = trial
            .parse()
            .map_err(|_| bad(format!("bad trial id `{trial}`")))?;
        let real = || -> CliResult<f64> {
            let v: f64 = value
                .parse()
                .map_err(|_| bad(format!("bad value `{value}`")))?;
            if v.is_nan() {
                return Err(bad(format!("{metric} is NaN")));
            }
            Ok(v)
        };
        let count = || -> CliResult<u64> {
            value.parse().map_err(|_| {
                bad(format!(
                    "{metric} needs a non-negative integer, got `{value}`"
                ))
            })
        };
        let tr = exps
            .entry(exp.to_string())
            .or_default()
            .entry(trial)
            .or_default();
        match metric {
            "event_E" => {
                tr.event_e = Some(match count()? {
                    0 => false,
                    1 => true,
                    v => return Err(bad(format!("event_E must be 0 or 1, got {v}"))),
                })
            }
            "exploit_violations" => tr.exploitation_violations = Some(count()?),
            "event_E_violation_arm" => {
                count()?;
            }
            "cost_cum" => tr.checkpoints.entry(t).or_default().cost = Some(real()?),
            "pulls_target" => tr.checkpoints.entry(t).or_default().target_pulls = Some(count()?),
            _ => {
                let Some((stem, arm)) = split_arm(metric).filter(|&(_, a)| a < k) else {
                    return Err(bad(format!("unknown metric `{metric}`")));
                };
                let cp = tr.checkpoints.entry(t).or_default();
                match stem {
                    "pulls_arm" => cp.pulls.insert(arm, count()?).map(|_| ()),
                    "attack_arm" => cp.attack.insert(arm, real()?).map(|_| ()),
                    "lastatk_round_arm" => cp.last_round.insert(arm, count()?).map(|_| ()),
                    "lastatk_pulls_arm" => cp.last_pulls.insert(arm, count()?).map(|_| ()),
                    "lastatk_target_arm" => cp.last_target.insert(arm, count()?).map(|_| ()),
                    _ => return Err(bad(format!("unknown metric `{metric}`"))),
                };
            }
        }
    }

    let mut out = BTreeMap::new();
    for (exp, trials) in exps {
        let k = arms[&exp];
        let views = trials
            .into_iter()
            .map(|(trial, p)| {
                let checkpoints = p
                    .checkpoints
                    .into_iter()
                    .map(|(t, c)| {
                        let last_attack = (0..k)
                            .map(|i| {
                                match (c.last_round.get(&i), c.last_pulls.get(&i), c.last_target.get(&i)) {
                                    (Some(&round), Some(&arm_pulls), Some(&target_pulls)) => {
                                        Ok(Some(AttackSnapshot {
                                            round,
                                            arm_pulls,
                                            target_pulls,
                                        }))
                                    }
                                    (None, None, None) => Ok(None),
                                    _ => Err(CliError::Parse(format!(
                                        "{}: incomplete lastatk rows for {exp} trial {trial} t={t} arm {}",
                                        path.display(),
                                        i + 1
                                    ))),
                                }
                            })
                            .collect::<CliResult<Vec<_>>>()?;
                        Ok(CheckpointView {
                            t,
                            cost: c.cost,
                            target_pulls: c.target_pulls,
                            pulls: dense(&c.pulls, k),
                            attack: dense(&c.attack, k),
                            last_attack: Some(last_attack),
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(TrialView {
                    trial,
                    event_e: p.event_e,
                    exploitation_violations: p.exploitation_violations,
                    checkpoints,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        out.insert(exp, views);
    }
    Ok(out)
}
