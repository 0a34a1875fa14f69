//! Flat `key = value` experiment settings.
//!
//! One setting per line, values in JSON syntax, `#` starts a comment:
//!
//! ```text
//! means = [0.1, 0.0]
//! sigma = 0.1
//! target = 2          # 1-based
//! learner = "egreedy"
//! attack = "adaptive_egreedy"
//! ```
//!
//! Layers merge left to right (preset, then file, then flags), and the
//! merged layer resolves into an [`ExperimentConfig`].

use std::path::Path;

use bandit_poison::{
    AttackStrategy, BanditInstance, CheckpointGrid, ConstantMode, ExperimentConfig,
    ExplorationSchedule, LearnerSpec,
};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const KEYS: &[&str] = &[
    "name",
    "means",
    "delta1",
    "sigma",
    "target",
    "learner",
    "exploration",
    "c",
    "epsilon",
    "init_order",
    "attack",
    "margin",
    "amount",
    "mode",
    "delta0",
    "delta",
    "horizon",
    "trials",
    "seed",
    "checkpoints_per_decade",
    "checkpoints",
    "full_log",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub name: Option<String>,
    pub means: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    /// 1-based.
    pub target: Option<usize>,
    pub learner: Option<String>,
    pub exploration: Option<String>,
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    /// 1-based.
    pub init_order: Option<Vec<usize>>,
    pub attack: Option<String>,
    pub margin: Option<f64>,
    pub amount: Option<f64>,
    pub mode: Option<String>,
    pub delta0: Option<f64>,
    pub delta: Option<f64>,
    pub horizon: Option<u64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub checkpoints_per_decade: Option<u32>,
    pub checkpoints: Option<Vec<u64>>,
    pub full_log: Option<bool>,
}

fn typed<T: DeserializeOwned>(key: &str, v: Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| format!("bad value {v} for `{key}`: {e}"))
}

impl Settings {
    /// Sets `key` from a JSON value.
    pub fn set(&mut self, key: &str, v: Value) -> Result<(), String> {
        match key {
            "name" => self.name = Some(typed(key, v)?),
            "means" => self.means = Some(typed(key, v)?),
            "delta1" => {
                // two-arm shorthand: μ = (Δ₁, 0), target arm 2
                let d: f64 = typed(key, v)?;
                self.means = Some(vec![d, 0.0]);
                self.target = Some(2);
            }
            "sigma" => self.sigma = Some(typed(key, v)?),
            "target" => self.target = Some(typed(key, v)?),
            "learner" => self.learner = Some(typed(key, v)?),
            "exploration" => self.exploration = Some(typed(key, v)?),
            "c" => {
                self.c = Some(typed(key, v)?);
                self.exploration.get_or_insert_with(|| "decaying".into());
            }
            "epsilon" => self.epsilon = Some(typed(key, v)?),
            "init_order" => self.init_order = Some(typed(key, v)?),
            "attack" => self.attack = Some(typed(key, v)?),
            "margin" => self.margin = Some(typed(key, v)?),
            "amount" | "A" => self.amount = Some(typed(key, v)?),
            "mode" => self.mode = Some(typed(key, v)?),
            "delta0" => self.delta0 = Some(typed(key, v)?),
            "delta" => self.delta = Some(typed(key, v)?),
            "horizon" => self.horizon = Some(typed(key, v)?),
            "trials" => self.trials = Some(typed(key, v)?),
            "seed" => self.seed = Some(typed(key, v)?),
            "checkpoints_per_decade" => self.checkpoints_per_decade = Some(typed(key, v)?),
            "checkpoints" => self.checkpoints = Some(typed(key, v)?),
            "full_log" => self.full_log = Some(typed(key, v)?),
            _ => {
                return Err(format!(
                    "unknown key `{key}` (known keys: {})",
                    KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    /// Parses the flat file format; `origin` labels error messages.
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::Validation(format!("{origin}:{}: {msg}", i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(at(format!(
                    "unknown key `{key}` (known keys: {})",
                    KEYS.join(", ")
                )));
            }
            let v: Value = serde_json::from_str(value.trim())
                .map_err(|e| at(format!("value for `{key}` is not valid JSON: {e}")))?;
            out.set(key, v).map_err(at)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// `other`'s fields win where set.
    pub fn merged(&self, other: &Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => {
                Settings { $($f: other.$f.clone().or_else(|| self.$f.clone())),* }
            };
        }
        pick!(
            name,
            means,
            sigma,
            target,
            learner,
            exploration,
            c,
            epsilon,
            init_order,
            attack,
            margin,
            amount,
            mode,
            delta0,
            delta,
            horizon,
            trials,
            seed,
            checkpoints_per_decade,
            checkpoints,
            full_log
        )
    }

    /// Divides horizon and trial count by `scale`, rounding up.
    pub fn scaled(mut self, scale: f64) -> CliResult<Self> {
        if !(scale >= 1.0 && scale.is_finite()) {
            return Err(CliError::Validation(format!(
                "--scale must be a finite number ≥ 1, got {scale}"
            )));
        }
        let div = |x: u64| ((x as f64 / scale).ceil() as u64).max(1);
        self.horizon = self.horizon.map(div);
        self.trials = self.trials.map(div);
        if let Some(pts) = self.checkpoints.as_mut() {
            let h = self.horizon.unwrap_or(u64::MAX);
            pts.retain(|&p| p <= h);
        }
        Ok(self)
    }

    pub fn resolve(&self) -> CliResult<ExperimentConfig<f64>> {
        let bad = |m: String| CliError::Validation(m);
        let means = self
            .means
            .clone()
            .ok_or_else(|| bad("arm means are not set (use `means` or `delta1`)".into()))?;
        let k = means.len();
        let target = self.target.unwrap_or(k);
        if target == 0 {
            return Err(bad("target arm is 1-based; 0 is not an arm".into()));
        }
        let instance = BanditInstance::new(means, self.sigma.unwrap_or(0.1), target - 1)?;

        let learner = match self.learner.as_deref().unwrap_or("egreedy") {
            "egreedy" | "epsilon_greedy" => {
                let schedule = match self.exploration.as_deref().unwrap_or("inverse_time") {
                    "inverse_time" => ExplorationSchedule::InverseTime,
                    "decaying" => ExplorationSchedule::Decaying {
                        c: self
                            .c
                            .ok_or_else(|| bad("decaying exploration needs `c`".into()))?,
                    },
                    "constant" => ExplorationSchedule::Constant {
                        epsilon: self
                            .epsilon
                            .ok_or_else(|| bad("constant exploration needs `epsilon`".into()))?,
                    },
                    other => {
                        return Err(bad(format!(
                            "unknown exploration `{other}` (inverse_time, decaying, constant)"
                        )))
                    }
                };
                let init_order = match &self.init_order {
                    None => vec![],
                    Some(order) => order
                        .iter()
                        .map(|&a| {
                            a.checked_sub(1)
                                .ok_or_else(|| bad("init_order arms are 1-based".into()))
                        })
                        .collect::<CliResult<_>>()?,
                };
                LearnerSpec::EpsilonGreedy {
                    schedule,
                    init_order,
                }
            }
            "ucb" => {
                if self.exploration.is_some() || self.init_order.is_some() {
                    return Err(bad(
                        "`exploration`/`init_order` apply to the ε-greedy learner only".into(),
                    ));
                }
                LearnerSpec::Ucb
            }
            other => return Err(bad(format!("unknown learner `{other}` (egreedy, ucb)"))),
        };

        let attack_name = self.attack.as_deref().unwrap_or("none");
        let stray = |field: &str, set: bool| {
            if set {
                Err(bad(format!(
                    "`{field}` does not apply to attack `{attack_name}`"
                )))
            } else {
                Ok(())
            }
        };
        let attack = match attack_name {
            "none" => AttackStrategy::None,
            "oracle" => AttackStrategy::Oracle {
                margin: self.margin.unwrap_or(0.0),
            },
            "constant" => AttackStrategy::Constant {
                amount: self
                    .amount
                    .ok_or_else(|| bad("constant attack needs `amount`".into()))?,
                mode: match self.mode.as_deref().unwrap_or("drag_down") {
                    "drag_down" => ConstantMode::DragDown,
                    "push_up" => ConstantMode::PushUp,
                    other => {
                        return Err(bad(format!("unknown mode `{other}` (drag_down, push_up)")))
                    }
                },
            },
            "adaptive_egreedy" => AttackStrategy::AdaptiveEgreedy,
            "adaptive_ucb" => AttackStrategy::AdaptiveUcb {
                delta0: self
                    .delta0
                    .ok_or_else(|| bad("adaptive_ucb attack needs `delta0`".into()))?,
            },
            other => return Err(bad(format!(
                "unknown attack `{other}` (none, oracle, constant, adaptive_egreedy, adaptive_ucb)"
            ))),
        };
        stray("margin", self.margin.is_some() && attack_name != "oracle")?;
        stray("amount", self.amount.is_some() && attack_name != "constant")?;
        stray("mode", self.mode.is_some() && attack_name != "constant")?;
        stray(
            "delta0",
            self.delta0.is_some() && attack_name != "adaptive_ucb",
        )?;

        let checkpoints = match (&self.checkpoints, self.checkpoints_per_decade) {
            (Some(_), Some(_)) => {
                return Err(bad(
                    "set either `checkpoints` or `checkpoints_per_decade`, not both".into(),
                ))
            }
            (Some(points), None) => CheckpointGrid::Explicit {
                points: points.clone(),
            },
            (None, Some(per_decade)) => CheckpointGrid::Geometric { per_decade },
            (None, None) => CheckpointGrid::default(),
        };

        let config = ExperimentConfig {
            name: self.name.clone().unwrap_or_else(|| "custom".into()),
            instance,
            learner,
            attack,
            delta: self.delta.unwrap_or(0.05),
            horizon: self.horizon.unwrap_or(10_000),
            trials: self.trials.unwrap_or(100),
            base_seed: self.seed.unwrap_or(DEFAULT_SEED),
            checkpoints,
            full_log: self.full_log.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }
}

pub const DEFAULT_SEED: u64 = 20_180_528;

fn strip_comment(line: &str) -> &str {
    // `#` inside a JSON string is data, not a comment
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}
