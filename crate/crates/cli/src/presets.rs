//! Named experiment families.
//!
//! Every preset is a two-arm instance `μ = (Δ₁, 0)` with arm 2 as the
//! target. ε-greedy presets use `ε_t = 1/t` and `δ = 0.025`; UCB presets use
//! `δ = 0.05`.

use crate::settings::Settings;

pub const PRESETS: &[&str] = &[
    "fig1a", "fig1b", "fig1c", "fig2a", "fig2b", "fig2c", "appD-eps", "appD-ucb",
];

/// Δ₀ values swept by `fig2a`.
pub const FIG2A_DELTA0: &[f64] = &[0.05, 0.1, 0.2, 0.5];

fn base(name: String, delta1: f64, sigma: f64) -> Settings {
    Settings {
        name: Some(name),
        means: Some(vec![delta1, 0.0]),
        sigma: Some(sigma),
        target: Some(2),
        ..Default::default()
    }
}

fn egreedy(mut s: Settings, attack: &str, horizon: u64, trials: u64) -> Settings {
    s.learner = Some("egreedy".into());
    s.exploration = Some("inverse_time".into());
    s.delta = Some(0.025);
    s.attack = Some(attack.into());
    s.horizon = Some(horizon);
    s.trials = Some(trials);
    s
}

fn ucb(mut s: Settings, delta0: Option<f64>, horizon: u64, trials: u64) -> Settings {
    s.learner = Some("ucb".into());
    s.delta = Some(0.05);
    s.attack = Some(
        if delta0.is_some() {
            "adaptive_ucb"
        } else {
            "none"
        }
        .into(),
    );
    s.delta0 = delta0;
    s.horizon = Some(horizon);
    s.trials = Some(trials);
    s
}

fn constant(mut s: Settings, mode: &str, amount: f64) -> Settings {
    s.attack = Some("constant".into());
    s.mode = Some(mode.into());
    s.amount = Some(amount);
    s
}

/// Formats a parameter for an experiment id: shortest round-trip decimal.
pub fn fmt_param(v: f64) -> String {
    format!("{v}")
}

/// The experiments making up preset `name`, or `None` if unknown.
pub fn preset(name: &str) -> Option<Vec<Settings>> {
    let id = |suffix: String| format!("{name}/{suffix}");
    Some(match name {
        "fig1a" => [0.1, 0.3, 1.0]
            .iter()
            .map(|&d| {
                egreedy(
                    base(id(format!("delta1={}", fmt_param(d))), d, 0.1),
                    "adaptive_egreedy",
                    100_000,
                    1000,
                )
            })
            .collect(),
        "fig1b" => [0.05, 0.1, 0.5]
            .iter()
            .map(|&s| {
                egreedy(
                    base(id(format!("sigma={}", fmt_param(s))), 1.0, s),
                    "adaptive_egreedy",
                    100_000,
                    1000,
                )
            })
            .collect(),
        "fig1c" => ["adaptive_egreedy", "none"]
            .iter()
            .map(|&a| {
                let tag = if a == "none" { "none" } else { "attack" };
                egreedy(base(id(tag.into()), 0.1, 0.1), a, 10_000, 1000)
            })
            .collect(),
        "fig2a" => FIG2A_DELTA0
            .iter()
            .map(|&d0| {
                ucb(
                    base(id(format!("delta0={}", fmt_param(d0))), 0.1, 0.1),
                    Some(d0),
                    10_000_000,
                    100,
                )
            })
            .collect(),
        "fig2b" => [0.05, 0.1, 0.2]
            .iter()
            .map(|&s| {
                ucb(
                    base(id(format!("sigma={}", fmt_param(s))), 0.1, s),
                    Some(0.1),
                    10_000_000,
                    100,
                )
            })
            .collect(),
        "fig2c" => [Some(0.1), None]
            .iter()
            .map(|&d0| {
                let tag = if d0.is_some() { "attack" } else { "none" };
                ucb(base(id(tag.into()), 0.1, 0.1), d0, 10_000_000, 100)
            })
            .collect(),
        "appD-eps" | "appD-ucb" => {
            let mut out = vec![];
            for mode in ["push_up", "drag_down"] {
                for a in [1.2, 0.8] {
                    let s = base(id(format!("{mode}/A={}", fmt_param(a))), 1.0, 0.1);
                    let s = if name == "appD-eps" {
                        egreedy(s, "none", 10_000, 1000)
                    } else {
                        ucb(s, None, 10_000, 1000)
                    };
                    out.push(constant(s, mode, a));
                }
            }
            out
        }
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_resolves() {
        for name in PRESETS {
            let exps = preset(name).unwrap();
            assert!(!exps.is_empty());
            for s in exps {
                let c = s.resolve().unwrap_or_else(|e| panic!("{name}: {e}"));
                assert!(c.name.starts_with(name));
                assert_eq!(c.instance.target(), 1);
            }
        }
        assert!(preset("fig9").is_none());
    }

    #[test]
    fn egreedy_presets_use_the_stated_delta() {
        for s in preset("fig1c").unwrap() {
            assert_eq!(s.resolve().unwrap().delta, 0.025);
        }
        for s in preset("fig2c").unwrap() {
            assert_eq!(s.resolve().unwrap().delta, 0.05);
        }
    }
}
