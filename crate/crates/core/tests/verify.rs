use bandit_poison::analysis::verify::{self, Verdict};
use bandit_poison::analysis::{verify_suite, TrialView};
use bandit_poison::{
    run_experiment, AttackStrategy, BanditInstance, CheckpointGrid, ExperimentConfig,
    ExplorationSchedule, LearnerSpec,
};

fn config(
    learner: LearnerSpec,
    attack: AttackStrategy,
    sigma: f64,
    trials: u64,
) -> ExperimentConfig<f64> {
    ExperimentConfig {
        name: "v".into(),
        instance: BanditInstance::new(vec![1.0, 0.4, 0.0], sigma, 2).unwrap(),
        learner,
        attack,
        delta: 0.05,
        horizon: 3000,
        trials,
        base_seed: 11,
        checkpoints: CheckpointGrid::Geometric { per_decade: 20 },
        full_log: false,
    }
}

fn egreedy() -> LearnerSpec {
    LearnerSpec::EpsilonGreedy {
        schedule: ExplorationSchedule::Decaying { c: 1.0 },
        init_order: vec![],
    }
}

fn views(c: &ExperimentConfig<f64>) -> Vec<TrialView> {
    run_experiment(c)
        .unwrap()
        .trials
        .iter()
        .map(TrialView::from)
        .collect()
}

#[test]
fn adaptive_runs_pass_every_applicable_check() {
    for (learner, attack) in [
        (egreedy(), AttackStrategy::AdaptiveEgreedy),
        (
            LearnerSpec::Ucb,
            AttackStrategy::AdaptiveUcb { delta0: 0.1 },
        ),
    ] {
        let c = config(learner, attack, 0.1, 40);
        let rep = verify_suite(&c, &views(&c));
        assert!(rep.passed(), "{rep:#?}");
        let passes = rep.checks.iter().filter(|c| c.verdict.is_pass()).count();
        assert!(passes >= 6, "{rep:#?}");
    }
}

#[test]
fn no_attack_gates_attack_checks() {
    let c = config(egreedy(), AttackStrategy::None, 0.1, 5);
    let rep = verify_suite(&c, &views(&c));
    assert!(rep.passed());
    for id in [
        verify::EGREEDY_EXPLOITATION,
        verify::EGREEDY_ARM_COST,
        verify::UCB_ARM_PULLS,
        verify::UCB_ARM_COST,
        verify::TARGET_NEVER_ATTACKED,
        verify::ATTACK_CONSERVATION,
    ] {
        assert!(
            matches!(
                rep.check(id).unwrap().verdict,
                Verdict::NotApplicable { .. }
            ),
            "{id}"
        );
    }
}

#[test]
fn mismatched_learner_is_not_applicable() {
    let c = config(LearnerSpec::Ucb, AttackStrategy::AdaptiveEgreedy, 0.1, 1);
    // the ε-greedy attack only needs the target first, which UCB does not guarantee
    assert!(c.validate().is_err());
    let c = config(
        egreedy(),
        AttackStrategy::AdaptiveUcb { delta0: 0.1 },
        0.1,
        2,
    );
    let rep = verify_suite(&c, &views(&c));
    assert!(matches!(
        rep.check(verify::UCB_ARM_COST).unwrap().verdict,
        Verdict::NotApplicable { .. }
    ));
}

#[test]
fn large_delta_turns_guarantee_checks_off() {
    let mut c = config(egreedy(), AttackStrategy::AdaptiveEgreedy, 0.1, 2);
    c.delta = 0.6;
    let rep = verify_suite(&c, &views(&c));
    assert!(matches!(
        rep.check(verify::EGREEDY_ARM_COST).unwrap().verdict,
        Verdict::NotApplicable { .. }
    ));
}

#[test]
fn noise_free_event_frequency_is_not_applicable() {
    let c = config(egreedy(), AttackStrategy::AdaptiveEgreedy, 0.0, 2);
    let rep = verify_suite(&c, &views(&c));
    assert!(matches!(
        rep.check(verify::EVENT_E_FREQUENCY).unwrap().verdict,
        Verdict::NotApplicable { .. }
    ));
}

#[test]
fn inflated_attack_fails_with_its_coordinates() {
    let c = config(egreedy(), AttackStrategy::AdaptiveEgreedy, 0.1, 10);
    let mut v = views(&c);
    let (ti, ci, arm) = v
        .iter()
        .enumerate()
        .filter(|(_, t)| t.event_e == Some(true))
        .find_map(|(ti, t)| {
            t.checkpoints.iter().enumerate().rev().find_map(|(ci, cp)| {
                let snaps = cp.last_attack.as_ref().unwrap();
                (0..2)
                    .find(|&a| snaps[a].is_some_and(|s| s.round > 3))
                    .map(|a| (ti, ci, a))
            })
        })
        .expect("some late attack");
    let cp = &mut v[ti].checkpoints[ci];
    cp.attack.as_mut().unwrap()[arm] += 50.0;
    cp.cost = cp.cost.map(|x| x + 50.0);
    let t = cp.t;
    let trial = v[ti].trial;

    let rep = verify_suite(&c, &v);
    assert!(!rep.passed());
    match &rep.check(verify::EGREEDY_ARM_COST).unwrap().verdict {
        Verdict::Fail { failures, first } => {
            assert_eq!(*failures, 1);
            assert_eq!(
                (first.trial, first.t, first.arm),
                (trial, Some(t), Some(arm + 1))
            );
        }
        other => panic!("expected failure, got {other:?}"),
    }
    // the cost curve was patched consistently, so conservation still holds
    assert!(rep
        .check(verify::ATTACK_CONSERVATION)
        .unwrap()
        .verdict
        .is_pass());
}

#[test]
fn attacked_target_and_broken_conservation_are_caught() {
    let c = config(egreedy(), AttackStrategy::AdaptiveEgreedy, 0.1, 3);
    let mut v = views(&c);
    let cp = v[1].checkpoints.last_mut().unwrap();
    cp.attack.as_mut().unwrap()[2] = 0.5;
    let rep = verify_suite(&c, &v);
    for id in [verify::TARGET_NEVER_ATTACKED, verify::ATTACK_CONSERVATION] {
        let Verdict::Fail { first, .. } = &rep.check(id).unwrap().verdict else {
            panic!("{id} should fail")
        };
        assert_eq!(first.trial, 1);
    }
}

#[test]
fn ucb_pull_excess_is_caught() {
    let c = config(
        LearnerSpec::Ucb,
        AttackStrategy::AdaptiveUcb { delta0: 0.1 },
        0.1,
        4,
    );
    let mut v = views(&c);
    let trial = v.iter().position(|t| t.event_e == Some(true)).unwrap();
    let cp = v[trial].checkpoints.last_mut().unwrap();
    cp.pulls.as_mut().unwrap()[0] = 2000;
    let rep = verify_suite(&c, &v);
    let Verdict::Fail { first, .. } = &rep.check(verify::UCB_ARM_PULLS).unwrap().verdict else {
        panic!("pull check should fail")
    };
    assert_eq!((first.trial, first.arm), (v[trial].trial, Some(1)));
}

#[test]
fn missing_fields_are_not_checkable() {
    let c = config(egreedy(), AttackStrategy::AdaptiveEgreedy, 0.1, 3);
    let mut v = views(&c);
    for t in &mut v {
        t.exploitation_violations = None;
        for cp in &mut t.checkpoints {
            cp.attack = None;
        }
    }
    let rep = verify_suite(&c, &v);
    for id in [
        verify::EGREEDY_EXPLOITATION,
        verify::EGREEDY_ARM_COST,
        verify::TARGET_NEVER_ATTACKED,
    ] {
        assert!(
            matches!(rep.check(id).unwrap().verdict, Verdict::NotCheckable { .. }),
            "{id}"
        );
    }
    let mut v = views(&c);
    v[0].event_e = None;
    let rep = verify_suite(&c, &v);
    assert!(matches!(
        rep.check(verify::EVENT_E_FREQUENCY).unwrap().verdict,
        Verdict::NotCheckable { .. }
    ));
}

#[test]
fn low_event_frequency_fails() {
    let c = config(egreedy(), AttackStrategy::None, 0.1, 20);
    let mut v = views(&c);
    for t in v.iter_mut().take(5) {
        t.event_e = Some(false);
    }
    let rep = verify_suite(&c, &v);
    assert!(rep
        .check(verify::EVENT_E_FREQUENCY)
        .unwrap()
        .verdict
        .is_fail());
}
