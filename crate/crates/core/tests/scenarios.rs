mod common;

use spn_core::dynamics::{apply_atomic, feasible_schedules};
use spn_core::scenarios::{
    baseline_policy, make_switch, mask_at, BaselineKind, GreedyPolicy, MaxWeightPolicy, RandomPolicy, ScenarioSpec,
};
use spn_core::sim::{replay_check, rollout, AtomicPolicy, RolloutMode, SeedSpec};
use spn_core::state_space::action_count_report;
use spn_core::{AtomicAction, Problem, SpnError, SystemState};

fn switch_spec() -> ScenarioSpec {
    ScenarioSpec::Switch { w: 2, rates: vec![vec![0.3, 0.4], vec![0.35, 0.3]], cap: 1 }
}

#[test]
fn switch_has_at_most_five_feasible_atomic_actions() {
    let p = common::switch2(1);
    assert_eq!(p.cfg.num_atomic_actions(), 17);
    let k = common::kernels(&p);
    for s in 0..k.num_states() {
        assert!(k.atomic_row(s).0.len() <= 5, "state {s}");
    }
    let report = action_count_report(&k);
    assert_eq!(report.max_feasible_atomic, 5, "{report:?}");
    assert_eq!(report.atomic_actions, 17);
}

#[test]
fn backlogged_switch_has_two_full_matchings() {
    let p = common::switch2(1);
    let mut s = SystemState::initial(&p.cfg);
    s.z = vec![1, 1, 1, 1];
    let full: Vec<_> = feasible_schedules(&p.cfg, &s, p.extra()).into_iter().filter(|a| a.total() == 2).collect();
    assert_eq!(full.len(), 2);
    for a in &full {
        // one packet per input and per output
        let targets: Vec<usize> = a.atomic_expansion().iter().map(|act| match act {
            AtomicAction::Assign { to, .. } => *to,
            AtomicAction::Pass => unreachable!(),
        }).collect();
        let inputs: std::collections::BTreeSet<usize> = targets.iter().map(|t| t / 2).collect();
        let outputs: std::collections::BTreeSet<usize> = targets.iter().map(|t| t % 2).collect();
        assert_eq!((inputs.len(), outputs.len()), (2, 2));
    }
    assert_eq!(mask_at(&p, &s).iter().filter(|&&b| b).count(), 5);
}

/// Largest total queue over all sets of (input, output) pairs that use every
/// port at most once, by subset enumeration.
fn brute_matching_weight(w: usize, q: &[u32], free_input: &[bool], idle_output: &[bool]) -> f64 {
    let pairs: Vec<(usize, usize)> = (0..w).flat_map(|i| (0..w).map(move |o| (i, o))).collect();
    let mut best = 0.0;
    for subset in 0u32..(1 << pairs.len()) {
        let chosen: Vec<_> = pairs.iter().enumerate().filter(|(b, _)| subset >> b & 1 == 1).map(|(_, p)| *p).collect();
        let mut used_in = vec![false; w];
        let mut used_out = vec![false; w];
        let mut ok = true;
        let mut total = 0.0;
        for &(i, o) in &chosen {
            if used_in[i] || used_out[o] || !free_input[i] || !idle_output[o] {
                ok = false;
                break;
            }
            used_in[i] = true;
            used_out[o] = true;
            total += q[i * w + o] as f64;
        }
        if ok && total > best {
            best = total;
        }
    }
    best
}

#[test]
fn max_weight_matches_brute_force() {
    for w in [2usize, 3] {
        let rates = vec![vec![0.4; w]; w];
        let (cfg, extra) = make_switch(w, &rates, 3).unwrap();
        let p = Problem::new(cfg, extra);
        let mw = MaxWeightPolicy { problem: p.clone(), ports: w };
        for s in common::random_walk(&p, w as u64, 60) {
            let free: Vec<bool> = (0..w).map(|i| (0..w).all(|o| s.count(&p.cfg, i * w + o, 0) == 0)).collect();
            let idle: Vec<bool> = (0..w).map(|o| (0..w).any(|i| s.idle(&p.cfg, i * w + o) > 0)).collect();
            let q = s.waiting(&p.cfg);
            let (weight, matching) = mw.best_matching(&s);
            assert_eq!(weight, brute_matching_weight(w, &q, &free, &idle), "{s}");
            let sum: f64 = matching.iter().enumerate().filter_map(|(i, o)| o.map(|o| q[i * w + o] as f64)).sum();
            assert_eq!(sum, weight);
            let probs = mw.action_probs(&s, 1, &mask_at(&p, &s)).unwrap();
            let code = probs.iter().position(|&x| x == 1.0).unwrap();
            assert!(mask_at(&p, &s)[code]);
            assert_eq!(code == 0, weight == 0.0, "{s}");
        }
    }
}

#[test]
fn max_weight_completes_a_maximum_matching_within_a_time_step() {
    let p = common::switch2(3);
    let mw = MaxWeightPolicy { problem: p.clone(), ports: 2 };
    for s in common::random_walk(&p, 12, 80).into_iter().filter(|s| s.is_pre_decision(&p.cfg)) {
        let (weight, _) = mw.best_matching(&s);
        let mut cur = s.clone();
        let mut served = 0.0;
        for step in 1..=2 {
            let probs = mw.action_probs(&cur, step, &mask_at(&p, &cur)).unwrap();
            let code = probs.iter().position(|&x| x == 1.0).unwrap();
            if let AtomicAction::Assign { to, .. } = AtomicAction::from_code(code, 4) {
                served += cur.waiting(&p.cfg)[to] as f64;
            }
            cur = apply_atomic(&p.cfg, &cur, AtomicAction::from_code(code, 4), p.extra()).unwrap();
        }
        assert_eq!(served, weight, "{s}");
    }
}

#[test]
fn switch_rollouts_respect_port_constraints() {
    let p = common::switch2(2);
    for policy in [
        Box::new(RandomPolicy) as Box<dyn AtomicPolicy>,
        Box::new(GreedyPolicy { problem: p.clone() }),
        baseline_policy(BaselineKind::MaxWeight, &p, Some(&switch_spec())).unwrap(),
    ] {
        let batch = rollout(&p, policy.as_ref(), RolloutMode::KStep, 300, &SeedSpec::for_round(1, 0, 2)).unwrap();
        replay_check(&p, &batch).unwrap();
        for tr in &batch.trajectories {
            for rec in &tr.steps {
                let post = rec.post_state();
                for input in 0..2 {
                    let started: u32 = (0..2).map(|o| post.count(&p.cfg, input * 2 + o, 0)).sum();
                    assert!(started <= 1);
                }
                for out in 0..2 {
                    let started: u32 = (0..2).map(|i| post.count(&p.cfg, i * 2 + out, 0)).sum();
                    assert!(started <= 1);
                }
            }
        }
    }
}

#[test]
fn hospital_waiting_counts_patients_without_a_bed() {
    let p = common::hospital2();
    let cfg = &p.cfg;
    for s in common::random_walk(&p, 4, 60) {
        let w = s.waiting(cfg);
        for class in 0..2 {
            let in_bed: u32 = (0..2).map(|unit| s.busy(cfg, unit * 2 + class)).sum();
            assert_eq!(w[class], s.z[class] - in_bed, "{s}");
        }
        // every bed stays in its unit
        for unit in 0..2 {
            let beds: u32 = (0..2).map(|c| s.busy(cfg, unit * 2 + c) + s.idle(cfg, unit * 2 + c)).sum();
            assert_eq!(beds, 1);
        }
    }
}

#[test]
fn scenario_specs_round_trip_and_build() {
    let specs = [
        ScenarioSpec::Mgeo1 { p_arrival: 0.5, mu0: 1.0, z_cap: 3, holding: -1.0 },
        switch_spec(),
        ScenarioSpec::Hospital {
            beds: vec![1, 1],
            arrival_rates: vec![0.3, 0.3],
            overflow: vec![vec![0.0, -2.0], vec![-2.0, 0.0]],
            discharge: 0.5,
            tau_max: 2,
            cap: 2,
            holding: -1.0,
        },
    ];
    let expected = [common::m1(), common::switch2(1), common::hospital2()];
    for (spec, want) in specs.iter().zip(&expected) {
        let text = toml::to_string(spec).unwrap();
        let back: ScenarioSpec = toml::from_str(&text).unwrap();
        assert_eq!(&back, spec);
        assert_eq!(back.build().unwrap().content_hash(), want.content_hash());
    }
    assert!(matches!(
        baseline_policy(BaselineKind::MaxWeight, &common::m1(), Some(&specs[0])),
        Err(SpnError::Unsupported(_))
    ));
    assert_eq!("greedy".parse::<BaselineKind>().unwrap(), BaselineKind::Greedy);
    assert!("nope".parse::<BaselineKind>().is_err());
    assert!(make_switch(1, &[vec![0.1]], 1).is_err());
}
