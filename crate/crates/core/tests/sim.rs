mod common;

use spn_core::scenarios::RandomPolicy;
use spn_core::sim::{
    compare_post_decisions, draw_code, empirical_gain, gain_stats, replay_check, rollout, stream_rng,
    RolloutMode, SeedSpec, StreamLane, TablePolicy, TrajectoryBatch,
};
use spn_core::solvers::{evaluate_stochastic_atomic, solve_original_rvi, solve_passing_last, SolverOptions};
use rand::Rng;

fn uniform_probs(k: &spn_core::state_space::KernelSet) -> Vec<Vec<f64>> {
    (0..k.num_states())
        .map(|s| {
            let (codes, _) = k.atomic_row(s);
            let mut row = vec![0.0; k.num_atomic_actions()];
            for &c in codes {
                row[c as usize] = 1.0 / codes.len() as f64;
            }
            row
        })
        .collect()
}

#[test]
fn rollouts_are_reproducible() {
    let p = common::tandem();
    let seeds = SeedSpec::for_round(11, 0, 4);
    let a = rollout(&p, &RandomPolicy, RolloutMode::KStep, 200, &seeds).unwrap();
    let b = rollout(&p, &RandomPolicy, RolloutMode::KStep, 200, &seeds).unwrap();
    assert_eq!(a, b);
    let c = rollout(&p, &RandomPolicy, RolloutMode::KStep, 200, &SeedSpec::for_round(12, 0, 4)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn worker_count_does_not_change_results() {
    let p = common::switch2(1);
    let seeds = SeedSpec::for_round(5, 3, 6);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| rollout(&p, &RandomPolicy, RolloutMode::KStep, 300, &seeds).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn streams_are_distinct() {
    let draws = |stream: u64, lane: StreamLane| -> Vec<u64> {
        let mut r = stream_rng(9, stream, lane);
        (0..4).map(|_| r.random()).collect()
    };
    let mut all = vec![
        draws(0, StreamLane::Dynamics),
        draws(0, StreamLane::Policy),
        draws(0, StreamLane::Shuffle),
        draws(0, StreamLane::Init),
        draws(1, StreamLane::Dynamics),
        draws(1 << 24, StreamLane::Dynamics),
    ];
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 6);
    let r0 = SeedSpec::for_round(1, 0, 3);
    let r1 = SeedSpec::for_round(1, 1, 3);
    assert!(r0.streams.iter().all(|s| !r1.streams.contains(s)));
}

#[test]
fn replay_accepts_genuine_batches_and_rejects_tampered_ones() {
    for (name, p) in common::all_instances() {
        for mode in [RolloutMode::KStep, RolloutMode::PassingLast] {
            let batch = rollout(&p, &RandomPolicy, mode, 100, &SeedSpec::for_round(2, 0, 3)).unwrap();
            replay_check(&p, &batch).unwrap_or_else(|e| panic!("{name} {mode:?}: {e}"));
            for tr in &batch.trajectories {
                for rec in &tr.steps {
                    assert!(rec.actions.len() <= p.cfg.num_servers);
                    if mode == RolloutMode::KStep {
                        assert_eq!(rec.actions.len(), p.cfg.num_servers);
                    }
                    assert!(rec.log_probs.iter().all(|l| l.is_finite() && *l <= 0.0));
                }
            }
        }
    }
    let p = common::tandem();
    let mut batch = rollout(&p, &RandomPolicy, RolloutMode::KStep, 50, &SeedSpec::for_round(2, 0, 1)).unwrap();
    batch.trajectories[0].steps[10].holding += 1.0;
    assert!(replay_check(&p, &batch).is_err());
}

#[test]
fn passing_last_and_k_step_agree_on_passing_last_policies() {
    for (name, p) in common::all_instances() {
        let k = common::kernels(&p);
        let orig = solve_original_rvi(&k, &SolverOptions::default()).unwrap();
        let pl = solve_passing_last(&k, orig.gain, &orig.h).unwrap();
        let spn_core::solvers::PolicyTable::StepIndependent(codes) = pl.policy else { unreachable!() };
        let policy = TablePolicy::new(&k, codes);
        let seeds = SeedSpec::for_round(4, 0, 2);
        let a = rollout(&p, &policy, RolloutMode::KStep, 500, &seeds).unwrap();
        let b = rollout(&p, &policy, RolloutMode::PassingLast, 500, &seeds).unwrap();
        assert!(compare_post_decisions(&a, &b).is_empty(), "{name}");
    }
}

#[test]
fn simulated_gain_matches_exact_evaluation() {
    for (name, p) in common::all_instances() {
        let k = common::kernels(&p);
        let exact = evaluate_stochastic_atomic(&k, &uniform_probs(&k)).unwrap().gain;
        let batch = rollout(&p, &RandomPolicy, RolloutMode::KStep, 20_000, &SeedSpec::for_round(8, 0, 4)).unwrap();
        let stats = gain_stats(&batch);
        assert_eq!(stats.mean, empirical_gain(&batch));
        let tol = 5.0 * stats.stderr + 0.01 * exact.abs().max(0.05);
        assert!((stats.mean - exact).abs() < tol, "{name}: simulated {} exact {exact} se {}", stats.mean, stats.stderr);
    }
}

#[test]
fn batches_round_trip_through_disk() {
    let p = common::switch2(1);
    let batch = rollout(&p, &RandomPolicy, RolloutMode::PassingLast, 64, &SeedSpec::for_round(3, 2, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.bin");
    batch.save(&path, p.cfg.num_service_types).unwrap();
    let back = TrajectoryBatch::load(&path, &p).unwrap();
    assert_eq!(back, batch);
    assert!(TrajectoryBatch::load(&path, &common::switch2(2)).is_err());
    let csv = batch.summary_csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().skip(1).all(|l| l.starts_with(&p.content_hash())));
}

#[test]
fn draw_code_skips_zero_mass() {
    let probs = [0.0, 0.25, 0.0, 0.75];
    assert_eq!(draw_code(&probs, 0.0), 1);
    assert_eq!(draw_code(&probs, 0.2499), 1);
    assert_eq!(draw_code(&probs, 0.25), 3);
    assert_eq!(draw_code(&probs, 0.999_999_999), 3);
    assert_eq!(draw_code(&[0.5, 0.5 - 1e-17, 0.0], 0.999_999_999_999_999_9), 1);
}

#[test]
fn simulated_states_are_all_enumerated() {
    for (name, p) in common::all_instances() {
        let k = common::kernels(&p);
        let known: std::collections::HashSet<Vec<u32>> = k.states.iter().cloned().collect();
        let batch = rollout(&p, &RandomPolicy, RolloutMode::KStep, 25_000, &SeedSpec::for_round(6, 0, 4)).unwrap();
        for tr in &batch.trajectories {
            for rec in &tr.steps {
                for s in &rec.states {
                    assert!(known.contains(&s.to_record()), "{name}: {s} missing");
                }
            }
        }
    }
}
