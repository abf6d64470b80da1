mod common;

use spn_core::solvers::{
    evaluate_policy, evaluate_stochastic_atomic, per_step_gains, solve_atomic_step_dependent,
    solve_original_rvi, solve_passing_last, verify_kernels, verify_instance, Certificate, CheckStatus,
    PolicyTable, SolverOptions, VerifyOptions,
};
use spn_core::state_space::KernelSet;

/// Long-run average reward of a joint policy from the initial state, by
/// iterating the state distribution of the lazy chain `(P + I) / 2`, which has
/// the same stationary law.
fn cesaro_gain(k: &KernelSet, entries: &[usize]) -> f64 {
    let n = k.num_states();
    let mut dist = vec![0.0; n];
    dist[k.initial] = 1.0;
    for _ in 0..20_000 {
        let mut next = vec![0.0; n];
        for s in 0..n {
            let post = k.joint_post[entries[s]] as usize;
            let (succ, prob) = k.sys_row(post);
            next[s] += 0.5 * dist[s];
            for (&t, &q) in succ.iter().zip(prob) {
                next[t as usize] += 0.5 * dist[s] * q;
            }
        }
        dist = next;
    }
    (0..n).map(|s| dist[s] * k.joint_reward[entries[s]]).sum()
}

/// Best gain over every deterministic joint policy.
fn brute_force_gain(k: &KernelSet) -> f64 {
    let n = k.num_states();
    let ranges: Vec<_> = (0..n).map(|s| k.joint_range(s)).collect();
    let mut entries: Vec<usize> = ranges.iter().map(|r| r.start).collect();
    let mut best = f64::NEG_INFINITY;
    loop {
        best = best.max(cesaro_gain(k, &entries));
        let mut s = 0;
        loop {
            if s == n {
                return best;
            }
            entries[s] += 1;
            if entries[s] < ranges[s].end {
                break;
            }
            entries[s] = ranges[s].start;
            s += 1;
        }
    }
}

#[test]
fn optimal_gain_matches_brute_force_on_single_server_queues() {
    for p in [common::m1(), common::m1_slow()] {
        let k = common::kernels(&p);
        let oracle = brute_force_gain(&k);
        let opts = SolverOptions::default();
        let orig = solve_original_rvi(&k, &opts).unwrap();
        let atomic = solve_atomic_step_dependent(&k, &opts).unwrap();
        assert!((orig.gain - oracle).abs() < 1e-9, "rvi {} brute {}", orig.gain, oracle);
        assert!((atomic.gain - oracle).abs() < 1e-9, "atomic {} brute {}", atomic.gain, oracle);
    }
    // serving whenever an item waits keeps a unit-time queue empty after service
    let k = common::kernels(&common::m1());
    assert!(solve_original_rvi(&k, &SolverOptions::default()).unwrap().gain.abs() < 1e-9);
}

/// Plain value iteration on the lazy joint MDP `(T v + v) / 2`.
fn value_iteration_gain(k: &KernelSet) -> f64 {
    let n = k.num_states();
    let mut v = vec![0.0; n];
    let mut incr = (0.0, 0.0);
    for _ in 0..20_000 {
        let w: Vec<f64> = (0..n)
            .map(|s| {
                let best = k
                    .joint_range(s)
                    .map(|e| k.joint_reward[e] + k.expect_sys(k.joint_post[e] as usize, &v))
                    .fold(f64::NEG_INFINITY, f64::max);
                0.5 * best + 0.5 * v[s]
            })
            .collect();
        let d: Vec<f64> = (0..n).map(|s| w[s] - v[s]).collect();
        incr = (d.iter().copied().fold(f64::INFINITY, f64::min), d.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let base = w[k.initial];
        v = w.iter().map(|x| x - base).collect();
        if incr.1 - incr.0 < 1e-11 {
            break;
        }
    }
    // increments of the lazy operator converge to half the gain
    incr.0 + incr.1
}

#[test]
fn solvers_agree_with_naive_value_iteration() {
    for (name, p) in common::all_instances() {
        let k = common::kernels(&p);
        let oracle = value_iteration_gain(&k);
        let opts = SolverOptions::default();
        let orig = solve_original_rvi(&k, &opts).unwrap();
        let atomic = solve_atomic_step_dependent(&k, &opts).unwrap();
        assert!((orig.gain - oracle).abs() < 1e-8, "{name}: rvi {} oracle {oracle}", orig.gain);
        assert!((atomic.gain - oracle).abs() < 1e-8, "{name}: atomic {} oracle {oracle}", atomic.gain);
        let pl = solve_passing_last(&k, orig.gain, &orig.h).unwrap();
        let ev = evaluate_policy(&k, &pl.policy).unwrap();
        assert!((ev.gain - oracle).abs() < 1e-8, "{name}: passing-last policy {}", ev.gain);
        let steps = per_step_gains(&k, &atomic.policy).unwrap();
        assert_eq!(steps.len(), p.cfg.num_servers);
        assert!((steps.iter().sum::<f64>() - atomic.gain).abs() < 1e-8);
    }
}

#[test]
fn reference_instance_gains() {
    let opts = SolverOptions::default();
    let k = common::kernels(&common::switch2(1));
    assert_eq!(k.num_states(), 136);
    assert!((solve_original_rvi(&k, &opts).unwrap().gain - -1.6213069129452233).abs() < 1e-9);
    let k = common::kernels(&common::hospital2());
    assert_eq!(k.num_states(), 306);
    assert!((solve_original_rvi(&k, &opts).unwrap().gain - -0.228226565527933).abs() < 1e-9);
}

/// Serve-always on the slow single-server queue, written out by hand.
/// Pre-decision state: (items, server busy at age 1).
fn serve_always_by_hand() -> f64 {
    let (p, mu0, cap) = (0.4, 0.5, 3i32);
    let idx = |z: i32, busy: bool| (z as usize) * 2 + busy as usize;
    let n = 8;
    let mut rows = vec![vec![0.0; n]; n];
    let mut reward = vec![0.0; n];
    for z in 0..=cap {
        for busy in [false, true] {
            let s = idx(z, busy);
            if busy && z == 0 {
                rows[s][s] = 1.0;
                continue;
            }
            let start = !busy && z > 0;
            reward[s] = -((z - (busy || start) as i32) as f64);
            for (arr, pa) in [(0, 1.0 - p), (1, p)] {
                if busy {
                    // age-1 service completes surely
                    rows[s][idx((z + arr - 1).min(cap), false)] += pa;
                } else if start {
                    rows[s][idx((z + arr - 1).min(cap), false)] += pa * mu0;
                    rows[s][idx((z + arr).min(cap), true)] += pa * (1.0 - mu0);
                } else {
                    rows[s][idx((z + arr).min(cap), false)] += pa;
                }
            }
        }
    }
    let mut dist = vec![0.0; n];
    dist[idx(0, false)] = 1.0;
    for _ in 0..20_000 {
        let mut next = vec![0.0; n];
        for s in 0..n {
            next[s] += 0.5 * dist[s];
            for t in 0..n {
                next[t] += 0.5 * dist[s] * rows[s][t];
            }
        }
        dist = next;
    }
    (0..n).map(|s| dist[s] * reward[s]).sum()
}

#[test]
fn policy_evaluation_matches_a_hand_built_chain() {
    let p = common::m1_slow();
    let k = common::kernels(&p);
    // largest schedule at every state
    let entries: Vec<usize> = (0..k.num_states())
        .map(|s| k.joint_range(s).max_by_key(|&e| k.joint_schedule(e).total()).unwrap())
        .collect();
    let ev = evaluate_policy(&k, &PolicyTable::Joint(entries.clone())).unwrap();
    let oracle = serve_always_by_hand();
    assert!((ev.gain - oracle).abs() < 1e-10, "chain {} hand {oracle}", ev.gain);
    assert!(ev.residual < 1e-10);
    // the same policy as atomic steps: serve whenever possible
    let probs: Vec<Vec<f64>> = (0..k.num_states())
        .map(|s| {
            let (codes, _) = k.atomic_row(s);
            let mut row = vec![0.0; k.num_atomic_actions()];
            row[*codes.last().unwrap() as usize] = 1.0;
            row
        })
        .collect();
    let at = evaluate_stochastic_atomic(&k, &probs).unwrap();
    assert!((at.gain - oracle).abs() < 1e-10);
    assert!((at.step_gains.iter().sum::<f64>() - at.gain).abs() < 1e-10);
    for d in &at.step_distributions {
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn certificates_pass_on_every_instance() {
    for (name, p) in common::all_instances() {
        let cert = verify_instance(&p, 1_000_000, &VerifyOptions::default()).unwrap();
        assert!(cert.passed(), "{name}:\n{}", cert.to_text());
        assert_eq!(cert.config_hash, p.content_hash());
        for check in [
            "atomic_gain_gap",
            "atomic_step1_value_gap",
            "atomic_bellman_residual",
            "passing_last_value_gap",
            "dynamics_equivalence_mismatches",
        ] {
            assert!(cert.check(check).is_some(), "{name}: missing {check}");
        }
    }
}

#[test]
fn certificate_text_round_trips() {
    let p = common::switch2(1);
    let cert = verify_instance(&p, 1_000_000, &VerifyOptions::default()).unwrap();
    let text = cert.to_text();
    assert!(text.contains("status = \"PASSED\""));
    let back = Certificate::from_text(&text).unwrap();
    assert_eq!(back.status, cert.status);
    assert_eq!(back.checks.len(), cert.checks.len());
    assert_eq!(back.gain, cert.gain);
    for (a, b) in back.checks.iter().zip(&cert.checks) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.status, b.status);
        assert!(a.value == b.value || (a.value - b.value).abs() <= 1e-15 * b.value.abs());
    }

    let mut broken = cert.clone();
    broken.gain = f64::NAN;
    broken.checks[0].value = f64::NEG_INFINITY;
    let back = Certificate::from_text(&broken.to_text()).unwrap();
    assert!(back.gain.is_nan());
    assert_eq!(back.checks[0].value, f64::NEG_INFINITY);
}

#[test]
fn corrupted_kernels_fail_verification() {
    let p = common::switch2(1);
    let opts = VerifyOptions::default();
    let k = common::kernels(&p);

    let mut bad_rows = k.clone();
    bad_rows.sys_prob[0] *= 0.9;
    let cert = verify_kernels(&p, &bad_rows, &opts);
    assert_eq!(cert.status, CheckStatus::Failed);
    assert_eq!(cert.check("kernel_row_sum_error").unwrap().status, CheckStatus::Failed);

    // atomic rewards no longer add up to the joint schedule rewards
    let mut bad_reward = k.clone();
    for r in bad_reward.atomic_reward.iter_mut().skip(1) {
        *r += 0.5;
    }
    let cert = verify_kernels(&p, &bad_reward, &opts);
    assert_eq!(cert.status, CheckStatus::Failed);
    assert_eq!(cert.check("atomic_gain_gap").unwrap().status, CheckStatus::Failed);

    let other = common::switch2(2);
    let cert = verify_kernels(&other, &k, &opts);
    assert_eq!(cert.check("kernel_config_hash_mismatch").unwrap().status, CheckStatus::Failed);
}

#[test]
fn kernels_round_trip_through_disk() {
    let p = common::tandem();
    let k = common::kernels(&p);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tandem.kernels");
    k.save(&path).unwrap();
    assert_eq!(KernelSet::load(&path, &p.content_hash()).unwrap(), k);
    assert!(KernelSet::load(&path, &common::m1().content_hash()).is_err());
}
