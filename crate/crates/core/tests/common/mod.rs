#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spn_core::config::NETWORK_SCHEMA;
use spn_core::dynamics::{apply_atomic_unchecked, feasible_mask, system_update_sample};
use spn_core::scenarios::{make_hospital, make_mgeo1, make_switch};
use spn_core::state_space::{build_kernels, enumerate_states, KernelSet};
use spn_core::{ArrivalLaw, AtomicAction, HoldingMode, NetworkConfig, Problem, SystemState};

pub fn m1() -> Problem {
    Problem::unconstrained(make_mgeo1(0.5, 1.0, 3, -1.0))
}

pub fn m1_slow() -> Problem {
    Problem::unconstrained(make_mgeo1(0.4, 0.5, 3, -1.0))
}

pub fn switch2(cap: u32) -> Problem {
    let (cfg, extra) = make_switch(2, &[vec![0.3, 0.4], vec![0.35, 0.3]], cap).unwrap();
    Problem::new(cfg, extra)
}

pub fn hospital2() -> Problem {
    Problem::unconstrained(
        make_hospital(&[1, 1], &[vec![0.0, -2.0], vec![-2.0, 0.0]], &[0.3, 0.3], 0.5, 2, 2, -1.0).unwrap(),
    )
}

/// Two-stage line: type 0 serves class 0 and routes the item to class 1,
/// type 1 serves class 1. Batch arrivals of up to two items.
pub fn tandem() -> Problem {
    Problem::unconstrained(NetworkConfig {
        schema: NETWORK_SCHEMA.into(),
        num_classes: 2,
        num_service_types: 2,
        num_servers: 2,
        tau_max: 1,
        material: vec![vec![1, 0], vec![0, 1]],
        routing: vec![vec![0, 0], vec![1, 0]],
        compatibility: vec![vec![1, 1], vec![1, 1]],
        completion: vec![vec![0.6, 1.0], vec![0.5, 1.0]],
        arrivals: vec![
            ArrivalLaw { counts: vec![0, 1, 2], probs: vec![0.5, 0.3, 0.2] },
            ArrivalLaw::none(),
        ],
        service_reward: vec![1.0, 2.0],
        holding_weight: vec![-1.0, -0.5],
        holding_mode: HoldingMode::WaitingOnly,
        item_cap: vec![2, 2],
        initial_idle: vec![1, 1],
    })
}

pub fn all_instances() -> Vec<(&'static str, Problem)> {
    vec![
        ("m1", m1()),
        ("m1-slow", m1_slow()),
        ("switch", switch2(1)),
        ("hospital", hospital2()),
        ("tandem", tandem()),
    ]
}

pub fn kernels(p: &Problem) -> KernelSet {
    let idx = enumerate_states(p, 1_000_000).unwrap();
    build_kernels(p, &idx).unwrap()
}

/// States visited by a random walk with uniformly random feasible atomic
/// actions, including states between atomic steps.
pub fn random_walk(p: &Problem, seed: u64, steps: usize) -> Vec<SystemState> {
    let cfg = &p.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SystemState::initial(cfg);
    let mut out = vec![s.clone()];
    for _ in 0..steps {
        for _ in 0..cfg.num_servers {
            let mask = feasible_mask(cfg, &s, p.extra());
            let codes: Vec<usize> = (0..mask.len()).filter(|&c| mask[c]).collect();
            let c = codes[rng.random_range(0..codes.len())];
            apply_atomic_unchecked(cfg, &mut s, AtomicAction::from_code(c, cfg.num_service_types));
            out.push(s.clone());
        }
        s = system_update_sample(cfg, &s, &mut rng);
        out.push(s.clone());
    }
    out
}
