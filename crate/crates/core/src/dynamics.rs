//! Feasibility, deterministic assignment transitions, the exogenous system
//! update and rewards.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::config::{ExtraConstraint, HoldingMode, NetworkConfig};
use crate::error::{Result, SpnError};
use crate::state::{AtomicAction, Schedule, SystemState};

/// Default bound on the number of distinct outcomes of one system update.
pub const DEFAULT_SUPPORT_LIMIT: usize = 1 << 20;

fn check_dims(cfg: &NetworkConfig, state: &SystemState, a: Option<&Schedule>) -> Result<()> {
    if state.z.len() != cfg.num_classes || state.n.len() != cfg.num_service_types * cfg.slots() {
        return Err(SpnError::Dimension(format!(
            "state {state} does not match a network with {} classes and {} types",
            cfg.num_classes, cfg.num_service_types
        )));
    }
    if let Some(a) = a {
        if a.num_types != cfg.num_service_types || a.a.len() != a.num_types * a.num_types {
            return Err(SpnError::Dimension(format!(
                "schedule is {0}x{0}, network has {1} service types",
                a.num_types, cfg.num_service_types
            )));
        }
    }
    Ok(())
}

fn check_atomic_dims(cfg: &NetworkConfig, action: AtomicAction) -> Result<()> {
    if let AtomicAction::Assign { from, to } = action {
        if from >= cfg.num_service_types || to >= cfg.num_service_types {
            return Err(SpnError::Dimension(format!(
                "atomic action {action} outside {} service types",
                cfg.num_service_types
            )));
        }
    }
    Ok(())
}

/// Remaining capacity of an extra constraint given the services opened so far.
fn extra_slack(cfg: &NetworkConfig, state: &SystemState, c: &ExtraConstraint) -> i64 {
    let used: i64 = (0..cfg.num_service_types)
        .map(|j| c.weights[j] as i64 * state.count(cfg, j, 0) as i64)
        .sum();
    c.limit as i64 - used
}

pub fn schedule_feasible(
    cfg: &NetworkConfig,
    state: &SystemState,
    a: &Schedule,
    extra: &[ExtraConstraint],
) -> Result<bool> {
    check_dims(cfg, state, Some(a))?;
    let jn = cfg.num_service_types;
    let mut started = vec![0u32; jn];
    for from in 0..jn {
        let mut row = 0;
        for to in 0..jn {
            let k = a.get(from, to);
            if k > 0 && cfg.compatibility[from][to] != 1 {
                return Ok(false);
            }
            row += k;
            started[to] += k;
        }
        if row > state.idle(cfg, from) {
            return Ok(false);
        }
    }
    let open = state.open_items(cfg);
    let mut new_items = vec![0u32; cfg.num_classes];
    for (j, &k) in started.iter().enumerate() {
        if let Some(i) = cfg.class_of(j) {
            new_items[i] += k;
        }
    }
    for i in 0..cfg.num_classes {
        if new_items[i] + open[i] > state.z[i] {
            return Ok(false);
        }
    }
    for c in extra {
        let add: i64 = (0..jn).map(|j| c.weights[j] as i64 * started[j] as i64).sum();
        if add > extra_slack(cfg, state, c) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn atomic_feasible(
    cfg: &NetworkConfig,
    state: &SystemState,
    action: AtomicAction,
    extra: &[ExtraConstraint],
) -> Result<bool> {
    check_dims(cfg, state, None)?;
    check_atomic_dims(cfg, action)?;
    let AtomicAction::Assign { from, to } = action else {
        return Ok(true);
    };
    let mut a = Schedule::zero(cfg.num_service_types);
    a.add(from, to, 1);
    schedule_feasible(cfg, state, &a, extra)
}

/// Feasibility of every atomic action, indexed by action code.
pub fn feasible_mask(cfg: &NetworkConfig, state: &SystemState, extra: &[ExtraConstraint]) -> Vec<bool> {
    let jn = cfg.num_service_types;
    let mut mask = vec![false; jn * jn + 1];
    mask[0] = true;
    let open = state.open_items(cfg);
    let slack: Vec<i64> = extra.iter().map(|c| extra_slack(cfg, state, c)).collect();
    for to in 0..jn {
        let item_ok = match cfg.class_of(to) {
            Some(i) => open[i] < state.z[i],
            None => true,
        };
        if !item_ok || extra.iter().zip(&slack).any(|(c, &s)| c.weights[to] as i64 > s) {
            continue;
        }
        for from in 0..jn {
            if cfg.compatibility[from][to] == 1 && state.idle(cfg, from) > 0 {
                mask[1 + from * jn + to] = true;
            }
        }
    }
    mask
}

/// Applies a feasible atomic action without checking it.
pub fn apply_atomic_unchecked(cfg: &NetworkConfig, state: &mut SystemState, action: AtomicAction) {
    if let AtomicAction::Assign { from, to } = action {
        *state.count_mut(cfg, to, 0) += 1;
        *state.count_mut(cfg, from, cfg.idle_slot()) -= 1;
    }
}

pub fn apply_atomic(
    cfg: &NetworkConfig,
    state: &SystemState,
    action: AtomicAction,
    extra: &[ExtraConstraint],
) -> Result<SystemState> {
    if !atomic_feasible(cfg, state, action, extra)? {
        return Err(SpnError::Infeasible { action: action.to_string(), state: state.to_string() });
    }
    let mut next = state.clone();
    apply_atomic_unchecked(cfg, &mut next, action);
    Ok(next)
}

/// Opens the services of a feasible schedule.
///
/// Age-zero counts are incremented rather than overwritten; at a pre-decision
/// state (no age-zero services) the two coincide, and incrementing keeps the
/// result equal to the fold of atomic steps from any intermediate state.
pub fn apply_schedule(
    cfg: &NetworkConfig,
    state: &SystemState,
    a: &Schedule,
    extra: &[ExtraConstraint],
) -> Result<SystemState> {
    if !schedule_feasible(cfg, state, a, extra)? {
        return Err(SpnError::Infeasible { action: format!("{:?}", a.a), state: state.to_string() });
    }
    let jn = cfg.num_service_types;
    let mut next = state.clone();
    for from in 0..jn {
        for to in 0..jn {
            let k = a.get(from, to);
            *next.count_mut(cfg, to, 0) += k;
            *next.count_mut(cfg, from, cfg.idle_slot()) -= k;
        }
    }
    Ok(next)
}

/// Pushes arrivals `x` and completions `y[j][age]` through the update law.
fn update_with(cfg: &NetworkConfig, post: &SystemState, x: &[u32], y: &[u32]) -> SystemState {
    let (jn, tm) = (cfg.num_service_types, cfg.tau_max);
    let mut z: Vec<i64> = post.z.iter().zip(x).map(|(&z, &x)| z as i64 + x as i64).collect();
    let mut next = SystemState { z: Vec::new(), n: vec![0; post.n.len()] };
    for j in 0..jn {
        let mut done = 0;
        for age in 0..=tm {
            let yj = y[j * (tm + 1) + age];
            done += yj;
            if age < tm {
                *next.count_mut(cfg, j, age + 1) = post.count(cfg, j, age) - yj;
            }
        }
        *next.count_mut(cfg, j, cfg.idle_slot()) = post.idle(cfg, j) + done;
        for i in 0..cfg.num_classes {
            z[i] += done as i64 * (cfg.routing[i][j] as i64 - cfg.material[i][j] as i64);
        }
    }
    next.z = z
        .iter()
        .zip(&cfg.item_cap)
        .map(|(&v, &cap)| v.clamp(0, cap as i64) as u32)
        .collect();
    next
}

/// Samples the next pre-decision state from a post-decision state.
///
/// Draw order is fixed: one uniform per class for arrivals, then one binomial per
/// (type, age) with a nondegenerate law, so equal inputs consume the generator
/// identically.
pub fn system_update_sample<R: Rng + ?Sized>(
    cfg: &NetworkConfig,
    post: &SystemState,
    rng: &mut R,
) -> SystemState {
    let x: Vec<u32> = cfg.arrivals.iter().map(|law| law.sample_with(rng.random::<f64>())).collect();
    let tm = cfg.tau_max;
    let mut y = vec![0u32; cfg.num_service_types * (tm + 1)];
    for j in 0..cfg.num_service_types {
        for age in 0..=tm {
            let n = post.count(cfg, j, age);
            let p = cfg.completion[j][age];
            y[j * (tm + 1) + age] = if n == 0 || p <= 0.0 {
                0
            } else if p >= 1.0 {
                n
            } else {
                Binomial::new(n as u64, p).expect("valid binomial").sample(rng) as u32
            };
        }
    }
    update_with(cfg, post, &x, &y)
}

pub fn binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(n as usize + 1);
    let mut choose = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            choose = choose * (n - k + 1) as f64 / k as f64;
        }
        pmf.push(choose * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32));
    }
    pmf
}

/// Exact law of the next state, sorted by state; outcomes of zero probability
/// are omitted.
pub fn system_update_distribution(
    cfg: &NetworkConfig,
    post: &SystemState,
    support_limit: usize,
) -> Result<Vec<(SystemState, f64)>> {
    let tm = cfg.tau_max;
    let ny = cfg.num_service_types * (tm + 1);
    // partial outcomes keyed by (arrivals, completions) drawn so far
    let mut partial: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    partial.insert(Vec::new(), 1.0);
    let extend = |choices: Vec<(u32, f64)>, partial: &mut BTreeMap<Vec<u32>, f64>| -> Result<()> {
        let mut next = BTreeMap::new();
        for (key, p) in partial.iter() {
            for &(v, q) in &choices {
                if q <= 0.0 {
                    continue;
                }
                let mut k = key.clone();
                k.push(v);
                *next.entry(k).or_insert(0.0) += p * q;
            }
        }
        if next.len() > support_limit {
            return Err(SpnError::SupportLimit { limit: support_limit });
        }
        *partial = next;
        Ok(())
    };
    for law in &cfg.arrivals {
        extend(law.counts.iter().copied().zip(law.probs.iter().copied()).collect(), &mut partial)?;
    }
    for j in 0..cfg.num_service_types {
        for age in 0..=tm {
            let n = post.count(cfg, j, age);
            let pmf = binomial_pmf(n, cfg.completion[j][age]);
            extend(pmf.into_iter().enumerate().map(|(k, q)| (k as u32, q)).collect(), &mut partial)?;
        }
    }
    let mut out: BTreeMap<SystemState, f64> = BTreeMap::new();
    let i_n = cfg.num_classes;
    for (key, p) in partial {
        debug_assert_eq!(key.len(), i_n + ny);
        let s = update_with(cfg, post, &key[..i_n], &key[i_n..]);
        *out.entry(s).or_insert(0.0) += p;
    }
    Ok(out.into_iter().collect())
}

/// Per-step holding reward (nonpositive).
pub fn holding(cfg: &NetworkConfig, state: &SystemState) -> f64 {
    let counts: Vec<u32> = match cfg.holding_mode {
        HoldingMode::WaitingOnly => state.waiting(cfg),
        HoldingMode::AllItems => state.z.clone(),
    };
    counts.iter().zip(&cfg.holding_weight).map(|(&k, &c)| c * k as f64).sum()
}

pub fn atomic_reward(cfg: &NetworkConfig, action: AtomicAction) -> f64 {
    match action {
        AtomicAction::Pass => 0.0,
        AtomicAction::Assign { to, .. } => cfg.service_reward[to],
    }
}

/// Service rewards accumulated in lexicographic atomic order, then the holding
/// reward of the post-decision state. The summation order matches a run of
/// atomic steps over the same expansion.
pub fn schedule_reward(
    cfg: &NetworkConfig,
    state: &SystemState,
    a: &Schedule,
    extra: &[ExtraConstraint],
) -> Result<f64> {
    let post = apply_schedule(cfg, state, a, extra)?;
    let mut r = 0.0;
    for act in a.atomic_expansion() {
        r += atomic_reward(cfg, act);
    }
    Ok(r + holding(cfg, &post))
}

/// All feasible schedules at a state, in lexicographic order of their entries.
pub fn feasible_schedules(
    cfg: &NetworkConfig,
    state: &SystemState,
    extra: &[ExtraConstraint],
) -> Vec<Schedule> {
    let jn = cfg.num_service_types;
    let mut out = Vec::new();
    let mut cur = Schedule::zero(jn);
    // Depth-first over entries; each branch stays feasible so pruning is exact
    // (feasibility is monotone in the schedule entries).
    fn rec(
        cfg: &NetworkConfig,
        state: &SystemState,
        extra: &[ExtraConstraint],
        pos: usize,
        cur: &mut Schedule,
        out: &mut Vec<Schedule>,
    ) {
        if pos == cur.a.len() {
            out.push(cur.clone());
            return;
        }
        let (from, to) = (pos / cur.num_types, pos % cur.num_types);
        let mut k = 0;
        loop {
            rec(cfg, state, extra, pos + 1, cur, out);
            if cfg.compatibility[from][to] != 1 {
                break;
            }
            cur.a[pos] += 1;
            k += 1;
            if !schedule_feasible(cfg, state, cur, extra).unwrap_or(false) {
                cur.a[pos] -= k;
                break;
            }
        }
    }
    rec(cfg, state, extra, 0, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ArrivalLaw, NETWORK_SCHEMA};

    fn unit(cap: u32) -> NetworkConfig {
        NetworkConfig {
            schema: NETWORK_SCHEMA.into(),
            num_classes: 1,
            num_service_types: 1,
            num_servers: 1,
            tau_max: 0,
            material: vec![vec![1]],
            routing: vec![vec![0]],
            compatibility: vec![vec![1]],
            completion: vec![vec![1.0]],
            arrivals: vec![ArrivalLaw::none()],
            service_reward: vec![0.0],
            holding_weight: vec![-1.0],
            holding_mode: HoldingMode::WaitingOnly,
            item_cap: vec![cap],
            initial_idle: vec![1],
        }
    }

    fn st(z: u32, busy: u32, idle: u32) -> SystemState {
        SystemState { z: vec![z], n: vec![busy, idle] }
    }

    #[test]
    fn single_server_feasibility() {
        let cfg = unit(2);
        let s = st(1, 0, 1);
        assert!(schedule_feasible(&cfg, &s, &Schedule::zero(1), &[]).unwrap());
        assert!(schedule_feasible(&cfg, &s, &Schedule::from_rows(&[vec![1]]), &[]).unwrap());
        assert!(!schedule_feasible(&cfg, &s, &Schedule::from_rows(&[vec![2]]), &[]).unwrap());
        assert!(schedule_feasible(&cfg, &s, &Schedule::zero(2), &[]).is_err());
    }

    #[test]
    fn atomic_and_schedule_agree_on_unit_instance() {
        let cfg = unit(2);
        let s = st(1, 0, 1);
        let serve = AtomicAction::Assign { from: 0, to: 0 };
        let a = apply_atomic(&cfg, &s, serve, &[]).unwrap();
        assert_eq!(a, st(1, 1, 0));
        assert_eq!(apply_schedule(&cfg, &s, &Schedule::from_rows(&[vec![1]]), &[]).unwrap(), a);
        assert_eq!(apply_atomic(&cfg, &s, AtomicAction::Pass, &[]).unwrap(), s);
        assert!(apply_atomic(&cfg, &a, serve, &[]).is_err());
    }

    #[test]
    fn certain_completion_releases_the_item() {
        let cfg = unit(2);
        let mut rng = rand::rng();
        assert_eq!(system_update_sample(&cfg, &st(1, 1, 0), &mut rng), st(0, 0, 1));
    }

    #[test]
    fn binomial_outcomes_for_two_open_services() {
        let mut cfg = unit(2);
        cfg.num_servers = 2;
        cfg.tau_max = 1;
        cfg.completion = vec![vec![0.3, 1.0]];
        let post = SystemState { z: vec![2], n: vec![2, 0, 0] };
        let d = system_update_distribution(&cfg, &post, 100).unwrap();
        let probs: Vec<(u32, f64)> = d.iter().map(|(s, p)| (s.z[0], *p)).collect();
        // sorted by z ascending: two completions, one, none
        let expect = [(0, 0.09), (1, 0.42), (2, 0.49)];
        for ((z, p), (ez, ep)) in probs.iter().zip(expect) {
            assert_eq!(*z, ez);
            assert!((p - ep).abs() < 1e-15);
        }
    }

    #[test]
    fn support_limit_is_enforced() {
        let mut cfg = unit(5);
        cfg.arrivals = vec![ArrivalLaw { counts: vec![0, 1, 2], probs: vec![0.2, 0.3, 0.5] }];
        assert!(matches!(
            system_update_distribution(&cfg, &st(0, 0, 1), 2),
            Err(SpnError::SupportLimit { limit: 2 })
        ));
    }

    #[test]
    fn holding_and_schedule_rewards() {
        let mut cfg = unit(2);
        assert_eq!(schedule_reward(&cfg, &st(0, 0, 1), &Schedule::zero(1), &[]).unwrap(), 0.0);
        assert_eq!(schedule_reward(&cfg, &st(2, 0, 1), &Schedule::zero(1), &[]).unwrap(), -2.0);
        cfg.service_reward = vec![5.0];
        let a = Schedule::from_rows(&[vec![1]]);
        assert_eq!(schedule_reward(&cfg, &st(1, 0, 1), &a, &[]).unwrap(), 5.0);
        cfg.holding_mode = HoldingMode::AllItems;
        assert_eq!(schedule_reward(&cfg, &st(1, 0, 1), &a, &[]).unwrap(), 4.0);
    }

    #[test]
    fn pmf_matches_closed_form() {
        let pmf = binomial_pmf(3, 0.4);
        let expect = [0.216, 0.432, 0.288, 0.064];
        for (a, b) in pmf.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
