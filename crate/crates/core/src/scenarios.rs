//! Instance generators (single-server queue, crossbar switch, hospital
//! overflow) and baseline policies.

use serde::{Deserialize, Serialize};

use crate::config::{ArrivalLaw, ExtraConstraint, HoldingMode, NetworkConfig, Problem, NETWORK_SCHEMA};
use crate::dynamics::{atomic_reward, feasible_mask};
use crate::error::{Result, SpnError};
use crate::sim::AtomicPolicy;
use crate::state::{AtomicAction, SystemState};

/// A generated instance, as stored in a run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioSpec {
    Mgeo1 {
        p_arrival: f64,
        mu0: f64,
        z_cap: u32,
        #[serde(default = "unit_cost")]
        holding: f64,
    },
    Switch {
        w: usize,
        /// Bernoulli arrival rate per (input, output) pair.
        rates: Vec<Vec<f64>>,
        cap: u32,
    },
    Hospital {
        beds: Vec<u32>,
        /// Bernoulli arrival rate per class (unit of origin).
        arrival_rates: Vec<f64>,
        /// One-time reward of placing a class-`i'` patient in unit `i`;
        /// zero on the diagonal.
        overflow: Vec<Vec<f64>>,
        /// Per-step discharge probability before the age cap.
        discharge: f64,
        tau_max: usize,
        cap: u32,
        #[serde(default = "unit_cost")]
        holding: f64,
    },
}

fn unit_cost() -> f64 {
    -1.0
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Problem> {
        match self {
            ScenarioSpec::Mgeo1 { p_arrival, mu0, z_cap, holding } => {
                Ok(Problem::unconstrained(make_mgeo1(*p_arrival, *mu0, *z_cap, *holding)))
            }
            ScenarioSpec::Switch { w, rates, cap } => {
                let (cfg, extra) = make_switch(*w, rates, *cap)?;
                Ok(Problem::new(cfg, extra))
            }
            ScenarioSpec::Hospital { beds, arrival_rates, overflow, discharge, tau_max, cap, holding } => {
                Ok(Problem::unconstrained(make_hospital(
                    beds,
                    overflow,
                    arrival_rates,
                    *discharge,
                    *tau_max,
                    *cap,
                    *holding,
                )?))
            }
        }
    }

    /// Switch size, for policies that need the port structure.
    pub fn switch_ports(&self) -> Option<usize> {
        match self {
            ScenarioSpec::Switch { w, .. } => Some(*w),
            _ => None,
        }
    }
}

/// One class, one service type, one server, Bernoulli arrivals.
///
/// Service completes within the initiation step with probability `mu0`, and
/// surely one step later.
pub fn make_mgeo1(p_arrival: f64, mu0: f64, z_cap: u32, holding: f64) -> NetworkConfig {
    let (tau_max, completion) = if mu0 >= 1.0 { (0, vec![vec![1.0]]) } else { (1, vec![vec![mu0, 1.0]]) };
    NetworkConfig {
        schema: NETWORK_SCHEMA.into(),
        num_classes: 1,
        num_service_types: 1,
        num_servers: 1,
        tau_max,
        material: vec![vec![1]],
        routing: vec![vec![0]],
        compatibility: vec![vec![1]],
        completion,
        arrivals: vec![ArrivalLaw::bernoulli(p_arrival)],
        service_reward: vec![0.0],
        holding_weight: vec![holding],
        holding_mode: HoldingMode::WaitingOnly,
        item_cap: vec![z_cap],
        initial_idle: vec![1],
    }
}

/// `w x w` input-queued crossbar switch.
///
/// Class and service type `(input, output)` have index `input * w + output`.
/// Each output port is one server; a server that last sent to output `o` may
/// only start services to `o`. Every queued packet costs 1 per step, and each
/// input port may start at most one transmission per step.
pub fn make_switch(w: usize, rates: &[Vec<f64>], cap: u32) -> Result<(NetworkConfig, Vec<ExtraConstraint>)> {
    if w < 2 {
        return Err(SpnError::Config(format!("switch needs at least 2 ports, got {w}")));
    }
    if rates.len() != w || rates.iter().any(|r| r.len() != w) {
        return Err(SpnError::Config(format!("switch rate matrix must be {w}x{w}")));
    }
    let j = w * w;
    let identity: Vec<Vec<u8>> = (0..j).map(|a| (0..j).map(|b| (a == b) as u8).collect()).collect();
    let compatibility = (0..j).map(|a| (0..j).map(|b| (a % w == b % w) as u8).collect()).collect();
    let mut initial_idle = vec![0; j];
    for out in 0..w {
        initial_idle[out] = 1;
    }
    let cfg = NetworkConfig {
        schema: NETWORK_SCHEMA.into(),
        num_classes: j,
        num_service_types: j,
        num_servers: w,
        tau_max: 0,
        material: identity,
        routing: vec![vec![0; j]; j],
        compatibility,
        completion: vec![vec![1.0]; j],
        arrivals: rates.iter().flatten().map(|&p| ArrivalLaw::bernoulli(p)).collect(),
        service_reward: vec![0.0; j],
        holding_weight: vec![-1.0; j],
        holding_mode: HoldingMode::AllItems,
        item_cap: vec![cap; j],
        initial_idle,
    };
    let extra = (0..w)
        .map(|input| ExtraConstraint {
            name: format!("input-port-{input}"),
            weights: (0..j).map(|t| (t / w == input) as u32).collect(),
            limit: 1,
        })
        .collect();
    Ok((cfg, extra))
}

/// Inpatient units with overflow.
///
/// Service type `(unit, class)` has index `unit * I + class`: a bed of `unit`
/// treating a patient of `class`. Beds stay within their unit; placing a
/// patient outside its own unit earns `overflow[unit][class]` (negative).
/// Discharge is geometric with probability `discharge` per step until the age
/// cap. Waiting patients cost `holding` per step.
#[allow(clippy::too_many_arguments)]
pub fn make_hospital(
    beds: &[u32],
    overflow: &[Vec<f64>],
    arrival_rates: &[f64],
    discharge: f64,
    tau_max: usize,
    cap: u32,
    holding: f64,
) -> Result<NetworkConfig> {
    let i_n = beds.len();
    if i_n < 2 {
        return Err(SpnError::Config(format!("hospital needs at least 2 units, got {i_n}")));
    }
    if overflow.len() != i_n || overflow.iter().any(|r| r.len() != i_n) || arrival_rates.len() != i_n {
        return Err(SpnError::Config(format!("hospital overflow must be {i_n}x{i_n} with {i_n} arrival rates")));
    }
    let j = i_n * i_n;
    let material = (0..i_n).map(|cls| (0..j).map(|t| (t % i_n == cls) as u8).collect()).collect();
    let compatibility = (0..j).map(|a| (0..j).map(|b| (a / i_n == b / i_n) as u8).collect()).collect();
    let mut completion_row = vec![discharge; tau_max + 1];
    completion_row[tau_max] = 1.0;
    let service_reward = (0..j).map(|t| if t / i_n == t % i_n { 0.0 } else { overflow[t / i_n][t % i_n] }).collect();
    let mut initial_idle = vec![0; j];
    for (unit, &b) in beds.iter().enumerate() {
        initial_idle[unit * i_n + unit] = b;
    }
    Ok(NetworkConfig {
        schema: NETWORK_SCHEMA.into(),
        num_classes: i_n,
        num_service_types: j,
        num_servers: beds.iter().map(|&b| b as usize).sum(),
        tau_max,
        material,
        routing: vec![vec![0; j]; i_n],
        compatibility,
        completion: vec![completion_row; j],
        arrivals: arrival_rates.iter().map(|&p| ArrivalLaw::bernoulli(p)).collect(),
        service_reward,
        holding_weight: vec![holding; i_n],
        holding_mode: HoldingMode::WaitingOnly,
        item_cap: vec![cap; i_n],
        initial_idle,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    MaxWeight,
    Greedy,
    Random,
}

impl std::str::FromStr for BaselineKind {
    type Err = SpnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-weight" => Ok(BaselineKind::MaxWeight),
            "greedy" => Ok(BaselineKind::Greedy),
            "random" => Ok(BaselineKind::Random),
            _ => Err(SpnError::Unsupported(format!("baseline {s:?}"))),
        }
    }
}

/// Builds a baseline policy; max-weight requires the switch structure.
pub fn baseline_policy(kind: BaselineKind, problem: &Problem, spec: Option<&ScenarioSpec>) -> Result<Box<dyn AtomicPolicy>> {
    match kind {
        BaselineKind::MaxWeight => {
            let w = spec.and_then(|s| s.switch_ports()).ok_or_else(|| {
                SpnError::Unsupported("max-weight is defined for switch scenarios only".into())
            })?;
            Ok(Box::new(MaxWeightPolicy { problem: problem.clone(), ports: w }))
        }
        BaselineKind::Greedy => Ok(Box::new(GreedyPolicy { problem: problem.clone() })),
        BaselineKind::Random => Ok(Box::new(RandomPolicy)),
    }
}

/// Uniform over feasible atomic actions, Pass included.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomPolicy;

impl AtomicPolicy for RandomPolicy {
    fn action_probs(&self, _state: &SystemState, _step: usize, mask: &[bool]) -> Result<Vec<f64>> {
        let n = mask.iter().filter(|&&b| b).count();
        if n == 0 {
            return Err(SpnError::EmptyMask);
        }
        Ok(mask.iter().map(|&b| if b { 1.0 / n as f64 } else { 0.0 }).collect())
    }
}

/// Takes the feasible assignment with the largest service reward plus
/// waiting count of its class; passes when none is positive.
#[derive(Clone, Debug)]
pub struct GreedyPolicy {
    pub problem: Problem,
}

impl AtomicPolicy for GreedyPolicy {
    fn action_probs(&self, state: &SystemState, _step: usize, mask: &[bool]) -> Result<Vec<f64>> {
        let cfg = &self.problem.cfg;
        let jn = cfg.num_service_types;
        let waiting = state.waiting(cfg);
        let mut best = (0usize, 0.0f64);
        for (code, &ok) in mask.iter().enumerate().skip(1) {
            if !ok {
                continue;
            }
            let a = AtomicAction::from_code(code, jn);
            let AtomicAction::Assign { to, .. } = a else { continue };
            let q = cfg.class_of(to).map(|i| waiting[i] as f64).unwrap_or(0.0);
            let w = atomic_reward(cfg, a) + q;
            if w > best.1 {
                best = (code, w);
            }
        }
        let mut p = vec![0.0; mask.len()];
        p[best.0] = 1.0;
        Ok(p)
    }
}

/// Max-weight matching for a crossbar switch built by [`make_switch`].
///
/// At each atomic step the matching of free inputs to idle outputs with the
/// largest total queue length is found by exhaustive search, and its
/// assignment with the smallest action code is emitted. Later steps of the
/// same time step complete a matching of the same total weight.
#[derive(Clone, Debug)]
pub struct MaxWeightPolicy {
    pub problem: Problem,
    pub ports: usize,
}

impl MaxWeightPolicy {
    /// Best matching as `choice[input] = Some(output)`, ties broken toward the
    /// lexicographically first choice vector (outputs before "unmatched").
    pub fn best_matching(&self, state: &SystemState) -> (f64, Vec<Option<usize>>) {
        let cfg = &self.problem.cfg;
        let w = self.ports;
        let waiting = state.waiting(cfg);
        let free_input: Vec<bool> =
            (0..w).map(|i| (0..w).all(|o| state.count(cfg, i * w + o, 0) == 0)).collect();
        let idle_output: Vec<bool> =
            (0..w).map(|o| (0..w).any(|i| state.idle(cfg, i * w + o) > 0)).collect();
        let weight = |i: usize, o: usize| -> f64 {
            if free_input[i] && idle_output[o] {
                waiting[i * w + o] as f64
            } else {
                0.0
            }
        };
        let mut best = (f64::NEG_INFINITY, vec![None; w]);
        let mut cur = vec![None; w];
        let mut used = vec![false; w];
        #[allow(clippy::too_many_arguments)]
        fn rec(
            i: usize,
            w: usize,
            acc: f64,
            cur: &mut Vec<Option<usize>>,
            used: &mut Vec<bool>,
            weight: &dyn Fn(usize, usize) -> f64,
            best: &mut (f64, Vec<Option<usize>>),
        ) {
            if i == w {
                if acc > best.0 {
                    *best = (acc, cur.clone());
                }
                return;
            }
            for o in 0..w {
                let wt = weight(i, o);
                if !used[o] && wt > 0.0 {
                    used[o] = true;
                    cur[i] = Some(o);
                    rec(i + 1, w, acc + wt, cur, used, weight, best);
                    used[o] = false;
                    cur[i] = None;
                }
            }
            rec(i + 1, w, acc, cur, used, weight, best);
        }
        rec(0, w, 0.0, &mut cur, &mut used, &weight, &mut best);
        best
    }
}

impl AtomicPolicy for MaxWeightPolicy {
    fn action_probs(&self, state: &SystemState, _step: usize, mask: &[bool]) -> Result<Vec<f64>> {
        let cfg = &self.problem.cfg;
        let w = self.ports;
        let jn = cfg.num_service_types;
        let (_, matching) = self.best_matching(state);
        let mut code = 0;
        for (input, o) in matching.iter().enumerate() {
            let Some(out) = *o else { continue };
            let to = input * w + out;
            let from = (0..w).map(|i| i * w + out).find(|&t| state.idle(cfg, t) > 0);
            if let Some(from) = from {
                let c = AtomicAction::Assign { from, to }.code(jn);
                if mask[c] && (code == 0 || c < code) {
                    code = c;
                }
            }
        }
        let mut p = vec![0.0; mask.len()];
        p[code] = 1.0;
        Ok(p)
    }
}

/// Feasibility mask helper for policies outside a rollout.
pub fn mask_at(problem: &Problem, state: &SystemState) -> Vec<bool> {
    feasible_mask(&problem.cfg, state, problem.extra())
}
