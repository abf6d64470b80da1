//! Finite state spaces of small instances and their exact transition kernels.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{Reader, Writer};
use crate::config::Problem;
use crate::dynamics::{
    apply_atomic_unchecked, atomic_reward, feasible_mask, feasible_schedules, holding,
    schedule_reward, system_update_distribution, DEFAULT_SUPPORT_LIMIT,
};
use crate::error::{Result, SpnError};
use crate::state::{AtomicAction, Schedule, SystemState};

pub const DEFAULT_STATE_LIMIT: usize = 2_000_000;

const KERNEL_MAGIC: &[u8; 8] = b"SPNKERN1";
const KERNEL_VERSION: u32 = 1;

/// Dense ids for an enumerated state set, ordered lexicographically by state.
#[derive(Clone, Debug)]
pub struct StateIndex {
    states: Vec<SystemState>,
    ids: HashMap<SystemState, usize>,
    initial: usize,
}

impl StateIndex {
    pub fn from_states(mut states: Vec<SystemState>, initial: &SystemState) -> Result<Self> {
        states.sort();
        states.dedup();
        let ids: HashMap<SystemState, usize> =
            states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let initial = *ids
            .get(initial)
            .ok_or_else(|| SpnError::Dimension(format!("initial state {initial} not enumerated")))?;
        Ok(Self { states, ids, initial })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, id: usize) -> &SystemState {
        &self.states[id]
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn id(&self, s: &SystemState) -> Option<usize> {
        self.ids.get(s).copied()
    }

    /// Id of the configured initial state; the reference state of all solvers.
    pub fn initial(&self) -> usize {
        self.initial
    }
}

/// Every state reachable from the initial state through feasible atomic
/// assignments and system updates.
///
/// Intermediate states of a time step (with services opened at age zero) are
/// included, since atomic value tables are defined on them.
pub fn enumerate_states(problem: &Problem, limit: usize) -> Result<StateIndex> {
    let cfg = &problem.cfg;
    let extra = problem.extra();
    let init = SystemState::initial(cfg);
    init.check_invariants(cfg)?;
    let mut seen: BTreeSet<SystemState> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(init.clone());
    queue.push_back(init.clone());
    while let Some(s) = queue.pop_front() {
        let mut next: Vec<SystemState> = Vec::new();
        for (code, ok) in feasible_mask(cfg, &s, extra).into_iter().enumerate().skip(1) {
            if ok {
                let mut t = s.clone();
                apply_atomic_unchecked(cfg, &mut t, AtomicAction::from_code(code, cfg.num_service_types));
                next.push(t);
            }
        }
        for (t, _) in system_update_distribution(cfg, &s, DEFAULT_SUPPORT_LIMIT)? {
            next.push(t);
        }
        for t in next {
            if seen.insert(t.clone()) {
                if seen.len() > limit {
                    return Err(SpnError::StateLimit { limit });
                }
                queue.push_back(t);
            }
        }
    }
    StateIndex::from_states(seen.into_iter().collect(), &init)
}

/// Exact kernels and rewards over an enumerated state set.
///
/// Per-state lists are stored in compressed rows: entries of state `s` live at
/// `ptr[s]..ptr[s + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSet {
    pub config_hash: String,
    pub num_servers: usize,
    pub num_types: usize,
    pub states: Vec<Vec<u32>>,
    pub initial: usize,
    /// System update from each state taken as post-decision.
    pub sys_ptr: Vec<usize>,
    pub sys_next: Vec<u32>,
    pub sys_prob: Vec<f64>,
    /// Feasible atomic actions by ascending code (Pass first) and successors.
    pub atomic_ptr: Vec<usize>,
    pub atomic_code: Vec<u32>,
    pub atomic_next: Vec<u32>,
    /// Service reward per atomic action code.
    pub atomic_reward: Vec<f64>,
    /// Feasible joint schedules in lexicographic order, their post-decision
    /// states and rewards (service rewards plus post-decision holding).
    pub joint_ptr: Vec<usize>,
    pub joint_schedule: Vec<u32>,
    pub joint_post: Vec<u32>,
    pub joint_reward: Vec<f64>,
    pub holding: Vec<f64>,
    pub idle: Vec<u32>,
}

struct StateRows {
    sys: Vec<(u32, f64)>,
    atomic: Vec<(u32, u32)>,
    joint: Vec<(Schedule, u32, f64)>,
    holding: f64,
    idle: u32,
}

fn lookup(idx: &StateIndex, from: &SystemState, to: &SystemState) -> Result<u32> {
    idx.id(to)
        .map(|i| i as u32)
        .ok_or_else(|| SpnError::NotClosed { from: from.to_string(), to: to.to_string() })
}

pub fn build_kernels(problem: &Problem, idx: &StateIndex) -> Result<KernelSet> {
    let cfg = &problem.cfg;
    let extra = problem.extra();
    let jn = cfg.num_service_types;
    let rows: Vec<StateRows> = idx
        .states()
        .par_iter()
        .map(|s| -> Result<StateRows> {
            let sys = system_update_distribution(cfg, s, DEFAULT_SUPPORT_LIMIT)?
                .into_iter()
                .map(|(t, p)| Ok((lookup(idx, s, &t)?, p)))
                .collect::<Result<Vec<_>>>()?;
            let mut atomic = Vec::new();
            for (code, ok) in feasible_mask(cfg, s, extra).into_iter().enumerate() {
                if ok {
                    let mut t = s.clone();
                    apply_atomic_unchecked(cfg, &mut t, AtomicAction::from_code(code, jn));
                    atomic.push((code as u32, lookup(idx, s, &t)?));
                }
            }
            let mut joint = Vec::new();
            for a in feasible_schedules(cfg, s, extra) {
                let mut post = s.clone();
                for act in a.atomic_expansion() {
                    apply_atomic_unchecked(cfg, &mut post, act);
                }
                let r = schedule_reward(cfg, s, &a, extra)?;
                joint.push((a, lookup(idx, s, &post)?, r));
            }
            Ok(StateRows { sys, atomic, joint, holding: holding(cfg, s), idle: s.total_idle(cfg) })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut k = KernelSet {
        config_hash: problem.content_hash(),
        num_servers: cfg.num_servers,
        num_types: jn,
        states: idx.states().iter().map(|s| s.to_record()).collect(),
        initial: idx.initial(),
        sys_ptr: vec![0],
        sys_next: Vec::new(),
        sys_prob: Vec::new(),
        atomic_ptr: vec![0],
        atomic_code: Vec::new(),
        atomic_next: Vec::new(),
        atomic_reward: (0..jn * jn + 1)
            .map(|c| atomic_reward(cfg, AtomicAction::from_code(c, jn)))
            .collect(),
        joint_ptr: vec![0],
        joint_schedule: Vec::new(),
        joint_post: Vec::new(),
        joint_reward: Vec::new(),
        holding: Vec::with_capacity(idx.len()),
        idle: Vec::with_capacity(idx.len()),
    };
    for r in rows {
        for (t, p) in r.sys {
            k.sys_next.push(t);
            k.sys_prob.push(p);
        }
        k.sys_ptr.push(k.sys_next.len());
        for (c, t) in r.atomic {
            k.atomic_code.push(c);
            k.atomic_next.push(t);
        }
        k.atomic_ptr.push(k.atomic_code.len());
        for (a, t, rew) in r.joint {
            k.joint_schedule.extend_from_slice(&a.a);
            k.joint_post.push(t);
            k.joint_reward.push(rew);
        }
        k.joint_ptr.push(k.joint_post.len());
        k.holding.push(r.holding);
        k.idle.push(r.idle);
    }
    Ok(k)
}

/// Largest deviation of a system-update row sum from one, and whether every
/// stored index is in range.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelIntegrity {
    pub max_row_error: f64,
    pub indices_in_range: bool,
    pub min_probability: f64,
}

impl KernelSet {
    pub fn num_states(&self) -> usize {
        self.holding.len()
    }

    pub fn num_atomic_actions(&self) -> usize {
        self.atomic_reward.len()
    }

    #[inline]
    pub fn sys_row(&self, s: usize) -> (&[u32], &[f64]) {
        let r = self.sys_ptr[s]..self.sys_ptr[s + 1];
        (&self.sys_next[r.clone()], &self.sys_prob[r])
    }

    #[inline]
    pub fn atomic_row(&self, s: usize) -> (&[u32], &[u32]) {
        let r = self.atomic_ptr[s]..self.atomic_ptr[s + 1];
        (&self.atomic_code[r.clone()], &self.atomic_next[r])
    }

    #[inline]
    pub fn joint_range(&self, s: usize) -> std::ops::Range<usize> {
        self.joint_ptr[s]..self.joint_ptr[s + 1]
    }

    pub fn joint_schedule(&self, entry: usize) -> Schedule {
        let jj = self.num_types * self.num_types;
        Schedule { num_types: self.num_types, a: self.joint_schedule[entry * jj..(entry + 1) * jj].to_vec() }
    }

    /// Successor of a feasible atomic action, if feasible.
    pub fn atomic_successor(&self, s: usize, code: usize) -> Option<usize> {
        let (codes, next) = self.atomic_row(s);
        codes.binary_search(&(code as u32)).ok().map(|p| next[p] as usize)
    }

    /// Expected value of `v` after the system update from `s`.
    #[inline]
    pub fn expect_sys(&self, s: usize, v: &[f64]) -> f64 {
        let (next, prob) = self.sys_row(s);
        let mut acc = 0.0;
        for (&t, &p) in next.iter().zip(prob) {
            acc += p * v[t as usize];
        }
        acc
    }

    pub fn integrity(&self) -> KernelIntegrity {
        let n = self.num_states();
        let mut max_row_error: f64 = 0.0;
        let mut min_probability = f64::INFINITY;
        for s in 0..n {
            let (_, prob) = self.sys_row(s);
            let sum: f64 = prob.iter().sum();
            max_row_error = max_row_error.max((sum - 1.0).abs());
            for &p in prob {
                min_probability = min_probability.min(p);
            }
        }
        if !max_row_error.is_finite() {
            max_row_error = f64::INFINITY;
        }
        let in_range = |v: &[u32]| v.iter().all(|&t| (t as usize) < n);
        KernelIntegrity {
            max_row_error,
            indices_in_range: in_range(&self.sys_next) && in_range(&self.atomic_next) && in_range(&self.joint_post),
            min_probability,
        }
    }

    /// Copy with every reward multiplied by `scale`.
    pub fn with_reward_scale(&self, scale: f64) -> Self {
        let mut k = self.clone();
        k.atomic_reward.iter_mut().for_each(|r| *r *= scale);
        k.joint_reward.iter_mut().for_each(|r| *r *= scale);
        k.holding.iter_mut().for_each(|r| *r *= scale);
        k
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::new(BufWriter::new(std::fs::File::create(path)?));
        w.bytes(KERNEL_MAGIC)?;
        w.u32(KERNEL_VERSION)?;
        w.str(&self.config_hash)?;
        w.u64(self.num_servers as u64)?;
        w.u64(self.num_types as u64)?;
        w.u64(self.initial as u64)?;
        w.u64(self.states.len() as u64)?;
        for s in &self.states {
            w.u32s(s)?;
        }
        let ptr = |v: &[usize]| v.iter().map(|&x| x as u64).collect::<Vec<_>>();
        w.u64s(&ptr(&self.sys_ptr))?;
        w.u32s(&self.sys_next)?;
        w.f64s(&self.sys_prob)?;
        w.u64s(&ptr(&self.atomic_ptr))?;
        w.u32s(&self.atomic_code)?;
        w.u32s(&self.atomic_next)?;
        w.f64s(&self.atomic_reward)?;
        w.u64s(&ptr(&self.joint_ptr))?;
        w.u32s(&self.joint_schedule)?;
        w.u32s(&self.joint_post)?;
        w.f64s(&self.joint_reward)?;
        w.f64s(&self.holding)?;
        w.u32s(&self.idle)?;
        use std::io::Write;
        w.into_inner().flush()?;
        Ok(())
    }

    /// Loads a cache file; fails if it was built for a different problem.
    pub fn load(path: &Path, expected_hash: &str) -> Result<Self> {
        let mut r = Reader::new(BufReader::new(std::fs::File::open(path)?));
        r.expect_magic(KERNEL_MAGIC)?;
        let version = r.u32()?;
        if version != KERNEL_VERSION {
            return Err(SpnError::Format(format!("kernel cache version {version}, expected {KERNEL_VERSION}")));
        }
        let config_hash = r.str()?;
        if config_hash != expected_hash {
            return Err(SpnError::HashMismatch { expected: expected_hash.into(), found: config_hash });
        }
        let num_servers = r.u64()? as usize;
        let num_types = r.u64()? as usize;
        let initial = r.u64()? as usize;
        let n = r.u64()? as usize;
        let states = (0..n).map(|_| r.u32s()).collect::<Result<Vec<_>>>()?;
        let ptr = |v: Vec<u64>| v.into_iter().map(|x| x as usize).collect::<Vec<_>>();
        let k = KernelSet {
            config_hash,
            num_servers,
            num_types,
            states,
            initial,
            sys_ptr: ptr(r.u64s()?),
            sys_next: r.u32s()?,
            sys_prob: r.f64s()?,
            atomic_ptr: ptr(r.u64s()?),
            atomic_code: r.u32s()?,
            atomic_next: r.u32s()?,
            atomic_reward: r.f64s()?,
            joint_ptr: ptr(r.u64s()?),
            joint_schedule: r.u32s()?,
            joint_post: r.u32s()?,
            joint_reward: r.f64s()?,
            holding: r.f64s()?,
            idle: r.u32s()?,
        };
        r.finish()?;
        let consistent = k.sys_ptr.len() == n + 1
            && k.atomic_ptr.len() == n + 1
            && k.joint_ptr.len() == n + 1
            && k.holding.len() == n
            && k.idle.len() == n
            && k.sys_ptr.last() == Some(&k.sys_next.len())
            && k.sys_next.len() == k.sys_prob.len()
            && k.atomic_ptr.last() == Some(&k.atomic_code.len())
            && k.atomic_code.len() == k.atomic_next.len()
            && k.joint_ptr.last() == Some(&k.joint_post.len())
            && k.joint_post.len() == k.joint_reward.len()
            && k.joint_schedule.len() == k.joint_post.len() * num_types * num_types;
        if !consistent {
            return Err(SpnError::Format("kernel cache arrays have inconsistent lengths".into()));
        }
        Ok(k)
    }
}

/// Enumerates and builds kernels, reading and refreshing a cache file when given.
pub fn load_or_build(problem: &Problem, limit: usize, cache: Option<&Path>) -> Result<KernelSet> {
    let hash = problem.content_hash();
    if let Some(path) = cache {
        if path.exists() {
            return KernelSet::load(path, &hash);
        }
    }
    let idx = enumerate_states(problem, limit)?;
    let k = build_kernels(problem, &idx)?;
    if let Some(path) = cache {
        k.save(path)?;
    }
    Ok(k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionCountReport {
    pub num_states: usize,
    pub atomic_actions: usize,
    pub max_joint: usize,
    pub mean_joint: f64,
    pub max_feasible_atomic: usize,
    pub mean_feasible_atomic: f64,
}

pub fn action_count_report(k: &KernelSet) -> ActionCountReport {
    let n = k.num_states();
    let joint: Vec<usize> = (0..n).map(|s| k.joint_ptr[s + 1] - k.joint_ptr[s]).collect();
    let atomic: Vec<usize> = (0..n).map(|s| k.atomic_ptr[s + 1] - k.atomic_ptr[s]).collect();
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / n.max(1) as f64;
    ActionCountReport {
        num_states: n,
        atomic_actions: k.num_atomic_actions(),
        max_joint: joint.iter().copied().max().unwrap_or(0),
        mean_joint: mean(&joint),
        max_feasible_atomic: atomic.iter().copied().max().unwrap_or(0),
        mean_feasible_atomic: mean(&atomic),
    }
}
