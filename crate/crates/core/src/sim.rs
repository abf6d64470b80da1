//! Seeded trajectory simulation of atomic policies.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::config::Problem;
use crate::dynamics::{apply_atomic_unchecked, atomic_reward, feasible_mask, holding, system_update_sample};
use crate::error::{Result, SpnError};
use crate::state::{AtomicAction, SystemState};
use crate::state_space::KernelSet;

/// Probability mass a policy may leave on infeasible actions.
pub const MASK_TOL: f64 = 1e-12;

const BATCH_MAGIC: &[u8; 8] = b"SPNBATCH";
const BATCH_VERSION: u32 = 1;

/// A stochastic atomic policy. `step` is the 1-based atomic step; policies
/// that ignore it are step-independent.
pub trait AtomicPolicy: Sync {
    fn action_probs(&self, state: &SystemState, step: usize, mask: &[bool]) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RolloutMode {
    /// Exactly K atomic decisions per time step.
    KStep,
    /// The time step ends at the first Pass or after K assignments.
    PassingLast,
}

impl RolloutMode {
    fn code(self) -> u32 {
        match self {
            RolloutMode::KStep => 0,
            RolloutMode::PassingLast => 1,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(RolloutMode::KStep),
            1 => Ok(RolloutMode::PassingLast),
            _ => Err(SpnError::Format(format!("unknown rollout mode {c}"))),
        }
    }
}

/// What a random stream is used for; keeps streams of different consumers apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamLane {
    Dynamics = 0,
    Policy = 1,
    Shuffle = 2,
    Init = 3,
}

/// Master seed plus one stream id per trajectory.
///
/// Every generator is ChaCha8 keyed by the master seed with a distinct 64-bit
/// stream number `4 * stream + lane`, so streams never overlap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedSpec {
    pub master: u64,
    pub streams: Vec<u64>,
}

impl SeedSpec {
    /// Streams for `count` trajectories of a given round (e.g. a training
    /// iteration); rounds use disjoint stream ranges.
    pub fn for_round(master: u64, round: u64, count: usize) -> Self {
        let base = round << 24;
        Self { master, streams: (0..count as u64).map(|m| base + m).collect() }
    }

    pub fn rng(&self, m: usize, lane: StreamLane) -> ChaCha8Rng {
        stream_rng(self.master, self.streams[m], lane)
    }
}

pub fn stream_rng(master: u64, stream: u64, lane: StreamLane) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream.wrapping_mul(4) + lane as u64);
    rng
}

/// One time step of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// States before each atomic action, then the post-decision state.
    pub states: Vec<SystemState>,
    pub actions: Vec<AtomicAction>,
    pub log_probs: Vec<f64>,
    pub masks: Vec<Vec<bool>>,
    pub atomic_rewards: Vec<f64>,
    /// Holding reward of the post-decision state.
    pub holding: f64,
}

impl StepRecord {
    pub fn post_state(&self) -> &SystemState {
        self.states.last().expect("record holds at least one state")
    }

    /// Atomic rewards summed in order, then the holding reward.
    pub fn reward(&self) -> f64 {
        let mut r = 0.0;
        for &x in &self.atomic_rewards {
            r += x;
        }
        r + self.holding
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    /// Pre-decision state after the last recorded time step.
    pub final_state: SystemState,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward()).sum()
    }

    pub fn gain(&self) -> f64 {
        self.total_reward() / self.steps.len().max(1) as f64
    }

    /// First state of time step `t`, with `t == T` giving the final state.
    pub fn start_state(&self, t: usize) -> &SystemState {
        if t < self.steps.len() {
            &self.steps[t].states[0]
        } else {
            &self.final_state
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub config_hash: String,
    pub mode: RolloutMode,
    pub num_servers: usize,
    pub seeds: SeedSpec,
    pub trajectories: Vec<Trajectory>,
}

/// Draws a code from a probability vector with a uniform variate, skipping
/// zero-probability entries.
pub fn draw_code(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (c, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = c;
            if u < acc {
                return c;
            }
        }
    }
    last
}

fn check_probs(probs: &[f64], mask: &[bool]) -> Result<()> {
    if probs.len() != mask.len() {
        return Err(SpnError::Dimension(format!(
            "policy returned {} probabilities for {} actions",
            probs.len(),
            mask.len()
        )));
    }
    for (c, (&p, &ok)) in probs.iter().zip(mask).enumerate() {
        if !p.is_finite() {
            return Err(SpnError::NonFinite(format!("probability of action {c}")));
        }
        if !ok && p > MASK_TOL {
            return Err(SpnError::MaskedMass { action: c, mass: p });
        }
    }
    Ok(())
}

/// Simulates one trajectory of `horizon` time steps from `start`.
pub fn simulate(
    problem: &Problem,
    policy: &dyn AtomicPolicy,
    mode: RolloutMode,
    horizon: usize,
    start: SystemState,
    dyn_rng: &mut ChaCha8Rng,
    pol_rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let cfg = &problem.cfg;
    let extra = problem.extra();
    let jn = cfg.num_service_types;
    let k = cfg.num_servers;
    let mut state = start;
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut rec = StepRecord {
            states: vec![state.clone()],
            actions: Vec::with_capacity(k),
            log_probs: Vec::with_capacity(k),
            masks: Vec::with_capacity(k),
            atomic_rewards: Vec::with_capacity(k),
            holding: 0.0,
        };
        let mut assigned = 0;
        for step in 1..=k {
            let mask = feasible_mask(cfg, &state, extra);
            let probs = policy.action_probs(&state, step, &mask)?;
            check_probs(&probs, &mask)?;
            let code = draw_code(&probs, pol_rng.random::<f64>());
            let action = AtomicAction::from_code(code, jn);
            rec.actions.push(action);
            rec.log_probs.push(probs[code].ln());
            rec.masks.push(mask);
            rec.atomic_rewards.push(atomic_reward(cfg, action));
            if action.is_pass() {
                if mode == RolloutMode::PassingLast {
                    break;
                }
            } else {
                apply_atomic_unchecked(cfg, &mut state, action);
                assigned += 1;
            }
            rec.states.push(state.clone());
            if mode == RolloutMode::PassingLast && assigned == k {
                break;
            }
        }
        rec.holding = holding(cfg, &state);
        state = system_update_sample(cfg, &state, dyn_rng);
        steps.push(rec);
    }
    Ok(Trajectory { steps, final_state: state })
}

/// Rolls out `seeds.streams.len()` trajectories in parallel; the batch is
/// assembled in trajectory order, so it does not depend on the worker count.
pub fn rollout(
    problem: &Problem,
    policy: &dyn AtomicPolicy,
    mode: RolloutMode,
    horizon: usize,
    seeds: &SeedSpec,
) -> Result<TrajectoryBatch> {
    let start = SystemState::initial(&problem.cfg);
    let trajectories = (0..seeds.streams.len())
        .into_par_iter()
        .map(|m| {
            let mut d = seeds.rng(m, StreamLane::Dynamics);
            let mut p = seeds.rng(m, StreamLane::Policy);
            simulate(problem, policy, mode, horizon, start.clone(), &mut d, &mut p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryBatch {
        config_hash: problem.content_hash(),
        mode,
        num_servers: problem.cfg.num_servers,
        seeds: seeds.clone(),
        trajectories,
    })
}

/// Average reward per time step over the whole batch.
pub fn empirical_gain(batch: &TrajectoryBatch) -> f64 {
    let steps: usize = batch.trajectories.iter().map(|t| t.steps.len()).sum();
    let total: f64 = batch.trajectories.iter().map(|t| t.total_reward()).sum();
    total / steps.max(1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainStats {
    pub mean: f64,
    /// Standard error from batch means.
    pub stderr: f64,
    pub first_half: f64,
    pub second_half: f64,
}

const BATCHES_PER_TRAJECTORY: usize = 10;

/// Gain with a batch-means standard error; each trajectory is cut into equal
/// consecutive blocks whose means are treated as independent.
pub fn gain_stats(batch: &TrajectoryBatch) -> GainStats {
    let mut means = Vec::new();
    let (mut first, mut second, mut nf, mut ns) = (0.0, 0.0, 0usize, 0usize);
    for tr in &batch.trajectories {
        let t_len = tr.steps.len();
        let b = BATCHES_PER_TRAJECTORY.min(t_len.max(1));
        let size = t_len / b.max(1);
        if size > 0 {
            for i in 0..b {
                let s: f64 = tr.steps[i * size..(i + 1) * size].iter().map(|r| r.reward()).sum();
                means.push(s / size as f64);
            }
        }
        for (t, r) in tr.steps.iter().enumerate() {
            if t < t_len / 2 {
                first += r.reward();
                nf += 1;
            } else {
                second += r.reward();
                ns += 1;
            }
        }
    }
    let n = means.len() as f64;
    let mean = empirical_gain(batch);
    let bm = means.iter().sum::<f64>() / n.max(1.0);
    let var = if means.len() > 1 {
        means.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    GainStats {
        mean,
        stderr: (var / n.max(1.0)).sqrt(),
        first_half: first / nf.max(1) as f64,
        second_half: second / ns.max(1) as f64,
    }
}

/// Replays a batch: masks equal the feasible sets, recorded actions are
/// feasible, atomic transitions are consistent, and system updates match a
/// fresh draw from the stored dynamics streams.
pub fn replay_check(problem: &Problem, batch: &TrajectoryBatch) -> Result<()> {
    let cfg = &problem.cfg;
    let extra = problem.extra();
    let jn = cfg.num_service_types;
    for (m, tr) in batch.trajectories.iter().enumerate() {
        let mut rng = batch.seeds.rng(m, StreamLane::Dynamics);
        let mut expected_start = SystemState::initial(cfg);
        for (t, rec) in tr.steps.iter().enumerate() {
            let fail = |what: &str| SpnError::Format(format!("trajectory {m}, time {t}: {what}"));
            if rec.states[0] != expected_start {
                return Err(fail("start state does not follow the system update"));
            }
            let mut state = rec.states[0].clone();
            let mut pos = 0;
            for (i, &a) in rec.actions.iter().enumerate() {
                let mask = feasible_mask(cfg, &state, extra);
                if mask != rec.masks[i] || !mask[a.code(jn)] {
                    return Err(fail("mask or action inconsistent with feasibility"));
                }
                if a.is_pass() && batch.mode == RolloutMode::PassingLast {
                    break;
                }
                apply_atomic_unchecked(cfg, &mut state, a);
                pos += 1;
                if rec.states[pos] != state {
                    return Err(fail("atomic transition mismatch"));
                }
            }
            if rec.post_state() != &state || rec.holding != holding(cfg, &state) {
                return Err(fail("post-decision state or holding mismatch"));
            }
            expected_start = system_update_sample(cfg, &state, &mut rng);
        }
        if tr.final_state != expected_start {
            return Err(SpnError::Format(format!("trajectory {m}: final state mismatch")));
        }
    }
    Ok(())
}

impl TrajectoryBatch {
    pub fn num_steps(&self) -> usize {
        self.trajectories.iter().map(|t| t.steps.len()).sum()
    }

    pub fn save(&self, path: &Path, num_types: usize) -> Result<()> {
        let mut w = Writer::new(BufWriter::new(std::fs::File::create(path)?));
        w.bytes(BATCH_MAGIC)?;
        w.u32(BATCH_VERSION)?;
        w.str(&self.config_hash)?;
        w.u64(self.seeds.master)?;
        w.u64s(&self.seeds.streams)?;
        w.u32(self.mode.code())?;
        w.u64(self.num_servers as u64)?;
        w.u64(num_types as u64)?;
        w.u64(self.trajectories.len() as u64)?;
        for tr in &self.trajectories {
            w.u64(tr.steps.len() as u64)?;
            for rec in &tr.steps {
                w.u64(rec.states.len() as u64)?;
                for s in &rec.states {
                    w.u32s(&s.to_record())?;
                }
                w.u32s(&rec.actions.iter().map(|a| a.code(num_types) as u32).collect::<Vec<_>>())?;
                w.f64s(&rec.log_probs)?;
                for mask in &rec.masks {
                    w.u32s(&mask.iter().map(|&b| b as u32).collect::<Vec<_>>())?;
                }
                w.f64s(&rec.atomic_rewards)?;
                w.f64(rec.holding)?;
            }
            w.u32s(&tr.final_state.to_record())?;
        }
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn load(path: &Path, problem: &Problem) -> Result<Self> {
        let cfg = &problem.cfg;
        let mut r = Reader::new(BufReader::new(std::fs::File::open(path)?));
        r.expect_magic(BATCH_MAGIC)?;
        let version = r.u32()?;
        if version != BATCH_VERSION {
            return Err(SpnError::Format(format!("batch log version {version}, expected {BATCH_VERSION}")));
        }
        let config_hash = r.str()?;
        let expected = problem.content_hash();
        if config_hash != expected {
            return Err(SpnError::HashMismatch { expected, found: config_hash });
        }
        let master = r.u64()?;
        let streams = r.u64s()?;
        let mode = RolloutMode::from_code(r.u32()?)?;
        let num_servers = r.u64()? as usize;
        let num_types = r.u64()? as usize;
        let m = r.u64()? as usize;
        let mut trajectories = Vec::with_capacity(m);
        for _ in 0..m {
            let t_len = r.u64()? as usize;
            let mut steps = Vec::with_capacity(t_len);
            for _ in 0..t_len {
                let ns = r.u64()? as usize;
                let states = (0..ns)
                    .map(|_| SystemState::from_record(cfg, &r.u32s()?))
                    .collect::<Result<Vec<_>>>()?;
                let actions: Vec<AtomicAction> =
                    r.u32s()?.into_iter().map(|c| AtomicAction::from_code(c as usize, num_types)).collect();
                let log_probs = r.f64s()?;
                let masks = (0..actions.len())
                    .map(|_| Ok(r.u32s()?.into_iter().map(|b| b != 0).collect()))
                    .collect::<Result<Vec<_>>>()?;
                let atomic_rewards = r.f64s()?;
                let holding = r.f64()?;
                steps.push(StepRecord { states, actions, log_probs, masks, atomic_rewards, holding });
            }
            let final_state = SystemState::from_record(cfg, &r.u32s()?)?;
            trajectories.push(Trajectory { steps, final_state });
        }
        r.finish()?;
        Ok(Self {
            config_hash,
            mode,
            num_servers,
            seeds: SeedSpec { master, streams },
            trajectories,
        })
    }

    /// Per-trajectory gains as CSV with the config hash and seed on every row.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("config_hash,seed,trajectory,stream,steps,gain\n");
        for (m, tr) in self.trajectories.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{:.12e}\n",
                self.config_hash,
                self.seeds.master,
                m,
                self.seeds.streams[m],
                tr.steps.len(),
                tr.gain()
            ));
        }
        out
    }
}

/// Deterministic step-independent policy given as an action code per
/// enumerated state.
#[derive(Clone, Debug)]
pub struct TablePolicy {
    ids: HashMap<Vec<u32>, usize>,
    codes: Vec<u32>,
    num_actions: usize,
}

impl TablePolicy {
    pub fn new(k: &KernelSet, codes: Vec<u32>) -> Self {
        let ids = k.states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Self { ids, codes, num_actions: k.num_atomic_actions() }
    }

    pub fn code(&self, state: &SystemState) -> Result<u32> {
        self.ids
            .get(&state.to_record())
            .map(|&i| self.codes[i])
            .ok_or_else(|| SpnError::NotClosed { from: "policy table".into(), to: state.to_string() })
    }
}

impl AtomicPolicy for TablePolicy {
    fn action_probs(&self, state: &SystemState, _step: usize, _mask: &[bool]) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.num_actions];
        p[self.code(state)? as usize] = 1.0;
        Ok(p)
    }
}

/// Deterministic step-dependent policy: one code table per atomic step.
#[derive(Clone, Debug)]
pub struct StepTablePolicy {
    ids: HashMap<Vec<u32>, usize>,
    tables: Vec<Vec<u32>>,
    num_actions: usize,
}

impl StepTablePolicy {
    pub fn new(k: &KernelSet, tables: Vec<Vec<u32>>) -> Self {
        let ids = k.states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Self { ids, tables, num_actions: k.num_atomic_actions() }
    }
}

impl AtomicPolicy for StepTablePolicy {
    fn action_probs(&self, state: &SystemState, step: usize, _mask: &[bool]) -> Result<Vec<f64>> {
        if step == 0 || step > self.tables.len() {
            return Err(SpnError::StepIndex { step, max: self.tables.len() });
        }
        let i = *self
            .ids
            .get(&state.to_record())
            .ok_or_else(|| SpnError::NotClosed { from: "policy table".into(), to: state.to_string() })?;
        let mut p = vec![0.0; self.num_actions];
        p[self.tables[step - 1][i] as usize] = 1.0;
        Ok(p)
    }
}

/// Always passes.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassPolicy;

impl AtomicPolicy for PassPolicy {
    fn action_probs(&self, _state: &SystemState, _step: usize, mask: &[bool]) -> Result<Vec<f64>> {
        let mut p = vec![0.0; mask.len()];
        p[0] = 1.0;
        Ok(p)
    }
}

/// Per-time-step post-decision states and rewards of two rollouts that
/// differ; empty when they agree exactly.
pub fn compare_post_decisions(a: &TrajectoryBatch, b: &TrajectoryBatch) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (m, (ta, tb)) in a.trajectories.iter().zip(&b.trajectories).enumerate() {
        for (t, (ra, rb)) in ta.steps.iter().zip(&tb.steps).enumerate() {
            if ra.post_state() != rb.post_state() || ra.reward().to_bits() != rb.reward().to_bits() {
                out.push((m, t));
            }
        }
        if ta.steps.len() != tb.steps.len() {
            out.push((m, ta.steps.len().min(tb.steps.len())));
        }
    }
    out
}
