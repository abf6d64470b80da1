//! PPO over atomic actions: rollouts under the current atomic policy, average-reward
//! TD(lambda) critic targets, per-atomic-step advantages and clipped
//! surrogate updates.

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Problem;
use crate::error::{Result, SpnError};
use crate::policy_net::{
    critic_gradients, masked_log_probs, surrogate_gradients, Adam, Checkpoint, CriticNet, PolicyBatch, PolicyNet, SurrogateSpec,
};
use crate::sim::{empirical_gain, rollout, stream_rng, RolloutMode, SeedSpec, StreamLane, TrajectoryBatch};
use crate::solvers::{evaluate_policy, evaluate_stochastic_atomic, AtomicEvaluation, PolicyTable};
use crate::state_space::KernelSet;

/// Stream reserved for network initialization, far above any round's range.
const INIT_STREAM: u64 = 1 << 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Policy iterations N.
    pub iterations: usize,
    /// Trajectories per iteration M.
    pub trajectories: usize,
    /// Time steps per trajectory T.
    pub horizon: usize,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub critic_epochs: usize,
    pub minibatch: usize,
    /// Entropy bonus weight at iteration 0, annealed linearly to 0.
    pub entropy_coef: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub normalize_advantages: bool,
    /// Upper bound on stored atomic samples M * T * K.
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            trajectories: 16,
            horizon: 2048,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            critic_epochs: 2,
            minibatch: 256,
            entropy_coef: 0.01,
            policy_lr: 3e-4,
            critic_lr: 3e-4,
            max_grad_norm: 0.5,
            hidden: 64,
            normalize_advantages: true,
            max_samples: 1 << 22,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_servers: usize) -> Result<()> {
        let bad = |m: String| Err(SpnError::Config(m));
        if !(0.0..1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1)", self.lambda));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip {} outside (0, 1)", self.clip));
        }
        if self.trajectories == 0 || self.horizon == 0 || self.minibatch == 0 || self.hidden == 0 {
            return bad("trajectories, horizon, minibatch and hidden must be positive".into());
        }
        for (name, v) in [
            ("policy_lr", self.policy_lr),
            ("critic_lr", self.critic_lr),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.entropy_coef.is_finite() && self.entropy_coef >= 0.0) {
            return bad("entropy_coef must be nonnegative".into());
        }
        let samples = self.trajectories.saturating_mul(self.horizon).saturating_mul(num_servers);
        if samples > self.max_samples {
            return Err(SpnError::ResourceLimit(format!(
                "{samples} atomic samples per iteration exceed max_samples = {}",
                self.max_samples
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// TD(lambda) targets of one trajectory.
///
/// `atomic_rewards` has `T * K` entries in (time, step) order, `holding` has
/// `T`, and `v_start[t]` is the bootstrap value at the first atomic state of
/// time `t` (`T + 1` entries, the last for the final state). Horizon weights
/// are `(1 - lambda) lambda^(j - t)` with the last horizon absorbing the tail.
pub fn td_lambda_targets(
    atomic_rewards: &[f64],
    holding: &[f64],
    v_start: &[f64],
    g_bar: f64,
    lambda: f64,
    k: usize,
) -> Vec<f64> {
    let t_len = holding.len();
    let share = g_bar / k as f64;
    // y[t]: lambda-weighted return after time t, bootstrapped at time t+1 onwards
    let mut y = vec![0.0; t_len];
    if t_len > 0 {
        y[t_len - 1] = v_start[t_len];
        for t in (0..t_len - 1).rev() {
            let step_reward: f64 = atomic_rewards[(t + 1) * k..(t + 2) * k].iter().map(|r| r - share).sum::<f64>()
                + holding[t + 1];
            y[t] = (1.0 - lambda) * v_start[t + 1] + lambda * (step_reward + y[t + 1]);
        }
    }
    let mut out = vec![0.0; t_len * k];
    for t in 0..t_len {
        let mut tail = holding[t] + y[t];
        for step in (0..k).rev() {
            tail += atomic_rewards[t * k + step] - share;
            out[t * k + step] = tail;
        }
    }
    out
}

/// Per-atomic-step advantages of one trajectory from critic values `v` at
/// every recorded (time, step) state and `v_final` at the final state.
pub fn advantages(atomic_rewards: &[f64], holding: &[f64], v: &[f64], v_final: f64, g_bar: f64, k: usize) -> Vec<f64> {
    let t_len = holding.len();
    let share = g_bar / k as f64;
    let mut out = vec![0.0; t_len * k];
    for t in 0..t_len {
        for step in 0..k {
            let i = t * k + step;
            out[i] = if step + 1 < k {
                atomic_rewards[i] - share + v[i + 1] - v[i]
            } else {
                let next = if t + 1 < t_len { v[(t + 1) * k] } else { v_final };
                atomic_rewards[i] - share + holding[t] + next - v[i]
            };
        }
    }
    out
}

/// Flattened training samples of a K-step batch in (trajectory, time, step) order.
#[derive(Clone, Debug)]
pub struct Samples {
    pub k: usize,
    pub horizon: usize,
    pub policy: PolicyBatch,
    pub critic_features: Array2<f64>,
    /// Critic features of each trajectory's final state at step 1.
    pub final_features: Array2<f64>,
    pub atomic_rewards: Vec<f64>,
    pub holding: Vec<f64>,
}

impl Samples {
    pub fn from_batch(batch: &TrajectoryBatch, policy: &PolicyNet, critic: &CriticNet) -> Result<Self> {
        if batch.mode != RolloutMode::KStep {
            return Err(SpnError::Unsupported("training uses K-step rollouts".into()));
        }
        let k = batch.num_servers;
        let horizon = batch.trajectories.first().map_or(0, |t| t.steps.len());
        if batch.trajectories.iter().any(|t| t.steps.len() != horizon) {
            return Err(SpnError::Dimension("trajectories of unequal length".into()));
        }
        let n = batch.trajectories.len() * horizon * k;
        let pd = policy.features.policy_dim();
        let cd = critic.features.critic_dim();
        let a = policy.num_actions();
        let mut px = Array2::zeros((n, pd));
        let mut cx = Array2::zeros((n, cd));
        let mut keep = Array2::from_elem((n, a), false);
        let mut actions = Vec::with_capacity(n);
        let mut old = Array2::zeros((n, 1));
        let mut atomic_rewards = Vec::with_capacity(n);
        let mut holding = Vec::with_capacity(batch.trajectories.len() * horizon);
        let mut fx = Array2::zeros((batch.trajectories.len(), cd));
        let num_types = ((a - 1) as f64).sqrt().round() as usize;
        let mut i = 0;
        for (m, tr) in batch.trajectories.iter().enumerate() {
            for rec in &tr.steps {
                if rec.actions.len() != k {
                    return Err(SpnError::Dimension("K-step record with a wrong number of actions".into()));
                }
                for step in 0..k {
                    let s = &rec.states[step];
                    policy.features.write_policy(s, px.row_mut(i).into_slice().expect("row is contiguous"));
                    critic.features.write_critic(s, step + 1, cx.row_mut(i).into_slice().expect("row is contiguous"))?;
                    for (c, &b) in rec.masks[step].iter().enumerate() {
                        keep[[i, c]] = b;
                    }
                    actions.push(rec.actions[step].code(num_types));
                    old[[i, 0]] = rec.log_probs[step];
                    atomic_rewards.push(rec.atomic_rewards[step]);
                    i += 1;
                }
                holding.push(rec.holding);
            }
            critic.features.write_critic(&tr.final_state, 1, fx.row_mut(m).into_slice().expect("row is contiguous"))?;
        }
        Ok(Self {
            k,
            horizon,
            policy: PolicyBatch { features: px, keep, actions, old_log_probs: old, advantages: Array2::zeros((n, 1)) },
            critic_features: cx,
            final_features: fx,
            atomic_rewards,
            holding,
        })
    }

    pub fn num_trajectories(&self) -> usize {
        self.final_features.nrows()
    }

    /// Critic values at every sample and at the final states.
    pub fn values(&self, critic: &CriticNet) -> (Vec<f64>, Vec<f64>) {
        (critic.values(&self.critic_features), critic.values(&self.final_features))
    }

    /// TD(lambda) targets for every sample using critic values `v` (sample
    /// order) and `v_final`.
    pub fn targets(&self, v: &[f64], v_final: &[f64], g_bar: f64, lambda: f64) -> Result<Vec<f64>> {
        let (k, h) = (self.k, self.horizon);
        let per: Vec<Vec<f64>> = (0..self.num_trajectories())
            .into_par_iter()
            .map(|m| {
                let base = m * h * k;
                let mut v_start: Vec<f64> = (0..h).map(|t| v[base + t * k]).collect();
                v_start.push(v_final[m]);
                td_lambda_targets(
                    &self.atomic_rewards[base..base + h * k],
                    &self.holding[m * h..(m + 1) * h],
                    &v_start,
                    g_bar,
                    lambda,
                    k,
                )
            })
            .collect();
        let out: Vec<f64> = per.into_iter().flatten().collect();
        if let Some(i) = out.iter().position(|x| !x.is_finite()) {
            let (m, t, step) = (i / (h * k), (i / k) % h, i % k + 1);
            return Err(SpnError::NonFinite(format!("TD target at trajectory {m}, time {t}, step {step}")));
        }
        Ok(out)
    }

    pub fn advantages(&self, v: &[f64], v_final: &[f64], g_bar: f64) -> Vec<f64> {
        let (k, h) = (self.k, self.horizon);
        (0..self.num_trajectories())
            .into_par_iter()
            .map(|m| {
                let base = m * h * k;
                advantages(
                    &self.atomic_rewards[base..base + h * k],
                    &self.holding[m * h..(m + 1) * h],
                    &v[base..base + h * k],
                    v_final[m],
                    g_bar,
                    k,
                )
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }
}

/// Rescales to zero mean and unit standard deviation.
pub fn normalize(x: &mut [f64]) {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    x.iter_mut().for_each(|a| *a = (*a - mean) / sd);
}

fn minibatches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size).map(|c| c.to_vec()).collect()
}

fn rows<T: Clone>(a: &Array2<T>, idx: &[usize]) -> Array2<T> {
    a.select(Axis(0), idx)
}

/// Losses below this are never read as divergence.
const DIVERGENCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CriticFit {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

fn mse(critic: &CriticNet, x: &Array2<f64>, y: &[f64]) -> f64 {
    let v = critic.values(x);
    v.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len().max(1) as f64
}

/// Minibatch regression of the critic onto `targets`.
pub fn fit_critic(
    critic: &mut CriticNet,
    opt: &mut Adam,
    features: &Array2<f64>,
    targets: &[f64],
    epochs: usize,
    minibatch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CriticFit> {
    if let Some(i) = targets.iter().position(|x| !x.is_finite()) {
        return Err(SpnError::NonFinite(format!("critic target {i}")));
    }
    let y = Array2::from_shape_vec((targets.len(), 1), targets.to_vec()).expect("column vector");
    let initial_loss = mse(critic, features, targets);
    let mut epoch_losses = Vec::with_capacity(epochs);
    let mut above = 0;
    for _ in 0..epochs {
        let mut total = 0.0;
        for mb in minibatches(targets.len(), minibatch, rng) {
            let (loss, grads) = critic_gradients(&critic.mlp, &rows(features, &mb), &rows(&y, &mb))?;
            total += loss * mb.len() as f64;
            opt.step(&mut critic.mlp, &grads);
        }
        let loss = total / targets.len().max(1) as f64;
        epoch_losses.push(loss);
        above = if loss > 10.0 * initial_loss.max(DIVERGENCE_FLOOR) { above + 1 } else { 0 };
        if above >= 3 || !loss.is_finite() {
            return Err(SpnError::Diverged(format!(
                "loss {loss:e} against initial {initial_loss:e} after {} epochs",
                epoch_losses.len()
            )));
        }
    }
    let final_loss = mse(critic, features, targets);
    Ok(CriticFit { initial_loss, final_loss, epoch_losses })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpoStats {
    /// Clipped surrogate on the full batch before the update.
    pub surrogate: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate ascent over shuffled minibatches.
pub fn ppo_update(
    policy: &mut PolicyNet,
    opt: &mut Adam,
    batch: &PolicyBatch,
    spec: &SurrogateSpec,
    epochs: usize,
    minibatch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    let lp = masked_log_probs(&policy.mlp, &batch.features, &batch.keep)?;
    let surrogate = surrogate_from_log_probs(&lp, batch, spec.clip);
    let entropy = lp.rows().into_iter().map(|r| -r.iter().map(|&l| l.exp() * l).sum::<f64>()).sum::<f64>()
        / batch.len().max(1) as f64;
    let mut clipped = 0.0;
    let mut count = 0usize;
    for _ in 0..epochs {
        for mb in minibatches(batch.len(), minibatch, rng) {
            let sub = PolicyBatch {
                features: rows(&batch.features, &mb),
                keep: rows(&batch.keep, &mb),
                actions: mb.iter().map(|&i| batch.actions[i]).collect(),
                old_log_probs: rows(&batch.old_log_probs, &mb),
                advantages: rows(&batch.advantages, &mb),
            };
            let g = surrogate_gradients(&policy.mlp, &sub, spec)?;
            clipped += g.clip_fraction * mb.len() as f64;
            count += mb.len();
            let ascent: Vec<Array2<f64>> = g.grads.into_iter().map(|x| -x).collect();
            opt.step(&mut policy.mlp, &ascent);
        }
    }
    Ok(PpoStats {
        surrogate,
        entropy,
        clip_fraction: if count > 0 { clipped / count as f64 } else { 0.0 },
    })
}

/// Direct evaluation of the mean clipped surrogate without the tape.
pub fn surrogate_objective(policy: &PolicyNet, batch: &PolicyBatch, clip: f64) -> Result<f64> {
    let lp = masked_log_probs(&policy.mlp, &batch.features, &batch.keep)?;
    Ok(surrogate_from_log_probs(&lp, batch, clip))
}

fn surrogate_from_log_probs(lp: &Array2<f64>, batch: &PolicyBatch, clip: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..batch.len() {
        let rho = (lp[[i, batch.actions[i]]] - batch.old_log_probs[[i, 0]]).exp();
        let a = batch.advantages[[i, 0]];
        s += (rho * a).min(rho.clamp(1.0 - clip, 1.0 + clip) * a);
    }
    s / batch.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub gain: f64,
    pub critic_loss: f64,
    pub surrogate: f64,
    pub entropy: f64,
    pub mean_advantage: f64,
    pub max_advantage: f64,
    pub clip_fraction: f64,
    /// Exact gain of the greedy policy after the update, when kernels are given.
    pub greedy_gain: Option<f64>,
    pub wall_clock_secs: f64,
}

pub const REPORT_CSV_HEADER: &str = "config_hash,seed,iteration,gain,critic_loss,surrogate,entropy,\
mean_advantage,max_advantage,clip_fraction,greedy_gain";

impl IterationReport {
    /// CSV row; wall-clock time is left out so reruns compare equal.
    pub fn csv_row(&self, config_hash: &str, seed: u64) -> String {
        let g = self.greedy_gain.map(|x| format!("{x:.12e}")).unwrap_or_default();
        format!(
            "{config_hash},{seed},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{g}",
            self.iteration,
            self.gain,
            self.critic_loss,
            self.surrogate,
            self.entropy,
            self.mean_advantage,
            self.max_advantage,
            self.clip_fraction,
        )
    }
}

/// Greedy action code of the policy at every enumerated state.
pub fn greedy_table(k: &KernelSet, policy: &PolicyNet) -> Result<Vec<u32>> {
    (0..k.num_states())
        .into_par_iter()
        .map(|s| {
            let state = policy.features.state_from_record(&k.states[s]);
            let mask = atomic_mask(k, s);
            Ok(policy.greedy_action(&state, &mask)? as u32)
        })
        .collect()
}

/// Feasibility mask of an enumerated state, read from the kernel.
pub fn atomic_mask(k: &KernelSet, s: usize) -> Vec<bool> {
    let mut mask = vec![false; k.num_atomic_actions()];
    for &c in k.atomic_row(s).0 {
        mask[c as usize] = true;
    }
    mask
}

/// Exact gain of the greedy policy, run with passing-last dynamics.
pub fn exact_greedy_gain(k: &KernelSet, policy: &PolicyNet) -> Result<f64> {
    Ok(evaluate_policy(k, &PolicyTable::StepIndependent(greedy_table(k, policy)?))?.gain)
}

/// Exact evaluation of the stochastic policy run for K atomic steps.
pub fn exact_stochastic_evaluation(k: &KernelSet, policy: &PolicyNet) -> Result<AtomicEvaluation> {
    let probs = (0..k.num_states())
        .into_par_iter()
        .map(|s| policy.probs(&policy.features.state_from_record(&k.states[s]), &atomic_mask(k, s)))
        .collect::<Result<Vec<_>>>()?;
    evaluate_stochastic_atomic(k, &probs)
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub reports: Vec<IterationReport>,
}

/// Initial networks and optimizers of a run.
pub fn initial_checkpoint(problem: &Problem, cfg: &TrainConfig) -> Checkpoint {
    let mut rng = stream_rng(cfg.seed, INIT_STREAM, StreamLane::Init);
    let policy = PolicyNet::new(&problem.cfg, cfg.hidden, &mut rng);
    let critic = CriticNet::new(&problem.cfg, cfg.hidden, &mut rng);
    Checkpoint {
        config_hash: problem.content_hash(),
        iteration: 0,
        seed: cfg.seed,
        policy_opt: Adam::new(&policy.mlp, cfg.policy_lr, cfg.max_grad_norm),
        critic_opt: Adam::new(&critic.mlp, cfg.critic_lr, cfg.max_grad_norm),
        policy: policy.mlp,
        critic: critic.mlp,
    }
}

/// Runs the training loop. `observe` sees every report together with the
/// checkpoint after that iteration, e.g. to persist them as they arrive.
pub fn train(
    problem: &Problem,
    cfg: &TrainConfig,
    kernels: Option<&KernelSet>,
    mut observe: impl FnMut(&IterationReport, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let k = problem.cfg.num_servers;
    cfg.validate(k)?;
    let mut ckpt = initial_checkpoint(problem, cfg);
    let mut policy = ckpt.policy_net(&problem.cfg)?;
    let mut critic = ckpt.critic_net(&problem.cfg)?;
    let mut reports = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let clock = Instant::now();
        let seeds = SeedSpec::for_round(cfg.seed, it as u64, cfg.trajectories);
        let batch = rollout(problem, &policy, RolloutMode::KStep, cfg.horizon, &seeds)?;
        let g_bar = empirical_gain(&batch);
        let mut samples = Samples::from_batch(&batch, &policy, &critic)?;
        drop(batch);

        let (v_prev, vf_prev) = samples.values(&critic);
        let targets = samples.targets(&v_prev, &vf_prev, g_bar, cfg.lambda)?;
        let mut rng = stream_rng(cfg.seed, (it as u64) << 24, StreamLane::Shuffle);
        let fit = fit_critic(
            &mut critic,
            &mut ckpt.critic_opt,
            &samples.critic_features,
            &targets,
            cfg.critic_epochs,
            cfg.minibatch,
            &mut rng,
        )?;

        let (v, vf) = samples.values(&critic);
        let mut adv = samples.advantages(&v, &vf, g_bar);
        if let Some(i) = adv.iter().position(|x| !x.is_finite()) {
            return Err(SpnError::NonFinite(format!("advantage of sample {i}")));
        }
        let mean_advantage = adv.iter().sum::<f64>() / adv.len().max(1) as f64;
        let max_advantage = adv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if cfg.normalize_advantages {
            normalize(&mut adv);
        }
        let n = adv.len();
        samples.policy.advantages = Array2::from_shape_vec((n, 1), adv).expect("column vector");

        let anneal = 1.0 - it as f64 / cfg.iterations as f64;
        let spec = SurrogateSpec { clip: cfg.clip, entropy_coef: cfg.entropy_coef * anneal };
        let mut rng = stream_rng(cfg.seed, ((it as u64) << 24) + 1, StreamLane::Shuffle);
        let stats = ppo_update(&mut policy, &mut ckpt.policy_opt, &samples.policy, &spec, cfg.epochs, cfg.minibatch, &mut rng)?;

        let greedy_gain = kernels.map(|kset| exact_greedy_gain(kset, &policy)).transpose()?;
        ckpt.policy = policy.mlp.clone();
        ckpt.critic = critic.mlp.clone();
        ckpt.iteration = it as u64 + 1;
        let report = IterationReport {
            iteration: it,
            gain: g_bar,
            critic_loss: fit.final_loss,
            surrogate: stats.surrogate,
            entropy: stats.entropy,
            mean_advantage,
            max_advantage,
            clip_fraction: stats.clip_fraction,
            greedy_gain,
            wall_clock_secs: clock.elapsed().as_secs_f64(),
        };
        observe(&report, &ckpt)?;
        reports.push(report);
    }
    Ok(TrainOutcome { checkpoint: ckpt, reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_targets_bootstrap_one_step() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let h = [-1.0, -2.0];
        let v = [10.0, 20.0, 30.0];
        let t = td_lambda_targets(&r, &h, &v, 0.0, 0.0, 2);
        assert_eq!(t, vec![1.0 + 2.0 - 1.0 + 20.0, 2.0 - 1.0 + 20.0, 3.0 + 4.0 - 2.0 + 30.0, 4.0 - 2.0 + 30.0]);
    }

    #[test]
    fn zero_inputs_give_zero_targets_and_advantages() {
        let z = vec![0.0; 6];
        assert!(td_lambda_targets(&z, &z[..3], &[0.0; 4], 0.0, 0.9, 2).iter().all(|&x| x == 0.0));
        assert!(advantages(&z, &z[..3], &z, 0.0, 0.0, 2).iter().all(|&x| x == 0.0));
    }
}
