use std::collections::BTreeMap;

use super::chain::{ChainSolution, InducedChain};
use super::PolicyTable;
use crate::error::{Result, SpnError};
use crate::state_space::KernelSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    Joint,
    AtomicStepDependent,
    AtomicStepIndependent,
}

impl PolicyTable {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyTable::Joint(_) => PolicyKind::Joint,
            PolicyTable::StepDependent(_) => PolicyKind::AtomicStepDependent,
            PolicyTable::StepIndependent(_) => PolicyKind::AtomicStepIndependent,
        }
    }
}

fn step(k: &KernelSet, s: usize, code: u32) -> Result<usize> {
    k.atomic_successor(s, code as usize).ok_or_else(|| SpnError::Infeasible {
        action: format!("code {code}"),
        state: format!("#{s} {:?}", k.states[s]),
    })
}

/// Post-decision state of one time step from `s` and its reward: service
/// rewards only for atomic policies, the full schedule reward for joint ones.
fn run_time_step(k: &KernelSet, policy: &PolicyTable, s: usize) -> Result<(usize, f64)> {
    let steps = k.num_servers;
    let mut cur = s;
    let mut r = 0.0;
    match policy {
        PolicyTable::Joint(entries) => {
            let e = entries[s];
            if !k.joint_range(s).contains(&e) {
                return Err(SpnError::Infeasible { action: format!("joint entry {e}"), state: format!("#{s}") });
            }
            return Ok((k.joint_post[e] as usize, k.joint_reward[e]));
        }
        PolicyTable::StepDependent(tables) => {
            if tables.len() != steps {
                return Err(SpnError::StepIndex { step: tables.len(), max: steps });
            }
            for table in tables {
                let c = table[cur];
                cur = step(k, cur, c)?;
                r += k.atomic_reward[c as usize];
            }
        }
        // passing-last dynamics: the first Pass ends the time step
        PolicyTable::StepIndependent(table) => {
            for _ in 0..steps {
                let c = table[cur];
                if c == 0 {
                    break;
                }
                cur = step(k, cur, c)?;
                r += k.atomic_reward[c as usize];
            }
        }
    }
    Ok((cur, r))
}

/// The per-time-step chain of a deterministic policy.
pub fn induced_chain(k: &KernelSet, policy: &PolicyTable) -> Result<InducedChain> {
    let n = k.num_states();
    let mut rows = Vec::with_capacity(n);
    let mut reward = Vec::with_capacity(n);
    for s in 0..n {
        let (post, r) = run_time_step(k, policy, s)?;
        let r = match policy {
            PolicyTable::Joint(_) => r,
            _ => r + k.holding[post],
        };
        let (next, prob) = k.sys_row(post);
        rows.push(next.iter().copied().zip(prob.iter().copied()).collect());
        reward.push(r);
    }
    Ok(InducedChain { rows, reward })
}

/// Gain and relative values of a deterministic policy, zero at the reference state.
pub fn evaluate_policy(k: &KernelSet, policy: &PolicyTable) -> Result<ChainSolution> {
    induced_chain(k, policy)?.solve(k.initial)
}

/// Long-run average reward earned at each atomic step (holding folded into
/// the last) under a policy run for K atomic steps per time step.
pub fn per_step_gains(k: &KernelSet, policy: &PolicyTable) -> Result<Vec<f64>> {
    let steps = k.num_servers;
    let tables: Vec<&[u32]> = match policy {
        PolicyTable::StepDependent(t) => t.iter().map(|x| x.as_slice()).collect(),
        PolicyTable::StepIndependent(t) => vec![t.as_slice(); steps],
        PolicyTable::Joint(_) => {
            return Err(SpnError::Unsupported("per-step gains of a joint policy".into()))
        }
    };
    let rho1 = induced_chain(k, &PolicyTable::StepDependent(tables.iter().map(|t| t.to_vec()).collect()))?
        .stationary()?;
    let n = k.num_states();
    let mut rho = rho1;
    let mut gains = Vec::with_capacity(steps);
    for (ell, table) in tables.iter().enumerate() {
        let mut g = 0.0;
        let mut next = vec![0.0; n];
        for s in 0..n {
            if rho[s] == 0.0 {
                continue;
            }
            let c = table[s];
            let t = step(k, s, c)?;
            g += rho[s] * k.atomic_reward[c as usize];
            if ell + 1 == steps {
                g += rho[s] * k.holding[t];
            }
            next[t] += rho[s];
        }
        gains.push(g);
        rho = next;
    }
    Ok(gains)
}

/// Exact evaluation of a stochastic step-independent policy run for K atomic
/// steps per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicEvaluation {
    pub gain: f64,
    /// Relative value tables per atomic step (step 1 first), step 1 zero at
    /// the reference state.
    pub tables: Vec<Vec<f64>>,
    /// Stationary distribution of the state seen at each atomic step.
    pub step_distributions: Vec<Vec<f64>>,
    pub step_gains: Vec<f64>,
}

/// `probs[s][code]` is the action distribution at state `s`.
pub fn evaluate_stochastic_atomic(k: &KernelSet, probs: &[Vec<f64>]) -> Result<AtomicEvaluation> {
    let n = k.num_states();
    let steps = k.num_servers;
    for s in 0..n {
        let (codes, _) = k.atomic_row(s);
        for (c, &p) in probs[s].iter().enumerate() {
            if p > 1e-12 && codes.binary_search(&(c as u32)).is_err() {
                return Err(SpnError::MaskedMass { action: c, mass: p });
            }
        }
    }
    let mean_reward: Vec<f64> = (0..n)
        .map(|s| {
            let (codes, _) = k.atomic_row(s);
            codes.iter().map(|&c| probs[s][c as usize] * k.atomic_reward[c as usize]).sum()
        })
        .collect();

    let mut rows = Vec::with_capacity(n);
    let mut reward = Vec::with_capacity(n);
    for s1 in 0..n {
        let mut dist: BTreeMap<usize, f64> = BTreeMap::from([(s1, 1.0)]);
        let mut r = 0.0;
        for _ in 0..steps {
            let mut next = BTreeMap::new();
            for (&s, &p) in &dist {
                r += p * mean_reward[s];
                let (codes, succ) = k.atomic_row(s);
                for (&c, &t) in codes.iter().zip(succ) {
                    let q = probs[s][c as usize];
                    if q > 0.0 {
                        *next.entry(t as usize).or_insert(0.0) += p * q;
                    }
                }
            }
            dist = next;
        }
        let mut row: BTreeMap<u32, f64> = BTreeMap::new();
        for (&post, &p) in &dist {
            r += p * k.holding[post];
            let (next, prob) = k.sys_row(post);
            for (&t, &q) in next.iter().zip(prob) {
                *row.entry(t).or_insert(0.0) += p * q;
            }
        }
        rows.push(row.into_iter().collect());
        reward.push(r);
    }
    let chain = InducedChain { rows, reward };
    let sol = chain.solve(k.initial)?;
    let gain = sol.gain;
    let share = gain / steps as f64;

    let mut tables = vec![Vec::new(); steps];
    let mut after: Vec<f64> = (0..n).map(|t| k.holding[t] + k.expect_sys(t, &sol.h)).collect();
    for step in (0..steps).rev() {
        let v: Vec<f64> = (0..n)
            .map(|s| {
                let (codes, succ) = k.atomic_row(s);
                codes
                    .iter()
                    .zip(succ)
                    .map(|(&c, &t)| probs[s][c as usize] * (k.atomic_reward[c as usize] - share + after[t as usize]))
                    .sum()
            })
            .collect();
        after = v.clone();
        tables[step] = v;
    }
    let shift = tables[0][k.initial];
    for t in tables.iter_mut() {
        t.iter_mut().for_each(|v| *v -= shift);
    }

    let mut rho = chain.stationary()?;
    let mut step_distributions = Vec::with_capacity(steps);
    let mut step_gains = Vec::with_capacity(steps);
    for ell in 0..steps {
        let mut next = vec![0.0; n];
        let mut g = 0.0;
        for s in 0..n {
            if rho[s] == 0.0 {
                continue;
            }
            g += rho[s] * mean_reward[s];
            let (codes, succ) = k.atomic_row(s);
            for (&c, &t) in codes.iter().zip(succ) {
                let q = probs[s][c as usize];
                if q > 0.0 {
                    next[t as usize] += rho[s] * q;
                    if ell + 1 == steps {
                        g += rho[s] * q * k.holding[t as usize];
                    }
                }
            }
        }
        step_distributions.push(rho);
        step_gains.push(g);
        rho = next;
    }
    Ok(AtomicEvaluation { gain, tables, step_distributions, step_gains })
}
