//! Policies named on the command line.

use std::path::{Path, PathBuf};

use spn_core::policy_net::{Checkpoint, GreedyPolicy, PolicyNet};
use spn_core::ppo::atomic_mask;
use spn_core::scenarios::{baseline_policy, BaselineKind, ScenarioSpec};
use spn_core::sim::{AtomicPolicy, PassPolicy};
use spn_core::solvers::{evaluate_stochastic_atomic, AtomicEvaluation};
use spn_core::state_space::KernelSet;
use spn_core::{Problem, Result, SystemState};

use crate::error::CliError;
use crate::PolicyMode;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicySpec {
    Baseline(BaselineKind),
    Pass,
    Checkpoint(PathBuf),
}

impl PolicySpec {
    /// A baseline name, `pass`, or a checkpoint path.
    pub fn parse(s: &str) -> Self {
        match s {
            "pass" => PolicySpec::Pass,
            _ => match s.parse::<BaselineKind>() {
                Ok(k) => PolicySpec::Baseline(k),
                Err(_) => PolicySpec::Checkpoint(PathBuf::from(s)),
            },
        }
    }
}

enum Inner {
    Net(PolicyNet, PolicyMode),
    Fixed(Box<dyn AtomicPolicy>),
}

/// A policy ready to roll out.
pub struct Resolved {
    pub label: String,
    inner: Inner,
    /// One action with probability one at every state.
    pub deterministic: bool,
}

impl AtomicPolicy for Resolved {
    fn action_probs(&self, state: &SystemState, step: usize, mask: &[bool]) -> Result<Vec<f64>> {
        match &self.inner {
            Inner::Net(net, PolicyMode::Greedy) => GreedyPolicy(net).action_probs(state, step, mask),
            Inner::Net(net, PolicyMode::Stochastic) => net.action_probs(state, step, mask),
            Inner::Fixed(p) => p.action_probs(state, step, mask),
        }
    }
}

fn load_checkpoint(path: &Path, problem: &Problem) -> std::result::Result<PolicyNet, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "{}: no such checkpoint (baselines are max-weight, greedy, random, pass)",
            path.display()
        )));
    }
    Ok(Checkpoint::load_for(path, problem)?.policy_net(&problem.cfg)?)
}

pub fn resolve(
    spec: &PolicySpec,
    label: &str,
    problem: &Problem,
    scenario: Option<&ScenarioSpec>,
    mode: PolicyMode,
) -> std::result::Result<Resolved, CliError> {
    let (inner, deterministic) = match spec {
        PolicySpec::Pass => (Inner::Fixed(Box::new(PassPolicy)), true),
        PolicySpec::Baseline(kind) => {
            let p = baseline_policy(*kind, problem, scenario)?;
            (Inner::Fixed(p), *kind != BaselineKind::Random)
        }
        PolicySpec::Checkpoint(path) => {
            let net = load_checkpoint(path, problem)?;
            (Inner::Net(net, mode), mode == PolicyMode::Greedy)
        }
    };
    Ok(Resolved { label: label.to_string(), inner, deterministic })
}

/// Exact evaluation of a step-independent policy run for K atomic steps,
/// from its step-1 distribution at every enumerated state.
pub fn exact_evaluation(k: &KernelSet, problem: &Problem, policy: &Resolved) -> Result<AtomicEvaluation> {
    let probs = (0..k.num_states())
        .map(|s| {
            let state = SystemState::from_record(&problem.cfg, &k.states[s])?;
            policy.action_probs(&state, 1, &atomic_mask(k, s))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_stochastic_atomic(k, &probs)
}
