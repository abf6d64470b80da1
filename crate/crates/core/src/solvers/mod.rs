//! Exact average-reward solvers over enumerated state spaces.

pub mod atomic;
pub mod certificate;
pub mod chain;
pub mod evaluate;
pub mod passing_last;
pub mod rvi;

pub use atomic::{atomic_residuals, solve_atomic_step_dependent};
pub use certificate::{verify_kernels, verify_instance, Certificate, CheckRecord, CheckStatus, VerifyOptions};
pub use chain::{ChainSolution, InducedChain};
pub use evaluate::{
    evaluate_policy, evaluate_stochastic_atomic, induced_chain, per_step_gains, AtomicEvaluation,
    PolicyKind,
};
pub use passing_last::solve_passing_last;
pub use rvi::{original_residual, solve_original_rvi};

use crate::error::{Result, SpnError};
use crate::state_space::KernelSet;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Span-seminorm stopping tolerance of value iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Finish value iteration with exact policy-iteration steps.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200_000, polish: true }
    }
}

/// A deterministic policy over the enumerated states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicyTable {
    /// Joint schedule per state, as an entry of the kernel's joint lists.
    Joint(Vec<usize>),
    /// Atomic action code per step (outer, `0..K`) and state.
    StepDependent(Vec<Vec<u32>>),
    /// Atomic action code per state, used at every step.
    StepIndependent(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub gain: f64,
    /// Relative values, zero at the reference state.
    pub h: Vec<f64>,
    /// Per-step tables of the step-dependent atomic solver (step 1 first);
    /// empty for the other solvers.
    pub step_tables: Vec<Vec<f64>>,
    pub policy: PolicyTable,
    pub iterations: usize,
    pub span: f64,
    /// Whether the aperiodicity transform was switched on.
    pub damped: bool,
}

/// Relative slack under which two action values count as tied.
const TIE_REL: f64 = 1e-10;

#[inline]
pub(crate) fn tie_tol(best: f64) -> f64 {
    TIE_REL * (1.0 + best.abs())
}

/// Chooses among `(action, value)` candidates listed in ascending action order:
/// the incumbent if it is tied with the best, otherwise the first tied action.
/// Returns the best value and the chosen action.
pub(crate) fn pick(cands: &[(u32, f64)], incumbent: Option<u32>) -> (f64, u32) {
    let best = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tol(best);
    if let Some(inc) = incumbent {
        if cands.iter().any(|&(a, v)| a == inc && v >= best - tol) {
            return (best, inc);
        }
    }
    let a = cands.iter().find(|c| c.1 >= best - tol).map(|c| c.0).unwrap_or(0);
    (best, a)
}

/// Outcome of the shared relative value iteration loop.
pub(crate) struct RviOutcome {
    pub gain: f64,
    pub h: Vec<f64>,
    pub iterations: usize,
    pub span: f64,
    pub damped: bool,
}

/// Damping weight of the aperiodicity transform.
const DAMPING_ALPHA: f64 = 0.999;
/// Window over which a non-shrinking span is read as oscillation.
const OSCILLATION_WINDOW: usize = 200;

/// Relative value iteration `h <- T h - (T h)(ref)` with span stopping.
///
/// `backup(h, alpha, out)` must write `max_a {r + alpha * P h} + (1 - alpha) h`.
/// The transform is switched on only when the span stops contracting; the
/// returned relative values are rescaled to the untransformed chain.
pub(crate) fn relative_value_iteration(
    n: usize,
    reference: usize,
    opts: &SolverOptions,
    mut backup: impl FnMut(&[f64], f64, &mut [f64]),
) -> Result<RviOutcome> {
    let mut h = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut alpha = 1.0;
    let mut spans: Vec<f64> = Vec::new();
    let mut span = f64::INFINITY;
    for it in 1..=opts.max_iter {
        backup(&h, alpha, &mut w);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let d = w[s] - h[s];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(SpnError::NonFinite("relative value iteration".into()));
        }
        span = hi - lo;
        let base = w[reference];
        for s in 0..n {
            h[s] = w[s] - base;
        }
        if span < opts.tol {
            let gain = 0.5 * (hi + lo);
            let scale = alpha;
            return Ok(RviOutcome {
                gain,
                h: h.iter().map(|x| x * scale).collect(),
                iterations: it,
                span,
                damped: alpha < 1.0,
            });
        }
        spans.push(span);
        if alpha == 1.0 && spans.len() > OSCILLATION_WINDOW {
            let earlier = spans[spans.len() - 1 - OSCILLATION_WINDOW];
            if span > 0.99 * earlier {
                alpha = DAMPING_ALPHA;
                spans.clear();
            }
        }
    }
    Err(SpnError::NotConverged { iterations: opts.max_iter, span })
}

/// Greedy joint schedule entry per state for relative values `h` and gain `g`.
pub(crate) fn greedy_joint(k: &KernelSet, h: &[f64], incumbent: Option<&[usize]>) -> Vec<usize> {
    let n = k.num_states();
    let q: Vec<f64> = (0..n).map(|t| k.expect_sys(t, h)).collect();
    (0..n)
        .map(|s| {
            let r = k.joint_range(s);
            let cands: Vec<(u32, f64)> = r
                .clone()
                .map(|e| ((e - r.start) as u32, k.joint_reward[e] + q[k.joint_post[e] as usize]))
                .collect();
            let inc = incumbent.map(|p| (p[s] - r.start) as u32);
            r.start + pick(&cands, inc).1 as usize
        })
        .collect()
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
