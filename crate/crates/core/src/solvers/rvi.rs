use super::chain::DENSE_LIMIT;
use super::evaluate::{evaluate_policy, induced_chain};
use super::{greedy_joint, relative_value_iteration, PolicyTable, SolveResult, SolverOptions};
use crate::error::Result;
use crate::state_space::KernelSet;

/// Optimal gain and relative values of the joint-schedule MDP.
pub fn solve_original_rvi(k: &KernelSet, opts: &SolverOptions) -> Result<SolveResult> {
    let n = k.num_states();
    let mut q = vec![0.0; n];
    let out = relative_value_iteration(n, k.initial, opts, |h, alpha, w| {
        for t in 0..n {
            q[t] = alpha * k.expect_sys(t, h);
        }
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for e in k.joint_range(s) {
                best = best.max(k.joint_reward[e] + q[k.joint_post[e] as usize]);
            }
            w[s] = best + (1.0 - alpha) * h[s];
        }
    })?;
    let (mut gain, mut h) = (out.gain, out.h);
    if opts.polish && n <= DENSE_LIMIT {
        let mut policy = greedy_joint(k, &h, None);
        for _ in 0..100 {
            let sol = evaluate_policy(k, &PolicyTable::Joint(policy.clone()))?;
            gain = sol.gain;
            h = sol.h;
            let next = greedy_joint(k, &h, Some(&policy));
            if next == policy {
                break;
            }
            policy = next;
        }
    }
    let policy = greedy_joint(k, &h, None);
    induced_chain(k, &PolicyTable::Joint(policy.clone()))?.ensure_unichain()?;
    Ok(SolveResult {
        gain,
        h,
        step_tables: Vec::new(),
        policy: PolicyTable::Joint(policy),
        iterations: out.iterations,
        span: out.span,
        damped: out.damped,
    })
}

/// `max_s |h(s) - max_a {r(s,a) - g + sum P h}|` in the joint-schedule MDP.
pub fn original_residual(k: &KernelSet, gain: f64, h: &[f64]) -> f64 {
    let n = k.num_states();
    let q: Vec<f64> = (0..n).map(|t| k.expect_sys(t, h)).collect();
    (0..n)
        .map(|s| {
            let best = k
                .joint_range(s)
                .map(|e| k.joint_reward[e] - gain + q[k.joint_post[e] as usize])
                .fold(f64::NEG_INFINITY, f64::max);
            (h[s] - best).abs()
        })
        .fold(0.0, f64::max)
}
