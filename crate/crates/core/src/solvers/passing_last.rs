use super::{pick, PolicyTable, SolveResult};
use crate::error::{Result, SpnError};
use crate::state_space::KernelSet;

/// Relative values and the deterministic step-independent policy of the
/// passing-last atomic MDP, built from a solution `(g, h)` of the joint
/// optimality equation.
///
/// States are processed in order of their idle-server count. Pass closes the
/// time step with `r_H(s) - g + E h(s')`; an assignment moves to a state with
/// one fewer idle server whose value is already final.
pub fn solve_passing_last(k: &KernelSet, gain: f64, h: &[f64]) -> Result<SolveResult> {
    let n = k.num_states();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&s| (k.idle[s], s));
    let mut ht = vec![f64::NAN; n];
    let mut policy = vec![0u32; n];
    let mut cands = Vec::new();
    for s in order {
        let (codes, next) = k.atomic_row(s);
        cands.clear();
        for (&c, &t) in codes.iter().zip(next) {
            let t = t as usize;
            let v = if c == 0 {
                k.holding[s] - gain + k.expect_sys(s, h)
            } else {
                if k.idle[t] + 1 != k.idle[s] {
                    return Err(SpnError::Stratum { state: s });
                }
                k.atomic_reward[c as usize] + ht[t]
            };
            cands.push((c, v));
        }
        let (best, a) = pick(&cands, None);
        ht[s] = best;
        policy[s] = a;
    }
    Ok(SolveResult {
        gain,
        h: ht,
        step_tables: Vec::new(),
        policy: PolicyTable::StepIndependent(policy),
        iterations: 1,
        span: 0.0,
        damped: false,
    })
}
