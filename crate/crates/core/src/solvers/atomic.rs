use super::chain::DENSE_LIMIT;
use super::evaluate::{evaluate_policy, induced_chain};
use super::{pick, relative_value_iteration, PolicyTable, SolveResult, SolverOptions};
use crate::error::Result;
use crate::state_space::KernelSet;

/// One period of the step-dependent atomic optimality equations.
///
/// Given the step-1 table `h1` and the gain, computes every step table by
/// backward composition (step K folds in the holding reward and the system
/// update) and the per-step greedy action codes. `alpha` applies the
/// aperiodicity transform to the system update; `alpha = 1` is the plain
/// equation.
pub(crate) fn compose(
    k: &KernelSet,
    h1: &[f64],
    gain: f64,
    alpha: f64,
    incumbent: Option<&[Vec<u32>]>,
) -> (Vec<Vec<f64>>, Vec<Vec<u32>>) {
    let n = k.num_states();
    let steps = k.num_servers.max(1);
    let share = gain / steps as f64;
    let mut after: Vec<f64> = (0..n).map(|t| k.holding[t] + alpha * k.expect_sys(t, h1)).collect();
    let mut tables = vec![Vec::new(); steps];
    let mut policies = vec![Vec::new(); steps];
    let mut cands = Vec::new();
    for step in (0..steps).rev() {
        let mut v = vec![0.0; n];
        let mut pol = vec![0u32; n];
        for s in 0..n {
            let (codes, next) = k.atomic_row(s);
            cands.clear();
            for (&c, &t) in codes.iter().zip(next) {
                cands.push((c, k.atomic_reward[c as usize] - share + after[t as usize]));
            }
            let inc = incumbent.map(|p| p[step][s]);
            let (best, a) = pick(&cands, inc);
            v[s] = best;
            pol[s] = a;
        }
        after = v.clone();
        tables[step] = v;
        policies[step] = pol;
    }
    (tables, policies)
}

/// Optimal gain, per-step relative value tables and per-step greedy policies
/// of the K-step atomic MDP.
///
/// Iterates on the step-1 table through the one-period composition, so only K
/// tables are held. Tables are shifted together so step 1 is zero at the
/// reference state.
pub fn solve_atomic_step_dependent(k: &KernelSet, opts: &SolverOptions) -> Result<SolveResult> {
    let n = k.num_states();
    let out = relative_value_iteration(n, k.initial, opts, |h, alpha, w| {
        let (tables, _) = compose(k, h, 0.0, alpha, None);
        for s in 0..n {
            w[s] = tables[0][s] + (1.0 - alpha) * h[s];
        }
    })?;
    let (mut gain, mut h1) = (out.gain, out.h);
    if opts.polish && n <= DENSE_LIMIT {
        let (_, mut policy) = compose(k, &h1, gain, 1.0, None);
        for _ in 0..100 {
            let sol = evaluate_policy(k, &PolicyTable::StepDependent(policy.clone()))?;
            gain = sol.gain;
            h1 = sol.h;
            let (_, next) = compose(k, &h1, gain, 1.0, Some(&policy));
            if next == policy {
                break;
            }
            policy = next;
        }
    }
    let (mut tables, policy) = compose(k, &h1, gain, 1.0, None);
    let shift = tables[0][k.initial];
    for t in tables.iter_mut() {
        t.iter_mut().for_each(|v| *v -= shift);
    }
    induced_chain(k, &PolicyTable::StepDependent(policy.clone()))?.ensure_unichain()?;
    Ok(SolveResult {
        gain,
        h: tables[0].clone(),
        step_tables: tables,
        policy: PolicyTable::StepDependent(policy),
        iterations: out.iterations,
        span: out.span,
        damped: out.damped,
    })
}

/// Per-step residuals of the atomic optimality equations at `(gain, tables)`.
pub fn atomic_residuals(k: &KernelSet, gain: f64, tables: &[Vec<f64>]) -> Vec<f64> {
    let n = k.num_states();
    let steps = tables.len();
    let share = gain / steps as f64;
    (0..steps)
        .map(|step| {
            let after: Vec<f64> = if step + 1 == steps {
                (0..n).map(|t| k.holding[t] + k.expect_sys(t, &tables[0])).collect()
            } else {
                tables[step + 1].clone()
            };
            (0..n)
                .map(|s| {
                    let (codes, next) = k.atomic_row(s);
                    let best = codes
                        .iter()
                        .zip(next)
                        .map(|(&c, &t)| k.atomic_reward[c as usize] - share + after[t as usize])
                        .fold(f64::NEG_INFINITY, f64::max);
                    (tables[step][s] - best).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}
