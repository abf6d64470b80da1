//! Markov reward chains induced by fixed policies: gain/bias solves, stationary
//! distributions and recurrent-class detection.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Result, SpnError};

/// Above this many states the gain/bias system is solved iteratively.
pub const DENSE_LIMIT: usize = 3000;

/// Mixing weight of the aperiodicity transform `alpha * P + (1 - alpha) * I`
/// used by the iterative fallback.
const ITERATIVE_ALPHA: f64 = 0.5;
const ITERATIVE_MAX: usize = 2_000_000;

/// One time step of a fixed policy: sparse transition rows and expected rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedChain {
    pub rows: Vec<Vec<(u32, f64)>>,
    pub reward: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSolution {
    pub gain: f64,
    /// Bias normalized to zero at the reference state.
    pub h: Vec<f64>,
    /// Max absolute residual of `g + h - P h - r`.
    pub residual: f64,
}

impl InducedChain {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn expect(&self, s: usize, v: &[f64]) -> f64 {
        self.rows[s].iter().map(|&(t, p)| p * v[t as usize]).sum()
    }

    pub fn residual(&self, gain: f64, h: &[f64]) -> f64 {
        (0..self.len())
            .map(|s| (gain + h[s] - self.expect(s, h) - self.reward[s]).abs())
            .fold(0.0, f64::max)
    }

    /// Closed communicating classes, each as a sorted state list.
    pub fn recurrent_classes(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.len(), 0);
        let nodes: Vec<_> = (0..self.len()).map(|_| g.add_node(())).collect();
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, p) in row {
                if p > 0.0 {
                    g.add_edge(nodes[s], nodes[t as usize], ());
                }
            }
        }
        let mut comp = vec![0usize; self.len()];
        let sccs = tarjan_scc(&g);
        for (c, scc) in sccs.iter().enumerate() {
            for n in scc {
                comp[n.index()] = c;
            }
        }
        let mut out: Vec<Vec<usize>> = sccs
            .iter()
            .enumerate()
            .filter(|(c, scc)| {
                scc.iter().all(|n| {
                    self.rows[n.index()].iter().all(|&(t, p)| p <= 0.0 || comp[t as usize] == *c)
                })
            })
            .map(|(_, scc)| {
                let mut v: Vec<usize> = scc.iter().map(|n| n.index()).collect();
                v.sort_unstable();
                v
            })
            .collect();
        out.sort();
        out
    }

    pub fn ensure_unichain(&self) -> Result<()> {
        let classes = self.recurrent_classes().len();
        if classes != 1 {
            return Err(SpnError::Multichain { classes });
        }
        Ok(())
    }

    /// Solves `g + h(s) - sum_s' P(s'|s) h(s') = r(s)` with `h(reference) = 0`.
    pub fn solve(&self, reference: usize) -> Result<ChainSolution> {
        self.ensure_unichain()?;
        let (gain, h) = if self.len() <= DENSE_LIMIT {
            self.solve_dense(reference)?
        } else {
            self.solve_iterative(reference)?
        };
        let residual = self.residual(gain, &h);
        let scale = 1.0 + self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if !residual.is_finite() || residual > 1e-7 * scale {
            return Err(SpnError::Singular { residual });
        }
        Ok(ChainSolution { gain, h, residual })
    }

    fn solve_dense(&self, reference: usize) -> Result<(f64, Vec<f64>)> {
        let n = self.len();
        // unknowns: h[0..n], then g
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut b = DVector::<f64>::zeros(n + 1);
        for s in 0..n {
            a[(s, s)] += 1.0;
            for &(t, p) in &self.rows[s] {
                a[(s, t as usize)] -= p;
            }
            a[(s, n)] = 1.0;
            b[s] = self.reward[s];
        }
        a[(n, reference)] = 1.0;
        let x = a.lu().solve(&b).ok_or(SpnError::Singular { residual: f64::INFINITY })?;
        Ok((x[n], x.iter().take(n).copied().collect()))
    }

    fn solve_iterative(&self, reference: usize) -> Result<(f64, Vec<f64>)> {
        let n = self.len();
        let alpha = ITERATIVE_ALPHA;
        let scale = 1.0 + self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let mut h = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut span = f64::INFINITY;
        for _ in 0..ITERATIVE_MAX {
            for s in 0..n {
                w[s] = self.reward[s] + alpha * self.expect(s, &h) + (1.0 - alpha) * h[s];
            }
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for s in 0..n {
                let d = w[s] - h[s];
                lo = lo.min(d);
                hi = hi.max(d);
            }
            span = hi - lo;
            let base = w[reference];
            for s in 0..n {
                h[s] = w[s] - base;
            }
            if span < 1e-13 * scale {
                let gain = 0.5 * (hi + lo);
                return Ok((gain, h.iter().map(|x| alpha * x).collect()));
            }
        }
        Err(SpnError::NotConverged { iterations: ITERATIVE_MAX, span })
    }

    /// Stationary distribution of a unichain.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        self.ensure_unichain()?;
        let n = self.len();
        if n <= DENSE_LIMIT {
            // rows of (I - P)^T, the last replaced by the normalization
            let mut a = DMatrix::<f64>::zeros(n, n);
            for s in 0..n {
                a[(s, s)] += 1.0;
                for &(t, p) in &self.rows[s] {
                    a[(t as usize, s)] -= p;
                }
            }
            for s in 0..n {
                a[(n - 1, s)] = 1.0;
            }
            let mut b = DVector::<f64>::zeros(n);
            b[n - 1] = 1.0;
            let x = a.lu().solve(&b).ok_or(SpnError::Singular { residual: f64::INFINITY })?;
            return Ok(x.iter().map(|&v| v.max(0.0)).collect());
        }
        let mut nu = vec![1.0 / n as f64; n];
        for _ in 0..ITERATIVE_MAX {
            let mut next = vec![0.0; n];
            for s in 0..n {
                next[s] += (1.0 - ITERATIVE_ALPHA) * nu[s];
                for &(t, p) in &self.rows[s] {
                    next[t as usize] += ITERATIVE_ALPHA * p * nu[s];
                }
            }
            let diff: f64 = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
            nu = next;
            if diff < 1e-15 {
                return Ok(nu);
            }
        }
        Err(SpnError::NotConverged { iterations: ITERATIVE_MAX, span: f64::NAN })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> InducedChain {
        // 0 -> 1 w.p. 0.5, 1 -> 0 w.p. 0.25
        InducedChain {
            rows: vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 0.25), (1, 0.75)]],
            reward: vec![1.0, 0.0],
        }
    }

    #[test]
    fn two_state_gain_and_stationary() {
        let c = two_state();
        let nu = c.stationary().unwrap();
        assert!((nu[0] - 1.0 / 3.0).abs() < 1e-14);
        let sol = c.solve(0).unwrap();
        assert!((sol.gain - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(sol.h[0], 0.0);
        assert!(sol.residual < 1e-14);
    }

    #[test]
    fn iterative_agrees_with_dense() {
        let c = two_state();
        let (g, h) = c.solve_iterative(0).unwrap();
        let (gd, hd) = c.solve_dense(0).unwrap();
        assert!((g - gd).abs() < 1e-12);
        assert!((h[1] - hd[1]).abs() < 1e-10);
    }

    #[test]
    fn two_absorbing_states_are_multichain() {
        let c = InducedChain { rows: vec![vec![(0, 1.0)], vec![(1, 1.0)]], reward: vec![0.0, 1.0] };
        assert!(matches!(c.solve(0), Err(SpnError::Multichain { classes: 2 })));
    }

    #[test]
    fn transient_states_are_not_classes() {
        let c = InducedChain { rows: vec![vec![(1, 1.0)], vec![(1, 1.0)]], reward: vec![5.0, 1.0] };
        assert_eq!(c.recurrent_classes(), vec![vec![1]]);
        let sol = c.solve(1).unwrap();
        assert_eq!(sol.gain, 1.0);
        assert!((sol.h[0] - 4.0).abs() < 1e-14);
    }
}
