use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{Result, SpnError};

/// Item counts per class and service counts per (type, age).
///
/// `n` is stored row-major with `tau_max + 2` slots per service type: ages
/// `0..=tau_max`, then the idle count keyed by the last completed type. The
/// derived ordering is lexicographic on `(z, n)`, which is the flattened record.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemState {
    pub z: Vec<u32>,
    pub n: Vec<u32>,
}

impl SystemState {
    /// Empty buffers with the configured initial idle servers.
    pub fn initial(cfg: &NetworkConfig) -> Self {
        let slots = cfg.slots();
        let mut n = vec![0; cfg.num_service_types * slots];
        for (j, &k) in cfg.initial_idle.iter().enumerate() {
            n[j * slots + cfg.idle_slot()] = k;
        }
        Self { z: vec![0; cfg.num_classes], n }
    }

    #[inline]
    pub fn count(&self, cfg: &NetworkConfig, j: usize, age: usize) -> u32 {
        self.n[j * cfg.slots() + age]
    }

    #[inline]
    pub fn count_mut(&mut self, cfg: &NetworkConfig, j: usize, age: usize) -> &mut u32 {
        &mut self.n[j * cfg.slots() + age]
    }

    #[inline]
    pub fn idle(&self, cfg: &NetworkConfig, j: usize) -> u32 {
        self.count(cfg, j, cfg.idle_slot())
    }

    pub fn total_idle(&self, cfg: &NetworkConfig) -> u32 {
        (0..cfg.num_service_types).map(|j| self.idle(cfg, j)).sum()
    }

    /// Open (busy) services of type `j` across all ages.
    pub fn busy(&self, cfg: &NetworkConfig, j: usize) -> u32 {
        let s = j * cfg.slots();
        self.n[s..s + cfg.tau_max + 1].iter().sum()
    }

    /// Items of each class held by open services.
    pub fn open_items(&self, cfg: &NetworkConfig) -> Vec<u32> {
        let mut open = vec![0; cfg.num_classes];
        for j in 0..cfg.num_service_types {
            if let Some(i) = cfg.class_of(j) {
                open[i] += self.busy(cfg, j);
            }
        }
        open
    }

    /// Items of each class waiting for a service.
    pub fn waiting(&self, cfg: &NetworkConfig) -> Vec<u32> {
        self.open_items(cfg).iter().zip(&self.z).map(|(&o, &z)| z - o).collect()
    }

    /// True iff no service was opened in the current time step.
    pub fn is_pre_decision(&self, cfg: &NetworkConfig) -> bool {
        (0..cfg.num_service_types).all(|j| self.count(cfg, j, 0) == 0)
    }

    pub fn check_invariants(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.z.len() != cfg.num_classes || self.n.len() != cfg.num_service_types * cfg.slots() {
            return Err(SpnError::Dimension(format!(
                "state has {} classes and {} service slots, network has {} and {}",
                self.z.len(),
                self.n.len(),
                cfg.num_classes,
                cfg.num_service_types * cfg.slots()
            )));
        }
        let servers: u64 = self.n.iter().map(|&x| x as u64).sum();
        if servers != cfg.num_servers as u64 {
            return Err(SpnError::Dimension(format!(
                "state holds {servers} servers, network has {}",
                cfg.num_servers
            )));
        }
        let mut open = vec![0u32; cfg.num_classes];
        for j in 0..cfg.num_service_types {
            if let Some(i) = cfg.class_of(j) {
                open[i] += self.busy(cfg, j);
            }
        }
        for i in 0..cfg.num_classes {
            if open[i] > self.z[i] {
                return Err(SpnError::Dimension(format!(
                    "class {i}: {} open services exceed {} buffered items",
                    open[i], self.z[i]
                )));
            }
            if self.z[i] > cfg.item_cap[i] {
                return Err(SpnError::Dimension(format!(
                    "class {i}: {} items exceed cap {}",
                    self.z[i], cfg.item_cap[i]
                )));
            }
        }
        Ok(())
    }

    /// Flat integer record: `z` followed by `n`.
    pub fn to_record(&self) -> Vec<u32> {
        self.z.iter().chain(&self.n).copied().collect()
    }

    pub fn from_record(cfg: &NetworkConfig, rec: &[u32]) -> Result<Self> {
        let i_n = cfg.num_classes;
        let want = i_n + cfg.num_service_types * cfg.slots();
        if rec.len() != want {
            return Err(SpnError::Dimension(format!(
                "state record of length {}, expected {want}",
                rec.len()
            )));
        }
        Ok(Self { z: rec[..i_n].to_vec(), n: rec[i_n..].to_vec() })
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z={:?} n={:?}", self.z, self.n)
    }
}

/// Joint assignment: `a[j'][j]` servers that last served type `j'` start type `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Schedule {
    pub num_types: usize,
    pub a: Vec<u32>,
}

impl Schedule {
    pub fn zero(num_types: usize) -> Self {
        Self { num_types, a: vec![0; num_types * num_types] }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Self {
        Self { num_types: rows.len(), a: rows.iter().flatten().copied().collect() }
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> u32 {
        self.a[from * self.num_types + to]
    }

    #[inline]
    pub fn add(&mut self, from: usize, to: usize, k: u32) {
        self.a[from * self.num_types + to] += k;
    }

    pub fn total(&self) -> u32 {
        self.a.iter().sum()
    }

    /// Atomic actions in lexicographic `(j', j)` order, one per assigned server.
    pub fn atomic_expansion(&self) -> Vec<AtomicAction> {
        let jn = self.num_types;
        let mut out = Vec::with_capacity(self.total() as usize);
        for from in 0..jn {
            for to in 0..jn {
                for _ in 0..self.get(from, to) {
                    out.push(AtomicAction::Assign { from, to });
                }
            }
        }
        out
    }

    pub fn from_atomics(num_types: usize, actions: &[AtomicAction]) -> Self {
        let mut s = Self::zero(num_types);
        for a in actions {
            if let AtomicAction::Assign { from, to } = *a {
                s.add(from, to, 1);
            }
        }
        s
    }
}

/// A single-server assignment or Pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomicAction {
    Pass,
    Assign { from: usize, to: usize },
}

impl AtomicAction {
    /// Dense code in `0..J*J+1`; Pass is 0 so ties resolve toward it.
    #[inline]
    pub fn code(self, num_types: usize) -> usize {
        match self {
            AtomicAction::Pass => 0,
            AtomicAction::Assign { from, to } => 1 + from * num_types + to,
        }
    }

    #[inline]
    pub fn from_code(code: usize, num_types: usize) -> Self {
        if code == 0 {
            AtomicAction::Pass
        } else {
            let c = code - 1;
            AtomicAction::Assign { from: c / num_types, to: c % num_types }
        }
    }

    pub fn is_pass(self) -> bool {
        matches!(self, AtomicAction::Pass)
    }
}

impl fmt::Display for AtomicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomicAction::Pass => write!(f, "pass"),
            AtomicAction::Assign { from, to } => write!(f, "({from}->{to})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for code in 0..10 {
            assert_eq!(AtomicAction::from_code(code, 3).code(3), code);
        }
        assert_eq!(AtomicAction::Assign { from: 1, to: 2 }.code(3), 6);
    }

    #[test]
    fn expansion_is_lexicographic() {
        let s = Schedule::from_rows(&[vec![0, 2], vec![1, 0]]);
        assert_eq!(
            s.atomic_expansion(),
            vec![
                AtomicAction::Assign { from: 0, to: 1 },
                AtomicAction::Assign { from: 0, to: 1 },
                AtomicAction::Assign { from: 1, to: 0 },
            ]
        );
        assert_eq!(Schedule::from_atomics(2, &s.atomic_expansion()), s);
    }
}
