//! Network instances: the matrices, laws and caps that define a processing
//! network, plus the text file format they are stored in.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SpnError};

pub const NETWORK_SCHEMA: &str = "spn-network/v1";

/// Tolerance on the total mass of an arrival law.
const LAW_MASS_TOL: f64 = 1e-12;

/// Which items pay the per-step holding cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoldingMode {
    /// Only items not currently in an open service.
    WaitingOnly,
    /// Every item in the buffer, in service or not.
    AllItems,
}

/// Finite-support distribution of per-step arrival counts for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalLaw {
    pub counts: Vec<u32>,
    pub probs: Vec<f64>,
}

impl ArrivalLaw {
    pub fn none() -> Self {
        Self { counts: vec![0], probs: vec![1.0] }
    }

    pub fn bernoulli(p: f64) -> Self {
        if p <= 0.0 {
            Self::none()
        } else if p >= 1.0 {
            Self { counts: vec![1], probs: vec![1.0] }
        } else {
            Self { counts: vec![0, 1], probs: vec![1.0 - p, p] }
        }
    }

    pub fn mean(&self) -> f64 {
        self.counts.iter().zip(&self.probs).map(|(&c, &p)| c as f64 * p).sum()
    }

    /// Draws a count from a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> u32 {
        let mut acc = 0.0;
        for (&c, &p) in self.counts.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return c;
            }
        }
        // u fell in the rounding gap above the last cumulative value
        self.counts
            .iter()
            .zip(&self.probs)
            .rev()
            .find(|(_, &p)| p > 0.0)
            .map(|(&c, _)| c)
            .unwrap_or(0)
    }
}

/// A processing network instance.
///
/// Matrices use the row-major "explicit literal" layout of the text format:
/// `material[i][j]` (classes × types), `routing[i][j]`, `compatibility[j_prev][j_next]`
/// and `completion[j][age]` for ages `0..=tau_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub schema: String,
    pub num_classes: usize,
    pub num_service_types: usize,
    pub num_servers: usize,
    pub tau_max: usize,
    pub material: Vec<Vec<u8>>,
    pub routing: Vec<Vec<u8>>,
    pub compatibility: Vec<Vec<u8>>,
    pub completion: Vec<Vec<f64>>,
    pub arrivals: Vec<ArrivalLaw>,
    pub service_reward: Vec<f64>,
    pub holding_weight: Vec<f64>,
    pub holding_mode: HoldingMode,
    /// Per-class item cap; arrivals beyond it are rejected.
    pub item_cap: Vec<u32>,
    /// Idle servers at time zero, keyed by last-completed service type.
    pub initial_idle: Vec<u32>,
}

/// Linear limit on newly initiated services, layered on top of the
/// compatibility, idle-server and item constraints:
///
/// `sum_j weights[j] * (n[j][0] + sum_j' a[j'][j]) <= limit`
///
/// Age-zero counts are the services opened earlier in the same time step, so the
/// bound on a schedule is `limit - sum_j weights[j] * n[j][0]`, a function of the
/// state alone, and the constraint composes across atomic steps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtraConstraint {
    pub name: String,
    pub weights: Vec<u32>,
    pub limit: u32,
}

/// A network together with its extra constraints; the unit the rest of the
/// crate works on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    #[serde(flatten)]
    pub cfg: NetworkConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_constraints: Vec<ExtraConstraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Schema(String),
    ZeroDimension(&'static str),
    Shape { field: &'static str, expected: String, found: String },
    NonBinary { field: &'static str, row: usize, col: usize, value: u8 },
    MaterialColumn { service_type: usize, classes: usize },
    MaterialRow { class: usize },
    CompatibilityColumn { service_type: usize },
    CompletionRange { service_type: usize, age: usize, value: f64 },
    CompletionAtCap { service_type: usize, value: f64 },
    ArrivalLaw { class: usize, reason: String },
    HoldingSign { class: usize, value: f64 },
    RewardNotFinite { service_type: usize },
    InitialServers { expected: usize, found: usize },
    ExtraConstraint { name: String, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Schema(s) => write!(f, "schema: expected {NETWORK_SCHEMA:?}, found {s:?}"),
            Violation::ZeroDimension(d) => write!(f, "dimension {d} must be positive"),
            Violation::Shape { field, expected, found } => {
                write!(f, "shape of {field}: expected {expected}, found {found}")
            }
            Violation::NonBinary { field, row, col, value } => {
                write!(f, "{field}[{row}][{col}] = {value} is not binary")
            }
            Violation::MaterialColumn { service_type, classes } => write!(
                f,
                "material column {service_type}: service type processes {classes} classes (at most 1)"
            ),
            Violation::MaterialRow { class } => {
                write!(f, "material row {class}: class is processed by no service type")
            }
            Violation::CompatibilityColumn { service_type } => write!(
                f,
                "compatibility column {service_type}: service type cannot follow any service"
            ),
            Violation::CompletionRange { service_type, age, value } => write!(
                f,
                "completion[{service_type}][{age}] = {value} outside [0, 1]"
            ),
            Violation::CompletionAtCap { service_type, value } => write!(
                f,
                "completion[{service_type}][tau_max] = {value}, must equal 1"
            ),
            Violation::ArrivalLaw { class, reason } => write!(f, "arrivals[{class}]: {reason}"),
            Violation::HoldingSign { class, value } => {
                write!(f, "holding_weight[{class}] = {value} must be nonpositive")
            }
            Violation::RewardNotFinite { service_type } => {
                write!(f, "service_reward[{service_type}] is not finite")
            }
            Violation::InitialServers { expected, found } => write!(
                f,
                "initial_idle sums to {found}, expected num_servers = {expected}"
            ),
            Violation::ExtraConstraint { name, reason } => {
                write!(f, "extra constraint {name:?}: {reason}")
            }
        }
    }
}

fn check_shape<T>(
    out: &mut Vec<Violation>,
    field: &'static str,
    m: &[Vec<T>],
    rows: usize,
    cols: usize,
) -> bool {
    let ok = m.len() == rows && m.iter().all(|r| r.len() == cols);
    if !ok {
        let found = format!(
            "{}x[{}]",
            m.len(),
            m.iter().map(|r| r.len().to_string()).collect::<Vec<_>>().join(",")
        );
        out.push(Violation::Shape { field, expected: format!("{rows}x{cols}"), found });
    }
    ok
}

fn check_binary(out: &mut Vec<Violation>, field: &'static str, m: &[Vec<u8>]) {
    for (r, row) in m.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v > 1 {
                out.push(Violation::NonBinary { field, row: r, col: c, value: v });
            }
        }
    }
}

/// Checks every structural invariant of a network; an empty list means valid.
pub fn validate_config(cfg: &NetworkConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if cfg.schema != NETWORK_SCHEMA {
        out.push(Violation::Schema(cfg.schema.clone()));
    }
    let (i_n, j_n, k_n) = (cfg.num_classes, cfg.num_service_types, cfg.num_servers);
    if i_n == 0 {
        out.push(Violation::ZeroDimension("num_classes"));
    }
    if j_n == 0 {
        out.push(Violation::ZeroDimension("num_service_types"));
    }
    if k_n == 0 {
        out.push(Violation::ZeroDimension("num_servers"));
    }

    if check_shape(&mut out, "material", &cfg.material, i_n, j_n) {
        check_binary(&mut out, "material", &cfg.material);
        for j in 0..j_n {
            let classes = (0..i_n).filter(|&i| cfg.material[i][j] == 1).count();
            if classes > 1 {
                out.push(Violation::MaterialColumn { service_type: j, classes });
            }
        }
        for i in 0..i_n {
            if !cfg.material[i].contains(&1) {
                out.push(Violation::MaterialRow { class: i });
            }
        }
    }
    if check_shape(&mut out, "routing", &cfg.routing, i_n, j_n) {
        check_binary(&mut out, "routing", &cfg.routing);
    }
    if check_shape(&mut out, "compatibility", &cfg.compatibility, j_n, j_n) {
        check_binary(&mut out, "compatibility", &cfg.compatibility);
        for j in 0..j_n {
            if !(0..j_n).any(|jp| cfg.compatibility[jp][j] == 1) {
                out.push(Violation::CompatibilityColumn { service_type: j });
            }
        }
    }
    if check_shape(&mut out, "completion", &cfg.completion, j_n, cfg.tau_max + 1) {
        for (j, row) in cfg.completion.iter().enumerate() {
            for (age, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    out.push(Violation::CompletionRange { service_type: j, age, value: p });
                }
            }
            if row[cfg.tau_max] != 1.0 {
                out.push(Violation::CompletionAtCap { service_type: j, value: row[cfg.tau_max] });
            }
        }
    }
    if cfg.arrivals.len() != i_n {
        out.push(Violation::Shape {
            field: "arrivals",
            expected: i_n.to_string(),
            found: cfg.arrivals.len().to_string(),
        });
    } else {
        for (i, law) in cfg.arrivals.iter().enumerate() {
            let reason = if law.counts.is_empty() || law.counts.len() != law.probs.len() {
                Some("support and probabilities must be nonempty and of equal length".to_string())
            } else if law.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                Some("probabilities must be finite and nonnegative".to_string())
            } else {
                let mass: f64 = law.probs.iter().sum();
                ((mass - 1.0).abs() > LAW_MASS_TOL)
                    .then(|| format!("probabilities sum to {mass}, not 1"))
            };
            if let Some(reason) = reason {
                out.push(Violation::ArrivalLaw { class: i, reason });
            }
        }
    }
    if cfg.service_reward.len() != j_n {
        out.push(Violation::Shape {
            field: "service_reward",
            expected: j_n.to_string(),
            found: cfg.service_reward.len().to_string(),
        });
    } else {
        for (j, r) in cfg.service_reward.iter().enumerate() {
            if !r.is_finite() {
                out.push(Violation::RewardNotFinite { service_type: j });
            }
        }
    }
    if cfg.holding_weight.len() != i_n {
        out.push(Violation::Shape {
            field: "holding_weight",
            expected: i_n.to_string(),
            found: cfg.holding_weight.len().to_string(),
        });
    } else {
        for (i, &c) in cfg.holding_weight.iter().enumerate() {
            if c > 0.0 || c.is_nan() {
                out.push(Violation::HoldingSign { class: i, value: c });
            }
        }
    }
    if cfg.item_cap.len() != i_n {
        out.push(Violation::Shape {
            field: "item_cap",
            expected: i_n.to_string(),
            found: cfg.item_cap.len().to_string(),
        });
    }
    if cfg.initial_idle.len() != j_n {
        out.push(Violation::Shape {
            field: "initial_idle",
            expected: j_n.to_string(),
            found: cfg.initial_idle.len().to_string(),
        });
    } else {
        let found = cfg.initial_idle.iter().map(|&x| x as usize).sum();
        if found != k_n {
            out.push(Violation::InitialServers { expected: k_n, found });
        }
    }
    out
}

/// Validates the constraints of a problem against its network.
pub fn validate_extra(cfg: &NetworkConfig, extra: &[ExtraConstraint]) -> Vec<Violation> {
    extra
        .iter()
        .filter(|c| c.weights.len() != cfg.num_service_types)
        .map(|c| Violation::ExtraConstraint {
            name: c.name.clone(),
            reason: format!(
                "{} weights for {} service types",
                c.weights.len(),
                cfg.num_service_types
            ),
        })
        .collect()
}

impl NetworkConfig {
    /// Number of service-count columns per type: ages `0..=tau_max` then idle.
    pub fn slots(&self) -> usize {
        self.tau_max + 2
    }

    pub fn idle_slot(&self) -> usize {
        self.tau_max + 1
    }

    /// Number of atomic actions including Pass.
    pub fn num_atomic_actions(&self) -> usize {
        self.num_service_types * self.num_service_types + 1
    }

    /// The class a service type processes, if any.
    pub fn class_of(&self, j: usize) -> Option<usize> {
        (0..self.num_classes).find(|&i| self.material[i][j] == 1)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SpnError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SpnError::Format(e.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

impl Problem {
    pub fn new(cfg: NetworkConfig, extra_constraints: Vec<ExtraConstraint>) -> Self {
        Self { cfg, extra_constraints }
    }

    pub fn unconstrained(cfg: NetworkConfig) -> Self {
        Self { cfg, extra_constraints: Vec::new() }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = validate_config(&self.cfg);
        if v.is_empty() {
            v.extend(validate_extra(&self.cfg, &self.extra_constraints));
        }
        v
    }

    pub fn extra(&self) -> &[ExtraConstraint] {
        &self.extra_constraints
    }

    /// Hash covering the network and its constraints; keys caches, checkpoints
    /// and every output file.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("problem serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SpnError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SpnError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_config() -> NetworkConfig {
        NetworkConfig {
            schema: NETWORK_SCHEMA.into(),
            num_classes: 1,
            num_service_types: 1,
            num_servers: 1,
            tau_max: 0,
            material: vec![vec![1]],
            routing: vec![vec![0]],
            compatibility: vec![vec![1]],
            completion: vec![vec![1.0]],
            arrivals: vec![ArrivalLaw::bernoulli(0.5)],
            service_reward: vec![0.0],
            holding_weight: vec![-1.0],
            holding_mode: HoldingMode::WaitingOnly,
            item_cap: vec![1],
            initial_idle: vec![1],
        }
    }

    #[test]
    fn identity_instance_is_valid() {
        assert!(validate_config(&unit_config()).is_empty());
    }

    #[test]
    fn material_column_with_two_classes_is_named() {
        let mut cfg = unit_config();
        cfg.num_classes = 2;
        cfg.material = vec![vec![1], vec![1]];
        cfg.routing = vec![vec![0], vec![0]];
        cfg.arrivals = vec![ArrivalLaw::none(), ArrivalLaw::none()];
        cfg.holding_weight = vec![-1.0, -1.0];
        cfg.item_cap = vec![1, 1];
        let v = validate_config(&cfg);
        assert_eq!(v, vec![Violation::MaterialColumn { service_type: 0, classes: 2 }]);
        assert!(v[0].to_string().contains("material column 0"));
    }

    #[test]
    fn completion_must_be_certain_at_the_age_cap() {
        let mut cfg = unit_config();
        cfg.completion = vec![vec![0.5]];
        assert_eq!(
            validate_config(&cfg),
            vec![Violation::CompletionAtCap { service_type: 0, value: 0.5 }]
        );
    }

    #[test]
    fn arrival_mass_and_holding_sign_are_checked() {
        let mut cfg = unit_config();
        cfg.arrivals = vec![ArrivalLaw { counts: vec![0, 1], probs: vec![0.5, 0.5 + 1e-9] }];
        cfg.holding_weight = vec![0.5];
        let v = validate_config(&cfg);
        assert_eq!(v.len(), 2);
        assert!(matches!(v[0], Violation::ArrivalLaw { class: 0, .. }));
        assert!(matches!(v[1], Violation::HoldingSign { class: 0, .. }));
    }

    #[test]
    fn compatibility_column_and_server_count() {
        let mut cfg = unit_config();
        cfg.compatibility = vec![vec![0]];
        cfg.initial_idle = vec![2];
        let v = validate_config(&cfg);
        assert!(v.contains(&Violation::CompatibilityColumn { service_type: 0 }));
        assert!(v.contains(&Violation::InitialServers { expected: 1, found: 2 }));
    }

    #[test]
    fn toml_round_trip_keeps_hash() {
        let p = Problem::new(
            unit_config(),
            vec![ExtraConstraint { name: "port".into(), weights: vec![1], limit: 1 }],
        );
        let text = p.to_toml().unwrap();
        assert!(text.contains("schema = \"spn-network/v1\""));
        let back = Problem::from_toml(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.content_hash(), p.content_hash());
    }

    #[test]
    fn sampling_follows_cumulative_mass() {
        let law = ArrivalLaw { counts: vec![0, 2, 5], probs: vec![0.25, 0.5, 0.25] };
        assert_eq!(law.sample_with(0.0), 0);
        assert_eq!(law.sample_with(0.3), 2);
        assert_eq!(law.sample_with(0.9), 5);
        assert_eq!(law.sample_with(1.0 - 1e-17), 5);
    }
}
