//! Cross-solver verification of the atomic decomposition on one instance.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::atomic::{atomic_residuals, solve_atomic_step_dependent};
use super::evaluate::{evaluate_policy, per_step_gains};
use super::passing_last::solve_passing_last;
use super::rvi::{original_residual, solve_original_rvi};
use super::{max_abs_diff, PolicyTable, SolverOptions};
use crate::config::Problem;
use crate::error::{Result, SpnError};
use crate::sim::{compare_post_decisions, rollout, RolloutMode, SeedSpec, TablePolicy};
use crate::state_space::{build_kernels, enumerate_states, KernelSet};

pub const CERTIFICATE_SCHEMA: &str = "spn-certificate/v1";

/// Time steps of the paired rollouts comparing the two atomic dynamics.
pub const EQUIVALENCE_STEPS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckStatus {
    Passed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub num_states: usize,
    pub status: CheckStatus,
    pub gain: f64,
    #[serde(rename = "check")]
    pub checks: Vec<CheckRecord>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Passed
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Structured text: a header table and one `[[check]]` record per check.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let status = |s: CheckStatus| match s {
            CheckStatus::Passed => "PASSED",
            CheckStatus::Failed => "FAILED",
        };
        writeln!(out, "schema = \"{}\"", self.schema).unwrap();
        writeln!(out, "config_hash = \"{}\"", self.config_hash).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "num_states = {}", self.num_states).unwrap();
        writeln!(out, "status = \"{}\"", status(self.status)).unwrap();
        writeln!(out, "gain = {}", fmt_float(self.gain)).unwrap();
        for c in &self.checks {
            writeln!(out, "\n[[check]]").unwrap();
            writeln!(out, "name = \"{}\"", c.name).unwrap();
            writeln!(out, "value = {}", fmt_float(c.value)).unwrap();
            writeln!(out, "tolerance = {:e}", c.tolerance).unwrap();
            writeln!(out, "status = \"{}\"", status(c.status)).unwrap();
            if !c.note.is_empty() {
                writeln!(out, "note = \"{}\"", c.note.replace('"', "'")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SpnError::Format(e.to_string()))
    }
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

struct Checks {
    list: Vec<CheckRecord>,
}

impl Checks {
    fn push(&mut self, name: &str, value: f64, tolerance: f64, note: String) {
        let ok = value.is_finite() && value.abs() <= tolerance;
        self.list.push(CheckRecord {
            name: name.into(),
            value,
            tolerance,
            status: if ok { CheckStatus::Passed } else { CheckStatus::Failed },
            note,
        });
    }

    fn push_err(&mut self, name: &str, tolerance: f64, err: &SpnError) {
        self.push(name, f64::INFINITY, tolerance, err.to_string());
    }
}

/// Tolerances of a verification run.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub solver: SolverOptions,
    /// Bound on gain and relative-value gaps.
    pub gap_tol: f64,
    /// Bound on optimality-equation residuals.
    pub residual_tol: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), gap_tol: 1e-8, residual_tol: 1e-8, seed: 0 }
    }
}

/// Enumerates the instance and verifies it.
pub fn verify_instance(problem: &Problem, limit: usize, opts: &VerifyOptions) -> Result<Certificate> {
    let idx = enumerate_states(problem, limit)?;
    let k = build_kernels(problem, &idx)?;
    Ok(verify_kernels(problem, &k, opts))
}

/// Runs every check against given kernels. Solver failures become failed
/// checks rather than errors, so a damaged kernel still yields a report.
pub fn verify_kernels(problem: &Problem, k: &KernelSet, opts: &VerifyOptions) -> Certificate {
    let mut c = Checks { list: Vec::new() };
    let gap = opts.gap_tol;
    let res = opts.residual_tol;

    let integ = k.integrity();
    c.push("kernel_row_sum_error", integ.max_row_error, 1e-12, String::new());
    c.push(
        "kernel_invalid_entries",
        if integ.indices_in_range && integ.min_probability >= 0.0 { 0.0 } else { 1.0 },
        0.0,
        String::new(),
    );
    c.push(
        "kernel_config_hash_mismatch",
        if k.config_hash == problem.content_hash() { 0.0 } else { 1.0 },
        0.0,
        String::new(),
    );
    let kernel_ok = c.list.iter().all(|r| r.status == CheckStatus::Passed);

    let mut gain = f64::NAN;
    let original = if kernel_ok { solve_original_rvi(k, &opts.solver) } else {
        Err(SpnError::Format("kernel integrity failed".into()))
    };
    match &original {
        Ok(o) => {
            gain = o.gain;
            c.push("original_bellman_residual", original_residual(k, o.gain, &o.h), res, String::new());
            match evaluate_policy(k, &o.policy) {
                Ok(ev) => c.push("original_greedy_gain_gap", ev.gain - o.gain, gap, String::new()),
                Err(e) => c.push_err("original_greedy_gain_gap", gap, &e),
            }
        }
        Err(e) => c.push_err("original_bellman_residual", res, e),
    }

    let atomic = if kernel_ok { solve_atomic_step_dependent(k, &opts.solver) } else {
        Err(SpnError::Format("kernel integrity failed".into()))
    };
    match (&original, &atomic) {
        (Ok(o), Ok(a)) => {
            c.push("atomic_gain_gap", a.gain - o.gain, gap, String::new());
            c.push("atomic_step1_value_gap", max_abs_diff(&a.step_tables[0], &o.h), gap, String::new());
            let r = atomic_residuals(k, a.gain, &a.step_tables);
            c.push("atomic_bellman_residual", r.iter().copied().fold(0.0, f64::max), res, String::new());
            match per_step_gains(k, &a.policy) {
                Ok(g) => c.push("per_step_gain_identity", g.iter().sum::<f64>() - a.gain, res, String::new()),
                Err(e) => c.push_err("per_step_gain_identity", res, &e),
            }
            match evaluate_policy(k, &a.policy) {
                Ok(ev) => c.push("atomic_policy_gain_gap", ev.gain - o.gain, gap, String::new()),
                Err(e) => c.push_err("atomic_policy_gain_gap", gap, &e),
            }
        }
        (_, Err(e)) => c.push_err("atomic_gain_gap", gap, e),
        (Err(e), _) => c.push_err("atomic_gain_gap", gap, e),
    }

    if let Ok(o) = &original {
        match solve_passing_last(k, o.gain, &o.h) {
            Ok(p) => {
                c.push("passing_last_stratum_violations", 0.0, 0.0, String::new());
                c.push("passing_last_value_gap", max_abs_diff(&p.h, &o.h), gap, String::new());
                match evaluate_policy(k, &p.policy) {
                    Ok(ev) => c.push("passing_last_policy_gain_gap", ev.gain - o.gain, gap, String::new()),
                    Err(e) => c.push_err("passing_last_policy_gain_gap", gap, &e),
                }
                if let PolicyTable::StepIndependent(codes) = &p.policy {
                    let policy = TablePolicy::new(k, codes.clone());
                    let seeds = SeedSpec::for_round(opts.seed, 0, 1);
                    let pair = rollout(problem, &policy, RolloutMode::KStep, EQUIVALENCE_STEPS, &seeds)
                        .and_then(|a| {
                            rollout(problem, &policy, RolloutMode::PassingLast, EQUIVALENCE_STEPS, &seeds)
                                .map(|b| (a, b))
                        });
                    match pair {
                        Ok((a, b)) => c.push(
                            "dynamics_equivalence_mismatches",
                            compare_post_decisions(&a, &b).len() as f64,
                            0.0,
                            format!("{EQUIVALENCE_STEPS} time steps"),
                        ),
                        Err(e) => c.push_err("dynamics_equivalence_mismatches", 0.0, &e),
                    }
                }
            }
            Err(e) => c.push_err("passing_last_stratum_violations", 0.0, &e),
        }
    }

    let status = if c.list.iter().all(|r| r.status == CheckStatus::Passed) {
        CheckStatus::Passed
    } else {
        CheckStatus::Failed
    };
    Certificate {
        schema: CERTIFICATE_SCHEMA.into(),
        config_hash: problem.content_hash(),
        seed: opts.seed,
        num_states: k.num_states(),
        status,
        gain,
        checks: c.list,
    }
}
