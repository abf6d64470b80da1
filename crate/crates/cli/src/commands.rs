use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use spn_core::ppo::{self, TrainConfig, REPORT_CSV_HEADER};
use spn_core::sim::{gain_stats, rollout, RolloutMode, SeedSpec};
use spn_core::solvers::{solve_original_rvi, verify_kernels, SolverOptions, VerifyOptions};
use spn_core::state_space::{action_count_report, load_or_build, KernelSet};
use spn_core::Problem;

use crate::error::CliError;
use crate::input::{load_config, load_scenario, Instance};
use crate::policies::{exact_evaluation, resolve, PolicySpec};
use crate::{Command, CompareArgs, EnumerateArgs, EvaluateArgs, InstanceArgs, KernelArgs, RolloutArgs, TrainArgs, VerifyArgs};

/// Round index of evaluation rollouts; keeps their streams clear of the
/// training rounds of the same master seed.
const EVAL_ROUND: u64 = 1 << 20;

pub const COMPARE_CSV_HEADER: &str = "config_hash,seed,policy,mode,trajectories,horizon,gain,stderr,\
first_half,second_half,exact_gain,optimal_gain,relative_gap";

pub fn dispatch(cmd: Command) -> Result<i32, CliError> {
    let workers = match &cmd {
        Command::Validate(a) => a.workers,
        Command::Verify(a) => a.instance.workers,
        Command::Enumerate(a) => a.instance.workers,
        Command::Train(a) => a.instance.workers,
        Command::Evaluate(a) => a.instance.workers,
        Command::Compare(a) => a.instance.workers,
    };
    with_workers(workers, move || match cmd {
        Command::Validate(a) => validate(&a),
        Command::Verify(a) => verify(&a),
        Command::Enumerate(a) => enumerate(&a),
        Command::Train(a) => train(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Compare(a) => compare(&a),
    })?
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Input("--workers must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Failed(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn load_instance(a: &InstanceArgs) -> Result<Instance, CliError> {
    match (&a.config, &a.scenario) {
        (Some(path), _) => load_config(path),
        (None, Some(name)) => load_scenario(name),
        (None, None) => Err(CliError::Input("give --config or --scenario".into())),
    }
}

fn master_seed(a: &InstanceArgs, inst: &Instance) -> u64 {
    a.seed.or(inst.seed).unwrap_or(0)
}

/// Loads the instance and refuses to go on when it is malformed.
fn checked_instance(a: &InstanceArgs) -> Result<Instance, CliError> {
    let inst = load_instance(a)?;
    let violations = inst.problem.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Failed(format!("invalid network: {}", list.join("; "))));
    }
    Ok(inst)
}

fn kernels(problem: &Problem, a: &KernelArgs) -> Result<KernelSet, CliError> {
    Ok(load_or_build(problem, a.state_limit, a.kernel_cache.as_deref())?)
}

fn out_file(dir: &Path, name: &str) -> Result<std::path::PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.display().to_string(), source })?;
    Ok(dir.join(name))
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<std::path::PathBuf, CliError> {
    let path = out_file(dir, name)?;
    std::fs::write(&path, text).map_err(|source| CliError::Write { path: path.display().to_string(), source })?;
    Ok(path)
}

fn validate(a: &InstanceArgs) -> Result<i32, CliError> {
    let inst = load_instance(a)?;
    println!("config_hash {}", inst.problem.content_hash());
    let violations = inst.problem.validate();
    for v in &violations {
        println!("violation: {v}");
    }
    if violations.is_empty() {
        println!("valid");
        Ok(0)
    } else {
        println!("{} violation(s)", violations.len());
        Ok(1)
    }
}

fn verify(a: &VerifyArgs) -> Result<i32, CliError> {
    let inst = checked_instance(&a.instance)?;
    let seed = master_seed(&a.instance, &inst);
    let clock = Instant::now();
    let k = kernels(&inst.problem, &a.kernels)?;
    let opts = VerifyOptions {
        solver: SolverOptions { tol: a.tol, ..SolverOptions::default() },
        gap_tol: a.gap_tol,
        residual_tol: a.residual_tol,
        seed,
    };
    let cert = verify_kernels(&inst.problem, &k, &opts);
    let path = write_file(&a.instance.out, "certificate.toml", &cert.to_text())?;
    for c in &cert.checks {
        if !matches!(c.status, spn_core::solvers::CheckStatus::Passed) {
            println!("failed check {}: value {:e}, tolerance {:e} {}", c.name, c.value, c.tolerance, c.note);
        }
    }
    let status = if cert.passed() { "PASSED" } else { "FAILED" };
    println!("{status}: {} states, gain {:.12}, certificate {}", cert.num_states, cert.gain, path.display());
    eprintln!("verify finished in {:.2}s", clock.elapsed().as_secs_f64());
    Ok(if cert.passed() { 0 } else { 1 })
}

fn enumerate(a: &EnumerateArgs) -> Result<i32, CliError> {
    let inst = checked_instance(&a.instance)?;
    let seed = master_seed(&a.instance, &inst);
    let hash = inst.problem.content_hash();
    let cfg = &inst.problem.cfg;
    let k = kernels(&inst.problem, &a.kernels)?;

    let mut csv = String::from("config_hash,seed,state");
    for i in 0..cfg.num_classes {
        write!(csv, ",z{i}").unwrap();
    }
    for j in 0..cfg.num_service_types {
        for age in 0..=cfg.tau_max {
            write!(csv, ",n{j}_{age}").unwrap();
        }
        write!(csv, ",idle{j}").unwrap();
    }
    csv.push('\n');
    for (s, rec) in k.states.iter().enumerate() {
        write!(csv, "{hash},{seed},{s}").unwrap();
        for x in rec {
            write!(csv, ",{x}").unwrap();
        }
        csv.push('\n');
    }
    write_file(&a.instance.out, "states.csv", &csv)?;

    let r = action_count_report(&k);
    let report = format!(
        "config_hash,seed,num_states,atomic_actions,max_joint,mean_joint,max_feasible_atomic,mean_feasible_atomic\n\
         {hash},{seed},{},{},{},{:.6},{},{:.6}\n",
        r.num_states, r.atomic_actions, r.max_joint, r.mean_joint, r.max_feasible_atomic, r.mean_feasible_atomic
    );
    write_file(&a.instance.out, "action_counts.csv", &report)?;
    println!(
        "{} states; {} atomic actions (at most {} feasible); at most {} joint schedules (mean {:.2})",
        r.num_states, r.atomic_actions, r.max_feasible_atomic, r.max_joint, r.mean_joint
    );
    Ok(0)
}

/// Training settings: file or run-file table, then flag overrides, then the seed.
pub fn train_config(a: &TrainArgs, inst: &Instance) -> Result<TrainConfig, CliError> {
    let mut cfg = match &a.train_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Input(format!("cannot parse {}: {e}", path.display())))?
        }
        None => inst.train.clone().unwrap_or_default(),
    };
    let h = &a.hyper;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = h.$f { cfg.$f = v; } )* };
    }
    set!(
        iterations, trajectories, horizon, lambda, clip, epochs, critic_epochs, minibatch, entropy_coef, policy_lr,
        critic_lr, max_grad_norm, hidden, normalize_advantages, max_samples
    );
    if let Some(s) = a.instance.seed.or(inst.seed) {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn train(a: &TrainArgs) -> Result<i32, CliError> {
    let inst = checked_instance(&a.instance)?;
    let cfg = train_config(a, &inst)?;
    cfg.validate(inst.problem.cfg.num_servers)?;
    let hash = inst.problem.content_hash();
    let out = &a.instance.out;
    let kset = if a.exact { Some(kernels(&inst.problem, &a.kernels)?) } else { None };

    let manifest = format!(
        "config_hash = \"{hash}\"\nseed = {}\ntrain_config_hash = \"{}\"\n\n[train]\n{}",
        cfg.seed,
        cfg.hash(),
        cfg.to_toml()
    );
    write_file(out, "manifest.toml", &manifest)?;
    let csv_path = out_file(out, "train.csv")?;
    let ckpt_path = out.join("checkpoint.bin");
    let werr = |source| CliError::Write { path: csv_path.display().to_string(), source };
    let mut csv = BufWriter::new(File::create(&csv_path).map_err(werr)?);
    writeln!(csv, "{REPORT_CSV_HEADER}").map_err(werr)?;
    csv.flush().map_err(werr)?;

    let clock = Instant::now();
    let outcome = ppo::train(&inst.problem, &cfg, kset.as_ref(), |r, ckpt| {
        writeln!(csv, "{}", r.csv_row(&hash, cfg.seed))?;
        csv.flush()?;
        ckpt.save(&ckpt_path)?;
        let exact = r.greedy_gain.map(|g| format!(", greedy {g:.6}")).unwrap_or_default();
        eprintln!(
            "iteration {:>4}/{}: gain {:.6}{exact}, critic loss {:.4e}, clip {:.3} ({:.1}s, {:.1}s total)",
            r.iteration + 1,
            cfg.iterations,
            r.gain,
            r.critic_loss,
            r.clip_fraction,
            r.wall_clock_secs,
            clock.elapsed().as_secs_f64()
        );
        Ok(())
    })?;
    if outcome.reports.is_empty() {
        outcome.checkpoint.save(&ckpt_path)?;
    }
    if let Some(k) = &kset {
        let policy = outcome.checkpoint.policy_net(&inst.problem.cfg)?;
        let greedy = ppo::exact_greedy_gain(k, &policy)?;
        let best = solve_original_rvi(k, &SolverOptions::default())?.gain;
        println!("greedy policy gain {greedy:.9}, optimal gain {best:.9}");
    }
    println!("checkpoint {}", ckpt_path.display());
    Ok(0)
}

struct Row {
    label: String,
    gain: f64,
    stderr: f64,
    first_half: f64,
    second_half: f64,
    exact: Option<f64>,
}

/// Evaluates the listed policies on the same seeds.
fn evaluate_all(
    inst: &Instance,
    specs: &[(String, PolicySpec)],
    r: &RolloutArgs,
    ka: &KernelArgs,
    seed: u64,
) -> Result<(Vec<Row>, Option<f64>), CliError> {
    if r.trajectories == 0 || r.horizon == 0 {
        return Err(CliError::Input("--trajectories and --horizon must be positive".into()));
    }
    let mode = RolloutMode::from(r.mode);
    let kset = if r.exact { Some(kernels(&inst.problem, ka)?) } else { None };
    let optimal = kset.as_ref().map(|k| solve_original_rvi(k, &SolverOptions::default())).transpose()?.map(|s| s.gain);
    let seeds = SeedSpec::for_round(seed, EVAL_ROUND, r.trajectories);
    let mut rows = Vec::with_capacity(specs.len());
    for (label, spec) in specs {
        let policy = resolve(spec, label, &inst.problem, inst.scenario.as_ref(), r.policy_mode)?;
        let batch = rollout(&inst.problem, &policy, mode, r.horizon, &seeds)?;
        let st = gain_stats(&batch);
        // A stochastic policy cut short at its first Pass is a different chain
        // from the K-step one evaluated exactly.
        let exact = match &kset {
            Some(k) if mode == RolloutMode::KStep || policy.deterministic => {
                match exact_evaluation(k, &inst.problem, &policy) {
                    Ok(ev) => Some(ev.gain),
                    Err(e) => {
                        eprintln!("no exact gain for {label}: {e}");
                        None
                    }
                }
            }
            _ => None,
        };
        rows.push(Row {
            label: policy.label.clone(),
            gain: st.mean,
            stderr: st.stderr,
            first_half: st.first_half,
            second_half: st.second_half,
            exact,
        });
    }
    Ok((rows, optimal))
}

fn rows_csv(hash: &str, seed: u64, r: &RolloutArgs, rows: &[Row], optimal: Option<f64>) -> String {
    let mode = match r.mode {
        crate::ModeArg::KStep => "k-step",
        crate::ModeArg::PassingLast => "passing-last",
    };
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
    let mut out = format!("{COMPARE_CSV_HEADER}\n");
    for row in rows {
        let gap = match (row.exact, optimal) {
            (Some(g), Some(best)) if best != 0.0 => Some((best - g) / best.abs()),
            _ => None,
        };
        writeln!(
            out,
            "{hash},{seed},{},{mode},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}",
            row.label.replace(',', ";"),
            r.trajectories,
            r.horizon,
            row.gain,
            row.stderr,
            row.first_half,
            row.second_half,
            opt(row.exact),
            opt(optimal),
            opt(gap),
        )
        .unwrap();
    }
    out
}

fn print_rows(rows: &[Row], optimal: Option<f64>) {
    for row in rows {
        let exact = row.exact.map(|g| format!(", exact {g:.6}")).unwrap_or_default();
        println!("{:<24} gain {:.6} ± {:.6}{exact}", row.label, row.gain, row.stderr);
    }
    if let Some(g) = optimal {
        println!("optimal gain {g:.6}");
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<i32, CliError> {
    let inst = checked_instance(&a.instance)?;
    let seed = master_seed(&a.instance, &inst);
    let (label, spec) = match (&a.checkpoint, &a.baseline) {
        (Some(p), _) => (p.display().to_string(), PolicySpec::Checkpoint(p.clone())),
        (None, Some(b)) => match PolicySpec::parse(b) {
            PolicySpec::Checkpoint(_) => {
                return Err(CliError::Input(format!("unknown baseline {b:?}; use max-weight, greedy, random or pass")))
            }
            s => (b.clone(), s),
        },
        (None, None) => return Err(CliError::Input("give --checkpoint or --baseline".into())),
    };
    let (rows, optimal) = evaluate_all(&inst, &[(label, spec)], &a.rollout, &a.kernels, seed)?;
    let csv = rows_csv(&inst.problem.content_hash(), seed, &a.rollout, &rows, optimal);
    write_file(&a.instance.out, "evaluate.csv", &csv)?;
    print_rows(&rows, optimal);
    Ok(0)
}

fn compare(a: &CompareArgs) -> Result<i32, CliError> {
    let inst = checked_instance(&a.instance)?;
    let seed = master_seed(&a.instance, &inst);
    let specs: Vec<(String, PolicySpec)> =
        a.policies.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| (s.to_string(), PolicySpec::parse(s))).collect();
    if specs.is_empty() {
        return Err(CliError::Input("--policies is empty".into()));
    }
    let (rows, optimal) = evaluate_all(&inst, &specs, &a.rollout, &a.kernels, seed)?;
    let csv = rows_csv(&inst.problem.content_hash(), seed, &a.rollout, &rows, optimal);
    write_file(&a.instance.out, "compare.csv", &csv)?;
    print_rows(&rows, optimal);
    Ok(0)
}
