use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spn_core::scenarios::make_mgeo1;
use spn_core::solvers::Certificate;
use spn_core::state_space::KernelSet;
use spn_core::{ArrivalLaw, Problem};

fn spn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spn")).args(args).output().expect("spawn spn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn m1_file(dir: &Path) -> PathBuf {
    let path = dir.join("m1.toml");
    Problem::unconstrained(make_mgeo1(0.5, 1.0, 3, -1.0)).save(&path).unwrap();
    path
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = m1_file(dir.path());
    let o = spn(&["validate", "--config", s(&good)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let mut p = Problem::unconstrained(make_mgeo1(0.5, 1.0, 3, -1.0));
    p.cfg.num_classes = 2;
    p.cfg.material = vec![vec![1], vec![1]];
    p.cfg.routing = vec![vec![0], vec![0]];
    p.cfg.arrivals = vec![ArrivalLaw::none(); 2];
    p.cfg.holding_weight = vec![-1.0; 2];
    p.cfg.item_cap = vec![1; 2];
    let bad = dir.path().join("bad.toml");
    p.save(&bad).unwrap();
    let o = spn(&["validate", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("material column 0"), "{}", stdout(&o));

    let o = spn(&["validate", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = spn(&["validate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_network_blocks_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Problem::unconstrained(make_mgeo1(0.5, 1.0, 3, -1.0));
    p.cfg.completion = vec![vec![1.5]];
    let bad = dir.path().join("bad.toml");
    p.save(&bad).unwrap();
    let o = spn(&["verify", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_passes_and_rejects_a_corrupted_cache() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cache = out.join("switch.kernels");
    let o = spn(&["verify", "--scenario", "switch2", "--out", s(out), "--kernel-cache", s(&cache)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let cert = Certificate::from_text(&read(out.join("certificate.toml"))).unwrap();
    assert!(cert.passed());
    assert_eq!(cert.num_states, 136);
    assert!((cert.gain - -1.6213069129452233).abs() < 1e-8);

    let hash = spn_core::scenarios::ScenarioSpec::Switch {
        w: 2,
        rates: vec![vec![0.3, 0.4], vec![0.35, 0.3]],
        cap: 1,
    }
    .build()
    .unwrap()
    .content_hash();
    let mut k = KernelSet::load(&cache, &hash).unwrap();
    for p in k.sys_prob.iter_mut().take(40) {
        *p *= 0.9;
    }
    k.save(&cache).unwrap();
    let o = spn(&["verify", "--scenario", "switch2", "--out", s(out), "--kernel-cache", s(&cache)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAILED"));
    assert!(stdout(&o).contains("kernel_row_sum_error"));
    let cert = Certificate::from_text(&read(out.join("certificate.toml"))).unwrap();
    assert!(!cert.passed());
}

#[test]
fn state_limit_is_a_resource_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = spn(&["enumerate", "--scenario", "hospital2", "--state-limit", "50", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hint"));
}

#[test]
fn enumerate_writes_states_with_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = spn(&["enumerate", "--scenario", "m1", "--seed", "7", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let csv = read(dir.path().join("states.csv"));
    let hash = Problem::unconstrained(make_mgeo1(0.5, 1.0, 3, -1.0)).content_hash();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.starts_with(&format!("{hash},7,"))));
    let counts = read(dir.path().join("action_counts.csv"));
    assert!(counts.lines().nth(1).unwrap().starts_with(&format!("{hash},7,7,2,")));
}

#[test]
fn train_with_no_iterations_writes_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = spn(&["train", "--scenario", "m1", "--iterations", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read(dir.path().join("train.csv")).lines().count(), 1);
    let ckpt = spn_core::policy_net::Checkpoint::load(&dir.path().join("checkpoint.bin")).unwrap();
    assert_eq!(ckpt.iteration, 0);
    let manifest = read(dir.path().join("manifest.toml"));
    assert!(manifest.contains("seed = 0"));
}

#[test]
fn train_rejects_bad_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = spn(&["train", "--scenario", "m1", "--lambda", "1.0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let o = spn(&["train", "--scenario", "m1", "--max-samples", "10", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
}

fn tiny_train(out: &Path, workers: &str) -> String {
    let o = spn(&[
        "train", "--scenario", "switch2", "--iterations", "2", "--trajectories", "3", "--horizon", "64",
        "--hidden", "8", "--minibatch", "32", "--seed", "11", "--exact", "--workers", workers, "--out", s(out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    read(out.join("train.csv"))
}

#[test]
fn reruns_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny_train(&dir.path().join("a"), "1");
    let b = tiny_train(&dir.path().join("b"), "3");
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
    assert_eq!(
        std::fs::read(dir.path().join("a/checkpoint.bin")).unwrap(),
        std::fs::read(dir.path().join("b/checkpoint.bin")).unwrap()
    );

    let ckpt = dir.path().join("a/checkpoint.bin");
    let cmp = |w: &str, out: &str| {
        let out = dir.path().join(out);
        let o = spn(&[
            "compare", "--scenario", "switch2", "--policies", &format!("{},random", s(&ckpt)), "--policy-mode",
            "stochastic", "--trajectories", "3", "--horizon", "200", "--exact", "--workers", w, "--out", s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0));
        read(out.join("compare.csv"))
    };
    assert_eq!(cmp("1", "c1"), cmp("2", "c2"));
}

#[test]
fn pass_policy_without_arrivals_has_zero_gain() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    Problem::unconstrained(make_mgeo1(0.0, 1.0, 3, -1.0)).save(&path).unwrap();
    let o = spn(&[
        "evaluate", "--config", s(&path), "--baseline", "pass", "--trajectories", "2", "--horizon", "100", "--exact",
        "--out", s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("evaluate.csv"));
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "pass");
    assert_eq!(row[6].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row[10].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn comparing_a_policy_with_itself_gives_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = spn(&[
        "compare", "--scenario", "switch2", "--policies", "random,random", "--trajectories", "2", "--horizon", "300",
        "--out", s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = read(dir.path().join("compare.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "config_hash,seed,policy,mode,trajectories,horizon,gain,stderr,first_half,second_half,exact_gain,optimal_gain,relative_gap");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], lines[2]);
}

#[test]
fn max_weight_simulation_matches_its_exact_gain() {
    let dir = tempfile::tempdir().unwrap();
    let o = spn(&[
        "evaluate", "--scenario", "switch2", "--baseline", "max-weight", "--trajectories", "8", "--horizon", "5000",
        "--exact", "--out", s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = read(dir.path().join("evaluate.csv"));
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').skip(6).map(|x| x.parse().unwrap_or(f64::NAN)).collect();
    let (gain, se, exact) = (row[0], row[1], row[4]);
    assert!((exact - -1.6437308360605927).abs() < 1e-8);
    assert!((gain - exact).abs() < 5.0 * se, "{gain} vs {exact} (se {se})");
}

#[test]
fn passing_last_mode_agrees_for_a_deterministic_policy() {
    let dir = tempfile::tempdir().unwrap();
    let run = |mode: &str| {
        let out = dir.path().join(mode);
        let o = spn(&[
            "evaluate", "--scenario", "hospital2", "--baseline", "greedy", "--mode", mode, "--trajectories", "2",
            "--horizon", "500", "--out", s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0));
        let csv = read(out.join("evaluate.csv"));
        csv.lines().nth(1).unwrap().split(',').skip(6).take(4).map(str::to_string).collect::<Vec<_>>()
    };
    assert_eq!(run("k-step"), run("passing-last"));
}

#[test]
fn run_file_supplies_scenario_seed_and_training() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "seed = 5\n\n[scenario]\nkind = \"mgeo1\"\np_arrival = 0.5\nmu0 = 1.0\nz_cap = 3\n\n[train]\niterations = 1\ntrajectories = 2\nhorizon = 16\nhidden = 4\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = spn(&["train", "--config", s(&path), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(out.join("train.csv"));
    assert!(csv.lines().nth(1).unwrap().contains(",5,0,"));
    assert!(read(out.join("manifest.toml")).contains("horizon = 16"));

    std::fs::write(&path, "seed = 5\nbogus = 1\n").unwrap();
    let o = spn(&["validate", "--config", s(&path)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_baselines_and_mismatched_checkpoints_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = spn(&["evaluate", "--scenario", "m1", "--baseline", "oracle", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = spn(&["evaluate", "--scenario", "m1", "--baseline", "max-weight", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));

    let t = dir.path().join("t");
    assert_eq!(spn(&["train", "--scenario", "m1", "--iterations", "0", "--out", s(&t)]).status.code(), Some(0));
    let o = spn(&["evaluate", "--scenario", "switch2", "--checkpoint", s(&t.join("checkpoint.bin")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
}
