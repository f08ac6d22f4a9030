//! End-to-end runs of the `dlsn` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dlsn::data_io::{read_csv, read_series, ParamTraceRow, RunManifest};
use serde::Deserialize;

fn dlsn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlsn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = dlsn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "[girf]\nparticles = 100\n[fit]\niterations = 3\n";

/// Simulates a small S1 data set into `dir/sim`.
fn small_sim(dir: &Path, nodes: usize, times: usize) -> PathBuf {
    let sim = dir.join("sim");
    ok(&[
        "--seed",
        "5",
        "--out-dir",
        s(&sim),
        "simulate",
        "--nodes",
        &nodes.to_string(),
        "--times",
        &times.to_string(),
    ]);
    sim
}

#[derive(Deserialize)]
struct Summary {
    quantity: String,
    value: f64,
}

fn summary(path: &Path) -> BTreeMap<String, f64> {
    read_csv::<Summary>(path)
        .unwrap()
        .into_iter()
        .map(|r| (r.quantity, r.value))
        .collect()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn simulate_defaults_to_thirty_nodes_and_twenty_five_times() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s1");
    ok(&["--out-dir", s(&out), "simulate"]);
    let series = read_series(&out.join("series.csv")).unwrap();
    assert_eq!((series.n(), series.len()), (30, 25));
    let manifest = RunManifest::read(&out.join("manifest.toml")).unwrap();
    assert_eq!(manifest.seed, 0);
    assert_eq!(manifest.command, "simulate");
    let names: Vec<_> = manifest
        .outputs
        .iter()
        .map(|d| d.path.to_str().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        ["series.csv", "latent.csv", "truth.csv", "base_rate.csv"]
    );
}

#[test]
fn offline_fit_writes_one_row_per_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = small_sim(tmp.path(), 8, 5);
    let cfg = write(
        tmp.path(),
        "run.toml",
        "[girf]\nparticles = 60\n[fit]\niterations = 20\n",
    );
    let out = tmp.path().join("fit");
    ok(&[
        "--config",
        s(&cfg),
        "--out-dir",
        s(&out),
        "fit",
        "--series",
        s(&sim.join("series.csv")),
    ]);
    let rows: Vec<ParamTraceRow> = read_csv(&out.join("params.csv")).unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(
        rows.iter().map(|r| r.index).collect::<Vec<_>>(),
        (1..=20).collect::<Vec<_>>()
    );
    let manifest = RunManifest::read(&out.join("manifest.toml")).unwrap();
    let last = rows.last().unwrap();
    assert_eq!(manifest.params.unwrap().alpha, last.alpha);
    assert_eq!(manifest.inputs.len(), 1);
}

#[test]
fn online_fit_with_lookahead_three_has_one_row_per_time() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = small_sim(tmp.path(), 8, 7);
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let out = tmp.path().join("fit");
    ok(&[
        "--config",
        s(&cfg),
        "--out-dir",
        s(&out),
        "fit",
        "--mode",
        "online",
        "--lookahead",
        "3",
        "--series",
        s(&sim.join("series.csv")),
    ]);
    let rows: Vec<ParamTraceRow> = read_csv(&out.join("params.csv")).unwrap();
    assert_eq!(rows.len(), 7);
}

#[test]
fn outputs_do_not_depend_on_the_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = small_sim(tmp.path(), 10, 6);
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let series = sim.join("series.csv");
    let truth = sim.join("truth.csv");
    let mut runs = Vec::new();
    for (mode, threads) in [
        ("offline", "1"),
        ("offline", "3"),
        ("online", "1"),
        ("online", "4"),
    ] {
        let out = tmp.path().join(format!("fit-{mode}-{threads}"));
        ok(&[
            "--config",
            s(&cfg),
            "--seed",
            "11",
            "--threads",
            threads,
            "--out-dir",
            s(&out),
            "fit",
            "--mode",
            mode,
            "--series",
            s(&series),
            "--truth",
            s(&truth),
            "--holdout-last",
        ]);
        runs.push(dir_contents(&out));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[2], runs[3]);
    assert!(runs[0].contains_key("predictive.csv"));
}

#[test]
fn a_different_seed_changes_the_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = small_sim(tmp.path(), 8, 5);
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let series = sim.join("series.csv");
    let run = |seed: &str| {
        let out = tmp.path().join(format!("fit-{seed}"));
        ok(&[
            "--config",
            s(&cfg),
            "--seed",
            seed,
            "--out-dir",
            s(&out),
            "fit",
            "--series",
            s(&series),
        ]);
        fs::read(out.join("params.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn evaluate_reports_auc_mse_and_aae() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = small_sim(tmp.path(), 6, 4);
    let truth = sim.join("truth.csv");
    let series = sim.join("series.csv");

    // Estimates equal to the truth give zero MSE.
    let out = tmp.path().join("eval-truth");
    ok(&[
        "--out-dir",
        s(&out),
        "evaluate",
        "--series",
        s(&series),
        "--probabilities",
        s(&truth),
        "--truth",
        s(&truth),
    ]);
    let sm = summary(&out.join("summary.csv"));
    assert_eq!(sm["mse_prob_mean"], 0.0);
    assert_eq!(sm["auc_model"], sm["auc_truth"]);

    // Uniform scores give AUC 0.5.
    let mut text = String::from("t,i,j,p\n");
    for t in 1..=4 {
        for i in 0..6 {
            for j in i + 1..6 {
                text.push_str(&format!("{t},{i},{j},0.5\n"));
            }
        }
    }
    let flat = write(tmp.path(), "flat.csv", &text);
    let out = tmp.path().join("eval-flat");
    ok(&[
        "--out-dir",
        s(&out),
        "evaluate",
        "--series",
        s(&series),
        "--probabilities",
        s(&flat),
    ]);
    assert_eq!(summary(&out.join("summary.csv"))["auc_model"], 0.5);

    // One AAE row per pair.
    let pred: String = std::iter::once("t,i,j,p\n".to_string())
        .chain((0..6).flat_map(|i| (i + 1..6).map(move |j| format!("4,{i},{j},0.3\n"))))
        .collect();
    let pred = write(tmp.path(), "pred.csv", &pred);
    let out = tmp.path().join("eval-aae");
    ok(&[
        "--out-dir",
        s(&out),
        "evaluate",
        "--series",
        s(&series),
        "--predictive",
        s(&pred),
        "--replicates",
        "200",
    ]);
    let aae = fs::read_to_string(out.join("aae.csv")).unwrap();
    assert_eq!(aae.lines().count(), 1 + 15);
}

#[test]
fn ingest_conserves_counts_and_maps_nodes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(
        tmp.path(),
        "contacts.tsv",
        "t\ti\tj\n100\t7\t3\n120\t3\t7\n130\t9\t9\n400\t3\t12\n",
    );
    let out = tmp.path().join("ing");
    ok(&[
        "--out-dir",
        s(&out),
        "ingest",
        "--input",
        s(&input),
        "--window",
        "240",
        "--mode",
        "count",
    ]);
    let series = read_series(&out.join("series.csv")).unwrap();
    assert_eq!(series.total(), 3);
    assert_eq!(series.len(), 2);
    assert_eq!(series.get(0, 0, 1), 2);
    assert_eq!(series.get(1, 0, 2), 1);
    assert_eq!(
        fs::read_to_string(out.join("nodes.csv")).unwrap(),
        "index,label\n0,3\n1,7\n2,12\n"
    );
}

#[test]
fn benchmark_times_every_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bench.toml",
        "[benchmark]\nnodes = [4, 6]\nnodes_times = 3\ntimes = [4, 8]\ntimes_nodes = 4\nparticles = 20\nrepeats = 2\n",
    );
    let out = tmp.path().join("bench");
    ok(&["--config", s(&cfg), "--out-dir", s(&out), "benchmark"]);
    let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
    // (2 sizes x 3 substep counts + 2 lengths + 1 doubled) x 2 repeats.
    assert_eq!(timing.lines().count(), 1 + 18);
    let sm = summary(&out.join("benchmark_summary.csv"));
    assert!(sm.contains_key("nodes_loglog_slope_s_one_n"));
    assert!(sm.contains_key("times_linear_r_squared"));
    assert!(sm.contains_key("particle_doubling_ratio"));
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| dlsn(args).status.code().unwrap();
    let out = tmp.path().join("x");

    let bad_key = write(tmp.path(), "bad.toml", "[girf]\nparticle = 3\n");
    assert_eq!(
        code(&["--config", s(&bad_key), "--out-dir", s(&out), "simulate"]),
        2
    );
    let bad_value = write(tmp.path(), "phi.toml", "[model]\nphi = 1.5\n");
    assert_eq!(
        code(&["--config", s(&bad_value), "--out-dir", s(&out), "simulate"]),
        2
    );
    assert_eq!(code(&["--out-dir", s(&out), "fit"]), 2);

    let sim = small_sim(tmp.path(), 6, 3);
    assert_eq!(
        code(&[
            "--out-dir",
            s(&out),
            "evaluate",
            "--series",
            s(&sim.join("series.csv")),
            "--probabilities",
            s(&sim.join("truth.csv")),
            "--metrics",
            "mse",
        ]),
        2
    );

    let garbled = write(tmp.path(), "garbled.csv", "t,i,j\n1,a,b\nnot-a-time,c,d\n");
    assert_eq!(
        code(&["--out-dir", s(&out), "ingest", "--input", s(&garbled)]),
        3
    );

    let collapse = write(
        tmp.path(),
        "collapse.toml",
        "[model]\nlikelihood = \"poisson_log\"\n[girf]\nparticles = 20\n[fit]\niterations = 1\n[fit.start]\nalpha = 800.0\nsigma = 0.5\nphi = 0.9\n",
    );
    let out_c = tmp.path().join("c");
    let collapsed = dlsn(&[
        "--config",
        s(&collapse),
        "--out-dir",
        s(&out_c),
        "fit",
        "--series",
        s(&sim.join("series.csv")),
    ]);
    assert_eq!(collapsed.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&collapsed.stderr).contains("t=0, s=1"));
}

#[test]
fn manifest_replays_to_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = small_sim(tmp.path(), 8, 4);
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let first = tmp.path().join("first");
    ok(&[
        "--config",
        s(&cfg),
        "--seed",
        "21",
        "--out-dir",
        s(&first),
        "fit",
        "--series",
        s(&sim.join("series.csv")),
    ]);

    // Rebuild a config file from the manifest and run again with its seed.
    let manifest = RunManifest::read(&first.join("manifest.toml")).unwrap();
    let replay_cfg = write(
        tmp.path(),
        "replay.toml",
        &toml::to_string(&manifest.config).unwrap(),
    );
    let second = tmp.path().join("second");
    ok(&[
        "--config",
        s(&replay_cfg),
        "--seed",
        &manifest.seed.to_string(),
        "--out-dir",
        s(&second),
        "fit",
    ]);
    assert_eq!(dir_contents(&first), dir_contents(&second));
}
