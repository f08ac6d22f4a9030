use std::path::{Path, PathBuf};
use std::time::Instant;

use dlsn::data_io::{
    aggregate, file_digest, parse_edge_file, read_csv, read_probabilities, read_series, write_csv,
    write_filter_trace, write_latent, write_node_map, write_param_trace, write_probabilities,
    write_series, AaeRow, EssRow, FileDigest, ProbabilityRow, RocRow, RunManifest,
};
use dlsn::estimation::{fit_offline, fit_online, initialize_params, ParamRow};
use dlsn::girf::{run_girf, GirfConfig};
use dlsn::metrics::{
    average_absolute_error, constant_rate, linear_fit, median, mse_pairs, observation_ess,
    pooled_roc, predict_final, ProbabilityEstimates,
};
use dlsn::model::{
    pair_count, pair_index, pairs, simulate_scenario, AdjacencySeries, ScenarioSpec, StaticParams,
};
use dlsn::smc::{FilterTrace, ParticleEnsemble};
use dlsn::{RandomStreams, StreamKind};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{require, FitMode, Metric, RunConfig};
use crate::CliError;

/// Writes files into the output directory and remembers their digests.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(dlsn::Error::from)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn csv<T: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = T>,
    ) -> Result<(), CliError> {
        let path = self.path(name);
        write_csv(&path, rows)?;
        Ok(())
    }

    /// Finishes the run by writing `manifest.toml`. Output paths are recorded
    /// relative to the output directory.
    pub fn finish(self, mut manifest: RunManifest) -> Result<(), CliError> {
        for name in &self.written {
            let digest = file_digest(&self.dir.join(name))?;
            manifest.outputs.push(FileDigest {
                path: PathBuf::from(name),
                sha256: digest.sha256,
            });
        }
        manifest.write(&self.dir.join("manifest.toml"))?;
        info!(
            "wrote {} files to {}",
            self.written.len() + 1,
            self.dir.display()
        );
        Ok(())
    }
}

fn manifest(
    command: &str,
    cfg: &RunConfig,
    seed: u64,
    inputs: &[&Path],
) -> Result<RunManifest, CliError> {
    let mut m = RunManifest::new(command, seed);
    m.config = cfg.to_table()?;
    for path in inputs {
        m.inputs.push(file_digest(path)?);
    }
    Ok(m)
}

#[derive(Serialize)]
struct BaseRateRow {
    t: usize,
    alpha: f64,
}

pub fn simulate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let spec = cfg.scenario_spec()?;
    let mut rng = RandomStreams::new(seed).stream(StreamKind::Simulate, 0, 0);
    let sim = simulate_scenario(&spec, &mut rng)?;
    info!(
        "simulated N={}, T={} under {:?}",
        spec.n, spec.t, cfg.scenario.kind
    );

    let mut files = Outputs::new(out)?;
    write_series(&files.path("series.csv"), &sim.series)?;
    write_latent(&files.path("latent.csv"), &sim.latent)?;
    write_probabilities(
        &files.path("truth.csv"),
        &ProbabilityEstimates::new(spec.n, sim.edge_means)?,
    )?;
    files.csv(
        "base_rate.csv",
        sim.alphas
            .iter()
            .enumerate()
            .map(|(k, &alpha)| BaseRateRow { t: k + 1, alpha }),
    )?;
    let mut m = manifest("simulate", cfg, seed, &[])?;
    m.params = Some(spec.params);
    files.finish(m)
}

/// What the two fitting modes have in common.
struct FitResult {
    trace: Vec<ParamRow>,
    filter_trace: FilterTrace,
    log_likelihood: f64,
    edge_means: Vec<Vec<f64>>,
    ensemble: ParticleEnsemble<dlsn::model::LatentConfig>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    quantity: &'a str,
    value: f64,
}

pub fn fit(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let series_path = require(&cfg.fit.series, "fit.series", "--series")?;
    let full = read_series(series_path)?;
    full.check_domain(cfg.model.likelihood)?;
    let holdout = cfg.fit.holdout_last;
    if holdout && full.len() < 3 {
        return Err(CliError::Config(
            "holdout_last needs at least three networks".into(),
        ));
    }
    let series = if holdout {
        full.truncated(full.len() - 1)
    } else {
        full.clone()
    };
    let fit_cfg = cfg.fit.fit_config()?;
    let girf = cfg.girf_config(series.n())?;
    let streams = RandomStreams::new(seed);

    let init = match cfg.fit.start {
        Some(s) => StaticParams::new(s.alpha, s.sigma, s.phi)?
            .with_link(cfg.model.link)
            .with_likelihood(cfg.model.likelihood),
        None => {
            let mut init_cfg = cfg.init;
            init_cfg.latent_dim = cfg.model.latent_dim;
            initialize_params(
                &series,
                cfg.model.link,
                cfg.model.likelihood,
                &init_cfg,
                &streams.child(StreamKind::Grid, 0),
            )?
        }
    };
    info!(
        "fitting {:?} on N={}, T={} from alpha={:.4}, sigma={:.4}, phi={:.4} (S={}, B={}, M={})",
        cfg.fit.mode,
        series.n(),
        series.len(),
        init.alpha,
        init.sigma,
        init.phi,
        girf.substeps,
        girf.lookahead,
        girf.particles
    );

    let result = match cfg.fit.mode {
        FitMode::Offline => {
            let f = fit_offline(&series, &init, &girf, &fit_cfg, &streams)?;
            let log_likelihood = f.trace.last().map_or(f64::NAN, |r| r.log_lik);
            FitResult {
                filter_trace: f.filter_traces.last().cloned().unwrap_or_default(),
                trace: f.trace,
                log_likelihood,
                edge_means: f.edge_means,
                ensemble: f.ensemble,
            }
        }
        FitMode::Online => {
            let f = fit_online(&series, &init, &girf, &fit_cfg, &streams)?;
            FitResult {
                trace: f.trace,
                filter_trace: f.filter_trace,
                log_likelihood: f.log_likelihood,
                edge_means: f.edge_means,
                ensemble: f.ensemble,
            }
        }
    };
    let last = result
        .trace
        .last()
        .expect("nonempty parameter trace")
        .params;

    let mut inputs = vec![series_path];
    let truth = match &cfg.fit.truth {
        Some(p) => {
            inputs.push(p);
            Some(read_probabilities(p)?)
        }
        None => None,
    };
    let mut ess_rows = Vec::new();
    for (gap, ess) in observation_ess(&result.filter_trace) {
        let t = gap + 1;
        let mse_prob = match &truth {
            Some(tr) if t <= tr.len() => {
                Some(mse_pairs(tr.slice(t - 1), &result.edge_means[t - 1])?)
            }
            _ => None,
        };
        ess_rows.push(EssRow { t, ess, mse_prob });
    }

    let mut files = Outputs::new(out)?;
    write_param_trace(&files.path("params.csv"), &result.trace)?;
    write_filter_trace(&files.path("filter_trace.csv"), &result.filter_trace)?;
    write_probabilities(
        &files.path("probabilities.csv"),
        &ProbabilityEstimates::new(series.n(), result.edge_means.clone())?,
    )?;
    files.csv("ess.csv", ess_rows)?;
    files.csv(
        "fit_summary.csv",
        [
            SummaryRow {
                quantity: "alpha",
                value: last.alpha,
            },
            SummaryRow {
                quantity: "sigma",
                value: last.sigma,
            },
            SummaryRow {
                quantity: "phi",
                value: last.phi,
            },
            SummaryRow {
                quantity: "log_likelihood",
                value: result.log_likelihood,
            },
        ],
    )?;
    if holdout {
        let predictive = predict_final(
            &result.ensemble,
            &last,
            &streams.child(StreamKind::Predict, 0),
        )?;
        let t = full.len();
        files.csv(
            "predictive.csv",
            pairs(series.n())
                .zip(predictive)
                .map(|((i, j), p)| ProbabilityRow { t, i, j, p }),
        )?;
    }
    info!(
        "final alpha={:.4}, sigma={:.4}, phi={:.4}, log-likelihood {:.3}",
        last.alpha, last.sigma, last.phi, result.log_likelihood
    );
    let mut m = manifest("fit", cfg, seed, &inputs)?;
    m.params = Some(last);
    files.finish(m)
}

#[derive(Serialize)]
struct MseRow {
    t: usize,
    mse_prob: f64,
}

/// Predictive means at one time, as written by `fit` with `holdout_last`.
fn read_predictive(path: &Path, n: usize) -> Result<(usize, Vec<f64>), CliError> {
    let rows: Vec<ProbabilityRow> = read_csv(path)?;
    let t = rows.first().map(|r| r.t).unwrap_or(0);
    let mut out = vec![f64::NAN; pair_count(n)];
    for (k, r) in rows.iter().enumerate() {
        if r.t != t || r.i >= r.j || r.j >= n {
            return Err(dlsn::Error::Parse {
                line: k + 2,
                message: format!("predictive row {r:?} does not fit a single time over {n} nodes"),
            }
            .into());
        }
        out[pair_index(n, r.i, r.j)] = r.p;
    }
    if t == 0 || out.iter().any(|p| p.is_nan()) {
        return Err(CliError::Config(format!(
            "{} must hold every pair at one time",
            path.display()
        )));
    }
    Ok((t, out))
}

pub fn evaluate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let e = &cfg.evaluate;
    let available = |m: Metric| match m {
        Metric::Auc => e.series.is_some() && e.probabilities.is_some(),
        Metric::Mse => e.truth.is_some() && e.probabilities.is_some(),
        Metric::Aae => e.series.is_some() && e.predictive.is_some(),
    };
    let metrics: Vec<Metric> = match &e.metrics {
        Some(list) => {
            for &m in list {
                if !available(m) {
                    return Err(CliError::Config(match m {
                        Metric::Mse if e.truth.is_none() => {
                            "MSE needs simulation truth: set evaluate.truth or pass --truth"
                                .to_string()
                        }
                        Metric::Mse => {
                            "MSE needs fitted probabilities (--probabilities)".to_string()
                        }
                        Metric::Auc => "AUC needs --series and --probabilities".to_string(),
                        Metric::Aae => "AAE needs --series and --predictive".to_string(),
                    }));
                }
            }
            list.clone()
        }
        None => [Metric::Auc, Metric::Mse, Metric::Aae]
            .into_iter()
            .filter(|&m| available(m))
            .collect(),
    };
    if metrics.is_empty() {
        return Err(CliError::Config(
            "nothing to evaluate: give --series with --probabilities or --predictive, or --truth with --probabilities"
                .into(),
        ));
    }

    let (series_path, prob_path) = (e.series.as_deref(), e.probabilities.as_deref());
    let (truth_path, pred_path) = (e.truth.as_deref(), e.predictive.as_deref());
    let inputs: Vec<&Path> = [series_path, prob_path, truth_path, pred_path]
        .into_iter()
        .flatten()
        .collect();
    let series = series_path.map(read_series).transpose()?;
    let estimates = prob_path.map(read_probabilities).transpose()?;
    let truth = truth_path.map(read_probabilities).transpose()?;

    let mut files = Outputs::new(out)?;
    let mut summary: Vec<(String, f64)> = Vec::new();

    if metrics.contains(&Metric::Auc) {
        let (series, est) = (
            series.as_ref().expect("checked"),
            estimates.as_ref().expect("checked"),
        );
        check_nodes(series.n(), est.n(), "probabilities")?;
        let len = est.len().min(series.len());
        let mut rows = Vec::new();
        let mut curves = vec![("model", est)];
        if let Some(tr) = &truth {
            check_nodes(series.n(), tr.n(), "truth")?;
            curves.push(("truth", tr));
        }
        for (name, scores) in curves {
            let roc = pooled_roc(
                series,
                &scores.slices()[..len.min(scores.len())],
                0..len.min(scores.len()),
            )?;
            rows.extend(roc.points.iter().map(|p| RocRow::new(name, p)));
            summary.push((format!("auc_{name}"), roc.auc));
        }
        files.csv("roc.csv", rows)?;
    }

    if metrics.contains(&Metric::Mse) {
        let (tr, est) = (
            truth.as_ref().expect("checked"),
            estimates.as_ref().expect("checked"),
        );
        check_nodes(tr.n(), est.n(), "probabilities")?;
        let len = tr.len().min(est.len());
        let rows = (0..len)
            .map(|k| {
                Ok(MseRow {
                    t: k + 1,
                    mse_prob: mse_pairs(tr.slice(k), est.slice(k))?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mean = rows.iter().map(|r| r.mse_prob).sum::<f64>() / rows.len().max(1) as f64;
        summary.push(("mse_prob_mean".into(), mean));
        files.csv("mse.csv", rows)?;
    }

    if metrics.contains(&Metric::Aae) {
        let series = series.as_ref().expect("checked");
        let (t, predictive) = read_predictive(pred_path.expect("checked"), series.n())?;
        if t > series.len() || t < 2 {
            return Err(CliError::Config(format!(
                "predictive time {t} is outside the observed series (T={})",
                series.len()
            )));
        }
        let observed = series.slice(t - 1);
        let streams = RandomStreams::new(seed).child(StreamKind::Replicate, 0);
        let likelihood = cfg.model.likelihood;
        let model =
            average_absolute_error(observed, &predictive, likelihood, e.replicates, &streams)?;
        let rate = constant_rate(&series.truncated(t - 1));
        let baseline = average_absolute_error(
            observed,
            &vec![rate; observed.len()],
            likelihood,
            e.replicates,
            &streams,
        )?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        summary.push(("aae_model".into(), mean(&model)));
        summary.push(("aae_constant_rate".into(), mean(&baseline)));
        files.csv(
            "aae.csv",
            pairs(series.n()).enumerate().map(|(k, (i, j))| AaeRow {
                i,
                j,
                y: observed[k],
                prediction: predictive[k],
                aae: model[k],
            }),
        )?;
    }

    for (name, value) in &summary {
        info!("{name} = {value:.6}");
    }
    files.csv(
        "summary.csv",
        summary.iter().map(|(quantity, value)| SummaryRow {
            quantity,
            value: *value,
        }),
    )?;
    files.finish(manifest("evaluate", cfg, seed, &inputs)?)
}

fn check_nodes(expected: usize, found: usize, what: &str) -> Result<(), CliError> {
    if expected != found {
        return Err(CliError::Config(format!(
            "{what} cover {found} nodes but the series has {expected}"
        )));
    }
    Ok(())
}

/// One timed GIRF pass of the benchmark sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub sweep: String,
    pub n: usize,
    pub t: usize,
    pub substeps: usize,
    pub particles: usize,
    pub repeat: usize,
    pub seconds: f64,
    pub ess_median: f64,
    pub ess_min: f64,
}

pub fn benchmark(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let b = &cfg.benchmark;
    if b.repeats == 0 || b.particles < 2 {
        return Err(CliError::Config(
            "benchmark needs repeats >= 1 and particles >= 2".into(),
        ));
    }
    let root = RandomStreams::new(seed);
    let d = cfg.model.latent_dim;
    let mut rows: Vec<TimingRow> = Vec::new();
    let mut case = 0u64;

    let mut time =
        |sweep: &str, series: &AdjacencySeries, params: &StaticParams, girf: GirfConfig| {
            case += 1;
            for repeat in 0..b.repeats {
                let streams = root
                    .child(StreamKind::Replicate, case)
                    .child(StreamKind::Replicate, repeat as u64);
                let start = Instant::now();
                let run = run_girf(params, series, &girf, &streams)?;
                let seconds = start.elapsed().as_secs_f64();
                let ess: Vec<f64> = observation_ess(&run.trace)
                    .iter()
                    .map(|e| e.1 / girf.particles as f64)
                    .collect();
                info!(
                    "{sweep}: N={}, T={}, S={}, M={} took {seconds:.3}s",
                    series.n(),
                    series.len(),
                    girf.substeps,
                    girf.particles
                );
                rows.push(TimingRow {
                    sweep: sweep.to_string(),
                    n: series.n(),
                    t: series.len(),
                    substeps: girf.substeps,
                    particles: girf.particles,
                    repeat,
                    seconds,
                    ess_median: median(&ess).unwrap_or(f64::NAN),
                    ess_min: ess.iter().copied().fold(f64::INFINITY, f64::min),
                });
            }
            Ok::<(), CliError>(())
        };

    let simulate = |k: u64, spec: &ScenarioSpec| -> Result<AdjacencySeries, CliError> {
        let mut rng = root.stream(StreamKind::Simulate, k, 0);
        Ok(simulate_scenario(spec, &mut rng)?.series)
    };
    let params_for = |alpha: f64| -> Result<StaticParams, CliError> {
        Ok(StaticParams::new(alpha, b.sigma, b.phi)?
            .with_link(cfg.model.link)
            .with_likelihood(cfg.model.likelihood))
    };

    let params = params_for(b.nodes_alpha)?;
    for (k, &n) in b.nodes.iter().enumerate() {
        let series = simulate(k as u64, &ScenarioSpec::s1(n, d, b.nodes_times, params))?;
        for s in [n.div_ceil(2), n, 2 * n] {
            time(
                "nodes",
                &series,
                &params,
                GirfConfig::new(s, 1, b.particles, d)?,
            )?;
        }
    }

    let params = params_for(b.times_alpha)?;
    if let Some(&t_max) = b.times.iter().max() {
        let n = b.times_nodes;
        let full = simulate(1000, &ScenarioSpec::s1(n, d, t_max, params))?;
        for &t in &b.times {
            time(
                "times",
                &full.truncated(t),
                &params,
                GirfConfig::new(n, 1, b.particles, d)?,
            )?;
        }
        if b.double_particles {
            let t = *b.times.iter().min().expect("nonempty");
            let short = full.truncated(t);
            time(
                "particles",
                &short,
                &params,
                GirfConfig::new(n, 1, 2 * b.particles, d)?,
            )?;
        }
    }

    let summary = benchmark_summary(&rows, b.particles);
    let mut files = Outputs::new(out)?;
    files.csv("timing.csv", &rows)?;
    for (name, value) in &summary {
        info!("{name} = {value:.4}");
    }
    files.csv(
        "benchmark_summary.csv",
        summary.iter().map(|(quantity, value)| SummaryRow {
            quantity,
            value: *value,
        }),
    )?;
    files.finish(manifest("benchmark", cfg, seed, &[])?)
}

/// Fastest repeat of every configuration in `sweep`.
fn best_times(rows: &[TimingRow], sweep: &str) -> Vec<(usize, usize, usize, usize, f64)> {
    let mut best: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for r in rows.iter().filter(|r| r.sweep == sweep) {
        let key = (r.n, r.t, r.substeps, r.particles);
        match best.iter_mut().find(|b| (b.0, b.1, b.2, b.3) == key) {
            Some(b) => b.4 = b.4.min(r.seconds),
            None => best.push((key.0, key.1, key.2, key.3, r.seconds)),
        }
    }
    best
}

/// Log-log slopes in `N` for each `S/N` ratio, `R^2` of time against `T`, and
/// the time ratio for doubled particles.
pub fn benchmark_summary(rows: &[TimingRow], particles: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let nodes = best_times(rows, "nodes");
    for (label, ratio) in [("half", 0.5), ("one", 1.0), ("two", 2.0)] {
        let pts: Vec<(f64, f64)> = nodes
            .iter()
            .filter(|b| b.2 == (ratio * b.0 as f64).ceil() as usize)
            .map(|b| ((b.0 as f64).ln(), b.4.ln()))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        if let Ok(fit) = linear_fit(&x, &y) {
            out.push((format!("nodes_loglog_slope_s_{label}_n"), fit.slope));
        }
    }
    let times = best_times(rows, "times");
    let (x, y): (Vec<f64>, Vec<f64>) = times.iter().map(|b| (b.1 as f64, b.4)).unzip();
    if let Ok(fit) = linear_fit(&x, &y) {
        out.push(("times_linear_r_squared".into(), fit.r_squared));
        out.push(("times_seconds_per_step".into(), fit.slope));
    }
    if let Some(doubled) = best_times(rows, "particles").first() {
        let base = times.iter().find(|b| b.1 == doubled.1 && b.3 == particles);
        if let Some(base) = base {
            out.push(("particle_doubling_ratio".into(), doubled.4 / base.4));
        }
    }
    out
}

pub fn ingest(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let ing = &cfg.ingest;
    let input = require(&ing.input, "ingest.input", "--input")?;
    let spec = ing.window_spec()?;
    let parsed = parse_edge_file(input, &ing.filter())?;
    if parsed.records.is_empty() {
        return Err(CliError::Config(format!(
            "no contacts left in {} after filtering",
            input.display()
        )));
    }
    let series = aggregate(&parsed.records, parsed.nodes.len(), &spec)?;
    info!(
        "{} contacts among {} nodes into {} windows of {}s ({} self-ties skipped)",
        parsed.records.len(),
        parsed.nodes.len(),
        series.len(),
        spec.length,
        parsed.self_ties_skipped
    );
    let mut files = Outputs::new(out)?;
    write_series(&files.path("series.csv"), &series)?;
    write_node_map(&files.path("nodes.csv"), &parsed.nodes)?;
    files.finish(manifest("ingest", cfg, seed, &[input])?)
}
