//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 1 4 11`. The process
//! exits non-zero on a failure only when `ACCEPTANCE_STRICT=1` is set.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use dlsn::data_io::{
    aggregate, parse_edge_file, read_series, write_series, NodeFilter, WindowMode, WindowSpec,
};
use dlsn::estimation::{
    fit_offline, fit_online, grad_log_obs, grad_log_transition, initialize_params,
    to_unconstrained_gradient, FitConfig, InitConfig, OfflineFit,
};
use dlsn::girf::{intermediary_kernel, run_girf_with, GirfConfig};
use dlsn::kalman::{kalman_log_likelihood, ScalarLgssm};
use dlsn::metrics::{
    average_absolute_error, constant_rate, linear_fit, median, mse_pairs, observation_ess,
    pooled_roc, predict_final, DEFAULT_REPLICATES,
};
use dlsn::model::{
    log_observation_density, log_transition_density, pair_count, simulate_scenario,
    AdjacencySeries, LatentConfig, Likelihood, Link, NetworkSsm, ScenarioSpec, SimulatedNetwork,
    StaticParams, UnconstrainedParams,
};
use dlsn::smc::{bootstrap_filter, bootstrap_filter_with, BootstrapConfig};
use dlsn::{Execution, RandomStreams, StreamKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn s1_params() -> StaticParams {
    StaticParams::new(0.75, 0.4, 0.9).unwrap()
}

fn simulate(spec: &ScenarioSpec, seed: u64) -> SimulatedNetwork {
    simulate_scenario(
        spec,
        &mut RandomStreams::new(seed).stream(StreamKind::Simulate, 0, 0),
    )
    .unwrap()
}

fn kernel_composition() -> Outcome {
    let mut worst: f64 = 0.0;
    for &phi in &[0.05, 0.3, 0.6, 0.9, 0.99, 0.999] {
        for &sigma in &[0.01, 0.2, 1.0, 5.0] {
            for &s in &[1usize, 2, 3, 7, 15, 45, 100, 250] {
                let p = StaticParams::new(0.0, sigma, phi).unwrap();
                let k = intermediary_kernel(&p, s).unwrap();
                let (mut m, mut v) = (1.0, 0.0);
                for _ in 0..s {
                    m *= k.m;
                    v = k.m * k.m * v + k.v;
                }
                worst = worst
                    .max(((m - phi) / phi).abs())
                    .max(((v - sigma * sigma) / (sigma * sigma)).abs());
            }
        }
    }
    outcome(worst < 1e-10, format!("max relative error {worst:.2e}"))
}

fn gradient_correctness() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + 1e-8;
    let mut failures = 0;
    for case in 0..100 {
        let lik = if case % 2 == 0 {
            Likelihood::BernoulliLogit
        } else {
            Likelihood::PoissonLog
        };
        let link = if case % 4 < 2 {
            Link::EuclideanDistance
        } else {
            Link::DotProduct
        };
        let (n, d) = (r.random_range(2..8), r.random_range(1..4));
        let p = StaticParams::new(
            r.random_range(-2.0..2.0),
            r.random_range(0.1..2.0),
            r.random_range(0.02..0.98),
        )
        .unwrap()
        .with_link(link)
        .with_likelihood(lik);
        let mut config = || {
            LatentConfig::new(
                n,
                d,
                (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect(),
            )
            .unwrap()
        };
        let (next, prev) = (config(), config());
        let obs: Vec<u32> = (0..pair_count(n))
            .map(|_| {
                if lik == Likelihood::PoissonLog {
                    r.random_range(0..6)
                } else {
                    r.random_range(0..2)
                }
            })
            .collect();
        let scale = 1.0 / (n * d) as f64;
        let f = |q: &StaticParams| {
            scale
                * (log_observation_density(q, &next, &obs).unwrap()
                    + log_transition_density(q, &next, &prev).unwrap())
        };
        let analytic = {
            let a = grad_log_obs(&p, &next, &obs).unwrap();
            let b = grad_log_transition(&p, &next, &prev).unwrap();
            [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
        };
        let bump = |c: usize, e: f64| {
            let mut q = p;
            match c {
                0 => q.alpha += e,
                1 => q.sigma += e,
                _ => q.phi += e,
            }
            q
        };
        let u = p.to_unconstrained().to_array();
        let ubump = |c: usize, e: f64| {
            let mut v = u;
            v[c] += e;
            UnconstrainedParams::from_array(v)
                .to_static(link, lik)
                .unwrap()
        };
        let unconstrained = to_unconstrained_gradient(&p, analytic);
        for c in 0..3 {
            let fd = (f(&bump(c, h)) - f(&bump(c, -h))) / (2.0 * h);
            let fdu = (f(&ubump(c, h)) - f(&ubump(c, -h))) / (2.0 * h);
            if !close(analytic[c], fd) || !close(unconstrained[c], fdu) {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!("{failures} of 600 component checks outside tolerance"),
    )
}

fn pf_vs_kalman() -> Outcome {
    let model = ScalarLgssm::new(0.4, 0.9, 0.5, 0.8, 1.0).unwrap();
    let ys = model.simulate(50, &mut ChaCha8Rng::seed_from_u64(31));
    let exact = kalman_log_likelihood(&model, &ys).unwrap();
    let cfg = BootstrapConfig::new(10_000);
    let lls: Vec<f64> = (0..200)
        .map(|r| {
            bootstrap_filter(&model, &ys, &cfg, &RandomStreams::new(1000 + r))
                .unwrap()
                .log_likelihood
        })
        .collect();
    let mean50 = lls[..50].iter().sum::<f64>() / 50.0;
    let ratios: Vec<f64> = lls.iter().map(|l| (l - exact).exp()).collect();
    let rm = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let rsd =
        (ratios.iter().map(|x| (x - rm).powi(2)).sum::<f64>() / (ratios.len() - 1) as f64).sqrt();
    let se = rsd / (ratios.len() as f64).sqrt();
    let pass = (mean50 - exact).abs() < 0.1 && (rm - 1.0).abs() <= 3.0 * se;
    outcome(
        pass,
        format!(
            "mean of 50 = {mean50:.4}, exact = {exact:.4}, diff {:.4}; E[Z/p] = {rm:.4} +- {se:.4}",
            mean50 - exact
        ),
    )
}

fn girf_reduction() -> Outcome {
    let sim = simulate(&ScenarioSpec::s1(12, 2, 10, s1_params()), 4);
    let streams = RandomStreams::new(44);
    let params = s1_params();
    let cfg = GirfConfig::new(1, 1, 500, 2).unwrap();
    let mut girf = Vec::new();
    run_girf_with(&params, &sim.series, &cfg, &streams, |v| {
        girf.push((v.weights.to_vec(), v.ancestors.to_vec()));
        Ok(())
    })
    .unwrap();
    let model = NetworkSsm {
        params,
        n: 12,
        d: 2,
    };
    let mut boot = Vec::new();
    bootstrap_filter_with(
        &model,
        sim.series.slices(),
        &BootstrapConfig::new(500),
        &streams,
        |v| {
            boot.push((v.weights.to_vec(), v.ancestors.to_vec()));
            Ok(())
        },
    )
    .unwrap();
    let identical = girf.len() == 10 && girf == boot;
    outcome(
        identical,
        format!("{} observation times compared bitwise", girf.len()),
    )
}

fn substep_comparison() -> Outcome {
    let params = StaticParams::new(1.2, 0.2, 0.9).unwrap();
    let n = 20;
    let sizes = [n / 2, n, 2 * n];
    let mut monotone = 0;
    let mut mse_better = 0;
    let mut rows = Vec::new();
    for seed in 0..10u64 {
        let sim = simulate(&ScenarioSpec::s1(n, 2, 25, params), 500 + seed);
        let mut ess = Vec::new();
        let mut mse = Vec::new();
        for &s in &sizes {
            let cfg = GirfConfig::new(s, 1, 2000, 2).unwrap();
            let mut errors = Vec::new();
            let run = run_girf_with(
                &params,
                &sim.series,
                &cfg,
                &RandomStreams::new(600 + seed),
                |v| {
                    errors.push(mse_pairs(
                        &sim.edge_means[v.time - 1],
                        &v.edge_means(&params),
                    )?);
                    Ok(())
                },
            )
            .unwrap();
            let per_time: Vec<f64> = observation_ess(&run.trace)
                .iter()
                .map(|e| e.1 / 2000.0)
                .collect();
            ess.push(median(&per_time).unwrap());
            mse.push(errors.iter().sum::<f64>() / errors.len() as f64);
        }
        monotone += usize::from(ess[0] <= ess[1] && ess[1] <= ess[2]);
        mse_better += usize::from(mse[2] <= mse[0]);
        rows.push(format!("{:.2}/{:.2}/{:.2}", ess[0], ess[1], ess[2]));
    }
    outcome(
        monotone == 10 && mse_better >= 6,
        format!(
            "ESS nondecreasing on {monotone}/10 seeds (median ESS/M {}); MSE(S=2N) <= MSE(S=N/2) on {mse_better}/10",
            rows.join(" ")
        ),
    )
}

struct RecoveryRun {
    sim: SimulatedNetwork,
    fit: OfflineFit,
}

fn s1_recovery_runs() -> Vec<RecoveryRun> {
    (0..10u64)
        .map(|seed| {
            let sim = simulate(&ScenarioSpec::s1(30, 2, 25, s1_params()), 700 + seed);
            let streams = RandomStreams::new(800 + seed);
            let init = initialize_params(
                &sim.series,
                Link::EuclideanDistance,
                Likelihood::BernoulliLogit,
                &InitConfig::default(),
                &streams.child(StreamKind::Grid, 0),
            )
            .unwrap();
            let cfg = GirfConfig::new(45, 1, 2000, 2).unwrap();
            let fit =
                fit_offline(&sim.series, &init, &cfg, &FitConfig::default(), &streams).unwrap();
            RecoveryRun { sim, fit }
        })
        .collect()
}

fn s1_recovery(runs: &[RecoveryRun]) -> Outcome {
    let mut good = 0;
    let mut finals = Vec::new();
    for r in runs {
        let p = r.fit.final_params();
        let ok = (p.alpha - 0.75).abs() < 0.5
            && p.sigma > 0.1
            && p.sigma < 0.9
            && p.phi > 0.6
            && p.phi < 1.0;
        good += usize::from(ok);
        finals.push(format!("({:.2},{:.2},{:.2})", p.alpha, p.sigma, p.phi));
    }
    outcome(
        good >= 7,
        format!("{good}/10 seeds in bands; finals {}", finals.join(" ")),
    )
}

fn roc_sanity(runs: &[RecoveryRun]) -> Outcome {
    let mut good = 0;
    let mut summary = Vec::new();
    for r in runs {
        let t = r.sim.series.len();
        let fitted = pooled_roc(&r.sim.series, &r.fit.edge_means, 0..t - 1)
            .unwrap()
            .auc;
        let truth = pooled_roc(&r.sim.series, &r.sim.edge_means, 0..t - 1)
            .unwrap()
            .auc;
        good += usize::from(fitted >= 0.65 && (fitted - truth).abs() <= 0.1);
        summary.push(format!("{fitted:.3}/{truth:.3}"));
    }
    outcome(
        good == runs.len(),
        format!("fitted/true AUC {}", summary.join(" ")),
    )
}

fn timed_run(params: &StaticParams, series: &AdjacencySeries, cfg: &GirfConfig) -> f64 {
    (0..3)
        .map(|k| {
            let start = Instant::now();
            run_girf_with(params, series, cfg, &RandomStreams::new(k), |_| Ok(())).unwrap();
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn scalability() -> Outcome {
    let params = StaticParams::new(1.0, 0.2, 0.9).unwrap();
    let ns = [20usize, 40, 60];
    let mut log_n = Vec::new();
    let mut log_time = Vec::new();
    for &n in &ns {
        let sim = simulate(&ScenarioSpec::s1(n, 2, 10, params), n as u64);
        let cfg = GirfConfig::new(10, 1, 500, 2).unwrap();
        log_n.push((n as f64).ln());
        log_time.push(timed_run(&params, &sim.series, &cfg).ln());
    }
    let slope = linear_fit(&log_n, &log_time).unwrap().slope;

    let ts = [50usize, 100, 200, 400];
    let params_t = StaticParams::new(1.25, 0.2, 0.9).unwrap();
    let full = simulate(&ScenarioSpec::s1(10, 2, 400, params_t), 99);
    let mut times = Vec::new();
    for &t in &ts {
        let cfg = GirfConfig::new(10, 1, 500, 2).unwrap();
        times.push(timed_run(&params_t, &full.series.truncated(t), &cfg));
    }
    let tx: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
    let r2 = linear_fit(&tx, &times).unwrap().r_squared;
    outcome(
        (slope - 2.0).abs() <= 0.3 && r2 >= 0.99,
        format!("log-log slope in N {slope:.3}; R^2 of time vs T {r2:.4}"),
    )
}

fn misspecification() -> Outcome {
    let mut good = 0;
    let mut summary = Vec::new();
    for seed in 0..10u64 {
        let sim = simulate(&ScenarioSpec::s3(30, 2, 25, s1_params()), 900 + seed);
        let streams = RandomStreams::new(950 + seed);
        let init = initialize_params(
            &sim.series,
            Link::EuclideanDistance,
            Likelihood::BernoulliLogit,
            &InitConfig::default(),
            &streams.child(StreamKind::Grid, 0),
        )
        .unwrap();
        let cfg = GirfConfig::new(45, 1, 2000, 2).unwrap();
        let fit = fit_online(&sim.series, &init, &cfg, &FitConfig::default(), &streams).unwrap();
        let alphas: Vec<f64> = fit.trace.iter().map(|r| r.params.alpha).collect();
        let q = alphas.len() / 4;
        let first = alphas[..q].iter().sum::<f64>() / q as f64;
        let last = alphas[alphas.len() - q..].iter().sum::<f64>() / q as f64;
        good += usize::from(last < first);
        summary.push(format!("{first:.2}->{last:.2}"));
    }
    outcome(
        good >= 7,
        format!(
            "decreasing on {good}/10 seeds; quarter means {}",
            summary.join(" ")
        ),
    )
}

fn weighted_variant() -> Outcome {
    let truth = StaticParams::new(0.5, 0.4, 0.9)
        .unwrap()
        .with_likelihood(Likelihood::PoissonLog);
    let mut model_aae = Vec::new();
    let mut base_aae = Vec::new();
    for seed in 0..3u64 {
        let sim = simulate(&ScenarioSpec::s1(20, 2, 15, truth), 1100 + seed);
        let t = sim.series.len();
        let train = sim.series.truncated(t - 1);
        let streams = RandomStreams::new(1200 + seed);
        let init = initialize_params(
            &train,
            Link::EuclideanDistance,
            Likelihood::PoissonLog,
            &InitConfig::default(),
            &streams.child(StreamKind::Grid, 0),
        )
        .unwrap();
        let cfg = GirfConfig::new(30, 1, 2000, 2).unwrap();
        let fit = fit_offline(&train, &init, &cfg, &FitConfig::default(), &streams).unwrap();
        let predictive = predict_final(
            &fit.ensemble,
            &fit.final_params(),
            &streams.child(StreamKind::Predict, 0),
        )
        .unwrap();
        let y_t = sim.series.slice(t - 1);
        let aae_streams = streams.child(StreamKind::Replicate, 0);
        let m = average_absolute_error(
            y_t,
            &predictive,
            Likelihood::PoissonLog,
            DEFAULT_REPLICATES,
            &aae_streams,
        )
        .unwrap();
        let rate = constant_rate(&train);
        let b = average_absolute_error(
            y_t,
            &vec![rate; y_t.len()],
            Likelihood::PoissonLog,
            DEFAULT_REPLICATES,
            &aae_streams,
        )
        .unwrap();
        model_aae.extend(m);
        base_aae.extend(b);
    }
    let mm = model_aae.iter().sum::<f64>() / model_aae.len() as f64;
    let bm = base_aae.iter().sum::<f64>() / base_aae.len() as f64;
    outcome(
        mm < bm,
        format!("mean AAE model {mm:.4} vs constant rate {bm:.4}"),
    )
}

fn data_pipeline() -> Outcome {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sociopatterns_synthetic.tsv");
    let parsed = parse_edge_file(&path, &NodeFilter::default()).unwrap();
    let spec = WindowSpec {
        length: 240,
        mode: WindowMode::Count,
        origin: None,
    };
    let series = aggregate(&parsed.records, parsed.nodes.len(), &spec).unwrap();
    let conserved = series.total() == parsed.records.len() as u64;
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_series(&a, &series).unwrap();
    let back = read_series(&a).unwrap();
    write_series(&b, &back).unwrap();
    let identical = back == series && std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    outcome(
        conserved && identical,
        format!(
            "{} records -> {} windows, total {}; round trip identical: {identical}",
            parsed.records.len(),
            series.len(),
            series.total()
        ),
    )
}

fn determinism() -> Outcome {
    let sim = simulate(&ScenarioSpec::s1(10, 2, 6, s1_params()), 1300);
    let streams = RandomStreams::new(1301);
    let init = s1_params();
    let fit_cfg = FitConfig {
        iterations: 3,
        ..FitConfig::default()
    };
    let run = |exec: Execution| {
        let cfg = GirfConfig::new(5, 2, 300, 2).unwrap().with_execution(exec);
        let off = fit_offline(&sim.series, &init, &cfg, &fit_cfg, &streams)
            .unwrap()
            .trace;
        let on = fit_online(&sim.series, &init, &cfg, &fit_cfg, &streams)
            .unwrap()
            .trace;
        (off, on)
    };
    let reference = run(Execution::Sequential);
    let mut same = true;
    for threads in [1, 2, 3, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        same &= pool.install(|| run(Execution::Parallel)) == reference;
    }
    outcome(
        same,
        "offline and online traces under sequential and 1/2/3/8 threads",
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let mut failures = 0;
    let mut report = |k: usize, name: &str, budget: Duration, elapsed: Duration, o: Outcome| {
        let pass = o.pass && elapsed < budget;
        failures += usize::from(!pass);
        println!(
            "{} criterion {k:>2} {name}: {} [{:.1}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    };
    macro_rules! run {
        ($k:expr, $name:expr, $budget:expr, $f:expr) => {
            if wanted($k) {
                let start = Instant::now();
                let o = $f;
                report($k, $name, $budget, start.elapsed(), o);
            }
        };
    }
    run!(
        1,
        "kernel composition",
        Duration::from_secs(1),
        kernel_composition()
    );
    run!(
        2,
        "gradient correctness",
        Duration::from_secs(10),
        gradient_correctness()
    );
    run!(3, "particle filter vs Kalman", minutes(2), pf_vs_kalman());
    run!(
        4,
        "GIRF reduction to bootstrap",
        Duration::from_secs(10),
        girf_reduction()
    );
    run!(5, "ESS and MSE across S", minutes(20), substep_comparison());
    if wanted(6) || wanted(7) {
        let start = Instant::now();
        let runs = s1_recovery_runs();
        let elapsed = start.elapsed();
        if wanted(6) {
            report(6, "S1 recovery", minutes(60), elapsed, s1_recovery(&runs));
        }
        if wanted(7) {
            report(7, "ROC sanity", minutes(60), elapsed, roc_sanity(&runs));
        }
    }
    run!(8, "scalability", minutes(30), scalability());
    run!(9, "misspecification trend", minutes(30), misspecification());
    run!(10, "weighted variant AAE", minutes(15), weighted_variant());
    run!(11, "data pipeline", Duration::from_secs(5), data_pipeline());
    run!(12, "determinism across threads", minutes(5), determinism());
    println!("acceptance: {failures} failing criteria");
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
