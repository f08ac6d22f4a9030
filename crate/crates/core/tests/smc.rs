//! Bootstrap filter against the exact Kalman likelihood.

use dlsn::kalman::{kalman_log_likelihood, ScalarLgssm};
use dlsn::smc::{bootstrap_filter, BootstrapConfig, ResamplingScheme};
use dlsn::{Execution, RandomStreams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn bootstrap_log_likelihood_tracks_kalman() {
    let model = ScalarLgssm::new(0.3, 0.9, 0.5, 0.7, 1.0).unwrap();
    let ys = model.simulate(30, &mut ChaCha8Rng::seed_from_u64(1));
    let exact = kalman_log_likelihood(&model, &ys).unwrap();
    for scheme in [ResamplingScheme::Systematic, ResamplingScheme::Multinomial] {
        let cfg = BootstrapConfig::new(2000).with_scheme(scheme);
        let reps = 20;
        let mean = (0..reps)
            .map(|r| {
                bootstrap_filter(&model, &ys, &cfg, &RandomStreams::new(r))
                    .unwrap()
                    .log_likelihood
            })
            .sum::<f64>()
            / reps as f64;
        assert!((mean - exact).abs() < 0.1, "{scheme:?}: {mean} vs {exact}");
    }
}

#[test]
fn adaptive_resampling_still_tracks_kalman() {
    let model = ScalarLgssm::new(0.0, 0.8, 0.6, 0.5, 1.0).unwrap();
    let ys = model.simulate(25, &mut ChaCha8Rng::seed_from_u64(2));
    let exact = kalman_log_likelihood(&model, &ys).unwrap();
    let cfg = BootstrapConfig::new(2000).with_ess_threshold(Some(0.5));
    let mean = (0..20)
        .map(|r| {
            bootstrap_filter(&model, &ys, &cfg, &RandomStreams::new(40 + r))
                .unwrap()
                .log_likelihood
        })
        .sum::<f64>()
        / 20.0;
    assert!((mean - exact).abs() < 0.1, "{mean} vs {exact}");
}

#[test]
fn thread_count_does_not_change_the_output() {
    let model = ScalarLgssm::new(0.3, 0.9, 0.5, 0.7, 1.0).unwrap();
    let ys = model.simulate(10, &mut ChaCha8Rng::seed_from_u64(3));
    let streams = RandomStreams::new(5);
    let seq = bootstrap_filter(
        &model,
        &ys,
        &BootstrapConfig::new(300).with_execution(Execution::Sequential),
        &streams,
    )
    .unwrap();
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let par = pool.install(|| {
            bootstrap_filter(
                &model,
                &ys,
                &BootstrapConfig::new(300).with_execution(Execution::Parallel),
                &streams,
            )
            .unwrap()
        });
        assert_eq!(par.trace, seq.trace);
        assert_eq!(par.ensemble.particles, seq.ensemble.particles);
    }
}
