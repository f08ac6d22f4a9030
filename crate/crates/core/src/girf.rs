//! Guided intermediate resampling filter (GIRF) for the network model.
//!
//! Each gap between observations `t` and `t + 1` is split into `S`
//! intermediary steps. Particles move through the `S`-th root of the AR(1)
//! transition and are reweighted at every step by the ratio of an assessment
//! function `nu` that anticipates the next `B` observations, then resampled.
//!
//! The assessment at the start of a gap is identified with the assessment at
//! the end of the previous one, `nu(t, 0) = nu(t - 1, S)`, and `nu(0, 0) = 1`.
//! The product of the step weights therefore telescopes to the joint
//! likelihood, and the sum of the log mean weights is an unbiased estimate of
//! `log p(Y_1..Y_T)` on the exponential scale.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{for_each_chunk_mut, map_indexed, Execution};
use crate::model::{
    edge_mean, linear_predictor_with, log_obs_scaled, pair_count, poisson_constant,
    AdjacencySeries, LatentConfig, Likelihood, StaticParams,
};
use crate::rng::{RandomStreams, StreamKind};
use crate::smc::{
    effective_sample_size, normalize_log_weights, resample, FilterTrace, ParticleEnsemble,
    ResamplingScheme, StepRecord,
};

/// How the `b`-step look-ahead projects a particle forward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuideMean {
    /// `E[U_{t+b} | U_{t,s}] = phi^(b - s/S) U`.
    #[default]
    Exact,
    /// `phi U` for every future observation (the identity when the target
    /// time is the current one).
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirfConfig {
    /// Intermediary steps per observation gap, `S`.
    pub substeps: usize,
    /// Look-ahead horizon, `B`.
    pub lookahead: usize,
    /// Number of particles, `M`.
    pub particles: usize,
    /// Latent dimension `d`.
    pub latent_dim: usize,
    #[serde(default)]
    pub guide: GuideMean,
    #[serde(default)]
    pub scheme: ResamplingScheme,
    #[serde(skip)]
    pub execution: Execution,
}

impl GirfConfig {
    pub fn new(
        substeps: usize,
        lookahead: usize,
        particles: usize,
        latent_dim: usize,
    ) -> Result<Self> {
        let cfg = Self {
            substeps,
            lookahead,
            particles,
            latent_dim,
            guide: GuideMean::Exact,
            scheme: ResamplingScheme::Systematic,
            execution: Execution::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `S = ceil(1.5 N)`, `B = 1`, `M = 5000`, `d = 2`.
    pub fn inference_default(n: usize) -> Self {
        Self {
            substeps: (3 * n).div_ceil(2).max(1),
            lookahead: 1,
            particles: 5000,
            latent_dim: 2,
            guide: GuideMean::Exact,
            scheme: ResamplingScheme::Systematic,
            execution: Execution::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_guide(mut self, guide: GuideMean) -> Self {
        self.guide = guide;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("S must be at least 1".into()));
        }
        if self.lookahead == 0 {
            return Err(Error::InvalidParameter("B must be at least 1".into()));
        }
        if self.particles < 2 {
            return Err(Error::InvalidParameter("M must be at least 2".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidParameter("d must be at least 1".into()));
        }
        Ok(())
    }
}

/// One intermediary transition `U' = m U + sqrt(v) Z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntermediaryKernel {
    pub m: f64,
    pub v: f64,
    sd: f64,
}

impl IntermediaryKernel {
    pub fn sd(&self) -> f64 {
        self.sd
    }
}

/// `m = phi^(1/S)`, `v = sigma^2 (1 - phi^(2/S)) / (1 - phi^2)`.
pub fn intermediary_kernel(params: &StaticParams, substeps: usize) -> Result<IntermediaryKernel> {
    params.validate()?;
    if substeps == 0 {
        return Err(Error::InvalidParameter("S must be at least 1".into()));
    }
    if substeps == 1 {
        return Ok(IntermediaryKernel {
            m: params.phi,
            v: params.sigma * params.sigma,
            sd: params.sigma,
        });
    }
    let ln_phi = params.phi.ln();
    let s = substeps as f64;
    let m = (ln_phi / s).exp();
    let v = params.sigma * params.sigma * (2.0 * ln_phi / s).exp_m1() / (2.0 * ln_phi).exp_m1();
    Ok(IntermediaryKernel { m, v, sd: v.sqrt() })
}

/// Tempering exponent of observation `t + b` in the assessment at `(t, s)`:
/// `1 - (b S - s) / (S [(t + b) - max(t + b - B, 0)])`.
pub fn assessment_exponent(t: usize, s: usize, b: usize, substeps: usize, lookahead: usize) -> f64 {
    let span = (t + b) - (t + b).saturating_sub(lookahead);
    let denom = (substeps * span) as i64;
    let num = denom - (b * substeps) as i64 + s as i64;
    num as f64 / denom as f64
}

/// Factor applied to the coordinates to project them to observation `t + b`.
pub fn guide_factor(phi: f64, s: usize, b: usize, substeps: usize, guide: GuideMean) -> f64 {
    let lag = b * substeps - s;
    if lag == 0 {
        return 1.0;
    }
    match guide {
        GuideMean::Exact => phi.powf(lag as f64 / substeps as f64),
        GuideMean::Literal => phi,
    }
}

/// Precomputed observation data shared by every particle.
struct Observations<'a> {
    series: &'a AdjacencySeries,
    constants: Vec<f64>,
}

impl<'a> Observations<'a> {
    fn new(series: &'a AdjacencySeries, likelihood: Likelihood) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidParameter("no observations".into()));
        }
        series.check_domain(likelihood)?;
        let constants = series
            .slices()
            .iter()
            .map(|y| match likelihood {
                Likelihood::BernoulliLogit => 0.0,
                Likelihood::PoissonLog => poisson_constant(y),
            })
            .collect();
        Ok(Self { series, constants })
    }

    fn len(&self) -> usize {
        self.series.len()
    }

    /// `log p(Y_time | scale * U)` for `time` in `1..=T`.
    fn log_lik(
        &self,
        params: &StaticParams,
        coords: &[f64],
        d: usize,
        time: usize,
        scale: f64,
    ) -> f64 {
        let k = time - 1;
        log_obs_scaled(
            params,
            coords,
            self.series.n(),
            d,
            scale,
            self.series.slice(k),
            self.constants[k],
        )
    }

    /// `(log nu(t, s), log p(Y_{t+1} | U))` for `s` in `1..=S`. The second
    /// value is only meaningful at `s = S`.
    fn assess(
        &self,
        params: &StaticParams,
        cfg: &GirfConfig,
        coords: &[f64],
        t: usize,
        s: usize,
    ) -> (f64, f64) {
        let d = cfg.latent_dim;
        let big_s = cfg.substeps;
        if cfg.lookahead == 1 {
            let v = self.log_lik(params, coords, d, t + 1, 1.0);
            return (v, v);
        }
        let obs = if s == big_s {
            self.log_lik(params, coords, d, t + 1, 1.0)
        } else {
            0.0
        };
        let horizon = cfg.lookahead.min(self.len() - t);
        let mut nu = 0.0;
        for b in 1..=horizon {
            let eta = assessment_exponent(t, s, b, big_s, cfg.lookahead);
            if eta == 0.0 {
                continue;
            }
            let value = if b == 1 && s == big_s {
                obs
            } else {
                let g = guide_factor(params.phi, s, b, big_s, cfg.guide);
                self.log_lik(params, coords, d, t + b, g)
            };
            nu += eta * value;
        }
        (nu, obs)
    }
}

fn check_config(config: &LatentConfig, series: &AdjacencySeries, cfg: &GirfConfig) -> Result<()> {
    if config.n() != series.n() || config.d() != cfg.latent_dim {
        return Err(Error::InvalidParameter(format!(
            "latent config is {}x{}, model is {}x{}",
            config.n(),
            config.d(),
            series.n(),
            cfg.latent_dim
        )));
    }
    Ok(())
}

/// `log nu(t, s)(U)`. Defined for `0 <= t < T`, `0 <= s <= S`, and `(T, 0)`.
pub fn assessment_function(
    params: &StaticParams,
    config: &LatentConfig,
    t: usize,
    s: usize,
    observations: &AdjacencySeries,
    cfg: &GirfConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_config(config, observations, cfg)?;
    let obs = Observations::new(observations, params.likelihood)?;
    let big_t = obs.len();
    if s > cfg.substeps || t > big_t || (t == big_t && s != 0) {
        return Err(Error::InvalidParameter(format!(
            "(t, s) = ({t}, {s}) is not an intermediary time"
        )));
    }
    if s == 0 {
        if t == 0 {
            return Ok(0.0);
        }
        return Ok(obs
            .assess(params, cfg, config.coords(), t - 1, cfg.substeps)
            .0);
    }
    Ok(obs.assess(params, cfg, config.coords(), t, s).0)
}

/// Log-weight of a particle moving from `old` (at step `(t, s-1)`) to `new`
/// (at step `(t, s)`).
pub fn girf_step_weight(
    params: &StaticParams,
    new_config: &LatentConfig,
    old_config: &LatentConfig,
    t: usize,
    s: usize,
    observations: &AdjacencySeries,
    cfg: &GirfConfig,
) -> Result<f64> {
    if s == 0 || s > cfg.substeps || t >= observations.len() {
        return Err(Error::InvalidParameter(format!(
            "(t, s) = ({t}, {s}) is not an intermediary step"
        )));
    }
    let nu_new = assessment_function(params, new_config, t, s, observations, cfg)?;
    let nu_old = assessment_function(params, old_config, t, s - 1, observations, cfg)?;
    if s == 1 && t >= 1 {
        let obs = Observations::new(observations, params.likelihood)?;
        let obs_old = obs.log_lik(params, old_config.coords(), cfg.latent_dim, t, 1.0);
        Ok(nu_new + (obs_old - nu_old))
    } else {
        Ok(nu_new - nu_old)
    }
}

/// The particle system right after observation `time` has been weighted.
pub struct GirfObservation<'a> {
    pub time: usize,
    pub n: usize,
    pub d: usize,
    /// Flat `M x N x d` particle coordinates.
    pub particles: &'a [f64],
    /// Normalized filtering weights of `particles` for time `time`.
    pub weights: &'a [f64],
    /// Log-weights of the final intermediary step, before look-ahead correction.
    pub log_weights: &'a [f64],
    /// Index of each particle's ancestor in `previous`.
    pub ancestors: &'a [usize],
    /// Particles at the previous observation time, before resampling.
    pub previous: &'a [f64],
}

impl GirfObservation<'_> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        let nd = self.n * self.d;
        &self.particles[i * nd..(i + 1) * nd]
    }

    /// The time-`(time - 1)` ancestor of particle `i`.
    pub fn parent(&self, i: usize) -> &[f64] {
        let nd = self.n * self.d;
        let a = self.ancestors[i];
        &self.previous[a * nd..(a + 1) * nd]
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(self.weights)
    }

    pub fn to_ensemble(&self) -> ParticleEnsemble<LatentConfig> {
        let nd = self.n * self.d;
        ParticleEnsemble {
            particles: self
                .particles
                .chunks_exact(nd)
                .map(|c| LatentConfig::new(self.n, self.d, c.to_vec()).expect("finite particles"))
                .collect(),
            log_weights: self.weights.iter().map(|w| w.ln()).collect(),
            ancestors: self.ancestors.to_vec(),
            score_stats: None,
        }
    }

    /// Posterior mean edge probability (or rate) of every pair.
    pub fn edge_means(&self, params: &StaticParams) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; pair_count(n)];
        for (i, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let x = self.particle(i);
            let mut k = 0;
            for a in 0..n {
                for b in a + 1..n {
                    let eta = linear_predictor_with(
                        params.alpha,
                        params.link,
                        &x[a * self.d..(a + 1) * self.d],
                        &x[b * self.d..(b + 1) * self.d],
                    );
                    out[k] += w * edge_mean(params.likelihood, eta);
                    k += 1;
                }
            }
        }
        out
    }
}

/// A GIRF run that can be advanced one observation gap at a time, allowing
/// the static parameters to change between gaps.
pub struct GirfFilter<'a> {
    obs: Observations<'a>,
    cfg: GirfConfig,
    streams: RandomStreams,
    likelihood: Likelihood,
    n: usize,
    gap: usize,
    particles: Vec<f64>,
    gathered: Vec<f64>,
    log_nu: Vec<f64>,
    log_obs: Vec<f64>,
    log_w: Vec<f64>,
    pending: Option<Vec<f64>>,
    filtering: Vec<f64>,
    anchor: Vec<f64>,
    origins: Vec<usize>,
    trace: FilterTrace,
}

impl<'a> GirfFilter<'a> {
    /// Draws the initial particles from the stationary prior under `params`.
    pub fn new(
        params: &StaticParams,
        observations: &'a AdjacencySeries,
        cfg: &GirfConfig,
        streams: &RandomStreams,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let obs = Observations::new(observations, params.likelihood)?;
        let (m, n, d) = (cfg.particles, observations.n(), cfg.latent_dim);
        let nd = n * d;
        let sd = params.stationary_variance().sqrt();
        let mut particles = vec![0.0; m * nd];
        for_each_chunk_mut(cfg.execution, &mut particles, nd, |i, x| {
            let mut rng = streams.stream(StreamKind::Init, 0, i as u64);
            for v in x.iter_mut() {
                *v = sd * rng.sample::<f64, _>(StandardNormal);
            }
        });
        Ok(Self {
            obs,
            cfg: *cfg,
            streams: streams.clone(),
            likelihood: params.likelihood,
            n,
            gap: 0,
            gathered: vec![0.0; m * nd],
            particles,
            log_nu: vec![0.0; m],
            log_obs: vec![0.0; m],
            log_w: vec![0.0; m],
            pending: None,
            filtering: vec![0.0; m],
            anchor: Vec::new(),
            origins: Vec::new(),
            trace: FilterTrace::default(),
        })
    }

    /// Number of observation times already processed.
    pub fn time(&self) -> usize {
        self.gap
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.len() == 0
    }

    pub fn is_finished(&self) -> bool {
        self.gap >= self.obs.len()
    }

    pub fn trace(&self) -> &FilterTrace {
        &self.trace
    }

    pub fn into_trace(self) -> FilterTrace {
        self.trace
    }

    pub fn log_likelihood(&self) -> f64 {
        self.trace.log_likelihood()
    }

    fn nd(&self) -> usize {
        self.n * self.cfg.latent_dim
    }

    fn resample_pending(&mut self, step: usize) {
        let Some(w) = self.pending.take() else {
            return;
        };
        let mut rng = self.streams.stream(StreamKind::Resample, step as u64, 0);
        let a = resample(&w, self.cfg.scheme, &mut rng);
        let nd = self.nd();
        for (dst, &src) in self.gathered.chunks_exact_mut(nd).zip(&a) {
            dst.copy_from_slice(&self.particles[src * nd..(src + 1) * nd]);
        }
        std::mem::swap(&mut self.particles, &mut self.gathered);
        self.log_nu = a.iter().map(|&i| self.log_nu[i]).collect();
        self.log_obs = a.iter().map(|&i| self.log_obs[i]).collect();
        self.origins = a.iter().map(|&i| self.origins[i]).collect();
    }

    /// Runs the `S` intermediary steps from the current observation time to
    /// the next one under `params`.
    pub fn advance(&mut self, params: &StaticParams) -> Result<GirfObservation<'_>> {
        if self.is_finished() {
            return Err(Error::InvalidParameter(
                "the filter has processed every observation".into(),
            ));
        }
        params.validate()?;
        if params.likelihood != self.likelihood {
            return Err(Error::InvalidParameter(
                "the likelihood variant cannot change during a run".into(),
            ));
        }
        let kernel = intermediary_kernel(params, self.cfg.substeps)?;
        let (t, big_s, nd, m) = (self.gap, self.cfg.substeps, self.nd(), self.cfg.particles);
        let exec = self.cfg.execution;

        self.anchor.clone_from(&self.particles);
        self.origins = (0..m).collect();

        for s in 1..=big_s {
            let k = t * big_s + s;
            self.resample_pending(k - 1);

            let streams = &self.streams;
            for_each_chunk_mut(exec, &mut self.particles, nd, |i, x| {
                let mut rng = streams.stream(StreamKind::Propagate, k as u64, i as u64);
                for v in x.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = kernel.m * *v + kernel.sd * z;
                }
            });

            let (obs, cfg, particles) = (&self.obs, &self.cfg, &self.particles);
            let assessed = map_indexed(exec, m, |i| {
                obs.assess(params, cfg, &particles[i * nd..(i + 1) * nd], t, s)
            });
            for (i, (nu, obs_term)) in assessed.into_iter().enumerate() {
                self.log_w[i] = if s == 1 && t >= 1 {
                    nu + (self.log_obs[i] - self.log_nu[i])
                } else {
                    nu - self.log_nu[i]
                };
                self.log_nu[i] = nu;
                self.log_obs[i] = obs_term;
            }

            let (weights, increment) = normalize_log_weights(&self.log_w).map_err(|e| match e {
                Error::TotalDegeneracy => Error::FilterCollapse {
                    time: t,
                    substep: s,
                },
                other => other,
            })?;
            self.trace.push(StepRecord {
                time: t,
                substep: s,
                ess: effective_sample_size(&weights),
                log_lik_increment: increment,
                params: Some(*params),
            });
            self.pending = Some(weights);
        }

        let pending = self.pending.as_ref().expect("weights of the last step");
        if self.cfg.lookahead == 1 {
            self.filtering.clone_from(pending);
        } else {
            // Remove the look-ahead beyond the current observation.
            let corrected: Vec<f64> = self
                .log_w
                .iter()
                .zip(self.log_nu.iter().zip(&self.log_obs))
                .map(|(w, (nu, ob))| w - (nu - ob))
                .collect();
            self.filtering = normalize_log_weights(&corrected)
                .map_err(|_| Error::FilterCollapse {
                    time: t,
                    substep: big_s,
                })?
                .0;
        }
        self.gap += 1;
        Ok(GirfObservation {
            time: t + 1,
            n: self.n,
            d: self.cfg.latent_dim,
            particles: &self.particles,
            weights: &self.filtering,
            log_weights: &self.log_w,
            ancestors: &self.origins,
            previous: &self.anchor,
        })
    }
}

/// Result of a complete GIRF pass.
#[derive(Clone, Debug)]
pub struct GirfRun {
    pub trace: FilterTrace,
    pub log_likelihood: f64,
    /// Filtering ensemble at the final observation time.
    pub ensemble: ParticleEnsemble<LatentConfig>,
}

/// Runs the GIRF over all observations with fixed parameters.
pub fn run_girf(
    params: &StaticParams,
    observations: &AdjacencySeries,
    cfg: &GirfConfig,
    streams: &RandomStreams,
) -> Result<GirfRun> {
    run_girf_with(params, observations, cfg, streams, |_| Ok(()))
}

/// [`run_girf`] with a hook invoked once per observation time.
pub fn run_girf_with<F>(
    params: &StaticParams,
    observations: &AdjacencySeries,
    cfg: &GirfConfig,
    streams: &RandomStreams,
    mut hook: F,
) -> Result<GirfRun>
where
    F: FnMut(&GirfObservation<'_>) -> Result<()>,
{
    let mut filter = GirfFilter::new(params, observations, cfg, streams)?;
    let mut ensemble = None;
    while !filter.is_finished() {
        let view = filter.advance(params)?;
        hook(&view)?;
        if view.time == observations.len() {
            ensemble = Some(view.to_ensemble());
        }
    }
    let trace = filter.into_trace();
    Ok(GirfRun {
        log_likelihood: trace.log_likelihood(),
        trace,
        ensemble: ensemble.expect("at least one observation"),
    })
}
