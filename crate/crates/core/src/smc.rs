//! Generic particle-filter machinery.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::model::StaticParams;
use crate::rng::{RandomStreams, StreamKind};

/// Normalizes log-weights with log-sum-exp.
///
/// Returns the normalized weights and the log of the mean unnormalized
/// weight, i.e. the likelihood increment of one filtering step. `NaN` entries
/// are treated as zero weight.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_w
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::TotalDegeneracy);
    }
    if max == f64::INFINITY {
        return Err(Error::Numerical("log-weight is +inf".into()));
    }
    let mut weights: Vec<f64> = log_w
        .iter()
        .map(|&x| if x.is_nan() { 0.0 } else { (x - max).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let increment = max + (total / log_w.len() as f64).ln();
    Ok((weights, increment))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    Multinomial,
    #[default]
    Systematic,
}

/// Draws `weights.len()` ancestor indices.
pub fn resample<R: Rng + ?Sized>(
    weights: &[f64],
    scheme: ResamplingScheme,
    rng: &mut R,
) -> Vec<usize> {
    resample_n(weights, weights.len(), scheme, rng)
}

/// Draws `count` ancestor indices from normalized `weights`.
pub fn resample_n<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    scheme: ResamplingScheme,
    rng: &mut R,
) -> Vec<usize> {
    let m = weights.len();
    assert!(m > 0, "cannot resample an empty ensemble");
    // Cumulative weights scaled by `count` so positions are u + k.
    let scale = count as f64;
    let mut cumulative = Vec::with_capacity(m);
    let mut acc = 0.0;
    for w in weights {
        acc += w * scale;
        cumulative.push(acc);
    }
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(m - 1);
    let mut out = Vec::with_capacity(count);
    match scheme {
        ResamplingScheme::Systematic => {
            let u: f64 = rng.random();
            let mut i = 0;
            for k in 0..count {
                let pos = u + k as f64;
                while i < last_positive && cumulative[i] <= pos {
                    i += 1;
                }
                out.push(i);
            }
        }
        ResamplingScheme::Multinomial => {
            for _ in 0..count {
                let pos = rng.random::<f64>() * acc;
                let i = cumulative.partition_point(|&c| c <= pos).min(last_positive);
                out.push(i);
            }
        }
    }
    out
}

/// `1 / sum w_i^2` for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// A weighted particle approximation.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble<X> {
    pub particles: Vec<X>,
    /// Unnormalized log-weights.
    pub log_weights: Vec<f64>,
    /// Index of each particle's parent in the previous ensemble.
    pub ancestors: Vec<usize>,
    /// Per-particle score statistics, when a score is being tracked.
    pub score_stats: Option<Vec<[f64; 3]>>,
}

impl<X> ParticleEnsemble<X> {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_weights).map(|(w, _)| w)
    }

    pub fn ess(&self) -> Result<f64> {
        self.normalized_weights().map(|w| effective_sample_size(&w))
    }
}

/// Diagnostics of one (intermediary) filtering step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Observation gap index `t` (the step moves from `t` toward `t + 1`).
    /// For the bootstrap filter, the observation time.
    pub time: usize,
    /// Intermediary index `s` in `1..=S`; always 1 for the bootstrap filter.
    pub substep: usize,
    pub ess: f64,
    pub log_lik_increment: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<StaticParams>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterTrace {
    pub records: Vec<StepRecord>,
}

impl FilterTrace {
    pub fn push(&mut self, record: StepRecord) {
        self.records.push(record);
    }

    /// Sum of all increments: the log marginal likelihood estimate.
    pub fn log_likelihood(&self) -> f64 {
        self.records.iter().map(|r| r.log_lik_increment).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Hooks a state space model provides to the bootstrap filter.
pub trait StateSpaceModel: Sync {
    type State: Clone + Send + Sync;
    type Obs: Sync;

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Self::State;
    fn sample_transition(&self, prev: &Self::State, rng: &mut ChaCha8Rng) -> Self::State;
    fn log_observation(&self, state: &Self::State, obs: &Self::Obs) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapConfig {
    pub particles: usize,
    pub scheme: ResamplingScheme,
    /// Resample only when ESS falls below this fraction of `M`.
    /// `None` resamples at every step.
    pub ess_threshold: Option<f64>,
    pub execution: Execution,
}

impl BootstrapConfig {
    pub fn new(particles: usize) -> Self {
        Self {
            particles,
            scheme: ResamplingScheme::Systematic,
            ess_threshold: None,
            execution: Execution::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: ResamplingScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_ess_threshold(mut self, fraction: Option<f64>) -> Self {
        self.ess_threshold = fraction;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// What the filter exposes after weighting observation `time`.
pub struct ObservationView<'a, X> {
    pub time: usize,
    pub particles: &'a [X],
    /// Normalized weights of `particles`.
    pub weights: &'a [f64],
    /// Unnormalized log-weights of this step.
    pub log_weights: &'a [f64],
    /// Parent of each particle in `previous`.
    pub ancestors: &'a [usize],
    /// Particles at the previous observation time, before resampling.
    pub previous: &'a [X],
}

pub struct BootstrapOutput<X> {
    pub trace: FilterTrace,
    pub log_likelihood: f64,
    /// Particles at the final time with their (pre-resampling) weights.
    pub ensemble: ParticleEnsemble<X>,
}

/// Bootstrap (SIR) particle filter.
pub fn bootstrap_filter<M: StateSpaceModel>(
    model: &M,
    observations: &[M::Obs],
    cfg: &BootstrapConfig,
    streams: &RandomStreams,
) -> Result<BootstrapOutput<M::State>> {
    bootstrap_filter_with(model, observations, cfg, streams, |_| Ok(()))
}

/// [`bootstrap_filter`] with an observer called once per observation time.
///
/// Particle `i` at time `t` is propagated with stream `(Propagate, t, i)`,
/// initial draws use `(Init, 0, i)` and the weights of time `t` are resampled
/// with `(Resample, t, 0)`.
pub fn bootstrap_filter_with<M, F>(
    model: &M,
    observations: &[M::Obs],
    cfg: &BootstrapConfig,
    streams: &RandomStreams,
    mut observer: F,
) -> Result<BootstrapOutput<M::State>>
where
    M: StateSpaceModel,
    F: FnMut(&ObservationView<'_, M::State>) -> Result<()>,
{
    if observations.is_empty() {
        return Err(Error::InvalidParameter("no observations".into()));
    }
    let m = cfg.particles;
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let exec = cfg.execution;

    let mut previous: Vec<M::State> = map_indexed(exec, m, |i| {
        model.sample_initial(&mut streams.stream(StreamKind::Init, 0, i as u64))
    });
    // Normalized weights carried into the next step; uniform after resampling.
    let mut carried: Option<Vec<f64>> = None;
    let mut trace = FilterTrace::default();
    let mut log_w = Vec::new();
    let mut ancestors: Vec<usize> = (0..m).collect();

    for (k, obs) in observations.iter().enumerate() {
        let t = k + 1;
        ancestors = match &carried {
            Some(w) => {
                let ess = effective_sample_size(w);
                let resample_now = cfg.ess_threshold.is_none_or(|frac| ess < frac * m as f64);
                if resample_now {
                    let mut rng = streams.stream(StreamKind::Resample, (t - 1) as u64, 0);
                    let a = resample(w, cfg.scheme, &mut rng);
                    carried = None;
                    a
                } else {
                    (0..m).collect()
                }
            }
            None => (0..m).collect(),
        };

        let particles = map_indexed(exec, m, |i| {
            let mut rng = streams.stream(StreamKind::Propagate, t as u64, i as u64);
            model.sample_transition(&previous[ancestors[i]], &mut rng)
        });
        log_w = map_indexed(exec, m, |i| model.log_observation(&particles[i], obs));

        let (weights, increment) = match &carried {
            None => normalize_log_weights(&log_w),
            Some(prev) => {
                let combined: Vec<f64> = log_w.iter().zip(prev).map(|(l, w)| l + w.ln()).collect();
                normalize_log_weights(&combined).map(|(w, inc)| (w, inc + (m as f64).ln()))
            }
        }
        .map_err(|e| match e {
            Error::TotalDegeneracy => Error::FilterCollapse {
                time: t,
                substep: 1,
            },
            other => other,
        })?;
        let ess = effective_sample_size(&weights);
        trace.push(StepRecord {
            time: t,
            substep: 1,
            ess,
            log_lik_increment: increment,
            params: None,
        });
        observer(&ObservationView {
            time: t,
            particles: &particles,
            weights: &weights,
            log_weights: &log_w,
            ancestors: &ancestors,
            previous: &previous,
        })?;
        carried = Some(weights);
        previous = particles;
    }

    let log_likelihood = trace.log_likelihood();
    let final_log_weights = match carried {
        Some(w) => w.iter().map(|x| x.ln()).collect(),
        None => log_w,
    };
    Ok(BootstrapOutput {
        trace,
        log_likelihood,
        ensemble: ParticleEnsemble {
            particles: previous,
            log_weights: final_log_weights,
            ancestors,
            score_stats: None,
        },
    })
}
