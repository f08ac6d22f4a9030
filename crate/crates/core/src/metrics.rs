//! Evaluation of fitted models: ESS series, mean square error in
//! probability, ROC curves, one-step predictions and average absolute error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    edge_means, pair_count, pair_index, sample_edge, transition_sample, AdjacencySeries,
    LatentConfig, Likelihood, StaticParams,
};
use crate::rng::{RandomStreams, StreamKind};
use crate::smc::{FilterTrace, ParticleEnsemble};

/// Posterior mean edge probabilities (or rates), one upper-triangular slice
/// per observation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimates {
    n: usize,
    slices: Vec<Vec<f64>>,
}

impl ProbabilityEstimates {
    pub fn new(n: usize, slices: Vec<Vec<f64>>) -> Result<Self> {
        let c = pair_count(n);
        for (k, s) in slices.iter().enumerate() {
            if s.len() != c {
                return Err(Error::InvalidParameter(format!(
                    "slice {k} has {} pairs, expected {c}",
                    s.len()
                )));
            }
            if s.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InputDomain(format!(
                    "slice {k} has a negative or non-finite entry"
                )));
            }
        }
        Ok(Self { n, slices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    /// Symmetric entry with a zero diagonal.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.slices[k][pair_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.slices[k][pair_index(self.n, j, i)],
        }
    }

    /// Whether every entry is a probability.
    pub fn is_probability(&self) -> bool {
        self.slices.iter().flatten().all(|p| *p <= 1.0)
    }
}

/// `(1/C(N,2)) sum_{i<j} (p_ij - q_ij)^2` over one pair-ordered slice.
pub fn mse_pairs(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "slices have {} and {} pairs",
            truth.len(),
            estimate.len()
        )));
    }
    let total: f64 = truth
        .iter()
        .zip(estimate)
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok(total / truth.len() as f64)
}

/// Mean square error in probability at slice `k`.
pub fn mse_probability(
    truth: &ProbabilityEstimates,
    estimate: &ProbabilityEstimates,
    k: usize,
) -> Result<f64> {
    if truth.n != estimate.n || k >= truth.len() || k >= estimate.len() {
        return Err(Error::InvalidParameter("estimates do not match".into()));
    }
    mse_pairs(&truth.slices[k], &estimate.slices[k])
}

/// `(time, ess)` at the last substep of each observation time.
pub fn observation_ess(trace: &FilterTrace) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, usize, f64)> = Vec::new();
    for r in &trace.records {
        match out.last_mut() {
            Some(last) if last.0 == r.time => {
                if r.substep >= last.1 {
                    *last = (r.time, r.substep, r.ess);
                }
            }
            _ => out.push((r.time, r.substep, r.ess)),
        }
    }
    out.into_iter().map(|(t, _, e)| (t, e)).collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are classified positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC staircase over all distinct score values, with tied scores grouped,
/// and its trapezoidal area.
pub fn roc_curve(labels: &[bool], scores: &[f64]) -> Result<RocCurve> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidParameter(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InputDomain("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc(format!(
            "{pos} positive and {neg} negative labels"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let prev = *points.last().expect("starting point");
        let p = RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (p.fpr - prev.fpr) * 0.5 * (p.tpr + prev.tpr);
        points.push(p);
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok(RocCurve { points, auc })
}

/// ROC over several slices pooled together, labelling `y > 0` as positive.
pub fn pooled_roc(
    observations: &AdjacencySeries,
    scores: &[Vec<f64>],
    slices: std::ops::Range<usize>,
) -> Result<RocCurve> {
    let mut labels = Vec::new();
    let mut flat = Vec::new();
    for k in slices {
        let (y, s) = (observations.slice(k), &scores[k]);
        if y.len() != s.len() {
            return Err(Error::InvalidParameter(format!(
                "slice {k} has mismatched lengths"
            )));
        }
        labels.extend(y.iter().map(|&v| v > 0));
        flat.extend_from_slice(s);
    }
    roc_curve(&labels, &flat)
}

/// One-step-ahead predictive edge means: every particle is propagated once
/// through the transition and link means are averaged under the weights.
pub fn predict_final(
    ensemble: &ParticleEnsemble<LatentConfig>,
    params: &StaticParams,
    streams: &RandomStreams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let weights = ensemble.normalized_weights()?;
    let first = ensemble
        .particles
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    let mut out = vec![0.0; pair_count(first.n())];
    for (i, (x, &w)) in ensemble.particles.iter().zip(&weights).enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut rng = streams.stream(StreamKind::Predict, 0, i as u64);
        let next = transition_sample(params, x, &mut rng);
        for (o, p) in out.iter_mut().zip(edge_means(
            params.alpha,
            params.link,
            params.likelihood,
            &next,
        )) {
            *o += w * p;
        }
    }
    Ok(out)
}

pub const DEFAULT_REPLICATES: usize = 5000;

/// Per-pair `(1/R) sum_r |y - yhat_r|` with `yhat_r` drawn from the
/// predictive Bernoulli or Poisson law.
pub fn average_absolute_error(
    observed: &[u32],
    predictive: &[f64],
    likelihood: Likelihood,
    replicates: usize,
    streams: &RandomStreams,
) -> Result<Vec<f64>> {
    if replicates == 0 {
        return Err(Error::InvalidParameter(
            "need at least one replicate".into(),
        ));
    }
    if observed.len() != predictive.len() {
        return Err(Error::InvalidParameter(format!(
            "{} observations but {} predictions",
            observed.len(),
            predictive.len()
        )));
    }
    observed
        .iter()
        .zip(predictive)
        .enumerate()
        .map(|(k, (&y, &p))| {
            let valid = match likelihood {
                Likelihood::BernoulliLogit => (0.0..=1.0).contains(&p),
                Likelihood::PoissonLog => p.is_finite() && p >= 0.0,
            };
            if !valid {
                return Err(Error::InputDomain(format!(
                    "predictive mean {p} at pair {k}"
                )));
            }
            let mut rng = streams.stream(StreamKind::Replicate, 0, k as u64);
            let total: f64 = (0..replicates)
                .map(|_| (y as f64 - sample_edge(likelihood, p, &mut rng) as f64).abs())
                .sum();
            Ok(total / replicates as f64)
        })
        .collect()
}

/// Ordinary least squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two matching points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Rate of the constant model fitted to every slice: the overall mean value.
pub fn constant_rate(observations: &AdjacencySeries) -> f64 {
    observations.mean_value()
}
