//! Static-parameter estimation by stochastic gradient ascent.
//!
//! Scores are estimated with a Rao-Blackwellised recursion over per-particle
//! statistics `m_t = lambda m_{t-1}[a] + (1 - lambda) s_{t-1} + grad`, where
//! `grad` is the gradient of the observation and transition log-densities at
//! time `t`. All parameter updates happen on the unconstrained scale
//! `(alpha, log sigma, logit phi)`, so `sigma > 0` and `0 < phi < 1` hold by
//! construction.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::girf::{GirfConfig, GirfFilter, GirfObservation};
use crate::kalman::ScalarLgssm;
use crate::model::{
    edge_mean, edge_means, linear_predictor_with, pair_count, stationary_prior_sample,
    AdjacencySeries, LatentConfig, Likelihood, Link, NetworkSsm, StaticParams, UnconstrainedParams,
};
use crate::rng::{RandomStreams, StreamKind};
use crate::smc::{
    bootstrap_filter_with, BootstrapConfig, FilterTrace, ParticleEnsemble, StateSpaceModel,
};

/// A gradient with respect to `(alpha, sigma, phi)` or, after
/// [`to_unconstrained_gradient`], `(alpha, sigma_tilde, phi_tilde)`.
pub type Gradient = [f64; 3];

fn add(a: Gradient, b: Gradient) -> Gradient {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn norm(g: Gradient) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Raw `sum_{i<j} (y_ij - E y_ij)` on flat coordinates.
fn alpha_gradient(params: &StaticParams, coords: &[f64], n: usize, d: usize, y: &[u32]) -> f64 {
    let mut total = 0.0;
    let mut k = 0;
    for i in 0..n {
        let ui = &coords[i * d..(i + 1) * d];
        for j in i + 1..n {
            let uj = &coords[j * d..(j + 1) * d];
            let eta = linear_predictor_with(params.alpha, params.link, ui, uj);
            total += y[k] as f64 - edge_mean(params.likelihood, eta);
            k += 1;
        }
    }
    total
}

/// Raw `(d/d sigma, d/d phi)` of the transition log-density on flat coordinates.
fn transition_gradient(params: &StaticParams, next: &[f64], prev: &[f64], d: usize) -> (f64, f64) {
    let (sigma, phi) = (params.sigma, params.phi);
    let s2 = sigma * sigma;
    let mut sq = 0.0;
    let mut cross = 0.0;
    for (x, p) in next.iter().zip(prev) {
        let r = x - phi * p;
        sq += r * r;
        cross += p * r;
    }
    let rows = (next.len() / d) as f64;
    (-rows * d as f64 / sigma + sq / (s2 * sigma), cross / s2)
}

/// Gradient of `log p(Y | U)` in `(alpha, sigma, phi)`, scaled by `1/(N d)`.
pub fn grad_log_obs(params: &StaticParams, config: &LatentConfig, obs: &[u32]) -> Result<Gradient> {
    let n = config.n();
    if obs.len() != pair_count(n) {
        return Err(Error::InputDomain(format!(
            "observation has {} pairs, expected {}",
            obs.len(),
            pair_count(n)
        )));
    }
    let scale = 1.0 / (n * config.d()) as f64;
    Ok([
        scale * alpha_gradient(params, config.coords(), n, config.d(), obs),
        0.0,
        0.0,
    ])
}

/// Gradient of `log p(U_t | U_{t-1})` in `(alpha, sigma, phi)`, scaled by `1/(N d)`.
pub fn grad_log_transition(
    params: &StaticParams,
    next: &LatentConfig,
    prev: &LatentConfig,
) -> Result<Gradient> {
    if next.n() != prev.n() || next.d() != prev.d() {
        return Err(Error::InvalidParameter("latent shapes differ".into()));
    }
    let scale = 1.0 / (next.n() * next.d()) as f64;
    let (gs, gp) = transition_gradient(params, next.coords(), prev.coords(), next.d());
    Ok([0.0, scale * gs, scale * gp])
}

/// Chain rule to `(alpha, log sigma, logit phi)`.
pub fn to_unconstrained_gradient(params: &StaticParams, g: Gradient) -> Gradient {
    [
        g[0],
        params.sigma * g[1],
        params.phi * (1.0 - params.phi) * g[2],
    ]
}

/// Forward reparameterization; see [`StaticParams::to_unconstrained`].
pub fn reparameterize(params: &StaticParams) -> UnconstrainedParams {
    params.to_unconstrained()
}

/// Inverse reparameterization.
pub fn constrain(
    u: &UnconstrainedParams,
    link: Link,
    likelihood: Likelihood,
) -> Result<StaticParams> {
    u.to_static(link, likelihood)
}

/// Per-particle statistics of the Rao-Blackwellised score.
#[derive(Clone, Debug)]
pub struct ScoreTracker {
    lambda: f64,
    stats: Vec<Gradient>,
    score: Gradient,
}

impl ScoreTracker {
    pub fn new(particles: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in (0, 1], got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            stats: vec![[0.0; 3]; particles],
            score: [0.0; 3],
        })
    }

    pub fn score(&self) -> Gradient {
        self.score
    }

    pub fn stats(&self) -> &[Gradient] {
        &self.stats
    }

    /// Advances by one observation time given the filtering weights, the
    /// ancestor of each particle among the previous statistics, and the
    /// per-particle gradients of that time.
    pub fn update(&mut self, weights: &[f64], ancestors: &[usize], grads: &[Gradient]) -> Gradient {
        let (lambda, prev) = (self.lambda, self.score);
        let stats: Vec<Gradient> = ancestors
            .iter()
            .zip(grads)
            .map(|(&a, g)| {
                let m = self.stats[a];
                [0, 1, 2].map(|c| lambda * m[c] + (1.0 - lambda) * prev[c] + g[c])
            })
            .collect();
        let mut score = [0.0; 3];
        for (w, m) in weights.iter().zip(&stats) {
            for c in 0..3 {
                score[c] += w * m[c];
            }
        }
        self.stats = stats;
        self.score = score;
        score
    }
}

/// Scaled unconstrained gradients of every particle in a GIRF view.
fn girf_gradients(
    params: &StaticParams,
    view: &GirfObservation<'_>,
    y: &[u32],
    exec: Execution,
) -> Vec<Gradient> {
    let (n, d) = (view.n, view.d);
    let scale = 1.0 / (n * d) as f64;
    map_indexed(exec, view.len(), |i| {
        let x = view.particle(i);
        let ga = alpha_gradient(params, x, n, d, y);
        let (gs, gp) = transition_gradient(params, x, view.parent(i), d);
        to_unconstrained_gradient(params, [scale * ga, scale * gs, scale * gp])
    })
}

/// A state space model whose parameters can be moved along a score.
pub trait ScoreModel: StateSpaceModel + Sized {
    fn unconstrained(&self) -> UnconstrainedParams;
    fn with_unconstrained(&self, u: &UnconstrainedParams) -> Result<Self>;
    /// Unconstrained gradient of the observation log-density.
    fn grad_log_observation(&self, state: &Self::State, obs: &Self::Obs) -> Gradient;
    /// Unconstrained gradient of the transition log-density.
    fn grad_log_transition(&self, next: &Self::State, prev: &Self::State) -> Gradient;
}

impl ScoreModel for ScalarLgssm {
    fn unconstrained(&self) -> UnconstrainedParams {
        UnconstrainedParams {
            alpha: self.alpha,
            sigma_tilde: self.sigma.ln(),
            phi_tilde: (self.phi / (1.0 - self.phi)).ln(),
        }
    }

    fn with_unconstrained(&self, u: &UnconstrainedParams) -> Result<Self> {
        let p = u.to_static(Link::default(), Likelihood::default())?;
        ScalarLgssm::new(p.alpha, p.phi, p.sigma, self.tau, self.p0)
    }

    fn grad_log_observation(&self, state: &f64, obs: &f64) -> Gradient {
        [(obs - self.alpha - state) / (self.tau * self.tau), 0.0, 0.0]
    }

    fn grad_log_transition(&self, next: &f64, prev: &f64) -> Gradient {
        let r = next - self.phi * prev;
        let s2 = self.sigma * self.sigma;
        let gs = -1.0 / self.sigma + r * r / (s2 * self.sigma);
        let gp = prev * r / s2;
        [0.0, self.sigma * gs, self.phi * (1.0 - self.phi) * gp]
    }
}

impl ScoreModel for NetworkSsm {
    fn unconstrained(&self) -> UnconstrainedParams {
        self.params.to_unconstrained()
    }

    fn with_unconstrained(&self, u: &UnconstrainedParams) -> Result<Self> {
        Ok(Self {
            params: u.to_static(self.params.link, self.params.likelihood)?,
            ..*self
        })
    }

    fn grad_log_observation(&self, state: &LatentConfig, obs: &Vec<u32>) -> Gradient {
        let g = grad_log_obs(&self.params, state, obs).expect("matching shapes");
        to_unconstrained_gradient(&self.params, g)
    }

    fn grad_log_transition(&self, next: &LatentConfig, prev: &LatentConfig) -> Gradient {
        let g = grad_log_transition(&self.params, next, prev).expect("matching shapes");
        to_unconstrained_gradient(&self.params, g)
    }
}

/// Score estimate of one filter pass.
#[derive(Clone, Debug)]
pub struct ScoreEstimate {
    pub score: Gradient,
    pub log_likelihood: f64,
    pub trace: FilterTrace,
}

/// Rao-Blackwellised score of a generic model from a bootstrap filter pass.
pub fn bootstrap_score<M: ScoreModel>(
    model: &M,
    observations: &[M::Obs],
    cfg: &BootstrapConfig,
    lambda: f64,
    streams: &RandomStreams,
) -> Result<ScoreEstimate> {
    let mut tracker = ScoreTracker::new(cfg.particles, lambda)?;
    let out = bootstrap_filter_with(model, observations, cfg, streams, |view| {
        let obs = &observations[view.time - 1];
        let grads: Vec<Gradient> = map_indexed(cfg.execution, view.particles.len(), |i| {
            let parent = &view.previous[view.ancestors[i]];
            let x = &view.particles[i];
            add(
                model.grad_log_observation(x, obs),
                model.grad_log_transition(x, parent),
            )
        });
        tracker.update(view.weights, view.ancestors, &grads);
        Ok(())
    })?;
    Ok(ScoreEstimate {
        score: tracker.score(),
        log_likelihood: out.log_likelihood,
        trace: out.trace,
    })
}

/// Output of a full GIRF pass with score tracking.
#[derive(Clone, Debug)]
pub struct GirfScoreRun {
    pub score: Gradient,
    pub log_likelihood: f64,
    pub trace: FilterTrace,
    /// Posterior mean edge probabilities (or rates) at each observation time.
    pub edge_means: Vec<Vec<f64>>,
    /// Filtering ensemble at the final time, with its score statistics.
    pub ensemble: ParticleEnsemble<LatentConfig>,
}

/// Rao-Blackwellised score `s_T` of the network model from one GIRF pass.
pub fn rao_blackwellised_score(
    params: &StaticParams,
    observations: &AdjacencySeries,
    cfg: &GirfConfig,
    lambda: f64,
    streams: &RandomStreams,
) -> Result<GirfScoreRun> {
    let mut tracker = ScoreTracker::new(cfg.particles, lambda)?;
    let mut filter = GirfFilter::new(params, observations, cfg, streams)?;
    let mut means = Vec::with_capacity(observations.len());
    let mut ensemble = None;
    while !filter.is_finished() {
        let view = filter.advance(params)?;
        let y = observations.slice(view.time - 1);
        let grads = girf_gradients(params, &view, y, cfg.execution);
        tracker.update(view.weights, view.ancestors, &grads);
        means.push(view.edge_means(params));
        if view.time == observations.len() {
            let mut e = view.to_ensemble();
            e.score_stats = Some(tracker.stats().to_vec());
            ensemble = Some(e);
        }
    }
    let trace = filter.into_trace();
    Ok(GirfScoreRun {
        score: tracker.score(),
        log_likelihood: trace.log_likelihood(),
        trace,
        edge_means: means,
        ensemble: ensemble.expect("at least one observation"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum StepScale {
    Fixed(f64),
    /// Chooses `c` so the first update has norm `min(|g_1|, target)`.
    Auto(f64),
}

/// Step sizes `gamma_k = c k^(-a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscentSchedule {
    pub exponent: f64,
    pub scale: StepScale,
}

impl Default for AscentSchedule {
    fn default() -> Self {
        Self {
            exponent: 0.7,
            scale: StepScale::Auto(0.1),
        }
    }
}

impl AscentSchedule {
    pub fn fixed(scale: f64, exponent: f64) -> Self {
        Self {
            exponent,
            scale: StepScale::Fixed(scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.5 && self.exponent < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step exponent must lie in (0.5, 1), got {}",
                self.exponent
            )));
        }
        let c = match self.scale {
            StepScale::Fixed(c) | StepScale::Auto(c) => c,
        };
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step scale must be nonnegative, got {c}"
            )));
        }
        Ok(())
    }

    /// Resolves the scale `c` from the first direction when automatic.
    pub fn resolve(&self, first_direction: Gradient) -> f64 {
        match self.scale {
            StepScale::Fixed(c) => c,
            StepScale::Auto(target) => {
                let n = norm(first_direction);
                if n > 0.0 {
                    (target / n).min(1.0)
                } else {
                    1.0
                }
            }
        }
    }

    pub fn step(&self, c: f64, k: usize) -> f64 {
        c * (k as f64).powf(-self.exponent)
    }
}

/// One row of a parameter trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    /// Iteration (offline) or observation time (online).
    pub index: usize,
    pub params: StaticParams,
    pub log_lik: f64,
}

fn diagnostics(rows: &[ParamRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{}: alpha={} sigma={} phi={} loglik={}",
            r.index, r.params.alpha, r.params.sigma, r.params.phi, r.log_lik
        );
    }
    out
}

/// Iterates `theta_k = theta_{k-1} + gamma_k score(theta_{k-1})` in
/// unconstrained coordinates. `eval(k, theta)` returns the score and a
/// log-likelihood estimate at `theta`. Returns `(theta_k, loglik_k)` per
/// iteration.
pub fn gradient_ascent<F>(
    init: UnconstrainedParams,
    schedule: &AscentSchedule,
    iterations: usize,
    mut eval: F,
) -> Result<Vec<(UnconstrainedParams, f64)>>
where
    F: FnMut(usize, &UnconstrainedParams) -> Result<(Gradient, f64)>,
{
    schedule.validate()?;
    let mut theta = init.to_array();
    let mut c = None;
    let mut out = Vec::with_capacity(iterations);
    for k in 1..=iterations {
        let (score, ll) = eval(k, &UnconstrainedParams::from_array(theta))?;
        if score.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteScore {
                iteration: k,
                diagnostics: format!("score {score:?} at {theta:?}"),
            });
        }
        let c = *c.get_or_insert_with(|| schedule.resolve(score));
        let gamma = schedule.step(c, k);
        theta = [0, 1, 2].map(|i| theta[i] + gamma * score[i]);
        out.push((UnconstrainedParams::from_array(theta), ll));
    }
    Ok(out)
}

/// Settings shared by offline and online fitting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Shrinkage of the score recursion.
    pub lambda: f64,
    pub schedule: AscentSchedule,
    /// Number of filter passes for offline fitting.
    pub iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.95,
            schedule: AscentSchedule::default(),
            iterations: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OfflineFit {
    /// Row `k` holds `theta_k` and the log-likelihood estimate of pass `k`.
    pub trace: Vec<ParamRow>,
    pub filter_traces: Vec<FilterTrace>,
    /// Posterior mean edge probabilities of the last pass, per observation time.
    pub edge_means: Vec<Vec<f64>>,
    /// Filtering ensemble at the final time of the last pass.
    pub ensemble: ParticleEnsemble<LatentConfig>,
}

impl OfflineFit {
    pub fn final_params(&self) -> StaticParams {
        self.trace.last().expect("at least one iteration").params
    }
}

/// Offline gradient ascent: one GIRF pass per iteration.
pub fn fit_offline(
    observations: &AdjacencySeries,
    init: &StaticParams,
    girf: &GirfConfig,
    fit: &FitConfig,
    streams: &RandomStreams,
) -> Result<OfflineFit> {
    if fit.iterations == 0 {
        return Err(Error::InvalidParameter(
            "need at least one iteration".into(),
        ));
    }
    init.validate()?;
    let (link, likelihood) = (init.link, init.likelihood);
    let mut rows: Vec<ParamRow> = Vec::new();
    let mut traces = Vec::new();
    let mut last = None;
    let result = gradient_ascent(
        init.to_unconstrained(),
        &fit.schedule,
        fit.iterations,
        |k, theta| {
            let params = theta.to_static(link, likelihood)?;
            let run = rao_blackwellised_score(
                &params,
                observations,
                girf,
                fit.lambda,
                &streams.child(StreamKind::Iteration, k as u64),
            )?;
            let out = (run.score, run.log_likelihood);
            traces.push(run.trace.clone());
            if let Some(prev) = rows.last().copied() {
                rows.push(ParamRow {
                    index: rows.len() + 1,
                    params: prev.params,
                    log_lik: run.log_likelihood,
                });
            }
            last = Some(run);
            Ok(out)
        },
    );
    let path = result.map_err(|e| match e {
        Error::NonFiniteScore {
            iteration,
            diagnostics: d,
        } => Error::NonFiniteScore {
            iteration,
            diagnostics: format!("{d}\n{}", diagnostics(&rows)),
        },
        other => other,
    })?;
    let trace = path
        .iter()
        .enumerate()
        .map(|(k, (theta, ll))| {
            Ok(ParamRow {
                index: k + 1,
                params: theta.to_static(link, likelihood)?,
                log_lik: *ll,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let last = last.expect("at least one iteration");
    Ok(OfflineFit {
        trace,
        filter_traces: traces,
        edge_means: last.edge_means,
        ensemble: last.ensemble,
    })
}

#[derive(Clone, Debug)]
pub struct OnlineFit {
    /// `theta_0, ..., theta_{T-1}`; row `t` carries the running log-likelihood
    /// estimate through time `t`.
    pub trace: Vec<ParamRow>,
    pub filter_trace: FilterTrace,
    pub log_likelihood: f64,
    /// Posterior mean edge probabilities at each observation time under the
    /// parameters in force at that time.
    pub edge_means: Vec<Vec<f64>>,
    pub ensemble: ParticleEnsemble<LatentConfig>,
}

impl OnlineFit {
    pub fn final_params(&self) -> StaticParams {
        self.trace.last().expect("nonempty trace").params
    }
}

/// Online gradient ascent inside a single GIRF pass.
///
/// Time `t` is filtered under `theta_{t-1}`; after it, the parameters move by
/// `gamma_t (s_t - s_{t-1})`. No update follows the final observation.
pub fn fit_online(
    observations: &AdjacencySeries,
    init: &StaticParams,
    girf: &GirfConfig,
    fit: &FitConfig,
    streams: &RandomStreams,
) -> Result<OnlineFit> {
    if observations.len() < 2 {
        return Err(Error::InvalidParameter(
            "online fitting needs T >= 2".into(),
        ));
    }
    init.validate()?;
    fit.schedule.validate()?;
    let (link, likelihood) = (init.link, init.likelihood);
    let big_t = observations.len();
    let mut tracker = ScoreTracker::new(girf.particles, fit.lambda)?;
    let mut filter = GirfFilter::new(init, observations, girf, streams)?;
    let mut params = *init;
    let mut theta = init.to_unconstrained().to_array();
    let mut rows = vec![ParamRow {
        index: 0,
        params,
        log_lik: 0.0,
    }];
    let mut means = Vec::with_capacity(big_t);
    let mut c = None;
    let mut ensemble = None;
    let mut prev_score = [0.0; 3];
    for t in 1..=big_t {
        let view = filter.advance(&params)?;
        let grads = girf_gradients(&params, &view, observations.slice(t - 1), girf.execution);
        let score = tracker.update(view.weights, view.ancestors, &grads);
        means.push(view.edge_means(&params));
        if t == big_t {
            ensemble = Some(view.to_ensemble());
            break;
        }
        let direction = [0, 1, 2].map(|i| score[i] - prev_score[i]);
        if direction.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteScore {
                iteration: t,
                diagnostics: diagnostics(&rows),
            });
        }
        let c = *c.get_or_insert_with(|| fit.schedule.resolve(direction));
        let gamma = fit.schedule.step(c, t);
        theta = [0, 1, 2].map(|i| theta[i] + gamma * direction[i]);
        params = UnconstrainedParams::from_array(theta).to_static(link, likelihood)?;
        prev_score = score;
        rows.push(ParamRow {
            index: t,
            params,
            log_lik: filter.log_likelihood(),
        });
    }
    let filter_trace = filter.into_trace();
    Ok(OnlineFit {
        log_likelihood: filter_trace.log_likelihood(),
        trace: rows,
        filter_trace,
        edge_means: means,
        ensemble: ensemble.expect("final observation"),
    })
}

/// Shortest-path distances on the graph `y > 0`, by breadth-first search.
/// Unreachable pairs get `max finite distance + gamma`.
pub fn graph_distances(n: usize, slice: &[u32], gamma: f64) -> Result<DMatrix<f64>> {
    let mut adj = vec![Vec::new(); n];
    for (k, (i, j)) in crate::model::pairs(n).enumerate() {
        if slice[k] > 0 {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut dist = DMatrix::from_element(n, n, f64::INFINITY);
    let mut max_finite: f64 = 0.0;
    let mut queue = VecDeque::new();
    for src in 0..n {
        dist[(src, src)] = 0.0;
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let dv = dist[(src, v)];
            for &w in &adj[v] {
                if dist[(src, w)].is_infinite() {
                    dist[(src, w)] = dv + 1.0;
                    max_finite = max_finite.max(dv + 1.0);
                    queue.push_back(w);
                }
            }
        }
    }
    if max_finite == 0.0 {
        return Err(Error::DegenerateInput(
            "graph has no edges, every distance is infinite".into(),
        ));
    }
    dist.iter_mut()
        .filter(|x| x.is_infinite())
        .for_each(|x| *x = max_finite + gamma);
    Ok(dist)
}

/// Classical multidimensional scaling: coordinates (`n x d`) whose Euclidean
/// distances approximate `dist`.
pub fn classical_mds(dist: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let n = dist.nrows();
    let sq = dist.map(|x| x * x);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(n, d, |i, c| match order.get(c) {
        Some(&k) => eig.eigenvectors[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt(),
        None => 0.0,
    })
}

/// Mean absolute coordinate, floored at `0.01`.
pub(crate) fn sigma_from_coordinates(coords: &[&DMatrix<f64>]) -> f64 {
    let per_time: Vec<f64> = coords
        .iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>() / c.len() as f64)
        .collect();
    let mean = per_time.iter().sum::<f64>() / per_time.len() as f64;
    mean.max(0.01)
}

/// Settings of [`initialize_params`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub latent_dim: usize,
    /// Padding added to the largest finite graph distance for unreachable pairs.
    pub gamma: f64,
    pub phi: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    /// Simulated latent configurations per grid point.
    pub replicates: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            gamma: 1.0,
            phi: 0.8,
            grid_min: -3.0,
            grid_max: 3.0,
            grid_points: 41,
            replicates: 20,
        }
    }
}

/// Mean simulated edge probability (or rate) for every `alpha` on the grid,
/// using the same latent draws for every grid point.
pub fn simulated_density_curve(
    sigma: f64,
    n: usize,
    link: Link,
    likelihood: Likelihood,
    init: &InitConfig,
    streams: &RandomStreams,
) -> Result<Vec<(f64, f64)>> {
    let base = StaticParams::new(0.0, sigma, init.phi)?
        .with_link(link)
        .with_likelihood(likelihood);
    let configs: Vec<LatentConfig> = (0..init.replicates)
        .map(|r| {
            let mut rng = streams.stream(StreamKind::Grid, 0, r as u64);
            stationary_prior_sample(&base, n, init.latent_dim, &mut rng)
        })
        .collect();
    let grid = crate::model::linear_schedule(init.grid_min, init.grid_max, init.grid_points);
    Ok(grid
        .into_iter()
        .map(|alpha| {
            let total: f64 = configs
                .iter()
                .map(|u| edge_means(alpha, link, likelihood, u).iter().sum::<f64>())
                .sum();
            (alpha, total / (configs.len() * pair_count(n)) as f64)
        })
        .collect())
}

/// Grid point whose density is closest to `target`; ties go to smaller `|alpha|`.
pub(crate) fn closest_on_grid(curve: &[(f64, f64)], target: f64) -> f64 {
    curve
        .iter()
        .min_by(|a, b| {
            let da = (a.1 - target).abs();
            let db = (b.1 - target).abs();
            da.total_cmp(&db).then(a.0.abs().total_cmp(&b.0.abs()))
        })
        .expect("nonempty grid")
        .0
}

/// Starting values: `sigma` from MDS of the first two networks, `phi` fixed,
/// `alpha` by matching the simulated density to the observed one.
pub fn initialize_params(
    observations: &AdjacencySeries,
    link: Link,
    likelihood: Likelihood,
    init: &InitConfig,
    streams: &RandomStreams,
) -> Result<StaticParams> {
    if observations.len() < 2 {
        return Err(Error::InvalidParameter(
            "initialization needs T >= 2".into(),
        ));
    }
    if init.grid_points == 0 || init.replicates == 0 || init.latent_dim == 0 {
        return Err(Error::InvalidParameter("empty initialization grid".into()));
    }
    let n = observations.n();
    let mut coords = Vec::with_capacity(2);
    for k in 0..2 {
        let dist = graph_distances(n, observations.slice(k), init.gamma)?;
        coords.push(classical_mds(&dist, init.latent_dim));
    }
    let sigma = sigma_from_coordinates(&[&coords[0], &coords[1]]);
    let curve = simulated_density_curve(sigma, n, link, likelihood, init, streams)?;
    let alpha = closest_on_grid(&curve, observations.mean_value());
    Ok(StaticParams::new(alpha, sigma, init.phi)?
        .with_link(link)
        .with_likelihood(likelihood))
}
