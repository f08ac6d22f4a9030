//! The dynamic latent space network model.
//!
//! Each node carries a latent coordinate in `R^d` that follows an independent
//! stationary AR(1) process. Conditional on the coordinates at time `t`, every
//! unordered pair interacts independently with a probability (Bernoulli) or
//! rate (Poisson) driven by a linear predictor built from the base rate
//! `alpha` and either the latent distance or the latent inner product.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fastmath;
use crate::smc::StateSpaceModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// `eta = alpha - ||u_i - u_j||`
    #[default]
    EuclideanDistance,
    /// `eta = alpha + u_i . u_j`
    DotProduct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Binary ties, `p = logistic(eta)`.
    #[default]
    BernoulliLogit,
    /// Interaction counts, `lambda = exp(eta)`.
    PoissonLog,
}

/// Static parameters `(alpha, sigma, phi)` plus the model variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticParams {
    pub alpha: f64,
    pub sigma: f64,
    pub phi: f64,
    #[serde(default)]
    pub link: Link,
    #[serde(default)]
    pub likelihood: Likelihood,
}

impl StaticParams {
    /// Distance link with Bernoulli ties.
    pub fn new(alpha: f64, sigma: f64, phi: f64) -> Result<Self> {
        let params = Self {
            alpha,
            sigma,
            phi,
            link: Link::EuclideanDistance,
            likelihood: Likelihood::BernoulliLogit,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_link(mut self, link: Link) -> Self {
        self.link = link;
        self
    }

    pub fn with_likelihood(mut self, likelihood: Likelihood) -> Self {
        self.likelihood = likelihood;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be finite, got {}",
                self.alpha
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "phi must lie in (0, 1), got {}",
                self.phi
            )));
        }
        Ok(())
    }

    /// Per-coordinate variance of the stationary latent distribution.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }

    /// `(alpha, log sigma, logit phi)`.
    pub fn to_unconstrained(&self) -> UnconstrainedParams {
        UnconstrainedParams {
            alpha: self.alpha,
            sigma_tilde: self.sigma.ln(),
            phi_tilde: (self.phi / (1.0 - self.phi)).ln(),
        }
    }
}

/// Parameters on the unconstrained scale used by gradient ascent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedParams {
    pub alpha: f64,
    pub sigma_tilde: f64,
    pub phi_tilde: f64,
}

impl UnconstrainedParams {
    pub fn to_static(&self, link: Link, likelihood: Likelihood) -> Result<StaticParams> {
        if !(self.alpha.is_finite() && self.sigma_tilde.is_finite() && self.phi_tilde.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "unconstrained parameters must be finite, got {self:?}"
            )));
        }
        let params = StaticParams {
            alpha: self.alpha,
            sigma: self.sigma_tilde.exp(),
            phi: 1.0 / (1.0 + (-self.phi_tilde).exp()),
            link,
            likelihood,
        };
        params.validate()?;
        Ok(params)
    }

    /// Ordered as `[alpha, sigma_tilde, phi_tilde]`, the layout of score vectors.
    pub fn to_array(&self) -> [f64; 3] {
        [self.alpha, self.sigma_tilde, self.phi_tilde]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self {
            alpha: v[0],
            sigma_tilde: v[1],
            phi_tilde: v[2],
        }
    }
}

/// Latent coordinates of all nodes at one time, stored row-major (`N x d`).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentConfig {
    n: usize,
    d: usize,
    coords: Vec<f64>,
}

impl LatentConfig {
    pub fn new(n: usize, d: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != n * d {
            return Err(Error::InvalidParameter(format!(
                "latent config needs {} entries for N={n}, d={d}, got {}",
                n * d,
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "latent coordinates must be finite".into(),
            ));
        }
        Ok(Self { n, d, coords })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            coords: vec![0.0; n * d],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.d;
        &mut self.coords[i * d..(i + 1) * d]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            d: self.d,
            coords: self.coords.iter().map(|x| x * factor).collect(),
        }
    }

    fn check_same_shape(&self, other: &LatentConfig) -> Result<()> {
        if self.n != other.n || self.d != other.d {
            return Err(Error::InvalidParameter(format!(
                "latent shapes differ: {}x{} vs {}x{}",
                self.n, self.d, other.n, other.d
            )));
        }
        Ok(())
    }
}

/// Number of unordered node pairs.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of pair `(i, j)`, `i < j`, in the upper-triangle ordering
/// `(0,1), (0,2), ..., (0,n-1), (1,2), ...`.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// All pairs `i < j` in upper-triangle order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Time-indexed symmetric interaction matrices with zero diagonal.
///
/// Slice `k` holds the observation at time `k + 1`; each slice stores the
/// strict upper triangle in [`pair_index`] order, which makes symmetry and
/// the absence of self-ties hold by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencySeries {
    n: usize,
    slices: Vec<Vec<u32>>,
}

impl AdjacencySeries {
    pub fn from_upper(n: usize, slices: Vec<Vec<u32>>) -> Result<Self> {
        let m = pair_count(n);
        if let Some(bad) = slices.iter().position(|s| s.len() != m) {
            return Err(Error::InvalidParameter(format!(
                "slice {bad} has {} pairs, expected {m}",
                slices[bad].len()
            )));
        }
        Ok(Self { n, slices })
    }

    /// Builds a series from dense `N x N` matrices, checking symmetry, the
    /// zero diagonal and nonnegativity.
    #[allow(clippy::needless_range_loop)]
    pub fn from_dense(n: usize, matrices: &[Vec<Vec<i64>>]) -> Result<Self> {
        let mut slices = Vec::with_capacity(matrices.len());
        for (t, mat) in matrices.iter().enumerate() {
            if mat.len() != n || mat.iter().any(|row| row.len() != n) {
                return Err(Error::InputDomain(format!("slice {t} is not {n}x{n}")));
            }
            let mut upper = Vec::with_capacity(pair_count(n));
            for i in 0..n {
                if mat[i][i] != 0 {
                    return Err(Error::InputDomain(format!(
                        "self-tie at slice {t}, node {i}"
                    )));
                }
                for j in i + 1..n {
                    if mat[i][j] != mat[j][i] {
                        return Err(Error::InputDomain(format!(
                            "slice {t} is not symmetric at ({i}, {j})"
                        )));
                    }
                    let y = u32::try_from(mat[i][j]).map_err(|_| {
                        Error::InputDomain(format!(
                            "invalid count {} at slice {t}, ({i}, {j})",
                            mat[i][j]
                        ))
                    })?;
                    upper.push(y);
                }
            }
            slices.push(upper);
        }
        Ok(Self { n, slices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observation times `T`.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slice(&self, k: usize) -> &[u32] {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[Vec<u32>] {
        &self.slices
    }

    /// Entry `y_ij` of slice `k`; zero on the diagonal.
    pub fn get(&self, k: usize, i: usize, j: usize) -> u32 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => self.slices[k][pair_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.slices[k][pair_index(self.n, j, i)],
        }
    }

    pub fn dense(&self, k: usize) -> Vec<Vec<u32>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(k, i, j)).collect())
            .collect()
    }

    pub fn is_binary(&self) -> bool {
        self.slices.iter().flatten().all(|&y| y <= 1)
    }

    /// Errors if the values are outside the domain of `likelihood`.
    pub fn check_domain(&self, likelihood: Likelihood) -> Result<()> {
        if likelihood == Likelihood::BernoulliLogit && !self.is_binary() {
            return Err(Error::InputDomain(
                "Bernoulli likelihood requires binary observations".into(),
            ));
        }
        Ok(())
    }

    /// First `len` slices.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            n: self.n,
            slices: self.slices[..len.min(self.slices.len())].to_vec(),
        }
    }

    /// Mean of `y_ij` over all pairs and times.
    pub fn mean_value(&self) -> f64 {
        let total: u64 = self.slices.iter().flatten().map(|&y| y as u64).sum();
        total as f64 / (self.len() * pair_count(self.n)).max(1) as f64
    }

    /// Sum of all upper-triangle entries.
    pub fn total(&self) -> u64 {
        self.slices.iter().flatten().map(|&y| y as u64).sum()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Edge probability (Bernoulli) or rate (Poisson) for a linear predictor.
#[inline]
pub fn edge_mean(likelihood: Likelihood, eta: f64) -> f64 {
    match likelihood {
        Likelihood::BernoulliLogit => logistic(eta),
        Likelihood::PoissonLog => eta.exp(),
    }
}

/// Linear predictor for pair `(i, j)`.
pub fn linear_predictor(params: &StaticParams, config: &LatentConfig, i: usize, j: usize) -> f64 {
    linear_predictor_with(params.alpha, params.link, config.row(i), config.row(j))
}

#[inline]
pub(crate) fn linear_predictor_with(alpha: f64, link: Link, ui: &[f64], uj: &[f64]) -> f64 {
    match link {
        Link::EuclideanDistance => {
            let sq: f64 = ui.iter().zip(uj).map(|(a, b)| (a - b) * (a - b)).sum();
            alpha - sq.sqrt()
        }
        Link::DotProduct => alpha + ui.iter().zip(uj).map(|(a, b)| a * b).sum::<f64>(),
    }
}

/// Edge means (probability or rate) of every pair, upper-triangle order.
pub fn edge_means(
    alpha: f64,
    link: Link,
    likelihood: Likelihood,
    config: &LatentConfig,
) -> Vec<f64> {
    pairs(config.n())
        .map(|(i, j)| {
            edge_mean(
                likelihood,
                linear_predictor_with(alpha, link, config.row(i), config.row(j)),
            )
        })
        .collect()
}

/// `-sum log(y!)`, the part of the Poisson log-density free of the latent state.
pub(crate) fn poisson_constant(y: &[u32]) -> f64 {
    -y.iter()
        .filter(|&&v| v > 1)
        .map(|&v| ln_gamma(v as f64 + 1.0))
        .sum::<f64>()
}

/// State-dependent part of the log observation density with all latent
/// coordinates multiplied by `scale`. The Poisson constant is excluded.
///
/// Predictors are gathered into fixed-size blocks spanning several rows so
/// the transcendental functions vectorize; block sums use a fixed order.
///
/// Wider SIMD variants are selected at runtime. None of them fuses
/// multiply-adds, so every variant returns bit-identical results.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pair_log_lik(
    alpha: f64,
    link: Link,
    likelihood: Likelihood,
    coords: &[f64],
    n: usize,
    d: usize,
    scale: f64,
    y: &[u32],
) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required CPU feature was detected above.
            return unsafe { pair_log_lik_avx512(alpha, link, likelihood, coords, n, d, scale, y) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected above.
            return unsafe { pair_log_lik_avx2(alpha, link, likelihood, coords, n, d, scale, y) };
        }
    }
    pair_log_lik_portable(alpha, link, likelihood, coords, n, d, scale, y)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
#[allow(clippy::too_many_arguments)]
unsafe fn pair_log_lik_avx512(
    alpha: f64,
    link: Link,
    likelihood: Likelihood,
    coords: &[f64],
    n: usize,
    d: usize,
    scale: f64,
    y: &[u32],
) -> f64 {
    pair_log_lik_portable(alpha, link, likelihood, coords, n, d, scale, y)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn pair_log_lik_avx2(
    alpha: f64,
    link: Link,
    likelihood: Likelihood,
    coords: &[f64],
    n: usize,
    d: usize,
    scale: f64,
    y: &[u32],
) -> f64 {
    pair_log_lik_portable(alpha, link, likelihood, coords, n, d, scale, y)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn pair_log_lik_portable(
    alpha: f64,
    link: Link,
    likelihood: Likelihood,
    coords: &[f64],
    n: usize,
    d: usize,
    scale: f64,
    y: &[u32],
) -> f64 {
    const BLOCK: usize = 256;
    let mut eta = [0.0f64; BLOCK];
    let mut terms = [0.0f64; BLOCK];
    let mut total = 0.0;
    let mut done = 0;
    let mut filled = 0;
    for i in 0..n {
        let ui = &coords[i * d..(i + 1) * d];
        let mut j = i + 1;
        while j < n {
            let len = (BLOCK - filled).min(n - j);
            let rows = &coords[j * d..(j + len) * d];
            let out = &mut eta[filled..filled + len];
            match d {
                1 => fill_predictors::<1>(link, alpha, scale, ui, rows, out),
                2 => fill_predictors::<2>(link, alpha, scale, ui, rows, out),
                3 => fill_predictors::<3>(link, alpha, scale, ui, rows, out),
                _ => fill_predictors_dyn(link, alpha, scale, ui, rows, out),
            }
            filled += len;
            j += len;
            if filled == BLOCK {
                total += block_log_lik(likelihood, &eta, &y[done..done + BLOCK], &mut terms);
                done += BLOCK;
                filled = 0;
            }
        }
    }
    if filled > 0 {
        total += block_log_lik(
            likelihood,
            &eta[..filled],
            &y[done..done + filled],
            &mut terms,
        );
    }
    total
}

#[inline(always)]
fn block_log_lik(likelihood: Likelihood, eta: &[f64], y: &[u32], terms: &mut [f64]) -> f64 {
    let terms = &mut terms[..eta.len()];
    match likelihood {
        Likelihood::BernoulliLogit => fill_terms(eta, y, terms, bernoulli_term),
        Likelihood::PoissonLog => fill_terms(eta, y, terms, poisson_term),
    }
    block_sum(terms)
}

#[inline(always)]
fn bernoulli_term(eta: f64, y: f64) -> f64 {
    y * eta - fastmath::softplus(eta)
}

#[inline(always)]
fn poisson_term(eta: f64, y: f64) -> f64 {
    y * eta - fastmath::exp(eta)
}

#[inline(always)]
fn fill_terms(eta: &[f64], y: &[u32], out: &mut [f64], term: impl Fn(f64, f64) -> f64) {
    for ((o, e), v) in out.iter_mut().zip(eta).zip(y) {
        *o = term(*e, *v as f64);
    }
}

/// Sum in four interleaved lanes, a fixed order independent of SIMD width.
#[inline(always)]
fn block_sum(terms: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let chunks = terms.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for l in 0..4 {
            lanes[l] += c[l];
        }
    }
    for (l, v) in rest.iter().enumerate() {
        lanes[l] += v;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
}

#[inline(always)]
fn fill_predictors<const D: usize>(
    link: Link,
    alpha: f64,
    scale: f64,
    ui: &[f64],
    rows: &[f64],
    out: &mut [f64],
) {
    let ui: &[f64; D] = ui.try_into().expect("row of length d");
    match link {
        Link::EuclideanDistance => {
            for (o, uj) in out.iter_mut().zip(rows.chunks_exact(D)) {
                let mut sq = 0.0;
                for c in 0..D {
                    let diff = ui[c] - uj[c];
                    sq += diff * diff;
                }
                *o = alpha - scale * sq.sqrt();
            }
        }
        Link::DotProduct => {
            let s2 = scale * scale;
            for (o, uj) in out.iter_mut().zip(rows.chunks_exact(D)) {
                let mut dot = 0.0;
                for c in 0..D {
                    dot += ui[c] * uj[c];
                }
                *o = alpha + s2 * dot;
            }
        }
    }
}

#[inline(always)]
fn fill_predictors_dyn(
    link: Link,
    alpha: f64,
    scale: f64,
    ui: &[f64],
    rows: &[f64],
    out: &mut [f64],
) {
    let d = ui.len();
    for (o, uj) in out.iter_mut().zip(rows.chunks_exact(d)) {
        *o = match link {
            Link::EuclideanDistance => {
                let sq: f64 = ui.iter().zip(uj).map(|(a, b)| (a - b) * (a - b)).sum();
                alpha - scale * sq.sqrt()
            }
            Link::DotProduct => {
                alpha + scale * scale * ui.iter().zip(uj).map(|(a, b)| a * b).sum::<f64>()
            }
        };
    }
}

/// `log p(Y | U, alpha)` summed over pairs `i < j`.
pub fn log_observation_density(
    params: &StaticParams,
    config: &LatentConfig,
    obs: &[u32],
) -> Result<f64> {
    let n = config.n();
    if obs.len() != pair_count(n) {
        return Err(Error::InputDomain(format!(
            "observation has {} pairs, expected {}",
            obs.len(),
            pair_count(n)
        )));
    }
    if params.likelihood == Likelihood::BernoulliLogit && obs.iter().any(|&y| y > 1) {
        return Err(Error::InputDomain(
            "Bernoulli likelihood requires binary observations".into(),
        ));
    }
    let constant = match params.likelihood {
        Likelihood::BernoulliLogit => 0.0,
        Likelihood::PoissonLog => poisson_constant(obs),
    };
    Ok(log_obs_scaled(
        params,
        config.coords(),
        n,
        config.d(),
        1.0,
        obs,
        constant,
    ))
}

/// Full log observation density of flat coordinates scaled by `scale`,
/// given the precomputed [`poisson_constant`] of `y`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn log_obs_scaled(
    params: &StaticParams,
    coords: &[f64],
    n: usize,
    d: usize,
    scale: f64,
    y: &[u32],
    constant: f64,
) -> f64 {
    constant
        + pair_log_lik(
            params.alpha,
            params.link,
            params.likelihood,
            coords,
            n,
            d,
            scale,
            y,
        )
}

/// The network model as a generic state space model, for the bootstrap filter.
#[derive(Clone, Copy, Debug)]
pub struct NetworkSsm {
    pub params: StaticParams,
    pub n: usize,
    pub d: usize,
}

impl StateSpaceModel for NetworkSsm {
    type State = LatentConfig;
    type Obs = Vec<u32>;

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> LatentConfig {
        stationary_prior_sample(&self.params, self.n, self.d, rng)
    }

    fn sample_transition(&self, prev: &LatentConfig, rng: &mut ChaCha8Rng) -> LatentConfig {
        transition_sample(&self.params, prev, rng)
    }

    fn log_observation(&self, state: &LatentConfig, obs: &Vec<u32>) -> f64 {
        let constant = match self.params.likelihood {
            Likelihood::BernoulliLogit => 0.0,
            Likelihood::PoissonLog => poisson_constant(obs),
        };
        log_obs_scaled(
            &self.params,
            state.coords(),
            self.n,
            self.d,
            1.0,
            obs,
            constant,
        )
    }
}

/// Draw `U_0` from the stationary prior `N(0, sigma^2 / (1 - phi^2) I)`.
pub fn stationary_prior_sample<R: Rng + ?Sized>(
    params: &StaticParams,
    n: usize,
    d: usize,
    rng: &mut R,
) -> LatentConfig {
    let sd = params.stationary_variance().sqrt();
    let coords = (0..n * d)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    LatentConfig { n, d, coords }
}

/// Draw `U_t | U_{t-1}`, each row `N(phi u, sigma^2 I)`.
pub fn transition_sample<R: Rng + ?Sized>(
    params: &StaticParams,
    prev: &LatentConfig,
    rng: &mut R,
) -> LatentConfig {
    let mut next = prev.clone();
    transition_into(
        params.phi,
        params.sigma,
        prev.coords(),
        next.coords_mut(),
        rng,
    );
    next
}

/// `out = mean_factor * prev + sd * z` elementwise.
#[inline]
pub(crate) fn transition_into<R: Rng + ?Sized>(
    mean_factor: f64,
    sd: f64,
    prev: &[f64],
    out: &mut [f64],
    rng: &mut R,
) {
    for (o, p) in out.iter_mut().zip(prev) {
        let z: f64 = rng.sample(StandardNormal);
        *o = mean_factor * p + sd * z;
    }
}

/// `log p(U_t | U_{t-1})` under the AR(1) dynamics.
pub fn log_transition_density(
    params: &StaticParams,
    next: &LatentConfig,
    prev: &LatentConfig,
) -> Result<f64> {
    next.check_same_shape(prev)?;
    let var = params.sigma * params.sigma;
    let sq: f64 = next
        .coords()
        .iter()
        .zip(prev.coords())
        .map(|(x, p)| {
            let r = x - params.phi * p;
            r * r
        })
        .sum();
    let k = next.coords().len() as f64;
    Ok(-0.5 * k * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * sq / var)
}

/// Data-generating mechanisms used for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// The model itself.
    S1,
    /// Two communities pulled toward fixed centres:
    /// `u_it = (1 - q) u_{i,t-1} + q mu_c + eps`.
    S2 {
        q: f64,
        mu1: Vec<f64>,
        mu2: Vec<f64>,
    },
    /// Time-varying base rate `alpha_t`, one entry per observation time.
    S3 { alpha_schedule: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub params: StaticParams,
}

/// `len` equispaced values from `start` to `end` inclusive.
pub fn linear_schedule(start: f64, end: f64, len: usize) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..len)
            .map(|k| start + (end - start) * k as f64 / (len - 1) as f64)
            .collect(),
    }
}

impl ScenarioSpec {
    pub fn s1(n: usize, d: usize, t: usize, params: StaticParams) -> Self {
        Self {
            scenario: Scenario::S1,
            n,
            d,
            t,
            params,
        }
    }

    /// Two groups with `q = 0.25` and centres `(2, 0, ...)` and `(-2, 0, ...)`.
    pub fn s2(n: usize, d: usize, t: usize, params: StaticParams) -> Self {
        let mut mu1 = vec![0.0; d];
        let mut mu2 = vec![0.0; d];
        if d > 0 {
            mu1[0] = 2.0;
            mu2[0] = -2.0;
        }
        Self {
            scenario: Scenario::S2 { q: 0.25, mu1, mu2 },
            n,
            d,
            t,
            params,
        }
    }

    /// Base rate decreasing linearly from 2 to -2.
    pub fn s3(n: usize, d: usize, t: usize, params: StaticParams) -> Self {
        Self {
            scenario: Scenario::S3 {
                alpha_schedule: linear_schedule(2.0, -2.0, t),
            },
            n,
            d,
            t,
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n < 2 || self.d == 0 || self.t == 0 {
            return Err(Error::InvalidParameter(format!(
                "scenario needs N >= 2, d >= 1, T >= 1 (got N={}, d={}, T={})",
                self.n, self.d, self.t
            )));
        }
        match &self.scenario {
            Scenario::S1 => {}
            Scenario::S2 { q, mu1, mu2 } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "q must lie in (0, 1), got {q}"
                    )));
                }
                if mu1.len() != self.d || mu2.len() != self.d {
                    return Err(Error::InvalidParameter(
                        "group centres must have dimension d".into(),
                    ));
                }
            }
            Scenario::S3 { alpha_schedule } => {
                if alpha_schedule.len() != self.t {
                    return Err(Error::InvalidParameter(format!(
                        "alpha schedule has {} entries, expected T={}",
                        alpha_schedule.len(),
                        self.t
                    )));
                }
                if alpha_schedule.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "alpha schedule must be finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Group of each node under S2: the first `ceil(N/2)` nodes are group 0.
    pub fn groups(&self) -> Vec<usize> {
        let first = self.n.div_ceil(2);
        (0..self.n).map(|i| usize::from(i >= first)).collect()
    }
}

/// Output of [`simulate_scenario`].
#[derive(Clone, Debug)]
pub struct SimulatedNetwork {
    pub series: AdjacencySeries,
    /// `U_0, ..., U_T`.
    pub latent: Vec<LatentConfig>,
    /// Base rate in force at each observation time.
    pub alphas: Vec<f64>,
    /// True edge probabilities (or rates) per observation time, pair order.
    pub edge_means: Vec<Vec<f64>>,
}

pub fn simulate_scenario<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<SimulatedNetwork> {
    spec.validate()?;
    let (n, d, t_len) = (spec.n, spec.d, spec.t);
    let p = spec.params;

    let mut latent = Vec::with_capacity(t_len + 1);
    match &spec.scenario {
        Scenario::S1 | Scenario::S3 { .. } => {
            let mut u = stationary_prior_sample(&p, n, d, rng);
            latent.push(u.clone());
            for _ in 0..t_len {
                u = transition_sample(&p, &u, rng);
                latent.push(u.clone());
            }
        }
        Scenario::S2 { q, mu1, mu2 } => {
            let groups = spec.groups();
            let centre = |i: usize| if groups[i] == 0 { mu1 } else { mu2 };
            let keep = 1.0 - q;
            // Stationary spread of the mean-reverting dynamics around each centre.
            let init_sd = p.sigma / (1.0 - keep * keep).sqrt();
            let mut u = LatentConfig::zeros(n, d);
            for i in 0..n {
                let mu = centre(i);
                for (c, x) in u.row_mut(i).iter_mut().enumerate() {
                    *x = mu[c] + init_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            latent.push(u.clone());
            for _ in 0..t_len {
                let mut next = u.clone();
                for i in 0..n {
                    let mu = centre(i);
                    let prev = u.row(i);
                    for (c, x) in next.row_mut(i).iter_mut().enumerate() {
                        let z: f64 = rng.sample(StandardNormal);
                        *x = keep * prev[c] + q * mu[c] + p.sigma * z;
                    }
                }
                u = next;
                latent.push(u.clone());
            }
        }
    }

    let alphas = match &spec.scenario {
        Scenario::S3 { alpha_schedule } => alpha_schedule.clone(),
        _ => vec![p.alpha; t_len],
    };

    let mut slices = Vec::with_capacity(t_len);
    let mut means = Vec::with_capacity(t_len);
    for (k, alpha) in alphas.iter().enumerate() {
        let mu = edge_means(*alpha, p.link, p.likelihood, &latent[k + 1]);
        let ys = mu
            .iter()
            .map(|&m| sample_edge(p.likelihood, m, rng))
            .collect();
        slices.push(ys);
        means.push(mu);
    }

    Ok(SimulatedNetwork {
        series: AdjacencySeries::from_upper(n, slices)?,
        latent,
        alphas,
        edge_means: means,
    })
}

/// One draw of an edge value given its probability or rate.
pub fn sample_edge<R: Rng + ?Sized>(likelihood: Likelihood, mean: f64, rng: &mut R) -> u32 {
    match likelihood {
        Likelihood::BernoulliLogit => u32::from(rng.random::<f64>() < mean),
        Likelihood::PoissonLog => {
            if mean <= 0.0 || !mean.is_finite() {
                return 0;
            }
            Poisson::new(mean)
                .map(|dist| dist.sample(rng) as u32)
                .unwrap_or(0)
        }
    }
}
