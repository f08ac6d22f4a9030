//! TOML run configuration. Every section and key is optional; values not
//! given fall back to the defaults below, and command-line flags override
//! the file.

use std::path::{Path, PathBuf};

use dlsn::data_io::{NodeFilter, WindowMode, WindowSpec};
use dlsn::estimation::{AscentSchedule, FitConfig, InitConfig};
use dlsn::girf::{GirfConfig, GuideMean};
use dlsn::model::{linear_schedule, Likelihood, Link, Scenario, ScenarioSpec, StaticParams};
use dlsn::smc::ResamplingScheme;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub scenario: ScenarioSection,
    pub girf: GirfSection,
    pub fit: FitSection,
    pub init: InitConfig,
    pub evaluate: EvaluateSection,
    pub benchmark: BenchmarkSection,
    pub ingest: IngestSection,
}

/// Model variant, plus the true parameters used by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub sigma: f64,
    pub phi: f64,
    pub link: Link,
    pub likelihood: Likelihood,
    pub latent_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            sigma: 0.4,
            phi: 0.9,
            link: Link::EuclideanDistance,
            likelihood: Likelihood::BernoulliLogit,
            latent_dim: 2,
        }
    }
}

impl ModelSection {
    pub fn params(&self) -> Result<StaticParams, CliError> {
        let p = StaticParams::new(self.alpha, self.sigma, self.phi)?
            .with_link(self.link)
            .with_likelihood(self.likelihood);
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    S1,
    S2,
    S3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub nodes: usize,
    pub times: usize,
    /// S2 pull toward the group centre.
    pub q: f64,
    /// S2 centre of the first group; the second is its negation.
    pub centre: Option<Vec<f64>>,
    /// S3 base rate at the first and last observation.
    pub alpha_start: f64,
    pub alpha_end: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::S1,
            nodes: 30,
            times: 25,
            q: 0.25,
            centre: None,
            alpha_start: 2.0,
            alpha_end: -2.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_table(&self) -> Result<toml::Table, CliError> {
        toml::Table::try_from(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec, CliError> {
        let s = &self.scenario;
        let d = self.model.latent_dim;
        let params = self.model.params()?;
        let mut spec = match s.kind {
            ScenarioKind::S1 => ScenarioSpec::s1(s.nodes, d, s.times, params),
            ScenarioKind::S2 => ScenarioSpec::s2(s.nodes, d, s.times, params),
            ScenarioKind::S3 => ScenarioSpec::s3(s.nodes, d, s.times, params),
        };
        match &mut spec.scenario {
            Scenario::S1 => {}
            Scenario::S2 { q, mu1, mu2 } => {
                *q = s.q;
                if let Some(c) = &s.centre {
                    *mu1 = c.clone();
                    *mu2 = c.iter().map(|x| -x).collect();
                }
            }
            Scenario::S3 { alpha_schedule } => {
                *alpha_schedule = linear_schedule(s.alpha_start, s.alpha_end, s.times);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// GIRF settings for a network with `n` nodes.
    pub fn girf_config(&self, n: usize) -> Result<GirfConfig, CliError> {
        let g = &self.girf;
        let substeps = g
            .substeps
            .unwrap_or_else(|| (g.substep_factor * n as f64).ceil().max(1.0) as usize);
        let cfg = GirfConfig::new(substeps, g.lookahead, g.particles, self.model.latent_dim)?
            .with_guide(g.guide);
        Ok(GirfConfig {
            scheme: g.scheme,
            ..cfg
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GirfSection {
    /// Fixed `S`; when absent `S = ceil(substep_factor * N)`.
    pub substeps: Option<usize>,
    pub substep_factor: f64,
    pub lookahead: usize,
    pub particles: usize,
    pub guide: GuideMean,
    pub scheme: ResamplingScheme,
}

impl Default for GirfSection {
    fn default() -> Self {
        Self {
            substeps: None,
            substep_factor: 1.5,
            lookahead: 1,
            particles: 5000,
            guide: GuideMean::Exact,
            scheme: ResamplingScheme::Systematic,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    #[default]
    Offline,
    Online,
}

/// Starting values that bypass the data-driven initialisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartingValues {
    pub alpha: f64,
    pub sigma: f64,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub mode: FitMode,
    /// `series.csv` to fit.
    pub series: Option<PathBuf>,
    /// `truth.csv` from `simulate`; enables the `mse_prob` column of `ess.csv`.
    pub truth: Option<PathBuf>,
    pub lambda: f64,
    pub iterations: usize,
    pub schedule: AscentSchedule,
    pub start: Option<StartingValues>,
    /// Fit on all but the final network and write its predictive means.
    pub holdout_last: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let base = FitConfig::default();
        Self {
            mode: FitMode::Offline,
            series: None,
            truth: None,
            lambda: base.lambda,
            iterations: base.iterations,
            schedule: base.schedule,
            start: None,
            holdout_last: false,
        }
    }
}

impl FitSection {
    pub fn fit_config(&self) -> Result<FitConfig, CliError> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(CliError::Config(format!(
                "fit.lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if self.iterations == 0 {
            return Err(CliError::Config("fit.iterations must be at least 1".into()));
        }
        self.schedule.validate()?;
        Ok(FitConfig {
            lambda: self.lambda,
            schedule: self.schedule,
            iterations: self.iterations,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    Mse,
    Aae,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Observed `series.csv`.
    pub series: Option<PathBuf>,
    /// Fitted `probabilities.csv`.
    pub probabilities: Option<PathBuf>,
    /// True `truth.csv` from `simulate`.
    pub truth: Option<PathBuf>,
    /// `predictive.csv` from `fit` with `holdout_last`.
    pub predictive: Option<PathBuf>,
    /// Metrics to compute; by default every metric the inputs allow.
    pub metrics: Option<Vec<Metric>>,
    pub replicates: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            series: None,
            probabilities: None,
            truth: None,
            predictive: None,
            metrics: None,
            replicates: dlsn::metrics::DEFAULT_REPLICATES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    /// Network sizes of the `N` sweep, each run at `S` in {N/2, N, 2N}.
    pub nodes: Vec<usize>,
    pub nodes_times: usize,
    pub nodes_alpha: f64,
    /// Series lengths of the `T` sweep, run at `S = N`.
    pub times: Vec<usize>,
    pub times_nodes: usize,
    pub times_alpha: f64,
    pub sigma: f64,
    pub phi: f64,
    pub particles: usize,
    /// Also time `2M` particles at the smallest `T` of the `T` sweep.
    pub double_particles: bool,
    pub repeats: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            nodes: vec![20, 40, 60],
            nodes_times: 25,
            nodes_alpha: 1.0,
            times: vec![50, 100, 200, 400],
            times_nodes: 10,
            times_alpha: 1.25,
            sigma: 0.2,
            phi: 0.9,
            particles: 500,
            double_particles: true,
            repeats: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub input: Option<PathBuf>,
    /// Window length in seconds.
    pub window: i64,
    pub mode: WindowMode,
    pub origin: Option<i64>,
    /// Keep only contacts among these labels.
    pub nodes: Option<Vec<String>>,
    /// Keep only contacts within this class (fourth and fifth columns).
    pub group: Option<String>,
    pub pin_nodes: bool,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            input: None,
            window: 240,
            mode: WindowMode::Binary,
            origin: None,
            nodes: None,
            group: None,
            pin_nodes: false,
        }
    }
}

impl IngestSection {
    pub fn filter(&self) -> NodeFilter {
        NodeFilter {
            nodes: self.nodes.as_ref().map(|v| v.iter().cloned().collect()),
            group: self.group.clone(),
            pin_nodes: self.pin_nodes,
        }
    }

    pub fn window_spec(&self) -> Result<WindowSpec, CliError> {
        if self.window <= 0 {
            return Err(CliError::Config(format!(
                "ingest.window must be positive, got {}",
                self.window
            )));
        }
        Ok(WindowSpec {
            length: self.window,
            mode: self.mode,
            origin: self.origin,
        })
    }
}

/// Resolves a required path, naming the config key and flag that set it.
pub fn require<'a>(path: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| {
        CliError::Config(format!(
            "missing input: set `{key}` in the config or pass {flag}"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[girf]\nparticles = 100\n[fit]\nmode = \"online\"\n[fit.schedule]\nexponent = 0.6\n",
        )
        .unwrap();
        assert_eq!(cfg.girf.particles, 100);
        assert_eq!(cfg.girf.lookahead, 1);
        assert_eq!(cfg.fit.mode, FitMode::Online);
        assert_eq!(cfg.fit.schedule.exponent, 0.6);
        assert_eq!(cfg.fit.schedule.scale, AscentSchedule::default().scale);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[girf]\nparticle = 100\n").is_err());
    }

    #[test]
    fn substeps_follow_the_factor() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.girf_config(30).unwrap().substeps, 45);
        assert_eq!(cfg.girf_config(7).unwrap().substeps, 11);
    }

    #[test]
    fn s3_schedule_matches_times() {
        let mut cfg = RunConfig::default();
        cfg.scenario.kind = ScenarioKind::S3;
        cfg.scenario.times = 5;
        match cfg.scenario_spec().unwrap().scenario {
            Scenario::S3 { alpha_schedule } => {
                assert_eq!(alpha_schedule, vec![2.0, 1.0, 0.0, -1.0, -2.0])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_round_trips_through_a_table() {
        let cfg = RunConfig::default();
        let table = cfg.to_table().unwrap();
        let back: RunConfig = table.try_into().unwrap();
        assert_eq!(back, cfg);
    }
}
