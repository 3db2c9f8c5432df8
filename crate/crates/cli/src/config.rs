//! Experiment configuration: a TOML file whose every key has a default, so a
//! minimal file only names the data and the method.

use std::path::{Path, PathBuf};
use std::time::Duration;

use felb_core::federation::DEFAULT_GAMMA;
use felb_core::{
    Aggregation, FederationConfig, Mechanism, PlantedSpec, PrivacyConfig, ProximityParams,
    RegularizationParams, StepRule,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Felb,
    FelbMu,
    AggBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AggChoice {
    Avg,
    Vote,
    Or,
}

impl From<AggChoice> for Aggregation {
    fn from(a: AggChoice) -> Self {
        match a {
            AggChoice::Avg => Aggregation::RoundedAverage,
            AggChoice::Vote => Aggregation::MajorityVote,
            AggChoice::Or => Aggregation::LogicalOr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PrivacyChoice {
    None,
    Gauss,
    Laplace,
    Bernoulli,
}

impl From<PrivacyChoice> for Mechanism {
    fn from(p: PrivacyChoice) -> Self {
        match p {
            PrivacyChoice::None => Mechanism::None,
            PrivacyChoice::Gauss => Mechanism::Gaussian,
            PrivacyChoice::Laplace => Mechanism::Laplace,
            PrivacyChoice::Bernoulli => Mechanism::BernoulliXor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Rmsd,
    F1,
    F1Star,
    IntegralityGap,
}

/// Planted-tile data built in memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub rows: usize,
    pub cols: usize,
    pub tiles: usize,
    /// Defaults to `rows / (2 tiles)`.
    pub tile_rows: Option<usize>,
    pub tile_cols: Option<usize>,
    pub tile_density: f64,
    pub background_density: f64,
    /// XOR noise probability applied after planting.
    pub noise: f64,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            rows: 500,
            cols: 100,
            tiles: 5,
            tile_rows: None,
            tile_cols: None,
            tile_density: 0.9,
            background_density: 0.0,
            noise: 0.0,
        }
    }
}

impl GenerateSection {
    pub fn spec(&self, seed: u64) -> PlantedSpec {
        let mut spec = PlantedSpec::with_defaults(self.rows, self.cols, self.tiles, seed);
        if let Some(r) = self.tile_rows {
            spec.tile_rows = r;
        }
        if let Some(c) = self.tile_cols {
            spec.tile_cols = c;
        }
        spec.tile_density = self.tile_density;
        spec.background_density = self.background_density;
        spec
    }
}

/// Data read from MatrixMarket files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSection {
    pub data: PathBuf,
    /// Noiseless ground truth, enables F1*.
    pub mask: Option<PathBuf>,
}

/// Exactly one data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Generate(GenerateSection),
    Files(FileSection),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Generate(GenerateSection::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub clients: usize,
    pub rank: usize,
    pub sync_interval: usize,
    pub max_iterations: usize,
    pub kappa: f64,
    pub lambda: f64,
    pub growth: f64,
    pub beta: f64,
    pub gamma: f64,
    pub weighted_mean: bool,
    pub shared_init: bool,
}

impl Default for FederationSection {
    fn default() -> Self {
        let f = FederationConfig::default();
        Self {
            clients: f.clients,
            rank: f.rank,
            sync_interval: f.sync_interval,
            max_iterations: f.max_iterations,
            kappa: f.reg.kappa,
            lambda: f.reg.lambda,
            growth: f.reg.growth,
            beta: f.rule.inertia_beta,
            gamma: DEFAULT_GAMMA,
            weighted_mean: f.weighted_mean,
            shared_init: f.shared_init,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    pub mechanism: PrivacyChoice,
    pub epsilon: f64,
    pub delta: Option<f64>,
    /// Frobenius clipping bound; clipping is off when absent.
    pub theta: Option<f64>,
    pub sensitivity: f64,
}

impl Default for PrivacySection {
    fn default() -> Self {
        let p = PrivacyConfig::default();
        Self {
            mechanism: PrivacyChoice::None,
            epsilon: p.epsilon,
            delta: None,
            theta: None,
            sensitivity: p.sensitivity,
        }
    }
}

impl PrivacySection {
    pub fn to_config(&self) -> PrivacyConfig {
        let base = PrivacyConfig {
            mechanism: self.mechanism.into(),
            epsilon: self.epsilon,
            delta: self.delta,
            sensitivity: self.sensitivity,
            ..PrivacyConfig::default()
        };
        match self.theta {
            Some(t) => base.with_clipping(t),
            None => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub method: Method,
    /// Used by `agg-baseline` only.
    pub aggregation: AggChoice,
    pub out: Option<PathBuf>,
    pub trials: usize,
    pub time_budget_seconds: Option<f64>,
    /// Write wall time into `history.csv`. Off by default so reruns are
    /// byte-identical.
    pub record_timing: bool,
    pub metrics: Vec<Metric>,
    pub data: DataSource,
    pub federation: FederationSection,
    pub privacy: PrivacySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            method: Method::Felb,
            aggregation: AggChoice::Vote,
            out: None,
            trials: 1,
            time_budget_seconds: None,
            record_timing: false,
            metrics: vec![Metric::Rmsd, Metric::F1, Metric::F1Star, Metric::IntegralityGap],
            data: DataSource::default(),
            federation: FederationSection::default(),
            privacy: PrivacySection::default(),
        }
    }
}

/// TOML integers are signed 64-bit, so seeds past `i64::MAX` are written as
/// strings. Both forms are accepted on input.
mod seed_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub method: Option<Method>,
    pub aggregation: Option<AggChoice>,
    pub clients: Option<usize>,
    pub sync_interval: Option<usize>,
    pub privacy: Option<PrivacyChoice>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub theta: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(a) = o.aggregation {
            self.aggregation = a;
        }
        if let Some(c) = o.clients {
            self.federation.clients = c;
        }
        if let Some(b) = o.sync_interval {
            self.federation.sync_interval = b;
        }
        if let Some(p) = o.privacy {
            self.privacy.mechanism = p;
        }
        if let Some(e) = o.epsilon {
            self.privacy.epsilon = e;
        }
        if let Some(d) = o.delta {
            self.privacy.delta = Some(d);
        }
        if let Some(t) = o.theta {
            self.privacy.theta = Some(t);
        }
    }

    /// Solver settings for a trial seeded with `seed`.
    pub fn federation_config(&self, seed: u64) -> FederationConfig {
        let f = &self.federation;
        let rule = match self.method {
            Method::FelbMu => StepRule::multiplicative(f.beta),
            _ => StepRule::lipschitz(f.beta),
        };
        FederationConfig {
            clients: f.clients,
            rank: f.rank,
            sync_interval: f.sync_interval,
            max_iterations: f.max_iterations,
            reg: RegularizationParams {
                kappa: f.kappa,
                lambda: f.lambda,
                growth: f.growth,
            },
            prox: ProximityParams { gamma: f.gamma },
            rule,
            privacy: self.privacy.to_config(),
            global_seed: seed,
            weighted_mean: f.weighted_mean,
            shared_init: f.shared_init,
            time_budget: self.time_budget_seconds.map(Duration::from_secs_f64),
        }
    }

    /// Every problem with the configuration, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trials < 1 {
            out.push("trials must be at least 1".to_string());
        }
        if let Some(t) = self.time_budget_seconds {
            if !(t >= 0.0 && t.is_finite()) {
                out.push(format!("time_budget_seconds must be a nonnegative number, got {t}"));
            }
        }
        if self.method == Method::AggBaseline && self.privacy.mechanism != PrivacyChoice::None {
            out.push("privacy mechanisms apply to felb and felb-mu only".to_string());
        }
        if let DataSource::Generate(g) = &self.data {
            out.extend(g.spec(self.seed).violations());
            if !(0.0..=0.5).contains(&g.noise) {
                out.push(format!("noise must lie in [0, 0.5], got {}", g.noise));
            }
            if self.federation.clients > g.rows {
                out.push(format!("{} clients for {} rows", self.federation.clients, g.rows));
            }
        }
        if self.time_budget_seconds.is_none_or(|t| t >= 0.0 && t.is_finite()) {
            out.extend(self.federation_config(self.seed).violations());
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(v.join("\n")))
        }
    }
}
