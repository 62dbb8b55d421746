//! Experiment configuration: a TOML file whose every field has a default.

use std::path::{Path, PathBuf};

use cuthmm::dpm::{DpmHyper, NestedInit};
use cuthmm::histogram::{DirichletHyper, Pi1Config};
use cuthmm::hmm::{EmissionLaw, TransitionMatrix};
use cuthmm::partition::{build_partition, DyadicPartition, TransformG0};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    /// Sample sizes (prefixes of the one data set) fitted by `fit-q` and `diagnose`.
    pub grid: GridConfig,
    pub pi1: Pi1Section,
    pub pi2: Pi2Section,
    pub full: FullSection,
    pub spectral: SpectralSection,
    pub diagnostics: DiagnosticsSection,
    pub outputs: OutputsSection,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "Q_star")]
    pub q_star: Vec<Vec<f64>>,
    pub emissions: Vec<EmissionSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            r: 2,
            q_star: vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            emissions: vec![
                EmissionSpec::Normal { mean: -1.0, sd: 1.0 },
                EmissionSpec::Normal { mean: 1.0, sd: 1.0 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmissionSpec {
    Normal { mean: f64, sd: f64 },
    NormalMixture { weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64> },
}

impl EmissionSpec {
    pub fn law(&self) -> EmissionLaw {
        match self {
            EmissionSpec::Normal { mean, sd } => EmissionLaw::Normal { mean: *mean, sd: *sd },
            EmissionSpec::NormalMixture { weights, means, sds } => {
                EmissionLaw::NormalMixture { weights: weights.clone(), means: means.clone(), sds: sds.clone() }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Length of the simulated series; smaller sample sizes are its prefixes.
    pub n: usize,
    pub seed: u64,
    /// One-column CSV of observations to use instead of simulating.
    pub input: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n: 10_000, seed: 20_240_501, input: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum TransformSpec {
    SigmoidLinear,
    PureSigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    /// Dyadic levels; level M gives 2^M bins.
    #[serde(rename = "M")]
    pub m: Vec<u32>,
    pub transform: TransformSpec,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { m: vec![1, 2, 3, 4, 6, 7], transform: TransformSpec::SigmoidLinear }
    }
}

impl PartitionConfig {
    pub fn build(&self, level: u32) -> Result<DyadicPartition, CliError> {
        let g = match self.transform {
            TransformSpec::SigmoidLinear => TransformG0::sigmoid_linear(),
            TransformSpec::PureSigmoid => TransformG0::PureSigmoid,
        };
        build_partition(g, level).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: vec![1_000, 2_500, 5_000, 10_000] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Pi1Section {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Dirichlet concentration for every row of Q.
    pub gamma: f64,
    /// Dirichlet concentration for every bin weight.
    pub beta: f64,
}

impl Default for Pi1Section {
    fn default() -> Self {
        Self { iterations: 150_000, burn_in: 10_000, thin: 20, gamma: 1.0, beta: 1.0 }
    }
}

impl Pi1Section {
    pub fn chain(&self, seed: u64) -> Pi1Config {
        Pi1Config { iterations: self.iterations, burn_in: self.burn_in, thin: self.thin, seed }
    }

    pub fn hyper(&self, r: usize, kappa: usize) -> DirichletHyper {
        DirichletHyper::constant(r, kappa, self.gamma, self.beta)
    }
}

/// One cut-posterior emission fit: sample size and the level of the Π₁ draws it uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Pi2Cell {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum InitSpec {
    Prior,
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Pi2Section {
    /// Interior iterations per exterior draw.
    #[serde(rename = "C")]
    pub c: usize,
    pub cells: Vec<Pi2Cell>,
    #[serde(rename = "M0")]
    pub m0: f64,
    pub mu_c: f64,
    pub sigma_c2: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    /// Truncation level; ⌊√n⌋ when absent.
    #[serde(rename = "S_max")]
    pub s_max: Option<usize>,
    pub init: InitSpec,
    /// Evenly thin the Π₁ draws down to this many exterior draws.
    pub exterior_draws: Option<usize>,
}

impl Default for Pi2Section {
    fn default() -> Self {
        Self {
            c: 10,
            cells: vec![
                Pi2Cell { n: 1_000, m: 2 },
                Pi2Cell { n: 2_500, m: 3 },
                Pi2Cell { n: 5_000, m: 3 },
                Pi2Cell { n: 10_000, m: 4 },
            ],
            m0: 1.0,
            mu_c: 0.0,
            sigma_c2: 1.0,
            alpha_sigma: 1.0,
            beta_sigma: 1.0,
            s_max: None,
            init: InitSpec::Histogram,
            exterior_draws: None,
        }
    }
}

impl Pi2Section {
    pub fn hyper(&self, n: usize) -> DpmHyper {
        let base = DpmHyper::for_length(n);
        DpmHyper {
            m0: self.m0,
            mu_c: self.mu_c,
            sigma_c2: self.sigma_c2,
            alpha_sigma: self.alpha_sigma,
            beta_sigma: self.beta_sigma,
            s_max: self.s_max.unwrap_or(base.s_max),
        }
    }

    pub fn nested_init(&self) -> NestedInit {
        match self.init {
            InitSpec::Prior => NestedInit::Prior,
            InitSpec::Histogram => NestedInit::Histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct FullSection {
    pub n: Vec<usize>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub gamma: f64,
}

impl Default for FullSection {
    fn default() -> Self {
        Self { n: vec![2_500, 10_000], iterations: 70_000, burn_in: 10_000, thin: 10, gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    #[serde(rename = "M")]
    pub m: u32,
    /// Sample size; the whole series when absent.
    pub n: Option<usize>,
    pub restarts: usize,
    pub power_iterations: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self { m: 3, n: None, restarts: 50, power_iterations: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Sample size for the bin-count heuristic.
    pub n: usize,
    /// Level of the coarse reference fit for the heuristic.
    pub reference_m: u32,
    pub alphas: Vec<f64>,
    pub fisher_step: f64,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub monotonicity_slack: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            n: 1_000,
            reference_m: 2,
            alphas: vec![0.05, 0.1],
            fisher_step: 1e-4,
            em_tol: 1e-8,
            em_max_iter: 5_000,
            monotonicity_slack: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsSection {
    pub directory: PathBuf,
    pub grid_points: usize,
    /// Density grid range `[lo, hi]`; data range padded by 3 sd when absent.
    pub grid: Option<[f64; 2]>,
    pub band_level: f64,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), grid_points: 512, grid: None, band_level: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Smoke,
    Desk,
    Full,
}

impl Scale {
    pub fn divisor(self) -> usize {
        match self {
            Scale::Smoke => 100,
            Scale::Desk => 10,
            Scale::Full => 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Shrink every MCMC run length by the scale's divisor.
    pub fn scaled(mut self, scale: Scale) -> Self {
        let d = scale.divisor();
        self.pi1.iterations /= d;
        self.pi1.burn_in /= d;
        self.full.iterations /= d;
        self.full.burn_in /= d;
        self
    }

    pub fn q_star(&self) -> Result<TransitionMatrix, CliError> {
        TransitionMatrix::from_rows(&self.model.q_star).map_err(|e| CliError::Config(format!("model.Q_star: {e}")))
    }

    pub fn laws(&self) -> Vec<EmissionLaw> {
        self.model.emissions.iter().map(EmissionSpec::law).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let r = self.model.r;
        if r == 0 {
            return bad("model.R must be at least 1".into());
        }
        if self.model.q_star.len() != r || self.model.emissions.len() != r {
            return bad(format!("model.Q_star and model.emissions must have R = {r} entries"));
        }
        self.q_star()?;
        for (i, law) in self.laws().iter().enumerate() {
            law.validate().map_err(|e| CliError::Config(format!("model.emissions[{i}]: {e}")))?;
        }
        if self.data.input.is_none() && self.data.n == 0 {
            return bad("data.n must be positive".into());
        }
        if self.partition.m.is_empty() || self.partition.m.iter().any(|&m| m == 0 || m > 16) {
            return bad("partition.M must list levels between 1 and 16".into());
        }
        if self.grid.n.is_empty() || self.grid.n.iter().any(|&n| n < 2) {
            return bad("grid.n must list sample sizes of at least 2".into());
        }
        if self.data.input.is_none() {
            if let Some(n) = self.grid.n.iter().chain(&self.full.n).find(|&&n| n > self.data.n) {
                return bad(format!("sample size {n} exceeds data.n = {}", self.data.n));
            }
        }
        self.pi1.chain(0).validate().map_err(|e| CliError::Config(format!("pi1: {e}")))?;
        self.pi1.hyper(r, 2).validate().map_err(|e| CliError::Config(format!("pi1: {e}")))?;
        Pi1Config { iterations: self.full.iterations, burn_in: self.full.burn_in, thin: self.full.thin, seed: 0 }
            .validate()
            .map_err(|e| CliError::Config(format!("full: {e}")))?;
        if !(self.full.gamma > 0.0) {
            return bad("full.gamma must be positive".into());
        }
        if self.pi2.c == 0 {
            return bad("pi2.C must be at least 1".into());
        }
        if self.pi2.exterior_draws == Some(0) {
            return bad("pi2.exterior_draws must be positive".into());
        }
        for cell in &self.pi2.cells {
            self.pi2.hyper(cell.n).validate().map_err(|e| CliError::Config(format!("pi2: {e}")))?;
            if !self.grid.n.contains(&cell.n) || !self.partition.m.contains(&cell.m) {
                return bad(format!("pi2 cell (n = {}, M = {}) is not on the grid.n x partition.M grid", cell.n, cell.m));
            }
        }
        if !self.partition.m.contains(&self.diagnostics.reference_m) || !self.grid.n.contains(&self.diagnostics.n) {
            return bad("diagnostics.n and diagnostics.reference_m must be on the grid".into());
        }
        if self.diagnostics.alphas.iter().any(|a| !(*a > 0.0 && *a < 0.5)) {
            return bad("diagnostics.alphas must lie in (0, 0.5)".into());
        }
        if !(self.diagnostics.fisher_step > 0.0) || !(self.diagnostics.em_tol > 0.0) {
            return bad("diagnostics.fisher_step and em_tol must be positive".into());
        }
        if self.spectral.m == 0 || self.spectral.restarts == 0 || self.spectral.power_iterations == 0 {
            return bad("spectral.M, restarts and power_iterations must be positive".into());
        }
        if self.outputs.grid_points < 2 || !(self.outputs.band_level > 0.0 && self.outputs.band_level < 1.0) {
            return bad("outputs.grid_points must be >= 2 and band_level in (0, 1)".into());
        }
        if let Some([lo, hi]) = self.outputs.grid {
            if !(lo < hi) {
                return bad("outputs.grid must be an increasing pair".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_id(&self) -> String {
        self.hash()[..12].to_string()
    }
}

/// Seed for one grid cell, derived from the master seed and the cell's coordinates.
pub fn derive_seed(master: u64, tag: &str, a: u64, b: u64) -> u64 {
    let digest = Sha256::digest(format!("{master}/{tag}/{a}/{b}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}
