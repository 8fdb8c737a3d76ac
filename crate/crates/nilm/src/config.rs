//! Run configuration file and the run-directory manifest.

use std::path::{Path, PathBuf};

use nilm_core::model::{ConvSpec, ModelSpec, RnnSpec};
use nilm_core::sparse::EvolutionPolicy;
use nilm_core::synthesis::{WindowParams, ACTIVE_THRESHOLD, DEFAULT_REPETITIONS, DEFAULT_TRAIN_FRACTION, WINDOW_LEN, WINDOW_STEP};
use nilm_core::train::{TrainConfig, DEFAULT_LOG_SCALE_KW};
use nilm_core::NUM_APPLIANCES;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub window_len: usize,
    pub step: usize,
    pub active_threshold: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub max_gap_secs: i64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            window_len: WINDOW_LEN,
            step: WINDOW_STEP,
            active_threshold: ACTIVE_THRESHOLD,
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            max_gap_secs: nilm_core::series::DEFAULT_MAX_GAP_SECS,
        }
    }
}

impl SynthesisConfig {
    pub fn window_params(&self) -> WindowParams {
        WindowParams { window_len: self.window_len, step: self.step, active_threshold: self.active_threshold }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Inputs become `log1p(kw / log_scale_kw)` before standardisation; `null` disables.
    pub log_scale_kw: Option<f64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            seed: d.seed,
            log_scale_kw: Some(DEFAULT_LOG_SCALE_KW),
        }
    }
}

/// Optional replacements for the default architecture of every model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_sizes: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conv: Option<ConvSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rnn: Option<RnnSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse_init_scale: Option<f64>,
}

impl ModelOverrides {
    pub fn apply(&self, mut spec: ModelSpec) -> ModelSpec {
        if let Some(h) = self.hidden_sizes {
            spec.hidden_sizes = h;
        }
        if spec.conv.is_some() {
            spec.conv = self.conv.or(spec.conv);
        }
        if spec.rnn.is_some() {
            spec.rnn = self.rnn.or(spec.rnn);
        }
        spec.dropout_rate = self.dropout_rate.unwrap_or(spec.dropout_rate);
        spec.epsilon = self.epsilon.unwrap_or(spec.epsilon);
        spec.sparse_init_scale = self.sparse_init_scale.unwrap_or(spec.sparse_init_scale);
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Channel files in appliance order: dishwasher, washing machine,
    /// microwave, fridge. Relative paths resolve against the config file.
    pub channels: Vec<PathBuf>,
    pub synthesis: SynthesisConfig,
    pub train: TrainSettings,
    pub evolution: EvolutionPolicy,
    pub model: ModelOverrides,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            channels: Vec::new(),
            synthesis: SynthesisConfig::default(),
            train: TrainSettings::default(),
            evolution: EvolutionPolicy::default(),
            model: ModelOverrides::default(),
            out: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for c in &mut config.channels {
            if c.is_relative() {
                *c = base.join(&*c);
            }
        }
        if config.out.is_relative() {
            config.out = base.join(&config.out);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: nilm_core::Error| ConfigError::Invalid(e.to_string());
        self.synthesis.window_params().validate().map_err(invalid)?;
        if self.synthesis.repetitions == 0 {
            return Err(ConfigError::Invalid("repetitions must be >= 1".into()));
        }
        if !(self.synthesis.train_fraction > 0.0 && self.synthesis.train_fraction < 1.0) {
            return Err(ConfigError::Invalid("train_fraction must lie in (0, 1)".into()));
        }
        if self.synthesis.max_gap_secs < 0 {
            return Err(ConfigError::Invalid("max_gap_secs must be >= 0".into()));
        }
        self.train_config(false).validate().map_err(invalid)?;
        if self.train.log_scale_kw.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
            return Err(ConfigError::Invalid("log_scale_kw must be finite and > 0".into()));
        }
        self.evolution.validate().map_err(invalid)?;
        for spec in self.specs() {
            spec.validate().map_err(invalid)?;
        }
        Ok(())
    }

    pub fn require_channels(&self) -> Result<(), ConfigError> {
        if self.channels.len() != NUM_APPLIANCES {
            return Err(ConfigError::Invalid(format!("expected {NUM_APPLIANCES} channel files, found {}", self.channels.len())));
        }
        Ok(())
    }

    /// The six grid specs with overrides applied.
    pub fn specs(&self) -> Vec<ModelSpec> {
        ModelSpec::grid()
            .into_iter()
            .map(|s| ModelSpec { input_len: self.synthesis.window_len, ..self.model.apply(s) })
            .collect()
    }

    pub fn train_config(&self, sparse: bool) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: self.train.seed,
            evolution: sparse.then_some(self.evolution),
        }
    }

    /// SHA-256 of the canonical JSON of everything except the output directory.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { out: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Written at the top of every run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub layout_version: u32,
    pub config_sha256: String,
    pub synthesis_seed: u64,
    pub train_seed: u64,
}

pub const LAYOUT_VERSION: u32 = 1;

impl Manifest {
    pub fn for_config(config: &RunConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            layout_version: LAYOUT_VERSION,
            config_sha256: config.hash(),
            synthesis_seed: config.synthesis.seed,
            train_seed: config.train.seed,
        }
    }
}
