//! Experiment configuration, loaded from TOML.
//!
//! ```toml
//! mode = "synthetic"            # or "pool"
//!
//! [network]
//! kind = "ring"                 # ring | complete | star | edge_list
//! agents = 3
//! neighbors = 1                 # ring: neighbors on each side
//! # path = "graph.txt"          # edge_list only
//!
//! [model]
//! features = 2                  # M
//! input_dim = 1                 # d, synthetic only
//! # feature_seed = 7            # defaults to run.master_seed
//!
//! [run]
//! alpha = 0.05
//! # consensus_alpha = 0.05      # α inside P = I - αL, defaults to alpha
//! batch_size = 2                # c
//! iterations = 500              # T
//! runs = 2000
//! master_seed = 1
//! thin = 1
//!
//! [synthetic]
//! noise_std = 0.5
//! input = { kind = "standard_normal" }
//! # theta = [0.3, -1.2]         # drawn from N(0, I) when absent
//!
//! [data]
//! path = "energydata_complete.csv"
//! target = "Appliances"
//! subsample = 16000
//! partitioned = false
//! ridge = 0.0
//!
//! [analysis]
//! gram = "exact"                # exact | monte_carlo
//! gram_samples = 100000
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Topology;
use crate::observation::{CsvOptions, InputSampler, PoolSampling, Subsample, DEFAULT_GRAM_SAMPLES};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RFNET_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Synthetic,
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Complete,
    Star,
    EdgeList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub kind: TopologyKind,
    #[serde(default)]
    pub agents: usize,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_neighbors() -> usize {
    1
}

impl NetworkConfig {
    pub fn build(&self) -> Result<Topology> {
        let topo = match self.kind {
            TopologyKind::Ring => Topology::ring(self.agents, self.neighbors)?,
            TopologyKind::Complete => Topology::complete(self.agents)?,
            TopologyKind::Star => Topology::star(self.agents)?,
            TopologyKind::EdgeList => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("network.path is required for edge_list".into()))?;
                Topology::load_edge_list(path)?
            }
        };
        if self.agents != 0 && topo.n() != self.agents {
            return Err(Error::Config(format!(
                "network.agents = {} but the topology has {} nodes",
                self.agents,
                topo.n()
            )));
        }
        Ok(topo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_alpha: Option<f64>,
    pub batch_size: usize,
    pub iterations: u64,
    pub runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_thin")]
    pub thin: u64,
}

fn default_thin() -> u64 {
    100
}

impl RunConfig {
    pub fn consensus_alpha(&self) -> f64 {
        self.consensus_alpha.unwrap_or(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub input: InputSampler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    /// Seed for the row subsample; defaults to `run.master_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub partitioned: bool,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub ridge: f64,
}

fn default_delimiter() -> char {
    ','
}

impl DataConfig {
    pub fn sampling(&self) -> PoolSampling {
        if self.partitioned {
            PoolSampling::Partitioned
        } else {
            PoolSampling::Shared
        }
    }

    pub fn csv_options(&self, master_seed: u64) -> Result<CsvOptions> {
        if !self.delimiter.is_ascii() {
            return Err(Error::Config("data.delimiter must be an ASCII character".into()));
        }
        let mut opts = CsvOptions::new(self.target.clone());
        opts.features = self.features.clone();
        opts.delimiter = self.delimiter as u8;
        opts.subsample = self.subsample.map(|count| Subsample {
            count,
            seed: self.seed.unwrap_or(master_seed),
        });
        Ok(opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMethod {
    /// Closed form in synthetic mode, shard average in pool mode.
    #[default]
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub gram: GramMethod,
    #[serde(default = "default_gram_samples")]
    pub gram_samples: usize,
}

fn default_gram_samples() -> usize {
    DEFAULT_GRAM_SAMPLES
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            gram: GramMethod::Exact,
            gram_samples: DEFAULT_GRAM_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub network: NetworkConfig,
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let run = &self.run;
        if run.runs == 0 {
            return bad("run.runs must be positive".into());
        }
        if run.iterations == 0 {
            return bad("run.iterations must be positive".into());
        }
        if run.batch_size == 0 {
            return bad("run.batch_size must be positive".into());
        }
        if run.thin == 0 {
            return bad("run.thin must be positive".into());
        }
        if !(run.alpha > 0.0 && run.alpha.is_finite()) {
            return bad(format!("run.alpha must be positive, got {}", run.alpha));
        }
        if let Some(a) = run.consensus_alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("run.consensus_alpha must be positive, got {a}"));
            }
        }
        if self.model.features == 0 {
            return bad("model.features must be positive".into());
        }
        if self.network.kind != TopologyKind::EdgeList && self.network.agents == 0 {
            return bad("network.agents must be positive".into());
        }
        if self.analysis.gram_samples == 0 {
            return bad("analysis.gram_samples must be positive".into());
        }
        match self.mode {
            Mode::Synthetic => {
                match self.model.input_dim {
                    Some(d) if d > 0 => {}
                    _ => return bad("model.input_dim must be positive in synthetic mode".into()),
                }
                let syn = self
                    .synthetic
                    .as_ref()
                    .ok_or_else(|| Error::Config("synthetic mode needs a [synthetic] section".into()))?;
                if !(syn.noise_std >= 0.0 && syn.noise_std.is_finite()) {
                    return bad("synthetic.noise_std must be finite and >= 0".into());
                }
                if let Some(theta) = &syn.theta {
                    if theta.len() != self.model.features {
                        return bad(format!(
                            "synthetic.theta has {} entries, model.features = {}",
                            theta.len(),
                            self.model.features
                        ));
                    }
                }
            }
            Mode::Pool => {
                let data = self
                    .data
                    .as_ref()
                    .ok_or_else(|| Error::Config("pool mode needs a [data] section".into()))?;
                if !(data.ridge >= 0.0 && data.ridge.is_finite()) {
                    return bad("data.ridge must be finite and >= 0".into());
                }
                if data.subsample == Some(0) {
                    return bad("data.subsample must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Output directory: `output.dir`, else `$RFNET_OUTPUT_DIR`, else `out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML
    /// literals, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            set_dotted(&mut doc, key.trim(), parse_literal(raw.trim()))?;
        }
        let cfg: ExperimentConfig = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {raw}")) {
        Ok(w) => w.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(doc: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cur = doc;
    for part in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` does not name a table path")))?;
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` does not name a table path")))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
