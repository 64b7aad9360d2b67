//! Flat TOML experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use relubridge::data::PairMode;
use relubridge::network::Architecture;
use relubridge::pathwalk::OutputScale;
use relubridge::train::TrainConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NodeCount,
    GapDeviation,
    Deflection,
    BridgeSim,
    TrainSweep,
    MarginFluctuation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::NodeCount => "node-count",
            ExperimentKind::GapDeviation => "gap-deviation",
            ExperimentKind::Deflection => "deflection",
            ExperimentKind::BridgeSim => "bridge-sim",
            ExperimentKind::TrainSweep => "train-sweep",
            ExperimentKind::MarginFluctuation => "margin-fluctuation",
        }
    }

    pub fn needs_network(self) -> bool {
        self != ExperimentKind::BridgeSim
    }

    pub fn trains(self) -> bool {
        matches!(
            self,
            ExperimentKind::TrainSweep | ExperimentKind::MarginFluctuation
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// Fresh i.i.d. N(0, 1) endpoints for every pair.
    Gaussian,
    Mnist,
    Cifar10,
    /// `RPDS1` cache file.
    Cache,
}

/// Every key is top level. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// `D | layers` or `CxHxW | layers`, see [`Architecture`].
    pub arch: Option<String>,
    pub seed: u64,

    #[serde(default = "default_data")]
    pub data: DataSource,
    pub data_path: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    /// Use only the first `data_limit` samples.
    pub data_limit: Option<usize>,
    /// Draw pairs from this dataset (same format) instead of the training set.
    pub pair_data_path: Option<PathBuf>,
    pub pair_labels_path: Option<PathBuf>,
    /// `any` or `within-class`.
    #[serde(default = "default_mode")]
    pub pair_mode: String,

    /// Independent network initializations.
    #[serde(default = "one")]
    pub inits: usize,
    /// Pairs per network.
    #[serde(default = "one")]
    pub pairs: usize,
    /// `pair-mean` or `unit`.
    #[serde(default = "default_scale")]
    pub output_scale: String,
    /// Start from this checkpoint instead of a fresh initialization.
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,

    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub eval_every: Option<usize>,
    pub stop_at_accuracy: Option<f64>,

    pub bridge_k: Option<usize>,
    pub bridge_trials: Option<usize>,
    pub bridge_sigma: Option<f64>,

    pub out: Option<PathBuf>,
    pub threads: Option<usize>,

    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub source_text: String,
}

fn default_data() -> DataSource {
    DataSource::Gaussian
}
fn default_mode() -> String {
    "any".into()
}
fn default_scale() -> String {
    "pair-mean".into()
}
fn default_max_nodes() -> usize {
    1_000_000
}
fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.source_text = text.to_owned();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.kind.needs_network() && self.arch.is_none() && self.checkpoint.is_none() {
            return bad(format!("{} needs `arch` or `checkpoint`", self.kind.name()));
        }
        if let Some(a) = &self.arch {
            Architecture::from_str(a).map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.pair_mode()?;
        self.output_scale()?;
        if self.inits == 0 || self.pairs == 0 {
            return bad("`inits` and `pairs` must be at least 1".into());
        }
        if matches!(
            self.data,
            DataSource::Mnist | DataSource::Cifar10 | DataSource::Cache
        ) && self.data_path.is_none()
        {
            return bad("dataset needs `data_path`".into());
        }
        if self.data == DataSource::Mnist && self.labels_path.is_none() {
            return bad("MNIST needs `labels_path`".into());
        }
        if self.pair_data_path.is_some() && self.data == DataSource::Gaussian {
            return bad("`pair_data_path` needs a dataset source".into());
        }
        if self.data == DataSource::Mnist
            && self.pair_data_path.is_some()
            && self.pair_labels_path.is_none()
        {
            return bad("MNIST pairs need `pair_labels_path`".into());
        }
        if self.kind.trains() && self.data == DataSource::Gaussian {
            return bad(format!(
                "{} trains and needs a labelled dataset",
                self.kind.name()
            ));
        }
        if self.kind == ExperimentKind::BridgeSim
            && (self.bridge_k.is_none() || self.bridge_trials.is_none())
        {
            return bad("bridge-sim needs `bridge_k` and `bridge_trials`".into());
        }
        self.train_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn architecture(&self) -> Result<Option<Architecture>, CliError> {
        self.arch
            .as_deref()
            .map(|a| Architecture::from_str(a).map_err(|e| CliError::Config(e.to_string())))
            .transpose()
    }

    pub fn pair_mode(&self) -> Result<PairMode, CliError> {
        PairMode::from_str(&self.pair_mode).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn output_scale(&self) -> Result<OutputScale, CliError> {
        match self.output_scale.as_str() {
            "pair-mean" => Ok(OutputScale::PairMean),
            "unit" => Ok(OutputScale::Unit),
            s => Err(CliError::Config(format!("unknown output_scale `{s}`"))),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            momentum: self.momentum.unwrap_or(d.momentum),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.seed,
            eval_every: self.eval_every.unwrap_or(d.eval_every),
            stop_at_accuracy: self.stop_at_accuracy,
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::from_toml(s, Path::new("."))
    }

    #[test]
    fn minimal_node_count() {
        let c = parse(
            "kind = \"node-count\"\narch = \"64 | dense:128 dense:1\"\nseed = 1\ninits = 500\n",
        )
        .unwrap();
        assert_eq!(c.kind, ExperimentKind::NodeCount);
        assert_eq!(c.inits, 500);
        assert_eq!(c.data, DataSource::Gaussian);
        assert_eq!(c.output_scale().unwrap(), OutputScale::PairMean);
    }

    #[test]
    fn config_errors() {
        for bad in [
            "kind = \"node-count\"\nseed = 1\n",
            "kind = \"node-count\"\narch = \"64 | dense\"\nseed = 1\n",
            "kind = \"node-count\"\narch = \"4 | dense:2\"\n",
            "kind = \"nodes\"\narch = \"4 | dense:2\"\nseed = 1\n",
            "kind = \"node-count\"\narch = \"4 | dense:2\"\nseed = 1\ncolour = 3\n",
            "kind = \"bridge-sim\"\nseed = 1\n",
            "kind = \"train-sweep\"\narch = \"4 | dense:2\"\nseed = 1\n",
            "kind = \"gap-deviation\"\narch = \"4 | dense:2\"\nseed = 1\ndata = \"mnist\"\n",
            "kind = \"node-count\"\narch = \"4 | dense:2\"\nseed = 1\noutput_scale = \"log\"\n",
            "kind = \"node-count\"\narch = \"4 | dense:2\"\nseed = 1\nbatch_size = 0\n",
        ] {
            assert!(matches!(parse(bad), Err(CliError::Config(_))), "{bad}");
        }
    }
}
