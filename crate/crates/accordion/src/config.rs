//! Run configuration documents (TOML). The schema is documented in
//! `docs/config.md`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use accordion_core::baseline::BaselineConfig;
use accordion_core::data::{make_synthetic, split, Dataset, SplitSpec, SyntheticTask};
use accordion_core::nn::{architecture, NetworkSpec, ARCHITECTURES};
use accordion_core::schemes::{Encoding, Scheme, SchemeConfig};
use serde::{Deserialize, Serialize};

use crate::datasets::{load_cifar10_bin, load_mnist_idx};
use crate::error::{io_err, Error, Result};

/// Environment variable naming the directory relative dataset paths resolve
/// against.
pub const DATASET_ROOT_ENV: &str = "DATASET_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SteadyState,
    Generational,
    Elitism,
    /// Gradient training from the fittest initial member.
    Backprop,
}

impl Method {
    pub fn scheme(self) -> Option<Scheme> {
        match self {
            Method::SteadyState => Some(Scheme::SteadyState),
            Method::Generational => Some(Scheme::Generational),
            Method::Elitism => Some(Scheme::Elitism),
            Method::Backprop => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArchitectureRef {
    Named(String),
    Inline(NetworkSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitName {
    Train,
    #[default]
    Validation,
    Test,
}

fn mnist_images() -> String {
    "train-images-idx3-ubyte".into()
}

fn mnist_labels() -> String {
    "train-labels-idx1-ubyte".into()
}

fn cifar_batches() -> Vec<String> {
    (1..=5).map(|i| format!("data_batch_{i}.bin")).collect()
}

fn yes() -> bool {
    true
}

fn synthetic_default() -> SyntheticTask {
    SyntheticTask::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Mnist {
        /// Directory holding the IDX files; relative paths resolve against
        /// the dataset root.
        dir: PathBuf,
        #[serde(default = "mnist_images")]
        images: String,
        #[serde(default = "mnist_labels")]
        labels: String,
        /// Keep only the first `limit` examples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
    Cifar10 {
        dir: PathBuf,
        #[serde(default = "cifar_batches")]
        batches: Vec<String>,
        /// Convert to one luma channel (the LeNet architecture takes 32x32x1).
        #[serde(default = "yes")]
        grayscale: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
    Synthetic {
        #[serde(default = "synthetic_classes")]
        classes: usize,
        #[serde(default = "synthetic_count")]
        count: usize,
        #[serde(default = "synthetic_side")]
        height: usize,
        #[serde(default = "synthetic_side")]
        width: usize,
        #[serde(default = "synthetic_channels")]
        channels: usize,
        #[serde(default = "synthetic_noise")]
        noise: f64,
        /// Generator seed, independent of the run seed.
        #[serde(default)]
        seed: u64,
    },
}

fn synthetic_classes() -> usize {
    synthetic_default().classes
}
fn synthetic_count() -> usize {
    synthetic_default().count
}
fn synthetic_side() -> usize {
    synthetic_default().height
}
fn synthetic_channels() -> usize {
    synthetic_default().channels
}
fn synthetic_noise() -> f64 {
    synthetic_default().noise
}

/// Genetic-algorithm settings; every field defaults to the standard protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub pop_size: usize,
    pub crossover_share: f64,
    pub mutation_ratio: f64,
    pub mutation_probability: f64,
    pub elite_count: usize,
    pub pool_size: usize,
    pub batch_size: usize,
    pub filter_noise_sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
}

impl Default for GaConfig {
    fn default() -> Self {
        let d = SchemeConfig::default();
        Self {
            pop_size: d.pop_size,
            crossover_share: d.crossover_share,
            mutation_ratio: d.mutation_ratio,
            mutation_probability: d.mutation_probability,
            elite_count: d.elite_count,
            pool_size: d.pool_size,
            batch_size: d.batch_size,
            filter_noise_sd: d.filter_noise_sd,
            max_generations: None,
            target_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Method,
    pub seed: u64,
    /// Registry name or inline layer list; chosen from the dataset when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ArchitectureRef>,
    #[serde(default)]
    pub encoding: Encoding,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitSpec,
    /// Partition that fitness (and baseline accuracy) is measured on.
    #[serde(default)]
    pub fitness_split: SplitName,
    /// Initial population file shared between runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PathBuf>,
    /// Write a checkpoint every this many generations; 0 disables.
    #[serde(default)]
    pub checkpoint_interval: u64,
    /// Set to false for byte-reproducible metrics files.
    #[serde(default = "yes")]
    pub record_wall_clock: bool,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub backprop: BaselineConfig,
}

/// Train, validation and test partitions.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &Dataset {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    /// Checks everything that does not need the dataset on disk.
    pub fn validate(&self) -> Result<()> {
        self.architecture()?;
        if let Some(scheme) = self.scheme.scheme() {
            self.scheme_config(scheme).validate()?;
            if self.ga.max_generations.is_none() && self.ga.target_accuracy.is_none() {
                return Err(Error::Config("ga.max_generations or ga.target_accuracy must be set".into()));
            }
        } else {
            self.backprop.validate()?;
        }
        Ok(())
    }

    pub fn scheme_config(&self, scheme: Scheme) -> SchemeConfig {
        let g = &self.ga;
        SchemeConfig {
            scheme,
            pop_size: g.pop_size,
            crossover_share: g.crossover_share,
            mutation_ratio: g.mutation_ratio,
            mutation_probability: g.mutation_probability,
            elite_count: g.elite_count,
            pool_size: g.pool_size,
            encoding: self.encoding,
            batch_size: g.batch_size,
            filter_noise_sd: g.filter_noise_sd,
            max_generations: g.max_generations,
            target_accuracy: g.target_accuracy,
        }
    }

    pub fn architecture(&self) -> Result<Arc<NetworkSpec>> {
        let named = |name: &str| {
            architecture(name).ok_or_else(|| {
                Error::Config(format!("architecture: unknown `{name}`; known: {}", ARCHITECTURES.join(", ")))
            })
        };
        let spec = match &self.architecture {
            Some(ArchitectureRef::Named(name)) => named(name)?,
            Some(ArchitectureRef::Inline(spec)) => {
                spec.validate()?;
                spec.clone()
            }
            None => match &self.dataset {
                DatasetConfig::Mnist { .. } => named("mnist-custom")?,
                DatasetConfig::Cifar10 { .. } => named("lenet-cifar10")?,
                DatasetConfig::Synthetic { classes, .. } => named(&format!("synthetic-tiny-{classes}"))?,
            },
        };
        Ok(Arc::new(spec))
    }

    /// Loads the configured dataset. Relative directories resolve against
    /// `root`, then `$DATASET_ROOT`, then the working directory.
    pub fn load_dataset(&self, root: Option<&Path>) -> Result<Dataset> {
        let resolve = |dir: &Path| -> PathBuf {
            if dir.is_absolute() {
                return dir.to_path_buf();
            }
            match root.map(Path::to_path_buf).or_else(|| std::env::var_os(DATASET_ROOT_ENV).map(PathBuf::from)) {
                Some(r) => r.join(dir),
                None => dir.to_path_buf(),
            }
        };
        let limit_to = |d: Dataset, limit: Option<usize>| -> Result<Dataset> {
            match limit {
                Some(n) if n < d.len() => Ok(d.subset(&(0..n).collect::<Vec<_>>())?),
                _ => Ok(d),
            }
        };
        match &self.dataset {
            DatasetConfig::Mnist { dir, images, labels, limit } => {
                let dir = resolve(dir);
                limit_to(load_mnist_idx(&dir.join(images), &dir.join(labels))?, *limit)
            }
            DatasetConfig::Cifar10 { dir, batches, grayscale, limit } => {
                let dir = resolve(dir);
                let paths: Vec<PathBuf> = batches.iter().map(|b| dir.join(b)).collect();
                let d = limit_to(load_cifar10_bin(&paths)?, *limit)?;
                Ok(if *grayscale { d.to_grayscale()? } else { d })
            }
            &DatasetConfig::Synthetic { classes, count, height, width, channels, noise, seed } => {
                let task = SyntheticTask { classes, count, height, width, channels, noise };
                Ok(make_synthetic(&task, seed)?)
            }
        }
    }

    pub fn splits(&self, root: Option<&Path>) -> Result<Splits> {
        let data = self.load_dataset(root)?;
        let (train, validation, test) = split(&data, &self.split)?;
        Ok(Splits { train, validation, test })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use accordion_core::data::Portion;

    const MINIMAL: &str = r#"
scheme = "elitism"
seed = 7

[dataset]
kind = "synthetic"

[ga]
max_generations = 5
"#;

    #[test]
    fn minimal_document_gets_protocol_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let s = cfg.scheme_config(Scheme::Elitism);
        assert_eq!(
            (s.crossover_share, s.mutation_ratio, s.mutation_probability, s.elite_count, s.pool_size, s.pop_size, s.batch_size),
            (0.7, 0.1, 0.2, 10, 20, 100, 32)
        );
        assert_eq!(cfg.encoding, Encoding::Accordion);
        assert_eq!(cfg.fitness_split, SplitName::Validation);
        assert_eq!(cfg.split.train, Portion::Fraction(0.8));
        assert_eq!(cfg.architecture().unwrap().name, "synthetic-tiny");
    }

    #[test]
    fn unknown_keys_are_named() {
        for (doc, key) in [
            (format!("{MINIMAL}\nbogus = 1\n"), "bogus"),
            (MINIMAL.replace("[ga]", "[ga]\nelite = 3"), "elite"),
            (MINIMAL.replace("kind = \"synthetic\"", "kind = \"synthetic\"\nnoize = 0.1"), "noize"),
        ] {
            match RunConfig::parse(&doc) {
                Err(Error::Config(m)) => assert!(m.contains(key), "{m}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn serialize_parse_is_idempotent() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_toml(), again.to_toml());
    }

    #[test]
    fn invalid_values_name_the_field() {
        let doc = MINIMAL.replace("max_generations = 5", "max_generations = 5\nmutation_ratio = 1.5");
        let err = RunConfig::parse(&doc).unwrap_err().to_string();
        assert!(err.contains("mutation_ratio"), "{err}");
        let doc = MINIMAL.replace("\"elitism\"", "\"generational\"").replace("[ga]", "[ga]\npop_size = 9");
        let err = RunConfig::parse(&doc).unwrap_err().to_string();
        assert!(err.contains("pop_size"), "{err}");
    }
}
