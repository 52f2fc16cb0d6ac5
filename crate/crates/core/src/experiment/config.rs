use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    load_csv, load_idx_images, CsvSchema, Dataset, LabelEncoding, StandardizationMode, SyntheticSpec, SyntheticTask,
};
use crate::nn::ConvNetSpec;
use crate::sampling::Fallback;
use crate::similarity::MeasureKind;
use crate::{Error, Result};

/// Training arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Uniform shuffled-epoch batching.
    Standard,
    /// Every batch drawn from the similarity distribution.
    TargetedWeightedBatch,
    /// Shuffled-epoch batching over a `floor(t * n)`-row resampled dataset.
    TargetedResample { t: f64 },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Standard => f.write_str("standard"),
            Method::TargetedWeightedBatch => f.write_str("targeted-batch"),
            Method::TargetedResample { t } => write!(f, "targeted-resample:t={t}"),
        }
    }
}

impl Method {
    /// Parses `standard`, `targeted-batch` or `targeted-resample`; the last
    /// takes `t` from the argument unless written as `targeted-resample:t=<t>`.
    pub fn parse(s: &str, t: f64) -> Result<Self> {
        match s.trim() {
            "standard" => Ok(Method::Standard),
            "targeted-batch" => Ok(Method::TargetedWeightedBatch),
            "targeted-resample" => Ok(Method::TargetedResample { t }),
            other => match other.strip_prefix("targeted-resample:t=") {
                Some(v) => v
                    .parse()
                    .map(|t| Method::TargetedResample { t })
                    .map_err(|_| Error::invalid(format!("bad t in method {other:?}"))),
                None => Err(Error::invalid(format!(
                    "unknown method {other:?} (expected standard, targeted-batch or targeted-resample)"
                ))),
            },
        }
    }
}

/// Number of targets, absolute or as a fraction of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupSize {
    Count(usize),
    /// `floor(fraction * n)`.
    Fraction(f64),
}

impl GroupSize {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        let g = match *self {
            GroupSize::Count(g) => g,
            GroupSize::Fraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::invalid(format!("group fraction {f} outside (0, 1)")));
                }
                (f * n as f64).floor() as usize
            }
        };
        if g == 0 || g >= n {
            return Err(Error::invalid(format!(
                "group size {g} (from {self}) outside 1..={} for n = {n}",
                n.saturating_sub(1)
            )));
        }
        Ok(g)
    }
}

impl fmt::Display for GroupSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSize::Count(g) => write!(f, "{g}"),
            GroupSize::Fraction(x) => write!(f, "{x}n"),
        }
    }
}

impl FromStr for GroupSize {
    type Err = Error;

    /// `5`, `0.25` or `n/4`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(d) = s.strip_prefix("n/") {
            let d: f64 = d.parse().map_err(|_| Error::invalid(format!("bad group size {s:?}")))?;
            if d <= 1.0 {
                return Err(Error::invalid(format!("bad group size {s:?}")));
            }
            return Ok(GroupSize::Fraction(1.0 / d));
        }
        if let Ok(g) = s.parse::<usize>() {
            return Ok(GroupSize::Count(g));
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f < 1.0 => Ok(GroupSize::Fraction(f)),
            _ => Err(Error::invalid(format!("bad group size {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Mlp { hidden: Vec<usize> },
    ConvNet(ConvNetSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSpec {
    Csv {
        path: PathBuf,
        schema: CsvSchema,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        limit: Option<usize>,
    },
    Synthetic(SyntheticSpec),
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Csv { path, schema } => load_csv(path, schema),
            DatasetSpec::Idx { images, labels, limit } => load_idx_images(images, labels, *limit),
            DatasetSpec::Synthetic(spec) => spec.generate(),
        }
    }

    fn is_image(&self) -> bool {
        matches!(self, DatasetSpec::Idx { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub group: GroupSize,
    pub methods: Vec<Method>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub splits: usize,
    pub seed: u64,
    pub architecture: Architecture,
    pub standardization: StandardizationMode,
    pub similarity: MeasureKind,
    pub fallback: Fallback,
    /// Draw targets only from this synthetic cluster.
    pub target_cluster: Option<usize>,
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.005;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_SPLITS: usize = 20;
pub const DEFAULT_T: f64 = 10.0;
pub const DEFAULT_TABULAR_EPOCHS: usize = 200;
pub const DEFAULT_IMAGE_EPOCHS: usize = 20;
pub const DEFAULT_IMAGE_LIMIT: usize = 10_000;

fn field(field: &str, message: impl Into<String>) -> Error {
    Error::Manifest {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Defaults for a dataset: 150/50 MLP (conv net for images), lr 0.005,
    /// batch 64, 20 splits, g = 1, standard vs weighted batching.
    pub fn new(name: impl Into<String>, dataset: DatasetSpec) -> Self {
        let image = dataset.is_image();
        Self {
            name: name.into(),
            group: GroupSize::Count(1),
            methods: vec![Method::Standard, Method::TargetedWeightedBatch],
            epochs: if image {
                DEFAULT_IMAGE_EPOCHS
            } else {
                DEFAULT_TABULAR_EPOCHS
            },
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            splits: DEFAULT_SPLITS,
            seed: 0,
            architecture: if image {
                Architecture::ConvNet(ConvNetSpec::default())
            } else {
                Architecture::Mlp { hidden: vec![150, 50] }
            },
            standardization: if image {
                StandardizationMode::Overall
            } else {
                StandardizationMode::ColumnWise
            },
            similarity: MeasureKind::CosineMax,
            fallback: Fallback::Uniform,
            target_cluster: None,
            dataset,
        }
    }

    /// Field-level checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(field("splits", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(field("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(field("batchSize", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(field(
                "learningRate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if self.methods.is_empty() {
            return Err(field("methods", "at least one method is required"));
        }
        for m in &self.methods {
            if let Method::TargetedResample { t } = m {
                if !(t.is_finite() && *t > 0.0) {
                    return Err(field("t", format!("must be positive, got {t}")));
                }
            }
        }
        match self.group {
            GroupSize::Count(0) => return Err(field("g", "must be at least 1")),
            GroupSize::Fraction(f) if !(f > 0.0 && f < 1.0) => {
                return Err(field("g", format!("fraction {f} outside (0, 1)")))
            }
            _ => {}
        }
        if let Architecture::Mlp { hidden } = &self.architecture {
            if hidden.contains(&0) {
                return Err(field("architecture.hidden", "widths must be at least 1"));
            }
        }
        Ok(())
    }

    /// Sets `t` on every resampling method.
    pub fn set_t(&mut self, t: f64) {
        for m in &mut self.methods {
            if let Method::TargetedResample { t: old } = m {
                *old = t;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// TOML manifest

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct ManifestFile {
    name: Option<String>,
    seed: Option<u64>,
    splits: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    methods: Option<Vec<String>>,
    t: Option<f64>,
    g: Option<GroupValue>,
    standardization: Option<StandardizationMode>,
    similarity: Option<MeasureKind>,
    fallback: Option<Fallback>,
    target_cluster: Option<usize>,
    dataset: DatasetFile,
    architecture: Option<ArchitectureFile>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GroupValue {
    Count(i64),
    Fraction(f64),
    Expr(String),
}

#[derive(Debug, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
enum DatasetFile {
    Csv {
        path: PathBuf,
        label_column: usize,
        feature_columns: Option<Vec<usize>>,
        #[serde(default)]
        header: bool,
        #[serde(default = "default_labels")]
        labels: String,
        classes: Option<usize>,
        delimiter: Option<char>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        limit: Option<usize>,
        #[serde(default)]
        full: bool,
    },
    Synthetic {
        n_per_cluster: Option<usize>,
        p: Option<usize>,
        clusters: Option<usize>,
        classes: Option<usize>,
        separation: Option<f64>,
        noise: Option<f64>,
        label_noise: Option<f64>,
        seed: Option<u64>,
    },
}

fn default_labels() -> String {
    "real".into()
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ArchitectureFile {
    Mlp {
        hidden: Vec<usize>,
    },
    Conv {
        kernels: Option<[usize; 2]>,
        channels: Option<[usize; 2]>,
    },
}

fn resolve_path(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

impl DatasetFile {
    fn into_spec(self, base: Option<&Path>) -> Result<DatasetSpec> {
        Ok(match self {
            DatasetFile::Csv {
                path,
                label_column,
                feature_columns,
                header,
                labels,
                classes,
                delimiter,
            } => {
                let labels = match labels.as_str() {
                    "real" => LabelEncoding::Real,
                    "class-index" => LabelEncoding::ClassIndex { classes },
                    "class-remap" => LabelEncoding::ClassRemap,
                    other => {
                        return Err(field(
                            "dataset.labels",
                            format!("{other:?} is not one of real, class-index, class-remap"),
                        ))
                    }
                };
                DatasetSpec::Csv {
                    path: resolve_path(base, path),
                    schema: CsvSchema {
                        label_column,
                        feature_columns,
                        has_header: header,
                        labels,
                        delimiter: delimiter.unwrap_or(','),
                    },
                }
            }
            DatasetFile::Idx {
                images,
                labels,
                limit,
                full,
            } => DatasetSpec::Idx {
                images: resolve_path(base, images),
                labels: resolve_path(base, labels),
                limit: if full {
                    None
                } else {
                    Some(limit.unwrap_or(DEFAULT_IMAGE_LIMIT))
                },
            },
            DatasetFile::Synthetic {
                n_per_cluster,
                p,
                clusters,
                classes,
                separation,
                noise,
                label_noise,
                seed,
            } => {
                let d = SyntheticSpec::default();
                DatasetSpec::Synthetic(SyntheticSpec {
                    n_per_cluster: n_per_cluster.unwrap_or(d.n_per_cluster),
                    p: p.unwrap_or(d.p),
                    clusters: clusters.unwrap_or(d.clusters),
                    task: match classes {
                        Some(classes) => SyntheticTask::Classification { classes },
                        None => SyntheticTask::Regression,
                    },
                    separation: separation.unwrap_or(d.separation),
                    noise: noise.unwrap_or(d.noise),
                    label_noise: label_noise.unwrap_or(d.label_noise),
                    seed: seed.unwrap_or(d.seed),
                })
            }
        })
    }
}

impl ExperimentConfig {
    /// Parses a TOML manifest. Relative dataset paths resolve against
    /// `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: ManifestFile = toml::from_str(text).map_err(|e| {
            let span = e.span().map(|s| text[..s.start].lines().count().max(1));
            Error::Manifest {
                field: span.map_or_else(|| "manifest".into(), |l| format!("line {l}")),
                message: e.message().to_owned(),
            }
        })?;
        let dataset = file.dataset.into_spec(base_dir)?;
        let mut cfg = ExperimentConfig::new(file.name.clone().unwrap_or_else(|| "experiment".into()), dataset);
        if let Some(v) = file.seed {
            cfg.seed = v;
        }
        if let Some(v) = file.splits {
            cfg.splits = v;
        }
        if let Some(v) = file.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = file.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = file.learning_rate {
            cfg.learning_rate = v;
        }
        let t = file.t.unwrap_or(DEFAULT_T);
        if let Some(methods) = &file.methods {
            cfg.methods = methods
                .iter()
                .map(|m| Method::parse(m, t).map_err(|e| field("methods", e.to_string())))
                .collect::<Result<_>>()?;
        }
        if let Some(g) = file.g {
            cfg.group = match g {
                GroupValue::Count(c) if c >= 1 => GroupSize::Count(c as usize),
                GroupValue::Count(c) => return Err(field("g", format!("must be at least 1, got {c}"))),
                GroupValue::Fraction(f) => GroupSize::Fraction(f),
                GroupValue::Expr(s) => s.parse().map_err(|e: Error| field("g", e.to_string()))?,
            };
        }
        if let Some(v) = file.standardization {
            cfg.standardization = v;
        }
        if let Some(v) = file.similarity {
            cfg.similarity = v;
        }
        if let Some(v) = file.fallback {
            cfg.fallback = v;
        }
        cfg.target_cluster = file.target_cluster;
        if let Some(arch) = file.architecture {
            cfg.architecture = match arch {
                ArchitectureFile::Mlp { hidden } => Architecture::Mlp { hidden },
                ArchitectureFile::Conv { kernels, channels } => {
                    let d = ConvNetSpec::default();
                    Architecture::ConvNet(ConvNetSpec {
                        kernels: kernels.unwrap_or(d.kernels),
                        channels: channels.unwrap_or(d.channels),
                        ..d
                    })
                }
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }
}
