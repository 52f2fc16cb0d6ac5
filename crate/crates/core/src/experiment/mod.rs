//! Paired standard-vs-targeted comparisons.
//!
//! Split `s` of an experiment derives one seed from the master seed. That seed
//! fixes the train/target partition, the network initialization and the
//! batch stream, so every method trained on split `s` sees the same data and
//! starts from the same parameters.
//!
//! One epoch is `ceil(n / b)` SGD steps for every method, where `n` is the
//! training-set size, so curves are comparable in update counts.

mod aggregate;
mod config;
mod output;

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{interquartile_range, mean_sd_se, quantile_sorted, AggregateCurve, CurvePoint};
pub use config::{
    Architecture, DatasetSpec, ExperimentConfig, GroupSize, Method, DEFAULT_BATCH_SIZE, DEFAULT_IMAGE_EPOCHS,
    DEFAULT_IMAGE_LIMIT, DEFAULT_LEARNING_RATE, DEFAULT_SPLITS, DEFAULT_T, DEFAULT_TABULAR_EPOCHS,
};
pub use output::{write_group_study, write_summary_json, write_traces_csv, Summary, TRACE_CSV_HEADER};

use crate::data::{split_indices, split_indices_within, Dataset, StandardizationStats, TargetSet, Task};
use crate::nn::{build_conv_net, build_mlp, Head, LossFunction, Network};
use crate::rng::{derive_seed, seeded, stream, Rng};
use crate::sampling::{resample_dataset, AliasTable, Batch, SamplingPlan, Scheme};
use crate::similarity::{score_dataset, SimilarityMeasure};
use crate::{Error, Result};

/// What the target metric column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMetric {
    /// Mean squared error on the standardized label scale.
    SquaredError,
    /// Fraction of targets classified correctly.
    Accuracy,
}

impl TargetMetric {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => TargetMetric::SquaredError,
            Task::Classification(_) => TargetMetric::Accuracy,
        }
    }

    pub fn higher_is_better(&self) -> bool {
        matches!(self, TargetMetric::Accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch.
    pub training_loss: f64,
    pub target_metric: f64,
    /// Seconds since training of this arm started.
    pub wall_clock_seconds: f64,
}

/// Per-epoch metrics of one method on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub method: Method,
    pub split: usize,
    pub g: usize,
    pub training_size: usize,
    /// The similarity scores had zero mass and sampling fell back to uniform.
    pub fell_back: bool,
    pub epochs: Vec<EpochRecord>,
}

impl MetricTrace {
    pub fn final_target_metric(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.target_metric)
    }

    pub fn final_training_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.training_loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurves {
    pub method: Method,
    pub training_loss: AggregateCurve,
    pub target_metric: AggregateCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub metric: TargetMetric,
    pub g: usize,
    pub training_size: usize,
    /// Split-major, methods in config order within a split.
    pub traces: Vec<MetricTrace>,
    pub curves: Vec<MethodCurves>,
}

impl ExperimentResult {
    pub fn traces_for(&self, method: Method) -> impl Iterator<Item = &MetricTrace> + '_ {
        self.traces.iter().filter(move |t| t.method == method)
    }

    /// Final-epoch target metric of each split, in split order.
    pub fn final_target_metrics(&self, method: Method) -> Vec<f64> {
        self.traces_for(method).map(MetricTrace::final_target_metric).collect()
    }

    pub fn curves_for(&self, method: Method) -> Option<&MethodCurves> {
        self.curves.iter().find(|c| c.method == method)
    }
}

/// Seed of split `split` under the master seed.
pub fn split_seed(master: u64, split: usize) -> u64 {
    derive_seed(master, split as u64)
}

/// Standardized training rows and targets for one split.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub split: usize,
    pub seed: u64,
    pub train: Dataset,
    pub targets: TargetSet,
}

/// Partitions `data` for split `split` and standardizes both sides with
/// statistics fitted on the training rows.
pub fn prepare_split(config: &ExperimentConfig, data: &Dataset, split: usize) -> Result<PreparedSplit> {
    let seed = split_seed(config.seed, split);
    let g = config.group.resolve(data.n())?;
    let mut rng = seeded(derive_seed(seed, stream::PARTITION));
    let (train_rows, target_rows) = match config.target_cluster {
        None => split_indices(data.n(), g, &mut rng)?,
        Some(c) => {
            let clusters = data
                .clusters()
                .ok_or_else(|| Error::invalid("target_cluster needs a dataset with cluster metadata"))?;
            let candidates: Vec<usize> = (0..data.n()).filter(|&i| clusters[i] == c).collect();
            split_indices_within(data.n(), &candidates, g, &mut rng)?
        }
    };
    let train_raw = data.select(&train_rows);
    let held = data.select(&target_rows);
    let targets_raw = TargetSet::new(data.p(), held.features().to_vec(), Some(held.labels().to_vec()))?;
    let (train, targets) = if train_raw.n() >= 2 {
        let stats = StandardizationStats::fit(&train_raw, config.standardization)?;
        (stats.apply(&train_raw)?, stats.apply_targets(&targets_raw)?)
    } else {
        log::warn!("split {split}: single training row, standardization skipped");
        (train_raw, targets_raw)
    };
    Ok(PreparedSplit {
        split,
        seed,
        train,
        targets,
    })
}

/// Fresh network for `data`, initialized from `rng`.
pub fn build_network(architecture: &Architecture, data: &Dataset, rng: &mut Rng) -> Result<Network> {
    let head = match data.task() {
        Task::Regression => Head::SquaredError,
        Task::Classification(k) => Head::SoftmaxCrossEntropy(k),
    };
    match architecture {
        Architecture::Mlp { hidden } => build_mlp(data.p(), hidden, head, rng),
        Architecture::ConvNet(spec) => {
            let shape = data
                .image_shape()
                .ok_or_else(|| Error::invalid("convolutional architecture needs image data"))?;
            build_conv_net(shape, spec, head, rng)
        }
    }
}

/// Shuffled passes over `0..len`, reshuffled whenever a pass is exhausted.
struct ShuffledStream {
    order: Vec<usize>,
    cursor: usize,
}

impl ShuffledStream {
    fn new(len: usize) -> Self {
        Self {
            order: (0..len).collect(),
            cursor: len,
        }
    }

    fn next_batch(&mut self, b: usize, rng: &mut Rng) -> Vec<usize> {
        if self.cursor == self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let end = (self.cursor + b).min(self.order.len());
        let out = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }
}

enum BatchSource {
    Shuffled { data: Dataset, stream: ShuffledStream },
    Weighted { table: AliasTable },
}

fn evaluate_targets(net: &Network, targets: &TargetSet, metric: TargetMetric) -> Result<f64> {
    let labels = targets
        .held_out_labels()
        .ok_or_else(|| Error::invalid("targets carry no held-out labels to evaluate against"))?;
    match metric {
        TargetMetric::SquaredError => net.evaluate(targets.values(), labels, LossFunction::SquaredError),
        TargetMetric::Accuracy => net.accuracy(targets.values(), labels),
    }
}

/// Trains one method on a prepared split and records per-epoch metrics.
/// Held-out target labels are read only when evaluating.
pub fn train_on_split(config: &ExperimentConfig, method: Method, prepared: &PreparedSplit) -> Result<MetricTrace> {
    train_model(config, method, prepared).map(|(trace, _)| trace)
}

/// Like [`train_on_split`], also returning the trained network.
pub fn train_model(
    config: &ExperimentConfig,
    method: Method,
    prepared: &PreparedSplit,
) -> Result<(MetricTrace, Network)> {
    config.validate()?;
    let PreparedSplit {
        split,
        seed,
        train,
        targets,
    } = prepared;
    let n = train.n();
    let mut net = build_network(
        &config.architecture,
        train,
        &mut seeded(derive_seed(*seed, stream::INIT)),
    )?;
    let mut batch_rng = seeded(derive_seed(*seed, stream::BATCHES));
    let measure = SimilarityMeasure {
        kind: config.similarity,
        ..SimilarityMeasure::default()
    };

    let mut fell_back = false;
    let mut source = match method {
        Method::Standard => BatchSource::Shuffled {
            data: train.clone(),
            stream: ShuffledStream::new(n),
        },
        Method::TargetedWeightedBatch | Method::TargetedResample { .. } => {
            let scheme = match method {
                Method::TargetedResample { t } => Scheme::ResampleDataset { t },
                _ => Scheme::WeightedBatch,
            };
            let scores = score_dataset(train, targets, &measure)?;
            let plan = SamplingPlan::build(&scores, scheme, config.fallback)?;
            fell_back = plan.fell_back();
            match scheme {
                Scheme::WeightedBatch => BatchSource::Weighted {
                    table: AliasTable::new(&plan),
                },
                Scheme::ResampleDataset { t } => {
                    let mut rng = seeded(derive_seed(*seed, stream::RESAMPLE));
                    let data = resample_dataset(&plan, train, t, &mut rng)?;
                    let len = data.n();
                    BatchSource::Shuffled {
                        data,
                        stream: ShuffledStream::new(len),
                    }
                }
            }
        }
    };

    let metric = TargetMetric::for_task(train.task());
    let b = config.batch_size;
    let steps = n.div_ceil(b);
    let started = Instant::now();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for _ in 0..steps {
            let batch = match &mut source {
                BatchSource::Shuffled { data, stream } => Batch::gather(data, stream.next_batch(b, &mut batch_rng)),
                BatchSource::Weighted { table } => Batch::gather(train, table.sample_many(b, &mut batch_rng)),
            };
            let (loss, grad) = net.loss_and_gradient(&batch.inputs, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    split: *split,
                    method: method.to_string(),
                    epoch,
                });
            }
            net.sgd_step(&grad, config.learning_rate)?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let target_metric = evaluate_targets(&net, targets, metric)?;
        if !target_metric.is_finite() {
            return Err(Error::NonFiniteLoss {
                split: *split,
                method: method.to_string(),
                epoch,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            training_loss: loss_sum / seen as f64,
            target_metric,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        });
    }
    let trace = MetricTrace {
        method,
        split: *split,
        g: targets.g(),
        training_size: n,
        fell_back,
        epochs,
    };
    Ok((trace, net))
}

/// One split of one method, from raw data.
pub fn run_split(config: &ExperimentConfig, data: &Dataset, method: Method, split: usize) -> Result<MetricTrace> {
    let prepared = prepare_split(config, data, split)?;
    train_on_split(config, method, &prepared)
}

/// Runs every split (in parallel) and every method, then aggregates per
/// method. Output order does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentResult> {
    config.validate()?;
    let g = config.group.resolve(data.n())?;
    let per_split: Vec<Vec<MetricTrace>> = (0..config.splits)
        .into_par_iter()
        .map(|split| {
            let prepared = prepare_split(config, data, split)?;
            config
                .methods
                .iter()
                .map(|&m| train_on_split(config, m, &prepared))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let traces: Vec<MetricTrace> = per_split.into_iter().flatten().collect();

    let curves = config
        .methods
        .iter()
        .map(|&method| {
            let mine: Vec<&MetricTrace> = traces.iter().filter(|t| t.method == method).collect();
            let series = |f: fn(&EpochRecord) -> f64| -> Vec<Vec<f64>> {
                mine.iter().map(|t| t.epochs.iter().map(f).collect()).collect()
            };
            Ok(MethodCurves {
                method,
                training_loss: AggregateCurve::from_series(&series(|e| e.training_loss))?,
                target_metric: AggregateCurve::from_series(&series(|e| e.target_metric))?,
            })
        })
        .collect::<Result<_>>()?;

    Ok(ExperimentResult {
        config: config.clone(),
        metric: TargetMetric::for_task(data.task()),
        g,
        training_size: data.n() - g,
        traces,
        curves,
    })
}

/// One experiment per `t`, each with the single method
/// `TargetedResample { t }`. Split seeds are shared, so results are paired.
pub fn run_t_sensitivity(
    base: &ExperimentConfig,
    data: &Dataset,
    t_values: &[f64],
) -> Result<Vec<(f64, ExperimentResult)>> {
    if !base
        .methods
        .iter()
        .any(|m| matches!(m, Method::TargetedResample { .. }))
    {
        return Err(Error::invalid(
            "t-sensitivity needs a targeted-resample base configuration",
        ));
    }
    if t_values.is_empty() {
        return Err(Error::invalid("no t values given"));
    }
    t_values
        .iter()
        .map(|&t| {
            let mut cfg = base.clone();
            cfg.methods = vec![Method::TargetedResample { t }];
            Ok((t, run_experiment(&cfg, data)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStudyEntry {
    pub group: GroupSize,
    pub g: usize,
    /// `n - g`.
    pub training_size: usize,
    pub result: ExperimentResult,
}

/// One experiment per group size.
pub fn run_group_study(base: &ExperimentConfig, data: &Dataset, groups: &[GroupSize]) -> Result<Vec<GroupStudyEntry>> {
    if groups.is_empty() {
        return Err(Error::invalid("no group sizes given"));
    }
    let resolved: Vec<usize> = groups.iter().map(|g| g.resolve(data.n())).collect::<Result<_>>()?;
    groups
        .iter()
        .zip(resolved)
        .map(|(&group, g)| {
            let mut cfg = base.clone();
            cfg.group = group;
            Ok(GroupStudyEntry {
                group,
                g,
                training_size: data.n() - g,
                result: run_experiment(&cfg, data)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SyntheticSpec, SyntheticTask};

    fn small_config(methods: Vec<Method>) -> (ExperimentConfig, Dataset) {
        let spec = SyntheticSpec {
            n_per_cluster: 30,
            p: 3,
            ..SyntheticSpec::default()
        };
        let data = spec.generate().unwrap();
        let mut cfg = ExperimentConfig::new("t", DatasetSpec::Synthetic(spec));
        cfg.methods = methods;
        cfg.architecture = Architecture::Mlp { hidden: vec![8] };
        cfg.epochs = 3;
        cfg.batch_size = 8;
        cfg.splits = 3;
        (cfg, data)
    }

    #[test]
    fn single_epoch_trace() {
        let (mut cfg, data) = small_config(vec![Method::Standard]);
        cfg.epochs = 1;
        let t = run_split(&cfg, &data, Method::Standard, 0).unwrap();
        assert_eq!(t.epochs.len(), 1);
        assert_eq!(t.training_size, 59);
        cfg.epochs = 0;
        assert!(run_split(&cfg, &data, Method::Standard, 0).is_err());
    }

    #[test]
    fn trace_lengths_and_curves() {
        let all = vec![
            Method::Standard,
            Method::TargetedWeightedBatch,
            Method::TargetedResample { t: 2.0 },
        ];
        let (cfg, data) = small_config(all.clone());
        let r = run_experiment(&cfg, &data).unwrap();
        assert_eq!(r.traces.len(), 3 * 3);
        for m in all {
            assert_eq!(r.traces_for(m).count(), 3);
            assert_eq!(r.curves_for(m).unwrap().target_metric.len(), 3);
        }
        assert!(r
            .traces
            .iter()
            .flat_map(|t| &t.epochs)
            .all(|e| e.training_loss.is_finite() && e.target_metric.is_finite()));
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (cfg, data) = small_config(vec![Method::Standard, Method::TargetedWeightedBatch]);
        let strip = |r: &ExperimentResult| -> Vec<(u64, u64)> {
            r.traces
                .iter()
                .flat_map(|t| {
                    t.epochs
                        .iter()
                        .map(|e| (e.training_loss.to_bits(), e.target_metric.to_bits()))
                })
                .collect()
        };
        let a = run_experiment(&cfg, &data).unwrap();
        let b = run_experiment(&cfg, &data).unwrap();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn splits_are_paired_across_methods() {
        let (cfg, data) = small_config(vec![]);
        let a = prepare_split(&cfg, &data, 2).unwrap();
        let mut other = cfg.clone();
        other.methods = vec![Method::TargetedResample { t: 3.0 }];
        let b = prepare_split(&other, &data, 2).unwrap();
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.train, b.train);
        let c = prepare_split(&cfg, &data, 3).unwrap();
        assert_ne!(a.targets, c.targets);
    }

    #[test]
    fn held_out_labels_do_not_affect_training() {
        let (cfg, data) = small_config(vec![Method::Standard]);
        let mut cfg = cfg;
        cfg.group = GroupSize::Count(5);
        let prepared = prepare_split(&cfg, &data, 0).unwrap();
        let labels = prepared.targets.held_out_labels().unwrap().to_vec();
        let mut permuted = labels.clone();
        permuted.rotate_left(2);
        let mut swapped = prepared.clone();
        swapped.targets =
            TargetSet::new(prepared.targets.p(), prepared.targets.values().to_vec(), Some(permuted)).unwrap();
        for m in [
            Method::Standard,
            Method::TargetedWeightedBatch,
            Method::TargetedResample { t: 4.0 },
        ] {
            let a = train_on_split(&cfg, m, &prepared).unwrap();
            let b = train_on_split(&cfg, m, &swapped).unwrap();
            let losses = |t: &MetricTrace| t.epochs.iter().map(|e| e.training_loss.to_bits()).collect::<Vec<_>>();
            assert_eq!(losses(&a), losses(&b), "{m}");
        }
    }

    #[test]
    fn targets_from_one_cluster() {
        let (mut cfg, data) = small_config(vec![]);
        cfg.group = GroupSize::Count(10);
        cfg.target_cluster = Some(1);
        let seed = split_seed(cfg.seed, 0);
        let mut rng = seeded(derive_seed(seed, stream::PARTITION));
        let candidates: Vec<usize> = (0..data.n()).filter(|&i| data.clusters().unwrap()[i] == 1).collect();
        let (_, rows) = split_indices_within(data.n(), &candidates, 10, &mut rng).unwrap();
        let prepared = prepare_split(&cfg, &data, 0).unwrap();
        assert_eq!(prepared.targets.g(), 10);
        assert!(rows.iter().all(|&r| data.clusters().unwrap()[r] == 1));
    }

    #[test]
    fn group_study_boundaries() {
        let (mut cfg, data) = small_config(vec![Method::Standard, Method::TargetedWeightedBatch]);
        cfg.splits = 1;
        cfg.epochs = 1;
        let entries = run_group_study(&cfg, &data, &[GroupSize::Count(59)]).unwrap();
        assert_eq!(entries[0].training_size, 1);
        assert!(run_group_study(&cfg, &data, &[GroupSize::Count(60)]).is_err());
        let entries = run_group_study(&cfg, &data, &[GroupSize::Fraction(0.5), GroupSize::Fraction(0.25)]).unwrap();
        assert_eq!(entries.iter().map(|e| e.g).collect::<Vec<_>>(), vec![30, 15]);
    }

    #[test]
    fn t_study_requires_resample_base() {
        let (cfg, data) = small_config(vec![Method::Standard]);
        assert!(run_t_sensitivity(&cfg, &data, &[5.0]).is_err());
        let (mut cfg, data) = small_config(vec![Method::TargetedResample { t: 10.0 }]);
        cfg.splits = 2;
        cfg.epochs = 1;
        let r = run_t_sensitivity(&cfg, &data, &[0.5, 5.0]).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].1.traces[0].method, Method::TargetedResample { t: 0.5 });
    }

    #[test]
    fn classification_reports_accuracy() {
        let spec = SyntheticSpec {
            n_per_cluster: 20,
            p: 3,
            task: SyntheticTask::Classification { classes: 3 },
            ..SyntheticSpec::default()
        };
        let data = spec.generate().unwrap();
        let mut cfg = ExperimentConfig::new("c", DatasetSpec::Synthetic(spec));
        cfg.architecture = Architecture::Mlp { hidden: vec![6] };
        cfg.epochs = 2;
        cfg.splits = 2;
        cfg.group = GroupSize::Count(4);
        let r = run_experiment(&cfg, &data).unwrap();
        assert_eq!(r.metric, TargetMetric::Accuracy);
        for t in &r.traces {
            for e in &t.epochs {
                assert!((0.0..=1.0).contains(&e.target_metric));
                assert_eq!((e.target_metric * 4.0).fract(), 0.0);
            }
        }
    }

    #[test]
    fn shuffled_stream_covers_each_pass() {
        let mut rng = seeded(1);
        let mut s = ShuffledStream::new(10);
        let mut seen: Vec<usize> = (0..3).flat_map(|_| s.next_batch(4, &mut rng)).collect();
        assert_eq!(seen.len(), 10);
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
