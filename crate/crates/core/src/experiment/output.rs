//! Plot-ready artifacts: a long-format metric CSV and a JSON summary with
//! aggregate curves.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AggregateCurve, ExperimentConfig, ExperimentResult, GroupStudyEntry, MetricTrace, TargetMetric};
use crate::io::write_atomic;
use crate::Result;

pub const TRACE_CSV_HEADER: &str = "method,split,epoch,trainingLoss,targetMetric,wallClockSeconds";

/// One row per (method, split, epoch).
pub fn write_traces_csv<'a, I>(path: &Path, traces: I) -> Result<()>
where
    I: IntoIterator<Item = &'a MetricTrace>,
{
    let traces: Vec<&MetricTrace> = traces.into_iter().collect();
    write_atomic(path, |w| {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for t in &traces {
            for e in &t.epochs {
                writeln!(
                    w,
                    "{},{},{},{:?},{:?},{:?}",
                    t.method, t.split, e.epoch, e.training_loss, e.target_metric, e.wall_clock_seconds
                )?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MethodSummary {
    pub method: String,
    pub final_target_metric_mean: f64,
    pub final_training_loss_mean: f64,
    pub training_loss: AggregateCurve,
    pub target_metric: AggregateCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub name: String,
    pub target_metric: TargetMetric,
    pub g: usize,
    pub training_size: usize,
    pub splits: usize,
    pub epochs: usize,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodSummary>,
}

impl Summary {
    pub fn from_result(result: &ExperimentResult) -> Self {
        let methods = result
            .curves
            .iter()
            .map(|c| MethodSummary {
                method: c.method.to_string(),
                final_target_metric_mean: c.target_metric.last().map_or(f64::NAN, |p| p.mean),
                final_training_loss_mean: c.training_loss.last().map_or(f64::NAN, |p| p.mean),
                training_loss: c.training_loss.clone(),
                target_metric: c.target_metric.clone(),
            })
            .collect();
        Self {
            name: result.config.name.clone(),
            target_metric: result.metric,
            g: result.g,
            training_size: result.training_size,
            splits: result.config.splits,
            epochs: result.config.epochs,
            config: result.config.clone(),
            methods,
        }
    }
}

pub fn write_summary_json(path: &Path, summaries: &[Summary]) -> Result<()> {
    let value = if summaries.len() == 1 {
        serde_json::to_value(&summaries[0])
    } else {
        serde_json::to_value(summaries)
    }
    .expect("summary is plain data");
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

/// `metrics-g<g>.csv` and `summary-g<g>.json` per group size under `dir`.
pub fn write_group_study(dir: &Path, entries: &[GroupStudyEntry]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    for e in entries {
        write_traces_csv(&dir.join(format!("metrics-g{}.csv", e.g)), &e.result.traces)?;
        write_summary_json(
            &dir.join(format!("summary-g{}.json", e.g)),
            &[Summary::from_result(&e.result)],
        )?;
    }
    Ok(())
}
