//! `targeted`: score, resample and train toward a set of unlabeled targets.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use targeted::data::{
    read_csv_records, write_csv_records, write_dataset_csv, CsvSchema, Dataset, LabelEncoding, StandardizationMode,
    StandardizationStats, SyntheticSpec, SyntheticTask, TargetSet,
};
use targeted::experiment::{
    prepare_split, run_experiment, run_group_study, run_t_sensitivity, train_model, write_group_study,
    write_summary_json, write_traces_csv, DatasetSpec, ExperimentConfig, GroupSize, Method, Summary, DEFAULT_T,
};
use targeted::nn::write_checkpoint;
use targeted::rng::{derive_seed, seeded, stream};
use targeted::sampling::{resample_indices, Fallback, SamplingPlan, Scheme};
use targeted::similarity::{score_dataset, SimilarityMeasure};

#[derive(Parser)]
#[command(
    name = "targeted",
    version,
    about = "Targeted mini-batch training toward unlabeled target samples"
)]
struct Cli {
    /// More diagnostics on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the similarity score and sampling probability of every row.
    Score(ScoreArgs),
    /// Write a resampled copy of a CSV dataset (floor(t*n) rows, input layout).
    Resample(ResampleArgs),
    /// Train every method on a single split and write its metric trace.
    Train(TrainArgs),
    /// Run all splits and methods; write metrics.csv and summary.json.
    Experiment(ExperimentArgs),
    /// Repeat an experiment with targeted resampling for several values of t.
    TStudy(TStudyArgs),
    /// Repeat an experiment for several target-group sizes.
    GroupStudy(GroupStudyArgs),
    /// Generate a synthetic clustered dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelsArg {
    Real,
    ClassIndex,
    ClassRemap,
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset. Manifest: [dataset] kind = "csv", path.
    #[arg(long, value_name = "CSV")]
    data: Option<PathBuf>,
    /// Zero-based label column; defaults to the last column. Manifest: labelColumn.
    #[arg(long)]
    label_column: Option<usize>,
    /// Zero-based feature columns; defaults to every other column. Manifest: featureColumns.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<usize>>,
    /// The first row is a header (applies to the targets file too). Manifest: header.
    #[arg(long)]
    header: bool,
    /// How the label column is read. Manifest: labels.
    #[arg(long, value_enum, default_value = "real")]
    labels: LabelsArg,
    /// Number of classes for class-index labels. Manifest: classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Field delimiter. Manifest: delimiter.
    #[arg(long, default_value = ",")]
    delimiter: char,
}

#[derive(Args)]
struct TargetArgs {
    /// CSV of target rows: either p feature columns or the dataset's own layout.
    #[arg(long, value_name = "CSV", conflicts_with = "target_rows")]
    targets: Option<PathBuf>,
    /// Zero-based dataset rows to use as targets.
    #[arg(long, value_delimiter = ',', value_name = "ROWS")]
    target_rows: Option<Vec<usize>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StandardizeArg {
    ColumnWise,
    Overall,
    None,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    targets: TargetArgs,
    /// Standardization fitted on the dataset and applied to both sides before scoring.
    #[arg(long, value_enum, default_value = "column-wise")]
    standardize: StandardizeArg,
    /// Output CSV (rowIndex, similarity, probability).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ResampleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    targets: TargetArgs,
    /// Standardization fitted on the dataset and applied to both sides before scoring.
    #[arg(long, value_enum, default_value = "column-wise")]
    standardize: StandardizeArg,
    /// Size multiplier. Manifest: t.
    #[arg(long, default_value_t = DEFAULT_T)]
    t: f64,
    /// Random seed. Manifest: seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment manifest; flags below override its values.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Master seed. Manifest: seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Resampling multiplier for targeted-resample. Manifest: t.
    #[arg(long, allow_negative_numbers = true)]
    t: Option<f64>,
    /// Target-group size: a count, a fraction such as 0.25, or n/4. Manifest: g.
    #[arg(long)]
    g: Option<GroupSize>,
    /// Training epochs per method and split. Manifest: epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size. Manifest: batchSize.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate. Manifest: learningRate.
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    /// Number of random splits. Manifest: splits.
    #[arg(long)]
    splits: Option<usize>,
    /// Methods to compare (repeat or comma-separate). Manifest: methods.
    #[arg(long, value_delimiter = ',', value_parser = ["standard", "targeted-batch", "targeted-resample"])]
    method: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Split index to train on.
    #[arg(long, default_value_t = 0)]
    split: usize,
    /// Output metric CSV.
    #[arg(long)]
    out: PathBuf,
    /// Directory for one checkpoint per method.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct TStudyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Values of t to compare.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    t_values: Vec<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GroupStudyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Group sizes to compare, such as 1,5,n/4,n/2.
    #[arg(long, value_delimiter = ',', default_value = "1,5,n/4,n/2")]
    groups: Vec<GroupSize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Rows per cluster. Manifest: [dataset] kind = "synthetic", nPerCluster.
    #[arg(long, default_value_t = 200)]
    n_per_cluster: usize,
    /// Feature count. Manifest: p.
    #[arg(long, default_value_t = 5)]
    p: usize,
    /// Cluster count. Manifest: clusters.
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    /// Class count; omit for a regression label. Manifest: classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Minimum distance between cluster centers. Manifest: separation.
    #[arg(long)]
    separation: Option<f64>,
    /// Std of the regression label noise. Manifest: noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Probability of a random class label. Manifest: labelNoise.
    #[arg(long)]
    label_noise: Option<f64>,
    /// Generator seed. Manifest: seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (f0..f{p-1}, label).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<targeted::Error>().map_or("cli", targeted::Error::kind);
            let record = serde_json::json!({ "error": { "kind": kind, "message": message(&e) } });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by ": ", skipping causes already quoted by their
/// parent.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Score(args) => score(args),
        Command::Resample(args) => resample(args),
        Command::Train(args) => train(args),
        Command::Experiment(args) => experiment(args),
        Command::TStudy(args) => t_study(args),
        Command::GroupStudy(args) => group_study(args),
        Command::Synth(args) => synth(args),
    }
}

impl DataArgs {
    fn schema(&self, path: &Path) -> anyhow::Result<CsvSchema> {
        let label_column = match self.label_column {
            Some(c) => c,
            None => {
                let (_, records) = read_csv_records(path, self.header, self.delimiter)?;
                let width = records.first().map_or(0, |(_, r)| r.len());
                if width < 2 {
                    bail!("{}: need at least one feature and one label column", path.display());
                }
                width - 1
            }
        };
        Ok(CsvSchema {
            label_column,
            feature_columns: self.features.clone(),
            has_header: self.header,
            labels: match self.labels {
                LabelsArg::Real => LabelEncoding::Real,
                LabelsArg::ClassIndex => LabelEncoding::ClassIndex { classes: self.classes },
                LabelsArg::ClassRemap => LabelEncoding::ClassRemap,
            },
            delimiter: self.delimiter,
        })
    }

    fn spec(&self) -> anyhow::Result<Option<DatasetSpec>> {
        match &self.data {
            Some(path) => Ok(Some(DatasetSpec::Csv {
                path: path.clone(),
                schema: self.schema(path)?,
            })),
            None => Ok(None),
        }
    }

    fn required(&self) -> anyhow::Result<(&Path, CsvSchema)> {
        let path = self.data.as_deref().context("--data is required")?;
        Ok((path, self.schema(path)?))
    }
}

fn load_targets(args: &TargetArgs, data: &Dataset, schema: &CsvSchema) -> anyhow::Result<TargetSet> {
    if let Some(rows) = &args.target_rows {
        if let Some(&bad) = rows.iter().find(|&&r| r >= data.n()) {
            bail!("target row {bad} out of range for {} rows", data.n());
        }
        let picked: Vec<&[f64]> = rows.iter().map(|&r| data.row(r)).collect();
        return Ok(TargetSet::from_rows(&picked)?);
    }
    let path = args.targets.as_deref().context("give --targets or --target-rows")?;
    let (_, records) = read_csv_records(path, schema.has_header, schema.delimiter)?;
    let mut rows = Vec::with_capacity(records.len());
    for (line, record) in records {
        let cells: Vec<&str> = if record.len() == data.p() {
            record.iter().map(String::as_str).collect()
        } else {
            let columns: Vec<usize> = match &schema.feature_columns {
                Some(c) => c.clone(),
                None => (0..record.len()).filter(|&c| c != schema.label_column).collect(),
            };
            if columns.len() != data.p() || columns.iter().any(|&c| c >= record.len()) {
                bail!(
                    "{}:{line}: expected {} feature values or the dataset layout, got {} fields",
                    path.display(),
                    data.p(),
                    record.len()
                );
            }
            columns.iter().map(|&c| record[c].as_str()).collect()
        };
        let row = cells
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .with_context(|| format!("{}:{line}: non-numeric target value", path.display()))?;
        rows.push(row);
    }
    Ok(TargetSet::from_rows(&rows)?)
}

fn standardized(data: &Dataset, targets: TargetSet, mode: StandardizeArg) -> anyhow::Result<(Dataset, TargetSet)> {
    let mode = match mode {
        StandardizeArg::None => return Ok((data.clone(), targets)),
        StandardizeArg::ColumnWise => StandardizationMode::ColumnWise,
        StandardizeArg::Overall => StandardizationMode::Overall,
    };
    let stats = StandardizationStats::fit(data, mode)?;
    Ok((stats.apply(data)?, stats.apply_targets(&targets)?))
}

fn plan_for(
    data: &DataArgs,
    targets: &TargetArgs,
    mode: StandardizeArg,
    scheme: Scheme,
) -> anyhow::Result<(Dataset, CsvSchema, Vec<f64>, SamplingPlan)> {
    let (path, schema) = data.required()?;
    let dataset = targeted::data::load_csv(path, &schema)?;
    let targets = load_targets(targets, &dataset, &schema)?;
    let (scaled, targets) = standardized(&dataset, targets, mode)?;
    let scores = score_dataset(&scaled, &targets, &SimilarityMeasure::cosine_max())?;
    let plan = SamplingPlan::build(&scores, scheme, Fallback::Uniform)?;
    Ok((dataset, schema, scores.scores().to_vec(), plan))
}

fn score(args: ScoreArgs) -> anyhow::Result<()> {
    let (_, _, scores, plan) = plan_for(&args.data, &args.targets, args.standardize, Scheme::WeightedBatch)?;
    targeted::io::write_atomic(&args.out, |w| {
        writeln!(w, "rowIndex,similarity,probability")?;
        for (i, (s, q)) in scores.iter().zip(plan.probabilities()).enumerate() {
            writeln!(w, "{i},{s:?},{q:?}")?;
        }
        Ok(())
    })?;
    log::info!("wrote {} scores to {}", scores.len(), args.out.display());
    Ok(())
}

fn resample(args: ResampleArgs) -> anyhow::Result<()> {
    let scheme = Scheme::ResampleDataset { t: args.t };
    let (_, schema, _, plan) = plan_for(&args.data, &args.targets, args.standardize, scheme)?;
    let path = args.data.data.as_deref().expect("checked by plan_for");
    let (header, records) = read_csv_records(path, schema.has_header, schema.delimiter)?;
    let records: Vec<Vec<String>> = records.into_iter().map(|(_, r)| r).collect();
    let mut rng = seeded(derive_seed(args.seed, stream::RESAMPLE));
    let rows = resample_indices(&plan, args.t, &mut rng)?;
    write_csv_records(&args.out, header.as_deref(), &records, &rows, schema.delimiter)?;
    log::info!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn build_config(run: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match (&run.manifest, run.data.spec()?) {
        (Some(path), None) => ExperimentConfig::from_manifest(path)?,
        (Some(path), Some(spec)) => {
            let mut cfg = ExperimentConfig::from_manifest(path)?;
            cfg.dataset = spec;
            cfg
        }
        (None, Some(spec)) => {
            let name = run
                .data
                .data
                .as_deref()
                .and_then(Path::file_stem)
                .map_or("experiment".into(), |s| s.to_string_lossy().into_owned());
            ExperimentConfig::new(name, spec)
        }
        (None, None) => bail!("give --manifest or --data"),
    };
    if let Some(v) = run.seed {
        cfg.seed = v;
    }
    if let Some(v) = run.g {
        cfg.group = v;
    }
    if let Some(v) = run.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = run.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = run.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = run.splits {
        cfg.splits = v;
    }
    let t = run.t.unwrap_or_else(|| {
        cfg.methods
            .iter()
            .find_map(|m| match m {
                Method::TargetedResample { t } => Some(*t),
                _ => None,
            })
            .unwrap_or(DEFAULT_T)
    });
    if !run.method.is_empty() {
        cfg.methods = run
            .method
            .iter()
            .map(|m| Method::parse(m, t))
            .collect::<targeted::Result<_>>()?;
    }
    cfg.set_t(t);
    cfg.validate()?;
    Ok(cfg)
}

fn load(cfg: &ExperimentConfig) -> anyhow::Result<Dataset> {
    let data = cfg.dataset.load()?;
    log::info!("{}: {} rows, {} features", data.name(), data.n(), data.p());
    Ok(data)
}

fn file_safe(method: Method) -> String {
    method.to_string().replace(":t=", "-t").replace([':', '='], "-")
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = build_config(&args.run)?;
    let data = load(&cfg)?;
    let prepared = prepare_split(&cfg, &data, args.split)?;
    let mut traces = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let (trace, net) = train_model(&cfg, method, &prepared)?;
        log::info!("{method}: final target metric {}", trace.final_target_metric());
        if let Some(dir) = &args.checkpoint_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("{}.tdln", file_safe(method)));
            targeted::io::write_atomic(&path, |w| write_checkpoint(&net, w))?;
        }
        traces.push(trace);
    }
    write_traces_csv(&args.out, &traces)?;
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    let cfg = build_config(&args.run)?;
    let data = load(&cfg)?;
    let result = run_experiment(&cfg, &data)?;
    create_dir(&args.out)?;
    write_traces_csv(&args.out.join("metrics.csv"), &result.traces)?;
    write_summary_json(&args.out.join("summary.json"), &[Summary::from_result(&result)])?;
    for s in &Summary::from_result(&result).methods {
        log::info!("{}: final mean target metric {}", s.method, s.final_target_metric_mean);
    }
    Ok(())
}

fn t_study(args: TStudyArgs) -> anyhow::Result<()> {
    let mut cfg = build_config(&args.run)?;
    if !cfg.methods.iter().any(|m| matches!(m, Method::TargetedResample { .. })) {
        cfg.methods.push(Method::TargetedResample { t: DEFAULT_T });
    }
    let data = load(&cfg)?;
    let results = run_t_sensitivity(&cfg, &data, &args.t_values)?;
    create_dir(&args.out)?;
    write_traces_csv(
        &args.out.join("metrics.csv"),
        results.iter().flat_map(|(_, r)| &r.traces),
    )?;
    let summaries: Vec<Summary> = results.iter().map(|(_, r)| Summary::from_result(r)).collect();
    write_summary_json(&args.out.join("summary.json"), &summaries)?;
    Ok(())
}

fn group_study(args: GroupStudyArgs) -> anyhow::Result<()> {
    let cfg = build_config(&args.run)?;
    let data = load(&cfg)?;
    let entries = run_group_study(&cfg, &data, &args.groups)?;
    create_dir(&args.out)?;
    write_group_study(&args.out, &entries)?;
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        n_per_cluster: args.n_per_cluster,
        p: args.p,
        clusters: args.clusters,
        task: match args.classes {
            Some(classes) => SyntheticTask::Classification { classes },
            None => SyntheticTask::Regression,
        },
        separation: args.separation.unwrap_or(d.separation),
        noise: args.noise.unwrap_or(d.noise),
        label_noise: args.label_noise.unwrap_or(d.label_noise),
        seed: args.seed,
    };
    write_dataset_csv(&args.out, &spec.generate()?)?;
    Ok(())
}
