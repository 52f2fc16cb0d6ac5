use std::fs;

use targeted::data::{
    load_csv, split_for_targeting, write_dataset_csv, CsvSchema, Dataset, StandardizationMode, StandardizationStats,
    SyntheticSpec, Task,
};
use targeted::experiment::{
    run_experiment, write_summary_json, write_traces_csv, DatasetSpec, ExperimentConfig, GroupSize, Method, Summary,
    TRACE_CSV_HEADER,
};
use targeted::rng::seeded;

fn synthetic(n_per_cluster: usize) -> (SyntheticSpec, Dataset) {
    let spec = SyntheticSpec {
        n_per_cluster,
        p: 4,
        clusters: 2,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let data = spec.generate().unwrap();
    (spec, data)
}

#[test]
fn csv_round_trip_split_and_unstandardize() {
    let dir = tempfile::tempdir().unwrap();
    let (_, data) = synthetic(30);
    let path = dir.path().join("d.csv");
    write_dataset_csv(&path, &data).unwrap();
    let back = load_csv(&path, &CsvSchema::regression(4).with_header(true)).unwrap();
    assert_eq!(back.features(), data.features());
    assert_eq!(back.labels(), data.labels());

    let (train, targets) = split_for_targeting(&back, 6, &mut seeded(1)).unwrap();
    assert_eq!((train.n(), targets.g()), (54, 6));
    let stats = StandardizationStats::fit(&train, StandardizationMode::ColumnWise).unwrap();
    let scaled = stats.apply(&train).unwrap();
    for (i, row) in scaled.rows().enumerate() {
        for (a, b) in stats.unstandardize_row(row).iter().zip(train.row(i)) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((stats.unstandardize_label(scaled.label(i)) - train.label(i)).abs() < 1e-9);
    }
}

#[test]
fn half_of_a_large_table_as_targets() {
    let data = Dataset::new(
        "wide",
        Task::Regression,
        1,
        (0..2126).map(f64::from).collect(),
        vec![0.0; 2126],
    )
    .unwrap();
    let g = GroupSize::Fraction(0.5).resolve(data.n()).unwrap();
    let (train, targets) = split_for_targeting(&data, g, &mut seeded(3)).unwrap();
    assert_eq!((train.n(), targets.g()), (1063, 1063));
}

#[test]
fn experiment_artifacts_have_one_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, data) = synthetic(20);
    let mut config = ExperimentConfig::new("pipeline", DatasetSpec::Synthetic(spec));
    config.splits = 3;
    config.epochs = 4;
    config.batch_size = 8;
    config.methods = vec![
        Method::Standard,
        Method::TargetedWeightedBatch,
        Method::TargetedResample { t: 10.0 },
    ];
    let result = run_experiment(&config, &data).unwrap();

    let csv = dir.path().join("metrics.csv");
    write_traces_csv(&csv, &result.traces).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
    assert_eq!(lines.count(), 3 * 3 * 4);

    let json = dir.path().join("summary.json");
    write_summary_json(&json, &[Summary::from_result(&result)]).unwrap();
    let summary: Summary = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary.methods.len(), 3);
    assert_eq!(summary.methods[0].target_metric.points.len(), 4);
    assert_eq!(summary.config, config);
}
