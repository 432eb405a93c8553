use std::path::Path;

use avsvm::data::DelimitedOptions;
use avsvm::{KernelSpec, Normalization, SplitPlan};
use avsvm_bench::report::{ExperimentReport, Stat};
use avsvm_bench::{
    emit_report, gaussian_menu, run_param_select, run_table1, DatasetSource, ExperimentConfig, Format, MenuEntry, AV,
};

/// Two overlapping clouds in three dimensions.
fn write_blobs(dir: &Path, n: usize) -> DatasetSource {
    let mut text = String::new();
    for i in 0..n {
        let label = if i % 2 == 0 { 1 } else { -1 };
        let center = if label == 1 { 1.0 } else { -1.0 };
        let f: Vec<String> = (0..3)
            .map(|j| format!("{}", center + 1.3 * ((i * 7 + j * 13) as f64 * 0.77).sin()))
            .collect();
        text.push_str(&format!("{},{label}\n", f.join(",")));
    }
    let path = dir.join("blobs.csv");
    std::fs::write(&path, text).unwrap();
    DatasetSource::Delimited {
        path,
        options: DelimitedOptions::default(),
    }
}

fn small_config(dataset: DatasetSource) -> ExperimentConfig {
    ExperimentConfig {
        dataset,
        plan: SplitPlan {
            master_seed: 3,
            repetitions: 4,
            train_fraction: 0.6,
        },
        c_sweep: vec![0.5, 1.0, 5.0],
        ..ExperimentConfig::table1()
    }
}

#[test]
fn report_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(write_blobs(dir.path(), 80));
    let report = run_table1(&cfg).unwrap();
    assert!(report.complete);
    report.check_aggregates().unwrap();

    // 3 kernels + AV, each at C ∈ {1, 0.5, 5}
    assert_eq!(report.runs.len(), 4 * 3);
    assert_eq!(report.runs.iter().filter(|r| r.method == AV).count(), 3);
    let json = report.to_json().unwrap();
    assert_eq!(ExperimentReport::from_json(&json).unwrap(), report);

    let csv = report.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 1 + report.runs.len() * 4);

    let md = report.to_markdown();
    let av_row = md.lines().find(|l| l.starts_with("| AV |")).unwrap();
    let cells: Vec<&str> = av_row.split('|').map(str::trim).collect();
    for cell in &cells[3..6] {
        let (m, s) = cell.split_once(" (").unwrap();
        m.parse::<f64>().unwrap();
        s.trim_end_matches(')').parse::<f64>().unwrap();
    }

    let out = dir.path().join("out");
    let written = emit_report(&report, &out, &[Format::Json, Format::Csv, Format::Markdown]).unwrap();
    assert_eq!(written.len(), 3);
    assert_eq!(std::fs::read_to_string(out.join("report.json")).unwrap(), json);
    assert_eq!(std::fs::read_to_string(out.join("report.csv")).unwrap(), csv);
}

#[test]
fn tampered_summaries_are_caught() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(write_blobs(dir.path(), 40));
    cfg.c_sweep = vec![1.0];
    let mut report = run_table1(&cfg).unwrap();
    report.runs[0].summary.test_error.mean = Some(99.0);
    assert!(report.check_aggregates().is_err());
    assert!(report.to_json().is_err());
}

#[test]
fn sample_standard_deviation() {
    let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s.mean, Some(2.5));
    assert!((s.sd.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!(s.cell(), "2.5 (1.3)");
    assert_eq!(Stat::of(&[]).cell(), "n/a");
}

#[test]
fn one_repetition_with_a_tiny_test_set() {
    let cfg = ExperimentConfig {
        plan: SplitPlan {
            master_seed: 0,
            repetitions: 1,
            train_fraction: 0.999,
        },
        c_sweep: vec![1.0],
        ..ExperimentConfig::table1()
    };
    let report = run_table1(&cfg).unwrap();
    let methods: Vec<&str> = report.runs.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["polynomial", "gaussian", "linear", AV]);
    assert!(report.runs.iter().all(|r| r.repetitions.len() == 1));
    assert_eq!(report.to_csv().unwrap().lines().count(), 1 + 4);
}

#[test]
fn single_kernel_menu_reduces_to_that_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_blobs(dir.path(), 60);
    let menus = [
        (gaussian_menu(&[2.0]), Normalization::Cosine),
        (
            vec![MenuEntry {
                name: "linear".into(),
                spec: KernelSpec::Linear,
            }],
            Normalization::None,
        ),
    ];
    for (menu, normalization) in menus {
        let cfg = ExperimentConfig {
            kernels: menu,
            normalization,
            c_sweep: vec![1.0],
            ..small_config(data.clone())
        };
        let report = run_param_select(&cfg).unwrap();
        assert_eq!(report.runs.len(), 2);
        let (single, av) = (&report.runs[0], &report.runs[1]);
        assert_eq!(av.method, AV);
        assert_eq!(single.repetitions, av.repetitions);
    }
}

#[test]
fn av_appears_once_for_any_menu() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_blobs(dir.path(), 50);
    for widths in [&[1.0][..], &[0.5, 2.0, 8.0][..]] {
        let cfg = ExperimentConfig {
            kernels: gaussian_menu(widths),
            c_sweep: vec![1.0],
            ..small_config(data.clone())
        };
        let report = run_param_select(&cfg).unwrap();
        assert_eq!(report.runs.iter().filter(|r| r.method == AV).count(), 1);
        assert_eq!(report.runs.len(), widths.len() + 1);
    }
}

#[test]
fn bad_configs_are_rejected() {
    let mut cfg = ExperimentConfig::table1();
    cfg.kernels.clear();
    assert!(run_table1(&cfg).is_err());
    let mut cfg = ExperimentConfig::table1();
    cfg.c_default = -1.0;
    assert!(run_table1(&cfg).is_err());
    let cfg = ExperimentConfig {
        dataset: DatasetSource::Sparse("/nonexistent/data.svm".into()),
        ..ExperimentConfig::table1()
    };
    assert!(run_table1(&cfg).is_err());
}
