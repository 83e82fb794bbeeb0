use std::fs;

use seqmed_core::datagen::{batch_file_name, write_batch_csv};
use seqmed_core::{Batch, FeatureMatrix};
use seqmed_harness::experiment::{accuracy, build_kernel, fit_fresh, read_summary_csv, trial_stream};
use seqmed_harness::{render_svg, run_experiment, Baseline, ExperimentConfig, ModelKind, Scenario, SummaryRow};

fn small(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        trials: 2,
        time_points: 3,
        n_min: 20,
        n_max: 30,
        test_size: 100,
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn row_count_and_first_step_equality() {
    let dir = tempfile::tempdir().unwrap();
    let table = run_experiment(&small(dir.path())).unwrap();
    assert_eq!(table.rows.len(), 18);
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 19);
    assert!(text.starts_with("trial,t,model,accuracy,n_support,degenerate\n"));
    for trial in 0..2 {
        let at = |m: &str| {
            table
                .rows
                .iter()
                .find(|r| r.trial == trial && r.t == 1 && r.model == m)
                .unwrap()
                .accuracy
        };
        assert_eq!(at("seqmed"), at("full-retrain"));
    }
    assert!(table.rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    let summary = read_summary_csv(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 9);
    assert!(summary.iter().all(|s| s.trials == 2));
    assert!(dir.path().join("timing.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = small(a.path());
    cfg.scenario = Scenario::Sphere;
    cfg.model = ModelKind::SeqlapmedApprox;
    cfg.kernel = seqmed_harness::KernelKind::Rbf;
    cfg.labeled_fraction = 0.3;
    cfg.knn = 5;
    run_experiment(&cfg).unwrap();
    cfg.output_dir = b.path().to_path_buf();
    run_experiment(&cfg).unwrap();
    for f in ["results.csv", "summary.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn full_retrain_matches_a_manual_concatenated_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let table = run_experiment(&cfg).unwrap();
    let stream = trial_stream(&cfg, 1, None).unwrap();
    let kernel = build_kernel(&cfg, &stream.batches[0]).unwrap();
    let joined = Batch::concat(&stream.batches, 1).unwrap();
    let (m, _) = fit_fresh(&cfg, &kernel, &joined).unwrap();
    let manual = accuracy(&m, &stream.test).unwrap();
    let row = table.rows.iter().find(|r| r.trial == 1 && r.t == 3 && r.model == "full-retrain").unwrap();
    assert_eq!(row.accuracy, manual);
}

#[test]
fn degenerate_batches_are_flagged_not_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    let rows = |pts: &[(f64, f64)]| FeatureMatrix::<f64>::from_rows(&pts.iter().map(|(a, b)| vec![*a, *b]).collect::<Vec<_>>()).unwrap();
    let b1 = Batch::new(rows(&[(1.0, 0.0), (0.8, 0.2), (-1.0, 0.1), (-0.9, -0.2)]), vec![1, 1, -1, -1], 1).unwrap();
    let b2 = Batch::new(rows(&[(0.7, 0.3), (0.9, -0.1)]), vec![1, 1], 2).unwrap();
    write_batch_csv(&data.join(batch_file_name(1)), &b1).unwrap();
    write_batch_csv(&data.join(batch_file_name(2)), &b2).unwrap();
    let test = Batch::new(rows(&[(1.0, 1.0), (-1.0, 1.0)]), vec![1, -1], 0).unwrap();
    write_batch_csv(&dir.path().join("test.csv"), &test).unwrap();
    let cfg = ExperimentConfig {
        scenario: Scenario::CustomCsv,
        kernel: seqmed_harness::KernelKind::Linear,
        trials: 1,
        data_dir: Some(data),
        test_file: Some(dir.path().join("test.csv")),
        output_dir: dir.path().join("out"),
        ..Default::default()
    };
    let table = run_experiment(&cfg).unwrap();
    assert_eq!(table.rows.len(), 6);
    let flagged: Vec<&str> = table.rows.iter().filter(|r| r.degenerate).map(|r| r.model.as_str()).collect();
    assert_eq!(flagged, vec!["seqmed", "per-batch"]);
    let seq2 = table.rows.iter().find(|r| r.t == 2 && r.model == "seqmed").unwrap();
    assert_eq!(seq2.accuracy, 1.0);
}

#[test]
fn incompatible_configs_fail_before_fitting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let cfg = ExperimentConfig {
        scenario: Scenario::Sphere,
        labeled_fraction: 0.1,
        output_dir: out.clone(),
        ..Default::default()
    };
    assert!(run_experiment(&cfg).is_err());
    assert!(!out.exists());
    let cfg = ExperimentConfig {
        baselines: vec![Baseline::PerBatch, Baseline::PerBatch],
        output_dir: out.clone(),
        ..Default::default()
    };
    assert!(run_experiment(&cfg).is_err());
}

fn summary_rows(models: &[&str], ts: &[usize]) -> Vec<SummaryRow> {
    let mut v = Vec::new();
    for &t in ts {
        for (k, m) in models.iter().enumerate() {
            v.push(SummaryRow {
                t,
                model: m.to_string(),
                mean: 0.6 + 0.02 * t as f64 + 0.05 * k as f64,
                std: 0.01 * (k + 1) as f64,
                trials: 10,
            });
        }
    }
    v
}

#[test]
fn plot_has_one_curve_per_model_and_is_deterministic() {
    let rows = summary_rows(&["seqmed", "per-batch", "full-retrain"], &[1, 2, 3, 4]);
    let a = render_svg(&rows).unwrap();
    assert_eq!(a, render_svg(&rows).unwrap());
    assert_eq!(a.matches("class=\"curve\"").count(), 3);
    assert_eq!(a.matches("<polyline").count(), 3);
    for m in ["seqmed", "per-batch", "full-retrain"] {
        assert!(a.contains(&format!("data-model=\"{m}\"")));
    }
}

#[test]
fn single_time_point_plots_markers_only() {
    let rows = summary_rows(&["seqmed", "per-batch"], &[1]);
    let svg = render_svg(&rows).unwrap();
    assert_eq!(svg.matches("<circle").count(), 2);
    assert_eq!(svg.matches("<polyline").count(), 0);
    assert!(render_svg(&[]).is_err());
}

#[test]
fn plot_file_from_summary_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(dir.path())).unwrap();
    let summary = dir.path().join("summary.csv");
    let (p1, p2) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    seqmed_harness::emit_plot(&summary, &p1).unwrap();
    seqmed_harness::emit_plot(&summary, &p2).unwrap();
    assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
}
