//! Accuracy-versus-time experiments: the sequential model against refitting
//! baselines, averaged over independent trials.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use seqmed_core::datagen::{
    gen_categorical, gen_sphere, load_isolet_stream, read_batch_csv, read_batch_dir, CategoricalParams, IsoletGrouping,
    SphereParams, Stream, StreamConfig,
};
use seqmed_core::{
    fit_tfidf, AnyModel, Batch, CSchedule, FitReport, GraphParams, KernelMode, KernelSpec, LapHyperparams,
    SeqLapMedModel, SeqMedModel,
};

use crate::config::{Baseline, ExperimentConfig, KernelKind, ModelKind, Scenario};
use crate::error::{HarnessError, Result};

/// One evaluation of one model at one time point of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub trial: usize,
    pub t: usize,
    pub model: String,
    pub accuracy: f64,
    pub n_support: usize,
    /// The fit saw fewer than two labeled classes.
    pub degenerate: bool,
    pub fit_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

/// Mean and sample standard deviation of accuracy over trials.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub model: String,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

fn stream_config(cfg: &ExperimentConfig, trial: usize) -> StreamConfig {
    StreamConfig {
        seed: cfg.seed ^ trial as u64,
        time_points: cfg.time_points,
        n_range: (cfg.n_min, cfg.n_max),
        labeled_fraction: cfg.labeled_fraction,
        test_size: cfg.test_size,
    }
}

/// Loads the data shared by every trial (file-backed scenarios only).
pub fn shared_stream(cfg: &ExperimentConfig) -> Result<Option<Stream<f64>>> {
    match cfg.scenario {
        Scenario::CustomCsv => {
            let (Some(dir), Some(test)) = (&cfg.data_dir, &cfg.test_file) else {
                return Err(HarnessError::Config("custom-csv needs data_dir and test_file".into()));
            };
            let batches = read_batch_dir(dir)?;
            for (i, b) in batches.iter().enumerate() {
                if b.t != i + 1 {
                    return Err(HarnessError::Config(format!("batch files must be numbered 1, 2, ...; found {}", b.t)));
                }
            }
            if !cfg.model.is_laplacian() && batches.iter().any(|b| !b.is_fully_labeled()) {
                return Err(HarnessError::Config("batches hold unlabeled rows; use a seqlapmed model".into()));
            }
            let test = read_batch_csv(test, 0)?;
            Ok(Some(Stream { batches, test }))
        }
        Scenario::Isolet => {
            let (Some(train), Some(test)) = (&cfg.isolet_train, &cfg.isolet_test) else {
                return Err(HarnessError::Config("isolet needs isolet_train and isolet_test".into()));
            };
            Ok(Some(load_isolet_stream(train, test, &cfg.isolet_positive, &IsoletGrouping::default())?))
        }
        _ => Ok(None),
    }
}

pub fn trial_stream(cfg: &ExperimentConfig, trial: usize, shared: Option<&Stream<f64>>) -> Result<Stream<f64>> {
    if let Some(s) = shared {
        return Ok(s.clone());
    }
    let sc = stream_config(cfg, trial);
    match cfg.scenario {
        Scenario::Categorical => Ok(gen_categorical(&sc, &CategoricalParams::default())?),
        Scenario::Sphere => Ok(gen_sphere(&sc, &SphereParams::default())?),
        _ => Err(HarnessError::Config("file-backed scenario data was not loaded".into())),
    }
}

/// The kernel used by every model of a trial.
pub fn build_kernel(cfg: &ExperimentConfig, first: &Batch<f64>) -> Result<KernelSpec<f64>> {
    Ok(match cfg.kernel {
        KernelKind::Linear => KernelSpec::Linear,
        KernelKind::Rbf => KernelSpec::rbf(cfg.rbf_width)?,
        KernelKind::Tfidf => fit_tfidf(&first.x)?,
    })
}

pub fn new_model(cfg: &ExperimentConfig, kernel: KernelSpec<f64>) -> Result<AnyModel<f64>> {
    let graph = GraphParams {
        k: cfg.knn,
        heat_width: cfg.heat_width,
    };
    let mode = match cfg.model {
        ModelKind::Seqmed => {
            return Ok(SeqMedModel::new(kernel, CSchedule::Constant(cfg.c))?.into());
        }
        ModelKind::SeqlapmedExact => KernelMode::Exact,
        ModelKind::SeqlapmedApprox => KernelMode::Approx { rank: cfg.approx_rank },
    };
    let hyper = LapHyperparams::new(cfg.gamma_a, cfg.gamma_i)?;
    Ok(SeqLapMedModel::new(kernel, hyper, graph, mode)?.into())
}

/// A fresh model fit on one batch, treated as its first time point.
pub fn fit_fresh(cfg: &ExperimentConfig, kernel: &KernelSpec<f64>, batch: &Batch<f64>) -> Result<(AnyModel<f64>, FitReport<f64>)> {
    let mut m = new_model(cfg, kernel.clone())?;
    let mut b = batch.clone();
    b.t = 1;
    let r = m.partial_fit(&b)?;
    Ok((m, r))
}

pub fn accuracy(model: &AnyModel<f64>, test: &Batch<f64>) -> Result<f64> {
    let pred = model.predict(&test.x)?;
    let idx = test.labeled_indices();
    if idx.is_empty() {
        return Err(HarnessError::Config("test batch has no labels".into()));
    }
    let hits = idx.iter().filter(|&&i| pred[i] == test.y[i]).count();
    Ok(hits as f64 / idx.len() as f64)
}

pub fn run_trial(cfg: &ExperimentConfig, trial: usize, shared: Option<&Stream<f64>>) -> Result<Vec<ResultRow>> {
    let stream = trial_stream(cfg, trial, shared)?;
    let Some(first) = stream.batches.first() else {
        return Err(HarnessError::Config("stream has no batches".into()));
    };
    let kernel = build_kernel(cfg, first)?;
    let mut seq = new_model(cfg, kernel.clone())?;
    let mut rows = Vec::new();
    let row = |t, name: &str, m: &AnyModel<f64>, r: &FitReport<f64>, secs| -> Result<ResultRow> {
        Ok(ResultRow {
            trial,
            t,
            model: name.to_owned(),
            accuracy: accuracy(m, &stream.test)?,
            n_support: m.n_support(),
            degenerate: r.degenerate(),
            fit_seconds: secs,
        })
    };
    for (i, batch) in stream.batches.iter().enumerate() {
        let t = i + 1;
        let start = Instant::now();
        let r = seq.partial_fit(batch)?;
        rows.push(row(t, cfg.model.name(), &seq, &r, start.elapsed().as_secs_f64())?);
        for &b in &cfg.baselines {
            let start = Instant::now();
            let (m, r) = match b {
                Baseline::PerBatch => fit_fresh(cfg, &kernel, batch)?,
                Baseline::FullRetrain => fit_fresh(cfg, &kernel, &Batch::concat(&stream.batches[..t], 1)?)?,
            };
            rows.push(row(t, b.name(), &m, &r, start.elapsed().as_secs_f64())?);
        }
    }
    Ok(rows)
}

/// Runs every trial and writes `results.csv`, `summary.csv` and `timing.csv`
/// to the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    cfg.validate()?;
    let shared = shared_stream(cfg)?;
    let per_trial: Vec<Vec<ResultRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, trial, shared.as_ref()))
        .collect::<Result<_>>()?;
    let table = ResultsTable {
        rows: per_trial.into_iter().flatten().collect(),
    };
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_atomic(&cfg.output_dir.join("results.csv"), &results_csv(&table))?;
    write_atomic(&cfg.output_dir.join("summary.csv"), &summary_csv(&summarize(&table)))?;
    write_atomic(&cfg.output_dir.join("timing.csv"), &timing_csv(&table))?;
    Ok(table)
}

/// Groups by `(t, model)`, ordered by `t` then first appearance of the model.
pub fn summarize(table: &ResultsTable) -> Vec<SummaryRow> {
    let mut models: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut ts: Vec<usize> = table.rows.iter().map(|r| r.t).collect();
    ts.sort_unstable();
    ts.dedup();
    let mut out = Vec::new();
    for &t in &ts {
        for &m in &models {
            let acc: Vec<f64> = table
                .rows
                .iter()
                .filter(|r| r.t == t && r.model == m)
                .map(|r| r.accuracy)
                .collect();
            if acc.is_empty() {
                continue;
            }
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let std = if acc.len() > 1 {
                (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            out.push(SummaryRow {
                t,
                model: m.to_owned(),
                mean,
                std,
                trials: acc.len(),
            });
        }
    }
    out
}

pub fn results_csv(table: &ResultsTable) -> String {
    let mut s = String::from("trial,t,model,accuracy,n_support,degenerate\n");
    for r in &table.rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.trial, r.t, r.model, r.accuracy, r.n_support, u8::from(r.degenerate));
    }
    s
}

pub fn timing_csv(table: &ResultsTable) -> String {
    let mut s = String::from("trial,t,model,fit_seconds\n");
    for r in &table.rows {
        let _ = writeln!(s, "{},{},{},{:.6}", r.trial, r.t, r.model, r.fit_seconds);
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("t,model,mean_accuracy,std_accuracy,trials\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.t, r.model, r.mean, r.std, r.trials);
    }
    s
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default().trim().to_owned();
        let bad = || HarnessError::Config(format!("malformed summary row {:?}", rec));
        out.push(SummaryRow {
            t: field(0).parse().map_err(|_| bad())?,
            model: field(1),
            mean: field(2).parse().map_err(|_| bad())?,
            std: field(3).parse().map_err(|_| bad())?,
            trials: field(4).parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Write-temp-then-rename within the target directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| HarnessError::Io(e.error))?;
    Ok(())
}
