//! Experiment configuration, read from a flat TOML file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Categorical,
    Sphere,
    Isolet,
    CustomCsv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Seqmed,
    SeqlapmedExact,
    SeqlapmedApprox,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Seqmed => "seqmed",
            ModelKind::SeqlapmedExact => "seqlapmed-exact",
            ModelKind::SeqlapmedApprox => "seqlapmed-approx",
        }
    }

    pub fn is_laplacian(self) -> bool {
        self != ModelKind::Seqmed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    PerBatch,
    FullRetrain,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::PerBatch => "per-batch",
            Baseline::FullRetrain => "full-retrain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Linear,
    Rbf,
    /// Tf-idf weights fitted on the first training batch, then a linear kernel.
    Tfidf,
}

/// Every key is optional; see the README for the defaults.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub baselines: Vec<Baseline>,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,

    pub time_points: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub labeled_fraction: f64,
    pub test_size: usize,

    pub kernel: KernelKind,
    pub rbf_width: f64,
    pub c: f64,
    pub gamma_a: f64,
    pub gamma_i: f64,
    pub knn: usize,
    pub heat_width: f64,
    pub approx_rank: Option<usize>,

    /// Directory of `batch_NNNN.csv` files (custom-csv).
    pub data_dir: Option<PathBuf>,
    /// Held-out batch file (custom-csv).
    pub test_file: Option<PathBuf>,
    pub isolet_train: Option<PathBuf>,
    pub isolet_test: Option<PathBuf>,
    /// Letters mapped to +1 (1 = A).
    pub isolet_positive: Vec<u8>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Categorical,
            model: ModelKind::Seqmed,
            baselines: vec![Baseline::PerBatch, Baseline::FullRetrain],
            trials: 10,
            seed: 0,
            output_dir: PathBuf::from("out"),
            time_points: 10,
            n_min: 97,
            n_max: 103,
            labeled_fraction: 1.0,
            test_size: 1000,
            kernel: KernelKind::Tfidf,
            rbf_width: 1.0,
            c: 10.0,
            gamma_a: 1e-3,
            gamma_i: 1.0,
            knn: 20,
            heat_width: 0.01,
            approx_rank: None,
            data_dir: None,
            test_file: None,
            isolet_train: None,
            isolet_test: None,
            isolet_positive: (1..=13).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.output_dir);
        for p in [&mut cfg.data_dir, &mut cfg.test_file, &mut cfg.isolet_train, &mut cfg.isolet_test]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }

    /// Structural checks, run before any data is generated or fitted.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_owned()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if matches!(self.scenario, Scenario::Categorical | Scenario::Sphere) {
            if self.time_points == 0 {
                return bad("time_points must be at least 1");
            }
            if self.n_min == 0 || self.n_min > self.n_max {
                return bad("need 1 <= n_min <= n_max");
            }
            if self.test_size == 0 {
                return bad("test_size must be at least 1");
            }
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return bad("labeled_fraction must be in (0, 1]");
        }
        let partially_labeled = match self.scenario {
            Scenario::Sphere => self.labeled_fraction < 1.0,
            Scenario::Isolet => true,
            _ => false,
        };
        if partially_labeled && !self.model.is_laplacian() {
            return bad("this scenario has unlabeled samples and needs a seqlapmed model");
        }
        if self.scenario == Scenario::CustomCsv && (self.data_dir.is_none() || self.test_file.is_none()) {
            return bad("custom-csv needs data_dir and test_file");
        }
        if self.scenario == Scenario::Isolet && (self.isolet_train.is_none() || self.isolet_test.is_none()) {
            return bad("isolet needs isolet_train and isolet_test");
        }
        if self.model.is_laplacian() {
            if !(self.gamma_a > 0.0) || !(self.gamma_i >= 0.0) {
                return bad("need gamma_a > 0 and gamma_i >= 0");
            }
            if self.knn == 0 || !(self.heat_width > 0.0) {
                return bad("need knn >= 1 and heat_width > 0");
            }
        } else if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c must be positive");
        }
        if self.kernel == KernelKind::Rbf && !(self.rbf_width > 0.0) {
            return bad("rbf_width must be positive");
        }
        let mut seen = self.baselines.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.baselines.len() {
            return bad("baselines must not repeat");
        }
        Ok(())
    }
}
