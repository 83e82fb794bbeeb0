//! Supervised sequential MED.
//!
//! The posterior mean after `tau` batches is the kernel expansion
//! `sum_t k(., X_t) Y_t alpha_t`. Each update solves one dual whose linear
//! term is the margin the current expansion already achieves on the new
//! batch; only support vectors of each batch are kept.

use nalgebra::{DMatrix, DVector};

use crate::dual::{fit_bias, solve_dual, DualProblem, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::kernel::{gram, FeatureMatrix, KernelSpec};
use crate::scalar::Real;

/// One time point: samples, labels in `{-1, 0, +1}` (0 = unlabeled) and a
/// 1-based time index.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T: Real> {
    pub x: FeatureMatrix<T>,
    pub y: Vec<i8>,
    pub t: usize,
}

impl<T: Real> Batch<T> {
    pub fn new(x: FeatureMatrix<T>, y: Vec<i8>, t: usize) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("batch"));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "batch labels",
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if let Some(bad) = y.iter().find(|v| !matches!(v, -1..=1)) {
            return Err(Error::input(format!("label {bad} is not -1, 0 or +1")));
        }
        Ok(Self { x, y, t })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&i| self.y[i] != 0).collect()
    }

    pub fn n_labeled(&self) -> usize {
        self.y.iter().filter(|v| **v != 0).count()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.y.iter().all(|v| *v != 0)
    }

    /// The labeled rows only, with the original time index.
    pub fn labeled(&self) -> Batch<T> {
        let idx = self.labeled_indices();
        Batch {
            x: self.x.select_rows(&idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            t: self.t,
        }
    }

    /// Row-wise concatenation, stamped with time `t`.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Batch<T>>, t: usize) -> Result<Batch<T>>
    where
        T: 'a,
    {
        let parts: Vec<&Batch<T>> = parts.into_iter().collect();
        let x = FeatureMatrix::vstack(parts.iter().map(|b| &b.x))?;
        let y = parts.iter().flat_map(|b| b.y.iter().copied()).collect();
        Batch::new(x, y, t)
    }
}

pub(crate) fn labels_as_real<T: Real>(y: &[i8]) -> Vec<T> {
    y.iter().map(|v| T::lit(f64::from(*v))).collect()
}

/// Barrier ceiling per time point.
#[derive(Clone, Debug, PartialEq)]
pub enum CSchedule<T: Real> {
    Constant(T),
    /// Value for t = 1, 2, ...; the last entry repeats once the list runs out.
    PerStep(Vec<T>),
}

impl<T: Real> CSchedule<T> {
    pub fn at(&self, t: usize) -> T {
        match self {
            CSchedule::Constant(c) => *c,
            CSchedule::PerStep(v) => v[(t.max(1) - 1).min(v.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: &T| c.is_finite_real() && *c > T::zero();
        match self {
            CSchedule::Constant(c) if ok(c) => Ok(()),
            CSchedule::PerStep(v) if !v.is_empty() && v.iter().all(ok) => Ok(()),
            _ => Err(Error::param("C schedule must hold positive finite values")),
        }
    }
}

/// Retained support vectors of one time point with coefficients `y_i alpha_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Step<T: Real> {
    pub t: usize,
    pub samples: FeatureMatrix<T>,
    pub coef: Vec<T>,
}

/// Outcome of one `partial_fit`.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport<T: Real> {
    pub t: usize,
    pub status: SolveStatus,
    /// Multipliers over the labeled rows of the batch, in row order.
    pub alpha: Vec<T>,
    pub c: T,
    pub iterations: usize,
    pub kkt_residual: T,
    pub n_support: usize,
    /// No support vectors were found, so the previous bias was kept.
    pub bias_kept: bool,
}

impl<T: Real> FitReport<T> {
    pub fn degenerate(&self) -> bool {
        self.status == SolveStatus::Degenerate
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqMedModel<T: Real> {
    kernel: KernelSpec<T>,
    schedule: CSchedule<T>,
    steps: Vec<Step<T>>,
    bias: T,
    t: usize,
    dim: Option<usize>,
    solver: SolverOptions<T>,
}

impl<T: Real> SeqMedModel<T> {
    pub fn new(kernel: KernelSpec<T>, schedule: CSchedule<T>) -> Result<Self> {
        kernel.validate()?;
        schedule.validate()?;
        Ok(Self {
            dim: kernel.input_dim(),
            kernel,
            schedule,
            steps: Vec::new(),
            bias: T::zero(),
            t: 0,
            solver: SolverOptions::default(),
        })
    }

    /// Rebuilds a model from stored parts, checking the coefficient bounds.
    pub fn from_parts(
        kernel: KernelSpec<T>,
        schedule: CSchedule<T>,
        steps: Vec<Step<T>>,
        bias: T,
        t: usize,
        dim: Option<usize>,
    ) -> Result<Self> {
        let mut m = Self::new(kernel, schedule)?;
        m.dim = m.dim.or(dim).or_else(|| steps.first().map(|s| s.samples.ncols()));
        for s in &steps {
            if s.samples.nrows() != s.coef.len() {
                return Err(Error::DimensionMismatch {
                    context: "step coefficients",
                    expected: s.samples.nrows(),
                    found: s.coef.len(),
                });
            }
            if Some(s.samples.ncols()) != m.dim {
                return Err(Error::input(format!("step {} feature dimension differs from the model", s.t)));
            }
            if s.t == 0 || s.t > t {
                return Err(Error::input(format!("step time {} outside 1..={t}", s.t)));
            }
            let c = m.schedule.at(s.t);
            if s.coef.iter().any(|v| !v.is_finite_real() || *v == T::zero() || v.abs() >= c) {
                return Err(Error::input(format!("step {} has a coefficient outside (0, C)", s.t)));
            }
        }
        if !bias.is_finite_real() {
            return Err(Error::NonFinite("bias"));
        }
        m.steps = steps;
        m.bias = bias;
        m.t = t;
        Ok(m)
    }

    pub fn with_solver_options(mut self, opts: SolverOptions<T>) -> Self {
        self.solver = opts;
        self
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn schedule(&self) -> &CSchedule<T> {
        &self.schedule
    }

    pub fn steps(&self) -> &[Step<T>] {
        &self.steps
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Feature dimension, fixed by the kernel or the first batch.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn n_support(&self) -> usize {
        self.steps.iter().map(|s| s.coef.len()).sum()
    }

    /// `sum_t k(X, S_t) c_t`, without the bias.
    fn expansion(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        let mut out = DVector::zeros(x.nrows());
        for s in &self.steps {
            let k = gram(&self.kernel, x, &s.samples)?.into_inner();
            out += k * DVector::from_column_slice(&s.coef);
        }
        Ok(out.iter().copied().collect())
    }

    /// Margin weights `1 - y_i f(x_i)` of the current expansion (bias excluded).
    pub fn prior_margin(&self, batch: &Batch<T>) -> Result<Vec<T>> {
        if !batch.is_fully_labeled() {
            return Err(Error::Unlabeled);
        }
        let f = self.expansion(&batch.x)?;
        Ok(f.iter()
            .zip(&batch.y)
            .map(|(f, y)| T::one() - T::lit(f64::from(*y)) * *f)
            .collect())
    }

    pub fn decision_values(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        self.check_dim(x)?;
        Ok(self.expansion(x)?.into_iter().map(|v| v + self.bias).collect())
    }

    pub fn predict(&self, x: &FeatureMatrix<T>) -> Result<Vec<i8>> {
        Ok(self.decision_values(x)?.into_iter().map(sign).collect())
    }

    fn check_dim(&self, x: &FeatureMatrix<T>) -> Result<()> {
        match self.dim {
            Some(p) if p != x.ncols() => Err(Error::DimensionMismatch {
                context: "query features",
                expected: p,
                found: x.ncols(),
            }),
            _ => Ok(()),
        }
    }

    pub fn partial_fit(&mut self, batch: &Batch<T>) -> Result<FitReport<T>> {
        if batch.t != self.t + 1 {
            return Err(Error::TimeOrder {
                model: self.t,
                found: batch.t,
            });
        }
        if !batch.is_fully_labeled() {
            return Err(Error::Unlabeled);
        }
        self.check_dim(&batch.x)?;
        let c = self.schedule.at(batch.t);
        let y = labels_as_real::<T>(&batch.y);
        let k = gram(&self.kernel, &batch.x, &batch.x)?.into_inner();
        let prior = self.expansion(&batch.x)?;
        let w = prior.iter().zip(&y).map(|(f, y)| T::one() - *y * *f).collect();

        let problem = DualProblem::new(label_fold(&k, &y), w, y.clone(), c)?;
        let sol = solve_dual(&problem, &self.solver);
        let mut report = FitReport {
            t: batch.t,
            status: sol.status,
            alpha: sol.alpha.clone(),
            c,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            n_support: 0,
            bias_kept: true,
        };
        self.t = batch.t;
        self.dim = Some(batch.x.ncols());
        if sol.status == SolveStatus::Degenerate {
            log::warn!("batch {} has a single class; model left unchanged", batch.t);
            return Ok(report);
        }
        if sol.status == SolveStatus::MaxIterations {
            log::warn!("solver hit the iteration limit at t = {}", batch.t);
        }

        let sv = sol.support(c);
        let coef: Vec<T> = sv.iter().map(|&i| y[i] * sol.alpha[i]).collect();
        let residuals: Vec<T> = sv
            .iter()
            .map(|&s| {
                let f: T = sv.iter().zip(&coef).map(|(&j, cj)| k[(s, j)] * *cj).sum();
                y[s] - (prior[s] + f)
            })
            .collect();
        if !residuals.is_empty() {
            self.bias = fit_bias(&residuals).value;
            report.bias_kept = false;
        }
        report.n_support = sv.len();
        if !sv.is_empty() {
            self.steps.push(Step {
                t: batch.t,
                samples: batch.x.select_rows(&sv),
                coef,
            });
        }
        Ok(report)
    }

    /// A fresh model trained on a single batch, relabeled as t = 1.
    pub fn fit_single(kernel: KernelSpec<T>, c: T, batch: &Batch<T>) -> Result<(Self, FitReport<T>)> {
        let mut m = Self::new(kernel, CSchedule::Constant(c))?;
        let mut b = batch.clone();
        b.t = 1;
        let r = m.partial_fit(&b)?;
        Ok((m, r))
    }
}

pub(crate) fn label_fold<T: Real>(k: &DMatrix<T>, y: &[T]) -> DMatrix<T> {
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| y[i] * y[j] * k[(i, j)])
}

/// Sign with `sign(0) = +1`.
pub fn sign<T: Real>(v: T) -> i8 {
    if v < T::zero() {
        -1
    } else {
        1
    }
}
