//! Semi-supervised sequential Laplacian MED.
//!
//! Every batch, labeled or not, contributes a graph-Laplacian penalty
//! `2 beta_t L_t` that regularizes the kernel. The labeled rows then solve
//! the same log-barrier dual as the supervised model under the regularized
//! kernel. Two kernel modes are available: the exact recursion
//! ([`exact`]) and a running spectral summary of past batches ([`approx`]).

pub mod approx;
pub mod exact;

use nalgebra::{DMatrix, DVector};

use crate::dual::{fit_bias, solve_dual, DualProblem, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::graph::{laplacian, LaplacianMatrix};
use crate::kernel::{FeatureMatrix, KernelSpec};
use crate::scalar::Real;
use crate::seqmed::{label_fold, labels_as_real, sign, Batch, FitReport, Step};

pub use approx::{
    approx_prior_gram, approx_update, batch_spectra, update_spectra, ApproxState, PriorKernel, SpectralFactor,
};
pub use exact::{regularized_gram_exact, ExactState, ExactStep};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LapHyperparams<T: Real> {
    pub gamma_a: T,
    pub gamma_i: T,
}

impl<T: Real> LapHyperparams<T> {
    pub fn new(gamma_a: T, gamma_i: T) -> Result<Self> {
        let h = Self { gamma_a, gamma_i };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma_a.is_finite_real() || self.gamma_a <= T::zero() {
            return Err(Error::param(format!("gamma_A must be positive, got {}", self.gamma_a)));
        }
        if !self.gamma_i.is_finite_real() || self.gamma_i < T::zero() {
            return Err(Error::param(format!("gamma_I must be nonnegative, got {}", self.gamma_i)));
        }
        Ok(())
    }
}

/// `C = 1 / (2 l gamma_A)`, `beta = gamma_I / (2 gamma_A n^2)`.
pub fn derive_hyperparams<T: Real>(gamma_a: T, gamma_i: T, l: usize, n: usize) -> Result<(T, T)> {
    LapHyperparams::new(gamma_a, gamma_i)?;
    if l == 0 || l > n {
        return Err(Error::param(format!("labeled count {l} must be in 1..={n}")));
    }
    let two = T::lit(2.0);
    let c = T::one() / (two * T::from_usize(l).unwrap() * gamma_a);
    let nn = T::from_usize(n).unwrap();
    let beta = gamma_i / (two * gamma_a * nn * nn);
    Ok((c, beta))
}

fn beta_for<T: Real>(h: &LapHyperparams<T>, n: usize) -> T {
    let nn = T::from_usize(n).unwrap();
    h.gamma_i / (T::lit(2.0) * h.gamma_a * nn * nn)
}

/// kNN heat-kernel graph settings. `k` is clamped to `n - 1` per batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphParams<T: Real> {
    pub k: usize,
    pub heat_width: T,
}

impl<T: Real> Default for GraphParams<T> {
    fn default() -> Self {
        Self {
            k: 20,
            heat_width: T::lit(0.01),
        }
    }
}

impl<T: Real> GraphParams<T> {
    pub fn batch_laplacian(&self, x: &FeatureMatrix<T>) -> Result<Option<LaplacianMatrix<T>>> {
        let n = x.nrows();
        if n < 2 {
            return Ok(None);
        }
        laplacian(x, self.k.min(n - 1), self.heat_width).map(Some)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelMode {
    Exact,
    /// `rank` caps the number of averaged spectral components.
    Approx { rank: Option<usize> },
}

impl KernelMode {
    pub fn name(&self) -> &'static str {
        match self {
            KernelMode::Exact => "exact",
            KernelMode::Approx { .. } => "approx",
        }
    }
}

/// State of the approximate mode.
#[derive(Clone, Debug)]
pub struct ApproxModel<T: Real> {
    pub(crate) rank: Option<usize>,
    /// Prior kernel of the newest time point.
    pub(crate) prior: PriorKernel<T>,
    /// Newest batch and its `2 beta L`; `w` is derived.
    pub(crate) current: Option<(FeatureMatrix<T>, Option<DMatrix<T>>)>,
    pub(crate) w: Option<DMatrix<T>>,
    /// Running spectra over every batch seen so far.
    pub(crate) accum: ApproxState<T>,
    pub(crate) history: Vec<Step<T>>,
    /// Factored spectral prior, when `prior` is spectral.
    factor: Option<SpectralFactor<T>>,
    u: DVector<T>,
}

fn prior_factor<T: Real>(prior: &PriorKernel<T>, base: &KernelSpec<T>) -> Result<Option<SpectralFactor<T>>> {
    match prior {
        PriorKernel::Spectral(s) => SpectralFactor::new(s, base),
        _ => Ok(None),
    }
}

fn prior_gram<T: Real>(
    prior: &PriorKernel<T>,
    factor: Option<&SpectralFactor<T>>,
    base: &KernelSpec<T>,
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
) -> Result<DMatrix<T>> {
    match factor {
        Some(f) => f.gram(base, a, b),
        None => prior.eval(base, a, b),
    }
}

impl<T: Real> ApproxModel<T> {
    fn new(p: usize, rank: Option<usize>) -> Self {
        Self {
            rank,
            prior: PriorKernel::Base,
            current: None,
            w: None,
            accum: ApproxState::new(p),
            history: Vec::new(),
            factor: None,
            u: DVector::zeros(0),
        }
    }

    pub(crate) fn from_parts(
        base: &KernelSpec<T>,
        rank: Option<usize>,
        prior: PriorKernel<T>,
        current: Option<(FeatureMatrix<T>, Option<DMatrix<T>>)>,
        accum: ApproxState<T>,
        history: Vec<Step<T>>,
    ) -> Result<Self> {
        accum.validate()?;
        if let PriorKernel::Spectral(s) = &prior {
            s.validate()?;
        }
        let mut m = Self::new(accum.dim(), rank);
        m.factor = prior_factor(&prior, base)?;
        m.prior = prior;
        m.accum = accum;
        m.history = history;
        if let Some((x, reg)) = &current {
            m.w = match reg {
                Some(reg) => {
                    let pxx = sym(prior_gram(&m.prior, m.factor.as_ref(), base, x, x)?);
                    Some(exact::solve_w(reg, &pxx, 0)?)
                }
                None => None,
            };
        }
        m.current = current;
        m.refresh(base)?;
        Ok(m)
    }

    pub fn history(&self) -> &[Step<T>] {
        &self.history
    }

    pub fn accum(&self) -> &ApproxState<T> {
        &self.accum
    }

    pub fn prior(&self) -> &PriorKernel<T> {
        &self.prior
    }

    fn expansion(&self, base: &KernelSpec<T>, a: &FeatureMatrix<T>) -> Result<DVector<T>> {
        self.expansion_under(&self.prior, self.factor.as_ref(), base, a)
    }

    /// `P(A, S) c` summed step by step over the stored support vectors.
    fn expansion_under(
        &self,
        prior: &PriorKernel<T>,
        factor: Option<&SpectralFactor<T>>,
        base: &KernelSpec<T>,
        a: &FeatureMatrix<T>,
    ) -> Result<DVector<T>> {
        if let Some(f) = factor {
            return f.expansion(base, a, self.history.iter().map(|s| (&s.samples, s.coef.as_slice())));
        }
        let mut out = DVector::zeros(a.nrows());
        for s in &self.history {
            out += prior.eval(base, a, &s.samples)? * DVector::from_column_slice(&s.coef);
        }
        Ok(out)
    }

    fn refresh(&mut self, base: &KernelSpec<T>) -> Result<()> {
        self.u = match (&self.current, &self.w) {
            (Some((x, _)), Some(w)) => w * self.expansion(base, x)?,
            (Some((x, _)), None) => DVector::zeros(x.nrows()),
            _ => DVector::zeros(0),
        };
        Ok(())
    }

    fn decision(&self, base: &KernelSpec<T>, a: &FeatureMatrix<T>) -> Result<Vec<T>> {
        let mut out = self.expansion(base, a)?;
        if let (Some((x, _)), Some(_)) = (&self.current, &self.w) {
            out -= prior_gram(&self.prior, self.factor.as_ref(), base, a, x)? * &self.u;
        }
        Ok(out.iter().copied().collect())
    }
}

#[derive(Clone, Debug)]
pub enum LapState<T: Real> {
    Exact(ExactState<T>),
    Approx(ApproxModel<T>),
}

/// Per-update report of the Laplacian model.
#[derive(Clone, Debug, PartialEq)]
pub struct LapFitReport<T: Real> {
    pub fit: FitReport<T>,
    pub beta: T,
    pub n_labeled: usize,
    /// A Laplacian penalty was added (false when `beta = 0` or `n < 2`).
    pub regularized: bool,
}

#[derive(Clone, Debug)]
pub struct SeqLapMedModel<T: Real> {
    kernel: KernelSpec<T>,
    hyper: LapHyperparams<T>,
    graph: GraphParams<T>,
    mode: KernelMode,
    state: LapState<T>,
    bias: T,
    t: usize,
    dim: Option<usize>,
    solver: SolverOptions<T>,
}

impl<T: Real> SeqLapMedModel<T> {
    pub fn new(kernel: KernelSpec<T>, hyper: LapHyperparams<T>, graph: GraphParams<T>, mode: KernelMode) -> Result<Self> {
        kernel.validate()?;
        hyper.validate()?;
        if !graph.heat_width.is_finite_real() || graph.heat_width <= T::zero() || graph.k == 0 {
            return Err(Error::param("graph needs k >= 1 and a positive heat width"));
        }
        if matches!(kernel, KernelSpec::Precomputed { .. }) {
            return Err(Error::param("the Laplacian model needs feature vectors, not a precomputed kernel"));
        }
        let state = match mode {
            KernelMode::Exact => LapState::Exact(ExactState::new(kernel.clone())),
            KernelMode::Approx { rank } => LapState::Approx(ApproxModel::new(0, rank)),
        };
        Ok(Self {
            dim: kernel.input_dim(),
            kernel,
            hyper,
            graph,
            mode,
            state,
            bias: T::zero(),
            t: 0,
            solver: SolverOptions::default(),
        })
    }

    pub(crate) fn from_state(
        kernel: KernelSpec<T>,
        hyper: LapHyperparams<T>,
        graph: GraphParams<T>,
        mode: KernelMode,
        state: LapState<T>,
        bias: T,
        t: usize,
        dim: Option<usize>,
    ) -> Result<Self> {
        let mut m = Self::new(kernel, hyper, graph, mode)?;
        if !bias.is_finite_real() {
            return Err(Error::NonFinite("bias"));
        }
        m.state = state;
        m.bias = bias;
        m.t = t;
        m.dim = m.dim.or(dim);
        Ok(m)
    }

    pub fn with_solver_options(mut self, opts: SolverOptions<T>) -> Self {
        self.solver = opts;
        self
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn hyper(&self) -> LapHyperparams<T> {
        self.hyper
    }

    pub fn graph(&self) -> GraphParams<T> {
        self.graph
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn state(&self) -> &LapState<T> {
        &self.state
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn n_support(&self) -> usize {
        let thr = |c: &&T| **c != T::zero();
        match &self.state {
            LapState::Exact(s) => s.steps().iter().map(|st| st.coef.iter().filter(thr).count()).sum(),
            LapState::Approx(a) => a.history.iter().map(|s| s.coef.len()).sum(),
        }
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

    pub fn decision_values(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let f = match &self.state {
            LapState::Exact(s) => s.decision(x)?,
            LapState::Approx(a) => a.decision(&self.kernel, x)?,
        };
        Ok(f.into_iter().map(|v| v + self.bias).collect())
    }

    pub fn predict(&self, x: &FeatureMatrix<T>) -> Result<Vec<i8>> {
        Ok(self.decision_values(x)?.into_iter().map(sign).collect())
    }

    /// Regularized kernel of the newest time point on arbitrary points.
    pub fn posterior_gram(&self, a: &FeatureMatrix<T>, b: &FeatureMatrix<T>) -> Result<DMatrix<T>> {
        match &self.state {
            LapState::Exact(s) => s.regularized_gram(a, b, s.len()),
            LapState::Approx(m) => {
                let p = m.prior.eval(&self.kernel, a, b)?;
                match (&m.current, &m.w) {
                    (Some((x, _)), Some(w)) => {
                        let pax = m.prior.eval(&self.kernel, a, x)?;
                        let pxb = m.prior.eval(&self.kernel, x, b)?;
                        Ok(p - pax * (w * pxb))
                    }
                    _ => Ok(p),
                }
            }
        }
    }

    pub fn partial_fit(&mut self, batch: &Batch<T>) -> Result<LapFitReport<T>> {
        if batch.t != self.t + 1 {
            return Err(Error::TimeOrder {
                model: self.t,
                found: batch.t,
            });
        }
        self.check_dim(&batch.x)?;
        let n = batch.len();
        let labeled = batch.labeled_indices();
        let beta = beta_for(&self.hyper, n);
        let lap = self.graph.batch_laplacian(&batch.x)?;
        let reg = match &lap {
            Some(l) if beta > T::zero() => Some(&l.values * (T::lit(2.0) * beta)),
            _ => None,
        };
        let regularized = reg.is_some();

        // Posterior Gram over the batch and the prior decision on it.
        let (k_post, prior_vals) = match &mut self.state {
            LapState::Exact(s) => {
                s.push_batch(batch.t, batch.x.clone(), reg)?;
                let tau = s.len() - 1;
                (s.posterior_block(tau), s.posterior_prior_values())
            }
            LapState::Approx(m) => {
                if m.accum.dim() == 0 && m.accum.count == 0 {
                    m.accum = ApproxState::new(batch.x.ncols());
                }
                let prior = match self.t {
                    0 => PriorKernel::Base,
                    1 => match &m.current {
                        Some((x, _)) => PriorKernel::ExactOne {
                            x: x.clone(),
                            w: m.w.clone(),
                        },
                        None => PriorKernel::Base,
                    },
                    _ => PriorKernel::Spectral(m.accum.clone()),
                };
                let factor = prior_factor(&prior, &self.kernel)?;
                let pxx = sym(prior_gram(&prior, factor.as_ref(), &self.kernel, &batch.x, &batch.x)?);
                let w = match &reg {
                    Some(r) => Some(exact::solve_w(r, &pxx, batch.t)?),
                    None => None,
                };
                let g = m.expansion_under(&prior, factor.as_ref(), &self.kernel, &batch.x)?;
                let (k_post, prior_vals) = match &w {
                    Some(w) => {
                        let pw = &pxx * w;
                        let mut kp = &pxx - &pw * &pxx;
                        crate::linalg::symmetrize(&mut kp);
                        let pv = &g - &pw * &g;
                        (kp, pv)
                    }
                    None => (pxx, g),
                };
                // Only the newest time point's state changes below, once the
                // dual has been built successfully.
                m.prior = prior;
                m.factor = factor;
                m.current = Some((batch.x.clone(), reg));
                m.w = w;
                (k_post, prior_vals)
            }
        };

        let result = self.solve_and_store(batch, &labeled, &k_post, &prior_vals);
        if result.is_err() {
            if let LapState::Exact(s) = &mut self.state {
                s.pop_batch();
            }
        }
        let fit = result?;

        if let LapState::Approx(m) = &mut self.state {
            if let Some(l) = &lap {
                approx_update(&mut m.accum, &batch.x, l, beta, m.rank)?;
            }
            m.refresh(&self.kernel)?;
        }
        if self.dim.is_none() {
            self.dim = Some(batch.x.ncols());
        }
        self.t = batch.t;
        Ok(LapFitReport {
            fit,
            beta,
            n_labeled: labeled.len(),
            regularized,
        })
    }

    fn solve_and_store(
        &mut self,
        batch: &Batch<T>,
        labeled: &[usize],
        k_post: &DMatrix<T>,
        prior_vals: &DVector<T>,
    ) -> Result<FitReport<T>> {
        let l = labeled.len();
        let y: Vec<T> = labels_as_real(&labeled.iter().map(|&i| batch.y[i]).collect::<Vec<_>>());
        let mut report = FitReport {
            t: batch.t,
            status: SolveStatus::Degenerate,
            alpha: Vec::new(),
            c: T::zero(),
            iterations: 0,
            kkt_residual: T::zero(),
            n_support: 0,
            bias_kept: true,
        };
        let mut coef = vec![T::zero(); l];
        let mut sv = Vec::new();
        if l > 0 {
            let (c, _) = derive_hyperparams(self.hyper.gamma_a, self.hyper.gamma_i, l, batch.len())?;
            let kll = DMatrix::from_fn(l, l, |i, j| k_post[(labeled[i], labeled[j])]);
            let w = (0..l).map(|i| T::one() - y[i] * prior_vals[labeled[i]]).collect();
            let problem = DualProblem::new(label_fold(&kll, &y), w, y.clone(), c)?;
            let sol = solve_dual(&problem, &self.solver);
            report.status = sol.status;
            report.alpha = sol.alpha.clone();
            report.c = c;
            report.iterations = sol.iterations;
            report.kkt_residual = sol.kkt_residual;
            if sol.status == SolveStatus::MaxIterations {
                log::warn!("solver hit the iteration limit at t = {}", batch.t);
            }
            if sol.status != SolveStatus::Degenerate {
                sv = sol.support(c);
                for &i in &sv {
                    coef[i] = y[i] * sol.alpha[i];
                }
            }
        }
        if report.degenerate() {
            log::warn!("batch {} has fewer than two labeled classes; only its graph is used", batch.t);
        }

        let residuals: Vec<T> = sv
            .iter()
            .map(|&s| {
                let f: T = sv.iter().map(|&j| k_post[(labeled[s], labeled[j])] * coef[j]).sum();
                y[s] - (prior_vals[labeled[s]] + f)
            })
            .collect();
        if !residuals.is_empty() {
            self.bias = fit_bias(&residuals).value;
            report.bias_kept = false;
        }
        report.n_support = sv.len();

        match &mut self.state {
            LapState::Exact(s) => {
                s.set_coef(labeled.to_vec(), coef);
                s.refresh_expansion();
            }
            LapState::Approx(m) => {
                if !sv.is_empty() {
                    let rows: Vec<usize> = sv.iter().map(|&i| labeled[i]).collect();
                    m.history.push(Step {
                        t: batch.t,
                        samples: batch.x.select_rows(&rows),
                        coef: sv.iter().map(|&i| coef[i]).collect(),
                    });
                }
            }
        }
        Ok(report)
    }

    /// A fresh model fit on one batch, relabeled as t = 1.
    pub fn fit_single(
        kernel: KernelSpec<T>,
        hyper: LapHyperparams<T>,
        graph: GraphParams<T>,
        mode: KernelMode,
        batch: &Batch<T>,
    ) -> Result<(Self, LapFitReport<T>)> {
        let mut m = Self::new(kernel, hyper, graph, mode)?;
        let mut b = batch.clone();
        b.t = 1;
        let r = m.partial_fit(&b)?;
        Ok((m, r))
    }
}

fn sym<T: Real>(mut m: DMatrix<T>) -> DMatrix<T> {
    crate::linalg::symmetrize(&mut m);
    m
}
