//! Exact recursive regularized kernel.
//!
//! With `M_d = 2 beta_d L_d` and `k_0` the base kernel, step `d` maps
//!
//! ```text
//! k_{d+1}(a, b) = k_d(a, b) - k_d(a, X_d) W_d k_d(X_d, b),
//! W_d = (I + M_d k_d(X_d, X_d))^{-1} M_d
//! ```
//!
//! which never inverts the (singular) Laplacian. The blocks
//! `D[s][b] = k_s(X_s, X_b)` are cached for every pair of stored batches so
//! a new batch costs `O(tau^2)` block products.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{gram, FeatureMatrix, KernelSpec};
use crate::linalg::{inverse_with_condition, symmetrize};
use crate::scalar::Real;

/// Largest 1-norm condition number accepted for `I + M K`.
pub const MAX_CONDITION: f64 = 1e14;

/// One stored batch of the exact state.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactStep<T: Real> {
    pub t: usize,
    /// Full batch, unlabeled rows included.
    pub x: FeatureMatrix<T>,
    /// `2 beta L`, absent when `beta = 0`.
    pub reg: Option<DMatrix<T>>,
    /// Strictly increasing labeled row indices.
    pub labeled: Vec<usize>,
    /// `y_i alpha_i` per labeled row (zero below the support threshold).
    pub coef: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct ExactState<T: Real> {
    kernel: KernelSpec<T>,
    steps: Vec<ExactStep<T>>,
    w: Vec<Option<DMatrix<T>>>,
    d: Vec<Vec<DMatrix<T>>>,
    expansion: Vec<DVector<T>>,
}

impl<T: Real> ExactState<T> {
    pub fn new(kernel: KernelSpec<T>) -> Self {
        Self {
            kernel,
            steps: Vec::new(),
            w: Vec::new(),
            d: Vec::new(),
            expansion: Vec::new(),
        }
    }

    /// Replays stored steps, recomputing every cached block.
    pub fn from_steps(kernel: KernelSpec<T>, steps: Vec<ExactStep<T>>) -> Result<Self> {
        let mut s = Self::new(kernel);
        for step in steps {
            if step.labeled.len() != step.coef.len() {
                return Err(Error::DimensionMismatch {
                    context: "exact step coefficients",
                    expected: step.labeled.len(),
                    found: step.coef.len(),
                });
            }
            if step.labeled.windows(2).any(|w| w[0] >= w[1]) || step.labeled.last().is_some_and(|&i| i >= step.x.nrows()) {
                return Err(Error::input(format!("step {} labeled indices invalid", step.t)));
            }
            let (t, labeled, coef) = (step.t, step.labeled.clone(), step.coef.clone());
            s.push_batch(t, step.x, step.reg)?;
            s.set_coef(labeled, coef);
        }
        s.refresh_expansion();
        Ok(s)
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn steps(&self) -> &[ExactStep<T>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `W_d` for the 0-based step `d`.
    pub fn w(&self, d: usize) -> Option<&DMatrix<T>> {
        self.w[d].as_ref()
    }

    /// Cached `k_s(X_s, X_b)`.
    pub fn block(&self, s: usize, b: usize) -> &DMatrix<T> {
        &self.d[s][b]
    }

    /// Appends a batch with regularizer `reg = 2 beta L`, filling every new
    /// cache block. Leaves the state untouched on error.
    pub fn push_batch(&mut self, t: usize, x: FeatureMatrix<T>, reg: Option<DMatrix<T>>) -> Result<()> {
        let tau = self.steps.len();
        let n = x.nrows();
        if let Some(m) = &reg {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "Laplacian block",
                    expected: n,
                    found: m.nrows(),
                });
            }
        }
        let mut r = Vec::with_capacity(tau + 1);
        for s in &self.steps {
            r.push(gram(&self.kernel, &x, &s.x)?.into_inner());
        }
        r.push(gram(&self.kernel, &x, &x)?.into_inner());

        let mut col = Vec::with_capacity(tau);
        for d in 0..tau {
            col.push(r[d].transpose());
            if let Some(w) = &self.w[d] {
                let rw = &r[d] * w;
                for b in 0..=tau {
                    let db = if b == tau { &col[d] } else { &self.d[d][b] };
                    r[b] -= &rw * db;
                }
            }
        }
        symmetrize(&mut r[tau]);
        let w = match &reg {
            Some(m) => Some(solve_w(m, &r[tau], tau + 1)?),
            None => None,
        };

        for (d, c) in col.into_iter().enumerate() {
            self.d[d].push(c);
        }
        self.d.push(r);
        self.w.push(w);
        self.steps.push(ExactStep {
            t,
            x,
            reg,
            labeled: Vec::new(),
            coef: Vec::new(),
        });
        self.expansion.push(DVector::zeros(n));
        Ok(())
    }

    pub(crate) fn pop_batch(&mut self) {
        if self.steps.pop().is_some() {
            self.w.pop();
            self.d.pop();
            for row in &mut self.d {
                row.truncate(self.steps.len());
            }
            self.expansion.pop();
        }
    }

    /// Sets the coefficients of the newest step.
    pub(crate) fn set_coef(&mut self, labeled: Vec<usize>, coef: Vec<T>) {
        let last = self.steps.last_mut().expect("a stored step");
        last.labeled = labeled;
        last.coef = coef;
    }

    /// `k_{tau+1}(X_tau, X_b)` for the newest step `tau`.
    pub fn posterior_block(&self, b: usize) -> DMatrix<T> {
        let tau = self.steps.len() - 1;
        let dtb = &self.d[tau][b];
        match &self.w[tau] {
            Some(w) => dtb - &self.d[tau][tau] * (w * dtb),
            None => dtb.clone(),
        }
    }

    /// `sum_{b < tau} k_{tau+1}(X_tau, X_b) c_b` for the newest step `tau`.
    pub fn posterior_prior_values(&self) -> DVector<T> {
        let tau = self.steps.len() - 1;
        let mut v = DVector::zeros(self.steps[tau].x.nrows());
        for b in 0..tau {
            v += &self.d[tau][b] * self.full_coef(b);
        }
        match &self.w[tau] {
            Some(w) => {
                let corr = &self.d[tau][tau] * (w * &v);
                v - corr
            }
            None => v,
        }
    }

    fn full_coef(&self, b: usize) -> DVector<T> {
        let s = &self.steps[b];
        let mut c = DVector::zeros(s.x.nrows());
        for (&i, v) in s.labeled.iter().zip(&s.coef) {
            c[i] = *v;
        }
        c
    }

    /// Pushes the stored coefficients through every regularization step so
    /// decision values need only base-kernel evaluations.
    pub(crate) fn refresh_expansion(&mut self) {
        let mut c: Vec<DVector<T>> = (0..self.steps.len()).map(|b| self.full_coef(b)).collect();
        for d in (0..self.steps.len()).rev() {
            if let Some(w) = &self.w[d] {
                let mut v = DVector::zeros(self.steps[d].x.nrows());
                for (b, cb) in c.iter().enumerate() {
                    v += &self.d[d][b] * cb;
                }
                c[d] -= w * v;
            }
        }
        self.expansion = c;
    }

    /// `sum_t k_tau(A, X_t) c_t` under the newest kernel, without bias.
    pub fn decision(&self, a: &FeatureMatrix<T>) -> Result<Vec<T>> {
        let mut out = DVector::zeros(a.nrows());
        for (s, e) in self.steps.iter().zip(&self.expansion) {
            out += gram(&self.kernel, a, &s.x)?.into_inner() * e;
        }
        Ok(out.iter().copied().collect())
    }

    /// `k_depth(A, B)`: the base kernel after the first `depth` steps.
    pub fn regularized_gram(&self, a: &FeatureMatrix<T>, b: &FeatureMatrix<T>, depth: usize) -> Result<DMatrix<T>> {
        if depth > self.steps.len() {
            return Err(Error::param(format!("depth {depth} exceeds {} stored steps", self.steps.len())));
        }
        let mut g = gram(&self.kernel, a, b)?.into_inner();
        let mut ra = Vec::with_capacity(depth);
        let mut rb = Vec::with_capacity(depth);
        for s in &self.steps[..depth] {
            ra.push(gram(&self.kernel, a, &s.x)?.into_inner());
            rb.push(gram(&self.kernel, b, &s.x)?.into_inner());
        }
        for d in 0..depth {
            let Some(w) = &self.w[d] else { continue };
            let aw = &ra[d] * w;
            let bw = &rb[d] * w;
            g -= &aw * rb[d].transpose();
            for x in (d + 1)..depth {
                let dx = &self.d[d][x];
                ra[x] -= &aw * dx;
                rb[x] -= &bw * dx;
            }
        }
        Ok(g)
    }
}

/// `W = (I + M K)^{-1} M`, symmetrized.
pub(crate) fn solve_w<T: Real>(m: &DMatrix<T>, k: &DMatrix<T>, step: usize) -> Result<DMatrix<T>> {
    let n = m.nrows();
    let sys = DMatrix::identity(n, n) + m * k;
    let ill = |condition| Error::IllConditioned { step, condition };
    let (inv, cond) = inverse_with_condition(&sys).ok_or(ill(f64::INFINITY))?;
    if !(cond <= MAX_CONDITION) {
        return Err(ill(cond));
    }
    let mut w = inv * m;
    symmetrize(&mut w);
    Ok(w)
}

/// Free-function form of [`ExactState::regularized_gram`].
pub fn regularized_gram_exact<T: Real>(
    state: &ExactState<T>,
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
    depth: usize,
) -> Result<DMatrix<T>> {
    state.regularized_gram(a, b, depth)
}
