//! Spectral approximation of the accumulated Laplacian prior.
//!
//! Instead of replaying every batch, the prior precision is summarized by
//! running means of each batch's right singular vectors `V`, singular values
//! `s` and Laplacian eigenvalues `d`, weighted by `B = sum_t 2 beta_t`:
//!
//! ```text
//! k~(a, b) = k(a, b) - k(a, V) (diag(s^2 d)^{-1} / B + k(V, V))^{-1} k(V, b)
//! ```
//!
//! where the columns of `V` act as pseudo-samples.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::LaplacianMatrix;
use crate::kernel::{gram, FeatureMatrix, KernelSpec};
use crate::linalg::{sym_eigenvalues, symmetrize};
use crate::scalar::Real;

/// Entries of `s^2 d` below this are treated as carrying no energy.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxState<T: Real> {
    /// `p x r`, columns ordered by descending singular value.
    pub v_bar: DMatrix<T>,
    pub s_bar: Vec<T>,
    /// Laplacian eigenvalues, descending, paired with `s_bar` by rank.
    pub d_bar: Vec<T>,
    /// `sum_t 2 beta_t`.
    pub b: T,
    pub count: usize,
    /// Set once batches of different rank had to be truncated.
    pub truncated: bool,
}

impl<T: Real> ApproxState<T> {
    pub fn new(p: usize) -> Self {
        Self {
            v_bar: DMatrix::zeros(p, 0),
            s_bar: Vec::new(),
            d_bar: Vec::new(),
            b: T::zero(),
            count: 0,
            truncated: false,
        }
    }

    pub fn rank(&self) -> usize {
        self.s_bar.len()
    }

    pub fn dim(&self) -> usize {
        self.v_bar.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.s_bar.len();
        if self.v_bar.ncols() != r || self.d_bar.len() != r {
            return Err(Error::Schema(format!(
                "approximate state arrays disagree on rank ({}, {r}, {})",
                self.v_bar.ncols(),
                self.d_bar.len()
            )));
        }
        if r > self.v_bar.nrows() {
            return Err(Error::Schema("approximate rank exceeds feature dimension".into()));
        }
        let finite = |v: &T| v.is_finite_real();
        if !self.v_bar.iter().all(finite)
            || !self.s_bar.iter().chain(&self.d_bar).all(|v| finite(v) && *v >= T::zero())
            || !finite(&self.b)
            || self.b < T::zero()
        {
            return Err(Error::Schema("approximate state holds invalid values".into()));
        }
        Ok(())
    }
}

/// Top-`r` right singular vectors and values of `x` (descending) and the
/// top-`r` eigenvalues of `l` (descending). `r` defaults to `min(n, p)`.
pub fn batch_spectra<T: Real>(
    x: &FeatureMatrix<T>,
    l: &LaplacianMatrix<T>,
    rank_cap: Option<usize>,
) -> Result<(DMatrix<T>, Vec<T>, Vec<T>)> {
    let (n, p) = (x.nrows(), x.ncols());
    if l.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "Laplacian for spectra",
            expected: n,
            found: l.dim(),
        });
    }
    let full = n.min(p);
    let r = rank_cap.map_or(full, |c| c.min(full));
    let svd = x.as_matrix().clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
            .then(a.cmp(&b))
    });
    let v = DMatrix::from_fn(p, r, |i, j| vt[(order[j], i)]);
    let s = order[..r].iter().map(|&k| svd.singular_values[k]).collect();
    let mut d = sym_eigenvalues(&l.values);
    d.reverse();
    d.truncate(r);
    let d = d.into_iter().map(|v| v.max(T::zero())).collect();
    Ok((v, s, d))
}

/// Folds one batch's spectra into the running means.
///
/// Each column of `v` is sign-aligned first: against the current mean, or on
/// the first update so that its largest-magnitude entry is positive.
pub fn update_spectra<T: Real>(state: &mut ApproxState<T>, v: &DMatrix<T>, s: &[T], d: &[T]) -> Result<()> {
    if v.nrows() != state.dim() {
        return Err(Error::DimensionMismatch {
            context: "singular vectors",
            expected: state.dim(),
            found: v.nrows(),
        });
    }
    let mut r = v.ncols().min(s.len()).min(d.len());
    if state.count > 0 {
        if r != state.rank() {
            state.truncated = true;
            log::warn!("spectral rank changed from {} to {r}; truncating", state.rank());
        }
        r = r.min(state.rank());
        state.v_bar = state.v_bar.columns(0, r).into_owned();
        state.s_bar.truncate(r);
        state.d_bar.truncate(r);
    }
    let mut v = v.columns(0, r).into_owned();
    for j in 0..r {
        let flip = if state.count == 0 {
            let col = v.column(j);
            let mut best = 0;
            for i in 1..col.len() {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            !col.is_empty() && col[best] < T::zero()
        } else {
            v.column(j).dot(&state.v_bar.column(j)) < T::zero()
        };
        if flip {
            v.column_mut(j).neg_mut();
        }
    }
    state.count += 1;
    let inv = T::one() / T::from_usize(state.count).unwrap();
    if state.count == 1 {
        state.v_bar = v;
        state.s_bar = s[..r].to_vec();
        state.d_bar = d[..r].to_vec();
    } else {
        state.v_bar += (v - &state.v_bar) * inv;
        for j in 0..r {
            let (sj, dj) = (state.s_bar[j], state.d_bar[j]);
            state.s_bar[j] = sj + (s[j] - sj) * inv;
            state.d_bar[j] = dj + (d[j] - dj) * inv;
        }
    }
    Ok(())
}

/// Running-mean update with one batch and its Laplacian; `B += 2 beta`.
pub fn approx_update<T: Real>(
    state: &mut ApproxState<T>,
    x: &FeatureMatrix<T>,
    l: &LaplacianMatrix<T>,
    beta: T,
    rank_cap: Option<usize>,
) -> Result<()> {
    if !beta.is_finite_real() || beta < T::zero() {
        return Err(Error::param("beta must be nonnegative"));
    }
    let (v, s, d) = batch_spectra(x, l, rank_cap)?;
    update_spectra(state, &v, &s, &d)?;
    state.b += T::lit(2.0) * beta;
    Ok(())
}

/// The spectral prior kernel `k~(A, B)`.
pub fn approx_prior_gram<T: Real>(
    state: &ApproxState<T>,
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
    base: &KernelSpec<T>,
) -> Result<DMatrix<T>> {
    match SpectralFactor::new(state, base)? {
        Some(f) => f.gram(base, a, b),
        None => Ok(gram(base, a, b)?.into_inner()),
    }
}

/// Factored inner system of the spectral prior, reusable across evaluations.
#[derive(Clone, Debug)]
pub struct SpectralFactor<T: Real> {
    pseudo: FeatureMatrix<T>,
    inner: DMatrix<T>,
    chol: Option<nalgebra::Cholesky<T, nalgebra::Dyn>>,
}

impl<T: Real> SpectralFactor<T> {
    /// `None` when the state carries no regularization (the prior is the base kernel).
    pub fn new(state: &ApproxState<T>, base: &KernelSpec<T>) -> Result<Option<Self>> {
        if state.b <= T::zero() || state.count == 0 || state.rank() == 0 {
            return Ok(None);
        }
        let pseudo = FeatureMatrix::new(state.v_bar.transpose())?;
        let mut inner = gram(base, &pseudo, &pseudo)?.into_inner();
        let floor = T::lit(SPECTRAL_FLOOR);
        for j in 0..state.rank() {
            let e = state.s_bar[j] * state.s_bar[j] * state.d_bar[j];
            let inv = if e < floor { T::lit(1.0 / SPECTRAL_FLOOR) } else { T::one() / e };
            inner[(j, j)] += inv / state.b;
        }
        symmetrize(&mut inner);
        let chol = inner.clone().cholesky();
        Ok(Some(Self { pseudo, inner, chol }))
    }

    fn solve(&self, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
        if let Some(ch) = &self.chol {
            return Ok(ch.solve(rhs));
        }
        self.inner.clone().lu().solve(rhs).ok_or(Error::IllConditioned {
            step: 0,
            condition: f64::INFINITY,
        })
    }

    fn check(&self, a: &FeatureMatrix<T>) -> Result<()> {
        if self.pseudo.ncols() != a.ncols() {
            return Err(Error::DimensionMismatch {
                context: "approximate prior features",
                expected: self.pseudo.ncols(),
                found: a.ncols(),
            });
        }
        Ok(())
    }

    pub fn gram(&self, base: &KernelSpec<T>, a: &FeatureMatrix<T>, b: &FeatureMatrix<T>) -> Result<DMatrix<T>> {
        self.check(a)?;
        let k = gram(base, a, b)?.into_inner();
        let kav = gram(base, a, &self.pseudo)?.into_inner();
        let kvb = gram(base, &self.pseudo, b)?.into_inner();
        Ok(k - kav * self.solve(&kvb)?)
    }

    /// `sum_t k~(A, S_t) c_t` with a single correction term.
    pub fn expansion<'a>(
        &self,
        base: &KernelSpec<T>,
        a: &FeatureMatrix<T>,
        terms: impl IntoIterator<Item = (&'a FeatureMatrix<T>, &'a [T])>,
    ) -> Result<DVector<T>>
    where
        T: 'a,
    {
        self.check(a)?;
        let mut direct = DVector::zeros(a.nrows());
        let mut through = DVector::zeros(self.pseudo.nrows());
        for (s, c) in terms {
            let c = DVector::from_column_slice(c);
            direct += gram(base, a, s)?.into_inner() * &c;
            through += gram(base, &self.pseudo, s)?.into_inner() * &c;
        }
        let kav = gram(base, a, &self.pseudo)?.into_inner();
        let corr = self.solve(&DMatrix::from_column_slice(through.len(), 1, through.as_slice()))?;
        Ok(direct - kav * corr.column(0))
    }
}

/// Prior kernel in effect at one time point of the approximate model.
#[derive(Clone, Debug, PartialEq)]
pub enum PriorKernel<T: Real> {
    /// First time point.
    Base,
    /// Second time point: the base kernel after the first batch's exact step.
    ExactOne { x: FeatureMatrix<T>, w: Option<DMatrix<T>> },
    /// Later time points.
    Spectral(ApproxState<T>),
}

impl<T: Real> PriorKernel<T> {
    pub fn eval(&self, base: &KernelSpec<T>, a: &FeatureMatrix<T>, b: &FeatureMatrix<T>) -> Result<DMatrix<T>> {
        match self {
            PriorKernel::Base => Ok(gram(base, a, b)?.into_inner()),
            PriorKernel::ExactOne { w: None, .. } => Ok(gram(base, a, b)?.into_inner()),
            PriorKernel::ExactOne { x, w: Some(w) } => {
                let kax = gram(base, a, x)?.into_inner();
                let kxb = gram(base, x, b)?.into_inner();
                Ok(gram(base, a, b)?.into_inner() - kax * (w * kxb))
            }
            PriorKernel::Spectral(s) => approx_prior_gram(s, a, b, base),
        }
    }

    /// `P(A, S) c` without materializing more than one Gram block.
    pub fn apply(&self, base: &KernelSpec<T>, a: &FeatureMatrix<T>, s: &FeatureMatrix<T>, c: &DVector<T>) -> Result<DVector<T>> {
        if s.nrows() == 0 {
            return Ok(DVector::zeros(a.nrows()));
        }
        Ok(self.eval(base, a, s)? * c)
    }
}
