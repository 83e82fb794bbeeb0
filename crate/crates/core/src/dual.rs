//! Log-barrier dual for one time point, and the L1 bias fit.
//!
//! The problem is
//!
//! ```text
//! maximize   -1/2 a^T Q a + a^T w + sum_i log(1 - a_i / C)
//! subject to y^T a = 0,  a >= 0
//! ```
//!
//! solved by pair-coordinate ascent: each iteration picks the maximally
//! KKT-violating pair `(i, j)`, moves along `a_i += y_i s, a_j -= y_j s`
//! (which keeps `y^T a` fixed) and maximizes the strictly concave 1-D
//! restriction with a bracketed Newton iteration. Iterates stay within
//! `[0, C (1 - 1e-8)]`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::linalg::median;
use crate::scalar::Real;

/// Relative cap on multipliers: `alpha <= C * (1 - CAP_MARGIN)`.
pub const CAP_MARGIN: f64 = 1e-8;
/// Multipliers at or below `SV_THRESHOLD * C` are treated as zero.
pub const SV_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct DualProblem<T: Real> {
    q: DMatrix<T>,
    w: Vec<T>,
    y: Vec<T>,
    c: T,
}

impl<T: Real> DualProblem<T> {
    /// `q` must already include the labels (`Q = Y K Y`).
    pub fn new(q: DMatrix<T>, w: Vec<T>, y: Vec<T>, c: T) -> Result<Self> {
        let n = w.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "dual Q",
                expected: n,
                found: q.nrows().max(q.ncols()),
            });
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                context: "dual labels",
                expected: n,
                found: y.len(),
            });
        }
        if !c.is_finite_real() || c <= T::zero() {
            return Err(Error::param(format!("C must be positive, got {c}")));
        }
        if y.iter().any(|v| *v != T::one() && *v != -T::one()) {
            return Err(Error::input("dual labels must be +1 or -1"));
        }
        if q.iter().chain(w.iter()).any(|v| !v.is_finite_real()) {
            return Err(Error::NonFinite("dual problem"));
        }
        let tol = T::lit(1e-10) * q.amax().max(T::one());
        if crate::linalg::max_abs_asymmetry(&q) > tol {
            return Err(Error::input("dual Q must be symmetric"));
        }
        Ok(Self { q, w, y, c })
    }

    /// Folds labels into a kernel matrix: `Q_ij = y_i y_j K_ij`.
    pub fn from_gram(k: &GramMatrix<T>, y: &[T], w: Vec<T>, c: T) -> Result<Self> {
        let km = k.as_matrix();
        if km.nrows() != y.len() || km.ncols() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "dual gram",
                expected: y.len(),
                found: km.nrows(),
            });
        }
        let q = DMatrix::from_fn(y.len(), y.len(), |i, j| y[i] * y[j] * km[(i, j)]);
        Self::new(q, w, y.to_vec(), c)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn w(&self) -> &[T] {
        &self.w
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn c(&self) -> T {
        self.c
    }

    /// Objective value; `-inf` outside the barrier's domain.
    pub fn objective(&self, alpha: &[T]) -> T {
        let n = self.len();
        let mut quad = T::zero();
        for i in 0..n {
            let mut row = T::zero();
            for j in 0..n {
                row += self.q[(i, j)] * alpha[j];
            }
            quad += alpha[i] * row;
        }
        self.objective_with_qa(alpha, quad)
    }

    fn objective_with_qa(&self, alpha: &[T], a_q_a: T) -> T {
        let mut f = -T::lit(0.5) * a_q_a;
        for (a, w) in alpha.iter().zip(&self.w) {
            if *a >= self.c {
                return T::lit(f64::NEG_INFINITY);
            }
            f += *a * *w + (T::one() - *a / self.c).ln();
        }
        f
    }

    /// Gradient of the objective.
    pub fn gradient(&self, alpha: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut qa = T::zero();
                for j in 0..n {
                    qa += self.q[(i, j)] * alpha[j];
                }
                self.w[i] - qa - T::one() / (self.c - alpha[i])
            })
            .collect()
    }

    /// Max-violating-pair gap `max_{I_up} y g - min_{I_low} y g`, clamped at 0.
    pub fn kkt_residual(&self, alpha: &[T]) -> T {
        let g = self.gradient(alpha);
        let cap = self.cap();
        match violating_pair(&self.y, alpha, &g, cap) {
            Some((_, _, gap)) => gap.max(T::zero()),
            None => T::zero(),
        }
    }

    fn cap(&self) -> T {
        self.c * (T::one() - T::lit(CAP_MARGIN))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions<T: Real> {
    pub tol: T,
    pub max_iter: usize,
    /// Keep the objective after every pair update.
    pub record_trace: bool,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-6),
            max_iter: 100_000,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Iteration budget exhausted; the solution holds the last (best) iterate.
    MaxIterations,
    /// Only one class present, so `alpha = 0` is the only feasible point.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution<T: Real> {
    pub alpha: Vec<T>,
    /// Left at zero by [`solve_dual`]; the caller fits it separately.
    pub bias: T,
    pub objective: T,
    pub kkt_residual: T,
    pub iterations: usize,
    pub status: SolveStatus,
    pub trace: Vec<T>,
}

impl<T: Real> DualSolution<T> {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Indices with `alpha_i > SV_THRESHOLD * C`.
    pub fn support(&self, c: T) -> Vec<usize> {
        let thr = T::lit(SV_THRESHOLD) * c;
        (0..self.alpha.len()).filter(|&i| self.alpha[i] > thr).collect()
    }
}

pub fn solve_dual<T: Real>(problem: &DualProblem<T>, opts: &SolverOptions<T>) -> DualSolution<T> {
    let n = problem.len();
    let mut alpha = vec![T::zero(); n];
    let has_pos = problem.y.iter().any(|v| *v > T::zero());
    let has_neg = problem.y.iter().any(|v| *v < T::zero());
    if !(has_pos && has_neg) {
        return DualSolution {
            objective: problem.objective(&alpha),
            alpha,
            bias: T::zero(),
            kkt_residual: T::zero(),
            iterations: 0,
            status: SolveStatus::Degenerate,
            trace: Vec::new(),
        };
    }

    let (q, y, w, c) = (&problem.q, &problem.y, &problem.w, problem.c);
    let cap = problem.cap();
    let mut qa = vec![T::zero(); n];
    let mut grad: Vec<T> = (0..n).map(|i| w[i] - T::one() / c).collect();
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(problem.objective_with_qa(&alpha, T::zero()));
    }

    let mut iterations = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut residual;
    loop {
        let pair = violating_pair(y, &alpha, &grad, cap);
        let Some((i, j, gap)) = pair else {
            residual = T::zero();
            status = SolveStatus::Converged;
            break;
        };
        residual = gap.max(T::zero());
        if gap <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let step = pair_step(problem, &alpha, &qa, i, j, cap);
        if step <= T::zero() {
            // Numerically stuck: the bracketing interval collapsed.
            break;
        }
        let (di, dj) = (y[i] * step, -y[j] * step);
        let ai = snap(alpha[i] + di, cap);
        let aj = snap(alpha[j] + dj, cap);
        let (di, dj) = (ai - alpha[i], aj - alpha[j]);
        alpha[i] = ai;
        alpha[j] = aj;
        for k in 0..n {
            qa[k] += q[(k, i)] * di + q[(k, j)] * dj;
            grad[k] = w[k] - qa[k] - T::one() / (c - alpha[k]);
        }
        if opts.record_trace {
            let aqa = alpha.iter().zip(&qa).map(|(a, b)| *a * *b).sum();
            trace.push(problem.objective_with_qa(&alpha, aqa));
        }
    }

    let aqa = alpha.iter().zip(&qa).map(|(a, b)| *a * *b).sum();
    DualSolution {
        objective: problem.objective_with_qa(&alpha, aqa),
        alpha,
        bias: T::zero(),
        kkt_residual: residual,
        iterations,
        status,
        trace,
    }
}

/// Snaps values within rounding of the bounds onto them.
fn snap<T: Real>(a: T, cap: T) -> T {
    let eps = T::default_epsilon() * cap * T::lit(4.0);
    if a <= eps {
        T::zero()
    } else if a >= cap {
        cap
    } else {
        a
    }
}

/// Returns `(i, j, gap)` for the maximal violating pair, or `None` when one
/// of the index sets is empty.
fn violating_pair<T: Real>(y: &[T], alpha: &[T], grad: &[T], cap: T) -> Option<(usize, usize, T)> {
    let mut up: Option<(usize, T)> = None;
    let mut low: Option<(usize, T)> = None;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        let pos = y[t] > T::zero();
        let can_up = if pos { alpha[t] < cap } else { alpha[t] > T::zero() };
        let can_low = if pos { alpha[t] > T::zero() } else { alpha[t] < cap };
        if can_up && up.is_none_or(|(_, v)| yg > v) {
            up = Some((t, yg));
        }
        if can_low && low.is_none_or(|(_, v)| yg < v) {
            low = Some((t, yg));
        }
    }
    let ((i, gi), (j, gj)) = (up?, low?);
    Some((i, j, gi - gj))
}

/// Maximizes the objective along the pair direction; returns the step size.
fn pair_step<T: Real>(p: &DualProblem<T>, alpha: &[T], qa: &[T], i: usize, j: usize, cap: T) -> T {
    let (y, q, w, c) = (&p.y, &p.q, &p.w, p.c);
    let room_i = if y[i] > T::zero() { cap - alpha[i] } else { alpha[i] };
    let room_j = if y[j] > T::zero() { alpha[j] } else { cap - alpha[j] };
    let s_max = room_i.min(room_j);
    if s_max <= T::zero() {
        return T::zero();
    }
    // Curvature of the quadratic part along d = y_i e_i - y_j e_j.
    let eta = (q[(i, i)] + q[(j, j)] - T::lit(2.0) * y[i] * y[j] * q[(i, j)]).max(T::zero());
    let qd_i = q[(i, i)] * y[i] - q[(i, j)] * y[j];
    let qd_j = q[(j, i)] * y[i] - q[(j, j)] * y[j];
    let deriv = |s: T| -> (T, T) {
        let ai = alpha[i] + y[i] * s;
        let aj = alpha[j] - y[j] * s;
        let bi = T::one() / (c - ai);
        let bj = T::one() / (c - aj);
        let gi = w[i] - qa[i] - s * qd_i - bi;
        let gj = w[j] - qa[j] - s * qd_j - bj;
        (y[i] * gi - y[j] * gj, -eta - bi * bi - bj * bj)
    };

    let (d_hi, _) = deriv(s_max);
    if d_hi >= T::zero() {
        return s_max;
    }
    let (mut lo, mut hi) = (T::zero(), s_max);
    let (d0, h0) = deriv(lo);
    if d0 <= T::zero() {
        return T::zero();
    }
    let mut s = (lo - d0 / h0).min(hi);
    for _ in 0..200 {
        if !(s > lo && s < hi) {
            s = (lo + hi) * T::lit(0.5);
        }
        let (d, h) = deriv(s);
        if d > T::zero() {
            lo = s;
        } else if d < T::zero() {
            hi = s;
        } else {
            return s;
        }
        if hi - lo <= T::default_epsilon() * hi.max(T::lit(f64::MIN_POSITIVE)) * T::lit(4.0) {
            break;
        }
        s = s - d / h;
    }
    lo
}

/// Result of the L1 bias fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasFit<T: Real> {
    pub value: T,
    /// No residuals were supplied; `value` is 0 and carries no information.
    pub empty: bool,
}

/// `argmin_b sum |r_s - b|`: the median, with the midpoint for even counts.
pub fn fit_bias<T: Real>(residuals: &[T]) -> BiasFit<T> {
    match median(residuals) {
        Some(value) => BiasFit { value, empty: false },
        None => {
            log::warn!("bias fit on an empty support set; returning 0");
            BiasFit {
                value: T::zero(),
                empty: true,
            }
        }
    }
}
