//! Reference computations for the test suites.
//!
//! Nothing here depends on the library under test: each routine is a
//! different (slower, more literal) route to a quantity the library
//! computes, so agreement between the two is meaningful.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Soft-margin SVM dual `max -1/2 a'Qa + w'a, y'a = 0, 0 <= a <= c`
/// by accelerated projected gradient with an exact projection.
pub fn box_dual_projected_gradient(q: &DMatrix<f64>, w: &[f64], y: &[f64], c: f64, iters: usize) -> Vec<f64> {
    let n = w.len();
    let lip = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lip;
    let wv = DVector::from_column_slice(w);
    let mut x = DVector::zeros(n);
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = &wv - q * &z;
        let cand: Vec<f64> = (&z + grad * step).iter().copied().collect();
        let x_next = DVector::from_vec(project_box_hyperplane(&cand, y, c));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
        x = x_next;
        t = t_next;
    }
    x.iter().copied().collect()
}

/// Euclidean projection onto `{0 <= a <= c, y'a = 0}`.
pub fn project_box_hyperplane(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - nu * yi).clamp(0.0, c)).collect() };
    let balance = |nu: f64| -> f64 { at(nu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Exact box-constrained dual by enumerating every {0, free, c} pattern.
/// Only for `n <= 10`.
pub fn box_dual_enumerate(q: &DMatrix<f64>, w: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let n = w.len();
    assert!(n <= 10, "enumeration oracle is exponential");
    let objective = |a: &[f64]| -> f64 {
        let av = DVector::from_column_slice(a);
        -0.5 * av.dot(&(q * &av)) + a.iter().zip(w).map(|(x, wi)| x * wi).sum::<f64>()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut state = vec![0u8; n];
    loop {
        if let Some(a) = solve_pattern(q, w, y, c, &state) {
            let f = objective(&a);
            if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
                best = Some((f, a));
            }
        }
        let mut k = 0;
        while k < n {
            state[k] += 1;
            if state[k] < 3 {
                break;
            }
            state[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    best.expect("alpha = 0 is always a feasible pattern").1
}

fn solve_pattern(q: &DMatrix<f64>, w: &[f64], y: &[f64], c: f64, state: &[u8]) -> Option<Vec<f64>> {
    let n = w.len();
    let free: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
    let mut a = vec![0.0; n];
    for i in 0..n {
        if state[i] == 2 {
            a[i] = c;
        }
    }
    let m = free.len();
    if m > 0 {
        // [Q_FF  -y_F] [a_F]   [w_F - Q_F,U c]
        // [y_F'   0  ] [nu ] = [-y_U' c      ]
        let mut sys = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                sys[(r, s)] = q[(i, j)];
            }
            sys[(r, m)] = -y[i];
            sys[(m, r)] = y[i];
            rhs[r] = w[i] - (0..n).filter(|&j| state[j] == 2).map(|j| q[(i, j)] * c).sum::<f64>();
        }
        rhs[m] = -(0..n).filter(|&j| state[j] == 2).map(|j| y[j] * c).sum::<f64>();
        let sol = sys.lu().solve(&rhs)?;
        for (r, &i) in free.iter().enumerate() {
            if !(sol[r] > -1e-12 && sol[r] < c + 1e-12) {
                return None;
            }
            a[i] = sol[r].clamp(0.0, c);
        }
    }
    let bal: f64 = a.iter().zip(y).map(|(x, yi)| x * yi).sum();
    if bal.abs() > 1e-9 * (1.0 + c) {
        return None;
    }
    Some(a)
}

/// Sums `X_t' c_t` over steps: the explicit feature-space posterior mean.
pub fn feature_space_mean(steps: &[(DMatrix<f64>, Vec<f64>)], p: usize) -> DVector<f64> {
    let mut theta = DVector::zeros(p);
    for (x, coef) in steps {
        theta += x.transpose() * DVector::from_column_slice(coef);
    }
    theta
}

/// `A G^{-1} B'` with `G = I + sum_t X_t' M_t X_t` assembled and inverted
/// explicitly (linear base kernel, samples as rows).
pub fn explicit_regularized_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, steps: &[(DMatrix<f64>, DMatrix<f64>)]) -> DMatrix<f64> {
    let p = a.ncols();
    let mut g = DMatrix::<f64>::identity(p, p);
    for (x, m) in steps {
        g += x.transpose() * m * x;
    }
    let ginv = g.try_inverse().expect("G is positive definite");
    a * ginv * b.transpose()
}

/// Literal recursive kernel `k_d = k_{d-1} - k_{d-1}(., X)((M + ridge I)^{-1} + k_{d-1}(X, X))^{-1} k_{d-1}(X, .)`
/// with a linear base kernel, evaluated by naive recursion.
pub fn literal_recursive_gram(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    steps: &[(DMatrix<f64>, DMatrix<f64>)],
    ridge: f64,
) -> DMatrix<f64> {
    fn k(depth: usize, a: &DMatrix<f64>, b: &DMatrix<f64>, steps: &[(DMatrix<f64>, DMatrix<f64>)], ridge: f64) -> DMatrix<f64> {
        if depth == 0 {
            return a * b.transpose();
        }
        let (x, m) = &steps[depth - 1];
        let n = x.nrows();
        let m_inv = (m + DMatrix::identity(n, n) * ridge).try_inverse().expect("ridged M invertible");
        let kxx = k(depth - 1, x, x, steps, ridge);
        let inner = (m_inv + kxx).try_inverse().expect("inner system invertible");
        k(depth - 1, a, b, steps, ridge) - k(depth - 1, a, x, steps, ridge) * inner * k(depth - 1, x, b, steps, ridge)
    }
    k(steps.len(), a, b, steps, ridge)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Minimizes `sum |r - b|` over a grid with the given step on `[min r, max r]`.
pub fn l1_grid_minimizer(residuals: &[f64], step: f64) -> f64 {
    let lo = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cost = |b: f64| residuals.iter().map(|r| (r - b).abs()).sum::<f64>();
    let steps = ((hi - lo) / step).ceil() as usize;
    let mut best = (cost(lo), lo);
    for k in 1..=steps {
        let b = (lo + k as f64 * step).min(hi);
        let cb = cost(b);
        if cb < best.0 {
            best = (cb, b);
        }
    }
    best.1
}

/// Random point with `0 <= a < c` and `y'a = 0`.
pub fn random_feasible_point<R: Rng>(y: &[f64], c: f64, rng: &mut R) -> Vec<f64> {
    let mut a: Vec<f64> = y.iter().map(|_| rng.random::<f64>() * c * 0.999_999).collect();
    let pos: f64 = a.iter().zip(y).filter(|(_, yi)| **yi > 0.0).map(|(x, _)| x).sum();
    let neg: f64 = a.iter().zip(y).filter(|(_, yi)| **yi < 0.0).map(|(x, _)| x).sum();
    for (x, yi) in a.iter_mut().zip(y) {
        if *yi > 0.0 && pos > neg {
            *x *= neg / pos;
        } else if *yi < 0.0 && neg > pos {
            *x *= pos / neg;
        }
    }
    a
}

/// Two isotropic Gaussian blobs in 2-D centered at `(+-sep, +-sep)`,
/// alternating labels `+1, -1, ...`. Rows are samples.
pub fn gaussian_blobs<R: Rng>(n: usize, sep: f64, sd: f64, rng: &mut R) -> (DMatrix<f64>, Vec<f64>) {
    let mut x = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..2 {
            x[(i, j)] = label * sep + sd * standard_normal(rng);
        }
        y.push(label);
    }
    (x, y)
}

/// Box-Muller draw.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random::<f64>();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Root of a decreasing function on `[lo, hi]` by bisection.
pub fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}


/// Writes Isolet-shaped files: 120 training speakers (two A..Z cycles each,
/// one row removed from a non-leading speaker of groups 21 and 23) and 30
/// test speakers with one row removed, so 6238 and 1559 rows. Each letter
/// has its own mean; speakers add an offset and rows add noise.
pub fn write_synthetic_isolet(dir: &std::path::Path, seed: u64) -> std::io::Result<(std::path::PathBuf, std::path::PathBuf)> {
    use std::fmt::Write as _;
    use rand::SeedableRng;
    const P: usize = 617;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..26).map(|_| (0..P).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
    let speaker = |rng: &mut rand_chacha::ChaCha8Rng, skip: Option<usize>| {
        let offset: Vec<f64> = (0..P).map(|_| 0.15 * standard_normal(rng)).collect();
        let mut out = String::new();
        for r in 0..52 {
            let class = r % 26;
            let row: Vec<f64> = (0..P)
                .map(|j| (means[class][j] + offset[j] + 0.6 * standard_normal(rng)).clamp(-1.0, 1.0))
                .collect();
            if Some(r) == skip {
                continue;
            }
            for v in row {
                let _ = write!(out, "{v:.4},");
            }
            let _ = writeln!(out, "{}.", class + 1);
        }
        out
    };
    let mut train = String::new();
    for s in 0..120 {
        // Groups 21 and 23 (1-based) lose one utterance of their third speaker.
        let skip = if s == 20 * 5 + 2 || s == 22 * 5 + 2 { Some(30) } else { None };
        train.push_str(&speaker(&mut rng, skip));
    }
    let mut test = String::new();
    for s in 0..30 {
        test.push_str(&speaker(&mut rng, if s == 29 { Some(51) } else { None }));
    }
    let (a, b) = (dir.join("isolet1+2+3+4.data"), dir.join("isolet5.data"));
    std::fs::write(&a, train)?;
    std::fs::write(&b, test)?;
    Ok((a, b))
}
