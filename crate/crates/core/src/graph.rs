//! k-nearest-neighbor heat-kernel graphs and normalized graph Laplacians.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::FeatureMatrix;
use crate::scalar::Real;

/// Symmetric nonnegative edge weights with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix<T: Real> {
    pub values: DMatrix<T>,
    pub heat_width: Option<T>,
    pub k_neighbors: Option<usize>,
}

impl<T: Real> WeightMatrix<T> {
    /// Wraps a user-supplied weight matrix after checking symmetry,
    /// nonnegativity and the zero diagonal.
    pub fn from_dense(values: DMatrix<T>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::input("weight matrix must be square"));
        }
        let n = values.nrows();
        let scale = values.amax().max(T::one());
        for i in 0..n {
            if values[(i, i)] != T::zero() {
                return Err(Error::input(format!("weight matrix diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let w = values[(i, j)];
                if !w.is_finite_real() {
                    return Err(Error::NonFinite("weight matrix"));
                }
                if w < T::zero() {
                    return Err(Error::input(format!("negative weight at ({i}, {j})")));
                }
                if (w - values[(j, i)]).abs() > T::lit(1e-12) * scale {
                    return Err(Error::input(format!("weight matrix asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            values,
            heat_width: None,
            k_neighbors: None,
        })
    }
}

/// Normalized Laplacian `I - D^{-1/2} W D^{-1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianMatrix<T: Real> {
    pub values: DMatrix<T>,
    pub heat_width: Option<T>,
    pub k_neighbors: Option<usize>,
}

impl<T: Real> LaplacianMatrix<T> {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// Union-symmetrized kNN graph with heat weights `exp(-|xi - xj|^2 / heat_width)`.
///
/// `j` is linked to `i` when either is among the other's `k` nearest
/// neighbors. Ties at equal distance go to the lower sample index.
pub fn knn_heat_weights<T: Real>(
    x: &FeatureMatrix<T>,
    k: usize,
    heat_width: T,
) -> Result<WeightMatrix<T>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::input(format!("kNN graph needs at least 2 samples, got {n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::param(format!("k = {k} must be in 1..={}", n - 1)));
    }
    if !heat_width.is_finite_real() || heat_width <= T::zero() {
        return Err(Error::param("heat width must be positive"));
    }
    let d2 = squared_distances(x);
    let mut linked = vec![false; n * n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| {
            d2[(i, a)]
                .partial_cmp(&d2[(i, b)])
                .expect("finite distances")
                .then(a.cmp(&b))
        });
        for &j in &order[..k] {
            linked[i * n + j] = true;
            linked[j * n + i] = true;
        }
    }
    let values = DMatrix::from_fn(n, n, |i, j| {
        if linked[i * n + j] {
            (-d2[(i, j)] / heat_width).exp()
        } else {
            T::zero()
        }
    });
    Ok(WeightMatrix {
        values,
        heat_width: Some(heat_width),
        k_neighbors: Some(k),
    })
}

/// Vertices with zero degree get an all-zero row and column.
pub fn normalized_laplacian<T: Real>(w: &WeightMatrix<T>) -> Result<LaplacianMatrix<T>> {
    let checked = WeightMatrix::from_dense(w.values.clone())?;
    let values = checked.values;
    let n = values.nrows();
    let inv_sqrt: Vec<T> = (0..n)
        .map(|i| {
            let deg: T = values.row(i).iter().copied().sum();
            if deg > T::zero() {
                T::one() / deg.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    let mut l = DMatrix::from_fn(n, n, |i, j| -(inv_sqrt[i] * values[(i, j)] * inv_sqrt[j]));
    for i in 0..n {
        if inv_sqrt[i] > T::zero() {
            l[(i, i)] += T::one();
        }
    }
    crate::linalg::symmetrize(&mut l);
    Ok(LaplacianMatrix {
        values: l,
        heat_width: w.heat_width,
        k_neighbors: w.k_neighbors,
    })
}

/// kNN heat graph followed by the normalized Laplacian.
pub fn laplacian<T: Real>(x: &FeatureMatrix<T>, k: usize, heat_width: T) -> Result<LaplacianMatrix<T>> {
    normalized_laplacian(&knn_heat_weights(x, k, heat_width)?)
}

fn squared_distances<T: Real>(x: &FeatureMatrix<T>) -> DMatrix<T> {
    let xt = x.as_matrix().transpose();
    let p = xt.nrows();
    let s = xt.as_slice();
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (&s[i * p..(i + 1) * p], &s[j * p..(j + 1) * p]);
        a.iter().zip(b).map(|(u, v)| (*u - *v) * (*u - *v)).sum()
    })
}
