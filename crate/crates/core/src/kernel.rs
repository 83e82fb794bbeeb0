//! Base kernels and Gram-matrix evaluation.
//!
//! Samples are stored as rows. Every Gram entry is computed from a fixed,
//! index-ordered reduction over features so that `gram(A, B)` is exactly the
//! transpose of `gram(B, A)` and `gram(A, A)` is exactly symmetric.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sample matrix, one sample per row. All entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T: Real>(DMatrix<T>);

impl<T: Real> FeatureMatrix<T> {
    pub fn new(values: DMatrix<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite_real()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self(values))
    }

    /// Builds a matrix from row vectors of `f64`. All rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Parse {
                    row: i,
                    message: format!("expected {p} features, found {}", r.len()),
                });
            }
        }
        let m = DMatrix::from_fn(rows.len(), p, |i, j| T::lit(rows[i][j]));
        Self::new(m)
    }

    pub fn from_row_slice(n: usize, p: usize, data: &[T]) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::DimensionMismatch {
                context: "row slice",
                expected: n * p,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, p, data))
    }

    pub fn empty(p: usize) -> Self {
        Self(DMatrix::zeros(0, p))
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0
    }

    pub fn row_vec(&self, i: usize) -> Vec<T> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self(self.0.select_rows(idx))
    }

    /// Stacks matrices vertically. All parts must share a column count.
    pub fn vstack<'a>(parts: impl IntoIterator<Item = &'a Self>) -> Result<Self>
    where
        T: 'a,
    {
        let parts: Vec<&Self> = parts.into_iter().collect();
        let p = parts.first().map_or(0, |m| m.ncols());
        let mut n = 0;
        for m in &parts {
            if m.ncols() != p {
                return Err(Error::DimensionMismatch {
                    context: "vstack",
                    expected: p,
                    found: m.ncols(),
                });
            }
            n += m.nrows();
        }
        let mut out = DMatrix::zeros(n, p);
        let mut at = 0;
        for m in parts {
            out.rows_mut(at, m.nrows()).copy_from(&m.0);
            at += m.nrows();
        }
        Ok(Self(out))
    }
}

/// Dense kernel matrix, `n x m`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix<T: Real>(pub(crate) DMatrix<T>);

impl<T: Real> GramMatrix<T> {
    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[(i, j)]
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Which base kernel to use.
///
/// `Rbf` is `exp(-|a - b|^2 / (2 width^2))`. `TfidfLinear` scales raw counts
/// by the fitted idf weights, L2-normalizes every row (zero rows stay zero)
/// and takes dot products. `Precomputed` holds a full Gram matrix over a
/// fixed sample universe; feature matrices then carry a single column with
/// the sample index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec<T: Real> {
    Linear,
    Rbf {
        width: T,
    },
    TfidfLinear {
        idf: Vec<T>,
    },
    Precomputed {
        #[serde(with = "precomputed_serde")]
        gram: DMatrix<T>,
    },
}

impl<T: Real> KernelSpec<T> {
    pub fn rbf(width: T) -> Result<Self> {
        let spec = KernelSpec::Rbf { width };
        spec.validate()?;
        Ok(spec)
    }

    pub fn precomputed(gram: DMatrix<T>) -> Result<Self> {
        let spec = KernelSpec::Precomputed { gram };
        spec.validate()?;
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::TfidfLinear { .. } => "tfidf-linear",
            KernelSpec::Precomputed { .. } => "precomputed",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { width } => {
                if !width.is_finite_real() || *width <= T::zero() {
                    return Err(Error::param(format!("rbf width must be positive, got {width}")));
                }
                Ok(())
            }
            KernelSpec::TfidfLinear { idf } => {
                if idf.iter().any(|w| !w.is_finite_real() || *w < T::zero()) {
                    return Err(Error::param("idf weights must be finite and nonnegative"));
                }
                Ok(())
            }
            KernelSpec::Precomputed { gram } => {
                if !gram.is_square() {
                    return Err(Error::param("precomputed gram must be square"));
                }
                if gram.iter().any(|v| !v.is_finite_real()) {
                    return Err(Error::NonFinite("precomputed gram"));
                }
                Ok(())
            }
        }
    }

    /// Expected feature dimension, when the kernel constrains it.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::TfidfLinear { idf } => Some(idf.len()),
            KernelSpec::Precomputed { .. } => Some(1),
            _ => None,
        }
    }

    /// Single kernel evaluation on two feature vectors.
    pub fn eval(&self, a: &[T], b: &[T]) -> T {
        match self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { width } => rbf(a, b, *width),
            KernelSpec::TfidfLinear { idf } => {
                let ta = tfidf_row(a, idf);
                let tb = tfidf_row(b, idf);
                dot(&ta, &tb)
            }
            KernelSpec::Precomputed { gram } => gram[(index_of(a[0]), index_of(b[0]))],
        }
    }

    /// Applies the kernel's explicit input transform (identity unless tf-idf).
    pub fn transform(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        match self {
            KernelSpec::TfidfLinear { idf } => {
                check_dim(idf.len(), x.ncols())?;
                let n = x.nrows();
                let mut out = DMatrix::zeros(n, x.ncols());
                for i in 0..n {
                    let row = tfidf_row(&x.row_vec(i), idf);
                    for (j, v) in row.into_iter().enumerate() {
                        out[(i, j)] = v;
                    }
                }
                Ok(FeatureMatrix(out))
            }
            _ => Ok(x.clone()),
        }
    }
}

/// Evaluates `k(a_i, b_j)` for every row pair.
pub fn gram<T: Real>(
    spec: &KernelSpec<T>,
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
) -> Result<GramMatrix<T>> {
    spec.validate()?;
    check_dim(a.ncols(), b.ncols())?;
    if let Some(p) = spec.input_dim() {
        check_dim(p, a.ncols())?;
    }
    let out = match spec {
        KernelSpec::Linear => pairwise(a, b, dot),
        KernelSpec::Rbf { width } => pairwise(a, b, |x, y| rbf(x, y, *width)),
        KernelSpec::TfidfLinear { .. } => {
            let ta = spec.transform(a)?;
            let tb = spec.transform(b)?;
            pairwise(&ta, &tb, dot)
        }
        KernelSpec::Precomputed { gram } => {
            let ia = indices(a, gram.nrows())?;
            let ib = indices(b, gram.nrows())?;
            DMatrix::from_fn(ia.len(), ib.len(), |i, j| gram[(ia[i], ib[j])])
        }
    };
    Ok(GramMatrix(out))
}

/// Fits idf weights `ln(N / df_j)` from a nonnegative count matrix.
/// Columns that never occur get weight zero.
pub fn fit_tfidf<T: Real>(counts: &FeatureMatrix<T>) -> Result<KernelSpec<T>> {
    let (n, p) = (counts.nrows(), counts.ncols());
    if n == 0 || p == 0 {
        return Err(Error::Empty("tf-idf reference counts"));
    }
    let m = counts.as_matrix();
    if m.iter().any(|v| *v < T::zero()) {
        return Err(Error::input("tf-idf counts must be nonnegative"));
    }
    let total = T::from_usize(n).unwrap();
    let idf = (0..p)
        .map(|j| {
            let df = m.column(j).iter().filter(|v| **v > T::zero()).count();
            if df == 0 {
                T::zero()
            } else {
                (total / T::from_usize(df).unwrap()).ln()
            }
        })
        .collect();
    Ok(KernelSpec::TfidfLinear { idf })
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context: "kernel feature dimension",
            expected,
            found,
        });
    }
    Ok(())
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

#[inline]
fn rbf<T: Real>(a: &[T], b: &[T], width: T) -> T {
    let mut d2 = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        d2 += d * d;
    }
    (-d2 / (T::lit(2.0) * width * width)).exp()
}

fn tfidf_row<T: Real>(counts: &[T], idf: &[T]) -> Vec<T> {
    let mut row: Vec<T> = counts.iter().zip(idf).map(|(c, w)| *c * *w).collect();
    let norm = dot(&row, &row).sqrt();
    if norm > T::zero() {
        row.iter_mut().for_each(|v| *v /= norm);
    }
    row
}

fn index_of<T: Real>(v: T) -> usize {
    v.to_f64_lossy() as usize
}

fn indices<T: Real>(x: &FeatureMatrix<T>, universe: usize) -> Result<Vec<usize>> {
    check_dim(1, x.ncols())?;
    x.as_matrix()
        .iter()
        .map(|v| {
            let f = v.to_f64_lossy();
            if f < 0.0 || f.fract() != 0.0 || f as usize >= universe {
                Err(Error::input(format!("precomputed sample index {f} out of range")))
            } else {
                Ok(f as usize)
            }
        })
        .collect()
}

/// Row-pair map with each sample copied into a contiguous buffer once.
fn pairwise<T: Real>(
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
    f: impl Fn(&[T], &[T]) -> T,
) -> DMatrix<T> {
    let at = a.as_matrix().transpose();
    let bt = b.as_matrix().transpose();
    let p = at.nrows();
    let (sa, sb) = (at.as_slice(), bt.as_slice());
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        f(&sa[i * p..(i + 1) * p], &sb[j * p..(j + 1) * p])
    })
}

mod precomputed_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::scalar::Real;

    pub fn serialize<T: Real, S: Serializer>(m: &DMatrix<T>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().map(|v| v.to_f64_lossy()).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<DMatrix<T>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("precomputed gram must be square"));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| T::lit(rows[i][j])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use proptest::prelude::*;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix<f64> {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn linear_identity() {
        let a = fm(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let g = gram(&KernelSpec::Linear, &a, &a).unwrap();
        assert_eq!(g.as_matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn rbf_values() {
        let spec = KernelSpec::rbf(1.0).unwrap();
        let a = fm(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let g = gram(&spec, &a, &a).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        assert_eq!(g.get(1, 1), 1.0);
        assert!((g.get(0, 1) - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let a = fm(&[&[1.0, 0.0]]);
        let b = fm(&[&[1.0, 0.0, 2.0]]);
        assert!(matches!(
            gram(&KernelSpec::Linear, &a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(FeatureMatrix::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(-1.0).is_err());
        let bad = KernelSpec::TfidfLinear { idf: vec![1.0, -0.5] };
        assert!(gram(&bad, &a, &a).is_err());
    }

    #[test]
    fn tfidf_common_terms_vanish() {
        let counts = fm(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let spec = fit_tfidf(&counts).unwrap();
        let g = gram(&spec, &counts, &counts).unwrap();
        assert_eq!(g.as_matrix(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn tfidf_disjoint_docs_are_orthonormal() {
        let counts = fm(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let spec = fit_tfidf(&counts).unwrap();
        match &spec {
            KernelSpec::TfidfLinear { idf } => {
                assert!((idf[0] - 2f64.ln()).abs() < 1e-15);
                assert!((idf[1] - 2f64.ln()).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        let g = gram(&spec, &counts, &counts).unwrap();
        assert!((g.as_matrix() - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn tfidf_zero_row_and_unused_column() {
        let counts = fm(&[&[2.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[1.0, 3.0, 0.0]]);
        let spec = fit_tfidf(&counts).unwrap();
        if let KernelSpec::TfidfLinear { idf } = &spec {
            assert_eq!(idf[2], 0.0);
        }
        let g = gram(&spec, &counts, &counts).unwrap();
        assert!(g.as_matrix().row(1).iter().all(|v| *v == 0.0));
        assert!(g.as_matrix().iter().all(|v| v.is_finite()));
        assert!(fit_tfidf(&FeatureMatrix::<f64>::empty(3)).is_err());
        assert!(fit_tfidf(&fm(&[&[-1.0]])).is_err());
    }

    #[test]
    fn precomputed_lookup() {
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        let spec = KernelSpec::precomputed(k).unwrap();
        let a = fm(&[&[0.0], &[2.0]]);
        let b = fm(&[&[1.0]]);
        let g = gram(&spec, &a, &b).unwrap();
        assert_eq!(g.as_matrix(), &DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
        assert!(gram(&spec, &fm(&[&[3.0]]), &b).is_err());
    }

    #[test]
    fn f32_gram() {
        let a = FeatureMatrix::<f32>::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let g = gram(&KernelSpec::Rbf { width: 1.0f32 }, &a, &a).unwrap();
        assert!((g.get(0, 1) - (-0.5f32).exp()).abs() < 1e-7);
    }

    fn matrix(n: usize, p: usize) -> impl Strategy<Value = FeatureMatrix<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n * p)
            .prop_map(move |v| FeatureMatrix::from_row_slice(n, p, &v).unwrap())
    }

    fn counts(n: usize, p: usize) -> impl Strategy<Value = FeatureMatrix<f64>> {
        proptest::collection::vec(0u8..4, n * p).prop_map(move |v| {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            FeatureMatrix::from_row_slice(n, p, &v).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gram_symmetric_psd(
            n in 1usize..100,
            p in 1usize..6,
            seed in any::<u64>(),
        ) {
            let a = {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let v: Vec<f64> = (0..n * p).map(|_| rng.random_range(-3.0..3.0)).collect();
                FeatureMatrix::from_row_slice(n, p, &v).unwrap()
            };
            let counts = FeatureMatrix::new(a.as_matrix().map(|v| v.abs().floor())).unwrap();
            let tfidf = fit_tfidf(&counts).unwrap();
            for (spec, x) in [
                (KernelSpec::Linear, &a),
                (KernelSpec::Rbf { width: 1.3 }, &a),
                (tfidf, &counts),
            ] {
                let g = gram(&spec, x, x).unwrap().into_inner();
                prop_assert_eq!(&g, &g.transpose());
                prop_assert!(min_eigenvalue(&g) >= -1e-8);
            }
        }

        #[test]
        fn gram_transpose_exact(a in matrix(7, 3), b in matrix(5, 3)) {
            for spec in [KernelSpec::Linear, KernelSpec::Rbf { width: 0.7 }] {
                let ab = gram(&spec, &a, &b).unwrap().into_inner();
                let ba = gram(&spec, &b, &a).unwrap().into_inner();
                prop_assert_eq!(ab, ba.transpose());
            }
        }

        #[test]
        fn rbf_diagonal_is_one(a in matrix(9, 4), w in 0.05f64..5.0) {
            let g = gram(&KernelSpec::Rbf { width: w }, &a, &a).unwrap();
            for i in 0..9 {
                prop_assert_eq!(g.get(i, i), 1.0);
            }
        }

        #[test]
        fn tfidf_rows_unit_or_zero(c in counts(8, 5)) {
            let spec = fit_tfidf(&c).unwrap();
            let t = spec.transform(&c).unwrap();
            for i in 0..8 {
                let norm = t.as_matrix().row(i).norm();
                prop_assert!((norm - 1.0).abs() < 1e-12 || norm == 0.0);
            }
        }
    }
}
