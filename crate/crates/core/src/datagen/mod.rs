//! Seeded stream generators and dataset readers.
//!
//! Every generator draws from `ChaCha8Rng::seed_from_u64(seed)`, a portable
//! stream cipher RNG, so identical seeds give identical streams on every
//! platform.

mod csvio;
mod isolet;

pub use csvio::{batch_file_name, read_batch_csv, read_batch_dir, write_batch_csv};
pub use isolet::{isolet_stream_from_rows, load_isolet_stream, read_isolet_file, IsoletGrouping, IsoletRow, ISOLET_FEATURES};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::FeatureMatrix;
use crate::scalar::Real;
use crate::seqmed::Batch;

/// Shape of a generated stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamConfig {
    pub seed: u64,
    pub time_points: usize,
    /// Inclusive range for the per-batch sample count.
    pub n_range: (usize, usize),
    pub labeled_fraction: f64,
    pub test_size: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            time_points: 10,
            n_range: (97, 103),
            labeled_fraction: 1.0,
            test_size: 1000,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_range.0 == 0 || self.n_range.0 > self.n_range.1 {
            return Err(Error::param(format!("invalid sample-count range {:?}", self.n_range)));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::param("labeled fraction must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Training batches (t = 1, 2, ...) and a held-out test batch (t = 0).
#[derive(Clone, Debug, PartialEq)]
pub struct Stream<T: Real> {
    pub batches: Vec<Batch<T>>,
    pub test: Batch<T>,
}

/// One block of categorical features over the values `{0, 1, 2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalBlock {
    pub width: usize,
    pub positive: [f64; 3],
    pub negative: [f64; 3],
}

/// Feature blocks of the categorical simulation, in column order.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalParams {
    pub blocks: Vec<CategoricalBlock>,
}

impl Default for CategoricalParams {
    fn default() -> Self {
        let shared = |width, p: [f64; 3]| CategoricalBlock {
            width,
            positive: p,
            negative: p,
        };
        Self {
            blocks: vec![
                shared(100, [0.90, 0.05, 0.05]),
                shared(50, [0.60, 0.20, 0.20]),
                CategoricalBlock {
                    width: 50,
                    positive: [0.40, 0.50, 0.10],
                    negative: [0.40, 0.10, 0.50],
                },
            ],
        }
    }
}

impl CategoricalParams {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.width).sum()
    }

    fn validate(&self) -> Result<()> {
        for b in &self.blocks {
            for p in [b.positive, b.negative] {
                if p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::param("categorical probabilities must be nonnegative and sum to 1"));
                }
            }
        }
        Ok(())
    }
}

/// Radius intervals of the two sphere classes.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereParams {
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

impl Default for SphereParams {
    fn default() -> Self {
        Self {
            inner: (0.0, 0.45),
            outer: (0.55, 1.0),
        }
    }
}

/// Balanced labels (`+1` gets the extra sample when `n` is odd), shuffled.
fn balanced_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    let mut y: Vec<i8> = (0..n).map(|i| if i < n.div_ceil(2) { 1 } else { -1 }).collect();
    y.shuffle(rng);
    y
}

fn draw_categorical(rng: &mut ChaCha8Rng, p: &[f64; 3]) -> f64 {
    let u: f64 = rng.random();
    if u < p[0] {
        0.0
    } else if u < p[0] + p[1] {
        1.0
    } else {
        2.0
    }
}

fn categorical_batch<T: Real>(rng: &mut ChaCha8Rng, params: &CategoricalParams, n: usize, t: usize) -> Result<Batch<T>> {
    let y = balanced_labels(rng, n);
    let p = params.dim();
    let mut x = DMatrix::zeros(n, p);
    for (i, &label) in y.iter().enumerate() {
        let mut j = 0;
        for block in &params.blocks {
            let probs = if label > 0 { &block.positive } else { &block.negative };
            for _ in 0..block.width {
                x[(i, j)] = T::lit(draw_categorical(rng, probs));
                j += 1;
            }
        }
    }
    Batch::new(FeatureMatrix::new(x)?, y, t)
}

/// Random unlabeled mask keeping exactly `ceil(fraction * n)` labels.
fn mask_labels(rng: &mut ChaCha8Rng, y: &mut [i8], fraction: f64) {
    let n = y.len();
    let keep = ((fraction * n as f64).ceil() as usize).min(n);
    if keep == n {
        return;
    }
    let mut labeled = vec![false; n];
    for i in index::sample(rng, n, keep) {
        labeled[i] = true;
    }
    for (v, keep) in y.iter_mut().zip(labeled) {
        if !keep {
            *v = 0;
        }
    }
}

/// Fully labeled categorical stream.
pub fn gen_categorical<T: Real>(config: &StreamConfig, params: &CategoricalParams) -> Result<Stream<T>> {
    config.validate()?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut batches = Vec::with_capacity(config.time_points);
    for t in 1..=config.time_points {
        let n = rng.random_range(config.n_range.0..=config.n_range.1);
        batches.push(categorical_batch(&mut rng, params, n, t)?);
    }
    let test = categorical_batch(&mut rng, params, config.test_size.max(1), 0)?;
    Ok(Stream { batches, test })
}

fn sphere_batch<T: Real>(rng: &mut ChaCha8Rng, params: &SphereParams, n: usize, t: usize) -> Result<Batch<T>> {
    let y = balanced_labels(rng, n);
    let mut x = DMatrix::zeros(n, 3);
    for (i, &label) in y.iter().enumerate() {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let (lo, hi) = if label > 0 { params.outer } else { params.inner };
        let r: f64 = rng.random_range(lo..=hi);
        let s = (1.0 - z * z).max(0.0).sqrt();
        x[(i, 0)] = T::lit(r * s * phi.cos());
        x[(i, 1)] = T::lit(r * s * phi.sin());
        x[(i, 2)] = T::lit(r * z);
    }
    Batch::new(FeatureMatrix::new(x)?, y, t)
}

/// Partially labeled points in the unit ball: class -1 near the center,
/// class +1 on a shell.
pub fn gen_sphere<T: Real>(config: &StreamConfig, params: &SphereParams) -> Result<Stream<T>> {
    config.validate()?;
    let ok = |(lo, hi): (f64, f64)| lo >= 0.0 && lo <= hi && hi <= 1.0;
    if !ok(params.inner) || !ok(params.outer) {
        return Err(Error::param("sphere radii must satisfy 0 <= lo <= hi <= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut batches = Vec::with_capacity(config.time_points);
    for t in 1..=config.time_points {
        let n = rng.random_range(config.n_range.0..=config.n_range.1);
        let mut b = sphere_batch(&mut rng, params, n, t)?;
        mask_labels(&mut rng, &mut b.y, config.labeled_fraction);
        batches.push(b);
    }
    let test = sphere_batch(&mut rng, params, config.test_size.max(1), 0)?;
    Ok(Stream { batches, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> StreamConfig {
        StreamConfig {
            seed,
            time_points: 3,
            labeled_fraction: 0.1,
            test_size: 50,
            ..Default::default()
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a: Stream<f64> = gen_categorical(&cfg(4), &CategoricalParams::default()).unwrap();
        let b: Stream<f64> = gen_categorical(&cfg(4), &CategoricalParams::default()).unwrap();
        assert_eq!(a, b);
        let c: Stream<f64> = gen_categorical(&cfg(5), &CategoricalParams::default()).unwrap();
        assert_ne!(a, c);
        let s1: Stream<f64> = gen_sphere(&cfg(4), &SphereParams::default()).unwrap();
        let s2: Stream<f64> = gen_sphere(&cfg(4), &SphereParams::default()).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn sphere_shape_and_masking() {
        let s: Stream<f64> = gen_sphere(&cfg(9), &SphereParams::default()).unwrap();
        for b in &s.batches {
            let n = b.len();
            assert!((97..=103).contains(&n));
            assert_eq!(b.n_labeled(), (0.1 * n as f64).ceil() as usize);
            for i in 0..n {
                let r = b.x.as_matrix().row(i).norm();
                assert!(r <= 1.0 + 1e-12);
                assert!(!(r > 0.45 + 1e-12 && r < 0.55 - 1e-12));
            }
        }
        assert!(s.test.is_fully_labeled());
    }

    #[test]
    fn batches_are_balanced() {
        let s: Stream<f64> = gen_categorical(&cfg(1), &CategoricalParams::default()).unwrap();
        for b in s.batches.iter().chain([&s.test]) {
            let pos = b.y.iter().filter(|v| **v == 1).count() as i64;
            let neg = b.y.iter().filter(|v| **v == -1).count() as i64;
            assert!((pos - neg).abs() <= 1);
            assert_eq!(b.x.ncols(), 200);
        }
    }

    #[test]
    fn masking_keeps_features() {
        let mut full = cfg(2);
        full.labeled_fraction = 1.0;
        let a: Stream<f64> = gen_sphere(&full, &SphereParams::default()).unwrap();
        assert!(a.batches.iter().all(|b| b.is_fully_labeled()));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = a.batches[0].clone();
        mask_labels(&mut rng, &mut b.y, 0.3);
        assert_eq!(b.x, a.batches[0].x);
        for (m, o) in b.y.iter().zip(&a.batches[0].y) {
            assert!(*m == 0 || m == o);
        }
    }
}
