//! Reader for UCI Isolet files streamed as groups of speakers.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::Stream;
use crate::error::{Error, Result};
use crate::kernel::FeatureMatrix;
use crate::scalar::Real;
use crate::seqmed::Batch;

pub const ISOLET_FEATURES: usize = 617;
const N_CLASSES: u8 = 26;

/// One utterance: acoustic features plus the spoken letter (1 = A).
#[derive(Clone, Debug, PartialEq)]
pub struct IsoletRow {
    pub features: Vec<f64>,
    pub class: u8,
}

/// How consecutive rows are cut into speakers and speakers into time points.
#[derive(Clone, Debug, PartialEq)]
pub struct IsoletGrouping {
    pub speakers_per_group: usize,
    /// Nominal rows per speaker (two utterances of each letter).
    pub rows_per_speaker: usize,
}

impl Default for IsoletGrouping {
    fn default() -> Self {
        Self {
            speakers_per_group: 5,
            rows_per_speaker: 52,
        }
    }
}

fn parse_rows(text: &str, n_features: usize) -> Result<Vec<IsoletRow>> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let row = k + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != n_features + 1 {
            return Err(Error::Parse {
                row,
                message: format!("expected {} columns, found {}", n_features + 1, fields.len()),
            });
        }
        let mut features = Vec::with_capacity(n_features);
        for f in &fields[..n_features] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                row,
                message: format!("invalid number {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: "non-finite feature".into(),
                });
            }
            features.push(v);
        }
        let raw = fields[n_features];
        let id: f64 = raw.parse().map_err(|_| Error::Parse {
            row,
            message: format!("invalid class id {raw:?}"),
        })?;
        if id.fract() != 0.0 || !(1.0..=f64::from(N_CLASSES)).contains(&id) {
            return Err(Error::Parse {
                row,
                message: format!("class id {raw} outside 1..=26"),
            });
        }
        rows.push(IsoletRow {
            features,
            class: id as u8,
        });
    }
    Ok(rows)
}

/// Parses a file of `617 features, class id` rows.
pub fn read_isolet_file(path: &Path) -> Result<Vec<IsoletRow>> {
    parse_rows(&fs::read_to_string(path)?, ISOLET_FEATURES)
}

/// Row ranges of each speaker. Speakers recite the alphabet in order, so a
/// drop in class id starts a new cycle; cycles are paired into speakers.
/// Falls back to fixed-size chunks when the cycle structure is irregular.
fn speaker_ranges(rows: &[IsoletRow], rows_per_speaker: usize) -> Vec<(usize, usize)> {
    let n = rows.len();
    let mut starts = vec![0];
    for i in 1..n {
        if rows[i].class < rows[i - 1].class {
            starts.push(i);
        }
    }
    let n_speakers = ((n as f64) / rows_per_speaker as f64).round().max(1.0) as usize;
    let per = ((starts.len() as f64) / n_speakers as f64).round() as usize;
    if per >= 1 && starts.len() == per * n_speakers {
        (0..n_speakers)
            .map(|s| {
                let lo = starts[s * per];
                let hi = starts.get((s + 1) * per).copied().unwrap_or(n);
                (lo, hi)
            })
            .collect()
    } else {
        log::warn!("irregular class order; cutting speakers into fixed chunks of {rows_per_speaker}");
        (0..n)
            .step_by(rows_per_speaker)
            .map(|lo| (lo, (lo + rows_per_speaker).min(n)))
            .collect()
    }
}

fn to_batch<T: Real>(rows: &[IsoletRow], labels: Vec<i8>, t: usize) -> Result<Batch<T>> {
    let p = rows.first().map_or(0, |r| r.features.len());
    let x = DMatrix::from_fn(rows.len(), p, |i, j| T::lit(rows[i].features[j]));
    Batch::new(FeatureMatrix::new(x)?, labels, t)
}

fn split_label(class: u8, positive: &[u8]) -> i8 {
    if positive.contains(&class) {
        1
    } else {
        -1
    }
}

/// Groups training speakers into time points, keeping labels only for the
/// first speaker of each group.
pub fn isolet_stream_from_rows<T: Real>(
    train: &[IsoletRow],
    test: &[IsoletRow],
    positive: &[u8],
    grouping: &IsoletGrouping,
) -> Result<Stream<T>> {
    if grouping.speakers_per_group == 0 || grouping.rows_per_speaker == 0 {
        return Err(Error::param("grouping sizes must be positive"));
    }
    if train.is_empty() {
        return Err(Error::Empty("isolet training rows"));
    }
    if test.is_empty() {
        return Err(Error::Empty("isolet test rows"));
    }
    if positive.iter().any(|c| !(1..=N_CLASSES).contains(c)) {
        return Err(Error::param("positive class ids must lie in 1..=26"));
    }
    let speakers = speaker_ranges(train, grouping.rows_per_speaker);
    let mut batches = Vec::new();
    for (g, group) in speakers.chunks(grouping.speakers_per_group).enumerate() {
        let (lo, hi) = (group[0].0, group[group.len() - 1].1);
        let labeled_end = group[0].1;
        let labels = (lo..hi)
            .map(|i| if i < labeled_end { split_label(train[i].class, positive) } else { 0 })
            .collect();
        batches.push(to_batch(&train[lo..hi], labels, g + 1)?);
    }
    let test_labels = test.iter().map(|r| split_label(r.class, positive)).collect();
    let test = to_batch(test, test_labels, 0)?;
    Ok(Stream { batches, test })
}

/// Loads the training and test files and builds the grouped stream.
pub fn load_isolet_stream<T: Real>(
    train_path: &Path,
    test_path: &Path,
    positive: &[u8],
    grouping: &IsoletGrouping,
) -> Result<Stream<T>> {
    let train = read_isolet_file(train_path)?;
    let test = read_isolet_file(test_path)?;
    isolet_stream_from_rows(&train, &test, positive, grouping)
}
