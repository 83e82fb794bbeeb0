//! Batch CSV files: header `f0,...,f{p-1},label`, one file per time point.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kernel::FeatureMatrix;
use crate::scalar::Real;
use crate::seqmed::Batch;

pub fn batch_file_name(t: usize) -> String {
    format!("batch_{t:04}.csv")
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row,
            message: format!("{other:?}"),
        },
    }
}

/// Writes `batch` to `path` atomically (temp file, then rename).
pub fn write_batch_csv<T: Real>(path: &Path, batch: &Batch<T>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = csv::Writer::from_writer(&mut tmp);
        let p = batch.x.ncols();
        let mut header: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(csv_error)?;
        let m = batch.x.as_matrix();
        for i in 0..batch.len() {
            let mut rec: Vec<String> = (0..p).map(|j| format!("{}", m[(i, j)].to_f64_lossy())).collect();
            rec.push(batch.y[i].to_string());
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
    }
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads one batch file, stamping it with time `t`.
pub fn read_batch_csv<T: Real>(path: &Path, t: usize) -> Result<Batch<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r.headers().map_err(csv_error)?.clone();
    let p = header.len().checked_sub(1).ok_or(Error::Parse {
        row: 1,
        message: "empty header".into(),
    })?;
    for (j, name) in header.iter().take(p).enumerate() {
        if name.trim() != format!("f{j}") {
            return Err(Error::Parse {
                row: 1,
                message: format!("expected column f{j}, found {name:?}"),
            });
        }
    }
    if header.get(p).map(str::trim) != Some("label") {
        return Err(Error::Parse {
            row: 1,
            message: "last column must be `label`".into(),
        });
    }
    let mut data = Vec::new();
    let mut y = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(csv_error)?;
        if rec.len() != p + 1 {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", p + 1, rec.len()),
            });
        }
        for field in rec.iter().take(p) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                message: format!("invalid number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: "non-finite feature".into(),
                });
            }
            data.push(T::lit(v));
        }
        let label = &rec[p];
        let label: i8 = match label.trim() {
            "1" | "+1" => 1,
            "-1" => -1,
            "0" => 0,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("label {other:?} is not -1, 0 or 1"),
                })
            }
        };
        y.push(label);
    }
    let n = y.len();
    Batch::new(FeatureMatrix::from_row_slice(n, p, &data)?, y, t)
}

/// Reads every `batch_NNNN.csv` in `dir`, ordered by time index.
pub fn read_batch_dir<T: Real>(dir: &Path) -> Result<Vec<Batch<T>>> {
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(t) = name
            .strip_prefix("batch_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            files.push((t, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::input(format!("no batch_*.csv files in {}", dir.display())));
    }
    files.iter().map(|(t, p)| read_batch_csv(p, *t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let x = FeatureMatrix::from_rows(&[vec![0.1, -2.5e-17], vec![3.0, 1.0 / 3.0]]).unwrap();
        let b = Batch::new(x, vec![1, 0], 3).unwrap();
        let path = dir.path().join(batch_file_name(3));
        write_batch_csv(&path, &b).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("f0,f1,label\n"));
        assert_eq!(read_batch_csv::<f64>(&path, 3).unwrap(), b);
        assert_eq!(read_batch_dir::<f64>(dir.path()).unwrap(), vec![b]);

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "f0,label\n1.0,1\n2.0,7\n").unwrap();
        match read_batch_csv::<f64>(&bad, 1) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&bad, "f0,label\n1.0,1\nx,1\n").unwrap();
        assert!(matches!(read_batch_csv::<f64>(&bad, 1), Err(Error::Parse { row: 3, .. })));
    }
}
