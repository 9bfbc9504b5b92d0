//! Reading recorded waveform profiles from CSV and block-bootstrap resampling.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::waveform::WaveformSeries;

/// Maximum relative deviation of any time step from the median step.
pub const SPACING_JITTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub series: WaveformSeries,
    pub source_path: PathBuf,
    pub units: String,
}

/// Reads a uniformly sampled series from a CSV file with a header row.
///
/// Rows in errors are file line numbers (the header is line 1).
pub fn read_waveform_csv(path: &Path, time_col: &str, value_col: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => Error::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: name.to_string(),
            message: "column not present in header".into(),
        })
    };
    let ti = find(time_col)?;
    let vi = find(value_col)?;

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("`{raw}` is not finite"),
                });
            }
            Ok(v)
        };
        times.push(cell(ti, time_col)?);
        values.push(cell(vi, value_col)?);
    }

    if times.len() < 2 {
        return Err(Error::Parse {
            row: times.len() + 1,
            column: time_col.to_string(),
            message: "at least two data rows are required".into(),
        });
    }

    let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    for (i, &dt) in steps.iter().enumerate() {
        if dt <= 0.0 {
            return Err(Error::Parse {
                row: i + 3,
                column: time_col.to_string(),
                message: "timestamps must be strictly increasing".into(),
            });
        }
    }
    let median = {
        let mut sorted = steps.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        }
    };
    for (i, dt) in steps.drain(..).enumerate() {
        if ((dt - median) / median).abs() > SPACING_JITTER_TOL {
            return Err(Error::Parse {
                row: i + 3,
                column: time_col.to_string(),
                message: format!("non-uniform spacing {dt} vs median {median}"),
            });
        }
    }

    // The full span averages out timestamp rounding; integral rates are snapped.
    let span = times[times.len() - 1] - times[0];
    let mut fs = (times.len() - 1) as f64 / span;
    if (fs - fs.round()).abs() <= SPACING_JITTER_TOL * fs {
        fs = fs.round();
    }
    let series = WaveformSeries::new(values, fs, times[0])?;
    Ok(Dataset {
        series,
        source_path: path.to_path_buf(),
        units: value_col.to_string(),
    })
}

/// Concatenates `ceil(n / block_len)` uniformly placed contiguous blocks of the
/// source, truncated to `n` samples.
pub fn block_bootstrap(
    series: &WaveformSeries,
    block_len: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let src = series.samples();
    if block_len == 0 {
        return Err(Error::Argument("block length must be positive".into()));
    }
    if block_len > src.len() {
        return Err(Error::Argument(format!(
            "block length {block_len} exceeds series length {}",
            src.len()
        )));
    }
    let mut rng = rng_from(seed);
    let last_start = src.len() - block_len;
    let mut out = Vec::with_capacity(n + block_len);
    while out.len() < n {
        let start = rng.random_range(0..=last_start);
        out.extend_from_slice(&src[start..start + block_len]);
    }
    out.truncate(n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn infers_sample_rate() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "t,i\n0.0,1\n0.02,2\n0.04,3\n");
        let d = read_waveform_csv(&p, "t", "i").unwrap();
        assert_eq!(d.series.sample_rate(), 50.0);
        assert_eq!(d.series.samples(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn nan_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "t,i\n0.0,1\n0.02,NaN\n0.04,3\n");
        match read_waveform_csv(&p, "t", "i") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "i");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spacing_change_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "t,i\n0,1\n1,1\n2,1\n3,1\n5,1\n7,1\n");
        assert!(matches!(
            read_waveform_csv(&p, "t", "i"),
            Err(Error::Parse { row: 6, .. })
        ));
    }

    #[test]
    fn missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "t,i\n0,1\n1,1\n");
        assert!(matches!(
            read_waveform_csv(&p, "t", "current"),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn single_block_is_verbatim() {
        let s = WaveformSeries::new((0..50).map(f64::from).collect(), 1.0, 0.0).unwrap();
        let out = block_bootstrap(&s, 50, 50, 3).unwrap();
        assert_eq!(out, s.samples());
        let out = block_bootstrap(&s, 50, 120, 3).unwrap();
        assert_eq!(&out[..50], s.samples());
        assert_eq!(&out[50..100], s.samples());
        assert_eq!(&out[100..], &s.samples()[..20]);
    }

    #[test]
    fn oversize_block_is_error() {
        let s = WaveformSeries::new(vec![1.0; 10], 1.0, 0.0).unwrap();
        assert!(matches!(block_bootstrap(&s, 11, 5, 0), Err(Error::Argument(_))));
    }
}
