//! CSV panels: comma-separated, `.` decimals, mandatory header row.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::PanelData;
use crate::split::MIN_SAMPLE;

/// Target series and predictor panel read from one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvPanel {
    pub target_name: String,
    pub y: DVector<f64>,
    /// Predictors; the target column is excluded.
    pub x: DMatrix<f64>,
    pub x_names: Vec<String>,
}

fn is_missing(s: &str) -> bool {
    matches!(s.to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | ".")
}

/// Read a panel, using `target` as `y` and every other column not listed in
/// `drop` as a predictor.
pub fn read_panel_csv<R: Read>(reader: R, target: &str, drop: &[String]) -> Result<CsvPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Io(format!("reading header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    for d in drop {
        if !headers.contains(d) {
            return Err(Error::InvalidPanel(format!("column '{d}' to drop is not in the header")));
        }
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::InvalidPanel(format!("target column '{target}' not found")))?;
    let x_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != target_idx && !drop.contains(&headers[i]))
        .collect();

    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); x_idx.len()];
    for (row, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = row + 2;
        let rec = rec.map_err(|e| Error::Io(format!("line {line}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(Error::InvalidPanel(format!(
                "line {line} has {} fields, header has {}",
                rec.len(),
                headers.len()
            )));
        }
        let cell = |i: usize| -> Result<f64> {
            let s = &rec[i];
            if is_missing(s) {
                return Err(Error::MissingValues {
                    column: headers[i].clone(),
                    line,
                });
            }
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumericColumn {
                    column: headers[i].clone(),
                    line,
                    value: s.to_string(),
                }),
            }
        };
        y.push(cell(target_idx)?);
        for (k, &i) in x_idx.iter().enumerate() {
            cols[k].push(cell(i)?);
        }
    }
    let t = y.len();
    if t < MIN_SAMPLE {
        return Err(Error::TooShortSeries(format!(
            "{t} observations; at least {MIN_SAMPLE} required"
        )));
    }
    let x = DMatrix::from_fn(t, x_idx.len(), |i, j| cols[j][i]);
    Ok(CsvPanel {
        target_name: target.to_string(),
        y: DVector::from_vec(y),
        x,
        x_names: x_idx.iter().map(|&i| headers[i].clone()).collect(),
    })
}

pub fn read_panel_path(path: &Path, target: &str, drop: &[String]) -> Result<CsvPanel> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_panel_csv(std::io::BufReader::new(f), target, drop)
}

/// Known regressors: an intercept and/or `p` lags of the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegressorSpec {
    pub intercept: bool,
    pub ar_lags: usize,
}

impl Default for RegressorSpec {
    fn default() -> Self {
        RegressorSpec {
            intercept: true,
            ar_lags: 1,
        }
    }
}

impl std::str::FromStr for RegressorSpec {
    type Err = Error;
    /// `ar(1)+intercept`, `intercept`, `ar(2)` and similar.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = RegressorSpec {
            intercept: false,
            ar_lags: 0,
        };
        for part in s.split('+').map(|p| p.trim().to_ascii_lowercase()) {
            if part == "intercept" || part == "const" {
                spec.intercept = true;
            } else if let Some(p) = part.strip_prefix("ar(").and_then(|p| p.strip_suffix(')')) {
                spec.ar_lags = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad lag order in '{part}'")))?;
            } else {
                return Err(Error::InvalidConfig(format!(
                    "unknown regressor term '{part}'; use ar(p) and/or intercept"
                )));
            }
        }
        if !spec.intercept && spec.ar_lags == 0 {
            return Err(Error::InvalidConfig("no known regressors specified".into()));
        }
        Ok(spec)
    }
}

impl RegressorSpec {
    /// Build the panel. With `p` lags the first `p - 1` periods are dropped
    /// so that every row of `W = [1, y_t, ..., y_{t-p+1}]` is complete.
    pub fn build(&self, y: &DVector<f64>, x: &DMatrix<f64>) -> Result<PanelData> {
        let skip = self.ar_lags.saturating_sub(1);
        let t = y.len();
        if t <= skip {
            return Err(Error::TooShortSeries(format!("{t} observations for {} lags", self.ar_lags)));
        }
        let rows = t - skip;
        let k = usize::from(self.intercept) + self.ar_lags;
        let w = DMatrix::from_fn(rows, k, |i, j| {
            let s = i + skip;
            if self.intercept && j == 0 {
                1.0
            } else {
                let lag = j - usize::from(self.intercept);
                y[s - lag]
            }
        });
        let yv = y.rows(skip, rows).into_owned();
        let xv = x.rows(skip, rows).into_owned();
        PanelData::new(xv, yv, w).map_err(|e| match e {
            Error::InvalidPanel(m) if rows < MIN_SAMPLE => Error::TooShortSeries(m),
            other => other,
        })
    }
}

/// Write `y` followed by the predictor columns, with full round-trip precision.
pub fn write_panel_csv<W: Write>(out: W, target: &str, y: &DVector<f64>, x: &DMatrix<f64>, x_names: &[String]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("writing CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![target.to_string()];
    header.extend(x_names.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for i in 0..y.len() {
        let mut rec = vec![format!("{}", y[i])];
        rec.extend((0..x.ncols()).map(|j| format!("{}", x[(i, j)])));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(format!("writing CSV: {e}")))
}

/// Write a matrix with the given column names.
pub fn write_matrix_csv<W: Write>(out: W, m: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("writing CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names).map_err(io)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| format!("{}", m[(i, j)])))
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(format!("writing CSV: {e}")))
}
