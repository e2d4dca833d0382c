//! Input panel: predictors `X` (T x N), target `y` and known regressors `W`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::split::MIN_SAMPLE;

/// Validated panel of predictors, target and known regressors.
///
/// Rows are time periods. Row `t` of `W` holds the regressors dated `t`
/// that forecast `y[t + 1]`; the library never adds an intercept itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    w: DMatrix<f64>,
}

fn check_finite(name: &str, vals: &[f64], nrows: usize) -> Result<()> {
    if let Some(pos) = vals.iter().position(|v| !v.is_finite()) {
        // column-major storage
        let (row, col) = (pos % nrows.max(1), pos / nrows.max(1));
        return Err(Error::InvalidPanel(format!(
            "{name} has a non-finite value at row {row}, column {col}"
        )));
    }
    Ok(())
}

impl PanelData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, w: DMatrix<f64>) -> Result<Self> {
        let t = x.nrows();
        if y.len() != t || w.nrows() != t {
            return Err(Error::DimensionMismatch(format!(
                "X has {t} rows, y has {} entries, W has {} rows",
                y.len(),
                w.nrows()
            )));
        }
        if t < MIN_SAMPLE {
            return Err(Error::InvalidPanel(format!(
                "T = {t} is below the minimum of {MIN_SAMPLE}"
            )));
        }
        if x.ncols() < 2 {
            return Err(Error::InvalidPanel(format!(
                "N = {} series; at least 2 required",
                x.ncols()
            )));
        }
        if w.ncols() == 0 {
            return Err(Error::InvalidPanel("W has no columns".into()));
        }
        check_finite("X", x.as_slice(), t)?;
        check_finite("y", y.as_slice(), t)?;
        check_finite("W", w.as_slice(), t)?;
        Ok(PanelData { x, y, w })
    }

    /// Panel whose known regressors are an intercept and the current `y`,
    /// i.e. the AR(1)-with-intercept benchmark.
    pub fn with_ar1_intercept(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let w = ar1_intercept(&y);
        Self::new(x, y, w)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn t(&self) -> usize {
        self.x.nrows()
    }
    pub fn n_series(&self) -> usize {
        self.x.ncols()
    }
}

/// `W = [1, y_t]`.
pub fn ar1_intercept(y: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(y.len(), 2, |i, j| if j == 0 { 1.0 } else { y[i] })
}
