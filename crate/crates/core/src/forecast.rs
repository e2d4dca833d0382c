//! Recursive expanding-window one-step forecasts and their error streams.
//!
//! At step `t` (the number of observed periods, `t = k0, ..., T-1`) each
//! model is fitted by OLS on the pairs `(z_s, y_{s+1})`, `s = 1..t-1`, and the
//! coefficient is applied to `z_t` to forecast `y_{t+1}`. In 0-based storage
//! that is rows `0..t-1` of the regressors against `y[1..t]`, with the
//! forecast built from row `t-1` and compared with `y[t]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::PanelData;
use crate::pca::RecursivePca;
use crate::split::SplitIndices;

/// Largest accepted condition number of `Z'Z`.
pub const MAX_CONDITION: f64 = 1e12;

/// Least squares `argmin |y - Z b|^2` by Householder QR.
pub fn ols(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, p) = z.shape();
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "Z has {m} rows but y has {} entries",
            y.len()
        )));
    }
    if m <= p {
        return Err(Error::InvalidConfig(format!(
            "OLS needs more observations ({m}) than regressors ({p})"
        )));
    }
    let qr = z.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let condition = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let qty = qr.q().tr_mul(y);
    r.solve_upper_triangular(&qty)
        .ok_or(Error::IllConditioned { condition })
}

/// Aligned one-step forecast errors; entry `j` targets `y_{k0 + j + 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastErrorStreams {
    /// Restricted model (known regressors only).
    pub u1: Vec<f64>,
    /// Factor-augmented model with estimated factors.
    pub u2_hat: Option<Vec<f64>>,
    /// Factor-augmented model with observed factors.
    pub u2_tilde: Option<Vec<f64>>,
    pub r_used: usize,
    pub split: SplitIndices,
}

impl ForecastErrorStreams {
    /// The unrestricted stream: estimated factors if `feasible`, else observed.
    pub fn u2(&self, feasible: bool) -> Result<&[f64]> {
        let (s, name) = if feasible {
            (&self.u2_hat, "feasible")
        } else {
            (&self.u2_tilde, "infeasible")
        };
        s.as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("no {name} error stream available")))
    }

    pub fn n(&self) -> usize {
        self.u1.len()
    }
}

/// Factors used by the unrestricted model at step `t`: a `t x r` matrix
/// whose row `s` is the factor value dated `s`.
pub trait FactorSource {
    fn factors(&mut self, t: usize) -> Result<DMatrix<f64>>;
}

/// Observed factors: the first `t` rows of a fixed matrix.
pub struct ObservedFactors<'a>(pub &'a DMatrix<f64>);

impl FactorSource for ObservedFactors<'_> {
    fn factors(&mut self, t: usize) -> Result<DMatrix<f64>> {
        Ok(self.0.rows(0, t).into_owned())
    }
}

/// Factors re-estimated by principal components on rows `0..t` at each step.
impl FactorSource for RecursivePca<'_> {
    fn factors(&mut self, t: usize) -> Result<DMatrix<f64>> {
        Ok(self.estimate(t)?.f_hat)
    }
}

impl<F: FnMut(usize) -> Result<DMatrix<f64>>> FactorSource for F {
    fn factors(&mut self, t: usize) -> Result<DMatrix<f64>> {
        self(t)
    }
}

fn check_split(data: &PanelData, split: &SplitIndices) -> Result<()> {
    if split.t_total() != data.t() {
        return Err(Error::DimensionMismatch(format!(
            "split covers T = {} but the panel has T = {}",
            split.t_total(),
            data.t()
        )));
    }
    Ok(())
}

/// One-step errors of the restricted model `y_{t+1} = theta' w_t + u`.
pub fn restricted_errors(data: &PanelData, split: &SplitIndices) -> Result<Vec<f64>> {
    check_split(data, split)?;
    let (w, y) = (data.w(), data.y());
    let mut out = Vec::with_capacity(split.n);
    for t in split.k0..data.t() {
        let step = || -> Result<f64> {
            let m = t - 1;
            let z = w.rows(0, m).into_owned();
            let target = y.rows(1, m).into_owned();
            let b = ols(&z, &target)?;
            Ok(y[t] - w.row(t - 1).transpose().dot(&b))
        };
        out.push(step().map_err(|e| e.at_step(t))?);
    }
    Ok(out)
}

/// One-step errors of `y_{t+1} = delta' (w_t', f_t')' + u` with factors
/// drawn from `source` at every step.
pub fn augmented_errors(
    data: &PanelData,
    split: &SplitIndices,
    source: &mut dyn FactorSource,
) -> Result<Vec<f64>> {
    check_split(data, split)?;
    let (w, y) = (data.w(), data.y());
    let k = w.ncols();
    let mut out = Vec::with_capacity(split.n);
    for t in split.k0..data.t() {
        let mut step = || -> Result<f64> {
            let f = source.factors(t)?;
            if f.nrows() != t {
                return Err(Error::DimensionMismatch(format!(
                    "factor source returned {} rows for t = {t}",
                    f.nrows()
                )));
            }
            let r = f.ncols();
            let m = t - 1;
            let z = DMatrix::from_fn(m, k + r, |i, j| {
                if j < k {
                    w[(i, j)]
                } else {
                    f[(i, j - k)]
                }
            });
            let target = y.rows(1, m).into_owned();
            let b = ols(&z, &target)?;
            let mut fc = 0.0;
            for j in 0..k {
                fc += w[(t - 1, j)] * b[j];
            }
            for j in 0..r {
                fc += f[(t - 1, j)] * b[k + j];
            }
            Ok(y[t] - fc)
        };
        out.push(step().map_err(|e| e.at_step(t))?);
    }
    Ok(out)
}

/// Restricted, feasible and (when `f_true` is given) infeasible streams.
/// Factors for the feasible model are re-estimated from `X` rows `1..t` at
/// every step.
pub fn recursive_forecast_errors(
    data: &PanelData,
    split: &SplitIndices,
    r: usize,
    f_true: Option<&DMatrix<f64>>,
) -> Result<ForecastErrorStreams> {
    let opts = StreamOptions {
        feasible: true,
        f_true,
    };
    forecast_error_streams(data, split, r, &opts)
}

/// Which unrestricted streams to compute.
#[derive(Debug, Clone, Copy)]
pub struct StreamOptions<'a> {
    pub feasible: bool,
    pub f_true: Option<&'a DMatrix<f64>>,
}

pub fn forecast_error_streams(
    data: &PanelData,
    split: &SplitIndices,
    r: usize,
    opts: &StreamOptions<'_>,
) -> Result<ForecastErrorStreams> {
    check_split(data, split)?;
    let u1 = restricted_errors(data, split)?;
    let u2_hat = if opts.feasible {
        if r == 0 || r > split.k0.min(data.n_series()) {
            return Err(Error::InvalidConfig(format!(
                "r = {r} must satisfy 1 <= r <= min(k0, N) = {}",
                split.k0.min(data.n_series())
            )));
        }
        let mut pca = RecursivePca::new(data.x(), r, split.k0);
        Some(augmented_errors(data, split, &mut pca)?)
    } else {
        None
    };
    let u2_tilde = match opts.f_true {
        Some(f) => {
            if f.nrows() != data.t() {
                return Err(Error::DimensionMismatch(format!(
                    "F_true has {} rows, panel has T = {}",
                    f.nrows(),
                    data.t()
                )));
            }
            Some(augmented_errors(data, split, &mut ObservedFactors(f))?)
        }
        None => None,
    };
    let r_used = if opts.feasible {
        r
    } else {
        opts.f_true.map_or(0, |f| f.ncols())
    };
    Ok(ForecastErrorStreams {
        u1,
        u2_hat,
        u2_tilde,
        r_used,
        split: *split,
    })
}
