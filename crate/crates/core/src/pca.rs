//! Principal-components factor extraction, IC_p1 factor-number selection and
//! rotation diagnostics.
//!
//! Factors are normalised so that `F'F / t = I_r`; loadings are
//! `X'F / t`. Eigenvector signs are fixed so that every loading column has
//! a positive sum (ties: the first nonzero loading is positive).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero.
pub const EIG_FLOOR: f64 = 1e-12;

/// Output of one principal-components extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorEstimate {
    /// Estimated factors, `t x r`.
    pub f_hat: DMatrix<f64>,
    /// Estimated loadings, `N x r`.
    pub lambda_hat: DMatrix<f64>,
    /// Leading eigenvalues of `X X' / (N t)`, decreasing.
    pub d2: DVector<f64>,
    pub t: usize,
    pub r: usize,
}

/// Which Gram matrix to eigendecompose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenRoute {
    /// The smaller of the two.
    Auto,
    /// `X X'` (t x t).
    Time,
    /// `X' X` (N x N), converting eigenvectors back to factors.
    Cross,
}

impl EigenRoute {
    fn resolve(self, t: usize, n: usize) -> EigenRoute {
        match self {
            EigenRoute::Auto if n <= t => EigenRoute::Cross,
            EigenRoute::Auto => EigenRoute::Time,
            other => other,
        }
    }
}

fn check_r(t: usize, n: usize, r: usize) -> Result<()> {
    if r == 0 || r > t.min(n) {
        return Err(Error::InvalidConfig(format!(
            "r = {r} must satisfy 1 <= r <= min(t, N) = {}",
            t.min(n)
        )));
    }
    Ok(())
}

/// Indices of `vals` in decreasing order; equal values keep their order.
fn order_desc(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    idx
}

/// Full symmetric eigendecomposition with eigenpairs sorted decreasingly.
fn sorted_eigen(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g);
    let order = order_desc(eig.eigenvalues.as_slice());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    (vals, vecs)
}

fn gram_time(x: &DMatrix<f64>) -> DMatrix<f64> {
    x * x.transpose()
}

fn gram_cross(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

/// Flip columns so each loading column sums to a positive number.
fn apply_sign_convention(f: &mut DMatrix<f64>, l: &mut DMatrix<f64>) {
    for j in 0..l.ncols() {
        let col = l.column(j);
        let sum: f64 = col.iter().sum();
        let scale: f64 = col.iter().map(|v| v.abs()).sum();
        let flip = if sum.abs() > 1e-12 * scale {
            sum < 0.0
        } else {
            col.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0)
        };
        if flip {
            f.column_mut(j).neg_mut();
            l.column_mut(j).neg_mut();
        }
    }
}

/// Build the estimate from the top-`r` eigenpairs of the chosen Gram matrix.
/// `theta` are eigenvalues of the unscaled Gram (`X X'` or `X' X`).
fn assemble(
    x: &DMatrix<f64>,
    route: EigenRoute,
    theta: &[f64],
    vecs: &DMatrix<f64>,
    r: usize,
) -> Result<FactorEstimate> {
    let (t, n) = x.shape();
    let scale = (n * t) as f64;
    let d2 = DVector::from_fn(r, |j, _| theta[j] / scale);
    if d2[r - 1] < EIG_FLOOR {
        return Err(Error::RankDeficient {
            index: r - 1,
            value: d2[r - 1],
        });
    }
    let sqrt_t = (t as f64).sqrt();
    let mut f_hat = match route {
        EigenRoute::Cross => {
            let mut f = x * vecs.columns(0, r);
            for j in 0..r {
                f.column_mut(j).scale_mut(sqrt_t / theta[j].sqrt());
            }
            f
        }
        _ => vecs.columns(0, r) * sqrt_t,
    };
    let mut lambda_hat = x.tr_mul(&f_hat) / t as f64;
    apply_sign_convention(&mut f_hat, &mut lambda_hat);
    Ok(FactorEstimate {
        f_hat,
        lambda_hat,
        d2,
        t,
        r,
    })
}

/// Principal-components estimate of `r` factors from `x_t` (t x N).
pub fn extract_factors(x_t: &DMatrix<f64>, r: usize) -> Result<FactorEstimate> {
    extract_factors_with(x_t, r, EigenRoute::Auto)
}

pub fn extract_factors_with(
    x_t: &DMatrix<f64>,
    r: usize,
    route: EigenRoute,
) -> Result<FactorEstimate> {
    let (t, n) = x_t.shape();
    check_r(t, n, r)?;
    let route = route.resolve(t, n);
    let g = match route {
        EigenRoute::Cross => gram_cross(x_t),
        _ => gram_time(x_t),
    };
    let (theta, vecs) = sorted_eigen(g);
    assemble(x_t, route, &theta, &vecs, r)
}

/// All eigenvalues of `X X' / (N T)` (only the `min(N, T)` that can be
/// nonzero), decreasing and clamped at zero.
pub fn scaled_eigenvalues(x: &DMatrix<f64>) -> Vec<f64> {
    let (t, n) = x.shape();
    let g = if n <= t { gram_cross(x) } else { gram_time(x) };
    let (theta, _) = sorted_eigen(g);
    let scale = (n * t) as f64;
    theta.into_iter().map(|v| (v / scale).max(0.0)).collect()
}

/// IC_p1 criterion value for `k` factors given the scaled eigenvalues.
pub fn icp1_value(eigs: &[f64], k: usize, t: usize, n: usize) -> f64 {
    let (nf, tf) = (n as f64, t as f64);
    let v: f64 = eigs[k..].iter().sum();
    let penalty = k as f64 * ((nf + tf) / (nf * tf)) * (nf * tf / (nf + tf)).ln();
    v.max(f64::MIN_POSITIVE).ln() + penalty
}

/// Bai-Ng IC_p1 choice of the number of factors on the grid `1..=r_max`.
///
/// The residual variance with `k` factors equals the sum of the discarded
/// eigenvalues of `X X' / (N T)`, so one eigendecomposition serves the
/// whole grid.
pub fn select_num_factors_icp1(x: &DMatrix<f64>, r_max: usize) -> Result<usize> {
    let (t, n) = x.shape();
    if r_max == 0 || r_max + 1 > t.min(n) {
        return Err(Error::InvalidConfig(format!(
            "r_max = {r_max} must satisfy 1 <= r_max <= min(T, N) - 1 = {}",
            t.min(n).saturating_sub(1)
        )));
    }
    let eigs = scaled_eigenvalues(x);
    let mut best = (1, f64::INFINITY);
    for k in 1..=r_max {
        let ic = icp1_value(&eigs, k, t, n);
        if ic < best.1 {
            best = (k, ic);
        }
    }
    Ok(best.0)
}

/// Rotation between estimated and true factors plus the mean squared
/// factor-space approximation error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationDiagnostics {
    #[serde(skip)]
    pub h: DMatrix<f64>,
    pub avg_sq_error: f64,
    pub alpha_assumed: Vec<f64>,
}

/// `H = (N D2)^-1 (F_hat'F / t) B (B^-1 Lambda'Lambda B^-1) B` with
/// `B = diag(N^(alpha_j / 2))`, and `avg_sq_error = |F_hat - F H'|^2 / t`.
///
/// The scaled middle factor is the loading Gram that stays bounded under
/// heterogeneous loading strengths.
pub fn rotation_matrix(
    fe: &FactorEstimate,
    f_true: &DMatrix<f64>,
    lambda_true: &DMatrix<f64>,
    alpha: &[f64],
) -> Result<RotationDiagnostics> {
    let (t, r) = (fe.t, fe.r);
    let n = fe.lambda_hat.nrows();
    let r0 = f_true.ncols();
    if f_true.nrows() != t || lambda_true.nrows() != n || lambda_true.ncols() != r0 {
        return Err(Error::DimensionMismatch(format!(
            "F_true {}x{}, Lambda_true {}x{} vs t = {t}, N = {n}",
            f_true.nrows(),
            r0,
            lambda_true.nrows(),
            lambda_true.ncols()
        )));
    }
    if alpha.len() != r0 || alpha.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Error::InvalidConfig(format!(
            "alpha must have {r0} entries in (0, 1], got {alpha:?}"
        )));
    }
    if let Some(j) = (0..r).find(|&j| fe.d2[j] < EIG_FLOOR) {
        return Err(Error::SingularEigenvalues {
            index: j,
            value: fe.d2[j],
        });
    }
    let nf = n as f64;
    let b = DVector::from_iterator(r0, alpha.iter().map(|a| nf.powf(a / 2.0)));
    let mut lam_scaled = lambda_true.tr_mul(lambda_true);
    for i in 0..r0 {
        for j in 0..r0 {
            lam_scaled[(i, j)] /= b[i] * b[j];
        }
    }
    let bmat = DMatrix::from_diagonal(&b);
    let cross = fe.f_hat.tr_mul(f_true) / t as f64;
    let mut h = cross * &bmat * lam_scaled * &bmat;
    for i in 0..r {
        h.row_mut(i).scale_mut(1.0 / (nf * fe.d2[i]));
    }
    let resid = &fe.f_hat - f_true * h.transpose();
    let avg_sq_error = resid.norm_squared() / t as f64;
    Ok(RotationDiagnostics {
        h,
        avg_sq_error,
        alpha_assumed: alpha.to_vec(),
    })
}

/// Principal components over an expanding window of rows of one panel.
///
/// The Gram matrix is updated incrementally as rows are added and the
/// leading eigenvectors are refined from the previous step by subspace
/// iteration with Rayleigh-Ritz extraction. When the iteration fails to
/// converge the step falls back to a full eigendecomposition, so results
/// agree with [`extract_factors`] up to eigensolver round-off.
#[derive(Debug, Clone)]
pub struct RecursivePca<'a> {
    x: &'a DMatrix<f64>,
    r: usize,
    route: EigenRoute,
    /// Unscaled Gram of the rows seen so far. For the time route this is a
    /// `T x T` buffer of which the leading `t x t` block is filled.
    gram: DMatrix<f64>,
    t: usize,
    block: Option<(DMatrix<f64>, Vec<f64>)>,
    fallbacks: usize,
}

const SUBSPACE_TOL: f64 = 1e-12;
const SUBSPACE_MAX_ITER: usize = 300;
const BLOCK_EXTRA: usize = 4;

impl<'a> RecursivePca<'a> {
    /// The route is fixed from the smallest sample that will be requested.
    pub fn new(x: &'a DMatrix<f64>, r: usize, t_start: usize) -> Self {
        let (big_t, n) = x.shape();
        let route = EigenRoute::Auto.resolve(t_start, n);
        let dim = match route {
            EigenRoute::Cross => n,
            _ => big_t,
        };
        RecursivePca {
            x,
            r,
            route,
            gram: DMatrix::zeros(dim, dim),
            t: 0,
            block: None,
            fallbacks: 0,
        }
    }

    /// Number of steps that needed a full eigendecomposition after the first.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    fn grow_to(&mut self, t: usize) {
        let x = self.x;
        match self.route {
            EigenRoute::Cross => {
                for s in self.t..t {
                    let row = x.row(s).transpose();
                    self.gram.ger(1.0, &row, &row, 1.0);
                }
            }
            _ => {
                for s in self.t..t {
                    let col = x.rows(0, s + 1) * x.row(s).transpose();
                    for (j, v) in col.iter().enumerate() {
                        self.gram[(s, j)] = *v;
                        self.gram[(j, s)] = *v;
                    }
                }
            }
        }
        self.t = t;
    }

    fn active_dim(&self) -> usize {
        match self.route {
            EigenRoute::Cross => self.gram.nrows(),
            _ => self.t,
        }
    }

    /// Estimate on rows `0..t`; `t` must not decrease between calls.
    pub fn estimate(&mut self, t: usize) -> Result<FactorEstimate> {
        let (_, n) = self.x.shape();
        check_r(t, n, self.r)?;
        if t < self.t {
            return Err(Error::InvalidConfig(format!(
                "recursive PCA asked for t = {t} after t = {}",
                self.t
            )));
        }
        let prev_t = self.t;
        self.grow_to(t);
        let m = self.active_dim();
        let b = (self.r + BLOCK_EXTRA).min(m);
        let g = self.gram.view((0, 0), (m, m)).into_owned();

        let warm = self.block.take().map(|(v, theta)| {
            if self.route == EigenRoute::Cross || prev_t == t {
                v
            } else {
                // Extend each Ritz vector to the new rows by one inverse
                // power step restricted to those rows.
                let mut ext = DMatrix::zeros(m, v.ncols());
                ext.rows_mut(0, prev_t).copy_from(&v);
                for s in prev_t..t {
                    for j in 0..v.ncols() {
                        if theta[j] > 0.0 {
                            let gv = g.view((s, 0), (1, prev_t)).dot(&v.column(j).transpose());
                            ext[(s, j)] = gv / theta[j];
                        }
                    }
                }
                ext
            }
        });

        let solved = warm.and_then(|v0| subspace_iteration(&g, v0, self.r));
        let (theta, vecs) = match solved {
            Some(res) => res,
            None => {
                if self.t != 0 && prev_t != 0 {
                    self.fallbacks += 1;
                }
                let (theta, vecs) = sorted_eigen(g);
                let vecs = vecs.columns(0, b).into_owned();
                (theta[..b].to_vec(), vecs)
            }
        };
        let x_t = self.x.rows(0, t).into_owned();
        let out = assemble(&x_t, self.route, &theta, &vecs, self.r);
        self.block = Some((vecs, theta));
        out
    }
}

/// Block subspace iteration for the leading `r` eigenpairs of symmetric `g`.
/// Returns the Ritz values and vectors of the whole block, decreasing.
fn subspace_iteration(
    g: &DMatrix<f64>,
    v0: DMatrix<f64>,
    r: usize,
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let mut v = v0;
    for _ in 0..SUBSPACE_MAX_ITER {
        let q = v.qr().q();
        let y = g * &q;
        let h = q.tr_mul(&y);
        let h = (&h + h.transpose()) * 0.5;
        let (theta, w) = sorted_eigen(h);
        let ritz = &q * &w;
        let sv = y * &w;
        let top = theta[0].abs().max(f64::MIN_POSITIVE);
        let converged = (0..r).all(|j| {
            let res = (sv.column(j) - ritz.column(j) * theta[j]).norm();
            res <= SUBSPACE_TOL * top
        });
        if converged {
            return Some((theta, ritz));
        }
        if !theta.iter().all(|t| t.is_finite()) {
            return None;
        }
        v = sv;
    }
    None
}
