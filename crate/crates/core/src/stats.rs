//! Encompassing (g1) and accuracy (g2, g3, g4) statistics, their variance
//! estimators, power-enhancement terms and one-sided p-values.
//!
//! All statistics reject for large positive values; p-values are upper-tail
//! standard normal probabilities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::forecast::ForecastErrorStreams;
use crate::split::{compute_split_indices, SplitConfig, SplitIndices};
use crate::sum::{ksum, prefix_sums, NeumaierSum};

/// Below this the squared-error variance is treated as zero.
pub const PHI_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestId {
    G1,
    G2,
    G3,
    G4,
}

impl TestId {
    pub const ALL: [TestId; 4] = [TestId::G1, TestId::G2, TestId::G3, TestId::G4];

    pub fn has_adjustment(self) -> bool {
        self != TestId::G1
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TestId::G1 => "g1",
            TestId::G2 => "g2",
            TestId::G3 => "g3",
            TestId::G4 => "g4",
        };
        f.write_str(s)
    }
}

impl FromStr for TestId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g1" => Ok(TestId::G1),
            "g2" => Ok(TestId::G2),
            "g3" => Ok(TestId::G3),
            "g4" => Ok(TestId::G4),
            other => Err(Error::InvalidConfig(format!("unknown test '{other}'"))),
        }
    }
}

/// Estimator of `phi^2`, the variance of the squared unrestricted errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiEstimator {
    /// Sample variance (divisor n) of the squared errors.
    #[default]
    Iid,
    /// Bartlett-kernel long-run variance; `None` uses `floor(4 (n/100)^(2/9))` lags.
    NeweyWest { lags: Option<usize> },
}

/// Outcome of one statistic on one pair of error streams.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub test_id: TestId,
    pub statistic: f64,
    pub adjusted_statistic: Option<f64>,
    pub adjustment: Option<f64>,
    pub phi2: f64,
    pub omega2: f64,
    pub p_value: f64,
    pub p_value_adjusted: Option<f64>,
    pub feasible: bool,
    pub tunings: SplitConfig,
    pub split: SplitIndices,
}

/// Upper-tail standard normal probability `1 - Phi(x)`.
pub fn p_value(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `n^-1 sum (u_j^2 - mean(u^2))^2`.
pub fn phi_hat2(u2: &[f64]) -> Result<f64> {
    let n = u2.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "phi^2 needs at least 2 errors, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = ksum(u2.iter().map(|u| u * u)) / nf;
    let v = ksum(u2.iter().map(|u| (u * u - mean).powi(2))) / nf;
    if !(v >= PHI_FLOOR) {
        return Err(Error::DegenerateVariance(v));
    }
    Ok(v)
}

/// Bartlett-kernel long-run variance of the squared errors.
pub fn phi_newey_west(u2: &[f64], lags: Option<usize>) -> Result<f64> {
    let n = u2.len();
    let base = phi_hat2(u2)?;
    let nf = n as f64;
    let lags = lags
        .unwrap_or_else(|| (4.0 * (nf / 100.0).powf(2.0 / 9.0)).floor() as usize)
        .min(n - 1);
    let sq: Vec<f64> = u2.iter().map(|u| u * u).collect();
    let mean = ksum(sq.iter().copied()) / nf;
    let mut lrv = NeumaierSum::new();
    lrv.add(base);
    for l in 1..=lags {
        let gamma = ksum((l..n).map(|j| (sq[j] - mean) * (sq[j - l] - mean))) / nf;
        lrv.add(2.0 * (1.0 - l as f64 / (lags as f64 + 1.0)) * gamma);
    }
    let v = lrv.value();
    if !(v >= PHI_FLOOR) {
        return Err(Error::DegenerateVariance(v));
    }
    Ok(v)
}

fn phi_for(u2: &[f64], est: PhiEstimator) -> Result<f64> {
    match est {
        PhiEstimator::Iid => phi_hat2(u2),
        PhiEstimator::NeweyWest { lags } => phi_newey_west(u2, lags),
    }
}

/// Variance multiplier of the averaged statistics for window fraction `lam`.
fn gamma_averaged(lam: f64, tau: f64) -> f64 {
    let d = lam * (1.0 - tau).powi(2);
    if lam <= tau {
        ((1.0 - tau).powi(2) + 2.0 * lam * (1.0 - tau + tau.ln())) / d
    } else {
        (1.0 - tau * tau + 2.0 * lam * ((1.0 - tau) * lam.ln() + tau * tau.ln())) / d
    }
}

/// Closed-form asymptotic variance `omega_j^2 = phi^2 gamma_j^2`.
pub fn omega2(test: TestId, cfg: &SplitConfig, phi2: f64) -> Result<f64> {
    if !(phi2 > 0.0) {
        return Err(Error::DegenerateVariance(phi2));
    }
    let (mu, tau, l1, l2) = (cfg.mu0(), cfg.tau0(), cfg.lambda1(), cfg.lambda2());
    let gamma = match test {
        TestId::G1 => (1.0 - 2.0 * mu).powi(2) / (4.0 * mu * (1.0 - mu)),
        TestId::G2 => (l1 - l2).abs() / (l1 * l2),
        TestId::G3 => gamma_averaged(l2, tau),
        TestId::G4 => gamma_averaged(l1, tau),
    };
    let w = phi2 * gamma;
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::DegenerateTuning(format!(
            "omega^2 for {test} is {w:e} at mu0 = {mu}, tau0 = {tau}, lambda1 = {l1}, lambda2 = {l2}"
        )));
    }
    Ok(w)
}

/// Options shared by all statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TestOptions {
    /// Use the estimated-factor stream (otherwise the observed-factor one).
    pub feasible: bool,
    pub phi: PhiEstimator,
}

impl TestOptions {
    pub fn feasible(feasible: bool) -> Self {
        TestOptions {
            feasible,
            phi: PhiEstimator::Iid,
        }
    }
}

/// Split indices for `cfg`, checked against the in-sample length used to
/// build the streams.
fn split_for(streams: &ForecastErrorStreams, cfg: &SplitConfig) -> Result<SplitIndices> {
    let s = compute_split_indices(streams.split.t_total(), cfg)?;
    if s.k0 != streams.split.k0 || s.n != streams.n() {
        return Err(Error::DimensionMismatch(format!(
            "streams were built with k0 = {}, tunings give k0 = {}",
            streams.split.k0, s.k0
        )));
    }
    Ok(s)
}

/// Partial sums needed by every statistic.
struct Sums {
    n: usize,
    sqrt_n: f64,
    u1_sq: Vec<f64>,
    u2_sq: Vec<f64>,
    diff_sq: Vec<f64>,
}

impl Sums {
    fn new(u1: &[f64], u2: &[f64]) -> Result<Self> {
        if u1.len() != u2.len() {
            return Err(Error::DimensionMismatch(format!(
                "u1 has {} entries, u2 has {}",
                u1.len(),
                u2.len()
            )));
        }
        let n = u1.len();
        let sq = |v: &[f64]| prefix_sums(&v.iter().map(|x| x * x).collect::<Vec<_>>());
        let diff: Vec<f64> = u1.iter().zip(u2).map(|(a, b)| (a - b) * (a - b)).collect();
        Ok(Sums {
            n,
            sqrt_n: (n as f64).sqrt(),
            u1_sq: sq(u1),
            u2_sq: sq(u2),
            diff_sq: prefix_sums(&diff),
        })
    }

    /// `(n/l1) n^-1/2 sum_{j<l1} u1^2 - (n/l2) n^-1/2 sum_{j<l2} u2^2`.
    fn g2_core(&self, l1: usize, l2: usize) -> f64 {
        let nf = self.n as f64;
        (nf / l1 as f64) * self.u1_sq[l1] / self.sqrt_n
            - (nf / l2 as f64) * self.u2_sq[l2] / self.sqrt_n
    }

    fn diff_window(&self, l: usize) -> f64 {
        self.diff_sq[l] / self.sqrt_n
    }
}

fn g1_numerator(u1: &[f64], u2: &[f64], m0: usize) -> f64 {
    let n = u1.len();
    let (nf, sqrt_n) = (n as f64, (n as f64).sqrt());
    let s11 = ksum(u1.iter().map(|u| u * u));
    let head = ksum((0..m0).map(|j| u1[j] * u2[j]));
    let tail = ksum((m0..n).map(|j| u1[j] * u2[j]));
    let mut acc = NeumaierSum::new();
    acc.add(s11 / sqrt_n);
    acc.add(-0.5 * (nf / m0 as f64) * head / sqrt_n);
    acc.add(-0.5 * (nf / (n - m0) as f64) * tail / sqrt_n);
    acc.value()
}

/// Averaging range `floor(n tau0) + 1 ..= n` and its normaliser `n (1 - tau0)`.
fn averaging(s: &SplitIndices, cfg: &SplitConfig) -> (std::ops::RangeInclusive<usize>, f64) {
    (s.tau_floor + 1..=s.n, s.n as f64 * (1.0 - cfg.tau0()))
}

/// Unnormalised statistic (numerator before dividing by omega).
fn numerator(test: TestId, sums: &Sums, u1: &[f64], u2: &[f64], s: &SplitIndices, cfg: &SplitConfig) -> f64 {
    match test {
        TestId::G1 => g1_numerator(u1, u2, s.m0),
        TestId::G2 => sums.g2_core(s.l1, s.l2),
        TestId::G3 => {
            let (range, norm) = averaging(s, cfg);
            ksum(range.map(|l1| sums.g2_core(l1, s.l2))) / norm
        }
        TestId::G4 => {
            let (range, norm) = averaging(s, cfg);
            ksum(range.map(|l2| sums.g2_core(s.l1, l2))) / norm
        }
    }
}

/// Unscaled power-enhancement term (before dividing by omega).
fn adjustment_numerator(test: TestId, sums: &Sums, s: &SplitIndices, cfg: &SplitConfig) -> f64 {
    match test {
        TestId::G1 => 0.0,
        TestId::G2 | TestId::G3 => sums.diff_window(s.l2) / cfg.lambda2(),
        TestId::G4 => {
            let (range, norm) = averaging(s, cfg);
            let nf = s.n as f64;
            ksum(range.map(|l2| (nf / l2 as f64) * sums.diff_window(l2))) / norm
        }
    }
}

/// Any of the four statistics with its power-enhanced variant.
pub fn compute_test(
    test: TestId,
    streams: &ForecastErrorStreams,
    cfg: &SplitConfig,
    opts: &TestOptions,
) -> Result<TestResult> {
    let s = split_for(streams, cfg)?;
    let u1 = &streams.u1;
    let u2 = streams.u2(opts.feasible)?;
    let sums = Sums::new(u1, u2)?;
    let phi2 = phi_for(u2, opts.phi)?;
    let w2 = omega2(test, cfg, phi2)?;
    let omega = w2.sqrt();
    let statistic = numerator(test, &sums, u1, u2, &s, cfg) / omega;
    let (adjustment, adjusted_statistic, p_value_adjusted) = if test.has_adjustment() {
        let a = adjustment_numerator(test, &sums, &s, cfg) / omega;
        let adj = statistic + a;
        (Some(a), Some(adj), Some(p_value(adj)))
    } else {
        (None, None, None)
    };
    Ok(TestResult {
        test_id: test,
        statistic,
        adjusted_statistic,
        adjustment,
        phi2,
        omega2: w2,
        p_value: p_value(statistic),
        p_value_adjusted,
        feasible: opts.feasible,
        tunings: *cfg,
        split: s,
    })
}

pub fn g1_encompassing(
    streams: &ForecastErrorStreams,
    cfg: &SplitConfig,
    feasible: bool,
) -> Result<TestResult> {
    compute_test(TestId::G1, streams, cfg, &TestOptions::feasible(feasible))
}

pub fn g2_accuracy(
    streams: &ForecastErrorStreams,
    cfg: &SplitConfig,
    feasible: bool,
) -> Result<TestResult> {
    compute_test(TestId::G2, streams, cfg, &TestOptions::feasible(feasible))
}

pub fn g3_averaged(
    streams: &ForecastErrorStreams,
    cfg: &SplitConfig,
    feasible: bool,
) -> Result<TestResult> {
    compute_test(TestId::G3, streams, cfg, &TestOptions::feasible(feasible))
}

pub fn g4_averaged(
    streams: &ForecastErrorStreams,
    cfg: &SplitConfig,
    feasible: bool,
) -> Result<TestResult> {
    compute_test(TestId::G4, streams, cfg, &TestOptions::feasible(feasible))
}

/// Power-enhancement term for g2, g3 or g4 on the feasible streams.
pub fn power_adjustment(
    test: TestId,
    streams: &ForecastErrorStreams,
    cfg: &SplitConfig,
) -> Result<f64> {
    power_adjustment_with(test, streams, cfg, &TestOptions::feasible(true))
}

pub fn power_adjustment_with(
    test: TestId,
    streams: &ForecastErrorStreams,
    cfg: &SplitConfig,
    opts: &TestOptions,
) -> Result<f64> {
    if !test.has_adjustment() {
        return Err(Error::InvalidConfig("g1 has no power adjustment".into()));
    }
    let s = split_for(streams, cfg)?;
    let u2 = streams.u2(opts.feasible)?;
    let sums = Sums::new(&streams.u1, u2)?;
    let w2 = omega2(test, cfg, phi_for(u2, opts.phi)?)?;
    Ok(adjustment_numerator(test, &sums, &s, cfg) / w2.sqrt())
}
