//! Sample-split tunings and the integer indices derived from them.
//!
//! The first `k0 = floor(T * pi0)` observations initialise the recursion and
//! the remaining `n = T - k0` one-step forecast errors feed the statistics.
//! Inside the out-of-sample span, `m0 = floor(n * mu0)` splits the
//! encompassing average, `l_j = floor(n * lambda_j)` bound the two
//! overlapping accuracy windows and `floor(n * tau0)` starts the averaging
//! range of the averaged accuracy statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sample length accepted by the split arithmetic.
pub const MIN_SAMPLE: usize = 10;

/// Tuning fractions shared by the four statistics.
///
/// All fractions are validated on construction; values are immutable
/// afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pi0: f64,
    mu0: f64,
    tau0: f64,
    lambda1: f64,
    lambda2: f64,
}

impl Default for SplitConfig {
    /// `pi0 = 0.5`, `mu0 = 0.40`, `tau0 = 0.8`, `lambda1 = 1`, `lambda2 = 0.65`.
    fn default() -> Self {
        SplitConfig {
            pi0: 0.5,
            mu0: 0.40,
            tau0: 0.8,
            lambda1: 1.0,
            lambda2: 0.65,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} = {v} must lie in (0, 1)")))
    }
}

fn half_open_unit(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} = {v} must lie in (0, 1]")))
    }
}

impl SplitConfig {
    pub fn new(pi0: f64, mu0: f64, tau0: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        open_unit("pi0", pi0)?;
        open_unit("mu0", mu0)?;
        if mu0 == 0.5 {
            return Err(Error::InvalidConfig(
                "mu0 = 0.5 makes the encompassing variance degenerate".into(),
            ));
        }
        open_unit("tau0", tau0)?;
        half_open_unit("lambda1", lambda1)?;
        half_open_unit("lambda2", lambda2)?;
        Ok(SplitConfig {
            pi0,
            mu0,
            tau0,
            lambda1,
            lambda2,
        })
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }
    pub fn mu0(&self) -> f64 {
        self.mu0
    }
    pub fn tau0(&self) -> f64 {
        self.tau0
    }
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn with_pi0(self, pi0: f64) -> Result<Self> {
        Self::new(pi0, self.mu0, self.tau0, self.lambda1, self.lambda2)
    }
    pub fn with_mu0(self, mu0: f64) -> Result<Self> {
        Self::new(self.pi0, mu0, self.tau0, self.lambda1, self.lambda2)
    }
    pub fn with_tau0(self, tau0: f64) -> Result<Self> {
        Self::new(self.pi0, self.mu0, tau0, self.lambda1, self.lambda2)
    }
    pub fn with_lambda1(self, lambda1: f64) -> Result<Self> {
        Self::new(self.pi0, self.mu0, self.tau0, lambda1, self.lambda2)
    }
    pub fn with_lambda2(self, lambda2: f64) -> Result<Self> {
        Self::new(self.pi0, self.mu0, self.tau0, self.lambda1, lambda2)
    }
}

/// Integer split points for a sample of length `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    /// In-sample length.
    pub k0: usize,
    /// Number of one-step forecasts, `T - k0`.
    pub n: usize,
    /// Encompassing split point inside the out-of-sample span.
    pub m0: usize,
    pub l1: usize,
    pub l2: usize,
    /// `floor(n * tau0)`; the averaging range is `tau_floor + 1 ..= n`.
    pub tau_floor: usize,
}

impl SplitIndices {
    pub fn t_total(&self) -> usize {
        self.k0 + self.n
    }
}

// Decimal fractions such as 0.29 are not exact in binary; the nudge keeps
// floor(100 * 0.29) at 29.
fn floor_frac(len: usize, frac: f64) -> usize {
    ((len as f64) * frac + 1e-9).floor() as usize
}

/// Derive `k0, n, m0, l1, l2` and `floor(n * tau0)` from the tunings.
pub fn compute_split_indices(t_total: usize, cfg: &SplitConfig) -> Result<SplitIndices> {
    if t_total < MIN_SAMPLE {
        return Err(Error::DegenerateSplit(format!(
            "T = {t_total} is below the minimum of {MIN_SAMPLE}"
        )));
    }
    let k0 = floor_frac(t_total, cfg.pi0);
    let n = t_total - k0;
    if k0 == 0 || n == 0 {
        return Err(Error::DegenerateSplit(format!(
            "k0 = {k0}, n = {n} for T = {t_total}, pi0 = {}",
            cfg.pi0
        )));
    }
    let m0 = floor_frac(n, cfg.mu0);
    let l1 = floor_frac(n, cfg.lambda1).min(n);
    let l2 = floor_frac(n, cfg.lambda2).min(n);
    let tau_floor = floor_frac(n, cfg.tau0);
    if m0 == 0 || m0 >= n {
        return Err(Error::DegenerateSplit(format!(
            "m0 = {m0} with n = {n}; T = {t_total} is too short for mu0 = {}",
            cfg.mu0
        )));
    }
    if l1 == 0 || l2 == 0 {
        return Err(Error::DegenerateSplit(format!(
            "l1 = {l1}, l2 = {l2} with n = {n}"
        )));
    }
    if tau_floor >= n {
        return Err(Error::DegenerateSplit(format!(
            "floor(n * tau0) = {tau_floor} leaves no averaging range for n = {n}"
        )));
    }
    Ok(SplitIndices {
        k0,
        n,
        m0,
        l1,
        l2,
        tau_floor,
    })
}
