//! Simulation design for size and power studies.
//!
//! `y_{t+1} = c + theta1 y_t + beta' f_t + u_{t+1}` with `f_t ~ N(0, I_r)`,
//! panel `x_it = lambda_i' f_t + e_it`, loadings of strength `N^alpha_j`,
//! AR(1) idiosyncratic errors (optionally cross-sectionally dependent
//! through a banded moving average) and i.i.d. or GARCH(1,1) errors `u`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{ar1_intercept, PanelData};

/// Periods simulated and discarded before the sample starts.
pub const BURN_IN: usize = 200;

/// Clamp applied to the drawn AR(1) coefficients of the idiosyncratics.
pub const RHO_CLAMP: f64 = 0.97;

const STREAM_FACTORS: u64 = 1;
const STREAM_LOADINGS: u64 = 2;
const STREAM_RHO: u64 = 3;
const STREAM_IDIO: u64 = 4;
const STREAM_ERRORS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub t: usize,
    pub r: usize,
    pub c: f64,
    pub theta1: f64,
    pub beta: Vec<f64>,
    /// Loading strengths, decreasing, each in (0, 1].
    pub alphas: Vec<f64>,
    pub d2diag: Vec<f64>,
    pub pi_perturb: f64,
    pub rho_mean: f64,
    pub rho_scale: f64,
    pub cs_dependence: bool,
    pub xi: f64,
    pub k: usize,
    pub garch: bool,
    /// `(omega, alpha, eta)`.
    pub garch_params: (f64, f64, f64),
    pub seed: u64,
}

impl DgpConfig {
    /// Baseline design: three strong factors, `beta = 0`, i.i.d. errors,
    /// no cross-sectional dependence.
    pub fn baseline(n: usize, t: usize) -> Self {
        DgpConfig {
            n,
            t,
            r: 3,
            c: 1.25,
            theta1: 0.5,
            beta: vec![0.0; 3],
            alphas: vec![1.0; 3],
            d2diag: vec![3.0, 2.0, 1.0],
            pi_perturb: 24.0,
            rho_mean: 0.3,
            rho_scale: 0.5,
            cs_dependence: false,
            xi: 0.4,
            k: 5,
            garch: false,
            garch_params: (0.1, 0.1, 0.2),
            seed: 0,
        }
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_alphas(mut self, alphas: Vec<f64>) -> Self {
        self.alphas = alphas;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 2 || self.t < crate::split::MIN_SAMPLE {
            return bad(format!("dgp needs N >= 2 and T >= 10, got N = {}, T = {}", self.n, self.t));
        }
        if self.r == 0 {
            return bad("dgp.r must be positive".into());
        }
        for (name, len) in [
            ("beta", self.beta.len()),
            ("alphas", self.alphas.len()),
            ("d2diag", self.d2diag.len()),
        ] {
            if len != self.r {
                return bad(format!("dgp.{name} has {len} entries, r = {}", self.r));
            }
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return bad(format!("dgp.alphas must lie in (0, 1], got {:?}", self.alphas));
        }
        if self.alphas.windows(2).any(|w| w[0] < w[1]) {
            return bad(format!("dgp.alphas must be decreasing, got {:?}", self.alphas));
        }
        if self.d2diag.iter().any(|d| !(*d >= 0.0)) {
            return bad("dgp.d2diag entries must be nonnegative".into());
        }
        let (om, a, e) = self.garch_params;
        if self.garch && !(om > 0.0 && a >= 0.0 && e >= 0.0 && a + e < 1.0) {
            return bad(format!(
                "dgp.garch_params = ({om}, {a}, {e}) must satisfy omega > 0, alpha + eta < 1"
            ));
        }
        let finite = [self.c, self.theta1, self.pi_perturb, self.rho_mean, self.rho_scale, self.xi];
        if finite.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return bad("dgp contains a non-finite parameter".into());
        }
        Ok(())
    }
}

/// A simulated panel together with the latent quantities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    /// `X`, `y` and `W = [1, y_t]`.
    pub panel: PanelData,
    pub f_true: DMatrix<f64>,
    pub lambda_true: DMatrix<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn randn<R: rand::Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `lambda_i = G_i (D B_N + pi I) / sqrt(N)` with one draw `G_i ~ N(0, I_r)`
/// per row, `D = diag(sqrt(d2diag))` and `B_N = diag(N^(alpha_j / 2))`.
pub fn simulate_loadings<R: rand::Rng>(
    n: usize,
    r: usize,
    alphas: &[f64],
    d2diag: &[f64],
    pi_perturb: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let nf = n as f64;
    let scale: Vec<f64> = (0..r)
        .map(|j| (d2diag[j].sqrt() * nf.powf(alphas[j] / 2.0) + pi_perturb) / nf.sqrt())
        .collect();
    let mut out = DMatrix::zeros(n, r);
    for i in 0..n {
        for j in 0..r {
            out[(i, j)] = randn(rng) * scale[j];
        }
    }
    out
}

/// AR(1) idiosyncratic errors `e_it = rho_i e_i,t-1 + sqrt(1 - rho_i^2) v_it`,
/// started at zero and run for [`BURN_IN`] periods before the `T` returned
/// rows. With `cs_dependence`, `v_it = eps_it + xi sum_{k=1..K}
/// (eps_i-k,t + eps_i+k,t)` with neighbours outside `0..N` dropped.
pub fn simulate_idiosyncratics<R: rand::Rng>(
    n: usize,
    t: usize,
    rho: &[f64],
    cs_dependence: bool,
    xi: f64,
    k: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let scale: Vec<f64> = rho.iter().map(|p| (1.0 - p * p).max(0.0).sqrt()).collect();
    let mut e = vec![0.0; n];
    let mut eps = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut out = DMatrix::zeros(t, n);
    for s in 0..BURN_IN + t {
        for x in eps.iter_mut() {
            *x = randn(rng);
        }
        if cs_dependence {
            for i in 0..n {
                let lo = i.saturating_sub(k);
                let hi = (i + k).min(n - 1);
                let band: f64 = eps[lo..=hi].iter().sum::<f64>() - eps[i];
                v[i] = eps[i] + xi * band;
            }
        } else {
            v.copy_from_slice(&eps);
        }
        for i in 0..n {
            e[i] = rho[i] * e[i] + scale[i] * v[i];
        }
        if s >= BURN_IN {
            for i in 0..n {
                out[(s - BURN_IN, i)] = e[i];
            }
        }
    }
    out
}

/// GARCH(1,1) errors `u_t = sigma_t eps_t`, `sigma^2_{t+1} = omega +
/// alpha u_t^2 + eta sigma^2_t`, with `sigma^2_1 = omega / (1 - alpha - eta)`.
pub fn simulate_garch<R: rand::Rng>(t: usize, omega: f64, alpha: f64, eta: f64, rng: &mut R) -> Vec<f64> {
    let mut s2 = omega / (1.0 - alpha - eta);
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        let u = s2.sqrt() * randn(rng);
        out.push(u);
        s2 = omega + alpha * u * u + eta * s2;
    }
    out
}

/// Draw one dataset. Factors, loadings, AR coefficients, idiosyncratics and
/// forecast errors each use their own ChaCha stream under `cfg.seed`, so
/// changing one block of parameters leaves the other draws unchanged.
pub fn generate_dataset(cfg: &DgpConfig) -> Result<SimulatedDataset> {
    cfg.validate()?;
    let (n, t, r) = (cfg.n, cfg.t, cfg.r);
    let len = BURN_IN + t;

    let mut rng_f = stream(cfg.seed, STREAM_FACTORS);
    let f_full = DMatrix::from_fn(len, r, |_, _| randn(&mut rng_f));

    let mut rng_l = stream(cfg.seed, STREAM_LOADINGS);
    let lambda = simulate_loadings(n, r, &cfg.alphas, &cfg.d2diag, cfg.pi_perturb, &mut rng_l);

    let mut rng_rho = stream(cfg.seed, STREAM_RHO);
    let rho: Vec<f64> = (0..n)
        .map(|_| (cfg.rho_mean + cfg.rho_scale * randn(&mut rng_rho)).clamp(-RHO_CLAMP, RHO_CLAMP))
        .collect();

    let mut rng_e = stream(cfg.seed, STREAM_IDIO);
    let e = simulate_idiosyncratics(n, t, &rho, cfg.cs_dependence, cfg.xi, cfg.k, &mut rng_e);

    let mut rng_u = stream(cfg.seed, STREAM_ERRORS);
    let u = if cfg.garch {
        let (om, a, eta) = cfg.garch_params;
        simulate_garch(len, om, a, eta, &mut rng_u)
    } else {
        (0..len).map(|_| randn(&mut rng_u)).collect()
    };

    let mut y_full = vec![0.0; len];
    for s in 0..len - 1 {
        let bf: f64 = (0..r).map(|j| cfg.beta[j] * f_full[(s, j)]).sum();
        y_full[s + 1] = cfg.c + cfg.theta1 * y_full[s] + bf + u[s + 1];
    }

    let f_true = f_full.rows(BURN_IN, t).into_owned();
    let x = &f_true * lambda.transpose() + e;
    let y = DVector::from_row_slice(&y_full[BURN_IN..]);
    let w = ar1_intercept(&y);
    Ok(SimulatedDataset {
        panel: PanelData::new(x, y, w)?,
        f_true,
        lambda_true: lambda,
    })
}
