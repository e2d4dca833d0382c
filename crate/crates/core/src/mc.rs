//! Monte Carlo rejection-frequency experiments.
//!
//! Every replication draws one dataset per beta on the grid, builds the
//! error streams once per distinct in-sample fraction and evaluates every
//! requested statistic at every tuning on those streams. The dataset seed
//! depends only on the experiment seed and the replication index, so all
//! cells (betas, tunings and tests) share common random numbers.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::dgp::{generate_dataset, DgpConfig};
use crate::error::{Error, Result};
use crate::forecast::{forecast_error_streams, ForecastErrorStreams, StreamOptions};
use crate::pca::select_num_factors_icp1;
use crate::split::{compute_split_indices, SplitConfig};
use crate::stats::{compute_test, omega2, p_value, PhiEstimator, TestId, TestOptions};

/// Share of failed replications above which a cell is flagged invalid.
pub const MAX_FAILURE_SHARE: f64 = 0.01;

/// A statistic in its raw or power-enhanced form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct TestSpec {
    pub test: TestId,
    pub adjusted: bool,
}

impl TestSpec {
    pub fn raw(test: TestId) -> Self {
        TestSpec { test, adjusted: false }
    }
    pub fn adjusted(test: TestId) -> Self {
        TestSpec { test, adjusted: true }
    }
}

impl fmt::Display for TestSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.test, if self.adjusted { "adj" } else { "" })
    }
}

impl FromStr for TestSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (base, adjusted) = match s.strip_suffix("adj") {
            Some(b) => (b, true),
            None => (s.as_str(), false),
        };
        let test: TestId = base.parse()?;
        if adjusted && !test.has_adjustment() {
            return Err(Error::InvalidConfig("g1 has no adjusted form".into()));
        }
        Ok(TestSpec { test, adjusted })
    }
}

/// How many factors the feasible model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RSelection {
    Fixed(usize),
    /// IC_p1 on the in-sample span with this maximum.
    Icp1(usize),
}

impl fmt::Display for RSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RSelection::Fixed(r) => write!(f, "fixed({r})"),
            RSelection::Icp1(m) => write!(f, "icp1({m})"),
        }
    }
}

impl FromStr for RSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let parse_arg = |inner: &str| {
            inner
                .trim_end_matches(')')
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad factor-number rule '{s}'")))
        };
        if let Some(rest) = s.strip_prefix("icp1(") {
            Ok(RSelection::Icp1(parse_arg(rest)?))
        } else if let Some(rest) = s.strip_prefix("fixed(") {
            Ok(RSelection::Fixed(parse_arg(rest)?))
        } else {
            Err(Error::InvalidConfig(format!(
                "bad factor-number rule '{s}'; expected fixed(r) or icp1(r_max)"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    /// Template; its `beta` and `seed` are replaced per cell and replication.
    pub dgp: DgpConfig,
    pub beta_grid: Vec<Vec<f64>>,
    pub tests: Vec<TestSpec>,
    pub tuning_grid: Vec<SplitConfig>,
    pub replications: usize,
    pub nominal_level: f64,
    /// Estimated factors if true, observed factors otherwise.
    pub feasible: bool,
    pub r_selection: RSelection,
    pub seed: u64,
    pub phi: PhiEstimator,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
}

/// Seed used when an experiment does not set one.
pub const DEFAULT_SEED: u64 = 0;

impl ExperimentSpec {
    pub fn new(dgp: DgpConfig) -> Self {
        let r = dgp.r;
        ExperimentSpec {
            dgp,
            beta_grid: vec![vec![0.0; r]],
            tests: vec![TestSpec::raw(TestId::G1)],
            tuning_grid: vec![SplitConfig::default()],
            replications: 500,
            nominal_level: 0.05,
            feasible: true,
            r_selection: RSelection::Fixed(r),
            seed: DEFAULT_SEED,
            phi: PhiEstimator::Iid,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.dgp.validate()?;
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if !(self.nominal_level > 0.0 && self.nominal_level < 0.5) {
            return bad(format!("nominal_level = {} must lie in (0, 0.5)", self.nominal_level));
        }
        if self.beta_grid.is_empty() || self.tests.is_empty() || self.tuning_grid.is_empty() {
            return bad("beta_grid, tests and tunings must be nonempty".into());
        }
        for (i, b) in self.beta_grid.iter().enumerate() {
            if b.len() != self.dgp.r || b.iter().any(|v| !v.is_finite()) {
                return bad(format!("beta_grid[{i}] must have {} finite entries", self.dgp.r));
            }
        }
        for (i, cfg) in self.tuning_grid.iter().enumerate() {
            let s = compute_split_indices(self.dgp.t, cfg)
                .map_err(|e| Error::InvalidConfig(format!("tuning[{i}]: {e}")))?;
            for t in &self.tests {
                omega2(t.test, cfg, 1.0)
                    .map_err(|e| Error::InvalidConfig(format!("tuning[{i}] with {t}: {e}")))?;
            }
            let limit = s.k0.min(self.dgp.n);
            match self.r_selection {
                RSelection::Fixed(r) if r == 0 || r > limit => {
                    return bad(format!("r = {r} must lie in 1..={limit} for tuning[{i}]"));
                }
                RSelection::Icp1(m) if m == 0 || m + 1 > limit => {
                    return bad(format!("r_max = {m} must lie in 1..={} for tuning[{i}]", limit - 1));
                }
                _ => {}
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    /// Dataset seed of one replication.
    pub fn replication_seed(&self, rep: usize) -> u64 {
        mix_seed(self.seed, rep as u64)
    }

    /// Distinct in-sample fractions in first-appearance order.
    fn pi0_groups(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for c in &self.tuning_grid {
            if !out.contains(&c.pi0()) {
                out.push(c.pi0());
            }
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `rep` of an experiment seeded with `seed`.
pub fn mix_seed(seed: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ rep)
}

/// Simulated statistics of one (beta, tuning, test) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDraws {
    pub beta_index: usize,
    pub tuning_index: usize,
    pub test: TestSpec,
    /// Statistic of every successful replication, in replication order.
    pub statistics: Vec<f64>,
    pub failures: usize,
}

/// Per-replication outcome: one entry per (tuning, test), `None` on failure.
type RepOutcome = Vec<Option<f64>>;

fn streams_for(
    spec: &ExperimentSpec,
    data: &crate::dgp::SimulatedDataset,
    pi0: f64,
) -> Result<ForecastErrorStreams> {
    let base = spec.tuning_grid.iter().find(|c| c.pi0() == pi0).copied().unwrap_or_default();
    let split = compute_split_indices(spec.dgp.t, &base)?;
    let r = match spec.r_selection {
        RSelection::Fixed(r) => r,
        RSelection::Icp1(r_max) => {
            let x_in = data.panel.x().rows(0, split.k0).into_owned();
            select_num_factors_icp1(&x_in, r_max)?
        }
    };
    let opts = StreamOptions {
        feasible: spec.feasible,
        f_true: if spec.feasible { None } else { Some(&data.f_true) },
    };
    forecast_error_streams(&data.panel, &split, r, &opts)
}

fn one_replication(spec: &ExperimentSpec, beta: &[f64], rep: usize) -> RepOutcome {
    let n_cells = spec.tuning_grid.len() * spec.tests.len();
    let cfg = spec
        .dgp
        .clone()
        .with_beta(beta.to_vec())
        .with_seed(spec.replication_seed(rep));
    let data = match generate_dataset(&cfg) {
        Ok(d) => d,
        Err(_) => return vec![None; n_cells],
    };
    let opts = TestOptions {
        feasible: spec.feasible,
        phi: spec.phi,
    };
    let mut out = Vec::with_capacity(n_cells);
    let groups = spec.pi0_groups();
    let streams: Vec<Option<ForecastErrorStreams>> =
        groups.iter().map(|&p| streams_for(spec, &data, p).ok()).collect();
    for tuning in &spec.tuning_grid {
        let g = groups.iter().position(|&p| p == tuning.pi0()).unwrap_or(0);
        for t in &spec.tests {
            let stat = streams[g].as_ref().and_then(|s| {
                compute_test(t.test, s, tuning, &opts).ok().map(|res| {
                    if t.adjusted {
                        res.adjusted_statistic.unwrap_or(res.statistic)
                    } else {
                        res.statistic
                    }
                })
            });
            out.push(stat.filter(|v| v.is_finite()));
        }
    }
    out
}

/// Simulate every cell's statistics without aggregating them.
pub fn simulate_draws(spec: &ExperimentSpec) -> Result<Vec<CellDraws>> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.beta_grid.len())
        .flat_map(|b| (0..spec.replications).map(move |r| (b, r)))
        .collect();
    let run = || -> Vec<RepOutcome> {
        jobs.par_iter()
            .map(|&(b, r)| one_replication(spec, &spec.beta_grid[b], r))
            .collect()
    };
    let outcomes = match spec.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut cells = Vec::new();
    for b in 0..spec.beta_grid.len() {
        let reps = &outcomes[b * spec.replications..(b + 1) * spec.replications];
        for (ti, _) in spec.tuning_grid.iter().enumerate() {
            for (ki, test) in spec.tests.iter().enumerate() {
                let idx = ti * spec.tests.len() + ki;
                let mut statistics = Vec::with_capacity(spec.replications);
                let mut failures = 0;
                for rep in reps {
                    match rep[idx] {
                        Some(v) => statistics.push(v),
                        None => failures += 1,
                    }
                }
                cells.push(CellDraws {
                    beta_index: b,
                    tuning_index: ti,
                    test: *test,
                    statistics,
                    failures,
                });
            }
        }
    }
    Ok(cells)
}

/// One aggregated cell of a rejection table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionRow {
    pub test: TestSpec,
    pub beta: Vec<f64>,
    pub tuning: SplitConfig,
    pub rejection: f64,
    pub stderr: f64,
    pub rejections: usize,
    pub valid_replications: usize,
    pub failures: usize,
    /// False when more than 1% of replications failed.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionTable {
    pub nominal_level: f64,
    pub replications: usize,
    pub feasible: bool,
    pub rows: Vec<RejectionRow>,
}

/// Aggregate simulated draws into rejection frequencies.
pub fn tabulate(spec: &ExperimentSpec, draws: &[CellDraws]) -> RejectionTable {
    let rows = draws
        .iter()
        .map(|c| {
            let valid_replications = c.statistics.len();
            let rejections = c
                .statistics
                .iter()
                .filter(|s| p_value(**s) < spec.nominal_level)
                .count();
            let p = if valid_replications > 0 {
                rejections as f64 / valid_replications as f64
            } else {
                f64::NAN
            };
            let stderr = (p * (1.0 - p) / valid_replications as f64).sqrt();
            RejectionRow {
                test: c.test,
                beta: spec.beta_grid[c.beta_index].clone(),
                tuning: spec.tuning_grid[c.tuning_index],
                rejection: p,
                stderr,
                rejections,
                valid_replications,
                failures: c.failures,
                valid: valid_replications > 0
                    && (c.failures as f64) <= MAX_FAILURE_SHARE * spec.replications as f64,
            }
        })
        .collect();
    RejectionTable {
        nominal_level: spec.nominal_level,
        replications: spec.replications,
        feasible: spec.feasible,
        rows,
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<RejectionTable> {
    let draws = simulate_draws(spec)?;
    Ok(tabulate(spec, &draws))
}

/// `0.2` for a constant vector, `0.1;0.2;0.3` otherwise.
pub fn format_beta(beta: &[f64]) -> String {
    if beta.windows(2).all(|w| w[0] == w[1]) {
        format!("{}", beta.first().copied().unwrap_or(0.0))
    } else {
        beta.iter().map(|b| format!("{b}")).collect::<Vec<_>>().join(";")
    }
}

impl RejectionTable {
    pub fn has_invalid(&self) -> bool {
        self.rows.iter().any(|r| !r.valid)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidConfig(format!("writing CSV: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "test", "adjusted", "beta", "pi0", "mu0", "tau0", "lambda1", "lambda2", "rejection",
            "stderr", "failures", "valid",
        ])
        .map_err(io)?;
        for r in &self.rows {
            let t = &r.tuning;
            w.write_record([
                r.test.test.to_string(),
                r.test.adjusted.to_string(),
                format_beta(&r.beta),
                format!("{}", t.pi0()),
                format!("{}", t.mu0()),
                format!("{}", t.tau0()),
                format!("{}", t.lambda1()),
                format!("{}", t.lambda2()),
                format!("{:.4}", r.rejection),
                format!("{:.4}", r.stderr),
                r.failures.to_string(),
                r.valid.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidConfig(format!("writing CSV: {e}")))?;
        Ok(())
    }

    /// Rejection frequencies with one block per tuning, betas down the rows
    /// and tests across the columns.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kind = if self.feasible { "estimated" } else { "observed" };
        s.push_str(&format!(
            "Size/Power (nominal {:.0}%), R = {}, {kind} factors\n",
            self.nominal_level * 100.0,
            self.replications
        ));
        let mut tunings: Vec<SplitConfig> = Vec::new();
        for r in &self.rows {
            if !tunings.contains(&r.tuning) {
                tunings.push(r.tuning);
            }
        }
        for t in tunings {
            let rows: Vec<&RejectionRow> = self.rows.iter().filter(|r| r.tuning == t).collect();
            let mut tests: Vec<TestSpec> = Vec::new();
            let mut betas: Vec<&Vec<f64>> = Vec::new();
            for r in &rows {
                if !tests.contains(&r.test) {
                    tests.push(r.test);
                }
                if !betas.contains(&&r.beta) {
                    betas.push(&r.beta);
                }
            }
            s.push_str(&format!(
                "\npi0 = {}, mu0 = {}, tau0 = {}, lambda1 = {}, lambda2 = {}\n",
                t.pi0(),
                t.mu0(),
                t.tau0(),
                t.lambda1(),
                t.lambda2()
            ));
            s.push_str(&format!("{:>14}", "beta"));
            for k in &tests {
                s.push_str(&format!("{:>9}", k.to_string()));
            }
            s.push('\n');
            for b in betas {
                s.push_str(&format!("{:>14}", format_beta(b)));
                for k in &tests {
                    let cell = rows.iter().find(|r| &r.beta == b && r.test == *k);
                    match cell {
                        Some(r) if r.valid => s.push_str(&format!("{:>9.3}", r.rejection)),
                        Some(r) => s.push_str(&format!("{:>8.3}*", r.rejection)),
                        None => s.push_str(&format!("{:>9}", "")),
                    }
                }
                s.push('\n');
            }
        }
        if self.has_invalid() {
            s.push_str("\n* more than 1% of replications failed\n");
        }
        s
    }
}
