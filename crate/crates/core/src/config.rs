//! Flat `key = value` configuration files with dotted sections.
//!
//! Lines starting with `#` and blank lines are ignored. Lists use commas;
//! the beta grid separates its points with `;`, and a scalar point `j`
//! stands for `(j, ..., j)`.
//!
//! ```text
//! seed = 42
//! replications = 500
//! dgp.N = 100
//! dgp.T = 350
//! beta_grid = 0; 0.2; 0.6
//! tests = g1, g2adj, g3adj, g4adj
//! tuning.0.lambda2 = 0.65
//! tuning.1.lambda2 = 0.6
//! ```

use std::collections::BTreeMap;

use crate::dgp::DgpConfig;
use crate::error::{Error, Result};
use crate::mc::{ExperimentSpec, RSelection, TestSpec};
use crate::split::SplitConfig;
use crate::stats::{PhiEstimator, TestId};

/// One `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

fn field_err(e: &Entry, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("line {}: {}: {msg}", e.line, e.key))
}

/// Split a config text into entries; duplicate keys are rejected.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {line}: expected 'key = value', got '{body}'"))
        })?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!("line {line}: empty key")));
        }
        if let Some(prev) = seen.insert(key.clone(), line) {
            return Err(Error::InvalidConfig(format!(
                "line {line}: {key}: already set on line {prev}"
            )));
        }
        out.push(Entry {
            line,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Entries from an inline `key=value,key=value` list (as on the command line).
pub fn parse_inline(text: &str) -> Result<Vec<Entry>> {
    parse_entries(&text.split(',').collect::<Vec<_>>().join("\n"))
}

fn num<T: std::str::FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse::<T>()
        .map_err(|_| field_err(e, format!("cannot parse '{}'", e.value)))
}

fn float(e: &Entry) -> Result<f64> {
    let v: f64 = num(e)?;
    if !v.is_finite() {
        return Err(field_err(e, "must be finite"));
    }
    Ok(v)
}

fn boolean(e: &Entry) -> Result<bool> {
    match e.value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(field_err(e, format!("expected true or false, got '{}'", e.value))),
    }
}

fn float_list(e: &Entry, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| field_err(e, format!("cannot parse '{}' as a number", p.trim())))
        })
        .collect()
}

fn phi_estimator(e: &Entry) -> Result<PhiEstimator> {
    let v = e.value.to_ascii_lowercase();
    if v == "iid" {
        return Ok(PhiEstimator::Iid);
    }
    if v == "newey_west" {
        return Ok(PhiEstimator::NeweyWest { lags: None });
    }
    if let Some(inner) = v.strip_prefix("newey_west(").and_then(|s| s.strip_suffix(')')) {
        let lags = inner
            .trim()
            .parse()
            .map_err(|_| field_err(e, format!("bad lag count '{inner}'")))?;
        return Ok(PhiEstimator::NeweyWest { lags: Some(lags) });
    }
    Err(field_err(e, "expected iid, newey_west or newey_west(L)"))
}

/// Raw tuning fields before validation; unset fields take the defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningFields {
    pub pi0: f64,
    pub mu0: f64,
    pub tau0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl From<SplitConfig> for TuningFields {
    fn from(c: SplitConfig) -> Self {
        TuningFields {
            pi0: c.pi0(),
            mu0: c.mu0(),
            tau0: c.tau0(),
            lambda1: c.lambda1(),
            lambda2: c.lambda2(),
        }
    }
}

impl TuningFields {
    fn set(&mut self, field: &str, e: &Entry) -> Result<()> {
        let v = float(e)?;
        match field {
            "pi0" => self.pi0 = v,
            "mu0" => self.mu0 = v,
            "tau0" => self.tau0 = v,
            "lambda1" => self.lambda1 = v,
            "lambda2" => self.lambda2 = v,
            _ => return Err(field_err(e, "unknown tuning field")),
        }
        Ok(())
    }

    pub fn build(&self) -> Result<SplitConfig> {
        SplitConfig::new(self.pi0, self.mu0, self.tau0, self.lambda1, self.lambda2)
    }
}

fn set_dgp(d: &mut DgpConfig, field: &str, e: &Entry) -> Result<()> {
    match field {
        "N" | "n" => d.n = num(e)?,
        "T" | "t" => d.t = num(e)?,
        "r" => {
            d.r = num(e)?;
        }
        "c" => d.c = float(e)?,
        "theta1" => d.theta1 = float(e)?,
        "alphas" => d.alphas = float_list(e, &e.value)?,
        "d2diag" => d.d2diag = float_list(e, &e.value)?,
        "pi" | "pi_perturb" => d.pi_perturb = float(e)?,
        "rho_mean" => d.rho_mean = float(e)?,
        "rho_scale" => d.rho_scale = float(e)?,
        "cs_dependence" => d.cs_dependence = boolean(e)?,
        "xi" => d.xi = float(e)?,
        "K" | "k" => d.k = num(e)?,
        "garch" => d.garch = boolean(e)?,
        "garch_params" => {
            let p = float_list(e, &e.value)?;
            if p.len() != 3 {
                return Err(field_err(e, "expected omega, alpha, eta"));
            }
            d.garch_params = (p[0], p[1], p[2]);
        }
        _ => return Err(field_err(e, "unknown dgp field")),
    }
    Ok(())
}

/// Build an experiment from config text.
pub fn experiment_from_str(text: &str) -> Result<ExperimentSpec> {
    let entries = parse_entries(text)?;
    let mut dgp = DgpConfig::baseline(100, 350);
    let mut spec_fields: Vec<&Entry> = Vec::new();
    let mut tunings: BTreeMap<usize, TuningFields> = BTreeMap::new();
    let mut beta_entry: Option<&Entry> = None;

    for e in &entries {
        if let Some(field) = e.key.strip_prefix("dgp.") {
            set_dgp(&mut dgp, field, e)?;
        } else if let Some(rest) = e.key.strip_prefix("tuning.") {
            let (idx, field) = rest
                .split_once('.')
                .ok_or_else(|| field_err(e, "expected tuning.<index>.<field>"))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| field_err(e, format!("bad tuning index '{idx}'")))?;
            tunings
                .entry(idx)
                .or_insert_with(|| SplitConfig::default().into())
                .set(field, e)?;
        } else if e.key == "beta_grid" {
            beta_entry = Some(e);
        } else {
            spec_fields.push(e);
        }
    }
    // beta defaults depend on the final r
    dgp.beta = vec![0.0; dgp.r];
    if dgp.alphas.len() != dgp.r && !entries.iter().any(|e| e.key == "dgp.alphas") {
        dgp.alphas = vec![1.0; dgp.r];
    }
    let mut spec = ExperimentSpec::new(dgp);

    for e in spec_fields {
        match e.key.as_str() {
            "seed" => spec.seed = num(e)?,
            "replications" => {
                spec.replications = num(e)?;
                if spec.replications == 0 {
                    return Err(field_err(e, "must be positive"));
                }
            }
            "nominal_level" => spec.nominal_level = float(e)?,
            "feasible" => spec.feasible = boolean(e)?,
            "r_selection" => spec.r_selection = e.value.parse().map_err(|x| field_err(e, x))?,
            "threads" => spec.threads = Some(num(e)?),
            "phi" => spec.phi = phi_estimator(e)?,
            "tests" => {
                spec.tests = e
                    .value
                    .split(',')
                    .map(|s| s.parse::<TestSpec>())
                    .collect::<Result<_>>()
                    .map_err(|x| field_err(e, x))?;
            }
            _ => return Err(field_err(e, "unknown key")),
        }
    }

    if let Some(e) = beta_entry {
        let r = spec.dgp.r;
        spec.beta_grid = e
            .value
            .split(';')
            .map(|p| {
                let v = float_list(e, p)?;
                match v.len() {
                    1 => Ok(vec![v[0]; r]),
                    k if k == r => Ok(v),
                    k => Err(field_err(e, format!("point '{}' has {k} entries, r = {r}", p.trim()))),
                }
            })
            .collect::<Result<_>>()?;
    } else {
        spec.beta_grid = vec![vec![0.0; spec.dgp.r]];
    }

    if !tunings.is_empty() {
        let expected: Vec<usize> = (0..tunings.len()).collect();
        if tunings.keys().copied().collect::<Vec<_>>() != expected {
            return Err(Error::InvalidConfig(
                "tuning indices must be 0, 1, 2, ... without gaps".into(),
            ));
        }
        spec.tuning_grid = tunings
            .iter()
            .map(|(i, f)| {
                f.build()
                    .map_err(|x| Error::InvalidConfig(format!("tuning.{i}: {x}")))
            })
            .collect::<Result<_>>()?;
    }
    if let RSelection::Fixed(r) = spec.r_selection {
        if r == 0 {
            return Err(Error::InvalidConfig("r_selection: r must be positive".into()));
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Tunings and model choices for testing one empirical series.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPlan {
    /// Tunings per statistic.
    pub tunings: BTreeMap<TestId, TuningFields>,
    pub r_selection: RSelection,
    pub phi: PhiEstimator,
}

impl Default for TestPlan {
    /// `mu0 = 0.40`, `tau0 = 0.8`; g2 uses `lambda = (1, 0.65)`, g3
    /// `lambda2 = 0.6`, g4 `lambda1 = 0.6`; IC_p1 with at most 10 factors.
    fn default() -> Self {
        let base: TuningFields = SplitConfig::default().into();
        let mut tunings = BTreeMap::new();
        tunings.insert(TestId::G1, base);
        tunings.insert(TestId::G2, TuningFields { lambda1: 1.0, lambda2: 0.65, ..base });
        tunings.insert(TestId::G3, TuningFields { lambda1: 1.0, lambda2: 0.6, ..base });
        tunings.insert(TestId::G4, TuningFields { lambda1: 0.6, lambda2: 1.0, ..base });
        TestPlan {
            tunings,
            r_selection: RSelection::Icp1(10),
            phi: PhiEstimator::Iid,
        }
    }
}

impl TestPlan {
    /// Apply entries: `pi0`, `mu0`, `tau0` (all tests), `g3.lambda2` and the
    /// like (one test), `r_max`, `r` and `phi`.
    pub fn apply(&mut self, entries: &[Entry]) -> Result<()> {
        for e in entries {
            match e.key.as_str() {
                "r_max" => self.r_selection = RSelection::Icp1(num(e)?),
                "r" => self.r_selection = RSelection::Fixed(num(e)?),
                "r_selection" => {
                    self.r_selection = e.value.parse().map_err(|x| field_err(e, x))?
                }
                "phi" => self.phi = phi_estimator(e)?,
                key => match key.split_once('.') {
                    Some((test, field)) => {
                        let id: TestId = test.parse().map_err(|x| field_err(e, x))?;
                        self.tunings
                            .get_mut(&id)
                            .expect("all tests have tunings")
                            .set(field, e)?;
                    }
                    None => {
                        for t in self.tunings.values_mut() {
                            t.set(key, e)?;
                        }
                    }
                },
            }
        }
        Ok(())
    }

    pub fn split_config(&self, test: TestId) -> Result<SplitConfig> {
        self.tunings[&test]
            .build()
            .map_err(|e| Error::InvalidConfig(format!("{test} tunings: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# baseline
seed = 42
replications = 200
dgp.N = 50
dgp.T = 120
dgp.alphas = 0.9, 0.8, 0.7
beta_grid = 0; 0.2; 0.1, 0.2, 0.3
tests = g1, g2adj, g3adj
tuning.0.lambda2 = 0.65
tuning.1.lambda2 = 0.6
r_selection = icp1(5)
";

    #[test]
    fn parses_sample() {
        let s = experiment_from_str(SAMPLE).unwrap();
        assert_eq!(s.seed, 42);
        assert_eq!(s.replications, 200);
        assert_eq!((s.dgp.n, s.dgp.t), (50, 120));
        assert_eq!(s.dgp.alphas, vec![0.9, 0.8, 0.7]);
        assert_eq!(s.beta_grid, vec![vec![0.0; 3], vec![0.2; 3], vec![0.1, 0.2, 0.3]]);
        assert_eq!(s.tests.len(), 3);
        assert_eq!(s.tuning_grid.len(), 2);
        assert_eq!(s.tuning_grid[1].lambda2(), 0.6);
        assert_eq!(s.tuning_grid[1].mu0(), 0.4);
        assert_eq!(s.r_selection, RSelection::Icp1(5));
    }

    #[test]
    fn zero_replications_rejected() {
        let err = experiment_from_str("replications = 0").unwrap_err();
        assert!(err.to_string().contains("line 1: replications"));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = experiment_from_str("seed = 1\ndgp.N = abc").unwrap_err();
        assert!(err.to_string().contains("line 2: dgp.N"), "{err}");
        let err = experiment_from_str("dgp.colour = red").unwrap_err();
        assert!(err.to_string().contains("dgp.colour"));
        let err = experiment_from_str("seed = 1\nseed = 2").unwrap_err();
        assert!(err.to_string().contains("already set"));
        let err = experiment_from_str("tuning.0.mu0 = 0.5").unwrap_err();
        assert!(err.to_string().contains("tuning.0"));
        let err = experiment_from_str("beta_grid = 0.1, 0.2").unwrap_err();
        assert!(err.to_string().contains("beta_grid"));
    }

    #[test]
    fn test_plan_overrides() {
        let mut p = TestPlan::default();
        p.apply(&parse_inline("mu0=0.3, g3.lambda2=0.7, r_max=6").unwrap())
            .unwrap();
        assert_eq!(p.split_config(TestId::G1).unwrap().mu0(), 0.3);
        assert_eq!(p.split_config(TestId::G3).unwrap().lambda2(), 0.7);
        assert_eq!(p.split_config(TestId::G2).unwrap().lambda2(), 0.65);
        assert_eq!(p.r_selection, RSelection::Icp1(6));
        assert!(p.apply(&parse_inline("g9.mu0=0.3").unwrap()).is_err());
    }
}
