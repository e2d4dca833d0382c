//! Acceptance suite. Prints one PASS/FAIL line per criterion followed by
//! indented detail lines.
//!
//! Run everything:            cargo test --release --test acceptance
//! Run selected criteria:     cargo test --release --test acceptance -- 3 7
//! Include the (800, 500) cell: FACTEST_EXTENDED=1
//! Exit nonzero on any FAIL:  FACTEST_STRICT=1

use std::path::PathBuf;
use std::time::Instant;

use factest::config::experiment_from_str;
use factest::dgp::{generate_dataset, DgpConfig};
use factest::forecast::{forecast_error_streams, StreamOptions};
use factest::mc::{
    run_experiment, simulate_draws, tabulate, ExperimentSpec, RSelection, RejectionTable, TestSpec,
};
use factest::pca::{extract_factors, rotation_matrix, select_num_factors_icp1};
use factest::stats::{compute_test, omega2, p_value, TestId, TestOptions};
use factest::{compute_split_indices, SplitConfig};

const STRONG: [f64; 3] = [1.0, 1.0, 1.0];
const WEAK: [f64; 3] = [0.51, 0.51, 0.51];
const MIXED: [f64; 3] = [1.0, 0.7, 0.51];

type Criterion = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, msg: String) {
        self.pass &= ok;
        self.details.push(format!("{} {msg}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, msg: String) {
        self.details.push(format!("info {msg}"));
    }
}

/// Default tunings: g1 and g2 share the first, g3 uses lambda2 = 0.6,
/// g4 uses lambda1 = 0.6.
fn default_tunings() -> Vec<SplitConfig> {
    let base = SplitConfig::default();
    vec![
        base,
        base.with_lambda2(0.6).unwrap(),
        base.with_lambda1(0.6).unwrap().with_lambda2(1.0).unwrap(),
    ]
}

fn tuning_index(test: TestId) -> usize {
    match test {
        TestId::G1 | TestId::G2 => 0,
        TestId::G3 => 1,
        TestId::G4 => 2,
    }
}

fn all_specs() -> Vec<TestSpec> {
    let mut v = vec![TestSpec::raw(TestId::G1)];
    for t in [TestId::G2, TestId::G3, TestId::G4] {
        v.push(TestSpec::raw(t));
        v.push(TestSpec::adjusted(t));
    }
    v
}

fn spec_name(t: &TestSpec) -> String {
    format!("{}{}", t.test, if t.adjusted { "adj" } else { "" })
}

fn find_row<'a>(
    table: &'a RejectionTable,
    test: TestSpec,
    tuning: &SplitConfig,
    beta: f64,
) -> &'a factest::mc::RejectionRow {
    table
        .rows
        .iter()
        .find(|r| r.test == test && r.tuning == *tuning && (r.beta[0] - beta).abs() < 1e-12)
        .expect("cell present")
}

// ---------------------------------------------------------------- criterion 1

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss-Legendre quadrature of a smooth integrand.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let mut s = 0.0;
    for p in 0..PANELS {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        s += rule.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half;
    }
    s
}

/// Variance of `W(mu)/(2 mu) + (W(1) - W(mu))/(2 (1 - mu)) - W(1)` from its
/// independent increments.
fn oracle_g1(mu: f64) -> f64 {
    let a = 1.0 - 1.0 / (2.0 * mu);
    let b = 1.0 - 1.0 / (2.0 * (1.0 - mu));
    a * a * mu + b * b * (1.0 - mu)
}

/// Variance of `W(l1)/l1 - W(l2)/l2`, using `Cov(W(a)/a, W(b)/b) = 1/max(a, b)`.
fn oracle_g2(l1: f64, l2: f64) -> f64 {
    1.0 / l1 + 1.0 / l2 - 2.0 / l1.max(l2)
}

/// Variance of `(1 - tau)^-1 int_tau^1 (W(s)/s - W(l)/l) ds` by integrating
/// the covariance kernel over the square.
fn oracle_averaged(l: f64, tau: f64, rule: &[(f64, f64)]) -> f64 {
    let w = 1.0 - tau;
    // int int 1/max(s, r) over [tau, 1]^2
    let i1 = 2.0 * integrate(|r| (r - tau) / r, tau, 1.0, rule);
    // int 1/max(s, l) over [tau, 1], split at the kink
    let g = |s: f64| 1.0 / s.max(l);
    let j = if l > tau && l < 1.0 {
        integrate(g, tau, l, rule) + integrate(g, l, 1.0, rule)
    } else {
        integrate(g, tau, 1.0, rule)
    };
    (i1 - 2.0 * w * j + w * w / l) / (w * w)
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let rule = gauss_legendre(20);
    let mut worst: [f64; 4] = [0.0; 4];
    for i in 0..20 {
        let fi = i as f64;
        let mu = 0.05 + 0.046 * fi;
        let tau = 0.1 + 0.04 * fi;
        let delta = 0.05 + 0.004 * fi;
        let (l1, l2) = if i % 2 == 0 {
            (tau + delta, tau - delta)
        } else {
            (tau - delta, tau + delta)
        };
        let cfg = SplitConfig::new(0.5, mu, tau, l1, l2).unwrap();
        let oracle = [
            oracle_g1(mu),
            oracle_g2(l1, l2),
            oracle_averaged(l2, tau, &rule),
            oracle_averaged(l1, tau, &rule),
        ];
        for (k, test) in TestId::ALL.iter().enumerate() {
            let got = omega2(*test, &cfg, 1.0).unwrap();
            worst[k] = worst[k].max((got - oracle[k]).abs());
        }
    }
    for (k, test) in TestId::ALL.iter().enumerate() {
        o.check(
            worst[k] <= 1e-12,
            format!("{test}: max |omega2 - oracle| over 20 tunings = {:.2e}", worst[k]),
        );
    }

    let mut jump: f64 = 0.0;
    for tau in [0.2, 0.5, 0.8, 0.95] {
        let eps = 1e-12;
        for test in [TestId::G3, TestId::G4] {
            let at = |l: f64| {
                let cfg = match test {
                    TestId::G3 => SplitConfig::new(0.5, 0.4, tau, 1.0, l),
                    _ => SplitConfig::new(0.5, 0.4, tau, l, 1.0),
                };
                omega2(test, &cfg.unwrap(), 1.0).unwrap()
            };
            let mid = at(tau);
            jump = jump.max((at(tau - eps) - mid).abs()).max((at(tau + eps) - mid).abs());
        }
    }
    o.check(
        jump <= 1e-10,
        format!("g3/g4 branch continuity at lambda = tau: max jump {jump:.2e}"),
    );
    o
}

// ---------------------------------------------------------------- criterion 2

fn std_normal_cdf(x: f64) -> f64 {
    1.0 - p_value(x)
}

/// One-sample Kolmogorov-Smirnov test against N(0, 1); returns (D, p-value).
fn ks_normal(sample: &[f64]) -> (f64, f64) {
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = std_normal_cdf(*v);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lam * lam).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let mut spec = ExperimentSpec::new(DgpConfig::baseline(100, 200));
    spec.replications = 2000;
    spec.feasible = false;
    spec.tests = TestId::ALL.iter().map(|t| TestSpec::raw(*t)).collect();
    spec.tuning_grid = default_tunings();
    let draws = simulate_draws(&spec).unwrap();
    let table = tabulate(&spec, &draws);
    for test in TestId::ALL {
        let ti = tuning_index(test);
        let cell = draws
            .iter()
            .find(|c| c.tuning_index == ti && c.test == TestSpec::raw(test))
            .unwrap();
        let row = find_row(&table, TestSpec::raw(test), &spec.tuning_grid[ti], 0.0);
        let (d, p) = ks_normal(&cell.statistics);
        o.check(
            (0.035..=0.065).contains(&row.rejection),
            format!("{test}: size {:.4} (0.05 +/- 0.015)", row.rejection),
        );
        o.check(p > 0.01, format!("{test}: KS D = {d:.4}, p = {p:.4}"));
    }
    o
}

// ---------------------------------------------------------------- criterion 3

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load_config(name: &str) -> ExperimentSpec {
    let text = std::fs::read_to_string(config_path(name)).expect("shipped config");
    experiment_from_str(&text).expect("shipped config parses")
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let spec = load_config("baseline.cfg");
    let table = run_experiment(&spec).unwrap();
    let cells = [
        ("g1", TestSpec::raw(TestId::G1), 0, 0.060),
        ("g2adj (lambda2 = 0.65)", TestSpec::adjusted(TestId::G2), 0, 0.056),
        ("g3adj (lambda2 = 0.6)", TestSpec::adjusted(TestId::G3), 1, 0.044),
    ];
    for (name, test, ti, target) in cells {
        let row = find_row(&table, test, &spec.tuning_grid[ti], 0.0);
        o.check(
            (row.rejection - target).abs() <= 0.025,
            format!(
                "{name}: size {:.3} (target {target:.3} +/- 0.025, MC stderr {:.3})",
                row.rejection, row.stderr
            ),
        );
    }
    if std::env::var("FACTEST_EXTENDED").as_deref() == Ok("1") {
        let spec = load_config("extended.cfg");
        let table = run_experiment(&spec).unwrap();
        let row = find_row(&table, TestSpec::raw(TestId::G1), &spec.tuning_grid[0], 0.2);
        o.check(
            (row.rejection - 0.892).abs() <= 0.04,
            format!(
                "(800, 500) g1 beta = 0.2: power {:.3} (target 0.892 +/- 0.04)",
                row.rejection
            ),
        );
    } else {
        o.note("(800, 500) extended cell skipped; set FACTEST_EXTENDED=1".into());
    }
    o
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let betas = [0.0, 0.1, 0.2, 0.3, 0.4];
    let mut at_02 = Vec::new();
    for (label, alphas) in [("alpha = 1", STRONG), ("alpha = 0.51", WEAK)] {
        let mut spec = ExperimentSpec::new(DgpConfig::baseline(100, 350).with_alphas(alphas.to_vec()));
        spec.replications = 500;
        spec.beta_grid = betas.iter().map(|b| vec![*b; 3]).collect();
        spec.tests = all_specs();
        spec.tuning_grid = default_tunings();
        spec.r_selection = RSelection::Icp1(10);
        let table = run_experiment(&spec).unwrap();
        let mut powers = Vec::new();
        for test in all_specs() {
            let tuning = spec.tuning_grid[tuning_index(test.test)];
            let rows: Vec<_> = betas.iter().map(|b| find_row(&table, test, &tuning, *b)).collect();
            let mut inversions = 0;
            let mut large = false;
            for w in rows.windows(2) {
                if w[1].rejection < w[0].rejection {
                    inversions += 1;
                    let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
                    large |= w[0].rejection - w[1].rejection > 2.0 * se;
                }
            }
            let curve: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.rejection)).collect();
            o.check(
                inversions <= 1 && !large,
                format!("{label} {}: [{}]", spec_name(&test), curve.join(", ")),
            );
            powers.push(rows[2].rejection);
        }
        at_02.push(powers);
    }
    for (k, test) in all_specs().iter().enumerate() {
        o.check(
            at_02[1][k] < at_02[0][k],
            format!(
                "{} at beta = 0.2: weak {:.3} < strong {:.3}",
                spec_name(test),
                at_02[1][k],
                at_02[0][k]
            ),
        );
    }

    let mut unperturbed = Vec::new();
    for alphas in [STRONG, WEAK] {
        let mut dgp = DgpConfig::baseline(100, 350).with_alphas(alphas.to_vec());
        dgp.pi_perturb = 0.0;
        let mut spec = ExperimentSpec::new(dgp);
        spec.replications = 200;
        spec.beta_grid = vec![vec![0.2; 3]];
        spec.tests = all_specs();
        spec.tuning_grid = default_tunings();
        spec.r_selection = RSelection::Fixed(3);
        let table = run_experiment(&spec).unwrap();
        unperturbed.push(
            all_specs()
                .iter()
                .map(|t| find_row(&table, *t, &spec.tuning_grid[tuning_index(t.test)], 0.2).rejection)
                .collect::<Vec<_>>(),
        );
    }
    let pairs: Vec<String> = all_specs()
        .iter()
        .enumerate()
        .map(|(k, t)| format!("{} {:.3}/{:.3}", spec_name(t), unperturbed[1][k], unperturbed[0][k]))
        .collect();
    o.note(format!(
        "pi = 0, r = 3, R = 200, beta = 0.2, weak/strong: {}",
        pairs.join(", ")
    ));
    o
}

// ---------------------------------------------------------------- criterion 5

fn mean_feasibility_gap(n: usize, t: usize, reps: u64) -> [f64; 4] {
    let mut sum = [0.0; 4];
    let tunings = default_tunings();
    let split = compute_split_indices(t, &tunings[0]).unwrap();
    for rep in 0..reps {
        let d = generate_dataset(&DgpConfig::baseline(n, t).with_seed(factest::mc::mix_seed(5, rep)))
            .unwrap();
        let opts = StreamOptions {
            feasible: true,
            f_true: Some(&d.f_true),
        };
        let streams = forecast_error_streams(&d.panel, &split, 3, &opts).unwrap();
        for (k, test) in TestId::ALL.iter().enumerate() {
            let cfg = &tunings[tuning_index(*test)];
            let fe = compute_test(*test, &streams, cfg, &TestOptions::feasible(true)).unwrap();
            let inf = compute_test(*test, &streams, cfg, &TestOptions::feasible(false)).unwrap();
            sum[k] += (fe.statistic - inf.statistic).abs();
        }
    }
    sum.map(|s| s / reps as f64)
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let small = mean_feasibility_gap(200, 200, 50);
    let large = mean_feasibility_gap(800, 500, 50);
    for (k, test) in TestId::ALL.iter().enumerate() {
        o.check(
            large[k] < 0.15 && large[k] < small[k],
            format!(
                "{test}: mean |g_fhat - g_f| {:.4} at (200, 200), {:.4} at (800, 500)",
                small[k], large[k]
            ),
        );
    }
    o
}

// ---------------------------------------------------------------- criterion 6

fn icp1_hits(alphas: &[f64], rho_scale: f64, reps: u64) -> (usize, [usize; 11]) {
    let (n, t) = (800, 500);
    let k0 = compute_split_indices(t, &SplitConfig::default()).unwrap().k0;
    let mut hist = [0usize; 11];
    for rep in 0..reps {
        let mut cfg = DgpConfig::baseline(n, t)
            .with_alphas(alphas.to_vec())
            .with_seed(factest::mc::mix_seed(6, rep));
        cfg.rho_scale = rho_scale;
        let d = generate_dataset(&cfg).unwrap();
        let x_in = d.panel.x().rows(0, k0).into_owned();
        hist[select_num_factors_icp1(&x_in, 10).unwrap()] += 1;
    }
    (hist[3], hist)
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let reps = 200;
    for (label, alphas) in [("strong", STRONG), ("weak", WEAK), ("mixed", MIXED)] {
        let (hits, hist) = icp1_hits(&alphas, 0.5, reps);
        o.check(
            hits as f64 >= 0.99 * reps as f64,
            format!("{label}: r = 3 in {hits}/{reps}; counts by r = 0..10: {hist:?}"),
        );
    }
    let (hits, _) = icp1_hits(&STRONG, 0.0, 50);
    o.note(format!(
        "with rho_i = 0.3 for every series (no near-unit-root idiosyncratics): r = 3 in {hits}/50"
    ));
    o
}

// ---------------------------------------------------------------- criterion 7

fn rotation_errors(pi: f64, reps: u64) -> Vec<(f64, f64)> {
    [200usize, 400, 800]
        .iter()
        .map(|&n| {
            let mut s = 0.0;
            for rep in 0..reps {
                let mut cfg = DgpConfig::baseline(n, 500).with_seed(factest::mc::mix_seed(7, rep));
                cfg.pi_perturb = pi;
                let d = generate_dataset(&cfg).unwrap();
                let fe = extract_factors(d.panel.x(), 3).unwrap();
                s += rotation_matrix(&fe, &d.f_true, &d.lambda_true, &STRONG)
                    .unwrap()
                    .avg_sq_error;
            }
            (n as f64, s / reps as f64)
        })
        .collect()
}

fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let pts = rotation_errors(24.0, 20);
    let decreasing = pts.windows(2).all(|w| w[1].1 < w[0].1);
    let slope = loglog_slope(&pts);
    let errs: Vec<String> = pts.iter().map(|p| format!("N={}: {:.2e}", p.0, p.1)).collect();
    o.check(decreasing, format!("avg_sq_error decreasing in N: {}", errs.join(", ")));
    o.check(
        (-1.3..=-0.7).contains(&slope),
        format!("log-log slope {slope:.3} (required [-1.3, -0.7])"),
    );
    let slope0 = loglog_slope(&rotation_errors(0.0, 20));
    o.note(format!("same sweep with pi = 0: slope {slope0:.3}"));
    o
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let mut spec = ExperimentSpec::new(DgpConfig::baseline(60, 120));
    spec.replications = 40;
    spec.seed = 8;
    spec.beta_grid = vec![vec![0.0; 3], vec![0.3; 3]];
    spec.tests = all_specs();
    spec.tuning_grid = default_tunings();
    let render = |threads: Option<usize>| {
        let mut s = spec.clone();
        s.threads = threads;
        let table = run_experiment(&s).unwrap();
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        (csv, table.to_text())
    };
    let reference = render(Some(1));
    for threads in [Some(1), Some(2), Some(3), Some(8), None] {
        let got = render(threads);
        o.check(
            got == reference,
            format!("threads = {threads:?}: CSV and text tables byte-identical to 1 worker"),
        );
    }
    o
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 8] = [
        (1, "variance formulas match independent evaluation", criterion_1),
        (2, "null calibration with observed factors", criterion_2),
        (3, "size targets at (N, T) = (100, 350)", criterion_3),
        (4, "power monotone in beta, dampened by weak loadings", criterion_4),
        (5, "feasible and infeasible statistics agree", criterion_5),
        (6, "IC_p1 selects three factors", criterion_6),
        (7, "factor-space error rate in N", criterion_7),
        (8, "determinism across worker counts", criterion_8),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        ran += 1;
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id}: {name} ({:.1}s)",
            if out.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for d in &out.details {
            println!("       {d}");
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var("FACTEST_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
