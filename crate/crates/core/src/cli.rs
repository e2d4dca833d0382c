//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! failure (or a simulation table with invalid cells).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{experiment_from_str, parse_entries, parse_inline, TestPlan};
use crate::dgp::generate_dataset;
use crate::error::{Error, Result};
use crate::forecast::{forecast_error_streams, StreamOptions};
use crate::ingest::{read_panel_path, write_matrix_csv, write_panel_csv, RegressorSpec};
use crate::mc::{run_experiment, RSelection};
use crate::panel::PanelData;
use crate::pca::select_num_factors_icp1;
use crate::split::compute_split_indices;
use crate::stats::{compute_test, TestId, TestOptions, TestResult};

#[derive(Debug, Parser)]
#[command(name = "factest", version, about = "Forecast encompassing and accuracy tests for factor-augmented regressions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test whether factors from a panel improve forecasts of one series.
    Test {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// Known regressors, e.g. "ar(1)+intercept".
        #[arg(long, default_value = "ar(1)+intercept")]
        regressors: String,
        /// Tuning file (key = value lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Inline overrides, e.g. "mu0=0.3,g3.lambda2=0.7".
        #[arg(long)]
        tunings: Option<String>,
        /// Largest number of factors considered by IC_p1.
        #[arg(long)]
        r_max: Option<usize>,
        /// Columns to ignore (comma-separated), e.g. a date column.
        #[arg(long, value_delimiter = ',')]
        drop: Vec<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Also write the result (in --format) to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for uniformity; the test itself is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a Monte Carlo experiment described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix; writes PREFIX.csv and PREFIX.txt.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Write the first replication's dataset (first beta) to this directory.
        #[arg(long)]
        dump_data: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Choose the number of factors of a panel by IC_p1.
    SelectFactors {
        #[arg(long)]
        data: PathBuf,
        /// Column to exclude from the panel.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value_t = 10)]
        r_max: usize,
        /// Use only the first fraction of the sample.
        #[arg(long)]
        in_sample: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        drop: Vec<String>,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let res = match cli.command {
        Command::Test {
            data,
            target,
            regressors,
            config,
            tunings,
            r_max,
            drop,
            format,
            out: out_path,
            seed: _,
        } => cmd_test(
            &TestArgs {
                data: &data,
                target: &target,
                regressors: &regressors,
                config: config.as_deref(),
                tunings: tunings.as_deref(),
                r_max,
                drop: &drop,
            },
            format,
            out_path.as_deref(),
            out,
        ),
        Command::Simulate {
            config,
            seed,
            out: prefix,
            format,
            dump_data,
            threads,
        } => cmd_simulate(&config, seed, prefix.as_deref(), format, dump_data.as_deref(), threads, out),
        Command::SelectFactors {
            data,
            target,
            r_max,
            in_sample,
            drop,
        } => cmd_select_factors(&data, target.as_deref(), r_max, in_sample, &drop, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub struct TestArgs<'a> {
    pub data: &'a Path,
    pub target: &'a str,
    pub regressors: &'a str,
    pub config: Option<&'a Path>,
    pub tunings: Option<&'a str>,
    pub r_max: Option<usize>,
    pub drop: &'a [String],
}

/// Results of the empirical test workflow.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub target: String,
    pub t: usize,
    pub n_series: usize,
    pub r: usize,
    pub r_selection: String,
    pub results: Vec<TestResult>,
}

/// Load a CSV panel and run g1 and the adjusted g2, g3, g4.
pub fn test_report(args: &TestArgs<'_>) -> Result<TestReport> {
    let csv = read_panel_path(args.data, args.target, args.drop)?;
    let regs: RegressorSpec = args.regressors.parse()?;
    let panel = regs.build(&csv.y, &csv.x)?;
    let mut plan = TestPlan::default();
    if let Some(p) = args.config {
        let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        plan.apply(&parse_entries(&text)?)?;
    }
    if let Some(t) = args.tunings {
        plan.apply(&parse_inline(t)?)?;
    }
    if let Some(m) = args.r_max {
        plan.r_selection = RSelection::Icp1(m);
    }
    run_plan(&panel, &plan, &csv.target_name)
}

/// Run every statistic of `plan` on `panel`.
pub fn run_plan(panel: &PanelData, plan: &TestPlan, target: &str) -> Result<TestReport> {
    let t = panel.t();
    let g1 = plan.split_config(TestId::G1)?;
    let base = compute_split_indices(t, &g1).map_err(|e| match e {
        Error::DegenerateSplit(m) => Error::TooShortSeries(m),
        other => other,
    })?;
    let r = match plan.r_selection {
        RSelection::Fixed(r) => r,
        RSelection::Icp1(r_max) => {
            let x_in = panel.x().rows(0, base.k0).into_owned();
            select_num_factors_icp1(&x_in, r_max)?
        }
    };
    let opts = StreamOptions {
        feasible: true,
        f_true: None,
    };
    let test_opts = TestOptions {
        feasible: true,
        phi: plan.phi,
    };
    let mut results = Vec::new();
    let mut cache: Vec<(f64, crate::forecast::ForecastErrorStreams)> = Vec::new();
    for id in TestId::ALL {
        let cfg = plan.split_config(id)?;
        if !cache.iter().any(|(p, _)| *p == cfg.pi0()) {
            let split = compute_split_indices(t, &cfg).map_err(|e| match e {
                Error::DegenerateSplit(m) => Error::TooShortSeries(m),
                other => other,
            })?;
            cache.push((cfg.pi0(), forecast_error_streams(panel, &split, r, &opts)?));
        }
        let streams = &cache.iter().find(|(p, _)| *p == cfg.pi0()).expect("cached").1;
        results.push(compute_test(id, streams, &cfg, &test_opts)?);
    }
    Ok(TestReport {
        target: target.to_string(),
        t,
        n_series: panel.n_series(),
        r,
        r_selection: plan.r_selection.to_string(),
        results,
    })
}

impl TestReport {
    fn rows(&self) -> Vec<(String, f64, f64, &TestResult)> {
        self.results
            .iter()
            .map(|r| match (r.adjusted_statistic, r.p_value_adjusted) {
                (Some(s), Some(p)) => (format!("{}adj", r.test_id), s, p, r),
                _ => (r.test_id.to_string(), r.statistic, r.p_value, r),
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "target {}: T = {}, N = {}, r = {} ({})\n",
            self.target, self.t, self.n_series, self.r, self.r_selection
        );
        s.push_str(&format!(
            "{:<7}{:>10}{:>9}   tunings\n",
            "test", "statistic", "p-value"
        ));
        for (name, stat, p, r) in self.rows() {
            let c = &r.tunings;
            s.push_str(&format!(
                "{:<7}{:>10.3}{:>9.3}   pi0={} mu0={} tau0={} lambda1={} lambda2={}\n",
                name,
                stat,
                p,
                c.pi0(),
                c.mu0(),
                c.tau0(),
                c.lambda1(),
                c.lambda2()
            ));
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(format!("writing CSV: {e}"));
        w.write_record([
            "test", "statistic", "p_value", "pi0", "mu0", "tau0", "lambda1", "lambda2", "r",
        ])
        .map_err(io)?;
        for (name, stat, p, r) in self.rows() {
            let c = &r.tunings;
            w.write_record([
                name,
                format!("{stat}"),
                format!("{p}"),
                format!("{}", c.pi0()),
                format!("{}", c.mu0()),
                format!("{}", c.tau0()),
                format!("{}", c.lambda1()),
                format!("{}", c.lambda2()),
                self.r.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(format!("writing CSV: {e}")))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(format!("writing JSON: {e}")))
    }

    fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Text => Ok(self.to_text()),
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

fn cmd_test(args: &TestArgs<'_>, format: Format, out_path: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let report = test_report(args)?;
    let body = report.render(format)?;
    write!(out, "{body}").map_err(|e| Error::Io(e.to_string()))?;
    if let Some(p) = out_path {
        std::fs::write(p, &body).map_err(|e| io_err(p, e))?;
    }
    Ok(0)
}

fn cmd_simulate(
    config: &Path,
    seed: Option<u64>,
    prefix: Option<&Path>,
    format: Format,
    dump_data: Option<&Path>,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> Result<i32> {
    let text = std::fs::read_to_string(config).map_err(|e| io_err(config, e))?;
    let mut spec = experiment_from_str(&text)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if threads.is_some() {
        spec.threads = threads;
        spec.validate()?;
    }
    if let Some(dir) = dump_data {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let cfg = spec
            .dgp
            .clone()
            .with_beta(spec.beta_grid[0].clone())
            .with_seed(spec.replication_seed(0));
        let d = generate_dataset(&cfg)?;
        let names: Vec<String> = (1..=cfg.n).map(|i| format!("x{i}")).collect();
        let path = dir.join("data.csv");
        let f = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        write_panel_csv(f, "y", d.panel.y(), d.panel.x(), &names)?;
        let path = dir.join("factors.csv");
        let f = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let fnames: Vec<String> = (1..=cfg.r).map(|j| format!("f{j}")).collect();
        write_matrix_csv(f, &d.f_true, &fnames)?;
    }
    let table = run_experiment(&spec)?;
    let mut csv_bytes = Vec::new();
    table.write_csv(&mut csv_bytes)?;
    let text_table = table.to_text();
    if let Some(p) = prefix {
        let csv_path = p.with_extension("csv");
        std::fs::write(&csv_path, &csv_bytes).map_err(|e| io_err(&csv_path, e))?;
        let txt_path = p.with_extension("txt");
        std::fs::write(&txt_path, &text_table).map_err(|e| io_err(&txt_path, e))?;
    }
    let body = match format {
        Format::Text => text_table,
        Format::Csv => String::from_utf8(csv_bytes).expect("CSV output is UTF-8"),
        Format::Json => serde_json::to_string_pretty(&table)
            .map_err(|e| Error::Io(format!("writing JSON: {e}")))?,
    };
    write!(out, "{body}").map_err(|e| Error::Io(e.to_string()))?;
    Ok(if table.has_invalid() { 2 } else { 0 })
}

fn cmd_select_factors(
    data: &Path,
    target: Option<&str>,
    r_max: usize,
    in_sample: Option<f64>,
    drop: &[String],
    out: &mut dyn Write,
) -> Result<i32> {
    let x = match target {
        Some(t) => read_panel_path(data, t, drop)?.x,
        None => {
            // every column is a predictor: read the first as the target and
            // put it back in front
            let first = first_column(data)?;
            let p = read_panel_path(data, &first, drop)?;
            let mut x = p.x.clone().insert_column(0, 0.0);
            x.set_column(0, &p.y);
            x
        }
    };
    let rows = match in_sample {
        Some(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::InvalidConfig(format!("--in-sample = {f} must lie in (0, 1]")))
        }
        Some(f) => ((x.nrows() as f64) * f + 1e-9).floor() as usize,
        None => x.nrows(),
    };
    let k = select_num_factors_icp1(&x.rows(0, rows).into_owned(), r_max)?;
    writeln!(out, "{k}").map_err(|e| Error::Io(e.to_string()))?;
    Ok(0)
}

fn first_column(path: &Path) -> Result<String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let h = rdr
        .headers()
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    h.get(0)
        .map(|s| s.trim().to_string())
        .ok_or_else(|| Error::InvalidPanel("empty header".into()))
}
