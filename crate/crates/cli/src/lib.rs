//! Batch experiment driver: config files, K sweeps and CSV output.
//!
//! Config files hold one `key = value` pair per line; `#` starts a comment.
//! Every key is optional and falls back to the simulator defaults, except
//! that the number of MUs has to come from somewhere (`mu_count`,
//! `k_min`/`k_max`, or the `--k`/`--sweep-k` flags).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mcrcd::scenarios::{
    monte_carlo, Beliefs, Metric, MonteCarloReport, ScenarioDetail, ScenarioKind, ScenarioResult,
    SessionConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value: {0}")]
    Range(String),
    #[error("no MU count given; set `mu_count` in the config or pass --k / --sweep-k")]
    MissingK,
    #[error(transparent)]
    Simulation(#[from] mcrcd::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Output path used when neither the config nor the flags name one.
pub const DEFAULT_OUT: &str = "mcrcd.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Everything but the MU count, which is set per sweep point.
    pub session: SessionConfig,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub scenarios: Vec<ScenarioKind>,
    /// Summary CSV; the per-run detail file sits next to it.
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            session: SessionConfig::new(2),
            k_min: None,
            k_max: None,
            scenarios: ScenarioKind::ALL.to_vec(),
            out: PathBuf::from(DEFAULT_OUT),
        }
    }
}

impl ExperimentSpec {
    /// Inclusive K range of the sweep.
    pub fn k_range(&self) -> Result<(usize, usize)> {
        let (lo, hi) = match (self.k_min, self.k_max) {
            (Some(lo), Some(hi)) => (lo, hi),
            (Some(k), None) | (None, Some(k)) => (k, k),
            (None, None) => return Err(CliError::MissingK),
        };
        if lo < 2 || lo > hi {
            return Err(CliError::Range(format!(
                "K sweep {lo}..{hi} must satisfy 2 <= k_min <= k_max"
            )));
        }
        Ok((lo, hi))
    }

    /// Session configuration for one sweep point.
    pub fn session_for(&self, k: usize) -> SessionConfig {
        SessionConfig {
            mu_count: k,
            ..self.session.clone()
        }
    }

    /// Checks the sweep bounds and every per-K session.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.k_range()?;
        if self.scenarios.is_empty() {
            return Err(CliError::Range("no scenario selected".into()));
        }
        for k in lo..=hi {
            self.session_for(k).validate()?;
        }
        Ok(())
    }

    pub fn detail_path(&self) -> PathBuf {
        detail_path(&self.out)
    }
}

/// `results.csv` -> `results.detail.csv`.
pub fn detail_path(out: &Path) -> PathBuf {
    out.with_extension("detail.csv")
}

fn parse_num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::Parse {
        line,
        msg: format!("`{key}` expects a number, got `{value}`"),
    })
}

/// Parses a scenario selection: `all` or a comma-separated list.
pub fn parse_scenarios(value: &str) -> Result<Vec<ScenarioKind>> {
    if value.trim() == "all" {
        return Ok(ScenarioKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for item in value.split(',') {
        let kind = item
            .trim()
            .parse::<ScenarioKind>()
            .map_err(|e| CliError::Range(e.to_string()))?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    out.sort();
    Ok(out)
}

/// Parses `MIN:MAX`.
pub fn parse_sweep(value: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Range(format!("sweep `{value}` is not of the form MIN:MAX"));
    let (lo, hi) = value.split_once(':').ok_or_else(bad)?;
    let lo = lo.trim().parse().map_err(|_| bad())?;
    let hi = hi.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

/// Parses config file contents. Values are range-checked, except that a
/// missing MU count is only reported once the sweep is resolved.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::Parse {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(CliError::Parse {
                line,
                msg: format!("`{key}` has no value"),
            });
        }
        let s = &mut spec.session;
        match key {
            "mu_count" => {
                let k = parse_num(line, key, value)?;
                spec.k_min = Some(k);
                spec.k_max = Some(k);
            }
            "k_min" => spec.k_min = Some(parse_num(line, key, value)?),
            "k_max" => spec.k_max = Some(parse_num(line, key, value)?),
            "slot_count" => s.slot_count = parse_num(line, key, value)?,
            "area_side" => s.area_side = parse_num(line, key, value)?,
            "master_seed" => s.master_seed = parse_num(line, key, value)?,
            "runs" => s.runs = parse_num(line, key, value)?,
            "max_hops" => s.max_hops = parse_num(line, key, value)?,
            "exhaustive_limit" => s.exhaustive_limit = parse_num(line, key, value)?,
            "belief" => s.beliefs = Beliefs::Uniform(parse_num(line, key, value)?),
            "beliefs" => {
                let v = value
                    .split(',')
                    .map(|p| parse_num(line, key, p.trim()))
                    .collect::<Result<Vec<f64>>>()?;
                s.beliefs = Beliefs::PerMu(v);
            }
            "scenario" => spec.scenarios = parse_scenarios(value)?,
            "out" => spec.out = PathBuf::from(value),
            "bandwidth_hz" => s.radio.bandwidth_total = parse_num(line, key, value)?,
            "rb_count" => s.radio.rb_count = parse_num(line, key, value)?,
            "subcarriers_per_rb" => s.radio.subcarriers_per_rb = parse_num(line, key, value)?,
            "bs_power_w" => s.radio.bs_power_total = parse_num(line, key, value)?,
            "sr_power_w" => s.radio.sr_power_max = parse_num(line, key, value)?,
            "noise_power_w" => s.radio.noise_power = parse_num(line, key, value)?,
            "target_error_prob" => s.radio.target_error_prob = parse_num(line, key, value)?,
            "interference_fraction" => s.radio.interference_fraction = parse_num(line, key, value)?,
            "pathloss_ref_db" => s.radio.pathloss_ref_db = parse_num(line, key, value)?,
            "pathloss_exp_lr" => s.radio.pathloss_exp_lr = parse_num(line, key, value)?,
            "pathloss_exp_sr" => s.radio.pathloss_exp_sr = parse_num(line, key, value)?,
            "p_rx_lr_w" => s.power.p_rx_lr = parse_num(line, key, value)?,
            "p_rx_sr_w" => s.power.p_rx_sr = parse_num(line, key, value)?,
            "p_tx_sr_w" => s.power.p_tx_sr = parse_num(line, key, value)?,
            "slot_duration_s" => s.power.slot_duration = parse_num(line, key, value)?,
            _ => {
                return Err(CliError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    check_ranges(&spec)?;
    Ok(spec)
}

/// Range checks that do not need a resolved K.
fn check_ranges(spec: &ExperimentSpec) -> Result<()> {
    for k in [spec.k_min, spec.k_max].into_iter().flatten() {
        if k < 2 {
            return Err(CliError::Range(format!("K must be at least 2 (got {k})")));
        }
    }
    let mut probe = spec.session.clone();
    // Per-MU beliefs are checked against each K later.
    if let Beliefs::PerMu(v) = &probe.beliefs {
        probe.mu_count = v.len().max(2);
    }
    probe.validate()?;
    Ok(())
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub k: Option<usize>,
    pub sweep_k: Option<(usize, usize)>,
    pub runs: Option<usize>,
    pub slots: Option<usize>,
    pub seed: Option<u64>,
    pub scenarios: Option<Vec<ScenarioKind>>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some((lo, hi)) = self.sweep_k {
            spec.k_min = Some(lo);
            spec.k_max = Some(hi);
        }
        if let Some(k) = self.k {
            spec.k_min = Some(k);
            spec.k_max = Some(k);
        }
        if let Some(r) = self.runs {
            spec.session.runs = r;
        }
        if let Some(s) = self.slots {
            spec.session.slot_count = s;
        }
        if let Some(seed) = self.seed {
            spec.session.master_seed = seed;
        }
        if let Some(sc) = &self.scenarios {
            spec.scenarios = sc.clone();
        }
        if let Some(out) = &self.out {
            spec.out = out.clone();
        }
    }
}

/// 12 significant digits, independent of magnitude.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.11e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

pub const DETAIL_HEADER: [&str; 9] = [
    "scenario",
    "K",
    "run_id",
    "mu_id",
    "throughput_bps",
    "energy_j",
    "efficiency_bpj",
    "cev",
    "feasible",
];

pub const SUMMARY_HEADER: [&str; 5] = ["scenario", "K", "metric", "mean", "ci95_halfwidth"];

fn feasible_cell(result: &ScenarioResult) -> String {
    match result.feasible() {
        Some(true) => "true".into(),
        Some(false) => "false".into(),
        None => String::new(),
    }
}

fn detail_rows(k: usize, run_id: u64, result: &ScenarioResult) -> Vec<[String; 9]> {
    let feasible = feasible_cell(result);
    (0..result.mu_count())
        .map(|mu| {
            [
                result.scenario.to_string(),
                k.to_string(),
                run_id.to_string(),
                mu.to_string(),
                fmt_float(result.per_mu_throughput[mu]),
                fmt_float(result.per_mu_energy[mu]),
                fmt_float(result.per_mu_efficiency[mu]),
                fmt_opt(result.per_mu_cev.as_ref().map(|c| c[mu])),
                feasible.clone(),
            ]
        })
        .collect()
}

/// Outcome of a finished experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub reports: Vec<MonteCarloReport>,
    pub summary_path: PathBuf,
    pub detail_path: PathBuf,
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

/// Runs every sweep point and writes the summary and detail CSVs. A short
/// table is written to `table` as each K finishes.
pub fn run_experiment(spec: &ExperimentSpec, table: &mut dyn Write) -> Result<ExperimentOutput> {
    spec.validate()?;
    let (lo, hi) = spec.k_range()?;
    let summary_path = spec.out.clone();
    let detail_path = spec.detail_path();
    let mut summary = create(&summary_path)?;
    let mut detail = create(&detail_path)?;
    summary.write_record(SUMMARY_HEADER)?;
    detail.write_record(DETAIL_HEADER)?;

    let io_err = |source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    writeln!(table, "{}", table_header()).map_err(io_err)?;

    let mut reports = Vec::new();
    for k in lo..=hi {
        let report = monte_carlo(&spec.session_for(k), &spec.scenarios)?;
        for s in &report.summary {
            summary.write_record([
                s.scenario.to_string(),
                k.to_string(),
                s.metric.as_str().to_string(),
                fmt_opt(s.mean),
                fmt_opt(s.ci95_halfwidth),
            ])?;
        }
        for run in &report.runs {
            for result in &run.results {
                for row in detail_rows(k, run.run_index, result) {
                    detail.write_record(&row)?;
                }
            }
        }
        for &scenario in &spec.scenarios {
            writeln!(table, "{}", table_row(&report, scenario)).map_err(io_err)?;
        }
        reports.push(report);
    }
    summary.flush().map_err(|source| CliError::Io {
        path: summary_path.clone(),
        source,
    })?;
    detail.flush().map_err(|source| CliError::Io {
        path: detail_path.clone(),
        source,
    })?;
    Ok(ExperimentOutput {
        reports,
        summary_path,
        detail_path,
    })
}

fn table_header() -> String {
    format!(
        "{:>4}  {:<9}  {:>14}  {:>10}  {:>14}  {:>8}  {:>9}  {:>10}",
        "K", "scenario", "throughput", "energy", "efficiency", "cev", "feasible", "coop_slots"
    )
}

fn table_row(report: &MonteCarloReport, scenario: ScenarioKind) -> String {
    let get = |m| report.summary_for(scenario, m).and_then(|s| s.mean);
    let num = |v: Option<f64>, prec: usize, sci: bool| match v {
        Some(x) if sci => format!("{x:.prec$e}"),
        Some(x) => format!("{x:.prec$}"),
        None => "-".into(),
    };
    let mut line = String::new();
    let _ = write!(
        line,
        "{:>4}  {:<9}  {:>14}  {:>10}  {:>14}  {:>8}  {:>9}  {:>10}",
        report.mu_count,
        scenario.as_str(),
        num(get(Metric::Throughput), 4, true),
        num(get(Metric::Energy), 4, false),
        num(get(Metric::Efficiency), 4, true),
        num(get(Metric::Cev), 4, false),
        num(get(Metric::FeasibleFraction), 2, false),
        match scenario {
            ScenarioKind::Mcrcd => num(mean_cooperative_slots(report), 2, false),
            _ => "-".into(),
        },
    );
    line
}

/// Mean cooperative-slot count of MCRCD, for quick diagnostics.
pub fn mean_cooperative_slots(report: &MonteCarloReport) -> Option<f64> {
    let counts: Vec<f64> = report
        .runs
        .iter()
        .filter_map(|r| match r.get(ScenarioKind::Mcrcd)?.detail {
            ScenarioDetail::Mcrcd {
                cooperative_slots, ..
            } => Some(cooperative_slots as f64),
            _ => None,
        })
        .collect();
    (!counts.is_empty()).then(|| counts.iter().sum::<f64>() / counts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_keys_rest_default() {
        let spec = parse_config("mu_count = 6\nruns = 100").unwrap();
        assert_eq!(spec.k_range().unwrap(), (6, 6));
        assert_eq!(spec.session.runs, 100);
        let mut expected = SessionConfig::new(6);
        expected.runs = 100;
        assert_eq!(spec.session_for(6), expected);
    }

    #[test]
    fn k_below_two_is_a_range_error() {
        assert!(matches!(
            parse_config("mu_count = 1"),
            Err(CliError::Range(_))
        ));
    }

    #[test]
    fn empty_file_is_all_defaults_but_needs_k() {
        let spec = parse_config("").unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        assert!(matches!(spec.k_range(), Err(CliError::MissingK)));
        assert_eq!(spec.session_for(5), SessionConfig::new(5));
    }

    #[test]
    fn unknown_key_and_bad_lines_carry_line_numbers() {
        match parse_config("# header\nruns = 3\nfoo = 1") {
            Err(CliError::UnknownKey { line, key }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "foo");
            }
            other => panic!("{other:?}"),
        }
        match parse_config("\n\nruns 3") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_config("runs = three") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comments_and_whitespace() {
        let spec =
            parse_config("  runs=7   # trailing\n\n# full line\nscenario = mcrcd, multicast")
                .unwrap();
        assert_eq!(spec.session.runs, 7);
        assert_eq!(
            spec.scenarios,
            vec![ScenarioKind::Multicast, ScenarioKind::Mcrcd]
        );
    }

    #[test]
    fn value_ranges_checked() {
        assert!(matches!(
            parse_config("belief = 1.5"),
            Err(CliError::Simulation(_))
        ));
        assert!(matches!(
            parse_config("slot_count = 0"),
            Err(CliError::Simulation(_))
        ));
        assert!(parse_config("target_error_prob = 0.3").is_err());
        assert!(parse_config("k_min = 1").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut spec = parse_config("mu_count = 6\nruns = 100\nmaster_seed = 4").unwrap();
        Overrides {
            sweep_k: Some((3, 5)),
            runs: Some(10),
            seed: Some(9),
            ..Default::default()
        }
        .apply(&mut spec);
        assert_eq!(spec.k_range().unwrap(), (3, 5));
        assert_eq!(spec.session.runs, 10);
        assert_eq!(spec.session.master_seed, 9);
    }

    #[test]
    fn sweep_syntax() {
        assert_eq!(parse_sweep("4:8").unwrap(), (4, 8));
        assert!(parse_sweep("4-8").is_err());
        let spec = ExperimentSpec {
            k_min: Some(5),
            k_max: Some(4),
            ..Default::default()
        };
        assert!(spec.k_range().is_err());
    }

    #[test]
    fn float_format_has_twelve_digits() {
        assert_eq!(fmt_float(1.8), "1.80000000000e0");
        assert_eq!(fmt_float(35_360_066.149_403_08), "3.53600661494e7");
    }

    #[test]
    fn detail_path_replaces_extension() {
        assert_eq!(
            detail_path(Path::new("out/r.csv")),
            PathBuf::from("out/r.detail.csv")
        );
        assert_eq!(detail_path(Path::new("r")), PathBuf::from("r.detail.csv"));
    }
}
