//! Paired Monte Carlo replications with normal-approximation 95% intervals.

use rayon::prelude::*;

use crate::error::{invalid, Result};

use super::{generate_topology, run_scenario, ScenarioKind, ScenarioResult, SessionConfig};

const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Mean per-MU throughput, bits/s.
    Throughput,
    /// Mean per-MU energy per slot, J.
    Energy,
    /// Mean per-MU efficiency, bits/J.
    Efficiency,
    /// Energy of all MUs per slot, J.
    TotalEnergy,
    /// Mean CEV over runs where one was computed.
    Cev,
    /// Share of runs that were feasible for the whole session.
    FeasibleFraction,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Self::Throughput,
        Self::Energy,
        Self::Efficiency,
        Self::TotalEnergy,
        Self::Cev,
        Self::FeasibleFraction,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Throughput => "throughput_bps",
            Self::Energy => "energy_j",
            Self::Efficiency => "efficiency_bpj",
            Self::TotalEnergy => "total_energy_j",
            Self::Cev => "cev",
            Self::FeasibleFraction => "feasible_fraction",
        }
    }

    /// Per-run sample, `None` when the metric does not apply to this run.
    pub fn sample(&self, result: &ScenarioResult) -> Option<f64> {
        match self {
            Self::Throughput => Some(result.mean_throughput()),
            Self::Energy => Some(result.mean_energy()),
            Self::Efficiency => Some(result.mean_efficiency()),
            Self::TotalEnergy => Some(result.total_energy()),
            Self::Cev => result.mean_cev,
            Self::FeasibleFraction => result.feasible().map(|f| if f { 1.0 } else { 0.0 }),
        }
    }
}

/// All scenarios of one replication, run on the same topology.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_index: u64,
    pub results: Vec<ScenarioResult>,
}

impl RunRecord {
    pub fn get(&self, kind: ScenarioKind) -> Option<&ScenarioResult> {
        self.results.iter().find(|r| r.scenario == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub scenario: ScenarioKind,
    pub metric: Metric,
    /// `None` when no run produced a sample.
    pub mean: Option<f64>,
    /// `None` with fewer than two samples.
    pub ci95_halfwidth: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub mu_count: usize,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<MetricSummary>,
}

impl MonteCarloReport {
    pub fn summary_for(&self, scenario: ScenarioKind, metric: Metric) -> Option<&MetricSummary> {
        self.summary
            .iter()
            .find(|s| s.scenario == scenario && s.metric == metric)
    }
}

/// Runs `config.runs` replications of the selected scenarios.
///
/// Replications run in parallel on the current rayon pool and are reduced in
/// run-index order, so the report depends only on the configuration.
pub fn monte_carlo(config: &SessionConfig, scenarios: &[ScenarioKind]) -> Result<MonteCarloReport> {
    config.validate()?;
    if config.runs < 2 {
        return invalid("Monte Carlo needs at least two runs for a confidence interval");
    }
    let runs = (0..config.runs as u64)
        .into_par_iter()
        .map(|run_index| {
            let topology = generate_topology(config, run_index)?;
            let results = scenarios
                .iter()
                .map(|&kind| run_scenario(kind, &topology, config))
                .collect::<Result<Vec<_>>>()?;
            Ok(RunRecord { run_index, results })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloReport {
        mu_count: config.mu_count,
        summary: summarize(&runs, scenarios),
        runs,
    })
}

/// Mean and 95% half-width of every metric for every scenario.
pub fn summarize(runs: &[RunRecord], scenarios: &[ScenarioKind]) -> Vec<MetricSummary> {
    let mut out = Vec::new();
    for &scenario in scenarios {
        for metric in Metric::ALL {
            let samples: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.get(scenario))
                .filter_map(|r| metric.sample(r))
                .collect();
            let (mean, half) = mean_ci(&samples);
            out.push(MetricSummary {
                scenario,
                metric,
                mean,
                ci95_halfwidth: half,
                samples: samples.len(),
            });
        }
    }
    out
}

fn mean_ci(samples: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = samples.len();
    if n == 0 {
        return (None, None);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(Z_95 * (var / n as f64).sqrt()))
}
