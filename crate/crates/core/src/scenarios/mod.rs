//! Multi-slot sessions for the three comparison scenarios.
//!
//! - **multicast**: every MU downloads over its LR link at the worst LR rate.
//! - **optimal**: non-selfish MUs hold the single energy-minimizing LAN for the whole slot.
//! - **mcrcd**: every MU is seed for a scheduled share of each slot, the LAN
//!   self-organizes per seed and grim trigger keeps relays honest.

mod montecarlo;
mod optimal;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{reception_rate, Point, RadioConfig, RateTable, Topology};
use crate::energy::{multicast_energy, EnergyReport, PowerConstants};
use crate::error::{invalid, Error, Result};
use crate::formation::{build_preferences, estimate_graph, FormationGraph, ProposalOrder};
use crate::mechanism::{critical_expectation, schedule, Action, GameState, Schedule};

pub use montecarlo::{monte_carlo, summarize, Metric, MetricSummary, MonteCarloReport, RunRecord};
pub use optimal::{
    exact_optimum, heuristic_optimum, prufer_optimum, run_optimal, OptimalLan, OptimalMode,
    TreeFamily,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    Multicast,
    Optimal,
    Mcrcd,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [Self::Multicast, Self::Optimal, Self::Mcrcd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Multicast => "multicast",
            Self::Optimal => "optimal",
            Self::Mcrcd => "mcrcd",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multicast" => Ok(Self::Multicast),
            "optimal" => Ok(Self::Optimal),
            "mcrcd" => Ok(Self::Mcrcd),
            other => invalid(format!("unknown scenario `{other}`")),
        }
    }
}

/// Per-MU continuation beliefs.
#[derive(Debug, Clone, PartialEq)]
pub enum Beliefs {
    Uniform(f64),
    PerMu(Vec<f64>),
}

impl Beliefs {
    pub fn resolve(&self, mu_count: usize) -> Result<Vec<f64>> {
        let v = match self {
            Self::Uniform(p) => vec![*p; mu_count],
            Self::PerMu(v) if v.len() == mu_count => v.clone(),
            Self::PerMu(v) => {
                return invalid(format!("{} beliefs given for {mu_count} MUs", v.len()))
            }
        };
        if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("beliefs must lie in [0, 1]");
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub mu_count: usize,
    pub slot_count: usize,
    /// Side of the square deployment area in metres; the BS sits at its centre.
    pub area_side: f64,
    pub master_seed: u64,
    pub runs: usize,
    pub beliefs: Beliefs,
    /// Hop limit `H` of every LAN.
    pub max_hops: usize,
    /// Largest K solved exactly in the optimal scenario.
    pub exhaustive_limit: usize,
    pub radio: RadioConfig,
    pub power: PowerConstants,
}

impl SessionConfig {
    pub fn new(mu_count: usize) -> Self {
        Self {
            mu_count,
            slot_count: 10,
            area_side: 400.0,
            master_seed: 1,
            runs: 100,
            beliefs: Beliefs::Uniform(0.9),
            max_hops: 4,
            exhaustive_limit: 8,
            radio: RadioConfig::default(),
            power: PowerConstants::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_count < 2 {
            return invalid(format!(
                "mu_count must be at least 2 (got {})",
                self.mu_count
            ));
        }
        if self.slot_count == 0 {
            return invalid("slot_count must be at least 1");
        }
        if self.runs == 0 {
            return invalid("runs must be at least 1");
        }
        if self.max_hops == 0 {
            return invalid("max_hops must be at least 1");
        }
        if !(self.area_side.is_finite() && self.area_side > 0.0) {
            return invalid("area_side must be positive");
        }
        self.beliefs.resolve(self.mu_count)?;
        self.radio.validate()?;
        self.power.validate()
    }
}

/// Scenario-specific facts about one session.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioDetail {
    Multicast,
    Optimal {
        mode: OptimalMode,
        /// No LAN beat plain multicast; the multicast result is reported.
        fallback: bool,
        seed: Option<usize>,
    },
    Mcrcd {
        feasible_slots: usize,
        cooperative_slots: usize,
        /// First slot (0-based) in which some MU defected.
        defection_slot: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: ScenarioKind,
    /// Bits/s averaged over the session.
    pub per_mu_throughput: Vec<f64>,
    /// Joules per slot averaged over the session.
    pub per_mu_energy: Vec<f64>,
    /// Bits per Joule.
    pub per_mu_efficiency: Vec<f64>,
    /// Each MU's CEV averaged over feasible slots (MCRCD only).
    pub per_mu_cev: Option<Vec<f64>>,
    /// Mean CEV over MUs and feasible slots (MCRCD only).
    pub mean_cev: Option<f64>,
    /// Share of slots whose seed-time LP was feasible (MCRCD only).
    pub feasible_fraction: Option<f64>,
    pub detail: ScenarioDetail,
}

impl ScenarioResult {
    fn from_totals(
        scenario: ScenarioKind,
        throughput: Vec<f64>,
        energy: Vec<f64>,
        slot_duration: f64,
        detail: ScenarioDetail,
    ) -> Self {
        let per_mu_efficiency = throughput
            .iter()
            .zip(&energy)
            .map(|(r, e)| if *e > 0.0 { r * slot_duration / e } else { 0.0 })
            .collect();
        Self {
            scenario,
            per_mu_throughput: throughput,
            per_mu_energy: energy,
            per_mu_efficiency,
            per_mu_cev: None,
            mean_cev: None,
            feasible_fraction: None,
            detail,
        }
    }

    pub fn mu_count(&self) -> usize {
        self.per_mu_throughput.len()
    }

    pub fn total_energy(&self) -> f64 {
        self.per_mu_energy.iter().sum()
    }

    pub fn mean_throughput(&self) -> f64 {
        mean(&self.per_mu_throughput)
    }

    pub fn mean_energy(&self) -> f64 {
        mean(&self.per_mu_energy)
    }

    pub fn mean_efficiency(&self) -> f64 {
        mean(&self.per_mu_efficiency)
    }

    /// Whether the scenario's feasibility notion held for the whole session:
    /// every slot schedulable for MCRCD, a LAN formed for optimal.
    pub fn feasible(&self) -> Option<bool> {
        match &self.detail {
            ScenarioDetail::Multicast => None,
            ScenarioDetail::Optimal { fallback, .. } => Some(!fallback),
            ScenarioDetail::Mcrcd { .. } => self.feasible_fraction.map(|f| f == 1.0),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Deterministic random deployment for replication `run_index`.
///
/// MU positions are drawn in index order from one stream per
/// `(master_seed, run_index)`, so the first `K` MUs of a larger deployment
/// coincide with the `K`-MU deployment of the same run.
pub fn generate_topology(config: &SessionConfig, run_index: u64) -> Result<Topology> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    rng.set_stream(run_index);
    let side = config.area_side;
    let mus = (0..config.mu_count)
        .map(|_| {
            let x = rng.gen_range(0.0..side);
            let y = rng.gen_range(0.0..side);
            Point::new(x, y)
        })
        .collect();
    Topology::from_positions(Point::new(side / 2.0, side / 2.0), mus, config.radio)
}

pub fn run_multicast(topology: &Topology, config: &SessionConfig) -> Result<ScenarioResult> {
    let rates = RateTable::compute(topology)?;
    Ok(multicast_result(&rates, &config.power))
}

fn multicast_result(rates: &RateTable, power: &PowerConstants) -> ScenarioResult {
    let k = rates.mu_count();
    ScenarioResult::from_totals(
        ScenarioKind::Multicast,
        vec![rates.multicast_rate; k],
        vec![multicast_energy(power); k],
        power.slot_duration,
        ScenarioDetail::Multicast,
    )
}

/// Rate at which `mu` gets the content while `graph`'s seed is active;
/// MUs outside the LAN download on their own LR link.
pub fn d2d_rate(mu: usize, graph: &FormationGraph, rates: &RateTable) -> Result<f64> {
    if graph.is_connected(mu) {
        reception_rate(mu, graph, rates)
    } else {
        Ok(rates.lr_rate[mu])
    }
}

/// Everything that happened in one MCRCD slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub orders: Vec<ProposalOrder>,
    pub graphs: Vec<FormationGraph>,
    pub schedule: Schedule,
    /// Per-MU energies under the schedule; `None` when infeasible.
    pub report: Option<EnergyReport>,
    pub cev: Option<Vec<f64>>,
    pub actions: Option<Vec<Action>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McrcdTrace {
    pub slots: Vec<SlotTrace>,
    pub game: GameState,
}

pub fn run_mcrcd(topology: &Topology, config: &SessionConfig) -> Result<ScenarioResult> {
    run_mcrcd_traced(topology, config).map(|(r, _)| r)
}

/// Runs an MCRCD session and keeps the per-slot trace.
///
/// Slots whose LP is infeasible, or in which any MU defects, are accounted
/// as plain multicast. The proposal order of every seed rotates by one
/// position after each slot.
pub fn run_mcrcd_traced(
    topology: &Topology,
    config: &SessionConfig,
) -> Result<(ScenarioResult, McrcdTrace)> {
    let k = topology.mu_count();
    let power = &config.power;
    let rates = RateTable::compute(topology)?;
    let prefs = build_preferences(&rates);
    let mut game = GameState::new(config.beliefs.resolve(k)?)?;
    let mut orders: Vec<ProposalOrder> = (0..k).map(|m| ProposalOrder::ascending(m, k)).collect();

    let multicast = multicast_result(&rates, power);
    let mut throughput = vec![0.0; k];
    let mut energy = vec![0.0; k];
    let mut cev_sum = vec![0.0; k];
    let mut feasible_slots = 0;
    let mut cooperative_slots = 0;
    let mut defection_slot = None;
    let mut slots = Vec::with_capacity(config.slot_count);

    for slot in 0..config.slot_count {
        let graphs = (0..k)
            .map(|m| estimate_graph(&rates, m, &orders[m], &prefs, config.max_hops))
            .collect::<Result<Vec<_>>>()?;
        let sched = schedule(&graphs, power)?;
        let mut trace = SlotTrace {
            orders: orders.clone(),
            graphs,
            schedule: sched,
            report: None,
            cev: None,
            actions: None,
        };

        if trace.schedule.feasible {
            feasible_slots += 1;
            let report = EnergyReport::compute(&trace.graphs, &trace.schedule.rho, power)?;
            let cev = (0..k)
                .map(|mu| {
                    critical_expectation(mu, &report, &trace.schedule, power).map(|c| c.value)
                })
                .collect::<Result<Vec<_>>>()?;
            cev_sum.iter_mut().zip(&cev).for_each(|(s, c)| *s += c);
            let actions = game.grim_trigger_step(&cev)?;
            let cooperative = actions.iter().all(|a| *a == Action::Cooperate);
            if !cooperative && defection_slot.is_none() {
                defection_slot = Some(slot);
            }
            if cooperative {
                cooperative_slots += 1;
                for mu in 0..k {
                    let mut rate = 0.0;
                    for (g, &rho) in trace.graphs.iter().zip(&trace.schedule.rho) {
                        rate += rho * d2d_rate(mu, g, &rates)?;
                    }
                    throughput[mu] += rate;
                    energy[mu] += report.per_mu_d2d[mu];
                }
            }
            trace.report = Some(report);
            trace.cev = Some(cev);
            trace.actions = Some(actions);
        }
        slots.push(trace);
        orders = orders.iter().map(ProposalOrder::rotate).collect();
    }

    // Non-cooperative slots fall back to multicast; weight them in one step
    // so an all-multicast session reproduces the multicast numbers exactly.
    let n = config.slot_count as f64;
    let fallback_share = (config.slot_count - cooperative_slots) as f64 / n;
    for mu in 0..k {
        throughput[mu] = throughput[mu] / n + fallback_share * multicast.per_mu_throughput[mu];
        energy[mu] = energy[mu] / n + fallback_share * multicast.per_mu_energy[mu];
    }
    let mut result = ScenarioResult::from_totals(
        ScenarioKind::Mcrcd,
        throughput,
        energy,
        power.slot_duration,
        ScenarioDetail::Mcrcd {
            feasible_slots,
            cooperative_slots,
            defection_slot,
        },
    );
    if feasible_slots > 0 {
        let per_mu: Vec<f64> = cev_sum.iter().map(|s| s / feasible_slots as f64).collect();
        result.mean_cev = Some(mean(&per_mu));
        result.per_mu_cev = Some(per_mu);
    }
    result.feasible_fraction = Some(feasible_slots as f64 / n);
    Ok((result, McrcdTrace { slots, game }))
}

/// Runs one scenario on a topology.
pub fn run_scenario(
    kind: ScenarioKind,
    topology: &Topology,
    config: &SessionConfig,
) -> Result<ScenarioResult> {
    match kind {
        ScenarioKind::Multicast => run_multicast(topology, config),
        ScenarioKind::Optimal => run_optimal(topology, config),
        ScenarioKind::Mcrcd => run_mcrcd(topology, config),
    }
}
