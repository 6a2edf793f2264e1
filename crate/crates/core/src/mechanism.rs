//! Incentive mechanism run by the base station.
//!
//! Each slot the BS picks seed-time fractions `rho` that minimize the total
//! D2D energy while keeping every MU no worse off than plain multicast
//! (individual rationality). Cooperation across slots is then sustained by a
//! grim-trigger strategy: as long as an MU believes the session continues
//! with probability at least its critical expectation value (CEV), relaying
//! is a best response.

use crate::energy::{multicast_energy, EnergyReport, PowerConstants};
use crate::error::{invalid, Error, Result};
use crate::formation::FormationGraph;
use crate::lp::{solve, LpProblem, LpStatus};

/// Slack on individual rationality and on `sum(rho) == 1`.
pub const IRC_TOL: f64 = 1e-9;

/// Seed-time fractions for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `rho[m]` is the share of the slot during which MU `m` is the seed.
    pub rho: Vec<f64>,
    pub feasible: bool,
    /// Total D2D energy `sum_k E'_k` at `rho`; `None` when infeasible.
    pub objective_value: Option<f64>,
}

impl Schedule {
    pub fn mu_count(&self) -> usize {
        self.rho.len()
    }
}

/// `w[k][m]`: energy MU `k` would spend if seed `m` held the whole slot.
fn role_energy_matrix(graphs: &[FormationGraph], constants: &PowerConstants) -> Vec<Vec<f64>> {
    let k = graphs.len();
    (0..k)
        .map(|mu| {
            graphs
                .iter()
                .map(|g| constants.role_power(g.role(mu)) * constants.slot_duration)
                .collect()
        })
        .collect()
}

/// Builds and solves the seed-time LP for the `K` graphs of one slot.
///
/// The LP is frequently degenerate (with star graphs the objective does not
/// depend on `rho` at all), so among optimal points a second solve picks one
/// that maximizes the smallest seed time.
pub fn schedule(graphs: &[FormationGraph], constants: &PowerConstants) -> Result<Schedule> {
    let k = graphs.len();
    if k == 0 {
        return invalid("schedule needs at least one graph");
    }
    for (m, g) in graphs.iter().enumerate() {
        if g.seed() != m || g.mu_count() != k {
            return invalid(format!(
                "graph {m} must be rooted at MU {m} over K = {k} MUs"
            ));
        }
    }
    constants.validate()?;
    let w = role_energy_matrix(graphs, constants);
    let baseline = multicast_energy(constants);
    let cost: Vec<f64> = (0..k).map(|m| (0..k).map(|mu| w[mu][m]).sum()).collect();

    let mut primary = LpProblem::minimize(cost.clone()).eq(vec![1.0; k], 1.0);
    for row in &w {
        primary = primary.le(row.clone(), baseline);
    }
    let first = solve(&primary)?;
    match first.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok(Schedule {
                rho: vec![0.0; k],
                feasible: false,
                objective_value: None,
            })
        }
        LpStatus::Unbounded => {
            return Err(Error::SolverFailure(
                "seed-time LP reported unbounded".into(),
            ))
        }
    }

    // Variables (rho_0 .. rho_{K-1}, t): maximize t <= rho_m at optimal cost.
    let pad = |mut row: Vec<f64>, last: f64| {
        row.push(last);
        row
    };
    let mut objective = vec![0.0; k + 1];
    objective[k] = -1.0;
    let optimum = first.objective_value;
    let mut secondary = LpProblem::minimize(objective)
        .eq(pad(vec![1.0; k], 0.0), 1.0)
        .le(
            pad(cost.clone(), 0.0),
            optimum + 1e-10 * (1.0 + optimum.abs()),
        );
    for row in &w {
        secondary = secondary.le(pad(row.clone(), 0.0), baseline);
    }
    for m in 0..k {
        let mut row = vec![0.0; k + 1];
        row[m] = -1.0;
        row[k] = 1.0;
        secondary = secondary.le(row, 0.0);
    }
    let rho: Vec<f64> = match solve(&secondary) {
        Ok(s) if s.status == LpStatus::Optimal => s.x[..k].to_vec(),
        _ => first.x.clone(),
    };
    let rho: Vec<f64> = rho.into_iter().map(|r| r.clamp(0.0, 1.0)).collect();
    let objective_value = (0..k).map(|m| cost[m] * rho[m]).sum();
    Ok(Schedule {
        rho,
        feasible: true,
        objective_value: Some(objective_value),
    })
}

/// Stage-game payoffs (negated per-slot energies).
#[derive(Debug, Clone, PartialEq)]
pub struct Payoffs {
    pub all_c: Vec<f64>,
    pub all_d: Vec<f64>,
    /// Payoff of an MU that stops relaying while everyone else cooperates.
    pub unilateral_defect: Vec<f64>,
}

/// Energy of a unilateral defector: LR download while it is the seed, SR
/// reception otherwise.
pub fn defection_energy(rho_own: f64, constants: &PowerConstants) -> f64 {
    ((constants.p_rx_lr - constants.p_rx_sr) * rho_own + constants.p_rx_sr)
        * constants.slot_duration
}

fn check_feasible(report: &EnergyReport, schedule: &Schedule) -> Result<()> {
    if !schedule.feasible {
        return invalid("payoffs need a feasible schedule");
    }
    if report.per_mu_d2d.len() != schedule.mu_count() {
        return invalid("energy report and schedule disagree on K");
    }
    Ok(())
}

pub fn stage_payoffs(
    report: &EnergyReport,
    schedule: &Schedule,
    constants: &PowerConstants,
) -> Result<Payoffs> {
    check_feasible(report, schedule)?;
    Ok(Payoffs {
        all_c: report.per_mu_d2d.iter().map(|e| -e).collect(),
        all_d: report.per_mu_multicast.iter().map(|e| -e).collect(),
        unilateral_defect: schedule
            .rho
            .iter()
            .map(|&r| -defection_energy(r, constants))
            .collect(),
    })
}

/// Which closed form to evaluate for the CEV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CevFormula {
    /// Threshold solving the grim-trigger indifference condition.
    #[default]
    Indifference,
    /// Historical closed form whose denominator adds the SR reception term
    /// instead of subtracting it. Kept for comparison only; it does not
    /// solve the indifference condition.
    SignFlippedDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cev {
    /// Threshold probability, clamped to `[0, 1]`.
    pub value: f64,
    /// Set when the multicast cost does not exceed the defection cost, so
    /// cooperation is never strictly better and `value` is pinned to 1.
    pub degenerate: bool,
}

/// Critical expectation value of `mu`.
///
/// With `A = (P_Rx - P_Rx,SR) rho_k T + P_Rx,SR T` the one-slot cost of
/// defecting, cooperating forever costs `E'/(1-p)` while defecting once and
/// then falling back to multicast costs `A + p E/(1-p)`. The two agree at
/// `p* = (E' - A) / (E - A)`.
pub fn critical_expectation(
    mu: usize,
    report: &EnergyReport,
    schedule: &Schedule,
    constants: &PowerConstants,
) -> Result<Cev> {
    critical_expectation_with(mu, report, schedule, constants, CevFormula::Indifference)
}

pub fn critical_expectation_with(
    mu: usize,
    report: &EnergyReport,
    schedule: &Schedule,
    constants: &PowerConstants,
    formula: CevFormula,
) -> Result<Cev> {
    check_feasible(report, schedule)?;
    if mu >= schedule.mu_count() {
        return invalid(format!(
            "MU {mu} out of range (K = {})",
            schedule.mu_count()
        ));
    }
    let coop = report.per_mu_d2d[mu];
    let multicast = report.per_mu_multicast[mu];
    let defect = defection_energy(schedule.rho[mu], constants);
    let denominator = match formula {
        CevFormula::Indifference => multicast - defect,
        CevFormula::SignFlippedDenominator => {
            multicast
                - (constants.p_rx_lr - constants.p_rx_sr)
                    * schedule.rho[mu]
                    * constants.slot_duration
                + constants.p_rx_sr * constants.slot_duration
        }
    };
    if denominator <= 1e-12 {
        return Ok(Cev {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(Cev {
        value: ((coop - defect) / denominator).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Discounted payoff of paying `per_slot_energy` every slot while the
/// session continues with probability `p`.
pub fn discounted_payoff(p: f64, per_slot_energy: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return invalid(format!("continuation probability {p} outside [0, 1)"));
    }
    Ok(-per_slot_energy / (1.0 - p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Cooperate,
    Defect,
}

/// Repeated-game state of one content session.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    /// Probability each MU assigns to the session continuing.
    pub beliefs: Vec<f64>,
    /// Most recent critical expectation values.
    pub cev: Vec<f64>,
    pub history: Vec<Vec<Action>>,
    /// Absorbing punishment state.
    pub triggered: bool,
}

impl GameState {
    pub fn new(beliefs: Vec<f64>) -> Result<Self> {
        if beliefs.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return invalid("beliefs must lie in [0, 1]");
        }
        let k = beliefs.len();
        Ok(Self {
            beliefs,
            cev: vec![0.0; k],
            history: Vec::new(),
            triggered: false,
        })
    }

    /// Plays one slot under grim trigger.
    ///
    /// Once triggered every MU defects. Otherwise MU `k` cooperates iff its
    /// belief reaches its CEV, and any defection triggers punishment for all
    /// later slots.
    pub fn grim_trigger_step(&mut self, cev: &[f64]) -> Result<Vec<Action>> {
        if cev.len() != self.beliefs.len() {
            return invalid(format!("{} CEVs for {} MUs", cev.len(), self.beliefs.len()));
        }
        if cev.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return invalid("CEVs must lie in [0, 1]");
        }
        self.cev = cev.to_vec();
        let actions: Vec<Action> = if self.triggered {
            vec![Action::Defect; cev.len()]
        } else {
            self.beliefs
                .iter()
                .zip(cev)
                .map(|(b, c)| {
                    if b >= c {
                        Action::Cooperate
                    } else {
                        Action::Defect
                    }
                })
                .collect()
        };
        if actions.contains(&Action::Defect) {
            self.triggered = true;
        }
        self.history.push(actions.clone());
        Ok(actions)
    }
}
