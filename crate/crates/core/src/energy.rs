//! Per-slot energy accounting by role.
//!
//! Power draw is constant per link type: an MU pays LR reception power while
//! downloading from the BS, SR reception power while listening to a peer, and
//! SR transmit power on top while forwarding. A slot is split into sub-slots,
//! one per seed, of length `rho_m * T`.

use crate::error::{invalid, Result};
use crate::formation::{FormationGraph, Role};

/// Tolerance on `sum(rho) == 1`.
pub const RHO_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConstants {
    /// LR reception power in W.
    pub p_rx_lr: f64,
    /// SR reception power in W.
    pub p_rx_sr: f64,
    /// SR transmission power in W.
    pub p_tx_sr: f64,
    /// Slot duration `T` in seconds.
    pub slot_duration: f64,
}

impl Default for PowerConstants {
    fn default() -> Self {
        Self {
            p_rx_lr: 1.8,
            p_rx_sr: 0.925,
            p_tx_sr: 1.425,
            slot_duration: 1.0,
        }
    }
}

impl PowerConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.p_rx_lr, self.p_rx_sr, self.p_tx_sr, self.slot_duration];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return invalid("powers and slot duration must be finite and positive");
        }
        Ok(())
    }

    /// Power drawn by an MU holding `role` for the whole sub-slot.
    ///
    /// A seed without children never transmits, and an MU nobody accepted
    /// downloads the content over its own LR link.
    pub fn role_power(&self, role: Role) -> f64 {
        match role {
            Role::Seed { has_children: true } => self.p_rx_lr + self.p_tx_sr,
            Role::Seed {
                has_children: false,
            }
            | Role::Unconnected => self.p_rx_lr,
            Role::Relay => self.p_rx_sr + self.p_tx_sr,
            Role::Sink => self.p_rx_sr,
        }
    }
}

/// Energy of one slot of plain multicast, `E_k = P_Rx T`.
pub fn multicast_energy(constants: &PowerConstants) -> f64 {
    constants.p_rx_lr * constants.slot_duration
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return invalid(format!("seed time fraction {rho} outside [0, 1]"));
    }
    Ok(())
}

/// Energy `mu` spends during the sub-slot of `graph`'s seed.
pub fn role_energy(
    mu: usize,
    graph: &FormationGraph,
    rho_seed: f64,
    constants: &PowerConstants,
) -> Result<f64> {
    check_rho(rho_seed)?;
    if mu >= graph.mu_count() {
        return invalid(format!("MU {mu} out of range (K = {})", graph.mu_count()));
    }
    Ok(constants.role_power(graph.role(mu)) * rho_seed * constants.slot_duration)
}

/// Energy of a single LAN held for the whole slot, summed over all MUs.
pub fn lan_energy(graph: &FormationGraph, constants: &PowerConstants) -> f64 {
    (0..graph.mu_count())
        .map(|m| constants.role_power(graph.role(m)))
        .sum::<f64>()
        * constants.slot_duration
}

fn check_schedule(graphs: &[FormationGraph], rho: &[f64]) -> Result<()> {
    let k = graphs.len();
    if rho.len() != k {
        return invalid(format!("{} seed times for {k} graphs", rho.len()));
    }
    for (m, g) in graphs.iter().enumerate() {
        if g.seed() != m || g.mu_count() != k {
            return invalid(format!(
                "graph {m} must be rooted at MU {m} over K = {k} MUs"
            ));
        }
    }
    for &r in rho {
        check_rho(r)?;
    }
    let sum: f64 = rho.iter().sum();
    if (sum - 1.0).abs() > RHO_SUM_TOL {
        return invalid(format!("seed times sum to {sum}, expected 1"));
    }
    Ok(())
}

/// `E'_k`: energy of `mu` over one slot of rotating seeds.
pub fn total_d2d_energy(
    mu: usize,
    graphs: &[FormationGraph],
    rho: &[f64],
    constants: &PowerConstants,
) -> Result<f64> {
    check_schedule(graphs, rho)?;
    graphs
        .iter()
        .zip(rho)
        .map(|(g, &r)| role_energy(mu, g, r, constants))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// `E_k` for every MU.
    pub per_mu_multicast: Vec<f64>,
    /// `E'_k` for every MU.
    pub per_mu_d2d: Vec<f64>,
    /// Entry `[k][m]` is the energy of MU `k` during seed `m`'s sub-slot.
    pub per_graph_contribution: Vec<Vec<f64>>,
}

impl EnergyReport {
    pub fn compute(
        graphs: &[FormationGraph],
        rho: &[f64],
        constants: &PowerConstants,
    ) -> Result<Self> {
        check_schedule(graphs, rho)?;
        let k = graphs.len();
        let mut contribution = vec![vec![0.0; k]; k];
        for (mu, row) in contribution.iter_mut().enumerate() {
            for (m, g) in graphs.iter().enumerate() {
                row[m] = role_energy(mu, g, rho[m], constants)?;
            }
        }
        Ok(Self {
            per_mu_multicast: vec![multicast_energy(constants); k],
            per_mu_d2d: contribution.iter().map(|row| row.iter().sum()).collect(),
            per_graph_contribution: contribution,
        })
    }

    pub fn total_d2d(&self) -> f64 {
        self.per_mu_d2d.iter().sum()
    }

    pub fn total_multicast(&self) -> f64 {
        self.per_mu_multicast.iter().sum()
    }
}
