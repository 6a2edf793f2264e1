//! The non-selfish optimum: one LAN, one seed for the whole slot, minimum
//! total energy.
//!
//! A LAN is admissible when every tree edge carries at least the
//! transmitter's reception rate (which for such trees is always the seed's
//! LR rate) and no member sits deeper than `H` hops. MUs outside the LAN
//! download over their own LR link. These are the same inequalities the
//! formation procedure enforces, so every formed graph is admissible here.

use std::collections::VecDeque;

use crate::channel::{RateTable, Topology};
use crate::energy::{lan_energy, multicast_energy, PowerConstants};
use crate::error::{invalid, Result};
use crate::formation::{build_preferences, estimate_graph, FormationGraph, ProposalOrder};

use super::{
    d2d_rate, multicast_result, ScenarioDetail, ScenarioKind, ScenarioResult, SessionConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimalMode {
    Exact,
    Heuristic,
}

impl OptimalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Heuristic => "heuristic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalLan {
    pub graph: FormationGraph,
    /// Total energy of all MUs for one slot.
    pub total_energy: f64,
}

fn usable_edges(rates: &RateTable, seed: usize) -> Vec<Vec<bool>> {
    let floor = rates.lr_rate[seed];
    let k = rates.mu_count();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| i != j && rates.sr_rate[i][j] >= floor)
                .collect()
        })
        .collect()
}

/// Tree with forwarding set `relays` (plus the seed), or `None` when some
/// relay cannot be reached within `max_hops - 1` hops.
fn tree_for_relays(
    seed: usize,
    relays: &[bool],
    usable: &[Vec<bool>],
    max_hops: usize,
) -> Option<FormationGraph> {
    let k = relays.len();
    let mut graph = FormationGraph::new(k, seed).ok()?;
    let mut queue = VecDeque::from([seed]);
    while let Some(u) = queue.pop_front() {
        if graph.depth(u)? + 1 >= max_hops {
            continue;
        }
        for v in 0..k {
            if relays[v] && !graph.is_connected(v) && usable[u][v] {
                graph.attach(v, u).ok()?;
                queue.push_back(v);
            }
        }
    }
    if (0..k).any(|v| relays[v] && !graph.is_connected(v)) {
        return None;
    }
    // Forwarders in join (BFS) order; attach every remaining MU it can hear.
    let forwarders: Vec<usize> = graph
        .join_order()
        .iter()
        .copied()
        .filter(|&u| graph.depth(u).is_some_and(|d| d < max_hops))
        .collect();
    for v in 0..k {
        if graph.is_connected(v) {
            continue;
        }
        if let Some(&u) = forwarders.iter().find(|&&u| usable[u][v]) {
            graph.attach(v, u).ok()?;
        }
    }
    Some(graph)
}

/// Exhaustive optimum over every (seed, forwarding set) pair.
///
/// A LAN's energy depends only on who forwards and who is reached, and
/// for a fixed forwarding set a BFS tree reaches everyone any tree could
/// while minimizing depths. So `K * 2^(K-1)` candidates cover all trees.
/// Returns `None` when no LAN is cheaper than plain multicast.
pub fn exact_optimum(
    rates: &RateTable,
    constants: &PowerConstants,
    max_hops: usize,
) -> Result<Option<OptimalLan>> {
    let k = rates.mu_count();
    if k > 24 {
        return invalid(format!(
            "exact optimum is exponential in K; refusing K = {k}"
        ));
    }
    let mut best: Option<OptimalLan> = None;
    let mut best_energy = multicast_energy(constants) * k as f64;
    for seed in 0..k {
        let usable = usable_edges(rates, seed);
        let others: Vec<usize> = (0..k).filter(|&m| m != seed).collect();
        let mut relays = vec![false; k];
        for mask in 0u32..(1 << others.len()) {
            for (bit, &m) in others.iter().enumerate() {
                relays[m] = mask & (1 << bit) != 0;
            }
            let Some(graph) = tree_for_relays(seed, &relays, &usable, max_hops) else {
                continue;
            };
            let energy = lan_energy(&graph, constants);
            if energy < best_energy - 1e-12 {
                best_energy = energy;
                best = Some(OptimalLan {
                    graph,
                    total_energy: energy,
                });
            }
        }
    }
    Ok(best)
}

/// Best LAN the formation procedure builds from any seed, with the initial
/// ascending proposal order.
pub fn heuristic_optimum(
    rates: &RateTable,
    constants: &PowerConstants,
    max_hops: usize,
) -> Result<Option<OptimalLan>> {
    let k = rates.mu_count();
    let prefs = build_preferences(rates);
    let mut best: Option<OptimalLan> = None;
    let mut best_energy = multicast_energy(constants) * k as f64;
    for seed in 0..k {
        let graph = estimate_graph(
            rates,
            seed,
            &ProposalOrder::ascending(seed, k),
            &prefs,
            max_hops,
        )?;
        let energy = lan_energy(&graph, constants);
        if energy < best_energy - 1e-12 {
            best_energy = energy;
            best = Some(OptimalLan {
                graph,
                total_energy: energy,
            });
        }
    }
    Ok(best)
}

/// Which trees [`prufer_optimum`] enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFamily {
    /// Every MU is a LAN member.
    Spanning,
    /// Any LAN containing the seed; the rest download alone.
    Partial,
}

/// Decodes a Prufer sequence over `n` vertices into an edge list.
fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n)
            .find(|&u| degree[u] == 1)
            .expect("a leaf always exists");
        edges.push((leaf, v));
        degree[leaf] = 0;
        degree[v] -= 1;
    }
    let last: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((last[0], last[1]));
    edges
}

/// Brute-force optimum by Cayley enumeration of labeled trees.
///
/// Trees range over `K + 1` vertices, vertex `K` standing for the BS. A
/// valid structure has at most one BS neighbour with children (the seed);
/// the other BS neighbours download alone. With [`TreeFamily::Spanning`]
/// the BS must have exactly one neighbour. Returns the minimum total energy,
/// counting all-alone as plain multicast, or `None` when no structure is
/// admissible. Cost grows as `(K+1)^(K-1)`; meant as a cross-check for small K.
pub fn prufer_optimum(
    rates: &RateTable,
    constants: &PowerConstants,
    max_hops: usize,
    family: TreeFamily,
) -> Option<f64> {
    let k = rates.mu_count();
    let n = k + 1;
    let bs = k;
    if k == 1 {
        return Some(multicast_energy(constants));
    }
    let mut best: Option<f64> = None;
    let mut seq = vec![0usize; n - 2];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    loop {
        for a in adj.iter_mut() {
            a.clear();
        }
        for (u, v) in prufer_edges(&seq, n) {
            adj[u].push(v);
            adj[v].push(u);
        }
        if let Some(e) = evaluate_bs_tree(&adj, bs, rates, constants, max_hops, family) {
            if best.is_none_or(|b| e < b) {
                best = Some(e);
            }
        }
        // Odometer increment over [0, n)^(n-2).
        let mut i = 0;
        loop {
            if i == seq.len() {
                return best;
            }
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

fn evaluate_bs_tree(
    adj: &[Vec<usize>],
    bs: usize,
    rates: &RateTable,
    constants: &PowerConstants,
    max_hops: usize,
    family: TreeFamily,
) -> Option<f64> {
    let k = bs;
    let roots = &adj[bs];
    let has_children = |v: usize| adj[v].len() > 1;
    let seeds: Vec<usize> = roots.iter().copied().filter(|&v| has_children(v)).collect();
    if seeds.len() > 1 || (family == TreeFamily::Spanning && roots.len() != 1) {
        return None;
    }
    let lone = multicast_energy(constants);
    let Some(&seed) = seeds.first() else {
        // Everybody downloads alone (or a childless seed, same cost).
        if family == TreeFamily::Spanning && k > 1 {
            return None;
        }
        return Some(lone * k as f64);
    };
    let floor = rates.lr_rate[seed];
    let mut energy = (roots.len() - 1) as f64 * lone;
    energy += (constants.p_rx_lr + constants.p_tx_sr) * constants.slot_duration;
    // Walk the seed's subtree away from the BS.
    let mut stack = vec![(seed, bs, 0usize)];
    while let Some((u, from, depth)) = stack.pop() {
        for &v in &adj[u] {
            if v == from {
                continue;
            }
            if depth + 1 > max_hops || rates.sr_rate[u][v] < floor {
                return None;
            }
            let power = if adj[v].len() > 1 {
                constants.p_rx_sr + constants.p_tx_sr
            } else {
                constants.p_rx_sr
            };
            energy += power * constants.slot_duration;
            stack.push((v, u, depth + 1));
        }
    }
    Some(energy)
}

/// Optimal scenario: exact up to `config.exhaustive_limit` MUs, heuristic beyond.
pub fn run_optimal(topology: &Topology, config: &SessionConfig) -> Result<ScenarioResult> {
    let rates = RateTable::compute(topology)?;
    let k = rates.mu_count();
    let power = &config.power;
    let (mode, lan) = if k <= config.exhaustive_limit {
        (
            OptimalMode::Exact,
            exact_optimum(&rates, power, config.max_hops)?,
        )
    } else {
        (
            OptimalMode::Heuristic,
            heuristic_optimum(&rates, power, config.max_hops)?,
        )
    };
    let Some(lan) = lan else {
        let mut result = multicast_result(&rates, power);
        result.scenario = ScenarioKind::Optimal;
        result.detail = ScenarioDetail::Optimal {
            mode,
            fallback: true,
            seed: None,
        };
        return Ok(result);
    };
    let throughput = (0..k)
        .map(|mu| d2d_rate(mu, &lan.graph, &rates))
        .collect::<Result<Vec<_>>>()?;
    let energy = (0..k)
        .map(|mu| power.role_power(lan.graph.role(mu)) * power.slot_duration)
        .collect();
    Ok(ScenarioResult::from_totals(
        ScenarioKind::Optimal,
        throughput,
        energy,
        power.slot_duration,
        ScenarioDetail::Optimal {
            mode,
            fallback: false,
            seed: Some(lan.graph.seed()),
        },
    ))
}
