//! D2D LAN formation.
//!
//! One deterministic procedure serves both as the base station's estimate of
//! the LAN the MUs will build and as the MUs' own self-organizing formation.
//! Starting from the seed, non-seed MUs propose in the announced order. Each
//! proposer walks its preference row (best SR link first) over the members
//! that are already in the LAN and still below the hop limit. A member
//! accepts when the SR link to the proposer is at least as fast as the rate
//! the member itself receives, so the content can be forwarded in real time.
//! A proposer nobody accepts stays unconnected for the rest of the slot.

use std::fmt;

use crate::channel::{reception_rate, RateTable};
use crate::error::{invalid, Result};

/// Role of an MU in one formation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Seed { has_children: bool },
    Relay,
    Sink,
    Unconnected,
}

/// Rooted tree over MU indices. MUs that never joined have no parent and no depth.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FormationGraph {
    seed: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<Option<usize>>,
    join_order: Vec<usize>,
}

impl FormationGraph {
    /// A graph holding only the seed.
    pub fn new(mu_count: usize, seed: usize) -> Result<Self> {
        if seed >= mu_count {
            return invalid(format!("seed {seed} out of range (K = {mu_count})"));
        }
        let mut depth = vec![None; mu_count];
        depth[seed] = Some(0);
        Ok(Self {
            seed,
            parent: vec![None; mu_count],
            children: vec![Vec::new(); mu_count],
            depth,
            join_order: vec![seed],
        })
    }

    /// Rebuilds a graph from a parent list. `parents[seed]` must be `None`;
    /// other `None` entries are unconnected MUs. Children are attached in
    /// ascending index order within each parent.
    pub fn from_parents(seed: usize, parents: &[Option<usize>]) -> Result<Self> {
        let k = parents.len();
        let mut graph = Self::new(k, seed)?;
        if parents[seed].is_some() {
            return invalid("the seed cannot have a parent");
        }
        let mut pending: Vec<usize> = (0..k).filter(|&m| parents[m].is_some()).collect();
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for m in pending {
                let p = parents[m].expect("filtered");
                if p < k && graph.is_connected(p) {
                    graph.attach(m, p)?;
                } else {
                    rest.push(m);
                }
            }
            if rest.len() == before {
                return invalid("parent list contains a cycle or a dangling parent");
            }
            pending = rest;
        }
        Ok(graph)
    }

    /// Adds `child` below the already connected `parent`.
    pub fn attach(&mut self, child: usize, parent: usize) -> Result<()> {
        let k = self.mu_count();
        if child >= k || parent >= k {
            return invalid(format!("attach {child} -> {parent} out of range (K = {k})"));
        }
        if self.is_connected(child) {
            return invalid(format!("MU {child} is already connected"));
        }
        let Some(parent_depth) = self.depth[parent] else {
            return invalid(format!("parent {parent} is not connected"));
        };
        self.parent[child] = Some(parent);
        self.children[parent].push(child);
        self.depth[child] = Some(parent_depth + 1);
        self.join_order.push(child);
        Ok(())
    }

    pub fn seed(&self) -> usize {
        self.seed
    }

    pub fn mu_count(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, mu: usize) -> Option<usize> {
        self.parent[mu]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, mu: usize) -> &[usize] {
        &self.children[mu]
    }

    pub fn depth(&self, mu: usize) -> Option<usize> {
        self.depth[mu]
    }

    pub fn is_connected(&self, mu: usize) -> bool {
        self.depth[mu].is_some()
    }

    pub fn connected(&self) -> Vec<bool> {
        self.depth.iter().map(Option::is_some).collect()
    }

    /// Connected MUs in the order they joined, seed first.
    pub fn join_order(&self) -> &[usize] {
        &self.join_order
    }

    pub fn member_count(&self) -> usize {
        self.join_order.len()
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn role(&self, mu: usize) -> Role {
        if mu == self.seed {
            Role::Seed {
                has_children: !self.children[mu].is_empty(),
            }
        } else if !self.is_connected(mu) {
            Role::Unconnected
        } else if self.children[mu].is_empty() {
            Role::Sink
        } else {
            Role::Relay
        }
    }

    /// Checks the rooted-tree invariants and, when given, the hop limit.
    pub fn validate(&self, max_hops: Option<usize>) -> Result<()> {
        let k = self.mu_count();
        if self.parent[self.seed].is_some() || self.depth[self.seed] != Some(0) {
            return invalid("seed must be the parentless root at depth 0");
        }
        for m in 0..k {
            match (self.parent[m], self.depth[m]) {
                (None, None) => {
                    if !self.children[m].is_empty() {
                        return invalid(format!("unconnected MU {m} has children"));
                    }
                }
                (None, Some(_)) if m == self.seed => {}
                (Some(p), Some(d)) => {
                    if d == 0 || self.depth[p] != Some(d - 1) {
                        return invalid(format!("depth of MU {m} inconsistent with parent {p}"));
                    }
                    if !self.children[p].contains(&m) {
                        return invalid(format!("MU {m} missing from children of {p}"));
                    }
                }
                _ => return invalid(format!("MU {m} has inconsistent parent and depth")),
            }
            for &c in &self.children[m] {
                if self.parent[c] != Some(m) {
                    return invalid(format!("child {c} of {m} points elsewhere"));
                }
            }
            if let (Some(h), Some(d)) = (max_hops, self.depth[m]) {
                if d > h {
                    return invalid(format!("MU {m} at depth {d} exceeds {h} hops"));
                }
            }
        }
        // Depth strictly decreasing toward the root rules out cycles; also
        // check every connected node actually reaches the seed.
        for m in 0..k {
            let mut node = m;
            let mut steps = 0;
            while let Some(p) = self.parent[node] {
                node = p;
                steps += 1;
                if steps > k {
                    return invalid("cycle in parent list");
                }
            }
            if self.is_connected(m) && node != self.seed {
                return invalid(format!("MU {m} does not reach the seed"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for FormationGraph {
    /// Parent list, `-` for the seed and unconnected MUs.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .parent
            .iter()
            .map(|p| p.map_or_else(|| "-".to_string(), |p| p.to_string()))
            .collect();
        write!(f, "seed={} parents=[{}]", self.seed, parts.join(","))
    }
}

/// The order in which non-seed MUs propose.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProposalOrder(Vec<usize>);

impl ProposalOrder {
    /// Validates that `order` is a permutation of every MU except `seed`.
    pub fn new(order: Vec<usize>, seed: usize, mu_count: usize) -> Result<Self> {
        if seed >= mu_count {
            return invalid(format!("seed {seed} out of range (K = {mu_count})"));
        }
        if order.len() + 1 != mu_count {
            return invalid(format!(
                "proposal order has {} entries, expected {}",
                order.len(),
                mu_count - 1
            ));
        }
        let mut seen = vec![false; mu_count];
        seen[seed] = true;
        for &m in &order {
            if m >= mu_count || seen[m] {
                return invalid(format!(
                    "proposal order is not a permutation of non-seed MUs ({m})"
                ));
            }
            seen[m] = true;
        }
        Ok(Self(order))
    }

    /// Non-seed MUs in ascending index order.
    pub fn ascending(seed: usize, mu_count: usize) -> Self {
        Self((0..mu_count).filter(|&m| m != seed).collect())
    }

    /// Cyclic left rotation by one position.
    pub fn rotate(&self) -> Self {
        let mut next = self.0.clone();
        if !next.is_empty() {
            next.rotate_left(1);
        }
        Self(next)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-MU ranking of peers by descending SR rate, ties by ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceMatrix {
    rows: Vec<Vec<usize>>,
}

impl PreferenceMatrix {
    pub fn row(&self, mu: usize) -> &[usize] {
        &self.rows[mu]
    }

    pub fn mu_count(&self) -> usize {
        self.rows.len()
    }
}

pub fn build_preferences(rates: &RateTable) -> PreferenceMatrix {
    let k = rates.mu_count();
    let rows = (0..k)
        .map(|i| {
            let mut peers: Vec<usize> = (0..k).filter(|&j| j != i).collect();
            // Stable sort keeps ascending index among equal rates.
            peers.sort_by(|&a, &b| rates.sr_rate[i][b].total_cmp(&rates.sr_rate[i][a]));
            peers
        })
        .collect();
    PreferenceMatrix { rows }
}

/// Whether member `acceptor` of `graph` takes `proposer` as a child.
pub fn accepts(
    graph: &FormationGraph,
    acceptor: usize,
    proposer: usize,
    rates: &RateTable,
) -> Result<bool> {
    let needed = reception_rate(acceptor, graph, rates)?;
    Ok(rates.sr_rate[acceptor][proposer] >= needed)
}

/// Builds the LAN for `seed` by replaying proposals in `order`.
pub fn estimate_graph(
    rates: &RateTable,
    seed: usize,
    order: &ProposalOrder,
    prefs: &PreferenceMatrix,
    max_hops: usize,
) -> Result<FormationGraph> {
    let k = rates.mu_count();
    if prefs.mu_count() != k {
        return invalid("preference matrix and rate table disagree on K");
    }
    // Re-validate: the order may have been built for another seed.
    ProposalOrder::new(order.0.clone(), seed, k)?;

    let mut graph = FormationGraph::new(k, seed)?;
    for &proposer in order.as_slice() {
        for &candidate in prefs.row(proposer) {
            let eligible = graph.depth(candidate).is_some_and(|d| d < max_hops);
            if eligible && accepts(&graph, candidate, proposer, rates)? {
                graph.attach(proposer, candidate)?;
                break;
            }
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(lr: Vec<f64>, sr: Vec<Vec<f64>>) -> RateTable {
        let multicast_rate = lr.iter().copied().fold(f64::INFINITY, f64::min);
        RateTable {
            lr_rate: lr,
            multicast_rate,
            sr_rate: sr,
        }
    }

    #[test]
    fn preferences_sort_descending_with_index_ties() {
        let rates = table(
            vec![1.0; 4],
            vec![
                vec![0.0, 5.0, 9.0, 1.0],
                vec![5.0, 0.0, 2.0, 2.0],
                vec![9.0, 2.0, 0.0, 3.0],
                vec![1.0, 2.0, 3.0, 0.0],
            ],
        );
        let prefs = build_preferences(&rates);
        assert_eq!(prefs.row(0), &[2, 1, 3]);
        assert_eq!(prefs.row(1), &[0, 2, 3]);

        let flat = table(
            vec![1.0; 3],
            vec![
                vec![0.0, 4.0, 4.0],
                vec![4.0, 0.0, 4.0],
                vec![4.0, 4.0, 0.0],
            ],
        );
        let prefs = build_preferences(&flat);
        assert_eq!(prefs.row(1), &[0, 2]);

        let two = table(vec![1.0; 2], vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(build_preferences(&two).row(0), &[1]);
    }

    #[test]
    fn two_mu_accept_and_reject() {
        let rates = table(vec![10.0, 10.0], vec![vec![0.0, 10.0], vec![10.0, 0.0]]);
        let prefs = build_preferences(&rates);
        let g = estimate_graph(&rates, 0, &ProposalOrder::ascending(0, 2), &prefs, 4).unwrap();
        assert_eq!(g.parent(1), Some(0));
        assert_eq!(g.role(0), Role::Seed { has_children: true });
        assert_eq!(g.role(1), Role::Sink);

        let weak = table(vec![10.0, 10.0], vec![vec![0.0, 9.9], vec![9.9, 0.0]]);
        let g = estimate_graph(
            &weak,
            0,
            &ProposalOrder::ascending(0, 2),
            &build_preferences(&weak),
            4,
        )
        .unwrap();
        assert!(!g.is_connected(1));
        assert_eq!(g.role(1), Role::Unconnected);
        assert_eq!(
            g.role(0),
            Role::Seed {
                has_children: false
            }
        );
    }

    #[test]
    fn hop_limit_blocks_deep_members() {
        // A line where each MU only hears its neighbours well.
        let k = 4;
        let mut sr = vec![vec![0.5; k]; k];
        for i in 0..k {
            sr[i][i] = 0.0;
            if i + 1 < k {
                sr[i][i + 1] = 10.0;
                sr[i + 1][i] = 10.0;
            }
        }
        let rates = table(vec![1.0; k], sr);
        let prefs = build_preferences(&rates);
        let order = ProposalOrder::ascending(0, k);
        let deep = estimate_graph(&rates, 0, &order, &prefs, 3).unwrap();
        assert_eq!(deep.parents(), &[None, Some(0), Some(1), Some(2)]);
        let capped = estimate_graph(&rates, 0, &order, &prefs, 1).unwrap();
        // Only the seed is eligible and its weak links fail the rate test.
        assert_eq!(capped.parents(), &[None, Some(0), None, None]);
        capped.validate(Some(1)).unwrap();
    }

    #[test]
    fn rejects_bad_orders() {
        let rates = table(
            vec![1.0; 3],
            vec![
                vec![0.0, 1.0, 1.0],
                vec![1.0, 0.0, 1.0],
                vec![1.0, 1.0, 0.0],
            ],
        );
        let prefs = build_preferences(&rates);
        let order_for_1 = ProposalOrder::ascending(1, 3);
        assert!(estimate_graph(&rates, 0, &order_for_1, &prefs, 4).is_err());
        assert!(ProposalOrder::new(vec![1, 1], 0, 3).is_err());
        assert!(ProposalOrder::new(vec![1], 0, 3).is_err());
        assert!(ProposalOrder::new(vec![0, 2], 0, 3).is_err());
    }

    #[test]
    fn rotation_cycles() {
        let order = ProposalOrder::new(vec![1, 2, 3], 0, 4).unwrap();
        assert_eq!(order.rotate().as_slice(), &[2, 3, 1]);
        let mut o = order.clone();
        for _ in 0..order.len() {
            o = o.rotate();
        }
        assert_eq!(o, order);
        let single = ProposalOrder::ascending(0, 2);
        assert_eq!(single.rotate(), single);
    }

    #[test]
    fn from_parents_roundtrip_and_cycle() {
        let g = FormationGraph::from_parents(2, &[Some(2), Some(0), None, None]).unwrap();
        assert_eq!(g.depth(1), Some(2));
        assert_eq!(g.role(0), Role::Relay);
        assert_eq!(g.role(3), Role::Unconnected);
        g.validate(Some(2)).unwrap();
        assert!(g.validate(Some(1)).is_err());
        assert!(FormationGraph::from_parents(0, &[None, Some(2), Some(1)]).is_err());
    }
}
