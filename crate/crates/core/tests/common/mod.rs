//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except to build inputs.
#![allow(dead_code, clippy::needless_range_loop)]

use mcrcd::channel::RateTable;
use mcrcd::energy::{EnergyReport, PowerConstants};
use mcrcd::formation::FormationGraph;
use mcrcd::lp::LpProblem;
use mcrcd::mechanism::{schedule, Schedule};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- CEV ----

/// Partial sum `sum_{t<N} p^t`, doubling `N` (`S_2N = S_N + p^N S_N`) until
/// the neglected tail, weighted by `scale`, drops below 1e-12.
pub fn geometric_partial_sum(p: f64, scale: f64) -> f64 {
    let (mut sum, mut pw) = (1.0, p);
    // The tail bound p^N / (1 - p) only decides when to stop.
    while pw * scale.abs() / (1.0 - p) > 1e-12 {
        sum += pw * sum;
        pw *= pw;
    }
    sum
}

/// Threshold belief from the grim-trigger indifference condition:
/// cooperating forever (`E'` per slot) versus defecting once (`A`) and then
/// paying multicast (`E`) forever. Solved by bisection on partial sums of
/// the per-slot cost difference.
pub fn cev_by_bisection(coop: f64, multicast: f64, defect: f64) -> f64 {
    // Slot 0 differs by (A - E'), every later slot by (E - E').
    let gain = |p: f64| {
        let later = multicast - coop;
        (defect - coop) + later * (geometric_partial_sum(p, later) - 1.0)
    };
    if gain(0.0) >= 0.0 {
        return 0.0;
    }
    let hi_p = 1.0 - 1e-14;
    if gain(hi_p) < 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, hi_p);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if gain(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

// -------------------------------------------------------- random graphs ----

/// Random LAN rooted at `seed`: MUs are visited in random order and join a
/// random member (the seed with probability `star_bias`) unless they stay
/// unconnected with probability `p_alone`. Depth never exceeds `max_hops`.
pub fn random_graph(
    rng: &mut ChaCha8Rng,
    k: usize,
    seed: usize,
    star_bias: f64,
    p_alone: f64,
    max_hops: usize,
) -> FormationGraph {
    let mut parents: Vec<Option<usize>> = vec![None; k];
    let mut depth: Vec<Option<usize>> = vec![None; k];
    depth[seed] = Some(0);
    let mut members = vec![seed];
    let mut others: Vec<usize> = (0..k).filter(|&m| m != seed).collect();
    others.shuffle(rng);
    for m in others {
        if rng.gen::<f64>() < p_alone {
            continue;
        }
        let eligible: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&j| depth[j].unwrap() < max_hops)
            .collect();
        let parent = if rng.gen::<f64>() < star_bias {
            seed
        } else {
            *eligible.choose(rng).unwrap()
        };
        parents[m] = Some(parent);
        depth[m] = Some(depth[parent].unwrap() + 1);
        members.push(m);
    }
    FormationGraph::from_parents(seed, &parents).unwrap()
}

pub fn random_graph_set(
    rng: &mut ChaCha8Rng,
    k: usize,
    star_bias: f64,
    p_alone: f64,
) -> Vec<FormationGraph> {
    (0..k)
        .map(|m| random_graph(rng, k, m, star_bias, p_alone, 4))
        .collect()
}

pub struct Instance {
    pub graphs: Vec<FormationGraph>,
    pub schedule: Schedule,
    pub report: EnergyReport,
}

/// Draws random graph sets until the scheduling LP is feasible.
pub fn feasible_instance(rng: &mut ChaCha8Rng, k: usize, c: &PowerConstants) -> Instance {
    loop {
        let star_bias = rng.gen_range(0.6..1.0);
        let p_alone = rng.gen_range(0.0..0.3);
        let graphs = random_graph_set(rng, k, star_bias, p_alone);
        let sched = schedule(&graphs, c).unwrap();
        if sched.feasible {
            let report = EnergyReport::compute(&graphs, &sched.rho, c).unwrap();
            return Instance {
                graphs,
                schedule: sched,
                report,
            };
        }
    }
}

// ---------------------------------------------------------- simplex grid ----

/// All points of the `k`-simplex whose coordinates are multiples of `1/steps`.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == k {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            rec(k, left - v, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    rec(k, steps, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|p| p.into_iter().map(|v| v as f64 / steps as f64).collect())
        .collect()
}

// ------------------------------------------------------------ LP oracle ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleLp {
    Infeasible,
    Unbounded,
    Optimal(f64),
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, r, &mut Vec::new(), &mut out);
    out
}

/// Vertices of `{x >= 0, eq rows = b, le rows <= b}`, found by solving every
/// `n`-subset of constraints as equalities and keeping feasible solutions.
fn vertices(n: usize, eq: &[(Vec<f64>, f64)], le: &[(Vec<f64>, f64)]) -> Vec<Vec<f64>> {
    // Candidate tight rows: all inequalities and the bounds x_i >= 0.
    let mut candidates: Vec<(Vec<f64>, f64)> = le.to_vec();
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        candidates.push((row, 0.0));
    }
    // Equalities join the pool too: every vertex has `n` independent tight
    // rows, and equalities are always tight.
    let mut out = Vec::new();
    let all: Vec<(Vec<f64>, f64)> = eq.iter().cloned().chain(candidates).collect();
    for subset in combinations(all.len(), n) {
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| all[i].0.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| all[i].1).collect();
        let Some(x) = solve_square(a, b) else {
            continue;
        };
        let tol = |rhs: f64| 1e-7 * (1.0 + rhs.abs());
        let ok_bounds = x.iter().all(|&v| v >= -1e-7);
        let ok_eq = eq.iter().all(|(a, b)| (dot(a, &x) - b).abs() <= tol(*b));
        let ok_le = le.iter().all(|(a, b)| dot(a, &x) <= b + tol(*b));
        if ok_bounds && ok_eq && ok_le {
            out.push(x);
        }
    }
    out
}

pub fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, x)| a * x).sum()
}

/// Brute-force LP solution by vertex enumeration. The feasible set lies in
/// the nonnegative orthant, so it has a vertex whenever it is nonempty.
/// Unboundedness is decided on the recession cone normalized by
/// `sum(d) = 1`, which is a polytope and can be enumerated the same way.
pub fn lp_oracle(p: &LpProblem) -> OracleLp {
    let n = p.objective.len();
    let verts = vertices(n, &p.eq_constraints, &p.ineq_constraints);
    if verts.is_empty() {
        return OracleLp::Infeasible;
    }
    let mut cone_eq: Vec<(Vec<f64>, f64)> = p
        .eq_constraints
        .iter()
        .map(|(a, _)| (a.clone(), 0.0))
        .collect();
    cone_eq.push((vec![1.0; n], 1.0));
    let cone_le: Vec<(Vec<f64>, f64)> = p
        .ineq_constraints
        .iter()
        .map(|(a, _)| (a.clone(), 0.0))
        .collect();
    let rays = vertices(n, &cone_eq, &cone_le);
    if rays.iter().any(|d| dot(&p.objective, d) < -1e-9) {
        return OracleLp::Unbounded;
    }
    let best = verts
        .iter()
        .map(|x| dot(&p.objective, x))
        .fold(f64::INFINITY, f64::min);
    OracleLp::Optimal(best)
}

// ------------------------------------------------- formation replay ----

/// Reception rate recomputed from scratch on a parent list: the seed gets
/// its LR rate, every other member the minimum of its parent's reception
/// rate and the parent's links to all of its children.
pub fn oracle_reception(
    mu: usize,
    seed: usize,
    parents: &[Option<usize>],
    rates: &RateTable,
) -> f64 {
    if mu == seed {
        return rates.lr_rate[seed];
    }
    let parent = parents[mu].expect("connected");
    let upstream = oracle_reception(parent, seed, parents, rates);
    (0..parents.len())
        .filter(|&c| parents[c] == Some(parent))
        .map(|c| rates.sr_rate[parent][c])
        .fold(upstream, f64::min)
}

/// Replays the proposal procedure against `graph` and reports the first
/// discrepancy: each proposer, in order, must have joined the first member
/// in its preference row that was eligible (depth below `max_hops`) and
/// whose link met that member's reception rate at the time, or stayed
/// unconnected if no member qualified.
pub fn replay_formation(
    rates: &RateTable,
    seed: usize,
    order: &[usize],
    prefs: &[Vec<usize>],
    max_hops: usize,
    graph: &FormationGraph,
) -> Result<(), String> {
    let k = rates.lr_rate.len();
    let mut parents: Vec<Option<usize>> = vec![None; k];
    let mut depth: Vec<Option<usize>> = vec![None; k];
    depth[seed] = Some(0);
    for &p in order {
        let mut chosen = None;
        for &cand in &prefs[p] {
            let Some(d) = depth[cand] else { continue };
            if d >= max_hops {
                continue;
            }
            let needed = oracle_reception(cand, seed, &parents, rates);
            if rates.sr_rate[cand][p] >= needed {
                chosen = Some(cand);
                break;
            }
        }
        if graph.parent(p) != chosen {
            return Err(format!(
                "seed {seed}: proposer {p} expected parent {chosen:?}, graph has {:?}",
                graph.parent(p)
            ));
        }
        if let Some(c) = chosen {
            parents[p] = Some(c);
            depth[p] = Some(depth[c].unwrap() + 1);
        }
    }
    for m in 0..k {
        if graph.depth(m) != depth[m] {
            return Err(format!("seed {seed}: depth of {m} differs"));
        }
    }
    Ok(())
}

/// Preference rows sorted by descending SR rate with index tie-break.
pub fn oracle_preferences(rates: &RateTable) -> Vec<Vec<usize>> {
    let k = rates.lr_rate.len();
    (0..k)
        .map(|i| {
            let mut row: Vec<usize> = (0..k).filter(|&j| j != i).collect();
            row.sort_by(|&a, &b| {
                rates.sr_rate[i][b]
                    .partial_cmp(&rates.sr_rate[i][a])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            row
        })
        .collect()
}

/// Checks the rooted-tree structure directly from the parent list.
pub fn check_tree(graph: &FormationGraph, max_hops: usize) -> Result<(), String> {
    let k = graph.mu_count();
    let seed = graph.seed();
    if graph.parent(seed).is_some() {
        return Err("seed has a parent".into());
    }
    for m in 0..k {
        if m == seed || graph.parent(m).is_none() {
            if m != seed && (!graph.children(m).is_empty() || graph.depth(m).is_some()) {
                return Err(format!("unconnected MU {m} has children or a depth"));
            }
            continue;
        }
        // Walk to the root; more than K steps means a cycle.
        let mut cur = m;
        let mut steps = 0;
        while cur != seed {
            cur = graph
                .parent(cur)
                .ok_or(format!("MU {m} does not reach the seed"))?;
            steps += 1;
            if steps > k {
                return Err(format!("cycle through MU {m}"));
            }
        }
        if steps > max_hops {
            return Err(format!("MU {m} is {steps} hops deep"));
        }
        if graph.depth(m) != Some(steps) {
            return Err(format!("MU {m} depth mismatch"));
        }
        let p = graph.parent(m).unwrap();
        if !graph.children(p).contains(&m) {
            return Err(format!("MU {m} missing from its parent's child list"));
        }
    }
    Ok(())
}

// ------------------------------------------------------- random rates ----

/// Random rate table with symmetric SR rates, biased so SR links are often
/// strong enough for LANs to form.
pub fn random_rates(rng: &mut ChaCha8Rng, k: usize) -> RateTable {
    let lr: Vec<f64> = (0..k).map(|_| rng.gen_range(2e7..6e7)).collect();
    let mut sr = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = rng.gen_range(1e7..8e7);
            sr[i][j] = v;
            sr[j][i] = v;
        }
    }
    let multicast_rate = lr.iter().copied().fold(f64::INFINITY, f64::min);
    RateTable {
        lr_rate: lr,
        multicast_rate,
        sr_rate: sr,
    }
}

/// Random order over the non-seed MUs.
pub fn random_order(rng: &mut ChaCha8Rng, k: usize, seed: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..k).filter(|&m| m != seed).collect();
    v.shuffle(rng);
    v
}
