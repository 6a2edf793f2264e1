//! Channel gains and bit rates.
//!
//! Gains are flat across subcarriers, so every per-subcarrier Shannon sum
//! collapses to `subcarrier_count * B_z * log2(1 + sinr)`. Both the
//! long-range (LR, BS to MU) and short-range (SR, MU to MU) links use the
//! full band; coexistence is captured by an interference floor proportional
//! to the received power.

use crate::error::{invalid, Result};
use crate::formation::FormationGraph;

/// Distances below this are clamped before evaluating path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    /// Total system bandwidth `B` in Hz.
    pub bandwidth_total: f64,
    /// Number of resource blocks `X`.
    pub rb_count: usize,
    /// Subcarriers per resource block `alpha`.
    pub subcarriers_per_rb: usize,
    /// BS transmit power in W, split equally over all subcarriers.
    pub bs_power_total: f64,
    /// Per-MU short-range transmit budget in W, split equally over all subcarriers.
    pub sr_power_max: f64,
    /// Thermal noise per subcarrier in W.
    pub noise_power: f64,
    /// Maximum acceptable symbol error probability, in (0, 0.2).
    pub target_error_prob: f64,
    /// Interference as a fraction of the received signal power.
    pub interference_fraction: f64,
    pub pathloss_ref_db: f64,
    pub pathloss_exp_lr: f64,
    pub pathloss_exp_sr: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_total: 5e6,
            rb_count: 25,
            subcarriers_per_rb: 12,
            bs_power_total: 5.0,
            sr_power_max: 0.125,
            // 1e-13 mW
            noise_power: 1e-16,
            target_error_prob: 1e-3,
            interference_fraction: 1e-4,
            pathloss_ref_db: 37.0,
            pathloss_exp_lr: 3.5,
            pathloss_exp_sr: 3.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.bandwidth_total,
            self.bs_power_total,
            self.sr_power_max,
            self.noise_power,
            self.target_error_prob,
            self.interference_fraction,
            self.pathloss_ref_db,
            self.pathloss_exp_lr,
            self.pathloss_exp_sr,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return invalid("radio parameters must be finite");
        }
        if self.bandwidth_total <= 0.0 || self.rb_count == 0 || self.subcarriers_per_rb == 0 {
            return invalid("subcarrier bandwidth must be strictly positive");
        }
        if !(self.target_error_prob > 0.0 && self.target_error_prob < 0.2) {
            return invalid(format!(
                "target error probability {} outside (0, 0.2)",
                self.target_error_prob
            ));
        }
        if self.noise_power <= 0.0 {
            return invalid("noise power must be positive");
        }
        if self.interference_fraction < 0.0 {
            return invalid("interference fraction must be nonnegative");
        }
        if self.bs_power_total < 0.0 || self.sr_power_max < 0.0 {
            return invalid("transmit powers must be nonnegative");
        }
        Ok(())
    }

    /// Total subcarriers `alpha * X`.
    pub fn subcarrier_count(&self) -> usize {
        self.rb_count * self.subcarriers_per_rb
    }

    /// `B_z = B / (alpha * X)`.
    pub fn subcarrier_bandwidth(&self) -> f64 {
        self.bandwidth_total / self.subcarrier_count() as f64
    }

    /// M-QAM SNR gap `beta = 1.5 / -ln(5 P_e)`.
    ///
    /// Written with the minus sign so the gap is positive for every
    /// admissible `P_e < 0.2`.
    pub fn snr_gap(&self) -> f64 {
        1.5 / -(5.0 * self.target_error_prob).ln()
    }

    pub fn bs_power_per_subcarrier(&self) -> f64 {
        self.bs_power_total / self.subcarrier_count() as f64
    }

    pub fn sr_power_per_subcarrier(&self) -> f64 {
        self.sr_power_max / self.subcarrier_count() as f64
    }

    /// Full-band rate for a flat per-subcarrier SINR.
    fn band_rate(&self, sinr: f64) -> f64 {
        self.subcarrier_count() as f64 * self.subcarrier_bandwidth() * (1.0 + sinr).log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Log-distance path loss as a linear power gain.
pub fn pathloss_gain(distance: f64, ref_db: f64, exponent: f64) -> Result<f64> {
    if !distance.is_finite() || !ref_db.is_finite() || !exponent.is_finite() {
        return invalid(format!("non-finite path loss input (distance {distance})"));
    }
    let d = distance.max(MIN_DISTANCE_M);
    let loss_db = ref_db + 10.0 * exponent * d.log10();
    Ok(10f64.powf(-loss_db / 10.0))
}

/// One scenario instance: geometry, per-link gains and radio constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub bs_position: Point,
    pub mu_positions: Vec<Point>,
    /// MU to BS gain `h_k`, flat across subcarriers.
    pub gain_lr: Vec<f64>,
    /// Symmetric MU to MU gain matrix with zero diagonal.
    pub gain_sr: Vec<Vec<f64>>,
    pub radio: RadioConfig,
}

impl Topology {
    /// Builds gains from positions with the configured path loss law.
    pub fn from_positions(bs: Point, mus: Vec<Point>, radio: RadioConfig) -> Result<Self> {
        radio.validate()?;
        if mus.is_empty() {
            return invalid("topology needs at least one MU");
        }
        let gain_lr = mus
            .iter()
            .map(|p| {
                pathloss_gain(
                    p.distance(&bs),
                    radio.pathloss_ref_db,
                    radio.pathloss_exp_lr,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let k = mus.len();
        let mut gain_sr = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                let g = pathloss_gain(
                    mus[i].distance(&mus[j]),
                    radio.pathloss_ref_db,
                    radio.pathloss_exp_sr,
                )?;
                gain_sr[i][j] = g;
                gain_sr[j][i] = g;
            }
        }
        Ok(Self {
            bs_position: bs,
            mu_positions: mus,
            gain_lr,
            gain_sr,
            radio,
        })
    }

    /// Builds a topology directly from gains. Positions are left at the origin.
    pub fn from_gains(
        gain_lr: Vec<f64>,
        gain_sr: Vec<Vec<f64>>,
        radio: RadioConfig,
    ) -> Result<Self> {
        radio.validate()?;
        let k = gain_lr.len();
        if k == 0 {
            return invalid("topology needs at least one MU");
        }
        if gain_sr.len() != k || gain_sr.iter().any(|row| row.len() != k) {
            return invalid("SR gain matrix must be K x K");
        }
        let in_range = |g: f64| g.is_finite() && (0.0..=1.0).contains(&g);
        if !gain_lr.iter().all(|&g| in_range(g)) {
            return invalid("LR gains must lie in [0, 1]");
        }
        for i in 0..k {
            if gain_sr[i][i] != 0.0 {
                return invalid("SR gain matrix must have a zero diagonal");
            }
            for j in 0..k {
                if !in_range(gain_sr[i][j]) {
                    return invalid("SR gains must lie in [0, 1]");
                }
                if gain_sr[i][j] != gain_sr[j][i] {
                    return invalid("SR gain matrix must be symmetric");
                }
            }
        }
        Ok(Self {
            bs_position: Point::default(),
            mu_positions: vec![Point::default(); k],
            gain_lr,
            gain_sr,
            radio,
        })
    }

    pub fn mu_count(&self) -> usize {
        self.gain_lr.len()
    }

    fn check_mu(&self, mu: usize) -> Result<()> {
        if mu >= self.mu_count() {
            return invalid(format!("MU {mu} out of range (K = {})", self.mu_count()));
        }
        Ok(())
    }
}

/// LR rate `R_k` when the whole band is assigned to MU `mu`.
pub fn lr_rate(mu: usize, topology: &Topology) -> Result<f64> {
    topology.check_mu(mu)?;
    let radio = &topology.radio;
    let received = radio.bs_power_per_subcarrier() * topology.gain_lr[mu];
    let sinr =
        radio.snr_gap() * received / (radio.noise_power + radio.interference_fraction * received);
    Ok(radio.band_rate(sinr))
}

/// Conventional multicast rate `R`, limited by the worst LR link.
pub fn multicast_rate(topology: &Topology) -> Result<f64> {
    (0..topology.mu_count())
        .map(|k| lr_rate(k, topology))
        .try_fold(f64::INFINITY, |acc, r| r.map(|r| acc.min(r)))
        .and_then(|r| {
            if r.is_finite() {
                Ok(r)
            } else {
                invalid("empty topology")
            }
        })
}

/// SR rate from `tx` to `rx` over the full band.
pub fn sr_rate(tx: usize, rx: usize, topology: &Topology) -> Result<f64> {
    topology.check_mu(tx)?;
    topology.check_mu(rx)?;
    if tx == rx {
        return invalid(format!("SR rate needs distinct MUs (got {tx} twice)"));
    }
    let radio = &topology.radio;
    let received = radio.sr_power_per_subcarrier() * topology.gain_sr[tx][rx];
    let sinr = received / (radio.interference_fraction * received + radio.noise_power);
    Ok(radio.band_rate(sinr))
}

/// All rates of one topology, computed once and shared by every consumer.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub lr_rate: Vec<f64>,
    pub multicast_rate: f64,
    /// `sr_rate[tx][rx]`, zero on the diagonal.
    pub sr_rate: Vec<Vec<f64>>,
}

impl RateTable {
    pub fn compute(topology: &Topology) -> Result<Self> {
        let k = topology.mu_count();
        let lr = (0..k)
            .map(|m| lr_rate(m, topology))
            .collect::<Result<Vec<_>>>()?;
        let mut sr = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    sr[i][j] = sr_rate(i, j, topology)?;
                }
            }
        }
        Ok(Self {
            multicast_rate: multicast_rate(topology)?,
            lr_rate: lr,
            sr_rate: sr,
        })
    }

    pub fn mu_count(&self) -> usize {
        self.lr_rate.len()
    }
}

/// Rate at which `mu` receives the content in `graph`.
///
/// The seed receives at its own LR rate. Every other node receives at its
/// parent's multicast rate, which is the parent's own reception rate capped
/// by the weakest SR link to any of the parent's children.
pub fn reception_rate(mu: usize, graph: &FormationGraph, rates: &RateTable) -> Result<f64> {
    if mu >= graph.mu_count() || !graph.is_connected(mu) {
        return invalid(format!("MU {mu} is not part of the graph"));
    }
    if graph.mu_count() != rates.mu_count() {
        return invalid("graph and rate table disagree on K");
    }
    // Walk up to the seed, then propagate the minimum back down.
    let mut path = vec![mu];
    let mut node = mu;
    while let Some(p) = graph.parent(node) {
        path.push(p);
        node = p;
    }
    let mut rate = rates.lr_rate[graph.seed()];
    for &tx in path.iter().skip(1).rev() {
        rate = graph
            .children(tx)
            .iter()
            .fold(rate, |acc, &c| acc.min(rates.sr_rate[tx][c]));
    }
    Ok(rate)
}
