//! Random topologies and channel gains.
//!
//! Links `0..K` form the known network and `K..K+M` the latent one. The gain
//! matrix is stored row-major with `gain(j, k)` the power gain from the
//! transmitter of link `j` to the receiver of link `k`.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{NetworkConfig, PathLossConfig};
use crate::error::{Result, SimError};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub tx: Vec<Point>,
    pub rx: Vec<Point>,
    pub deployment_radius: f64,
    pub rx_radius: f64,
}

impl Geometry {
    pub fn len(&self) -> usize {
        self.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx.is_empty()
    }

    /// Writes `link,tx_x,tx_y,rx_x,rx_y`, one row per link.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["link", "tx_x", "tx_y", "rx_x", "rx_y"])?;
        for (i, (t, r)) in self.tx.iter().zip(&self.rx).enumerate() {
            w.write_record([
                i.to_string(),
                t.x.to_string(),
                t.y.to_string(),
                r.x.to_string(),
                r.y.to_string(),
            ])?;
        }
        w.flush().map_err(|e| SimError::io("<topology csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyParams {
    pub known_links: usize,
    pub latent_links: usize,
    pub deployment_radius: f64,
    pub rx_radius: f64,
}

impl TopologyParams {
    pub fn from_config(net: &NetworkConfig, known_links: usize, latent_links: usize) -> Self {
        Self {
            known_links,
            latent_links,
            deployment_radius: net.deployment_radius_m,
            rx_radius: net.rx_radius_m,
        }
    }
}

fn sample_disk(rng: &mut SimRng, center: Point, radius: f64) -> Point {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let r = radius * u.sqrt();
    let theta = 2.0 * PI * v;
    Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
}

/// Transmitters uniform in the deployment disk, each receiver uniform in a
/// disk around its transmitter. Known links come first.
pub fn generate_topology(params: &TopologyParams, seed: u64) -> Result<Geometry> {
    let n = params.known_links + params.latent_links;
    let valid = |r: f64| r.is_finite() && r >= 0.0;
    if !valid(params.deployment_radius) || !valid(params.rx_radius) {
        return Err(SimError::InvalidConfig(
            "radii must be finite and nonnegative".into(),
        ));
    }
    if n > 0 && (params.deployment_radius == 0.0 || params.rx_radius == 0.0) {
        return Err(SimError::InvalidConfig(
            "zero-radius disk with a nonzero link count".into(),
        ));
    }
    let mut rng = rng::stream(seed, rng::TOPOLOGY);
    let mut tx = Vec::with_capacity(n);
    let mut rx = Vec::with_capacity(n);
    for _ in 0..n {
        let t = sample_disk(&mut rng, Point::new(0.0, 0.0), params.deployment_radius);
        let r = sample_disk(&mut rng, t, params.rx_radius);
        tx.push(t);
        rx.push(r);
    }
    Ok(Geometry {
        tx,
        rx,
        deployment_radius: params.deployment_radius,
        rx_radius: params.rx_radius,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathLossParams {
    pub intercept_db: f64,
    pub slope1_exponent: f64,
    pub slope2_exponent: f64,
    pub breakpoint_distance: f64,
    pub shadow_sigma_db: f64,
    pub los_decay: f64,
    pub los_exponent: f64,
    pub los_shadow_sigma_db: f64,
    pub blockage_probability: f64,
    pub blockage_loss_db: f64,
}

/// Free-space loss at 1 m.
pub fn free_space_intercept_db(frequency_ghz: f64) -> f64 {
    32.4 + 20.0 * frequency_ghz.log10()
}

impl PathLossParams {
    pub fn from_config(cfg: &PathLossConfig, frequency_ghz: f64) -> Self {
        Self {
            intercept_db: cfg
                .intercept_db
                .unwrap_or_else(|| free_space_intercept_db(frequency_ghz)),
            slope1_exponent: cfg.slope1_exponent,
            slope2_exponent: cfg.slope2_exponent,
            breakpoint_distance: cfg.breakpoint_m,
            shadow_sigma_db: cfg.shadow_sigma_db,
            los_decay: cfg.los_decay_m,
            los_exponent: cfg.los_exponent,
            los_shadow_sigma_db: cfg.los_shadow_sigma_db,
            blockage_probability: cfg.blockage_probability,
            blockage_loss_db: cfg.blockage_loss_db,
        }
    }

    /// Same slopes with every random component switched off.
    pub fn deterministic(&self) -> Self {
        Self {
            shadow_sigma_db: 0.0,
            los_decay: 0.0,
            los_shadow_sigma_db: 0.0,
            blockage_probability: 0.0,
            ..self.clone()
        }
    }

    /// Mean NLOS loss without any random term.
    pub fn dual_slope_db(&self, distance: f64) -> f64 {
        let bp = self.breakpoint_distance;
        if distance <= bp {
            self.intercept_db + 10.0 * self.slope1_exponent * distance.log10()
        } else {
            self.intercept_db
                + 10.0 * self.slope1_exponent * bp.log10()
                + 10.0 * self.slope2_exponent * (distance / bp).log10()
        }
    }

    pub fn los_probability(&self, distance: f64) -> f64 {
        if self.los_decay > 0.0 {
            (-distance / self.los_decay).exp()
        } else {
            0.0
        }
    }
}

/// Path loss in dB at `distance` meters.
///
/// Always consumes three draws (LOS coin, blockage coin, shadowing normal) so
/// the stream position does not depend on which branch was taken.
pub fn path_loss_db(distance: f64, params: &PathLossParams, rng: &mut SimRng) -> Result<f64> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(SimError::Domain(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    let los_coin: f64 = rng.random();
    let block_coin: f64 = rng.random();
    let z: f64 = rng.sample(StandardNormal);

    let los = los_coin < params.los_probability(distance);
    let mut db = if los {
        params.intercept_db
            + 10.0 * params.los_exponent * distance.log10()
            + params.los_shadow_sigma_db * z
    } else {
        params.dual_slope_db(distance) + params.shadow_sigma_db * z
    };
    if block_coin < params.blockage_probability {
        db += params.blockage_loss_db;
    }
    Ok(db)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Square matrix of nonnegative power gains, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GainMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(SimError::Data("gain matrix must be square".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Gain from transmitter `j` to receiver `k`.
    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.n + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    known: usize,
    latent: usize,
    gain: GainMatrix,
    noise_power: Vec<f64>,
    max_power: Vec<f64>,
    weights: Vec<f64>,
}

impl NetworkInstance {
    /// Checks every structural invariant. `noise_power` covers all links,
    /// `max_power` and `weights` the known ones.
    pub fn new(
        known: usize,
        gain: GainMatrix,
        noise_power: Vec<f64>,
        max_power: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = gain.dim();
        if known > n {
            return Err(SimError::Data("more known links than gain rows".into()));
        }
        if noise_power.len() != n || max_power.len() != known || weights.len() != known {
            return Err(SimError::Data(
                "per-link vectors have the wrong length".into(),
            ));
        }
        if gain.data.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(SimError::Data(
                "gains must be finite and nonnegative".into(),
            ));
        }
        if (0..known).any(|k| gain.get(k, k) <= 0.0) {
            return Err(SimError::Data(
                "direct gains of known links must be positive".into(),
            ));
        }
        if noise_power.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(SimError::Data("noise power must be positive".into()));
        }
        if max_power.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(SimError::Data("max power must be positive".into()));
        }
        if weights.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(SimError::Data("weights must be nonnegative".into()));
        }
        Ok(Self {
            known,
            latent: n - known,
            gain,
            noise_power,
            max_power,
            weights,
        })
    }

    pub fn num_known(&self) -> usize {
        self.known
    }

    pub fn num_latent(&self) -> usize {
        self.latent
    }

    pub fn known_links(&self) -> Range<usize> {
        0..self.known
    }

    pub fn latent_links(&self) -> Range<usize> {
        self.known..self.known + self.latent
    }

    pub fn gain(&self, j: usize, k: usize) -> f64 {
        self.gain.get(j, k)
    }

    /// Channel amplitude `sqrt(gain)`.
    pub fn amplitude(&self, j: usize, k: usize) -> f64 {
        self.gain.get(j, k).sqrt()
    }

    pub fn gains(&self) -> &GainMatrix {
        &self.gain
    }

    pub fn noise_power(&self, k: usize) -> f64 {
        self.noise_power[k]
    }

    pub fn max_power(&self) -> &[f64] {
        &self.max_power
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Copy with different rate weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(
            self.known,
            self.gain.clone(),
            self.noise_power.clone(),
            self.max_power.clone(),
            weights,
        )
    }

    /// Writes the gain matrix as CSV with `g<k>` receiver columns; row `j` is
    /// the transmitter. Values use the shortest round-trip representation.
    pub fn write_gains_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.gain.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["tx".to_string()];
        header.extend((0..n).map(|k| format!("g{k}")));
        w.write_record(&header)?;
        for j in 0..n {
            let mut rec = vec![j.to_string()];
            rec.extend(self.gain.row(j).iter().map(|g| g.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| SimError::io("<gain csv>", e))?;
        Ok(())
    }
}

/// Power and noise settings applied uniformly to every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub max_power: f64,
    pub noise_power: f64,
    pub weight: f64,
    pub min_distance: f64,
}

impl LinkBudget {
    pub fn from_config(net: &NetworkConfig) -> Self {
        Self {
            max_power: net.max_power_w,
            noise_power: net.noise_power_w(),
            weight: net.weight,
            min_distance: net.min_distance_m,
        }
    }
}

/// Evaluates path loss for every transmitter/receiver pair, row by row.
/// Distances below `budget.min_distance` are clamped to it.
pub fn build_gains(
    geometry: &Geometry,
    known_links: usize,
    params: &PathLossParams,
    budget: &LinkBudget,
    seed: u64,
) -> Result<NetworkInstance> {
    let n = geometry.len();
    if known_links > n {
        return Err(SimError::InvalidConfig(
            "known link count exceeds geometry size".into(),
        ));
    }
    let mut rng = rng::stream(seed, rng::CHANNEL);
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        let mut row = Vec::with_capacity(n);
        for k in 0..n {
            let d = geometry.tx[j]
                .distance(&geometry.rx[k])
                .max(budget.min_distance);
            let pl = path_loss_db(d, params, &mut rng)?;
            row.push(db_to_linear(-pl));
        }
        rows.push(row);
    }
    NetworkInstance::new(
        known_links,
        GainMatrix::from_rows(&rows)?,
        vec![budget.noise_power; n],
        vec![budget.max_power; known_links],
        vec![budget.weight; known_links],
    )
}
