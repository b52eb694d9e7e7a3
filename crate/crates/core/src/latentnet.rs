//! The hidden interfering network and its power policy `q = clamp(Z p)`.

use std::io::{Read, Write};
use std::ops::Deref;

use rand::Rng;

use crate::error::{Result, SimError};
use crate::netgen::NetworkInstance;
use crate::rates::{known_interference, InterferenceObservation};
use crate::rng::SimRng;

/// Transmit powers of the latent links, each in `[0, q_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPowerVector(Vec<f64>);

impl LatentPowerVector {
    pub fn new(values: Vec<f64>, q_max: f64) -> Result<Self> {
        if values
            .iter()
            .any(|q| !(q.is_finite() && (0.0..=q_max).contains(q)))
        {
            return Err(SimError::Domain(format!(
                "latent power outside [0, {q_max}]"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LatentPowerVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Linear response of the latent network to the known powers.
///
/// Row `i` of the mixing matrix drives latent link `i`. A policy may cover
/// fewer latent links than the network holds; the remaining ones stay silent.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPolicy {
    mixing: Vec<Vec<f64>>,
    known: usize,
    q_max: f64,
    noise_halfwidth: f64,
}

impl LatentPolicy {
    /// Mixing entries drawn uniformly from (-1, 1).
    pub fn random(
        active: usize,
        known: usize,
        q_max: f64,
        noise_halfwidth: f64,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let mixing = (0..active)
            .map(|_| (0..known).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Self::from_matrix(mixing, known, q_max, noise_halfwidth)
    }

    pub fn from_matrix(
        mixing: Vec<Vec<f64>>,
        known: usize,
        q_max: f64,
        noise_halfwidth: f64,
    ) -> Result<Self> {
        if !(q_max.is_finite() && q_max > 0.0) {
            return Err(SimError::InvalidConfig("q_max must be positive".into()));
        }
        if !(0.0..1.0).contains(&noise_halfwidth) {
            return Err(SimError::InvalidConfig(
                "jitter half-width must be in [0, 1)".into(),
            ));
        }
        if mixing
            .iter()
            .any(|r| r.len() != known || r.iter().any(|z| !z.is_finite()))
        {
            return Err(SimError::Data(
                "mixing rows must be finite with one entry per known link".into(),
            ));
        }
        Ok(Self {
            mixing,
            known,
            q_max,
            noise_halfwidth,
        })
    }

    /// A policy with no active latent links.
    pub fn silent(known: usize, q_max: f64) -> Self {
        Self {
            mixing: Vec::new(),
            known,
            q_max,
            noise_halfwidth: 0.0,
        }
    }

    pub fn active_links(&self) -> usize {
        self.mixing.len()
    }

    pub fn mixing(&self) -> &[Vec<f64>] {
        &self.mixing
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn noise_halfwidth(&self) -> f64 {
        self.noise_halfwidth
    }

    /// `q_i = clamp([Z p]_i (1 + xi_i), 0, q_max)` with `xi_i` uniform on
    /// `(-h, h)`. One draw per active link, even when `h = 0`.
    pub fn step(&self, p: &[f64], rng: &mut SimRng) -> LatentPowerVector {
        assert_eq!(p.len(), self.known, "power vector length");
        let q = self
            .mixing
            .iter()
            .map(|row| {
                let u: f64 = rng.random();
                let xi = self.noise_halfwidth * (2.0 * u - 1.0);
                let zp: f64 = row.iter().zip(p).map(|(z, p)| z * p).sum();
                (zp * (1.0 + xi)).clamp(0.0, self.q_max)
            })
            .collect();
        LatentPowerVector(q)
    }

    /// Mixing matrix as CSV, header `z0..z{K-1}`, one row per latent link.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.known).map(|k| format!("z{k}")))?;
        for row in &self.mixing {
            w.write_record(row.iter().map(|z| z.to_string()))?;
        }
        w.flush().map_err(|e| SimError::io("<mixing csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, q_max: f64, noise_halfwidth: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let known = r.headers()?.len();
        let mut mixing = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| SimError::Data(format!("bad mixing entry: {e}")))?;
            mixing.push(row);
        }
        Self::from_matrix(mixing, known, q_max, noise_halfwidth)
    }
}

/// Latent interference plus noise at receiver `k`.
pub fn hidden_interference(net: &NetworkInstance, q: &[f64], k: usize) -> f64 {
    let base = net.num_known();
    let latent: f64 = q
        .iter()
        .enumerate()
        .map(|(i, qi)| net.gain(base + i, k) * qi)
        .sum();
    latent + net.noise_power(k)
}

/// What the known receivers measure under powers `p` and latent powers `q`.
pub fn observe_interference(
    net: &NetworkInstance,
    p: &[f64],
    q: &[f64],
) -> InterferenceObservation {
    assert!(
        q.len() <= net.num_latent(),
        "more latent powers than latent links"
    );
    let (total, hidden) = net
        .known_links()
        .map(|k| {
            let eta = hidden_interference(net, q, k);
            (known_interference(net, p, k) + eta, eta)
        })
        .unzip();
    InterferenceObservation { total, hidden }
}

/// A latent policy together with its jitter stream and the most recent
/// latent powers. Cloning it yields an identical future realization, which is
/// how competing algorithms are fed the same latent driver.
#[derive(Debug, Clone)]
pub struct LatentEnvironment {
    policy: LatentPolicy,
    rng: SimRng,
    last: LatentPowerVector,
}

impl LatentEnvironment {
    pub fn new(policy: LatentPolicy, rng: SimRng) -> Self {
        let last = LatentPowerVector::zeros(policy.active_links());
        Self { policy, rng, last }
    }

    pub fn policy(&self) -> &LatentPolicy {
        &self.policy
    }

    /// Latent powers realized by the most recent observation.
    pub fn current(&self) -> &LatentPowerVector {
        &self.last
    }

    /// Steps the policy on `p`, then observes.
    pub fn observe(&mut self, net: &NetworkInstance, p: &[f64]) -> InterferenceObservation {
        self.last = self.policy.step(p, &mut self.rng);
        observe_interference(net, p, &self.last)
    }
}
