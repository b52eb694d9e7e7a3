//! Rates, the weighted sum-rate objective and the weighted-MSE
//! reformulation. All rates are in nats per channel use.

use std::ops::Deref;

use crate::error::{Result, SimError};
use crate::netgen::NetworkInstance;
use crate::wmmse::WmmseState;

/// Transmit powers of the known links, each within `[0, p_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(values: Vec<f64>, max_power: &[f64]) -> Result<Self> {
        if values.len() != max_power.len() {
            return Err(SimError::Domain("power vector has the wrong length".into()));
        }
        for (p, cap) in values.iter().zip(max_power) {
            if !(p.is_finite() && *p >= 0.0 && *p <= *cap) {
                return Err(SimError::Domain(format!("power {p} outside [0, {cap}]")));
            }
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PowerVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-receiver measurement: `total` is the full interference-plus-noise
/// denominator (own signal included), `hidden` the part caused by the latent
/// network plus noise.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceObservation {
    pub total: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// `sum_j gain[j][k] p_j` over known transmitters, own link included.
pub fn known_interference(net: &NetworkInstance, p: &[f64], k: usize) -> f64 {
    p.iter()
        .enumerate()
        .map(|(j, pj)| net.gain(j, k) * pj)
        .sum()
}

pub fn link_rate(net: &NetworkInstance, p: &[f64], q: &[f64], k: usize) -> f64 {
    let signal = net.gain(k, k) * p[k];
    let base = net.num_known();
    let mut denom = net.noise_power(k);
    for (j, pj) in p.iter().enumerate() {
        if j != k {
            denom += net.gain(j, k) * pj;
        }
    }
    for (i, qi) in q.iter().enumerate() {
        denom += net.gain(base + i, k) * qi;
    }
    (signal / denom).ln_1p()
}

pub fn weighted_sum_rate(net: &NetworkInstance, p: &[f64], q: &[f64]) -> f64 {
    net.known_links()
        .map(|k| net.weights()[k] * link_rate(net, p, q, k))
        .sum()
}

/// Mean-square error of receiver `k` with the receiver scalar `u_k` applied
/// to every term at that receiver.
pub fn mse_term(net: &NetworkInstance, state: &WmmseState, eta_k: f64, k: usize) -> f64 {
    let uk = state.u[k];
    let own = uk * net.amplitude(k, k) * state.v[k] - 1.0;
    let mut e = own * own + eta_k * uk * uk;
    for (j, vj) in state.v.iter().enumerate() {
        if j != k {
            let t = uk * net.amplitude(j, k) * vj;
            e += t * t;
        }
    }
    e
}

/// `sum_k alpha_k (w_k e_k - ln w_k)`.
pub fn reformulated_objective(net: &NetworkInstance, state: &WmmseState, eta: &[f64]) -> f64 {
    net.known_links()
        .map(|k| {
            let w = state.w[k];
            net.weights()[k] * (w * mse_term(net, state, eta[k], k) - w.ln())
        })
        .sum()
}
