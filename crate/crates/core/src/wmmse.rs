//! Block-coordinate WMMSE power control.
//!
//! One sweep observes the receivers once, then visits the known links in
//! order and updates `u_k`, `w_k`, `v_k` in turn (Gauss-Seidel: later links
//! see the fresh values of earlier ones). Transmit power is `p_k = v_k^2`.

use rand::Rng;

use crate::error::{Result, SimError};
use crate::netgen::NetworkInstance;
use crate::rates::InterferenceObservation;
use crate::rng;

/// Largest `u_k h_kk v_k` fed to the weight update.
pub const W_GUARD: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub iteration: usize,
}

impl WmmseState {
    pub fn from_parts(u: Vec<f64>, w: Vec<f64>, v: Vec<f64>) -> Self {
        Self {
            u,
            w,
            v,
            iteration: 0,
        }
    }

    pub fn powers(&self) -> Vec<f64> {
        self.v.iter().map(|v| v * v).collect()
    }

    /// Positive weights, finite entries and `v_k^2 <= p_max + 1e-12`.
    pub fn check(&self, net: &NetworkInstance) -> Result<()> {
        let k = net.num_known();
        if self.u.len() != k || self.w.len() != k || self.v.len() != k {
            return Err(SimError::Domain(
                "state length differs from known link count".into(),
            ));
        }
        let finite = self
            .u
            .iter()
            .chain(&self.w)
            .chain(&self.v)
            .all(|x| x.is_finite());
        if !finite {
            return Err(SimError::Domain("non-finite state entry".into()));
        }
        if self.w.iter().any(|w| *w <= 0.0) {
            return Err(SimError::Domain("nonpositive weight".into()));
        }
        for (v, cap) in self.v.iter().zip(net.max_power()) {
            if v * v > cap + 1e-12 {
                return Err(SimError::Domain(format!("power {} above cap {cap}", v * v)));
            }
        }
        Ok(())
    }
}

/// Where the hidden term `eta_k` of the receiver update comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaMode {
    /// The measured latent interference plus noise.
    Observed,
    /// Noise only; the latent network is ignored.
    LocalOnly,
}

impl EtaMode {
    pub fn eta(self, net: &NetworkInstance, obs: &InterferenceObservation, k: usize) -> f64 {
        match self {
            EtaMode::Observed => obs.hidden[k],
            EtaMode::LocalOnly => net.noise_power(k),
        }
    }

    pub fn eta_vector(self, net: &NetworkInstance, obs: &InterferenceObservation) -> Vec<f64> {
        net.known_links().map(|k| self.eta(net, obs, k)).collect()
    }
}

/// Amplitudes uniform on `(0, sqrt(p_max)]`, drawn from the init stream of
/// `seed`.
pub fn random_amplitudes(net: &NetworkInstance, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::INIT);
    net.max_power()
        .iter()
        .map(|cap| {
            let x: f64 = rng.random();
            cap.sqrt() * (1.0 - x)
        })
        .collect()
}

/// Random amplitudes followed by one receiver/weight pass against an
/// observation taken at those amplitudes.
pub fn init_state<O>(net: &NetworkInstance, seed: u64, observe: O, mode: EtaMode) -> WmmseState
where
    O: FnOnce(&[f64]) -> InterferenceObservation,
{
    let k = net.num_known();
    let mut state =
        WmmseState::from_parts(vec![0.0; k], vec![1.0; k], random_amplitudes(net, seed));
    let obs = observe(&state.powers());
    for link in net.known_links() {
        state.u[link] = update_u(net, &state, mode.eta(net, &obs, link), link);
        state.w[link] = update_w(net, &state, link);
    }
    state
}

/// `u_k = h_kk v_k / (sum_j gain[j][k] v_j^2 + eta_k)`.
pub fn update_u(net: &NetworkInstance, state: &WmmseState, eta_k: f64, k: usize) -> f64 {
    (net.amplitude(k, k) * state.v[k]).abs() / receiver_denominator(net, &state.v, eta_k, k)
}

/// Full interference-plus-noise at receiver `k` for amplitudes `v`, own
/// signal included.
pub fn receiver_denominator(net: &NetworkInstance, v: &[f64], eta_k: f64, k: usize) -> f64 {
    v.iter()
        .enumerate()
        .map(|(j, vj)| net.gain(j, k) * vj * vj)
        .sum::<f64>()
        + eta_k
}

/// `w_k = 1 / (1 - u_k h_kk v_k)`, with the product clamped below 1.
pub fn update_w(net: &NetworkInstance, state: &WmmseState, k: usize) -> f64 {
    let x = (state.u[k] * net.amplitude(k, k) * state.v[k])
        .abs()
        .min(W_GUARD);
    1.0 / (1.0 - x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VUpdate {
    pub v: f64,
    /// Multiplier of the power constraint; zero when it is inactive.
    pub lambda: f64,
}

/// Amplitude for a given multiplier: `num / (denom + lambda)`.
fn amplitude_at(num: f64, denom: f64, lambda: f64) -> f64 {
    num / (denom + lambda)
}

/// `v_k = alpha_k h_kk u_k w_k / (sum_j alpha_j w_j gain[k][j] u_j^2 + lambda_k)`.
///
/// `lambda_k` is zero when the unconstrained amplitude satisfies the cap and
/// is otherwise found by bisection on the decreasing map `lambda -> v^2`.
pub fn update_v(net: &NetworkInstance, state: &WmmseState, k: usize) -> VUpdate {
    let alpha = net.weights();
    let num = alpha[k] * net.amplitude(k, k) * state.u[k] * state.w[k];
    if num == 0.0 {
        return VUpdate {
            v: 0.0,
            lambda: 0.0,
        };
    }
    let denom: f64 = state
        .u
        .iter()
        .enumerate()
        .map(|(j, uj)| alpha[j] * state.w[j] * net.gain(k, j) * uj * uj)
        .sum();
    let cap = net.max_power()[k];
    if denom > 0.0 {
        let v = amplitude_at(num, denom, 0.0);
        if v * v <= cap {
            return VUpdate { v, lambda: 0.0 };
        }
    }

    let feasible = |lambda: f64| {
        let v = amplitude_at(num, denom, lambda);
        v * v <= cap
    };
    let mut lo = 0.0;
    let mut hi = denom
        .abs()
        .max(f64::MIN_POSITIVE)
        .max(num / cap.sqrt() * 1e-3);
    while !feasible(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    VUpdate {
        v: amplitude_at(num, denom, hi),
        lambda: hi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    U,
    W,
    V,
}

/// One Gauss-Seidel pass with a pluggable receiver rule. `hook` sees the
/// state after every single block update.
pub(crate) fn sweep_with<U, H>(
    net: &NetworkInstance,
    state: &mut WmmseState,
    mut u_rule: U,
    hook: &mut H,
) where
    U: FnMut(&WmmseState, usize) -> f64,
    H: FnMut(&WmmseState, usize, Block),
{
    for k in net.known_links() {
        state.u[k] = u_rule(state, k);
        hook(state, k, Block::U);
        state.w[k] = update_w(net, state, k);
        hook(state, k, Block::W);
        state.v[k] = update_v(net, state, k).v;
        hook(state, k, Block::V);
    }
    state.iteration += 1;
}

/// One sweep of WMMSE. `observe` is called once, with the powers at the top
/// of the sweep; the observation is returned.
pub fn wmmse_iterate<O>(
    net: &NetworkInstance,
    state: &mut WmmseState,
    observe: O,
    mode: EtaMode,
) -> InterferenceObservation
where
    O: FnOnce(&[f64]) -> InterferenceObservation,
{
    wmmse_iterate_traced(net, state, observe, mode, &mut |_, _, _| {})
}

pub fn wmmse_iterate_traced<O, H>(
    net: &NetworkInstance,
    state: &mut WmmseState,
    observe: O,
    mode: EtaMode,
    hook: &mut H,
) -> InterferenceObservation
where
    O: FnOnce(&[f64]) -> InterferenceObservation,
    H: FnMut(&WmmseState, usize, Block),
{
    let obs = observe(&state.powers());
    let eta = mode.eta_vector(net, &obs);
    sweep_with(net, state, |s, k| update_u(net, s, eta[k], k), hook);
    obs
}

/// Declares convergence once the relative change of the tracked value stays
/// below `tol` for `window` consecutive updates.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    tol: f64,
    window: usize,
    stalled: usize,
    last: Option<f64>,
}

impl ConvergenceMonitor {
    pub fn new(tol: f64, window: usize) -> Self {
        Self {
            tol,
            window,
            stalled: 0,
            last: None,
        }
    }

    pub fn update(&mut self, value: f64) -> bool {
        if let Some(prev) = self.last {
            let rel = (value - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < self.tol {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
        }
        self.last = Some(value);
        self.stalled >= self.window
    }

    pub fn converged(&self) -> bool {
        self.stalled >= self.window
    }
}
