//! SC-WMMSE: WMMSE whose receiver update occasionally replaces the measured
//! interference with a synthetic-control estimate built from the other
//! receivers' measurements.
//!
//! The branch is an independent Bernoulli draw per link per sweep with
//! probability `epsilon(t)`, `t` counting completed sweeps. Weight and
//! amplitude updates are exactly those of plain WMMSE.

use rand::Rng;

use crate::error::{Result, SimError};
use crate::netgen::NetworkInstance;
use crate::rates::InterferenceObservation;
use crate::rng::{self, SimRng};
use crate::synthctl::ScEstimator;
use crate::wmmse::{receiver_denominator, sweep_with, update_u, Block, EtaMode, WmmseState};

/// Probability of taking the counterfactual branch at sweep `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    /// `(a (1 - t / t_max))^b`, zero from `t_max` on.
    Decay {
        a: f64,
        b: f64,
        t_max: usize,
    },
    Constant(f64),
}

impl EpsilonSchedule {
    pub fn decay(a: f64, b: f64, t_max: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) || !(b.is_finite() && b > 0.0) || t_max == 0 {
            return Err(SimError::InvalidConfig(
                "epsilon schedule needs 0 <= a <= 1, b > 0, t_max >= 1".into(),
            ));
        }
        Ok(EpsilonSchedule::Decay { a, b, t_max })
    }

    pub fn constant(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(SimError::InvalidConfig(
                "constant epsilon must be in [0, 1]".into(),
            ));
        }
        Ok(EpsilonSchedule::Constant(eps))
    }

    pub fn epsilon(&self, t: usize) -> f64 {
        match *self {
            EpsilonSchedule::Decay { a, b, t_max } => {
                let t = t.min(t_max) as f64;
                (a * (1.0 - t / t_max as f64)).powf(b)
            }
            EpsilonSchedule::Constant(eps) => eps,
        }
    }
}

/// Random streams consumed by SC-WMMSE. The branch coins and the Dirichlet
/// weights have separate streams so that variants see identical coins.
#[derive(Debug, Clone)]
pub struct ScStreams {
    pub branch: SimRng,
    pub dirichlet: SimRng,
}

impl ScStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            branch: rng::stream(seed, rng::BRANCH),
            dirichlet: rng::stream(seed, rng::DIRICHLET),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScSweep {
    pub observation: InterferenceObservation,
    /// Links whose receiver took the counterfactual branch this sweep.
    pub counterfactual: Vec<bool>,
}

impl ScSweep {
    pub fn counterfactual_count(&self) -> usize {
        self.counterfactual.iter().filter(|c| **c).count()
    }
}

/// One SC-WMMSE sweep.
///
/// Receiver measurements are refreshed with in-sweep amplitude changes of
/// the known network: `I_j = sum_i gain[i][j] v_i^2 + eta_j` with `eta` from
/// the observation at the top of the sweep. The factual branch is therefore
/// the WMMSE receiver update bit for bit. A nonpositive or non-finite
/// estimate (possible only for the unconstrained fit) falls back to the
/// factual branch.
pub fn sc_wmmse_iterate<O>(
    net: &NetworkInstance,
    state: &mut WmmseState,
    estimator: &ScEstimator,
    observe: O,
    schedule: &EpsilonSchedule,
    streams: &mut ScStreams,
) -> ScSweep
where
    O: FnOnce(&[f64]) -> InterferenceObservation,
{
    sc_wmmse_iterate_traced(
        net,
        state,
        estimator,
        observe,
        schedule,
        streams,
        &mut |_, _, _| {},
    )
}

pub fn sc_wmmse_iterate_traced<O, H>(
    net: &NetworkInstance,
    state: &mut WmmseState,
    estimator: &ScEstimator,
    observe: O,
    schedule: &EpsilonSchedule,
    streams: &mut ScStreams,
    hook: &mut H,
) -> ScSweep
where
    O: FnOnce(&[f64]) -> InterferenceObservation,
    H: FnMut(&WmmseState, usize, Block),
{
    assert_eq!(
        estimator.num_links(),
        net.num_known(),
        "estimator trained on another link set"
    );
    let observation = observe(&state.powers());
    let eta = EtaMode::Observed.eta_vector(net, &observation);
    let eps = schedule.epsilon(state.iteration);
    let mut counterfactual = vec![false; net.num_known()];
    let ScStreams { branch, dirichlet } = streams;

    sweep_with(
        net,
        state,
        |s, k| {
            let coin: f64 = branch.random();
            if coin < eps {
                let mu: Vec<f64> = net
                    .known_links()
                    .filter(|&j| j != k)
                    .map(|j| receiver_denominator(net, &s.v, eta[j], j))
                    .collect();
                let estimate = estimator.estimate(k, &mu, dirichlet);
                if estimate.is_finite() && estimate > 0.0 {
                    counterfactual[k] = true;
                    return (net.amplitude(k, k) * s.v[k]).abs() / estimate;
                }
            }
            update_u(net, s, eta[k], k)
        },
        hook,
    );
    ScSweep {
        observation,
        counterfactual,
    }
}
