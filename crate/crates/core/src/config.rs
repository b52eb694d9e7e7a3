//! Simulation configuration.
//!
//! A single TOML document with nested sections. Every field has a default, so
//! an empty file is a valid config. Unknown keys are rejected. The shipped
//! `config/default.toml` is the serialized form of [`SimConfig::default`].
//!
//! Precedence when the CLI assembles a config: command-line flags, then
//! values present in the config file, then the scale preset (`run.scale`),
//! then the builtin scenario definition.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};
use crate::synthctl::ScVariant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Base seed for every stochastic component.
    pub seed: u64,
    /// All outputs are written below this directory.
    pub out_dir: String,
    pub network: NetworkConfig,
    pub path_loss: PathLossConfig,
    pub latent: LatentConfig,
    pub sc: ScConfig,
    pub wmmse: WmmseConfig,
    pub run: RunConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: "out".to_string(),
            network: NetworkConfig::default(),
            path_loss: PathLossConfig::default(),
            latent: LatentConfig::default(),
            sc: ScConfig::default(),
            wmmse: WmmseConfig::default(),
            run: RunConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Transmitters are uniform in a disk of this radius around the origin (m).
    pub deployment_radius_m: f64,
    /// Each receiver is uniform in a disk of this radius around its transmitter (m).
    pub rx_radius_m: f64,
    /// Known link count used by `gen-net`; scenarios carry their own counts.
    pub known_links: usize,
    /// Latent link count used by `gen-net`.
    pub latent_links: usize,
    /// Distances below this are clamped before evaluating path loss (m).
    pub min_distance_m: f64,
    pub frequency_ghz: f64,
    pub bandwidth_hz: f64,
    /// Per-link transmit power cap (W).
    pub max_power_w: f64,
    /// Rate weight applied to every known link.
    pub weight: f64,
    /// Thermal noise power spectral density (dBm/Hz).
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            deployment_radius_m: 200.0,
            rx_radius_m: 25.0,
            known_links: 20,
            latent_links: 20,
            min_distance_m: 1.0,
            frequency_ghz: 60.0,
            bandwidth_hz: 80e6,
            max_power_w: 0.2,
            weight: 1.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 10.0,
        }
    }
}

impl NetworkConfig {
    /// Receiver noise power in watts: kT·B plus noise figure.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db;
        10f64.powf((dbm - 30.0) / 10.0)
    }
}

/// Dual-slope log-distance model with lognormal shadowing, an optional
/// line-of-sight branch and random blockage.
///
/// Defaults are implementer-supplied values in the range reported for
/// indoor shopping-mall NLOS measurements around 60 GHz. Override them when
/// matching a particular measurement campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossConfig {
    /// Loss at the 1 m reference distance. `None` uses free-space loss at the
    /// carrier frequency.
    pub intercept_db: Option<f64>,
    pub slope1_exponent: f64,
    pub slope2_exponent: f64,
    pub breakpoint_m: f64,
    pub shadow_sigma_db: f64,
    /// LOS probability is `exp(-d / los_decay_m)`; 0 disables the LOS branch.
    pub los_decay_m: f64,
    pub los_exponent: f64,
    pub los_shadow_sigma_db: f64,
    pub blockage_probability: f64,
    pub blockage_loss_db: f64,
}

impl Default for PathLossConfig {
    fn default() -> Self {
        Self {
            intercept_db: None,
            slope1_exponent: 2.43,
            slope2_exponent: 8.36,
            breakpoint_m: 110.0,
            shadow_sigma_db: 2.7,
            los_decay_m: 10.0,
            los_exponent: 1.73,
            los_shadow_sigma_db: 2.0,
            blockage_probability: 0.1,
            blockage_loss_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentConfig {
    /// Power cap of every latent transmitter (W).
    pub q_max_w: f64,
    /// Relative half-width of the multiplicative jitter on `Z p`.
    pub jitter_halfwidth: f64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            q_max_w: 0.2,
            jitter_halfwidth: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScConfig {
    /// Rows of the offline training panel.
    pub panel_rows: usize,
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    /// Estimator used by the plain `wmmse_sc` algorithm.
    pub variant: ScVariant,
    pub solver_max_iter: usize,
    /// Relative objective change that stops the simplex solver.
    pub solver_tol: f64,
    /// Ridge added to the normalized normal equations of the free fit.
    pub ridge: f64,
}

impl Default for ScConfig {
    fn default() -> Self {
        Self {
            panel_rows: 256,
            epsilon_a: 0.2,
            epsilon_b: 2.0,
            variant: ScVariant::Conv,
            solver_max_iter: 100_000,
            solver_tol: 1e-10,
            ridge: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WmmseConfig {
    /// Relative sum-rate change regarded as stalled.
    pub convergence_tol: f64,
    /// Consecutive stalled sweeps needed to declare convergence.
    pub convergence_window: usize,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self {
            convergence_tol: 1e-8,
            convergence_window: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Reduced sizes suitable for a laptop or CI.
    Desk,
    /// The sizes of the published experiments.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scale: Scale,
    /// Overrides; `None` falls back to the scale preset.
    pub runs: Option<usize>,
    pub iterations: Option<usize>,
    pub known_links: Option<usize>,
    /// Known-link grid of the scalability sweep.
    pub sweep_links: Option<Vec<usize>>,
    /// Restrict the algorithms of a scenario (labels as in the CSV header).
    pub algorithms: Option<Vec<String>>,
    /// Worker threads for the run pool; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scale: Scale::Desk,
            runs: None,
            iterations: None,
            known_links: None,
            sweep_links: None,
            algorithms: None,
            threads: 0,
        }
    }
}

pub const DESK_RUNS: usize = 20;
pub const DESK_ITERATIONS: usize = 200;
pub const DESK_KNOWN_LINKS: usize = 20;
pub const DESK_SWEEP: [usize; 4] = [5, 10, 20, 40];
pub const FULL_SWEEP: [usize; 7] = [10, 25, 50, 100, 150, 200, 250];

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialized form; the manifest hash is computed over it.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the serialized configuration. The output directory and
    /// the worker count are left out; neither changes any result.
    pub fn hash_hex(&self) -> String {
        let mut canonical = SimConfig {
            out_dir: String::new(),
            ..self.clone()
        };
        canonical.run.threads = 0;
        hex::encode(Sha256::digest(canonical.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        let n = &self.network;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(positive(n.deployment_radius_m) && positive(n.rx_radius_m)) {
            return bad("network radii must be positive");
        }
        if !positive(n.min_distance_m) {
            return bad("network.min_distance_m must be positive");
        }
        if !(positive(n.frequency_ghz) && positive(n.bandwidth_hz)) {
            return bad("network.frequency_ghz and bandwidth_hz must be positive");
        }
        if !positive(n.max_power_w) {
            return bad("network.max_power_w must be positive");
        }
        if !(n.weight.is_finite() && n.weight >= 0.0) {
            return bad("network.weight must be nonnegative");
        }
        if !(n.noise_psd_dbm_hz.is_finite() && n.noise_figure_db.is_finite()) {
            return bad("noise parameters must be finite");
        }
        let pl = &self.path_loss;
        if !positive(pl.breakpoint_m) {
            return bad("path_loss.breakpoint_m must be positive");
        }
        if pl.slope1_exponent < 0.0 || pl.slope2_exponent < 0.0 || pl.los_exponent < 0.0 {
            return bad("path-loss exponents must be nonnegative");
        }
        if pl.shadow_sigma_db < 0.0 || pl.los_shadow_sigma_db < 0.0 {
            return bad("shadowing sigmas must be nonnegative");
        }
        if pl.los_decay_m < 0.0 {
            return bad("path_loss.los_decay_m must be nonnegative");
        }
        if !(0.0..=1.0).contains(&pl.blockage_probability) || pl.blockage_loss_db < 0.0 {
            return bad("blockage probability must be in [0, 1] and loss nonnegative");
        }
        if pl.intercept_db.is_some_and(|x| !x.is_finite()) {
            return bad("path_loss.intercept_db must be finite");
        }
        if !positive(self.latent.q_max_w) {
            return bad("latent.q_max_w must be positive");
        }
        if !(0.0..1.0).contains(&self.latent.jitter_halfwidth) {
            return bad("latent.jitter_halfwidth must be in [0, 1)");
        }
        let sc = &self.sc;
        if sc.panel_rows == 0 {
            return bad("sc.panel_rows must be at least 1");
        }
        if !(0.0..=1.0).contains(&sc.epsilon_a) || !positive(sc.epsilon_b) {
            return bad("epsilon schedule needs 0 <= a <= 1 and b > 0");
        }
        if sc.solver_max_iter == 0
            || !positive(sc.solver_tol)
            || !(sc.ridge.is_finite() && sc.ridge >= 0.0)
        {
            return bad("sc solver settings out of range");
        }
        if !positive(self.wmmse.convergence_tol) || self.wmmse.convergence_window == 0 {
            return bad("wmmse convergence settings out of range");
        }
        let r = &self.run;
        if r.runs == Some(0) || r.iterations == Some(0) || r.known_links == Some(0) {
            return bad("run.runs, run.iterations and run.known_links must be at least 1");
        }
        if r.sweep_links
            .as_ref()
            .is_some_and(|s| s.is_empty() || s.contains(&0))
        {
            return bad("run.sweep_links must be a nonempty list of positive counts");
        }
        Ok(())
    }
}
