//! Scenarios, Monte-Carlo orchestration and figure data.
//!
//! Each run regenerates the topology, both latent policies, the training
//! panel and the estimators from its own seed. Every algorithm of a run then
//! starts from the same amplitudes and faces the same latent driver: the
//! latent environment is cloned per algorithm, so the jitter sequence is
//! shared and algorithms differ only through their update rules.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{self, Scale, SimConfig};
use crate::error::{Result, SimError};
use crate::latentnet::{LatentEnvironment, LatentPolicy};
use crate::netgen::{self, LinkBudget, NetworkInstance, PathLossParams, TopologyParams};
use crate::rates::weighted_sum_rate;
use crate::rng;
use crate::sc_wmmse::{sc_wmmse_iterate, EpsilonSchedule, ScStreams};
use crate::synthctl::{collect_panel, ScEstimator, ScVariant, SolverOptions};
use crate::wmmse::{init_state, wmmse_iterate, ConvergenceMonitor, EtaMode, WmmseState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    WmmseOriginal,
    WmmseLocal,
    ScWmmse(ScVariant),
}

impl Algorithm {
    /// Column label used in every CSV.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::WmmseOriginal => "wmmse",
            Algorithm::WmmseLocal => "wmmse_local",
            Algorithm::ScWmmse(ScVariant::Conv) => "wmmse_sc",
            Algorithm::ScWmmse(ScVariant::Free) => "wmmse_sc_uncons",
            Algorithm::ScWmmse(ScVariant::Center) => "wmmse_center",
            Algorithm::ScWmmse(ScVariant::Dirich) => "wmmse_random",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::WmmseOriginal => "WMMSE (Original)",
            Algorithm::WmmseLocal => "WMMSE (Local)",
            Algorithm::ScWmmse(ScVariant::Conv) => "SC (Conv)",
            Algorithm::ScWmmse(ScVariant::Free) => "SC (Free)",
            Algorithm::ScWmmse(ScVariant::Center) => "SC (Center)",
            Algorithm::ScWmmse(ScVariant::Dirich) => "SC (Dirich)",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let all = [
            Algorithm::WmmseOriginal,
            Algorithm::WmmseLocal,
            Algorithm::ScWmmse(ScVariant::Conv),
            Algorithm::ScWmmse(ScVariant::Free),
            Algorithm::ScWmmse(ScVariant::Center),
            Algorithm::ScWmmse(ScVariant::Dirich),
        ];
        if let Some(a) = all.into_iter().find(|a| a.label() == s) {
            return Ok(a);
        }
        if let Some(v) = s.strip_prefix("sc_").or_else(|| s.strip_prefix("sc-")) {
            return Ok(Algorithm::ScWmmse(ScVariant::parse(v)?));
        }
        Err(SimError::InvalidConfig(format!("unknown algorithm `{s}`")))
    }

    pub fn sc_variant(self) -> Option<ScVariant> {
        match self {
            Algorithm::ScWmmse(v) => Some(v),
            _ => None,
        }
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Algorithm::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CiLevel {
    #[serde(rename = "0.90")]
    P90,
    #[serde(rename = "0.99")]
    P99,
}

impl CiLevel {
    pub fn confidence(self) -> f64 {
        match self {
            CiLevel::P90 => 0.90,
            CiLevel::P99 => 0.99,
        }
    }

    /// Two-sided standard normal quantile.
    pub fn z(self) -> f64 {
        let normal = Normal::standard();
        normal.inverse_cdf(0.5 + 0.5 * self.confidence())
    }
}

/// `(mean, z s / sqrt(n))` with `s` the sample standard deviation. A single
/// sample has zero width.
pub fn confidence_interval(samples: &[f64], level: CiLevel) -> Result<(f64, f64)> {
    let n = samples.len();
    if n == 0 {
        return Err(SimError::Data("confidence interval of no samples".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok((mean, 0.0));
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, level.z() * var.sqrt() / (n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ScenarioKind {
    /// Per-iteration sum-rate curves.
    Convergence,
    /// Per-link throughput against the known link count.
    Sweep { links: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub algorithms: Vec<Algorithm>,
    pub known_links: usize,
    pub latent_train: usize,
    pub latent_infer: usize,
    pub iterations: usize,
    pub runs: usize,
    #[serde(default)]
    pub seed_base: u64,
    pub ci_level: CiLevel,
    pub kind: ScenarioKind,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
        {
            return bad(format!(
                "scenario name `{}` must be [A-Za-z0-9_.-]+",
                self.name
            ));
        }
        if self.name.starts_with('.') {
            return bad("scenario name must not start with a dot".into());
        }
        if self.algorithms.is_empty() {
            return bad("scenario needs at least one algorithm".into());
        }
        if self.runs == 0 || self.iterations == 0 || self.known_links == 0 {
            return bad("runs, iterations and known_links must be at least 1".into());
        }
        let needs_sc = self.algorithms.iter().any(|a| a.sc_variant().is_some());
        let min_links = match &self.kind {
            ScenarioKind::Convergence => self.known_links,
            ScenarioKind::Sweep { links } => {
                if links.is_empty() || links.contains(&0) {
                    return bad("sweep needs a nonempty list of positive link counts".into());
                }
                *links.iter().min().unwrap()
            }
        };
        if needs_sc && min_links < 2 {
            return bad("synthetic control needs at least two known links".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Applies the scale preset and the overrides of `cfg.run` and `cfg.sc`.
    pub fn resolve(&self, cfg: &SimConfig) -> Result<Scenario> {
        let mut s = self.clone();
        if cfg.run.scale == Scale::Desk {
            s.runs = config::DESK_RUNS;
            s.iterations = config::DESK_ITERATIONS;
            s.known_links = config::DESK_KNOWN_LINKS;
            if let ScenarioKind::Sweep { links } = &mut s.kind {
                *links = config::DESK_SWEEP.to_vec();
            }
        }
        if let Some(r) = cfg.run.runs {
            s.runs = r;
        }
        if let Some(i) = cfg.run.iterations {
            s.iterations = i;
        }
        if let Some(k) = cfg.run.known_links {
            s.known_links = k;
        }
        if let (Some(grid), ScenarioKind::Sweep { links }) = (&cfg.run.sweep_links, &mut s.kind) {
            *links = grid.clone();
        }
        if let Some(labels) = &cfg.run.algorithms {
            s.algorithms = labels
                .iter()
                .map(|l| Algorithm::parse(l))
                .collect::<Result<_>>()?;
        }
        // the configured variant replaces the default (Conv) estimator of
        // single-SC scenarios; other variants were chosen on purpose
        let sc_count = s
            .algorithms
            .iter()
            .filter(|a| a.sc_variant().is_some())
            .count();
        if sc_count == 1 && cfg.run.algorithms.is_none() {
            for a in &mut s.algorithms {
                if *a == Algorithm::ScWmmse(ScVariant::Conv) {
                    *a = Algorithm::ScWmmse(cfg.sc.variant);
                }
            }
        }
        s.seed_base = cfg.seed;
        s.validate()?;
        Ok(s)
    }

    pub fn labels(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for a in &self.algorithms {
            let base = a.label().to_string();
            let mut label = base.clone();
            let mut n = 2;
            while seen.contains(&label) {
                label = format!("{base}_{n}");
                n += 1;
            }
            seen.push(label);
        }
        seen
    }
}

const FIG1_LATENT: [usize; 4] = [20, 30, 40, 50];

fn standard_algorithms() -> Vec<Algorithm> {
    vec![
        Algorithm::WmmseOriginal,
        Algorithm::WmmseLocal,
        Algorithm::ScWmmse(ScVariant::Conv),
    ]
}

/// The published experiments at their original sizes. Desk-scale values are
/// applied by [`Scenario::resolve`].
pub fn builtin_scenarios() -> Vec<Scenario> {
    let base = |name: &str, train: usize, infer: usize| Scenario {
        name: name.to_string(),
        algorithms: standard_algorithms(),
        known_links: 50,
        latent_train: train,
        latent_infer: infer,
        iterations: 500,
        runs: 50,
        seed_base: 0,
        ci_level: CiLevel::P90,
        kind: ScenarioKind::Convergence,
    };
    let mut out: Vec<Scenario> = FIG1_LATENT
        .iter()
        .map(|&m| base(&format!("fig1_k{m}"), m, m))
        .collect();
    out.push(base("fig2_zero-zero", 0, 0));
    out.push(base("fig2_dep-zero", 50, 0));
    out.push(base("fig2_zero-dep", 0, 50));
    out.push(Scenario {
        ci_level: CiLevel::P99,
        kind: ScenarioKind::Sweep {
            links: config::FULL_SWEEP.to_vec(),
        },
        ..base("fig3_sweep", 50, 50)
    });
    out.push(Scenario {
        algorithms: vec![
            Algorithm::WmmseOriginal,
            Algorithm::ScWmmse(ScVariant::Free),
            Algorithm::ScWmmse(ScVariant::Conv),
            Algorithm::ScWmmse(ScVariant::Center),
            Algorithm::ScWmmse(ScVariant::Dirich),
        ],
        ..base("fig4_ablation", 20, 20)
    });
    out
}

pub fn find_builtin(name: &str) -> Result<Scenario> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| SimError::UnknownScenario(name.to_string()))
}

/// Trajectories of one run. Rates are in nats/s.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// `[algorithm][iteration]`, sum rate after each sweep.
    pub trajectories: Vec<Vec<f64>>,
    pub final_powers: Vec<Vec<f64>>,
    /// Counterfactual receiver updates per algorithm (zero for plain WMMSE).
    pub counterfactual_updates: Vec<usize>,
    /// First sweep after which the sum rate had stalled, per algorithm.
    pub converged_at: Vec<Option<usize>>,
}

impl RunRecord {
    pub fn is_finite(&self) -> bool {
        self.trajectories.iter().flatten().all(|x| x.is_finite())
    }

    pub fn final_rate(&self, alg: usize) -> f64 {
        *self.trajectories[alg].last().expect("nonempty trajectory")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStats {
    pub labels: Vec<String>,
    pub level: CiLevel,
    /// `[algorithm][iteration]`.
    pub mean: Vec<Vec<f64>>,
    pub half_width: Vec<Vec<f64>>,
    /// Per-link throughput `(mean, half-width)` per algorithm.
    pub throughput: Vec<(f64, f64)>,
    pub runs_used: usize,
}

/// Mean sum rate over the iterations divided by the link count.
pub fn per_link_throughput(trajectory: &[f64], known_links: usize) -> f64 {
    trajectory.iter().sum::<f64>() / trajectory.len() as f64 / known_links as f64
}

pub fn aggregate(
    labels: Vec<String>,
    records: &[RunRecord],
    known_links: usize,
    level: CiLevel,
) -> Result<ScenarioStats> {
    if records.is_empty() {
        return Err(SimError::Data("no finite runs to aggregate".into()));
    }
    let algs = labels.len();
    let iters = records[0].trajectories[0].len();
    let mut mean = vec![Vec::with_capacity(iters); algs];
    let mut half_width = vec![Vec::with_capacity(iters); algs];
    let mut throughput = Vec::with_capacity(algs);
    for a in 0..algs {
        for t in 0..iters {
            let samples: Vec<f64> = records.iter().map(|r| r.trajectories[a][t]).collect();
            let (m, h) = confidence_interval(&samples, level)?;
            mean[a].push(m);
            half_width[a].push(h);
        }
        let tp: Vec<f64> = records
            .iter()
            .map(|r| per_link_throughput(&r.trajectories[a], known_links))
            .collect();
        throughput.push(confidence_interval(&tp, level)?);
    }
    Ok(ScenarioStats {
        labels,
        level,
        mean,
        half_width,
        throughput,
        runs_used: records.len(),
    })
}

/// Everything one run needs besides its index.
#[derive(Debug, Clone)]
pub struct RunSetup<'a> {
    pub scenario: &'a Scenario,
    pub known_links: usize,
    pub config: &'a SimConfig,
}

/// Per-run world: network, inference-stage latent driver and estimators.
pub struct RunWorld {
    pub seed: u64,
    pub net: NetworkInstance,
    pub environment: LatentEnvironment,
    pub estimators: Vec<(ScVariant, ScEstimator)>,
}

pub fn run_seed(seed_base: u64, run: usize) -> u64 {
    seed_base ^ run as u64
}

pub fn build_world(setup: &RunSetup, run: usize) -> Result<RunWorld> {
    let cfg = setup.config;
    let sc = setup.scenario;
    let seed = run_seed(sc.seed_base, run);
    let known = setup.known_links;
    let latent = sc.latent_train.max(sc.latent_infer);
    let geometry = netgen::generate_topology(
        &TopologyParams::from_config(&cfg.network, known, latent),
        seed,
    )?;
    let pl = PathLossParams::from_config(&cfg.path_loss, cfg.network.frequency_ghz);
    let net = netgen::build_gains(
        &geometry,
        known,
        &pl,
        &LinkBudget::from_config(&cfg.network),
        seed,
    )?;

    let q_max = cfg.latent.q_max_w;
    let jitter = cfg.latent.jitter_halfwidth;
    let mut variants: Vec<ScVariant> = Vec::new();
    for v in sc.algorithms.iter().filter_map(|a| a.sc_variant()) {
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    let estimators = if variants.is_empty() {
        Vec::new()
    } else {
        let train_policy = LatentPolicy::random(
            sc.latent_train,
            known,
            q_max,
            jitter,
            &mut rng::stream(seed, rng::POLICY_TRAIN),
        )?;
        let panel = collect_panel(&net, &train_policy, cfg.sc.panel_rows, seed)?;
        let opts = SolverOptions {
            max_iter: cfg.sc.solver_max_iter,
            tol: cfg.sc.solver_tol,
            ridge: cfg.sc.ridge,
        };
        variants
            .into_iter()
            .map(|v| Ok((v, ScEstimator::train(&panel, v, &opts)?)))
            .collect::<Result<_>>()?
    };
    let infer_policy = LatentPolicy::random(
        sc.latent_infer,
        known,
        q_max,
        jitter,
        &mut rng::stream(seed, rng::POLICY_INFER),
    )?;
    let environment = LatentEnvironment::new(infer_policy, rng::stream(seed, rng::LATENT_JITTER));
    Ok(RunWorld {
        seed,
        net,
        environment,
        estimators,
    })
}

/// One row of an optional per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub sum_rate: f64,
    pub powers: Vec<f64>,
    pub counterfactual: Vec<usize>,
}

/// Output of one algorithm on one run.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub trajectory: Vec<f64>,
    pub state: WmmseState,
    pub counterfactual_updates: usize,
    pub converged_at: Option<usize>,
}

/// Runs one algorithm for `iterations` sweeps and records the sum rate after
/// every sweep, evaluated at the new powers under the latent powers realized
/// during that sweep. The run always uses the full budget; convergence is
/// only recorded.
pub fn run_algorithm(
    world: &RunWorld,
    alg: Algorithm,
    iterations: usize,
    cfg: &SimConfig,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<AlgorithmRun> {
    let net = &world.net;
    let mut env = world.environment.clone();
    let bandwidth = cfg.network.bandwidth_hz;
    let mode = match alg {
        Algorithm::WmmseLocal => EtaMode::LocalOnly,
        _ => EtaMode::Observed,
    };
    let mut state = init_state(net, world.seed, |p| env.observe(net, p), mode);
    let estimator = alg.sc_variant().map(|v| {
        &world
            .estimators
            .iter()
            .find(|(w, _)| *w == v)
            .expect("estimator trained for every variant")
            .1
    });
    let schedule = EpsilonSchedule::decay(cfg.sc.epsilon_a, cfg.sc.epsilon_b, iterations)?;
    let mut streams = ScStreams::new(world.seed);
    let mut trajectory = Vec::with_capacity(iterations);
    let mut cf_total = 0;
    let mut monitor =
        ConvergenceMonitor::new(cfg.wmmse.convergence_tol, cfg.wmmse.convergence_window);
    let mut converged_at = None;
    for _ in 0..iterations {
        let mut cf_links = Vec::new();
        match estimator {
            None => {
                wmmse_iterate(net, &mut state, |p| env.observe(net, p), mode);
            }
            Some(est) => {
                let sweep = sc_wmmse_iterate(
                    net,
                    &mut state,
                    est,
                    |p| env.observe(net, p),
                    &schedule,
                    &mut streams,
                );
                cf_total += sweep.counterfactual_count();
                if trace.is_some() {
                    cf_links = (0..sweep.counterfactual.len())
                        .filter(|&k| sweep.counterfactual[k])
                        .collect();
                }
            }
        }
        let powers = state.powers();
        let rate = weighted_sum_rate(net, &powers, env.current()) * bandwidth;
        trajectory.push(rate);
        if monitor.update(rate) && converged_at.is_none() {
            converged_at = Some(state.iteration);
        }
        if let Some(rows) = trace.as_deref_mut() {
            rows.push(TraceRow {
                iteration: state.iteration,
                sum_rate: rate,
                powers,
                counterfactual: cf_links,
            });
        }
    }
    if let Some(t) = converged_at {
        debug!(
            "{} seed {}: stalled after sweep {t}",
            alg.label(),
            world.seed
        );
    }
    Ok(AlgorithmRun {
        trajectory,
        state,
        counterfactual_updates: cf_total,
        converged_at,
    })
}

pub fn simulate_run(setup: &RunSetup, run: usize) -> Result<RunRecord> {
    let world = build_world(setup, run)?;
    let sc = setup.scenario;
    let mut trajectories = Vec::with_capacity(sc.algorithms.len());
    let mut final_powers = Vec::with_capacity(sc.algorithms.len());
    let mut counterfactual_updates = Vec::with_capacity(sc.algorithms.len());
    let mut converged_at = Vec::with_capacity(sc.algorithms.len());
    for &alg in &sc.algorithms {
        let out = run_algorithm(&world, alg, sc.iterations, setup.config, None)?;
        final_powers.push(out.state.powers());
        trajectories.push(out.trajectory);
        counterfactual_updates.push(out.counterfactual_updates);
        converged_at.push(out.converged_at);
    }
    Ok(RunRecord {
        run,
        seed: world.seed,
        trajectories,
        final_powers,
        counterfactual_updates,
        converged_at,
    })
}

/// Result for one known-link count.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub known_links: usize,
    pub stats: ScenarioStats,
    pub records: Vec<RunRecord>,
    /// `(run, reason)` for runs left out of the statistics.
    pub excluded: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub points: Vec<PointOutcome>,
}

fn run_point(scenario: &Scenario, known_links: usize, cfg: &SimConfig) -> Result<PointOutcome> {
    let setup = RunSetup {
        scenario,
        known_links,
        config: cfg,
    };
    let results: Vec<Result<RunRecord>> = (0..scenario.runs)
        .into_par_iter()
        .map(|run| simulate_run(&setup, run))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut excluded = Vec::new();
    for (run, res) in results.into_iter().enumerate() {
        let rec = res?;
        if rec.is_finite() {
            records.push(rec);
        } else {
            warn!(
                "scenario {} K+={known_links}: run {run} (seed {}) produced a non-finite trajectory and is excluded",
                scenario.name, rec.seed
            );
            excluded.push((run, "non-finite trajectory".to_string()));
        }
    }
    let stats = aggregate(scenario.labels(), &records, known_links, scenario.ci_level)?;
    Ok(PointOutcome {
        known_links,
        stats,
        records,
        excluded,
    })
}

/// Runs every point of an already resolved scenario.
pub fn run_scenario(scenario: &Scenario, cfg: &SimConfig) -> Result<ScenarioOutcome> {
    scenario.validate()?;
    let grid = match &scenario.kind {
        ScenarioKind::Convergence => vec![scenario.known_links],
        ScenarioKind::Sweep { links } => links.clone(),
    };
    let work = || {
        grid.iter()
            .map(|&k| {
                info!("scenario {}: K+={k}, {} runs", scenario.name, scenario.runs);
                run_point(scenario, k, cfg)
            })
            .collect::<Result<Vec<_>>>()
    };
    let points = if cfg.run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build()
            .map_err(|e| SimError::InvalidConfig(format!("thread pool: {e}")))?
            .install(work)?
    } else {
        work()?
    };
    Ok(ScenarioOutcome {
        scenario: scenario.clone(),
        points,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| SimError::io(path, e))
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| SimError::Data(format!("csv buffer: {e}")))
}

/// Figure CSV for a convergence scenario: `iteration, <alg>, <alg>_ci, ...`.
pub fn convergence_csv(stats: &ScenarioStats) -> Result<Vec<u8>> {
    let mut header = vec!["iteration".to_string()];
    for l in &stats.labels {
        header.push(l.clone());
        header.push(format!("{l}_ci"));
    }
    let iters = stats.mean[0].len();
    let rows: Vec<Vec<String>> = (0..iters)
        .map(|t| {
            let mut row = vec![(t + 1).to_string()];
            for a in 0..stats.labels.len() {
                row.push(stats.mean[a][t].to_string());
                row.push(stats.half_width[a][t].to_string());
            }
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Per-run trajectories: `run, iteration, <alg>, ...`.
pub fn runs_csv(labels: &[String], records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut header = vec!["run".to_string(), "iteration".to_string()];
    header.extend(labels.iter().cloned());
    let mut rows = Vec::new();
    for r in records {
        for t in 0..r.trajectories[0].len() {
            let mut row = vec![r.run.to_string(), (t + 1).to_string()];
            row.extend(r.trajectories.iter().map(|tr| tr[t].to_string()));
            rows.push(row);
        }
    }
    csv_bytes(&header, &rows)
}

/// Scalability CSV: `links, <alg>_mean, <alg>_ci, ...`.
pub fn sweep_csv(points: &[PointOutcome]) -> Result<Vec<u8>> {
    let labels = &points[0].stats.labels;
    let mut header = vec!["links".to_string()];
    for l in labels {
        header.push(format!("{l}_mean"));
        header.push(format!("{l}_ci"));
    }
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut row = vec![p.known_links.to_string()];
            for (m, h) in &p.stats.throughput {
                row.push(m.to_string());
                row.push(h.to_string());
            }
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Per-run per-link throughput of a sweep: `links, run, <alg>, ...`.
pub fn sweep_runs_csv(points: &[PointOutcome]) -> Result<Vec<u8>> {
    let labels = &points[0].stats.labels;
    let mut header = vec!["links".to_string(), "run".to_string()];
    header.extend(labels.iter().cloned());
    let mut rows = Vec::new();
    for p in points {
        for r in &p.records {
            let mut row = vec![p.known_links.to_string(), r.run.to_string()];
            row.extend(
                r.trajectories
                    .iter()
                    .map(|t| per_link_throughput(t, p.known_links).to_string()),
            );
            rows.push(row);
        }
    }
    csv_bytes(&header, &rows)
}

pub fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>> {
    let k = rows.first().map_or(0, |r| r.powers.len());
    let mut header = vec!["iteration".to_string(), "sum_rate".to_string()];
    header.extend((0..k).map(|i| format!("p{i}")));
    header.push("counterfactual".to_string());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.iteration.to_string(), r.sum_rate.to_string()];
            row.extend(r.powers.iter().map(|p| p.to_string()));
            row.push(
                r.counterfactual
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            row
        })
        .collect();
    csv_bytes(&header, &body)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the figure CSV, the per-run CSV and a manifest into `dir`.
/// Returns the paths written, manifest last.
pub fn write_outputs(
    outcome: &ScenarioOutcome,
    cfg: &SimConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let sc = &outcome.scenario;
    let (figure, runs) = match sc.kind {
        ScenarioKind::Convergence => {
            let p = &outcome.points[0];
            (
                convergence_csv(&p.stats)?,
                runs_csv(&p.stats.labels, &p.records)?,
            )
        }
        ScenarioKind::Sweep { .. } => (
            sweep_csv(&outcome.points)?,
            sweep_runs_csv(&outcome.points)?,
        ),
    };
    let figure_path = dir.join(format!("{}.csv", sc.name));
    let runs_path = dir.join(format!("{}_runs.csv", sc.name));
    write_file(&figure_path, &figure)?;
    write_file(&runs_path, &runs)?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "scenario = {:?}", sc.name);
    let _ = writeln!(manifest, "version = {:?}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "seed_base = {}", sc.seed_base);
    let _ = writeln!(manifest, "config_hash = {:?}", cfg.hash_hex());
    let _ = writeln!(
        manifest,
        "scenario_hash = {:?}",
        sha256_hex(toml::to_string(sc).unwrap_or_default().as_bytes())
    );
    let _ = writeln!(manifest, "runs = {}", sc.runs);
    let _ = writeln!(manifest, "iterations = {}", sc.iterations);
    let _ = writeln!(manifest, "ci_level = {}", sc.ci_level.confidence());
    let _ = writeln!(manifest, "algorithms = {:?}", sc.labels());
    let excluded: Vec<String> = outcome
        .points
        .iter()
        .flat_map(|p| {
            p.excluded
                .iter()
                .map(move |(r, why)| format!("K+={} run {r}: {why}", p.known_links))
        })
        .collect();
    let _ = writeln!(manifest, "excluded = {excluded:?}");
    // runs whose sum rate stalled within the budget, per algorithm
    let converged: Vec<usize> = (0..sc.algorithms.len())
        .map(|a| {
            outcome
                .points
                .iter()
                .flat_map(|p| &p.records)
                .filter(|r| r.converged_at[a].is_some())
                .count()
        })
        .collect();
    let _ = writeln!(manifest, "converged_runs = {converged:?}");
    let _ = writeln!(manifest, "\n[outputs]");
    let _ = writeln!(
        manifest,
        "{:?} = {:?}",
        format!("{}.csv", sc.name),
        sha256_hex(&figure)
    );
    let _ = writeln!(
        manifest,
        "{:?} = {:?}",
        format!("{}_runs.csv", sc.name),
        sha256_hex(&runs)
    );
    let manifest_path = dir.join(format!("{}_manifest.toml", sc.name));
    write_file(&manifest_path, manifest.as_bytes())?;
    Ok(vec![figure_path, runs_path, manifest_path])
}
