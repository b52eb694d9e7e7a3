use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use scwmmse::config::{Scale, SimConfig};
use scwmmse::harness::{self, Algorithm, RunSetup, Scenario, ScenarioKind};
use scwmmse::latentnet::LatentPolicy;
use scwmmse::netgen::{self, LinkBudget, PathLossParams, TopologyParams};
use scwmmse::synthctl::{collect_panel, PanelData, ScEstimator, ScVariant, SolverOptions};
use scwmmse::{rng, Result, SimError};

#[derive(Parser, Debug)]
#[command(
    name = "scwmmse",
    version,
    about = "WMMSE and SC-WMMSE power allocation simulator"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Nothing is written outside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte-Carlo runs per scenario point
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Sweeps per run
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Comma-separated algorithm labels, e.g. `wmmse,wmmse_sc`.
    #[arg(long, global = true, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// SC fit: conv, free, center or dirich
    #[arg(long, global = true)]
    sc_variant: Option<String>,
    /// `desk` or `full`.
    #[arg(long, global = true)]
    scale: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a built-in scenario or a scenario TOML file.
    Scenario {
        /// Built-in name (see `list`) or path to a `.toml` file.
        name: String,
        /// Also write per-iteration traces of run 0.
        #[arg(long)]
        trace: bool,
    },
    /// List the built-in scenarios.
    List,
    /// Fit synthetic-control weights to a panel CSV.
    FitSc {
        #[arg(long)]
        panel: PathBuf,
    },
    /// Write one network realization: topology, gains, latent policies, panel.
    GenNet,
    /// Parse and validate the configuration, then print its hash.
    ValidateConfig,
}

fn load_config(c: &Common) -> Result<SimConfig> {
    let mut cfg = match &c.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.to_string_lossy().into_owned();
    }
    if c.runs.is_some() {
        cfg.run.runs = c.runs;
    }
    if c.iterations.is_some() {
        cfg.run.iterations = c.iterations;
    }
    if c.algorithms.is_some() {
        cfg.run.algorithms = c.algorithms.clone();
    }
    if let Some(v) = &c.sc_variant {
        cfg.sc.variant = ScVariant::parse(v)?;
    }
    if let Some(s) = &c.scale {
        cfg.run.scale = match s.as_str() {
            "desk" => Scale::Desk,
            "full" => Scale::Full,
            other => return Err(SimError::InvalidConfig(format!("unknown scale `{other}`"))),
        };
    }
    if let Some(t) = c.threads {
        cfg.run.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| SimError::io(path, e))
}

fn out_dir(cfg: &SimConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir).map_err(|e| SimError::io(&dir, e))?;
    Ok(dir)
}

fn load_scenario(name: &str) -> Result<Scenario> {
    if name.ends_with(".toml") {
        let path = Path::new(name);
        let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Scenario::from_toml_str(&text)
    } else {
        harness::find_builtin(name)
    }
}

fn run_scenario(cfg: &SimConfig, name: &str, trace: bool) -> Result<()> {
    let scenario = load_scenario(name)?.resolve(cfg)?;
    info!(
        "running {} with {} runs x {} iterations, seed base {}",
        scenario.name, scenario.runs, scenario.iterations, scenario.seed_base
    );
    let outcome = harness::run_scenario(&scenario, cfg)?;
    let dir = out_dir(cfg)?;
    for path in harness::write_outputs(&outcome, cfg, &dir)? {
        println!("{}", path.display());
    }
    if trace {
        let known_links = match &scenario.kind {
            ScenarioKind::Convergence => scenario.known_links,
            ScenarioKind::Sweep { links } => links[0],
        };
        let setup = RunSetup {
            scenario: &scenario,
            known_links,
            config: cfg,
        };
        let world = harness::build_world(&setup, 0)?;
        for (alg, label) in scenario.algorithms.iter().zip(scenario.labels()) {
            let mut rows = Vec::new();
            harness::run_algorithm(&world, *alg, scenario.iterations, cfg, Some(&mut rows))?;
            let path = dir.join(format!("{}_trace_{label}.csv", scenario.name));
            fs::write(&path, harness::trace_csv(&rows)?).map_err(|e| SimError::io(&path, e))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn fit_sc(cfg: &SimConfig, panel_path: &Path) -> Result<()> {
    let file = File::open(panel_path).map_err(|e| SimError::io(panel_path, e))?;
    let panel = PanelData::read_csv(file)?;
    let opts = SolverOptions {
        max_iter: cfg.sc.solver_max_iter,
        tol: cfg.sc.solver_tol,
        ridge: cfg.sc.ridge,
    };
    let est = ScEstimator::train(&panel, cfg.sc.variant, &opts)?;
    let dir = out_dir(cfg)?;
    let path = dir.join(format!("sc_weights_{}.csv", cfg.sc.variant.name()));
    est.write_csv(create(&path)?)?;
    println!("{}", path.display());
    Ok(())
}

fn gen_net(cfg: &SimConfig) -> Result<()> {
    let n = &cfg.network;
    let geometry = netgen::generate_topology(
        &TopologyParams::from_config(n, n.known_links, n.latent_links),
        cfg.seed,
    )?;
    let pl = PathLossParams::from_config(&cfg.path_loss, n.frequency_ghz);
    let net = netgen::build_gains(
        &geometry,
        n.known_links,
        &pl,
        &LinkBudget::from_config(n),
        cfg.seed,
    )?;
    let dir = out_dir(cfg)?;
    let mut written = Vec::new();

    let path = dir.join("topology.csv");
    geometry.write_csv(create(&path)?)?;
    written.push(path);
    let path = dir.join("gains.csv");
    net.write_gains_csv(create(&path)?)?;
    written.push(path);

    let l = &cfg.latent;
    let train = LatentPolicy::random(
        n.latent_links,
        n.known_links,
        l.q_max_w,
        l.jitter_halfwidth,
        &mut rng::stream(cfg.seed, rng::POLICY_TRAIN),
    )?;
    let infer = LatentPolicy::random(
        n.latent_links,
        n.known_links,
        l.q_max_w,
        l.jitter_halfwidth,
        &mut rng::stream(cfg.seed, rng::POLICY_INFER),
    )?;
    let path = dir.join("latent_train.csv");
    train.write_csv(create(&path)?)?;
    written.push(path);
    let path = dir.join("latent_infer.csv");
    infer.write_csv(create(&path)?)?;
    written.push(path);
    if n.known_links > 0 {
        let panel = collect_panel(&net, &train, cfg.sc.panel_rows, cfg.seed)?;
        let path = dir.join("panel.csv");
        panel.write_csv(create(&path)?)?;
        written.push(path);
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Scenario { name, trace } => run_scenario(&cfg, &name, trace),
        Command::List => {
            for s in harness::builtin_scenarios() {
                let algs: Vec<&str> = s.algorithms.iter().map(|a: &Algorithm| a.label()).collect();
                println!(
                    "{}\tK+={} K-train={} K-infer={}\t{}",
                    s.name,
                    s.known_links,
                    s.latent_train,
                    s.latent_infer,
                    algs.join(",")
                );
            }
            Ok(())
        }
        Command::FitSc { panel } => fit_sc(&cfg, &panel),
        Command::GenNet => gen_net(&cfg),
        Command::ValidateConfig => {
            println!("ok config_hash={}", cfg.hash_hex());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} msg={msg:?}", e.kind());
            ExitCode::from(match e {
                SimError::InvalidConfig(_) | SimError::Parse(_) | SimError::UnknownScenario(_) => 2,
                _ => 1,
            })
        }
    }
}
