use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use swarm_alloc::harness::{self, ExperimentConfig, Method, RepetitionMode};
use swarm_alloc::scenario::{self, ScenarioSpec};
use swarm_alloc::scoring::ScoringConfig;
use swarm_alloc::simnet::{self, CbbaConfig};
use swarm_alloc::stats;

#[derive(Parser)]
#[command(name = "swarm-alloc", version, about = "Cloud-edge resource selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario as JSON.
    Generate {
        #[arg(long)]
        apps: usize,
        #[arg(long)]
        caps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        cloud_fraction: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run allocation methods over a scenario and write one CSV row per run.
    Run(RunArgs),
    /// Build report tables from one or more record files.
    Report {
        /// Record file; repeat to report several capacity levels together.
        #[arg(long, required = true)]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the large-scale scenario suite.
    Scale {
        /// Multiplier applied to every application and capacity count.
        #[arg(long, default_value_t = 1.0)]
        factor: f64,
        #[arg(long, default_value = "first-fit,cbba")]
        methods: String,
        /// Per-application time budget in seconds.
        #[arg(long, default_value_t = 60.0)]
        time_budget: f64,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "centralised,first-fit,cbba")]
    methods: String,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Replay the same applications in every repetition.
    #[arg(long, conflicts_with = "repeat_capacities")]
    same_apps: bool,
    /// Redraw capacities as well as applications for every repetition.
    #[arg(long)]
    repeat_capacities: bool,
    /// Maximum number of candidate assignments the exhaustive search may visit.
    #[arg(long, default_value_t = swarm_alloc::baselines::DEFAULT_ENUMERATION_BUDGET)]
    budget: u64,
    /// Write every CBBA message as JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON file with `weights` and/or `bounds`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CBBA round cap (default |microservices| x |capacities| + 1).
    #[arg(long)]
    max_rounds: Option<u64>,
    /// Step CBBA agents in parallel.
    #[arg(long)]
    parallel: bool,
    /// Leave elapsed_seconds empty so outputs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl CommonArgs {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let scoring = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let cfg: ScoringConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                cfg.validate()?;
                cfg
            }
            None => ScoringConfig::default(),
        };
        Ok(ExperimentConfig {
            weights: scoring.weights,
            bounds: scoring.bounds,
            cbba: CbbaConfig { max_rounds: self.max_rounds, parallel: self.parallel },
            timing: !self.no_timing,
            ..ExperimentConfig::default()
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn run(args: RunArgs) -> Result<()> {
    let scenario = scenario::load(&args.scenario).with_context(|| format!("loading {}", args.scenario.display()))?;
    let methods = Method::parse_list(&args.methods)?;
    if methods.is_empty() {
        bail!("no methods given");
    }
    let mode = if args.same_apps {
        RepetitionMode::Fixed
    } else if args.repeat_capacities {
        RepetitionMode::FreshAll
    } else {
        RepetitionMode::FreshApplications
    };
    let cfg = ExperimentConfig {
        repetitions: args.repetitions,
        mode,
        enumeration_budget: args.budget,
        ..args.common.experiment()?
    };

    if let Some(path) = &args.trace {
        // the trace covers the first repetition of CBBA on the scenario as given
        let mut sink = create(path)?;
        let mut caps = scenario.capacities.clone();
        for app in &scenario.applications {
            let run = simnet::allocate_cbba_traced(app, &caps, &cfg.weights, &cfg.bounds, &cfg.cbba, Some(&mut sink))?;
            if let Ok(alloc) = &run.result {
                harness::commit(&mut caps, app, alloc)?;
            }
        }
        sink.flush()?;
    }

    let records = harness::run_experiment(&scenario, &methods, &cfg)?;
    let mut out = create(&args.out)?;
    harness::write_records(&mut out, &records)?;
    out.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { apps, caps, seed, cloud_fraction, out } => {
            let spec = ScenarioSpec { cloud_fraction, ..ScenarioSpec::new(apps, caps, seed) };
            let s = scenario::generate_scenario(&spec)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            scenario::save(&s, &out)?;
        }
        Command::Run(args) => run(args)?,
        Command::Report { records, out } => {
            let mut sets = Vec::new();
            for path in &records {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                sets.push((label, harness::read_records(file)?));
            }
            stats::write_report(&sets, &out)?;
        }
        Command::Scale { factor, methods, time_budget, repetitions, seed, common, out } => {
            if factor.is_nan() || factor <= 0.0 {
                bail!("--factor must be positive");
            }
            let methods = Method::parse_list(&methods)?;
            let cfg = ExperimentConfig { repetitions, ..common.experiment()? };
            let specs = harness::scale_specs(factor, seed, repetitions);
            let records = harness::run_scale_suite(&specs, &methods, Duration::from_secs_f64(time_budget), &cfg)?;
            let mut w = create(&out)?;
            harness::write_scale_records(&mut w, &records)?;
            w.flush()?;
        }
    }
    Ok(())
}
