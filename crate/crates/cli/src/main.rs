//! `sim`: runs digital ecosystem scenarios and writes their reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{output_root, resolve, ConfigError, ConfigFile, Overrides, RunConfig};
use digeco::experiments::{run_scenario, ScenarioReport};

#[derive(Parser)]
#[command(name = "sim", version, about = "Digital ecosystem scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Response rate of a fresh ecosystem over its first requests.
    Succession(RunArgs),
    /// Relative abundance of species in mature ecosystems.
    SpeciesAbundance(RunArgs),
    /// Species count against the number of habitats sampled.
    SpeciesArea(RunArgs),
    /// Efficiency of a two-cluster evolving population.
    Complexity(RunArgs),
    /// Macro-state occupancy and degree of instability.
    Stability(RunArgs),
    /// Degree of instability over mutation and crossover rates.
    StabilityGrid(RunArgs),
    /// Agent-sequence lengths against request lengths.
    DiversityLength(RunArgs),
    /// Agent attribute counts against service attribute counts.
    DiversityModularity(RunArgs),
    /// Generations to the optimum with and without the clustering catalyst.
    Catalyst(RunArgs),
    /// Response rate with targeted, random and pattern-control migration.
    TargetedMigration(RunArgs),
    /// Checks a config file without running anything.
    ValidateConfig {
        path: PathBuf,
        /// Scenario to check against; defaults to the file's `scenario` key.
        #[arg(long)]
        scenario: Option<String>,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// TOML config; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent runs (per arm, or per cell for the grid).
    #[arg(long)]
    runs: Option<usize>,
    /// Alias of --runs for stability-grid.
    #[arg(long, conflicts_with = "runs")]
    runs_per_cell: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output root; defaults to $SIM_OUTPUT_DIR, then ./sim-output.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override one config value, e.g. `--set ecosystem.n_users=50`.
    #[arg(long, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print only the output directory.
    #[arg(long, short)]
    quiet: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn scenario_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Succession(_) => "succession",
        Command::SpeciesAbundance(_) => "species-abundance",
        Command::SpeciesArea(_) => "species-area",
        Command::Complexity(_) => "complexity",
        Command::Stability(_) => "stability",
        Command::StabilityGrid(_) => "stability-grid",
        Command::DiversityLength(_) => "diversity-length",
        Command::DiversityModularity(_) => "diversity-modularity",
        Command::Catalyst(_) => "catalyst",
        Command::TargetedMigration(_) => "targeted-migration",
        Command::ValidateConfig { .. } => "validate-config",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ValidateConfig { path, scenario } => validate(path, scenario.as_deref()),
        Command::Succession(a)
        | Command::SpeciesAbundance(a)
        | Command::SpeciesArea(a)
        | Command::Complexity(a)
        | Command::Stability(a)
        | Command::StabilityGrid(a)
        | Command::DiversityLength(a)
        | Command::DiversityModularity(a)
        | Command::Catalyst(a)
        | Command::TargetedMigration(a) => run(scenario_name(&cli.command), a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("sim: config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("sim: {msg}");
            ExitCode::from(1)
        }
    }
}

fn validate(path: &Path, scenario: Option<&str>) -> Result<(), Failure> {
    let file = ConfigFile::load(path)?;
    let name = match (scenario, file.scenario()?) {
        (Some(s), _) => s.to_string(),
        (None, Some(s)) => s,
        (None, None) => "succession".to_string(),
    };
    let cfg = resolve(&name, Some(&file), &Overrides::default())?;
    println!("{}: valid for scenario '{}' (seed {}, {} runs)", path.display(), cfg.scenario, cfg.seed, cfg.n_runs);
    Ok(())
}

fn run(scenario: &str, args: &RunArgs) -> Result<(), Failure> {
    let file = args.config.as_deref().map(ConfigFile::load).transpose()?;
    let ov = Overrides {
        seed: args.seed,
        n_runs: args.runs.or(args.runs_per_cell),
        output_dir: args.output_dir.clone(),
        workers: args.workers,
        set: args.set.clone(),
    };
    let cfg = resolve(scenario, file.as_ref(), &ov)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Failure::Runtime(format!("worker pool: {e}")))?;
    let report = pool.install(|| run_scenario(scenario, &cfg.sim, cfg.n_runs, cfg.seed)).map_err(|e| match e {
        digeco::Error::InvalidParameter(m) => Failure::Config(m),
        other => Failure::Runtime(other.to_string()),
    })?;
    let dir = output_root(&cfg).join(scenario);
    write_outputs(&dir, &cfg, &report).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    if args.quiet {
        println!("{}", dir.display());
    } else {
        print_summary(&report, &dir);
    }
    Ok(())
}

fn write_outputs(dir: &Path, cfg: &RunConfig, report: &ScenarioReport) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut body = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    body.push('\n');
    std::fs::write(dir.join("report.json"), body)?;
    for (name, table) in &report.tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
    }
    let resolved = toml::to_string(&cfg.sim).map_err(std::io::Error::other)?;
    std::fs::write(
        dir.join("config.toml"),
        format!("scenario = {:?}\nseed = {}\nn_runs = {}\n\n{resolved}", cfg.scenario, cfg.seed, cfg.n_runs),
    )?;
    let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = serde_json::json!({
        "written_unix_seconds": stamp,
        "sim_version": env!("CARGO_PKG_VERSION"),
        "workers": cfg.workers,
        "args": std::env::args().collect::<Vec<_>>(),
    });
    std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta).map_err(std::io::Error::other)? + "\n")
}

fn print_summary(report: &ScenarioReport, dir: &Path) {
    println!("scenario {}  seed {}  runs {}  config {}", report.scenario, report.seed, report.n_runs, &report.config_hash[..12]);
    for (k, v) in &report.summary {
        println!("  {k:<40} {v:.4}");
    }
    for note in &report.notes {
        println!("  note: {note}");
    }
    println!("written to {}", dir.display());
}
