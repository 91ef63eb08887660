use std::fs;
use std::io::{self, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bridgex::densities::BridgeEndpoints;
use bridgex::ou::NuSolver;
use bridgex::run::{builtin_suite, generate_batch, tables, validate_batch, write_paths_csv, GeneratorId, RunConfig};
use bridgex::validation::benchmark;

#[derive(Parser)]
#[command(name = "bridgex", version, about = "Paths conditioned on their maximum or minimum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit paths as `path_id,t,value` CSV.
    Generate(RunArgs),
    /// Generate a batch and check it; without --config, run the built-in suite.
    Validate(RunArgs),
    /// Time the meander and incremental bridge constructions.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Skip the runs at twice the number of timesteps.
        #[arg(long)]
        no_doubling: bool,
    },
    /// Dump the Volterra and argmax density tables behind a configuration.
    Tables(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    no_rectify: bool,
    /// Worker threads (falls back to BRIDGEX_THREADS).
    #[arg(long, env = "BRIDGEX_THREADS")]
    threads: Option<usize>,
    /// Override the generator named in the configuration.
    #[arg(long, value_parser = parse_generator)]
    method: Option<GeneratorId>,
    #[arg(long, conflicts_with = "volterra")]
    abel: bool,
    #[arg(long)]
    volterra: bool,
}

fn parse_generator(s: &str) -> Result<GeneratorId, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown generator `{s}`"))
}

enum Failure {
    Config(String),
    Validation(String),
    Runtime(String),
}

impl From<bridgex::Error> for Failure {
    fn from(e: bridgex::Error) -> Self {
        match e {
            bridgex::Error::InvalidParameter { .. } | bridgex::Error::InvalidExtremum { .. } => Failure::Config(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn io_failure(e: io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, Failure> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Failure::Config("invalid parameter `config`: --config is required".into()))?;
        let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_json(&text)?;
        if let Some(seed) = self.seed {
            cfg.numerics.seed = seed;
        }
        if let Some(n) = self.paths {
            cfg.n_paths = n;
        }
        if self.no_rectify {
            cfg.rectify = false;
        }
        if let Some(id) = self.method {
            cfg.generator = id;
        }
        if self.abel {
            cfg.ou.solver = NuSolver::Abel;
        }
        if self.volterra {
            cfg.ou.solver = NuSolver::Volterra;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn init_threads(&self) -> Result<(), Failure> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        Ok(())
    }

    fn emit(&self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        match &self.out {
            Some(dir) => write_file(dir, name, bytes),
            None => io::stdout().write_all(bytes).map_err(io_failure),
        }
    }
}

fn write_file(dir: &FsPath, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io_failure)?;
    fs::write(dir.join(name), bytes).map_err(io_failure)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(args) => {
            args.init_threads()?;
            let cfg = args.load()?;
            let paths = generate_batch(&cfg)?;
            let mut csv = Vec::new();
            write_paths_csv(&paths, &mut csv).map_err(io_failure)?;
            args.emit("paths.csv", &csv)
        }
        Command::Validate(args) => {
            args.init_threads()?;
            let report = if args.config.is_some() {
                let cfg = args.load()?;
                let paths = generate_batch(&cfg)?;
                validate_batch(&cfg, &paths)?
            } else {
                builtin_suite()?
            };
            args.emit("report.json", &to_json(&report)?)?;
            if report.all_passed() {
                Ok(())
            } else {
                let failed: Vec<_> = report.records.iter().filter(|r| !r.passed).map(|r| r.id.as_str()).collect();
                Err(Failure::Validation(format!("failed: {}", failed.join(", "))))
            }
        }
        Command::Bench { run, no_doubling } => {
            let cfg = run.load()?;
            if !matches!(cfg.generator, GeneratorId::Method1 | GeneratorId::Method2) {
                return Err(Failure::Config("invalid parameter `generator`: bench needs a Brownian bridge configuration".into()));
            }
            let spec = cfg.spec()?;
            let b = spec.b.ok_or_else(|| Failure::Config("invalid parameter `b`: bench needs a bridge".into()))?;
            let ep = BridgeEndpoints::new(spec.t0, spec.t_end, spec.a, b, cfg.sigma)?;
            let n = run.paths.unwrap_or(20);
            let report = benchmark(&ep, spec.m, &cfg.numerics, n, !no_doubling)?;
            run.emit("bench.json", &to_json(&report)?)
        }
        Command::Tables(args) => {
            let cfg = args.load()?;
            for (name, csv) in tables(&cfg)? {
                match &args.out {
                    Some(dir) => write_file(dir, &name, csv.as_bytes())?,
                    None => print!("# {name}\n{csv}"),
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
