use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pcep::construction::{ConstructionCache, DEFAULT_MU};
use pcep::sim::{
    build_structure, emit_report, rate_table, report_to_string, run_experiment, threads_from_env,
    write_rate_csv, ExperimentConfig, ReportFormat,
};
use pcep::structure::{PaiMode, PartitionTargets};
use pcep::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INTERNAL: u8 = 1;

#[derive(Parser)]
#[command(
    name = "pcep",
    version,
    about = "Polar-code key reconciliation: construction, rates and Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo over an (n_exp, p_m) grid; reports Bob and Eve error rates.
    Sim(SimArgs),
    /// Build one code structure and write it as JSON.
    Construct(ConstructArgs),
    /// Key rates over a grid, construction only.
    Rate(RateArgs),
}

#[derive(Args, Clone)]
struct CodeArgs {
    #[arg(long, default_value_t = 0.1)]
    fer_target: f64,
    #[arg(long, default_value_t = 1e-7)]
    pai_target: f64,
    /// Leakage budget per block or per key bit.
    #[arg(long, value_enum, default_value_t = PaiArg::PerBlock)]
    pai_mode: PaiArg,
    /// Output alphabet size kept after each merge.
    #[arg(long, default_value_t = DEFAULT_MU)]
    mu: usize,
    /// Reliability table cache file, created on first use.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl CodeArgs {
    fn targets(&self) -> pcep::Result<PartitionTargets> {
        Ok(PartitionTargets::new(self.fer_target, self.pai_target)?
            .with_pai_mode(self.pai_mode.into()))
    }

    fn open_cache(&self) -> pcep::Result<Option<ConstructionCache>> {
        self.cache.as_ref().map(ConstructionCache::open).transpose()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PaiArg {
    PerBlock,
    PerBit,
}

impl From<PaiArg> for PaiMode {
    fn from(m: PaiArg) -> Self {
        match m {
            PaiArg::PerBlock => PaiMode::PerBlock,
            PaiArg::PerBit => PaiMode::PerBit,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_delimiter = ',', default_value = "10")]
    n_exp: Vec<u32>,
    #[arg(
        long = "p",
        value_delimiter = ',',
        default_value = "0.01,0.02,0.04,0.08"
    )]
    p: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write 0 in the `seconds` column so reports are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    code: CodeArgs,
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long = "p")]
    p: f64,
    #[arg(long)]
    n_exp: u32,
    /// Structure JSON file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    code: CodeArgs,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.04,0.08")]
    p_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    n_exp: Vec<u32>,
    /// CSV file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    code: CodeArgs,
}

fn write_output(out: Option<&PathBuf>, body: &str) -> pcep::Result<()> {
    match out {
        Some(path) => fs::write(path, body).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        }),
        None => io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
    }
}

fn sim(args: SimArgs, threads: Option<usize>) -> pcep::Result<()> {
    let cfg = ExperimentConfig {
        n_exps: args.n_exp,
        p_grid: args.p,
        trials: args.trials,
        fer_target: args.code.fer_target,
        pai_target: args.code.pai_target,
        pai_mode: args.code.pai_mode.into(),
        mu: args.code.mu,
        master_seed: args.seed,
        output_path: args.out.clone(),
        format: args.format.into(),
        threads,
        record_timing: !args.no_timing,
        cache_path: args.code.cache.clone(),
    };
    let report = run_experiment(&cfg)?;
    for s in &report.skipped {
        eprintln!("skipped n_exp={} p_m={}: {}", s.n_exp, s.p_m, s.reason);
    }
    match &cfg.output_path {
        Some(path) => emit_report(&report, cfg.format, path),
        None => write_output(None, &report_to_string(&report, cfg.format)?),
    }
}

fn construct(args: ConstructArgs) -> pcep::Result<()> {
    let targets = args.code.targets()?;
    let mut cache = args.code.open_cache()?;
    let s = build_structure(args.p, args.n_exp, targets, args.code.mu, cache.as_mut())?;
    eprintln!(
        "n_exp={} p_m={} p_w={:.6} |R|={} |A|={} |B|={} rate={:.6} anomalies={}",
        s.n_exp,
        s.p_m,
        s.p_w,
        s.set_r.len(),
        s.set_a.len(),
        s.set_b.len(),
        s.rate,
        s.anomaly_count
    );
    write_output(args.out.as_ref(), &(s.to_json_pretty() + "\n"))
}

fn rate(args: RateArgs) -> pcep::Result<()> {
    let targets = args.code.targets()?;
    let mut cache = args.code.open_cache()?;
    let rows = rate_table(
        &args.n_exp,
        &args.p_grid,
        targets,
        args.code.mu,
        cache.as_mut(),
    )?;
    let mut buf = Vec::new();
    write_rate_csv(&rows, &mut buf)?;
    write_output(args.out.as_ref(), &String::from_utf8_lossy(&buf))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        Error::Resource { .. } | Error::Singular | Error::Json(_) => EXIT_INTERNAL,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| {
        if let Some(n) = threads {
            // Construction runs on the global pool.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        match cli.command {
            Command::Sim(a) => sim(a, threads),
            Command::Construct(a) => construct(a),
            Command::Rate(a) => rate(a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcep: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
