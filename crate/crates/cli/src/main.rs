use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use evidencer_cli::{exit, parse_threads, run, EpChoice, RunOptions, Selection, Stage};

#[derive(Parser, Debug)]
#[command(name = "evidencer", version, about = "Cross-validated Bayesian model assessment for mass-univariate GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON model-space configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed of the EP sampler; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads, a count or `auto`.
    #[arg(long, global = true, env = "EVIDENCER_THREADS", default_value = "auto")]
    threads: String,

    #[arg(long, global = true, value_enum)]
    ep_method: Option<EpMethodArg>,

    /// Samples per voxel for sampling EPs [default: 1000000].
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Voxels per processing chunk [default: 4096].
    #[arg(long, global = true)]
    chunk_size: Option<usize>,

    /// Write per-stage wall times to timings.csv.
    #[arg(long, global = true)]
    timings: bool,

    /// Also time integration against sampling EPs on the same α map.
    #[arg(long, global = true)]
    ep_benchmark: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Cross-validated log model evidences.
    Cvlme,
    /// Cross-validated accuracies and complexities.
    Anc,
    /// Log family evidences.
    Lfe,
    /// Random-effects model selection over group subjects.
    BmsGroup,
    /// Exceedance probabilities.
    Ep,
    /// Posterior model probabilities and model-averaged parameters.
    Bma,
    /// Every stage the config has inputs for.
    Pipeline,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EpMethodArg {
    ClosedForm,
    Sampling,
    Integration,
}

impl From<EpMethodArg> for EpChoice {
    fn from(m: EpMethodArg) -> Self {
        match m {
            EpMethodArg::ClosedForm => EpChoice::ClosedForm,
            EpMethodArg::Sampling => EpChoice::Sampling,
            EpMethodArg::Integration => EpChoice::Integration,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { 0 });
        }
    };
    let Some(config) = cli.config.clone() else {
        eprintln!("error: --config is required");
        return ExitCode::from(exit::CONFIG as u8);
    };
    let threads = match parse_threads(&cli.threads) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    let selection = match cli.command {
        Command::Cvlme => Selection::Only(Stage::Cvlme),
        Command::Anc => Selection::Only(Stage::Anc),
        Command::Lfe => Selection::Only(Stage::Lfe),
        Command::BmsGroup => Selection::Only(Stage::Bms),
        Command::Ep => Selection::Only(Stage::Ep),
        Command::Bma => Selection::Only(Stage::Bma),
        Command::Pipeline => Selection::Everything,
    };
    let opts = RunOptions {
        seed: cli.seed,
        ep_method: cli.ep_method.map(Into::into),
        samples: cli.samples,
        chunk_size: cli.chunk_size,
        timings: cli.timings,
        ep_benchmark: cli.ep_benchmark,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    let code = pool.install(|| run(&config, &cli.out, selection, &opts));
    ExitCode::from(code as u8)
}
