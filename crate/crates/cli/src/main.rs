use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use osc_core::law::parse_law;
use osc_core::sim::{check, run, RunOptions, Scenario, Suite, Trace, Transport};

#[derive(Parser)]
#[command(name = "osc", about = "Run and check law-governed community scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Sim,
    Socket,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, optionally write its trace, and check it.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sim")]
        transport: TransportArg,
        /// Comma-separated suite names, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Check a trace file.
    Check {
        trace: PathBuf,
        /// Comma-separated suite names, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Print a law in canonical form followed by its hash.
    Fmt { law: PathBuf },
}

fn suites(list: &str) -> Result<Vec<Suite>> {
    if list == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    list.split(',')
        .map(|s| {
            let s = s.trim();
            Suite::from_name(s).with_context(|| {
                let known: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
                format!("unknown suite `{s}` (known: {})", known.join(", "))
            })
        })
        .collect()
}

fn report(trace: &Trace, list: &str) -> Result<bool> {
    let r = check(trace, &suites(list)?);
    print!("{r}");
    Ok(r.passed())
}

fn run_cmd(path: &Path, seed: Option<u64>, out: Option<&Path>, transport: TransportArg, suite: &str) -> Result<bool> {
    let scenario = Scenario::load(path)?;
    let opts = RunOptions {
        seed,
        transport: match transport {
            TransportArg::Sim => Transport::Sim,
            TransportArg::Socket => Transport::Socket,
        },
        base_dir: path.parent().map(Path::to_path_buf),
    };
    let net = run(&scenario, &opts)?;
    let trace = net.into_trace();
    if let Some(out) = out {
        fs::write(out, trace.to_text()).with_context(|| format!("writing {}", out.display()))?;
    }
    eprintln!("{} trace entries", trace.len());
    report(&trace, suite)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            scenario,
            seed,
            trace,
            transport,
            suite,
        } => run_cmd(scenario, *seed, trace.as_deref(), *transport, suite),
        Command::Check { trace, suite } => fs::read_to_string(trace)
            .with_context(|| format!("reading {}", trace.display()))
            .and_then(|text| Ok(Trace::parse(&text)?))
            .and_then(|t| report(&t, suite)),
        Command::Fmt { law } => fmt_law(law).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn fmt_law(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let law = match parse_law(&text) {
        Ok(l) => l,
        Err(e) => bail!("{}: {e}", path.display()),
    };
    print!("{}", law.canonical_text());
    eprintln!("hash {}", law.hash().to_hex());
    Ok(())
}
