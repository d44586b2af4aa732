use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use finmem::experiments::{resolve_spec, run, write_outputs, Command};

/// Finite-memory agents on the two-armed bandit hypothesis test.
#[derive(Parser)]
#[command(name = "finmem", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// CCP error rate at the optimal exit probability: closed form, matrix, flow.
    CcpSweep(Common),
    /// Gradient-flow traces per initialization and seed.
    Learn(Common),
    /// Necklace policy against its small-reset bound.
    NecklaceEval(Common),
    /// Longest Gray chains of binary necklaces.
    Gray(Common),
    /// General reward probabilities: formulas vs matrix evaluation.
    Table1(Common),
}

/// Lists are comma separated. Flags override values from `--config`.
#[derive(Args, Default)]
struct Common {
    /// Arm contrast(s) mu.
    #[arg(long)]
    mu: Option<String>,
    /// Reset probability (or probabilities) r.
    #[arg(long)]
    r: Option<String>,
    /// RAM memory sizes.
    #[arg(long = "M")]
    ram: Option<String>,
    /// Memento window lengths.
    #[arg(long = "m")]
    memento: Option<String>,
    /// CCP exit probabilities (default: optimal).
    #[arg(long)]
    eps: Option<String>,
    /// Necklace end-exit probabilities.
    #[arg(long)]
    eps0: Option<String>,
    /// Necklace interior-exit probabilities.
    #[arg(long)]
    eps1: Option<String>,
    /// Reward-probability pairs, `kA:kB,...`.
    #[arg(long)]
    k: Option<String>,
    /// Seeds, `a..b` or a list.
    #[arg(long)]
    seeds: Option<String>,
    /// Accepted flow steps, or search nodes for `gray`.
    #[arg(long)]
    budget: Option<String>,
    /// Power-method tolerance, or gradient tolerance for `learn`.
    #[arg(long)]
    tol: Option<String>,
    /// Stationary solver.
    #[arg(long, value_parser = ["power", "solve"])]
    method: Option<String>,
    /// Initialization schemes for `learn`.
    #[arg(long)]
    schemes: Option<String>,
    /// Add flow-refined rows to `ccp-sweep`.
    #[arg(long)]
    flow: bool,
    /// Uniform mixing weight of near-policy initializations.
    #[arg(long)]
    delta: Option<String>,
    /// CSV output path; the JSON sidecar goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let pairs = [
            ("mu", &self.mu),
            ("r", &self.r),
            ("M", &self.ram),
            ("m", &self.memento),
            ("eps", &self.eps),
            ("eps0", &self.eps0),
            ("eps1", &self.eps1),
            ("k", &self.k),
            ("seeds", &self.seeds),
            ("budget", &self.budget),
            ("tol", &self.tol),
            ("method", &self.method),
            ("schemes", &self.schemes),
            ("delta", &self.delta),
        ];
        for (key, val) in pairs {
            if let Some(v) = val {
                map.insert(key.to_string(), v.clone());
            }
        }
        if self.flow {
            map.insert("flow".into(), "true".into());
        }
        if let Some(out) = &self.out {
            map.insert("out".into(), out.display().to_string());
        }
        map
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let (command, common) = match cli.command {
        Cmd::CcpSweep(c) => (Command::CcpSweep, c),
        Cmd::Learn(c) => (Command::Learn, c),
        Cmd::NecklaceEval(c) => (Command::NecklaceEval, c),
        Cmd::Gray(c) => (Command::Gray, c),
        Cmd::Table1(c) => (Command::Table1, c),
    };
    let spec = resolve_spec(command, common.config.as_deref(), &common.overrides())
        .with_context(|| format!("resolving {command} configuration"))?;
    let output = run(&spec).with_context(|| format!("running {command}"))?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    for path in write_outputs(&spec, &output)? {
        println!("{}", path.display());
    }
    Ok(())
}
