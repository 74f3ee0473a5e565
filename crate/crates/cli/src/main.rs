use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use memaudit::gateway::ReplayMode;
use memaudit::report::{run_audit, AuditConfig, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Recall,
    Cutoff,
    Mask,
    Embed,
    Power,
    TheoryDemo,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Recall => Subcommand::Recall,
            Command::Cutoff => Subcommand::Cutoff,
            Command::Mask => Subcommand::Mask,
            Command::Embed => Subcommand::Embed,
            Command::Power => Subcommand::Power,
            Command::TheoryDemo => Subcommand::TheoryDemo,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Live,
    Replay,
    StrictReplay,
}

impl From<Mode> for ReplayMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Live => ReplayMode::Live,
            Mode::Replay => ReplayMode::Replay,
            Mode::StrictReplay => ReplayMode::StrictReplay,
        }
    }
}

/// Audit language models for memorized economic data.
#[derive(Debug, Parser)]
#[command(name = "memaudit", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML audit configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hard cap on provider requests for this run.
    #[arg(long)]
    max_requests: Option<usize>,
}

fn run(cli: Cli) -> Result<bool, String> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| format!("{}: {e}", cli.config.display()))?;
    let base = cli.config.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut cfg = AuditConfig::from_toml(&text, &base).map_err(|e| e.to_string())?;
    if let Some(m) = cli.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(n) = cli.max_requests {
        cfg.provider.max_requests = Some(n);
    }
    let out = cli.out.unwrap_or_else(|| cfg.resolve(&cfg.output_dir));
    let run = run_audit(&cfg, cli.command.into()).map_err(|e| e.to_string())?;
    let written = run.write(&out).map_err(|e| e.to_string())?;
    log::info!("wrote {} files under {}", written.len(), out.display());
    if let Some(stop) = &run.bundle.hard_stop {
        eprintln!("memaudit: run stopped early: {stop}; partial bundle in {}", out.display());
        return Ok(false);
    }
    println!("{}", out.join("report.md").display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("memaudit: {e}");
            ExitCode::from(2)
        }
    }
}
