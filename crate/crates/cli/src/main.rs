use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gastopo_core::journal::replay_journal;
use gastopo_core::project_io::{load_project, read_journal, save_project, Project, PLANS_DIR};
use gastopo_core::validation::{audit_topology, compute_statistics, Scope};
use gastopo_core::Error;
use gastopo_server::{AppState, DEFAULT_PORT};
use serde_json::json;

const EXIT_FINDINGS: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "gastopo", version, about = "Gas network topology projects from the command line")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check references and print the topology report.
    Validate { dir: PathBuf },
    /// Print network statistics.
    Stats { dir: PathBuf },
    /// Serve the project over HTTP.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
    /// Write the project in canonical form to another directory.
    Export {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a journal to a project and write the result.
    Replay {
        dir: PathBuf,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}: {err}", err.kind());
            match err {
                Error::ReplayDivergence { .. } => ExitCode::from(EXIT_DIVERGENCE),
                _ => ExitCode::from(EXIT_FINDINGS),
            }
        }
    }
}

fn load(dir: &Path) -> Result<Project, Error> {
    let project = load_project(dir)?;
    for w in &project.warnings {
        eprintln!("warning: {w}");
    }
    Ok(project)
}

fn print(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("output serializes"));
}

fn run(cmd: Cmd) -> Result<ExitCode, Error> {
    match cmd {
        Cmd::Validate { dir } => {
            let project = load(&dir)?;
            let report = audit_topology(&project.dataset, &Scope::All);
            let clean = report.dangling_references.is_empty();
            print(&json!({"report": report, "warnings": project.warnings}));
            Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FINDINGS) })
        }
        Cmd::Stats { dir } => {
            print(&compute_statistics(&load(&dir)?.dataset));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Serve { dir, port, host } => {
            let (state, warnings) = AppState::open(&dir)?;
            for w in warnings {
                tracing::warn!("{w}");
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io(&dir, e))?;
            runtime.block_on(gastopo_server::serve(state, SocketAddr::new(host, port))).map_err(|e| Error::io(&dir, e))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Export { dir, out } => {
            let project = load(&dir)?;
            let manifest = save_project(&project.dataset, &project.journal, &out, Some(&project.plans_dir()))?;
            print(&json!({"root": manifest.root, "files": manifest.files()}));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Replay { dir, journal, out } => {
            let project = load(&dir)?;
            let entries = read_journal(&journal)?;
            let prior = project.journal.len();
            // entries already in the project's own journal must match it exactly
            for (have, given) in project.journal.iter().zip(&entries) {
                if have != given {
                    return Err(Error::ReplayDivergence {
                        seq: given.seq,
                        reason: "entry differs from the project's journal".to_owned(),
                    });
                }
            }
            let pending = entries.get(prior..).unwrap_or_default();
            let editor = replay_journal(project.dataset, project.journal, pending)?;
            let plans = plan_source(&dir, &journal);
            let manifest = save_project(editor.dataset(), editor.journal(), &out, Some(&plans))?;
            print(&json!({"root": manifest.root, "replayed": pending.len(), "files": manifest.files()}));
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Plan images for a replay come from next to the journal when present.
fn plan_source(dir: &Path, journal: &Path) -> PathBuf {
    journal
        .parent()
        .map(|p| p.join(PLANS_DIR))
        .filter(|p| p.is_dir())
        .unwrap_or_else(|| dir.join(PLANS_DIR))
}
