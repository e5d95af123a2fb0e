use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use harness_cli::commands;
use harness_cli::prompt::PromptResponder;
use harness_cli::server::{self, AppState, StoreWaiter};
use harness_cli::workspace::default_store_dir;
use harness_cli::{CliError, Workspace, EXIT_FAILURE};
use harness_core::pipeline::{GateResponder, GateVerdict, LeavePending, RunOptions, ScriptedResponder};
use harness_core::stage::StageId;
use harness_core::store::Store;

#[derive(Parser)]
#[command(name = "harness", version, about = "Run and steer a multi-stage research pipeline")]
struct Cli {
    /// Corpus directory: skills/, agents/, pipeline.yaml, harness.toml.
    #[arg(long, global = true, env = "HARNESS_CORPUS", default_value = ".")]
    corpus: PathBuf,
    /// Store root. Defaults to <corpus>/state.
    #[arg(long, global = true, env = "HARNESS_STORE")]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GateMode {
    /// Stop at the first undecided gate (exit 3).
    Pending,
    /// Ask on the terminal.
    Prompt,
    /// Approve every gate.
    Approve,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline from the first step.
    Run {
        #[arg(long, value_enum, default_value = "pending")]
        gates: GateMode,
        /// Stop as a crash would once this stage finishes.
        #[arg(long, hide = true)]
        kill_after: Option<StageId>,
    },
    /// Continue from the handoff.
    Resume {
        #[arg(long, value_enum, default_value = "pending")]
        gates: GateMode,
    },
    /// Pipeline position, stage statuses and pending gates.
    Status {
        #[arg(long)]
        json: bool,
    },
    /// List or decide human gates.
    Gates {
        #[command(subcommand)]
        action: GateAction,
    },
    /// Lint a skill or agent file, or a whole corpus directory.
    Lint {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Dependency graph output.
    Graph {
        #[command(subcommand)]
        action: GraphAction,
    },
    /// Per-skill cost records.
    Telemetry {
        #[command(subcommand)]
        action: TelemetryAction,
    },
    /// Audit log entries.
    Audit,
    /// Serve the HTTP control surface.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: String,
        /// Also drive the pipeline, waiting on gates for decisions.
        #[arg(long)]
        run: bool,
        /// With --run, continue from the handoff instead of starting over.
        #[arg(long, requires = "run")]
        resume: bool,
    },
}

#[derive(Subcommand)]
enum GateAction {
    List {
        #[arg(long)]
        pending: bool,
        #[arg(long)]
        json: bool,
    },
    Approve {
        id: String,
        #[arg(long)]
        note: Option<String>,
    },
    Reject {
        id: String,
        #[arg(long)]
        note: Option<String>,
    },
    Modify {
        id: String,
        #[arg(long)]
        note: Option<String>,
    },
}

#[derive(Subcommand)]
enum GraphAction {
    Export {
        #[arg(long, default_value = "dot", value_parser = ["dot", "json"])]
        format: String,
    },
}

#[derive(Subcommand)]
enum TelemetryAction {
    Show {
        #[arg(long)]
        json: bool,
    },
}

fn responder(mode: GateMode) -> Box<dyn GateResponder> {
    match mode {
        GateMode::Pending => Box::new(LeavePending),
        GateMode::Prompt => Box::new(PromptResponder::new(std::io::stdin().lock(), std::io::stderr())),
        GateMode::Approve => Box::new(ScriptedResponder::approve_all()),
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let store_dir = cli.store.clone().unwrap_or_else(|| default_store_dir(&cli.corpus));
    let workspace = || Workspace::open(&cli.corpus, &store_dir);
    let store = || Store::open(&store_dir);
    match cli.command {
        Command::Run { gates, kill_after } => {
            let options = RunOptions {
                kill_after_stage: kill_after,
                session_id: None,
            };
            commands::run(&workspace()?, responder(gates).as_mut(), options, out)
        }
        Command::Resume { gates } => commands::resume_run(&workspace()?, responder(gates).as_mut(), RunOptions::default(), out),
        Command::Status { json } => commands::status(&workspace()?, json, out),
        Command::Gates { action } => match action {
            GateAction::List { pending, json } => commands::gates_list(&store()?, pending, json, out),
            GateAction::Approve { id, note } => commands::gates_decide(&store()?, &id, GateVerdict::Approve, note.as_deref(), out),
            GateAction::Reject { id, note } => commands::gates_decide(&store()?, &id, GateVerdict::Reject, note.as_deref(), out),
            GateAction::Modify { id, note } => commands::gates_decide(&store()?, &id, GateVerdict::Modify, note.as_deref(), out),
        },
        Command::Lint { path, json } => commands::lint(&path, json, out),
        Command::Graph {
            action: GraphAction::Export { format },
        } => commands::graph_export(&workspace()?, &format, out),
        Command::Telemetry {
            action: TelemetryAction::Show { json },
        } => commands::telemetry_show(&store()?, json, out),
        Command::Audit => commands::audit_show(&store()?, out),
        Command::Serve { addr, run, resume } => serve(workspace()?, &addr, run, resume),
    }
}

fn serve(ws: Workspace, addr: &str, run: bool, resume: bool) -> Result<i32, CliError> {
    let state = AppState::new(ws.store.clone(), ws.corpus.clone());
    if run {
        let poll = state.poll;
        std::thread::spawn(move || {
            let mut waiter = StoreWaiter {
                store: ws.store.clone(),
                poll,
            };
            let mut sink = std::io::stderr();
            let result = if resume {
                commands::resume_run(&ws, &mut waiter, RunOptions::default(), &mut sink)
            } else {
                commands::run(&ws, &mut waiter, RunOptions::default(), &mut sink)
            };
            if let Err(e) = result {
                tracing::error!("pipeline: {e}");
            }
        });
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on {}", listener.local_addr()?);
        server::serve(listener, state).await
    })?;
    Ok(0)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let code = match execute(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    };
    let _ = stdout.flush();
    ExitCode::from(code as u8)
}
