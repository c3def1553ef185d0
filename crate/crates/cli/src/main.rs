//! `threadsmith` command-line front end.
//!
//! Exit codes: 0 success, 1 operation error, 2 usage error.

mod mock_llm;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use threadsmith_core::draft::{export_conversation, lint_draft, DraftConversation, LintConfig};
use threadsmith_core::eval::{build_report, read_judgments, render_report, SessionRecord, WeightScheme};
use threadsmith_core::llm::mock::FixtureTransport;
use threadsmith_core::llm::refine::normalize_tree;
use threadsmith_core::llm::ChatTransport;
use threadsmith_core::synth::{generate_tree, GenerationSpec};
use threadsmith_core::tree::{parse_discussion, ReplyTree};
use threadsmith_service::{build_transport, ServiceConfig};

#[derive(Parser, Debug)]
#[command(name = "threadsmith", version, about = "Reply trees to multi-party conversations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the HTTP API.
    Serve {
        /// TOML file layered over LLMBERJACK_* variables.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Replay completions from this fixture directory.
        #[arg(long)]
        mock: Option<PathBuf>,
    },
    /// Generate a synthetic debate tree from a JSON spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mock: Option<PathBuf>,
    },
    /// Repair a broken discussion file with the model.
    Normalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mock: Option<PathBuf>,
    },
    /// Print soft-rule findings for a draft. Always exits 0 when the files load.
    Lint {
        #[arg(long)]
        draft: PathBuf,
        #[arg(long)]
        tree: PathBuf,
    },
    /// Write the exported conversation document.
    Export {
        #[arg(long)]
        draft: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Export even if the draft is not final.
        #[arg(long)]
        force: bool,
    },
    /// Preference and agreement table from pairwise judgments.
    Eval {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long, default_value = "linear")]
        weights: WeightScheme,
        /// JSON array of session records for the speed lines.
        #[arg(long)]
        sessions: Option<PathBuf>,
    },
    /// OpenAI-compatible completion server backed by a fixture directory.
    MockLlm {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8090")]
        bind: String,
        /// Forward misses to this base URL and record the answers.
        #[arg(long)]
        record_from: Option<String>,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn transport(mock: Option<PathBuf>) -> Arc<dyn ChatTransport> {
    match mock {
        Some(dir) => Arc::new(FixtureTransport::new(dir)),
        None => build_transport(&ServiceConfig::from_env()),
    }
}

fn load_tree(path: &Path) -> Result<ReplyTree> {
    let tree = parse_discussion(&read(path)?).with_context(|| format!("invalid tree {}", path.display()))?;
    Ok(tree.ensure_users())
}

fn load_draft(path: &Path, tree: &ReplyTree) -> Result<DraftConversation> {
    let draft =
        DraftConversation::from_json(&read(path)?).with_context(|| format!("invalid draft {}", path.display()))?;
    draft.validate(tree).with_context(|| format!("draft {} does not fit its tree", path.display()))?;
    Ok(draft)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { config, bind, data_dir, mock } => {
            let mut cfg = ServiceConfig::load(config.as_deref())?;
            if let Some(b) = bind {
                cfg.bind = b;
            }
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            if mock.is_some() {
                cfg.mock_fixtures = mock;
            }
            eprintln!("serving on {} with data in {}", cfg.bind, cfg.data_dir.display());
            runtime()?.block_on(threadsmith_service::serve(cfg))?;
        }
        Command::Generate { spec, out, mock } => {
            let spec = GenerationSpec::from_json(&read(&spec)?)?;
            let tree = generate_tree(transport(mock).as_ref(), &spec)?;
            write_out(out.as_deref(), &tree.to_json())?;
        }
        Command::Normalize { input, out, mock } => {
            let tree = normalize_tree(transport(mock).as_ref(), &read(&input)?)?;
            write_out(out.as_deref(), &tree.to_json())?;
        }
        Command::Lint { draft, tree } => {
            let tree = load_tree(&tree)?;
            let draft = load_draft(&draft, &tree)?;
            for finding in lint_draft(&draft, &tree, &LintConfig::default()) {
                println!("{finding}");
            }
        }
        Command::Export { draft, tree, out, force } => {
            let tree = load_tree(&tree)?;
            let draft = load_draft(&draft, &tree)?;
            write_out(out.as_deref(), &export_conversation(&draft, &tree, force)?)?;
        }
        Command::Eval { judgments, weights, sessions } => {
            let judgments = read_judgments(
                fs::File::open(&judgments).with_context(|| format!("cannot read {}", judgments.display()))?,
            )?;
            let sessions: Vec<SessionRecord> = match sessions {
                Some(p) => serde_json::from_slice(&read(&p)?)
                    .with_context(|| format!("invalid session records in {}", p.display()))?,
                None => Vec::new(),
            };
            print!("{}", render_report(&build_report(&judgments, weights, &sessions)));
        }
        Command::MockLlm { fixtures, bind, record_from } => {
            runtime()?.block_on(mock_llm::serve(fixtures, &bind, record_from))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
