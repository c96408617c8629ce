use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use erag_cli::{serve, AppState};
use erag_core::eval::{self, synth, Qrels};
use erag_core::{Engine, EngineConfig, Profile, SessionStore, Verdict};

#[derive(Parser)]
#[command(
    name = "engine",
    version,
    about = "Hybrid retrieval and grounded answering over enterprise documents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk, embed and index a corpus directory.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Index directory to write.
        #[arg(long, visible_alias = "index")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the ranked candidate pool for a query as JSON lines.
    Query {
        #[arg(long, env = "ENGINE_INDEX", default_value = "index")]
        index: PathBuf,
        #[arg(long, default_value = "advanced", value_parser = parse_profile)]
        profile: Profile,
        #[arg(long)]
        q: String,
    },
    /// Answer a question within a session.
    Ask {
        #[arg(long, env = "ENGINE_INDEX", default_value = "index")]
        index: PathBuf,
        #[arg(long, default_value = "advanced", value_parser = parse_profile)]
        profile: Profile,
        #[arg(long, default_value = "default")]
        session: String,
        #[arg(long)]
        q: String,
        /// Override the stored configuration (for example to use a remote model).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Give a verdict on a turn; `down` may trigger a reformulated retry.
    Feedback {
        #[arg(long, env = "ENGINE_INDEX", default_value = "index")]
        index: PathBuf,
        #[arg(long)]
        session: String,
        #[arg(long)]
        turn: String,
        #[arg(long, value_parser = parse_verdict)]
        verdict: Verdict,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score retrieval per profile against relevance judgments.
    Eval {
        #[arg(long, env = "ENGINE_INDEX", default_value = "index")]
        index: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "naive,advanced", value_parser = parse_profile)]
        profiles: Vec<Profile>,
        #[arg(long, default_value_t = eval::DEFAULT_K)]
        k: usize,
        /// Where to write the JSON report.
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "ENGINE_INDEX", default_value = "index")]
        index: PathBuf,
        #[arg(long, env = "ENGINE_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic benchmark corpus and its judgments.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Table,
    Text,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    Profile::parse(s).ok_or_else(|| format!("unknown profile {s:?}; expected direct_llm, naive or advanced"))
}

fn parse_verdict(s: &str) -> Result<Verdict, String> {
    Verdict::parse(s).ok_or_else(|| format!("verdict must be up or down, got {s:?}"))
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_config(path: Option<&Path>) -> erag_core::Result<Option<EngineConfig>> {
    path.map(EngineConfig::load).transpose()
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Ingest { corpus, out, config } => {
            let config = load_config(config.as_deref())?.unwrap_or_default();
            let engine = Engine::build_from_dir(&corpus, config)?;
            engine.save(&out)?;
            print_json(&engine.manifest())
        }
        Command::Query { index, profile, q } => {
            let engine = Engine::load(&index, None)?;
            for c in engine.ranked(&q, profile)? {
                println!("{}", serde_json::to_string(&c)?);
            }
            Ok(())
        }
        Command::Ask {
            index,
            profile,
            session,
            q,
            config,
        } => {
            let engine = Engine::load(&index, load_config(config.as_deref())?)?;
            let sessions = SessionStore::open(&index)?;
            let answer = engine.answer(&sessions, &session, &q, profile)?;
            for w in &answer.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&answer)
        }
        Command::Feedback {
            index,
            session,
            turn,
            verdict,
            config,
        } => {
            let engine = Engine::load(&index, load_config(config.as_deref())?)?;
            let sessions = SessionStore::open(&index)?;
            print_json(&engine.feedback(&sessions, &session, &turn, verdict)?)
        }
        Command::Eval {
            index,
            qrels,
            profiles,
            k,
            report,
        } => {
            let engine = Engine::load(&index, None)?;
            let qrels = Qrels::load(&qrels)?;
            let result = eval::evaluate_profiles(&engine, &qrels, &profiles, k)?;
            print!("{}", result.render_table());
            result.write_json(&report)?;
            eprintln!("report written to {}", report.display());
            Ok(())
        }
        Command::Serve { index, addr, config } => {
            let state = AppState::open(index, load_config(config.as_deref())?)?;
            tokio::runtime::Runtime::new()?.block_on(serve(Arc::new(state), &addr))?;
            Ok(())
        }
        Command::Synth { kind, seed, out } => {
            let corpus = match kind {
                SynthKind::Table => synth::table_benchmark(seed)?,
                SynthKind::Text => synth::text_benchmark(seed)?,
            };
            corpus.write_to(&out)?;
            eprintln!(
                "wrote {} files and {} judged queries under {}",
                corpus.files.len(),
                corpus.qrels.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
