//! The `szz` command line.
//!
//! Machine output goes to stdout (JSON, or JSON Lines for `mine`); human
//! diagnostics go to stderr. Exit codes: 0 success, 1 usage or
//! configuration error, 2 data or repository error, 3 model provider error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use chrono::NaiveDate;
use clap::{CommandFactory, Parser, Subcommand};
use serde::Serialize;
use szz_core::config::Config;
use szz_core::error::{ConfigError, EvalError, LlmError, PipelineError, RepoError};
use szz_core::eval::{self, Algorithm, EvalOptions, MineMode};
use szz_core::llm::{Gateway, Mode};
use szz_core::Repo;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "szz", version, about = "Identify bug-inducing commits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the commands that may call a model.
#[derive(Debug, clap::Args)]
struct LlmArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides llm.mode.
    #[arg(long, value_parser = parse_mode)]
    llm_mode: Option<Mode>,
    /// Overrides llm.cassette_dir.
    #[arg(long)]
    cassette_dir: Option<PathBuf>,
    /// Overrides llm.script.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Overrides pipeline.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the origin of one line as JSON.
    Trace {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        rev: String,
        #[arg(long)]
        file: String,
        /// 1-based line number.
        #[arg(long)]
        line: usize,
    },
    /// Predict the bug-inducing commits of one fix.
    Run {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        fix: String,
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Algorithm,
        #[command(flatten)]
        llm: LlmArgs,
        /// Write the prediction here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate an algorithm on a JSON Lines dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory holding one clone per dataset repository. Overrides
        /// paths.repos_dir.
        #[arg(long)]
        repos_dir: Option<PathBuf>,
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Overrides pipeline.workers.
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        llm: LlmArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List fix commits as JSON Lines.
    Mine {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long, value_parser = parse_mine_mode)]
        mode: MineMode,
        /// Unix seconds or a YYYY-MM-DD date (UTC).
        #[arg(long, value_parser = parse_since)]
        since: Option<i64>,
    },
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn parse_mine_mode(s: &str) -> Result<MineMode, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown mode {s:?} (live, record, replay, scripted)"))
}

fn parse_since(s: &str) -> Result<i64, String> {
    if let Ok(n) = s.parse::<i64>() {
        return Ok(n);
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp())
        .map_err(|_| format!("expected Unix seconds or YYYY-MM-DD, got {s:?}"))
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Failure { code, message: message.to_string() }
    }
}

impl From<RepoError> for Failure {
    fn from(e: RepoError) -> Self {
        Failure::new(EXIT_DATA, e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_USAGE, e)
    }
}

impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        Failure::new(EXIT_PROVIDER, e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Repo(e) => e.into(),
            other => Failure::new(EXIT_PROVIDER, other),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline(p) => p.into(),
            other => Failure::new(EXIT_DATA, other),
        }
    }
}

/// Parses `argv` (program name first) and runs the command. `cancel` is
/// polled by `eval` between entries.
pub fn dispatch_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write, cancel: Option<&AtomicBool>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => return usage_error(argv, e, out, err),
    };
    match execute(cli.command, out, err, cancel) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// [`dispatch_with`] on the process's stdout and stderr.
pub fn dispatch(argv: &[String]) -> i32 {
    dispatch_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock(), None)
}

fn usage_error(argv: &[String], e: clap::Error, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    use clap::error::ErrorKind;
    if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        let _ = write!(out, "{e}");
        return EXIT_OK;
    }
    let _ = write!(err, "{}", e.render());
    let mut cmd = Cli::command();
    let sub = argv.get(1).and_then(|name| cmd.find_subcommand_mut(name));
    let help = match sub {
        Some(s) => s.render_help(),
        None => cmd.render_help(),
    };
    let _ = write!(err, "\n{help}");
    EXIT_USAGE
}

fn load_config(args: &LlmArgs) -> Result<Config, Failure> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(m) = args.llm_mode {
        cfg.llm.mode = m;
    }
    if let Some(d) = &args.cassette_dir {
        cfg.llm.cassette_dir = Some(d.clone());
    }
    if let Some(s) = &args.script {
        cfg.llm.script = Some(s.clone());
    }
    if let Some(s) = args.seed {
        cfg.pipeline.seed = s;
    }
    Ok(cfg)
}

/// The gateway for `algorithm`; classic variants never call it.
fn gateway_for(cfg: &Config, algorithm: Algorithm) -> Result<Gateway, Failure> {
    if !algorithm.uses_llm() {
        return Ok(Gateway::new(Mode::Scripted));
    }
    cfg.validate()?;
    Ok(cfg.llm.gateway()?)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

/// Writes through a temporary file in the target directory and a rename.
fn write_atomic(path: &Path, body: &str) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| Failure::new(EXIT_DATA, format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(body.as_bytes()).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn emit(body: &str, target: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    match target {
        Some(p) => write_atomic(p, body),
        None => out
            .write_all(body.as_bytes())
            .map_err(|e| Failure::new(EXIT_DATA, format!("stdout: {e}"))),
    }
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write, cancel: Option<&AtomicBool>) -> Result<(), Failure> {
    match cmd {
        Command::Trace { repo, rev, file, line } => {
            let repo = Repo::open(&repo)?;
            let rev = repo.resolve_commit(&rev)?.id;
            let origin = repo.trace_line(&rev, &file, line)?;
            emit(&to_json(&origin), None, out)
        }
        Command::Run { repo, fix, algorithm, llm, out: target } => {
            let cfg = load_config(&llm)?;
            let gateway = gateway_for(&cfg, algorithm)?;
            let repo = Repo::open(&repo)?;
            let fix = repo.resolve_commit(&fix)?.id;
            let prediction = eval::predict(&repo, &fix, algorithm, &cfg, &gateway)?;
            for d in &prediction.diagnostics {
                log::info!("{d}");
            }
            emit(&to_json(&prediction), target.as_deref(), out)
        }
        Command::Eval { dataset, repos_dir, algorithm, repeats, workers, llm, out: target } => {
            if repeats == 0 {
                return Err(Failure::new(EXIT_USAGE, "--repeats must be at least 1"));
            }
            let mut cfg = load_config(&llm)?;
            if let Some(w) = workers {
                cfg.pipeline.workers = w;
            }
            let repos_dir = repos_dir
                .or_else(|| cfg.paths.repos_dir.clone())
                .ok_or_else(|| Failure::new(EXIT_USAGE, "--repos-dir or paths.repos_dir is required"))?;
            let gateway = gateway_for(&cfg, algorithm)?;
            let entries = eval::load_dataset(&dataset)?;
            let opts = EvalOptions { algorithm, repeats, workers: cfg.pipeline.workers };
            let report = eval::run_eval(&entries, &repos_dir, &cfg, &gateway, &opts, cancel)?;
            for s in &report.skipped {
                let _ = writeln!(err, "skipped: {s}");
            }
            if report.interrupted {
                let _ = writeln!(err, "interrupted: report covers {} of {} entries", report.evaluated, report.entries);
            }
            emit(&to_json(&report), target.as_deref(), out)
        }
        Command::Mine { repo, mode, since } => {
            let repo = Repo::open(&repo)?;
            let mined = eval::mine_fixes(&repo, mode, since)?;
            for d in &mined.diagnostics {
                let _ = writeln!(err, "{d}");
            }
            let mut body = String::new();
            for e in &mined.entries {
                body.push_str(&serde_json::to_string(e).expect("entries serialize"));
                body.push('\n');
            }
            emit(&body, None, out)
        }
    }
}
