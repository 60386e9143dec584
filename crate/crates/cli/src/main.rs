//! Command-line harness: interactive REPL, one-shot questions, data
//! ingestion with a journaled registry, fixture generation, and the
//! ablation evaluation grid.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use urbanlens_core::agent::prompt::PromptBundle;
use urbanlens_core::agent::provider::{Provider, RemoteConfig, RemoteProvider, ScriptedProvider};
use urbanlens_core::agent::tools::builtin_toolset;
use urbanlens_core::agent::{run_agent, AgentConfig, AgentError, RunOptions, Transcript};
use urbanlens_core::controller::{AlignDefaults, Gazetteer};
use urbanlens_core::harness::eval::{
    ablation_config, render_report_header, run_eval_with, ABLATION_NAMES,
};
use urbanlens_core::harness::fixture::{generate_fixture, FixtureCase};
use urbanlens_core::{Guid, Workspace};

#[derive(Parser)]
#[command(name = "urbanlens", version, about = "Tool-grounded analysis agent for urban change questions")]
struct Cli {
    /// Key-value configuration file (provider endpoint/model, budgets,
    /// thresholds, gazetteer path).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Interactive multi-turn session over ingested data.
    Repl {
        /// Directory of data files to ingest at startup.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "scripted")]
        provider: String,
        /// Scripted-provider transcript file.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Run directory for derived files and the registry journal.
        #[arg(long, default_value = "urbanlens-run")]
        out: PathBuf,
    },
    /// Answer one question and exit.
    Ask {
        query: String,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "scripted")]
        provider: String,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value = "urbanlens-run")]
        out: PathBuf,
    },
    /// Ingest data files into a journaled registry.
    Ingest {
        files: Vec<PathBuf>,
        #[arg(long, default_value = "urbanlens-run")]
        out: PathBuf,
    },
    /// Generate a synthetic fixture case (or all three) with oracle answers
    /// and scripted transcripts.
    Fixture {
        #[arg(long, default_value = "all")]
        case: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay the question bank under an ablation configuration and print
    /// the score table.
    Eval {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value = "all")]
        ablation: String,
        /// Optional report file (delimited text); stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run independent questions concurrently.
        #[arg(long)]
        parallel: bool,
    },
}

enum CliError {
    Usage(String),
    Data(String),
    Provider(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Provider(m) => m,
        }
    }
}

/// Flat `key = value` configuration file; `#` starts a comment.
#[derive(Default)]
struct FileConfig {
    map: BTreeMap<String, String>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self, CliError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for line in content.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileConfig { map })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn get_f64(&self, key: &str, default: f64) -> f64 {
        self.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
    }

    fn get_usize(&self, key: &str, default: usize) -> usize {
        self.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
    }
}

fn agent_config(cfg: &FileConfig, trace_path: Option<PathBuf>) -> AgentConfig {
    AgentConfig {
        max_rounds: cfg.get_usize("agent.max_rounds", 12),
        char_budget: cfg.get_usize("agent.char_budget", 48_000),
        data_dependent: None,
        trace_path,
        preview_rows: cfg.get_usize("agent.preview_rows", 12),
        raw_budget: cfg.get_usize("agent.raw_budget", 4000),
    }
}

/// The prompt bundle with the configured analysis defaults surfaced next to
/// the asset inventory.
fn bundle_with_defaults(cfg: &FileConfig) -> PromptBundle {
    let mut bundle = PromptBundle::default();
    let note = format!(
        "Suggested analysis defaults: eps={}, min_pts={}, cluster size thresholds small_max={}, medium_max={}, poor-quality top fraction={}.",
        cfg.get_f64("thresholds.eps", 0.01),
        cfg.get_usize("thresholds.min_pts", 4),
        cfg.get_usize("thresholds.small_max", 5),
        cfg.get_usize("thresholds.medium_max", 15),
        cfg.get_f64("thresholds.top_fraction", 0.1),
    );
    bundle.prefix = bundle
        .prefix
        .replace("{data_assets}", &format!("{{data_assets}}\n\n{note}"));
    bundle
}

fn gazetteer_from(cfg: &FileConfig) -> Result<Gazetteer, CliError> {
    match cfg.get("gazetteer") {
        Some(path) => Gazetteer::load(Path::new(path))
            .map_err(|e| CliError::Data(format!("gazetteer {path}: {e}"))),
        None => Ok(Gazetteer::default()),
    }
}

fn make_provider(
    kind: &str,
    script: &Option<PathBuf>,
    cfg: &FileConfig,
) -> Result<Box<dyn Provider>, CliError> {
    match kind {
        "scripted" => {
            let path = script.as_ref().ok_or_else(|| {
                CliError::Usage("--provider scripted requires --script <path>".into())
            })?;
            let p = ScriptedProvider::from_file(path)
                .map_err(|e| CliError::Data(format!("script {}: {e}", path.display())))?;
            Ok(Box::new(p))
        }
        "remote" => {
            let endpoint = cfg
                .get("provider.endpoint")
                .ok_or_else(|| CliError::Usage("config lacks provider.endpoint".into()))?
                .to_string();
            let model = cfg
                .get("provider.model")
                .ok_or_else(|| CliError::Usage("config lacks provider.model".into()))?
                .to_string();
            let mut remote = RemoteProvider::new(RemoteConfig {
                endpoint,
                model,
                auth_env: cfg.get("provider.auth_env").unwrap_or("").to_string(),
                temperature: cfg.get_f64("provider.temperature", 0.0),
                timeout_secs: cfg.get_usize("provider.timeout_secs", 60) as u64,
                max_retries: cfg.get_usize("provider.max_retries", 2) as u32,
            })
            .map_err(|e| CliError::Provider(e.to_string()))?;
            if let Some(log) = cfg.get("provider.log") {
                remote = remote.with_log(PathBuf::from(log));
            }
            Ok(Box::new(remote))
        }
        other => Err(CliError::Usage(format!(
            "unknown provider '{other}' (expected scripted or remote)"
        ))),
    }
}

fn ingest_path(ws: &Workspace, path: &Path) -> Result<Vec<Guid>, CliError> {
    let mut out = Vec::new();
    let mut files = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        files.extend(entries);
    } else {
        files.push(path.to_path_buf());
    }
    for f in files {
        let ext = f
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        let res = match ext.as_str() {
            "csv" => urbanlens_core::table::read_table(ws, &f)
                .map(Some)
                .map_err(|e| e.to_string()),
            "shp" | "json" => urbanlens_core::geo::parse_vector(ws, &f)
                .map(Some)
                .map_err(|e| e.to_string()),
            "asc" => urbanlens_core::raster::parse_grid(ws, &f)
                .map(Some)
                .map_err(|e| e.to_string()),
            _ => Ok(None),
        };
        match res {
            Ok(Some(g)) => {
                println!("ingested {} -> {g}", f.display());
                out.push(g);
            }
            Ok(None) => {}
            Err(e) => return Err(CliError::Data(format!("{}: {e}", f.display()))),
        }
    }
    Ok(out)
}

fn open_workspace(out: &Path) -> Result<Workspace, CliError> {
    let journal = out.join("registry.jsonl");
    Workspace::with_journal(out, &journal)
        .map_err(|e| CliError::Data(format!("workspace {}: {e}", out.display())))
}

#[allow(clippy::too_many_arguments)]
fn run_question(
    ws: &Workspace,
    provider: &dyn Provider,
    bundle: &PromptBundle,
    gaz: &Gazetteer,
    transcript: &mut Transcript,
    cfg: &FileConfig,
    data_dir: &Path,
    out: &Path,
    query: &str,
) -> Result<(), CliError> {
    let opts = RunOptions {
        config: agent_config(cfg, Some(out.join("trace.jsonl"))),
        alignment_enabled: true,
        data_dir: data_dir.to_path_buf(),
    };
    match run_agent(
        ws,
        &builtin_toolset(),
        provider,
        bundle,
        gaz,
        &AlignDefaults::default(),
        transcript,
        query,
        &opts,
    ) {
        Ok(answer) => {
            println!("{}", answer.text);
            if !answer.grounded {
                println!("[warning: answer is not grounded in tool observations]");
            }
            for g in &answer.artifacts {
                if let Ok(a) = ws.registry.resolve(*g) {
                    println!("artifact {g} [{}] {}", a.modality, a.uri);
                }
            }
            Ok(())
        }
        Err(AgentError::Provider(e)) => Err(CliError::Provider(e.to_string())),
        Err(e) => Err(CliError::Data(e.to_string())),
    }
}

fn repl(
    ws: &Workspace,
    provider: &dyn Provider,
    bundle: &PromptBundle,
    gaz: &Gazetteer,
    cfg: &FileConfig,
    data_dir: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let mut transcript = Transcript::new(cfg.get_usize("agent.history_window", 8));
    let stdin = std::io::stdin();
    let mut line = String::new();
    loop {
        print!("> ");
        std::io::stdout().flush().ok();
        line.clear();
        if stdin.lock().read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        let input = line.trim();
        if input.is_empty() {
            continue;
        }
        if let Some(rest) = input.strip_prefix(':') {
            let mut parts = rest.split_whitespace();
            match parts.next() {
                Some("quit") | Some("q") => break,
                Some("ingest") => match parts.next() {
                    Some(p) => {
                        if let Err(e) = ingest_path(ws, Path::new(p)) {
                            println!("error: {}", e.message());
                        }
                    }
                    None => println!("usage: :ingest <path>"),
                },
                Some("assets") => {
                    for a in ws.registry.assets() {
                        println!("{} [{}] {} :: {}", a.guid, a.modality, a.uri, a.schema_summary);
                    }
                }
                Some("lineage") => match parts.next().and_then(|g| Guid::parse(g).ok()) {
                    Some(g) => match ws.registry.trace_lineage(g) {
                        Ok(trace) => {
                            for t in trace {
                                let uri = ws.registry.resolve(t).map(|a| a.uri).unwrap_or_default();
                                println!("{t} {uri}");
                            }
                        }
                        Err(e) => println!("error: {e}"),
                    },
                    None => println!("usage: :lineage <guid>"),
                },
                other => println!("unknown command :{}", other.unwrap_or("")),
            }
            continue;
        }
        // Provider failures are printed, not fatal to the session.
        if let Err(e) = run_question(ws, provider, bundle, gaz, &mut transcript, cfg, data_dir, out, input)
        {
            println!("error ({}): {}", e.code(), e.message());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.cmd {
        Cmd::Repl {
            data,
            provider,
            script,
            out,
        } => {
            // Validate the provider before touching the filesystem.
            let p = make_provider(&provider, &script, &cfg)?;
            let ws = open_workspace(&out)?;
            if let Some(d) = &data {
                ingest_path(&ws, d)?;
            }
            let bundle = bundle_with_defaults(&cfg);
            let gaz = gazetteer_from(&cfg)?;
            let data_dir = data.unwrap_or_else(|| PathBuf::from("."));
            repl(&ws, p.as_ref(), &bundle, &gaz, &cfg, &data_dir, &out)
        }
        Cmd::Ask {
            query,
            data,
            provider,
            script,
            out,
        } => {
            let p = make_provider(&provider, &script, &cfg)?;
            let ws = open_workspace(&out)?;
            if let Some(d) = &data {
                ingest_path(&ws, d)?;
            }
            let bundle = bundle_with_defaults(&cfg);
            let gaz = gazetteer_from(&cfg)?;
            let data_dir = data.unwrap_or_else(|| PathBuf::from("."));
            let mut transcript = Transcript::new(8);
            run_question(
                &ws,
                p.as_ref(),
                &bundle,
                &gaz,
                &mut transcript,
                &cfg,
                &data_dir,
                &out,
                &query,
            )
        }
        Cmd::Ingest { files, out } => {
            if files.is_empty() {
                return Err(CliError::Usage("ingest needs at least one file".into()));
            }
            let ws = open_workspace(&out)?;
            for f in &files {
                ingest_path(&ws, f)?;
            }
            Ok(())
        }
        Cmd::Fixture { case, seed, out } => {
            let cases: Vec<FixtureCase> = if case == "all" {
                FixtureCase::all().to_vec()
            } else {
                vec![FixtureCase::parse(&case).ok_or_else(|| {
                    CliError::Usage(format!(
                        "unknown case '{case}' (parks, water, dumpsites, all)"
                    ))
                })?]
            };
            for c in cases {
                let dir = generate_fixture(c, seed, &out)
                    .map_err(|e| CliError::Data(format!("fixture {}: {e}", c.dir_name())))?;
                println!("generated {} (seed {seed})", dir.display());
            }
            Ok(())
        }
        Cmd::Eval {
            fixtures,
            ablation,
            out,
            parallel,
        } => {
            let names: Vec<&str> = if ablation == "all" {
                ABLATION_NAMES.to_vec()
            } else if ABLATION_NAMES.contains(&ablation.as_str()) {
                vec![ABLATION_NAMES
                    .iter()
                    .find(|n| **n == ablation)
                    .copied()
                    .unwrap()]
            } else {
                return Err(CliError::Usage(format!(
                    "unknown ablation '{ablation}' (expected one of {} or all)",
                    ABLATION_NAMES.join(", ")
                )));
            };
            let work = fixtures.join("eval-work");
            let mut lines = vec![render_report_header()];
            for name in names {
                let config = ablation_config(name).expect("known ablation");
                let report = run_eval_with(&fixtures, &config, &work, parallel)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                lines.push(report.render_row());
            }
            let body = lines.join("\n") + "\n";
            match out {
                Some(p) => std::fs::write(&p, &body)
                    .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
                None => print!("{body}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Preserve clap's help/version behaviour but map usage errors to 1.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
