//! Question bank, ablation configurations, answer scoring, and the
//! evaluation grid.
//!
//! Each question replays an authored transcript through the real agent loop
//! under one ablation configuration. Disabled capabilities fail mechanically
//! (unknown tools, broken alias chains, the grounding flag), so the score
//! table reflects what the configuration can actually do, not what the
//! transcript claims.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::provider::ScriptedProvider;
use crate::agent::tools::{toolset_for_groups, ToolGroup};
use crate::agent::{run_agent, AgentConfig, RunOptions, Transcript, TranscriptTurn};
use crate::asset::Modality;
use crate::controller::{AgentAnswer, AlignDefaults, AnalysisLevel, Gazetteer};
use crate::util::extract_numbers;
use crate::workspace::Workspace;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumberCheck {
    pub value: f64,
    pub rel_tol: f64,
}

/// Machine-checkable oracle for one question.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(default)]
    pub numbers: Vec<NumberCheck>,
    #[serde(default)]
    pub substrings: Vec<String>,
    /// Required artifact kind; currently only "image".
    #[serde(default)]
    pub artifact_kind: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionCase {
    pub id: String,
    pub case_name: String,
    pub level: AnalysisLevel,
    pub subtype: String,
    pub prompt: String,
    pub oracle: OracleSpec,
}

/// One agent variant with specific capabilities disabled.
#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub name: &'static str,
    pub data_ingested: bool,
    pub toolkit: Vec<ToolGroup>,
    pub alignment_enabled: bool,
}

pub const ABLATION_NAMES: [&str; 5] = [
    "standalone",
    "no_alignment",
    "data_only",
    "single_modality",
    "full",
];

pub fn ablation_config(name: &str) -> Option<AblationConfig> {
    use ToolGroup::*;
    Some(match name {
        // No data, no tools: parametric knowledge only.
        "standalone" => AblationConfig {
            name: "standalone",
            data_ingested: false,
            toolkit: vec![],
            alignment_enabled: true,
        },
        // Full toolkit, but demand alignment, modality selection, and
        // derived-asset tracking are off.
        "no_alignment" => AblationConfig {
            name: "no_alignment",
            data_ingested: true,
            toolkit: vec![Tabular, Vector, Raster, Analytics, Viz],
            alignment_enabled: false,
        },
        // Data present, no structured tools; only raw excerpting remains.
        "data_only" => AblationConfig {
            name: "data_only",
            data_ingested: true,
            toolkit: vec![Data],
            alignment_enabled: true,
        },
        // Table tools only.
        "single_modality" => AblationConfig {
            name: "single_modality",
            data_ingested: true,
            toolkit: vec![Tabular],
            alignment_enabled: true,
        },
        "full" => AblationConfig {
            name: "full",
            data_ingested: true,
            toolkit: vec![Tabular, Vector, Raster, Analytics, Viz],
            alignment_enabled: true,
        },
        _ => return None,
    })
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing question bank: {0}")]
    MissingQuestions(PathBuf),
    #[error("missing transcript for question {0}")]
    MissingTranscript(String),
    #[error("unknown ablation '{0}'")]
    UnknownAblation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("question bank malformed: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub pass: bool,
    pub diagnostics: Vec<String>,
}

/// Score one answer against its oracle. Numeric and substring checks run on
/// the model's own final text (pre-aggregation); artifact checks run on the
/// resolved artifact list.
pub fn score_answer(
    ws: &Workspace,
    answer: &AgentAnswer,
    turn: &TranscriptTurn,
    oracle: &OracleSpec,
) -> ScoreOutcome {
    let mut diags = Vec::new();
    if !turn.flags.complete {
        diags.push("incomplete: no final answer".to_string());
    }
    if !turn.flags.grounded {
        diags.push("ungrounded: answer not backed by tool observations".to_string());
    }
    if !turn.flags.filenames_ok {
        diags.push("filename fidelity violated".to_string());
    }
    let tokens = extract_numbers(&turn.final_text);
    for nc in &oracle.numbers {
        let hit = tokens.iter().any(|t| {
            let diff = (t.value - nc.value).abs();
            diff <= nc.rel_tol || diff <= nc.rel_tol * nc.value.abs().max(1.0)
        });
        if !hit {
            diags.push(format!("missing number {} (tol {})", nc.value, nc.rel_tol));
        }
    }
    let lower = turn.final_text.to_lowercase();
    for ss in &oracle.substrings {
        if !lower.contains(&ss.to_lowercase()) {
            diags.push(format!("missing substring '{ss}'"));
        }
    }
    if let Some(kind) = &oracle.artifact_kind {
        if kind == "image" {
            let ok = answer.artifacts.iter().any(|g| {
                ws.registry
                    .resolve(*g)
                    .map(|a| a.modality == Modality::Image)
                    .unwrap_or(false)
                    && ws.registry.traces_to_root(*g).unwrap_or(false)
            });
            if !ok {
                diags.push("MissingArtifact: no registered image asset with root lineage".into());
            }
        }
    }
    ScoreOutcome {
        pass: diags.is_empty(),
        diagnostics: diags,
    }
}

/// Ingest every data file under a fixture data directory in sorted order.
/// Sibling files (.dbf, .legend) ride along with their primaries.
pub fn ingest_data_dir(ws: &Workspace, data_dir: &Path) -> std::io::Result<usize> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    files.sort();
    let mut count = 0;
    for f in files {
        let ext = f
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        let ok = match ext.as_str() {
            "csv" => crate::table::read_table(ws, &f).map(|_| true).map_err(|e| e.to_string()),
            "shp" | "json" => crate::geo::parse_vector(ws, &f).map(|_| true).map_err(|e| e.to_string()),
            "asc" => crate::raster::parse_grid(ws, &f).map(|_| true).map_err(|e| e.to_string()),
            _ => Ok(false),
        };
        match ok {
            Ok(true) => count += 1,
            Ok(false) => {}
            Err(e) => {
                return Err(std::io::Error::other(format!(
                    "failed to ingest {}: {e}",
                    f.display()
                )))
            }
        }
    }
    Ok(count)
}

pub fn load_questions(case_dir: &Path) -> Result<Vec<QuestionCase>, EvalError> {
    let path = case_dir.join("questions.json");
    if !path.exists() {
        return Err(EvalError::MissingQuestions(path));
    }
    let content = std::fs::read_to_string(&path)?;
    Ok(serde_json::from_str(&content)?)
}

#[derive(Debug, Clone)]
pub struct QuestionResult {
    pub id: String,
    pub level: AnalysisLevel,
    pub pass: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub ablation: String,
    pub results: Vec<QuestionResult>,
}

impl EvalReport {
    pub fn tally(&self, level: AnalysisLevel) -> (usize, usize) {
        let of_level: Vec<&QuestionResult> =
            self.results.iter().filter(|r| r.level == level).collect();
        (
            of_level.iter().filter(|r| r.pass).count(),
            of_level.len(),
        )
    }

    pub fn overall(&self) -> (usize, usize) {
        (
            self.results.iter().filter(|r| r.pass).count(),
            self.results.len(),
        )
    }

    /// One delimited row: ablation, what, where, why, overall.
    pub fn render_row(&self) -> String {
        let (aw, tw) = self.tally(AnalysisLevel::What);
        let (ah, th) = self.tally(AnalysisLevel::Where);
        let (ay, ty) = self.tally(AnalysisLevel::Why);
        let (ao, to) = self.overall();
        format!("{}\t{aw}/{tw}\t{ah}/{th}\t{ay}/{ty}\t{ao}/{to}", self.ablation)
    }
}

pub fn render_report_header() -> String {
    "agent\twhat\twhere\twhy\toverall".to_string()
}

/// Find the transcript for a question under an ablation: a per-ablation
/// override when present, else the full transcript.
fn transcript_path(case_dir: &Path, ablation: &str, qid: &str) -> Option<PathBuf> {
    let specialized = case_dir.join("transcripts").join(ablation).join(format!("{qid}.txt"));
    if specialized.exists() {
        return Some(specialized);
    }
    let full = case_dir.join("transcripts").join("full").join(format!("{qid}.txt"));
    full.exists().then_some(full)
}

struct QuestionJob {
    data_dir: PathBuf,
    transcript: PathBuf,
    question: QuestionCase,
}

fn run_one(job: &QuestionJob, ablation: &AblationConfig, work_dir: &Path) -> QuestionResult {
    let q = &job.question;
    let fail = |msg: String| QuestionResult {
        id: q.id.clone(),
        level: q.level,
        pass: false,
        diagnostics: vec![msg],
    };
    let provider = match ScriptedProvider::from_file(&job.transcript) {
        Ok(p) => p,
        Err(e) => return fail(format!("transcript: {e}")),
    };
    let run_dir = work_dir.join(ablation.name).join(&q.id);
    let ws = match Workspace::new(&run_dir) {
        Ok(w) => w,
        Err(e) => return fail(format!("workspace: {e}")),
    };
    if ablation.data_ingested {
        if let Err(e) = ingest_data_dir(&ws, &job.data_dir) {
            return fail(format!("ingest: {e}"));
        }
    }
    let tool_set = toolset_for_groups(&ablation.toolkit);
    let mut transcript = Transcript::new(8);
    let opts = RunOptions {
        config: AgentConfig {
            data_dependent: Some(true),
            ..AgentConfig::default()
        },
        alignment_enabled: ablation.alignment_enabled,
        data_dir: job.data_dir.clone(),
    };
    let outcome = run_agent(
        &ws,
        &tool_set,
        &provider,
        &crate::agent::prompt::PromptBundle::default(),
        &Gazetteer::default(),
        &AlignDefaults::default(),
        &mut transcript,
        &q.prompt,
        &opts,
    );
    match (outcome, transcript.turns.last()) {
        (Ok(answer), Some(turn)) => {
            let score = score_answer(&ws, &answer, turn, &q.oracle);
            QuestionResult {
                id: q.id.clone(),
                level: q.level,
                pass: score.pass,
                diagnostics: score.diagnostics,
            }
        }
        (Err(e), _) => fail(format!("agent error: {e}")),
        (Ok(_), None) => fail("no transcript turn recorded".into()),
    }
}

/// Run every question of every case directory under `fixture_root` with one
/// ablation configuration, sequentially. Each question gets a fresh
/// workspace under `work_dir`.
pub fn run_eval(
    fixture_root: &Path,
    ablation: &AblationConfig,
    work_dir: &Path,
) -> Result<EvalReport, EvalError> {
    run_eval_with(fixture_root, ablation, work_dir, false)
}

/// As [`run_eval`], with an opt-in parallel mode: independent questions run
/// concurrently, each against its own workspace.
pub fn run_eval_with(
    fixture_root: &Path,
    ablation: &AblationConfig,
    work_dir: &Path,
    parallel: bool,
) -> Result<EvalReport, EvalError> {
    let mut case_dirs: Vec<PathBuf> = std::fs::read_dir(fixture_root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("questions.json").exists())
        .collect();
    case_dirs.sort();
    if case_dirs.is_empty() {
        return Err(EvalError::MissingQuestions(fixture_root.join("*")));
    }
    let mut jobs = Vec::new();
    for case_dir in &case_dirs {
        let questions = load_questions(case_dir)?;
        let data_dir = case_dir.join("data");
        for q in questions {
            let transcript = transcript_path(case_dir, ablation.name, &q.id)
                .ok_or_else(|| EvalError::MissingTranscript(q.id.clone()))?;
            jobs.push(QuestionJob {
                data_dir: data_dir.clone(),
                transcript,
                question: q,
            });
        }
    }
    let results: Vec<QuestionResult> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|job| scope.spawn(move || run_one(job, ablation, work_dir)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("eval worker"))
                .collect()
        })
    } else {
        jobs.iter().map(|job| run_one(job, ablation, work_dir)).collect()
    };
    Ok(EvalReport {
        ablation: ablation.name.to_string(),
        results,
    })
}
