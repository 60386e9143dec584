//! The multi-round agent loop: assemble prompt, obtain a completion, parse a
//! step, dispatch the tool, fold the observation back in, and stop on a
//! final answer or the round limit. Tool failures become observations so the
//! model can recover; they never crash the loop.

pub mod parser;
pub mod prompt;
pub mod provider;
pub mod tools;

use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;
use thiserror::Error;

use crate::controller::{
    aggregate_results, align_demand, filenames_resolve, numerals_grounded, select_modalities,
    AgentAnswer, AlignDefaults, ControllerError, Gazetteer, SubResult,
};
use crate::workspace::Workspace;
use crate::Guid;

use parser::{parse_step, render_step, AgentStep, ParsedStep};
use prompt::{assemble_prompt, AssembledPrompt, PromptBundle, PromptError};
use provider::{Provider, ProviderError};
use tools::{execute_tool, ToolRuntime, ToolSet};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// One executed tool round as recorded in the transcript.
#[derive(Debug, Clone)]
pub struct ExecutedStep {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    pub observation: String,
    pub success: bool,
    pub duration_ms: u64,
    pub artifacts: Vec<Guid>,
}

#[derive(Debug, Clone, Default)]
pub struct TurnFlags {
    pub grounded: bool,
    pub complete: bool,
    pub filenames_ok: bool,
    pub note: Option<String>,
}

/// One (query, steps, answer) unit of the conversation record.
#[derive(Debug, Clone)]
pub struct TranscriptTurn {
    pub query: String,
    pub steps: Vec<ExecutedStep>,
    /// The model's own final answer text, before aggregation.
    pub final_text: String,
    /// The aggregated answer as returned to the user.
    pub answer_text: String,
    pub flags: TurnFlags,
}

/// Ordered multi-round record, bounded by a window; eviction drops the
/// oldest whole turns only.
#[derive(Debug, Default)]
pub struct Transcript {
    pub turns: Vec<TranscriptTurn>,
    pub window: usize,
}

impl Transcript {
    pub fn new(window: usize) -> Self {
        Transcript {
            turns: Vec::new(),
            window,
        }
    }

    pub fn push(&mut self, turn: TranscriptTurn) {
        self.turns.push(turn);
        while self.window > 0 && self.turns.len() > self.window {
            self.turns.remove(0);
        }
    }

    pub fn evict_oldest(&mut self) -> bool {
        if self.turns.is_empty() {
            false
        } else {
            self.turns.remove(0);
            true
        }
    }

    pub fn render_history(&self) -> String {
        let mut out = String::new();
        for t in &self.turns {
            out.push_str(&format!("Human: {}\nAssistant: {}\n", t.query, t.answer_text));
        }
        if out.is_empty() {
            out.push_str("(none)");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub max_rounds: usize,
    pub char_budget: usize,
    /// None: treat queries as data-dependent whenever assets are registered.
    pub data_dependent: Option<bool>,
    pub trace_path: Option<PathBuf>,
    pub preview_rows: usize,
    pub raw_budget: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_rounds: 12,
            char_budget: prompt::DEFAULT_CHAR_BUDGET,
            data_dependent: None,
            trace_path: None,
            preview_rows: 12,
            raw_budget: 4000,
        }
    }
}

/// Per-run wiring for the loop.
pub struct RunOptions {
    pub config: AgentConfig,
    /// Modality-controller alignment (demand alignment, asset selection,
    /// derived-asset tracking) on or off.
    pub alignment_enabled: bool,
    /// Base directory for tool file paths.
    pub data_dir: PathBuf,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn trace(path: &Option<PathBuf>, record: serde_json::Value) {
    if let Some(p) = path {
        if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(p) {
            use std::io::Write;
            let _ = writeln!(f, "{record}");
        }
    }
}

fn asset_inventory(
    ws: &Workspace,
    gazetteer: &Gazetteer,
    defaults: &AlignDefaults,
    query: &str,
    alignment_enabled: bool,
) -> Result<String, ControllerError> {
    if !alignment_enabled {
        return Ok("(data alignment is disabled; no asset inventory available)".to_string());
    }
    let aligned = align_demand(query, gazetteer, defaults)?;
    match select_modalities(&aligned, &ws.registry) {
        Ok(guids) => {
            let mut lines = vec![format!(
                "(aligned: level={}, time={}, location={})",
                aligned.level,
                aligned
                    .time
                    .map(|t| format!("{}..{}", t.start, t.end))
                    .unwrap_or_else(|| "any".into()),
                aligned
                    .location
                    .as_ref()
                    .map(|l| l.name.clone())
                    .unwrap_or_else(|| "any".into())
            )];
            for g in guids {
                if let Ok(a) = ws.registry.resolve(g) {
                    let base = std::path::Path::new(&a.uri)
                        .file_name()
                        .map(|f| f.to_string_lossy().to_string())
                        .unwrap_or_else(|| a.uri.clone());
                    lines.push(format!("- {base} [{}] guid={}: {}", a.modality, g, a.schema_summary));
                }
            }
            Ok(lines.join("\n"))
        }
        Err(ControllerError::NoMatchingAssets) => Ok(
            "No registered data assets match this query. Report that the information is not available; do not fabricate results."
                .to_string(),
        ),
        Err(e) => Err(e),
    }
}

fn render_scratchpad(steps: &[ExecutedStep], corrective: &Option<String>) -> String {
    let mut pad = String::new();
    for s in steps {
        pad.push_str(&render_step(&AgentStep {
            thought: s.thought.clone(),
            action: s.action.clone(),
            action_input: s.action_input.clone(),
            observation: Some(s.observation.clone()),
        }));
    }
    if let Some(note) = corrective {
        pad.push_str(&format!("System note: {note}\n"));
    }
    pad
}

/// Run one query through the loop. Every exit path records a transcript
/// turn; only provider transport failures surface as errors.
#[allow(clippy::too_many_arguments)]
pub fn run_agent(
    ws: &Workspace,
    tool_set: &ToolSet,
    provider: &dyn Provider,
    bundle: &PromptBundle,
    gazetteer: &Gazetteer,
    defaults: &AlignDefaults,
    transcript: &mut Transcript,
    query: &str,
    opts: &RunOptions,
) -> Result<AgentAnswer, AgentError> {
    let inventory = asset_inventory(ws, gazetteer, defaults, query, opts.alignment_enabled)?;
    let data_dependent = opts
        .config
        .data_dependent
        .unwrap_or_else(|| !ws.registry.is_empty());

    let mut rt = ToolRuntime::new(ws, opts.data_dir.clone());
    rt.alignment_enabled = opts.alignment_enabled;
    rt.preview_rows = opts.config.preview_rows;
    rt.raw_budget = opts.config.raw_budget;

    let mut steps: Vec<ExecutedStep> = Vec::new();
    let mut artifacts: Vec<Guid> = Vec::new();
    let mut corrective: Option<String> = None;
    let mut retried_parse = false;

    let finish = |transcript: &mut Transcript,
                  steps: Vec<ExecutedStep>,
                  artifacts: Vec<Guid>,
                  final_text: String,
                  complete: bool,
                  note: Option<String>|
     -> Result<AgentAnswer, AgentError> {
        let successful = steps.iter().any(|s| s.success);
        let sources: Vec<&str> = steps
            .iter()
            .filter(|s| s.success)
            .map(|s| s.observation.as_str())
            .chain(std::iter::once(query))
            .collect();
        let numerals_ok = numerals_grounded(&final_text, &sources);
        let filenames_ok = filenames_resolve(&ws.registry, &final_text);
        let grounded = if data_dependent {
            complete && successful && numerals_ok
        } else {
            true
        };
        let mut answer = aggregate_results(
            &ws.registry,
            &[SubResult {
                subtask: query.to_string(),
                text: final_text.clone(),
                artifacts: artifacts.clone(),
            }],
        )?;
        answer.grounded = grounded;
        answer.complete = complete;
        let flags = TurnFlags {
            grounded,
            complete,
            filenames_ok,
            note,
        };
        transcript.push(TranscriptTurn {
            query: query.to_string(),
            steps,
            final_text,
            answer_text: answer.text.clone(),
            flags,
        });
        Ok(answer)
    };

    for round in 0..opts.config.max_rounds {
        // Assemble, evicting whole history turns while over budget.
        let assembled: AssembledPrompt = loop {
            let scratchpad = render_scratchpad(&steps, &corrective);
            match assemble_prompt(
                bundle,
                tool_set,
                &inventory,
                &transcript.render_history(),
                query,
                &scratchpad,
                opts.config.char_budget,
            ) {
                Ok(p) => break p,
                Err(PromptError::BudgetExceeded { slot, .. })
                    if slot == "chat_history" && transcript.evict_oldest() =>
                {
                    continue;
                }
                Err(e) => {
                    let text = format!("Prompt assembly failed: {e}.");
                    return finish(transcript, steps, artifacts, text, false, Some(e.to_string()));
                }
            }
        };
        corrective = None;

        let completion = match provider.complete(&assembled) {
            Ok(c) => c,
            Err(e) => {
                // Record the aborted turn before surfacing the error.
                let _ = finish(
                    transcript,
                    std::mem::take(&mut steps),
                    std::mem::take(&mut artifacts),
                    format!("Provider failure: {e}."),
                    false,
                    Some(e.to_string()),
                );
                return Err(AgentError::Provider(e));
            }
        };

        match parse_step(&completion) {
            Err(_) if !retried_parse => {
                retried_parse = true;
                corrective = Some(
                    "the previous reply could not be parsed; answer with either an Action/Action Input pair or a Final Answer, following the format instructions exactly"
                        .to_string(),
                );
                continue;
            }
            Err(e) => {
                let text =
                    "The model reply could not be parsed into the step format; aborting this question."
                        .to_string();
                return finish(transcript, steps, artifacts, text, false, Some(e.to_string()));
            }
            Ok(ParsedStep::Final(f)) => {
                trace(
                    &opts.config.trace_path,
                    json!({
                        "event": "final",
                        "prompt_hash": format!("{:016x}", fnv1a(&assembled.full_text())),
                        "rounds": round + 1,
                    }),
                );
                return finish(transcript, steps, artifacts, f.text, true, None);
            }
            Ok(ParsedStep::Action(step)) => {
                let started = Instant::now();
                let (observation, success, step_artifacts) = if tool_set.get(&step.action).is_none()
                {
                    (
                        format!(
                            "UnknownTool: '{}' is not a registered tool. Available tools: {}.",
                            step.action,
                            tool_set.names().join(", ")
                        ),
                        false,
                        Vec::new(),
                    )
                } else {
                    match execute_tool(&mut rt, &step.action, &step.action_input) {
                        Ok(outcome) => (outcome.observation, true, outcome.artifacts),
                        Err(e) => (format!("ToolError: {e}"), false, Vec::new()),
                    }
                };
                let duration_ms = started.elapsed().as_millis() as u64;
                trace(
                    &opts.config.trace_path,
                    json!({
                        "event": "tool_call",
                        "prompt_hash": format!("{:016x}", fnv1a(&assembled.full_text())),
                        "action": step.action,
                        "input": step.action_input,
                        "success": success,
                        "observation_digest": observation.chars().take(120).collect::<String>(),
                        "guids": step_artifacts.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
                        "ms": duration_ms,
                    }),
                );
                artifacts.extend(step_artifacts.iter().copied());
                steps.push(ExecutedStep {
                    thought: step.thought,
                    action: step.action,
                    action_input: step.action_input,
                    observation,
                    success,
                    duration_ms,
                    artifacts: step_artifacts,
                });
            }
        }
    }

    let text = format!(
        "Round limit ({}) reached before a final answer; the result is incomplete.",
        opts.config.max_rounds
    );
    finish(transcript, steps, artifacts, text, false, Some("round limit".into()))
}
