//! Prompt assembly: a three-part bundle (prefix / format instructions /
//! suffix) with named slots, rendered under a character budget so oversized
//! histories surface as errors instead of silently truncating.

use thiserror::Error;

use super::tools::ToolSet;

pub const SLOT_ASSETS: &str = "{data_assets}";
pub const SLOT_TOOLS: &str = "{tools}";
pub const SLOT_TOOL_NAMES: &str = "{tool_names}";
pub const SLOT_HISTORY: &str = "{chat_history}";
pub const SLOT_INPUT: &str = "{input}";
pub const SLOT_SCRATCHPAD: &str = "{agent_scratchpad}";

/// Character budget proxying the model token limit (~4 chars per token).
pub const DEFAULT_CHAR_BUDGET: usize = 48_000;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("slot {0} must occur exactly once in its template section")]
    BadTemplate(&'static str),
    #[error("prompt budget exceeded by slot '{slot}' ({total} chars > budget {budget})")]
    BudgetExceeded {
        slot: &'static str,
        total: usize,
        budget: usize,
    },
}

#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub prefix: String,
    pub format_instructions: String,
    pub suffix: String,
}

impl Default for PromptBundle {
    fn default() -> Self {
        PromptBundle {
            prefix: DEFAULT_PREFIX.to_string(),
            format_instructions: DEFAULT_FORMAT.to_string(),
            suffix: DEFAULT_SUFFIX.to_string(),
        }
    }
}

const DEFAULT_PREFIX: &str = "\
You are an analysis agent answering urban environment change questions over registered data assets (tables, vector geometry, class rasters, rendered maps).
Work only through the tools listed below and build every answer from what the tools return. Data files can be large: never print a whole file's contents; rely on schema summaries and derived results.

Available data assets:
{data_assets}

TOOLS:
-----
The agent has access to the following tools:
{tools}
";

const DEFAULT_FORMAT: &str = "\
To use a tool, follow this format exactly:

Question: the input question you must answer
Thought: reason about what to do next (start with a short plan in your first thought)
Action: the tool to use, one of [{tool_names}]
Action Input: a single-line JSON object of named parameters
Observation: the result of the action
... (Thought/Action/Action Input/Observation repeats as needed)
Thought: I can answer now
Final Answer: the answer to the original question
";

const DEFAULT_SUFFIX: &str = "\
Be strict about file names: never mention a file that no tool reported. Derived results are addressed by the alias shown in the observation (out1, out2, ...) or by their id. If the registered data cannot answer the question, state that the information is not available instead of guessing. Repeat the key numbers and file names from the observations in the final answer.

Previous conversation:
{chat_history}

Question: {input}
Thought: {agent_scratchpad}
";

fn count_occurrences(hay: &str, needle: &str) -> usize {
    hay.match_indices(needle).count()
}

impl PromptBundle {
    /// Check the slot invariant: each slot appears exactly once in its
    /// template section.
    pub fn validate(&self) -> Result<(), PromptError> {
        for (slot, section) in [
            (SLOT_ASSETS, &self.prefix),
            (SLOT_TOOLS, &self.prefix),
            (SLOT_TOOL_NAMES, &self.format_instructions),
            (SLOT_HISTORY, &self.suffix),
            (SLOT_INPUT, &self.suffix),
            (SLOT_SCRATCHPAD, &self.suffix),
        ] {
            if count_occurrences(section, slot) != 1 {
                return Err(PromptError::BadTemplate(match slot {
                    s if s == SLOT_ASSETS => SLOT_ASSETS,
                    s if s == SLOT_TOOLS => SLOT_TOOLS,
                    s if s == SLOT_TOOL_NAMES => SLOT_TOOL_NAMES,
                    s if s == SLOT_HISTORY => SLOT_HISTORY,
                    s if s == SLOT_INPUT => SLOT_INPUT,
                    _ => SLOT_SCRATCHPAD,
                }));
            }
        }
        Ok(())
    }
}

/// A rendered prompt, split the way chat providers consume it: the prefix
/// and format instructions as the system message, the suffix as the user
/// message.
#[derive(Debug, Clone)]
pub struct AssembledPrompt {
    pub system: String,
    pub user: String,
}

impl AssembledPrompt {
    pub fn full_text(&self) -> String {
        format!("{}\n{}", self.system, self.user)
    }

    pub fn len_chars(&self) -> usize {
        self.system.chars().count() + self.user.chars().count() + 1
    }
}

/// Render the bundle. Schema summaries (the asset inventory), never
/// payloads, enter the prompt; the total length is held to `budget` chars
/// and the largest variable slot is reported on overflow.
pub fn assemble_prompt(
    bundle: &PromptBundle,
    tools: &ToolSet,
    asset_inventory: &str,
    history: &str,
    input: &str,
    scratchpad: &str,
    budget: usize,
) -> Result<AssembledPrompt, PromptError> {
    bundle.validate()?;
    let system = bundle
        .prefix
        .replace(SLOT_ASSETS, asset_inventory)
        .replace(SLOT_TOOLS, &tools.render_list())
        + "\n"
        + &bundle
            .format_instructions
            .replace(SLOT_TOOL_NAMES, &tools.names().join(", "));
    let user = bundle
        .suffix
        .replace(SLOT_HISTORY, history)
        .replace(SLOT_INPUT, input)
        .replace(SLOT_SCRATCHPAD, scratchpad);
    let out = AssembledPrompt { system, user };
    let total = out.len_chars();
    if total > budget {
        let slots = [
            ("chat_history", history.chars().count()),
            ("agent_scratchpad", scratchpad.chars().count()),
            ("data_assets", asset_inventory.chars().count()),
            ("input", input.chars().count()),
        ];
        let slot = slots.iter().max_by_key(|(_, n)| *n).map(|(s, _)| *s).unwrap();
        return Err(PromptError::BudgetExceeded {
            slot,
            total,
            budget,
        });
    }
    Ok(out)
}
