//! Parser for the Thought / Action / Action Input / Observation step
//! grammar. Tolerant of leading/trailing whitespace, a missing Thought,
//! markdown fences around the action input, and a hallucinated Observation
//! (cut off and ignored by the loop).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("completion contains neither an Action nor a Final Answer marker")]
    UnparseableCompletion,
}

/// One tool-use step as parsed from a completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentStep {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    pub observation: Option<String>,
}

/// Terminal step carrying only the answer text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalAnswer {
    pub thought: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedStep {
    Action(AgentStep),
    Final(FinalAnswer),
}

fn find_marker(text: &str, marker: &str) -> Option<usize> {
    // Case-sensitive, but tolerant of indentation and leading '*'/'#'.
    let mut search = 0;
    while let Some(rel) = text[search..].find(marker) {
        let at = search + rel;
        let line_start = text[..at].rfind('\n').map(|i| i + 1).unwrap_or(0);
        let prefix = &text[line_start..at];
        if prefix
            .chars()
            .all(|c| c.is_whitespace() || c == '*' || c == '#' || c == '>' || c == '-')
        {
            return Some(at);
        }
        search = at + marker.len();
    }
    None
}

fn strip_fences(s: &str) -> String {
    let t = s.trim();
    if let Some(body) = t.strip_prefix("```") {
        // drop an optional language tag on the first line
        let body = match body.find('\n') {
            Some(nl) if body[..nl].len() <= 10 && !body[..nl].contains('{') => &body[nl + 1..],
            _ => body,
        };
        let body = body.strip_suffix("```").unwrap_or(body);
        return body.trim().to_string();
    }
    t.to_string()
}

fn thought_before(text: &str, end: usize) -> String {
    match find_marker(&text[..end], "Thought:") {
        Some(at) => text[at + "Thought:".len()..end].trim().to_string(),
        None => String::new(),
    }
}

/// Parse one completion. "Final Answer:" wins when both markers appear;
/// everything after it to end-of-text is the answer.
pub fn parse_step(completion: &str) -> Result<ParsedStep, ParseError> {
    if let Some(at) = find_marker(completion, "Final Answer:") {
        let text = completion[at + "Final Answer:".len()..].trim().to_string();
        return Ok(ParsedStep::Final(FinalAnswer {
            thought: thought_before(completion, at),
            text,
        }));
    }
    let action_at = find_marker(completion, "Action:").ok_or(ParseError::UnparseableCompletion)?;
    let after_action = &completion[action_at + "Action:".len()..];
    let (action_line, rest_offset) = match after_action.find('\n') {
        Some(nl) => (&after_action[..nl], action_at + "Action:".len() + nl),
        None => (after_action, completion.len()),
    };
    let action = action_line
        .trim()
        .trim_matches(|c: char| matches!(c, '`' | '[' | ']' | '*' | '"' | '\''))
        .trim()
        .to_string();
    if action.is_empty() {
        return Err(ParseError::UnparseableCompletion);
    }
    let rest = &completion[rest_offset..];
    let (action_input, observation) = match find_marker(rest, "Action Input:") {
        Some(ai_at) => {
            let after = &rest[ai_at + "Action Input:".len()..];
            match find_marker(after, "Observation:") {
                Some(obs_at) => {
                    let input = strip_fences(&after[..obs_at]);
                    let obs = after[obs_at + "Observation:".len()..].trim().to_string();
                    (input, Some(obs))
                }
                None => (strip_fences(after), None),
            }
        }
        None => (String::new(), None),
    };
    Ok(ParsedStep::Action(AgentStep {
        thought: thought_before(completion, action_at),
        action,
        action_input,
        observation,
    }))
}

/// Render a step back into scratchpad text. `parse_step` on the result
/// yields an equal step.
pub fn render_step(step: &AgentStep) -> String {
    let mut out = format!(
        "Thought: {}\nAction: {}\nAction Input: {}\n",
        step.thought, step.action, step.action_input
    );
    if let Some(obs) = &step.observation {
        out.push_str(&format!("Observation: {obs}\n"));
    }
    out
}
