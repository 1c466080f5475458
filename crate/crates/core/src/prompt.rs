//! Prompt rendering for the four strategies and instance-specific dynamic
//! expert generation.
//!
//! Rendering is byte-deterministic. The persona description opens the first
//! user turn rather than a system turn, so endpoints without system-role
//! support behave identically. The no-persona baseline renders the same
//! bytes under Base and Instruction, which lets the response cache share the
//! baseline across strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::{choice_label, Persona, PersonaSet, SpecializationLevel, TaskInstance};
use crate::error::{Error, Result};

/// The four prompting strategies. Refine and RefineInstruction are two-step:
/// they need the no-persona response to the same instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Base,
    Instruction,
    Refine,
    RefineInstruction,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Base,
        Strategy::Instruction,
        Strategy::Refine,
        Strategy::RefineInstruction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Base => "base",
            Strategy::Instruction => "instruction",
            Strategy::Refine => "refine",
            Strategy::RefineInstruction => "refine-instruction",
        }
    }

    pub fn is_refine(self) -> bool {
        matches!(self, Strategy::Refine | Strategy::RefineInstruction)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "base" => Ok(Strategy::Base),
            "instruction" => Ok(Strategy::Instruction),
            "refine" => Ok(Strategy::Refine),
            "refine-instruction" => Ok(Strategy::RefineInstruction),
            other => Err(Error::PreconditionViolation(format!(
                "unknown strategy '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// An ordered chat transcript sent to an endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageSequence(pub Vec<Message>);

impl MessageSequence {
    pub fn user(content: impl Into<String>) -> Self {
        MessageSequence(vec![Message {
            role: Role::User,
            content: content.into(),
        }])
    }

    pub fn messages(&self) -> &[Message] {
        &self.0
    }

    /// Role-tagged plain-text form, used for golden files and debugging.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for message in &self.0 {
            out.push('[');
            out.push_str(message.role.as_str());
            out.push_str("]\n");
            out.push_str(&message.content);
            out.push('\n');
        }
        out
    }
}

const INSTRUCTION_CONSTRAINTS: &str = "Your responses must adhere to the following constraints:\n\
1. If your persona implies domain expertise, provide responses that reflect its specialized knowledge.\n\
2. Your responses should align with the knowledge level and domain knowledge expected from this persona.\n\
3. Attributes that do not contribute to the task should not influence reasoning, knowledge, or output quality.";

const REFINE_TAIL: &str = "Your refined response should **not** reference or acknowledge the \
original response---answer as if this is your first response.";

const REFINE_REMINDER: &str = "Remember to provide the correct option in multiple-choice \
questions and follow any output formatting requirements.";

const REFINE_INSTRUCTION_CONSTRAINTS: &str = "Your revised response must adhere to these constraints:\n\
1. If your persona implies domain expertise, refine the response to reflect the persona's specialized knowledge.\n\
2. Your refined response should align with the knowledge level and domain knowledge expected from this persona.\n\
3. Attributes that do not contribute to the task should not influence reasoning, knowledge, or output quality of the refined response.\n\
4. Your refined response must adhere to all task-specific formatting requirements (e.g., multiple-choice answers should include the correct letter option, mathematical expressions must be properly formatted, and structured output should follow the specified format).";

/// Render the task instruction and input: the question, lettered choices for
/// multiple-choice instances, and a final answer cue.
pub fn render_task(instance: &TaskInstance) -> String {
    let mut out = instance.question.clone();
    if let Some(choices) = &instance.choices {
        for (i, choice) in choices.iter().enumerate() {
            out.push('\n');
            out.push('(');
            out.push(choice_label(i));
            out.push_str(") ");
            out.push_str(choice);
        }
    }
    out.push_str("\nAnswer:");
    out
}

/// Render the message sequence for a (persona, strategy, instance) cell.
///
/// `prior_response` must be the no-persona response to the same instance and
/// is required exactly for the refine strategies. The no-persona baseline
/// always renders as the bare task (its Base form), so the same cache entry
/// backs every strategy's baseline column.
pub fn build_prompt(
    persona: &Persona,
    strategy: Strategy,
    instance: &TaskInstance,
    prior_response: Option<&str>,
) -> Result<MessageSequence> {
    if strategy.is_refine() != prior_response.is_some() {
        return Err(Error::PreconditionViolation(format!(
            "strategy '{strategy}' {} a prior no-persona response",
            if strategy.is_refine() { "requires" } else { "does not take" }
        )));
    }
    if strategy.is_refine() && persona.is_no_persona() {
        return Err(Error::PreconditionViolation(
            "refinement always adopts a persona; the no-persona baseline cannot refine".into(),
        ));
    }
    if persona.description.is_empty() && !persona.is_no_persona() {
        return Err(Error::PreconditionViolation(format!(
            "persona '{}' has no description; dynamic experts must be generated first",
            persona.id
        )));
    }
    let task = render_task(instance);
    let sequence = match strategy {
        Strategy::Base => {
            if persona.is_no_persona() {
                MessageSequence::user(task)
            } else {
                MessageSequence::user(format!("{}\n{task}", persona.description))
            }
        }
        Strategy::Instruction => {
            if persona.is_no_persona() {
                MessageSequence::user(task)
            } else {
                MessageSequence::user(format!(
                    "{} {INSTRUCTION_CONSTRAINTS}\n{task}",
                    persona.description
                ))
            }
        }
        Strategy::Refine => {
            let directive = format!(
                "Now, refine your response while adopting the persona: {} {REFINE_TAIL} {REFINE_REMINDER}",
                persona.description
            );
            refine_sequence(task, prior_response.unwrap(), directive)
        }
        Strategy::RefineInstruction => {
            let directive = format!(
                "Now, refine your response while adopting the persona: {} {REFINE_INSTRUCTION_CONSTRAINTS}\n{REFINE_TAIL}",
                persona.description
            );
            refine_sequence(task, prior_response.unwrap(), directive)
        }
    };
    Ok(sequence)
}

fn refine_sequence(task: String, prior: &str, directive: String) -> MessageSequence {
    MessageSequence(vec![
        Message {
            role: Role::User,
            content: task,
        },
        Message {
            role: Role::Assistant,
            content: prior.to_string(),
        },
        Message {
            role: Role::User,
            content: directive,
        },
    ])
}

// ---------------------------------------------------------------------------
// Dynamic expert generation
// ---------------------------------------------------------------------------

/// Whether a dataset's instances are posed as multiple-choice questions or
/// open-ended problems; selects the generator preamble wording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFormat {
    MultipleChoice,
    OpenEnded,
}

/// A registered demonstration block for one dataset kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemonstrationBlock {
    pub format: TaskFormat,
    pub demonstrations: String,
}

const PREAMBLE_MC: &str = include_str!("../data/demos/preamble_mc.txt");
const PREAMBLE_OPEN: &str = include_str!("../data/demos/preamble_open.txt");

/// Demonstration blocks keyed by dataset kind. Five kinds are bundled;
/// additional ones can be registered or loaded from a directory of
/// `<kind>.<mc|open>.txt` files.
#[derive(Debug, Clone)]
pub struct DemoRegistry {
    blocks: BTreeMap<String, DemonstrationBlock>,
}

impl Default for DemoRegistry {
    fn default() -> Self {
        Self::bundled()
    }
}

impl DemoRegistry {
    pub fn bundled() -> Self {
        let mut blocks = BTreeMap::new();
        let mut add = |kind: &str, format, text: &str| {
            blocks.insert(
                kind.to_string(),
                DemonstrationBlock {
                    format,
                    demonstrations: text.to_string(),
                },
            );
        };
        add(
            "truthfulqa",
            TaskFormat::MultipleChoice,
            include_str!("../data/demos/truthfulqa.txt"),
        );
        add(
            "gsm8k",
            TaskFormat::OpenEnded,
            include_str!("../data/demos/gsm8k.txt"),
        );
        add(
            "math",
            TaskFormat::OpenEnded,
            include_str!("../data/demos/math.txt"),
        );
        add(
            "big_bench",
            TaskFormat::MultipleChoice,
            include_str!("../data/demos/big_bench.txt"),
        );
        add(
            "mmlu_pro",
            TaskFormat::MultipleChoice,
            include_str!("../data/demos/mmlu_pro.txt"),
        );
        DemoRegistry { blocks }
    }

    pub fn register(&mut self, kind: impl Into<String>, block: DemonstrationBlock) {
        self.blocks.insert(kind.into(), block);
    }

    /// Add every `<kind>.<mc|open>.txt` file from a directory.
    pub fn load_dir(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let entries =
            std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(stem) = name.strip_suffix(".txt") else {
                continue;
            };
            let (kind, format) = if let Some(kind) = stem.strip_suffix(".mc") {
                (kind, TaskFormat::MultipleChoice)
            } else if let Some(kind) = stem.strip_suffix(".open") {
                (kind, TaskFormat::OpenEnded)
            } else {
                continue;
            };
            let text = std::fs::read_to_string(entry.path())
                .map_err(|e| Error::io(entry.path().display().to_string(), e))?;
            self.register(
                kind,
                DemonstrationBlock {
                    format,
                    demonstrations: text,
                },
            );
        }
        Ok(())
    }

    pub fn get(&self, kind: &str) -> Option<&DemonstrationBlock> {
        self.blocks.get(kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.blocks.keys().map(String::as_str)
    }
}

/// The full generator prompt for one instance: preamble, the dataset's
/// demonstrations, then the rendered instance.
pub fn generator_prompt(
    registry: &DemoRegistry,
    dataset_kind: &str,
    instance: &TaskInstance,
) -> Result<MessageSequence> {
    let block = registry.get(dataset_kind).ok_or_else(|| {
        Error::PreconditionViolation(format!(
            "no demonstration block registered for dataset kind '{dataset_kind}'"
        ))
    })?;
    let preamble = match block.format {
        TaskFormat::MultipleChoice => PREAMBLE_MC,
        TaskFormat::OpenEnded => PREAMBLE_OPEN,
    };
    Ok(MessageSequence::user(format!(
        "{preamble}\n{}\n{}",
        block.demonstrations,
        render_task(instance)
    )))
}

/// Parse the generator's `Expert 1/2/3:` lines. The match is
/// case-insensitive at line start; the text after the colon must itself
/// start with "You are". All three lines are required; the last occurrence
/// of each index wins.
pub fn parse_expert_lines(text: &str) -> Result<[String; 3]> {
    let pattern = Regex::new(r"(?im)^\s*expert\s*([123])\s*:\s*(.*?)\s*$").unwrap();
    let mut found: [Option<String>; 3] = [None, None, None];
    for caps in pattern.captures_iter(text) {
        let index: usize = caps[1].parse::<usize>().unwrap() - 1;
        let description = caps[2].trim().to_string();
        found[index] = Some(description);
    }
    let mut out = Vec::with_capacity(3);
    for (i, slot) in found.into_iter().enumerate() {
        let description = slot.ok_or_else(|| {
            Error::ParseFailure(format!("generator output has no 'Expert {}:' line", i + 1))
        })?;
        if !description.starts_with("You are") {
            return Err(Error::ParseFailure(format!(
                "expert {} description does not start with \"You are\": {description:?}",
                i + 1
            )));
        }
        out.push(description);
    }
    Ok([out[0].clone(), out[1].clone(), out[2].clone()])
}

/// Inverse of [`parse_expert_lines`] for well-formed transcripts.
pub fn format_expert_lines(descriptions: &[String; 3]) -> String {
    format!(
        "Expert 1: {}\nExpert 2: {}\nExpert 3: {}",
        descriptions[0], descriptions[1], descriptions[2]
    )
}

/// Three generated expert descriptions for one instance, flagged when they
/// came from the static-expert fallback instead of the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicExperts {
    /// Broad, focused, niche.
    pub descriptions: [String; 3],
    pub fallback: bool,
}

/// Generate the three specialization-level expert descriptions for one
/// instance by sending the demonstration prompt through `complete`.
///
/// On a [`Error::ParseFailure`], `fallback_description` (the task's static
/// expert, when provided) substitutes at all three levels and the result is
/// flagged; without a fallback the failure propagates.
pub fn generate_dynamic_experts(
    instance: &TaskInstance,
    dataset_kind: &str,
    registry: &DemoRegistry,
    complete: &mut dyn FnMut(&MessageSequence) -> Result<String>,
    fallback_description: Option<&str>,
) -> Result<DynamicExperts> {
    let prompt = generator_prompt(registry, dataset_kind, instance)?;
    let raw = complete(&prompt)?;
    match parse_expert_lines(&raw) {
        Ok(descriptions) => Ok(DynamicExperts {
            descriptions,
            fallback: false,
        }),
        Err(Error::ParseFailure(_)) if fallback_description.is_some() => {
            let description = fallback_description.unwrap().to_string();
            Ok(DynamicExperts {
                descriptions: [description.clone(), description.clone(), description],
                fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Instantiate the persona set's dynamic placeholders with generated
/// descriptions, in specialization order.
pub fn dynamic_personas(set: &PersonaSet, experts: &DynamicExperts) -> Vec<Persona> {
    let mut personas = Vec::new();
    for level in SpecializationLevel::ALL {
        if let Some(placeholder) = set
            .members
            .iter()
            .find(|p| p.specialization_level == Some(level))
        {
            let mut persona = placeholder.clone();
            persona.description = experts.descriptions[level.level() as usize].clone();
            personas.push(persona);
        }
    }
    personas
}
