use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::record::{byte_to_char, CharSpan};
use super::{DatasetRecord, Side};
use crate::error::{Error, FieldPath, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Non-reasoning models: the assistant turn opens with a definition.
    #[default]
    Standard,
    /// Reasoning models: the assistant turn opens a `<think>` block that names
    /// the word, so the analyzed tokens are not generic thinking tokens.
    Reasoning,
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(PromptMode::Standard),
            "reasoning" => Ok(PromptMode::Reasoning),
            other => Err(Error::invalid(format!("unknown prompt mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub word: String,
    /// Characters of the final occurrence of `word` in `text`.
    pub target: CharSpan,
}

fn template(word: &str, mode: PromptMode) -> String {
    match mode {
        PromptMode::Standard => format!(
            "<user> Please define {word} in this context <assistant> Sure! Here is the definition of the word {word}"
        ),
        PromptMode::Reasoning => format!(
            "<user> Please define {word} in this context <assistant> <think> Okay, so I need to figure out the meaning of the word {word}"
        ),
    }
}

/// Renders the prompt for one side of a record: the side's sentence followed by
/// the instruction template, and locates the last mention of the word.
pub fn render_prompt(record: &DatasetRecord, side: Side, mode: PromptMode) -> Result<RenderedPrompt> {
    let word = record.word_for(side).ok_or_else(|| {
        Error::validation(FieldPath::in_record(record.record_id(), "side"), format!("record has no {side} side"))
    })?;
    let context = record.context_for(side).unwrap_or_default();
    let text = format!("{context} {}", template(word, mode));
    let byte_start = *word_occurrences(&text, word)
        .last()
        .ok_or_else(|| Error::invalid(format!("template bug: {word:?} absent from rendered prompt")))?;
    let start = byte_to_char(&text, byte_start);
    let target = CharSpan::new(start, start + word.chars().count());
    Ok(RenderedPrompt { text, word: word.to_string(), target })
}

/// Byte offsets of whole-word, case-sensitive occurrences of `word`.
pub(crate) fn word_occurrences(text: &str, word: &str) -> Vec<usize> {
    if word.is_empty() {
        return Vec::new();
    }
    let is_word_char = |c: char| c.is_alphanumeric() || c == '_';
    text.match_indices(word)
        .filter(|(at, _)| {
            let before = text[..*at].chars().next_back();
            let after = text[at + word.len()..].chars().next();
            !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
        })
        .map(|(at, _)| at)
        .collect()
}
