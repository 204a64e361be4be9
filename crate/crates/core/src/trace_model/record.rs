use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::Side;
use crate::error::{Error, FieldPath, Result};

/// Half-open character (Unicode scalar) range `[start, end)` within a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    /// Returns the covered text, or `None` when the span is empty or runs past
    /// the end of `text`.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        if self.start >= self.end {
            return None;
        }
        let start = char_to_byte(text, self.start)?;
        let end = char_to_byte(text, self.end)?;
        Some(&text[start..end])
    }
}

impl From<[usize; 2]> for CharSpan {
    fn from([start, end]: [usize; 2]) -> Self {
        CharSpan { start, end }
    }
}

impl From<CharSpan> for [usize; 2] {
    fn from(span: CharSpan) -> Self {
        [span.start, span.end]
    }
}

pub(crate) fn char_to_byte(text: &str, chars: usize) -> Option<usize> {
    if chars == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (byte, _) in text.char_indices() {
        if count == chars {
            return Some(byte);
        }
        count += 1;
    }
    (count == chars).then_some(text.len())
}

pub(crate) fn byte_to_char(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenseLabel {
    SameSense,
    DifferentSense,
}

/// Ground-truth identity of the target on one side of a record. Only
/// synthetic corpora carry these; the simulator routes on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetAnnotation {
    pub side: Side,
    pub token_id: u32,
    pub sense_id: u32,
}

/// Two sentences sharing a target word, labelled same or different sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WicRecord {
    pub record_id: String,
    pub target_word: String,
    pub context_a: String,
    pub context_b: String,
    pub span_a: CharSpan,
    pub span_b: CharSpan,
    pub label: SenseLabel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<TargetAnnotation>,
}

/// A context with its target word plus one meaning-preserving and one
/// meaning-changing substitute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwordsRecord {
    pub record_id: String,
    pub target_word: String,
    pub context: String,
    pub target_span: CharSpan,
    pub equivalent_word: String,
    pub different_word: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<TargetAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetRecord {
    Wic(WicRecord),
    Swords(SwordsRecord),
}

const WIC_SIDES: [Side; 2] = [Side::A, Side::B];
const SWORDS_SIDES: [Side; 3] = [Side::Original, Side::Equivalent, Side::Different];

impl DatasetRecord {
    pub fn record_id(&self) -> &str {
        match self {
            DatasetRecord::Wic(r) => &r.record_id,
            DatasetRecord::Swords(r) => &r.record_id,
        }
    }

    pub fn target_word(&self) -> &str {
        match self {
            DatasetRecord::Wic(r) => &r.target_word,
            DatasetRecord::Swords(r) => &r.target_word,
        }
    }

    pub fn sides(&self) -> &'static [Side] {
        match self {
            DatasetRecord::Wic(_) => &WIC_SIDES,
            DatasetRecord::Swords(_) => &SWORDS_SIDES,
        }
    }

    fn annotations(&self) -> &[TargetAnnotation] {
        match self {
            DatasetRecord::Wic(r) => &r.annotations,
            DatasetRecord::Swords(r) => &r.annotations,
        }
    }

    pub fn annotation(&self, side: Side) -> Option<&TargetAnnotation> {
        self.annotations().iter().find(|a| a.side == side)
    }

    /// The word the prompt asks about on `side`.
    pub fn word_for(&self, side: Side) -> Option<&str> {
        match (self, side) {
            (DatasetRecord::Wic(r), Side::A | Side::B) => Some(&r.target_word),
            (DatasetRecord::Swords(r), Side::Original) => Some(&r.target_word),
            (DatasetRecord::Swords(r), Side::Equivalent) => Some(&r.equivalent_word),
            (DatasetRecord::Swords(r), Side::Different) => Some(&r.different_word),
            _ => None,
        }
    }

    /// The sentence shown on `side`.
    pub fn context_for(&self, side: Side) -> Option<String> {
        match (self, side) {
            (DatasetRecord::Wic(r), Side::A) => Some(r.context_a.clone()),
            (DatasetRecord::Wic(r), Side::B) => Some(r.context_b.clone()),
            (DatasetRecord::Swords(r), Side::Original) => Some(r.context.clone()),
            (DatasetRecord::Swords(r), _) => {
                let word = self.word_for(side)?;
                Some(r.substituted(word))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetRecord::Wic(r) => r.validate(),
            DatasetRecord::Swords(r) => r.validate(),
        }?;
        let mut seen = Vec::new();
        for annotation in self.annotations() {
            if !self.sides().contains(&annotation.side) || seen.contains(&annotation.side) {
                return Err(Error::validation(
                    FieldPath::in_record(self.record_id(), "annotations"),
                    format!("unexpected or repeated annotation for side {}", annotation.side),
                ));
            }
            seen.push(annotation.side);
        }
        Ok(())
    }
}

fn check_word(record_id: &str, field: &str, word: &str) -> Result<()> {
    if word.trim().is_empty() {
        return Err(Error::validation(FieldPath::in_record(record_id, field), "must be non-empty"));
    }
    if word.trim() != word {
        return Err(Error::validation(
            FieldPath::in_record(record_id, field),
            "must not carry leading or trailing whitespace",
        ));
    }
    Ok(())
}

impl WicRecord {
    pub fn validate(&self) -> Result<()> {
        check_word(&self.record_id, "target_word", &self.target_word)?;
        for (field, context, span) in
            [("span_a", &self.context_a, self.span_a), ("span_b", &self.context_b, self.span_b)]
        {
            let covered = span.slice(context).ok_or_else(|| {
                Error::validation(
                    FieldPath::in_record(&self.record_id, field),
                    format!("span [{}, {}) outside sentence", span.start, span.end),
                )
            })?;
            if covered.trim().is_empty() || covered.chars().any(char::is_whitespace) {
                return Err(Error::validation(
                    FieldPath::in_record(&self.record_id, field),
                    format!("span covers {covered:?}, not a single word"),
                ));
            }
        }
        Ok(())
    }
}

impl SwordsRecord {
    pub fn validate(&self) -> Result<()> {
        check_word(&self.record_id, "target_word", &self.target_word)?;
        check_word(&self.record_id, "equivalent_word", &self.equivalent_word)?;
        check_word(&self.record_id, "different_word", &self.different_word)?;
        let covered = self.target_span.slice(&self.context).ok_or_else(|| {
            Error::validation(FieldPath::in_record(&self.record_id, "target_span"), "span outside context")
        })?;
        if covered.to_lowercase() != self.target_word.to_lowercase() {
            return Err(Error::validation(
                FieldPath::in_record(&self.record_id, "target_span"),
                format!("span covers {covered:?}, expected {:?}", self.target_word),
            ));
        }
        for (field, word) in [("equivalent_word", &self.equivalent_word), ("different_word", &self.different_word)] {
            if word.to_lowercase() == self.target_word.to_lowercase() {
                return Err(Error::validation(
                    FieldPath::in_record(&self.record_id, field),
                    "substitute equals the original word",
                ));
            }
        }
        Ok(())
    }

    /// The context with the target replaced by `word`.
    pub fn substituted(&self, word: &str) -> String {
        let start = char_to_byte(&self.context, self.target_span.start).unwrap_or(self.context.len());
        let end = char_to_byte(&self.context, self.target_span.end).unwrap_or(self.context.len());
        format!("{}{}{}", &self.context[..start], word, &self.context[end..])
    }

    /// Original, equivalent and different sentences.
    pub fn sentences(&self) -> [String; 3] {
        [self.context.clone(), self.substituted(&self.equivalent_word), self.substituted(&self.different_word)]
    }
}

/// One JSON record per line; every record is validated.
pub fn decode_records(reader: impl BufRead) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| Error::Schema { line: i + 1, message: e.to_string() })?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

pub fn encode_records(records: &[DatasetRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for record in records {
        record.validate()?;
        serde_json::to_writer(&mut out, record)?;
        out.push(b'\n');
    }
    Ok(out)
}
