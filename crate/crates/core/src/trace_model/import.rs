//! Importers for the WiC and SWORDS benchmark files.
//!
//! Both importers are record-level tolerant: a row that cannot be turned into a
//! valid [`DatasetRecord`] is skipped and reported with a reason code, so that
//! `records + skipped = input rows` always holds.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::record::{byte_to_char, CharSpan, DatasetRecord, SenseLabel, SwordsRecord, WicRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    MalformedRow,
    MalformedOffsets,
    OffsetOutOfRange,
    NotAWord,
    TargetMismatch,
    EmptyTarget,
    DegenerateSubstitute,
    NoEquivalentSubstitute,
    NoDifferentSubstitute,
}

impl SkipReason {
    pub fn code(self) -> &'static str {
        match self {
            SkipReason::MalformedRow => "malformed-row",
            SkipReason::MalformedOffsets => "malformed-offsets",
            SkipReason::OffsetOutOfRange => "offset-out-of-range",
            SkipReason::NotAWord => "not-a-word",
            SkipReason::TargetMismatch => "target-mismatch",
            SkipReason::EmptyTarget => "empty-target",
            SkipReason::DegenerateSubstitute => "degenerate-substitute",
            SkipReason::NoEquivalentSubstitute => "no-equivalent-substitute",
            SkipReason::NoDifferentSubstitute => "no-different-substitute",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedEntry {
    /// 0-based position in the input.
    pub index: usize,
    pub id: String,
    pub reason: SkipReason,
    pub detail: String,
}

// ---------------------------------------------------------------------------
// WiC

/// How the offsets column addresses the target in each sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetUnit {
    /// `i-j`: whitespace-word index of the target in sentence A and B (the
    /// benchmark's native encoding).
    #[default]
    Word,
    /// `a0:a1,b0:b1`: half-open character ranges in sentence A and B.
    Char,
}

impl FromStr for OffsetUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(OffsetUnit::Word),
            "char" => Ok(OffsetUnit::Char),
            other => Err(Error::invalid(format!("unknown offset unit {other:?}"))),
        }
    }
}

/// Column layout of the tab-separated WiC data file (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WicColumns {
    pub word: usize,
    pub offsets: usize,
    pub sentence_a: usize,
    pub sentence_b: usize,
    pub offset_unit: OffsetUnit,
}

impl Default for WicColumns {
    fn default() -> Self {
        // word, PoS, offsets, sentence 1, sentence 2
        WicColumns { word: 0, offsets: 2, sentence_a: 3, sentence_b: 4, offset_unit: OffsetUnit::Word }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WicRow {
    pub target_word: String,
    pub offsets: String,
    pub sentence_a: String,
    pub sentence_b: String,
}

/// Reads tab-separated rows. Rows with too few columns come back as `Err`
/// entries so they can be counted as skips rather than aborting the import.
pub fn read_wic_rows(reader: impl BufRead, columns: &WicColumns) -> Result<Vec<std::result::Result<WicRow, String>>> {
    let needed = columns.word.max(columns.offsets).max(columns.sentence_a).max(columns.sentence_b) + 1;
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < needed {
            rows.push(Err(format!("expected at least {needed} columns, found {}", fields.len())));
            continue;
        }
        rows.push(Ok(WicRow {
            target_word: fields[columns.word].to_string(),
            offsets: fields[columns.offsets].to_string(),
            sentence_a: fields[columns.sentence_a].to_string(),
            sentence_b: fields[columns.sentence_b].to_string(),
        }));
    }
    Ok(rows)
}

/// Reads the parallel gold file: one `T` or `F` per line.
pub fn read_wic_gold(reader: impl BufRead) -> Result<Vec<SenseLabel>> {
    let mut labels = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        match line.trim() {
            "" => continue,
            "T" => labels.push(SenseLabel::SameSense),
            "F" => labels.push(SenseLabel::DifferentSense),
            other => {
                return Err(Error::Parse {
                    line: index + 1,
                    offset: 0,
                    message: format!("gold label must be T or F, found {other:?}"),
                })
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WicImport {
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<SkippedEntry>,
    pub n_input: usize,
}

/// Builds WiC records from data rows and the aligned label stream.
pub fn import_wic(
    rows: &[std::result::Result<WicRow, String>],
    labels: &[SenseLabel],
    unit: OffsetUnit,
) -> Result<WicImport> {
    if rows.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} data rows but {} gold labels; the streams must align by index",
            rows.len(),
            labels.len()
        )));
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (index, (row, &label)) in rows.iter().zip(labels).enumerate() {
        let record_id = format!("wic-{index:05}");
        let skip = |reason, detail: String| SkippedEntry { index, id: record_id.clone(), reason, detail };
        let row = match row {
            Ok(row) => row,
            Err(detail) => {
                skipped.push(skip(SkipReason::MalformedRow, detail.clone()));
                continue;
            }
        };
        match wic_record(&record_id, row, label, unit) {
            Ok(record) => records.push(DatasetRecord::Wic(record)),
            Err((reason, detail)) => skipped.push(skip(reason, detail)),
        }
    }
    Ok(WicImport { records, skipped, n_input: rows.len() })
}

fn wic_record(
    record_id: &str,
    row: &WicRow,
    label: SenseLabel,
    unit: OffsetUnit,
) -> std::result::Result<WicRecord, (SkipReason, String)> {
    let target_word = row.target_word.trim().to_lowercase();
    if target_word.is_empty() {
        return Err((SkipReason::EmptyTarget, "empty target word".into()));
    }
    let (span_a, span_b) = match unit {
        OffsetUnit::Word => {
            let (a, b) = parse_pair(&row.offsets, '-')
                .ok_or_else(|| (SkipReason::MalformedOffsets, format!("expected i-j, found {:?}", row.offsets)))?;
            (word_span(&row.sentence_a, a)?, word_span(&row.sentence_b, b)?)
        }
        OffsetUnit::Char => {
            let malformed = || (SkipReason::MalformedOffsets, format!("expected a0:a1,b0:b1, found {:?}", row.offsets));
            let (a, b) = row.offsets.split_once(',').ok_or_else(malformed)?;
            let (a0, a1) = parse_pair(a, ':').ok_or_else(malformed)?;
            let (b0, b1) = parse_pair(b, ':').ok_or_else(malformed)?;
            (char_span(&row.sentence_a, a0, a1)?, char_span(&row.sentence_b, b0, b1)?)
        }
    };
    Ok(WicRecord {
        record_id: record_id.to_string(),
        target_word,
        context_a: row.sentence_a.clone(),
        context_b: row.sentence_b.clone(),
        span_a,
        span_b,
        label,
        annotations: Vec::new(),
    })
}

fn parse_pair(text: &str, sep: char) -> Option<(usize, usize)> {
    let (a, b) = text.trim().split_once(sep)?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\'' || c == '-'
}

/// Character span of the `index`-th whitespace word, with surrounding
/// punctuation trimmed.
fn word_span(sentence: &str, index: usize) -> std::result::Result<CharSpan, (SkipReason, String)> {
    let (byte_start, word) = sentence
        .split_whitespace()
        .map(|w| (w.as_ptr() as usize - sentence.as_ptr() as usize, w))
        .nth(index)
        .ok_or_else(|| {
            (SkipReason::OffsetOutOfRange, format!("word index {index} past end of sentence {sentence:?}"))
        })?;
    let lead = word.len() - word.trim_start_matches(|c: char| !is_word_char(c)).len();
    let core = word.trim_matches(|c: char| !is_word_char(c));
    if core.is_empty() {
        return Err((SkipReason::NotAWord, format!("word {index} of {sentence:?} is punctuation")));
    }
    let start = byte_to_char(sentence, byte_start + lead);
    Ok(CharSpan::new(start, start + core.chars().count()))
}

fn char_span(sentence: &str, start: usize, end: usize) -> std::result::Result<CharSpan, (SkipReason, String)> {
    let span = CharSpan::new(start, end);
    let covered = span.slice(sentence).ok_or_else(|| {
        (SkipReason::OffsetOutOfRange, format!("span [{start}, {end}) outside sentence {sentence:?}"))
    })?;
    let chars: Vec<char> = sentence.chars().collect();
    let clean_left = start == 0 || !is_word_char(chars[start - 1]);
    let clean_right = end == chars.len() || !is_word_char(chars[end]);
    if !clean_left || !clean_right || !covered.chars().all(is_word_char) {
        return Err((SkipReason::NotAWord, format!("span [{start}, {end}) covers {covered:?}, not a whole word")));
    }
    Ok(span)
}

// ---------------------------------------------------------------------------
// SWORDS

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substitute {
    pub word: String,
    /// Fraction of annotators judging the substitute acceptable, in [0, 1].
    pub score: f64,
}

/// One SWORDS target in context with its scored substitutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwordsEntry {
    pub entry_id: String,
    pub context: String,
    pub target: String,
    /// Character offset of `target` in `context`.
    pub offset: usize,
    pub substitutes: Vec<Substitute>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwordsThresholds {
    /// Minimum score for a substitute to count as meaning-preserving.
    pub equivalent_min: f64,
    /// Maximum score for a substitute to count as meaning-changing.
    pub different_max: f64,
}

impl Default for SwordsThresholds {
    fn default() -> Self {
        SwordsThresholds { equivalent_min: 0.5, different_max: 0.1 }
    }
}

/// Flattens the benchmark's nested JSON into entries.
///
/// | entry field   | source                                             |
/// |---------------|----------------------------------------------------|
/// | `entry_id`    | key of `targets`                                   |
/// | `target`      | `targets[id].target`                               |
/// | `offset`      | `targets[id].offset`                               |
/// | `context`     | `contexts[targets[id].context_id].context`         |
/// | substitute    | `substitutes[sid].substitute` where `target_id == id` |
/// | score         | share of `substitute_labels[sid]` starting with `TRUE` |
///
/// Entries come out sorted by target id; substitutes by substitute id.
pub fn parse_swords_native(root: &Value) -> Result<Vec<SwordsEntry>> {
    let object = |value: &Value, name: &str| -> Result<serde_json::Map<String, Value>> {
        value
            .get(name)
            .and_then(Value::as_object)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("SWORDS file lacks object {name:?}")))
    };
    let contexts = object(root, "contexts")?;
    let targets = object(root, "targets")?;
    let substitutes = object(root, "substitutes")?;
    let labels = object(root, "substitute_labels")?;
    let field = |value: &Value, id: &str, name: &str| -> Result<Value> {
        value.get(name).cloned().ok_or_else(|| Error::invalid(format!("SWORDS record {id} lacks field {name:?}")))
    };
    let as_str = |value: Value, id: &str, name: &str| -> Result<String> {
        value
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::invalid(format!("SWORDS record {id}: {name} must be a string")))
    };

    let mut by_target: BTreeMap<String, Vec<Substitute>> = BTreeMap::new();
    let sorted_subs: BTreeMap<&String, &Value> = substitutes.iter().collect();
    for (sid, sub) in sorted_subs {
        let target_id = as_str(field(sub, sid, "target_id")?, sid, "target_id")?;
        let word = as_str(field(sub, sid, "substitute")?, sid, "substitute")?;
        let votes: Vec<&str> = labels
            .get(sid.as_str())
            .and_then(Value::as_array)
            .map(|v| v.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        let score = if votes.is_empty() {
            0.0
        } else {
            votes.iter().filter(|v| v.starts_with("TRUE")).count() as f64 / votes.len() as f64
        };
        by_target.entry(target_id).or_default().push(Substitute { word, score });
    }

    let sorted_targets: BTreeMap<&String, &Value> = targets.iter().collect();
    let mut entries = Vec::with_capacity(sorted_targets.len());
    for (tid, target) in sorted_targets {
        let context_id = as_str(field(target, tid, "context_id")?, tid, "context_id")?;
        let context = contexts
            .get(&context_id)
            .and_then(|c| c.get("context"))
            .and_then(Value::as_str)
            .ok_or_else(|| Error::invalid(format!("SWORDS target {tid}: unknown context {context_id}")))?;
        let offset = field(target, tid, "offset")?
            .as_u64()
            .ok_or_else(|| Error::invalid(format!("SWORDS target {tid}: offset must be an integer")))?;
        entries.push(SwordsEntry {
            entry_id: tid.clone(),
            context: context.to_string(),
            target: as_str(field(target, tid, "target")?, tid, "target")?,
            offset: offset as usize,
            substitutes: by_target.remove(tid.as_str()).unwrap_or_default(),
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwordsImport {
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<SkippedEntry>,
    pub n_input: usize,
}

/// Picks, per entry, the best-scoring meaning-preserving substitute and the
/// worst-scoring meaning-changing one. Ties go to the earlier candidate.
pub fn import_swords_triples(entries: &[SwordsEntry], thresholds: SwordsThresholds) -> Result<SwordsImport> {
    if !(0.0..=1.0).contains(&thresholds.equivalent_min)
        || !(0.0..=1.0).contains(&thresholds.different_max)
        || thresholds.different_max >= thresholds.equivalent_min
    {
        return Err(Error::invalid(format!(
            "SWORDS thresholds must satisfy 0 <= different_max < equivalent_min <= 1, got {} / {}",
            thresholds.different_max, thresholds.equivalent_min
        )));
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (index, entry) in entries.iter().enumerate() {
        match swords_record(entry, thresholds) {
            Ok(record) => records.push(DatasetRecord::Swords(record)),
            Err((reason, detail)) => skipped.push(SkippedEntry { index, id: entry.entry_id.clone(), reason, detail }),
        }
    }
    Ok(SwordsImport { records, skipped, n_input: entries.len() })
}

fn swords_record(
    entry: &SwordsEntry,
    thresholds: SwordsThresholds,
) -> std::result::Result<SwordsRecord, (SkipReason, String)> {
    let target = entry.target.trim();
    if target.is_empty() {
        return Err((SkipReason::EmptyTarget, "empty target".into()));
    }
    let span = CharSpan::new(entry.offset, entry.offset + target.chars().count());
    let covered = span
        .slice(&entry.context)
        .ok_or_else(|| (SkipReason::OffsetOutOfRange, format!("offset {} outside context", entry.offset)))?;
    if covered.to_lowercase() != target.to_lowercase() {
        return Err((SkipReason::TargetMismatch, format!("offset covers {covered:?}, expected {target:?}")));
    }
    let normalized = target.to_lowercase();
    let degenerate = |word: &str| word.trim().to_lowercase() == normalized;

    let mut equivalent: Option<&Substitute> = None;
    let mut different: Option<&Substitute> = None;
    let mut saw_degenerate = false;
    for candidate in &entry.substitutes {
        if candidate.word.trim().is_empty() || !candidate.score.is_finite() {
            continue;
        }
        if degenerate(&candidate.word) {
            saw_degenerate = true;
            continue;
        }
        if candidate.score >= thresholds.equivalent_min && equivalent.is_none_or(|best| candidate.score > best.score) {
            equivalent = Some(candidate);
        }
        if candidate.score <= thresholds.different_max && different.is_none_or(|worst| candidate.score < worst.score) {
            different = Some(candidate);
        }
    }
    let equivalent = equivalent.ok_or_else(|| {
        if saw_degenerate {
            (SkipReason::DegenerateSubstitute, "only qualifying substitute repeats the target".to_string())
        } else {
            (SkipReason::NoEquivalentSubstitute, format!("no substitute scored >= {}", thresholds.equivalent_min))
        }
    })?;
    let different = different.ok_or_else(|| {
        (SkipReason::NoDifferentSubstitute, format!("no substitute scored <= {}", thresholds.different_max))
    })?;
    let record = SwordsRecord {
        record_id: format!("swords-{}", entry.entry_id),
        target_word: normalized,
        context: entry.context.clone(),
        target_span: span,
        equivalent_word: equivalent.word.trim().to_string(),
        different_word: different.word.trim().to_string(),
        annotations: Vec::new(),
    };
    record.validate().map_err(|err| (SkipReason::TargetMismatch, err.to_string()))?;
    Ok(record)
}
