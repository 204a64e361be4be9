//! Routing traces, model metadata and dataset records.
//!
//! A [`RoutingTrace`] is what one forward pass over one rendered prompt leaves
//! behind: for every MoE layer and every token, the set of routed experts the
//! gate picked (shared experts are never listed), optionally with gate weights
//! and the pre-router hidden state. Everything downstream consumes these types.

mod codec;
mod import;
mod prompt;
mod record;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldPath, Result};

pub use codec::{decode_corpus, decode_trace, encode_corpus, encode_trace, TraceReader, TraceWriter, SCHEMA_VERSION};
pub use import::{
    import_swords_triples, import_wic, parse_swords_native, read_wic_gold, read_wic_rows, OffsetUnit, SkipReason,
    SkippedEntry, Substitute, SwordsEntry, SwordsImport, SwordsThresholds, WicColumns, WicImport, WicRow,
};
pub use prompt::{render_prompt, PromptMode, RenderedPrompt};
pub use record::{
    decode_records, encode_records, CharSpan, DatasetRecord, SenseLabel, SwordsRecord, TargetAnnotation, WicRecord,
};

/// Router configuration of one MoE model.
///
/// `total_experts` and `routed_active` describe the routed pool only; the
/// `shared_experts` run on every token and never take part in overlap counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub model_id: String,
    pub total_experts: u32,
    pub routed_active: u32,
    pub shared_experts: u32,
    pub moe_layers: Vec<u32>,
    #[serde(default)]
    pub vocab_note: String,
}

impl ModelMeta {
    pub fn new(
        model_id: impl Into<String>,
        total_experts: u32,
        routed_active: u32,
        shared_experts: u32,
        moe_layers: Vec<u32>,
    ) -> Result<Self> {
        let meta = ModelMeta {
            model_id: model_id.into(),
            total_experts,
            routed_active,
            shared_experts,
            moe_layers,
            vocab_note: String::new(),
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        let at = |field: &str| FieldPath::in_record(format!("meta {}", self.model_id), field);
        if self.total_experts == 0 {
            return Err(Error::validation(at("total_experts"), "must be positive"));
        }
        if self.routed_active == 0 || self.routed_active > self.total_experts {
            return Err(Error::validation(
                at("routed_active"),
                format!("must satisfy 1 <= k <= N (k = {}, N = {})", self.routed_active, self.total_experts),
            ));
        }
        if self.moe_layers.is_empty() {
            return Err(Error::validation(at("moe_layers"), "must be non-empty"));
        }
        if self.moe_layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(at("moe_layers"), "layer indices must be strictly increasing"));
        }
        Ok(())
    }

    pub fn k(&self) -> u32 {
        self.routed_active
    }

    pub fn n(&self) -> u32 {
        self.total_experts
    }

    pub fn has_layer(&self, layer: u32) -> bool {
        self.moe_layers.binary_search(&layer).is_ok()
    }

    /// Router configurations of the six production models the toolkit was
    /// designed around, written as routed + shared.
    ///
    /// Expert counts are the published router configurations; the MoE layer
    /// lists follow each model's public config (dense prefix layers and
    /// interleaving excluded).
    pub fn reference_models() -> Vec<ModelMeta> {
        let preset = |id: &str, n: u32, k: u32, s: u32, layers: Vec<u32>| ModelMeta {
            model_id: id.to_string(),
            total_experts: n,
            routed_active: k,
            shared_experts: s,
            moe_layers: layers,
            vocab_note: String::new(),
        };
        vec![
            preset("DeepSeek-R1", 256, 8, 1, (3..61).collect()),
            preset("DeepSeek-V2-Lite", 64, 6, 2, (1..27).collect()),
            preset("Mixtral-8x22B", 8, 2, 0, (0..56).collect()),
            preset("Mixtral-8x7B", 8, 2, 0, (0..32).collect()),
            preset("Llama-4-Scout", 16, 1, 1, (0..48).collect()),
            preset("Llama-4-Maverick", 128, 1, 1, (0..48).filter(|l| l % 2 == 1).collect()),
        ]
    }
}

/// Which rendering of a paired experiment a trace belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "equivalent")]
    Equivalent,
    #[serde(rename = "different")]
    Different,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::B => "B",
            Side::Original => "original",
            Side::Equivalent => "equivalent",
            Side::Different => "different",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive token-index range of the target word within a rendered prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct TargetSpan {
    pub start: u32,
    pub end: u32,
}

impl TargetSpan {
    pub fn new(start: u32, end: u32) -> Self {
        TargetSpan { start, end }
    }

    pub fn single(index: u32) -> Self {
        TargetSpan { start: index, end: index }
    }

    pub fn len(&self) -> usize {
        if self.end < self.start {
            0
        } else {
            (self.end - self.start) as usize + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> {
        self.start as usize..=self.end as usize
    }
}

impl From<[u32; 2]> for TargetSpan {
    fn from([start, end]: [u32; 2]) -> Self {
        TargetSpan { start, end }
    }
}

impl From<TargetSpan> for [u32; 2] {
    fn from(span: TargetSpan) -> Self {
        [span.start, span.end]
    }
}

/// The gate's decision for one token at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRouting {
    pub token_index: u32,
    pub token_text: String,
    pub routed_experts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Vec<f64>>,
}

impl TokenRouting {
    pub fn new(token_index: u32, token_text: impl Into<String>, routed_experts: Vec<u32>) -> Self {
        TokenRouting {
            token_index,
            token_text: token_text.into(),
            routed_experts,
            gate_weights: None,
            activation: None,
        }
    }

    /// Checks the routing against `meta`, returning the violated field and a
    /// description on failure.
    pub(crate) fn check(&self, meta: &ModelMeta) -> std::result::Result<(), (&'static str, String)> {
        let k = meta.routed_active as usize;
        if self.routed_experts.len() != k {
            return Err(("routed_experts", format!("expected k = {k} experts, found {}", self.routed_experts.len())));
        }
        if let Some(&bad) = self.routed_experts.iter().find(|&&e| e >= meta.total_experts) {
            return Err(("routed_experts", format!("expert id {bad} out of range [0, {})", meta.total_experts)));
        }
        let distinct: BTreeSet<u32> = self.routed_experts.iter().copied().collect();
        if distinct.len() != self.routed_experts.len() {
            return Err(("routed_experts", "routed_experts not distinct".to_string()));
        }
        if let Some(weights) = &self.gate_weights {
            if weights.len() != self.routed_experts.len() {
                return Err((
                    "gate_weights",
                    format!("expected {} weights, found {}", self.routed_experts.len(), weights.len()),
                ));
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(("gate_weights", "weights must be finite and non-negative".to_string()));
            }
        }
        if let Some(activation) = &self.activation {
            if activation.iter().any(|v| !v.is_finite()) {
                return Err(("activation", "activation values must be finite".to_string()));
            }
        }
        Ok(())
    }
}

/// Per-layer routing for one processed prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTrace {
    pub meta: ModelMeta,
    pub example_id: String,
    pub side: Side,
    pub prompt_text: String,
    pub target_span: TargetSpan,
    pub layers: BTreeMap<u32, Vec<TokenRouting>>,
}

impl RoutingTrace {
    pub fn record_label(&self) -> String {
        format!("{}/{}", self.example_id, self.side)
    }

    pub fn n_tokens(&self) -> usize {
        self.layers.values().next().map_or(0, Vec::len)
    }

    pub fn layer(&self, layer: u32) -> Option<&[TokenRouting]> {
        self.layers.get(&layer).map(Vec::as_slice)
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        let label = self.record_label();
        let at = |field: String| FieldPath::in_record(label.clone(), field);
        if self.example_id.is_empty() {
            return Err(Error::validation(at("example_id".into()), "must be non-empty"));
        }
        if self.layers.is_empty() {
            return Err(Error::validation(at("layers".into()), "trace has no layers"));
        }
        let n_tokens = self.n_tokens();
        for (&layer, tokens) in &self.layers {
            if !self.meta.has_layer(layer) {
                return Err(Error::validation(
                    at(format!("layers[{layer}]")),
                    format!("layer {layer} is not an MoE layer of {}", self.meta.model_id),
                ));
            }
            if tokens.len() != n_tokens {
                return Err(Error::validation(
                    at(format!("layers[{layer}]")),
                    format!("token count {} differs from {n_tokens}", tokens.len()),
                ));
            }
            for (position, token) in tokens.iter().enumerate() {
                if token.token_index as usize != position {
                    return Err(Error::validation(
                        at(format!("layers[{layer}][{position}].token_index")),
                        format!("expected {position}, found {}", token.token_index),
                    ));
                }
                if let Err((field, message)) = token.check(&self.meta) {
                    return Err(Error::validation(at(format!("layers[{layer}][{position}].{field}")), message));
                }
            }
        }
        if self.target_span.is_empty() || self.target_span.end as usize >= n_tokens {
            return Err(Error::validation(
                at("target_span".into()),
                format!(
                    "span [{}, {}] outside token range [0, {n_tokens})",
                    self.target_span.start, self.target_span.end
                ),
            ));
        }
        Ok(())
    }
}
