//! Line-delimited JSON codec for routing traces.
//!
//! Each trace is one header line followed by one line per (layer, token),
//! layer-major and in token order:
//!
//! ```text
//! {"record":"trace","schema_version":1,"meta":{..},"example_id":"..","side":"A",
//!  "prompt_text":"..","target_span":[4,4],"n_tokens":9,"layers":[0,1]}
//! {"record":"token","layer":0,"token_index":0,"token_text":"..","routed_experts":[..]}
//! ...
//! ```
//!
//! A corpus file is a concatenation of encoded traces. Every invariant is
//! re-checked on decode.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ModelMeta, RoutingTrace, Side, TargetSpan, TokenRouting};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Trace(Header),
    Token(TokenLine),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
    meta: ModelMeta,
    example_id: String,
    side: Side,
    prompt_text: String,
    target_span: TargetSpan,
    n_tokens: u32,
    layers: Vec<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenLine {
    layer: u32,
    token_index: u32,
    token_text: String,
    routed_experts: Vec<u32>,
    #[serde(default)]
    gate_weights: Option<Vec<f64>>,
    #[serde(default)]
    activation: Option<Vec<f64>>,
}

impl TokenLine {
    fn into_routing(self) -> TokenRouting {
        TokenRouting {
            token_index: self.token_index,
            token_text: self.token_text,
            routed_experts: self.routed_experts,
            gate_weights: self.gate_weights,
            activation: self.activation,
        }
    }
}

/// Serializes one validated trace.
pub fn encode_trace(trace: &RoutingTrace) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    TraceWriter::new(&mut out).write(trace)?;
    Ok(out)
}

pub fn encode_corpus<'a>(traces: impl IntoIterator<Item = &'a RoutingTrace>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut writer = TraceWriter::new(&mut out);
    for trace in traces {
        writer.write(trace)?;
    }
    Ok(out)
}

/// Decodes exactly one trace; trailing records are an error.
pub fn decode_trace(bytes: &[u8]) -> Result<RoutingTrace> {
    let mut reader = TraceReader::new(bytes);
    let trace = reader
        .next()
        .ok_or_else(|| Error::Schema { line: 1, message: "empty input, expected a trace header".into() })??;
    if let Some(extra) = reader.next() {
        extra?;
        return Err(Error::Schema {
            line: reader.last_header,
            message: "unexpected record after the end of the trace".into(),
        });
    }
    Ok(trace)
}

pub fn decode_corpus(reader: impl BufRead) -> Result<Vec<RoutingTrace>> {
    TraceReader::new(reader).collect()
}

pub struct TraceWriter<W> {
    inner: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(inner: W) -> Self {
        TraceWriter { inner }
    }

    pub fn write(&mut self, trace: &RoutingTrace) -> Result<()> {
        trace.validate()?;
        let header = HeaderRef {
            record: "trace",
            schema_version: SCHEMA_VERSION,
            meta: trace.meta.clone(),
            example_id: trace.example_id.clone(),
            side: trace.side,
            prompt_text: trace.prompt_text.clone(),
            target_span: trace.target_span,
            n_tokens: trace.n_tokens() as u32,
            layers: trace.layers.keys().copied().collect(),
        };
        serde_json::to_writer(&mut self.inner, &header)?;
        self.inner.write_all(b"\n")?;
        for (&layer, tokens) in &trace.layers {
            for routing in tokens {
                let line = TokenLineRef {
                    record: "token",
                    layer,
                    token_index: routing.token_index,
                    token_text: &routing.token_text,
                    routed_experts: &routing.routed_experts,
                    gate_weights: routing.gate_weights.as_deref(),
                    activation: routing.activation.as_deref(),
                };
                serde_json::to_writer(&mut self.inner, &line)?;
                self.inner.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

#[derive(Serialize)]
struct HeaderRef {
    record: &'static str,
    schema_version: u32,
    meta: ModelMeta,
    example_id: String,
    side: Side,
    prompt_text: String,
    target_span: TargetSpan,
    n_tokens: u32,
    layers: Vec<u32>,
}

#[derive(Serialize)]
struct TokenLineRef<'a> {
    record: &'static str,
    layer: u32,
    token_index: u32,
    token_text: &'a str,
    routed_experts: &'a [u32],
    #[serde(skip_serializing_if = "Option::is_none")]
    gate_weights: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    activation: Option<&'a [f64]>,
}

/// Streaming decoder yielding one trace per header.
pub struct TraceReader<R> {
    inner: R,
    line: usize,
    offset: usize,
    buf: String,
    failed: bool,
    last_header: usize,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(inner: R) -> Self {
        TraceReader { inner, line: 0, offset: 0, buf: String::new(), failed: false, last_header: 0 }
    }

    /// Reads the next non-blank line. Returns `None` at end of input.
    fn next_line(&mut self) -> Result<Option<(Line, usize)>> {
        loop {
            self.buf.clear();
            let start = self.offset;
            let read = self.inner.read_line(&mut self.buf)?;
            if read == 0 {
                return Ok(None);
            }
            self.line += 1;
            self.offset += read;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(text).map_err(|err| Error::Parse {
                line: self.line,
                offset: start + err.column().saturating_sub(1),
                message: if self.buf.ends_with('\n') {
                    err.to_string()
                } else {
                    format!("{err} (final line is truncated)")
                },
            })?;
            return Ok(Some((parsed, self.line)));
        }
    }

    fn read_trace(&mut self, header: Header, header_line: usize) -> Result<RoutingTrace> {
        if header.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: header.schema_version, expected: SCHEMA_VERSION });
        }
        let schema = |line: usize, message: String| Error::Schema { line, message };
        header.meta.validate().map_err(|err| schema(header_line, err.to_string()))?;
        if header.layers.is_empty() {
            return Err(schema(header_line, "header lists no layers".into()));
        }
        if header.layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(schema(header_line, "header layers must be strictly increasing".into()));
        }
        if let Some(layer) = header.layers.iter().find(|l| !header.meta.has_layer(**l)) {
            return Err(schema(header_line, format!("layer {layer} is not listed in meta.moe_layers")));
        }
        let label = format!("{}/{}", header.example_id, header.side);
        let mut layers = BTreeMap::new();
        for &layer in &header.layers {
            let mut tokens = Vec::with_capacity(header.n_tokens as usize);
            for position in 0..header.n_tokens {
                let (line, line_no) = self.next_line()?.ok_or_else(|| Error::Parse {
                    line: self.line + 1,
                    offset: self.offset,
                    message: format!("trace {label} truncated: missing layer {layer} token {position}"),
                })?;
                let token = match line {
                    Line::Token(token) => token,
                    Line::Trace(_) => {
                        return Err(schema(
                            line_no,
                            format!("trace {label}: new header before layer {layer} token {position}"),
                        ))
                    }
                };
                if token.layer != layer || token.token_index != position {
                    return Err(schema(
                        line_no,
                        format!(
                            "trace {label}: expected layer {layer} token {position}, found layer {} token {}",
                            token.layer, token.token_index
                        ),
                    ));
                }
                let routing = token.into_routing();
                if let Err((field, message)) = routing.check(&header.meta) {
                    return Err(schema(line_no, format!("trace {label}: {field}: {message}")));
                }
                tokens.push(routing);
            }
            layers.insert(layer, tokens);
        }
        let trace = RoutingTrace {
            meta: header.meta,
            example_id: header.example_id,
            side: header.side,
            prompt_text: header.prompt_text,
            target_span: header.target_span,
            layers,
        };
        trace.validate()?;
        Ok(trace)
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<RoutingTrace>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let result = match self.next_line() {
            Ok(None) => return None,
            Ok(Some((Line::Trace(header), line))) => {
                self.last_header = line;
                self.read_trace(header, line)
            }
            Ok(Some((Line::Token(_), line))) => {
                Err(Error::Schema { line, message: "token record before any trace header".into() })
            }
            Err(err) => Err(err),
        };
        if result.is_err() {
            self.failed = true;
        }
        Some(result)
    }
}
