//! A seeded router simulator with known ground truth.
//!
//! Every layer scores each expert with
//! `beta_semantic * sense_affinity + beta_token * token_affinity + noise_temp * gumbel`
//! and keeps the top k, ties going to the lower expert id. Semantic coupling
//! makes routing follow the annotated sense of a target; token coupling makes
//! it follow surface identity. Synthetic pre-router activations are
//! `sense_embedding + token_embedding + gaussian noise`.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, FieldPath, Result};
use crate::trace_model::{
    render_prompt, CharSpan, DatasetRecord, ModelMeta, PromptMode, RoutingTrace, SenseLabel, Side, SwordsRecord,
    TargetAnnotation, TargetSpan, TokenRouting, WicRecord,
};

/// One value for every layer, or one per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerLayer {
    Uniform(f64),
    Layers(Vec<f64>),
}

impl Default for PerLayer {
    fn default() -> Self {
        PerLayer::Uniform(0.0)
    }
}

impl PerLayer {
    pub fn resolve(&self, n_layers: usize) -> Result<Vec<f64>> {
        match self {
            PerLayer::Uniform(v) => Ok(vec![*v; n_layers]),
            PerLayer::Layers(v) if v.len() == n_layers => Ok(v.clone()),
            PerLayer::Layers(v) => Err(Error::invalid(format!("{} per-layer values for {n_layers} layers", v.len()))),
        }
    }
}

/// How tokens outside the target span are routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextRouting {
    /// Same noisy rule as targets, with the token affinity at full coupling.
    #[default]
    Noisy,
    /// Noise-free top-k of the token affinity; cheap, and leaves target
    /// routing untouched.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub model_id: String,
    pub total_experts: u32,
    pub routed_active: u32,
    pub shared_experts: u32,
    pub n_layers: u32,
    /// Activation dimension.
    pub d: usize,
    pub beta_semantic: PerLayer,
    pub beta_token: PerLayer,
    pub noise_temp: f64,
    pub seed: u64,
    pub vocab_size: u32,
    pub n_senses: u32,
    /// Standard deviation of the affinity tables.
    pub affinity_scale: f64,
    pub activation_noise: f64,
    /// Layers whose token records carry activation vectors.
    pub activation_layers: Vec<u32>,
    pub emit_gate_weights: bool,
    /// Give each sense its own block of `N / n_senses` experts, so that pure
    /// semantic routing sends different senses to disjoint expert sets.
    pub disjoint_sense_supports: bool,
    pub context_routing: ContextRouting,
    pub prompt_mode: PromptMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            model_id: "synthetic".into(),
            total_experts: 64,
            routed_active: 6,
            shared_experts: 0,
            n_layers: 4,
            d: 16,
            beta_semantic: PerLayer::Uniform(0.5),
            beta_token: PerLayer::Uniform(0.25),
            noise_temp: 1.0,
            seed: 0,
            vocab_size: 512,
            n_senses: 64,
            affinity_scale: 1.0,
            activation_noise: 0.1,
            activation_layers: Vec::new(),
            emit_gate_weights: false,
            disjoint_sense_supports: false,
            context_routing: ContextRouting::Noisy,
            prompt_mode: PromptMode::Standard,
        }
    }
}

const MAX_TABLE_ENTRIES: usize = 1 << 27;

impl SimConfig {
    pub fn meta(&self) -> Result<ModelMeta> {
        let mut meta = ModelMeta::new(
            self.model_id.clone(),
            self.total_experts,
            self.routed_active,
            self.shared_experts,
            (0..self.n_layers).collect(),
        )?;
        meta.vocab_note = format!("synthetic vocabulary of {} token ids", self.vocab_size);
        Ok(meta)
    }

    pub fn betas(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n_layers as usize;
        Ok((self.beta_semantic.resolve(n)?, self.beta_token.resolve(n)?))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::validation(FieldPath::new(field), message));
        self.meta()?;
        let (sem, tok) = self.betas()?;
        for (layer, (s, t)) in sem.iter().zip(&tok).enumerate() {
            if !(0.0..=1.0).contains(s) || !(0.0..=1.0).contains(t) {
                return bad("beta_semantic", format!("layer {layer}: betas must lie in [0, 1], got ({s}, {t})"));
            }
            if s + t > 1.0 + 1e-12 {
                return bad("beta_token", format!("layer {layer}: beta_semantic + beta_token = {} > 1", s + t));
            }
        }
        if !(self.noise_temp >= 0.0 && self.noise_temp.is_finite()) {
            return bad("noise_temp", format!("must be finite and >= 0, got {}", self.noise_temp));
        }
        if !(self.affinity_scale > 0.0 && self.affinity_scale.is_finite()) {
            return bad("affinity_scale", "must be positive".into());
        }
        if !(self.activation_noise >= 0.0 && self.activation_noise.is_finite()) {
            return bad("activation_noise", "must be finite and >= 0".into());
        }
        if self.vocab_size == 0 || self.n_senses == 0 || self.d == 0 {
            return bad("vocab_size", "vocab_size, n_senses and d must be positive".into());
        }
        if let Some(layer) = self.activation_layers.iter().find(|l| **l >= self.n_layers) {
            return bad("activation_layers", format!("layer {layer} outside 0..{}", self.n_layers));
        }
        if self.disjoint_sense_supports && self.n_senses * self.routed_active > self.total_experts {
            return bad(
                "disjoint_sense_supports",
                format!("{} senses x k = {} exceed N = {}", self.n_senses, self.routed_active, self.total_experts),
            );
        }
        let table = self.n_layers as usize * (self.vocab_size + self.n_senses) as usize * self.total_experts as usize;
        if table > MAX_TABLE_ENTRIES {
            return bad("vocab_size", format!("affinity tables would hold {table} entries; shrink vocab or layers"));
        }
        Ok(())
    }
}

/// Replaces the coupling schedule with one `(beta_semantic, beta_token)` pair
/// per layer.
pub fn ramp_profile(config: &SimConfig, per_layer_betas: &[(f64, f64)]) -> Result<SimConfig> {
    if per_layer_betas.len() != config.n_layers as usize {
        return Err(Error::invalid(format!("{} beta pairs for {} layers", per_layer_betas.len(), config.n_layers)));
    }
    let mut out = config.clone();
    out.beta_semantic = PerLayer::Layers(per_layer_betas.iter().map(|b| b.0).collect());
    out.beta_token = PerLayer::Layers(per_layer_betas.iter().map(|b| b.1).collect());
    out.validate()?;
    Ok(out)
}

fn derive_rng(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Affinity and embedding tables drawn from the config seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub config: SimConfig,
    pub meta: ModelMeta,
    beta_sem: Vec<f64>,
    beta_tok: Vec<f64>,
    /// `[layer, sense, expert]`
    pub sense_affinity: Array3<f64>,
    /// `[layer, token, expert]`
    pub token_affinity: Array3<f64>,
    pub sense_embedding: Array2<f64>,
    pub token_embedding: Array2<f64>,
    /// Precomputed context routing under [`ContextRouting::Fixed`].
    fixed_context: Option<Array3<u32>>,
}

impl SimWorld {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let meta = config.meta()?;
        let (beta_sem, beta_tok) = config.betas()?;
        let seed = config.seed.to_le_bytes();
        let (l, n) = (config.n_layers as usize, config.total_experts as usize);
        let (v, s) = (config.vocab_size as usize, config.n_senses as usize);
        let scale = config.affinity_scale;

        let mut rng = derive_rng(&[b"sense-affinity", &seed]);
        let block = if config.disjoint_sense_supports { n / s } else { n };
        let sense_affinity = Array3::from_shape_fn((l, s, n), |(_, sense, expert)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if config.disjoint_sense_supports {
                if expert / block == sense {
                    scale * z.abs()
                } else {
                    // far below any in-block value
                    scale * (z - 50.0)
                }
            } else {
                scale * z
            }
        });
        let mut rng = derive_rng(&[b"token-affinity", &seed]);
        let token_affinity = Array3::from_shape_fn((l, v, n), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        let mut rng = derive_rng(&[b"sense-embedding", &seed]);
        let sense_embedding = Array2::from_shape_fn((s, config.d), |_| StandardNormal.sample(&mut rng));
        let mut rng = derive_rng(&[b"token-embedding", &seed]);
        let token_embedding = Array2::from_shape_fn((v, config.d), |_| StandardNormal.sample(&mut rng));

        let mut world = SimWorld {
            config: config.clone(),
            meta,
            beta_sem,
            beta_tok,
            sense_affinity,
            token_affinity,
            sense_embedding,
            token_embedding,
            fixed_context: None,
        };
        if config.context_routing == ContextRouting::Fixed {
            let k = config.routed_active as usize;
            let mut table = Array3::zeros((l, v, k));
            let mut logits = vec![0.0; n];
            for layer in 0..l {
                for token in 0..v {
                    for (e, slot) in logits.iter_mut().enumerate() {
                        *slot = world.token_affinity[[layer, token, e]];
                    }
                    for (i, e) in top_k(&logits, k).into_iter().enumerate() {
                        table[[layer, token, i]] = e;
                    }
                }
            }
            world.fixed_context = Some(table);
        }
        Ok(world)
    }

    /// Routes one token at one layer. `sense` is `None` for context tokens,
    /// which put the combined coupling on their token affinity.
    pub fn route(&self, layer: usize, token: u32, sense: Option<u32>, rng: &mut impl Rng) -> Routed {
        let n = self.config.total_experts as usize;
        let k = self.config.routed_active as usize;
        let token = token as usize % self.config.vocab_size as usize;
        let (bs, bt) = (self.beta_sem[layer], self.beta_tok[layer]);
        let mut logits = vec![0.0; n];
        for (e, logit) in logits.iter_mut().enumerate() {
            *logit = match sense {
                Some(s) => {
                    bs * self.sense_affinity[[layer, s as usize % self.config.n_senses as usize, e]]
                        + bt * self.token_affinity[[layer, token, e]]
                }
                None => (bs + bt) * self.token_affinity[[layer, token, e]],
            };
            // Always draw, so every coupling setting sees the same noise.
            let u: f64 = rng.random();
            *logit += self.config.noise_temp * gumbel(u);
        }
        let experts = top_k(&logits, k);
        let gate_weights = self.config.emit_gate_weights.then(|| softmax_selected(&logits, &experts));
        Routed { experts, gate_weights }
    }

    fn activation(&self, token: u32, sense: Option<u32>, rng: &mut impl Rng) -> Vec<f64> {
        let token = token as usize % self.config.vocab_size as usize;
        (0..self.config.d)
            .map(|j| {
                let base = self.token_embedding[[token, j]]
                    + sense.map_or(0.0, |s| self.sense_embedding[[s as usize % self.config.n_senses as usize, j]]);
                let z: f64 = StandardNormal.sample(rng);
                base + self.config.activation_noise * z
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Routed {
    /// In descending logit order.
    pub experts: Vec<u32>,
    pub gate_weights: Option<Vec<f64>>,
}

fn gumbel(u: f64) -> f64 {
    // u in [0, 1); nudge away from 0 to keep the log finite
    let u = u.max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

/// Indices of the k largest values, ties to the lower index.
pub fn top_k(logits: &[f64], k: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..logits.len() as u32).collect();
    let cmp = |a: &u32, b: &u32| logits[*b as usize].total_cmp(&logits[*a as usize]).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    order
}

fn softmax_selected(logits: &[f64], selected: &[u32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    selected.iter().map(|&e| (logits[e as usize] - max).exp() / total).collect()
}

/// Splits text into alphanumeric runs and single punctuation characters,
/// returning each token with its character span.
pub fn tokenize(text: &str) -> Vec<(String, CharSpan)> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_alphanumeric() || c == '_' || c == '\'' && !current.is_empty() {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            tokens.push((std::mem::take(&mut current), CharSpan::new(start, i)));
        }
        if !c.is_whitespace() {
            tokens.push((c.to_string(), CharSpan::new(i, i + 1)));
        }
    }
    if !current.is_empty() {
        let end = start + current.chars().count();
        tokens.push((current, CharSpan::new(start, end)));
    }
    tokens
}

/// Stable token id for text the records do not annotate.
pub fn hashed_token_id(text: &str, vocab_size: u32) -> u32 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.to_lowercase().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % u64::from(vocab_size)) as u32
}

fn simulate_side(world: &SimWorld, record: &DatasetRecord, side: Side) -> Result<RoutingTrace> {
    let annotation = record.annotation(side).ok_or_else(|| {
        Error::validation(
            FieldPath::in_record(record.record_id(), "annotations"),
            format!("no token/sense annotation for side {side}"),
        )
    })?;
    let prompt = render_prompt(record, side, world.config.prompt_mode)?;
    let tokens = tokenize(&prompt.text);
    let covering: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, (_, span))| span.start < prompt.target.end && prompt.target.start < span.end)
        .map(|(i, _)| i)
        .collect();
    let (first, last) = match (covering.first(), covering.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::invalid(format!("target of {} not found among tokens", record.record_id()))),
    };
    let ids: Vec<(u32, Option<u32>)> = tokens
        .iter()
        .enumerate()
        .map(|(i, (text, _))| {
            if (first..=last).contains(&i) {
                (annotation.token_id, Some(annotation.sense_id))
            } else {
                (hashed_token_id(text, world.config.vocab_size), None)
            }
        })
        .collect();
    let seed = world.config.seed.to_le_bytes();
    let mut rng = derive_rng(&[b"trace", &seed, record.record_id().as_bytes(), side.as_str().as_bytes()]);
    let mut layers = BTreeMap::new();
    for (slot, &layer) in world.meta.moe_layers.iter().enumerate() {
        let emit_activation = world.config.activation_layers.contains(&layer);
        let mut routed = Vec::with_capacity(tokens.len());
        for (i, ((text, _), &(token, sense))) in tokens.iter().zip(&ids).enumerate() {
            let mut entry = match (&world.fixed_context, sense) {
                (Some(table), None) => {
                    let row = table.slice(ndarray::s![slot, token as usize, ..]);
                    let mut t = TokenRouting::new(i as u32, text.clone(), row.to_vec());
                    if world.config.emit_gate_weights {
                        let logits: Vec<f64> = (0..world.config.total_experts as usize)
                            .map(|e| world.token_affinity[[slot, token as usize, e]])
                            .collect();
                        t.gate_weights = Some(softmax_selected(&logits, &t.routed_experts));
                    }
                    t
                }
                _ => {
                    let r = world.route(slot, token, sense, &mut rng);
                    let mut t = TokenRouting::new(i as u32, text.clone(), r.experts);
                    t.gate_weights = r.gate_weights;
                    t
                }
            };
            if emit_activation {
                entry.activation = Some(world.activation(token, sense, &mut rng));
            }
            routed.push(entry);
        }
        layers.insert(layer, routed);
    }
    Ok(RoutingTrace {
        meta: world.meta.clone(),
        example_id: record.record_id().to_string(),
        side,
        prompt_text: prompt.text,
        target_span: TargetSpan::new(first as u32, last as u32),
        layers,
    })
}

/// Simulates one trace per record side. Each trace draws from its own stream
/// derived from `(seed, record_id, side)`, so output does not depend on
/// scheduling; traces come back ordered by record id, then side.
pub fn simulate_corpus(config: &SimConfig, records: &[DatasetRecord]) -> Result<Vec<RoutingTrace>> {
    let world = SimWorld::new(config)?;
    simulate_with_world(&world, records)
}

pub fn simulate_with_world(world: &SimWorld, records: &[DatasetRecord]) -> Result<Vec<RoutingTrace>> {
    let mut sorted: Vec<&DatasetRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.record_id().cmp(b.record_id()));
    if let Some(pair) = sorted.windows(2).find(|w| w[0].record_id() == w[1].record_id()) {
        return Err(Error::invalid(format!("duplicate record id {}", pair[0].record_id())));
    }
    for record in &sorted {
        record.validate()?;
    }
    let jobs: Vec<(&DatasetRecord, Side)> =
        sorted.iter().flat_map(|r| r.sides().iter().map(move |s| (*r, *s))).collect();
    jobs.par_iter().map(|(r, s)| simulate_side(world, r, *s)).collect()
}

/// Pseudo-word for a synthetic token id. The trailing `x` keeps it clear of
/// every word in the prompt templates.
pub fn pseudo_word(token_id: u32) -> String {
    const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut id = token_id as usize;
    let mut word = String::new();
    for _ in 0..3 {
        let syllable = id % 70;
        id /= 70;
        word.push_str(ONSETS[syllable / 5]);
        word.push_str(VOWELS[syllable % 5]);
    }
    while id > 0 {
        word.push_str(VOWELS[id % 5]);
        id /= 5;
    }
    word.push('x');
    word
}

const OPENERS: [&str; 6] =
    ["Yesterday the", "I think the", "She said the", "Near the river the", "In the morning the", "Somehow the"];
const CLOSERS: [&str; 6] = [
    "was left alone.",
    "looked different.",
    "caught my eye.",
    "stayed the same.",
    "was hard to see.",
    "seemed important.",
];

fn framed(word: &str, rng: &mut impl Rng) -> (String, CharSpan) {
    let opener = OPENERS[rng.random_range(0..OPENERS.len())];
    let closer = CLOSERS[rng.random_range(0..CLOSERS.len())];
    let start = opener.chars().count() + 1;
    (format!("{opener} {word} {closer}"), CharSpan::new(start, start + word.chars().count()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthRecordsConfig {
    pub n_records: usize,
    pub vocab_size: u32,
    pub n_senses: u32,
    pub seed: u64,
}

impl Default for SynthRecordsConfig {
    fn default() -> Self {
        SynthRecordsConfig { n_records: 200, vocab_size: 512, n_senses: 64, seed: 0 }
    }
}

fn check_synth(config: &SynthRecordsConfig) -> Result<()> {
    if config.n_senses < 2 || config.vocab_size < 3 {
        return Err(Error::invalid("synthetic records need n_senses >= 2 and vocab_size >= 3"));
    }
    Ok(())
}

fn two_distinct(rng: &mut impl Rng, bound: u32) -> (u32, u32) {
    let a = rng.random_range(0..bound);
    let b = (a + rng.random_range(1..bound)) % bound;
    (a, b)
}

/// WiC-style records in blocks of two sharing a target word: a same-sense
/// pair followed by a different-sense pair.
pub fn synth_wic_records(config: &SynthRecordsConfig) -> Result<Vec<DatasetRecord>> {
    check_synth(config)?;
    let mut rng = derive_rng(&[b"wic-records", &config.seed.to_le_bytes()]);
    let mut records = Vec::with_capacity(config.n_records);
    let mut token = 0;
    for i in 0..config.n_records {
        let label = if i % 2 == 0 { SenseLabel::SameSense } else { SenseLabel::DifferentSense };
        if i % 2 == 0 {
            token = rng.random_range(0..config.vocab_size);
        }
        let (sa, sb) = match label {
            SenseLabel::SameSense => {
                let s = rng.random_range(0..config.n_senses);
                (s, s)
            }
            SenseLabel::DifferentSense => two_distinct(&mut rng, config.n_senses),
        };
        let word = pseudo_word(token);
        let (context_a, span_a) = framed(&word, &mut rng);
        let (context_b, span_b) = framed(&word, &mut rng);
        records.push(DatasetRecord::Wic(WicRecord {
            record_id: format!("wic-{i:06}"),
            target_word: word,
            context_a,
            context_b,
            span_a,
            span_b,
            label,
            annotations: vec![
                TargetAnnotation { side: Side::A, token_id: token, sense_id: sa },
                TargetAnnotation { side: Side::B, token_id: token, sense_id: sb },
            ],
        }));
    }
    Ok(records)
}

/// SWORDS-style triples: the equivalent substitute is a different token with
/// the original's sense, the different substitute a different token with a
/// different sense.
pub fn synth_swords_records(config: &SynthRecordsConfig) -> Result<Vec<DatasetRecord>> {
    check_synth(config)?;
    let mut rng = derive_rng(&[b"swords-records", &config.seed.to_le_bytes()]);
    let mut records = Vec::with_capacity(config.n_records);
    for i in 0..config.n_records {
        let original = rng.random_range(0..config.vocab_size);
        let (equivalent, different) = loop {
            let e = rng.random_range(0..config.vocab_size);
            let d = rng.random_range(0..config.vocab_size);
            if e != original && d != original && e != d {
                break (e, d);
            }
        };
        let (sense, other_sense) = two_distinct(&mut rng, config.n_senses);
        let word = pseudo_word(original);
        let (context, target_span) = framed(&word, &mut rng);
        records.push(DatasetRecord::Swords(SwordsRecord {
            record_id: format!("swords-{i:06}"),
            target_word: word,
            context,
            target_span,
            equivalent_word: pseudo_word(equivalent),
            different_word: pseudo_word(different),
            annotations: vec![
                TargetAnnotation { side: Side::Original, token_id: original, sense_id: sense },
                TargetAnnotation { side: Side::Equivalent, token_id: equivalent, sense_id: sense },
                TargetAnnotation { side: Side::Different, token_id: different, sense_id: other_sense },
            ],
        }));
    }
    Ok(records)
}

/// Samples from a known sparse dictionary: `m` random unit directions in
/// `d` dimensions (returned as the columns of a `d x m` matrix), each sample
/// mixing every direction independently with probability `p_active` and a
/// coefficient drawn uniformly from `[0.5, 2)`.
pub fn sparse_dictionary_data(
    d: usize,
    m: usize,
    n_samples: usize,
    p_active: f64,
    seed: u64,
) -> (Array2<f64>, Array2<f64>) {
    let mut rng = derive_rng(&[b"sparse-dictionary", &seed.to_le_bytes()]);
    let mut dictionary: Array2<f64> = Array2::from_shape_fn((d, m), |_| StandardNormal.sample(&mut rng));
    for mut col in dictionary.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col /= norm;
    }
    let mut data = Array2::zeros((n_samples, d));
    for mut row in data.rows_mut() {
        for j in 0..m {
            if rng.random::<f64>() < p_active {
                let c: f64 = rng.random_range(0.5..2.0);
                row.scaled_add(c, &dictionary.column(j));
            }
        }
    }
    (dictionary, data)
}
