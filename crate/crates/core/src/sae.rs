//! Sparse autoencoder over pre-router activations and the feature atlas that
//! links its features to expert usage.
//!
//! `z = ReLU(W_enc x + b_enc)`, `x̂ = W_dec z`,
//! `L = ||x - x̂||² + λ ||z||₁`, averaged over a batch.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace_model::RoutingTrace;

/// Sparsity coefficient used for the reference runs.
pub const DEFAULT_LAMBDA: f64 = 5.0;
/// Latent width used for the reference runs.
pub const FULL_WIDTH: usize = 28_672;

#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    /// `n x d`
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    /// `d x n`
    pub w_dec: Array2<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub z: Array2<f64>,
    pub x_hat: Array2<f64>,
    /// Batch mean of the per-sample loss.
    pub loss: f64,
    pub mse: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    pub w_dec: Array2<f64>,
}

impl SaeModel {
    /// Random unit-norm decoder columns with the encoder tied to the decoder
    /// transpose and a zero bias.
    pub fn new(d: usize, n: usize, lambda: f64, seed: u64) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::invalid("SAE dimensions must be positive"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w_dec = Array2::from_shape_fn((d, n), |_| StandardNormal.sample(&mut rng));
        normalize_columns(&mut w_dec);
        let w_enc = w_dec.t().to_owned();
        Ok(SaeModel { w_enc, b_enc: Array1::zeros(n), w_dec, lambda })
    }

    pub fn d(&self) -> usize {
        self.w_dec.nrows()
    }

    pub fn n(&self) -> usize {
        self.w_dec.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.w_enc.dim();
        if self.b_enc.len() != n || self.w_dec.dim() != (d, n) {
            return Err(Error::invalid(format!(
                "inconsistent SAE shapes: w_enc {:?}, b_enc {}, w_dec {:?}",
                self.w_enc.dim(),
                self.b_enc.len(),
                self.w_dec.dim()
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.d() {
            return Err(Error::invalid(format!("input dimension {} != SAE dimension {}", x.ncols(), self.d())));
        }
        Ok(())
    }

    /// Pre-activations and latents for a `batch x d` input.
    fn encode_pre(&self, x: &ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let pre = x.dot(&self.w_enc.t()) + &self.b_enc;
        let z = pre.mapv(|v| v.max(0.0));
        (pre, z)
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.encode_pre(&x).1)
    }

    pub fn encode_one(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.d() {
            return Err(Error::invalid(format!("input dimension {} != SAE dimension {}", x.len(), self.d())));
        }
        Ok((self.w_enc.dot(&x) + &self.b_enc).mapv(|v| v.max(0.0)))
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Forward> {
        self.check_input(&x)?;
        let (_, z) = self.encode_pre(&x);
        Ok(self.finish_forward(&x, z))
    }

    fn finish_forward(&self, x: &ArrayView2<f64>, z: Array2<f64>) -> Forward {
        let x_hat = z.dot(&self.w_dec.t());
        let batch = x.nrows().max(1) as f64;
        let mse = (&x_hat - x).mapv(|v| v * v).sum() / batch;
        let l1 = z.sum() / batch;
        Forward { loss: mse + self.lambda * l1, mse, l1, z, x_hat }
    }

    /// Loss and analytic gradients of the batch-mean loss.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>) -> Result<(Forward, Gradients)> {
        self.check_input(&x)?;
        let (pre, z) = self.encode_pre(&x);
        let forward = self.finish_forward(&x, z);
        let batch = x.nrows().max(1) as f64;
        let residual = &forward.x_hat - &x;
        let w_dec = residual.t().dot(&forward.z) * (2.0 / batch);
        let mut dz = residual.dot(&self.w_dec) * 2.0;
        dz += self.lambda;
        Zip::from(&mut dz).and(&pre).for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let w_enc = dz.t().dot(&x) / batch;
        let b_enc = dz.sum_axis(Axis(0)) / batch;
        Ok((forward, Gradients { w_enc, b_enc, w_dec }))
    }
}

/// Forward pass for a single input: `(z, x_hat, loss)`.
pub fn sae_forward(model: &SaeModel, x: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>, f64)> {
    let batch = x.insert_axis(Axis(0));
    let out = model.forward(batch)?;
    Ok((out.z.row(0).to_owned(), out.x_hat.row(0).to_owned(), out.loss))
}

fn normalize_columns(w: &mut Array2<f64>) {
    for mut col in w.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Check for dead features every this many steps.
    pub dead_reset_interval: usize,
    /// A feature is dead when it stayed at zero on every sample of this many
    /// trailing steps.
    pub dead_window: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::full()
    }
}

impl TrainConfig {
    /// 30K steps of batch 4096 at lr 5e-5, dead features reset after 1K steps.
    pub fn full() -> Self {
        TrainConfig {
            steps: 30_000,
            batch_size: 4096,
            learning_rate: 5e-5,
            dead_reset_interval: 1000,
            dead_window: 1000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            log_every: 1000,
        }
    }

    /// A few-minute run for small synthetic problems.
    pub fn desk() -> Self {
        TrainConfig {
            steps: 5000,
            batch_size: 128,
            learning_rate: 1e-3,
            dead_reset_interval: 500,
            dead_window: 500,
            log_every: 250,
            ..TrainConfig::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("steps", self.steps),
            ("batch_size", self.batch_size),
            ("dead_reset_interval", self.dead_reset_interval),
            ("dead_window", self.dead_window),
            ("log_every", self.log_every),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::invalid("need 0 <= beta1, beta2 < 1 and epsilon > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub mse: f64,
    pub l1: f64,
    /// Mean number of active latents per sample.
    pub l0: f64,
    pub dead: usize,
    /// Features re-initialized since the previous entry.
    pub resets: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    pub total_resets: usize,
    /// Steps at which at least one feature was reset.
    pub reset_steps: Vec<usize>,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(model: &SaeModel) -> Self {
        let zeros = || Gradients {
            w_enc: Array2::zeros(model.w_enc.dim()),
            b_enc: Array1::zeros(model.b_enc.len()),
            w_dec: Array2::zeros(model.w_dec.dim()),
        };
        Adam { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, model: &mut SaeModel, g: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let lr = cfg.learning_rate;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        };
        Zip::from(&mut model.w_enc)
            .and(&mut self.m.w_enc)
            .and(&mut self.v.w_enc)
            .and(&g.w_enc)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut model.b_enc)
            .and(&mut self.m.b_enc)
            .and(&mut self.v.b_enc)
            .and(&g.b_enc)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut model.w_dec)
            .and(&mut self.m.w_dec)
            .and(&mut self.v.w_dec)
            .and(&g.w_dec)
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }

    fn reset_feature(&mut self, f: usize) {
        for state in [&mut self.m, &mut self.v] {
            state.w_enc.row_mut(f).fill(0.0);
            state.b_enc[f] = 0.0;
            state.w_dec.column_mut(f).fill(0.0);
        }
    }
}

fn reinit_feature(model: &mut SaeModel, f: usize, rng: &mut impl Rng) {
    let d = model.d();
    let mut col: Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = col.dot(&col).sqrt().max(f64::MIN_POSITIVE);
    col /= norm;
    model.w_dec.column_mut(f).assign(&col);
    model.w_enc.row_mut(f).assign(&col);
    model.b_enc[f] = 0.0;
}

/// Trains with Adam on uniformly sampled mini-batches (with replacement),
/// renormalizing decoder columns after every step and re-initializing dead
/// features every `dead_reset_interval` steps.
pub fn sae_train(mut model: SaeModel, data: ArrayView2<f64>, config: &TrainConfig) -> Result<(SaeModel, TrainLog)> {
    config.validate()?;
    model.validate()?;
    if data.nrows() == 0 {
        return Err(Error::invalid("training data is empty"));
    }
    model.check_input(&data)?;
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model);
    let mut last_active = vec![0usize; n];
    let mut log = TrainLog::default();
    let mut resets_since_log = 0;
    let mut batch = Array2::zeros((config.batch_size, model.d()));
    for step in 1..=config.steps {
        for mut row in batch.rows_mut() {
            row.assign(&data.row(rng.random_range(0..data.nrows())));
        }
        let (forward, grads) = model.loss_and_gradients(batch.view())?;
        if !forward.loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, message: format!("mse = {}, l1 = {}", forward.mse, forward.l1) });
        }
        for (f, col) in forward.z.columns().into_iter().enumerate() {
            if col.iter().any(|v| *v > 0.0) {
                last_active[f] = step;
            }
        }
        adam.step(&mut model, &grads, config);
        normalize_columns(&mut model.w_dec);

        if step % config.dead_reset_interval == 0 {
            let dead: Vec<usize> = (0..n).filter(|&f| step - last_active[f] >= config.dead_window).collect();
            for &f in &dead {
                reinit_feature(&mut model, f, &mut rng);
                adam.reset_feature(f);
                last_active[f] = step;
            }
            if !dead.is_empty() {
                log.reset_steps.push(step);
                log.total_resets += dead.len();
                resets_since_log += dead.len();
            }
        }
        if step % config.log_every == 0 || step == config.steps {
            let l0 = forward.z.iter().filter(|v| **v > 0.0).count() as f64 / config.batch_size as f64;
            let dead = (0..n).filter(|&f| step - last_active[f] >= config.dead_window).count();
            log.entries.push(LogEntry {
                step,
                loss: forward.loss,
                mse: forward.mse,
                l1: forward.l1,
                l0,
                dead,
                resets: std::mem::take(&mut resets_since_log),
            });
        }
    }
    Ok((model, log))
}

/// Self-describing checkpoint: shapes, coefficients and row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeCheckpoint {
    pub format: String,
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
    pub steps_trained: usize,
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<f64>,
}

const CHECKPOINT_FORMAT: &str = "routescope-sae-v1";

impl SaeCheckpoint {
    pub fn from_model(model: &SaeModel, seed: u64, steps_trained: usize) -> Self {
        SaeCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            d: model.d(),
            n: model.n(),
            lambda: model.lambda,
            seed,
            steps_trained,
            w_enc: model.w_enc.iter().copied().collect(),
            b_enc: model.b_enc.to_vec(),
            w_dec: model.w_dec.iter().copied().collect(),
        }
    }

    pub fn into_model(self) -> Result<SaeModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("unknown checkpoint format {:?}", self.format)));
        }
        let shape_err = |e: ndarray::ShapeError| Error::invalid(format!("checkpoint weights: {e}"));
        let model = SaeModel {
            w_enc: Array2::from_shape_vec((self.n, self.d), self.w_enc).map_err(shape_err)?,
            b_enc: Array1::from(self.b_enc),
            w_dec: Array2::from_shape_vec((self.d, self.n), self.w_dec).map_err(shape_err)?,
            lambda: self.lambda,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Greedily pairs each column of `truth` (`d x m`) with a distinct decoder
/// column, taking the largest remaining |cosine| first. Returns
/// `(truth column, feature, |cosine|)` per truth column.
pub fn greedy_match(truth: ArrayView2<f64>, w_dec: ArrayView2<f64>) -> Vec<(usize, usize, f64)> {
    let unit = |m: ArrayView2<f64>| {
        let mut m = m.to_owned();
        normalize_columns(&mut m);
        m
    };
    let cos = unit(truth).t().dot(&unit(w_dec)).mapv(f64::abs);
    let mut cells: Vec<(usize, usize, f64)> = cos.indexed_iter().map(|((i, j), &c)| (i, j, c)).collect();
    cells.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_truth = vec![false; cos.nrows()];
    let mut used_feature = vec![false; cos.ncols()];
    let mut matches = Vec::new();
    for (i, j, c) in cells {
        if !used_truth[i] && !used_feature[j] {
            used_truth[i] = true;
            used_feature[j] = true;
            matches.push((i, j, c));
        }
    }
    matches.sort_by_key(|m| m.0);
    matches
}

/// Activation rows and their token texts at one layer of a corpus.
pub fn collect_activations(traces: &[RoutingTrace], layer: u32) -> Result<(Array2<f64>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut tokens = Vec::new();
    let mut dim = None;
    for trace in traces {
        for token in trace.layer(layer).unwrap_or_default() {
            let Some(a) = &token.activation else { continue };
            if *dim.get_or_insert(a.len()) != a.len() {
                return Err(Error::invalid(format!("activation dimension changes in {}", trace.record_label())));
            }
            rows.extend_from_slice(a);
            tokens.push(token.token_text.clone());
        }
    }
    let Some(d) = dim else {
        return Err(Error::invalid(format!("layer {layer} carries no activations")));
    };
    let matrix = Array2::from_shape_vec((tokens.len(), d), rows).expect("rows have equal length");
    Ok((matrix, tokens))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtlasQuery {
    /// Use the feature with the highest mean activation on this token.
    Token(String),
    Feature(usize),
}

/// How listed tokens are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtlasMode {
    /// Every top-activating token instance is its own row.
    #[default]
    Instances,
    /// One row per distinct token text, at its strongest instance.
    Types,
}

impl std::str::FromStr for AtlasMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "instances" => Ok(AtlasMode::Instances),
            "types" => Ok(AtlasMode::Types),
            other => Err(Error::invalid(format!("unknown atlas mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertCount {
    pub expert: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub token: String,
    pub sae_value: f64,
    /// Up to five experts, by occurrence then id.
    pub experts: Vec<ExpertCount>,
    pub marked: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAtlas {
    pub layer: u32,
    pub feature: usize,
    pub mode: AtlasMode,
    pub entries: Vec<AtlasEntry>,
    /// Experts in the top five of at least half the entries.
    pub marked_experts: Vec<u32>,
}

pub const ATLAS_TOP_EXPERTS: usize = 5;

struct Instance<'a> {
    token: &'a str,
    activation: &'a [f64],
    experts: &'a [u32],
}

/// Builds the atlas for one feature at `layer`.
///
/// Rows are the instances where the feature fires, strongest first. A listed
/// token's expert occurrences count every instance of that token text on which
/// the feature fires; an expert is marked when it is among the top five of at
/// least half the rows.
pub fn build_atlas(
    model: &SaeModel,
    traces: &[RoutingTrace],
    layer: u32,
    query: &AtlasQuery,
    top_m: usize,
    mode: AtlasMode,
) -> Result<FeatureAtlas> {
    let instances: Vec<Instance> = traces
        .iter()
        .flat_map(|t| t.layer(layer).unwrap_or_default())
        .filter_map(|t| {
            t.activation.as_deref().map(|a| Instance {
                token: &t.token_text,
                activation: a,
                experts: &t.routed_experts,
            })
        })
        .collect();
    if instances.is_empty() {
        return Err(Error::invalid(format!("layer {layer} carries no activations")));
    }
    let latents: Vec<Array1<f64>> =
        instances.par_iter().map(|i| model.encode_one(ArrayView1::from(i.activation))).collect::<Result<_>>()?;

    let feature = match query {
        AtlasQuery::Feature(f) if *f < model.n() => *f,
        AtlasQuery::Feature(f) => return Err(Error::invalid(format!("feature {f} outside 0..{}", model.n()))),
        AtlasQuery::Token(text) => {
            let mut sum = Array1::<f64>::zeros(model.n());
            let mut hits = 0;
            for (inst, z) in instances.iter().zip(&latents) {
                if inst.token == text {
                    sum += z;
                    hits += 1;
                }
            }
            if hits == 0 {
                return Err(Error::invalid(format!("token {text:?} has no activations at layer {layer}")));
            }
            // first maximum, so ties go to the lower feature id
            sum.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (f, &v)| if v > best.1 { (f, v) } else { best })
                .0
        }
    };

    let mut occurrences: BTreeMap<&str, BTreeMap<u32, u32>> = BTreeMap::new();
    let mut ranked = Vec::new();
    for (i, (inst, z)) in instances.iter().zip(&latents).enumerate() {
        if z[feature] > 0.0 {
            let counts = occurrences.entry(inst.token).or_default();
            for &e in inst.experts {
                *counts.entry(e).or_default() += 1;
            }
            ranked.push((i, z[feature]));
        }
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if mode == AtlasMode::Types {
        let mut seen = std::collections::HashSet::new();
        ranked.retain(|(i, _)| seen.insert(instances[*i].token));
    }
    ranked.truncate(top_m);

    let mut entries: Vec<AtlasEntry> = ranked
        .iter()
        .map(|&(i, value)| {
            let token = instances[i].token;
            let mut experts: Vec<ExpertCount> =
                occurrences[token].iter().map(|(&expert, &count)| ExpertCount { expert, count }).collect();
            experts.sort_by(|a, b| b.count.cmp(&a.count).then(a.expert.cmp(&b.expert)));
            experts.truncate(ATLAS_TOP_EXPERTS);
            AtlasEntry { token: token.to_string(), sae_value: value, marked: vec![false; experts.len()], experts }
        })
        .collect();

    let mut appearances: BTreeMap<u32, usize> = BTreeMap::new();
    for entry in &entries {
        for e in &entry.experts {
            *appearances.entry(e.expert).or_default() += 1;
        }
    }
    let marked_experts: Vec<u32> =
        appearances.into_iter().filter(|&(_, hits)| 2 * hits >= entries.len()).map(|(e, _)| e).collect();
    for entry in &mut entries {
        for (flag, e) in entry.marked.iter_mut().zip(&entry.experts) {
            *flag = marked_experts.contains(&e.expert);
        }
    }
    Ok(FeatureAtlas { layer, feature, mode, entries, marked_experts })
}

impl FeatureAtlas {
    /// CSV with `token, sae_value` and, for each of the five expert slots, the
    /// expert id, its occurrence count and the consistency mark.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let mut header = vec!["token".to_string(), "sae_value".to_string()];
        for i in 1..=ATLAS_TOP_EXPERTS {
            header.extend([format!("expert_{i}"), format!("count_{i}"), format!("marked_{i}")]);
        }
        csv.write_record(&header)?;
        for entry in &self.entries {
            let mut row = vec![entry.token.clone(), format!("{}", entry.sae_value)];
            for slot in 0..ATLAS_TOP_EXPERTS {
                match entry.experts.get(slot) {
                    Some(e) => row.extend([e.expert.to_string(), e.count.to_string(), entry.marked[slot].to_string()]),
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    }
}
