use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use routescope_core::experiments::{
    layerwise_report, paired_diffs, plot_series, run_swords, run_wic, OverlapReport, PairedDiffs, PlotValue, TraceIndex,
};
use routescope_core::overlap::SpanPolicy;
use routescope_core::sae::{
    build_atlas, collect_activations, sae_train, AtlasMode, AtlasQuery, SaeCheckpoint, SaeModel, TrainConfig, TrainLog,
    DEFAULT_LAMBDA, FULL_WIDTH,
};
use routescope_core::stats::{paired_t, sign_flip_permutation, Alternative, PermutationConfig, TestResult};
use routescope_core::synthetic::{
    simulate_corpus, synth_swords_records, synth_wic_records, PerLayer, SimConfig, SynthRecordsConfig,
};
use routescope_core::trace_model::{
    decode_corpus, decode_records, encode_corpus, encode_records, import_swords_triples, import_wic,
    parse_swords_native, read_wic_gold, read_wic_rows, DatasetRecord, OffsetUnit, RoutingTrace, SkippedEntry,
    SwordsThresholds, WicColumns,
};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::{digest_file, ManifestContext, Run, RunManifest};

pub fn execute(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // Only the first call in a process takes effect; replay re-enters here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let ctx = Ctx {
        seed: cli.seed,
        manifest: ManifestContext {
            subcommand: subcommand_name(&cli.command),
            argv,
            seed: cli.seed,
            threads: cli.threads,
        },
        run: Run::new(cli.out_dir.clone()),
    };
    match cli.command {
        Command::Simulate(a) => simulate(ctx, a),
        Command::Records(RecordsCommand::Synth(a)) => records_synth(ctx, a),
        Command::Records(RecordsCommand::ImportWic(a)) => import_wic_cmd(ctx, a),
        Command::Records(RecordsCommand::ImportSwords(a)) => import_swords_cmd(ctx, a),
        Command::Validate(a) => validate(a),
        Command::Experiment(a) => experiment(ctx, a),
        Command::Stats(a) => stats(ctx, a),
        Command::Sae(SaeCommand::Train(a)) => sae_train_cmd(ctx, a),
        Command::Atlas(a) => atlas(ctx, a),
        Command::Plotdata(a) => plotdata(ctx, a),
        Command::Replay(a) => replay(a),
    }
}

fn subcommand_name(command: &Command) -> String {
    match command {
        Command::Simulate(_) => "simulate",
        Command::Records(RecordsCommand::Synth(_)) => "records synth",
        Command::Records(RecordsCommand::ImportWic(_)) => "records import-wic",
        Command::Records(RecordsCommand::ImportSwords(_)) => "records import-swords",
        Command::Validate(_) => "validate",
        Command::Experiment(_) => "experiment",
        Command::Stats(_) => "stats",
        Command::Sae(SaeCommand::Train(_)) => "sae train",
        Command::Atlas(_) => "atlas",
        Command::Plotdata(_) => "plotdata",
        Command::Replay(_) => "replay",
    }
    .into()
}

struct Ctx {
    seed: Option<u64>,
    manifest: ManifestContext,
    run: Run,
}

impl Ctx {
    /// Prints the summary as one JSON line and writes the manifest.
    fn finish(self, primary: &Path, config: impl Serialize, summary: Value) -> CliResult<()> {
        println!("{}", serde_json::to_string(&summary)?);
        self.finish_quiet(primary, config, summary)
    }

    fn finish_quiet(self, primary: &Path, config: impl Serialize, summary: Value) -> CliResult<()> {
        let config = serde_json::to_value(config)?;
        self.run.finish(self.manifest, primary, config, summary)?;
        Ok(())
    }

    fn records(&mut self, path: &Path) -> CliResult<Vec<DatasetRecord>> {
        let bytes = self.run.read(path)?;
        Ok(decode_records(bytes.as_slice())?)
    }

    fn traces(&mut self, path: &Path) -> CliResult<Vec<RoutingTrace>> {
        let bytes = self.run.read(path)?;
        Ok(decode_corpus(bytes.as_slice())?)
    }
}

fn load_toml<T: for<'de> Deserialize<'de>>(run: &mut Run, path: &Path) -> CliResult<T> {
    let text = run.read_string(path)?;
    toml::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })
}

fn parse_arg<T: std::str::FromStr<Err = routescope_core::Error>>(value: &str) -> CliResult<T> {
    Ok(value.parse()?)
}

fn jsonl<T: Serialize>(items: &[T]) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn skip_counts(skipped: &[SkippedEntry]) -> BTreeMap<&'static str, usize> {
    let mut counts = BTreeMap::new();
    for s in skipped {
        *counts.entry(s.reason.code()).or_insert(0) += 1;
    }
    counts
}

// ---------------------------------------------------------------------------

fn simulate(mut ctx: Ctx, a: SimulateArgs) -> CliResult<()> {
    let mut config: SimConfig = match &a.config {
        Some(path) => load_toml(&mut ctx.run, path)?,
        None => SimConfig::default(),
    };
    if let Some(b) = a.beta_semantic {
        config.beta_semantic = PerLayer::Uniform(b);
    }
    if let Some(b) = a.beta_token {
        config.beta_token = PerLayer::Uniform(b);
    }
    if let Some(t) = a.noise_temp {
        config.noise_temp = t;
    }
    if let Some(layers) = a.activation_layers {
        config.activation_layers = layers;
    }
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    let records = ctx.records(&a.records)?;
    let traces = simulate_corpus(&config, &records)?;
    ctx.run.write(&a.out, &encode_corpus(&traces)?)?;
    let summary = json!({ "records": records.len(), "traces": traces.len() });
    ctx.finish(&a.out, &config, summary)
}

fn records_synth(mut ctx: Ctx, a: SynthArgs) -> CliResult<()> {
    let mut config: SynthRecordsConfig = match &a.config {
        Some(path) => load_toml(&mut ctx.run, path)?,
        None => SynthRecordsConfig::default(),
    };
    if let Some(n) = a.n {
        config.n_records = n;
    }
    if let Some(v) = a.vocab_size {
        config.vocab_size = v;
    }
    if let Some(s) = a.n_senses {
        config.n_senses = s;
    }
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    let records = match a.kind {
        KindArg::Wic => synth_wic_records(&config)?,
        KindArg::Swords => synth_swords_records(&config)?,
    };
    ctx.run.write(&a.out, &encode_records(&records)?)?;
    let summary = json!({ "records": records.len() });
    ctx.finish(&a.out, &config, summary)
}

fn import_wic_cmd(mut ctx: Ctx, a: ImportWicArgs) -> CliResult<()> {
    let unit: OffsetUnit = parse_arg(&a.offsets)?;
    let columns = WicColumns {
        word: a.col_word,
        offsets: a.col_offsets,
        sentence_a: a.col_a,
        sentence_b: a.col_b,
        offset_unit: unit,
    };
    let data = ctx.run.read(&a.data)?;
    let gold = ctx.run.read(&a.gold)?;
    let rows = read_wic_rows(data.as_slice(), &columns)?;
    let labels = read_wic_gold(gold.as_slice())?;
    let imported = import_wic(&rows, &labels, unit)?;
    ctx.run.write(&a.out, &encode_records(&imported.records)?)?;
    if let Some(path) = &a.skipped {
        ctx.run.write(path, &jsonl(&imported.skipped)?)?;
    }
    let summary = json!({
        "input": imported.n_input,
        "records": imported.records.len(),
        "skipped": imported.skipped.len(),
        "skip_reasons": skip_counts(&imported.skipped),
    });
    ctx.finish(&a.out, columns, summary)
}

fn import_swords_cmd(mut ctx: Ctx, a: ImportSwordsArgs) -> CliResult<()> {
    let thresholds = SwordsThresholds { equivalent_min: a.equivalent_min, different_max: a.different_max };
    let bytes = ctx.run.read(&a.data)?;
    let root: Value = serde_json::from_slice(&bytes)?;
    let entries = parse_swords_native(&root)?;
    let imported = import_swords_triples(&entries, thresholds)?;
    ctx.run.write(&a.out, &encode_records(&imported.records)?)?;
    if let Some(path) = &a.skipped {
        ctx.run.write(path, &jsonl(&imported.skipped)?)?;
    }
    let summary = json!({
        "input": imported.n_input,
        "records": imported.records.len(),
        "skipped": imported.skipped.len(),
        "skip_reasons": skip_counts(&imported.skipped),
    });
    ctx.finish(&a.out, thresholds, summary)
}

/// Read-only, so no manifest.
fn validate(a: ValidateArgs) -> CliResult<()> {
    let mut run = Run::new(None);
    let bytes = run.read(&a.traces)?;
    let traces = decode_corpus(bytes.as_slice())?;
    let mut ids: Vec<&str> = traces.iter().map(|t| t.example_id.as_str()).collect();
    ids.dedup();
    println!("{}", json!({ "traces": traces.len(), "records": ids.len(), "valid": true }));
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentFile {
    records: Option<PathBuf>,
    traces: Option<PathBuf>,
    span_policy: Option<String>,
    out: Option<PathBuf>,
    diffs: Option<PathBuf>,
    effect: Option<PathBuf>,
}

fn experiment(mut ctx: Ctx, a: ExperimentArgs) -> CliResult<()> {
    let file: ExperimentFile = match &a.config {
        Some(path) => load_toml(&mut ctx.run, path)?,
        None => ExperimentFile::default(),
    };
    let resolved = ExperimentFile {
        records: a.records.or(file.records),
        traces: a.traces.or(file.traces),
        span_policy: a.span_policy.or(file.span_policy),
        out: a.out.or(file.out),
        diffs: a.diffs.or(file.diffs),
        effect: a.effect.or(file.effect),
    };
    let need = |v: &Option<PathBuf>, name: &str| {
        v.clone().ok_or_else(|| CliError::Usage(format!("missing --{name} (flag or config key)")))
    };
    let records_path = need(&resolved.records, "records")?;
    let traces_path = need(&resolved.traces, "traces")?;
    let out = resolved.out.clone().unwrap_or_else(|| PathBuf::from("report.csv"));
    let policy: SpanPolicy = match &resolved.span_policy {
        Some(s) => parse_arg(s)?,
        None => SpanPolicy::default(),
    };

    let records = ctx.records(&records_path)?;
    let index = TraceIndex::new(ctx.traces(&traces_path)?)?;
    let (exp, effect) = match a.kind {
        KindArg::Wic => run_wic(&records, &index, policy)?,
        KindArg::Swords => run_swords(&records, &index, policy)?,
    };
    let diffs = paired_diffs(&exp);
    ctx.run.write(&out, layerwise_report(&exp).to_csv_string()?.as_bytes())?;
    if let Some(path) = &resolved.diffs {
        ctx.run.write(path, &diffs_csv(&diffs)?)?;
    }
    if let Some(path) = &resolved.effect {
        let body = json!({
            "effect": effect,
            "dropped": exp.dropped,
            "unmatched": diffs.unmatched,
            "n_input": exp.n_input,
        });
        let mut bytes = serde_json::to_vec_pretty(&body)?;
        bytes.push(b'\n');
        ctx.run.write(path, &bytes)?;
    }
    let summary = json!({
        "kind": exp.kind,
        "input": exp.n_input,
        "retained": exp.n_retained(),
        "dropped": exp.n_dropped(),
        "pairs": diffs.pair_ids.len(),
        "overall_difference": effect.overall,
    });
    let config = ExperimentFile { span_policy: Some(format!("{policy:?}")), out: Some(out.clone()), ..resolved };
    ctx.finish(&out, config, summary)
}

pub const DIFFS_ID: &str = "pair_id";
pub const DIFFS_AVERAGED: &str = "layer_averaged";

fn diffs_csv(diffs: &PairedDiffs) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![DIFFS_ID.to_string(), DIFFS_AVERAGED.to_string()];
    header.extend(diffs.per_layer.keys().map(|l| format!("layer_{l}")));
    w.write_record(&header)?;
    for (i, id) in diffs.pair_ids.iter().enumerate() {
        let mut row = vec![id.clone(), diffs.layer_averaged[i].to_string()];
        row.extend(diffs.per_layer.values().map(|v| v[i].to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

/// Reads the named columns of a diffs CSV.
fn read_diff_columns(bytes: &[u8], path: &Path, wanted: &[String]) -> CliResult<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers()?.clone();
    let mut columns = Vec::new();
    for name in wanted {
        let idx = header.iter().position(|h| h == name).ok_or_else(|| CliError::Config {
            path: path.to_path_buf(),
            message: format!("no column {name:?} in diffs file"),
        })?;
        columns.push((name.clone(), idx, Vec::new()));
    }
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        for (name, idx, values) in &mut columns {
            let cell = row.get(*idx).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| CliError::Config {
                path: path.to_path_buf(),
                message: format!("row {}: column {name}: {cell:?} is not a number", line + 1),
            })?;
            values.push(v);
        }
    }
    Ok(columns.into_iter().map(|(n, _, v)| (n, v)).collect())
}

#[derive(Debug, Serialize)]
struct StatsLine<'a> {
    column: &'a str,
    #[serde(flatten)]
    result: &'a TestResult,
    alpha: f64,
    decision: &'static str,
}

fn stats(mut ctx: Ctx, a: StatsArgs) -> CliResult<()> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let alternative: Alternative = parse_arg(&a.alternative)?;
    let bytes = ctx.run.read(&a.diffs)?;
    let mut wanted = vec![a.column.clone()];
    if a.per_layer {
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        let layers = reader.headers()?.iter().filter(|h| h.starts_with("layer_") && *h != DIFFS_AVERAGED);
        wanted.extend(layers.map(String::from).filter(|h| *h != a.column).collect::<Vec<_>>());
    }
    let columns = read_diff_columns(&bytes, &a.diffs, &wanted)?;
    let seed = ctx.seed.unwrap_or(0);
    let perm = PermutationConfig { n_resamples: a.resamples, exact_cap: a.exact_cap };

    let mut results = Vec::new();
    for (name, values) in &columns {
        let result = match a.method {
            MethodArg::T => paired_t(values, alternative)?,
            MethodArg::Perm => sign_flip_permutation(values, perm, alternative, seed)?,
        };
        results.push((name.as_str(), result));
    }
    let lines: Vec<StatsLine> = results
        .iter()
        .map(|(column, result)| StatsLine {
            column,
            result,
            alpha: a.alpha,
            decision: if result.rejects(a.alpha) { "reject" } else { "fail_to_reject" },
        })
        .collect();
    for line in &lines {
        println!("{}", serde_json::to_string(line)?);
    }
    let body = json!({ "diffs": a.diffs, "results": lines });
    let mut out = serde_json::to_vec_pretty(&body)?;
    out.push(b'\n');
    ctx.run.write(&a.out, &out)?;
    let config = json!({
        "method": format!("{:?}", a.method).to_lowercase(),
        "alternative": alternative,
        "alpha": a.alpha,
        "permutation": perm,
        "seed": seed,
    });
    let summary = json!({ "results": lines });
    ctx.finish_quiet(&a.out, config, summary)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SaeFile {
    layer: Option<u32>,
    width: Option<usize>,
    lambda: Option<f64>,
    train: Option<toml::Table>,
}

#[derive(Debug, Serialize)]
struct SaeResolved {
    layer: u32,
    width: usize,
    lambda: f64,
    train: TrainConfig,
}

fn sae_train_cmd(mut ctx: Ctx, a: SaeTrainArgs) -> CliResult<()> {
    let file: SaeFile = match &a.config {
        Some(path) => load_toml(&mut ctx.run, path)?,
        None => SaeFile::default(),
    };
    let (preset, preset_width, preset_lambda) = match a.preset {
        PresetArg::Desk => (TrainConfig::desk(), None, 0.1),
        PresetArg::Full => (TrainConfig::full(), Some(FULL_WIDTH), DEFAULT_LAMBDA),
    };
    let mut train = preset;
    if let Some(table) = file.train {
        let mut base = toml::Table::try_from(&train).map_err(|e| CliError::Usage(e.to_string()))?;
        base.extend(table);
        train = base.try_into().map_err(|e: toml::de::Error| CliError::Config {
            path: a.config.clone().unwrap_or_default(),
            message: e.to_string(),
        })?;
    }
    if let Some(v) = a.steps {
        train.steps = v;
    }
    if let Some(v) = a.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        train.learning_rate = v;
    }
    if let Some(seed) = ctx.seed {
        train.seed = seed;
    }
    let layer = a.layer.or(file.layer).ok_or_else(|| CliError::Usage("missing --layer (flag or config key)".into()))?;

    let traces = ctx.traces(&a.traces)?;
    let (data, _) = collect_activations(&traces, layer)?;
    let d = data.ncols();
    let width = a.width.or(file.width).or(preset_width).unwrap_or(4 * d);
    let lambda = a.lambda.or(file.lambda).unwrap_or(preset_lambda);
    let resolved = SaeResolved { layer, width, lambda, train };

    let model = SaeModel::new(d, width, lambda, resolved.train.seed)?;
    let (model, log) = sae_train(model, data.view(), &resolved.train)?;
    let checkpoint = SaeCheckpoint::from_model(&model, resolved.train.seed, resolved.train.steps);
    let mut bytes = serde_json::to_vec(&checkpoint)?;
    bytes.push(b'\n');
    ctx.run.write(&a.out, &bytes)?;
    if let Some(path) = &a.log {
        ctx.run.write(path, &log_csv(&log)?)?;
    }
    let last = log.entries.last();
    let summary = json!({
        "samples": data.nrows(),
        "d": d,
        "width": width,
        "final_loss": last.map(|e| e.loss),
        "final_l0": last.map(|e| e.l0),
        "total_resets": log.total_resets,
    });
    ctx.finish(&a.out, resolved, summary)
}

fn log_csv(log: &TrainLog) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &log.entries {
        w.serialize(e)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

fn atlas(mut ctx: Ctx, a: AtlasArgs) -> CliResult<()> {
    let mode: AtlasMode = parse_arg(&a.mode)?;
    let query = match (&a.token, a.feature) {
        (Some(t), _) => AtlasQuery::Token(t.clone()),
        (None, Some(f)) => AtlasQuery::Feature(f),
        (None, None) => return Err(CliError::Usage("pass --token or --feature".into())),
    };
    let bytes = ctx.run.read(&a.model)?;
    let checkpoint: SaeCheckpoint = serde_json::from_slice(&bytes)?;
    let model = checkpoint.into_model()?;
    let traces = ctx.traces(&a.traces)?;
    let atlas = build_atlas(&model, &traces, a.layer, &query, a.top_m, mode)?;
    let mut csv_bytes = Vec::new();
    atlas.write_csv(&mut csv_bytes)?;
    ctx.run.write(&a.out, &csv_bytes)?;
    let config = json!({ "layer": a.layer, "query": query, "top_m": a.top_m, "mode": mode });
    let summary = json!({
        "feature": atlas.feature,
        "rows": atlas.entries.len(),
        "marked_experts": atlas.marked_experts,
    });
    ctx.finish(&a.out, config, summary)
}

fn plotdata(mut ctx: Ctx, a: PlotdataArgs) -> CliResult<()> {
    let value: PlotValue = parse_arg(&a.value)?;
    let bytes = ctx.run.read(&a.report)?;
    let report = OverlapReport::read_csv(bytes.as_slice())?;
    let (conditions, rows) = plot_series(&report, value)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", conditions[0].as_str(), conditions[1].as_str(), "difference"])?;
    for r in &rows {
        w.write_record([
            r.layer.to_string(),
            r.series_1.to_string(),
            r.series_2.to_string(),
            r.difference.to_string(),
        ])?;
    }
    let out = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    ctx.run.write(&a.out, &out)?;
    let summary = json!({ "layers": rows.len(), "series": conditions });
    ctx.finish(&a.out, json!({ "value": value }), summary)
}

/// Inputs must be unchanged; outputs must come back with the recorded digests.
/// Paths are resolved against the current directory, as in the original run.
fn replay(a: ReplayArgs) -> CliResult<()> {
    let text =
        std::fs::read_to_string(&a.manifest).map_err(|source| CliError::Io { path: a.manifest.clone(), source })?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    if manifest.subcommand == "replay" {
        return Err(CliError::Replay("manifest records a replay".into()));
    }
    for input in &manifest.inputs {
        let now = digest_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CliError::Replay(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let argv = std::iter::once("routescope".to_string()).chain(manifest.argv.iter().cloned());
    let cli =
        Cli::try_parse_from(argv).map_err(|e| CliError::Replay(format!("recorded argv no longer parses: {e}")))?;
    execute(cli, manifest.argv.clone())?;
    let mut mismatched = Vec::new();
    for output in &manifest.outputs {
        if digest_file(Path::new(&output.path))? != output.sha256 {
            mismatched.push(output.path.clone());
        }
    }
    if !mismatched.is_empty() {
        return Err(CliError::Replay(format!("outputs differ: {}", mismatched.join(", "))));
    }
    println!("{}", json!({ "replay": "identical", "outputs": manifest.outputs.len() }));
    Ok(())
}
