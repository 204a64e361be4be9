//! The two paired protocols: WiC pairs (same vs different sense) and SWORDS
//! triples (original vs equivalent and original vs different substitute).

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlap::{expected_overlap, pair_layer_scores, LayerScore, SpanPolicy};
use crate::stats::summarize;
use crate::trace_model::{DatasetRecord, ModelMeta, RoutingTrace, SenseLabel, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Wic,
    Swords,
}

/// A comparison bucket. The first of each protocol's two conditions is the
/// meaning-preserving one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    SameSense,
    DifferentSense,
    Equivalent,
    Different,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::SameSense => "same_sense",
            Condition::DifferentSense => "different_sense",
            Condition::Equivalent => "equivalent",
            Condition::Different => "different",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Condition::SameSense, Condition::DifferentSense, Condition::Equivalent, Condition::Different]
            .into_iter()
            .find(|c| c.as_str() == s)
    }

    pub fn is_preserving(self) -> bool {
        matches!(self, Condition::SameSense | Condition::Equivalent)
    }
}

impl ExperimentKind {
    /// (meaning-preserving, meaning-changing)
    pub fn conditions(self) -> [Condition; 2] {
        match self {
            ExperimentKind::Wic => [Condition::SameSense, Condition::DifferentSense],
            ExperimentKind::Swords => [Condition::Equivalent, Condition::Different],
        }
    }
}

/// Per-layer scores of one trace pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub condition: Condition,
    pub layers: Vec<LayerScore>,
    pub applied_policy: SpanPolicy,
}

impl Comparison {
    pub fn mean_score(&self) -> f64 {
        self.layers.iter().map(|l| l.score.score).sum::<f64>() / self.layers.len() as f64
    }
}

/// One WiC pair (a single comparison) or one SWORDS triple (two comparisons
/// sharing the original side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentUnit {
    pub record_id: String,
    pub target_word: String,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentUnit {
    pub fn comparison(&self, condition: Condition) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.condition == condition)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedUnit {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedExperiment {
    pub kind: ExperimentKind,
    /// `None` only when no unit was retained.
    pub meta: Option<ModelMeta>,
    /// Sorted by record id.
    pub units: Vec<ExperimentUnit>,
    pub dropped: Vec<DroppedUnit>,
    pub n_input: usize,
}

impl PairedExperiment {
    pub fn n_retained(&self) -> usize {
        self.units.len()
    }

    pub fn n_dropped(&self) -> usize {
        self.dropped.len()
    }

    pub fn layers(&self) -> Vec<u32> {
        self.meta.as_ref().map(|m| m.moe_layers.clone()).unwrap_or_default()
    }

    fn condition_units(&self, condition: Condition) -> impl Iterator<Item = &Comparison> {
        self.units.iter().filter_map(move |u| u.comparison(condition))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerEffect {
    pub layer: u32,
    pub mean_preserving: f64,
    pub mean_changing: f64,
    /// preserving minus changing
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentEffect {
    pub per_layer: Vec<LayerEffect>,
    /// Mean of the per-layer differences.
    pub overall: f64,
    pub n_units: usize,
    pub n_preserving: usize,
    pub n_changing: usize,
}

/// Routing traces keyed by `(example_id, side)`.
#[derive(Debug, Default)]
pub struct TraceIndex {
    traces: HashMap<(String, Side), RoutingTrace>,
}

impl TraceIndex {
    pub fn new(traces: impl IntoIterator<Item = RoutingTrace>) -> Result<Self> {
        let mut index = HashMap::new();
        for trace in traces {
            let label = trace.record_label();
            if index.insert((trace.example_id.clone(), trace.side), trace).is_some() {
                return Err(Error::invalid(format!("duplicate trace {label}")));
            }
        }
        Ok(TraceIndex { traces: index })
    }

    pub fn get(&self, example_id: &str, side: Side) -> Option<&RoutingTrace> {
        self.traces.get(&(example_id.to_string(), side))
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

type UnitOutcome = std::result::Result<(ExperimentUnit, ModelMeta), DroppedUnit>;

fn drop_unit(record: &DatasetRecord, reason: impl Into<String>) -> DroppedUnit {
    DroppedUnit { record_id: record.record_id().to_string(), reason: reason.into() }
}

fn lookup<'a>(
    index: &'a TraceIndex,
    record: &DatasetRecord,
    side: Side,
) -> std::result::Result<&'a RoutingTrace, DroppedUnit> {
    index.get(record.record_id(), side).ok_or_else(|| drop_unit(record, format!("missing trace for side {side}")))
}

fn compare(
    record: &DatasetRecord,
    a: &RoutingTrace,
    b: &RoutingTrace,
    condition: Condition,
    policy: SpanPolicy,
) -> std::result::Result<Comparison, DroppedUnit> {
    let scores = pair_layer_scores(a, b, policy).map_err(|e| drop_unit(record, e.to_string()))?;
    Ok(Comparison { condition, layers: scores.layers, applied_policy: scores.applied_policy })
}

fn wic_unit(record: &DatasetRecord, index: &TraceIndex, policy: SpanPolicy) -> UnitOutcome {
    let DatasetRecord::Wic(wic) = record else {
        return Err(drop_unit(record, "not a wic record"));
    };
    let a = lookup(index, record, Side::A)?;
    let b = lookup(index, record, Side::B)?;
    let condition = match wic.label {
        SenseLabel::SameSense => Condition::SameSense,
        SenseLabel::DifferentSense => Condition::DifferentSense,
    };
    let comparison = compare(record, a, b, condition, policy)?;
    let unit = ExperimentUnit {
        record_id: wic.record_id.clone(),
        target_word: wic.target_word.clone(),
        comparisons: vec![comparison],
    };
    Ok((unit, a.meta.clone()))
}

fn swords_unit(record: &DatasetRecord, index: &TraceIndex, policy: SpanPolicy) -> UnitOutcome {
    let DatasetRecord::Swords(swords) = record else {
        return Err(drop_unit(record, "not a swords record"));
    };
    let original = lookup(index, record, Side::Original)?;
    let equivalent = lookup(index, record, Side::Equivalent)?;
    let different = lookup(index, record, Side::Different)?;
    let unit = ExperimentUnit {
        record_id: swords.record_id.clone(),
        target_word: swords.target_word.clone(),
        comparisons: vec![
            compare(record, original, equivalent, Condition::Equivalent, policy)?,
            compare(record, original, different, Condition::Different, policy)?,
        ],
    };
    Ok((unit, original.meta.clone()))
}

fn run(
    kind: ExperimentKind,
    records: &[DatasetRecord],
    index: &TraceIndex,
    policy: SpanPolicy,
    unit_fn: fn(&DatasetRecord, &TraceIndex, SpanPolicy) -> UnitOutcome,
) -> Result<(PairedExperiment, TreatmentEffect)> {
    let outcomes: Vec<UnitOutcome> = records.par_iter().map(|r| unit_fn(r, index, policy)).collect();
    let mut units = Vec::new();
    let mut dropped = Vec::new();
    let mut meta: Option<ModelMeta> = None;
    for outcome in outcomes {
        match outcome {
            Ok((unit, unit_meta)) => match &meta {
                Some(m) if *m != unit_meta => dropped.push(DroppedUnit {
                    record_id: unit.record_id,
                    reason: format!("model {} differs from {}", unit_meta.model_id, m.model_id),
                }),
                _ => {
                    meta.get_or_insert(unit_meta);
                    units.push(unit);
                }
            },
            Err(d) => dropped.push(d),
        }
    }
    units.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    dropped.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let experiment = PairedExperiment { kind, meta, units, dropped, n_input: records.len() };
    let effect = treatment_effect(&experiment);
    Ok((experiment, effect))
}

/// Scores every WiC pair and contrasts same-sense with different-sense pairs.
pub fn run_wic(
    records: &[DatasetRecord],
    traces: &TraceIndex,
    policy: SpanPolicy,
) -> Result<(PairedExperiment, TreatmentEffect)> {
    run(ExperimentKind::Wic, records, traces, policy, wic_unit)
}

/// Scores (original, equivalent) and (original, different) for every triple.
pub fn run_swords(
    records: &[DatasetRecord],
    traces: &TraceIndex,
    policy: SpanPolicy,
) -> Result<(PairedExperiment, TreatmentEffect)> {
    run(ExperimentKind::Swords, records, traces, policy, swords_unit)
}

fn layer_mean<'a>(comparisons: impl Iterator<Item = &'a Comparison>, slot: usize) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for c in comparisons {
        sum += c.layers[slot].score.score;
        n += 1;
    }
    (if n == 0 { f64::NAN } else { sum / n as f64 }, n)
}

/// Per-layer condition means and their difference. Units enter in record-id
/// order so the result does not depend on input order.
pub fn treatment_effect(experiment: &PairedExperiment) -> TreatmentEffect {
    let [keep, change] = experiment.kind.conditions();
    let layers = experiment.layers();
    let mut per_layer = Vec::with_capacity(layers.len());
    let mut n_preserving = 0;
    let mut n_changing = 0;
    for (slot, &layer) in layers.iter().enumerate() {
        let (mean_preserving, np) = layer_mean(experiment.condition_units(keep), slot);
        let (mean_changing, nc) = layer_mean(experiment.condition_units(change), slot);
        n_preserving = np;
        n_changing = nc;
        per_layer.push(LayerEffect {
            layer,
            mean_preserving,
            mean_changing,
            difference: mean_preserving - mean_changing,
        });
    }
    let overall = if per_layer.is_empty() {
        f64::NAN
    } else {
        per_layer.iter().map(|l| l.difference).sum::<f64>() / per_layer.len() as f64
    };
    TreatmentEffect { per_layer, overall, n_units: experiment.n_retained(), n_preserving, n_changing }
}

/// Paired differences (preserving minus changing) for significance testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDiffs {
    /// Identifier of each pairing, e.g. `w1|w2` for two matched WiC pairs.
    pub pair_ids: Vec<String>,
    /// Per-pair difference of layer-averaged scores.
    pub layer_averaged: Vec<f64>,
    /// Per-layer differences, aligned with `pair_ids`.
    pub per_layer: BTreeMap<u32, Vec<f64>>,
    /// Units left without a partner.
    pub unmatched: Vec<String>,
}

/// SWORDS triples pair naturally. WiC pairs carry a single label each, so a
/// same-sense pair is matched with a different-sense pair of the same target
/// word, both taken in record-id order; leftovers are reported as unmatched.
pub fn paired_diffs(experiment: &PairedExperiment) -> PairedDiffs {
    let mut out = PairedDiffs {
        pair_ids: Vec::new(),
        layer_averaged: Vec::new(),
        per_layer: experiment.layers().into_iter().map(|l| (l, Vec::new())).collect(),
        unmatched: Vec::new(),
    };
    let mut push = |id: String, keep: &Comparison, change: &Comparison| {
        out.pair_ids.push(id);
        out.layer_averaged.push(keep.mean_score() - change.mean_score());
        for (k, c) in keep.layers.iter().zip(&change.layers) {
            if let Some(column) = out.per_layer.get_mut(&k.layer) {
                column.push(k.score.score - c.score.score);
            }
        }
    };
    let mut unmatched = Vec::new();
    match experiment.kind {
        ExperimentKind::Swords => {
            for unit in &experiment.units {
                match (unit.comparison(Condition::Equivalent), unit.comparison(Condition::Different)) {
                    (Some(e), Some(d)) => push(unit.record_id.clone(), e, d),
                    _ => unmatched.push(unit.record_id.clone()),
                }
            }
        }
        ExperimentKind::Wic => {
            let mut by_word: BTreeMap<&str, (Vec<&ExperimentUnit>, Vec<&ExperimentUnit>)> = BTreeMap::new();
            for unit in &experiment.units {
                let entry = by_word.entry(unit.target_word.as_str()).or_default();
                if unit.comparison(Condition::SameSense).is_some() {
                    entry.0.push(unit);
                } else {
                    entry.1.push(unit);
                }
            }
            for (same, diff) in by_word.values() {
                for (s, d) in same.iter().zip(diff) {
                    let keep = s.comparison(Condition::SameSense).expect("bucketed as same");
                    let change = d.comparison(Condition::DifferentSense).expect("bucketed as different");
                    push(format!("{}|{}", s.record_id, d.record_id), keep, change);
                }
                let paired = same.len().min(diff.len());
                unmatched.extend(same[paired..].iter().chain(&diff[paired..]).map(|u| u.record_id.clone()));
            }
            unmatched.sort();
        }
    }
    out.unmatched = unmatched;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub layer: u32,
    pub condition: String,
    pub mean_o: f64,
    pub expected_o: f64,
    pub mean_score: f64,
    pub n_pairs: usize,
    pub se_o: f64,
    pub se_score: f64,
}

/// Per-layer, per-condition overlap summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverlapReport {
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: [&str; 8] =
    ["layer", "condition", "mean_o", "expected_o", "mean_score", "n_pairs", "se_o", "se_score"];

impl OverlapReport {
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        csv.write_record(REPORT_HEADER)?;
        for row in &self.rows {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
        if header.len() < 6 || header[..6] != REPORT_HEADER[..6] {
            return Err(Error::Schema { line: 1, message: format!("unexpected report header {header:?}") });
        }
        let rows = csv.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?;
        Ok(OverlapReport { rows })
    }

    /// Conditions in first-appearance order.
    pub fn conditions(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for row in &self.rows {
            if !seen.contains(&row.condition) {
                seen.push(row.condition.clone());
            }
        }
        seen
    }
}

/// Rows ordered by layer, then preserving before changing condition. Means
/// and standard errors treat the pair as the sampling unit.
pub fn layerwise_report(experiment: &PairedExperiment) -> OverlapReport {
    let Some(meta) = &experiment.meta else {
        return OverlapReport::default();
    };
    let expected_o = expected_overlap(meta.routed_active, meta.total_experts).unwrap_or(f64::NAN);
    let mut rows = Vec::new();
    for (slot, &layer) in meta.moe_layers.iter().enumerate() {
        for condition in experiment.kind.conditions() {
            let (overlaps, scores): (Vec<f64>, Vec<f64>) = experiment
                .condition_units(condition)
                .map(|c| (c.layers[slot].overlap, c.layers[slot].score.score))
                .unzip();
            if overlaps.is_empty() {
                continue;
            }
            let o = summarize(&overlaps);
            let s = summarize(&scores);
            rows.push(ReportRow {
                layer,
                condition: condition.as_str().to_string(),
                mean_o: o.mean,
                expected_o,
                mean_score: s.mean,
                n_pairs: o.n,
                se_o: o.se,
                se_score: s.se,
            });
        }
    }
    OverlapReport { rows }
}

/// One layer of a two-series chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub layer: u32,
    pub series_1: f64,
    pub series_2: f64,
    pub difference: f64,
}

/// Pivots a report into `(layer, first condition, second condition, difference)`
/// rows over the chosen value column (`mean_score` or `mean_o`).
pub fn plot_series(report: &OverlapReport, value: PlotValue) -> Result<(Vec<String>, Vec<PlotRow>)> {
    let conditions = report.conditions();
    if conditions.len() > 2 {
        return Err(Error::invalid(format!("report has {} conditions, expected 2", conditions.len())));
    }
    let mut by_layer: BTreeMap<u32, [f64; 2]> = BTreeMap::new();
    for row in &report.rows {
        let slot = conditions.iter().position(|c| *c == row.condition).expect("collected above");
        let v = match value {
            PlotValue::Score => row.mean_score,
            PlotValue::Overlap => row.mean_o,
        };
        by_layer.entry(row.layer).or_insert([f64::NAN; 2])[slot] = v;
    }
    let rows = by_layer
        .into_iter()
        .map(|(layer, [a, b])| PlotRow { layer, series_1: a, series_2: b, difference: a - b })
        .collect();
    Ok((conditions, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotValue {
    #[default]
    Score,
    Overlap,
}

impl std::str::FromStr for PlotValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" | "mean_score" => Ok(PlotValue::Score),
            "overlap" | "mean_o" => Ok(PlotValue::Overlap),
            other => Err(Error::invalid(format!("unknown plot value {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::trace_model::{CharSpan, SwordsRecord, TargetSpan, TokenRouting, WicRecord};

    fn meta() -> ModelMeta {
        ModelMeta::new("toy", 8, 2, 0, vec![0, 1]).unwrap()
    }

    fn trace(id: &str, side: Side, experts: [[u32; 2]; 2]) -> RoutingTrace {
        let mut layers = BTreeMap::new();
        for (layer, e) in [0u32, 1].into_iter().zip(experts) {
            layers.insert(layer, vec![TokenRouting::new(0, "w", e.to_vec())]);
        }
        RoutingTrace {
            meta: meta(),
            example_id: id.into(),
            side,
            prompt_text: "w".into(),
            target_span: TargetSpan::single(0),
            layers,
        }
    }

    fn wic(id: &str, word: &str, label: SenseLabel) -> DatasetRecord {
        DatasetRecord::Wic(WicRecord {
            record_id: id.into(),
            target_word: word.into(),
            context_a: word.into(),
            context_b: word.into(),
            span_a: CharSpan::new(0, word.len()),
            span_b: CharSpan::new(0, word.len()),
            label,
            annotations: vec![],
        })
    }

    fn fixture() -> (Vec<DatasetRecord>, TraceIndex) {
        let records = vec![
            wic("w1", "bed", SenseLabel::SameSense),
            wic("w2", "bed", SenseLabel::DifferentSense),
            wic("w3", "run", SenseLabel::SameSense),
            wic("w4", "bank", SenseLabel::DifferentSense),
        ];
        let traces = vec![
            trace("w1", Side::A, [[0, 1], [2, 3]]),
            trace("w1", Side::B, [[0, 1], [2, 4]]),
            trace("w2", Side::A, [[0, 1], [2, 3]]),
            trace("w2", Side::B, [[5, 6], [2, 7]]),
            trace("w3", Side::A, [[0, 1], [2, 3]]),
            trace("w3", Side::B, [[0, 1], [2, 3]]),
        ];
        (records, TraceIndex::new(traces).unwrap())
    }

    #[test]
    fn wic_buckets_and_drops() {
        let (records, index) = fixture();
        let (exp, effect) = run_wic(&records, &index, SpanPolicy::LastToken).unwrap();
        assert_eq!(exp.n_input, exp.n_retained() + exp.n_dropped());
        assert_eq!(exp.n_retained(), 3);
        assert_eq!(exp.dropped[0].record_id, "w4");
        assert!(exp.dropped[0].reason.contains("missing trace"));
        assert_eq!((effect.n_preserving, effect.n_changing), (2, 1));
        // k = 2, N = 8: E[o] = 0.5, score = (o - 0.5) / 1.5
        let s = |o: f64| (o - 0.5) / 1.5;
        assert!((effect.per_layer[0].mean_preserving - 1.0).abs() < 1e-12);
        assert!((effect.per_layer[0].mean_changing - s(0.0)).abs() < 1e-12);
        assert!((effect.per_layer[1].mean_preserving - (s(1.0) + 1.0) / 2.0).abs() < 1e-12);
        assert!((effect.per_layer[1].mean_changing - s(1.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_pairs_have_zero_effect() {
        let records = vec![wic("a", "x", SenseLabel::SameSense), wic("b", "x", SenseLabel::DifferentSense)];
        let traces = ["a", "b"]
            .iter()
            .flat_map(|id| [trace(id, Side::A, [[1, 2], [3, 4]]), trace(id, Side::B, [[1, 2], [3, 4]])]);
        let index = TraceIndex::new(traces).unwrap();
        let (_, effect) = run_wic(&records, &index, SpanPolicy::LastToken).unwrap();
        assert!(effect.per_layer.iter().all(|l| l.difference == 0.0));
        assert_eq!(effect.overall, 0.0);
    }

    #[test]
    fn results_ignore_record_order() {
        let (mut records, index) = fixture();
        let (exp1, eff1) = run_wic(&records, &index, SpanPolicy::LastToken).unwrap();
        records.reverse();
        let (exp2, eff2) = run_wic(&records, &index, SpanPolicy::LastToken).unwrap();
        assert_eq!(exp1, exp2);
        assert_eq!(eff1, eff2);
    }

    #[test]
    fn wic_pairs_match_within_a_word() {
        let (records, index) = fixture();
        let (exp, _) = run_wic(&records, &index, SpanPolicy::LastToken).unwrap();
        let diffs = paired_diffs(&exp);
        assert_eq!(diffs.pair_ids, vec!["w1|w2"]);
        assert_eq!(diffs.unmatched, vec!["w3"]);
        let expected = (1.0 + (1.0 - 0.5) / 1.5) / 2.0 - ((-0.5 / 1.5) + (0.5 / 1.5)) / 2.0;
        assert!((diffs.layer_averaged[0] - expected).abs() < 1e-12);
        assert_eq!(diffs.per_layer.len(), 2);
    }

    #[test]
    fn report_rows_and_round_trip() {
        let (records, index) = fixture();
        let (exp, _) = run_wic(&records, &index, SpanPolicy::LastToken).unwrap();
        let report = layerwise_report(&exp);
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.rows[0].condition, "same_sense");
        assert_eq!(report.rows[1].condition, "different_sense");
        assert_eq!(report.rows[0].expected_o, 0.5);
        let csv = report.to_csv_string().unwrap();
        assert!(csv.starts_with("layer,condition,mean_o,expected_o,mean_score,n_pairs"));
        let back = OverlapReport::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(back, report);
        let (conditions, series) = plot_series(&back, PlotValue::Score).unwrap();
        assert_eq!(conditions, ["same_sense", "different_sense"]);
        assert_eq!(series.len(), 2);
    }

    #[test]
    fn empty_experiment_gives_header_only() {
        let (exp, effect) = run_wic(&[], &TraceIndex::default(), SpanPolicy::LastToken).unwrap();
        assert!(effect.per_layer.is_empty());
        let csv = layerwise_report(&exp).to_csv_string().unwrap();
        assert_eq!(csv, "layer,condition,mean_o,expected_o,mean_score,n_pairs,se_o,se_score\n");
    }

    #[test]
    fn single_pair_report_equals_its_scores() {
        let records = vec![wic("a", "x", SenseLabel::SameSense)];
        let index =
            TraceIndex::new([trace("a", Side::A, [[1, 2], [3, 4]]), trace("a", Side::B, [[1, 5], [6, 7]])]).unwrap();
        let (exp, _) = run_wic(&records, &index, SpanPolicy::LastToken).unwrap();
        let report = layerwise_report(&exp);
        let unit = &exp.units[0].comparisons[0];
        for (row, layer) in report.rows.iter().zip(&unit.layers) {
            assert_eq!(row.mean_score, layer.score.score);
            assert_eq!(row.mean_o, layer.overlap);
            assert_eq!(row.n_pairs, 1);
        }
    }

    #[test]
    fn swords_contributes_two_comparisons() {
        let context = "my show was glorious".to_string();
        let record = DatasetRecord::Swords(SwordsRecord {
            record_id: "s1".into(),
            target_word: "glorious".into(),
            target_span: CharSpan::new(12, 20),
            context,
            equivalent_word: "splendid".into(),
            different_word: "notable".into(),
            annotations: vec![],
        });
        let index = TraceIndex::new([
            trace("s1", Side::Original, [[0, 1], [2, 3]]),
            trace("s1", Side::Equivalent, [[0, 1], [2, 3]]),
            trace("s1", Side::Different, [[4, 5], [6, 7]]),
        ])
        .unwrap();
        let (exp, effect) = run_swords(&[record], &index, SpanPolicy::LastToken).unwrap();
        assert_eq!(exp.units[0].comparisons.len(), 2);
        assert_eq!(effect.per_layer[0].mean_preserving, 1.0);
        let diffs = paired_diffs(&exp);
        assert_eq!(diffs.layer_averaged.len(), 1);
        assert!((diffs.layer_averaged[0] - (1.0 + 0.5 / 1.5)).abs() < 1e-12);
        let report = layerwise_report(&exp);
        assert_eq!(report.conditions(), ["equivalent", "different"]);
    }

    #[test]
    fn duplicate_traces_are_rejected() {
        assert!(
            TraceIndex::new([trace("a", Side::A, [[1, 2], [3, 4]]), trace("a", Side::A, [[1, 2], [3, 4]])]).is_err()
        );
    }
}
