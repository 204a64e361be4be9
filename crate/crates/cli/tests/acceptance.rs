//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use routescope_core::experiments::{paired_diffs, run_wic, TraceIndex};
use routescope_core::overlap::{expected_overlap, normalized_score, normalized_score_exact, SpanPolicy};
use routescope_core::sae::{build_atlas, greedy_match, sae_train, AtlasMode, AtlasQuery, SaeModel, TrainConfig};
use routescope_core::stats::{
    ks_distance_uniform, paired_t_one_sided, sign_flip_permutation, summarize, Alternative, PermutationConfig,
};
use routescope_core::synthetic::{
    pseudo_word, simulate_corpus, sparse_dictionary_data, synth_wic_records, ContextRouting, PerLayer, SimConfig,
    SimWorld, SynthRecordsConfig,
};
use routescope_core::trace_model::{
    decode_corpus, encode_corpus, CharSpan, DatasetRecord, SenseLabel, Side, TargetAnnotation, WicRecord,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("baseline formula", baseline_formula),
        ("metric identities", metric_identities),
        ("worked value", worked_value),
        ("null calibration", null_calibration),
        ("signal recovery", signal_recovery),
        ("token-routing null", token_routing_null),
        ("statistics oracles", statistics_oracles),
        ("sae", sae),
        ("atlas", atlas),
        ("round-trip and determinism", round_trip_and_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {secs:>7.1}s  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<28} {secs:>7.1}s  {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

fn sim(beta_semantic: f64, beta_token: f64, seed: u64) -> SimConfig {
    SimConfig {
        beta_semantic: PerLayer::Uniform(beta_semantic),
        beta_token: PerLayer::Uniform(beta_token),
        vocab_size: 256,
        n_senses: 32,
        seed,
        ..SimConfig::default()
    }
}

fn wic_records(n: usize, seed: u64) -> Vec<DatasetRecord> {
    synth_wic_records(&SynthRecordsConfig { n_records: n, vocab_size: 256, n_senses: 32, seed }).unwrap()
}

/// Layer-averaged paired differences and the per-layer mean differences.
fn wic_run(cfg: &SimConfig, records: &[DatasetRecord]) -> (Vec<f64>, Vec<f64>) {
    let index = TraceIndex::new(simulate_corpus(cfg, records).unwrap()).unwrap();
    let (exp, effect) = run_wic(records, &index, SpanPolicy::LastToken).unwrap();
    (paired_diffs(&exp).layer_averaged, effect.per_layer.iter().map(|l| l.difference).collect())
}

// ---------------------------------------------------------------------------

fn baseline_formula() -> Check {
    let start = Instant::now();
    let draws = 1_000_000u32;
    let mut worst: f64 = 0.0;
    for (i, &(k, n)) in [(8u32, 256u32), (6, 64), (2, 8), (2, 8), (1, 16), (1, 128)].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let mut pool: Vec<u32> = (0..n).collect();
        let mut draw = |rng: &mut ChaCha8Rng| -> [u64; 4] {
            // partial Fisher-Yates; any starting permutation gives a uniform subset
            let mut mask = [0u64; 4];
            for j in 0..k as usize {
                let r = rng.random_range(j..n as usize);
                pool.swap(j, r);
                mask[(pool[j] / 64) as usize] |= 1 << (pool[j] % 64);
            }
            mask
        };
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            let o: u32 = a.iter().zip(&b).map(|(x, y)| (x & y).count_ones()).sum();
            sum += f64::from(o);
            sum_sq += f64::from(o * o);
        }
        let m = f64::from(draws);
        let mean = sum / m;
        let se = ((sum_sq / m - mean * mean) * m / (m - 1.0)).sqrt() / m.sqrt();
        let target = expected_overlap(k, n).unwrap();
        let z = (mean - target).abs() / se;
        worst = worst.max(z);
        ensure(z <= 3.0, || format!("(k={k}, N={n}): mean {mean} vs {target}, {z:.2} se"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("6 configs x 1e6 pairs, worst |z| = {worst:.2}, {:.1}s", elapsed.as_secs_f64()))
}

fn metric_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut max_f64_gap: f64 = 0.0;
    for _ in 0..10_000 {
        let n: u32 = rng.random_range(2..=1024);
        let k: u32 = rng.random_range(1..n);
        let den: i128 = rng.random_range(1..=8);
        let o = Ratio::new(rng.random_range(0..=i128::from(k) * den), den);

        ensure(normalized_score(f64::from(k), k, n).unwrap().score == 1.0, || format!("o=k gives not 1 at ({k},{n})"))?;
        let chance = expected_overlap(k, n).unwrap();
        ensure(normalized_score(chance, k, n).unwrap().score == 0.0, || format!("o=k²/N gives not 0 at ({k},{n})"))?;
        let (ki, ni) = (i128::from(k), i128::from(n));
        ensure(normalized_score_exact(Ratio::from_integer(ki), k, n).unwrap() == Ratio::from_integer(1), || {
            "exact o=k".into()
        })?;
        ensure(normalized_score_exact(Ratio::new(ki * ki, ni), k, n).unwrap() == Ratio::from_integer(0), || {
            "exact chance".into()
        })?;

        let p_o = o / ki;
        let p_e = Ratio::new(ki, ni);
        let kappa = (p_o - p_e) / (Ratio::from_integer(1) - p_e);
        ensure(normalized_score_exact(o, k, n).unwrap() == kappa, || {
            format!("kappa identity fails at o={o}, ({k},{n})")
        })?;

        let of = *o.numer() as f64 / *o.denom() as f64;
        let s = normalized_score(of, k, n).unwrap();
        let kappa_f = (s.p_o - s.p_e) / (1.0 - s.p_e);
        // first-order rounding bound; 1 - p_e amplifies the error of both forms
        let bound = 8.0 * f64::EPSILON * (1.0 + s.score.abs()) / (1.0 - s.p_e);
        let gap = (kappa_f - s.score).abs();
        max_f64_gap = max_f64_gap.max(gap / bound);
        ensure(gap <= bound, || format!("f64 kappa gap {gap:e} > {bound:e} at o={o}, ({k},{n})"))?;
    }
    for _ in 0..1000 {
        let n: u32 = rng.random_range(2..=512);
        let k: u32 = rng.random_range(1..n);
        let layers = rng.random_range(1..=64);
        let os: Vec<Ratio<i128>> =
            (0..layers).map(|_| Ratio::from_integer(rng.random_range(0..=i128::from(k)))).collect();
        let m = Ratio::from_integer(layers as i128);
        let mean_of_scores = os.iter().map(|&o| normalized_score_exact(o, k, n).unwrap()).sum::<Ratio<i128>>() / m;
        let score_of_mean = normalized_score_exact(os.iter().sum::<Ratio<i128>>() / m, k, n).unwrap();
        ensure(mean_of_scores == score_of_mean, || format!("averaging does not commute at ({k},{n})"))?;
    }
    Ok(format!("1e4 random (o,k,N) exact in rationals, f64 gap at most {max_f64_gap:.2} of the rounding bound; 1000 averaging cases exact"))
}

fn worked_value() -> Check {
    let exact = normalized_score_exact(Ratio::from_integer(3), 8, 256).unwrap();
    ensure(exact == Ratio::new(11, 31), || format!("got {exact}"))?;
    let f = normalized_score(3.0, 8, 256).unwrap().score;
    ensure((f - 11.0 / 31.0).abs() < 1e-15, || format!("f64 {f}"))?;
    Ok(format!("score(3; 8, 256) = {exact} = {f:.6}"))
}

fn null_calibration() -> Check {
    let start = Instant::now();
    let experiments = 1000u64;
    let mut p_values = Vec::new();
    let mut effects = Vec::new();
    for i in 0..experiments {
        let cfg = SimConfig { context_routing: ContextRouting::Fixed, ..sim(0.0, 0.25, 10_000 + i) };
        let (diffs, _) = wic_run(&cfg, &wic_records(200, 20_000 + i));
        ensure(diffs.len() == 100, || format!("experiment {i} has {} pairs", diffs.len()))?;
        p_values.push(paired_t_one_sided(&diffs).unwrap().p_value);
        effects.push(summarize(&diffs).mean);
    }
    let ks = ks_distance_uniform(&p_values);
    let pooled = summarize(&effects);
    let elapsed = start.elapsed();
    ensure(ks < 0.05, || format!("KS distance {ks:.4}"))?;
    ensure(pooled.mean.abs() <= 3.0 * pooled.se, || format!("pooled effect {} (se {})", pooled.mean, pooled.se))?;
    ensure(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "KS {ks:.4} over {experiments} experiments of n=100; pooled effect {:.2e} = {:.2} se; {:.0}s",
        pooled.mean,
        pooled.mean / pooled.se,
        elapsed.as_secs_f64()
    ))
}

fn signal_recovery() -> Check {
    let (diffs, _) = wic_run(&sim(0.5, 0.25, 1), &wic_records(1000, 1));
    let t = paired_t_one_sided(&diffs).unwrap();
    let mean = summarize(&diffs).mean;
    ensure(mean > 0.0 && t.p_value < 0.001, || format!("effect {mean}, p {}", t.p_value))?;

    let ramp = SimConfig {
        n_layers: 6,
        beta_semantic: PerLayer::Layers(vec![0.0, 0.25, 0.6, 0.6, 0.25, 0.0]),
        ..sim(0.0, 0.25, 2)
    };
    let (_, per_layer) = wic_run(&ramp, &wic_records(1000, 2));
    let middle = per_layer[2].min(per_layer[3]);
    let peak = per_layer.iter().cloned().fold(f64::MIN, f64::max);
    ensure(middle > per_layer[0].max(per_layer[5]), || format!("ramp profile {per_layer:?}"))?;
    ensure(peak == per_layer[2] || peak == per_layer[3], || format!("peak off the middle: {per_layer:?}"))?;
    let profile: Vec<String> = per_layer.iter().map(|d| format!("{d:.3}")).collect();
    Ok(format!("1000 pairs: effect {mean:.4}, p = {:.1e}; ramp differences [{}]", t.p_value, profile.join(", ")))
}

fn token_routing_null() -> Check {
    let records = wic_records(1000, 3);
    let clean = SimConfig { noise_temp: 0.0, ..sim(0.0, 1.0, 3) };
    let traces = simulate_corpus(&clean, &records).unwrap();
    let index = TraceIndex::new(traces).unwrap();
    let (exp, effect) = run_wic(&records, &index, SpanPolicy::LastToken).unwrap();
    let perfect = exp.units.iter().flat_map(|u| &u.comparisons).flat_map(|c| &c.layers).all(|l| l.score.score == 1.0);
    ensure(perfect, || "same-token overlap is not perfect without noise".into())?;
    ensure(effect.overall == 0.0, || format!("noise-free effect {}", effect.overall))?;

    let (diffs, _) = wic_run(&sim(0.0, 1.0, 4), &records);
    let s = summarize(&diffs);
    ensure(s.mean.abs() <= 3.0 * s.se, || format!("noisy effect {} (se {})", s.mean, s.se))?;
    Ok(format!("noise-free: every score 1, effect 0; noisy: effect {:.4} = {:.2} se", s.mean, s.mean / s.se))
}

// --- statistics oracles ----------------------------------------------------

fn t_density_df2(x: f64) -> f64 {
    // Γ(3/2) / (√(2π) Γ(1)) = 1 / (2√2)
    (1.0 + x * x / 2.0).powf(-1.5) / (2.0 * std::f64::consts::SQRT_2)
}

/// ∫_t^∞ by composite Simpson after x = t/u, u in (0, 1].
fn upper_tail_df2(t: f64) -> f64 {
    let g = |u: f64| if u == 0.0 { 0.0 } else { t_density_df2(t / u) * t / (u * u) };
    let steps = 200_000;
    let h = 1.0 / steps as f64;
    let inner: f64 = (1..steps).map(|i| g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (g(0.0) + inner + g(1.0)) * h / 3.0
}

fn enumerated_p(diffs: &[f64], alternative: Alternative) -> f64 {
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>() / n as f64;
    let tol = 1e-9 * diffs.iter().map(|d| d.abs()).sum::<f64>() / n as f64;
    let mut hits = 0u64;
    for mask in 0u64..1 << n {
        let mean =
            diffs.iter().enumerate().map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d }).sum::<f64>() / n as f64;
        hits += u64::from(match alternative {
            Alternative::Greater => mean >= observed - tol,
            Alternative::TwoSided => mean.abs() >= observed.abs() - tol,
        });
    }
    (1 + hits) as f64 / (1 + (1u64 << n)) as f64
}

fn statistics_oracles() -> Check {
    let t = paired_t_one_sided(&[1.0, 2.0, 3.0]).unwrap();
    let oracle = upper_tail_df2(t.statistic);
    let gap = (t.p_value - oracle).abs();
    ensure(gap < 1e-6, || format!("t-test p {} vs quadrature {oracle}", t.p_value))?;

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut cases = 0;
    for n in 1..=12usize {
        for trial in 0..40 {
            let diffs: Vec<f64> = if trial % 2 == 0 {
                (0..n).map(|_| f64::from(rng.random_range(-3i32..=3)) * 0.5).collect()
            } else {
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            for alternative in [Alternative::Greater, Alternative::TwoSided] {
                let got = sign_flip_permutation(&diffs, PermutationConfig::default(), alternative, 0).unwrap();
                let want = enumerated_p(&diffs, alternative);
                ensure(got.exact == Some(true) && got.p_value == want, || {
                    format!("n={n} {alternative:?}: {} vs {want} for {diffs:?}", got.p_value)
                })?;
                cases += 1;
            }
        }
    }
    Ok(format!("t p = {:.9} vs quadrature gap {gap:.1e}; permutation equals enumeration on {cases} cases", t.p_value))
}

// --- SAE ---------------------------------------------------------------------

fn gradient_check() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, n, batch) = (5, 7, 3);
        let mut u = || rng.random_range(-1.0..1.0);
        let model = SaeModel {
            w_enc: Array2::from_shape_fn((n, d), |_| u()),
            b_enc: Array1::from_shape_fn(n, |_| u()),
            w_dec: Array2::from_shape_fn((d, n), |_| u()),
            lambda: 0.5,
        };
        let x = Array2::from_shape_fn((batch, d), |_| u());
        let (_, grads) = model.loss_and_gradients(x.view()).unwrap();
        let pre = x.dot(&model.w_enc.t()) + &model.b_enc;
        let loss = |m: &SaeModel| m.forward(x.view()).unwrap().loss;
        let h = 1e-6;
        let mut compare = |analytic: f64, bump: &dyn Fn(&mut SaeModel, f64)| -> Result<(), String> {
            let (mut up, mut down) = (model.clone(), model.clone());
            bump(&mut up, h);
            bump(&mut down, -h);
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-2);
            worst = worst.max(rel);
            ensure(rel < 1e-5, || format!("seed {seed}: analytic {analytic} vs {fd}"))
        };
        for f in 0..n {
            // skip features whose pre-activation sits on the ReLU kink
            if pre.column(f).iter().any(|p| p.abs() < 1e-3) {
                continue;
            }
            for j in 0..d {
                compare(grads.w_enc[[f, j]], &|m, h| m.w_enc[[f, j]] += h)?;
            }
            compare(grads.b_enc[f], &|m, h| m.b_enc[f] += h)?;
        }
        for i in 0..d {
            for f in 0..n {
                compare(grads.w_dec[[i, f]], &|m, h| m.w_dec[[i, f]] += h)?;
            }
        }
    }
    Ok(worst)
}

fn sae() -> Check {
    let worst = gradient_check()?;

    let (truth, data) = sparse_dictionary_data(64, 20, 20_000, 0.15, 11);
    let cfg = TrainConfig { steps: 4000, ..TrainConfig::desk() };
    let (model, _) = sae_train(SaeModel::new(64, 64, 0.1, 3).unwrap(), data.view(), &cfg).map_err(|e| e.to_string())?;
    let recovered = greedy_match(truth.view(), model.w_dec.view()).iter().filter(|m| m.2 > 0.9).count();
    ensure(recovered >= 18, || format!("recovered {recovered}/20"))?;

    let zeros = Array2::zeros((64, 8));
    let cfg = TrainConfig { steps: 1000, batch_size: 16, ..TrainConfig::desk() };
    let (_, log) = sae_train(SaeModel::new(8, 12, 1.0, 0).unwrap(), zeros.view(), &cfg).map_err(|e| e.to_string())?;
    ensure(!log.reset_steps.is_empty() && log.entries.iter().all(|e| e.loss.is_finite()), || {
        format!("no reset on zero input: {:?}", log.reset_steps)
    })?;

    let start = Instant::now();
    let (_, desk_data) = sparse_dictionary_data(64, 128, 20_000, 0.05, 13);
    let desk = TrainConfig::desk();
    let (_, desk_log) =
        sae_train(SaeModel::new(64, 256, 0.1, 5).unwrap(), desk_data.view(), &desk).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("desk run took {elapsed:?}"))?;
    ensure(desk_log.entries.last().map(|e| e.step) == Some(desk.steps), || "desk run stopped early".into())?;

    Ok(format!(
        "grad rel err <= {worst:.1e}; recovered {recovered}/20; zero input resets at {:?}; d=64 n=256 {} steps in {:.1}s",
        log.reset_steps,
        desk.steps,
        elapsed.as_secs_f64()
    ))
}

// --- atlas -------------------------------------------------------------------

fn atlas() -> Check {
    let cfg = SimConfig {
        total_experts: 32,
        routed_active: 4,
        n_layers: 2,
        d: 64,
        n_senses: 4,
        vocab_size: 64,
        noise_temp: 0.0,
        activation_layers: vec![1],
        activation_noise: 0.05,
        disjoint_sense_supports: true,
        ..sim(1.0, 0.0, 9)
    };
    let words: Vec<(u32, u32)> = (0..24).map(|i| (20 + i, i % 4)).collect();
    let records: Vec<DatasetRecord> = words
        .iter()
        .enumerate()
        .map(|(i, &(token, sense))| {
            let word = pseudo_word(token);
            let context = format!("Here the {word} rests.");
            let span = CharSpan::new(9, 9 + word.len());
            DatasetRecord::Wic(WicRecord {
                record_id: format!("atlas-{i:03}"),
                target_word: word,
                context_a: context.clone(),
                context_b: context,
                span_a: span,
                span_b: span,
                label: SenseLabel::SameSense,
                annotations: [Side::A, Side::B]
                    .map(|side| TargetAnnotation { side, token_id: token, sense_id: sense })
                    .to_vec(),
            })
        })
        .collect();
    let world = SimWorld::new(&cfg).unwrap();
    let traces = simulate_corpus(&cfg, &records).unwrap();

    // feature s reads the projection onto sense embedding s
    let e = &world.sense_embedding;
    let mut w_enc = Array2::zeros(e.dim());
    for (s, row) in e.rows().into_iter().enumerate() {
        w_enc.row_mut(s).assign(&(&row / row.dot(&row)));
    }
    let model = SaeModel { w_dec: w_enc.t().to_owned(), b_enc: Array1::from_elem(e.nrows(), -0.5), w_enc, lambda: 1.0 };

    let mut by_sense: BTreeMap<u32, BTreeSet<Vec<u32>>> = BTreeMap::new();
    for &(token, sense) in &words {
        let atlas = build_atlas(&model, &traces, 1, &AtlasQuery::Token(pseudo_word(token)), 10, AtlasMode::Instances)
            .map_err(|e| e.to_string())?;
        ensure(atlas.feature == sense as usize, || format!("token {token} picked feature {}", atlas.feature))?;
        ensure(!atlas.marked_experts.is_empty(), || format!("token {token} marks nothing"))?;
        by_sense.entry(sense).or_default().insert(atlas.marked_experts);
    }
    ensure(by_sense.values().all(|sets| sets.len() == 1), || {
        format!("marked sets differ within a sense: {by_sense:?}")
    })?;
    let sets: Vec<&Vec<u32>> = by_sense.values().map(|s| s.iter().next().unwrap()).collect();
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            ensure(a.iter().all(|x| !b.contains(x)), || format!("senses share marked experts: {sets:?}"))?;
        }
    }
    Ok(format!("{} tokens over {} senses; marked sets {sets:?}", words.len(), sets.len()))
}

// --- round trip and CLI determinism -----------------------------------------

fn round_trip_and_determinism() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut traces = Vec::new();
    for seed in 0..20u64 {
        let n_layers = rng.random_range(1..=4);
        let total: u32 = rng.random_range(8..=96);
        let cfg = SimConfig {
            total_experts: total,
            routed_active: rng.random_range(1..total.min(9)),
            shared_experts: rng.random_range(0..=2),
            n_layers,
            d: rng.random_range(1..=8),
            activation_layers: (0..n_layers).filter(|_| rng.random_bool(0.5)).collect(),
            emit_gate_weights: rng.random_bool(0.5),
            ..sim(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5), seed)
        };
        traces.extend(simulate_corpus(&cfg, &wic_records(10, seed)).unwrap());
    }
    let bytes = encode_corpus(&traces).unwrap();
    let decoded = decode_corpus(bytes.as_slice()).map_err(|e| e.to_string())?;
    ensure(decoded == traces, || "decoded corpus differs".into())?;
    ensure(encode_corpus(&decoded).unwrap() == bytes, || "re-encoding changed bytes".into())?;

    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").canonicalize().unwrap();
    let d = |p: &str| data.join(p).to_string_lossy().into_owned();
    let runs: Vec<Vec<String>> = [
        vec![
            "records",
            "synth",
            "--kind",
            "wic",
            "--n",
            "200",
            "--vocab-size",
            "256",
            "--n-senses",
            "32",
            "--out",
            "wic.jsonl",
        ],
        vec![
            "records",
            "synth",
            "--kind",
            "swords",
            "--n",
            "100",
            "--vocab-size",
            "256",
            "--n-senses",
            "32",
            "--out",
            "swords.jsonl",
        ],
        vec![
            "records",
            "import-wic",
            "--data",
            &d("wic/sample.data.tsv"),
            "--gold",
            &d("wic/sample.gold.txt"),
            "--out",
            "imported_wic.jsonl",
            "--skipped",
            "skipped.jsonl",
        ],
        vec!["records", "import-swords", "--data", &d("swords/sample.json"), "--out", "imported_swords.jsonl"],
        vec!["simulate", "--config", &d("sim.toml"), "--records", "wic.jsonl", "--out", "wic.traces.jsonl"],
        vec![
            "--threads",
            "1",
            "simulate",
            "--config",
            &d("sim.toml"),
            "--records",
            "swords.jsonl",
            "--out",
            "swords.traces.jsonl",
        ],
        vec![
            "experiment",
            "wic",
            "--records",
            "wic.jsonl",
            "--traces",
            "wic.traces.jsonl",
            "--out",
            "wic_report.csv",
            "--diffs",
            "wic_diffs.csv",
            "--effect",
            "wic_effect.json",
        ],
        vec![
            "experiment",
            "swords",
            "--records",
            "swords.jsonl",
            "--traces",
            "swords.traces.jsonl",
            "--span-policy",
            "mean-over-span",
            "--out",
            "swords_report.csv",
        ],
        vec!["stats", "--diffs", "wic_diffs.csv", "--per-layer", "--out", "t.json"],
        vec![
            "--seed",
            "3",
            "stats",
            "--diffs",
            "wic_diffs.csv",
            "--method",
            "perm",
            "--alternative",
            "two-sided",
            "--out",
            "perm.json",
        ],
        vec![
            "--seed",
            "1",
            "sae",
            "train",
            "--preset",
            "desk",
            "--traces",
            "wic.traces.jsonl",
            "--layer",
            "2",
            "--steps",
            "300",
            "--width",
            "32",
            "--out",
            "sae.json",
            "--log",
            "sae_log.csv",
        ],
        vec![
            "atlas",
            "--model",
            "sae.json",
            "--traces",
            "wic.traces.jsonl",
            "--layer",
            "2",
            "--feature",
            "1",
            "--mode",
            "types",
            "--out",
            "atlas.csv",
        ],
        vec!["plotdata", "--report", "wic_report.csv", "--out", "plot.csv"],
    ]
    .iter()
    .map(|args| args.iter().map(|s| s.to_string()).collect())
    .collect();

    let bin = env!("CARGO_BIN_EXE_routescope");
    let mut manifests = Vec::new();
    for args in &runs {
        let out = Command::new(bin).current_dir(dir.path()).args(args).output().unwrap();
        ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
        let primary = &args[args.iter().position(|a| a == "--out").unwrap() + 1];
        manifests.push(format!("{primary}.manifest.json"));
    }
    let mut subcommands = BTreeSet::new();
    for manifest in &manifests {
        let text = std::fs::read_to_string(dir.path().join(manifest)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        subcommands.insert(value["subcommand"].as_str().unwrap().to_string());
        let out = Command::new(bin).current_dir(dir.path()).args(["replay", manifest]).output().unwrap();
        ensure(out.status.success(), || format!("replay {manifest}: {}", String::from_utf8_lossy(&out.stderr)))?;
        let after = std::fs::read_to_string(dir.path().join(manifest)).unwrap();
        ensure(after == text, || format!("{manifest} changed on replay"))?;
    }
    Ok(format!(
        "{} traces round-trip; {} runs replayed byte-identical across {} subcommands",
        traces.len(),
        manifests.len(),
        subcommands.len()
    ))
}
