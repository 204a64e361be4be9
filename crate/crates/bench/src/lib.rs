//! Shared fixtures for the benchmarks.

use routescope_core::synthetic::{simulate_corpus, synth_wic_records, SimConfig, SynthRecordsConfig};
use routescope_core::trace_model::{DatasetRecord, RoutingTrace};

pub fn wic_records(n: usize) -> Vec<DatasetRecord> {
    synth_wic_records(&SynthRecordsConfig { n_records: n, vocab_size: 256, n_senses: 32, seed: 1 })
        .expect("valid synthetic config")
}

/// 64 experts, 6 active, 4 layers, hidden states stored at layer 2.
pub fn sim_config() -> SimConfig {
    SimConfig { vocab_size: 256, n_senses: 32, activation_layers: vec![2], ..SimConfig::default() }
}

pub fn corpus(n: usize) -> (Vec<DatasetRecord>, Vec<RoutingTrace>) {
    let records = wic_records(n);
    let traces = simulate_corpus(&sim_config(), &records).expect("simulation succeeds");
    (records, traces)
}
