//! Shared fixtures for the benchmarks.

use moealloc::scaling::{LawCoefficients, LossLawCoefficients, RunRecord};
use moealloc::{synth, ModelConfig, SynthGrid};

pub fn medium_config() -> ModelConfig {
    ModelConfig {
        n_layer: 16,
        n_head: 16,
        d_hidden: 1024,
        d_expert: 512,
        n_experts: 64,
        top_k: 2,
        n_shared_experts: 1,
        kv_head_ratio: 4,
        n_ctx: 4096,
        n_vocab: 128_000,
        use_gqa: true,
        use_peft: false,
        use_grad_checkpoint: false,
    }
}

/// Noiseless records from the published loss law on a 3x3x4x3 grid.
pub fn synthetic_records() -> Vec<RunRecord> {
    let grid = SynthGrid {
        n: vec![1e8, 3e8, 1e9],
        d: vec![1e9, 1e10, 1e11],
        s: vec![0.8235, 0.9091, 0.9538, 0.9767],
        r: vec![0.3, 0.9, 2.0],
    };
    synth(&LawCoefficients::Final(LossLawCoefficients::PUBLISHED), &grid, 0.0, 0).expect("valid grid")
}
