use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops::ModelConfig;

/// Weight counts with tied input and output embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub total: u128,
    /// Weights touched per token. Only the `top_k + n_shared` experts
    /// count; attention and embeddings count in full.
    pub active: u128,
}

fn mul(parts: &[u128]) -> Result<u128> {
    parts
        .iter()
        .try_fold(1u128, |acc, &p| acc.checked_mul(p))
        .ok_or(Error::Overflow("parameter count"))
}

pub fn parameter_counts(cfg: &ModelConfig) -> Result<ParameterCounts> {
    cfg.validate()?;
    let d = cfg.d_hidden as u128;
    let de = cfg.d_expert as u128;
    let kv = if cfg.use_gqa {
        mul(&[2, d, d])? / cfg.kv_head_ratio as u128
    } else {
        mul(&[2, d, d])?
    };
    let attention = mul(&[2, d, d])? + kv;
    let router = mul(&[d, cfg.n_experts as u128])?;
    let per_expert = mul(&[3, d, de])?;
    let all_experts = mul(&[per_expert, cfg.n_experts as u128])?;
    let active_experts = mul(&[per_expert, cfg.active_experts() as u128])?;
    let embed = mul(&[cfg.n_vocab as u128, d])?;
    let layers = cfg.n_layer as u128;

    let total = mul(&[layers, attention + router + all_experts])?
        .checked_add(embed)
        .ok_or(Error::Overflow("parameter count"))?;
    let active = mul(&[layers, attention + router + active_experts])? + embed;
    Ok(ParameterCounts { total, active })
}
