//! FLOPs accounting for a decoder-only MoE Transformer.
//!
//! Every count is an exact `u128`. The per-component formulas are, for one
//! sequence of `n_ctx` tokens:
//!
//! | component     | FLOPs                                                     |
//! |---------------|-----------------------------------------------------------|
//! | query proj    | `2 n_ctx d²`                                              |
//! | key/value     | `4 n_ctx d² / kv_head_ratio` (GQA) or `2 · query`          |
//! | attn weights  | `2 n_ctx² d`                                              |
//! | value         | `2 n_ctx d²`                                              |
//! | output proj   | `2 n_ctx d²`                                              |
//! | experts       | `n_ctx (2 d E + 6 d d_expert (top_k + n_shared))`         |
//! | logits        | `2 n_ctx d n_vocab`                                       |
//!
//! The backward multiplier is 2 with PEFT and 3 otherwise. It is applied as
//! a whole-step multiplier: `training_total = forward_total · factor`. With
//! gradient checkpointing the forward count becomes
//! `n_layer · layer · (factor + 1) + logits · factor`, which already covers
//! the full step, so `training_total = forward_total` in that branch.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full architectural description of one MoE Transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layer: u64,
    pub n_head: u64,
    pub d_hidden: u64,
    pub d_expert: u64,
    pub n_experts: u64,
    pub top_k: u64,
    pub n_shared_experts: u64,
    pub kv_head_ratio: u64,
    pub n_ctx: u64,
    pub n_vocab: u64,
    pub use_gqa: bool,
    pub use_peft: bool,
    pub use_grad_checkpoint: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_layer", self.n_layer),
            ("n_head", self.n_head),
            ("d_hidden", self.d_hidden),
            ("d_expert", self.d_expert),
            ("n_experts", self.n_experts),
            ("top_k", self.top_k),
            ("kv_head_ratio", self.kv_head_ratio),
            ("n_ctx", self.n_ctx),
            ("n_vocab", self.n_vocab),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        let active = self
            .top_k
            .checked_add(self.n_shared_experts)
            .ok_or(Error::Overflow("active expert count"))?;
        if active > self.n_experts {
            return Err(Error::InvalidConfig(format!(
                "top_k + n_shared_experts ({active}) exceeds n_experts ({})",
                self.n_experts
            )));
        }
        if self.use_gqa {
            if !self.n_head.is_multiple_of(self.kv_head_ratio) {
                return Err(Error::InvalidConfig(format!(
                    "n_head ({}) is not divisible by kv_head_ratio ({})",
                    self.n_head, self.kv_head_ratio
                )));
            }
            if !self.d_hidden.is_multiple_of(self.kv_head_ratio) {
                return Err(Error::InvalidConfig(format!(
                    "d_hidden ({}) is not divisible by kv_head_ratio ({})",
                    self.d_hidden, self.kv_head_ratio
                )));
            }
        }
        Ok(())
    }

    /// Experts evaluated per token (routed plus shared).
    pub fn active_experts(&self) -> u64 {
        self.top_k + self.n_shared_experts
    }

    pub fn sparsity(&self) -> SparsityLevel {
        SparsityLevel {
            n_experts: self.n_experts,
            n_active: self.active_experts(),
        }
    }

    /// Multiplier applied to the forward count: 2 with PEFT, 3 otherwise.
    pub fn backward_factor(&self) -> u128 {
        if self.use_peft {
            2
        } else {
            3
        }
    }
}

/// Sparsity as an exact pair: `S = (E - e_act) / E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparsityLevel {
    pub n_experts: u64,
    pub n_active: u64,
}

impl SparsityLevel {
    pub fn new(n_experts: u64, n_active: u64) -> Result<Self> {
        if n_experts == 0 || n_active == 0 {
            return Err(crate::error::domain("expert counts must be positive"));
        }
        if n_active > n_experts {
            return Err(crate::error::domain(format!(
                "{n_active} active experts exceed {n_experts} total"
            )));
        }
        Ok(Self { n_experts, n_active })
    }

    pub fn as_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.n_experts - self.n_active, self.n_experts)
    }

    pub fn fraction(&self) -> f64 {
        (self.n_experts - self.n_active) as f64 / self.n_experts as f64
    }

    /// Fraction of experts active per token, `1 - S`.
    pub fn active_fraction(&self) -> f64 {
        self.n_active as f64 / self.n_experts as f64
    }
}

/// The five attention terms of one layer and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttentionFlops {
    pub q_proj: u128,
    pub kv_proj: u128,
    pub attn_weight: u128,
    pub value: u128,
    pub out_proj: u128,
    pub total: u128,
}

/// Itemized FLOPs for one sequence of `n_ctx` tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    #[serde(with = "dec_u128")]
    pub q_proj: u128,
    #[serde(with = "dec_u128")]
    pub kv_proj: u128,
    #[serde(with = "dec_u128")]
    pub attn_weight: u128,
    #[serde(with = "dec_u128")]
    pub value: u128,
    #[serde(with = "dec_u128")]
    pub out_proj: u128,
    #[serde(with = "dec_u128")]
    pub attn_total: u128,
    #[serde(with = "dec_u128")]
    pub expert: u128,
    #[serde(with = "dec_u128")]
    pub layer_forward: u128,
    #[serde(with = "dec_u128")]
    pub logits: u128,
    #[serde(with = "dec_u128")]
    pub forward_total: u128,
    #[serde(with = "dec_u128")]
    pub backward_total: u128,
    #[serde(with = "dec_u128")]
    pub training_total: u128,
    /// `(n_layer · layer_forward + logits) / n_ctx`, reduced.
    #[serde(with = "ratio_u128")]
    pub per_token: Ratio<u128>,
}

impl FlopsBreakdown {
    pub const CSV_HEADER: &'static str = "q_proj,kv_proj,attn_weight,value,out_proj,attn_total,expert,layer_forward,logits,forward_total,backward_total,training_total,per_token";

    pub fn per_token_f64(&self) -> f64 {
        ratio_to_f64(&self.per_token)
    }

    /// Training FLOPs per token, `training_total / n_ctx`.
    pub fn training_per_token(&self, n_ctx: u64) -> Ratio<u128> {
        Ratio::new(self.training_total, n_ctx as u128)
    }

    /// One CSV data row matching [`Self::CSV_HEADER`]. The per-token value
    /// is written as `num/den`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}/{}",
            self.q_proj,
            self.kv_proj,
            self.attn_weight,
            self.value,
            self.out_proj,
            self.attn_total,
            self.expert,
            self.layer_forward,
            self.logits,
            self.forward_total,
            self.backward_total,
            self.training_total,
            self.per_token.numer(),
            self.per_token.denom(),
        )
    }
}

/// Expert-to-attention FLOPs ratio of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopsRatio {
    pub attention: u128,
    pub expert: u128,
    pub ratio: Ratio<u128>,
    /// `n_layer · (attention + expert) / n_ctx`.
    pub per_token: Ratio<u128>,
}

impl FlopsRatio {
    pub fn r(&self) -> f64 {
        ratio_to_f64(&self.ratio)
    }
}

pub(crate) fn ratio_to_f64(r: &Ratio<u128>) -> f64 {
    // u128 -> f64 rounds each side once; fine at the API boundary.
    *r.numer() as f64 / *r.denom() as f64
}

fn mul(parts: &[u128], what: &'static str) -> Result<u128> {
    parts
        .iter()
        .try_fold(1u128, |acc, &p| acc.checked_mul(p))
        .ok_or(Error::Overflow(what))
}

fn add(parts: &[u128], what: &'static str) -> Result<u128> {
    parts
        .iter()
        .try_fold(0u128, |acc, &p| acc.checked_add(p))
        .ok_or(Error::Overflow(what))
}

pub fn attention_flops(cfg: &ModelConfig) -> Result<AttentionFlops> {
    cfg.validate()?;
    let n_ctx = cfg.n_ctx as u128;
    let d = cfg.d_hidden as u128;

    let q_proj = mul(&[2, n_ctx, d, d], "query projection")?;
    let kv_proj = if cfg.use_gqa {
        mul(&[4, n_ctx, d, d], "key/value projection")? / cfg.kv_head_ratio as u128
    } else {
        mul(&[2, q_proj], "key/value projection")?
    };
    let attn_weight = mul(&[2, n_ctx, n_ctx, d], "attention weights")?;
    let value = mul(&[2, n_ctx, d, d], "value")?;
    let out_proj = mul(&[2, n_ctx, d, d], "output projection")?;
    let total = add(&[q_proj, kv_proj, attn_weight, value, out_proj], "attention total")?;

    Ok(AttentionFlops {
        q_proj,
        kv_proj,
        attn_weight,
        value,
        out_proj,
        total,
    })
}

/// Router plus gated FFN for every active expert. The router term
/// `2 d E` counts as expert compute.
pub fn expert_flops(cfg: &ModelConfig) -> Result<u128> {
    cfg.validate()?;
    let d = cfg.d_hidden as u128;
    let router = mul(&[2, d, cfg.n_experts as u128], "router")?;
    let ffn = mul(
        &[3, 2, d, cfg.d_expert as u128, cfg.active_experts() as u128],
        "expert FFN",
    )?;
    mul(&[cfg.n_ctx as u128, add(&[router, ffn], "expert")?], "expert")
}

pub fn logits_flops(cfg: &ModelConfig) -> Result<u128> {
    cfg.validate()?;
    mul(
        &[
            2,
            cfg.n_ctx as u128,
            cfg.d_hidden as u128,
            cfg.n_vocab as u128,
        ],
        "logits",
    )
}

pub fn total_flops(cfg: &ModelConfig) -> Result<FlopsBreakdown> {
    let attn = attention_flops(cfg)?;
    let expert = expert_flops(cfg)?;
    let logits = logits_flops(cfg)?;
    let n_layer = cfg.n_layer as u128;
    let factor = cfg.backward_factor();

    let layer_forward = add(&[attn.total, expert], "layer forward")?;
    let layers = mul(&[n_layer, layer_forward], "forward")?;
    let plain_forward = add(&[layers, logits], "forward")?;

    let (forward_total, training_total) = if cfg.use_grad_checkpoint {
        let fwd = add(
            &[
                mul(&[layers, factor + 1], "checkpointed forward")?,
                mul(&[logits, factor], "checkpointed forward")?,
            ],
            "checkpointed forward",
        )?;
        (fwd, fwd)
    } else {
        (plain_forward, mul(&[plain_forward, factor], "training total")?)
    };
    let backward_total = training_total - plain_forward;

    Ok(FlopsBreakdown {
        q_proj: attn.q_proj,
        kv_proj: attn.kv_proj,
        attn_weight: attn.attn_weight,
        value: attn.value,
        out_proj: attn.out_proj,
        attn_total: attn.total,
        expert,
        layer_forward,
        logits,
        forward_total,
        backward_total,
        training_total,
        per_token: Ratio::new(plain_forward, cfg.n_ctx as u128),
    })
}

pub fn flops_ratio(cfg: &ModelConfig) -> Result<FlopsRatio> {
    let attention = attention_flops(cfg)?.total;
    let expert = expert_flops(cfg)?;
    if attention == 0 {
        return Err(crate::error::domain("attention compute is zero"));
    }
    let per_layer = add(&[attention, expert], "per-token compute")?;
    let all_layers = mul(&[cfg.n_layer as u128, per_layer], "per-token compute")?;
    Ok(FlopsRatio {
        attention,
        expert,
        ratio: Ratio::new(expert, attention),
        per_token: Ratio::new(all_layers, cfg.n_ctx as u128),
    })
}

/// Serde adapter writing `u128` as a decimal string.
pub mod dec_u128 {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

mod ratio_u128 {
    use num_rational::Ratio;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        #[serde(with = "super::dec_u128")]
        numerator: u128,
        #[serde(with = "super::dec_u128")]
        denominator: u128,
        value: f64,
    }

    pub fn serialize<S: Serializer>(v: &Ratio<u128>, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            numerator: *v.numer(),
            denominator: *v.denom(),
            value: super::ratio_to_f64(v),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u128>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.denominator == 0 {
            return Err(D::Error::custom("zero denominator"));
        }
        Ok(Ratio::new(r.numerator, r.denominator))
    }
}
