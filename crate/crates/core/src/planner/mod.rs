//! Architecture planning: turn a compute budget and sparsity into a target
//! ratio r*, then search the granularity lattice of `(d_hidden, d_expert)`
//! for a config that realizes it.

mod params;
mod preset;
mod store;
mod synth;

pub use params::{parameter_counts, ParameterCounts};
pub use preset::{preset, SizePreset, PRESETS};
pub use store::{LawStore, StoredLossLaw, LAW_STORE_SCHEMA_VERSION};
pub use synth::{synth, SynthGrid};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::alloc::{optimal_ratio, AllocationLaw, SparsityLaw};
use crate::error::{invalid, Error, Result};
use crate::flops::{flops_ratio, ratio_to_f64, total_flops, FlopsBreakdown, ModelConfig};
use crate::scaling::{predict_loss, LossLawCoefficients, RunRecord};

pub const PLAN_RESULT_SCHEMA_VERSION: u32 = 1;

/// Upper bound on lattice steps along `d_hidden`.
const MAX_HIDDEN_STEPS: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    /// Total training FLOPs.
    pub compute_budget: f64,
    /// Training tokens.
    pub tokens: f64,
    /// Sparsity fraction; when absent it is derived from `n_experts`.
    pub sparsity: Option<f64>,
    /// Total experts; when absent it is `round((top_k + n_shared) / (1 - S))`.
    pub n_experts: Option<u64>,
    pub top_k: u64,
    pub n_shared_experts: u64,
    /// Overrides the sparsity law.
    pub law: Option<AllocationLaw>,
    pub d_hidden_seed: u64,
    pub n_layer: u64,
    pub n_head: u64,
    pub n_ctx: u64,
    pub n_vocab: u64,
    pub kv_head_ratio: u64,
    pub use_gqa: bool,
    pub use_peft: bool,
    pub use_grad_checkpoint: bool,
    pub granularity: u64,
    pub ratio_tolerance: f64,
    pub budget_tolerance: f64,
}

impl Default for PlanRequest {
    fn default() -> Self {
        Self {
            compute_budget: 1e21,
            tokens: 2e10,
            sparsity: None,
            n_experts: Some(65),
            top_k: 2,
            n_shared_experts: 1,
            law: None,
            d_hidden_seed: 1024,
            n_layer: 16,
            n_head: 16,
            n_ctx: 4096,
            n_vocab: 128_000,
            kv_head_ratio: 1,
            use_gqa: false,
            use_peft: false,
            use_grad_checkpoint: false,
            granularity: 64,
            ratio_tolerance: 0.05,
            budget_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub schema_version: u32,
    pub feasible: bool,
    pub allocation_law: AllocationLaw,
    pub sparsity: f64,
    pub target_r: f64,
    pub realized_r: f64,
    pub ratio_error: f64,
    /// Target training FLOPs per token, `compute_budget / tokens`.
    pub target_training_per_token: f64,
    pub training_per_token: f64,
    pub budget_error: f64,
    /// Forward FLOPs per token of the chosen config.
    pub per_token_flops: f64,
    pub config: ModelConfig,
    pub flops: FlopsBreakdown,
    pub n_params: u128,
    pub n_active_params: u128,
    pub predicted_loss: Option<f64>,
}

/// One evaluated lattice point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub d_hidden: u64,
    pub d_expert: u64,
    pub ratio_error: f64,
    pub budget_error: f64,
}

impl Candidate {
    pub fn feasible(&self, ratio_tol: f64, budget_tol: f64) -> bool {
        self.ratio_error <= ratio_tol && self.budget_error <= budget_tol
    }
}

/// Resolved search problem shared by the solver and brute-force checks.
#[derive(Debug, Clone)]
pub struct PlanProblem {
    pub base: ModelConfig,
    pub target_r: f64,
    pub target_per_token: f64,
    pub sparsity: f64,
    pub law: AllocationLaw,
    pub request: PlanRequest,
}

impl PlanProblem {
    pub fn new(req: &PlanRequest, sparsity_law: &SparsityLaw) -> Result<Self> {
        if !(req.compute_budget > 0.0 && req.compute_budget.is_finite()) {
            return Err(invalid("compute budget must be positive"));
        }
        if !(req.tokens > 0.0 && req.tokens.is_finite()) {
            return Err(invalid("token count must be positive"));
        }
        if req.granularity == 0 {
            return Err(invalid("granularity must be >= 1"));
        }
        if !(req.ratio_tolerance >= 0.0 && req.budget_tolerance >= 0.0) {
            return Err(invalid("tolerances must be nonnegative"));
        }
        let active = req.top_k + req.n_shared_experts;
        let n_experts = match (req.n_experts, req.sparsity) {
            (Some(e), _) => e,
            (None, Some(s)) => {
                crate::alloc::check_sparsity(s)?;
                (active as f64 / (1.0 - s)).round() as u64
            }
            (None, None) => return Err(invalid("either sparsity or n_experts is required")),
        };
        let base = ModelConfig {
            n_layer: req.n_layer,
            n_head: req.n_head,
            d_hidden: req.granularity,
            d_expert: req.granularity,
            n_experts,
            top_k: req.top_k,
            n_shared_experts: req.n_shared_experts,
            kv_head_ratio: req.kv_head_ratio,
            n_ctx: req.n_ctx,
            n_vocab: req.n_vocab,
            use_gqa: req.use_gqa,
            use_peft: req.use_peft,
            use_grad_checkpoint: req.use_grad_checkpoint,
        };
        ModelConfig {
            d_hidden: req.granularity * req.kv_head_ratio.max(1),
            ..base
        }
        .validate()?;
        let sparsity = req.sparsity.unwrap_or_else(|| base.sparsity().fraction());
        let law = match req.law {
            Some(law) => law,
            None => sparsity_law.coefficients(sparsity)?,
        };
        let target_r = optimal_ratio(&law, req.compute_budget)?;
        Ok(Self {
            base,
            target_r,
            target_per_token: req.compute_budget / req.tokens,
            sparsity,
            law,
            request: req.clone(),
        })
    }

    pub fn config(&self, d_hidden: u64, d_expert: u64) -> ModelConfig {
        ModelConfig {
            d_hidden,
            d_expert,
            ..self.base
        }
    }

    /// Exact errors at one lattice point; `None` if the config is invalid.
    pub fn evaluate(&self, d_hidden: u64, d_expert: u64) -> Option<Candidate> {
        let cfg = self.config(d_hidden, d_expert);
        let r = flops_ratio(&cfg).ok()?.r();
        let flops = total_flops(&cfg).ok()?;
        let per_token = ratio_to_f64(&flops.training_per_token(cfg.n_ctx));
        Some(Candidate {
            d_hidden,
            d_expert,
            ratio_error: (r - self.target_r).abs() / self.target_r,
            budget_error: (per_token - self.target_per_token).abs() / self.target_per_token,
        })
    }

    /// Training FLOPs per token at the smallest expert width for `d_hidden`.
    pub fn min_training_per_token(&self, d_hidden: u64) -> Option<f64> {
        let cfg = self.config(d_hidden, self.request.granularity);
        let flops = total_flops(&cfg).ok()?;
        Some(ratio_to_f64(&flops.training_per_token(cfg.n_ctx)))
    }

    /// Last lattice multiple of `d_hidden` worth visiting: beyond it even the
    /// narrowest expert overshoots the budget tolerance.
    pub fn hidden_steps(&self) -> Result<u64> {
        let g = self.request.granularity;
        let limit = self.target_per_token * (1.0 + self.request.budget_tolerance);
        let mut m = 1;
        loop {
            match self.min_training_per_token(m * g) {
                Some(t) if t > limit => return Ok(m.max(1)),
                None => return Ok(m),
                _ => {}
            }
            if m >= MAX_HIDDEN_STEPS {
                return Err(invalid(format!(
                    "search over d_hidden exceeds {MAX_HIDDEN_STEPS} lattice steps; raise the granularity"
                )));
            }
            m += 1;
        }
    }

    /// Preference order. Feasible candidates first, by budget error; otherwise
    /// by the larger tolerance-normalized error.
    pub fn better(&self, a: &Candidate, b: &Candidate) -> bool {
        let (rt, bt) = (self.request.ratio_tolerance, self.request.budget_tolerance);
        let key = |c: &Candidate| {
            let seed_gap = c.d_hidden.abs_diff(self.request.d_hidden_seed);
            if c.feasible(rt, bt) {
                (0u8, c.budget_error, c.ratio_error, seed_gap, c.d_hidden, c.d_expert)
            } else {
                let score = norm(c.ratio_error, rt).max(norm(c.budget_error, bt));
                (1u8, score, c.budget_error, seed_gap, c.d_hidden, c.d_expert)
            }
        };
        let (ka, kb) = (key(a), key(b));
        (ka.0, ka.1, ka.2, ka.3, ka.4, ka.5)
            .partial_cmp(&(kb.0, kb.1, kb.2, kb.3, kb.4, kb.5))
            .map(|o| o.is_lt())
            .unwrap_or(false)
    }
}

fn norm(err: f64, tol: f64) -> f64 {
    if tol > 0.0 {
        err / tol
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Candidate expert widths at one `d_hidden`. Both ratio and cost are
/// affine in `d_expert`, so the lattice neighbours of the exact anchors
/// cover the optimum. The anchors are the window edges plus the widths
/// that hit the ratio and the budget exactly.
fn expert_candidates(problem: &PlanProblem, d_hidden: u64) -> Vec<u64> {
    let g = problem.request.granularity;
    let cfg1 = problem.config(d_hidden, g);
    let cfg2 = problem.config(d_hidden, 2 * g);
    let (Ok(r1), Ok(r2), Ok(f1), Ok(f2)) = (
        flops_ratio(&cfg1),
        flops_ratio(&cfg2),
        total_flops(&cfg1),
        total_flops(&cfg2),
    ) else {
        return vec![1];
    };
    // Both the ratio and the training count are affine in d_expert.
    let (ra, rb) = (r1.r(), r2.r());
    let r_slope = rb - ra;
    let n_ctx = cfg1.n_ctx;
    let t1 = ratio_to_f64(&f1.training_per_token(n_ctx));
    let t2 = ratio_to_f64(&f2.training_per_token(n_ctx));
    let t_slope = t2 - t1;

    let step_for = |value_at_1: f64, slope: f64, target: f64| -> f64 { 1.0 + (target - value_at_1) / slope };
    let rt = problem.request.ratio_tolerance;
    let mut anchors = vec![
        step_for(ra, r_slope, problem.target_r),
        step_for(ra, r_slope, problem.target_r * (1.0 - rt)),
        step_for(ra, r_slope, problem.target_r * (1.0 + rt)),
        step_for(t1, t_slope, problem.target_per_token),
    ];
    anchors.retain(|a| a.is_finite());
    let mut out: Vec<u64> = anchors
        .iter()
        .flat_map(|&a| {
            let base = a.floor().clamp(1.0, 1e15) as u64;
            [base.saturating_sub(1), base, base + 1, base + 2]
        })
        .map(|m| m.max(1))
        .collect();
    out.push(1);
    out.sort_unstable();
    out.dedup();
    out
}

/// Best lattice point for the request, feasible or not.
pub fn search(problem: &PlanProblem) -> Result<Candidate> {
    let g = problem.request.granularity;
    let steps = problem.hidden_steps()?;
    let mut best: Option<Candidate> = None;
    for mh in 1..=steps {
        let d_hidden = mh * g;
        for me in expert_candidates(problem, d_hidden) {
            let Some(d_expert) = me.checked_mul(g) else {
                continue;
            };
            if let Some(c) = problem.evaluate(d_hidden, d_expert) {
                if best.as_ref().is_none_or(|b| problem.better(&c, b)) {
                    best = Some(c);
                }
            }
        }
    }
    best.ok_or_else(|| Error::Domain("no valid lattice point for this request".into()))
}

pub fn plan(req: &PlanRequest) -> Result<PlanResult> {
    plan_with(req, &SparsityLaw::PUBLISHED, Some(&LossLawCoefficients::PUBLISHED))
}

pub fn plan_with(
    req: &PlanRequest,
    sparsity_law: &SparsityLaw,
    loss_law: Option<&LossLawCoefficients>,
) -> Result<PlanResult> {
    let problem = PlanProblem::new(req, sparsity_law)?;
    let best = search(&problem)?;
    let config = problem.config(best.d_hidden, best.d_expert);
    let flops = total_flops(&config)?;
    let ratio = flops_ratio(&config)?;
    let training_per_token: Ratio<u128> = flops.training_per_token(config.n_ctx);
    let counts = parameter_counts(&config)?;

    let predicted_loss = match loss_law {
        Some(coef) => {
            let rec = RunRecord {
                label: String::new(),
                n: counts.total as f64,
                n_active: counts.active as f64,
                d: req.tokens,
                s: problem.sparsity,
                r: ratio.r(),
                c: req.compute_budget,
                loss: 1.0,
            };
            Some(predict_loss(coef, &rec)?)
        }
        None => None,
    };

    Ok(PlanResult {
        schema_version: PLAN_RESULT_SCHEMA_VERSION,
        feasible: best.feasible(req.ratio_tolerance, req.budget_tolerance),
        allocation_law: problem.law,
        sparsity: problem.sparsity,
        target_r: problem.target_r,
        realized_r: ratio.r(),
        ratio_error: best.ratio_error,
        target_training_per_token: problem.target_per_token,
        training_per_token: ratio_to_f64(&training_per_token),
        budget_error: best.budget_error,
        per_token_flops: flops.per_token_f64(),
        config,
        flops,
        n_params: counts.total,
        n_active_params: counts.active,
        predicted_loss,
    })
}
