//! Independent reference implementations used by the tests.
//!
//! None of these call into the code they check except for plumbing
//! (config types, the FLOPs counter inside the lattice scan, which is
//! itself checked against [`matmul_count`]).

#![allow(dead_code)]

use moealloc::flops::ModelConfig;
use moealloc::planner::PlanProblem;
use moealloc::{flops_ratio, total_flops, ElasticityParams};

/// One dense matmul `[m, k] x [k, n]`.
#[derive(Debug, Clone, Copy)]
pub struct MatMul {
    pub m: u128,
    pub k: u128,
    pub n: u128,
    /// How many times this matmul runs in one forward pass of one layer.
    pub count: u128,
}

impl MatMul {
    pub fn flops(&self) -> u128 {
        2 * self.m * self.k * self.n * self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatMulCount {
    pub q_proj: u128,
    pub kv_proj: u128,
    pub attn_weight: u128,
    pub value: u128,
    pub out_proj: u128,
    pub expert: u128,
    pub logits: u128,
    pub forward_total: u128,
    pub training_total: u128,
}

fn sum(ms: &[MatMul]) -> u128 {
    ms.iter().map(MatMul::flops).sum()
}

/// Counts FLOPs by listing every matmul of one sequence's forward pass.
pub fn matmul_count(cfg: &ModelConfig) -> MatMulCount {
    let t = cfg.n_ctx as u128;
    let d = cfg.d_hidden as u128;
    let de = cfg.d_expert as u128;
    let kv_width = if cfg.use_gqa { d / cfg.kv_head_ratio as u128 } else { d };

    let q = [MatMul { m: t, k: d, n: d, count: 1 }];
    // separate K and V projections
    let kv = [
        MatMul { m: t, k: d, n: kv_width, count: 1 },
        MatMul { m: t, k: d, n: kv_width, count: 1 },
    ];
    let scores = [MatMul { m: t, k: d, n: t, count: 1 }];
    let value = [MatMul { m: t, k: d, n: d, count: 1 }];
    let out = [MatMul { m: t, k: d, n: d, count: 1 }];
    let active = (cfg.top_k + cfg.n_shared_experts) as u128;
    let experts = [
        // router
        MatMul { m: t, k: d, n: cfg.n_experts as u128, count: 1 },
        // gate, up, down per active expert
        MatMul { m: t, k: d, n: de, count: active },
        MatMul { m: t, k: d, n: de, count: active },
        MatMul { m: t, k: de, n: d, count: active },
    ];
    let logits = [MatMul { m: t, k: d, n: cfg.n_vocab as u128, count: 1 }];

    let layer = sum(&q) + sum(&kv) + sum(&scores) + sum(&value) + sum(&out) + sum(&experts);
    let layers = cfg.n_layer as u128 * layer;
    let plain = layers + sum(&logits);
    let factor: u128 = if cfg.use_peft { 2 } else { 3 };
    let (forward_total, training_total) = if cfg.use_grad_checkpoint {
        let f = layers * (factor + 1) + sum(&logits) * factor;
        (f, f)
    } else {
        (plain, plain * factor)
    };
    MatMulCount {
        q_proj: sum(&q),
        kv_proj: sum(&kv),
        attn_weight: sum(&scores),
        value: sum(&value),
        out_proj: sum(&out),
        expert: sum(&experts),
        logits: sum(&logits),
        forward_total,
        training_total,
    }
}

/// Loss of the two-term elasticity model, written straight from the formula.
pub fn elasticity_loss(p: &ElasticityParams, c: f64, r: f64) -> f64 {
    let ca = c / (1.0 + r);
    let ce = c * r / (1.0 + r);
    p.alpha_a * ca.powf(-p.gamma_a * p.mu_a) + p.alpha_e * ce.powf(-p.gamma_e * p.mu_e)
}

/// Relative gap between the two sides of the marginal-equality condition.
pub fn marginal_gap(p: &ElasticityParams, c: f64, r: f64) -> f64 {
    let ca = c / (1.0 + r);
    let ce = c * r / (1.0 + r);
    let (pa, pe) = (p.gamma_a * p.mu_a, p.gamma_e * p.mu_e);
    let lhs = p.alpha_a * pa / ca.powf(pa + 1.0);
    let rhs = p.alpha_e * pe / ce.powf(pe + 1.0);
    (lhs - rhs).abs() / lhs.max(rhs)
}

/// `n` log-spaced points over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticePoint {
    pub d_hidden: u64,
    pub d_expert: u64,
    pub ratio_error: f64,
    pub budget_error: f64,
    pub feasible: bool,
}

/// Visits every `(d_hidden, d_expert)` on the lattice that could matter and
/// returns the best by: feasible first, then budget error, then ratio error.
/// Also returns how many points were visited.
pub fn lattice_scan(problem: &PlanProblem) -> (Option<LatticePoint>, usize) {
    let req = &problem.request;
    let g = req.granularity;
    let (rt, bt) = (req.ratio_tolerance, req.budget_tolerance);
    let r_hi = problem.target_r * (1.0 + rt);
    let t_hi = problem.target_per_token * (1.0 + bt);
    let eval = |d: u64, de: u64| -> Option<(f64, f64)> {
        let cfg = ModelConfig { d_hidden: d, d_expert: de, ..problem.base };
        let r = flops_ratio(&cfg).ok()?.r();
        let f = total_flops(&cfg).ok()?;
        let per_token = f.training_total as f64 / cfg.n_ctx as f64;
        Some((r, per_token))
    };
    let mut best: Option<LatticePoint> = None;
    let mut visited = 0;
    let mut mh = 1u64;
    loop {
        let d = mh * g;
        // Training cost grows with d_hidden at any d_expert.
        match eval(d, g) {
            Some((_, t)) if t > t_hi && mh > 1 => break,
            _ => {}
        }
        let mut me = 1u64;
        loop {
            let de = me * g;
            let Some((r, t)) = eval(d, de) else {
                me += 1;
                if me > 1 << 20 {
                    break;
                }
                continue;
            };
            visited += 1;
            let p = LatticePoint {
                d_hidden: d,
                d_expert: de,
                ratio_error: (r - problem.target_r).abs() / problem.target_r,
                budget_error: (t - problem.target_per_token).abs() / problem.target_per_token,
                feasible: false,
            };
            let p = LatticePoint {
                feasible: p.ratio_error <= rt && p.budget_error <= bt,
                ..p
            };
            if p.feasible {
                let better = match &best {
                    None => true,
                    Some(b) if !b.feasible => true,
                    Some(b) => (p.budget_error, p.ratio_error) < (b.budget_error, b.ratio_error),
                };
                if better {
                    best = Some(p);
                }
            } else if best.is_none() {
                best = Some(p);
            }
            // Both the ratio and the cost only grow from here.
            if r > r_hi && t > t_hi {
                break;
            }
            me += 1;
        }
        mh += 1;
        if mh > 1 << 16 {
            break;
        }
    }
    (best, visited)
}
