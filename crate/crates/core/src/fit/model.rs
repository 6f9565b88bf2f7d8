//! Log-parameterized forms of the loss laws with analytic gradients.
//!
//! Weights (`a`, `b`, `c`, `d`, `tau`) are optimized through their
//! logarithms; exponents are optimized directly with a lower bound of 0.
//!
//! Internally the log-features are centered on their means, which removes
//! most of the correlation between a log-weight and its exponent. The
//! optimizer works in these internal coordinates; [`LawModel::to_internal`]
//! and [`LawModel::to_external`] map to and from the published form.

use crate::error::Result;
use crate::scaling::{
    experts_from_sparsity, AbnarCoefficients, LawCoefficients, LawVariant, LossLawCoefficients,
    RTermMode, RunRecord, WangCoefficients,
};

const WEIGHT_GRID: [f64; 3] = [0.0, 10.0, 20.0];
const EXPONENT_GRID: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25];
const LOG_TAU_START: f64 = 1.5;

#[derive(Debug, Clone, Copy)]
struct Features {
    ln_n: f64,
    ln_d: f64,
    ln_active: f64,
    big_r: f64,
    efficiency: f64,
    ln_e: f64,
}

/// A law variant bound to a fixed set of records.
/// Means subtracted from the log-features.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Centers {
    ln_n: f64,
    ln_d: f64,
    ln_active: f64,
    ln_e: f64,
}

#[derive(Debug, Clone)]
pub struct LawModel {
    variant: LawVariant,
    r_term_mode: RTermMode,
    e_act: f64,
    centers: Centers,
    features: Vec<Features>,
    ln_obs: Vec<f64>,
}

impl LawModel {
    pub fn new(
        variant: LawVariant,
        records: &[RunRecord],
        r_term_mode: RTermMode,
        e_act: f64,
    ) -> Result<Self> {
        let mut features = Vec::with_capacity(records.len());
        let mut ln_obs = Vec::with_capacity(records.len());
        for rec in records {
            rec.validate()?;
            let ln_e = match variant {
                LawVariant::Wang => experts_from_sparsity(rec.s, e_act)?.ln(),
                _ => 0.0,
            };
            features.push(Features {
                ln_n: rec.n.ln(),
                ln_d: rec.d.ln(),
                ln_active: (1.0 - rec.s).ln(),
                big_r: r_term_mode.apply(rec.r),
                efficiency: rec.r / (rec.r + 1.0),
                ln_e,
            });
            ln_obs.push(rec.loss.ln());
        }
        let mut model = Self {
            variant,
            r_term_mode,
            e_act,
            centers: Centers::default(),
            features,
            ln_obs,
        };
        model.recenter(true);
        Ok(model)
    }

    /// Drops feature centering, so internal and external coordinates
    /// coincide. Needed when weights are pinned while exponents move.
    pub fn without_centering(mut self) -> Self {
        self.recenter(false);
        self
    }

    fn recenter(&mut self, on: bool) {
        let old = self.centers;
        for x in &mut self.features {
            x.ln_n += old.ln_n;
            x.ln_d += old.ln_d;
            x.ln_active += old.ln_active;
            x.ln_e += old.ln_e;
        }
        let n = self.features.len().max(1) as f64;
        let mean = |f: fn(&Features) -> f64| self.features.iter().map(f).sum::<f64>() / n;
        self.centers = if on {
            Centers {
                ln_n: mean(|x| x.ln_n),
                ln_d: mean(|x| x.ln_d),
                ln_active: mean(|x| x.ln_active),
                ln_e: mean(|x| x.ln_e),
            }
        } else {
            Centers::default()
        };
        let c = self.centers;
        for x in &mut self.features {
            x.ln_n -= c.ln_n;
            x.ln_d -= c.ln_d;
            x.ln_active -= c.ln_active;
            x.ln_e -= c.ln_e;
        }
    }

    /// Per-weight offsets: `internal = external + shift(exponents)`.
    fn weight_shifts(&self, theta: &[f64]) -> [(usize, f64); 4] {
        let c = &self.centers;
        match self.variant {
            LawVariant::Final => {
                let [alpha, beta, lambda, gamma] = [theta[4], theta[5], theta[6], theta[7]];
                [
                    (0, -alpha * c.ln_n),
                    (1, -beta * c.ln_d),
                    (2, gamma * c.ln_active - lambda * c.ln_n),
                    (3, 0.0),
                ]
            }
            LawVariant::Wang => {
                let [alpha, beta, gamma] = [theta[2], theta[3], theta[4]];
                [
                    (0, -alpha * c.ln_n - gamma * c.ln_e),
                    (1, -beta * c.ln_d),
                    (0, 0.0),
                    (0, 0.0),
                ]
            }
            LawVariant::Abnar => {
                let [alpha, beta, gamma, delta] = [theta[4], theta[5], theta[6], theta[7]];
                [
                    (0, -alpha * c.ln_n),
                    (1, -beta * c.ln_d),
                    (2, -gamma * c.ln_active),
                    (3, -delta * c.ln_active - gamma * c.ln_n),
                ]
            }
        }
    }

    /// Published parameters to optimizer coordinates. Exponents are shared.
    pub fn to_internal(&self, external: &[f64]) -> Vec<f64> {
        let mut out = external.to_vec();
        for (i, shift) in self.weight_shifts(external) {
            out[i] += shift;
        }
        out
    }

    pub fn to_external(&self, internal: &[f64]) -> Vec<f64> {
        let mut out = internal.to_vec();
        for (i, shift) in self.weight_shifts(internal) {
            out[i] -= shift;
        }
        out
    }

    pub fn variant(&self) -> LawVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self.variant {
            LawVariant::Final => &[
                "log_a", "log_b", "log_c", "log_d", "alpha", "beta", "lambda", "gamma", "log_tau",
            ],
            LawVariant::Wang => &["log_a", "log_b", "alpha", "beta", "gamma", "log_tau"],
            LawVariant::Abnar => &[
                "log_a", "log_b", "log_c", "log_d", "alpha", "beta", "gamma", "delta", "log_tau",
            ],
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }

    /// Lower bounds: exponents are kept nonnegative.
    pub fn lower_bounds(&self) -> Vec<f64> {
        self.param_names()
            .iter()
            .map(|name| if name.starts_with("log_") { f64::NEG_INFINITY } else { 0.0 })
            .collect()
    }

    /// `ln L(theta; record i)` in internal coordinates; the gradient with
    /// respect to theta is written into `grad` when given.
    pub fn log_predict(&self, theta: &[f64], i: usize, grad: Option<&mut [f64]>) -> f64 {
        let x = &self.features[i];
        match self.variant {
            LawVariant::Final => {
                let [la, lb, lc, ld, alpha, beta, lambda, gamma, lt] = theta[..9] else {
                    unreachable!()
                };
                let t1 = (la - alpha * x.ln_n).exp();
                let t2 = (lb - beta * x.ln_d).exp();
                let t3 = (lc + x.big_r + gamma * x.ln_active - lambda * x.ln_n).exp();
                let t4 = ld.exp() * x.efficiency;
                let t5 = lt.exp();
                let pred = t1 + t2 + t3 + t4 + t5;
                if let Some(g) = grad {
                    let inv = 1.0 / pred;
                    g[0] = t1 * inv;
                    g[1] = t2 * inv;
                    g[2] = t3 * inv;
                    g[3] = t4 * inv;
                    g[4] = -x.ln_n * t1 * inv;
                    g[5] = -x.ln_d * t2 * inv;
                    g[6] = -x.ln_n * t3 * inv;
                    g[7] = x.ln_active * t3 * inv;
                    g[8] = t5 * inv;
                }
                pred.ln()
            }
            LawVariant::Wang => {
                let [la, lb, alpha, beta, gamma, lt] = theta[..6] else {
                    unreachable!()
                };
                let t1 = (la - alpha * x.ln_n - gamma * x.ln_e).exp();
                let t2 = (lb - beta * x.ln_d).exp();
                let t3 = lt.exp();
                let pred = t1 + t2 + t3;
                if let Some(g) = grad {
                    let inv = 1.0 / pred;
                    g[0] = t1 * inv;
                    g[1] = t2 * inv;
                    g[2] = -x.ln_n * t1 * inv;
                    g[3] = -x.ln_d * t2 * inv;
                    g[4] = -x.ln_e * t1 * inv;
                    g[5] = t3 * inv;
                }
                pred.ln()
            }
            LawVariant::Abnar => {
                let [la, lb, lc, ld, alpha, beta, gamma, delta, lt] = theta[..9] else {
                    unreachable!()
                };
                let t1 = (la - alpha * x.ln_n).exp();
                let t2 = (lb - beta * x.ln_d).exp();
                let t3 = (lc - gamma * x.ln_active).exp();
                let t4 = (ld - delta * x.ln_active - gamma * x.ln_n).exp();
                let t5 = lt.exp();
                let pred = t1 + t2 + t3 + t4 + t5;
                if let Some(g) = grad {
                    let inv = 1.0 / pred;
                    g[0] = t1 * inv;
                    g[1] = t2 * inv;
                    g[2] = t3 * inv;
                    g[3] = t4 * inv;
                    g[4] = -x.ln_n * t1 * inv;
                    g[5] = -x.ln_d * t2 * inv;
                    g[6] = (-x.ln_active * t3 - x.ln_n * t4) * inv;
                    g[7] = -x.ln_active * t4 * inv;
                    g[8] = t5 * inv;
                }
                pred.ln()
            }
        }
    }

    /// Sum of Huber losses on `ln pred - ln obs`, with gradient.
    pub fn objective(&self, theta: &[f64], delta: f64, grad: &mut [f64]) -> f64 {
        let k = self.n_params();
        let mut point = [0.0; 9];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for i in 0..self.len() {
            let e = self.log_predict(theta, i, Some(&mut point[..k])) - self.ln_obs[i];
            let (h, dh) = super::loss_fit::huber_with_derivative(e, delta);
            total += h;
            for (g, p) in grad.iter_mut().zip(&point[..k]) {
                *g += dh * p;
            }
        }
        total
    }

    pub fn objective_value(&self, theta: &[f64], delta: f64) -> f64 {
        (0..self.len())
            .map(|i| super::loss_fit::huber(self.log_predict(theta, i, None) - self.ln_obs[i], delta))
            .sum()
    }

    /// Coefficients from internal coordinates.
    pub fn to_coefficients(&self, internal: &[f64]) -> LawCoefficients {
        let theta = self.to_external(internal);
        match self.variant {
            LawVariant::Final => LawCoefficients::Final(LossLawCoefficients {
                a: theta[0].exp(),
                b: theta[1].exp(),
                c: theta[2].exp(),
                d: theta[3].exp(),
                alpha: theta[4],
                beta: theta[5],
                lambda: theta[6],
                gamma: theta[7],
                tau: theta[8].exp(),
                r_term_mode: self.r_term_mode,
            }),
            LawVariant::Wang => LawCoefficients::Wang(WangCoefficients {
                a: theta[0].exp(),
                b: theta[1].exp(),
                alpha: theta[2],
                beta: theta[3],
                gamma: theta[4],
                tau: theta[5].exp(),
                e_act: self.e_act,
            }),
            LawVariant::Abnar => LawCoefficients::Abnar(AbnarCoefficients {
                a: theta[0].exp(),
                b: theta[1].exp(),
                c: theta[2].exp(),
                d: theta[3].exp(),
                alpha: theta[4],
                beta: theta[5],
                gamma: theta[6],
                delta: theta[7],
                tau: theta[8].exp(),
            }),
        }
    }
}

/// Initialization grid for a variant: weights' logs over {0, 10, 20},
/// exponents over {0, 0.25, ..., 1.25}, and `log tau = 1.5`. Row-major in
/// parameter order, so index 0 is the all-lowest start.
pub fn start_grid(variant: LawVariant) -> StartGrid {
    let names: &[&str] = match variant {
        LawVariant::Final => &[
            "log_a", "log_b", "log_c", "log_d", "alpha", "beta", "lambda", "gamma", "log_tau",
        ],
        LawVariant::Wang => &["log_a", "log_b", "alpha", "beta", "gamma", "log_tau"],
        LawVariant::Abnar => &[
            "log_a", "log_b", "log_c", "log_d", "alpha", "beta", "gamma", "delta", "log_tau",
        ],
    };
    let axes = names
        .iter()
        .map(|n| match *n {
            "log_tau" => vec![LOG_TAU_START],
            n if n.starts_with("log_") => WEIGHT_GRID.to_vec(),
            _ => EXPONENT_GRID.to_vec(),
        })
        .collect();
    StartGrid { axes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartGrid {
    axes: Vec<Vec<f64>>,
}

impl StartGrid {
    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Collapses axis `i` to a single value.
    pub fn pin(&mut self, i: usize, value: f64) {
        self.axes[i] = vec![value];
    }

    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (slot, axis) in out.iter_mut().zip(&self.axes).rev() {
            *slot = axis[index % axis.len()];
            index /= axis.len();
        }
        out
    }
}
