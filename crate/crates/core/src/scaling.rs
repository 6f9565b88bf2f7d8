//! Loss scaling laws: the extended MoE law
//!
//! ```text
//! L = a / N^alpha + b / D^beta + c · e^R (1 - S)^gamma / N^lambda + d · r / (r + 1) + tau
//! ```
//!
//! together with two published alternatives for comparison. `N` is total
//! parameters and `R` defaults to the FLOPs ratio `r` (see [`RTermMode`]).
//! Power terms are evaluated as `exp(-alpha · ln N)`.

use serde::{Deserialize, Serialize};

use crate::alloc::check_sparsity;
use crate::error::{domain, invalid, Result};

/// One training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "N_active")]
    pub n_active: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub r: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub loss: f64,
}

impl RunRecord {
    pub const CSV_HEADER: [&'static str; 8] = ["label", "N", "N_active", "D", "S", "r", "C", "loss"];

    pub fn validate(&self) -> Result<()> {
        let finite = [self.n, self.n_active, self.d, self.s, self.r, self.c, self.loss];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("record `{}` has a non-finite field", self.label)));
        }
        if !(self.n_active > 0.0 && self.n >= self.n_active) {
            return Err(invalid(format!(
                "record `{}`: need N >= N_active > 0, got N = {}, N_active = {}",
                self.label, self.n, self.n_active
            )));
        }
        if !(self.d > 0.0) {
            return Err(invalid(format!("record `{}`: D must be positive", self.label)));
        }
        check_sparsity(self.s)?;
        if !(self.r > 0.0) {
            return Err(invalid(format!("record `{}`: r must be positive", self.label)));
        }
        if !(self.loss > 0.0) {
            return Err(invalid(format!("record `{}`: loss must be positive", self.label)));
        }
        if self.c < 0.0 {
            return Err(invalid(format!("record `{}`: C must be nonnegative", self.label)));
        }
        Ok(())
    }
}

/// How the exponential misallocation factor reads the ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RTermMode {
    /// `R = r`
    #[default]
    #[serde(rename = "r")]
    Ratio,
    /// `R = r / (1 + r)`
    #[serde(rename = "r_over_1plus_r")]
    RatioOverOnePlus,
}

impl RTermMode {
    pub fn apply(self, r: f64) -> f64 {
        match self {
            RTermMode::Ratio => r,
            RTermMode::RatioOverOnePlus => r / (1.0 + r),
        }
    }

    /// `dR/dr`
    pub fn derivative(self, r: f64) -> f64 {
        match self {
            RTermMode::Ratio => 1.0,
            RTermMode::RatioOverOnePlus => 1.0 / ((1.0 + r) * (1.0 + r)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossLawCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub tau: f64,
    #[serde(default)]
    pub r_term_mode: RTermMode,
}

impl LossLawCoefficients {
    /// Published estimates of the nine coefficients.
    pub const PUBLISHED: LossLawCoefficients = LossLawCoefficients {
        a: 15.12,
        b: 18.62,
        c: 39.55,
        d: 0.0499,
        alpha: 0.6288,
        beta: 0.0453,
        lambda: 0.4228,
        gamma: 0.0431,
        tau: 13.7354,
        r_term_mode: RTermMode::Ratio,
    };

    pub fn validate(&self) -> Result<()> {
        check_nonneg(&[
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("tau", self.tau),
        ])
    }
}

fn check_nonneg(fields: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in fields {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(domain(format!("coefficient {name} must be finite and >= 0, got {v}")));
        }
    }
    Ok(())
}

/// Per-term values of the extended law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossTerms {
    pub params: f64,
    pub data: f64,
    pub misallocation: f64,
    pub efficiency: f64,
    pub tau: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.params + self.data + self.misallocation + self.efficiency + self.tau
    }
}

#[inline]
pub(crate) fn pow_neg(x: f64, exponent: f64) -> f64 {
    (-exponent * x.ln()).exp()
}

pub fn loss_terms(coef: &LossLawCoefficients, rec: &RunRecord) -> Result<LossTerms> {
    coef.validate()?;
    rec.validate()?;
    let big_r = coef.r_term_mode.apply(rec.r);
    let misallocation = coef.c
        * (big_r + coef.gamma * (1.0 - rec.s).ln() - coef.lambda * rec.n.ln()).exp();
    Ok(LossTerms {
        params: coef.a * pow_neg(rec.n, coef.alpha),
        data: coef.b * pow_neg(rec.d, coef.beta),
        misallocation,
        efficiency: coef.d * rec.r / (rec.r + 1.0),
        tau: coef.tau,
    })
}

pub fn predict_loss(coef: &LossLawCoefficients, rec: &RunRecord) -> Result<f64> {
    Ok(loss_terms(coef, rec)?.total())
}

/// `L = a / (N^alpha E^gamma) + b / D^beta + tau`, with the expert count
/// recovered as `E = round(e_act / (1 - S))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WangCoefficients {
    pub a: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub b: f64,
    pub beta: f64,
    pub tau: f64,
    /// Experts active per token, used to recover `E` from `S`.
    #[serde(default = "default_e_act")]
    pub e_act: f64,
}

fn default_e_act() -> f64 {
    3.0
}

impl WangCoefficients {
    pub fn validate(&self) -> Result<()> {
        check_nonneg(&[
            ("a", self.a),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("b", self.b),
            ("beta", self.beta),
            ("tau", self.tau),
        ])?;
        if !(self.e_act >= 1.0 && self.e_act.is_finite()) {
            return Err(domain("e_act must be >= 1"));
        }
        Ok(())
    }
}

/// Total experts implied by sparsity `s` at `e_act` active experts.
pub fn experts_from_sparsity(s: f64, e_act: f64) -> Result<f64> {
    check_sparsity(s)?;
    Ok((e_act / (1.0 - s)).round().max(1.0))
}

/// `L = a / N^alpha + b / D^beta + c / (1 - S)^gamma + d / ((1 - S)^delta N^gamma) + tau`.
///
/// `gamma` is shared between the sparsity term and the coupling term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbnarCoefficients {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub c: f64,
    pub gamma: f64,
    pub d: f64,
    pub delta: f64,
    pub tau: f64,
}

impl AbnarCoefficients {
    pub fn validate(&self) -> Result<()> {
        check_nonneg(&[
            ("a", self.a),
            ("alpha", self.alpha),
            ("b", self.b),
            ("beta", self.beta),
            ("c", self.c),
            ("gamma", self.gamma),
            ("d", self.d),
            ("delta", self.delta),
            ("tau", self.tau),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum AltLawCoefficients {
    Wang(WangCoefficients),
    Abnar(AbnarCoefficients),
}

pub fn predict_loss_alt(coef: &AltLawCoefficients, rec: &RunRecord) -> Result<f64> {
    rec.validate()?;
    match coef {
        AltLawCoefficients::Wang(w) => {
            w.validate()?;
            let e = experts_from_sparsity(rec.s, w.e_act)?;
            Ok(w.a * pow_neg(rec.n, w.alpha) * pow_neg(e, w.gamma)
                + w.b * pow_neg(rec.d, w.beta)
                + w.tau)
        }
        AltLawCoefficients::Abnar(ab) => {
            ab.validate()?;
            let active = 1.0 - rec.s;
            Ok(ab.a * pow_neg(rec.n, ab.alpha)
                + ab.b * pow_neg(rec.d, ab.beta)
                + ab.c * pow_neg(active, ab.gamma)
                + ab.d * pow_neg(active, ab.delta) * pow_neg(rec.n, ab.gamma)
                + ab.tau)
        }
    }
}

/// Laws the fitting pipeline knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawVariant {
    Final,
    Wang,
    Abnar,
}

impl std::str::FromStr for LawVariant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final" => Ok(LawVariant::Final),
            "wang" => Ok(LawVariant::Wang),
            "abnar" => Ok(LawVariant::Abnar),
            _ => Err(invalid(format!("unknown law variant `{s}`"))),
        }
    }
}

/// Coefficients of any supported law, tagged by `variant`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum LawCoefficients {
    Final(LossLawCoefficients),
    Wang(WangCoefficients),
    Abnar(AbnarCoefficients),
}

impl LawCoefficients {
    pub fn variant(&self) -> LawVariant {
        match self {
            LawCoefficients::Final(_) => LawVariant::Final,
            LawCoefficients::Wang(_) => LawVariant::Wang,
            LawCoefficients::Abnar(_) => LawVariant::Abnar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LawCoefficients::Final(c) => c.validate(),
            LawCoefficients::Wang(w) => w.validate(),
            LawCoefficients::Abnar(a) => a.validate(),
        }
    }

    pub fn predict(&self, rec: &RunRecord) -> Result<f64> {
        match self {
            LawCoefficients::Final(c) => predict_loss(c, rec),
            LawCoefficients::Wang(w) => predict_loss_alt(&AltLawCoefficients::Wang(*w), rec),
            LawCoefficients::Abnar(a) => predict_loss_alt(&AltLawCoefficients::Abnar(*a), rec),
        }
    }
}

impl From<LossLawCoefficients> for LawCoefficients {
    fn from(c: LossLawCoefficients) -> Self {
        LawCoefficients::Final(c)
    }
}

impl From<AltLawCoefficients> for LawCoefficients {
    fn from(c: AltLawCoefficients) -> Self {
        match c {
            AltLawCoefficients::Wang(w) => LawCoefficients::Wang(w),
            AltLawCoefficients::Abnar(a) => LawCoefficients::Abnar(a),
        }
    }
}

/// Loss along a token grid with every other field of `rec` held fixed.
pub fn loss_curve(
    coef: &LossLawCoefficients,
    rec: &RunRecord,
    token_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if token_grid.is_empty() {
        return Err(invalid("token grid is empty"));
    }
    if token_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("token grid must be strictly ascending"));
    }
    token_grid
        .iter()
        .map(|&d| {
            let point = RunRecord { d, ..rec.clone() };
            predict_loss(coef, &point).map(|l| (d, l))
        })
        .collect()
}
