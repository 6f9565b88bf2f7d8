use serde::{Deserialize, Serialize};

use crate::alloc::{check_sparsity, Provenance, SparsityLaw};
use crate::error::{invalid, Result};

/// `y = alpha · x^beta`, fitted by least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.alpha * x.powf(self.beta)
    }
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() {
        return Err(invalid(format!(
            "x and y lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(invalid("power-law fit needs at least 2 points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("power-law fit needs finite positive values"));
    }

    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in lx.iter().zip(&ly) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(invalid("power-law fit needs at least 2 distinct x values"));
    }
    let beta = sxy / sxx;
    let intercept = my - beta * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - (intercept + beta * x);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };

    Ok(PowerLawFit {
        alpha: intercept.exp(),
        beta,
        r_squared,
        n: xs.len(),
    })
}

/// Fitted allocation coefficients at one sparsity level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityObservation {
    #[serde(rename = "S")]
    pub s: f64,
    pub alpha_r: f64,
    pub beta_r: f64,
}

/// Fits `alpha_r` and `beta_r` as power laws of `1 - S`.
pub fn fit_sparsity_laws(obs: &[SparsityObservation]) -> Result<(SparsityLaw, PowerLawFit, PowerLawFit)> {
    for o in obs {
        check_sparsity(o.s)?;
    }
    let mut levels: Vec<u64> = obs.iter().map(|o| o.s.to_bits()).collect();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Err(invalid("sparsity-law fit needs at least 2 distinct sparsity levels"));
    }
    let xs: Vec<f64> = obs.iter().map(|o| 1.0 - o.s).collect();
    let alphas: Vec<f64> = obs.iter().map(|o| o.alpha_r).collect();
    let betas: Vec<f64> = obs.iter().map(|o| o.beta_r).collect();
    let fa = fit_power_law(&xs, &alphas)?;
    let fb = fit_power_law(&xs, &betas)?;
    let law = SparsityLaw {
        alpha_coef: fa.alpha,
        alpha_exp: fa.beta,
        beta_coef: fb.alpha,
        beta_exp: fb.beta,
        provenance: Provenance::User,
    };
    Ok((law, fa, fb))
}
