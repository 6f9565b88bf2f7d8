//! Expert/attention allocation laws.
//!
//! The optimal ratio follows `r* = alpha_r · C^beta_r`, where `C` is total
//! training FLOPs. Coefficients come from the sparsity laws
//! `alpha_r = 6.7e-5 · (1 - S)^-1.23` and `beta_r = 0.24 · (1 - S)^0.21`, from
//! the elasticity closed form, or from a user fit.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// The published reference fit.
    #[serde(rename = "paper-fit")]
    Published,
    SparsityLaw,
    ElasticityDerived,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationLaw {
    pub alpha_r: f64,
    pub beta_r: f64,
    pub provenance: Provenance,
}

impl AllocationLaw {
    pub fn new(alpha_r: f64, beta_r: f64, provenance: Provenance) -> Result<Self> {
        let law = Self {
            alpha_r,
            beta_r,
            provenance,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_r > 0.0 && self.alpha_r.is_finite()) {
            return Err(domain(format!("alpha_r must be positive, got {}", self.alpha_r)));
        }
        if !self.beta_r.is_finite() {
            return Err(domain("beta_r must be finite"));
        }
        Ok(())
    }
}

/// Power laws of `alpha_r` and `beta_r` in the active fraction `1 - S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityLaw {
    pub alpha_coef: f64,
    pub alpha_exp: f64,
    pub beta_coef: f64,
    pub beta_exp: f64,
    pub provenance: Provenance,
}

impl SparsityLaw {
    pub const PUBLISHED: SparsityLaw = SparsityLaw {
        alpha_coef: 6.7e-5,
        alpha_exp: -1.23,
        beta_coef: 0.24,
        beta_exp: 0.21,
        provenance: Provenance::Published,
    };

    pub fn coefficients(&self, sparsity: f64) -> Result<AllocationLaw> {
        check_sparsity(sparsity)?;
        let active = 1.0 - sparsity;
        AllocationLaw::new(
            self.alpha_coef * active.powf(self.alpha_exp),
            self.beta_coef * active.powf(self.beta_exp),
            Provenance::SparsityLaw,
        )
    }
}

impl Default for SparsityLaw {
    fn default() -> Self {
        Self::PUBLISHED
    }
}

pub(crate) fn check_sparsity(s: f64) -> Result<()> {
    if !(0.0..1.0).contains(&s) {
        return Err(domain(format!("sparsity must lie in [0, 1), got {s}")));
    }
    Ok(())
}

/// Allocation coefficients at sparsity `s` under the shipped sparsity laws.
pub fn sparsity_coefficients(s: f64) -> Result<AllocationLaw> {
    SparsityLaw::PUBLISHED.coefficients(s)
}

pub fn optimal_ratio(law: &AllocationLaw, compute: f64) -> Result<f64> {
    if !(compute > 0.0 && compute.is_finite()) {
        return Err(domain(format!("compute must be positive, got {compute}")));
    }
    law.validate()?;
    Ok(law.alpha_r * (law.beta_r * compute.ln()).exp())
}

/// Elasticity parameters of the two-term loss
/// `L = alpha_a · C_A^(-gamma_a mu_a) + alpha_e · C_E^(-gamma_e mu_e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticityParams {
    pub mu_a: f64,
    pub mu_e: f64,
    pub gamma_a: f64,
    pub gamma_e: f64,
    pub alpha_a: f64,
    pub alpha_e: f64,
}

impl ElasticityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, mu) in [("mu_a", self.mu_a), ("mu_e", self.mu_e)] {
            if !(mu > 0.0 && mu < 1.0) {
                return Err(domain(format!("{name} must lie in (0, 1), got {mu}")));
            }
        }
        for (name, v) in [
            ("gamma_a", self.gamma_a),
            ("gamma_e", self.gamma_e),
            ("alpha_a", self.alpha_a),
            ("alpha_e", self.alpha_e),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn p_a(&self) -> f64 {
        self.gamma_a * self.mu_a
    }

    fn p_e(&self) -> f64 {
        self.gamma_e * self.mu_e
    }

    /// Two-term loss with `C_A = C / (1 + r)` and `C_E = C r / (1 + r)`.
    pub fn loss(&self, compute: f64, r: f64) -> f64 {
        let ln_c = compute.ln();
        let ln_1r = r.ln_1p();
        let ln_ca = ln_c - ln_1r;
        let ln_ce = ln_c + r.ln() - ln_1r;
        self.alpha_a * (-self.p_a() * ln_ca).exp() + self.alpha_e * (-self.p_e() * ln_ce).exp()
    }

    /// Both sides of the marginal-equality condition
    /// `alpha_a gamma_a mu_a / C_A^(gamma_a mu_a + 1) = alpha_e gamma_e mu_e / C_E^(gamma_e mu_e + 1)`.
    pub fn marginals(&self, compute: f64, r: f64) -> (f64, f64) {
        let (ln_a, ln_e) = self.log_marginals(compute, r);
        (ln_a.exp(), ln_e.exp())
    }

    fn log_marginals(&self, compute: f64, r: f64) -> (f64, f64) {
        let ln_c = compute.ln();
        let ln_1r = r.ln_1p();
        let ln_ca = ln_c - ln_1r;
        let ln_ce = ln_c + r.ln() - ln_1r;
        (
            (self.alpha_a * self.p_a()).ln() - (self.p_a() + 1.0) * ln_ca,
            (self.alpha_e * self.p_e()).ln() - (self.p_e() + 1.0) * ln_ce,
        )
    }

    /// `|lhs - rhs| / max(lhs, rhs)` of the marginal-equality condition.
    pub fn marginal_residual(&self, compute: f64, r: f64) -> f64 {
        let (ln_a, ln_e) = self.log_marginals(compute, r);
        // |e^a - e^b| / e^max(a,b) = 1 - e^-(|a - b|)
        -(-(ln_a - ln_e).abs()).exp_m1()
    }

    /// Same parameters with attention and expert roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            mu_a: self.mu_e,
            mu_e: self.mu_a,
            gamma_a: self.gamma_e,
            gamma_e: self.gamma_a,
            alpha_a: self.alpha_e,
            alpha_e: self.alpha_a,
        }
    }
}

/// Closed-form `(alpha_r, beta_r)` from elasticity parameters.
pub fn elasticity_closed_form(p: &ElasticityParams) -> Result<AllocationLaw> {
    p.validate()?;
    let (pa, pe) = (p.p_a(), p.p_e());
    let denom = pa + pe + 1.0;
    let alpha_r = ((p.alpha_e * pe) / (p.alpha_a * pa)).powf(1.0 / denom);
    let beta_r = (pe - pa) / denom;
    AllocationLaw::new(alpha_r, beta_r, Provenance::ElasticityDerived)
}

/// Search window and precision for [`numeric_optimal_ratio_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSearch {
    pub r_min: f64,
    pub r_max: f64,
    /// Points of the initial log-spaced bracketing grid.
    pub grid_points: usize,
    /// Golden-section stops once the bracket is this narrow, relative to r.
    pub rel_width: f64,
}

impl Default for RatioSearch {
    fn default() -> Self {
        Self {
            r_min: 1e-6,
            r_max: 1e6,
            grid_points: 241,
            rel_width: 1e-10,
        }
    }
}

/// Numerically minimize the two-term loss over `r` at fixed compute.
pub fn numeric_optimal_ratio(p: &ElasticityParams, compute: f64) -> Result<f64> {
    numeric_optimal_ratio_with(p, compute, &RatioSearch::default())
}

pub fn numeric_optimal_ratio_with(
    p: &ElasticityParams,
    compute: f64,
    search: &RatioSearch,
) -> Result<f64> {
    p.validate()?;
    if !(compute > 0.0 && compute.is_finite()) {
        return Err(domain(format!("compute must be positive, got {compute}")));
    }
    if !(search.r_min > 0.0 && search.r_max > search.r_min && search.grid_points >= 3) {
        return Err(domain("invalid ratio search window"));
    }

    // Work in t = ln r, where the loss is smooth and unimodal.
    let objective = |t: f64| p.loss(compute, t.exp());
    let (t_lo, t_hi) = (search.r_min.ln(), search.r_max.ln());
    let n = search.grid_points;
    let step = (t_hi - t_lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| objective(t_lo + step * i as f64)).collect();
    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("grid is nonempty");
    if best == 0 || best == n - 1 || !grid[best].is_finite() {
        return Err(Error::Bracket(format!(
            "loss minimum lies outside r in [{:e}, {:e}] at C = {compute:e}",
            search.r_min, search.r_max
        )));
    }

    let mut a = t_lo + step * (best - 1) as f64;
    let mut b = t_lo + step * (best + 1) as f64;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    // In t-space a relative width on r is an absolute width on t.
    while b - a > search.rel_width {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        }
        if x1 == x2 {
            break;
        }
    }

    // Function values are flat to ~sqrt(eps) near the optimum, so finish on
    // the first-order condition. ln(lhs) - ln(rhs) is strictly increasing in
    // t (C_A shrinks, C_E grows), and its root is the minimizer.
    let foc = |t: f64| {
        let (ln_a, ln_e) = p.log_marginals(compute, t.exp());
        ln_a - ln_e
    };
    let (grid_lo, grid_hi) = (
        t_lo + step * (best - 1) as f64,
        t_lo + step * (best + 1) as f64,
    );
    let near = ((a - 1e-3).max(grid_lo), (b + 1e-3).min(grid_hi));
    let t_star = [near, (grid_lo, grid_hi)]
        .into_iter()
        .find(|&(lo, hi)| foc(lo) <= 0.0 && foc(hi) >= 0.0)
        .map(|(mut lo, mut hi)| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if foc(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .unwrap_or(0.5 * (a + b));
    Ok(t_star.exp())
}

/// `r / (r + 1)`: zero at `r = 0`, increasing, bounded by 1.
pub fn efficiency_term(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(domain(format!("ratio must be nonnegative, got {r}")));
    }
    Ok(r / (r + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: ElasticityParams = ElasticityParams {
        mu_a: 0.5,
        mu_e: 0.8,
        gamma_a: 1.0,
        gamma_e: 1.0,
        alpha_a: 1.0,
        alpha_e: 1.0,
    };

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn sparsity_boundaries() {
        let law = sparsity_coefficients(0.0).unwrap();
        assert_eq!((law.alpha_r, law.beta_r), (6.7e-5, 0.24));
        assert_eq!(law.provenance, Provenance::SparsityLaw);
        assert!(sparsity_coefficients(1.0).is_err());
        assert!(sparsity_coefficients(-0.1).is_err());
    }

    #[test]
    fn sparsity_reference_levels() {
        // Frozen from 40-digit evaluation of the coefficient laws.
        let law = sparsity_coefficients(0.9538).unwrap();
        assert!(rel(law.alpha_r, 0.002_941_475_075_560_144) < 1e-12);
        assert!(rel(law.beta_r, 0.125_830_538_899_621_9) < 1e-12);
        let law = sparsity_coefficients(0.9091).unwrap();
        assert!(rel(law.alpha_r, 0.001_279_502_757_944_147) < 1e-12);
        assert!(rel(law.beta_r, 0.145_047_302_738_643_8) < 1e-12);
    }

    #[test]
    fn optimal_ratio_examples() {
        let flat = AllocationLaw::new(1.0, 0.0, Provenance::User).unwrap();
        assert_eq!(optimal_ratio(&flat, 3.7e19).unwrap(), 1.0);

        let law = sparsity_coefficients(0.9091).unwrap();
        let r = optimal_ratio(&law, 1e21).unwrap();
        assert!(rel(r, 1.422_442_054_882_616_8) < 1e-10);
        assert!((0.2..=1.5).contains(&r));

        let doubled = optimal_ratio(&law, 2e21).unwrap();
        assert!(rel(doubled / r, 2f64.powf(law.beta_r)) < 1e-12);
        assert!(optimal_ratio(&law, 0.0).is_err());
        assert!(optimal_ratio(&law, -1.0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let law = elasticity_closed_form(&EXAMPLE).unwrap();
        assert!(rel(law.beta_r, 0.3 / 2.3) < 1e-14);
        assert!(rel(law.alpha_r, 1.226_726_701_824_507_3) < 1e-12);

        let sym = ElasticityParams {
            mu_a: 0.4,
            mu_e: 0.5,
            gamma_a: 1.25,
            gamma_e: 1.0,
            alpha_a: 2.0,
            alpha_e: 2.0,
        };
        let law = elasticity_closed_form(&sym).unwrap();
        assert_eq!(law.beta_r, 0.0);
        assert!((law.alpha_r - 1.0).abs() < 1e-15);

        let swapped = elasticity_closed_form(&EXAMPLE.swapped()).unwrap();
        let law = elasticity_closed_form(&EXAMPLE).unwrap();
        assert!((swapped.beta_r + law.beta_r).abs() < 1e-15);
        assert!(rel(swapped.alpha_r, 1.0 / law.alpha_r) < 1e-14);
    }

    #[test]
    fn numeric_ratio_symmetric_is_one() {
        let sym = ElasticityParams {
            mu_e: 0.5,
            ..EXAMPLE
        };
        for c in [1e3, 1e6, 1e10] {
            let r = numeric_optimal_ratio(&sym, c).unwrap();
            assert!((r - 1.0).abs() < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn numeric_ratio_satisfies_marginal_equality() {
        let r = numeric_optimal_ratio(&EXAMPLE, 1e6).unwrap();
        assert!(EXAMPLE.marginal_residual(1e6, r) < 1e-8);

        // Dense scan oracle.
        let best = EXAMPLE.loss(1e6, r);
        for i in 0..1000 {
            let t = -3.0 + 6.0 * i as f64 / 999.0;
            assert!(best <= EXAMPLE.loss(1e6, 10f64.powf(t)));
        }
    }

    #[test]
    fn numeric_ratio_reports_bracket_failure() {
        let p = ElasticityParams {
            mu_a: 0.95,
            gamma_a: 3.0,
            mu_e: 0.05,
            gamma_e: 0.1,
            alpha_a: 1.0,
            alpha_e: 1.0,
        };
        let err = numeric_optimal_ratio(&p, 1e12).unwrap_err();
        assert!(matches!(err, Error::Bracket(_)));
    }

    #[test]
    fn efficiency_term_values() {
        assert_eq!(efficiency_term(0.0).unwrap(), 0.0);
        assert_eq!(efficiency_term(1.0).unwrap(), 0.5);
        let big = efficiency_term(1e6).unwrap();
        assert!(big < 1.0 && big > 0.999_998);
        assert!(efficiency_term(-1e-9).is_err());
        assert!(efficiency_term(f64::NAN).is_err());
    }
}
