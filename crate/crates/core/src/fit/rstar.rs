use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::alloc::check_sparsity;
use crate::error::{invalid, Result};

/// Default loss gap under which a later-C optimum may be moved back up.
pub const DEFAULT_FLUCTUATION_TOLERANCE: f64 = 0.001;

/// Ratio sweep at fixed compute and sparsity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGroup {
    pub c: f64,
    pub s: f64,
    /// `(r, loss)` pairs, `r` strictly ascending.
    pub points: Vec<(f64, f64)>,
}

impl SweepGroup {
    /// Builds a group, sorting points by `r`.
    pub fn new(c: f64, s: f64, mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let group = Self { c, s, points };
        group.validate()?;
        Ok(group)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(format!("sweep compute must be positive, got {}", self.c)));
        }
        check_sparsity(self.s)?;
        if self.points.len() < 2 {
            return Err(invalid(format!(
                "sweep at C = {:e}, S = {} needs at least 2 points",
                self.c, self.s
            )));
        }
        for &(r, loss) in &self.points {
            if !(r > 0.0 && r.is_finite()) || !loss.is_finite() {
                return Err(invalid(format!("bad sweep point ({r}, {loss})")));
            }
        }
        for w in self.points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(invalid(format!(
                    "duplicate r = {} in sweep at C = {:e}, S = {}",
                    w[0].0, self.c, self.s
                )));
            }
            if w[1].0 < w[0].0 {
                return Err(invalid("sweep points are not sorted by r"));
            }
        }
        Ok(())
    }

    /// Lowest-loss point; exact ties go to the smaller `r`.
    fn argmin(&self) -> (f64, f64) {
        self.points
            .iter()
            .copied()
            .fold(None, |best: Option<(f64, f64)>, p| match best {
                Some(b) if b.1 <= p.1 => Some(b),
                _ => Some(p),
            })
            .expect("validated group has points")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    Argmin,
    SuboptimalMonotonic,
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Selection::Argmin => "argmin",
            Selection::SuboptimalMonotonic => "suboptimal-monotonic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RStarObservation {
    pub c: f64,
    pub s: f64,
    pub r_star: f64,
    pub loss_at_star: f64,
    pub selection: Selection,
}

pub fn extract_rstar(groups: &[SweepGroup]) -> Result<Vec<RStarObservation>> {
    extract_rstar_with(groups, DEFAULT_FLUCTUATION_TOLERANCE)
}

/// Picks r* per group. Within one sparsity level groups must arrive in
/// ascending C. When the argmin at a larger C falls below the previous r*,
/// the smallest candidate `r >= previous r*` whose loss is within
/// `tolerance` of the minimum is taken instead. Only the immediately
/// previous C of the same sparsity is consulted.
pub fn extract_rstar_with(groups: &[SweepGroup], tolerance: f64) -> Result<Vec<RStarObservation>> {
    if !(tolerance >= 0.0) {
        return Err(invalid("fluctuation tolerance must be nonnegative"));
    }
    // keyed by the bit pattern of S; previous (C, r*)
    let mut last: HashMap<u64, (f64, f64)> = HashMap::new();
    let mut out = Vec::with_capacity(groups.len());

    for group in groups {
        group.validate()?;
        let key = group.s.to_bits();
        let prev = last.get(&key).copied();
        if let Some((prev_c, _)) = prev {
            if !(group.c > prev_c) {
                return Err(invalid(format!(
                    "sweep groups at S = {} are not in ascending C ({:e} after {:e})",
                    group.s, group.c, prev_c
                )));
            }
        }

        let (r_min, loss_min) = group.argmin();
        let mut pick = (r_min, loss_min, Selection::Argmin);
        if let Some((_, prev_r)) = prev {
            if r_min < prev_r {
                if let Some(&(r, loss)) = group
                    .points
                    .iter()
                    .find(|&&(r, loss)| r >= prev_r && loss - loss_min < tolerance)
                {
                    pick = (r, loss, Selection::SuboptimalMonotonic);
                }
            }
        }

        last.insert(key, (group.c, pick.0));
        out.push(RStarObservation {
            c: group.c,
            s: group.s,
            r_star: pick.0,
            loss_at_star: pick.1,
            selection: pick.2,
        });
    }
    Ok(out)
}
