//! Limited-memory BFGS with projection onto lower bounds.
//!
//! Variables sitting on their bound with the gradient pushing outward are
//! frozen for the iteration; the two-loop recursion runs on the remaining
//! free subspace. Steps are accepted by a projected Armijo backtrack.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    /// Per-coordinate lower bound; `f64::NEG_INFINITY` for none.
    pub lower: Vec<f64>,
    /// Coordinates held at their starting value.
    pub fixed: Vec<bool>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            fixed: vec![false; n],
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (xi, lo) in x.iter_mut().zip(&self.lower) {
            if *xi < *lo {
                *xi = *lo;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient's 2-norm falls below this.
    pub gtol: f64,
    /// Stop when one iteration improves `f` by less than `ftol · |f|`.
    pub ftol: f64,
    pub memory: usize,
    pub max_line_search: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gtol: 1e-8,
            ftol: 1e-12,
            memory: 10,
            max_line_search: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(
            self.stop,
            StopReason::GradientTolerance | StopReason::FunctionTolerance
        )
    }
}

fn dot_masked(a: &[f64], b: &[f64], active: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(active)
        .filter(|(_, &act)| !act)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Minimizes `f`, which writes the gradient into its second argument and
/// returns the objective.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &MinimizeOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(bounds.lower.len(), n);
    assert_eq!(bounds.fixed.len(), n);

    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    if !fx.is_finite() {
        return Minimum {
            x,
            f: fx,
            grad_norm: f64::INFINITY,
            iterations: 0,
            evaluations,
            stop: StopReason::NonFinite,
        };
    }

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut active = vec![false; n];
    let mut pg = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alphas = vec![0.0; opts.memory];

    let mut iterations = 0;
    let mut grad_norm;
    let stop = loop {
        for i in 0..n {
            active[i] = bounds.fixed[i] || (x[i] <= bounds.lower[i] && g[i] > 0.0);
            pg[i] = if active[i] { 0.0 } else { g[i] };
        }
        grad_norm = pg.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm < opts.gtol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::MaxIterations;
        }
        iterations += 1;

        // Two-loop recursion on the free subspace.
        d.copy_from_slice(&pg);
        for (j, (s, y, rho)) in memory.iter().enumerate().rev() {
            let a = rho * dot_masked(s, &d, &active);
            alphas[j] = a;
            for i in 0..n {
                if !active[i] {
                    d[i] -= a * y[i];
                }
            }
        }
        if let Some((s, y, _)) = memory.back() {
            let yy = dot_masked(y, y, &active);
            if yy > 0.0 {
                let scale = dot_masked(s, y, &active) / yy;
                if scale > 0.0 {
                    d.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        for (j, (s, y, rho)) in memory.iter().enumerate() {
            let b = rho * dot_masked(y, &d, &active);
            for i in 0..n {
                if !active[i] {
                    d[i] += s[i] * (alphas[j] - b);
                }
            }
        }
        for i in 0..n {
            d[i] = if active[i] { 0.0 } else { -d[i] };
        }
        if !(dot_masked(&d, &pg, &active) < 0.0) || d.iter().any(|v| !v.is_finite()) {
            memory.clear();
            for i in 0..n {
                d[i] = -pg[i];
            }
        }

        let mut step = if memory.is_empty() {
            (1.0 / grad_norm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..opts.max_line_search {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            bounds.project(&mut x_new);
            let f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            let decrease: f64 = g.iter().zip(&x_new).zip(&x).map(|((gi, a), b)| gi * (a - b)).sum();
            if f_new.is_finite() && f_new <= fx + 1e-4 * decrease.min(0.0) {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            if memory.is_empty() {
                break StopReason::LineSearchFailed;
            }
            memory.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > f64::EPSILON * yy {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }

        let f_old = fx;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if f_old - fx <= opts.ftol * f_old.abs().max(fx.abs()) {
            break StopReason::FunctionTolerance;
        }
    };

    Minimum {
        x,
        f: fx,
        grad_norm,
        iterations,
        evaluations,
        stop,
    }
}
