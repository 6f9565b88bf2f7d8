use moealloc::fit::{
    extract_rstar_with, fit_loss_law, huber, huber_objective, FitOptions, LawModel, SweepGroup,
};
use moealloc::scaling::{LawCoefficients, LawVariant, LossLawCoefficients, RTermMode, RunRecord};
use moealloc::{synth, SynthGrid};
use proptest::prelude::*;

fn small_grid() -> SynthGrid {
    SynthGrid {
        n: vec![1e8, 4e8, 1.6e9],
        d: vec![1e9, 1e10, 1e11],
        s: vec![0.8235, 0.9538],
        r: vec![0.2, 0.8, 1.5],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rstar_is_a_sampled_near_minimum(
        sweeps in prop::collection::vec(prop::collection::vec((0.05f64..3.0, 2.0f64..2.01), 2..8), 1..6),
        tol in 0.0f64..0.005,
    ) {
        let groups: Vec<SweepGroup> = sweeps
            .into_iter()
            .enumerate()
            .filter_map(|(i, mut pts)| {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                pts.dedup_by(|a, b| a.0 == b.0);
                (pts.len() >= 2).then(|| SweepGroup::new(10f64.powi(18 + i as i32), 0.9, pts).unwrap())
            })
            .collect();
        prop_assume!(!groups.is_empty());
        let obs = extract_rstar_with(&groups, tol).unwrap();
        prop_assert_eq!(obs.len(), groups.len());
        for (o, g) in obs.iter().zip(&groups) {
            let min = g.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            prop_assert!(g.points.iter().any(|p| p.0 == o.r_star && p.1 == o.loss_at_star));
            prop_assert!(o.loss_at_star - min <= tol);
        }
    }

    #[test]
    fn huber_is_least_squares_below_delta(es in prop::collection::vec(-9e-4f64..9e-4, 1..20)) {
        let delta = 1e-3;
        let h: f64 = es.iter().map(|&e| huber(e, delta)).sum();
        let ls: f64 = es.iter().map(|e| 0.5 * e * e).sum();
        prop_assert!((h - ls).abs() <= 1e-15 * ls.max(1e-300));
    }
}

#[test]
fn gradients_match_finite_differences() {
    let recs = synth(&LawCoefficients::Final(LossLawCoefficients::PUBLISHED), &small_grid(), 0.01, 3).unwrap();
    for variant in [LawVariant::Final, LawVariant::Wang, LawVariant::Abnar] {
        let model = LawModel::new(variant, &recs, RTermMode::Ratio, 3.0).unwrap();
        let k = model.n_params();
        let theta: Vec<f64> = (0..k).map(|i| if i % 2 == 0 { 1.2 } else { 0.35 }).collect();
        for i in 0..model.len() {
            let mut g = vec![0.0; k];
            model.log_predict(&theta, i, Some(&mut g));
            for j in 0..k {
                let h = 1e-6;
                let (mut up, mut lo) = (theta.clone(), theta.clone());
                up[j] += h;
                lo[j] -= h;
                let fd = (model.log_predict(&up, i, None) - model.log_predict(&lo, i, None)) / (2.0 * h);
                let scale = g[j].abs().max(1e-3);
                assert!((fd - g[j]).abs() / scale < 1e-6, "{variant:?} record {i} param {j}: {fd} vs {}", g[j]);
            }
        }
    }
}

#[test]
fn fit_beats_every_start_and_is_deterministic() {
    let recs = synth(&LawCoefficients::Final(LossLawCoefficients::PUBLISHED), &small_grid(), 0.0, 0).unwrap();
    let opts = FitOptions { starts: 24, seed: 11, ..FitOptions::default() };
    let a = fit_loss_law(&recs, &opts).unwrap();
    let b = fit_loss_law(&recs, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let model = LawModel::new(LawVariant::Final, &recs, RTermMode::Ratio, 3.0).unwrap();
    let grid = moealloc::fit::start_grid(LawVariant::Final);
    let starts = moealloc::fit::select_starts(grid.len(), &opts);
    for idx in starts {
        let start = model.objective_value(&model.to_internal(&grid.point(idx)), opts.huber_delta);
        assert!(a.objective <= start * (1.0 + 1e-12), "start {idx}");
    }
    let recomputed = huber_objective(&a.coefficients, &recs, opts.huber_delta).unwrap();
    assert_eq!(recomputed, a.objective);
}

#[test]
fn misspecified_variant_fits_worse() {
    let recs: Vec<RunRecord> =
        synth(&LawCoefficients::Final(LossLawCoefficients::PUBLISHED), &small_grid(), 0.0, 0).unwrap();
    let fit = |variant| {
        let opts = FitOptions { variant, starts: 64, seed: 5, ..FitOptions::default() };
        fit_loss_law(&recs, &opts).unwrap().in_sample_rmse
    };
    let (fin, wang) = (fit(LawVariant::Final), fit(LawVariant::Wang));
    assert!(wang > fin, "wang {wang} vs final {fin}");
}
