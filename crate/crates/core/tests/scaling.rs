use moealloc::scaling::{
    loss_terms, predict_loss_alt, AbnarCoefficients, AltLawCoefficients, LossLawCoefficients, RunRecord,
    WangCoefficients,
};
use moealloc::predict_loss;
use proptest::prelude::*;

fn record(n: f64, d: f64, s: f64, r: f64) -> RunRecord {
    RunRecord {
        label: String::new(),
        n,
        n_active: n * (1.0 - s),
        d,
        s,
        r,
        c: 6.0 * n * (1.0 - s) * d,
        loss: 1.0,
    }
}

fn coords() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (7.0f64..10.0, 9.0f64..12.0, 0.0f64..0.98, 0.0f64..3.0)
        .prop_map(|(ln, ld, s, r)| (10f64.powf(ln), 10f64.powf(ld), s, r))
}

#[test]
fn frozen_reference_values() {
    let c = LossLawCoefficients::PUBLISHED;
    let t = loss_terms(&c, &record(5.5e8, 1e10, 0.9538, 0.6)).unwrap();
    let expect = [
        4.826_271_307_595_888e-5,
        6.561_145_618_811_111,
        0.012_727_523_307_044_81,
        0.018_712_5,
        13.7354,
    ];
    let got = [t.params, t.data, t.misallocation, t.efficiency, t.tau];
    for (g, e) in got.iter().zip(expect) {
        assert!((g - e).abs() / e < 1e-12, "{g} vs {e}");
    }
    let curve = [
        (1e9, 21.049_374_591_901_99),
        (1e10, 20.328_033_904_831_23),
        (1e11, 19.678_143_044_779_5),
    ];
    for (d, e) in curve {
        let l = predict_loss(&c, &record(5.5e8, d, 0.9538, 0.6)).unwrap();
        assert!((l - e).abs() / e < 1e-12, "{d}: {l}");
    }
}

proptest! {
    #[test]
    fn terms_sum_to_total((n, d, s, r) in coords()) {
        let c = LossLawCoefficients::PUBLISHED;
        let rec = record(n, d, s, r);
        let t = loss_terms(&c, &rec).unwrap();
        let sum = t.params + t.data + t.misallocation + t.efficiency + t.tau;
        let l = predict_loss(&c, &rec).unwrap();
        prop_assert!((sum - l).abs() <= 4.0 * f64::EPSILON * l);
    }

    #[test]
    fn monotone_in_n_d_r((n, d, s, r) in coords()) {
        let c = LossLawCoefficients::PUBLISHED;
        let l = predict_loss(&c, &record(n, d, s, r)).unwrap();
        prop_assert!(predict_loss(&c, &record(n * 1.5, d, s, r)).unwrap() < l);
        prop_assert!(predict_loss(&c, &record(n, d * 1.5, s, r)).unwrap() < l);
        prop_assert!(predict_loss(&c, &record(n, d, s, r + 0.1)).unwrap() > l);
    }

    #[test]
    fn derivative_in_r_positive((n, d, s, r) in coords()) {
        let c = LossLawCoefficients::PUBLISHED;
        let h = 1e-4;
        let up = predict_loss(&c, &record(n, d, s, r + h)).unwrap();
        let lo = predict_loss(&c, &record(n, d, s, (r - h).max(0.0))).unwrap();
        prop_assert!(up - lo > 0.0);
    }

    #[test]
    fn alt_laws_reduce_to_chinchilla((n, d, s, r) in coords()) {
        let rec = record(n, d, s, r);
        let chinchilla = 400.0 * n.powf(-0.34) + 410.0 * d.powf(-0.28) + 1.69;
        let wang = AltLawCoefficients::Wang(WangCoefficients {
            a: 400.0, alpha: 0.34, gamma: 0.0, b: 410.0, beta: 0.28, tau: 1.69, e_act: 3.0,
        });
        let abnar = AltLawCoefficients::Abnar(AbnarCoefficients {
            a: 400.0, alpha: 0.34, b: 410.0, beta: 0.28, c: 0.0, gamma: 0.2, d: 0.0, delta: 0.3, tau: 1.69,
        });
        for law in [wang, abnar] {
            let l = predict_loss_alt(&law, &rec).unwrap();
            prop_assert!((l - chinchilla).abs() <= 1e-12 * chinchilla);
        }
        let fin = LossLawCoefficients { c: 0.0, d: 0.0, a: 400.0, alpha: 0.34, b: 410.0, beta: 0.28, tau: 1.69, ..LossLawCoefficients::PUBLISHED };
        let l = predict_loss(&fin, &rec).unwrap();
        prop_assert!((l - chinchilla).abs() <= 1e-12 * chinchilla);
    }
}
