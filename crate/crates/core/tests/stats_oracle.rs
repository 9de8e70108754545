//! Detector scores against straightforward recomputation.

use gera_core::inventory::stats::Baseline;
use gera_core::inventory::{exceeds, score, Method, Score, MAD_SCALE};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn oracle_median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn oracle_z(w: &[f64], x: f64) -> Option<f64> {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var > 0.0).then(|| (x - mean) / var.sqrt())
}

fn oracle_m(w: &[f64], x: f64) -> Option<f64> {
    let med = oracle_median(w);
    let dev: Vec<f64> = w.iter().map(|v| (v - med).abs()).collect();
    let mad = oracle_median(&dev);
    (mad > 0.0).then(|| MAD_SCALE * (x - med) / mad)
}

/// Hinges: medians of the lower and upper halves, middle point excluded.
fn oracle_quartiles(w: &[f64]) -> (f64, f64) {
    let mut v = w.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = v.len() / 2;
    let lower = &v[..h];
    let upper = &v[v.len() - h..];
    (oracle_median(lower), oracle_median(upper))
}

fn window() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(0i32..400).prop_map(|v| v as f64 / 4.0), 80.0..120.0f64],
        10..40,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn scores_match_brute_force(w in window(), x in 0.0f64..200.0) {
        let b = Baseline::of(&w);
        match (oracle_z(&w, x), score(Method::Zscore, &b, x)) {
            (Some(z), Score::Finite(got)) => {
                prop_assert!((z - got).abs() < TOL, "z {z} vs {got}");
                prop_assert_eq!(exceeds(Score::Finite(got), 3.0), z.abs() > 3.0);
            }
            (None, s) => prop_assert!(s == Score::Finite(0.0) || s.abs().is_infinite()),
            (Some(z), s) => prop_assert!(false, "z {z} scored {s:?}"),
        }
        match (oracle_m(&w, x), score(Method::Mad, &b, x)) {
            (Some(m), Score::Finite(got)) => prop_assert!((m - got).abs() < TOL, "M {m} vs {got}"),
            (None, s) => prop_assert!(s == Score::Finite(0.0) || s.abs().is_infinite()),
            (Some(m), s) => prop_assert!(false, "M {m} scored {s:?}"),
        }
        let (q1, q3) = oracle_quartiles(&w);
        prop_assert!((b.q1 - q1).abs() < TOL && (b.q3 - q3).abs() < TOL);
        let iqr = q3 - q1;
        let flagged = x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr;
        prop_assert_eq!(exceeds(score(Method::Iqr, &b, x), 1.5), flagged);
    }

    #[test]
    fn z_flag_set_is_exact(w in window(), xs in prop::collection::vec(0.0f64..300.0, 1..20)) {
        let b = Baseline::of(&w);
        let Some(_) = oracle_z(&w, 0.0) else { return Ok(()) };
        let mine: Vec<bool> = xs.iter().map(|&x| exceeds(score(Method::Zscore, &b, x), 3.0)).collect();
        let theirs: Vec<bool> = xs.iter().map(|&x| oracle_z(&w, x).unwrap().abs() > 3.0).collect();
        prop_assert_eq!(mine, theirs);
    }
}

#[test]
fn zero_spread_rules() {
    let flat = [50.0; 12];
    let b = Baseline::of(&flat);
    for m in Method::ALL {
        assert_eq!(score(m, &b, 50.0), Score::Finite(0.0));
        assert_eq!(score(m, &b, 50.5), Score::PosInf);
        assert_eq!(score(m, &b, 49.0), Score::NegInf);
        assert!(!exceeds(score(m, &b, 50.0), 0.0));
    }
    // MAD can be zero while the standard deviation is not.
    let mostly = [10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 11.0, 12.0, 10.0];
    let b = Baseline::of(&mostly);
    assert!(b.sd > 0.0 && b.mad == 0.0);
    assert_eq!(score(Method::Mad, &b, 10.0), Score::Finite(0.0));
    assert_eq!(score(Method::Mad, &b, 10.5), Score::PosInf);
    assert!(matches!(score(Method::Zscore, &b, 10.5), Score::Finite(_)));
}

#[test]
fn contaminated_window_hides_moderate_anomaly_from_z() {
    let mut w: Vec<f64> = (0..29)
        .map(|i| 100.0 + [-2.0, -1.0, 0.0, 1.0, 2.0][i % 5])
        .collect();
    w.push(1000.0);
    let x = 110.0;
    let z = oracle_z(&w, x).unwrap();
    let m = oracle_m(&w, x).unwrap();
    assert!(z <= 3.0 && m > 3.5, "z {z} M {m}");
    let b = Baseline::of(&w);
    assert!(!exceeds(score(Method::Zscore, &b, x), 3.0));
    assert!(exceeds(score(Method::Mad, &b, x), 3.5));
}
