use asacd_core::association::{pmi, CooccurrenceTable};
use asacd_core::corpus::{fleiss_kappa, AnnotationMatrix};
use asacd_core::stats::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Oracle {
    fleiss_matrix: Vec<Vec<u32>>,
    fleiss_kappa: f64,
    welch_a: Vec<f64>,
    welch_b: Vec<f64>,
    welch_t: f64,
    welch_df: f64,
    welch_p: f64,
}

fn oracle() -> Oracle {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/stats_oracle.json"
    );
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fleiss_textbook_matrix() {
    let o = oracle();
    let m = AnnotationMatrix::new(o.fleiss_matrix).unwrap();
    let k = fleiss_kappa(&m).unwrap();
    assert!((k - o.fleiss_kappa).abs() < 1e-12, "{k}");
    assert!((k - 0.210).abs() < 5e-4);
}

#[test]
fn welch_matches_reference() {
    let o = oracle();
    let r = welch_t(&o.welch_a, &o.welch_b).unwrap();
    assert!((r.t - o.welch_t).abs() < 1e-10);
    assert!((r.df - o.welch_df).abs() < 1e-10);
    assert!((r.p - o.welch_p).abs() < 1e-8, "{} vs {}", r.p, o.welch_p);
}

#[test]
fn planning_values() {
    assert_eq!(power_n(0.5, 0.05, 0.80).unwrap(), 63);
    assert!((design_effect(10, 0.05).unwrap() - 1.45).abs() < 1e-12);
    let d = cohens_d(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
    // Pooled variance (4 + 1) / 2 = 2.5, difference 2.
    assert!((d.d - 2.0 / 2.5f64.sqrt()).abs() < 1e-12);
    assert!((d.d - 1.2649).abs() < 1e-4);
}

#[test]
fn noiseless_interaction_recovery() {
    let beta = [1.5, -0.25, 0.7, 0.92];
    let mut rows = Vec::new();
    for i in 0..40u32 {
        let g = (i % 2) as u8;
        for t in 0..3u8 {
            let (tf, gf) = (t as f64, g as f64);
            rows.push(PanelRow {
                y: beta[0] + beta[1] * tf + beta[2] * gf + beta[3] * tf * gf,
                time: t,
                group: g,
            });
        }
    }
    let fit = ols_interaction(&rows).unwrap();
    for (got, want) in fit.beta.iter().zip(beta) {
        assert!((got - want).abs() <= 1e-9);
    }
}

#[test]
fn pmi_closed_forms() {
    let t = CooccurrenceTable::new(100, 30, 40, 20).unwrap();
    assert!((pmi(&t, 0.0).unwrap() - (5.0f64 / 3.0).log2()).abs() <= 1e-9);
    let smoothed = (20.5f64 * 102.0 / (31.0 * 41.0)).log2();
    assert!((pmi(&t, 0.5).unwrap() - smoothed).abs() <= 1e-9);
    let indep = CooccurrenceTable::new(100, 20, 50, 10).unwrap();
    assert!(pmi(&indep, 0.0).unwrap().abs() <= 1e-12);
    let zero = CooccurrenceTable::new(10, 0, 5, 0).unwrap();
    assert!(pmi(&zero, 0.0).is_err());
}

fn noisy_panel(beta: [f64; 4], n: usize, seed: u64) -> Vec<PanelRow> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let time = (i % 3) as u8;
            let group = ((i / 3) % 2) as u8;
            let (tf, gf) = (time as f64, group as f64);
            let e: f64 = StandardNormal.sample(&mut rng);
            PanelRow {
                y: beta[0] + beta[1] * tf + beta[2] * gf + beta[3] * tf * gf + e,
                time,
                group,
            }
        })
        .collect()
}

#[test]
fn noisy_coefficients_within_three_se() {
    let beta = [2.0, 0.3, -0.5, 0.92];
    let mut covered = [0usize; 4];
    for seed in 0..200 {
        let fit = ols_interaction(&noisy_panel(beta, 600, seed)).unwrap();
        for k in 0..4 {
            if (fit.beta[k] - beta[k]).abs() <= 3.0 * fit.se[k] {
                covered[k] += 1;
            }
        }
    }
    for c in covered {
        assert!(c >= 198, "{covered:?}");
    }
}

#[test]
fn duplicating_rows_shrinks_se_by_root_two() {
    let rows = noisy_panel([1.0, 0.2, 0.4, 0.9], 60, 3);
    let doubled: Vec<PanelRow> = rows.iter().chain(&rows).cloned().collect();
    let ml = VarianceEstimator::MaximumLikelihood;
    let a = ols_interaction_with(&rows, ml).unwrap();
    let b = ols_interaction_with(&doubled, ml).unwrap();
    for k in 0..4 {
        assert!((a.beta[k] - b.beta[k]).abs() < 1e-9);
        assert!((a.se[k] / b.se[k] - 2f64.sqrt()).abs() < 1e-6);
    }
    // With n - 4 degrees of freedom the ratio is only approximately root two.
    let u = ols_interaction(&rows).unwrap().se[3] / ols_interaction(&doubled).unwrap().se[3];
    assert!((u - 2f64.sqrt()).abs() < 0.05, "{u}");
}
