use asacd_core::defaults;
use asacd_core::simlab::*;
use asacd_core::stats;

fn demo() -> TrialConfig {
    TrialConfig::preset("paper-demo").unwrap()
}

#[test]
fn paper_demo_regime() {
    let banks = defaults::phrase_banks();
    let reports = run_seeds(&demo(), &banks, 100).unwrap();
    let s = ensemble(&reports);
    assert!(s.frac_intervention_exceeds >= 0.95, "{s:?}");
    assert!(s.uplift_ratio() >= 5.0, "{s:?}");
    assert!(s.mean_d_marker > 0.8, "{s:?}");
    assert_eq!(s.control_nudges_before_t1, 0);
    for r in &reports {
        r.verify().unwrap();
    }
}

#[test]
fn null_intervention_has_no_effect() {
    let banks = defaults::phrase_banks();
    let cfg = TrialConfig {
        delta: 0.0,
        ..demo()
    };
    let reports = run_seeds(&cfg, &banks, 100).unwrap();
    let d: Vec<f64> = reports.iter().map(|r| r.stats.d_marker).collect();
    let b3: Vec<f64> = reports
        .iter()
        .map(|r| r.stats.interaction.beta[3])
        .collect();
    let mean_d = stats::mean(&d);
    assert!(mean_d.abs() < 0.15, "mean d {mean_d}");
    // The interaction estimate is centred on zero: its mean lies within
    // three standard errors of the ensemble.
    let se = (stats::variance(&b3) / b3.len() as f64).sqrt();
    assert!(
        stats::mean(&b3).abs() < 3.0 * se,
        "beta3 {} se {se}",
        stats::mean(&b3)
    );
}

#[test]
fn same_seed_same_bytes() {
    let banks = defaults::phrase_banks();
    let a = serde_json::to_string(&run_trial(&demo(), &banks).unwrap()).unwrap();
    let b = serde_json::to_string(&run_trial(&demo(), &banks).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dose_response_slope() {
    let banks = defaults::phrase_banks();
    let r = dose_response(&demo(), &banks, &[0, 1, 2, 4], DEFAULT_DOSE_SEEDS).unwrap();
    assert!(r.slope > 0.0 && r.t > 2.0, "slope {} t {}", r.slope, r.t);
    assert_eq!(r.per_dose.len(), 4);

    let null = TrialConfig {
        delta: 0.0,
        ..demo()
    };
    let n = dose_response(&null, &banks, &[0, 1, 2, 4], DEFAULT_DOSE_SEEDS).unwrap();
    assert!(n.t.abs() < 3.0, "null slope t {}", n.t);

    let doubled = TrialConfig {
        delta: 2.0 * demo().delta,
        ..demo()
    };
    let d = dose_response(&doubled, &banks, &[0, 1, 2, 4], DEFAULT_DOSE_SEEDS).unwrap();
    assert!(d.slope > r.slope, "{} vs {}", d.slope, r.slope);
}

#[test]
fn recovery_of_injected_interaction() {
    let r = recover_effect(&RecoveryConfig::default()).unwrap();
    assert!(r.relative_bias.abs() <= 0.10, "{}", r.mean_estimate);
    assert!(r.coverage_3se >= 0.99, "{}", r.coverage_3se);
}

#[test]
fn null_recovery_rejects_at_nominal_rate() {
    let r = recover_effect(&RecoveryConfig {
        injected_beta3: 0.0,
        seeds: 2000,
        ..RecoveryConfig::default()
    })
    .unwrap();
    assert!(
        (r.rejection_rate - 0.05).abs() <= 0.02,
        "{}",
        r.rejection_rate
    );
}

#[test]
fn follow_up_decay_reduces_t2() {
    let banks = defaults::phrase_banks();
    let kept = run_trial(&demo(), &banks).unwrap();
    let decayed = run_trial(
        &TrialConfig {
            follow_up_decay: 5.0,
            ..demo()
        },
        &banks,
    )
    .unwrap();
    for (a, b) in kept.agents.iter().zip(&decayed.agents) {
        assert_eq!(a.theta[2], a.theta[1]);
        assert!((b.theta[2] - b.theta[0]).abs() <= (b.theta[1] - b.theta[0]).abs());
    }
}
