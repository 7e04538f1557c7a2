//! Closed-form statistics for trial planning and assessment.
//!
//! Special functions are implemented directly:
//! - inverse normal CDF: Acklam's rational approximation (relative error
//!   below 1.15e-9) followed by one Halley refinement step;
//! - log-gamma: Lanczos approximation (g = 7, n = 9);
//! - regularized incomplete gamma (series / Lentz continued fraction), which
//!   also provides erfc and the chi-square tail;
//! - regularized incomplete beta: modified Lentz continued fraction.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

// ---------------------------------------------------------------------------
// Special functions

/// Regularized lower incomplete gamma P(a, x) by series, upper Q(a, x) by
/// continued fraction, whichever converges faster.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    1.0 - gamma_q(a, x)
}

pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        1.0 - sum * ln_front.exp()
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        ln_front.exp() * h
    }
}

/// Complementary error function via `erfc(x) = Q(1/2, x²)`.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x < 0.5 {
        // Series for P is more accurate near zero.
        1.0 - gamma_p_series(0.5, x * x)
    } else {
        gamma_q(0.5, x * x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "normal_quantile needs p in (0, 1), got {p}"
    );
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley step against the accurate CDF.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta I_x(a, b).
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Two-sided tail probability P(|T| ≥ |t|) for Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    inc_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// Student's t CDF.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student's t quantile by bisection on the CDF.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Effect sizes and planning

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub d: f64,
    pub n1: usize,
    pub n2: usize,
    pub pooled_sd: f64,
}

pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<EffectSize> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(
            "each sample needs at least two values".into(),
        ));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled_var = ((n1 - 1.0) * variance(a) + (n2 - 1.0) * variance(b)) / (n1 + n2 - 2.0);
    let pooled_sd = pooled_var.sqrt();
    let diff = mean(a) - mean(b);
    let d = if pooled_sd > 0.0 {
        diff / pooled_sd
    } else if diff == 0.0 {
        0.0
    } else {
        return Err(Error::DegenerateSample(
            "zero pooled variance with unequal means".into(),
        ));
    };
    Ok(EffectSize {
        d,
        n1: a.len(),
        n2: b.len(),
        pooled_sd,
    })
}

fn check_power_args(d: f64, alpha: f64, power: f64) -> Result<()> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "effect size d must be > 0, got {d}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(power > 0.0 && power < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha and power must lie in (0, 1), got {alpha} and {power}"
        )));
    }
    Ok(())
}

/// Per-arm sample size for a two-sided two-sample comparison, normal
/// approximation: `ceil(2 (z_{1-α/2} + z_power)² / d²)`.
pub fn power_n(d: f64, alpha: f64, power: f64) -> Result<u64> {
    check_power_args(d, alpha, power)?;
    let z = normal_quantile(1.0 - alpha / 2.0) + normal_quantile(power);
    Ok((2.0 * z * z / (d * d)).ceil() as u64)
}

/// Per-arm sample size using t quantiles with `2n - 2` degrees of freedom,
/// iterated to a fixed point. Slightly larger than [`power_n`] for small n.
pub fn power_n_t(d: f64, alpha: f64, power: f64) -> Result<u64> {
    let mut n = power_n(d, alpha, power)?.max(2);
    for _ in 0..100 {
        let df = (2 * n - 2) as f64;
        let z = student_t_quantile(1.0 - alpha / 2.0, df) + student_t_quantile(power, df);
        let next = ((2.0 * z * z / (d * d)).ceil() as u64).max(2);
        if next == n {
            break;
        }
        n = next;
    }
    Ok(n)
}

pub fn design_effect(m: u32, icc: f64) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidInput("cluster size must be ≥ 1".into()));
    }
    if !(0.0..1.0).contains(&icc) {
        return Err(Error::InvalidInput(format!("ICC {icc} outside [0, 1)")));
    }
    Ok(1.0 + (m as f64 - 1.0) * icc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPlan {
    pub d_target: f64,
    pub alpha: f64,
    pub power: f64,
    pub n_per_arm: u64,
    pub icc: f64,
    pub cluster_size: u32,
    pub design_effect: f64,
    pub n_adjusted: u64,
}

impl PowerPlan {
    pub fn new(d: f64, alpha: f64, power: f64, cluster_size: u32, icc: f64) -> Result<Self> {
        let n = power_n(d, alpha, power)?;
        adjust(PowerPlan {
            d_target: d,
            alpha,
            power,
            n_per_arm: n,
            icc,
            cluster_size,
            design_effect: 1.0,
            n_adjusted: n,
        })
    }
}

/// Fills in the design effect and the inflated per-arm sample size.
pub fn adjust(mut plan: PowerPlan) -> Result<PowerPlan> {
    plan.design_effect = design_effect(plan.cluster_size, plan.icc)?;
    // Rounded to absorb representation error in n·DE before the ceiling.
    let raw = plan.n_per_arm as f64 * plan.design_effect;
    plan.n_adjusted = ((raw * 1e9).round() / 1e9).ceil() as u64;
    Ok(plan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(
            "each sample needs at least two values".into(),
        ));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (v1, v2) = (variance(a) / n1, variance(b) / n2);
    if !(v1.is_finite() && v2.is_finite()) {
        return Err(Error::InvalidInput("non-finite variance".into()));
    }
    if v1 == 0.0 && v2 == 0.0 {
        return Err(Error::DegenerateSample(
            "both samples have zero variance".into(),
        ));
    }
    let t = (mean(a) - mean(b)) / (v1 + v2).sqrt();
    let df = (v1 + v2).powi(2) / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
    Ok(WelchResult {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

// ---------------------------------------------------------------------------
// OLS with a time × group interaction

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub y: f64,
    pub time: u8,
    pub group: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceEstimator {
    /// RSS / (n − 4).
    #[default]
    Unbiased,
    /// RSS / n.
    MaximumLikelihood,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionFit {
    /// Intercept, time, group, time × group.
    pub beta: [f64; 4],
    pub se: [f64; 4],
    /// `beta / se` where `se > 0`, NaN otherwise.
    pub t: [f64; 4],
    pub n: usize,
    pub sigma2: f64,
}

impl InteractionFit {
    pub fn p_interaction(&self) -> f64 {
        student_t_two_sided(self.t[3], (self.n - 4) as f64)
    }
}

/// Solves `a · x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. Returns `None` if a pivot is (numerically) zero.
pub fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (k, v) in a[row].iter_mut().enumerate().skip(col) {
                *v -= f * pivot_row[k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for col in (0..N).rev() {
        let s: f64 = (col + 1..N).map(|k| a[col][k] * x[k]).sum();
        x[col] = (b[col] - s) / a[col][col];
    }
    Some(x)
}

pub fn ols_interaction(rows: &[PanelRow]) -> Result<InteractionFit> {
    ols_interaction_with(rows, VarianceEstimator::Unbiased)
}

pub fn ols_interaction_with(
    rows: &[PanelRow],
    estimator: VarianceEstimator,
) -> Result<InteractionFit> {
    let mut cells = [[0usize; 2]; 3];
    for r in rows {
        if r.time > 2 || r.group > 1 || !r.y.is_finite() {
            return Err(Error::InvalidInput(format!("invalid panel row {r:?}")));
        }
        cells[r.time as usize][r.group as usize] += 1;
    }
    let missing: Vec<(u8, u8)> = (0..3u8)
        .flat_map(|t| (0..2u8).map(move |g| (t, g)))
        .filter(|&(t, g)| cells[t as usize][g as usize] == 0)
        .collect();
    // Identification needs two distinct times within each group.
    let times_in = |g: usize| (0..3).filter(|&t| cells[t][g] > 0).count();
    if times_in(0) < 2 || times_in(1) < 2 {
        return Err(Error::RankDeficient { missing });
    }

    let design = |r: &PanelRow| {
        let t = r.time as f64;
        let g = r.group as f64;
        [1.0, t, g, t * g]
    };
    let mut xtx = [[0.0; 4]; 4];
    let mut xty = [0.0; 4];
    for r in rows {
        let x = design(r);
        for i in 0..4 {
            xty[i] += x[i] * r.y;
            for j in 0..4 {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    let beta = solve_dense(xtx, xty).ok_or(Error::RankDeficient {
        missing: missing.clone(),
    })?;
    let mut inv = [[0.0; 4]; 4];
    for k in 0..4 {
        let mut e = [0.0; 4];
        e[k] = 1.0;
        let col = solve_dense(xtx, e).ok_or(Error::RankDeficient {
            missing: missing.clone(),
        })?;
        for i in 0..4 {
            inv[i][k] = col[i];
        }
    }
    let rss: f64 = rows
        .iter()
        .map(|r| {
            let x = design(r);
            let fit: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (r.y - fit).powi(2)
        })
        .sum();
    let n = rows.len();
    let denom = match estimator {
        VarianceEstimator::Unbiased => n.saturating_sub(4),
        VarianceEstimator::MaximumLikelihood => n,
    };
    let sigma2 = if denom == 0 { 0.0 } else { rss / denom as f64 };
    let mut se = [0.0; 4];
    let mut t = [f64::NAN; 4];
    for i in 0..4 {
        se[i] = (sigma2 * inv[i][i]).max(0.0).sqrt();
        if se[i] > 0.0 {
            t[i] = beta[i] / se[i];
        }
    }
    Ok(InteractionFit {
        beta,
        se,
        t,
        n,
        sigma2,
    })
}

/// Simple linear regression `y = a + b x`; returns `(a, b, se_b)`.
pub fn ols_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidInput(
            "need at least three paired points".into(),
        ));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateSample("regressor is constant".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = (rss / (x.len() as f64 - 2.0) / sxx).sqrt();
    Ok((intercept, slope, se))
}

/// Blau heterogeneity `1 − Σ s²` over tie shares per group. All-zero input
/// (no ties) gives 0.
pub fn sndi(shares: &[f64]) -> Result<f64> {
    if shares.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidInput(
            "tie shares must be non-negative".into(),
        ));
    }
    let total: f64 = shares.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "tie shares sum to {total}, expected 1"
        )));
    }
    Ok(1.0 - shares.iter().map(|s| s * s).sum::<f64>())
}

/// [`sndi`] from raw per-group tie counts.
pub fn sndi_from_counts(counts: &[u32]) -> f64 {
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}
