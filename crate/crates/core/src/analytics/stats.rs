//! Pearson correlation with a t-test p-value and a Fisher-z interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub r: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Natural log of the gamma function for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
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
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
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
    for m in 1..=10_000 {
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

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// 95% interval for a correlation of `n` pairs via the Fisher transform.
pub fn fisher_ci(r: f64, n: usize) -> (f64, f64) {
    let z = r.clamp(-1.0, 1.0).atanh();
    let half = Z_95 / ((n as f64) - 3.0).sqrt();
    ((z - half).tanh(), (z + half).tanh())
}

pub fn correlation_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let r = r.clamp(-1.0, 1.0);
    if r.abs() == 1.0 {
        return 0.0;
    }
    t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
}

/// Report for a known r (used when only r and n are given).
pub fn report_from_r(r: f64, n: usize) -> Result<CorrelationReport> {
    if n < 4 {
        return Err(Error::Data(format!("need at least 4 pairs for an interval, got {n}")));
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::Data(format!("correlation {r} outside [-1, 1]")));
    }
    let (ci_low, ci_high) = fisher_ci(r, n);
    Ok(CorrelationReport {
        r,
        p: correlation_p(r, n),
        ci_low,
        ci_high,
        n,
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationReport> {
    if x.len() != y.len() {
        return Err(Error::Data(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 pairs, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("series contain non-finite values".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let (ci_low, ci_high) = if n > 3 { fisher_ci(r, n) } else { (-1.0, 1.0) };
    Ok(CorrelationReport {
        r,
        p: correlation_p(r, n),
        ci_low: ci_low.min(r),
        ci_high: ci_high.max(r),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn ln_gamma_values() {
        // reference values from scipy.special.gammaln
        for (x, v) in [
            (0.5, 0.5723649429247),
            (1.0, 0.0),
            (3.5, 1.2009736023470743),
            (10.0, 12.801827480081469),
            (100.25, 360.28455963776423),
        ] {
            assert!((ln_gamma(x) - v).abs() < 1e-12, "{x}: {} vs {v}", ln_gamma(x));
        }
    }

    #[test]
    fn incomplete_beta_values() {
        // reference values from scipy.special.betainc
        for (a, b, x, v) in [
            (0.5, 0.5, 0.3, 0.36901011956554536),
            (2.0, 3.0, 0.4, 0.5247999999999999),
            (5.5, 0.5, 0.9, 0.29251845539577315),
            (24.5, 0.5, 0.2, 9.466986620792635e-19),
            (100.0, 0.5, 0.99, 0.1567758654244408),
            (1.0, 1.0, 0.7, 0.7),
            (0.1, 10.0, 0.01, 0.8244896709066988),
        ] {
            let got = reg_inc_beta(a, b, x);
            assert!(close(got, v, 1e-10), "I({a},{b},{x}) = {got}, expected {v}");
        }
    }

    #[test]
    fn incomplete_beta_closed_form() {
        // I_x(a, 1) = x^a and I_x(1, b) = 1 - (1-x)^b
        for &x in &[0.01, 0.2, 0.5, 0.77, 0.999] {
            for &k in &[0.5, 1.0, 2.5, 7.0] {
                assert!(close(reg_inc_beta(k, 1.0, x), x.powf(k), 1e-12));
                assert!(close(reg_inc_beta(1.0, k, x), 1.0 - (1.0 - x).powf(k), 1e-12));
            }
        }
    }

    #[test]
    fn p_values_match_reference() {
        // two-sided t-test p values from scipy.stats.t.sf
        for (r, n, p) in [
            (0.92, 13, 8.450012760542984e-06),
            (0.98, 52, 1.0025212456764429e-36),
            (-0.77, 51, 3.982382393672095e-11),
            (0.3, 10, 0.39969146875000017),
            (0.05, 100, 0.6212899778453027),
        ] {
            let got = correlation_p(r, n);
            assert!(close(got, p, 1e-8), "r={r} n={n}: {got} vs {p}");
        }
    }

    #[test]
    fn pearson_reference() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0, 7.0, 10.0];
        let y = [2.0, 1.0, 4.0, 3.0, 7.0, 8.0, 6.0];
        let rep = pearson(&x, &y).unwrap();
        assert!((rep.r - 0.617239559498455).abs() < 1e-14);
        assert!(close(rep.p, 0.13975740143581245, 1e-10));
        assert_eq!(rep.n, 7);
    }

    #[test]
    fn perfect_line() {
        let rep = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(rep.r, 1.0);
        assert_eq!(rep.p, 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Data(_))));
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateSeries(_))));
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::Data(_))));
    }

    #[test]
    fn fisher_interval_formula() {
        let (lo, hi) = fisher_ci(0.5, 28);
        let z = 0.5f64.atanh();
        assert_eq!(lo, (z - 1.96 / 5.0).tanh());
        assert_eq!(hi, (z + 1.96 / 5.0).tanh());
    }

    #[test]
    fn published_intervals_from_unrounded_r() {
        let r2 = |x: f64| (x * 100.0).round() / 100.0;
        for (r, n, p, lo, hi) in [
            (0.9245, 13, 6.20e-6, 0.76, 0.98),
            (0.97599, 52, 9.27e-35, 0.96, 0.99),
            (-0.76395, 51, 6.97e-11, -0.86, -0.62),
        ] {
            let (a, b) = fisher_ci(r, n);
            assert_eq!((r2(a), r2(b)), (lo, hi), "r={r}");
            assert!(close(correlation_p(r, n), p, 0.02), "r={r}");
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_affine_invariant(
            pts in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 4..40),
            scale in 0.1f64..10.0, shift in -50.0f64..50.0,
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let (Ok(a), Ok(b)) = (pearson(&x, &y), pearson(&y, &x)) else { return Ok(()) };
            prop_assert!((-1.0..=1.0).contains(&a.r));
            prop_assert!((a.r - b.r).abs() < 1e-12);
            prop_assert!(a.ci_low <= a.r && a.r <= a.ci_high);
            prop_assert!((0.0..=1.0).contains(&a.p));
            let xs: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            if let Ok(c) = pearson(&xs, &y) {
                prop_assert!((a.r - c.r).abs() < 1e-9);
            }
        }
    }
}
