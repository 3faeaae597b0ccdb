//! Summary statistics and the hypothesis tests used by the acceptance suites.

use statrs::distribution::{Binomial, DiscreteCDF, FisherSnedecor, ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ── Anderson-Darling ────────────────────────────────────────────────────

/// Critical value of A² at the 1% level for a fully specified null.
pub const AD_CRITICAL_1PCT: f64 = 3.857;

/// Anderson-Darling statistic of `xs` against the standard normal.
pub fn anderson_darling_normal(xs: &[f64]) -> f64 {
    let n = xs.len();
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let z = Normal::new(0.0, 1.0).expect("unit normal");
    let cdf: Vec<f64> = v.iter().map(|&x| z.cdf(x).clamp(1e-300, 1.0 - 1e-16)).collect();
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let w = (2 * i + 1) as f64;
        s += w * (cdf[i].ln() + (1.0 - cdf[n - 1 - i]).ln());
    }
    -nf - s / nf
}

/// Limiting distribution function of A² (Marsaglia & Marsaglia).
pub fn anderson_darling_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}

/// Asymptotic p-value of an A² statistic.
pub fn anderson_darling_p(a2: f64) -> f64 {
    (1.0 - anderson_darling_cdf(a2)).clamp(0.0, 1.0)
}

// ── Sign test ───────────────────────────────────────────────────────────

/// One-sided sign test of `H₁: P(d > 0) > 1/2`. Zeros are dropped.
/// Returns `(positives, nonzero, p)`.
pub fn sign_test(diffs: &[f64]) -> (usize, usize, f64) {
    let pos = diffs.iter().filter(|&&d| d > 0.0).count();
    let n = diffs.iter().filter(|&&d| d != 0.0).count();
    if n == 0 {
        return (0, 0, 1.0);
    }
    let b = Binomial::new(0.5, n as u64).expect("valid binomial");
    let p = if pos == 0 { 1.0 } else { b.sf(pos as u64 - 1) };
    (pos, n, p)
}

// ── F-test ──────────────────────────────────────────────────────────────

/// One-sided F-test of `H₁: σ₁² > σ₂²` from sample variances. Returns `(F, p)`.
pub fn f_test_greater(var1: f64, n1: usize, var2: f64, n2: usize) -> (f64, f64) {
    let f = var1 / var2;
    let dist = FisherSnedecor::new((n1 - 1) as f64, (n2 - 1) as f64).expect("valid degrees of freedom");
    (f, dist.sf(f))
}

// ── Two-sample Kolmogorov-Smirnov ───────────────────────────────────────

/// Kolmogorov distribution tail `Q(λ) = 2 Σ (−1)^{j−1} e^{−2j²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}
