//! Small numerical kernels shared by the distribution and likelihood code.

use statrs::distribution::{Beta, ChiSquared, ContinuousCDF, Normal};

/// Threshold below which series expansions replace the closed forms.
pub(crate) const SERIES_CUTOFF: f64 = 1e-8;

/// `expm1(x) / x`, equal to 1 at the origin.
#[inline]
pub fn exprel(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        1.0 + 0.5 * x
    } else if x == f64::INFINITY {
        f64::INFINITY
    } else {
        x.exp_m1() / x
    }
}

/// `ln(1 + x) / x`, equal to 1 at the origin.
#[inline]
pub fn log1prel(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        1.0 - 0.5 * x
    } else {
        x.ln_1p() / x
    }
}

/// `log(1 - exp(-x))` for `x > 0`, accurate at both ends.
#[inline]
pub fn log1mexp(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else if x < std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Upper tail probability of a chi-square with `df` degrees of freedom.
/// `df = 0` is the point mass at zero.
pub fn chisq_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return if x < 0.0 { 1.0 } else { 0.0 };
    }
    if x <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    d.sf(x)
}

/// Quantile of a chi-square with `df > 0` degrees of freedom.
pub fn chisq_quantile(p: f64, df: usize) -> f64 {
    let d = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    d.inverse_cdf(p)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("positive beta parameters").inverse_cdf(p)
}

/// Pairwise summation, used to keep reductions reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
