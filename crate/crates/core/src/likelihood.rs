//! Weighted log likelihood under censoring and single or double interval truncation.
//!
//! A record contributes `log P(X ∈ C ∩ T) − log P(X ∈ T)` where `C` is its
//! censoring set and `T` the union of its truncation windows; exact failures
//! replace the numerator by the log density. Probabilities of intervals are
//! formed from cumulative hazards, `log P(a < X ≤ b) = −H(a) + log(1 − e^{H(a)−H(b)})`,
//! which stays accurate deep in the upper tail.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Event, LifetimeRecord};
use crate::families::ParamVector;
use crate::math::{log1mexp, logaddexp};

/// Tuning for likelihood evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoglikOptions {
    /// Probabilities at or below this value count as zero likelihood.
    pub floor: f64,
}

impl Default for LoglikOptions {
    fn default() -> Self {
        LoglikOptions { floor: 1e-300 }
    }
}

/// `log P(a < X ≤ b)`; `-inf` for empty intervals.
#[inline]
pub fn log_interval_prob(p: &ParamVector, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return f64::NEG_INFINITY;
    }
    let ha = p.cum_hazard_at(a);
    if ha == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let hb = p.cum_hazard_at(b);
    -ha + log1mexp(hb - ha)
}

/// Log probability of the truncation set of a record.
#[inline]
fn log_truncation_prob(p: &ParamVector, r: &LifetimeRecord) -> f64 {
    let first = if r.ltrunc1 <= 0.0 && r.rtrunc1 == f64::INFINITY {
        0.0
    } else {
        log_interval_prob(p, r.ltrunc1, r.rtrunc1)
    };
    match r.window2 {
        Some((l2, r2)) => logaddexp(first, log_interval_prob(p, l2, r2)),
        None => first,
    }
}

/// Log probability of the censoring set intersected with the truncation windows.
#[inline]
fn log_censoring_prob(p: &ParamVector, r: &LifetimeRecord) -> f64 {
    let (lo, hi) = match r.event {
        Event::RightCensored => (r.time1, f64::INFINITY),
        Event::LeftCensored => (f64::NEG_INFINITY, r.time2),
        Event::Interval => (r.time1, r.time2),
        Event::Observed => unreachable!("exact failures use the density"),
    };
    let first = log_interval_prob(p, lo.max(r.ltrunc1), hi.min(r.rtrunc1));
    match r.window2 {
        Some((l2, r2)) => logaddexp(first, log_interval_prob(p, lo.max(l2), hi.min(r2))),
        None => first,
    }
}

/// Unweighted log likelihood contribution of one record.
#[inline]
pub fn record_loglik(p: &ParamVector, r: &LifetimeRecord, floor_log: f64) -> f64 {
    let num = match r.event {
        Event::Observed => {
            let ld = p.log_density_at(r.time1);
            if ld == f64::NEG_INFINITY {
                return ld;
            }
            ld
        }
        _ => {
            let lp = log_censoring_prob(p, r);
            if !(lp > floor_log) {
                return f64::NEG_INFINITY;
            }
            lp
        }
    };
    if !r.is_truncated() {
        return num;
    }
    let den = log_truncation_prob(p, r);
    if !(den > floor_log) {
        return f64::NEG_INFINITY;
    }
    num - den
}

/// Weighted log likelihood of an exceedance-transformed dataset.
///
/// Returns `-inf` as soon as one record has zero likelihood.
pub fn loglik(d: &Dataset, p: &ParamVector) -> f64 {
    loglik_with(d, p, &LoglikOptions::default())
}

pub fn loglik_with(d: &Dataset, p: &ParamVector, opts: &LoglikOptions) -> f64 {
    loglik_records(&d.records, p, opts.floor.ln())
}

pub(crate) fn loglik_records(records: &[LifetimeRecord], p: &ParamVector, floor_log: f64) -> f64 {
    // Neumaier summation keeps finite-difference derivatives of the total accurate
    let mut total = 0.0;
    let mut comp = 0.0;
    for r in records {
        let l = record_loglik(p, r, floor_log);
        if l == f64::NEG_INFINITY || l.is_nan() {
            return f64::NEG_INFINITY;
        }
        let x = r.weight * l;
        let t = total + x;
        if total.abs() >= x.abs() {
            comp += (total - t) + x;
        } else {
            comp += (x - t) + total;
        }
        total = t;
    }
    total + comp
}

/// `-2 × loglik`.
pub fn deviance(d: &Dataset, p: &ParamVector) -> f64 {
    deviance_from_loglik(loglik(d, p))
}

pub fn deviance_from_loglik(ll: f64) -> f64 {
    -2.0 * ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::Family;
    use approx::assert_relative_eq;

    fn exp1() -> ParamVector {
        ParamVector::new(Family::Exp, vec![1.0]).unwrap()
    }

    #[test]
    fn observed_exponential() {
        let d = Dataset::new(vec![LifetimeRecord::observed(1.0)]).unwrap();
        assert_relative_eq!(loglik(&d, &exp1()), -1.0, max_relative = 1e-15);
    }

    #[test]
    fn interval_censored_right_truncated() {
        let r = LifetimeRecord::interval(0.0, 1.0).with_truncation(0.0, 2.0);
        let d = Dataset::new(vec![r]).unwrap();
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let expected = ((1.0 - e1) / (1.0 - e2)).ln();
        assert_relative_eq!(loglik(&d, &exp1()), expected, max_relative = 1e-14);
    }

    #[test]
    fn deviance_values() {
        assert_eq!(deviance_from_loglik(0.0), 0.0);
        assert_eq!(deviance_from_loglik(-1.0), 2.0);
        assert_eq!(format!("{:.2}", deviance_from_loglik(-3599.037)), "7198.07");
    }

    #[test]
    fn weight_splitting_and_order() {
        let recs = vec![
            LifetimeRecord::observed(0.4).with_weight(3.0),
            LifetimeRecord::interval(1.0, 2.0).with_truncation(0.5, 4.0),
            LifetimeRecord::right_censored(2.5),
        ];
        let p = ParamVector::new(Family::Gp, vec![1.2, 0.1]).unwrap();
        let base = loglik(&Dataset::new(recs.clone()).unwrap(), &p);
        let mut split = Vec::new();
        for r in recs.iter().rev() {
            split.push(r.clone().with_weight(r.weight / 2.0));
            split.push(r.clone().with_weight(r.weight / 2.0));
        }
        assert_relative_eq!(loglik(&Dataset::new(split).unwrap(), &p), base, max_relative = 1e-12);
    }

    #[test]
    fn trivial_truncation_is_untruncated() {
        let p = ParamVector::new(Family::Weibull, vec![1.5, 0.8]).unwrap();
        let a = Dataset::new(vec![LifetimeRecord::interval(0.3, 0.9)]).unwrap();
        let b = Dataset::new(vec![LifetimeRecord::interval(0.3, 0.9).with_truncation(0.0, f64::INFINITY)])
            .unwrap();
        assert_eq!(loglik(&a, &p), loglik(&b, &p));
    }

    #[test]
    fn beyond_endpoint_is_impossible() {
        let p = ParamVector::new(Family::Gp, vec![1.0, -0.5]).unwrap();
        let d = Dataset::new(vec![LifetimeRecord::observed(2.5)]).unwrap();
        assert_eq!(loglik(&d, &p), f64::NEG_INFINITY);
        let d = Dataset::new(vec![LifetimeRecord::interval(2.1, 3.0)]).unwrap();
        assert_eq!(loglik(&d, &p), f64::NEG_INFINITY);
    }

    #[test]
    fn double_truncation_sums_windows() {
        let p = ParamVector::new(Family::Exp, vec![2.0]).unwrap();
        let r = LifetimeRecord::observed(3.0)
            .with_truncation(0.5, 1.0)
            .with_second_window(2.0, 4.0);
        let d = Dataset::new(vec![r]).unwrap();
        let f = |t: f64| 1.0 - (-t / 2.0).exp();
        let mass = f(1.0) - f(0.5) + f(4.0) - f(2.0);
        let expected = (0.5 * (-1.5f64).exp()).ln() - mass.ln();
        assert_relative_eq!(loglik(&d, &p), expected, max_relative = 1e-13);
    }
}
