//! Likelihood-based tests, threshold diagnostics, profile intervals and
//! goodness of fit built on the fitting routines.

mod chisq;
mod endpoint;
mod hazard;
mod lrt;
mod threshold;

pub use chisq::{chisq_gof, contingency_table, ChisqGofOptions, ChisqGofResult, ContingencyTable};
pub use endpoint::{pchip_eval, profile_endpoint, profile_endpoint_loglik, ProfileCurve};
pub use hazard::{hazard_ci, CiMethod, HazardBand};
pub use lrt::{anova, lrt_nested, test_strata, NestedTestResult, TestMethod};
pub use threshold::{nc_score_test, profile_shape_ci, tstab, ThresholdDiag, ThresholdEntry};

use crate::data::{Dataset, Event};
use crate::optim::brent_min;

/// Maximize `f` over `[lo, hi]`: coarse grid, then Brent between the neighbours of the best grid point.
pub(crate) fn maximize_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n_grid: usize) -> (f64, f64) {
    let n = n_grid.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    let mut best_i = 0;
    for i in 0..n {
        let x = lo + step * i as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return best;
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = lo + step * (best_i + 1).min(n - 1) as f64;
    let (x, fx) = brent_min(|x| -f(x), a, b, 1e-10, 200);
    if -fx >= best.1 {
        (x, -fx)
    } else {
        best
    }
}

/// Largest time that every fitted distribution must reach for the data to be possible.
pub(crate) fn support_floor(dx: &Dataset) -> f64 {
    dx.records
        .iter()
        .map(|r| match r.event {
            Event::Observed | Event::RightCensored | Event::Interval => r.time1,
            Event::LeftCensored => 0.0,
        })
        .fold(0.0, f64::max)
}

/// Bisection for a sign change of `g` on `[a, b]`; `g(a)` and `g(b)` have opposite signs
/// (infinite values allowed). Stops once the bracket is shorter than `tol`.
pub(crate) fn bisect<F: Fn(f64) -> f64>(g: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ga = g(a);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let gm = g(m);
        if (gm >= 0.0) == (ga >= 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
