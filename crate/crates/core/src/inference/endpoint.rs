use serde::Serialize;

use crate::data::{Dataset, ExceedanceConfig};
use crate::error::{Error, Result};
use crate::families::{Family, ParamVector};
use crate::fit::{exceedances, fit_exceedances, FitOptions};
use crate::likelihood::loglik;
use crate::math::chisq_quantile;

use super::{bisect, maximize_1d, support_floor};

/// Profile log likelihood of the endpoint of a generalized Pareto fit.
///
/// `psi`, `psi_hat`, `lower` and `upper` are in original units (threshold added back).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCurve {
    pub thresh: f64,
    pub psi: Vec<f64>,
    /// Profile log likelihood at each grid point (`null` where the endpoint is below the data).
    pub loglik: Vec<f64>,
    /// `None` when the shape estimate is nonnegative and the endpoint is infinite.
    pub psi_hat: Option<f64>,
    pub loglik_hat: f64,
    pub scale_hat: f64,
    pub shape_hat: f64,
    pub level: f64,
    /// `None` when no finite endpoint reaches the cutoff (shape clearly positive).
    pub lower: Option<f64>,
    /// `None` when the interval is unbounded above.
    pub upper: Option<f64>,
    /// Bounds read off the monotone cubic interpolant of the grid values.
    pub lower_interp: Option<f64>,
    pub upper_interp: Option<f64>,
    /// The bound lies outside the grid and was found by extending the search.
    pub lower_extrapolated: bool,
    pub upper_extrapolated: bool,
}

/// Profile log likelihood of the endpoint `ψ` (on the exceedance scale).
///
/// With `ξ = −s` and `σ = sψ` the inner maximization runs over `s ∈ (0, 1)`.
pub fn profile_endpoint_loglik(dx: &Dataset, psi: f64) -> f64 {
    if !(psi > support_floor(dx)) || !psi.is_finite() {
        return f64::NEG_INFINITY;
    }
    let f = |z: f64| {
        let s = 1.0 / (1.0 + (-z).exp());
        if !(s > 0.0 && s < 1.0) {
            return f64::NEG_INFINITY;
        }
        match ParamVector::new(Family::Gp, vec![s * psi, -s]) {
            Ok(p) => loglik(dx, &p),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    maximize_1d(f, -16.0, 16.0, 65).1
}

/// Monotone piecewise cubic Hermite interpolant through `(x, y)` evaluated at `t`.
pub fn pchip_eval(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    assert!(n >= 2 && n == y.len());
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    let i = match x.iter().rposition(|&v| v <= t) {
        Some(i) if i < n - 1 => i,
        Some(_) => n - 2,
        None => 0,
    };
    let s = (t - x[i]) / h[i];
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * y[i] + h10 * h[i] * d[i] + h01 * y[i + 1] + h11 * h[i] * d[i + 1]
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Crossing of the interpolant with `level` between consecutive points `x[j]`, `x[j+1]`.
fn pchip_crossing(x: &[f64], y: &[f64], j: usize, level: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, v)| v.is_finite()).map(|(a, b)| (*a, *b)).collect();
    if !y[j].is_finite() || !y[j + 1].is_finite() || pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let g = |t: f64| pchip_eval(&xs, &ys, t) - level;
    Some(bisect(g, x[j], x[j + 1], 1e-10 * x[j].abs().max(1.0)))
}

/// Profile likelihood for the endpoint `−σ/ξ` of a generalized Pareto fit above `cfg.thresh`.
///
/// `psi_grid` is in original units; when empty, 101 points from `0.9ψ̂` to `3ψ̂`
/// (on the exceedance scale) are used. Interval bounds are first read off a
/// monotone cubic interpolant on each side of `ψ̂` and then refined on the profile itself.
pub fn profile_endpoint(d: &Dataset, cfg: &ExceedanceConfig, psi_grid: &[f64], level: f64) -> Result<ProfileCurve> {
    let dx = exceedances(d, cfg)?;
    let u = cfg.thresh;
    let fr = fit_exceedances(&dx, Family::Gp, u, &FitOptions::default())?;
    let (sigma, xi) = (fr.estimates.values()[0], fr.estimates.values()[1]);
    let tmax = support_floor(&dx);
    let psi_hat = (xi < 0.0).then(|| -sigma / xi);

    let grid: Vec<f64> = if psi_grid.is_empty() {
        let (a, b) = match psi_hat {
            Some(p) => (0.9 * p, 3.0 * p),
            None => (tmax * 1.05 + 1e-9, tmax * 5.0 + 1.0),
        };
        (0..101).map(|i| a + (b - a) * i as f64 / 100.0).collect()
    } else {
        if psi_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("psi grid must be strictly increasing".into()));
        }
        psi_grid.iter().map(|p| p - u).collect()
    };
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("psi grid needs at least two points".into()));
    }
    if let Some(p) = psi_hat {
        if p <= grid[0] {
            return Err(Error::GridTooNarrow("lower"));
        }
        if p >= grid[grid.len() - 1] {
            return Err(Error::GridTooNarrow("upper"));
        }
    }
    let values: Vec<f64> = grid.iter().map(|&p| profile_endpoint_loglik(&dx, p)).collect();

    let cut = fr.loglik - 0.5 * chisq_quantile(level, 1);
    let g = |p: f64| profile_endpoint_loglik(&dx, p) - cut;
    let centre = psi_hat.unwrap_or(f64::INFINITY);
    // points of the curve including the maximum, for the interpolant
    let mut xs: Vec<f64> = grid.clone();
    let mut ys: Vec<f64> = values.clone();
    if let Some(p) = psi_hat {
        let at = xs.iter().position(|&v| v > p).unwrap_or(xs.len());
        xs.insert(at, p);
        ys.insert(at, fr.loglik);
    }

    // lower bound: scan left from the maximum
    let left: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] <= centre).collect();
    let mut lower = None;
    let mut lower_interp = None;
    let mut lower_extrapolated = false;
    for w in left.windows(2).rev() {
        let (i, j) = (w[0], w[1]);
        if ys[i] < cut && ys[j] >= cut {
            let end = left[left.len() - 1] + 1;
            lower_interp = pchip_crossing(&xs[..end], &ys[..end], i, cut);
            lower = Some(bisect(g, xs[j], xs[i], 1e-10 * xs[j]));
            break;
        }
    }
    if lower.is_none() {
        let hi = left.last().map(|&i| xs[i]).unwrap_or(grid[0]);
        if g(hi) >= 0.0 {
            let lo = left.iter().map(|&i| xs[i]).find(|&x| g(x) >= 0.0).unwrap_or(hi);
            lower = Some(bisect(g, lo, tmax * (1.0 + 1e-12), 1e-10 * lo));
            lower_extrapolated = true;
        }
    }

    // upper bound: scan right from the maximum
    let right: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= centre).collect();
    let mut upper = None;
    let mut upper_interp = None;
    let mut upper_extrapolated = false;
    if psi_hat.is_some() {
        for w in right.windows(2) {
            let (i, j) = (w[0], w[1]);
            if ys[i] >= cut && ys[j] < cut {
                let start = right[0];
                upper_interp = pchip_crossing(&xs[start..], &ys[start..], i - start, cut);
                upper = Some(bisect(g, xs[i], xs[j], 1e-10 * xs[j]));
                break;
            }
        }
        if upper.is_none() {
            upper_extrapolated = true;
            let mut a = xs[xs.len() - 1];
            for _ in 0..40 {
                let b = 2.0 * a;
                if g(b) < 0.0 {
                    upper = Some(bisect(g, a, b, 1e-10 * b));
                    break;
                }
                a = b;
            }
        }
    }

    Ok(ProfileCurve {
        thresh: u,
        psi: grid.iter().map(|p| p + u).collect(),
        loglik: values,
        psi_hat: psi_hat.map(|p| p + u),
        loglik_hat: fr.loglik,
        scale_hat: sigma,
        shape_hat: xi,
        level,
        lower: lower.map(|p| p + u),
        upper: upper.map(|p| p + u),
        lower_interp: lower_interp.map(|p| p + u),
        upper_interp: upper_interp.map(|p| p + u),
        lower_extrapolated,
        upper_extrapolated,
    })
}
