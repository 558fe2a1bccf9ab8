use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, ExceedanceConfig};
use crate::error::{Error, Result};
use crate::families::{gppiece_params, Family, ParamVector};
use crate::fit::{exceedances, fit_exceedances, hessian_step, FitOptions, FitResult};
use crate::likelihood::loglik;
use crate::math::{chisq_quantile, chisq_sf};
use crate::optim::fd_hessian;

use super::{bisect, maximize_1d, support_floor};

/// Smallest exceedance weight accepted by the threshold diagnostics.
pub const MIN_EXCEEDANCE_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdEntry {
    pub thresh: f64,
    pub n_exceedances: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    /// Profile likelihood interval for the shape; `None` bounds run into `ξ = −1` or beyond the search range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ThresholdEntry {
    fn new(thresh: f64) -> Self {
        ThresholdEntry {
            thresh,
            n_exceedances: 0.0,
            scale: None,
            shape: None,
            lower: None,
            upper: None,
            statistic: None,
            df: None,
            pvalue: None,
            error: None,
        }
    }

    fn failed(thresh: f64, n: f64, e: &Error) -> Self {
        ThresholdEntry {
            n_exceedances: n,
            error: Some(e.to_string()),
            ..ThresholdEntry::new(thresh)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdDiag {
    pub thresholds: Vec<f64>,
    pub level: f64,
    pub entries: Vec<ThresholdEntry>,
}

fn check_increasing(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("no thresholds given".into()));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("thresholds must be strictly increasing".into()));
    }
    Ok(())
}

fn exceedances_checked(d: &Dataset, u: f64) -> Result<Dataset> {
    let dx = exceedances(d, &ExceedanceConfig::new(u))?;
    if dx.total_weight() < MIN_EXCEEDANCE_WEIGHT {
        return Err(Error::InvalidArgument(format!(
            "only {} exceedances above {u}; at least {MIN_EXCEEDANCE_WEIGHT} are needed",
            dx.total_weight()
        )));
    }
    Ok(dx)
}

/// Profile log likelihood of the generalized Pareto shape, maximized over the scale.
fn gp_profile_shape(dx: &Dataset, xi: f64, scale_hint: f64, tmax: f64) -> f64 {
    let floor = if xi < 0.0 { -xi * tmax } else { 0.0 };
    let lo = (floor * (1.0 + 1e-9)).max(scale_hint * 1e-3).max(1e-300);
    let hi = scale_hint.max(lo) * 1e3;
    let f = |ls: f64| match ParamVector::new(Family::Gp, vec![ls.exp(), xi]) {
        Ok(p) => loglik(dx, &p),
        Err(_) => f64::NEG_INFINITY,
    };
    maximize_1d(f, lo.ln(), hi.ln(), 41).1
}

/// Profile likelihood interval for the shape of a generalized Pareto fit on the exceedances `dx`.
pub fn profile_shape_ci(fr: &FitResult, dx: &Dataset, level: f64) -> Result<(Option<f64>, Option<f64>)> {
    if fr.family != Family::Gp {
        return Err(Error::InvalidArgument("shape profiles need a gp fit".into()));
    }
    let (sigma, xi_hat) = (fr.estimates.values()[0], fr.estimates.values()[1]);
    let tmax = support_floor(dx);
    let cut = fr.loglik - 0.5 * chisq_quantile(level, 1);
    let g = |xi: f64| gp_profile_shape(dx, xi, sigma, tmax) - cut;
    let step = fr.se[1].unwrap_or(0.05).clamp(1e-3, 0.5);
    let lower_limit = -1.0 + 1e-9;

    let mut lower = None;
    let mut inner = xi_hat;
    let mut k = 1.0;
    loop {
        let x = (xi_hat - step * k).max(lower_limit);
        if g(x) < 0.0 {
            lower = Some(bisect(g, inner, x, 1e-7));
            break;
        }
        if x == lower_limit {
            break;
        }
        inner = x;
        k *= 2.0;
    }

    let mut upper = None;
    let mut inner = xi_hat;
    let mut k = 1.0;
    while step * k <= 20.0 {
        let x = xi_hat + step * k;
        if g(x) < 0.0 {
            upper = Some(bisect(g, inner, x, 1e-7));
            break;
        }
        inner = x;
        k *= 2.0;
    }
    Ok((lower, upper))
}

/// Shape estimates with profile likelihood intervals over a range of thresholds.
///
/// A threshold whose fit fails is reported with its error instead of aborting the run.
pub fn tstab(d: &Dataset, thresholds: &[f64], level: f64, opts: &FitOptions) -> Result<ThresholdDiag> {
    check_increasing(thresholds)?;
    let entries = thresholds
        .par_iter()
        .map(|&u| {
            let dx = match exceedances_checked(d, u) {
                Ok(x) => x,
                Err(e) => return ThresholdEntry::failed(u, 0.0, &e),
            };
            let n = dx.total_weight();
            let fr = match fit_exceedances(&dx, Family::Gp, u, opts) {
                Ok(f) => f,
                Err(e) => return ThresholdEntry::failed(u, n, &e),
            };
            let (lower, upper) = profile_shape_ci(&fr, &dx, level).unwrap_or((None, None));
            ThresholdEntry {
                n_exceedances: n,
                scale: Some(fr.estimates.values()[0]),
                shape: Some(fr.estimates.values()[1]),
                lower,
                upper,
                ..ThresholdEntry::new(u)
            }
        })
        .collect();
    Ok(ThresholdDiag {
        thresholds: thresholds.to_vec(),
        level,
        entries,
    })
}

/// Score statistic `gᵀ I⁻¹ g` of the piecewise model at the constant-shape fit.
fn score_statistic(dx: &Dataset, null: &FitResult, pieces: &[f64]) -> Result<f64> {
    let (sigma, xi) = (null.estimates.values()[0], null.estimates.values()[1]);
    let m = pieces.len();
    let f = |x: &[f64]| match gppiece_params(x[0], &x[1..], pieces) {
        Ok(p) => loglik(dx, &p),
        Err(_) => f64::NAN,
    };
    let x0: Vec<f64> = std::iter::once(sigma).chain(std::iter::repeat(xi).take(m)).collect();
    let mut grad = vec![0.0; m + 1];
    let mut xp = x0.clone();
    for i in 0..=m {
        let h = if i == 0 { 1e-5 * sigma } else { 1e-5 * xi.abs().max(1.0) };
        xp[i] = x0[i] + h;
        let fp = f(&xp);
        xp[i] = x0[i] - h;
        let fm = f(&xp);
        xp[i] = x0[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::SingularInformation);
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    let h: Vec<f64> = (0..=m)
        .map(|i| if i == 0 { hessian_step(sigma, 0.0) } else { hessian_step(xi, f64::NEG_INFINITY) })
        .collect();
    let hess = fd_hessian(&f, &x0, &h).ok_or(Error::SingularInformation)?;
    let info = nalgebra::DMatrix::from_fn(m + 1, m + 1, |i, j| -hess[i][j]);
    let chol = info.cholesky().ok_or(Error::SingularInformation)?;
    let g = nalgebra::DVector::from_vec(grad);
    let s = g.dot(&chol.solve(&g));
    if !s.is_finite() {
        return Err(Error::SingularInformation);
    }
    Ok(s.max(0.0))
}

/// Score tests of `H_k: ξ_k = … = ξ_K` for the piecewise generalized Pareto.
///
/// Only the constant-shape model above each `u_k` is fitted; the score and
/// observed information of the piecewise model are taken by finite differences
/// at that point.
pub fn nc_score_test(d: &Dataset, thresholds: &[f64], opts: &FitOptions) -> Result<ThresholdDiag> {
    check_increasing(thresholds)?;
    if thresholds.len() < 2 {
        return Err(Error::InvalidArgument("the score test needs at least two thresholds".into()));
    }
    let k_max = thresholds.len() - 1;
    let entries = (0..k_max)
        .into_par_iter()
        .map(|k| {
            let u = thresholds[k];
            let dx = match exceedances_checked(d, u) {
                Ok(x) => x,
                Err(e) => return ThresholdEntry::failed(u, 0.0, &e),
            };
            let n = dx.total_weight();
            let null = match fit_exceedances(&dx, Family::Gp, u, &FitOptions { compute_se: false, ..opts.clone() }) {
                Ok(f) => f,
                Err(e) => return ThresholdEntry::failed(u, n, &e),
            };
            let pieces: Vec<f64> = thresholds[k..].iter().map(|v| v - u).collect();
            let df = pieces.len() - 1;
            let mut entry = ThresholdEntry {
                n_exceedances: n,
                scale: Some(null.estimates.values()[0]),
                shape: Some(null.estimates.values()[1]),
                df: Some(df),
                ..ThresholdEntry::new(u)
            };
            match score_statistic(&dx, &null, &pieces) {
                Ok(s) => {
                    entry.statistic = Some(s);
                    entry.pvalue = Some(chisq_sf(s, df));
                }
                Err(e) => entry.error = Some(e.to_string()),
            }
            entry
        })
        .collect();
    Ok(ThresholdDiag {
        thresholds: thresholds.to_vec(),
        level: f64::NAN,
        entries,
    })
}
