use std::cell::RefCell;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::families::ParamVector;
use crate::fit::{local_search, transform_for, FitResult, Transform};
use crate::likelihood::loglik;
use crate::math::{chisq_quantile, normal_quantile};

use super::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Wald,
    Profile,
}

impl std::str::FromStr for CiMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wald" => Ok(CiMethod::Wald),
            "profile" => Ok(CiMethod::Profile),
            _ => Err(Error::InvalidArgument(format!("unknown interval method '{s}'"))),
        }
    }
}

/// Pointwise hazard estimate with confidence limits; times are on the exceedance scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardBand {
    pub time: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pointwise confidence intervals for the hazard of a fitted model.
///
/// `dx` must be the exceedance data the model was fitted to (only used by the
/// profile method). Wald intervals use the delta method on the log hazard.
pub fn hazard_ci(fr: &FitResult, dx: &Dataset, times: &[f64], method: CiMethod, level: f64) -> Result<Vec<HazardBand>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    times
        .iter()
        .map(|&t| {
            let h = fr.estimates.hazard(t)?;
            let (lower, upper) = match method {
                CiMethod::Wald => wald(fr, t, h, level)?,
                CiMethod::Profile => profile(fr, dx, t, h, level)?,
            };
            Ok(HazardBand { time: t, estimate: h, lower, upper })
        })
        .collect()
}

/// Gradient of `log h(t)` over the interior parameters (zero for boundary ones).
fn log_hazard_gradient(fr: &FitResult, t: f64) -> Result<Vec<f64>> {
    let theta = fr.estimates.values();
    let specs = fr.family.specs(fr.estimates.thresholds().len());
    let mut g = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        if fr.boundary[i] {
            continue;
        }
        let mut step = 1e-5 * theta[i].abs().max(1e-3);
        if specs[i].lower.is_finite() {
            step = step.min(0.5 * (theta[i] - specs[i].lower));
        }
        let eval = |x: f64| {
            let mut v = theta.to_vec();
            v[i] = x;
            fr.estimates.with_values(v).map(|p| p.hazard_at(t).ln())
        };
        let (fp, fm) = (eval(theta[i] + step)?, eval(theta[i] - step)?);
        g[i] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}

fn wald(fr: &FitResult, t: f64, h: f64, level: f64) -> Result<(f64, f64)> {
    let v = fr.vcov.as_ref().ok_or(Error::SingularInformation)?;
    let g = log_hazard_gradient(fr, t)?;
    let var: f64 = (0..g.len())
        .flat_map(|i| (0..g.len()).map(move |j| (i, j)))
        .map(|(i, j)| g[i] * v[i][j] * g[j])
        .sum();
    if !(var >= 0.0) || !var.is_finite() {
        return Err(Error::SingularInformation);
    }
    let z = normal_quantile(0.5 + 0.5 * level);
    let se = var.sqrt();
    Ok((h * (-z * se).exp(), h * (z * se).exp()))
}

/// Profile log likelihood of the hazard at `t` under the constraint `h(t) = h0`.
///
/// One parameter is solved from the constraint (the Makeham constant in closed
/// form, otherwise the first parameter by scanning and bisection on the log scale)
/// and the log likelihood is maximized over the others.
struct HazardProfile<'a> {
    fr: &'a FitResult,
    dx: &'a Dataset,
    t: f64,
    solved: usize,
    nuisance: Vec<usize>,
    transforms: Vec<Transform>,
    warm: RefCell<Vec<f64>>,
}

impl<'a> HazardProfile<'a> {
    fn new(fr: &'a FitResult, dx: &'a Dataset, t: f64) -> Self {
        let k = fr.estimates.thresholds().len();
        let specs = fr.family.specs(k);
        let n = specs.len();
        let solved = if fr.family.is_makeham() && !fr.boundary[n - 1] { n - 1 } else { 0 };
        let nuisance: Vec<usize> = (0..n).filter(|&i| i != solved && !fr.boundary[i]).collect();
        let transforms: Vec<Transform> = specs.iter().map(|s| transform_for(fr.family, s)).collect();
        let warm = nuisance
            .iter()
            .map(|&i| transforms[i].to_free(fr.estimates.values()[i]))
            .collect();
        HazardProfile { fr, dx, t, solved, nuisance, transforms, warm: RefCell::new(warm) }
    }

    fn reset(&self) {
        let v = self.fr.estimates.values();
        *self.warm.borrow_mut() = self.nuisance.iter().map(|&i| self.transforms[i].to_free(v[i])).collect();
    }

    fn base(&self, eta: &[f64]) -> Vec<f64> {
        let mut v = self.fr.estimates.values().to_vec();
        for (k, &i) in self.nuisance.iter().enumerate() {
            v[i] = self.transforms[i].to_natural(eta[k]);
        }
        v
    }

    /// Best log likelihood over the values of the solved parameter meeting the constraint.
    fn constrained(&self, eta: &[f64], h0: f64) -> f64 {
        let mut v = self.base(eta);
        let j = self.solved;
        let hz = |x: f64, v: &mut Vec<f64>| -> Option<ParamVector> {
            v[j] = x;
            self.fr.estimates.with_values(v.clone()).ok()
        };
        if self.fr.family.is_makeham() && j == v.len() - 1 {
            let Some(p) = hz(0.0, &mut v) else { return f64::NEG_INFINITY };
            let lambda = h0 - p.hazard_at(self.t);
            return match hz(lambda, &mut v) {
                Some(p) if lambda >= 0.0 => loglik(self.dx, &p),
                _ => f64::NEG_INFINITY,
            };
        }
        let centre = self.fr.estimates.values()[j].max(1e-8).ln();
        let diff = |lx: f64, v: &mut Vec<f64>| match hz(lx.exp(), v) {
            Some(p) => p.hazard_at(self.t).ln() - h0.ln(),
            None => f64::NAN,
        };
        let n = 49;
        let grid: Vec<f64> = (0..n).map(|i| centre - 12.0 + 24.0 * i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| diff(x, &mut v)).collect();
        let mut best = f64::NEG_INFINITY;
        for i in 0..n - 1 {
            let (a, b) = (vals[i], vals[i + 1]);
            if !a.is_finite() || !b.is_finite() || (a > 0.0) == (b > 0.0) {
                continue;
            }
            let mut w = v.clone();
            let root = bisect(|x| diff(x, &mut v.clone()), grid[i], grid[i + 1], 1e-12);
            if let Some(p) = hz(root.exp(), &mut w) {
                best = best.max(loglik(self.dx, &p));
            }
        }
        best
    }

    fn value(&self, h0: f64) -> f64 {
        if self.nuisance.is_empty() {
            return self.constrained(&[], h0);
        }
        let obj = |eta: &[f64]| {
            let l = self.constrained(eta, h0);
            if l.is_finite() {
                -l
            } else {
                f64::INFINITY
            }
        };
        let start = self.warm.borrow().clone();
        let mut m = local_search(&obj, &start);
        let from_mle: Vec<f64> = self
            .nuisance
            .iter()
            .map(|&i| self.transforms[i].to_free(self.fr.estimates.values()[i]))
            .collect();
        if from_mle != start {
            let m2 = local_search(&obj, &from_mle);
            if m2.f < m.f {
                m = m2;
            }
        }
        if m.f.is_finite() {
            *self.warm.borrow_mut() = m.x.clone();
        }
        -m.f
    }
}

fn profile(fr: &FitResult, dx: &Dataset, t: f64, h: f64, level: f64) -> Result<(f64, f64)> {
    let prof = HazardProfile::new(fr, dx, t);
    let cut = fr.loglik - 0.5 * chisq_quantile(level, 1);
    let step = match wald(fr, t, h, level) {
        Ok((lo, hi)) => (0.5 * (hi / lo).ln() / 2.0).clamp(1e-3, 1.0),
        Err(_) => 0.1,
    };
    let g = |lh: f64| prof.value(lh.exp()) - cut;
    let lh = h.ln();
    let mut bounds = [0.0; 2];
    for (side, dir) in [(0, -1.0), (1, 1.0)] {
        prof.reset();
        let mut inner = lh;
        let mut k = 1.0;
        let mut found = None;
        for _ in 0..40 {
            let x = lh + dir * step * k;
            if g(x) < 0.0 {
                found = Some(bisect(g, inner, x, 1e-8));
                break;
            }
            inner = x;
            k *= 2.0;
        }
        bounds[side] = match found {
            Some(x) => x.exp(),
            None => {
                if dir < 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        };
    }
    Ok((bounds[0], bounds[1]))
}
