//! Plotting positions for probability, quantile and related diagnostic plots
//! that account for truncation and censoring.
//!
//! For an exact failure `y_i` observed in the truncation set `T_i`, the model
//! position is `F_i = P(X ≤ y_i, X ∈ T_i) / P(X ∈ T_i)` and the empirical one is
//! the same ratio under the nonparametric estimate `F_n`, scaled by `n/(n+1)`
//! to keep it below one. Censored records enter through `F_n` only.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Event, ExceedanceConfig, LifetimeRecord};
use crate::error::{Error, Result};
use crate::families::ParamVector;
use crate::fit::{exceedances, FitResult};
use crate::likelihood::log_interval_prob;
use crate::math::{beta_quantile, logaddexp};
use crate::npmle::{npmle, StepCDF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Pp,
    Qq,
    Tmd,
    Exp,
    Erp,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pp" => Ok(PlotKind::Pp),
            "qq" => Ok(PlotKind::Qq),
            "tmd" => Ok(PlotKind::Tmd),
            "exp" => Ok(PlotKind::Exp),
            "erp" => Ok(PlotKind::Erp),
            _ => Err(Error::InvalidArgument(format!("unknown plot kind '{s}'"))),
        }
    }
}

/// Reference line drawn with the points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Diagonal,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    pub kind: PlotKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Pointwise band for `y` at each `x`; empty when no band is drawn.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub xlab: String,
    pub ylab: String,
    pub reference: Reference,
}

impl PlotData {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn has_band(&self) -> bool {
        !self.lower.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.has_band() {
            writeln!(w, "x,y,lower,upper")?;
            for i in 0..self.len() {
                writeln!(w, "{},{},{},{}", self.x[i], self.y[i], self.lower[i], self.upper[i])?;
            }
        } else {
            writeln!(w, "x,y")?;
            for i in 0..self.len() {
                writeln!(w, "{},{}", self.x[i], self.y[i])?;
            }
        }
        Ok(())
    }
}

/// Truncation windows of a record.
fn windows(r: &LifetimeRecord) -> Vec<(f64, f64)> {
    let mut w = vec![(r.ltrunc1.max(0.0), r.rtrunc1)];
    if let Some(w2) = r.window2 {
        w.push(w2);
    }
    w
}

/// `P(X ≤ y, X ∈ T) / P(X ∈ T)` under the model.
fn model_position(p: &ParamVector, r: &LifetimeRecord, y: f64) -> f64 {
    let mut num = f64::NEG_INFINITY;
    let mut den = f64::NEG_INFINITY;
    for (a, b) in windows(r) {
        num = logaddexp(num, log_interval_prob(p, a, y.min(b)));
        den = logaddexp(den, log_interval_prob(p, a, b));
    }
    (num - den).exp().clamp(0.0, 1.0)
}

/// The same ratio under the nonparametric estimate.
fn empirical_position(f: &StepCDF, r: &LifetimeRecord, y: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in windows(r) {
        let fa = f.eval(a);
        num += (f.eval(y.min(b)) - fa).max(0.0);
        den += (f.eval(b) - fa).max(0.0);
    }
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        f64::NAN
    }
}

fn untruncated(r: &LifetimeRecord) -> bool {
    r.ltrunc1 <= 0.0 && r.rtrunc1 == f64::INFINITY && r.window2.is_none()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Positions on the probability scale shared by every plot kind.
struct Positions {
    /// Empirical positions `F̃_i`, sorted.
    emp: Vec<f64>,
    /// Model positions `F_i`, sorted.
    model: Vec<f64>,
    /// Rescaled exceedances `F⁻¹(F_i)`, sorted (the observation itself when untruncated).
    rescaled: Vec<f64>,
    npmle: StepCDF,
}

fn positions(fr: &FitResult, dx: &Dataset) -> Result<Positions> {
    let obs: Vec<&LifetimeRecord> = dx.records.iter().filter(|r| r.event == Event::Observed).collect();
    if obs.is_empty() {
        return Err(Error::NoObservedFailures);
    }
    let f = npmle(dx)?;
    let p = &fr.estimates;
    let n = obs.len() as f64;
    let scale = n / (n + 1.0);
    let mut emp = Vec::with_capacity(obs.len());
    let mut model = Vec::with_capacity(obs.len());
    let mut rescaled = Vec::with_capacity(obs.len());
    for r in obs {
        let y = r.time1;
        let e = empirical_position(&f, r, y);
        if !e.is_finite() {
            continue;
        }
        let m = if untruncated(r) { p.cdf(y)? } else { model_position(p, r, y) };
        emp.push(scale * e);
        model.push(m);
        rescaled.push(if untruncated(r) { y } else { p.quantile(m)? });
    }
    if emp.is_empty() {
        return Err(Error::NoObservedFailures);
    }
    Ok(Positions {
        emp: sorted(emp),
        model: sorted(model),
        rescaled: sorted(rescaled),
        npmle: f,
    })
}

/// Pointwise `level` band of the `i`-th of `m` uniform order statistics.
fn beta_band(m: usize, level: f64) -> (Vec<f64>, Vec<f64>) {
    let alpha = 0.5 * (1.0 - level);
    (1..=m)
        .map(|i| {
            let (a, b) = (i as f64, (m + 1 - i) as f64);
            (beta_quantile(alpha, a, b), beta_quantile(1.0 - alpha, a, b))
        })
        .unzip()
}

/// Diagnostic plotting positions of a fit on data `d` (in original units or already exceedances).
pub fn plotting_positions(fr: &FitResult, d: &Dataset, kind: PlotKind) -> Result<PlotData> {
    plotting_positions_level(fr, d, kind, 0.95)
}

pub fn plotting_positions_level(fr: &FitResult, d: &Dataset, kind: PlotKind, level: f64) -> Result<PlotData> {
    let dx = exceedances(d, &ExceedanceConfig::new(fr.thresh))?;
    let pos = positions(fr, &dx)?;
    let p = &fr.estimates;
    let m = pos.emp.len();
    let (blo, bhi) = beta_band(m, level);
    let quant = |v: &[f64]| -> Result<Vec<f64>> { v.iter().map(|&u| p.quantile(u)).collect() };
    let exp_scale = |v: &[f64]| -> Vec<f64> { v.iter().map(|&u| -(-u).ln_1p()).collect() };

    let pd = match kind {
        PlotKind::Pp => PlotData {
            kind,
            x: pos.emp.clone(),
            y: pos.model.clone(),
            lower: blo,
            upper: bhi,
            xlab: "empirical probability".into(),
            ylab: "model probability".into(),
            reference: Reference::Diagonal,
        },
        PlotKind::Qq => PlotData {
            kind,
            x: quant(&pos.emp)?,
            y: pos.rescaled.clone(),
            lower: quant(&blo)?,
            upper: quant(&bhi)?,
            xlab: "theoretical quantiles".into(),
            ylab: "rescaled exceedances".into(),
            reference: Reference::Diagonal,
        },
        PlotKind::Tmd => {
            let qx = quant(&pos.emp)?;
            let x: Vec<f64> = qx.iter().zip(&pos.rescaled).map(|(a, b)| 0.5 * (a + b)).collect();
            let y: Vec<f64> = qx.iter().zip(&pos.rescaled).map(|(a, b)| b - a).collect();
            let lower = quant(&blo)?.iter().zip(&qx).map(|(l, q)| l - q).collect();
            let upper = quant(&bhi)?.iter().zip(&qx).map(|(u, q)| u - q).collect();
            PlotData {
                kind,
                x,
                y,
                lower,
                upper,
                xlab: "mean of quantiles".into(),
                ylab: "difference of quantiles".into(),
                reference: Reference::Zero,
            }
        }
        PlotKind::Exp => PlotData {
            kind,
            x: exp_scale(&pos.emp),
            y: exp_scale(&pos.model),
            lower: exp_scale(&blo),
            upper: exp_scale(&bhi),
            xlab: "empirical cumulative hazard".into(),
            ylab: "model cumulative hazard".into(),
            reference: Reference::Diagonal,
        },
        PlotKind::Erp => {
            // Q-Q pairs with both axes mapped through the nonparametric estimate, which
            // spreads the points evenly over (0, 1) whatever the scale of the data
            let n = m as f64;
            let g = |v: &[f64]| -> Vec<f64> { v.iter().map(|&t| n / (n + 1.0) * pos.npmle.eval(t)).collect() };
            PlotData {
                kind,
                x: g(&quant(&pos.emp)?),
                y: g(&pos.rescaled),
                lower: g(&quant(&blo)?),
                upper: g(&quant(&bhi)?),
                xlab: "rescaled theoretical quantiles".into(),
                ylab: "rescaled exceedances".into(),
                reference: Reference::Diagonal,
            }
        }
    };
    Ok(pd)
}
