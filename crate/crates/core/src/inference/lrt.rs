use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{Dataset, ExceedanceConfig};
use crate::error::{Error, Result};
use crate::families::Family;
use crate::fit::{exceedances, fit_exceedances, FitOptions, FitResult};
use crate::math::chisq_sf;
use crate::nesting::{describe_mixture, lookup, NestingEdge};
use crate::sampling::BootstrapResult;

/// Tolerance on the log likelihood ordering of nested fits.
const ORDER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Asymptotic,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedTestResult {
    pub null: String,
    pub alt: String,
    /// Deviance of the null fit minus deviance of the alternative.
    pub statistic: f64,
    /// Weights of the `χ²_0, χ²_1, …` components of the null distribution.
    pub weights: Vec<f64>,
    pub mixture: String,
    pub pvalue: f64,
    pub method: TestMethod,
    pub loglik_null: f64,
    pub loglik_alt: f64,
}

impl NestedTestResult {
    pub fn from_bootstrap(b: &BootstrapResult, loglik_null: f64, loglik_alt: f64) -> Self {
        NestedTestResult {
            null: b.null.to_string(),
            alt: b.alt.to_string(),
            statistic: b.statistic,
            weights: Vec::new(),
            mixture: format!("parametric bootstrap, {} replicates", b.b - b.failures),
            pvalue: b.pvalue,
            method: TestMethod::Bootstrap,
            loglik_null,
            loglik_alt,
        }
    }
}

fn chisq_weights(df: usize) -> Vec<f64> {
    let mut w = vec![0.0; df + 1];
    w[df] = 1.0;
    w
}

/// Clamp the statistic of correctly ordered fits at zero.
fn statistic(ll0: f64, ll1: f64) -> f64 {
    (2.0 * (ll1 - ll0)).max(0.0)
}

/// Likelihood ratio test of two nested fits, in either order.
///
/// The registered edge decides which fit is the submodel and provides the
/// chi-bar-square null distribution.
pub fn lrt_nested(a: &FitResult, b: &FitResult) -> Result<NestedTestResult> {
    if a.family == b.family {
        return Err(Error::NotNested(a.family.to_string(), b.family.to_string()));
    }
    if a.thresh != b.thresh || (a.n_exceedances - b.n_exceedances).abs() > 1e-9 * a.n_exceedances.max(1.0) {
        return Err(Error::InvalidArgument(
            "fits must use the same data and threshold".into(),
        ));
    }
    let (f0, f1, edge) = order(a, b)?;
    if f1.loglik < f0.loglik - ORDER_TOL {
        return Err(Error::OptimizationOrder {
            sub: f0.family.to_string(),
            sup: f1.family.to_string(),
            ll_sub: f0.loglik,
            ll_sup: f1.loglik,
        });
    }
    let stat = statistic(f0.loglik, f1.loglik);
    Ok(NestedTestResult {
        null: f0.family.to_string(),
        alt: f1.family.to_string(),
        statistic: stat,
        pvalue: edge.pvalue(stat),
        mixture: edge.describe(),
        weights: edge.weights,
        method: TestMethod::Asymptotic,
        loglik_null: f0.loglik,
        loglik_alt: f1.loglik,
    })
}

fn order<'a>(a: &'a FitResult, b: &'a FitResult) -> Result<(&'a FitResult, &'a FitResult, NestingEdge)> {
    match lookup(a.family, b.family) {
        Ok(e) => Ok((a, b, e)),
        Err(Error::NotNested(..)) => lookup(b.family, a.family).map(|e| (b, a, e)).map_err(|e| match e {
            Error::NotNested(..) => Error::NotNested(a.family.to_string(), b.family.to_string()),
            other => other,
        }),
        Err(e) => Err(e),
    }
}

/// Fit both families above `cfg.thresh` and compare them.
pub fn anova(d: &Dataset, null: Family, alt: Family, cfg: &ExceedanceConfig, opts: &FitOptions) -> Result<NestedTestResult> {
    if null == alt {
        return Err(Error::NotNested(null.to_string(), alt.to_string()));
    }
    // reject forbidden or unrelated pairs before fitting
    if let Err(e) = lookup(null, alt) {
        match e {
            Error::NotNested(..) => {
                lookup(alt, null)?;
            }
            other => return Err(other),
        }
    }
    let dx = exceedances(d, cfg)?;
    let f0 = fit_exceedances(&dx, null, cfg.thresh, opts)?;
    let f1 = fit_exceedances(&dx, alt, cfg.thresh, opts)?;
    lrt_nested(&f0, &f1)
}

/// Test whether all strata share the parameters of `family`.
///
/// Strata come from the record labels of `d`. The statistic is twice the gain in
/// log likelihood from fitting each stratum separately, referred to a `χ²` with
/// `(K − 1) × p` degrees of freedom.
pub fn test_strata(d: &Dataset, family: Family, cfg: &ExceedanceConfig, opts: &FitOptions) -> Result<NestedTestResult> {
    let mut groups: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for r in &d.records {
        let label = r
            .stratum
            .clone()
            .ok_or_else(|| Error::InvalidArgument("every record needs a stratum label".into()))?;
        groups.entry(label).or_default().push(r.clone());
    }
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "at least two strata are required, found {}",
            groups.len()
        )));
    }
    let dx = exceedances(d, cfg)?;
    let pooled = fit_exceedances(&dx, family, cfg.thresh, opts)?;
    let mut sopts = opts.clone();
    sopts.starts.push(pooled.estimates.values().to_vec());
    let mut ll_sep = 0.0;
    for (label, recs) in &groups {
        let mut sd = Dataset::new(recs.clone()).map_err(|_| Error::EmptyStratum(label.clone()))?;
        sd.offset = d.offset;
        let sx = match exceedances(&sd, cfg) {
            Ok(x) if x.total_weight() > 0.0 => x,
            Ok(_) | Err(Error::NoExceedances(_)) | Err(Error::Threshold(_)) => {
                return Err(Error::EmptyStratum(label.clone()))
            }
            Err(e) => return Err(e),
        };
        let f = fit_exceedances(&sx, family, cfg.thresh, &sopts)?;
        ll_sep += f.loglik;
    }
    if ll_sep < pooled.loglik - ORDER_TOL {
        return Err(Error::OptimizationOrder {
            sub: format!("{family} (common)"),
            sup: format!("{family} (by stratum)"),
            ll_sub: pooled.loglik,
            ll_sup: ll_sep,
        });
    }
    let df = (groups.len() - 1) * pooled.n_params();
    let stat = statistic(pooled.loglik, ll_sep);
    let weights = chisq_weights(df);
    Ok(NestedTestResult {
        null: format!("{family} (common)"),
        alt: format!(
            "{family} (by stratum: {})",
            groups.keys().cloned().collect::<Vec<_>>().join(", ")
        ),
        statistic: stat,
        pvalue: chisq_sf(stat, df),
        mixture: describe_mixture(&weights),
        weights,
        method: TestMethod::Asymptotic,
        loglik_null: pooled.loglik,
        loglik_alt: ll_sep,
    })
}
