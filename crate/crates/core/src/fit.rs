//! Constrained maximum likelihood with multiple starts and boundary candidates.
//!
//! Free parameters are optimized on an unconstrained scale: `log` for
//! positive parameters, `softplus` for parameters with a closed bound at zero,
//! and `ξ = −1 + e^η` for shapes (which restricts `ξ > −1`). Every subset of
//! parameters that may sit on a closed bound is also tried with those
//! parameters fixed at the bound, and the best candidate wins.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{to_exceedances, Dataset, Event, ExceedanceConfig};
use crate::error::{Error, Result};
use crate::families::{Family, ParamSpec, ParamVector};
use crate::likelihood::loglik;
use crate::nesting::{direct_subs, embed};
use crate::optim::{bfgs, fd_hessian, nelder_mead, newton_polish, BfgsOptions, Minimum};

/// Default seed of the jittered starting values.
pub const JITTER_SEED: u64 = 0x5EED_2024;
/// Makeham rates are kept at least this far from zero during the search.
pub const MAKEHAM_RATE_FLOOR: f64 = 1e-8;
/// Distance to a bound below which an estimate is reported as a boundary solution.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Extra starting values on the natural scale.
    pub starts: Vec<Vec<f64>>,
    pub n_jitter: usize,
    pub seed: u64,
    /// Use fits of nested submodels as starting values.
    pub nested_starts: bool,
    /// Piece thresholds for `gppiece`, measured from the fitting threshold.
    pub pieces: Vec<f64>,
    pub compute_se: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: Vec::new(),
            n_jitter: 5,
            seed: JITTER_SEED,
            nested_starts: true,
            pieces: Vec::new(),
            compute_se: true,
        }
    }
}

impl FitOptions {
    pub fn quick() -> Self {
        FitOptions {
            n_jitter: 0,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub family: Family,
    pub thresh: f64,
    pub estimates: ParamVector,
    pub se: Vec<Option<f64>>,
    /// Covariance of the interior parameters (zero rows for boundary ones).
    #[serde(skip)]
    pub vcov: Option<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub n_exceedances: f64,
    pub converged: bool,
    pub n_starts: usize,
    pub boundary: Vec<bool>,
}

impl FitResult {
    pub fn deviance(&self) -> f64 {
        -2.0 * self.loglik
    }

    pub fn n_params(&self) -> usize {
        self.estimates.values().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Transform {
    Log,
    Softplus(f64),
    Xi,
}

impl Transform {
    pub(crate) fn to_natural(self, eta: f64) -> f64 {
        match self {
            Transform::Log => eta.exp(),
            Transform::Softplus(shift) => shift + softplus(eta),
            Transform::Xi => -1.0 + eta.exp(),
        }
    }

    pub(crate) fn to_free(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.max(1e-300).ln(),
            Transform::Softplus(shift) => inv_softplus((x - shift).max(1e-300)),
            Transform::Xi => (x + 1.0).max(1e-300).ln(),
        }
    }

    /// Value a start is moved to when it is not strictly inside the domain.
    fn feasible(self, x: f64) -> f64 {
        match self {
            Transform::Log => if x > 0.0 { x } else { 1e-3 },
            Transform::Softplus(shift) => if x > shift + 1e-8 { x } else { shift + 1e-4 },
            Transform::Xi => if x > -0.95 { x } else { -0.9 },
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn inv_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub(crate) fn transform_for(family: Family, spec: &ParamSpec) -> Transform {
    if spec.lower == f64::NEG_INFINITY {
        Transform::Xi
    } else if family.is_makeham() && spec.name == "rate" {
        Transform::Softplus(MAKEHAM_RATE_FLOOR)
    } else if spec.closed || spec.limit {
        Transform::Softplus(0.0)
    } else {
        Transform::Log
    }
}

/// Whether the fitter considers a candidate with this parameter fixed at its bound.
fn has_boundary_candidate(family: Family, spec: &ParamSpec) -> bool {
    spec.has_boundary() && !(family.is_makeham() && spec.name == "rate")
}

/// Parametrization of one candidate: some coordinates fixed, the rest free.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub family: Family,
    pub pieces: Vec<f64>,
    pub fixed: Vec<Option<f64>>,
    pub transforms: Vec<Transform>,
}

impl Layout {
    pub(crate) fn new(family: Family, pieces: &[f64], fixed: Vec<Option<f64>>) -> Self {
        let specs = family.specs(pieces.len());
        let transforms = specs.iter().map(|s| transform_for(family, s)).collect();
        Layout {
            family,
            pieces: pieces.to_vec(),
            fixed,
            transforms,
        }
    }

    pub(crate) fn n_free(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }

    pub(crate) fn natural(&self, eta: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let mut k = 0;
        for (i, f) in self.fixed.iter().enumerate() {
            match f {
                Some(v) => out.push(*v),
                None => {
                    out.push(self.transforms[i].to_natural(eta[k]));
                    k += 1;
                }
            }
        }
    }

    pub(crate) fn free(&self, x: &[f64]) -> Vec<f64> {
        self.fixed
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_none())
            .map(|(i, _)| {
                let t = self.transforms[i];
                t.to_free(t.feasible(x[i]))
            })
            .collect()
    }

    pub(crate) fn params(&self, values: Vec<f64>) -> Result<ParamVector> {
        if self.family == Family::GpPiece {
            crate::families::gppiece_params(values[0], &values[1..], &self.pieces)
        } else {
            ParamVector::new(self.family, values)
        }
    }

    /// Negative log likelihood on the free scale.
    pub(crate) fn objective<'a>(&'a self, d: &'a Dataset) -> impl Fn(&[f64]) -> f64 + 'a {
        move |eta: &[f64]| {
            let mut v = Vec::with_capacity(self.fixed.len());
            self.natural(eta, &mut v);
            match self.params(v) {
                Ok(p) => {
                    let ll = loglik(d, &p);
                    if ll.is_finite() {
                        -ll
                    } else {
                        f64::INFINITY
                    }
                }
                Err(_) => f64::INFINITY,
            }
        }
    }
}

/// Local search from one start: BFGS, Nelder–Mead rescue, Newton polish.
pub(crate) fn local_search<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64]) -> Minimum {
    let opts = BfgsOptions::default();
    let mut m = bfgs(f, x0, &opts);
    if !m.converged && m.f.is_finite() {
        let nm = nelder_mead(f, &m.x, 0.1, 400 * x0.len().max(1));
        let m2 = bfgs(f, &nm.x, &opts);
        if m2.f <= m.f {
            m = m2;
        }
    }
    newton_polish(f, m, 4)
}

/// Representative mean excess time of a dataset, used for moment-style starts.
fn typical_time(d: &Dataset) -> f64 {
    let mut s = 0.0;
    let mut w = 0.0;
    for r in &d.records {
        let t = match r.event {
            Event::Observed | Event::RightCensored => r.time1,
            Event::Interval => 0.5 * (r.time1.max(0.0) + r.time2),
            Event::LeftCensored => 0.5 * r.time2,
        };
        if t.is_finite() {
            s += r.weight * t;
            w += r.weight;
        }
    }
    let m = s / w;
    if m.is_finite() && m > 0.0 {
        m
    } else {
        1.0
    }
}

fn moment_start(family: Family, m: f64, k: usize) -> Vec<f64> {
    let (nu, a, l) = (0.1 / m, 1.0 / m, 0.01 / m);
    match family {
        Family::Exp => vec![m],
        Family::Gomp => vec![m, 0.1],
        Family::Gp => vec![m, 0.0],
        Family::Weibull => vec![m, 1.0],
        Family::ExtGp => vec![m, 0.1, 0.0],
        Family::ExtWeibull => vec![m, 1.0, 0.0],
        Family::Perks => vec![nu, a],
        Family::Beard => vec![nu, a, 1.0],
        Family::GompMake => vec![m, 0.1, l],
        Family::PerksMake => vec![nu, a, l],
        Family::BeardMake => vec![nu, a, 1.0, l],
        Family::GpPiece => std::iter::once(m).chain(std::iter::repeat(0.0).take(k)).collect(),
    }
}

/// Fit `family` to `d` above `cfg.thresh`.
pub fn fit(d: &Dataset, family: Family, cfg: &ExceedanceConfig, starts: Option<&[Vec<f64>]>) -> Result<FitResult> {
    let opts = FitOptions {
        starts: starts.map(|s| s.to_vec()).unwrap_or_default(),
        ..Default::default()
    };
    fit_with(d, family, cfg, &opts)
}

pub fn fit_with(d: &Dataset, family: Family, cfg: &ExceedanceConfig, opts: &FitOptions) -> Result<FitResult> {
    let dx = exceedances(d, cfg)?;
    fit_exceedances(&dx, family, cfg.thresh, opts)
}

/// Apply the threshold, mapping an empty result to `NoExceedances`.
pub fn exceedances(d: &Dataset, cfg: &ExceedanceConfig) -> Result<Dataset> {
    match to_exceedances(d, cfg) {
        Err(Error::EmptyDataset) => Err(Error::NoExceedances(cfg.thresh)),
        other => other,
    }
}

/// Fit to data already shifted by the threshold `thresh`.
pub fn fit_exceedances(dx: &Dataset, family: Family, thresh: f64, opts: &FitOptions) -> Result<FitResult> {
    if dx.is_empty() || !(dx.total_weight() > 0.0) {
        return Err(Error::NoExceedances(thresh));
    }
    if family == Family::GpPiece && opts.pieces.is_empty() {
        return Err(Error::InvalidArgument("gppiece needs piece thresholds".into()));
    }
    let mut cache = HashMap::new();
    fit_cached(dx, family, thresh, opts, &mut cache)
}

fn fit_cached(
    dx: &Dataset,
    family: Family,
    thresh: f64,
    opts: &FitOptions,
    cache: &mut HashMap<Family, FitResult>,
) -> Result<FitResult> {
    if let Some(r) = cache.get(&family) {
        return Ok(r.clone());
    }
    let k = opts.pieces.len();
    let specs = family.specs(k);
    let m = typical_time(dx);

    let mut starts: Vec<Vec<f64>> = vec![moment_start(family, m, k)];
    starts.extend(opts.starts.iter().filter(|s| s.len() == specs.len()).cloned());
    if opts.nested_starts {
        let sub_opts = FitOptions {
            starts: Vec::new(),
            compute_se: false,
            ..opts.clone()
        };
        if family == Family::GpPiece {
            if let Ok(g) = fit_cached(dx, Family::Gp, thresh, &sub_opts, cache) {
                let v = g.estimates.values();
                starts.push(std::iter::once(v[0]).chain(std::iter::repeat(v[1]).take(k)).collect());
            }
        }
        for sub in direct_subs(family) {
            if let Ok(sf) = fit_cached(dx, sub, thresh, &sub_opts, cache) {
                if let Some(v) = embed(&sf.estimates, family) {
                    starts.push(v);
                }
            }
        }
    }

    let bidx: Vec<usize> = (0..specs.len())
        .filter(|&i| has_boundary_candidate(family, &specs[i]))
        .collect();
    let mut n_starts = 0;
    // (loglik, values, converged, candidate mask)
    let mut best: Option<(f64, Vec<f64>, bool, u32)> = None;
    let consider = |ll: f64, v: Vec<f64>, conv: bool, mask: u32, best: &mut Option<(f64, Vec<f64>, bool, u32)>| {
        if !ll.is_finite() {
            return;
        }
        let better = match best {
            None => true,
            // near-ties go to the candidate with more parameters on the boundary
            Some((b, _, _, bm)) => ll > *b + 1e-10 || (ll >= *b - 1e-10 && mask.count_ones() > bm.count_ones()),
        };
        if better {
            *best = Some((ll, v, conv, mask));
        }
    };

    let full_layout = Layout::new(family, &opts.pieces, vec![None; specs.len()]);
    let mut natural = Vec::new();
    for mask in 0u32..(1 << bidx.len()) {
        let fixed: Vec<Option<f64>> = (0..specs.len())
            .map(|i| match bidx.iter().position(|&b| b == i) {
                Some(j) if mask & (1 << j) != 0 => Some(specs[i].lower),
                _ => None,
            })
            .collect();
        let layout = Layout::new(family, &opts.pieces, fixed);
        let obj = layout.objective(dx);
        if layout.n_free() == 0 {
            let f0 = obj(&[]);
            n_starts += 1;
            layout.natural(&[], &mut natural);
            consider(-f0, natural.clone(), f0.is_finite(), mask, &mut best);
            continue;
        }
        for s in &starts {
            let x0 = layout.free(s);
            if !obj(&x0).is_finite() {
                continue;
            }
            let r = local_search(&obj, &x0);
            n_starts += 1;
            layout.natural(&r.x, &mut natural);
            consider(-r.f, natural.clone(), r.converged, mask, &mut best);
        }
    }

    // jittered restarts around the best point of the full model
    if opts.n_jitter > 0 {
        if let Some((_, centre, ..)) = best.clone() {
            let obj = full_layout.objective(dx);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            for _ in 0..opts.n_jitter {
                let s: Vec<f64> = centre
                    .iter()
                    .map(|v| v * (1.0 + 0.2 * (2.0 * rng.random::<f64>() - 1.0)))
                    .collect();
                let x0 = full_layout.free(&s);
                if !obj(&x0).is_finite() {
                    continue;
                }
                let r = local_search(&obj, &x0);
                n_starts += 1;
                full_layout.natural(&r.x, &mut natural);
                consider(-r.f, natural.clone(), r.converged, 0, &mut best);
            }
        }
    }

    let (ll, values, converged, mask) = best.ok_or_else(|| {
        Error::NonConvergence(format!("no starting value gave a finite log likelihood for {family}"))
    })?;
    let estimates = full_layout.params(values)?;
    let boundary: Vec<bool> = (0..specs.len())
        .map(|i| {
            let fixed = bidx.iter().position(|&b| b == i).is_some_and(|j| mask & (1 << j) != 0);
            let v = estimates.values()[i];
            let near = specs[i].lower.is_finite()
                && (specs[i].has_boundary() || (family.is_makeham() && specs[i].name == "rate"))
                && v - specs[i].lower < BOUNDARY_TOL;
            fixed || near
        })
        .collect();
    let mut result = FitResult {
        family,
        thresh,
        se: vec![None; specs.len()],
        vcov: None,
        loglik: ll,
        n_exceedances: dx.total_weight(),
        converged,
        n_starts,
        boundary,
        estimates,
    };
    if opts.compute_se {
        if let Ok((se, vcov)) = information(&result, dx) {
            result.se = se;
            result.vcov = Some(vcov);
        }
    }
    cache.insert(family, result.clone());
    Ok(result)
}

/// Standard errors from the observed information of an exceedance dataset.
pub fn standard_errors(fr: &FitResult, dx: &Dataset) -> Result<Vec<Option<f64>>> {
    information(fr, dx).map(|(se, _)| se)
}

/// Finite-difference step for the observed information at `theta`.
///
/// Second differences balance truncation against rounding at a relative step of about `ε^{1/4}`.
pub(crate) fn hessian_step(theta: f64, lower: f64) -> f64 {
    if lower.is_finite() {
        // positive parameters: relative step, kept inside the bound
        (1e-4 * theta.abs()).min(0.5 * (theta - lower))
    } else {
        (1e-4 * theta.abs()).max(1e-4)
    }
}

/// Returns per-parameter standard errors and the covariance matrix (zero rows on the boundary).
fn information(fr: &FitResult, dx: &Dataset) -> Result<(Vec<Option<f64>>, Vec<Vec<f64>>)> {
    let theta = fr.estimates.values().to_vec();
    let specs = fr.family.specs(fr.estimates.thresholds().len());
    let free: Vec<usize> = (0..theta.len()).filter(|&i| !fr.boundary[i]).collect();
    let n = theta.len();
    if free.is_empty() {
        return Err(Error::SingularInformation);
    }
    let f = |x: &[f64]| {
        let mut v = theta.clone();
        for (k, &i) in free.iter().enumerate() {
            v[i] = x[k];
        }
        match fr.estimates.with_values(v) {
            Ok(p) => loglik(dx, &p),
            Err(_) => f64::NAN,
        }
    };
    let x0: Vec<f64> = free.iter().map(|&i| theta[i]).collect();
    let h: Vec<f64> = free.iter().map(|&i| hessian_step(theta[i], specs[i].lower)).collect();
    let hess = fd_hessian(&f, &x0, &h).ok_or(Error::SingularInformation)?;
    let m = free.len();
    let info = nalgebra::DMatrix::from_fn(m, m, |i, j| -hess[i][j]);
    let chol = info.cholesky().ok_or(Error::SingularInformation)?;
    let inv = chol.inverse();
    let mut se = vec![None; n];
    let mut vcov = vec![vec![0.0; n]; n];
    for (a, &i) in free.iter().enumerate() {
        let var = inv[(a, a)];
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::SingularInformation);
        }
        se[i] = Some(var.sqrt());
        for (b, &j) in free.iter().enumerate() {
            vcov[i][j] = inv[(a, b)];
        }
    }
    Ok((se, vcov))
}
