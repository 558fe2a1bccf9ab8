//! Parametric lifetime families defined through their hazard functions.
//!
//! Every family is evaluated through its cumulative hazard `H`, so that
//! `S = exp(-H)`, `F = -expm1(-H)` and interval probabilities can be formed in
//! log space without cancellation. Closed forms:
//!
//! | family       | cumulative hazard `H(t)`                                      |
//! |--------------|----------------------------------------------------------------|
//! | `exp`        | `t/σ`                                                          |
//! | `gomp`       | `(e^{βt/σ} − 1)/β`                                             |
//! | `gp`         | `log(1 + ξt/σ)/ξ`                                              |
//! | `weibull`    | `(t/σ)^α`                                                      |
//! | `extgp`      | `log{1 + ξ(e^{βt/σ} − 1)/β}/ξ`                                 |
//! | `extweibull` | `log{1 + ξ(t/σ)^α}/ξ`                                          |
//! | `beard`      | `log{1 + αβ(e^{νt} − 1)/(1 + αβ)}/(νβ)`                        |
//! | `perks`      | beard with `β = 1`                                             |
//! | `*make`      | base family plus `λt`                                          |
//!
//! Removable singularities (`β → 0`, `ξ → 0`, `ν → 0`) go through the
//! `exprel`/`log1prel` kernels, which switch to series below `1e-8`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exprel, log1prel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exp,
    Gomp,
    Gp,
    Weibull,
    ExtGp,
    ExtWeibull,
    Perks,
    Beard,
    GompMake,
    PerksMake,
    BeardMake,
    GpPiece,
}

/// Lower-bound constraint on one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    /// `-inf` for unconstrained parameters.
    pub lower: f64,
    /// Whether the bound itself is admissible.
    pub closed: bool,
    /// The bound is open but the family has a well-defined limit there
    /// (used for boundary-nested comparisons such as `gomp` at `β = 0`).
    pub limit: bool,
}

const fn positive(name: &'static str) -> ParamSpec {
    ParamSpec { name, lower: 0.0, closed: false, limit: false }
}
const fn positive_limit(name: &'static str) -> ParamSpec {
    ParamSpec { name, lower: 0.0, closed: false, limit: true }
}
const fn nonnegative(name: &'static str) -> ParamSpec {
    ParamSpec { name, lower: 0.0, closed: true, limit: false }
}
const fn real(name: &'static str) -> ParamSpec {
    ParamSpec { name, lower: f64::NEG_INFINITY, closed: false, limit: false }
}

impl ParamSpec {
    pub fn admits(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        v > self.lower || (v == self.lower && (self.closed || self.limit))
    }

    /// Whether the value sits on a bound that the closure admits.
    pub fn has_boundary(&self) -> bool {
        self.lower.is_finite() && (self.closed || self.limit)
    }
}

const EXP: &[ParamSpec] = &[positive("scale")];
const GOMP: &[ParamSpec] = &[positive("scale"), positive_limit("shape")];
const GP: &[ParamSpec] = &[positive("scale"), real("shape")];
const WEIBULL: &[ParamSpec] = &[positive("scale"), positive("shape")];
const EXTGP: &[ParamSpec] = &[positive("scale"), positive_limit("beta"), real("xi")];
const EXTWEIBULL: &[ParamSpec] = &[positive("scale"), positive("alpha"), real("xi")];
const PERKS: &[ParamSpec] = &[nonnegative("rate"), positive("alpha")];
const BEARD: &[ParamSpec] = &[nonnegative("rate"), positive("alpha"), nonnegative("beta")];
const GOMPMAKE: &[ParamSpec] = &[positive("scale"), positive_limit("shape"), nonnegative("lambda")];
const PERKSMAKE: &[ParamSpec] = &[nonnegative("rate"), positive("alpha"), nonnegative("lambda")];
const BEARDMAKE: &[ParamSpec] = &[
    nonnegative("rate"),
    positive("alpha"),
    nonnegative("beta"),
    nonnegative("lambda"),
];

const PIECE_SHAPES: [&str; 16] = [
    "shape1", "shape2", "shape3", "shape4", "shape5", "shape6", "shape7", "shape8", "shape9",
    "shape10", "shape11", "shape12", "shape13", "shape14", "shape15", "shape16",
];

/// Maximal number of pieces for the piecewise generalized Pareto.
pub const MAX_PIECES: usize = PIECE_SHAPES.len();

impl Family {
    /// The eleven fixed-dimension families.
    pub const FIXED: [Family; 11] = [
        Family::Exp,
        Family::Gomp,
        Family::Gp,
        Family::Weibull,
        Family::ExtGp,
        Family::ExtWeibull,
        Family::Perks,
        Family::Beard,
        Family::GompMake,
        Family::PerksMake,
        Family::BeardMake,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Exp => "exp",
            Family::Gomp => "gomp",
            Family::Gp => "gp",
            Family::Weibull => "weibull",
            Family::ExtGp => "extgp",
            Family::ExtWeibull => "extweibull",
            Family::Perks => "perks",
            Family::Beard => "beard",
            Family::GompMake => "gompmake",
            Family::PerksMake => "perksmake",
            Family::BeardMake => "beardmake",
            Family::GpPiece => "gppiece",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Family::Exp => "exponential",
            Family::Gomp => "Gompertz",
            Family::Gp => "generalized Pareto",
            Family::Weibull => "Weibull",
            Family::ExtGp => "extended generalized Pareto",
            Family::ExtWeibull => "extended Weibull",
            Family::Perks => "Perks",
            Family::Beard => "Beard",
            Family::GompMake => "Gompertz-Makeham",
            Family::PerksMake => "Perks-Makeham",
            Family::BeardMake => "Beard-Makeham",
            Family::GpPiece => "piecewise generalized Pareto",
        }
    }

    /// Parameter constraints. For `gppiece` with `k` pieces this is the scale followed by `k` shapes.
    pub fn specs(self, pieces: usize) -> Vec<ParamSpec> {
        match self {
            Family::Exp => EXP.to_vec(),
            Family::Gomp => GOMP.to_vec(),
            Family::Gp => GP.to_vec(),
            Family::Weibull => WEIBULL.to_vec(),
            Family::ExtGp => EXTGP.to_vec(),
            Family::ExtWeibull => EXTWEIBULL.to_vec(),
            Family::Perks => PERKS.to_vec(),
            Family::Beard => BEARD.to_vec(),
            Family::GompMake => GOMPMAKE.to_vec(),
            Family::PerksMake => PERKSMAKE.to_vec(),
            Family::BeardMake => BEARDMAKE.to_vec(),
            Family::GpPiece => std::iter::once(positive("scale"))
                .chain(PIECE_SHAPES.iter().take(pieces).map(|n| real(n)))
                .collect(),
        }
    }

    pub fn param_names(self, pieces: usize) -> Vec<&'static str> {
        self.specs(pieces).iter().map(|s| s.name).collect()
    }

    pub fn n_params(self, pieces: usize) -> usize {
        self.specs(pieces).len()
    }

    pub fn is_makeham(self) -> bool {
        matches!(self, Family::GompMake | Family::PerksMake | Family::BeardMake)
    }

    /// Index of the shape parameter `ξ` bounded below by -1 at fitting time.
    pub fn xi_indices(self, pieces: usize) -> Vec<usize> {
        match self {
            Family::Gp => vec![1],
            Family::ExtGp | Family::ExtWeibull => vec![2],
            Family::GpPiece => (1..=pieces).collect(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::FIXED
            .iter()
            .chain(std::iter::once(&Family::GpPiece))
            .find(|f| f.name() == s.to_ascii_lowercase())
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family '{s}'")))
    }
}

/// One stage of the piecewise generalized Pareto.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Stage {
    start: f64,
    scale: f64,
    shape: f64,
    /// Cumulative hazard accumulated before `start`.
    offset: f64,
}

/// Parameter values of one family, checked against its constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamVectorRepr", into = "ParamVectorRepr")]
pub struct ParamVector {
    family: Family,
    values: Vec<f64>,
    thresholds: Vec<f64>,
    stages: Vec<Stage>,
}

#[derive(Serialize, Deserialize)]
struct ParamVectorRepr {
    family: Family,
    names: Vec<String>,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    thresholds: Vec<f64>,
}

impl From<ParamVector> for ParamVectorRepr {
    fn from(p: ParamVector) -> Self {
        ParamVectorRepr {
            family: p.family,
            names: p.names().iter().map(|s| s.to_string()).collect(),
            values: p.values,
            thresholds: p.thresholds,
        }
    }
}

impl TryFrom<ParamVectorRepr> for ParamVector {
    type Error = Error;

    fn try_from(r: ParamVectorRepr) -> Result<Self> {
        if r.family == Family::GpPiece {
            ParamVector::new_piecewise(r.values, r.thresholds)
        } else {
            ParamVector::new(r.family, r.values)
        }
    }
}

impl ParamVector {
    /// Checked constructor for the fixed-dimension families.
    pub fn new(family: Family, values: Vec<f64>) -> Result<Self> {
        if family == Family::GpPiece {
            return Err(Error::InvalidArgument(
                "use gppiece_params for the piecewise generalized Pareto".into(),
            ));
        }
        let specs = family.specs(0);
        if values.len() != specs.len() {
            return Err(Error::Constraint(format!(
                "{family} expects {} parameters, got {}",
                specs.len(),
                values.len()
            )));
        }
        check_specs(family, &specs, &values)?;
        Ok(ParamVector {
            family,
            values,
            thresholds: Vec::new(),
            stages: Vec::new(),
        })
    }

    /// Build from `name = value` pairs in any order.
    pub fn from_named(family: Family, pairs: &[(&str, f64)]) -> Result<Self> {
        let names = family.param_names(0);
        let mut values = vec![f64::NAN; names.len()];
        for (k, v) in pairs {
            let i = names.iter().position(|n| n == k).ok_or_else(|| {
                Error::InvalidArgument(format!("{family} has no parameter '{k}'"))
            })?;
            values[i] = *v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidArgument(format!(
                "missing parameter '{}' for {family}",
                names[i]
            )));
        }
        ParamVector::new(family, values)
    }

    fn new_piecewise(values: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Constraint("gppiece needs a scale".into()));
        }
        gppiece_params(values[0], &values[1..], &thresholds)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interior thresholds of `gppiece` (empty otherwise).
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.family.param_names(self.thresholds.len())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names()
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    /// Same family (and thresholds) with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if self.family == Family::GpPiece {
            ParamVector::new_piecewise(values, self.thresholds.clone())
        } else {
            ParamVector::new(self.family, values)
        }
    }

    fn check_time(t: f64) -> Result<()> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
        }
        Ok(())
    }

    pub fn hazard(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.hazard_at(t))
    }

    pub fn cum_hazard(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.cum_hazard_at(t))
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        Ok((-self.cum_hazard(t)?).exp())
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        Ok(-(-self.cum_hazard(t)?).exp_m1())
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.log_density_at(t).exp())
    }

    /// Quantile function on `[0, 1)`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::Domain(format!("probability must lie in [0, 1), got {q}")));
        }
        Ok(self.inv_cum_hazard(-(-q).ln_1p()))
    }

    /// Right endpoint of the support, `+inf` when unbounded.
    pub fn endpoint(&self) -> f64 {
        let v = &self.values;
        match self.family {
            Family::Gp if v[1] < 0.0 => -v[0] / v[1],
            Family::ExtGp if v[2] < 0.0 => {
                let r = -1.0 / v[2];
                v[0] * r * log1prel(v[1] * r)
            }
            Family::ExtWeibull if v[2] < 0.0 => v[0] * (-1.0 / v[2]).powf(1.0 / v[1]),
            Family::GpPiece => {
                let last = self.stages.last().expect("at least one stage");
                if last.shape < 0.0 {
                    last.start + last.scale / -last.shape
                } else {
                    f64::INFINITY
                }
            }
            _ => f64::INFINITY,
        }
    }

    /// Cumulative hazard for `t >= 0`; `t <= 0` gives 0 and points past the endpoint give `+inf`.
    pub(crate) fn cum_hazard_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t == f64::INFINITY {
            return f64::INFINITY;
        }
        let v = &self.values;
        let h = match self.family {
            Family::Exp => t / v[0],
            Family::Gomp => gomp_ch(t, v[0], v[1]),
            Family::Gp => gp_ch(t, v[0], v[1]),
            Family::Weibull => (t / v[0]).powf(v[1]),
            Family::ExtGp => {
                let a = gomp_ch(t, v[0], v[1]);
                shape_ch(a, v[2])
            }
            Family::ExtWeibull => shape_ch((t / v[0]).powf(v[1]), v[2]),
            Family::Perks => beard_ch(t, v[0], v[1], 1.0),
            Family::Beard => beard_ch(t, v[0], v[1], v[2]),
            Family::GompMake => gomp_ch(t, v[0], v[1]) + v[2] * t,
            Family::PerksMake => beard_ch(t, v[0], v[1], 1.0) + v[2] * t,
            Family::BeardMake => beard_ch(t, v[0], v[1], v[2]) + v[3] * t,
            Family::GpPiece => {
                let st = self.stage_for(t);
                if t <= st.start {
                    st.offset
                } else {
                    st.offset + gp_ch(t - st.start, st.scale, st.shape)
                }
            }
        };
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    pub(crate) fn hazard_at(&self, t: f64) -> f64 {
        let v = &self.values;
        match self.family {
            Family::Exp => 1.0 / v[0],
            Family::Gomp => (v[1] * t / v[0]).exp() / v[0],
            Family::Gp => gp_h(t, v[0], v[1]),
            Family::Weibull => weibull_h(t, v[0], v[1]),
            Family::ExtGp => {
                let a = gomp_ch(t, v[0], v[1]);
                let d = 1.0 + v[2] * a;
                if d <= 0.0 {
                    f64::INFINITY
                } else {
                    (v[1] * t / v[0]).exp() / (v[0] * d)
                }
            }
            Family::ExtWeibull => {
                let d = 1.0 + v[2] * (t / v[0]).powf(v[1]);
                if d <= 0.0 {
                    f64::INFINITY
                } else {
                    weibull_h(t, v[0], v[1]) / d
                }
            }
            Family::Perks => beard_h(t, v[0], v[1], 1.0),
            Family::Beard => beard_h(t, v[0], v[1], v[2]),
            Family::GompMake => (v[1] * t / v[0]).exp() / v[0] + v[2],
            Family::PerksMake => beard_h(t, v[0], v[1], 1.0) + v[2],
            Family::BeardMake => beard_h(t, v[0], v[1], v[2]) + v[3],
            Family::GpPiece => {
                let st = self.stage_for(t);
                if t < st.start {
                    0.0
                } else {
                    gp_h(t - st.start, st.scale, st.shape)
                }
            }
        }
    }

    pub(crate) fn log_density_at(&self, t: f64) -> f64 {
        let h = self.hazard_at(t);
        let ch = self.cum_hazard_at(t);
        if !(h > 0.0) || !h.is_finite() || !ch.is_finite() {
            return f64::NEG_INFINITY;
        }
        h.ln() - ch
    }

    /// Inverse of the cumulative hazard: the time `t` with `H(t) = target`.
    pub(crate) fn inv_cum_hazard(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        if target == f64::INFINITY {
            return self.endpoint();
        }
        let v = &self.values;
        match self.family {
            Family::Exp => v[0] * target,
            Family::Gomp => v[0] * target * log1prel(v[1] * target),
            Family::Gp => v[0] * target * exprel(v[1] * target),
            Family::Weibull => v[0] * target.powf(1.0 / v[1]),
            Family::ExtGp => {
                let a = target * exprel(v[2] * target);
                v[0] * a * log1prel(v[1] * a)
            }
            Family::ExtWeibull => {
                let w = target * exprel(v[2] * target);
                v[0] * w.powf(1.0 / v[1])
            }
            Family::GpPiece => {
                let st = self
                    .stages
                    .iter()
                    .rev()
                    .find(|s| s.offset < target)
                    .unwrap_or(&self.stages[0]);
                let rem = target - st.offset;
                st.start + st.scale * rem * exprel(st.shape * rem)
            }
            _ => self.invert_numerically(target),
        }
    }

    /// Safeguarded Newton on `H(t) = target`; `H` is increasing with derivative `h`.
    fn invert_numerically(&self, target: f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.cum_hazard_at(hi) < target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.cum_hazard_at(t) - target;
            if g == 0.0 {
                return t;
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let dh = self.hazard_at(t);
            let step = g / dh;
            // converged: return the evaluated point, not a fresh bisection of the bracket
            if (hi - lo) <= 1e-15 * hi.max(1e-300) || (dh > 0.0 && step.abs() <= 1e-14 * t.max(1e-300)) {
                return t;
            }
            let newton = t - step;
            t = if dh > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        t
    }

    fn stage_for(&self, t: f64) -> &Stage {
        let k = self.stages.partition_point(|s| s.start <= t);
        &self.stages[k.saturating_sub(1)]
    }
}

fn check_specs(family: Family, specs: &[ParamSpec], values: &[f64]) -> Result<()> {
    for (s, &v) in specs.iter().zip(values) {
        if !s.admits(v) {
            let op = if s.closed { ">=" } else { ">" };
            return Err(Error::Constraint(format!(
                "{family}: parameter {} = {v} must be finite and {op} {}",
                s.name, s.lower
            )));
        }
    }
    Ok(())
}

/// `(e^{βt/σ} − 1)/β`, the Gompertz cumulative hazard.
#[inline]
fn gomp_ch(t: f64, scale: f64, beta: f64) -> f64 {
    let s = t / scale;
    s * exprel(beta * s)
}

/// `log(1 + ξa)/ξ`, infinite once `1 + ξa <= 0`.
#[inline]
fn shape_ch(a: f64, xi: f64) -> f64 {
    let z = xi * a;
    if z <= -1.0 {
        f64::INFINITY
    } else if a == f64::INFINITY {
        if xi < 0.0 {
            f64::INFINITY
        } else if xi == 0.0 {
            a
        } else {
            f64::INFINITY
        }
    } else {
        a * log1prel(z)
    }
}

#[inline]
fn gp_ch(t: f64, scale: f64, xi: f64) -> f64 {
    shape_ch(t / scale, xi)
}

#[inline]
fn gp_h(t: f64, scale: f64, xi: f64) -> f64 {
    let d = scale + xi * t;
    if d <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / d
    }
}

#[inline]
fn weibull_h(t: f64, scale: f64, alpha: f64) -> f64 {
    let s = t / scale;
    if alpha == 1.0 {
        return 1.0 / scale;
    }
    alpha / scale * s.powf(alpha - 1.0)
}

#[inline]
fn beard_ch(t: f64, rate: f64, alpha: f64, beta: f64) -> f64 {
    let nt = rate * t;
    let e = t * exprel(nt);
    if beta == 0.0 {
        return alpha * e;
    }
    let ab = alpha * beta;
    let c = ab / (1.0 + ab);
    if nt > 500.0 {
        // log{c e^{νt} + 1 − c}/(νβ), evaluated without overflow
        let lg = c.ln() + nt + ((1.0 - c) / c * (-nt).exp()).ln_1p();
        return lg / (rate * beta);
    }
    let x = c * rate * e;
    alpha / (1.0 + ab) * e * log1prel(x)
}

#[inline]
fn beard_h(t: f64, rate: f64, alpha: f64, beta: f64) -> f64 {
    let nt = rate * t;
    if nt > 700.0 {
        if beta == 0.0 {
            return f64::INFINITY;
        }
        return alpha / ((-nt).exp() + alpha * beta);
    }
    let w = nt.exp();
    alpha * w / (1.0 + alpha * beta * w)
}

/// Piecewise generalized Pareto with continuous hazard.
///
/// Stage `k` covers `[u_k, u_{k+1})` with shape `ξ_k`; stage scales follow
/// `σ_{k+1} = σ_k + ξ_k (u_{k+1} − u_k)`, which keeps the hazard continuous at
/// every threshold. The survival function is one for `t <= u_1`.
pub fn gppiece_params(scale: f64, shapes: &[f64], thresholds: &[f64]) -> Result<ParamVector> {
    let k = shapes.len();
    if k == 0 || k != thresholds.len() {
        return Err(Error::Constraint(format!(
            "gppiece needs as many shapes as thresholds, got {} and {}",
            k,
            thresholds.len()
        )));
    }
    if k > MAX_PIECES {
        return Err(Error::Constraint(format!("at most {MAX_PIECES} pieces")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Constraint(format!("gppiece: scale must be > 0, got {scale}")));
    }
    if shapes.iter().any(|x| !x.is_finite()) || thresholds.iter().any(|x| !x.is_finite()) {
        return Err(Error::Constraint("gppiece: non-finite parameter".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Constraint("gppiece: thresholds must increase".into()));
    }
    let mut stages = Vec::with_capacity(k);
    let mut sigma = scale;
    let mut offset = 0.0;
    for j in 0..k {
        if j > 0 {
            let width = thresholds[j] - thresholds[j - 1];
            let prev_shape = shapes[j - 1];
            offset += gp_ch(width, sigma, prev_shape);
            sigma += prev_shape * width;
            if !(sigma > 0.0) {
                return Err(Error::Constraint(format!(
                    "gppiece: implied scale {sigma} of stage {} is not positive",
                    j + 1
                )));
            }
        }
        stages.push(Stage {
            start: thresholds[j],
            scale: sigma,
            shape: shapes[j],
            offset,
        });
    }
    let mut values = Vec::with_capacity(k + 1);
    values.push(scale);
    values.extend_from_slice(shapes);
    Ok(ParamVector {
        family: Family::GpPiece,
        values,
        thresholds: thresholds.to_vec(),
        stages,
    })
}
