//! Registry of nested family pairs and the null distributions of their likelihood ratio statistics.
//!
//! An edge restricts `q_b` parameters to the boundary of the parameter space
//! and `q_i` parameters to interior values. Its null distribution is the
//! chi-bar-square mixture `Σ_k C(q_b, k) 2^{-q_b} χ²_{q_i + k}`: half point mass
//! and half `χ²₁` for a single boundary constraint, `¼χ²₀ + ½χ²₁ + ¼χ²₂` for
//! two, and plain `χ²_{q_i}` when every constraint is interior.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{Family, ParamVector};
use crate::math::chisq_sf;

/// One parameter restriction defining the submodel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Restriction {
    pub param: &'static str,
    pub value: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestingEdge {
    pub sub: Family,
    pub sup: Family,
    pub restrictions: Vec<Restriction>,
    /// `weights[k]` is the probability of the `χ²_k` component.
    pub weights: Vec<f64>,
    pub allowed: bool,
    /// Whether the edge is drawn directly (as opposed to a composition of edges).
    pub direct: bool,
}

impl NestingEdge {
    /// Mixture tail probability `Σ w_k Pr(χ²_k > s)`.
    pub fn pvalue(&self, stat: f64) -> f64 {
        mixture_pvalue(&self.weights, stat)
    }

    pub fn describe(&self) -> String {
        describe_mixture(&self.weights)
    }
}

pub fn mixture_pvalue(weights: &[f64], stat: f64) -> f64 {
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(k, w)| w * chisq_sf(stat, k))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

pub fn describe_mixture(weights: &[f64]) -> String {
    let parts: Vec<String> = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(k, w)| {
            if *w == 1.0 {
                format!("chisq({k})")
            } else {
                format!("{w}*chisq({k})")
            }
        })
        .collect();
    parts.join(" + ")
}

/// Chi-bar-square weights for `qb` boundary and `qi` interior restrictions.
pub fn chibar_weights(qb: usize, qi: usize) -> Vec<f64> {
    let mut w = vec![0.0; qb + qi + 1];
    let denom = 2f64.powi(qb as i32);
    let mut binom = 1.0;
    for k in 0..=qb {
        w[qi + k] = binom / denom;
        binom = binom * (qb - k) as f64 / (k + 1) as f64;
    }
    w
}

const fn b(param: &'static str, value: f64) -> Restriction {
    Restriction { param, value, boundary: true }
}
const fn i(param: &'static str, value: f64) -> Restriction {
    Restriction { param, value, boundary: false }
}

use Family::*;

fn table() -> Vec<(Family, Family, Vec<Restriction>, bool)> {
    vec![
        (Exp, Gomp, vec![b("shape", 0.0)], true),
        (Exp, Gp, vec![i("shape", 0.0)], true),
        (Exp, Weibull, vec![i("shape", 1.0)], true),
        (Gomp, ExtGp, vec![i("xi", 0.0)], true),
        (Gp, ExtGp, vec![b("beta", 0.0)], true),
        (Weibull, ExtWeibull, vec![i("xi", 0.0)], true),
        (Gp, ExtWeibull, vec![i("alpha", 1.0)], true),
        (Gomp, GompMake, vec![b("lambda", 0.0)], true),
        (Perks, PerksMake, vec![b("lambda", 0.0)], true),
        (Beard, BeardMake, vec![b("lambda", 0.0)], true),
        (Perks, Beard, vec![i("beta", 1.0)], true),
        (PerksMake, BeardMake, vec![i("beta", 1.0)], true),
        (Gomp, Beard, vec![b("beta", 0.0)], true),
        (GompMake, BeardMake, vec![b("beta", 0.0)], true),
        (Exp, ExtGp, vec![b("beta", 0.0), i("xi", 0.0)], false),
        (Exp, ExtWeibull, vec![i("alpha", 1.0), i("xi", 0.0)], false),
        (Exp, Beard, vec![b("beta", 0.0), b("rate", 0.0)], false),
        (Gomp, BeardMake, vec![b("beta", 0.0), b("lambda", 0.0)], false),
        (Perks, BeardMake, vec![i("beta", 1.0), b("lambda", 0.0)], false),
    ]
}

const FORBIDDEN: [Family; 3] = [GompMake, PerksMake, BeardMake];

/// All registered edges, including the forbidden Makeham comparisons.
pub fn registry() -> Vec<NestingEdge> {
    let mut out: Vec<NestingEdge> = table()
        .into_iter()
        .map(|(sub, sup, restrictions, direct)| {
            let qb = restrictions.iter().filter(|r| r.boundary).count();
            let qi = restrictions.len() - qb;
            NestingEdge {
                sub,
                sup,
                weights: chibar_weights(qb, qi),
                restrictions,
                allowed: true,
                direct,
            }
        })
        .collect();
    for sup in FORBIDDEN {
        out.push(NestingEdge {
            sub: Exp,
            sup,
            restrictions: Vec::new(),
            weights: Vec::new(),
            allowed: false,
            direct: false,
        });
    }
    out
}

/// Look up the edge `sub ⊂ sup`, raising the dedicated errors for forbidden or unrelated pairs.
pub fn lookup(sub: Family, sup: Family) -> Result<NestingEdge> {
    let edge = registry()
        .into_iter()
        .find(|e| e.sub == sub && e.sup == sup)
        .ok_or_else(|| Error::NotNested(sub.to_string(), sup.to_string()))?;
    if !edge.allowed {
        return Err(Error::ForbiddenComparison {
            sub: sub.to_string(),
            sup: sup.to_string(),
            reason: "the Makeham constant and the exponential rate are not identifiable under the null, \
                     so the information matrix is singular"
                .into(),
        });
    }
    Ok(edge)
}

/// Families with a direct edge into `sup`.
pub fn direct_subs(sup: Family) -> Vec<Family> {
    table()
        .into_iter()
        .filter(|(_, s, _, direct)| *s == sup && *direct)
        .map(|(sub, ..)| sub)
        .collect()
}

/// Express a submodel parameter vector in the parametrization of `sup` (direct edges only).
pub fn embed(p: &ParamVector, sup: Family) -> Option<Vec<f64>> {
    let v = p.values();
    let out = match (p.family(), sup) {
        (Exp, Gomp) | (Exp, Gp) => vec![v[0], 0.0],
        (Exp, Weibull) => vec![v[0], 1.0],
        (Gomp, ExtGp) => vec![v[0], v[1], 0.0],
        (Gp, ExtGp) => vec![v[0], 0.0, v[1]],
        (Weibull, ExtWeibull) => vec![v[0], v[1], 0.0],
        (Gp, ExtWeibull) => vec![v[0], 1.0, v[1]],
        (Gomp, GompMake) | (Perks, PerksMake) | (Beard, BeardMake) => {
            let mut w = v.to_vec();
            w.push(0.0);
            w
        }
        (Perks, Beard) => vec![v[0], v[1], 1.0],
        (PerksMake, BeardMake) => vec![v[0], v[1], 1.0, v[2]],
        (Gomp, Beard) => vec![v[1] / v[0], 1.0 / v[0], 0.0],
        (GompMake, BeardMake) => vec![v[1] / v[0], 1.0 / v[0], 0.0, v[2]],
        _ => return None,
    };
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights() {
        assert_eq!(chibar_weights(1, 0), vec![0.5, 0.5]);
        assert_eq!(chibar_weights(2, 0), vec![0.25, 0.5, 0.25]);
        assert_eq!(chibar_weights(0, 2), vec![0.0, 0.0, 1.0]);
        assert_eq!(chibar_weights(1, 1), vec![0.0, 0.5, 0.5]);
        for e in registry().iter().filter(|e| e.allowed) {
            assert_relative_eq!(e.weights.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn gomp_vs_exp_pvalue() {
        let e = lookup(Exp, Gomp).unwrap();
        let p = e.pvalue(15.17);
        assert_relative_eq!(p, 0.5 * chisq_sf(15.17, 1), max_relative = 1e-12);
        assert!(p < 1e-4 && p > 4e-5);
        assert_eq!(e.pvalue(0.0), 0.5);
    }

    #[test]
    fn self_liang_mixture() {
        let e = lookup(Gomp, BeardMake).unwrap();
        let s = 3.0;
        assert_relative_eq!(
            e.pvalue(s),
            0.25 * chisq_sf(s, 2) + 0.5 * chisq_sf(s, 1),
            max_relative = 1e-12
        );
    }

    #[test]
    fn forbidden_and_unrelated() {
        for sup in [GompMake, PerksMake, BeardMake] {
            assert!(matches!(lookup(Exp, sup), Err(Error::ForbiddenComparison { .. })));
        }
        assert!(matches!(lookup(Gp, Gomp), Err(Error::NotNested(..))));
        assert!(matches!(lookup(Exp, Exp), Err(Error::NotNested(..))));
    }

    #[test]
    fn embeddings_preserve_the_distribution() {
        let cases = [
            ParamVector::new(Gomp, vec![1.7, 0.2]).unwrap(),
            ParamVector::new(GompMake, vec![1.7, 0.2, 0.03]).unwrap(),
            ParamVector::new(Gp, vec![1.7, -0.2]).unwrap(),
            ParamVector::new(Perks, vec![0.3, 0.8]).unwrap(),
        ];
        for p in &cases {
            for sup in Family::FIXED {
                if let Some(v) = embed(p, sup) {
                    let q = ParamVector::new(sup, v).unwrap();
                    for t in [0.1, 1.0, 3.0] {
                        assert_relative_eq!(
                            p.survival(t).unwrap(),
                            q.survival(t).unwrap(),
                            max_relative = 1e-12
                        );
                    }
                }
            }
        }
    }
}
