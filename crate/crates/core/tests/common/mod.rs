//! Helpers shared by the integration tests.
#![allow(dead_code)]

use lifetail::{gppiece_params, Family, ParamVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn ks(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_crit(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.0,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let (f1, f2) = (f(c - h * XK[i]), f(c + h * XK[i]));
        k += WK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (v, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    integrate(f, a, m, 0.5 * tol, depth - 1) + integrate(f, m, b, 0.5 * tol, depth - 1)
}

pub fn random_params(family: Family, rng: &mut ChaCha8Rng) -> ParamVector {
    loop {
        let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let p = match family {
            Family::Exp => ParamVector::new(family, vec![u(0.5, 5.0)]),
            Family::Gomp => ParamVector::new(family, vec![u(0.5, 5.0), u(0.0, 2.0)]),
            Family::Gp => ParamVector::new(family, vec![u(0.5, 5.0), u(-0.8, 0.8)]),
            Family::Weibull => ParamVector::new(family, vec![u(0.5, 5.0), u(0.5, 3.0)]),
            Family::ExtGp => ParamVector::new(family, vec![u(0.5, 5.0), u(0.0, 2.0), u(-0.8, 0.8)]),
            Family::ExtWeibull => ParamVector::new(family, vec![u(0.5, 5.0), u(0.5, 3.0), u(-0.8, 0.8)]),
            Family::Perks => ParamVector::new(family, vec![u(0.0, 2.0), u(0.1, 3.0)]),
            Family::Beard => ParamVector::new(family, vec![u(0.0, 2.0), u(0.1, 3.0), u(0.0, 2.0)]),
            Family::GompMake => ParamVector::new(family, vec![u(0.5, 5.0), u(0.0, 2.0), u(0.0, 1.0)]),
            Family::PerksMake => ParamVector::new(family, vec![u(0.0, 2.0), u(0.1, 3.0), u(0.0, 1.0)]),
            Family::BeardMake => ParamVector::new(family, vec![u(0.0, 2.0), u(0.1, 3.0), u(0.0, 2.0), u(0.0, 1.0)]),
            Family::GpPiece => {
                let t1 = u(0.3, 1.0);
                let t2 = t1 + u(0.3, 1.0);
                gppiece_params(u(0.5, 5.0), &[u(-0.5, 0.5), u(-0.5, 0.5), u(-0.5, 0.5)], &[0.0, t1, t2])
            }
        };
        if let Ok(p) = p {
            return p;
        }
    }
}

pub fn all_families() -> Vec<Family> {
    Family::FIXED.iter().copied().chain([Family::GpPiece]).collect()
}
