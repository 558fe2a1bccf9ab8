//! Derivative-free local optimizers used by the fitting and profiling code.
//!
//! All routines minimize. Non-finite objective values are treated as
//! infeasible points; line searches back off from them.

/// Result of a local minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Relative change in the objective regarded as stationary.
    pub f_rel_tol: f64,
    /// Gradient sup-norm regarded as stationary (raised to the finite-difference noise floor).
    pub g_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            f_rel_tol: 1e-10,
            g_tol: 1e-6,
        }
    }
}

const FD_STEP: f64 = 1e-5;
const MAX_STEP: f64 = 5.0;

fn finite_or_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Central-difference gradient; falls back to one-sided differences next to infeasible points.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, g: &mut [f64]) -> bool {
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = finite_or_inf(f(&xp));
        xp[i] = x[i] - h;
        let fm = finite_or_inf(f(&xp));
        xp[i] = x[i];
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => return false,
        };
    }
    true
}

/// Central-difference Hessian with steps `h_i`.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: &[f64]) -> Option<Vec<Vec<f64>>> {
    let n = x.len();
    let f0 = f(x);
    if !f0.is_finite() {
        return None;
    }
    let mut out = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    let eval = |xp: &mut Vec<f64>, di: (usize, f64), dj: (usize, f64)| {
        xp[di.0] += di.1;
        xp[dj.0] += dj.1;
        let v = f(xp);
        xp[di.0] = x[di.0];
        xp[dj.0] = x[dj.0];
        v
    };
    for i in 0..n {
        let hi = h[i];
        let fp = eval(&mut xp, (i, hi), (i, 0.0));
        let fm = eval(&mut xp, (i, -hi), (i, 0.0));
        if !fp.is_finite() || !fm.is_finite() {
            return None;
        }
        out[i][i] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = h[j];
            let fpp = eval(&mut xp, (i, hi), (j, hj));
            let fpm = eval(&mut xp, (i, hi), (j, -hj));
            let fmp = eval(&mut xp, (i, -hi), (j, hj));
            let fmm = eval(&mut xp, (i, -hi), (j, -hj));
            if ![fpp, fpm, fmp, fmm].iter().all(|v| v.is_finite()) {
                return None;
            }
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Some(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Quasi-Newton minimization with finite-difference gradients and backtracking line search.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = finite_or_inf(f(&x));
    if n == 0 || !fx.is_finite() {
        return Minimum { x, f: fx, converged: n == 0 && fx.is_finite(), iterations: 0 };
    }
    let mut g = vec![0.0; n];
    if !fd_gradient(f, &x, fx, &mut g) {
        return Minimum { x, f: fx, converged: false, iterations: 0 };
    }
    let mut hinv = identity(n);
    let mut converged = false;
    let mut it = 0;
    let mut stalls = 0;
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    while it < opts.max_iter {
        it += 1;
        let noise = 10.0 * f64::EPSILON * fx.abs().max(1.0) / FD_STEP;
        let gtol = opts.g_tol.max(noise);
        if sup_norm(&g) < gtol {
            converged = true;
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&hinv[i], &g)).collect();
        let mut slope = dot(&p, &g);
        if !(slope < 0.0) {
            hinv = identity(n);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&p, &g);
        }
        let pn = sup_norm(&p);
        if pn > MAX_STEP {
            let s = MAX_STEP / pn;
            p.iter_mut().for_each(|v| *v *= s);
            slope *= s;
        }
        let mut alpha = 1.0;
        let mut fnew = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + alpha * p[i];
            }
            fnew = finite_or_inf(f(&xn));
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no descent along this direction; retry once from steepest descent
            if stalls == 0 {
                stalls += 1;
                hinv = identity(n);
                continue;
            }
            converged = sup_norm(&g) < 1e3 * gtol;
            break;
        }
        stalls = 0;
        if !fd_gradient(f, &xn, fnew, &mut gn) {
            x.copy_from_slice(&xn);
            fx = fnew;
            break;
        }
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let df = fx - fnew;
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        fx = fnew;
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        if df.abs() <= opts.f_rel_tol * fx.abs().max(1.0) && sup_norm(&g) < 1e2 * gtol {
            converged = true;
            break;
        }
    }
    Minimum { x, f: fx, converged, iterations: it }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// A few damped Newton steps with a finite-difference Hessian; returns the improved point.
pub fn newton_polish<F: Fn(&[f64]) -> f64>(f: &F, m: Minimum, steps: usize) -> Minimum {
    let n = m.x.len();
    if n == 0 || !m.f.is_finite() {
        return m;
    }
    let mut best = m;
    let mut g = vec![0.0; n];
    for _ in 0..steps {
        if !fd_gradient(f, &best.x, best.f, &mut g) {
            break;
        }
        let h: Vec<f64> = best.x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
        let Some(hess) = fd_hessian(f, &best.x, &h) else { break };
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| hess[i][j]);
        let Some(chol) = a.cholesky() else { break };
        let step = chol.solve(&nalgebra::DVector::from_column_slice(&g));
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let xn: Vec<f64> = (0..n).map(|i| best.x[i] - alpha * step[i]).collect();
            let fnew = finite_or_inf(f(&xn));
            if fnew < best.f {
                let gain = best.f - fnew;
                best.x = xn;
                best.f = fnew;
                improved = gain > 1e-13 * best.f.abs().max(1.0);
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

/// Nelder–Mead simplex search, used when gradient-based search fails.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, max_iter: usize) -> Minimum {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), finite_or_inf(f(x0))));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step * x[i].abs().max(1.0);
        let fx = finite_or_inf(f(&x));
        simplex.push((x, fx));
    }
    let mut it = 0;
    let mut converged = false;
    while it < max_iter {
        it += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fb, fw) = (simplex[0].1, simplex[n].1);
        if fb.is_finite() && (fw - fb).abs() <= 1e-12 * fb.abs().max(1.0) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let at = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j]))
                .collect()
        };
        let xr = at(-1.0);
        let fr = finite_or_inf(f(&xr));
        if fr < simplex[0].1 {
            let xe = at(-2.0);
            let fe = finite_or_inf(f(&xe));
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = at(-0.5);
                let fc = finite_or_inf(f(&xc));
                (xc, fc)
            } else {
                let xc = at(0.5);
                let fc = finite_or_inf(f(&xc));
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n).map(|j| best[j] + 0.5 * (item.0[j] - best[j])).collect();
                    let fx = finite_or_inf(f(&x));
                    *item = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Minimum { x, f: fx, converged, iterations: it }
}

/// Brent's method for a 1-D minimum on `[a, b]`. Returns `(x, f(x))`.
pub fn brent_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let g = |x: f64| finite_or_inf(f(x));
    const C: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + C * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = g(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = C * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = g(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Brent's root finder on a sign-changing bracket.
pub fn brent_root<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() || fa * fb > 0.0 {
        return None;
    }
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return None;
        }
    }
    Some(b)
}
