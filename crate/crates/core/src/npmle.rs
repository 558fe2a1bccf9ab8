//! Nonparametric maximum likelihood estimation of a distribution function
//! under censoring and truncation (Turnbull's EM with Frydman's amendment).
//!
//! Sets are represented on an extended line where each real `x` splits into
//! `x⁻ < x < x⁺`. Censoring sets are semi-open `(L, R]`, exact failures are
//! `[t, t]` and truncation windows `(V, U]`; an exact failure at `t = V` gets
//! a closed window so that it stays observable. Each record contributes the
//! start and end of `A ∩ B` to the left and right endpoint sets; the amended
//! construction also adds `V` as a right endpoint and `U⁺` as a left endpoint,
//! so that no interval straddles a truncation bound.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Event, LifetimeRecord};
use crate::error::{Error, Result};

/// Point of the extended line: `side` is -1, 0, +1 for `x⁻`, `x`, `x⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pos {
    pub x: f64,
    pub side: i8,
}

impl Pos {
    fn at(x: f64) -> Self {
        Pos { x, side: 0 }
    }
    fn after(x: f64) -> Self {
        Pos { x, side: 1 }
    }
    fn pred(self) -> Self {
        Pos { x: self.x, side: self.side - 1 }
    }
    fn succ(self) -> Self {
        Pos { x: self.x, side: self.side + 1 }
    }
    fn cmp(&self, o: &Pos) -> Ordering {
        self.x.total_cmp(&o.x).then(self.side.cmp(&o.side))
    }
    fn le(&self, o: &Pos) -> bool {
        self.cmp(o) != Ordering::Greater
    }
}

/// Ordered disjoint intervals `[a_j, b_j]` of the extended line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnbullIntervals {
    pub a: Vec<Pos>,
    pub b: Vec<Pos>,
}

impl TurnbullIntervals {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Index range of the intervals contained in `[s, e]`, if any.
    fn range_within(&self, s: Pos, e: Pos) -> Option<(usize, usize)> {
        let lo = self.a.partition_point(|a| a.cmp(&s) == Ordering::Less);
        let hi = self.b.partition_point(|b| b.le(&e));
        (hi > lo).then_some((lo, hi - 1))
    }
}

/// Per-record interval index ranges for the censoring set `A_i ∩ B_i` and the truncation set `B_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub alpha: Vec<Vec<(usize, usize)>>,
    pub beta: Vec<Vec<(usize, usize)>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Left,
    #[default]
    Right,
    Interpolate,
}

impl std::str::FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Convention::Left),
            "right" => Ok(Convention::Right),
            "interpolate" => Ok(Convention::Interpolate),
            _ => Err(Error::InvalidArgument(format!("unknown convention '{s}'"))),
        }
    }
}

/// Step distribution function with masses on Turnbull intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCDF {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Whether the interval excludes its left endpoint.
    pub left_open: Vec<bool>,
    pub p: Vec<f64>,
    pub convention: Convention,
    pub loglik: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub intervals: Option<TurnbullIntervals>,
    /// Log likelihood after every EM iteration (only when tracing was requested).
    /// A NaN separates runs restarted on a reduced problem.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub trace: bool,
    /// Tolerance of the optimality check, on the gradient of `ℓ / Σw`.
    pub kkt_tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-9,
            max_iter: 100_000,
            trace: false,
            kkt_tol: 1e-6,
        }
    }
}

struct Snapper {
    reps: Vec<f64>,
}

impl Snapper {
    const TOL: f64 = 1.490_116_119_384_765_6e-8; // sqrt(f64::EPSILON)

    fn new(mut xs: Vec<f64>) -> Self {
        xs.retain(|x| x.is_finite());
        xs.sort_by(f64::total_cmp);
        let mut reps: Vec<f64> = Vec::new();
        for x in xs {
            match reps.last() {
                Some(&r) if (x - r).abs() <= Self::TOL * r.abs().max(1.0) => {}
                _ => reps.push(x),
            }
        }
        Snapper { reps }
    }

    fn snap(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return x;
        }
        let k = self.reps.partition_point(|&r| r < x);
        for j in [k.wrapping_sub(1), k] {
            if let Some(&r) = self.reps.get(j) {
                if (x - r).abs() <= Self::TOL * r.abs().max(1.0) {
                    return r;
                }
            }
        }
        x
    }
}

/// Censoring set and truncation windows of one record, on the extended line.
struct RecordSets {
    pieces: Vec<(Pos, Pos)>,
    windows: Vec<(Pos, Pos)>,
}

fn record_sets(r: &LifetimeRecord, s: &Snapper) -> RecordSets {
    let t1 = s.snap(r.time1);
    let t2 = s.snap(r.time2);
    let (sa, ea) = match r.event {
        Event::Observed => (Pos::at(t1), Pos::at(t1)),
        Event::RightCensored => (Pos::after(t1), Pos::at(f64::INFINITY)),
        Event::Interval => (Pos::after(t1), Pos::at(t2)),
        Event::LeftCensored => (Pos::after(f64::NEG_INFINITY), Pos::at(t2)),
    };
    let mut raw = vec![(s.snap(r.ltrunc1), s.snap(r.rtrunc1))];
    if let Some((l2, r2)) = r.window2 {
        raw.push((s.snap(l2), s.snap(r2)));
    }
    let windows: Vec<(Pos, Pos)> = raw
        .into_iter()
        .map(|(v, u)| {
            let start = if r.event == Event::Observed && t1 == v {
                Pos::at(v)
            } else {
                Pos::after(v)
            };
            (start, Pos::at(u))
        })
        .collect();
    let pieces = windows
        .iter()
        .filter_map(|&(sb, eb)| {
            let lo = if sa.cmp(&sb) == Ordering::Less { sb } else { sa };
            let hi = if ea.cmp(&eb) == Ordering::Greater { eb } else { ea };
            lo.le(&hi).then_some((lo, hi))
        })
        .collect();
    RecordSets { pieces, windows }
}

fn snapper_for(d: &Dataset) -> Snapper {
    let mut xs = Vec::with_capacity(d.len() * 4);
    for r in &d.records {
        xs.extend([r.time1, r.time2, r.ltrunc1, r.rtrunc1]);
        if let Some((a, b)) = r.window2 {
            xs.extend([a, b]);
        }
    }
    Snapper::new(xs)
}

/// Turnbull intervals with Frydman's amendment.
pub fn turnbull_intervals(d: &Dataset) -> Result<TurnbullIntervals> {
    turnbull_intervals_with(d, true)
}

/// Turnbull intervals; `amend = false` uses censoring endpoints only.
pub fn turnbull_intervals_with(d: &Dataset, amend: bool) -> Result<TurnbullIntervals> {
    let s = snapper_for(d);
    // (position, is_left)
    let mut pts: Vec<(Pos, bool)> = Vec::new();
    for r in &d.records {
        let rs = record_sets(r, &s);
        for (lo, hi) in &rs.pieces {
            pts.push((*lo, true));
            pts.push((*hi, false));
        }
        if amend {
            for (sb, eb) in &rs.windows {
                if sb.x.is_finite() {
                    pts.push((sb.pred(), false));
                }
                if eb.x.is_finite() {
                    pts.push((eb.succ(), true));
                }
            }
        }
    }
    // left endpoints sort before right endpoints at the same position
    pts.sort_by(|p, q| p.0.cmp(&q.0).then(q.1.cmp(&p.1)));
    let mut a = Vec::new();
    let mut b = Vec::new();
    for w in pts.windows(2) {
        if w[0].1 && !w[1].1 {
            a.push(w[0].0);
            b.push(w[1].0);
        }
    }
    if a.is_empty() {
        return Err(Error::EmptyIntervalSet);
    }
    Ok(TurnbullIntervals { a, b })
}

/// Range-encoded membership of each record.
pub fn membership(d: &Dataset, iv: &TurnbullIntervals) -> Result<Membership> {
    let s = snapper_for(d);
    let mut alpha = Vec::with_capacity(d.len());
    let mut beta = Vec::with_capacity(d.len());
    for r in &d.records {
        let rs = record_sets(r, &s);
        let al: Vec<(usize, usize)> = rs
            .pieces
            .iter()
            .filter_map(|&(lo, hi)| iv.range_within(lo, hi))
            .collect();
        if al.is_empty() {
            return Err(Error::EmptyIntervalSet);
        }
        let be: Vec<(usize, usize)> = rs
            .windows
            .iter()
            .filter_map(|&(lo, hi)| iv.range_within(lo, hi))
            .collect();
        alpha.push(al);
        beta.push(be);
    }
    let mut weights: Vec<f64> = d.records.iter().map(|r| r.weight).collect();
    // A record whose truncation set meets the same intervals as its failure set has
    // likelihood one whenever it is observable. It carries no information but would
    // pull EM towards masses that only need to stay positive, so it gets weight zero.
    let trivial: Vec<bool> = alpha.iter().zip(&beta).map(|(a, b)| merged(a) == merged(b)).collect();
    if trivial.iter().zip(&weights).any(|(t, w)| !t && *w > 0.0) {
        for (w, t) in weights.iter_mut().zip(&trivial) {
            if *t {
                *w = 0.0;
            }
        }
    }
    Ok(Membership { alpha, beta, weights })
}

/// Index ranges sorted and with adjacent ranges joined.
fn merged(ranges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut r = ranges.to_vec();
    r.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(r.len());
    for (lo, hi) in r {
        match out.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn prefix(p: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(p.len() + 1);
    c.push(0.0);
    let mut s = 0.0;
    for v in p {
        s += v;
        c.push(s);
    }
    c
}

fn range_mass(cum: &[f64], ranges: &[(usize, usize)]) -> f64 {
    ranges.iter().map(|&(lo, hi)| cum[hi + 1] - cum[lo]).sum()
}

/// `ℓ(p) = Σ w_i {log P(A_i) − log P(B_i)}`.
pub fn np_loglik(m: &Membership, p: &[f64]) -> f64 {
    let cum = prefix(p);
    let mut ll = 0.0;
    for i in 0..m.weights.len() {
        if m.weights[i] == 0.0 {
            continue;
        }
        let pa = range_mass(&cum, &m.alpha[i]);
        let pb = range_mass(&cum, &m.beta[i]);
        if !(pa > 0.0) {
            return f64::NEG_INFINITY;
        }
        ll += m.weights[i] * (pa.ln() - pb.ln());
    }
    ll
}

/// Gradient of `ℓ` with respect to the masses.
pub fn np_gradient(m: &Membership, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let cum = prefix(p);
    let mut diff = vec![0.0; n + 1];
    for i in 0..m.weights.len() {
        let w = m.weights[i];
        if w == 0.0 {
            continue;
        }
        let ca = w / range_mass(&cum, &m.alpha[i]);
        for &(lo, hi) in &m.alpha[i] {
            diff[lo] += ca;
            diff[hi + 1] -= ca;
        }
        let cb = w / range_mass(&cum, &m.beta[i]);
        for &(lo, hi) in &m.beta[i] {
            diff[lo] -= cb;
            diff[hi + 1] += cb;
        }
    }
    let mut g = Vec::with_capacity(n);
    let mut run = 0.0;
    for d in diff.iter().take(n) {
        run += d;
        g.push(run);
    }
    g
}

/// One EM update (Turnbull's self-consistency equations with truncation ghosts).
fn em_step(m: &Membership, p: &[f64], out: &mut [f64]) {
    let n = p.len();
    let cum = prefix(p);
    let mut diff = vec![0.0; n + 1];
    let mut ghost = 0.0;
    for i in 0..m.weights.len() {
        let w = m.weights[i];
        if w == 0.0 {
            continue;
        }
        let ca = w / range_mass(&cum, &m.alpha[i]);
        for &(lo, hi) in &m.alpha[i] {
            diff[lo] += ca;
            diff[hi + 1] -= ca;
        }
        // mass outside B_i is proportional to p_j / P(B_i)
        let cb = w / range_mass(&cum, &m.beta[i]);
        ghost += cb;
        for &(lo, hi) in &m.beta[i] {
            diff[lo] -= cb;
            diff[hi + 1] += cb;
        }
    }
    let mut run = 0.0;
    let mut total = 0.0;
    for j in 0..n {
        run += diff[j];
        let v = (p[j] * (run + ghost)).max(0.0);
        out[j] = v;
        total += v;
    }
    out.iter_mut().for_each(|v| *v /= total);
}

/// Run EM from the uniform distribution on the intervals.
pub fn em_fit(d: &Dataset, iv: &TurnbullIntervals, tol: f64, max_iter: usize) -> Result<StepCDF> {
    em_fit_with(
        d,
        iv,
        &EmOptions {
            tol,
            max_iter,
            ..Default::default()
        },
    )
}

pub fn em_fit_with(d: &Dataset, iv: &TurnbullIntervals, opts: &EmOptions) -> Result<StepCDF> {
    let m = membership(d, iv)?;
    let n = iv.len();
    let mut p = vec![1.0 / n as f64; n];
    let mut trace = Vec::new();
    let mut it = 0;
    let loglik = solve(&m, &mut p, opts, &mut it, &mut trace, 0)?;
    Ok(StepCDF {
        a: iv.a.iter().map(|q| q.x).collect(),
        b: iv.b.iter().map(|q| q.x).collect(),
        left_open: iv.a.iter().map(|q| q.side > 0).collect(),
        loglik,
        p,
        convention: Convention::Right,
        iterations: it,
        intervals: Some(iv.clone()),
        trace,
    })
}

/// Truncation mass below which a record is tried as vanishing in the limit.
const VANISHING_MASS: f64 = 1e-3;
const MAX_DEPTH: usize = 8;
/// EM iterations between checks of the optimality conditions.
const EM_BLOCK: usize = 1000;
const MAX_ESCAPES: usize = 100;

/// Records with positive weight and no truncation mass under `p`.
fn vanishing(m: &Membership, p: &[f64]) -> Vec<usize> {
    let cum = prefix(p);
    (0..m.weights.len())
        .filter(|&i| m.weights[i] > 0.0 && range_mass(&cum, &m.beta[i]) == 0.0)
        .collect()
}

fn without(m: &Membership, recs: &[usize]) -> Membership {
    let mut out = m.clone();
    for &i in recs {
        out.weights[i] = 0.0;
    }
    out
}

/// The records `recs` on the zero-mass intervals inside their truncation sets, reindexed.
fn restrict_to_zero(m: &Membership, p: &[f64], recs: &[usize]) -> Membership {
    let cum = prefix(p);
    let zero: Vec<usize> = (0..p.len())
        .filter(|&j| p[j] == 0.0 && recs.iter().any(|&i| m.beta[i].iter().any(|&(lo, hi)| lo <= j && j <= hi)))
        .collect();
    debug_assert!(recs.iter().all(|&i| range_mass(&cum, &m.beta[i]) == 0.0));
    let map = |r: &[(usize, usize)]| -> Vec<(usize, usize)> {
        r.iter()
            .filter_map(|&(lo, hi)| {
                let a = zero.partition_point(|&z| z < lo);
                let b = zero.partition_point(|&z| z <= hi);
                (a < b).then(|| (a, b - 1))
            })
            .collect()
    };
    Membership {
        alpha: recs.iter().map(|&i| map(&m.alpha[i])).collect(),
        beta: recs.iter().map(|&i| map(&m.beta[i])).collect(),
        weights: recs.iter().map(|&i| m.weights[i]).collect(),
    }
}

/// Certified maximizer; returns the log likelihood.
///
/// When the supremum is not attained some truncation sets lose all their mass.
/// Those records are then fitted on the emptied intervals as a problem of their
/// own (masses of a smaller order), and their log likelihood is added.
fn solve(
    m: &Membership,
    p: &mut Vec<f64>,
    opts: &EmOptions,
    it: &mut usize,
    trace: &mut Vec<f64>,
    depth: usize,
) -> Result<f64> {
    let mut v: Vec<usize> = Vec::new();
    let mut q = p.clone();
    // emptied intervals stay empty: finite mass there would change the dropped records' limits
    let mut frozen = vec![false; q.len()];
    loop {
        let m0 = without(m, &v);
        let mut k = 0;
        let res = em_certify(&m0, &mut q, &frozen, opts, &mut k, trace);
        *it += k;
        let err = match res {
            Ok(()) => break,
            Err(e) => e,
        };
        let cum = prefix(&q);
        let small: Vec<usize> = (0..m0.weights.len())
            .filter(|&i| m0.weights[i] > 0.0 && range_mass(&cum, &m0.beta[i]) < VANISHING_MASS)
            .collect();
        if depth >= MAX_DEPTH || small.is_empty() {
            return Err(err);
        }
        for &i in &small {
            for &(lo, hi) in &m0.beta[i] {
                q[lo..=hi].iter_mut().for_each(|x| *x = 0.0);
                frozen[lo..=hi].iter_mut().for_each(|x| *x = true);
            }
        }
        if !(q.iter().sum::<f64>() > 0.0) {
            return Err(err);
        }
        normalize(&mut q);
        v = vanishing(m, &q);
    }
    let ll0 = np_loglik(&without(m, &v), &q);
    let ll1 = if v.is_empty() {
        0.0
    } else {
        // the dropped records must still have empty truncation sets
        let cum = prefix(&q);
        if v.iter().any(|&i| range_mass(&cum, &m.beta[i]) > 0.0) {
            return Err(Error::MaxIter(*it));
        }
        let m1 = restrict_to_zero(m, &q, &v);
        let k = m1.beta.iter().flatten().map(|&(_, hi)| hi + 1).max().unwrap_or(0);
        let mut p1 = vec![1.0 / k as f64; k];
        let mut it1 = 0;
        let ll1 = solve(&m1, &mut p1, opts, &mut it1, trace, depth + 1)?;
        *it += it1;
        ll1
    };
    *p = q;
    Ok(ll0 + ll1)
}

/// EM iterations until the optimality conditions hold; `p` is updated in place.
///
/// `frozen` intervals stay at zero and are left out of the optimality check.
fn em_certify(
    m: &Membership,
    p: &mut Vec<f64>,
    frozen: &[bool],
    opts: &EmOptions,
    it: &mut usize,
    trace: &mut Vec<f64>,
) -> Result<()> {
    if opts.trace && !trace.is_empty() {
        trace.push(f64::NAN);
    }
    let n = p.len();
    let total_w: f64 = m.weights.iter().sum();
    let mut next = vec![0.0; n];
    let mut prev = p.clone();
    let mut ll = np_loglik(m, p);
    let mut rounds = 0;
    let mut escapes = 0;
    loop {
        let mut delta = f64::INFINITY;
        let block_end = *it + EM_BLOCK;
        while *it < opts.max_iter.min(block_end) {
            *it += 1;
            em_step(m, p, &mut next);
            delta = p.iter().zip(&next).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            prev.copy_from_slice(p);
            p.copy_from_slice(&next);
            let new_ll = np_loglik(m, p);
            debug_assert!(
                new_ll >= ll - 1e-9 * ll.abs().max(1.0),
                "EM decreased the log likelihood: {ll} -> {new_ll}"
            );
            ll = new_ll;
            if *it % 100 == 0 {
                // step doubling, kept only when it increases the likelihood
                let trial: Vec<f64> = p.iter().zip(&prev).map(|(a, b)| (2.0 * a - b).max(0.0)).collect();
                let s: f64 = trial.iter().sum();
                let trial: Vec<f64> = trial.iter().map(|v| v / s).collect();
                let tl = np_loglik(m, &trial);
                if tl > ll {
                    *p = trial;
                    ll = tl;
                }
            }
            if opts.trace {
                trace.push(ll);
            }
            if delta < opts.tol {
                break;
            }
        }
        // drop negligible masses, then certify
        let mut pruned = false;
        for v in p.iter_mut() {
            if *v < 1e-12 && *v > 0.0 {
                *v = 0.0;
                pruned = true;
            }
        }
        if pruned {
            normalize(p);
            ll = np_loglik(m, p);
        }
        let g = np_gradient(m, p);
        let scale = total_w.max(f64::MIN_POSITIVE);
        let ok = ll.is_finite()
            && (0..n).filter(|&j| !frozen[j]).all(|j| {
                let gj = g[j] / scale;
                gj <= opts.kkt_tol && (p[j] == 0.0 || gj.abs() <= opts.kkt_tol)
            });
        if ok {
            newton_polish(m, p);
            // first-order conditions also hold at saddles of the truncated likelihood
            if escapes < MAX_ESCAPES && escape_saddle(m, p) {
                escapes += 1;
                ll = np_loglik(m, p);
                if opts.trace {
                    trace.push(ll);
                }
                prev.copy_from_slice(p);
                continue;
            }
            return Ok(());
        }
        // coordinates with a negative gradient belong on the boundary; once EM has stalled they
        // are only creeping toward it, whatever their mass
        let stalled = delta < opts.tol;
        let saved = p.clone();
        let mut changed = false;
        for j in 0..n {
            if p[j] > 0.0 && (p[j] < 1e-6 || stalled) && g[j] / scale < -opts.kkt_tol {
                p[j] = 0.0;
                changed = true;
            }
        }
        if changed {
            normalize(p);
            let trial = np_loglik(m, p);
            if trial.is_finite() {
                ll = trial;
            } else {
                p.copy_from_slice(&saved);
                changed = false;
            }
        }
        if !changed && !stalled {
            // EM is still crawling; jump to the boundary when that already pays off
            let mut trial = p.clone();
            for j in 0..n {
                if g[j] / scale < -opts.kkt_tol {
                    trial[j] = 0.0;
                }
            }
            if trial != *p && trial.iter().sum::<f64>() > 0.0 {
                normalize(&mut trial);
                let tl = np_loglik(m, &trial);
                if tl > ll {
                    *p = trial;
                    ll = tl;
                    changed = true;
                }
            }
        }
        rounds += 1;
        if *it >= opts.max_iter || rounds > 1000 {
            return Err(Error::MaxIter(*it));
        }
        // zero masses stay zero under EM; revive coordinates with a positive gradient
        for j in 0..n {
            if p[j] == 0.0 && !frozen[j] && g[j] / scale > opts.kkt_tol {
                p[j] = 1e-8;
                changed = true;
            }
        }
        if changed {
            normalize(p);
            ll = np_loglik(m, p);
        }
    }
}

/// Newton steps on the face spanned by the support, keeping the total mass at one.
///
/// EM converges linearly; this sharpens a certified solution. Steps that leave the
/// face or lower the likelihood are discarded.
fn newton_polish(m: &Membership, p: &mut [f64]) {
    let support: Vec<usize> = (0..p.len()).filter(|&j| p[j] > 0.0).collect();
    let k = support.len();
    if k < 2 || k > 400 {
        return;
    }
    let pos: Vec<Option<usize>> = {
        let mut v = vec![None; p.len()];
        support.iter().enumerate().for_each(|(i, &j)| v[j] = Some(i));
        v
    };
    let mut ll = np_loglik(m, p);
    for _ in 0..5 {
        let g = np_gradient(m, p);
        let mut a = support_hessian(m, p, &pos, k + 1);
        for r in 0..k {
            a[(r, k)] = 1.0;
            a[(k, r)] = 1.0;
        }
        let rhs = nalgebra::DVector::from_iterator(k + 1, support.iter().map(|&j| -g[j]).chain([0.0]));
        let Some(d) = a.lu().solve(&rhs) else { return };
        let trial: Vec<f64> = (0..p.len()).map(|j| pos[j].map_or(0.0, |r| p[j] + d[r])).collect();
        if support.iter().any(|&j| !(trial[j] > 0.0)) {
            return;
        }
        let tl = np_loglik(m, &trial);
        if !(tl >= ll - 1e-12 * ll.abs().max(1.0)) {
            return;
        }
        let step = support.iter().fold(0.0f64, |acc, &j| acc.max((trial[j] - p[j]).abs()));
        p.copy_from_slice(&trial);
        normalize(p);
        ll = tl;
        if step < 1e-15 {
            return;
        }
    }
}

/// Hessian of the log likelihood in the support coordinates, padded to `dim` rows.
fn support_hessian(m: &Membership, p: &[f64], pos: &[Option<usize>], dim: usize) -> nalgebra::DMatrix<f64> {
    let cum = prefix(p);
    let mut a = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for i in 0..m.weights.len() {
        let w = m.weights[i];
        if w == 0.0 {
            continue;
        }
        for (ranges, sign) in [(&m.alpha[i], -1.0), (&m.beta[i], 1.0)] {
            let mass = range_mass(&cum, ranges);
            let idx: Vec<usize> = ranges.iter().flat_map(|&(lo, hi)| lo..=hi).filter_map(|j| pos[j]).collect();
            let c = sign * w / (mass * mass);
            for &r in &idx {
                for &s in &idx {
                    a[(r, s)] += c;
                }
            }
        }
    }
    a
}

/// Leaves a saddle point along the direction of largest curvature within the simplex.
///
/// Returns whether `p` moved to a point with a higher likelihood.
fn escape_saddle(m: &Membership, p: &mut [f64]) -> bool {
    let support: Vec<usize> = (0..p.len()).filter(|&j| p[j] > 0.0).collect();
    let k = support.len();
    if k < 2 || k > 400 {
        return false;
    }
    let mut pos = vec![None; p.len()];
    support.iter().enumerate().for_each(|(i, &j)| pos[j] = Some(i));
    let h = support_hessian(m, p, &pos, k);
    let proj = nalgebra::DMatrix::<f64>::identity(k, k) - nalgebra::DMatrix::from_element(k, k, 1.0 / k as f64);
    let ph = &proj * h * &proj;
    let scale = ph.amax().max(f64::MIN_POSITIVE);
    let eig = ph.symmetric_eigen();
    let (top, &lambda) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if lambda <= 1e-8 * scale {
        return false;
    }
    let v = &proj * eig.eigenvectors.column(top);
    let ll = np_loglik(m, p);
    for sign in [1.0, -1.0] {
        let t_max = (0..k)
            .filter(|&r| sign * v[r] < 0.0)
            .map(|r| p[support[r]] / (-sign * v[r]))
            .fold(f64::INFINITY, f64::min);
        if !t_max.is_finite() {
            continue;
        }
        let mut t = t_max;
        for _ in 0..40 {
            let mut trial = p.to_vec();
            for r in 0..k {
                trial[support[r]] = (p[support[r]] + t * sign * v[r]).max(0.0);
            }
            if t == t_max {
                // the blocking coordinate lands exactly on the boundary
                for r in 0..k {
                    if sign * v[r] < 0.0 && p[support[r]] / (-sign * v[r]) == t_max {
                        trial[support[r]] = 0.0;
                    }
                }
            }
            normalize(&mut trial);
            let tl = np_loglik(m, &trial);
            if tl > ll + 1e-12 * ll.abs().max(1.0) {
                p.copy_from_slice(&trial);
                return true;
            }
            t *= 0.5;
        }
    }
    false
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
}

/// Turnbull intervals plus EM with default settings.
pub fn npmle(d: &Dataset) -> Result<StepCDF> {
    let iv = turnbull_intervals(d)?;
    em_fit_with(d, &iv, &EmOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktViolation {
    pub index: usize,
    pub mass: f64,
    pub gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub passed: bool,
    /// Lagrange multiplier of the simplex constraint (zero because `ℓ` is scale invariant).
    pub multiplier: f64,
    pub max_gradient: f64,
    pub violations: Vec<KktViolation>,
}

/// Check the optimality conditions of `scdf` (masses in interval order) against the data.
pub fn kkt_check(scdf: &StepCDF, d: &Dataset) -> Result<KktReport> {
    kkt_check_tol(scdf, d, 1e-6)
}

pub fn kkt_check_tol(scdf: &StepCDF, d: &Dataset, tol: f64) -> Result<KktReport> {
    let iv = match &scdf.intervals {
        Some(iv) => iv.clone(),
        None => turnbull_intervals(d)?,
    };
    if iv.len() != scdf.p.len() {
        return Err(Error::InvalidArgument("masses do not match the Turnbull intervals".into()));
    }
    let full = membership(d, &iv)?;
    // records with empty truncation sets are certified by fitting them on the empty intervals
    let v = vanishing(&full, &scdf.p);
    let m = without(&full, &v);
    let mut frozen = vec![false; scdf.p.len()];
    for &i in &v {
        for &(lo, hi) in &full.beta[i] {
            frozen[lo..=hi].iter_mut().for_each(|x| *x = true);
        }
    }
    let limit_ok = v.is_empty() || {
        let m1 = restrict_to_zero(&full, &scdf.p, &v);
        let k = m1.beta.iter().flatten().map(|&(_, hi)| hi + 1).max().unwrap_or(0);
        let mut p1 = vec![1.0 / k as f64; k];
        let opts = EmOptions { kkt_tol: tol, ..EmOptions::default() };
        solve(&m1, &mut p1, &opts, &mut 0, &mut Vec::new(), 1).is_ok()
    };
    let w: f64 = m.weights.iter().sum();
    let g = np_gradient(&m, &scdf.p);
    let mut violations = Vec::new();
    let mut max_gradient = f64::NEG_INFINITY;
    for (j, gj) in g.iter().enumerate().filter(|&(j, _)| !frozen[j]) {
        let gj = gj / w;
        max_gradient = max_gradient.max(gj);
        let bad = gj > tol || (scdf.p[j] > 0.0 && gj.abs() > tol);
        if bad {
            violations.push(KktViolation {
                index: j,
                mass: scdf.p[j],
                gradient: gj,
            });
        }
    }
    Ok(KktReport {
        passed: limit_ok && violations.is_empty(),
        multiplier: 0.0,
        max_gradient,
        violations,
    })
}

/// Evaluate the estimated distribution function at `t`.
pub fn eval_cdf(scdf: &StepCDF, t: f64, convention: Convention) -> f64 {
    let mut acc = 0.0;
    for j in 0..scdf.p.len() {
        let (a, b) = (scdf.a[j], scdf.b[j]);
        let after_a = if scdf.left_open[j] { t > a } else { t >= a };
        if !after_a {
            break;
        }
        if t > b {
            acc += scdf.p[j];
            continue;
        }
        acc += match convention {
            Convention::Left => 0.0,
            Convention::Right => scdf.p[j],
            Convention::Interpolate => {
                let frac = if b > a && b.is_finite() { (t - a) / (b - a) } else { 1.0 };
                scdf.p[j] * frac.clamp(0.0, 1.0)
            }
        };
        break;
    }
    acc.min(1.0)
}

impl StepCDF {
    pub fn eval(&self, t: f64) -> f64 {
        eval_cdf(self, t, self.convention)
    }

    pub fn with_convention(mut self, c: Convention) -> Self {
        self.convention = c;
        self
    }
}
