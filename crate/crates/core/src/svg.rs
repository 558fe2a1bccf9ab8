//! Minimal deterministic SVG figures.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gof::{PlotData, Reference};
use crate::inference::{ProfileCurve, ThresholdDiag};
use crate::npmle::StepCDF;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Points { x: Vec<f64>, y: Vec<f64> },
    Line { x: Vec<f64>, y: Vec<f64> },
    /// Right-continuous step function.
    Step { x: Vec<f64>, y: Vec<f64> },
    Band { x: Vec<f64>, lower: Vec<f64>, upper: Vec<f64> },
    /// Vertical interval at each `x`.
    Bars { x: Vec<f64>, lower: Vec<f64>, upper: Vec<f64> },
    /// `y = intercept + slope x`, dashed.
    Abline { intercept: f64, slope: f64 },
    /// Horizontal dashed line.
    Hline(f64),
}

impl Layer {
    fn extent(&self) -> Vec<(f64, f64)> {
        let zip = |x: &[f64], y: &[f64]| x.iter().copied().zip(y.iter().copied()).collect::<Vec<_>>();
        match self {
            Layer::Points { x, y } | Layer::Line { x, y } | Layer::Step { x, y } => zip(x, y),
            Layer::Band { x, lower, upper } | Layer::Bars { x, lower, upper } => {
                let mut v = zip(x, lower);
                v.extend(zip(x, upper));
                v
            }
            Layer::Abline { .. } => Vec::new(),
            Layer::Hline(y) => vec![(f64::NAN, *y)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Figure {
    pub title: String,
    pub xlab: String,
    pub ylab: String,
    pub layers: Vec<Layer>,
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

impl Figure {
    fn range(&self) -> Option<((f64, f64), (f64, f64))> {
        let pts: Vec<(f64, f64)> = self.layers.iter().flat_map(|l| l.extent()).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).filter(|v| v.is_finite()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).filter(|v| v.is_finite()).collect();
        if xs.is_empty() || ys.is_empty() {
            return None;
        }
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = if hi > lo { 0.04 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
            (lo - pad, hi + pad)
        };
        Some((span(&xs), span(&ys)))
    }

    /// Render to an SVG document; identical figures give identical bytes.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = WIDTH,
            h = HEIGHT
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let Some(((x0, x1), (y0, y1))) = self.range() else {
            s.push_str("</svg>\n");
            return s;
        };
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
        let clip_y = |y: f64| y.clamp(y0, y1);

        let _ = writeln!(s, r#"<defs><clipPath id="plot"><rect x="{}" y="{}" width="{}" height="{}"/></clipPath></defs>"#, LEFT, TOP, pw, ph);
        // axes
        let _ = writeln!(s, r#"<g stroke="black" stroke-width="1" fill="none">"#);
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#, LEFT, TOP, pw, ph);
        let xt = ticks(x0, x1);
        let yt = ticks(y0, y1);
        for &t in &xt {
            let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}"/>"#, fmt(sx(t)), fmt(TOP + ph), fmt(TOP + ph + 5.0));
        }
        for &t in &yt {
            let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}"/>"#, fmt(LEFT - 5.0), fmt(sy(t)), fmt(LEFT));
        }
        s.push_str("</g>\n");
        let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12" fill="black">"#);
        for &t in &xt {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, fmt(sx(t)), fmt(TOP + ph + 18.0), tick_label(t));
        }
        for &t in &yt {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, fmt(LEFT - 8.0), fmt(sy(t) + 4.0), tick_label(t));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, fmt(LEFT + pw / 2.0), fmt(HEIGHT - 15.0), escape(&self.xlab));
        let _ = writeln!(
            s,
            r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
            fmt(TOP + ph / 2.0),
            escape(&self.ylab)
        );
        if !self.title.is_empty() {
            let _ = writeln!(s, r#"<text x="{}" y="25" text-anchor="middle" font-size="14">{}</text>"#, fmt(WIDTH / 2.0), escape(&self.title));
        }
        s.push_str("</g>\n");

        let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
        for layer in &self.layers {
            match layer {
                Layer::Band { x, lower, upper } => {
                    let mut pts: Vec<String> = Vec::new();
                    for i in 0..x.len() {
                        if x[i].is_finite() && upper[i].is_finite() {
                            pts.push(format!("{},{}", fmt(sx(x[i])), fmt(sy(clip_y(upper[i])))));
                        }
                    }
                    for i in (0..x.len()).rev() {
                        if x[i].is_finite() && lower[i].is_finite() {
                            pts.push(format!("{},{}", fmt(sx(x[i])), fmt(sy(clip_y(lower[i])))));
                        }
                    }
                    if !pts.is_empty() {
                        let _ = writeln!(s, r##"<polygon points="{}" fill="#c6dbef" stroke="none"/>"##, pts.join(" "));
                    }
                }
                Layer::Abline { intercept, slope } => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="6,4"/>"#,
                        fmt(sx(x0)),
                        fmt(sy(intercept + slope * x0)),
                        fmt(sx(x1)),
                        fmt(sy(intercept + slope * x1))
                    );
                }
                Layer::Hline(y) => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{}" y1="{2}" x2="{}" y2="{2}" stroke="gray" stroke-dasharray="6,4"/>"#,
                        fmt(sx(x0)),
                        fmt(sx(x1)),
                        fmt(sy(*y))
                    );
                }
                Layer::Line { x, y } | Layer::Step { x, y } => {
                    let step = matches!(layer, Layer::Step { .. });
                    let mut pts: Vec<String> = Vec::new();
                    for i in 0..x.len() {
                        if !x[i].is_finite() || !y[i].is_finite() {
                            continue;
                        }
                        if step && i > 0 && y[i - 1].is_finite() {
                            pts.push(format!("{},{}", fmt(sx(x[i])), fmt(sy(y[i - 1]))));
                        }
                        pts.push(format!("{},{}", fmt(sx(x[i])), fmt(sy(y[i]))));
                    }
                    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#, pts.join(" "));
                }
                Layer::Bars { x, lower, upper } => {
                    for i in 0..x.len() {
                        if x[i].is_finite() && lower[i].is_finite() && upper[i].is_finite() {
                            let _ = writeln!(
                                s,
                                r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#,
                                fmt(sx(x[i])),
                                fmt(sy(lower[i])),
                                fmt(sy(upper[i]))
                            );
                        }
                    }
                }
                Layer::Points { x, y } => {
                    for i in 0..x.len() {
                        if x[i].is_finite() && y[i].is_finite() {
                            let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="2.5" fill="black"/>"#, fmt(sx(x[i])), fmt(sy(y[i])));
                        }
                    }
                }
            }
        }
        s.push_str("</g>\n</svg>\n");
        s
    }
}

impl From<&PlotData> for Figure {
    fn from(pd: &PlotData) -> Self {
        let mut layers = Vec::new();
        if pd.has_band() {
            layers.push(Layer::Band { x: pd.x.clone(), lower: pd.lower.clone(), upper: pd.upper.clone() });
        }
        layers.push(match pd.reference {
            Reference::Diagonal => Layer::Abline { intercept: 0.0, slope: 1.0 },
            Reference::Zero => Layer::Hline(0.0),
        });
        layers.push(Layer::Points { x: pd.x.clone(), y: pd.y.clone() });
        Figure {
            title: String::new(),
            xlab: pd.xlab.clone(),
            ylab: pd.ylab.clone(),
            layers,
        }
    }
}

impl From<&ProfileCurve> for Figure {
    fn from(pc: &ProfileCurve) -> Self {
        let rel: Vec<f64> = pc.loglik.iter().map(|l| l - pc.loglik_hat).collect();
        let cut = -0.5 * crate::math::chisq_quantile(pc.level, 1);
        Figure {
            title: String::new(),
            xlab: "endpoint".into(),
            ylab: "profile log likelihood".into(),
            layers: vec![Layer::Hline(cut), Layer::Line { x: pc.psi.clone(), y: rel }],
        }
    }
}

impl From<&StepCDF> for Figure {
    fn from(f: &StepCDF) -> Self {
        let mut x = vec![0.0f64.min(f.a.first().copied().unwrap_or(0.0))];
        let mut y = vec![0.0];
        let mut acc = 0.0;
        for j in 0..f.p.len() {
            acc += f.p[j];
            let at = if f.b[j].is_finite() { f.b[j] } else { f.a[j] };
            x.push(at);
            y.push(acc.min(1.0));
        }
        Figure {
            title: String::new(),
            xlab: "time".into(),
            ylab: "distribution function".into(),
            layers: vec![Layer::Step { x, y }],
        }
    }
}

impl From<&ThresholdDiag> for Figure {
    fn from(td: &ThresholdDiag) -> Self {
        let ok: Vec<_> = td.entries.iter().collect();
        let x: Vec<f64> = ok.iter().map(|e| e.thresh).collect();
        if ok.iter().any(|e| e.pvalue.is_some()) {
            let y: Vec<f64> = ok.iter().map(|e| e.pvalue.unwrap_or(f64::NAN)).collect();
            Figure {
                title: String::new(),
                xlab: "threshold".into(),
                ylab: "p-value".into(),
                layers: vec![
                    Layer::Hline(0.05),
                    Layer::Line { x: x.clone(), y: y.clone() },
                    Layer::Points { x, y },
                ],
            }
        } else {
            let nan = f64::NAN;
            Figure {
                title: String::new(),
                xlab: "threshold".into(),
                ylab: "shape".into(),
                layers: vec![
                    Layer::Bars {
                        x: x.clone(),
                        lower: ok.iter().map(|e| e.lower.unwrap_or(nan)).collect(),
                        upper: ok.iter().map(|e| e.upper.unwrap_or(nan)).collect(),
                    },
                    Layer::Points { x, y: ok.iter().map(|e| e.shape.unwrap_or(nan)).collect() },
                ],
            }
        }
    }
}

/// Write a figure to `path`.
pub fn write_svg(fig: &Figure, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), fig.render()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))
}

/// Write the diagnostic plot `pd` to `path`.
pub fn emit_svg(pd: &PlotData, path: impl AsRef<Path>) -> Result<()> {
    write_svg(&Figure::from(pd), path)
}
