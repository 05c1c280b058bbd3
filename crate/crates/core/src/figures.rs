//! Deterministic SVG figures: the estimator concentration scatter and the
//! tangent-majorizer illustration.
//!
//! No chart dependency: fixed 800x600 canvas, 60 px margins, coordinates
//! rounded to 1e-6, elements tagged with stable ids and classes so the
//! structure is testable. Identical inputs produce byte-identical
//! documents.

use crate::error::{Error, Result};
use crate::estimators::iwlb_block_values;
use crate::models::ImportanceModel;
use crate::seeding::derive_stream_seed;
use crate::stats::{mean_of, quantile, Coupling};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const LOG_CURVE_POINTS: usize = 512;
const MAX_PLOTTED_POINTS: usize = 512;

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// Point cloud of one K level: pairs `(X_K, Y_K) = (exp(Y_K), Y_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationSeries {
    pub k: usize,
    pub points: Vec<(f64, f64)>,
}

/// Scatter data behind the concentration figure.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationData {
    pub series: Vec<ConcentrationSeries>,
}

/// Draws `points_per_k` estimator values at each K level.
pub fn concentration_data<M: ImportanceModel + ?Sized>(
    model: &M,
    k_grid: &[usize],
    points_per_k: usize,
    seed: u64,
) -> Result<ConcentrationData> {
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let mut series = Vec::with_capacity(grid.len());
    for &k in &grid {
        let stream_seed = derive_stream_seed(seed, "figure-concentration", k as u64);
        let ys = iwlb_block_values(model, k, points_per_k, stream_seed, Coupling::Iid)?;
        let points: Vec<(f64, f64)> = ys.iter().map(|&y| (y.exp(), y)).collect();
        if let Some(bad) = points.iter().find(|(x, _)| !x.is_finite()) {
            return Err(Error::NonFiniteInput {
                context: "concentration_data weight",
                value: bad.0,
            });
        }
        series.push(ConcentrationSeries { k, points });
    }
    Ok(ConcentrationData { series })
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn svg_header(out: &mut String, title: &str) {
    out.push_str(&format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>
<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>
"##,
        WIDTH / 2.0
    ));
}

fn svg_axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let left = MARGIN;
    let right = WIDTH - MARGIN;
    let top = MARGIN;
    let bottom = HEIGHT - MARGIN;
    out.push_str(&format!(
        r##"<g class="axes" stroke="#000000" stroke-width="1" font-family="sans-serif" font-size="11">
<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>
<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/>
"##
    ));
    for i in 0..=4 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0;
        let px = fmt(frame.px(fx));
        out.push_str(&format!(
            r#"<line x1="{px}" y1="{bottom}" x2="{px}" y2="{}"/>
<text x="{px}" y="{}" text-anchor="middle" stroke="none">{:.3}</text>
"#,
            bottom + 5.0,
            bottom + 18.0,
            fx
        ));
        let fy = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let py = fmt(frame.py(fy));
        out.push_str(&format!(
            r#"<line x1="{}" y1="{py}" x2="{left}" y2="{py}"/>
<text x="{}" y="{py}" text-anchor="end" dominant-baseline="middle" stroke="none">{:.3}</text>
"#,
            left - 5.0,
            left - 8.0,
            fy
        ));
    }
    out.push_str(&format!(
        r#"<text x="{}" y="{}" text-anchor="middle" stroke="none">{x_label}</text>
<text x="18" y="{}" text-anchor="middle" stroke="none" transform="rotate(-90 18 {})">{y_label}</text>
</g>
"#,
        (left + right) / 2.0,
        HEIGHT - 15.0,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    ));
}

/// Solid log curve sampled at 512 points across the frame's x range.
fn svg_log_curve(out: &mut String, frame: &Frame, color: &str) {
    let mut d = String::new();
    let mut pen_down = false;
    for i in 0..LOG_CURVE_POINTS {
        let x = frame.x_min.max(1e-320)
            + (frame.x_max - frame.x_min.max(1e-320)) * (i as f64 + 1.0) / LOG_CURVE_POINTS as f64;
        let y = x.ln();
        if y < frame.y_min || y > frame.y_max {
            pen_down = false;
            continue;
        }
        let cmd = if pen_down { 'L' } else { 'M' };
        d.push_str(&format!("{cmd}{} {} ", fmt(frame.px(x)), fmt(frame.py(y))));
        pen_down = true;
    }
    out.push_str(&format!(
        r#"<path id="log-curve" fill="none" stroke="{color}" stroke-width="1.5" d="{}"/>
"#,
        d.trim_end()
    ));
}

/// Scatter of `(X_K, Y_K)` clouds with dotted mean lines and the solid log
/// curve, matching the fixed axis policy:
/// x in [0, 0.999-quantile of all X], y clipped accordingly.
///
/// Needs at least two distinct K levels with at least 100 points each.
pub fn concentration_svg(data: &ConcentrationData) -> Result<String> {
    if data.series.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "concentration figure needs >= 2 distinct k levels, got {}",
            data.series.len()
        )));
    }
    for s in &data.series {
        if s.points.len() < 100 {
            return Err(Error::InsufficientData(format!(
                "concentration figure needs >= 100 points per k, got {} at k = {}",
                s.points.len(),
                s.k
            )));
        }
    }

    let all_x: Vec<f64> = data
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let all_y: Vec<f64> = data
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .collect();
    let x_max = quantile(&all_x, 0.999)?;
    let y_min = quantile(&all_y, 0.001)?;
    let y_max = x_max
        .ln()
        .max(all_y.iter().copied().fold(f64::MIN, f64::max));
    let frame = Frame {
        x_min: 0.0,
        x_max,
        y_min,
        y_max,
    };

    let mut out = String::new();
    svg_header(&mut out, "Concentration of the averaged estimator");
    svg_axes(&mut out, &frame, "X_K", "Y_K = log X_K");
    svg_log_curve(&mut out, &frame, "#333333");

    for (idx, s) in data.series.iter().enumerate() {
        let color = SERIES_COLORS[idx % SERIES_COLORS.len()];
        let mean_x = mean_of(&s.points.iter().map(|p| p.0).collect::<Vec<_>>());
        let mean_y = mean_of(&s.points.iter().map(|p| p.1).collect::<Vec<_>>());
        out.push_str(&format!(
            r#"<g class="series series-k{}" fill="{color}" stroke="{color}">
"#,
            s.k
        ));
        for &(x, y) in s.points.iter().take(MAX_PLOTTED_POINTS) {
            if frame.contains(x, y) {
                out.push_str(&format!(
                    r#"<circle cx="{}" cy="{}" r="2" stroke="none" fill-opacity="0.45"/>
"#,
                    fmt(frame.px(x)),
                    fmt(frame.py(y))
                ));
            }
        }
        if frame.contains(mean_x, frame.y_min) {
            out.push_str(&format!(
                r#"<line class="mean-line mean-line-x" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke-dasharray="4 3" fill="none"/>
"#,
                fmt(frame.py(frame.y_min)),
                fmt(frame.py(frame.y_max)),
                x = fmt(frame.px(mean_x)),
            ));
        }
        if mean_y >= frame.y_min && mean_y <= frame.y_max {
            out.push_str(&format!(
                r#"<line class="mean-line mean-line-y" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke-dasharray="4 3" fill="none"/>
"#,
                fmt(frame.px(frame.x_min)),
                fmt(frame.px(frame.x_max)),
                y = fmt(frame.py(mean_y)),
            ));
        }
        out.push_str(&format!(
            r#"<text x="{}" y="{}" stroke="none" font-family="sans-serif" font-size="12">K = {}</text>
</g>
"#,
            WIDTH - MARGIN - 90.0,
            MARGIN + 20.0 + 16.0 * idx as f64,
            s.k
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Quantities marking the tangent-line construction on one distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorizerParams {
    /// Median of X: the tangent point.
    pub nu_x: f64,
    /// Mean of X.
    pub mu_x: f64,
    /// Dispersion constant bounding |mu_x - nu_x|.
    pub c_x: f64,
    /// Mean of Y = log X.
    pub mu_y: f64,
}

/// Log curve, its tangent at `nu_x`, and the marked points of the
/// tangent-line bound construction.
pub fn majorizer_svg(p: &MajorizerParams) -> Result<String> {
    if !(p.nu_x > 0.0 && p.mu_x > 0.0) || !p.nu_x.is_finite() || !p.mu_x.is_finite() {
        return Err(Error::InsufficientData(
            "majorizer figure needs positive finite nu_x and mu_x".into(),
        ));
    }
    if !p.c_x.is_finite() || p.c_x < 0.0 {
        return Err(Error::InvalidDispersion(p.c_x));
    }
    let tangent = |x: f64| (x - p.nu_x) / p.nu_x + p.nu_x.ln();

    let x_hi = 1.25 * p.mu_x.max(p.nu_x + p.c_x).max(p.nu_x);
    let x_lo = x_hi / 50.0;
    let y_lo = x_lo.ln().min(p.mu_y) - 0.05 * (tangent(x_hi) - x_lo.ln()).abs();
    let y_hi = tangent(x_hi);
    let frame = Frame {
        x_min: x_lo,
        x_max: x_hi,
        y_min: y_lo,
        y_max: y_hi,
    };

    let mut out = String::new();
    svg_header(&mut out, "Tangent majorizer of log at the median");
    svg_axes(&mut out, &frame, "x", "log x");
    svg_log_curve(&mut out, &frame, "#1f77b4");

    // Tangent line across the full frame.
    out.push_str(&format!(
        r##"<line id="tangent-line" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#2ca02c" stroke-width="1.5"/>
"##,
        fmt(frame.px(x_lo)),
        fmt(frame.py(tangent(x_lo))),
        fmt(frame.px(x_hi)),
        fmt(frame.py(tangent(x_hi))),
    ));

    // Horizontal dashed line at mu_y: the estimator's expectation level.
    if p.mu_y >= frame.y_min && p.mu_y <= frame.y_max {
        out.push_str(&format!(
            r##"<line class="mean-line mean-line-y" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#555555" stroke-dasharray="4 3"/>
"##,
            fmt(frame.px(x_lo)),
            fmt(frame.px(x_hi)),
            y = fmt(frame.py(p.mu_y)),
        ));
    }

    // Marked x positions from the construction.
    let marks = [
        (p.nu_x, p.nu_x.ln(), "nu_X", "#1f77b4"),
        (p.mu_x, p.mu_x.ln(), "mu_X", "#d62728"),
        (
            p.nu_x + p.c_x,
            tangent(p.nu_x + p.c_x),
            "nu_X + C_X",
            "#2ca02c",
        ),
    ];
    for (x, y, label, color) in marks {
        if !frame.contains(x, y.max(frame.y_min)) {
            continue;
        }
        out.push_str(&format!(
            r#"<line class="marker-line" x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="{color}" stroke-dasharray="2 3"/>
<circle class="marker" cx="{px}" cy="{}" r="4" fill="{color}"/>
<text x="{px}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" fill="{color}">{label}</text>
"#,
            fmt(frame.py(frame.y_min)),
            fmt(frame.py(y)),
            fmt(frame.py(y)),
            fmt(frame.py(frame.y_min) + 16.0),
            px = fmt(frame.px(x)),
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}
