//! Template-based SVG emission for the benchmark reports: grouped box
//! plots (median/quartiles with min–max whiskers) and difference
//! heatmaps with ground-truth magnitude outlines. No plotting
//! dependency; output strings are deterministic for fixed inputs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

const PALETTE: [&str; 4] = ["#4878d0", "#ee854a", "#6acc64", "#d65f5f"];

/// Five-number summary driving one box glyph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    /// Five-number summary of a sample; quartiles by linear
    /// interpolation on the sorted values.
    pub fn from_samples(values: &[f64]) -> Option<BoxStats> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let quantile = |q: f64| -> f64 {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        };
        Some(BoxStats {
            min: sorted[0],
            q1: quantile(0.25),
            median: quantile(0.5),
            q3: quantile(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// One series of boxes (a method) across the x-axis groups (d values).
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub boxes: Vec<Option<BoxStats>>,
}

/// One panel: a titled axis with grouped boxes.
#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub group_labels: Vec<String>,
    pub series: Vec<Series>,
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn render_panel(out: &mut String, panel: &Panel, x0: f64, y0: f64, w: f64, h: f64) {
    let margin_left = 52.0;
    let margin_bottom = 30.0;
    let margin_top = 24.0;
    let plot_w = w - margin_left - 10.0;
    let plot_h = h - margin_top - margin_bottom;
    let px0 = x0 + margin_left;
    let py0 = y0 + margin_top;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &panel.series {
        for b in s.boxes.iter().flatten() {
            lo = lo.min(b.min);
            hi = hi.max(b.max);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = (hi - lo) * 0.08;
    let (lo, hi) = (lo - pad, hi + pad);
    let y_of = |v: f64| py0 + plot_h - (v - lo) / (hi - lo) * plot_h;

    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" font-weight="bold" text-anchor="middle">{}</text>"#,
        px0 + plot_w / 2.0,
        y0 + 14.0,
        panel.title
    );
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        x0 + 12.0,
        py0 + plot_h / 2.0,
        x0 + 12.0,
        py0 + plot_h / 2.0,
        panel.y_label
    );

    // Frame and y ticks.
    let _ = write!(
        out,
        r#"<rect x="{px0:.1}" y="{py0:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="rgb(51,51,51)" stroke-width="0.8"/>"#
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_of(v);
        let _ = write!(
            out,
            r#"<line x1="{px0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="rgb(221,221,221)" stroke-width="0.5"/><text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{}</text>"#,
            px0 + plot_w,
            px0 - 4.0,
            y + 3.0,
            fmt_tick(v)
        );
    }

    let groups = panel.group_labels.len().max(1) as f64;
    let group_w = plot_w / groups;
    let n_series = panel.series.len().max(1) as f64;
    let box_w = (group_w * 0.7 / n_series).min(28.0);

    for (gi, label) in panel.group_labels.iter().enumerate() {
        let gx = px0 + group_w * (gi as f64 + 0.5);
        let _ = write!(
            out,
            r#"<text x="{gx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{label}</text>"#,
            py0 + plot_h + 14.0
        );
        for (si, series) in panel.series.iter().enumerate() {
            let Some(b) = series.boxes.get(gi).copied().flatten() else { continue };
            let color = PALETTE[si % PALETTE.len()];
            let cx = gx + box_w * (si as f64 - (n_series - 1.0) / 2.0);
            let half = box_w * 0.42;
            // Whiskers.
            let _ = write!(
                out,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}" stroke-width="1"/>"#,
                y_of(b.max),
                y_of(b.q3)
            );
            let _ = write!(
                out,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}" stroke-width="1"/>"#,
                y_of(b.q1),
                y_of(b.min)
            );
            for v in [b.min, b.max] {
                let _ = write!(
                    out,
                    r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="1"/>"#,
                    cx - half * 0.6,
                    y_of(v),
                    cx + half * 0.6,
                    y_of(v)
                );
            }
            // Box and median.
            let _ = write!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="1.2"/>"#,
                cx - half,
                y_of(b.q3),
                2.0 * half,
                (y_of(b.q1) - y_of(b.q3)).max(0.5)
            );
            let _ = write!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
                cx - half,
                y_of(b.median),
                cx + half,
                y_of(b.median)
            );
        }
    }
}

/// A 2×2 figure of box panels (or fewer), with a shared legend.
pub fn box_figure(panels: &[Panel], caption: &str) -> String {
    let panel_w = 360.0;
    let panel_h = 260.0;
    let cols = 2.min(panels.len()).max(1);
    let rows = panels.len().div_ceil(cols);
    let legend_h = 28.0;
    let width = panel_w * cols as f64;
    let height = panel_h * rows as f64 + legend_h + 18.0;

    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="Helvetica, Arial, sans-serif"><rect width="100%" height="100%" fill="white"/>"#
    );
    // Legend from the first panel's series.
    if let Some(first) = panels.first() {
        let mut x = 16.0;
        for (si, series) in first.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let _ = write!(
                out,
                r#"<rect x="{x:.1}" y="9" width="14" height="10" fill="{color}" fill-opacity="0.5" stroke="{color}"/><text x="{:.1}" y="18" font-size="11">{}</text>"#,
                x + 18.0,
                series.label
            );
            x += 26.0 + 7.0 * series.label.len() as f64;
        }
    }
    for (k, panel) in panels.iter().enumerate() {
        let col = k % cols;
        let row = k / cols;
        render_panel(
            &mut out,
            panel,
            panel_w * col as f64,
            legend_h + panel_h * row as f64,
            panel_w,
            panel_h,
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" fill="rgb(85,85,85)">{caption}</text>"#,
        width / 2.0,
        height - 6.0
    );
    out.push_str("</svg>\n");
    out
}

/// Diverging color for a value in [-1, 1]: blue for negative, red for
/// positive, white at zero.
fn diverging_color(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let u = -t;
        (
            (255.0 * (1.0 - u) + 33.0 * u) as u8,
            (255.0 * (1.0 - u) + 102.0 * u) as u8,
            (255.0 * (1.0 - u) + 172.0 * u) as u8,
        )
    } else {
        (
            (255.0 * (1.0 - t) + 178.0 * t) as u8,
            (255.0 * (1.0 - t) + 24.0 * t) as u8,
            (255.0 * (1.0 - t) + 43.0 * t) as u8,
        )
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of `estimate - truth` magnitudes with gray cell outlines whose
/// stroke width scales with the ground-truth magnitude.
pub fn difference_heatmap(estimate: &Array2<f64>, truth_abs: &Array2<f64>, title: &str) -> String {
    let d = estimate.nrows();
    assert_eq!(estimate.dim(), truth_abs.dim());
    let cell = 34.0;
    let margin = 48.0;
    let size = margin + d as f64 * cell + 16.0;
    let diff = estimate - truth_abs;
    let scale = diff.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
    let truth_max = truth_abs.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);

    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{:.0}" viewBox="0 0 {size:.0} {:.0}" font-family="Helvetica, Arial, sans-serif"><rect width="100%" height="100%" fill="white"/><text x="{:.1}" y="16" font-size="13" font-weight="bold" text-anchor="middle">{title}</text>"#,
        size + 14.0,
        size + 14.0,
        size / 2.0
    );
    for i in 0..d {
        // Row/column labels (source on the left, target on top).
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">x{i}</text><text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">x{i}</text>"#,
            margin - 5.0,
            margin + i as f64 * cell + cell * 0.62,
            margin + i as f64 * cell + cell / 2.0,
            margin - 6.0
        );
        for j in 0..d {
            let x = margin + j as f64 * cell;
            let y = margin + i as f64 * cell;
            let fill = diverging_color(diff[(i, j)] / scale);
            let outline = 0.4 + 3.6 * truth_abs[(i, j)].abs() / truth_max;
            let _ = write!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{fill}" stroke="rgb(136,136,136)" stroke-width="{outline:.2}"/>"#
            );
            let _ = write!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="8" text-anchor="middle" fill="rgb(34,34,34)">{:.2}</text>"#,
                x + cell / 2.0,
                y + cell * 0.58,
                diff[(i, j)]
            );
        }
    }
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle" fill="rgb(85,85,85)">cell: estimate − |truth|; outline width ∝ |truth|; color scale ±{scale:.2}</text>"#,
        size / 2.0,
        size + 8.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn box_stats_quartiles_by_interpolation() {
        let b = BoxStats::from_samples(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(b.min, 1.0);
        assert_eq!(b.max, 4.0);
        assert_eq!(b.median, 2.5);
        assert_eq!(b.q1, 1.75);
        assert_eq!(b.q3, 3.25);
        assert!(BoxStats::from_samples(&[]).is_none());
    }

    #[test]
    fn figure_is_valid_svg_and_deterministic() {
        let panel = Panel {
            title: "SID".into(),
            y_label: "SID".into(),
            group_labels: vec!["d=10".into()],
            series: vec![Series {
                label: "dagma-dce".into(),
                boxes: vec![BoxStats::from_samples(&[1.0, 2.0, 3.0, 4.0, 10.0])],
            }],
        };
        let a = box_figure(&[panel.clone()], "test caption");
        let b = box_figure(&[panel], "test caption");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("dagma-dce"));
    }

    #[test]
    fn heatmap_marks_scale_and_outline() {
        let est = array![[0.0, 1.5], [0.2, 0.0]];
        let truth = array![[0.0, 2.0], [0.0, 0.0]];
        let svg = difference_heatmap(&est, &truth, "demo");
        assert!(svg.contains("demo"));
        assert!(svg.contains("</svg>"));
    }
}
