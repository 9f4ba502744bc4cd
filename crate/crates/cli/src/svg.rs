//! Minimal line-chart emitter: one stacked panel per series, each with axes,
//! extreme-value labels and a polyline.

use std::fmt::Write;

const WIDTH: f64 = 560.0;
const PANEL: f64 = 200.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 40.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub fn line_chart(x_label: &str, series: &[Series]) -> String {
    let height = series.len() as f64 * (PANEL + MARGIN_TOP + MARGIN_BOTTOM);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (i, s) in series.iter().enumerate() {
        let top = i as f64 * (PANEL + MARGIN_TOP + MARGIN_BOTTOM) + MARGIN_TOP;
        panel(&mut svg, top, x_label, s);
    }
    svg.push_str("</svg>\n");
    svg
}

fn panel(svg: &mut String, top: f64, x_label: &str, series: &Series) {
    let finite: Vec<(f64, f64)> = series
        .points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let left = MARGIN_LEFT;
    let right = WIDTH - MARGIN_RIGHT;
    let bottom = top + PANEL;
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="{:.1}" font-weight="bold">{}</text>"#,
        top - 10.0,
        escape(series.name)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        bottom + 32.0,
        escape(x_label)
    );
    if finite.is_empty() {
        return;
    }
    let (x_min, x_max) = extent(finite.iter().map(|p| p.0));
    let (y_min, y_max) = extent(finite.iter().map(|p| p.1));
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * (right - left);
    let sy = |y: f64| bottom - (y - y_min) / (y_max - y_min) * PANEL;

    let labels = [
        (left, bottom + 14.0, "middle", x_min),
        (right, bottom + 14.0, "middle", x_max),
        (left - 4.0, bottom, "end", y_min),
        (left - 4.0, top + 4.0, "end", y_max),
    ];
    for (x, y, anchor, value) in labels {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{}</text>"#,
            short(value)
        );
    }
    let coords: Vec<String> = finite
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        coords.join(" ")
    );
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

fn short(value: f64) -> String {
    if value != 0.0 && (value.abs() < 1e-3 || value.abs() >= 1e4) {
        format!("{value:.3e}")
    } else {
        format!("{value:.4}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let chart = line_chart(
            "H",
            &[
                Series {
                    name: "K",
                    points: vec![(0.0, 1.0), (1.0, 2.0)],
                },
                Series {
                    name: "P",
                    points: vec![(0.0, 3.0), (1.0, 3.0)],
                },
            ],
        );
        assert!(chart.starts_with("<svg"));
        assert_eq!(chart.matches("<polyline").count(), 2);
    }

    #[test]
    fn empty_series_still_draws_axes() {
        let chart = line_chart(
            "x",
            &[Series {
                name: "a<b",
                points: vec![(f64::NAN, 1.0)],
            }],
        );
        assert!(chart.contains("a&lt;b"));
        assert!(!chart.contains("<polyline"));
    }
}
