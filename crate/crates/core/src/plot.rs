//! Static SVG line plots, written by hand.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub struct Series<'a> {
    pub label: String,
    pub x: &'a [f64],
    pub y: Vec<f64>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// One polyline per series with axis extents labelled at the corners.
pub fn line_plot(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let labels = [
        (MARGIN, HEIGHT - MARGIN + 15.0, "start", format!("{x0:.3}")),
        (
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 15.0,
            "end",
            format!("{x1:.3}"),
        ),
        (MARGIN - 5.0, HEIGHT - MARGIN, "end", format!("{y0:.3e}")),
        (MARGIN - 5.0, MARGIN + 10.0, "end", format!("{y1:.3e}")),
        (WIDTH / 2.0, HEIGHT - 15.0, "middle", escape(x_label)),
    ];
    for (x, y, anchor, text) in labels {
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{text}</text>"#
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> =
            s.x.iter()
                .zip(&s.y)
                .filter(|(_, y)| y.is_finite())
                .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 110.0,
            MARGIN + 15.0 + 14.0 * i as f64,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_well_formed_and_deterministic() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let s = || {
            vec![Series {
                label: "q0 <cos>".into(),
                x: &x,
                y: x.iter().map(|t| t.cos()).collect(),
            }]
        };
        let a = line_plot("trajectory", "t", &s());
        assert_eq!(a, line_plot("trajectory", "t", &s()));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("&lt;cos&gt;"));
        assert_eq!(a.matches("<polyline").count(), 1);
    }

    #[test]
    fn flat_and_empty_series_do_not_divide_by_zero() {
        let x = [0.0, 1.0];
        let flat = line_plot(
            "flat",
            "t",
            &[Series {
                label: "c".into(),
                x: &x,
                y: vec![2.0, 2.0],
            }],
        );
        assert!(!flat.contains("NaN"));
        let empty = line_plot("none", "t", &[]);
        assert!(!empty.contains("NaN"));
    }
}
