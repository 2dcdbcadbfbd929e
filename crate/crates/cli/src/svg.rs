//! Minimal SVG line plots: a frame, a zero line and a few polylines.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Plot each series against its index. Output depends only on the input.
pub fn line_plot(title: &str, series: &[Series<'_>]) -> String {
    let finite = || series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite().fold((0.0_f64, 0.0_f64), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let len = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let x_of = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (len.max(2) - 1) as f64;
    let y_of = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let zero = y_of(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        WIDTH - MARGIN
    );
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="4" y="{:.2}" font-family="sans-serif" font-size="10">{:.3e}</text>"#,
        MARGIN + 4.0,
        hi
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="{:.2}" font-family="sans-serif" font-size="10">{:.3e}</text>"#,
        HEIGHT - MARGIN,
        lo
    );
    for (k, ser) in series.iter().enumerate() {
        let mut pts = String::new();
        for (i, v) in ser.values.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", x_of(i), y_of(*v));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            ser.color,
            pts.trim_end()
        );
        let ly = HEIGHT - 12.0;
        let lx = MARGIN + 120.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            ser.color
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 24.0,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polylines_have_one_point_per_finite_value() {
        let a = [0.0, 1.0, 0.5];
        let b = [0.2, f64::NAN, 0.1];
        let svg = line_plot("t <1>", &[
            Series { label: "a", color: "black", values: &a },
            Series { label: "b", color: "red", values: &b },
        ]);
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].matches(',').count(), 3);
        assert_eq!(lines[1].matches(',').count(), 2);
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn flat_data_does_not_divide_by_zero() {
        let svg = line_plot("flat", &[Series { label: "c", color: "blue", values: &[0.0; 4] }]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
