//! Minimal SVG rendering of a rejection curve.

use std::fmt::Write;

use linsys::designs::RejectionCurve;

const W: f64 = 560.0;
const H: f64 = 400.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;

fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Direct method solid, screening dashed, the identified set shaded.
pub fn render(c: &RejectionCurve, band: Option<(f64, f64)>, title: Option<&str>) -> String {
    let (xmin, xmax) = c.grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (xmin, xmax) = if xmax > xmin { (xmin, xmax) } else { (xmin - 0.5, xmax + 0.5) };
    let px = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - y * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);

    if let Some((lo, hi)) = band {
        let (a, b) = (lo.max(xmin), hi.min(xmax));
        if b > a {
            let _ = writeln!(
                s,
                r#"<rect class="identified-set" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="silver"/>"#,
                px(a),
                py(1.0),
                px(b) - px(a),
                py(0.0) - py(1.0)
            );
        }
    }

    let _ = writeln!(
        s,
        r#"<polyline points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="black"/>"#,
        px(xmin),
        py(1.0),
        px(xmin),
        py(0.0),
        px(xmax),
        py(0.0)
    );
    for t in ticks(xmin, xmax, 8) {
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/>"#, px(t), py(0.0), py(0.0) + 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(t), py(0.0) + 18.0, label(t));
    }
    for t in ticks(0.0, 1.0, 5) {
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/>"#, px(xmin) - 4.0, py(t), px(xmin));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, px(xmin) - 8.0, py(t) + 4.0, label(t));
    }

    let line = |ys: &[f64], dash: &str, class: &str| -> String {
        let pts: Vec<String> = c.grid.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        format!(r#"<polyline class="{class}" points="{}" fill="none" stroke="black" stroke-width="1.5"{dash}/>"#, pts.join(" "))
    };
    let _ = writeln!(s, "{}", line(&c.reject_direct, "", "direct"));
    let _ = writeln!(s, "{}", line(&c.reject_screening, r#" stroke-dasharray="6,4""#, "screening"));

    let caption = title.map(escape).unwrap_or_else(|| format!("n = {}, {} reps", c.n, c.reps));
    let _ = writeln!(s, r#"<text x="{:.2}" y="20" text-anchor="middle">{caption}</text>"#, W / 2.0);
    let _ = writeln!(s, "</svg>");
    s
}
