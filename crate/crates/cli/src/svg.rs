//! Self-contained SVG line plot of a coefficient function with its band.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

pub struct Curve<'a> {
    pub title: &'a str,
    pub x: &'a [f64],
    pub estimate: &'a [f64],
    pub band: Option<(&'a [f64], &'a [f64])>,
    pub gridlines: &'a [f64],
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(c: &Curve) -> String {
    let (x0, x1) = range(c.x.iter().copied().chain([0.0]));
    let mut ys: Vec<f64> = c.estimate.to_vec();
    ys.push(0.0);
    if let Some((lo, hi)) = c.band {
        ys.extend_from_slice(lo);
        ys.extend_from_slice(hi);
    }
    let (y0, y1) = range(ys.into_iter());
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(c.title)
    );
    if let Some((lo, hi)) = c.band {
        let mut pts: Vec<String> = c
            .x
            .iter()
            .zip(hi)
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        pts.extend(
            c.x.iter()
                .zip(lo)
                .rev()
                .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))),
        );
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##,
            pts.join(" ")
        );
    }
    for &g in c.gridlines.iter().filter(|&&g| g > x0 && g < x1) {
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
            sx(g),
            sy(y1),
            sy(y0)
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#555">{g}</text>"##,
            sx(g),
            MARGIN - 6.0
        );
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="#444"/>"##,
            sx(x0),
            sy(0.0),
            sx(x1)
        );
    }
    let line: Vec<String> = c
        .x
        .iter()
        .zip(c.estimate)
        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        line.join(" ")
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{:.1}" height="{:.1}" fill="none" stroke="#000"/>"##,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for k in 0..=4 {
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let yv = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.0}</text>"#,
            sx(xv),
            H - MARGIN + 16.0,
            xv
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            MARGIN - 4.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">counts per minute</text>"#,
        W / 2.0,
        H - 12.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_band_and_gridlines() {
        let x = [50.0, 150.0, 5000.0, 7000.0];
        let f = [0.0, 0.1, -0.2, 0.3];
        let lo = [-0.1, 0.0, -0.3, 0.1];
        let hi = [0.1, 0.2, -0.1, 0.5];
        let s = render(&Curve {
            title: "f(hist) <a>",
            x: &x,
            estimate: &f,
            band: Some((&lo, &hi)),
            gridlines: &[200.0, 3600.0, 6200.0],
        });
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("stroke-dasharray").count(), 3);
        assert!(s.contains("<polygon"));
        assert!(s.contains("&lt;a&gt;"));
    }
}
