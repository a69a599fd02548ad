//! Minimal line charts over stage index, written as standalone SVG.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Chart<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub y_range: (f64, f64),
    pub series: Vec<(&'a str, Vec<(f64, f64)>)>,
    /// `(x, low, high)` shaded behind the first series.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

impl Chart<'_> {
    fn x_range(&self) -> (f64, f64) {
        let xs = self.series.iter().flat_map(|s| s.1.iter().map(|p| p.0));
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (0.0, 1.0)
        }
    }

    pub fn render(&self) -> String {
        let (l, r, t, b) = MARGIN;
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range;
        let px = |x: f64| l + (x - x0) / (x1 - x0) * (WIDTH - l - r);
        let py = |y: f64| HEIGHT - b - (y.clamp(y0, y1) - y0) / (y1 - y0) * (HEIGHT - t - b);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(self.title));

        for i in 0..=4 {
            let y = y0 + (y1 - y0) * f64::from(i) / 4.0;
            let _ = writeln!(
                s,
                r##"<line x1="{l}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#ddd"/><text x="{2}" y="{3:.1}" text-anchor="end">{y:.2}</text>"##,
                py(y),
                WIDTH - r,
                l - 6.0,
                py(y) + 4.0
            );
        }
        let step = ((x1 - x0) / 10.0).ceil().max(1.0);
        let mut x = x0.ceil();
        while x <= x1 {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                px(x),
                HEIGHT - b + 16.0,
                fmt_tick(x)
            );
            x += step;
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{l},{t} {l},{0} {1},{0}" fill="none" stroke="black"/>"#,
            HEIGHT - b,
            WIDTH - r
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">stage k</text>"#, (l + WIDTH - r) / 2.0, HEIGHT - 10.0);
        let _ = writeln!(
            s,
            r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
            (t + HEIGHT - b) / 2.0,
            escape(self.y_label)
        );

        if let Some(band) = self.band.as_ref().filter(|b| !b.is_empty()) {
            let upper = band.iter().map(|&(x, _, hi)| format!("{:.1},{:.1}", px(x), py(hi)));
            let lower = band.iter().rev().map(|&(x, lo, _)| format!("{:.1},{:.1}", px(x), py(lo)));
            let pts: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(s, r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "), COLORS[0]);
        }
        for (i, (name, pts)) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<String> = pts
                .iter()
                .filter(|p| p.1.is_finite())
                .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                .collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, coords.join(" "));
            let ly = t + 8.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
                WIDTH - r - 90.0,
                WIDTH - r - 70.0,
                WIDTH - r - 64.0,
                ly + 4.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.1}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
