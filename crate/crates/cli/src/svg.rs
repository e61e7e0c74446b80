//! Minimal static SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub const PALETTE: [&str; 2] = ["#1f77b4", "#d62728"];

pub struct Chart {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
}

impl Chart {
    pub fn new(title: &str, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) -> Self {
        let mut c = Self { body: String::new(), x, y };
        let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = write!(
            c.body,
            r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        c.text(W / 2.0, 24.0, title, "middle", 16);
        c.text(W / 2.0, H - 16.0, x_label, "middle", 13);
        let _ = write!(
            c.body,
            r#"<text x="18" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(y_label)
        );
        for i in 0..=4 {
            let v = y.0 + (y.1 - y.0) * i as f64 / 4.0;
            let py = c.py(v);
            let _ = write!(c.body, r##"<line x1="{l}" y1="{py:.2}" x2="{r}" y2="{py:.2}" stroke="#ddd"/>"##);
            c.text(l - 6.0, py + 4.0, &format!("{v:.2}"), "end", 11);
        }
        c
    }

    pub fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    pub fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    pub fn x_ticks(&mut self, ticks: &[(f64, String)]) {
        for (v, label) in ticks {
            let px = self.px(*v);
            self.text(px, H - BOTTOM + 16.0, label, "middle", 11);
        }
    }

    /// Labels rotated to fit long category names under the axis.
    pub fn x_categories(&mut self, labels: &[String]) {
        for (i, label) in labels.iter().enumerate() {
            let px = self.px(i as f64);
            let py = H - BOTTOM + 10.0;
            let _ = write!(
                self.body,
                r#"<text x="{px:.2}" y="{py}" font-size="9" text-anchor="end" transform="rotate(-35 {px:.2} {py})">{}</text>"#,
                escape(label)
            );
        }
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y))).collect();
        let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            path.join(" ")
        );
    }

    pub fn dot(&mut self, x: f64, y: f64, color: &str) {
        let _ = write!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.6"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    /// Horizontal segment of half-width `half` (data units) at `y`.
    pub fn tick(&mut self, x: f64, y: f64, half: f64, color: &str) {
        let _ = write!(
            self.body,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="{color}" stroke-width="3"/>"#,
            self.px(x - half),
            self.px(x + half),
            py = self.py(y)
        );
    }

    /// Horizontal bar from the y axis origin to `value`, centred at `y`.
    pub fn hbar(&mut self, y: f64, value: f64, color: &str) {
        let (x0, x1) = (self.px(self.x.0), self.px(value));
        let (a, b) = (self.py(y - 0.35), self.py(y + 0.35));
        let _ = write!(
            self.body,
            r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            b.min(a),
            (x1 - x0).max(0.0),
            (a - b).abs()
        );
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: u32) {
        let _ = write!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    pub fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = W - RIGHT - 110.0;
            let _ = write!(self.body, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/>"#, y - 9.0);
            self.text(x + 14.0, y, label, "start", 11);
        }
    }

    pub fn finish(self) -> String {
        format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">
<rect width="100%" height="100%" fill="white"/>
{}
</svg>
"#,
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_and_escaping() {
        let mut c = Chart::new("a < b", (0.0, 10.0), (0.0, 1.0), "x", "y");
        assert_eq!(c.px(0.0), LEFT);
        assert_eq!(c.px(10.0), W - RIGHT);
        assert_eq!(c.py(0.0), H - BOTTOM);
        assert_eq!(c.py(1.0), TOP);
        c.polyline(&[(0.0, 0.0), (10.0, 1.0)], "red", false);
        let svg = c.finish();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("<polyline"));
    }
}
