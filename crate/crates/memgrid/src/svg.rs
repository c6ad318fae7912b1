//! Minimal deterministic SVG line charts for dispatch traces, training
//! curves, and scenario envelopes. Output depends only on the input data,
//! so charts are reproducible byte for byte.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Shaded min/max band, drawn behind the line series.
#[derive(Debug, Clone)]
pub struct Band {
    pub label: String,
    pub x: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
}

fn fmt(v: f64) -> String {
    // Fixed precision keeps the output stable and diff-friendly.
    format!("{v:.2}")
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            ..Default::default()
        }
    }

    pub fn add_series(&mut self, label: &str, points: Vec<(f64, f64)>) {
        self.series.push(Series {
            label: label.to_string(),
            points,
        });
    }

    pub fn add_band(&mut self, label: &str, x: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) {
        self.bands.push(Band {
            label: label.to_string(),
            x,
            lo,
            hi,
        });
    }

    fn data_range(&self) -> ((f64, f64), (f64, f64)) {
        let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut feed = |x: f64, y: f64| {
            xr.0 = xr.0.min(x);
            xr.1 = xr.1.max(x);
            yr.0 = yr.0.min(y);
            yr.1 = yr.1.max(y);
        };
        for s in &self.series {
            for &(x, y) in &s.points {
                feed(x, y);
            }
        }
        for b in &self.bands {
            for i in 0..b.x.len() {
                feed(b.x[i], b.lo[i]);
                feed(b.x[i], b.hi[i]);
            }
        }
        if !xr.0.is_finite() {
            xr = (0.0, 1.0);
            yr = (0.0, 1.0);
        }
        if xr.0 == xr.1 {
            xr = (xr.0 - 0.5, xr.1 + 0.5);
        }
        if yr.0 == yr.1 {
            yr = (yr.0 - 0.5, yr.1 + 0.5);
        }
        (xr, yr)
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.data_range();
        let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(
            out,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        // Axes.
        let _ = writeln!(
            out,
            r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#,
            l = MARGIN_L,
            r = WIDTH - MARGIN_R,
            t = MARGIN_T,
            b = HEIGHT - MARGIN_B
        );
        // Axis ticks: 5 divisions each.
        for i in 0..=5 {
            let fx = x0 + (x1 - x0) * i as f64 / 5.0;
            let fy = y0 + (y1 - y0) * i as f64 / 5.0;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
                fmt(px(fx)),
                HEIGHT - MARGIN_B + 18.0,
                fmt(fx)
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
                MARGIN_L - 6.0,
                fmt(py(fy) + 4.0),
                fmt(fy)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );

        for (i, band) in self.bands.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut d = String::new();
            for j in 0..band.x.len() {
                let cmd = if j == 0 { 'M' } else { 'L' };
                let _ = write!(d, "{cmd}{},{} ", fmt(px(band.x[j])), fmt(py(band.hi[j])));
            }
            for j in (0..band.x.len()).rev() {
                let _ = write!(d, "L{},{} ", fmt(px(band.x[j])), fmt(py(band.lo[j])));
            }
            let _ = writeln!(
                out,
                r#"<path d="{}Z" fill="{color}" fill-opacity="0.25" stroke="none"><title>{}</title></path>"#,
                d,
                escape(&band.label)
            );
        }

        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[(self.bands.len() + i) % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y))))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"><title>{}</title></polyline>"#,
                pts.join(" "),
                escape(&series.label)
            );
            // Legend entry.
            let ly = MARGIN_T + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{x}" y1="{ly}" x2="{x2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}" font-family="sans-serif" font-size="11">{}</text>"#,
                escape(&series.label),
                x = WIDTH - MARGIN_R - 140.0,
                x2 = WIDTH - MARGIN_R - 120.0,
                tx = WIDTH - MARGIN_R - 114.0,
                ty = ly + 4.0
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LineChart {
        let mut c = LineChart::new("Costs", "hour", "$");
        c.add_series("energy", vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)]);
        c.add_band("bounds", vec![0.0, 1.0, 2.0], vec![0.5, 1.0, 1.0], vec![2.0, 3.0, 2.5]);
        c
    }

    #[test]
    fn render_is_deterministic() {
        assert_eq!(sample().render(), sample().render());
    }

    #[test]
    fn render_is_well_formed() {
        let svg = sample().render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<path").count(), 1);
        assert!(svg.contains("Costs"));
    }

    #[test]
    fn empty_chart_renders() {
        let c = LineChart::new("empty", "x", "y");
        let svg = c.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn title_is_escaped() {
        let c = LineChart::new("a<b&c", "x", "y");
        let svg = c.render();
        assert!(svg.contains("a&lt;b&amp;c"));
    }
}
