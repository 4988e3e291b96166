//! Static SVG heatmaps and line plots.
//!
//! Coordinates are printed with fixed precision so that identical data gives
//! identical files.

use std::fmt::Write;

use comoving_core::SpatiotemporalField;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

// viridis, sampled at five points
const ANCHORS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

const LEVELS: usize = 64;

fn color(level: usize) -> String {
    let u = level as f64 / (LEVELS - 1) as f64 * (ANCHORS.len() - 1) as f64;
    let i = (u.floor() as usize).min(ANCHORS.len() - 2);
    let f = u - i as f64;
    let (a, b) = (ANCHORS[i], ANCHORS[i + 1]);
    let mix = |p: f64, q: f64| (p + f * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    );
}

fn axis_labels(out: &mut String, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) {
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = write!(
        out,
        "<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"14\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>\n",
        x1 - x0,
        y0 - y1,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(xlabel),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
    for (v, px, py, anchor) in [
        (x.0, x0, y0 + 14.0, "start"),
        (x.1, x1, y0 + 14.0, "end"),
    ] {
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{py:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"{anchor}\">{}</text>",
            fmt_tick(v)
        );
    }
    for (v, py) in [(y.0, y0), (y.1, y1 + 8.0)] {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{py:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            x0 - 3.0,
            fmt_tick(v)
        );
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Heatmap with time running down and space across, as in a space-time
/// diagram. Large fields are subsampled to at most `max_rows x max_cols`.
pub fn heatmap_svg(field: &SpatiotemporalField, title: &str) -> String {
    let (max_rows, max_cols) = (200, 180);
    let (t, k) = (field.n_time(), field.n_space());
    let rstep = t.div_ceil(max_rows);
    let cstep = k.div_ceil(max_cols);
    let rows: Vec<usize> = (0..t).step_by(rstep).collect();
    let cols: Vec<usize> = (0..k).step_by(cstep).collect();
    let (lo, hi) = field
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cw = (WIDTH - 2.0 * MARGIN) / cols.len() as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / rows.len() as f64;
    let mut out = String::new();
    open(&mut out, title);
    for (ri, &r) in rows.iter().enumerate() {
        let row = field.row(r);
        let levels: Vec<usize> = cols
            .iter()
            .map(|&c| (((row[c] - lo) / span) * (LEVELS - 1) as f64).round() as usize)
            .collect();
        // merge horizontal runs of equal colour
        let mut start = 0;
        while start < levels.len() {
            let mut end = start + 1;
            while end < levels.len() && levels[end] == levels[start] {
                end += 1;
            }
            let _ = writeln!(
                out,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>",
                MARGIN + start as f64 * cw,
                MARGIN + ri as f64 * ch,
                (end - start) as f64 * cw + 0.1,
                ch + 0.1,
                color(levels[start])
            );
            start = end;
        }
    }
    axis_labels(&mut out, "x (px)", "t (row)", (0.0, (k - 1) as f64), ((t - 1) as f64, 0.0));
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"40\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">range [{}, {}]</text>",
        WIDTH - MARGIN,
        fmt_tick(lo),
        fmt_tick(hi)
    );
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dashed: bool,
    /// Markers only, no connecting line.
    pub points: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            x,
            y,
            dashed: false,
            points: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }

    pub fn scatter(mut self) -> Self {
        self.points = true;
        self
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#000000"];

pub fn line_plot_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.x.iter()).filter(finite);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let ys = series.iter().flat_map(|s| s.y.iter()).filter(finite);
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let (x0, x1) = if x0 < x1 { (x0, x1) } else { (x0 - 1.0, x0 + 1.0) };
    let (y0, y1) = if y0 < y1 { (y0, y1) } else { (y0 - 1.0, y0 + 1.0) };
    let (x0, x1, y0, y1) = if x0.is_finite() { (x0, x1, y0, y1) } else { (0.0, 1.0, 0.0, 1.0) };
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut out = String::new();
    open(&mut out, title);
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| (px(*x), py(*y)))
            .collect();
        if s.points {
            for (a, b) in &pts {
                let _ = writeln!(out, "<circle cx=\"{a:.2}\" cy=\"{b:.2}\" r=\"1.2\" fill=\"{c}\"/>");
            }
        } else if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let dash = if s.dashed { " stroke-dasharray=\"5,3\"" } else { "" };
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"1.2\"{dash} points=\"{}\"/>",
                coords.join(" ")
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{c}\">{}</text>",
            MARGIN + 8.0,
            MARGIN + 14.0 + 13.0 * i as f64,
            escape(&s.name)
        );
    }
    axis_labels(&mut out, xlabel, ylabel, (x0, x1), (y0, y1));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_endpoints() {
        assert_eq!(color(0), "#440154");
        assert_eq!(color(LEVELS - 1), "#fde725");
    }

    #[test]
    fn heatmap_is_bounded_and_escaped() {
        let f = SpatiotemporalField::new((0..1000 * 360).map(|i| (i % 7) as f64).collect(), 1000, 360, 1.0).unwrap();
        let s = heatmap_svg(&f, "a<b");
        assert!(s.contains("a&lt;b"));
        assert!(s.matches("<rect").count() <= 200 * 180 + 2);
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn constant_series_plots() {
        let s = line_plot_svg("c", "t", "y", &[Series::line("flat", vec![0.0, 1.0], vec![2.0, 2.0])]);
        assert!(s.contains("<polyline"));
        assert!(!s.contains("NaN"));
    }
}
