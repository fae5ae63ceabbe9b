//! Static SVG renderers for the evaluation artifacts: quantile-quantile
//! scatters, ECDF overlays, quadratic-variation histograms, correlation
//! heatmaps, and trajectory fans. Everything is written directly as SVG text
//! so reports build on headless machines; no display server or plotting
//! daemon is involved.
//!
//! All plots share a fixed frame (square plot area of [`PLOT_SIZE`] pixels at
//! offset [`MARGIN`]), which keeps the geometry predictable: a point on the
//! data diagonal of a quantile scatter lands on the pixel anti-diagonal
//! cx + cy = 2 MARGIN + PLOT_SIZE.

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const MARGIN: f64 = 60.0;
pub const PLOT_SIZE: f64 = 480.0;

const COLOR_REAL: &str = "#39599f";
const COLOR_SYNTH: &str = "#c44e52";

/// Affine map from a data range onto the fixed plot frame.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    span: f64,
}

impl Axis {
    fn from_values<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> Axis {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Axis { lo: 0.0, span: 1.0 };
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        Axis { lo, span }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.lo) / self.span * PLOT_SIZE
    }

    fn y(&self, v: f64) -> f64 {
        MARGIN + PLOT_SIZE - (v - self.lo) / self.span * PLOT_SIZE
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + self.span * i as f64 / 4.0).collect()
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Svg {
        let w = PLOT_SIZE + 2.0 * MARGIN;
        let mut body = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{w}\" viewBox=\"0 0 {w} {w}\">\n"
        );
        body.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{w}\" fill=\"white\"/>\n"
        ));
        body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
            w / 2.0,
            MARGIN / 2.0,
            escape(title)
        ));
        Svg { body }
    }

    fn frame(&mut self, xa: &Axis, ya: &Axis) {
        self.body.push_str(&format!(
            "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{PLOT_SIZE}\" height=\"{PLOT_SIZE}\" fill=\"none\" stroke=\"#444\"/>\n"
        ));
        for t in xa.ticks() {
            let x = xa.x(t);
            self.body.push_str(&format!(
                "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#444\"/>\n",
                MARGIN + PLOT_SIZE,
                MARGIN + PLOT_SIZE + 5.0
            ));
            self.body.push_str(&format!(
                "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                MARGIN + PLOT_SIZE + 18.0,
                fmt_tick(t)
            ));
        }
        for t in ya.ticks() {
            let y = ya.y(t);
            self.body.push_str(&format!(
                "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{MARGIN}\" y2=\"{y:.2}\" stroke=\"#444\"/>\n",
                MARGIN - 5.0
            ));
            self.body.push_str(&format!(
                "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                MARGIN - 8.0,
                y + 4.0,
                fmt_tick(t)
            ));
        }
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = MARGIN + 16.0 + 18.0 * i as f64;
            self.body.push_str(&format!(
                "<rect x=\"{}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
                MARGIN + 10.0,
                y - 10.0
            ));
            self.body.push_str(&format!(
                "<text x=\"{}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                MARGIN + 28.0,
                escape(label)
            ));
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64, opacity: f64) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" stroke-opacity=\"{opacity}\"/>\n",
            coords.join(" ")
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Quantile scatter of synthetic against real marginals with the identity
/// line. Both axes share one range, so on-diagonal pairs land exactly on the
/// drawn diagonal.
pub fn render_qq_scatter(real_q: &[f64], synth_q: &[f64], title: &str) -> Result<String> {
    if real_q.len() != synth_q.len() || real_q.is_empty() {
        return Err(Error::Shape("quantile vectors must be nonempty and equal-length".into()));
    }
    let axis = Axis::from_values(real_q.iter().chain(synth_q.iter()));
    let mut svg = Svg::new(title);
    svg.frame(&axis, &axis);
    svg.polyline(
        &[(axis.x(axis.lo), axis.y(axis.lo)), (axis.x(axis.lo + axis.span), axis.y(axis.lo + axis.span))],
        "#888",
        1.0,
        1.0,
    );
    for (&r, &s) in real_q.iter().zip(synth_q) {
        svg.body.push_str(&format!(
            "<circle cx=\"{:.6}\" cy=\"{:.6}\" r=\"4\" fill=\"{COLOR_SYNTH}\" fill-opacity=\"0.8\"/>\n",
            axis.x(r),
            axis.y(s)
        ));
    }
    Ok(svg.finish())
}

fn ecdf_steps(sample: &[f64], axis: &Axis) -> Vec<(f64, f64)> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let ylo = MARGIN + PLOT_SIZE;
    let mut pts = vec![(axis.x(sorted[0]), ylo)];
    for (i, &v) in sorted.iter().enumerate() {
        let y = MARGIN + PLOT_SIZE * (1.0 - (i + 1) as f64 / n);
        let x = axis.x(v);
        pts.push((x, pts.last().unwrap().1));
        pts.push((x, y));
    }
    pts
}

/// Overlay of the two empirical distribution functions.
pub fn render_ecdf_overlay(real: &[f64], synth: &[f64], title: &str) -> Result<String> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::Shape("ECDF overlay needs nonempty samples".into()));
    }
    let axis = Axis::from_values(real.iter().chain(synth.iter()));
    let mut svg = Svg::new(title);
    let prob_axis = Axis { lo: 0.0, span: 1.0 };
    svg.frame(&axis, &prob_axis);
    svg.polyline(&ecdf_steps(real, &axis), COLOR_REAL, 1.6, 1.0);
    svg.polyline(&ecdf_steps(synth, &axis), COLOR_SYNTH, 1.6, 1.0);
    svg.legend(&[("data", COLOR_REAL), ("generated", COLOR_SYNTH)]);
    Ok(svg.finish())
}

fn histogram(sample: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &v in sample {
        let mut b = ((v - lo) / width) as usize;
        if b >= bins {
            b = bins - 1;
        }
        counts[b] += 1.0 / (sample.len() as f64 * width);
    }
    counts
}

/// Density-normalized histogram overlay on shared bins; the standard view of
/// the two quadratic-variation distributions.
pub fn render_histogram_overlay(
    real: &[f64],
    synth: &[f64],
    bins: usize,
    title: &str,
) -> Result<String> {
    if real.is_empty() || synth.is_empty() || bins == 0 {
        return Err(Error::Shape("histogram overlay needs nonempty samples and bins".into()));
    }
    let axis = Axis::from_values(real.iter().chain(synth.iter()));
    let width = axis.span / bins as f64;
    let hr = histogram(real, axis.lo, width, bins);
    let hs = histogram(synth, axis.lo, width, bins);
    let ymax = hr.iter().chain(hs.iter()).fold(0.0, |a: f64, &b| a.max(b)).max(1e-300);
    let ya = Axis { lo: 0.0, span: ymax * 1.05 };
    let mut svg = Svg::new(title);
    svg.frame(&axis, &ya);
    for (counts, color) in [(&hr, COLOR_REAL), (&hs, COLOR_SYNTH)] {
        for (b, &dens) in counts.iter().enumerate() {
            if dens == 0.0 {
                continue;
            }
            let x0 = axis.x(axis.lo + b as f64 * width);
            let y0 = ya.y(dens);
            let h = MARGIN + PLOT_SIZE - y0;
            svg.body.push_str(&format!(
                "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{color}\" fill-opacity=\"0.5\"/>\n",
                PLOT_SIZE / bins as f64
            ));
        }
    }
    svg.legend(&[("data", COLOR_REAL), ("generated", COLOR_SYNTH)]);
    Ok(svg.finish())
}

fn heat_color(c: f64) -> String {
    let c = c.clamp(-1.0, 1.0);
    let (r, g, b) = if c >= 0.0 {
        let t = c;
        (
            255.0 + t * (196.0 - 255.0),
            255.0 + t * (78.0 - 255.0),
            255.0 + t * (82.0 - 255.0),
        )
    } else {
        let t = -c;
        (
            255.0 + t * (57.0 - 255.0),
            255.0 + t * (89.0 - 255.0),
            255.0 + t * (159.0 - 255.0),
        )
    };
    format!("rgb({},{},{})", r as u8, g as u8, b as u8)
}

/// Correlation heatmap on the fixed frame; cells annotated when the matrix
/// is small enough to stay legible.
pub fn render_heatmap(matrix: &[Vec<f64>], names: &[String], title: &str) -> Result<String> {
    let d = matrix.len();
    if d == 0 || matrix.iter().any(|r| r.len() != d) || names.len() != d {
        return Err(Error::Shape("heatmap needs a square matrix with matching names".into()));
    }
    let cell = PLOT_SIZE / d as f64;
    let mut svg = Svg::new(title);
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let x = MARGIN + j as f64 * cell;
            let y = MARGIN + i as f64 * cell;
            svg.body.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{}\" stroke=\"#ddd\"/>\n",
                heat_color(v)
            ));
            if d <= 12 {
                svg.body.push_str(&format!(
                    "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{v:.2}</text>\n",
                    x + cell / 2.0,
                    y + cell / 2.0 + 4.0
                ));
            }
        }
    }
    if d <= 12 {
        for (i, name) in names.iter().enumerate() {
            let c = MARGIN + (i as f64 + 0.5) * cell;
            svg.body.push_str(&format!(
                "<text x=\"{c:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                MARGIN - 10.0,
                escape(name)
            ));
            svg.body.push_str(&format!(
                "<text x=\"{}\" y=\"{c:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                MARGIN - 10.0,
                escape(name)
            ));
        }
    }
    Ok(svg.finish())
}

/// Spaghetti fan of up to `max_paths` trajectories of one feature, with the
/// cross-sectional mean drawn on top.
pub fn render_path_fan(ds: &Dataset, feature: usize, max_paths: usize, title: &str) -> Result<String> {
    if feature >= ds.dim() {
        return Err(Error::Shape(format!("feature {feature} out of range")));
    }
    if max_paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    let shown = ds.values.len().min(max_paths);
    let xs = ds.grid.dates();
    let xa = Axis::from_values(xs.iter());
    let ya = Axis::from_values(
        ds.values[..shown]
            .iter()
            .flat_map(|s| s.iter().map(|row| &row[feature])),
    );
    let mut svg = Svg::new(title);
    svg.frame(&xa, &ya);
    for series in &ds.values[..shown] {
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(series)
            .map(|(&t, row)| (xa.x(t), ya.y(row[feature])))
            .collect();
        svg.polyline(&pts, COLOR_REAL, 1.0, 0.25);
    }
    let mean: Vec<(f64, f64)> = xs
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let m = ds.values[..shown].iter().map(|s| s[i][feature]).sum::<f64>() / shown as f64;
            (xa.x(t), ya.y(m))
        })
        .collect();
    svg.polyline(&mean, "#222", 2.0, 1.0);
    Ok(svg.finish())
}

/// Render a CSV table (header plus float rows) as text.
pub fn csv_table(headers: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = headers.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn circles(svg: &str) -> Vec<(f64, f64)> {
        svg.lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| {
                let grab = |key: &str| -> f64 {
                    let start = l.find(key).unwrap() + key.len();
                    let rest = &l[start..];
                    rest[..rest.find('"').unwrap()].parse().unwrap()
                };
                (grab("cx=\""), grab("cy=\""))
            })
            .collect()
    }

    #[test]
    fn qq_diagonal_points_land_on_the_antidiagonal() {
        let q = vec![-1.0, 0.0, 0.5, 2.0];
        let svg = render_qq_scatter(&q, &q, "qq").unwrap();
        let pts = circles(&svg);
        assert_eq!(pts.len(), 4);
        let anti = 2.0 * MARGIN + PLOT_SIZE;
        for (cx, cy) in pts {
            assert!((cx + cy - anti).abs() < 1e-3, "({cx},{cy}) off the identity line");
        }
    }

    #[test]
    fn svg_documents_are_well_formed() {
        let a = vec![0.0, 1.0, 2.0, 3.0];
        let b = vec![0.5, 1.5, 2.5, 3.5];
        let grid = TimeGrid::uniform(3, 0.5, 2).unwrap();
        let ds = Dataset::new(
            vec![vec![vec![0.0], vec![1.0], vec![0.5], vec![1.5]]; 3],
            grid,
            vec!["x".into()],
        )
        .unwrap();
        let docs = [
            render_qq_scatter(&a, &b, "a < b & c").unwrap(),
            render_ecdf_overlay(&a, &b, "ecdf").unwrap(),
            render_histogram_overlay(&a, &b, 8, "hist").unwrap(),
            render_heatmap(
                &[vec![1.0, -0.5], vec![-0.5, 1.0]],
                &["x".into(), "y".into()],
                "corr",
            )
            .unwrap(),
            render_path_fan(&ds, 0, 10, "fan").unwrap(),
        ];
        for doc in &docs {
            assert!(doc.starts_with("<svg"));
            assert!(doc.trim_end().ends_with("</svg>"));
            // every opened tag family is closed or self-closed
            assert_eq!(doc.matches("<svg").count(), doc.matches("</svg>").count());
            assert!(!doc.contains("NaN"));
            // raw title characters must be escaped
            assert!(!doc.contains("a < b"));
        }
    }

    #[test]
    fn heatmap_colors_span_blue_white_red() {
        assert_eq!(heat_color(0.0), "rgb(255,255,255)");
        assert_eq!(heat_color(1.0), "rgb(196,78,82)");
        assert_eq!(heat_color(-1.0), "rgb(57,89,159)");
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(render_qq_scatter(&[1.0], &[], "t").is_err());
        assert!(render_ecdf_overlay(&[], &[1.0], "t").is_err());
        assert!(render_histogram_overlay(&[1.0], &[1.0], 0, "t").is_err());
        assert!(render_heatmap(&[vec![1.0, 2.0]], &["x".into()], "t").is_err());
    }

    #[test]
    fn csv_table_round_trips_floats() {
        let out = csv_table(&["level", "real"], &[vec![0.05, 1.25], vec![0.95, -3.5]]);
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), "level,real");
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.05, 1.25]);
    }
}
