//! Self-contained SVG charts: line charts with min/max bands and
//! moving-average smoothing, and categorical scatter plots.
//!
//! Charts are rendered from in-memory series; the per-experiment plot
//! builders in [`crate::runner`] assemble those series from result
//! tables. All coordinates are formatted with fixed precision so the
//! same data always renders to identical bytes.

use bundlenet::error::{Error, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 58.0;

/// Ten distinguishable series/category colors.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#7f7f7f",
];

/// One drawable line, optionally wrapped in a min/max band.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Lower/upper band values at the same x positions.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

impl Series {
    pub fn new(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Series {
        Series {
            label: label.into(),
            xs,
            ys,
            band: None,
        }
    }

    pub fn with_band(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Series {
        self.band = Some((lo, hi));
        self
    }

    fn validate(&self) -> Result<()> {
        if self.xs.is_empty() {
            return Err(Error::EmptySeries {
                detail: format!("series {:?} has no points", self.label),
            });
        }
        if self.xs.len() != self.ys.len() {
            return Err(Error::ShapeMismatch {
                op: "plot_series",
                left: vec![self.xs.len()],
                right: vec![self.ys.len()],
            });
        }
        if let Some((lo, hi)) = &self.band {
            if lo.len() != self.xs.len() || hi.len() != self.xs.len() {
                return Err(Error::ShapeMismatch {
                    op: "plot_band",
                    left: vec![self.xs.len()],
                    right: vec![lo.len(), hi.len()],
                });
            }
        }
        for &v in self.xs.iter().chain(&self.ys) {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    op: format!("plot series {:?}", self.label),
                });
            }
        }
        Ok(())
    }
}

/// A labelled scatter group (one category).
#[derive(Clone, Debug)]
pub struct ScatterGroup {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Axis titles and chart heading.
#[derive(Clone, Debug)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl ChartSpec {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> ChartSpec {
        ChartSpec {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
        }
    }
}

/// Trailing moving average re-exported for plot smoothing.
pub use bundlenet::report::moving_average;

fn nice_step(raw: f64) -> f64 {
    let magnitude = 10f64.powf(raw.abs().log10().floor());
    let residual = raw / magnitude;
    let factor = if residual <= 1.0 {
        1.0
    } else if residual <= 2.0 {
        2.0
    } else if residual <= 5.0 {
        5.0
    } else {
        10.0
    };
    factor * magnitude
}

/// Tick positions covering `[lo, hi]` at a round step.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let range = hi - lo;
    if range <= 0.0 {
        return vec![lo];
    }
    let step = nice_step(range / 5.0);
    let first = (lo / step).ceil() * step;
    let mut out = Vec::new();
    let mut tick = first;
    while tick <= hi + step * 1e-9 {
        // Snap near-zero ticks produced by floating-point drift.
        out.push(if tick.abs() < step * 1e-9 { 0.0 } else { tick });
        tick += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1e5 || a < 1e-3 {
        format!("{v:e}")
    } else {
        // Up to 4 significant decimals, trailing zeros trimmed.
        let s = format!("{v:.4}");
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            return (self.px_lo + self.px_hi) / 2.0;
        }
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn expand(lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = (hi - lo) * 0.04;
        (lo - pad, hi + pad)
    }
}

fn chart_frame(spec: &ChartSpec, x: &Scale, y: &Scale, svg: &mut String) {
    svg.push_str(&format!(
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP,
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        esc(&spec.title)
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 14.0,
        esc(&spec.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\" transform=\"rotate(-90 20 {:.2})\">{}</text>\n",
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        esc(&spec.y_label)
    ));
    for tick in ticks(x.lo, x.hi) {
        let px = x.map(tick);
        svg.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n",
            MARGIN_TOP,
            HEIGHT - MARGIN_BOTTOM,
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 18.0,
            fmt_tick(tick)
        ));
    }
    for tick in ticks(y.lo, y.hi) {
        let py = y.map(tick);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n",
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT,
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            py + 4.0,
            fmt_tick(tick)
        ));
    }
}

fn legend(labels: &[(String, &str)], svg: &mut String) {
    let x = MARGIN_LEFT + 12.0;
    for (i, (label, color)) in labels.iter().enumerate() {
        let y = MARGIN_TOP + 16.0 + i as f64 * 18.0;
        svg.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\n",
            y - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{y:.2}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            x + 18.0,
            esc(label)
        ));
    }
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    )
}

/// Renders a line chart. Every series must be non-empty; an empty input
/// set is an error so callers never write a blank file.
pub fn line_chart(spec: &ChartSpec, series: &[Series]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::EmptySeries {
            detail: format!("chart {:?} has no series", spec.title),
        });
    }
    for s in series {
        s.validate()?;
    }
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in series {
        for &v in &s.xs {
            x_lo = x_lo.min(v);
            x_hi = x_hi.max(v);
        }
        for &v in &s.ys {
            y_lo = y_lo.min(v);
            y_hi = y_hi.max(v);
        }
        if let Some((lo, hi)) = &s.band {
            for &v in lo.iter().chain(hi) {
                if v.is_finite() {
                    y_lo = y_lo.min(v);
                    y_hi = y_hi.max(v);
                }
            }
        }
    }
    let (x_lo, x_hi) = expand(x_lo, x_hi);
    let (y_lo, y_hi) = expand(y_lo, y_hi);
    let x = Scale {
        lo: x_lo,
        hi: x_hi,
        px_lo: MARGIN_LEFT,
        px_hi: WIDTH - MARGIN_RIGHT,
    };
    let y = Scale {
        lo: y_lo,
        hi: y_hi,
        px_lo: HEIGHT - MARGIN_BOTTOM,
        px_hi: MARGIN_TOP,
    };

    let mut svg = svg_open();
    chart_frame(spec, &x, &y, &mut svg);
    let mut labels = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        labels.push((s.label.clone(), color));
        if let Some((lo, hi)) = &s.band {
            let mut points = String::new();
            for (px, pv) in s.xs.iter().zip(lo) {
                points.push_str(&format!("{:.2},{:.2} ", x.map(*px), y.map(*pv)));
            }
            for (px, pv) in s.xs.iter().zip(hi).rev() {
                points.push_str(&format!("{:.2},{:.2} ", x.map(*px), y.map(*pv)));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                points.trim_end()
            ));
        }
        let mut points = String::new();
        for (px, pv) in s.xs.iter().zip(&s.ys) {
            points.push_str(&format!("{:.2},{:.2} ", x.map(*px), y.map(*pv)));
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            points.trim_end()
        ));
    }
    legend(&labels, &mut svg);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders a categorical scatter plot with one color and legend entry
/// per group.
pub fn scatter_chart(spec: &ChartSpec, groups: &[ScatterGroup]) -> Result<String> {
    if groups.is_empty() || groups.iter().all(|g| g.points.is_empty()) {
        return Err(Error::EmptySeries {
            detail: format!("scatter {:?} has no points", spec.title),
        });
    }
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for g in groups {
        for &(px, pv) in &g.points {
            if !px.is_finite() || !pv.is_finite() {
                return Err(Error::NonFinite {
                    op: format!("scatter group {:?}", g.label),
                });
            }
            x_lo = x_lo.min(px);
            x_hi = x_hi.max(px);
            y_lo = y_lo.min(pv);
            y_hi = y_hi.max(pv);
        }
    }
    let (x_lo, x_hi) = expand(x_lo, x_hi);
    let (y_lo, y_hi) = expand(y_lo, y_hi);
    let x = Scale {
        lo: x_lo,
        hi: x_hi,
        px_lo: MARGIN_LEFT,
        px_hi: WIDTH - MARGIN_RIGHT,
    };
    let y = Scale {
        lo: y_lo,
        hi: y_hi,
        px_lo: HEIGHT - MARGIN_BOTTOM,
        px_hi: MARGIN_TOP,
    };
    let mut svg = svg_open();
    chart_frame(spec, &x, &y, &mut svg);
    let mut labels = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        labels.push((g.label.clone(), color));
        for &(px, pv) in &g.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.75\"/>\n",
                x.map(px),
                y.map(pv)
            ));
        }
    }
    legend(&labels, &mut svg);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Element-wise mean/min/max across equally long per-seed series.
pub fn aggregate_band(per_seed: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let Some(first) = per_seed.first() else {
        return Err(Error::EmptySeries {
            detail: "no per-seed series to aggregate".to_string(),
        });
    };
    let len = first.len();
    if len == 0 {
        return Err(Error::EmptySeries {
            detail: "per-seed series are empty".to_string(),
        });
    }
    for s in per_seed {
        if s.len() != len {
            return Err(Error::ShapeMismatch {
                op: "aggregate_band",
                left: vec![len],
                right: vec![s.len()],
            });
        }
    }
    let mut mean = vec![0.0; len];
    let mut lo = vec![f64::INFINITY; len];
    let mut hi = vec![f64::NEG_INFINITY; len];
    for s in per_seed {
        for (i, &v) in s.iter().enumerate() {
            mean[i] += v;
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    for m in &mut mean {
        *m /= per_seed.len() as f64;
    }
    Ok((mean, lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_deterministic_and_wellformed() {
        let spec = ChartSpec::new("loss", "epoch", "mse");
        let series = vec![
            Series::new("bundle", vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.25])
                .with_band(vec![0.9, 0.4, 0.2], vec![1.1, 0.6, 0.3]),
            Series::new("mlp", vec![0.0, 1.0, 2.0], vec![1.2, 0.8, 0.6]),
        ];
        let a = line_chart(&spec, &series).unwrap();
        let b = line_chart(&spec, &series).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("polygon"), "band rendered");
        assert_eq!(a.matches("polyline").count(), 2);
        assert!(a.contains("bundle") && a.contains("mlp"));
    }

    #[test]
    fn empty_series_is_an_error() {
        let spec = ChartSpec::new("t", "x", "y");
        assert!(line_chart(&spec, &[]).is_err());
        let empty = Series::new("none", vec![], vec![]);
        assert!(line_chart(&spec, &[empty]).is_err());
        assert!(scatter_chart(&spec, &[]).is_err());
    }

    #[test]
    fn scatter_gets_one_legend_entry_per_group() {
        let spec = ChartSpec::new("pca", "pc1", "pc2");
        let groups: Vec<ScatterGroup> = (0..10)
            .map(|t| ScatterGroup {
                label: format!("task {t}"),
                points: vec![(t as f64, t as f64), (t as f64 + 0.5, t as f64)],
            })
            .collect();
        let svg = scatter_chart(&spec, &groups).unwrap();
        for t in 0..10 {
            assert!(svg.contains(&format!("task {t}")));
        }
        assert_eq!(svg.matches("<circle").count(), 20);
        // 10 distinct colors in use.
        for color in PALETTE {
            assert!(svg.contains(color));
        }
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let spec = ChartSpec::new("flat", "x", "y");
        let series = vec![Series::new("c", vec![1.0, 1.0], vec![2.0, 2.0])];
        let svg = line_chart(&spec, &series).unwrap();
        assert!(svg.contains("polyline"));
    }

    #[test]
    fn band_aggregation_matches_hand_values() {
        let (mean, lo, hi) = aggregate_band(&[
            vec![1.0, 4.0],
            vec![3.0, 0.0],
        ])
        .unwrap();
        assert_eq!(mean, vec![2.0, 2.0]);
        assert_eq!(lo, vec![1.0, 0.0]);
        assert_eq!(hi, vec![3.0, 4.0]);
        assert!(aggregate_band(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn tick_values_are_round() {
        let t = ticks(0.0, 2000.0);
        assert!(t.contains(&0.0) && t.contains(&1000.0));
        let t = ticks(-5373.0, -2376.0);
        assert!(t.iter().all(|v| (v / 500.0).fract().abs() < 1e-9));
        assert_eq!(ticks(3.0, 3.0), vec![3.0]);
    }
}
