//! Standalone SVG figures and GeoJSON overlays.
//!
//! Coordinates use a plain lon/lat linear projection. Output is built as
//! text with fixed number formatting, so identical inputs give identical
//! bytes. Rectangles are reserved for bars and heatmap cells; colour bars are
//! gradient-filled paths.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::trajectory::TrajectoryPoint;

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const VIEWPORT_PAD_FRACTION: f64 = 0.05;
pub const DEGENERATE_PAD_DEG: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrokeStyle {
    pub color: Rgb,
    pub width: f64,
    /// SVG `stroke-dasharray`, solid when absent.
    pub dash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSpec {
    pub width_px: u32,
    pub height_px: u32,
    pub margin_px: u32,
    pub color_low: Rgb,
    pub color_high: Rgb,
    pub actual_stroke: StrokeStyle,
    pub predicted_stroke: StrokeStyle,
}

impl Default for StrokeStyle {
    fn default() -> Self {
        Self {
            color: [31, 31, 31],
            width: 2.0,
            dash: None,
        }
    }
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            width_px: 800,
            height_px: 600,
            margin_px: 60,
            color_low: [33, 102, 172],
            color_high: [178, 24, 43],
            actual_stroke: StrokeStyle::default(),
            predicted_stroke: StrokeStyle {
                color: [230, 97, 1],
                width: 2.0,
                dash: Some("6 4".into()),
            },
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width_px <= 2 * self.margin_px || self.height_px <= 2 * self.margin_px {
            return Err(Error::InvalidArgument(format!(
                "figure {}x{} too small for margin {}",
                self.width_px, self.height_px, self.margin_px
            )));
        }
        for s in [&self.actual_stroke, &self.predicted_stroke] {
            if !(s.width > 0.0) || !s.width.is_finite() {
                return Err(Error::InvalidArgument(format!("bad stroke width {}", s.width)));
            }
        }
        Ok(())
    }

    fn plot_width(&self) -> f64 {
        f64::from(self.width_px - 2 * self.margin_px)
    }

    fn plot_height(&self) -> f64 {
        f64::from(self.height_px - 2 * self.margin_px)
    }
}

/// Lon/lat box mapped onto the plot area, y pointing down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
    origin: (f64, f64),
    size: (f64, f64),
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo > 0.0 {
        let pad = (hi - lo) * VIEWPORT_PAD_FRACTION;
        (lo - pad, hi + pad)
    } else {
        (lo - DEGENERATE_PAD_DEG, hi + DEGENERATE_PAD_DEG)
    }
}

impl Viewport {
    pub fn from_points<'a, I>(points: I, spec: &RenderSpec) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TrajectoryPoint>,
    {
        let mut lon = (f64::INFINITY, f64::NEG_INFINITY);
        let mut lat = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            lon = (lon.0.min(p.lon), lon.1.max(p.lon));
            lat = (lat.0.min(p.lat), lat.1.max(p.lat));
        }
        if !lon.0.is_finite() || !lat.0.is_finite() {
            return Err(Error::Empty("trajectory"));
        }
        let (min_lon, max_lon) = padded(lon.0, lon.1);
        let (min_lat, max_lat) = padded(lat.0, lat.1);
        Ok(Self {
            min_lon,
            max_lon,
            min_lat,
            max_lat,
            origin: (f64::from(spec.margin_px), f64::from(spec.margin_px)),
            size: (spec.plot_width(), spec.plot_height()),
        })
    }

    pub fn to_px(&self, lon: f64, lat: f64) -> (f64, f64) {
        let x = self.origin.0 + (lon - self.min_lon) / (self.max_lon - self.min_lon) * self.size.0;
        let y = self.origin.1 + (self.max_lat - lat) / (self.max_lat - self.min_lat) * self.size.1;
        (x, y)
    }
}

/// Linear interpolation between two colours, `t` clamped to `[0, 1]`.
pub fn lerp_color(low: Rgb, high: Rgb, t: f64) -> Rgb {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    std::array::from_fn(|i| {
        let (a, b) = (f64::from(low[i]), f64::from(high[i]));
        (a + (b - a) * t).round() as u8
    })
}

/// Signed diverging scale: `min → low`, `0 → white`, `max → high`.
pub fn diverging_color(value: f64, min: f64, max: f64, low: Rgb, high: Rgb) -> Rgb {
    if value > 0.0 && max > 0.0 {
        lerp_color(WHITE, high, value / max)
    } else if value < 0.0 && min < 0.0 {
        lerp_color(WHITE, low, value / min)
    } else {
        WHITE
    }
}

pub fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Svg {
    body: String,
    width: u32,
    height: u32,
}

impl Svg {
    fn new(spec: &RenderSpec) -> Self {
        Self {
            body: String::new(),
            width: spec.width_px,
            height: spec.height_px,
        }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.body.push_str("  ");
        self.body.push_str(s.as_ref());
        self.body.push('\n');
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, content: &str) {
        self.line(format!(
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="{size}">{}</text>"#,
            escape(content)
        ));
    }

    /// Horizontal colour bar from `stops` (offset, colour), as a filled path.
    fn color_bar(&mut self, id: &str, x: f64, y: f64, w: f64, h: f64, stops: &[(f64, Rgb)]) {
        self.line(format!(r#"<defs><linearGradient id="{id}" x1="0" y1="0" x2="1" y2="0">"#));
        for (off, c) in stops {
            self.line(format!(r#"  <stop offset="{off:.3}" stop-color="{}"/>"#, hex(*c)));
        }
        self.line("</linearGradient></defs>");
        self.line(format!(
            r##"<path class="colorbar" d="M {x:.2} {y:.2} h {w:.2} v {h:.2} h {:.2} Z" fill="url(#{id})" stroke="#333333" stroke-width="0.5"/>"##,
            -w
        ));
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn points_attr(view: &Viewport, pts: &[TrajectoryPoint]) -> String {
    let mut s = String::new();
    for (i, p) in pts.iter().enumerate() {
        let (x, y) = view.to_px(p.lon, p.lat);
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.2},{y:.2}");
    }
    s
}

fn stroke_attrs(s: &StrokeStyle) -> String {
    let dash = s
        .dash
        .as_deref()
        .map(|d| format!(r#" stroke-dasharray="{}""#, escape(d)))
        .unwrap_or_default();
    format!(r#"stroke="{}" stroke-width="{:.2}"{dash}"#, hex(s.color), s.width)
}

/// Actual and predicted routes over a shared viewport.
pub fn render_overlay(
    actual: &[TrajectoryPoint],
    predicted: &[TrajectoryPoint],
    spec: &RenderSpec,
) -> Result<String> {
    spec.validate()?;
    if actual.is_empty() || predicted.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let view = Viewport::from_points(actual.iter().chain(predicted), spec)?;
    let mut svg = Svg::new(spec);
    let m = f64::from(spec.margin_px);
    svg.text(f64::from(spec.width_px) / 2.0, m / 2.0, "middle", 16, "Predicted vs. actual trajectory");

    for (role, pts, style) in [
        ("actual", actual, &spec.actual_stroke),
        ("predicted", predicted, &spec.predicted_stroke),
    ] {
        svg.line(format!(
            r#"<polyline class="{role}" fill="none" {} points="{}"/>"#,
            stroke_attrs(style),
            points_attr(&view, pts)
        ));
    }
    for (role, pts, style) in [
        ("actual", actual, &spec.actual_stroke),
        ("predicted", predicted, &spec.predicted_stroke),
    ] {
        let (sx, sy) = view.to_px(pts[0].lon, pts[0].lat);
        let last = pts[pts.len() - 1];
        let (ex, ey) = view.to_px(last.lon, last.lat);
        let c = hex(style.color);
        svg.line(format!(
            r##"<circle class="{role}-start" cx="{sx:.2}" cy="{sy:.2}" r="4" fill="#ffffff" stroke="{c}" stroke-width="1.5"/>"##
        ));
        svg.line(format!(
            r#"<circle class="{role}-end" cx="{ex:.2}" cy="{ey:.2}" r="4" fill="{c}"/>"#
        ));
    }

    let lx = f64::from(spec.width_px) - m - 150.0;
    let ly = f64::from(spec.height_px) - m / 2.0 - 18.0;
    for (k, (label, style)) in [("Actual", &spec.actual_stroke), ("Predicted", &spec.predicted_stroke)]
        .into_iter()
        .enumerate()
    {
        let y = ly + 16.0 * k as f64;
        svg.line(format!(
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" {}/>"#,
            lx + 30.0,
            stroke_attrs(style)
        ));
        svg.text(lx + 38.0, y + 4.0, "start", 12, label);
    }
    Ok(svg.finish())
}

/// Route coloured point by point on a `color_low → color_high` gradient.
///
/// `importance` has one entry per point, or one fewer when the first point
/// is only the origin of the first step (drawn neutral). Values are min-max
/// rescaled before colouring, so the most important point always carries
/// `color_high`.
pub fn render_importance_trajectory(
    points: &[TrajectoryPoint],
    importance: &[f64],
    method_label: &str,
    spec: &RenderSpec,
) -> Result<String> {
    spec.validate()?;
    if points.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let offset = match points.len().checked_sub(importance.len()) {
        Some(o @ (0 | 1)) => o,
        _ => {
            return Err(Error::Shape(format!(
                "{} importance values for {} points",
                importance.len(),
                points.len()
            )))
        }
    };
    if importance.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("importance values must lie in [0, 1]".into()));
    }
    let scaled = crate::explainers::normalize_importance(importance);

    let view = Viewport::from_points(points, spec)?;
    let mut svg = Svg::new(spec);
    let m = f64::from(spec.margin_px);
    let w = f64::from(spec.width_px);
    svg.text(w / 2.0, m / 2.0, "middle", 16, &format!("Trajectory highlighted by {method_label}"));
    svg.line(format!(
        r##"<polyline class="route" fill="none" stroke="#9e9e9e" stroke-width="1.5" points="{}"/>"##,
        points_attr(&view, points)
    ));
    for (i, p) in points.iter().enumerate() {
        let (x, y) = view.to_px(p.lon, p.lat);
        if i < offset {
            svg.line(format!(
                r##"<circle class="origin" cx="{x:.2}" cy="{y:.2}" r="4" fill="#ffffff" stroke="#555555" stroke-width="1"/>"##
            ));
            continue;
        }
        let v = scaled[i - offset];
        let c = lerp_color(spec.color_low, spec.color_high, v);
        svg.line(format!(
            r##"<circle class="point" data-importance="{v:.6}" cx="{x:.2}" cy="{y:.2}" r="6" fill="{}" stroke="#333333" stroke-width="0.5"/>"##,
            hex(c)
        ));
    }
    let bar_w = 200.0;
    let bx = w - m - bar_w;
    let by = f64::from(spec.height_px) - m / 2.0 - 6.0;
    svg.color_bar("importance-gradient", bx, by, bar_w, 12.0, &[(0.0, spec.color_low), (1.0, spec.color_high)]);
    svg.text(bx - 6.0, by + 10.0, "end", 11, "low");
    svg.text(bx + bar_w + 6.0, by + 10.0, "start", 11, "high");
    svg.text(m, by + 10.0, "start", 12, method_label);
    Ok(svg.finish())
}

/// Vertical bars from a zero baseline; negatives hang below it.
pub fn render_bars(values: &[f64], labels: &[String], title: &str, spec: &RenderSpec) -> Result<String> {
    spec.validate()?;
    if values.is_empty() {
        return Err(Error::Empty("bar values"));
    }
    if values.len() != labels.len() {
        return Err(Error::Shape(format!("{} values but {} labels", values.len(), labels.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bar value".into()));
    }
    let hi = values.iter().copied().fold(0.0, f64::max);
    let lo = values.iter().copied().fold(0.0, f64::min);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let m = f64::from(spec.margin_px);
    let (pw, ph) = (spec.plot_width(), spec.plot_height());
    let baseline = m + hi / span * ph;
    let slot = pw / values.len() as f64;
    let bar_w = slot * 0.7;

    let mut svg = Svg::new(spec);
    svg.text(f64::from(spec.width_px) / 2.0, m / 2.0, "middle", 16, title);
    for (i, (v, label)) in values.iter().zip(labels).enumerate() {
        let h = v.abs() / span * ph;
        let x = m + slot * i as f64 + (slot - bar_w) / 2.0;
        let y = if *v >= 0.0 { baseline - h } else { baseline };
        let c = if *v >= 0.0 { spec.color_high } else { spec.color_low };
        svg.line(format!(
            r#"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{}"/>"#,
            hex(c)
        ));
        let cx = x + bar_w / 2.0;
        svg.text(cx, m + ph + 16.0, "middle", 11, label);
        let vy = if *v >= 0.0 { y - 4.0 } else { y + h + 12.0 };
        svg.text(cx, vy, "middle", 10, &format!("{v:.4}"));
    }
    svg.line(format!(
        r##"<line class="baseline" x1="{m:.2}" y1="{baseline:.2}" x2="{:.2}" y2="{baseline:.2}" stroke="#000000" stroke-width="1"/>"##,
        m + pw
    ));
    svg.line(format!(
        r##"<line class="axis" x1="{m:.2}" y1="{m:.2}" x2="{m:.2}" y2="{:.2}" stroke="#000000" stroke-width="1"/>"##,
        m + ph
    ));
    svg.text(m - 6.0, m + 4.0, "end", 10, &format!("{hi:.4}"));
    svg.text(m - 6.0, m + ph + 4.0, "end", 10, &format!("{lo:.4}"));
    Ok(svg.finish())
}

/// Signed grid, one cell per matrix entry, on a diverging scale through white.
pub fn render_heatmap(
    matrix: &Matrix,
    row_labels: &[String],
    col_labels: &[String],
    title: &str,
    spec: &RenderSpec,
) -> Result<String> {
    spec.validate()?;
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("heatmap"));
    }
    if row_labels.len() != rows || col_labels.len() != cols {
        return Err(Error::Shape(format!(
            "{rows}x{cols} matrix with {} row and {} column labels",
            row_labels.len(),
            col_labels.len()
        )));
    }
    if !matrix.is_finite() {
        return Err(Error::NonFinite("heatmap value".into()));
    }
    let max = matrix.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = matrix.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let m = f64::from(spec.margin_px);
    let left = m + 40.0;
    let cw = (f64::from(spec.width_px) - m - left) / cols as f64;
    let ch = (spec.plot_height() - 30.0) / rows as f64;

    let mut svg = Svg::new(spec);
    svg.text(f64::from(spec.width_px) / 2.0, m / 2.0, "middle", 16, title);
    for r in 0..rows {
        for c in 0..cols {
            let v = matrix.get(r, c);
            let fill = diverging_color(v, min, max, spec.color_low, spec.color_high);
            svg.line(format!(
                r##"<rect class="cell" data-value="{v:e}" x="{:.2}" y="{:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}" stroke="#ffffff" stroke-width="0.5"/>"##,
                left + cw * c as f64,
                m + ch * r as f64,
                hex(fill)
            ));
        }
        svg.text(left - 6.0, m + ch * (r as f64 + 0.5) + 4.0, "end", 11, &row_labels[r]);
    }
    for (c, label) in col_labels.iter().enumerate() {
        svg.text(left + cw * (c as f64 + 0.5), m - 6.0, "middle", 11, label);
    }
    let by = m + ch * rows as f64 + 14.0;
    let bw = 200.0;
    let bx = f64::from(spec.width_px) - m - bw;
    let zero_at = if min < 0.0 && max > 0.0 {
        -min / (max - min)
    } else if max <= 0.0 {
        1.0
    } else {
        0.0
    };
    let mut stops = Vec::new();
    if min < 0.0 {
        stops.push((0.0, spec.color_low));
    }
    stops.push((zero_at, WHITE));
    if max > 0.0 {
        stops.push((1.0, spec.color_high));
    }
    svg.color_bar("diverging-gradient", bx, by, bw, 12.0, &stops);
    svg.text(bx - 6.0, by + 10.0, "end", 10, &format!("{:.3e}", min.min(0.0)));
    svg.text(bx + bw + 6.0, by + 10.0, "start", 10, &format!("{:.3e}", max.max(0.0)));
    Ok(svg.finish())
}

fn positions(pts: &[TrajectoryPoint]) -> Vec<[f64; 2]> {
    pts.iter().map(|p| [p.lon, p.lat]).collect()
}

fn route_feature(role: &str, pts: &[TrajectoryPoint]) -> Value {
    let geometry = if pts.len() == 1 {
        json!({ "type": "Point", "coordinates": [pts[0].lon, pts[0].lat] })
    } else {
        json!({ "type": "LineString", "coordinates": positions(pts) })
    };
    json!({
        "type": "Feature",
        "geometry": geometry,
        "properties": { "role": role, "t_start": pts[0].t, "t_end": pts[pts.len() - 1].t },
    })
}

/// GeoJSON `FeatureCollection` with the route, an optional predicted route,
/// and optional per-vertex importance points.
///
/// As with [`render_importance_trajectory`], `importance` may be one shorter
/// than the route, in which case it attaches to every vertex but the first.
pub fn export_geojson(
    traj: &[TrajectoryPoint],
    importance: Option<&[f64]>,
    predicted: Option<&[TrajectoryPoint]>,
) -> Result<Value> {
    if traj.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut features = vec![route_feature("actual", traj)];
    if let Some(pred) = predicted {
        if pred.is_empty() {
            return Err(Error::Empty("predicted trajectory"));
        }
        features.push(route_feature("predicted", pred));
    }
    if let Some(imp) = importance {
        let offset = match traj.len().checked_sub(imp.len()) {
            Some(o @ (0 | 1)) => o,
            _ => {
                return Err(Error::Shape(format!(
                    "{} importance values for {} points",
                    imp.len(),
                    traj.len()
                )))
            }
        };
        if imp.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("importance values must lie in [0, 1]".into()));
        }
        for (p, v) in traj[offset..].iter().zip(imp) {
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [p.lon, p.lat] },
                "properties": { "importance": v, "t": p.t },
            }));
        }
    }
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(coords: &[(f64, f64)]) -> Vec<TrajectoryPoint> {
        coords
            .iter()
            .enumerate()
            .map(|(i, &(lon, lat))| TrajectoryPoint { lon, lat, t: 60.0 * i as f64 })
            .collect()
    }

    fn route() -> Vec<TrajectoryPoint> {
        pts(&[(23.60, 37.90), (23.61, 37.905), (23.625, 37.907), (23.64, 37.915)])
    }

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed SVG")
    }

    fn count(doc: &roxmltree::Document<'_>, tag: &str) -> usize {
        doc.descendants().filter(|n| n.has_tag_name(tag)).count()
    }

    fn fills_by_class(doc: &roxmltree::Document<'_>, class: &str) -> Vec<String> {
        doc.descendants()
            .filter(|n| n.attribute("class") == Some(class))
            .map(|n| n.attribute("fill").unwrap().to_string())
            .collect()
    }

    fn parse_hex(h: &str) -> Rgb {
        let v = |i: usize| u8::from_str_radix(&h[1 + 2 * i..3 + 2 * i], 16).unwrap();
        [v(0), v(1), v(2)]
    }

    #[test]
    fn viewport_corners_map_to_margins() {
        let spec = RenderSpec::default();
        let r = route();
        let view = Viewport::from_points(&r, &spec).unwrap();
        // Raw extents 23.60..23.64 and 37.90..37.915, padded 5% per side.
        assert!((view.min_lon - 23.598).abs() < 1e-12);
        assert!((view.max_lat - 37.91575).abs() < 1e-12);
        let (x, y) = view.to_px(view.min_lon, view.max_lat);
        assert!((x - 60.0).abs() < 0.5 && (y - 60.0).abs() < 0.5);
        let (x, y) = view.to_px(view.max_lon, view.min_lat);
        assert!((x - 740.0).abs() < 0.5 && (y - 540.0).abs() < 0.5);
        // Data corner sits 5% inside: 60 + 680 * 0.05 / 1.1.
        let (x, _) = view.to_px(23.60, 37.90);
        assert!((x - (60.0 + 680.0 * 0.05 / 1.1)).abs() < 0.5);
    }

    #[test]
    fn degenerate_box_is_padded() {
        let spec = RenderSpec::default();
        let one = pts(&[(10.0, 20.0)]);
        let view = Viewport::from_points(&one, &spec).unwrap();
        assert!((view.max_lon - view.min_lon - 2.0 * DEGENERATE_PAD_DEG).abs() < 1e-12);
        let (x, y) = view.to_px(10.0, 20.0);
        assert!((x - 400.0).abs() < 1e-6 && (y - 300.0).abs() < 1e-6);
    }

    #[test]
    fn overlay_structure() {
        let spec = RenderSpec::default();
        let svg = render_overlay(&route(), &route(), &spec).unwrap();
        let doc = parse(&svg);
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].attribute("points"), lines[1].attribute("points"));
        assert_ne!(lines[0].attribute("stroke"), lines[1].attribute("stroke"));
        assert!(svg.contains(">Actual<") && svg.contains(">Predicted<"));
        assert_eq!(svg, render_overlay(&route(), &route(), &spec).unwrap());
        assert!(render_overlay(&[], &route(), &spec).is_err());
    }

    #[test]
    fn importance_colours() {
        let spec = RenderSpec::default();
        let svg = render_importance_trajectory(&route(), &[0.1, 0.9, 0.3, 0.2], "LIME", &spec).unwrap();
        let fills = fills_by_class(&parse(&svg), "point");
        assert_eq!(fills[1], hex(spec.color_high));
        assert_eq!(fills[0], hex(spec.color_low));

        let svg = render_importance_trajectory(&route(), &[0.5; 4], "attention", &spec).unwrap();
        let fills = fills_by_class(&parse(&svg), "point");
        let mid = hex(lerp_color(spec.color_low, spec.color_high, 0.5));
        assert!(fills.iter().all(|f| *f == mid));

        // One fewer value than points: the first point is the window origin.
        let svg = render_importance_trajectory(&route(), &[0.0, 1.0, 0.5], "SHAP", &spec).unwrap();
        let doc = parse(&svg);
        assert_eq!(fills_by_class(&doc, "point").len(), 3);
        assert_eq!(fills_by_class(&doc, "origin").len(), 1);

        assert!(render_importance_trajectory(&route(), &[0.5; 2], "x", &spec).is_err());
        assert!(render_importance_trajectory(&route(), &[1.5; 4], "x", &spec).is_err());
    }

    #[test]
    fn bars() {
        let spec = RenderSpec::default();
        let labels: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
        let svg = render_bars(&[0.3, 0.3, 0.0, 0.3], &labels, "PFI", &spec).unwrap();
        let doc = parse(&svg);
        let rects: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("rect")).collect();
        assert_eq!(rects.len(), 4);
        let h = |i: usize| rects[i].attribute("height").unwrap().parse::<f64>().unwrap();
        let y = |i: usize| rects[i].attribute("y").unwrap().parse::<f64>().unwrap();
        assert_eq!(h(0), h(1));
        assert_eq!(h(0), h(3));
        assert_eq!(h(2), 0.0);
        assert_eq!(y(2), y(0) + h(0));

        let svg = render_bars(&[-1.0, 2.0], &labels[..2], "signed", &spec).unwrap();
        let doc = parse(&svg);
        let rects: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("rect")).collect();
        let y0 = rects[0].attribute("y").unwrap().parse::<f64>().unwrap();
        let y1 = rects[1].attribute("y").unwrap().parse::<f64>().unwrap();
        let h1 = rects[1].attribute("height").unwrap().parse::<f64>().unwrap();
        assert!((y0 - (y1 + h1)).abs() < 0.011);

        assert!(render_bars(&[1.0], &labels, "x", &spec).is_err());
        assert!(render_bars(&[], &[], "x", &spec).is_err());
    }

    #[test]
    fn heatmap() {
        let spec = RenderSpec::default();
        let m = Matrix::from_rows(&[
            vec![0.0, -0.5, 0.25, 1.0],
            vec![-1.0, 0.0, 0.5, 0.1],
            vec![0.2, 0.3, 0.0, -0.2],
        ])
        .unwrap();
        let rows: Vec<String> = (0..3).map(|i| format!("t-{i}")).collect();
        let cols: Vec<String> = ["dlon", "dlat", "dt_curr", "dt_next"].map(String::from).to_vec();
        let svg = render_heatmap(&m, &rows, &cols, "SHAP", &spec).unwrap();
        let doc = parse(&svg);
        assert_eq!(count(&doc, "rect"), 12);
        let fills = fills_by_class(&doc, "cell");
        assert_eq!(fills[0], "#ffffff");
        assert_eq!(fills[3], hex(spec.color_high));
        assert_eq!(fills[4], hex(spec.color_low));
        assert!(render_heatmap(&m, &rows[..2], &cols, "x", &spec).is_err());
    }

    #[test]
    fn geojson_layout() {
        let r = &route()[..3];
        let g = export_geojson(r, None, None).unwrap();
        assert_eq!(g["type"], "FeatureCollection");
        assert_eq!(g["features"].as_array().unwrap().len(), 1);
        assert_eq!(g["features"][0]["geometry"]["coordinates"][0], json!([23.60, 37.90]));
        assert_eq!(g["features"][0]["properties"]["role"], "actual");

        let g = export_geojson(r, Some(&[0.0, 1.0, 0.5]), Some(r)).unwrap();
        let feats = g["features"].as_array().unwrap();
        assert_eq!(feats.len(), 5);
        assert_eq!(feats[1]["properties"]["role"], "predicted");
        let imp: Vec<f64> = feats[2..]
            .iter()
            .map(|f| f["properties"]["importance"].as_f64().unwrap())
            .collect();
        assert_eq!(imp, vec![0.0, 1.0, 0.5]);
        assert!(export_geojson(r, Some(&[0.5]), None).is_err());
        assert!(export_geojson(&[], None, None).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let spec = RenderSpec::default();
        let svg = render_bars(&[1.0], &["a<b & \"c\"".into()], "<title>", &spec).unwrap();
        parse(&svg);
    }

    #[test]
    fn spec_validation() {
        let bad = RenderSpec {
            width_px: 100,
            margin_px: 50,
            ..RenderSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(render_overlay(&route(), &route(), &bad).is_err());
    }

    proptest! {
        #[test]
        fn colour_interpolation_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let spec = RenderSpec::default();
            let (lo, hi) = (a.min(b), a.max(b));
            let ca = lerp_color(spec.color_low, spec.color_high, lo);
            let cb = lerp_color(spec.color_low, spec.color_high, hi);
            for i in 0..3 {
                let (l, h) = (spec.color_low[i], spec.color_high[i]);
                if l <= h {
                    prop_assert!(l <= ca[i] && ca[i] <= cb[i]);
                } else {
                    prop_assert!(l >= ca[i] && ca[i] >= cb[i]);
                }
            }
        }

        #[test]
        fn viewport_preserves_order(l1 in -10.0f64..10.0, d in 1e-6f64..5.0, lat in -5.0f64..5.0) {
            let spec = RenderSpec::default();
            let p = pts(&[(l1, lat), (l1 + d, lat + d)]);
            let view = Viewport::from_points(&p, &spec).unwrap();
            let (x1, y1) = view.to_px(p[0].lon, p[0].lat);
            let (x2, y2) = view.to_px(p[1].lon, p[1].lat);
            prop_assert!(x1 < x2);
            prop_assert!(y1 > y2);
        }

        #[test]
        fn sorted_point_fills_are_monotone(imp in prop::collection::vec(0.0f64..=1.0, 4)) {
            let spec = RenderSpec::default();
            let svg = render_importance_trajectory(&route(), &imp, "m", &spec).unwrap();
            let doc = roxmltree::Document::parse(&svg).unwrap();
            let mut pairs: Vec<(f64, Rgb)> = fills_by_class(&doc, "point")
                .iter()
                .zip(&imp)
                .map(|(f, v)| (*v, parse_hex(f)))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pairs.windows(2) {
                for i in 0..3 {
                    if spec.color_low[i] <= spec.color_high[i] {
                        prop_assert!(w[0].1[i] <= w[1].1[i]);
                    } else {
                        prop_assert!(w[0].1[i] >= w[1].1[i]);
                    }
                }
            }
        }
    }
}
