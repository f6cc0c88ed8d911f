use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::sig6;
use crate::error::{Error, Result};
use crate::probes::SweepSeries;
use crate::shapley::Attribution;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 140.0;
const Y_TICKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Bar,
    Line,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub title: String,
    pub x_labels: Vec<String>,
    pub values: Vec<f64>,
    pub y_range: (f64, f64),
    pub kind: ChartKind,
    /// Indices drawn as marked dots.
    #[serde(default)]
    pub annotations: Vec<usize>,
}

impl ChartSpec {
    /// A chart whose y range is the values' span widened to include zero.
    pub fn fitted(title: impl Into<String>, x_labels: Vec<String>, values: Vec<f64>, kind: ChartKind) -> Self {
        let lo = values.iter().copied().fold(0.0f64, f64::min);
        let hi = values.iter().copied().fold(0.0f64, f64::max);
        let y_range = if lo == hi { (0.0, 1.0) } else { (lo, hi) };
        Self {
            title: title.into(),
            x_labels,
            values,
            y_range,
            kind,
            annotations: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_labels.len() != self.values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} labels for {} values",
                self.x_labels.len(),
                self.values.len()
            )));
        }
        let (lo, hi) = self.y_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSeries(format!("bad y range ({lo}, {hi})")));
        }
        if let Some(v) = self.values.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::InvalidSeries(format!("value {v} outside y range ({lo}, {hi})")));
        }
        if let Some(i) = self.annotations.iter().find(|&&i| i >= self.values.len()) {
            return Err(Error::InvalidSeries(format!("annotation index {i} out of bounds")));
        }
        Ok(())
    }

    /// Renders a standalone SVG 1.1 document.
    pub fn render(&self) -> Result<String> {
        self.validate()?;
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let (lo, hi) = self.y_range;
        let y_of = |v: f64| MARGIN_TOP + (hi - v) / (hi - lo) * plot_h;
        let n = self.values.len();
        let slot = if n == 0 { plot_w } else { plot_w / n as f64 };
        let x_of = |i: usize| MARGIN_LEFT + slot * (i as f64 + 0.5);

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = WIDTH,
            h = HEIGHT
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text class="title" x="{:.2}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        // Axes and y ticks.
        let _ = writeln!(
            s,
            r#"<line class="axis" x1="{l:.2}" y1="{t:.2}" x2="{l:.2}" y2="{b:.2}" stroke="black"/>"#,
            l = MARGIN_LEFT,
            t = MARGIN_TOP,
            b = MARGIN_TOP + plot_h
        );
        for k in 0..=Y_TICKS {
            let v = lo + (hi - lo) * k as f64 / Y_TICKS as f64;
            let y = y_of(v);
            let _ = writeln!(
                s,
                r##"<line class="grid" x1="{l:.2}" y1="{y:.2}" x2="{r:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
                l = MARGIN_LEFT,
                r = MARGIN_LEFT + plot_w
            );
            let _ = writeln!(
                s,
                r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 6.0,
                y + 4.0,
                sig6(v)
            );
        }
        let zero = if lo <= 0.0 && 0.0 <= hi { 0.0 } else { lo };
        let zero_y = y_of(zero);
        let _ = writeln!(
            s,
            r#"<line class="zero" x1="{l:.2}" y1="{zero_y:.2}" x2="{r:.2}" y2="{zero_y:.2}" stroke="black" stroke-width="1.5"/>"#,
            l = MARGIN_LEFT,
            r = MARGIN_LEFT + plot_w
        );

        match self.kind {
            ChartKind::Bar => {
                let bar_w = slot * 0.7;
                for (i, (&v, label)) in self.values.iter().zip(&self.x_labels).enumerate() {
                    let y = y_of(v);
                    let (top, height) = if v >= zero { (y, zero_y - y) } else { (zero_y, y - zero_y) };
                    let fill = if v >= zero { "#4c72b0" } else { "#c44e52" };
                    let _ = writeln!(
                        s,
                        r#"<rect class="bar" data-index="{i}" data-label="{}" data-value="{}" x="{:.2}" y="{top:.2}" width="{bar_w:.2}" height="{height:.2}" fill="{fill}"/>"#,
                        escape(label),
                        sig6(v),
                        x_of(i) - bar_w / 2.0,
                    );
                }
            }
            ChartKind::Line => {
                if n > 0 {
                    let points: Vec<String> = self
                        .values
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v)))
                        .collect();
                    let _ = writeln!(
                        s,
                        r##"<polyline class="series" points="{}" fill="none" stroke="#4c72b0" stroke-width="2"/>"##,
                        points.join(" ")
                    );
                }
            }
        }
        for &i in &self.annotations {
            let _ = writeln!(
                s,
                r#"<circle class="mark" data-index="{i}" data-value="{}" cx="{:.2}" cy="{:.2}" r="4" fill="red"/>"#,
                sig6(self.values[i]),
                x_of(i),
                y_of(self.values[i])
            );
        }

        // Line charts with many points label only the marked ones.
        let label_all = self.kind == ChartKind::Bar || self.annotations.is_empty();
        let label_y = MARGIN_TOP + plot_h + 12.0;
        for (i, label) in self.x_labels.iter().enumerate() {
            if !label_all && !self.annotations.contains(&i) {
                continue;
            }
            let x = x_of(i);
            let _ = writeln!(
                s,
                r#"<text class="label" x="{x:.2}" y="{label_y:.2}" text-anchor="end" transform="rotate(-60 {x:.2} {label_y:.2})">{}</text>"#,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
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

/// One bar per player in template order.
pub fn influence_chart(attribution: &Attribution, title: &str) -> ChartSpec {
    ChartSpec::fitted(title, attribution.labels.clone(), attribution.values.clone(), ChartKind::Bar)
}

/// Line chart of a sweep with dots at multiples of `k`.
pub fn sweep_chart(series: &SweepSeries, k: i64, title: &str) -> ChartSpec {
    let points = series.points();
    let mut spec = ChartSpec {
        title: title.into(),
        x_labels: points.iter().map(|p| p.x.to_string()).collect(),
        values: points.iter().map(|p| p.p).collect(),
        y_range: (0.0, 1.0),
        kind: ChartKind::Line,
        annotations: Vec::new(),
    };
    if k > 0 {
        spec.annotations = points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.x.rem_euclid(k) == 0)
            .map(|(i, _)| i)
            .collect();
    }
    spec
}

/// Writes the influence chart for `attribution` and returns the document.
pub fn emit_influence_chart(attribution: &Attribution, out_path: impl AsRef<Path>) -> Result<String> {
    if attribution.values.is_empty() {
        return Err(Error::NoPlayers);
    }
    write_doc(influence_chart(attribution, "Shapley attribution").render()?, out_path.as_ref())
}

pub fn emit_sweep_chart(series: &SweepSeries, k: i64, out_path: impl AsRef<Path>) -> Result<String> {
    write_doc(sweep_chart(series, k, "Target probability").render()?, out_path.as_ref())
}

fn write_doc(doc: String, path: &Path) -> Result<String> {
    std::fs::write(path, &doc).map_err(|e| Error::file(path, e))?;
    Ok(doc)
}
