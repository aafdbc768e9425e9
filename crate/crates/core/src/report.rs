//! Boxplot statistics and their CSV/JSON/SVG emission.
//!
//! Quartiles use linear interpolation between order statistics (R's
//! "type 7"). Whiskers reach the most extreme samples inside the
//! `1.5 * IQR` fences, and the notch is `median ± 1.57 * IQR / sqrt(n)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "nsim.boxstats/1";
const NOTCH_FACTOR: f64 = 1.57;
const FENCE_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub notch_low: f64,
    pub notch_high: f64,
    pub outliers: Vec<f64>,
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(samples: &[f64]) -> Result<BoxStats> {
    if samples.is_empty() {
        return Err(Error::invalid("boxplot statistics need at least one sample"));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample {bad}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let fence_low = q1 - FENCE_FACTOR * iqr;
    let fence_high = q3 + FENCE_FACTOR * iqr;
    // Samples equal to a quartile always lie inside the fences, so both
    // searches succeed.
    let whisker_low = *sorted.iter().find(|&&v| v >= fence_low).unwrap();
    let whisker_high = *sorted.iter().rev().find(|&&v| v <= fence_high).unwrap();
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < whisker_low || v > whisker_high)
        .collect();
    let half_notch = NOTCH_FACTOR * iqr / (n as f64).sqrt();
    Ok(BoxStats {
        n,
        mean: sorted.iter().sum::<f64>() / n as f64,
        median,
        q1,
        q3,
        iqr,
        whisker_low,
        whisker_high,
        notch_low: median - half_notch,
        notch_high: median + half_notch,
        outliers,
    })
}

/// A labelled sample set, drawn as one box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub label: String,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(Error::invalid(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmitOptions {
    pub include_samples: bool,
    pub log2_scale: bool,
    pub title: String,
    pub y_label: String,
}

#[derive(Serialize, Deserialize)]
pub struct JsonReport {
    pub schema: String,
    pub groups: Vec<JsonGroup>,
}

#[derive(Serialize, Deserialize)]
pub struct JsonGroup {
    pub label: String,
    pub stats: BoxStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

/// Renders `groups` in `format`.
pub fn render(groups: &[Group], format: Format, opts: &EmitOptions) -> Result<String> {
    if groups.is_empty() {
        return Err(Error::invalid("nothing to report"));
    }
    let stats = groups
        .iter()
        .map(|g| box_stats(&g.samples))
        .collect::<Result<Vec<_>>>()?;
    match format {
        Format::Csv => Ok(render_csv(groups, &stats, opts)),
        Format::Json => {
            let report = JsonReport {
                schema: SCHEMA.to_string(),
                groups: groups
                    .iter()
                    .zip(stats)
                    .map(|(g, stats)| JsonGroup {
                        label: g.label.clone(),
                        stats,
                        samples: opts.include_samples.then(|| g.samples.clone()),
                    })
                    .collect(),
            };
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
        Format::Svg => render_svg(groups, &stats, opts),
    }
}

/// Renders and writes to `path`.
pub fn emit(groups: &[Group], format: Format, path: &Path, opts: &EmitOptions) -> Result<()> {
    let text = render(groups, format, opts)?;
    fs::write(path, text)?;
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn render_csv(groups: &[Group], stats: &[BoxStats], opts: &EmitOptions) -> String {
    let mut out = format!("# schema={SCHEMA}\n");
    out.push_str("label,n,mean,median,q1,q3,iqr,whisker_low,whisker_high,notch_low,notch_high,outliers");
    if opts.include_samples {
        out.push_str(",samples");
    }
    out.push('\n');
    for (g, s) in groups.iter().zip(stats) {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            g.label.replace(',', ";"),
            s.n,
            s.mean,
            s.median,
            s.q1,
            s.q3,
            s.iqr,
            s.whisker_low,
            s.whisker_high,
            s.notch_low,
            s.notch_high,
            join(&s.outliers)
        );
        if opts.include_samples {
            let _ = write!(out, ",{}", join(&g.samples));
        }
        out.push('\n');
    }
    out
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn render_svg(groups: &[Group], stats: &[BoxStats], opts: &EmitOptions) -> Result<String> {
    const LEFT: f64 = 80.0;
    const TOP: f64 = 40.0;
    const PLOT_H: f64 = 300.0;
    const SLOT: f64 = 90.0;
    const BOX_W: f64 = 40.0;

    let lo = groups
        .iter()
        .flat_map(|g| g.samples.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let hi = groups
        .iter()
        .flat_map(|g| g.samples.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    if opts.log2_scale && lo <= 0.0 {
        return Err(Error::invalid(format!(
            "log2 scale needs positive values; smallest is {lo}"
        )));
    }
    let axis = |v: f64| if opts.log2_scale { v.log2() } else { v };
    let (mut a_lo, mut a_hi) = (axis(lo), axis(hi));
    if opts.log2_scale {
        a_lo = a_lo.floor();
        a_hi = a_hi.ceil();
    }
    if a_hi - a_lo < 1e-12 {
        a_lo -= 0.5;
        a_hi += 0.5;
    }
    let y = |v: f64| TOP + PLOT_H - (axis(v) - a_lo) / (a_hi - a_lo) * PLOT_H;

    let width = LEFT + SLOT * groups.len() as f64 + 20.0;
    let height = TOP + PLOT_H + 60.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !opts.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
            width / 2.0,
            escape(&opts.title)
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        TOP + PLOT_H
    );
    let ticks: Vec<f64> = if opts.log2_scale {
        (a_lo as i32..=a_hi as i32).map(|e| 2f64.powi(e)).collect()
    } else {
        (0..=5).map(|i| a_lo + (a_hi - a_lo) * f64::from(i) / 5.0).collect()
    };
    for t in ticks {
        let ty = y(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ty:.2}" x2="{LEFT}" y2="{ty:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            LEFT - 6.0,
            ty + 4.0,
            format_tick(t)
        );
    }
    if !opts.y_label.is_empty() {
        let cy = TOP + PLOT_H / 2.0;
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{cy}" text-anchor="middle" transform="rotate(-90 14 {cy})">{}</text>"#,
            escape(&opts.y_label)
        );
    }

    for (i, (g, s)) in groups.iter().zip(stats).enumerate() {
        let cx = LEFT + SLOT * (i as f64 + 0.5);
        let (l, r) = (cx - BOX_W / 2.0, cx + BOX_W / 2.0);
        let notch_w = BOX_W / 4.0;
        let (yq1, yq3, ymed) = (y(s.q1), y(s.q3), y(s.median));
        // Notch limits are clamped to the box so that they stay drawable.
        let ynl = y(s.notch_low.max(s.q1).max(if opts.log2_scale { lo } else { f64::MIN }));
        let ynh = y(s.notch_high.min(s.q3));
        let _ = writeln!(svg, r#"<g class="box" data-label="{}">"#, escape(&g.label));
        let _ = writeln!(
            svg,
            r#"<line class="whisker" x1="{cx}" y1="{:.2}" x2="{cx}" y2="{yq3:.2}" stroke="black"/><line class="whisker" x1="{cx}" y1="{yq1:.2}" x2="{cx}" y2="{:.2}" stroke="black"/>"#,
            y(s.whisker_high),
            y(s.whisker_low)
        );
        for w in [s.whisker_low, s.whisker_high] {
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="black"/>"#,
                cx - BOX_W / 4.0,
                y(w),
                cx + BOX_W / 4.0,
                y(w)
            );
        }
        let _ = writeln!(
            svg,
            r#"<polygon class="notched-box" points="{l},{yq3:.2} {r},{yq3:.2} {r},{ynh:.2} {},{ymed:.2} {r},{ynl:.2} {r},{yq1:.2} {l},{yq1:.2} {l},{ynl:.2} {},{ymed:.2} {l},{ynh:.2}" fill="lightsteelblue" stroke="black"/>"#,
            r - notch_w,
            l + notch_w
        );
        let _ = writeln!(
            svg,
            r#"<line class="median" x1="{}" y1="{ymed:.2}" x2="{}" y2="{ymed:.2}" stroke="black" stroke-width="2"/>"#,
            l + notch_w,
            r - notch_w
        );
        let ymean = y(s.mean);
        let _ = writeln!(
            svg,
            r#"<rect class="mean" x="{}" y="{:.2}" width="6" height="6" fill="white" stroke="black"/>"#,
            cx - 3.0,
            ymean - 3.0
        );
        for &o in &s.outliers {
            let oy = y(o);
            let _ = writeln!(
                svg,
                r#"<polygon class="outlier" points="{cx},{:.2} {},{oy:.2} {cx},{:.2} {},{oy:.2}" fill="black"/>"#,
                oy - 3.5,
                cx + 3.5,
                oy + 3.5,
                cx - 3.5
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{}</text>"#,
            TOP + PLOT_H + 18.0,
            escape(&g.label)
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
