//! CSV reports and SVG line plots.

use std::fmt::Write as _;

use scalab_core::adversarial::{AmplitudeHistogram, PerturbationSet};
use scalab_core::countermeasure::ProbeStep;
use scalab_core::evaluation::{OverheadRow, RankCurve};

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 fields")
}

/// `trace_id,position,amplitude,success,confidence_target_class,achieved_confidence`
pub fn perturbations_csv(set: &PerturbationSet) -> String {
    csv_text(
        &["trace_id", "position", "amplitude", "success", "confidence_target_class", "achieved_confidence"],
        set.perturbations.iter().map(|p| {
            vec![
                p.trace_id.to_string(),
                p.position.to_string(),
                p.amplitude.to_string(),
                p.success.to_string(),
                p.target_class.to_string(),
                p.target_confidence().to_string(),
            ]
        }),
    )
}

/// `M,mean_rank,rep_0,rep_1,...`
pub fn rank_curve_csv(curve: &RankCurve) -> String {
    let mut header = vec!["M".to_string(), "mean_rank".to_string()];
    header.extend((0..curve.ranks.len()).map(|r| format!("rep_{r}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(
        &header,
        curve.mean.iter().enumerate().map(|(j, m)| {
            let mut row = vec![(j + 1).to_string(), m.to_string()];
            row.extend(curve.ranks.iter().map(|r| r[j].to_string()));
            row
        }),
    )
}

/// `variant,min,avg,max`, average to three decimals.
pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    csv_text(
        &["variant", "min", "avg", "max"],
        rows.iter().map(|r| vec![r.variant.clone(), r.min.to_string(), format!("{:.3}", r.avg), r.max.to_string()]),
    )
}

/// `iteration,index,observed`
pub fn probe_log_csv(steps: &[ProbeStep]) -> String {
    csv_text(
        &["iteration", "index", "observed"],
        steps.iter().map(|s| vec![s.iteration.to_string(), s.index.to_string(), s.observed.to_string()]),
    )
}

/// `sample,count`
pub fn position_histogram_csv(h: &[usize]) -> String {
    csv_text(&["sample", "count"], h.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.to_string()]))
}

/// `lo,hi,count,mean`; empty bins have an empty mean.
pub fn amplitude_histogram_csv(h: &AmplitudeHistogram) -> String {
    csv_text(
        &["lo", "hi", "count", "mean"],
        (0..h.counts.len()).map(|b| {
            let (lo, hi) = h.edges(b);
            let mean = if h.counts[b] == 0 { String::new() } else { h.bin_mean(b).to_string() };
            vec![lo.to_string(), hi.to_string(), h.counts[b].to_string(), mean]
        }),
    )
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Plain line plot with axis labels, tick values at the ends and a legend.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (64.0, 16.0, 32.0, 48.0);
    let (x0, x1) = axis_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = axis_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} L{left},{} L{},{}" stroke="black" fill="none"/>"#,
        h - bottom,
        w - right,
        h - bottom
    );
    for (x, anchor, v) in [(left, "start", x0), (w - right, "end", x1)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{}</text>"#, h - bottom + 14.0, tick(v));
    }
    for (y, v) in [(h - bottom, y0), (top, y1)] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, left - 4.0, y + 4.0, tick(v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, w / 2.0, h - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for (j, &(x, y)) in ser.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { 'M' } else { 'L' }, sx(x), sy(y));
        }
        let _ = writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#, d.trim_end());
        let ly = top + 14.0 * i as f64 + 8.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - right - 120.0, w - right - 100.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, w - right - 96.0, ly + 4.0, escape(ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn rank_series<'a>(name: &'a str, curve: &RankCurve) -> Series<'a> {
    Series { name, points: curve.mean.iter().enumerate().map(|(j, &r)| ((j + 1) as f64, r)).collect() }
}
