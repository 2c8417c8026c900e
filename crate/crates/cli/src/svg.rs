//! Standalone SVG renderings of the boxplot and ROC tables.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct BoxRow {
    pub label: String,
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_whisker: f64,
    /// Held-out value drawn as a marker.
    pub marker: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocSeries {
    pub label: String,
    /// `(1 − specificity, sensitivity)` points.
    pub points: Vec<(f64, f64)>,
    pub chosen: Option<(f64, f64)>,
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

/// Vertical boxplots, one per row, with a dashed zero line.
pub fn boxplot(title: &str, rows: &[BoxRow]) -> String {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for r in rows {
        lo = lo.min(r.lower_whisker).min(r.marker.unwrap_or(0.0));
        hi = hi.max(r.upper_whisker).max(r.marker.unwrap_or(0.0));
    }
    let span = (hi - lo).max(1e-6);
    let (lo, hi) = (lo - 0.05 * span, hi + 0.05 * span);
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let slot = (W - 2.0 * PAD) / rows.len().max(1) as f64;
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "test", "utility difference");
    for v in [lo, 0.0, hi] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            PAD - 4.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
        W - PAD,
        y(0.0),
        y(0.0)
    );
    for (i, r) in rows.iter().enumerate() {
        let cx = PAD + slot * (i as f64 + 0.5);
        let half = (slot * 0.3).min(30.0);
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
            y(r.lower_whisker),
            y(r.upper_whisker)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(r.q3),
            2.0 * half,
            (y(r.q1) - y(r.q3)).max(0.5)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            y(r.median),
            y(r.median)
        );
        if let Some(m) = r.marker {
            let _ = writeln!(
                out,
                r##"<circle cx="{cx:.1}" cy="{:.1}" r="4" fill="#d62728"/>"##,
                y(m)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{}</text>"#,
            H - PAD + 16.0,
            escape(&r.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// ROC curves on the unit square with the chosen operating points marked.
pub fn roc(title: &str, series: &[RocSeries]) -> String {
    let x = |v: f64| PAD + v * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - v * (H - 2.0 * PAD);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "1 - specificity", "sensitivity");
    let _ = writeln!(
        out,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = s.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let d: Vec<String> = pts.iter().map(|&(a, b)| format!("{:.1},{:.1}", x(a), y(b))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            d.join(" ")
        );
        if let Some((a, b)) = s.chosen {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"/>"#,
                x(a),
                y(b)
            );
        }
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#,
            W - PAD - 150.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_documents() {
        let b = boxplot(
            "Δ",
            &[BoxRow {
                label: "m=2".into(),
                lower_whisker: -0.1,
                q1: -0.05,
                median: -0.02,
                q3: 0.0,
                upper_whisker: 0.03,
                marker: Some(-0.01),
            }],
        );
        assert!(b.starts_with("<svg") && b.trim_end().ends_with("</svg>"));
        assert_eq!(b.matches("<rect").count(), 2);
        let r = roc(
            "ROC <full>",
            &[RocSeries {
                label: "full".into(),
                points: vec![(0.0, 0.0), (0.2, 0.7), (1.0, 1.0)],
                chosen: Some((0.2, 0.7)),
            }],
        );
        assert!(r.contains("&lt;full&gt;"));
        assert_eq!(r.matches("<polyline").count(), 1);
    }
}
