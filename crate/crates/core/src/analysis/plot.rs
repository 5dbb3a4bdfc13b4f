//! Minimal SVG log-log plots of convergence tables.

use std::fmt::Write;

use crate::analysis::study::ConvergenceTable;

const W: f64 = 640.0;
const H: f64 = 440.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        PAD + (x.log10() - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y.log10() - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

/// Log-log plot of one or more tables with 90% bands drawn as error bars and
/// a dashed line of slope `reference_slope` through the first point of the
/// first table. Non-positive values are skipped.
pub fn loglog_svg(tables: &[(&str, &ConvergenceTable)], reference_slope: f64, title: &str) -> String {
    let pts: Vec<(f64, f64)> = tables
        .iter()
        .flat_map(|(_, t)| t.rows.iter())
        .flat_map(|r| {
            [
                (r.n as f64, r.estimate),
                (r.n as f64, r.estimate + r.ci_half_width),
                (r.n as f64, r.estimate - r.ci_half_width),
            ]
        })
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let lg = |v: f64| v.log10();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(lg(x));
        x1 = x1.max(lg(x));
        y0 = y0.min(lg(y));
        y1 = y1.max(lg(y));
    }
    let ax = Axes {
        x0: x0.floor(),
        x1: x1.ceil().max(x0.floor() + 1.0),
        y0: y0.floor(),
        y1: y1.ceil().max(y0.floor() + 1.0),
    };
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for e in ax.x0 as i32..=ax.x1 as i32 {
        let x = ax.px(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#,
            H - PAD + 18.0
        );
    }
    for e in ax.y0 as i32..=ax.y1 as i32 {
        let y = ax.py(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#,
            PAD - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, W / 2.0, H - 16.0);

    if let Some(first) = tables.first().and_then(|(_, t)| t.rows.iter().find(|r| r.estimate > 0.0)) {
        let (n0, e0) = (first.n as f64, first.estimate);
        let (a, b) = (10f64.powf(ax.x0), 10f64.powf(ax.x1));
        let at = |n: f64| e0 * (n / n0).powf(reference_slope);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#777" stroke-dasharray="6 4" clip-path="url(#plot)"/>"##,
            ax.px(a),
            ax.py(at(a)),
            ax.px(b),
            ax.py(at(b))
        );
    }
    let _ = writeln!(
        s,
        r#"<clipPath id="plot"><rect x="{PAD}" y="{PAD}" width="{}" height="{}"/></clipPath>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );

    for (k, (label, t)) in tables.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        let rows: Vec<_> = t.rows.iter().filter(|r| r.n > 0 && r.estimate > 0.0).collect();
        let line: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.1},{:.1}", ax.px(r.n as f64), ax.py(r.estimate)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}"/>"#, line.join(" "));
        for r in &rows {
            let x = ax.px(r.n as f64);
            let lo = r.estimate - r.ci_half_width;
            if r.ci_half_width > 0.0 && lo > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{c}"/>"#,
                    ax.py(lo),
                    ax.py(r.estimate + r.ci_half_width)
                );
            }
            let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, ax.py(r.estimate));
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{c}">{}</text>"#,
            W - PAD - 150.0,
            PAD + 18.0 * (k as f64 + 1.0),
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="{:.1}" fill="#777">slope {reference_slope}</text>"##,
        W - PAD - 150.0,
        PAD + 18.0 * (tables.len() as f64 + 1.0)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
