//! Static SVG charts, written by hand.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2.0, MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Maps `[lo, hi]` onto `[a, b]` with 10% padding on each side.
fn scale(lo: f64, hi: f64, a: f64, b: f64) -> impl Fn(f64) -> f64 {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (lo, hi) = (lo - 0.1 * span, hi + 0.1 * span);
    move |v| a + (v - lo) / (hi - lo) * (b - a)
}

pub struct LabeledPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// Scatter of labelled points plus free annotations below the legend.
pub fn scatter(title: &str, points: &[LabeledPoint], annotations: &[String]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "per-period engagement", "per-period utility");
    let xs = points.iter().map(|p| p.x);
    let ys = points.iter().map(|p| p.y);
    let sx = scale(
        xs.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
        MARGIN,
        WIDTH - MARGIN / 2.0,
    );
    let sy = scale(
        ys.clone().fold(f64::INFINITY, f64::min),
        ys.fold(f64::NEG_INFINITY, f64::max),
        HEIGHT - MARGIN,
        MARGIN,
    );
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (i, p) in points.iter().enumerate() {
        let (cx, cy) = (sx(p.x), sy(p.y));
        let _ = writeln!(
            out,
            r#"<circle class="marker" cx="{cx:.2}" cy="{cy:.2}" r="6" fill="{}"/>"#,
            colors[i % colors.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{} ({:.4}, {:.4})</text>"#,
            cx + 10.0,
            cy - 8.0,
            escape(&p.label),
            p.x,
            p.y
        );
    }
    for (i, note) in annotations.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="annotation" x="{}" y="{}">{}</text>"#,
            MARGIN + 12.0,
            MARGIN + 16.0 * (i as f64 + 1.0),
            escape(note)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub struct BarGroup {
    pub label: String,
    pub values: Vec<f64>,
}

/// Grouped bars around a zero baseline.
pub fn grouped_bars(title: &str, series: &[&str], groups: &[BarGroup], y_label: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "", y_label);
    let all = groups.iter().flat_map(|g| g.values.iter().copied());
    let lo = all.clone().fold(0.0, f64::min);
    let hi = all.fold(0.0, f64::max);
    let sy = scale(lo, hi, HEIGHT - MARGIN, MARGIN);
    let zero = sy(0.0);
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="#888"/>"##,
        WIDTH - MARGIN / 2.0
    );
    let colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
    let plot_w = WIDTH - 1.5 * MARGIN;
    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = 0.8 * group_w / series.len().max(1) as f64;
    for (gi, group) in groups.iter().enumerate() {
        let gx = MARGIN + gi as f64 * group_w + 0.1 * group_w;
        for (si, v) in group.values.iter().enumerate() {
            let y = sy(*v);
            let (top, h) = if y < zero {
                (y, zero - y)
            } else {
                (zero, y - zero)
            };
            let _ = writeln!(
                out,
                r#"<rect class="bar" x="{:.2}" y="{top:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{}"><title>{}: {v:.5}</title></rect>"#,
                gx + si as f64 * bar_w,
                colors[si % colors.len()],
                escape(series.get(si).copied().unwrap_or(""))
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            gx + 0.4 * group_w,
            HEIGHT - MARGIN + 14.0,
            escape(&group.label)
        );
    }
    for (si, name) in series.iter().enumerate() {
        let y = MARGIN + 16.0 * si as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - 170.0,
            y,
            colors[si % colors.len()],
            WIDTH - 155.0,
            y + 9.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
