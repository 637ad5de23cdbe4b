//! Minimal SVG 1.1 charts. Output depends only on the input numbers.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(title: &str, height: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

/// Axis range padded so flat series still get a visible band.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn axes(s: &mut String, x_label: &str, y_label: &str, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) {
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = LEFT + f * pw;
        let y = TOP + ph - f * ph;
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, fmt_tick(x0 + f * (x1 - x0)));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(y0 + f * (y1 - y0)));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// One polyline per series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = header(title, HEIGHT);
    let xr = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let yr = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    axes(&mut s, x_label, y_label, xr, yr);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| {
                let px = LEFT + (x - xr.0) / (xr.1 - xr.0) * pw;
                let py = TOP + ph - (y - yr.0) / (yr.1 - yr.0) * ph;
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="12" height="3" fill="{color}"/>"#, LEFT + pw - 150.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, LEFT + pw - 132.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical bars, one per labelled count.
pub fn bar_chart(title: &str, x_label: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut s = header(title, HEIGHT);
    let ymax = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(1.0);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#, TOP + ph, LEFT + pw);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, TOP + ph - f * ph + 4.0, fmt_tick(f * ymax));
    }
    let slot = pw / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = v / ymax * ph;
        let x = LEFT + i as f64 * slot + slot * 0.1;
        let _ = writeln!(s, r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#, TOP + ph - h, slot * 0.8, PALETTE[0]);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{}</text>"#, x + slot * 0.4, TOP + ph + 16.0, escape(label));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}

/// A text table.
pub fn table(title: &str, header_row: &[String], rows: &[Vec<String>]) -> String {
    let row_h = 20.0;
    let height = TOP + row_h * (rows.len() + 1) as f64 + 20.0;
    let mut s = header(title, height);
    let col_w = (WIDTH - 20.0) / header_row.len().max(1) as f64;
    for (r, row) in std::iter::once(header_row).chain(rows.iter().map(Vec::as_slice)).enumerate() {
        let y = TOP + row_h * (r as f64 + 0.5) + 10.0;
        let weight = if r == 0 { r#" font-weight="bold""# } else { "" };
        for (c, cell) in row.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}"{weight}>{}</text>"#, 10.0 + c as f64 * col_w, escape(cell));
        }
    }
    s.push_str("</svg>\n");
    s
}
