//! Self-contained SVG charts.

use std::fmt::Write;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Row-normalized confusion matrix as a gray heat map with cell values.
pub fn confusion_svg(title: &str, classes: &[String], matrix: &[Vec<f64>]) -> String {
    let n = classes.len();
    let cell = 36;
    let margin = 110;
    let side = margin + n * cell + 20;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{}" font-family="sans-serif" font-size="10">"#,
        side + 20
    );
    let _ = writeln!(s, r#"<text x="10" y="16" font-size="13">{}</text>"#, escape(title));
    for (i, name) in classes.iter().enumerate() {
        let c = margin + i * cell + cell / 2;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            margin - 4,
            margin + i * cell + cell / 2 + 4,
            escape(name)
        );
        let _ = writeln!(
            s,
            r#"<text x="{c}" y="{}" text-anchor="start" transform="rotate(-60 {c} {})">{}</text>"#,
            margin - 4,
            margin - 4,
            escape(name)
        );
    }
    for (t, row) in matrix.iter().enumerate() {
        for (p, &v) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let (x, y) = (margin + p * cell, margin + t * cell);
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},{shade})" stroke="#999"/>"##
            );
            let ink = if v > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v:.2}</text>"#,
                x + cell / 2,
                y + cell / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One horizontal row of bars per named series, bar `m` at patch `m`.
pub fn attention_svg(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let bar = 12;
    let row_h = 80;
    let left = 80;
    let m = series.iter().map(|(_, w)| w.len()).max().unwrap_or(0);
    let width = left + m * bar + 20;
    let height = 30 + series.len() * (row_h + 20);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="16" font-size="13">{}</text>"#, escape(title));
    for (r, (name, weights)) in series.iter().enumerate() {
        let base = 30 + r * (row_h + 20) + row_h;
        let peak = weights.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}">{}</text>"#,
            base - row_h / 2,
            escape(name)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="#444"/>"##,
            left + weights.len() * bar
        );
        for (i, &w) in weights.iter().enumerate() {
            let h = (w / peak * row_h as f64).round() as usize;
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{}" height="{h}" fill="#3a6ea5"><title>patch {i}: {w}</title></rect>"##,
                left + i * bar + 1,
                base - h,
                bar - 2
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
