use std::fmt::Write;

use crate::autodiff::Tensor;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;
/// Points drawn per class; the rest are skipped to keep files small.
const MAX_POINTS: usize = 2000;

/// A self-contained scatter plot of named point classes (`[n, 2]` tensors).
pub fn scatter(title: &str, classes: &[(&str, &str, &Tensor)]) -> String {
    let mut extent: f64 = 1.0;
    for (_, _, t) in classes {
        for &v in t.data() {
            if v.is_finite() {
                extent = extent.max(v.abs());
            }
        }
    }
    let extent = (extent * 1.1).ceil();
    let span = SIZE - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + (v + extent) / (2.0 * extent) * span;
    let py = |v: f64| SIZE - px(v);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let (lo, hi, mid) = (MARGIN, SIZE - MARGIN, px(0.0));
    let _ = writeln!(
        s,
        r##"<g stroke="#999" stroke-width="1"><line x1="{lo}" y1="{mid:.2}" x2="{hi}" y2="{mid:.2}"/><line x1="{mid:.2}" y1="{lo}" x2="{mid:.2}" y2="{hi}"/></g>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{hi}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{extent}</text>"#,
        mid - 4.0
    );
    for (i, (name, color, t)) in classes.iter().enumerate() {
        let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.5">"#);
        let step = t.rows().div_ceil(MAX_POINTS).max(1);
        for r in (0..t.rows()).step_by(step) {
            let p = t.row(r);
            if p[0].is_finite() && p[1].is_finite() {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#,
                    px(p[0].clamp(-extent, extent)),
                    py(p[1].clamp(-extent, extent))
                );
            }
        }
        let _ = writeln!(s, "</g>");
        let y = 44.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            SIZE - 150.0,
            y - 4.0,
            SIZE - 140.0,
            y,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
