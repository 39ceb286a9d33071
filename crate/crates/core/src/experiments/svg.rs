use std::fmt::Write;

const SIZE: f64 = 420.0;
const MARGIN: f64 = 48.0;

pub const TASK_COLORS: [&str; 4] = ["#c0392b", "#1f618d", "#117a65", "#7d3c98"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of elements by two qualifications, opacity showing the chance of
/// a positive outcome.
pub fn heat_scatter(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64], probs: &[f64], color: &str) -> String {
    let span = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + x * span;
    let py = |y: f64| SIZE - MARGIN - y * span;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle">{}</text>"#, SIZE / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{span}" height="{span}" fill="none" stroke="#888"/>"##
    );
    for t in [0.0, 0.5, 1.0] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#, px(t), SIZE - MARGIN + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{t}</text>"#, MARGIN - 6.0, py(t) + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        SIZE - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        escape(y_label)
    );
    for ((&x, &y), &p) in xs.iter().zip(ys).zip(probs) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4.5" fill="{color}" fill-opacity="{p:.4}" stroke="{color}" stroke-opacity="0.25"/>"#,
            px(x),
            py(y)
        );
    }
    s.push_str("</svg>\n");
    s
}
