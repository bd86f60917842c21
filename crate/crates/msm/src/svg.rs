//! Minimal SVG renderings: the ranked chi-square line plot and boxplots.

use std::fmt::Write;

use msm_core::posterior::BoxStats;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Scale {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.lo) / (self.hi - self.lo) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str, scale: &Scale) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.2} {y0:.2} V{y1:.2} H{x1:.2}" stroke="black" fill="none"/>"#
    );
    for j in 0..=4 {
        let v = scale.lo + (scale.hi - scale.lo) * j as f64 / 4.0;
        let y = scale.y(v);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            x0 - 4.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

/// Scores in rank order; the elbow point (1-based rank) is circled and
/// the selected ranks are drawn in a second color.
pub fn elbow_plot(scores: &[f64], labels: &[String], elbow_rank: Option<usize>, selected: usize) -> String {
    let mut out = String::new();
    let scale = Scale::new(scores.iter().copied());
    frame(&mut out, "Ranked chi-square scores", "rank", "chi-square", &scale);
    let n = scores.len().max(2);
    let x = |i: usize| MARGIN + i as f64 / (n - 1) as f64 * (WIDTH - 2.0 * MARGIN);
    let mut d = String::new();
    for (i, s) in scores.iter().enumerate() {
        let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, x(i), scale.y(*s));
    }
    let _ = writeln!(out, r#"<path d="{}" stroke="gray" fill="none"/>"#, d.trim_end());
    for (i, s) in scores.iter().enumerate() {
        let color = if i < selected { "#1f5fbf" } else { "#888888" };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"><title>{} {}</title></circle>"#,
            x(i),
            scale.y(*s),
            i + 1,
            escape(labels.get(i).map(String::as_str).unwrap_or(""))
        );
    }
    if let Some(r) = elbow_rank.filter(|&r| r >= 1 && r <= scores.len()) {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="8" stroke="#c0392b" fill="none" stroke-width="2"/>"##,
            x(r - 1),
            scale.y(scores[r - 1])
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One box per item; outliers are not drawn. Highlighted items get a
/// filled box.
pub fn boxplot(title: &str, y_label: &str, items: &[(String, BoxStats, bool)]) -> String {
    let mut out = String::new();
    let scale = Scale::new(
        items
            .iter()
            .flat_map(|(_, b, _)| [b.whisker_low, b.whisker_high])
            .chain([0.0]),
    );
    frame(&mut out, title, "", y_label, &scale);
    let slot = (WIDTH - 2.0 * MARGIN) / items.len().max(1) as f64;
    let zero = scale.y(0.0);
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN:.2}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#bbbbbb" stroke-dasharray="4 3"/>"##,
        WIDTH - MARGIN
    );
    for (j, (label, b, highlight)) in items.iter().enumerate() {
        let cx = MARGIN + slot * (j as f64 + 0.5);
        let half = (slot * 0.3).min(24.0);
        let fill = if *highlight { "#f5c542" } else { "#dde6f3" };
        let (q1, q3, med) = (scale.y(b.q1), scale.y(b.q3), scale.y(b.median));
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{q3:.2}" stroke="black"/>"#,
            scale.y(b.whisker_high)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" y1="{q1:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            scale.y(b.whisker_low)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{q3:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="black"/>"#,
            cx - half,
            2.0 * half,
            (q1 - q3).max(0.0)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{med:.2}" x2="{:.2}" y2="{med:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 14.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elbow_plot_marks_point() {
        let s = elbow_plot(&[10.0, 9.0, 1.0], &["a".into(), "b".into(), "c<".into()], Some(2), 1);
        assert!(s.starts_with("<svg"));
        assert!(s.contains("c&lt;"));
        assert_eq!(s.matches("<circle").count(), 4);
    }

    #[test]
    fn boxplot_is_well_formed() {
        let b = BoxStats::from_values(&[1.0, 2.0, 3.0]).unwrap();
        let s = boxplot("t", "y", &[("x".into(), b, true), ("y".into(), b, false)]);
        assert_eq!(s.matches("<rect").count(), 3);
        assert!(s.trim_end().ends_with("</svg>"));
    }
}
