//! Minimal SVG line charts: state components over time, and the gap over time
//! on a log scale.

use std::fmt::Write as _;

use crate::dynamics::TrajectoryRecord;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
const GAP_FLOOR: f64 = 1e-16;

struct Panel {
    top: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Panel {
    fn map(&self, t: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let px = MARGIN + (t - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * (WIDTH - 2.0 * MARGIN);
        let py = self.top + PANEL_HEIGHT - MARGIN - (y - y0) / (y1 - y0).max(f64::MIN_POSITIVE) * (PANEL_HEIGHT - 2.0 * MARGIN);
        (px, py)
    }

    fn frame(&self, out: &mut String, title: &str, y_label: (&str, &str)) {
        let (left, bottom) = self.map(self.x_range.0, self.y_range.0);
        let (right, top) = self.map(self.x_range.1, self.y_range.1);
        let _ = writeln!(
            out,
            r##"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
            right - left,
            bottom - top
        );
        let _ = writeln!(out, r#"<text x="{left:.1}" y="{:.1}" font-size="13">{title}</text>"#, top - 8.0);
        let _ = writeln!(out, r#"<text x="4" y="{:.1}" font-size="10">{}</text>"#, top + 4.0, y_label.1);
        let _ = writeln!(out, r#"<text x="4" y="{bottom:.1}" font-size="10">{}</text>"#, y_label.0);
        let _ = writeln!(out, r#"<text x="{left:.1}" y="{:.1}" font-size="10">{:.3}</text>"#, bottom + 14.0, self.x_range.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">t = {:.3}</text>"#,
            right,
            bottom + 14.0,
            self.x_range.1
        );
    }

    fn line(&self, out: &mut String, color: &str, points: impl Iterator<Item = (f64, f64)>) {
        let path: Vec<String> = points
            .map(|(t, y)| {
                let (px, py) = self.map(t, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{}"/>"#, path.join(" "));
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Two stacked panels, states above, `log10` gap below.
pub fn trajectory_svg(traj: &TrajectoryRecord, title: &str) -> String {
    let t_range = range(traj.times.iter().copied());
    let states = Panel { top: 0.0, x_range: t_range, y_range: range(traj.states.iter().flat_map(|x| x.iter().copied())) };
    let log_gap = |g: f64| g.max(GAP_FLOOR).log10();
    let gaps = Panel { top: PANEL_HEIGHT, x_range: t_range, y_range: range(traj.gaps.iter().map(|&g| log_gap(g))) };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{}" viewBox="0 0 {WIDTH} {}">"#,
        2.0 * PANEL_HEIGHT,
        2.0 * PANEL_HEIGHT
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let fmt = |v: f64| format!("{v:.3}");
    states.frame(&mut out, &format!("{} state", escape(title)), (&fmt(states.y_range.0), &fmt(states.y_range.1)));
    for i in 0..traj.dim() {
        let color = COLORS[i % COLORS.len()];
        states.line(&mut out, color, traj.times.iter().zip(&traj.states).map(|(&t, x)| (t, x[i])));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">x_{}</text>"#,
            WIDTH - MARGIN + 6.0,
            MARGIN + 14.0 * i as f64,
            i + 1
        );
    }
    let exp = |v: f64| format!("1e{v:.1}");
    gaps.frame(&mut out, "gap (log10)", (&exp(gaps.y_range.0), &exp(gaps.y_range.1)));
    gaps.line(&mut out, "#333", traj.times.iter().zip(&traj.gaps).map(|(&t, &g)| (t, log_gap(g))));
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
