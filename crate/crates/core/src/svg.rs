//! Minimal SVG plots: grouped bars for distributions, a step line for
//! validation counters.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 4] = ["#3b6ea5", "#d98c2b", "#5a9e5a", "#a64d79"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{x}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{t}</text>\n\
         <line x1=\"{PAD}\" y1=\"{yb}\" x2=\"{xr}\" y2=\"{yb}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{yb}\" stroke=\"black\"/>\n{body}</svg>\n",
        x = W / 2.0,
        t = escape(title),
        yb = H - PAD,
        xr = W - PAD,
    )
}

/// Grouped bar chart: one group per label, one bar per series.
pub fn bar_chart(title: &str, labels: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let mut body = String::new();
    let top = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let plot_w = W - 2.0 * PAD;
    let plot_h = H - 2.0 * PAD;
    let group = plot_w / labels.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (g, label) in labels.iter().enumerate() {
        let x0 = PAD + g as f64 * group + group * 0.1;
        for (s, (_, values)) in series.iter().enumerate() {
            let v = values.get(g).copied().unwrap_or(0.0);
            let h = v / top * plot_h;
            let _ = writeln!(
                body,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                x0 + s as f64 * bar,
                H - PAD - h,
                bar,
                h,
                COLORS[s % COLORS.len()]
            );
        }
        if labels.len() <= 40 {
            let _ = writeln!(
                body,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"9\" text-anchor=\"end\" transform=\"rotate(-45 {:.2} {:.2})\">{}</text>",
                x0 + group * 0.4,
                H - PAD + 12.0,
                x0 + group * 0.4,
                H - PAD + 12.0,
                escape(label)
            );
        }
    }
    for (s, (name, _)) in series.iter().enumerate() {
        let y = PAD + 14.0 * s as f64;
        let _ = writeln!(
            body,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            W - PAD - 120.0,
            y - 9.0,
            COLORS[s % COLORS.len()],
            W - PAD - 105.0,
            y,
            escape(name)
        );
    }
    let _ = writeln!(
        body,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{top:.3}</text>",
        PAD - 4.0,
        PAD + 4.0
    );
    frame(title, &body)
}

/// Step plot of one or more integer traces against event number.
pub fn trace_plot(title: &str, traces: &[(&str, &[i64])]) -> String {
    let mut body = String::new();
    let len = traces.iter().map(|(_, t)| t.len()).max().unwrap_or(0).max(1);
    let (lo, hi) = traces
        .iter()
        .flat_map(|(_, t)| t.iter().copied())
        .fold((0i64, 0i64), |(a, b), v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1) as f64;
    let x = |i: usize| PAD + i as f64 / len as f64 * (W - 2.0 * PAD);
    let y = |v: i64| H - PAD - (v - lo) as f64 / span * (H - 2.0 * PAD);
    let _ = writeln!(
        body,
        "<line x1=\"{PAD}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
        W - PAD,
        y0 = y(0)
    );
    for (s, (name, trace)) in traces.iter().enumerate() {
        let mut d = format!("M {:.2} {:.2}", x(0), y(0));
        for (i, &v) in trace.iter().enumerate() {
            let _ = write!(d, " H {:.2} V {:.2}", x(i + 1), y(v));
        }
        let color = COLORS[s % COLORS.len()];
        let _ = writeln!(body, "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>");
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            PAD + 8.0,
            PAD + 14.0 * (s + 1) as f64,
            escape(name)
        );
    }
    let _ = writeln!(
        body,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{hi}</text>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{lo}</text>",
        PAD - 4.0,
        PAD + 4.0,
        PAD - 4.0,
        H - PAD
    );
    frame(title, &body)
}
