//! Minimal static SVG renderer: stacked panels of polyline series with axis
//! labels and a legend. Output is deterministic.

/// One polyline. `closed` appends the first point at the end, for polygons.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            color,
            points,
            closed: false,
        }
    }

    pub fn polygon(label: impl Into<String>, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            color,
            points,
            closed: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

pub const PALETTE: [&str; 6] = ["#d95319", "#0072bd", "#77ac30", "#7e2f8e", "#edb120", "#4dbeee"];

const WIDTH: f64 = 760.0;
const PANEL_HEIGHT: f64 = 240.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 40.0;

fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn range_of(series: &[Series], pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for p in &s.points {
            let v = pick(p);
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.06;
    (lo - pad, hi + pad)
}

/// Renders panels stacked vertically into a complete SVG document.
pub fn render(panels: &[Panel]) -> String {
    let total_h = PANEL_HEIGHT * panels.len() as f64;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{total_h}\" \
         viewBox=\"0 0 {WIDTH} {total_h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));

    for (pi, panel) in panels.iter().enumerate() {
        let top = pi as f64 * PANEL_HEIGHT;
        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = PANEL_HEIGHT - MARGIN_T - MARGIN_B;
        let (x_lo, x_hi) = range_of(&panel.series, |p| p.0);
        let (y_lo, y_hi) = range_of(&panel.series, |p| p.1);
        let sx = move |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = move |y: f64| top + MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
             font-weight=\"bold\">{}</text>\n",
            MARGIN_L,
            top + 18.0,
            xml_escape(&panel.title)
        ));
        // Frame.
        out.push_str(&format!(
            "<rect x=\"{MARGIN_L}\" y=\"{}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" \
             stroke=\"#888\" stroke-width=\"1\"/>\n",
            top + MARGIN_T
        ));
        // Zero line when visible.
        if y_lo < 0.0 && y_hi > 0.0 {
            out.push_str(&format!(
                "<line x1=\"{MARGIN_L}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#ccc\" \
                 stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
                sy(0.0),
                MARGIN_L + plot_w
            ));
        }
        // Axis extrema labels.
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            top + MARGIN_T + 10.0,
            fmt(y_hi)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            top + MARGIN_T + plot_h,
            fmt(y_lo)
        ));
        out.push_str(&format!(
            "<text x=\"{MARGIN_L}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            top + MARGIN_T + plot_h + 16.0,
            fmt(x_lo)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            MARGIN_L + plot_w,
            top + MARGIN_T + plot_h + 16.0,
            fmt(x_hi)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            MARGIN_L + plot_w / 2.0,
            top + MARGIN_T + plot_h + 30.0,
            xml_escape(&panel.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\" transform=\"rotate(-90 14 {0})\">{1}</text>\n",
            top + MARGIN_T + plot_h / 2.0,
            xml_escape(&panel.y_label)
        ));

        for (si, series) in panel.series.iter().enumerate() {
            if series.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, (x, y)) in series.points.iter().enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                d.push_str(&format!("{cmd}{:.2} {:.2} ", sx(*x), sy(*y)));
            }
            if series.closed {
                d.push('Z');
            }
            out.push_str(&format!(
                "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                d.trim_end(),
                series.color
            ));
            // Legend entry.
            let lx = MARGIN_L + plot_w - 150.0;
            let ly = top + MARGIN_T + 14.0 + 15.0 * si as f64;
            out.push_str(&format!(
                "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" \
                 stroke-width=\"2\"/>\n",
                lx + 18.0,
                series.color
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                lx + 24.0,
                ly + 4.0,
                xml_escape(&series.label)
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
