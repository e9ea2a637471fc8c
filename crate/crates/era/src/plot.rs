//! Score-curve rendering: per-frame machine scores, the ground-truth curve
//! when one exists, and shaded selected shots, emitted as a self-contained
//! SVG plus a flat CSV of the plotted series.

use crate::evaluation::SummaryMask;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 300.0;
const LEFT: f64 = 52.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 36.0;

/// Everything the plot draws for one video.
#[derive(Debug, Clone)]
pub struct ScorePlot {
    pub video_id: String,
    /// Machine scores at original frame rate.
    pub scores: Vec<f64>,
    pub ground_truth: Option<Vec<f64>>,
    pub mask: SummaryMask,
}

impl ScorePlot {
    /// Render the curve as an SVG document string.
    pub fn to_svg(&self) -> String {
        let n = self.scores.len();
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;

        let mut y_max = self
            .scores
            .iter()
            .chain(self.ground_truth.iter().flatten())
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if !y_max.is_finite() || y_max <= 0.0 {
            y_max = 1.0;
        }
        y_max *= 1.05;

        let x = |frame: usize| -> f64 {
            if n <= 1 {
                LEFT + plot_w / 2.0
            } else {
                LEFT + plot_w * frame as f64 / (n - 1) as f64
            }
        };
        let y = |value: f64| -> f64 { TOP + plot_h * (1.0 - (value / y_max).clamp(0.0, 1.0)) };

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        svg.push_str(&format!(
            "<text x=\"{LEFT}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
            xml_escape(&self.video_id)
        ));

        // Selected shots first so the curves draw on top of the shading.
        for (a, b) in selected_runs(&self.mask) {
            let x0 = x(a);
            let x1 = x(b);
            svg.push_str(&format!(
                "<rect class=\"shot\" x=\"{:.2}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{plot_h}\" \
                 fill=\"#8db4e2\" fill-opacity=\"0.35\"/>\n",
                x0,
                (x1 - x0).max(1.0),
            ));
        }

        // Frame for the plot area and a few horizontal guides.
        svg.push_str(&format!(
            "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" \
             stroke=\"#444\" stroke-width=\"1\"/>\n"
        ));
        for tick in 1..4 {
            let v = y_max * tick as f64 / 4.0;
            let ty = y(v);
            svg.push_str(&format!(
                "<line x1=\"{LEFT}\" y1=\"{ty:.2}\" x2=\"{:.2}\" y2=\"{ty:.2}\" stroke=\"#ddd\" \
                 stroke-width=\"0.5\"/>\n",
                LEFT + plot_w
            ));
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" \
                 text-anchor=\"end\">{v:.2}</text>\n",
                LEFT - 6.0,
                ty + 3.0
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"end\">0</text>\n",
            LEFT - 6.0,
            TOP + plot_h + 3.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"middle\">frame</text>\n",
            LEFT + plot_w / 2.0,
            HEIGHT - 8.0
        ));

        if let Some(gt) = &self.ground_truth {
            svg.push_str(&polyline(gt, &x, &y, "gt", "#c98a34"));
        }
        svg.push_str(&polyline(&self.scores, &x, &y, "score", "#2a5fa8"));
        svg.push_str("</svg>\n");
        svg
    }

    /// The plotted series as CSV: one row per original frame.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,score,ground_truth,selected\n");
        for (f, &s) in self.scores.iter().enumerate() {
            let gt = self
                .ground_truth
                .as_ref()
                .map(|g| g[f].to_string())
                .unwrap_or_default();
            let sel = u8::from(self.mask.selected[f]);
            out.push_str(&format!("{f},{s},{gt},{sel}\n"));
        }
        out
    }
}

fn polyline(values: &[f64], x: &dyn Fn(usize) -> f64, y: &dyn Fn(f64) -> f64, class: &str, color: &str) -> String {
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(f, &v)| format!("{:.2},{:.2}", x(f), y(v)))
        .collect();
    format!(
        "<polyline class=\"{class}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
        points.join(" ")
    )
}

/// Maximal runs of consecutive selected frames as inclusive (start, end).
fn selected_runs(mask: &SummaryMask) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (f, &sel) in mask.selected.iter().enumerate() {
        match (sel, start) {
            (true, None) => start = Some(f),
            (false, Some(s)) => {
                runs.push((s, f - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.selected.len() - 1));
    }
    runs
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
