//! Static SVG plots: batch trajectories over the scenario geometry and a
//! matched-seed control-signal comparison.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use nscbf::scenario::{
    Scenario, COVERAGE1_CENTER, COVERAGE1_RADIUS, COVERAGE2_CENTER, COVERAGE2_RADIUS, GOAL,
    OBSTACLE_CENTER, OBSTACLE_RADIUS,
};

use crate::config::ScenarioKind;

const AGENT_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// Maps world coordinates into a square SVG viewport (y up).
struct Frame {
    x0: f64,
    y0: f64,
    scale: f64,
    height: f64,
    margin: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64, size: f64, margin: f64) -> Self {
        let scale = ((size - 2.0 * margin) / (x1 - x0)).min((size - 2.0 * margin) / (y1 - y0));
        Self {
            x0,
            y0,
            scale,
            height: size,
            margin,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        self.margin + (x - self.x0) * self.scale
    }

    fn sy(&self, y: f64) -> f64 {
        self.height - self.margin - (y - self.y0) * self.scale
    }
}

fn svg_open(body: &mut String, width: f64, height: f64) {
    let _ = write!(
        body,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
}

fn circle(body: &mut String, f: &Frame, c: [f64; 2], r: f64, style: &str) {
    let _ = write!(
        body,
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" {style}/>\n",
        f.sx(c[0]),
        f.sy(c[1]),
        r * f.scale
    );
}

fn polyline(body: &mut String, points: &str, style: &str) {
    let _ = write!(body, "<polyline points=\"{points}\" fill=\"none\" {style}/>\n");
}

fn cross(body: &mut String, f: &Frame, c: [f64; 2], half: f64, style: &str) {
    let (x, y) = (f.sx(c[0]), f.sy(c[1]));
    let _ = write!(
        body,
        "<path d=\"M {:.2} {:.2} L {:.2} {:.2} M {:.2} {:.2} L {:.2} {:.2}\" {style}/>\n",
        x - half,
        y - half,
        x + half,
        y + half,
        x - half,
        y + half,
        x + half,
        y - half
    );
}

fn text(body: &mut String, x: f64, y: f64, size: f64, s: &str) {
    let _ = write!(
        body,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"{size:.0}\">{s}</text>\n"
    );
}

/// One plotted path: world-space samples, already decimated.
pub struct PathSample {
    pub points: Vec<(f64, f64)>,
    /// Agent index for color selection (0 for the single-agent case).
    pub agent: usize,
}

/// Trajectories over the scenario geometry.
pub fn render_overview(
    path: &Path,
    kind: ScenarioKind,
    scenario: &Scenario,
    paths: &[PathSample],
) -> io::Result<()> {
    let size = 640.0;
    let mut body = String::new();
    svg_open(&mut body, size, size);

    match kind {
        ScenarioKind::SingleBoolean => {
            let f = Frame::new(-2.0, 3.0, -2.0, 3.0, size, 30.0);
            circle(
                &mut body,
                &f,
                COVERAGE1_CENTER,
                COVERAGE1_RADIUS,
                "fill=\"#2ca02c\" fill-opacity=\"0.12\" stroke=\"#2ca02c\" stroke-width=\"1.5\"",
            );
            circle(
                &mut body,
                &f,
                COVERAGE2_CENTER,
                COVERAGE2_RADIUS,
                "fill=\"#2ca02c\" fill-opacity=\"0.12\" stroke=\"#2ca02c\" stroke-width=\"1.5\"",
            );
            circle(
                &mut body,
                &f,
                OBSTACLE_CENTER,
                OBSTACLE_RADIUS,
                "fill=\"#d62728\" fill-opacity=\"0.25\" stroke=\"#d62728\" stroke-width=\"1.5\"",
            );
            for p in paths {
                draw_path(&mut body, &f, p, "#1f77b4", 0.25);
            }
            circle(
                &mut body,
                &f,
                [scenario.x0[0], scenario.x0[1]],
                0.03,
                "fill=\"black\"",
            );
            cross(&mut body, &f, GOAL, 6.0, "stroke=\"#b8860b\" stroke-width=\"2\"");
            text(&mut body, f.sx(GOAL[0]) + 8.0, f.sy(GOAL[1]), 12.0, "goal");
        }
        ScenarioKind::MultiSwap => {
            let f = Frame::new(-1.7, 1.7, -1.7, 1.7, size, 30.0);
            circle(
                &mut body,
                &f,
                [0.0, 0.0],
                1.0,
                "fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"1\" stroke-dasharray=\"5,5\"",
            );
            for p in paths {
                let color = AGENT_COLORS[p.agent % AGENT_COLORS.len()];
                draw_path(&mut body, &f, p, color, 0.45);
            }
            let n = scenario.goals.len();
            for (a, g) in scenario.goals.iter().enumerate() {
                let color = AGENT_COLORS[a % AGENT_COLORS.len()];
                let start = [scenario.x0[2 * a], scenario.x0[2 * a + 1]];
                circle(
                    &mut body,
                    &f,
                    start,
                    0.035,
                    &format!("fill=\"{color}\""),
                );
                cross(
                    &mut body,
                    &f,
                    [g[0], g[1]],
                    5.0,
                    &format!("stroke=\"{color}\" stroke-width=\"2\""),
                );
            }
            text(&mut body, 34.0, 24.0, 12.0, &format!("{n} agents, antipodal swap"));
        }
    }

    body.push_str("</svg>\n");
    fs::write(path, body)
}

fn draw_path(body: &mut String, f: &Frame, p: &PathSample, color: &str, opacity: f64) {
    let mut points = String::new();
    for (x, y) in &p.points {
        let _ = write!(points, "{:.2},{:.2} ", f.sx(*x), f.sy(*y));
    }
    polyline(
        body,
        points.trim_end(),
        &format!("stroke=\"{color}\" stroke-width=\"0.8\" stroke-opacity=\"{opacity}\""),
    );
}

/// One control signal: sample times and the (u_x, u_y) components of the
/// plotted agent.
pub struct ControlSignal {
    pub label: String,
    pub times: Vec<f64>,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

/// Two-panel comparison of control signals (one panel per setting),
/// sharing the vertical scale.
pub fn render_control_comparison(path: &Path, signals: &[ControlSignal]) -> io::Result<()> {
    let (pw, ph) = (420.0, 320.0);
    let width = pw * signals.len() as f64;
    let mut body = String::new();
    svg_open(&mut body, width, ph);

    let mut u_max = 1e-9f64;
    let mut t_max = 0.0f64;
    for s in signals {
        for v in s.ux.iter().chain(&s.uy) {
            u_max = u_max.max(v.abs());
        }
        t_max = t_max.max(s.times.last().copied().unwrap_or(0.0));
    }

    for (panel, s) in signals.iter().enumerate() {
        let off = panel as f64 * pw;
        let margin = 40.0;
        let fx = |t: f64| off + margin + t / t_max * (pw - 2.0 * margin);
        let fy = |u: f64| ph / 2.0 - u / u_max * (ph / 2.0 - margin);

        // axes
        let _ = write!(
            body,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
            fx(0.0),
            fy(0.0),
            fx(t_max),
            fy(0.0)
        );
        let _ = write!(
            body,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
            fx(0.0),
            margin,
            fx(0.0),
            ph - margin
        );

        for (component, color) in [(&s.ux, "#1f77b4"), (&s.uy, "#ff7f0e")] {
            let mut points = String::new();
            for (t, u) in s.times.iter().zip(component.iter()) {
                let _ = write!(points, "{:.2},{:.2} ", fx(*t), fy(*u));
            }
            polyline(
                &mut body,
                points.trim_end(),
                &format!("stroke=\"{color}\" stroke-width=\"0.8\""),
            );
        }
        text(&mut body, off + margin, 20.0, 13.0, &s.label);
        text(&mut body, off + margin, ph - 12.0, 11.0, "t [s]");
        text(&mut body, off + 4.0, margin + 4.0, 11.0, "u");
    }

    body.push_str("</svg>\n");
    fs::write(path, body)
}
