use std::f64::consts::TAU;
use std::fmt::Write as _;

use super::EpisodeTrace;
use crate::sim::{Event, Vec2, NUM_HEADINGS, NUM_SPEEDS};

pub const HEATMAP_CELLS: usize = NUM_SPEEDS * NUM_HEADINGS;

const PX_PER_M: f64 = 50.0;
const MARGIN_M: f64 = 1.0;
const HEATMAP_RADIUS_PX: f64 = 90.0;

struct View {
    min: Vec2,
    max: Vec2,
}

impl View {
    fn px(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.min.x) * PX_PER_M, (self.max.y - p.y) * PX_PER_M)
    }

    fn width(&self) -> f64 {
        (self.max.x - self.min.x) * PX_PER_M
    }

    fn height(&self) -> f64 {
        (self.max.y - self.min.y) * PX_PER_M
    }
}

fn polyline(out: &mut String, view: &View, points: &[Vec2], class: &str, color: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|&p| {
            let (x, y) = view.px(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    writeln!(
        out,
        r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
        coords.join(" ")
    )
    .unwrap();
}

/// Blue (low) to red (high).
fn heat_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    format!("rgb({r},64,{b})")
}

fn heatmap(out: &mut String, values: &[f64], cx: f64, cy: f64) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let ring = HEATMAP_RADIUS_PX / NUM_SPEEDS as f64;
    let half = TAU / NUM_HEADINGS as f64 / 2.0;
    writeln!(out, r#"<g class="heatmap">"#).unwrap();
    for (index, &v) in values.iter().enumerate() {
        let (speed, heading) = (index / NUM_HEADINGS, index % NUM_HEADINGS);
        let (r0, r1) = (speed as f64 * ring, (speed + 1) as f64 * ring);
        let center = heading as f64 * TAU / NUM_HEADINGS as f64;
        let (a0, a1) = (center - half, center + half);
        // screen y points down, so world angles flip sign
        let pt = |r: f64, a: f64| (cx + r * a.cos(), cy - r * a.sin());
        let (p0, p1, p2, p3) = (pt(r0, a0), pt(r1, a0), pt(r1, a1), pt(r0, a1));
        writeln!(
            out,
            r#"<path class="heat-cell" data-action="{index}" data-value="{v}" fill="{}" d="M{:.2},{:.2} L{:.2},{:.2} A{r1:.2},{r1:.2} 0 0 0 {:.2},{:.2} L{:.2},{:.2} A{r0:.2},{r0:.2} 0 0 1 {:.2},{:.2} Z"/>"#,
            heat_color((v - lo) / span),
            p0.0, p0.1, p1.0, p1.1, p2.0, p2.1, p3.0, p3.1, p0.0, p0.1
        )
        .unwrap();
    }
    writeln!(out, "</g>").unwrap();
}

/// Draws agent paths, the robot goal, discomfort and collision incidents and,
/// when `heatmap_step` names a planned decision, its root action values.
pub fn export_svg(trace: &EpisodeTrace, heatmap_step: Option<usize>) -> String {
    let robot_start = trace.scenario.robot.position;
    let goal = trace.scenario.robot.goal;
    let mut robot_path = vec![robot_start];
    robot_path.extend(trace.steps.iter().map(|s| s.robot.position));
    let human_paths: Vec<Vec<Vec2>> = (0..trace.scenario.humans.len())
        .map(|i| {
            let mut path = vec![trace.scenario.humans[i].state.position];
            path.extend(trace.steps.iter().map(|s| s.humans[i].position));
            path
        })
        .collect();

    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in robot_path
        .iter()
        .chain(human_paths.iter().flatten())
        .chain([&goal])
    {
        min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
        max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
    }
    let view = View {
        min: min - Vec2::new(MARGIN_M, MARGIN_M),
        max: max + Vec2::new(MARGIN_M, MARGIN_M),
    };
    let heat_values = heatmap_step
        .and_then(|k| trace.action_values.get(k))
        .filter(|v| v.len() == HEATMAP_CELLS);
    let extra_width = if heat_values.is_some() {
        2.0 * HEATMAP_RADIUS_PX + 40.0
    } else {
        0.0
    };
    let (width, height) = (
        view.width() + extra_width,
        view.height().max(2.0 * HEATMAP_RADIUS_PX + 40.0),
    );

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();

    let (gx, gy) = view.px(goal);
    writeln!(
        out,
        r#"<circle class="goal" cx="{gx:.2}" cy="{gy:.2}" r="{:.2}" fill="none" stroke="green" stroke-dasharray="4 2"/>"#,
        trace.scenario.robot.radius * PX_PER_M
    )
    .unwrap();

    for path in &human_paths {
        polyline(&mut out, &view, path, "human", "gray");
    }
    polyline(&mut out, &view, &robot_path, "robot", "gold");

    for s in &trace.steps {
        let (x, y) = view.px(s.robot.position);
        match s.event {
            Event::Discomfort { .. } => {
                writeln!(
                    out,
                    r#"<circle class="discomfort" cx="{x:.2}" cy="{y:.2}" r="4" fill="orange"/>"#
                )
                .unwrap();
            }
            Event::Collision => {
                writeln!(
                    out,
                    r#"<g class="collision" data-x="{}" data-y="{}" stroke="red" stroke-width="3"><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/></g>"#,
                    s.robot.position.x,
                    s.robot.position.y,
                    x - 8.0, y - 8.0, x + 8.0, y + 8.0, x - 8.0, y + 8.0, x + 8.0, y - 8.0
                )
                .unwrap();
            }
            _ => {}
        }
    }

    if let Some(values) = heat_values {
        heatmap(
            &mut out,
            values,
            view.width() + 20.0 + HEATMAP_RADIUS_PX,
            20.0 + HEATMAP_RADIUS_PX,
        );
    }
    out.push_str("</svg>\n");
    out
}
