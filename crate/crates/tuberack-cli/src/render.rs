//! SVG rendering: rack occupancy / goal grids plus an optional trace
//! timeline. Cells carry class attributes so tests can parse the output.

use crate::scenario::Scenario;
use std::fmt::Write;
use tuberack::orchestrator::{EventKind, EventOutcome, TraceEvent};
use tuberack::rack::{HoleCoord, HoleGoal};

const CELL: f64 = 24.0;
const PAD: f64 = 16.0;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1", "#76b7b2", "#edc948", "#9c755f",
];

fn type_color(id: u8) -> &'static str {
    PALETTE[(id as usize - 1) % PALETTE.len()]
}

fn kind_lane(kind: EventKind) -> usize {
    match kind {
        EventKind::TaskPlan => 0,
        EventKind::GraspReason => 1,
        EventKind::MotionPlan => 2,
        EventKind::WeightMapUpdate => 3,
        EventKind::ReExploration => 4,
        EventKind::Recovery => 5,
    }
}

const LANE_NAMES: [&str; 6] = ["task", "grasp", "motion", "weight-map", "re-explore", "recovery"];

fn grid_svg(out: &mut String, sc: &Scenario, rack: usize, goal: bool, x0: f64, y0: f64) {
    let (rows, cols) = sc.world.state.dims(rack);
    let label = if goal { format!("rack {rack} goal") } else { format!("rack {rack} initial") };
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{}" font-size="11" font-family="monospace">{label}</text>"#,
        y0 - 4.0
    );
    for r in 0..rows {
        for c in 0..cols {
            let coord = HoleCoord::new(rack, r, c);
            let x = x0 + c as f64 * CELL;
            let y = y0 + r as f64 * CELL;
            let (fill, class, text) = if goal {
                match sc.goal.get(coord) {
                    HoleGoal::MustEmpty => ("#ffffff", "goal must-empty".to_string(), None),
                    HoleGoal::DontCare => ("#d0d0d0", "goal dont-care".to_string(), None),
                    HoleGoal::Types(ids) => {
                        let first = *ids.iter().next().expect("non-empty type set");
                        let label = ids
                            .iter()
                            .map(|i| i.to_string())
                            .collect::<Vec<_>>()
                            .join("|");
                        (type_color(first), format!("goal types-{label}"), Some(label))
                    }
                }
            } else {
                match sc.world.state.get(coord) {
                    None => ("#ffffff", "cell empty".to_string(), None),
                    Some(id) => (type_color(id), format!("cell type-{id}"), Some(id.to_string())),
                }
            };
            let _ = writeln!(
                out,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#333" class="{class}"/>"##,
            );
            if let Some(t) = text {
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{}" font-size="9" text-anchor="middle" font-family="monospace">{t}</text>"#,
                    x + CELL / 2.0,
                    y + CELL / 2.0 + 3.0
                );
            }
        }
    }
}

fn timeline_svg(out: &mut String, events: &[TraceEvent], x0: f64, y0: f64) -> f64 {
    let lane_h = 16.0;
    for (i, name) in LANE_NAMES.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{x0}" y="{}" font-size="9" font-family="monospace">{name}</text>"#,
            y0 + i as f64 * lane_h + 10.0
        );
    }
    let bar_x0 = x0 + 80.0;
    for e in events {
        let x = bar_x0 + e.wall_ns as f64 * 7.0;
        let y = y0 + kind_lane(e.kind) as f64 * lane_h;
        let (fill, class) = match &e.outcome {
            EventOutcome::Success => ("#59a14f", "event ok"),
            EventOutcome::Failure(_) => ("#e15759", "event fail"),
        };
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{y}" width="6" height="12" fill="{fill}" class="{class}"><title>{}</title></rect>"#,
            e.id
        );
    }
    bar_x0 + events.len() as f64 * 7.0 + PAD
}

/// Render the scenario (and optionally a trace timeline) as standalone SVG.
pub fn render_svg(sc: &Scenario, events: Option<&[TraceEvent]>) -> String {
    let dims: Vec<(usize, usize)> = (0..sc.world.layouts.len())
        .map(|r| sc.world.state.dims(r))
        .collect();
    let max_cols = dims.iter().map(|d| d.1).max().unwrap_or(1);
    let grid_w = max_cols as f64 * CELL + PAD;

    let mut body = String::new();
    let mut y = PAD + 12.0;
    for rack in 0..dims.len() {
        grid_svg(&mut body, sc, rack, false, PAD, y);
        grid_svg(&mut body, sc, rack, true, PAD + grid_w + PAD, y);
        y += dims[rack].0 as f64 * CELL + PAD + 12.0;
    }
    let mut width = 2.0 * grid_w + 3.0 * PAD;
    if let Some(events) = events {
        y += 12.0;
        let w = timeline_svg(&mut body, events, PAD, y);
        width = width.max(w);
        y += LANE_NAMES.len() as f64 * 16.0 + PAD;
    }

    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n{}</svg>\n",
        width, y, width, y, body
    )
}
