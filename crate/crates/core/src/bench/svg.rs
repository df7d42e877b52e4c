use std::fmt::Write;

use crate::env::{Config, Obstacles, PlanningProblem};
use crate::tree::SearchTree;

/// Canvas side in pixels.
pub const CANVAS: f64 = 600.0;

pub const OBSTACLE_FILL: &str = "#1f4e9e";
pub const EDGE_STROKE: &str = "#2ca02c";
pub const NODE_FILL: &str = "#f2c500";
pub const START_FILL: &str = "#ff7f0e";
pub const GOAL_FILL: &str = "#8b4513";
pub const PATH_STROKE: &str = "#d62728";

pub const PROJECTION_WARNING: &str = "3d workspace shown as a top-down projection";

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSvg {
    pub svg: String,
    /// Set when the workspace could not be drawn faithfully.
    pub warning: Option<String>,
}

fn px(v: f64) -> f64 {
    v * CANVAS
}

/// Workspace `(x, y)` to canvas coordinates, y pointing up.
fn point(s: &Config) -> (f64, f64) {
    (px(s[0]), CANVAS - px(s[1]))
}

/// Draws obstacles, tree edges and nodes, start and goal markers and the
/// optional solution path. 3d workspaces are flattened onto the x-y plane.
pub fn render_tree_svg(problem: &PlanningProblem, tree: &SearchTree, path: Option<&[Config]>) -> RenderedSvg {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{c}" height="{c}" viewBox="0 0 {c} {c}">"#,
        c = CANVAS
    );
    let _ = writeln!(w, r#"<rect class="background" x="0" y="0" width="{c}" height="{c}" fill="white"/>"#, c = CANVAS);

    let warning = match &problem.obstacles {
        Obstacles::Grid(g) => {
            let cell = CANVAS / g.side as f64;
            for row in 0..g.side {
                for col in 0..g.side {
                    if g.get(row, col) {
                        let _ = writeln!(
                            w,
                            r#"<rect class="obstacle" x="{:.3}" y="{:.3}" width="{cell:.3}" height="{cell:.3}" fill="{OBSTACLE_FILL}"/>"#,
                            col as f64 * cell,
                            CANVAS - (row + 1) as f64 * cell,
                        );
                    }
                }
            }
            None
        }
        Obstacles::Cuboids(set) => {
            for b in &set.boxes {
                let _ = writeln!(
                    w,
                    r#"<rect class="obstacle" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{OBSTACLE_FILL}" fill-opacity="0.35"/>"#,
                    px(b.min[0]),
                    CANVAS - px(b.max[1]),
                    px(b.max[0] - b.min[0]),
                    px(b.max[1] - b.min[1]),
                );
            }
            let _ = writeln!(w, r#"<text class="warning" x="8" y="20" font-size="14" fill="black">{PROJECTION_WARNING}</text>"#);
            Some(PROJECTION_WARNING.to_string())
        }
    };

    for node in tree.nodes() {
        if let Some(p) = node.parent {
            let (x1, y1) = point(tree.config(p));
            let (x2, y2) = point(&node.config);
            let _ = writeln!(
                w,
                r#"<line class="edge" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="{EDGE_STROKE}" stroke-width="1"/>"#
            );
        }
    }
    for node in tree.nodes() {
        let (x, y) = point(&node.config);
        let _ = writeln!(w, r#"<circle class="node" cx="{x:.3}" cy="{y:.3}" r="2" fill="{NODE_FILL}"/>"#);
    }

    if let Some(path) = path.filter(|p| !p.is_empty()) {
        let pts: Vec<String> = path
            .iter()
            .map(|s| {
                let (x, y) = point(s);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline class="path" points="{}" fill="none" stroke="{PATH_STROKE}" stroke-width="3"/>"#,
            pts.join(" ")
        );
    }

    let (gx, gy) = point(&problem.goal);
    let _ = writeln!(
        w,
        r#"<circle class="goal" cx="{gx:.3}" cy="{gy:.3}" r="{:.3}" fill="{GOAL_FILL}" fill-opacity="0.6"/>"#,
        px(problem.goal_radius).max(4.0)
    );
    let (sx, sy) = point(&problem.start);
    let _ = writeln!(w, r#"<circle class="start" cx="{sx:.3}" cy="{sy:.3}" r="6" fill="{START_FILL}"/>"#);
    let _ = writeln!(w, "</svg>");
    RenderedSvg { svg: out, warning }
}
