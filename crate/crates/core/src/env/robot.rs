use super::{Config, RobotKind, RobotModel};

/// Workspace primitive occupied by the robot. 2d robots leave `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Point([f64; 3]),
    Segment([f64; 3], [f64; 3]),
    Aabb { min: [f64; 3], max: [f64; 3] },
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], k: f64) -> [f64; 3] {
    [a[0] * k, a[1] * k, a[2] * k]
}

/// Forward kinematics: the primitives the robot occupies at `s`.
///
/// - Point2: the point itself.
/// - Rigid3: a stick centred on `s^w` at the heading angle.
/// - Snake5: three chained links starting at `s^w` (the tail), with
///   absolute headings `θ`, `θ + a1`, `θ + a1 + a2`.
/// - Spacecraft7: the cubic body centred on `s^w` plus two 2-link arms.
///   The +x arm folds in the x-z plane, the -x arm in the x-y plane.
pub fn robot_segments(robot: &RobotModel, s: &Config) -> Vec<Shape> {
    match robot.kind {
        RobotKind::Point2 => vec![Shape::Point([s[0], s[1], 0.0])],
        RobotKind::Rigid3 => {
            let th = robot.angle(s, 0);
            let h = robot.link_length / 2.0;
            let d = [h * th.cos(), h * th.sin(), 0.0];
            let c = [s[0], s[1], 0.0];
            vec![Shape::Segment(add(c, scale(d, -1.0)), add(c, d))]
        }
        RobotKind::Snake5 => {
            let l = robot.link_length;
            let mut heading = robot.angle(s, 0);
            let mut p = [s[0], s[1], 0.0];
            let mut out = Vec::with_capacity(3);
            for j in 0..3 {
                if j > 0 {
                    heading += robot.angle(s, j);
                }
                let q = add(p, [l * heading.cos(), l * heading.sin(), 0.0]);
                out.push(Shape::Segment(p, q));
                p = q;
            }
            out
        }
        RobotKind::Spacecraft7 => {
            let c = [s[0], s[1], s[2]];
            let h = robot.body_size / 2.0;
            let l = robot.link_length;
            let mut out = vec![Shape::Aabb {
                min: [c[0] - h, c[1] - h, c[2] - h],
                max: [c[0] + h, c[1] + h, c[2] + h],
            }];
            let (a1, b1) = (robot.angle(s, 0), robot.angle(s, 1));
            let (a2, b2) = (robot.angle(s, 2), robot.angle(s, 3));
            let root1 = [c[0] + h, c[1], c[2]];
            let elbow1 = add(root1, [l * a1.cos(), 0.0, l * a1.sin()]);
            let tip1 = add(elbow1, [l * (a1 + b1).cos(), 0.0, l * (a1 + b1).sin()]);
            let root2 = [c[0] - h, c[1], c[2]];
            let elbow2 = add(root2, [-l * a2.cos(), l * a2.sin(), 0.0]);
            let tip2 = add(elbow2, [-l * (a2 + b2).cos(), l * (a2 + b2).sin(), 0.0]);
            out.push(Shape::Segment(root1, elbow1));
            out.push(Shape::Segment(elbow1, tip1));
            out.push(Shape::Segment(root2, elbow2));
            out.push(Shape::Segment(elbow2, tip2));
            out
        }
    }
}

/// Upper bound on the displacement of any robot point when moving linearly
/// from `a` to `b`: translation plus lever arm times swept angle per joint.
pub(super) fn motion_bound(robot: &RobotModel, a: &Config, b: &Config) -> f64 {
    let wd = robot.workspace_dim();
    let trans = a.0[..wd]
        .iter()
        .zip(&b.0[..wd])
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let l = robot.link_length;
    let levers: &[f64] = match robot.kind {
        RobotKind::Point2 => &[],
        RobotKind::Rigid3 => &[0.5],
        RobotKind::Snake5 => &[3.0, 2.0, 1.0],
        RobotKind::Spacecraft7 => &[2.0, 1.0, 2.0, 1.0],
    };
    let rot: f64 = levers
        .iter()
        .enumerate()
        .map(|(j, lever)| lever * l * (b[wd + j] - a[wd + j]).abs() * robot.angle_span(j))
        .sum();
    trans + rot
}
