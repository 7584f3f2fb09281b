//! Incremental 2D linear programming over half-planes, as used by ORCA.

use crate::sim::Vec2;

const EPSILON: f64 = 1e-5;

/// Directed line; the permitted half-plane lies to the left of `direction`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub point: Vec2,
    /// Unit length.
    pub direction: Vec2,
}

/// Optimizes along line `line_no` subject to lines `0..line_no` and the speed disc.
fn solve_on_line(
    lines: &[Line],
    line_no: usize,
    radius: f64,
    optimum: Vec2,
    direction_opt: bool,
) -> Option<Vec2> {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let discriminant = dot * dot + radius * radius - line.point.length_squared();
    if discriminant < 0.0 {
        return None;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for other in &lines[..line_no] {
        let denominator = line.direction.det(other.direction);
        let numerator = other.direction.det(line.point - other.point);
        if denominator.abs() <= EPSILON {
            if numerator < 0.0 {
                return None;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }

    let t = if direction_opt {
        if optimum.dot(line.direction) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        line.direction
            .dot(optimum - line.point)
            .clamp(t_left, t_right)
    };
    Some(line.point + line.direction * t)
}

/// Returns the point closest to `optimum` (or furthest along it when
/// `direction_opt`) inside the disc and all half-planes, or `Err((index, partial))`
/// with the first line that could not be satisfied.
pub fn solve_2d(
    lines: &[Line],
    radius: f64,
    optimum: Vec2,
    direction_opt: bool,
) -> Result<Vec2, (usize, Vec2)> {
    let mut result = if direction_opt {
        optimum * radius
    } else if optimum.length_squared() > radius * radius {
        optimum.normalized() * radius
    } else {
        optimum
    };
    for (i, line) in lines.iter().enumerate() {
        if line.direction.det(line.point - result) > 0.0 {
            match solve_on_line(lines, i, radius, optimum, direction_opt) {
                Some(r) => result = r,
                None => return Err((i, result)),
            }
        }
    }
    Ok(result)
}

/// Fallback when the program is infeasible: minimizes the maximum penetration
/// into the violated half-planes, starting from line `begin`.
pub fn solve_3d(lines: &[Line], begin: usize, radius: f64, mut result: Vec2) -> Vec2 {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        let li = lines[i];
        if li.direction.det(li.point - result) <= distance {
            continue;
        }
        let mut projected = Vec::with_capacity(i);
        for lj in &lines[..i] {
            let determinant = li.direction.det(lj.direction);
            let point = if determinant.abs() <= EPSILON {
                if li.direction.dot(lj.direction) > 0.0 {
                    continue;
                }
                (li.point + lj.point) * 0.5
            } else {
                li.point + li.direction * (lj.direction.det(li.point - lj.point) / determinant)
            };
            projected.push(Line {
                point,
                direction: (lj.direction - li.direction).normalized(),
            });
        }
        let dir = Vec2::new(-li.direction.y, li.direction.x);
        if let Ok(r) = solve_2d(&projected, radius, dir, true) {
            result = r;
        }
        distance = li.direction.det(li.point - result);
    }
    result
}

/// Closest feasible point to `optimum`, with the penetration-minimizing fallback.
pub fn solve(lines: &[Line], radius: f64, optimum: Vec2) -> Vec2 {
    match solve_2d(lines, radius, optimum, false) {
        Ok(v) => v,
        Err((failed, partial)) => solve_3d(lines, failed, radius, partial),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_returns_optimum_clipped_to_disc() {
        assert_eq!(solve(&[], 1.0, Vec2::new(0.5, 0.0)), Vec2::new(0.5, 0.0));
        let v = solve(&[], 1.0, Vec2::new(3.0, 4.0));
        assert!((v - Vec2::new(0.6, 0.8)).length() < 1e-12);
    }

    #[test]
    fn single_half_plane_projects() {
        // permitted region: y >= 0.2 (left of +x direction through (0, 0.2))
        let line = Line {
            point: Vec2::new(0.0, 0.2),
            direction: Vec2::new(1.0, 0.0),
        };
        let v = solve(&[line], 1.0, Vec2::new(0.5, -0.5));
        assert!((v - Vec2::new(0.5, 0.2)).length() < 1e-12);
    }

    #[test]
    fn infeasible_pair_stays_in_disc() {
        // y >= 0.5 and y <= -0.5 cannot both hold
        let lines = [
            Line {
                point: Vec2::new(0.0, 0.5),
                direction: Vec2::new(1.0, 0.0),
            },
            Line {
                point: Vec2::new(0.0, -0.5),
                direction: Vec2::new(-1.0, 0.0),
            },
        ];
        let v = solve(&lines, 1.0, Vec2::new(0.3, 0.0));
        assert!(v.length() <= 1.0 + 1e-9);
        assert!(v.y.abs() < 1e-9, "{v:?}");
    }
}
