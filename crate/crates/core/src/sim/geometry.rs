use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Planar vector in meters or meters per second.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn from_polar(length: f64, angle: f64) -> Self {
        Vec2::new(length * angle.cos(), length * angle.sin())
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn det(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).length()
    }

    pub fn normalized(self) -> Vec2 {
        let l = self.length();
        if l > 0.0 {
            self / l
        } else {
            Vec2::ZERO
        }
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counter-clockwise rotation by `angle` radians.
    #[inline]
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, k: f64) -> Vec2 {
        Vec2::new(self.x / k, self.y / k)
    }
}

/// Minimum surface-to-surface distance between two discs moving linearly over `[0, dt]`.
///
/// Negative values mean the discs overlap at some instant.
pub fn min_separation(p1: Vec2, v1: Vec2, r1: f64, p2: Vec2, v2: Vec2, r2: f64, dt: f64) -> f64 {
    let dp = p1 - p2;
    let dv = v1 - v2;
    let speed_sq = dv.length_squared();
    let t = if speed_sq > 0.0 {
        (-dp.dot(dv) / speed_sq).clamp(0.0, dt)
    } else {
        0.0
    };
    (dp + dv * t).length() - (r1 + r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_pair() {
        let d = min_separation(
            Vec2::ZERO,
            Vec2::ZERO,
            0.3,
            Vec2::new(1.0, 0.0),
            Vec2::ZERO,
            0.3,
            0.25,
        );
        assert!((d - 0.4).abs() < 1e-12);
    }

    #[test]
    fn parallel_motion_keeps_distance() {
        let v = Vec2::new(0.7, -0.2);
        let d = min_separation(Vec2::ZERO, v, 0.2, Vec2::new(0.0, 2.0), v, 0.2, 0.25);
        assert!((d - 1.6).abs() < 1e-12);
    }

    #[test]
    fn head_on_crossing_inside_interval() {
        // centers meet at t = 0.125
        let d = min_separation(
            Vec2::new(-0.125, 0.0),
            Vec2::new(1.0, 0.0),
            0.1,
            Vec2::new(0.125, 0.0),
            Vec2::new(-1.0, 0.0),
            0.1,
            0.25,
        );
        assert!((d + 0.2).abs() < 1e-12);
    }

    #[test]
    fn rotation_round_trip() {
        let v = Vec2::new(1.0, 2.0);
        let back = v.rotated(0.7).rotated(-0.7);
        assert!((back - v).length() < 1e-15);
        assert!(
            (Vec2::new(1.0, 0.0).rotated(std::f64::consts::FRAC_PI_2) - Vec2::new(0.0, 1.0))
                .length()
                < 1e-15
        );
    }
}
