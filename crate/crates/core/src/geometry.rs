//! Planar vectors and arc-length parameterised paths made of lines and
//! circular arcs.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, s)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Self) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n)
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Straight segment or circular arc. Arcs turn counter-clockwise for a
/// positive `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathSegment {
    Line { start: Vec2, end: Vec2 },
    Arc { center: Vec2, radius: f64, start_angle: f64, sweep: f64 },
}

impl PathSegment {
    pub fn length(&self) -> f64 {
        match *self {
            PathSegment::Line { start, end } => start.distance(end),
            PathSegment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Point and unit tangent at arc length `s` from the segment start.
    pub fn eval(&self, s: f64) -> (Vec2, Vec2) {
        match *self {
            PathSegment::Line { start, end } => {
                let len = start.distance(end);
                let dir = if len > 0.0 { (end - start) * (1.0 / len) } else { Vec2::new(1.0, 0.0) };
                (start + dir * s, dir)
            }
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let turn = sweep.signum();
                let theta = start_angle + turn * s / radius;
                let radial = Vec2::from_angle(theta);
                let tangent = Vec2::new(-radial.y, radial.x) * turn;
                (center + radial * radius, tangent)
            }
        }
    }

    pub fn start(&self) -> Vec2 {
        self.eval(0.0).0
    }

    pub fn end(&self) -> Vec2 {
        self.eval(self.length()).0
    }
}

/// Chain of segments traversed by arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPath {
    segments: Vec<PathSegment>,
    cumulative: Vec<f64>,
}

impl SegmentPath {
    pub fn new(segments: Vec<PathSegment>) -> Self {
        let mut cumulative = Vec::with_capacity(segments.len() + 1);
        let mut acc = 0.0;
        cumulative.push(acc);
        for seg in &segments {
            acc += seg.length();
            cumulative.push(acc);
        }
        Self { segments, cumulative }
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Arc lengths at which one segment hands over to the next.
    pub fn junctions(&self) -> &[f64] {
        let n = self.cumulative.len();
        if n <= 2 {
            &[]
        } else {
            &self.cumulative[1..n - 1]
        }
    }

    /// Point and unit tangent at arc length `s`, clamped to the path.
    pub fn eval(&self, s: f64) -> (Vec2, Vec2) {
        let s = s.clamp(0.0, self.length());
        let idx = match self.cumulative[1..].iter().position(|&c| s <= c) {
            Some(i) => i,
            None => self.segments.len() - 1,
        };
        self.segments[idx].eval(s - self.cumulative[idx])
    }
}

/// Smallest distance from `c` to the segment `[a, b]`.
pub fn point_segment_distance(c: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return c.distance(a);
    }
    let t = ((c - a).dot(ab) / len2).clamp(0.0, 1.0);
    c.distance(a + ab * t)
}

/// Wraps an angle to `[0, 2π)`.
pub fn wrap_positive(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = theta.rem_euclid(tau);
    if r >= tau {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn arc_eval_turns_the_right_way() {
        let ccw = PathSegment::Arc {
            center: Vec2::new(0.0, 0.0),
            radius: 2.0,
            start_angle: -FRAC_PI_2,
            sweep: PI,
        };
        let (p, t) = ccw.eval(0.0);
        assert!(p.distance(Vec2::new(0.0, -2.0)) < 1e-12);
        assert!(t.distance(Vec2::new(1.0, 0.0)) < 1e-12);
        assert!(ccw.end().distance(Vec2::new(0.0, 2.0)) < 1e-12);
        assert!((ccw.length() - 2.0 * PI).abs() < 1e-12);

        let cw = PathSegment::Arc {
            center: Vec2::new(0.0, 0.0),
            radius: 2.0,
            start_angle: FRAC_PI_2,
            sweep: -PI,
        };
        let (_, t) = cw.eval(0.0);
        assert!(t.distance(Vec2::new(1.0, 0.0)) < 1e-12);
    }

    #[test]
    fn path_eval_is_continuous_across_junctions() {
        let path = SegmentPath::new(vec![
            PathSegment::Line {
                start: Vec2::new(0.0, 0.0),
                end: Vec2::new(1.0, 0.0),
            },
            PathSegment::Arc {
                center: Vec2::new(1.0, 1.0),
                radius: 1.0,
                start_angle: -FRAC_PI_2,
                sweep: FRAC_PI_2,
            },
        ]);
        assert_eq!(path.junctions(), &[1.0]);
        let (a, _) = path.eval(1.0 - 1e-9);
        let (b, _) = path.eval(1.0 + 1e-9);
        assert!(a.distance(b) < 1e-8);
        assert!(path.eval(100.0).0.distance(Vec2::new(2.0, 1.0)) < 1e-12);
    }

    #[test]
    fn segment_distance() {
        let d = point_segment_distance(Vec2::new(0.5, 2.0), Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert_eq!(d, 2.0);
        let d = point_segment_distance(Vec2::new(-3.0, 4.0), Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert_eq!(d, 5.0);
    }
}
