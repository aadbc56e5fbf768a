//! Minimal 3D geometry: vectors, axis-aligned boxes, planes and the
//! segment/box intersection test used for occlusion checks.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn dist(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn axis(self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn with_axis(mut self, axis: Axis, v: f64) -> Vec3 {
        match axis {
            Axis::X => self.x = v,
            Axis::Y => self.y = v,
            Axis::Z => self.z = v,
        }
        self
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// The two axes spanning a plane orthogonal to `self`.
    pub fn others(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    /// Overlap test with open interiors: boxes that merely touch do not count.
    pub fn intersects_open(&self, other: &Aabb) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
            && self.min.z < other.max.z
            && other.min.z < self.max.z
    }

    /// Parametric intersection of segment p + t(q - p), t in [0,1], with the
    /// closed box. Returns the entry/exit parameters if nonempty.
    pub fn segment_interval(&self, p: Vec3, q: Vec3) -> Option<(f64, f64)> {
        let d = q - p;
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (pa, da, lo, hi) in [
            (p.x, d.x, self.min.x, self.max.x),
            (p.y, d.y, self.min.y, self.max.y),
            (p.z, d.z, self.min.z, self.max.z),
        ] {
            if da.abs() < 1e-300 {
                if pa < lo || pa > hi {
                    return None;
                }
            } else {
                let inv = 1.0 / da;
                let (mut a, mut b) = ((lo - pa) * inv, (hi - pa) * inv);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                t0 = t0.max(a);
                t1 = t1.min(b);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some((t0, t1))
    }

    /// True if the segment passes through the box interior with nonzero
    /// extent, excluding grazing contact at the segment endpoints. Antennas
    /// sit exactly on bumper faces, so endpoint touches must not block.
    pub fn blocks_segment(&self, p: Vec3, q: Vec3) -> bool {
        const EPS: f64 = 1e-9;
        match self.segment_interval(p, q) {
            None => false,
            Some((t0, t1)) => t1 > EPS && t0 < 1.0 - EPS && (t1 - t0) > EPS,
        }
    }
}

/// Mirror a point across the plane `axis = coord`.
pub fn mirror_across_plane(p: Vec3, axis: Axis, coord: f64) -> Vec3 {
    let v = p.axis(axis);
    p.with_axis(axis, 2.0 * coord - v)
}

/// Reflect a direction in a plane with unit normal `n`.
pub fn reflect_dir(d: Vec3, n: Vec3) -> Vec3 {
    d - n * (2.0 * d.dot(n))
}
