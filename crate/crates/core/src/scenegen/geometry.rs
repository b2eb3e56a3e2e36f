use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// World-space vector; `y` points up and the ground is the plane `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn is_zero(self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.z == 0.0
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Pinhole camera for one frame. Pixel `(row, col)` covers the continuous
/// image coordinates `[col, col+1) × [row, row+1)`; rays pass through pixel
/// centers.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub position: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    pub fn look_at(position: Vec3, target: Vec3, focal: f64, cx: f64, cy: f64) -> Result<Camera> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::param(format!("focal length must be positive, got {focal}")));
        }
        let dir = target - position;
        if dir.norm() < 1e-12 {
            return Err(Error::param("camera target coincides with its position"));
        }
        let forward = dir.normalized();
        let side = forward.cross(Vec3::new(0.0, 1.0, 0.0));
        if side.norm() < 1e-9 {
            return Err(Error::param("camera looks straight along the vertical axis"));
        }
        let right = side.normalized();
        let up = right.cross(forward);
        Ok(Camera {
            position,
            forward,
            right,
            up,
            focal,
            cx,
            cy,
        })
    }

    /// Unit world-space direction through continuous image point `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        let x = (u - self.cx) / self.focal;
        let y = -(v - self.cy) / self.focal;
        (self.right * x + self.up * y + self.forward).normalized()
    }

    pub fn pixel_ray(&self, row: usize, col: usize) -> Vec3 {
        self.ray(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Continuous image coordinates `(u, v)` of a world point, or `None` when
    /// the point is not in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let d = p - self.position;
        let z = d.dot(self.forward);
        if z <= 1e-9 {
            return None;
        }
        Some((
            self.cx + self.focal * d.dot(self.right) / z,
            self.cy - self.focal * d.dot(self.up) / z,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned box given by its half extents.
    Box { half: Vec3 },
}

impl Shape {
    /// Distance along the unit ray `origin + s·dir` to the nearest entry hit
    /// with `s > 0`, and the outward surface normal there.
    pub fn intersect(&self, center: Vec3, origin: Vec3, dir: Vec3) -> Option<(f64, Vec3)> {
        match *self {
            Shape::Sphere { radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                let s = if -b - root > 1e-9 { -b - root } else { -b + root };
                if s <= 1e-9 {
                    return None;
                }
                let p = origin + dir * s;
                Some((s, (p - center) * (1.0 / radius)))
            }
            Shape::Box { half } => {
                let lo = center - half;
                let hi = center + half;
                let o = [origin.x, origin.y, origin.z];
                let d = [dir.x, dir.y, dir.z];
                let (lo, hi) = ([lo.x, lo.y, lo.z], [hi.x, hi.y, hi.z]);
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut axis = 0;
                let mut sign = 0.0;
                for a in 0..3 {
                    if d[a].abs() < 1e-15 {
                        if o[a] < lo[a] || o[a] > hi[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (lo[a] - o[a]) / d[a];
                    let t2 = (hi[a] - o[a]) / d[a];
                    let (tn, tf, s) = if t1 < t2 { (t1, t2, -1.0) } else { (t2, t1, 1.0) };
                    if tn > t_near {
                        t_near = tn;
                        axis = a;
                        sign = s;
                    }
                    t_far = t_far.min(tf);
                }
                if t_near > t_far || t_near <= 1e-9 {
                    return None;
                }
                let mut n = [0.0; 3];
                n[axis] = sign;
                Some((t_near, Vec3::new(n[0], n[1], n[2])))
            }
        }
    }

    /// Whether `p` lies inside or on the solid.
    pub fn contains(&self, center: Vec3, p: Vec3) -> bool {
        let d = p - center;
        match *self {
            Shape::Sphere { radius } => d.norm() <= radius,
            Shape::Box { half } => d.x.abs() <= half.x && d.y.abs() <= half.y && d.z.abs() <= half.z,
        }
    }

    /// Height of the center above the ground when the solid rests on it.
    pub fn rest_height(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { half } => half.y,
        }
    }

    /// Radius of a ground-plane disc covering the footprint.
    pub fn footprint(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { half } => (half.x * half.x + half.z * half.z).sqrt(),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Shape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
            Shape::Box { half } => [half.x, half.y, half.z].iter().all(|h| *h > 0.0 && h.is_finite()),
        }
    }
}
