use serde::{Deserialize, Serialize};

use super::geometry::{Camera, Shape, Vec3};
use crate::{Error, Result};

/// Distance assigned to rays that escape above the horizon.
pub const FAR_DEPTH: f64 = 100.0;
pub const GROUND_ALBEDO: [f64; 3] = [0.55, 0.55, 0.5];
const SKY: [f64; 3] = [0.7, 0.8, 0.95];
const AMBIENT: f64 = 0.3;

fn light_dir() -> Vec3 {
    Vec3::new(-0.4, 1.0, 0.3).normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Every object moves; the camera is static.
    #[serde(rename = "static-camera-moving-objects")]
    StaticCamera,
    /// Most objects rest; one to three move; the camera is static.
    #[serde(rename = "mixed-static-objects")]
    MixedStatic,
    /// As `MixedStatic`, with a linearly translating camera.
    #[serde(rename = "moving-camera")]
    MovingCamera,
}

impl Regime {
    pub fn letter(self) -> char {
        match self {
            Regime::StaticCamera => 'c',
            Regime::MixedStatic => 'd',
            Regime::MovingCamera => 'e',
        }
    }

    pub fn from_letter(c: &str) -> Option<Regime> {
        match c {
            "c" => Some(Regime::StaticCamera),
            "d" => Some(Regime::MixedStatic),
            "e" => Some(Regime::MovingCamera),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub shape: Shape,
    pub albedo: [f64; 3],
    /// Center at frame 0.
    pub position: Vec3,
    /// Translation per frame.
    pub velocity: Vec3,
}

impl ObjectSpec {
    pub fn center(&self, t: usize) -> Vec3 {
        self.position + self.velocity * t as f64
    }
}

/// Intrinsics plus a look-at pose that translates linearly; orientation is
/// constant because target and position move together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPath {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub position: Vec3,
    pub target: Vec3,
    pub velocity: Vec3,
}

impl CameraPath {
    pub fn at(&self, t: usize) -> Result<Camera> {
        let shift = self.velocity * t as f64;
        Camera::look_at(self.position + shift, self.target + shift, self.focal, self.cx, self.cy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<ObjectSpec>,
    pub camera: CameraPath,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub regime: Regime,
}

/// Output of [`render_frame`]; rows are stored top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    /// H×W×3 in [0, 1].
    pub rgb: Vec<f32>,
    /// H×W Euclidean camera-to-surface distances.
    pub depth: Vec<f32>,
    /// H×W instance ids, 0 for the ground.
    pub masks: Vec<i32>,
}

/// Nearest surface along one ray.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub distance: f64,
    /// Index into `SceneSpec::objects`, `None` for ground or sky.
    pub object: Option<usize>,
    pub normal: Vec3,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::param(format!("a scene needs at least 2 frames, got {}", self.frames)));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::param("resolution must be positive"));
        }
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.first() == Some(&0) {
            return Err(Error::param("object id 0 is reserved for the background"));
        }
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("object ids must be unique"));
        }
        for o in &self.objects {
            if !o.shape.is_valid() {
                return Err(Error::param(format!("object {} has a non-positive size", o.id)));
            }
        }
        for t in 0..self.frames {
            let cam = self.camera.at(t)?;
            if cam.position.y <= 0.0 {
                return Err(Error::param(format!("camera below the ground at frame {t}")));
            }
            if let Some(o) = self.objects.iter().find(|o| o.shape.contains(o.center(t), cam.position)) {
                return Err(Error::param(format!("camera inside object {} at frame {t}", o.id)));
            }
        }
        Ok(())
    }

    pub fn trace(&self, t: usize, origin: Vec3, dir: Vec3) -> Hit {
        let mut best = Hit {
            distance: FAR_DEPTH,
            object: None,
            normal: Vec3::new(0.0, 1.0, 0.0),
        };
        if dir.y < 0.0 {
            let s = -origin.y / dir.y;
            if s > 0.0 && s < best.distance {
                best.distance = s;
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if let Some((s, n)) = o.shape.intersect(o.center(t), origin, dir) {
                if s < best.distance {
                    best = Hit {
                        distance: s,
                        object: Some(i),
                        normal: n,
                    };
                }
            }
        }
        best
    }

    fn hits(&self, t: usize, cam: &Camera) -> Vec<(Vec3, Hit)> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                let dir = cam.pixel_ray(r, c);
                out.push((dir, self.trace(t, cam.position, dir)));
            }
        }
        out
    }
}

fn shade(scene: &SceneSpec, hit: &Hit) -> [f64; 3] {
    let albedo = match hit.object {
        Some(i) => scene.objects[i].albedo,
        None if hit.distance >= FAR_DEPTH => return SKY,
        None => GROUND_ALBEDO,
    };
    let lambert = hit.normal.dot(light_dir()).max(0.0);
    let k = AMBIENT + (1.0 - AMBIENT) * lambert;
    albedo.map(|a| (a * k).clamp(0.0, 1.0))
}

/// Ray-casts frame `t`: nearest hit over all objects and the ground plane.
pub fn render_frame(scene: &SceneSpec, t: usize) -> Result<RenderedFrame> {
    if t >= scene.frames {
        return Err(Error::param(format!("frame {t} out of range 0..{}", scene.frames)));
    }
    let cam = scene.camera.at(t)?;
    let n = scene.height * scene.width;
    let mut frame = RenderedFrame {
        rgb: Vec::with_capacity(3 * n),
        depth: Vec::with_capacity(n),
        masks: Vec::with_capacity(n),
    };
    for (_, hit) in scene.hits(t, &cam) {
        frame.rgb.extend(shade(scene, &hit).map(|v| v as f32));
        frame.depth.push(hit.distance as f32);
        frame.masks.push(hit.object.map_or(0, |i| scene.objects[i].id as i32));
    }
    Ok(frame)
}

/// Flow from frame `t` to `t+1` as H×W×2 `(dx, dy)` pixel offsets: each hit
/// point moves with its object (ground and sky stay put) and is projected
/// with the next frame's camera.
pub fn compute_flow(scene: &SceneSpec, t: usize) -> Result<Vec<f32>> {
    if t + 1 >= scene.frames {
        return Err(Error::param(format!("flow needs frame {t} < {}", scene.frames - 1)));
    }
    let cam = scene.camera.at(t)?;
    let next = scene.camera.at(t + 1)?;
    let mut flow = Vec::with_capacity(2 * scene.height * scene.width);
    for (i, (dir, hit)) in scene.hits(t, &cam).into_iter().enumerate() {
        let (r, c) = (i / scene.width, i % scene.width);
        let mut p = cam.position + dir * hit.distance;
        if let Some(o) = hit.object {
            p = p + scene.objects[o].velocity;
        }
        let (dx, dy) = match next.project(p) {
            Some((u, v)) => (u - (c as f64 + 0.5), v - (r as f64 + 0.5)),
            None => (0.0, 0.0),
        };
        flow.push(dx as f32);
        flow.push(dy as f32);
    }
    Ok(flow)
}
