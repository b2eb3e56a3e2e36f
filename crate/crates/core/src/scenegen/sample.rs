use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::{Shape, Vec3};
use super::render::{compute_flow, render_frame, CameraPath, ObjectSpec, Regime, SceneSpec};
use crate::format::SparsePoint;
use crate::rng::seeded;
use crate::{Error, Result};

/// Generator settings shared by every video of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub regime: Regime,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Fraction of pixels carrying a sparse depth sample per frame.
    pub sparse_density: f64,
    /// Standard deviation of additive noise on sparse samples, world units.
    pub noise_sigma: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            regime: Regime::StaticCamera,
            height: 64,
            width: 64,
            frames: 8,
            min_objects: 2,
            max_objects: 6,
            sparse_density: 0.1,
            noise_sigma: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::param(format!("frames must be at least 2, got {}", self.frames)));
        }
        if self.height == 0 || self.width == 0 || self.height > 4096 || self.width > 4096 {
            return Err(Error::param(format!("resolution {}×{} out of range", self.height, self.width)));
        }
        if self.frames > 4096 {
            return Err(Error::param("at most 4096 frames per video"));
        }
        if self.min_objects > self.max_objects || self.max_objects == 0 || self.max_objects > 64 {
            return Err(Error::param(format!(
                "object count range {}..={} invalid (need 1 ≤ max ≤ 64, min ≤ max)",
                self.min_objects, self.max_objects
            )));
        }
        check_density(self.sparse_density)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param(format!("noise sigma must be ≥ 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

fn check_density(density: f64) -> Result<()> {
    if density > 0.0 && density <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("sparse density must lie in (0, 1], got {density}")))
    }
}

/// One generated clip. All buffers are row-major with frames outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Box slots per frame; object id `i` owns slot `i - 1`.
    pub max_objects: usize,
    /// T×H×W×3.
    pub rgb: Vec<f32>,
    /// T×H×W.
    pub depth: Vec<f32>,
    /// T×H×W×2; frames at or beyond `flow_frames` are zero-filled.
    pub flow: Vec<f32>,
    /// Number of leading frames whose flow field is defined (`frames - 1`
    /// for a full video).
    pub flow_frames: usize,
    /// T×H×W.
    pub masks: Vec<i32>,
    /// T×K×4 normalized `[ymin, xmin, ymax, xmax]`.
    pub boxes: Vec<f32>,
    pub sparse: Vec<SparsePoint>,
}

impl VideoSample {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Whether frame `t` carries a real flow field.
    pub fn flow_valid(&self, t: usize) -> bool {
        t < self.flow_frames
    }

    pub fn rgb_frame(&self, t: usize) -> &[f32] {
        let n = 3 * self.pixels();
        &self.rgb[t * n..(t + 1) * n]
    }

    pub fn depth_frame(&self, t: usize) -> &[f32] {
        let n = self.pixels();
        &self.depth[t * n..(t + 1) * n]
    }

    pub fn flow_frame(&self, t: usize) -> &[f32] {
        let n = 2 * self.pixels();
        &self.flow[t * n..(t + 1) * n]
    }

    pub fn mask_frame(&self, t: usize) -> &[i32] {
        let n = self.pixels();
        &self.masks[t * n..(t + 1) * n]
    }

    pub fn box_frame(&self, t: usize) -> &[f32] {
        let n = 4 * self.max_objects;
        &self.boxes[t * n..(t + 1) * n]
    }

    pub fn max_flow_magnitude(&self) -> f64 {
        self.flow
            .chunks_exact(2)
            .map(|f| (f[0] as f64).hypot(f[1] as f64))
            .fold(0.0, f64::max)
    }

    /// Copies frames `start..start+len`, renumbering sparse frames.
    pub fn clip(&self, start: usize, len: usize) -> Result<VideoSample> {
        if len == 0 || start + len > self.frames {
            return Err(Error::param(format!(
                "clip {start}..{} outside 0..{}",
                start + len,
                self.frames
            )));
        }
        let span = |per: usize, v: &[f32]| v[start * per..(start + len) * per].to_vec();
        let p = self.pixels();
        Ok(VideoSample {
            frames: len,
            height: self.height,
            width: self.width,
            max_objects: self.max_objects,
            rgb: span(3 * p, &self.rgb),
            depth: span(p, &self.depth),
            flow: span(2 * p, &self.flow),
            flow_frames: self.flow_frames.saturating_sub(start).min(len),
            masks: self.masks[start * p..(start + len) * p].to_vec(),
            boxes: span(4 * self.max_objects, &self.boxes),
            sparse: self
                .sparse
                .iter()
                .filter(|s| (start..start + len).contains(&(s.frame as usize)))
                .map(|s| SparsePoint {
                    frame: s.frame - start as u32,
                    ..*s
                })
                .collect(),
        })
    }
}

/// Draws a random scene for `config`.
pub fn sample_scene(config: &SceneConfig, rng: &mut impl Rng) -> Result<SceneSpec> {
    config.validate()?;
    let n = rng.random_range(config.min_objects..=config.max_objects);
    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(n);
    for id in 1..=n as u32 {
        let shape = if rng.random_bool(0.5) {
            Shape::Sphere {
                radius: rng.random_range(0.5..1.0),
            }
        } else {
            Shape::Box {
                half: Vec3::new(
                    rng.random_range(0.4..0.9),
                    rng.random_range(0.4..0.9),
                    rng.random_range(0.4..0.9),
                ),
            }
        };
        let albedo = [0; 3].map(|_| rng.random_range(0.15..1.0));
        // keep footprints disjoint at frame 0 when possible
        let mut position = Vec3::default();
        for _ in 0..200 {
            position = Vec3::new(rng.random_range(-3.0..3.0), shape.rest_height(), rng.random_range(-3.0..3.0));
            let clear = objects.iter().all(|o| {
                let d = Vec3::new(o.position.x - position.x, 0.0, o.position.z - position.z).norm();
                d > o.shape.footprint() + shape.footprint() + 0.1
            });
            if clear {
                break;
            }
        }
        objects.push(ObjectSpec {
            id,
            shape,
            albedo,
            position,
            velocity: Vec3::default(),
        });
    }
    let moving = match config.regime {
        Regime::StaticCamera => n,
        _ if n == 0 => 0,
        _ => rng.random_range(1..=n.min(3)),
    };
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..moving {
        let j = rng.random_range(i..n);
        order.swap(i, j);
        objects[order[i]].velocity = planar(rng, 0.05..0.2);
    }
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let radius = rng.random_range(8.5..9.5);
    let position = Vec3::new(radius * azimuth.sin(), rng.random_range(6.5..7.5), radius * azimuth.cos());
    let target = Vec3::new(rng.random_range(-0.5..0.5), 0.0, rng.random_range(-0.5..0.5));
    let velocity = match config.regime {
        Regime::MovingCamera => planar(rng, 0.1..0.25),
        _ => Vec3::default(),
    };
    let scene = SceneSpec {
        objects,
        camera: CameraPath {
            focal: config.width.max(config.height) as f64,
            cx: config.width as f64 / 2.0,
            cy: config.height as f64 / 2.0,
            position,
            target,
            velocity,
        },
        frames: config.frames,
        height: config.height,
        width: config.width,
        regime: config.regime,
    };
    scene.validate()?;
    Ok(scene)
}

fn planar(rng: &mut impl Rng, speed: std::ops::Range<f64>) -> Vec3 {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let s = rng.random_range(speed);
    Vec3::new(s * angle.cos(), 0.0, s * angle.sin())
}

/// Tight normalized boxes `[ymin, xmin, ymax, xmax]` per object id `1..=k`
/// per frame; absent ids get zeros. `masks` is T×H×W.
pub fn extract_bboxes(masks: &[i32], frames: usize, height: usize, width: usize, k: usize) -> Vec<f32> {
    let mut boxes = vec![0.0f32; frames * k * 4];
    for t in 0..frames {
        // (r0, c0, r1, c1) inclusive pixel bounds
        let mut bounds = vec![(usize::MAX, usize::MAX, 0usize, 0usize); k];
        let frame = &masks[t * height * width..(t + 1) * height * width];
        for (i, &id) in frame.iter().enumerate() {
            if id < 1 || id as usize > k {
                continue;
            }
            let (r, c) = (i / width, i % width);
            let b = &mut bounds[id as usize - 1];
            b.0 = b.0.min(r);
            b.1 = b.1.min(c);
            b.2 = b.2.max(r);
            b.3 = b.3.max(c);
        }
        for (o, b) in bounds.iter().enumerate() {
            if b.0 == usize::MAX {
                continue;
            }
            let dst = &mut boxes[(t * k + o) * 4..(t * k + o + 1) * 4];
            dst[0] = b.0 as f32 / height as f32;
            dst[1] = b.1 as f32 / width as f32;
            dst[2] = (b.2 + 1) as f32 / height as f32;
            dst[3] = (b.3 + 1) as f32 / width as f32;
        }
    }
    boxes
}

/// Scanline sampling: about `sqrt(n·H/W)` evenly spaced rows (random phase),
/// each holding an even share of the `n = round(density·H·W)` points at
/// evenly spaced columns (random phase per row). `depth` is T×H×W.
pub fn sample_sparse_depth(
    depth: &[f32],
    frames: usize,
    height: usize,
    width: usize,
    density: f64,
    rng: &mut impl Rng,
) -> Result<Vec<SparsePoint>> {
    check_density(density)?;
    if depth.len() != frames * height * width {
        return Err(Error::Contract(format!(
            "depth holds {} values, expected {frames}×{height}×{width}",
            depth.len()
        )));
    }
    let n = ((density * (height * width) as f64).round() as usize).max(1);
    let rows = ((n as f64 * height as f64 / width as f64).sqrt().ceil() as usize).clamp(1, height);
    let mut points = Vec::with_capacity(n * frames);
    for t in 0..frames {
        let phase: f64 = rng.random();
        for i in 0..rows {
            let r = ((i as f64 + phase) * height as f64 / rows as f64) as usize;
            let count = n / rows + usize::from(i < n % rows);
            if count == 0 {
                continue;
            }
            let col_phase: f64 = rng.random();
            for j in 0..count {
                let c = ((j as f64 + col_phase) * width as f64 / count as f64) as usize;
                points.push(SparsePoint {
                    frame: t as u32,
                    row: r as u32,
                    col: c as u32,
                    dist: depth[(t * height + r) * width + c],
                });
            }
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Smallest distance left after noise is added.
pub const MIN_NOISY_DEPTH: f32 = 1e-3;

/// Adds independent `Normal(0, σ²)` offsets and clamps to a small positive
/// floor.
pub fn add_depth_noise(points: &[SparsePoint], spec: &NoiseSpec) -> Result<Vec<SparsePoint>> {
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(Error::param(format!("noise sigma must be ≥ 0, got {}", spec.sigma)));
    }
    if spec.sigma == 0.0 {
        return Ok(points.to_vec());
    }
    let normal = Normal::new(0.0, spec.sigma).expect("finite positive sigma");
    let mut rng = seeded(spec.seed, 0);
    Ok(points
        .iter()
        .map(|p| SparsePoint {
            dist: ((p.dist as f64 + normal.sample(&mut rng)) as f32).max(MIN_NOISY_DEPTH),
            ..*p
        })
        .collect())
}

/// Renders every frame of `scene` and derives boxes and sparse samples.
pub fn render_video(scene: &SceneSpec, config: &SceneConfig, seed: u64) -> Result<VideoSample> {
    scene.validate()?;
    let (t_n, h, w) = (scene.frames, scene.height, scene.width);
    let p = h * w;
    let mut v = VideoSample {
        frames: t_n,
        height: h,
        width: w,
        max_objects: config.max_objects,
        rgb: Vec::with_capacity(t_n * p * 3),
        depth: Vec::with_capacity(t_n * p),
        flow: Vec::with_capacity(t_n * p * 2),
        flow_frames: t_n - 1,
        masks: Vec::with_capacity(t_n * p),
        boxes: Vec::new(),
        sparse: Vec::new(),
    };
    for t in 0..t_n {
        let f = render_frame(scene, t)?;
        v.rgb.extend(f.rgb);
        v.depth.extend(f.depth);
        v.masks.extend(f.masks);
        if t + 1 < t_n {
            v.flow.extend(compute_flow(scene, t)?);
        } else {
            v.flow.extend(std::iter::repeat_n(0.0, 2 * p));
        }
    }
    if scene.objects.iter().any(|o| o.id as usize > config.max_objects) {
        return Err(Error::param("object id exceeds max_objects"));
    }
    v.boxes = extract_bboxes(&v.masks, t_n, h, w, config.max_objects);
    let mut rng = seeded(seed, 1);
    let clean = sample_sparse_depth(&v.depth, t_n, h, w, config.sparse_density, &mut rng)?;
    v.sparse = add_depth_noise(
        &clean,
        &NoiseSpec {
            sigma: config.noise_sigma,
            seed: rng.next_u64(),
        },
    )?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_examples() {
        let mut m = vec![0i32; 100 * 100];
        for r in 10..20 {
            for c in 30..40 {
                m[r * 100 + c] = 1;
            }
        }
        let b = extract_bboxes(&m, 1, 100, 100, 2);
        assert_eq!(&b[..4], &[0.10, 0.30, 0.20, 0.40]);
        assert_eq!(&b[4..], &[0.0; 4]);
        let full = extract_bboxes(&[1; 12], 1, 3, 4, 1);
        assert_eq!(full, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn full_density_covers_every_pixel_once() {
        let depth: Vec<f32> = (0..2 * 6 * 5).map(|i| i as f32 + 1.0).collect();
        let pts = sample_sparse_depth(&depth, 2, 6, 5, 1.0, &mut seeded(3, 0)).unwrap();
        assert_eq!(pts.len(), 60);
        let mut seen = [false; 60];
        for p in &pts {
            let i = ((p.frame * 6 + p.row) * 5 + p.col) as usize;
            assert!(!seen[i]);
            seen[i] = true;
            assert_eq!(p.dist, depth[i]);
        }
    }

    #[test]
    fn density_count_and_determinism() {
        let depth = vec![2.0f32; 64 * 64];
        let a = sample_sparse_depth(&depth, 1, 64, 64, 0.05, &mut seeded(9, 0)).unwrap();
        assert!((a.len() as i64 - 205).abs() <= 2, "{}", a.len());
        let b = sample_sparse_depth(&depth, 1, 64, 64, 0.05, &mut seeded(9, 0)).unwrap();
        assert_eq!(a, b);
        let mut uniq: Vec<_> = a.iter().map(|p| (p.row, p.col)).collect();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), a.len());
        for d in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(sample_sparse_depth(&depth, 1, 64, 64, d, &mut seeded(9, 0)).is_err());
        }
    }

    #[test]
    fn zero_sigma_is_identity_and_clamp_holds() {
        let pts: Vec<_> = (0..1000)
            .map(|i| SparsePoint {
                frame: 0,
                row: i,
                col: 0,
                dist: 0.01,
            })
            .collect();
        assert_eq!(add_depth_noise(&pts, &NoiseSpec { sigma: 0.0, seed: 1 }).unwrap(), pts);
        let noisy = add_depth_noise(&pts, &NoiseSpec { sigma: 0.4, seed: 1 }).unwrap();
        assert!(noisy.iter().all(|p| p.dist > 0.0));
        assert!(add_depth_noise(&pts, &NoiseSpec { sigma: -1.0, seed: 1 }).is_err());
    }

    #[test]
    fn moving_camera_regime_translates() {
        let cfg = SceneConfig {
            regime: Regime::MovingCamera,
            ..SceneConfig::default()
        };
        for s in 0..10 {
            let scene = sample_scene(&cfg, &mut seeded(s, 0)).unwrap();
            assert!(!scene.camera.velocity.is_zero());
            let moving = scene.objects.iter().filter(|o| !o.velocity.is_zero()).count();
            assert!((1..=3).contains(&moving));
        }
    }

    #[test]
    fn clip_renumbers_sparse_frames() {
        let cfg = SceneConfig {
            height: 16,
            width: 16,
            frames: 5,
            ..SceneConfig::default()
        };
        let scene = sample_scene(&cfg, &mut seeded(1, 0)).unwrap();
        let v = render_video(&scene, &cfg, 1).unwrap();
        let c = v.clip(2, 3).unwrap();
        assert_eq!(c.frames, 3);
        assert_eq!(c.depth_frame(0), v.depth_frame(2));
        assert_eq!(c.flow_frame(2), v.flow_frame(4));
        assert_eq!((c.flow_frames, v.clip(0, 3).unwrap().flow_frames), (2, 3));
        assert!(c.sparse.iter().all(|p| p.frame < 3));
        assert_eq!(c.sparse.len(), v.sparse.iter().filter(|p| p.frame >= 2).count());
        assert!(v.clip(3, 3).is_err());
    }
}
