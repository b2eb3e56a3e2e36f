use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::Regime;
use super::sample::{render_video, sample_scene, SceneConfig, VideoSample};
use crate::format::{decode_f32, decode_i32, decode_sparse, encode_f32, encode_i32, encode_sparse};
use crate::rng::{derive, seeded};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub scene: SceneConfig,
    /// Total number of videos, training plus validation.
    pub videos: usize,
    pub val_videos: usize,
    pub seed: u64,
}

impl DatasetConfig {
    /// `videos` clips with the customary tenth held out for validation.
    pub fn new(scene: SceneConfig, videos: usize, seed: u64) -> Self {
        DatasetConfig {
            scene,
            videos,
            val_videos: videos / 10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.videos == 0 {
            return Err(Error::param("a dataset needs at least one video"));
        }
        if self.val_videos > self.videos {
            return Err(Error::param(format!(
                "{} validation videos requested out of {}",
                self.val_videos, self.videos
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub name: String,
    pub split: Split,
    pub seed: u64,
    pub num_objects: usize,
    /// Camera displacement per frame.
    pub camera_translation: [f64; 3],
    /// Extents of each tensor file, keyed by file name.
    pub shapes: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub config: DatasetConfig,
    /// Largest flow magnitude in the dataset (pixels), at least 1; scales the
    /// flow color wheel.
    pub flow_max_magnitude: f64,
    pub videos: Vec<VideoEntry>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Manifest> {
        let m: Manifest =
            serde_json::from_str(text).map_err(|e| Error::format("manifest", e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::format(
                "manifest",
                format!("format version {} (expected {FORMAT_VERSION})", m.format_version),
            ));
        }
        m.config.validate()?;
        if m.videos.len() != m.config.videos {
            return Err(Error::format(
                "manifest",
                format!("lists {} videos, config says {}", m.videos.len(), m.config.videos),
            ));
        }
        for v in &m.videos {
            if v.name.is_empty() || v.name.contains(['/', '\\']) || v.name.starts_with('.') {
                return Err(Error::format("manifest", format!("bad video name {:?}", v.name)));
            }
        }
        if !(m.flow_max_magnitude >= 1.0 && m.flow_max_magnitude.is_finite()) {
            return Err(Error::format("manifest", "flow_max_magnitude must be finite and ≥ 1"));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    /// Parallel to `manifest.videos`.
    pub samples: Vec<VideoSample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &VideoSample> {
        self.manifest
            .videos
            .iter()
            .zip(&self.samples)
            .filter(move |(e, _)| e.split == split)
            .map(|(_, s)| s)
    }
}

fn shapes(v: &VideoSample) -> BTreeMap<String, Vec<usize>> {
    let (t, h, w) = (v.frames, v.height, v.width);
    BTreeMap::from([
        ("rgb.bin".to_string(), vec![t, h, w, 3]),
        ("depth.bin".to_string(), vec![t, h, w]),
        ("flow.bin".to_string(), vec![t, h, w, 2]),
        ("masks.bin".to_string(), vec![t, h, w]),
        ("boxes.bin".to_string(), vec![t, v.max_objects, 4]),
        ("sparse.bin".to_string(), vec![v.sparse.len()]),
    ])
}

/// Generates every video in memory. Training and validation videos draw
/// their seeds from disjoint streams of the dataset seed.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let train = config.videos - config.val_videos;
    let jobs: Vec<(String, Split, u64)> = (0..config.videos)
        .map(|i| {
            if i < train {
                (format!("train_{i:05}"), Split::Train, derive(config.seed, i as u64 * 2))
            } else {
                let j = i - train;
                (format!("val_{j:05}"), Split::Val, derive(config.seed, j as u64 * 2 + 1))
            }
        })
        .collect();
    let rendered: Vec<Result<(VideoEntry, VideoSample)>> = jobs
        .into_par_iter()
        .map(|(name, split, seed)| {
            let scene = sample_scene(&config.scene, &mut seeded(seed, 0))?;
            let sample = render_video(&scene, &config.scene, seed)?;
            let c = scene.camera.velocity;
            let entry = VideoEntry {
                name,
                split,
                seed,
                num_objects: scene.objects.len(),
                camera_translation: [c.x, c.y, c.z],
                shapes: shapes(&sample),
            };
            Ok((entry, sample))
        })
        .collect();
    let mut videos = Vec::with_capacity(config.videos);
    let mut samples = Vec::with_capacity(config.videos);
    for r in rendered {
        let (e, s) = r?;
        videos.push(e);
        samples.push(s);
    }
    let flow_max_magnitude = samples.iter().map(VideoSample::max_flow_magnitude).fold(1.0, f64::max);
    Ok(Dataset {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            flow_max_magnitude,
            videos,
        },
        samples,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes one directory per video plus `manifest.json` under `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (entry, v) in dataset.manifest.videos.iter().zip(&dataset.samples) {
        let vd = dir.join(&entry.name);
        fs::create_dir_all(&vd).map_err(|e| Error::io(&vd, e))?;
        let (t, h, w) = (v.frames, v.height, v.width);
        write(&vd.join("rgb.bin"), &encode_f32(&[t, h, w, 3], &v.rgb)?)?;
        write(&vd.join("depth.bin"), &encode_f32(&[t, h, w], &v.depth)?)?;
        write(&vd.join("flow.bin"), &encode_f32(&[t, h, w, 2], &v.flow)?)?;
        write(&vd.join("masks.bin"), &encode_i32(&[t, h, w], &v.masks)?)?;
        write(&vd.join("boxes.bin"), &encode_f32(&[t, v.max_objects, 4], &v.boxes)?)?;
        write(&vd.join("sparse.bin"), &encode_sparse(&v.sparse))?;
    }
    write(&dir.join("manifest.json"), dataset.manifest.to_json().as_bytes())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn expect_shape(name: &str, got: &[usize], want: &[usize]) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::format("dataset", format!("{name} has shape {got:?}, manifest says {want:?}")))
    }
}

/// Reads a dataset written by [`write_dataset`], checking every file against
/// the manifest.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(dir.join("manifest.json")).map_err(|e| Error::io(dir.join("manifest.json"), e))?;
    let manifest = Manifest::from_json(&text)?;
    let cfg = &manifest.config.scene;
    let (t, h, w, k) = (cfg.frames, cfg.height, cfg.width, cfg.max_objects);
    let mut samples = Vec::with_capacity(manifest.videos.len());
    for entry in &manifest.videos {
        let vd = dir.join(&entry.name);
        let (s, rgb) = decode_f32(&read(&vd.join("rgb.bin"))?)?;
        expect_shape("rgb.bin", &s, &[t, h, w, 3])?;
        let (s, depth) = decode_f32(&read(&vd.join("depth.bin"))?)?;
        expect_shape("depth.bin", &s, &[t, h, w])?;
        let (s, flow) = decode_f32(&read(&vd.join("flow.bin"))?)?;
        expect_shape("flow.bin", &s, &[t, h, w, 2])?;
        let (s, masks) = decode_i32(&read(&vd.join("masks.bin"))?)?;
        expect_shape("masks.bin", &s, &[t, h, w])?;
        let (s, boxes) = decode_f32(&read(&vd.join("boxes.bin"))?)?;
        expect_shape("boxes.bin", &s, &[t, k, 4])?;
        let sparse = decode_sparse(&read(&vd.join("sparse.bin"))?)?;
        if sparse
            .iter()
            .any(|p| p.frame as usize >= t || p.row as usize >= h || p.col as usize >= w)
        {
            return Err(Error::format("sparse points", format!("{}: point outside the video", entry.name)));
        }
        if masks.iter().any(|&m| m < 0 || m as usize > k) {
            return Err(Error::format("masks", format!("{}: id outside 0..={k}", entry.name)));
        }
        samples.push(VideoSample {
            frames: t,
            height: h,
            width: w,
            max_objects: k,
            rgb,
            depth,
            flow,
            flow_frames: t - 1,
            masks,
            boxes,
            sparse,
        });
    }
    if manifest.config.scene.regime == Regime::MovingCamera
        && manifest.videos.iter().any(|v| v.camera_translation == [0.0; 3])
    {
        return Err(Error::format("manifest", "moving-camera video without camera translation"));
    }
    Ok(Dataset { manifest, samples })
}
