//! Reference baselines: first-frame box copying, learned box propagation
//! (a model variant trained through [`crate::train::Trainer`] and predicted
//! with [`crate::evaluate::predict_video`]), and k-means pixel clustering.

use serde::{Deserialize, Serialize};

use crate::evaluate::rasterize_boxes;
use crate::metrics::VideoPrediction;
use crate::scenegen::VideoSample;
use crate::targets::{encode_depth, flow_to_rgb};
use crate::{Error, Result};

/// Repeats the K×4 first-frame boxes in every frame, rasterized with later
/// boxes on top.
pub fn bbox_copy(first_boxes: &[f32], frames: usize, height: usize, width: usize) -> VideoPrediction {
    let one = rasterize_boxes(first_boxes, height, width);
    VideoPrediction {
        masks: one.repeat(frames),
        labels: first_boxes.len() / 4,
        boxes: Some(first_boxes.repeat(frames)),
    }
}

/// Which signal dimensions join position and time in the pixel features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KMeansFeatures {
    Depth,
    Flow,
    DepthFlow,
}

impl KMeansFeatures {
    fn depth(self) -> bool {
        self != KMeansFeatures::Flow
    }

    fn flow(self) -> bool {
        self != KMeansFeatures::Depth
    }

    pub fn dims(self) -> usize {
        3 + usize::from(self.depth()) + 3 * usize::from(self.flow())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansConfig {
    pub features: KMeansFeatures,
    pub max_iters: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            features: KMeansFeatures::DepthFlow,
            max_iters: 300,
        }
    }
}

/// Per-pixel features (log-depth, flow color, row, column, time), each
/// dimension min-max scaled to `[0, 1]` over the video. Rows are pixels in
/// T×H×W order. Frames past the last flow field reuse the previous one.
pub fn pixel_features(sample: &VideoSample, features: KMeansFeatures) -> Result<Vec<Vec<f64>>> {
    let (t_n, h, w) = (sample.frames, sample.height, sample.width);
    let p = h * w;
    if features.flow() && sample.flow_frames == 0 {
        return Err(Error::Data("video has no flow fields".into()));
    }
    let max_flow = sample.max_flow_magnitude().max(1e-12);
    let mut rows = Vec::with_capacity(t_n * p);
    for t in 0..t_n {
        let ft = t.min(sample.flow_frames.saturating_sub(1));
        for i in 0..p {
            let mut f = Vec::with_capacity(features.dims());
            if features.depth() {
                f.push(encode_depth(sample.depth[t * p + i] as f64)?);
            }
            if features.flow() {
                let v = &sample.flow[(ft * p + i) * 2..(ft * p + i) * 2 + 2];
                f.extend(flow_to_rgb(v[0] as f64, v[1] as f64, max_flow));
            }
            f.push((i / w) as f64);
            f.push((i % w) as f64);
            f.push(t as f64);
            rows.push(f);
        }
    }
    for d in 0..features.dims() {
        let lo = rows.iter().map(|r| r[d]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[d]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for r in rows.iter_mut() {
            r[d] = if span > 0.0 { (r[d] - lo) / span } else { 0.0 };
        }
    }
    Ok(rows)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster of every point.
    pub assignment: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lloyd's algorithm from the given centers. Ties go to the lower cluster
/// index. A cluster left empty is moved onto the point farthest from its
/// assigned center. Stops when an assignment repeats or after `max_iters`
/// center updates.
pub fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iters: usize) -> Result<KMeansResult> {
    if centers.is_empty() {
        return Err(Error::param("k-means needs at least one center"));
    }
    let dims = centers[0].len();
    if points.iter().chain(&centers).any(|p| p.len() != dims) {
        return Err(Error::Contract("points and centers disagree in dimension".into()));
    }
    let assign = |centers: &[Vec<f64>]| -> (Vec<usize>, Vec<f64>) {
        points
            .iter()
            .map(|p| {
                let mut best = (0, dist2(p, &centers[0]));
                for (j, c) in centers.iter().enumerate().skip(1) {
                    let d = dist2(p, c);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best
            })
            .unzip()
    };
    let (mut assignment, mut d) = assign(&centers);
    let mut objective = vec![d.iter().sum()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let k = centers.len();
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else if let Some((far, _)) = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))) {
                centers[j] = points[far].clone();
                d[far] = 0.0;
            }
        }
        let (next, nd) = assign(&centers);
        objective.push(nd.iter().sum());
        d = nd;
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }
    Ok(KMeansResult {
        assignment,
        centers,
        objective,
        iterations,
        converged,
    })
}

/// Clusters every pixel of the video into one cluster per object visible in
/// the first frame plus background. Object centers start at the mean
/// first-frame feature inside the object's box, the background at the mean
/// over the whole first frame. Labels: object id for object clusters, 0 for
/// background.
pub fn kmeans_pixels(sample: &VideoSample, config: &KMeansConfig) -> Result<(VideoPrediction, KMeansResult)> {
    let points = pixel_features(sample, config.features)?;
    let (h, w) = (sample.height, sample.width);
    let p = h * w;
    let mean = |idx: &mut dyn Iterator<Item = usize>| -> Option<Vec<f64>> {
        let mut s = vec![0.0; config.features.dims()];
        let mut n = 0;
        for i in idx {
            for (a, v) in s.iter_mut().zip(&points[i]) {
                *a += v;
            }
            n += 1;
        }
        (n > 0).then(|| s.iter().map(|v| v / n as f64).collect())
    };
    let background = mean(&mut (0..p)).ok_or_else(|| Error::Data("video has no pixels".into()))?;
    let mut centers = vec![background.clone()];
    let mut ids = vec![0i32];
    for (j, b) in sample.box_frame(0).chunks(4).enumerate() {
        if b.iter().all(|v| *v == 0.0) {
            continue;
        }
        let inside = rasterize_boxes(b, h, w);
        let c = mean(&mut (0..p).filter(|&i| inside[i] == 1)).unwrap_or_else(|| background.clone());
        centers.push(c);
        ids.push(j as i32 + 1);
    }
    let result = lloyd(&points, centers, config.max_iters)?;
    let masks = result.assignment.iter().map(|&a| ids[a]).collect();
    Ok((
        VideoPrediction {
            masks,
            labels: sample.max_objects,
            boxes: None,
        },
        result,
    ))
}
