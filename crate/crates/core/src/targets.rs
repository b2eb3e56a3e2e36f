//! Prediction targets: log-depth and color-wheel flow channels with
//! per-pixel validity.

use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scenegen::VideoSample;
use crate::{Error, Result};

/// `ln(1 + d)`.
pub fn encode_depth(d: f64) -> Result<f64> {
    if d >= 0.0 {
        Ok(d.ln_1p())
    } else {
        Err(Error::Data(format!("depth must be non-negative, got {d}")))
    }
}

/// Inverse of [`encode_depth`].
pub fn decode_depth(x: f64) -> f64 {
    x.exp_m1()
}

/// Flow direction as hue (angle measured from +x on the 6-sector wheel),
/// magnitude relative to `max_magnitude` as saturation, value fixed at 1.
pub fn flow_to_rgb(dx: f64, dy: f64, max_magnitude: f64) -> [f64; 3] {
    debug_assert!(max_magnitude > 0.0);
    let sat = (dx.hypot(dy) / max_magnitude).min(1.0);
    if !(sat > 0.0) {
        return [1.0; 3];
    }
    let angle = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
    let h = (angle / std::f64::consts::TAU * 6.0) % 6.0;
    let c = sat;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = 1.0 - c;
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSelection {
    pub depth: bool,
    pub flow: bool,
}

impl TargetSelection {
    pub const DEPTH: TargetSelection = TargetSelection { depth: true, flow: false };
    pub const FLOW: TargetSelection = TargetSelection { depth: false, flow: true };
    pub const BOTH: TargetSelection = TargetSelection { depth: true, flow: true };

    pub fn channels(self) -> usize {
        usize::from(self.depth) + 3 * usize::from(self.flow)
    }
}

impl FromStr for TargetSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(Self::DEPTH),
            "flow" => Ok(Self::FLOW),
            "depth+flow" | "flow+depth" => Ok(Self::BOTH),
            _ => Err(Error::param(format!("unknown target selection {s:?} (depth, flow, depth+flow)"))),
        }
    }
}

impl std::fmt::Display for TargetSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match (self.depth, self.flow) {
            (true, true) => "depth+flow",
            (true, false) => "depth",
            (false, true) => "flow",
            (false, false) => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthSource {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetBundle {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// T×H×W×C.
    pub values: Vec<f32>,
    /// T×H×W.
    pub valid: Vec<bool>,
    pub channel_map: Vec<(&'static str, Range<usize>)>,
}

impl TargetBundle {
    pub fn frame_values(&self, t: usize) -> &[f32] {
        let n = self.height * self.width * self.channels;
        &self.values[t * n..(t + 1) * n]
    }

    pub fn frame_valid(&self, t: usize) -> &[bool] {
        let n = self.height * self.width;
        &self.valid[t * n..(t + 1) * n]
    }
}

/// Concatenates the selected channels (depth first, then flow color) and
/// intersects their validity masks. Flow is invalid on frames without a
/// defined flow field.
pub fn assemble_targets(
    selection: TargetSelection,
    source: DepthSource,
    sample: &VideoSample,
    flow_max_magnitude: f64,
) -> Result<TargetBundle> {
    if !selection.depth && !selection.flow {
        return Err(Error::param("target selection is empty"));
    }
    if !(flow_max_magnitude > 0.0) {
        return Err(Error::param("flow max magnitude must be positive"));
    }
    let (t_n, p) = (sample.frames, sample.pixels());
    let c = selection.channels();
    let mut values = vec![0.0f32; t_n * p * c];
    let mut valid = vec![true; t_n * p];
    let mut channel_map = Vec::new();
    let mut next = 0;
    if selection.depth {
        channel_map.push(("depth", 0..1));
        next = 1;
        match source {
            DepthSource::Dense => {
                for (i, &d) in sample.depth.iter().enumerate() {
                    values[i * c] = encode_depth(d as f64)? as f32;
                }
            }
            DepthSource::Sparse => {
                let mut seen = vec![false; t_n * p];
                for pt in &sample.sparse {
                    let i = (pt.frame as usize * sample.height + pt.row as usize) * sample.width + pt.col as usize;
                    if i >= seen.len() {
                        return Err(Error::Data(format!("sparse point {pt:?} outside the video")));
                    }
                    seen[i] = true;
                    values[i * c] = encode_depth(pt.dist as f64)? as f32;
                }
                valid = seen;
            }
        }
    }
    if selection.flow {
        channel_map.push(("flow_rgb", next..next + 3));
        for t in 0..t_n {
            let flow = sample.flow_frame(t);
            for j in 0..p {
                let i = t * p + j;
                if !sample.flow_valid(t) {
                    valid[i] = false;
                    continue;
                }
                let rgb = flow_to_rgb(flow[2 * j] as f64, flow[2 * j + 1] as f64, flow_max_magnitude);
                for (k, v) in rgb.iter().enumerate() {
                    values[i * c + next + k] = *v as f32;
                }
            }
        }
    }
    Ok(TargetBundle {
        frames: t_n,
        height: sample.height,
        width: sample.width,
        channels: c,
        values,
        valid,
        channel_map,
    })
}
