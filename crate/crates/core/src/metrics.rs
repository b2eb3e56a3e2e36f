//! Segmentation and tracking metrics. Every metric skips frames before
//! `start_frame` (the conditioning frame).
//!
//! Label maps are `T×H×W` i32 buffers. Ground truth uses 0 for background
//! and object ids `1..`; predictions use `slot + 1` (or the object id for
//! box baselines), so label `j` is compared with object `j`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scenegen::VideoSample;
use crate::{Error, Result};

fn pairs(n: u64) -> f64 {
    (n as f64) * (n.saturating_sub(1) as f64) / 2.0
}

/// Adjusted Rand index from the contingency table of two labelings. When
/// `foreground_only`, pixels with `gt == 0` are dropped. `None` when fewer
/// than one pixel remains; 1.0 when the expected and maximal indices
/// coincide.
pub fn adjusted_rand_index(pred: &[i32], gt: &[i32], foreground_only: bool) -> Result<Option<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Contract(format!("{} predicted vs {} ground-truth labels", pred.len(), gt.len())));
    }
    let mut table: BTreeMap<(i32, i32), u64> = BTreeMap::new();
    let mut rows: BTreeMap<i32, u64> = BTreeMap::new();
    let mut cols: BTreeMap<i32, u64> = BTreeMap::new();
    let mut n = 0u64;
    for (&p, &g) in pred.iter().zip(gt) {
        if foreground_only && g == 0 {
            continue;
        }
        *table.entry((p, g)).or_default() += 1;
        *rows.entry(p).or_default() += 1;
        *cols.entry(g).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return Ok(None);
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(Some(1.0));
    }
    Ok(Some((index - expected) / (max - expected)))
}

/// FG-ARI pooled over frames `start..`.
pub fn fg_ari(pred: &[i32], gt: &[i32], pixels: usize, start: usize) -> Result<Option<f64>> {
    let from = (start * pixels).min(gt.len());
    adjusted_rand_index(&pred[from.min(pred.len())..], &gt[from..], true)
}

/// Objects whose masks or boxes are present in frame 0, i.e. the ones that
/// received a conditioning box.
pub fn conditioned_objects(gt: &VideoSample) -> Vec<i32> {
    gt.box_frame(0)
        .chunks(4)
        .enumerate()
        .filter(|(_, b)| b.iter().any(|v| *v != 0.0))
        .map(|(j, _)| j as i32 + 1)
        .collect()
}

fn frame(labels: &[i32], pixels: usize, t: usize) -> &[i32] {
    &labels[t * pixels..(t + 1) * pixels]
}

/// DAVIS-style J-mean: per object, IoU averaged over frames `start..` where
/// its ground-truth mask is non-empty; then averaged over objects. Only ids
/// in `objects` are scored, and an object never visible in the window is
/// dropped. `None` when no object qualifies.
pub fn video_miou_ordered(pred: &[i32], gt: &[i32], frames: usize, pixels: usize, start: usize, objects: &[i32]) -> Result<Option<f64>> {
    if pred.len() != gt.len() || gt.len() != frames * pixels {
        return Err(Error::Contract("label maps disagree in size".into()));
    }
    let mut per_object = Vec::new();
    for &j in objects {
        let mut ious = Vec::new();
        for t in start..frames {
            let (p, g) = (frame(pred, pixels, t), frame(gt, pixels, t));
            let (mut inter, mut union, mut gt_area) = (0usize, 0usize, 0usize);
            for (&a, &b) in p.iter().zip(g) {
                let (a, b) = (a == j, b == j);
                inter += usize::from(a && b);
                union += usize::from(a || b);
                gt_area += usize::from(b);
            }
            if gt_area > 0 {
                ious.push(inter as f64 / union as f64);
            }
        }
        if !ious.is_empty() {
            per_object.push(ious.iter().sum::<f64>() / ious.len() as f64);
        }
    }
    Ok(mean(&per_object))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Kuhn–Munkres on a square matrix; returns the column of each row.
fn munkres(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // potentials and matching with a dummy column 0 (1-based internally)
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn square(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    let n = rows.len().max(cols.len());
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (rows.get(i), cols.get(j)) {
                    (Some(&r), Some(&c)) => cost[r][c],
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

fn optimum(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let sq = square(cost, rows, cols);
    let a = munkres(&sq);
    rows.iter()
        .enumerate()
        .filter_map(|(i, &r)| cols.get(a[i]).map(|&c| cost[r][c]))
        .sum()
}

/// Minimum-cost one-to-one assignment of `min(n, m)` pairs. Among optimal
/// assignments the one that is lexicographically smallest by (row, column)
/// is returned. Returns each row's column (if any) and the total cost,
/// summed in row order.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<(Vec<Option<usize>>, f64)> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != m) {
        return Err(Error::Contract("ragged cost matrix".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Data("cost matrix has non-finite entries".into()));
    }
    let mut assignment = vec![None; n];
    if n == 0 || m == 0 {
        return Ok((assignment, 0.0));
    }
    let scale = 1.0 + cost.iter().flatten().map(|c| c.abs()).fold(0.0, f64::max) * n.max(m) as f64;
    let tol = 1e-12 * scale;
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..m).collect();
    let mut best = optimum(cost, &rows, &cols);
    let mut fixed = 0.0;
    // pairs still to place; rows beyond that count stay unassigned
    let mut remaining = n.min(m);
    for r in 0..n {
        if remaining == 0 {
            break;
        }
        rows.retain(|x| *x != r);
        let skip_ok = rows.len() >= remaining && {
            let rest = optimum(cost, &rows, &cols);
            (fixed + rest - best).abs() <= tol && rows.len() >= cols.len().min(remaining)
        };
        let mut placed = false;
        for (ci, &c) in cols.clone().iter().enumerate() {
            let mut rest_cols = cols.clone();
            rest_cols.remove(ci);
            let rest = if remaining > 1 { optimum(cost, &rows, &rest_cols) } else { 0.0 };
            if (fixed + cost[r][c] + rest - best).abs() <= tol {
                assignment[r] = Some(c);
                fixed += cost[r][c];
                cols = rest_cols;
                remaining -= 1;
                best = fixed + rest;
                placed = true;
                break;
            }
        }
        if !placed && !skip_ok {
            // numerical corner: fall back to the plain solver for the rest
            let a = munkres(&square(cost, &rows, &cols));
            for (i, &rr) in rows.iter().enumerate() {
                assignment[rr] = cols.get(a[i]).copied();
            }
            break;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r][c]))
        .sum();
    Ok((assignment, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Slot k is object k + 1, fixed by the conditioning order.
    Ordered,
    /// Whole slot tracks are matched to object tracks by minimum CoM cost.
    Hungarian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalProtocol {
    pub start_frame: usize,
    pub matching: Matching,
    /// Restrict segment centroids to pixels with a valid depth sample.
    pub sparse_centroid: bool,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            start_frame: 1,
            matching: Matching::Ordered,
            sparse_centroid: false,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.start_frame == 0 {
            return Err(Error::param("metrics start at frame 1 or later"));
        }
        Ok(())
    }
}

fn box_present(b: &[f32]) -> bool {
    b.iter().any(|v| *v != 0.0)
}

/// Centroid (row, col) of pixel centers labeled `label`, optionally
/// restricted to `valid` pixels.
fn centroid(labels: &[i32], width: usize, label: i32, valid: Option<&[bool]>) -> Option<(f64, f64)> {
    let (mut sy, mut sx, mut n) = (0.0, 0.0, 0usize);
    for (i, &l) in labels.iter().enumerate() {
        if l == label && valid.is_none_or(|v| v[i]) {
            sy += (i / width) as f64 + 0.5;
            sx += (i % width) as f64 + 0.5;
            n += 1;
        }
    }
    (n > 0).then(|| (sy / n as f64, sx / n as f64))
}

/// Distance from a point to a box center, over the frame diagonal.
pub fn normalized_center_distance(point: (f64, f64), bbox: &[f32], height: usize, width: usize) -> f64 {
    let cy = (bbox[0] as f64 + bbox[2] as f64) * 0.5 * height as f64;
    let cx = (bbox[1] as f64 + bbox[3] as f64) * 0.5 * width as f64;
    let d = (point.0 - cy).hypot(point.1 - cx) / (height as f64).hypot(width as f64);
    d.min(1.0)
}

/// Inputs shared by the mask- and box-based metrics of one video.
pub struct VideoView<'a> {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub gt_masks: &'a [i32],
    /// T×M×4 normalized boxes.
    pub gt_boxes: &'a [f32],
    pub max_objects: usize,
    /// Per-pixel depth validity, used for sparse centroids.
    pub valid_depth: Option<&'a [bool]>,
}

impl VideoView<'_> {
    pub fn of(sample: &VideoSample) -> VideoView<'_> {
        VideoView {
            frames: sample.frames,
            height: sample.height,
            width: sample.width,
            gt_masks: &sample.masks,
            gt_boxes: &sample.boxes,
            max_objects: sample.max_objects,
            valid_depth: None,
        }
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn gt_box(&self, t: usize, object: i32) -> &[f32] {
        let j = object as usize - 1;
        &self.gt_boxes[(t * self.max_objects + j) * 4..(t * self.max_objects + j + 1) * 4]
    }

    fn valid_frame(&self, t: usize) -> Option<&[bool]> {
        self.valid_depth.map(|v| &v[t * self.pixels()..(t + 1) * self.pixels()])
    }
}

/// Mean normalized distance between segment centroids and box centers over
/// (frame ≥ start, visible object) pairs.
///
/// Ordered: label `j` is scored against object `j` for `objects`, and pairs
/// with an empty segment are skipped. Hungarian: whole label tracks (labels
/// `1..=labels`) are matched to all object tracks at minimum total cost,
/// empty segments and unmatched objects cost 1. Returns the score and, for
/// Hungarian matching, the object each label was assigned to.
pub fn com_distance(
    pred: &[i32],
    view: &VideoView<'_>,
    protocol: &EvalProtocol,
    objects: &[i32],
    labels: usize,
) -> Result<(Option<f64>, BTreeMap<i32, i32>)> {
    protocol.validate()?;
    let p = view.pixels();
    if pred.len() != view.frames * p {
        return Err(Error::Contract("prediction size does not match the video".into()));
    }
    let dist = |t: usize, label: i32, object: i32| -> Option<f64> {
        let c = centroid(frame(pred, p, t), view.width, label, view.valid_frame(t))?;
        Some(normalized_center_distance(c, view.gt_box(t, object), view.height, view.width))
    };
    match protocol.matching {
        Matching::Ordered => {
            let mut ds = Vec::new();
            for t in protocol.start_frame..view.frames {
                for &j in objects {
                    if box_present(view.gt_box(t, j)) {
                        if let Some(d) = dist(t, j, j) {
                            ds.push(d);
                        }
                    }
                }
            }
            Ok((mean(&ds), BTreeMap::new()))
        }
        Matching::Hungarian => {
            let visible: Vec<Vec<usize>> = objects
                .iter()
                .map(|&j| (protocol.start_frame..view.frames).filter(|&t| box_present(view.gt_box(t, j))).collect())
                .collect();
            let count: usize = visible.iter().map(Vec::len).sum();
            if count == 0 {
                return Ok((None, BTreeMap::new()));
            }
            let cost: Vec<Vec<f64>> = (1..=labels as i32)
                .map(|l| {
                    objects
                        .iter()
                        .zip(&visible)
                        .map(|(&j, ts)| ts.iter().map(|&t| dist(t, l, j).unwrap_or(1.0)).sum())
                        .collect()
                })
                .collect();
            let (assign, _) = hungarian(&cost)?;
            let mut matched = BTreeMap::new();
            let mut total = 0.0;
            for (l, a) in assign.iter().enumerate() {
                if let Some(o) = a {
                    matched.insert(l as i32 + 1, objects[*o]);
                    total += cost[l][*o];
                }
            }
            // objects left without a label pay the maximum in every frame
            for (o, ts) in visible.iter().enumerate() {
                if !matched.values().any(|v| *v == objects[o]) {
                    total += ts.len() as f64;
                }
            }
            Ok((Some(total / count as f64), matched))
        }
    }
}

/// Fraction of (frame ≥ start, visible object) pairs whose label has a
/// non-empty mask.
pub fn bbox_recall(pred: &[i32], view: &VideoView<'_>, start: usize, objects: &[i32]) -> Option<f64> {
    let p = view.pixels();
    let (mut hit, mut n) = (0usize, 0usize);
    for t in start..view.frames {
        let f = frame(pred, p, t);
        for &j in objects {
            if box_present(view.gt_box(t, j)) {
                n += 1;
                hit += usize::from(f.contains(&j));
            }
        }
    }
    (n > 0).then(|| hit as f64 / n as f64)
}

/// IoU of two `[ymin, xmin, ymax, xmax]` boxes; inverted boxes are empty.
pub fn box_iou(a: &[f32], b: &[f32]) -> f64 {
    let area = |b: &[f32]| ((b[2] - b[0]).max(0.0) as f64) * ((b[3] - b[1]).max(0.0) as f64);
    let ih = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0) as f64;
    let iw = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0) as f64;
    let inter = ih * iw;
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Box-track mIoU: `pred_boxes` is T×L×4 in label order (label `j` at row
/// `j-1`); per object, IoU averaged over frames ≥ start where its gt box is
/// present, then averaged over objects.
pub fn bbox_miou(pred_boxes: &[f32], labels: usize, view: &VideoView<'_>, start: usize, objects: &[i32]) -> Result<Option<f64>> {
    if pred_boxes.len() != view.frames * labels * 4 {
        return Err(Error::Contract("box tracks do not match the video".into()));
    }
    let mut per_object = Vec::new();
    for &j in objects {
        if j as usize > labels {
            continue;
        }
        let mut ious = Vec::new();
        for t in start..view.frames {
            let g = view.gt_box(t, j);
            if box_present(g) {
                let at = (t * labels + j as usize - 1) * 4;
                ious.push(box_iou(&pred_boxes[at..at + 4], g));
            }
        }
        if !ious.is_empty() {
            per_object.push(ious.iter().sum::<f64>() / ious.len() as f64);
        }
    }
    Ok(mean(&per_object))
}

/// Visualization filter: labels whose mean per-frame area exceeds
/// `max_avg_pixels` are set to background.
pub fn mask_threshold_filter(labels: &[i32], frames: usize, max_avg_pixels: f64) -> Result<Vec<i32>> {
    if !(max_avg_pixels > 0.0) {
        return Err(Error::param("mask filter threshold must be positive"));
    }
    let mut area: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels {
        *area.entry(l).or_default() += 1;
    }
    let frames = frames.max(1) as f64;
    Ok(labels
        .iter()
        .map(|&l| if area[&l] as f64 / frames > max_avg_pixels { 0 } else { l })
        .collect())
}

/// The 1300-pixel filter at 128×192, rescaled to `height × width`.
pub fn scaled_mask_threshold(height: usize, width: usize) -> f64 {
    1300.0 * (height * width) as f64 / (128.0 * 192.0)
}

/// What a method predicts for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrediction {
    /// T×H×W labels, `slot + 1` per pixel (0 = no segment).
    pub masks: Vec<i32>,
    /// Number of distinct predicted labels (slots).
    pub labels: usize,
    /// Optional T×labels×4 box tracks in label order.
    pub boxes: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub video: String,
    pub fg_ari: Option<f64>,
    pub miou: Option<f64>,
    pub com: Option<f64>,
    pub b_recall: Option<f64>,
    pub b_miou: Option<f64>,
    /// Objects not scored by the ordered metrics (not visible in frame 0).
    pub excluded_objects: usize,
}

/// Scores one video. Under Hungarian matching labels are first renamed to
/// their matched objects, and every object visible after the start frame is
/// scored.
pub fn evaluate_video(name: &str, pred: &VideoPrediction, view: &VideoView<'_>, protocol: &EvalProtocol) -> Result<VideoMetrics> {
    protocol.validate()?;
    let p = view.pixels();
    let start = protocol.start_frame;
    let present: Vec<i32> = (1..=view.max_objects as i32)
        .filter(|&j| (start..view.frames).any(|t| box_present(view.gt_box(t, j))))
        .collect();
    let first: Vec<i32> = (1..=view.max_objects as i32)
        .filter(|&j| view.frames > 0 && box_present(view.gt_box(0, j)))
        .collect();
    let (objects, excluded) = match protocol.matching {
        Matching::Ordered => {
            let o: Vec<i32> = present.iter().copied().filter(|j| first.contains(j)).collect();
            let ex = present.len() - o.len();
            (o, ex)
        }
        Matching::Hungarian => (present.clone(), 0),
    };
    let (com, matched) = com_distance(&pred.masks, view, protocol, &objects, pred.labels)?;
    let (masks, boxes) = match protocol.matching {
        Matching::Ordered => (pred.masks.clone(), pred.boxes.clone()),
        Matching::Hungarian => {
            let masks = pred.masks.iter().map(|l| matched.get(l).copied().unwrap_or(0)).collect();
            let boxes = pred.boxes.as_ref().map(|b| {
                let mut out = vec![0.0f32; view.frames * view.max_objects * 4];
                for t in 0..view.frames {
                    for (&l, &o) in &matched {
                        let src = (t * pred.labels + l as usize - 1) * 4;
                        let dst = (t * view.max_objects + o as usize - 1) * 4;
                        out[dst..dst + 4].copy_from_slice(&b[src..src + 4]);
                    }
                }
                out
            });
            (masks, boxes)
        }
    };
    let box_labels = match protocol.matching {
        Matching::Ordered => pred.labels,
        Matching::Hungarian => view.max_objects,
    };
    Ok(VideoMetrics {
        video: name.to_string(),
        fg_ari: fg_ari(&pred.masks, view.gt_masks, p, start)?,
        miou: video_miou_ordered(&masks, view.gt_masks, view.frames, p, start, &objects)?,
        com,
        b_recall: bbox_recall(&masks, view, start, &objects),
        b_miou: match &boxes {
            Some(b) => bbox_miou(b, box_labels, view, start, &objects)?,
            None => None,
        },
        excluded_objects: excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub protocol: EvalProtocol,
    pub videos: Vec<VideoMetrics>,
    pub fg_ari: Option<f64>,
    pub miou: Option<f64>,
    pub com: Option<f64>,
    pub b_recall: Option<f64>,
    pub b_miou: Option<f64>,
    pub excluded_objects: usize,
}

impl MetricReport {
    /// Aggregates by averaging each metric over the videos that define it.
    pub fn new(method: &str, protocol: EvalProtocol, videos: Vec<VideoMetrics>) -> Self {
        let agg = |f: fn(&VideoMetrics) -> Option<f64>| {
            let v: Vec<f64> = videos.iter().filter_map(f).collect();
            mean(&v)
        };
        MetricReport {
            method: method.to_string(),
            protocol,
            fg_ari: agg(|v| v.fg_ari),
            miou: agg(|v| v.miou),
            com: agg(|v| v.com),
            b_recall: agg(|v| v.b_recall),
            b_miou: agg(|v| v.b_miou),
            excluded_objects: videos.iter().map(|v| v.excluded_objects).sum(),
            videos,
        }
    }

    /// One row per video plus a final `mean` row; absent values are empty.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::from("video,fg_ari,miou,com,b_recall,b_miou,excluded_objects\n");
        for v in &self.videos {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                v.video,
                cell(v.fg_ari),
                cell(v.miou),
                cell(v.com),
                cell(v.b_recall),
                cell(v.b_miou),
                v.excluded_objects
            );
        }
        let _ = writeln!(
            s,
            "mean,{},{},{},{},{},{}",
            cell(self.fg_ari),
            cell(self.miou),
            cell(self.com),
            cell(self.b_recall),
            cell(self.b_miou),
            self.excluded_objects
        );
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_worked_example() {
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1], false).unwrap().unwrap();
        assert!(ari.abs() < 1e-15);
        assert_eq!(adjusted_rand_index(&[3, 3, 5], &[1, 1, 2], false).unwrap(), Some(1.0));
        // both partitions trivial
        assert_eq!(adjusted_rand_index(&[0, 0], &[1, 1], false).unwrap(), Some(1.0));
        assert_eq!(adjusted_rand_index(&[0, 0], &[0, 0], true).unwrap(), None);
    }

    #[test]
    fn hungarian_examples() {
        let (a, t) = hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(a, vec![Some(0), Some(1)]);
        assert_eq!(t, 2.0);
        let (a, t) = hungarian(&[vec![0.0, 5.0, 5.0], vec![5.0, 0.0, 5.0], vec![5.0, 5.0, 0.0]]).unwrap();
        assert_eq!((a, t), (vec![Some(0), Some(1), Some(2)], 0.0));
        // all ties: lexicographically first assignment
        let (a, _) = hungarian(&vec![vec![1.0; 3]; 3]).unwrap();
        assert_eq!(a, vec![Some(0), Some(1), Some(2)]);
        let (a, t) = hungarian(&[vec![3.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!((a, t), (vec![None, Some(0), None], 1.0));
    }

    #[test]
    fn box_iou_examples() {
        assert_eq!(box_iou(&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0, 1.0, 1.0]), 1.0);
        assert!((box_iou(&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.5, 1.0, 1.5]) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(box_iou(&[0.0, 0.0, 0.2, 0.2], &[0.5, 0.5, 0.7, 0.7]), 0.0);
    }

    #[test]
    fn corner_distance_is_nearly_one() {
        let d = normalized_center_distance((0.0, 0.0), &[0.99, 0.99, 0.99, 0.99], 100, 100);
        assert!((d - 0.99).abs() < 1e-6);
    }

    #[test]
    fn filter_threshold() {
        let labels: Vec<i32> = [vec![1; 1301], vec![2; 100]].concat();
        let out = mask_threshold_filter(&labels, 1, 1300.0).unwrap();
        assert!(out[..1301].iter().all(|l| *l == 0));
        assert!(out[1301..].iter().all(|l| *l == 2));
        assert_eq!(mask_threshold_filter(&labels, 1, f64::INFINITY).unwrap(), labels);
        assert!((scaled_mask_threshold(128, 192) - 1300.0).abs() < 1e-12);
    }
}
