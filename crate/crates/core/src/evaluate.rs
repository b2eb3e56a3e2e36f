//! Turning a trained model into per-video label maps and box tracks, and
//! scoring them.

use rayon::prelude::*;

use crate::metrics::{evaluate_video, EvalProtocol, MetricReport, VideoPrediction, VideoView};
use crate::model::{hard_masks, Forward, InitMode, ModelConfig, ParamSet, SlotInit, Variant};
use crate::scenegen::VideoSample;
use crate::train::slot_boxes;
use crate::{Error, Result};

/// Filled rectangles for L×4 normalized boxes; box `j` paints label `j + 1`
/// and later boxes overwrite earlier ones. A pixel belongs to a box when its
/// center lies inside it.
pub fn rasterize_boxes(boxes: &[f32], height: usize, width: usize) -> Vec<i32> {
    let mut out = vec![0; height * width];
    for (j, b) in boxes.chunks_exact(4).enumerate() {
        let rows = (0..height).filter(|r| {
            let y = (*r as f64 + 0.5) / height as f64;
            y >= b[0] as f64 && y < b[2] as f64
        });
        for r in rows {
            for c in 0..width {
                let x = (c as f64 + 0.5) / width as f64;
                if x >= b[1] as f64 && x < b[3] as f64 {
                    out[r * width + c] = j as i32 + 1;
                }
            }
        }
    }
    out
}

/// Unrolls the model over every frame of `sample`. Decoding models label
/// each pixel with its argmax slot; box-only models label pixels by
/// rasterizing their box readout.
pub fn predict_video(config: &ModelConfig, params: &ParamSet<f32>, sample: &VideoSample) -> Result<VideoPrediction> {
    Ok(predict_with_targets(config, params, sample)?.0)
}

/// As [`predict_video`], also returning the composited T×HW×C target
/// prediction of decoding models.
pub fn predict_with_targets(
    config: &ModelConfig,
    params: &ParamSet<f32>,
    sample: &VideoSample,
) -> Result<(VideoPrediction, Option<Vec<f32>>)> {
    if sample.height != config.height || sample.width != config.width {
        return Err(Error::param(format!(
            "video is {}×{} but the model expects {}×{}",
            sample.height, sample.width, config.height, config.width
        )));
    }
    let k = config.slots;
    let mut f = Forward::new(config, params);
    let init = match config.init {
        InitMode::Conditional => SlotInit::Boxes(slot_boxes(sample, k)?.0),
        InitMode::Learned => SlotInit::Learned,
    };
    let (alphas, preds, boxes) = match config.variant {
        Variant::Propagation => {
            let SlotInit::Boxes(b) = &init else {
                return Err(Error::param("box propagation needs conditional initialization"));
            };
            (Vec::new(), Vec::new(), f.propagate(b, sample.frames)?)
        }
        Variant::Full | Variant::Supervised => {
            let frames: Vec<&[f32]> = (0..sample.frames).map(|t| sample.rgb_frame(t)).collect();
            let outs = f.unroll(&frames, &init)?;
            (
                outs.iter().filter_map(|o| o.alpha).collect(),
                outs.iter().filter_map(|o| o.prediction).collect::<Vec<_>>(),
                outs.iter().map(|o| o.boxes).collect(),
            )
        }
    };
    let targets = (!preds.is_empty()).then(|| preds.iter().flat_map(|p| f.g.value(*p).data().to_vec()).collect());
    let boxes: Vec<f32> = boxes.iter().flat_map(|b| f.g.value(*b).data().to_vec()).collect();
    let masks = if alphas.is_empty() {
        boxes.chunks(k * 4).flat_map(|b| rasterize_boxes(b, sample.height, sample.width)).collect()
    } else {
        alphas
            .iter()
            .flat_map(|a| hard_masks(f.g.value(*a)).into_iter().map(|s| s as i32 + 1))
            .collect()
    };
    let prediction = VideoPrediction {
        masks,
        labels: k,
        boxes: Some(boxes),
    };
    Ok((prediction, targets))
}

/// Scores `predictions[i]` against `samples[i]`, named `names[i]`.
pub fn score(method: &str, names: &[String], predictions: &[VideoPrediction], samples: &[VideoSample], protocol: &EvalProtocol) -> Result<MetricReport> {
    if names.len() != samples.len() || predictions.len() != samples.len() {
        return Err(Error::Contract("names, predictions and samples differ in count".into()));
    }
    let videos = (0..samples.len())
        .into_par_iter()
        .map(|i| evaluate_video(&names[i], &predictions[i], &VideoView::of(&samples[i]), protocol))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::new(method, *protocol, videos))
}

/// Predicts and scores every sample with the model.
pub fn evaluate_model(
    config: &ModelConfig,
    params: &ParamSet<f32>,
    names: &[String],
    samples: &[VideoSample],
    protocol: &EvalProtocol,
) -> Result<(Vec<VideoPrediction>, MetricReport)> {
    let predictions = samples
        .par_iter()
        .map(|s| predict_video(config, params, s))
        .collect::<Result<Vec<_>>>()?;
    let report = score("model", names, &predictions, samples, protocol)?;
    Ok((predictions, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rasterize_later_box_wins() {
        let r = rasterize_boxes(&[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0], 4, 4);
        assert!(r.iter().all(|l| *l == 2));
        assert!(rasterize_boxes(&[0.0; 4], 4, 4).iter().all(|l| *l == 0));
        let r = rasterize_boxes(&[0.25, 0.5, 0.75, 1.0], 4, 4);
        let expect: Vec<i32> = (0..16).map(|i| i32::from((1..3).contains(&(i / 4)) && i % 4 >= 2)).collect();
        assert_eq!(r, expect);
    }
}
