//! Fully resolved parameter records, one per subcommand. A run writes its
//! record as `resolved_config.json`; `slotvid rerun` executes one again.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slotvid_core::baselines::KMeansConfig;
use slotvid_core::metrics::EvalProtocol;
use slotvid_core::model::{InitMode, ModelConfig, Variant};
use slotvid_core::scenegen::{DatasetConfig, Split};
use slotvid_core::targets::TargetSelection;
use slotvid_core::train::TrainConfig;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Generate(GenerateRun),
    Train(TrainRun),
    Eval(EvalRun),
    Baseline(BaselineRun),
    Visualize(VisualizeRun),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRun {
    pub out: PathBuf,
    pub dataset: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    pub data: PathBuf,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub resume: Option<PathBuf>,
}

/// The trained model an evaluation or visualization reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    pub checkpoint: PathBuf,
    pub model: ModelConfig,
    pub targets: TargetSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRun {
    pub data: PathBuf,
    pub out: PathBuf,
    pub source: ModelSource,
    pub split: Split,
    /// Leading frames of each video that are unrolled and scored.
    pub eval_frames: usize,
    pub protocol: EvalProtocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum BaselineMethod {
    BboxCopy,
    Kmeans(KMeansConfig),
}

impl BaselineMethod {
    pub fn label(&self) -> String {
        match self {
            BaselineMethod::BboxCopy => "bbox_copy".into(),
            BaselineMethod::Kmeans(k) => format!("kmeans({})", serde_json::to_value(k.features).unwrap().as_str().unwrap_or("?")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineRun {
    pub data: PathBuf,
    pub out: PathBuf,
    pub method: BaselineMethod,
    pub split: Split,
    pub eval_frames: usize,
    pub protocol: EvalProtocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualizeRun {
    pub data: PathBuf,
    pub out: PathBuf,
    pub videos: Vec<String>,
    pub frames: usize,
    /// Drop predicted segments larger than the scaled 1300-pixel threshold.
    pub filter: bool,
    pub source: Option<ModelSource>,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn check_frames(frames: usize, protocol: &EvalProtocol) -> Result<(), String> {
    protocol.validate().map_err(|e| e.to_string())?;
    check(frames > protocol.start_frame, || {
        format!("evaluating {frames} frames leaves nothing after start frame {}", protocol.start_frame)
    })
}

impl RunConfig {
    pub fn out(&self) -> &Path {
        match self {
            RunConfig::Generate(r) => &r.out,
            RunConfig::Train(r) => &r.out,
            RunConfig::Eval(r) => &r.out,
            RunConfig::Baseline(r) => &r.out,
            RunConfig::Visualize(r) => &r.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            RunConfig::Generate(r) => r.out = out,
            RunConfig::Train(r) => r.out = out,
            RunConfig::Eval(r) => r.out = out,
            RunConfig::Baseline(r) => r.out = out,
            RunConfig::Visualize(r) => r.out = out,
        }
    }

    /// Parameter checks that need no file access.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            RunConfig::Generate(r) => r.dataset.validate().map_err(|e| e.to_string()),
            RunConfig::Train(r) => {
                r.model.validate().map_err(|e| e.to_string())?;
                r.train.validate().map_err(|e| e.to_string())?;
                check(r.model.init == InitMode::Conditional || r.model.variant == Variant::Full, || {
                    "box-only variants need conditional initialization".into()
                })?;
                if r.model.variant == Variant::Full {
                    check(r.model.target_channels == r.train.targets.channels(), || {
                        format!(
                            "model predicts {} channels but targets {} have {}",
                            r.model.target_channels,
                            r.train.targets,
                            r.train.targets.channels()
                        )
                    })?;
                }
                Ok(())
            }
            RunConfig::Eval(r) => {
                r.source.model.validate().map_err(|e| e.to_string())?;
                check_frames(r.eval_frames, &r.protocol)
            }
            RunConfig::Baseline(r) => {
                if let BaselineMethod::Kmeans(k) = &r.method {
                    check(k.max_iters > 0, || "k-means needs at least one iteration".into())?;
                }
                check_frames(r.eval_frames, &r.protocol)
            }
            RunConfig::Visualize(r) => {
                check(!r.videos.is_empty(), || "no video selected".into())?;
                check(r.frames > 0, || "frames must be positive".into())?;
                if let Some(s) = &r.source {
                    s.model.validate().map_err(|e| e.to_string())?;
                }
                Ok(())
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}
