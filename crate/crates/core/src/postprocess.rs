//! Turning per-snippet predictions into scored detections, and SoftNMS.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apa::LocalizationOutput;
use crate::backbone::FeatureSequence;
use crate::error::{ensure_dim, PdaError, Result};
use crate::graph::softmax_rows;
use crate::metrics::{tiou_unchecked, Interval};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub start: f64,
    pub end: f64,
    pub class_name: String,
    pub score: f64,
}

impl Detection {
    pub fn interval(&self) -> Interval {
        Interval::new(self.start, self.end)
    }
}

/// How snippet indices map to seconds for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTiming {
    pub video_id: String,
    pub snippet_stride: u32,
    pub frame_rate: f64,
    pub duration: f64,
}

impl VideoTiming {
    pub fn new(seq: &FeatureSequence, frame_rate: f64, duration: f64) -> Result<Self> {
        if !(frame_rate > 0.0) || !(duration > 0.0) {
            return Err(PdaError::Data(format!(
                "video {}: frame rate and duration must be positive",
                seq.video_id
            )));
        }
        Ok(Self {
            video_id: seq.video_id.clone(),
            snippet_stride: seq.snippet_stride,
            frame_rate,
            duration,
        })
    }

    /// Seconds per snippet.
    pub fn seconds_per_snippet(&self) -> f64 {
        self.snippet_stride as f64 / self.frame_rate
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub top_k: usize,
    pub score_floor: f64,
    pub sigma: f64,
    pub prune: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            top_k: 200,
            score_floor: 1e-3,
            sigma: 0.5,
            prune: 1e-3,
        }
    }
}

/// Scores every (timestep, class) pair as class softmax times foreground
/// probability, keeps those at or above `score_floor`, and returns the
/// `top_k` best. Intervals are clamped to the video and dropped if they
/// collapse.
pub fn assemble_proposals(
    scores: &Array2<f64>,
    loc: &LocalizationOutput,
    timing: &VideoTiming,
    vocab: &[String],
    top_k: usize,
    score_floor: f64,
) -> Result<Vec<Detection>> {
    if top_k == 0 {
        return Err(PdaError::InvalidArgument("top_k must be at least 1".into()));
    }
    ensure_dim("proposal score rows", loc.len(), scores.nrows())?;
    ensure_dim("proposal vocabulary", vocab.len(), scores.ncols())?;
    let probs = softmax_rows(scores);
    let sps = timing.seconds_per_snippet();
    let mut out = Vec::new();
    for t in 0..scores.nrows() {
        let (s, e) = loc.interval(t);
        let start = (s * sps).clamp(0.0, timing.duration);
        let end = (e * sps).clamp(0.0, timing.duration);
        if !(start < end) {
            continue;
        }
        for (c, class) in vocab.iter().enumerate() {
            let score = probs[[t, c]] * loc.fg_prob[t];
            if score >= score_floor {
                out.push(Detection {
                    video_id: timing.video_id.clone(),
                    start,
                    end,
                    class_name: class.clone(),
                    score,
                });
            }
        }
    }
    crate::metrics::sort_detections(&mut out);
    out.truncate(top_k);
    Ok(out)
}

/// Gaussian SoftNMS within one group of detections.
pub fn soft_nms(dets: &[Detection], sigma: f64, prune: f64) -> Result<Vec<Detection>> {
    if !(sigma > 0.0) {
        return Err(PdaError::InvalidArgument("SoftNMS sigma must be positive".into()));
    }
    let mut pool: Vec<Detection> = dets.to_vec();
    let mut kept = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let best = pool
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.score
                    .total_cmp(&b.score)
                    .then(b.start.total_cmp(&a.start))
                    .then_with(|| b.video_id.cmp(&a.video_id))
            })
            .map(|(i, _)| i)
            .expect("pool is non-empty");
        let top = pool.swap_remove(best);
        let top_iv = top.interval();
        pool.retain_mut(|d| {
            let iou = tiou_unchecked(top_iv, d.interval());
            d.score *= (-(iou * iou) / sigma).exp();
            d.score >= prune
        });
        kept.push(top);
    }
    crate::metrics::sort_detections(&mut kept);
    Ok(kept)
}

/// SoftNMS applied independently to every (video, class) group.
pub fn soft_nms_classwise(dets: &[Detection], sigma: f64, prune: f64) -> Result<Vec<Detection>> {
    let mut groups: BTreeMap<(&str, &str), Vec<Detection>> = BTreeMap::new();
    for d in dets {
        groups
            .entry((d.video_id.as_str(), d.class_name.as_str()))
            .or_default()
            .push(d.clone());
    }
    let groups: Vec<Vec<Detection>> = groups.into_values().collect();
    let suppressed: Vec<Vec<Detection>> = groups
        .par_iter()
        .map(|g| soft_nms(g, sigma, prune))
        .collect::<Result<_>>()?;
    let mut out: Vec<Detection> = suppressed.into_iter().flatten().collect();
    crate::metrics::sort_detections(&mut out);
    Ok(out)
}

#[derive(Deserialize)]
struct DetectionRecord {
    video_id: String,
    t_start: f64,
    t_end: f64,
    label: String,
    score: f64,
}

/// One JSON object per line, floats written with six decimals.
pub fn to_json_lines(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let quote = |x: &str| serde_json::to_string(x).expect("strings serialize");
        let _ = writeln!(
            s,
            "{{\"video_id\":{},\"t_start\":{:.6},\"t_end\":{:.6},\"label\":{},\"score\":{:.6}}}",
            quote(&d.video_id),
            d.start,
            d.end,
            quote(&d.class_name),
            d.score
        );
    }
    s
}

pub fn from_json_lines(text: &str) -> Result<Vec<Detection>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let r: DetectionRecord =
                serde_json::from_str(line).map_err(|e| PdaError::Format(format!("detection line {}: {e}", i + 1)))?;
            Ok(Detection {
                video_id: r.video_id,
                start: r.t_start,
                end: r.t_end,
                class_name: r.label,
                score: r.score,
            })
        })
        .collect()
}
