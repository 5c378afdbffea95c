//! Temporal IoU, per-class average precision, and mAP over tIoU thresholds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{PdaError, Result};
use crate::postprocess::Detection;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start < self.end) || !self.start.is_finite() || !self.end.is_finite() {
            return Err(PdaError::InvalidArgument(format!(
                "degenerate interval [{}, {}]",
                self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// Intersection over union of two intervals; 0 when disjoint.
pub fn tiou(a: Interval, b: Interval) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(tiou_unchecked(a, b))
}

pub(crate) fn tiou_unchecked(a: Interval, b: Interval) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.len() + b.len() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One annotated action instance, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub video_id: String,
    pub start: f64,
    pub end: f64,
    pub label: String,
}

impl GroundTruth {
    pub fn interval(&self) -> Interval {
        Interval::new(self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
}

impl EvalConfig {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        let cfg = Self { thresholds };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 0.3 to 0.7 in steps of 0.1.
    pub fn thumos() -> Self {
        Self {
            thresholds: (3..=7).map(|i| i as f64 / 10.0).collect(),
        }
    }

    /// 0.5 to 0.95 in steps of 0.05.
    pub fn activitynet() -> Self {
        Self {
            thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(PdaError::Config("at least one tIoU threshold is required".into()));
        }
        if self.thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(PdaError::Config("tIoU thresholds must lie in (0, 1)".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PdaError::Config("tIoU thresholds must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Descending score; ties by earlier start, then video id.
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.start.total_cmp(&b.start))
            .then_with(|| a.video_id.cmp(&b.video_id))
    });
}

/// True-positive flags in ranked order, after greedy matching.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], threshold: f64) -> Vec<bool> {
    let mut ranked: Vec<Detection> = dets.to_vec();
    sort_detections(&mut ranked);
    let mut used = vec![false; gts.len()];
    ranked
        .iter()
        .map(|d| {
            let di = Interval::new(d.start, d.end);
            let mut best: Option<(usize, f64)> = None;
            for (j, gt) in gts.iter().enumerate() {
                if used[j] || gt.video_id != d.video_id || gt.label != d.class_name {
                    continue;
                }
                let iou = tiou_unchecked(di, gt.interval());
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the all-point interpolated precision-recall curve.
///
/// `dets` and `gts` are expected to hold a single class; a detection can only
/// match a ground truth with the same video and label. Returns 0 when there
/// is no ground truth.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], threshold: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let tp = match_detections(dets, gts, threshold);
    let npos = gts.len() as f64;
    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0.0;
    for (i, &hit) in tp.iter().enumerate() {
        if hit {
            hits += 1.0;
        }
        recall.push(hits / npos);
        precision.push(hits / (i + 1) as f64);
    }
    // precision envelope, right to left
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub thresholds: Vec<f64>,
    /// mAP per threshold, same order as `thresholds`.
    pub map: Vec<f64>,
    /// Mean over thresholds.
    pub average: f64,
    /// Per-class AP per threshold, for classes with ground truth.
    pub per_class: BTreeMap<String, Vec<f64>>,
}

/// Per-threshold mean of per-class AP over classes with ground truth.
pub fn mean_ap(dets: &[Detection], gts: &[GroundTruth], cfg: &EvalConfig) -> Result<MapResult> {
    cfg.validate()?;
    if gts.is_empty() {
        return Err(PdaError::Data(
            "evaluation needs at least one ground-truth segment".into(),
        ));
    }
    let classes: BTreeSet<&str> = gts.iter().map(|g| g.label.as_str()).collect();
    let mut per_class = BTreeMap::new();
    for class in &classes {
        let cd: Vec<Detection> = dets.iter().filter(|d| d.class_name == *class).cloned().collect();
        let cg: Vec<GroundTruth> = gts.iter().filter(|g| g.label == *class).cloned().collect();
        let aps = cfg
            .thresholds
            .iter()
            .map(|&t| average_precision(&cd, &cg, t))
            .collect::<Vec<_>>();
        per_class.insert(class.to_string(), aps);
    }
    let n = classes.len() as f64;
    let map: Vec<f64> = (0..cfg.thresholds.len())
        .map(|i| per_class.values().map(|aps: &Vec<f64>| aps[i]).sum::<f64>() / n)
        .collect();
    let average = map.iter().sum::<f64>() / map.len() as f64;
    Ok(MapResult {
        thresholds: cfg.thresholds.clone(),
        map,
        average,
        per_class,
    })
}

impl MapResult {
    /// `threshold,map` rows plus a final `avg` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,map\n");
        for (t, m) in self.thresholds.iter().zip(&self.map) {
            let _ = writeln!(s, "{t:.2},{m:.6}");
        }
        let _ = writeln!(s, "avg,{:.6}", self.average);
        s
    }

    pub fn per_class_csv(&self) -> String {
        let mut s = String::from("class");
        for t in &self.thresholds {
            let _ = write!(s, ",ap@{t:.2}");
        }
        s.push('\n');
        for (class, aps) in &self.per_class {
            s.push_str(class);
            for ap in aps {
                let _ = write!(s, ",{ap:.6}");
            }
            s.push('\n');
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}
