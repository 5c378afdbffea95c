//! Training losses: classification cross-entropy, foreground BCE, and 1-D
//! DIoU localization, summed into the total objective.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::apa::LocalizationOutput;
use crate::error::{ensure_dim, PdaError, Result};
use crate::graph::{diou_parts, Graph, PROB_CLAMP};
use crate::metrics::Interval;
use crate::params::ParamStore;

/// Per-timestep supervision for one video, in snippet units.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisionTargets {
    /// Class index for foreground timesteps, `None` on background.
    pub class_target: Vec<Option<usize>>,
    pub n_classes: usize,
    pub fg_target: Vec<f64>,
    /// Assigned ground-truth segment for foreground timesteps.
    pub gt_interval: Vec<Option<(f64, f64)>>,
}

/// A ground-truth segment in snippet units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnippetSegment {
    pub start: f64,
    pub end: f64,
    pub class: usize,
}

impl SupervisionTargets {
    /// Timestep `t` is foreground when some segment has `start <= t <= end`.
    /// Overlaps go to the shortest covering segment (earliest on equal length).
    pub fn from_segments(t_len: usize, segments: &[SnippetSegment], n_classes: usize) -> Result<Self> {
        for s in segments {
            if !(s.start < s.end) || !s.start.is_finite() || !s.end.is_finite() {
                return Err(PdaError::Data(format!("degenerate segment [{}, {}]", s.start, s.end)));
            }
            if s.class >= n_classes {
                return Err(PdaError::Data(format!(
                    "class index {} outside vocabulary of {n_classes}",
                    s.class
                )));
            }
        }
        let mut class_target = vec![None; t_len];
        let mut fg_target = vec![0.0; t_len];
        let mut gt_interval = vec![None; t_len];
        for t in 0..t_len {
            let tf = t as f64;
            let best = segments
                .iter()
                .filter(|s| s.start <= tf && tf <= s.end)
                .min_by(|a, b| (a.end - a.start).total_cmp(&(b.end - b.start)));
            if let Some(s) = best {
                class_target[t] = Some(s.class);
                fg_target[t] = 1.0;
                gt_interval[t] = Some((s.start, s.end));
            }
        }
        Ok(Self {
            class_target,
            n_classes,
            fg_target,
            gt_interval,
        })
    }

    pub fn len(&self) -> usize {
        self.fg_target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fg_target.is_empty()
    }

    pub fn foreground_count(&self) -> usize {
        self.class_target.iter().filter(|c| c.is_some()).count()
    }

    /// T×C one-hot matrix with zero rows on background.
    pub fn class_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.len(), self.n_classes));
        for (t, c) in self.class_target.iter().enumerate() {
            if let Some(c) = c {
                m[[t, *c]] = 1.0;
            }
        }
        m
    }
}

/// Mean cross-entropy over foreground timesteps; zero without foreground.
pub fn classification_loss(logits: &Array2<f64>, targets: &SupervisionTargets) -> Result<f64> {
    ensure_dim("classification loss timesteps", targets.len(), logits.nrows())?;
    ensure_dim("classification loss classes", targets.n_classes, logits.ncols())?;
    if logits.iter().any(|v| v.is_nan()) {
        return Err(PdaError::NonFinite {
            context: "classification logits".into(),
        });
    }
    let store = ParamStore::default();
    let mut g = Graph::new(&store);
    let l = g.constant(logits.clone());
    let loss = g.cross_entropy(l, targets.class_target.clone());
    Ok(g.scalar(loss))
}

/// Mean binary cross-entropy over all timesteps, probabilities clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn foreground_loss(fg_prob: &[f64], fg_target: &[f64]) -> Result<f64> {
    ensure_dim("foreground loss length", fg_target.len(), fg_prob.len())?;
    if fg_prob.iter().any(|p| p.is_nan()) {
        return Err(PdaError::NonFinite {
            context: "foreground probabilities".into(),
        });
    }
    let n = fg_prob.len().max(1) as f64;
    Ok(fg_prob
        .iter()
        .zip(fg_target)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n)
}

/// `1 - IoU + (center distance / enclosing span)^2`.
pub fn diou_1d(pred: Interval, gt: Interval) -> Result<f64> {
    pred.validate()?;
    gt.validate()?;
    Ok(diou_parts(pred.start, pred.end, gt.start, gt.end).loss)
}

/// Mean DIoU of `[t - d_start, t + d_end]` against each foreground
/// timestep's assigned segment; zero without foreground.
pub fn localization_loss(loc: &LocalizationOutput, targets: &SupervisionTargets) -> Result<f64> {
    ensure_dim("localization loss length", targets.len(), loc.len())?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, gt) in targets.gt_interval.iter().enumerate() {
        if let Some((gs, ge)) = *gt {
            let (ps, pe) = loc.interval(t);
            total += diou_1d(Interval::new(ps, pe), Interval::new(gs, ge))?;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Per-component multipliers; the objective is the plain sum by default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub classification: f64,
    pub foreground: f64,
    pub localization: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            classification: 1.0,
            foreground: 1.0,
            localization: 1.0,
        }
    }
}

pub fn total_loss(l_cls: f64, l_fg: f64, l_loc: f64) -> Result<f64> {
    weighted_total_loss(l_cls, l_fg, l_loc, LossWeights::default())
}

pub fn weighted_total_loss(l_cls: f64, l_fg: f64, l_loc: f64, w: LossWeights) -> Result<f64> {
    for (name, v) in [("classification", l_cls), ("foreground", l_fg), ("localization", l_loc)] {
        if !v.is_finite() {
            return Err(PdaError::NonFinite {
                context: format!("{name} loss"),
            });
        }
        if v < 0.0 {
            return Err(PdaError::InvalidArgument(format!("{name} loss is negative: {v}")));
        }
    }
    Ok(w.classification * l_cls + w.foreground * l_fg + w.localization * l_loc)
}
