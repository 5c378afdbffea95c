//! Text-infused foreground filtering.
//!
//! Each phase scores every timestep by its best class similarity, normalizes
//! the scores over time, thresholds them at their mean, and zeroes the
//! feature rows that fall below.

use ndarray::{Array2, Axis};

use crate::error::{ensure_dim, PdaError, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::semantics::{temporal_phases_for, Phase, PhaseEmbeddingBank};

/// Softmax-over-time foreground confidence for one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct ForegroundScore {
    pub phase: Phase,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForegroundMask {
    pub phase: Phase,
    pub mask: Vec<bool>,
}

impl ForegroundMask {
    pub fn all_ones(phase: Phase, t: usize) -> Self {
        Self {
            phase,
            mask: vec![true; t],
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Graph form of the score: returns a 1×T row.
pub fn foreground_score_var(g: &mut Graph, fv: Var, bank: Var) -> Result<Var> {
    let (_, d) = g.shape(fv);
    let (c, db) = g.shape(bank);
    if c == 0 {
        return Err(PdaError::InvalidArgument(
            "foreground scoring needs at least one class".into(),
        ));
    }
    ensure_dim("foreground score bank width", d, db)?;
    let sim = g.matmul_t(fv, bank);
    let raw = g.row_max(sim);
    let raw = g.transpose(raw);
    Ok(g.softmax_rows(raw))
}

pub fn foreground_score(fv: &Array2<f64>, bank: &PhaseEmbeddingBank) -> Result<ForegroundScore> {
    foreground_score_matrix(fv, &bank.embeddings, bank.phase)
}

pub fn foreground_score_matrix(fv: &Array2<f64>, bank: &Array2<f64>, phase: Phase) -> Result<ForegroundScore> {
    let store = ParamStore::default();
    let mut g = Graph::new(&store);
    let f = g.constant(fv.clone());
    let b = g.constant(bank.clone());
    let s = foreground_score_var(&mut g, f, b)?;
    Ok(ForegroundScore {
        phase,
        scores: g.value(s).iter().copied().collect(),
    })
}

/// Keeps timesteps whose score is at least the mean score (1/T for a
/// softmax). Differences within rounding of the mean count as ties, and ties
/// are kept.
pub fn binarize(s: &ForegroundScore) -> ForegroundMask {
    let n = s.scores.len().max(1) as f64;
    let mean = s.scores.iter().sum::<f64>() / n;
    let tol = 1e-12 * mean.abs();
    ForegroundMask {
        phase: s.phase,
        mask: s.scores.iter().map(|&v| v >= mean - tol).collect(),
    }
}

/// Zeroes the rows of `fv` where the mask is off.
pub fn apply_mask(fv: &Array2<f64>, m: &ForegroundMask) -> Result<Array2<f64>> {
    ensure_dim("mask length", fv.nrows(), m.len())?;
    let mut out = fv.clone();
    for (mut row, &keep) in out.axis_iter_mut(Axis(0)).zip(&m.mask) {
        if !keep {
            row.fill(0.0);
        }
    }
    Ok(out)
}

/// Fixed-segment baseline: temporal phase `k` of `n_temporal` covers the
/// k-th contiguous block of `t` snippets, with the `t % n` leftover snippets
/// going one each to the earliest blocks. The global phase covers everything.
pub fn static_mask(t: usize, phase: Phase, n_temporal: usize) -> Result<ForegroundMask> {
    if phase == Phase::Global {
        return Ok(ForegroundMask::all_ones(phase, t));
    }
    let k = match n_temporal {
        1 => 0,
        n => temporal_phases_for(n)?
            .iter()
            .position(|&p| p == phase)
            .ok_or_else(|| PdaError::InvalidArgument(format!("{phase} is not one of {n} temporal phases")))?,
    };
    if t < n_temporal {
        return Err(PdaError::InvalidArgument(format!(
            "{t} snippets cannot be split into {n_temporal} phases"
        )));
    }
    let base = t / n_temporal;
    let rem = t % n_temporal;
    let len_of = |i: usize| base + usize::from(i < rem);
    let start: usize = (0..k).map(len_of).sum();
    let end = start + len_of(k);
    Ok(ForegroundMask {
        phase,
        mask: (0..t).map(|i| i >= start && i < end).collect(),
    })
}
