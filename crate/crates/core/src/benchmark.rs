//! The shared-phase transfer benchmark: every alignment mode trained on the
//! seen half of a synthetic vocabulary and scored on the unseen half.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apa::WeightMode;
use crate::data::{generate_synthetic, make_splits, SyntheticSpec};
use crate::error::Result;
use crate::metrics::EvalConfig;
use crate::model::Alignment;
use crate::pipeline::{mean_std, run_split, AblationCell, AblationRow, TrainConfig};
use crate::semantics::PhaseSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferBenchmark {
    /// One synthetic dataset, split, and training seed per entry.
    pub seeds: Vec<u64>,
    /// Template for every seed's data; `seed` is overwritten.
    pub spec: SyntheticSpec,
    pub fraction_seen: f64,
    /// Shared training settings; cells override alignment and phases.
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for TransferBenchmark {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            spec: SyntheticSpec::default().with_default_pairs(),
            fraction_seen: 0.5,
            train: TrainConfig {
                epochs: 30,
                learning_rate: 1e-3,
                weight_mode: WeightMode::Sigmoid,
                ..TrainConfig::default()
            },
            eval: EvalConfig::thumos(),
        }
    }
}

impl TransferBenchmark {
    /// The four alignment modes with four phases, plus the adaptive model
    /// restricted to the global phase.
    pub fn cells(&self) -> Result<Vec<AblationCell>> {
        let mut cells = Vec::new();
        for alignment in [
            Alignment::GlobalLabel,
            Alignment::GlobalMerge,
            Alignment::PhaseAverage,
            Alignment::PhaseAdaptive,
        ] {
            cells.push(AblationCell {
                name: alignment.to_string(),
                config: TrainConfig {
                    alignment,
                    phase_set: PhaseSet::with_count(4)?,
                    ..self.train.clone()
                },
            });
        }
        cells.push(AblationCell {
            name: "phase_adaptive_1".into(),
            config: TrainConfig {
                alignment: Alignment::PhaseAdaptive,
                phase_set: PhaseSet::with_count(1)?,
                ..self.train.clone()
            },
        });
        Ok(cells)
    }

    /// Runs every cell on every seed, seeds in parallel. Row `per_split`
    /// entries follow `seeds`.
    pub fn run(&self, cells: &[AblationCell]) -> Result<Vec<AblationRow>> {
        let per_seed: Vec<Vec<f64>> = self
            .seeds
            .par_iter()
            .map(|&seed| self.run_seed(seed, cells))
            .collect::<Result<_>>()?;
        let per_cell: Vec<Vec<f64>> = (0..cells.len())
            .map(|i| per_seed.iter().map(|s| s[i]).collect())
            .collect();
        Ok(cells
            .iter()
            .zip(per_cell)
            .map(|(cell, per_split)| {
                let (mean, std) = mean_std(&per_split);
                AblationRow {
                    name: cell.name.clone(),
                    per_split,
                    mean,
                    std,
                }
            })
            .collect())
    }

    fn run_seed(&self, seed: u64, cells: &[AblationCell]) -> Result<Vec<f64>> {
        let spec = SyntheticSpec {
            seed,
            ..self.spec.clone()
        };
        let bundle = generate_synthetic(&spec)?;
        let vocab = &bundle.dataset.manifest.vocabulary;
        let split = make_splits(vocab, self.fraction_seen, 1, seed)?.remove(0);
        cells
            .iter()
            .map(|cell| {
                let cfg = TrainConfig {
                    seed,
                    ..cell.config.clone()
                };
                let r = run_split(
                    &bundle.dataset,
                    &split,
                    &cfg,
                    &bundle.descriptions,
                    &bundle.encoder,
                    &self.eval,
                )?;
                info!("seed {seed} {}: avg mAP {:.4}", cell.name, r.average);
                Ok(r.average)
            })
            .collect()
    }
}
