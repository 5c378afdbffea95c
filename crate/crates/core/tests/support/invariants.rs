//! Properties that must hold for any input.

use std::collections::BTreeSet;

use ndarray::Array2;
use pda_core::apa::{phase_weights, WeightMode, WeightingNetwork};
use pda_core::data::{generate_synthetic, make_splits, SyntheticSpec};
use pda_core::metrics::{average_precision, mean_ap, EvalConfig, GroundTruth};
use pda_core::params::ParamStore;
use pda_core::pipeline::{train, TrainConfig};
use pda_core::postprocess::{soft_nms, Detection};
use pda_core::semantics::{Phase, TrackingSource};
use pda_core::tif::{apply_mask, binarize, foreground_score_matrix};
use proptest::collection::vec;
use proptest::prelude::*;

use super::{prop_runner, randomize, rng, Case};

pub const CASES: &[Case] = &[
    ("phase weights on the simplex", weights_simplex),
    ("sigmoid weights in the unit interval", weights_unit),
    ("masks are binary and idempotent", masks_binary),
    ("soft-nms keeps a decayed subset", soft_nms_subset),
    ("map does not grow with threshold", map_monotone),
    ("ap ignores score scale", ap_scale_invariant),
    ("splits are disjoint and complete", splits_disjoint),
    ("training never reads unseen descriptions", zero_leakage),
];

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    vec(-3.0..3.0f64, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn weights_in(mode: WeightMode, check: fn(&[f64])) {
    prop_runner(64)
        .run(&(2usize..5, 1usize..8, any::<u64>()), |(p, t, seed)| {
            let mut store = ParamStore::default();
            let net = WeightingNetwork::new(&mut store, "w", 6, p, 2, 8, &mut rng(seed));
            randomize(&mut store, &mut rng(seed ^ 1), 2.0);
            let fv = Array2::from_shape_fn((t, 6), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37).sin() * 4.0);
            let w = phase_weights(&store, &net, &fv, mode).unwrap();
            prop_assert_eq!(w.weights.len(), p);
            check(&w.weights);
            Ok(())
        })
        .unwrap();
}

fn weights_simplex() {
    weights_in(WeightMode::Softmax, |w| {
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    });
}

fn weights_unit() {
    weights_in(WeightMode::Sigmoid, |w| {
        assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)))
    });
}

fn masks_binary() {
    let strat = (1usize..10, 1usize..5).prop_flat_map(|(t, c)| (matrix(t, 4), matrix(c, 4)));
    prop_runner(128)
        .run(&strat, |(fv, bank)| {
            let m = binarize(&foreground_score_matrix(&fv, &bank, Phase::Middle).unwrap());
            prop_assert!(m.mask.iter().any(|&b| b), "the largest score always survives");
            let once = apply_mask(&fv, &m).unwrap();
            let twice = apply_mask(&once, &m).unwrap();
            prop_assert_eq!(&once, &twice);
            for (t, &keep) in m.mask.iter().enumerate() {
                if keep {
                    prop_assert_eq!(once.row(t), fv.row(t));
                } else {
                    prop_assert!(once.row(t).iter().all(|&v| v == 0.0));
                }
            }
            Ok(())
        })
        .unwrap();
}

fn detections() -> impl Strategy<Value = Vec<Detection>> {
    vec((0.0..20.0f64, 0.1..5.0f64, 0.0..1.0f64, 0usize..2), 0..12).prop_map(|raw| {
        raw.into_iter()
            .map(|(s, len, score, v)| Detection {
                video_id: format!("v{v}"),
                start: s,
                end: s + len,
                class_name: "a".into(),
                score,
            })
            .collect()
    })
}

fn ground_truth() -> impl Strategy<Value = Vec<GroundTruth>> {
    vec((0.0..20.0f64, 0.1..5.0f64, 0usize..2), 1..6).prop_map(|raw| {
        raw.into_iter()
            .map(|(s, len, v)| GroundTruth {
                video_id: format!("v{v}"),
                start: s,
                end: s + len,
                label: "a".into(),
            })
            .collect()
    })
}

fn soft_nms_subset() {
    prop_runner(256)
        .run(&(detections(), 0.05..2.0f64), |(dets, sigma)| {
            let out = soft_nms(&dets, sigma, 1e-3).unwrap();
            prop_assert!(out.len() <= dets.len());
            let mut pool = dets.clone();
            for d in &out {
                let i = pool
                    .iter()
                    .position(|o| {
                        o.start == d.start && o.end == d.end && o.video_id == d.video_id && d.score <= o.score
                    })
                    .expect("every survivor comes from the input");
                pool.swap_remove(i);
                prop_assert!(d.score >= 1e-3);
            }
            Ok(())
        })
        .unwrap();
}

fn map_monotone() {
    prop_runner(256)
        .run(&(detections(), ground_truth()), |(dets, gts)| {
            let r = mean_ap(&dets, &gts, &EvalConfig::thumos()).unwrap();
            for pair in r.map.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-12);
            }
            Ok(())
        })
        .unwrap();
}

fn ap_scale_invariant() {
    prop_runner(256)
        .run(&(detections(), ground_truth(), 0.01..100.0f64), |(dets, gts, k)| {
            let scaled: Vec<Detection> = dets
                .iter()
                .map(|d| Detection {
                    score: d.score * k,
                    ..d.clone()
                })
                .collect();
            for thr in [0.3, 0.5, 0.7] {
                prop_assert_eq!(
                    average_precision(&dets, &gts, thr),
                    average_precision(&scaled, &gts, thr)
                );
            }
            Ok(())
        })
        .unwrap();
}

fn splits_disjoint() {
    prop_runner(64)
        .run(&(2usize..30, 0.05..0.95f64, any::<u64>()), |(n, frac, seed)| {
            let n_seen = (frac * n as f64).round() as usize;
            prop_assume!(n_seen > 0 && n_seen < n);
            let vocab: Vec<String> = (0..n).map(|i| format!("class{i}")).collect();
            for split in make_splits(&vocab, frac, 10, seed).unwrap() {
                let seen: BTreeSet<_> = split.seen.iter().collect();
                let unseen: BTreeSet<_> = split.unseen.iter().collect();
                prop_assert!(seen.is_disjoint(&unseen));
                prop_assert_eq!(seen.len() + unseen.len(), n);
                prop_assert_eq!(seen.len(), n_seen);
            }
            Ok(())
        })
        .unwrap();
}

fn zero_leakage() {
    let bundle = generate_synthetic(&SyntheticSpec {
        n_classes: 4,
        n_videos: 12,
        t_min: 20,
        t_max: 28,
        instance_min: 6,
        instance_max: 10,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let vocab = &bundle.dataset.manifest.vocabulary;
    for seed in 0..3 {
        let split = make_splits(vocab, 0.5, 1, seed).unwrap().remove(0);
        let tracking = TrackingSource::new(&bundle.descriptions);
        let cfg = TrainConfig {
            epochs: 1,
            warmup_epochs: 0,
            seed,
            ..TrainConfig::default()
        };
        train(&bundle.dataset, &split.seen, &cfg, &tracking, &bundle.encoder).unwrap();
        let touched = tracking.accessed();
        assert!(!touched.is_empty());
        for class in &split.unseen {
            assert!(
                !touched.contains(class),
                "training read the description of unseen class {class}"
            );
        }
    }
}
