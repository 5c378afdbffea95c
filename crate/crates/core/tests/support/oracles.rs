//! Randomized comparisons against slow, independently written references.

use pda_core::apa::LocalizationOutput;
use pda_core::metrics::{average_precision, GroundTruth};
use pda_core::postprocess::{assemble_proposals, soft_nms, Detection, VideoTiming};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{assert_close, random_matrix, rng, Case};

pub const CASES: &[Case] = &[
    ("average precision against brute force", ap_brute_force),
    ("soft-nms with tiny sigma is hard nms", soft_nms_hard_limit),
    ("proposals against enumeration", proposals_enumerated),
];

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    inter / ((a.1 - a.0) + (b.1 - b.0) - inter)
}

/// Recall-weighted sum of the best precision at or beyond each hit.
fn reference_ap(dets: &[(f64, f64, f64)], gts: &[(f64, f64)], thr: f64) -> f64 {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].2.total_cmp(&dets[i].2));
    let mut taken = vec![false; gts.len()];
    let mut hits = Vec::new();
    for &i in &order {
        let d = (dets[i].0, dets[i].1);
        let pick = (0..gts.len())
            .filter(|&j| !taken[j] && overlap(d, gts[j]) >= thr)
            .max_by(|&a, &b| overlap(d, gts[a]).total_cmp(&overlap(d, gts[b])).then(b.cmp(&a)));
        if let Some(j) = pick {
            taken[j] = true;
        }
        hits.push(pick.is_some());
    }
    let precision_at = |k: usize| hits[..=k].iter().filter(|&&h| h).count() as f64 / (k + 1) as f64;
    (0..hits.len())
        .filter(|&k| hits[k])
        .map(|k| (k..hits.len()).map(precision_at).fold(0.0, f64::max) / gts.len() as f64)
        .sum()
}

fn ap_brute_force() {
    let mut r = rng(200);
    for _ in 0..200 {
        let n_gt = r.random_range(1..5);
        let n_det = r.random_range(0..9);
        let gts: Vec<(f64, f64)> = (0..n_gt)
            .map(|_| {
                let s = r.random_range(0.0..20.0);
                (s, s + r.random_range(0.5..5.0))
            })
            .collect();
        // distinct scores keep the ranking unambiguous
        let mut scores: Vec<f64> = (0..n_det).map(|i| (i as f64 + 1.0) / 10.0).collect();
        scores.shuffle(&mut r);
        let dets: Vec<(f64, f64, f64)> = scores
            .iter()
            .map(|&sc| {
                let s = r.random_range(0.0..20.0);
                (s, s + r.random_range(0.5..5.0), sc)
            })
            .collect();
        let thr = [0.1, 0.3, 0.5, 0.7][r.random_range(0..4)];
        let as_dets: Vec<Detection> = dets
            .iter()
            .map(|&(s, e, score)| Detection {
                video_id: "v".into(),
                start: s,
                end: e,
                class_name: "a".into(),
                score,
            })
            .collect();
        let as_gts: Vec<GroundTruth> = gts
            .iter()
            .map(|&(s, e)| GroundTruth {
                video_id: "v".into(),
                start: s,
                end: e,
                label: "a".into(),
            })
            .collect();
        assert_close(
            average_precision(&as_dets, &as_gts, thr),
            reference_ap(&dets, &gts, thr),
            1e-12,
        );
    }
}

fn hard_nms(dets: &[Detection]) -> Vec<Detection> {
    let mut ranked = dets.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Detection> = Vec::new();
    for d in ranked {
        if kept.iter().all(|k| overlap((k.start, k.end), (d.start, d.end)) == 0.0) {
            kept.push(d);
        }
    }
    kept
}

fn soft_nms_hard_limit() {
    let mut r = rng(201);
    for _ in 0..200 {
        let n = r.random_range(1..10);
        let mut scores: Vec<f64> = (0..n).map(|i| 0.05 + i as f64 / 20.0).collect();
        scores.shuffle(&mut r);
        // integer endpoints make every overlap either zero or large
        let dets: Vec<Detection> = scores
            .iter()
            .map(|&score| {
                let s = r.random_range(0..30) as f64;
                Detection {
                    video_id: "v".into(),
                    start: s,
                    end: s + r.random_range(1..6) as f64,
                    class_name: "a".into(),
                    score,
                }
            })
            .collect();
        let soft = soft_nms(&dets, 1e-6, 1e-3).unwrap();
        assert_eq!(soft, hard_nms(&dets));
    }
}

fn proposals_enumerated() {
    let mut r = rng(202);
    for _ in 0..50 {
        let t = r.random_range(1..7);
        let c = r.random_range(1..4);
        let scores = random_matrix(&mut r, t, c, 3.0);
        let loc = LocalizationOutput {
            fg_prob: (0..t).map(|_| r.random_range(0.0..1.0)).collect(),
            d_start: (0..t).map(|_| r.random_range(0.01..3.0)).collect(),
            d_end: (0..t).map(|_| r.random_range(0.01..3.0)).collect(),
        };
        let timing = VideoTiming {
            video_id: "v".into(),
            snippet_stride: 2,
            frame_rate: 4.0,
            duration: t as f64 * 0.5,
        };
        let vocab: Vec<String> = (0..c).map(|i| format!("c{i}")).collect();
        let top_k = r.random_range(1..10);
        let got = assemble_proposals(&scores, &loc, &timing, &vocab, top_k, 0.05).unwrap();

        let mut expected = Vec::new();
        for i in 0..t {
            let z: f64 = scores.row(i).iter().map(|v| v.exp()).sum();
            let start = ((i as f64 - loc.d_start[i]) * 0.5).max(0.0).min(timing.duration);
            let end = ((i as f64 + loc.d_end[i]) * 0.5).max(0.0).min(timing.duration);
            for j in 0..c {
                let score = scores[[i, j]].exp() / z * loc.fg_prob[i];
                if start < end && score >= 0.05 {
                    expected.push((score, start, end, j));
                }
            }
        }
        expected.sort_by(|a, b| b.0.total_cmp(&a.0));
        expected.truncate(top_k);
        assert_eq!(got.len(), expected.len());
        for (d, (score, start, end, j)) in got.iter().zip(expected) {
            assert_close(d.score, score, 1e-12);
            assert_close(d.start, start, 1e-12);
            assert_close(d.end, end, 1e-12);
            assert_eq!(d.class_name, vocab[j]);
        }
    }
}
