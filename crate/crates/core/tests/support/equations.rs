//! Worked examples for every operation, with hand-computed expectations.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use ndarray::{array, s, Array2};
use pda_core::apa::{
    aggregate_scores, classify_phase, cross_attend, fuse_for_localization, localization_heads, phase_weights,
    CrossAttention, FusionMlp, LocalizationHeads, LocalizationOutput, PhaseClassScores, PhaseWeights, WeightMode,
    WeightingNetwork, DISTANCE_EPS,
};
use pda_core::backbone::{encode_temporal, project_input, Backbone, BackboneConfig, FeatureSequence};
use pda_core::data::{
    decode_features, encode_features, generate_synthetic, make_splits, read_features, write_features, SharedPhase,
    SyntheticSpec,
};
use pda_core::graph::Graph;
use pda_core::metrics::{average_precision, mean_ap, tiou, EvalConfig, GroundTruth, Interval};
use pda_core::objectives::{
    classification_loss, diou_1d, foreground_loss, localization_loss, total_loss, SupervisionTargets,
};
use pda_core::params::ParamStore;
use pda_core::pipeline::{
    ablation_csv, detect, evaluate, initial_checkpoint, run_ablation, train, AblationCell, TrainConfig,
};
use pda_core::postprocess::{assemble_proposals, soft_nms, Detection, VideoTiming};
use pda_core::semantics::{
    build_global_prompt, build_phase_prompt, decompose_label, encode_phase_bank, encode_texts, wrap_description,
    MemoryStore, OfflineClient, Phase, PhaseDescriptionSet, PhaseSet, ProviderIdentity, ScriptedClient, StubEncoder,
    TextEncoder, TextSource,
};
use pda_core::tif::{apply_mask, binarize, foreground_score_matrix, static_mask, ForegroundMask, ForegroundScore};
use pda_core::{nn::Linear, PdaError};

use super::{assert_all_close, assert_close, random_matrix, randomize, rng, Case};

pub const CASES: &[Case] = &[
    ("phase prompt template", phase_prompt_template),
    ("phase prompt count substitution", phase_prompt_count),
    ("phase prompt keeps name", phase_prompt_keeps_name),
    ("decomposition answers", decomposition_answers),
    ("cache hit bypasses failing client", cache_hit_bypass),
    ("wrap description", wrap_rule),
    ("wrap rejects empty", wrap_empty),
    ("wrap rejects wrapped", wrap_twice),
    ("bank identity projection", bank_identity),
    ("bank affine projection", bank_affine),
    ("bank order equivariance", bank_permutation),
    ("input projection identity", input_identity),
    ("input projection bias only", input_bias_only),
    ("input projection single step", input_single_step),
    ("zero encoder is positional identity", encoder_residual_identity),
    ("single-token attention is value projection", single_token_attention),
    ("attention rows sum to one", attention_rows_normalized),
    ("uniform foreground scores", foreground_uniform),
    ("single-class foreground score", foreground_single_class),
    ("foreground softmax values", foreground_softmax_values),
    ("binarize threshold", binarize_threshold),
    ("binarize ties kept", binarize_ties),
    ("binarize against one third", binarize_third),
    ("mask identity", mask_identity),
    ("mask zeros", mask_zeros),
    ("mask row selection", mask_rows),
    ("static thirds", static_thirds),
    ("static remainder", static_remainder),
    ("static global", static_global),
    ("cross-attention single class", cross_single_class),
    ("cross-attention time equivariance", cross_equivariance),
    ("cross-attention by hand", cross_by_hand),
    ("classification orthonormal", classify_orthonormal),
    ("classification zero features", classify_zero),
    ("classification double loop", classify_loop),
    ("weights uniform at zero", weights_uniform),
    ("weights from bias", weights_bias),
    ("weights sigmoid at zero", weights_sigmoid),
    ("aggregate one-hot", aggregate_one_hot),
    ("aggregate uniform", aggregate_uniform),
    ("aggregate scalar sum", aggregate_scalar),
    ("fusion identity slice", fusion_identity),
    ("fusion zero input", fusion_zero),
    ("fusion forward by hand", fusion_by_hand),
    ("heads at zero", heads_zero),
    ("heads softplus asymptote", heads_large),
    ("heads positive distances", heads_positive),
    ("cross-entropy saturated", ce_saturated),
    ("cross-entropy uniform", ce_uniform),
    ("cross-entropy two rows", ce_two_rows),
    ("bce perfect", bce_perfect),
    ("bce half", bce_half),
    ("bce two terms", bce_two_terms),
    ("diou identity", diou_identity),
    ("diou overlap", diou_overlap),
    ("diou disjoint", diou_disjoint),
    ("localization exact", loc_exact),
    ("localization single step", loc_single),
    ("localization no foreground", loc_none),
    ("total zero", total_zero),
    ("total sum", total_sum),
    ("total commutative", total_commutative),
    ("proposals gated by foreground", proposals_gated),
    ("proposals single", proposals_single),
    ("proposals enumeration", proposals_enumeration),
    ("soft-nms single", nms_single),
    ("soft-nms disjoint", nms_disjoint),
    ("soft-nms decay", nms_decay),
    ("tiou identical", tiou_identical),
    ("tiou disjoint", tiou_disjoint),
    ("tiou overlap", tiou_overlap),
    ("ap perfect", ap_perfect),
    ("ap empty", ap_empty),
    ("ap three detections", ap_three),
    ("map perfect", map_perfect),
    ("map shifted", map_shifted),
    ("map single threshold", map_single),
    ("synthetic noiseless prototypes", synthetic_noiseless),
    ("synthetic determinism", synthetic_determinism),
    ("synthetic shared text", synthetic_shared_text),
    ("split twenty", split_twenty),
    ("split rounding", split_rounding),
    ("split determinism", split_determinism),
    ("feature round trip", features_round_trip),
    ("feature bad magic", features_bad_magic),
    ("feature empty", features_empty),
    ("train reduces loss", train_reduces_loss),
    ("train with zero rate", train_zero_rate),
    ("train determinism", train_determinism),
    ("detect empty vocabulary", detect_empty_vocab),
    ("detect beats untrained", detect_beats_untrained),
    ("ablation one cell", ablation_one_cell),
    ("ablation identical cells", ablation_identical),
];

// semantics

const LONGJUMP_ANSWER: &str = "In the start phase, the person would run down the track to gain speed. \
    In the middle phase, the person would plant one foot and push off the ground. \
    In the end phase, the person would extend their legs and land in the sand.";
const LONGJUMP_GLOBAL: &str = "The person would sprint down the track and jump forward into the sandpit.";

fn phase_prompt_template() {
    assert_eq!(
        build_phase_prompt("LongJump", 3).unwrap(),
        "Decompose the action of LongJump into coherent three phases based on the natural temporal \
         progression of the action. Please provide the output step by step."
    );
    assert_eq!(
        build_global_prompt("LongJump").unwrap(),
        "Describe how a person does LongJump."
    );
}

fn phase_prompt_count() {
    assert_eq!(
        build_phase_prompt("X", 2).unwrap(),
        "Decompose the action of X into coherent two phases based on the natural temporal \
         progression of the action. Please provide the output step by step."
    );
}

fn phase_prompt_keeps_name() {
    assert!(build_phase_prompt("PoleVault", 3).unwrap().contains("PoleVault"));
}

fn longjump_client() -> ScriptedClient {
    ScriptedClient::new(ProviderIdentity::new("openai", "gpt-4o"))
        .with_response(build_phase_prompt("LongJump", 3).unwrap(), LONGJUMP_ANSWER)
        .with_response(build_global_prompt("LongJump").unwrap(), LONGJUMP_GLOBAL)
}

fn decomposition_answers() {
    let set = decompose_label(
        "LongJump",
        &PhaseSet::canonical(),
        &longjump_client(),
        &mut MemoryStore::default(),
    )
    .unwrap();
    assert_eq!(
        set.get(Phase::Start),
        Some("The person would run down the track to gain speed.")
    );
    assert_eq!(set.get(Phase::Global), Some(LONGJUMP_GLOBAL));
}

fn cache_hit_bypass() {
    let mut store = MemoryStore::default();
    let phases = PhaseSet::canonical();
    let first = decompose_label("LongJump", &phases, &longjump_client(), &mut store).unwrap();
    let offline = OfflineClient {
        identity: ProviderIdentity::new("openai", "gpt-4o"),
    };
    let cached = decompose_label("LongJump", &phases, &offline, &mut store).unwrap();
    assert_eq!(cached, first);
}

fn wrap_rule() {
    assert_eq!(
        wrap_description("The person would run down the track to gain speed.").unwrap(),
        "a video of people's motion that the person would run down the track to gain speed."
    );
}

fn wrap_empty() {
    assert!(matches!(wrap_description(""), Err(PdaError::InvalidArgument(_))));
}

fn wrap_twice() {
    let once = wrap_description("The person would jump.").unwrap();
    assert!(matches!(wrap_description(&once), Err(PdaError::InvalidArgument(_))));
}

fn bank_fixture() -> (pda_core::semantics::DescriptionCache, StubEncoder) {
    let mut cache = pda_core::semantics::DescriptionCache::default();
    for (class, word) in [("A", "alpha"), ("B", "beta")] {
        let texts = BTreeMap::from([(Phase::Start, format!("The person would {word}."))]);
        cache.insert(&PhaseDescriptionSet::new(class, texts).unwrap());
    }
    let mut enc = StubEncoder::new(3, 0)
        .with_token("alpha", vec![1.0, 0.0, 0.0])
        .with_token("beta", vec![0.0, 0.6, 0.8]);
    for w in [
        "a", "video", "of", "people's", "motion", "that", "the", "person", "would",
    ] {
        enc.insert_token(w, vec![0.0; 3]);
    }
    (cache, enc)
}

fn linear(w: Array2<f64>, b: Array2<f64>) -> (ParamStore, Linear) {
    let mut store = ParamStore::default();
    let lin = Linear::new(&mut store, "proj", w.nrows(), w.ncols(), &mut rng(0));
    store.set(lin.weight, w);
    store.set(lin.bias.unwrap(), b);
    (store, lin)
}

fn ab() -> Vec<String> {
    vec!["A".to_string(), "B".to_string()]
}

fn bank_identity() {
    let (cache, enc) = bank_fixture();
    let (store, lin) = linear(Array2::eye(3), Array2::zeros((1, 3)));
    let bank = encode_phase_bank(&ab(), &cache, &enc, Phase::Start, &store, &lin).unwrap();
    assert_eq!(bank.embeddings, array![[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]]);
}

fn bank_affine() {
    let (cache, enc) = bank_fixture();
    // row form: e·W + b
    let w = array![[1.0, 0.0, 2.0], [0.5, -1.0, 0.0], [0.0, 3.0, 1.0]];
    let b = array![[0.1, 0.2, 0.3]];
    let (store, lin) = linear(w, b);
    let bank = encode_phase_bank(&ab(), &cache, &enc, Phase::Start, &store, &lin).unwrap();
    // e1 = (1,0,0) -> (1, 0, 2) + b; e2 = (0, .6, .8) -> (.3, 1.8, .8) + b
    assert_all_close(&bank.embeddings, &array![[1.1, 0.2, 2.3], [0.4, 2.0, 1.1]], 1e-12);
}

fn bank_permutation() {
    let (cache, enc) = bank_fixture();
    let (store, lin) = linear(
        random_matrix(&mut rng(1), 3, 3, 1.0),
        random_matrix(&mut rng(2), 1, 3, 1.0),
    );
    let fwd = encode_phase_bank(&ab(), &cache, &enc, Phase::Start, &store, &lin).unwrap();
    let rev = vec!["B".to_string(), "A".to_string()];
    let back = encode_phase_bank(&rev, &cache, &enc, Phase::Start, &store, &lin).unwrap();
    assert_eq!(back.embeddings.row(0), fwd.embeddings.row(1));
    assert_eq!(back.embeddings.row(1), fwd.embeddings.row(0));
}

// backbone

fn backbone(d_in: usize, d: usize, layers: usize, heads: usize) -> (ParamStore, Backbone) {
    let mut store = ParamStore::default();
    let cfg = BackboneConfig {
        d_in,
        d_model: d,
        layers,
        heads,
        ffn_hidden: 2 * d,
        max_len: 16,
    };
    let bb = Backbone::new(&mut store, cfg, &mut rng(3)).unwrap();
    (store, bb)
}

fn input_identity() {
    let (mut store, bb) = backbone(3, 3, 1, 1);
    store.set(bb.input.weight, Array2::eye(3));
    store.set(bb.input.bias.unwrap(), Array2::zeros((1, 3)));
    let x = random_matrix(&mut rng(4), 5, 3, 1.0);
    let seq = FeatureSequence::new("v", x.clone(), 1).unwrap();
    assert_eq!(project_input(&seq, &store, &bb).unwrap(), x);
}

fn input_bias_only() {
    let (mut store, bb) = backbone(3, 2, 1, 1);
    store.set(bb.input.weight, Array2::zeros((3, 2)));
    store.set(bb.input.bias.unwrap(), array![[0.5, -2.0]]);
    let seq = FeatureSequence::new("v", random_matrix(&mut rng(5), 4, 3, 1.0), 1).unwrap();
    let out = project_input(&seq, &store, &bb).unwrap();
    for row in out.rows() {
        assert_eq!(row.to_vec(), vec![0.5, -2.0]);
    }
}

fn input_single_step() {
    let (mut store, bb) = backbone(2, 2, 1, 1);
    store.set(bb.input.weight, array![[1.0, 2.0], [3.0, 4.0]]);
    store.set(bb.input.bias.unwrap(), array![[0.5, -0.5]]);
    let seq = FeatureSequence::new("v", array![[1.0, -1.0]], 1).unwrap();
    // (1·1 + -1·3 + .5, 1·2 + -1·4 - .5)
    assert_eq!(project_input(&seq, &store, &bb).unwrap(), array![[-1.5, -2.5]]);
}

fn encoder_residual_identity() {
    let (mut store, bb) = backbone(4, 4, 2, 2);
    randomize(&mut store, &mut rng(6), 0.5);
    store.zero_prefix("backbone.layer");
    let x = random_matrix(&mut rng(7), 5, 4, 1.0);
    let out = encode_temporal(&x, &store, &bb).unwrap();
    let expected = &x + &store.value(bb.positions).slice(s![0..5, ..]);
    assert_all_close(&out.values, &expected, 1e-12);
}

fn single_token_attention() {
    let (mut store, bb) = backbone(4, 4, 1, 2);
    randomize(&mut store, &mut rng(8), 0.5);
    let attn = &bb.layers[0].attn;
    let x = random_matrix(&mut rng(9), 1, 4, 1.0);
    let mut g = Graph::new(&store);
    let xv = g.constant(x.clone());
    let out = attn.forward(&mut g, xv, xv);
    let v = attn.value.apply(&store, &x).unwrap();
    let expected = attn.output.as_ref().unwrap().apply(&store, &v).unwrap();
    assert_all_close(g.value(out.output), &expected, 1e-12);
    for w in &out.weights {
        assert_eq!(g.value(*w), &array![[1.0]]);
    }
}

fn attention_rows_normalized() {
    let (mut store, bb) = backbone(6, 8, 2, 2);
    randomize(&mut store, &mut rng(10), 0.7);
    let mut g = Graph::new(&store);
    let x = g.constant(random_matrix(&mut rng(11), 7, 6, 2.0));
    let out = bb.forward(&mut g, x).unwrap();
    for layer in &out.attention {
        for w in layer {
            for row in g.value(*w).rows() {
                assert_close(row.sum(), 1.0, 1e-6);
            }
        }
    }
}

// foreground filtering

fn foreground_uniform() {
    let fv = array![[1.0, 0.0], [0.0, 1.0]];
    let bank = array![[1.0, 1.0]];
    let s = foreground_score_matrix(&fv, &bank, Phase::Start).unwrap();
    assert_eq!(s.scores, vec![0.5, 0.5]);
}

fn foreground_single_class() {
    let fv = array![[1.0, 2.0], [-1.0, 0.5], [3.0, -2.0]];
    let bank = array![[0.5, 0.25]];
    let s = foreground_score_matrix(&fv, &bank, Phase::Start).unwrap();
    let raw: Vec<f64> = fv.rows().into_iter().map(|r| r.dot(&bank.row(0))).collect();
    let z: f64 = raw.iter().map(|r| r.exp()).sum();
    for (got, r) in s.scores.iter().zip(&raw) {
        assert_close(*got, r.exp() / z, 1e-12);
    }
}

fn foreground_softmax_values() {
    let fv = array![[0.0], [1.0], [2.0]];
    let bank = array![[1.0], [0.5]];
    let s = foreground_score_matrix(&fv, &bank, Phase::Start).unwrap();
    for (got, want) in s.scores.iter().zip([0.0900, 0.2447, 0.6652]) {
        assert_close(*got, want, 1e-4);
    }
}

fn score(v: Vec<f64>) -> ForegroundScore {
    ForegroundScore {
        phase: Phase::Start,
        scores: v,
    }
}

fn binarize_threshold() {
    assert_eq!(binarize(&score(vec![0.7, 0.3])).mask, vec![true, false]);
}

fn binarize_ties() {
    assert_eq!(binarize(&score(vec![1.0 / 3.0; 3])).mask, vec![true; 3]);
}

fn binarize_third() {
    assert_eq!(
        binarize(&score(vec![0.0900, 0.2447, 0.6652])).mask,
        vec![false, false, true]
    );
}

fn mask(bits: &[bool]) -> ForegroundMask {
    ForegroundMask {
        phase: Phase::Start,
        mask: bits.to_vec(),
    }
}

fn mask_identity() {
    let fv = random_matrix(&mut rng(12), 3, 2, 1.0);
    assert_eq!(apply_mask(&fv, &mask(&[true; 3])).unwrap(), fv);
}

fn mask_zeros() {
    let fv = random_matrix(&mut rng(13), 3, 2, 1.0);
    assert_eq!(
        apply_mask(&fv, &mask(&[false; 3])).unwrap(),
        Array2::<f64>::zeros((3, 2))
    );
}

fn mask_rows() {
    let fv = array![[1.0, 2.0], [3.0, 4.0]];
    assert_eq!(
        apply_mask(&fv, &mask(&[true, false])).unwrap(),
        array![[1.0, 2.0], [0.0, 0.0]]
    );
}

fn static_thirds() {
    let m = static_mask(6, Phase::Start, 3).unwrap();
    assert_eq!(m.mask, vec![true, true, false, false, false, false]);
}

fn static_remainder() {
    let m = static_mask(7, Phase::Start, 3).unwrap();
    assert_eq!(m.mask, vec![true, true, true, false, false, false, false]);
}

fn static_global() {
    assert_eq!(static_mask(5, Phase::Global, 3).unwrap().mask, vec![true; 5]);
}

// alignment

fn cross_single_class() {
    let mut store = ParamStore::default();
    let ca = CrossAttention::new(&mut store, "ca", 4, 1, &mut rng(14));
    randomize(&mut store, &mut rng(15), 0.5);
    let fv = random_matrix(&mut rng(16), 5, 4, 1.0);
    let bank = random_matrix(&mut rng(17), 1, 4, 1.0);
    let mut g = Graph::new(&store);
    let f = g.constant(fv);
    let b = g.constant(bank.clone());
    let out = ca.forward(&mut g, f, b).unwrap();
    assert!(g.value(out.weights[0]).iter().all(|&w| w == 1.0));
    let v = ca.attn.value.apply(&store, &bank).unwrap();
    for row in g.value(out.attended).rows() {
        for (a, e) in row.iter().zip(v.row(0)) {
            assert_close(*a, *e, 1e-12);
        }
    }
}

fn cross_equivariance() {
    let mut store = ParamStore::default();
    let ca = CrossAttention::new(&mut store, "ca", 4, 2, &mut rng(18));
    randomize(&mut store, &mut rng(19), 0.5);
    let fv = random_matrix(&mut rng(20), 4, 4, 1.0);
    let bank = random_matrix(&mut rng(21), 3, 4, 1.0);
    let perm = [2usize, 0, 3, 1];
    let permuted = Array2::from_shape_fn((4, 4), |(i, j)| fv[[perm[i], j]]);
    let a = cross_attend(&store, &ca, &fv, &bank).unwrap();
    let b = cross_attend(&store, &ca, &permuted, &bank).unwrap();
    for (i, &p) in perm.iter().enumerate() {
        for j in 0..4 {
            assert_close(b[[i, j]], a[[p, j]], 1e-12);
        }
    }
}

fn cross_by_hand() {
    let mut store = ParamStore::default();
    let ca = CrossAttention::new(&mut store, "ca", 2, 1, &mut rng(22));
    store.set(ca.attn.query.weight, Array2::eye(2));
    store.set(ca.attn.key.weight, Array2::eye(2));
    store.set(ca.attn.value.weight, array![[2.0, 0.0], [0.0, 1.0]]);
    for lin in [&ca.attn.query, &ca.attn.key, &ca.attn.value] {
        store.set(lin.bias.unwrap(), Array2::zeros((1, 2)));
    }
    let fv = array![[1.0, 0.0]];
    let bank = array![[1.0, 0.0], [0.0, 1.0]];
    let out = cross_attend(&store, &ca, &fv, &bank).unwrap();
    // scores (1, 0)/√2; weights softmax; values (2,0) and (0,1)
    let e = (1.0 / 2f64.sqrt()).exp();
    let (w0, w1) = (e / (e + 1.0), 1.0 / (e + 1.0));
    let expected = array![[1.0 + 2.0 * w0, w1]];
    assert_all_close(&out, &expected, 1e-6);
}

fn classify_orthonormal() {
    let bank = Array2::eye(3);
    let fbar = array![[0.0, 1.0, 0.0]];
    let s = classify_phase(Phase::Start, &fbar, &bank).unwrap();
    assert_eq!(s.scores, array![[0.0, 1.0, 0.0]]);
}

fn classify_zero() {
    let bank = random_matrix(&mut rng(23), 3, 4, 1.0);
    let s = classify_phase(Phase::Start, &Array2::zeros((2, 4)), &bank).unwrap();
    assert!(s.scores.iter().all(|&v| v == 0.0));
}

fn classify_loop() {
    let fbar = random_matrix(&mut rng(24), 2, 3, 1.0);
    let bank = random_matrix(&mut rng(25), 2, 3, 1.0);
    let s = classify_phase(Phase::Start, &fbar, &bank).unwrap();
    for t in 0..2 {
        for c in 0..2 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += fbar[[t, k]] * bank[[c, k]];
            }
            assert_close(s.scores[[t, c]], acc, 1e-6);
        }
    }
}

fn weighting() -> (ParamStore, WeightingNetwork) {
    let mut store = ParamStore::default();
    let net = WeightingNetwork::new(&mut store, "w", 4, 4, 1, 8, &mut rng(26));
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let dim = store.value(id).dim();
        store.set(id, Array2::zeros(dim));
    }
    (store, net)
}

fn weights_uniform() {
    let (store, net) = weighting();
    let fv = random_matrix(&mut rng(27), 6, 4, 1.0);
    let w = phase_weights(&store, &net, &fv, WeightMode::Softmax).unwrap();
    assert_eq!(w.weights, vec![0.25; 4]);
}

fn weights_bias() {
    let (mut store, net) = weighting();
    store.set(net.phase_bias, array![[LN_2, 0.0, 0.0, 0.0]]);
    let fv = random_matrix(&mut rng(28), 6, 4, 1.0);
    let w = phase_weights(&store, &net, &fv, WeightMode::Softmax).unwrap();
    for (got, want) in w.weights.iter().zip([0.4, 0.2, 0.2, 0.2]) {
        assert_close(*got, want, 1e-12);
    }
}

fn weights_sigmoid() {
    let (store, net) = weighting();
    let fv = random_matrix(&mut rng(29), 6, 4, 1.0);
    let w = phase_weights(&store, &net, &fv, WeightMode::Sigmoid).unwrap();
    assert_eq!(w.weights, vec![0.5; 4]);
}

fn four_scores(values: [Array2<f64>; 4]) -> BTreeMap<Phase, PhaseClassScores> {
    Phase::CANONICAL
        .iter()
        .zip(values)
        .map(|(&phase, scores)| (phase, PhaseClassScores { phase, scores }))
        .collect()
}

fn aggregate_one_hot() {
    let mut r = rng(30);
    let values = [(); 4].map(|_| random_matrix(&mut r, 3, 2, 1.0));
    let scores = four_scores(values.clone());
    let w = PhaseWeights {
        weights: vec![0.0, 0.0, 1.0, 0.0],
    };
    assert_eq!(
        aggregate_scores(&scores, &PhaseSet::canonical(), &w).unwrap(),
        values[2]
    );
}

fn aggregate_uniform() {
    let mut r = rng(31);
    let values = [(); 4].map(|_| random_matrix(&mut r, 3, 2, 1.0));
    let scores = four_scores(values.clone());
    let w = PhaseWeights { weights: vec![0.25; 4] };
    let mean = (&values[0] + &values[1] + &values[2] + &values[3]) / 4.0;
    assert_all_close(
        &aggregate_scores(&scores, &PhaseSet::canonical(), &w).unwrap(),
        &mean,
        1e-12,
    );
}

fn aggregate_scalar() {
    let scores = four_scores([array![[1.0]], array![[2.0]], array![[3.0]], array![[4.0]]]);
    let w = PhaseWeights {
        weights: vec![0.4, 0.2, 0.2, 0.2],
    };
    let out = aggregate_scores(&scores, &PhaseSet::canonical(), &w).unwrap();
    assert_close(out[[0, 0]], 2.2, 1e-12);
}

fn fusion_identity() {
    let d = 3;
    let mut store = ParamStore::default();
    let fusion = FusionMlp::new(&mut store, "f", d, 4, 2 * d, &mut rng(32));
    // relu(x) - relu(-x) rebuilds the first block exactly
    let mut w1 = Array2::zeros((4 * d, 2 * d));
    for i in 0..d {
        w1[[i, i]] = 1.0;
        w1[[i, d + i]] = -1.0;
    }
    let mut w3 = Array2::zeros((2 * d, d));
    for i in 0..d {
        w3[[i, i]] = 1.0;
        w3[[d + i, i]] = -1.0;
    }
    let layers = &fusion.mlp.layers;
    store.set(layers[0].weight, w1);
    store.set(layers[1].weight, Array2::eye(2 * d));
    store.set(layers[2].weight, w3);
    for l in layers {
        let dim = store.value(l.bias.unwrap()).dim();
        store.set(l.bias.unwrap(), Array2::zeros(dim));
    }
    let mut r = rng(33);
    let parts: Vec<Array2<f64>> = (0..4).map(|_| random_matrix(&mut r, 5, d, 1.0)).collect();
    let out = fuse_for_localization(&store, &fusion, &parts).unwrap();
    assert_all_close(&out, &parts[0], 1e-12);
}

fn fusion_zero() {
    let mut store = ParamStore::default();
    let fusion = FusionMlp::new(&mut store, "f", 2, 4, 5, &mut rng(34));
    for l in &fusion.mlp.layers {
        let dim = store.value(l.bias.unwrap()).dim();
        store.set(l.bias.unwrap(), Array2::zeros(dim));
    }
    let parts = vec![Array2::zeros((3, 2)); 4];
    assert_eq!(
        fuse_for_localization(&store, &fusion, &parts).unwrap(),
        Array2::<f64>::zeros((3, 2))
    );
}

fn fusion_by_hand() {
    let mut store = ParamStore::default();
    let fusion = FusionMlp::new(&mut store, "f", 2, 4, 3, &mut rng(35));
    randomize(&mut store, &mut rng(36), 1.0);
    let mut r = rng(37);
    let parts: Vec<Array2<f64>> = (0..4).map(|_| random_matrix(&mut r, 1, 2, 1.0)).collect();
    let x: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    let mut h = x;
    for (i, l) in fusion.mlp.layers.iter().enumerate() {
        let w = store.value(l.weight);
        let b = store.value(l.bias.unwrap());
        let mut next = vec![0.0; w.ncols()];
        for (j, out) in next.iter_mut().enumerate() {
            *out = b[[0, j]] + (0..w.nrows()).map(|k| h[k] * w[[k, j]]).sum::<f64>();
            if i < 2 {
                *out = out.max(0.0);
            }
        }
        h = next;
    }
    let out = fuse_for_localization(&store, &fusion, &parts).unwrap();
    for (a, e) in out.iter().zip(&h) {
        assert_close(*a, *e, 1e-6);
    }
}

fn heads(seed: u64) -> (ParamStore, LocalizationHeads) {
    let mut store = ParamStore::default();
    let h = LocalizationHeads::new(&mut store, "h", 3, &mut rng(seed));
    (store, h)
}

fn heads_zero() {
    let (mut store, h) = heads(38);
    store.zero_prefix("h.");
    let out = localization_heads(&store, &h, &random_matrix(&mut rng(39), 4, 3, 1.0)).unwrap();
    assert!(out.fg_prob.iter().all(|&p| p == 0.5));
    for d in out.d_start.iter().chain(&out.d_end) {
        assert_close(*d, LN_2 + DISTANCE_EPS, 1e-12);
    }
}

fn heads_large() {
    let (mut store, h) = heads(40);
    store.zero_prefix("h.");
    store.set(h.regression.bias.unwrap(), array![[10.0, 10.0]]);
    let out = localization_heads(&store, &h, &Array2::zeros((1, 3))).unwrap();
    assert_close(out.d_start[0], 10.0001, 1e-4);
    assert_close(out.d_end[0], 10.0001, 1e-4);
}

fn heads_positive() {
    let (mut store, h) = heads(41);
    let mut r = rng(42);
    let fused = random_matrix(&mut r, 2, 3, 1.0);
    for _ in 0..1000 {
        randomize(&mut store, &mut r, 50.0);
        let out = localization_heads(&store, &h, &fused).unwrap();
        assert!(out.d_start.iter().chain(&out.d_end).all(|&d| d > 0.0));
    }
}

// objectives

fn targets(classes: Vec<Option<usize>>, n_classes: usize) -> SupervisionTargets {
    let fg_target = classes.iter().map(|c| if c.is_some() { 1.0 } else { 0.0 }).collect();
    let gt_interval = classes.iter().map(|_| None).collect();
    SupervisionTargets {
        class_target: classes,
        n_classes,
        fg_target,
        gt_interval,
    }
}

fn ce_saturated() {
    let loss = classification_loss(&array![[100.0, 0.0, 0.0]], &targets(vec![Some(0)], 3)).unwrap();
    assert!(loss < 1e-6);
}

fn ce_uniform() {
    let loss = classification_loss(&array![[0.3, 0.3], [0.0, 0.0]], &targets(vec![Some(0), Some(1)], 2)).unwrap();
    assert_close(loss, LN_2, 1e-9);
}

fn ce_two_rows() {
    let loss = classification_loss(&array![[1.0, 0.0], [0.0, 1.0]], &targets(vec![Some(0), Some(1)], 2)).unwrap();
    let e = 1f64.exp();
    assert_close(loss, -(e / (e + 1.0)).ln(), 1e-12);
    assert_close(loss, 0.3133, 1e-4);
}

fn bce_perfect() {
    let loss = foreground_loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
    assert!(loss <= 1e-6);
}

fn bce_half() {
    assert_close(foreground_loss(&[0.5; 4], &[1.0, 0.0, 0.0, 1.0]).unwrap(), LN_2, 1e-12);
}

fn bce_two_terms() {
    let loss = foreground_loss(&[0.9, 0.2], &[1.0, 0.0]).unwrap();
    assert_close(loss, (-(0.9f64).ln() - (0.8f64).ln()) / 2.0, 1e-12);
    assert_close(loss, 0.1643, 1e-4);
}

fn diou_identity() {
    assert_eq!(diou_1d(Interval::new(1.0, 4.0), Interval::new(1.0, 4.0)).unwrap(), 0.0);
}

fn diou_overlap() {
    let l = diou_1d(Interval::new(0.0, 2.0), Interval::new(1.0, 3.0)).unwrap();
    assert_close(l, 1.0 - 1.0 / 3.0 + 1.0 / 9.0, 1e-12);
    assert_close(l, 0.7778, 1e-4);
}

fn diou_disjoint() {
    let l = diou_1d(Interval::new(0.0, 1.0), Interval::new(2.0, 3.0)).unwrap();
    assert_close(l, 1.0 + 4.0 / 9.0, 1e-12);
    assert_close(l, 1.4444, 1e-4);
}

fn loc_targets(intervals: Vec<Option<(f64, f64)>>) -> SupervisionTargets {
    SupervisionTargets {
        class_target: intervals.iter().map(|i| i.map(|_| 0)).collect(),
        n_classes: 1,
        fg_target: intervals.iter().map(|i| if i.is_some() { 1.0 } else { 0.0 }).collect(),
        gt_interval: intervals,
    }
}

fn loc_exact() {
    let gt = Some((0.0, 3.0));
    let t = loc_targets(vec![gt, gt, gt, gt, None]);
    let loc = LocalizationOutput {
        fg_prob: vec![1.0; 5],
        d_start: vec![0.0, 1.0, 2.0, 3.0, 1.0],
        d_end: vec![3.0, 2.0, 1.0, 0.0, 1.0],
    };
    assert_close(localization_loss(&loc, &t).unwrap(), 0.0, 1e-12);
}

fn loc_single() {
    let t = loc_targets(vec![None, Some((0.0, 2.0)), None]);
    let loc = LocalizationOutput {
        fg_prob: vec![0.5; 3],
        d_start: vec![0.5; 3],
        d_end: vec![0.5; 3],
    };
    assert_close(localization_loss(&loc, &t).unwrap(), 0.5, 1e-12);
}

fn loc_none() {
    let t = loc_targets(vec![None; 3]);
    let loc = LocalizationOutput {
        fg_prob: vec![0.5; 3],
        d_start: vec![1.0; 3],
        d_end: vec![1.0; 3],
    };
    assert_eq!(localization_loss(&loc, &t).unwrap(), 0.0);
}

fn total_zero() {
    assert_eq!(total_loss(0.0, 0.0, 0.0).unwrap(), 0.0);
}

fn total_sum() {
    assert_close(total_loss(0.3133, LN_2, 0.5).unwrap(), 1.5064, 1e-4);
}

fn total_commutative() {
    let a = total_loss(0.3133, LN_2, 0.5).unwrap();
    for (x, y, z) in [(LN_2, 0.5, 0.3133), (0.5, 0.3133, LN_2)] {
        assert_close(total_loss(x, y, z).unwrap(), a, 1e-15);
    }
}

// postprocessing and metrics

fn timing(duration: f64) -> VideoTiming {
    VideoTiming {
        video_id: "v".into(),
        snippet_stride: 1,
        frame_rate: 1.0,
        duration,
    }
}

fn proposals_gated() {
    let loc = LocalizationOutput {
        fg_prob: vec![0.0; 3],
        d_start: vec![1.0; 3],
        d_end: vec![1.0; 3],
    };
    let vocab = vec!["a".to_string(), "b".to_string()];
    let out = assemble_proposals(&Array2::zeros((3, 2)), &loc, &timing(10.0), &vocab, 10, 1e-3).unwrap();
    assert!(out.is_empty());
}

fn proposals_single() {
    let loc = LocalizationOutput {
        fg_prob: vec![1.0],
        d_start: vec![0.5],
        d_end: vec![0.5],
    };
    let out = assemble_proposals(&array![[2.0]], &loc, &timing(10.0), &["a".to_string()], 5, 0.0).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].score, 1.0);
}

fn proposals_enumeration() {
    let scores = array![[2.0, 0.0], [0.0, 1.0]];
    let loc = LocalizationOutput {
        fg_prob: vec![0.9, 0.6],
        d_start: vec![0.5, 1.0],
        d_end: vec![1.5, 0.25],
    };
    let mut tm = timing(100.0);
    tm.snippet_stride = 4;
    tm.frame_rate = 2.0;
    let vocab = vec!["a".to_string(), "b".to_string()];
    let out = assemble_proposals(&scores, &loc, &tm, &vocab, 10, 0.0).unwrap();
    let e2 = 2f64.exp();
    let e1 = 1f64.exp();
    // (t, class, score, start, end) with 2 seconds per snippet; t=0 clamps at 0
    let mut expected = [
        (0.9 * e2 / (e2 + 1.0), "a", 0.0, 3.0),
        (0.9 / (e2 + 1.0), "b", 0.0, 3.0),
        (0.6 / (1.0 + e1), "a", 0.0, 2.5),
        (0.6 * e1 / (1.0 + e1), "b", 0.0, 2.5),
    ];
    expected.sort_by(|a, b| b.0.total_cmp(&a.0));
    assert_eq!(out.len(), 4);
    for (d, (sc, class, st, en)) in out.iter().zip(expected) {
        assert_close(d.score, sc, 1e-12);
        assert_eq!(d.class_name, class);
        assert_close(d.start, st, 1e-12);
        assert_close(d.end, en, 1e-12);
    }
}

fn det(start: f64, end: f64, score: f64) -> Detection {
    Detection {
        video_id: "v".into(),
        start,
        end,
        class_name: "a".into(),
        score,
    }
}

fn gt(start: f64, end: f64) -> GroundTruth {
    GroundTruth {
        video_id: "v".into(),
        start,
        end,
        label: "a".into(),
    }
}

fn nms_single() {
    let one = vec![det(0.0, 1.0, 0.4)];
    assert_eq!(soft_nms(&one, 0.5, 1e-3).unwrap(), one);
}

fn nms_disjoint() {
    let two = vec![det(0.0, 1.0, 0.9), det(2.0, 3.0, 0.8)];
    assert_eq!(soft_nms(&two, 0.5, 1e-3).unwrap(), two);
}

fn nms_decay() {
    let out = soft_nms(&[det(0.0, 1.0, 0.9), det(0.0, 1.0, 0.8)], 0.5, 1e-3).unwrap();
    assert_eq!(out[0].score, 0.9);
    assert_close(out[1].score, 0.8 * (-2f64).exp(), 1e-12);
    assert_close(out[1].score, 0.1083, 1e-4);
}

fn tiou_identical() {
    assert_eq!(tiou(Interval::new(1.0, 2.0), Interval::new(1.0, 2.0)).unwrap(), 1.0);
}

fn tiou_disjoint() {
    assert_eq!(tiou(Interval::new(0.0, 1.0), Interval::new(2.0, 3.0)).unwrap(), 0.0);
}

fn tiou_overlap() {
    assert_close(
        tiou(Interval::new(0.0, 2.0), Interval::new(1.0, 3.0)).unwrap(),
        1.0 / 3.0,
        1e-15,
    );
}

fn ap_perfect() {
    assert_eq!(average_precision(&[det(1.0, 3.0, 0.7)], &[gt(1.0, 3.0)], 0.5), 1.0);
}

fn ap_empty() {
    assert_eq!(average_precision(&[], &[gt(1.0, 3.0)], 0.5), 0.0);
}

fn ap_three() {
    let dets = [det(0.0, 2.0, 0.9), det(10.0, 12.0, 0.8), det(5.0, 7.0, 0.7)];
    let gts = [gt(0.0, 2.0), gt(5.0, 7.0)];
    // precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1; envelope gives 1 and 2/3
    assert_close(average_precision(&dets, &gts, 0.5), 0.5 + 0.5 * 2.0 / 3.0, 1e-12);
}

fn map_perfect() {
    let r = mean_ap(&[det(1.0, 3.0, 0.7)], &[gt(1.0, 3.0)], &EvalConfig::thumos()).unwrap();
    assert!(r.map.iter().all(|&m| m == 1.0));
    assert_eq!(r.average, 1.0);
}

fn map_shifted() {
    // [a, a + 10] against [0, 10]: tIoU (10 - a) / (10 + a) = 0.45
    let a = 10.0 * 0.55 / 1.45;
    assert_close(
        tiou(Interval::new(a, a + 10.0), Interval::new(0.0, 10.0)).unwrap(),
        0.45,
        1e-12,
    );
    let cfg = EvalConfig::new(vec![0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
    let r = mean_ap(&[det(a, a + 10.0, 0.9)], &[gt(0.0, 10.0)], &cfg).unwrap();
    assert_eq!(r.map, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
}

fn map_single() {
    let dets = [det(0.0, 2.0, 0.9), det(10.0, 12.0, 0.8), det(5.0, 7.0, 0.7)];
    let gts = [gt(0.0, 2.0), gt(5.0, 7.0)];
    let r = mean_ap(&dets, &gts, &EvalConfig::new(vec![0.5]).unwrap()).unwrap();
    assert_eq!(r.average, r.map[0]);
}

// data

fn tiny_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_classes: 2,
        n_videos: 4,
        t_min: 20,
        t_max: 30,
        instance_min: 6,
        instance_max: 10,
        ..SyntheticSpec::default()
    }
}

fn synthetic_noiseless() {
    let spec = SyntheticSpec {
        n_classes: 1,
        n_videos: 1,
        max_instances: 1,
        noise_std: 0.0,
        ..tiny_spec()
    };
    let b = generate_synthetic(&spec).unwrap();
    let video = &b.dataset.manifest.videos[0];
    let x = &b.dataset.features[&video.video_id].features;
    let ann = &b.dataset.manifest.annotations_for(&video.video_id)[0];
    let sps = video.seconds_per_snippet();
    let (a, last) = (
        (ann.start_sec / sps).round() as usize,
        (ann.end_sec / sps).round() as usize,
    );
    let mut phase = 0;
    for t in a..=last {
        let matches = |k: usize| {
            x.row(t)
                .iter()
                .zip(&b.prototypes[0][k])
                .all(|(v, p)| *v == *p as f32 as f64)
        };
        while phase < 3 && !matches(phase) {
            phase += 1;
        }
        assert!(phase < 3, "snippet {t} is not a prototype in start, middle, end order");
    }
    assert_eq!(phase, 2);
}

fn synthetic_determinism() {
    let a = generate_synthetic(&tiny_spec()).unwrap();
    let b = generate_synthetic(&tiny_spec()).unwrap();
    assert_eq!(a.dataset.manifest, b.dataset.manifest);
    for (id, seq) in &a.dataset.features {
        let other = &b.dataset.features[id];
        assert_eq!(
            encode_features(&seq.features).unwrap(),
            encode_features(&other.features).unwrap()
        );
    }
    assert_eq!(a.descriptions, b.descriptions);
}

fn synthetic_shared_text() {
    let spec = SyntheticSpec {
        noise_std: 0.0,
        text_noise_std: 0.0,
        shared_phase_pairs: vec![SharedPhase {
            class_a: 0,
            class_b: 1,
            phase: Phase::Start,
        }],
        ..tiny_spec()
    };
    let b = generate_synthetic(&spec).unwrap();
    let vocab = b.dataset.manifest.vocabulary.clone();
    let e = encode_texts(
        &vocab,
        TextSource::Phase(Phase::Start),
        &PhaseSet::canonical(),
        &b.descriptions,
        &b.encoder,
    )
    .unwrap();
    let cos = e.row(0).dot(&e.row(1)) / (e.row(0).dot(&e.row(0)).sqrt() * e.row(1).dot(&e.row(1)).sqrt());
    assert_close(cos, 1.0, 1e-12);
    assert_eq!(b.encoder.dim(), spec.phase_prototype_dim);
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i:02}")).collect()
}

fn split_twenty() {
    let s = &make_splits(&names(20), 0.5, 1, 0).unwrap()[0];
    assert_eq!((s.seen.len(), s.unseen.len()), (10, 10));
}

fn split_rounding() {
    let s = &make_splits(&names(4), 0.75, 1, 0).unwrap()[0];
    assert_eq!((s.seen.len(), s.unseen.len()), (3, 1));
}

fn split_determinism() {
    assert_eq!(
        make_splits(&names(12), 0.5, 3, 9).unwrap(),
        make_splits(&names(12), 0.5, 3, 9).unwrap()
    );
}

fn features_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pdaf");
    let x = random_matrix(&mut rng(43), 5, 3, 4.0).mapv(|v| v as f32 as f64);
    write_features(&FeatureSequence::new("x", x.clone(), 8).unwrap(), &path).unwrap();
    let back = read_features(&path, "x", 8).unwrap();
    assert_eq!(back.features, x);
    assert_eq!(std::fs::read(&path).unwrap(), encode_features(&x).unwrap());
}

fn features_bad_magic() {
    let mut bytes = encode_features(&Array2::ones((2, 2))).unwrap();
    bytes[0] = b'X';
    assert!(matches!(decode_features(&bytes), Err(PdaError::Format(_))));
}

fn features_empty() {
    let mut bytes = encode_features(&Array2::ones((1, 2))).unwrap();
    // T lives after the magic and version
    bytes[6..10].copy_from_slice(&0u32.to_le_bytes());
    bytes.truncate(14);
    assert!(matches!(decode_features(&bytes), Err(PdaError::Format(_))));
}

// training and evaluation

fn desk_data() -> pda_core::data::SyntheticBundle {
    generate_synthetic(&SyntheticSpec {
        n_classes: 2,
        n_videos: 20,
        t_min: 24,
        t_max: 40,
        instance_min: 6,
        instance_max: 12,
        seed: 5,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn desk_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 1e-3,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn train_reduces_loss() {
    let b = desk_data();
    let vocab = b.dataset.manifest.vocabulary.clone();
    let out = train(&b.dataset, &vocab, &desk_config(5), &b.descriptions, &b.encoder).unwrap();
    assert!(out.curve.last().unwrap().loss.total < out.curve[0].loss.total);
}

fn train_zero_rate() {
    let b = desk_data();
    let vocab = b.dataset.manifest.vocabulary.clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..desk_config(3)
    };
    let out = train(&b.dataset, &vocab, &cfg, &b.descriptions, &b.encoder).unwrap();
    let init = initial_checkpoint(&cfg, &vocab).unwrap();
    for id in out.checkpoint.params.ids() {
        assert_eq!(out.checkpoint.params.value(id), init.params.value(id));
    }
}

fn train_determinism() {
    let b = desk_data();
    let vocab = b.dataset.manifest.vocabulary.clone();
    let a = train(&b.dataset, &vocab, &desk_config(3), &b.descriptions, &b.encoder).unwrap();
    let c = train(&b.dataset, &vocab, &desk_config(3), &b.descriptions, &b.encoder).unwrap();
    assert_eq!(a.curve, c.curve);
}

fn detect_empty_vocab() {
    let b = desk_data();
    let vocab = b.dataset.manifest.vocabulary.clone();
    let ckpt = initial_checkpoint(&desk_config(3), &vocab).unwrap();
    let videos: Vec<_> = b.dataset.manifest.videos.iter().collect();
    let err = detect(&ckpt, &b.dataset, &videos, &[], &b.descriptions, &b.encoder).unwrap_err();
    assert!(matches!(err, PdaError::InvalidArgument(_)));
}

fn detect_beats_untrained() {
    let b = desk_data();
    let vocab = b.dataset.manifest.vocabulary.clone();
    let cfg = desk_config(10);
    let videos: Vec<_> = b.dataset.manifest.videos.iter().collect();
    let score = |ckpt| {
        let dets = detect(ckpt, &b.dataset, &videos, &vocab, &b.descriptions, &b.encoder).unwrap();
        evaluate(&dets, &b.dataset, &videos, &vocab, &EvalConfig::thumos())
            .unwrap()
            .average
    };
    let init = initial_checkpoint(&cfg, &vocab).unwrap();
    let trained = train(&b.dataset, &vocab, &cfg, &b.descriptions, &b.encoder)
        .unwrap()
        .checkpoint;
    let (untrained, trained) = (score(&init), score(&trained));
    assert!(trained > untrained, "trained {trained} vs untrained {untrained}");
}

fn ablation_setup() -> (pda_core::data::SyntheticBundle, Vec<pda_core::data::OpenVocabSplit>) {
    let b = generate_synthetic(&SyntheticSpec {
        n_classes: 4,
        n_videos: 16,
        t_min: 24,
        t_max: 32,
        instance_min: 6,
        instance_max: 10,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let splits = make_splits(&b.dataset.manifest.vocabulary, 0.5, 1, 0).unwrap();
    (b, splits)
}

fn ablation_one_cell() {
    let (b, splits) = ablation_setup();
    let grid = [AblationCell {
        name: "base".into(),
        config: desk_config(2),
    }];
    let rows = run_ablation(
        &b.dataset,
        &splits,
        &grid,
        &b.descriptions,
        &b.encoder,
        &EvalConfig::thumos(),
    )
    .unwrap();
    let csv = ablation_csv(&rows);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("base,"));
}

fn ablation_identical() {
    let (b, splits) = ablation_setup();
    let cell = AblationCell {
        name: "same".into(),
        config: desk_config(2),
    };
    let grid = [cell.clone(), cell];
    let rows = run_ablation(
        &b.dataset,
        &splits,
        &grid,
        &b.descriptions,
        &b.encoder,
        &EvalConfig::thumos(),
    )
    .unwrap();
    assert_eq!(rows[0], rows[1]);
}
