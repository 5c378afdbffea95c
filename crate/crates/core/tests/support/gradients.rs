//! Analytic gradients against central finite differences.

use ndarray::Array2;
use pda_core::apa::{
    classify_var, CrossAttention, FusionMlp, LocalizationHeads, WeightInput, WeightMode, WeightingNetwork,
};
use pda_core::backbone::{Backbone, BackboneConfig};
use pda_core::graph::{Graph, Var};
use pda_core::params::ParamStore;
use pda_core::tif::foreground_score_var;
use rand_chacha::ChaCha8Rng;

use super::{random_matrix, randomize, rng, Case};

pub const CASES: &[Case] = &[
    ("backbone", backbone),
    ("cross-attention", cross_attention),
    ("classification scores", classification),
    ("foreground scores", foreground),
    ("weighting network softmax", weighting_softmax),
    ("weighting network sigmoid", weighting_sigmoid),
    ("fusion", fusion),
    ("localization heads", heads),
    ("cross-entropy", cross_entropy),
    ("binary cross-entropy", bce),
    ("diou", diou),
];

const STEP: f64 = 1e-4;
const REL_TOL: f64 = 1e-3;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= REL_TOL * analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Compares gradients of `f` for every parameter entry and every input entry.
fn check<F>(store: &ParamStore, inputs: &[Array2<f64>], f: F)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |store: &ParamStore, inputs: &[Array2<f64>]| {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
        let out = f(&mut g, &vars);
        g.scalar(out)
    };
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let out = f(&mut g, &vars);
    assert_eq!(g.shape(out), (1, 1), "objective must be a scalar");
    let grads = g.backward(out);

    let mut work = store.clone();
    for id in store.ids() {
        let analytic = grads
            .param(id)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(store.value(id).dim()));
        for (idx, &a) in analytic.indexed_iter() {
            let orig = store.value(id)[idx];
            work.value_mut(id)[idx] = orig + STEP;
            let up = eval(&work, inputs);
            work.value_mut(id)[idx] = orig - STEP;
            let down = eval(&work, inputs);
            work.value_mut(id)[idx] = orig;
            let n = (up - down) / (2.0 * STEP);
            assert!(close(a, n), "{}{idx:?}: analytic {a} numeric {n}", store.name(id));
        }
    }
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.input(vars[k]).cloned().unwrap_or_else(|| Array2::zeros(x.dim()));
        let mut moved = inputs.to_vec();
        for (idx, &a) in analytic.indexed_iter() {
            moved[k][idx] = x[idx] + STEP;
            let up = eval(store, &moved);
            moved[k][idx] = x[idx] - STEP;
            let down = eval(store, &moved);
            moved[k][idx] = x[idx];
            let n = (up - down) / (2.0 * STEP);
            assert!(close(a, n), "input {k}{idx:?}: analytic {a} numeric {n}");
        }
    }
}

/// Reduces a matrix output to a scalar through fixed random weights.
fn project(g: &mut Graph, out: Var, seed: u64) -> Var {
    let (t, d) = g.shape(out);
    let mut r = rng(seed);
    let left = g.constant(random_matrix(&mut r, 1, t, 1.0));
    let right = g.constant(random_matrix(&mut r, d, 1, 1.0));
    let col = g.matmul(out, right);
    g.matmul(left, col)
}

fn filled(store: &mut ParamStore, r: &mut ChaCha8Rng) {
    // zero-initialized residual paths would hide their gradients
    randomize(store, r, 0.5);
}

fn backbone() {
    let mut store = ParamStore::default();
    let cfg = BackboneConfig {
        d_in: 5,
        d_model: 8,
        layers: 2,
        heads: 2,
        ffn_hidden: 12,
        max_len: 8,
    };
    let bb = Backbone::new(&mut store, cfg, &mut rng(100)).unwrap();
    let mut r = rng(101);
    filled(&mut store, &mut r);
    let x = random_matrix(&mut r, 6, 5, 1.0);
    check(&store, &[x], |g, v| {
        let out = bb.forward(g, v[0]).unwrap();
        project(g, out.output, 1)
    });
}

fn cross_attention() {
    let mut store = ParamStore::default();
    let ca = CrossAttention::new(&mut store, "ca", 8, 2, &mut rng(102));
    let mut r = rng(103);
    filled(&mut store, &mut r);
    let fv = random_matrix(&mut r, 5, 8, 1.0);
    let bank = random_matrix(&mut r, 3, 8, 1.0);
    check(&store, &[fv, bank], |g, v| {
        let out = ca.forward(g, v[0], v[1]).unwrap();
        project(g, out.output, 2)
    });
}

fn classification() {
    let mut r = rng(104);
    let fbar = random_matrix(&mut r, 4, 6, 1.0);
    let bank = random_matrix(&mut r, 3, 6, 1.0);
    check(&ParamStore::default(), &[fbar, bank], |g, v| {
        let s = classify_var(g, v[0], v[1]).unwrap();
        project(g, s, 3)
    });
}

fn foreground() {
    let mut r = rng(105);
    let fv = random_matrix(&mut r, 6, 4, 1.0);
    let bank = random_matrix(&mut r, 3, 4, 1.0);
    check(&ParamStore::default(), &[fv, bank], |g, v| {
        let s = foreground_score_var(g, v[0], v[1]).unwrap();
        project(g, s, 4)
    });
}

fn weighting(mode: WeightMode, seed: u64) {
    let mut store = ParamStore::default();
    let net = WeightingNetwork::new(&mut store, "w", 8, 4, 2, 6, &mut rng(seed));
    let mut r = rng(seed + 1);
    filled(&mut store, &mut r);
    let fv = random_matrix(&mut r, 5, 8, 1.0);
    check(&store, &[fv], |g, v| {
        let tokens = net.tokens(g, v[0], &[], WeightInput::Pooled);
        let w = net.forward(g, tokens, mode).unwrap();
        project(g, w, seed)
    });
}

fn weighting_softmax() {
    weighting(WeightMode::Softmax, 106);
}

fn weighting_sigmoid() {
    weighting(WeightMode::Sigmoid, 108);
}

fn fusion() {
    let mut store = ParamStore::default();
    let f = FusionMlp::new(&mut store, "f", 4, 4, 10, &mut rng(110));
    let mut r = rng(111);
    filled(&mut store, &mut r);
    let parts: Vec<Array2<f64>> = (0..4).map(|_| random_matrix(&mut r, 3, 4, 1.0)).collect();
    check(&store, &parts, |g, v| {
        let out = f.forward(g, v).unwrap();
        project(g, out, 5)
    });
}

fn heads() {
    let mut store = ParamStore::default();
    let h = LocalizationHeads::new(&mut store, "h", 6, &mut rng(112));
    let mut r = rng(113);
    filled(&mut store, &mut r);
    let fused = random_matrix(&mut r, 5, 6, 1.0);
    check(&store, &[fused], |g, v| {
        let out = h.forward(g, v[0]).unwrap();
        let a = project(g, out.fg_prob, 6);
        let b = project(g, out.d_start, 7);
        let c = project(g, out.d_end, 8);
        let ab = g.add(a, b);
        g.add(ab, c)
    });
}

fn cross_entropy() {
    let logits = random_matrix(&mut rng(114), 5, 4, 2.0);
    check(&ParamStore::default(), &[logits], |g, v| {
        g.cross_entropy(v[0], vec![Some(0), None, Some(3), Some(1), Some(1)])
    });
}

fn bce() {
    let mut r = rng(115);
    let logits = random_matrix(&mut r, 6, 1, 2.0);
    check(&ParamStore::default(), &[logits], |g, v| {
        let p = g.sigmoid(v[0]);
        g.bce(p, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0])
    });
}

fn diou() {
    let mut r = rng(116);
    let ds = random_matrix(&mut r, 6, 1, 1.0).mapv(|v| 1.5 + v);
    let de = random_matrix(&mut r, 6, 1, 1.0).mapv(|v| 1.2 + v);
    let targets = vec![
        Some((0.0, 3.5)),
        Some((0.5, 2.2)),
        None,
        Some((4.1, 9.0)),
        Some((-1.0, 3.3)),
        Some((2.7, 5.9)),
    ];
    check(&ParamStore::default(), &[ds, de], |g, v| {
        g.diou(v[0], v[1], targets.clone())
    });
}
