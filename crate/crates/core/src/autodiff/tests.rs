use super::gradcheck::{check_params, relative_error, DEFAULT_STEP, DEFAULT_TOLERANCE};
use super::*;
use crate::error::Error;
use proptest::prelude::*;

fn m(rows: &[&[f64]]) -> Tensor<f64> {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn grad_leaf(t: Tensor<f64>) -> Tensor<f64> {
    t.with_grad()
}

#[test]
fn matmul_identity() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let a = tape.leaf(&m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let i = tape.leaf(&m(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let y = tape.matmul(a, i).unwrap();
    assert_eq!(tape.value(y), &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(tape.shape(y), &[2, 2]);
}

#[test]
fn matmul_basis_selection() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let a = tape.leaf(&m(&[&[1.0, 0.0]]));
    let b = tape.leaf(&m(&[&[2.0], &[5.0]]));
    let y = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(y), &[2.0]);
}

#[test]
fn matmul_shape_mismatch() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let a = tape.leaf(&m(&[&[1.0, 0.0, 2.0]]));
    let b = tape.leaf(&m(&[&[2.0], &[5.0]]));
    assert!(matches!(tape.matmul(a, b), Err(Error::Dimension { .. })));
}

#[test]
fn activations_at_zero() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let z = tape.leaf(&Tensor::scalar(0.0));
    let s = tape.sigmoid(z);
    let t = tape.tanh(z);
    assert_eq!(tape.value(s), &[0.5]);
    assert_eq!(tape.value(t), &[0.0]);
}

#[test]
fn sigmoid_large_inputs_stable() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let x = tape.leaf(&Tensor::vector(&[40.0, -40.0, 800.0, -800.0]).unwrap());
    let s = tape.sigmoid(x);
    let v = tape.value(s);
    let closed = |x: f64| if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { x.exp() / (1.0 + x.exp()) };
    for (&got, x) in v.iter().zip([40.0, -40.0, 800.0, -800.0]) {
        assert!(got.is_finite() && (0.0..=1.0).contains(&got));
        assert_eq!(got, closed(x));
    }
}

#[test]
fn concat_columns_and_identity() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let a = tape.leaf(&m(&[&[1.0], &[2.0]]));
    let b = tape.leaf(&m(&[&[3.0], &[4.0]]));
    let y = tape.concat(&[a, b], 1).unwrap();
    assert_eq!(tape.value(y), &[1.0, 3.0, 2.0, 4.0]);
    assert_eq!(tape.shape(y), &[2, 2]);
    let one = tape.concat(&[a], 0).unwrap();
    assert_eq!(tape.value(one), tape.value(a));
    assert_eq!(tape.shape(one), tape.shape(a));
}

#[test]
fn max_over_time_values() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let a = tape.leaf(&m(&[&[1.0, 5.0], &[3.0, 2.0]]));
    let y = tape.max_over_time(a).unwrap();
    assert_eq!(tape.value(y), &[3.0, 5.0]);
    let r = tape.leaf(&m(&[&[7.0, -1.0]]));
    let y = tape.max_over_time(r).unwrap();
    assert_eq!(tape.value(y), &[7.0, -1.0]);
}

#[test]
fn max_over_time_tie_routes_to_first_row() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let a = tape.leaf(&grad_leaf(m(&[&[2.0, 2.0], &[2.0, 2.0]])));
    let y = tape.max_over_time(a).unwrap();
    let loss = tape.sum(y);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(a).unwrap(), &[1.0, 1.0, 0.0, 0.0]);
}

/// Nested-loop valid convolution: out[t][f] = b[f] + sum_{k,d} x[t+k][d] W[k*D+d][f].
fn conv_oracle(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64], width: usize) -> Vec<f64> {
    let d = x[0].len();
    let mut out = Vec::new();
    for t in 0..=x.len() - width {
        for f in 0..b.len() {
            let mut acc = b[f];
            for k in 0..width {
                for j in 0..d {
                    acc += x[t + k][j] * w[k * d + j][f];
                }
            }
            out.push(acc);
        }
    }
    out
}

#[test]
fn conv_width_one_ones_is_row_sum() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let x = tape.leaf(&m(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 0.0]]));
    let w = tape.leaf(&m(&[&[1.0], &[1.0], &[1.0]]));
    let b = tape.leaf(&Tensor::vector(&[0.0]).unwrap());
    let y = tape.conv1d(x, w, b, 1).unwrap();
    assert_eq!(tape.value(y), &[6.0, -0.5]);
}

#[test]
fn conv_one_hot_filter_selects_first_channel() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let x = tape.leaf(&m(&[&[1.0, 9.0], &[2.0, 9.0], &[3.0, 9.0]]));
    let w = tape.leaf(&m(&[&[1.0], &[0.0], &[0.0], &[0.0]]));
    let b = tape.leaf(&Tensor::vector(&[0.0]).unwrap());
    let y = tape.conv1d(x, w, b, 2).unwrap();
    assert_eq!(tape.value(y), &[1.0, 2.0]);
}

proptest! {
    #[test]
    fn conv_matches_nested_loops(
        t in 3usize..7,
        width in 1usize..4,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (d, f) = (3, 2);
        let x: Vec<Vec<f64>> = (0..t).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let w: Vec<Vec<f64>> = (0..width * d).map(|_| (0..f).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let b: Vec<f64> = (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let xv = tape.leaf(&Tensor::from_rows(&x).unwrap());
        let wv = tape.leaf(&Tensor::from_rows(&w).unwrap());
        let bv = tape.leaf(&Tensor::vector(&b).unwrap());
        let y = tape.conv1d(xv, wv, bv, width).unwrap();
        let oracle = conv_oracle(&x, &w, &b, width);
        for (a, o) in tape.value(y).iter().zip(&oracle) {
            prop_assert!((a - o).abs() <= 1e-12 * (1.0 + o.abs()));
        }
        prop_assert_eq!(tape.value(y).len(), oracle.len());
    }

    #[test]
    fn bounded_activations(x in -1e6f64..1e6) {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let v = tape.leaf(&Tensor::scalar(x));
        let s = tape.sigmoid(v);
        let t = tape.tanh(v);
        prop_assert!((0.0..=1.0).contains(&tape.value(s)[0]));
        prop_assert!((-1.0..=1.0).contains(&tape.value(t)[0]));
    }
}

#[test]
fn sum_gradient_is_ones() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let x = tape.leaf(&grad_leaf(Tensor::vector(&[1.0, 2.0, 3.0]).unwrap()));
    let loss = tape.sum(x);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn sigmoid_product_at_origin_has_zero_weight_grad() {
    let mut store = ParamStore::<f64>::new();
    let w = store.register("w", Tensor::scalar(0.0)).unwrap();
    let mut tape = Tape::new(&store);
    let x = tape.leaf(&Tensor::scalar(0.0));
    let wv = tape.param(w);
    let wx = tape.mul(wv, x).unwrap();
    let loss = tape.sigmoid(wx);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.param_dense(w, &store).unwrap(), vec![0.0]);
}

#[test]
fn unreached_parameter_stays_unset() {
    let mut store = ParamStore::<f64>::new();
    let used = store.register("used", Tensor::vector(&[1.0, 2.0]).unwrap()).unwrap();
    let idle = store.register("idle", Tensor::vector(&[3.0]).unwrap()).unwrap();
    let mut tape = Tape::new(&store);
    let u = tape.param(used);
    let loss = tape.sum(u);
    let g = tape.backward(loss).unwrap();
    assert!(g.param(idle).is_none());
    assert_eq!(g.reached_params().collect::<Vec<_>>(), vec![used]);
}

#[test]
fn embed_rows() {
    let mut store = ParamStore::<f64>::new();
    let rows: Vec<Vec<f64>> = (0..6).map(|i| if i == 0 { vec![0.0, 0.0] } else { vec![i as f64, -(i as f64)] }).collect();
    let table = store.register("emb", Tensor::from_rows(&rows).unwrap()).unwrap();
    let mut tape = Tape::new(&store);
    let pad = tape.embed(table, &[0], true, true).unwrap();
    assert_eq!(tape.value(pad), &[0.0, 0.0]);
    let twice = tape.embed(table, &[3, 3], true, true).unwrap();
    assert_eq!(tape.value(twice), &[3.0, -3.0, 3.0, -3.0]);
    let five = tape.embed(table, &[5], true, true).unwrap();
    let loss = tape.sum(five);
    let g = tape.backward(loss).unwrap();
    let dense = g.param_dense(table, &store).unwrap();
    let expected: Vec<f64> = (0..12).map(|i| if i / 2 == 5 { 1.0 } else { 0.0 }).collect();
    assert_eq!(dense, expected);
}

#[test]
fn embed_padding_row_gets_no_gradient() {
    let mut store = ParamStore::<f64>::new();
    let table = store.register("emb", Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap()).unwrap();
    let mut tape = Tape::new(&store);
    let e = tape.embed(table, &[0, 1, 0], true, true).unwrap();
    let loss = tape.sum(e);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.param_dense(table, &store).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn frozen_embedding_is_not_reached() {
    let mut store = ParamStore::<f64>::new();
    let table = store.register("emb", Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap()).unwrap();
    let mut tape = Tape::new(&store);
    let e = tape.embed(table, &[1], false, true).unwrap();
    let loss = tape.sum(e);
    let g = tape.backward(loss).unwrap();
    assert!(g.param(table).is_none());
}

#[test]
fn broadcast_rules() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let a = tape.leaf(&m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let row = tape.leaf(&Tensor::vector(&[10.0, 20.0]).unwrap());
    let s = tape.leaf(&Tensor::scalar(2.0));
    let y = tape.add(a, row).unwrap();
    assert_eq!(tape.value(y), &[11.0, 22.0, 13.0, 24.0]);
    let y = tape.mul(a, s).unwrap();
    assert_eq!(tape.value(y), &[2.0, 4.0, 6.0, 8.0]);
    let bad = tape.leaf(&Tensor::vector(&[1.0, 2.0, 3.0]).unwrap());
    assert!(tape.add(a, bad).is_err());
}

#[test]
fn bce_half_is_ln2() {
    let store = ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let p = tape.leaf(&Tensor::vector(&[0.5]).unwrap());
    let l = tape.bce(p, &[1.0], 1e-7).unwrap();
    assert!((tape.value(l)[0] - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let (mut store, ids) = random_store(7);
        let checks = check_params(&mut store, None, DEFAULT_STEP, |t| composed(t, &ids, 5)).unwrap();
        let mut tape = Tape::new(&store);
        let loss = composed(&mut tape, &ids, 5).unwrap();
        let g = tape.backward(loss).unwrap();
        let grads: Vec<Vec<f64>> = ids.iter().map(|&id| g.param_dense(id, &store).unwrap_or_default()).collect();
        (tape.value(loss).to_vec(), grads, checks.len())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    for (ga, gb) in a.1.iter().zip(&b.1) {
        assert_eq!(ga.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), gb.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn backward_is_linear() {
    let (store, ids) = random_store(3);
    let grads_of = |mix: Option<(f64, f64)>| {
        let mut tape = Tape::new(&store);
        let f = composed(&mut tape, &ids, 2).unwrap();
        let g = composed(&mut tape, &ids, 4).unwrap();
        let loss = match mix {
            Some((a, b)) => {
                let fa = tape.scale(f, a);
                let gb = tape.scale(g, b);
                tape.add(fa, gb).unwrap()
            }
            None => f,
        };
        let gr = tape.backward(loss).unwrap();
        let gf = tape.backward(f).unwrap();
        let gg = tape.backward(g).unwrap();
        ids.iter()
            .map(|&id| {
                let z = || vec![0.0; store.get(id).len()];
                (
                    gr.param_dense(id, &store).unwrap_or_else(z),
                    gf.param_dense(id, &store).unwrap_or_else(z),
                    gg.param_dense(id, &store).unwrap_or_else(z),
                )
            })
            .collect::<Vec<_>>()
    };
    let (a, b) = (0.7, -2.5);
    for (mixed, gf, gg) in grads_of(Some((a, b))) {
        for i in 0..mixed.len() {
            let expect = a * gf[i] + b * gg[i];
            assert!((mixed[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }
}

fn random_store(seed: u64) -> (ParamStore<f64>, Vec<ParamId>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let ids = vec![
        store.register("x", Tensor::new(vec![4, 3], v(12)).unwrap()).unwrap(),
        store.register("W", Tensor::new(vec![3, 3], v(9)).unwrap()).unwrap(),
        store.register("b", Tensor::new(vec![3], v(3)).unwrap()).unwrap(),
        store.register("conv", Tensor::new(vec![6, 3], v(18)).unwrap()).unwrap(),
    ];
    (store, ids)
}

/// A graph of `depth` layers cycling through the primitives; depth <= 6.
fn composed(t: &mut Tape<'_, f64>, ids: &[ParamId], depth: usize) -> crate::error::Result<Var> {
    let (x, w, b, conv) = (t.param(ids[0]), t.param(ids[1]), t.param(ids[2]), t.param(ids[3]));
    let mut h = x;
    for layer in 0..depth {
        h = match layer % 6 {
            0 => t.matmul(h, w)?,
            1 => {
                let s = t.add(h, b)?;
                t.tanh(s)
            }
            2 => t.conv1d(h, conv, b, 2).or_else(|_| Ok::<_, crate::error::Error>(h))?,
            3 => {
                let s = t.sigmoid(h);
                t.mul(s, h)?
            }
            4 => {
                let c = t.concat(&[h, h], 0)?;
                t.scale(c, 0.5)
            }
            _ => t.sub(h, b)?,
        };
    }
    let pooled = t.max_over_time(h)?;
    let sq = t.mul(pooled, pooled)?;
    Ok(t.sum(sq))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn composed_graphs_match_finite_differences(seed in any::<u64>(), depth in 1usize..=6) {
        let (mut store, ids) = random_store(seed);
        let report = check_params(&mut store, None, DEFAULT_STEP, |t| composed(t, &ids, depth)).unwrap();
        for c in report {
            prop_assert!(c.max_rel_err <= DEFAULT_TOLERANCE, "{} err {}", c.name, c.max_rel_err);
        }
    }
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!(relative_error(1.0, 1.0 + 1e-9) < 1e-8);
}

#[test]
fn primitive_suite_passes() {
    for case in crate::diagnostics::primitive_suite(1).unwrap() {
        assert!(case.max_rel_err() <= DEFAULT_TOLERANCE, "{}: {}", case.case, case.max_rel_err());
    }
}
