use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_inputs;
use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn matmul_by_identity_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 3]);
    let mut tape = Tape::new();
    let i = tape.input(Tensor::eye(3));
    let av = tape.input(a.clone());
    let out = tape.matmul(i, av).unwrap();
    assert_eq!(tape.value(out), &a);
}

#[test]
fn matmul_hand_example() {
    let mut tape = Tape::new();
    let a = tape.input(Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let b = tape.input(Tensor::matrix(&[vec![1.0], vec![1.0]]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).shape(), &[2, 1]);
    assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.input(Tensor::zeros(&[2, 3]));
    let b = tape.input(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]"), "{err}");
}

#[test]
fn sum_of_matmul_gradient_is_b_transpose_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[2, 3]);
    let b = rand_tensor(&mut rng, &[3, 4]);
    let mut tape = Tape::new();
    let av = tape.leaf(a, true);
    let bv = tape.input(b.clone());
    let c = tape.matmul(av, bv).unwrap();
    let s = tape.sum(c).unwrap();
    let g = tape.backward(s).unwrap();
    let ga = g.leaf(av).unwrap();
    for i in 0..2 {
        for k in 0..3 {
            let row_sum: f64 = b.row(k).iter().sum();
            assert!((ga.data()[i * 3 + k] - row_sum).abs() < 1e-12);
        }
    }
    let rep = check_inputs(&[ga.clone(), b], |t, v| {
        let c = t.matmul(v[0], v[1])?;
        t.sum(c)
    })
    .unwrap();
    assert!(rep.max_rel_err < 1e-4);
}

#[test]
fn softmax_examples() {
    assert_eq!(softmax(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
    let big = softmax(&[1000.0, 0.0]);
    assert!(big.iter().all(|v| v.is_finite()));
    assert!((big[0] - 1.0).abs() < 1e-12 && big[1] < 1e-300);
    let p = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]);
    for (got, want) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn softmax_axis_zero_normalizes_columns() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::matrix(&[vec![1.0, 5.0], vec![2.0, -1.0], vec![0.5, 0.0]]).unwrap());
    let y = tape.softmax(x, 0).unwrap();
    let v = tape.value(y);
    for c in 0..2 {
        let s: f64 = (0..3).map(|r| v.data()[r * 2 + c]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sigmoid_examples() {
    assert_eq!(sigmoid(0.0), 0.5);
    for x in [0.3, 5.0, 700.0, 1000.0] {
        assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
    }
    assert!((sigmoid(2.0) - 0.8807970779778823).abs() < 1e-15);
    assert!(sigmoid(-1000.0).is_finite());
}

#[test]
fn bce_examples() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::vector(vec![0.0]));
    let l = tape.bce_with_logits(x, &Tensor::vector(vec![1.0]), None).unwrap();
    assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);

    let x = tape.input(Tensor::vector(vec![100.0]));
    let l = tape.bce_with_logits(x, &Tensor::vector(vec![1.0]), None).unwrap();
    let v = tape.value(l).item();
    assert!(v.is_finite() && v < 1e-40);

    let x = tape.input(Tensor::vector(vec![0.0]));
    assert!(tape.bce_with_logits(x, &Tensor::vector(vec![1.5]), None).is_err());
}

#[test]
fn bce_weights_scale_terms() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::vector(vec![0.0, 0.0]));
    let t = Tensor::vector(vec![1.0, 0.0]);
    let w = Tensor::vector(vec![2.0, 0.0]);
    let l = tape.bce_with_logits(x, &t, Some(&w)).unwrap();
    // (2·ln2 + 0) / 2
    assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(&[1, 3]));
    let l = tape.cross_entropy(x, &[1]).unwrap();
    assert!((tape.value(l).item() - 3f64.ln()).abs() < 1e-12);

    let x = tape.input(Tensor::matrix(&[vec![0.0, 1000.0, 0.0]]).unwrap());
    let l = tape.cross_entropy(x, &[1]).unwrap();
    assert!(tape.value(l).item().abs() < 1e-12);

    let x = tape.input(Tensor::matrix(&[vec![1.0, 2.0, 3.0]]).unwrap());
    let l = tape.cross_entropy(x, &[2]).unwrap();
    assert!((tape.value(l).item() - 0.4076059644443804).abs() < 1e-12);

    assert!(tape.cross_entropy(x, &[3]).is_err());
}

#[test]
fn elementwise_examples() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::vector(vec![-3.0, 3.0]));
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0, 3.0]);

    let a = tape.input(Tensor::zeros(&[768]));
    let b = tape.input(Tensor::zeros(&[128]));
    let c = tape.input(Tensor::zeros(&[128]));
    let cat = tape.concat(&[a, b, c], 0).unwrap();
    assert_eq!(tape.shape(cat), &[1024]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = tape.dropout(x, 0.0, true, &mut rng).unwrap();
    assert_eq!(d, x);
    let d = tape.dropout(x, 0.5, false, &mut rng).unwrap();
    assert_eq!(d, x);

    let bad = tape.input(Tensor::zeros(&[3]));
    assert!(tape.add(x, bad).is_err());
}

#[test]
fn dropout_mask_is_inverted_and_seeded() {
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::full(&[1000], 1.0));
        let y = tape.dropout(x, 0.25, true, &mut rng).unwrap();
        tape.value(y).clone()
    };
    let a = run(9);
    assert_eq!(a, run(9));
    assert!(a.data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
    let kept = a.data().iter().filter(|&&v| v > 0.0).count();
    assert!((650..850).contains(&kept), "{kept}");
}

#[test]
fn backward_contracts() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[2, 3]), true);
    let frozen = tape.leaf(Tensor::zeros(&[2, 3]), false);
    let y = tape.add(x, frozen).unwrap();
    assert!(tape.backward(y).is_err(), "non-scalar loss");
    let s = tape.sum(y).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.leaf(x).unwrap(), &Tensor::full(&[2, 3], 1.0));
    assert!(g.leaf(frozen).is_none());
    assert!(tape.backward(s).is_err(), "tape reuse");
    tape.reset();
    assert!(tape.is_empty());
}

#[test]
fn frozen_params_receive_no_gradient() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::full(&[2], 1.0), Component::Encoder);
    let h = store.add("h", Tensor::full(&[2], 1.0), Component::RelevanceHead);
    store.set_trainable(w, false);
    let mut tape = Tape::new();
    let wv = tape.param(&store, w);
    let hv = tape.param(&store, h);
    let p = tape.mul(wv, hv).unwrap();
    let s = tape.sum(p).unwrap();
    let g = tape.backward(s).unwrap();
    assert!(g.param(w).is_none());
    assert!(g.param(h).is_some());
}

#[test]
fn repeated_param_use_accumulates() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::vector(vec![3.0]), Component::Encoder);
    let mut tape = Tape::new();
    let a = tape.param(&store, w);
    let b = tape.param(&store, w);
    let p = tape.mul(a, b).unwrap();
    let s = tape.sum(p).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.param(w).unwrap().data(), &[6.0]);
}

/// Every differentiable op against central finite differences on inputs
/// drawn from [-2, 2].
#[test]
fn every_op_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = |rng: &mut ChaCha8Rng, s: &[usize]| rand_tensor(rng, s);
    type Case = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> crate::Result<Var>>);
    let weights = r(&mut rng, &[3, 4]);
    let cases: Vec<Case> = vec![
        ("matmul", vec![r(&mut rng, &[3, 4]), r(&mut rng, &[4, 2])], Box::new(|t, v| {
            let m = t.matmul(v[0], v[1])?;
            let m2 = t.mul(m, m)?;
            t.sum(m2)
        })),
        ("transpose", vec![r(&mut rng, &[2, 3]), r(&mut rng, &[2, 3])], Box::new(|t, v| {
            let a = t.transpose(v[0])?;
            let m = t.matmul(a, v[1])?;
            t.sum(m)
        })),
        ("add_sub_mul", vec![r(&mut rng, &[5]), r(&mut rng, &[5])], Box::new(|t, v| {
            let a = t.add(v[0], v[1])?;
            let s = t.sub(a, v[1])?;
            let m = t.mul(s, v[1])?;
            let m = t.mul_scalar(m, 0.7)?;
            let m = t.add_scalar(m, 1.3)?;
            let m = t.mul(m, m)?;
            t.mean(m)
        })),
        ("add_row_bias", vec![r(&mut rng, &[3, 4]), r(&mut rng, &[4])], Box::new(|t, v| {
            let y = t.add_row_bias(v[0], v[1])?;
            let y = t.mul(y, y)?;
            t.sum(y)
        })),
        ("relu", vec![r(&mut rng, &[8])], Box::new(|t, v| {
            let y = t.relu(v[0])?;
            let y = t.mul(y, y)?;
            t.sum(y)
        })),
        ("sigmoid", vec![r(&mut rng, &[6])], Box::new(|t, v| {
            let y = t.sigmoid(v[0])?;
            let y = t.mul(y, y)?;
            t.sum(y)
        })),
        ("softmax_rows", vec![r(&mut rng, &[3, 5])], Box::new(move |t, v| {
            let y = t.softmax(v[0], 1)?;
            let w = t.input(weights.clone().reshaped(&[3, 4]).unwrap());
            let w = t.concat(&[w, w], 1)?;
            let w = t.slice(w, 1, 0, 5)?;
            let p = t.mul(y, w)?;
            t.sum(p)
        })),
        ("softmax_cols", vec![r(&mut rng, &[4, 2])], Box::new(|t, v| {
            let y = t.softmax(v[0], 0)?;
            let y2 = t.mul(y, v[0])?;
            t.sum(y2)
        })),
        ("layer_norm", vec![r(&mut rng, &[3, 6]), r(&mut rng, &[6]), r(&mut rng, &[6]), r(&mut rng, &[3, 6])], Box::new(|t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            let p = t.mul(y, v[3])?;
            t.sum(p)
        })),
        ("dropout", vec![r(&mut rng, &[10])], Box::new(|t, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let y = t.dropout(v[0], 0.3, true, &mut rng)?;
            let y = t.mul(y, y)?;
            t.sum(y)
        })),
        ("concat_slice", vec![r(&mut rng, &[2, 3]), r(&mut rng, &[2, 2])], Box::new(|t, v| {
            let c = t.concat(&[v[0], v[1]], 1)?;
            let s = t.slice(c, 1, 1, 4)?;
            let s2 = t.mul(s, s)?;
            let c0 = t.concat(&[v[0], v[0]], 0)?;
            let r1 = t.row(c0, 3)?;
            let r1 = t.mul(r1, r1)?;
            let a = t.sum(s2)?;
            let b = t.sum(r1)?;
            t.add(a, b)
        })),
        ("mean_pool", vec![r(&mut rng, &[4, 3])], Box::new(|t, v| {
            let m0 = t.mean_pool(v[0], 0)?;
            let m1 = t.mean_pool(v[0], 1)?;
            let a = t.mul(m0, m0)?;
            let b = t.mul(m1, m1)?;
            let a = t.sum(a)?;
            let b = t.sum(b)?;
            t.add(a, b)
        })),
        ("reshape", vec![r(&mut rng, &[2, 3])], Box::new(|t, v| {
            let y = t.reshape(v[0], &[3, 2])?;
            let z = t.matmul(v[0], y)?;
            t.sum(z)
        })),
        ("embedding", vec![r(&mut rng, &[5, 3])], Box::new(|t, v| {
            let e = t.embedding(v[0], &[0, 2, 2, 4])?;
            let e = t.mul(e, e)?;
            t.sum(e)
        })),
        ("bce_with_logits", vec![r(&mut rng, &[5])], Box::new(|t, v| {
            let targets = Tensor::vector(vec![1.0, 0.0, 0.3, 1.0, 0.0]);
            let w = Tensor::vector(vec![1.0, 2.0, 0.5, 1.0, 3.0]);
            t.bce_with_logits(v[0], &targets, Some(&w))
        })),
        ("cross_entropy", vec![r(&mut rng, &[4, 3])], Box::new(|t, v| t.cross_entropy(v[0], &[0, 2, 1, 2]))),
    ];
    for (name, inputs, f) in cases {
        let rep = check_inputs(&inputs, f).unwrap();
        assert!(rep.checked > 0);
        assert!(rep.max_rel_err < 1e-4, "{name}: {rep:?}");
    }
}

#[test]
fn same_seed_same_ops_bitwise_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = rand_tensor(&mut rng, &[4, 4]);
        let mut tape = Tape::new();
        let v = tape.input(x);
        let d = tape.dropout(v, 0.2, true, &mut rng).unwrap();
        let s = tape.softmax(d, 1).unwrap();
        let m = tape.matmul(s, d).unwrap();
        tape.value(m).clone()
    };
    assert_eq!(run().data(), run().data());
}
