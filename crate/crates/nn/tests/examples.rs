#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spf_nn::checkpoint::Checkpoint;
use spf_nn::layers::{densenet, forward, init_params, mlp};
use spf_nn::optim::{ema_update, Adam};
use spf_nn::{Activation, LayerSpec, ParamTree, Tape, Tensor};

fn tree_with(entries: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamTree {
    let mut t = ParamTree::new();
    for (n, s, d) in entries {
        t.insert(*n, Tensor::new(s.clone(), d.clone()).unwrap()).unwrap();
    }
    t
}

#[test]
fn identity_dense_layer_passes_input_through() {
    let spec = vec![LayerSpec::Dense { input: 3, output: 3, activation: Activation::Identity }];
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 4] = 1.0;
    }
    let tree = tree_with(&[("d/layer0/weight", vec![3, 3], eye), ("d/layer0/bias", vec![3], vec![0.0; 3])]);
    let mut tape = Tape::new();
    let x = tape.constant(2, 3, vec![1.0, -2.0, 3.5, 0.0, 7.0, -0.25]).unwrap();
    let y = forward(&spec, "p", &tree, "d", x, &mut tape).unwrap();
    assert_eq!(tape.value(y), &[1.0, -2.0, 3.5, 0.0, 7.0, -0.25]);
}

#[test]
fn activation_values() {
    assert_eq!(Activation::Swish.apply(0.0), 0.0);
    assert_eq!(Activation::Relu.apply(-1.0), 0.0);
    assert_eq!(Activation::Tanh.apply(0.0), 0.0);
    assert!((Activation::Swish.apply(2.0) - 2.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
}

#[test]
fn densenet_block_concatenates_input_first() {
    let specs = densenet(4, 1, 3, Activation::Swish);
    assert_eq!(specs[0].output_width(), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tree = ParamTree::new();
    init_params(&specs, "e", &mut rng, false, &mut tree).unwrap();
    let input: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut tape = Tape::new();
    let x = tape.constant(2, 4, input.clone()).unwrap();
    let y = forward(&specs, "p", &tree, "e", x, &mut tape).unwrap();
    assert_eq!(tape.dims(y), (2, 7));
    for r in 0..2 {
        assert_eq!(&tape.value(y)[r * 7..r * 7 + 4], &input[r * 4..r * 4 + 4]);
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let specs = mlp(&[3, 2], Activation::Relu, Activation::Identity);
    let mut tree = ParamTree::new();
    init_params(&specs, "m", &mut ChaCha8Rng::seed_from_u64(0), false, &mut tree).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(1, 4, vec![0.0; 4]).unwrap();
    assert!(forward(&specs, "p", &tree, "m", x, &mut tape).is_err());
    assert!(spf_nn::layers::check_stack(&[
        LayerSpec::Dense { input: 2, output: 3, activation: Activation::Relu },
        LayerSpec::Layernorm { width: 4 },
    ])
    .is_err());
}

#[test]
fn linear_loss_gradient_is_the_input() {
    let x = vec![0.5, -1.5, 2.0, 3.25];
    let tree = tree_with(&[("w", vec![4, 1], vec![0.1, 0.2, 0.3, 0.4])]);
    let mut tape = Tape::new();
    let xv = tape.constant(1, 4, x.clone()).unwrap();
    let w = tape.param("p", &tree, "w").unwrap();
    let y = tape.matmul(xv, w).unwrap();
    let l = tape.sum(y);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get("p", "w").unwrap(), x.as_slice());
}

#[test]
fn disconnected_and_detached_parameters_get_exact_zeros() {
    let mut tree = tree_with(&[("used", vec![2], vec![1.0, 2.0]), ("unused", vec![2], vec![3.0, 4.0])]);
    tree.insert("cut", Tensor::new(vec![2], vec![5.0, 6.0]).unwrap()).unwrap();
    let mut tape = Tape::new();
    let u = tape.param("p", &tree, "used").unwrap();
    let _ = tape.param("p", &tree, "unused").unwrap();
    let c = tape.param("p", &tree, "cut").unwrap();
    let cd = tape.detach(c);
    let s = tape.mul(u, cd).unwrap();
    let l = tape.sum(s);
    let g = tape.backward(l).unwrap();
    g.apply_to("p", &mut tree).unwrap();
    assert_eq!(tree.get("used").unwrap().grad().unwrap(), &[5.0, 6.0]);
    assert_eq!(tree.get("unused").unwrap().grad().unwrap(), &[0.0, 0.0]);
    assert_eq!(tree.get("cut").unwrap().grad().unwrap(), &[0.0, 0.0]);
}

#[test]
fn backward_needs_a_scalar() {
    let mut tape = Tape::new();
    let x = tape.constant(1, 2, vec![1.0, 2.0]).unwrap();
    assert!(tape.backward(x).is_err());
}

#[test]
fn adam_zero_gradient_keeps_parameters_and_decays_moments() {
    let mut fresh = tree_with(&[("w", vec![2], vec![1.0, -1.0])]);
    fresh.get_mut("w").unwrap().set_grad(vec![0.0, 0.0]).unwrap();
    let mut adam = Adam::new(0.1);
    for _ in 0..10 {
        adam.step(&mut fresh).unwrap();
    }
    assert_eq!(fresh.get("w").unwrap().data(), &[1.0, -1.0]);
    assert_eq!(adam.second_moment("w").unwrap(), &[0.0, 0.0]);

    let mut tree = tree_with(&[("w", vec![2], vec![1.0, -1.0])]);
    let mut adam = Adam::new(0.1);
    tree.get_mut("w").unwrap().set_grad(vec![1.0, 1.0]).unwrap();
    adam.step(&mut tree).unwrap();
    let (m1, v1) = (adam.first_moment("w").unwrap()[0], adam.second_moment("w").unwrap()[0]);
    tree.get_mut("w").unwrap().set_grad(vec![0.0, 0.0]).unwrap();
    for _ in 0..5 {
        adam.step(&mut tree).unwrap();
    }
    assert!((adam.first_moment("w").unwrap()[0] - m1 * 0.9f64.powi(5)).abs() < 1e-15);
    assert!((adam.second_moment("w").unwrap()[0] - v1 * 0.999f64.powi(5)).abs() < 1e-15);
}

#[test]
fn adam_constant_gradient_moves_by_lr_times_sign() {
    let mut tree = tree_with(&[("w", vec![3], vec![0.0; 3])]);
    let mut adam = Adam::new(0.01);
    let g = vec![3.0, -0.5, 1e-3];
    let mut prev = vec![0.0; 3];
    for _ in 0..200 {
        tree.get_mut("w").unwrap().set_grad(g.clone()).unwrap();
        adam.step(&mut tree).unwrap();
        let cur = tree.get("w").unwrap().data().to_vec();
        for i in 0..3 {
            let step = cur[i] - prev[i];
            assert!((step + 0.01 * g[i].signum()).abs() < 1e-4 * 0.01 + 1e-9 * (1.0 / g[i].abs()), "{step}");
        }
        prev = cur;
    }
}

#[test]
fn adam_minimizes_a_quadratic() {
    // f(w) = (w − 1)², minimizer 1; Adam travels at most about lr per step
    let mut tree = tree_with(&[("w", vec![1], vec![0.0])]);
    let mut adam = Adam::new(1e-2);
    for _ in 0..500 {
        let mut tape = Tape::new();
        let w = tape.param("p", &tree, "w").unwrap();
        let d = tape.add_scalar(w, -1.0);
        let d = tape.square(d);
        let l = tape.sum(d);
        tape.backward(l).unwrap().apply_to("p", &mut tree).unwrap();
        adam.step(&mut tree).unwrap();
    }
    let w = tree.get("w").unwrap().data()[0];
    assert!((w - 1.0).abs() < 1e-3, "{w}");
}

#[test]
fn adam_moments_round_trip_resumes_identically() {
    let run = |adam: &mut Adam, tree: &mut ParamTree, steps: usize| {
        for i in 0..steps {
            let g = vec![(i as f64).sin(), 0.5 - i as f64 * 0.1];
            tree.get_mut("w").unwrap().set_grad(g).unwrap();
            adam.step(tree).unwrap();
        }
    };
    let mut a = Adam::new(0.05);
    let mut ta = tree_with(&[("w", vec![2], vec![0.3, -0.2])]);
    run(&mut a, &mut ta, 7);
    let mut b = Adam::new(0.05);
    b.import_moments(a.step, &a.export_moments().unwrap()).unwrap();
    let mut tb = ta.clone();
    run(&mut a, &mut ta, 5);
    run(&mut b, &mut tb, 5);
    assert_eq!(ta, tb);
    assert_eq!(a, b);
}

#[test]
fn ema_examples() {
    let online = tree_with(&[("w", vec![3], vec![1.0, -2.0, 0.5])]);
    let mut target = online.clone();
    ema_update(&online, &mut target, 0.37).unwrap();
    assert_eq!(target, online);

    let mut target = tree_with(&[("w", vec![3], vec![9.0, 9.0, -9.0])]);
    ema_update(&online, &mut target, 1.0).unwrap();
    assert_eq!(target, online);

    let start = [4.0, 0.0, -3.0];
    let mut target = tree_with(&[("w", vec![3], start.to_vec())]);
    for _ in 0..50 {
        ema_update(&online, &mut target, 0.01).unwrap();
    }
    for i in 0..3 {
        let th = online.get("w").unwrap().data()[i];
        let want = th + (start[i] - th) * 0.99f64.powi(50);
        assert!((target.get("w").unwrap().data()[i] - want).abs() < 1e-13);
    }

    let other = tree_with(&[("v", vec![3], vec![0.0; 3])]);
    assert!(ema_update(&other, &mut target, 0.5).is_err());
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let specs = densenet(3, 2, 4, Activation::Swish);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tree = ParamTree::new();
        init_params(&specs, "e", &mut rng, false, &mut tree).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, -0.6]).unwrap();
        let y = forward(&specs, "p", &tree, "e", x, &mut tape).unwrap();
        let l = tape.sum(y);
        let g = tape.backward(l).unwrap();
        let gs: Vec<Vec<f64>> = g.iter().map(|(_, _, v)| v.to_vec()).collect();
        (tape.value(y).to_vec(), gs)
    };
    let (a, b) = (run(), run());
    assert_eq!(
        a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.1, b.1);
}

fn sample_checkpoint() -> Checkpoint {
    let specs = mlp(&[3, 5, 2], Activation::Tanh, Activation::Identity);
    let mut tree = ParamTree::new();
    init_params(&specs, "online/net", &mut ChaCha8Rng::seed_from_u64(3), false, &mut tree).unwrap();
    tree.insert("special", Tensor::new(vec![4], vec![f64::NAN, -0.0, f64::MIN_POSITIVE, f64::INFINITY]).unwrap())
        .unwrap();
    Checkpoint::new(1234, tree, serde_json::json!({"rng_word_pos": 99}))
}

fn bits(t: &ParamTree) -> Vec<(String, Vec<usize>, Vec<u64>)> {
    t.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data().iter().map(|v| v.to_bits()).collect())).collect()
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let ck = sample_checkpoint();
    let (m, b) = ck.encode().unwrap();
    let back = Checkpoint::decode(m.as_bytes(), &b).unwrap();
    assert_eq!(back.step, 1234);
    assert_eq!(back.meta, ck.meta);
    assert_eq!(bits(&back.params), bits(&ck.params));

    let dir = std::env::temp_dir().join(format!("spf-nn-ck-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let stem = dir.join("ck");
    ck.save(&stem).unwrap();
    let loaded = Checkpoint::load(&stem).unwrap();
    assert_eq!(bits(&loaded.params), bits(&ck.params));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn checkpoint_rejects_corruption() {
    let (m, b) = sample_checkpoint().encode().unwrap();
    assert!(Checkpoint::decode(m.as_bytes(), &b[..b.len() - 1]).is_err());
    let mut longer = b.clone();
    longer.extend_from_slice(&[0; 8]);
    assert!(Checkpoint::decode(m.as_bytes(), &longer).is_err());
    assert!(Checkpoint::decode(b"{}", &b).is_err());
    assert!(Checkpoint::decode(m.replace("f64-le", "f32-le").as_bytes(), &b).is_err());
    assert!(Checkpoint::decode(m.replace("\"offset\": 0", "\"offset\": 8").as_bytes(), &b).is_err());
    let huge = m.replacen("\"shape\": [", "\"shape\": [4294967296, 4294967296, ", 1);
    assert!(Checkpoint::decode(huge.as_bytes(), &b).is_err());
}

proptest! {
    #[test]
    fn checkpoint_decode_never_panics(m in proptest::collection::vec(any::<u8>(), 0..256), b in proptest::collection::vec(any::<u8>(), 0..64)) {
        let _ = Checkpoint::decode(&m, &b);
    }

    #[test]
    fn checkpoint_round_trip_random_trees(values in proptest::collection::vec(any::<f64>(), 1..40), split in 1usize..40) {
        let split = split.min(values.len());
        let mut t = ParamTree::new();
        t.insert("a", Tensor::new(vec![split], values[..split].to_vec()).unwrap()).unwrap();
        t.insert("b", Tensor::new(vec![values.len() - split], values[split..].to_vec()).unwrap()).unwrap();
        let ck = Checkpoint::new(7, t, serde_json::Value::Null);
        let (m, b) = ck.encode().unwrap();
        let back = Checkpoint::decode(m.as_bytes(), &b).unwrap();
        prop_assert_eq!(bits(&back.params), bits(&ck.params));
    }
}
