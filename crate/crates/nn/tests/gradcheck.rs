#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spf_nn::layers::{forward, init_params};
use spf_nn::{Activation, LayerSpec, ParamTree, Tape, Tensor, Var};

const EPS: f64 = 1e-5;
const ACTS: [Activation; 4] = [Activation::Relu, Activation::Swish, Activation::Tanh, Activation::Identity];

/// Max relative error between tape gradients and central differences of
/// `loss` over every parameter entry.
fn gradcheck(tree: &ParamTree, loss: impl Fn(&mut Tape, &ParamTree) -> Var) -> f64 {
    let mut tape = Tape::new();
    let l = loss(&mut tape, tree);
    let grads = tape.backward(l).unwrap();
    let mut worst = 0.0f64;
    let eval = |t: &ParamTree| {
        let mut tape = Tape::new();
        let l = loss(&mut tape, t);
        tape.scalar(l)
    };
    for (name, tensor) in tree.iter() {
        let analytic = grads.get("p", name).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tensor.len()]);
        for i in 0..tensor.len() {
            let mut plus = tree.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += EPS;
            let mut minus = tree.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= EPS;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * EPS);
            let a = analytic[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Loss `Σ out ⊙ R` for a fixed random `R`, so every output entry matters.
fn project(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let (m, n) = tape.dims(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let r = tape.constant(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let p = tape.mul(out, r).unwrap();
    tape.sum(p)
}

fn check_stack(specs: Vec<LayerSpec>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = ParamTree::new();
    init_params(&specs, "net", &mut rng, false, &mut tree).unwrap();
    // perturb every parameter so biases, gains and shifts are generic
    for (_, t) in tree.iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let width = specs[0].input_width();
    tree.insert("input", random_tensor(&mut rng, vec![3, width], 1.5)).unwrap();
    gradcheck(&tree, |tape, t| {
        let x = tape.param("p", t, "input").unwrap();
        let y = forward(&specs, "p", t, "net", x, tape).unwrap();
        project(tape, y, seed)
    })
}

#[test]
fn dense_layers_match_finite_differences() {
    for act in ACTS {
        for seed in 0..10 {
            let e = check_stack(vec![LayerSpec::Dense { input: 4, output: 3, activation: act }], seed);
            assert!(e < 1e-4, "{act:?} seed {seed}: {e}");
        }
    }
}

#[test]
fn densenet_blocks_match_finite_differences() {
    for act in ACTS {
        for seed in 0..10 {
            let specs = spf_nn::layers::densenet(3, 2, 4, act);
            let e = check_stack(specs, seed);
            assert!(e < 1e-4, "{act:?} seed {seed}: {e}");
        }
    }
}

#[test]
fn layernorm_and_activation_layers_match_finite_differences() {
    for seed in 0..10 {
        let e = check_stack(vec![LayerSpec::Layernorm { width: 5 }], seed);
        assert!(e < 1e-4, "layernorm seed {seed}: {e}");
        for act in ACTS {
            let e = check_stack(vec![LayerSpec::Activation { width: 5, activation: act }], seed);
            assert!(e < 1e-4, "{act:?} seed {seed}: {e}");
        }
    }
}

#[test]
fn tape_ops_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut tree = ParamTree::new();
        tree.insert("a", random_tensor(&mut rng, vec![3, 4], 1.0)).unwrap();
        tree.insert("b", random_tensor(&mut rng, vec![3, 4], 1.0)).unwrap();
        tree.insert("row", random_tensor(&mut rng, vec![4], 1.0)).unwrap();
        tree.insert("col", random_tensor(&mut rng, vec![3, 1], 1.0)).unwrap();
        tree.insert("w", random_tensor(&mut rng, vec![4, 2], 1.0)).unwrap();
        let e = gradcheck(&tree, |t, p| {
            let a = t.param("p", p, "a").unwrap();
            let b = t.param("p", p, "b").unwrap();
            let row = t.param("p", p, "row").unwrap();
            let col = t.param("p", p, "col").unwrap();
            let w = t.param("p", p, "w").unwrap();
            let x = t.mul_row(a, row).unwrap();
            let x = t.mul_col(x, col).unwrap();
            let y = t.sub(x, b).unwrap();
            let y = t.square(y);
            let z = t.exp(b);
            let z = t.scale(z, 0.3);
            let z = t.add_scalar(z, 0.1);
            let z = t.clamp(z, -10.0, 10.0);
            let c = t.concat(y, z).unwrap();
            let s = t.slice_cols(c, 2, 7).unwrap();
            let s = t.sum_cols(s);
            let mm = t.matmul(a, w).unwrap();
            let mm = t.mul_col(mm, s).unwrap();
            let cos = t.cosine_distance(a, b, 1e-8).unwrap();
            let o = t.outer(y, mm).unwrap();
            let l1 = project(t, mm, seed);
            let l3 = project(t, o, seed + 1);
            let l1 = t.add(l1, l3).unwrap();
            let l2 = t.mean(cos);
            t.add(l1, l2).unwrap()
        });
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}
