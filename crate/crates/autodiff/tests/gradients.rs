//! Backward-pass checks against central finite differences for every layer kind.

use autodiff::{
    finite_diff_check, layer_case, AdamState, AutodiffError, Conv2dAttrs, Graph, LayerKind,
    NamedTensor, NodeId, Padding, Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

#[test]
fn every_layer_kind_matches_finite_differences() {
    for kind in LayerKind::ALL {
        for seed in 0..20 {
            let err = layer_case(kind, seed).check(H).unwrap();
            assert!(err < TOL, "{kind} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn conv_relu_l2_composite() {
    for seed in 100..110 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[1, 2, 6, 5]);
        let w = random_tensor(&mut rng, &[3, 2, 3, 3]);
        let build = |g: &mut Graph, p: &[NodeId]| {
            let c = g.conv2d(p[0], p[1], Conv2dAttrs { stride: 1, padding: Padding::uniform(1), groups: 1 })?;
            let r = g.relu(c)?;
            g.l2_norm(r)
        };
        let err = finite_diff_check(build, &[x, w], H).unwrap();
        assert!(err < TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn linear_function_is_exact() {
    let c = Tensor::new(vec![4], vec![0.5, -1.5, 2.0, 3.25]).unwrap();
    let x = Tensor::new(vec![4], vec![0.1, 0.2, -0.3, 0.4]).unwrap();
    let build = move |g: &mut Graph, p: &[NodeId]| {
        let k = g.constant(c.clone());
        let m = g.mul(p[0], k)?;
        g.sum(m)
    };
    assert!(finite_diff_check(build, &[x], H).unwrap() < 1e-9);
}

#[test]
fn quadratic_error_is_at_truncation_scale() {
    let x = Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
    let build = |g: &mut Graph, p: &[NodeId]| {
        let sq = g.mul(p[0], p[0])?;
        g.sum(sq)
    };
    let err = finite_diff_check(build, &[x], H).unwrap();
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn probe_reports_non_finite_coordinate() {
    // squaring f64::MAX overflows on both probes
    let x = Tensor::new(vec![2], vec![1.0, f64::MAX]).unwrap();
    let build = |g: &mut Graph, p: &[NodeId]| {
        let sq = g.mul(p[0], p[0])?;
        g.sum(sq)
    };
    let err = finite_diff_check(build, &[x], H).unwrap_err();
    assert!(matches!(err, AutodiffError::NonFiniteProbe { param: 0, index: 0 }), "{err:?}");
}

#[test]
fn norm_of_difference_gradient() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::new(vec![2], vec![1.0, 0.0]).unwrap());
    let b = g.param(Tensor::new(vec![2], vec![0.5, 0.5]).unwrap());
    let d = g.sub(a, b).unwrap();
    let loss = g.l2_norm(d).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(b).unwrap();
    let s = 0.5f64.hypot(0.5);
    assert!((grad[0] + 0.5 / s).abs() < 1e-12);
    assert!((grad[1] - 0.5 / s).abs() < 1e-12);
    assert!((grad[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    assert!(g.grad(a).is_none());
}

#[test]
fn upsample_then_conv_preserves_doubled_extent() {
    let mut g = Graph::new();
    for (h, w) in [(1, 8), (2, 16), (4, 32), (8, 64), (3, 5)] {
        let x = g.constant(Tensor::zeros(&[1, 2, h, w]));
        let up = g.upsample2x(x).unwrap();
        let dw = g.constant(Tensor::zeros(&[2, 1, 4, 4]));
        let pw = g.constant(Tensor::zeros(&[3, 2, 1, 1]));
        let y = g.separable_conv2d(up, dw, pw, 1, Padding::same(4)).unwrap();
        assert_eq!(g.shape(y), &[1, 3, 2 * h, 2 * w]);
    }
}

#[test]
fn stride_two_halves_even_extents() {
    let mut g = Graph::new();
    for (h, w) in [(2, 16), (16, 128), (64, 512)] {
        let x = g.constant(Tensor::zeros(&[1, 1, h, w]));
        let k = g.constant(Tensor::zeros(&[1, 1, 4, 4]));
        let y = g
            .conv2d(x, k, Conv2dAttrs { stride: 2, padding: Padding::uniform(1), groups: 1 })
            .unwrap();
        assert_eq!(g.shape(y), &[1, 1, h / 2, w / 2]);
    }
}

fn small_net(x: &Tensor, w: &Tensor) -> Vec<f64> {
    let mut g = Graph::new();
    let xi = g.constant(x.clone());
    let wi = g.constant(w.clone());
    let c = g.conv2d(xi, wi, Conv2dAttrs { stride: 2, padding: Padding::uniform(1), groups: 1 }).unwrap();
    let r = g.relu(c).unwrap();
    let u = g.upsample2x(r).unwrap();
    let t = g.tanh(u).unwrap();
    g.value(t).values().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_is_bit_identical_across_runs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[2, 2, 6, 8]);
        let w = random_tensor(&mut rng, &[3, 2, 4, 4]);
        let a = small_net(&x, &w);
        let b = small_net(&x, &w);
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn fan_out_accumulates_gradients(vals in proptest::collection::vec(-2.0f64..2.0, 6)) {
        let x = Tensor::new(vec![1, 1, 2, 3], vals).unwrap();
        let single = {
            let mut g = Graph::new();
            let p = g.param(x.clone());
            let t = g.tanh(p).unwrap();
            let l = g.sum(t).unwrap();
            g.backward(l).unwrap();
            g.grad(p).unwrap().to_vec()
        };
        let doubled = {
            let mut g = Graph::new();
            let p = g.param(x.clone());
            let t1 = g.tanh(p).unwrap();
            let t2 = g.tanh(p).unwrap();
            let s = g.add(t1, t2).unwrap();
            let l = g.sum(s).unwrap();
            g.backward(l).unwrap();
            g.grad(p).unwrap().to_vec()
        };
        for (a, b) in single.iter().zip(&doubled) {
            prop_assert!((2.0 * a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn adam_trains_a_least_squares_fit() {
    // fit w in y = w·x with a single scalar parameter
    let xs = [0.5, -1.0, 2.0, 1.5];
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
    let mut param = NamedTensor::new("w", Tensor::scalar(0.0));
    let mut adam = AdamState::new(0.05);
    for _ in 0..500 {
        let mut g = Graph::new();
        let w = g.param(param.tensor.clone());
        let mut terms = Vec::new();
        for (x, y) in xs.iter().zip(&ys) {
            let xw = g.affine(w, *x, -y).unwrap();
            terms.push(g.mul(xw, xw).unwrap());
        }
        let mut total = terms[0];
        for t in &terms[1..] {
            total = g.add(total, *t).unwrap();
        }
        g.backward(total).unwrap();
        let grad = g.take_grad(w).unwrap();
        adam.step(&mut [&mut param], &[&grad]).unwrap();
    }
    assert!((param.tensor.values()[0] - 3.0).abs() < 1e-3);
    assert_eq!(adam.step_count(), 500);
}
