//! Oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use autodiff::{Graph, Tensor};
use irisadv::attack::{adversarial_loss, igsm_step, unflipped_bits, AttackConfig, AttackMode, AttackRun, Scenario, StepOutcome};
use irisadv::codec::{encode, FilterBank, IrisSample};
use irisadv::image::{BinaryImage, GrayImage};
use irisadv::matcher::{masked_hamming, subset_hamming};
use irisadv::surrogate::{SoftCode, SurrogateWeights};
use proptest::test_runner::TestCaseError;
use proptest::{prop_assert, prop_assert_eq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_sample(seed: u64, h: usize, w: usize) -> IrisSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let iris = GrayImage::from_fn(h, w, |_, _| rng.random_range(0.0..1.0));
    IrisSample::new(iris, BinaryImage::filled(h, w, true)).unwrap()
}

/// Straight double loop over output pixels and kernel taps; rows clamp,
/// columns wrap. Intensities are taken relative to pixel (0,0), which a
/// zero-mean kernel cannot see.
pub fn naive_bits(iris: &GrayImage, bank: &FilterBank) -> Vec<bool> {
    let (h, w) = iris.dims();
    let (kh, kw) = bank.extents();
    let x0 = iris.get(0, 0);
    let mut bits = Vec::new();
    for k in bank.kernels() {
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for i in 0..kh {
                    for j in 0..kw {
                        let rr = (r as isize + i as isize - (kh / 2) as isize).clamp(0, h as isize - 1) as usize;
                        let cc = (c as isize + j as isize - (kw / 2) as isize).rem_euclid(w as isize) as usize;
                        acc += k.coefficients[i * kw + j] * (iris.get(rr, cc) - x0);
                    }
                }
                bits.push(acc > 0.0);
            }
        }
    }
    bits
}

fn soft_gradient(soft: &SoftCode, reference: &BinaryImage, keep: &BinaryImage) -> Vec<f64> {
    let (r, c) = soft.values.dims();
    let mut g = Graph::new();
    let node = g.param(Tensor::new(vec![1, r, c], soft.values.data().to_vec()).unwrap());
    let loss = adversarial_loss(&mut g, node, reference, keep).unwrap();
    g.backward(loss).unwrap();
    g.grad(node).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; r * c])
}

/// Steps one attack to its end, checking every per-step invariant, then
/// re-verifies a success through a fresh encode. Returns whether it succeeded.
pub fn check_run(
    weights: &SurrogateWeights,
    bank: &FilterBank,
    benign: &IrisSample,
    target: Option<&IrisSample>,
    config: AttackConfig,
) -> Result<bool, TestCaseError> {
    let eps = config.epsilon;
    let mut run = AttackRun::new(benign, weights, bank, config.clone(), target).unwrap();
    let mut prev_iris = benign.iris.clone();
    let mut prev_pop = benign.mask.count_ones();
    let mut prev_n = 0;
    loop {
        let outcome = run.step().unwrap();
        let state = run.state();
        let n = state.iteration;
        if let (Some(soft), Some(keep)) = (&state.soft, &state.restriction) {
            if let Some(v) = &config.subset {
                let cols = keep.width();
                let inside: std::collections::HashSet<usize> = v.flat_indices(cols).collect();
                for (i, k) in keep.bits().iter().enumerate() {
                    prop_assert!(!*k || inside.contains(&i), "restriction leaves v at {}", i);
                }
            }
            if config.mode == AttackMode::NonTargeted {
                let agree = unflipped_bits(soft, &run.benign_code().bits, config.binarization_threshold).unwrap();
                for (k, a) in keep.bits().iter().zip(agree.bits()) {
                    prop_assert!(!*k || *a);
                }
            }
            let grad = soft_gradient(soft, &run.reference_code().bits, keep);
            for (i, (g, k)) in grad.iter().zip(keep.bits()).enumerate() {
                prop_assert!(*k || *g == 0.0, "gradient {} outside restriction at {}", g, i);
            }
        }
        // a NothingLeftToFlip stop does not step
        if let (Some(grad), true) = (run.last_gradient(), n > prev_n) {
            let expected = igsm_step(prev_iris.data(), grad, eps, config.mode.direction()).unwrap();
            prop_assert_eq!(state.iris.data(), expected.as_slice());
        }
        prop_assert!(state.iris.data().iter().all(|p| (0.0..=1.0).contains(p)));
        let pop = state.mask.count_ones();
        prop_assert!(pop <= prev_pop);
        prev_pop = pop;
        let linf = state
            .iris
            .data()
            .iter()
            .zip(benign.iris.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(linf <= n as f64 * eps + 1e-12, "||d||inf {} after {} steps", linf, n);
        prev_iris = state.iris.clone();
        prev_n = n;
        if let StepOutcome::Stopped(_) = outcome {
            break;
        }
    }
    let result = run.finish().unwrap();
    if result.success {
        // re-encode from scratch, independent of the attack's cached code
        let fresh = encode(&result.adversarial, bank);
        prop_assert_eq!(&fresh, &result.code);
        let reference = match target {
            Some(t) => encode(t, bank),
            None => encode(benign, bank),
        };
        let hd = match (&config.subset, config.scenario) {
            (Some(v), Scenario::KnownSubset) => subset_hamming(&reference, &fresh, v).unwrap().hd,
            _ => masked_hamming(&reference, &fresh).unwrap().hd,
        };
        prop_assert_eq!(hd, result.hd);
        prop_assert!(run_is_terminal(&config, hd), "hd {} does not meet the stop rule", hd);
    }
    Ok(result.success)
}

fn run_is_terminal(config: &AttackConfig, hd: f64) -> bool {
    match config.mode {
        AttackMode::NonTargeted => hd > config.stopping_threshold(),
        AttackMode::Targeted => hd < config.stopping_threshold(),
    }
}

