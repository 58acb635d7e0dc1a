//! Finite-difference and fused-network checks of every gradient path.

mod common;

use asyndgan::autodiff::{backward, forward, Arch, DropoutSpec, Layer, ParamStore, Tensor};
use asyndgan::gan::{generator_feedback, generator_gradient, FeedbackItem, GeneratorConfig, GeneratorModel, LossConfig};
use common::grad::{
    discriminator_loss_error, generator_feedback_error, param_grad_error, small_d,
    split_vs_fused_gap, H,
};
use common::{numeric_grad, random_tensor, rel_err};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODELS: u64 = 100;
const FD_TOL: f64 = 1e-4;

#[test]
fn mlp_backward_matches_finite_differences() {
    for seed in 0..MODELS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w_in, side_w) = (rng.random_range(1..4), rng.random_range(1..3));
        let arch = Arch::new(
            w_in,
            vec![
                Layer::Scale(1.5),
                Layer::Concat { width: side_w },
                Layer::linear("a", w_in + side_w, 5),
                Layer::Tanh,
                Layer::Dropout,
                Layer::linear("b", 5, 4),
                Layer::LeakyRelu(0.1),
                Layer::linear("c", 4, 3),
                Layer::Sigmoid,
            ],
        );
        let mut params = arch.init_params(&mut rng);
        // Nonzero biases keep fully-dropped rows off the leaky-ReLU kink at 0.
        for name in ["a.bias", "b.bias", "c.bias"] {
            for v in params.get_mut(name).unwrap().data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let m = rng.random_range(1..5);
        let x = random_tensor(&mut rng, &[m, w_in], 1.0);
        let side = random_tensor(&mut rng, &[m, side_w], 1.0);
        let drop = DropoutSpec::new(0.3, seed);
        let w = random_tensor(&mut rng, &[m, 3], 1.0);
        let loss = |p: &ParamStore, x: &Tensor| {
            forward(p, &arch, x, Some(&side), drop).unwrap().0.dot(&w)
        };
        let (_, tape) = forward(&params, &arch, &x, Some(&side), drop).unwrap();
        let (grads, gx) = backward(&tape, &w).unwrap();
        let err = param_grad_error(&params, &grads, |p| loss(p, &x));
        assert!(err <= FD_TOL, "mlp seed {seed}: {err}");
        let numeric = numeric_grad(&x, H, |x| loss(&params, x));
        for (&a, &n) in gx.data().iter().zip(&numeric) {
            assert!(rel_err(a, n) <= FD_TOL, "input grad {a} vs {n} (seed {seed})");
        }
    }
}

#[test]
fn discriminator_loss_matches_finite_differences() {
    for seed in 0..MODELS {
        let err = discriminator_loss_error(seed);
        assert!(err <= FD_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn generator_feedback_matches_finite_differences() {
    for seed in 0..MODELS {
        let err = generator_feedback_error(seed);
        assert!(err <= FD_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn split_gradient_equals_fused_network() {
    for seed in 0..MODELS {
        let gap = split_vs_fused_gap(seed);
        assert!(gap <= 1e-6, "seed {seed}: {gap}");
    }
}

/// End-to-end: the generator gradient equals the finite-difference gradient
/// of `Σ_j (π_j/N)(adv_j + λ1·l1_j)` with respect to generator parameters.
#[test]
fn generator_gradient_matches_end_to_end_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gcfg = GeneratorConfig { hidden: vec![3, 3], dropout: 0.2, input_scale: 1.0, output_scale: 2.0, output_init_scale: 0.5 };
        let g = GeneratorModel::new(&gcfg, 2, 1, 2, seed);
        let d = small_d(&mut rng, seed + 500, true);
        let cfg = LossConfig { l1_weight: 1.5, ..LossConfig::default() };
        let x = random_tensor(&mut rng, &[3, 2], 1.0);
        let real = random_tensor(&mut rng, &[3, 2], 2.0);
        let pass = g.sample(&x, 5).unwrap();
        let fb = generator_feedback(&d, &pass.output, &real, &x, &cfg).unwrap();
        let items = [FeedbackItem { node: 0, modality: 1, pass: &pass, input_grad: &fb.input_grad }];
        let analytic = generator_gradient(&g, &items, &[1.0]).unwrap();
        let err = param_grad_error(
            &g.params,
            &analytic,
            |p| {
                let g2 = GeneratorModel::from_parts(g.arch().clone(), p.clone(), 0.2, 1, 2);
                let out = g2.sample(&x, 5).unwrap().output;
                let fb = generator_feedback(&d, &out, &real, &x, &cfg).unwrap();
                fb.adv + cfg.l1_weight * fb.l1
            },
        );
        assert!(err <= FD_TOL, "seed {seed}: {err}");
    }
}
