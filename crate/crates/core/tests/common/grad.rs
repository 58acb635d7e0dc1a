//! Per-seed gradient checks shared by the gradient tests and the acceptance run.
//! Each returns the worst error seen, so callers pick the tolerance.

use asyndgan::autodiff::{backward, forward, Arch, DropoutSpec, Gradients, ParamStore, Tensor};
use asyndgan::gan::{
    discriminator_loss, generator_feedback, generator_gradient, AdversarialForm,
    DiscriminatorConfig, DiscriminatorModel, FeedbackItem, GeneratorConfig, GeneratorModel,
    LossConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{numeric_grad, random_tensor, rel_err};

pub const H: f64 = 1e-6;

pub fn small_d(rng: &mut ChaCha8Rng, seed: u64, conditioned: bool) -> DiscriminatorModel {
    let cfg = DiscriminatorConfig {
        hidden: vec![rng.random_range(2..6), rng.random_range(2..6)],
        leaky_slope: 0.2,
        conditioned,
        input_scale: if seed % 4 == 1 { 0.5 } else { 1.0 },
    };
    DiscriminatorModel::new(&cfg, 2, 2, seed)
}

/// Largest relative error between `analytic` and central differences of `loss`.
pub fn param_grad_error(
    params: &ParamStore,
    analytic: &Gradients,
    loss: impl Fn(&ParamStore) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for name in params.names().map(str::to_string).collect::<Vec<_>>() {
        let value = params.get(&name).unwrap().clone();
        let numeric = numeric_grad(&value, H, |v| {
            let mut p = params.clone();
            *p.get_mut(&name).unwrap() = v.clone();
            loss(&p)
        });
        let a = analytic.get(&name).unwrap();
        for (&x, &n) in a.data().iter().zip(&numeric) {
            worst = worst.max(rel_err(x, n));
        }
    }
    worst
}

pub fn discriminator_loss_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = small_d(&mut rng, seed, seed % 2 == 0);
    let m = rng.random_range(1..6);
    let real = random_tensor(&mut rng, &[m, 2], 2.0);
    let fake = random_tensor(&mut rng, &[m, 2], 2.0);
    let x = random_tensor(&mut rng, &[m, 2], 1.0);
    let (_, grads) = discriminator_loss(&d, &real, &fake, &x).unwrap();
    let cond = if d.is_conditioned() { 2 } else { 0 };
    param_grad_error(&d.params, &grads, |p| {
        let d2 = DiscriminatorModel::from_parts(d.arch().clone(), p.clone(), cond);
        discriminator_loss(&d2, &real, &fake, &x).unwrap().0
    })
}

pub fn generator_feedback_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = small_d(&mut rng, seed, seed % 3 != 0);
    let m = rng.random_range(1..6);
    let real = random_tensor(&mut rng, &[m, 2], 2.0);
    let fake = random_tensor(&mut rng, &[m, 2], 2.0);
    let x = random_tensor(&mut rng, &[m, 2], 1.0);
    let cfg = LossConfig {
        l1_weight: rng.random_range(0.0..3.0),
        perceptual_weight: 0.0,
        adversarial: if seed % 2 == 0 {
            AdversarialForm::Paper
        } else {
            AdversarialForm::NonSaturating
        },
    };
    let fb = generator_feedback(&d, &fake, &real, &x, &cfg).unwrap();
    let numeric = numeric_grad(&fake, H, |f| {
        let fb = generator_feedback(&d, f, &real, &x, &cfg).unwrap();
        fb.adv + cfg.l1_weight * fb.l1
    });
    fb.input_grad
        .data()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Adversarial generator gradient computed two ways: split across the wire
/// boundary (generator tape + discriminator input gradient), and through one
/// network with the discriminator layers appended to the generator. Returns
/// the largest relative gap.
pub fn split_vs_fused_gap(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gcfg = GeneratorConfig {
        hidden: vec![rng.random_range(2..6), rng.random_range(2..6)],
        dropout: 0.25,
        input_scale: 1.0,
        output_scale: 3.0,
        output_init_scale: 1.0,
    };
    let g = GeneratorModel::new(&gcfg, 2, 1, 2, seed);
    let nodes = rng.random_range(1..4);
    let ds: Vec<_> = (0..nodes).map(|j| small_d(&mut rng, 1000 + seed * 10 + j, true)).collect();
    let mut priors: Vec<f64> = (0..nodes).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= s);
    let form = if seed % 2 == 0 { AdversarialForm::Paper } else { AdversarialForm::NonSaturating };
    let cfg = LossConfig { l1_weight: 0.0, perceptual_weight: 0.0, adversarial: form };

    let m = rng.random_range(1..6);
    let mut passes = Vec::new();
    let mut grads = Vec::new();
    let mut inputs = Vec::new();
    for (j, d) in ds.iter().enumerate() {
        let x = random_tensor(&mut rng, &[m, 2], 1.0);
        let real = random_tensor(&mut rng, &[m, 2], 2.0);
        let pass = g.sample(&x, 77 + j as u64).unwrap();
        let fb = generator_feedback(d, &pass.output, &real, &x, &cfg).unwrap();
        grads.push(fb.input_grad);
        passes.push(pass);
        inputs.push(x);
    }
    let items: Vec<_> = (0..nodes as usize)
        .map(|j| FeedbackItem { node: j, modality: 1, pass: &passes[j], input_grad: &grads[j] })
        .collect();
    let split = generator_gradient(&g, &items, &priors).unwrap();

    // Fused: one tape from condition to logit.
    let mut fused = Gradients::zeros_like(&g.params);
    for (j, d) in ds.iter().enumerate() {
        let mut layers = g.arch().layers.clone();
        layers.extend(d.arch().layers.iter().cloned());
        let arch = Arch::new(2, layers);
        let mut params = g.params.clone();
        params.merge(&d.params);
        let drop = DropoutSpec::new(0.25, 77 + j as u64);
        let (z, tape) = forward(&params, &arch, &inputs[j], Some(&inputs[j]), drop).unwrap();
        let up: Vec<f64> = z
            .data()
            .iter()
            .map(|&v| {
                let s = 1.0 / (1.0 + (-v).exp());
                let dl = match form {
                    AdversarialForm::Paper => -s,
                    AdversarialForm::NonSaturating => -(1.0 - s),
                };
                dl / m as f64 * priors[j] / nodes as f64
            })
            .collect();
        let (gr, _) = backward(&tape, &Tensor::new(z.shape().to_vec(), up).unwrap()).unwrap();
        for (name, t) in gr.iter() {
            if g.params.get(name).is_some() {
                fused.accumulate(name, t, 1.0);
            }
        }
    }
    let mut worst = 0.0f64;
    for (name, a) in split.iter() {
        let b = fused.get(name).unwrap();
        for (&x, &y) in a.data().iter().zip(b.data()) {
            worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1e-12));
        }
    }
    worst
}
