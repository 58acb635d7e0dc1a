//! Generator and discriminator models and the adversarial losses that connect them.
//!
//! The generator maps a condition batch `[m, condition_dim]` to `c` modality
//! channels laid out side by side (`[m, c * sample_dim]`). Its only noise source
//! is dropout, active in every sampling call. Each discriminator scores one
//! modality channel, optionally concatenated with the condition, and produces a
//! logit; probabilities are the sigmoid clamped to `[1e-7, 1 - 1e-7]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{
    backward, forward, sigmoid, Adam, Arch, AutodiffError, DropoutSpec, Gradients, Layer,
    ParamStore, Tape, Tensor,
};

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum GanError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch shape mismatch: {0}")]
    Shape(String),
    #[error("stale generator pass: recorded at version {pass}, generator is at {current}")]
    Stale { pass: u64, current: u64 },
    #[error("modality {0} out of range 1..={1}")]
    Modality(usize, usize),
    #[error("invalid loss configuration: {0}")]
    Config(String),
}

/// Which generator adversarial term is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialForm {
    /// `log(1 - D(ŷ))`, the saturating minimax form.
    #[default]
    Paper,
    /// `-log D(ŷ)`.
    NonSaturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub l1_weight: f64,
    /// Perceptual-loss weight. No perceptual network is bundled, so this must be 0.
    pub perceptual_weight: f64,
    pub adversarial: AdversarialForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            l1_weight: 10.0,
            perceptual_weight: 0.0,
            adversarial: AdversarialForm::Paper,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if !(self.l1_weight >= 0.0 && self.l1_weight.is_finite()) {
            return Err(GanError::Config(format!(
                "l1_weight must be >= 0, got {}",
                self.l1_weight
            )));
        }
        if self.perceptual_weight != 0.0 {
            return Err(GanError::Config(
                "perceptual_weight must be 0 (no perceptual network available)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// Fixed multiplier on the condition before the first layer.
    pub input_scale: f64,
    /// Fixed multiplier on the output layer, matching the generator to the data scale.
    pub output_scale: f64,
    /// Multiplier on the initial output-layer weights; below 1 starts the
    /// generator with a narrow output spread.
    pub output_init_scale: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            dropout: 0.5,
            input_scale: 1.0,
            output_scale: 1.0,
            output_init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Whether the condition is concatenated to the scored sample.
    pub conditioned: bool,
    /// Fixed multiplier on the scored sample, bringing it to unit scale. With
    /// zero-initialized biases an unscaled net is close to linear along rays
    /// from the origin and cannot tell a radial spread from a tight mode.
    pub input_scale: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            leaky_slope: 0.2,
            conditioned: true,
            input_scale: 1.0,
        }
    }
}

/// One sampling call: the generated channels plus the tape needed to push
/// feedback gradients back into the generator.
#[derive(Debug, Clone)]
pub struct GeneratorPass {
    pub output: Tensor,
    tape: Tape,
    version: u64,
}

impl GeneratorPass {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn version(&self) -> u64 {
        self.version
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub params: ParamStore,
    arch: Arch,
    dropout: f64,
    modalities: usize,
    sample_dim: usize,
    version: u64,
}

impl GeneratorModel {
    pub fn new(
        cfg: &GeneratorConfig,
        condition_dim: usize,
        modalities: usize,
        sample_dim: usize,
        seed: u64,
    ) -> Self {
        let mut layers = Vec::new();
        if cfg.input_scale != 1.0 {
            layers.push(Layer::Scale(cfg.input_scale));
        }
        let mut width = condition_dim;
        for (i, &h) in cfg.hidden.iter().enumerate() {
            layers.push(Layer::linear(format!("g.fc{}", i + 1), width, h));
            layers.push(Layer::Tanh);
            layers.push(Layer::Dropout);
            width = h;
        }
        let out = modalities * sample_dim;
        layers.push(Layer::linear("g.out", width, out));
        if cfg.output_scale != 1.0 {
            layers.push(Layer::Scale(cfg.output_scale));
        }
        let arch = Arch::new(condition_dim, layers);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = arch.init_params(&mut rng);
        if cfg.output_init_scale != 1.0 {
            let w = params.get_mut("g.out.weight").expect("output layer");
            w.data_mut().iter_mut().for_each(|v| *v *= cfg.output_init_scale);
        }
        Self {
            params,
            arch,
            dropout: cfg.dropout,
            modalities,
            sample_dim,
            version: 0,
        }
    }

    pub fn from_parts(
        arch: Arch,
        params: ParamStore,
        dropout: f64,
        modalities: usize,
        sample_dim: usize,
    ) -> Self {
        Self {
            params,
            arch,
            dropout,
            modalities,
            sample_dim,
            version: 0,
        }
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    /// Number of optimizer updates applied; passes from older versions are stale.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Generates all channels for `condition`; dropout is always on.
    pub fn sample(&self, condition: &Tensor, seed: u64) -> Result<GeneratorPass, GanError> {
        let (output, tape) = forward(
            &self.params,
            &self.arch,
            condition,
            None,
            DropoutSpec::new(self.dropout, seed),
        )?;
        Ok(GeneratorPass {
            output,
            tape,
            version: self.version,
        })
    }

    /// Channel `k` (1-based) of a generator output.
    pub fn channel(&self, output: &Tensor, k: usize) -> Result<Tensor, GanError> {
        if k == 0 || k > self.modalities {
            return Err(GanError::Modality(k, self.modalities));
        }
        Ok(output.columns((k - 1) * self.sample_dim, self.sample_dim))
    }
}

#[derive(Debug, Clone)]
pub struct DiscriminatorModel {
    pub params: ParamStore,
    arch: Arch,
    sample_dim: usize,
    condition_dim: usize,
}

impl DiscriminatorModel {
    pub fn new(
        cfg: &DiscriminatorConfig,
        sample_dim: usize,
        condition_dim: usize,
        seed: u64,
    ) -> Self {
        let condition_dim = if cfg.conditioned { condition_dim } else { 0 };
        let mut layers = Vec::new();
        if cfg.input_scale != 1.0 {
            layers.push(Layer::Scale(cfg.input_scale));
        }
        let mut width = sample_dim;
        if condition_dim > 0 {
            layers.push(Layer::Concat {
                width: condition_dim,
            });
            width += condition_dim;
        }
        for (i, &h) in cfg.hidden.iter().enumerate() {
            layers.push(Layer::linear(format!("d.fc{}", i + 1), width, h));
            layers.push(Layer::LeakyRelu(cfg.leaky_slope));
            width = h;
        }
        layers.push(Layer::linear("d.out", width, 1));
        let arch = Arch::new(sample_dim, layers);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch.init_params(&mut rng);
        Self {
            params,
            arch,
            sample_dim,
            condition_dim,
        }
    }

    pub fn from_parts(arch: Arch, params: ParamStore, condition_dim: usize) -> Self {
        Self {
            sample_dim: arch.input_width,
            params,
            arch,
            condition_dim,
        }
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    pub fn is_conditioned(&self) -> bool {
        self.condition_dim > 0
    }

    fn logits(&self, y: &Tensor, condition: &Tensor) -> Result<(Tensor, Tape), GanError> {
        let side = self.is_conditioned().then_some(condition);
        Ok(forward(&self.params, &self.arch, y, side, DropoutSpec::NONE)?)
    }

    /// Clamped probabilities that each row of `y` is real.
    pub fn predict(&self, y: &Tensor, condition: &Tensor) -> Result<Vec<f64>, GanError> {
        let (z, _) = self.logits(y, condition)?;
        Ok(z.data().iter().map(|&v| clamp_prob(sigmoid(v))).collect())
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check_pair(a: &Tensor, b: &Tensor, condition: &Tensor) -> Result<usize, GanError> {
    if a.shape() != b.shape() {
        return Err(GanError::Shape(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let m = a.rows();
    if m == 0 {
        return Err(GanError::EmptyBatch);
    }
    if condition.rows() != m {
        return Err(GanError::Shape(format!(
            "condition has {} rows, batch has {m}",
            condition.rows()
        )));
    }
    Ok(m)
}

/// `(1/m) Σ [-log D(y, x) - log(1 - D(ŷ, x))]` and its gradient with respect to
/// the discriminator parameters. The fake batch is a constant here.
pub fn discriminator_loss(
    d: &DiscriminatorModel,
    real: &Tensor,
    fake: &Tensor,
    condition: &Tensor,
) -> Result<(f64, Gradients), GanError> {
    let m = check_pair(real, fake, condition)?;
    let inv_m = 1.0 / m as f64;
    let (zr, tape_r) = d.logits(real, condition)?;
    let (zf, tape_f) = d.logits(fake, condition)?;
    let mut loss = 0.0;
    let mut up_r = Vec::with_capacity(m);
    let mut up_f = Vec::with_capacity(m);
    for (&a, &b) in zr.data().iter().zip(zf.data()) {
        let (sr, sf) = (sigmoid(a), sigmoid(b));
        loss -= clamp_prob(sr).ln() + (1.0 - clamp_prob(sf)).ln();
        up_r.push(-(1.0 - sr) * inv_m);
        up_f.push(sf * inv_m);
    }
    let (mut grads, _) = backward(&tape_r, &Tensor::new(zr.shape().to_vec(), up_r)?)?;
    let (gf, _) = backward(&tape_f, &Tensor::new(zf.shape().to_vec(), up_f)?)?;
    grads.add_scaled(&gf, 1.0);
    Ok((loss * inv_m, grads))
}

/// What one discriminator sends back for one modality: two scalars and a
/// sample-shaped gradient. No discriminator parameters are included.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    /// Batch mean of the adversarial term.
    pub adv: f64,
    /// Mean absolute error between real and synthetic channel.
    pub l1: f64,
    /// `∂(adv + λ1·l1)/∂ŷ`.
    pub input_grad: Tensor,
}

pub fn generator_feedback(
    d: &DiscriminatorModel,
    fake: &Tensor,
    real: &Tensor,
    condition: &Tensor,
    cfg: &LossConfig,
) -> Result<Feedback, GanError> {
    let m = check_pair(real, fake, condition)?;
    let inv_m = 1.0 / m as f64;
    let (z, tape) = d.logits(fake, condition)?;
    let mut adv = 0.0;
    let mut up = Vec::with_capacity(m);
    for &v in z.data() {
        let s = sigmoid(v);
        match cfg.adversarial {
            AdversarialForm::Paper => {
                adv += (1.0 - clamp_prob(s)).ln();
                up.push(-s * inv_m);
            }
            AdversarialForm::NonSaturating => {
                adv -= clamp_prob(s).ln();
                up.push(-(1.0 - s) * inv_m);
            }
        }
    }
    let (_, mut grad) = backward(&tape, &Tensor::new(z.shape().to_vec(), up)?)?;
    let n = fake.len() as f64;
    let mut l1 = 0.0;
    for ((g, &f), &r) in grad.data_mut().iter_mut().zip(fake.data()).zip(real.data()) {
        let diff = f - r;
        l1 += diff.abs();
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        *g += cfg.l1_weight * sign / n;
    }
    Ok(Feedback {
        adv: adv * inv_m,
        l1: l1 / n,
        input_grad: grad,
    })
}

/// One feedback contribution routed back to the generator pass that produced it.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackItem<'a> {
    pub node: usize,
    /// 1-based modality index.
    pub modality: usize,
    pub pass: &'a GeneratorPass,
    pub input_grad: &'a Tensor,
}

/// Back-propagates every feedback through its pass, weighting node `j` by
/// `priors[j] / N`, and returns the summed generator gradient.
///
/// The batch mean (the `1/m` factor) is already part of each feedback gradient.
pub fn generator_gradient(
    g: &GeneratorModel,
    feedbacks: &[FeedbackItem<'_>],
    priors: &[f64],
) -> Result<Gradients, GanError> {
    let n = priors.len() as f64;
    let mut total = Gradients::zeros_like(&g.params);
    for item in feedbacks {
        if item.pass.version != g.version {
            return Err(GanError::Stale {
                pass: item.pass.version,
                current: g.version,
            });
        }
        let k = item.modality;
        if k == 0 || k > g.modalities {
            return Err(GanError::Modality(k, g.modalities));
        }
        let weight = *priors
            .get(item.node)
            .ok_or_else(|| GanError::Config(format!("no prior for node {}", item.node)))?
            / n;
        let out = &item.pass.output;
        if item.input_grad.rows() != out.rows() || item.input_grad.cols() != g.sample_dim {
            return Err(GanError::Shape(format!(
                "feedback {:?} for output {:?}",
                item.input_grad.shape(),
                out.shape()
            )));
        }
        let mut upstream = Tensor::zeros(out.shape());
        upstream.set_columns((k - 1) * g.sample_dim, item.input_grad);
        let (grads, _) = backward(&item.pass.tape, &upstream)?;
        total.add_scaled(&grads, weight);
    }
    Ok(total)
}

/// Aggregates the round's feedback and applies exactly one Adam update to the
/// generator. Returns the gradient that was applied.
pub fn generator_step(
    g: &mut GeneratorModel,
    feedbacks: &[FeedbackItem<'_>],
    priors: &[f64],
    adam: &Adam,
) -> Result<Gradients, GanError> {
    let grads = generator_gradient(g, feedbacks, priors)?;
    adam.step(&mut g.params, &grads)?;
    g.version += 1;
    Ok(grads)
}
