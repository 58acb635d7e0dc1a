use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::{AutodiffError, Gradients, ParamStore, Tensor};

/// One entry of the fixed layer menu.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `x · W + b` with parameters `{name}.weight` (`[inputs, outputs]`) and `{name}.bias`.
    Linear {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    /// Multiplies by a fixed constant.
    Scale(f64),
    /// Inverted dropout at the rate passed to [`forward`].
    Dropout,
    /// Appends the side input (e.g. a conditioning variable) as extra columns.
    Concat { width: usize },
}

impl Layer {
    pub fn linear(name: impl Into<String>, inputs: usize, outputs: usize) -> Self {
        Layer::Linear {
            name: name.into(),
            inputs,
            outputs,
        }
    }
}

/// A sequential network over `[batch, features]` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Arch {
    pub input_width: usize,
    pub layers: Vec<Layer>,
}

impl Arch {
    pub fn new(input_width: usize, layers: Vec<Layer>) -> Self {
        Self {
            input_width,
            layers,
        }
    }

    pub fn output_width(&self) -> usize {
        let mut w = self.input_width;
        for layer in &self.layers {
            match layer {
                Layer::Linear { outputs, .. } => w = *outputs,
                Layer::Concat { width } => w += width,
                _ => {}
            }
        }
        w
    }

    /// Glorot-uniform weights and zero biases for every linear layer.
    pub fn init_params(&self, rng: &mut impl Rng) -> ParamStore {
        let mut store = ParamStore::new();
        for layer in &self.layers {
            if let Layer::Linear {
                name,
                inputs,
                outputs,
            } = layer
            {
                let limit = (6.0 / (*inputs + *outputs) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let data = (0..inputs * outputs).map(|_| dist.sample(rng)).collect();
                store.insert(
                    format!("{name}.weight"),
                    Tensor::new(vec![*inputs, *outputs], data).expect("shape"),
                );
                store.insert(format!("{name}.bias"), Tensor::zeros(&[*outputs]));
            }
        }
        store
    }

    /// Same architecture with every linear layer name prefixed.
    pub fn prefixed(&self, prefix: &str) -> Arch {
        Arch {
            input_width: self.input_width,
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Linear {
                        name,
                        inputs,
                        outputs,
                    } => Layer::Linear {
                        name: format!("{prefix}{name}"),
                        inputs: *inputs,
                        outputs: *outputs,
                    },
                    other => other.clone(),
                })
                .collect(),
        }
    }
}

/// Dropout rate and the seed its mask is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub seed: u64,
}

impl DropoutSpec {
    pub const NONE: DropoutSpec = DropoutSpec { rate: 0.0, seed: 0 };

    pub fn new(rate: f64, seed: u64) -> Self {
        Self { rate, seed }
    }
}

#[derive(Debug, Clone)]
enum Op {
    MatMul { weight_name: String, weight: Tensor },
    AddBias { bias_name: String, bias: Tensor },
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
    Scale { factor: f64 },
    DropoutMask { mask: Tensor },
    Concat { side: Tensor },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    input: Tensor,
    output: Tensor,
}

/// Record of one forward pass, sufficient for [`backward`] without the parameters.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    input: Tensor,
    output: Tensor,
}

impl Tape {
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Primitive names in recording order.
    pub fn primitives(&self) -> Vec<&'static str> {
        self.nodes
            .iter()
            .map(|n| match n.op {
                Op::MatMul { .. } => "matmul",
                Op::AddBias { .. } => "add-bias",
                Op::LeakyRelu { .. } => "leaky-relu",
                Op::Tanh => "tanh",
                Op::Sigmoid => "sigmoid",
                Op::Scale { .. } => "scale",
                Op::DropoutMask { .. } => "dropout-mask-apply",
                Op::Concat { .. } => "concat",
            })
            .collect()
    }

    /// Recomputes every primitive from its cached input and checks the cached
    /// output is reproduced bit for bit.
    pub fn replay_matches(&self) -> bool {
        let mut prev = &self.input;
        for node in &self.nodes {
            if node.input.data() != prev.data() || node.input.shape() != prev.shape() {
                return false;
            }
            let again = apply(&node.op, &node.input);
            let same = again.shape() == node.output.shape()
                && again
                    .data()
                    .iter()
                    .zip(node.output.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return false;
            }
            prev = &node.output;
        }
        prev.data() == self.output.data()
    }
}

fn apply(op: &Op, x: &Tensor) -> Tensor {
    match op {
        Op::MatMul { weight, .. } => x.matmul(weight),
        Op::AddBias { bias, .. } => {
            let mut out = x.clone();
            let c = out.cols();
            for row in out.data_mut().chunks_mut(c.max(1)) {
                for (v, b) in row.iter_mut().zip(bias.data()) {
                    *v += b;
                }
            }
            out
        }
        Op::LeakyRelu { slope } => x.map(|v| if v > 0.0 { v } else { slope * v }),
        Op::Tanh => x.map(f64::tanh),
        Op::Sigmoid => x.map(sigmoid),
        Op::Scale { factor } => x.scale(*factor),
        Op::DropoutMask { mask } => x.zip_map(mask, |a, m| a * m),
        Op::Concat { side } => x.hcat(side),
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dropout_mask(shape: &[usize], spec: DropoutSpec, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let keep = 1.0 / (1.0 - spec.rate);
    let data = (0..n)
        .map(|_| {
            if spec.rate > 0.0 && rng.random::<f64>() < spec.rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("mask shape")
}

/// Runs `arch` on `input`, recording every primitive.
///
/// `side` feeds [`Layer::Concat`]; dropout masks come from a ChaCha stream seeded
/// with `dropout.seed`, one mask per dropout layer in order.
pub fn forward(
    params: &ParamStore,
    arch: &Arch,
    input: &Tensor,
    side: Option<&Tensor>,
    dropout: DropoutSpec,
) -> Result<(Tensor, Tape), AutodiffError> {
    if !(0.0..1.0).contains(&dropout.rate) {
        return Err(AutodiffError::InvalidRate(dropout.rate));
    }
    if input.shape().len() != 2 || input.cols() != arch.input_width {
        return Err(AutodiffError::Dimension {
            layer: "input".into(),
            expected: format!("[batch, {}]", arch.input_width),
            actual: format!("{:?}", input.shape()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(dropout.seed);
    let mut nodes = Vec::with_capacity(arch.layers.len() * 2);
    let mut x = input.clone();
    let mut push = |op: Op, x: &mut Tensor| {
        let out = apply(&op, x);
        let inp = std::mem::replace(x, out.clone());
        nodes.push(Node {
            op,
            input: inp,
            output: out,
        });
    };
    for layer in &arch.layers {
        match layer {
            Layer::Linear {
                name,
                inputs,
                outputs,
            } => {
                let wname = format!("{name}.weight");
                let bname = format!("{name}.bias");
                let w = params.require(&wname)?;
                let b = params.require(&bname)?;
                if x.cols() != *inputs || w.shape() != [*inputs, *outputs] || b.len() != *outputs
                {
                    return Err(AutodiffError::Dimension {
                        layer: name.clone(),
                        expected: format!("input width {inputs}, weight [{inputs}, {outputs}]"),
                        actual: format!("input width {}, weight {:?}", x.cols(), w.shape()),
                    });
                }
                push(
                    Op::MatMul {
                        weight_name: wname,
                        weight: w.clone(),
                    },
                    &mut x,
                );
                push(
                    Op::AddBias {
                        bias_name: bname,
                        bias: b.clone(),
                    },
                    &mut x,
                );
            }
            Layer::LeakyRelu(slope) => push(Op::LeakyRelu { slope: *slope }, &mut x),
            Layer::Tanh => push(Op::Tanh, &mut x),
            Layer::Sigmoid => push(Op::Sigmoid, &mut x),
            Layer::Scale(factor) => push(Op::Scale { factor: *factor }, &mut x),
            Layer::Dropout => {
                let mask = dropout_mask(x.shape(), dropout, &mut rng);
                push(Op::DropoutMask { mask }, &mut x);
            }
            Layer::Concat { width } => {
                let side = side.ok_or_else(|| AutodiffError::Dimension {
                    layer: "concat".into(),
                    expected: format!("side input of width {width}"),
                    actual: "none".into(),
                })?;
                if side.rows() != x.rows() || side.cols() != *width {
                    return Err(AutodiffError::Dimension {
                        layer: "concat".into(),
                        expected: format!("[{}, {}]", x.rows(), width),
                        actual: format!("{:?}", side.shape()),
                    });
                }
                push(Op::Concat { side: side.clone() }, &mut x);
            }
        }
    }
    if !x.is_finite() {
        return Err(AutodiffError::NonFinite("forward output".into()));
    }
    let tape = Tape {
        nodes,
        input: input.clone(),
        output: x.clone(),
    };
    Ok((x, tape))
}

/// Gradients of `⟨upstream, output⟩` with respect to every parameter used by the
/// tape and with respect to the tape's primary input.
pub fn backward(tape: &Tape, upstream: &Tensor) -> Result<(Gradients, Tensor), AutodiffError> {
    if upstream.shape() != tape.output.shape() {
        return Err(AutodiffError::Dimension {
            layer: "upstream".into(),
            expected: format!("{:?}", tape.output.shape()),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let mut grads = Gradients::new();
    let mut g = upstream.clone();
    for node in tape.nodes.iter().rev() {
        g = match &node.op {
            Op::MatMul {
                weight_name,
                weight,
            } => {
                grads.accumulate(weight_name, &node.input.t_matmul(&g), 1.0);
                g.matmul_t(weight)
            }
            Op::AddBias { bias_name, bias } => {
                let c = g.cols();
                let mut db = vec![0.0; bias.len()];
                for row in g.data().chunks(c.max(1)) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                let db = Tensor::new(bias.shape().to_vec(), db)?;
                grads.accumulate(bias_name, &db, 1.0);
                g
            }
            Op::LeakyRelu { slope } => {
                node.input
                    .zip_map(&g, |x, gv| if x > 0.0 { gv } else { slope * gv })
            }
            Op::Tanh => node.output.zip_map(&g, |y, gv| gv * (1.0 - y * y)),
            Op::Sigmoid => node.output.zip_map(&g, |y, gv| gv * y * (1.0 - y)),
            Op::Scale { factor } => g.scale(*factor),
            Op::DropoutMask { mask } => g.zip_map(mask, |gv, m| gv * m),
            Op::Concat { .. } => g.columns(0, node.input.cols()),
        };
    }
    if !g.is_finite() || grads.iter().any(|(_, t)| !t.is_finite()) {
        return Err(AutodiffError::NonFinite("backward".into()));
    }
    Ok((grads, g))
}
