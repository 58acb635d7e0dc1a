use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ConditionSource, ExperimentConfig};
use super::data::{derive_seed, LocalData, Participant, SeedTag};
use super::OrchestratorError;
use crate::autodiff::{Adam, Tensor};
use crate::gan::{discriminator_loss, generator_feedback, DiscriminatorModel, LossConfig};
use crate::protocol::{Control, Endpoint, Message, Payload, SynthChannel, WireTensor};
use crate::toytask::sample_noise;

/// A data node: its private data, one discriminator per available modality,
/// and its own random stream. It never sees generator parameters.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: u32,
    pub modalities: Vec<usize>,
    pub discriminators: Vec<DiscriminatorModel>,
    data: LocalData,
    rng: ChaCha8Rng,
    condition: ConditionSource,
    batch_size: usize,
    disc_steps: usize,
    loss: LossConfig,
    adam: Adam,
}

/// Mean discriminator loss per round, as seen by one node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeLog {
    pub disc_loss: Vec<f64>,
}

struct Batch {
    condition: Tensor,
    real: Vec<Tensor>,
}

impl NodeState {
    pub fn new(cfg: &ExperimentConfig, p: &Participant) -> Self {
        let discriminators = p
            .modalities
            .iter()
            .map(|&k| {
                DiscriminatorModel::new(
                    &cfg.discriminator,
                    2,
                    2,
                    derive_seed(
                        cfg.seed,
                        SeedTag::DiscriminatorInit,
                        &[p.id as u64, k as u64],
                    ),
                )
            })
            .collect();
        Self {
            id: p.id,
            modalities: p.modalities.clone(),
            discriminators,
            data: LocalData::for_participant(cfg, p),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SeedTag::Node, &[p.id as u64])),
            condition: cfg.condition,
            batch_size: cfg.batch_size,
            disc_steps: cfg.disc_steps,
            loss: cfg.loss,
            adam: cfg.adam,
        }
    }

    pub fn data(&self) -> &LocalData {
        &self.data
    }

    fn sample_batch(&mut self) -> Batch {
        let idx = self.data.sample_indices(&mut self.rng, self.batch_size);
        let condition = match self.condition {
            ConditionSource::Noise { variance } => {
                sample_noise(&mut self.rng, self.batch_size, variance)
            }
            ConditionSource::Paired { scale } => self.data.base.select_rows(&idx).scale(scale),
        };
        let real = self.data.channels.iter().map(|c| c.select_rows(&idx)).collect();
        Batch { condition, real }
    }

    fn expect_synth(&self, msg: Message, round: u64) -> Result<Vec<Tensor>, OrchestratorError> {
        let got = format!("{:?} (round {})", msg.variant(), msg.round);
        match msg.payload {
            Payload::SynthBatch { node, channels }
                if node == self.id
                    && msg.round == round
                    && channels.len() == self.modalities.len()
                    && channels
                        .iter()
                        .zip(&self.modalities)
                        .all(|(c, &k)| c.modality as usize == k) =>
            {
                Ok(channels.iter().map(|c| c.samples.to_tensor()).collect())
            }
            _ => Err(OrchestratorError::Protocol {
                node: self.id,
                round,
                expected: "SynthBatch for this node's modalities".into(),
                got,
            }),
        }
    }

    fn request(
        &mut self,
        link: &mut Endpoint,
        round: u64,
    ) -> Result<(Batch, Vec<Tensor>), OrchestratorError> {
        let batch = self.sample_batch();
        link.send(&Message::new(
            round,
            Payload::AuxBatch {
                node: self.id,
                x: WireTensor::from_tensor(&batch.condition),
            },
        ))?;
        let fake = self.expect_synth(link.recv(None)?, round)?;
        Ok((batch, fake))
    }

    /// `disc_steps` updates of every local discriminator; returns the mean loss.
    pub fn discriminator_phase(
        &mut self,
        link: &mut Endpoint,
        round: u64,
    ) -> Result<f64, OrchestratorError> {
        let mut total = 0.0;
        for _ in 0..self.disc_steps {
            let (batch, fake) = self.request(link, round)?;
            for (i, d) in self.discriminators.iter_mut().enumerate() {
                let (loss, grads) = discriminator_loss(d, &batch.real[i], &fake[i], &batch.condition)?;
                self.adam.step(&mut d.params, &grads).map_err(crate::gan::GanError::from)?;
                total += loss;
            }
        }
        link.send(&Message::control(round, Control::DiscPhaseDone))?;
        Ok(total / (self.disc_steps * self.discriminators.len()) as f64)
    }

    /// Scores a fresh synthetic batch and returns one error feedback per modality.
    pub fn generator_phase(
        &mut self,
        link: &mut Endpoint,
        round: u64,
    ) -> Result<(), OrchestratorError> {
        let (batch, fake) = self.request(link, round)?;
        for (i, d) in self.discriminators.iter().enumerate() {
            let fb = generator_feedback(d, &fake[i], &batch.real[i], &batch.condition, &self.loss)?;
            link.send(&Message::new(
                round,
                Payload::ErrorFeedback {
                    node: self.id,
                    modality: self.modalities[i] as u8,
                    grad: WireTensor::from_tensor(&fb.input_grad),
                    adv: fb.adv as f32,
                    l1: fb.l1 as f32,
                },
            ))?;
        }
        Ok(())
    }

    /// Serves rounds until the generator sends `Shutdown`.
    pub fn run(mut self, mut link: Endpoint) -> Result<NodeLog, OrchestratorError> {
        let mut log = NodeLog::default();
        loop {
            let msg = link.recv(None)?;
            match msg.payload {
                Payload::Control(Control::Shutdown) => return Ok(log),
                Payload::Control(Control::Start) => {
                    let round = msg.round;
                    log.disc_loss.push(self.discriminator_phase(&mut link, round)?);
                    self.generator_phase(&mut link, round)?;
                }
                _ => {
                    return Err(OrchestratorError::Protocol {
                        node: self.id,
                        round: msg.round,
                        expected: "Start or Shutdown".into(),
                        got: format!("{:?}", msg.variant()),
                    })
                }
            }
        }
    }
}

/// Packs the requested modality channels of a generator output for the wire.
pub(crate) fn synth_channels(
    output: &Tensor,
    modalities: &[usize],
    sample_dim: usize,
) -> Vec<SynthChannel> {
    modalities
        .iter()
        .map(|&k| SynthChannel {
            modality: k as u8,
            samples: WireTensor::from_tensor(&output.columns((k - 1) * sample_dim, sample_dim)),
        })
        .collect()
}
