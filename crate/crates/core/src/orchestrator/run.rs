use std::thread;
use std::time::Duration;

use super::config::ExperimentConfig;
use super::data::{derive_seed, participants, Participant, SeedTag};
use super::eval::{evaluate, Evaluation};
use super::node::{synth_channels, NodeLog, NodeState};
use super::OrchestratorError;
use crate::autodiff::{Adam, Tensor};
use crate::gan::{generator_step, FeedbackItem, GeneratorModel, GeneratorPass};
use crate::protocol::{
    link_pair, BandwidthLedger, Control, Direction, Endpoint, Message, Payload, TransportError,
};

const DISC_PHASE: u64 = 0;
const GEN_PHASE: u64 = 1;

/// One logged row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: u64,
    /// Mean discriminator loss per participant, ascending id.
    pub disc_loss: Vec<f64>,
    /// Mean adversarial term over the round's feedback messages.
    pub gen_adv: f64,
    /// Mean L1 term over the round's feedback messages.
    pub gen_l1: f64,
    /// Framed bytes exchanged in the round, both directions.
    pub bytes: u64,
}

#[derive(Debug)]
pub struct TrainingOutcome {
    pub config: ExperimentConfig,
    pub generator: GeneratorModel,
    pub participants: Vec<Participant>,
    pub history: Vec<RoundMetrics>,
    pub ledger: BandwidthLedger,
    pub evaluation: Evaluation,
}

/// The generator side of the protocol. Owns the generator, one link per
/// participant, and the bandwidth ledger; talks to nodes in ascending id order.
pub struct Coordinator {
    seed: u64,
    generator: GeneratorModel,
    participants: Vec<Participant>,
    links: Vec<Endpoint>,
    ledger: BandwidthLedger,
    timeout: Duration,
    adam: Adam,
}

impl Coordinator {
    pub fn new(
        cfg: &ExperimentConfig,
        generator: GeneratorModel,
        participants: Vec<Participant>,
        links: Vec<Endpoint>,
    ) -> Self {
        assert_eq!(participants.len(), links.len(), "one link per participant");
        Self {
            seed: cfg.seed,
            generator,
            participants,
            links,
            ledger: BandwidthLedger::new(),
            timeout: Duration::from_millis(cfg.feedback_timeout_ms),
            adam: cfg.adam,
        }
    }

    pub fn generator(&self) -> &GeneratorModel {
        &self.generator
    }

    pub fn ledger(&self) -> &BandwidthLedger {
        &self.ledger
    }

    pub fn into_parts(self) -> (GeneratorModel, BandwidthLedger) {
        (self.generator, self.ledger)
    }

    fn send(&mut self, j: usize, msg: &Message) -> Result<(), OrchestratorError> {
        self.links[j].send(msg)?;
        self.ledger
            .record(self.participants[j].id, Direction::GeneratorToNode, msg);
        Ok(())
    }

    fn recv(&mut self, j: usize, round: u64) -> Result<Message, OrchestratorError> {
        let node = self.participants[j].id;
        let msg = self.links[j].recv(Some(self.timeout)).map_err(|e| match e {
            TransportError::Timeout { .. } => OrchestratorError::Timeout { node, round },
            other => other.into(),
        })?;
        self.ledger.record(node, Direction::NodeToGenerator, &msg);
        if msg.round != round || msg.node().is_some_and(|n| n != node) {
            return Err(OrchestratorError::Protocol {
                node,
                round,
                expected: format!("a message from node {node} for round {round}"),
                got: format!(
                    "{:?} from node {:?} for round {}",
                    msg.variant(),
                    msg.node(),
                    msg.round
                ),
            });
        }
        Ok(msg)
    }

    fn protocol_error(&self, j: usize, round: u64, expected: &str, got: &Message) -> OrchestratorError {
        OrchestratorError::Protocol {
            node: self.participants[j].id,
            round,
            expected: expected.into(),
            got: format!("{:?}", got.variant()),
        }
    }

    /// Receives one condition batch from participant `j` and answers with
    /// synthetic samples for its modalities.
    fn serve(&mut self, j: usize, round: u64, phase: u64, step: u64) -> Result<GeneratorPass, OrchestratorError> {
        let msg = self.recv(j, round)?;
        let x = match &msg.payload {
            Payload::AuxBatch { x, .. } => x.to_tensor(),
            _ => return Err(self.protocol_error(j, round, "AuxBatch", &msg)),
        };
        let p = &self.participants[j];
        let seed = derive_seed(self.seed, SeedTag::Dropout, &[round, p.id as u64, phase, step]);
        let pass = self.generator.sample(&x, seed)?;
        let reply = Message::new(
            round,
            Payload::SynthBatch {
                node: p.id,
                channels: synth_channels(&pass.output, &p.modalities, self.generator.sample_dim()),
            },
        );
        self.send(j, &reply)?;
        Ok(pass)
    }

    pub fn start_round(&mut self, round: u64) -> Result<(), OrchestratorError> {
        for j in 0..self.links.len() {
            self.send(j, &Message::control(round, Control::Start))?;
        }
        Ok(())
    }

    /// Serves every participant's discriminator steps, then waits for each to
    /// report the phase done.
    pub fn run_discriminator_phase(&mut self, round: u64, steps: usize) -> Result<(), OrchestratorError> {
        for j in 0..self.links.len() {
            for s in 0..steps {
                self.serve(j, round, DISC_PHASE, s as u64)?;
            }
            let msg = self.recv(j, round)?;
            if msg.payload != Payload::Control(Control::DiscPhaseDone) {
                return Err(self.protocol_error(j, round, "DiscPhaseDone", &msg));
            }
        }
        Ok(())
    }

    /// Synthesizes a fresh batch per participant, gathers one feedback per
    /// available modality, and applies one generator update. Returns the mean
    /// adversarial and L1 terms reported by the nodes.
    pub fn run_generator_phase(&mut self, round: u64) -> Result<(f64, f64), OrchestratorError> {
        let mut passes = Vec::with_capacity(self.links.len());
        for j in 0..self.links.len() {
            passes.push(self.serve(j, round, GEN_PHASE, 0)?);
        }
        let mut grads: Vec<(usize, usize, Tensor)> = Vec::new();
        let (mut adv, mut l1) = (0.0, 0.0);
        for j in 0..self.links.len() {
            for &k in &self.participants[j].modalities.clone() {
                let msg = self.recv(j, round)?;
                match &msg.payload {
                    Payload::ErrorFeedback {
                        modality,
                        grad,
                        adv: a,
                        l1: l,
                        ..
                    } if *modality as usize == k => {
                        grads.push((j, k, grad.to_tensor()));
                        adv += f64::from(*a);
                        l1 += f64::from(*l);
                    }
                    _ => {
                        return Err(self.protocol_error(
                            j,
                            round,
                            &format!("ErrorFeedback for modality {k}"),
                            &msg,
                        ))
                    }
                }
            }
        }
        let priors: Vec<f64> = self.participants.iter().map(|p| p.prior).collect();
        let items: Vec<FeedbackItem<'_>> = grads
            .iter()
            .map(|(j, k, g)| FeedbackItem {
                node: *j,
                modality: *k,
                pass: &passes[*j],
                input_grad: g,
            })
            .collect();
        let n = items.len().max(1) as f64;
        generator_step(&mut self.generator, &items, &priors, &self.adam)?;
        Ok((adv / n, l1 / n))
    }

    pub fn shutdown(&mut self, round: u64) -> Result<(), OrchestratorError> {
        for j in 0..self.links.len() {
            self.send(j, &Message::control(round, Control::Shutdown))?;
        }
        Ok(())
    }
}

/// Runs `cfg.rounds` rounds of the protocol with one worker thread per
/// participant and evaluates the final generator.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainingOutcome, OrchestratorError> {
    cfg.validate()?;
    let parts = participants(cfg);
    let generator = GeneratorModel::new(
        &cfg.generator,
        2,
        cfg.modalities,
        2,
        derive_seed(cfg.seed, SeedTag::GeneratorInit, &[]),
    );
    let mut links = Vec::with_capacity(parts.len());
    let mut workers = Vec::with_capacity(parts.len());
    for p in &parts {
        let (here, there) = link_pair(cfg.transport, &format!("node-{}", p.id))?;
        let node = NodeState::new(cfg, p);
        links.push(here);
        workers.push(
            thread::Builder::new()
                .name(format!("node-{}", p.id))
                .spawn(move || node.run(there))
                .map_err(|e| OrchestratorError::NodeFailed(p.id, e.to_string()))?,
        );
    }
    let mut coord = Coordinator::new(cfg, generator, parts.clone(), links);
    let mut scalars = Vec::with_capacity(cfg.rounds as usize);
    let result = (|| {
        for r in 0..cfg.rounds {
            coord.start_round(r)?;
            coord.run_discriminator_phase(r, cfg.disc_steps)?;
            scalars.push(coord.run_generator_phase(r)?);
            if (r + 1) % cfg.log_every == 0 {
                log::info!("round {} of {}", r + 1, cfg.rounds);
            }
        }
        coord.shutdown(cfg.rounds)
    })();
    let (generator, ledger) = coord.into_parts();
    let mut logs: Vec<Result<NodeLog, OrchestratorError>> = Vec::with_capacity(workers.len());
    for (w, p) in workers.into_iter().zip(&parts) {
        logs.push(
            w.join()
                .unwrap_or_else(|_| Err(OrchestratorError::NodeFailed(p.id, "panicked".into()))),
        );
    }
    if let Err(e) = result {
        // A node that failed first shows up here only as a closed link.
        let node_err = logs.into_iter().find_map(Result::err);
        return Err(match (e, node_err) {
            (OrchestratorError::Transport(_), Some(n)) => n,
            (e, _) => e,
        });
    }
    let logs = logs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let history = (0..cfg.rounds)
        .filter(|r| (r + 1) % cfg.log_every == 0 || r + 1 == cfg.rounds)
        .map(|r| RoundMetrics {
            round: r,
            disc_loss: logs.iter().map(|l| l.disc_loss[r as usize]).collect(),
            gen_adv: scalars[r as usize].0,
            gen_l1: scalars[r as usize].1,
            bytes: ledger.round_bytes(r),
        })
        .collect();
    let evaluation = evaluate(cfg, &generator)?;
    Ok(TrainingOutcome {
        config: cfg.clone(),
        generator,
        participants: parts,
        history,
        ledger,
        evaluation,
    })
}
