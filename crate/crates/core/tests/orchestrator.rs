//! Round protocol, settings and evaluation helpers.

mod common;

use std::thread;

use asyndgan::autodiff::{Adam, Tensor};
use asyndgan::gan::{
    discriminator_loss, generator_feedback, DiscriminatorConfig, DiscriminatorModel,
    GeneratorConfig, GeneratorModel, LossConfig,
};
use asyndgan::orchestrator::{
    complete_modality, derive_seed, participants, run_training, Coordinator, ExperimentConfig,
    NodeState, Participant, SeedTag, Setting,
};
use asyndgan::protocol::{
    link_pair, Control, Direction, Endpoint, Message, Payload, TransportKind, Variant, WireTensor,
};
use asyndgan::toytask::{sample_noise, TOY_CENTERS};
use common::{numeric_grad, random_tensor, rel_err};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn short(rounds: u64) -> ExperimentConfig {
    ExperimentConfig {
        rounds,
        log_every: 1,
        eval: asyndgan::orchestrator::EvalConfig {
            samples: 200,
            radius: 3.0,
        },
        ..ExperimentConfig::default()
    }
}

fn param_bits(g: &GeneratorModel) -> Vec<(String, Vec<u64>)> {
    g.params
        .iter()
        .map(|(n, t)| (n.to_string(), t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn zero_rounds_returns_the_initial_generator() {
    let cfg = short(0);
    let out = run_training(&cfg).unwrap();
    let init = GeneratorModel::new(
        &cfg.generator,
        2,
        1,
        2,
        derive_seed(cfg.seed, SeedTag::GeneratorInit, &[]),
    );
    assert_eq!(param_bits(&out.generator), param_bits(&init));
    assert!(out.history.is_empty());
    // Only the shutdown notices cross the wire.
    assert_eq!(out.ledger.total().messages, cfg.nodes.len() as u64);
}

#[test]
fn inproc_and_tcp_runs_are_identical() {
    let mut cfg = short(15);
    cfg.disc_steps = 2;
    let a = run_training(&cfg).unwrap();
    cfg.transport = TransportKind::Tcp;
    let b = run_training(&cfg).unwrap();
    assert_eq!(param_bits(&a.generator), param_bits(&b.generator));
    assert_eq!(a.history, b.history);
    assert_eq!(a.ledger, b.ledger);
    assert_eq!(a.evaluation.generated, b.evaluation.generated);
}

#[test]
fn same_seed_same_run_different_seed_different_run() {
    let cfg = short(5);
    let a = run_training(&cfg).unwrap();
    let b = run_training(&cfg).unwrap();
    assert_eq!(param_bits(&a.generator), param_bits(&b.generator));
    let c = run_training(&ExperimentConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(param_bits(&a.generator), param_bits(&c.generator));
}

#[test]
fn single_node_asyndgan_reduces_to_centralized() {
    let mut cfg = short(10);
    cfg.nodes.truncate(1);
    cfg.nodes[0].centers = TOY_CENTERS.to_vec();
    let a = run_training(&cfg).unwrap();
    let b = run_training(&ExperimentConfig {
        setting: Setting::SynAll,
        ..cfg
    })
    .unwrap();
    assert_eq!(param_bits(&a.generator), param_bits(&b.generator));
    assert_eq!(a.history, b.history);
}

fn event(node: u32, direction: Direction, variant: Variant) -> (u32, Direction, Variant) {
    (node, direction, variant)
}

#[test]
fn rounds_follow_the_phase_barriers() {
    use Direction::{GeneratorToNode as Down, NodeToGenerator as Up};
    let cfg = ExperimentConfig {
        rounds: 3,
        disc_steps: 2,
        log_every: 1,
        ..ExperimentConfig::missing_modality()
    };
    let out = run_training(&cfg).unwrap();
    for r in 0..cfg.rounds {
        let mut expected = Vec::new();
        for p in &out.participants {
            expected.push(event(p.id, Down, Variant::Control));
        }
        for p in &out.participants {
            for _ in 0..cfg.disc_steps {
                expected.push(event(p.id, Up, Variant::AuxBatch));
                expected.push(event(p.id, Down, Variant::SynthBatch));
            }
            expected.push(event(p.id, Up, Variant::Control));
        }
        for p in &out.participants {
            expected.push(event(p.id, Up, Variant::AuxBatch));
            expected.push(event(p.id, Down, Variant::SynthBatch));
        }
        for p in &out.participants {
            for _ in &p.modalities {
                expected.push(event(p.id, Up, Variant::ErrorFeedback));
            }
        }
        let got: Vec<_> = out
            .ledger
            .events()
            .iter()
            .filter(|e| e.round == r)
            .map(|e| event(e.node, e.direction, e.variant))
            .collect();
        assert_eq!(got, expected, "round {r}");
    }
    let seqs: Vec<u64> = out.ledger.events().iter().map(|e| e.round).collect();
    assert!(seqs.windows(2).all(|w| w[0] <= w[1]), "rounds interleave");
    assert_eq!(out.history.len(), 3);
}

#[test]
fn nodes_hold_and_report_only_their_modalities() {
    let cfg = ExperimentConfig::missing_modality();
    for p in participants(&cfg) {
        let node = NodeState::new(&cfg, &p);
        assert_eq!(node.data().channels.len(), p.modalities.len());
        assert_eq!(node.discriminators.len(), p.modalities.len());
        assert!(p.modalities.len() < cfg.modalities);
    }
    let out = run_training(&ExperimentConfig {
        rounds: 2,
        ..cfg
    })
    .unwrap();
    for p in &out.participants {
        let fb = out
            .ledger
            .events()
            .iter()
            .filter(|e| e.node == p.id && e.variant == Variant::ErrorFeedback)
            .count();
        assert_eq!(fb, 2 * p.modalities.len());
    }
}

#[test]
fn discriminator_learns_against_a_frozen_distant_fake() {
    let cfg = DiscriminatorConfig {
        conditioned: false,
        ..Default::default()
    };
    let mut d = DiscriminatorModel::new(&cfg, 2, 2, 4);
    let adam = Adam::with_lr(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let real = sample_noise(&mut rng, 64, 0.5);
    let fake = Tensor::filled(&[64, 2], 40.0);
    let x = Tensor::zeros(&[64, 2]);
    let (first, _) = discriminator_loss(&d, &real, &fake, &x).unwrap();
    let mut last = first;
    for _ in 0..50 {
        let (loss, grads) = discriminator_loss(&d, &real, &fake, &x).unwrap();
        adam.step(&mut d.params, &grads).unwrap();
        last = loss;
    }
    assert!(last < 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn completion_picks_the_requested_channel() {
    let g = GeneratorModel::new(&GeneratorConfig::default(), 2, 3, 2, 1);
    let x = Tensor::filled(&[4, 2], 0.3);
    assert!(complete_modality(&g, &x, 4, 0).is_err());
    assert!(complete_modality(&g, &x, 0, 0).is_err());
    let full = g.sample(&x, 0).unwrap().output;
    for s in 1..=3 {
        let ch = complete_modality(&g, &x, s, 0).unwrap();
        assert_eq!(ch, full.columns((s - 1) * 2, 2));
    }
    let single = GeneratorModel::new(&GeneratorConfig::default(), 2, 1, 2, 1);
    assert_eq!(
        complete_modality(&single, &x, 1, 0).unwrap(),
        single.sample(&x, 0).unwrap().output
    );
}

struct Stub {
    id: u32,
    modalities: Vec<usize>,
    discs: Vec<DiscriminatorModel>,
    x: Tensor,
    real: Tensor,
}

fn serve_one_round(stub: Stub, mut link: Endpoint, loss: LossConfig) {
    let start = link.recv(None).unwrap();
    assert_eq!(start.payload, Payload::Control(Control::Start));
    link.send(&Message::control(0, Control::DiscPhaseDone)).unwrap();
    let x = WireTensor::from_tensor(&stub.x);
    link.send(&Message::new(0, Payload::AuxBatch { node: stub.id, x })).unwrap();
    let Payload::SynthBatch { channels, .. } = link.recv(None).unwrap().payload else {
        panic!("expected synthetic batch")
    };
    for (ch, d) in channels.iter().zip(&stub.discs) {
        let fb = generator_feedback(d, &ch.samples.to_tensor(), &stub.real, &stub.x, &loss).unwrap();
        link.send(&Message::new(
            0,
            Payload::ErrorFeedback {
                node: stub.id,
                modality: ch.modality,
                grad: WireTensor::from_tensor(&fb.input_grad),
                adv: fb.adv as f32,
                l1: fb.l1 as f32,
            },
        ))
        .unwrap();
    }
    assert_eq!(link.recv(None).unwrap().payload, Payload::Control(Control::Shutdown));
}

/// One generator round through the wire, compared with a finite-difference
/// gradient of the prior-weighted loss of the composed G→D network.
#[test]
fn generator_round_matches_composed_network_gradient() {
    let gcfg = GeneratorConfig {
        hidden: vec![6, 6],
        dropout: 0.0,
        ..GeneratorConfig::default()
    };
    let dcfg = DiscriminatorConfig {
        hidden: vec![5],
        conditioned: true,
        ..Default::default()
    };
    let loss = LossConfig {
        l1_weight: 0.0,
        ..LossConfig::default()
    };
    // With both moment rates at zero and a huge eps, the first Adam step moves
    // every weight by -lr·g/(|g| + eps), i.e. -g to within 1e-6 relative.
    let cfg = ExperimentConfig {
        adam: Adam {
            lr: 1e6,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e6,
        },
        ..ExperimentConfig::default()
    };
    let g0 = GeneratorModel::new(&gcfg, 2, 2, 2, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let priors = [0.3, 0.7];
    let layout: [&[usize]; 2] = [&[1, 2], &[2]];
    let stubs: Vec<Stub> = layout
        .iter()
        .enumerate()
        .map(|(j, mods)| Stub {
            id: j as u32,
            modalities: mods.to_vec(),
            discs: mods
                .iter()
                .map(|&k| DiscriminatorModel::new(&dcfg, 2, 2, 100 + (j * 10 + k) as u64))
                .collect(),
            x: random_tensor(&mut rng, &[4, 2], 1.0),
            real: random_tensor(&mut rng, &[4, 2], 1.0),
        })
        .collect();
    let oracle: Vec<(Vec<usize>, Vec<DiscriminatorModel>, Tensor)> = stubs
        .iter()
        .map(|s| (s.modalities.clone(), s.discs.clone(), s.x.clone()))
        .collect();

    let parts: Vec<Participant> = stubs
        .iter()
        .map(|s| Participant {
            id: s.id,
            sources: vec![s.id as usize],
            modalities: s.modalities.clone(),
            prior: priors[s.id as usize],
            count: 4,
        })
        .collect();
    let mut links = Vec::new();
    let mut workers = Vec::new();
    for s in stubs {
        let (here, there) = link_pair(TransportKind::Inproc, "stub").unwrap();
        links.push(here);
        workers.push(thread::spawn(move || serve_one_round(s, there, loss)));
    }
    let mut coord = Coordinator::new(&cfg, g0.clone(), parts, links);
    coord.start_round(0).unwrap();
    coord.run_discriminator_phase(0, 0).unwrap();
    coord.run_generator_phase(0).unwrap();
    coord.shutdown(1).unwrap();
    for w in workers {
        w.join().unwrap();
    }

    let objective = |g: &GeneratorModel| -> f64 {
        let mut total = 0.0;
        for (j, (mods, discs, x)) in oracle.iter().enumerate() {
            let out = g.sample(x, 0).unwrap().output;
            for (&k, d) in mods.iter().zip(discs) {
                let fake = g.channel(&out, k).unwrap();
                let fb = generator_feedback(d, &fake, &fake, x, &loss).unwrap();
                total += priors[j] / 2.0 * fb.adv;
            }
        }
        total
    };
    let mut checked = 0;
    for (name, before) in g0.params.iter() {
        let after = coord.generator().params.get(name).unwrap();
        let fd = numeric_grad(before, 1e-5, |t| {
            let mut g = g0.clone();
            *g.params.get_mut(name).unwrap() = t.clone();
            objective(&g)
        });
        for ((&b, &a), &d) in before.data().iter().zip(after.data()).zip(&fd) {
            let step = b - a;
            assert!(
                rel_err(step, d) < 1e-3 || (step - d).abs() < 1e-7,
                "{name}: step {step} vs fd {d}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, g0.params.count());
}
