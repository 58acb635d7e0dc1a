use std::collections::BTreeMap;

use serde::Serialize;

use super::codec::{Message, Variant};

/// Which way a message crossed a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    NodeToGenerator,
    GeneratorToNode,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::NodeToGenerator => "node-to-generator",
            Direction::GeneratorToNode => "generator-to-node",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub messages: u64,
    pub payload_bytes: u64,
    pub framed_bytes: u64,
}

impl Traffic {
    fn add(&mut self, other: &Traffic) {
        self.messages += other.messages;
        self.payload_bytes += other.payload_bytes;
        self.framed_bytes += other.framed_bytes;
    }
}

/// One recorded message, in the order the generator observed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEvent {
    pub seq: u64,
    pub round: u64,
    pub node: u32,
    pub direction: Direction,
    pub variant: Variant,
}

/// Message counts and byte totals per `(node, direction, variant)`, plus the
/// ordered event log and per-round framed totals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BandwidthLedger {
    links: BTreeMap<(u32, Direction, Variant), Traffic>,
    rounds: BTreeMap<u64, u64>,
    events: Vec<LedgerEvent>,
}

impl BandwidthLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, node: u32, direction: Direction, msg: &Message) {
        let framed = msg.framed_len() as u64;
        let t = Traffic {
            messages: 1,
            payload_bytes: msg.payload_len() as u64,
            framed_bytes: framed,
        };
        self.links
            .entry((node, direction, msg.variant()))
            .or_default()
            .add(&t);
        *self.rounds.entry(msg.round).or_default() += framed;
        self.events.push(LedgerEvent {
            seq: self.events.len() as u64,
            round: msg.round,
            node,
            direction,
            variant: msg.variant(),
        });
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn links(&self) -> impl Iterator<Item = (&(u32, Direction, Variant), &Traffic)> {
        self.links.iter()
    }

    pub fn total(&self) -> Traffic {
        let mut t = Traffic::default();
        for v in self.links.values() {
            t.add(v);
        }
        t
    }

    /// Framed bytes recorded for messages stamped with `round`.
    pub fn round_bytes(&self, round: u64) -> u64 {
        self.rounds.get(&round).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkSummary {
    pub node: u32,
    pub direction: Direction,
    pub variant: Variant,
    #[serde(flatten)]
    pub traffic: Traffic,
    /// Framed bytes beyond the numeric payload (headers, shapes, ids).
    pub overhead_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthReport {
    pub total: Traffic,
    pub by_direction: BTreeMap<&'static str, Traffic>,
    pub links: Vec<LinkSummary>,
    pub per_round: Vec<(u64, u64)>,
    /// Parameter count assumed for the parameter-sharing comparison.
    pub baseline_parameters: u64,
    /// `4 × baseline_parameters`: one f32 gradient upload per node per iteration.
    pub baseline_bytes_per_node_iteration: u64,
}

/// Bytes a parameter-sharing scheme would move per node per iteration for a
/// model with `parameters` f32 weights.
pub fn parameter_sharing_bytes(parameters: u64) -> u64 {
    4 * parameters
}

pub fn ledger_report(ledger: &BandwidthLedger, baseline_parameters: u64) -> BandwidthReport {
    let mut by_direction = BTreeMap::new();
    let links = ledger
        .links
        .iter()
        .map(|(&(node, direction, variant), traffic)| {
            by_direction
                .entry(direction.name())
                .or_insert_with(Traffic::default)
                .add(traffic);
            LinkSummary {
                node,
                direction,
                variant,
                traffic: *traffic,
                overhead_bytes: traffic.framed_bytes - traffic.payload_bytes,
            }
        })
        .collect();
    BandwidthReport {
        total: ledger.total(),
        by_direction,
        links,
        per_round: ledger.rounds.iter().map(|(&r, &b)| (r, b)).collect(),
        baseline_parameters,
        baseline_bytes_per_node_iteration: parameter_sharing_bytes(baseline_parameters),
    }
}
