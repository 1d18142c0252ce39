//! Ordered log of everything disclosed during reconciliation.
//!
//! Accounting convention: every parity bit, in either direction, is one leaked bit.
//! Bob's reply during BINARY ("first half" / "second half") is one bit. When Bob
//! announces a corrected position he spends ceil(log2 k) bits for a block of size k.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    BlockParity,
    BinaryParity,
    BinaryReply,
    CorrectionAnnounce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub direction: Direction,
    pub kind: MessageKind,
    pub pass: u32,
    pub block: u64,
    pub payload_bits: u32,
    /// Parity bit, half selector, or in-block offset of a correction.
    pub value: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub pass: u32,
    pub position: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassInfo {
    pub pass: u32,
    pub block_size: usize,
    pub n_blocks: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeTranscript {
    pub messages: Vec<Message>,
    pub leak_ab_bits: u64,
    pub leak_ba_bits: u64,
    pub corrections: Vec<Correction>,
    pub passes: Vec<PassInfo>,
    pub final_mismatch: usize,
    /// Message count, maintained even when individual messages are not retained.
    pub message_count: u64,
    #[serde(skip)]
    drop_messages: bool,
}

impl CascadeTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    /// A transcript that keeps counters but not the per-message log.
    pub fn counters_only() -> Self {
        CascadeTranscript { drop_messages: true, ..Self::default() }
    }

    pub fn retains_messages(&self) -> bool {
        !self.drop_messages
    }

    pub fn record(&mut self, direction: Direction, kind: MessageKind, pass: u32, block: u64, payload_bits: u32, value: u64) {
        match direction {
            Direction::AliceToBob => self.leak_ab_bits += payload_bits as u64,
            Direction::BobToAlice => self.leak_ba_bits += payload_bits as u64,
        }
        if !self.drop_messages {
            self.messages.push(Message { seq: self.message_count, direction, kind, pass, block, payload_bits, value });
        }
        self.message_count += 1;
    }

    pub fn leak_total(&self) -> u64 {
        self.leak_ab_bits + self.leak_ba_bits
    }

    /// Number of block-parity messages in each direction.
    pub fn block_parity_counts(&self) -> (usize, usize) {
        let count = |d| {
            self.messages
                .iter()
                .filter(|m| m.kind == MessageKind::BlockParity && m.direction == d)
                .count()
        };
        (count(Direction::AliceToBob), count(Direction::BobToAlice))
    }

    /// One JSON object per line, in order.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::with_capacity(self.messages.len() * 96);
        for m in &self.messages {
            let line = serde_json::to_string(m).expect("message serializes");
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

/// Parses a newline-delimited message log. Blank lines are skipped; sequence numbers
/// must be strictly increasing.
pub fn parse_ndjson(text: &str) -> Result<Vec<Message>> {
    let mut out: Vec<Message> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i as u64 + 1;
        let m: Message = serde_json::from_str(line)
            .map_err(|e| Error::MalformedLine { line: line_no, reason: e.to_string() })?;
        if let Some(prev) = out.last() {
            if m.seq <= prev.seq {
                return Err(Error::MalformedLine { line: line_no, reason: "sequence numbers must increase".into() });
            }
        }
        if m.kind == MessageKind::BlockParity || m.kind == MessageKind::BinaryParity || m.kind == MessageKind::BinaryReply {
            if m.payload_bits != 1 || m.value > 1 {
                return Err(Error::MalformedLine { line: line_no, reason: "parity messages carry exactly one bit".into() });
            }
        }
        let expected = match m.kind {
            MessageKind::BinaryParity => Some(Direction::AliceToBob),
            MessageKind::BinaryReply | MessageKind::CorrectionAnnounce => Some(Direction::BobToAlice),
            MessageKind::BlockParity => None,
        };
        if expected.is_some_and(|d| d != m.direction) {
            return Err(Error::MalformedLine { line: line_no, reason: format!("{:?} sent in the wrong direction", m.kind) });
        }
        out.push(m);
    }
    Ok(out)
}

/// Independent recount of (Alice-to-Bob, Bob-to-Alice) bits from a message log.
pub fn recount(messages: &[Message]) -> (u64, u64) {
    messages.iter().fold((0, 0), |(ab, ba), m| match m.direction {
        Direction::AliceToBob => (ab + m.payload_bits as u64, ba),
        Direction::BobToAlice => (ab, ba + m.payload_bits as u64),
    })
}
