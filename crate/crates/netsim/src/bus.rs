use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use excall_core::types::Block;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::node::NodeId;

/// Per-message link delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Latency {
    Constant(u64),
    /// `base_ms` plus a uniform draw from `0..=spread_ms`.
    Jitter { base_ms: u64, spread_ms: u64, seed: u64 },
}

impl Latency {
    pub fn min_ms(&self) -> u64 {
        match *self {
            Latency::Constant(ms) => ms,
            Latency::Jitter { base_ms, .. } => base_ms,
        }
    }
}

/// One delivered message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub from: NodeId,
    pub to: NodeId,
    pub seq: u64,
    pub block_number: u64,
    pub sent_at: u64,
    pub delivered_at: u64,
}

struct Envelope {
    seq: u64,
    sent_at: u64,
    deliver_at: u64,
    block: Arc<Block>,
}

#[derive(Default)]
struct Link {
    queue: VecDeque<Envelope>,
    last_deliver_at: u64,
}

pub(crate) struct Bus {
    latency: Latency,
    rng: Option<ChaCha8Rng>,
    links: HashMap<(NodeId, NodeId), Link>,
    seq: u64,
    log: Vec<Delivery>,
}

impl Bus {
    pub(crate) fn new(latency: Latency) -> Self {
        let rng = match latency {
            Latency::Jitter { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Latency::Constant(_) => None,
        };
        Bus { latency, rng, links: HashMap::new(), seq: 0, log: Vec::new() }
    }

    fn delay(&mut self) -> u64 {
        match self.latency {
            Latency::Constant(ms) => ms,
            Latency::Jitter { base_ms, spread_ms, .. } => {
                base_ms + self.rng.as_mut().expect("jitter rng").gen_range(0..=spread_ms)
            }
        }
    }

    pub(crate) fn send(&mut self, from: NodeId, to: NodeId, block: Arc<Block>, now: u64) {
        let delay = self.delay();
        self.seq += 1;
        let link = self.links.entry((from, to)).or_default();
        // A jittered message never overtakes an earlier one on the same link.
        let deliver_at = (now + delay).max(link.last_deliver_at);
        link.last_deliver_at = deliver_at;
        link.queue.push_back(Envelope { seq: self.seq, sent_at: now, deliver_at, block });
    }

    /// Messages for `to` that are due by `now`, oldest first per link.
    pub(crate) fn take_due(&mut self, to: NodeId, now: u64) -> Vec<Arc<Block>> {
        let mut due: Vec<(u64, u64, Arc<Block>)> = Vec::new();
        for (&(from, dest), link) in self.links.iter_mut().filter(|((_, d), _)| *d == to) {
            while link.queue.front().is_some_and(|e| e.deliver_at <= now) {
                let e = link.queue.pop_front().expect("front exists");
                self.log.push(Delivery {
                    from,
                    to: dest,
                    seq: e.seq,
                    block_number: e.block.header.number,
                    sent_at: e.sent_at,
                    delivered_at: now,
                });
                due.push((e.deliver_at, e.seq, e.block));
            }
        }
        due.sort_by_key(|(at, seq, _)| (*at, *seq));
        due.into_iter().map(|(_, _, b)| b).collect()
    }

    pub(crate) fn next_due(&self) -> Option<u64> {
        self.links.values().filter_map(|l| l.queue.front().map(|e| e.deliver_at)).min()
    }

    pub(crate) fn in_flight(&self) -> usize {
        self.links.values().map(|l| l.queue.len()).sum()
    }

    pub(crate) fn log(&self) -> &[Delivery] {
        &self.log
    }
}
