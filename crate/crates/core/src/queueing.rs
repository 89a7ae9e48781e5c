//! Data queues, shadow counters and packet bookkeeping.
//!
//! Three data-queue layouts are supported:
//! * per-hop: one FIFO queue `Q_{l,k}` per link and hop class,
//! * per-link: one queue `Q_l` per link with FIFO or hop-class priority order,
//! * per-flow: one FIFO queue per flow and hop, i.e. per node and flow (used by
//!   back-pressure).
//!
//! Every data queue has a real-valued shadow counter with the same index.
//! Transmitted packets are held in flight until the next slot begins
//! (store-and-forward); a packet leaving its last hop at slot `t` is delivered
//! at `t + 1`.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::topology::{FlowId, FlowSet, LinkId, NetworkGraph};

pub type QueueId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("unknown flow {0}")]
    UnknownFlow(FlowId),
    #[error("service budget must be at least 1")]
    ZeroBudget,
    #[error("shadow arrivals are undefined at slot 0")]
    ZeroSlot,
    #[error("per-hop queues need the hop class to serve on link {0}")]
    HopClassRequired(LinkId),
    #[error("link {link} has no queue for hop class {hop}")]
    NoSuchQueue { link: LinkId, hop: usize },
    #[error("operation needs {expected} queues, bank is {actual}")]
    WrongMode { expected: &'static str, actual: &'static str },
    #[error("expected {expected} cumulative arrival counters, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discipline {
    Fifo,
    /// Smaller hop class first; FIFO within a class.
    Priority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueueMode {
    PerHop,
    PerLink(Discipline),
    PerFlow,
}

impl QueueMode {
    pub fn name(self) -> &'static str {
        match self {
            QueueMode::PerHop => "per-hop",
            QueueMode::PerLink(Discipline::Fifo) => "per-link FIFO",
            QueueMode::PerLink(Discipline::Priority) => "per-link priority",
            QueueMode::PerFlow => "per-flow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueueKey {
    Link(LinkId),
    /// Link and 1-based hop class.
    LinkHop(LinkId, usize),
    /// Flow and 1-based hop; the queue sits at the hop's transmitting node.
    FlowHop(FlowId, usize),
}

/// Which queues exist and where each flow's packets wait at each hop.
#[derive(Debug, Clone)]
pub struct QueueLayout {
    mode: QueueMode,
    keys: Vec<QueueKey>,
    link_of: Vec<LinkId>,
    per_link: Vec<Vec<QueueId>>,
    by_flow_hop: Vec<Vec<QueueId>>,
}

impl QueueLayout {
    pub fn new(graph: &NetworkGraph, flows: &FlowSet, mode: QueueMode) -> Self {
        let n = graph.num_links();
        let mut keys = Vec::new();
        match mode {
            QueueMode::PerLink(_) => keys.extend((0..n).map(QueueKey::Link)),
            QueueMode::PerHop => {
                for l in 0..n {
                    for k in flows.incidence().hop_classes(l) {
                        keys.push(QueueKey::LinkHop(l, k));
                    }
                }
            }
            QueueMode::PerFlow => {
                for l in 0..n {
                    for &(s, k) in flows.incidence().on_link(l) {
                        keys.push(QueueKey::FlowHop(s, k));
                    }
                }
            }
        }
        let link_of: Vec<LinkId> = keys
            .iter()
            .map(|key| match *key {
                QueueKey::Link(l) | QueueKey::LinkHop(l, _) => l,
                QueueKey::FlowHop(s, k) => flows.flow(s).link_at(k),
            })
            .collect();
        let mut per_link = vec![Vec::new(); n];
        for (q, &l) in link_of.iter().enumerate() {
            per_link[l].push(q);
        }
        let by_flow_hop = flows
            .flows()
            .iter()
            .map(|f| {
                (1..=f.hops())
                    .map(|k| {
                        let l = f.link_at(k);
                        let want = match mode {
                            QueueMode::PerLink(_) => QueueKey::Link(l),
                            QueueMode::PerHop => QueueKey::LinkHop(l, k),
                            QueueMode::PerFlow => QueueKey::FlowHop(f.id, k),
                        };
                        per_link[l]
                            .iter()
                            .copied()
                            .find(|&q| keys[q] == want)
                            .expect("queue exists for every route hop")
                    })
                    .collect()
            })
            .collect();
        Self {
            mode,
            keys,
            link_of,
            per_link,
            by_flow_hop,
        }
    }

    pub fn mode(&self) -> QueueMode {
        self.mode
    }

    pub fn num_queues(&self) -> usize {
        self.keys.len()
    }

    pub fn key(&self, q: QueueId) -> QueueKey {
        self.keys[q]
    }

    pub fn link_of(&self, q: QueueId) -> LinkId {
        self.link_of[q]
    }

    /// Queues served by `link`, in key order.
    pub fn queues_on(&self, link: LinkId) -> &[QueueId] {
        &self.per_link[link]
    }

    /// Queue holding packets of `flow` at 1-based hop `hop`.
    pub fn queue_for(&self, flow: FlowId, hop: usize) -> QueueId {
        self.by_flow_hop[flow][hop - 1]
    }

    pub fn num_links(&self) -> usize {
        self.per_link.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub flow: FlowId,
    /// 1-based position of the link the packet waits at.
    pub hop: u32,
    pub birth: u64,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub flow: FlowId,
    pub birth: u64,
    pub delivered: u64,
}

impl Delivery {
    pub fn delay(&self) -> u64 {
        self.delivered - self.birth
    }
}

/// One packet crossing one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub seq: u64,
    pub flow: FlowId,
    pub link: LinkId,
    pub hop: u32,
    pub slot: u64,
}

#[derive(Debug, Clone)]
enum Buffer {
    Fifo(VecDeque<Packet>),
    Priority(BTreeMap<u32, VecDeque<Packet>>),
}

impl Buffer {
    fn push(&mut self, p: Packet) {
        match self {
            Buffer::Fifo(q) => q.push_back(p),
            Buffer::Priority(m) => m.entry(p.hop).or_default().push_back(p),
        }
    }

    fn pop(&mut self) -> Option<Packet> {
        match self {
            Buffer::Fifo(q) => q.pop_front(),
            Buffer::Priority(m) => {
                let mut entry = m.first_entry()?;
                let p = entry.get_mut().pop_front();
                if entry.get().is_empty() {
                    entry.remove();
                }
                p
            }
        }
    }

    fn packets(&self) -> Box<dyn Iterator<Item = &Packet> + '_> {
        match self {
            Buffer::Fifo(q) => Box::new(q.iter()),
            Buffer::Priority(m) => Box::new(m.values().flat_map(|q| q.iter())),
        }
    }
}

/// Integer data queues with cumulative arrival/departure counters.
#[derive(Debug, Clone)]
pub struct DataQueueBank {
    layout: Arc<QueueLayout>,
    flows: Arc<FlowSet>,
    buffers: Vec<Buffer>,
    lens: Vec<u64>,
    initial: Vec<u64>,
    arrivals: Vec<u64>,
    departures: Vec<u64>,
    in_flight: Vec<Packet>,
    next_seq: u64,
    injected: Vec<u64>,
    delivered: Vec<u64>,
    log: Option<Vec<Transmission>>,
}

impl DataQueueBank {
    pub fn new(layout: Arc<QueueLayout>, flows: Arc<FlowSet>) -> Self {
        let buffers = (0..layout.num_queues())
            .map(|_| match layout.mode {
                QueueMode::PerLink(Discipline::Priority) => Buffer::Priority(BTreeMap::new()),
                _ => Buffer::Fifo(VecDeque::new()),
            })
            .collect();
        let nq = layout.num_queues();
        let nf = flows.len();
        Self {
            layout,
            flows,
            buffers,
            lens: vec![0; nq],
            initial: vec![0; nq],
            arrivals: vec![0; nq],
            departures: vec![0; nq],
            in_flight: Vec::new(),
            next_seq: 0,
            injected: vec![0; nf],
            delivered: vec![0; nf],
            log: None,
        }
    }

    pub fn layout(&self) -> &Arc<QueueLayout> {
        &self.layout
    }

    pub fn mode(&self) -> QueueMode {
        self.layout.mode
    }

    /// Records every transmission from now on (for invariant checks).
    pub fn enable_transmission_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn transmission_log(&self) -> &[Transmission] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn len(&self, q: QueueId) -> u64 {
        self.lens[q]
    }

    /// Route length of `flow`.
    pub fn flow_hops(&self, flow: FlowId) -> usize {
        self.flows.flow(flow).hops()
    }

    pub fn lens(&self) -> &[u64] {
        &self.lens
    }

    /// `A(t)` per queue.
    pub fn cumulative_arrivals(&self) -> &[u64] {
        &self.arrivals
    }

    /// `D(t)` per queue.
    pub fn cumulative_departures(&self) -> &[u64] {
        &self.departures
    }

    pub fn initial_len(&self, q: QueueId) -> u64 {
        self.initial[q]
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Buffered plus in-flight packets.
    pub fn backlog(&self) -> u64 {
        self.lens.iter().sum::<u64>() + self.in_flight.len() as u64
    }

    pub fn injected(&self) -> &[u64] {
        &self.injected
    }

    pub fn delivered(&self) -> &[u64] {
        &self.delivered
    }

    /// Per flow: (buffered, in flight).
    pub fn flow_census(&self) -> Vec<(u64, u64)> {
        let mut out = vec![(0, 0); self.flows.len()];
        for b in &self.buffers {
            for p in b.packets() {
                out[p.flow].0 += 1;
            }
        }
        for p in &self.in_flight {
            out[p.flow].1 += 1;
        }
        out
    }

    /// Hop classes of the packets in `q`, in service order.
    pub fn hop_classes_in_order(&self, q: QueueId) -> Vec<u32> {
        self.buffers[q].packets().map(|p| p.hop).collect()
    }

    fn enqueue(&mut self, p: Packet) {
        let q = self.layout.queue_for(p.flow, p.hop as usize);
        self.buffers[q].push(p);
        self.lens[q] += 1;
        self.arrivals[q] += 1;
    }

    /// Packets transmitted in the previous slot reach their next queue.
    pub fn land_in_flight(&mut self) {
        let landing = std::mem::take(&mut self.in_flight);
        for p in &landing {
            self.enqueue(*p);
        }
        self.in_flight = landing;
        self.in_flight.clear();
    }

    pub fn inject_exogenous(&mut self, flow: FlowId, n: u64, slot: u64) -> Result<(), QueueError> {
        if flow >= self.flows.len() {
            return Err(QueueError::UnknownFlow(flow));
        }
        for _ in 0..n {
            let p = Packet {
                flow,
                hop: 1,
                birth: slot,
                seq: self.next_seq,
            };
            self.next_seq += 1;
            self.enqueue(p);
        }
        self.injected[flow] += n;
        Ok(())
    }

    /// Serves up to `budget` packets from queue `q` in its discipline order.
    /// Deliveries are appended to `out`; returns the number served.
    pub fn serve_queue(
        &mut self,
        q: QueueId,
        budget: u32,
        slot: u64,
        out: &mut Vec<Delivery>,
    ) -> Result<u32, QueueError> {
        if budget == 0 {
            return Err(QueueError::ZeroBudget);
        }
        let link = self.layout.link_of(q);
        let mut served = 0;
        while served < budget {
            let Some(mut p) = self.buffers[q].pop() else {
                break;
            };
            served += 1;
            self.lens[q] -= 1;
            self.departures[q] += 1;
            let route_len = self.flows.flow(p.flow).hops() as u32;
            debug_assert_eq!(self.flows.flow(p.flow).link_at(p.hop as usize), link);
            if let Some(log) = self.log.as_mut() {
                log.push(Transmission {
                    seq: p.seq,
                    flow: p.flow,
                    link,
                    hop: p.hop,
                    slot,
                });
            }
            if p.hop == route_len {
                self.delivered[p.flow] += 1;
                out.push(Delivery {
                    flow: p.flow,
                    birth: p.birth,
                    delivered: slot + 1,
                });
            } else {
                p.hop += 1;
                self.in_flight.push(p);
            }
        }
        Ok(served)
    }

    /// Serves a scheduled link. Per-hop banks need the hop class to serve;
    /// per-link banks ignore it.
    pub fn serve_link(
        &mut self,
        link: LinkId,
        budget: u32,
        slot: u64,
        hop_class: Option<usize>,
        out: &mut Vec<Delivery>,
    ) -> Result<u32, QueueError> {
        let q = match self.layout.mode {
            QueueMode::PerLink(_) => self.layout.queues_on(link)[0],
            QueueMode::PerHop => {
                let k = hop_class.ok_or(QueueError::HopClassRequired(link))?;
                self.layout
                    .queues_on(link)
                    .iter()
                    .copied()
                    .find(|&q| self.layout.key(q) == QueueKey::LinkHop(link, k))
                    .ok_or(QueueError::NoSuchQueue { link, hop: k })?
            }
            QueueMode::PerFlow => {
                return Err(QueueError::WrongMode {
                    expected: "per-link or per-hop",
                    actual: "per-flow",
                })
            }
        };
        self.serve_queue(q, budget, slot, out)
    }
}

/// Real-valued shadow counters paired with the data queues.
#[derive(Debug, Clone)]
pub struct ShadowBank {
    layout: Arc<QueueLayout>,
    epsilon: f64,
    values: Vec<f64>,
    initial: Vec<f64>,
    arrivals: Vec<f64>,
    departures: Vec<f64>,
    served: Vec<bool>,
    slot: u64,
}

impl ShadowBank {
    pub fn new(layout: Arc<QueueLayout>, epsilon: f64) -> Self {
        Self::with_initial(layout, epsilon, 0.0)
    }

    pub fn with_initial(layout: Arc<QueueLayout>, epsilon: f64, initial: f64) -> Self {
        let n = layout.num_queues();
        Self {
            layout,
            epsilon,
            values: vec![initial; n],
            initial: vec![initial; n],
            arrivals: vec![0.0; n],
            departures: vec![0.0; n],
            served: vec![false; n],
            slot: 0,
        }
    }

    pub fn layout(&self) -> &Arc<QueueLayout> {
        &self.layout
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn value(&self, q: QueueId) -> f64 {
        self.values[q]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_value(&mut self, q: QueueId, v: f64) {
        self.values[q] = v;
    }

    pub fn initial(&self, q: QueueId) -> f64 {
        self.initial[q]
    }

    pub fn cumulative_arrivals(&self, q: QueueId) -> f64 {
        self.arrivals[q]
    }

    pub fn cumulative_departures(&self, q: QueueId) -> f64 {
        self.departures[q]
    }

    /// Queues decremented since the last tick.
    pub fn served_this_slot(&self) -> &[bool] {
        &self.served
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// The shadow arrival for one queue: `(1 + eps) * A(t) / t`.
    pub fn arrival_amount(epsilon: f64, cumulative: u64, t: u64) -> f64 {
        (1.0 + epsilon) * cumulative as f64 / t as f64
    }

    /// Adds this slot's shadow arrivals given the data queues' cumulative
    /// arrivals through slot `t`.
    pub fn tick(&mut self, data_cumulative: &[u64], t: u64) -> Result<(), QueueError> {
        if t == 0 {
            return Err(QueueError::ZeroSlot);
        }
        if data_cumulative.len() != self.values.len() {
            return Err(QueueError::LengthMismatch {
                expected: self.values.len(),
                got: data_cumulative.len(),
            });
        }
        for (q, &a) in data_cumulative.iter().enumerate() {
            let inc = Self::arrival_amount(self.epsilon, a, t);
            self.values[q] += inc;
            self.arrivals[q] += inc;
        }
        self.served.iter_mut().for_each(|s| *s = false);
        self.slot = t;
        Ok(())
    }

    /// `Q^ <- max(Q^ - budget, 0)`.
    pub fn serve(&mut self, q: QueueId, budget: u32) {
        let before = self.values[q];
        let after = (before - budget as f64).max(0.0);
        self.values[q] = after;
        self.departures[q] += before - after;
        self.served[q] = true;
    }
}
