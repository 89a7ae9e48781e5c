//! Centralized per-slot schedulers: back-pressure, HQ-MWS, PLQ-MWS, FLQ-MWS.
//!
//! The shadow-based schedulers compute weights from a [`ShadowBank`] alone;
//! data queue lengths are only touched when serving.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::queueing::{
    DataQueueBank, Delivery, Discipline, QueueError, QueueId, QueueKey, QueueMode, ShadowBank,
};
use crate::schedule::{max_weight_schedule, Schedule, ScheduleError};
use crate::topology::{LinkId, NetworkGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error("{scheduler} needs {needed} queues, got {got}")]
    ModeMismatch {
        scheduler: SchedulerKind,
        needed: &'static str,
        got: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedulerKind {
    Bp,
    HqMws,
    PlqMws,
    FlqMws,
    PlqCsma,
    FlqCsma,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 6] = [
        SchedulerKind::Bp,
        SchedulerKind::HqMws,
        SchedulerKind::PlqMws,
        SchedulerKind::FlqMws,
        SchedulerKind::PlqCsma,
        SchedulerKind::FlqCsma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Bp => "bp",
            SchedulerKind::HqMws => "hq-mws",
            SchedulerKind::PlqMws => "plq-mws",
            SchedulerKind::FlqMws => "flq-mws",
            SchedulerKind::PlqCsma => "plq-csma",
            SchedulerKind::FlqCsma => "flq-csma",
        }
    }

    /// Queue structure the scheduler runs on.
    pub fn queue_mode(self) -> QueueMode {
        match self {
            SchedulerKind::Bp => QueueMode::PerFlow,
            SchedulerKind::HqMws => QueueMode::PerHop,
            SchedulerKind::PlqMws | SchedulerKind::PlqCsma => {
                QueueMode::PerLink(Discipline::Priority)
            }
            SchedulerKind::FlqMws | SchedulerKind::FlqCsma => QueueMode::PerLink(Discipline::Fifo),
        }
    }

    pub fn uses_shadow(self) -> bool {
        self != SchedulerKind::Bp
    }

    pub fn is_csma(self) -> bool {
        matches!(self, SchedulerKind::PlqCsma | SchedulerKind::FlqCsma)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown scheduler {s:?} (expected bp, hq-mws, plq-mws, flq-mws, plq-csma or flq-csma)")
            })
    }
}

/// One queue served in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Service {
    pub link: LinkId,
    pub queue: QueueId,
    pub packets: u32,
}

/// What a scheduler did in one slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotOutcome {
    pub schedule: Schedule,
    pub services: Vec<Service>,
    /// Unused capacity on scheduled links.
    pub wasted: u64,
}

impl SlotOutcome {
    pub fn served(&self) -> u64 {
        self.services.iter().map(|s| s.packets as u64).sum()
    }
}

fn check_mode(
    kind: SchedulerKind,
    data: &DataQueueBank,
    shadow: Option<&ShadowBank>,
) -> Result<(), SchedulerError> {
    let needed = kind.queue_mode();
    let got = data.mode();
    let shadow_ok = shadow.is_none_or(|s| s.layout().mode() == needed);
    if got != needed || !shadow_ok {
        return Err(SchedulerError::ModeMismatch {
            scheduler: kind,
            needed: needed.name(),
            got: got.name(),
        });
    }
    Ok(())
}

/// HQ-MWS link weights: per link the hop class `k*` (smallest index among
/// maximizers of the shadow value) and its value.
pub fn hq_weights(shadow: &ShadowBank) -> (Vec<f64>, Vec<Option<QueueId>>) {
    let layout = shadow.layout();
    let n = layout.num_links();
    let mut weights = vec![0.0; n];
    let mut chosen = vec![None; n];
    for l in 0..n {
        // Queues on a link are ordered by ascending hop class.
        for &q in layout.queues_on(l) {
            let v = shadow.value(q);
            if chosen[l].is_none() || v > weights[l] {
                weights[l] = v;
                chosen[l] = Some(q);
            }
        }
    }
    (weights, chosen)
}

/// LQ-MWS link weights: `w_l = Q^_l`.
pub fn lq_mws_weights(shadow: &ShadowBank) -> Vec<f64> {
    let layout = shadow.layout();
    (0..layout.num_links())
        .map(|l| layout.queues_on(l).first().map_or(0.0, |&q| shadow.value(q)))
        .collect()
}

pub fn hq_mws_step(
    graph: &NetworkGraph,
    data: &mut DataQueueBank,
    shadow: &mut ShadowBank,
    slot: u64,
    deliveries: &mut Vec<Delivery>,
) -> Result<SlotOutcome, SchedulerError> {
    check_mode(SchedulerKind::HqMws, data, Some(shadow))?;
    let (weights, chosen) = hq_weights(shadow);
    let decision = max_weight_schedule(graph, &weights)?;
    let mut out = SlotOutcome {
        schedule: decision.schedule,
        ..Default::default()
    };
    for l in decision.schedule.iter() {
        let q = chosen[l].expect("scheduled links have a positive-weight queue");
        let c = graph.capacity(l);
        let packets = data.serve_queue(q, c, slot, deliveries)?;
        shadow.serve(q, c);
        out.services.push(Service { link: l, queue: q, packets });
        out.wasted += (c - packets) as u64;
    }
    Ok(out)
}

/// Serves every link of `schedule` on a per-link bank and decrements the
/// matching shadow counters by `c_l`.
pub(crate) fn serve_per_link(
    graph: &NetworkGraph,
    data: &mut DataQueueBank,
    shadow: &mut ShadowBank,
    schedule: Schedule,
    slot: u64,
    deliveries: &mut Vec<Delivery>,
) -> Result<SlotOutcome, SchedulerError> {
    let mut out = SlotOutcome {
        schedule,
        ..Default::default()
    };
    for l in schedule.iter() {
        let q = data.layout().queues_on(l)[0];
        let c = graph.capacity(l);
        let packets = data.serve_queue(q, c, slot, deliveries)?;
        shadow.serve(q, c);
        out.services.push(Service { link: l, queue: q, packets });
        out.wasted += (c - packets) as u64;
    }
    Ok(out)
}

fn lq_mws_step(
    kind: SchedulerKind,
    graph: &NetworkGraph,
    data: &mut DataQueueBank,
    shadow: &mut ShadowBank,
    slot: u64,
    deliveries: &mut Vec<Delivery>,
) -> Result<SlotOutcome, SchedulerError> {
    check_mode(kind, data, Some(shadow))?;
    let weights = lq_mws_weights(shadow);
    let decision = max_weight_schedule(graph, &weights)?;
    serve_per_link(graph, data, shadow, decision.schedule, slot, deliveries)
}

pub fn plq_mws_step(
    graph: &NetworkGraph,
    data: &mut DataQueueBank,
    shadow: &mut ShadowBank,
    slot: u64,
    deliveries: &mut Vec<Delivery>,
) -> Result<SlotOutcome, SchedulerError> {
    lq_mws_step(SchedulerKind::PlqMws, graph, data, shadow, slot, deliveries)
}

pub fn flq_mws_step(
    graph: &NetworkGraph,
    data: &mut DataQueueBank,
    shadow: &mut ShadowBank,
    slot: u64,
    deliveries: &mut Vec<Delivery>,
) -> Result<SlotOutcome, SchedulerError> {
    lq_mws_step(SchedulerKind::FlqMws, graph, data, shadow, slot, deliveries)
}

/// Back-pressure weights on per-flow queues: `c_l * max(0, max_s diff_s)`
/// and the flow queue achieving it (smallest flow on ties).
pub fn back_pressure_weights(graph: &NetworkGraph, data: &DataQueueBank) -> (Vec<f64>, Vec<Option<QueueId>>) {
    let layout = data.layout();
    let n = layout.num_links();
    let mut weights = vec![0.0; n];
    let mut chosen = vec![None; n];
    for l in 0..n {
        let mut best: Option<(i64, QueueId)> = None;
        for &q in layout.queues_on(l) {
            let QueueKey::FlowHop(s, k) = layout.key(q) else {
                unreachable!("back-pressure runs on per-flow queues")
            };
            let downstream = if k == data.flow_hops(s) {
                0
            } else {
                data.len(layout.queue_for(s, k + 1)) as i64
            };
            let diff = data.len(q) as i64 - downstream;
            // Queues on a link are sorted by flow id, so strict > keeps the smallest.
            if best.is_none_or(|(d, _)| diff > d) {
                best = Some((diff, q));
            }
        }
        if let Some((d, q)) = best {
            if d > 0 {
                weights[l] = graph.capacity(l) as f64 * d as f64;
                chosen[l] = Some(q);
            }
        }
    }
    (weights, chosen)
}

pub fn back_pressure_step(
    graph: &NetworkGraph,
    data: &mut DataQueueBank,
    slot: u64,
    deliveries: &mut Vec<Delivery>,
) -> Result<SlotOutcome, SchedulerError> {
    check_mode(SchedulerKind::Bp, data, None)?;
    let (weights, chosen) = back_pressure_weights(graph, data);
    let decision = max_weight_schedule(graph, &weights)?;
    let mut out = SlotOutcome {
        schedule: decision.schedule,
        ..Default::default()
    };
    for l in decision.schedule.iter() {
        let q = chosen[l].expect("scheduled links have a positive differential");
        let c = graph.capacity(l);
        let packets = data.serve_queue(q, c, slot, deliveries)?;
        out.services.push(Service { link: l, queue: q, packets });
        out.wasted += (c - packets) as u64;
    }
    Ok(out)
}
