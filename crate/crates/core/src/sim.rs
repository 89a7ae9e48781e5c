//! Slot-by-slot simulation engine, traces and stability classification.
//!
//! Within slot `t` (1-based):
//! 1. packets sent in slot `t-1` land at their next queue, then exogenous
//!    arrivals (birth `t`) enter first-hop queues;
//! 2. shadow counters receive `(1+eps) A(t) / t`;
//! 3. the scheduler picks a schedule from shadow lengths (queue
//!    differentials for back-pressure, CSMA contention for the CSMA schemes);
//! 4. scheduled links serve data and shadow queues.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::csma::{csma_slot, CsmaError, CsmaState, WeightFunction, DEFAULT_WINDOW};
use crate::queueing::{DataQueueBank, Delivery, QueueError, QueueLayout, ShadowBank};
use crate::schedulers::{
    back_pressure_step, flq_mws_step, hq_mws_step, plq_mws_step, SchedulerError, SchedulerKind,
    SlotOutcome,
};
use crate::topology::{ArrivalModel, FlowSet, NetworkGraph};

/// Shortest horizon accepted by [`stability_estimate`].
pub const MIN_STABILITY_HORIZON: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Csma(#[from] CsmaError),
    #[error("arrival rate must be finite and >= 0, got {0}")]
    NegativeRate(f64),
    #[error("horizon {horizon} is shorter than the {min} slots needed")]
    HorizonTooShort { horizon: u64, min: u64 },
    #[error("no packets were delivered")]
    NoDeliveries,
    #[error("invalid simulation setting: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scheduler: SchedulerKind,
    pub epsilon: f64,
    pub horizon: u64,
    pub seed: u64,
    /// Backlog sampling period in slots.
    pub stride: u64,
    pub shadow_init: f64,
    pub csma_window: u32,
    pub csma_weight: WeightFunction,
    /// Keep one record per delivered packet (memory grows with throughput).
    pub record_deliveries: bool,
    /// Keep per-queue lengths at every backlog sample.
    pub record_queue_samples: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scheduler: SchedulerKind::FlqMws,
            epsilon: 0.005,
            horizon: 1_000_000,
            seed: 0,
            stride: 100,
            shadow_init: 0.0,
            csma_window: DEFAULT_WINDOW,
            csma_weight: WeightFunction::default(),
            record_deliveries: false,
            record_queue_samples: false,
        }
    }
}

/// A network, its flows and the run settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: Arc<NetworkGraph>,
    pub flows: Arc<FlowSet>,
    pub config: SimConfig,
}

impl Scenario {
    pub fn new(graph: NetworkGraph, flows: FlowSet) -> Self {
        Self {
            graph: Arc::new(graph),
            flows: Arc::new(flows),
            config: SimConfig::default(),
        }
    }

    /// Same scenario with every flow at `rate`.
    pub fn with_rate(&self, rate: f64) -> Self {
        Self {
            flows: Arc::new(self.flows.with_uniform_rate(rate)),
            ..self.clone()
        }
    }

    pub fn with_scheduler(mut self, kind: SchedulerKind) -> Self {
        self.config.scheduler = kind;
        self
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.config.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.config.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let c = &self.config;
        let bad = |m: String| Err(SimError::Config(m));
        if c.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if c.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if !(c.epsilon.is_finite() && c.epsilon >= 0.0) {
            return bad(format!("epsilon must be finite and >= 0, got {}", c.epsilon));
        }
        if !(c.shadow_init.is_finite() && c.shadow_init >= 0.0) {
            return bad(format!("shadow_init must be finite and >= 0, got {}", c.shadow_init));
        }
        for f in self.flows.flows() {
            let r = f.arrival.rate();
            if !(r.is_finite() && r >= 0.0) {
                return Err(SimError::NegativeRate(r));
            }
        }
        if c.scheduler.is_csma() {
            if c.csma_window < 2 {
                return Err(CsmaError::Window(c.csma_window).into());
            }
            c.csma_weight.validate()?;
        }
        Ok(())
    }
}

/// One Poisson(rate) draw.
pub fn poisson_arrivals<R: rand::Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64, SimError> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(SimError::NegativeRate(rate));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(rate).map_err(|_| SimError::NegativeRate(rate))?;
    Ok(d.sample(rng) as u64)
}

/// Per-flow arrival process on its own random stream.
#[derive(Debug, Clone)]
pub struct ArrivalSource {
    model: ArrivalModel,
    poisson: Option<Poisson<f64>>,
    rng: ChaCha8Rng,
}

impl ArrivalSource {
    /// Stream `flow` of a generator seeded with `seed`.
    pub fn new(model: ArrivalModel, seed: u64, flow: usize) -> Result<Self, SimError> {
        let rate = model.rate();
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(SimError::NegativeRate(rate));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(flow as u64);
        let poisson = match model {
            ArrivalModel::Poisson { rate } if rate > 0.0 => {
                Some(Poisson::new(rate).map_err(|_| SimError::NegativeRate(rate))?)
            }
            _ => None,
        };
        Ok(Self { model, poisson, rng })
    }

    /// Packets arriving in slot `t >= 1`.
    pub fn draw(&mut self, t: u64) -> u64 {
        match self.model {
            ArrivalModel::Poisson { .. } => self.poisson.as_ref().map_or(0, |d| d.sample(&mut self.rng) as u64),
            ArrivalModel::Deterministic { rate } => {
                let now = (rate * t as f64).floor() as u64;
                let before = (rate * (t - 1) as f64).floor() as u64;
                now - before
            }
        }
    }
}

/// Everything recorded by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub horizon: u64,
    pub stride: u64,
    pub rates: Vec<f64>,
    pub injected: Vec<u64>,
    pub delivered: Vec<u64>,
    pub delay_sum: Vec<u64>,
    /// Present when `record_deliveries` was set.
    pub deliveries: Option<Vec<Delivery>>,
    /// Total backlog (buffered plus in flight) at slots `stride, 2*stride, ...`.
    pub backlog: Vec<u64>,
    /// Per-queue lengths at the same slots, when requested.
    pub queue_samples: Option<Vec<Vec<u64>>>,
    pub served: u64,
    pub wasted: u64,
    pub final_backlog: u64,
    pub peak_backlog: u64,
}

impl SimTrace {
    pub fn new(num_flows: usize, horizon: u64, stride: u64) -> Self {
        Self {
            horizon,
            stride,
            rates: vec![0.0; num_flows],
            injected: vec![0; num_flows],
            delivered: vec![0; num_flows],
            delay_sum: vec![0; num_flows],
            deliveries: None,
            backlog: Vec::new(),
            queue_samples: None,
            served: 0,
            wasted: 0,
            final_backlog: 0,
            peak_backlog: 0,
        }
    }

    pub fn record_delivery(&mut self, d: &Delivery) {
        self.delivered[d.flow] += 1;
        self.delay_sum[d.flow] += d.delay();
        if let Some(v) = self.deliveries.as_mut() {
            v.push(*d);
        }
    }

    pub fn total_delivered(&self) -> u64 {
        self.delivered.iter().sum()
    }

    pub fn total_injected(&self) -> u64 {
        self.injected.iter().sum()
    }

    /// Slot of backlog sample `i`.
    pub fn sample_slot(&self, i: usize) -> u64 {
        (i as u64 + 1) * self.stride
    }

    pub fn flow_average_delay(&self, flow: usize) -> Option<f64> {
        (self.delivered[flow] > 0).then(|| self.delay_sum[flow] as f64 / self.delivered[flow] as f64)
    }
}

/// Mean of `delivery - birth` over delivered packets.
pub fn average_delay(trace: &SimTrace) -> Result<f64, SimError> {
    let n = trace.total_delivered();
    if n == 0 {
        return Err(SimError::NoDeliveries);
    }
    Ok(trace.delay_sum.iter().sum::<u64>() as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Inconclusive,
}

impl Stability {
    pub fn name(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub status: Stability,
    /// Least-squares backlog slope over the second half, packets per slot.
    pub slope: f64,
    pub eta: f64,
    pub final_backlog: u64,
    pub peak_backlog: u64,
    /// Mean backlog over `[T/4, T/2]`.
    pub reference_mean: f64,
}

/// Default growth threshold: `max(1e-3, 0.01 * sum of rates)`.
pub fn default_eta(trace: &SimTrace) -> f64 {
    (0.01 * trace.rates.iter().sum::<f64>()).max(1e-3)
}

pub fn stability_estimate(trace: &SimTrace) -> Result<StabilityVerdict, SimError> {
    stability_estimate_with(trace, default_eta(trace))
}

/// Unstable when the second-half slope exceeds `eta` and the final backlog
/// clearly exceeds the `[T/4, T/2]` level; stable when the slope is below
/// `eta / 10` and the final backlog stays within ten times that level.
pub fn stability_estimate_with(trace: &SimTrace, eta: f64) -> Result<StabilityVerdict, SimError> {
    let t = trace.horizon;
    if t < MIN_STABILITY_HORIZON {
        return Err(SimError::HorizonTooShort {
            horizon: t,
            min: MIN_STABILITY_HORIZON,
        });
    }
    let samples: Vec<(f64, f64)> = trace
        .backlog
        .iter()
        .enumerate()
        .map(|(i, &b)| (trace.sample_slot(i) as f64, b as f64))
        .collect();
    let half = t as f64 / 2.0;
    let quarter = t as f64 / 4.0;
    let late: Vec<(f64, f64)> = samples.iter().copied().filter(|&(x, _)| x >= half).collect();
    let slope = least_squares_slope(&late);
    let window: Vec<f64> = samples
        .iter()
        .filter(|&&(x, _)| x >= quarter && x <= half)
        .map(|&(_, y)| y)
        .collect();
    let reference_mean = if window.is_empty() {
        0.0
    } else {
        window.iter().sum::<f64>() / window.len() as f64
    };
    let fin = trace.final_backlog as f64;
    let status = if slope > eta && fin > 1.5 * reference_mean {
        Stability::Unstable
    } else if slope < eta / 10.0 && fin <= 10.0 * reference_mean.max(1.0) {
        Stability::Stable
    } else {
        Stability::Inconclusive
    };
    Ok(StabilityVerdict {
        status,
        slope,
        eta,
        final_backlog: trace.final_backlog,
        peak_backlog: trace.peak_backlog,
        reference_mean,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Read-only view handed to observers after each slot.
pub struct SlotView<'a> {
    pub slot: u64,
    pub graph: &'a NetworkGraph,
    pub flows: &'a FlowSet,
    pub data: &'a DataQueueBank,
    pub shadow: Option<&'a ShadowBank>,
    pub outcome: &'a SlotOutcome,
    pub arrivals: &'a [u64],
    pub deliveries: &'a [Delivery],
}

/// Per-slot hook for invariant checks and dumps.
pub trait SlotObserver {
    fn on_slot(&mut self, view: &SlotView<'_>);
}

impl<F: FnMut(&SlotView<'_>)> SlotObserver for F {
    fn on_slot(&mut self, view: &SlotView<'_>) {
        self(view)
    }
}

/// CSMA streams are kept apart from the arrival streams.
fn csma_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// A run in progress.
pub struct Simulation {
    graph: Arc<NetworkGraph>,
    flows: Arc<FlowSet>,
    config: SimConfig,
    data: DataQueueBank,
    shadow: Option<ShadowBank>,
    csma: Option<CsmaState>,
    sources: Vec<ArrivalSource>,
    slot: u64,
    trace: SimTrace,
    arrivals: Vec<u64>,
    deliveries: Vec<Delivery>,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let config = scenario.config.clone();
        let graph = scenario.graph.clone();
        let flows = scenario.flows.clone();
        let kind = config.scheduler;
        let layout = Arc::new(QueueLayout::new(&graph, &flows, kind.queue_mode()));
        let data = DataQueueBank::new(layout.clone(), flows.clone());
        let shadow = kind
            .uses_shadow()
            .then(|| ShadowBank::with_initial(layout, config.epsilon, config.shadow_init));
        let csma = if kind.is_csma() {
            Some(CsmaState::new(
                graph.num_links(),
                config.csma_window,
                config.csma_weight,
                csma_seed(config.seed),
            )?)
        } else {
            None
        };
        let sources = flows
            .flows()
            .iter()
            .map(|f| ArrivalSource::new(f.arrival, config.seed, f.id))
            .collect::<Result<Vec<_>, _>>()?;
        let mut trace = SimTrace::new(flows.len(), config.horizon, config.stride);
        trace.rates = flows.rates();
        if config.record_deliveries {
            trace.deliveries = Some(Vec::new());
        }
        if config.record_queue_samples {
            trace.queue_samples = Some(Vec::new());
        }
        let nf = flows.len();
        Ok(Self {
            graph,
            flows,
            config,
            data,
            shadow,
            csma,
            sources,
            slot: 0,
            trace,
            arrivals: vec![0; nf],
            deliveries: Vec::new(),
        })
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn data(&self) -> &DataQueueBank {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DataQueueBank {
        &mut self.data
    }

    pub fn shadow(&self) -> Option<&ShadowBank> {
        self.shadow.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.config.horizon
    }

    /// Advances one slot and reports it to `observer`.
    pub fn step_observed(&mut self, observer: &mut dyn SlotObserver) -> Result<(), SimError> {
        let t = self.slot + 1;
        self.data.land_in_flight();
        for (s, src) in self.sources.iter_mut().enumerate() {
            let n = src.draw(t);
            self.arrivals[s] = n;
            if n > 0 {
                self.data.inject_exogenous(s, n, t)?;
            }
            self.trace.injected[s] += n;
        }
        if let Some(sh) = self.shadow.as_mut() {
            sh.tick(self.data.cumulative_arrivals(), t)?;
        }
        self.deliveries.clear();
        let g = &*self.graph;
        let outcome = match self.config.scheduler {
            SchedulerKind::Bp => back_pressure_step(g, &mut self.data, t, &mut self.deliveries)?,
            SchedulerKind::HqMws => {
                let sh = self.shadow.as_mut().expect("shadow bank");
                hq_mws_step(g, &mut self.data, sh, t, &mut self.deliveries)?
            }
            SchedulerKind::PlqMws => {
                let sh = self.shadow.as_mut().expect("shadow bank");
                plq_mws_step(g, &mut self.data, sh, t, &mut self.deliveries)?
            }
            SchedulerKind::FlqMws => {
                let sh = self.shadow.as_mut().expect("shadow bank");
                flq_mws_step(g, &mut self.data, sh, t, &mut self.deliveries)?
            }
            SchedulerKind::PlqCsma | SchedulerKind::FlqCsma => {
                let sh = self.shadow.as_mut().expect("shadow bank");
                let st = self.csma.as_mut().expect("csma state");
                csma_slot(g, st, &mut self.data, sh, t, &mut self.deliveries)?
            }
        };
        debug_assert!(g.is_feasible(outcome.schedule), "infeasible schedule {}", outcome.schedule);

        for d in &self.deliveries {
            self.trace.record_delivery(d);
        }
        self.trace.served += outcome.served();
        self.trace.wasted += outcome.wasted;
        let backlog = self.data.backlog();
        self.trace.peak_backlog = self.trace.peak_backlog.max(backlog);
        self.trace.final_backlog = backlog;
        if t.is_multiple_of(self.config.stride) {
            self.trace.backlog.push(backlog);
            if let Some(qs) = self.trace.queue_samples.as_mut() {
                qs.push(self.data.lens().to_vec());
            }
        }
        self.slot = t;
        observer.on_slot(&SlotView {
            slot: t,
            graph: g,
            flows: &self.flows,
            data: &self.data,
            shadow: self.shadow.as_ref(),
            outcome: &outcome,
            arrivals: &self.arrivals,
            deliveries: &self.deliveries,
        });
        Ok(())
    }

    pub fn step(&mut self) -> Result<(), SimError> {
        self.step_observed(&mut |_: &SlotView<'_>| {})
    }

    pub fn finish(self) -> SimTrace {
        self.trace
    }
}

pub fn run(scenario: &Scenario) -> Result<SimTrace, SimError> {
    run_observed(scenario, &mut |_: &SlotView<'_>| {})
}

pub fn run_observed(scenario: &Scenario, observer: &mut dyn SlotObserver) -> Result<SimTrace, SimError> {
    let mut sim = Simulation::new(scenario)?;
    while !sim.is_done() {
        sim.step_observed(observer)?;
    }
    Ok(sim.finish())
}
