//! LQ-CSMA: randomized distributed scheduling driven by shadow queue lengths.
//!
//! A slot opens with `W` control mini-slots. Each link draws a backoff in
//! `[0, W-1]`; when it expires the link broadcasts INTENT unless it has
//! already heard one from an interferer. Links whose INTENT collided with an
//! interferer's (same mini-slot) drop out. The survivors form the decision
//! schedule `sigma(t)`, and each survivor may toggle its activation state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::queueing::{DataQueueBank, Delivery, ShadowBank};
use crate::schedulers::{serve_per_link, SchedulerError, SlotOutcome};
use crate::topology::NetworkGraph;
use crate::schedule::Schedule;

pub const DEFAULT_WINDOW: u32 = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsmaError {
    #[error("contention window must be at least 2, got {0}")]
    Window(u32),
    #[error("invalid weight function: {0}")]
    Weight(String),
    #[error("{0} feasible schedules is too many to enumerate")]
    TooManySchedules(usize),
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightForm {
    /// `w = ln(a*q + b)`
    LogAffine { a: f64, b: f64 },
    /// `w = (a*q)^alpha`
    Power { a: f64, alpha: f64 },
}

/// Maps a shadow length to a CSMA weight, clamped to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFunction {
    pub form: WeightForm,
    pub min: f64,
    pub max: f64,
}

impl Default for WeightFunction {
    fn default() -> Self {
        Self {
            form: WeightForm::LogAffine { a: 0.1, b: 0.01 },
            min: -6.0,
            max: 6.0,
        }
    }
}

impl WeightFunction {
    pub fn validate(&self) -> Result<(), CsmaError> {
        let bad = |m: &str| Err(CsmaError::Weight(m.to_string()));
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return bad("clamp bounds must be finite with min <= max");
        }
        match self.form {
            WeightForm::LogAffine { a, b } => {
                if !(a >= 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return bad("log-affine needs a >= 0 and b > 0");
                }
            }
            WeightForm::Power { a, alpha } => {
                if !(a >= 0.0 && alpha > 0.0 && a.is_finite() && alpha.is_finite()) {
                    return bad("power form needs a >= 0 and alpha > 0");
                }
            }
        }
        Ok(())
    }

    pub fn weight(&self, q: f64) -> f64 {
        let q = q.max(0.0);
        let w = match self.form {
            WeightForm::LogAffine { a, b } => (a * q + b).ln(),
            WeightForm::Power { a, alpha } => (a * q).powf(alpha),
        };
        w.clamp(self.min, self.max)
    }

    /// Activation probability `e^w / (e^w + 1)`.
    pub fn probability(&self, q: f64) -> f64 {
        activation_probability(self.weight(q))
    }
}

pub fn activation_probability(w: f64) -> f64 {
    1.0 / (1.0 + (-w).exp())
}

/// Protocol state carried between slots.
#[derive(Debug, Clone)]
pub struct CsmaState {
    previous: Schedule,
    window: u32,
    weight: WeightFunction,
    rngs: Vec<ChaCha8Rng>,
}

/// Result of the control mini-slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlOutcome {
    pub decision: Schedule,
    pub collided: Schedule,
}

impl CsmaState {
    /// Link `l` draws from stream `l` of a generator seeded with `seed`.
    pub fn new(
        num_links: usize,
        window: u32,
        weight: WeightFunction,
        seed: u64,
    ) -> Result<Self, CsmaError> {
        if window < 2 {
            return Err(CsmaError::Window(window));
        }
        weight.validate()?;
        let rngs = (0..num_links)
            .map(|l| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(l as u64);
                r
            })
            .collect();
        Ok(Self {
            previous: Schedule::EMPTY,
            window,
            weight,
            rngs,
        })
    }

    pub fn previous(&self) -> Schedule {
        self.previous
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn weight_function(&self) -> &WeightFunction {
        &self.weight
    }

    /// Control phase with freshly drawn backoffs.
    pub fn control_phase(&mut self, graph: &NetworkGraph) -> ControlOutcome {
        let window = self.window;
        let backoffs: Vec<u32> = self.rngs.iter_mut().map(|r| r.random_range(0..window)).collect();
        resolve_contention(graph, &backoffs)
    }

    /// Data phase: decision links toggle using `probs`, others keep state.
    pub fn data_phase(&mut self, graph: &NetworkGraph, decision: Schedule, probs: &[f64]) -> Schedule {
        let prev = self.previous;
        let mut next = prev;
        for l in decision.iter() {
            let coin: f64 = self.rngs[l].random();
            if (graph.conflicts(l) & prev).is_empty() {
                if coin < probs[l] {
                    next.insert(l);
                } else {
                    next.remove(l);
                }
            } else {
                next.remove(l);
            }
        }
        debug_assert!(graph.is_feasible(next), "CSMA produced infeasible {next}");
        self.previous = next;
        next
    }

    /// One full protocol slot with probabilities taken from `probs`.
    pub fn step(&mut self, graph: &NetworkGraph, probs: &[f64]) -> Schedule {
        let control = self.control_phase(graph);
        self.data_phase(graph, control.decision, probs)
    }
}

/// Decides INTENT winners from given backoffs.
pub fn resolve_contention(graph: &NetworkGraph, backoffs: &[u32]) -> ControlOutcome {
    let n = graph.num_links();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&l| (backoffs[l], l));
    let mut sent = Schedule::EMPTY;
    let mut i = 0;
    while i < order.len() {
        // Links expiring in the same mini-slot decide together on what was
        // heard in earlier mini-slots.
        let b = backoffs[order[i]];
        let mut j = i;
        let mut group = Schedule::EMPTY;
        while j < order.len() && backoffs[order[j]] == b {
            let l = order[j];
            if (graph.conflicts(l) & sent).is_empty() {
                group.insert(l);
            }
            j += 1;
        }
        sent = sent | group;
        i = j;
    }
    let mut decision = Schedule::EMPTY;
    let mut collided = Schedule::EMPTY;
    for l in sent.iter() {
        let clash = (graph.conflicts(l) & sent)
            .iter()
            .any(|m| backoffs[m] == backoffs[l]);
        if clash {
            collided.insert(l);
        } else {
            decision.insert(l);
        }
    }
    ControlOutcome { decision, collided }
}

/// PLQ-CSMA / FLQ-CSMA slot on per-link banks.
pub fn csma_slot(
    graph: &NetworkGraph,
    state: &mut CsmaState,
    data: &mut DataQueueBank,
    shadow: &mut ShadowBank,
    slot: u64,
    deliveries: &mut Vec<Delivery>,
) -> Result<SlotOutcome, SchedulerError> {
    let layout = shadow.layout().clone();
    let probs: Vec<f64> = (0..graph.num_links())
        .map(|l| {
            let q = layout.queues_on(l).first().map_or(0.0, |&q| shadow.value(q));
            state.weight.probability(q)
        })
        .collect();
    let schedule = state.step(graph, &probs);
    serve_per_link(graph, data, shadow, schedule, slot, deliveries)
}

/// Empirical vs product-form distribution of the frozen-weight chain.
#[derive(Debug, Clone)]
pub struct ProductFormReport {
    pub schedules: Vec<Schedule>,
    pub empirical: Vec<f64>,
    pub theoretical: Vec<f64>,
    pub total_variation: f64,
}

/// Upper limit on the number of feasible schedules in [`product_form_check`].
pub const PRODUCT_FORM_LIMIT: usize = 1 << 16;

/// All feasible schedules (independent sets), in lexicographic order.
pub fn all_feasible_schedules(graph: &NetworkGraph, limit: usize) -> Result<Vec<Schedule>, CsmaError> {
    fn grow(graph: &NetworkGraph, next: usize, cur: Schedule, out: &mut Vec<Schedule>, limit: usize) -> bool {
        if out.len() >= limit {
            return false;
        }
        out.push(cur);
        for l in next..graph.num_links() {
            if (graph.conflicts(l) & cur).is_empty() {
                let mut s = cur;
                s.insert(l);
                if !grow(graph, l + 1, s, out, limit) {
                    return false;
                }
            }
        }
        true
    }
    let mut out = Vec::new();
    if !grow(graph, 0, Schedule::EMPTY, &mut out, limit) {
        return Err(CsmaError::TooManySchedules(out.len()));
    }
    out.sort();
    Ok(out)
}

/// Runs the schedule chain alone with fixed weights `w_l` and compares the
/// visit frequencies with `mu(M) ∝ prod_{l in M} p_l / (1 - p_l)`.
pub fn product_form_check(
    graph: &NetworkGraph,
    weights: &[f64],
    window: u32,
    n_slots: u64,
    seed: u64,
) -> Result<ProductFormReport, CsmaError> {
    if weights.len() != graph.num_links() {
        return Err(CsmaError::WeightCount {
            expected: graph.num_links(),
            got: weights.len(),
        });
    }
    let schedules = all_feasible_schedules(graph, PRODUCT_FORM_LIMIT)?;
    let probs: Vec<f64> = weights.iter().map(|&w| activation_probability(w)).collect();
    // p/(1-p) = e^w
    let unnorm: Vec<f64> = schedules
        .iter()
        .map(|s| s.iter().map(|l| weights[l]).sum::<f64>().exp())
        .collect();
    let kappa: f64 = unnorm.iter().sum();
    let theoretical: Vec<f64> = unnorm.iter().map(|u| u / kappa).collect();

    let mut state = CsmaState::new(graph.num_links(), window, WeightFunction::default(), seed)?;
    let mut counts = vec![0u64; schedules.len()];
    for _ in 0..n_slots {
        let m = state.step(graph, &probs);
        let idx = schedules.binary_search(&m).expect("chain stays feasible");
        counts[idx] += 1;
    }
    let empirical: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / n_slots.max(1) as f64)
        .collect();
    let total_variation = 0.5
        * empirical
            .iter()
            .zip(&theoretical)
            .map(|(e, t)| (e - t).abs())
            .sum::<f64>();
    Ok(ProductFormReport {
        schedules,
        empirical,
        theoretical,
        total_variation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_network, InterferenceSpec, LinkSpec};

    fn path(n_links: usize) -> NetworkGraph {
        let nodes: Vec<String> = (0..=n_links).map(|i| format!("n{i}")).collect();
        let links: Vec<LinkSpec> = (0..n_links)
            .map(|i| LinkSpec::new(nodes[i].clone(), nodes[i + 1].clone(), 1))
            .collect();
        build_network(&nodes, &links, &InterferenceSpec::NodeExclusive).unwrap()
    }

    fn isolated(n_links: usize) -> NetworkGraph {
        let nodes: Vec<String> = (0..2 * n_links).map(|i| format!("n{i}")).collect();
        let links: Vec<LinkSpec> = (0..n_links)
            .map(|i| LinkSpec::new(nodes[2 * i].clone(), nodes[2 * i + 1].clone(), 1))
            .collect();
        build_network(&nodes, &links, &InterferenceSpec::NodeExclusive).unwrap()
    }

    #[test]
    fn contention_examples() {
        let g = isolated(1);
        assert_eq!(resolve_contention(&g, &[5]).decision, Schedule::single(0));

        let g = path(2);
        let c = resolve_contention(&g, &[1, 3]);
        assert_eq!(c.decision, Schedule::single(0));
        let c = resolve_contention(&g, &[3, 1]);
        assert_eq!(c.decision, Schedule::single(1));
        let c = resolve_contention(&g, &[2, 2]);
        assert!(c.decision.is_empty());
        assert_eq!(c.collided, Schedule::from_links([0, 1]));
    }

    #[test]
    fn collided_intent_still_suppresses() {
        // Links 0 and 1 collide at mini-slot 0; link 2 (conflicts with 1) hears it.
        let g = path(3);
        let c = resolve_contention(&g, &[0, 0, 4]);
        assert!(c.decision.is_empty());
    }

    #[test]
    fn data_phase_rules() {
        let g = path(2);
        let mut st = CsmaState::new(2, 8, WeightFunction::default(), 1).unwrap();
        st.previous = Schedule::single(0);
        // Link 1 decides but its interferer is active: forced off. Link 0 keeps state.
        let m = st.data_phase(&g, Schedule::single(1), &[1.0, 1.0]);
        assert_eq!(m, Schedule::single(0));
        // Link 0 decides with p = 0: turns off.
        let m = st.data_phase(&g, Schedule::single(0), &[0.0, 1.0]);
        assert!(m.is_empty());
    }

    #[test]
    fn window_and_weights() {
        assert!(CsmaState::new(3, 1, WeightFunction::default(), 0).is_err());
        assert!(CsmaState::new(3, DEFAULT_WINDOW, WeightFunction::default(), 0).is_ok());
        let wf = WeightFunction::default();
        let p0 = wf.probability(0.0);
        assert!(p0 > 0.0 && p0 < 0.5);
        assert_eq!(wf.weight(0.0), 0.01f64.ln());
        assert!((wf.probability(1e12) - activation_probability(6.0)).abs() < 1e-15);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..1000 {
            let w = wf.weight(i as f64 * 0.7);
            assert!(w >= prev);
            prev = w;
        }
        let pw = WeightFunction {
            form: WeightForm::Power { a: 0.5, alpha: 0.5 },
            ..Default::default()
        };
        assert_eq!(pw.weight(8.0), 2.0);
        assert!(WeightFunction { min: 1.0, max: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn product_form_small_cases() {
        let g = isolated(1);
        let r = product_form_check(&g, &[0.0], 4, 0, 0).unwrap();
        assert_eq!(r.theoretical, vec![0.5, 0.5]);
        let g = path(2);
        let r = product_form_check(&g, &[0.0, 0.0], 4, 200_000, 3).unwrap();
        for t in &r.theoretical {
            assert!((t - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(r.total_variation < 0.01, "tv {}", r.total_variation);
    }

    #[test]
    fn isolated_links_behave_like_coins() {
        let g = isolated(2);
        let r = product_form_check(&g, &[0.0, 0.0], 2, 200_000, 9).unwrap();
        for e in &r.empirical {
            assert!((e - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn every_link_enters_decision_sets() {
        let g = path(3);
        let mut st = CsmaState::new(3, 2, WeightFunction::default(), 5).unwrap();
        let mut seen = Schedule::EMPTY;
        for _ in 0..1000 {
            seen = seen | st.control_phase(&g).decision;
        }
        assert_eq!(seen, g.all_links());
    }
}
