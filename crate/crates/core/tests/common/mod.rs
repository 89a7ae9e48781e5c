//! Random instances and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hopsched_core::rank::{find_flow_loops, decompose_components, verify_ranking, Ranking};
use hopsched_core::schedule::Schedule;
use hopsched_core::sim::{Scenario, SlotView, Simulation};
use hopsched_core::topology::{
    build_network, validate_flows, FlowSet, FlowSpec, InterferenceSpec, LinkSpec, NetworkGraph,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Conflict graph on `n` links with independent endpoints and random pairs.
pub fn random_pair_graph(rng: &mut impl Rng, n: usize, density: f64) -> NetworkGraph {
    let nodes: Vec<String> = (0..n).flat_map(|i| [format!("a{i}"), format!("b{i}")]).collect();
    let links: Vec<LinkSpec> = (0..n)
        .map(|i| LinkSpec::new(format!("a{i}"), format!("b{i}"), 1))
        .collect();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < density {
                pairs.push((a, b));
            }
        }
    }
    build_network(&nodes, &links, &InterferenceSpec::Pairs(pairs)).unwrap()
}

/// Node-exclusive graph with `n` random directed links over `nodes` nodes.
pub fn random_node_exclusive_graph(rng: &mut impl Rng, nodes: usize, n: usize) -> NetworkGraph {
    let names: Vec<String> = (0..nodes).map(|i| format!("v{i}")).collect();
    let links: Vec<LinkSpec> = (0..n)
        .map(|_| {
            let a = rng.random_range(0..nodes);
            let mut b = rng.random_range(0..nodes - 1);
            if b >= a {
                b += 1;
            }
            LinkSpec::new(names[a].clone(), names[b].clone(), rng.random_range(1..=3))
        })
        .collect();
    build_network(&names, &links, &InterferenceSpec::NodeExclusive).unwrap()
}

/// Integer-valued weights in `0..=max` so that ties are common.
pub fn random_weights(rng: &mut impl Rng, n: usize, max: u32) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0..=max) as f64).collect()
}

/// Maximum weight over all feasible subsets and the lexicographically
/// smallest maximizer.
pub fn brute_max_weight(graph: &NetworkGraph, weights: &[f64]) -> (f64, Schedule) {
    let n = graph.num_links();
    let mut best = (0.0, Schedule::EMPTY);
    for bits in 0u64..(1 << n) {
        let s = Schedule::from_bits(bits);
        if !graph.is_feasible(s) {
            continue;
        }
        let w: f64 = s.iter().map(|l| weights[l].max(0.0)).sum();
        if w > best.0 || (w == best.0 && s < best.1) {
            best = (w, s);
        }
    }
    best
}

/// Flows over `n` links whose endpoints are glued so that every route is
/// connected. `acyclic` keeps every route increasing in one random link
/// order, which rules out flow-loops. `ring >= 3` (with `!acyclic`) adds
/// two-hop flows chaining `ring` links into a cycle, which is a flow-loop.
/// Returns `None` when the gluing yields a self-loop or a route that
/// revisits a node.
pub fn random_flow_instance(
    rng: &mut impl Rng,
    n: usize,
    flows: usize,
    max_len: usize,
    acyclic: bool,
    ring: usize,
) -> Option<(NetworkGraph, FlowSet)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut routes: Vec<Vec<usize>> = (0..flows)
        .map(|_| {
            let len = rng.random_range(1..=max_len.min(n));
            let mut picked: Vec<usize> = order.choose_multiple(rng, len).copied().collect();
            if acyclic {
                let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &l)| (l, i)).collect();
                picked.sort_by_key(|l| pos[l]);
            }
            picked
        })
        .collect();
    if !acyclic && ring >= 3 && ring <= n {
        let cyc: Vec<usize> = order.choose_multiple(rng, ring).copied().collect();
        for i in 0..ring {
            routes.push(vec![cyc[i], cyc[(i + 1) % ring]]);
        }
    }
    // Endpoint 2l is the tail of link l, 2l+1 its head.
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for r in &routes {
        for w in r.windows(2) {
            let (a, b) = (find(&mut parent, 2 * w[0] + 1), find(&mut parent, 2 * w[1]));
            parent[a] = b;
        }
    }
    let class: Vec<usize> = (0..2 * n).map(|e| find(&mut parent, e)).collect();
    let names: BTreeSet<usize> = class.iter().copied().collect();
    let nodes: Vec<String> = names.iter().map(|c| format!("n{c}")).collect();
    let links: Vec<LinkSpec> = (0..n)
        .map(|l| LinkSpec::new(format!("n{}", class[2 * l]), format!("n{}", class[2 * l + 1]), 1))
        .collect();
    let graph = build_network(&nodes, &links, &InterferenceSpec::NodeExclusive).ok()?;
    let specs: Vec<FlowSpec> = routes.into_iter().map(|r| FlowSpec::poisson(r, 0.1)).collect();
    let fs = validate_flows(&graph, &specs, true).ok()?;
    Some((graph, fs))
}

pub fn has_flow_loop(flows: &FlowSet) -> bool {
    decompose_components(flows)
        .iter()
        .any(|c| !find_flow_loops(flows, c).is_empty())
}

/// Tries every map from used links to `1..=n`.
pub fn brute_ranking_exists(flows: &FlowSet) -> bool {
    let used: Vec<usize> = flows
        .flows()
        .iter()
        .flat_map(|f| f.route.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = used.len() as u32;
    let total = (k as u64).pow(k);
    (0..total).any(|code| {
        let mut c = code;
        let ranks = used
            .iter()
            .map(|&l| {
                let r = (c % k as u64) as u32 + 1;
                c /= k as u64;
                (l, r)
            })
            .collect();
        verify_ranking(flows, &Ranking { ranks }).is_none()
    })
}

/// Per-slot invariant checks; collects messages instead of panicking.
#[derive(Default)]
pub struct InvariantChecker {
    pub failures: Vec<String>,
    pub slots: u64,
    pub shadow_checks: u64,
    prev_arrivals: Vec<u64>,
    prev_departures: Vec<u64>,
}

impl InvariantChecker {
    fn fail(&mut self, slot: u64, m: String) {
        if self.failures.len() < 10 {
            self.failures.push(format!("slot {slot}: {m}"));
        }
    }

    pub fn check(&mut self, v: &SlotView<'_>) {
        self.slots += 1;
        let s = v.outcome.schedule;
        if !v.graph.is_feasible(s) {
            self.fail(v.slot, format!("infeasible schedule {s}"));
        }
        // Work bound and service only on scheduled links.
        for sv in &v.outcome.services {
            if !s.contains(sv.link) || sv.packets > v.graph.capacity(sv.link) {
                self.fail(v.slot, format!("service {sv:?} outside schedule {s}"));
            }
        }
        // Conservation per flow.
        let census = v.data.flow_census();
        for (f, (buffered, inflight)) in census.iter().enumerate() {
            if v.data.injected()[f] != buffered + inflight + v.data.delivered()[f] {
                self.fail(v.slot, format!("flow {f} not conserved"));
            }
        }
        // Q = Q(0) + A - D with A, D nondecreasing.
        let a = v.data.cumulative_arrivals();
        let d = v.data.cumulative_departures();
        for q in 0..a.len() {
            if v.data.len(q) + d[q] != v.data.initial_len(q) + a[q] {
                self.fail(v.slot, format!("queue {q} breaks Q = Q0 + A - D"));
            }
            if !self.prev_arrivals.is_empty() && (a[q] < self.prev_arrivals[q] || d[q] < self.prev_departures[q]) {
                self.fail(v.slot, format!("queue {q} counters decreased"));
            }
        }
        self.prev_arrivals = a.to_vec();
        self.prev_departures = d.to_vec();
        // Shadow service coincides with data service.
        if let Some(sh) = v.shadow {
            self.shadow_checks += 1;
            let served: BTreeSet<usize> = sh
                .served_this_slot()
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(q, _)| q)
                .collect();
            let data: BTreeSet<usize> = v.outcome.services.iter().map(|x| x.queue).collect();
            if served != data {
                self.fail(v.slot, format!("shadow served {served:?}, data served {data:?}"));
            }
            let links = Schedule::from_links(v.outcome.services.iter().map(|x| x.link));
            if links != s {
                self.fail(v.slot, format!("schedule {s} but services on {links}"));
            }
            if sh.values().iter().any(|&x| x.is_nan() || x < 0.0) {
                self.fail(v.slot, "negative shadow value".into());
            }
        }
    }
}

/// Runs `scenario` with invariant checks; also verifies each packet's
/// transmission sequence against its route.
pub fn checked_run(scenario: &Scenario) -> InvariantChecker {
    let mut sim = Simulation::new(scenario).unwrap();
    sim.data_mut().enable_transmission_log();
    let mut checker = InvariantChecker::default();
    {
        let mut obs = |v: &SlotView<'_>| checker.check(v);
        while !sim.is_done() {
            sim.step_observed(&mut obs).unwrap();
        }
    }
    let mut by_packet: BTreeMap<u64, Vec<(u32, usize, u64, usize)>> = BTreeMap::new();
    for t in sim.data().transmission_log() {
        by_packet.entry(t.seq).or_default().push((t.hop, t.link, t.slot, t.flow));
    }
    for (seq, hops) in by_packet {
        let flow = &scenario.flows.flow(hops[0].3);
        for (i, &(hop, link, slot, f)) in hops.iter().enumerate() {
            let ok = f == flow.id
                && hop as usize == i + 1
                && link == flow.link_at(i + 1)
                && (i == 0 || slot > hops[i - 1].2);
            if !ok {
                checker.fail(slot, format!("packet {seq} hop sequence {hops:?} breaks its route"));
                break;
            }
        }
    }
    checker
}

/// Random rate in `(0, max]` per flow.
pub fn with_random_rates(rng: &mut impl Rng, s: &Scenario, max: f64) -> Scenario {
    let specs: Vec<FlowSpec> = s
        .flows
        .flows()
        .iter()
        .map(|f| FlowSpec::poisson(f.route.clone(), rng.random_range(0.01..=max)))
        .collect();
    let fs = validate_flows(&s.graph, &specs, true).unwrap();
    let mut out = Scenario::new((*s.graph).clone(), fs);
    out.config = s.config.clone();
    out
}
