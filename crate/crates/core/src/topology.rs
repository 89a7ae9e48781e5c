//! Network graph, interference relation, flows and the hop-incidence table.
//!
//! A network is a set of directed links between opaque nodes. Two links may
//! interfere; the relation is kept symmetric and irreflexive. Flows travel on
//! fixed, loop-free routes given as link sequences.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::schedule::Schedule;

pub type LinkId = usize;
pub type NodeId = usize;
pub type FlowId = usize;

/// Largest number of links a network may have; schedules are 64-bit masks.
pub const MAX_LINKS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("link {link}: unknown node `{node}`")]
    UnknownNode { link: usize, node: String },
    #[error("link {0}: endpoints must be distinct nodes")]
    SelfLoop(usize),
    #[error("link {0}: capacity must be at least 1")]
    ZeroCapacity(usize),
    #[error("duplicate link id {0}")]
    DuplicateLinkId(usize),
    #[error("link ids must be dense 0..{count}; got {id}")]
    SparseLinkId { id: usize, count: usize },
    #[error("either every link carries an explicit id or none does")]
    MixedLinkIds,
    #[error("network has {0} links; at most {MAX_LINKS} are supported")]
    TooManyLinks(usize),
    #[error("interference pair ({0}, {1}) references an unknown link")]
    UnknownLinkInPair(usize, usize),
    #[error("interference pair ({0}, {0}) makes a link conflict with itself")]
    SelfConflict(usize),
    #[error("flow {flow}: route is empty")]
    EmptyRoute { flow: usize },
    #[error("flow {flow}: route references unknown link {link}")]
    UnknownLink { flow: usize, link: usize },
    #[error("flow {flow}: disconnected route between hop {hop} (link {from}) and hop {} (link {to})", hop + 1)]
    DisconnectedRoute {
        flow: usize,
        hop: usize,
        from: LinkId,
        to: LinkId,
    },
    #[error("flow {flow}: route visits node `{node}` twice")]
    RouteLoop { flow: usize, node: String },
    #[error("flow {flow}: arrival rate must be finite and non-negative, got {rate}")]
    BadRate { flow: usize, rate: f64 },
    #[error("link {0} carries no flow (set allow_unused_links to permit this)")]
    UnusedLink(LinkId),
}

/// A directed wireless link `from -> to` serving up to `capacity` packets per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedLink {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub capacity: u32,
}

/// Input description of one link, with node names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSpec {
    pub id: Option<usize>,
    pub from: String,
    pub to: String,
    pub capacity: u32,
}

impl LinkSpec {
    pub fn new(from: impl Into<String>, to: impl Into<String>, capacity: u32) -> Self {
        Self {
            id: None,
            from: from.into(),
            to: to.into(),
            capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InterferenceSpec {
    /// Two links conflict iff they share an endpoint.
    NodeExclusive,
    /// Explicit conflicting pairs; the symmetric closure is taken.
    Pairs(Vec<(LinkId, LinkId)>),
}

#[derive(Debug, Clone)]
pub struct NetworkGraph {
    nodes: Vec<String>,
    links: Vec<DirectedLink>,
    conflicts: Vec<Schedule>,
    node_exclusive: bool,
}

/// Builds a network graph. Link ids follow input order unless every link
/// names its id explicitly.
pub fn build_network(
    nodes: &[String],
    links: &[LinkSpec],
    interference: &InterferenceSpec,
) -> Result<NetworkGraph, TopologyError> {
    let mut index: HashMap<&str, NodeId> = HashMap::new();
    for (i, name) in nodes.iter().enumerate() {
        if index.insert(name.as_str(), i).is_some() {
            return Err(TopologyError::DuplicateNode(name.clone()));
        }
    }
    if links.len() > MAX_LINKS {
        return Err(TopologyError::TooManyLinks(links.len()));
    }

    let explicit = links.iter().filter(|l| l.id.is_some()).count();
    if explicit != 0 && explicit != links.len() {
        return Err(TopologyError::MixedLinkIds);
    }
    let mut slots: Vec<Option<DirectedLink>> = vec![None; links.len()];
    for (pos, spec) in links.iter().enumerate() {
        let id = spec.id.unwrap_or(pos);
        if id >= links.len() {
            return Err(TopologyError::SparseLinkId {
                id,
                count: links.len(),
            });
        }
        if slots[id].is_some() {
            return Err(TopologyError::DuplicateLinkId(id));
        }
        let lookup = |name: &String| {
            index
                .get(name.as_str())
                .copied()
                .ok_or_else(|| TopologyError::UnknownNode {
                    link: id,
                    node: name.clone(),
                })
        };
        let from = lookup(&spec.from)?;
        let to = lookup(&spec.to)?;
        if from == to {
            return Err(TopologyError::SelfLoop(id));
        }
        if spec.capacity == 0 {
            return Err(TopologyError::ZeroCapacity(id));
        }
        slots[id] = Some(DirectedLink {
            id,
            from,
            to,
            capacity: spec.capacity,
        });
    }
    let links: Vec<DirectedLink> = slots.into_iter().map(|l| l.expect("dense ids")).collect();

    let n = links.len();
    let mut conflicts = vec![Schedule::EMPTY; n];
    let node_exclusive = matches!(interference, InterferenceSpec::NodeExclusive);
    match interference {
        InterferenceSpec::NodeExclusive => {
            for a in 0..n {
                for b in (a + 1)..n {
                    let (la, lb) = (&links[a], &links[b]);
                    if la.from == lb.from || la.from == lb.to || la.to == lb.from || la.to == lb.to
                    {
                        conflicts[a].insert(b);
                        conflicts[b].insert(a);
                    }
                }
            }
        }
        InterferenceSpec::Pairs(pairs) => {
            for &(a, b) in pairs {
                if a >= n || b >= n {
                    return Err(TopologyError::UnknownLinkInPair(a, b));
                }
                if a == b {
                    return Err(TopologyError::SelfConflict(a));
                }
                conflicts[a].insert(b);
                conflicts[b].insert(a);
            }
        }
    }

    Ok(NetworkGraph {
        nodes: nodes.to_vec(),
        links,
        conflicts,
        node_exclusive,
    })
}

impl NetworkGraph {
    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn links(&self) -> &[DirectedLink] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &DirectedLink {
        &self.links[id]
    }

    pub fn capacity(&self, id: LinkId) -> u32 {
        self.links[id].capacity
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.nodes[node]
    }

    pub fn node_names(&self) -> &[String] {
        &self.nodes
    }

    /// `I(l)` as a link mask.
    pub fn conflicts(&self, id: LinkId) -> Schedule {
        self.conflicts[id]
    }

    pub fn interferes(&self, a: LinkId, b: LinkId) -> bool {
        self.conflicts[a].contains(b)
    }

    /// Whether the interference relation was built from shared endpoints.
    pub fn is_node_exclusive(&self) -> bool {
        self.node_exclusive
    }

    /// All links as a mask.
    pub fn all_links(&self) -> Schedule {
        Schedule::full(self.links.len())
    }

    /// True iff no two links of `schedule` interfere.
    pub fn is_feasible(&self, schedule: Schedule) -> bool {
        schedule
            .iter()
            .all(|l| l < self.links.len() && (self.conflicts[l] & schedule).is_empty())
    }
}

/// How packets enter a flow's source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalModel {
    /// Independent Poisson(rate) packets per slot.
    Poisson { rate: f64 },
    /// `floor(rate*t) - floor(rate*(t-1))` packets at slot `t`.
    Deterministic { rate: f64 },
}

impl ArrivalModel {
    pub fn rate(&self) -> f64 {
        match *self {
            ArrivalModel::Poisson { rate } | ArrivalModel::Deterministic { rate } => rate,
        }
    }

    pub fn with_rate(&self, rate: f64) -> Self {
        match self {
            ArrivalModel::Poisson { .. } => ArrivalModel::Poisson { rate },
            ArrivalModel::Deterministic { .. } => ArrivalModel::Deterministic { rate },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub name: Option<String>,
    pub route: Vec<LinkId>,
    pub arrival: ArrivalModel,
}

impl FlowSpec {
    pub fn poisson(route: Vec<LinkId>, rate: f64) -> Self {
        Self {
            name: None,
            route,
            arrival: ArrivalModel::Poisson { rate },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: FlowId,
    pub name: Option<String>,
    pub route: Vec<LinkId>,
    pub arrival: ArrivalModel,
}

impl Flow {
    pub fn hops(&self) -> usize {
        self.route.len()
    }

    /// Link at 1-based hop `k`.
    pub fn link_at(&self, k: usize) -> LinkId {
        self.route[k - 1]
    }
}

/// `H[s][l][k]` stored sparsely: for every link, the `(flow, hop)` pairs
/// (1-based hop) that traverse it, sorted by flow then hop.
#[derive(Debug, Clone, PartialEq)]
pub struct HopIncidence {
    per_link: Vec<Vec<(FlowId, usize)>>,
}

impl HopIncidence {
    pub fn new(num_links: usize, flows: &[Flow]) -> Self {
        let mut per_link = vec![Vec::new(); num_links];
        for f in flows {
            for (i, &l) in f.route.iter().enumerate() {
                per_link[l].push((f.id, i + 1));
            }
        }
        for v in &mut per_link {
            v.sort_unstable();
        }
        Self { per_link }
    }

    pub fn num_links(&self) -> usize {
        self.per_link.len()
    }

    /// `H^s_{l,k}`.
    pub fn h(&self, flow: FlowId, link: LinkId, hop: usize) -> bool {
        self.per_link
            .get(link)
            .is_some_and(|v| v.binary_search(&(flow, hop)).is_ok())
    }

    pub fn on_link(&self, link: LinkId) -> &[(FlowId, usize)] {
        &self.per_link[link]
    }

    /// `sum_s sum_k H^s_{l,k}` for every link.
    pub fn load_coefficients(&self) -> Vec<usize> {
        self.per_link.iter().map(Vec::len).collect()
    }

    /// Distinct hop classes present on `link`, ascending.
    pub fn hop_classes(&self, link: LinkId) -> Vec<usize> {
        let set: BTreeSet<usize> = self.per_link[link].iter().map(|&(_, k)| k).collect();
        set.into_iter().collect()
    }

    /// Per-link offered load `rho_l = sum_s sum_k H^s_{l,k} * lambda_s`.
    pub fn offered_load(&self, rates: &[f64]) -> Vec<f64> {
        self.per_link
            .iter()
            .map(|v| v.iter().map(|&(s, _)| rates[s]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSet {
    flows: Vec<Flow>,
    incidence: HopIncidence,
}

impl FlowSet {
    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn flow(&self, id: FlowId) -> &Flow {
        &self.flows[id]
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn incidence(&self) -> &HopIncidence {
        &self.incidence
    }

    /// `L^max`, the longest route length (0 with no flows).
    pub fn max_route_len(&self) -> usize {
        self.flows.iter().map(Flow::hops).max().unwrap_or(0)
    }

    pub fn rates(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.arrival.rate()).collect()
    }

    /// A copy with every flow's rate replaced.
    pub fn with_uniform_rate(&self, rate: f64) -> FlowSet {
        let mut out = self.clone();
        for f in &mut out.flows {
            f.arrival = f.arrival.with_rate(rate);
        }
        out
    }

    /// Immediate-successor relation over links: `l -> l'` whenever `l`
    /// directly precedes `l'` on some route. Values are ascending link ids.
    pub fn link_successors(&self) -> BTreeMap<LinkId, BTreeSet<LinkId>> {
        let mut succ: BTreeMap<LinkId, BTreeSet<LinkId>> = BTreeMap::new();
        for f in &self.flows {
            for w in f.route.windows(2) {
                succ.entry(w[0]).or_default().insert(w[1]);
            }
        }
        succ
    }
}

/// Checks routes against the graph and builds the hop-incidence table.
pub fn validate_flows(
    graph: &NetworkGraph,
    specs: &[FlowSpec],
    allow_unused_links: bool,
) -> Result<FlowSet, TopologyError> {
    let mut flows = Vec::with_capacity(specs.len());
    for (id, spec) in specs.iter().enumerate() {
        let rate = spec.arrival.rate();
        if !rate.is_finite() || rate < 0.0 {
            return Err(TopologyError::BadRate { flow: id, rate });
        }
        if spec.route.is_empty() {
            return Err(TopologyError::EmptyRoute { flow: id });
        }
        if let Some(&bad) = spec.route.iter().find(|&&l| l >= graph.num_links()) {
            return Err(TopologyError::UnknownLink { flow: id, link: bad });
        }
        for (hop, w) in spec.route.windows(2).enumerate() {
            if graph.link(w[0]).to != graph.link(w[1]).from {
                return Err(TopologyError::DisconnectedRoute {
                    flow: id,
                    hop: hop + 1,
                    from: w[0],
                    to: w[1],
                });
            }
        }
        let mut seen = BTreeSet::new();
        let first = graph.link(spec.route[0]).from;
        seen.insert(first);
        for &l in &spec.route {
            let node = graph.link(l).to;
            if !seen.insert(node) {
                return Err(TopologyError::RouteLoop {
                    flow: id,
                    node: graph.node_name(node).to_string(),
                });
            }
        }
        flows.push(Flow {
            id,
            name: spec.name.clone(),
            route: spec.route.clone(),
            arrival: spec.arrival,
        });
    }

    let incidence = HopIncidence::new(graph.num_links(), &flows);
    if !allow_unused_links {
        if let Some(l) = (0..graph.num_links()).find(|&l| incidence.on_link(l).is_empty()) {
            return Err(TopologyError::UnusedLink(l));
        }
    }
    Ok(FlowSet { flows, incidence })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn path4() -> NetworkGraph {
        build_network(
            &names(&["a", "b", "c", "d"]),
            &[
                LinkSpec::new("a", "b", 1),
                LinkSpec::new("b", "c", 1),
                LinkSpec::new("c", "d", 1),
            ],
            &InterferenceSpec::NodeExclusive,
        )
        .unwrap()
    }

    fn ids(s: Schedule) -> Vec<usize> {
        s.iter().collect()
    }

    #[test]
    fn opposite_links_conflict() {
        let g = build_network(
            &names(&["a", "b"]),
            &[LinkSpec::new("a", "b", 1), LinkSpec::new("b", "a", 1)],
            &InterferenceSpec::NodeExclusive,
        )
        .unwrap();
        assert_eq!(ids(g.conflicts(0)), vec![1]);
        assert_eq!(ids(g.conflicts(1)), vec![0]);
    }

    #[test]
    fn path_conflicts_by_shared_endpoint() {
        let g = path4();
        assert_eq!(ids(g.conflicts(0)), vec![1]);
        assert_eq!(ids(g.conflicts(1)), vec![0, 2]);
        assert_eq!(ids(g.conflicts(2)), vec![1]);
        assert!(g.is_node_exclusive());
    }

    #[test]
    fn explicit_pairs_are_symmetrized() {
        let g = build_network(
            &names(&["a", "b", "c", "d", "e", "f"]),
            &[
                LinkSpec::new("a", "b", 1),
                LinkSpec::new("c", "d", 1),
                LinkSpec::new("e", "f", 1),
            ],
            &InterferenceSpec::Pairs(vec![(0, 2)]),
        )
        .unwrap();
        assert_eq!(ids(g.conflicts(0)), vec![2]);
        assert_eq!(ids(g.conflicts(2)), vec![0]);
        assert!(g.conflicts(1).is_empty());
        assert!(!g.is_node_exclusive());
    }

    #[test]
    fn construction_errors() {
        let n = names(&["a", "b"]);
        let self_loop = build_network(&n, &[LinkSpec::new("a", "a", 1)], &InterferenceSpec::NodeExclusive);
        assert_eq!(self_loop.unwrap_err(), TopologyError::SelfLoop(0));

        let mut l0 = LinkSpec::new("a", "b", 1);
        l0.id = Some(0);
        let mut l1 = LinkSpec::new("b", "a", 1);
        l1.id = Some(0);
        let dup = build_network(&n, &[l0, l1], &InterferenceSpec::NodeExclusive);
        assert_eq!(dup.unwrap_err(), TopologyError::DuplicateLinkId(0));

        let unknown = build_network(
            &n,
            &[LinkSpec::new("a", "b", 1)],
            &InterferenceSpec::Pairs(vec![(0, 3)]),
        );
        assert_eq!(unknown.unwrap_err(), TopologyError::UnknownLinkInPair(0, 3));

        let zero = build_network(&n, &[LinkSpec::new("a", "b", 0)], &InterferenceSpec::NodeExclusive);
        assert_eq!(zero.unwrap_err(), TopologyError::ZeroCapacity(0));
    }

    #[test]
    fn incidence_of_three_hop_flow() {
        let g = path4();
        let fs = validate_flows(&g, &[FlowSpec::poisson(vec![0, 1, 2], 0.1)], false).unwrap();
        let h = fs.incidence();
        assert!(h.h(0, 0, 1) && h.h(0, 1, 2) && h.h(0, 2, 3));
        assert!(!h.h(0, 0, 2));
        assert_eq!(fs.max_route_len(), 3);
    }

    #[test]
    fn route_errors() {
        let g = path4();
        let err = validate_flows(&g, &[FlowSpec::poisson(vec![0, 2], 0.1)], true).unwrap_err();
        assert!(matches!(err, TopologyError::DisconnectedRoute { flow: 0, .. }));
        assert!(err.to_string().contains("disconnected route"));

        let err = validate_flows(&g, &[FlowSpec::poisson(vec![0], 0.1)], false).unwrap_err();
        assert_eq!(err, TopologyError::UnusedLink(1));
        assert!(validate_flows(&g, &[FlowSpec::poisson(vec![0], 0.1)], true).is_ok());

        let err = validate_flows(&g, &[FlowSpec::poisson(vec![7], 0.1)], true).unwrap_err();
        assert_eq!(err, TopologyError::UnknownLink { flow: 0, link: 7 });
    }

    #[test]
    fn route_revisiting_a_node_is_rejected() {
        let g = build_network(
            &names(&["a", "b", "c"]),
            &[
                LinkSpec::new("a", "b", 1),
                LinkSpec::new("b", "c", 1),
                LinkSpec::new("c", "a", 1),
                LinkSpec::new("a", "b", 1),
            ],
            &InterferenceSpec::NodeExclusive,
        )
        .unwrap();
        let err = validate_flows(&g, &[FlowSpec::poisson(vec![0, 1, 2, 3], 0.1)], true).unwrap_err();
        assert!(matches!(err, TopologyError::RouteLoop { flow: 0, .. }));
    }

    #[test]
    fn flow_loop_example_routes_are_individually_valid() {
        // Seven links around a ring of nodes; link i joins node i to node i+1
        // except link 7 which closes back to the head of link 2.
        let n = names(&["x", "n1", "n2", "n3", "n4", "n5", "n6"]);
        let links = vec![
            LinkSpec::new("x", "n1", 1),
            LinkSpec::new("n1", "n2", 1),
            LinkSpec::new("n2", "n3", 1),
            LinkSpec::new("n3", "n4", 1),
            LinkSpec::new("n4", "n5", 1),
            LinkSpec::new("n5", "n6", 1),
            LinkSpec::new("n6", "n1", 1),
        ];
        let g = build_network(&n, &links, &InterferenceSpec::NodeExclusive).unwrap();
        let routes = [vec![0, 1, 2], vec![2, 3], vec![3, 4], vec![4, 5], vec![5, 6], vec![6, 1]];
        let specs: Vec<_> = routes.iter().map(|r| FlowSpec::poisson(r.clone(), 0.1)).collect();
        let fs = validate_flows(&g, &specs, false).unwrap();
        assert_eq!(fs.len(), 6);
    }
}
