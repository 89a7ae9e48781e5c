//! Built-in scenarios: the 10-link linear network, a bottleneck star, a 4x4
//! grid, and the three small flow-structure examples used by the rank tests.

use crate::sim::Scenario;
use crate::topology::{
    build_network, validate_flows, FlowSpec, InterferenceSpec, LinkId, LinkSpec, TopologyError,
};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn assemble(
    nodes: Vec<String>,
    links: Vec<LinkSpec>,
    flows: Vec<FlowSpec>,
    allow_unused: bool,
) -> Result<Scenario, TopologyError> {
    let g = build_network(&nodes, &links, &InterferenceSpec::NodeExclusive)?;
    let f = validate_flows(&g, &flows, allow_unused)?;
    Ok(Scenario::new(g, f))
}

/// 11 nodes `1..11` on a path, link `k` (id `k-1`) joins nodes `k` and
/// `k+1` with capacity `11-k`, and flow `i` goes from node 1 to node `i+1`.
/// The reversed variant flips every link and flow.
pub fn linear10(rate: f64, reversed: bool) -> Scenario {
    let nodes: Vec<String> = (1..=11).map(|i| i.to_string()).collect();
    let links = (1..=10)
        .map(|k| {
            let (a, b) = (k.to_string(), (k + 1).to_string());
            let cap = 11 - k as u32;
            if reversed {
                LinkSpec::new(b, a, cap)
            } else {
                LinkSpec::new(a, b, cap)
            }
        })
        .collect();
    let flows = (1..=10)
        .map(|i| {
            let mut route: Vec<LinkId> = (0..i).collect();
            if reversed {
                route.reverse();
            }
            FlowSpec {
                name: Some(format!("f{i}")),
                ..FlowSpec::poisson(route, rate)
            }
        })
        .collect();
    assemble(nodes, links, flows, false).expect("linear network is valid")
}

/// A hub with four outgoing single-hop links: capacity 8 with four flows,
/// capacity 10 with two flows, and two capacity-1 links with one flow each.
pub fn star(rate: f64) -> Scenario {
    let nodes = names(&["hub", "a", "b", "c", "d"]);
    let links = vec![
        LinkSpec::new("hub", "a", 8),
        LinkSpec::new("hub", "b", 10),
        LinkSpec::new("hub", "c", 1),
        LinkSpec::new("hub", "d", 1),
    ];
    let flows = star_flows(&[0, 1, 2, 3], rate);
    assemble(nodes, links, flows, false).expect("star is valid")
}

fn star_flows(links: &[LinkId; 4], rate: f64) -> Vec<FlowSpec> {
    let counts = [4, 2, 1, 1];
    links
        .iter()
        .zip(counts)
        .flat_map(|(&l, n)| (0..n).map(move |_| FlowSpec::poisson(vec![l], rate)))
        .collect()
}

/// A path `n0 -> n1 -> ...` of unit-capacity links with the given routes,
/// unused links allowed.
pub fn path_scenario(num_links: usize, routes: &[Vec<LinkId>]) -> Scenario {
    let nodes: Vec<String> = (0..=num_links).map(|i| format!("n{i}")).collect();
    let links = (0..num_links)
        .map(|i| LinkSpec::new(nodes[i].clone(), nodes[i + 1].clone(), 1))
        .collect();
    let flows = routes.iter().map(|r| FlowSpec::poisson(r.clone(), 0.1)).collect();
    assemble(nodes, links, flows, true).expect("path routes are valid")
}

pub const GRID_SIDE: usize = 4;

/// Node name at grid row `r`, column `c` (0-based): `"1"` ... `"16"`,
/// row-major.
pub fn grid_node(r: usize, c: usize) -> String {
    (r * GRID_SIDE + c + 1).to_string()
}

/// Undirected grid edges, horizontal first, each row-major.
fn grid_edges() -> Vec<((usize, usize), (usize, usize))> {
    let mut v = Vec::new();
    for r in 0..GRID_SIDE {
        for c in 0..GRID_SIDE - 1 {
            v.push(((r, c), (r, c + 1)));
        }
    }
    for r in 0..GRID_SIDE - 1 {
        for c in 0..GRID_SIDE {
            v.push(((r, c), (r + 1, c)));
        }
    }
    v
}

/// Id of the directed grid link `from -> to`, if adjacent.
pub fn grid_link(from: (usize, usize), to: (usize, usize)) -> Option<LinkId> {
    grid_edges().iter().enumerate().find_map(|(i, &(a, b))| {
        if (a, b) == (from, to) {
            Some(2 * i)
        } else if (b, a) == (from, to) {
            Some(2 * i + 1)
        } else {
            None
        }
    })
}

/// Grid position `(row, column)`.
pub type Cell = (usize, usize);

/// Grid description: a default capacity, per-link overrides and flows
/// given as node sequences.
#[derive(Debug, Clone)]
pub struct GridParams {
    pub capacity: u32,
    pub capacities: Vec<(Cell, Cell, u32)>,
    pub flows: Vec<(Vec<Cell>, f64)>,
    pub allow_unused_links: bool,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            capacity: 1,
            capacities: Vec::new(),
            flows: Vec::new(),
            allow_unused_links: false,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GridError {
    #[error("nodes {0:?} and {1:?} are not grid neighbours")]
    NotAdjacent((usize, usize), (usize, usize)),
    #[error("flow {0} needs at least two nodes")]
    ShortFlow(usize),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// 4x4 grid, 24 node pairs each joined by two opposite links (48 total),
/// node-exclusive interference.
pub fn grid(params: &GridParams) -> Result<Scenario, GridError> {
    let mut nodes = Vec::new();
    for r in 0..GRID_SIDE {
        for c in 0..GRID_SIDE {
            nodes.push(grid_node(r, c));
        }
    }
    let mut links = Vec::new();
    for (a, b) in grid_edges() {
        links.push(LinkSpec::new(grid_node(a.0, a.1), grid_node(b.0, b.1), params.capacity));
        links.push(LinkSpec::new(grid_node(b.0, b.1), grid_node(a.0, a.1), params.capacity));
    }
    for &(a, b, cap) in &params.capacities {
        let l = grid_link(a, b).ok_or(GridError::NotAdjacent(a, b))?;
        links[l].capacity = cap;
    }
    let mut flows = Vec::new();
    for (i, (path, rate)) in params.flows.iter().enumerate() {
        if path.len() < 2 {
            return Err(GridError::ShortFlow(i));
        }
        let route = path
            .windows(2)
            .map(|w| grid_link(w[0], w[1]).ok_or(GridError::NotAdjacent(w[0], w[1])))
            .collect::<Result<Vec<_>, _>>()?;
        flows.push(FlowSpec::poisson(route, *rate));
    }
    Ok(assemble(nodes, links, flows, params.allow_unused_links)?)
}

/// The bottleneck star embedded at grid node 6 (row 1, column 1): its four
/// outgoing links get capacities 8, 10, 1, 1 and carry 4, 2, 1, 1 single-hop
/// flows. Other links stay idle.
pub fn grid_star(rate: f64) -> Scenario {
    let hub = (1, 1);
    let outs = [(0, 1), (1, 0), (1, 2), (2, 1)];
    let caps = [8, 10, 1, 1];
    let counts = [4, 2, 1, 1];
    let mut p = GridParams {
        allow_unused_links: true,
        ..Default::default()
    };
    for ((&o, cap), n) in outs.iter().zip(caps).zip(counts) {
        p.capacities.push((hub, o, cap));
        for _ in 0..n {
            p.flows.push((vec![hub, o], rate));
        }
    }
    grid(&p).expect("embedded star is valid")
}

/// Flow-loop example: a lead-in link 1 then links 2..7 around a 6-cycle;
/// flows (1,2,3), (3,4), (4,5), (5,6), (6,7), (7,2) in 1-based link numbers.
pub fn flow_loop_example() -> Scenario {
    let nodes = names(&["X", "A", "B", "C", "D", "E", "F"]);
    let links = vec![
        LinkSpec::new("X", "A", 1),
        LinkSpec::new("A", "B", 1),
        LinkSpec::new("B", "C", 1),
        LinkSpec::new("C", "D", 1),
        LinkSpec::new("D", "E", 1),
        LinkSpec::new("E", "F", 1),
        LinkSpec::new("F", "A", 1),
    ];
    let routes: [&[usize]; 6] = [&[1, 2, 3], &[3, 4], &[4, 5], &[5, 6], &[6, 7], &[7, 2]];
    let flows = routes
        .iter()
        .map(|r| FlowSpec::poisson(r.iter().map(|x| x - 1).collect(), 0.1))
        .collect();
    assemble(nodes, links, flows, false).expect("valid")
}

/// Flow-tree with one flow-path over a cycle A-B-...-G-B plus the link back
/// to A: flows (1,2,3,4) and (4,5,6,7,8).
pub fn cycle_tree() -> Scenario {
    let nodes = names(&["A", "B", "C", "D", "E", "F", "G"]);
    let links = vec![
        LinkSpec::new("A", "B", 1),
        LinkSpec::new("B", "C", 1),
        LinkSpec::new("C", "D", 1),
        LinkSpec::new("D", "E", 1),
        LinkSpec::new("E", "F", 1),
        LinkSpec::new("F", "G", 1),
        LinkSpec::new("G", "B", 1),
        LinkSpec::new("B", "A", 1),
    ];
    let flows = vec![
        FlowSpec::poisson(vec![0, 1, 2, 3], 0.1),
        FlowSpec::poisson(vec![3, 4, 5, 6, 7], 0.1),
    ];
    assemble(nodes, links, flows, false).expect("valid")
}

/// Flow-tree with five flow-paths: flows (1,2,3,4,5,8,10), (1,2,6,11,12)
/// and (7,8,9,11,12).
pub fn branching_tree() -> Scenario {
    let nodes = names(&["A", "B", "C", "D", "E", "F", "G", "H", "W", "X", "Y", "Z"]);
    let links = vec![
        LinkSpec::new("A", "B", 1),
        LinkSpec::new("B", "C", 1),
        LinkSpec::new("C", "D", 1),
        LinkSpec::new("D", "E", 1),
        LinkSpec::new("E", "F", 1),
        LinkSpec::new("C", "X", 1),
        LinkSpec::new("W", "F", 1),
        LinkSpec::new("F", "G", 1),
        LinkSpec::new("G", "X", 1),
        LinkSpec::new("G", "H", 1),
        LinkSpec::new("X", "Y", 1),
        LinkSpec::new("Y", "Z", 1),
    ];
    let routes: [&[usize]; 3] = [&[1, 2, 3, 4, 5, 8, 10], &[1, 2, 6, 11, 12], &[7, 8, 9, 11, 12]];
    let flows = routes
        .iter()
        .map(|r| FlowSpec::poisson(r.iter().map(|x| x - 1).collect(), 0.1))
        .collect();
    assemble(nodes, links, flows, false).expect("valid")
}

/// Looks up a built-in scenario by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    Some(match name {
        "linear10" => linear10(0.45, false),
        "linear10-reversed" => linear10(0.45, true),
        "star" => star(0.3),
        "grid-star" => grid_star(0.3),
        "flow-loop" => flow_loop_example(),
        "cycle-tree" => cycle_tree(),
        "branching-tree" => branching_tree(),
        _ => return None,
    })
}

pub const BUILTIN_NAMES: [&str; 7] = [
    "linear10",
    "linear10-reversed",
    "star",
    "grid-star",
    "flow-loop",
    "cycle-tree",
    "branching-tree",
];
