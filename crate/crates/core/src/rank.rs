//! Flow structure analysis: components, flow-loops, flow-paths and rank
//! assignment over flow-trees.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::topology::{FlowId, FlowSet, LinkId};

pub const DEFAULT_PATH_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error("component is not a flow-tree: {0}")]
    NotAFlowTree(FlowLoop),
    #[error("more than {0} flow-paths; raise the limit or split the component")]
    PathLimit(usize),
    #[error("path order must be a permutation of 0..{0}")]
    BadOrder(usize),
    #[error("rank assignment produced a non-monotone ranking: {0}")]
    NotMonotone(RankViolation),
}

/// A maximal set of links whose flows pairwise communicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub links: Vec<LinkId>,
    pub flows: Vec<FlowId>,
}

impl Component {
    pub fn contains(&self, link: LinkId) -> bool {
        self.links.binary_search(&link).is_ok()
    }
}

/// Splits the flows into components: two flows belong together when their
/// routes share a link, transitively. Ordered by smallest link.
pub fn decompose_components(flows: &FlowSet) -> Vec<Component> {
    let n = flows.len();
    let mut parent: Vec<usize> = (0..n).collect();
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
    let mut owner: BTreeMap<LinkId, FlowId> = BTreeMap::new();
    for f in flows.flows() {
        for &l in &f.route {
            match owner.get(&l) {
                Some(&g) => {
                    let (a, b) = (find(&mut parent, g), find(&mut parent, f.id));
                    parent[a.max(b)] = a.min(b);
                }
                None => {
                    owner.insert(l, f.id);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, (BTreeSet<LinkId>, Vec<FlowId>)> = BTreeMap::new();
    for f in flows.flows() {
        let root = find(&mut parent, f.id);
        let g = groups.entry(root).or_default();
        g.0.extend(f.route.iter().copied());
        g.1.push(f.id);
    }
    let mut out: Vec<Component> = groups
        .into_values()
        .map(|(links, flows)| Component {
            links: links.into_iter().collect(),
            flows,
        })
        .collect();
    out.sort_by_key(|c| c.links[0]);
    out
}

/// A witness of a flow-loop. `segments[n] = (in, out)` are the links
/// `l^{s_n}_{i_n}` and `l^{s_n}_{j_n}` of flow `flows[n]`; each `out` equals
/// the next segment's `in`, wrapping around.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowLoop {
    /// The link cycle, starting at its smallest link.
    pub links: Vec<LinkId>,
    pub flows: Vec<FlowId>,
    pub segments: Vec<(LinkId, LinkId)>,
}

impl fmt::Display for FlowLoop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "links {:?} via flows {:?}", self.links, self.flows)
    }
}

impl FlowLoop {
    /// Checks the witness against the loop definition directly on the routes.
    pub fn is_valid(&self, flows: &FlowSet) -> bool {
        let n = self.flows.len();
        if n < 2 || self.segments.len() != n {
            return false;
        }
        for (i, (&s, &(a, b))) in self.flows.iter().zip(&self.segments).enumerate() {
            let route = &flows.flow(s).route;
            let (Some(pa), Some(pb)) = (
                route.iter().position(|&l| l == a),
                route.iter().position(|&l| l == b),
            ) else {
                return false;
            };
            if pa >= pb || self.segments[(i + 1) % n].0 != b {
                return false;
            }
        }
        true
    }
}

/// Link precedence graph restricted to `component`: `l -> l'` when `l`
/// directly precedes `l'` on a route. Successor lists ascend.
fn precedence(flows: &FlowSet, component: &Component) -> BTreeMap<LinkId, Vec<LinkId>> {
    let mut succ: BTreeMap<LinkId, BTreeSet<LinkId>> =
        component.links.iter().map(|&l| (l, BTreeSet::new())).collect();
    for &s in &component.flows {
        for w in flows.flow(s).route.windows(2) {
            succ.entry(w[0]).or_default().insert(w[1]);
        }
    }
    succ.into_iter().map(|(l, v)| (l, v.into_iter().collect())).collect()
}

/// Strongly connected components with more than one link, via Kosaraju.
fn cyclic_sccs(succ: &BTreeMap<LinkId, Vec<LinkId>>) -> Vec<BTreeSet<LinkId>> {
    let mut pred: BTreeMap<LinkId, Vec<LinkId>> = succ.keys().map(|&l| (l, Vec::new())).collect();
    for (&a, bs) in succ {
        for &b in bs {
            pred.entry(b).or_default().push(a);
        }
    }
    let mut seen = BTreeSet::new();
    let mut finish = Vec::new();
    for &start in succ.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        while let Some((v, i)) = stack.pop() {
            let next = succ.get(&v).map_or(&[][..], Vec::as_slice);
            if i < next.len() {
                stack.push((v, i + 1));
                let w = next[i];
                if seen.insert(w) {
                    stack.push((w, 0));
                }
            } else {
                finish.push(v);
            }
        }
    }
    let mut assigned = BTreeSet::new();
    let mut out = Vec::new();
    for &root in finish.iter().rev() {
        if !assigned.insert(root) {
            continue;
        }
        let mut scc = BTreeSet::from([root]);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &u in pred.get(&v).map_or(&[][..], Vec::as_slice) {
                if assigned.insert(u) {
                    scc.insert(u);
                    stack.push(u);
                }
            }
        }
        if scc.len() > 1 {
            out.push(scc);
        }
    }
    out.sort_by_key(|s| *s.iter().next().expect("non-empty"));
    out
}

/// One witness per cyclic part of the precedence graph; empty means the
/// component is a flow-tree.
pub fn find_flow_loops(flows: &FlowSet, component: &Component) -> Vec<FlowLoop> {
    let succ = precedence(flows, component);
    cyclic_sccs(&succ)
        .into_iter()
        .map(|scc| loop_witness(flows, component, &succ, &scc))
        .collect()
}

fn loop_witness(
    flows: &FlowSet,
    component: &Component,
    succ: &BTreeMap<LinkId, Vec<LinkId>>,
    scc: &BTreeSet<LinkId>,
) -> FlowLoop {
    // Shortest cycle through the smallest link, by BFS inside the SCC.
    let start = *scc.iter().next().expect("non-empty");
    let mut prev: BTreeMap<LinkId, LinkId> = BTreeMap::new();
    let mut queue = VecDeque::from([start]);
    let mut last = None;
    'bfs: while let Some(v) = queue.pop_front() {
        for &w in &succ[&v] {
            if !scc.contains(&w) {
                continue;
            }
            if w == start {
                last = Some(v);
                break 'bfs;
            }
            if let std::collections::btree_map::Entry::Vacant(e) = prev.entry(w) {
                e.insert(v);
                queue.push_back(w);
            }
        }
    }
    let mut links = vec![last.expect("an SCC contains a cycle")];
    while *links.last().expect("non-empty") != start {
        let v = prev[links.last().expect("non-empty")];
        links.push(v);
    }
    links.reverse();

    // Carrier flow of each cycle edge (smallest id), then merge runs of the
    // same flow into one segment.
    let k = links.len();
    let carrier = |a: LinkId, b: LinkId| -> FlowId {
        *component
            .flows
            .iter()
            .find(|&&s| flows.flow(s).route.windows(2).any(|w| w[0] == a && w[1] == b))
            .expect("precedence edge has a flow")
    };
    let edges: Vec<(FlowId, LinkId, LinkId)> = (0..k)
        .map(|i| {
            let (a, b) = (links[i], links[(i + 1) % k]);
            (carrier(a, b), a, b)
        })
        .collect();
    // Rotate so a run boundary sits at index 0.
    let shift = (0..k).find(|&i| edges[i].0 != edges[(i + k - 1) % k].0).unwrap_or(0);
    let mut flows_out = Vec::new();
    let mut segments: Vec<(LinkId, LinkId)> = Vec::new();
    for i in 0..k {
        let (s, a, b) = edges[(i + shift) % k];
        if flows_out.last() == Some(&s) && i > 0 {
            segments.last_mut().expect("non-empty").1 = b;
        } else {
            flows_out.push(s);
            segments.push((a, b));
        }
    }
    // Start the flow list at the segment entering the smallest link.
    if let Some(p) = segments.iter().position(|&(a, _)| a == start) {
        flows_out.rotate_left(p);
        segments.rotate_left(p);
    }
    FlowLoop {
        links,
        flows: flows_out,
        segments,
    }
}

/// A starting-to-ending chain of links, consecutive links sharing a flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowPath {
    pub links: Vec<LinkId>,
}

impl FlowPath {
    pub fn starting(&self) -> LinkId {
        self.links[0]
    }

    pub fn ending(&self) -> LinkId {
        *self.links.last().expect("flow-paths are non-empty")
    }
}

/// Links carrying only exogenous (first-hop) traffic.
pub fn starting_links(flows: &FlowSet, component: &Component) -> Vec<LinkId> {
    component
        .links
        .iter()
        .copied()
        .filter(|&l| flows.incidence().on_link(l).iter().all(|&(_, k)| k == 1))
        .collect()
}

/// Links carrying only last-hop traffic.
pub fn ending_links(flows: &FlowSet, component: &Component) -> Vec<LinkId> {
    component
        .links
        .iter()
        .copied()
        .filter(|&l| {
            flows
                .incidence()
                .on_link(l)
                .iter()
                .all(|&(s, k)| k == flows.flow(s).hops())
        })
        .collect()
}

pub fn enumerate_flow_paths(flows: &FlowSet, component: &Component) -> Result<Vec<FlowPath>, RankError> {
    enumerate_flow_paths_with_limit(flows, component, DEFAULT_PATH_LIMIT)
}

/// All flow-paths, in depth-first discovery order from starting links in
/// ascending id with successors in ascending id.
pub fn enumerate_flow_paths_with_limit(
    flows: &FlowSet,
    component: &Component,
    limit: usize,
) -> Result<Vec<FlowPath>, RankError> {
    if let Some(w) = find_flow_loops(flows, component).into_iter().next() {
        return Err(RankError::NotAFlowTree(w));
    }
    let succ = precedence(flows, component);
    let ending: BTreeSet<LinkId> = ending_links(flows, component).into_iter().collect();
    let mut out = Vec::new();
    for start in starting_links(flows, component) {
        let mut path = vec![start];
        let mut stack = vec![0usize];
        while let Some(i) = stack.last_mut() {
            let v = *path.last().expect("path tracks stack");
            if ending.contains(&v) {
                if out.len() == limit {
                    return Err(RankError::PathLimit(limit));
                }
                out.push(FlowPath { links: path.clone() });
                stack.pop();
                path.pop();
                continue;
            }
            let next = &succ[&v];
            if *i < next.len() {
                let w = next[*i];
                *i += 1;
                path.push(w);
                stack.push(0);
            } else {
                stack.pop();
                path.pop();
            }
        }
    }
    Ok(out)
}

/// Ranks for every analysed link.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ranking {
    pub ranks: BTreeMap<LinkId, u32>,
}

impl Ranking {
    pub fn get(&self, link: LinkId) -> Option<u32> {
        self.ranks.get(&link).copied()
    }
}

/// Final ranking plus the rank table after each while-loop iteration
/// (entry 0 is the all `-1` initial table).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankAssignment {
    pub ranking: Ranking,
    pub snapshots: Vec<BTreeMap<LinkId, i64>>,
    pub order: Vec<usize>,
}

/// Rank Assignment over the flow-paths of one flow-tree, taking
/// `paths[order[0]]` first.
pub fn assign_ranks(paths: &[FlowPath], order: &[usize]) -> Result<RankAssignment, RankError> {
    let mut check = order.to_vec();
    check.sort_unstable();
    if check != (0..paths.len()).collect::<Vec<_>>() {
        return Err(RankError::BadOrder(paths.len()));
    }
    let mut r: BTreeMap<LinkId, i64> = paths
        .iter()
        .flat_map(|p| p.links.iter().map(|&l| (l, -1)))
        .collect();
    let mut snapshots = vec![r.clone()];
    let mut chosen: Vec<&FlowPath> = Vec::new();
    for &pi in order {
        let path = &paths[pi];
        let mut count: i64 = 1;
        for &l in &path.links {
            let rl = r[&l];
            if rl == -1 {
                r.insert(l, count);
            } else if rl >= count {
                count = rl;
            } else {
                let gamma: BTreeSet<LinkId> = chosen
                    .iter()
                    .filter(|p| p.links.contains(&l))
                    .flat_map(|p| p.links.iter().copied())
                    .filter(|m| r[m] > rl)
                    .collect();
                for m in gamma {
                    *r.get_mut(&m).expect("ranked") += count - rl;
                }
                r.insert(l, count);
            }
            count += 1;
        }
        chosen.push(path);
        snapshots.push(r.clone());
    }
    for p in paths {
        for w in p.links.windows(2) {
            if r[&w[0]] >= r[&w[1]] {
                return Err(RankError::NotMonotone(RankViolation {
                    flow: None,
                    hop: 0,
                    from: w[0],
                    to: w[1],
                    from_rank: r[&w[0]].max(0) as u32,
                    to_rank: r[&w[1]].max(0) as u32,
                }));
            }
        }
    }
    Ok(RankAssignment {
        ranking: Ranking {
            ranks: r.into_iter().map(|(l, v)| (l, v as u32)).collect(),
        },
        snapshots,
        order: order.to_vec(),
    })
}

/// First place where ranks fail to increase: link `from` (1-based hop `hop`)
/// feeds link `to` on `flow` without a larger rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankViolation {
    pub flow: Option<FlowId>,
    pub hop: usize,
    pub from: LinkId,
    pub to: LinkId,
    pub from_rank: u32,
    pub to_rank: u32,
}

impl fmt::Display for RankViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.flow {
            Some(s) => write!(f, "flow {s} hop {}: ", self.hop)?,
            None => write!(f, "flow-path: ")?,
        }
        write!(
            f,
            "link {} (rank {}) precedes link {} (rank {})",
            self.from, self.from_rank, self.to, self.to_rank
        )
    }
}

/// Checks that ranks strictly increase along every route, i.e. every
/// non-exogenous packet reaches a link from a smaller-ranked one. Unranked
/// links count as rank 0.
pub fn verify_ranking(flows: &FlowSet, ranking: &Ranking) -> Option<RankViolation> {
    for f in flows.flows() {
        for (i, w) in f.route.windows(2).enumerate() {
            let a = ranking.get(w[0]).unwrap_or(0);
            let b = ranking.get(w[1]).unwrap_or(0);
            if a >= b {
                return Some(RankViolation {
                    flow: Some(f.id),
                    hop: i + 1,
                    from: w[0],
                    to: w[1],
                    from_rank: a,
                    to_rank: b,
                });
            }
        }
    }
    None
}

/// Per-component analysis used by the CLI.
#[derive(Debug, Clone)]
pub struct ComponentReport {
    pub component: Component,
    pub loops: Vec<FlowLoop>,
    pub paths: Vec<FlowPath>,
    pub assignment: Option<RankAssignment>,
}

/// Analyses every component; flow-trees get ranked in discovery order.
pub fn analyse(flows: &FlowSet, path_limit: usize) -> Result<Vec<ComponentReport>, RankError> {
    let mut out = Vec::new();
    for component in decompose_components(flows) {
        let loops = find_flow_loops(flows, &component);
        if loops.is_empty() {
            let paths = enumerate_flow_paths_with_limit(flows, &component, path_limit)?;
            let order: Vec<usize> = (0..paths.len()).collect();
            let assignment = assign_ranks(&paths, &order)?;
            out.push(ComponentReport {
                component,
                loops,
                paths,
                assignment: Some(assignment),
            });
        } else {
            out.push(ComponentReport {
                component,
                loops,
                paths: Vec::new(),
                assignment: None,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{flow_loop_example, cycle_tree, branching_tree};

    /// Link numbers in these tests are 1-based.
    fn ids(v: &[usize]) -> Vec<usize> {
        v.iter().map(|x| x - 1).collect()
    }

    #[test]
    fn components() {
        let s = flow_loop_example();
        let c = decompose_components(&s.flows);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].flows, (0..6).collect::<Vec<_>>());

        let s = crate::generators::path_scenario(4, &[vec![0], vec![2, 3]]);
        let c = decompose_components(&s.flows);
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].links, vec![2, 3]);
    }

    #[test]
    fn flow_loop_example_has_loop() {
        let s = flow_loop_example();
        let c = &decompose_components(&s.flows)[0];
        let loops = find_flow_loops(&s.flows, c);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].links, ids(&[2, 3, 4, 5, 6, 7]));
        assert_eq!(loops[0].flows, (0..6).collect::<Vec<_>>());
        assert!(loops[0].is_valid(&s.flows));
        assert!(matches!(
            enumerate_flow_paths(&s.flows, c),
            Err(RankError::NotAFlowTree(_))
        ));
    }

    #[test]
    fn cycle_tree_single_path() {
        let s = cycle_tree();
        let c = &decompose_components(&s.flows)[0];
        assert!(find_flow_loops(&s.flows, c).is_empty());
        let paths = enumerate_flow_paths(&s.flows, c).unwrap();
        assert_eq!(paths, vec![FlowPath { links: ids(&[1, 2, 3, 4, 5, 6, 7, 8]) }]);
        let a = assign_ranks(&paths, &[0]).unwrap();
        let r: Vec<u32> = a.ranking.ranks.values().copied().collect();
        assert_eq!(r, vec![1, 2, 3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn branching_tree_rank_table() {
        let s = branching_tree();
        let c = &decompose_components(&s.flows)[0];
        let paths = enumerate_flow_paths(&s.flows, c).unwrap();
        let want = [
            ids(&[1, 2, 3, 4, 5, 8, 10]),
            ids(&[1, 2, 6, 11, 12]),
            ids(&[7, 8, 10]),
            ids(&[7, 8, 9, 11, 12]),
            ids(&[1, 2, 3, 4, 5, 8, 9, 11, 12]),
        ];
        assert_eq!(paths.len(), 5);
        let order: Vec<usize> = want
            .iter()
            .map(|w| paths.iter().position(|p| &p.links == w).expect("path present"))
            .collect();
        let a = assign_ranks(&paths, &order).unwrap();
        let rows: Vec<Vec<i64>> = a.snapshots.iter().map(|m| m.values().copied().collect()).collect();
        assert_eq!(rows[4], vec![1, 2, 3, 4, 5, 3, 1, 6, 7, 7, 8, 9]);
        assert_eq!(rows[5], rows[4]);
        assert!(verify_ranking(&s.flows, &a.ranking).is_none());
    }

    #[test]
    fn verify_reports_first_violation() {
        let s = crate::generators::path_scenario(2, &[vec![0, 1]]);
        let mut r = Ranking::default();
        r.ranks.insert(0, 2);
        r.ranks.insert(1, 1);
        let v = verify_ranking(&s.flows, &r).unwrap();
        assert_eq!((v.flow, v.hop, v.from, v.to), (Some(0), 1, 0, 1));

        let s = crate::generators::path_scenario(3, &[vec![0], vec![1], vec![2]]);
        let r = Ranking { ranks: (0..3).map(|l| (l, l as u32 + 1)).collect() };
        assert!(verify_ranking(&s.flows, &r).is_none());
    }

    #[test]
    fn single_link_path() {
        let s = crate::generators::path_scenario(1, &[vec![0]]);
        let c = &decompose_components(&s.flows)[0];
        let paths = enumerate_flow_paths(&s.flows, c).unwrap();
        assert_eq!(paths, vec![FlowPath { links: vec![0] }]);
        assert_eq!(assign_ranks(&paths, &[0]).unwrap().ranking.get(0), Some(1));
        assert!(assign_ranks(&paths, &[1]).is_err());
    }
}
