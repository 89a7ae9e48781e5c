//! Feasible schedules and exact MaxWeight solvers.
//!
//! A schedule is a set of simultaneously active links, stored as a 64-bit
//! mask. Schedules order lexicographically by their bit-vector read from link
//! 0 upwards, so `{1}` sorts before `{0, 2}`; MaxWeight ties resolve to the
//! smallest schedule in this order.

mod bnb;
mod matching;

use std::fmt;
use std::ops::{BitAnd, BitOr, Not};

use thiserror::Error;

use crate::topology::{LinkId, NetworkGraph};

pub use bnb::optimum_weight as branch_and_bound_optimum;
pub use matching::{max_weight_matching, MatchingResult};

/// Default ceiling on the number of links for maximal-schedule enumeration.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("weight of link {link} is not finite ({value})")]
    NonFiniteWeight { link: LinkId, value: f64 },
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error(
        "{links} links exceed the schedule enumeration limit of {limit}; \
         larger networks need LP column generation, which is not provided"
    )]
    EnumerationLimit { links: usize, limit: usize },
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Schedule(u64);

impl Schedule {
    pub const EMPTY: Schedule = Schedule(0);

    pub fn from_bits(bits: u64) -> Self {
        Schedule(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// Links `0..n`.
    pub fn full(n: usize) -> Self {
        if n >= 64 {
            Schedule(u64::MAX)
        } else {
            Schedule((1u64 << n) - 1)
        }
    }

    pub fn single(link: LinkId) -> Self {
        Schedule(1u64 << link)
    }

    pub fn from_links<I: IntoIterator<Item = LinkId>>(links: I) -> Self {
        links.into_iter().fold(Schedule::EMPTY, |s, l| s | Schedule::single(l))
    }

    pub fn contains(self, link: LinkId) -> bool {
        link < 64 && self.0 & (1u64 << link) != 0
    }

    pub fn insert(&mut self, link: LinkId) {
        self.0 |= 1u64 << link;
    }

    pub fn remove(&mut self, link: LinkId) {
        self.0 &= !(1u64 << link);
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: Schedule) -> bool {
        self.0 & !other.0 == 0
    }

    /// Lowest link id in the set.
    pub fn first(self) -> Option<LinkId> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> impl Iterator<Item = LinkId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let l = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(l)
            }
        })
    }

    /// Sum of `weights[l]` over members, accumulated in ascending link order.
    pub fn weight(self, weights: &[f64]) -> f64 {
        self.iter().map(|l| weights[l]).sum()
    }

    /// 0/1 vector of length `n`.
    pub fn to_vec(self, n: usize) -> Vec<u8> {
        (0..n).map(|l| self.contains(l) as u8).collect()
    }
}

impl BitAnd for Schedule {
    type Output = Schedule;
    fn bitand(self, rhs: Schedule) -> Schedule {
        Schedule(self.0 & rhs.0)
    }
}

impl BitOr for Schedule {
    type Output = Schedule;
    fn bitor(self, rhs: Schedule) -> Schedule {
        Schedule(self.0 | rhs.0)
    }
}

impl Not for Schedule {
    type Output = Schedule;
    fn not(self) -> Schedule {
        Schedule(!self.0)
    }
}

impl Ord for Schedule {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.reverse_bits().cmp(&other.0.reverse_bits())
    }
}

impl PartialOrd for Schedule {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

/// The maximal feasible schedules of a network, sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSet {
    schedules: Vec<Schedule>,
}

impl ScheduleSet {
    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }

    pub fn position(&self, s: Schedule) -> Option<usize> {
        self.schedules.binary_search(&s).ok()
    }

    /// Whether `s` is a subset of some member.
    pub fn covers(&self, s: Schedule) -> bool {
        self.schedules.iter().any(|m| s.is_subset(*m))
    }
}

pub fn is_feasible(graph: &NetworkGraph, schedule: Schedule) -> bool {
    graph.is_feasible(schedule)
}

/// Maximal independent sets of the conflict graph (Bron-Kerbosch on its
/// complement, with pivoting).
pub fn enumerate_maximal_schedules(graph: &NetworkGraph) -> Result<ScheduleSet, ScheduleError> {
    enumerate_maximal_schedules_within(graph, graph.all_links(), DEFAULT_ENUMERATION_LIMIT)
}

/// As [`enumerate_maximal_schedules`], restricted to the links in `subset`.
pub fn enumerate_maximal_schedules_within(
    graph: &NetworkGraph,
    subset: Schedule,
    limit: usize,
) -> Result<ScheduleSet, ScheduleError> {
    if subset.len() > limit {
        return Err(ScheduleError::EnumerationLimit {
            links: subset.len(),
            limit,
        });
    }
    // Neighbourhoods in the compatibility graph (non-conflicting pairs).
    let compat: Vec<Schedule> = (0..graph.num_links())
        .map(|l| {
            let mut c = subset & !graph.conflicts(l);
            c.remove(l);
            c
        })
        .collect();
    let mut out = Vec::new();
    if !subset.is_empty() {
        bron_kerbosch(&compat, Schedule::EMPTY, subset, Schedule::EMPTY, &mut out);
    } else {
        out.push(Schedule::EMPTY);
    }
    out.sort();
    Ok(ScheduleSet { schedules: out })
}

fn bron_kerbosch(
    adj: &[Schedule],
    r: Schedule,
    mut p: Schedule,
    mut x: Schedule,
    out: &mut Vec<Schedule>,
) {
    if p.is_empty() {
        if x.is_empty() {
            out.push(r);
        }
        return;
    }
    let pivot = (p | x)
        .iter()
        .max_by_key(|&u| (adj[u] & p).len())
        .expect("p is non-empty");
    for v in (p & !adj[pivot]).iter() {
        let mut r2 = r;
        r2.insert(v);
        bron_kerbosch(adj, r2, p & adj[v], x & adj[v], out);
        p.remove(v);
        x.insert(v);
    }
}

/// Which exact method supplies the optimum value before tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Matching for node-exclusive graphs, branch-and-bound otherwise.
    Auto,
    Matching,
    BranchAndBound,
}

/// A MaxWeight decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSchedule {
    pub schedule: Schedule,
    pub weight: f64,
}

/// Two weights closer than this are treated as tied.
pub fn tie_tolerance(optimum: f64) -> f64 {
    1e-9 * optimum.abs().max(1.0)
}

/// Feasible schedule maximizing `sum_l w_l M_l`; among maximizers the
/// lexicographically smallest. Negative weights count as zero, and
/// zero-weight links are never activated.
pub fn max_weight_schedule(
    graph: &NetworkGraph,
    weights: &[f64],
) -> Result<WeightedSchedule, ScheduleError> {
    max_weight_schedule_with(graph, weights, Solver::Auto)
}

pub fn max_weight_schedule_with(
    graph: &NetworkGraph,
    weights: &[f64],
    solver: Solver,
) -> Result<WeightedSchedule, ScheduleError> {
    let w = clean_weights(graph, weights)?;
    let candidates = Schedule::from_links((0..w.len()).filter(|&l| w[l] > 0.0));
    if candidates.is_empty() {
        return Ok(WeightedSchedule {
            schedule: Schedule::EMPTY,
            weight: 0.0,
        });
    }
    let use_matching = match solver {
        Solver::Auto => graph.is_node_exclusive(),
        Solver::Matching => {
            assert!(
                graph.is_node_exclusive(),
                "matching solver requires node-exclusive interference"
            );
            true
        }
        Solver::BranchAndBound => false,
    };
    let optimum = if use_matching {
        max_weight_matching(graph, &w).weight
    } else {
        bnb::optimum_weight(graph, &w, candidates)
    };
    let schedule = bnb::lex_first_reaching(graph, &w, candidates, optimum - tie_tolerance(optimum))
        .expect("the optimum is attainable");
    Ok(WeightedSchedule {
        schedule,
        weight: schedule.weight(&w),
    })
}

fn clean_weights(graph: &NetworkGraph, weights: &[f64]) -> Result<Vec<f64>, ScheduleError> {
    if weights.len() != graph.num_links() {
        return Err(ScheduleError::WeightCount {
            expected: graph.num_links(),
            got: weights.len(),
        });
    }
    weights
        .iter()
        .enumerate()
        .map(|(link, &value)| {
            if value.is_finite() {
                Ok(value.max(0.0))
            } else {
                Err(ScheduleError::NonFiniteWeight { link, value })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_network, InterferenceSpec, LinkSpec};

    pub(crate) fn path3() -> NetworkGraph {
        let nodes: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        build_network(
            &nodes,
            &[
                LinkSpec::new("a", "b", 1),
                LinkSpec::new("b", "c", 1),
                LinkSpec::new("c", "d", 1),
            ],
            &InterferenceSpec::NodeExclusive,
        )
        .unwrap()
    }

    fn pairs_graph(n: usize, pairs: Vec<(usize, usize)>) -> NetworkGraph {
        let nodes: Vec<String> = (0..2 * n).map(|i| format!("v{i}")).collect();
        let links: Vec<LinkSpec> = (0..n)
            .map(|i| LinkSpec::new(format!("v{}", 2 * i), format!("v{}", 2 * i + 1), 1))
            .collect();
        build_network(&nodes, &links, &InterferenceSpec::Pairs(pairs)).unwrap()
    }

    fn s(links: &[usize]) -> Schedule {
        Schedule::from_links(links.iter().copied())
    }

    #[test]
    fn lexicographic_order_reads_link_zero_first() {
        assert!(s(&[1]) < s(&[0, 2]));
        assert!(s(&[]) < s(&[2]));
        assert!(s(&[2]) < s(&[1]));
    }

    #[test]
    fn feasibility() {
        let g = path3();
        assert!(is_feasible(&g, Schedule::EMPTY));
        assert!(is_feasible(&g, s(&[0, 2])));
        assert!(!is_feasible(&g, s(&[0, 1])));
        assert!(is_feasible(&g, s(&[0])));
    }

    #[test]
    fn maximal_schedules_small_cases() {
        let g = path3();
        let set = enumerate_maximal_schedules(&g).unwrap();
        assert_eq!(set.schedules(), &[s(&[1]), s(&[0, 2])]);

        let free = pairs_graph(2, vec![]);
        assert_eq!(enumerate_maximal_schedules(&free).unwrap().schedules(), &[s(&[0, 1])]);

        let clique = pairs_graph(3, vec![(0, 1), (1, 2), (0, 2)]);
        assert_eq!(
            enumerate_maximal_schedules(&clique).unwrap().schedules(),
            &[s(&[2]), s(&[1]), s(&[0])]
        );
    }

    #[test]
    fn enumeration_limit_is_enforced() {
        let g = path3();
        let err = enumerate_maximal_schedules_within(&g, g.all_links(), 2).unwrap_err();
        assert!(matches!(err, ScheduleError::EnumerationLimit { links: 3, limit: 2 }));
        assert!(err.to_string().contains("column generation"));
    }

    #[test]
    fn max_weight_examples() {
        let g = path3();
        let zero = max_weight_schedule(&g, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(zero.schedule, Schedule::EMPTY);
        assert_eq!(zero.weight, 0.0);

        let r = max_weight_schedule(&g, &[5.0, 3.0, 4.0]).unwrap();
        assert_eq!(r.schedule, s(&[0, 2]));
        assert_eq!(r.weight, 9.0);

        let r = max_weight_schedule(&g, &[0.0, 7.0, 0.0]).unwrap();
        assert_eq!(r.schedule, s(&[1]));
        assert_eq!(r.weight, 7.0);
    }

    #[test]
    fn ties_resolve_to_lexicographically_smallest() {
        let g = path3();
        // {1} and {0,2} both weigh 6; {1} is smaller.
        for solver in [Solver::Matching, Solver::BranchAndBound] {
            let r = max_weight_schedule_with(&g, &[3.0, 6.0, 3.0], solver).unwrap();
            assert_eq!(r.schedule, s(&[1]));
        }
    }

    #[test]
    fn negative_weights_clamp_and_nan_errors() {
        let g = path3();
        let r = max_weight_schedule(&g, &[-4.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.schedule, s(&[1]));
        let err = max_weight_schedule(&g, &[f64::NAN, 1.0, 0.0]).unwrap_err();
        assert!(matches!(err, ScheduleError::NonFiniteWeight { link: 0, .. }));
        assert!(max_weight_schedule(&g, &[1.0]).is_err());
    }
}
