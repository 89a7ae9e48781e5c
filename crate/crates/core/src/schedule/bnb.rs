//! Branch-and-bound maximum weight independent set over the conflict graph.
//!
//! Bounds come from a greedy clique cover of the remaining candidates: at most
//! one link per clique can be active, so the sum of per-clique maxima bounds
//! any completion.

use super::Schedule;
use crate::topology::NetworkGraph;

struct Ctx<'a> {
    conflicts: Vec<Schedule>,
    weights: &'a [f64],
    /// Candidate links by descending weight (ties by id) for the cover.
    by_weight: Vec<usize>,
}

impl<'a> Ctx<'a> {
    fn new(graph: &NetworkGraph, weights: &'a [f64], candidates: Schedule) -> Self {
        let mut by_weight: Vec<usize> = candidates.iter().collect();
        by_weight.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        Self {
            conflicts: (0..graph.num_links()).map(|l| graph.conflicts(l)).collect(),
            weights,
            by_weight,
        }
    }

    fn bound(&self, cands: Schedule) -> f64 {
        let mut cliques: [Schedule; 64] = [Schedule::EMPTY; 64];
        let mut used = 0;
        let mut total = 0.0;
        for &v in &self.by_weight {
            if !cands.contains(v) {
                continue;
            }
            let home = cliques[..used]
                .iter()
                .position(|&c| (c & !self.conflicts[v]).is_empty());
            match home {
                Some(i) => cliques[i].insert(v),
                None => {
                    // First member is the heaviest of its clique.
                    cliques[used] = Schedule::single(v);
                    used += 1;
                    total += self.weights[v];
                }
            }
        }
        total
    }

    fn search_best(&self, cands: Schedule, current: f64, best: &mut f64) {
        if cands.is_empty() {
            if current > *best {
                *best = current;
            }
            return;
        }
        if current + self.bound(cands) <= *best {
            return;
        }
        // Heaviest candidate first tends to find good incumbents quickly.
        let v = self
            .by_weight
            .iter()
            .copied()
            .find(|&l| cands.contains(l))
            .expect("non-empty");
        let mut without = cands;
        without.remove(v);
        self.search_best(without & !self.conflicts[v], current + self.weights[v], best);
        self.search_best(without, current, best);
    }

    /// Depth-first over links in ascending id, excluding before including, so
    /// leaves are met in lexicographic order of the bit-vector.
    fn search_lex(&self, cands: Schedule, chosen: Schedule, current: f64, target: f64) -> Option<Schedule> {
        if current >= target {
            return Some(chosen);
        }
        if cands.is_empty() || current + self.bound(cands) < target {
            return None;
        }
        let v = cands.first().expect("non-empty");
        let mut without = cands;
        without.remove(v);
        if let Some(s) = self.search_lex(without, chosen, current, target) {
            return Some(s);
        }
        let mut with = chosen;
        with.insert(v);
        self.search_lex(without & !self.conflicts[v], with, current + self.weights[v], target)
    }
}

/// Optimal MaxWeight value restricted to `candidates` (weights must be >= 0).
pub fn optimum_weight(graph: &NetworkGraph, weights: &[f64], candidates: Schedule) -> f64 {
    let ctx = Ctx::new(graph, weights, candidates);
    // Greedy incumbent.
    let mut greedy = 0.0;
    let mut left = candidates;
    for &v in &ctx.by_weight {
        if left.contains(v) {
            greedy += weights[v];
            left = left & !ctx.conflicts[v];
            left.remove(v);
        }
    }
    let mut best = greedy;
    ctx.search_best(candidates, 0.0, &mut best);
    best
}

/// Lexicographically smallest feasible subset of `candidates` whose weight
/// reaches `target`.
pub(super) fn lex_first_reaching(
    graph: &NetworkGraph,
    weights: &[f64],
    candidates: Schedule,
    target: f64,
) -> Option<Schedule> {
    let ctx = Ctx::new(graph, weights, candidates);
    ctx.search_lex(candidates, Schedule::EMPTY, 0.0, target)
}
