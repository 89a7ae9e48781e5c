//! Exact membership in the optimal throughput region and boundary search.
//!
//! A rate vector is supportable when some convex combination `x` of maximal
//! schedules serves every link's load: `sum_M x_M c_l M_l >= rho_l`. We solve
//! `max theta` subject to `theta * rho_l <= sum_M x_M c_l M_l` and
//! `sum_M x_M <= 1` in exact rational arithmetic, over the links that carry
//! traffic.

use std::fmt;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::lp::{int, maximize, rational, to_f64, LpOutcome, Rational};
use crate::schedule::{
    enumerate_maximal_schedules_within, Schedule, ScheduleError, DEFAULT_ENUMERATION_LIMIT,
};
use crate::topology::{FlowSet, LinkId, NetworkGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("expected {expected} rates, got {got}")]
    RateCount { expected: usize, got: usize },
    #[error("rates must be finite and >= 0")]
    BadRate,
    #[error("direction puts no load on any link")]
    DegenerateDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    StrictlyInside,
    Boundary,
    Outside,
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Membership::StrictlyInside => "strictly inside",
            Membership::Boundary => "boundary",
            Membership::Outside => "outside",
        })
    }
}

/// Largest uniform scaling of the rates that stays supportable.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta {
    Unbounded,
    Finite(Rational),
}

impl Theta {
    pub fn to_f64(&self) -> f64 {
        match self {
            Theta::Unbounded => f64::INFINITY,
            Theta::Finite(r) => to_f64(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipResult {
    pub status: Membership,
    pub theta: Theta,
    /// Per-link `rho_l`.
    pub loads: Vec<f64>,
    /// Loaded links whose service constraint is tight at the optimum.
    pub binding_links: Vec<LinkId>,
    /// Whether the time-sharing budget `sum x <= 1` is tight.
    pub budget_binding: bool,
    /// Schedules with positive weight in the optimal combination.
    pub support: Vec<(Schedule, Rational)>,
}

/// `rho_l = sum_s sum_k H^s_{l,k} lambda_s` for each link.
pub fn offered_loads(flows: &FlowSet, rates: &[f64]) -> Result<Vec<f64>, CapacityError> {
    if rates.len() != flows.len() {
        return Err(CapacityError::RateCount {
            expected: flows.len(),
            got: rates.len(),
        });
    }
    if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CapacityError::BadRate);
    }
    Ok(flows.incidence().offered_load(rates))
}

/// Exact per-link loads (sums of exactly converted rates).
fn exact_loads(flows: &FlowSet, rates: &[f64]) -> Vec<Rational> {
    let r: Vec<Rational> = rates.iter().map(|&x| rational(x)).collect();
    (0..flows.incidence().num_links())
        .map(|l| {
            flows
                .incidence()
                .on_link(l)
                .iter()
                .fold(Rational::zero(), |acc, &(s, _)| acc + &r[s])
        })
        .collect()
}

struct Columns {
    loaded: Vec<LinkId>,
    schedules: Vec<Schedule>,
}

fn columns(graph: &NetworkGraph, loads: &[Rational]) -> Result<Columns, CapacityError> {
    let loaded: Vec<LinkId> = (0..loads.len()).filter(|&l| loads[l].is_positive()).collect();
    let subset = Schedule::from_links(loaded.iter().copied());
    let set = enumerate_maximal_schedules_within(graph, subset, DEFAULT_ENUMERATION_LIMIT)?;
    Ok(Columns {
        loaded,
        schedules: set.schedules().to_vec(),
    })
}

pub fn region_membership(
    graph: &NetworkGraph,
    flows: &FlowSet,
    rates: &[f64],
) -> Result<MembershipResult, CapacityError> {
    let loads_f = offered_loads(flows, rates)?;
    let loads = exact_loads(flows, rates);
    let cols = columns(graph, &loads)?;
    if cols.loaded.is_empty() {
        return Ok(MembershipResult {
            status: Membership::StrictlyInside,
            theta: Theta::Unbounded,
            loads: loads_f,
            binding_links: Vec::new(),
            budget_binding: false,
            support: Vec::new(),
        });
    }
    // Variables: theta, then one weight per schedule.
    let nv = 1 + cols.schedules.len();
    let mut c = vec![Rational::zero(); nv];
    c[0] = Rational::one();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &l in &cols.loaded {
        let mut row = vec![Rational::zero(); nv];
        row[0] = loads[l].clone();
        for (j, m) in cols.schedules.iter().enumerate() {
            if m.contains(l) {
                row[1 + j] = -int(graph.capacity(l) as i64);
            }
        }
        a.push(row);
        b.push(Rational::zero());
    }
    let mut budget = vec![Rational::one(); nv];
    budget[0] = Rational::zero();
    a.push(budget);
    b.push(Rational::one());

    let LpOutcome::Optimal(sol) = maximize(&c, &a, &b) else {
        unreachable!("theta is bounded once some link carries load")
    };
    let theta = sol.value.clone();
    let one = Rational::one();
    let status = if theta > one {
        Membership::StrictlyInside
    } else if theta == one {
        Membership::Boundary
    } else {
        Membership::Outside
    };
    let nl = cols.loaded.len();
    Ok(MembershipResult {
        status,
        theta: Theta::Finite(theta),
        loads: loads_f,
        binding_links: cols
            .loaded
            .iter()
            .zip(&sol.slacks[..nl])
            .filter(|(_, s)| s.is_zero())
            .map(|(&l, _)| l)
            .collect(),
        budget_binding: sol.slacks[nl].is_zero(),
        support: cols
            .schedules
            .iter()
            .zip(&sol.x[1..])
            .filter(|(_, x)| x.is_positive())
            .map(|(&m, x)| (m, x.clone()))
            .collect(),
    })
}

/// `sup { t : t * direction is supportable }`.
pub fn boundary_search(
    graph: &NetworkGraph,
    flows: &FlowSet,
    direction: &[f64],
) -> Result<f64, CapacityError> {
    let r = region_membership(graph, flows, direction)?;
    match r.theta {
        Theta::Unbounded => Err(CapacityError::DegenerateDirection),
        Theta::Finite(t) => Ok(to_f64(&t)),
    }
}

/// Value of `max rho.y` subject to `sum_{l in M} c_l y_l <= 1` for every
/// maximal schedule, `y >= 0`. The load is supportable iff this is `<= 1`.
pub fn dual_value(
    graph: &NetworkGraph,
    flows: &FlowSet,
    rates: &[f64],
) -> Result<Rational, CapacityError> {
    offered_loads(flows, rates)?;
    let loads = exact_loads(flows, rates);
    let cols = columns(graph, &loads)?;
    if cols.loaded.is_empty() {
        return Ok(Rational::zero());
    }
    let c: Vec<Rational> = cols.loaded.iter().map(|&l| loads[l].clone()).collect();
    let a: Vec<Vec<Rational>> = cols
        .schedules
        .iter()
        .map(|m| {
            cols.loaded
                .iter()
                .map(|&l| {
                    if m.contains(l) {
                        int(graph.capacity(l) as i64)
                    } else {
                        Rational::zero()
                    }
                })
                .collect()
        })
        .collect();
    let b = vec![Rational::one(); a.len()];
    match maximize(&c, &a, &b) {
        LpOutcome::Optimal(s) => Ok(s.value),
        // Every loaded link sits in some maximal schedule, so y is bounded.
        LpOutcome::Unbounded => unreachable!("dual is bounded"),
    }
}

pub fn is_supportable(graph: &NetworkGraph, flows: &FlowSet, rates: &[f64]) -> Result<bool, CapacityError> {
    Ok(dual_value(graph, flows, rates)? <= Rational::one())
}

/// Boundary by bisection on [`is_supportable`], to absolute tolerance `tol`.
pub fn bisect_boundary(
    graph: &NetworkGraph,
    flows: &FlowSet,
    direction: &[f64],
    tol: f64,
) -> Result<f64, CapacityError> {
    if offered_loads(flows, direction)?.iter().all(|&r| r == 0.0) {
        return Err(CapacityError::DegenerateDirection);
    }
    let scaled = |t: f64| -> Vec<f64> { direction.iter().map(|d| d * t).collect() };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while is_supportable(graph, flows, &scaled(hi))? {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if is_supportable(graph, flows, &scaled(mid))? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
