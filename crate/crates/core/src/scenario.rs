//! Scenario files (TOML).
//!
//! ```toml
//! nodes = ["a", "b", "c"]
//! interference = "node-exclusive"      # or [[0, 1], [1, 2]]
//! allow_unused_links = false
//!
//! [[links]]
//! from = "a"
//! to = "b"
//! capacity = 1                         # optional, default 1; `id` optional
//!
//! [[flows]]
//! route = [0, 1]
//! rate = 0.3
//! arrival = "poisson"                  # or "deterministic"
//!
//! [simulation]
//! scheduler = "flq-mws"
//! epsilon = 0.005
//! horizon = 1000000
//! seed = 1
//!
//! [simulation.csma]
//! window = 48
//! weight = { form = "log-affine", a = 0.1, b = 0.01, clamp = [-6.0, 6.0] }
//! ```
//!
//! Instead of `nodes`/`links`/`flows`, a file may name a built-in network
//! with `builtin = "linear10"`. A top-level `rate` sets every flow's rate.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::csma::WeightForm;
use crate::generators::{builtin, BUILTIN_NAMES};
use crate::sim::{Scenario, SimConfig};
use crate::topology::{
    build_network, validate_flows, ArrivalModel, FlowSpec, InterferenceSpec, LinkSpec,
    TopologyError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Field {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ScenarioError {
    fn field(line: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Field {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    builtin: Option<String>,
    nodes: Option<Vec<String>>,
    links: Option<Vec<Spanned<RawLink>>>,
    interference: Option<Spanned<RawInterference>>,
    flows: Option<Vec<Spanned<RawFlow>>>,
    allow_unused_links: Option<bool>,
    rate: Option<f64>,
    simulation: Option<RawSim>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawInterference {
    Token(String),
    Pairs(Vec<(usize, usize)>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    id: Option<usize>,
    from: String,
    to: String,
    capacity: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    name: Option<String>,
    route: Vec<usize>,
    rate: f64,
    arrival: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawSim {
    scheduler: Option<String>,
    epsilon: Option<f64>,
    horizon: Option<u64>,
    seed: Option<u64>,
    stride: Option<u64>,
    shadow_init: Option<f64>,
    record_deliveries: Option<bool>,
    csma: Option<RawCsma>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCsma {
    window: Option<u32>,
    weight: Option<RawWeight>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeight {
    form: Option<String>,
    a: Option<f64>,
    b: Option<f64>,
    alpha: Option<f64>,
    clamp: Option<(f64, f64)>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Applies `[simulation]` settings over `config`.
pub(crate) fn apply_sim(raw: &RawSim, config: &mut SimConfig) -> Result<(), ScenarioError> {
    let f = |name: &str, m: String| ScenarioError::field(None, format!("simulation.{name}"), m);
    if let Some(s) = &raw.scheduler {
        config.scheduler = s.parse().map_err(|m| f("scheduler", m))?;
    }
    if let Some(e) = raw.epsilon {
        if !(e.is_finite() && e >= 0.0) {
            return Err(f("epsilon", format!("must be finite and >= 0, got {e}")));
        }
        config.epsilon = e;
    }
    if let Some(h) = raw.horizon {
        if h == 0 {
            return Err(f("horizon", "must be at least 1".into()));
        }
        config.horizon = h;
    }
    if let Some(s) = raw.seed {
        config.seed = s;
    }
    if let Some(s) = raw.stride {
        if s == 0 {
            return Err(f("stride", "must be at least 1".into()));
        }
        config.stride = s;
    }
    if let Some(v) = raw.shadow_init {
        if !(v.is_finite() && v >= 0.0) {
            return Err(f("shadow_init", format!("must be finite and >= 0, got {v}")));
        }
        config.shadow_init = v;
    }
    if let Some(v) = raw.record_deliveries {
        config.record_deliveries = v;
    }
    if let Some(c) = &raw.csma {
        if let Some(w) = c.window {
            if w < 2 {
                return Err(f("csma.window", format!("must be at least 2, got {w}")));
            }
            config.csma_window = w;
        }
        if let Some(w) = &c.weight {
            let mut wf = config.csma_weight;
            let form = w.form.as_deref().unwrap_or(match wf.form {
                WeightForm::LogAffine { .. } => "log-affine",
                WeightForm::Power { .. } => "power",
            });
            wf.form = match form {
                "log-affine" => WeightForm::LogAffine {
                    a: w.a.unwrap_or(0.1),
                    b: w.b.unwrap_or(0.01),
                },
                "power" => WeightForm::Power {
                    a: w.a.unwrap_or(0.1),
                    alpha: w.alpha.unwrap_or(0.5),
                },
                other => {
                    return Err(f(
                        "csma.weight.form",
                        format!("unknown form {other:?} (expected log-affine or power)"),
                    ))
                }
            };
            if let Some((lo, hi)) = w.clamp {
                wf.min = lo;
                wf.max = hi;
            }
            wf.validate().map_err(|e| f("csma.weight", e.to_string()))?;
            config.csma_weight = wf;
        }
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut scenario = match &raw.builtin {
        Some(name) => {
            if raw.nodes.is_some() || raw.links.is_some() || raw.flows.is_some() || raw.interference.is_some() {
                return Err(ScenarioError::field(
                    None,
                    "builtin",
                    "cannot be combined with nodes, links, interference or flows",
                ));
            }
            builtin(name).ok_or_else(|| {
                ScenarioError::field(
                    None,
                    "builtin",
                    format!("unknown built-in {name:?} (known: {})", BUILTIN_NAMES.join(", ")),
                )
            })?
        }
        None => build_from_parts(text, &raw)?,
    };
    if let Some(r) = raw.rate {
        if !(r.is_finite() && r >= 0.0) {
            return Err(ScenarioError::field(None, "rate", format!("must be finite and >= 0, got {r}")));
        }
        scenario = scenario.with_rate(r);
    }
    if let Some(sim) = &raw.simulation {
        apply_sim(sim, &mut scenario.config)?;
    }
    Ok(scenario)
}

fn build_from_parts(text: &str, raw: &RawScenario) -> Result<Scenario, ScenarioError> {
    let nodes = raw
        .nodes
        .clone()
        .ok_or_else(|| ScenarioError::field(None, "nodes", "missing"))?;
    let links = raw
        .links
        .as_ref()
        .ok_or_else(|| ScenarioError::field(None, "links", "missing"))?;
    let flows = raw.flows.as_deref().unwrap_or(&[]);
    let interference = match &raw.interference {
        None => InterferenceSpec::NodeExclusive,
        Some(sp) => match sp.get_ref() {
            RawInterference::Token(t) if t == "node-exclusive" => InterferenceSpec::NodeExclusive,
            RawInterference::Token(t) => {
                return Err(ScenarioError::field(
                    Some(line_of(text, sp.span().start)),
                    "interference",
                    format!("expected \"node-exclusive\" or a list of link pairs, got {t:?}"),
                ))
            }
            RawInterference::Pairs(p) => InterferenceSpec::Pairs(p.clone()),
        },
    };
    let link_specs: Vec<LinkSpec> = links
        .iter()
        .map(|l| {
            let l = l.get_ref();
            LinkSpec {
                id: l.id,
                from: l.from.clone(),
                to: l.to.clone(),
                capacity: l.capacity.unwrap_or(1),
            }
        })
        .collect();
    let mut flow_specs = Vec::with_capacity(flows.len());
    for (i, f) in flows.iter().enumerate() {
        let rf = f.get_ref();
        let arrival = match rf.arrival.as_deref().unwrap_or("poisson") {
            "poisson" => ArrivalModel::Poisson { rate: rf.rate },
            "deterministic" => ArrivalModel::Deterministic { rate: rf.rate },
            other => {
                return Err(ScenarioError::field(
                    Some(line_of(text, f.span().start)),
                    format!("flows[{i}].arrival"),
                    format!("unknown arrival model {other:?} (expected poisson or deterministic)"),
                ))
            }
        };
        flow_specs.push(FlowSpec {
            name: rf.name.clone(),
            route: rf.route.clone(),
            arrival,
        });
    }

    // Locate topology errors in the file.
    let link_pos = |id: usize| -> usize {
        link_specs
            .iter()
            .enumerate()
            .position(|(p, s)| s.id.unwrap_or(p) == id)
            .unwrap_or(id)
    };
    let link_line = |pos: usize| links.get(pos).map(|l| line_of(text, l.span().start));
    let flow_line = |i: usize| flows.get(i).map(|f| line_of(text, f.span().start));
    let interference_line = raw.interference.as_ref().map(|s| line_of(text, s.span().start));
    let locate = |e: TopologyError| -> ScenarioError {
        let msg = e.to_string();
        match e {
            TopologyError::DuplicateNode(_) => ScenarioError::field(None, "nodes", msg),
            TopologyError::UnknownNode { link, .. }
            | TopologyError::SelfLoop(link)
            | TopologyError::ZeroCapacity(link)
            | TopologyError::DuplicateLinkId(link)
            | TopologyError::SparseLinkId { id: link, .. }
            | TopologyError::UnusedLink(link) => {
                let p = link_pos(link);
                ScenarioError::field(link_line(p), format!("links[{p}]"), msg)
            }
            TopologyError::MixedLinkIds | TopologyError::TooManyLinks(_) => {
                ScenarioError::field(None, "links", msg)
            }
            TopologyError::UnknownLinkInPair(..) | TopologyError::SelfConflict(_) => {
                ScenarioError::field(interference_line, "interference", msg)
            }
            TopologyError::EmptyRoute { flow }
            | TopologyError::UnknownLink { flow, .. }
            | TopologyError::DisconnectedRoute { flow, .. }
            | TopologyError::RouteLoop { flow, .. } => {
                ScenarioError::field(flow_line(flow), format!("flows[{flow}].route"), msg)
            }
            TopologyError::BadRate { flow, .. } => {
                ScenarioError::field(flow_line(flow), format!("flows[{flow}].rate"), msg)
            }
        }
    };
    let graph = build_network(&nodes, &link_specs, &interference).map_err(locate)?;
    let fs = validate_flows(&graph, &flow_specs, raw.allow_unused_links.unwrap_or(false)).map_err(locate)?;
    Ok(Scenario::new(graph, fs))
}

/// `builtin:NAME` or a path to a scenario file.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return builtin(name).ok_or_else(|| {
            ScenarioError::field(
                None,
                "builtin",
                format!("unknown built-in {name:?} (known: {})", BUILTIN_NAMES.join(", ")),
            )
        });
    }
    let text = read(Path::new(source))?;
    parse_scenario(&text)
}

pub(crate) fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
