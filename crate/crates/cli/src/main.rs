use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hopsched_core::capacity::{boundary_search, region_membership, Theta};
use hopsched_core::queueing::QueueKey;
use hopsched_core::rank::{
    analyse, assign_ranks, decompose_components, enumerate_flow_paths_with_limit, find_flow_loops,
    ComponentReport, DEFAULT_PATH_LIMIT,
};
use hopsched_core::scenario::load_scenario;
use hopsched_core::schedule::{enumerate_maximal_schedules, max_weight_schedule, Schedule};
use hopsched_core::schedulers::SchedulerKind;
use hopsched_core::sim::{Scenario, SlotView, Simulation};
use hopsched_core::sweep::{csv_fields, load_sweep, run_sweep, run_sweep_rows, write_csv, SweepCell, SweepSpec};

#[derive(Parser)]
#[command(name = "hopsched", version, about = "Multi-hop wireless link-scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `builtin:NAME`
    scenario: String,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and print a summary row
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheduler: Option<SchedulerKind>,
        /// Set every flow's arrival rate
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Backlog sampling stride in slots
        #[arg(long)]
        stride: Option<u64>,
        /// Write queue and shadow lengths every `stride` slots to this CSV file
        #[arg(long)]
        queue_dump: Option<PathBuf>,
    },
    /// Run a sweep file and write one CSV row per cell
    Sweep {
        sweep: PathBuf,
        /// Output file (default: stdout)
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Capacity-region membership of the scenario's rates and the uniform-rate boundary
    Capacity {
        #[command(flatten)]
        common: Common,
    },
    /// Flow-loop detection and rank assignment per component
    Ranks {
        #[command(flatten)]
        common: Common,
        /// Path order for a single flow-tree, 1-based (e.g. 3,1,2); see --paths
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<usize>>,
        /// List the flow-paths instead of the rank table
        #[arg(long)]
        paths: bool,
        #[arg(long, default_value_t = DEFAULT_PATH_LIMIT)]
        path_limit: usize,
    },
    /// List maximal schedules, or the max-weight schedule for given link weights
    Schedules {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Check a scenario file
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

/// Exit code 1: bad input; 2: failure while running.
enum Failure {
    Invalid(String),
    Runtime(String),
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    // Usage errors count as invalid input (clap would exit with 2).
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let Format::Csv = common.format;
    load_scenario(&common.scenario).map_err(invalid)
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cmd {
        Command::Run {
            common,
            scheduler,
            lambda,
            epsilon,
            horizon,
            seed,
            stride,
            queue_dump,
        } => {
            let mut s = load(&common)?;
            if let Some(l) = lambda {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(invalid(format!("--lambda must be finite and >= 0, got {l}")));
                }
                s = s.with_rate(l);
            }
            if let Some(k) = scheduler {
                s.config.scheduler = k;
            }
            if let Some(e) = epsilon {
                s.config.epsilon = e;
            }
            if let Some(h) = horizon {
                s.config.horizon = h;
            }
            if let Some(v) = seed {
                s.config.seed = v;
            }
            if let Some(v) = stride {
                s.config.stride = v;
            }
            s.validate().map_err(invalid)?;
            run_one(&s, lambda, queue_dump, &mut out)?;
        }
        Command::Sweep { sweep, output, format } => {
            let Format::Csv = format;
            let spec: SweepSpec = load_sweep(&sweep).map_err(invalid)?;
            spec.base.validate().map_err(invalid)?;
            match output {
                Some(path) => {
                    run_sweep(&spec, &path).map_err(runtime)?;
                }
                None => {
                    let rows = run_sweep_rows(&spec).map_err(runtime)?;
                    write_csv(&rows, &mut out).map_err(runtime)?;
                }
            }
        }
        Command::Capacity { common } => {
            let s = load(&common)?;
            capacity(&s, &mut out)?;
        }
        Command::Ranks {
            common,
            order,
            paths,
            path_limit,
        } => {
            let s = load(&common)?;
            ranks(&s, order, paths, path_limit, &mut out)?;
        }
        Command::Schedules { common, weights } => {
            let s = load(&common)?;
            schedules(&s, weights, &mut out)?;
        }
        Command::Validate { common } => {
            let s = load(&common)?;
            s.validate().map_err(invalid)?;
            writeln!(out, "nodes,links,flows").map_err(runtime)?;
            writeln!(out, "{},{},{}", s.graph.num_nodes(), s.graph.num_links(), s.flows.len())
                .map_err(runtime)?;
        }
    }
    out.flush().map_err(runtime)
}

fn key_name(k: QueueKey) -> String {
    match k {
        QueueKey::Link(l) => format!("l{l}"),
        QueueKey::LinkHop(l, h) => format!("l{l}/h{h}"),
        QueueKey::FlowHop(f, h) => format!("f{f}/h{h}"),
    }
}

fn run_one(s: &Scenario, lambda: Option<f64>, dump: Option<PathBuf>, out: &mut impl Write) -> Result<(), Failure> {
    let mut sim = Simulation::new(s).map_err(invalid)?;
    match dump {
        None => {
            while !sim.is_done() {
                sim.step().map_err(runtime)?;
            }
        }
        Some(path) => {
            let file = File::create(&path).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            let stride = s.config.stride;
            let mut io_err: Option<io::Error> = None;
            let emit = |w: &mut BufWriter<File>, v: &SlotView<'_>| -> io::Result<()> {
                let layout = v.data.layout();
                for q in 0..layout.num_queues() {
                    let shadow = v.shadow.map_or_else(|| "NA".to_string(), |sh| sh.value(q).to_string());
                    writeln!(w, "{},{},{},{}", v.slot, key_name(layout.key(q)), v.data.len(q), shadow)?;
                }
                Ok(())
            };
            writeln!(w, "slot,queue,length,shadow").map_err(runtime)?;
            let mut observer = |v: &SlotView<'_>| {
                if io_err.is_none() && v.slot.is_multiple_of(stride) {
                    if let Err(e) = emit(&mut w, v) {
                        io_err = Some(e);
                    }
                }
            };
            while !sim.is_done() {
                sim.step_observed(&mut observer).map_err(runtime)?;
            }
            if let Some(e) = io_err {
                return Err(runtime(format!("cannot write {}: {e}", path.display())));
            }
            w.flush().map_err(runtime)?;
        }
    }
    let trace = sim.finish();
    let cell = SweepCell {
        index: 0,
        lambda,
        epsilon: s.config.epsilon,
        scheduler: s.config.scheduler,
        base_seed: s.config.seed,
        seed: s.config.seed,
    };
    let row = hopsched_core::sweep::row_from_trace(&cell, &trace).map_err(runtime)?;
    writeln!(out, "{}", hopsched_core::sweep::CSV_HEADER.join(",")).map_err(runtime)?;
    writeln!(out, "{}", csv_fields(&row).join(",")).map_err(runtime)
}

fn capacity(s: &Scenario, out: &mut impl Write) -> Result<(), Failure> {
    let rates = s.flows.rates();
    let m = region_membership(&s.graph, &s.flows, &rates).map_err(runtime)?;
    let ones = vec![1.0; s.flows.len()];
    let uniform = boundary_search(&s.graph, &s.flows, &ones)
        .map(|b| b.to_string())
        .unwrap_or_else(|_| "NA".into());
    let (theta, exact) = match &m.theta {
        Theta::Unbounded => ("inf".to_string(), "inf".to_string()),
        Theta::Finite(t) => (m.theta.to_f64().to_string(), t.to_string()),
    };
    let binding: Vec<String> = m.binding_links.iter().map(|l| l.to_string()).collect();
    writeln!(out, "membership,theta,theta_exact,uniform_boundary,binding_links").map_err(runtime)?;
    writeln!(out, "{},{},{},{},{}", m.status, theta, exact, uniform, binding.join(" ")).map_err(runtime)
}

fn ranks(
    s: &Scenario,
    order: Option<Vec<usize>>,
    list_paths: bool,
    path_limit: usize,
    out: &mut impl Write,
) -> Result<(), Failure> {
    let reports: Vec<ComponentReport> = match order {
        None => analyse(&s.flows, path_limit).map_err(runtime)?,
        Some(order) => {
            let comps = decompose_components(&s.flows);
            if comps.len() != 1 {
                return Err(invalid(format!(
                    "--order needs a single component; this scenario has {}",
                    comps.len()
                )));
            }
            let component = comps.into_iter().next().expect("one component");
            let loops = find_flow_loops(&s.flows, &component);
            if !loops.is_empty() {
                return Err(invalid(format!("component is not a flow-tree: {}", loops[0])));
            }
            let paths = enumerate_flow_paths_with_limit(&s.flows, &component, path_limit).map_err(runtime)?;
            if order.contains(&0) {
                return Err(invalid("--order is 1-based"));
            }
            let zero_based: Vec<usize> = order.iter().map(|p| p - 1).collect();
            let assignment = assign_ranks(&paths, &zero_based).map_err(invalid)?;
            vec![ComponentReport {
                component,
                loops,
                paths,
                assignment: Some(assignment),
            }]
        }
    };
    let w = |e: io::Error| runtime(e);
    if list_paths {
        writeln!(out, "component,path,links").map_err(w)?;
        for (c, r) in reports.iter().enumerate() {
            for (i, p) in r.paths.iter().enumerate() {
                let links: Vec<String> = p.links.iter().map(|l| l.to_string()).collect();
                writeln!(out, "{c},P{},{}", i + 1, links.join(" ")).map_err(w)?;
            }
        }
        return Ok(());
    }
    let n = s.graph.num_links();
    let header: Vec<String> = (0..n).map(|l| format!("l{l}")).collect();
    writeln!(out, "component,step,path,{}", header.join(",")).map_err(w)?;
    for (c, r) in reports.iter().enumerate() {
        if let Some(lp) = r.loops.first() {
            let links: Vec<String> = lp.links.iter().map(|l| l.to_string()).collect();
            writeln!(out, "{c},loop,{}{}", links.join(" "), ",".repeat(n)).map_err(w)?;
            continue;
        }
        let a = r.assignment.as_ref().expect("flow-trees are ranked");
        for (step, snap) in a.snapshots.iter().enumerate() {
            let path = if step == 0 { String::new() } else { format!("P{}", a.order[step - 1] + 1) };
            let cells: Vec<String> = (0..n)
                .map(|l| snap.get(&l).map(|v| v.to_string()).unwrap_or_default())
                .collect();
            writeln!(out, "{c},{step},{path},{}", cells.join(",")).map_err(w)?;
        }
        let cells: Vec<String> = (0..n)
            .map(|l| a.ranking.get(l).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        writeln!(out, "{c},final,,{}", cells.join(",")).map_err(w)?;
    }
    Ok(())
}

fn links_of(s: Schedule) -> String {
    s.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
}

fn schedules(s: &Scenario, weights: Option<Vec<f64>>, out: &mut impl Write) -> Result<(), Failure> {
    let w = |e: io::Error| runtime(e);
    match weights {
        None => {
            let set = enumerate_maximal_schedules(&s.graph).map_err(runtime)?;
            writeln!(out, "index,links").map_err(w)?;
            for (i, m) in set.schedules().iter().enumerate() {
                writeln!(out, "{i},{}", links_of(*m)).map_err(w)?;
            }
        }
        Some(weights) => {
            let best = max_weight_schedule(&s.graph, &weights).map_err(invalid)?;
            writeln!(out, "weight,links").map_err(w)?;
            writeln!(out, "{},{}", best.weight, links_of(best.schedule)).map_err(w)?;
        }
    }
    Ok(())
}
