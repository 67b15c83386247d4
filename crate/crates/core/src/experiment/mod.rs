//! Experiment harness: trace generation, classifier training and scenario
//! runs with their reports.

pub mod config;
pub mod profiles;
pub mod scenarios;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classifier::{ClassifierError, DecisionTree, LabeledExample, TrainParams};
use crate::controller::{Controller, ControllerError, Mode};
use crate::error::ParseError;
use crate::flow::{ClassLabel, Transport};
use crate::sim::metrics::write_metrics_csv;
use crate::sim::{self, SimError, SimReport};
use crate::time::SimTime;
use crate::topology::{Topology, TopologyError};

use self::config::{mode_name, ExperimentConfig};
use self::profiles::{default_profiles, generate_traces};
use self::scenarios::{build_traffic, replica_topology, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

pub fn read_file(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parsed<T>(path: &Path, r: Result<T, ParseError>) -> Result<T, ExperimentError> {
    r.map_err(|source| ExperimentError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_topology(path: &Path) -> Result<Topology, ExperimentError> {
    let text = read_file(path)?;
    parsed(path, Topology::parse(&text))
}

pub fn load_traces(path: &Path) -> Result<Vec<LabeledExample>, ExperimentError> {
    let text = read_file(path)?;
    parsed(path, crate::trace::parse_traces(&text))
}

pub fn load_tree(path: &Path) -> Result<DecisionTree, ExperimentError> {
    let text = read_file(path)?;
    parsed(path, DecisionTree::parse(&text))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub tree: DecisionTree,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    /// `confusion[actual][predicted]`, zero-based class indices.
    pub confusion: [[u32; ClassLabel::COUNT]; ClassLabel::COUNT],
}

impl TrainReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "train_flows={}", self.train_size);
        let _ = writeln!(out, "test_flows={}", self.test_size);
        let _ = writeln!(out, "accuracy={:.4}", self.accuracy);
        let _ = writeln!(out, "tree_depth={}", self.tree.depth());
        let _ = writeln!(out, "tree_leaves={}", self.tree.leaf_count());
        let _ = writeln!(out, "confusion (rows actual, columns predicted)");
        let _ = writeln!(out, "actual,p1,p2,p3,p4");
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{},{}", i + 1, cells.join(","));
        }
        out
    }
}

pub fn train_and_report(
    train: &[LabeledExample],
    test: &[LabeledExample],
    params: &TrainParams,
) -> Result<TrainReport, ClassifierError> {
    let tree = DecisionTree::train(train, params)?;
    let accuracy = tree.evaluate(test)?;
    let confusion = tree.confusion(test);
    Ok(TrainReport {
        tree,
        train_size: train.len(),
        test_size: test.len(),
        accuracy,
        confusion,
    })
}

/// The tree used when a run is not given one: trained on generated traces
/// with the default profiles.
pub fn default_tree(train_flows: usize, n_observe: u64, seed: u64) -> Result<DecisionTree, ClassifierError> {
    let traces = generate_traces(&default_profiles(), train_flows, n_observe as usize, seed);
    DecisionTree::train(&traces, &TrainParams::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub class: ClassLabel,
    pub tcp_flows: usize,
    /// Mean long-run throughput of the class's TCP flows, bits/second.
    pub tcp_throughput: Option<f64>,
    pub udp_flows: usize,
    /// Mean run jitter of the class's UDP flows, seconds.
    pub udp_jitter: Option<f64>,
    pub mean_delay: Option<f64>,
    pub loss_frac: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub mode: Mode,
    pub seed: u64,
    pub sim: SimReport,
    pub classes: Vec<ClassSummary>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(sim: &SimReport) -> Vec<ClassSummary> {
    ClassLabel::all()
        .map(|class| {
            let flows: Vec<_> = sim
                .flows
                .iter()
                .filter(|f| !f.background && f.class == class)
                .collect();
            let tcp: Vec<f64> = flows
                .iter()
                .filter(|f| f.transport == Transport::Tcp)
                .map(|f| f.throughput_bps)
                .collect();
            let udp = flows.iter().filter(|f| f.transport == Transport::Udp).count();
            let jitter: Vec<f64> = flows
                .iter()
                .filter(|f| f.transport == Transport::Udp)
                .filter_map(|f| f.mean_jitter)
                .collect();
            let delays: Vec<f64> = flows.iter().filter_map(|f| f.mean_delay).collect();
            let dropped: u64 = flows.iter().map(|f| f.dropped).sum();
            let delivered: u64 = flows.iter().map(|f| f.delivered).sum();
            ClassSummary {
                class,
                tcp_flows: tcp.len(),
                tcp_throughput: mean(&tcp),
                udp_flows: udp,
                udp_jitter: mean(&jitter),
                mean_delay: mean(&delays),
                loss_frac: if dropped + delivered == 0 {
                    0.0
                } else {
                    dropped as f64 / (dropped + delivered) as f64
                },
            }
        })
        .collect()
}

fn opt(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(x) => format!("{x:.precision$}"),
        None => "NA".into(),
    }
}

impl ExperimentReport {
    pub fn class(&self, label: u8) -> &ClassSummary {
        &self.classes[(label - 1) as usize]
    }

    pub fn metrics_csv(&self) -> String {
        write_metrics_csv(&self.sim.rows)
    }

    pub fn summary_text(&self) -> String {
        let s = &self.sim;
        let t = &s.totals;
        let c = &s.controller;
        let mut out = String::new();
        let _ = writeln!(out, "scenario={}", self.scenario);
        let _ = writeln!(out, "mode={}", mode_name(self.mode));
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "events={}", s.events_processed);
        let _ = writeln!(
            out,
            "sent={} delivered={} dropped_queue={} forwarding_losses={} in_flight_end={} reordered={}",
            t.sent,
            t.delivered,
            t.dropped_queue,
            t.forwarding_losses(),
            t.in_flight_end,
            t.reordered
        );
        let _ = writeln!(
            out,
            "packet_ins={} classifications={} keeps={} reroutes={} fallbacks={} detours={} unreachable={}",
            c.packet_ins, c.classifications, c.keeps, c.reroutes, c.fallbacks, c.detours, c.unreachable
        );
        let _ = writeln!(out, "violations={}", s.violations);
        out.push('\n');
        let _ = writeln!(out, "class,tcp_flows,tcp_throughput_bps,udp_flows,udp_jitter_s,delay_s,loss_frac");
        for cs in &self.classes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6}",
                cs.class,
                cs.tcp_flows,
                opt(cs.tcp_throughput, 0),
                cs.udp_flows,
                opt(cs.udp_jitter, 9),
                opt(cs.mean_delay, 6),
                cs.loss_frac
            );
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "flow_id,class,predicted,transport,background,start_s,sent,delivered,dropped,throughput_bps,jitter_s,delay_s,loss_frac"
        );
        for f in &s.flows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3},{},{},{},{:.0},{},{},{:.6}",
                f.flow_id.0,
                f.class,
                f.predicted.map_or("NA".to_string(), |p| p.to_string()),
                match f.transport {
                    Transport::Tcp => "tcp",
                    Transport::Udp => "udp",
                },
                f.background,
                f.start,
                f.sent,
                f.delivered,
                f.dropped,
                f.throughput_bps,
                opt(f.mean_jitter, 9),
                opt(f.mean_delay, 6),
                f.loss_frac
            );
        }
        out
    }

    /// Writes `metrics.csv`, `events.log` and `summary.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_file(&dir.join("metrics.csv"), &self.metrics_csv())?;
        write_file(&dir.join("events.log"), &self.sim.event_log)?;
        write_file(&dir.join("summary.txt"), &self.summary_text())?;
        Ok(())
    }
}

/// Runs the configured scenario, loading the topology and tree from the
/// paths in `cfg` when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let topology = match &cfg.topology {
        Some(p) => load_topology(p)?,
        None => replica_topology(),
    };
    let tree = match (&cfg.tree, cfg.mode) {
        (_, Mode::Unaware) => None,
        (Some(p), Mode::Aware) => Some(load_tree(p)?),
        (None, Mode::Aware) => Some(default_tree(cfg.train_flows, cfg.policy.n_observe, cfg.trace_seed)?),
    };
    run_with(cfg, topology, tree)
}

pub fn run_with(
    cfg: &ExperimentConfig,
    topology: Topology,
    tree: Option<DecisionTree>,
) -> Result<ExperimentReport, ExperimentError> {
    let a = topology.node_by_name(&cfg.src_host)?;
    let b = topology.node_by_name(&cfg.dst_host)?;
    let mut params = cfg.params.clone();
    params.duration = cfg.sim.duration;
    let traffic = build_traffic(cfg.scenario, &topology, a, b, &params, cfg.seed)?;
    let controller = Controller::new(
        topology,
        cfg.policy.clone(),
        cfg.mode,
        tree,
        SimTime::from_secs(cfg.control_latency),
        cfg.seed,
    )?;
    let report = sim::run(controller, &traffic, &cfg.sim, cfg.control_latency, cfg.seed)?;
    Ok(ExperimentReport {
        scenario: cfg.scenario,
        mode: cfg.mode,
        seed: cfg.seed,
        classes: summarize(&report),
        sim: report,
    })
}
