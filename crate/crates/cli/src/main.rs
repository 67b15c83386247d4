use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ampf_core::classifier::TrainParams;
use ampf_core::experiment::config::{parse_mode, ExperimentConfig};
use ampf_core::experiment::profiles::{default_profiles, generate_traces};
use ampf_core::experiment::scenarios::Scenario;
use ampf_core::experiment::{
    load_traces, read_file, run_experiment, train_and_report, write_file, ExperimentError,
};
use ampf_core::trace::write_traces;

#[derive(Debug, Parser)]
#[command(name = "ampf", version, about = "Application-aware multipath forwarding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a classifier and report held-out accuracy.
    Train {
        /// Labeled training traces; generated when absent.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Labeled test traces; generated when absent.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Flows generated for a missing training file.
        #[arg(long, default_value_t = 500)]
        train_flows: usize,
        /// Flows generated for a missing test file.
        #[arg(long, default_value_t = 100)]
        test_flows: usize,
        /// Seed for generated traces; the test set uses seed + 1.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = TrainParams::default().min_leaf_size)]
        min_leaf: usize,
        #[arg(long, default_value_t = TrainParams::default().max_depth)]
        max_depth: usize,
        /// Write the trained tree here.
        #[arg(long)]
        save_tree: Option<PathBuf>,
    },
    /// Generate labeled synthetic traces.
    GenTraces {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Packets observed per flow.
        #[arg(long, default_value_t = 50)]
        packets: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write metrics.csv, events.log and summary.txt.
    Run {
        /// udp-jitter, tcp-throughput, mixed-throughput, mixed-jitter,
        /// late-flow or epoch-recheck.
        scenario: String,
        #[arg(long, default_value = "aware")]
        mode: String,
        #[arg(long)]
        seed: u64,
        /// Topology file; the bundled replica topology when absent.
        #[arg(long)]
        topo: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Saved tree; one is trained on generated traces when absent.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// key = value settings file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra setting, applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Run N consecutive seeds from --seed, each into OUT/seed-<s>.
        #[arg(long, default_value_t = 1)]
        repeat: u64,
    },
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let kind = match &e {
            ExperimentError::Io { .. } => "io",
            ExperimentError::Parse { .. } => "parse",
            ExperimentError::Classifier(_) => "classifier",
            ExperimentError::Topology(_) => "topology",
            ExperimentError::Scenario(_) => "usage",
            ExperimentError::Sim(_) => "simulation",
            ExperimentError::Controller(_) => "config",
        };
        CliError::new(kind, e.to_string())
    }
}

fn traces_or_generate(
    path: Option<&Path>,
    n: usize,
    seed: u64,
) -> Result<Vec<ampf_core::LabeledExample>, CliError> {
    match path {
        Some(p) => Ok(load_traces(p)?),
        None => Ok(generate_traces(&default_profiles(), n, 50, seed)),
    }
}

fn cmd_train(
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    train_flows: usize,
    test_flows: usize,
    seed: u64,
    params: TrainParams,
    save_tree: Option<PathBuf>,
) -> Result<(), CliError> {
    let train = traces_or_generate(train.as_deref(), train_flows, seed)?;
    let test = traces_or_generate(test.as_deref(), test_flows, seed.wrapping_add(1))?;
    let start = std::time::Instant::now();
    let report = train_and_report(&train, &test, &params).map_err(ExperimentError::from)?;
    print!("{}", report.render());
    println!("train_seconds={:.3}", start.elapsed().as_secs_f64());
    if let Some(path) = save_tree {
        write_file(&path, &report.tree.to_text())?;
    }
    Ok(())
}

fn cmd_gen_traces(n: usize, seed: u64, packets: usize, out: Option<PathBuf>) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::new("usage", "--n must be at least 1"));
    }
    let text = write_traces(&generate_traces(&default_profiles(), n, packets, seed));
    match out {
        Some(p) => write_file(&p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario: String,
    mode: String,
    seed: u64,
    topo: Option<PathBuf>,
    out: PathBuf,
    tree: Option<PathBuf>,
    config: Option<PathBuf>,
    sets: Vec<String>,
    repeat: u64,
) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &config {
        let text = read_file(path)?;
        cfg.apply_text(&text).map_err(|e| {
            CliError::new("parse", format!("{}: {e}", path.display()))
        })?;
    }
    for s in &sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::new("usage", format!("--set expects KEY=VALUE, got `{s}`")))?;
        cfg.set(k, v).map_err(|m| CliError::new("config", m))?;
    }
    cfg.scenario = scenario
        .parse::<Scenario>()
        .map_err(|m| CliError::new("usage", m))?;
    cfg.mode = parse_mode(&mode).map_err(|m| CliError::new("usage", m))?;
    if topo.is_some() {
        cfg.topology = topo;
    }
    if tree.is_some() {
        cfg.tree = tree;
    }
    if repeat == 0 {
        return Err(CliError::new("usage", "--repeat must be at least 1"));
    }
    let runs: Vec<(u64, PathBuf)> = (0..repeat)
        .map(|i| {
            let s = seed.wrapping_add(i);
            let dir = if repeat == 1 {
                out.clone()
            } else {
                out.join(format!("seed-{s}"))
            };
            (s, dir)
        })
        .collect();
    let results: Vec<Result<String, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(s, dir)| {
                let mut run_cfg = cfg.clone();
                run_cfg.seed = *s;
                run_cfg.out = Some(dir.clone());
                scope.spawn(move || -> Result<String, CliError> {
                    let report = run_experiment(&run_cfg)?;
                    report.write_to(dir)?;
                    Ok(format!(
                        "ok scenario={} mode={} seed={} out={} events={} violations={}",
                        report.scenario,
                        mode_label(&run_cfg),
                        report.seed,
                        dir.display(),
                        report.sim.events_processed,
                        report.sim.violations
                    ))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(CliError::new("internal", "worker panicked")))
            })
            .collect()
    });
    let mut first_err = None;
    for r in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn mode_label(cfg: &ExperimentConfig) -> &'static str {
    ampf_core::experiment::config::mode_name(cfg.mode)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            train,
            test,
            train_flows,
            test_flows,
            seed,
            min_leaf,
            max_depth,
            save_tree,
        } => {
            let params = TrainParams {
                min_leaf_size: min_leaf,
                max_depth,
                ..TrainParams::default()
            };
            cmd_train(train, test, train_flows, test_flows, seed, params, save_tree)
        }
        Command::GenTraces {
            n,
            seed,
            packets,
            out,
        } => cmd_gen_traces(n, seed, packets, out),
        Command::Run {
            scenario,
            mode,
            seed,
            topo,
            out,
            tree,
            config,
            sets,
            repeat,
        } => cmd_run(scenario, mode, seed, topo, out, tree, config, sets, repeat),
    }
}

fn report(err: &CliError) {
    eprintln!("error kind={} message={:?}", err.kind, err.message);
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            report(&CliError::new("usage", first));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::FAILURE
        }
    }
}
