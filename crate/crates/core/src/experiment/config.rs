//! Experiment configuration in a flat `key = value` text format. Blank lines
//! and `#` comments are ignored; unknown keys are errors.

use std::path::PathBuf;

use crate::controller::{Mode, PolicyConfig};
use crate::error::ParseError;
use crate::flow::ClassLabel;
use crate::sim::SimConfig;

use super::scenarios::{Scenario, ScenarioParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub mode: Mode,
    pub seed: u64,
    /// `None` runs on the bundled replica topology.
    pub topology: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub src_host: String,
    pub dst_host: String,
    /// A saved tree; when absent one is trained on generated traces.
    pub tree: Option<PathBuf>,
    pub train_flows: usize,
    pub trace_seed: u64,
    pub policy: PolicyConfig,
    pub sim: SimConfig,
    /// Controller-to-switch one-way latency, seconds.
    pub control_latency: f64,
    pub params: ScenarioParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::UdpJitter,
            mode: Mode::Aware,
            seed: 0,
            topology: None,
            out: None,
            src_host: "h1".into(),
            dst_host: "h2".into(),
            tree: None,
            train_flows: 500,
            trace_seed: 1,
            policy: PolicyConfig::default(),
            sim: SimConfig::default(),
            control_latency: 0.001,
            params: ScenarioParams::default(),
        }
    }
}

pub fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "aware" => Ok(Mode::Aware),
        "unaware" => Ok(Mode::Unaware),
        _ => Err(format!("mode must be `aware` or `unaware`, got `{s}`")),
    }
}

pub fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Aware => "aware",
        Mode::Unaware => "unaware",
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("invalid number `{v}`"))
}

fn positive(v: &str) -> Result<f64, String> {
    let x: f64 = num(v)?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got `{v}`"))
    }
}

fn non_negative(v: &str) -> Result<f64, String> {
    let x: f64 = num(v)?;
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a non-negative number, got `{v}`"))
    }
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn list<T>(v: &str, item: fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| item(s.trim())).collect()
}

/// `class3_min_bw` -> (3, "min_bw")
fn class_key(key: &str) -> Option<(ClassLabel, &str)> {
    let rest = key.strip_prefix("class")?;
    let (digit, field) = rest.split_once('_')?;
    let label = ClassLabel::new(digit.parse().ok()?)?;
    Some((label, field))
}

impl ExperimentConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "scenario" => self.scenario = v.parse()?,
            "mode" => self.mode = parse_mode(v)?,
            "seed" => self.seed = num(v)?,
            "topology" => self.topology = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "src_host" => self.src_host = v.to_string(),
            "dst_host" => self.dst_host = v.to_string(),
            "tree" => self.tree = Some(PathBuf::from(v)),
            "train_flows" => self.train_flows = num(v)?,
            "trace_seed" => self.trace_seed = num(v)?,
            "n_observe" => self.policy.n_observe = num(v)?,
            "k" => self.policy.k = num(v)?,
            "hard_timeout" => self.policy.hard_timeout = positive(v)?,
            "epoch_check_offset" => self.policy.epoch_check_offset = non_negative(v)?,
            "lambda_a" => self.policy.lambda_a = non_negative(v)?,
            "lambda_b" => self.policy.lambda_b = non_negative(v)?,
            "refresh_epoch" => self.policy.refresh_epoch = positive(v)?,
            "duration" => {
                let d = positive(v)?;
                self.sim.duration = d;
                self.params.duration = d;
            }
            "interval" => self.sim.interval = positive(v)?,
            "queue_limit" => self.sim.queue_limit = num(v)?,
            "control_latency" => self.control_latency = positive(v)?,
            "buffer_on_miss" => self.sim.buffer_on_miss = boolean(v)?,
            "check_invariants" => self.sim.check_invariants = boolean(v)?,
            "max_hops" => self.sim.max_hops = num(v)?,
            "background_rates" => self.params.background_rates = list(v, positive)?,
            "background_packet" => self.params.background_packet = num(v)?,
            "background_dither" => self.params.background_dither = non_negative(v)?,
            "udp_rate" => self.params.udp_rate = positive(v)?,
            "class_packet_sizes" => {
                let sizes = list(v, num::<u32>)?;
                self.params.class_packet_sizes = sizes
                    .try_into()
                    .map_err(|_| "class_packet_sizes needs exactly 4 values".to_string())?;
            }
            "start_window" => {
                let w = list(v, non_negative)?;
                match w.as_slice() {
                    [lo, hi] if lo <= hi => self.params.start_window = (*lo, *hi),
                    _ => return Err("start_window needs `lo,hi` with lo <= hi".into()),
                }
            }
            "late_start" => self.params.late_start = non_negative(v)?,
            "cross_rate" => self.params.cross_rate = positive(v)?,
            "cross_start" => self.params.cross_start = non_negative(v)?,
            "tcp_window" => {
                self.params.tcp_window = match v {
                    "none" => None,
                    _ => Some(num(v)?),
                }
            }
            other => {
                let Some((label, field)) = class_key(other) else {
                    return Err(format!("unknown key `{other}`"));
                };
                let mut class = *self.policy.classes.get(label);
                match field {
                    "min_bw" => class.min_bw = non_negative(v)?,
                    "delay" => {
                        class.acceptable_delay = match v {
                            "none" => None,
                            _ => Some(positive(v)?),
                        }
                    }
                    _ => return Err(format!("unknown key `{other}`")),
                }
                self.policy.classes.set(class);
            }
        }
        Ok(())
    }

    /// Reads settings on top of the defaults.
    pub fn parse(text: &str) -> Result<ExperimentConfig, ParseError> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ParseError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ParseError::new(idx + 1, "expected `key = value`"))?;
            self.set(k, v).map_err(|m| ParseError::new(idx + 1, m))?;
        }
        Ok(())
    }
}
