//! Structured controller event log, one event per line:
//! `time,kind,flow,class,path,reason`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::ParseError;
use crate::flow::{ClassLabel, FlowKey};
use crate::time::SimTime;
use crate::topology::{NodeId, Topology};

pub const LOG_HEADER: &str = "time,kind,flow,class,path,reason";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogKind {
    Provisional,
    Classified,
    Assigned,
    Fallback,
    Random,
    Keep,
    Reroute,
    Expired,
    Unreachable,
    Detour,
    Pinned,
    Finished,
}

impl LogKind {
    pub const ALL: [LogKind; 12] = [
        LogKind::Provisional,
        LogKind::Classified,
        LogKind::Assigned,
        LogKind::Fallback,
        LogKind::Random,
        LogKind::Keep,
        LogKind::Reroute,
        LogKind::Expired,
        LogKind::Unreachable,
        LogKind::Detour,
        LogKind::Pinned,
        LogKind::Finished,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::Provisional => "provisional",
            LogKind::Classified => "classified",
            LogKind::Assigned => "assigned",
            LogKind::Fallback => "fallback",
            LogKind::Random => "random",
            LogKind::Keep => "keep",
            LogKind::Reroute => "reroute",
            LogKind::Expired => "expired",
            LogKind::Unreachable => "unreachable",
            LogKind::Detour => "detour",
            LogKind::Pinned => "pinned",
            LogKind::Finished => "finished",
        }
    }
}

impl fmt::Display for LogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        LogKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEvent {
    pub time: SimTime,
    pub kind: LogKind,
    pub key: FlowKey,
    pub class: Option<ClassLabel>,
    pub path: Option<Vec<NodeId>>,
    pub reason: String,
}

impl LogEvent {
    pub fn render(&self, topo: &Topology) -> String {
        let mut line = String::new();
        let _ = write!(
            line,
            "{},{},{}>{}#{},",
            self.time,
            self.kind,
            topo.name(self.key.src),
            topo.name(self.key.dst),
            self.key.flow_id.0
        );
        match self.class {
            Some(c) => {
                let _ = write!(line, "{c},");
            }
            None => line.push_str("-,"),
        }
        match &self.path {
            Some(nodes) if !nodes.is_empty() => {
                let names: Vec<&str> = nodes.iter().map(|n| topo.name(*n)).collect();
                line.push_str(&names.join(":"));
            }
            _ => line.push('-'),
        }
        line.push(',');
        line.push_str(&self.reason.replace(['\n', '\r'], " "));
        line
    }
}

pub fn render_log(events: &[LogEvent], topo: &Topology) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&e.render(topo));
        out.push('\n');
    }
    out
}

/// A log line read back from text.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub kind: LogKind,
    pub flow: String,
    pub class: Option<ClassLabel>,
    pub path: Vec<String>,
    pub reason: String,
}

impl LogRecord {
    pub fn parse_line(line: &str, line_no: usize) -> Result<LogRecord, ParseError> {
        let err = |m: &str| ParseError::new(line_no, m.to_string());
        let mut parts = line.splitn(6, ',');
        let mut next = |what: &str| parts.next().ok_or_else(|| err(&format!("missing {what}")));
        let time: f64 = next("time")?
            .parse()
            .map_err(|_| err("invalid time"))?;
        if !time.is_finite() || time < 0.0 {
            return Err(err("time must be finite and non-negative"));
        }
        let kind: LogKind = next("kind")?.parse().map_err(|_| err("unknown event kind"))?;
        let flow = next("flow")?.to_string();
        if flow.is_empty() {
            return Err(err("empty flow key"));
        }
        let class = match next("class")? {
            "-" => None,
            c => Some(
                c.parse::<u8>()
                    .ok()
                    .and_then(ClassLabel::new)
                    .ok_or_else(|| err("invalid class"))?,
            ),
        };
        let path = match next("path")? {
            "-" => Vec::new(),
            p => p.split(':').map(str::to_string).collect(),
        };
        let reason = next("reason")?.to_string();
        Ok(LogRecord {
            time,
            kind,
            flow,
            class,
            path,
            reason,
        })
    }
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LOG_HEADER => {}
        _ => return Err(ParseError::new(1, format!("expected header `{LOG_HEADER}`"))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LogRecord::parse_line(l, i + 1))
        .collect()
}
