//! Per-flow, per-interval measurements taken at the receiver.

use std::fmt::Write as _;

use crate::flow::{ClassLabel, FlowId};
use crate::time::SimTime;

pub const METRICS_HEADER: &str = "interval_start,flow_id,class,throughput_bps,jitter_s,loss_frac,delay_s";

/// Mean absolute difference of consecutive interarrival times. Needs at
/// least two interarrivals (three packets).
pub fn jitter_of(interarrivals: &[f64]) -> Option<f64> {
    if interarrivals.len() < 2 {
        return None;
    }
    let sum: f64 = interarrivals.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Some(sum / (interarrivals.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalAcc {
    pub delivered_bytes: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub delay_sum: f64,
    pub jitter_sum: f64,
    pub jitter_n: u64,
}

/// Streaming receiver-side accumulator for one flow.
#[derive(Debug, Clone)]
pub struct FlowMetrics {
    interval: SimTime,
    intervals: Vec<IntervalAcc>,
    last_arrival: Option<SimTime>,
    last_iat: Option<f64>,
}

impl FlowMetrics {
    pub fn new(interval: SimTime, n_intervals: usize) -> Self {
        FlowMetrics {
            interval,
            intervals: vec![IntervalAcc::default(); n_intervals],
            last_arrival: None,
            last_iat: None,
        }
    }

    fn slot(&mut self, t: SimTime) -> Option<&mut IntervalAcc> {
        let idx = (t.0 / self.interval.0.max(1)) as usize;
        self.intervals.get_mut(idx)
    }

    /// A packet sent at `sent` reached the destination host at `at`.
    /// Interarrival differences count toward the interval of the later
    /// arrival.
    pub fn delivered(&mut self, at: SimTime, sent: SimTime, bytes: u32) {
        let mut delta = None;
        if let Some(prev) = self.last_arrival {
            let iat = at.saturating_sub(prev).as_secs();
            if let Some(prev_iat) = self.last_iat {
                delta = Some((iat - prev_iat).abs());
            }
            self.last_iat = Some(iat);
        }
        self.last_arrival = Some(at);
        if let Some(acc) = self.slot(at) {
            acc.delivered += 1;
            acc.delivered_bytes += bytes as u64;
            acc.delay_sum += at.saturating_sub(sent).as_secs();
            if let Some(d) = delta {
                acc.jitter_sum += d;
                acc.jitter_n += 1;
            }
        }
    }

    pub fn dropped(&mut self, at: SimTime) {
        if let Some(acc) = self.slot(at) {
            acc.dropped += 1;
        }
    }

    pub fn intervals(&self) -> &[IntervalAcc] {
        &self.intervals
    }
}

/// One CSV row. Undefined values are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub interval_start: f64,
    pub flow_id: FlowId,
    pub class: ClassLabel,
    pub throughput_bps: f64,
    pub jitter_s: Option<f64>,
    pub loss_frac: f64,
    pub delay_s: Option<f64>,
}

impl MetricRow {
    pub fn from_acc(
        interval_start: f64,
        length: f64,
        flow_id: FlowId,
        class: ClassLabel,
        acc: &IntervalAcc,
    ) -> Self {
        let attempts = acc.delivered + acc.dropped;
        MetricRow {
            interval_start,
            flow_id,
            class,
            throughput_bps: acc.delivered_bytes as f64 * 8.0 / length,
            jitter_s: (acc.delivered >= 3 && acc.jitter_n > 0)
                .then(|| acc.jitter_sum / acc.jitter_n as f64),
            loss_frac: if attempts == 0 {
                0.0
            } else {
                acc.dropped as f64 / attempts as f64
            },
            delay_s: (acc.delivered > 0).then(|| acc.delay_sum / acc.delivered as f64),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.9}"),
        None => "NA".to_string(),
    }
}

pub fn write_metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{:.3},{},{},{:.3},{},{:.9},{}",
            r.interval_start,
            r.flow_id.0,
            r.class,
            r.throughput_bps,
            opt(r.jitter_s),
            r.loss_frac,
            opt(r.delay_s)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_examples() {
        assert_eq!(jitter_of(&[0.01, 0.01, 0.01, 0.01]), Some(0.0));
        let j = jitter_of(&[0.010, 0.012, 0.010]).unwrap();
        assert!((j - 0.002).abs() < 1e-12);
        assert_eq!(jitter_of(&[0.01]), None);
        assert_eq!(jitter_of(&[]), None);
    }

    #[test]
    fn streaming_matches_batch() {
        let arrivals_ms = [0u64, 10, 22, 32, 45, 55, 56, 70];
        let mut m = FlowMetrics::new(SimTime::from_millis(1000), 1);
        for a in arrivals_ms {
            m.delivered(SimTime::from_millis(a), SimTime::ZERO, 100);
        }
        let iats: Vec<f64> = arrivals_ms
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 / 1e3)
            .collect();
        let acc = m.intervals()[0];
        let row = MetricRow::from_acc(0.0, 1.0, FlowId(1), ClassLabel::new(1).unwrap(), &acc);
        assert!((row.jitter_s.unwrap() - jitter_of(&iats).unwrap()).abs() < 1e-12);
        assert_eq!(row.throughput_bps, 8.0 * 800.0);
    }

    #[test]
    fn undefined_values_render_na() {
        let acc = IntervalAcc {
            dropped: 2,
            ..IntervalAcc::default()
        };
        let row = MetricRow::from_acc(100.0, 100.0, FlowId(3), ClassLabel::new(4).unwrap(), &acc);
        assert_eq!(row.loss_frac, 1.0);
        let csv = write_metrics_csv(&[row]);
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "100.000,3,4,0.000,NA,1.000000000,NA"
        );
    }
}
