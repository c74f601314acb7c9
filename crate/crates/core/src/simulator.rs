//! Discrete-event simulation of the client/database protocol.
//!
//! Every free client initiates a transaction at rate `lambda`; a client in
//! orbit retries at rate `gamma`. A client that finds the database unlocked
//! seizes it and runs the pipeline: uplink (terminated after `T`), service,
//! downlink (terminated after `T`). The lock is held for the whole pipeline.
//! Terminated transactions vanish and their client becomes free again.
//!
//! Replications use ChaCha8 seeded from the master seed with the replication
//! index as stream number, so results do not depend on scheduling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::analytic::{AnalyticError, QueueParams};
use crate::channel::ChannelModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] AnalyticError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: QueueParams,
    pub channel: ChannelModel,
    pub horizon: f64,
    pub warmup: f64,
    pub replications: usize,
    pub master_seed: u64,
}

impl SimConfig {
    /// Configuration with the warmup set to a tenth of the horizon.
    pub fn new(
        params: QueueParams,
        channel: ChannelModel,
        horizon: f64,
        replications: usize,
        master_seed: u64,
    ) -> Result<Self, SimError> {
        let c = Self {
            params,
            channel,
            horizon,
            warmup: 0.1 * horizon,
            replications,
            master_seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::InvalidConfig(format!("horizon {}", self.horizon)));
        }
        if !(self.warmup >= 0.0 && self.warmup <= self.horizon) {
            return Err(SimError::InvalidConfig(format!(
                "warmup {} outside [0, horizon]",
                self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(SimError::InvalidConfig("zero replications".into()));
        }
        Ok(())
    }
}

/// Accumulated observations of one replication over `[warmup, horizon]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawStats {
    pub rep: usize,
    pub window: f64,
    /// Time integral of the orbit size.
    pub orbit_area: f64,
    /// Time integral of orbit size plus pipeline occupancy.
    pub system_area: f64,
    /// Time the database was locked.
    pub locked_time: f64,
    /// Seizures started and finished inside the window.
    pub seizures: u64,
    pub wait_sum: f64,
    pub stay_sum: f64,
    pub holding_sum: f64,
    pub completions: u64,
    pub completed_wait_sum: f64,
    pub completed_stay_sum: f64,
    pub uplink_discards: u64,
    pub downlink_discards: u64,
    /// Busy periods started and finished inside the window.
    pub busy_periods: u64,
    pub busy_sum: f64,
    /// Events processed over the whole run.
    pub events: u64,
}

/// Names of the per-replication metrics, in output order.
pub const METRICS: [&str; 12] = [
    "p1",
    "L",
    "W",
    "WS",
    "LS",
    "BP",
    "discard_rate",
    "W_completed",
    "WS_completed",
    "holding",
    "uplink_discard_fraction",
    "downlink_discard_fraction",
];

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        f64::NAN
    }
}

impl RawStats {
    /// Replication estimate of a metric; NaN when it has no observations.
    pub fn metric(&self, name: &str) -> f64 {
        let seized = self.seizures as f64;
        match name {
            "p1" => ratio(self.locked_time, self.window),
            "L" => ratio(self.orbit_area, self.window),
            "LS" => ratio(self.system_area, self.window),
            "W" => ratio(self.wait_sum, seized),
            "WS" => ratio(self.stay_sum, seized),
            "BP" => ratio(self.busy_sum, self.busy_periods as f64),
            "discard_rate" => ratio(
                (self.uplink_discards + self.downlink_discards) as f64,
                seized,
            ),
            "W_completed" => ratio(self.completed_wait_sum, self.completions as f64),
            "WS_completed" => ratio(self.completed_stay_sum, self.completions as f64),
            "holding" => ratio(self.holding_sum, seized),
            "uplink_discard_fraction" => ratio(self.uplink_discards as f64, seized),
            "downlink_discard_fraction" => ratio(
                self.downlink_discards as f64,
                seized - self.uplink_discards as f64,
            ),
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClientState {
    Free,
    Orbit,
    Pipeline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    UplinkTimeout,
    DownlinkTimeout,
    Success,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    /// Arrival of a free client or retrial of an orbiting one.
    Fire(usize),
    ServiceEnd,
    PipelineEnd(Outcome),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: BinaryHeap pops the earliest (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// In-flight transaction holding the lock.
#[derive(Debug, Clone, Copy)]
struct Transaction {
    client: usize,
    generated: f64,
    seized: f64,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    clock: f64,
    seq: u64,
    heap: BinaryHeap<Event>,
    clients: Vec<ClientState>,
    generated: Vec<f64>,
    orbit: usize,
    active: Option<Transaction>,
    busy_since: Option<f64>,
    stats: RawStats,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, rep: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
        rng.set_stream(rep as u64);
        let k = cfg.params.k;
        let mut sim = Self {
            cfg,
            rng,
            clock: 0.0,
            seq: 0,
            heap: BinaryHeap::with_capacity(2 * k),
            clients: vec![ClientState::Free; k],
            generated: vec![0.0; k],
            orbit: 0,
            active: None,
            busy_since: None,
            stats: RawStats {
                rep,
                window: cfg.horizon - cfg.warmup,
                ..RawStats::default()
            },
        };
        for c in 0..k {
            let dt = sim.exp(cfg.params.lambda);
            sim.schedule(dt, EventKind::Fire(c));
        }
        sim
    }

    fn exp(&mut self, rate: f64) -> f64 {
        let u: f64 = self.rng.sample(Open01);
        -u.ln() / rate
    }

    fn com_time(&mut self) -> f64 {
        let u: f64 = self.rng.sample(Open01);
        self.cfg.channel.com_time_quantile(u)
    }

    fn schedule(&mut self, delay: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time: self.clock + delay,
            seq: self.seq,
            kind,
        });
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.cfg.warmup && t <= self.cfg.horizon
    }

    fn is_busy(&self) -> bool {
        self.active.is_some() || self.orbit > 0
    }

    /// Integrates the state over `[clock, until]` clipped to the window.
    fn advance(&mut self, until: f64) {
        let lo = self.clock.max(self.cfg.warmup);
        let hi = until.min(self.cfg.horizon);
        if hi > lo {
            let dt = hi - lo;
            let locked = if self.active.is_some() { 1.0 } else { 0.0 };
            self.stats.orbit_area += self.orbit as f64 * dt;
            self.stats.system_area += (self.orbit as f64 + locked) * dt;
            self.stats.locked_time += locked * dt;
        }
        self.clock = until;
    }

    fn run(mut self) -> RawStats {
        while let Some(ev) = self.heap.peek().copied() {
            if ev.time > self.cfg.horizon {
                break;
            }
            self.heap.pop();
            let was_busy = self.is_busy();
            self.advance(ev.time);
            self.stats.events += 1;
            match ev.kind {
                EventKind::Fire(c) => self.fire(c),
                EventKind::ServiceEnd => self.service_end(),
                EventKind::PipelineEnd(outcome) => self.finish(outcome),
            }
            self.track_busy(was_busy);
            debug_assert_eq!(
                self.clients
                    .iter()
                    .filter(|s| **s == ClientState::Orbit)
                    .count(),
                self.orbit
            );
            debug_assert_eq!(
                self.clients
                    .iter()
                    .filter(|s| **s == ClientState::Pipeline)
                    .count(),
                usize::from(self.active.is_some())
            );
        }
        let horizon = self.cfg.horizon;
        self.advance(horizon);
        self.stats
    }

    fn track_busy(&mut self, was_busy: bool) {
        match (was_busy, self.is_busy()) {
            (false, true) => self.busy_since = Some(self.clock),
            (true, false) => {
                if let Some(start) = self.busy_since.take() {
                    if start >= self.cfg.warmup {
                        self.stats.busy_periods += 1;
                        self.stats.busy_sum += self.clock - start;
                    }
                }
            }
            _ => {}
        }
    }

    fn fire(&mut self, c: usize) {
        let p = self.cfg.params;
        if self.clients[c] == ClientState::Free {
            self.generated[c] = self.clock;
        }
        if self.active.is_none() {
            if self.clients[c] == ClientState::Orbit {
                self.orbit -= 1;
            }
            self.seize(c);
        } else {
            if self.clients[c] == ClientState::Free {
                self.clients[c] = ClientState::Orbit;
                self.orbit += 1;
            }
            let dt = self.exp(p.gamma);
            self.schedule(dt, EventKind::Fire(c));
        }
    }

    fn seize(&mut self, c: usize) {
        let t = self.cfg.params.timeout;
        self.clients[c] = ClientState::Pipeline;
        self.active = Some(Transaction {
            client: c,
            generated: self.generated[c],
            seized: self.clock,
        });
        let up = self.com_time();
        if up > t {
            self.schedule(t, EventKind::PipelineEnd(Outcome::UplinkTimeout));
        } else {
            let serve = self.exp(self.cfg.params.mu);
            self.schedule(up + serve, EventKind::ServiceEnd);
        }
    }

    fn service_end(&mut self) {
        let t = self.cfg.params.timeout;
        let down = self.com_time();
        if down > t {
            self.schedule(t, EventKind::PipelineEnd(Outcome::DownlinkTimeout));
        } else {
            self.schedule(down, EventKind::PipelineEnd(Outcome::Success));
        }
    }

    fn finish(&mut self, outcome: Outcome) {
        let tx = self
            .active
            .take()
            .expect("pipeline end without an active transaction");
        if self.in_window(tx.seized) {
            let s = &mut self.stats;
            let wait = tx.seized - tx.generated;
            let stay = self.clock - tx.generated;
            s.seizures += 1;
            s.wait_sum += wait;
            s.stay_sum += stay;
            s.holding_sum += self.clock - tx.seized;
            match outcome {
                Outcome::UplinkTimeout => s.uplink_discards += 1,
                Outcome::DownlinkTimeout => s.downlink_discards += 1,
                Outcome::Success => {
                    s.completions += 1;
                    s.completed_wait_sum += wait;
                    s.completed_stay_sum += stay;
                }
            }
        }
        self.clients[tx.client] = ClientState::Free;
        let dt = self.exp(self.cfg.params.lambda);
        self.schedule(dt, EventKind::Fire(tx.client));
    }
}

/// One transaction drawn from the protocol with an always-free database.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransactionSample {
    /// Time the database stays locked.
    pub holding: f64,
    /// Uplink + service + downlink when neither link timed out.
    pub round_trip: Option<f64>,
}

pub fn sample_transaction<R: Rng + ?Sized>(
    channel: &ChannelModel,
    mu: f64,
    timeout: f64,
    rng: &mut R,
) -> TransactionSample {
    let mut open = || -> f64 { rng.sample(Open01) };
    let up = channel.com_time_quantile(open());
    if up > timeout {
        return TransactionSample {
            holding: timeout,
            round_trip: None,
        };
    }
    let serve = -open().ln() / mu;
    let down = channel.com_time_quantile(open());
    if down > timeout {
        TransactionSample {
            holding: up + serve + timeout,
            round_trip: None,
        }
    } else {
        let total = up + serve + down;
        TransactionSample {
            holding: total,
            round_trip: Some(total),
        }
    }
}

/// One replication; bit-reproducible for a given `(master_seed, rep)`.
pub fn run_replication(cfg: &SimConfig, rep: usize) -> Result<RawStats, SimError> {
    cfg.validate()?;
    Ok(Sim::new(cfg, rep).run())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub name: String,
    pub mean: f64,
    /// Bounds of the 95% t-interval over replication means; NaN (null in
    /// JSON) with fewer than two replications observing the metric.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Replications that observed the metric.
    pub n: usize,
}

impl MetricEstimate {
    pub fn from_samples(name: &str, xs: &[f64]) -> Self {
        let obs: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
        let n = obs.len();
        let mean = if n > 0 {
            obs.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let (ci_low, ci_high) = if n >= 2 {
            let var = obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.975);
            let half = t * (var / n as f64).sqrt();
            (mean - half, mean + half)
        } else {
            (f64::NAN, f64::NAN)
        };
        Self {
            name: name.to_string(),
            mean,
            ci_low,
            ci_high,
            n,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimates {
    pub replications: usize,
    pub master_seed: u64,
    /// Stream number of each replication.
    pub streams: Vec<u64>,
    pub metrics: Vec<MetricEstimate>,
}

impl SimEstimates {
    pub fn get(&self, name: &str) -> Option<&MetricEstimate> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn from_raw(cfg: &SimConfig, raws: &[RawStats]) -> Self {
        let metrics = METRICS
            .iter()
            .map(|name| {
                let xs: Vec<f64> = raws.iter().map(|r| r.metric(name)).collect();
                MetricEstimate::from_samples(name, &xs)
            })
            .collect();
        Self {
            replications: raws.len(),
            master_seed: cfg.master_seed,
            streams: raws.iter().map(|r| r.rep as u64).collect(),
            metrics,
        }
    }
}

/// All replications (in parallel) and their per-replication statistics.
pub fn run_replications(cfg: &SimConfig) -> Result<Vec<RawStats>, SimError> {
    cfg.validate()?;
    Ok((0..cfg.replications)
        .into_par_iter()
        .map(|rep| Sim::new(cfg, rep).run())
        .collect())
}

pub fn run_experiment(cfg: &SimConfig) -> Result<SimEstimates, SimError> {
    let raws = run_replications(cfg)?;
    Ok(SimEstimates::from_raw(cfg, &raws))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(horizon: f64, warmup: f64) -> SimConfig {
        SimConfig {
            params: QueueParams::new(3, 0.5, 0.8, 1.0, 2.0).unwrap(),
            channel: ChannelModel::linear(1.0, 1.0).unwrap(),
            horizon,
            warmup,
            replications: 4,
            master_seed: 99,
        }
    }

    #[test]
    fn replications_are_reproducible() {
        let c = config(2000.0, 200.0);
        assert_eq!(
            run_replication(&c, 2).unwrap(),
            run_replication(&c, 2).unwrap()
        );
        assert_ne!(
            run_replication(&c, 1).unwrap(),
            run_replication(&c, 2).unwrap()
        );
    }

    #[test]
    fn empty_window_counts_nothing() {
        let c = config(100.0, 100.0);
        let r = run_replication(&c, 0).unwrap();
        assert_eq!(r.seizures, 0);
        assert_eq!(r.busy_periods, 0);
        assert_eq!(r.window, 0.0);
        assert!(r.metric("p1").is_nan());
        assert!(r.events > 0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(run_replication(&config(10.0, 20.0), 0).is_err());
        let mut c = config(10.0, 1.0);
        c.replications = 0;
        assert!(run_experiment(&c).is_err());
    }

    #[test]
    fn intervals_bracket_means() {
        let e = run_experiment(&config(3000.0, 300.0)).unwrap();
        assert_eq!(e.replications, 4);
        for m in &e.metrics {
            if m.n >= 2 {
                assert!(m.ci_low <= m.mean && m.mean <= m.ci_high, "{m:?}");
            }
        }
        let a = MetricEstimate::from_samples("x", &[1.0, 2.0, 3.0]);
        // t_{0.975, 2} = 4.302653
        assert!((a.ci_high - 2.0 - 4.302653 * (1.0f64 / 3.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn event_ordering_is_total() {
        let a = Event {
            time: 1.0,
            seq: 2,
            kind: EventKind::ServiceEnd,
        };
        let b = Event {
            time: 1.0,
            seq: 3,
            kind: EventKind::ServiceEnd,
        };
        let mut h = BinaryHeap::new();
        h.push(b);
        h.push(a);
        assert_eq!(h.pop().unwrap().seq, 2);
    }
}
