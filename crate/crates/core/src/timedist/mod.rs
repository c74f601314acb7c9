//! Total-time distributions of one transaction as mixed continuous/atomic
//! measures on a uniform time grid.
//!
//! A [`MixedDistribution`] is a sum of smooth density *pieces* sampled on a
//! common grid `t_i = i * step`, plus point masses. Every piece is smooth on
//! its closed node range; kinks and jumps only ever sit on piece ends, which
//! keeps the composite quadrature in [`stencil`] at full order. Timeouts are
//! grid nodes, so the atoms created by truncation and the shifts they induce
//! under convolution are exact.

mod convolve;
pub mod oracle;
pub(crate) mod stencil;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelModel};

pub use convolve::convolve;

/// Default number of grid points spanning `[0, 2T + Q]`.
pub const DEFAULT_GRID_POINTS: usize = 1 << 14;

/// Exponential tail mass cut from service-time support.
pub const SERVICE_TAIL_EPS: f64 = 1e-10;

/// Largest node index a distribution may reach.
pub const MAX_NODES: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("grid steps differ ({0} vs {1})")]
    StepMismatch(f64, f64),
    #[error("atom at t = {time} is not on the grid with step {step}")]
    OffGridAtom { time: f64, step: f64 },
    #[error("grid overflow: result needs {needed} nodes, limit is {limit}; enlarge the step")]
    GridOverflow { needed: usize, limit: usize },
}

/// How terminated transmissions are accounted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemanticsMode {
    /// Successful transmissions only; the measure is defective.
    Defective,
    /// Server-holding time: a timed-out transmission holds the server for
    /// exactly the timeout. Proper distribution.
    Occupancy,
}

/// Holding-time law handed to the queueing engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoldingSemantics {
    /// Protocol server-holding time, timeouts included.
    #[default]
    Occupancy,
    /// Successful round trip, conditioned on success.
    DefectiveRenormalized,
}

impl HoldingSemantics {
    pub fn as_str(&self) -> &'static str {
        match self {
            HoldingSemantics::Occupancy => "occupancy",
            HoldingSemantics::DefectiveRenormalized => "defective-renormalized",
        }
    }
}

impl std::fmt::Display for HoldingSemantics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HoldingSemantics {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "occupancy" => Ok(HoldingSemantics::Occupancy),
            "defective-renormalized" => Ok(HoldingSemantics::DefectiveRenormalized),
            other => Err(format!("unknown semantics {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub time: f64,
    pub mass: f64,
}

/// Smooth density samples on nodes `start..=start + values.len() - 1`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Piece {
    pub(crate) start: usize,
    pub(crate) values: Vec<f64>,
    /// Running integral at each node, from clamped cell integrals.
    cumulative: Vec<f64>,
}

impl Piece {
    pub(crate) fn new(start: usize, values: Vec<f64>, step: f64) -> Self {
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for c in stencil::cell_integrals(&values) {
            acc += step * c.max(0.0);
            cumulative.push(acc);
        }
        Self {
            start,
            values,
            cumulative,
        }
    }

    pub(crate) fn end(&self) -> usize {
        self.start + self.values.len() - 1
    }

    fn mass(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    fn scaled(&self, factor: f64, step: f64) -> Self {
        Piece::new(
            self.start,
            self.values.iter().map(|v| v * factor).collect(),
            step,
        )
    }

    fn shifted(&self, nodes: usize, factor: f64, step: f64) -> Self {
        let mut p = self.scaled(factor, step);
        p.start += nodes;
        p
    }

    /// Integral from the piece start up to absolute time `t`.
    fn integral_to(&self, t: f64, step: f64) -> f64 {
        let x = t / step - self.start as f64;
        if x <= 0.0 {
            return 0.0;
        }
        let r = self.values.len() - 1;
        if x >= r as f64 {
            return self.mass();
        }
        let i = x.floor() as usize;
        let theta = x - i as f64;
        let cell = self.cumulative[i + 1] - self.cumulative[i];
        let (a, b) = (self.values[i].max(0.0), self.values[i + 1].max(0.0));
        // fraction of the cell's mass under the linear interpolant
        let frac = if a + b > 0.0 {
            (a * theta + 0.5 * (b - a) * theta * theta) / (0.5 * (a + b))
        } else {
            theta
        };
        self.cumulative[i] + cell * frac
    }

    /// Density at absolute time `t` by local cubic interpolation; right limit
    /// at the piece end.
    fn density_at(&self, t: f64, step: f64) -> f64 {
        let x = t / step - self.start as f64;
        let r = self.values.len() - 1;
        if x < 0.0 || x >= r as f64 || r == 0 {
            return 0.0;
        }
        let m = 4.min(r + 1);
        let i = x.floor() as usize;
        let lo = i.saturating_sub(1).min(r + 1 - m);
        let mut sum = 0.0;
        for j in 0..m {
            let mut basis = 1.0;
            for k in (0..m).filter(|&k| k != j) {
                basis *= (x - (lo + k) as f64) / (j as f64 - k as f64);
            }
            sum += basis * self.values[lo + j];
        }
        sum.max(0.0)
    }

    /// `sum_i w_i g(t_i) f_i` times the step.
    fn weighted_sum(&self, step: f64, g: impl Fn(f64) -> f64) -> f64 {
        let w = stencil::node_weights(self.values.len() - 1);
        step * w
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(k, (wk, fk))| wk * fk * g((self.start + k) as f64 * step))
            .sum::<f64>()
    }
}

/// A sub-probability measure on `[0, inf)`: smooth density pieces on a
/// uniform grid plus point masses. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDistribution {
    step: f64,
    pieces: Vec<Piece>,
    atoms: Vec<Atom>,
    total_mass: f64,
}

impl MixedDistribution {
    pub(crate) fn from_parts(step: f64, pieces: Vec<Piece>, mut atoms: Vec<Atom>) -> Self {
        let pieces: Vec<Piece> = pieces.into_iter().filter(|p| p.values.len() > 1).collect();
        atoms.retain(|a| a.mass > 0.0);
        atoms.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if (last.time - a.time).abs() <= 1e-9 * step => last.mass += a.mass,
                _ => merged.push(a),
            }
        }
        let total_mass = pieces.iter().map(Piece::mass).sum::<f64>()
            + merged.iter().map(|a| a.mass).sum::<f64>();
        Self {
            step,
            pieces,
            atoms: merged,
            total_mass,
        }
    }

    /// A single point mass.
    pub fn atom(time: f64, mass: f64, step: f64) -> Result<Self, DistError> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(DistError::InvalidParameter {
                name: "atom time",
                value: time,
            });
        }
        if !(mass > 0.0 && mass <= 1.0) {
            return Err(DistError::InvalidParameter {
                name: "atom mass",
                value: mass,
            });
        }
        check_step(step)?;
        Ok(Self::from_parts(
            step,
            Vec::new(),
            vec![Atom { time, mass }],
        ))
    }

    /// Density sampled at nodes `0, step, 2 step, ...`; must be smooth on
    /// the sampled range (a jump is only allowed at its last node).
    pub fn from_density_samples(values: Vec<f64>, step: f64) -> Result<Self, DistError> {
        check_step(step)?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(DistError::InvalidParameter {
                name: "density",
                value: *v,
            });
        }
        Ok(Self::from_parts(
            step,
            vec![Piece::new(0, values, step)],
            Vec::new(),
        ))
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Largest grid node carrying density.
    pub fn last_node(&self) -> usize {
        self.pieces.iter().map(Piece::end).max().unwrap_or(0)
    }

    /// End of the support, including atoms.
    pub fn support_end(&self) -> f64 {
        let dens = self.last_node() as f64 * self.step;
        self.atoms.iter().map(|a| a.time).fold(dens, f64::max)
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        (self.total_mass - 1.0).abs() <= tol
    }

    /// Grid times `t_0 = 0 < ... < t_G` and the density at each (right limits).
    pub fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.last_node() + 1;
        let mut dens = vec![0.0; n];
        for p in &self.pieces {
            // a piece owns [start, end); its end value is only a left limit
            for (k, v) in p.values[..p.values.len() - 1].iter().enumerate() {
                dens[p.start + k] += v;
            }
        }
        let times = (0..n).map(|i| i as f64 * self.step).collect();
        (times, dens)
    }

    /// Continuous-part density at `t`.
    pub fn pdf(&self, t: f64) -> f64 {
        if !(t >= 0.0) {
            return 0.0;
        }
        self.pieces.iter().map(|p| p.density_at(t, self.step)).sum()
    }

    /// Right-continuous distribution function, `F(t) = mu([0, t])`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t.is_nan() || t < 0.0 {
            return 0.0;
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.time <= t)
            .map(|a| a.mass)
            .sum();
        atoms + self.density_integral_to(t)
    }

    /// Left limit `F(t-) = mu([0, t))`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        if t.is_nan() || t <= 0.0 {
            return 0.0;
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.time < t)
            .map(|a| a.mass)
            .sum();
        atoms + self.density_integral_to(t)
    }

    fn density_integral_to(&self, t: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.integral_to(t, self.step))
            .sum()
    }

    /// Smallest `t` with `F(t) >= p * total_mass`.
    pub fn quantile(&self, p: f64) -> f64 {
        let target = p.clamp(0.0, 1.0) * self.total_mass;
        let (mut lo, mut hi) = (0.0, self.support_end());
        if self.cdf(lo) >= target {
            return 0.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-13 * hi.max(1.0) {
                break;
            }
        }
        hi
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// `n`-th raw moment `int t^n dF`, atoms included; `n = 0` is the total mass.
    pub fn moment(&self, n: u32) -> f64 {
        if n == 0 {
            return self.total_mass;
        }
        let dens: f64 = self
            .pieces
            .iter()
            .map(|p| p.weighted_sum(self.step, |t| t.powi(n as i32)))
            .sum();
        dens + self
            .atoms
            .iter()
            .map(|a| a.mass * a.time.powi(n as i32))
            .sum::<f64>()
    }

    /// Laplace-Stieltjes transform `int e^{-st} dF`.
    pub fn lst(&self, s: f64) -> f64 {
        if s == 0.0 {
            return self.total_mass;
        }
        let dens: f64 = self
            .pieces
            .iter()
            .map(|p| p.weighted_sum(self.step, |t| (-s * t).exp()))
            .sum();
        dens + self
            .atoms
            .iter()
            .map(|a| a.mass * (-s * a.time).exp())
            .sum::<f64>()
    }

    /// Measure multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_parts(
            self.step,
            self.pieces
                .iter()
                .map(|p| p.scaled(factor, self.step))
                .collect(),
            self.atoms
                .iter()
                .map(|a| Atom {
                    time: a.time,
                    mass: a.mass * factor,
                })
                .collect(),
        )
    }

    /// Conditioned on the event it measures: rescaled to total mass one.
    pub fn renormalized(&self) -> Self {
        self.scaled(1.0 / self.total_mass)
    }

    /// Sum of two measures on the same grid.
    pub fn superpose(&self, other: &Self) -> Result<Self, DistError> {
        same_step(self.step, other.step)?;
        let pieces = self.pieces.iter().chain(&other.pieces).cloned().collect();
        let atoms = self.atoms.iter().chain(&other.atoms).copied().collect();
        Ok(Self::from_parts(self.step, pieces, atoms))
    }

    /// Grid index of `time`, if it lies on a node.
    fn node_of(&self, time: f64) -> Option<usize> {
        node_index(time, self.step)
    }
}

fn check_step(step: f64) -> Result<(), DistError> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(DistError::InvalidParameter {
            name: "step",
            value: step,
        })
    }
}

fn same_step(a: f64, b: f64) -> Result<(), DistError> {
    if (a - b).abs() <= 1e-12 * a.max(b) {
        Ok(())
    } else {
        Err(DistError::StepMismatch(a, b))
    }
}

pub(crate) fn node_index(time: f64, step: f64) -> Option<usize> {
    let x = time / step;
    let k = x.round();
    ((x - k).abs() <= 1e-9 * k.max(1.0) && k >= 0.0).then_some(k as usize)
}

/// Grid layout for a total-time computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Approximate number of points spanning `[0, 2T + Q]`.
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: DEFAULT_GRID_POINTS,
        }
    }
}

impl GridSpec {
    /// Step such that the timeout is an exact multiple and roughly
    /// `points` nodes cover `[0, 2T + Q]`, `Q` being the service tail quantile.
    pub fn step_for(&self, timeout: f64, mu: f64) -> f64 {
        let q = (1.0 / SERVICE_TAIL_EPS).ln() / mu;
        let nominal = (2.0 * timeout + q) / (self.points.max(16) - 1) as f64;
        let per_timeout = (timeout / nominal).ceil().max(1.0);
        timeout / per_timeout
    }
}

/// Exponential service time with rate `mu`, cut at its `1 - tail_eps`
/// quantile and renormalized to a proper distribution.
pub fn exponential_dist(mu: f64, tail_eps: f64, step: f64) -> Result<MixedDistribution, DistError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(DistError::InvalidParameter {
            name: "mu",
            value: mu,
        });
    }
    if !(tail_eps > 0.0 && tail_eps <= 1e-6) {
        return Err(DistError::InvalidParameter {
            name: "tail_eps",
            value: tail_eps,
        });
    }
    check_step(step)?;
    let n = ((1.0 / tail_eps).ln() / (mu * step)).ceil() as usize;
    if n >= MAX_NODES {
        return Err(DistError::GridOverflow {
            needed: n + 1,
            limit: MAX_NODES,
        });
    }
    let kept = -(-mu * step * n as f64).exp_m1();
    let values = (0..=n)
        .map(|i| mu * (-mu * step * i as f64).exp() / kept)
        .collect();
    Ok(MixedDistribution::from_parts(
        step,
        vec![Piece::new(0, values, step)],
        Vec::new(),
    ))
}

/// One-way communication time truncated at `timeout`.
///
/// The density is restricted to `(0, T]`; under [`SemanticsMode::Occupancy`]
/// the timed-out mass becomes an atom at `T`.
pub fn oneway_com_dist(
    channel: &ChannelModel,
    timeout: f64,
    mode: SemanticsMode,
    step: f64,
) -> Result<MixedDistribution, DistError> {
    if !(timeout.is_finite() && timeout > 0.0) {
        return Err(DistError::InvalidParameter {
            name: "timeout",
            value: timeout,
        });
    }
    check_step(step)?;
    let n = node_index(timeout, step).ok_or(DistError::OffGridAtom {
        time: timeout,
        step,
    })?;
    if n >= MAX_NODES {
        return Err(DistError::GridOverflow {
            needed: n + 1,
            limit: MAX_NODES,
        });
    }
    let values = (0..=n)
        .map(|i| channel.com_time_pdf(i as f64 * step))
        .collect();
    let p = channel.success_probability(timeout)?;
    let atoms = match mode {
        SemanticsMode::Defective => Vec::new(),
        SemanticsMode::Occupancy => vec![Atom {
            time: timeout,
            mass: 1.0 - p,
        }],
    };
    Ok(MixedDistribution::from_parts(
        step,
        vec![Piece::new(0, values, step)],
        atoms,
    ))
}

/// Distribution of the server-holding (or successful round-trip) time of one
/// transaction: uplink, exponential service and downlink.
///
/// `Defective` convolves defective uplink, service and defective
/// downlink (mass `p^2`). `Occupancy` follows the protocol: a timed-out
/// uplink holds the server for `T`; otherwise uplink, service and
/// `min(downlink, T)` are summed.
pub fn total_time_distribution(
    channel: &ChannelModel,
    mu: f64,
    timeout: f64,
    mode: SemanticsMode,
    grid: GridSpec,
) -> Result<MixedDistribution, DistError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(DistError::InvalidParameter {
            name: "mu",
            value: mu,
        });
    }
    if !(timeout.is_finite() && timeout > 0.0) {
        return Err(DistError::InvalidParameter {
            name: "timeout",
            value: timeout,
        });
    }
    let step = grid.step_for(timeout, mu);
    let up = oneway_com_dist(channel, timeout, SemanticsMode::Defective, step)?;
    let service = exponential_dist(mu, SERVICE_TAIL_EPS, step)?;
    let up_service = convolve(&up, &service)?;
    match mode {
        SemanticsMode::Defective => convolve(&up_service, &up),
        SemanticsMode::Occupancy => {
            let down = oneway_com_dist(channel, timeout, SemanticsMode::Occupancy, step)?;
            let served = convolve(&up_service, &down)?;
            let p = channel.success_probability(timeout)?;
            served.superpose(&MixedDistribution::atom(timeout, 1.0 - p, step)?)
        }
    }
}

/// Proper holding-time distribution under the chosen semantics.
pub fn holding_time_distribution(
    channel: &ChannelModel,
    mu: f64,
    timeout: f64,
    semantics: HoldingSemantics,
    grid: GridSpec,
) -> Result<MixedDistribution, DistError> {
    match semantics {
        HoldingSemantics::Occupancy => {
            total_time_distribution(channel, mu, timeout, SemanticsMode::Occupancy, grid)
        }
        HoldingSemantics::DefectiveRenormalized => {
            total_time_distribution(channel, mu, timeout, SemanticsMode::Defective, grid)
                .map(|d| d.renormalized())
        }
    }
}
