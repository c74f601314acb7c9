//! Stationary solution of the finite-source retrial queue with general
//! server-holding time.
//!
//! The state is (server idle/busy, clients in orbit). Everything is expressed
//! through the factorial moments `q_m` of the idle-server orbit distribution,
//! obtained from a three-term recursion in the holding-time transform
//! `beta(s)` evaluated at `s = m lambda`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timedist::MixedDistribution;

/// Holding-time mass must be within this of one.
pub const MASS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("holding-time distribution has mass {0}; a proper distribution is required")]
    DefectiveHoldingTime(f64),
    #[error("recursion breaks down at m = {m}: coefficient {coefficient}")]
    SolverBreakdown { m: usize, coefficient: f64 },
    #[error("numeric instability: {what}[{index}] = {value}")]
    NumericInstability {
        what: &'static str,
        index: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    /// Number of clients.
    #[serde(rename = "K")]
    pub k: usize,
    /// Transaction initiation rate of each free client.
    pub lambda: f64,
    /// Retrial rate of each client in orbit.
    pub gamma: f64,
    /// Database service rate.
    pub mu: f64,
    /// Transmission timeout.
    #[serde(rename = "T")]
    pub timeout: f64,
}

impl QueueParams {
    pub fn new(
        k: usize,
        lambda: f64,
        gamma: f64,
        mu: f64,
        timeout: f64,
    ) -> Result<Self, AnalyticError> {
        let p = Self {
            k,
            lambda,
            gamma,
            mu,
            timeout,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        if self.k < 2 {
            return Err(AnalyticError::InvalidParameter {
                name: "K",
                value: self.k as f64,
            });
        }
        for (name, value) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("timeout", self.timeout),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(AnalyticError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

/// What the queue needs to know about the server-holding time.
pub trait HoldingTime {
    fn mean(&self) -> f64;
    /// Laplace-Stieltjes transform.
    fn lst(&self, s: f64) -> f64;
    fn mass(&self) -> f64 {
        self.lst(0.0)
    }
}

impl HoldingTime for MixedDistribution {
    fn mean(&self) -> f64 {
        self.moment(1)
    }
    fn lst(&self, s: f64) -> f64 {
        MixedDistribution::lst(self, s)
    }
    fn mass(&self) -> f64 {
        self.total_mass()
    }
}

/// Exponential holding time in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub rate: f64,
}

impl HoldingTime for Exponential {
    fn mean(&self) -> f64 {
        1.0 / self.rate
    }
    fn lst(&self, s: f64) -> f64 {
        self.rate / (self.rate + s)
    }
    fn mass(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// Reciprocal mean holding time.
    pub v: f64,
    /// Server utilization.
    pub p1: f64,
    /// Mean orbit size.
    #[serde(rename = "L")]
    pub l: f64,
    /// Mean orbit time per seizure.
    #[serde(rename = "W")]
    pub w: f64,
    /// Mean number in system.
    #[serde(rename = "LS")]
    pub ls: f64,
    /// Mean staying time.
    #[serde(rename = "WS")]
    pub ws: f64,
    /// Mean busy period.
    #[serde(rename = "E_BP")]
    pub e_bp: f64,
    pub q: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    /// Probabilities of an idle server with `n` clients in orbit.
    pub p0: Vec<f64>,
}

/// Coefficients of the idle-orbit recursion at level `m`.
struct Level {
    /// multiplies `q_{m-1}`
    down: f64,
    /// multiplies `q_m`
    diag: f64,
    /// multiplies `q_{m+1}`
    up: f64,
}

fn level(p: &QueueParams, m: usize, beta: f64) -> Level {
    let (k, lam, gam) = (p.k as f64, p.lambda, p.gamma);
    let mf = m as f64;
    Level {
        down: (k - mf) * gam * beta,
        diag: ((k - mf - 1.0) * gam + (mf + 1.0) * lam) * (1.0 - beta) + mf * gam * beta,
        up: (mf + 1.0) * (lam - gam) * (1.0 - beta),
    }
}

fn betas(p: &QueueParams, beta: &dyn Fn(f64) -> f64) -> Vec<f64> {
    (0..p.k).map(|m| beta(m as f64 * p.lambda)).collect()
}

/// `C_m = q_m / q_{K-1}` for `m = 0..K-1`, from the downward recursion
/// `(K-m) gamma beta(m lambda) q_{m-1} = diag_m q_m + up_m q_{m+1}`
/// with `q_{K-1} = 1`, `q_K = 0`.
pub fn solve_coefficients(
    p: &QueueParams,
    beta: impl Fn(f64) -> f64,
) -> Result<Vec<f64>, AnalyticError> {
    p.validate()?;
    let b = betas(p, &beta);
    let k = p.k;
    let mut c = vec![0.0; k + 1];
    c[k - 1] = 1.0;
    for m in (1..k).rev() {
        let lv = level(p, m, b[m]);
        if !(lv.down > 0.0) {
            return Err(AnalyticError::SolverBreakdown {
                m,
                coefficient: lv.down,
            });
        }
        c[m - 1] = (lv.diag * c[m] + lv.up * c[m + 1]) / lv.down;
        if !(c[m - 1].is_finite() && c[m - 1] > 0.0) {
            return Err(AnalyticError::NumericInstability {
                what: "C",
                index: m - 1,
                value: c[m - 1],
            });
        }
    }
    c.truncate(k);
    Ok(c)
}

/// Idle-orbit factorial moments `q_m` together with `C_m` and `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub v: f64,
    pub c: Vec<f64>,
    pub q: Vec<f64>,
}

/// Transform rescaled so that `beta(0) = 1` exactly; absorbs the
/// quadrature-level mass error of grid distributions.
pub fn unit_lst(dist: &dyn HoldingTime) -> impl Fn(f64) -> f64 + '_ {
    let mass = dist.mass();
    move |s| if s == 0.0 { 1.0 } else { dist.lst(s) / mass }
}

fn check_mass(dist: &dyn HoldingTime) -> Result<(), AnalyticError> {
    let mass = dist.mass();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(AnalyticError::DefectiveHoldingTime(mass));
    }
    Ok(())
}

pub fn stationary_q(p: &QueueParams, dist: &dyn HoldingTime) -> Result<Stationary, AnalyticError> {
    check_mass(dist)?;
    let c = solve_coefficients(p, unit_lst(dist))?;
    let v = dist.mass() / dist.mean();
    if !(v.is_finite() && v > 0.0) {
        return Err(AnalyticError::InvalidParameter {
            name: "mean holding time",
            value: dist.mean(),
        });
    }
    let k = p.k as f64;
    let c1 = c[1];
    let top = v / ((v + p.lambda + (k - 1.0) * p.gamma) * c[0] + (p.lambda - p.gamma) * c1);
    let q: Vec<f64> = c.iter().map(|cm| cm * top).collect();
    if let Some((i, &bad)) = q
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.is_finite() && **x > 0.0))
    {
        return Err(AnalyticError::NumericInstability {
            what: "q",
            index: i,
            value: bad,
        });
    }
    Ok(Stationary { v, c, q })
}

/// Residual of each recursion level for a given `q`, relative to the
/// largest term of that level.
pub fn recursion_residuals(p: &QueueParams, beta: impl Fn(f64) -> f64, q: &[f64]) -> Vec<f64> {
    let b = betas(p, &beta);
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= q.len() {
            0.0
        } else {
            q[i as usize]
        }
    };
    (0..p.k)
        .map(|m| {
            let lv = level(p, m, b[m]);
            let mi = m as isize;
            let terms = [lv.down * at(mi - 1), -lv.diag * at(mi), -lv.up * at(mi + 1)];
            let scale = terms.iter().fold(0.0f64, |a, t| a.max(t.abs()));
            let sum: f64 = terms.iter().sum();
            if scale == 0.0 {
                0.0
            } else {
                sum.abs() / scale
            }
        })
        .collect()
}

/// Binomial coefficient as a float.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Idle-server orbit probabilities from the factorial moments:
/// `p_n = sum_{m=0}^n (-1)^m binom(K-1-n+m, m) q_{K-1-n+m}`.
pub fn recover_p0(q: &[f64]) -> Result<Vec<f64>, AnalyticError> {
    let k = q.len();
    let mut p = Vec::with_capacity(k);
    for n in 0..k {
        let pn = compensated_sum((0..=n).map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(k - 1 - n + m, m) * q[k - 1 - n + m]
        }));
        if pn < -1e-9 || !pn.is_finite() {
            return Err(AnalyticError::NumericInstability {
                what: "p0",
                index: n,
                value: pn,
            });
        }
        p.push(pn);
    }
    Ok(p)
}

/// Intermediate sequences of the busy-period recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct BusyPeriodWorkspace {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `(u_m, v_m, w_m)` for `m = 0..K-1`.
    pub coefficients: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusyPeriod {
    pub mean: f64,
    pub workspace: BusyPeriodWorkspace,
}

/// Mean busy period.
///
/// With `u_m, v_m, w_m` the coefficients of the idle-orbit recursion at
/// level `m`, the sequences
/// `A_{m-1} = (u_m A_m + v_m A_{m+1} + binom(K-1, m)) / w_m` and
/// `B_{m-1} = (u_m B_m + v_m B_{m+1} - binom(K-1, m) beta(m lambda)) / w_m`
/// are solved downward from `A_{K-1} = B_{K-1} = 0`,
/// `A_{K-2} = 1 / (gamma beta((K-1) lambda))`, `B_{K-2} = -1/gamma`; then
/// `E = beta_1 + (1 + beta_1((K-1) gamma + lambda))(A_0 + B_0)
///      + (lambda - gamma) beta_1 (A_1 + B_1)`.
pub fn busy_period(p: &QueueParams, dist: &dyn HoldingTime) -> Result<BusyPeriod, AnalyticError> {
    p.validate()?;
    check_mass(dist)?;
    let k = p.k;
    let b = betas(p, &unit_lst(dist));
    let coefficients: Vec<(f64, f64, f64)> = (0..k)
        .map(|m| {
            let lv = level(p, m, b[m]);
            (lv.diag, lv.up, lv.down)
        })
        .collect();
    let mut a = vec![0.0; k];
    let mut bb = vec![0.0; k];
    let last = p.gamma * b[k - 1];
    if !(last > 0.0) {
        return Err(AnalyticError::SolverBreakdown {
            m: k - 1,
            coefficient: last,
        });
    }
    a[k - 2] = 1.0 / last;
    bb[k - 2] = -1.0 / p.gamma;
    for m in (1..k - 1).rev() {
        let (u, v, w) = coefficients[m];
        if !(w > 0.0) {
            return Err(AnalyticError::SolverBreakdown { m, coefficient: w });
        }
        let binom = binomial(k - 1, m);
        a[m - 1] = (u * a[m] + v * a[m + 1] + binom) / w;
        bb[m - 1] = (u * bb[m] + v * bb[m + 1] - binom * b[m]) / w;
    }
    let beta1 = dist.mean() / dist.mass();
    let kf = k as f64;
    let mean = beta1
        + (1.0 + beta1 * ((kf - 1.0) * p.gamma + p.lambda)) * (a[0] + bb[0])
        + (p.lambda - p.gamma) * beta1 * (a[1] + bb[1]);
    if !(mean.is_finite() && mean > 0.0) {
        return Err(AnalyticError::NumericInstability {
            what: "E_BP",
            index: 0,
            value: mean,
        });
    }
    Ok(BusyPeriod {
        mean,
        workspace: BusyPeriodWorkspace {
            a,
            b: bb,
            coefficients,
        },
    })
}

/// Mean busy period implied by the idle probability `p_{0,0}` through
/// alternating Exp(K lambda) idle periods and busy periods.
pub fn regenerative_busy_period(p: &QueueParams, p00: f64) -> f64 {
    (1.0 / p00 - 1.0) / (p.k as f64 * p.lambda)
}

/// Every metric of the report, using the supplied orbit-probability recovery.
pub fn performance_metrics_with(
    p: &QueueParams,
    dist: &dyn HoldingTime,
    recover: impl Fn(&[f64]) -> Result<Vec<f64>, AnalyticError>,
) -> Result<PerformanceReport, AnalyticError> {
    let st = stationary_q(p, dist)?;
    let p0 = recover(&st.q)?;
    let bp = busy_period(p, dist)?;
    let (k, lam, v) = (p.k as f64, p.lambda, st.v);
    let p1 = 1.0 - st.q[0];
    let l = k - (lam + v) * p1 / lam;
    let w = k / (v * p1) - 1.0 / lam - 1.0 / v;
    Ok(PerformanceReport {
        v,
        p1,
        l,
        w,
        ls: l + p1,
        ws: w + 1.0 / v,
        e_bp: bp.mean,
        q: st.q,
        c: st.c,
        p0,
    })
}

pub fn performance_metrics(
    p: &QueueParams,
    dist: &dyn HoldingTime,
) -> Result<PerformanceReport, AnalyticError> {
    performance_metrics_with(p, dist, recover_p0)
}
