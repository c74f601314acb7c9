//! Ground truth for the all-exponential case and a sample-versus-cdf
//! distance.
//!
//! With an instantaneous channel and exponential holding time the queue is a
//! `2K`-state Markov chain over (server busy, clients in orbit). Stationary
//! probabilities and the mean busy period are computed with subtraction-free
//! state reduction, which stays accurate when some states are visited with
//! astronomically small probability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{binomial, PerformanceReport};
use crate::timedist::MixedDistribution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("singular chain: state {0} has no way out")]
    Singular(usize),
    #[error("no samples")]
    EmptySample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtmcSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// Rate of the exponential holding time.
    pub nu: f64,
}

impl CtmcSpec {
    fn validate(&self) -> Result<(), OracleError> {
        if self.k < 2 {
            return Err(OracleError::InvalidParameter {
                name: "K",
                value: self.k as f64,
            });
        }
        for (name, value) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("nu", self.nu),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(OracleError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// Index of state (busy, orbit size).
    pub fn state(&self, busy: bool, n: usize) -> usize {
        usize::from(busy) * self.k + n
    }

    /// Dense transition-rate matrix (zero diagonal).
    pub fn rates(&self) -> Vec<Vec<f64>> {
        let k = self.k;
        let mut r = vec![vec![0.0; 2 * k]; 2 * k];
        for n in 0..k {
            let idle = self.state(false, n);
            let busy = self.state(true, n);
            r[idle][busy] += (k - n) as f64 * self.lambda;
            if n > 0 {
                r[idle][self.state(true, n - 1)] += n as f64 * self.gamma;
            }
            if n + 1 < k {
                r[busy][self.state(true, n + 1)] += (k - 1 - n) as f64 * self.lambda;
            }
            r[busy][idle] += self.nu;
        }
        r
    }
}

/// Stationary distribution by Grassmann-Taksar-Heyman elimination.
#[allow(clippy::needless_range_loop)]
pub fn stationary(rates: &[Vec<f64>]) -> Result<Vec<f64>, OracleError> {
    let n = rates.len();
    let mut a: Vec<Vec<f64>> = rates.to_vec();
    let mut exit = vec![0.0; n];
    for k in (1..n).rev() {
        let s: f64 = a[k][..k].iter().sum();
        if !(s > 0.0) {
            return Err(OracleError::Singular(k));
        }
        exit[k] = s;
        for i in 0..k {
            let f = a[i][k] / s;
            if f == 0.0 {
                continue;
            }
            for j in 0..k {
                if j != i {
                    a[i][j] += f * a[k][j];
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * a[i][k]).sum::<f64>() / exit[k];
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    Ok(pi)
}

/// Mean first-passage time from `source` to `target` by censoring every
/// other state out of the embedded jump chain.
pub fn mean_first_passage(
    rates: &[Vec<f64>],
    source: usize,
    target: usize,
) -> Result<f64, OracleError> {
    let n = rates.len();
    let mut p = vec![vec![0.0; n]; n];
    let mut tau = vec![0.0; n];
    for i in 0..n {
        let out: f64 = (0..n).filter(|&j| j != i).map(|j| rates[i][j]).sum();
        if !(out > 0.0) {
            return Err(OracleError::Singular(i));
        }
        tau[i] = 1.0 / out;
        for j in (0..n).filter(|&j| j != i) {
            p[i][j] = rates[i][j] / out;
        }
    }
    let mut alive: Vec<bool> = vec![true; n];
    for k in (0..n).filter(|&k| k != source && k != target) {
        alive[k] = false;
        // probability of leaving k, summed without subtraction
        let leave: f64 = (0..n)
            .filter(|&j| j != k && alive[j])
            .map(|j| p[k][j])
            .sum();
        if !(leave > 0.0) {
            return Err(OracleError::Singular(k));
        }
        for i in (0..n).filter(|&i| alive[i]) {
            let f = p[i][k] / leave;
            if f == 0.0 {
                continue;
            }
            tau[i] += f * tau[k];
            for j in (0..n).filter(|&j| alive[j]) {
                p[i][j] += f * p[k][j];
            }
            p[i][k] = 0.0;
        }
    }
    let out = p[source][target];
    if !(out > 0.0) {
        return Err(OracleError::Singular(source));
    }
    Ok(tau[source] / out)
}

/// Every metric of the all-exponential queue, solved exactly.
pub fn ctmc_metrics(spec: &CtmcSpec) -> Result<PerformanceReport, OracleError> {
    spec.validate()?;
    let k = spec.k;
    let rates = spec.rates();
    let pi = stationary(&rates)?;
    let p0: Vec<f64> = (0..k).map(|n| pi[spec.state(false, n)]).collect();
    let p1: f64 = (0..k).map(|n| pi[spec.state(true, n)]).sum();
    let l: f64 = (0..k)
        .map(|n| n as f64 * (pi[spec.state(false, n)] + pi[spec.state(true, n)]))
        .sum();
    let w = l / (spec.nu * p1);
    let e_bp = mean_first_passage(&rates, spec.state(true, 0), spec.state(false, 0))?;
    // factorial moments of the idle-server orbit distribution
    let q: Vec<f64> = (0..k)
        .map(|m| (0..k).map(|n| binomial(k - 1 - n, m) * p0[n]).sum())
        .collect();
    let c = q.iter().map(|x| x / q[k - 1]).collect();
    Ok(PerformanceReport {
        v: spec.nu,
        p1,
        l,
        w,
        ls: l + p1,
        ws: w + 1.0 / spec.nu,
        e_bp,
        q,
        c,
        p0,
    })
}

/// Kolmogorov-Smirnov distance between `d` and the empirical distribution
/// of `samples`. Infinite samples stand for outcomes outside the measure
/// (for a defective `d`, the missing mass).
pub fn ks_distance(d: &MixedDistribution, samples: &[f64]) -> Result<f64, OracleError> {
    if samples.is_empty() {
        return Err(OracleError::EmptySample);
    }
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    xs.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        worst = worst
            .max((d.cdf(x) - j as f64 / n).abs())
            .max((d.cdf_left(x) - i as f64 / n).abs());
        i = j;
    }
    worst = worst.max((d.total_mass() - xs.len() as f64 / n).abs());
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timedist::exponential_dist;
    use approx::assert_relative_eq;

    fn unit() -> CtmcSpec {
        CtmcSpec {
            k: 2,
            lambda: 1.0,
            gamma: 1.0,
            nu: 1.0,
        }
    }

    #[test]
    fn two_clients_by_hand() {
        let s = unit();
        let pi = stationary(&s.rates()).unwrap();
        let expected = [1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 4.0 / 9.0];
        for (a, b) in pi.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
        let r = ctmc_metrics(&s).unwrap();
        assert_relative_eq!(r.p1, 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(r.e_bp, 4.0, epsilon = 1e-13);
        assert_relative_eq!(r.q[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(r.q[1], 1.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn normalization_and_identities() {
        let s = CtmcSpec {
            k: 9,
            lambda: 0.4,
            gamma: 2.2,
            nu: 1.3,
        };
        let pi = stationary(&s.rates()).unwrap();
        assert_relative_eq!(pi.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let r = ctmc_metrics(&s).unwrap();
        assert_relative_eq!(r.l, s.nu * r.p1 * r.w, max_relative = 1e-12);
        let idle = 1.0 / (s.k as f64 * s.lambda);
        assert_relative_eq!(r.p0[0], idle / (idle + r.e_bp), max_relative = 1e-10);
    }

    #[test]
    fn balance_holds() {
        let s = CtmcSpec {
            k: 6,
            lambda: 3.0,
            gamma: 0.2,
            nu: 0.5,
        };
        let r = s.rates();
        let pi = stationary(&r).unwrap();
        for j in 0..pi.len() {
            let inflow: f64 = (0..pi.len()).map(|i| pi[i] * r[i][j]).sum();
            let outflow: f64 = pi[j] * r[j].iter().sum::<f64>();
            assert_relative_eq!(inflow, outflow, max_relative = 1e-12);
        }
    }

    #[test]
    fn ks_examples() {
        let d = exponential_dist(1.0, 1e-10, 0.001).unwrap();
        let med = d.median();
        let one = ks_distance(&d, &[med]).unwrap();
        assert_relative_eq!(one, 0.5, epsilon = 1e-6);
        let shifted: Vec<f64> = (1..2000).map(|i| 1.0 - (i as f64 / 2000.0).ln()).collect();
        assert!(ks_distance(&d, &shifted).unwrap() > 0.1);
        let own: Vec<f64> = (1..20000).map(|i| -(i as f64 / 20000.0).ln()).collect();
        assert!(ks_distance(&d, &own).unwrap() < 0.001);
        assert!(ks_distance(&d, &[]).is_err());
    }
}
