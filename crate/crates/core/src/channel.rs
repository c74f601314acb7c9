//! Quasi-static Rayleigh fading channel.
//!
//! The squared envelope of a Rayleigh channel is exponentially distributed,
//! so the received signal power `S` follows `P{S <= s} = 1 - exp(-alpha * s)`
//! with `alpha = 1 / (2 sigma^2)`. A packet is one normalized unit of data, so
//! the one-way communication time is `1 / C(S)` for the capacity law `C` of
//! the selected [`CapacityMode`].

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter {name} = {value} (must be positive and finite)")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
}

/// Capacity law linking signal power to rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityMode {
    /// `C = S / (N ln 2)`, the high-dimensional MIMO approximation.
    Linear,
    /// `C = B log2(1 + S / N)`, the SISO Shannon law.
    Nonlinear,
}

impl std::fmt::Display for CapacityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CapacityMode::Linear => f.write_str("linear"),
            CapacityMode::Nonlinear => f.write_str("nonlinear"),
        }
    }
}

/// Rayleigh channel configuration. `alpha` is the power-decay rate of the
/// exponential signal-power law; `bandwidth` only enters the nonlinear law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub mode: CapacityMode,
    pub alpha: f64,
    pub noise_power: f64,
    pub bandwidth: f64,
}

fn check_positive(name: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ChannelError::InvalidParameter { name, value })
    }
}

impl ChannelModel {
    pub fn new(
        mode: CapacityMode,
        alpha: f64,
        noise_power: f64,
        bandwidth: f64,
    ) -> Result<Self, ChannelError> {
        check_positive("alpha", alpha)?;
        check_positive("noise_power", noise_power)?;
        if mode == CapacityMode::Nonlinear {
            check_positive("bandwidth", bandwidth)?;
        }
        Ok(Self {
            mode,
            alpha,
            noise_power,
            bandwidth,
        })
    }

    pub fn linear(alpha: f64, noise_power: f64) -> Result<Self, ChannelError> {
        Self::new(CapacityMode::Linear, alpha, noise_power, 1.0)
    }

    pub fn nonlinear(alpha: f64, noise_power: f64, bandwidth: f64) -> Result<Self, ChannelError> {
        Self::new(CapacityMode::Nonlinear, alpha, noise_power, bandwidth)
    }

    /// Rayleigh scale parameter recovered from `alpha = 1 / (2 sigma^2)`.
    pub fn sigma(&self) -> f64 {
        (0.5 / self.alpha).sqrt()
    }

    /// CDF of the received signal power.
    pub fn signal_power_cdf(&self, s: f64) -> Result<f64, ChannelError> {
        if s.is_nan() || s < 0.0 {
            return Err(ChannelError::Domain {
                what: "signal power",
                value: s,
            });
        }
        Ok(-(-self.alpha * s).exp_m1())
    }

    pub fn capacity(&self, s: f64) -> Result<f64, ChannelError> {
        if s.is_nan() || s < 0.0 {
            return Err(ChannelError::Domain {
                what: "signal power",
                value: s,
            });
        }
        Ok(match self.mode {
            CapacityMode::Linear => s / (self.noise_power * LN_2),
            CapacityMode::Nonlinear => self.bandwidth * (s / self.noise_power).ln_1p() / LN_2,
        })
    }

    /// Time to push one unit packet at signal power `s`. Zero power never
    /// finishes and yields `+inf`, which every timeout truncates.
    pub fn com_time_from_power(&self, s: f64) -> Result<f64, ChannelError> {
        let c = self.capacity(s)?;
        Ok(if c > 0.0 { 1.0 / c } else { f64::INFINITY })
    }

    /// `alpha * N * ln 2`, the scale of the linear-law communication time.
    fn linear_scale(&self) -> f64 {
        self.alpha * self.noise_power * LN_2
    }

    /// Untruncated CDF of one-way communication time: the probability that
    /// the capacity is at least `1 / t`.
    pub fn com_time_cdf(&self, t: f64) -> Result<f64, ChannelError> {
        if t.is_nan() || t <= 0.0 {
            return Err(ChannelError::Domain {
                what: "communication time",
                value: t,
            });
        }
        Ok(self.com_time_cdf_unchecked(t))
    }

    pub(crate) fn com_time_cdf_unchecked(&self, t: f64) -> f64 {
        if t.is_infinite() {
            return 1.0;
        }
        match self.mode {
            CapacityMode::Linear => (-self.linear_scale() / t).exp(),
            CapacityMode::Nonlinear => {
                // 2^{1/(Bt)} - 1 without cancellation for large t
                let excess = (LN_2 / (self.bandwidth * t)).exp_m1();
                (-self.alpha * self.noise_power * excess).exp()
            }
        }
    }

    /// Density of the untruncated one-way communication time. Zero at `t <= 0`.
    pub fn com_time_pdf(&self, t: f64) -> f64 {
        if t.is_nan() || t <= 0.0 || t.is_infinite() {
            return 0.0;
        }
        match self.mode {
            CapacityMode::Linear => {
                let c = self.linear_scale();
                let x = c / t;
                if x > 745.0 {
                    return 0.0;
                }
                x / t * (-x).exp()
            }
            CapacityMode::Nonlinear => {
                let an = self.alpha * self.noise_power;
                let r = LN_2 / (self.bandwidth * t);
                if r > 700.0 {
                    return 0.0;
                }
                let log_cdf = -an * r.exp_m1();
                if log_cdf < -745.0 {
                    return 0.0;
                }
                // d/dt exp(-aN (e^r - 1)) with r = ln2 / (Bt)
                an * r / t * (r + log_cdf).exp()
            }
        }
    }

    /// Probability that one transmission finishes within `timeout`.
    pub fn success_probability(&self, timeout: f64) -> Result<f64, ChannelError> {
        self.com_time_cdf(timeout)
    }

    /// Inverse-transform sample of the communication time for a uniform
    /// variate `u` in the open interval (0, 1).
    pub fn sample_com_time(&self, u: f64) -> Result<f64, ChannelError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(ChannelError::Domain {
                what: "uniform variate",
                value: u,
            });
        }
        Ok(self.com_time_quantile(u))
    }

    pub(crate) fn com_time_quantile(&self, u: f64) -> f64 {
        let neg_log_u = -u.ln();
        if neg_log_u == 0.0 {
            return f64::INFINITY;
        }
        match self.mode {
            CapacityMode::Linear => self.linear_scale() / neg_log_u,
            CapacityMode::Nonlinear => {
                let an = self.alpha * self.noise_power;
                LN_2 / (self.bandwidth * (neg_log_u / an).ln_1p())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn power_cdf_values() {
        let ch = ChannelModel::linear(1.0, 1.0).unwrap();
        assert_eq!(ch.signal_power_cdf(0.0).unwrap(), 0.0);
        assert_relative_eq!(ch.signal_power_cdf(LN_2).unwrap(), 0.5, epsilon = 1e-15);
        let ch3 = ChannelModel::linear(3.0, 1.0).unwrap();
        assert_eq!(ch3.signal_power_cdf(f64::INFINITY).unwrap(), 1.0);
        assert!(ch.signal_power_cdf(-1.0).is_err());
    }

    #[test]
    fn capacity_values() {
        let nl = ChannelModel::nonlinear(1.0, 2.5, 1.0).unwrap();
        assert_relative_eq!(nl.capacity(2.5).unwrap(), 1.0, epsilon = 1e-15);
        let lin = ChannelModel::linear(1.0, 2.5).unwrap();
        assert_relative_eq!(lin.capacity(2.5 * LN_2).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(lin.capacity(0.0).unwrap(), 0.0);
        assert_eq!(nl.capacity(0.0).unwrap(), 0.0);
        assert_eq!(lin.com_time_from_power(0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn com_time_cdf_values() {
        let lin = ChannelModel::linear(1.0, 1.0).unwrap();
        assert_relative_eq!(lin.com_time_cdf(1.0).unwrap(), 0.5, epsilon = 1e-15);
        let nl = ChannelModel::nonlinear(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            nl.com_time_cdf(1.0).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert!(lin.com_time_cdf(1e-6).unwrap() < 1e-300);
        assert!(nl.com_time_cdf(1e-3).unwrap() == 0.0);
        assert!(lin.com_time_cdf(0.0).is_err());
        assert!(lin.com_time_cdf(-2.0).is_err());
    }

    #[test]
    fn success_probability_values() {
        let lin = ChannelModel::linear(3.0, 1.0).unwrap();
        assert_relative_eq!(lin.success_probability(3.0).unwrap(), 0.5, epsilon = 1e-15);
        let nl = ChannelModel::nonlinear(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            nl.success_probability(1.0).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert!(lin.success_probability(1e12).unwrap() > 1.0 - 1e-11);
    }

    #[test]
    fn sampling_inverts_cdf() {
        let lin = ChannelModel::linear(1.0, 1.0).unwrap();
        assert_relative_eq!(lin.sample_com_time(0.5).unwrap(), 1.0, epsilon = 1e-14);
        let nl = ChannelModel::nonlinear(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            nl.sample_com_time((-1.0f64).exp()).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert!(lin.sample_com_time(0.0).is_err());
        assert!(lin.sample_com_time(1.0).is_err());
        assert!(lin.sample_com_time(f64::NAN).is_err());
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        for ch in [
            ChannelModel::linear(3.0, 1.0).unwrap(),
            ChannelModel::nonlinear(3.0, 2.0, 1.0).unwrap(),
        ] {
            for &t in &[0.3, 0.8, 1.5, 3.0, 7.0] {
                let h = 1e-5;
                let fd =
                    (ch.com_time_cdf(t + h).unwrap() - ch.com_time_cdf(t - h).unwrap()) / (2.0 * h);
                assert_relative_eq!(ch.com_time_pdf(t), fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ChannelModel::linear(0.0, 1.0).is_err());
        assert!(ChannelModel::linear(1.0, -1.0).is_err());
        assert!(ChannelModel::nonlinear(1.0, 1.0, 0.0).is_err());
        assert!(ChannelModel::nonlinear(1.0, 1.0, f64::NAN).is_err());
        // bandwidth is irrelevant for the linear law
        assert!(ChannelModel::new(CapacityMode::Linear, 1.0, 1.0, 0.0).is_ok());
    }

    fn any_channel() -> impl Strategy<Value = ChannelModel> {
        (any::<bool>(), 0.05f64..10.0, 0.1f64..5.0, 0.2f64..5.0).prop_map(|(lin, a, n, b)| {
            if lin {
                ChannelModel::linear(a, n).unwrap()
            } else {
                ChannelModel::nonlinear(a, n, b).unwrap()
            }
        })
    }

    proptest! {
        #[test]
        fn cdf_monotone_in_unit_interval(ch in any_channel(), t1 in 1e-3f64..100.0, dt in 0.0f64..50.0) {
            let a = ch.com_time_cdf(t1).unwrap();
            let b = ch.com_time_cdf(t1 + dt).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a);
        }

        #[test]
        fn quantile_round_trip(ch in any_channel(), lu in -13.8f64..-1e-6) {
            // u spans [1e-6, 1 - 1e-6] on a log scale of -ln(u)
            let u = lu.exp().clamp(1e-6, 1.0 - 1e-6);
            let t = ch.sample_com_time(u).unwrap();
            let back = ch.com_time_cdf(t).unwrap();
            prop_assert!(((back - u) / u).abs() <= 1e-10, "u={u} back={back}");
        }

        #[test]
        fn capacity_strictly_increasing(ch in any_channel(), s in 0.0f64..50.0, ds in 1e-6f64..10.0) {
            prop_assert!(ch.capacity(s + ds).unwrap() > ch.capacity(s).unwrap());
        }
    }
}
