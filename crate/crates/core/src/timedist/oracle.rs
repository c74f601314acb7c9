//! Direct-quadrature evaluations of the uplink-plus-service density (linear
//! capacity) and of the full defective round-trip cdf (nonlinear capacity).
//! They share no code with the grid engine and serve as its test oracles.

use thiserror::Error;

use crate::channel::{CapacityMode, ChannelModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle needs a {expected} channel")]
    WrongMode { expected: CapacityMode },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("quadrature did not converge (estimate {integral}, error {error})")]
    NoConvergence { integral: f64, error: f64 },
}

const TOL: f64 = 1e-12;

/// Double-exponential quadrature over `[a, b]` split into `parts` panels.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, parts: usize) -> Result<f64, OracleError> {
    if b <= a {
        return Ok(0.0);
    }
    let width = (b - a) / parts as f64;
    let (mut sum, mut err) = (0.0, 0.0);
    for i in 0..parts {
        let lo = a + width * i as f64;
        let hi = if i + 1 == parts { b } else { lo + width };
        let out = quadrature::double_exponential::integrate(&f, lo, hi, TOL);
        sum += out.integral;
        err += out.error_estimate;
    }
    if !sum.is_finite() || err > 1e-8 * sum.abs() + 1e-12 {
        return Err(OracleError::NoConvergence {
            integral: sum,
            error: err,
        });
    }
    Ok(sum)
}

fn check(
    channel: &ChannelModel,
    expected: CapacityMode,
    mu: f64,
    timeout: f64,
) -> Result<(), OracleError> {
    if channel.mode != expected {
        return Err(OracleError::WrongMode { expected });
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(OracleError::InvalidParameter {
            name: "mu",
            value: mu,
        });
    }
    if !(timeout.is_finite() && timeout > 0.0) {
        return Err(OracleError::InvalidParameter {
            name: "timeout",
            value: timeout,
        });
    }
    Ok(())
}

/// Density of `Y = U + S` at `y`, `U` the uplink time restricted to
/// `(0, T]` and `S ~ Exp(mu)`, under linear capacity:
///
/// `f_Y(y) = c mu e^{-mu y} int_{1/min(y,T)}^inf e^{-c r + mu/r} dr`,
/// `c = alpha N ln 2`.
pub fn fy_linear_oracle(
    y: f64,
    channel: &ChannelModel,
    mu: f64,
    timeout: f64,
) -> Result<f64, OracleError> {
    check(channel, CapacityMode::Linear, mu, timeout)?;
    if y.is_nan() || y <= 0.0 {
        return Ok(0.0);
    }
    let c = channel.alpha * channel.noise_power * std::f64::consts::LN_2;
    let a = 1.0 / y.min(timeout);
    let lead = -mu * y - c * a;
    if lead < -745.0 {
        return Ok(0.0);
    }
    // r = a + w / c pulls e^{-c a} out of the integral
    let g = |w: f64| (-w + mu / (a + w / c)).exp();
    let tail = integrate(g, 0.0, 5.0, 2)? + integrate(g, 5.0, 60.0, 4)?;
    Ok(mu * lead.exp() * tail)
}

/// Defective cdf of uplink + service + downlink, both links restricted to
/// `(0, T]`, under nonlinear capacity.
///
/// `F(t) = int_0^{min(t,T)} f_U(x) G(t - x) dx` where `G` is the defective
/// cdf of service plus downlink,
/// `G(x) = F_U(m)(1 - e^{-mu(x-m)}) + mu e^{-mu x} int_0^m e^{mu u} F_U(u) du`,
/// `m = min(x, T)`.
pub fn f_nonlinear_oracle(
    t: f64,
    channel: &ChannelModel,
    mu: f64,
    timeout: f64,
) -> Result<f64, OracleError> {
    check(channel, CapacityMode::Nonlinear, mu, timeout)?;
    if t.is_nan() || t <= 0.0 {
        return Ok(0.0);
    }
    let cdf = |u: f64| channel.com_time_cdf_unchecked(u);
    let service_down = |x: f64| -> Result<f64, OracleError> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let m = x.min(timeout);
        let inner = integrate(|u| (mu * (u - x)).exp() * cdf(u), 0.0, m, 2)?;
        Ok(cdf(m) * -(-mu * (x - m)).exp_m1() + mu * inner)
    };
    let upper = t.min(timeout);
    // G has a kink where t - x crosses T
    let mut cuts = vec![0.0, upper];
    if t - timeout > 0.0 && t - timeout < upper {
        cuts.insert(1, t - timeout);
    }
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let failure = std::cell::Cell::new(None);
        let part = integrate(
            |x| match service_down(t - x) {
                Ok(g) => channel.com_time_pdf(x) * g,
                Err(e) => {
                    failure.set(Some(e));
                    0.0
                }
            },
            w[0],
            w[1],
            2,
        )?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        total += part;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_density_vanishes_at_origin_and_integrates_to_success() {
        let ch = ChannelModel::linear(3.0, 1.0).unwrap();
        let (mu, t) = (0.1, 3.0);
        assert_eq!(fy_linear_oracle(1e-9, &ch, mu, t).unwrap(), 0.0);
        assert_eq!(fy_linear_oracle(0.0, &ch, mu, t).unwrap(), 0.0);
        let f = |y: f64| fy_linear_oracle(y, &ch, mu, t).unwrap();
        let head = quadrature::double_exponential::integrate(f, 0.0, t, 1e-10).integral;
        let body = quadrature::double_exponential::integrate(f, t, 120.0, 1e-10).integral;
        let tail = f(120.0) / mu; // exponential tail beyond the last panel
        let p = ch.success_probability(t).unwrap();
        assert_relative_eq!(head + body + tail, p, epsilon = 1e-6);
    }

    #[test]
    fn nonlinear_cdf_limits() {
        let ch = ChannelModel::nonlinear(3.0, 2.0, 1.0).unwrap();
        let (mu, t) = (0.1, 3.0);
        assert_eq!(f_nonlinear_oracle(-1.0, &ch, mu, t).unwrap(), 0.0);
        assert_eq!(f_nonlinear_oracle(0.0, &ch, mu, t).unwrap(), 0.0);
        let p = ch.success_probability(t).unwrap();
        let far = f_nonlinear_oracle(400.0, &ch, mu, t).unwrap();
        assert_relative_eq!(far, p * p, epsilon = 1e-6);
        let mut prev = 0.0;
        for i in 1..20 {
            let v = f_nonlinear_oracle(i as f64, &ch, mu, t).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn modes_are_checked() {
        let lin = ChannelModel::linear(3.0, 1.0).unwrap();
        let nl = ChannelModel::nonlinear(3.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            fy_linear_oracle(1.0, &nl, 0.1, 3.0),
            Err(OracleError::WrongMode { .. })
        ));
        assert!(matches!(
            f_nonlinear_oracle(1.0, &lin, 0.1, 3.0),
            Err(OracleError::WrongMode { .. })
        ));
    }
}
