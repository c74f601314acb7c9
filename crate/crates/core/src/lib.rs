//! Finite-source retrial queue of clients talking to a database server over
//! a Rayleigh fading channel.
//!
//! * [`channel`] - fading channel and communication-time law.
//! * [`timedist`] - grid distributions of the server-holding time.
//! * [`analytic`] - stationary solution, performance metrics, busy period.
//! * [`oracle`] - exact Markov-chain solution of the all-exponential case.
//! * [`simulator`] - discrete-event simulation of the protocol.
//! * [`sweep`] - parameter sweeps in a fixed CSV layout.

// `!(x > 0.0)` guards reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod channel;
pub mod oracle;
pub mod simulator;
pub mod sweep;
pub mod timedist;
pub mod validation;
