//! Waiting-time and workload distributions for a single-server queue with
//! periodic arrivals, single vacations and a constant deadline `K`.
//!
//! Customers arrive every `T` time units. After each service completion the
//! server takes exactly one vacation. A customer who would wait `K` or more is
//! lost: under *reneging* the customer joins and abandons, under *balking* the
//! customer sees the workload on arrival and refuses to join.
//!
//! Three independent routes to the stationary law are provided and can be
//! cross-checked against one another:
//!
//! * [`recursion`] / [`montecarlo`]: exact path simulation of the waiting-time
//!   and workload recursions, replicated with standard errors;
//! * [`kernel`] / [`solver`]: discretized fixed-point solution of the
//!   stationary integral equations, plus the transient iteration;
//! * [`closedform`]: the explicit solutions for deterministic or exponential
//!   service with exponential vacations.
//!
//! [`compare`] runs the applicable routes against each other and [`cli`] is
//! the command-line front end.

pub mod cli;
pub mod closedform;
pub mod compare;
mod error;
pub mod kernel;
pub mod model;
pub mod montecarlo;
pub mod recursion;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    check_stability, Boundary, Discipline, DistributionSpec, Estimate, MixedDistribution,
    QueueConfig, SimulationSummary, Stability,
};
