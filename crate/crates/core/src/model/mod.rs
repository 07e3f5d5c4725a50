//! Model parameterization, elementary distribution operations and the
//! stability check.

mod distribution;
mod mixed;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use distribution::{DistributionSpec, Piece, QuantileTable};
pub(crate) use mixed::trapezoid_weights;
pub use mixed::{Boundary, MixedDistribution};

use crate::kernel::ConvolutionLaw;
use crate::{Error, Result};

/// Default absolute tolerance for probability comparisons.
pub const PROBABILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    /// Customers join and abandon once their wait would reach `K`.
    Reneging,
    /// Customers refuse to join when the workload on arrival is at least `K`.
    Balking,
}

impl FromStr for Discipline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reneging" => Ok(Self::Reneging),
            "balking" => Ok(Self::Balking),
            other => Err(Error::InvalidConfig(format!(
                "unknown discipline `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reneging => "reneging",
            Self::Balking => "balking",
        })
    }
}

/// Full model parameterization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueConfig {
    /// Inter-arrival period `T`.
    #[serde(rename = "T")]
    pub period: f64,
    /// Deadline `K` on the waiting time.
    #[serde(rename = "K")]
    pub deadline: f64,
    pub service: DistributionSpec,
    pub vacation: DistributionSpec,
    pub discipline: Discipline,
}

impl QueueConfig {
    pub fn new(
        period: f64,
        deadline: f64,
        service: DistributionSpec,
        vacation: DistributionSpec,
        discipline: Discipline,
    ) -> Result<Self> {
        let config = Self {
            period,
            deadline,
            service,
            vacation,
            discipline,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "T must be > 0, got {}",
                self.period
            )));
        }
        if !(self.deadline > 0.0 && self.deadline.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "K must be > 0, got {}",
                self.deadline
            )));
        }
        self.service.validate()?;
        self.vacation.validate()
    }

    pub fn with_discipline(&self, discipline: Discipline) -> Self {
        Self {
            discipline,
            ..self.clone()
        }
    }

    /// Mean of `service + vacation`.
    pub fn mean_cycle(&self) -> f64 {
        self.service.mean() + self.vacation.mean()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stability {
    /// `P(service + vacation < T)`.
    pub probability: f64,
    pub stable: bool,
}

/// Evaluates `P(sigma + v < T)`; the limit law exists when it is positive.
pub fn check_stability(config: &QueueConfig) -> Stability {
    let t = config.period;
    let probability = match (&config.service, &config.vacation) {
        // the convolution law excludes equal exponential rates; the Erlang-2
        // CDF covers that case here
        (DistributionSpec::Exponential { rate: a }, DistributionSpec::Exponential { rate: b })
            if a == b =>
        {
            1.0 - (-a * t).exp() * (1.0 + a * t)
        }
        (service, vacation) => ConvolutionLaw::new(service, vacation)
            .expect("validated laws always convolve")
            .cdf_left(t),
    };
    Stability {
        probability,
        stable: probability > 0.0,
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Monte Carlo estimates of the stationary law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub n_customers: usize,
    pub n_replications: usize,
    pub burn_in: usize,
    /// `P(w = 0)`.
    pub w0: Estimate,
    /// Loss probability: `P(w = K)` under reneging, `P(w >= K)` under balking.
    pub bk: Estimate,
    pub mean_wait: Estimate,
    pub empirical: MixedDistribution,
    pub seed: u64,
    /// Result of [`check_stability`]; estimates of an unstable config describe
    /// a transient regime only.
    pub stable: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn config(service: DistributionSpec, vacation: DistributionSpec, t: f64) -> QueueConfig {
        QueueConfig::new(t, 3.0, service, vacation, Discipline::Reneging).unwrap()
    }

    #[test]
    fn stability_examples() {
        let det = |v| DistributionSpec::deterministic(v).unwrap();
        let exp = |r| DistributionSpec::exponential(r).unwrap();

        let s = check_stability(&config(det(3.0), exp(1.0), 2.0));
        assert_eq!(s.probability, 0.0);
        assert!(!s.stable);

        let s = check_stability(&config(det(0.5), exp(1.0), 2.0));
        assert!((s.probability - (1.0 - (-1.5f64).exp())).abs() < 1e-12);
        assert!(s.stable);

        let s = check_stability(&config(exp(2.0), exp(1.0), 1.0));
        let expected = 1.0 - 2.0 * (-1.0f64).exp() + (-2.0f64).exp();
        assert!((s.probability - expected).abs() < 1e-12);
        assert!((s.probability - 0.3996).abs() < 1e-4);

        // independent check by Monte Carlo over 10^6 draws of sigma + v
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| exp(2.0).sample(rng.random()) + exp(1.0).sample(rng.random()) < 1.0)
            .count();
        let p = hits as f64 / n as f64;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((p - expected).abs() < 4.0 * se);
    }

    #[test]
    fn stability_at_equal_rates_and_boundary() {
        let exp = |r| DistributionSpec::exponential(r).unwrap();
        let s = check_stability(&config(exp(1.0), exp(1.0), 1.0));
        assert!((s.probability - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-12);

        // sigma + v = 2 exactly: P(S < 2) = 0
        let det = |v| DistributionSpec::deterministic(v).unwrap();
        assert!(!check_stability(&config(det(1.5), det(0.5), 2.0)).stable);
    }

    #[test]
    fn invalid_configs() {
        let exp = DistributionSpec::exponential(1.0).unwrap();
        assert!(QueueConfig::new(0.0, 1.0, exp.clone(), exp.clone(), Discipline::Balking).is_err());
        assert!(
            QueueConfig::new(1.0, -1.0, exp.clone(), exp.clone(), Discipline::Balking).is_err()
        );
        let bad = DistributionSpec::Deterministic { value: -1.0 };
        assert!(QueueConfig::new(1.0, 1.0, bad, exp, Discipline::Balking).is_err());
        assert!("renege".parse::<Discipline>().is_err());
    }
}
