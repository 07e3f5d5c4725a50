//! Customer-by-customer waiting-time recursions.
//!
//! Random numbers come from one ChaCha8 stream pair per replication: stream
//! `2r` feeds service times and stream `2r + 1` feeds vacations, so a lost
//! customer (which consumes no draws) never shifts the other sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{Discipline, QueueConfig};
use crate::{Error, Result};

/// Outcome of one reneging step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenegingStep {
    pub w_next: f64,
    pub lost: bool,
}

/// Waiting time of the arrival that comes `k + 1` periods after the last
/// served customer, who waited `w_last_served` and brought work `sigma + v`.
///
/// A customer whose uncapped wait reaches `K` is lost and stored as `K`.
pub fn next_reneging(
    w_last_served: f64,
    k: usize,
    sigma: f64,
    v: f64,
    period: f64,
    deadline: f64,
) -> Result<RenegingStep> {
    if w_last_served >= deadline {
        return Err(Error::InvalidArgument(format!(
            "anchor wait {w_last_served} is not below K = {deadline}"
        )));
    }
    let uncapped = (w_last_served + sigma + v - (k as f64 + 1.0) * period).max(0.0);
    Ok(RenegingStep {
        w_next: uncapped.min(deadline),
        lost: uncapped >= deadline,
    })
}

/// One step of the balking workload recursion. Arrivals that find a
/// workload of at least `K` leave without adding work.
pub fn step_balking(w: f64, sigma: f64, v: f64, period: f64, deadline: f64) -> f64 {
    if w < deadline {
        (w + sigma + v - period).max(0.0)
    } else {
        (w - period).max(0.0)
    }
}

/// State of a path just before customer `n` is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathState {
    pub n: usize,
    /// Wait of customer `n` (reneging) or workload seen by it (balking).
    pub w: f64,
    /// Number of customers served before customer `n`.
    pub served_count: usize,
    /// Customers lost since the last served one (reneging only).
    pub losses_since_last_service: usize,
}

/// Wait (or workload) of one customer and whether it was lost or balked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CustomerRecord {
    pub w: f64,
    pub lost: bool,
}

/// How draws are tied to customers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawScheme {
    /// A fresh `(sigma, v)` pair for every served customer.
    Fresh,
    /// `sigma` indexed by customer number, `v` by served count.
    Indexed,
}

/// Streams a single sample path.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    config: QueueConfig,
    scheme: DrawScheme,
    service_rng: ChaCha8Rng,
    vacation_rng: ChaCha8Rng,
    state: PathState,
    // reneging anchor: wait of the last served customer and its work
    anchor_w: f64,
    anchor_work: f64,
}

impl PathSimulator {
    pub fn new(config: &QueueConfig, seed: u64, replication: u64, scheme: DrawScheme) -> Self {
        let mut service_rng = ChaCha8Rng::seed_from_u64(seed);
        service_rng.set_stream(2 * replication);
        let mut vacation_rng = ChaCha8Rng::seed_from_u64(seed);
        vacation_rng.set_stream(2 * replication + 1);
        Self {
            config: config.clone(),
            scheme,
            service_rng,
            vacation_rng,
            state: PathState {
                n: 0,
                w: 0.0,
                served_count: 0,
                losses_since_last_service: 0,
            },
            anchor_w: 0.0,
            anchor_work: 0.0,
        }
    }

    pub fn state(&self) -> PathState {
        self.state
    }

    fn draw_service(&mut self) -> f64 {
        self.config.service.sample(self.service_rng.random())
    }

    fn draw_vacation(&mut self) -> f64 {
        self.config.vacation.sample(self.vacation_rng.random())
    }

    /// Records customer `n` and advances to `n + 1`.
    pub fn advance(&mut self) -> CustomerRecord {
        let (t, k) = (self.config.period, self.config.deadline);
        let w = self.state.w;
        let enters = w < k;
        // the indexed scheme consumes sigma_n for every customer
        let sigma = match self.scheme {
            DrawScheme::Indexed => Some(self.draw_service()),
            DrawScheme::Fresh => None,
        };
        let work = if enters {
            let sigma = match sigma {
                Some(s) => s,
                None => self.draw_service(),
            };
            Some(sigma + self.draw_vacation())
        } else {
            None
        };
        let record = CustomerRecord { w, lost: !enters };

        match self.config.discipline {
            Discipline::Reneging => {
                if let Some(work) = work {
                    self.anchor_w = w;
                    self.anchor_work = work;
                    self.state.losses_since_last_service = 0;
                } else {
                    self.state.losses_since_last_service += 1;
                }
                let step = next_reneging(
                    self.anchor_w,
                    self.state.losses_since_last_service,
                    self.anchor_work,
                    0.0,
                    t,
                    k,
                )
                .expect("anchor waits stay below K");
                self.state.w = step.w_next;
            }
            Discipline::Balking => {
                self.state.w = step_balking(w, work.unwrap_or(0.0), 0.0, t, k);
            }
        }
        if enters {
            self.state.served_count += 1;
        }
        self.state.n += 1;
        record
    }
}

impl Iterator for PathSimulator {
    type Item = CustomerRecord;

    fn next(&mut self) -> Option<CustomerRecord> {
        Some(self.advance())
    }
}

fn collect_path(
    config: &QueueConfig,
    n_customers: usize,
    seed: u64,
    scheme: DrawScheme,
) -> Result<Vec<CustomerRecord>> {
    if n_customers == 0 {
        return Err(Error::InvalidArgument(
            "n_customers must be at least 1".into(),
        ));
    }
    config.validate()?;
    Ok(PathSimulator::new(config, seed, 0, scheme)
        .take(n_customers)
        .collect())
}

/// Path of `n_customers` starting from an empty system, fresh draws.
pub fn run_path(
    config: &QueueConfig,
    n_customers: usize,
    seed: u64,
) -> Result<Vec<CustomerRecord>> {
    collect_path(config, n_customers, seed, DrawScheme::Fresh)
}

/// Same as [`run_path`] but with `sigma_n` drawn per customer and vacations
/// indexed by the served count.
pub fn run_path_indexed(
    config: &QueueConfig,
    n_customers: usize,
    seed: u64,
) -> Result<Vec<CustomerRecord>> {
    collect_path(config, n_customers, seed, DrawScheme::Indexed)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::DistributionSpec;
    use proptest::prelude::*;

    fn exp_config() -> impl Strategy<Value = QueueConfig> {
        (0.0f64..2.0, 0.3f64..3.0, 0.5f64..3.0, 0.3f64..4.0).prop_map(|(sigma, lambda, t, k)| {
            QueueConfig::new(
                t,
                k,
                DistributionSpec::deterministic(sigma).unwrap(),
                DistributionSpec::exponential(lambda).unwrap(),
                Discipline::Reneging,
            )
            .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn reneging_is_the_capped_balking_workload(config in exp_config(), seed in any::<u64>()) {
            let k = config.deadline;
            let ren = run_path(&config, 500, seed).unwrap();
            let bal = run_path(&config.with_discipline(Discipline::Balking), 500, seed).unwrap();
            for (r, b) in ren.iter().zip(&bal) {
                prop_assert!(r.w <= k);
                prop_assert!(r.w <= b.w + 1e-9);
                prop_assert!((r.w - b.w.min(k)).abs() < 1e-9);
                prop_assert_eq!(r.lost, b.lost);
            }
        }

        #[test]
        fn paths_are_deterministic(config in exp_config(), seed in any::<u64>()) {
            let a = run_path(&config, 200, seed).unwrap();
            let b = run_path(&config, 200, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let a = run_path_indexed(&config, 200, seed).unwrap();
            let b = run_path_indexed(&config, 200, seed).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn balking_decays_by_period_above_k(config in exp_config(), seed in any::<u64>()) {
            let (t, k) = (config.period, config.deadline);
            let bal = run_path(&config.with_discipline(Discipline::Balking), 500, seed).unwrap();
            for pair in bal.windows(2) {
                prop_assert!(pair[0].w >= 0.0);
                if pair[0].w >= k {
                    prop_assert!(pair[0].lost);
                    prop_assert_eq!(pair[1].w, (pair[0].w - t).max(0.0));
                }
            }
        }
    }
}
