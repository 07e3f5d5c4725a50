//! Replicated Monte Carlo estimates of stationary and transient quantities.
//!
//! Replications run in parallel and are merged in replication order, so the
//! output does not depend on the thread count.

mod ks;

use rayon::prelude::*;

pub use ks::{ks_two_sample, KsResult};

use crate::model::{
    check_stability, Boundary, Discipline, Estimate, MixedDistribution, QueueConfig,
    SimulationSummary,
};
use crate::recursion::{DrawScheme, PathSimulator};
use crate::{Error, Result};

/// Quantile of balking exceedances over `K` that bounds the histogram.
const EXCEEDANCE_QUANTILE: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub n_customers: usize,
    pub burn_in: usize,
    pub replications: usize,
    pub seed: u64,
    /// Histogram bins on `(0, K)`.
    pub grid_size: usize,
    pub scheme: DrawScheme,
}

impl SimulationOptions {
    /// Burn-in defaults to 10% of the path, at least 1000 customers.
    pub fn new(n_customers: usize, replications: usize, seed: u64) -> Self {
        Self {
            n_customers,
            burn_in: default_burn_in(n_customers),
            replications,
            seed,
            grid_size: 200,
            scheme: DrawScheme::Fresh,
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_grid_size(mut self, grid_size: usize) -> Self {
        self.grid_size = grid_size;
        self
    }

    pub fn with_scheme(mut self, scheme: DrawScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

pub fn default_burn_in(n_customers: usize) -> usize {
    (n_customers / 10)
        .max(1000)
        .min(n_customers.saturating_sub(1))
}

/// Counts from one replication.
#[derive(Debug, Clone, Default)]
struct Tally {
    samples: u64,
    zeros: u64,
    lost: u64,
    sum_w: f64,
    // bins of width h from 0; under reneging only (0, K) is binned
    bins: Vec<u64>,
}

impl Tally {
    fn bin(&mut self, index: usize) {
        if index >= self.bins.len() {
            self.bins.resize(index + 1, 0);
        }
        self.bins[index] += 1;
    }

    fn merge(&mut self, other: &Tally) {
        self.samples += other.samples;
        self.zeros += other.zeros;
        self.lost += other.lost;
        self.sum_w += other.sum_w;
        if other.bins.len() > self.bins.len() {
            self.bins.resize(other.bins.len(), 0);
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }
}

fn run_replication(config: &QueueConfig, options: &SimulationOptions, rep: u64) -> Tally {
    let k = config.deadline;
    let n_bins = options.grid_size;
    let h = k / n_bins as f64;
    let mut tally = Tally {
        bins: vec![0; n_bins],
        ..Tally::default()
    };
    let sim = PathSimulator::new(config, options.seed, rep, options.scheme);
    for record in sim.take(options.n_customers).skip(options.burn_in) {
        let w = record.w;
        tally.samples += 1;
        tally.sum_w += w;
        if record.lost {
            tally.lost += 1;
        }
        if w == 0.0 {
            tally.zeros += 1;
            continue;
        }
        match config.discipline {
            Discipline::Reneging if record.lost => {}
            Discipline::Reneging => tally.bin(((w / h) as usize).min(n_bins - 1)),
            Discipline::Balking => tally.bin((w / h) as usize),
        }
    }
    tally
}

/// Mean across replications with the standard error of that mean.
fn between_replications(values: &[f64]) -> Estimate {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let se = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    };
    Estimate { value: mean, se }
}

/// Node densities whose trapezoid integral equals the binned mass exactly.
fn node_density(bin_density: &[f64]) -> Vec<f64> {
    let m = bin_density.len();
    let mut f = Vec::with_capacity(m + 1);
    f.push(bin_density[0]);
    for i in 1..m {
        f.push(0.5 * (bin_density[i - 1] + bin_density[i]));
    }
    f.push(bin_density[m - 1]);
    f
}

/// Pools post-burn-in waits (reneging) or workloads (balking) across
/// replications.
pub fn estimate_stationary(
    config: &QueueConfig,
    options: &SimulationOptions,
) -> Result<SimulationSummary> {
    config.validate()?;
    if options.n_customers <= options.burn_in {
        return Err(Error::InvalidArgument(format!(
            "n_customers ({}) must exceed burn_in ({})",
            options.n_customers, options.burn_in
        )));
    }
    if options.replications == 0 {
        return Err(Error::InvalidArgument(
            "replications must be at least 1".into(),
        ));
    }
    if options.grid_size == 0 {
        return Err(Error::InvalidArgument(
            "grid_size must be at least 1".into(),
        ));
    }

    let tallies: Vec<Tally> = (0..options.replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(config, options, rep))
        .collect();

    let per_rep = |f: fn(&Tally) -> f64| tallies.iter().map(f).collect::<Vec<_>>();
    let w0 = between_replications(&per_rep(|t| t.zeros as f64 / t.samples as f64));
    let bk = between_replications(&per_rep(|t| t.lost as f64 / t.samples as f64));
    let mean_wait = between_replications(&per_rep(|t| t.sum_w / t.samples as f64));

    let mut pooled = Tally::default();
    for t in &tallies {
        pooled.merge(t);
    }
    let total = pooled.samples as f64;
    let n_bins = options.grid_size;
    let h = config.deadline / n_bins as f64;
    let atom0 = pooled.zeros as f64 / total;

    let empirical = match config.discipline {
        Discipline::Reneging => {
            let d: Vec<f64> = pooled
                .bins
                .iter()
                .map(|&c| c as f64 / (total * h))
                .collect();
            let boundary = pooled.lost as f64 / total;
            MixedDistribution::new(atom0, h, node_density(&d), boundary, Boundary::AtomAtEnd)?
        }
        Discipline::Balking => {
            let exceed: u64 = pooled.bins.iter().skip(n_bins).sum();
            let mut top = n_bins;
            if exceed > 0 {
                let target = EXCEEDANCE_QUANTILE * exceed as f64;
                let mut acc = 0u64;
                for (i, &c) in pooled.bins.iter().enumerate().skip(n_bins) {
                    acc += c;
                    top = i + 1;
                    if acc as f64 >= target {
                        break;
                    }
                }
            }
            let mut bins = pooled.bins.clone();
            bins.resize(top.max(bins.len()), 0);
            let inside: u64 = bins[..top].iter().sum();
            let d: Vec<f64> = bins[..top]
                .iter()
                .map(|&c| c as f64 / (total * h))
                .collect();
            let beyond = (pooled.samples - pooled.zeros - inside) as f64 / total;
            MixedDistribution::new(atom0, h, node_density(&d), beyond, Boundary::TailBeyond)?
        }
    };

    Ok(SimulationSummary {
        n_customers: options.n_customers,
        n_replications: options.replications,
        burn_in: options.burn_in,
        w0,
        bk,
        mean_wait,
        empirical,
        seed: options.seed,
        stable: check_stability(config).stable,
    })
}

/// Value of customer `index` (customer 0 starts an empty system) on
/// `replications` independent paths.
pub fn sample_at_index(
    config: &QueueConfig,
    index: usize,
    replications: usize,
    seed: u64,
    scheme: DrawScheme,
) -> Result<Vec<f64>> {
    config.validate()?;
    if replications == 0 {
        return Err(Error::InvalidArgument(
            "replications must be at least 1".into(),
        ));
    }
    Ok((0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut sim = PathSimulator::new(config, seed, rep, scheme);
            for _ in 0..index {
                sim.advance();
            }
            sim.state().w
        })
        .collect())
}

/// Fraction of independent paths whose `n`-th value exceeds `x`.
pub fn estimate_transient_tail(
    config: &QueueConfig,
    n: usize,
    x: f64,
    replications: usize,
    seed: u64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("x must be >= 0, got {x}")));
    }
    let values = sample_at_index(config, n, replications, seed, DrawScheme::Fresh)?;
    let hits: Vec<f64> = values
        .iter()
        .map(|&w| if w > x { 1.0 } else { 0.0 })
        .collect();
    Ok(between_replications(&hits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DistributionSpec;

    fn config(service: &str, vacation: &str, t: f64, k: f64, d: Discipline) -> QueueConfig {
        QueueConfig::new(t, k, service.parse().unwrap(), vacation.parse().unwrap(), d).unwrap()
    }

    #[test]
    fn deterministic_cycle_estimates() {
        // the path cycles 3, 4, 5 (lost) after burn-in
        let c = config("det:2", "det:1", 2.0, 5.0, Discipline::Reneging);
        let opts = SimulationOptions::new(10_000, 1, 1).with_burn_in(1000);
        let s = estimate_stationary(&c, &opts).unwrap();
        assert_eq!(s.w0.value, 0.0);
        assert!((s.bk.value - 1.0 / 3.0).abs() < 1e-3);
        assert!((s.mean_wait.value - 4.0).abs() < 1e-3);
        assert!(s.empirical.normalization_error() < 1e-12);
        assert_eq!(s.w0.se, 0.0);
    }

    #[test]
    fn summaries_are_reproducible() {
        let c = config("det:0.5", "exp:1", 2.0, 3.0, Discipline::Reneging);
        let opts = SimulationOptions::new(20_000, 8, 99);
        let a = estimate_stationary(&c, &opts).unwrap();
        let b = estimate_stationary(&c, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn counting_identity_holds() {
        for d in [Discipline::Reneging, Discipline::Balking] {
            let c = config("exp:2", "exp:1", 1.0, 2.0, d);
            let s = estimate_stationary(&c, &SimulationOptions::new(50_000, 4, 3)).unwrap();
            assert!(s.empirical.normalization_error() < 1e-12, "{d}");
            assert!(s.empirical.is_monotone(0.0));
            assert!((s.empirical.atom0() - s.w0.value).abs() < 1e-15);
            if d == Discipline::Reneging {
                assert!((s.empirical.boundary_mass() - s.bk.value).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_options() {
        let c = config("exp:2", "exp:1", 1.0, 2.0, Discipline::Reneging);
        assert!(
            estimate_stationary(&c, &SimulationOptions::new(100, 1, 0).with_burn_in(100)).is_err()
        );
        let mut opts = SimulationOptions::new(5000, 1, 0);
        opts.replications = 0;
        assert!(estimate_stationary(&c, &opts).is_err());
    }

    #[test]
    fn unstable_config_is_flagged_not_rejected() {
        let c = config("det:3", "exp:1", 2.0, 3.0, Discipline::Reneging);
        let s = estimate_stationary(&c, &SimulationOptions::new(5000, 2, 0)).unwrap();
        assert!(!s.stable);
    }

    #[test]
    fn standard_error_scales_with_replications() {
        let c = config("exp:2", "exp:1", 1.0, 2.0, Discipline::Reneging);
        let se = |r| {
            estimate_stationary(&c, &SimulationOptions::new(20_000, r, 5).with_burn_in(2000))
                .unwrap()
                .w0
                .se
        };
        let ratio = se(16) / se(64);
        assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn stationary_estimates_do_not_drift_with_path_length() {
        let c = config("det:0.5", "exp:1", 2.0, 3.0, Discipline::Reneging);
        let a = estimate_stationary(&c, &SimulationOptions::new(50_000, 8, 11)).unwrap();
        let b = estimate_stationary(&c, &SimulationOptions::new(100_000, 8, 12)).unwrap();
        for (x, y) in [(a.w0, b.w0), (a.bk, b.bk), (a.mean_wait, b.mean_wait)] {
            let combined = (x.se.powi(2) + y.se.powi(2)).sqrt();
            assert!((x.value - y.value).abs() < 3.0 * combined + 1e-12);
        }
    }

    #[test]
    fn transient_tail_examples() {
        let c = config("det:0.5", "exp:1", 2.0, 5.0, Discipline::Balking);
        let e = estimate_transient_tail(&c, 1, 0.0, 100_000, 1).unwrap();
        let exact = (-1.5f64).exp();
        assert!(
            (e.value - exact).abs() < 3.0 * e.se,
            "{} vs {exact}",
            e.value
        );
        assert_eq!(
            estimate_transient_tail(&c, 1, 50.0, 10_000, 1)
                .unwrap()
                .value,
            0.0
        );

        let c = config("det:3", "exp:1", 2.0, 5.0, Discipline::Balking);
        let e = estimate_transient_tail(&c, 1, 0.0, 10_000, 1).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.se, 0.0);
        assert!(estimate_transient_tail(&c, 0, 0.0, 10, 1).is_err());
    }

    #[test]
    fn indexed_and_fresh_draws_agree_in_law() {
        let c = config("exp:2", "exp:1", 1.0, 2.0, Discipline::Reneging);
        let a = sample_at_index(&c, 60, 20_000, 1, DrawScheme::Fresh).unwrap();
        let b = sample_at_index(&c, 60, 20_000, 2, DrawScheme::Indexed).unwrap();
        assert!(ks_two_sample(&a, &b).p_value > 0.001);
        let c = c.with_discipline(Discipline::Balking);
        let tab = DistributionSpec::tabulated(vec![(0.0, 0.0), (0.5, 0.2), (1.0, 1.0)]).unwrap();
        let c = QueueConfig { service: tab, ..c };
        let a = sample_at_index(&c, 60, 20_000, 3, DrawScheme::Fresh).unwrap();
        let b = sample_at_index(&c, 60, 20_000, 4, DrawScheme::Indexed).unwrap();
        assert!(ks_two_sample(&a, &b).p_value > 0.001);
    }
}
