//! Cross-checks between simulation, the numerical solver and the explicit
//! solutions, plus the empirical check of the proposed balking tail.

use serde::Serialize;

use crate::closedform::{
    balking_transient_tail, ddet_exp_solution, dm_exp_solution, ClosedFormDDet, ClosedFormDM,
    StationaryLaw,
};
use crate::model::{
    Discipline, DistributionSpec, MixedDistribution, QueueConfig, SimulationSummary,
};
use crate::montecarlo::{estimate_stationary, estimate_transient_tail, SimulationOptions};
use crate::solver::{solve_balking_stationary, solve_reneging_stationary, StationarySolution};
use crate::Result;

/// Sup-norm CDF tolerance between any two laws.
pub const CDF_TOL: f64 = 0.005;
/// Sup-norm density tolerance between the solver and an explicit solution.
pub const DENSITY_TOL: f64 = 1e-4;
/// Loss probabilities must agree within this many standard errors.
pub const SE_TOL: f64 = 3.0;

pub const TAIL_REPORT_VERSION: u32 = 1;

/// An explicit stationary solution, when one applies to the configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum ClosedForm {
    DExp(ClosedFormDDet),
    MExp(ClosedFormDM),
}

impl ClosedForm {
    /// `None` unless the model reneges with exponential vacations and either
    /// deterministic or exponential service.
    pub fn for_config(config: &QueueConfig) -> Result<Option<Self>> {
        if config.discipline != Discipline::Reneging {
            return Ok(None);
        }
        let (t, k) = (config.period, config.deadline);
        Ok(match (&config.service, &config.vacation) {
            (DistributionSpec::Deterministic { value }, DistributionSpec::Exponential { rate }) => {
                Some(Self::DExp(ddet_exp_solution(*rate, *value, t, k)?))
            }
            (
                DistributionSpec::Exponential { rate: mu },
                DistributionSpec::Exponential { rate },
            ) => Some(Self::MExp(dm_exp_solution(*rate, *mu, t, k)?)),
            _ => None,
        })
    }

    pub fn law(&self) -> &dyn StationaryLaw {
        match self {
            Self::DExp(s) => s,
            Self::MExp(s) => s,
        }
    }
}

/// Sup of `|F - G|` over the nodes of `dist` below the deadline.
pub fn cdf_distance_to_law(dist: &MixedDistribution, law: &dyn StationaryLaw) -> f64 {
    let k = law.deadline();
    (0..=dist.intervals())
        .map(|i| dist.node(i))
        .filter(|&x| x < k)
        .map(|x| (dist.cdf(x) - law.cdf(x)).abs())
        .fold(0.0, f64::max)
}

/// Sup of `|f - g|` over all nodes of `dist`.
pub fn density_distance_to_law(dist: &MixedDistribution, law: &dyn StationaryLaw) -> f64 {
    dist.density()
        .iter()
        .enumerate()
        .map(|(i, f)| (f - law.density(dist.node(i))).abs())
        .fold(0.0, f64::max)
}

/// `|a - b| / se`; infinite when the standard error vanishes and the values differ.
pub fn se_units(a: f64, b: f64, se: f64) -> f64 {
    let d = (a - b).abs();
    if se > 0.0 {
        d / se
    } else if d < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            pass: value < threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub simulation: SimulationOptions,
    pub grid_size: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub config: QueueConfig,
    pub closedform: Option<ClosedForm>,
    pub simulation: SimulationSummary,
    pub solver: StationarySolution,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub fn solve_stationary(
    config: &QueueConfig,
    grid_size: usize,
    tol: f64,
    max_iter: usize,
) -> Result<StationarySolution> {
    match config.discipline {
        Discipline::Reneging => solve_reneging_stationary(config, grid_size, tol, max_iter),
        Discipline::Balking => solve_balking_stationary(config, grid_size, tol, max_iter),
    }
}

/// Runs every applicable method and checks each pair against the declared
/// tolerances.
pub fn run_comparison(config: &QueueConfig, options: &CompareOptions) -> Result<ComparisonReport> {
    let solver = solve_stationary(config, options.grid_size, options.tol, options.max_iter)?;
    let simulation = estimate_stationary(config, &options.simulation)?;
    let closedform = ClosedForm::for_config(config)?;

    let mut checks = Vec::new();
    let upto = match config.discipline {
        Discipline::Reneging => config.deadline,
        Discipline::Balking => simulation
            .empirical
            .x_max()
            .min(solver.distribution.x_max()),
    };
    checks.push(Check::below(
        "simulation_vs_solver_cdf",
        simulation
            .empirical
            .sup_cdf_distance(&solver.distribution, upto),
        CDF_TOL,
    ));
    checks.push(Check::below(
        "simulation_vs_solver_bk_se",
        se_units(simulation.bk.value, solver.bk, simulation.bk.se),
        SE_TOL,
    ));
    checks.push(Check::below(
        "solver_bk_self_consistency",
        (solver.bk - solver.bk_formula).abs(),
        10.0 * options.tol.max(1e-15) + f64::EPSILON,
    ));
    if let Some(cf) = &closedform {
        let law = cf.law();
        checks.push(Check::below(
            "simulation_vs_closedform_cdf",
            cdf_distance_to_law(&simulation.empirical, law),
            CDF_TOL,
        ));
        checks.push(Check::below(
            "simulation_vs_closedform_bk_se",
            se_units(simulation.bk.value, law.bk(), simulation.bk.se),
            SE_TOL,
        ));
        checks.push(Check::below(
            "solver_vs_closedform_density",
            density_distance_to_law(&solver.distribution, law),
            DENSITY_TOL,
        ));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ComparisonReport {
        config: config.clone(),
        closedform,
        simulation,
        solver,
        checks,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    /// The formula gives the tail of customer `n + 1`.
    pub n: usize,
    pub x: f64,
    pub formula: f64,
    pub estimate: f64,
    pub se: f64,
    /// `formula - estimate`.
    pub deviation: f64,
    pub deviation_se: f64,
    pub within_3se: bool,
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailValidation {
    pub version: u32,
    pub lambda: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(rename = "K")]
    pub deadline: f64,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<TailRow>,
    /// Every `n = 0` row agrees with simulation.
    pub base_case_pass: bool,
}

/// Compares the proposed balking tail with simulated tails of customer
/// `n + 1` for every `n` in `ns` and `x` in `xs`.
#[allow(clippy::too_many_arguments)]
pub fn validate_balking_tail(
    lambda: f64,
    sigma: f64,
    period: f64,
    deadline: f64,
    ns: &[usize],
    xs: &[f64],
    replications: usize,
    seed: u64,
) -> Result<TailValidation> {
    let config = QueueConfig::new(
        period,
        deadline,
        DistributionSpec::deterministic(sigma)?,
        DistributionSpec::exponential(lambda)?,
        Discipline::Balking,
    )?;
    let mut rows = Vec::new();
    for &n in ns {
        for &x in xs {
            let formula = balking_transient_tail(lambda, sigma, period, deadline, n, x);
            let est = estimate_transient_tail(&config, n + 1, x, replications, seed)?;
            let deviation = formula.value - est.value;
            let deviation_se = se_units(formula.value, est.value, est.se);
            rows.push(TailRow {
                n,
                x,
                formula: formula.value,
                estimate: est.value,
                se: est.se,
                deviation,
                deviation_se,
                within_3se: deviation_se < SE_TOL,
                validated: formula.validated,
            });
        }
    }
    let base_case_pass = rows.iter().filter(|r| r.n == 0).all(|r| r.within_3se);
    Ok(TailValidation {
        version: TAIL_REPORT_VERSION,
        lambda,
        sigma,
        period,
        deadline,
        replications,
        seed,
        rows,
        base_case_pass,
    })
}
