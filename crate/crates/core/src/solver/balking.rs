use rayon::prelude::*;

use super::{
    check_inputs, kink_node, kink_points, require_stable, sup_diff, trapezoid, Kink, LinearCdf,
    OffsetTable, Point, Probe, StationarySolution,
};
use crate::kernel::ConvolutionLaw;
use crate::model::{trapezoid_weights, Boundary, MixedDistribution, QueueConfig};
use crate::{Error, Result};

/// Doublings of the support allowed before giving up on the tail.
const MAX_DOUBLINGS: usize = 12;

/// One step of the workload law on `[0, x_max]`, `x_max = K + extra * h`.
pub(super) struct BalkingMap {
    n: usize,
    m: usize,
    h: f64,
    t: f64,
    k: f64,
    kink: Option<usize>,
    conv: OffsetTable,
    trapz_k: Vec<f64>,
}

impl BalkingMap {
    pub(super) fn new(law: &ConvolutionLaw, config: &QueueConfig, n: usize, extra: usize) -> Self {
        let (t, k) = (config.period, config.deadline);
        let h = k / n as f64;
        let m = n + extra;
        Self {
            n,
            m,
            h,
            t,
            k,
            kink: kink_node(config, h, n),
            conv: OffsetTable::new(-(n as isize), m as isize, h, |d| law.cdf(d + t)),
            trapz_k: trapezoid_weights(n + 1, h),
        }
    }

    pub(super) fn intervals(&self) -> usize {
        self.m
    }

    /// Extra intervals beyond `K` covering ten mean cycles.
    pub(super) fn default_extra(law: &ConvolutionLaw, config: &QueueConfig, n: usize) -> usize {
        let h = config.deadline / n as f64;
        ((10.0 * law.mean() / h).ceil() as usize).max(2)
    }

    /// Source weights on `[0, K]`: the atom plus trapezoid-weighted density.
    fn sources(&self, atom0: f64, density: &[f64]) -> Vec<f64> {
        let mut c: Vec<f64> = density[..=self.n]
            .iter()
            .zip(&self.trapz_k)
            .map(|(f, w)| f * w)
            .collect();
        c[0] += atom0;
        c
    }

    fn value(&self, point: Point, sources: &[f64], cdf: &LinearCdf, below_k: f64) -> f64 {
        let (i, y, half) = match point {
            Point::Half(i) => (i as isize, (i as f64 + 0.5) * self.h, true),
            Point::Node(i) => (i as isize, i as f64 * self.h, false),
        };
        let mut total = 0.0;
        for (j, &c) in sources.iter().enumerate() {
            let m = i - j as isize;
            total += c * if half {
                self.conv.half(m)
            } else {
                self.conv.node(m)
            };
        }
        if y + self.t > self.k {
            total += cdf.at(y + self.t) - below_k;
        }
        total
    }

    /// Returns the updated atom, node density, tail mass and density jump.
    pub(super) fn step(
        &self,
        atom0: f64,
        density: &[f64],
    ) -> (f64, Vec<f64>, f64, Option<(usize, f64)>) {
        let sources = self.sources(atom0, density);
        let below_k: f64 = sources.iter().sum();
        let cdf = LinearCdf::new(atom0, self.h, density);
        let (half_points, nodes) = Probe::points(self.m);
        let half = half_points
            .par_iter()
            .map(|&p| self.value(p, &sources, &cdf, below_k))
            .collect();
        let [at0, at1, before_end] = nodes.map(|p| self.value(p, &sources, &cdf, below_k));
        let end = self.value(Point::Node(self.m), &sources, &cdf, below_k);
        let kink = self.kink.map(|node| {
            let [before, at, after] =
                kink_points(node).map(|p| self.value(p, &sources, &cdf, below_k));
            Kink {
                node,
                before,
                at,
                after,
            }
        });
        let probe = Probe {
            half,
            at0,
            at1,
            before_end,
            end,
            kink,
        };
        let mut f = probe.densities(self.h);
        let mut jump = probe.jump(self.h);
        let continuous = trapezoid(&f, self.h);
        if continuous > 0.0 {
            let fix = (end - at0) / continuous;
            f.iter_mut().for_each(|v| *v *= fix);
            if let Some((_, d)) = jump.as_mut() {
                *d *= fix;
            }
        }
        (at0, f, 1.0 - end, jump)
    }

    /// `P(next workload >= K)` from the current law.
    fn blocking(&self, law: &ConvolutionLaw, atom0: f64, density: &[f64]) -> f64 {
        let sources = self.sources(atom0, density);
        let entering: f64 = sources
            .iter()
            .enumerate()
            .map(|(j, c)| c * law.survival_inclusive(self.k - j as f64 * self.h + self.t))
            .sum();
        let cdf = LinearCdf::new(atom0, self.h, density);
        entering + 1.0 - cdf.at(self.k + self.t)
    }

    pub(super) fn distribution(
        &self,
        atom0: f64,
        density: Vec<f64>,
        tail: f64,
        jump: Option<(usize, f64)>,
    ) -> Result<MixedDistribution> {
        let d = MixedDistribution::new(atom0, self.h, density, tail, Boundary::TailBeyond)?;
        match jump {
            Some((node, size)) => d.with_density_jump(node, size),
            None => Ok(d),
        }
    }
}

/// Stationary workload law of the balking model.
///
/// The support is truncated at `x_max`, doubled past `K` until the mass
/// beyond it drops below `tol`. `bk` is `P(w >= K)` read off the law and
/// `bk_formula` recomputes it from one step of the recursion. As under
/// reneging, the density jumps at `K - T` and is resolved when that point
/// is a grid node.
pub fn solve_balking_stationary(
    config: &QueueConfig,
    grid_size: usize,
    tol: f64,
    max_iter: usize,
) -> Result<StationarySolution> {
    check_inputs(config, grid_size)?;
    require_stable(config)?;
    let law = ConvolutionLaw::new(&config.service, &config.vacation)?;
    let n = grid_size;
    let mut extra = BalkingMap::default_extra(&law, config, n);

    let mut atom0 = 1.0;
    let mut density = vec![0.0; n + extra + 1];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..=MAX_DOUBLINGS {
        let map = BalkingMap::new(&law, config, n, extra);
        density.resize(map.intervals() + 1, 0.0);
        let mut tail = 0.0;
        let mut jump = None;
        let mut cdf = LinearCdf::new(atom0, map.h, &density).cum;
        let mut converged = false;
        while iterations < max_iter {
            iterations += 1;
            let (new_atom0, new_density, new_tail, new_jump) = map.step(atom0, &density);
            let new_cdf = LinearCdf::new(new_atom0, map.h, &new_density).cum;
            let residual = sup_diff(&cdf, &new_cdf).max((tail - new_tail).abs());
            history.push(residual);
            (atom0, density, tail, cdf, jump) =
                (new_atom0, new_density, new_tail, new_cdf, new_jump);
            if residual < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            break;
        }
        if tail < tol {
            let below_k = LinearCdf::new(atom0, map.h, &density).at_node(n);
            let bk_formula = map.blocking(&law, atom0, &density);
            return Ok(StationarySolution {
                distribution: map.distribution(atom0, density, tail, jump)?,
                bk: 1.0 - below_k,
                bk_formula,
                iterations,
                residual: *history.last().unwrap(),
                residual_history: history,
            });
        }
        extra *= 2;
    }
    Err(Error::NonConvergence {
        iterations,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Discipline;
    use crate::montecarlo::{estimate_stationary, SimulationOptions};

    fn config(service: &str, vacation: &str, t: f64, k: f64) -> QueueConfig {
        QueueConfig::new(
            t,
            k,
            service.parse().unwrap(),
            vacation.parse().unwrap(),
            Discipline::Balking,
        )
        .unwrap()
    }

    #[test]
    fn second_term_vanishes_below_k_minus_t() {
        // one step from a law with mass above K: values at y < K - T see
        // only the convolution term
        let c = config("exp:2", "exp:1", 1.0, 3.0);
        let law = ConvolutionLaw::new(&c.service, &c.vacation).unwrap();
        let n = 30;
        let map = BalkingMap::new(&law, &c, n, 30);
        let mut density = vec![0.0; 61];
        density[45] = 1.0;
        let sources = map.sources(0.5, &density);
        let cdf = LinearCdf::new(0.5, map.h, &density);
        let below_k: f64 = sources.iter().sum();
        for i in 0..19 {
            let y = i as f64 * map.h;
            assert!(y + 1.0 < 3.0);
            let v = map.value(Point::Node(i), &sources, &cdf, below_k);
            assert!((v - 0.5 * law.cdf(y + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn converges_and_matches_simulation() {
        let c = config("exp:2", "exp:1", 1.0, 2.0);
        let s = solve_balking_stationary(&c, 128, 1e-10, 20_000).unwrap();
        let d = &s.distribution;
        assert!(d.normalization_error() < 1e-10);
        assert!(d.boundary_mass() < 1e-10);
        assert!(d.is_monotone(1e-10));
        assert!(
            (s.bk - s.bk_formula).abs() < 1e-4,
            "{} vs {}",
            s.bk,
            s.bk_formula
        );

        let mc = estimate_stationary(&c, &SimulationOptions::new(200_000, 8, 5)).unwrap();
        assert!(
            (s.bk - mc.bk.value).abs() < 3.0 * mc.bk.se + 1e-4,
            "{} vs {:?}",
            s.bk,
            mc.bk
        );
        assert!((d.atom0() - mc.w0.value).abs() < 3.0 * mc.w0.se + 1e-4);
    }

    #[test]
    fn blocking_equals_reneging_loss() {
        // the reneging wait is the balking workload capped at K
        let c = config("det:0.5", "exp:1", 2.0, 3.0);
        let bal = solve_balking_stationary(&c, 128, 1e-11, 20_000).unwrap();
        let ren = super::super::solve_reneging_stationary(
            &c.with_discipline(Discipline::Reneging),
            128,
            1e-11,
            20_000,
        )
        .unwrap();
        assert!((bal.bk - ren.bk).abs() < 1e-4, "{} vs {}", bal.bk, ren.bk);
        assert!(bal.distribution.sup_cdf_distance(&ren.distribution, 3.0) < 1e-4);
    }

    #[test]
    fn deterministic_cycle_is_unstable() {
        let c = config("det:4", "det:0", 2.0, 5.0);
        assert!(matches!(
            solve_balking_stationary(&c, 64, 1e-10, 100),
            Err(Error::Unstable { .. })
        ));
    }
}
