use rayon::prelude::*;

use super::{
    check_inputs, kink_node, kink_points, require_stable, sup_diff, trapezoid, Kink, OffsetTable,
    Point, Probe, StationarySolution,
};
use crate::kernel::KernelParams;
use crate::model::{trapezoid_weights, Boundary, MixedDistribution, QueueConfig};
use crate::{Error, Result};

/// Tables for evaluating `W(y) = sum_j c_j kernel_sum(y, x_j)` on a grid.
pub(super) struct RenegingMap {
    n: usize,
    h: f64,
    t: f64,
    k: f64,
    kink: Option<usize>,
    conv: OffsetTable,
    far: OffsetTable,
    loss: Vec<f64>,
}

impl RenegingMap {
    pub(super) fn new(params: &KernelParams, n: usize) -> Self {
        let config = params.config();
        let (t, k) = (config.period, config.deadline);
        let h = k / n as f64;
        let (lo, hi) = (-(n as isize), n as isize);
        Self {
            n,
            h,
            t,
            k,
            kink: kink_node(config, h, n),
            conv: OffsetTable::new(lo, hi, h, |d| params.conv_cdf(d + t)),
            far: OffsetTable::new(lo, hi, h, |d| params.survival_sum(d + 2.0 * t, false)),
            loss: (0..=n).map(|j| params.loss_sum(j as f64 * h)).collect(),
        }
    }

    fn value(&self, point: Point, weights: &[f64]) -> f64 {
        let (i, y, half) = match point {
            Point::Half(i) => (i as isize, (i as f64 + 0.5) * self.h, true),
            Point::Node(i) => (i as isize, i as f64 * self.h, false),
        };
        let windows = y + self.t >= self.k;
        let mut total = 0.0;
        for (j, &c) in weights.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let m = i - j as isize;
            let (g, far) = if half {
                (self.conv.half(m), self.far.half(m))
            } else {
                (self.conv.node(m), self.far.node(m))
            };
            let ks = if windows {
                (g + self.loss[j] - far).clamp(0.0, 1.0)
            } else {
                g
            };
            total += c * ks;
        }
        total
    }

    /// Applies the map to source weights `c_j` at the nodes `x_j`.
    /// The kernel sum tends to 1 as `y -> K`, so `W(K^-)` is the source mass.
    fn apply(&self, weights: &[f64]) -> Probe {
        let (half_points, nodes) = Probe::points(self.n);
        let half = half_points
            .par_iter()
            .map(|&p| self.value(p, weights))
            .collect();
        let [at0, at1, before_end] = nodes.map(|p| self.value(p, weights));
        let kink = self.kink.map(|node| {
            let [before, at, after] = kink_points(node).map(|p| self.value(p, weights));
            Kink {
                node,
                before,
                at,
                after,
            }
        });
        Probe {
            half,
            at0,
            at1,
            before_end,
            end: weights.iter().sum(),
            kink,
        }
    }
}

pub(super) fn source_weights(atom0: f64, density: &[f64], trapz: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = density.iter().zip(trapz).map(|(f, w)| f * w).collect();
    c[0] += atom0;
    c
}

/// Stationary law of the reneging waiting time.
///
/// The map preserves the mass on `[0, K)`, so each sweep rescales that mass
/// to `1 / (1 + L)`, where `L` is the expected number of losses per served
/// customer under the previous iterate; the atom at `K` takes the rest.
///
/// The density jumps at `K - T`. When that point is a grid node the jump is
/// resolved there and the scheme is second order; otherwise it is first
/// order near the jump.
pub fn solve_reneging_stationary(
    config: &QueueConfig,
    grid_size: usize,
    tol: f64,
    max_iter: usize,
) -> Result<StationarySolution> {
    check_inputs(config, grid_size)?;
    require_stable(config)?;
    let params = KernelParams::new(config)?;
    let n = grid_size;
    let map = RenegingMap::new(&params, n);
    let h = map.h;
    let trapz = trapezoid_weights(n + 1, h);

    let mut atom0 = 1.0;
    let mut density = vec![0.0; n + 1];
    let mut bk = 0.0;
    let mut cdf = vec![1.0; n];
    let mut jump: Option<(usize, f64)>;
    let mut history = Vec::new();

    for iteration in 1..=max_iter {
        let weights = source_weights(atom0, &density, &trapz);
        let mass: f64 = weights.iter().sum();
        let mean_loss = weights
            .iter()
            .zip(&map.loss)
            .map(|(c, l)| c * l)
            .sum::<f64>()
            / mass;

        let probe = map.apply(&weights);
        let mut new_atom0 = probe.at0;
        let mut new_density = probe.densities(h);
        let mut new_jump = probe.jump(h);
        let continuous = trapezoid(&new_density, h);
        let fix = if continuous > 0.0 {
            (mass - new_atom0) / continuous
        } else {
            1.0
        };
        let target = 1.0 / (1.0 + mean_loss);
        let scale = target / mass;
        new_atom0 *= scale;
        new_density.iter_mut().for_each(|f| *f *= fix * scale);
        if let Some((_, d)) = new_jump.as_mut() {
            *d *= fix * scale;
        }
        let new_bk = 1.0 - target;

        let new_cdf = super::LinearCdf::new(new_atom0, h, &new_density);
        let new_cdf: Vec<f64> = (0..n).map(|i| new_cdf.at_node(i)).collect();
        let residual = sup_diff(&cdf, &new_cdf).max((bk - new_bk).abs());
        history.push(residual);
        atom0 = new_atom0;
        density = new_density;
        bk = new_bk;
        cdf = new_cdf;
        jump = new_jump;

        if residual < tol {
            let weights = source_weights(atom0, &density, &trapz);
            let bk_formula = weights.iter().zip(&map.loss).map(|(c, l)| c * l).sum();
            let mut distribution =
                MixedDistribution::new(atom0, h, density, bk, Boundary::AtomAtEnd)?;
            if let Some((node, size)) = jump {
                distribution = distribution.with_density_jump(node, size)?;
            }
            return Ok(StationarySolution {
                distribution,
                bk,
                bk_formula,
                iterations: iteration,
                residual,
                residual_history: history,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}
