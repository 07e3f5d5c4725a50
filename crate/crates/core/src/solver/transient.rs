use rayon::prelude::*;

use super::balking::BalkingMap;
use super::reneging::source_weights;
use super::{check_inputs, kink_node, kink_points, trapezoid, Kink, OffsetTable, Point, Probe};
use crate::kernel::{ConvolutionLaw, MAX_TAIL_TERMS};
use crate::model::{trapezoid_weights, Boundary, Discipline, MixedDistribution, QueueConfig};
use crate::{Error, Result};

/// Longest reneging history kept in memory.
pub const MAX_TRANSIENT_STEPS: usize = 10_000;

/// Loss runs longer than this have probability below the cut-off.
const RUN_CUTOFF: f64 = 1e-14;

/// Laws `W_0, ..., W_{n_steps}` of successive customers starting from an
/// empty system. Under reneging customer `n + 1` may be anchored to any
/// earlier served customer, so the whole history takes part in each step;
/// under balking the workload law is updated one step at a time.
pub fn iterate_transient(
    config: &QueueConfig,
    n_steps: usize,
    grid_size: usize,
) -> Result<Vec<MixedDistribution>> {
    check_inputs(config, grid_size)?;
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let law = ConvolutionLaw::new(&config.service, &config.vacation)?;
    match config.discipline {
        Discipline::Reneging => {
            if n_steps > MAX_TRANSIENT_STEPS {
                return Err(Error::InvalidArgument(format!(
                    "n_steps must be at most {MAX_TRANSIENT_STEPS} for reneging"
                )));
            }
            reneging(&law, config, n_steps, grid_size)
        }
        Discipline::Balking => {
            let map = BalkingMap::new(
                &law,
                config,
                grid_size,
                BalkingMap::default_extra(&law, config, grid_size),
            );
            let h = config.deadline / grid_size as f64;
            let mut out = vec![MixedDistribution::point_mass_at_zero(
                h * map.intervals() as f64,
                map.intervals(),
                Boundary::TailBeyond,
            )];
            let (mut atom0, mut density) = (1.0, vec![0.0; map.intervals() + 1]);
            for _ in 0..n_steps {
                let (a, f, tail, jump) = map.step(atom0, &density);
                out.push(map.distribution(a, f.clone(), tail, jump)?);
                (atom0, density) = (a, f);
            }
            Ok(out)
        }
    }
}

struct RunTables {
    n: usize,
    h: f64,
    t: f64,
    k: f64,
    /// `G(d + (r + 1) T)` for run length `r`.
    upper: Vec<OffsetTable>,
    /// `P(S < K - x_j + r T)`, indexed `[r][j]` for `r >= 1`.
    lower: Vec<Vec<f64>>,
}

impl RunTables {
    fn new(law: &ConvolutionLaw, config: &QueueConfig, n: usize, longest: usize) -> Self {
        let (t, k) = (config.period, config.deadline);
        let h = k / n as f64;
        let upper = (0..=longest)
            .map(|r| {
                OffsetTable::new(-(n as isize), n as isize, h, |d| {
                    law.cdf(d + (r as f64 + 1.0) * t)
                })
            })
            .collect();
        let lower = (0..=longest + 1)
            .map(|r| {
                (0..=n)
                    .map(|j| law.cdf_left(k - j as f64 * h + r as f64 * t))
                    .collect()
            })
            .collect();
        Self {
            n,
            h,
            t,
            k,
            upper,
            lower,
        }
    }

    /// Contribution of anchors `r` customers back: `P(w <= y)` jointly with
    /// `r` losses in between.
    fn value(&self, point: Point, r: usize, weights: &[f64]) -> f64 {
        let (i, y, half) = match point {
            Point::Half(i) => (i as isize, (i as f64 + 0.5) * self.h, true),
            Point::Node(i) => (i as isize, i as f64 * self.h, false),
        };
        if r > 0 && y + self.t < self.k {
            return 0.0;
        }
        let table = &self.upper[r];
        let mut total = 0.0;
        for (j, &c) in weights.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let m = i - j as isize;
            let g = if half { table.half(m) } else { table.node(m) };
            total += c * if r == 0 {
                g
            } else {
                (g - self.lower[r][j]).max(0.0)
            };
        }
        total
    }

    /// Left limit at `K` of the same contribution.
    fn value_before_k(&self, r: usize, weights: &[f64]) -> f64 {
        weights
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let top = self.lower[r + 1][j];
                c * if r == 0 {
                    top
                } else {
                    (top - self.lower[r][j]).max(0.0)
                }
            })
            .sum()
    }
}

fn reneging(
    law: &ConvolutionLaw,
    config: &QueueConfig,
    n_steps: usize,
    n: usize,
) -> Result<Vec<MixedDistribution>> {
    let t = config.period;
    let mut longest = 1;
    while law.survival_inclusive(longest as f64 * t) >= RUN_CUTOFF {
        longest += 1;
        if longest > MAX_TAIL_TERMS {
            return Err(Error::TruncationLimit {
                limit: MAX_TAIL_TERMS,
            });
        }
    }
    let longest = longest.min(n_steps);
    let tables = RunTables::new(law, config, n, longest);
    let h = tables.h;
    let trapz = trapezoid_weights(n + 1, h);

    let mut out = vec![MixedDistribution::point_mass_at_zero(
        config.deadline,
        n,
        Boundary::AtomAtEnd,
    )];
    let mut history: Vec<Vec<f64>> = vec![source_weights(1.0, &vec![0.0; n + 1], &trapz)];
    let (half_points, nodes) = Probe::points(n);
    let kink_at = kink_node(config, h, n);

    for s in 0..n_steps {
        let runs = s.min(longest);
        let total = |p: Point| -> f64 {
            (0..=runs)
                .map(|r| tables.value(p, r, &history[s - r]))
                .sum()
        };
        let half = half_points.par_iter().map(|&p| total(p)).collect();
        let [at0, at1, before_end] = nodes.map(total);
        let end: f64 = (0..=runs)
            .map(|r| tables.value_before_k(r, &history[s - r]))
            .sum::<f64>()
            .min(1.0);
        let kink = kink_at.map(|node| {
            let [before, at, after] = kink_points(node).map(total);
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
        let mut f = probe.densities(h);
        let mut jump = probe.jump(h);
        let continuous = trapezoid(&f, h);
        if continuous > 0.0 {
            let fix = (end - at0) / continuous;
            f.iter_mut().for_each(|v| *v *= fix);
            if let Some((_, d)) = jump.as_mut() {
                *d *= fix;
            }
        }
        history.push(source_weights(at0, &f, &trapz));
        let mut d = MixedDistribution::new(at0, h, f, 1.0 - end, Boundary::AtomAtEnd)?;
        if let Some((node, size)) = jump {
            d = d.with_density_jump(node, size)?;
        }
        out.push(d);
    }
    debug_assert_eq!(tables.n, n);
    Ok(out)
}
