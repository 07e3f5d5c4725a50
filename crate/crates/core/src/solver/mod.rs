//! Discretized fixed-point solvers for the stationary and transient laws.
//!
//! The atom at 0 and the boundary mass are carried exactly. The continuous
//! part lives on a uniform grid as node densities integrated by the
//! trapezoid rule. Each sweep evaluates the updated CDF at the half-nodes and
//! differentiates it there, which keeps the scheme second order in `h`.

mod balking;
mod reneging;
mod transient;

use serde::Serialize;

pub use balking::solve_balking_stationary;
pub use reneging::solve_reneging_stationary;
pub use transient::iterate_transient;

use crate::model::{check_stability, MixedDistribution, QueueConfig};
use crate::{Error, Result};

pub const MIN_GRID_SIZE: usize = 16;

/// Converged stationary law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarySolution {
    pub distribution: MixedDistribution,
    /// Loss (reneging) or blocking (balking) probability carried by the law.
    pub bk: f64,
    /// The same probability recomputed from the converged law with the
    /// one-step loss formula.
    pub bk_formula: f64,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

fn check_inputs(config: &QueueConfig, grid_size: usize) -> Result<()> {
    config.validate()?;
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::InvalidArgument(format!(
            "grid_size must be at least {MIN_GRID_SIZE}, got {grid_size}"
        )));
    }
    Ok(())
}

fn require_stable(config: &QueueConfig) -> Result<()> {
    let s = check_stability(config);
    if s.stable {
        Ok(())
    } else {
        Err(Error::Unstable {
            probability: s.probability,
        })
    }
}

/// A function sampled at offsets `m h` and `(m + 1/2) h` for `m` in `lo..=hi`.
struct OffsetTable {
    lo: isize,
    node: Vec<f64>,
    half: Vec<f64>,
}

impl OffsetTable {
    fn new(lo: isize, hi: isize, h: f64, f: impl Fn(f64) -> f64) -> Self {
        let node = (lo..=hi).map(|m| f(m as f64 * h)).collect();
        let half = (lo..=hi).map(|m| f((m as f64 + 0.5) * h)).collect();
        Self { lo, node, half }
    }

    #[inline]
    fn node(&self, m: isize) -> f64 {
        self.node[(m - self.lo) as usize]
    }

    #[inline]
    fn half(&self, m: isize) -> f64 {
        self.half[(m - self.lo) as usize]
    }
}

/// Updated CDF at the points needed to rebuild node densities on a grid
/// with `half.len()` intervals.
struct Probe {
    /// At `(i + 1/2) h`.
    half: Vec<f64>,
    /// At 0, `h`, `x_end - h` and `x_end^-`.
    at0: f64,
    at1: f64,
    before_end: f64,
    end: f64,
    /// Values around a node where the density jumps.
    kink: Option<Kink>,
}

/// The CDF at nodes `node - 1`, `node` and `node + 1`.
#[derive(Clone, Copy)]
struct Kink {
    node: usize,
    before: f64,
    at: f64,
    after: f64,
}

/// Node of the point `K - T`, where the stationary density jumps, when that
/// point falls on an interior node of a grid with `m` intervals.
fn kink_node(config: &QueueConfig, h: f64, m: usize) -> Option<usize> {
    let r = (config.deadline - config.period) / h;
    let b = r.round();
    ((r - b).abs() < 1e-9 * r.abs().max(1.0) && b >= 1.0 && b < m as f64).then_some(b as usize)
}

/// Probe points around a kink node.
fn kink_points(node: usize) -> [Point; 3] {
    [
        Point::Node(node - 1),
        Point::Node(node),
        Point::Node(node + 1),
    ]
}

/// Where the probe points sit.
#[derive(Clone, Copy)]
enum Point {
    Half(usize),
    Node(usize),
}

impl Probe {
    fn points(m: usize) -> (Vec<Point>, [Point; 3]) {
        (
            (0..m).map(Point::Half).collect(),
            [Point::Node(0), Point::Node(1), Point::Node(m - 1)],
        )
    }

    /// Node densities: centered differences inside, Richardson-extrapolated
    /// one-sided differences at both ends.
    fn densities(&self, h: f64) -> Vec<f64> {
        let m = self.half.len();
        let mut f = Vec::with_capacity(m + 1);
        f.push((4.0 * self.half[0] - 3.0 * self.at0 - self.at1) / h);
        for i in 1..m {
            f.push((self.half[i] - self.half[i - 1]) / h);
        }
        f.push((3.0 * self.end - 4.0 * self.half[m - 1] + self.before_end) / h);
        f
    }

    /// Node and size (right minus left) of the density jump, from one-sided
    /// second-order differences on each side of the kink.
    fn jump(&self, h: f64) -> Option<(usize, f64)> {
        self.kink.map(|k| {
            let (below, above) = (self.half[k.node - 1], self.half[k.node]);
            let left = (k.before - 4.0 * below + 3.0 * k.at) / h;
            let right = (-3.0 * k.at + 4.0 * above - k.after) / h;
            (k.node, right - left)
        })
    }
}

fn trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    h * (f[1..n - 1].iter().sum::<f64>() + 0.5 * (f[0] + f[n - 1]))
}

/// CDF of an atom at 0 plus a piecewise-linear density on `[0, x_end]`.
/// Mass beyond `x_end` is treated as sitting just above it.
struct LinearCdf {
    h: f64,
    density: Vec<f64>,
    cum: Vec<f64>,
}

impl LinearCdf {
    fn new(atom0: f64, h: f64, density: &[f64]) -> Self {
        let mut cum = Vec::with_capacity(density.len());
        let mut acc = atom0;
        cum.push(acc);
        for w in density.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cum.push(acc);
        }
        Self {
            h,
            density: density.to_vec(),
            cum,
        }
    }

    fn at_node(&self, i: usize) -> f64 {
        self.cum[i]
    }

    fn at(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        let last = self.density.len() - 1;
        let x_end = self.h * last as f64;
        if z > x_end {
            return 1.0;
        }
        let k = ((z / self.h).floor() as usize).min(last - 1);
        let t = (z / self.h - k as f64).clamp(0.0, 1.0);
        let (f0, f1) = (self.density[k], self.density[k + 1]);
        self.cum[k] + self.h * t * (f0 + 0.5 * (f1 - f0) * t)
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
