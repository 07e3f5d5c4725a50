use serde::Serialize;

use crate::{Error, Result};

/// Where the boundary mass of a [`MixedDistribution`] sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// An atom exactly at `x_max` (the deadline `K` under reneging).
    AtomAtEnd,
    /// Mass lying beyond the truncation point `x_max` (balking workload).
    TailBeyond,
}

/// Atom at 0, density on a uniform grid over `[0, x_max]`, and a boundary
/// mass. Integrals of the density use the trapezoid rule on the grid nodes.
///
/// The density may jump at one interior node. There `density` holds the
/// right limit and `left_limit` the left one, and each adjacent cell uses
/// its own side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedDistribution {
    atom0: f64,
    step: f64,
    density: Vec<f64>,
    boundary_mass: f64,
    boundary: Boundary,
    #[serde(skip_serializing_if = "Option::is_none")]
    left_limit: Option<(usize, f64)>,
}

/// Trapezoid weights for `n` nodes with spacing `h`.
pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

impl MixedDistribution {
    pub fn new(
        atom0: f64,
        step: f64,
        density: Vec<f64>,
        boundary_mass: f64,
        boundary: Boundary,
    ) -> Result<Self> {
        if density.len() < 2 {
            return Err(Error::InvalidArgument(
                "density grid needs at least two nodes".into(),
            ));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid step must be positive, got {step}"
            )));
        }
        Ok(Self {
            atom0,
            step,
            density,
            boundary_mass,
            boundary,
            left_limit: None,
        })
    }

    /// Splits the density at interior node `node` into one-sided limits that
    /// differ by `jump` (right minus left). Their average stays at the
    /// current node value, so the mass is unchanged.
    pub fn with_density_jump(mut self, node: usize, jump: f64) -> Result<Self> {
        if node == 0 || node >= self.intervals() {
            return Err(Error::InvalidArgument(format!(
                "density jump must sit at an interior node, got {node}"
            )));
        }
        let mid = self.density[node];
        self.density[node] = mid + 0.5 * jump;
        self.left_limit = Some((node, mid - 0.5 * jump));
        Ok(self)
    }

    /// A point mass at 0 on a grid over `[0, x_max]` with `intervals` cells.
    pub fn point_mass_at_zero(x_max: f64, intervals: usize, boundary: Boundary) -> Self {
        Self {
            atom0: 1.0,
            step: x_max / intervals as f64,
            density: vec![0.0; intervals + 1],
            boundary_mass: 0.0,
            boundary,
            left_limit: None,
        }
    }

    pub fn atom0(&self) -> f64 {
        self.atom0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Node densities; the right limit at a jump.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Node and left-limit density of the jump, if any.
    pub fn density_jump(&self) -> Option<(usize, f64)> {
        self.left_limit
    }

    /// Density approaching node `i` from the left.
    fn left_of(&self, i: usize) -> f64 {
        match self.left_limit {
            Some((j, v)) if j == i => v,
            _ => self.density[i],
        }
    }

    /// Mass of cell `[x_i, x_{i+1}]`.
    fn cell_mass(&self, i: usize) -> f64 {
        0.5 * self.step * (self.density[i] + self.left_of(i + 1))
    }

    pub fn boundary_mass(&self) -> f64 {
        self.boundary_mass
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn intervals(&self) -> usize {
        self.density.len() - 1
    }

    pub fn x_max(&self) -> f64 {
        self.step * self.intervals() as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.step * i as f64
    }

    /// Trapezoid integral of the density over `[0, x_max]`.
    pub fn continuous_mass(&self) -> f64 {
        (0..self.intervals()).map(|i| self.cell_mass(i)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atom0 + self.continuous_mass() + self.boundary_mass
    }

    pub fn normalization_error(&self) -> f64 {
        (self.total_mass() - 1.0).abs()
    }

    /// Mass of the closed interval `[0, x]` excluding any boundary atom,
    /// integrating the piecewise-linear interpolant of the density exactly.
    fn mass_up_to(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let h = self.step;
        let last = self.intervals();
        let x = x.min(self.x_max());
        let k = ((x / h).floor() as usize).min(last.saturating_sub(1));
        let full: f64 = (0..k).map(|i| self.cell_mass(i)).sum();
        let t = ((x - h * k as f64) / h).clamp(0.0, 1.0);
        let (f0, f1) = (self.density[k], self.left_of(k + 1));
        self.atom0 + full + t * h * (f0 + 0.5 * (f1 - f0) * t)
    }

    /// Right-continuous CDF at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= self.x_max() {
            return match self.boundary {
                Boundary::AtomAtEnd => 1.0,
                Boundary::TailBeyond if x > self.x_max() => 1.0 - self.boundary_mass,
                Boundary::TailBeyond => self.atom0 + self.continuous_mass(),
            };
        }
        self.mass_up_to(x)
    }

    /// CDF at every grid node, right-continuous (the last node includes an
    /// end atom when there is one).
    pub fn cdf_nodes(&self) -> Vec<f64> {
        let mut acc = self.atom0;
        let mut out = Vec::with_capacity(self.density.len());
        out.push(acc);
        for i in 0..self.intervals() {
            acc += self.cell_mass(i);
            out.push(acc);
        }
        if self.boundary == Boundary::AtomAtEnd {
            *out.last_mut().unwrap() += self.boundary_mass;
        }
        out
    }

    /// Left limit of the CDF at `x_max` (excludes an end atom).
    pub fn cdf_before_end(&self) -> f64 {
        self.atom0 + self.continuous_mass()
    }

    /// Linear interpolation of the density, right-continuous at a jump.
    pub fn density_at(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.x_max() {
            return 0.0;
        }
        let h = self.step;
        let k = ((x / h).floor() as usize).min(self.intervals() - 1);
        let t = (x - h * k as f64) / h;
        self.density[k] * (1.0 - t) + self.left_of(k + 1) * t
    }

    /// Mean of the law, counting the end atom at `x_max` and ignoring any tail
    /// beyond `x_max`.
    pub fn mean(&self) -> f64 {
        let h = self.step;
        let body: f64 = (0..self.intervals())
            .map(|i| {
                0.5 * h * h * (self.density[i] * i as f64 + self.left_of(i + 1) * (i + 1) as f64)
            })
            .sum();
        let end = match self.boundary {
            Boundary::AtomAtEnd => self.boundary_mass * self.x_max(),
            Boundary::TailBeyond => 0.0,
        };
        body + end
    }

    pub fn min_density(&self) -> f64 {
        let left = self.left_limit.map_or(f64::INFINITY, |(_, v)| v);
        self.density.iter().copied().fold(left, f64::min)
    }

    /// CDF nondecreasing at the nodes, within `tol` for roundoff.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.atom0 >= -tol
            && self.boundary_mass >= -tol
            && self.cdf_nodes().windows(2).all(|w| w[1] >= w[0] - tol)
    }

    /// `sup |F - G|` over `[0, upto)`, evaluated at the grid nodes of both laws
    /// and just below `upto`.
    pub fn sup_cdf_distance(&self, other: &MixedDistribution, upto: f64) -> f64 {
        let below = |d: &MixedDistribution| {
            (0..=d.intervals())
                .map(|i| d.node(i))
                .filter(|&x| x < upto)
                .collect::<Vec<_>>()
        };
        let mut xs = below(self);
        xs.extend(below(other));
        let end = upto * (1.0 - 1e-12);
        let mut d = (self.mass_up_to(end) - other.mass_up_to(end)).abs();
        for x in xs {
            d = d.max((self.cdf(x) - other.cdf(x)).abs());
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_with_atoms() -> MixedDistribution {
        // 0.2 at 0, density 0.5 on [0, 1], 0.3 at 1
        MixedDistribution::new(0.2, 0.25, vec![0.5; 5], 0.3, Boundary::AtomAtEnd).unwrap()
    }

    #[test]
    fn mass_and_cdf() {
        let d = uniform_with_atoms();
        assert!(d.normalization_error() < 1e-15);
        assert!((d.cdf(0.0) - 0.2).abs() < 1e-15);
        assert!((d.cdf(0.5) - 0.45).abs() < 1e-15);
        assert!((d.cdf(0.6) - 0.5).abs() < 1e-15);
        assert_eq!(d.cdf(1.0), 1.0);
        assert!((d.cdf_before_end() - 0.7).abs() < 1e-15);
        let nodes = d.cdf_nodes();
        assert!((nodes[4] - 1.0).abs() < 1e-15);
        assert!(d.is_monotone(0.0));
        assert!((d.mean() - (0.5 * 0.5 + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn tail_boundary_cdf() {
        let d = MixedDistribution::new(0.2, 0.25, vec![0.5; 5], 0.3, Boundary::TailBeyond).unwrap();
        assert!((d.cdf(1.0) - 0.7).abs() < 1e-15);
        assert!((d.cdf(2.0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn cdf_distance_is_symmetric_and_zero_on_self() {
        let a = uniform_with_atoms();
        let b = MixedDistribution::new(0.3, 0.1, vec![0.4; 11], 0.3, Boundary::AtomAtEnd).unwrap();
        assert_eq!(a.sup_cdf_distance(&a, 1.0), 0.0);
        let d = a.sup_cdf_distance(&b, 1.0);
        assert!((d - b.sup_cdf_distance(&a, 1.0)).abs() < 1e-15);
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn density_jump_keeps_mass_and_uses_each_side() {
        // density 0.2 on [0, 0.5), 0.6 on (0.5, 1], no atoms
        let d = MixedDistribution::new(
            0.0,
            0.25,
            vec![0.2, 0.2, 0.4, 0.6, 0.6],
            0.0,
            Boundary::AtomAtEnd,
        )
        .unwrap();
        let mass = d.total_mass();
        let j = d.with_density_jump(2, 0.4).unwrap();
        assert!((j.total_mass() - mass).abs() < 1e-15);
        assert!((j.total_mass() - 0.4).abs() < 1e-15);
        assert!((j.cdf(0.5) - 0.1).abs() < 1e-15);
        assert!((j.cdf(0.75) - 0.25).abs() < 1e-15);
        assert!((j.cdf_nodes()[2] - 0.1).abs() < 1e-15);
        assert!((j.density_at(0.5) - 0.6).abs() < 1e-15);
        assert!((j.density_at(0.49) - 0.2).abs() < 1e-12);
        assert_eq!(j.min_density(), 0.2);
        // mean of the piecewise-constant law
        assert!((j.mean() - (0.2 * 0.125 + 0.3 * 0.75)).abs() < 1e-15);
        assert_eq!(j.density_jump(), Some((2, 0.2)));
        assert!(uniform_with_atoms().with_density_jump(0, 1.0).is_err());
        assert!(uniform_with_atoms().with_density_jump(4, 1.0).is_err());
    }
}
