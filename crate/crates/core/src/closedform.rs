//! Explicit stationary laws of the reneging model for two parametric
//! families, and the transient balking tail for deterministic service.
//!
//! * Deterministic service `sigma`, exponential vacations (rate `lambda`):
//!   the density on `(0, K)` is a single exponential.
//! * Exponential service (`mu`) and vacations (`lambda`): the density is a
//!   combination of two exponential modes, the roots of a quadratic.
//!
//! In both cases `W(0)` and the loss probability solve a 2x2 linear system
//! made of the normalization and the loss formula, which is linear in `W(0)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::kernel::alpha;
use crate::{Error, Result};

/// Laws on `[0, K]` with an atom at 0, a density on `(0, K)` and an atom at `K`.
pub trait StationaryLaw {
    fn deadline(&self) -> f64;
    fn w0(&self) -> f64;
    fn bk(&self) -> f64;
    fn density(&self, x: f64) -> f64;
    /// Exact integral of the density over `(0, x)`.
    fn continuous_mass_to(&self, x: f64) -> f64;

    fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if x >= self.deadline() {
            1.0
        } else {
            self.w0() + self.continuous_mass_to(x)
        }
    }

    fn normalization_error(&self) -> f64 {
        (self.w0() + self.continuous_mass_to(self.deadline()) + self.bk() - 1.0).abs()
    }
}

/// `(e^{r x} - 1) / r`, finite as `r -> 0`.
fn exprel(r: f64, x: f64) -> f64 {
    let z = r * x;
    if z.abs() < 1e-8 {
        x * (1.0 + 0.5 * z)
    } else {
        z.exp_m1() / r
    }
}

fn exprel_c(r: Complex64, x: f64) -> Complex64 {
    let z = r * x;
    if z.norm() < 1e-6 {
        x * (1.0 + z / 2.0 + z * z / 6.0)
    } else {
        (z.exp() - 1.0) / r
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be > 0, got {v}"
        )))
    }
}

/// Solves `w0 * (1 + mass) + bk = 1`, `bk = w0 * coef`.
fn solve_atoms(mass_per_w0: f64, bk_per_w0: f64) -> (f64, f64) {
    let w0 = 1.0 / (1.0 + mass_per_w0 + bk_per_w0);
    (w0, w0 * bk_per_w0)
}

/// Deterministic service, exponential vacations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormDDet {
    pub lambda: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(rename = "K")]
    pub deadline: f64,
    pub alpha_lambda: f64,
    /// Density at `0+` divided by `W(0)`.
    pub amplitude: f64,
    /// Exponential rate of the density (either sign).
    pub rate: f64,
    pub w0: f64,
    pub bk: f64,
    /// `bk / w0` from summing the loss series against the density.
    pub bk_coefficient: f64,
    /// The alternative coefficient `alpha e^{-lambda (K - sigma - alpha e^{lambda sigma})}`.
    pub bk_coefficient_alt: f64,
    /// `(w0, bk)` obtained with the alternative coefficient.
    pub w0_alt: f64,
    pub bk_alt: f64,
}

pub fn ddet_exp_solution(
    lambda: f64,
    sigma: f64,
    period: f64,
    deadline: f64,
) -> Result<ClosedFormDDet> {
    positive("lambda", lambda)?;
    positive("T", period)?;
    positive("K", deadline)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if period <= sigma {
        return Err(Error::Unstable { probability: 0.0 });
    }
    let al = alpha(lambda, period);
    let boost = al * (lambda * sigma).exp();
    let amplitude = lambda * boost;
    let rate = amplitude - lambda;
    let mass = amplitude * exprel(rate, deadline);
    let bk_coefficient = boost * (-lambda * deadline * (1.0 - boost)).exp();
    let bk_coefficient_alt = al * (-lambda * (deadline - sigma - boost)).exp();
    let (w0, bk) = solve_atoms(mass, bk_coefficient);
    let (w0_alt, bk_alt) = solve_atoms(mass, bk_coefficient_alt);
    Ok(ClosedFormDDet {
        lambda,
        sigma,
        period,
        deadline,
        alpha_lambda: al,
        amplitude,
        rate,
        w0,
        bk,
        bk_coefficient,
        bk_coefficient_alt,
        w0_alt,
        bk_alt,
    })
}

impl StationaryLaw for ClosedFormDDet {
    fn deadline(&self) -> f64 {
        self.deadline
    }

    fn w0(&self) -> f64 {
        self.w0
    }

    fn bk(&self) -> f64 {
        self.bk
    }

    fn density(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.deadline {
            return 0.0;
        }
        self.w0 * self.amplitude * (self.rate * x).exp()
    }

    fn continuous_mass_to(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.deadline);
        self.w0 * self.amplitude * exprel(self.rate, x)
    }
}

/// Density of the deterministic-service case rebuilt from its Volterra form
/// `f = h + L int_0^x e^{(L - lambda)(x - w)} h(w) dw` with
/// `h(x) = W(0) * amplitude * e^{-lambda x}` and `L = amplitude`.
pub fn volterra_resolvent_density(solution: &ClosedFormDDet, x: f64) -> f64 {
    let (lambda, big) = (solution.lambda, solution.amplitude);
    let h0 = solution.w0 * solution.amplitude;
    let forcing = h0 * (-lambda * x).exp();
    // int_0^x e^{(L - lambda)(x - w)} e^{-lambda w} dw = e^{(L - lambda) x} (1 - e^{-L x}) / L
    let resolvent = ((big - lambda) * x).exp() * -(-big * x).exp_m1() / big;
    forcing + big * h0 * resolvent
}

/// Roots and residues shared by every deadline for exponential service and
/// vacations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmCharacteristic {
    pub lambda: f64,
    pub mu: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub alpha_lambda: f64,
    pub alpha_mu: f64,
    /// Coefficients of `theta^2 + a theta + b`.
    pub a: f64,
    pub b: f64,
    pub gamma: [Complex64; 2],
    /// Residues of the transform at `gamma`.
    pub c: [Complex64; 2],
    /// The residues without the leading coefficient `mu - lambda`.
    pub c_unscaled: [Complex64; 2],
}

impl DmCharacteristic {
    pub fn new(lambda: f64, mu: f64, period: f64) -> Result<Self> {
        positive("lambda", lambda)?;
        positive("mu", mu)?;
        positive("T", period)?;
        if lambda == mu {
            return Err(Error::EqualRates(lambda));
        }
        let (al, am) = (alpha(lambda, period), alpha(mu, period));
        let a = lambda + mu - lambda * mu * al / (mu - lambda) - lambda * mu * am / (lambda - mu);
        let b = lambda * mu
            - lambda * lambda * mu * am / (lambda - mu)
            - lambda * mu * mu * al / (mu - lambda);
        let disc = Complex64::new(a * a - 4.0 * b, 0.0).sqrt();
        let gamma = [(-a + disc) / 2.0, (-a - disc) / 2.0];
        if (gamma[0] - gamma[1]).norm() < 1e-8 {
            return Err(Error::RepeatedRoots(gamma[0].re));
        }
        let numerator =
            |t: Complex64| t * lambda * mu * (al - am) + lambda * mu * (mu * al - lambda * am);
        let c_unscaled = [
            numerator(gamma[0]) / (gamma[0] - gamma[1]),
            numerator(gamma[1]) / (gamma[1] - gamma[0]),
        ];
        let c = c_unscaled.map(|ci| ci / (mu - lambda));
        Ok(Self {
            lambda,
            mu,
            period,
            alpha_lambda: al,
            alpha_mu: am,
            a,
            b,
            gamma,
            c,
            c_unscaled,
        })
    }

    /// Denominator of the transform of the density, in its unreduced form.
    pub fn transform_denominator(&self, theta: Complex64) -> Complex64 {
        let (l, m, al, am) = (self.lambda, self.mu, self.alpha_lambda, self.alpha_mu);
        theta * theta * (m - l)
            + theta * ((m * m - l * l) + l * m * (am - al))
            + l * m * (m * (1.0 - al) - l * (1.0 - am))
    }

    pub fn quadratic(&self, theta: Complex64) -> Complex64 {
        theta * theta + self.a * theta + self.b
    }
}

/// Exponential service and vacations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormDM {
    #[serde(flatten)]
    pub modes: DmCharacteristic,
    #[serde(rename = "K")]
    pub deadline: f64,
    pub w0: f64,
    pub bk: f64,
    /// `bk / w0` from summing the loss series against the density.
    pub bk_coefficient: f64,
    /// Alternative coefficient that omits `e^{-rK}` on the integral terms.
    pub bk_coefficient_alt: f64,
    pub w0_alt: f64,
    pub bk_alt: f64,
}

/// Largest negative density tolerated on `(0, K)`.
const DENSITY_FLOOR: f64 = -1e-10;

pub fn dm_exp_solution(lambda: f64, mu: f64, period: f64, deadline: f64) -> Result<ClosedFormDM> {
    positive("K", deadline)?;
    let modes = DmCharacteristic::new(lambda, mu, period)?;
    let k = deadline;
    let integral = |shift: f64| -> f64 {
        // int_0^K e^{shift w} sum_i c_i e^{gamma_i w} dw
        (0..2)
            .map(|i| modes.c[i] * exprel_c(modes.gamma[i] + shift, k))
            .sum::<Complex64>()
            .re
    };
    let mass = integral(0.0);
    let (wl, wm) = (
        mu / (mu - lambda) * modes.alpha_lambda,
        lambda / (lambda - mu) * modes.alpha_mu,
    );
    let bk_coefficient = wl * (-lambda * k).exp() * (1.0 + integral(lambda))
        + wm * (-mu * k).exp() * (1.0 + integral(mu));
    let bk_coefficient_alt =
        wl * ((-lambda * k).exp() + integral(lambda)) + wm * ((-mu * k).exp() + integral(mu));
    let (w0, bk) = solve_atoms(mass, bk_coefficient);
    let (w0_alt, bk_alt) = solve_atoms(mass, bk_coefficient_alt);
    let solution = ClosedFormDM {
        modes,
        deadline,
        w0,
        bk,
        bk_coefficient,
        bk_coefficient_alt,
        w0_alt,
        bk_alt,
    };
    for i in 1..1000 {
        let x = k * i as f64 / 1000.0;
        let f = solution.density(x);
        if f < DENSITY_FLOOR {
            return Err(Error::NegativeDensity { x, value: f });
        }
    }
    Ok(solution)
}

impl StationaryLaw for ClosedFormDM {
    fn deadline(&self) -> f64 {
        self.deadline
    }

    fn w0(&self) -> f64 {
        self.w0
    }

    fn bk(&self) -> f64 {
        self.bk
    }

    fn density(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.deadline {
            return 0.0;
        }
        let m = &self.modes;
        self.w0 * (m.c[0] * (m.gamma[0] * x).exp() + m.c[1] * (m.gamma[1] * x).exp()).re
    }

    fn continuous_mass_to(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.deadline);
        let m = &self.modes;
        self.w0 * (m.c[0] * exprel_c(m.gamma[0], x) + m.c[1] * exprel_c(m.gamma[1], x)).re
    }
}

/// Proposed tail `P(w_{n+1} > x)` of the balking workload started empty,
/// with deterministic service `sigma` and exponential vacations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFormula {
    pub value: f64,
    /// True only for `n = 0`, where the formula is `P(sigma + v - T > x)`.
    pub validated: bool,
}

pub fn balking_transient_tail(
    lambda: f64,
    sigma: f64,
    period: f64,
    deadline: f64,
    n: usize,
    x: f64,
) -> TailFormula {
    let nf = n as f64;
    let mut binom = 1.0;
    let mut sum = 0.0;
    for j in 0..=n {
        if j > 0 {
            binom *= (n - j + 1) as f64 / j as f64;
        }
        let power = (n - j) as i32;
        sum += binom
            * (deadline * lambda).powi(power)
            * (-lambda * (x + (nf + 1.0) * period - (nf + 1.0 - j as f64) * sigma)).exp();
    }
    TailFormula {
        value: sum.clamp(0.0, 1.0),
        validated: n == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;
    use crate::model::{Discipline, DistributionSpec, QueueConfig};

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn ddet_constants() {
        let s = ddet_exp_solution(1.0, 0.5, 2.0, 3.0).unwrap();
        let al = (-2.0f64).exp() / (1.0 - (-2.0f64).exp());
        assert!((s.alpha_lambda - al).abs() < 1e-15);
        assert!((s.alpha_lambda - 0.156518).abs() < 1e-6);
        assert!((s.amplitude - al * 0.5f64.exp()).abs() < 1e-15);
        assert!((s.rate - (al * 0.5f64.exp() - 1.0)).abs() < 1e-15);
        // the quoted reference values 0.258086 / -0.741914 agree to 4e-5
        assert!((s.amplitude - 0.258086).abs() < 5e-5);
        assert!((s.rate + 0.741914).abs() < 5e-5);
        assert!(s.normalization_error() < 1e-12);
        assert!(s.w0 > 0.0 && s.w0 <= 1.0 && (0.0..1.0).contains(&s.bk));
    }

    #[test]
    fn ddet_quadrature_and_loss_series() {
        let s = ddet_exp_solution(1.0, 0.5, 2.0, 3.0).unwrap();
        let mass = simpson(|x| s.density(x), 0.0, 3.0, 2000);
        assert!((mass - (1.0 - s.w0 - s.bk)).abs() < 1e-8);

        let config = QueueConfig::new(
            2.0,
            3.0,
            DistributionSpec::deterministic(0.5).unwrap(),
            DistributionSpec::exponential(1.0).unwrap(),
            Discipline::Reneging,
        )
        .unwrap();
        let p = KernelParams::new(&config).unwrap();
        let bk = s.w0 * p.loss_sum(0.0) + simpson(|w| p.loss_sum(w) * s.density(w), 0.0, 3.0, 2000);
        assert!((bk - s.bk).abs() < 1e-10, "{bk} vs {}", s.bk);
    }

    #[test]
    fn ddet_rejects_unstable() {
        assert!(matches!(
            ddet_exp_solution(1.0, 2.0, 2.0, 3.0),
            Err(Error::Unstable { .. })
        ));
        assert!(ddet_exp_solution(0.0, 0.5, 2.0, 3.0).is_err());
    }

    #[test]
    fn resolvent_matches_density() {
        let s = ddet_exp_solution(1.0, 0.5, 2.0, 3.0).unwrap();
        assert!((volterra_resolvent_density(&s, 1.0) - s.density(1.0)).abs() < 1e-12);
        assert!((volterra_resolvent_density(&s, 0.0) - s.w0 * s.amplitude).abs() < 1e-15);
    }

    #[test]
    fn dm_constants() {
        let m = DmCharacteristic::new(1.0, 2.0, 1.0).unwrap();
        assert!((m.a - 2.149082).abs() < 1e-6);
        assert!((m.b + 0.014872).abs() < 1e-6);
        assert!((m.gamma[0].re - 0.0068978).abs() < 1e-6);
        assert!((m.gamma[1].re + 2.1559797).abs() < 1e-6);
        assert!(((m.gamma[0] * m.gamma[1]).re - m.b).abs() < 1e-12);
        assert!(((m.gamma[0] + m.gamma[1]).re + m.a).abs() < 1e-12);
        for g in m.gamma {
            assert!(m.quadratic(g).norm() < 1e-12);
            assert!(m.transform_denominator(g).norm() < 1e-12);
        }
        assert!(matches!(
            DmCharacteristic::new(1.0, 1.0, 1.0),
            Err(Error::EqualRates(_))
        ));
    }

    #[test]
    fn dm_residues_reproduce_the_transform() {
        // sum c_i / (theta - gamma_i) = numerator / denominator
        let m = DmCharacteristic::new(1.0, 2.0, 1.0).unwrap();
        let (l, mu, al, am) = (m.lambda, m.mu, m.alpha_lambda, m.alpha_mu);
        for theta in [0.5, 1.0, 3.0] {
            let t = Complex64::new(theta, 0.0);
            let lhs: Complex64 = (0..2).map(|i| m.c[i] / (t - m.gamma[i])).sum();
            let rhs =
                (t * l * mu * (al - am) + l * mu * (mu * al - l * am)) / m.transform_denominator(t);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn dm_normalization_and_loss_series() {
        let s = dm_exp_solution(1.0, 2.0, 1.0, 2.0).unwrap();
        assert!(s.normalization_error() < 1e-12);
        let mass = simpson(|x| s.density(x), 0.0, 2.0, 2000);
        assert!((mass - (1.0 - s.w0 - s.bk)).abs() < 1e-8);

        let config = QueueConfig::new(
            1.0,
            2.0,
            DistributionSpec::exponential(2.0).unwrap(),
            DistributionSpec::exponential(1.0).unwrap(),
            Discipline::Reneging,
        )
        .unwrap();
        let p = KernelParams::new(&config).unwrap();
        let bk = s.w0 * p.loss_sum(0.0) + simpson(|w| p.loss_sum(w) * s.density(w), 0.0, 2.0, 2000);
        assert!((bk - s.bk).abs() < 1e-10, "{bk} vs {}", s.bk);
    }

    #[test]
    fn conjugate_modes_give_real_density() {
        let mut s = dm_exp_solution(1.0, 2.0, 1.0, 2.0).unwrap();
        let (g, c) = (Complex64::new(-0.3, 1.7), Complex64::new(0.4, -0.25));
        s.modes.gamma = [g, g.conj()];
        s.modes.c = [c, c.conj()];
        for &x in &[0.1, 0.7, 1.9] {
            let real_form =
                2.0 * (g.re * x).exp() * (c.re * (g.im * x).cos() - c.im * (g.im * x).sin());
            assert!((s.density(x) - s.w0 * real_form).abs() < 1e-14);
            let mass = simpson(|y| s.density(y), 0.0, x, 2000);
            assert!((s.continuous_mass_to(x) - mass).abs() < 1e-12);
        }
    }

    #[test]
    fn proposition_tail_base_case() {
        let t = balking_transient_tail(1.0, 0.5, 2.0, 3.0, 0, 0.0);
        assert!((t.value - (-1.5f64).exp()).abs() < 1e-15);
        assert!(t.validated);
        assert!(balking_transient_tail(1.0, 0.5, 2.0, 3.0, 0, 1e3).value < 1e-300);
        let t = balking_transient_tail(1.0, 0.5, 2.0, 3.0, 2, 1.0);
        assert!(!t.validated);
        // n = 2: K^2 e^{-lambda(x + 3T - 3 sigma)} + 2 K e^{...-2 sigma} + e^{...-sigma}
        let expected = 9.0 * (-(1.0 + 6.0 - 1.5f64)).exp()
            + 6.0 * (-(1.0 + 6.0 - 1.0f64)).exp()
            + (-(1.0 + 6.0 - 0.5f64)).exp();
        assert!((t.value - expected).abs() < 1e-15);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn vieta_and_denominator(lambda in 0.1f64..5.0, mu in 0.1f64..5.0, t in 0.1f64..5.0) {
            prop_assume!((lambda - mu).abs() > 1e-3);
            if let Ok(m) = DmCharacteristic::new(lambda, mu, t) {
                let scale = 1.0 + m.a.abs() + m.b.abs();
                prop_assert!(((m.gamma[0] * m.gamma[1]).re - m.b).abs() < 1e-10 * scale);
                prop_assert!(((m.gamma[0] + m.gamma[1]).re + m.a).abs() < 1e-10 * scale);
                for g in m.gamma {
                    prop_assert!(m.transform_denominator(g).norm() < 1e-10 * scale * (mu - lambda).abs().max(1.0));
                }
            }
        }

        #[test]
        fn characteristic_roots_are_real(lambda in 0.01f64..10.0, mu in 0.01f64..10.0, t in 0.01f64..10.0) {
            prop_assume!((lambda - mu).abs() > 1e-3);
            let m = DmCharacteristic::new(lambda, mu, t).unwrap();
            prop_assert_eq!(m.gamma[0].im, 0.0);
            prop_assert!(m.gamma[1].re < 0.0);
        }

        #[test]
        fn ddet_normalizes(lambda in 0.1f64..5.0, sigma in 0.0f64..2.0, dt in 0.05f64..3.0, k in 0.1f64..5.0) {
            let s = ddet_exp_solution(lambda, sigma, sigma + dt, k).unwrap();
            prop_assert!(s.normalization_error() < 1e-12);
            prop_assert!(s.amplitude > 0.0);
        }
    }
}
