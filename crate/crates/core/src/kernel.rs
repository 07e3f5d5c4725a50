//! The law `G` of `sigma + v` and the integral-equation kernels built on it.
//!
//! For a customer served with wait `w` and work `s = sigma + v`, the `n`
//! following customers are lost and the `(n+1)`-th is served with wait at
//! most `x` exactly when `b_n(w) <= s <= a_n(x, w)`, where
//!
//! ```text
//! a_n(x, w) = x - w + (n + 1) T
//! b_0(w)    = 0,   b_n(w) = K - w + n T   (n >= 1)
//! ```
//!
//! The kernel sum adds the probabilities of these disjoint windows; the loss
//! sum is the expected number of customers lost after a service started at
//! `w`. Both tail series are summed exactly when `G` has bounded support or an
//! exponential tail.

use crate::model::{DistributionSpec, Piece, QueueConfig};
use crate::{Error, Result};

/// Default truncation bound for tail series.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-12;

/// Cap on the number of directly summed tail terms.
pub const MAX_TAIL_TERMS: usize = 100_000;

/// Distribution of `sigma + v`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvolutionLaw {
    /// Deterministic service and vacation.
    Atom { at: f64 },
    /// Deterministic part plus an exponential part.
    ShiftedExponential { shift: f64, rate: f64 },
    /// Exponential vacation (`lambda`) plus exponential service (`mu`), `lambda != mu`.
    Hypoexponential { lambda: f64, mu: f64 },
    /// A tabulated law (as pieces) plus any other law.
    Mixture {
        pieces: Vec<Piece>,
        inner: DistributionSpec,
    },
}

/// Shape of `P(S > u)` for large `u`.
#[derive(Debug, Clone, PartialEq)]
enum TailShape {
    /// `P(S > u) = 0` beyond the support maximum.
    Bounded(f64),
    /// `P(S > u) = sum c_i exp(-r_i (u - from))` for `u >= from`.
    Exponential { from: f64, terms: Vec<(f64, f64)> },
}

impl ConvolutionLaw {
    pub fn new(service: &DistributionSpec, vacation: &DistributionSpec) -> Result<Self> {
        use DistributionSpec::*;
        Ok(match (service, vacation) {
            (Deterministic { value: a }, Deterministic { value: b }) => Self::Atom { at: a + b },
            (Deterministic { value }, Exponential { rate })
            | (Exponential { rate }, Deterministic { value }) => Self::ShiftedExponential {
                shift: *value,
                rate: *rate,
            },
            (Exponential { rate: mu }, Exponential { rate: lambda }) => {
                if mu == lambda {
                    return Err(Error::EqualRates(*mu));
                }
                Self::Hypoexponential {
                    lambda: *lambda,
                    mu: *mu,
                }
            }
            (Tabulated { table }, other) | (other, Tabulated { table }) => Self::Mixture {
                pieces: table.pieces().collect(),
                inner: other.clone(),
            },
        })
    }

    /// `G(x) = P(S <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_impl(x, true)
    }

    /// `P(S < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.cdf_impl(x, false)
    }

    fn cdf_impl(&self, x: f64, inclusive: bool) -> f64 {
        match self {
            Self::Atom { at } => {
                let hit = if inclusive { *at <= x } else { *at < x };
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            Self::ShiftedExponential { shift, rate } => {
                if x <= *shift {
                    0.0
                } else {
                    -(-rate * (x - shift)).exp_m1()
                }
            }
            Self::Hypoexponential { .. } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - self.survival(x)
                }
            }
            Self::Mixture { pieces, inner } => pieces
                .iter()
                .map(|p| {
                    let inner_avg = if p.is_atom() {
                        if inclusive {
                            inner.cdf(x - p.lo)
                        } else {
                            inner.cdf_left(x - p.lo)
                        }
                    } else {
                        (inner.cdf_integral(x - p.lo) - inner.cdf_integral(x - p.hi))
                            / (p.hi - p.lo)
                    };
                    p.mass * inner_avg
                })
                .sum::<f64>()
                .clamp(0.0, 1.0),
        }
    }

    /// `P(S > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            Self::ShiftedExponential { shift, rate } => {
                if x <= *shift {
                    1.0
                } else {
                    (-rate * (x - shift)).exp()
                }
            }
            Self::Hypoexponential { lambda, mu } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (mu * (-lambda * x).exp() - lambda * (-mu * x).exp()) / (mu - lambda)
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    /// `P(S >= x)`.
    pub fn survival_inclusive(&self, x: f64) -> f64 {
        match self {
            Self::Atom { .. } | Self::Mixture { .. } => 1.0 - self.cdf_left(x),
            _ => self.survival(x),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Atom { at } => *at,
            Self::ShiftedExponential { shift, rate } => shift + 1.0 / rate,
            Self::Hypoexponential { lambda, mu } => 1.0 / lambda + 1.0 / mu,
            Self::Mixture { pieces, inner } => {
                pieces
                    .iter()
                    .map(|p| p.mass * 0.5 * (p.lo + p.hi))
                    .sum::<f64>()
                    + inner.mean()
            }
        }
    }

    fn tail_shape(&self) -> TailShape {
        match self {
            Self::Atom { at } => TailShape::Bounded(*at),
            Self::ShiftedExponential { shift, rate } => TailShape::Exponential {
                from: *shift,
                terms: vec![(1.0, *rate)],
            },
            Self::Hypoexponential { lambda, mu } => TailShape::Exponential {
                from: 0.0,
                terms: vec![(mu / (mu - lambda), *lambda), (lambda / (lambda - mu), *mu)],
            },
            Self::Mixture { pieces, inner } => {
                let top = pieces.iter().map(|p| p.hi).fold(0.0, f64::max);
                match (inner, inner.support_max()) {
                    (DistributionSpec::Exponential { rate }, _) => {
                        // P(S > u) = exp(-r (u - top)) * sum_p mass E[exp(-r (top - U))]
                        let coef = pieces
                            .iter()
                            .map(|p| {
                                let avg = if p.is_atom() {
                                    (-rate * (top - p.lo)).exp()
                                } else {
                                    ((-rate * (top - p.hi)).exp() - (-rate * (top - p.lo)).exp())
                                        / (rate * (p.hi - p.lo))
                                };
                                p.mass * avg
                            })
                            .sum();
                        TailShape::Exponential {
                            from: top,
                            terms: vec![(coef, *rate)],
                        }
                    }
                    (_, Some(inner_max)) => TailShape::Bounded(top + inner_max),
                    (_, None) => unreachable!("only exponential laws are unbounded"),
                }
            }
        }
    }
}

/// Precomputed kernel machinery for one configuration.
#[derive(Debug, Clone)]
pub struct KernelParams {
    config: QueueConfig,
    law: ConvolutionLaw,
    tail: TailShape,
    alpha_lambda: Option<f64>,
    alpha_mu: Option<f64>,
    truncation_eps: f64,
}

/// `e^{-rT} / (1 - e^{-rT})`, the sum of `e^{-r n T}` over `n >= 1`.
pub fn alpha(rate: f64, period: f64) -> f64 {
    1.0 / (rate * period).exp_m1()
}

/// `(a_n(x, w), b_n(w))`.
pub fn ab_sequences(x: f64, w: f64, n: usize, period: f64, deadline: f64) -> (f64, f64) {
    let nf = n as f64;
    let a = x - w + (nf + 1.0) * period;
    let b = if n == 0 {
        0.0
    } else {
        deadline - w + nf * period
    };
    (a, b)
}

/// `G(x)` for the configuration's service and vacation laws.
pub fn conv_cdf(config: &QueueConfig, x: f64) -> Result<f64> {
    Ok(ConvolutionLaw::new(&config.service, &config.vacation)?.cdf(x))
}

impl KernelParams {
    pub fn new(config: &QueueConfig) -> Result<Self> {
        config.validate()?;
        let law = ConvolutionLaw::new(&config.service, &config.vacation)?;
        let tail = law.tail_shape();
        let reach = match &tail {
            TailShape::Bounded(max) => *max,
            TailShape::Exponential { from, .. } => *from,
        };
        let terms = (reach + config.deadline) / config.period + 2.0;
        if terms > MAX_TAIL_TERMS as f64 {
            return Err(Error::TruncationLimit {
                limit: MAX_TAIL_TERMS,
            });
        }
        let rate_of = |spec: &DistributionSpec| match spec {
            DistributionSpec::Exponential { rate } => Some(alpha(*rate, config.period)),
            _ => None,
        };
        Ok(Self {
            config: config.clone(),
            alpha_lambda: rate_of(&config.vacation),
            alpha_mu: rate_of(&config.service),
            law,
            tail,
            truncation_eps: DEFAULT_TRUNCATION_EPS,
        })
    }

    pub fn with_truncation_eps(mut self, eps: f64) -> Self {
        self.truncation_eps = eps;
        self
    }

    pub fn config(&self) -> &QueueConfig {
        &self.config
    }

    pub fn law(&self) -> &ConvolutionLaw {
        &self.law
    }

    pub fn alpha_lambda(&self) -> Option<f64> {
        self.alpha_lambda
    }

    pub fn alpha_mu(&self) -> Option<f64> {
        self.alpha_mu
    }

    pub fn truncation_eps(&self) -> f64 {
        self.truncation_eps
    }

    pub fn conv_cdf(&self, x: f64) -> f64 {
        self.law.cdf(x)
    }

    /// `sum_{m >= 0} P(S > u + m T)`, or `P(S >= u + m T)` when `inclusive`.
    pub fn survival_sum(&self, u: f64, inclusive: bool) -> f64 {
        let t = self.config.period;
        let surv = |v: f64| {
            if inclusive {
                self.law.survival_inclusive(v)
            } else {
                self.law.survival(v)
            }
        };
        let mut total = 0.0;
        let mut m = 0usize;
        match &self.tail {
            TailShape::Bounded(max) => loop {
                let v = u + m as f64 * t;
                if v > *max || (!inclusive && v == *max) {
                    break;
                }
                let s = surv(v);
                if s < self.truncation_eps && v > 0.0 {
                    break;
                }
                total += s;
                m += 1;
            },
            TailShape::Exponential { from, terms } => {
                let mut v = u;
                while v < *from {
                    total += surv(v);
                    m += 1;
                    v = u + m as f64 * t;
                }
                total += terms
                    .iter()
                    .map(|&(c, r)| c * (-r * (v - from)).exp() / -(-r * t).exp_m1())
                    .sum::<f64>();
            }
        }
        total
    }

    /// `sum_{n >= 0} P(b_n(w) <= S <= a_n(x, w))` for `0 <= x, w < K`.
    ///
    /// When `x + T < K` every window with `n >= 1` is empty and the value is
    /// exactly `G(x - w + T)`.
    pub fn kernel_sum(&self, x: f64, w: f64) -> f64 {
        let (t, k) = (self.config.period, self.config.deadline);
        let head = self.law.cdf(x - w + t);
        if x + t < k {
            return head;
        }
        // sum_{n>=1} [G(a_n) - G(b_n^-)] = sum P(S >= b_n) - sum P(S > a_n)
        let windows =
            self.survival_sum(k - w + t, true) - self.survival_sum(x - w + 2.0 * t, false);
        (head + windows).clamp(0.0, 1.0)
    }

    /// Expected number of customers lost after a service started at wait `w`:
    /// `sum_{n >= 1} P(S >= K - w + n T)`.
    pub fn loss_sum(&self, w: f64) -> f64 {
        let (t, k) = (self.config.period, self.config.deadline);
        self.survival_sum(k - w + t, true)
    }
}
