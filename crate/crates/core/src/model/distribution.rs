use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A service-time or vacation-time law.
///
/// Tabulated laws are given as an inverse CDF: probability levels strictly
/// increasing from 0 to 1, paired with nondecreasing quantiles, linearly
/// interpolated. Between two distinct quantiles the law is uniform; a run of
/// equal quantiles is an atom.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Tabulated { table: QuantileTable },
}

/// Inverse-CDF table of a tabulated law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileTable {
    levels: Vec<f64>,
    quantiles: Vec<f64>,
}

/// One linear piece of a tabulated law: uniform on `[lo, hi]` carrying `mass`,
/// or an atom at `lo` when `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

impl Piece {
    pub fn is_atom(&self) -> bool {
        self.hi <= self.lo
    }
}

#[derive(Deserialize)]
struct TableRow {
    p: f64,
    q: f64,
}

impl QuantileTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidDistribution(msg));
        if points.len() < 2 {
            return invalid("a quantile table needs at least two rows".into());
        }
        let (levels, quantiles): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if levels.iter().chain(&quantiles).any(|v| !v.is_finite()) {
            return invalid("quantile table contains a non-finite value".into());
        }
        if levels[0] != 0.0 || *levels.last().unwrap() != 1.0 {
            return invalid("probability levels must start at 0 and end at 1".into());
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("probability levels must be strictly increasing".into());
        }
        if quantiles[0] < 0.0 {
            return invalid("quantiles must be nonnegative".into());
        }
        if quantiles.windows(2).any(|w| w[1] < w[0]) {
            return invalid("quantiles must be nondecreasing".into());
        }
        Ok(Self { levels, quantiles })
    }

    /// Reads a two-column `p,q` CSV file (header required).
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "p" || &headers[1] != "q" {
            return Err(Error::InvalidDistribution(format!(
                "{}: expected header `p,q`",
                path.as_ref().display()
            )));
        }
        let mut points = Vec::new();
        for row in reader.deserialize() {
            let row: TableRow = row?;
            points.push((row.p, row.q));
        }
        Self::new(points)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn pieces(&self) -> impl Iterator<Item = Piece> + '_ {
        self.levels
            .windows(2)
            .zip(self.quantiles.windows(2))
            .map(|(p, q)| Piece {
                lo: q[0],
                hi: q[1],
                mass: p[1] - p[0],
            })
    }

    fn quantile(&self, u: f64) -> f64 {
        let i = match self.levels.partition_point(|&p| p <= u) {
            0 => 0,
            i if i >= self.levels.len() => self.levels.len() - 2,
            i => i - 1,
        };
        let (p0, p1) = (self.levels[i], self.levels[i + 1]);
        let (q0, q1) = (self.quantiles[i], self.quantiles[i + 1]);
        q0 + (q1 - q0) * (u - p0) / (p1 - p0)
    }

    fn max_quantile(&self) -> f64 {
        *self.quantiles.last().unwrap()
    }
}

/// `E[(x - U)^+]` for `U` uniform on the piece (or the atom).
fn piece_ramp(piece: &Piece, x: f64) -> f64 {
    if piece.is_atom() {
        return (x - piece.lo).max(0.0);
    }
    let (a, b) = (piece.lo, piece.hi);
    if x <= a {
        0.0
    } else if x >= b {
        x - 0.5 * (a + b)
    } else {
        (x - a) * (x - a) / (2.0 * (b - a))
    }
}

fn piece_cdf(piece: &Piece, x: f64, inclusive: bool) -> f64 {
    if piece.is_atom() {
        let hit = if inclusive {
            piece.lo <= x
        } else {
            piece.lo < x
        };
        return if hit { 1.0 } else { 0.0 };
    }
    ((x - piece.lo) / (piece.hi - piece.lo)).clamp(0.0, 1.0)
}

impl DistributionSpec {
    pub fn deterministic(value: f64) -> Result<Self> {
        let spec = Self::Deterministic { value };
        spec.validate()?;
        Ok(spec)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        let spec = Self::Exponential { rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self::Tabulated {
            table: QuantileTable::new(points)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Deterministic { value } if !(value >= 0.0 && value.is_finite()) => {
                Err(Error::InvalidDistribution(format!(
                    "deterministic value must be >= 0, got {value}"
                )))
            }
            Self::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => Err(
                Error::InvalidDistribution(format!("exponential rate must be > 0, got {rate}")),
            ),
            _ => Ok(()),
        }
    }

    /// Parses `det:<value>`, `exp:<rate>` or `tab:<path.csv>`.
    pub fn parse(text: &str) -> Result<Self> {
        let (kind, arg) = text.split_once(':').ok_or_else(|| {
            Error::InvalidDistribution(format!("`{text}`: expected det:<v>, exp:<r> or tab:<path>"))
        })?;
        let number = || {
            arg.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidDistribution(format!("`{arg}` is not a decimal number")))
        };
        match kind.trim() {
            "det" => Self::deterministic(number()?),
            "exp" => Self::exponential(number()?),
            "tab" => Ok(Self::Tabulated {
                table: QuantileTable::from_csv_path(arg.trim())?,
            }),
            other => Err(Error::InvalidDistribution(format!("unknown law `{other}`"))),
        }
    }

    /// Inverse-CDF sample for `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            Self::Deterministic { value } => *value,
            Self::Exponential { rate } => -(-u).ln_1p() / rate,
            Self::Tabulated { table } => table.quantile(u),
        }
    }

    /// Right-continuous CDF, `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_impl(x, true)
    }

    /// Left limit of the CDF, `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.cdf_impl(x, false)
    }

    fn cdf_impl(&self, x: f64, inclusive: bool) -> f64 {
        match self {
            Self::Deterministic { value } => {
                let hit = if inclusive { *value <= x } else { *value < x };
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Self::Tabulated { table } => {
                if x >= table.max_quantile() && (inclusive || x > table.max_quantile()) {
                    return 1.0;
                }
                table
                    .pieces()
                    .map(|p| p.mass * piece_cdf(&p, x, inclusive))
                    .sum::<f64>()
                    .min(1.0)
            }
        }
    }

    /// `P(X > x)`, computed without cancellation where a closed form exists.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            Self::Exponential { rate } if x > 0.0 => (-rate * x).exp(),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// `int_0^x F(t) dt = E[(x - X)^+]`.
    pub fn cdf_integral(&self, x: f64) -> f64 {
        match self {
            Self::Deterministic { value } => (x - value).max(0.0),
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    x + (-rate * x).exp_m1() / rate
                }
            }
            Self::Tabulated { table } => table.pieces().map(|p| p.mass * piece_ramp(&p, x)).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Deterministic { value } => *value,
            Self::Exponential { rate } => 1.0 / rate,
            Self::Tabulated { table } => table.pieces().map(|p| p.mass * 0.5 * (p.lo + p.hi)).sum(),
        }
    }

    /// Upper end of the support, `None` when unbounded.
    pub fn support_max(&self) -> Option<f64> {
        match self {
            Self::Deterministic { value } => Some(*value),
            Self::Exponential { .. } => None,
            Self::Tabulated { table } => Some(table.max_quantile()),
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Deterministic { value } => write!(f, "det:{value}"),
            Self::Exponential { rate } => write!(f, "exp:{rate}"),
            Self::Tabulated { table } => write!(f, "tab:<{} rows>", table.levels.len()),
        }
    }
}
