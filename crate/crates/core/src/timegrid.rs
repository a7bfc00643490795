//! Irregular observation timelines.
//!
//! Time-points are stored as integer multiples ("ticks") of a decimal
//! resolution so that gap arithmetic and the gcd of the gaps are exact.
//! Floating-point values only appear at the API boundary.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An exact decimal resolution `mantissa * 10^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Resolution {
    mantissa: u64,
    exponent: i32,
}

impl Default for Resolution {
    /// One micro time unit.
    fn default() -> Self {
        Resolution {
            mantissa: 1,
            exponent: -6,
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}e{}", self.mantissa, self.exponent)
    }
}

impl Resolution {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "resolution must be a positive finite number, got {value}"
            )));
        }
        // shortest round-trip representation, e.g. "1e-6" or "0.25"
        Self::parse(&format!("{value:e}"))
    }

    /// Parses a decimal literal such as `0.5` or `1e-6`.
    pub fn parse(text: &str) -> Result<Self> {
        let (digits, exponent) = parse_decimal(text)?;
        if digits <= 0 {
            return Err(Error::InvalidParameter(format!(
                "resolution must be positive, got `{text}`"
            )));
        }
        let (mut digits, mut exponent) = (digits, exponent);
        while digits % 10 == 0 {
            digits /= 10;
            exponent += 1;
        }
        let mantissa = u64::try_from(digits)
            .map_err(|_| Error::InvalidParameter(format!("resolution `{text}` too large")))?;
        Ok(Resolution { mantissa, exponent })
    }

    pub fn unit() -> Self {
        Resolution {
            mantissa: 1,
            exponent: 0,
        }
    }

    pub fn as_f64(&self) -> f64 {
        self.mantissa as f64 * 10f64.powi(self.exponent)
    }

    pub fn to_time(&self, ticks: i64) -> f64 {
        // exact for the common mantissa=1 case up to f64 rounding of 10^e
        if self.exponent >= 0 {
            ticks as f64 * self.as_f64()
        } else {
            ticks as f64 * self.mantissa as f64 / 10f64.powi(-self.exponent)
        }
    }

    /// Exact decimal text of `ticks` at this resolution, e.g. `12.25`.
    pub fn format_ticks(&self, ticks: i64) -> String {
        let value = ticks as i128 * self.mantissa as i128;
        let (sign, digits) = if value < 0 {
            ("-", (-value).to_string())
        } else {
            ("", value.to_string())
        };
        if self.exponent >= 0 {
            let zeros = if value == 0 {
                0
            } else {
                self.exponent as usize
            };
            return format!("{sign}{digits}{}", "0".repeat(zeros));
        }
        let frac = (-self.exponent) as usize;
        let padded = format!("{digits:0>width$}", width = frac + 1);
        let (int_part, frac_part) = padded.split_at(padded.len() - frac);
        let frac_part = frac_part.trim_end_matches('0');
        if frac_part.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac_part}")
        }
    }

    /// Converts a decimal literal to ticks, failing unless it is an exact
    /// multiple of the resolution.
    pub fn ticks_from_str(&self, text: &str) -> Result<i64> {
        let (digits, exponent) = parse_decimal(text)?;
        let shift = exponent - self.exponent;
        let m = self.mantissa as i128;
        let overflow = || Error::Data(format!("time `{text}` overflows at resolution {self}"));
        let ticks = if shift >= 0 {
            let scaled = digits
                .checked_mul(pow10(shift as u32).ok_or_else(overflow)?)
                .ok_or_else(overflow)?;
            if scaled % m != 0 {
                return Err(not_multiple(text, self));
            }
            scaled / m
        } else {
            let divisor = m
                .checked_mul(pow10((-shift) as u32).ok_or_else(overflow)?)
                .ok_or_else(overflow)?;
            if digits % divisor != 0 {
                return Err(not_multiple(text, self));
            }
            digits / divisor
        };
        i64::try_from(ticks).map_err(|_| overflow())
    }

    /// Converts a float to ticks; the value must sit on the resolution grid
    /// up to float rounding.
    pub fn ticks_from_f64(&self, value: f64) -> Result<i64> {
        if !value.is_finite() {
            return Err(Error::InvalidTimeline(format!("non-finite time {value}")));
        }
        let raw = value / self.as_f64();
        let ticks = raw.round();
        if (raw - ticks).abs() > 1e-6 || ticks.abs() > 9.0e18 {
            return Err(not_multiple(&value.to_string(), self));
        }
        Ok(ticks as i64)
    }
}

fn not_multiple(text: &str, res: &Resolution) -> Error {
    Error::Data(format!(
        "time `{text}` is not a multiple of the resolution {res}"
    ))
}

fn pow10(e: u32) -> Option<i128> {
    10i128.checked_pow(e)
}

/// Parses `[-]digits[.digits][e[-]digits]` into `(digits, exponent)`.
fn parse_decimal(text: &str) -> Result<(i128, i32)> {
    let bad = || Error::Data(format!("cannot parse `{text}` as a decimal number"));
    let s = text.trim();
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let mut digits: i128 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(10).ok_or_else(bad)? as i128;
        digits = digits
            .checked_mul(10)
            .and_then(|v| v.checked_add(d))
            .ok_or_else(bad)?;
    }
    let exponent = exp - frac_part.len() as i32;
    Ok((if neg { -digits } else { digits }, exponent))
}

/// Observation time-points of one entity, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    entity: String,
    ticks: Vec<i64>,
    resolution: Resolution,
}

impl Timeline {
    pub fn from_ticks(
        entity: impl Into<String>,
        ticks: Vec<i64>,
        resolution: Resolution,
    ) -> Result<Self> {
        if ticks.is_empty() {
            return Err(Error::InvalidTimeline("timeline is empty".into()));
        }
        if let Some(w) = ticks.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTimeline(format!(
                "times not strictly increasing at {} -> {}",
                resolution.to_time(w[0]),
                resolution.to_time(w[1])
            )));
        }
        Ok(Timeline {
            entity: entity.into(),
            ticks,
            resolution,
        })
    }

    pub fn from_times(
        entity: impl Into<String>,
        times: &[f64],
        resolution: Resolution,
    ) -> Result<Self> {
        let ticks = times
            .iter()
            .map(|&t| resolution.ticks_from_f64(t))
            .collect::<Result<Vec<_>>>()?;
        Self::from_ticks(entity, ticks, resolution)
    }

    /// Builds a timeline from unsorted, possibly repeated ticks.
    pub fn from_unsorted(
        entity: impl Into<String>,
        mut ticks: Vec<i64>,
        resolution: Resolution,
    ) -> Result<Self> {
        ticks.sort_unstable();
        ticks.dedup();
        Self::from_ticks(entity, ticks, resolution)
    }

    /// Sorted union of two timelines of the same entity; shared instants
    /// collapse into one slice.
    pub fn merge(&self, other: &Timeline) -> Result<Timeline> {
        if self.resolution != other.resolution {
            return Err(Error::InvalidParameter(
                "cannot merge timelines with different resolutions".into(),
            ));
        }
        let mut ticks = self.ticks.clone();
        ticks.extend_from_slice(&other.ticks);
        Self::from_unsorted(self.entity.clone(), ticks, self.resolution)
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn ticks(&self) -> &[i64] {
        &self.ticks
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.ticks
            .iter()
            .map(|&t| self.resolution.to_time(t))
            .collect()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.resolution.to_time(self.ticks[index])
    }

    /// Prefix with the first `len` points.
    pub fn prefix(&self, len: usize) -> Result<Timeline> {
        Self::from_ticks(
            self.entity.clone(),
            self.ticks[..len.min(self.len())].to_vec(),
            self.resolution,
        )
    }
}

/// Consecutive time differences of a timeline and their exact gcd.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapSet {
    gaps: Vec<i64>,
    granularity: i64,
    resolution: Resolution,
}

impl GapSet {
    pub fn gap_ticks(&self) -> &[i64] {
        &self.gaps
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.gaps
            .iter()
            .map(|&g| self.resolution.to_time(g))
            .collect()
    }

    pub fn granularity_ticks(&self) -> i64 {
        self.granularity
    }

    pub fn granularity(&self) -> f64 {
        self.resolution.to_time(self.granularity)
    }
}

pub(crate) fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn gaps(timeline: &Timeline) -> Result<GapSet> {
    if timeline.len() < 2 {
        return Err(Error::NoGaps);
    }
    let gaps: Vec<i64> = timeline.ticks.windows(2).map(|w| w[1] - w[0]).collect();
    let granularity = gaps.iter().fold(0, |g, &x| gcd(g, x));
    Ok(GapSet {
        gaps,
        granularity,
        resolution: timeline.resolution,
    })
}

/// Number of slices a discrete-time model at granularity gcd(gaps) needs
/// to cover `[min, max]`, both endpoints included.
pub fn discrete_expansion_size(timeline: &Timeline) -> Result<u64> {
    let g = gaps(timeline)?;
    let span = timeline.ticks[timeline.len() - 1] - timeline.ticks[0];
    Ok((span / g.granularity) as u64 + 1)
}

pub fn compression_ratio(timeline: &Timeline) -> Result<f64> {
    Ok(discrete_expansion_size(timeline)? as f64 / timeline.len() as f64)
}

/// Timeline starting at 0 whose gaps are i.i.d. geometric on {1, 2, ...}.
pub fn simulate_geometric_timeline<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
) -> Result<Timeline> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "geometric success probability must lie in (0, 1], got {p}"
        )));
    }
    let resolution = Resolution::unit();
    let failures = Geometric::new(p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut ticks = Vec::with_capacity(n);
    let mut t: i64 = 0;
    ticks.push(t);
    for _ in 1..n {
        t += 1 + failures.sample(rng) as i64;
        ticks.push(t);
    }
    Timeline::from_ticks("simulated", ticks, resolution)
}

/// Summary of a Monte Carlo study of geometric timelines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionStudy {
    pub n: usize,
    pub p: f64,
    pub replicates: usize,
    pub mean_ratio: f64,
    pub expected_ratio: f64,
    pub prob_unit_granularity: f64,
}

pub fn compression_study<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<CompressionStudy> {
    if replicates == 0 || n < 2 {
        return Err(Error::InvalidParameter(
            "need n >= 2 and at least one replicate".into(),
        ));
    }
    let mut ratio_sum = 0.0;
    let mut unit = 0usize;
    for _ in 0..replicates {
        let tl = simulate_geometric_timeline(n, p, rng)?;
        ratio_sum += compression_ratio(&tl)?;
        if gaps(&tl)?.granularity_ticks() == 1 {
            unit += 1;
        }
    }
    Ok(CompressionStudy {
        n,
        p,
        replicates,
        mean_ratio: ratio_sum / replicates as f64,
        expected_ratio: 1.0 / p,
        prob_unit_granularity: unit as f64 / replicates as f64,
    })
}
