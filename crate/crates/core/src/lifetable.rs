//! Conversion of age-specific death rates to conditional probabilities of
//! dying (45q15, 35q15).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::{GroupId, Sex};

/// Default share of the interval lived by those who die in it.
pub const DEFAULT_A_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBin {
    pub lower: u32,
    pub upper: u32,
    /// Deaths per person-year.
    pub m: f64,
}

/// Contiguous schedule of age-specific death rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    bins: Vec<RateBin>,
}

impl RateSchedule {
    pub fn new(bins: Vec<RateBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Schedule("schedule has no bins".into()));
        }
        for b in &bins {
            if b.upper <= b.lower {
                return Err(Error::Schedule(format!("empty bin [{},{})", b.lower, b.upper)));
            }
            if !(b.m.is_finite() && b.m >= 0.0) {
                return Err(Error::Schedule(format!("bin [{},{}) has invalid rate {}", b.lower, b.upper, b.m)));
            }
        }
        for w in bins.windows(2) {
            if w[0].upper != w[1].lower {
                return Err(Error::Schedule(format!(
                    "bins [{},{}) and [{},{}) are not contiguous",
                    w[0].lower, w[0].upper, w[1].lower, w[1].upper
                )));
            }
        }
        Ok(RateSchedule { bins })
    }

    /// Constant rate over equal-width bins from `start` to `end`.
    pub fn constant(start: u32, end: u32, width: u32, m: f64) -> Result<Self> {
        let bins = (start..end)
            .step_by(width as usize)
            .map(|a| RateBin { lower: a, upper: (a + width).min(end), m })
            .collect();
        Self::new(bins)
    }

    /// Picks one sex out of a per-group rate table, ordered by age.
    pub fn for_sex(rates: &[(GroupId, f64)], sex: Sex) -> Result<Self> {
        let mut bins: Vec<RateBin> = rates
            .iter()
            .filter(|(g, _)| g.sex == sex)
            .map(|(g, m)| RateBin { lower: g.lower, upper: g.upper, m: *m })
            .collect();
        bins.sort_by_key(|b| b.lower);
        Self::new(bins)
    }

    pub fn bins(&self) -> &[RateBin] {
        &self.bins
    }
}

/// Probability of dying within an interval of `n` years at rate `m`, with
/// `a_factor` years lived on average by those who die.
pub fn rate_to_prob(m: f64, n: f64, a_factor: f64) -> f64 {
    debug_assert!(m >= 0.0 && n > 0.0 && a_factor > 0.0 && a_factor <= n);
    let q = n * m / (1.0 + (n - a_factor) * m);
    q.clamp(0.0, 1.0)
}

/// Probability of dying between `from_age` and `to_age` given survival to
/// `from_age`. Bins straddling the range are truncated and keep their rate.
pub fn conditional_q(schedule: &RateSchedule, from_age: u32, to_age: u32, a_fraction: f64) -> Result<f64> {
    if to_age <= from_age {
        return Err(Error::argument(format!("empty age range [{from_age},{to_age})")));
    }
    if !(a_fraction > 0.0 && a_fraction <= 1.0) {
        return Err(Error::argument(format!("a_fraction must be in (0,1], got {a_fraction}")));
    }
    let bins = schedule.bins();
    let first = bins[0].lower;
    let last = bins[bins.len() - 1].upper;
    if first > from_age {
        return Err(Error::Schedule(format!("no rates for ages [{from_age},{first})")));
    }
    if last < to_age {
        return Err(Error::Schedule(format!("no rates for ages [{last},{to_age})")));
    }
    let survival: f64 = bins
        .iter()
        .filter_map(|b| {
            let lo = b.lower.max(from_age);
            let hi = b.upper.min(to_age);
            (hi > lo).then(|| {
                let n = f64::from(hi - lo);
                1.0 - rate_to_prob(b.m, n, a_fraction * n)
            })
        })
        .product();
    Ok((1.0 - survival).clamp(0.0, 1.0))
}

/// 45q15.
pub fn q45_15(schedule: &RateSchedule) -> Result<f64> {
    conditional_q(schedule, 15, 60, DEFAULT_A_FRACTION)
}

/// 35q15, used when the frame stops short of age 60.
pub fn q35_15(schedule: &RateSchedule) -> Result<f64> {
    conditional_q(schedule, 15, 50, DEFAULT_A_FRACTION)
}
