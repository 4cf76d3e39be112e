//! Milking-interval classes: a uniform grid of half-open bins symmetric about 12 h.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::record::Session;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalGrid<T> {
    pub lo: T,
    pub hi: T,
    pub width: T,
    pub bin_count: usize,
}

/// One interval class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRef<T> {
    pub index: usize,
    pub lo: T,
    pub hi: T,
    pub midpoint: T,
}

/// Result of locating an interval on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinLookup<T> {
    pub bin: BinRef<T>,
    /// The interval fell outside `[lo, hi)` and was moved to the edge bin.
    pub clamped: bool,
}

impl<T: Scalar> IntervalGrid<T> {
    /// Builds the grid `[lo, hi)` split into bins of `width` hours.
    pub fn build(lo: T, hi: T, width: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && width.is_finite()) {
            return Err(Error::Config("grid bounds must be finite".into()));
        }
        if !(lo < hi) {
            return Err(Error::Config(format!("grid lower bound {lo} must be below upper bound {hi}")));
        }
        if !(width > T::zero()) {
            return Err(Error::Config(format!("bin width must be positive, got {width}")));
        }
        if lo <= T::zero() {
            return Err(Error::Config("grid must start above 0 h".into()));
        }
        let tol = T::lit(1e-6);
        let span = (hi - lo) / width;
        let count = span.round();
        if (span - count).abs() > tol * span.max(T::one()) || count < T::one() {
            return Err(Error::Config(format!(
                "span {lo}..{hi} is not a whole number of {width} h bins"
            )));
        }
        if (lo + hi - T::lit(24.0)).abs() > tol {
            return Err(Error::Config(format!(
                "grid {lo}..{hi} is not symmetric about 12 h"
            )));
        }
        Ok(Self {
            lo,
            hi,
            width,
            bin_count: count.to_usize().unwrap_or(0),
        })
    }

    pub fn bin(&self, index: usize) -> BinRef<T> {
        debug_assert!(index < self.bin_count);
        let lo = self.lo + self.width * T::from_count(index);
        let hi = if index + 1 == self.bin_count {
            self.hi
        } else {
            self.lo + self.width * T::from_count(index + 1)
        };
        BinRef {
            index,
            lo,
            hi,
            midpoint: (lo + hi) / T::lit(2.0),
        }
    }

    pub fn bins(&self) -> impl Iterator<Item = BinRef<T>> + '_ {
        (0..self.bin_count).map(move |i| self.bin(i))
    }

    pub fn midpoints(&self) -> Vec<T> {
        self.bins().map(|b| b.midpoint).collect()
    }

    /// Locates `t`; values outside the grid are clamped to the edge bins.
    pub fn bin_of(&self, t: T) -> Result<BinLookup<T>> {
        if !(t > T::zero()) {
            return Err(Error::Domain(format!("interval must be positive, got {t}")));
        }
        if t < self.lo {
            return Ok(BinLookup {
                bin: self.bin(0),
                clamped: true,
            });
        }
        if t >= self.hi {
            return Ok(BinLookup {
                bin: self.bin(self.bin_count - 1),
                clamped: true,
            });
        }
        let mut idx = ((t - self.lo) / self.width)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(self.bin_count - 1);
        // Guard the floor against rounding at bin edges.
        let b = self.bin(idx);
        if t < b.lo && idx > 0 {
            idx -= 1;
        } else if t >= b.hi && idx + 1 < self.bin_count {
            idx += 1;
        }
        Ok(BinLookup {
            bin: self.bin(idx),
            clamped: false,
        })
    }

    /// Index of `t`'s bin, clamping out-of-range values.
    pub fn index_of(&self, t: T) -> Result<usize> {
        Ok(self.bin_of(t)?.bin.index)
    }

    /// Class of a milking of the given session. PM classes are the mirror
    /// images of AM classes (closed on the right rather than the left), so the
    /// two milkings of a day with `t_AM + t_PM = 24` always land in
    /// complementary classes, even when `t` sits exactly on a class edge.
    pub fn session_bin_of(&self, t: T, session: Session) -> Result<BinLookup<T>> {
        match session {
            Session::Am => self.bin_of(t),
            Session::Pm => {
                if !(t > T::zero()) {
                    return Err(Error::Domain(format!("interval must be positive, got {t}")));
                }
                let day = T::lit(24.0);
                if t >= day {
                    return Ok(BinLookup {
                        bin: self.bin(self.bin_count - 1),
                        clamped: true,
                    });
                }
                let mirror = self.bin_of(day - t)?;
                Ok(BinLookup {
                    bin: self.complement_bin(&mirror.bin),
                    clamped: mirror.clamped,
                })
            }
        }
    }

    pub fn session_index_of(&self, t: T, session: Session) -> Result<usize> {
        Ok(self.session_bin_of(t, session)?.bin.index)
    }

    /// The bin holding `24 - midpoint(b)`: the other milking of the same day.
    pub fn complement_bin(&self, b: &BinRef<T>) -> BinRef<T> {
        self.bin(self.bin_count - 1 - b.index)
    }
}

impl<T: Scalar> fmt::Display for IntervalGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.width)
    }
}

/// Parses `LO:HI:WIDTH`.
impl<T: Scalar> FromStr for IntervalGrid<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("grid spec {s:?} is not LO:HI:WIDTH")));
        }
        let num = |p: &str| -> Result<T> {
            p.trim()
                .parse::<f64>()
                .map(T::lit)
                .map_err(|_| Error::Config(format!("grid spec {s:?}: {p:?} is not a number")))
        };
        Self::build(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

impl<T: Scalar> Default for IntervalGrid<T> {
    /// 8–16 h in half-hour classes.
    fn default() -> Self {
        Self::build(T::lit(8.0), T::lit(16.0), T::lit(0.5)).expect("default grid is valid")
    }
}
