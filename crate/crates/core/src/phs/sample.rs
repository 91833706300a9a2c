//! Quasi-random sample points for numeric certificates.

use std::fmt;

/// A parameter interval; either end may be infinite and open or closed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl ParamRange {
    pub const REAL: ParamRange = ParamRange {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        lo_closed: false,
        hi_closed: false,
    };

    pub fn positive() -> Self {
        ParamRange {
            lo: 0.0,
            lo_closed: false,
            ..Self::REAL
        }
    }

    pub fn nonnegative() -> Self {
        ParamRange {
            lo: 0.0,
            lo_closed: true,
            ..Self::REAL
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_closed { v >= self.lo } else { v > self.lo };
        let below = if self.hi_closed { v <= self.hi } else { v < self.hi };
        above && below
    }

    /// Maps `u ∈ (0, 1)` into the interval.
    pub fn map(&self, u: f64) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => self.lo + u * (self.hi - self.lo),
            (true, false) => self.lo + u / (1.0 - u),
            (false, true) => self.hi - u / (1.0 - u),
            (false, false) => (std::f64::consts::PI * (u - 0.5)).tan(),
        }
    }
}

impl fmt::Display for ParamRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let end = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else if v.fract() == 0.0 {
                format!("{}", v as i64)
            } else {
                format!("{v:?}")
            }
        };
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            end(self.lo),
            end(self.hi),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

fn nth_prime(k: usize) -> u64 {
    let mut count = 0;
    let mut n = 1u64;
    loop {
        n += 1;
        if (2..n).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d)) {
            if count == k {
                return n;
            }
            count += 1;
        }
    }
}

/// Radical inverse of `index` in base `p_dim` (dimension `dim` of the Halton sequence).
pub fn halton(index: u64, dim: usize) -> f64 {
    let b = nth_prime(dim);
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}
