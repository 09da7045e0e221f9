use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// An element of ℤ/2, stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfInt {
    pub doubled: i64,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { doubled: 0 };
    pub const HALF: HalfInt = HalfInt { doubled: 1 };
    pub const ONE: HalfInt = HalfInt { doubled: 2 };

    pub const fn from_doubled(doubled: i64) -> Self {
        HalfInt { doubled }
    }

    pub const fn int(v: i64) -> Self {
        HalfInt { doubled: 2 * v }
    }

    pub fn is_integer(self) -> bool {
        self.doubled % 2 == 0
    }

    pub fn to_f64(self) -> f64 {
        self.doubled as f64 / 2.0
    }

    /// Largest integer not exceeding the value.
    pub fn floor(self) -> i64 {
        self.doubled.div_euclid(2)
    }

    /// Half-integer steps from `origin` to `self`.
    pub fn steps_from(self, origin: HalfInt) -> i64 {
        self.doubled - origin.doubled
    }

    /// Iterates `start, start + 1/2, ..., end` inclusive.
    pub fn range_inclusive(start: HalfInt, end: HalfInt) -> impl Iterator<Item = HalfInt> {
        (start.doubled..=end.doubled).map(HalfInt::from_doubled)
    }

    /// Multiplies by a non-negative integer.
    pub fn times(self, k: i64) -> HalfInt {
        HalfInt::from_doubled(self.doubled * k)
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, o: HalfInt) -> HalfInt {
        HalfInt::from_doubled(self.doubled + o.doubled)
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, o: HalfInt) -> HalfInt {
        HalfInt::from_doubled(self.doubled - o.doubled)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt::from_doubled(-self.doubled)
    }
}

impl AddAssign for HalfInt {
    fn add_assign(&mut self, o: HalfInt) {
        self.doubled += o.doubled;
    }
}

impl SubAssign for HalfInt {
    fn sub_assign(&mut self, o: HalfInt) {
        self.doubled -= o.doubled;
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.doubled / 2)
        } else {
            write!(f, "{}/2", self.doubled)
        }
    }
}

impl FromStr for HalfInt {
    type Err = String;

    /// Accepts `3`, `7/2` and `3.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || format!("'{s}' is not a multiple of 1/2");
        if let Some((p, q)) = s.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| err())?;
            return match q.trim() {
                "1" => Ok(HalfInt::int(p)),
                "2" => Ok(HalfInt::from_doubled(p)),
                _ => Err(err()),
            };
        }
        if let Ok(v) = s.parse::<i64>() {
            return Ok(HalfInt::int(v));
        }
        let v: f64 = s.parse().map_err(|_| err())?;
        let d = (2.0 * v).round();
        if (2.0 * v - d).abs() > 1e-12 {
            return Err(err());
        }
        Ok(HalfInt::from_doubled(d as i64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!("7/2".parse::<HalfInt>().unwrap(), HalfInt::from_doubled(7));
        assert_eq!("3.5".parse::<HalfInt>().unwrap(), HalfInt::from_doubled(7));
        assert_eq!("4".parse::<HalfInt>().unwrap(), HalfInt::int(4));
        assert!("1/3".parse::<HalfInt>().is_err());
        assert_eq!(HalfInt::from_doubled(-3).to_string(), "-3/2");
        assert_eq!(HalfInt::from_doubled(-3).floor(), -2);
    }
}
