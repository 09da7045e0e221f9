use std::cmp::Ordering;
use std::fmt;

/// Exponent vector α ∈ ℕ₀ⁿ. Ordered by total degree, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn with(&self, i: usize, value: u32) -> MultiIndex {
        let mut v = self.0.clone();
        v[i] = value;
        MultiIndex(v)
    }

    /// `+1` when |α| is even, `-1` otherwise.
    pub fn parity(&self) -> i32 {
        if self.degree().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// All multi-indices in `n` variables of total degree exactly `d`, in ascending order.
    pub fn of_degree(n: usize, d: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fn rec(i: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            let n = cur.len();
            if i + 1 == n {
                cur[i] = left as u32;
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for a in 0..=left {
                cur[i] = a as u32;
                rec(i + 1, left - a, cur, out);
            }
        }
        if n == 0 {
            if d == 0 {
                out.push(MultiIndex(Vec::new()));
            }
            return out;
        }
        rec(0, d, &mut cur, &mut out);
        out.sort();
        out
    }

    /// All multi-indices of degree at most `d`, ascending.
    pub fn up_to_degree(n: usize, d: usize) -> Vec<MultiIndex> {
        (0..=d).flat_map(|k| MultiIndex::of_degree(n, k)).collect()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts() {
        assert_eq!(MultiIndex::of_degree(2, 3).len(), 4);
        assert_eq!(MultiIndex::up_to_degree(3, 2).len(), 10);
        let v = MultiIndex::of_degree(2, 1);
        assert_eq!(v[0], MultiIndex::new(vec![1, 0]));
    }

    #[test]
    fn ordering_is_graded() {
        assert!(MultiIndex::new(vec![0, 1]) < MultiIndex::new(vec![2, 0]));
        assert!(MultiIndex::new(vec![1, 0]) < MultiIndex::new(vec![0, 1]));
    }
}
