//! Candidate invalid-instrument sets.

use itertools::Itertools;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// A set `B` of instruments treated as possibly invalid, stored as sorted
/// 0-based indices into `0..l`. Serialized 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetB {
    indices: Vec<usize>,
    l: usize,
}

impl SubsetB {
    /// At least one instrument must remain outside `B`.
    pub fn new(mut indices: Vec<usize>, l: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate index in subset {indices:?}")));
        }
        if let Some(&m) = indices.last() {
            if m >= l {
                return Err(Error::InvalidArgument(format!(
                    "subset index {} out of range for L = {l}",
                    m + 1
                )));
            }
        }
        if indices.len() + 1 > l {
            return Err(Error::InvalidArgument(format!(
                "subset of size {} leaves no instrument for identification (L = {l})",
                indices.len()
            )));
        }
        Ok(SubsetB { indices, l })
    }

    pub fn empty(l: usize) -> Self {
        SubsetB { indices: Vec::new(), l }
    }

    /// Build from 1-based labels as a user would write them.
    pub fn from_one_based(labels: &[usize], l: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidArgument("subset labels are 1-based".into()));
        }
        Self::new(labels.iter().map(|i| i - 1).collect(), l)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// c(B).
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.l).filter(|j| !self.contains(*j)).collect()
    }

    pub fn is_superset_of(&self, other: &[usize]) -> bool {
        other.iter().all(|j| self.contains(*j))
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }
}

impl std::fmt::Display for SubsetB {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{{}}}", self.one_based().iter().join(","))
    }
}

impl Serialize for SubsetB {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

/// All subsets of size `size` of `0..l`, in lexicographic order.
pub fn enumerate(l: usize, size: usize) -> Result<Vec<SubsetB>> {
    if size + 1 > l {
        return Err(Error::InvalidArgument(format!(
            "cannot enumerate subsets of size {size} with L = {l}"
        )));
    }
    Ok((0..l)
        .combinations(size)
        .map(|indices| SubsetB { indices, l })
        .collect())
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts_and_order() {
        let all = enumerate(10, 4).unwrap();
        assert_eq!(all.len(), 210);
        assert_eq!(binomial(10, 4), 210);
        assert_eq!(all[0].indices(), &[0, 1, 2, 3]);
        assert_eq!(all[209].indices(), &[6, 7, 8, 9]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(enumerate(5, 0).unwrap(), vec![SubsetB::empty(5)]);
        assert!(enumerate(3, 3).is_err());
    }

    #[test]
    fn validation() {
        assert!(SubsetB::new(vec![0, 1], 2).is_err());
        assert!(SubsetB::new(vec![3], 3).is_err());
        assert!(SubsetB::new(vec![1, 1], 4).is_err());
        let b = SubsetB::from_one_based(&[3, 1], 4).unwrap();
        assert_eq!(b.indices(), &[0, 2]);
        assert_eq!(b.complement(), vec![1, 3]);
        assert_eq!(b.to_string(), "{1,3}");
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,3]");
    }
}
