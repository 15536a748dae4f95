use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::TokenizedPage;
use crate::scalar::Scalar;

pub const DEFAULT_DIM: usize = 1 << 18;

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `std`'s hasher.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn validate_dim(dim: usize) -> Result<()> {
    if !dim.is_power_of_two() || dim > u32::MAX as usize {
        return Err(Error::Config(format!(
            "feature dimension {dim} must be a power of two below 2^32"
        )));
    }
    Ok(())
}

pub fn feature_index(token: &str, dim: usize) -> u32 {
    (stable_hash(token.as_bytes()) & (dim as u64 - 1)) as u32
}

/// Sparse hashed feature vector; entries sorted by index, all weights positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureVector<T> {
    entries: Vec<(u32, T)>,
    dim: usize,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn empty(dim: usize) -> Self {
        FeatureVector {
            entries: Vec::new(),
            dim,
        }
    }

    /// Builds a vector from arbitrary `(index, weight)` pairs; duplicate
    /// indices are summed and non-positive weights dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, T)>) -> Result<Self> {
        let mut acc: BTreeMap<u32, T> = BTreeMap::new();
        for (i, w) in pairs {
            if i as usize >= dim {
                return Err(Error::DimMismatch {
                    model: dim,
                    vector: i as usize + 1,
                });
            }
            let slot = acc.entry(i).or_insert_with(T::zero);
            *slot = *slot + w;
        }
        Ok(FeatureVector {
            entries: acc.into_iter().filter(|(_, w)| *w > T::zero()).collect(),
            dim,
        })
    }

    pub fn entries(&self) -> &[(u32, T)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: u32) -> T {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(T::zero(), |i| self.entries[i].1)
    }

    /// Sum of weights; the token count for raw term-frequency vectors.
    pub fn total(&self) -> T {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn norm(&self) -> T {
        self.entries.iter().map(|e| e.1 * e.1).sum::<T>().sqrt()
    }

    /// Unit-length copy; the empty vector stays empty.
    pub fn l2_normalized(&self) -> Self {
        let norm = self.norm();
        if norm == T::zero() {
            return self.clone();
        }
        FeatureVector {
            entries: self.entries.iter().map(|&(i, w)| (i, w / norm)).collect(),
            dim: self.dim,
        }
    }

    /// `1 + ln(tf)` weighting.
    pub fn sublinear(&self) -> Self {
        FeatureVector {
            entries: self
                .entries
                .iter()
                .map(|&(i, w)| (i, T::one() + w.ln()))
                .collect(),
            dim: self.dim,
        }
    }

    pub fn dot(&self, other: &FeatureVector<T>) -> T {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut sum = T::zero();
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum = sum + x * y;
                    a.next();
                    b.next();
                }
            }
        }
        sum
    }
}

/// Term-frequency vector over hashed feature strings.
pub fn featurize_tokens<T: Scalar, S: AsRef<str>>(
    tokens: impl IntoIterator<Item = S>,
    dim: usize,
) -> FeatureVector<T> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for token in tokens {
        *counts.entry(feature_index(token.as_ref(), dim)).or_default() += 1;
    }
    FeatureVector {
        entries: counts.into_iter().map(|(i, c)| (i, T::of_usize(c))).collect(),
        dim,
    }
}

/// Hashes the page's lemmas and `pos:<TAG>` tokens into term frequencies.
pub fn featurize<T: Scalar>(page: &TokenizedPage, dim: usize) -> FeatureVector<T> {
    featurize_tokens(page.feature_tokens(), dim)
}
