//! Seeded page sampling without replacement.
//!
//! A partial Fisher-Yates shuffle over `0..total` with a sparse swap map: the
//! `k`-page draw is always a prefix of the `k + 1`-page draw for the same seed.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The first `min(k, total)` positions of a seeded random permutation of
/// `0..total`, in draw order.
pub fn sample_indices(total: usize, k: usize, seed: u64) -> Vec<usize> {
    let k = k.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut swapped: HashMap<usize, usize> = HashMap::new();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..total);
        let at_j = swapped.get(&j).copied().unwrap_or(j);
        let at_i = swapped.get(&i).copied().unwrap_or(i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out
}

/// Draws `pages_n + buffer` distinct pages (or all of them) as
/// `(page_no, text)` with 1-based page numbers, in draw order.
pub fn sample_pages<'a>(
    pages: &'a [String],
    pages_n: usize,
    buffer: usize,
    seed: u64,
) -> Vec<(u32, &'a str)> {
    sample_indices(pages.len(), pages_n + buffer, seed)
        .into_iter()
        .map(|i| (i as u32 + 1, pages[i].as_str()))
        .collect()
}
