//! Empirical-entropy size model for quantized symbol streams.

use std::collections::HashMap;
use std::hash::Hash;

use super::container::HEADER_BITS;

/// `ceil(n * H)` where `H` is the Shannon entropy (bits/symbol) of the
/// empirical histogram of `symbols`.
pub fn entropy_bits<T: Eq + Hash + Copy>(symbols: &[T]) -> u64 {
    let mut counts: HashMap<T, u64> = HashMap::new();
    for &s in symbols {
        *counts.entry(s).or_default() += 1;
    }
    let mut counts: Vec<u64> = counts.into_values().collect();
    // HashMap iteration order is randomized; sort so the float sum is reproducible.
    counts.sort_unstable();
    bits_from_counts(&counts, symbols.len() as u64)
}

pub(crate) fn bits_from_counts(counts: &[u64], total: u64) -> u64 {
    if total == 0 {
        return 0;
    }
    let n = total as f64;
    let bits: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * (n / c).log2()
        })
        .sum();
    // Absorb float noise on results that are mathematically integral.
    (bits - 1e-9).max(0.0).ceil() as u64
}

/// Total modeled size: fixed header plus entropy-coded payload.
pub fn modeled_bits<T: Eq + Hash + Copy>(symbols: &[T]) -> u64 {
    HEADER_BITS + entropy_bits(symbols)
}
