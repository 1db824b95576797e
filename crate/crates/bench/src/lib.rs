//! Fixtures shared by the benchmarks.

use intervalcp::{WeightedBracket, WeightedBrackets};

/// Deterministic pseudo-random brackets from a two-cluster law, with a mix
/// of exact and censored observations.
pub fn bimodal_brackets(n: usize, seed: u64) -> WeightedBrackets {
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let entries = (0..n)
        .map(|_| {
            let centre = if next() < 0.5 { -2.0 } else { 2.0 };
            let y = centre + (next() - 0.5) * 2.0;
            let half = if next() < 0.3 { next() } else { 0.0 };
            WeightedBracket {
                lo: y - half,
                hi: y + half,
                w: 0.5 + next(),
            }
        })
        .collect();
    WeightedBrackets::new(entries).expect("fixture brackets are valid")
}
