//! Short distinguishing bit windows for index lookup.
//!
//! A client that knows its item hash but not its leaf position can look the
//! position up privately in a table keyed by a few bits of each hash instead
//! of the full 256. [`select_window`] finds such a window by scanning
//! disjoint windows of fixed width from the most significant bit.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merkle::{Digest, DIGEST_LEN};

pub const DIGEST_BITS: u32 = (DIGEST_LEN * 8) as u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitWindow {
    /// First bit, counted from the most significant bit of byte 0.
    pub offset: u32,
    pub width: u32,
}

impl BitWindow {
    /// The window's bits of `d` as an integer, first bit most significant.
    pub fn extract(&self, d: &Digest) -> u64 {
        extract_bits(d, self.offset, self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PixrError {
    #[error("need at least two hashes, got {0}")]
    TooFew(usize),
    #[error("hash count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("width {0} outside 1..=64")]
    Width(u32),
    #[error("duplicate hash {0}")]
    Duplicate(Digest),
    #[error("no {width}-bit window distinguishes the set after {tried} tries")]
    Exhausted { width: u32, tried: u64 },
}

/// Default width, `2 log2 n`.
pub fn default_width(n: usize) -> u32 {
    2 * n.max(2).ilog2()
}

/// Returns the first window at offsets `0, width, 2*width, ...` whose values
/// are pairwise distinct over `hashes`, and the number of windows tested.
pub fn select_window(hashes: &[Digest], width: u32) -> Result<(BitWindow, u64), PixrError> {
    let n = hashes.len();
    if n < 2 {
        return Err(PixrError::TooFew(n));
    }
    if !n.is_power_of_two() {
        return Err(PixrError::NotPowerOfTwo(n));
    }
    if width == 0 || width > 64 {
        return Err(PixrError::Width(width));
    }
    let mut distinct = HashSet::with_capacity(n);
    for d in hashes {
        if !distinct.insert(d) {
            return Err(PixrError::Duplicate(*d));
        }
    }

    let mut seen = HashSet::with_capacity(n);
    let mut steps = 0;
    let mut offset = 0;
    while offset + width <= DIGEST_BITS {
        steps += 1;
        let window = BitWindow { offset, width };
        seen.clear();
        if hashes.iter().all(|d| seen.insert(window.extract(d))) {
            return Ok((window, steps));
        }
        offset += width;
    }
    Err(PixrError::Exhausted {
        width,
        tried: steps,
    })
}

fn extract_bits(d: &Digest, offset: u32, width: u32) -> u64 {
    let mut v = 0u64;
    for bit in offset..offset + width {
        let byte = d.0[(bit / 8) as usize];
        v = (v << 1) | u64::from((byte >> (7 - bit % 8)) & 1);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, rng: &mut impl Rng) -> Vec<Digest> {
        let mut set = HashSet::new();
        while set.len() < n {
            set.insert(Digest(rng.gen()));
        }
        set.into_iter().collect()
    }

    #[test]
    fn first_bit_suffices() {
        let mut hi = [0u8; 32];
        hi[0] = 0x80;
        let (w, steps) = select_window(&[Digest([0; 32]), Digest(hi)], 2).unwrap();
        assert_eq!(
            (w, steps),
            (
                BitWindow {
                    offset: 0,
                    width: 2
                },
                1
            )
        );
        assert_eq!(w.extract(&Digest(hi)), 0b10);
    }

    #[test]
    fn extraction_is_big_endian() {
        let mut b = [0u8; 32];
        b[1] = 0b1010_0000;
        let d = Digest(b);
        assert_eq!(extract_bits(&d, 8, 4), 0b1010);
        assert_eq!(extract_bits(&d, 4, 8), 0b0000_1010);
        assert_eq!(extract_bits(&Digest([0xFF; 32]), 192, 64), u64::MAX);
    }

    #[test]
    fn shared_prefix_pushes_window_past_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let prefix: [u8; 8] = rng.gen();
        let set: Vec<Digest> = random_set(256, &mut rng)
            .into_iter()
            .map(|mut d| {
                d.0[..8].copy_from_slice(&prefix);
                d
            })
            .collect();
        let (w, _) = select_window(&set, 16).unwrap();
        assert!(w.offset >= 64);
        // every earlier window collides
        for off in (0..w.offset).step_by(16) {
            let vals: HashSet<u64> = set.iter().map(|d| extract_bits(d, off, 16)).collect();
            assert!(vals.len() < set.len());
        }
    }

    #[test]
    fn returned_window_is_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2usize, 16, 1024] {
            let set = random_set(n, &mut rng);
            let (w, _) = select_window(&set, default_width(n)).unwrap();
            let vals: HashSet<u64> = set.iter().map(|d| w.extract(d)).collect();
            assert_eq!(vals.len(), n);
        }
    }

    #[test]
    fn mean_steps_stay_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for log_n in 10..=14u32 {
            let n = 1usize << log_n;
            let total: u64 = (0..10)
                .map(|_| {
                    select_window(&random_set(n, &mut rng), 2 * log_n)
                        .unwrap()
                        .1
                })
                .sum();
            assert!(total as f64 / 10.0 <= 5.0, "n=2^{log_n}: {total}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let d = Digest([1; 32]);
        let e = Digest([2; 32]);
        assert_eq!(select_window(&[d], 2), Err(PixrError::TooFew(1)));
        assert_eq!(
            select_window(&[d, e, Digest([3; 32])], 2),
            Err(PixrError::NotPowerOfTwo(3))
        );
        assert_eq!(select_window(&[d, d], 2), Err(PixrError::Duplicate(d)));
        assert_eq!(select_window(&[d, e], 65), Err(PixrError::Width(65)));
        // differ only in the last bit: a 3-bit window never reaches it
        let mut last = [0u8; 32];
        last[31] = 1;
        assert_eq!(
            select_window(&[Digest([0; 32]), Digest(last)], 3),
            Err(PixrError::Exhausted {
                width: 3,
                tried: 85
            })
        );
        assert!(select_window(&[Digest([0; 32]), Digest(last)], 4).is_ok());
    }
}
