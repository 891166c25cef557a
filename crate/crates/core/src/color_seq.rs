//! Color sequences: sorted multisets of (color, count) pairs describing how
//! many non-root nodes of a perfect binary tree receive each color.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported tree height. `2^(h+1)` must fit in a `u64`.
pub const MAX_HEIGHT: u32 = 62;

/// Height guard for [`enumerate_feasible`].
pub const ENUMERATE_MAX_HEIGHT: u32 = 6;

/// A color label. Identity is stable across splits; only counts change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColorId(pub u16);

impl ColorId {
    pub fn get(self) -> u16 {
        self.0
    }

    /// Zero-based slot for dense per-color arrays.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ColorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SizedColor {
    pub color: ColorId,
    pub count: u64,
}

impl SizedColor {
    pub fn new(color: u16, count: u64) -> Self {
        SizedColor {
            color: ColorId(color),
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("color sequence is empty")]
    Empty,
    #[error("color id 0 is not allowed (colors are numbered from 1)")]
    ZeroColor,
    #[error("color {0} appears more than once")]
    DuplicateColor(ColorId),
    #[error("color ids must be exactly 1..={dimension}, found {found}")]
    ColorOutOfRange { found: ColorId, dimension: usize },
    #[error("height {0} exceeds the supported maximum of {MAX_HEIGHT}")]
    TooTall(u64),
    #[error("height must be at least 1")]
    ZeroHeight,
    #[error("cannot parse color sequence entry {0:?}")]
    Parse(String),
}

/// Why a sequence is not feasible.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Infeasible {
    #[error("prefix {ell} sums to {have} but layers 1..={ell} need {need} (deficit {})", need - have)]
    Prefix { ell: usize, have: u128, need: u128 },
    #[error("total size {have} does not match the {need} non-root nodes of T({h})")]
    Total { h: usize, have: u128, need: u128 },
    #[error("color sequence is empty")]
    Empty,
    #[error("dimension {0} exceeds the supported maximum height {MAX_HEIGHT}")]
    TooTall(usize),
}

/// Number of non-root nodes of `T(h)`: `2^(h+1) - 2`.
pub fn non_root_nodes(h: u32) -> u64 {
    (1u64 << (h + 1)) - 2
}

/// A canonical color sequence: zero counts dropped, entries sorted by
/// `(count, color)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<SizedColor>", into = "Vec<SizedColor>")]
pub struct ColorSequence {
    entries: Vec<SizedColor>,
}

impl ColorSequence {
    /// Canonicalizes `entries`. Color ids must be distinct and non-zero.
    pub fn new(entries: impl IntoIterator<Item = SizedColor>) -> Result<Self, SequenceError> {
        let mut entries: Vec<SizedColor> = entries.into_iter().filter(|e| e.count > 0).collect();
        let mut seen: Vec<u16> = entries.iter().map(|e| e.color.0).collect();
        seen.sort_unstable();
        if seen.first() == Some(&0) {
            return Err(SequenceError::ZeroColor);
        }
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(SequenceError::DuplicateColor(ColorId(w[0])));
        }
        entries.sort_by_key(|e| (e.count, e.color));
        Ok(ColorSequence { entries })
    }

    /// Builds a sequence from bare counts, labelling them 1, 2, … in the
    /// order given.
    pub fn from_counts(counts: &[u64]) -> Result<Self, SequenceError> {
        if counts.len() > u16::MAX as usize {
            return Err(SequenceError::TooTall(counts.len() as u64));
        }
        Self::new(
            counts
                .iter()
                .enumerate()
                .map(|(i, &c)| SizedColor::new(i as u16 + 1, c)),
        )
    }

    /// Like [`ColorSequence::new`] but also requires the color ids to be
    /// exactly `1..=dimension`, which every tree-level API assumes.
    pub fn labelled(entries: impl IntoIterator<Item = SizedColor>) -> Result<Self, SequenceError> {
        let seq = Self::new(entries)?;
        seq.check_labels()?;
        Ok(seq)
    }

    /// Fails unless the color ids are exactly `1..=dimension`.
    pub fn check_labels(&self) -> Result<(), SequenceError> {
        let h = self.dimension();
        if h == 0 {
            return Err(SequenceError::Empty);
        }
        if h > MAX_HEIGHT as usize {
            return Err(SequenceError::TooTall(h as u64));
        }
        // ids are distinct and non-zero, so none above h means a permutation
        if let Some(e) = self.entries.iter().find(|e| e.color.0 as usize > h) {
            return Err(SequenceError::ColorOutOfRange {
                found: e.color,
                dimension: h,
            });
        }
        Ok(())
    }

    /// Wraps entries that are already canonical. Only used on split outputs.
    pub(crate) fn from_sorted_unchecked(entries: Vec<SizedColor>) -> Self {
        debug_assert!(entries
            .windows(2)
            .all(|w| (w[0].count, w[0].color) <= (w[1].count, w[1].color)));
        ColorSequence { entries }
    }

    pub fn entries(&self) -> &[SizedColor] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<SizedColor> {
        self.entries
    }

    pub fn dimension(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u128 {
        self.entries.iter().map(|e| e.count as u128).sum()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.count).collect()
    }

    pub fn count_of(&self, color: ColorId) -> u64 {
        self.entries
            .iter()
            .find(|e| e.color == color)
            .map_or(0, |e| e.count)
    }

    pub fn contains(&self, color: ColorId) -> bool {
        self.entries.iter().any(|e| e.color == color)
    }

    pub fn is_balanced(&self) -> bool {
        match (self.entries.first(), self.entries.last()) {
            (Some(lo), Some(hi)) => hi.count - lo.count <= 1,
            _ => true,
        }
    }

    /// Checks (C1) and (C2), reporting the first violation.
    pub fn check_feasible(&self) -> Result<(), Infeasible> {
        let h = self.dimension();
        if h == 0 {
            return Err(Infeasible::Empty);
        }
        if h > MAX_HEIGHT as usize {
            return Err(Infeasible::TooTall(h));
        }
        let mut have: u128 = 0;
        for (i, e) in self.entries.iter().enumerate() {
            let ell = i + 1;
            have += e.count as u128;
            // 2 + 4 + ... + 2^ell
            let need = (1u128 << (ell + 1)) - 2;
            if have < need {
                return Err(Infeasible::Prefix { ell, have, need });
            }
        }
        let need = (1u128 << (h + 1)) - 2;
        if have != need {
            return Err(Infeasible::Total { h, have, need });
        }
        Ok(())
    }

    /// Renders the compact `count:color` form, e.g. `4:1,5:2,5:3`.
    pub fn to_compact(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}:{}", e.count, e.color))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl TryFrom<Vec<SizedColor>> for ColorSequence {
    type Error = SequenceError;

    fn try_from(v: Vec<SizedColor>) -> Result<Self, Self::Error> {
        ColorSequence::new(v)
    }
}

impl From<ColorSequence> for Vec<SizedColor> {
    fn from(s: ColorSequence) -> Self {
        s.entries
    }
}

impl fmt::Display for ColorSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_compact())
    }
}

/// Parses either the compact `count:color` form (`4:1,5:2,5:3`) or bare
/// counts (`4,5,5`, labelled 1, 2, … positionally).
impl FromStr for ColorSequence {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect();
        if parts.is_empty() {
            return Err(SequenceError::Empty);
        }
        let mut entries = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let bad = || SequenceError::Parse(part.to_string());
            let entry = match part.split_once(':') {
                Some((count, color)) => SizedColor::new(
                    color.trim().parse().map_err(|_| bad())?,
                    count.trim().parse().map_err(|_| bad())?,
                ),
                None => {
                    let id = u16::try_from(i + 1).map_err(|_| bad())?;
                    SizedColor::new(id, part.parse().map_err(|_| bad())?)
                }
            };
            entries.push(entry);
        }
        ColorSequence::new(entries)
    }
}

/// True iff `seq` satisfies both feasibility conditions at its own dimension.
pub fn is_feasible(seq: &ColorSequence) -> bool {
    seq.check_feasible().is_ok()
}

/// The balanced sequence for `T(h)`: `h - u` colors of size `floor(N/h)`
/// followed by `u` of size `ceil(N/h)`, with `N = 2^(h+1) - 2` and
/// `u = N mod h`. Colors are labelled `1..=h` in order.
pub fn balanced_sequence(h: u32) -> Result<ColorSequence, SequenceError> {
    if h == 0 {
        return Err(SequenceError::ZeroHeight);
    }
    if h > MAX_HEIGHT {
        return Err(SequenceError::TooTall(h as u64));
    }
    let n = non_root_nodes(h);
    let hh = h as u64;
    let (base, u) = (n / hh, n % hh);
    let entries =
        (1..=hh).map(|i| SizedColor::new(i as u16, if i <= hh - u { base } else { base + 1 }));
    Ok(ColorSequence::from_sorted_unchecked(entries.collect()))
}

/// Lazily yields every sorted count vector of dimension `h` (colors
/// labelled `1..=h`) with total `2^(h+1) - 2` that satisfies the prefix
/// condition, each exactly once, in lexicographic order.
pub fn enumerate_feasible(h: u32) -> Result<FeasibleSequences, SequenceError> {
    if h == 0 {
        return Err(SequenceError::ZeroHeight);
    }
    if h > ENUMERATE_MAX_HEIGHT {
        return Err(SequenceError::TooTall(h as u64));
    }
    Ok(FeasibleSequences::new(h as usize))
}

/// Depth-first generator behind [`enumerate_feasible`].
pub struct FeasibleSequences {
    h: usize,
    total: u64,
    // (partial prefix, next candidate value for the following slot)
    stack: Vec<(Vec<u64>, u64)>,
}

impl FeasibleSequences {
    fn new(h: usize) -> Self {
        let total = non_root_nodes(h as u32);
        FeasibleSequences {
            h,
            total,
            stack: vec![(Vec::with_capacity(h), 1)],
        }
    }
}

impl Iterator for FeasibleSequences {
    type Item = ColorSequence;

    fn next(&mut self) -> Option<ColorSequence> {
        while let Some((prefix, cand)) = self.stack.pop() {
            let used: u64 = prefix.iter().sum();
            let slots_left = (self.h - prefix.len()) as u64;
            if slots_left == 0 {
                if used == self.total {
                    return Some(ColorSequence::from_counts(&prefix).expect("labels are 1..=h"));
                }
                continue;
            }
            let lo = cand.max(prefix.last().copied().unwrap_or(1));
            let remaining = self.total - used;
            // all remaining slots are >= the value placed now
            if lo * slots_left > remaining {
                continue;
            }
            let ell = prefix.len() + 1;
            let need = (1u64 << (ell + 1)) - 2;
            // resume with the next value for this slot once the subtree is done
            self.stack.push((prefix.clone(), lo + 1));
            if used + lo >= need {
                let mut child = prefix;
                child.push(lo);
                if slots_left == 1 && used + lo != self.total {
                    continue;
                }
                self.stack.push((child, lo));
            }
        }
        None
    }
}

/// Draws a random feasible sequence of dimension `h` with color ids
/// shuffled over `1..=h`.
///
/// Starts from the layer sizes `[2, 4, ..., 2^h]` and applies random
/// Robin Hood transfers from a larger entry to a smaller one; each transfer
/// keeps the result majorized by the layer vector, hence feasible.
pub fn random_feasible<R: Rng + ?Sized>(h: u32, rng: &mut R) -> ColorSequence {
    assert!((1..=MAX_HEIGHT).contains(&h), "height out of range");
    let h = h as usize;
    let mut counts: Vec<u64> = (1..=h).map(|i| 1u64 << i).collect();
    let rounds = rng.gen_range(0..=4 * h);
    for _ in 0..rounds {
        let i = rng.gen_range(0..h);
        let j = rng.gen_range(0..h);
        let (small, big) = if counts[i] <= counts[j] {
            (i, j)
        } else {
            (j, i)
        };
        let gap = counts[big] - counts[small];
        if gap == 0 {
            continue;
        }
        let t = rng.gen_range(0..=gap);
        counts[big] -= t;
        counts[small] += t;
    }
    let mut ids: Vec<u16> = (1..=h as u16).collect();
    for k in (1..ids.len()).rev() {
        ids.swap(k, rng.gen_range(0..=k));
    }
    ColorSequence::new(
        ids.into_iter()
            .zip(counts)
            .map(|(id, c)| SizedColor::new(id, c)),
    )
    .expect("distinct ids")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(counts: &[u64]) -> ColorSequence {
        ColorSequence::from_counts(counts).unwrap()
    }

    #[test]
    fn feasibility_examples() {
        assert!(is_feasible(&seq(&[4, 5, 5])));
        assert!(!is_feasible(&seq(&[2, 3])));
        assert!(is_feasible(&seq(&[2])));
        assert!(!is_feasible(&seq(&[1, 5])));
        assert!(!is_feasible(&seq(&[3, 4, 6, 17])));
        assert!(is_feasible(&seq(&[3, 3])));
    }

    #[test]
    fn diagnostics_name_first_violated_prefix() {
        assert_eq!(
            seq(&[2, 3, 9]).check_feasible(),
            Err(Infeasible::Prefix {
                ell: 2,
                have: 5,
                need: 6
            })
        );
        assert_eq!(
            seq(&[2, 4, 9]).check_feasible(),
            Err(Infeasible::Total {
                h: 3,
                have: 15,
                need: 14
            })
        );
    }

    #[test]
    fn balanced_examples() {
        assert_eq!(balanced_sequence(3).unwrap().counts(), vec![4, 5, 5]);
        assert_eq!(balanced_sequence(1).unwrap().counts(), vec![2]);
        // N = 62, u = 2
        assert_eq!(
            balanced_sequence(5).unwrap().counts(),
            vec![12, 12, 12, 13, 13]
        );
        assert!(balanced_sequence(0).is_err());
        for h in 1..=MAX_HEIGHT {
            let b = balanced_sequence(h).unwrap();
            assert!(is_feasible(&b), "h={h}");
            assert!(b.is_balanced());
        }
    }

    #[test]
    fn canonical_tie_break_is_ascending_color() {
        let s = ColorSequence::new([SizedColor::new(3, 3), SizedColor::new(1, 3)]).unwrap();
        assert_eq!(s.entries()[0].color, ColorId(1));
        let s: ColorSequence = "5:2,4:1,5:3,0:4".parse().unwrap();
        assert_eq!(s.to_compact(), "4:1,5:2,5:3");
        assert_eq!(s.dimension(), 3);
    }

    #[test]
    fn rejects_malformed_sequences() {
        assert!(matches!(
            "4:1,5:1".parse::<ColorSequence>(),
            Err(SequenceError::DuplicateColor(_))
        ));
        assert!(matches!(
            "4:0".parse::<ColorSequence>(),
            Err(SequenceError::ZeroColor)
        ));
        assert!(matches!(
            "x".parse::<ColorSequence>(),
            Err(SequenceError::Parse(_))
        ));
        assert!(matches!(
            ColorSequence::labelled([SizedColor::new(1, 3), SizedColor::new(5, 3)]),
            Err(SequenceError::ColorOutOfRange { .. })
        ));
    }

    #[test]
    fn json_form() {
        let s = balanced_sequence(3).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(
            j,
            r#"[{"color":1,"count":4},{"color":2,"count":5},{"color":3,"count":5}]"#
        );
        let back: ColorSequence = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }

    /// Sorted partitions of `total` into `parts` parts, by brute force.
    fn sorted_partitions(total: u64, parts: usize) -> Vec<Vec<u64>> {
        fn go(rem: u64, parts: usize, min: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
            if parts == 0 {
                if rem == 0 {
                    out.push(cur.clone());
                }
                return;
            }
            for v in min..=rem {
                cur.push(v);
                go(rem - v, parts - 1, v, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(total, parts, 1, &mut Vec::new(), &mut out);
        out
    }

    fn prefix_filter(c: &[u64]) -> bool {
        let mut s = 0;
        c.iter().enumerate().all(|(i, &x)| {
            s += x;
            s >= (1u64 << (i + 2)) - 2
        })
    }

    #[test]
    fn enumeration_examples() {
        let h1: Vec<_> = enumerate_feasible(1).unwrap().map(|s| s.counts()).collect();
        assert_eq!(h1, vec![vec![2]]);
        let h2: Vec<_> = enumerate_feasible(2).unwrap().map(|s| s.counts()).collect();
        assert_eq!(h2, vec![vec![2, 4], vec![3, 3]]);
        let h3: Vec<_> = enumerate_feasible(3).unwrap().map(|s| s.counts()).collect();
        assert_eq!(h3.len(), 8);
        assert!(h3.contains(&vec![4, 5, 5]));
        assert!(h3.contains(&vec![2, 4, 8]));
        assert!(!h3.contains(&vec![2, 3, 9]));
        assert!(enumerate_feasible(7).is_err());
    }

    #[test]
    fn enumeration_matches_brute_force_filter() {
        for h in 1..=5u32 {
            let brute: Vec<Vec<u64>> = sorted_partitions(non_root_nodes(h), h as usize)
                .into_iter()
                .filter(|c| prefix_filter(c))
                .collect();
            let got: Vec<Vec<u64>> = enumerate_feasible(h).unwrap().map(|s| s.counts()).collect();
            assert_eq!(got, brute, "h={h}");
        }
        assert!(enumerate_feasible(6).unwrap().all(|s| is_feasible(&s)));
    }

    /// Majorization restatement: the sorted sequence is majorized by the
    /// layer sizes `[2, 4, ..., 2^h]`, i.e. every sum of the `k` largest
    /// entries is at most the sum of the `k` largest layers, with equal totals.
    fn majorized_by_layers(c: &ColorSequence) -> bool {
        let mut desc = c.counts();
        desc.reverse();
        let h = desc.len();
        let layers: Vec<u128> = (1..=h).rev().map(|i| 1u128 << i).collect();
        let (mut s, mut t) = (0u128, 0u128);
        for k in 0..h {
            s += desc[k] as u128;
            t += layers[k];
            if s > t {
                return false;
            }
        }
        s == t
    }

    #[test]
    fn feasibility_agrees_with_majorization_restatement() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let h = rng.gen_range(1..=8u32);
            let n = non_root_nodes(h);
            // random composition of roughly n, sometimes exact
            let mut counts: Vec<u64> = (0..h).map(|_| rng.gen_range(1..=n)).collect();
            if rng.gen_bool(0.7) {
                let s: u64 = counts.iter().sum();
                counts = counts.iter().map(|&c| (c * n / s).max(1)).collect();
                let s: u64 = counts.iter().sum();
                let last = counts.len() - 1;
                if s < n {
                    counts[last] += n - s;
                }
            }
            let c = seq(&counts);
            assert_eq!(is_feasible(&c), majorized_by_layers(&c), "{counts:?}");
        }
    }

    #[test]
    fn random_feasible_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let h = rng.gen_range(1..=20);
            let s = random_feasible(h, &mut rng);
            assert_eq!(s.dimension(), h as usize);
            assert!(is_feasible(&s), "{s}");
        }
    }
}
