//! Sub-indices along a root-to-leaf path without materializing the coloring.
//!
//! Only the `h - 1` splits on the path are performed. A dense tally
//! `count[i]` tracks how many nodes of color `i` lie strictly to the left of
//! the current position; a node of color `i` reached with tally `t` sits at
//! position `t + 1` of its class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color_seq::{ColorId, ColorSequence, Infeasible};
use crate::csa::{split_raw, RawSplit};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubIndexError {
    #[error("infeasible color sequence: {0}")]
    Infeasible(#[from] Infeasible),
    #[error(transparent)]
    Sequence(#[from] crate::color_seq::SequenceError),
    #[error("height {h} does not match the sequence dimension {dimension}")]
    HeightMismatch { h: u32, dimension: usize },
    #[error("leaf {leaf} is outside {lo}..={hi}")]
    LeafOutOfRange { leaf: u64, lo: u64, hi: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathIndices {
    pub leaf: u64,
    /// `k_1..k_h`, top-down; `k_h` is the leaf.
    pub nodes: Vec<u64>,
    pub colors: Vec<ColorId>,
    /// 1-based positions within each node's class.
    pub sub_indices: Vec<u64>,
}

/// Per-color tallies of nodes to the left of the current path position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeftCounts(Vec<u64>);

impl LeftCounts {
    pub fn new(colors: usize) -> Self {
        LeftCounts(vec![0; colors])
    }

    pub fn get(&self, color: ColorId) -> u64 {
        self.0[color.slot()]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

/// Advances the tallies for one descent step.
///
/// Going left changes nothing. Going right puts the whole left subtree and
/// the left sibling to our left, so every color gains its allocation in the
/// (unsorted) left half of `split`, and the sibling's color gains one more.
/// Returns the number of elementary steps taken.
pub fn update_count(count: &mut LeftCounts, split: &RawSplit, went_left: bool) -> u64 {
    if went_left {
        return 1;
    }
    let mut steps = 0;
    for slot in 0..count.0.len() {
        let color = ColorId(slot as u16 + 1);
        // linear scan of the left half
        steps += split.left.len() as u64 + 1;
        count.0[slot] += split.left_allocation(color);
        if color == split.left_child_color {
            count.0[slot] += 1;
        }
    }
    steps
}

/// Computes the color and class position of every node on the path from
/// the root to `leaf` (a heap index in `2^h..2^(h+1)`).
pub fn find_sub_indices(
    h: u32,
    leaf: u64,
    seq: &ColorSequence,
) -> Result<PathIndices, SubIndexError> {
    find_sub_indices_counted(h, leaf, seq).map(|(p, _)| p)
}

/// [`find_sub_indices`] plus an elementary-step count: entries produced by
/// each split, sort comparisons, and tally updates.
pub fn find_sub_indices_counted(
    h: u32,
    leaf: u64,
    seq: &ColorSequence,
) -> Result<(PathIndices, u64), SubIndexError> {
    seq.check_feasible()?;
    seq.check_labels()?;
    if seq.dimension() != h as usize {
        return Err(SubIndexError::HeightMismatch {
            h,
            dimension: seq.dimension(),
        });
    }
    let (lo, hi) = (1u64 << h, (1u64 << (h + 1)) - 1);
    if !(lo..=hi).contains(&leaf) {
        return Err(SubIndexError::LeafOutOfRange { leaf, lo, hi });
    }
    let hs = h as usize;
    let nodes: Vec<u64> = (1..=h).map(|l| leaf >> (h - l)).collect();
    let mut colors = Vec::with_capacity(hs);
    let mut sub_indices = Vec::with_capacity(hs);
    let mut count = LeftCounts::new(hs);
    let mut steps = 0u64;
    let mut cur = seq.clone();

    for &k in &nodes[..hs - 1] {
        let went_left = k & 1 == 0;
        let raw = split_raw(&cur);
        steps += cur.dimension() as u64;
        let color = if went_left {
            raw.left_child_color
        } else {
            raw.right_child_color
        };
        steps += update_count(&mut count, &raw, went_left);
        let split = raw.into_sorted(&mut steps);
        cur = if went_left { split.left } else { split.right };
        colors.push(color);
        sub_indices.push(count.get(color) + 1);
    }

    // one color with two nodes remains: both children of k_{h-1}
    let last = cur.entries()[0].color;
    if leaf & 1 == 1 {
        count.0[last.slot()] += 1;
    }
    steps += 1;
    colors.push(last);
    sub_indices.push(count.get(last) + 1);

    Ok((
        PathIndices {
            leaf,
            nodes,
            colors,
            sub_indices,
        },
        steps,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color_seq::{balanced_sequence, random_feasible, SizedColor};
    use crate::csa::color_splitting;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_leaf_eleven() {
        let p = find_sub_indices(3, 11, &balanced_sequence(3).unwrap()).unwrap();
        assert_eq!(p.nodes, vec![2, 5, 11]);
        assert_eq!(p.colors, vec![ColorId(1), ColorId(3), ColorId(2)]);
        assert_eq!(p.sub_indices, vec![1, 2, 4]);
    }

    #[test]
    fn single_level() {
        let s = balanced_sequence(1).unwrap();
        assert_eq!(find_sub_indices(1, 2, &s).unwrap().sub_indices, vec![1]);
        assert_eq!(find_sub_indices(1, 3, &s).unwrap().sub_indices, vec![2]);
    }

    #[test]
    fn rightmost_leaf_is_last_in_every_class() {
        let s = ColorSequence::from_counts(&[3, 6, 8, 13]).unwrap();
        let p = find_sub_indices(4, 31, &s).unwrap();
        let col = color_splitting(&s).unwrap();
        for (c, j) in p.colors.iter().zip(&p.sub_indices) {
            assert_eq!(*j, s.count_of(*c));
            assert_eq!(
                *col.class(*c).last().unwrap(),
                p.nodes[p.colors.iter().position(|x| x == c).unwrap()]
            );
        }
    }

    #[test]
    fn rejects_bad_input() {
        let s = balanced_sequence(3).unwrap();
        assert!(matches!(
            find_sub_indices(3, 7, &s),
            Err(SubIndexError::LeafOutOfRange { .. })
        ));
        assert!(matches!(
            find_sub_indices(3, 16, &s),
            Err(SubIndexError::LeafOutOfRange { .. })
        ));
        assert!(matches!(
            find_sub_indices(4, 16, &s),
            Err(SubIndexError::HeightMismatch { .. })
        ));
        let bad = ColorSequence::from_counts(&[2, 3, 9]).unwrap();
        assert!(matches!(
            find_sub_indices(3, 8, &bad),
            Err(SubIndexError::Infeasible(_))
        ));
    }

    #[test]
    fn update_count_steps() {
        // root of [4R,5G,5B]: left gets [4G,2B], right gets [3R,3B]
        let root = split_raw(&balanced_sequence(3).unwrap());
        let mut count = LeftCounts::new(3);
        update_count(&mut count, &root, true);
        assert_eq!(count.as_slice(), &[0, 0, 0]);

        // node 2 with [2B,4G]: both children blue, descend right to 5
        let at2 =
            split_raw(&ColorSequence::new([SizedColor::new(3, 2), SizedColor::new(2, 4)]).unwrap());
        update_count(&mut count, &at2, false);
        assert_eq!(count.get(ColorId(3)), 1);
        // the left subtree (under 4) received two greens
        assert_eq!(count.get(ColorId(2)), 2);

        // descend right from the root: left subtree holds 4 greens
        let mut count = LeftCounts::new(3);
        update_count(&mut count, &root, false);
        assert_eq!(count.get(ColorId(2)), 4);
        assert_eq!(count.get(ColorId(1)), 1); // sibling node 2 is red
        assert_eq!(count.get(ColorId(3)), 2);
    }

    #[test]
    fn matches_full_coloring() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for h in 1..=9u32 {
            for s in std::iter::once(balanced_sequence(h).unwrap())
                .chain((0..5).map(|_| random_feasible(h, &mut rng)))
            {
                let col = color_splitting(&s).unwrap();
                let pos = col.positions();
                for leaf in (1u64 << h)..(1u64 << (h + 1)) {
                    let p = find_sub_indices(h, leaf, &s).unwrap();
                    for l in 0..h as usize {
                        let k = p.nodes[l];
                        assert_eq!(Some(p.colors[l]), col.color_of(k));
                        assert_eq!(
                            p.sub_indices[l], pos[k as usize],
                            "h={h} seq={s} leaf={leaf} node={k}"
                        );
                    }
                }
            }
        }
    }
}
