//! The Color-Splitting Algorithm and the tools used to check its output.
//!
//! Nodes of `T(h)` use heap numbering: the root is 1 and the children of
//! `v` are `2v` and `2v + 1`. The root is never colored.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color_seq::{ColorId, ColorSequence, Infeasible, SequenceError, SizedColor};

/// Largest height [`color_splitting`] will materialize in memory.
/// Use [`for_each_colored`] beyond this.
pub const MAX_IN_MEMORY_HEIGHT: u32 = 24;

/// Height guard for [`brute_force_colorable`].
pub const BRUTE_FORCE_MAX_HEIGHT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CsaError {
    #[error("infeasible color sequence: {0}")]
    Infeasible(#[from] Infeasible),
    #[error("splitting needs dimension >= 2, got {0}")]
    TooShort(usize),
    #[error("height {h} exceeds the in-memory limit of {max}; use the streaming sink")]
    TooTall { h: u32, max: u32 },
    #[error("brute force search is limited to height {BRUTE_FORCE_MAX_HEIGHT}, got {0}")]
    BruteForceGuard(usize),
    #[error("nodes {0} and {1} are ancestor and descendant; they have no left-right order")]
    Comparable(u64, u64),
    #[error("node {node} is not a non-root node of T({h})")]
    NodeOutOfRange { node: u64, h: u32 },
    #[error("node {0} appears in more than one class")]
    DuplicateNode(u64),
    #[error("node {0} is missing from every class")]
    MissingNode(u64),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

pub fn parent(v: u64) -> u64 {
    v >> 1
}

pub fn sibling(v: u64) -> u64 {
    v ^ 1
}

/// Depth of `v`; the root has depth 0.
pub fn depth(v: u64) -> u32 {
    debug_assert!(v >= 1);
    63 - v.leading_zeros()
}

/// True iff `a` is a proper ancestor of `d`.
pub fn is_ancestor(a: u64, d: u64) -> bool {
    let (da, dd) = (depth(a), depth(d));
    dd > da && (d >> (dd - da)) == a
}

/// Left-right order of two incomparable nodes: the one lying in the left
/// subtree of their lowest common ancestor comes first.
pub fn left_right_compare(u: u64, v: u64) -> Result<Ordering, CsaError> {
    if u == 0 || v == 0 || u == v || is_ancestor(u, v) || is_ancestor(v, u) {
        return Err(CsaError::Comparable(u, v));
    }
    let (mut a, mut b) = (u, v);
    while depth(a) > depth(b) {
        a = parent(a);
    }
    while depth(b) > depth(a) {
        b = parent(b);
    }
    Ok(a.cmp(&b))
}

/// Split output before canonical sorting. `left`/`right` keep the order in
/// which entries were produced so per-color allocations stay readable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSplit {
    pub left: Vec<SizedColor>,
    pub right: Vec<SizedColor>,
    pub left_child_color: ColorId,
    pub right_child_color: ColorId,
}

impl RawSplit {
    /// Sorts both halves canonically. `comparisons` accumulates the number
    /// of comparator calls.
    pub fn into_sorted(self, comparisons: &mut u64) -> FeasibleSplit {
        let sort = |mut v: Vec<SizedColor>, n: &mut u64| {
            v.sort_by(|x, y| {
                *n += 1;
                (x.count, x.color).cmp(&(y.count, y.color))
            });
            ColorSequence::from_sorted_unchecked(v)
        };
        FeasibleSplit {
            left: sort(self.left, comparisons),
            right: sort(self.right, comparisons),
            left_child_color: self.left_child_color,
            right_child_color: self.right_child_color,
        }
    }

    /// Number of nodes of `color` handed to the left subtree.
    pub fn left_allocation(&self, color: ColorId) -> u64 {
        self.left
            .iter()
            .find(|e| e.color == color)
            .map_or(0, |e| e.count)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleSplit {
    pub left: ColorSequence,
    pub right: ColorSequence,
    pub left_child_color: ColorId,
    pub right_child_color: ColorId,
}

/// Colors the two children of the current root and divides the rest of a
/// feasible sequence between the two subtrees. `seq` must be feasible with
/// dimension at least 2; that is the caller's responsibility.
pub(crate) fn split_raw(seq: &ColorSequence) -> RawSplit {
    let c = seq.entries();
    let h = c.len();
    debug_assert!(h >= 2);
    let mut a = Vec::with_capacity(h - 1);
    let mut b = Vec::with_capacity(h - 1);
    let (left_child_color, right_child_color, start);
    if c[0].count == 2 {
        // both children take color c[0], which is then exhausted
        left_child_color = c[0].color;
        right_child_color = c[0].color;
        let x = c[1].count;
        a.push(SizedColor {
            color: c[1].color,
            count: x / 2,
        });
        b.push(SizedColor {
            color: c[1].color,
            count: x - x / 2,
        });
        start = 2;
    } else {
        // left child takes c[0], right child takes c[1]; the right subtree
        // carries the remainder of c[0] in place of c[1]
        left_child_color = c[0].color;
        right_child_color = c[1].color;
        a.push(SizedColor {
            color: c[1].color,
            count: c[1].count - 1,
        });
        b.push(SizedColor {
            color: c[0].color,
            count: c[0].count - 1,
        });
        if h >= 3 {
            let t = c[2].count + c[0].count - c[1].count;
            a.push(SizedColor {
                color: c[2].color,
                count: t - t / 2,
            });
            b.push(SizedColor {
                color: c[2].color,
                count: c[1].count - c[0].count + t / 2,
            });
        }
        start = 3;
    }
    let mut sa: u64 = a.iter().map(|e| e.count).sum();
    let mut sb: u64 = b.iter().map(|e| e.count).sum();
    for e in c.iter().skip(start) {
        let (lo, hi) = (e.count / 2, e.count - e.count / 2);
        let (x, y) = if sa < sb { (hi, lo) } else { (lo, hi) };
        a.push(SizedColor {
            color: e.color,
            count: x,
        });
        b.push(SizedColor {
            color: e.color,
            count: y,
        });
        sa += x;
        sb += y;
    }
    a.retain(|e| e.count > 0);
    b.retain(|e| e.count > 0);
    RawSplit {
        left: a,
        right: b,
        left_child_color,
        right_child_color,
    }
}

/// Splits an `h`-feasible sequence into two `(h-1)`-feasible ones plus the
/// colors of the two children of the current root.
pub fn feasible_split(seq: &ColorSequence) -> Result<FeasibleSplit, CsaError> {
    seq.check_feasible()?;
    if seq.dimension() < 2 {
        return Err(CsaError::TooShort(seq.dimension()));
    }
    Ok(split_raw(seq).into_sorted(&mut 0))
}

fn children_colors(seq: &ColorSequence) -> (ColorId, ColorId) {
    let c = seq.entries();
    if c[0].count == 2 {
        (c[0].color, c[0].color)
    } else {
        (c[0].color, c[1].color)
    }
}

enum Frame {
    Expand {
        node: u64,
        color: Option<ColorId>,
        seq: ColorSequence,
    },
    Emit {
        node: u64,
        color: ColorId,
    },
}

/// Walks the subtree rooted at `node` (which carries `color`, if any) and
/// reports every colored node in left-to-right (in-order) sequence.
///
/// `cut` stops expansion at that depth and hands the pending subtree to
/// `on_cut` instead, in its in-order slot.
fn walk<S, C>(
    node: u64,
    color: Option<ColorId>,
    seq: ColorSequence,
    cut: Option<u32>,
    sink: &mut S,
    on_cut: &mut C,
) where
    S: FnMut(u64, ColorId),
    C: FnMut(u64, ColorId, ColorSequence),
{
    let mut stack = vec![Frame::Expand { node, color, seq }];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Emit { node, color } => sink(node, color),
            Frame::Expand { node, color, seq } => {
                if seq.dimension() == 0 {
                    if let Some(c) = color {
                        sink(node, c);
                    }
                    continue;
                }
                if let (Some(d), Some(c)) = (cut, color) {
                    if depth(node) >= d {
                        on_cut(node, c, seq);
                        continue;
                    }
                }
                let (ca, cb) = children_colors(&seq);
                let (a, b) = if seq.dimension() >= 2 {
                    let s = split_raw(&seq).into_sorted(&mut 0);
                    (s.left, s.right)
                } else {
                    (
                        ColorSequence::from_sorted_unchecked(Vec::new()),
                        ColorSequence::from_sorted_unchecked(Vec::new()),
                    )
                };
                stack.push(Frame::Expand {
                    node: 2 * node + 1,
                    color: Some(cb),
                    seq: b,
                });
                if let Some(c) = color {
                    stack.push(Frame::Emit { node, color: c });
                }
                stack.push(Frame::Expand {
                    node: 2 * node,
                    color: Some(ca),
                    seq: a,
                });
            }
        }
    }
}

/// Streams the coloring produced for a feasible `seq` as `(node, color)`
/// pairs in left-to-right order without materializing it. Works for any
/// height up to the sequence limit.
pub fn for_each_colored<F: FnMut(u64, ColorId)>(
    seq: &ColorSequence,
    mut sink: F,
) -> Result<(), CsaError> {
    seq.check_feasible()?;
    seq.check_labels()?;
    walk(
        1,
        None,
        seq.clone(),
        None,
        &mut sink,
        &mut |_, _, _| unreachable!(),
    );
    Ok(())
}

/// An ancestral coloring of `T(h)` with per-class node lists in
/// left-to-right order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AncestralColoring {
    height: u32,
    color_of: Vec<u16>,
    classes: Vec<Vec<u64>>,
}

impl AncestralColoring {
    /// Builds a coloring from explicit classes (`classes[i]` is color
    /// `i + 1`). Every non-root node must appear exactly once; the
    /// ancestral property is not checked here, see [`verify_ancestral`].
    pub fn from_classes(height: u32, classes: Vec<Vec<u64>>) -> Result<Self, CsaError> {
        if height > MAX_IN_MEMORY_HEIGHT {
            return Err(CsaError::TooTall {
                h: height,
                max: MAX_IN_MEMORY_HEIGHT,
            });
        }
        let end = 1u64 << (height + 1);
        let mut color_of = vec![0u16; end as usize];
        for (i, class) in classes.iter().enumerate() {
            for &v in class {
                if v < 2 || v >= end {
                    return Err(CsaError::NodeOutOfRange { node: v, h: height });
                }
                if color_of[v as usize] != 0 {
                    return Err(CsaError::DuplicateNode(v));
                }
                color_of[v as usize] = i as u16 + 1;
            }
        }
        if let Some(v) = (2..end).find(|&v| color_of[v as usize] == 0) {
            return Err(CsaError::MissingNode(v));
        }
        Ok(AncestralColoring {
            height,
            color_of,
            classes,
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of colors (classes), normally equal to the height.
    pub fn num_colors(&self) -> usize {
        self.classes.len()
    }

    pub fn color_of(&self, node: u64) -> Option<ColorId> {
        match self.color_of.get(node as usize) {
            Some(&c) if c != 0 => Some(ColorId(c)),
            _ => None,
        }
    }

    pub fn class(&self, color: ColorId) -> &[u64] {
        &self.classes[color.slot()]
    }

    pub fn classes(&self) -> impl Iterator<Item = (ColorId, &[u64])> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, c)| (ColorId(i as u16 + 1), c.as_slice()))
    }

    /// Class sizes as a canonical sequence.
    pub fn sequence(&self) -> ColorSequence {
        ColorSequence::new(self.classes().map(|(c, v)| SizedColor {
            color: c,
            count: v.len() as u64,
        }))
        .expect("class ids are distinct")
    }

    pub fn is_balanced(&self) -> bool {
        let sizes = self.classes.iter().map(Vec::len);
        let (lo, hi) = sizes.fold((usize::MAX, 0), |(lo, hi), s| (lo.min(s), hi.max(s)));
        hi - lo <= 1
    }

    /// 1-based position of every node inside its class, indexed by node.
    pub fn positions(&self) -> Vec<u64> {
        let mut pos = vec![0u64; self.color_of.len()];
        for class in &self.classes {
            for (i, &v) in class.iter().enumerate() {
                pos[v as usize] = i as u64 + 1;
            }
        }
        pos
    }
}

/// Options for [`color_splitting_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CsaOptions {
    /// Run independent subtrees on the rayon pool.
    pub parallel: bool,
}

/// Finds an ancestral coloring whose class sizes equal `seq`.
pub fn color_splitting(seq: &ColorSequence) -> Result<AncestralColoring, CsaError> {
    color_splitting_with(seq, CsaOptions::default())
}

pub fn color_splitting_with(
    seq: &ColorSequence,
    opts: CsaOptions,
) -> Result<AncestralColoring, CsaError> {
    seq.check_feasible()?;
    seq.check_labels()?;
    let h = seq.dimension() as u32;
    if h > MAX_IN_MEMORY_HEIGHT {
        return Err(CsaError::TooTall {
            h,
            max: MAX_IN_MEMORY_HEIGHT,
        });
    }
    let ncolors = h as usize;
    let end = 1usize << (h + 1);
    let mut classes: Vec<Vec<u64>> = seq
        .entries()
        .iter()
        .fold(vec![0usize; ncolors], |mut cap, e| {
            cap[e.color.slot()] = e.count as usize;
            cap
        })
        .into_iter()
        .map(Vec::with_capacity)
        .collect();
    let mut color_of = vec![0u16; end];

    let threads = rayon::current_num_threads();
    let cut = if opts.parallel && threads > 1 && h > 8 {
        Some((usize::BITS - (threads * 4).leading_zeros()).min(h - 4))
    } else {
        None
    };

    match cut {
        None => walk(
            1,
            None,
            seq.clone(),
            None,
            &mut |v, c| {
                color_of[v as usize] = c.0;
                classes[c.slot()].push(v);
            },
            &mut |_, _, _| unreachable!(),
        ),
        Some(d) => {
            enum Event {
                Node(u64, ColorId),
                Job(usize),
            }
            let events = std::cell::RefCell::new(Vec::new());
            let mut jobs = Vec::new();
            walk(
                1,
                None,
                seq.clone(),
                Some(d),
                &mut |v, c| events.borrow_mut().push(Event::Node(v, c)),
                &mut |v, c, s| {
                    events.borrow_mut().push(Event::Job(jobs.len()));
                    jobs.push((v, c, s));
                },
            );
            let results: Vec<Vec<Vec<u64>>> = jobs
                .into_par_iter()
                .map(|(v, c, s)| {
                    let mut local = vec![Vec::new(); ncolors];
                    walk(
                        v,
                        Some(c),
                        s,
                        None,
                        &mut |v, c| local[c.slot()].push(v),
                        &mut |_, _, _| unreachable!(),
                    );
                    local
                })
                .collect();
            for ev in events.into_inner() {
                match ev {
                    Event::Node(v, c) => classes[c.slot()].push(v),
                    Event::Job(j) => {
                        for (dst, src) in classes.iter_mut().zip(&results[j]) {
                            dst.extend_from_slice(src);
                        }
                    }
                }
            }
            for (i, class) in classes.iter().enumerate() {
                for &v in class {
                    color_of[v as usize] = i as u16 + 1;
                }
            }
        }
    }
    Ok(AncestralColoring {
        height: h,
        color_of,
        classes,
    })
}

/// The trivial coloring by layers: every node at depth `i` gets color `i`.
pub fn layer_coloring(h: u32) -> Result<AncestralColoring, CsaError> {
    let classes = (1..=h)
        .map(|d| ((1u64 << d)..(1u64 << (d + 1))).collect())
        .collect();
    AncestralColoring::from_classes(h, classes)
}

/// True iff no node shares a color with an ancestor (so every root-to-leaf
/// path carries `h` distinct colors) and the class sizes equal `seq`.
pub fn verify_ancestral(coloring: &AncestralColoring, seq: &ColorSequence) -> bool {
    let h = coloring.height();
    if seq.dimension() != h as usize || coloring.num_colors() != h as usize || h > 63 {
        return false;
    }
    let sizes_match = coloring
        .classes()
        .all(|(c, v)| seq.count_of(c) == v.len() as u64);
    if !sizes_match || seq.total() != coloring.classes().map(|(_, v)| v.len() as u128).sum() {
        return false;
    }
    let end = 1usize << (h + 1);
    // mask[v] = colors used on the path from the root down to v
    let mut mask = vec![0u64; end];
    for v in 2..end {
        let Some(c) = coloring.color_of(v as u64) else {
            return false;
        };
        let bit = 1u64 << c.slot();
        let above = mask[v >> 1];
        if above & bit != 0 {
            return false;
        }
        mask[v] = above | bit;
    }
    true
}

/// Exhaustive search for any ancestral coloring with class sizes `seq`.
/// Independent of the splitting rules; used as an oracle for small trees.
pub fn brute_force_colorable(seq: &ColorSequence) -> Result<bool, CsaError> {
    let h = seq.dimension();
    if h == 0 {
        return Ok(false);
    }
    if h > BRUTE_FORCE_MAX_HEIGHT {
        return Err(CsaError::BruteForceGuard(h));
    }
    let end = 1usize << (h + 1);
    if seq.total() != (end - 2) as u128 {
        return Ok(false);
    }
    let mut remaining: Vec<u64> = seq.counts();

    fn go(v: usize, end: usize, remaining: &mut [u64], mask: &mut [u32]) -> bool {
        if v == end {
            return true;
        }
        let above = mask[v >> 1];
        for k in 0..remaining.len() {
            let bit = 1u32 << k;
            if remaining[k] == 0 || above & bit != 0 {
                continue;
            }
            remaining[k] -= 1;
            mask[v] = above | bit;
            if go(v + 1, end, remaining, mask) {
                return true;
            }
            remaining[k] += 1;
        }
        false
    }

    let mut mask = vec![0u32; end];
    Ok(go(2, end, &mut remaining, &mut mask))
}
