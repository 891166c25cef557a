//! Ancestral colorings of perfect binary trees and their use for retrieving
//! Merkle proofs privately, one PIR query per color class.
//!
//! Trees are heap-indexed: the root is node 1 and the children of `v` are
//! `2v` and `2v + 1`. A tree of height `h` has `2^h` leaves and
//! `2^(h+1) - 2` non-root nodes, and leaf position `j` (1-based) is node
//! `2^h + j - 1`.

pub mod api;
pub mod color_seq;
pub mod csa;
pub mod formats;
pub mod merkle;
pub mod pir;
pub mod pixr;
pub mod subindex;
pub mod wire;
