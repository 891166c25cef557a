//! Server counts and storage of the retrieval schemes being compared.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// One server per class of a balanced ancestral coloring.
    Coloring,
    /// Every one of `h` servers stores the whole tree.
    HRepetition,
    /// One server per tree layer.
    LayerBased,
    /// A single server whose items are whole proofs.
    ProofAsElement,
    /// Cuckoo-hashing probabilistic batch code with three hash functions;
    /// analytic only.
    SealpirPbcModel,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Coloring,
        Scheme::HRepetition,
        Scheme::LayerBased,
        Scheme::ProofAsElement,
        Scheme::SealpirPbcModel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Coloring => "coloring",
            Scheme::HRepetition => "h_repetition",
            Scheme::LayerBased => "layer_based",
            Scheme::ProofAsElement => "proof_as_element",
            Scheme::SealpirPbcModel => "sealpir_pbc_model",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == norm || (norm == "pbc" && *sc == Scheme::SealpirPbcModel))
            .ok_or_else(|| format!("unknown scheme {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeCost {
    pub servers: u128,
    /// Items in the biggest single database.
    pub largest_db: u128,
    /// Items stored across all servers.
    pub total_storage: u128,
}

/// Cost of one proof retrieval in a tree of height `h` (`N = 2^(h+1) - 2`
/// stored nodes, `n = 2^h` leaves).
pub fn scheme_cost(scheme: Scheme, h: u32) -> SchemeCost {
    let h128 = h as u128;
    let n = 1u128 << h;
    let big_n = 2 * n - 2;
    let (servers, largest_db, total_storage) = match scheme {
        Scheme::Coloring => (h128, big_n.div_ceil(h128), big_n),
        Scheme::HRepetition => (h128, big_n, h128 * big_n),
        Scheme::LayerBased => (h128, n, big_n),
        Scheme::ProofAsElement => (1, n * h128, n * h128),
        Scheme::SealpirPbcModel => (
            (3 * h128).div_ceil(2),
            (2 * big_n).div_ceil(h128),
            3 * big_n,
        ),
    };
    SchemeCost {
        servers,
        largest_db,
        total_storage,
    }
}
