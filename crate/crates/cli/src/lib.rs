//! The `ancestral` command line.
//!
//! Every subcommand prints JSON on stdout and diagnostics on stderr. Exit
//! status is 0 on success, 1 when the input is well formed but the answer
//! is negative or an operation fails (infeasible sequence, invalid coloring,
//! proof that does not verify, I/O), and 2 on usage errors.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub mod acceptance;
mod commands;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ancestral",
    version,
    about = "Ancestral tree colorings and private Merkle proof retrieval"
)]
pub struct Cli {
    /// Seed for every randomized step; OS entropy when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel steps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Color a tree with the color-splitting algorithm.
    Color(ColorArgs),
    /// Check a color sequence for feasibility.
    Feasible(SeqArg),
    /// Check that a coloring file is ancestral.
    Verify(VerifyArgs),
    /// Sub-indices along one root-to-leaf path.
    Subindex(SubindexArgs),
    /// Build, prove and verify Merkle trees.
    #[command(subcommand)]
    Merkle(MerkleCommand),
    /// Retrieve a Merkle proof privately, one query per color class.
    Retrieve(RetrieveArgs),
    /// Compare per-server cost of retrieval schemes.
    Bench(BenchArgs),
    /// Find a short bit window that tells a set of hashes apart.
    Pixr(PixrArgs),
    /// Run the acceptance suite.
    Accept(AcceptArgs),
    /// Serve the HTTP API and, with a deployment, PIR replicas.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SeqArg {
    /// "4,5,5", "4:1,5:2,5:3", or a file holding either form or the JSON list.
    #[arg(long)]
    pub seq: String,
}

#[derive(Debug, Args)]
pub struct ColorArgs {
    #[arg(long)]
    pub h: Option<u32>,
    /// Use the balanced sequence of height --h.
    #[arg(long)]
    pub balanced: bool,
    #[arg(long, conflicts_with = "balanced")]
    pub seq: Option<String>,
    /// Write the coloring here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Binary ACOL format instead of JSON.
    #[arg(long, requires = "out")]
    pub binary: bool,
    /// Color independent subtrees on the thread pool.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub coloring: PathBuf,
    /// Expected class sizes; defaults to the sizes in the file.
    #[arg(long)]
    pub seq: Option<String>,
}

#[derive(Debug, Args)]
pub struct SubindexArgs {
    /// Defaults to the dimension of --seq.
    #[arg(long)]
    pub h: Option<u32>,
    /// Defaults to the balanced sequence of height --h.
    #[arg(long)]
    pub seq: Option<String>,
    /// Heap index of the leaf, in 2^h..2^(h+1).
    #[arg(long)]
    pub leaf: u64,
}

#[derive(Debug, Subcommand)]
pub enum MerkleCommand {
    /// Build a tree from a .jsonl item list.
    Build {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        double: bool,
    },
    /// Print the proof of leaf position J.
    Prove {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        leaf: u64,
        #[arg(long)]
        double: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a proof against a root.
    Verify(MerkleVerifyArgs),
}

#[derive(Debug, Args)]
pub struct MerkleVerifyArgs {
    /// Proof JSON as printed by `merkle prove`.
    #[arg(long)]
    pub proof: PathBuf,
    /// Published root as hex.
    #[arg(long, required_unless_present = "tree", conflicts_with = "tree")]
    pub root: Option<String>,
    /// Take the root from a tree file.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[command(flatten)]
    pub item: ItemArg,
    /// Defaults to the leaf index stored in the proof.
    #[arg(long)]
    pub leaf: Option<u64>,
    #[arg(long)]
    pub double: bool,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ItemArg {
    /// Item as UTF-8 text.
    #[arg(long)]
    pub item: Option<String>,
    /// Item as hex bytes.
    #[arg(long)]
    pub item_hex: Option<String>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long)]
    pub coloring: Option<PathBuf>,
    /// 1-based leaf position.
    #[arg(long)]
    pub leaf: u64,
    #[arg(long, default_value = "xor2")]
    pub backend: ancestral_core::pir::Backend,
    /// TCP replicas at host:base_port.
    #[arg(long, conflicts_with = "remote")]
    pub tcp: Option<String>,
    /// Service URLs, one per replica, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub remote: Vec<String>,
    /// The item whose proof is wanted; defaults to the leaf of --tree.
    #[arg(long)]
    pub item: Option<String>,
    #[arg(long)]
    pub double: bool,
    /// Include the full queries in the plan.
    #[arg(long)]
    pub show_queries: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Heights, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub h: Vec<u32>,
    /// Schemes, comma separated; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<ancestral_core::pir::Scheme>,
    #[arg(long, default_value_t = 10)]
    pub trials: u32,
    #[arg(long, default_value = "plaintext")]
    pub backend: ancestral_core::pir::Backend,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct PixrArgs {
    /// One hex digest per line.
    #[arg(long)]
    pub hashes: PathBuf,
    /// Window width; 2 log2 n when absent.
    #[arg(long)]
    pub n_bits: Option<u32>,
}

#[derive(Debug, Args)]
pub struct AcceptArgs {
    /// Smaller parameters for a fast smoke run.
    #[arg(long)]
    pub quick: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
    #[arg(long, requires = "coloring")]
    pub tree: Option<PathBuf>,
    #[arg(long, requires = "tree")]
    pub coloring: Option<PathBuf>,
    #[arg(long)]
    pub double: bool,
    /// Also serve the binary protocol from this base port.
    #[arg(long, requires = "tree")]
    pub tcp_base: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub tcp_host: String,
    /// Which replica this process is, for the TCP port layout.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub replica: u8,
}

/// A failed command and the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    /// JSON still worth printing, such as `{"feasible": false}`.
    pub output: Option<serde_json::Value>,
}

impl Failure {
    pub fn domain(e: impl Display) -> Self {
        Failure {
            code: EXIT_DOMAIN,
            message: e.to_string(),
            output: None,
        }
    }

    pub fn usage(e: impl Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
            output: None,
        }
    }

    pub fn negative(message: impl Display, output: serde_json::Value) -> Self {
        Failure {
            code: EXIT_DOMAIN,
            message: message.to_string(),
            output: Some(output),
        }
    }
}

pub(crate) trait OrFail<T> {
    fn domain(self) -> Result<T, Failure>;
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Display> OrFail<T> for Result<T, E> {
    fn domain(self) -> Result<T, Failure> {
        self.map_err(Failure::domain)
    }

    fn usage(self) -> Result<T, Failure> {
        self.map_err(Failure::usage)
    }
}

pub(crate) fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            let _ = writeln!(err, "error: --threads must be positive");
            return EXIT_USAGE;
        }
        // a pool already set up by an earlier call in this process stays
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match commands::dispatch(&cli, out, err) {
        Ok(v) => {
            if let Some(v) = v {
                let _ = writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&v).expect("json value")
                );
            }
            EXIT_OK
        }
        Err(f) => {
            if let Some(v) = f.output {
                let _ = writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&v).expect("json value")
                );
            }
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
