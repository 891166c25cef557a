//! The acceptance suite: one check per published claim, with fixed
//! tolerances. `quick` shrinks the exhaustive parts for smoke runs; the
//! fixed examples and the timing bound at height 20 are run either way.

use std::time::Instant;

use ancestral_core::color_seq::{
    balanced_sequence, enumerate_feasible, is_feasible, random_feasible, ColorId, ColorSequence,
    SizedColor,
};
use ancestral_core::csa::{
    brute_force_colorable, color_splitting, feasible_split, verify_ancestral, FeasibleSplit,
};
use ancestral_core::merkle::{Digest, MerkleTree};
use ancestral_core::pir::{
    partition, retrieve_proof, run_bench, scheme_cost, xor2_answer, xor2_make_query,
    xor2_reconstruct, Backend, ClientView, Cluster, PirQuery, Scheme, SubDatabase,
};
use ancestral_core::pixr::select_window;
use ancestral_core::subindex::find_sub_indices_counted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Bound on sub-index work: at most `STEP_CONSTANT * h^3` elementary steps.
pub const STEP_CONSTANT: u64 = 2;

/// Relative tolerance on the baseline cost ratios.
pub const RATIO_TOLERANCE: f64 = 0.15;

pub const CSA_TIME_LIMIT_S: f64 = 10.0;
pub const SCALING_EXPONENT_MAX: f64 = 1.2;
pub const RETRIEVAL_TIME_LIMIT_S: f64 = 30.0;
pub const THEOREM_TIME_LIMIT_S: f64 = 120.0;
pub const FIGURE_TIME_LIMIT_S: f64 = 1.0;
pub const PIXR_MEAN_STEPS_MAX: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub quick: bool,
    pub seed: u64,
    pub random_splits: usize,
    pub subindex_max_h: u32,
    pub subindex_random: usize,
    pub retrieval_h: u32,
    pub xor_cases: usize,
    pub timing_repeats: usize,
}

impl SuiteConfig {
    pub fn new(quick: bool, seed: u64) -> Self {
        if quick {
            SuiteConfig {
                quick,
                seed,
                random_splits: 1_000,
                subindex_max_h: 8,
                subindex_random: 10,
                retrieval_h: 8,
                xor_cases: 200,
                timing_repeats: 1,
            }
        } else {
            SuiteConfig {
                quick,
                seed,
                random_splits: 10_000,
                subindex_max_h: 12,
                subindex_random: 100,
                retrieval_h: 10,
                xor_cases: 1_000,
                timing_repeats: 3,
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.2}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type Check = fn(&SuiteConfig) -> (bool, String);

pub const CRITERIA: [(u32, &str, Check); 11] = [
    (1, "figure reproduction", figures),
    (2, "feasibility equals colorability at h<=3", theorem_two),
    (3, "split preservation", split_preservation),
    (4, "sub-index oracle equivalence", subindex_oracle),
    (5, "worked sub-index example", subindex_example),
    (6, "end-to-end retrieval", end_to_end),
    (7, "cost model", cost_model),
    (8, "baseline ratios", baseline_ratios),
    (9, "color-splitting performance", performance),
    (10, "xor query seed invariance", xor_invariance),
    (11, "distinguishing bit windows", bit_windows),
];

pub fn run_suite(cfg: &SuiteConfig) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|&(id, name, check)| run_one(cfg, id, name, check))
        .collect()
}

pub fn run_criterion(cfg: &SuiteConfig, id: u32) -> Option<CriterionResult> {
    CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|&(id, name, check)| run_one(cfg, id, name, check))
}

fn run_one(cfg: &SuiteConfig, id: u32, name: &'static str, check: Check) -> CriterionResult {
    let t = Instant::now();
    let (pass, detail) = match std::panic::catch_unwind(|| check(cfg)) {
        Ok(r) => r,
        Err(p) => (
            false,
            format!(
                "panicked: {}",
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            ),
        ),
    };
    CriterionResult {
        id,
        name,
        pass,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn seq(entries: &[(u16, u64)]) -> ColorSequence {
    ColorSequence::new(entries.iter().map(|&(c, n)| SizedColor::new(c, n))).expect("fixed sequence")
}

fn figures(_: &SuiteConfig) -> (bool, String) {
    let t = Instant::now();
    let c = color_splitting(&seq(&[(1, 4), (2, 5), (3, 5)])).expect("feasible");
    let want: [&[u64]; 3] = [&[2, 6, 14, 15], &[8, 9, 10, 11, 3], &[4, 5, 12, 13, 7]];
    let classes_ok = (1..=3).all(|i| c.class(ColorId(i)) == want[i as usize - 1]);

    let seven = seq(&[(1, 3), (2, 6), (3, 8), (4, 13)]);
    let split = feasible_split(&seven).expect("feasible");
    let split_ok = split.left == seq(&[(3, 3), (2, 5), (4, 6)])
        && split.right == seq(&[(1, 2), (3, 5), (4, 7)]);
    let sevens = color_splitting(&seven).expect("feasible");
    // the subtrees below nodes 2 and 3 carry exactly the split halves
    let below = |root: u64, color: ColorId| {
        sevens
            .class(color)
            .iter()
            .filter(|&&v| v != root && ancestral_core::csa::is_ancestor(root, v))
            .count() as u64
    };
    let tree_ok = (1..=4).all(|i| {
        below(2, ColorId(i)) == split.left.count_of(ColorId(i))
            && below(3, ColorId(i)) == split.right.count_of(ColorId(i))
    }) && sevens.color_of(2) == Some(ColorId(1))
        && sevens.color_of(3) == Some(ColorId(2))
        && verify_ancestral(&sevens, &seven);
    let secs = t.elapsed().as_secs_f64();
    let pass = classes_ok && split_ok && tree_ok && secs < FIGURE_TIME_LIMIT_S;
    (pass, format!("classes exact={classes_ok} root split exact={split_ok} subtrees match={tree_ok} in {secs:.3}s"))
}

fn theorem_two(_: &SuiteConfig) -> (bool, String) {
    let t = Instant::now();
    let mut checked = 0;
    let mut feasible = 0;
    let mut bad = Vec::new();
    for h in 1..=3u32 {
        let total = (2u64 << h) - 2;
        for parts in sorted_partitions(total, h as usize) {
            let s = ColorSequence::from_counts(&parts).expect("positive parts");
            let f = is_feasible(&s);
            let brute = brute_force_colorable(&s).expect("h<=3");
            let csa = color_splitting(&s)
                .map(|c| verify_ancestral(&c, &s))
                .unwrap_or(false);
            checked += 1;
            feasible += f as u32;
            if f != brute || f != csa {
                bad.push(s.to_compact());
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = bad.is_empty() && secs < THEOREM_TIME_LIMIT_S;
    (
        pass,
        format!(
            "{checked} sequences, {feasible} feasible, {} disagreements {bad:?} in {secs:.1}s",
            bad.len()
        ),
    )
}

/// Non-decreasing sequences of `k` positive integers summing to `total`.
fn sorted_partitions(total: u64, k: usize) -> Vec<Vec<u64>> {
    fn go(rest: u64, k: usize, min: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if k == 1 {
            if rest >= min {
                cur.push(rest);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        let mut x = min;
        while x * k as u64 <= rest {
            cur.push(x);
            go(rest - x, k - 1, x, cur, out);
            cur.pop();
            x += 1;
        }
    }
    let mut out = Vec::new();
    go(total, k, 1, &mut Vec::new(), &mut out);
    out
}

fn split_ok(s: &ColorSequence, sp: &FeasibleSplit) -> bool {
    let conserved = s.entries().iter().all(|e| {
        let c = e.color;
        sp.left.count_of(c)
            + sp.right.count_of(c)
            + u64::from(sp.left_child_color == c)
            + u64::from(sp.right_child_color == c)
            == e.count
    });
    is_feasible(&sp.left)
        && is_feasible(&sp.right)
        && sp.left.dimension() + 1 == s.dimension()
        && sp.right.dimension() + 1 == s.dimension()
        && sp.left.total() + sp.right.total() + 2 == s.total()
        && conserved
        && !sp.left.contains(sp.left_child_color)
        && !sp.right.contains(sp.right_child_color)
}

fn split_preservation(cfg: &SuiteConfig) -> (bool, String) {
    let mut checked = 0;
    let mut failures = 0;
    for h in 2..=5 {
        for s in enumerate_feasible(h).expect("h<=6") {
            checked += 1;
            failures += !feasible_split(&s)
                .map(|sp| split_ok(&s, &sp))
                .unwrap_or(false) as u32;
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_splits {
        let s = random_feasible(rng.gen_range(2..=12), &mut rng);
        checked += 1;
        failures += !feasible_split(&s)
            .map(|sp| split_ok(&s, &sp))
            .unwrap_or(false) as u32;
    }
    (
        failures == 0,
        format!("{checked} splits, {failures} failures"),
    )
}

fn subindex_oracle(cfg: &SuiteConfig) -> (bool, String) {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 4);
    let mut jobs = Vec::new();
    for h in 1..=cfg.subindex_max_h {
        jobs.push(balanced_sequence(h).expect("h>=1"));
        jobs.extend((0..cfg.subindex_random).map(|_| random_feasible(h, &mut rng)));
    }
    // (mismatches, leaves, worst steps / h^3 as a ratio numerator and h)
    let per: Vec<(u64, u64, u64, u32)> = jobs
        .par_iter()
        .map(|s| {
            let h = s.dimension() as u32;
            let pos = color_splitting(s).expect("feasible").positions();
            let mut mismatches = 0;
            let mut worst = 0;
            for leaf in (1u64 << h)..(2u64 << h) {
                let (p, steps) = find_sub_indices_counted(h, leaf, s).expect("valid leaf");
                worst = worst.max(steps);
                mismatches += p
                    .nodes
                    .iter()
                    .zip(&p.sub_indices)
                    .filter(|(k, j)| pos[**k as usize] != **j)
                    .count() as u64;
            }
            (mismatches, 1u64 << h, worst, h)
        })
        .collect();
    let mismatches: u64 = per.iter().map(|p| p.0).sum();
    let leaves: u64 = per.iter().map(|p| p.1).sum();
    let over_bound = per
        .iter()
        .filter(|p| p.2 > STEP_CONSTANT * u64::from(p.3).pow(3))
        .count();
    let worst_ratio = per
        .iter()
        .map(|p| p.2 as f64 / f64::from(p.3).powi(3))
        .fold(0.0, f64::max);
    let pass = mismatches == 0 && over_bound == 0;
    (
        pass,
        format!(
            "{} sequences, {leaves} leaves, {mismatches} mismatches; max steps/h^3 = {worst_ratio:.3} (bound {STEP_CONSTANT}), {over_bound} over",
            per.len()
        ),
    )
}

fn subindex_example(_: &SuiteConfig) -> (bool, String) {
    let (p, _) = find_sub_indices_counted(3, 11, &seq(&[(1, 4), (2, 5), (3, 5)])).expect("valid");
    let colors: Vec<u16> = p.colors.iter().map(|c| c.get()).collect();
    let pass = p.nodes == [2, 5, 11] && p.sub_indices == [1, 2, 4] && colors == [1, 3, 2];
    (
        pass,
        format!(
            "nodes {:?} colors {colors:?} sub-indices {:?}",
            p.nodes, p.sub_indices
        ),
    )
}

fn end_to_end(cfg: &SuiteConfig) -> (bool, String) {
    let t = Instant::now();
    let h = cfg.retrieval_h;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 6);
    let items: Vec<[u8; 32]> = (0..1u64 << h).map(|_| rng.gen()).collect();
    let tree = MerkleTree::build(&items).expect("non-empty");
    let s = balanced_sequence(h).expect("h>=1");
    let dbs =
        partition(&tree.swap(), &color_splitting(&s).expect("feasible")).expect("same height");
    let cluster = Cluster::local(&dbs, Backend::Xor2);
    let view = ClientView {
        root: tree.root(),
        height: h,
        sequence: s,
        mode: tree.mode(),
    };
    let mut ok = 0;
    let mut audited = 0;
    for j in 1..=tree.leaf_count() {
        if let Ok((proof, plan)) = retrieve_proof(
            &view,
            &tree.leaf(j).expect("in range"),
            j,
            &cluster,
            &mut rng,
        ) {
            ok += ancestral_core::merkle::verify(&tree.root(), &items[j as usize - 1], j, &proof)
                .unwrap_or(false) as u64;
            audited += plan.one_query_per_class(h as usize) as u64;
        }
    }
    let n = tree.leaf_count();
    let secs = t.elapsed().as_secs_f64();
    let pass = ok == n && audited == n && secs < RETRIEVAL_TIME_LIMIT_S;
    (
        pass,
        format!("{ok}/{n} proofs verify, {audited}/{n} audits all-ones, {secs:.1}s"),
    )
}

#[allow(clippy::manual_div_ceil)] // written out independently of the library
fn cost_model(_: &SuiteConfig) -> (bool, String) {
    let mut bad = Vec::new();
    for h in [10u32, 16, 20] {
        let (hh, n) = (u128::from(h), 1u128 << h);
        let big_n = 2 * n - 2;
        let ceil = |a: u128, b: u128| (a + b - 1) / b;
        let want = [
            (Scheme::Coloring, hh, ceil(big_n, hh), big_n),
            (Scheme::HRepetition, hh, big_n, hh * big_n),
            (Scheme::LayerBased, hh, n, big_n),
            (Scheme::ProofAsElement, 1, n * hh, n * hh),
            (
                Scheme::SealpirPbcModel,
                ceil(3 * hh, 2),
                ceil(2 * big_n, hh),
                3 * big_n,
            ),
        ];
        for (scheme, servers, largest, total) in want {
            let c = scheme_cost(scheme, h);
            if (c.servers, c.largest_db, c.total_storage) != (servers, largest, total) {
                bad.push(format!("{scheme}@{h}"));
            }
        }
    }
    let col = scheme_cost(Scheme::Coloring, 20);
    let pbc = scheme_cost(Scheme::SealpirPbcModel, 20);
    let published = col.servers == 20
        && col.largest_db == 104_858
        && pbc.servers == 30
        && pbc.largest_db == 209_715;
    (
        bad.is_empty() && published,
        format!(
            "formula mismatches {bad:?}; h=20 coloring {} servers x {} items, pbc {} servers x {} items",
            col.servers, col.largest_db, pbc.servers, pbc.largest_db
        ),
    )
}

fn baseline_ratios(cfg: &SuiteConfig) -> (bool, String) {
    let h = 10;
    let report = run_bench(
        &[h],
        &[Scheme::Coloring, Scheme::LayerBased, Scheme::HRepetition],
        8,
        Backend::Plaintext,
        cfg.seed,
    )
    .expect("bench");
    let t = |s| report.row(s, h).expect("row").max_touched as f64;
    let layer = t(Scheme::LayerBased) / t(Scheme::Coloring);
    let rep = t(Scheme::HRepetition) / t(Scheme::Coloring);
    let (want_layer, want_rep) = (f64::from(h) / 2.0, f64::from(h));
    let within = |got: f64, want: f64| (got - want).abs() <= RATIO_TOLERANCE * want;
    let pass = within(layer, want_layer) && within(rep, want_rep);
    (pass, format!("layer/coloring = {layer:.3} (want {want_layer} +-15%), repetition/coloring = {rep:.3} (want {want_rep} +-15%)"))
}

fn time_csa(h: u32, repeats: usize) -> f64 {
    let s = balanced_sequence(h).expect("h>=1");
    (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            let c = color_splitting(&s).expect("feasible");
            let secs = t.elapsed().as_secs_f64();
            drop(c);
            secs
        })
        .fold(f64::INFINITY, f64::min)
}

fn performance(cfg: &SuiteConfig) -> (bool, String) {
    let samples: Vec<(f64, f64)> = (14..=20u32)
        .map(|h| (((2u64 << h) - 2) as f64, time_csa(h, cfg.timing_repeats)))
        .collect();
    let t20 = samples.last().expect("h=20").1;
    // least-squares slope of log time against log node count
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(n, t)| (n.ln(), t.max(1e-9).ln()))
        .collect();
    let k = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / k,
        pts.iter().map(|p| p.1).sum::<f64>() / k,
    );
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let pass = t20 <= CSA_TIME_LIMIT_S && slope <= SCALING_EXPONENT_MAX;
    (
        pass,
        format!(
            "h=20 ({} nodes) in {t20:.3}s; scaling exponent over h=14..20 = {slope:.3}",
            (2u64 << 20) - 2
        ),
    )
}

fn xor_invariance(cfg: &SuiteConfig) -> (bool, String) {
    let views: Vec<_> = (1..=64)
        .map(|target| {
            match xor2_make_query(64, target, &mut ChaCha20Rng::seed_from_u64(cfg.seed))
                .expect("in range")
            {
                PirQuery::Xor2 { server1, .. } => server1,
                PirQuery::Plaintext { .. } => unreachable!(),
            }
        })
        .collect();
    let invariant = views.windows(2).all(|w| w[0] == w[1]);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 10);
    let mut wrong = 0;
    for _ in 0..cfg.xor_cases {
        let size = rng.gen_range(1..=256u64);
        let target = rng.gen_range(1..=size);
        let db = SubDatabase {
            color: ColorId(1),
            items: (0..size).map(|_| Digest(rng.gen())).collect(),
        };
        let PirQuery::Xor2 { server1, server2 } =
            xor2_make_query(size, target, &mut rng).expect("in range")
        else {
            unreachable!()
        };
        let got = xor2_reconstruct(
            &xor2_answer(&db, &server1).expect("len"),
            &xor2_answer(&db, &server2).expect("len"),
        );
        wrong += (got != db.items[target as usize - 1]) as u32;
    }
    (invariant && wrong == 0, format!("server-1 view identical across 64 targets: {invariant}; {wrong}/{} reconstructions wrong", cfg.xor_cases))
}

fn bit_windows(cfg: &SuiteConfig) -> (bool, String) {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 11);
    let n = 1usize << 10;
    let mut steps = Vec::new();
    let mut sound = true;
    for _ in 0..10 {
        let mut set = std::collections::HashSet::with_capacity(n);
        while set.len() < n {
            set.insert(Digest(rng.gen()));
        }
        let hashes: Vec<Digest> = set.into_iter().collect();
        match select_window(&hashes, 20) {
            Ok((w, s)) => {
                let distinct: std::collections::HashSet<u64> =
                    hashes.iter().map(|d| w.extract(d)).collect();
                sound &= distinct.len() == n;
                steps.push(s);
            }
            Err(_) => sound = false,
        }
    }
    let mean = steps.iter().sum::<u64>() as f64 / steps.len().max(1) as f64;
    let pass = sound && steps.len() == 10 && mean <= PIXR_MEAN_STEPS_MAX;
    (pass, format!("mean steps {mean:.2} over {} datasets (bound {PIXR_MEAN_STEPS_MAX}); windows distinct: {sound}", steps.len()))
}
