use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ancestral_client::{http_cluster, tcp_cluster};
use ancestral_core::color_seq::{balanced_sequence, ColorSequence};
use ancestral_core::csa::{
    color_splitting, color_splitting_with, verify_ancestral, AncestralColoring, CsaOptions,
};
use ancestral_core::formats::{
    coloring_from_any, coloring_to_bytes, coloring_to_json, parse_items,
};
use ancestral_core::merkle::{verify_with, Digest, HashMode, MerkleProof, MerkleTree};
use ancestral_core::pir::{
    partition, retrieve_proof, run_bench, ClientView, Cluster, PirQuery, Scheme,
};
use ancestral_core::pixr::{default_width, select_window};
use ancestral_core::subindex::find_sub_indices;
use ancestral_service::{serve_http, spawn_tcp_replicas, AppState, Deployment};
use serde_json::{json, Value};

use crate::{acceptance, rng, Cli, Command, Failure, MerkleCommand, OrFail};

type Res = Result<Option<Value>, Failure>;

pub(crate) fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Res {
    match &cli.command {
        Command::Color(a) => color(a),
        Command::Feasible(a) => feasible(&a.seq),
        Command::Verify(a) => verify(a),
        Command::Subindex(a) => subindex(a),
        Command::Merkle(m) => merkle(m),
        Command::Retrieve(a) => retrieve(a, cli.seed),
        Command::Bench(a) => bench(a, cli.seed, out),
        Command::Pixr(a) => pixr(a),
        Command::Accept(a) => accept(a.quick, cli.seed, err),
        Command::Serve(a) => serve(a, out),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}

/// A literal sequence, or a file holding a literal or the JSON list.
fn parse_seq(arg: &str) -> Result<ColorSequence, Failure> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        String::from_utf8(read(path)?).usage()?
    } else {
        arg.to_string()
    };
    let text = text.trim();
    if text.starts_with('[') {
        serde_json::from_str(text).usage()
    } else {
        text.parse().usage()
    }
}

fn mode(double: bool) -> HashMode {
    if double {
        HashMode::Double
    } else {
        HashMode::Single
    }
}

fn load_tree(path: &Path, double: bool) -> Result<MerkleTree, Failure> {
    MerkleTree::from_bytes(&read(path)?, mode(double))
        .map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}

fn load_coloring(path: &Path) -> Result<AncestralColoring, Failure> {
    coloring_from_any(&read(path)?).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}

fn color(a: &crate::ColorArgs) -> Res {
    let seq = match (&a.seq, a.h) {
        (Some(s), _) => parse_seq(s)?,
        (None, Some(h)) => balanced_sequence(h).usage()?,
        (None, None) => return Err(Failure::usage("give --seq or --h")),
    };
    if let (Some(h), Some(_)) = (a.h, &a.seq) {
        if seq.dimension() != h as usize {
            return Err(Failure::usage(format!(
                "--h {h} but the sequence has {} colors",
                seq.dimension()
            )));
        }
    }
    let coloring = color_splitting_with(
        &seq,
        CsaOptions {
            parallel: a.parallel,
        },
    )
    .domain()?;
    let Some(path) = &a.out else {
        return Ok(Some(
            serde_json::from_str(&coloring_to_json(&coloring)).expect("coloring json"),
        ));
    };
    if a.binary {
        write(path, &coloring_to_bytes(&coloring))?;
    } else {
        write(path, coloring_to_json(&coloring).as_bytes())?;
    }
    Ok(Some(json!({
        "h": coloring.height(),
        "sequence": coloring.sequence().to_compact(),
        "balanced": coloring.is_balanced(),
        "out": path.display().to_string(),
    })))
}

fn feasible(seq: &str) -> Res {
    let seq = parse_seq(seq)?;
    match seq.check_feasible() {
        Ok(()) => Ok(Some(json!({ "feasible": true }))),
        Err(e) => Err(Failure::negative(
            &e,
            json!({ "feasible": false, "violation": e.to_string() }),
        )),
    }
}

fn verify(a: &crate::VerifyArgs) -> Res {
    let coloring = load_coloring(&a.coloring)?;
    let seq = match &a.seq {
        Some(s) => parse_seq(s)?,
        None => coloring.sequence(),
    };
    let valid = verify_ancestral(&coloring, &seq);
    let v = json!({ "valid": valid, "balanced": coloring.is_balanced() });
    if valid {
        Ok(Some(v))
    } else {
        Err(Failure::negative(
            "coloring is not ancestral with the expected class sizes",
            v,
        ))
    }
}

fn subindex(a: &crate::SubindexArgs) -> Res {
    let seq = match (&a.seq, a.h) {
        (Some(s), _) => parse_seq(s)?,
        (None, Some(h)) => balanced_sequence(h).usage()?,
        (None, None) => return Err(Failure::usage("give --seq or --h")),
    };
    let h = a.h.unwrap_or(seq.dimension() as u32);
    let p = find_sub_indices(h, a.leaf, &seq).domain()?;
    Ok(Some(serde_json::to_value(&p).expect("path json")))
}

fn merkle(m: &MerkleCommand) -> Res {
    match m {
        MerkleCommand::Build { items, out, double } => {
            let text = String::from_utf8(read(items)?).domain()?;
            let items = parse_items(&text).domain()?;
            let tree = MerkleTree::build_with(&items, mode(*double)).domain()?;
            write(out, &tree.to_bytes())?;
            Ok(Some(json!({
                "h": tree.height(),
                "items": items.len(),
                "leaves": tree.leaf_count(),
                "root": tree.root().to_hex(),
                "out": out.display().to_string(),
            })))
        }
        MerkleCommand::Prove {
            tree,
            leaf,
            double,
            out,
        } => {
            let tree = load_tree(tree, *double)?;
            let proof = tree.prove(*leaf).domain()?;
            let v = serde_json::to_value(&proof).expect("proof json");
            match out {
                Some(p) => {
                    write(
                        p,
                        serde_json::to_string_pretty(&v).expect("json").as_bytes(),
                    )?;
                    Ok(Some(
                        json!({ "leaf_index": proof.leaf_index, "root": tree.root().to_hex(), "out": p.display().to_string() }),
                    ))
                }
                None => Ok(Some(v)),
            }
        }
        MerkleCommand::Verify(a) => {
            let proof: MerkleProof = serde_json::from_slice(&read(&a.proof)?).domain()?;
            let root = match (&a.root, &a.tree) {
                (Some(r), _) => r.parse::<Digest>().usage()?,
                (None, Some(t)) => load_tree(t, a.double)?.root(),
                (None, None) => return Err(Failure::usage("give --root or --tree")),
            };
            let item = match (&a.item.item, &a.item.item_hex) {
                (Some(s), _) => s.clone().into_bytes(),
                (None, Some(h)) => hex::decode(h.trim_start_matches("0x")).usage()?,
                (None, None) => return Err(Failure::usage("give --item or --item-hex")),
            };
            let j = a.leaf.unwrap_or(proof.leaf_index);
            let valid = verify_with(mode(a.double), &root, &item, j, &proof).domain()?;
            let v = json!({ "valid": valid, "leaf_index": j });
            if valid {
                Ok(Some(v))
            } else {
                Err(Failure::negative(
                    "proof does not verify against the root",
                    v,
                ))
            }
        }
    }
}

fn retrieve(a: &crate::RetrieveArgs, seed: Option<u64>) -> Res {
    let tree = a
        .tree
        .as_deref()
        .map(|p| load_tree(p, a.double))
        .transpose()?;
    let (view, cluster): (ClientView, Cluster) = if !a.remote.is_empty() {
        let (view, cluster) = http_cluster(&a.remote, a.backend).domain()?;
        if let Some(t) = &tree {
            if t.root() != view.root {
                return Err(Failure::domain(format!(
                    "service root {} differs from the local tree root {}",
                    view.root,
                    t.root()
                )));
            }
        }
        (view, cluster)
    } else {
        let (Some(tree), Some(cpath)) = (&tree, &a.coloring) else {
            return Err(Failure::usage(
                "without --remote, --tree and --coloring are required",
            ));
        };
        let coloring = load_coloring(cpath)?;
        let seq = coloring.sequence();
        // clients derive positions from the sequence alone, so the servers
        // must hold exactly the coloring the algorithm produces for it
        if color_splitting(&seq).domain()? != coloring {
            return Err(Failure::domain(
                "coloring is not the color-splitting output for its own sequence",
            ));
        }
        let view = ClientView {
            root: tree.root(),
            height: tree.height(),
            sequence: seq,
            mode: tree.mode(),
        };
        let cluster = match &a.tcp {
            Some(addr) => {
                let (host, port) = addr
                    .rsplit_once(':')
                    .ok_or_else(|| Failure::usage("--tcp wants host:base_port"))?;
                tcp_cluster(&view, host, port.parse().usage()?, a.backend).domain()?
            }
            None => Cluster::local(&partition(&tree.swap(), &coloring).domain()?, a.backend),
        };
        (view, cluster)
    };
    let leaf_digest = match (&a.item, &tree) {
        (Some(item), _) => view.mode.hash(item.as_bytes()),
        (None, Some(t)) => t.leaf(a.leaf).domain()?,
        (None, None) => return Err(Failure::usage("give --item or --tree to name the item")),
    };
    let mut rng = rng(seed);
    let (proof, plan) = retrieve_proof(&view, &leaf_digest, a.leaf, &cluster, &mut rng).domain()?;
    let records: Vec<Value> = plan
        .records
        .iter()
        .map(|r| {
            let mut v = json!({ "level": r.level, "node": r.node, "color": r.color, "sub_index": r.sub_index, "touched": r.touched });
            if a.show_queries {
                v["query"] = serde_json::to_value(&r.query).expect("query json");
            } else if let PirQuery::Xor2 { server1, .. } = &r.query {
                v["query_bytes"] = json!(2 * server1.as_bytes().len());
            }
            v
        })
        .collect();
    Ok(Some(json!({
        "leaf_index": a.leaf,
        "leaf_node": plan.leaf,
        "root": view.root.to_hex(),
        "backend": a.backend,
        "verified": true,
        "proof": proof.digests,
        "plan": { "records": records, "audit": plan.audit, "one_query_per_class": plan.one_query_per_class(view.height as usize) },
    })))
}

fn bench(a: &crate::BenchArgs, seed: Option<u64>, out: &mut dyn Write) -> Res {
    let schemes = if a.schemes.is_empty() {
        Scheme::ALL.to_vec()
    } else {
        a.schemes.clone()
    };
    let seed = seed.unwrap_or(0);
    let report = run_bench(&a.h, &schemes, a.trials, a.backend, seed).domain()?;
    let body = if a.format == "csv" {
        report.to_csv()
    } else {
        serde_json::to_string_pretty(&report).expect("report json") + "\n"
    };
    match &a.out {
        Some(p) => {
            write(p, body.as_bytes())?;
            Ok(Some(
                json!({ "out": p.display().to_string(), "rows": report.rows.len(), "format": a.format }),
            ))
        }
        None => {
            out.write_all(body.as_bytes()).domain()?;
            Ok(None)
        }
    }
}

fn pixr(a: &crate::PixrArgs) -> Res {
    let text = String::from_utf8(read(&a.hashes)?).domain()?;
    let hashes = text
        .lines()
        .map(|l| l.trim().trim_matches('"'))
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<Digest>())
        .collect::<Result<Vec<_>, _>>()
        .domain()?;
    let width = a.n_bits.unwrap_or_else(|| default_width(hashes.len()));
    let (w, steps) = select_window(&hashes, width).domain()?;
    Ok(Some(
        json!({ "offset": w.offset, "width": w.width, "steps": steps }),
    ))
}

fn accept(quick: bool, seed: Option<u64>, err: &mut dyn Write) -> Res {
    let results = acceptance::run_suite(&acceptance::SuiteConfig::new(
        quick,
        seed.unwrap_or(acceptance::DEFAULT_SEED),
    ));
    for r in &results {
        let _ = writeln!(err, "{}", r.line());
    }
    let all = results.iter().all(|r| r.pass);
    let v = json!({ "quick": quick, "passed": all, "criteria": results });
    if all {
        Ok(Some(v))
    } else {
        Err(Failure::negative(
            format!(
                "{} of {} criteria failed",
                results.iter().filter(|r| !r.pass).count(),
                results.len()
            ),
            v,
        ))
    }
}

fn serve(a: &crate::ServeArgs, out: &mut dyn Write) -> Res {
    let dep = match (&a.tree, &a.coloring) {
        (Some(t), Some(c)) => {
            Some(Deployment::new(&load_tree(t, a.double)?, &load_coloring(c)?).domain()?)
        }
        _ => None,
    };
    let rt = tokio::runtime::Runtime::new().domain()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.listen)
            .await
            .map_err(|e| Failure::domain(format!("{}: {e}", a.listen)))?;
        let http = listener.local_addr().domain()?;
        let mut tcp = Vec::new();
        let state = match dep {
            Some(d) => {
                if let Some(base) = a.tcp_base {
                    for (color, addr, _) in
                        spawn_tcp_replicas(&d, &a.tcp_host, base, a.replica as usize)
                            .await
                            .domain()?
                    {
                        tcp.push(json!({ "color": color, "addr": addr.to_string() }));
                    }
                }
                AppState {
                    deployment: Some(Arc::new(d)),
                }
            }
            None => AppState::default(),
        };
        let banner =
            json!({ "listening": format!("http://{http}"), "replica": a.replica, "tcp": tcp });
        let _ = writeln!(out, "{banner}");
        let _ = out.flush();
        serve_http(listener, state).await.domain()?;
        Ok(None)
    })
}
