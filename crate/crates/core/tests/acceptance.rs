//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use pktflow::cli;
use pktflow::engine::{
    analyze, analyze_from, default_ceiling, value_equals, AnalysisOptions, Variant, Worklist,
};
use pktflow::exec::Exec;
use pktflow::gen::{cycle_network, random_networks};
use pktflow::netmodel::literal::parse_value_set;
use pktflow::netmodel::{load_network, Network};
use pktflow::oracle::{check_against, simulate, CompareReport, ExactResult};
use pktflow::pktset::{FieldId, FieldMask, Formula, HeaderLayout, PacketSpace, ValueSet};
use pktflow::xfer::{nat_packet, update_original};

const TRIAL_SEED: u64 = 2024;
const TRIALS: usize = 100;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn load(name: &str) -> Network {
    load_network(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["pktflow"];
    argv.extend_from_slice(args);
    let code = cli::run(argv, &mut out, &mut err);
    assert!(err.is_empty(), "stderr: {}", String::from_utf8_lossy(&err));
    (code, String::from_utf8(out).unwrap())
}

/// Parses `[set : set : ...]` into the product formula; refuses fields
/// printed as approximations.
fn parse_bracket(sp: &mut PacketSpace, text: &str) -> Formula {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .expect("bracket");
    let layout = sp.layout().clone();
    let parts: Vec<&str> = inner.split(" : ").collect();
    assert_eq!(parts.len(), layout.n_fields(), "field count in {text}");
    let mut f = sp.tru();
    for (id, part) in layout.field_ids().zip(parts) {
        assert!(!part.contains("(approx)"), "inexact field in {text}");
        let set = parse_value_set(part, layout.width(id)).unwrap();
        let atom = sp.atom_set(id, &set).unwrap();
        f = sp.and(f, atom);
    }
    f
}

/// Parses `<[curr], [orig]>` into (curr, orig).
fn parse_packet(sp: &mut PacketSpace, text: &str) -> (Formula, Formula) {
    let inner = text
        .trim()
        .strip_prefix('<')
        .and_then(|t| t.strip_suffix('>'))
        .expect("packet");
    let (c, o) = inner.split_once("], [").expect("two components");
    (
        parse_bracket(sp, &format!("{c}]")),
        parse_bracket(sp, &format!("[{o}")),
    )
}

fn lines_for<'a>(out: &'a str, prefix: &str) -> Vec<&'a str> {
    out.lines().filter_map(|l| l.strip_prefix(prefix)).collect()
}

fn example_analysis() {
    let start = Instant::now();
    let path = fixture("fig3.json");
    let (code, out) = run_cli(&[
        "analyze",
        "--network",
        path.to_str().unwrap(),
        "--origin",
        "Z1",
        "--variant",
        "v2",
    ]);
    let elapsed = start.elapsed();
    assert_eq!(code, 0);
    let net = load("fig3.json");
    let mut sp = PacketSpace::new(net.layout.clone());

    let z2 = lines_for(&out, "Z2 = ");
    assert_eq!(z2.len(), 1, "one packet at Z2");
    let (c, o) = parse_packet(&mut sp, z2[0]);
    let want_c = parse_bracket(&mut sp, "[202.67.34.6-10 : 10.192.28.1-255]");
    let want_o = parse_bracket(&mut sp, "[10.192.29.1-255 : 10.192.28.1-255]");
    assert!(
        sp.equals(c, want_c) && sp.equals(o, want_o),
        "Z2: {}",
        z2[0]
    );

    let z4 = lines_for(&out, "Z4 = ");
    assert_eq!(z4.len(), 1, "one packet at Z4");
    let (c, o) = parse_packet(&mut sp, z4[0]);
    let others = "¬{10.192.28.1-255, 10.192.29.1-255, 202.65.23.2, 209.85.153.85}";
    let want_c = parse_bracket(&mut sp, &format!("[202.67.34.6-10 : {others}]"));
    let want_o = parse_bracket(&mut sp, &format!("[10.192.29.1-255 : {others}]"));
    assert!(
        sp.equals(c, want_c) && sp.equals(o, want_o),
        "Z4: {}",
        z4[0]
    );

    assert_eq!(lines_for(&out, "Z3 = "), vec!["(unreachable)"]);
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
}

fn example_policy() {
    let path = fixture("fig3.json");
    let (code, out) = run_cli(&[
        "policy",
        "--network",
        path.to_str().unwrap(),
        "--zone",
        "Z1",
    ]);
    assert_eq!(code, 0);
    let net = load("fig3.json");
    let mut sp = PacketSpace::new(net.layout.clone());
    let accept = lines_for(&out, "accept = ");
    let reject = lines_for(&out, "reject = ");
    assert_eq!((accept.len(), reject.len()), (1, 1));
    let got_a = parse_bracket(&mut sp, accept[0]);
    let got_r = parse_bracket(&mut sp, reject[0]);
    let want_a = parse_bracket(
        &mut sp,
        "[10.192.29.1-255 : ¬{10.192.29.1-255, 209.85.153.85, 202.65.23.2}]",
    );
    let want_r = parse_bracket(&mut sp, "[10.192.29.1-255 : {202.65.23.2, 209.85.153.85}]");
    assert!(sp.equals(got_a, want_a), "accept: {}", accept[0]);
    assert!(sp.equals(got_r, want_r), "reject: {}", reject[0]);
}

fn delivered_to(exact: &ExactResult, net: &Network, zone: &str) -> bool {
    !exact.per_node[net.zone_id(zone).unwrap().0].is_empty()
}

fn cycles() {
    let net = load("fig1.json");
    let mut sp = PacketSpace::new(net.layout.clone());
    for v in Variant::ALL {
        let r = analyze(&mut sp, &net, "Z1", v).unwrap();
        assert!(
            !r.fact(net.zone_id("Z2").unwrap()).is_bottom(&sp),
            "fig1 Z2 bottom under {v}"
        );
    }

    let small = load("fig1-small.json");
    let z1 = small.zone_id("Z1").unwrap();
    let three = simulate(&small, z1, 12, Some(3), Exec::Sequential).unwrap();
    let four = simulate(&small, z1, 12, Some(4), Exec::Sequential).unwrap();
    assert!(!delivered_to(&three, &small, "Z2"), "hop limit 3 delivers");
    assert!(
        delivered_to(&four, &small, "Z2"),
        "hop limit 4 does not deliver"
    );
    for v in Variant::ALL {
        let rep = check_against(&small, z1, v, &unbounded(&small), Default::default()).unwrap();
        assert!(rep.is_ok(), "fig1-small {v}: {rep:?}");
    }

    for k in 2..=5usize {
        let ring = cycle_network(k);
        let z1 = ring.zone_id("Z1").unwrap();
        let z2 = ring.zone_id("Z2").unwrap();
        let need = (k * k + 2) as u32;
        let exact = simulate(&ring, z1, 12, None, Exec::Parallel).unwrap();
        assert_eq!(exact.min_hops[z2.0], Some(need), "ring {k}");
        let short = simulate(&ring, z1, 12, Some(need - 1), Exec::Parallel).unwrap();
        assert!(
            !delivered_to(&short, &ring, "Z2"),
            "ring {k} delivers early"
        );
        for v in [Variant::V1, Variant::V2] {
            let rep = check_against(&ring, z1, v, &exact, Default::default()).unwrap();
            assert!(rep.is_ok(), "ring {k} {v}: {rep:?}");
        }
        let mut sp = PacketSpace::new(ring.layout.clone());
        let r = analyze(&mut sp, &ring, "Z1", Variant::V1).unwrap();
        assert!(!r.fact(z2).is_bottom(&sp), "ring {k}: fixpoint misses Z2");
    }
}

fn unbounded(net: &Network) -> ExactResult {
    simulate(net, net.zone_id("Z1").unwrap(), 12, None, Exec::Sequential).unwrap()
}

struct TrialRun {
    trial: usize,
    zone: String,
    report: CompareReport,
}

fn trial_reports(variant: Variant) -> Vec<TrialRun> {
    let nets = random_networks(TRIAL_SEED, TRIALS);
    let per_net = Exec::Parallel.map(nets.into_iter().enumerate().collect(), |(i, net)| {
        net.zone_ids()
            .map(|z| {
                let exact = simulate(&net, z, 12, None, Exec::Sequential).unwrap();
                TrialRun {
                    trial: i,
                    zone: net.node_name(z).to_string(),
                    report: check_against(&net, z, variant, &exact, Default::default()).unwrap(),
                }
            })
            .collect::<Vec<_>>()
    });
    per_net.into_iter().flatten().collect()
}

fn fail_summary(runs: &[&TrialRun]) -> String {
    runs.iter()
        .take(3)
        .map(|r| format!("trial {} from {}: {:?}", r.trial, r.zone, r.report))
        .collect::<Vec<_>>()
        .join("\n")
}

fn v1_precision() {
    let start = Instant::now();
    let runs = trial_reports(Variant::V1);
    let bad: Vec<&TrialRun> = runs.iter().filter(|r| !r.report.is_ok()).collect();
    assert!(
        bad.is_empty(),
        "{} of {} runs differ\n{}",
        bad.len(),
        runs.len(),
        fail_summary(&bad)
    );
    assert!(
        start.elapsed() < Duration::from_secs(60),
        "took {:?}",
        start.elapsed()
    );
}

fn v2_rectangles() {
    let runs = trial_reports(Variant::V2);
    let uncovered: usize = runs
        .iter()
        .flat_map(|r| &r.report.diffs)
        .map(|d| d.missing_count)
        .sum();
    let unrealizable: usize = runs
        .iter()
        .flat_map(|r| &r.report.diffs)
        .map(|d| d.spurious_count)
        .sum();
    let bad: Vec<&TrialRun> = runs.iter().filter(|r| !r.report.is_ok()).collect();
    assert_eq!(
        uncovered,
        0,
        "uncovered oracle pairs\n{}",
        fail_summary(&bad)
    );
    assert_eq!(
        unrealizable,
        0,
        "unrealizable rectangle pairs\n{}",
        fail_summary(&bad)
    );
    assert!(bad.is_empty(), "ledger mismatch\n{}", fail_summary(&bad));
}

fn ia_soundness() {
    let runs = trial_reports(Variant::Ia);
    let bad: Vec<&TrialRun> = runs.iter().filter(|r| !r.report.is_ok()).collect();
    assert!(
        bad.is_empty(),
        "IA misses concrete packets\n{}",
        fail_summary(&bad)
    );

    let net = load("ia-strict.json");
    let z1 = net.zone_id("Z1").unwrap();
    let exact = simulate(&net, z1, 12, None, Exec::Sequential).unwrap();
    let rep = check_against(&net, z1, Variant::Ia, &exact, Default::default()).unwrap();
    assert!(rep.is_ok(), "{rep:?}");
    assert!(
        rep.strict_nodes.contains(&net.zone_id("Z2").unwrap()),
        "no strict superset: {rep:?}"
    );
}

fn termination_and_order() {
    for (i, net) in random_networks(TRIAL_SEED, TRIALS).iter().enumerate() {
        let ceiling = default_ceiling(net);
        let mut sp = PacketSpace::new(net.layout.clone());
        for z in net.zone_ids() {
            for v in Variant::ALL {
                let run = |sp: &mut PacketSpace, worklist| {
                    let opts = AnalysisOptions {
                        worklist,
                        iteration_ceiling: Some(ceiling),
                        check_monotone: true,
                    };
                    analyze_from(sp, net, z, v, opts).unwrap()
                };
                let fifo = run(&mut sp, Worklist::Fifo);
                let lifo = run(&mut sp, Worklist::Lifo);
                assert!(fifo.stats.iterations < ceiling && lifo.stats.iterations < ceiling);
                for n in net.nodes() {
                    assert!(
                        value_equals(&mut sp, fifo.fact(n), lifo.fact(n)),
                        "trial {i} {v}: FIFO and LIFO differ at {}",
                        net.node_name(n)
                    );
                }
            }
        }
    }
}

fn nat_worked_example() {
    let mut sp = PacketSpace::new(HeaderLayout::new([("f1", 2), ("f2", 2)]).unwrap());
    let b: Vec<Formula> = (0..4).map(|v| sp.bit(v)).collect();
    let nb: Vec<Formula> = b.iter().map(|&x| sp.not(x)).collect();

    // ((b1 ∧ ¬b2) ∨ (b1 ∧ b2)) ∧ ¬b3 ∧ b4
    let l = sp.and(b[0], nb[1]);
    let r = sp.and(b[0], b[1]);
    let lr = sp.or(l, r);
    let curr = sp.and_all([lr, nb[2], b[3]]);
    let zero = sp.atom_set(FieldId(0), &ValueSet::single(0)).unwrap();
    let rewritten = nat_packet(&mut sp, curr, FieldId(0), zero);
    let want = sp.and_all([nb[0], nb[1], nb[2], b[3]]);
    assert!(sp.equals(rewritten, want), "nat_packet");

    // Original ¬c3 ∧ ¬c4 with field 2 already rewritten; field 1 is copied
    // from the current header before the rewrite.
    let orig = sp.and(nb[2], nb[3]);
    let nated = FieldMask::single(FieldId(1));
    assert!(!nated.contains(FieldId(0)));
    let updated = update_original(&mut sp, orig, curr, FieldId(0));
    let want = sp.and_all([b[0], nb[2], nb[3]]);
    assert!(sp.equals(updated, want), "update_original");
}

fn main() {
    let criteria: [(&str, fn()); 8] = [
        ("1 example network analysis", example_analysis),
        ("2 example network policy", example_policy),
        ("3 cycles", cycles),
        ("4 relational precision", v1_precision),
        ("5 tracked rectangles", v2_rectangles),
        ("6 attribute soundness and strictness", ia_soundness),
        ("7 termination and worklist order", termination_and_order),
        ("8 NAT worked example", nat_worked_example),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(()) => println!("criterion {name}: PASS ({:.2?})", start.elapsed()),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("criterion {name}: FAIL: {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
