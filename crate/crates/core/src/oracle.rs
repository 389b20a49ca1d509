//! Exhaustive concrete simulation at small header widths, and comparison of
//! abstract results against it.
//!
//! The simulator evaluates guards and value sets directly on integer headers;
//! it never touches the formula store.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rustc_hash::FxHashSet;
use thiserror::Error;

use crate::engine::{
    analyze_from, AbstractValue, AnalysisOptions, AnalysisResult, EngineError, Variant,
};
use crate::exec::Exec;
use crate::netmodel::{Action, Firewall, NatRule, Network, NodeId, OutLink, RuleId};
use crate::pktset::{FieldMask, Header, HeaderLayout, PacketSpace};

pub const DEFAULT_MAX_WIDTH: u32 = 12;
pub const HARD_MAX_WIDTH: u32 = 24;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("header has {bits} bits; the exhaustive oracle is limited to {limit}")]
    TooWide { bits: u32, limit: u32 },
    #[error("`{0}` is not a zone")]
    NotAZone(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A concrete packet: current header, original header, and the fields NAT
/// has written on its path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairState {
    pub curr: Header,
    pub orig: Header,
    pub nated: FieldMask,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExactResult {
    pub origin: Option<NodeId>,
    /// At the origin, the packets leaving it; elsewhere the packets
    /// delivered to the node.
    pub per_node: Vec<BTreeSet<PairState>>,
    /// Packets delivered back to the origin.
    pub returned: BTreeSet<PairState>,
    /// Per DROP rule, the (current, original) headers it dropped; current as
    /// seen by the filter table.
    pub dropped: BTreeMap<RuleId, BTreeSet<(Header, Header)>>,
    /// Zone arrivals whose destination lies outside the zone.
    pub misdelivered: BTreeSet<(NodeId, Header)>,
    /// Firewall outputs no interface forwards.
    pub no_route: BTreeSet<(NodeId, Header)>,
    /// Fewest link traversals before the first arrival at each node.
    pub min_hops: Vec<Option<u32>>,
}

impl ExactResult {
    pub fn currs(&self, n: NodeId) -> BTreeSet<Header> {
        self.per_node[n.0].iter().map(|s| s.curr).collect()
    }

    pub fn dropped_origs(&self) -> BTreeSet<Header> {
        self.dropped
            .values()
            .flat_map(|s| s.iter().map(|p| p.1))
            .collect()
    }
}

#[derive(Clone, Debug)]
enum Fate {
    /// The rule and the header as it reached the filter table.
    Dropped(RuleId, Header),
    Forward {
        header: Header,
        wrote: FieldMask,
        /// Indices into the firewall's out links.
        out: Vec<usize>,
    },
}

fn apply_nat(layout: &HeaderLayout, rules: &[NatRule], h: Header) -> Vec<(Header, FieldMask)> {
    match rules.iter().find(|r| r.guard.matches(layout, h)) {
        None => vec![(h, FieldMask::EMPTY)],
        Some(r) => {
            r.to.values(layout.width(r.field))
                .map(|v| (layout.with_field(h, r.field, v), FieldMask::single(r.field)))
                .collect()
        }
    }
}

fn firewall_fates(layout: &HeaderLayout, fw: &Firewall, links: &[OutLink], h: Header) -> Vec<Fate> {
    let mut fates = Vec::new();
    for (h1, m1) in apply_nat(layout, &fw.dnat, h) {
        let rule = fw
            .filter
            .iter()
            .find(|r| r.guard.matches(layout, h1))
            .expect("filter tables end in a default rule");
        if rule.action == Action::Drop {
            fates.push(Fate::Dropped(rule.id, h1));
            continue;
        }
        for (h2, m2) in apply_nat(layout, &fw.snat, h1) {
            let out = links
                .iter()
                .enumerate()
                .filter(|(_, l)| {
                    fw.routing
                        .get(&l.from)
                        .is_some_and(|g| g.matches(layout, h2))
                })
                .map(|(i, _)| i)
                .collect();
            fates.push(Fate::Forward {
                header: h2,
                wrote: m1.union(m2),
                out,
            });
        }
    }
    fates
}

/// Every firewall's concrete step, precomputed for all headers.
struct Steps {
    links: Vec<Vec<OutLink>>,
    fates: Vec<Option<Vec<Vec<Fate>>>>,
}

impl Steps {
    fn build(net: &Network, exec: Exec) -> Self {
        let links: Vec<Vec<OutLink>> = net.nodes().map(|n| net.out_links(n)).collect();
        let space = 1u128 << net.layout.pk_size();
        let fates = net
            .nodes()
            .map(|n| {
                net.firewall(n).map(|fw| {
                    let headers: Vec<Header> = (0..space).collect();
                    exec.map(headers, |h| firewall_fates(&net.layout, fw, &links[n.0], h))
                })
            })
            .collect();
        Steps { links, fates }
    }
}

#[derive(Default)]
struct Trace {
    arrivals: Vec<(NodeId, PairState, u32)>,
    dropped: Vec<(RuleId, Header, Header)>,
    no_route: Vec<(NodeId, Header)>,
}

fn explore(steps: &Steps, origin: NodeId, orig: Header, hop_limit: Option<u32>) -> Trace {
    let mut trace = Trace::default();
    let mut seen: FxHashSet<(usize, Header, FieldMask)> = FxHashSet::default();
    let mut queue: VecDeque<(NodeId, Header, FieldMask, u32)> = VecDeque::new();
    let within = |hops: u32| hop_limit.is_none_or(|l| hops <= l);
    for l in &steps.links[origin.0] {
        if within(1) && seen.insert((l.target.0, orig, FieldMask::EMPTY)) {
            queue.push_back((l.target, orig, FieldMask::EMPTY, 1));
        }
    }
    while let Some((n, curr, nated, hops)) = queue.pop_front() {
        trace
            .arrivals
            .push((n, PairState { curr, orig, nated }, hops));
        let Some(fates) = &steps.fates[n.0] else {
            continue;
        };
        for fate in &fates[curr as usize] {
            match fate {
                Fate::Dropped(r, at) => trace.dropped.push((*r, *at, orig)),
                Fate::Forward { header, wrote, out } => {
                    if out.is_empty() {
                        trace.no_route.push((n, *header));
                    }
                    let mask = nated.union(*wrote);
                    for &i in out {
                        let target = steps.links[n.0][i].target;
                        if within(hops + 1) && seen.insert((target.0, *header, mask)) {
                            queue.push_back((target, *header, mask, hops + 1));
                        }
                    }
                }
            }
        }
    }
    trace
}

fn check_width(net: &Network, max_width: u32) -> Result<(), OracleError> {
    let limit = max_width.min(HARD_MAX_WIDTH);
    let bits = net.layout.pk_size();
    if bits > limit {
        return Err(OracleError::TooWide { bits, limit });
    }
    Ok(())
}

/// Headers that may leave the zone.
pub fn initial_headers(net: &Network, zone: NodeId) -> Vec<Header> {
    let g = net.origin_guard(zone);
    (0..1u128 << net.layout.pk_size())
        .filter(|&h| g.matches(&net.layout, h))
        .collect()
}

/// Simulates every concrete packet leaving `origin`, exploring every NAT
/// value and every forwarding interface, optionally bounded by a number of
/// link traversals.
pub fn simulate(
    net: &Network,
    origin: NodeId,
    max_width: u32,
    hop_limit: Option<u32>,
    exec: Exec,
) -> Result<ExactResult, OracleError> {
    check_width(net, max_width)?;
    if !net.is_zone(origin) {
        return Err(OracleError::NotAZone(net.node_name(origin).to_string()));
    }
    let steps = Steps::build(net, exec);
    let starts = initial_headers(net, origin);
    let traces = exec.map(starts.clone(), |o| explore(&steps, origin, o, hop_limit));

    let mut r = ExactResult {
        origin: Some(origin),
        per_node: vec![BTreeSet::new(); net.node_count()],
        min_hops: vec![None; net.node_count()],
        ..Default::default()
    };
    r.per_node[origin.0] = starts
        .iter()
        .map(|&o| PairState {
            curr: o,
            orig: o,
            nated: FieldMask::EMPTY,
        })
        .collect();
    for t in traces {
        for (n, s, hops) in t.arrivals {
            let slot = &mut r.min_hops[n.0];
            *slot = Some(slot.map_or(hops, |h| h.min(hops)));
            if n == origin {
                r.returned.insert(s);
            } else {
                r.per_node[n.0].insert(s);
            }
            if net.is_zone(n) && !net.destination_guard(n).matches(&net.layout, s.curr) {
                r.misdelivered.insert((n, s.curr));
            }
        }
        for (rule, c, o) in t.dropped {
            if rule.is_user() {
                r.dropped.entry(rule).or_default().insert((c, o));
            }
        }
        r.no_route.extend(t.no_route);
    }
    Ok(r)
}

/// The concrete packets an abstract value denotes. Relational and attribute
/// values denote current headers only; tracked values denote pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Concrete {
    Headers(BTreeSet<Header>),
    Pairs(BTreeSet<PairState>),
}

pub fn concretize(
    sp: &mut PacketSpace,
    v: &AbstractValue,
    max_width: u32,
) -> Result<Concrete, OracleError> {
    let bits = sp.layout().pk_size();
    let limit = max_width.min(HARD_MAX_WIDTH);
    if bits > limit {
        return Err(OracleError::TooWide { bits, limit });
    }
    Ok(match v {
        AbstractValue::Tracked(_) => {
            let n = sp.layout().n_fields();
            let mut pairs = BTreeSet::new();
            for p in v.tracked_packets() {
                let equal = p.unrewritten(n);
                for o in sp.enumerate(p.orig, usize::MAX) {
                    let cube = sp.header_cube(o, equal);
                    let currs = sp.and(p.curr, cube);
                    for c in sp.enumerate(currs, usize::MAX) {
                        pairs.insert(PairState {
                            curr: c,
                            orig: o,
                            nated: p.nated,
                        });
                    }
                }
            }
            Concrete::Pairs(pairs)
        }
        _ => {
            let f = v.curr(sp);
            Concrete::Headers(sp.enumerate(f, usize::MAX).into_iter().collect())
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDiff {
    pub node: NodeId,
    /// Concrete packets the abstract value misses.
    pub missing: Vec<String>,
    pub missing_count: usize,
    /// Abstract packets no concrete run produces.
    pub spurious: Vec<String>,
    pub spurious_count: usize,
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub variant: Variant,
    pub nodes_checked: usize,
    /// Nodes where the abstraction disagrees beyond what the variant allows.
    pub diffs: Vec<NodeDiff>,
    /// Attribute variant only: nodes where the abstract set is strictly larger.
    pub strict_nodes: Vec<NodeId>,
    /// Rules whose recorded drops disagree with the simulated drops.
    pub ledger_diffs: Vec<RuleId>,
}

impl CompareReport {
    pub fn is_ok(&self) -> bool {
        self.diffs.is_empty() && self.ledger_diffs.is_empty()
    }
}

const SAMPLES: usize = 5;

fn diff_sets<T: Ord + Copy>(
    abstract_set: &BTreeSet<T>,
    exact: &BTreeSet<T>,
    show: impl Fn(&T) -> String,
) -> (Vec<String>, usize, Vec<String>, usize) {
    let missing: Vec<&T> = exact.difference(abstract_set).collect();
    let spurious: Vec<&T> = abstract_set.difference(exact).collect();
    (
        missing.iter().take(SAMPLES).map(|t| show(t)).collect(),
        missing.len(),
        spurious.iter().take(SAMPLES).map(|t| show(t)).collect(),
        spurious.len(),
    )
}

/// Compares an analysis result with the simulation from the same origin.
/// Relational values must equal the simulated current headers, tracked
/// values the simulated (curr, orig, mask) triples, and attribute values must
/// contain the simulated current headers.
pub fn compare(
    sp: &mut PacketSpace,
    net: &Network,
    result: &AnalysisResult,
    exact: &ExactResult,
) -> Result<CompareReport, OracleError> {
    let layout = net.layout.clone();
    let show_h = |h: &Header| layout.describe(*h);
    let show_p = |p: &PairState| {
        format!(
            "curr[{}] orig[{}] nated={}",
            layout.describe(p.curr),
            layout.describe(p.orig),
            p.nated.bits(layout.n_fields())
        )
    };
    let origin = result.origin;
    let mut report = CompareReport {
        variant: result.variant,
        nodes_checked: 0,
        diffs: Vec::new(),
        strict_nodes: Vec::new(),
        ledger_diffs: Vec::new(),
    };
    // Every node, then deliveries back to the origin.
    let mut checks: Vec<(NodeId, &AbstractValue, &BTreeSet<PairState>)> = net
        .nodes()
        .map(|n| (n, result.fact(n), &exact.per_node[n.0]))
        .collect();
    checks.push((origin, &result.delivered[origin.0], &exact.returned));
    for (i, (n, value, states)) in checks.into_iter().enumerate() {
        if i < net.node_count() {
            report.nodes_checked += 1;
        }
        let concrete = concretize(sp, value, u32::MAX)?;
        let (missing, missing_count, spurious, spurious_count) = match concrete {
            Concrete::Pairs(pairs) => diff_sets(&pairs, states, show_p),
            Concrete::Headers(hs) => {
                let exact_h: BTreeSet<Header> = states.iter().map(|s| s.curr).collect();
                diff_sets(&hs, &exact_h, show_h)
            }
        };
        let tolerated = result.variant == Variant::Ia && missing_count == 0;
        if result.variant == Variant::Ia && spurious_count > 0 && missing_count == 0 {
            report.strict_nodes.push(n);
        }
        if (missing_count > 0 || spurious_count > 0) && !tolerated {
            report.diffs.push(NodeDiff {
                node: n,
                missing,
                missing_count,
                spurious,
                spurious_count,
            });
        }
    }
    let rules: BTreeSet<RuleId> = result
        .ledger
        .iter()
        .map(|(r, _)| r)
        .chain(exact.dropped.keys().copied())
        .collect();
    for rule in rules {
        let recorded = match result.ledger.get(rule) {
            Some(f) => sp.enumerate(f, usize::MAX).into_iter().collect(),
            None => BTreeSet::new(),
        };
        let simulated: BTreeSet<Header> = exact
            .dropped
            .get(&rule)
            .map(|s| {
                s.iter()
                    .map(|&(c, o)| if result.variant == Variant::V2 { o } else { c })
                    .collect()
            })
            .unwrap_or_default();
        let ok = match result.variant {
            Variant::Ia => recorded.is_superset(&simulated),
            _ => recorded == simulated,
        };
        if !ok {
            report.ledger_diffs.push(rule);
        }
    }
    Ok(report)
}

/// Analyzes and simulates from `origin` in fresh stores, then compares.
pub fn check(
    net: &Network,
    origin: NodeId,
    variant: Variant,
    max_width: u32,
    exec: Exec,
) -> Result<CompareReport, OracleError> {
    let exact = simulate(net, origin, max_width, None, exec)?;
    check_against(net, origin, variant, &exact, AnalysisOptions::default())
}

/// As [`check`], reusing a simulation.
pub fn check_against(
    net: &Network,
    origin: NodeId,
    variant: Variant,
    exact: &ExactResult,
    opts: AnalysisOptions,
) -> Result<CompareReport, OracleError> {
    let mut sp = PacketSpace::new(net.layout.clone());
    let result = analyze_from(&mut sp, net, origin, variant, opts)?;
    compare(&mut sp, net, &result, exact)
}
