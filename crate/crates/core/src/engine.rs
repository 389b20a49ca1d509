//! Worklist fixpoint propagation of abstract values over a network.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::netmodel::{initial_value, Network, NodeId};
use crate::pktset::{FieldMask, Formula, PacketSpace, PktSetError, Rectangle, Relation};
use crate::xfer::{
    firewall_tables_tf, route_tf, Attribute, CompiledFirewall, CompiledGuard, Domain, DropLedger,
    Relational, Tracked, TrackedPacket,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// One relational formula of current forms.
    V1,
    /// Current and original forms keyed by (orig, rewritten-field mask).
    V2,
    /// Independent per-field sets.
    Ia,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::V1, Variant::V2, Variant::Ia];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::Ia => "ia",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            "ia" => Ok(Variant::Ia),
            _ => Err(format!("unknown variant `{s}`; expected v1, v2 or ia")),
        }
    }
}

/// Join key of a tracked packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketKey {
    pub orig: Formula,
    pub nated: FieldMask,
}

/// The value at a node. Bottom is `Relational(false)`, an empty tracked map,
/// or `Attribute(None)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AbstractValue {
    Relational(Formula),
    Tracked(BTreeMap<PacketKey, Formula>),
    Attribute(Option<Vec<Formula>>),
}

impl AbstractValue {
    pub fn bottom(sp: &PacketSpace, variant: Variant) -> Self {
        match variant {
            Variant::V1 => AbstractValue::Relational(sp.fals()),
            Variant::V2 => AbstractValue::Tracked(BTreeMap::new()),
            Variant::Ia => AbstractValue::Attribute(None),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            AbstractValue::Relational(_) => Variant::V1,
            AbstractValue::Tracked(_) => Variant::V2,
            AbstractValue::Attribute(_) => Variant::Ia,
        }
    }

    pub fn is_bottom(&self, sp: &PacketSpace) -> bool {
        match self {
            AbstractValue::Relational(f) => sp.is_empty(*f),
            AbstractValue::Tracked(m) => m.is_empty(),
            AbstractValue::Attribute(v) => v.is_none(),
        }
    }

    pub fn tracked_packets(&self) -> Vec<TrackedPacket> {
        match self {
            AbstractValue::Tracked(_) => Tracked::packets(self),
            _ => Vec::new(),
        }
    }

    /// Union of the current forms (for attribute values, the product box).
    pub fn curr(&self, sp: &mut PacketSpace) -> Formula {
        match self {
            AbstractValue::Relational(f) => *f,
            AbstractValue::Tracked(m) => sp.or_all(m.values().copied()),
            AbstractValue::Attribute(None) => sp.fals(),
            AbstractValue::Attribute(Some(v)) => sp.and_all(v.iter().copied()),
        }
    }

    /// Union of the original forms; `None` outside variant 2.
    pub fn orig(&self, sp: &mut PacketSpace) -> Option<Formula> {
        match self {
            AbstractValue::Tracked(m) => Some(sp.or_all(m.keys().map(|k| k.orig))),
            _ => None,
        }
    }
}

/// The value leaving an originating zone whose spoofing constraint is `origin`.
pub fn initial_for(
    sp: &mut PacketSpace,
    origin: &CompiledGuard,
    variant: Variant,
) -> AbstractValue {
    let f = origin.formula;
    if sp.is_empty(f) {
        return AbstractValue::bottom(sp, variant);
    }
    match variant {
        Variant::V1 => AbstractValue::Relational(f),
        Variant::V2 => Tracked::collect(
            sp,
            vec![TrackedPacket {
                curr: f,
                orig: f,
                nated: FieldMask::EMPTY,
            }],
        ),
        Variant::Ia => {
            let mut v = vec![sp.tru(); sp.layout().n_fields()];
            for (field, a) in origin.atoms() {
                v[field.0] = sp.and(v[field.0], *a);
            }
            AbstractValue::Attribute(Some(v))
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown zone `{0}`")]
    UnknownOrigin(String),
    #[error("variant mismatch: {0} vs {1}")]
    VariantMismatch(Variant, Variant),
    #[error("iteration ceiling of {0} exceeded before reaching a fixpoint")]
    CeilingExceeded(u64),
    #[error(transparent)]
    PacketSet(#[from] PktSetError),
}

/// Least upper bound. Tracked packets sharing (orig, mask) merge by OR-ing
/// their current forms.
pub fn join(
    sp: &mut PacketSpace,
    a: &AbstractValue,
    b: &AbstractValue,
) -> Result<AbstractValue, EngineError> {
    if a.variant() != b.variant() {
        return Err(EngineError::VariantMismatch(a.variant(), b.variant()));
    }
    Ok(match a.variant() {
        Variant::V1 => join_as::<Relational>(sp, a, b),
        Variant::V2 => join_as::<Tracked>(sp, a, b),
        Variant::Ia => join_as::<Attribute>(sp, a, b),
    })
}

fn join_as<D: Domain>(sp: &mut PacketSpace, a: &AbstractValue, b: &AbstractValue) -> AbstractValue {
    let mut ps = D::packets(a);
    ps.extend(D::packets(b));
    D::collect(sp, ps)
}

/// The (curr, orig) pairs of a tracked value, one relation per mask.
pub fn tracked_relations(sp: &mut PacketSpace, v: &AbstractValue) -> BTreeMap<FieldMask, Relation> {
    let n = sp.layout().n_fields();
    let mut groups: BTreeMap<FieldMask, Vec<Rectangle>> = BTreeMap::new();
    for p in v.tracked_packets() {
        groups.entry(p.nated).or_default().push(Rectangle {
            curr: p.curr,
            orig: p.orig,
            equal: p.unrewritten(n),
        });
    }
    groups
        .into_iter()
        .map(|(m, rects)| (m, sp.relation(&rects)))
        .collect()
}

/// Semantic equality of two values of the same variant.
pub fn value_equals(sp: &mut PacketSpace, a: &AbstractValue, b: &AbstractValue) -> bool {
    match (a, b) {
        (AbstractValue::Relational(x), AbstractValue::Relational(y)) => x == y,
        (AbstractValue::Attribute(x), AbstractValue::Attribute(y)) => x == y,
        (AbstractValue::Tracked(_), AbstractValue::Tracked(_)) => {
            tracked_relations(sp, a) == tracked_relations(sp, b)
        }
        _ => false,
    }
}

/// Whether every concrete packet of `a` is also in `b`.
pub fn value_included(sp: &mut PacketSpace, a: &AbstractValue, b: &AbstractValue) -> bool {
    match (a, b) {
        (AbstractValue::Relational(x), AbstractValue::Relational(y)) => sp.implies(*x, *y),
        (AbstractValue::Attribute(None), AbstractValue::Attribute(_)) => true,
        (AbstractValue::Attribute(Some(_)), AbstractValue::Attribute(None)) => false,
        (AbstractValue::Attribute(Some(x)), AbstractValue::Attribute(Some(y))) => {
            x.iter().zip(y).all(|(p, q)| sp.implies(*p, *q))
        }
        (AbstractValue::Tracked(_), AbstractValue::Tracked(_)) => {
            let ra = tracked_relations(sp, a);
            let rb = tracked_relations(sp, b);
            ra.iter().all(|(m, r)| match rb.get(m) {
                Some(s) => sp.relation_union(*r, *s) == *s,
                None => r.is_empty(),
            })
        }
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Worklist {
    #[default]
    Fifo,
    Lifo,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AnalysisOptions {
    pub worklist: Worklist,
    /// Maximum number of node visits; `None` uses
    /// `10 × links × 2^min(header bits, 20)`.
    pub iteration_ceiling: Option<u64>,
    /// Asserts after every update that the node's value only grew.
    pub check_monotone: bool,
}

pub fn default_ceiling(net: &Network) -> u64 {
    let bits = net.layout.pk_size().min(20);
    10 * (net.directed_link_count().max(1) as u64) * (1u64 << bits)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    /// Node visits (worklist pops).
    pub iterations: u64,
    pub joins: u64,
    pub wall: Duration,
}

/// Per-node diagnostics, as current forms.
#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    /// Packets at a firewall accepted by its tables but forwarded by no
    /// interface.
    pub no_route: BTreeMap<NodeId, Formula>,
    /// Packets arriving at a zone whose destination is outside the zone.
    pub misdelivered: BTreeMap<NodeId, Formula>,
}

#[derive(Clone, Debug)]
pub struct AnalysisResult {
    pub origin: NodeId,
    pub variant: Variant,
    /// Index by node. The origin holds the value leaving it; every other node
    /// holds what was delivered to it.
    pub facts: Vec<AbstractValue>,
    /// What links delivered to each node; equals `facts` except at the
    /// origin.
    pub delivered: Vec<AbstractValue>,
    pub ledger: DropLedger,
    pub stats: Stats,
    pub diagnostics: Diagnostics,
}

impl AnalysisResult {
    pub fn fact(&self, n: NodeId) -> &AbstractValue {
        &self.facts[n.0]
    }
}

/// Runs the analysis from the named zone with default options.
pub fn analyze(
    sp: &mut PacketSpace,
    net: &Network,
    origin: &str,
    variant: Variant,
) -> Result<AnalysisResult, EngineError> {
    let z = net
        .zone_id(origin)
        .ok_or_else(|| EngineError::UnknownOrigin(origin.to_string()))?;
    analyze_from(sp, net, z, variant, AnalysisOptions::default())
}

pub fn analyze_from(
    sp: &mut PacketSpace,
    net: &Network,
    origin: NodeId,
    variant: Variant,
    opts: AnalysisOptions,
) -> Result<AnalysisResult, EngineError> {
    if !net.is_zone(origin) {
        return Err(EngineError::UnknownOrigin(
            net.node_name(origin).to_string(),
        ));
    }
    match variant {
        Variant::V1 => run::<Relational>(sp, net, origin, variant, opts),
        Variant::V2 => run::<Tracked>(sp, net, origin, variant, opts),
        Variant::Ia => run::<Attribute>(sp, net, origin, variant, opts),
    }
}

struct Queue {
    items: VecDeque<NodeId>,
    marked: FixedBitSet,
    discipline: Worklist,
}

impl Queue {
    fn new(n: usize, discipline: Worklist) -> Self {
        Queue {
            items: VecDeque::new(),
            marked: FixedBitSet::with_capacity(n),
            discipline,
        }
    }

    fn mark(&mut self, n: NodeId) {
        if !self.marked.put(n.0) {
            self.items.push_back(n);
        }
    }

    fn pop(&mut self) -> Option<NodeId> {
        let n = match self.discipline {
            Worklist::Fifo => self.items.pop_front(),
            Worklist::Lifo => self.items.pop_back(),
        }?;
        self.marked.set(n.0, false);
        Some(n)
    }
}

fn run<D: Domain>(
    sp: &mut PacketSpace,
    net: &Network,
    origin: NodeId,
    variant: Variant,
    opts: AnalysisOptions,
) -> Result<AnalysisResult, EngineError> {
    let start = Instant::now();
    let compiled: Vec<Option<CompiledFirewall>> = net
        .nodes()
        .map(|n| {
            net.firewall(n)
                .map(|fw| CompiledFirewall::compile(sp, fw))
                .transpose()
        })
        .collect::<Result<_, _>>()?;
    let ceiling = opts
        .iteration_ceiling
        .unwrap_or_else(|| default_ceiling(net));
    let bottom = AbstractValue::bottom(sp, variant);
    let mut delivered = vec![bottom; net.node_count()];
    let leaving = initial_value(sp, net, origin, variant);
    let mut ledger = DropLedger::default();
    let mut stats = Stats::default();
    let mut no_route: BTreeMap<NodeId, Formula> = BTreeMap::new();

    let mut queue = Queue::new(net.node_count(), opts.worklist);
    queue.mark(origin);
    while let Some(m) = queue.pop() {
        stats.iterations += 1;
        if stats.iterations > ceiling {
            return Err(EngineError::CeilingExceeded(ceiling));
        }
        let input = if m == origin {
            &leaving
        } else {
            &delivered[m.0]
        };
        let packets = D::packets(input);
        let processed = match &compiled[m.0] {
            Some(fw) => firewall_tables_tf::<D>(sp, fw, packets, &mut ledger),
            None => packets,
        };
        let mut routed_any = sp.fals();
        for link in net.out_links(m) {
            let out = match &compiled[m.0] {
                Some(fw) => route_tf::<D>(sp, fw, link.from, processed.clone()),
                None => processed.clone(),
            };
            let contribution = D::collect(sp, out);
            if contribution.is_bottom(sp) {
                continue;
            }
            if compiled[m.0].is_some() {
                let c = contribution.curr(sp);
                routed_any = sp.or(routed_any, c);
            }
            let n = link.target;
            stats.joins += 1;
            let old = &delivered[n.0];
            let new = join_as::<D>(sp, old, &contribution);
            if new != *old {
                if opts.check_monotone {
                    assert!(
                        value_included(sp, old, &new),
                        "value at {} shrank",
                        net.node_name(n)
                    );
                }
                delivered[n.0] = new;
                if !net.is_zone(n) {
                    queue.mark(n);
                }
            }
        }
        if compiled[m.0].is_some() {
            let all = D::collect(sp, processed);
            let all = all.curr(sp);
            let lost = sp.diff(all, routed_any);
            if !sp.is_empty(lost) {
                let slot = no_route.entry(m).or_insert_with(|| sp.fals());
                *slot = sp.or(*slot, lost);
            }
        }
    }

    let mut misdelivered = BTreeMap::new();
    for z in net.zone_ids() {
        let arrived = delivered[z.0].curr(sp);
        let dest = CompiledGuard::compile(sp, &net.destination_guard(z))?;
        let bad = sp.diff(arrived, dest.formula);
        if !sp.is_empty(bad) {
            misdelivered.insert(z, bad);
        }
    }

    let mut facts = delivered.clone();
    facts[origin.0] = leaving;
    stats.wall = start.elapsed();
    Ok(AnalysisResult {
        origin,
        variant,
        facts,
        delivered,
        ledger,
        stats,
        diagnostics: Diagnostics {
            no_route,
            misdelivered,
        },
    })
}
