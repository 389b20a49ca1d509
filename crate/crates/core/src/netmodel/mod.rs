//! Networks of zones and firewalls: the data model, guards, and loading from
//! the JSON configuration format.

pub mod config;
pub mod literal;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::engine::{AbstractValue, Variant};
use crate::pktset::{
    FieldId, FieldMask, Formula, Header, HeaderLayout, PacketSpace, PktSetError, ValueSet,
};

pub use config::{load_network, NetworkDoc};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IfaceId(pub usize);

/// Global rule identifier. User rules are positive; the per-link routing
/// check uses [`RuleId::ROUTING`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleId(pub i64);

impl RuleId {
    pub const ROUTING: RuleId = RuleId(-1);

    pub fn is_user(self) -> bool {
        self.0 > 0
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == RuleId::ROUTING {
            write!(f, "routing")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Drop,
    Accept,
}

/// Conjunction of per-field value-set atoms. No atoms means `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Guard {
    atoms: BTreeMap<FieldId, ValueSet>,
}

impl Guard {
    pub fn tru() -> Self {
        Guard::default()
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = (FieldId, ValueSet)>) -> Self {
        Guard {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn atoms(&self) -> impl Iterator<Item = (FieldId, &ValueSet)> {
        self.atoms.iter().map(|(f, v)| (*f, v))
    }

    pub fn atom(&self, f: FieldId) -> Option<&ValueSet> {
        self.atoms.get(&f)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Every atom admits every value of its field.
    pub fn is_true(&self, layout: &HeaderLayout) -> bool {
        self.atoms
            .iter()
            .all(|(f, v)| v.is_full_in(layout.width(*f)))
    }

    pub fn fields(&self) -> FieldMask {
        self.atoms.keys().fold(FieldMask::EMPTY, |m, f| m.with(*f))
    }

    /// Concrete evaluation, independent of any formula store.
    pub fn matches(&self, layout: &HeaderLayout, h: Header) -> bool {
        self.atoms
            .iter()
            .all(|(f, v)| v.contains(layout.field_value(h, *f)))
    }

    pub fn and_atom(mut self, f: FieldId, v: ValueSet) -> Self {
        self.atoms.insert(f, v);
        self
    }
}

/// The guard's conjunction as a formula; the empty guard gives `true`.
pub fn guard_to_formula(sp: &mut PacketSpace, g: &Guard) -> Result<Formula, PktSetError> {
    let mut acc = sp.tru();
    for (f, set) in g.atoms() {
        if f.0 >= sp.layout().n_fields() {
            return Err(PktSetError::UnknownField(format!("#{}", f.0)));
        }
        let a = sp.atom_set(f, set)?;
        acc = sp.and(acc, a);
    }
    Ok(acc)
}

/// Keeps only the atoms on fields whose bit in `nated` is clear.
pub fn reduce_guard(g: &Guard, nated: FieldMask) -> Guard {
    Guard {
        atoms: g
            .atoms
            .iter()
            .filter(|(f, _)| !nated.contains(**f))
            .map(|(f, v)| (*f, v.clone()))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterRule {
    pub id: RuleId,
    pub guard: Guard,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NatRule {
    pub id: RuleId,
    pub guard: Guard,
    pub field: FieldId,
    pub to: ValueSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Firewall {
    pub name: String,
    pub interfaces: Vec<IfaceId>,
    pub dnat: Vec<NatRule>,
    pub filter: Vec<FilterRule>,
    pub snat: Vec<NatRule>,
    /// Interfaces without an entry forward nothing.
    pub routing: BTreeMap<IfaceId, Guard>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Zone {
    pub name: String,
    pub interface: IfaceId,
    /// Public addresses; for the rest-of-internet zone, the complement of all
    /// other zones.
    pub addr: ValueSet,
    pub ports: Option<ValueSet>,
    pub rest: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interface {
    pub name: String,
    pub node: NodeId,
}

/// Which header fields play the address and port roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldRoles {
    pub src_addr: FieldId,
    pub dst_addr: FieldId,
    pub src_port: Option<FieldId>,
    pub dst_port: Option<FieldId>,
}

impl FieldRoles {
    pub fn is_source(&self, f: FieldId) -> bool {
        f == self.src_addr || Some(f) == self.src_port
    }

    pub fn is_destination(&self, f: FieldId) -> bool {
        f == self.dst_addr || Some(f) == self.dst_port
    }
}

#[derive(Clone, Copy, Debug)]
pub enum NodeRef<'a> {
    Zone(&'a Zone),
    Firewall(&'a Firewall),
}

/// One direction of a link: leaving `node` through `from`, arriving at
/// `target` through `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutLink {
    pub from: IfaceId,
    pub to: IfaceId,
    pub target: NodeId,
}

/// A validated network. Nodes are numbered zones first, then firewalls, each
/// in declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    pub name: Option<String>,
    pub layout: HeaderLayout,
    pub roles: FieldRoles,
    pub zones: Vec<Zone>,
    pub firewalls: Vec<Firewall>,
    pub interfaces: Vec<Interface>,
    /// Unordered links, each stored once.
    pub links: Vec<(IfaceId, IfaceId)>,
    peer: Vec<Option<IfaceId>>,
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.zones.len() + self.firewalls.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    pub fn node(&self, n: NodeId) -> NodeRef<'_> {
        if n.0 < self.zones.len() {
            NodeRef::Zone(&self.zones[n.0])
        } else {
            NodeRef::Firewall(&self.firewalls[n.0 - self.zones.len()])
        }
    }

    pub fn is_zone(&self, n: NodeId) -> bool {
        n.0 < self.zones.len()
    }

    pub fn zone(&self, n: NodeId) -> Option<&Zone> {
        self.zones.get(n.0)
    }

    pub fn firewall(&self, n: NodeId) -> Option<&Firewall> {
        n.0.checked_sub(self.zones.len())
            .and_then(|i| self.firewalls.get(i))
    }

    pub fn node_name(&self, n: NodeId) -> &str {
        match self.node(n) {
            NodeRef::Zone(z) => &z.name,
            NodeRef::Firewall(f) => &f.name,
        }
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes().find(|&n| self.node_name(n) == name)
    }

    pub fn zone_id(&self, name: &str) -> Option<NodeId> {
        self.zones.iter().position(|z| z.name == name).map(NodeId)
    }

    pub fn zone_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.zones.len()).map(NodeId)
    }

    pub fn iface_name(&self, i: IfaceId) -> &str {
        &self.interfaces[i.0].name
    }

    pub fn iface_id(&self, name: &str) -> Option<IfaceId> {
        self.interfaces
            .iter()
            .position(|i| i.name == name)
            .map(IfaceId)
    }

    pub fn peer(&self, i: IfaceId) -> Option<IfaceId> {
        self.peer[i.0]
    }

    fn node_interfaces(&self, n: NodeId) -> Vec<IfaceId> {
        match self.node(n) {
            NodeRef::Zone(z) => vec![z.interface],
            NodeRef::Firewall(f) => f.interfaces.clone(),
        }
    }

    /// Links leaving `n`, in interface declaration order.
    pub fn out_links(&self, n: NodeId) -> Vec<OutLink> {
        self.node_interfaces(n)
            .into_iter()
            .filter_map(|from| {
                self.peer(from).map(|to| OutLink {
                    from,
                    to,
                    target: self.interfaces[to.0].node,
                })
            })
            .collect()
    }

    pub fn directed_link_count(&self) -> usize {
        2 * self.links.len()
    }

    pub fn rule_count(&self) -> usize {
        self.firewalls
            .iter()
            .map(|f| f.dnat.len() + f.filter.len() + f.snat.len())
            .sum()
    }

    /// Rules other than the trailing default rule of each filter table.
    pub fn non_default_rule_count(&self) -> usize {
        self.rule_count() - self.firewalls.len()
    }

    /// The no-spoofing constraint on packets leaving a zone: source address in
    /// the zone's addresses, source port in its port range when one is given.
    pub fn origin_guard(&self, zone: NodeId) -> Guard {
        let z = &self.zones[zone.0];
        let mut g = Guard::tru().and_atom(self.roles.src_addr, z.addr.clone());
        if let (Some(ports), Some(f)) = (&z.ports, self.roles.src_port) {
            g = g.and_atom(f, ports.clone());
        }
        g
    }

    /// Headers whose destination lies in the zone.
    pub fn destination_guard(&self, zone: NodeId) -> Guard {
        Guard::tru().and_atom(self.roles.dst_addr, self.zones[zone.0].addr.clone())
    }
}

/// The abstract value leaving an originating zone.
pub fn initial_value(
    sp: &mut PacketSpace,
    net: &Network,
    zone: NodeId,
    variant: Variant,
) -> AbstractValue {
    let origin = crate::xfer::CompiledGuard::compile(sp, &net.origin_guard(zone))
        .expect("validated network guard");
    crate::engine::initial_for(sp, &origin, variant)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_field() -> HeaderLayout {
        HeaderLayout::new([("s", 4), ("d", 4)]).unwrap()
    }

    #[test]
    fn reduce_drops_nated_atoms() {
        let g = Guard::from_atoms([
            (FieldId(0), ValueSet::range(1, 2)),
            (FieldId(1), ValueSet::single(3)),
        ]);
        let r = reduce_guard(&g, FieldMask::single(FieldId(0)));
        assert_eq!(r, Guard::from_atoms([(FieldId(1), ValueSet::single(3))]));
        assert_eq!(reduce_guard(&g, FieldMask::EMPTY), g);
        let only_s = Guard::from_atoms([(FieldId(0), ValueSet::range(1, 2))]);
        let reduced = reduce_guard(&only_s, FieldMask::single(FieldId(0)));
        assert!(reduced.is_empty());
        let mut sp = PacketSpace::new(two_field());
        let f = guard_to_formula(&mut sp, &reduced).unwrap();
        assert!(sp.is_full(f));
    }

    #[test]
    fn reduced_guard_and_removed_atoms_recompose() {
        let mut sp = PacketSpace::new(two_field());
        let g = Guard::from_atoms([
            (FieldId(0), ValueSet::range(1, 2)),
            (FieldId(1), ValueSet::new([(3, 3), (9, 12)], true)),
        ]);
        for mask in 0..4u64 {
            let m = FieldMask(mask);
            let kept = reduce_guard(&g, m);
            let removed = Guard::from_atoms(
                g.atoms()
                    .filter(|(f, _)| m.contains(*f))
                    .map(|(f, v)| (f, v.clone())),
            );
            let a = guard_to_formula(&mut sp, &kept).unwrap();
            let b = guard_to_formula(&mut sp, &removed).unwrap();
            let whole = guard_to_formula(&mut sp, &g).unwrap();
            assert_eq!(sp.and(a, b), whole);
        }
    }

    #[test]
    fn guard_matches_concretely() {
        let l = two_field();
        let g = Guard::from_atoms([(FieldId(1), ValueSet::single(3))]);
        assert!(g.matches(&l, l.header(&[9, 3])));
        assert!(!g.matches(&l, l.header(&[9, 4])));
        assert!(Guard::tru().matches(&l, 0));
    }
}
