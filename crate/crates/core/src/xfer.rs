//! Transfer functions for rules, tables and links, over any of the three
//! packet abstractions.
//!
//! Tracked packets (`TrackedPacket`) denote the pairs `(c, o)` with
//! `c ∈ curr`, `o ∈ orig`, and `c` equal to `o` on every field not yet
//! rewritten by NAT. Every tracked packet is kept normalized: on the
//! unrewritten fields, `curr` and `orig` have the same projection.

use std::collections::BTreeMap;

use crate::engine::{AbstractValue, PacketKey};
use crate::netmodel::{Action, Firewall, Guard, IfaceId, RuleId};
use crate::pktset::{FieldId, FieldMask, Formula, PacketSpace, PktSetError};

/// A guard compiled into one formula, keeping its per-field atoms.
#[derive(Clone, Debug)]
pub struct CompiledGuard {
    pub formula: Formula,
    atoms: Vec<(FieldId, Formula)>,
}

impl CompiledGuard {
    /// Atoms that admit every value are dropped.
    pub fn compile(sp: &mut PacketSpace, g: &Guard) -> Result<Self, PktSetError> {
        let mut atoms = Vec::with_capacity(g.len());
        let mut formula = sp.tru();
        for (f, set) in g.atoms() {
            if f.0 >= sp.layout().n_fields() {
                return Err(PktSetError::UnknownField(format!("#{}", f.0)));
            }
            let a = sp.atom_set(f, set)?;
            if sp.is_full(a) {
                continue;
            }
            formula = sp.and(formula, a);
            atoms.push((f, a));
        }
        Ok(CompiledGuard { formula, atoms })
    }

    pub fn tru(sp: &PacketSpace) -> Self {
        CompiledGuard {
            formula: sp.tru(),
            atoms: Vec::new(),
        }
    }

    pub fn atoms(&self) -> &[(FieldId, Formula)] {
        &self.atoms
    }

    pub fn fields(&self) -> FieldMask {
        self.atoms
            .iter()
            .fold(FieldMask::EMPTY, |m, (f, _)| m.with(*f))
    }

    /// Conjunction of the atoms on fields outside `nated`.
    pub fn reduced(&self, sp: &mut PacketSpace, nated: FieldMask) -> Formula {
        let kept: Vec<Formula> = self
            .atoms
            .iter()
            .filter(|(f, _)| !nated.contains(*f))
            .map(|(_, a)| *a)
            .collect();
        sp.and_all(kept)
    }
}

#[derive(Clone, Debug)]
pub struct CompiledFilterRule {
    pub id: RuleId,
    pub guard: CompiledGuard,
    pub action: Action,
}

#[derive(Clone, Debug)]
pub struct CompiledNatRule {
    pub id: RuleId,
    pub guard: CompiledGuard,
    pub field: FieldId,
    /// The written values, as a formula over `field` alone.
    pub to: Formula,
}

#[derive(Clone, Debug)]
pub struct CompiledFirewall {
    pub dnat: Vec<CompiledNatRule>,
    pub filter: Vec<CompiledFilterRule>,
    pub snat: Vec<CompiledNatRule>,
    pub routing: BTreeMap<IfaceId, CompiledGuard>,
}

impl CompiledFirewall {
    pub fn compile(sp: &mut PacketSpace, fw: &Firewall) -> Result<Self, PktSetError> {
        let nat = |sp: &mut PacketSpace, rules: &[crate::netmodel::NatRule]| {
            rules
                .iter()
                .map(|r| {
                    Ok(CompiledNatRule {
                        id: r.id,
                        guard: CompiledGuard::compile(sp, &r.guard)?,
                        field: r.field,
                        to: sp.atom_set(r.field, &r.to)?,
                    })
                })
                .collect::<Result<Vec<_>, PktSetError>>()
        };
        let dnat = nat(sp, &fw.dnat)?;
        let snat = nat(sp, &fw.snat)?;
        let filter = fw
            .filter
            .iter()
            .map(|r| {
                Ok(CompiledFilterRule {
                    id: r.id,
                    guard: CompiledGuard::compile(sp, &r.guard)?,
                    action: r.action,
                })
            })
            .collect::<Result<Vec<_>, PktSetError>>()?;
        let routing = fw
            .routing
            .iter()
            .map(|(i, g)| Ok((*i, CompiledGuard::compile(sp, g)?)))
            .collect::<Result<_, PktSetError>>()?;
        Ok(CompiledFirewall {
            dnat,
            filter,
            snat,
            routing,
        })
    }
}

/// Per DROP rule, the union of the packets it dropped: original forms for
/// tracked packets, current forms otherwise.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DropLedger {
    dropped: BTreeMap<RuleId, Formula>,
}

impl DropLedger {
    pub fn record(&mut self, sp: &mut PacketSpace, rule: RuleId, f: Formula) {
        let slot = self.dropped.entry(rule).or_insert_with(|| sp.fals());
        *slot = sp.or(*slot, f);
    }

    pub fn get(&self, rule: RuleId) -> Option<Formula> {
        self.dropped.get(&rule).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RuleId, Formula)> + '_ {
        self.dropped.iter().map(|(r, f)| (*r, *f))
    }

    pub fn is_empty(&self) -> bool {
        self.dropped.is_empty()
    }

    pub fn union(&self, sp: &mut PacketSpace) -> Formula {
        sp.or_all(self.dropped.values().copied())
    }
}

/// Variant 2 packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrackedPacket {
    pub curr: Formula,
    pub orig: Formula,
    pub nated: FieldMask,
}

impl TrackedPacket {
    /// Restores the invariant that `curr` and `orig` agree on the projection
    /// onto unrewritten fields. `None` when nothing remains.
    pub fn normalized(
        sp: &mut PacketSpace,
        curr: Formula,
        orig: Formula,
        nated: FieldMask,
    ) -> Option<Self> {
        let orig_u = sp.exists_fields(orig, nated);
        let curr = sp.and(curr, orig_u);
        if sp.is_empty(curr) {
            return None;
        }
        let curr_u = sp.exists_fields(curr, nated);
        let orig = sp.and(orig, curr_u);
        Some(TrackedPacket { curr, orig, nated })
    }

    pub fn unrewritten(&self, n_fields: usize) -> FieldMask {
        self.nated.complement(n_fields)
    }
}

fn non_empty(sp: &PacketSpace, f: Formula) -> Option<Formula> {
    (!sp.is_empty(f)).then_some(f)
}

/// The operations a packet abstraction supplies to the generic transfer
/// functions.
pub trait Domain {
    type Packet: Clone + std::fmt::Debug;

    /// The parts of `p` that match and that do not match `g`; empty parts are
    /// `None`.
    fn split(
        sp: &mut PacketSpace,
        p: &Self::Packet,
        g: &CompiledGuard,
    ) -> (Option<Self::Packet>, Option<Self::Packet>);

    /// Applies a NAT rule to a packet that matched it.
    fn nat(sp: &mut PacketSpace, p: Self::Packet, rule: &CompiledNatRule) -> Vec<Self::Packet>;

    /// The form recorded in the drop ledger.
    fn dropped_form(sp: &mut PacketSpace, p: &Self::Packet) -> Formula;

    fn packets(v: &AbstractValue) -> Vec<Self::Packet>;

    /// Joins the packets into one abstract value.
    fn collect(sp: &mut PacketSpace, ps: Vec<Self::Packet>) -> AbstractValue;
}

/// Variant 1: one formula of current forms.
pub struct Relational;

impl Domain for Relational {
    type Packet = Formula;

    fn split(
        sp: &mut PacketSpace,
        p: &Formula,
        g: &CompiledGuard,
    ) -> (Option<Formula>, Option<Formula>) {
        let m = sp.and(*p, g.formula);
        let u = sp.diff(*p, g.formula);
        (non_empty(sp, m), non_empty(sp, u))
    }

    fn nat(sp: &mut PacketSpace, p: Formula, rule: &CompiledNatRule) -> Vec<Formula> {
        vec![sp.overwrite_with(p, rule.field, rule.to)]
    }

    fn dropped_form(_: &mut PacketSpace, p: &Formula) -> Formula {
        *p
    }

    fn packets(v: &AbstractValue) -> Vec<Formula> {
        match v {
            AbstractValue::Relational(f) => vec![*f],
            _ => panic!("expected a relational value"),
        }
    }

    fn collect(sp: &mut PacketSpace, ps: Vec<Formula>) -> AbstractValue {
        AbstractValue::Relational(sp.or_all(ps))
    }
}

/// Variant 2: current and original forms with the rewritten-field mask.
pub struct Tracked;

impl Domain for Tracked {
    type Packet = TrackedPacket;

    fn split(
        sp: &mut PacketSpace,
        p: &TrackedPacket,
        g: &CompiledGuard,
    ) -> (Option<TrackedPacket>, Option<TrackedPacket>) {
        let m_curr = sp.and(p.curr, g.formula);
        let reduced = g.reduced(sp, p.nated);
        let m_orig = sp.and(p.orig, reduced);
        let matched = TrackedPacket::normalized(sp, m_curr, m_orig, p.nated);

        let u_curr = sp.diff(p.curr, g.formula);
        // The negated guard refines orig only when no atom reads a rewritten
        // field; otherwise normalization recovers what can be recovered.
        let u_orig = if (g.fields().0 & p.nated.0) == 0 {
            sp.diff(p.orig, g.formula)
        } else {
            p.orig
        };
        let unmatched = TrackedPacket::normalized(sp, u_curr, u_orig, p.nated);
        (matched, unmatched)
    }

    fn nat(sp: &mut PacketSpace, p: TrackedPacket, rule: &CompiledNatRule) -> Vec<TrackedPacket> {
        let field = rule.field;
        if p.nated.contains(field) {
            let curr = sp.overwrite_with(p.curr, field, rule.to);
            return vec![TrackedPacket { curr, ..p }];
        }
        let nated = p.nated.with(field);
        let classes = sp.field_classes(&[p.curr, p.orig], field);
        let mut out = Vec::with_capacity(classes.len());
        for class in classes {
            let curr = sp.and(p.curr, class);
            let orig = sp.and(p.orig, class);
            let orig = update_original(sp, orig, curr, field);
            let curr = nat_packet(sp, curr, field, rule.to);
            out.extend(TrackedPacket::normalized(sp, curr, orig, nated));
        }
        out
    }

    fn dropped_form(_: &mut PacketSpace, p: &TrackedPacket) -> Formula {
        p.orig
    }

    fn packets(v: &AbstractValue) -> Vec<TrackedPacket> {
        match v {
            AbstractValue::Tracked(m) => m
                .iter()
                .map(|(k, c)| TrackedPacket {
                    curr: *c,
                    orig: k.orig,
                    nated: k.nated,
                })
                .collect(),
            _ => panic!("expected a tracked value"),
        }
    }

    fn collect(sp: &mut PacketSpace, ps: Vec<TrackedPacket>) -> AbstractValue {
        let mut m: BTreeMap<PacketKey, Formula> = BTreeMap::new();
        for p in ps {
            let key = PacketKey {
                orig: p.orig,
                nated: p.nated,
            };
            let slot = m.entry(key).or_insert_with(|| sp.fals());
            *slot = sp.or(*slot, p.curr);
        }
        AbstractValue::Tracked(m)
    }
}

/// Independent attributes: one formula per field, each over that field only.
pub struct Attribute;

impl Domain for Attribute {
    type Packet = Vec<Formula>;

    fn split(
        sp: &mut PacketSpace,
        p: &Vec<Formula>,
        g: &CompiledGuard,
    ) -> (Option<Vec<Formula>>, Option<Vec<Formula>>) {
        let mut m = p.clone();
        let mut matched = true;
        for (f, a) in g.atoms() {
            m[f.0] = sp.and(m[f.0], *a);
            if sp.is_empty(m[f.0]) {
                matched = false;
                break;
            }
        }
        let unmatched = match g.atoms() {
            [] => None,
            [(f, a)] => {
                let mut u = p.clone();
                u[f.0] = sp.diff(u[f.0], *a);
                (!sp.is_empty(u[f.0])).then_some(u)
            }
            _ => Some(p.clone()),
        };
        (matched.then_some(m), unmatched)
    }

    fn nat(_: &mut PacketSpace, mut p: Vec<Formula>, rule: &CompiledNatRule) -> Vec<Vec<Formula>> {
        p[rule.field.0] = rule.to;
        vec![p]
    }

    fn dropped_form(sp: &mut PacketSpace, p: &Vec<Formula>) -> Formula {
        sp.and_all(p.iter().copied())
    }

    fn packets(v: &AbstractValue) -> Vec<Vec<Formula>> {
        match v {
            AbstractValue::Attribute(p) => p.iter().cloned().collect(),
            _ => panic!("expected an attribute value"),
        }
    }

    fn collect(sp: &mut PacketSpace, ps: Vec<Vec<Formula>>) -> AbstractValue {
        let mut it = ps.into_iter();
        let Some(mut acc) = it.next() else {
            return AbstractValue::Attribute(None);
        };
        for p in it {
            for (a, b) in acc.iter_mut().zip(p) {
                *a = sp.or(*a, b);
            }
        }
        AbstractValue::Attribute(Some(acc))
    }
}

/// `curr` with `field` overwritten by the values of `to`.
pub fn nat_packet(sp: &mut PacketSpace, curr: Formula, field: FieldId, to: Formula) -> Formula {
    sp.overwrite_with(curr, field, to)
}

/// `orig` with `field` replaced by the values `field` takes in `curr`.
pub fn update_original(
    sp: &mut PacketSpace,
    orig: Formula,
    curr: Formula,
    field: FieldId,
) -> Formula {
    sp.copy_field(orig, curr, field)
}

/// One filter rule: the accepted part (DROP rules accept nothing and record
/// the matched part in the ledger instead) and the unmatched part.
pub fn filter_rule_tf<D: Domain>(
    sp: &mut PacketSpace,
    rule: &CompiledFilterRule,
    p: &D::Packet,
    ledger: &mut DropLedger,
) -> (Option<D::Packet>, Option<D::Packet>) {
    let (m, u) = D::split(sp, p, &rule.guard);
    let accepted = match (m, rule.action) {
        (Some(m), Action::Accept) => Some(m),
        (Some(m), Action::Drop) => {
            if rule.id.is_user() {
                let f = D::dropped_form(sp, &m);
                ledger.record(sp, rule.id, f);
            }
            None
        }
        (None, _) => None,
    };
    (accepted, u)
}

/// Threads each packet through the rules in order; first match wins.
pub fn filter_table_tf<D: Domain>(
    sp: &mut PacketSpace,
    rules: &[CompiledFilterRule],
    input: Vec<D::Packet>,
    ledger: &mut DropLedger,
) -> Vec<D::Packet> {
    let mut out = Vec::new();
    for p in input {
        let mut rest = Some(p);
        for rule in rules {
            let Some(p) = rest.take() else { break };
            let (a, u) = filter_rule_tf::<D>(sp, rule, &p, ledger);
            out.extend(a);
            rest = u;
        }
    }
    out
}

/// One NAT rule: the transformed matched part and the unmatched part.
pub fn nat_rule_tf<D: Domain>(
    sp: &mut PacketSpace,
    rule: &CompiledNatRule,
    p: &D::Packet,
) -> (Vec<D::Packet>, Option<D::Packet>) {
    let (m, u) = D::split(sp, p, &rule.guard);
    let matched = m.map(|m| D::nat(sp, m, rule)).unwrap_or_default();
    (matched, u)
}

/// Packets matching no rule pass through untransformed.
pub fn nat_table_tf<D: Domain>(
    sp: &mut PacketSpace,
    rules: &[CompiledNatRule],
    input: Vec<D::Packet>,
) -> Vec<D::Packet> {
    let mut out = Vec::new();
    for p in input {
        let mut rest = Some(p);
        for rule in rules {
            let Some(p) = rest.take() else { break };
            let (m, u) = nat_rule_tf::<D>(sp, rule, &p);
            out.extend(m);
            rest = u;
        }
        out.extend(rest);
    }
    out
}

/// DNAT, filter and SNAT tables of a firewall, in that order.
pub fn firewall_tables_tf<D: Domain>(
    sp: &mut PacketSpace,
    fw: &CompiledFirewall,
    input: Vec<D::Packet>,
    ledger: &mut DropLedger,
) -> Vec<D::Packet> {
    let after_dnat = nat_table_tf::<D>(sp, &fw.dnat, input);
    let after_filter = filter_table_tf::<D>(sp, &fw.filter, after_dnat, ledger);
    nat_table_tf::<D>(sp, &fw.snat, after_filter)
}

/// The routing check for leaving through `iface`: a synthetic table that
/// accepts the routing guard and drops everything else. Its drops are never
/// recorded. A missing routing entry forwards nothing.
pub fn route_tf<D: Domain>(
    sp: &mut PacketSpace,
    fw: &CompiledFirewall,
    iface: IfaceId,
    input: Vec<D::Packet>,
) -> Vec<D::Packet> {
    let Some(guard) = fw.routing.get(&iface) else {
        return Vec::new();
    };
    let table = [
        CompiledFilterRule {
            id: RuleId::ROUTING,
            guard: guard.clone(),
            action: Action::Accept,
        },
        CompiledFilterRule {
            id: RuleId::ROUTING,
            guard: CompiledGuard::tru(sp),
            action: Action::Drop,
        },
    ];
    let mut scratch = DropLedger::default();
    filter_table_tf::<D>(sp, &table, input, &mut scratch)
}

/// Transfer along a link leaving through `iface`. A `None` firewall stands
/// for a zone, whose links carry packets unchanged.
pub fn link_tf<D: Domain>(
    sp: &mut PacketSpace,
    fw: Option<&CompiledFirewall>,
    iface: IfaceId,
    input: &AbstractValue,
    ledger: &mut DropLedger,
) -> AbstractValue {
    let packets = D::packets(input);
    let out = match fw {
        None => packets,
        Some(fw) => {
            let processed = firewall_tables_tf::<D>(sp, fw, packets, ledger);
            route_tf::<D>(sp, fw, iface, processed)
        }
    };
    D::collect(sp, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::literal::parse_value_set;
    use crate::pktset::{HeaderLayout, ValueSet};

    fn space() -> PacketSpace {
        PacketSpace::new(HeaderLayout::new([("s", 4), ("d", 4)]).unwrap())
    }

    fn guard(sp: &mut PacketSpace, s: Option<&str>, d: Option<&str>) -> CompiledGuard {
        let mut g = Guard::tru();
        if let Some(s) = s {
            g = g.and_atom(FieldId(0), parse_value_set(s, 4).unwrap());
        }
        if let Some(d) = d {
            g = g.and_atom(FieldId(1), parse_value_set(d, 4).unwrap());
        }
        CompiledGuard::compile(sp, &g).unwrap()
    }

    fn box_(sp: &mut PacketSpace, s: &str, d: &str) -> Formula {
        let g = guard(sp, Some(s), Some(d));
        g.formula
    }

    fn initial(sp: &mut PacketSpace, s: &str) -> TrackedPacket {
        let c = box_(sp, s, "true");
        TrackedPacket {
            curr: c,
            orig: c,
            nated: FieldMask::EMPTY,
        }
    }

    #[test]
    fn drop_rule_records_orig_and_passes_unmatched() {
        let mut sp = space();
        let p = initial(&mut sp, "2-3");
        let rule = CompiledFilterRule {
            id: RuleId(1),
            guard: guard(&mut sp, Some("2-3"), Some("12")),
            action: Action::Drop,
        };
        let mut ledger = DropLedger::default();
        let (a, u) = filter_rule_tf::<Tracked>(&mut sp, &rule, &p, &mut ledger);
        assert!(a.is_none());
        let u = u.unwrap();
        let expect = box_(&mut sp, "2-3", "!12");
        assert_eq!(u.curr, expect);
        assert_eq!(u.orig, expect);
        let dropped = box_(&mut sp, "2-3", "12");
        assert_eq!(ledger.get(RuleId(1)), Some(dropped));
    }

    #[test]
    fn default_accept_and_disjoint_drop() {
        let mut sp = space();
        let p = initial(&mut sp, "2-3");
        let mut ledger = DropLedger::default();
        let accept = CompiledFilterRule {
            id: RuleId(9),
            guard: CompiledGuard::tru(&sp),
            action: Action::Accept,
        };
        let (a, u) = filter_rule_tf::<Tracked>(&mut sp, &accept, &p, &mut ledger);
        assert_eq!(a, Some(p));
        assert!(u.is_none());
        let drop = CompiledFilterRule {
            id: RuleId(2),
            guard: guard(&mut sp, Some("4-5"), None),
            action: Action::Drop,
        };
        let (a, u) = filter_rule_tf::<Tracked>(&mut sp, &drop, &p, &mut ledger);
        assert!(a.is_none());
        assert_eq!(u, Some(p));
        assert!(ledger.is_empty());
    }

    #[test]
    fn first_snat_records_original_source() {
        let mut sp = space();
        let p = initial(&mut sp, "2-3");
        let to = sp.atom_set(FieldId(0), &ValueSet::range(10, 11)).unwrap();
        let rule = CompiledNatRule {
            id: RuleId(3),
            guard: guard(&mut sp, Some("2-3"), None),
            field: FieldId(0),
            to,
        };
        let (m, u) = nat_rule_tf::<Tracked>(&mut sp, &rule, &p);
        assert!(u.is_none());
        assert_eq!(m.len(), 1);
        let q = m[0];
        assert_eq!(q.curr, box_(&mut sp, "10-11", "true"));
        assert_eq!(q.orig, box_(&mut sp, "2-3", "true"));
        assert_eq!(q.nated, FieldMask::single(FieldId(0)));

        let to2 = sp.atom_set(FieldId(0), &ValueSet::single(7)).unwrap();
        let again = CompiledNatRule {
            id: RuleId(4),
            guard: CompiledGuard::tru(&sp),
            field: FieldId(0),
            to: to2,
        };
        let (m, _) = nat_rule_tf::<Tracked>(&mut sp, &again, &q);
        assert_eq!(m[0].orig, q.orig);
        assert_eq!(m[0].curr, box_(&mut sp, "7", "true"));
    }

    #[test]
    fn first_nat_splits_correlated_values() {
        let mut sp = space();
        // s=1 pairs with d=1, s=2 with d=2.
        let a = box_(&mut sp, "1", "1");
        let b = box_(&mut sp, "2", "2");
        let c = sp.or(a, b);
        let p = TrackedPacket {
            curr: c,
            orig: c,
            nated: FieldMask::EMPTY,
        };
        let to = sp.atom_set(FieldId(0), &ValueSet::single(9)).unwrap();
        let rule = CompiledNatRule {
            id: RuleId(1),
            guard: CompiledGuard::tru(&sp),
            field: FieldId(0),
            to,
        };
        let (m, _) = nat_rule_tf::<Tracked>(&mut sp, &rule, &p);
        assert_eq!(m.len(), 2);
        for q in &m {
            let d = sp.field_values(q.curr, FieldId(1));
            let s = sp.field_values(q.orig, FieldId(0));
            assert_eq!(d.ranges(), s.ranges());
        }
    }

    #[test]
    fn nat_table_passes_unmatched_through() {
        let mut sp = space();
        let p1 = initial(&mut sp, "2-3");
        let p2 = initial(&mut sp, "4-5");
        let p3 = initial(&mut sp, "8");
        let t1 = sp.atom_set(FieldId(0), &ValueSet::range(10, 11)).unwrap();
        let t2 = sp.atom_set(FieldId(0), &ValueSet::range(6, 7)).unwrap();
        let rules = vec![
            CompiledNatRule {
                id: RuleId(3),
                guard: guard(&mut sp, Some("2-3"), None),
                field: FieldId(0),
                to: t1,
            },
            CompiledNatRule {
                id: RuleId(4),
                guard: guard(&mut sp, Some("4-5"), None),
                field: FieldId(0),
                to: t2,
            },
        ];
        let out = nat_table_tf::<Tracked>(&mut sp, &rules, vec![p1, p2, p3]);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].curr, box_(&mut sp, "10-11", "true"));
        assert_eq!(out[1].curr, box_(&mut sp, "6-7", "true"));
        assert_eq!(out[2], p3);
        assert!(nat_table_tf::<Tracked>(&mut sp, &[], vec![p3]) == vec![p3]);
    }

    #[test]
    fn mixed_guard_on_nated_packet_stays_sound() {
        let mut sp = space();
        let curr = box_(&mut sp, "9", "0-3");
        let orig = box_(&mut sp, "1-2", "0-3");
        let p = TrackedPacket {
            curr,
            orig,
            nated: FieldMask::single(FieldId(0)),
        };
        let g = guard(&mut sp, Some("9"), Some("1"));
        let (m, u) = Tracked::split(&mut sp, &p, &g);
        let m = m.unwrap();
        assert_eq!(m.orig, box_(&mut sp, "1-2", "1"));
        let u = u.unwrap();
        assert_eq!(u.curr, box_(&mut sp, "9", "0, 2-3"));
        assert_eq!(u.orig, box_(&mut sp, "1-2", "0, 2-3"));
    }

    #[test]
    fn attribute_negation_is_exact_for_one_atom_only() {
        let mut sp = space();
        let full = sp.tru();
        let p = vec![full, full];
        let one = guard(&mut sp, Some("3"), None);
        let (_, u) = Attribute::split(&mut sp, &p, &one);
        let not3 = sp
            .atom_set(FieldId(0), &ValueSet::new([(3, 3)], true))
            .unwrap();
        assert_eq!(u.unwrap()[0], not3);
        let two = guard(&mut sp, Some("3"), Some("4"));
        let (m, u) = Attribute::split(&mut sp, &p, &two);
        assert_eq!(u.unwrap(), p);
        assert!(m.is_some());
    }

    #[test]
    fn relational_matches_set_semantics() {
        let mut sp = space();
        let p = box_(&mut sp, "0-7", "true");
        let g = guard(&mut sp, Some("4-9"), Some("1"));
        let (m, u) = Relational::split(&mut sp, &p, &g);
        let (m, u) = (m.unwrap(), u.unwrap());
        let back = sp.or(m, u);
        assert_eq!(back, p);
        let both = sp.and(m, u);
        assert!(sp.is_empty(both));
    }
}
