//! Sets of packet headers as canonical boolean functions over header bits.
//!
//! A [`PacketSpace`] owns a decision-diagram store bound to one
//! [`HeaderLayout`]; [`Formula`] handles are small copyable values into it.
//! Because the store is hash-consed, handle equality is set equality.
//!
//! Variables are ordered field-major in layout order, most significant bit
//! first within a field.

mod bdd;
mod layout;
mod values;

use std::sync::atomic::{AtomicU32, Ordering};

use rustc_hash::FxHashMap;
use thiserror::Error;

use bdd::{Bdd, NodeId, FALSE, TRUE};
pub(crate) use layout::width_max;
pub use layout::{FieldId, FieldMask, FieldSpec, Header, HeaderLayout};
pub use values::{FieldValueSet, ValueSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PktSetError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("value {value} does not fit in the {width}-bit field `{field}`")]
    RangeExceedsWidth {
        field: String,
        value: u64,
        width: u32,
    },
    #[error("empty value set written into field `{0}`")]
    EmptyValueSet(String),
    #[error("invalid header layout: {0}")]
    InvalidLayout(String),
}

static NEXT_SPACE: AtomicU32 = AtomicU32::new(1);

/// Handle to a set of headers inside one [`PacketSpace`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Formula {
    space: u32,
    node: NodeId,
}

impl std::fmt::Debug for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.node {
            FALSE => write!(f, "false"),
            TRUE => write!(f, "true"),
            n => write!(f, "F{n}"),
        }
    }
}

/// Handle to a relation over (current, original) header pairs, used for
/// semantic comparison of tracked packet sets. Lives in a separate,
/// interleaved variable space of the owning [`PacketSpace`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Relation {
    space: u32,
    node: NodeId,
}

impl Relation {
    pub fn is_empty(self) -> bool {
        self.node == FALSE
    }
}

/// One ready-made rectangle for [`PacketSpace::relation`]: headers `curr`
/// paired with headers `orig`, required to agree on the fields in `equal`.
#[derive(Clone, Copy, Debug)]
pub struct Rectangle {
    pub curr: Formula,
    pub orig: Formula,
    pub equal: FieldMask,
}

pub struct PacketSpace {
    id: u32,
    layout: HeaderLayout,
    bdd: Bdd,
    pairs: Bdd,
    field_eq: FxHashMap<usize, NodeId>,
}

impl std::fmt::Debug for PacketSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PacketSpace")
            .field("id", &self.id)
            .field("bits", &self.layout.pk_size())
            .field("nodes", &self.bdd.node_count())
            .finish()
    }
}

impl PacketSpace {
    pub fn new(layout: HeaderLayout) -> Self {
        PacketSpace {
            id: NEXT_SPACE.fetch_add(1, Ordering::Relaxed),
            layout,
            bdd: Bdd::new(),
            pairs: Bdd::new(),
            field_eq: FxHashMap::default(),
        }
    }

    pub fn layout(&self) -> &HeaderLayout {
        &self.layout
    }

    pub fn node_count(&self) -> usize {
        self.bdd.node_count()
    }

    #[inline]
    fn wrap(&self, node: NodeId) -> Formula {
        Formula {
            space: self.id,
            node,
        }
    }

    #[inline]
    fn n(&self, f: Formula) -> NodeId {
        assert_eq!(
            f.space, self.id,
            "formula belongs to a different packet space"
        );
        f.node
    }

    pub fn owns(&self, f: Formula) -> bool {
        f.space == self.id
    }

    pub fn tru(&self) -> Formula {
        self.wrap(TRUE)
    }

    pub fn fals(&self) -> Formula {
        self.wrap(FALSE)
    }

    /// Headers whose bit `var` is set.
    pub fn bit(&mut self, var: u32) -> Formula {
        assert!(var < self.layout.pk_size());
        let n = self.bdd.ithvar(var);
        self.wrap(n)
    }

    pub fn field(&self, name: &str) -> Result<FieldId, PktSetError> {
        self.layout.field_id(name)
    }

    /// Headers whose named field lies in (or, if negated, outside) the set.
    pub fn atom(&mut self, fvs: &FieldValueSet) -> Result<Formula, PktSetError> {
        let f = self.layout.field_id(&fvs.field)?;
        self.atom_set(f, &fvs.set)
    }

    pub fn atom_set(&mut self, field: FieldId, set: &ValueSet) -> Result<Formula, PktSetError> {
        let width = self.layout.width(field);
        set.check_width(self.layout.name(field), width)?;
        let off = self.layout.offset(field);
        let mut acc = FALSE;
        for &(lo, hi) in set.ranges() {
            let r = self.range_node(off, width, 0, 0, lo as u128, hi as u128);
            acc = self.bdd.or(acc, r);
        }
        if set.is_negated() {
            acc = self.bdd.not(acc);
        }
        Ok(self.wrap(acc))
    }

    /// Interval `[lo, hi]` within the subtree of values sharing the prefix
    /// that puts them at `base`, splitting on one bit per level.
    fn range_node(
        &mut self,
        off: u32,
        width: u32,
        depth: u32,
        base: u128,
        lo: u128,
        hi: u128,
    ) -> NodeId {
        let span = 1u128 << (width - depth);
        let top = base + span - 1;
        if hi < base || lo > top {
            return FALSE;
        }
        if lo <= base && top <= hi {
            return TRUE;
        }
        let half = span / 2;
        let l = self.range_node(off, width, depth + 1, base, lo, hi);
        let h = self.range_node(off, width, depth + 1, base + half, lo, hi);
        self.bdd.mk(off + depth, l, h)
    }

    pub fn and(&mut self, f: Formula, g: Formula) -> Formula {
        let (a, b) = (self.n(f), self.n(g));
        let r = self.bdd.and(a, b);
        self.wrap(r)
    }

    pub fn or(&mut self, f: Formula, g: Formula) -> Formula {
        let (a, b) = (self.n(f), self.n(g));
        let r = self.bdd.or(a, b);
        self.wrap(r)
    }

    pub fn not(&mut self, f: Formula) -> Formula {
        let a = self.n(f);
        let r = self.bdd.not(a);
        self.wrap(r)
    }

    /// `f ∧ ¬g`.
    pub fn diff(&mut self, f: Formula, g: Formula) -> Formula {
        let ng = self.not(g);
        self.and(f, ng)
    }

    pub fn and_all(&mut self, fs: impl IntoIterator<Item = Formula>) -> Formula {
        fs.into_iter().fold(self.tru(), |acc, f| self.and(acc, f))
    }

    pub fn or_all(&mut self, fs: impl IntoIterator<Item = Formula>) -> Formula {
        fs.into_iter().fold(self.fals(), |acc, f| self.or(acc, f))
    }

    pub fn is_empty(&self, f: Formula) -> bool {
        self.n(f) == FALSE
    }

    pub fn is_full(&self, f: Formula) -> bool {
        self.n(f) == TRUE
    }

    pub fn equals(&self, f: Formula, g: Formula) -> bool {
        self.n(f) == self.n(g)
    }

    /// `f ⊆ g`.
    pub fn implies(&mut self, f: Formula, g: Formula) -> bool {
        let d = self.diff(f, g);
        self.is_empty(d)
    }

    /// Quantifies the field's bits away; the result does not constrain it.
    pub fn exists_field(&mut self, f: Formula, field: FieldId) -> Formula {
        self.exists_fields(f, FieldMask::single(field))
    }

    pub fn exists_fields(&mut self, f: Formula, fields: FieldMask) -> Formula {
        let vars = self.layout.vars_of(fields);
        let a = self.n(f);
        let r = self.bdd.exists(a, vars);
        self.wrap(r)
    }

    /// Projection onto one field: the values of `field` occurring in `f`, all
    /// other fields unconstrained.
    pub fn extract_field(&mut self, f: Formula, field: FieldId) -> Formula {
        let others = FieldMask::single(field).complement(self.layout.n_fields());
        self.exists_fields(f, others)
    }

    /// `f` with `field` overwritten by any value of `values`.
    pub fn overwrite_field(
        &mut self,
        f: Formula,
        field: FieldId,
        values: &ValueSet,
    ) -> Result<Formula, PktSetError> {
        if values.is_empty_in(self.layout.width(field)) {
            return Err(PktSetError::EmptyValueSet(self.layout.name(field).into()));
        }
        let atom = self.atom_set(field, values)?;
        Ok(self.overwrite_with(f, field, atom))
    }

    /// As [`overwrite_field`](Self::overwrite_field), with the new values given
    /// as a formula over the field alone.
    pub fn overwrite_with(&mut self, f: Formula, field: FieldId, values: Formula) -> Formula {
        let rest = self.exists_field(f, field);
        self.and(rest, values)
    }

    /// `dst` with `field` replaced by the values `field` takes in `src`.
    pub fn copy_field(&mut self, dst: Formula, src: Formula, field: FieldId) -> Formula {
        let rest = self.exists_field(dst, field);
        let proj = self.extract_field(src, field);
        self.and(rest, proj)
    }

    /// Cofactor with header bit `var` fixed.
    pub fn restrict(&mut self, f: Formula, var: u32, value: bool) -> Formula {
        let a = self.n(f);
        let r = self.bdd.restrict(a, var, value);
        self.wrap(r)
    }

    /// Partitions the values of `field` into classes on which every formula
    /// of `parts` has the same cofactor. Returns each class (a formula over
    /// `field` alone) whose cofactor in `parts[0]` is non-empty, in a
    /// deterministic order.
    pub fn field_classes(&mut self, parts: &[Formula], field: FieldId) -> Vec<Formula> {
        let nodes: Vec<NodeId> = parts.iter().map(|&p| self.n(p)).collect();
        let off = self.layout.offset(field);
        let width = self.layout.width(field);
        let mut level: Vec<(Vec<NodeId>, NodeId)> = vec![(nodes, TRUE)];
        for d in 0..width {
            let var = off + d;
            let bit = self.bdd.ithvar(var);
            let nbit = self.bdd.not(bit);
            let mut next: std::collections::BTreeMap<Vec<NodeId>, NodeId> = Default::default();
            for (cofs, prefix) in level {
                for (value, lit) in [(false, nbit), (true, bit)] {
                    let c: Vec<NodeId> = cofs
                        .iter()
                        .map(|&n| self.bdd.restrict(n, var, value))
                        .collect();
                    if c[0] == FALSE {
                        continue;
                    }
                    let p = self.bdd.and(prefix, lit);
                    let slot = next.entry(c).or_insert(FALSE);
                    *slot = self.bdd.or(*slot, p);
                }
            }
            level = next.into_iter().collect();
        }
        let mut classes: Vec<NodeId> = level.into_iter().map(|(_, p)| p).collect();
        classes.sort_unstable();
        classes.into_iter().map(|n| self.wrap(n)).collect()
    }

    /// Headers that agree with `h` on every field of `fields`.
    pub fn header_cube(&mut self, h: Header, fields: FieldMask) -> Formula {
        let mut acc = self.tru();
        for f in fields.iter() {
            let v = self.layout.field_value(h, f);
            let a = self
                .atom_set(f, &ValueSet::single(v))
                .expect("value from header fits");
            acc = self.and(acc, a);
        }
        acc
    }

    pub fn contains(&self, f: Formula, h: Header) -> bool {
        let n = self.layout.pk_size();
        self.bdd
            .eval(self.n(f), |var| (h >> (n - 1 - var)) & 1 == 1)
    }

    pub fn sat_count(&self, f: Formula) -> f64 {
        self.bdd.sat_count(self.n(f), self.layout.pk_size())
    }

    /// Up to `limit` members of `f`, in increasing header order.
    pub fn enumerate(&self, f: Formula, limit: usize) -> Vec<Header> {
        let mut out = Vec::new();
        if limit == 0 {
            return out;
        }
        self.bdd
            .for_each_sat(self.n(f), self.layout.pk_size(), &mut |h| {
                out.push(h);
                out.len() < limit
            });
        out
    }

    /// Values of `field` occurring in `f`, as coalesced ranges.
    pub fn field_values(&mut self, f: Formula, field: FieldId) -> ValueSet {
        let proj = self.extract_field(f, field);
        let off = self.layout.offset(field);
        let width = self.layout.width(field);
        let mut ranges = Vec::new();
        self.collect_ranges(self.n(proj), off, width, 0, 0, &mut ranges);
        ValueSet::new(ranges, false)
    }

    fn collect_ranges(
        &self,
        node: NodeId,
        off: u32,
        width: u32,
        depth: u32,
        base: u128,
        out: &mut Vec<(u64, u64)>,
    ) {
        if node == FALSE {
            return;
        }
        let span = 1u128 << (width - depth);
        if node == TRUE {
            out.push((base as u64, (base + span - 1) as u64));
            return;
        }
        let half = span / 2;
        let (lo, hi) = if self.bdd.var(node) == off + depth {
            (self.bdd.lo(node), self.bdd.hi(node))
        } else {
            (node, node)
        };
        self.collect_ranges(lo, off, width, depth + 1, base, out);
        self.collect_ranges(hi, off, width, depth + 1, base + half, out);
    }

    /// Whether `f` equals the product of its per-field projections, field by
    /// field: entry `i` is true when field `i` is independent of the others.
    pub fn independent_fields(&mut self, f: Formula) -> Vec<bool> {
        let fields: Vec<FieldId> = self.layout.field_ids().collect();
        fields
            .into_iter()
            .map(|field| {
                let proj = self.extract_field(f, field);
                let rest = self.exists_field(f, field);
                let prod = self.and(proj, rest);
                self.equals(prod, f)
            })
            .collect()
    }

    /// Union of rectangles as a relation over (curr, orig) pairs.
    pub fn relation(&mut self, rects: &[Rectangle]) -> Relation {
        let mut acc = FALSE;
        for r in rects {
            let c = self.n(r.curr);
            let o = self.n(r.orig);
            let cm = self.pairs_import(c, 0);
            let om = self.pairs_import(o, 1);
            let mut term = self.pairs.and(cm, om);
            for f in r.equal.iter() {
                let eq = self.field_equality(f);
                term = self.pairs.and(term, eq);
            }
            acc = self.pairs.or(acc, term);
        }
        Relation {
            space: self.id,
            node: acc,
        }
    }

    pub fn relation_union(&mut self, a: Relation, b: Relation) -> Relation {
        assert!(a.space == self.id && b.space == self.id);
        Relation {
            space: self.id,
            node: self.pairs.or(a.node, b.node),
        }
    }

    fn pairs_import(&mut self, f: NodeId, side: u32) -> NodeId {
        let mut memo = FxHashMap::default();
        let map = move |v: u32| 2 * v + side;
        self.pairs.import(&self.bdd, f, &map, &mut memo)
    }

    /// `curr.field == orig.field` over interleaved pair variables.
    fn field_equality(&mut self, field: FieldId) -> NodeId {
        if let Some(&n) = self.field_eq.get(&field.0) {
            return n;
        }
        let off = self.layout.offset(field);
        let width = self.layout.width(field);
        let mut acc = TRUE;
        for d in (0..width).rev() {
            let v = off + d;
            let o_hi = self.pairs.mk(2 * v + 1, FALSE, acc);
            let o_lo = self.pairs.mk(2 * v + 1, acc, FALSE);
            acc = self.pairs.mk(2 * v, o_lo, o_hi);
        }
        self.field_eq.insert(field.0, acc);
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2x2() -> PacketSpace {
        PacketSpace::new(HeaderLayout::new([("f1", 2), ("f2", 2)]).unwrap())
    }

    fn fset(sp: &PacketSpace, name: &str, set: ValueSet) -> FieldValueSet {
        let _ = sp.field(name).unwrap();
        FieldValueSet::new(name, set)
    }

    /// b1 ∧ ¬b3 ∧ b4 in one-based bit names, i.e. variables 0, 2, 3.
    fn two_field_curr(sp: &mut PacketSpace) -> Formula {
        let b1 = sp.bit(0);
        let b3 = sp.bit(2);
        let b4 = sp.bit(3);
        let nb3 = sp.not(b3);
        let x = sp.and(b1, nb3);
        sp.and(x, b4)
    }

    #[test]
    fn range_atom_has_eight_members() {
        let mut sp = t2x2();
        let a = sp.atom(&fset(&sp, "f1", ValueSet::range(2, 3))).unwrap();
        let members = sp.enumerate(a, 100);
        assert_eq!(members.len(), 8);
        assert!(members.iter().all(|h| h >> 3 & 1 == 1));
        // (b1 ∧ ¬b2) ∨ (b1 ∧ b2) ≡ b1
        assert_eq!(a, sp.bit(0));
    }

    #[test]
    fn full_range_atom_is_true() {
        let mut sp = t2x2();
        let a = sp.atom(&fset(&sp, "f1", ValueSet::range(0, 3))).unwrap();
        assert!(sp.is_full(a));
    }

    #[test]
    fn atom_errors() {
        let mut sp = t2x2();
        assert!(matches!(
            sp.atom(&FieldValueSet::new("nope", ValueSet::single(0))),
            Err(PktSetError::UnknownField(_))
        ));
        assert!(matches!(
            sp.atom(&FieldValueSet::new("f1", ValueSet::single(4))),
            Err(PktSetError::RangeExceedsWidth { .. })
        ));
    }

    #[test]
    fn boolean_identities() {
        let mut sp = t2x2();
        let b1 = sp.bit(0);
        let nb1 = sp.not(b1);
        let c = sp.and(b1, nb1);
        assert!(sp.is_empty(c));
        let s = two_field_curr(&mut sp);
        let e = sp.fals();
        assert_eq!(sp.or(s, e), s);
        let t = sp.tru();
        assert_eq!(sp.and(s, t), s);
        let b2 = sp.bit(1);
        let (l, r) = (sp.or(b1, b2), sp.or(b2, b1));
        assert!(sp.equals(l, r));
    }

    #[test]
    fn exists_and_extract_on_two_field_packet() {
        let mut sp = t2x2();
        let curr = two_field_curr(&mut sp);
        let f1 = sp.field("f1").unwrap();
        let ex = sp.exists_field(curr, f1);
        let b3 = sp.bit(2);
        let b4 = sp.bit(3);
        let nb3 = sp.not(b3);
        assert_eq!(ex, sp.and(nb3, b4));
        assert_eq!(sp.extract_field(curr, f1), sp.bit(0));
        let t = sp.tru();
        assert_eq!(sp.exists_field(t, f1), t);
        assert_eq!(sp.extract_field(t, f1), t);
        let e = sp.fals();
        assert_eq!(sp.exists_field(e, f1), e);
    }

    #[test]
    fn overwrite_on_two_field_packet() {
        let mut sp = t2x2();
        let curr = two_field_curr(&mut sp);
        let f1 = sp.field("f1").unwrap();
        let out = sp.overwrite_field(curr, f1, &ValueSet::single(0)).unwrap();
        // ¬b1 ∧ ¬b2 ∧ ¬b3 ∧ b4 = header 0001
        assert_eq!(sp.enumerate(out, 10), vec![0b0001]);
        let e = sp.fals();
        assert_eq!(sp.overwrite_field(e, f1, &ValueSet::single(1)).unwrap(), e);
        assert!(matches!(
            sp.overwrite_field(curr, f1, &ValueSet::empty()),
            Err(PktSetError::EmptyValueSet(_))
        ));
        let full = sp.overwrite_field(curr, f1, &ValueSet::full()).unwrap();
        assert_eq!(full, sp.exists_field(curr, f1));
    }

    #[test]
    fn copy_on_two_field_packet() {
        let mut sp = t2x2();
        let curr = two_field_curr(&mut sp);
        let c3 = sp.bit(2);
        let c4 = sp.bit(3);
        let nc3 = sp.not(c3);
        let nc4 = sp.not(c4);
        let orig = sp.and(nc3, nc4);
        let f1 = sp.field("f1").unwrap();
        let out = sp.copy_field(orig, curr, f1);
        let c1 = sp.bit(0);
        let expect = sp.and(c1, orig);
        assert_eq!(out, expect);
        // c1 ∧ ¬c3 ∧ ¬c4: 1000, 1100
        assert_eq!(sp.enumerate(out, 10), vec![0b1000, 0b1100]);
    }

    #[test]
    fn enumerate_orders_and_limits() {
        let sp = t2x2();
        let all = sp.enumerate(sp.tru(), 16);
        assert_eq!(all, (0..16).collect::<Vec<_>>());
        assert!(sp.enumerate(sp.fals(), 5).is_empty());
        assert_eq!(sp.enumerate(sp.tru(), 3), vec![0, 1, 2]);
    }

    #[test]
    fn field_values_coalesce() {
        let mut sp = PacketSpace::new(HeaderLayout::addr2());
        let s = sp.field("s").unwrap();
        let set = ValueSet::new([(10, 20), (21, 30), (100, 100)], false);
        let a = sp.atom_set(s, &set).unwrap();
        assert_eq!(sp.field_values(a, s), set);
        let d = sp.field("d").unwrap();
        assert!(sp.field_values(a, d).is_full_in(32));
    }

    #[test]
    fn classes_split_correlated_field() {
        let mut sp = t2x2();
        let f1 = sp.field("f1").unwrap();
        let f2 = sp.field("f2").unwrap();
        // f1 == f2 over {0,1}, plus f1 = 3 with any f2
        let mut rel = sp.fals();
        for v in 0..2 {
            let a = sp.atom_set(f1, &ValueSet::single(v)).unwrap();
            let b = sp.atom_set(f2, &ValueSet::single(v)).unwrap();
            let ab = sp.and(a, b);
            rel = sp.or(rel, ab);
        }
        let three = sp.atom_set(f1, &ValueSet::single(3)).unwrap();
        rel = sp.or(rel, three);
        let classes = sp.field_classes(&[rel], f1);
        assert_eq!(classes.len(), 3);
        let sets: Vec<ValueSet> = classes.iter().map(|&c| sp.field_values(c, f1)).collect();
        for v in [0u64, 1, 3] {
            assert_eq!(sets.iter().filter(|s| s.contains(v)).count(), 1);
        }
        assert!(sets.iter().all(|s| !s.contains(2)));
    }

    #[test]
    fn relation_respects_equal_fields() {
        let mut sp = t2x2();
        let f2 = sp.field("f2").unwrap();
        let t = sp.tru();
        let loose = sp.relation(&[Rectangle {
            curr: t,
            orig: t,
            equal: FieldMask::EMPTY,
        }]);
        let tight = sp.relation(&[Rectangle {
            curr: t,
            orig: t,
            equal: FieldMask::single(f2),
        }]);
        assert_ne!(loose, tight);
        let both = sp.relation_union(loose, tight);
        assert_eq!(both, loose);
    }

    #[test]
    #[should_panic(expected = "different packet space")]
    fn foreign_handles_panic() {
        let mut a = t2x2();
        let b = t2x2();
        let x = b.tru();
        let _ = a.not(x);
    }
}
