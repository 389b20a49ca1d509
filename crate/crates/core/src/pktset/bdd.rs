//! Reduced ordered binary decision diagrams with hash-consed nodes.
//!
//! Variable `0` is the top of the order. Node ids `0` and `1` are the
//! terminals. Every non-terminal is unique per `(var, lo, hi)`, so two ids are
//! equal iff they denote the same boolean function.

use rustc_hash::FxHashMap;

pub(crate) type NodeId = u32;

pub(crate) const FALSE: NodeId = 0;
pub(crate) const TRUE: NodeId = 1;

const TERMINAL_VAR: u32 = u32::MAX;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
struct Node {
    var: u32,
    lo: NodeId,
    hi: NodeId,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    And,
    Or,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Bdd {
    nodes: Vec<Node>,
    unique: FxHashMap<Node, NodeId>,
    apply_cache: FxHashMap<(u8, NodeId, NodeId), NodeId>,
    not_cache: FxHashMap<NodeId, NodeId>,
}

impl Bdd {
    pub(crate) fn new() -> Self {
        let terminal = Node {
            var: TERMINAL_VAR,
            lo: FALSE,
            hi: FALSE,
        };
        let one = Node {
            var: TERMINAL_VAR,
            lo: TRUE,
            hi: TRUE,
        };
        Bdd {
            nodes: vec![terminal, one],
            ..Default::default()
        }
    }

    pub(crate) fn node_count(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub(crate) fn var(&self, f: NodeId) -> u32 {
        self.nodes[f as usize].var
    }

    #[inline]
    pub(crate) fn lo(&self, f: NodeId) -> NodeId {
        self.nodes[f as usize].lo
    }

    #[inline]
    pub(crate) fn hi(&self, f: NodeId) -> NodeId {
        self.nodes[f as usize].hi
    }

    #[inline]
    pub(crate) fn is_terminal(f: NodeId) -> bool {
        f <= TRUE
    }

    pub(crate) fn mk(&mut self, var: u32, lo: NodeId, hi: NodeId) -> NodeId {
        if lo == hi {
            return lo;
        }
        debug_assert!(var < self.var(lo) && var < self.var(hi));
        let node = Node { var, lo, hi };
        if let Some(&id) = self.unique.get(&node) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(node);
        self.unique.insert(node, id);
        id
    }

    pub(crate) fn ithvar(&mut self, var: u32) -> NodeId {
        self.mk(var, FALSE, TRUE)
    }

    /// Cofactors of `f` with respect to `var`, which must not be below the top
    /// variable of `f`.
    #[inline]
    fn cofactors(&self, f: NodeId, var: u32) -> (NodeId, NodeId) {
        let n = self.nodes[f as usize];
        if n.var == var {
            (n.lo, n.hi)
        } else {
            (f, f)
        }
    }

    pub(crate) fn not(&mut self, f: NodeId) -> NodeId {
        match f {
            FALSE => return TRUE,
            TRUE => return FALSE,
            _ => {}
        }
        if let Some(&r) = self.not_cache.get(&f) {
            return r;
        }
        let Node { var, lo, hi } = self.nodes[f as usize];
        let lo = self.not(lo);
        let hi = self.not(hi);
        let r = self.mk(var, lo, hi);
        self.not_cache.insert(f, r);
        self.not_cache.insert(r, f);
        r
    }

    pub(crate) fn and(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.apply(Op::And, a, b)
    }

    pub(crate) fn or(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.apply(Op::Or, a, b)
    }

    fn apply(&mut self, op: Op, a: NodeId, b: NodeId) -> NodeId {
        match op {
            Op::And => {
                if a == FALSE || b == FALSE {
                    return FALSE;
                }
                if a == TRUE {
                    return b;
                }
                if b == TRUE || a == b {
                    return a;
                }
            }
            Op::Or => {
                if a == TRUE || b == TRUE {
                    return TRUE;
                }
                if a == FALSE {
                    return b;
                }
                if b == FALSE || a == b {
                    return a;
                }
            }
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let key = (op as u8, a, b);
        if let Some(&r) = self.apply_cache.get(&key) {
            return r;
        }
        let var = self.var(a).min(self.var(b));
        let (a0, a1) = self.cofactors(a, var);
        let (b0, b1) = self.cofactors(b, var);
        let lo = self.apply(op, a0, b0);
        let hi = self.apply(op, a1, b1);
        let r = self.mk(var, lo, hi);
        self.apply_cache.insert(key, r);
        r
    }

    /// Existential quantification over every variable whose bit is set in
    /// `vars`.
    pub(crate) fn exists(&mut self, f: NodeId, vars: u128) -> NodeId {
        let mut memo = FxHashMap::default();
        self.exists_rec(f, vars, &mut memo)
    }

    fn exists_rec(
        &mut self,
        f: NodeId,
        vars: u128,
        memo: &mut FxHashMap<NodeId, NodeId>,
    ) -> NodeId {
        if Self::is_terminal(f) {
            return f;
        }
        let var = self.var(f);
        // no quantified variable at or below this level
        if var >= 128 || vars >> var == 0 {
            return f;
        }
        if let Some(&r) = memo.get(&f) {
            return r;
        }
        let (lo, hi) = (self.lo(f), self.hi(f));
        let lo = self.exists_rec(lo, vars, memo);
        let hi = self.exists_rec(hi, vars, memo);
        let r = if vars >> var & 1 == 1 {
            self.or(lo, hi)
        } else {
            self.mk(var, lo, hi)
        };
        memo.insert(f, r);
        r
    }

    /// Cofactor of `f` with `var` fixed to `value`.
    pub(crate) fn restrict(&mut self, f: NodeId, var: u32, value: bool) -> NodeId {
        let mut memo = FxHashMap::default();
        self.restrict_rec(f, var, value, &mut memo)
    }

    fn restrict_rec(
        &mut self,
        f: NodeId,
        var: u32,
        value: bool,
        memo: &mut FxHashMap<NodeId, NodeId>,
    ) -> NodeId {
        let top = self.var(f);
        if top > var {
            return f;
        }
        if top == var {
            return if value { self.hi(f) } else { self.lo(f) };
        }
        if let Some(&r) = memo.get(&f) {
            return r;
        }
        let (lo, hi) = (self.lo(f), self.hi(f));
        let lo = self.restrict_rec(lo, var, value, memo);
        let hi = self.restrict_rec(hi, var, value, memo);
        let r = self.mk(top, lo, hi);
        memo.insert(f, r);
        r
    }

    /// Rebuilds `f` (owned by `src`) inside `self`, mapping every variable
    /// through `map`. The map must be strictly increasing.
    pub(crate) fn import(
        &mut self,
        src: &Bdd,
        f: NodeId,
        map: &dyn Fn(u32) -> u32,
        memo: &mut FxHashMap<NodeId, NodeId>,
    ) -> NodeId {
        if Self::is_terminal(f) {
            return f;
        }
        if let Some(&r) = memo.get(&f) {
            return r;
        }
        let lo = self.import(src, src.lo(f), map, memo);
        let hi = self.import(src, src.hi(f), map, memo);
        let r = self.mk(map(src.var(f)), lo, hi);
        memo.insert(f, r);
        r
    }

    /// Evaluates `f` under an assignment given as a predicate on variables.
    pub(crate) fn eval(&self, mut f: NodeId, assignment: impl Fn(u32) -> bool) -> bool {
        while !Self::is_terminal(f) {
            f = if assignment(self.var(f)) {
                self.hi(f)
            } else {
                self.lo(f)
            };
        }
        f == TRUE
    }

    /// Number of satisfying assignments over variables `0..nvars`.
    pub(crate) fn sat_count(&self, f: NodeId, nvars: u32) -> f64 {
        let mut memo: FxHashMap<NodeId, f64> = FxHashMap::default();
        let level = |b: &Bdd, g: NodeId| {
            if Self::is_terminal(g) {
                nvars
            } else {
                b.var(g)
            }
        };
        fn rec(
            b: &Bdd,
            g: NodeId,
            memo: &mut FxHashMap<NodeId, f64>,
            level: &dyn Fn(&Bdd, NodeId) -> u32,
        ) -> f64 {
            if g == FALSE {
                return 0.0;
            }
            if g == TRUE {
                return 1.0;
            }
            if let Some(&c) = memo.get(&g) {
                return c;
            }
            let v = b.var(g);
            let (lo, hi) = (b.lo(g), b.hi(g));
            let clo = rec(b, lo, memo, level) * 2f64.powi((level(b, lo) - v - 1) as i32);
            let chi = rec(b, hi, memo, level) * 2f64.powi((level(b, hi) - v - 1) as i32);
            memo.insert(g, clo + chi);
            clo + chi
        }
        let top = level(self, f);
        rec(self, f, &mut memo, &level) * 2f64.powi(top as i32)
    }

    /// Visits satisfying assignments of `f` over variables `0..nvars` in
    /// lexicographic order (variable 0 most significant, 0 before 1), stopping
    /// once `visit` returns `false`.
    pub(crate) fn for_each_sat(&self, f: NodeId, nvars: u32, visit: &mut dyn FnMut(u128) -> bool) {
        fn rec(
            b: &Bdd,
            f: NodeId,
            var: u32,
            nvars: u32,
            acc: u128,
            visit: &mut dyn FnMut(u128) -> bool,
        ) -> bool {
            if f == FALSE {
                return true;
            }
            if var == nvars {
                return visit(acc);
            }
            let bit = 1u128 << (nvars - 1 - var);
            let (lo, hi) = if b.var(f) == var {
                (b.lo(f), b.hi(f))
            } else {
                (f, f)
            };
            rec(b, lo, var + 1, nvars, acc, visit) && rec(b, hi, var + 1, nvars, acc | bit, visit)
        }
        rec(self, f, 0, nvars, 0, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_under_commutation() {
        let mut b = Bdd::new();
        let x = b.ithvar(0);
        let y = b.ithvar(1);
        let z = b.ithvar(2);
        let xy = b.and(x, y);
        let l = b.or(xy, z);
        let zy = b.or(z, y);
        let zx = b.or(z, x);
        let r = b.and(zx, zy);
        assert_eq!(l, r);
    }

    #[test]
    fn not_is_involution() {
        let mut b = Bdd::new();
        let x = b.ithvar(3);
        let y = b.ithvar(5);
        let f = b.or(x, y);
        let nf = b.not(f);
        assert_eq!(b.not(nf), f);
        assert_eq!(b.and(f, nf), FALSE);
    }

    #[test]
    fn exists_and_restrict() {
        let mut b = Bdd::new();
        let x = b.ithvar(0);
        let y = b.ithvar(1);
        let f = b.and(x, y);
        assert_eq!(b.exists(f, 1), y);
        assert_eq!(b.restrict(f, 1, true), x);
        assert_eq!(b.restrict(f, 1, false), FALSE);
    }

    #[test]
    fn sat_count_skips_levels() {
        let mut b = Bdd::new();
        let x = b.ithvar(1);
        assert_eq!(b.sat_count(x, 3), 4.0);
        assert_eq!(b.sat_count(TRUE, 3), 8.0);
        assert_eq!(b.sat_count(FALSE, 3), 0.0);
    }
}
