//! Hash-consed term DAG for the QF_BV fragment handled by the matchers.
//!
//! Every node lives in a [`TermStore`] and is addressed by a [`TermId`].
//! Structurally identical constructions return the same id, so syntactic
//! identity of two terms is a plain id comparison.
//!
//! `+`, `*`, `•` and the bitwise operators are kept binary. The matchers
//! look at flattened views ([`TermStore::flatten_concat`],
//! [`TermStore::flatten_add`]) on demand; intermediate xor nodes must stay
//! observable for the Wallace-tree matcher, so no n-ary normalization is
//! ever applied to the store itself.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

/// Identity of a node inside a [`TermStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sort {
    Bool,
    BitVec(u32),
}

impl Sort {
    /// Bit width; Boolean terms count as one bit.
    pub fn width(self) -> u32 {
        match self {
            Sort::Bool => 1,
            Sort::BitVec(w) => w,
        }
    }

    pub fn is_bool(self) -> bool {
        matches!(self, Sort::Bool)
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Bool => write!(f, "Bool"),
            Sort::BitVec(w) => write!(f, "(_ BitVec {w})"),
        }
    }
}

/// Exact bit-vector constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BvConst {
    width: u32,
    value: BigUint,
}

impl BvConst {
    /// Builds a constant, truncating `value` to `width` bits.
    pub fn new(value: BigUint, width: u32) -> Self {
        let modulus = BigUint::from(1u8) << width as usize;
        BvConst {
            width,
            value: value % modulus,
        }
    }

    pub fn zero(width: u32) -> Self {
        BvConst {
            width,
            value: BigUint::zero(),
        }
    }

    pub fn from_u128(value: u128, width: u32) -> Self {
        Self::new(BigUint::from(value), width)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    /// Most-significant-first binary digits, exactly `width` of them.
    pub fn to_binary_string(&self) -> String {
        format!("{:0width$b}", self.value, width = self.width as usize)
    }
}

/// Node kinds. Children are ids into the owning store.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Kind {
    Var(String),
    Const(BvConst),
    BoolConst(bool),
    /// `hi • lo`
    Concat(TermId, TermId),
    BvAdd(TermId, TermId),
    BvMul(TermId, TermId),
    BvAnd(TermId, TermId),
    BvOr(TermId, TermId),
    BvXor(TermId, TermId),
    BvNot(TermId),
    Extract {
        hi: u32,
        lo: u32,
        arg: TermId,
    },
    Eq(TermId, TermId),
    Not(TermId),
    And(TermId, TermId),
    Or(TermId, TermId),
    Xor(TermId, TermId),
}

impl Kind {
    pub fn children(&self) -> Children {
        use Kind::*;
        match *self {
            Var(_) | Const(_) | BoolConst(_) => Children::None,
            BvNot(a) | Not(a) | Extract { arg: a, .. } => Children::One(a),
            Concat(a, b)
            | BvAdd(a, b)
            | BvMul(a, b)
            | BvAnd(a, b)
            | BvOr(a, b)
            | BvXor(a, b)
            | Eq(a, b)
            | And(a, b)
            | Or(a, b)
            | Xor(a, b) => Children::Two(a, b),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Kind::Var(_) | Kind::Const(_) | Kind::BoolConst(_))
    }
}

/// Child list of a node without allocating.
#[derive(Debug, Clone, Copy)]
pub enum Children {
    None,
    One(TermId),
    Two(TermId, TermId),
}

impl IntoIterator for Children {
    type Item = TermId;
    type IntoIter = std::iter::Flatten<std::array::IntoIter<Option<TermId>, 2>>;

    fn into_iter(self) -> Self::IntoIter {
        let arr = match self {
            Children::None => [None, None],
            Children::One(a) => [Some(a), None],
            Children::Two(a, b) => [Some(a), Some(b)],
        };
        arr.into_iter().flatten()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("width mismatch: {0}")]
    WidthMismatch(String),
    #[error("sort mismatch: {0}")]
    SortMismatch(String),
    #[error("variable `{name}` already declared with sort {existing}")]
    Redeclared { name: String, existing: Sort },
}

#[derive(Debug, Clone)]
struct Node {
    kind: Kind,
    sort: Sort,
}

/// Owner of all term nodes of one script.
#[derive(Debug, Clone, Default)]
pub struct TermStore {
    nodes: Vec<Node>,
    interned: HashMap<Kind, TermId>,
}

/// Flattened `s_k • ... • s_1`, most-significant segment first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcatChain {
    pub segments: Vec<TermId>,
}

/// Flattened sum; a multiset, duplicates kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumChain {
    pub summands: Vec<TermId>,
}

impl TermStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, t: TermId) -> &Kind {
        &self.nodes[t.index()].kind
    }

    pub fn sort(&self, t: TermId) -> Sort {
        self.nodes[t.index()].sort
    }

    pub fn width(&self, t: TermId) -> u32 {
        self.sort(t).width()
    }

    /// Looks up an already interned node without creating it.
    pub fn find(&self, kind: &Kind) -> Option<TermId> {
        self.interned.get(kind).copied()
    }

    /// Hash-consing constructor. Checks the sort rules of `kind`.
    pub fn mk_term(&mut self, kind: Kind) -> Result<TermId, TermError> {
        if let Some(&id) = self.interned.get(&kind) {
            return Ok(id);
        }
        let sort = self.sort_of(&kind)?;
        let id = TermId(self.nodes.len() as u32);
        self.nodes.push(Node {
            kind: kind.clone(),
            sort,
        });
        self.interned.insert(kind, id);
        Ok(id)
    }

    fn sort_of(&self, kind: &Kind) -> Result<Sort, TermError> {
        use Kind::*;
        let bv = |t: TermId| -> Result<u32, TermError> {
            match self.sort(t) {
                Sort::BitVec(w) => Ok(w),
                Sort::Bool => Err(TermError::SortMismatch(format!(
                    "{t} is Boolean where a bit-vector is required"
                ))),
            }
        };
        let boolean = |t: TermId| -> Result<(), TermError> {
            if self.sort(t).is_bool() {
                Ok(())
            } else {
                Err(TermError::SortMismatch(format!(
                    "{t} is a bit-vector where a Boolean is required"
                )))
            }
        };
        Ok(match kind {
            Var(name) => {
                return Err(TermError::SortMismatch(format!(
                    "variable `{name}` has no sort; declare it with TermStore::var"
                )))
            }
            Const(c) => {
                if c.width() == 0 {
                    return Err(TermError::WidthMismatch("zero-width constant".into()));
                }
                Sort::BitVec(c.width())
            }
            BoolConst(_) => Sort::Bool,
            Concat(a, b) => Sort::BitVec(bv(*a)? + bv(*b)?),
            BvAdd(a, b) | BvMul(a, b) | BvAnd(a, b) | BvOr(a, b) | BvXor(a, b) => {
                let (wa, wb) = (bv(*a)?, bv(*b)?);
                if wa != wb {
                    return Err(TermError::WidthMismatch(format!(
                        "operands of widths {wa} and {wb}"
                    )));
                }
                Sort::BitVec(wa)
            }
            BvNot(a) => Sort::BitVec(bv(*a)?),
            Extract { hi, lo, arg } => {
                let w = bv(*arg)?;
                if lo > hi || *hi >= w {
                    return Err(TermError::WidthMismatch(format!(
                        "extract [{hi}:{lo}] out of range for width {w}"
                    )));
                }
                Sort::BitVec(hi - lo + 1)
            }
            Eq(a, b) => {
                if self.sort(*a) != self.sort(*b) {
                    return Err(TermError::WidthMismatch(format!(
                        "equality between {} and {}",
                        self.sort(*a),
                        self.sort(*b)
                    )));
                }
                Sort::Bool
            }
            Not(a) => {
                boolean(*a)?;
                Sort::Bool
            }
            And(a, b) | Or(a, b) | Xor(a, b) => {
                boolean(*a)?;
                boolean(*b)?;
                Sort::Bool
            }
        })
    }

    /// Declares (or re-fetches) a variable. Re-declaring a name with a
    /// different sort is an error.
    pub fn var(&mut self, name: &str, sort: Sort) -> Result<TermId, TermError> {
        let kind = Kind::Var(name.to_string());
        if let Some(&id) = self.interned.get(&kind) {
            let existing = self.sort(id);
            if existing != sort {
                return Err(TermError::Redeclared {
                    name: name.to_string(),
                    existing,
                });
            }
            return Ok(id);
        }
        if sort == Sort::BitVec(0) {
            return Err(TermError::WidthMismatch(format!(
                "variable `{name}` of width 0"
            )));
        }
        let id = TermId(self.nodes.len() as u32);
        self.nodes.push(Node {
            kind: kind.clone(),
            sort,
        });
        self.interned.insert(kind, id);
        Ok(id)
    }

    pub fn bv_var(&mut self, name: &str, width: u32) -> Result<TermId, TermError> {
        self.var(name, Sort::BitVec(width))
    }

    pub fn constant(&mut self, c: BvConst) -> Result<TermId, TermError> {
        self.mk_term(Kind::Const(c))
    }

    pub fn zero(&mut self, width: u32) -> Result<TermId, TermError> {
        self.constant(BvConst::zero(width))
    }

    pub fn bool_const(&mut self, b: bool) -> TermId {
        self.mk_term(Kind::BoolConst(b))
            .expect("Boolean constants are always well-sorted")
    }

    pub fn concat(&mut self, hi: TermId, lo: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::Concat(hi, lo))
    }

    /// Right-nested concatenation of `segments` (most significant first).
    pub fn concat_all(&mut self, segments: &[TermId]) -> Result<TermId, TermError> {
        let (&last, rest) = segments
            .split_last()
            .ok_or_else(|| TermError::WidthMismatch("empty concatenation".into()))?;
        let mut acc = last;
        for &s in rest.iter().rev() {
            acc = self.concat(s, acc)?;
        }
        Ok(acc)
    }

    pub fn add(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::BvAdd(a, b))
    }

    pub fn mul(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::BvMul(a, b))
    }

    pub fn bvand(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::BvAnd(a, b))
    }

    pub fn bvor(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::BvOr(a, b))
    }

    pub fn bvxor(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::BvXor(a, b))
    }

    pub fn bvnot(&mut self, a: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::BvNot(a))
    }

    pub fn extract(&mut self, hi: u32, lo: u32, arg: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::Extract { hi, lo, arg })
    }

    pub fn eq(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::Eq(a, b))
    }

    pub fn not(&mut self, a: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::Not(a))
    }

    pub fn and(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::And(a, b))
    }

    pub fn or(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::Or(a, b))
    }

    pub fn xor(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk_term(Kind::Xor(a, b))
    }

    /// `0^(w - len(t)) • t`, or `t` itself when the widths agree.
    pub fn zero_ext(&mut self, t: TermId, w: u32) -> Result<TermId, TermError> {
        let tw = self.width(t);
        if w < tw {
            return Err(TermError::WidthMismatch(format!(
                "cannot zero-extend width {tw} to {w}"
            )));
        }
        if w == tw {
            return Ok(t);
        }
        let pad = self.zero(w - tw)?;
        self.concat(pad, t)
    }

    /// True iff `t` is a bit-vector constant whose bits are all zero.
    pub fn is_zero_const(&self, t: TermId) -> bool {
        matches!(self.kind(t), Kind::Const(c) if c.is_zero())
    }

    pub fn flatten_concat(&self, t: TermId) -> ConcatChain {
        let mut segments = Vec::new();
        let mut stack = vec![t];
        while let Some(u) = stack.pop() {
            match *self.kind(u) {
                Kind::Concat(hi, lo) => {
                    stack.push(lo);
                    stack.push(hi);
                }
                _ => segments.push(u),
            }
        }
        ConcatChain { segments }
    }

    pub fn flatten_add(&self, t: TermId) -> SumChain {
        let mut summands = Vec::new();
        let mut stack = vec![t];
        while let Some(u) = stack.pop() {
            match *self.kind(u) {
                Kind::BvAdd(a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
                _ => summands.push(u),
            }
        }
        SumChain { summands }
    }

    /// Recognizes `(0^w • a) * (0^w • b)` with `len(a) = len(b) = w`, in
    /// either operand order. Returns `(a, b, w)`.
    pub fn match_partial_product(&self, t: TermId) -> Option<(TermId, TermId, u32)> {
        let Kind::BvMul(p, q) = *self.kind(t) else {
            return None;
        };
        let (a, wa) = self.match_half_padded(p)?;
        let (b, wb) = self.match_half_padded(q)?;
        (wa == wb).then_some((a, b, wa))
    }

    fn match_half_padded(&self, t: TermId) -> Option<(TermId, u32)> {
        let Kind::Concat(hi, lo) = *self.kind(t) else {
            return None;
        };
        let w = self.width(lo);
        (self.is_zero_const(hi) && self.width(hi) == w).then_some((lo, w))
    }

    /// Every distinct node reachable from `root`, children before parents.
    pub fn subterms(&self, root: TermId) -> Vec<TermId> {
        self.subterms_of(std::slice::from_ref(&root))
    }

    /// Post-order over the union of the DAGs below `roots`; each node once.
    pub fn subterms_of(&self, roots: &[TermId]) -> Vec<TermId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        for &root in roots {
            self.post_order_into(root, &mut seen, &mut out);
        }
        out
    }

    pub(crate) fn post_order_into(&self, root: TermId, seen: &mut [bool], out: &mut Vec<TermId>) {
        if seen[root.index()] {
            return;
        }
        // (node, children already pushed)
        let mut stack = vec![(root, false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                if !seen[t.index()] {
                    seen[t.index()] = true;
                    out.push(t);
                }
                continue;
            }
            if seen[t.index()] {
                continue;
            }
            stack.push((t, true));
            let kids: Vec<TermId> = self.kind(t).children().into_iter().collect();
            for c in kids.into_iter().rev() {
                if !seen[c.index()] {
                    stack.push((c, false));
                }
            }
        }
    }

    /// Free variables below `roots` as `(name, width)`, sorted by name.
    pub fn free_vars(&self, roots: &[TermId]) -> Vec<(String, u32)> {
        let mut vars: Vec<(String, u32)> = self
            .subterms_of(roots)
            .into_iter()
            .filter_map(|t| match self.kind(t) {
                Kind::Var(name) => Some((name.clone(), self.width(t))),
                _ => None,
            })
            .collect();
        vars.sort();
        vars
    }

    /// Compact S-expression rendering without sharing, for diagnostics.
    pub fn display(&self, t: TermId) -> String {
        let mut s = String::new();
        self.render_into(t, &mut s);
        s
    }

    fn render_into(&self, t: TermId, s: &mut String) {
        use Kind::*;
        let bin = |s: &mut String, op: &str, a: TermId, b: TermId| {
            s.push('(');
            s.push_str(op);
            s.push(' ');
            self.render_into(a, s);
            s.push(' ');
            self.render_into(b, s);
            s.push(')');
        };
        match self.kind(t) {
            Var(name) => s.push_str(name),
            Const(c) => {
                s.push_str("#b");
                s.push_str(&c.to_binary_string());
            }
            BoolConst(b) => s.push_str(if *b { "true" } else { "false" }),
            Concat(a, b) => bin(s, "concat", *a, *b),
            BvAdd(a, b) => bin(s, "bvadd", *a, *b),
            BvMul(a, b) => bin(s, "bvmul", *a, *b),
            BvAnd(a, b) => bin(s, "bvand", *a, *b),
            BvOr(a, b) => bin(s, "bvor", *a, *b),
            BvXor(a, b) => bin(s, "bvxor", *a, *b),
            Eq(a, b) => bin(s, "=", *a, *b),
            And(a, b) => bin(s, "and", *a, *b),
            Or(a, b) => bin(s, "or", *a, *b),
            Xor(a, b) => bin(s, "xor", *a, *b),
            BvNot(a) => {
                s.push_str("(bvnot ");
                self.render_into(*a, s);
                s.push(')');
            }
            Not(a) => {
                s.push_str("(not ");
                self.render_into(*a, s);
                s.push(')');
            }
            Extract { hi, lo, arg } => {
                s.push_str(&format!("((_ extract {hi} {lo}) "));
                self.render_into(*arg, s);
                s.push(')');
            }
        }
    }
}
