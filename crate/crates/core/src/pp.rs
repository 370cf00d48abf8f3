//! Partial products and the per-alignment array of them (Λ).

use std::fmt;

use crate::term::TermId;

/// Unordered product `a * b` of two `w`-bit blocks.
///
/// The pair is stored with the smaller id first so that `pp(a, b)` and
/// `pp(b, a)` compare and hash identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartialProduct {
    a: TermId,
    b: TermId,
    w: u32,
}

impl PartialProduct {
    pub fn new(a: TermId, b: TermId, w: u32) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        PartialProduct { a, b, w }
    }

    pub fn a(&self) -> TermId {
        self.a
    }

    pub fn b(&self) -> TermId {
        self.b
    }

    pub fn w(&self) -> u32 {
        self.w
    }

    pub fn contains(&self, t: TermId) -> bool {
        self.a == t || self.b == t
    }

    /// The operand paired with `t`, if `t` is one of the two.
    pub fn partner(&self, t: TermId) -> Option<TermId> {
        if self.a == t {
            Some(self.b)
        } else if self.b == t {
            Some(self.a)
        } else {
            None
        }
    }
}

impl fmt::Display for PartialProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*{}", self.a, self.b)
    }
}

/// Removes one occurrence of `pp` from the multiset `bag`.
pub(crate) fn remove_one(bag: &mut Vec<PartialProduct>, pp: &PartialProduct) -> bool {
    match bag.iter().position(|p| p == pp) {
        Some(pos) => {
            bag.swap_remove(pos);
            true
        }
        None => false,
    }
}

/// Multiset equality of two slices of partial products.
pub(crate) fn same_multiset(a: &[PartialProduct], b: &[PartialProduct]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort();
    b.sort();
    a == b
}

/// Λ: 1-indexed slots of partial-product multisets for one block width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PPArray {
    w: u32,
    // slots[0] holds index 1
    slots: Vec<Vec<PartialProduct>>,
}

impl PPArray {
    pub fn new(w: u32) -> Self {
        assert!(w >= 1, "block width must be positive");
        PPArray {
            w,
            slots: Vec::new(),
        }
    }

    pub fn w(&self) -> u32 {
        self.w
    }

    /// Inserts `pp` at 1-based alignment `index`.
    pub fn insert(&mut self, index: usize, pp: PartialProduct) {
        assert!(index >= 1, "alignment indices start at 1");
        debug_assert_eq!(pp.w(), self.w);
        if self.slots.len() < index {
            self.slots.resize_with(index, Vec::new);
        }
        self.slots[index - 1].push(pp);
    }

    /// Slot contents at 1-based `index`; empty beyond the populated range.
    pub fn slot(&self, index: usize) -> &[PartialProduct] {
        if index == 0 {
            return &[];
        }
        self.slots.get(index - 1).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Largest non-empty index.
    pub fn h(&self) -> Option<usize> {
        self.slots
            .iter()
            .rposition(|s| !s.is_empty())
            .map(|i| i + 1)
    }

    /// Smallest non-empty index.
    pub fn l(&self) -> Option<usize> {
        self.slots.iter().position(|s| !s.is_empty()).map(|i| i + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.h().is_none()
    }

    pub fn total(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    /// Column-shape bound of long multiplication: a product array spanning
    /// indices `l..=h` holds at most `min(i-l+1, h-i+1)` products at `i`.
    pub fn within_column_bounds(&self) -> bool {
        let (Some(l), Some(h)) = (self.l(), self.h()) else {
            return true;
        };
        (l..=h).all(|i| self.slot(i).len() <= (i - l + 1).min(h - i + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::TermStore;

    #[test]
    fn unordered_pair_equality() {
        let mut s = TermStore::new();
        let a = s.bv_var("a", 2).unwrap();
        let b = s.bv_var("b", 2).unwrap();
        assert_eq!(PartialProduct::new(a, b, 2), PartialProduct::new(b, a, 2));
        let mut bag = vec![PartialProduct::new(a, b, 2), PartialProduct::new(a, a, 2)];
        assert!(remove_one(&mut bag, &PartialProduct::new(b, a, 2)));
        assert_eq!(bag, vec![PartialProduct::new(a, a, 2)]);
        assert!(!remove_one(&mut bag, &PartialProduct::new(b, a, 2)));
    }

    #[test]
    fn bounds_and_column_shape() {
        let mut s = TermStore::new();
        let a = s.bv_var("a", 1).unwrap();
        let b = s.bv_var("b", 1).unwrap();
        let mut lam = PPArray::new(1);
        assert!(lam.is_empty());
        lam.insert(2, PartialProduct::new(a, b, 1));
        lam.insert(4, PartialProduct::new(a, a, 1));
        assert_eq!(lam.l(), Some(2));
        assert_eq!(lam.h(), Some(4));
        assert_eq!(lam.slot(3), &[]);
        assert_eq!(lam.slot(9), &[]);
        assert!(lam.within_column_bounds());
        lam.insert(4, PartialProduct::new(b, b, 1));
        assert!(!lam.within_column_bounds());
    }
}
