//! Wallace-tree matcher over single-bit gate networks.
//!
//! Each output bit is traced back through its xor tree. Non-xor inputs
//! are either carries of adders belonging to the previous bit, which must
//! be backed by that bit's xor frontier Δ, or bit products that go to Λ.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::long::MatchOutcome;
use crate::pp::{PPArray, PartialProduct};
use crate::recovery::{recover_matches, MatchSource};
use crate::term::{Kind, TermId, TermStore};

/// `(a∧b)∨(b∧c)∨(c∧a)` under any or-nesting and conjunct order.
pub fn match_carry_full(store: &TermStore, u: TermId) -> Option<(TermId, TermId, TermId)> {
    if store.width(u) != 1 || !matches!(store.kind(u), Kind::BvOr(..)) {
        return None;
    }
    let mut leaves = Vec::with_capacity(3);
    let mut stack = vec![u];
    while let Some(t) = stack.pop() {
        match *store.kind(t) {
            Kind::BvOr(p, q) => {
                stack.push(q);
                stack.push(p);
            }
            _ => leaves.push(t),
        }
        if leaves.len() > 3 {
            return None;
        }
    }
    let pairs: Vec<(TermId, TermId)> = leaves
        .iter()
        .map(|&l| match *store.kind(l) {
            Kind::BvAnd(p, q) => Some((p, q)),
            _ => None,
        })
        .collect::<Option<_>>()?;
    let [p0, p1, p2] = pairs[..] else {
        return None;
    };
    let same = |(a, b): (TermId, TermId), (c, d): (TermId, TermId)| {
        (a == c && b == d) || (a == d && b == c)
    };
    for (a, b) in [p0, (p0.1, p0.0)] {
        // the other two conjuncts are b∧c and c∧a for one c
        for (q, r) in [(p1, p2), (p2, p1)] {
            for c in [q.0, q.1] {
                if same(q, (b, c)) && same(r, (c, a)) {
                    return Some((a, b, c));
                }
            }
        }
    }
    None
}

/// `a∧b` on single bits. The same shape is a bit product; the caller
/// decides which one it is.
pub fn match_carry_half(store: &TermStore, u: TermId) -> Option<(TermId, TermId)> {
    match *store.kind(u) {
        Kind::BvAnd(a, b) if store.width(u) == 1 => Some((a, b)),
        _ => None,
    }
}

fn count(bag: &[TermId], t: TermId) -> usize {
    bag.iter().filter(|&&u| u == t).count()
}

/// Xor node of `a` and `b` if the store has one, in either child order.
fn find_xor(store: &TermStore, a: TermId, b: TermId) -> Option<TermId> {
    store
        .find(&Kind::BvXor(a, b))
        .or_else(|| store.find(&Kind::BvXor(b, a)))
}

/// True if every term of `need` (a multiset) occurs in `bag` often enough.
fn covers(bag: &[TermId], need: &[TermId]) -> bool {
    need.iter().all(|&t| count(bag, t) >= count(need, t))
}

/// Tries the full-adder carry `(a, b, c)` against Δ_{i−1}: some ordering
/// must have `a⊕b` and `(a⊕b)⊕c` on record. Queues the inputs and the
/// intermediate sum for removal on success.
fn consume_full(
    store: &TermStore,
    prev: &[TermId],
    removed: &mut Vec<TermId>,
    (a, b, c): (TermId, TermId, TermId),
) -> bool {
    for (p, q, r) in [(a, b, c), (b, c, a), (c, a, b)] {
        let Some(pq) = find_xor(store, p, q) else {
            continue;
        };
        let Some(pqr) = find_xor(store, pq, r) else {
            continue;
        };
        if covers(prev, &[p, q, r, pq]) && prev.contains(&pqr) {
            removed.extend([p, q, r, pq]);
            return true;
        }
    }
    false
}

fn consume_half(
    store: &TermStore,
    prev: &[TermId],
    removed: &mut Vec<TermId>,
    (a, b): (TermId, TermId),
) -> bool {
    let Some(ab) = find_xor(store, a, b) else {
        return false;
    };
    if covers(prev, &[a, b]) && prev.contains(&ab) {
        removed.extend([a, b]);
        return true;
    }
    false
}

/// Builds Λ (block width 1) from the output bits of `t`, or `None` if the
/// bits do not form an adder tree over bit products.
pub fn wallace_lambda(store: &TermStore, t: TermId) -> Option<PPArray> {
    let segments = store.flatten_concat(t).segments;
    if segments.len() < 2 || segments.iter().any(|&s| store.width(s) != 1) {
        return None;
    }
    let k = segments.len();
    let bit = |i: usize| segments[k - i];
    let mut lambda = PPArray::new(1);
    // delta[i] for i in 0..=k; delta[0] stays empty
    let mut delta: Vec<Vec<TermId>> = vec![Vec::new(); k + 1];
    for i in 1..=k {
        let ti = bit(i);
        delta[i].push(ti);
        // membership is judged against the whole of Δ_{i−1}; removals are
        // applied together once the bit is drained
        let mut removed = Vec::new();
        let mut work = BinaryHeap::from([Reverse(ti)]);
        while let Some(Reverse(u)) = work.pop() {
            let (lower, upper) = delta.split_at_mut(i);
            let prev = &lower[i - 1];
            let cur = &mut upper[0];
            if let Kind::BvXor(p, q) = *store.kind(u) {
                for c in [p, q] {
                    work.push(Reverse(c));
                    cur.push(c);
                }
            } else if store.is_zero_const(u) {
                // a constant-zero bit adds nothing
            } else if match_carry_full(store, u)
                .is_some_and(|abc| consume_full(store, prev, &mut removed, abc))
                || match_carry_half(store, u)
                    .is_some_and(|ab| consume_half(store, prev, &mut removed, ab))
            {
                // carry of an adder for the previous bit
            } else if let Kind::BvAnd(a, b) = *store.kind(u) {
                lambda.insert(i, PartialProduct::new(a, b, 1));
            } else {
                return None;
            }
        }
        let prev = &mut delta[i - 1];
        for t in removed {
            let pos = prev.iter().position(|&u| u == t)?;
            prev.swap_remove(pos);
        }
        if i >= 2 && delta[i - 1] != [bit(i - 1)] {
            return None;
        }
    }
    // nothing may carry out of the top bit
    if delta[k] != [bit(k)] {
        return None;
    }
    Some(lambda)
}

/// Recognizes `t` as a Wallace-tree product of two bit vectors.
pub fn match_wallace(store: &TermStore, t: TermId, backtrack_cap: usize) -> MatchOutcome {
    let Some(lambda) = wallace_lambda(store, t) else {
        return MatchOutcome::default();
    };
    let (matches, budget_exceeded) =
        recover_matches(lambda, backtrack_cap, MatchSource::Wallace, t);
    MatchOutcome {
        matches,
        budget_exceeded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::{Block, DEFAULT_BACKTRACK_CAP};

    fn bits(s: &mut TermStore, names: &[&str]) -> Vec<TermId> {
        names.iter().map(|n| s.bv_var(n, 1).unwrap()).collect()
    }

    #[test]
    fn carry_full_shapes() {
        let mut s = TermStore::new();
        let v = bits(&mut s, &["a", "b", "c"]);
        let (a, b, c) = (v[0], v[1], v[2]);
        let ab = s.bvand(a, b).unwrap();
        let bc = s.bvand(b, c).unwrap();
        let ca = s.bvand(c, a).unwrap();
        let inner = s.bvor(bc, ca).unwrap();
        let u = s.bvor(ab, inner).unwrap();
        assert_eq!(match_carry_full(&s, u), Some((a, b, c)));

        let left = s.bvor(ca, ab).unwrap();
        let u2 = s.bvor(left, bc).unwrap();
        let got = match_carry_full(&s, u2).unwrap();
        let mut got = [got.0, got.1, got.2];
        got.sort();
        assert_eq!(got, [a, b, c]);

        let two = s.bvor(ab, bc).unwrap();
        assert_eq!(match_carry_full(&s, two), None);
        let ba = s.bvand(b, a).unwrap();
        let wrong_inner = s.bvor(bc, ba).unwrap();
        let wrong = s.bvor(ab, wrong_inner).unwrap();
        assert_eq!(match_carry_full(&s, wrong), None);
    }

    #[test]
    fn carry_half_shapes() {
        let mut s = TermStore::new();
        let v = bits(&mut s, &["a", "b"]);
        let ab = s.bvand(v[0], v[1]).unwrap();
        assert_eq!(match_carry_half(&s, ab), Some((v[0], v[1])));
        let na = s.bvnot(v[0]).unwrap();
        assert_eq!(match_carry_half(&s, na), None);
    }

    #[test]
    fn two_bit_multiplier() {
        // x = x2•x1, y = y2•y1
        let mut s = TermStore::new();
        let v = bits(&mut s, &["x1", "x2", "y1", "y2"]);
        let (x1, x2, y1, y2) = (v[0], v[1], v[2], v[3]);
        let p11 = s.bvand(x1, y1).unwrap();
        let p21 = s.bvand(x2, y1).unwrap();
        let p12 = s.bvand(x1, y2).unwrap();
        let p22 = s.bvand(x2, y2).unwrap();
        let t2 = s.bvxor(p21, p12).unwrap();
        let h = s.bvand(p21, p12).unwrap();
        let t3 = s.bvxor(p22, h).unwrap();
        let t4 = s.bvand(p22, h).unwrap();
        let t = s.concat_all(&[t4, t3, t2, p11]).unwrap();
        let out = match_wallace(&s, t, DEFAULT_BACKTRACK_CAP);
        assert_eq!(out.matches.len(), 1);
        let m = &out.matches[0];
        let x = [Block::Term(x1), Block::Term(x2)];
        let y = [Block::Term(y1), Block::Term(y2)];
        assert!(m.same_operands_up_to_swap(&x, &y));

        // dropping the top bit leaves an unconsumed carry
        let trunc = s.concat_all(&[t3, t2, p11]).unwrap();
        assert!(match_wallace(&s, trunc, DEFAULT_BACKTRACK_CAP)
            .matches
            .is_empty());
    }

    #[test]
    fn lone_conjunction() {
        let mut s = TermStore::new();
        let v = bits(&mut s, &["x1", "y1"]);
        let p = s.bvand(v[0], v[1]).unwrap();
        let z = s.zero(1).unwrap();
        let t = s.concat(z, p).unwrap();
        let out = match_wallace(&s, t, DEFAULT_BACKTRACK_CAP);
        assert_eq!(out.matches.len(), 1);
        assert!(out.matches[0].same_operands_up_to_swap(&[Block::Term(v[0])], &[Block::Term(v[1])]));
    }

    #[test]
    fn wide_segment_rejected() {
        let mut s = TermStore::new();
        let a = s.bv_var("a", 2).unwrap();
        let b = s.bv_var("b", 1).unwrap();
        let t = s.concat(a, b).unwrap();
        assert!(wallace_lambda(&s, t).is_none());
    }
}
