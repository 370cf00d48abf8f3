//! Long-multiplication matcher: a sum of concatenations whose segments are
//! zero constants or block partial products `(0^w•a)*(0^w•b)`.

use std::collections::BTreeSet;

use crate::pp::{PPArray, PartialProduct};
use crate::recovery::{recover_matches, Match, MatchSource, DEFAULT_BACKTRACK_CAP};
use crate::term::{ConcatChain, Kind, TermError, TermId, TermStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LongOptions {
    /// Treat a bare concatenation as a one-summand sum.
    pub allow_single_summand: bool,
    pub backtrack_cap: usize,
}

impl Default for LongOptions {
    fn default() -> Self {
        LongOptions {
            allow_single_summand: false,
            backtrack_cap: DEFAULT_BACKTRACK_CAP,
        }
    }
}

/// Matches found for one term, plus whether recovery hit its budget.
#[derive(Debug, Clone, Default)]
pub struct MatchOutcome {
    pub matches: Vec<Match>,
    pub budget_exceeded: bool,
}

/// Builds the partial product term `(0^w•a)*(0^w•b)` for `w`-bit blocks.
pub fn mk_partial_product(
    store: &mut TermStore,
    a: TermId,
    b: TermId,
) -> Result<TermId, TermError> {
    let w = store.width(a);
    let pa = store.zero_ext(a, 2 * w)?;
    let pb = store.zero_ext(b, 2 * w)?;
    store.mul(pa, pb)
}

/// Operand widths of every segment shaped like a partial product.
pub fn infer_block_widths(store: &TermStore, chains: &[ConcatChain]) -> BTreeSet<u32> {
    chains
        .iter()
        .flat_map(|c| c.segments.iter())
        .filter_map(|&s| store.match_partial_product(s).map(|(_, _, w)| w))
        .collect()
}

/// Places every partial product of `chains` into Λ for block width `w`.
/// Fails if a segment is neither zero nor a `w`-block product, or if a
/// product lands at an offset that is not a multiple of `w`.
pub fn build_lambda(store: &TermStore, chains: &[ConcatChain], w: u32) -> Option<PPArray> {
    let mut lambda = PPArray::new(w);
    for chain in chains {
        let mut offset = 0u32;
        for &seg in chain.segments.iter().rev() {
            let len = store.width(seg);
            if !store.is_zero_const(seg) {
                match store.match_partial_product(seg) {
                    Some((a, b, pw)) if pw == w && offset.is_multiple_of(w) => {
                        let index = (offset / w) as usize + 1;
                        lambda.insert(index, PartialProduct::new(a, b, w));
                    }
                    _ => return None,
                }
            }
            offset += len;
        }
    }
    Some(lambda)
}

/// Recognizes `t` as a long multiplication and recovers its operands,
/// trying every block width suggested by the segments.
pub fn match_long(store: &TermStore, t: TermId, opts: &LongOptions) -> MatchOutcome {
    let is_sum = matches!(store.kind(t), Kind::BvAdd(..));
    let is_concat = matches!(store.kind(t), Kind::Concat(..));
    if !(is_sum || opts.allow_single_summand && is_concat) {
        return MatchOutcome::default();
    }
    let chains: Vec<ConcatChain> = store
        .flatten_add(t)
        .summands
        .into_iter()
        .map(|s| store.flatten_concat(s))
        .collect();

    let mut out = MatchOutcome::default();
    let mut validated = 0usize;
    for w in infer_block_widths(store, &chains) {
        let Some(lambda) = build_lambda(store, &chains, w) else {
            continue;
        };
        validated += 1;
        let (found, exhausted) = recover_matches(lambda, opts.backtrack_cap, MatchSource::Long, t);
        out.budget_exceeded |= exhausted;
        out.matches.extend(found);
    }
    for m in &mut out.matches {
        m.width_candidates = validated;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::check_pp_array;
    use crate::recovery::Block;

    struct Example {
        store: TermStore,
        t: TermId,
        vars: Vec<TermId>,
    }

    fn vars(s: &mut TermStore, names: &[&str], w: u32) -> Vec<TermId> {
        names.iter().map(|n| s.bv_var(n, w).unwrap()).collect()
    }

    fn sum(s: &mut TermStore, summands: &[TermId]) -> TermId {
        summands[1..]
            .iter()
            .fold(summands[0], |acc, &x| s.add(acc, x).unwrap())
    }

    /// v3..v1, u3..u1 of width 2; five summands.
    fn three_blocks() -> Example {
        let mut s = TermStore::new();
        let v = vars(&mut s, &["v1", "v2", "v3", "u1", "u2", "u3"], 2);
        let (v1, v2, v3, u1, u2, u3) = (v[0], v[1], v[2], v[3], v[4], v[5]);
        let mut pp = |a, b| mk_partial_product(&mut s, a, b).unwrap();
        let (p33, p31, p11) = (pp(v3, u3), pp(v3, u1), pp(v1, u1));
        let (p23, p21, p32, p12) = (pp(v2, u3), pp(v2, u1), pp(v3, u2), pp(v1, u2));
        let (p22, p13) = (pp(v2, u2), pp(v1, u3));
        let z2 = s.zero(2).unwrap();
        let z4 = s.zero(4).unwrap();
        let c1 = s.concat_all(&[p33, p31, p11]).unwrap();
        let c2 = s.concat_all(&[z2, p23, p21, z2]).unwrap();
        let c3 = s.concat_all(&[z2, p32, p12, z2]).unwrap();
        let c4 = s.concat_all(&[z4, p22, z4]).unwrap();
        let c5 = s.concat_all(&[z4, p13, z4]).unwrap();
        let t = sum(&mut s, &[c1, c2, c3, c4, c5]);
        Example {
            store: s,
            t,
            vars: v,
        }
    }

    /// x = v2•0•v1, y = u2•v2•u1.
    fn zero_and_shared_blocks() -> Example {
        let mut s = TermStore::new();
        let v = vars(&mut s, &["v1", "v2", "u1", "u2"], 2);
        let (v1, v2, u1, u2) = (v[0], v[1], v[2], v[3]);
        let mut pp = |a, b| mk_partial_product(&mut s, a, b).unwrap();
        let (p12, p11, p22, p21, p2v, p1v) = (
            pp(v1, u2),
            pp(v1, u1),
            pp(v2, u2),
            pp(v2, u1),
            pp(v2, v2),
            pp(v1, v2),
        );
        let z2 = s.zero(2).unwrap();
        let z4 = s.zero(4).unwrap();
        let c1 = s.concat_all(&[z4, p12, p11]).unwrap();
        let c2 = s.concat_all(&[p22, p21, z4]).unwrap();
        let c3 = s.concat_all(&[z2, p2v, p1v, z2]).unwrap();
        let t = sum(&mut s, &[c1, c2, c3]);
        Example {
            store: s,
            t,
            vars: v,
        }
    }

    fn terms(ids: &[TermId]) -> Vec<Block> {
        ids.iter().map(|&t| Block::Term(t)).collect()
    }

    #[test]
    fn three_block_lambda_and_match() {
        let ex = three_blocks();
        let s = &ex.store;
        let (v1, v2, v3, u1, u2, u3) = (
            ex.vars[0], ex.vars[1], ex.vars[2], ex.vars[3], ex.vars[4], ex.vars[5],
        );
        let out = match_long(s, ex.t, &LongOptions::default());
        assert!(!out.budget_exceeded);
        assert_eq!(out.matches.len(), 1);
        let m = &out.matches[0];
        let lam = &m.lambda;
        let p = |a, b| PartialProduct::new(a, b, 2);
        let want: [Vec<PartialProduct>; 5] = [
            vec![p(v1, u1)],
            vec![p(v2, u1), p(v1, u2)],
            vec![p(v3, u1), p(v2, u2), p(v1, u3)],
            vec![p(v2, u3), p(v3, u2)],
            vec![p(v3, u3)],
        ];
        for (i, slot) in want.iter().enumerate() {
            assert!(
                crate::pp::same_multiset(slot, lam.slot(i + 1)),
                "slot {}",
                i + 1
            );
        }
        assert!(m.same_operands_up_to_swap(&terms(&[v1, v2, v3]), &terms(&[u1, u2, u3])));
        assert_eq!(m.x_blocks.len(), 5);
        assert!(check_pp_array(m, lam));
    }

    #[test]
    fn zero_and_shared_block_match() {
        let ex = zero_and_shared_blocks();
        let (v1, v2, u1, u2) = (ex.vars[0], ex.vars[1], ex.vars[2], ex.vars[3]);
        let out = match_long(&ex.store, ex.t, &LongOptions::default());
        assert_eq!(out.matches.len(), 1);
        let m = &out.matches[0];
        let x = vec![Block::Term(v1), Block::Zero, Block::Term(v2)];
        assert!(m.same_operands_up_to_swap(&x, &terms(&[u1, v2, u2])));
        assert!(check_pp_array(m, &m.lambda));
    }

    #[test]
    fn plain_sum_rejected() {
        let mut s = TermStore::new();
        let x = s.bv_var("x", 4).unwrap();
        let y = s.bv_var("y", 4).unwrap();
        let t = s.add(x, y).unwrap();
        assert!(match_long(&s, t, &LongOptions::default())
            .matches
            .is_empty());
    }

    #[test]
    fn single_summand_needs_opt_in() {
        let mut s = TermStore::new();
        let a = s.bv_var("a", 2).unwrap();
        let b = s.bv_var("b", 2).unwrap();
        let p = mk_partial_product(&mut s, a, b).unwrap();
        let z = s.zero(2).unwrap();
        let t = s.concat(z, p).unwrap();
        assert!(match_long(&s, t, &LongOptions::default())
            .matches
            .is_empty());
        let opts = LongOptions {
            allow_single_summand: true,
            ..LongOptions::default()
        };
        assert_eq!(match_long(&s, t, &opts).matches.len(), 1);
    }

    #[test]
    fn misaligned_product_rejects_width() {
        // a 2-bit product sitting one bit up
        let mut s = TermStore::new();
        let a = s.bv_var("a", 2).unwrap();
        let b = s.bv_var("b", 2).unwrap();
        let p = mk_partial_product(&mut s, a, b).unwrap();
        let z1 = s.zero(1).unwrap();
        let c = s.concat_all(&[p, z1]).unwrap();
        let t = s.add(c, c).unwrap();
        let chains = vec![s.flatten_concat(c)];
        assert_eq!(infer_block_widths(&s, &chains), BTreeSet::from([2]));
        assert!(build_lambda(&s, &chains, 2).is_none());
        assert!(match_long(&s, t, &LongOptions::default())
            .matches
            .is_empty());
    }

    #[test]
    fn mixed_widths_tried_separately() {
        let mut s = TermStore::new();
        let a = s.bv_var("a", 2).unwrap();
        let b = s.bv_var("b", 2).unwrap();
        let c = s.bv_var("c", 4).unwrap();
        let d = s.bv_var("d", 4).unwrap();
        let p2 = mk_partial_product(&mut s, a, b).unwrap();
        let p4 = mk_partial_product(&mut s, c, d).unwrap();
        let z4 = s.zero(4).unwrap();
        let lhs = s.concat_all(&[z4, p2, p2]).unwrap();
        let rhs = s.concat_all(&[z4, p4]).unwrap();
        let chains = vec![s.flatten_concat(lhs), s.flatten_concat(rhs)];
        assert_eq!(infer_block_widths(&s, &chains), BTreeSet::from([2, 4]));
        assert!(build_lambda(&s, &chains, 2).is_none());
        assert!(build_lambda(&s, &chains, 4).is_none());
    }
}
