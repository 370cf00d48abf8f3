use std::collections::BTreeSet;

use num_bigint::BigUint;
use proptest::prelude::*;

use mulmatch::benchgen::{gen_long, BlockRef, LongSpec, Operand, Polarity};
use mulmatch::eval::{
    check_pp_array, check_tautology, enumerate_status, eval, eval_reference, Assignment, Status,
    Verdict,
};
use mulmatch::long::mk_partial_product;
use mulmatch::preprocess::{build_tautology, collect_matches, preprocess, PreprocessOptions};
use mulmatch::smtlib::{parse, print};
use mulmatch::{
    get_mult_operands, match_long, Block, Kind, LongOptions, Match, PPArray, PartialProduct,
    TermId, TermStore,
};

/// One step of a random term program over a pool of same-width terms.
#[derive(Debug, Clone)]
enum Op {
    Add(usize, usize),
    Mul(usize, usize),
    And(usize, usize),
    Or(usize, usize),
    Xor(usize, usize),
    Not(usize),
    /// `extract` of `a•b` at a shift.
    Window(usize, usize, u32),
    /// `zero_ext` then `extract` back to width.
    Widen(usize, u32),
}

fn op() -> impl Strategy<Value = Op> {
    let i = any::<prop::sample::Index>();
    prop_oneof![
        (i.clone(), i.clone()).prop_map(|(a, b)| Op::Add(a.index(64), b.index(64))),
        (i.clone(), i.clone()).prop_map(|(a, b)| Op::Mul(a.index(64), b.index(64))),
        (i.clone(), i.clone()).prop_map(|(a, b)| Op::And(a.index(64), b.index(64))),
        (i.clone(), i.clone()).prop_map(|(a, b)| Op::Or(a.index(64), b.index(64))),
        (i.clone(), i.clone()).prop_map(|(a, b)| Op::Xor(a.index(64), b.index(64))),
        i.clone().prop_map(|a| Op::Not(a.index(64))),
        (i.clone(), i.clone(), 0u32..64).prop_map(|(a, b, s)| Op::Window(
            a.index(64),
            b.index(64),
            s
        )),
        (i, 0u32..64).prop_map(|(a, s)| Op::Widen(a.index(64), s)),
    ]
}

/// Builds the pool: three variables, one constant, then one term per op.
fn build(w: u32, c: u128, ops: &[Op]) -> (TermStore, Vec<TermId>) {
    let mut s = TermStore::new();
    let mut pool = vec![
        s.bv_var("x", w).unwrap(),
        s.bv_var("y", w).unwrap(),
        s.bv_var("z", w).unwrap(),
        s.constant(mulmatch::term::BvConst::from_u128(c, w))
            .unwrap(),
    ];
    for op in ops {
        let n = pool.len();
        let p = |i: usize| pool[i % n];
        let t = match *op {
            Op::Add(a, b) => s.add(p(a), p(b)),
            Op::Mul(a, b) => s.mul(p(a), p(b)),
            Op::And(a, b) => s.bvand(p(a), p(b)),
            Op::Or(a, b) => s.bvor(p(a), p(b)),
            Op::Xor(a, b) => s.bvxor(p(a), p(b)),
            Op::Not(a) => s.bvnot(p(a)),
            Op::Window(a, b, sh) => {
                let lo = sh % (w + 1);
                let ab = s.concat(p(a), p(b)).unwrap();
                s.extract(lo + w - 1, lo, ab)
            }
            Op::Widen(a, sh) => {
                let lo = sh % (w + 1);
                let e = s.zero_ext(p(a), 2 * w).unwrap();
                s.extract(lo + w - 1, lo, e)
            }
        }
        .unwrap();
        pool.push(t);
    }
    (s, pool)
}

fn mask(w: u32) -> u128 {
    if w >= 128 {
        u128::MAX
    } else {
        (1u128 << w) - 1
    }
}

fn assignment(w: u32, x: u128, y: u128, z: u128) -> Assignment {
    let mut a = Assignment::new();
    a.set("x", x & mask(w));
    a.set("y", y & mask(w));
    a.set("z", z & mask(w));
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hash_consing(w in 1u32..=16, c in any::<u128>(), ops in prop::collection::vec(op(), 1..24)) {
        let (mut s, pool) = build(w, c, &ops);
        let before = s.len();
        // replaying every node into the same store creates nothing
        let again: Vec<TermId> = pool.iter().map(|&t| s.mk_term(s.kind(t).clone()).unwrap()).collect();
        prop_assert_eq!(&again, &pool);
        prop_assert_eq!(s.len(), before);
        // distinct ids have distinct kinds
        let kinds: BTreeSet<String> = (0..pool.len()).map(|i| format!("{:?}", s.kind(pool[i]))).collect();
        let ids: BTreeSet<TermId> = pool.iter().copied().collect();
        prop_assert_eq!(kinds.len(), ids.len());
    }

    #[test]
    fn eval_matches_reference(
        w in prop_oneof![1u32..=8, 9u32..=64],
        c in any::<u128>(),
        ops in prop::collection::vec(op(), 1..24),
        x in any::<u128>(), y in any::<u128>(), z in any::<u128>(),
    ) {
        let (s, pool) = build(w, c, &ops);
        let a = assignment(w, x, y, z);
        for &t in &pool {
            let fast = eval(&s, t, &a).unwrap();
            let slow = eval_reference(&s, t, &a).unwrap();
            prop_assert_eq!(BigUint::from(fast), slow);
        }
    }

    #[test]
    fn subterms_visit_each_node_once(w in 1u32..=8, c in any::<u128>(), ops in prop::collection::vec(op(), 1..24)) {
        let (s, pool) = build(w, c, &ops);
        let root = *pool.last().unwrap();
        let visited = s.subterms(root);
        let distinct: BTreeSet<TermId> = visited.iter().copied().collect();
        prop_assert_eq!(visited.len(), distinct.len());
        // reachability computed independently by a worklist
        let mut seen = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(t) = stack.pop() {
            if seen.insert(t) {
                stack.extend(s.kind(t).children());
            }
        }
        prop_assert_eq!(distinct, seen);
    }

    #[test]
    fn zero_ext_preserves_value(w in 1u32..=8, extra in 0u32..=8, c in any::<u128>(), ops in prop::collection::vec(op(), 1..12), x in any::<u128>(), y in any::<u128>(), z in any::<u128>()) {
        let (mut s, pool) = build(w, c, &ops);
        let t = *pool.last().unwrap();
        let e = s.zero_ext(t, w + extra).unwrap();
        prop_assert_eq!(s.width(e), w + extra);
        let a = assignment(w, x, y, z);
        prop_assert_eq!(eval(&s, e, &a).unwrap(), eval(&s, t, &a).unwrap());
    }

    #[test]
    fn flatten_round_trip(ws in prop::collection::vec(1u32..=3, 2..5), order in any::<u64>()) {
        // segments are fresh variables; the chain is built right-nested
        let mut s = TermStore::new();
        let segs: Vec<TermId> = ws.iter().enumerate().map(|(i, &w)| s.bv_var(&format!("s{i}"), w).unwrap()).collect();
        let mut t = *segs.last().unwrap();
        for &seg in segs.iter().rev().skip(1) {
            t = s.concat(seg, t).unwrap();
        }
        let chain = s.flatten_concat(t);
        prop_assert_eq!(&chain.segments, &segs);
        // left fold rebuild is a different term with the same value
        let mut left = segs[0];
        for &seg in &segs[1..] {
            left = s.concat(left, seg).unwrap();
        }
        let same = s.eq(left, t).unwrap();
        prop_assert_eq!(check_tautology(&s, same, 12, 0, 0), Verdict::Proved);

        // sums rebuilt in any order evaluate the same
        let w = ws[0];
        let summands: Vec<TermId> = (0..ws.len()).map(|i| s.bv_var(&format!("a{i}"), w).unwrap()).collect();
        let mut sum = summands[0];
        for &x in &summands[1..] {
            sum = s.add(sum, x).unwrap();
        }
        let mut flat = s.flatten_add(sum).summands;
        prop_assert_eq!(&flat, &summands);
        let n = flat.len();
        flat.rotate_left((order as usize) % n);
        let mut rebuilt = flat[0];
        for &x in &flat[1..] {
            rebuilt = s.add(x, rebuilt).unwrap();
        }
        let same = s.eq(rebuilt, sum).unwrap();
        prop_assert_eq!(check_tautology(&s, same, 12, 0, 0), Verdict::Proved);
    }
}

/// Spec with tags drawn from `codes`: 0..=5 fresh, 6..=7 zero, else alias.
fn spec_from(k: usize, w: u32, seed: u64, codes: &[u8], picks: &[prop::sample::Index]) -> LongSpec {
    let mut spec = LongSpec::fresh(k, w, seed);
    let refs: Vec<BlockRef> = [Operand::X, Operand::Y]
        .into_iter()
        .flat_map(|operand| (1..=k).map(move |index| BlockRef { operand, index }))
        .collect();
    for (i, &r) in refs.iter().enumerate() {
        match codes[i] {
            0..=5 => {}
            6 | 7 => spec.set_zero(r).unwrap(),
            _ if i > 0 => spec.set_alias(r, refs[picks[i].index(i)]).unwrap(),
            _ => {}
        }
    }
    spec
}

fn long_spec() -> impl Strategy<Value = LongSpec> {
    (2usize..=4, 1u32..=3, 0u64..10).prop_flat_map(|(k, w, seed)| {
        (
            prop::collection::vec(0u8..10, 2 * k),
            prop::collection::vec(any::<prop::sample::Index>(), 2 * k),
        )
            .prop_map(move |(codes, picks)| spec_from(k, w, seed, &codes, &picks))
    })
}

/// Operand pairs of a match set, unordered within each pair.
fn operand_set(ms: &[Match]) -> BTreeSet<(Vec<Block>, Vec<Block>)> {
    ms.iter()
        .map(|m| {
            let (x, y) = (m.trimmed_x().to_vec(), m.trimmed_y().to_vec());
            if x <= y {
                (x, y)
            } else {
                (y, x)
            }
        })
        .collect()
}

fn free_bits(s: &TermStore, t: TermId) -> u32 {
    s.free_vars(&[t]).iter().map(|(_, w)| w).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn generated_matches_are_sound(spec in long_spec()) {
        let bench = gen_long(&spec).unwrap();
        let mut store = bench.script.store.clone();
        let matches = collect_matches(&store, &[bench.decomposed], &PreprocessOptions::default());
        for m in &matches {
            prop_assert!(check_pp_array(m, &m.lambda));
            let eq = build_tautology(&mut store, m).unwrap();
            let verdict = check_tautology(&store, eq, 14, 200, 1);
            prop_assert!(!verdict.is_falsified(), "{:?}", verdict);
            if free_bits(&store, eq) <= 14 {
                prop_assert_eq!(verdict, Verdict::Proved);
            }
        }
    }

    #[test]
    fn summand_order_invariance(spec in long_spec(), rot in any::<usize>(), flip in any::<u64>()) {
        let bench = gen_long(&spec).unwrap();
        let mut store = bench.script.store.clone();
        let base = match_long(&store, bench.decomposed, &LongOptions::default()).matches;
        // permute summands and swap operands inside every other product
        let mut summands = store.flatten_add(bench.decomposed).summands;
        let n = summands.len();
        summands.rotate_left(rot % n);
        let mut rebuilt = Vec::with_capacity(n);
        for (i, &c) in summands.iter().enumerate() {
            let mut segs = store.flatten_concat(c).segments;
            for seg in segs.iter_mut() {
                if let Some((a, b, _)) = store.match_partial_product(*seg) {
                    if (flip >> (i % 64)) & 1 == 1 {
                        *seg = mk_partial_product(&mut store, b, a).unwrap();
                    }
                }
            }
            rebuilt.push(store.concat_all(&segs).unwrap());
        }
        let mut t = rebuilt[0];
        for &c in &rebuilt[1..] {
            t = store.add(c, t).unwrap();
        }
        let permuted = match_long(&store, t, &LongOptions::default()).matches;
        prop_assert_eq!(operand_set(&base), operand_set(&permuted));
    }

    #[test]
    fn budget_monotonicity(n in 2usize..=5, slots in prop::collection::vec(0usize..3, 2..6), cap in 0usize..64) {
        // ambiguous arrays over few distinct blocks
        let mut s = TermStore::new();
        let v: Vec<TermId> = (0..n).map(|i| s.bv_var(&format!("v{i}"), 2).unwrap()).collect();
        let mut lam = PPArray::new(2);
        for (i, &c) in slots.iter().enumerate() {
            for j in 0..=c {
                lam.insert(i + 1, PartialProduct::new(v[j % n], v[(i + j + 1) % n], 2));
            }
        }
        let small = match get_mult_operands(&lam, cap) {
            Ok(v) => v,
            Err(e) => e.partial,
        };
        let large = match get_mult_operands(&lam, cap * 4 + 16) {
            Ok(v) => v,
            Err(e) => e.partial,
        };
        for o in &small {
            prop_assert!(large.contains(o));
        }
    }
}

#[test]
fn planted_operands_found_for_all_fresh_panel() {
    for k in [2, 3, 4] {
        for w in [1, 2, 4] {
            for seed in 0..10 {
                let bench = gen_long(&LongSpec::fresh(k, w, seed)).unwrap();
                let matches = collect_matches(
                    &bench.script.store,
                    &bench.script.assertions,
                    &PreprocessOptions::default(),
                );
                assert!(
                    matches
                        .iter()
                        .any(|m| m.same_operands_up_to_swap(&bench.x_blocks, &bench.y_blocks)),
                    "k={k} w={w} seed={seed}"
                );
            }
        }
    }
}

#[test]
fn small_unsat_benchmarks_are_unsat() {
    for (k, w) in [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)] {
        for seed in 0..3 {
            let bench = gen_long(&LongSpec::fresh(k, w, seed)).unwrap();
            let s = &bench.script;
            let vars: Vec<(String, u32)> = s
                .declarations
                .iter()
                .map(|(n, so)| (n.clone(), so.width()))
                .collect();
            let status = enumerate_status(&s.store, &s.assertions, &vars, 14).unwrap();
            assert_eq!(status, Some(Status::Unsat), "k={k} w={w} seed={seed}");
        }
    }
}

#[test]
fn preprocess_is_stable_and_idempotent() {
    let mut spec = LongSpec::fresh(3, 2, 4);
    spec.polarity = Polarity::Sat;
    let text = print(&gen_long(&spec).unwrap().script);
    let opts = PreprocessOptions::default();
    let (a, ra) = preprocess(parse(&text).unwrap(), &opts);
    let (b, _) = preprocess(parse(&text).unwrap(), &opts);
    let once = print(&a);
    assert_eq!(once, print(&b));
    assert!(ra.assertions_emitted >= 1);
    let (twice, r2) = preprocess(parse(&once).unwrap(), &opts);
    assert_eq!(r2.assertions_emitted, 0);
    assert_eq!(print(&twice), once);
    assert!(matches!(a.store.kind(a.learned[0].term), Kind::Eq(..)));
}
