//! Benchmark generator: long-multiplication decompositions with zeroed and
//! aliased blocks, and Wallace-tree multipliers, each asserted against
//! the word-level product.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::long::mk_partial_product;
use crate::recovery::Block;
use crate::smtlib::Script;
use crate::term::{BvConst, Sort, TermError, TermId, TermStore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

fn invalid(msg: impl Into<String>) -> GenError {
    GenError::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    /// Decomposition asserted different from the product.
    #[default]
    Unsat,
    /// Decomposition asserted equal to the product, plus a pinned input.
    Sat,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Unsat => "unsat",
            Polarity::Sat => "sat",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operand {
    X,
    Y,
}

/// A 1-based block of one operand, written `x2` or `y3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockRef {
    pub operand: Operand,
    pub index: usize,
}

impl BlockRef {
    /// Position in declaration order: all x blocks, then all y blocks.
    fn rank(self, k: usize) -> usize {
        match self.operand {
            Operand::X => self.index - 1,
            Operand::Y => k + self.index - 1,
        }
    }
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = match self.operand {
            Operand::X => 'x',
            Operand::Y => 'y',
        };
        write!(f, "{o}{}", self.index)
    }
}

impl FromStr for BlockRef {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, GenError> {
        let s = s.trim();
        let operand = match s.chars().next() {
            Some('x') => Operand::X,
            Some('y') => Operand::Y,
            _ => {
                return Err(invalid(format!(
                    "block reference `{s}` must start with x or y"
                )))
            }
        };
        let index: usize = s[1..]
            .parse()
            .map_err(|_| invalid(format!("block reference `{s}` needs a positive index")))?;
        if index == 0 {
            return Err(invalid(format!(
                "block reference `{s}`: indices start at 1"
            )));
        }
        Ok(BlockRef { operand, index })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockTag {
    Fresh,
    Zero,
    Alias(BlockRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongSpec {
    pub k: usize,
    pub w: u32,
    /// Least significant block first.
    pub x: Vec<BlockTag>,
    pub y: Vec<BlockTag>,
    pub seed: u64,
    pub polarity: Polarity,
}

impl LongSpec {
    pub fn fresh(k: usize, w: u32, seed: u64) -> Self {
        LongSpec {
            k,
            w,
            x: vec![BlockTag::Fresh; k],
            y: vec![BlockTag::Fresh; k],
            seed,
            polarity: Polarity::Unsat,
        }
    }

    fn tag_mut(&mut self, r: BlockRef) -> Result<&mut BlockTag, GenError> {
        if r.index > self.k {
            return Err(invalid(format!("block {r} out of range 1..={}", self.k)));
        }
        Ok(match r.operand {
            Operand::X => &mut self.x[r.index - 1],
            Operand::Y => &mut self.y[r.index - 1],
        })
    }

    pub fn set_zero(&mut self, r: BlockRef) -> Result<(), GenError> {
        *self.tag_mut(r)? = BlockTag::Zero;
        Ok(())
    }

    pub fn set_alias(&mut self, r: BlockRef, to: BlockRef) -> Result<(), GenError> {
        *self.tag_mut(r)? = BlockTag::Alias(to);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.k < 2 {
            return Err(invalid("at least 2 blocks are required"));
        }
        if self.w < 1 {
            return Err(invalid("block width must be positive"));
        }
        if self.x.len() != self.k || self.y.len() != self.k {
            return Err(invalid("one tag per block is required"));
        }
        for (operand, tags) in [(Operand::X, &self.x), (Operand::Y, &self.y)] {
            for (i, tag) in tags.iter().enumerate() {
                let here = BlockRef {
                    operand,
                    index: i + 1,
                };
                if let BlockTag::Alias(to) = tag {
                    if to.index > self.k {
                        return Err(invalid(format!("alias {here}={to} out of range")));
                    }
                    if to.rank(self.k) >= here.rank(self.k) {
                        return Err(invalid(format!(
                            "alias {here}={to} must refer to an earlier block"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads `key=value` lines: `blocks`, `block_width`, `zero` (comma
    /// list), `alias` (comma list of `a=b`), `seed`, `polarity`.
    pub fn from_manifest(text: &str) -> Result<Self, GenError> {
        let mut k = None;
        let mut w = None;
        let mut zeros = Vec::new();
        let mut aliases = Vec::new();
        let mut seed = 0;
        let mut polarity = Polarity::Unsat;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key=value", n + 1)))?;
            let value = value.trim();
            let num = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| invalid(format!("line {}: `{v}` is not a number", n + 1)))
            };
            match key.trim() {
                "kind" if value == "long" => {}
                "blocks" => k = Some(num(value)? as usize),
                "block_width" => w = Some(num(value)? as u32),
                "zero" => zeros = parse_list(value)?,
                "alias" => aliases = parse_aliases(value)?,
                "seed" => seed = num(value)?,
                "polarity" => {
                    polarity = match value {
                        "sat" => Polarity::Sat,
                        "unsat" => Polarity::Unsat,
                        _ => return Err(invalid(format!("line {}: unknown polarity", n + 1))),
                    }
                }
                other => return Err(invalid(format!("line {}: unknown key `{other}`", n + 1))),
            }
        }
        let k = k.ok_or_else(|| invalid("missing `blocks`"))?;
        let w = w.ok_or_else(|| invalid("missing `block_width`"))?;
        let mut spec = LongSpec::fresh(k, w, seed);
        spec.polarity = polarity;
        for z in zeros {
            spec.set_zero(z)?;
        }
        for (a, b) in aliases {
            spec.set_alias(a, b)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses `x1,y2,...`.
pub fn parse_list(s: &str) -> Result<Vec<BlockRef>, GenError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Parses `y2=x3,...`.
pub fn parse_aliases(s: &str) -> Result<Vec<(BlockRef, BlockRef)>, GenError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (a, b) = p
                .split_once('=')
                .ok_or_else(|| invalid(format!("alias `{p}` must look like y2=x3")))?;
            Ok((a.parse()?, b.parse()?))
        })
        .collect()
}

/// A partial product placed at a bit offset of one summand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placed {
    pub chain: usize,
    pub offset: u32,
    pub a: TermId,
    pub b: TermId,
}

/// How partial products are packed into concatenation summands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongLayout {
    pub w: u32,
    /// Width of every summand.
    pub width: u32,
    pub chains: usize,
    pub products: Vec<Placed>,
}

impl LongLayout {
    /// Greedy packing of products at block `index` (1-based) into chains:
    /// a product joins the first chain whose products all sit at least
    /// two indices away. `order` fixes the insertion order.
    fn pack(w: u32, width: u32, items: &[(usize, TermId, TermId)]) -> Self {
        let mut chains: Vec<Vec<usize>> = Vec::new();
        let mut products = Vec::with_capacity(items.len());
        for &(index, a, b) in items {
            let slot = chains
                .iter()
                .position(|c| c.iter().all(|&j| j.abs_diff(index) >= 2));
            let chain = match slot {
                Some(c) => c,
                None => {
                    chains.push(Vec::new());
                    chains.len() - 1
                }
            };
            chains[chain].push(index);
            products.push(Placed {
                chain,
                offset: (index as u32 - 1) * w,
                a,
                b,
            });
        }
        let mut layout = LongLayout {
            w,
            width,
            chains: chains.len(),
            products,
        };
        if layout.chains == 1 && layout.products.len() >= 2 {
            // keep a sum of at least two summands
            layout.products.last_mut().expect("non-empty").chain = 1;
            layout.chains = 2;
        }
        layout
    }

    /// Builds the sum of chains. Fails if two products of a chain overlap
    /// or a product does not fit.
    pub fn assemble(&self, store: &mut TermStore) -> Result<TermId, GenError> {
        let mut summands = Vec::new();
        for c in 0..self.chains {
            let mut items: Vec<&Placed> = self.products.iter().filter(|p| p.chain == c).collect();
            if items.is_empty() {
                continue;
            }
            items.sort_by_key(|p| p.offset);
            // segments from the least significant end
            let mut segs: Vec<TermId> = Vec::new();
            let mut at = 0u32;
            for p in items {
                if p.offset < at {
                    return Err(invalid("overlapping products in one summand"));
                }
                if p.offset > at {
                    segs.push(store.zero(p.offset - at)?);
                }
                segs.push(mk_partial_product(store, p.a, p.b)?);
                at = p.offset + 2 * self.w;
            }
            if at > self.width {
                return Err(invalid("product beyond the summand width"));
            }
            if at < self.width {
                segs.push(store.zero(self.width - at)?);
            }
            segs.reverse();
            summands.push(store.concat_all(&segs)?);
        }
        let mut it = summands.into_iter();
        let first = match it.next() {
            Some(f) => f,
            None => store.zero(self.width)?,
        };
        it.try_fold(first, |acc, s| store.add(acc, s).map_err(GenError::from))
    }
}

/// A generated long-multiplication script and what was planted in it.
#[derive(Debug, Clone)]
pub struct LongBenchmark {
    pub script: Script,
    pub x_blocks: Vec<Block>,
    pub y_blocks: Vec<Block>,
    /// `x` and `y` as concatenations of their blocks.
    pub x: TermId,
    pub y: TermId,
    pub decomposed: TermId,
    pub layout: LongLayout,
}

/// Word-level product at double width.
fn word_product(store: &mut TermStore, x: TermId, y: TermId) -> Result<TermId, TermError> {
    let n = store.width(x) + store.width(y);
    let xe = store.zero_ext(x, n)?;
    let ye = store.zero_ext(y, n)?;
    store.mul(xe, ye)
}

fn random_const(rng: &mut ChaCha8Rng, w: u32) -> BvConst {
    let v: u128 = rng.gen();
    BvConst::from_u128(v, w.min(128))
}

/// Asserts `decomposed` against `product` with the requested polarity.
fn assert_polarity(
    script: &mut Script,
    decomposed: TermId,
    product: TermId,
    polarity: Polarity,
    pin: Option<TermId>,
    rng: &mut ChaCha8Rng,
) -> Result<(), GenError> {
    let st = &mut script.store;
    let eq = st.eq(decomposed, product)?;
    match polarity {
        Polarity::Unsat => {
            let ne = st.not(eq)?;
            script.assertions.push(ne);
        }
        Polarity::Sat => {
            script.assertions.push(eq);
            if let Some(v) = pin {
                let w = st.width(v);
                let c = st.constant(random_const(rng, w))?;
                let pin = st.eq(v, c)?;
                script.assertions.push(pin);
            }
        }
    }
    script.trailing.push("(check-sat)".to_string());
    script.trailing.push("(exit)".to_string());
    Ok(())
}

pub fn gen_long(spec: &LongSpec) -> Result<LongBenchmark, GenError> {
    spec.validate()?;
    let (k, w) = (spec.k, spec.w);
    let mut script = Script::new();
    script.logic = Some("QF_BV".to_string());
    script
        .header
        .push(format!("(set-info :status {})", spec.polarity));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // resolve blocks in declaration order so aliases see their targets
    let mut resolved: Vec<Block> = Vec::with_capacity(2 * k);
    for (operand, tags) in [(Operand::X, &spec.x), (Operand::Y, &spec.y)] {
        for (i, tag) in tags.iter().enumerate() {
            let b = match tag {
                BlockTag::Fresh => {
                    let name = BlockRef {
                        operand,
                        index: i + 1,
                    }
                    .to_string();
                    Block::Term(script.declare(&name, Sort::BitVec(w))?)
                }
                BlockTag::Zero => Block::Zero,
                BlockTag::Alias(to) => resolved[to.rank(k)],
            };
            resolved.push(b);
        }
    }
    let x_blocks = resolved[..k].to_vec();
    let y_blocks = resolved[k..].to_vec();

    let mut items = Vec::new();
    for (i, xb) in x_blocks.iter().enumerate() {
        for (j, yb) in y_blocks.iter().enumerate() {
            if let (Block::Term(a), Block::Term(b)) = (xb, yb) {
                items.push((i + j + 1, *a, *b));
            }
        }
    }
    items.shuffle(&mut rng);
    let width = 2 * k as u32 * w;
    let layout = LongLayout::pack(w, width, &items);

    let st = &mut script.store;
    let decomposed = layout.assemble(st)?;
    let x = crate::preprocess::blocks_term(st, &x_blocks, w)?;
    let y = crate::preprocess::blocks_term(st, &y_blocks, w)?;
    let product = word_product(st, x, y)?;
    let pin = x_blocks.iter().chain(&y_blocks).find_map(|b| b.term());
    assert_polarity(
        &mut script,
        decomposed,
        product,
        spec.polarity,
        pin,
        &mut rng,
    )?;
    Ok(LongBenchmark {
        script,
        x_blocks,
        y_blocks,
        x,
        y,
        decomposed,
        layout,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WallaceSpec {
    pub n: u32,
    pub polarity: Polarity,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct WallaceBenchmark {
    pub script: Script,
    /// Single-bit extracts, least significant first.
    pub x_bits: Vec<TermId>,
    pub y_bits: Vec<TermId>,
    /// Concatenation of the `2n` output bits.
    pub outputs: TermId,
}

/// Column-wise reduction with full adders while three or more addends
/// remain and a half adder for the last two.
pub fn gen_wallace(spec: &WallaceSpec) -> Result<WallaceBenchmark, GenError> {
    let n = spec.n;
    if n < 2 {
        return Err(invalid("Wallace operands need at least 2 bits"));
    }
    let mut script = Script::new();
    script.logic = Some("QF_BV".to_string());
    script
        .header
        .push(format!("(set-info :status {})", spec.polarity));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = script.declare("x", Sort::BitVec(n))?;
    let y = script.declare("y", Sort::BitVec(n))?;
    let st = &mut script.store;
    let bits = |st: &mut TermStore, v: TermId| -> Result<Vec<TermId>, TermError> {
        (0..n).map(|i| st.extract(i, i, v)).collect()
    };
    let x_bits = bits(st, x)?;
    let y_bits = bits(st, y)?;

    let columns = 2 * n as usize;
    let mut queues: Vec<VecDeque<TermId>> = vec![VecDeque::new(); columns + 1];
    for (i, &xb) in x_bits.iter().enumerate() {
        for (j, &yb) in y_bits.iter().enumerate() {
            queues[i + j].push_back(st.bvand(xb, yb)?);
        }
    }
    let mut outputs = Vec::with_capacity(columns);
    for c in 0..columns {
        let mut q = std::mem::take(&mut queues[c]);
        while q.len() >= 3 {
            let (a, b, cc) = (
                q.pop_front().expect("len"),
                q.pop_front().expect("len"),
                q.pop_front().expect("len"),
            );
            let ab = st.bvxor(a, b)?;
            let sum = st.bvxor(ab, cc)?;
            let t1 = st.bvand(a, b)?;
            let t2 = st.bvand(b, cc)?;
            let t3 = st.bvand(cc, a)?;
            let t23 = st.bvor(t2, t3)?;
            let carry = st.bvor(t1, t23)?;
            q.push_back(sum);
            queues[c + 1].push_back(carry);
        }
        if q.len() == 2 {
            let (a, b) = (q[0], q[1]);
            let sum = st.bvxor(a, b)?;
            let carry = st.bvand(a, b)?;
            q = VecDeque::from([sum]);
            queues[c + 1].push_back(carry);
        }
        outputs.push(match q.pop_front() {
            Some(bit) => bit,
            None => st.zero(1)?,
        });
    }
    if !queues[columns].is_empty() {
        return Err(invalid("reduction carried out of the top column"));
    }
    let msb_first: Vec<TermId> = outputs.iter().rev().copied().collect();
    let outputs = st.concat_all(&msb_first)?;
    let product = word_product(st, x, y)?;
    assert_polarity(
        &mut script,
        outputs,
        product,
        spec.polarity,
        Some(x),
        &mut rng,
    )?;
    Ok(WallaceBenchmark {
        script,
        x_bits,
        y_bits,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{enumerate_status, Status};
    use crate::long::{match_long, LongOptions};
    use crate::preprocess::{preprocess, PreprocessOptions};
    use crate::smtlib::{parse, print};

    fn status(script: &Script) -> Status {
        let vars: Vec<(String, u32)> = script
            .declarations
            .iter()
            .map(|(n, s)| (n.clone(), s.width()))
            .collect();
        enumerate_status(&script.store, &script.all_assertions(), &vars, 16)
            .unwrap()
            .expect("small enough")
    }

    #[test]
    fn block_refs() {
        assert_eq!(
            "y3".parse::<BlockRef>().unwrap(),
            BlockRef {
                operand: Operand::Y,
                index: 3
            }
        );
        assert!("z1".parse::<BlockRef>().is_err());
        assert!("x0".parse::<BlockRef>().is_err());
        assert_eq!(parse_aliases("y2=x3").unwrap().len(), 1);
    }

    #[test]
    fn alias_must_point_back() {
        let mut spec = LongSpec::fresh(3, 2, 0);
        spec.set_alias("x1".parse().unwrap(), "x2".parse().unwrap())
            .unwrap();
        assert!(matches!(gen_long(&spec), Err(GenError::InvalidSpec(_))));
        assert!(gen_long(&LongSpec::fresh(1, 2, 0)).is_err());
    }

    #[test]
    fn planted_operands_recovered() {
        for seed in 0..10 {
            let b = gen_long(&LongSpec::fresh(3, 2, seed)).unwrap();
            let out = match_long(&b.script.store, b.decomposed, &LongOptions::default());
            assert!(
                out.matches
                    .iter()
                    .any(|m| m.same_operands_up_to_swap(&b.x_blocks, &b.y_blocks)),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn zero_and_shared_block_shape() {
        let text = "blocks=3\nblock_width=2\nzero=x2\nalias=y2=x3\nseed=4\n";
        let spec = LongSpec::from_manifest(text).unwrap();
        let b = gen_long(&spec).unwrap();
        assert_eq!(b.x_blocks[1], Block::Zero);
        assert_eq!(b.y_blocks[1], b.x_blocks[2]);
        let out = match_long(&b.script.store, b.decomposed, &LongOptions::default());
        assert!(out
            .matches
            .iter()
            .any(|m| m.same_operands_up_to_swap(&b.x_blocks, &b.y_blocks)));
    }

    #[test]
    fn repeated_product_array() {
        // x = v2•0•v2, y = 0•v1•v1 with v2 = x1 and v1 = y1
        let mut spec = LongSpec::fresh(3, 2, 1);
        spec.set_zero("x2".parse().unwrap()).unwrap();
        spec.set_alias("x3".parse().unwrap(), "x1".parse().unwrap())
            .unwrap();
        spec.set_alias("y2".parse().unwrap(), "y1".parse().unwrap())
            .unwrap();
        spec.set_zero("y3".parse().unwrap()).unwrap();
        let b = gen_long(&spec).unwrap();
        let out = match_long(&b.script.store, b.decomposed, &LongOptions::default());
        let lam = &out.matches[0].lambda;
        assert_eq!(lam.h(), Some(4));
        for i in 1..=4 {
            assert_eq!(lam.slot(i).len(), 1);
        }
    }

    #[test]
    fn unsat_and_sat_by_enumeration() {
        let b = gen_long(&LongSpec::fresh(2, 2, 3)).unwrap();
        assert_eq!(status(&b.script), Status::Unsat);
        let mut spec = LongSpec::fresh(2, 2, 3);
        spec.polarity = Polarity::Sat;
        assert!(status(&gen_long(&spec).unwrap().script).is_sat());
    }

    #[test]
    fn wallace_small() {
        for n in 2..=7 {
            let b = gen_wallace(&WallaceSpec {
                n,
                polarity: Polarity::Unsat,
                seed: 0,
            })
            .unwrap();
            let (out, report) = preprocess(b.script.clone(), &PreprocessOptions::default());
            assert_eq!(report.assertions_emitted, 1, "n = {n}");
            assert_eq!(out.learned.len(), 1);
        }
        let b = gen_wallace(&WallaceSpec {
            n: 2,
            polarity: Polarity::Unsat,
            seed: 0,
        })
        .unwrap();
        assert_eq!(status(&b.script), Status::Unsat);
        let sat = gen_wallace(&WallaceSpec {
            n: 3,
            polarity: Polarity::Sat,
            seed: 9,
        })
        .unwrap();
        assert!(status(&sat.script).is_sat());
    }

    #[test]
    fn deterministic_output() {
        let a = print(&gen_long(&LongSpec::fresh(4, 3, 11)).unwrap().script);
        let b = print(&gen_long(&LongSpec::fresh(4, 3, 11)).unwrap().script);
        assert_eq!(a, b);
        assert!(parse(&a).is_ok());
    }
}
