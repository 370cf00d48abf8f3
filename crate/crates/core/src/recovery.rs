//! Operand recovery: rebuild candidate operands `x`, `y` from a partial
//! product array by scanning it from the top index down, guessing the
//! extreme blocks at each index and backtracking over ambiguous guesses.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::pp::{remove_one, PPArray, PartialProduct};
use crate::term::TermId;

/// One block of a recovered operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    /// Distinguished zero block, never confused with a term.
    Zero,
    Term(TermId),
}

impl Block {
    pub fn is_zero(self) -> bool {
        matches!(self, Block::Zero)
    }

    pub fn term(self) -> Option<TermId> {
        match self {
            Block::Zero => None,
            Block::Term(t) => Some(t),
        }
    }
}

/// Which matcher produced a [`Match`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchSource {
    Long,
    Wallace,
}

impl std::fmt::Display for MatchSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatchSource::Long => "long",
            MatchSource::Wallace => "wallace",
        })
    }
}

/// A pair of operand block vectors, least-significant block first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Operands {
    pub x: Vec<Block>,
    pub y: Vec<Block>,
}

/// A recognized multiplication `x * y` equal to `target`.
#[derive(Debug, Clone)]
pub struct Match {
    /// Least-significant block first.
    pub x_blocks: Vec<Block>,
    pub y_blocks: Vec<Block>,
    pub w: u32,
    pub source: MatchSource,
    pub target: TermId,
    /// The array the matcher extracted from `target`.
    pub lambda: Arc<PPArray>,
    /// Number of block widths that fully validated for `target`; more
    /// than one means the union policy contributed this match.
    pub width_candidates: usize,
}

impl Match {
    /// Operand blocks with the high zero blocks removed.
    pub fn trimmed_x(&self) -> &[Block] {
        trim_high_zeros(&self.x_blocks)
    }

    pub fn trimmed_y(&self) -> &[Block] {
        trim_high_zeros(&self.y_blocks)
    }

    /// True if the match's operands equal `(x, y)` or `(y, x)` once high
    /// zero blocks are trimmed on both sides.
    pub fn same_operands_up_to_swap(&self, x: &[Block], y: &[Block]) -> bool {
        let (x, y) = (trim_high_zeros(x), trim_high_zeros(y));
        (self.trimmed_x() == x && self.trimmed_y() == y)
            || (self.trimmed_x() == y && self.trimmed_y() == x)
    }
}

pub fn trim_high_zeros(v: &[Block]) -> &[Block] {
    let keep = v.iter().rposition(|b| !b.is_zero()).map_or(0, |i| i + 1);
    &v[..keep]
}

/// Default cap on backtracking swaps per array.
pub const DEFAULT_BACKTRACK_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("backtrack budget of {cap} swaps exhausted after {} matches", partial.len())]
pub struct BacktrackBudgetExceeded {
    pub cap: usize,
    pub partial: Vec<Operands>,
}

/// Working state of one recovery run. Vectors are indexed `1..=h`; slot 0
/// is unused so indices read the same as the block numbering.
#[derive(Debug, Clone)]
struct RecoveryState {
    h: usize,
    x: Vec<Block>,
    y: Vec<Block>,
    /// Unexplored alternative `(x_i, y_i)` at each index, if any.
    alternative: Vec<Option<(Block, Block)>>,
    lx: usize,
    ly: usize,
}

impl RecoveryState {
    /// Least non-zero indices over the assigned range `from..=h`.
    fn refresh_least(&mut self, from: usize) {
        let least = |v: &[Block]| (from..=self.h).find(|&j| !v[j].is_zero()).unwrap_or(self.h);
        self.lx = least(&self.x);
        self.ly = least(&self.y);
    }

    fn product(&self, xi: usize, yi: usize, w: u32) -> Option<PartialProduct> {
        match (self.x[xi], self.y[yi]) {
            (Block::Term(a), Block::Term(b)) => Some(PartialProduct::new(a, b, w)),
            _ => None,
        }
    }
}

/// Reconstructs every operand pair discovered by the backtracking scan.
///
/// Returns an empty set when the top slot is not a singleton. The returned
/// operands have `h` blocks each; their trailing zero blocks sum to
/// `l - 1`, one pair per split of those zeros.
pub fn get_mult_operands(
    lambda: &PPArray,
    backtrack_cap: usize,
) -> Result<Vec<Operands>, BacktrackBudgetExceeded> {
    let w = lambda.w();
    let (Some(h), Some(l_lambda)) = (lambda.h(), lambda.l()) else {
        return Ok(Vec::new());
    };
    let top = lambda.slot(h);
    if top.len() != 1 || !lambda.within_column_bounds() {
        return Ok(Vec::new());
    }

    let mut st = RecoveryState {
        h,
        x: vec![Block::Zero; h + 1],
        y: vec![Block::Zero; h + 1],
        alternative: vec![None; h + 1],
        lx: h,
        ly: h,
    };
    let (xh, yh) = (top[0].a(), top[0].b());
    st.x[h] = Block::Term(xh);
    st.y[h] = Block::Term(yh);

    if h == 1 {
        // a lone product has nothing to scan
        return Ok(vec![Operands {
            x: vec![Block::Term(xh)],
            y: vec![Block::Term(yh)],
        }]);
    }

    let mut found: Vec<Operands> = Vec::new();
    let mut swaps = 0usize;
    let mut i = h;

    loop {
        i -= 1;
        let mut advanced = step(&mut st, lambda, i, xh, yh, w);
        if advanced && i == 1 {
            let l = st.lx + st.ly - h;
            debug_assert_eq!(l, l_lambda);
            emit(&st, l, &mut found);
            advanced = false;
        }
        if !advanced {
            // most recent open decision above the current index
            let Some(back) = (i + 1..=h).find(|&j| st.alternative[j].is_some()) else {
                return Ok(dedup(found));
            };
            if swaps == backtrack_cap {
                return Err(BacktrackBudgetExceeded {
                    cap: backtrack_cap,
                    partial: dedup(found),
                });
            }
            swaps += 1;
            let (ax, ay) = st.alternative[back].take().expect("checked above");
            st.x[back] = ax;
            st.y[back] = ay;
            st.refresh_least(back);
            i = back;
        }
    }
}

/// Runs recovery on `lambda` and wraps each operand pair as a [`Match`].
/// The flag reports whether the backtrack budget ran out.
pub(crate) fn recover_matches(
    lambda: PPArray,
    backtrack_cap: usize,
    source: MatchSource,
    target: TermId,
) -> (Vec<Match>, bool) {
    let (ops, exhausted) = match get_mult_operands(&lambda, backtrack_cap) {
        Ok(ops) => (ops, false),
        Err(e) => (e.partial, true),
    };
    let w = lambda.w();
    let lambda = Arc::new(lambda);
    let matches = ops
        .into_iter()
        .map(|o| Match {
            x_blocks: o.x,
            y_blocks: o.y,
            w,
            source,
            target,
            lambda: Arc::clone(&lambda),
            width_candidates: 1,
        })
        .collect();
    (matches, exhausted)
}

/// Processes index `i`. Returns false when the scan has to backtrack.
fn step(
    st: &mut RecoveryState,
    lambda: &PPArray,
    i: usize,
    xh: TermId,
    yh: TermId,
    w: u32,
) -> bool {
    let h = st.h;
    let mut residue: Vec<PartialProduct> = lambda.slot(i).to_vec();
    for j in (i + 1..h).rev() {
        if let Some(pp) = st.product(j, h + i - j, w) {
            if !remove_one(&mut residue, &pp) {
                return false;
            }
        }
    }

    let sym = xh == yh;
    let assigned = match residue.as_slice() {
        [p, q] => {
            // {x_h*b, y_h*d}: x_i := d, y_i := b
            let pick =
                |px: &PartialProduct, py: &PartialProduct| Some((px.partner(xh)?, py.partner(yh)?));
            pick(p, q).or_else(|| pick(q, p)).map(|(b, d)| {
                let alt = sym.then_some((Block::Term(b), Block::Term(d)));
                (Block::Term(d), Block::Term(b), alt)
            })
        }
        [p] if *p == PartialProduct::new(xh, yh, w) => {
            // the lone product is x_h*y_i with y_i = y_h, or x_i*y_h with x_i = x_h
            Some((
                Block::Zero,
                Block::Term(yh),
                Some((Block::Term(xh), Block::Zero)),
            ))
        }
        [p] if p.contains(xh) => {
            let b = p.partner(xh).expect("contains");
            let alt = sym.then_some((Block::Term(b), Block::Zero));
            Some((Block::Zero, Block::Term(b), alt))
        }
        [p] if p.contains(yh) => {
            let b = p.partner(yh).expect("contains");
            Some((Block::Term(b), Block::Zero, None))
        }
        [] => Some((Block::Zero, Block::Zero, None)),
        _ => None,
    };
    let Some((xi, yi, alt)) = assigned else {
        return false;
    };
    st.x[i] = xi;
    st.y[i] = yi;
    st.alternative[i] = alt;
    if !xi.is_zero() {
        st.lx = i;
    }
    if !yi.is_zero() {
        st.ly = i;
    }
    if cfg!(debug_assertions) {
        check_column(st, lambda, i, w);
    }
    st.lx + st.ly > h
}

/// After a successful step at `i`, the consumed products are exactly
/// `{x_h*y_i, x_{h-1}*y_{i+1}, ..., x_i*y_h}` minus the zero blocks.
fn check_column(st: &RecoveryState, lambda: &PPArray, i: usize, w: u32) {
    let h = st.h;
    let expected: Vec<PartialProduct> = (i..=h)
        .filter_map(|j| st.product(j, h + i - j, w))
        .collect();
    debug_assert!(
        crate::pp::same_multiset(&expected, lambda.slot(i)),
        "column {i} not reproduced by the recovered blocks"
    );
}

fn emit(st: &RecoveryState, l: usize, found: &mut Vec<Operands>) {
    let x: Vec<Block> = st.x[1..].to_vec();
    let y: Vec<Block> = st.y[1..].to_vec();
    for o in 0..l {
        found.push(Operands {
            x: shift_to_trailing_zero_blocks(&x, o),
            y: shift_to_trailing_zero_blocks(&y, l - 1 - o),
        });
    }
}

fn dedup(found: Vec<Operands>) -> Vec<Operands> {
    let mut out: Vec<Operands> = Vec::with_capacity(found.len());
    for op in found {
        if !out.contains(&op) {
            out.push(op);
        }
    }
    out
}

/// Shifts `v` (least-significant block first) towards the low end so that
/// exactly `target` trailing zero blocks remain, zero-filling at the top.
///
/// Panics if `v` has fewer than `target` trailing zero blocks.
pub fn shift_to_trailing_zero_blocks(v: &[Block], target: usize) -> Vec<Block> {
    let trailing = v.iter().take_while(|b| b.is_zero()).count();
    assert!(
        trailing >= target,
        "operand has {trailing} trailing zero blocks, cannot keep {target}"
    );
    let by = trailing - target;
    let mut out: Vec<Block> = v[by..].to_vec();
    out.resize(v.len(), Block::Zero);
    out
}
