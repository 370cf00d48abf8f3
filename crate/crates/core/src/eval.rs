//! Concrete unsigned bit-vector semantics and the tautology oracle.
//!
//! [`Program`] compiles a DAG into a flat instruction list over `u128`
//! words and is what the oracle runs. [`eval_reference`] is a separate
//! recursive interpreter on arbitrary-precision integers; the two are
//! cross-checked in the test suite.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::pp::{same_multiset, PPArray, PartialProduct};
use crate::recovery::{Block, Match};
use crate::term::{Kind, TermId, TermStore};

/// Widest term the `u128` evaluator handles.
pub const MAX_EVAL_WIDTH: u32 = 128;

/// Default number of free bits below which the oracle enumerates.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u32 = 14;

/// Variable name to unsigned value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment(pub BTreeMap<String, u128>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, value: u128) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<u128> {
        self.0.get(name).copied()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                write!(f, ", ")?;
            }
            first = false;
            write!(f, "{k}={v:#x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("variable `{0}` is not bound by the assignment")]
    UnboundVariable(String),
    #[error("value {value:#x} does not fit variable `{name}` of width {width}")]
    ValueTooWide {
        name: String,
        value: u128,
        width: u32,
    },
    #[error("term of width {0} exceeds the evaluator limit of {MAX_EVAL_WIDTH} bits")]
    TooWide(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Proved,
    Falsified(Assignment),
    Skipped(String),
}

impl Verdict {
    pub fn is_proved(&self) -> bool {
        matches!(self, Verdict::Proved)
    }

    pub fn is_falsified(&self) -> bool {
        matches!(self, Verdict::Falsified(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Proved => write!(f, "proved"),
            Verdict::Falsified(a) => write!(f, "falsified at {a}"),
            Verdict::Skipped(why) => write!(f, "skipped ({why})"),
        }
    }
}

fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Var(usize),
    Const(u128),
    Concat { hi: usize, lo: usize, lo_width: u32 },
    Add(usize, usize, u128),
    Mul(usize, usize, u128),
    And(usize, usize),
    Or(usize, usize),
    Xor(usize, usize),
    Not(usize, u128),
    Extract { arg: usize, lo: u32, mask: u128 },
    Eq(usize, usize),
}

/// A DAG compiled to straight-line code over `u128` registers.
#[derive(Debug, Clone)]
pub struct Program {
    instrs: Vec<Instr>,
    roots: Vec<usize>,
    vars: Vec<(String, u32)>,
}

impl Program {
    pub fn compile(store: &TermStore, roots: &[TermId]) -> Result<Self, EvalError> {
        let order = store.subterms_of(roots);
        let mut reg: HashMap<TermId, usize> = HashMap::with_capacity(order.len());
        let mut vars: Vec<(String, u32)> = Vec::new();
        let mut instrs = Vec::with_capacity(order.len());
        for &t in &order {
            let width = store.width(t);
            if width > MAX_EVAL_WIDTH {
                return Err(EvalError::TooWide(width));
            }
            let r = |c: &TermId| reg[c];
            let m = mask(width);
            let ins = match store.kind(t) {
                Kind::Var(name) => {
                    vars.push((name.clone(), width));
                    Instr::Var(vars.len() - 1)
                }
                Kind::Const(c) => Instr::Const(c.value().to_u128().expect("width checked")),
                Kind::BoolConst(b) => Instr::Const(*b as u128),
                Kind::Concat(hi, lo) => Instr::Concat {
                    hi: r(hi),
                    lo: r(lo),
                    lo_width: store.width(*lo),
                },
                Kind::BvAdd(a, b) => Instr::Add(r(a), r(b), m),
                Kind::BvMul(a, b) => Instr::Mul(r(a), r(b), m),
                Kind::BvAnd(a, b) | Kind::And(a, b) => Instr::And(r(a), r(b)),
                Kind::BvOr(a, b) | Kind::Or(a, b) => Instr::Or(r(a), r(b)),
                Kind::BvXor(a, b) | Kind::Xor(a, b) => Instr::Xor(r(a), r(b)),
                Kind::BvNot(a) | Kind::Not(a) => Instr::Not(r(a), m),
                Kind::Extract { hi, lo, arg } => Instr::Extract {
                    arg: r(arg),
                    lo: *lo,
                    mask: mask(hi - lo + 1),
                },
                Kind::Eq(a, b) => Instr::Eq(r(a), r(b)),
            };
            reg.insert(t, instrs.len());
            instrs.push(ins);
        }
        let roots = roots.iter().map(|t| reg[t]).collect();
        Ok(Program {
            instrs,
            roots,
            vars,
        })
    }

    /// Free variables in register order.
    pub fn vars(&self) -> &[(String, u32)] {
        &self.vars
    }

    pub fn scratch(&self) -> Vec<u128> {
        vec![0; self.instrs.len()]
    }

    /// Runs the program; `inputs[i]` is the value of `vars()[i]`.
    /// Returns the root values.
    pub fn run<'a>(
        &'a self,
        inputs: &[u128],
        regs: &'a mut [u128],
    ) -> impl Iterator<Item = u128> + 'a {
        for (i, ins) in self.instrs.iter().enumerate() {
            let v = match *ins {
                Instr::Var(k) => inputs[k],
                Instr::Const(c) => c,
                Instr::Concat { hi, lo, lo_width } => (regs[hi] << lo_width) | regs[lo],
                Instr::Add(a, b, m) => regs[a].wrapping_add(regs[b]) & m,
                Instr::Mul(a, b, m) => regs[a].wrapping_mul(regs[b]) & m,
                Instr::And(a, b) => regs[a] & regs[b],
                Instr::Or(a, b) => regs[a] | regs[b],
                Instr::Xor(a, b) => regs[a] ^ regs[b],
                Instr::Not(a, m) => !regs[a] & m,
                Instr::Extract { arg, lo, mask } => (regs[arg] >> lo) & mask,
                Instr::Eq(a, b) => (regs[a] == regs[b]) as u128,
            };
            regs[i] = v;
        }
        let regs: &'a [u128] = regs;
        self.roots.iter().map(move |&r| regs[r])
    }

    fn inputs_from(&self, a: &Assignment) -> Result<Vec<u128>, EvalError> {
        self.vars
            .iter()
            .map(|(name, width)| {
                let v = a
                    .get(name)
                    .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?;
                if v & !mask(*width) != 0 {
                    return Err(EvalError::ValueTooWide {
                        name: name.clone(),
                        value: v,
                        width: *width,
                    });
                }
                Ok(v)
            })
            .collect()
    }

    fn assignment_of(&self, inputs: &[u128]) -> Assignment {
        Assignment(
            self.vars
                .iter()
                .zip(inputs)
                .map(|((n, _), v)| (n.clone(), *v))
                .collect(),
        )
    }

    fn total_bits(&self) -> u32 {
        self.vars.iter().map(|(_, w)| *w).sum()
    }

    /// Splits an enumeration index into per-variable values.
    fn decode(&self, mut index: u128, out: &mut [u128]) {
        for (slot, (_, w)) in out.iter_mut().zip(&self.vars) {
            *slot = index & mask(*w);
            index = if *w >= 128 { 0 } else { index >> w };
        }
    }
}

/// Evaluates `t` under `a`. Boolean terms yield 0 or 1.
pub fn eval(store: &TermStore, t: TermId, a: &Assignment) -> Result<u128, EvalError> {
    let prog = Program::compile(store, &[t])?;
    let inputs = prog.inputs_from(a)?;
    let mut regs = prog.scratch();
    let v = prog.run(&inputs, &mut regs).next().expect("one root");
    Ok(v)
}

/// Reference semantics on arbitrary-precision integers.
pub fn eval_reference(store: &TermStore, t: TermId, a: &Assignment) -> Result<BigUint, EvalError> {
    let mut memo: HashMap<TermId, BigUint> = HashMap::new();
    reference_rec(store, t, a, &mut memo)
}

fn reference_rec(
    store: &TermStore,
    t: TermId,
    a: &Assignment,
    memo: &mut HashMap<TermId, BigUint>,
) -> Result<BigUint, EvalError> {
    if let Some(v) = memo.get(&t) {
        return Ok(v.clone());
    }
    let width = store.width(t);
    let modulus = BigUint::one() << width as usize;
    let mut sub = |c: TermId| reference_rec(store, c, a, memo);
    let v = match store.kind(t) {
        Kind::Var(name) => {
            let v = a
                .get(name)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?;
            BigUint::from(v) % &modulus
        }
        Kind::Const(c) => c.value().clone(),
        Kind::BoolConst(b) => BigUint::from(*b as u8),
        Kind::Concat(hi, lo) => {
            let lw = store.width(*lo);
            sub(*hi)? * (BigUint::one() << lw as usize) + sub(*lo)?
        }
        Kind::BvAdd(x, y) => (sub(*x)? + sub(*y)?) % &modulus,
        Kind::BvMul(x, y) => (sub(*x)? * sub(*y)?) % &modulus,
        Kind::BvAnd(x, y) | Kind::And(x, y) => sub(*x)? & sub(*y)?,
        Kind::BvOr(x, y) | Kind::Or(x, y) => sub(*x)? | sub(*y)?,
        Kind::BvXor(x, y) | Kind::Xor(x, y) => sub(*x)? ^ sub(*y)?,
        Kind::BvNot(x) | Kind::Not(x) => &modulus - BigUint::one() - sub(*x)?,
        Kind::Extract { hi, lo, arg } => {
            let shifted = sub(*arg)? >> *lo as usize;
            shifted % (BigUint::one() << (hi - lo + 1) as usize)
        }
        Kind::Eq(x, y) => BigUint::from((sub(*x)? == sub(*y)?) as u8),
    };
    memo.insert(t, v.clone());
    Ok(v)
}

/// Checks that the Boolean term `eq` holds under every assignment.
///
/// With at most `limit_bits` free bits every assignment is enumerated;
/// the first failing one in enumeration order is reported. Otherwise
/// `random_trials` seeded assignments are tried and a clean run yields
/// `Skipped`.
pub fn check_tautology(
    store: &TermStore,
    eq: TermId,
    limit_bits: u32,
    random_trials: usize,
    seed: u64,
) -> Verdict {
    let prog = match Program::compile(store, &[eq]) {
        Ok(p) => p,
        Err(e) => return Verdict::Skipped(e.to_string()),
    };
    let holds = |inputs: &[u128], regs: &mut Vec<u128>| prog.run(inputs, regs).all(|v| v == 1);
    let bits = prog.total_bits();
    if bits <= limit_bits && bits < 64 {
        let n = prog.vars().len();
        let failing = (0..1u64 << bits)
            .into_par_iter()
            .map_init(
                || (prog.scratch(), vec![0u128; n]),
                |(regs, inputs), idx| {
                    prog.decode(idx as u128, inputs);
                    (idx, holds(inputs, regs))
                },
            )
            .find_first(|(_, ok)| !ok);
        return match failing {
            None => Verdict::Proved,
            Some((idx, _)) => {
                let mut inputs = vec![0u128; n];
                prog.decode(idx as u128, &mut inputs);
                Verdict::Falsified(prog.assignment_of(&inputs))
            }
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regs = prog.scratch();
    let mut inputs = vec![0u128; prog.vars().len()];
    for _ in 0..random_trials {
        for (slot, (_, w)) in inputs.iter_mut().zip(prog.vars()) {
            *slot = rng.gen::<u128>() & mask(*w);
        }
        if !holds(&inputs, &mut regs) {
            return Verdict::Falsified(prog.assignment_of(&inputs));
        }
    }
    Verdict::Skipped(format!(
        "{bits} free bits exceed the exhaustive limit of {limit_bits}; randomly vetted only ({random_trials} trials)"
    ))
}

/// Satisfiability of a conjunction decided by enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Sat(Assignment),
    Unsat,
}

impl Status {
    pub fn is_sat(&self) -> bool {
        matches!(self, Status::Sat(_))
    }
}

/// Enumerates all assignments of `vars` (which must cover the free
/// variables of `roots`) looking for one that makes every root true.
/// Returns `None` when the variables span more than `limit_bits` bits.
pub fn enumerate_status(
    store: &TermStore,
    roots: &[TermId],
    vars: &[(String, u32)],
    limit_bits: u32,
) -> Result<Option<Status>, EvalError> {
    let bits: u32 = vars.iter().map(|(_, w)| *w).sum();
    if bits > limit_bits || bits >= 64 {
        return Ok(None);
    }
    let prog = Program::compile(store, roots)?;
    // positions of the program's variables within `vars`
    let index: HashMap<&str, usize> = vars
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.as_str(), i))
        .collect();
    let slots: Vec<usize> = prog
        .vars()
        .iter()
        .map(|(n, _)| {
            index
                .get(n.as_str())
                .copied()
                .ok_or_else(|| EvalError::UnboundVariable(n.clone()))
        })
        .collect::<Result<_, _>>()?;
    let decode = |mut idx: u64, out: &mut Vec<u128>| {
        out.clear();
        for (_, w) in vars {
            out.push((idx as u128) & mask(*w));
            idx >>= w;
        }
    };
    let n = prog.vars().len();
    let witness = (0..1u64 << bits)
        .into_par_iter()
        .map_init(
            || {
                (
                    prog.scratch(),
                    Vec::with_capacity(vars.len()),
                    vec![0u128; n],
                )
            },
            |(regs, all, inputs), idx| {
                decode(idx, all);
                for (dst, &src) in inputs.iter_mut().zip(&slots) {
                    *dst = all[src];
                }
                (idx, prog.run(inputs, regs).all(|v| v == 1))
            },
        )
        .find_first(|(_, ok)| *ok);
    Ok(Some(match witness {
        None => Status::Unsat,
        Some((idx, _)) => {
            let mut all = Vec::new();
            decode(idx, &mut all);
            Status::Sat(Assignment(
                vars.iter()
                    .zip(all)
                    .map(|((n, _), v)| (n.clone(), v))
                    .collect(),
            ))
        }
    }))
}

/// Recomputes the partial products of `m`'s operands and compares them,
/// slot by slot, with `lambda`. Also requires every non-zero product to
/// land at an index no larger than `lambda`'s top index.
pub fn check_pp_array(m: &Match, lambda: &PPArray) -> bool {
    let Some(h) = lambda.h() else {
        return false;
    };
    if lambda.w() != m.w {
        return false;
    }
    let mut expected: BTreeMap<usize, Vec<PartialProduct>> = BTreeMap::new();
    for (j, xj) in m.x_blocks.iter().enumerate() {
        for (k, yk) in m.y_blocks.iter().enumerate() {
            if let (Block::Term(a), Block::Term(b)) = (xj, yk) {
                // blocks j+1, k+1 align at index j+k+1
                let idx = j + k + 1;
                if idx > h {
                    return false;
                }
                expected
                    .entry(idx)
                    .or_default()
                    .push(PartialProduct::new(*a, *b, m.w));
            }
        }
    }
    (1..=h).all(|i| {
        let exp = expected.get(&i).map(Vec::as_slice).unwrap_or(&[]);
        same_multiset(exp, lambda.slot(i))
    })
}
