//! Detection of decomposed multipliers in QF_BV formulas.
//!
//! The matchers recognize long multiplication (sums of concatenated block
//! products) and Wallace trees (xor/and/or adder networks over bit
//! products), recover candidate operands, and the preprocessor appends
//! `[x*y = t]` equalities for every match.

pub mod benchgen;
pub mod eval;
pub mod harness;
pub mod long;
pub mod pp;
pub mod preprocess;
pub mod recovery;
pub mod smtlib;
pub mod term;
pub mod wallace;

pub use eval::{check_tautology, Assignment, Verdict};
pub use long::{match_long, LongOptions, MatchOutcome};
pub use pp::{PPArray, PartialProduct};
pub use recovery::{get_mult_operands, Block, Match, MatchSource};
pub use term::{Kind, Sort, TermId, TermStore};
pub use wallace::match_wallace;
