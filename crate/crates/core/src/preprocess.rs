//! Subterm sweep: run the matchers on every node of every assertion and
//! append one `[x*y = t]` equality per distinct match.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::long::{match_long, LongOptions, MatchOutcome};
use crate::recovery::{Block, Match, MatchSource, DEFAULT_BACKTRACK_CAP};
use crate::smtlib::{normalize_bool_terms, Learned, Script};
use crate::term::{TermError, TermId, TermStore};
use crate::wallace::match_wallace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub long: bool,
    pub wallace: bool,
    pub allow_single_summand: bool,
    pub backtrack_cap: usize,
    /// Also sweep assertions learned by an earlier pass.
    pub match_learned: bool,
    /// Bridge Boolean gates to single-bit vectors before matching.
    pub normalize: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            long: true,
            wallace: true,
            allow_single_summand: false,
            backtrack_cap: DEFAULT_BACKTRACK_CAP,
            match_learned: false,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct ReportEntry {
    /// Index of the first assertion containing the target.
    pub assertion: usize,
    pub target: String,
    pub target_width: u32,
    pub source: MatchSource,
    pub block_width: u32,
    pub x_width: u32,
    pub y_width: u32,
    /// Matches found for the same target.
    pub candidates: usize,
    /// Block widths that validated for the target (long matches only).
    pub width_candidates: usize,
    /// False when the equality duplicated an earlier one.
    pub emitted: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MatchReport {
    pub schema: u32,
    pub subterms_scanned: usize,
    pub matches_found: usize,
    pub assertions_emitted: usize,
    pub duplicates_suppressed: usize,
    pub backtrack_budget_hits: usize,
    pub wall_time_seconds: f64,
    pub warnings: Vec<String>,
    pub entries: Vec<ReportEntry>,
}

/// Concatenation of blocks, most significant first; zero blocks become
/// `w`-bit zero constants.
pub fn blocks_term(store: &mut TermStore, blocks: &[Block], w: u32) -> Result<TermId, TermError> {
    let segs = blocks
        .iter()
        .rev()
        .map(|b| match b {
            Block::Term(t) => Ok(*t),
            Block::Zero => store.zero(w),
        })
        .collect::<Result<Vec<_>, _>>()?;
    store.concat_all(&segs)
}

/// `zext(x, n) * zext(y, n) = zext(t, n)` with
/// `n = max(len x + len y, len t)`.
pub fn build_tautology(store: &mut TermStore, m: &Match) -> Result<TermId, TermError> {
    let x = blocks_term(store, &m.x_blocks, m.w)?;
    let y = blocks_term(store, &m.y_blocks, m.w)?;
    let (lx, ly, lt) = (store.width(x), store.width(y), store.width(m.target));
    let n = (lx + ly).max(lt);
    let xe = store.zero_ext(x, n)?;
    let ye = store.zero_ext(y, n)?;
    let te = store.zero_ext(m.target, n)?;
    let prod = store.mul(xe, ye)?;
    store.eq(prod, te)
}

/// Comment text for a learned assertion.
pub fn learned_note(m: &Match) -> String {
    let w = m.w;
    format!(
        "{} x={} y={} block={w}",
        m.source,
        m.x_blocks.len() as u32 * w,
        m.y_blocks.len() as u32 * w
    )
}

/// Runs both matchers (as enabled) on one term.
pub fn match_term(store: &TermStore, t: TermId, opts: &PreprocessOptions) -> MatchOutcome {
    let mut out = MatchOutcome::default();
    if opts.long {
        let lo = LongOptions {
            allow_single_summand: opts.allow_single_summand,
            backtrack_cap: opts.backtrack_cap,
        };
        out = match_long(store, t, &lo);
    }
    if opts.wallace {
        let wo = match_wallace(store, t, opts.backtrack_cap);
        out.matches.extend(wo.matches);
        out.budget_exceeded |= wo.budget_exceeded;
    }
    out
}

/// Sweeps `script` and appends learned equalities. Original assertions are
/// not modified.
pub fn preprocess(mut script: Script, opts: &PreprocessOptions) -> (Script, MatchReport) {
    let start = Instant::now();
    let mut roots = script.assertions.clone();
    if opts.match_learned {
        roots.extend(script.learned.iter().map(|l| l.term));
    }
    if opts.normalize {
        roots = normalize_bool_terms(&mut script.store, &roots);
    }

    // each node is attributed to the first root that reaches it
    let mut seen = vec![false; script.store.len()];
    let mut work: Vec<(usize, TermId)> = Vec::new();
    for (ai, &r) in roots.iter().enumerate() {
        let mut nodes = Vec::new();
        script.store.post_order_into(r, &mut seen, &mut nodes);
        nodes.sort();
        work.extend(nodes.into_iter().map(|t| (ai, t)));
    }

    let store = &script.store;
    let outcomes: Vec<MatchOutcome> = work
        .par_iter()
        .map(|&(_, t)| match_term(store, t, opts))
        .collect();

    let mut report = MatchReport {
        schema: 1,
        subterms_scanned: work.len(),
        matches_found: 0,
        assertions_emitted: 0,
        duplicates_suppressed: 0,
        backtrack_budget_hits: 0,
        wall_time_seconds: 0.0,
        warnings: Vec::new(),
        entries: Vec::new(),
    };
    let mut known: std::collections::HashSet<TermId> =
        script.learned.iter().map(|l| l.term).collect();
    for (&(ai, t), outcome) in work.iter().zip(outcomes) {
        if outcome.budget_exceeded {
            report.backtrack_budget_hits += 1;
            report.warnings.push(format!(
                "backtrack budget of {} swaps exhausted on {t}; matches for it may be incomplete",
                opts.backtrack_cap
            ));
        }
        let candidates = outcome.matches.len();
        for m in &outcome.matches {
            report.matches_found += 1;
            let eq =
                build_tautology(&mut script.store, m).expect("recovered operands are well-sorted");
            let emitted = known.insert(eq);
            if emitted {
                report.assertions_emitted += 1;
                script.learned.push(Learned {
                    term: eq,
                    note: learned_note(m),
                });
            } else {
                report.duplicates_suppressed += 1;
            }
            report.entries.push(ReportEntry {
                assertion: ai,
                target: t.to_string(),
                target_width: script.store.width(t),
                source: m.source,
                block_width: m.w,
                x_width: m.x_blocks.len() as u32 * m.w,
                y_width: m.y_blocks.len() as u32 * m.w,
                candidates,
                width_candidates: m.width_candidates,
                emitted,
            });
        }
    }
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    (script, report)
}

/// All matches for every subterm of `roots`, in sweep order. Used by
/// tests and the oracle checks, which need the match objects themselves.
pub fn collect_matches(
    store: &TermStore,
    roots: &[TermId],
    opts: &PreprocessOptions,
) -> Vec<Match> {
    let mut nodes = store.subterms_of(roots);
    nodes.sort();
    nodes
        .par_iter()
        .map(|&t| match_term(store, t, opts).matches)
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
