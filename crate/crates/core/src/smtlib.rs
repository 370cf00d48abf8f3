//! Reader and printer for the QF_BV subset of SMT-LIB2.
//!
//! `let` bindings are resolved to shared DAG nodes on input. On output,
//! nodes used more than once inside an assertion are bound by `let` again.
//! Learned assertions are printed after a `; mulmatch-learned` comment,
//! which the reader recognizes so that a printed script parses back with
//! the same split between original and learned assertions.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::Num;
use thiserror::Error;

use crate::term::{BvConst, Kind, Sort, TermError, TermId, TermStore};

/// Comment prefix that tags the next `assert` as a learned assertion.
pub const LEARNED_MARKER: &str = "mulmatch-learned";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmtError {
    #[error("{line}:{col}: {msg}")]
    Parse { line: u32, col: u32, msg: String },
    #[error("{line}:{col}: unsupported: {feature}")]
    Unsupported {
        line: u32,
        col: u32,
        feature: String,
    },
}

/// An appended assertion and the comment printed above it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Learned {
    pub term: TermId,
    pub note: String,
}

/// One parsed SMT-LIB2 file.
#[derive(Debug, Clone, Default)]
pub struct Script {
    pub store: TermStore,
    pub logic: Option<String>,
    /// Inert commands seen before `check-sat`, kept as source text.
    pub header: Vec<String>,
    pub declarations: Vec<(String, Sort)>,
    pub assertions: Vec<TermId>,
    pub learned: Vec<Learned>,
    /// `check-sat` and everything after it, as source text.
    pub trailing: Vec<String>,
}

impl Script {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a fresh variable in the store and in the declaration list.
    pub fn declare(&mut self, name: &str, sort: Sort) -> Result<TermId, TermError> {
        let t = self.store.var(name, sort)?;
        if !self.declarations.iter().any(|(n, _)| n == name) {
            self.declarations.push((name.to_string(), sort));
        }
        Ok(t)
    }

    /// Original assertions followed by learned ones.
    pub fn all_assertions(&self) -> Vec<TermId> {
        let mut v = self.assertions.clone();
        v.extend(self.learned.iter().map(|l| l.term));
        v
    }
}

// ---------------------------------------------------------------------------
// s-expressions

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: u32,
    col: u32,
    offset: usize,
}

#[derive(Debug, Clone)]
enum Sexp {
    Atom {
        text: String,
        quoted: bool,
        pos: Pos,
    },
    List {
        items: Vec<Sexp>,
        pos: Pos,
    },
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Atom { pos, .. } | Sexp::List { pos, .. } => *pos,
        }
    }

    fn symbol(&self) -> Option<&str> {
        match self {
            Sexp::Atom { text, .. } => Some(text),
            Sexp::List { .. } => None,
        }
    }

    /// An unquoted atom, as used for reserved words and operators.
    fn keyword(&self) -> Option<&str> {
        match self {
            Sexp::Atom {
                text,
                quoted: false,
                ..
            } => Some(text),
            _ => None,
        }
    }
}

impl Drop for Sexp {
    // nested lists are released from an explicit stack
    fn drop(&mut self) {
        if let Sexp::List { items, .. } = self {
            let mut stack = std::mem::take(items);
            while let Some(mut s) = stack.pop() {
                if let Sexp::List { items, .. } = &mut s {
                    stack.append(items);
                }
            }
        }
    }
}

fn parse_err(pos: Pos, msg: impl Into<String>) -> SmtError {
    SmtError::Parse {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

fn unsupported(pos: Pos, feature: impl Into<String>) -> SmtError {
    SmtError::Unsupported {
        line: pos.line,
        col: pos.col,
        feature: feature.into(),
    }
}

/// A top-level command with its source span and any learned marker.
struct Command {
    sexp: Sexp,
    source: String,
    marker: Option<String>,
}

struct Reader<'a> {
    text: &'a str,
    bytes: &'a [u8],
    i: usize,
    line: u32,
    col: u32,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            text,
            bytes: text.as_bytes(),
            i: 0,
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
            offset: self.i,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.text[self.i..].chars().next()?;
        self.i += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.i).copied()
    }

    /// Skips whitespace and comments; returns the text of the last
    /// learned marker comment seen.
    fn skip_trivia(&mut self, marker: &mut Option<String>) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.bump();
            } else if b == b';' {
                let start = self.i;
                while self.peek().is_some_and(|b| b != b'\n') {
                    self.bump();
                }
                let body = self.text[start + 1..self.i].trim();
                if let Some(rest) = body.strip_prefix(LEARNED_MARKER) {
                    *marker = Some(rest.trim().to_string());
                }
            } else {
                break;
            }
        }
    }

    fn commands(mut self) -> Result<Vec<Command>, SmtError> {
        let mut out = Vec::new();
        let mut marker = None;
        loop {
            self.skip_trivia(&mut marker);
            if self.peek().is_none() {
                return Ok(out);
            }
            let start = self.i;
            let sexp = self.sexp()?;
            if !matches!(sexp, Sexp::List { .. }) {
                return Err(parse_err(sexp.pos(), "expected a command"));
            }
            out.push(Command {
                sexp,
                source: self.text[start..self.i].to_string(),
                marker: marker.take(),
            });
        }
    }

    /// Reads one s-expression without recursion.
    fn sexp(&mut self) -> Result<Sexp, SmtError> {
        let mut stack: Vec<(Pos, Vec<Sexp>)> = Vec::new();
        let mut ignored = None;
        loop {
            self.skip_trivia(&mut ignored);
            let pos = self.pos();
            let item = match self.peek() {
                None => {
                    return Err(parse_err(pos, "unexpected end of input"));
                }
                Some(b'(') => {
                    self.bump();
                    stack.push((pos, Vec::new()));
                    continue;
                }
                Some(b')') => {
                    self.bump();
                    let Some((p, items)) = stack.pop() else {
                        return Err(parse_err(pos, "unbalanced `)`"));
                    };
                    Sexp::List { items, pos: p }
                }
                Some(b'|') => {
                    self.bump();
                    let start = self.i;
                    while self.peek().is_some_and(|b| b != b'|') {
                        self.bump();
                    }
                    if self.peek().is_none() {
                        return Err(parse_err(pos, "unterminated quoted symbol"));
                    }
                    let text = self.text[start..self.i].to_string();
                    self.bump();
                    Sexp::Atom {
                        text,
                        quoted: true,
                        pos,
                    }
                }
                Some(b'"') => {
                    self.bump();
                    loop {
                        match self.bump() {
                            None => return Err(parse_err(pos, "unterminated string")),
                            Some('"') if self.peek() == Some(b'"') => {
                                self.bump();
                            }
                            Some('"') => break,
                            Some(_) => {}
                        }
                    }
                    Sexp::Atom {
                        text: self.text[pos.offset..self.i].to_string(),
                        quoted: false,
                        pos,
                    }
                }
                Some(_) => {
                    let start = self.i;
                    while self
                        .peek()
                        .is_some_and(|b| !b.is_ascii_whitespace() && !b"()|\";".contains(&b))
                    {
                        self.bump();
                    }
                    Sexp::Atom {
                        text: self.text[start..self.i].to_string(),
                        quoted: false,
                        pos,
                    }
                }
            };
            match stack.last_mut() {
                Some((_, items)) => items.push(item),
                None => return Ok(item),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// terms

fn parse_numeral(s: &Sexp) -> Result<u32, SmtError> {
    s.keyword()
        .and_then(|t| t.parse::<u32>().ok())
        .ok_or_else(|| parse_err(s.pos(), "expected a numeral"))
}

fn parse_sort(s: &Sexp) -> Result<Sort, SmtError> {
    match s {
        Sexp::Atom { text, .. } if text == "Bool" => Ok(Sort::Bool),
        Sexp::List { items, pos } => match items.as_slice() {
            [u, b, n] if u.keyword() == Some("_") && b.keyword() == Some("BitVec") => {
                let w = parse_numeral(n)?;
                if w == 0 {
                    return Err(parse_err(*pos, "bit-vector width must be positive"));
                }
                Ok(Sort::BitVec(w))
            }
            _ => Err(unsupported(*pos, "sort other than Bool or (_ BitVec n)")),
        },
        Sexp::Atom { text, pos, .. } => Err(unsupported(*pos, format!("sort `{text}`"))),
    }
}

fn literal(text: &str) -> Option<BvConst> {
    if let Some(bits) = text.strip_prefix("#b") {
        let v = BigUint::from_str_radix(bits, 2).ok()?;
        Some(BvConst::new(v, bits.len() as u32))
    } else if let Some(hex) = text.strip_prefix("#x") {
        let v = BigUint::from_str_radix(hex, 16).ok()?;
        Some(BvConst::new(v, 4 * hex.len() as u32))
    } else {
        None
    }
}

enum Task<'s> {
    Visit(&'s Sexp),
    Apply(&'s Sexp, usize),
    Bind(Vec<&'s str>),
    PopScope,
}

struct TermBuilder<'a> {
    store: &'a mut TermStore,
    vars: &'a HashMap<String, TermId>,
    scopes: Vec<HashMap<&'a str, TermId>>,
}

const UNSUPPORTED_OPS: &[&str] = &[
    "ite", "forall", "exists", "select", "store", "=>", "bvudiv", "bvurem", "bvsdiv", "bvsrem",
    "bvsmod", "bvshl", "bvlshr", "bvashr", "bvneg", "bvsub", "bvnand", "bvnor", "bvxnor", "bvcomp",
    "bvult", "bvule", "bvugt", "bvuge", "bvslt", "bvsle", "bvsgt", "bvsge", "!", "match",
];

impl<'a> TermBuilder<'a> {
    fn lookup(&self, name: &str) -> Option<TermId> {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .or_else(|| self.vars.get(name).copied())
    }

    fn atom(&mut self, text: &str, quoted: bool, pos: Pos) -> Result<TermId, SmtError> {
        if !quoted {
            if let Some(c) = literal(text) {
                if c.width() == 0 {
                    return Err(parse_err(pos, "empty bit-vector literal"));
                }
                return self
                    .store
                    .constant(c)
                    .map_err(|e| parse_err(pos, e.to_string()));
            }
            match text {
                "true" => return Ok(self.store.bool_const(true)),
                "false" => return Ok(self.store.bool_const(false)),
                _ => {}
            }
            if text.starts_with('#') || text.starts_with(|c: char| c.is_ascii_digit()) {
                return Err(parse_err(pos, format!("malformed literal `{text}`")));
            }
        }
        self.lookup(text)
            .ok_or_else(|| parse_err(pos, format!("undeclared symbol `{text}`")))
    }

    /// Builds the term for `root` with an explicit work stack.
    fn build(&mut self, root: &'a Sexp) -> Result<TermId, SmtError> {
        let mut tasks = vec![Task::Visit(root)];
        let mut values: Vec<TermId> = Vec::new();
        while let Some(task) = tasks.pop() {
            match task {
                Task::Visit(Sexp::Atom { text, quoted, pos }) => {
                    values.push(self.atom(text, *quoted, *pos)?);
                }
                Task::Visit(s @ Sexp::List { items, pos }) => {
                    let Some(head) = items.first() else {
                        return Err(parse_err(*pos, "empty application"));
                    };
                    if head.keyword() == Some("_") {
                        // (_ bvN w)
                        values.push(self.indexed_literal(items, *pos)?);
                        continue;
                    }
                    if head.keyword() == Some("let") {
                        let [_, Sexp::List { items: binds, .. }, body] = items.as_slice() else {
                            return Err(parse_err(*pos, "malformed let"));
                        };
                        let mut names = Vec::with_capacity(binds.len());
                        let mut exprs = Vec::with_capacity(binds.len());
                        for b in binds {
                            match b {
                                Sexp::List { items: pair, pos } => match pair.as_slice() {
                                    [n, e] if n.symbol().is_some() => {
                                        names.push(n.symbol().expect("checked"));
                                        exprs.push(e);
                                    }
                                    _ => return Err(parse_err(*pos, "malformed let binding")),
                                },
                                _ => return Err(parse_err(b.pos(), "malformed let binding")),
                            }
                        }
                        tasks.push(Task::PopScope);
                        tasks.push(Task::Visit(body));
                        tasks.push(Task::Bind(names));
                        for e in exprs.into_iter().rev() {
                            tasks.push(Task::Visit(e));
                        }
                        continue;
                    }
                    if let Some(op) = head.keyword() {
                        if UNSUPPORTED_OPS.contains(&op) {
                            return Err(unsupported(*pos, format!("operator `{op}`")));
                        }
                    }
                    let args = &items[1..];
                    if args.is_empty() {
                        return Err(parse_err(*pos, "application without arguments"));
                    }
                    tasks.push(Task::Apply(s, args.len()));
                    for a in args.iter().rev() {
                        tasks.push(Task::Visit(a));
                    }
                }
                Task::Bind(names) => {
                    let vals = values.split_off(values.len() - names.len());
                    self.scopes.push(names.into_iter().zip(vals).collect());
                }
                Task::PopScope => {
                    self.scopes.pop();
                }
                Task::Apply(s, n) => {
                    let args = values.split_off(values.len() - n);
                    let Sexp::List { items, pos } = s else {
                        unreachable!("only lists are applied")
                    };
                    let t = self.apply(&items[0], &args, *pos)?;
                    values.push(t);
                }
            }
        }
        debug_assert_eq!(values.len(), 1);
        Ok(values.pop().expect("one value"))
    }

    fn indexed_literal(&mut self, items: &[Sexp], pos: Pos) -> Result<TermId, SmtError> {
        match items {
            [_, v, w] => {
                let digits = v
                    .keyword()
                    .and_then(|t| t.strip_prefix("bv"))
                    .ok_or_else(|| unsupported(pos, "indexed identifier"))?;
                let value = BigUint::from_str_radix(digits, 10)
                    .map_err(|_| parse_err(pos, "malformed (_ bvN w) literal"))?;
                let w = parse_numeral(w)?;
                if w == 0 {
                    return Err(parse_err(pos, "bit-vector width must be positive"));
                }
                self.store
                    .constant(BvConst::new(value, w))
                    .map_err(|e| parse_err(pos, e.to_string()))
            }
            _ => Err(unsupported(pos, "indexed identifier")),
        }
    }

    fn apply(&mut self, head: &Sexp, args: &[TermId], pos: Pos) -> Result<TermId, SmtError> {
        let s = &mut *self.store;
        let wrap = |r: Result<TermId, TermError>| r.map_err(|e| parse_err(pos, e.to_string()));
        // indexed operators
        if let Sexp::List { items, .. } = head {
            let name = items.get(1).and_then(Sexp::keyword);
            return match (
                items.first().and_then(Sexp::keyword),
                name,
                items.len(),
                args,
            ) {
                (Some("_"), Some("extract"), 4, [a]) => {
                    let hi = parse_numeral(&items[2])?;
                    let lo = parse_numeral(&items[3])?;
                    wrap(s.extract(hi, lo, *a))
                }
                (Some("_"), Some("zero_extend"), 3, [a]) => {
                    let k = parse_numeral(&items[2])?;
                    let w = s.width(*a);
                    wrap(s.zero_ext(*a, w + k))
                }
                (Some("_"), Some(op), _, _) => Err(unsupported(pos, format!("operator `{op}`"))),
                _ => Err(parse_err(pos, "malformed indexed operator")),
            };
        }
        let Some(op) = head.keyword() else {
            return Err(parse_err(pos, "operator must be a symbol"));
        };
        let fold =
            |s: &mut TermStore,
             f: fn(&mut TermStore, TermId, TermId) -> Result<TermId, TermError>| {
                let mut acc = args[0];
                for &b in &args[1..] {
                    acc = f(s, acc, b)?;
                }
                Ok(acc)
            };
        let unary = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(parse_err(pos, format!("`{op}` expects {n} argument(s)")))
            }
        };
        match op {
            "bvadd" => wrap(fold(s, TermStore::add)),
            "bvmul" => wrap(fold(s, TermStore::mul)),
            "bvand" => wrap(fold(s, TermStore::bvand)),
            "bvor" => wrap(fold(s, TermStore::bvor)),
            "bvxor" => wrap(fold(s, TermStore::bvxor)),
            "and" => wrap(fold(s, TermStore::and)),
            "or" => wrap(fold(s, TermStore::or)),
            "xor" => wrap(fold(s, TermStore::xor)),
            "concat" => wrap(s.concat_all(args)),
            "bvnot" => {
                unary(1)?;
                wrap(s.bvnot(args[0]))
            }
            "not" => {
                unary(1)?;
                wrap(s.not(args[0]))
            }
            "=" | "distinct" => {
                if args.len() < 2 {
                    return Err(parse_err(
                        pos,
                        format!("`{op}` expects at least 2 arguments"),
                    ));
                }
                let mut parts = Vec::new();
                if op == "=" {
                    for w in args.windows(2) {
                        parts.push(wrap(s.eq(w[0], w[1]))?);
                    }
                } else {
                    for i in 0..args.len() {
                        for j in i + 1..args.len() {
                            let e = wrap(s.eq(args[i], args[j]))?;
                            parts.push(wrap(s.not(e))?);
                        }
                    }
                }
                let mut acc = parts[0];
                for &p in &parts[1..] {
                    acc = wrap(s.and(acc, p))?;
                }
                Ok(acc)
            }
            _ if self.lookup(op).is_some() => Err(unsupported(
                pos,
                format!("application of non-function `{op}`"),
            )),
            _ => Err(unsupported(pos, format!("operator `{op}`"))),
        }
    }
}

/// Parses a script in the supported subset.
pub fn parse(text: &str) -> Result<Script, SmtError> {
    let commands = Reader::new(text).commands()?;
    let mut script = Script::new();
    let mut vars: HashMap<String, TermId> = HashMap::new();
    let mut seen_check_sat = false;
    for cmd in &commands {
        let Sexp::List { items, pos } = &cmd.sexp else {
            unreachable!("commands are lists")
        };
        let pos = *pos;
        let Some(head) = items.first().and_then(Sexp::keyword) else {
            return Err(parse_err(pos, "expected a command name"));
        };
        match head {
            "set-logic" => {
                let [_, l] = items.as_slice() else {
                    return Err(parse_err(pos, "malformed set-logic"));
                };
                let logic = l
                    .symbol()
                    .ok_or_else(|| parse_err(pos, "malformed set-logic"))?;
                if logic != "QF_BV" {
                    return Err(unsupported(pos, format!("logic {logic}")));
                }
                script.logic = Some(logic.to_string());
            }
            "declare-fun" | "declare-const" => {
                if seen_check_sat {
                    return Err(unsupported(pos, "declarations after check-sat"));
                }
                let (name, sort) = match (head, items.as_slice()) {
                    ("declare-fun", [_, n, Sexp::List { items: params, .. }, s]) => {
                        if !params.is_empty() {
                            return Err(unsupported(pos, "function symbols with arguments"));
                        }
                        (n, s)
                    }
                    ("declare-const", [_, n, s]) => (n, s),
                    _ => return Err(parse_err(pos, format!("malformed {head}"))),
                };
                let name = name
                    .symbol()
                    .ok_or_else(|| parse_err(pos, "expected a symbol"))?;
                let sort = parse_sort(sort)?;
                if vars.contains_key(name) {
                    return Err(parse_err(pos, format!("`{name}` declared twice")));
                }
                let t = script
                    .declare(name, sort)
                    .map_err(|e| parse_err(pos, e.to_string()))?;
                vars.insert(name.to_string(), t);
            }
            "assert" => {
                if seen_check_sat {
                    return Err(unsupported(pos, "assertions after check-sat"));
                }
                let [_, body] = items.as_slice() else {
                    return Err(parse_err(pos, "malformed assert"));
                };
                let t = TermBuilder {
                    store: &mut script.store,
                    vars: &vars,
                    scopes: Vec::new(),
                }
                .build(body)?;
                if !script.store.sort(t).is_bool() {
                    return Err(parse_err(pos, "assertion is not Boolean"));
                }
                match &cmd.marker {
                    Some(note) => script.learned.push(Learned {
                        term: t,
                        note: note.clone(),
                    }),
                    None => script.assertions.push(t),
                }
            }
            "check-sat" | "exit" => {
                seen_check_sat = true;
                script.trailing.push(cmd.source.clone());
            }
            "set-info" | "set-option" | "get-model" | "get-info" | "get-value"
            | "get-assertions" | "get-unsat-core" | "get-proof" | "echo" => {
                if seen_check_sat {
                    script.trailing.push(cmd.source.clone());
                } else {
                    script.header.push(cmd.source.clone());
                }
            }
            other => return Err(unsupported(pos, format!("command `{other}`"))),
        }
    }
    Ok(script)
}

// ---------------------------------------------------------------------------
// printing

fn is_simple_symbol(s: &str) -> bool {
    const EXTRA: &str = "~!@$%^&*_-+=<>.?/";
    !s.is_empty()
        && !s.starts_with(|c: char| c.is_ascii_digit())
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || EXTRA.contains(c))
        && !matches!(
            s,
            "let" | "true" | "false" | "_" | "!" | "as" | "forall" | "exists" | "match" | "par"
        )
}

fn symbol(s: &str) -> String {
    if is_simple_symbol(s) {
        s.to_string()
    } else {
        format!("|{s}|")
    }
}

fn sort_text(sort: Sort) -> String {
    match sort {
        Sort::Bool => "Bool".to_string(),
        Sort::BitVec(w) => format!("(_ BitVec {w})"),
    }
}

/// Prefix for let-bound names that no declared name starts with.
fn fresh_prefix(script: &Script) -> String {
    let mut prefix = "?m".to_string();
    while script
        .declarations
        .iter()
        .any(|(n, _)| n.starts_with(&prefix))
    {
        prefix.push('_');
    }
    prefix
}

enum Piece {
    Node(TermId),
    Text(&'static str),
}

/// Renders `t` with the let-bound nodes in `names` printed by name.
fn render(
    store: &TermStore,
    t: TermId,
    names: &HashMap<TermId, String>,
    skip_root: bool,
    out: &mut String,
) {
    let mut stack = vec![Piece::Node(t)];
    let mut first = true;
    while let Some(p) = stack.pop() {
        let t = match p {
            Piece::Text(s) => {
                out.push_str(s);
                continue;
            }
            Piece::Node(t) => t,
        };
        let is_root = std::mem::take(&mut first) && skip_root;
        if !is_root {
            if let Some(n) = names.get(&t) {
                out.push_str(n);
                continue;
            }
        }
        let (op, kids): (String, Vec<TermId>) = match store.kind(t) {
            Kind::Var(name) => {
                out.push_str(&symbol(name));
                continue;
            }
            Kind::Const(c) => {
                out.push_str("#b");
                out.push_str(&c.to_binary_string());
                continue;
            }
            Kind::BoolConst(b) => {
                out.push_str(if *b { "true" } else { "false" });
                continue;
            }
            Kind::Extract { hi, lo, arg } => (format!("(_ extract {hi} {lo})"), vec![*arg]),
            k => {
                let op = match k {
                    Kind::Concat(..) => "concat",
                    Kind::BvAdd(..) => "bvadd",
                    Kind::BvMul(..) => "bvmul",
                    Kind::BvAnd(..) => "bvand",
                    Kind::BvOr(..) => "bvor",
                    Kind::BvXor(..) => "bvxor",
                    Kind::BvNot(..) => "bvnot",
                    Kind::Eq(..) => "=",
                    Kind::Not(..) => "not",
                    Kind::And(..) => "and",
                    Kind::Or(..) => "or",
                    Kind::Xor(..) => "xor",
                    _ => unreachable!("leaves handled above"),
                };
                (op.to_string(), k.children().into_iter().collect())
            }
        };
        out.push('(');
        out.push_str(&op);
        stack.push(Piece::Text(")"));
        for &k in kids.iter().rev() {
            stack.push(Piece::Node(k));
            stack.push(Piece::Text(" "));
        }
    }
}

/// Prints one assertion body, binding shared interior nodes with `let`.
fn render_shared(store: &TermStore, root: TermId, prefix: &str, out: &mut String) {
    let order = store.subterms(root);
    let mut uses: HashMap<TermId, usize> = HashMap::new();
    for &t in &order {
        for c in store.kind(t).children() {
            *uses.entry(c).or_default() += 1;
        }
    }
    // level: 1 + deepest shared node below, counting only shared nodes
    let mut level: HashMap<TermId, usize> = HashMap::new();
    let mut shared: Vec<TermId> = Vec::new();
    for &t in &order {
        let below = store
            .kind(t)
            .children()
            .into_iter()
            .map(|c| level[&c])
            .max()
            .unwrap_or(0);
        let is_shared = !store.kind(t).is_leaf() && uses.get(&t).copied().unwrap_or(0) > 1;
        if is_shared {
            shared.push(t);
            level.insert(t, below + 1);
        } else {
            level.insert(t, below);
        }
    }
    let names: HashMap<TermId, String> = shared
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, format!("{prefix}{i}")))
        .collect();
    let depth = shared.iter().map(|t| level[t]).max().unwrap_or(0);
    for l in 1..=depth {
        out.push_str("(let (");
        let mut first = true;
        for &t in shared.iter().filter(|t| level[*t] == l) {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "({} ", names[&t]);
            render(store, t, &names, true, out);
            out.push(')');
        }
        out.push_str(") ");
    }
    render(store, root, &names, false, out);
    for _ in 0..depth {
        out.push(')');
    }
}

/// Renders a term without sharing, for diagnostics and short output.
pub fn term_text(store: &TermStore, t: TermId) -> String {
    let mut s = String::new();
    render(store, t, &HashMap::new(), false, &mut s);
    s
}

/// Prints the script: header, declarations, assertions, learned
/// assertions (each under its marker comment), then trailing commands.
pub fn print(script: &Script) -> String {
    let mut out = String::new();
    if let Some(l) = &script.logic {
        let _ = writeln!(out, "(set-logic {l})");
    }
    for h in &script.header {
        out.push_str(h);
        out.push('\n');
    }
    for (name, sort) in &script.declarations {
        let _ = writeln!(
            out,
            "(declare-fun {} () {})",
            symbol(name),
            sort_text(*sort)
        );
    }
    let prefix = fresh_prefix(script);
    for &a in &script.assertions {
        out.push_str("(assert ");
        render_shared(&script.store, a, &prefix, &mut out);
        out.push_str(")\n");
    }
    for l in &script.learned {
        let _ = writeln!(out, "; {LEARNED_MARKER} {}", l.note);
        out.push_str("(assert ");
        render_shared(&script.store, l.term, &prefix, &mut out);
        out.push_str(")\n");
    }
    for t in &script.trailing {
        out.push_str(t);
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Boolean gates to single-bit vectors

/// `v` if `t` is `(= v #b1)` or `(= #b1 v)` with `v` a single bit.
fn as_bit(store: &TermStore, t: TermId) -> Option<TermId> {
    let Kind::Eq(a, b) = *store.kind(t) else {
        return None;
    };
    let one = |u: TermId| matches!(store.kind(u), Kind::Const(c) if c.width() == 1 && !c.is_zero());
    if one(b) && store.width(a) == 1 {
        Some(a)
    } else if one(a) && store.width(b) == 1 {
        Some(b)
    } else {
        None
    }
}

/// Rewrites Boolean gates over `(= v #b1)` operands into single-bit
/// `bvand`/`bvor`/`bvxor`/`bvnot` compared to `#b1`. Returns the rewritten
/// roots; other structure is kept.
pub fn normalize_bool_terms(store: &mut TermStore, roots: &[TermId]) -> Vec<TermId> {
    let order = store.subterms_of(roots);
    let mut map: HashMap<TermId, TermId> = HashMap::with_capacity(order.len());
    let one = store
        .constant(BvConst::from_u128(1, 1))
        .expect("one-bit constant");
    for t in order {
        let kind = store.kind(t).clone();
        let m = |u: &TermId| map[u];
        let rebuilt = match kind {
            Kind::Not(a) => {
                let a = m(&a);
                match as_bit(store, a) {
                    Some(va) => {
                        let n = store.bvnot(va).expect("single bit");
                        store.eq(n, one).expect("single bit")
                    }
                    None => store.not(a).expect("sort preserved"),
                }
            }
            Kind::And(a, b) | Kind::Or(a, b) | Kind::Xor(a, b) => {
                let (a, b) = (m(&a), m(&b));
                match (as_bit(store, a), as_bit(store, b)) {
                    (Some(va), Some(vb)) => {
                        let g = match kind {
                            Kind::And(..) => store.bvand(va, vb),
                            Kind::Or(..) => store.bvor(va, vb),
                            _ => store.bvxor(va, vb),
                        }
                        .expect("single bits");
                        store.eq(g, one).expect("single bit")
                    }
                    _ => match kind {
                        Kind::And(..) => store.and(a, b),
                        Kind::Or(..) => store.or(a, b),
                        _ => store.xor(a, b),
                    }
                    .expect("sort preserved"),
                }
            }
            k if k.is_leaf() => t,
            k => {
                let kids: Vec<TermId> = k.children().into_iter().collect();
                let new_kids: Vec<TermId> = kids.iter().map(m).collect();
                if kids == new_kids {
                    t
                } else {
                    store
                        .mk_term(with_children(&k, &new_kids))
                        .expect("sort preserved")
                }
            }
        };
        map.insert(t, rebuilt);
    }
    roots.iter().map(|r| map[r]).collect()
}

fn with_children(k: &Kind, c: &[TermId]) -> Kind {
    use Kind::*;
    match *k {
        Concat(..) => Concat(c[0], c[1]),
        BvAdd(..) => BvAdd(c[0], c[1]),
        BvMul(..) => BvMul(c[0], c[1]),
        BvAnd(..) => BvAnd(c[0], c[1]),
        BvOr(..) => BvOr(c[0], c[1]),
        BvXor(..) => BvXor(c[0], c[1]),
        BvNot(_) => BvNot(c[0]),
        Extract { hi, lo, .. } => Extract { hi, lo, arg: c[0] },
        Eq(..) => Eq(c[0], c[1]),
        Not(_) => Not(c[0]),
        And(..) => And(c[0], c[1]),
        Or(..) => Or(c[0], c[1]),
        Xor(..) => Xor(c[0], c[1]),
        Var(_) | Const(_) | BoolConst(_) => unreachable!("leaves have no children"),
    }
}

/// Applies [`normalize_bool_terms`] to every original assertion.
pub fn normalize_bool(mut script: Script) -> Script {
    let roots = script.assertions.clone();
    script.assertions = normalize_bool_terms(&mut script.store, &roots);
    script
}

/// Names declared in `script` but never used by an assertion.
pub fn unused_declarations(script: &Script) -> Vec<String> {
    let used: HashSet<String> = script
        .store
        .free_vars(&script.all_assertions())
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    script
        .declarations
        .iter()
        .filter(|(n, _)| !used.contains(n))
        .map(|(n, _)| n.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{eval, Assignment};

    #[test]
    fn basic_script() {
        let s = parse("(declare-const x (_ BitVec 4)) (assert (= x #b0000)) (check-sat)").unwrap();
        assert_eq!(s.declarations, vec![("x".to_string(), Sort::BitVec(4))]);
        assert_eq!(s.assertions.len(), 1);
        assert_eq!(s.trailing, vec!["(check-sat)".to_string()]);
    }

    #[test]
    fn quantifier_unsupported() {
        let e =
            parse("(declare-const x (_ BitVec 4))\n(assert (forall ((y (_ BitVec 4))) (= x y)))")
                .unwrap_err();
        assert!(matches!(e, SmtError::Unsupported { line: 2, .. }), "{e:?}");
    }

    #[test]
    fn let_shares_nodes() {
        let text = "(declare-fun a () (_ BitVec 2)) (declare-fun b () (_ BitVec 2))
            (assert (let ((p (bvmul (concat #b00 a) (concat #b00 b)))) (= (bvadd p p) p)))";
        let s = parse(text).unwrap();
        let Kind::Eq(sum, p) = *s.store.kind(s.assertions[0]) else {
            panic!()
        };
        assert_eq!(*s.store.kind(sum), Kind::BvAdd(p, p));
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = parse("(assert\n  (= x #b0))").unwrap_err();
        assert_eq!(
            e,
            SmtError::Parse {
                line: 2,
                col: 6,
                msg: "undeclared symbol `x`".into()
            }
        );
        assert!(matches!(
            parse("(assert (= #b0 #b1)"),
            Err(SmtError::Parse { .. })
        ));
    }

    #[test]
    fn literals() {
        let s =
            parse("(declare-fun x () (_ BitVec 8)) (assert (= x #xa5)) (assert (= x (_ bv165 8)))")
                .unwrap();
        assert_eq!(s.assertions[0], s.assertions[1]);
    }

    #[test]
    fn round_trip_with_learned() {
        let text = "(set-logic QF_BV)\n(set-info :status unsat)\n\
            (declare-fun |odd name| () (_ BitVec 2)) (declare-fun ?m0 () (_ BitVec 2))\n\
            (assert (let ((s (bvadd |odd name| ?m0))) (distinct ((_ zero_extend 2) (bvmul s s)) (concat ((_ extract 0 0) s) ((_ zero_extend 2) ((_ extract 1 1) s))))))\n\
            (check-sat)\n(exit)\n";
        let mut s = parse(text).unwrap();
        let x = s.store.find(&Kind::Var("odd name".into())).unwrap();
        let eq = s.store.eq(x, x).unwrap();
        s.learned.push(Learned {
            term: eq,
            note: "long x=2 y=2 width=4".into(),
        });
        let printed = print(&s);
        assert!(printed.contains("(let ("), "{printed}");
        assert!(printed.contains("?m_0"), "{printed}");
        assert!(printed.contains("; mulmatch-learned long x=2 y=2 width=4"));
        let back = parse(&printed).unwrap();
        assert_eq!(back.assertions.len(), 1);
        assert_eq!(back.learned.len(), 1);
        assert_eq!(back.learned[0].note, "long x=2 y=2 width=4");
        assert_eq!(back.header, s.header);
        assert_eq!(back.trailing, s.trailing);
        assert_eq!(print(&back), printed);
    }

    #[test]
    fn normalize_gates() {
        let text = "(declare-fun a () (_ BitVec 1)) (declare-fun b () (_ BitVec 1))
            (declare-fun p () Bool)
            (assert (and (= a #b1) (= b #b1)))
            (assert (or p (= a #b1)))";
        let s = parse(text).unwrap();
        let before = s.assertions.clone();
        let s2 = normalize_bool(s.clone());
        let mut st = s2.store.clone();
        let a = st.find(&Kind::Var("a".into())).unwrap();
        let b = st.find(&Kind::Var("b".into())).unwrap();
        let g = st.bvand(a, b).unwrap();
        let one = st.constant(BvConst::from_u128(1, 1)).unwrap();
        assert_eq!(s2.assertions[0], st.eq(g, one).unwrap());
        assert_eq!(s2.assertions[1], before[1]);
        for va in 0..2 {
            for vb in 0..2 {
                let mut asg = Assignment::new();
                asg.set("a", va);
                asg.set("b", vb);
                asg.set("p", 0);
                for (x, y) in before.iter().zip(&s2.assertions) {
                    assert_eq!(eval(&s2.store, *x, &asg), eval(&s2.store, *y, &asg));
                }
            }
        }
    }

    #[test]
    fn pure_bitvector_is_fixpoint() {
        let s = parse("(declare-fun x () (_ BitVec 3)) (assert (= (bvnot x) x))").unwrap();
        let before = s.assertions.clone();
        assert_eq!(normalize_bool(s).assertions, before);
    }

    #[test]
    fn deep_terms_do_not_recurse() {
        let mut text = String::from("(declare-fun x () (_ BitVec 8)) (assert (= x ");
        for _ in 0..50_000 {
            text.push_str("(bvnot ");
        }
        text.push('x');
        text.push_str(&")".repeat(50_000));
        text.push_str("))");
        let s = parse(&text).unwrap();
        let printed = print(&s);
        assert_eq!(print(&parse(&printed).unwrap()), printed);
    }
}
