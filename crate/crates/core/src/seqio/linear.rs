//! DRS <-> target token sequence.
//!
//! Variables become relative references: the first occurrence of a variable
//! is `NEW`, later occurrences count how many variables of the same kind
//! have been introduced since (and including) the referenced one. Concepts
//! and constants are spelled out character by character between word
//! boundary markers; operators, roles and senses stay atomic.

use std::fmt;

use crate::drs::{classify_predicate, Clause, Drs, PredicateKind, Sense, Term, VarKind, Variable};
use crate::referee;

use super::SeqError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Boundary {
    WordStart,
    WordEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetToken {
    /// Operator or role name.
    Structural(String),
    /// `None` introduces the next variable of the kind.
    RelVar(VarKind, Option<u32>),
    CharPiece(char),
    Boundary(Boundary),
    ClauseSep,
    SenseTag(Sense),
}

impl TargetToken {
    /// Vocabulary symbol; injective over tokens.
    pub fn to_symbol(&self) -> String {
        match self {
            TargetToken::Structural(name) if name.chars().count() == 1 => format!("^{name}"),
            TargetToken::Structural(name) => name.clone(),
            TargetToken::RelVar(k, None) => format!("@{}:NEW", k.letter()),
            TargetToken::RelVar(k, Some(d)) => format!("@{}:{d}", k.letter()),
            TargetToken::CharPiece(c) if c.is_whitespace() || c.is_control() || *c == '\\' => {
                format!("\\u{{{:x}}}", *c as u32)
            }
            TargetToken::CharPiece(c) => c.to_string(),
            TargetToken::Boundary(Boundary::WordStart) => "<w>".into(),
            TargetToken::Boundary(Boundary::WordEnd) => "</w>".into(),
            TargetToken::ClauseSep => "***".into(),
            TargetToken::SenseTag(s) => s.to_string(),
        }
    }

    pub fn from_symbol(sym: &str) -> Option<TargetToken> {
        let mut chars = sym.chars();
        let first = chars.next()?;
        if chars.next().is_none() {
            return Some(TargetToken::CharPiece(first));
        }
        Some(match sym {
            "<w>" => TargetToken::Boundary(Boundary::WordStart),
            "</w>" => TargetToken::Boundary(Boundary::WordEnd),
            "***" => TargetToken::ClauseSep,
            _ => {
                if let Some(hex) = sym.strip_prefix("\\u{").and_then(|s| s.strip_suffix('}')) {
                    return char::from_u32(u32::from_str_radix(hex, 16).ok()?).map(TargetToken::CharPiece);
                }
                if let Some(rest) = sym.strip_prefix('@') {
                    let (letter, offset) = rest.split_once(':')?;
                    let mut lc = letter.chars();
                    let kind = VarKind::from_letter(lc.next()?)?;
                    if lc.next().is_some() {
                        return None;
                    }
                    let offset = if offset == "NEW" {
                        None
                    } else {
                        Some(offset.parse().ok()?)
                    };
                    return Some(TargetToken::RelVar(kind, offset));
                }
                if let Some(s) = Sense::parse(sym) {
                    return Some(TargetToken::SenseTag(s));
                }
                if let Some(name) = sym.strip_prefix('^') {
                    return Some(TargetToken::Structural(name.to_string()));
                }
                TargetToken::Structural(sym.to_string())
            }
        })
    }
}

impl fmt::Display for TargetToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_symbol())
    }
}

fn spell(word: &str, out: &mut Vec<TargetToken>) {
    out.push(TargetToken::Boundary(Boundary::WordStart));
    out.extend(word.chars().map(TargetToken::CharPiece));
    out.push(TargetToken::Boundary(Boundary::WordEnd));
}

#[derive(Default)]
struct Introductions {
    per_kind: [Vec<Variable>; 6],
}

fn slot(kind: VarKind) -> usize {
    VarKind::ALL.iter().position(|k| *k == kind).unwrap()
}

impl Introductions {
    fn encode(&mut self, v: Variable) -> TargetToken {
        let list = &mut self.per_kind[slot(v.kind)];
        match list.iter().position(|w| *w == v) {
            Some(k) => TargetToken::RelVar(v.kind, Some((list.len() - k) as u32)),
            None => {
                list.push(v);
                TargetToken::RelVar(v.kind, None)
            }
        }
    }
}

/// Linearizes a well-formed DRS. Each clause is followed by `ClauseSep`.
pub fn linearize(drs: &Drs) -> Result<Vec<TargetToken>, SeqError> {
    let report = referee::validate(drs);
    if !report.well_formed {
        return Err(SeqError::IllFormedInput(
            report
                .violations
                .iter()
                .map(|v| v.detail.clone())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    Ok(linearize_unchecked(drs))
}

/// Linearization without the well-formedness gate.
pub fn linearize_unchecked(drs: &Drs) -> Vec<TargetToken> {
    let mut intro = Introductions::default();
    let mut out = Vec::new();
    for c in drs.clauses() {
        out.push(intro.encode(c.box_var()));
        match c.predicate() {
            PredicateKind::Concept(lemma) => spell(lemma, &mut out),
            PredicateKind::Operator(name) | PredicateKind::Role(name) => {
                out.push(TargetToken::Structural(name.clone()))
            }
        }
        for a in c.args() {
            match a {
                Term::Var(v) => out.push(intro.encode(*v)),
                Term::Constant(s) => spell(s, &mut out),
                Term::Sense(s) => out.push(TargetToken::SenseTag(*s)),
            }
        }
        out.push(TargetToken::ClauseSep);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delinearized {
    pub drs: Drs,
    pub malformed: bool,
    pub diagnostics: Vec<String>,
}

enum Item {
    Var(VarKind, Option<u32>),
    Word(String),
    Name(String),
    Sense(Sense),
}

fn group(tokens: &[TargetToken]) -> Result<Vec<Item>, String> {
    let mut items = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match &tokens[i] {
            TargetToken::RelVar(k, d) => items.push(Item::Var(*k, *d)),
            TargetToken::Structural(n) => items.push(Item::Name(n.clone())),
            TargetToken::SenseTag(s) => items.push(Item::Sense(*s)),
            TargetToken::Boundary(Boundary::WordStart) => {
                let mut word = String::new();
                i += 1;
                loop {
                    match tokens.get(i) {
                        Some(TargetToken::CharPiece(c)) => word.push(*c),
                        Some(TargetToken::Boundary(Boundary::WordEnd)) => break,
                        _ => return Err("unterminated word".into()),
                    }
                    i += 1;
                }
                if word.is_empty() {
                    return Err("empty word".into());
                }
                items.push(Item::Word(word));
            }
            other => return Err(format!("unexpected token {other}")),
        }
        i += 1;
    }
    Ok(items)
}

/// Best-effort inverse of [`linearize`]. Clauses that cannot be rebuilt are
/// dropped and the result is flagged as malformed.
pub fn delinearize(tokens: &[TargetToken]) -> Delinearized {
    let mut per_kind: [u32; 6] = [0; 6];
    let mut clauses = Vec::new();
    let mut diagnostics = Vec::new();

    let mut chunks: Vec<&[TargetToken]> = tokens.split(|t| *t == TargetToken::ClauseSep).collect();
    // split yields a trailing remainder; it is empty iff the stream ended on a separator
    let tail = chunks.pop().unwrap_or(&[]);
    if !tail.is_empty() {
        diagnostics.push(format!("truncated clause of {} tokens dropped", tail.len()));
    }

    for (n, chunk) in chunks.into_iter().enumerate() {
        let mut counts = per_kind;
        let built = group(chunk).and_then(|items| {
            let mut resolve = |k: VarKind, d: Option<u32>| -> Result<Variable, String> {
                let s = slot(k);
                match d {
                    None => {
                        counts[s] += 1;
                        Ok(Variable::new(k, counts[s]))
                    }
                    Some(d) if d >= 1 && d <= counts[s] => Ok(Variable::new(k, counts[s] - d + 1)),
                    Some(d) => Err(format!(
                        "offset {d} for kind {} exceeds the {} introduced",
                        k.letter(),
                        counts[s]
                    )),
                }
            };
            let mut it = items.into_iter();
            let head = match it.next() {
                Some(Item::Var(VarKind::Box, d)) => resolve(VarKind::Box, d)?,
                _ => return Err("clause must start with a box variable".into()),
            };
            let predicate = match it.next() {
                Some(Item::Name(n)) => classify_predicate(&n),
                Some(Item::Word(w)) => PredicateKind::Concept(w),
                _ => return Err("missing predicate".into()),
            };
            let mut args = Vec::new();
            for item in it {
                args.push(match item {
                    Item::Var(k, d) => Term::Var(resolve(k, d)?),
                    Item::Word(w) => Term::Constant(w),
                    Item::Sense(s) => Term::Sense(s),
                    Item::Name(n) => return Err(format!("unexpected name {n} in argument position")),
                });
            }
            Clause::new(head, predicate, args)
        });
        match built {
            Ok(c) => {
                per_kind = counts;
                clauses.push(c);
            }
            Err(e) => diagnostics.push(format!("clause {}: {e}", n + 1)),
        }
    }
    let drs = Drs::from_clauses(clauses);
    Delinearized {
        malformed: !diagnostics.is_empty(),
        drs,
        diagnostics,
    }
}

/// Renders tokens as space-separated symbols.
pub fn to_symbols(tokens: &[TargetToken]) -> Vec<String> {
    tokens.iter().map(TargetToken::to_symbol).collect()
}

/// Parses symbols back into tokens; unknown symbols yield `None`.
pub fn from_symbols<S: AsRef<str>>(symbols: &[S]) -> Option<Vec<TargetToken>> {
    symbols.iter().map(|s| TargetToken::from_symbol(s.as_ref())).collect()
}
