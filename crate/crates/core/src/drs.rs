//! Clause-format DRS data model, parser and printer.
//!
//! A DRS is a flat set of clauses, one per line:
//!
//! ```text
//! b1 NEGATION b2
//! b1 time "n.08" t1
//! b3 Name x1 "boston"
//! ```
//!
//! The first token is always a box variable, the second token is the
//! predicate (operator, role or concept) and the remaining one or two tokens
//! are arguments. `%` starts a comment that runs to the end of the line.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DrsError {
    #[error("malformed clause `{line}`: {reason}")]
    MalformedClause { line: String, reason: String },
    #[error("unknown variable kind in `{0}` (expected one of b, x, e, s, t, p)")]
    UnknownVariableKind(String),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<DrsError>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl DrsError {
    fn malformed(line: &str, reason: impl Into<String>) -> Self {
        DrsError::MalformedClause {
            line: line.to_string(),
            reason: reason.into(),
        }
    }

    /// Line number the error is attached to, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            DrsError::AtLine { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Sort of discourse referent a variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VarKind {
    Box,
    Entity,
    Event,
    State,
    Time,
    Proposition,
}

impl VarKind {
    pub const ALL: [VarKind; 6] = [
        VarKind::Box,
        VarKind::Entity,
        VarKind::Event,
        VarKind::State,
        VarKind::Time,
        VarKind::Proposition,
    ];

    pub fn letter(self) -> char {
        match self {
            VarKind::Box => 'b',
            VarKind::Entity => 'x',
            VarKind::Event => 'e',
            VarKind::State => 's',
            VarKind::Time => 't',
            VarKind::Proposition => 'p',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'b' => VarKind::Box,
            'x' => VarKind::Entity,
            'e' => VarKind::Event,
            's' => VarKind::State,
            't' => VarKind::Time,
            'p' => VarKind::Proposition,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Variable {
    pub kind: VarKind,
    pub index: u32,
}

impl Variable {
    pub fn new(kind: VarKind, index: u32) -> Self {
        assert!(index >= 1, "variable indices start at 1");
        Variable { kind, index }
    }

    pub fn is_box(&self) -> bool {
        self.kind == VarKind::Box
    }

    /// Recognizes `<letter><digits>` tokens.
    ///
    /// Returns `Ok(None)` when the token does not have variable shape at all,
    /// and an error when it does but the letter or index is invalid.
    pub fn parse(token: &str) -> Result<Option<Variable>, DrsError> {
        let mut chars = token.chars();
        let Some(first) = chars.next() else {
            return Ok(None);
        };
        let digits = chars.as_str();
        if !first.is_ascii_lowercase() || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Ok(None);
        }
        let kind = VarKind::from_letter(first).ok_or_else(|| DrsError::UnknownVariableKind(token.to_string()))?;
        let index: u32 = digits
            .parse()
            .map_err(|_| DrsError::malformed(token, "variable index out of range"))?;
        if index == 0 {
            return Err(DrsError::malformed(token, "variable index must be at least 1"));
        }
        Ok(Some(Variable { kind, index }))
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.letter(), self.index)
    }
}

/// WordNet part of speech of a concept sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SensePos {
    Noun,
    Verb,
    Adjective,
    Adverb,
}

impl SensePos {
    pub fn letter(self) -> char {
        match self {
            SensePos::Noun => 'n',
            SensePos::Verb => 'v',
            SensePos::Adjective => 'a',
            SensePos::Adverb => 'r',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'n' => SensePos::Noun,
            'v' => SensePos::Verb,
            'a' => SensePos::Adjective,
            'r' => SensePos::Adverb,
            _ => return None,
        })
    }
}

/// A sense tag such as `n.08`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Sense {
    pub pos: SensePos,
    pub number: u8,
}

impl Sense {
    pub fn parse(text: &str) -> Option<Sense> {
        let b = text.as_bytes();
        if b.len() != 4 || b[1] != b'.' || !b[2].is_ascii_digit() || !b[3].is_ascii_digit() {
            return None;
        }
        let pos = SensePos::from_letter(b[0] as char)?;
        Some(Sense {
            pos,
            number: (b[2] - b'0') * 10 + (b[3] - b'0'),
        })
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.pos.letter(), self.number)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Term {
    Var(Variable),
    /// Quoted string constant; the quotes are not part of the value.
    Constant(String),
    Sense(Sense),
}

impl Term {
    pub fn as_var(&self) -> Option<Variable> {
        match self {
            Term::Var(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => v.fmt(f),
            Term::Constant(s) => write!(f, "\"{s}\""),
            Term::Sense(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PredicateKind {
    Operator(String),
    Role(String),
    Concept(String),
}

impl PredicateKind {
    pub fn name(&self) -> &str {
        match self {
            PredicateKind::Operator(s) | PredicateKind::Role(s) | PredicateKind::Concept(s) => s,
        }
    }

    pub fn is_operator(&self) -> bool {
        matches!(self, PredicateKind::Operator(_))
    }
}

/// Token class of a predicate: all-uppercase letters are operators, an
/// uppercase initial otherwise marks a role, anything else is a concept.
pub fn classify_predicate(token: &str) -> PredicateKind {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) if first.is_uppercase() => {
            if token.chars().all(|c| c.is_alphabetic() && c.is_uppercase()) {
                PredicateKind::Operator(token.to_string())
            } else {
                PredicateKind::Role(token.to_string())
            }
        }
        _ => PredicateKind::Concept(token.to_string()),
    }
}

/// Argument signature of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorArity {
    /// `b REF x`: introduces one referent.
    Introduction,
    /// `b NEGATION b'`: exactly one box argument.
    BoxScope,
    /// `b IMP b' [b'']`: one or two box arguments.
    BoxRelation,
    /// `b TPR t1 "now"`: a variable and a term.
    Comparison,
    /// Unknown operator: one or two non-sense arguments.
    Free,
}

pub fn operator_arity(name: &str) -> OperatorArity {
    match name {
        "REF" => OperatorArity::Introduction,
        "NEGATION" | "POSSIBILITY" | "NECESSITY" | "PRESUPPOSITION" => OperatorArity::BoxScope,
        "CONTINUATION" | "IMP" | "DIS" | "DUP" | "EXPLANATION" | "CONTRAST" | "RESULT" | "ELABORATION"
        | "PRECONDITION" | "COMMENTARY" | "NARRATION" | "ALTERNATION" => OperatorArity::BoxRelation,
        "TPR" | "TAB" | "TIN" | "TCT" | "EQU" | "NEQ" | "APX" | "LES" | "LEQ" => OperatorArity::Comparison,
        _ => OperatorArity::Free,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Clause {
    box_var: Variable,
    predicate: PredicateKind,
    args: Vec<Term>,
}

impl Clause {
    /// Builds a clause, checking the argument signature of its predicate.
    pub fn new(box_var: Variable, predicate: PredicateKind, args: Vec<Term>) -> Result<Self, String> {
        if !box_var.is_box() {
            return Err(format!("clause head `{box_var}` is not a box variable"));
        }
        if args.is_empty() || args.len() > 2 {
            return Err(format!("expected 1 or 2 arguments, found {}", args.len()));
        }
        let no_sense = |t: &Term| !matches!(t, Term::Sense(_));
        let is_box = |t: &Term| matches!(t, Term::Var(v) if v.is_box());
        match &predicate {
            PredicateKind::Concept(_) => {
                if !(args.len() == 2 && matches!(args[0], Term::Sense(_)) && matches!(args[1], Term::Var(_))) {
                    return Err("concept clauses take a sense and a variable".into());
                }
            }
            PredicateKind::Role(_) => {
                if !(args.len() == 2 && matches!(args[0], Term::Var(_)) && no_sense(&args[1])) {
                    return Err("role clauses take a variable and a term".into());
                }
            }
            PredicateKind::Operator(name) => {
                let ok = match operator_arity(name) {
                    OperatorArity::Introduction => args.len() == 1 && matches!(args[0], Term::Var(_)),
                    OperatorArity::BoxScope => args.len() == 1 && is_box(&args[0]),
                    OperatorArity::BoxRelation => args.iter().all(is_box),
                    OperatorArity::Comparison => {
                        args.len() == 2 && matches!(args[0], Term::Var(_)) && no_sense(&args[1])
                    }
                    OperatorArity::Free => args.iter().all(no_sense),
                };
                if !ok {
                    return Err(format!("wrong argument signature for operator {name}"));
                }
            }
        }
        if let Some(Term::Constant(s)) = args.iter().find(|t| matches!(t, Term::Constant(s) if s.is_empty())) {
            return Err(format!("empty constant {s:?}"));
        }
        Ok(Clause {
            box_var,
            predicate,
            args,
        })
    }

    pub fn box_var(&self) -> Variable {
        self.box_var
    }

    pub fn predicate(&self) -> &PredicateKind {
        &self.predicate
    }

    pub fn args(&self) -> &[Term] {
        &self.args
    }

    /// All variables of the clause, head first, in token order.
    pub fn variables(&self) -> impl Iterator<Item = Variable> + '_ {
        std::iter::once(self.box_var).chain(self.args.iter().filter_map(Term::as_var))
    }

    /// Copy of the clause with every variable passed through `f`.
    pub fn map_vars(&self, mut f: impl FnMut(Variable) -> Variable) -> Clause {
        Clause {
            box_var: f(self.box_var),
            predicate: self.predicate.clone(),
            args: self
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => Term::Var(f(*v)),
                    other => other.clone(),
                })
                .collect(),
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.box_var, self.predicate.name())?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

enum RawToken<'a> {
    Bare(&'a str),
    Quoted(&'a str),
}

/// Splits a clause line into tokens, honoring quotes and dropping a trailing
/// `%` comment.
fn tokenize(line: &str) -> Result<Vec<RawToken<'_>>, DrsError> {
    let mut tokens = Vec::new();
    let mut rest = line;
    loop {
        rest = rest.trim_start();
        if rest.is_empty() || rest.starts_with('%') {
            break;
        }
        if let Some(body) = rest.strip_prefix('"') {
            let end = body
                .find('"')
                .ok_or_else(|| DrsError::malformed(line, "unbalanced quotes"))?;
            let after = &body[end + 1..];
            if !(after.is_empty() || after.starts_with(char::is_whitespace) || after.starts_with('%')) {
                return Err(DrsError::malformed(line, "quoted token runs into the next token"));
            }
            tokens.push(RawToken::Quoted(&body[..end]));
            rest = after;
        } else {
            let end = rest.find(|c: char| c.is_whitespace() || c == '%').unwrap_or(rest.len());
            let tok = &rest[..end];
            if tok.contains('"') {
                return Err(DrsError::malformed(line, "unbalanced quotes"));
            }
            tokens.push(RawToken::Bare(tok));
            rest = &rest[end..];
        }
    }
    Ok(tokens)
}

pub fn parse_clause(line: &str) -> Result<Clause, DrsError> {
    let tokens = tokenize(line)?;
    if tokens.len() < 3 || tokens.len() > 4 {
        return Err(DrsError::malformed(
            line.trim(),
            format!("expected 3 or 4 tokens, found {}", tokens.len()),
        ));
    }
    let box_var = match &tokens[0] {
        RawToken::Bare(t) => Variable::parse(t)?.filter(Variable::is_box),
        RawToken::Quoted(_) => None,
    }
    .ok_or_else(|| DrsError::malformed(line.trim(), "first token must be a box variable"))?;
    let predicate = match &tokens[1] {
        RawToken::Bare(t) => classify_predicate(t),
        RawToken::Quoted(_) => return Err(DrsError::malformed(line.trim(), "predicate must not be quoted")),
    };
    let is_concept = matches!(predicate, PredicateKind::Concept(_));
    let mut args = Vec::with_capacity(2);
    for (i, tok) in tokens[2..].iter().enumerate() {
        let term = match tok {
            RawToken::Bare(t) => Term::Var(Variable::parse(t)?.ok_or_else(|| {
                DrsError::malformed(line.trim(), format!("unquoted argument `{t}` is not a variable"))
            })?),
            RawToken::Quoted(q) if is_concept && i == 0 => Term::Sense(
                Sense::parse(q)
                    .ok_or_else(|| DrsError::malformed(line.trim(), format!("`{q}` is not a sense (e.g. n.01)")))?,
            ),
            RawToken::Quoted(q) => Term::Constant(q.to_string()),
        };
        args.push(term);
    }
    Clause::new(box_var, predicate, args).map_err(|reason| DrsError::malformed(line.trim(), reason))
}

/// Document-level metadata carried in `%` comment lines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DocMeta {
    /// From a `%%% <id>` line.
    pub id: Option<String>,
    /// From the first `% <text>` line.
    pub sentence: Option<String>,
    /// `%! ...` diagnostics; their presence marks a malformed decoder output.
    pub diagnostics: Vec<String>,
    /// Every other comment line, verbatim.
    pub comments: Vec<String>,
    /// Per-token tag channels (e.g. `sem`), attached from tag files.
    pub tags: BTreeMap<String, Vec<String>>,
    pub duplicates_dropped: usize,
}

impl DocMeta {
    pub fn is_malformed(&self) -> bool {
        !self.diagnostics.is_empty()
    }

    pub fn semtags(&self) -> Option<&[String]> {
        self.tags.get("sem").map(Vec::as_slice)
    }

    /// Whitespace tokens of the raw sentence.
    pub fn tokens(&self) -> Vec<&str> {
        self.sentence
            .as_deref()
            .map(|s| s.split_whitespace().collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Drs {
    clauses: Vec<Clause>,
    pub meta: DocMeta,
}

impl Drs {
    /// Builds a DRS from clauses in order, dropping repeated clauses.
    pub fn from_clauses(clauses: impl IntoIterator<Item = Clause>) -> Self {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut dropped = 0;
        for c in clauses {
            if seen.contains(&c) {
                dropped += 1;
            } else {
                seen.insert(c.clone());
                kept.push(c);
            }
        }
        Drs {
            clauses: kept,
            meta: DocMeta {
                duplicates_dropped: dropped,
                ..DocMeta::default()
            },
        }
    }

    pub fn with_meta(mut self, meta: DocMeta) -> Self {
        let dropped = self.meta.duplicates_dropped;
        self.meta = meta;
        self.meta.duplicates_dropped = dropped;
        self
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Distinct variables in order of first occurrence.
    pub fn variables(&self) -> Vec<Variable> {
        let mut seen = HashSet::new();
        self.clauses
            .iter()
            .flat_map(Clause::variables)
            .filter(|v| seen.insert(*v))
            .collect()
    }

    /// Copy without the clauses matching `drop`; metadata is kept.
    pub fn without(&self, mut drop: impl FnMut(&Clause) -> bool) -> Drs {
        Drs {
            clauses: self.clauses.iter().filter(|c| !drop(c)).cloned().collect(),
            meta: self.meta.clone(),
        }
    }

    /// Copy with extra clauses appended (duplicates dropped).
    pub fn with_clauses(&self, extra: impl IntoIterator<Item = Clause>) -> Drs {
        let mut d = Drs::from_clauses(self.clauses.iter().cloned().chain(extra));
        d.meta = DocMeta {
            duplicates_dropped: d.meta.duplicates_dropped,
            ..self.meta.clone()
        };
        d
    }

    pub fn map_vars(&self, mut f: impl FnMut(Variable) -> Variable) -> Drs {
        Drs::from_clauses(self.clauses.iter().map(|c| c.map_vars(&mut f))).with_meta(self.meta.clone())
    }
}

/// Parses one clause block. Line numbers in errors are 1-based within `text`.
pub fn parse_document(text: &str) -> Result<Drs, DrsError> {
    parse_block(text, 0)
}

fn parse_block(text: &str, line_offset: usize) -> Result<Drs, DrsError> {
    let mut clauses = Vec::new();
    let mut meta = DocMeta::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('%') {
            if let Some(id) = comment.strip_prefix("%% ") {
                meta.id.get_or_insert_with(|| id.trim().to_string());
            } else if let Some(diag) = comment.strip_prefix("! ") {
                meta.diagnostics.push(diag.to_string());
            } else if let (Some(sentence), None) = (comment.strip_prefix(' '), &meta.sentence) {
                meta.sentence = Some(sentence.to_string());
            } else {
                meta.comments.push(trimmed.to_string());
            }
            continue;
        }
        let clause = parse_clause(line).map_err(|e| DrsError::AtLine {
            line: line_offset + i + 1,
            source: Box::new(e),
        })?;
        clauses.push(clause);
    }
    Ok(Drs::from_clauses(clauses).with_meta(meta))
}

/// Prints a DRS in clause format: metadata comments first, then one clause per
/// line in stored order, LF-terminated.
pub fn render(drs: &Drs) -> String {
    let mut out = String::new();
    let meta = &drs.meta;
    if let Some(id) = &meta.id {
        out.push_str(&format!("%%% {id}\n"));
    }
    if let Some(s) = &meta.sentence {
        out.push_str(&format!("% {s}\n"));
    }
    for d in &meta.diagnostics {
        out.push_str(&format!("%! {d}\n"));
    }
    for c in &meta.comments {
        out.push_str(c);
        out.push('\n');
    }
    for c in &drs.clauses {
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}

/// Renders documents separated by single blank lines.
pub fn render_corpus<'a>(docs: impl IntoIterator<Item = &'a Drs>) -> String {
    let mut out = String::new();
    for (i, d) in docs.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let text = render(d);
        if text.is_empty() {
            // an empty document still needs a placeholder to keep alignment
            out.push_str("%\n");
        } else {
            out.push_str(&text);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("document {index} (starting at line {first_line}): {error}")]
pub struct BlockError {
    pub index: usize,
    pub first_line: usize,
    pub error: DrsError,
}

/// Streaming reader yielding one parsed document per blank-line-separated
/// block.
pub struct CorpusReader<R> {
    input: R,
    line_no: usize,
    index: usize,
    done: bool,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(input: R) -> Self {
        CorpusReader {
            input,
            line_no: 0,
            index: 0,
            done: false,
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Drs, BlockError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut block = String::new();
        let mut first_line = 0;
        let mut line = String::new();
        loop {
            line.clear();
            let n = match self.input.read_line(&mut line) {
                Ok(n) => n,
                Err(e) => {
                    self.done = true;
                    return Some(Err(BlockError {
                        index: self.index,
                        first_line: self.line_no + 1,
                        error: DrsError::Io(e.to_string()),
                    }));
                }
            };
            if n == 0 {
                self.done = true;
                break;
            }
            self.line_no += 1;
            if line.trim().is_empty() {
                if block.is_empty() {
                    continue;
                }
                break;
            }
            if block.is_empty() {
                first_line = self.line_no;
            }
            block.push_str(&line);
        }
        if block.is_empty() {
            return None;
        }
        let index = self.index;
        self.index += 1;
        Some(parse_block(&block, first_line - 1).map_err(|error| BlockError {
            index,
            first_line,
            error,
        }))
    }
}

/// How `parse_corpus` treats a document that fails to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    FailFast,
    /// Keep going; failed blocks become empty documents flagged with a
    /// diagnostic so that positions stay aligned.
    SkipAndReport,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub docs: Vec<Drs>,
    pub errors: Vec<BlockError>,
}

pub fn parse_corpus(input: impl BufRead, mode: ErrorMode) -> Result<Corpus, BlockError> {
    let mut corpus = Corpus::default();
    for item in CorpusReader::new(input) {
        match item {
            Ok(d) => corpus.docs.push(d),
            Err(e) if mode == ErrorMode::FailFast => return Err(e),
            Err(e) => {
                let mut placeholder = Drs::default();
                placeholder.meta.diagnostics.push(format!("unparsable: {}", e.error));
                corpus.docs.push(placeholder);
                corpus.errors.push(e);
            }
        }
    }
    Ok(corpus)
}

/// Convenience wrapper for in-memory text in fail-fast mode.
pub fn parse_corpus_str(text: &str) -> Result<Vec<Drs>, BlockError> {
    parse_corpus(text.as_bytes(), ErrorMode::FailFast).map(|c| c.docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEGATION_EXAMPLE: &str = include_str!("../tests/data/negation_example.drs");

    fn v(s: &str) -> Variable {
        Variable::parse(s).unwrap().unwrap()
    }

    #[test]
    fn parses_operator_clause() {
        let c = parse_clause("b1 NEGATION b2").unwrap();
        assert_eq!(c.box_var(), v("b1"));
        assert_eq!(c.predicate(), &PredicateKind::Operator("NEGATION".into()));
        assert_eq!(c.args(), &[Term::Var(v("b2"))]);
    }

    #[test]
    fn parses_concept_clause() {
        let c = parse_clause("b2 time \"n.08\" t2").unwrap();
        assert_eq!(c.predicate(), &PredicateKind::Concept("time".into()));
        assert_eq!(
            c.args(),
            &[
                Term::Sense(Sense {
                    pos: SensePos::Noun,
                    number: 8
                }),
                Term::Var(v("t2"))
            ]
        );
        assert_eq!(c.to_string(), "b2 time \"n.08\" t2");
    }

    #[test]
    fn rejects_short_clause() {
        assert!(matches!(parse_clause("b1 REF"), Err(DrsError::MalformedClause { .. })));
    }

    #[test]
    fn rejects_bad_heads_and_kinds() {
        assert!(matches!(
            parse_clause("x1 REF x2"),
            Err(DrsError::MalformedClause { .. })
        ));
        assert!(matches!(
            parse_clause("b1 REF q1"),
            Err(DrsError::UnknownVariableKind(_))
        ));
        assert!(matches!(
            parse_clause("b1 Name x1 \"bos"),
            Err(DrsError::MalformedClause { .. })
        ));
        assert!(matches!(
            parse_clause("b1 REF x0"),
            Err(DrsError::MalformedClause { .. })
        ));
        assert!(parse_clause("b1 city \"n.1\" x1").is_err());
        assert!(parse_clause("b1 city x1 x2").is_err());
        assert!(parse_clause("b1 Name x1 \"\"").is_err());
    }

    #[test]
    fn normalizes_whitespace_and_comments() {
        let c = parse_clause("  b3   Name\tx1  \"boston\"   % Boston [27...33]").unwrap();
        assert_eq!(c.to_string(), "b3 Name x1 \"boston\"");
        let c = parse_clause("b1 Name x1 \"50% off\"").unwrap();
        assert_eq!(c.args()[1], Term::Constant("50% off".into()));
    }

    #[test]
    fn classifies_negation_example_predicates() {
        assert!(matches!(
            classify_predicate("PRESUPPOSITION"),
            PredicateKind::Operator(_)
        ));
        assert!(matches!(classify_predicate("TPR"), PredicateKind::Operator(_)));
        assert!(matches!(classify_predicate("YearOfCentury"), PredicateKind::Role(_)));
        assert!(matches!(classify_predicate("Co-Theme"), PredicateKind::Role(_)));
        assert!(matches!(classify_predicate("city"), PredicateKind::Concept(_)));
        assert!(matches!(classify_predicate("new_york"), PredicateKind::Concept(_)));
    }

    #[test]
    fn negation_example_round_trips() {
        let d = parse_document(NEGATION_EXAMPLE).unwrap();
        assert_eq!(d.len(), 17);
        assert_eq!(render(&d), NEGATION_EXAMPLE);
        assert_eq!(parse_document(&render(&d)).unwrap(), d);
    }

    #[test]
    fn empty_block_is_empty_drs() {
        let d = parse_document("").unwrap();
        assert!(d.is_empty());
        assert_eq!(render(&d), "");
    }

    #[test]
    fn reports_error_line() {
        let err = parse_document("b1 REF x1\n% comment\nb1 REF\n").unwrap_err();
        assert_eq!(err.line(), Some(3));
    }

    #[test]
    fn drops_duplicates_and_reads_meta() {
        let text = "%%% p00/d1489\n% I haven't been to Boston since 2013 .\n% tok align\nb1 REF x1\r\nb1 REF x1\nb1 city \"n.01\" x1\n";
        let d = parse_document(text).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.meta.duplicates_dropped, 1);
        assert_eq!(d.meta.id.as_deref(), Some("p00/d1489"));
        assert_eq!(
            d.meta.sentence.as_deref(),
            Some("I haven't been to Boston since 2013 .")
        );
        assert_eq!(d.meta.comments, vec!["% tok align".to_string()]);
        assert_eq!(d.meta.tokens().len(), 8);
        let again = parse_document(&render(&d)).unwrap();
        assert_eq!(again.clauses(), d.clauses());
        assert_eq!(again.meta.sentence, d.meta.sentence);
    }

    #[test]
    fn corpus_blocks() {
        let two = format!("{NEGATION_EXAMPLE}\n\n{NEGATION_EXAMPLE}\n\n\n");
        let docs = parse_corpus_str(&two).unwrap();
        assert_eq!(docs.len(), 2);
        assert!(docs.iter().all(|d| d.len() == 17));
    }

    #[test]
    fn corpus_error_modes() {
        let text = "b1 REF x1\n\nb1 REF\n\nb2 REF x2\n";
        let err = parse_corpus(text.as_bytes(), ErrorMode::FailFast).unwrap_err();
        assert_eq!(err.index, 1);
        assert_eq!(err.error.line(), Some(3));
        let c = parse_corpus(text.as_bytes(), ErrorMode::SkipAndReport).unwrap();
        assert_eq!(c.docs.len(), 3);
        assert_eq!(c.errors.len(), 1);
        assert!(c.docs[1].meta.is_malformed());
    }

    #[test]
    fn render_corpus_keeps_empty_documents() {
        let docs = vec![Drs::default(), parse_document("b1 REF x1").unwrap()];
        let text = render_corpus(&docs);
        let back = parse_corpus_str(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].is_empty());
    }
}
