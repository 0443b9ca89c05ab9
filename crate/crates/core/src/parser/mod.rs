//! Reader and writer for the model language (`.pbn`), evidence files (`.ev`)
//! and specialized programs.
//!
//! ```text
//! population student = {s1, s2}.
//! parrv iq(student) states {high, low}.
//! cpd iq(_S) ~ [high:0.5, low:0.5].
//! cpd grade(S,C) ~ [a:0.7,b:0.2,c:0.1] :- iq(S,high), level(C,intro).
//! cpd graduates(S) ~ [yes:0.5,no:0.5] :- count(C, grade(S,C,a)) < 2.
//! ```
//!
//! A specialized program is a model followed by a `specialized.` marker and
//! one entry per CPD-query: either ground clauses (`cpd graduates(s1) ~ ...`),
//! possibly with `;` disjunctions and `count{...}+k < n` forms, or
//! `unchanged grade(s1,c1).` for queries that keep the original list.

mod lexer;
mod serialize;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{
    BodyFormula, CategoricalDistribution, Clause, Comparator, CountConstraint, CountSource,
    DecisionList, Domain, GroundRv, Literal, Model, ParRvDecl, ParRvId, PopId, Population, RvId,
    Sym, Symbols, Term, VarId, VarInfo,
};
use crate::specialize::{SpecEntry, SpecializedProgram};
use crate::state::Evidence;
use crate::validate::{validate_model, ValidationReport};
use lexer::{tokenize, Tok, Token};

pub use serialize::{serialize_body, serialize_model, serialize_specialized};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: Option<String>,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(file) => write!(f, "{}:{}:{}", file, self.line, self.column),
            None => write!(f, "{}:{}", self.line, self.column),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{span}: {message}")]
    Syntax { span: SourceSpan, message: String },
    #[error("{span}: {message}")]
    Undeclared { span: SourceSpan, message: String },
    #[error("no populations declared")]
    Empty,
    #[error("invalid model: {0}")]
    Invalid(ValidationReport),
    #[error("{span}: unknown RV `{rv}`")]
    UnknownRv { span: SourceSpan, rv: String },
    #[error("{span}: state `{state}` is not in the range of `{rv}`")]
    StateNotInRange {
        span: SourceSpan,
        rv: String,
        state: String,
    },
    #[error("{span}: `{rv}` is assigned more than once")]
    Duplicate { span: SourceSpan, rv: String },
    #[error("{span}: {message}")]
    Specialized { span: SourceSpan, message: String },
}

impl ParseError {
    fn syntax(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            span,
            message: message.into(),
        }
    }

    pub fn span(&self) -> Option<&SourceSpan> {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::Undeclared { span, .. }
            | ParseError::UnknownRv { span, .. }
            | ParseError::StateNotInRange { span, .. }
            | ParseError::Duplicate { span, .. }
            | ParseError::Specialized { span, .. } => Some(span),
            ParseError::Empty | ParseError::Invalid(_) => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Raw syntax tree

#[derive(Clone, Debug)]
enum RawTermKind {
    Const(String),
    Var(String),
}

#[derive(Clone, Debug)]
struct RawTerm {
    kind: RawTermKind,
    span: SourceSpan,
}

#[derive(Clone, Debug)]
struct RawLiteral {
    negated: bool,
    name: String,
    span: SourceSpan,
    terms: Vec<RawTerm>,
}

#[derive(Clone, Debug)]
enum RawBody {
    True,
    False,
    Lit(RawLiteral),
    CountGoal {
        var: String,
        goal: RawLiteral,
        cmp: Comparator,
        bound: i64,
    },
    CountGround {
        items: Vec<RawBody>,
        offset: u32,
        cmp: Comparator,
        bound: i64,
        span: SourceSpan,
    },
    And(Vec<RawBody>),
    Or(Vec<RawBody>, SourceSpan),
}

#[derive(Clone, Debug)]
struct RawCpd {
    name: String,
    span: SourceSpan,
    head: Vec<RawTerm>,
    dist: Vec<(String, f64)>,
    body: Option<RawBody>,
}

#[derive(Clone, Debug)]
enum Stmt {
    Population {
        name: String,
        members: Vec<String>,
        span: SourceSpan,
    },
    ParRv {
        name: String,
        params: Vec<(String, SourceSpan)>,
        states: Vec<String>,
        span: SourceSpan,
    },
    Cpd(RawCpd),
    Specialized(SourceSpan),
    Unchanged {
        name: String,
        params: Vec<String>,
        span: SourceSpan,
    },
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(text: &str, file: Option<&str>) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: tokenize(text, file)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<SourceSpan, ParseError> {
        if self.peek() == &tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        ParseError::syntax(
            self.span(),
            format!("expected {what}, found {}", self.peek().describe()),
        )
    }

    fn ident(&mut self, what: &str) -> Result<(String, SourceSpan), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.bump().span)),
            _ => Err(self.unexpected(what)),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let neg = self.eat(&Tok::Minus);
        match *self.peek() {
            Tok::Int(i) => {
                self.bump();
                Ok(if neg { -i } else { i })
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn ident_list(&mut self, open: Tok, close: Tok) -> Result<Vec<(String, SourceSpan)>, ParseError> {
        self.expect(open, "a list")?;
        let mut out = Vec::new();
        if self.eat(&close) {
            return Ok(out);
        }
        loop {
            out.push(self.ident("a constant")?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            if self.peek() == &close {
                self.bump();
                return Ok(out);
            }
            return Err(self.unexpected("`,` or end of list"));
        }
    }

    fn program(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut stmts = Vec::new();
        while self.peek() != &Tok::Eof {
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.span();
        let (kw, _) = self.ident("a statement keyword")?;
        let stmt = match kw.as_str() {
            "population" => {
                let (name, _) = self.ident("a population name")?;
                self.expect(Tok::Eq, "`=`")?;
                let members = self
                    .ident_list(Tok::LBrace, Tok::RBrace)?
                    .into_iter()
                    .map(|m| m.0)
                    .collect();
                Stmt::Population {
                    name,
                    members,
                    span,
                }
            }
            "parrv" => {
                let (name, _) = self.ident("a parRV name")?;
                let params = if self.peek() == &Tok::LParen {
                    self.ident_list(Tok::LParen, Tok::RParen)?
                } else {
                    Vec::new()
                };
                match self.ident("`states`")? {
                    (s, _) if s == "states" => {}
                    (_, sp) => return Err(ParseError::syntax(sp, "expected `states`")),
                }
                let states = self
                    .ident_list(Tok::LBrace, Tok::RBrace)?
                    .into_iter()
                    .map(|s| s.0)
                    .collect();
                Stmt::ParRv {
                    name,
                    params,
                    states,
                    span,
                }
            }
            "cpd" => Stmt::Cpd(self.cpd(span)?),
            "specialized" => Stmt::Specialized(span),
            "unchanged" => {
                let (name, _) = self.ident("a parRV name")?;
                let params = if self.peek() == &Tok::LParen {
                    self.ident_list(Tok::LParen, Tok::RParen)?
                        .into_iter()
                        .map(|p| p.0)
                        .collect()
                } else {
                    Vec::new()
                };
                Stmt::Unchanged { name, params, span }
            }
            other => {
                return Err(ParseError::syntax(
                    span,
                    format!("unknown statement `{other}`"),
                ))
            }
        };
        self.expect(Tok::Dot, "`.`")?;
        Ok(stmt)
    }

    fn term(&mut self) -> Result<RawTerm, ParseError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Ident(s) => RawTermKind::Const(s),
            Tok::Var(s) => RawTermKind::Var(s),
            _ => return Err(self.unexpected("a term")),
        };
        self.bump();
        Ok(RawTerm { kind, span })
    }

    fn terms(&mut self) -> Result<Vec<RawTerm>, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(self.term()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "`,` or `)`")?;
            return Ok(out);
        }
    }

    fn cpd(&mut self, span: SourceSpan) -> Result<RawCpd, ParseError> {
        let (name, _) = self.ident("a parRV name")?;
        let head = if self.peek() == &Tok::LParen {
            self.terms()?
        } else {
            Vec::new()
        };
        self.expect(Tok::Tilde, "`~`")?;
        self.expect(Tok::LBracket, "`[`")?;
        let mut dist = Vec::new();
        loop {
            let (state, _) = self.ident("a state")?;
            self.expect(Tok::Colon, "`:`")?;
            let p = match *self.peek() {
                Tok::Float(f) => f,
                Tok::Int(i) => i as f64,
                _ => return Err(self.unexpected("a probability")),
            };
            self.bump();
            dist.push((state, p));
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RBracket, "`,` or `]`")?;
            break;
        }
        let body = if self.eat(&Tok::Neck) {
            Some(self.disj()?)
        } else {
            None
        };
        Ok(RawCpd {
            name,
            span,
            head,
            dist,
            body,
        })
    }

    fn disj(&mut self) -> Result<RawBody, ParseError> {
        let span = self.span();
        let mut items = vec![self.conj()?];
        while self.eat(&Tok::Semi) {
            items.push(self.conj()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            RawBody::Or(items, span)
        })
    }

    fn conj(&mut self) -> Result<RawBody, ParseError> {
        let mut items = vec![self.atom()?];
        while self.eat(&Tok::Comma) {
            items.push(self.atom()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            RawBody::And(items)
        })
    }

    fn literal(&mut self, negated: bool) -> Result<RawLiteral, ParseError> {
        let (name, span) = self.ident("a literal")?;
        let terms = self.terms()?;
        if terms.is_empty() {
            return Err(ParseError::syntax(span, "a literal needs a state argument"));
        }
        Ok(RawLiteral {
            negated,
            name,
            span,
            terms,
        })
    }

    fn comparator(&mut self) -> Result<Comparator, ParseError> {
        let cmp = match self.peek() {
            Tok::Lt => Comparator::Lt,
            Tok::Le => Comparator::Le,
            Tok::Eq => Comparator::Eq,
            Tok::Ge => Comparator::Ge,
            Tok::Gt => Comparator::Gt,
            _ => return Err(self.unexpected("a comparison operator")),
        };
        self.bump();
        Ok(cmp)
    }

    fn atom(&mut self) -> Result<RawBody, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.disj()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(w) if w == "true" && self.peek_at(1) != &Tok::LParen => {
                self.bump();
                Ok(RawBody::True)
            }
            Tok::Ident(w) if w == "false" && self.peek_at(1) != &Tok::LParen => {
                self.bump();
                Ok(RawBody::False)
            }
            Tok::Ident(w) if w == "not" && self.peek_at(1) != &Tok::LParen => {
                self.bump();
                Ok(RawBody::Lit(self.literal(true)?))
            }
            Tok::Ident(w) if w == "count" && self.peek_at(1) == &Tok::LBrace => {
                self.bump();
                self.bump();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        items.push(self.atom()?);
                        if self.eat(&Tok::Semi) {
                            continue;
                        }
                        self.expect(Tok::RBrace, "`;` or `}`")?;
                        break;
                    }
                }
                let offset = if self.eat(&Tok::Plus) {
                    let k = self.int()?;
                    u32::try_from(k)
                        .map_err(|_| ParseError::syntax(span.clone(), "offset out of range"))?
                } else {
                    0
                };
                let cmp = self.comparator()?;
                let bound = self.int()?;
                Ok(RawBody::CountGround {
                    items,
                    offset,
                    cmp,
                    bound,
                    span,
                })
            }
            Tok::Ident(w) if w == "count" && matches!(self.peek_at(2), Tok::Var(_)) => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let var = match self.bump().tok {
                    Tok::Var(v) => v,
                    _ => unreachable!(),
                };
                self.expect(Tok::Comma, "`,`")?;
                let goal = self.literal(false)?;
                self.expect(Tok::RParen, "`)`")?;
                let cmp = self.comparator()?;
                let bound = self.int()?;
                Ok(RawBody::CountGoal {
                    var,
                    goal,
                    cmp,
                    bound,
                })
            }
            Tok::Ident(_) => Ok(RawBody::Lit(self.literal(false)?)),
            _ => Err(self.unexpected("a body atom")),
        }
    }

    fn ground_rv(&mut self) -> Result<(String, Vec<String>, SourceSpan), ParseError> {
        let (name, span) = self.ident("an RV")?;
        let params = if self.peek() == &Tok::LParen {
            self.ident_list(Tok::LParen, Tok::RParen)?
                .into_iter()
                .map(|p| p.0)
                .collect()
        } else {
            Vec::new()
        };
        Ok((name, params, span))
    }
}

// ---------------------------------------------------------------------------
// Resolution

struct ClauseScope {
    names: Vec<String>,
    ids: HashMap<String, VarId>,
}

impl ClauseScope {
    fn new() -> Self {
        ClauseScope {
            names: Vec::new(),
            ids: HashMap::new(),
        }
    }

    fn var(&mut self, name: &str) -> VarId {
        if name != "_" {
            if let Some(&v) = self.ids.get(name) {
                return v;
            }
        }
        let v = VarId(self.names.len() as u32);
        self.names.push(name.to_owned());
        if name != "_" {
            self.ids.insert(name.to_owned(), v);
        }
        v
    }
}

struct Resolver<'a> {
    symbols: Symbols,
    parrv_ids: HashMap<String, ParRvId>,
    parrvs: &'a [ParRvDecl],
}

impl Resolver<'_> {
    fn parrv(&self, name: &str, span: &SourceSpan) -> Result<ParRvId, ParseError> {
        self.parrv_ids
            .get(name)
            .copied()
            .ok_or_else(|| ParseError::Undeclared {
                span: span.clone(),
                message: format!("undeclared parRV `{name}`"),
            })
    }

    fn term(&mut self, t: &RawTerm, scope: &mut ClauseScope) -> Term {
        match &t.kind {
            RawTermKind::Const(c) => Term::Const(self.symbols.intern(c)),
            RawTermKind::Var(v) => Term::Var(scope.var(v)),
        }
    }

    fn literal(&mut self, l: &RawLiteral, scope: &mut ClauseScope) -> Result<Literal, ParseError> {
        let parrv = self.parrv(&l.name, &l.span)?;
        let mut terms: Vec<Term> = l.terms.iter().map(|t| self.term(t, scope)).collect();
        let state = terms.pop().expect("literal has a state term");
        Ok(Literal {
            negated: l.negated,
            parrv,
            args: terms,
            state,
        })
    }

    fn body(
        &mut self,
        b: &RawBody,
        scope: &mut ClauseScope,
        extended: bool,
    ) -> Result<BodyFormula, ParseError> {
        Ok(match b {
            RawBody::True => BodyFormula::True,
            RawBody::False => BodyFormula::False,
            RawBody::Lit(l) => BodyFormula::Lit(self.literal(l, scope)?),
            RawBody::CountGoal {
                var,
                goal,
                cmp,
                bound,
            } => {
                let var = scope.var(var);
                let goal = self.literal(goal, scope)?;
                BodyFormula::Count(CountConstraint {
                    source: CountSource::Goal { var, goal },
                    offset: 0,
                    cmp: *cmp,
                    bound: *bound,
                })
            }
            RawBody::CountGround {
                items,
                offset,
                cmp,
                bound,
                span,
            } => {
                if !extended {
                    return Err(ParseError::syntax(
                        span.clone(),
                        "grounded count is only allowed in specialized programs",
                    ));
                }
                let items = items
                    .iter()
                    .map(|i| self.body(i, scope, extended))
                    .collect::<Result<_, _>>()?;
                BodyFormula::Count(CountConstraint {
                    source: CountSource::Ground(items),
                    offset: *offset,
                    cmp: *cmp,
                    bound: *bound,
                })
            }
            RawBody::And(xs) => BodyFormula::And(
                xs.iter()
                    .map(|x| self.body(x, scope, extended))
                    .collect::<Result<_, _>>()?,
            ),
            RawBody::Or(xs, span) => {
                if !extended {
                    return Err(ParseError::syntax(
                        span.clone(),
                        "disjunction is only allowed in specialized programs",
                    ));
                }
                BodyFormula::Or(
                    xs.iter()
                        .map(|x| self.body(x, scope, extended))
                        .collect::<Result<_, _>>()?,
                )
            }
        })
    }

    fn clause(
        &mut self,
        cpd: &RawCpd,
        parrv: ParRvId,
        extended: bool,
    ) -> Result<Clause, ParseError> {
        let mut scope = ClauseScope::new();
        let head: Vec<Term> = cpd.head.iter().map(|t| self.term(t, &mut scope)).collect();
        let body = match &cpd.body {
            Some(b) => self.body(b, &mut scope, extended)?,
            None => BodyFormula::True,
        };
        let entries = cpd
            .dist
            .iter()
            .map(|(s, p)| (self.symbols.intern(s), *p))
            .collect();
        let range = &self.parrvs[parrv.0 as usize].range;
        let distribution = order_distribution(entries, range);
        let domains = infer_domains(self.parrvs, parrv, &head, &body, scope.names.len());
        let vars = scope
            .names
            .into_iter()
            .zip(domains)
            .map(|(name, domain)| VarInfo { name, domain })
            .collect();
        Ok(Clause {
            head,
            distribution,
            body,
            vars,
        })
    }
}

/// Reorder entries into range order when they form a permutation of it.
fn order_distribution(entries: Vec<(Sym, f64)>, range: &[Sym]) -> CategoricalDistribution {
    let mut ordered = Vec::with_capacity(range.len());
    if entries.len() == range.len() {
        for s in range {
            match entries.iter().find(|e| e.0 == *s) {
                Some(e) => ordered.push(*e),
                None => return CategoricalDistribution::new(entries),
            }
        }
        CategoricalDistribution::new(ordered)
    } else {
        CategoricalDistribution::new(entries)
    }
}

/// Each variable's enumeration domain is the sort of its first occurrence
/// (head first, then the body in textual order).
pub(crate) fn infer_domains(
    parrvs: &[ParRvDecl],
    head_parrv: ParRvId,
    head: &[Term],
    body: &BodyFormula,
    n_vars: usize,
) -> Vec<Domain> {
    let mut out: Vec<Option<Domain>> = vec![None; n_vars];
    let decl = &parrvs[head_parrv.0 as usize];
    for (k, t) in head.iter().enumerate() {
        if let (Term::Var(v), Some(&pop)) = (t, decl.param_types.get(k)) {
            out[v.index()].get_or_insert(Domain::Population(pop));
        }
    }
    fn walk(parrvs: &[ParRvDecl], f: &BodyFormula, out: &mut [Option<Domain>]) {
        let mut lit = |l: &Literal| {
            let decl = &parrvs[l.parrv.0 as usize];
            for (k, t) in l.args.iter().enumerate() {
                if let (Term::Var(v), Some(&pop)) = (t, decl.param_types.get(k)) {
                    out[v.index()].get_or_insert(Domain::Population(pop));
                }
            }
            if let Term::Var(v) = l.state {
                out[v.index()].get_or_insert(Domain::Range(l.parrv));
            }
        };
        f.for_each_literal(&mut lit);
    }
    walk(parrvs, body, &mut out);
    out.into_iter()
        .map(|d| d.unwrap_or(Domain::Range(head_parrv)))
        .collect()
}

struct Declarations {
    symbols: Symbols,
    populations: Vec<Population>,
    parrvs: Vec<ParRvDecl>,
    parrv_ids: HashMap<String, ParRvId>,
}

fn declarations(stmts: &[Stmt]) -> Result<Declarations, ParseError> {
    let mut symbols = Symbols::default();
    let mut populations = Vec::new();
    let mut pop_ids = HashMap::new();
    for s in stmts {
        if let Stmt::Population {
            name,
            members,
            span,
        } = s
        {
            if pop_ids.contains_key(name) {
                return Err(ParseError::syntax(
                    span.clone(),
                    format!("population `{name}` declared twice"),
                ));
            }
            pop_ids.insert(name.clone(), PopId(populations.len() as u32));
            populations.push(Population {
                name: name.clone(),
                members: members.iter().map(|m| symbols.intern(m)).collect(),
            });
        }
    }
    let mut parrvs = Vec::new();
    let mut parrv_ids = HashMap::new();
    for s in stmts {
        if let Stmt::ParRv {
            name,
            params,
            states,
            span,
        } = s
        {
            if parrv_ids.contains_key(name) {
                return Err(ParseError::syntax(
                    span.clone(),
                    format!("parRV `{name}` declared twice"),
                ));
            }
            let mut param_types = Vec::new();
            for (p, pspan) in params {
                match pop_ids.get(p) {
                    Some(&id) => param_types.push(id),
                    None => {
                        return Err(ParseError::Undeclared {
                            span: pspan.clone(),
                            message: format!("undeclared population `{p}`"),
                        })
                    }
                }
            }
            parrv_ids.insert(name.clone(), ParRvId(parrvs.len() as u32));
            parrvs.push(ParRvDecl {
                name: name.clone(),
                param_types,
                range: states.iter().map(|s| symbols.intern(s)).collect(),
            });
        }
    }
    if populations.is_empty() && parrvs.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(Declarations {
        symbols,
        populations,
        parrvs,
        parrv_ids,
    })
}

fn resolve(stmts: &[Stmt]) -> Result<(Model, Vec<Stmt>), ParseError> {
    let decls = declarations(stmts)?;
    let mut resolver = Resolver {
        symbols: decls.symbols,
        parrv_ids: decls.parrv_ids,
        parrvs: &decls.parrvs,
    };
    let mut lists: Vec<Vec<Clause>> = vec![Vec::new(); decls.parrvs.len()];
    let mut rest = Vec::new();
    let mut iter = stmts.iter();
    for s in iter.by_ref() {
        match s {
            Stmt::Cpd(cpd) => {
                let parrv = resolver.parrv(&cpd.name, &cpd.span)?;
                let clause = resolver.clause(cpd, parrv, false)?;
                lists[parrv.0 as usize].push(clause);
            }
            Stmt::Specialized(_) => break,
            Stmt::Unchanged { span, .. } => {
                return Err(ParseError::Specialized {
                    span: span.clone(),
                    message: "`unchanged` outside a specialized section".into(),
                })
            }
            _ => {}
        }
    }
    rest.extend(iter.cloned());
    let cpds = lists
        .into_iter()
        .enumerate()
        .map(|(i, clauses)| DecisionList {
            parrv: ParRvId(i as u32),
            clauses,
        })
        .collect();
    let symbols = resolver.symbols;
    Ok((
        Model::new(symbols, decls.populations, decls.parrvs, cpds),
        rest,
    ))
}

/// Parse a model without semantic validation.
pub fn parse_model_unchecked(text: &str) -> Result<Model, ParseError> {
    parse_model_in(text, None, false)
}

/// Parse and validate a model. Semantic violations come back as
/// [`ParseError::Invalid`].
pub fn parse_model(text: &str) -> Result<Model, ParseError> {
    parse_model_in(text, None, true)
}

/// [`parse_model`] with a file name recorded in diagnostics.
pub fn parse_model_file(text: &str, file: &str) -> Result<Model, ParseError> {
    parse_model_in(text, Some(file), true)
}

fn parse_model_in(text: &str, file: Option<&str>, check: bool) -> Result<Model, ParseError> {
    let stmts = Parser::new(text, file)?.program()?;
    let (model, _) = resolve(&stmts)?;
    if let Some(Stmt::Specialized(span)) = stmts.iter().find(|s| matches!(s, Stmt::Specialized(_))) {
        return Err(ParseError::Specialized {
            span: span.clone(),
            message: "specialized section in a model file; read it as a specialized program".into(),
        });
    }
    if check {
        let report = validate_model(&model);
        if !report.is_valid() {
            return Err(ParseError::Invalid(report));
        }
    }
    Ok(model)
}

/// Parse a specialized program: a model followed by `specialized.` and one
/// entry for every CPD-query.
pub fn parse_specialized(text: &str) -> Result<SpecializedProgram, ParseError> {
    let stmts = Parser::new(text, None)?.program()?;
    let (model, rest) = resolve(&stmts)?;
    let report = validate_model(&model);
    if !report.is_valid() {
        return Err(ParseError::Invalid(report));
    }
    let marker = stmts
        .iter()
        .find_map(|s| match s {
            Stmt::Specialized(sp) => Some(sp.clone()),
            _ => None,
        })
        .ok_or_else(|| ParseError::Specialized {
            span: SourceSpan {
                file: None,
                line: 1,
                column: 1,
            },
            message: "missing `specialized.` section".into(),
        })?;

    let mut resolver = Resolver {
        symbols: model.symbols.clone(),
        parrv_ids: model
            .parrvs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), ParRvId(i as u32)))
            .collect(),
        parrvs: &model.parrvs,
    };
    let mut entries: Vec<Option<SpecEntry>> = vec![None; model.rv_count()];
    for s in &rest {
        let (name, params, span) = match s {
            Stmt::Cpd(cpd) => {
                let params = cpd
                    .head
                    .iter()
                    .map(|t| match &t.kind {
                        RawTermKind::Const(c) => Ok(c.clone()),
                        RawTermKind::Var(v) => Err(ParseError::Specialized {
                            span: t.span.clone(),
                            message: format!("specialized clause head has variable `{v}`"),
                        }),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                (&cpd.name, params, &cpd.span)
            }
            Stmt::Unchanged { name, params, span } => (name, params.clone(), span),
            other => {
                return Err(ParseError::Specialized {
                    span: stmt_span(other),
                    message: "only `cpd` and `unchanged` entries may follow `specialized.`".into(),
                })
            }
        };
        let rv = lookup_rv(&model, name, &params).ok_or_else(|| ParseError::UnknownRv {
            span: span.clone(),
            rv: format!("{}({})", name, params.join(",")),
        })?;
        let slot = &mut entries[rv.index()];
        match s {
            Stmt::Unchanged { .. } => {
                if slot.is_some() {
                    return Err(ParseError::Duplicate {
                        span: span.clone(),
                        rv: model.display_rv(rv),
                    });
                }
                *slot = Some(SpecEntry::UseOriginal);
            }
            Stmt::Cpd(cpd) => {
                let clause = resolver.clause(cpd, model.rv_parrv(rv), true)?;
                match slot {
                    None => *slot = Some(SpecEntry::Ground(vec![clause])),
                    Some(SpecEntry::Ground(list)) => list.push(clause),
                    Some(SpecEntry::UseOriginal) => {
                        return Err(ParseError::Duplicate {
                            span: span.clone(),
                            rv: model.display_rv(rv),
                        })
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    let missing = entries.iter().position(Option::is_none);
    if let Some(i) = missing {
        return Err(ParseError::Specialized {
            span: marker,
            message: format!(
                "no entry for CPD-query `{}`",
                model.display_rv(RvId(i as u32))
            ),
        });
    }
    let symbols = resolver.symbols;
    let mut model = model;
    model.symbols = symbols;
    Ok(SpecializedProgram::from_parts(
        Arc::new(model),
        entries.into_iter().map(Option::unwrap).collect(),
    ))
}

fn stmt_span(s: &Stmt) -> SourceSpan {
    match s {
        Stmt::Population { span, .. }
        | Stmt::ParRv { span, .. }
        | Stmt::Unchanged { span, .. }
        | Stmt::Specialized(span) => span.clone(),
        Stmt::Cpd(c) => c.span.clone(),
    }
}

fn lookup_rv(model: &Model, name: &str, params: &[String]) -> Option<RvId> {
    let parrv = model.parrv_id(name)?;
    let syms: Option<Vec<Sym>> = params.iter().map(|p| model.sym(p)).collect();
    model.rv_index(parrv, syms?)
}

/// Parse evidence statements `grade(s1,c1)=b.` against a model.
pub fn parse_evidence(text: &str, model: &Model) -> Result<Evidence, ParseError> {
    let mut p = Parser::new(text, None)?;
    let mut evidence = Evidence::default();
    while p.peek() != &Tok::Eof {
        let (name, params, span) = p.ground_rv()?;
        p.expect(Tok::Eq, "`=`")?;
        let (state, state_span) = p.ident("a state")?;
        p.expect(Tok::Dot, "`.`")?;
        let rv_text = if params.is_empty() {
            name.clone()
        } else {
            format!("{}({})", name, params.join(","))
        };
        let rv = lookup_rv(model, &name, &params).ok_or(ParseError::UnknownRv {
            span: span.clone(),
            rv: rv_text.clone(),
        })?;
        let sym = model
            .sym(&state)
            .filter(|&s| model.state_index(model.rv_parrv(rv), s).is_some())
            .ok_or(ParseError::StateNotInRange {
                span: state_span,
                rv: rv_text.clone(),
                state,
            })?;
        if evidence.insert(rv, sym).is_some() {
            return Err(ParseError::Duplicate { span, rv: rv_text });
        }
    }
    Ok(evidence)
}

/// Parse a ground RV such as `grade(s1,c1)` or `rain`.
pub fn parse_ground_rv(text: &str, model: &Model) -> Result<RvId, ParseError> {
    let mut p = Parser::new(text, None)?;
    let (name, params, span) = p.ground_rv()?;
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected("end of input"));
    }
    lookup_rv(model, &name, &params).ok_or(ParseError::UnknownRv {
        span,
        rv: text.trim().to_owned(),
    })
}

/// Resolve a [`GroundRv`] written out by name.
pub fn ground_rv_by_name(model: &Model, name: &str, params: &[&str]) -> Option<GroundRv> {
    let parrv = model.parrv_id(name)?;
    let params: Option<Vec<Sym>> = params.iter().map(|p| model.sym(p)).collect();
    Some(GroundRv {
        parrv,
        params: params?,
    })
}
