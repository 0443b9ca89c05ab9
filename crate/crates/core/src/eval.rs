//! Decision-list interpreter: answers CPD-queries against a [`StateKb`].
//!
//! Body variables that are not bound by the head are existential. A positive
//! literal with unbound variables enumerates their domains left to right and
//! backtracks into the rest of the conjunction; a negated literal succeeds
//! when no grounding of its (local) variables holds; a count constraint
//! counts the members of the counted variable's domain that satisfy its goal.

use smallvec::{smallvec, SmallVec};
use thiserror::Error;

use crate::model::{
    BodyFormula, CategoricalDistribution, Clause, CountConstraint, CountSource, Domain, Literal,
    Model, RvId, Sym, Term, VarId, VarInfo, NONE,
};
use crate::state::StateKb;

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("read of uninitialized RV #{}", .0 .0)]
    Uninitialized(RvId),
    #[error("no clause fired for RV #{}", .0 .0)]
    NoClauseFired(RvId),
}

/// Variable-to-constant bindings of one clause, indexed by [`VarId`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bindings(SmallVec<[Option<Sym>; 8]>);

impl Bindings {
    pub fn new(n_vars: usize) -> Self {
        Bindings(smallvec![None; n_vars])
    }

    pub fn bind(&mut self, v: VarId, c: Sym) {
        self.0[v.index()] = Some(c);
    }

    pub fn get(&self, v: VarId) -> Option<Sym> {
        self.0[v.index()]
    }

    #[inline]
    fn value(&self, t: Term) -> Option<Sym> {
        match t {
            Term::Const(c) => Some(c),
            Term::Var(v) => self.0[v.index()],
        }
    }
}

/// Anything that can answer a CPD-query: the original model or a
/// specialized program.
pub trait CpdProgram {
    fn model(&self) -> &Model;

    /// The distribution of the first clause of `rv`'s decision list whose body
    /// holds in `kb`.
    fn apply_cpd(&self, kb: &StateKb, rv: RvId) -> Result<&CategoricalDistribution, EvalError>;
}

impl CpdProgram for Model {
    fn model(&self) -> &Model {
        self
    }

    fn apply_cpd(&self, kb: &StateKb, rv: RvId) -> Result<&CategoricalDistribution, EvalError> {
        let list = self.decision_list(self.rv_parrv(rv));
        first_match(self, kb, &list.clauses, rv)
    }
}

/// Walk `clauses` in order for query `rv` and return the first firing
/// clause's distribution.
pub(crate) fn first_match<'c>(
    model: &Model,
    kb: &StateKb,
    clauses: &'c [Clause],
    rv: RvId,
) -> Result<&'c CategoricalDistribution, EvalError> {
    let params = model.rv_params(rv);
    for clause in clauses {
        let mut bind = Bindings::new(clause.vars.len());
        if !bind_head(&clause.head, params, &mut bind) {
            continue;
        }
        let ctx = Ctx {
            model,
            kb,
            vars: &clause.vars,
        };
        if eval(&ctx, &clause.body, &mut bind)? {
            return Ok(&clause.distribution);
        }
    }
    Err(EvalError::NoClauseFired(rv))
}

/// Unify head terms with the query constants. Fails on a constant mismatch.
pub(crate) fn bind_head(head: &[Term], params: &[Sym], bind: &mut Bindings) -> bool {
    for (t, &p) in head.iter().zip(params) {
        match *t {
            Term::Var(v) => bind.bind(v, p),
            Term::Const(c) if c != p => return false,
            Term::Const(_) => {}
        }
    }
    true
}

/// Evaluate a body under `bind`; `vars` is the owning clause's variable table.
pub fn eval_body(
    kb: &StateKb,
    model: &Model,
    body: &BodyFormula,
    vars: &[VarInfo],
    bind: &Bindings,
) -> Result<bool, EvalError> {
    let ctx = Ctx { model, kb, vars };
    eval(&ctx, body, &mut bind.clone())
}

/// Evaluate one count constraint under `bind`.
pub fn eval_count(
    kb: &StateKb,
    model: &Model,
    cc: &CountConstraint,
    vars: &[VarInfo],
    bind: &Bindings,
) -> Result<bool, EvalError> {
    let ctx = Ctx { model, kb, vars };
    count(&ctx, cc, &mut bind.clone())
}

struct Ctx<'a> {
    model: &'a Model,
    kb: &'a StateKb,
    vars: &'a [VarInfo],
}

type Cont<'k> = &'k mut dyn FnMut(&mut Bindings) -> Result<bool, EvalError>;

fn eval(ctx: &Ctx<'_>, f: &BodyFormula, bind: &mut Bindings) -> Result<bool, EvalError> {
    match f {
        BodyFormula::True => Ok(true),
        BodyFormula::False => Ok(false),
        BodyFormula::Lit(l) => {
            let found = if first_unbound(l, bind).is_none() {
                holds(ctx, l, bind)?
            } else {
                solve(ctx, l, bind, &mut |_| Ok(true))?
            };
            Ok(found != l.negated)
        }
        BodyFormula::Count(cc) => count(ctx, cc, bind),
        BodyFormula::And(xs) => conj(ctx, xs, bind),
        BodyFormula::Or(xs) => {
            for x in xs {
                if eval(ctx, x, bind)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

fn conj(ctx: &Ctx<'_>, xs: &[BodyFormula], bind: &mut Bindings) -> Result<bool, EvalError> {
    let Some((first, rest)) = xs.split_first() else {
        return Ok(true);
    };
    match first {
        BodyFormula::Lit(l) if !l.negated && first_unbound(l, bind).is_some() => {
            solve(ctx, l, bind, &mut |b| conj(ctx, rest, b))
        }
        other => {
            if eval(ctx, other, bind)? {
                conj(ctx, rest, bind)
            } else {
                Ok(false)
            }
        }
    }
}

fn count(ctx: &Ctx<'_>, cc: &CountConstraint, bind: &mut Bindings) -> Result<bool, EvalError> {
    let mut n: i64 = 0;
    match &cc.source {
        CountSource::Goal { var, goal } => {
            let members = ctx.model.domain_members(ctx.vars[var.index()].domain);
            let Some(&first) = members.first() else {
                return Ok(cc.cmp.holds(cc.offset as i64, cc.bound));
            };
            bind.bind(*var, first);
            let ground = first_unbound(goal, bind).is_none();
            for &c in members {
                bind.bind(*var, c);
                let found = if ground {
                    holds(ctx, goal, bind)?
                } else {
                    solve(ctx, goal, bind, &mut |_| Ok(true))?
                };
                n += found as i64;
            }
            bind.0[var.index()] = None;
        }
        CountSource::Ground(items) => {
            for item in items {
                if eval(ctx, item, bind)? {
                    n += 1;
                }
            }
        }
    }
    Ok(cc.cmp.holds(n + cc.offset as i64, cc.bound))
}

#[inline]
fn first_unbound(l: &Literal, bind: &Bindings) -> Option<(VarId, bool)> {
    for t in &l.args {
        if let Term::Var(v) = *t {
            if bind.get(v).is_none() {
                return Some((v, false));
            }
        }
    }
    match l.state {
        Term::Var(v) if bind.get(v).is_none() => Some((v, true)),
        _ => None,
    }
}

#[inline]
fn literal_rv(model: &Model, l: &Literal, bind: &Bindings) -> Option<RvId> {
    let (mut idx, types, strides) = model.rv_layout(l.parrv);
    if l.args.len() != types.len() {
        return None;
    }
    let slots = bind.0.as_slice();
    for ((t, &pop), &stride) in l.args.iter().zip(types).zip(strides) {
        let sym = match *t {
            Term::Const(c) => c,
            Term::Var(v) => slots[v.index()].expect("bound argument"),
        };
        let pos = *model.member_table(pop).get(sym.index())?;
        if pos == NONE {
            return None;
        }
        idx += pos * stride;
    }
    Some(RvId(idx))
}

/// Truth of the positive form of a literal whose terms are all bound.
#[inline]
fn holds(ctx: &Ctx<'_>, l: &Literal, bind: &Bindings) -> Result<bool, EvalError> {
    let Some(rv) = literal_rv(ctx.model, l, bind) else {
        return Ok(false);
    };
    let current = ctx.kb.state(rv).ok_or(EvalError::Uninitialized(rv))?;
    Ok(Some(current) == bind.value(l.state))
}

/// Enumerate groundings of the positive form of `l` that hold in the KB and
/// call `k` on each; stop at the first `k` that succeeds. Bindings made here
/// are undone before returning.
fn solve(
    ctx: &Ctx<'_>,
    l: &Literal,
    bind: &mut Bindings,
    k: Cont<'_>,
) -> Result<bool, EvalError> {
    match first_unbound(l, bind) {
        None => {
            if holds(ctx, l, bind)? {
                k(bind)
            } else {
                Ok(false)
            }
        }
        // Only the state is open: the RV's current state is the single
        // candidate in its own range.
        Some((v, true)) if ctx.vars[v.index()].domain == Domain::Range(l.parrv) => {
            let Some(rv) = literal_rv(ctx.model, l, bind) else {
                return Ok(false);
            };
            let current = ctx.kb.state(rv).ok_or(EvalError::Uninitialized(rv))?;
            bind.bind(v, current);
            let r = k(bind);
            bind.0[v.index()] = None;
            r
        }
        Some((v, _)) => {
            let domain = ctx.vars[v.index()].domain;
            for &c in ctx.model.domain_members(domain) {
                bind.bind(v, c);
                if solve(ctx, l, bind, k)? {
                    bind.0[v.index()] = None;
                    return Ok(true);
                }
            }
            bind.0[v.index()] = None;
            Ok(false)
        }
    }
}
