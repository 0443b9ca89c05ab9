//! Evidence-driven specialization of decision lists.
//!
//! Every CPD-query gets its own decision list: heads are grounded with the
//! query's constants, bodies are grounded into a compact And/Or/Count form,
//! literals over observed RVs are replaced by their truth value and the result
//! is simplified. A list whose clause bodies would only be grounded, never
//! simplified, falls back to the original list.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{CpdProgram, EvalError};
use crate::model::{
    BodyFormula, CategoricalDistribution, Clause, CountConstraint, CountSource, Literal, Model,
    RvId, Sym, Term, VarId, VarInfo,
};
use crate::state::{Evidence, StateKb};

#[derive(Clone, Debug, PartialEq)]
pub enum SpecEntry {
    /// Evaluate the parRV's original decision list.
    UseOriginal,
    /// Ground-head decision list for this query.
    Ground(Vec<Clause>),
}

#[derive(Clone, Debug)]
pub struct SpecializedProgram {
    model: Arc<Model>,
    entries: Vec<SpecEntry>,
    t_spec: Duration,
}

impl PartialEq for SpecializedProgram {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model && self.entries == other.entries
    }
}

impl SpecializedProgram {
    /// `entries` holds one entry per RV, in canonical order.
    pub fn from_parts(model: Arc<Model>, entries: Vec<SpecEntry>) -> Self {
        assert_eq!(entries.len(), model.rv_count());
        SpecializedProgram {
            model,
            entries,
            t_spec: Duration::ZERO,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_arc(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn entry(&self, rv: RvId) -> &SpecEntry {
        &self.entries[rv.index()]
    }

    pub fn entries(&self) -> &[SpecEntry] {
        &self.entries
    }

    /// Wall time spent in [`specialize`].
    pub fn t_spec(&self) -> Duration {
        self.t_spec
    }

    /// Number of clauses `rv`'s query walks through.
    pub fn clause_count(&self, rv: RvId) -> usize {
        match self.entry(rv) {
            SpecEntry::UseOriginal => self
                .model
                .decision_list(self.model.rv_parrv(rv))
                .clauses
                .len(),
            SpecEntry::Ground(cs) => cs.len(),
        }
    }

    pub fn specialized_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, SpecEntry::Ground(_)))
            .count()
    }
}

impl CpdProgram for SpecializedProgram {
    fn model(&self) -> &Model {
        &self.model
    }

    #[inline]
    fn apply_cpd(&self, kb: &StateKb, rv: RvId) -> Result<&CategoricalDistribution, EvalError> {
        match &self.entries[rv.index()] {
            SpecEntry::UseOriginal => self.model.apply_cpd(kb, rv),
            SpecEntry::Ground(clauses) => crate::eval::first_match(&self.model, kb, clauses, rv),
        }
    }
}

/// Specialize every CPD-query of `model` with respect to `evidence`.
pub fn specialize(model: &Arc<Model>, evidence: &Evidence) -> SpecializedProgram {
    let start = Instant::now();
    let sp = Specializer::new(model, evidence);
    let entries = model
        .rv_ids()
        .map(|rv| sp.spec_decision_list(rv))
        .collect();
    SpecializedProgram {
        model: Arc::clone(model),
        entries,
        t_spec: start.elapsed(),
    }
}

/// Specialize an already specialized program again. Ground lists are
/// re-run through the same pipeline; unchanged ones stay as they are.
pub fn respecialize(program: &SpecializedProgram, evidence: &Evidence) -> SpecializedProgram {
    let start = Instant::now();
    let model = program.model();
    let sp = Specializer::new(model, evidence);
    let entries = model
        .rv_ids()
        .map(|rv| match program.entry(rv) {
            SpecEntry::UseOriginal => sp.spec_decision_list(rv),
            SpecEntry::Ground(clauses) => SpecEntry::Ground(sp.spec_clauses(clauses, rv).0),
        })
        .collect();
    SpecializedProgram {
        model: Arc::clone(program.model_arc()),
        entries,
        t_spec: start.elapsed(),
    }
}

/// Specialization context: the model plus a dense view of the evidence.
pub struct Specializer<'a> {
    model: &'a Model,
    observed: Vec<Option<Sym>>,
}

impl<'a> Specializer<'a> {
    pub fn new(model: &'a Model, evidence: &Evidence) -> Self {
        Specializer {
            model,
            observed: evidence.dense(model.rv_count()),
        }
    }

    /// The specialized decision list of one CPD-query.
    pub fn spec_decision_list(&self, rv: RvId) -> SpecEntry {
        let list = self.model.decision_list(self.model.rv_parrv(rv));
        match self.spec_clauses(&list.clauses, rv) {
            (_, false) => SpecEntry::UseOriginal,
            (clauses, true) => SpecEntry::Ground(clauses),
        }
    }

    /// Specialized clauses for `rv`, and whether anything changed.
    pub(crate) fn spec_clauses(&self, clauses: &[Clause], rv: RvId) -> (Vec<Clause>, bool) {
        let params = self.model.rv_params(rv);
        let head: Vec<Term> = params.iter().map(|&c| Term::Const(c)).collect();
        let mut out = Vec::new();
        let mut changed = false;
        for (i, clause) in clauses.iter().enumerate() {
            let Some(bind) = ground_head(clause, params) else {
                changed = true;
                continue;
            };
            let body = clause.body.map_terms(&|t| substitute(t, &bind));
            let (spec, body_changed) = self.specialize_body(&body, &clause.vars);
            changed |= body_changed;
            if spec == BodyFormula::False {
                continue;
            }
            let is_fact = spec == BodyFormula::True;
            let (body, vars) = compact(spec, &clause.vars);
            out.push(Clause {
                head: head.clone(),
                distribution: clause.distribution.clone(),
                body,
                vars,
            });
            if is_fact {
                changed |= i + 1 < clauses.len();
                break;
            }
        }
        (out, changed)
    }

    /// Ground, specialize the literals and simplify; returns `body` itself
    /// (and `false`) when that only grounded it.
    pub fn specialize_body(&self, body: &BodyFormula, vars: &[VarInfo]) -> (BodyFormula, bool) {
        let b1 = self.ground_body(body, vars);
        let b3 = simplify_body(&self.specialize_literals(&b1));
        if b3 == b1 {
            (body.clone(), false)
        } else {
            (b3, true)
        }
    }

    /// Replace every unbound variable by explicit disjunctions (positive
    /// literals), conjunctions (negated literals) or count items.
    pub fn ground_body(&self, body: &BodyFormula, vars: &[VarInfo]) -> BodyFormula {
        match body {
            BodyFormula::True | BodyFormula::False => body.clone(),
            BodyFormula::Lit(_) | BodyFormula::And(_) => {
                let items = match body {
                    BodyFormula::And(xs) => xs.clone(),
                    other => vec![other.clone()],
                };
                self.ground_conj(items, vars)
            }
            BodyFormula::Or(xs) => {
                BodyFormula::or(xs.iter().map(|x| self.ground_body(x, vars)).collect())
            }
            BodyFormula::Count(cc) => {
                let items = match &cc.source {
                    CountSource::Goal { var, goal } => self
                        .model
                        .domain_members(vars[var.index()].domain)
                        .iter()
                        .map(|&c| {
                            let lit = BodyFormula::Lit(goal.clone()).map_terms(&|t| {
                                if t == Term::Var(*var) {
                                    Term::Const(c)
                                } else {
                                    t
                                }
                            });
                            self.ground_body(&lit, vars)
                        })
                        .collect(),
                    CountSource::Ground(ds) => {
                        ds.iter().map(|d| self.ground_body(d, vars)).collect()
                    }
                };
                BodyFormula::Count(CountConstraint {
                    source: CountSource::Ground(items),
                    offset: cc.offset,
                    cmp: cc.cmp,
                    bound: cc.bound,
                })
            }
        }
    }

    /// Split a conjunction into components linked by shared unbound
    /// variables of its positive literals and ground each one separately.
    fn ground_conj(&self, items: Vec<BodyFormula>, vars: &[VarInfo]) -> BodyFormula {
        let mut conj_vars: Vec<VarId> = Vec::new();
        for item in &items {
            if let BodyFormula::Lit(l) = item {
                if !l.negated {
                    for v in l.vars() {
                        if !conj_vars.contains(&v) {
                            conj_vars.push(v);
                        }
                    }
                }
            }
        }
        let linked: Vec<Vec<VarId>> = items
            .iter()
            .map(|item| {
                let mut vs = Vec::new();
                item.vars_in_order(&mut vs);
                vs.retain(|v| conj_vars.contains(v));
                vs
            })
            .collect();

        // union-find over item indices
        let mut parent: Vec<usize> = (0..items.len()).collect();
        fn find(parent: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while parent[r] != r {
                r = parent[r];
            }
            parent[i] = r;
            r
        }
        for &v in &conj_vars {
            let mut first = None;
            for (i, vs) in linked.iter().enumerate() {
                if vs.contains(&v) {
                    match first {
                        None => first = Some(i),
                        Some(f) => {
                            let (a, b) = (find(&mut parent, f), find(&mut parent, i));
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }

        let mut components: Vec<Vec<BodyFormula>> = Vec::new();
        let mut roots: Vec<usize> = Vec::new();
        for (i, item) in items.into_iter().enumerate() {
            let r = find(&mut parent, i);
            match roots.iter().position(|&x| x == r) {
                Some(k) => components[k].push(item),
                None => {
                    roots.push(r);
                    components.push(vec![item]);
                }
            }
        }
        BodyFormula::and(
            components
                .into_iter()
                .map(|c| self.ground_component(c, vars))
                .collect(),
        )
    }

    fn ground_component(&self, mut items: Vec<BodyFormula>, vars: &[VarInfo]) -> BodyFormula {
        if items.len() == 1 {
            return match items.pop().unwrap() {
                BodyFormula::Lit(l) => self.ground_literal(&l, vars),
                BodyFormula::And(xs) => self.ground_conj(xs, vars),
                other => self.ground_body(&other, vars),
            };
        }
        let open = match &items[0] {
            BodyFormula::Lit(l) => l.vars().next(),
            _ => None,
        };
        match open {
            None => {
                let rest = items.split_off(1);
                let first = items.pop().unwrap();
                BodyFormula::and(vec![
                    self.ground_body(&first, vars),
                    self.ground_conj(rest, vars),
                ])
            }
            Some(v) => BodyFormula::or(
                self.model
                    .domain_members(vars[v.index()].domain)
                    .iter()
                    .map(|&c| {
                        let items = items.iter().map(|x| bind_var(x, v, c)).collect();
                        self.ground_component(items, vars)
                    })
                    .collect(),
            ),
        }
    }

    fn ground_literal(&self, l: &Literal, vars: &[VarInfo]) -> BodyFormula {
        let Some(v) = l.vars().next() else {
            return BodyFormula::Lit(l.clone());
        };
        let groundings = self
            .model
            .domain_members(vars[v.index()].domain)
            .iter()
            .map(|&c| {
                let BodyFormula::Lit(g) = bind_var(&BodyFormula::Lit(l.clone()), v, c) else {
                    unreachable!()
                };
                self.ground_literal(&g, vars)
            })
            .collect();
        if l.negated {
            BodyFormula::and(groundings)
        } else {
            BodyFormula::or(groundings)
        }
    }

    /// Replace each ground literal over an observed or non-existent RV by its
    /// truth value.
    pub fn specialize_literals(&self, f: &BodyFormula) -> BodyFormula {
        match f {
            BodyFormula::True | BodyFormula::False => f.clone(),
            BodyFormula::Lit(l) if l.is_ground() => self.specialize_literal(l),
            BodyFormula::Lit(_) => f.clone(),
            BodyFormula::Count(cc) => BodyFormula::Count(CountConstraint {
                source: match &cc.source {
                    CountSource::Ground(ds) => CountSource::Ground(
                        ds.iter().map(|d| self.specialize_literals(d)).collect(),
                    ),
                    goal => goal.clone(),
                },
                offset: cc.offset,
                cmp: cc.cmp,
                bound: cc.bound,
            }),
            BodyFormula::And(xs) => {
                BodyFormula::And(xs.iter().map(|x| self.specialize_literals(x)).collect())
            }
            BodyFormula::Or(xs) => {
                BodyFormula::Or(xs.iter().map(|x| self.specialize_literals(x)).collect())
            }
        }
    }

    /// Truth table for one ground literal against the evidence.
    pub fn specialize_literal(&self, l: &Literal) -> BodyFormula {
        let rv = self.model.rv_index(
            l.parrv,
            l.args.iter().map(|t| t.as_const().expect("ground literal")),
        );
        let positive = match rv {
            None => Some(false),
            Some(rv) => self.observed[rv.index()].map(|s| Term::Const(s) == l.state),
        };
        match positive {
            None => BodyFormula::Lit(l.clone()),
            Some(p) if p != l.negated => BodyFormula::True,
            Some(_) => BodyFormula::False,
        }
    }
}

/// Bottom-up constant propagation over And/Or/Count.
pub fn simplify_body(f: &BodyFormula) -> BodyFormula {
    match f {
        BodyFormula::True | BodyFormula::False | BodyFormula::Lit(_) => f.clone(),
        BodyFormula::And(xs) => {
            let mut kept = Vec::with_capacity(xs.len());
            for x in xs {
                match simplify_body(x) {
                    BodyFormula::False => return BodyFormula::False,
                    BodyFormula::True => {}
                    other => kept.push(other),
                }
            }
            BodyFormula::and(kept)
        }
        BodyFormula::Or(xs) => {
            let mut kept = Vec::with_capacity(xs.len());
            for x in xs {
                match simplify_body(x) {
                    BodyFormula::True => return BodyFormula::True,
                    BodyFormula::False => {}
                    other => kept.push(other),
                }
            }
            BodyFormula::or(kept)
        }
        BodyFormula::Count(cc) => {
            let CountSource::Ground(ds) = &cc.source else {
                return f.clone();
            };
            let mut offset = cc.offset;
            let mut kept = Vec::with_capacity(ds.len());
            for d in ds {
                match simplify_body(d) {
                    BodyFormula::True => offset += 1,
                    BodyFormula::False => {}
                    other => kept.push(other),
                }
            }
            let lo = offset as i64;
            let hi = lo + kept.len() as i64;
            let sat = (lo..=hi).filter(|&n| cc.cmp.holds(n, cc.bound)).count() as i64;
            if sat == hi - lo + 1 {
                BodyFormula::True
            } else if sat == 0 {
                BodyFormula::False
            } else {
                BodyFormula::Count(CountConstraint {
                    source: CountSource::Ground(kept),
                    offset,
                    cmp: cc.cmp,
                    bound: cc.bound,
                })
            }
        }
    }
}

pub(crate) fn ground_head(clause: &Clause, params: &[Sym]) -> Option<Vec<Option<Sym>>> {
    let mut bind = vec![None; clause.vars.len()];
    for (t, &p) in clause.head.iter().zip(params) {
        match *t {
            Term::Var(v) => bind[v.index()] = Some(p),
            Term::Const(c) if c != p => return None,
            Term::Const(_) => {}
        }
    }
    Some(bind)
}

pub(crate) fn substitute(t: Term, bind: &[Option<Sym>]) -> Term {
    match t {
        Term::Var(v) => bind[v.index()].map_or(t, Term::Const),
        c => c,
    }
}

fn bind_var(f: &BodyFormula, v: VarId, c: Sym) -> BodyFormula {
    f.map_terms(&|t| if t == Term::Var(v) { Term::Const(c) } else { t })
}

/// Renumber the variables left in `body` densely by first occurrence.
fn compact(body: BodyFormula, vars: &[VarInfo]) -> (BodyFormula, Vec<VarInfo>) {
    let mut order = Vec::new();
    body.vars_in_order(&mut order);
    if order.is_empty() {
        return (body, Vec::new());
    }
    let mut map = vec![u32::MAX; vars.len()];
    for (new, old) in order.iter().enumerate() {
        map[old.index()] = new as u32;
    }
    let body = body.map_terms(&|t| match t {
        Term::Var(v) => Term::Var(VarId(map[v.index()])),
        c => c,
    });
    let vars = order.iter().map(|v| vars[v.index()].clone()).collect();
    (body, vars)
}

/// Every ground literal the specialized lists still mention over an observed
/// RV. Empty for a correct specialization.
pub fn observed_references(program: &SpecializedProgram, evidence: &Evidence) -> Vec<(RvId, RvId)> {
    let model = program.model();
    let sp = Specializer::new(model, &Evidence::default());
    let mut out = Vec::new();
    for rv in model.rv_ids() {
        let SpecEntry::Ground(clauses) = program.entry(rv) else {
            continue;
        };
        for clause in clauses {
            let grounded = sp.ground_body(&clause.body, &clause.vars);
            grounded.for_each_literal(&mut |l| {
                let args = l.args.iter().map(|t| t.as_const().expect("ground"));
                if let Some(r) = model.rv_index(l.parrv, args) {
                    if evidence.contains(r) {
                        out.push((rv, r));
                    }
                }
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub trial: usize,
    pub rv: RvId,
    pub original: Result<Vec<f64>, EvalError>,
    pub specialized: Result<Vec<f64>, EvalError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub queries_checked: usize,
    pub mismatch: Option<Mismatch>,
}

impl EquivalenceReport {
    pub fn ok(&self) -> bool {
        self.mismatch.is_none()
    }
}

/// Compare both programs on every CPD-query under `n_trials` uniformly random
/// states of the unobserved RVs. Stops at the first difference.
pub fn verify_equivalence(
    specialized: &SpecializedProgram,
    evidence: &Evidence,
    n_trials: usize,
    seed: u64,
) -> EquivalenceReport {
    let model = specialized.model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = StateKb::from_evidence(model, evidence);
    let free: Vec<RvId> = kb.unobserved().collect();
    let mut checked = 0;
    for trial in 0..n_trials {
        for &rv in &free {
            let range = model.rv_range(rv);
            kb.assign(rv, range[rng.random_range(0..range.len())]);
        }
        if let Some(m) = compare_all(model, specialized, &kb, trial, &mut checked) {
            return EquivalenceReport {
                trials: trial + 1,
                queries_checked: checked,
                mismatch: Some(m),
            };
        }
    }
    EquivalenceReport {
        trials: n_trials,
        queries_checked: checked,
        mismatch: None,
    }
}

fn compare_all(
    model: &Model,
    specialized: &SpecializedProgram,
    kb: &StateKb,
    trial: usize,
    checked: &mut usize,
) -> Option<Mismatch> {
    let probs = |r: Result<&CategoricalDistribution, EvalError>| {
        r.map(|d| d.probs().collect::<Vec<f64>>())
    };
    for rv in model.rv_ids() {
        *checked += 1;
        let a = model.apply_cpd(kb, rv);
        let b = specialized.apply_cpd(kb, rv);
        if a != b {
            return Some(Mismatch {
                trial,
                rv,
                original: probs(a),
                specialized: probs(b),
            });
        }
    }
    None
}
