//! Model vocabulary: populations, parameterized RVs, decision-list CPDs, and
//! the grounding of parameterized RVs into ground RVs / CPD-queries.
//!
//! Every ground RV gets a dense [`RvId`]. Ids follow the canonical order:
//! parRV declaration order, then the cartesian product of the parameter
//! populations with the first parameter varying slowest.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Interned constant (population member or RV state).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sym(pub(crate) u32);

impl Sym {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PopId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParRvId(pub u32);

/// Dense index of a ground RV in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RvId(pub u32);

impl RvId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Clause-local variable slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, Default)]
pub struct Symbols {
    names: Vec<String>,
    ids: HashMap<String, Sym>,
}

impl Symbols {
    pub fn intern(&mut self, name: &str) -> Sym {
        if let Some(&s) = self.ids.get(name) {
            return s;
        }
        let s = Sym(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), s);
        s
    }

    pub fn get(&self, name: &str) -> Option<Sym> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, sym: Sym) -> &str {
        &self.names[sym.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub name: String,
    pub members: Vec<Sym>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParRvDecl {
    pub name: String,
    pub param_types: Vec<PopId>,
    pub range: Vec<Sym>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Sym),
    Var(VarId),
}

impl Term {
    pub fn as_const(self) -> Option<Sym> {
        match self {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        }
    }
}

/// State literal `p(t1,...,tn,state)`, possibly negated.
#[derive(Clone, Debug, PartialEq)]
pub struct Literal {
    pub negated: bool,
    pub parrv: ParRvId,
    pub args: Vec<Term>,
    pub state: Term,
}

impl Literal {
    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.args.iter().copied().chain(std::iter::once(self.state))
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms().filter_map(|t| match t {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        })
    }

    pub fn is_ground(&self) -> bool {
        self.vars().next().is_none()
    }

    pub fn negate(&self) -> Literal {
        Literal {
            negated: !self.negated,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Comparator {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Eq => lhs == rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Gt => lhs > rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

/// What a count constraint counts.
#[derive(Clone, Debug, PartialEq)]
pub enum CountSource {
    /// Surface form: solutions of `goal` over the domain of `var`.
    Goal { var: VarId, goal: Literal },
    /// Grounded form: number of satisfied disjuncts.
    Ground(Vec<BodyFormula>),
}

/// `count(...) + offset CMP bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct CountConstraint {
    pub source: CountSource,
    pub offset: u32,
    pub cmp: Comparator,
    pub bound: i64,
}

/// Clause-body IR.
#[derive(Clone, Debug, PartialEq)]
pub enum BodyFormula {
    True,
    False,
    Lit(Literal),
    Count(CountConstraint),
    And(Vec<BodyFormula>),
    Or(Vec<BodyFormula>),
}

impl BodyFormula {
    /// Conjunction that flattens nested `And`s and unwraps singletons.
    pub fn and(items: Vec<BodyFormula>) -> BodyFormula {
        let mut flat = Vec::with_capacity(items.len());
        for item in items {
            match item {
                BodyFormula::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => BodyFormula::True,
            1 => flat.pop().unwrap(),
            _ => BodyFormula::And(flat),
        }
    }

    /// Disjunction that flattens nested `Or`s and unwraps singletons.
    pub fn or(items: Vec<BodyFormula>) -> BodyFormula {
        let mut flat = Vec::with_capacity(items.len());
        for item in items {
            match item {
                BodyFormula::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => BodyFormula::False,
            1 => flat.pop().unwrap(),
            _ => BodyFormula::Or(flat),
        }
    }

    /// Visit every literal, including literals inside count constraints.
    pub fn for_each_literal<'a>(&'a self, f: &mut impl FnMut(&'a Literal)) {
        match self {
            BodyFormula::True | BodyFormula::False => {}
            BodyFormula::Lit(l) => f(l),
            BodyFormula::Count(c) => match &c.source {
                CountSource::Goal { goal, .. } => f(goal),
                CountSource::Ground(ds) => ds.iter().for_each(|d| d.for_each_literal(f)),
            },
            BodyFormula::And(xs) | BodyFormula::Or(xs) => {
                xs.iter().for_each(|x| x.for_each_literal(f))
            }
        }
    }

    /// True when no variable occurs anywhere in the formula.
    pub fn is_ground(&self) -> bool {
        match self {
            BodyFormula::True | BodyFormula::False => true,
            BodyFormula::Lit(l) => l.is_ground(),
            BodyFormula::Count(c) => match &c.source {
                CountSource::Goal { .. } => false,
                CountSource::Ground(ds) => ds.iter().all(BodyFormula::is_ground),
            },
            BodyFormula::And(xs) | BodyFormula::Or(xs) => xs.iter().all(BodyFormula::is_ground),
        }
    }

    /// Apply `f` to every term in the formula (counted variables included).
    pub fn map_terms(&self, f: &impl Fn(Term) -> Term) -> BodyFormula {
        let map_lit = |l: &Literal| Literal {
            negated: l.negated,
            parrv: l.parrv,
            args: l.args.iter().map(|&t| f(t)).collect(),
            state: f(l.state),
        };
        match self {
            BodyFormula::True => BodyFormula::True,
            BodyFormula::False => BodyFormula::False,
            BodyFormula::Lit(l) => BodyFormula::Lit(map_lit(l)),
            BodyFormula::Count(c) => BodyFormula::Count(CountConstraint {
                source: match &c.source {
                    CountSource::Goal { var, goal } => {
                        let var = match f(Term::Var(*var)) {
                            Term::Var(v) => v,
                            // counted variables are never substituted by constants
                            Term::Const(_) => *var,
                        };
                        CountSource::Goal {
                            var,
                            goal: map_lit(goal),
                        }
                    }
                    CountSource::Ground(ds) => {
                        CountSource::Ground(ds.iter().map(|d| d.map_terms(f)).collect())
                    }
                },
                offset: c.offset,
                cmp: c.cmp,
                bound: c.bound,
            }),
            BodyFormula::And(xs) => BodyFormula::And(xs.iter().map(|x| x.map_terms(f)).collect()),
            BodyFormula::Or(xs) => BodyFormula::Or(xs.iter().map(|x| x.map_terms(f)).collect()),
        }
    }

    /// Variables in order of first occurrence (counted variables included).
    pub fn vars_in_order(&self, out: &mut Vec<VarId>) {
        let push = |v: VarId, out: &mut Vec<VarId>| {
            if !out.contains(&v) {
                out.push(v)
            }
        };
        match self {
            BodyFormula::True | BodyFormula::False => {}
            BodyFormula::Lit(l) => l.vars().for_each(|v| push(v, out)),
            BodyFormula::Count(c) => match &c.source {
                CountSource::Goal { var, goal } => {
                    push(*var, out);
                    goal.vars().for_each(|v| push(v, out));
                }
                CountSource::Ground(ds) => ds.iter().for_each(|d| d.vars_in_order(out)),
            },
            BodyFormula::And(xs) | BodyFormula::Or(xs) => {
                xs.iter().for_each(|x| x.vars_in_order(out))
            }
        }
    }
}

/// The set of constants a variable ranges over when it is existentially
/// enumerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Population(PopId),
    Range(ParRvId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarInfo {
    pub name: String,
    pub domain: Domain,
}

/// Categorical distribution; after validation, entries follow the range order
/// of the owning parRV.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDistribution {
    pub entries: Vec<(Sym, f64)>,
}

impl CategoricalDistribution {
    pub fn new(entries: Vec<(Sym, f64)>) -> Self {
        CategoricalDistribution { entries }
    }

    pub fn prob(&self, state_index: usize) -> f64 {
        self.entries[state_index].1
    }

    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    pub fn sum(&self) -> f64 {
        self.probs().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clause {
    pub head: Vec<Term>,
    pub distribution: CategoricalDistribution,
    pub body: BodyFormula,
    pub vars: Vec<VarInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionList {
    pub parrv: ParRvId,
    pub clauses: Vec<Clause>,
}

/// A ground RV spelled out by parRV and parameter constants.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundRv {
    pub parrv: ParRvId,
    pub params: Vec<Sym>,
}

/// A request for the distribution of one ground RV. One exists per ground RV.
pub type CpdQuery = GroundRv;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("population `{0}` is empty")]
    EmptyPopulation(String),
    #[error("unknown parRV `{0}`")]
    UnknownParRv(String),
}

pub(crate) const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct Model {
    pub symbols: Symbols,
    pub populations: Vec<Population>,
    pub parrvs: Vec<ParRvDecl>,
    /// One decision list per parRV, indexed by `ParRvId`.
    pub cpds: Vec<DecisionList>,
    // Position of a symbol within each population / range, `NONE` if absent.
    member_pos: Vec<Vec<u32>>,
    state_pos: Vec<Vec<u32>>,
    rv_offset: Vec<u32>,
    rv_strides: Vec<Vec<u32>>,
    rv_parrv: Vec<ParRvId>,
    rv_args: Vec<Sym>,
    rv_args_start: Vec<u32>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        let names = |m: &Model| -> Vec<String> {
            (0..m.symbols.len())
                .map(|i| m.symbols.name(Sym(i as u32)).to_owned())
                .collect()
        };
        self.populations == other.populations
            && self.parrvs == other.parrvs
            && self.cpds == other.cpds
            && names(self) == names(other)
    }
}

impl Model {
    /// Assemble a model and precompute its grounding tables. No validation
    /// happens here; see [`crate::validate::validate_model`].
    pub fn new(
        symbols: Symbols,
        populations: Vec<Population>,
        parrvs: Vec<ParRvDecl>,
        cpds: Vec<DecisionList>,
    ) -> Model {
        let mut model = Model {
            symbols,
            populations,
            parrvs,
            cpds,
            member_pos: Vec::new(),
            state_pos: Vec::new(),
            rv_offset: Vec::new(),
            rv_strides: Vec::new(),
            rv_parrv: Vec::new(),
            rv_args: Vec::new(),
            rv_args_start: Vec::new(),
        };
        model.rebuild_tables();
        model
    }

    fn rebuild_tables(&mut self) {
        let n_syms = self.symbols.len();
        self.member_pos = self
            .populations
            .iter()
            .map(|p| {
                let mut pos = vec![NONE; n_syms];
                for (i, m) in p.members.iter().enumerate() {
                    if pos[m.index()] == NONE {
                        pos[m.index()] = i as u32;
                    }
                }
                pos
            })
            .collect();
        self.state_pos = self
            .parrvs
            .iter()
            .map(|p| {
                let mut pos = vec![NONE; n_syms];
                for (i, s) in p.range.iter().enumerate() {
                    if pos[s.index()] == NONE {
                        pos[s.index()] = i as u32;
                    }
                }
                pos
            })
            .collect();

        self.rv_offset.clear();
        self.rv_strides.clear();
        self.rv_parrv.clear();
        self.rv_args.clear();
        self.rv_args_start.clear();
        let mut next = 0u32;
        for (pi, p) in self.parrvs.iter().enumerate() {
            self.rv_offset.push(next);
            let sizes: Vec<usize> = p
                .param_types
                .iter()
                .map(|t| self.populations[t.0 as usize].members.len())
                .collect();
            let count: usize = sizes.iter().product();
            let mut strides = vec![1u32; sizes.len()];
            for k in (0..sizes.len().saturating_sub(1)).rev() {
                strides[k] = strides[k + 1] * sizes[k + 1] as u32;
            }
            self.rv_strides.push(strides);
            let mut digits = vec![0usize; sizes.len()];
            for _ in 0..count {
                self.rv_parrv.push(ParRvId(pi as u32));
                self.rv_args_start.push(self.rv_args.len() as u32);
                for (k, t) in p.param_types.iter().enumerate() {
                    self.rv_args
                        .push(self.populations[t.0 as usize].members[digits[k]]);
                }
                // odometer increment, last parameter fastest
                for k in (0..digits.len()).rev() {
                    digits[k] += 1;
                    if digits[k] < sizes[k] {
                        break;
                    }
                    digits[k] = 0;
                }
            }
            next += count as u32;
        }
        self.rv_args_start.push(self.rv_args.len() as u32);
    }

    /// Intern a constant that may not occur in the model text (used to build
    /// literals over non-existent RVs).
    pub fn intern(&mut self, name: &str) -> Sym {
        self.symbols.intern(name)
    }

    pub fn sym(&self, name: &str) -> Option<Sym> {
        self.symbols.get(name)
    }

    pub fn name(&self, sym: Sym) -> &str {
        self.symbols.name(sym)
    }

    pub fn parrv_id(&self, name: &str) -> Option<ParRvId> {
        self.parrvs
            .iter()
            .position(|p| p.name == name)
            .map(|i| ParRvId(i as u32))
    }

    pub fn population_id(&self, name: &str) -> Option<PopId> {
        self.populations
            .iter()
            .position(|p| p.name == name)
            .map(|i| PopId(i as u32))
    }

    pub fn parrv(&self, id: ParRvId) -> &ParRvDecl {
        &self.parrvs[id.0 as usize]
    }

    pub fn population(&self, id: PopId) -> &Population {
        &self.populations[id.0 as usize]
    }

    pub fn decision_list(&self, id: ParRvId) -> &DecisionList {
        &self.cpds[id.0 as usize]
    }

    pub fn rv_count(&self) -> usize {
        self.rv_parrv.len()
    }

    pub fn rv_ids(&self) -> impl Iterator<Item = RvId> {
        (0..self.rv_count() as u32).map(RvId)
    }

    pub fn rv_parrv(&self, rv: RvId) -> ParRvId {
        self.rv_parrv[rv.index()]
    }

    pub fn rv_params(&self, rv: RvId) -> &[Sym] {
        let i = rv.index();
        &self.rv_args[self.rv_args_start[i] as usize..self.rv_args_start[i + 1] as usize]
    }

    pub fn rv_range(&self, rv: RvId) -> &[Sym] {
        &self.parrv(self.rv_parrv(rv)).range
    }

    pub fn ground_rv(&self, rv: RvId) -> GroundRv {
        GroundRv {
            parrv: self.rv_parrv(rv),
            params: self.rv_params(rv).to_vec(),
        }
    }

    /// Position of `member` in population `pop`.
    #[inline]
    pub fn member_index(&self, pop: PopId, member: Sym) -> Option<usize> {
        match self.member_pos[pop.0 as usize].get(member.index()) {
            Some(&p) if p != NONE => Some(p as usize),
            _ => None,
        }
    }

    /// Position of `state` in the range of `parrv`.
    #[inline]
    pub fn state_index(&self, parrv: ParRvId, state: Sym) -> Option<usize> {
        match self.state_pos[parrv.0 as usize].get(state.index()) {
            Some(&p) if p != NONE => Some(p as usize),
            _ => None,
        }
    }

    /// Dense id of `parrv(params)`, or `None` for a non-existent RV.
    #[inline]
    pub fn rv_index(&self, parrv: ParRvId, params: impl IntoIterator<Item = Sym>) -> Option<RvId> {
        let p = parrv.0 as usize;
        let types = &self.parrvs[p].param_types;
        let strides = &self.rv_strides[p];
        let mut idx = self.rv_offset[p];
        let mut params = params.into_iter();
        for (pop, stride) in types.iter().zip(strides) {
            let sym = params.next()?;
            let pos = *self.member_pos[pop.0 as usize].get(sym.index())?;
            if pos == NONE {
                return None;
            }
            idx += pos * stride;
        }
        if params.next().is_some() {
            return None;
        }
        Some(RvId(idx))
    }

    /// First RV id, parameter populations and strides of one parRV.
    #[inline]
    pub(crate) fn rv_layout(&self, parrv: ParRvId) -> (u32, &[PopId], &[u32]) {
        let p = parrv.0 as usize;
        (
            self.rv_offset[p],
            &self.parrvs[p].param_types,
            &self.rv_strides[p],
        )
    }

    /// Position table of a population, indexed by symbol.
    #[inline]
    pub(crate) fn member_table(&self, pop: PopId) -> &[u32] {
        &self.member_pos[pop.0 as usize]
    }

    pub fn rv_id(&self, rv: &GroundRv) -> Option<RvId> {
        self.rv_index(rv.parrv, rv.params.iter().copied())
    }

    pub fn domain_members(&self, domain: Domain) -> &[Sym] {
        match domain {
            Domain::Population(p) => &self.population(p).members,
            Domain::Range(p) => &self.parrv(p).range,
        }
    }

    /// Every ground RV in canonical order.
    pub fn enumerate_rvs(&self) -> Result<Vec<GroundRv>, ModelError> {
        self.check_populations()?;
        Ok(self.rv_ids().map(|rv| self.ground_rv(rv)).collect())
    }

    /// The CPD-queries of one parRV, in canonical order.
    pub fn cpd_queries_for(&self, parrv: &str) -> Result<Vec<CpdQuery>, ModelError> {
        let id = self
            .parrv_id(parrv)
            .ok_or_else(|| ModelError::UnknownParRv(parrv.to_owned()))?;
        self.check_populations()?;
        Ok(self.rvs_of(id).map(|rv| self.ground_rv(rv)).collect())
    }

    /// RV ids of one parRV (contiguous in canonical order).
    pub fn rvs_of(&self, parrv: ParRvId) -> impl Iterator<Item = RvId> {
        let start = self.rv_offset[parrv.0 as usize];
        let end = self
            .rv_offset
            .get(parrv.0 as usize + 1)
            .copied()
            .unwrap_or(self.rv_count() as u32);
        (start..end).map(RvId)
    }

    fn check_populations(&self) -> Result<(), ModelError> {
        match self.populations.iter().find(|p| p.members.is_empty()) {
            Some(p) => Err(ModelError::EmptyPopulation(p.name.clone())),
            None => Ok(()),
        }
    }

    /// `grade(s1,c1)` / `rain` display form.
    pub fn display_rv(&self, rv: RvId) -> String {
        self.display_ground(&self.ground_rv(rv))
    }

    pub fn display_ground(&self, rv: &GroundRv) -> String {
        let name = &self.parrv(rv.parrv).name;
        if rv.params.is_empty() {
            name.clone()
        } else {
            let params: Vec<&str> = rv.params.iter().map(|&s| self.name(s)).collect();
            format!("{}({})", name, params.join(","))
        }
    }

    /// Build a ground literal by name, interning unknown constants.
    pub fn ground_literal(
        &mut self,
        negated: bool,
        parrv: &str,
        params: &[&str],
        state: &str,
    ) -> Result<Literal, ModelError> {
        let id = self
            .parrv_id(parrv)
            .ok_or_else(|| ModelError::UnknownParRv(parrv.to_owned()))?;
        let args = params.iter().map(|p| Term::Const(self.intern(p))).collect();
        let state = Term::Const(self.intern(state));
        Ok(Literal {
            negated,
            parrv: id,
            args,
            state,
        })
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
