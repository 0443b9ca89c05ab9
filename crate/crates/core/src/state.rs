//! The state KB: current state of every ground RV, with the evidence as its
//! static part.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use crate::model::{Literal, Model, RvId, Sym, Term};

/// Known values of the observed RVs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Evidence {
    assignments: BTreeMap<RvId, Sym>,
}

impl Evidence {
    /// Returns the previous value if `rv` was already assigned.
    pub fn insert(&mut self, rv: RvId, state: Sym) -> Option<Sym> {
        self.assignments.insert(rv, state)
    }

    pub fn get(&self, rv: RvId) -> Option<Sym> {
        self.assignments.get(&rv).copied()
    }

    pub fn contains(&self, rv: RvId) -> bool {
        self.assignments.contains_key(&rv)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RvId, Sym)> + '_ {
        self.assignments.iter().map(|(&r, &s)| (r, s))
    }

    /// Dense per-RV view, `None` for unobserved RVs.
    pub fn dense(&self, rv_count: usize) -> Vec<Option<Sym>> {
        let mut out = vec![None; rv_count];
        for (rv, s) in self.iter() {
            out[rv.index()] = Some(s);
        }
        out
    }

    /// `.ev` text, one assignment per line in canonical order.
    pub fn to_text(&self, model: &Model) -> String {
        let mut out = String::new();
        for (rv, s) in self.iter() {
            writeln!(out, "{}={}.", model.display_rv(rv), model.name(s)).unwrap();
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("RV {0} is observed; its state cannot change")]
    Observed(String),
    #[error("state `{state}` is not in the range of {rv}")]
    NotInRange { rv: String, state: String },
    #[error("RV {0} is uninitialized")]
    Uninitialized(String),
    #[error("unknown RV id {0}")]
    UnknownRv(u32),
}

const UNINIT: Sym = Sym(u32::MAX);

/// Dense state store indexed by [`RvId`]. Single-owner; one per chain.
#[derive(Clone, Debug)]
pub struct StateKb {
    states: Vec<Sym>,
    observed: Vec<bool>,
}

impl StateKb {
    /// Observed RVs take their evidence value; every other RV starts
    /// uninitialized.
    pub fn from_evidence(model: &Model, evidence: &Evidence) -> StateKb {
        let n = model.rv_count();
        let mut kb = StateKb {
            states: vec![UNINIT; n],
            observed: vec![false; n],
        };
        for (rv, s) in evidence.iter() {
            kb.states[rv.index()] = s;
            kb.observed[rv.index()] = true;
        }
        kb
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn set_state(&mut self, model: &Model, rv: RvId, state: Sym) -> Result<(), StateError> {
        if rv.index() >= self.states.len() {
            return Err(StateError::UnknownRv(rv.0));
        }
        if self.observed[rv.index()] {
            return Err(StateError::Observed(model.display_rv(rv)));
        }
        if model.state_index(model.rv_parrv(rv), state).is_none() {
            return Err(StateError::NotInRange {
                rv: model.display_rv(rv),
                state: model.name(state).to_owned(),
            });
        }
        self.states[rv.index()] = state;
        Ok(())
    }

    /// Sampler fast path: the caller guarantees `rv` is unobserved and
    /// `state` is in range.
    #[inline]
    pub(crate) fn assign(&mut self, rv: RvId, state: Sym) {
        debug_assert!(!self.observed[rv.index()]);
        self.states[rv.index()] = state;
    }

    pub fn get_state(&self, rv: RvId) -> Result<Sym, StateError> {
        match self.states.get(rv.index()) {
            None => Err(StateError::UnknownRv(rv.0)),
            Some(&s) if s == UNINIT => Err(StateError::Uninitialized(format!("#{}", rv.0))),
            Some(&s) => Ok(s),
        }
    }

    /// Current state, `None` while uninitialized.
    #[inline]
    pub fn state(&self, rv: RvId) -> Option<Sym> {
        let s = self.states[rv.index()];
        (s != UNINIT).then_some(s)
    }

    pub fn is_observed(&self, rv: RvId) -> Result<bool, StateError> {
        self.observed
            .get(rv.index())
            .copied()
            .ok_or(StateError::UnknownRv(rv.0))
    }

    #[inline]
    pub fn observed(&self, rv: RvId) -> bool {
        self.observed[rv.index()]
    }

    pub fn unobserved(&self) -> impl Iterator<Item = RvId> + '_ {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| !o)
            .map(|(i, _)| RvId(i as u32))
    }

    /// Truth of a ground literal. Literals over non-existent RVs are false
    /// when positive and true when negated.
    pub fn truth_of(&self, model: &Model, lit: &Literal) -> Result<bool, StateError> {
        let args: Option<Vec<Sym>> = lit.args.iter().map(|t| t.as_const()).collect();
        let (Some(args), Term::Const(state)) = (args, lit.state) else {
            panic!("truth_of needs a ground literal");
        };
        let positive = match model.rv_index(lit.parrv, args) {
            None => false,
            Some(rv) => match self.state(rv) {
                Some(s) => s == state,
                None => return Err(StateError::Uninitialized(model.display_rv(rv))),
            },
        };
        Ok(positive != lit.negated)
    }

    /// `rv = state` lines in canonical order.
    pub fn dump(&self, model: &Model) -> String {
        let mut out = String::new();
        for rv in model.rv_ids() {
            let state = self.state(rv).map_or("<uninitialized>", |s| model.name(s));
            writeln!(out, "{} = {}", model.display_rv(rv), state).unwrap();
        }
        out
    }
}
