//! Structural checks on a parsed model. Acyclicity lives in
//! [`crate::dependency`] because it needs the ground graph.

use std::collections::HashSet;
use std::fmt;

use crate::model::{BodyFormula, Clause, CountSource, Model, ParRvId, Term, VarId};

/// Distributions must sum to one within this tolerance; nothing is renormalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    BadDeclaration,
    MissingCpd,
    NotTotal,
    Unnormalized,
    BadDistribution,
    UnknownConstant,
    StateNotInRange,
    ArityMismatch,
    RepeatedHeadVariable,
    UnsafeVariable,
    Cycle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}", v.message)?;
        }
        Ok(())
    }
}

fn fmt_sum(x: f64) -> String {
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_owned()
}

/// Check every structural invariant of the model. An empty report means the
/// model is valid (apart from acyclicity).
pub fn validate_model(model: &Model) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_declarations(model, &mut report);
    for list in &model.cpds {
        let name = &model.parrv(list.parrv).name;
        if list.clauses.is_empty() {
            report.push(
                ViolationKind::MissingCpd,
                format!("no CPD clauses for parRV `{name}`"),
            );
            continue;
        }
        for (i, clause) in list.clauses.iter().enumerate() {
            let at = format!("`{}` clause {}", name, i + 1);
            check_clause(model, list.parrv, clause, &at, &mut report);
        }
        let last = list.clauses.last().unwrap();
        let unconditional_head = last.head.iter().all(|t| matches!(t, Term::Var(_)));
        if last.body != BodyFormula::True || !unconditional_head {
            report.push(
                ViolationKind::NotTotal,
                format!(
                    "decision list not total for `{name}`: the last clause must have no body and only variable parameters"
                ),
            );
        }
    }
    report
}

fn check_declarations(model: &Model, report: &mut ValidationReport) {
    for p in &model.populations {
        if p.members.is_empty() {
            report.push(
                ViolationKind::BadDeclaration,
                format!("population `{}` is empty", p.name),
            );
        }
        let distinct: HashSet<_> = p.members.iter().collect();
        if distinct.len() != p.members.len() {
            report.push(
                ViolationKind::BadDeclaration,
                format!("population `{}` lists a member twice", p.name),
            );
        }
    }
    for p in &model.parrvs {
        let distinct: HashSet<_> = p.range.iter().collect();
        if distinct.len() != p.range.len() {
            report.push(
                ViolationKind::BadDeclaration,
                format!("parRV `{}` lists a state twice", p.name),
            );
        }
        if distinct.len() < 2 {
            report.push(
                ViolationKind::BadDeclaration,
                format!("parRV `{}` needs at least two distinct states", p.name),
            );
        }
    }
}

fn check_clause(
    model: &Model,
    parrv: ParRvId,
    clause: &Clause,
    at: &str,
    report: &mut ValidationReport,
) {
    let decl = model.parrv(parrv);

    // distribution
    let sum = clause.distribution.sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        report.push(
            ViolationKind::Unnormalized,
            format!("distribution sums to {} in {at}", fmt_sum(sum)),
        );
    }
    for &(s, p) in &clause.distribution.entries {
        if model.state_index(parrv, s).is_none() {
            report.push(
                ViolationKind::StateNotInRange,
                format!(
                    "state `{}` is not in the range of `{}` in {at}",
                    model.name(s),
                    decl.name
                ),
            );
        }
        if !(0.0..=1.0).contains(&p) {
            report.push(
                ViolationKind::BadDistribution,
                format!("probability {p} outside [0, 1] in {at}"),
            );
        }
    }
    let in_order = clause.distribution.entries.len() == decl.range.len()
        && clause
            .distribution
            .entries
            .iter()
            .zip(&decl.range)
            .all(|(e, s)| e.0 == *s);
    if !in_order {
        report.push(
            ViolationKind::BadDistribution,
            format!(
                "distribution in {at} must list every state of `{}` exactly once",
                decl.name
            ),
        );
    }

    // head
    if clause.head.len() != decl.param_types.len() {
        report.push(
            ViolationKind::ArityMismatch,
            format!(
                "head of {at} has {} parameters, `{}` declares {}",
                clause.head.len(),
                decl.name,
                decl.param_types.len()
            ),
        );
    }
    let mut seen = HashSet::new();
    for (k, t) in clause.head.iter().enumerate() {
        match *t {
            Term::Var(v) => {
                if !seen.insert(v) {
                    report.push(
                        ViolationKind::RepeatedHeadVariable,
                        format!(
                            "variable `{}` repeated in the head of {at}",
                            clause.vars[v.index()].name
                        ),
                    );
                }
            }
            Term::Const(c) => {
                if let Some(&pop) = decl.param_types.get(k) {
                    if model.member_index(pop, c).is_none() {
                        report.push(
                            ViolationKind::UnknownConstant,
                            format!(
                                "unknown constant `{}` for population `{}` in {at}",
                                model.name(c),
                                model.population(pop).name
                            ),
                        );
                    }
                }
            }
        }
    }

    // body literals
    clause.body.for_each_literal(&mut |l| {
        let ldecl = model.parrv(l.parrv);
        if l.args.len() != ldecl.param_types.len() {
            report.push(
                ViolationKind::ArityMismatch,
                format!(
                    "literal `{}` in {at} has {} parameters, expected {}",
                    ldecl.name,
                    l.args.len(),
                    ldecl.param_types.len()
                ),
            );
        }
        for (k, t) in l.args.iter().enumerate() {
            if let (Term::Const(c), Some(&pop)) = (t, ldecl.param_types.get(k)) {
                if model.member_index(pop, *c).is_none() {
                    report.push(
                        ViolationKind::UnknownConstant,
                        format!(
                            "unknown constant `{}` for population `{}` in {at}",
                            model.name(*c),
                            model.population(pop).name
                        ),
                    );
                }
            }
        }
        if let Term::Const(s) = l.state {
            if model.state_index(l.parrv, s).is_none() {
                report.push(
                    ViolationKind::StateNotInRange,
                    format!(
                        "state `{}` is not in the range of `{}` in {at}",
                        model.name(s),
                        ldecl.name
                    ),
                );
            }
        }
    });

    check_variable_safety(clause, at, report);
}

/// Variables of negated literals and count goals must be bound by the head or
/// an earlier positive literal (or be local to one negation); counted
/// variables must not occur outside their goal.
fn check_variable_safety(clause: &Clause, at: &str, report: &mut ValidationReport) {
    let mut atoms = Vec::new();
    flatten_conjunction(&clause.body, &mut atoms);

    let mut positive_vars = HashSet::new();
    for a in &atoms {
        if let BodyFormula::Lit(l) = a {
            if !l.negated {
                positive_vars.extend(l.vars());
            }
        }
    }
    let name = |v: VarId| clause.vars[v.index()].name.as_str();

    let mut bound: HashSet<VarId> = clause
        .head
        .iter()
        .filter_map(|t| match t {
            Term::Var(v) => Some(*v),
            Term::Const(_) => None,
        })
        .collect();
    for (i, a) in atoms.iter().enumerate() {
        match a {
            BodyFormula::Lit(l) if !l.negated => bound.extend(l.vars()),
            BodyFormula::Lit(l) => {
                for v in l.vars() {
                    if !bound.contains(&v) && positive_vars.contains(&v) {
                        report.push(
                            ViolationKind::UnsafeVariable,
                            format!(
                                "variable `{}` in a negated literal of {at} must be bound by an earlier positive literal",
                                name(v)
                            ),
                        );
                    }
                }
            }
            BodyFormula::Count(c) => {
                if let CountSource::Goal { var, goal } = &c.source {
                    if !goal.vars().any(|v| v == *var) {
                        report.push(
                            ViolationKind::UnsafeVariable,
                            format!(
                                "counted variable `{}` does not occur in its goal in {at}",
                                name(*var)
                            ),
                        );
                    }
                    let elsewhere = bound.contains(var)
                        || atoms.iter().enumerate().any(|(j, b)| {
                            j != i && {
                                let mut vs = Vec::new();
                                b.vars_in_order(&mut vs);
                                vs.contains(var)
                            }
                        });
                    if elsewhere {
                        report.push(
                            ViolationKind::UnsafeVariable,
                            format!(
                                "counted variable `{}` must not occur outside its count in {at}",
                                name(*var)
                            ),
                        );
                    }
                    for v in goal.vars().filter(|v| v != var) {
                        if !bound.contains(&v) {
                            report.push(
                                ViolationKind::UnsafeVariable,
                                format!(
                                    "variable `{}` in a count goal of {at} must be bound by the head or an earlier positive literal",
                                    name(v)
                                ),
                            );
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

fn flatten_conjunction<'a>(f: &'a BodyFormula, out: &mut Vec<&'a BodyFormula>) {
    match f {
        BodyFormula::And(xs) => xs.iter().for_each(|x| flatten_conjunction(x, out)),
        other => out.push(other),
    }
}
