use std::fmt::Write;

use crate::model::{BodyFormula, Clause, CountSource, Literal, Model, ParRvId, Term, VarInfo};
use crate::specialize::{SpecEntry, SpecializedProgram};

/// Model text that [`super::parse_model`] reads back to an equal model.
pub fn serialize_model(model: &Model) -> String {
    let mut out = String::new();
    for p in &model.populations {
        let members: Vec<&str> = p.members.iter().map(|&m| model.name(m)).collect();
        writeln!(out, "population {} = {{{}}}.", p.name, members.join(", ")).unwrap();
    }
    for p in &model.parrvs {
        let states: Vec<&str> = p.range.iter().map(|&s| model.name(s)).collect();
        if p.param_types.is_empty() {
            writeln!(out, "parrv {} states {{{}}}.", p.name, states.join(", ")).unwrap();
        } else {
            let params: Vec<&str> = p
                .param_types
                .iter()
                .map(|&t| model.population(t).name.as_str())
                .collect();
            writeln!(
                out,
                "parrv {}({}) states {{{}}}.",
                p.name,
                params.join(", "),
                states.join(", ")
            )
            .unwrap();
        }
    }
    for list in &model.cpds {
        for clause in &list.clauses {
            write_clause(&mut out, model, list.parrv, clause);
        }
    }
    out
}

/// Model text, a `specialized.` marker, then one entry per CPD-query in
/// canonical order.
pub fn serialize_specialized(program: &SpecializedProgram) -> String {
    let model = program.model();
    let mut out = serialize_model(model);
    out.push_str("specialized.\n");
    for rv in model.rv_ids() {
        match program.entry(rv) {
            SpecEntry::UseOriginal => {
                writeln!(out, "unchanged {}.", model.display_rv(rv)).unwrap();
            }
            SpecEntry::Ground(clauses) => {
                for clause in clauses {
                    write_clause(&mut out, model, model.rv_parrv(rv), clause);
                }
            }
        }
    }
    out
}

/// Body text as it appears after `:-`.
pub fn serialize_body(model: &Model, body: &BodyFormula, vars: &[VarInfo]) -> String {
    let mut out = String::new();
    write_body(&mut out, model, body, vars, Level::Top);
    out
}

fn write_clause(out: &mut String, model: &Model, parrv: ParRvId, clause: &Clause) {
    out.push_str("cpd ");
    out.push_str(&model.parrv(parrv).name);
    if !clause.head.is_empty() {
        out.push('(');
        for (i, t) in clause.head.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_term(out, model, *t, &clause.vars);
        }
        out.push(')');
    }
    out.push_str(" ~ [");
    for (i, (s, p)) in clause.distribution.entries.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{}:{}", model.name(*s), p).unwrap();
    }
    out.push(']');
    if clause.body != BodyFormula::True {
        out.push_str(" :- ");
        write_body(out, model, &clause.body, &clause.vars, Level::Top);
    }
    out.push_str(".\n");
}

fn write_term(out: &mut String, model: &Model, t: Term, vars: &[VarInfo]) {
    match t {
        Term::Const(c) => out.push_str(model.name(c)),
        Term::Var(v) => match vars.get(v.index()) {
            Some(info) => out.push_str(&info.name),
            None => write!(out, "_V{}", v.0).unwrap(),
        },
    }
}

fn write_literal(out: &mut String, model: &Model, l: &Literal, vars: &[VarInfo]) {
    if l.negated {
        out.push_str("not ");
    }
    out.push_str(&model.parrv(l.parrv).name);
    out.push('(');
    for t in l.args.iter().copied().chain(std::iter::once(l.state)) {
        write_term(out, model, t, vars);
        out.push(',');
    }
    out.pop();
    out.push(')');
}

#[derive(Clone, Copy, PartialEq)]
enum Level {
    /// Clause body or a disjunct: a bare conjunction is unambiguous here.
    Top,
    /// Conjunct or count item: compound formulas need parentheses.
    Atom,
}

fn write_body(out: &mut String, model: &Model, f: &BodyFormula, vars: &[VarInfo], level: Level) {
    match f {
        BodyFormula::True => out.push_str("true"),
        BodyFormula::False => out.push_str("false"),
        BodyFormula::Lit(l) => write_literal(out, model, l, vars),
        BodyFormula::Count(c) => {
            match &c.source {
                CountSource::Goal { var, goal } => {
                    out.push_str("count(");
                    write_term(out, model, Term::Var(*var), vars);
                    out.push_str(", ");
                    write_literal(out, model, goal, vars);
                    out.push(')');
                }
                CountSource::Ground(items) => {
                    out.push_str("count{");
                    for (i, item) in items.iter().enumerate() {
                        if i > 0 {
                            out.push_str(" ; ");
                        }
                        write_body(out, model, item, vars, Level::Atom);
                    }
                    out.push('}');
                }
            }
            if c.offset > 0 {
                write!(out, "+{}", c.offset).unwrap();
            }
            write!(out, " {} {}", c.cmp, c.bound).unwrap();
        }
        BodyFormula::And(xs) => {
            if level == Level::Atom {
                out.push('(');
            }
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_body(out, model, x, vars, Level::Atom);
            }
            if level == Level::Atom {
                out.push(')');
            }
        }
        BodyFormula::Or(xs) => {
            out.push('(');
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" ; ");
                }
                let inner = if matches!(x, BodyFormula::Or(_)) {
                    Level::Atom
                } else {
                    Level::Top
                };
                write_body(out, model, x, vars, inner);
            }
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_model, parse_specialized};
    use crate::specialize::specialize;
    use crate::state::Evidence;
    use crate::testing::EXAMPLE1;
    use std::sync::Arc;

    #[test]
    fn example1_round_trips() {
        let m = parse_model(EXAMPLE1).unwrap();
        let text = serialize_model(&m);
        let again = parse_model(&text).unwrap();
        assert_eq!(m, again);
        assert_eq!(text, serialize_model(&again));
    }

    #[test]
    fn graduates_fact_text() {
        let m = Arc::new(parse_model(EXAMPLE1).unwrap());
        let ev = crate::parser::parse_evidence("grade(s1,c2)=c.", &m).unwrap();
        let spec = specialize(&m, &ev);
        let text = serialize_specialized(&spec);
        assert!(
            text.contains("cpd graduates(s1) ~ [yes:0.2,no:0.8].\n"),
            "{text}"
        );
    }

    #[test]
    fn specialized_with_disjunction_round_trips() {
        let m = Arc::new(parse_model(EXAMPLE1).unwrap());
        let ev = crate::parser::parse_evidence(
            "grade(s1,c1)=b. grade(s1,c2)=a. level(c1)=intro.",
            &m,
        )
        .unwrap();
        let spec = specialize(&m, &ev);
        let text = serialize_specialized(&spec);
        assert!(text.contains(" ; "), "{text}");
        assert!(text.contains("count{"), "{text}");
        let back = parse_specialized(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(serialize_specialized(&back), text);
    }

    #[test]
    fn empty_evidence_marks_every_query_unchanged() {
        let m = Arc::new(parse_model(EXAMPLE1).unwrap());
        let spec = specialize(&m, &Evidence::default());
        let text = serialize_specialized(&spec);
        assert_eq!(text.matches("unchanged ").count(), m.rv_count());
        assert_eq!(parse_specialized(&text).unwrap(), spec);
    }
}
