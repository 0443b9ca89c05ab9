//! Ground parent/child graph.
//!
//! Parents of an RV are all RVs mentioned by the grounded bodies of every
//! clause of its decision list, reachable or not.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write;

use thiserror::Error;

use crate::model::{Model, RvId};
use crate::specialize::{ground_head, Specializer};
use crate::state::Evidence;
use crate::validate::{validate_model, ValidationReport, ViolationKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    parents: Vec<Vec<RvId>>,
    children: Vec<Vec<RvId>>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DependencyError {
    #[error("unknown RV id {0}")]
    UnknownRv(u32),
    #[error("dependency cycle: {}", render(.0))]
    Cycle(Vec<RvId>),
}

fn render(cycle: &[RvId]) -> String {
    let ids: Vec<String> = cycle.iter().map(|r| format!("#{}", r.0)).collect();
    ids.join(" -> ")
}

pub fn build_dependency_graph(model: &Model) -> DependencyGraph {
    let n = model.rv_count();
    let sp = Specializer::new(model, &Evidence::default());
    let mut parents: Vec<Vec<RvId>> = vec![Vec::new(); n];
    for rv in model.rv_ids() {
        let params = model.rv_params(rv);
        let list = model.decision_list(model.rv_parrv(rv));
        let ps = &mut parents[rv.index()];
        for clause in &list.clauses {
            let Some(bind) = ground_head(clause, params) else {
                continue;
            };
            let body = clause
                .body
                .map_terms(&|t| crate::specialize::substitute(t, &bind));
            sp.ground_body(&body, &clause.vars).for_each_literal(&mut |l| {
                let args = l.args.iter().map(|t| t.as_const().expect("ground"));
                if let Some(p) = model.rv_index(l.parrv, args) {
                    ps.push(p);
                }
            });
        }
        ps.sort_unstable();
        ps.dedup();
    }
    let mut children: Vec<Vec<RvId>> = vec![Vec::new(); n];
    for (child, ps) in parents.iter().enumerate() {
        for p in ps {
            children[p.index()].push(RvId(child as u32));
        }
    }
    DependencyGraph { parents, children }
}

impl DependencyGraph {
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents_of(&self, rv: RvId) -> Result<&[RvId], DependencyError> {
        self.parents
            .get(rv.index())
            .map(Vec::as_slice)
            .ok_or(DependencyError::UnknownRv(rv.0))
    }

    pub fn children_of(&self, rv: RvId) -> Result<&[RvId], DependencyError> {
        self.children
            .get(rv.index())
            .map(Vec::as_slice)
            .ok_or(DependencyError::UnknownRv(rv.0))
    }

    /// Unchecked child lookup for the sampler's inner loop.
    #[inline]
    pub(crate) fn children(&self, rv: RvId) -> &[RvId] {
        &self.children[rv.index()]
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// `parent -> child` lines, children in canonical order.
    pub fn dump(&self, model: &Model) -> String {
        let mut out = String::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for p in ps {
                writeln!(
                    out,
                    "{} -> {}",
                    model.display_rv(*p),
                    model.display_rv(RvId(c as u32))
                )
                .unwrap();
            }
        }
        out
    }
}

/// `Ok` or a cycle `[a, b, ..., a]` found by depth-first search from the
/// lowest RV id.
pub fn check_acyclic(graph: &DependencyGraph) -> Result<(), Vec<RvId>> {
    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let n = graph.len();
    let mut color = vec![WHITE; n];
    let mut stack: Vec<(RvId, usize)> = Vec::new();
    for start in 0..n {
        if color[start] != WHITE {
            continue;
        }
        stack.push((RvId(start as u32), 0));
        color[start] = GRAY;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let kids = graph.children(node);
            if *next == kids.len() {
                color[node.index()] = BLACK;
                stack.pop();
                continue;
            }
            let kid = kids[*next];
            *next += 1;
            match color[kid.index()] {
                WHITE => {
                    color[kid.index()] = GRAY;
                    stack.push((kid, 0));
                }
                GRAY => {
                    let from = stack.iter().position(|&(r, _)| r == kid).unwrap();
                    let mut cycle: Vec<RvId> = stack[from..].iter().map(|&(r, _)| r).collect();
                    cycle.push(kid);
                    return Err(cycle);
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// Parents before children; ties go to the lower RV id.
pub fn topological_order(graph: &DependencyGraph) -> Result<Vec<RvId>, DependencyError> {
    let n = graph.len();
    let mut indegree: Vec<usize> = graph.parents.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<RvId>> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(|i| Reverse(RvId(i as u32)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(rv)) = ready.pop() {
        order.push(rv);
        for &c in graph.children(rv) {
            indegree[c.index()] -= 1;
            if indegree[c.index()] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() < n {
        let cycle = check_acyclic(graph).expect_err("leftover nodes imply a cycle");
        return Err(DependencyError::Cycle(cycle));
    }
    Ok(order)
}

/// Model validation plus the acyclicity check on the ground graph.
pub fn validate_with_graph(model: &Model) -> (ValidationReport, Option<DependencyGraph>) {
    let mut report = validate_model(model);
    if !report.is_valid() {
        return (report, None);
    }
    let graph = build_dependency_graph(model);
    if let Err(cycle) = check_acyclic(&graph) {
        let names: Vec<String> = cycle.iter().map(|&r| model.display_rv(r)).collect();
        report.push(
            ViolationKind::Cycle,
            format!("dependency cycle: {}", names.join(" -> ")),
        );
    }
    (report, Some(graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_ground_rv, parse_model};
    use crate::testing::{EXAMPLE1, RAIN_WET};

    fn rvs(m: &Model, names: &[&str]) -> Vec<RvId> {
        names.iter().map(|n| parse_ground_rv(n, m).unwrap()).collect()
    }

    #[test]
    fn example1_parents_and_children() {
        let m = parse_model(EXAMPLE1).unwrap();
        let g = build_dependency_graph(&m);
        let g11 = parse_ground_rv("grade(s1,c1)", &m).unwrap();
        assert_eq!(g.parents_of(g11).unwrap(), rvs(&m, &["level(c1)", "iq(s1)"]));
        let grad = parse_ground_rv("graduates(s1)", &m).unwrap();
        assert_eq!(
            g.parents_of(grad).unwrap(),
            rvs(
                &m,
                &["grade(s1,c1)", "grade(s1,c2)", "grade(s1,c3)", "grade(s1,c4)", "grade(s1,c5)"]
            )
        );
        let l1 = parse_ground_rv("level(c1)", &m).unwrap();
        assert!(g.parents_of(l1).unwrap().is_empty());
        let iq1 = parse_ground_rv("iq(s1)", &m).unwrap();
        assert_eq!(
            g.children_of(iq1).unwrap(),
            rvs(
                &m,
                &["grade(s1,c1)", "grade(s1,c2)", "grade(s1,c3)", "grade(s1,c4)", "grade(s1,c5)"]
            )
        );
        assert!(g.children_of(grad).unwrap().is_empty());
        assert_eq!(g.children_of(RvId(999)), Err(DependencyError::UnknownRv(999)));
        assert_eq!(check_acyclic(&g), Ok(()));
    }

    #[test]
    fn example1_layers() {
        let m = parse_model(EXAMPLE1).unwrap();
        let order = topological_order(&build_dependency_graph(&m)).unwrap();
        let layer = |rv: RvId| match m.parrv(m.rv_parrv(rv)).name.as_str() {
            "level" | "iq" => 0,
            "grade" => 1,
            _ => 2,
        };
        assert!(order.windows(2).all(|w| layer(w[0]) <= layer(w[1])));
        assert_eq!(order.len(), 19);
    }

    #[test]
    fn cycles_are_reported() {
        let two = "parrv a states {t, f}.
parrv b states {t, f}.
cpd a ~ [t:0.5,f:0.5] :- b(t).
cpd a ~ [t:0.5,f:0.5].
cpd b ~ [t:0.5,f:0.5] :- a(t).
cpd b ~ [t:0.5,f:0.5].
";
        let m = parse_model(two).unwrap();
        let g = build_dependency_graph(&m);
        assert_eq!(check_acyclic(&g), Err(rvs(&m, &["a", "b", "a"])));
        assert!(matches!(topological_order(&g), Err(DependencyError::Cycle(_))));
        let (report, _) = validate_with_graph(&m);
        assert!(report.has(ViolationKind::Cycle));
        assert!(report.to_string().contains("a -> b -> a"), "{report}");

        let selfloop = "parrv a states {t, f}.
cpd a ~ [t:0.5,f:0.5] :- a(t).
cpd a ~ [t:0.5,f:0.5].
";
        let m = parse_model(selfloop).unwrap();
        let g = build_dependency_graph(&m);
        assert_eq!(check_acyclic(&g), Err(rvs(&m, &["a", "a"])));
    }

    #[test]
    fn chain_order_and_dump() {
        let chain = "parrv c states {t, f}.
parrv b states {t, f}.
parrv a states {t, f}.
cpd c ~ [t:0.5,f:0.5] :- b(t).
cpd c ~ [t:0.5,f:0.5].
cpd b ~ [t:0.5,f:0.5] :- a(t).
cpd b ~ [t:0.5,f:0.5].
cpd a ~ [t:0.5,f:0.5].
";
        let m = parse_model(chain).unwrap();
        let g = build_dependency_graph(&m);
        assert_eq!(topological_order(&g).unwrap(), rvs(&m, &["a", "b", "c"]));
        assert_eq!(g.dump(&m), "b -> c\na -> b\n");
        let m = parse_model(RAIN_WET).unwrap();
        assert_eq!(build_dependency_graph(&m).edge_count(), 1);
    }
}
