use std::sync::Arc;

use proptest::prelude::*;

use pbn_core::dependency::build_dependency_graph;
use pbn_core::eval::{eval_body, Bindings};
use pbn_core::harness::{observed_fraction_evidence, university_model};
use pbn_core::model::{BodyFormula, Comparator, CountConstraint, CountSource, Literal, Term};
use pbn_core::parser::{
    ground_rv_by_name, parse_model, parse_model_unchecked, serialize_model,
};
use pbn_core::sampler::{sample_chain, SamplerConfig};
use pbn_core::specialize::{simplify_body, specialize, verify_equivalence};
use pbn_core::testing::EXAMPLE1;
use pbn_core::{CpdProgram, Evidence, Model, RvId, StateKb};

fn uni(students: usize, courses: usize, seed: u64) -> Arc<Model> {
    Arc::new(parse_model(&university_model(students, courses, seed).unwrap()).unwrap())
}

/// Full assignment chosen by `picks` (cycled).
fn full_evidence(model: &Model, picks: &[usize]) -> Evidence {
    let mut ev = Evidence::default();
    for rv in model.rv_ids() {
        let range = model.rv_range(rv);
        let k = picks[rv.index() % picks.len()] % range.len();
        ev.insert(rv, range[k]);
    }
    ev
}

fn cpd(model: &Model, ev: &Evidence, rv: RvId) -> Vec<f64> {
    let kb = StateKb::from_evidence(model, ev);
    model.apply_cpd(&kb, rv).unwrap().probs().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parser_never_panics(text in "[a-z(){},.:;~_% \\[\\]0-9=<>!-]{0,80}") {
        let _ = parse_model_unchecked(&text);
    }

    #[test]
    fn parser_never_panics_on_mangled_models(cut in 0usize..400, junk in "[(),.:~\\[\\]a-z0-9]{0,4}") {
        let mut text = EXAMPLE1.to_owned();
        let at = cut.min(text.len());
        text.insert_str(at, &junk);
        let _ = parse_model_unchecked(&text);
    }

    #[test]
    fn serialize_round_trips(s in 1usize..4, c in 1usize..4, seed in 0u64..1000) {
        let m = uni(s, c, seed);
        let back = parse_model(&serialize_model(&m)).unwrap();
        prop_assert_eq!(&back, m.as_ref());
    }

    #[test]
    fn evaluation_is_total(s in 1usize..4, c in 1usize..5, seed in 0u64..1000,
                           picks in prop::collection::vec(0usize..3, 1..16)) {
        let m = uni(s, c, seed);
        let ev = full_evidence(&m, &picks);
        let kb = StateKb::from_evidence(&m, &ev);
        for rv in m.rv_ids() {
            let d = m.apply_cpd(&kb, rv).unwrap();
            prop_assert!((d.sum() - 1.0).abs() < 1e-9);
        }
    }

    /// `graduates(s)` against a hand-rolled reading of its decision list.
    #[test]
    fn existential_and_count_match_brute_force(picks in prop::collection::vec(0usize..3, 1..24)) {
        let m = parse_model(EXAMPLE1).unwrap();
        let ev = full_evidence(&m, &picks);
        let grade = |s: &str, c: &str| {
            let rv = m.rv_id(&ground_rv_by_name(&m, "grade", &[s, c]).unwrap()).unwrap();
            m.name(ev.get(rv).unwrap()).to_owned()
        };
        for s in ["s1", "s2"] {
            let gs: Vec<String> = ["c1", "c2", "c3", "c4", "c5"].iter().map(|c| grade(s, c)).collect();
            let expected = if gs.iter().any(|g| g == "c") {
                [0.2, 0.8]
            } else if gs.iter().filter(|g| *g == "a").count() < 2 {
                [0.5, 0.5]
            } else {
                [0.9, 0.1]
            };
            let rv = m.rv_id(&ground_rv_by_name(&m, "graduates", &[s]).unwrap()).unwrap();
            prop_assert_eq!(cpd(&m, &ev, rv), expected.to_vec());
        }
    }

    #[test]
    fn specialization_is_equivalent(s in 1usize..4, c in 1usize..4, seed in 0u64..1000,
                                    frac in 0.0f64..=1.0) {
        let m = uni(s, c, seed);
        let g = build_dependency_graph(&m);
        let ev = observed_fraction_evidence(&m, &g, frac, seed ^ 0x5eed).unwrap();
        let p = specialize(&m, &ev);
        let report = verify_equivalence(&p, &ev, 40, seed);
        prop_assert!(report.ok(), "{:?}", report.mismatch);
    }

    /// Changing any RV outside an RV's parent set leaves its CPD unchanged.
    #[test]
    fn non_parents_do_not_matter(s in 1usize..3, c in 1usize..4, seed in 0u64..1000,
                                 picks in prop::collection::vec(0usize..3, 1..12),
                                 target in 0usize..100, flip in 0usize..100, bump in 1usize..3) {
        let m = uni(s, c, seed);
        let g = build_dependency_graph(&m);
        let n = m.rv_count();
        let (rv, other) = (RvId((target % n) as u32), RvId((flip % n) as u32));
        prop_assume!(rv != other && !g.parents_of(rv).unwrap().contains(&other));
        let ev = full_evidence(&m, &picks);
        let range = m.rv_range(other);
        let cur = range.iter().position(|&x| Some(x) == ev.get(other)).unwrap();
        let mut ev2 = ev.clone();
        ev2.insert(other, range[(cur + bump) % range.len()]);
        prop_assert_eq!(cpd(&m, &ev, rv), cpd(&m, &ev2, rv));
    }

    /// Observed RVs are never resampled and keep a point-mass estimate.
    #[test]
    fn observed_rvs_stay_fixed(seed in 0u64..500, frac in 0.1f64..0.9) {
        let m = uni(2, 3, seed);
        let g = build_dependency_graph(&m);
        let ev = observed_fraction_evidence(&m, &g, frac, seed).unwrap();
        let targets: Vec<RvId> = m.rv_ids().collect();
        let config = SamplerConfig { n_samples: 30, burn_in: 5, seed };
        let mut draws: Vec<(RvId, pbn_core::model::Sym)> = Vec::new();
        let run = sample_chain(m.as_ref(), &ev, &g, &config, &targets, &mut draws).unwrap();
        prop_assert!(draws.iter().all(|(rv, _)| !ev.contains(*rv)));
        for e in &run.estimates {
            if let Some(s) = ev.get(e.rv) {
                let i = m.state_index(m.rv_parrv(e.rv), s).unwrap();
                prop_assert_eq!(e.estimate(i), 1.0);
            }
        }
    }
}

const THREE: &str = "\
parrv a states {t, f}.
parrv b states {t, f}.
parrv c states {t, f}.
cpd a ~ [t:0.5,f:0.5].
cpd b ~ [t:0.5,f:0.5].
cpd c ~ [t:0.5,f:0.5].
";

fn formula(m: &Model) -> impl Strategy<Value = BodyFormula> {
    let lits: Vec<Literal> = ["a", "b", "c"]
        .iter()
        .flat_map(|p| {
            let parrv = m.parrv_id(p).unwrap();
            let t = m.sym("t").unwrap();
            [false, true].map(|negated| Literal { negated, parrv, args: vec![], state: Term::Const(t) })
        })
        .collect();
    let leaf = prop_oneof![
        Just(BodyFormula::True),
        Just(BodyFormula::False),
        prop::sample::select(lits).prop_map(BodyFormula::Lit),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        let cmp = prop::sample::select(vec![
            Comparator::Lt,
            Comparator::Le,
            Comparator::Eq,
            Comparator::Ge,
            Comparator::Gt,
        ]);
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(BodyFormula::And),
            prop::collection::vec(inner.clone(), 0..4).prop_map(BodyFormula::Or),
            (prop::collection::vec(inner, 0..4), 0u32..2, cmp, -1i64..5).prop_map(
                |(xs, offset, cmp, bound)| BodyFormula::Count(CountConstraint {
                    source: CountSource::Ground(xs),
                    offset,
                    cmp,
                    bound,
                })
            ),
        ]
    })
}

#[test]
fn simplify_preserves_truth() {
    let m = parse_model(THREE).unwrap();
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(256));
    runner
        .run(&formula(&m), |f| {
            let g = simplify_body(&f);
            for bits in 0..8usize {
                let ev = full_evidence(&m, &[bits & 1, (bits >> 1) & 1, (bits >> 2) & 1]);
                let kb = StateKb::from_evidence(&m, &ev);
                let b = Bindings::new(0);
                let lhs = eval_body(&kb, &m, &f, &[], &b).unwrap();
                let rhs = eval_body(&kb, &m, &g, &[], &b).unwrap();
                prop_assert_eq!(lhs, rhs, "{:?} => {:?}", f, g);
            }
            Ok(())
        })
        .unwrap();
}
