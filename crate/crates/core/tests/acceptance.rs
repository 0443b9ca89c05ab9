//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any fails.
//!
//! `cargo test -p pbn-core --test acceptance -- 3 8` runs only criteria 3 and 8.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pbn_core::dependency::{build_dependency_graph, check_acyclic, validate_with_graph};
use pbn_core::harness::{
    append_csv, mean, median, observed_fraction_evidence, read_csv, run_bench, std_dev,
    trend_holds, university_model, BenchReport, EvidenceSource, Scenario,
};
use pbn_core::model::{BodyFormula, Comparator, CountConstraint, CountSource, Model, RvId, Sym};
use pbn_core::parser::{parse_evidence, parse_model, parse_model_unchecked};
use pbn_core::sampler::{exact_marginals, sample_chain, SamplerConfig};
use pbn_core::specialize::{simplify_body, specialize, verify_equivalence, Specializer};
use pbn_core::state::Evidence;
use pbn_core::testing::{EXAMPLE1, RAIN_WET};
use pbn_core::validate::ViolationKind;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 -------------------------------------------------------------------------

fn specializer_equivalence() -> Outcome {
    let fractions = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut queries = 0;
    for i in 0..20u64 {
        let students = rng.random_range(1..=10);
        let courses = rng.random_range(1..=10);
        let frac = fractions[i as usize % fractions.len()];
        let model = Arc::new(parse_model(&university_model(students, courses, i).unwrap()).unwrap());
        let graph = build_dependency_graph(&model);
        let ev = observed_fraction_evidence(&model, &graph, frac, 100 + i).unwrap();
        let spec = specialize(&model, &ev);
        let report = verify_equivalence(&spec, &ev, 1000, 200 + i);
        queries += report.queries_checked;
        if let Some(m) = report.mismatch {
            return Err(format!(
                "model {i} ({students}x{courses}, observed {frac}): {} differs in trial {}: {:?} vs {:?}",
                model.display_rv(m.rv),
                m.trial,
                m.original,
                m.specialized
            ));
        }
    }
    Ok(format!("20 models x 1000 states, {queries} CPD-query answers identical"))
}

// 2 -------------------------------------------------------------------------

fn sequence_identity() -> Outcome {
    let sizes = [(2, 5), (3, 7), (5, 6), (6, 9), (8, 10)];
    let mut draws = 0;
    for (k, &(s, c)) in sizes.iter().enumerate() {
        let model = Arc::new(parse_model(&university_model(s, c, 50 + k as u64).unwrap()).unwrap());
        let graph = build_dependency_graph(&model);
        let ev = observed_fraction_evidence(&model, &graph, 0.6, 60 + k as u64).unwrap();
        let spec = specialize(&model, &ev);
        for seed in [1u64, 2, 3] {
            let cfg = SamplerConfig {
                n_samples: 10_000,
                burn_in: 0,
                seed,
            };
            let mut a: Vec<(RvId, Sym)> = Vec::new();
            let mut b: Vec<(RvId, Sym)> = Vec::new();
            sample_chain(model.as_ref(), &ev, &graph, &cfg, &[], &mut a).map_err(|e| e.to_string())?;
            sample_chain(&spec, &ev, &graph, &cfg, &[], &mut b).map_err(|e| e.to_string())?;
            if let Some(pos) = a.iter().zip(&b).position(|(x, y)| x != y) {
                return Err(format!("model {k} seed {seed}: streams diverge at draw {pos}"));
            }
            check(a.len() == b.len(), || format!("model {k} seed {seed}: stream lengths differ"))?;
            draws += a.len();
        }
    }
    Ok(format!("5 models x 3 seeds, {draws} draws identical"))
}

// 3 -------------------------------------------------------------------------

const EXAMPLE1_SMALL: &str = "\
population course = {c1, c2}.
population student = {s1}.
parrv level(course) states {intro, advanced}.
parrv iq(student) states {high, low}.
parrv grade(student, course) states {a, b, c}.
parrv graduates(student) states {yes, no}.
cpd level(_C) ~ [intro:0.4,advanced:0.6].
cpd iq(_S) ~ [high:0.5,low:0.5].
cpd grade(S,C) ~ [a:0.7,b:0.2,c:0.1] :- iq(S,high), level(C,intro).
cpd grade(S,C) ~ [a:0.2,b:0.2,c:0.6] :- iq(S,low), level(C,advanced).
cpd grade(_S,_C) ~ [a:0.3,b:0.4,c:0.3].
cpd graduates(S) ~ [yes:0.2,no:0.8] :- grade(S,_C,c).
cpd graduates(S) ~ [yes:0.5,no:0.5] :- count(C, grade(S,C,a)) < 2.
cpd graduates(_S) ~ [yes:0.9,no:0.1].
";

const NEGATION: &str = "\
population x = {x1, x2, x3}.
parrv p(x) states {t, f}.
parrv q states {t, f}.
cpd p(_X) ~ [t:0.3,f:0.7].
cpd q ~ [t:0.8,f:0.2] :- not p(_X,t).
cpd q ~ [t:0.1,f:0.9].
";

fn gibbs_vs_oracle() -> Outcome {
    let mut cases: Vec<(String, Model, Evidence)> = Vec::new();
    let mut add = |name: &str, text: &str, ev: &str| {
        let m = parse_model(text).unwrap();
        let e = parse_evidence(ev, &m).unwrap();
        cases.push((name.to_owned(), m, e));
    };
    add("rain/wet", RAIN_WET, "wet=y.");
    add("example1 1x2", EXAMPLE1_SMALL, "grade(s1,c1)=a. grade(s1,c2)=c.");
    add(
        "example1",
        EXAMPLE1,
        "grade(s1,c1)=a. grade(s1,c2)=b. grade(s1,c3)=c. grade(s1,c4)=a. grade(s1,c5)=b. iq(s2)=low. graduates(s2)=yes.",
    );
    add("negation", NEGATION, "q=t.");
    for (k, (s, c)) in [(2usize, 3usize), (3, 2)].into_iter().enumerate() {
        let text = university_model(s, c, 70 + k as u64).unwrap();
        let m = parse_model(&text).unwrap();
        let g = build_dependency_graph(&m);
        let hide = 10 + 2 * k;
        let frac = 1.0 - hide as f64 / m.rv_count() as f64;
        let e = observed_fraction_evidence(&m, &g, frac, 80 + k as u64).unwrap();
        cases.push((format!("university {s}x{c}"), m, e));
    }

    let mut worst: f64 = 0.0;
    let mut rain = f64::NAN;
    for (name, m, e) in &cases {
        let free: Vec<RvId> = m.rv_ids().filter(|&r| !e.contains(r)).collect();
        check(free.len() <= 12, || format!("{name}: {} unobserved RVs", free.len()))?;
        let exact = exact_marginals(m, e, &free).map_err(|x| format!("{name}: {x}"))?;
        let g = build_dependency_graph(m);
        let cfg = SamplerConfig {
            n_samples: 50_000,
            burn_in: 1_000,
            seed: 9,
        };
        let run = sample_chain(m, e, &g, &cfg, &free, &mut ()).map_err(|x| format!("{name}: {x}"))?;
        for (est, ex) in run.estimates.iter().zip(&exact) {
            for (p, q) in est.probabilities().iter().zip(ex) {
                let d = (p - q).abs();
                worst = worst.max(d);
                check(d <= 0.02, || {
                    format!("{name}: {} estimate {p:.4} vs exact {q:.4}", m.display_rv(est.rv))
                })?;
            }
        }
        if name == "rain/wet" {
            rain = run.estimates[0].estimate(0);
            check((exact[0][0] - 0.27 / 0.41).abs() < 1e-12, || {
                format!("oracle P(rain=y) = {}", exact[0][0])
            })?;
            check((rain - 0.6585).abs() <= 0.02, || format!("P(rain=y) = {rain:.4}"))?;
        }
    }
    Ok(format!(
        "{} models, max |gibbs - exact| = {worst:.4}, P(rain=y|wet=y) = {rain:.4}",
        cases.len()
    ))
}

// 4 -------------------------------------------------------------------------

fn example4_reproduction() -> Outcome {
    let mut m = parse_model(EXAMPLE1).unwrap();
    let mut lit = |neg: bool, s: &str, c: &str, g: &str| {
        m.ground_literal(neg, "grade", &[s, c], g).unwrap()
    };
    let pos_a = lit(false, "s1", "c1", "a");
    let neg_a = lit(true, "s1", "c1", "a");
    let pos_unobs = lit(false, "s1", "c2", "a");
    let neg_unobs = lit(true, "s1", "c2", "a");
    let pos_missing = lit(false, "s9", "c1", "a");
    let g1 = BodyFormula::Lit(lit(false, "s1", "c1", "a"));
    let g3 = BodyFormula::Lit(lit(false, "s1", "c3", "a"));
    let ev_a = parse_evidence("grade(s1,c1)=a.", &m).unwrap();
    let ev_b = parse_evidence("grade(s1,c1)=b.", &m).unwrap();
    let sa = Specializer::new(&m, &ev_a);
    let sb = Specializer::new(&m, &ev_b);
    let table = [
        ("positive, observed, consistent", sa.specialize_literal(&pos_a), BodyFormula::True),
        ("positive, observed, inconsistent", sb.specialize_literal(&pos_a), BodyFormula::False),
        ("positive, unobserved", sa.specialize_literal(&pos_unobs), BodyFormula::Lit(pos_unobs.clone())),
        ("positive, non-existent RV", sa.specialize_literal(&pos_missing), BodyFormula::False),
        ("negative, observed, consistent", sa.specialize_literal(&neg_a), BodyFormula::False),
        ("negative, observed, inconsistent", sb.specialize_literal(&neg_a), BodyFormula::True),
        ("negative, unobserved", sa.specialize_literal(&neg_unobs), BodyFormula::Lit(neg_unobs.clone())),
    ];
    for (branch, got, want) in &table {
        check(got == want, || format!("{branch}: got {got:?}"))?;
    }
    let count = BodyFormula::Count(CountConstraint {
        source: CountSource::Ground(vec![
            g1,
            BodyFormula::True,
            g3,
            BodyFormula::False,
            BodyFormula::True,
        ]),
        offset: 0,
        cmp: Comparator::Lt,
        bound: 2,
    });
    let simplified = simplify_body(&count);
    check(simplified == BodyFormula::False, || format!("count simplified to {simplified:?}"))?;
    Ok(format!("{} literal branches exact; count{{..}}+2 < 2 simplifies to false", table.len()))
}

// 5-7 -----------------------------------------------------------------------

const EVIDENCE_FRACTIONS: [f64; 4] = [0.05, 0.15, 0.30, 0.50];
const SIZES: [(usize, usize); 3] = [(20, 24), (50, 40), (100, 78)];
const BENCH_SAMPLES: usize = 10_000;
const BENCH_REPS: usize = 5;

struct BenchData {
    by_fraction: Vec<Vec<BenchReport>>,
    by_size: Vec<Vec<BenchReport>>,
}

fn csv_path() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_bench.csv")
}

fn bench_model(students: usize, courses: usize) -> Arc<Model> {
    Arc::new(parse_model(&university_model(students, courses, 1).unwrap()).unwrap())
}

fn bench(model: &Arc<Model>, f: f64, seed: u64) -> Result<Vec<BenchReport>, String> {
    let rows = run_bench(
        model,
        &EvidenceSource::Scenario(Scenario::Missing(f)),
        BENCH_SAMPLES,
        BENCH_REPS,
        seed,
    )
    .map_err(|e| e.to_string())?;
    append_csv(&csv_path(), &rows).map_err(|e| e.to_string())?;
    Ok(rows)
}

fn run_benchmarks() -> Result<BenchData, String> {
    let _ = std::fs::remove_file(csv_path());
    let mid = bench_model(SIZES[1].0, SIZES[1].1);
    let mut by_fraction = Vec::new();
    for (i, &f) in EVIDENCE_FRACTIONS.iter().enumerate() {
        by_fraction.push(bench(&mid, f, 1000 + 10 * i as u64)?);
    }
    let mut by_size = Vec::new();
    for (i, &(s, c)) in SIZES.iter().enumerate() {
        if i == 1 {
            by_size.push(by_fraction[1].clone());
        } else {
            by_size.push(bench(&bench_model(s, c), 0.15, 2000 + 10 * i as u64)?);
        }
    }
    // the CSV is the source of truth for the overhead check
    let rows = read_csv(&csv_path()).map_err(|e| e.to_string())?;
    check(rows.len() == (EVIDENCE_FRACTIONS.len() + 2) * BENCH_REPS, || {
        format!("CSV has {} rows", rows.len())
    })?;
    Ok(BenchData {
        by_fraction,
        by_size,
    })
}

fn speedups(rows: &[BenchReport]) -> Vec<f64> {
    rows.iter().map(BenchReport::speedup).collect()
}

fn summarize(groups: &[Vec<BenchReport>]) -> (Vec<f64>, Vec<f64>) {
    groups
        .iter()
        .map(|g| (mean(&speedups(g)), std_dev(&speedups(g))))
        .unzip()
}

fn fmt_trend(labels: &[String], means: &[f64], sds: &[f64]) -> String {
    labels
        .iter()
        .zip(means.iter().zip(sds))
        .map(|(l, (m, s))| format!("{l}: {m:.2}x±{s:.2}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn speedup_vs_evidence(data: &BenchData) -> Outcome {
    let (means, sds) = summarize(&data.by_fraction);
    let rv_count = data.by_fraction[0][0].rv_count;
    let labels: Vec<String> = EVIDENCE_FRACTIONS.iter().map(|f| format!("f={f}")).collect();
    let text = format!("{rv_count} RVs; {}", fmt_trend(&labels, &means, &sds));
    check(means[0] >= 2.0, || format!("speedup at f=0.05 below 2x; {text}"))?;
    check(trend_holds(&means, &sds, false), || format!("not non-increasing; {text}"))?;
    Ok(text)
}

fn speedup_vs_size(data: &BenchData) -> Outcome {
    let (means, sds) = summarize(&data.by_size);
    let labels: Vec<String> = data
        .by_size
        .iter()
        .map(|g| format!("{} RVs", g[0].rv_count))
        .collect();
    let text = format!("f=0.15; {}", fmt_trend(&labels, &means, &sds));
    check(trend_holds(&means, &sds, true), || format!("not non-decreasing; {text}"))?;
    Ok(text)
}

fn overhead(_: &BenchData) -> Outcome {
    let rows = read_csv(&csv_path()).map_err(|e| e.to_string())?;
    let mut fractions = Vec::new();
    for row in &rows {
        let get = |k: &str| row.iter().find(|(h, _)| h == k).map(|(_, v)| v.clone()).unwrap();
        if get("n_samples") == BENCH_SAMPLES.to_string() {
            fractions.push(get("overhead_fraction").parse::<f64>().map_err(|e| e.to_string())?);
        }
    }
    check(!fractions.is_empty(), || "no benchmark rows".into())?;
    let max = fractions.iter().cloned().fold(0.0, f64::max);
    let med = median(&fractions);
    let text = format!("{} rows, max {max:.4}, median {med:.4}", fractions.len());
    check(max < 0.10, || format!("max overhead too large; {text}"))?;
    check(med < 0.05, || format!("median overhead too large; {text}"))?;
    Ok(text)
}

// 8 -------------------------------------------------------------------------

fn validation_suite() -> Outcome {
    let m = parse_model(EXAMPLE1).map_err(|e| e.to_string())?;
    let (report, graph) = validate_with_graph(&m);
    check(report.is_valid(), || format!("example 1 rejected: {report}"))?;
    check(check_acyclic(&graph.unwrap()).is_ok(), || "example 1 cyclic".into())?;

    let mutants: [(&str, String, ViolationKind, &str); 4] = [
        (
            "missing default clause",
            EXAMPLE1.replace("cpd graduates(_S) ~ [yes:0.9,no:0.1].\n", ""),
            ViolationKind::NotTotal,
            "decision list not total for `graduates`",
        ),
        (
            "unnormalized distribution",
            EXAMPLE1.replace("[high:0.5,low:0.5]", "[high:0.5,low:0.6]"),
            ViolationKind::Unnormalized,
            "sums to 1.1",
        ),
        (
            "cyclic dependency",
            EXAMPLE1.replace(
                "cpd level(_C) ~ [intro:0.4,advanced:0.6].",
                "cpd level(C) ~ [intro:0.4,advanced:0.6] :- grade(_S,C,a).\ncpd level(_C) ~ [intro:0.4,advanced:0.6].",
            ),
            ViolationKind::Cycle,
            "dependency cycle: level(c1) -> grade(s1,c1) -> level(c1)",
        ),
        (
            "unknown constant",
            EXAMPLE1.replace("iq(S,high)", "iq(s9,high)"),
            ViolationKind::UnknownConstant,
            "unknown constant `s9`",
        ),
    ];
    for (name, text, kind, needle) in &mutants {
        let model = parse_model_unchecked(text).map_err(|e| format!("{name}: {e}"))?;
        let (report, _) = validate_with_graph(&model);
        check(!report.is_valid(), || format!("{name}: accepted"))?;
        check(report.has(*kind), || format!("{name}: wrong diagnostic: {report}"))?;
        let msg = report.to_string();
        check(msg.contains(needle), || format!("{name}: `{needle}` not in: {msg}"))?;
    }
    Ok("example 1 valid and acyclic; 4 mutants rejected with specific diagnostics".into())
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let selected = |n: u32| wanted.is_empty() || wanted.contains(&n);

    let mut failures = 0;
    let mut report = |n: u32, title: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {n}. {title}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {n}. {title}: {detail} ({secs:.1}s)");
            }
        }
    };

    type Plain = fn() -> Outcome;
    let plain: [(u32, &str, Plain); 4] = [
        (1, "specializer equivalence", specializer_equivalence),
        (2, "sequence identity", sequence_identity),
        (3, "gibbs vs exact oracle", gibbs_vs_oracle),
        (4, "literal truth table and count simplification", example4_reproduction),
    ];
    for (n, title, f) in plain {
        if selected(n) {
            let t = Instant::now();
            report(n, title, t, f());
        }
    }

    type Bench = fn(&BenchData) -> Outcome;
    let benches: [(u32, &str, Bench); 3] = [
        (5, "speedup vs evidence fraction", speedup_vs_evidence),
        (6, "speedup vs model size", speedup_vs_size),
        (7, "specialization overhead", overhead),
    ];
    if benches.iter().any(|b| selected(b.0)) {
        let t = Instant::now();
        let data = run_benchmarks();
        let setup = t.elapsed().as_secs_f64();
        println!("       benchmarks: {setup:.1}s, rows in {}", csv_path().display());
        for (n, title, f) in benches {
            if selected(n) {
                let t = Instant::now();
                let outcome = match &data {
                    Ok(d) => f(d),
                    Err(e) => Err(format!("benchmark failed: {e}")),
                };
                report(n, title, t, outcome);
            }
        }
    }

    if selected(8) {
        let t = Instant::now();
        report(8, "validation suite", t, validation_suite());
    }

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
