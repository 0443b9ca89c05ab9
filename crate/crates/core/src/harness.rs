//! Synthetic university models, evidence scenarios and the benchmark that
//! times sampling with and without specialization.

use std::fmt::{self, Write as _};
use std::fs::OpenOptions;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::dependency::{build_dependency_graph, topological_order, DependencyGraph};
use crate::model::{Model, RvId};
use crate::sampler::{
    forward_sample, sample_chain, seeded_rng, DigestSink, SampleError, SamplerConfig, SamplerRng,
};
use crate::specialize::specialize;
use crate::state::{Evidence, StateKb};

pub const CSV_HEADER: [&str; 10] = [
    "scenario",
    "param",
    "rv_count",
    "n_samples",
    "t_spec",
    "t_sample_spec",
    "t_sample_orig",
    "speedup",
    "overhead_fraction",
    "seed",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad scenario `{0}`: expected missing:<f> with 0 < f < 1 or class:<parrv>")]
    BadScenario(String),
    #[error("unknown class parRV `{0}`")]
    UnknownClass(String),
    #[error("class parRV `{0}` has no parents; its prediction is trivial")]
    RootClass(String),
    #[error("sizes must be at least 1")]
    BadSize,
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(
        "draw sequences differ with specialization (seed {seed}): {orig_draws} draws hashed to {orig:016x} without, {spec_draws} draws to {spec:016x} with"
    )]
    SequenceMismatch {
        seed: u64,
        orig: u64,
        spec: u64,
        orig_draws: u64,
        spec_draws: u64,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which RVs are hidden from the evidence.
#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    /// A uniformly random fraction `f` of all RVs is unobserved.
    Missing(f64),
    /// Every RV of one parRV is unobserved, everything else observed.
    Class(String),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Missing(_) => "missing",
            Scenario::Class(_) => "classification",
        }
    }

    pub fn param(&self) -> String {
        match self {
            Scenario::Missing(f) => f.to_string(),
            Scenario::Class(c) => c.clone(),
        }
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::BadScenario(s.to_owned());
        match s.split_once(':') {
            Some(("missing", f)) => {
                let f: f64 = f.trim().parse().map_err(|_| bad())?;
                if f > 0.0 && f < 1.0 {
                    Ok(Scenario::Missing(f))
                } else {
                    Err(bad())
                }
            }
            Some(("class", c)) if !c.trim().is_empty() => Ok(Scenario::Class(c.trim().to_owned())),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Missing(x) => write!(f, "missing:{x}"),
            Scenario::Class(c) => write!(f, "class:{c}"),
        }
    }
}

/// Strictly positive distribution in hundredths.
fn random_dist(rng: &mut impl Rng, states: &[&str]) -> String {
    let k = states.len() as u32;
    let mut left = 100 - 5 * k;
    let mut parts = Vec::with_capacity(states.len());
    for i in 0..k {
        let extra = if i + 1 == k {
            left
        } else {
            rng.random_range(0..=left)
        };
        left -= extra;
        parts.push(5 + extra);
    }
    let entries: Vec<String> = states
        .iter()
        .zip(parts)
        .map(|(s, p)| format!("{s}:{}", p as f64 / 100.0))
        .collect();
    format!("[{}]", entries.join(","))
}

/// University model with `students × courses` grades. Graduation depends on
/// how many courses were graded `c` and `a`, with thresholds scaled to the
/// number of courses. Probabilities are drawn from `seed`.
pub fn university_model(students: usize, courses: usize, seed: u64) -> Result<String, HarnessError> {
    if students == 0 || courses == 0 {
        return Err(HarnessError::BadSize);
    }
    let mut rng = seeded_rng(seed);
    let names = |prefix: &str, n: usize| -> String {
        (1..=n)
            .map(|i| format!("{prefix}{i}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let threshold = (0.35 * courses as f64).round() as usize;
    let level = ["intro", "advanced"];
    let iq = ["high", "low"];
    let grade = ["a", "b", "c"];
    let grad = ["yes", "no"];
    let mut out = String::new();
    writeln!(out, "% university model: {students} students, {courses} courses").unwrap();
    writeln!(out, "population course = {{{}}}.", names("c", courses)).unwrap();
    writeln!(out, "population student = {{{}}}.", names("s", students)).unwrap();
    out.push_str(
        "parrv level(course) states {intro, advanced}.
parrv iq(student) states {high, low}.
parrv grade(student, course) states {a, b, c}.
parrv graduates(student) states {yes, no}.
",
    );
    writeln!(out, "cpd level(_C) ~ {}.", random_dist(&mut rng, &level)).unwrap();
    writeln!(out, "cpd iq(_S) ~ {}.", random_dist(&mut rng, &iq)).unwrap();
    writeln!(
        out,
        "cpd grade(S,C) ~ {} :- iq(S,high), level(C,intro).",
        random_dist(&mut rng, &grade)
    )
    .unwrap();
    writeln!(
        out,
        "cpd grade(S,C) ~ {} :- iq(S,low), level(C,advanced).",
        random_dist(&mut rng, &grade)
    )
    .unwrap();
    writeln!(out, "cpd grade(_S,_C) ~ {}.", random_dist(&mut rng, &grade)).unwrap();
    writeln!(
        out,
        "cpd graduates(S) ~ {} :- count(C, grade(S,C,c)) > {threshold}.",
        random_dist(&mut rng, &grad)
    )
    .unwrap();
    writeln!(
        out,
        "cpd graduates(S) ~ {} :- count(C, grade(S,C,a)) < {threshold}.",
        random_dist(&mut rng, &grad)
    )
    .unwrap();
    writeln!(out, "cpd graduates(_S) ~ {}.", random_dist(&mut rng, &grad)).unwrap();
    Ok(out)
}

/// Forward-sample a complete world from `seed`, then hide RVs per scenario.
pub fn scenario_evidence(
    model: &Model,
    graph: &DependencyGraph,
    scenario: &Scenario,
    seed: u64,
) -> Result<Evidence, HarnessError> {
    let (kb, mut rng) = sampled_world(model, graph, seed)?;
    let n = model.rv_count();
    let mut hidden = vec![false; n];
    match scenario {
        Scenario::Missing(f) => {
            let k = ((f * n as f64).round() as usize).clamp(1, n);
            for i in index::sample(&mut rng, n, k) {
                hidden[i] = true;
            }
        }
        Scenario::Class(name) => {
            let id = model
                .parrv_id(name)
                .ok_or_else(|| HarnessError::UnknownClass(name.clone()))?;
            let mut rvs = model.rvs_of(id).peekable();
            match rvs.peek() {
                Some(&rv) if graph.parents_of(rv).map_or(true, |p| p.is_empty()) => {
                    return Err(HarnessError::RootClass(name.clone()))
                }
                _ => {}
            }
            for rv in rvs {
                hidden[rv.index()] = true;
            }
        }
    }
    Ok(reveal(model, &kb, &hidden))
}

fn sampled_world(
    model: &Model,
    graph: &DependencyGraph,
    seed: u64,
) -> Result<(StateKb, SamplerRng), HarnessError> {
    let mut rng = seeded_rng(seed);
    let order = topological_order(graph).map_err(SampleError::from)?;
    let mut kb = StateKb::from_evidence(model, &Evidence::default());
    forward_sample(&mut kb, model, &order, &mut rng)?;
    Ok((kb, rng))
}

fn reveal(model: &Model, kb: &StateKb, hidden: &[bool]) -> Evidence {
    let mut evidence = Evidence::default();
    for rv in model.rv_ids() {
        if !hidden[rv.index()] {
            evidence.insert(rv, kb.state(rv).expect("forward sampled"));
        }
    }
    evidence
}

/// Forward-sampled world with exactly `round(observed · N)` RVs revealed;
/// any fraction in `[0, 1]`.
pub fn observed_fraction_evidence(
    model: &Model,
    graph: &DependencyGraph,
    observed: f64,
    seed: u64,
) -> Result<Evidence, HarnessError> {
    let (kb, mut rng) = sampled_world(model, graph, seed)?;
    let n = model.rv_count();
    let k = ((observed.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut hidden = vec![true; n];
    for i in index::sample(&mut rng, n, k) {
        hidden[i] = false;
    }
    Ok(reveal(model, &kb, &hidden))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub scenario: String,
    pub param: String,
    pub rv_count: usize,
    pub n_samples: usize,
    pub t_spec: f64,
    pub t_sample_spec: f64,
    pub t_sample_orig: f64,
    pub seed: u64,
}

impl BenchReport {
    pub fn speedup(&self) -> f64 {
        self.t_sample_orig / (self.t_spec + self.t_sample_spec)
    }

    pub fn overhead_fraction(&self) -> f64 {
        self.t_spec / (self.t_spec + self.t_sample_spec)
    }

    fn record(&self) -> [String; 10] {
        [
            self.scenario.clone(),
            self.param.clone(),
            self.rv_count.to_string(),
            self.n_samples.to_string(),
            format!("{:.9}", self.t_spec),
            format!("{:.9}", self.t_sample_spec),
            format!("{:.9}", self.t_sample_orig),
            format!("{:.6}", self.speedup()),
            format!("{:.6}", self.overhead_fraction()),
            self.seed.to_string(),
        ]
    }
}

/// One repetition: sample without specialization, specialize, sample with
/// it, and require identical draw streams.
pub fn bench_rep(
    model: &Arc<Model>,
    graph: &DependencyGraph,
    evidence: &Evidence,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64, f64), HarnessError> {
    let config = SamplerConfig {
        n_samples,
        burn_in: 0,
        seed,
    };
    let mut orig = DigestSink::default();
    let run_orig = sample_chain(model.as_ref(), evidence, graph, &config, &[], &mut orig)?;
    let program = specialize(model, evidence);
    let mut spec = DigestSink::default();
    let run_spec = sample_chain(&program, evidence, graph, &config, &[], &mut spec)?;
    if orig != spec {
        return Err(HarnessError::SequenceMismatch {
            seed,
            orig: orig.hash,
            spec: spec.hash,
            orig_draws: orig.draws,
            spec_draws: spec.draws,
        });
    }
    Ok((
        program.t_spec().as_secs_f64(),
        run_spec.t_sample.as_secs_f64(),
        run_orig.t_sample.as_secs_f64(),
    ))
}

/// Where each repetition's evidence comes from.
#[derive(Clone, Debug)]
pub enum EvidenceSource {
    /// Fixed evidence (e.g. read from a file); `label` fills the param column.
    Fixed { evidence: Evidence, label: String },
    /// Fresh scenario evidence per repetition, seeded like the chain.
    Scenario(Scenario),
}

/// `reps` repetitions with seeds `seed, seed+1, ...`.
pub fn run_bench(
    model: &Arc<Model>,
    source: &EvidenceSource,
    n_samples: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchReport>, HarnessError> {
    let graph = build_dependency_graph(model);
    let mut rows = Vec::with_capacity(reps);
    for r in 0..reps as u64 {
        let s = seed.wrapping_add(r);
        let (evidence, scenario, param) = match source {
            EvidenceSource::Fixed { evidence, label } => {
                (evidence.clone(), "evidence".to_owned(), label.clone())
            }
            EvidenceSource::Scenario(sc) => (
                scenario_evidence(model, &graph, sc, s)?,
                sc.kind().to_owned(),
                sc.param(),
            ),
        };
        let (t_spec, t_sample_spec, t_sample_orig) = bench_rep(model, &graph, &evidence, n_samples, s)?;
        rows.push(BenchReport {
            scenario,
            param,
            rv_count: model.rv_count(),
            n_samples,
            t_spec,
            t_sample_spec,
            t_sample_orig,
            seed: s,
        });
    }
    Ok(rows)
}

/// Append rows; the header is written only when the file is new or empty.
pub fn append_csv(path: &Path, rows: &[BenchReport]) -> Result<(), HarnessError> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a bench CSV as string maps keyed by header name.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<(String, String)>>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(
            header
                .iter()
                .cloned()
                .zip(rec.iter().map(str::to_owned))
                .collect(),
        );
    }
    Ok(out)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Monotone trend check over consecutive groups: every step must go the
/// expected way except at most one, and that one by less than the pooled
/// standard deviation of the two groups.
pub fn trend_holds(means: &[f64], sds: &[f64], increasing: bool) -> bool {
    let mut inversions = 0;
    for i in 1..means.len() {
        let step = if increasing {
            means[i] - means[i - 1]
        } else {
            means[i - 1] - means[i]
        };
        if step < 0.0 {
            let pooled = ((sds[i].powi(2) + sds[i - 1].powi(2)) / 2.0).sqrt();
            inversions += 1;
            if -step > pooled || inversions > 1 {
                return false;
            }
        }
    }
    true
}

/// RV ids of one parRV, by name.
pub fn rvs_named(model: &Model, parrv: &str) -> Vec<RvId> {
    model
        .parrv_id(parrv)
        .map(|id| model.rvs_of(id).collect())
        .unwrap_or_default()
}
