//! Forward initialization, Gibbs sampling and the exact enumeration oracle.
//!
//! Randomness comes from a ChaCha8 stream seeded with a `u64`. Every resample
//! consumes exactly one uniform draw, so two programs that answer every
//! CPD-query identically produce identical draw sequences.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dependency::{topological_order, DependencyError, DependencyGraph};
use crate::eval::{CpdProgram, EvalError};
use crate::model::{CategoricalDistribution, Model, RvId, Sym};
use crate::state::{Evidence, StateKb};

pub type SamplerRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SamplerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SampleError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dependency(#[from] DependencyError),
    #[error("deterministic conflict: every state of RV #{} has zero weight", .0 .0)]
    DeterministicConflict(RvId),
    #[error("state space of {0:e} joint assignments exceeds the enumeration limit")]
    StateSpaceTooLarge(f64),
    #[error("evidence has probability zero")]
    ImpossibleEvidence,
    #[error("invalid sampler configuration: {0}")]
    Config(String),
}

pub const ENUMERATION_LIMIT: f64 = 1e7;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_samples: 10_000,
            burn_in: 0,
            seed: 0,
        }
    }
}

/// Per-state tally of one target RV; counts follow range order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarginalEstimate {
    pub rv: RvId,
    pub counts: Vec<u64>,
    pub n_samples: u64,
}

impl MarginalEstimate {
    pub fn estimate(&self, state_index: usize) -> f64 {
        self.counts[state_index] as f64 / self.n_samples as f64
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.estimate(i)).collect()
    }
}

/// Observer of every `(rv, state)` resample in order.
pub trait DrawSink {
    fn record(&mut self, rv: RvId, state: Sym);
}

impl DrawSink for () {
    #[inline]
    fn record(&mut self, _: RvId, _: Sym) {}
}

impl DrawSink for Vec<(RvId, Sym)> {
    fn record(&mut self, rv: RvId, state: Sym) {
        self.push((rv, state));
    }
}

/// Order-sensitive FNV-1a digest of the draw stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DigestSink {
    pub hash: u64,
    pub draws: u64,
}

impl Default for DigestSink {
    fn default() -> Self {
        DigestSink {
            hash: 0xcbf2_9ce4_8422_2325,
            draws: 0,
        }
    }
}

impl DrawSink for DigestSink {
    #[inline]
    fn record(&mut self, rv: RvId, state: Sym) {
        for word in [rv.0, state.index() as u32] {
            for b in word.to_le_bytes() {
                self.hash ^= b as u64;
                self.hash = self.hash.wrapping_mul(0x100_0000_01b3);
            }
        }
        self.draws += 1;
    }
}

/// Inverse-CDF lookup of `u ∈ [0,1)`; returns a state index.
pub fn draw_with_uniform(dist: &CategoricalDistribution, u: f64) -> usize {
    index_for(dist.probs(), u)
}

#[inline]
fn index_for(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        cum += p;
        if p > 0.0 {
            last_positive = i;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

pub fn draw_from(dist: &CategoricalDistribution, rng: &mut impl Rng) -> Sym {
    let u: f64 = rng.random();
    dist.entries[draw_with_uniform(dist, u)].0
}

/// Set every unobserved RV, in `order`, to a draw from its CPD.
pub fn forward_sample<P: CpdProgram>(
    kb: &mut StateKb,
    program: &P,
    order: &[RvId],
    rng: &mut impl Rng,
) -> Result<(), SampleError> {
    for &rv in order {
        if kb.observed(rv) {
            continue;
        }
        let state = draw_from(program.apply_cpd(kb, rv)?, rng);
        kb.assign(rv, state);
    }
    Ok(())
}

/// Gibbs full conditional of `u`: its own CPD times the CPDs of its children
/// evaluated at each candidate state, normalized. `kb` is left as it was.
pub fn gibbs_psample<P: CpdProgram>(
    kb: &mut StateKb,
    program: &P,
    graph: &DependencyGraph,
    u: RvId,
) -> Result<CategoricalDistribution, SampleError> {
    let mut w = Vec::new();
    full_conditional(kb, program, graph, u, &mut w)?;
    let range = program.model().rv_range(u);
    Ok(CategoricalDistribution::new(
        range.iter().copied().zip(w).collect(),
    ))
}

fn full_conditional<P: CpdProgram>(
    kb: &mut StateKb,
    program: &P,
    graph: &DependencyGraph,
    u: RvId,
    w: &mut Vec<f64>,
) -> Result<(), SampleError> {
    let model = program.model();
    let range = model.rv_range(u);
    let entry = kb.state(u);
    let prior = program.apply_cpd(kb, u)?;
    w.clear();
    for (i, &s) in range.iter().enumerate() {
        kb.assign(u, s);
        let mut x = prior.prob(i);
        for &c in graph.children(u) {
            let d = program.apply_cpd(kb, c)?;
            x *= d.prob(state_index(model, kb, c)?);
        }
        w.push(x);
    }
    if let Some(s) = entry {
        kb.assign(u, s);
    }
    let total: f64 = w.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(SampleError::DeterministicConflict(u));
    }
    w.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

#[inline]
fn state_index(model: &Model, kb: &StateKb, rv: RvId) -> Result<usize, EvalError> {
    let s = kb.state(rv).ok_or(EvalError::Uninitialized(rv))?;
    Ok(model
        .state_index(model.rv_parrv(rv), s)
        .expect("state in range"))
}

#[derive(Clone, Debug)]
pub struct GibbsRun {
    pub estimates: Vec<MarginalEstimate>,
    /// Wall time of the sweeps (burn-in included).
    pub t_sample: Duration,
}

/// `burn_in + n_samples` sweeps over the unobserved RVs in canonical order;
/// targets are tallied after burn-in, once per sweep.
pub fn run_gibbs<P: CpdProgram, S: DrawSink>(
    kb: &mut StateKb,
    program: &P,
    graph: &DependencyGraph,
    config: &SamplerConfig,
    targets: &[RvId],
    rng: &mut impl Rng,
    sink: &mut S,
) -> Result<GibbsRun, SampleError> {
    if config.n_samples == 0 {
        return Err(SampleError::Config("n_samples must be at least 1".into()));
    }
    let model = program.model();
    let free: Vec<RvId> = kb.unobserved().collect();
    let mut estimates: Vec<MarginalEstimate> = targets
        .iter()
        .map(|&rv| MarginalEstimate {
            rv,
            counts: vec![0; model.rv_range(rv).len()],
            n_samples: 0,
        })
        .collect();
    let mut w = Vec::new();
    let start = Instant::now();
    for sweep in 0..config.burn_in + config.n_samples {
        for &u in &free {
            full_conditional(kb, program, graph, u, &mut w)?;
            let r: f64 = rng.random();
            let state = model.rv_range(u)[index_for(w.iter().copied(), r)];
            kb.assign(u, state);
            sink.record(u, state);
        }
        if sweep >= config.burn_in {
            for e in &mut estimates {
                e.counts[state_index(model, kb, e.rv)?] += 1;
                e.n_samples += 1;
            }
        }
    }
    Ok(GibbsRun {
        estimates,
        t_sample: start.elapsed(),
    })
}

/// One complete chain: evidence, forward initialization from a fresh RNG
/// seeded with `config.seed`, then Gibbs.
pub fn sample_chain<P: CpdProgram, S: DrawSink>(
    program: &P,
    evidence: &Evidence,
    graph: &DependencyGraph,
    config: &SamplerConfig,
    targets: &[RvId],
    sink: &mut S,
) -> Result<GibbsRun, SampleError> {
    let model = program.model();
    let order = topological_order(graph)?;
    let mut kb = StateKb::from_evidence(model, evidence);
    let mut rng = seeded_rng(config.seed);
    forward_sample(&mut kb, program, &order, &mut rng)?;
    run_gibbs(&mut kb, program, graph, config, targets, &mut rng, sink)
}

/// Exact posterior marginals by enumerating every joint state of the
/// unobserved RVs.
pub fn exact_marginals(
    model: &Model,
    evidence: &Evidence,
    targets: &[RvId],
) -> Result<Vec<Vec<f64>>, SampleError> {
    let mut kb = StateKb::from_evidence(model, evidence);
    let free: Vec<RvId> = kb.unobserved().collect();
    let size: f64 = free
        .iter()
        .map(|&rv| model.rv_range(rv).len() as f64)
        .product();
    if size > ENUMERATION_LIMIT {
        return Err(SampleError::StateSpaceTooLarge(size));
    }
    let mut digits = vec![0usize; free.len()];
    for &rv in &free {
        kb.assign(rv, model.rv_range(rv)[0]);
    }
    let mut acc: Vec<Vec<f64>> = targets
        .iter()
        .map(|&t| vec![0.0; model.rv_range(t).len()])
        .collect();
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for rv in model.rv_ids() {
            let d = model.apply_cpd(&kb, rv)?;
            weight *= d.prob(state_index(model, &kb, rv)?);
            if weight == 0.0 {
                break;
            }
        }
        if weight > 0.0 {
            total += weight;
            for (a, &t) in acc.iter_mut().zip(targets) {
                a[state_index(model, &kb, t)?] += weight;
            }
        }
        // odometer, last RV fastest
        let mut k = free.len();
        loop {
            if k == 0 {
                if total.is_nan() || total <= 0.0 {
                    return Err(SampleError::ImpossibleEvidence);
                }
                for a in &mut acc {
                    a.iter_mut().for_each(|x| *x /= total);
                }
                return Ok(acc);
            }
            k -= 1;
            let range = model.rv_range(free[k]);
            digits[k] += 1;
            if digits[k] < range.len() {
                kb.assign(free[k], range[digits[k]]);
                break;
            }
            digits[k] = 0;
            kb.assign(free[k], range[0]);
        }
    }
}
