//! `pbn`: validate, specialize, sample, generate and benchmark decision-list
//! Bayesian network programs.
//!
//! Exit codes: 0 ok, 1 invalid input model or evidence, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use pbn_core::dependency::{build_dependency_graph, validate_with_graph};
use pbn_core::harness::{
    append_csv, run_bench, scenario_evidence, university_model, EvidenceSource, Scenario,
};
use pbn_core::model::{Model, RvId};
use pbn_core::parser::{
    parse_evidence, parse_ground_rv, parse_model_file, parse_model_unchecked, serialize_specialized,
};
use pbn_core::sampler::{sample_chain, GibbsRun, SamplerConfig};
use pbn_core::specialize::specialize;
use pbn_core::state::Evidence;

#[derive(Parser)]
#[command(name = "pbn", version, about = "Decision-list Bayesian networks: Gibbs sampling with evidence-driven specialization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model: declarations, totality, normalization, safety, acyclicity.
    Validate {
        model: PathBuf,
        /// Also print the ground dependency graph as `parent -> child` lines.
        #[arg(long)]
        graph: bool,
    },
    /// Specialize every CPD-query with respect to the evidence.
    Specialize {
        model: PathBuf,
        evidence: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Estimate marginals with Gibbs sampling.
    Sample {
        model: PathBuf,
        evidence: PathBuf,
        /// Target RV, e.g. `grade(s1,c1)`; repeatable.
        #[arg(short, long = "target", required = true)]
        targets: Vec<String>,
        #[arg(short = 'n', long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample with the specialized program.
        #[arg(long)]
        specialize: bool,
    },
    /// Generate a synthetic university model and scenario evidence.
    Gen {
        #[arg(long)]
        students: usize,
        #[arg(long)]
        courses: usize,
        /// `missing:<f>` or `class:<parrv>`.
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Writes `<prefix>.pbn` and `<prefix>.ev`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Time sampling with and without specialization; appends CSV rows.
    Bench {
        model: PathBuf,
        /// Evidence file, or a scenario (`missing:<f>`, `class:<parrv>`)
        /// drawn afresh for each repetition.
        evidence: String,
        #[arg(short = 'n', long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

enum Failure {
    Invalid(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Runtime)
}

/// Parse, validate and check acyclicity; any problem is a validation failure.
fn load_model(path: &Path) -> Result<Arc<Model>, Failure> {
    let text = read(path)?;
    let model = parse_model_file(&text, &path.display().to_string())
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    let (report, _) = validate_with_graph(&model);
    if !report.is_valid() {
        return Err(Failure::Invalid(format!("{}: {report}", path.display())));
    }
    Ok(Arc::new(model))
}

fn load_evidence(path: &Path, model: &Model) -> Result<Evidence, Failure> {
    let text = read(path)?;
    parse_evidence(&text, model).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn cmd_validate(path: &Path, graph: bool) -> CmdResult {
    let text = read(path)?;
    let model = parse_model_unchecked(&text).map_err(|e| Failure::Invalid(format!("{}:{e}", path.display())))?;
    let (report, g) = validate_with_graph(&model);
    if !report.is_valid() {
        return Err(Failure::Invalid(format!("{}: {report}", path.display())));
    }
    let g = g.expect("valid models have a graph");
    println!(
        "{}: ok ({} parRVs, {} ground RVs, {} dependency edges, acyclic)",
        path.display(),
        model.parrvs.len(),
        model.rv_count(),
        g.edge_count()
    );
    if graph {
        print!("{}", g.dump(&model));
    }
    Ok(())
}

fn cmd_specialize(model: &Path, evidence: &Path, output: &Path) -> CmdResult {
    let model = load_model(model)?;
    let evidence = load_evidence(evidence, &model)?;
    let program = specialize(&model, &evidence);
    fs::write(output, serialize_specialized(&program))
        .with_context(|| format!("writing {}", output.display()))?;
    let before: usize = model
        .rv_ids()
        .map(|rv| model.decision_list(model.rv_parrv(rv)).clauses.len())
        .sum();
    let after: usize = model.rv_ids().map(|rv| program.clause_count(rv)).sum();
    println!("t_spec: {:.6}s", program.t_spec().as_secs_f64());
    println!(
        "queries: {} ({} specialized, {} unchanged)",
        model.rv_count(),
        program.specialized_count(),
        model.rv_count() - program.specialized_count()
    );
    println!("clauses: {before} before, {after} after");
    println!("wrote {}", output.display());
    Ok(())
}

fn print_estimates(model: &Model, run: &GibbsRun) {
    println!("rv\tstate\testimate");
    for e in &run.estimates {
        let name = model.display_rv(e.rv);
        for (i, &s) in model.rv_range(e.rv).iter().enumerate() {
            println!("{name}\t{}\t{:.6}", model.name(s), e.estimate(i));
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    model: &Path,
    evidence: &Path,
    targets: &[String],
    samples: usize,
    burn_in: usize,
    seed: u64,
    with_spec: bool,
) -> CmdResult {
    let model = load_model(model)?;
    let evidence = load_evidence(evidence, &model)?;
    let targets: Vec<RvId> = targets
        .iter()
        .map(|t| parse_ground_rv(t, &model).map_err(|e| anyhow!("unknown target RV `{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    let graph = build_dependency_graph(&model);
    let config = SamplerConfig {
        n_samples: samples,
        burn_in,
        seed,
    };
    let run = if with_spec {
        let program = specialize(&model, &evidence);
        eprintln!("t_spec: {:.6}s", program.t_spec().as_secs_f64());
        sample_chain(&program, &evidence, &graph, &config, &targets, &mut ())
    } else {
        sample_chain(model.as_ref(), &evidence, &graph, &config, &targets, &mut ())
    }
    .map_err(anyhow::Error::from)?;
    eprintln!("t_sample: {:.6}s", run.t_sample.as_secs_f64());
    print_estimates(&model, &run);
    Ok(())
}

fn cmd_gen(students: usize, courses: usize, scenario: &Scenario, seed: u64, output: &Path) -> CmdResult {
    let text = university_model(students, courses, seed).map_err(anyhow::Error::from)?;
    let model = parse_model_unchecked(&text).map_err(|e| anyhow!("generated model: {e}"))?;
    let graph = build_dependency_graph(&model);
    let evidence = scenario_evidence(&model, &graph, scenario, seed).map_err(anyhow::Error::from)?;
    let model_path = output.with_extension("pbn");
    let ev_path = output.with_extension("ev");
    fs::write(&model_path, &text).with_context(|| format!("writing {}", model_path.display()))?;
    fs::write(&ev_path, evidence.to_text(&model))
        .with_context(|| format!("writing {}", ev_path.display()))?;
    println!(
        "wrote {} ({} RVs) and {} ({} observed, {})",
        model_path.display(),
        model.rv_count(),
        ev_path.display(),
        evidence.len(),
        scenario
    );
    Ok(())
}

fn cmd_bench(model: &Path, evidence: &str, samples: usize, reps: usize, seed: u64, output: &Path) -> CmdResult {
    let model = load_model(model)?;
    let source = match evidence.parse::<Scenario>() {
        Ok(sc) => EvidenceSource::Scenario(sc),
        Err(_) if Path::new(evidence).exists() => {
            let path = Path::new(evidence);
            EvidenceSource::Fixed {
                evidence: load_evidence(path, &model)?,
                label: path
                    .file_name()
                    .map_or_else(|| evidence.to_owned(), |f| f.to_string_lossy().into_owned()),
            }
        }
        Err(e) => {
            return Err(Failure::Runtime(anyhow!(
                "`{evidence}` is neither an evidence file nor a scenario ({e})"
            )))
        }
    };
    let rows = run_bench(&model, &source, samples, reps, seed).map_err(anyhow::Error::from)?;
    append_csv(output, &rows).map_err(anyhow::Error::from)?;
    for r in &rows {
        println!(
            "seed {}: t_spec {:.4}s, t_sample_spec {:.4}s, t_sample_orig {:.4}s, speedup {:.2}x, overhead {:.2}%",
            r.seed,
            r.t_spec,
            r.t_sample_spec,
            r.t_sample_orig,
            r.speedup(),
            100.0 * r.overhead_fraction()
        );
    }
    println!("appended {} rows to {}", rows.len(), output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { model, graph } => cmd_validate(model, *graph),
        Command::Specialize {
            model,
            evidence,
            output,
        } => cmd_specialize(model, evidence, output),
        Command::Sample {
            model,
            evidence,
            targets,
            samples,
            burn_in,
            seed,
            specialize,
        } => cmd_sample(model, evidence, targets, *samples, *burn_in, *seed, *specialize),
        Command::Gen {
            students,
            courses,
            scenario,
            seed,
            output,
        } => cmd_gen(*students, *courses, scenario, *seed, output),
        Command::Bench {
            model,
            evidence,
            samples,
            reps,
            seed,
            output,
        } => cmd_bench(model, evidence, *samples, *reps, *seed, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("invalid: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
