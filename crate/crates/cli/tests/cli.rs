use std::path::PathBuf;
use std::process::{Command, Output};

fn pbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbn"))
        .args(args)
        .output()
        .expect("run pbn")
}

fn model(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "models", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_example() {
    let o = pbn(&["validate", &model("example1.pbn"), "--graph"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("acyclic"));
    assert!(out.contains("iq(s1) -> grade(s1,c1)"), "{out}");
}

#[test]
fn validate_rejects_mutants_with_exit_1() {
    for (file, needle) in [
        ("invalid_missing_default.pbn", "not total"),
        ("invalid_unnormalized.pbn", "sums to 1.1"),
        ("invalid_cycle.pbn", "dependency cycle"),
        ("invalid_unknown_constant.pbn", "unknown constant `s9`"),
    ] {
        let o = pbn(&["validate", &model(file)]);
        assert_eq!(o.status.code(), Some(1), "{file}");
        assert!(stderr(&o).contains(needle), "{file}: {}", stderr(&o));
    }
}

#[test]
fn missing_file_is_runtime_error() {
    let o = pbn(&["validate", "/nonexistent/model.pbn"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sample_rain_wet_matches_exact_posterior() {
    let o = pbn(&[
        "sample",
        &model("rain_wet.pbn"),
        &model("rain_wet.ev"),
        "--target",
        "rain",
        "-n",
        "20000",
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let p: f64 = out
        .lines()
        .find(|l| l.starts_with("rain\ty\t"))
        .and_then(|l| l.rsplit('\t').next())
        .unwrap()
        .parse()
        .unwrap();
    // 0.27 / 0.41
    assert!((p - 0.6585).abs() < 0.02, "{p}");
    assert!(stderr(&o).contains("t_sample"));
}

#[test]
fn specialized_sampling_prints_identical_table() {
    let args = |spec: bool| {
        let mut a = vec![
            "sample".to_owned(),
            model("example1.pbn"),
            model("example1.ev"),
            "-t".into(),
            "graduates(s1)".into(),
            "-t".into(),
            "level(c3)".into(),
            "-n".into(),
            "2000".into(),
            "--burn-in".into(),
            "100".into(),
            "--seed".into(),
            "11".into(),
        ];
        if spec {
            a.push("--specialize".into());
        }
        a
    };
    let run = |spec: bool| {
        let a = args(spec);
        pbn(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let (plain, spec) = (run(false), run(true));
    assert_eq!(plain.status.code(), Some(0), "{}", stderr(&plain));
    assert_eq!(spec.status.code(), Some(0), "{}", stderr(&spec));
    assert_eq!(plain.stdout, spec.stdout);
    assert!(stderr(&spec).contains("t_spec"));
}

#[test]
fn unknown_target_is_runtime_error() {
    let o = pbn(&[
        "sample",
        &model("rain_wet.pbn"),
        &model("rain_wet.ev"),
        "--target",
        "snow",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown target RV"));
}

#[test]
fn bad_evidence_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("bad.ev");
    std::fs::write(&ev, "rain=maybe.\n").unwrap();
    let o = pbn(&["sample", &model("rain_wet.pbn"), ev.to_str().unwrap(), "-t", "wet"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn specialize_writes_program() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex1.spec");
    let o = pbn(&[
        "specialize",
        &model("example1.pbn"),
        &model("example1.ev"),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("t_spec:"));
    assert!(text.contains("clauses:"));
    assert!(!std::fs::read_to_string(&out).unwrap().is_empty());
}

#[test]
fn gen_then_validate_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("uni");
    let o = pbn(&[
        "gen",
        "--students",
        "3",
        "--courses",
        "4",
        "--scenario",
        "missing:0.3",
        "--seed",
        "5",
        "-o",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = dir.path().join("uni.pbn");
    let ev = dir.path().join("uni.ev");
    assert_eq!(pbn(&["validate", m.to_str().unwrap()]).status.code(), Some(0));

    let csv = dir.path().join("bench.csv");
    for source in [ev.to_str().unwrap(), "class:graduates"] {
        let o = pbn(&[
            "bench",
            m.to_str().unwrap(),
            source,
            "-n",
            "50",
            "--reps",
            "2",
            "-o",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,param,rv_count,n_samples,t_spec,t_sample_spec,t_sample_orig,speedup,overhead_fraction,seed"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("classification,graduates,"), "{}", lines[3]);
}

#[test]
fn bench_rejects_root_class() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let o = pbn(&[
        "bench",
        &model("example1.pbn"),
        "class:iq",
        "-n",
        "10",
        "--reps",
        "1",
        "-o",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
