use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vitriever::datasets;
use vitriever::normalize::FittedNormalizer;
use vitriever::DescriptorSet;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vitriever"));
    cmd.env("VITRIEVER_THREADS", "1");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Three UKBench-style groups of four, tightly clustered.
fn ukbench_text() -> String {
    let mut text = String::new();
    for g in 0..3 {
        for m in 0..4 {
            let i = g * 4 + m;
            let vals: Vec<String> = (0..6)
                .map(|d| format!("{}", 1.0 + ((g * 7 + d * 3) % 5) as f32 + 0.001 * m as f32))
                .collect();
            text.push_str(&format!("ukbench{i:05}.jpg {}\n", vals.join(" ")));
        }
    }
    text
}

fn ingest(dir: &Path) -> PathBuf {
    let txt = dir.join("ukb.txt");
    let store = dir.join("ukb.vitd");
    fs::write(&txt, ukbench_text()).unwrap();
    let out = ok(&run(&["ingest", p(&txt), "--out", p(&store)]));
    assert!(out.contains("12 descriptors, dim 6"), "{out}");
    store
}

#[test]
fn ingest_text_and_reingest_binary() {
    let dir = tempfile::tempdir().unwrap();
    let store = ingest(dir.path());
    let set = DescriptorSet::open(&store).unwrap();
    assert_eq!((set.len(), set.dim()), (12, 6));
    assert_eq!(&*set.ids()[11], "ukbench00011.jpg");

    let again = dir.path().join("again.vitd");
    ok(&run(&["ingest", p(&store), "--out", p(&again)]));
    assert_eq!(fs::read(&store).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn ingest_rejects_duplicate_ids() {
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("dup.txt");
    fs::write(&txt, "a 1 2\nb 3 4\na 5 6\n").unwrap();
    let out = run(&["ingest", p(&txt), "--out", p(&dir.path().join("x.vitd"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn evaluate_ukbench_reports_ns() {
    let dir = tempfile::tempdir().unwrap();
    let store = ingest(dir.path());
    let report = dir.path().join("report.txt");
    let rankings = dir.path().join("rankings.txt");
    let stdout = ok(&run(&[
        "evaluate",
        "--index",
        p(&store),
        "--layout",
        "ukbench",
        "--metric",
        "cosine",
        "--norm",
        "robust",
        "--out",
        p(&report),
        "--rankings",
        p(&rankings),
    ]));
    assert!(stdout.contains("4.000"), "{stdout}");
    let machine = fs::read_to_string(&report).unwrap();
    assert_eq!(machine.lines().count(), 13);
    assert_eq!(machine.lines().last().unwrap(), "AGGREGATE 4");
    // Default N-S depth is 4 entries per query.
    assert_eq!(fs::read_to_string(&rankings).unwrap().lines().count(), 12 * 4);
}

#[test]
fn evaluate_with_json_truth_and_separate_queries() {
    let dir = tempfile::tempdir().unwrap();
    let store = ingest(dir.path());
    let set = DescriptorSet::open(&store).unwrap();
    let queries = dir.path().join("queries.vitd");
    let sub = set.select(&[0, 4]);
    vitriever::write_store(sub.matrix(), sub.ids(), &queries).unwrap();

    let gt = datasets::parse_ukbench(set.ids()).unwrap();
    let mut gt = gt;
    gt.queries
        .retain(|q| q.query == "ukbench00000.jpg" || q.query == "ukbench00004.jpg");
    let truth = dir.path().join("truth.json");
    fs::write(&truth, datasets::to_generic_json(&gt)).unwrap();

    let report = dir.path().join("report.txt");
    ok(&run(&[
        "evaluate",
        "--index",
        p(&store),
        "--queries",
        p(&queries),
        "--layout",
        "json",
        "--gt",
        p(&truth),
        "--out",
        p(&report),
    ]));
    let machine = fs::read_to_string(&report).unwrap();
    assert_eq!(machine.lines().last().unwrap(), "AGGREGATE 4");
}

#[test]
fn grid_prints_full_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let store = ingest(dir.path());
    let csv = dir.path().join("grid.csv");
    let out = bin()
        .args([
            "grid",
            "--index",
            p(&store),
            "--layout",
            "ukbench",
            "--label",
            "UKB",
            "--csv",
            p(&csv),
        ])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with("UKB"), "{stdout}");
    for (line, label) in lines[1..6]
        .iter()
        .zip(["L2 Axis=1", "L2 Axis=0", "L1 Axis=1", "L1 Axis=0", "ROBUST"])
    {
        assert!(line.starts_with(label), "{stdout}");
    }
    let csv = fs::read_to_string(&csv).unwrap();
    assert_eq!(csv.lines().count(), 36);
    assert_eq!(
        csv.lines().next().unwrap(),
        "label,normalization,metric,protocol,score,best,error"
    );
    assert_eq!(
        csv.lines().skip(1).filter(|l| l.split(',').nth(5) == Some("1")).count(),
        1
    );
}

#[test]
fn normalize_saves_and_reuses_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let store = ingest(dir.path());
    let fitted = dir.path().join("n1.vitd");
    let reused = dir.path().join("n2.vitd");
    let sidecar = dir.path().join("robust.vitn");
    ok(&run(&[
        "normalize",
        p(&store),
        "--norm",
        "robust",
        "--robust-quantiles",
        "0.1,0.9",
        "--save-normalizer",
        p(&sidecar),
        "--out",
        p(&fitted),
    ]));
    ok(&run(&[
        "normalize",
        p(&store),
        "--normalizer",
        p(&sidecar),
        "--out",
        p(&reused),
    ]));
    assert_eq!(fs::read(&fitted).unwrap(), fs::read(&reused).unwrap());
    let loaded = FittedNormalizer::load(&sidecar).unwrap();
    assert_eq!(loaded.spec().quantiles(), (0.1, 0.9));
}

#[test]
fn search_writes_trec_lines() {
    let dir = tempfile::tempdir().unwrap();
    let store = ingest(dir.path());
    let stdout = ok(&run(&[
        "search",
        "--index",
        p(&store),
        "--k",
        "3",
        "--exclude-self",
        "--metric",
        "euclidean",
    ]));
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 36);
    assert!(lines[0].starts_with("ukbench00000.jpg 1 ukbench0000"));
    assert!(!lines[0].starts_with("ukbench00000.jpg 1 ukbench00000.jpg"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = run(&["evaluate", "--index", "/nonexistent.vitd", "--layout", "ukbench"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent.vitd"));

    let out = run(&["search", "--index", "x", "--k", "0"]);
    assert!(!out.status.success());
    let out = run(&["search", "--index", "x", "--metric", "hamming"]);
    assert!(!out.status.success());
}
