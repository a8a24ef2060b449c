//! End-to-end pipeline checks driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stsg")
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stsg-smoke-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn criterion_10_cli_pipeline() {
    let dir = workdir("pipeline");
    let treebank = "\
(S (NP (D the) (N dog)) (V barks))
(S (NP (D the) (N cat)) (V sleeps))
(S (NP (D a) (N dog)) (V sleeps))
";
    fs::write(dir.join("tb.txt"), treebank).unwrap();
    fs::write(
        dir.join("sentences.txt"),
        "the dog barks\nthe cat sleeps\na dog sleeps\nthe dog quacks\n",
    )
    .unwrap();
    fs::write(
        dir.join("gold.txt"),
        "\
(S (NP (D the) (N dog)) (V barks))
(S (NP (D the) (N cat)) (V sleeps))
(S (NP (D a) (N dog)) (V sleeps))
",
    )
    .unwrap();

    // Project: deterministic grammar file.
    let first = stdout(&run(
        &["project", "tb.txt", "-d", "4", "-n", "2", "-l", "7", "-L", "3", "-o", "g.stsg"],
        &dir,
    ));
    let grammar = fs::read_to_string(dir.join("g.stsg")).unwrap();
    assert!(grammar.starts_with("STSG S\n"));
    let again = stdout(&run(&["project", "tb.txt", "-o", "g2.stsg"], &dir));
    assert_eq!(fs::read_to_string(dir.join("g2.stsg")).unwrap(), grammar);
    assert_eq!(first, again);

    // Parse: the unseen word must come back as NOPARSE, the rest as result
    // lines.
    stdout(&run(
        &["parse", "g.stsg", "sentences.txt", "--mode", "mpd", "-o", "out.txt", "--jobs", "2"],
        &dir,
    ));
    let parsed = fs::read_to_string(dir.join("out.txt")).unwrap();
    let lines: Vec<&str> = parsed.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[..3].iter().all(|l| l.split('\t').count() == 3), "{parsed}");
    assert_eq!(lines[3], "NOPARSE");

    // Eval against gold on the training sentences: exact match 100%.
    fs::write(
        dir.join("test.txt"),
        lines[..3].join("\n") + "\n",
    )
    .unwrap();
    let report = stdout(&run(&["eval", "gold.txt", "test.txt", "--key-values"], &dir));
    assert!(report.contains("recognized=1\n"), "{report}");
    assert!(report.contains("exact_match=1\n"), "{report}");
    assert!(report.contains("labeled_bracket_recall=1\n"), "{report}");
    fs::remove_dir_all(&dir).unwrap();
    println!("criterion 10 (CLI pipeline): PASS");
}

#[test]
fn reduce3sat_emits_exact_manifest() {
    let dir = workdir("reduce");
    fs::write(dir.join("f.cnf"), "p cnf 3 2\n1 -2 3 0\n-1 2 -3 0\n").unwrap();
    let out = stdout(&run(
        &["reduce3sat", "f.cnf", "--kind", "mppwg", "-o", "inst"],
        &dir,
    ));
    assert!(out.starts_with("THETA 13/21 Q "), "{out}");
    assert!(out.trim_end().ends_with("KIND MPPWG"), "{out}");
    let grammar = fs::read_to_string(dir.join("inst/instance.stsg")).unwrap();
    assert_eq!(grammar.lines().count(), 1 + 25);
    let wg = fs::read_to_string(dir.join("inst/instance.wg")).unwrap();
    assert!(wg.starts_with("WG 7\n"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_reports_agreement() {
    let dir = workdir("verify");
    fs::write(dir.join("tb.txt"), "(S (A a) (B b))\n(S (A a) (B b) (B b))\n").unwrap();
    stdout(&run(&["project", "tb.txt", "-o", "g.stsg"], &dir));
    let out = run(&["verify", "g.stsg", "--seed", "7"], &dir);
    let text = stdout(&out);
    assert!(text.lines().all(|l| l.starts_with("OK\t")), "{text}");
    assert!(out.status.success());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn specialize_and_integrated_parse_roundtrip() {
    let dir = workdir("sdop");
    let mut tb = String::new();
    for _ in 0..10 {
        tb.push_str("(S (X (A a) (B b)) (C c))\n");
        tb.push_str("(S (A a) (X (C c) (B b)))\n");
    }
    fs::write(dir.join("tb.txt"), tb).unwrap();
    stdout(&run(
        &[
            "specialize",
            "tb.txt",
            "--delta",
            "0.95",
            "--phi",
            "5",
            "--marked-out",
            "marked.txt",
            "--tsg-out",
            "spec.stsg",
        ],
        &dir,
    ));
    assert!(fs::read_to_string(dir.join("marked.txt")).unwrap().contains('@'));
    stdout(&run(&["sdop", "marked.txt", "-o", "sdop.stsg"], &dir));
    assert!(fs::read_to_string(dir.join("sdop.stsg")).unwrap().starts_with("STSG "));
    stdout(&run(&["project", "tb.txt", "-o", "full.stsg"], &dir));
    fs::write(dir.join("in.txt"), "a b c\nc b c\nb b b\n").unwrap();
    stdout(&run(
        &["isdop-parse", "spec.stsg", "full.stsg", "in.txt", "-o", "out.txt"],
        &dir,
    ));
    let out = fs::read_to_string(dir.join("out.txt")).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("sdop\t"), "{out}");
    assert!(lines[1].starts_with("dop\t"), "{out}");
    assert_eq!(lines[2], "NOPARSE");
    fs::remove_dir_all(&dir).unwrap();
}
