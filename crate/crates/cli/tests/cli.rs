use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn cgw(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgw"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CGW_EMBED_URL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn reilly() -> String {
    fixtures().join("reilly.cg.json").display().to_string()
}

#[test]
fn predict_and_eval_reilly() {
    let dir = tempfile::tempdir().unwrap();
    let out = cgw(&["predict", "--threshold", "0.92", &reilly()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out),
        "event_id\ttask\tlabel_a\tlabel_b\ne1\tcg\tJA\tJA\ne2\tcg\tRT\tRT\ne3\tcg\tJA\tJA\n"
    );
    let pred = dir.path().join("exact.pred.tsv");
    std::fs::write(&pred, stdout(&out)).unwrap();
    let out = cgw(
        &["--json", "eval", "--task", "cg", "--gold", &reilly(), "--pred", pred.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["average"]["accuracy"], 100.0);
    assert!(stdout(&out).ends_with('\n'));

    let out = cgw(&["eval", "--task", "bel", "--gold", &reilly(), "--pred", pred.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn embert_on_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let events = "A got to see everybody\nB sleeps late\nA went home\n";
    std::fs::write(dir.path().join("a.events"), events).unwrap();
    std::fs::write(dir.path().join("b.events"), events).unwrap();
    let out = cgw(&["agree", "--metric", "embert", "--provider", "lexical", "a.events", "b.events"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.matches("1.00").count(), 4, "{text}");
    let out = cgw(&["--json", "agree", "--metric", "embert", "a.events", "b.events"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["matrix"], serde_json::json!([[1.0, 1.0], [1.0, 1.0]]));
}

#[test]
fn kappa_over_annotator_directories() {
    let dir = tempfile::tempdir().unwrap();
    for ann in ["ann1", "ann2", "ann3"] {
        std::fs::create_dir(dir.path().join(ann)).unwrap();
        std::fs::copy(fixtures().join("reilly.cg.json"), dir.path().join(ann).join("reilly.cg.json")).unwrap();
    }
    let out = cgw(&["--json", "agree", "--metric", "cohen", "ann1", "ann2", "ann3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["matrix"][0][1], 1.0);
    let out = cgw(&["--json", "agree", "--metric", "fleiss", "ann1", "ann2", "ann3"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["fleiss"], 1.0);
}

#[test]
fn import_validate_stats() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let out = cgw(
        &[
            "import",
            "--transcript",
            f.join("reilly.txt").to_str().unwrap(),
            "--annotations",
            f.join("reilly.cga.tsv").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, std::fs::read(f.join("reilly.cg.json")).unwrap());

    let out = cgw(&["validate", &reilly()], dir.path());
    assert_eq!(out.status.code(), Some(0));

    let broken = dir.path().join("broken.cga.tsv");
    let grid = std::fs::read_to_string(f.join("reilly.cga.tsv")).unwrap().replace("RT e2 JA e3\tRT e2", "JA e2 JA e3\tRT e2");
    std::fs::write(&broken, grid).unwrap();
    let out = cgw(&["validate", broken.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("JA_WITHOUT_MUTUAL_BELIEF"), "{}", stdout(&out));

    let out = cgw(&["--json", "stats", &reilly()], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["cg"]["JA"], 4);
    assert_eq!(v["cg"]["RT"], 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cgw(&["stats", "--bogus", "x"], dir.path()).status.code(), Some(2));
    assert_eq!(cgw(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(cgw(&["predict", "--threshold", "1.5", &reilly()], dir.path()).status.code(), Some(2));
    assert_eq!(cgw(&["predict", "--provider", "remote", &reilly()], dir.path()).status.code(), Some(2));
    assert_eq!(cgw(&["stats", "missing.cg.json"], dir.path()).status.code(), Some(1));
    let pred = dir.path().join("bad.pred.tsv");
    std::fs::write(&pred, "event_id\ttask\tlabel_a\tlabel_b\ne9\tcg\tJA\tJA\n").unwrap();
    let out = cgw(&["eval", "--task", "cg", "--gold", &reilly(), "--pred", pred.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_sets_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cgw.toml"), "threshold = 0.5\n").unwrap();
    // e3 vs e2 share 7 of 8 tokens, so a low threshold turns e3 into IN.
    let out = cgw(&["predict", &reilly()], dir.path());
    assert!(stdout(&out).contains("e3\tcg\tIN\tIN"), "{}", stdout(&out));
    let out = cgw(&["predict", "--threshold", "0.92", &reilly()], dir.path());
    assert!(stdout(&out).contains("e3\tcg\tJA\tJA"));
    std::fs::write(dir.path().join("cgw.toml"), "nonsense = 1\n").unwrap();
    assert_eq!(cgw(&["predict", &reilly()], dir.path()).status.code(), Some(1));
}

#[test]
fn sweep_report_and_deterministic_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["predict", "--sweep", "0,0.2,0.4,0.6,0.8,0.9,0.92,0.95,1", &reilly()];
    let first = cgw(&args, dir.path());
    assert_eq!(first.status.code(), Some(0));
    let text = stdout(&first);
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().next().unwrap().contains("macro F1"));
    assert_eq!(cgw(&args, dir.path()).stdout, first.stdout);

    let out = cgw(&["predict", "-o", "preds", &reilly(), &reilly()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("preds/reilly.pred.tsv").exists());
}
