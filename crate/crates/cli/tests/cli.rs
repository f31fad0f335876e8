use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sktkit::backend::stub::StubServer;
use tempfile::TempDir;

const EXAMPLE: &str = "# sent_id = 1\n\
# text = yuvorhi mātāditiḥ\n\
1\tyuvorhi\tyuṣmad\tPRON\t_\tCase=Gen|Number=Dual\t4\tnmod\t_\tUnsandhied=yuvoḥ\n\
2\t_\thi\tPART\t_\t_\t4\tdiscourse\t_\tUnsandhied=hi\n\
3\tmātāditiḥ\tmātṛ\tNOUN\t_\tCase=Nom|Gender=Fem|Number=Sing\t4\tappos\t_\tUnsandhied=mātā\n\
4\t_\taditi\tPROPN\t_\tCase=Nom|Gender=Fem|Number=Sing\t0\troot\t_\tUnsandhied=aditiḥ\n\n";

fn sktkit(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sktkit"));
    c.args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("SKTKIT_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(args: &[&str]) -> Output {
    sktkit(args).output().expect("spawn sktkit")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    example: PathBuf,
    corpus: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let example = dir.path().join("example.conllu");
    fs::write(&example, EXAMPLE).unwrap();
    let corpus = dir.path().join("corpus.conllu");
    ok(&["gen-corpus", "--texts", "6", "--min-sentences", "20", "--max-sentences", "40", "--seed", "3", "-o", p(&corpus)]);
    Fixture { dir, example, corpus }
}

#[test]
fn sandhi_synth_example() {
    assert_eq!(ok(&["sandhi", "synth", "yuvoḥ", "hi"]), "yuvorhi\n");
    assert_eq!(ok(&["sandhi", "synth", "mātā", "aditiḥ"]), "mātāditiḥ\n");
    assert_eq!(ok(&["sandhi", "validate", "--text", "yuvorhi", "yuvoḥ", "hi"]), "ok\n");
    assert_eq!(code(&["sandhi", "validate", "--text", "yuvorhi", "yuvaḥ", "hi"]), 2);
    assert!(ok(&["sandhi", "analyze", "yuvorhi", "--position", "4"]).lines().any(|l| l.starts_with("4\tyuvoḥ\thi\t")));
}

#[test]
fn segmentation_sample_for_the_example() {
    let f = fixture();
    let out = ok(&["make-samples", "-c", p(&f.example), "--tasks", "S", "--no-header"]);
    assert_eq!(out, "S yuvorhi mātāditiḥ\tyuvoḥ hi mātā aditiḥ\n");
    let out = ok(&["make-samples", "-c", p(&f.example), "--tasks", "SL", "--no-header"]);
    assert_eq!(out, "SL yuvorhi mātāditiḥ\tyuvoḥ_yuṣmad hi_hi mātā_mātṛ aditiḥ_aditi\n");
}

#[test]
fn evaluate_identical_files() {
    let f = fixture();
    let gold = f.dir.path().join("gold.tsv");
    let cb = f.dir.path().join("cb.tsv");
    ok(&["build-codebook", "-c", p(&f.corpus), "-o", p(&cb)]);
    ok(&["make-samples", "-c", p(&f.corpus), "--tasks", "S,LM,SLM", "--codebook", p(&cb), "-o", p(&gold)]);
    let out = ok(&["evaluate", "--gold", p(&gold), "--pred", p(&gold)]);
    assert!(out.contains("pm.value=100.0000"), "{out}");
    assert!(out.contains("lemmaacc.value=100.0000"), "{out}");
    let json: serde_json::Value = serde_json::from_str(&ok(&["evaluate", "--gold", p(&gold), "--pred", p(&gold), "--json"])).unwrap();
    assert_eq!(json["metrics"][0]["value"], 100.0);
}

#[test]
fn evaluate_reports_differences() {
    let f = fixture();
    let gold = f.dir.path().join("gold.tsv");
    let pred = f.dir.path().join("pred.tsv");
    let diff = f.dir.path().join("diff.tsv");
    fs::write(&gold, "S yuvorhi mātāditiḥ\tyuvoḥ hi mātā aditiḥ\nS hi\thi\n").unwrap();
    fs::write(&pred, "S yuvorhi mātāditiḥ\tyuvoḥ hi mātāditiḥ\nS hi\thi\n").unwrap();
    let out = ok(&["evaluate", "--gold", p(&gold), "--pred", p(&pred), "--diff-report", p(&diff)]);
    assert!(out.contains("pm.value=50.0000"), "{out}");
    let d = fs::read_to_string(&diff).unwrap();
    assert!(d.contains("segmentation-mismatch"), "{d}");

    fs::write(&pred, "S hi\thi\nS yuvorhi mātāditiḥ\tyuvoḥ hi mātā aditiḥ\n").unwrap();
    assert_eq!(code(&["evaluate", "--gold", p(&gold), "--pred", p(&pred)]), 2);
}

#[test]
fn dependency_round_trip() {
    let f = fixture();
    let dep = f.dir.path().join("dep.tsv");
    ok(&["dep", "linearize", "-c", p(&f.corpus), "-o", p(&dep)]);
    let text = fs::read_to_string(&dep).unwrap();
    assert!(text.starts_with("#format=dep-v1\n# sktkit dep linearize features=none augment=0 mask_mantras=false seed=42\nD "), "{text}");
    let out = ok(&["evaluate", "--gold", p(&dep), "--pred", p(&dep)]);
    assert!(out.contains("uas.value=100.0000") && out.contains("las.value=100.0000") && out.contains("uas.repairs=0"), "{out}");
    let back = f.dir.path().join("back.conllu");
    ok(&["dep", "delinearize", p(&dep), "-o", p(&back)]);
    assert!(fs::read_to_string(&back).unwrap().contains("\troot\t"));
}

#[test]
fn outputs_are_deterministic() {
    let f = fixture();
    let cb = f.dir.path().join("cb.tsv");
    ok(&["build-codebook", "-c", p(&f.corpus), "-o", p(&cb)]);
    let a = ok(&["make-samples", "-c", p(&f.corpus), "--tasks", "SLM", "--codebook", p(&cb), "--paragraphs", "--jobs", "1"]);
    let b = ok(&["make-samples", "-c", p(&f.corpus), "--tasks", "SLM", "--codebook", p(&cb), "--paragraphs", "--jobs", "3"]);
    assert_eq!(a, b);
    let split = |seed: &str| ok(&["make-splits", "-c", p(&f.corpus), "--dev", "10", "--test", "10", "--seed", seed]);
    assert_eq!(split("5"), split("5"));
    assert_ne!(split("5"), split("6"));
    let g1 = ok(&["gen-corpus", "--texts", "2", "--seed", "9"]);
    assert_eq!(g1, ok(&["gen-corpus", "--texts", "2", "--seed", "9"]));
}

#[test]
fn split_replay_reproduces_files() {
    let f = fixture();
    let a = f.dir.path().join("a");
    let b = f.dir.path().join("b");
    ok(&["make-splits", "-c", p(&f.corpus), "--dev", "15", "--test", "12", "--exclude-text", "ṚV", "--out-dir", p(&a)]);
    ok(&["make-splits", "-c", p(&f.corpus), "--replay", p(&a.join("manifest.tsv")), "--out-dir", p(&b)]);
    for name in ["train.conllu", "dev.conllu", "test.conllu", "manifest.tsv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let dev = fs::read_to_string(a.join("dev.conllu")).unwrap();
    assert!(!dev.contains("text_id = ṚV"));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["make-samples", "-c", "/nonexistent.conllu"]), 1);
    assert_eq!(code(&["make-samples"]), 1);
    assert_eq!(code(&["translit", "--to", "klingon", "a"]), 1);

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.conllu");
    fs::write(&bad, "1\tx\t_\n\n").unwrap();
    assert_eq!(code(&["make-samples", "-c", p(&bad)]), 2);

    let src = dir.path().join("src.tsv");
    fs::write(&src, "S hi\thi\n").unwrap();
    // nothing listens on port 9 of localhost
    assert_eq!(code(&["predict", p(&src), "--backend", "remote", "--endpoint", "127.0.0.1:9", "--timeout-ms", "500"]), 3);
    assert_eq!(code(&["predict", p(&src), "--backend", "remote"]), 1);
}

#[test]
fn environment_and_config_overrides() {
    let f = fixture();
    let corpus = p(&f.corpus).to_string();
    let out = sktkit(&["make-splits", "--dev", "3", "--test", "3"]).env("SKTKIT_CORPUS", &corpus).env("SKTKIT_SEED", "77").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("# seed=77 "));

    let cfg = f.dir.path().join("run.toml");
    fs::write(&cfg, format!("seed = 11\n[paths]\ncorpus = [\"{corpus}\"]\n[splits]\ndev = 2\ntest = 4\n")).unwrap();
    assert!(ok(&["make-splits", "--config", p(&cfg)]).starts_with("# seed=11 corpus_size="));
    assert!(ok(&["make-splits", "--config", p(&cfg), "--seed", "12"]).contains("dev=2 test=4"));
    let out = sktkit(&["make-splits", "--config", p(&cfg)]).env("SKTKIT_SEED", "13").output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("# seed=13 "));

    fs::write(&cfg, "sed = 1\n").unwrap();
    assert_eq!(code(&["make-splits", "--config", p(&cfg)]), 1);
    let out = sktkit(&["gen-corpus"]).env("SKTKIT_SEED", "many").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn predict_against_a_remote_server() {
    let server = StubServer::start(|src| if src.contains("boom") { Err(500) } else { Ok(src.to_uppercase()) });
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.tsv");
    let out = dir.path().join("out.tsv");
    fs::write(&input, "# header\nS a b\ta b\nS c\tc\nS a b\tx\n").unwrap();
    let endpoint = format!("http://{}", server.addr());
    ok(&["predict", p(&input), "--backend", "remote", "--endpoint", &endpoint, "-o", p(&out), "--max-in-flight", "2"]);
    let lines: Vec<String> = fs::read_to_string(&out).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(lines, ["S a b\tS A B", "S c\tS C", "S a b\tS A B"]);
    assert_eq!(server.hits(), 3);

    fs::write(&input, "S ok\tok\nS boom\tboom\n").unwrap();
    let res = run(&["predict", p(&input), "--backend", "remote", "--endpoint", &endpoint, "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(3));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("S ok\tS OK\n") && text.contains("S boom\t\n"), "{text}");
}

#[test]
fn oracle_backend_end_to_end() {
    let f = fixture();
    let gold = f.dir.path().join("gold.tsv");
    let pred = f.dir.path().join("pred.tsv");
    let diff = f.dir.path().join("diff.tsv");
    ok(&["make-samples", "-c", p(&f.corpus), "--tasks", "S", "-o", p(&gold)]);
    ok(&["predict", p(&gold), "--backend", "oracle", "--oracle-table", p(&gold), "-o", p(&pred)]);
    let out = ok(&["evaluate", "--gold", p(&gold), "--pred", p(&pred), "--diff-report", p(&diff)]);
    assert!(out.contains("pm.value=100.0000"));
    assert!(fs::read_to_string(&diff).unwrap().is_empty());
}

#[test]
fn transliteration_and_tag_coding() {
    assert_eq!(ok(&["translit", "--to", "slp1", "yuvoḥ", "hi"]), "yuvoH hi\n");
    assert_eq!(ok(&["translit", "--from", "slp1", "--to", "iast", "mAtA"]), "mātā\n");
    let f = fixture();
    let cb = f.dir.path().join("cb.tsv");
    ok(&["build-codebook", "-c", p(&f.example), "-o", p(&cb)]);
    let tags = f.dir.path().join("tags.txt");
    fs::write(&tags, "Case=Nom|Gender=Fem|Number=Sing _\nCase=Gen|Number=Dual\n").unwrap();
    let codes = f.dir.path().join("codes.txt");
    fs::write(&codes, ok(&["encode-tags", "--codebook", p(&cb), p(&tags)])).unwrap();
    assert_eq!(ok(&["decode-tags", "--codebook", p(&cb), p(&codes)]), "Case=Nom|Gender=Fem|Number=Sing _\nCase=Gen|Number=Dual\n");
}

#[test]
fn ingest_reports_statistics() {
    let f = fixture();
    let stats = f.dir.path().join("stats.tsv");
    let merged = f.dir.path().join("merged.conllu");
    ok(&["ingest", "-c", p(&f.corpus), "-c", p(&f.example), "-o", p(&merged), "--stats", p(&stats)]);
    let s = fs::read_to_string(&stats).unwrap();
    assert!(s.lines().any(|l| l.starts_with("TOTAL\t")), "{s}");
    assert!(s.contains("# trees failing validation: 0"));
    let again = ok(&["make-samples", "-c", p(&merged), "--tasks", "S", "--no-header"]);
    let direct = ok(&["make-samples", "-c", p(&f.corpus), "-c", p(&f.example), "--tasks", "S", "--no-header"]);
    assert_eq!(again, direct);
}
