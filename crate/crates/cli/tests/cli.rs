use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csm_cli::fixtures;
use tempfile::TempDir;

fn csm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csm"))
        .args(args)
        .output()
        .expect("run csm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Files {
    dir: TempDir,
}

impl Files {
    fn new() -> Self {
        Files {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn write(&self, name: &str, text: &str) -> String {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.to_string_lossy().into_owned()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fixture(&self, f: &fixtures::Fixture) -> (String, String) {
        (
            self.write(&format!("{}.csm", f.name), &f.system),
            self.write(&format!("{}.qsctl", f.name), &f.formulas),
        )
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const INCOMPLETE: &str = "
system broken
automaton A {
  state 0 init outputs { p }
  state 1
  arc 0 -> 1 when p
}
";

const FAULT: &str = "
system fault
automaton A {
  state s0 init
  state s1 outputs { p }
  state s2
  arc s0 -> s1 when 1
  arc s1 -> s2 when 1
  arc s2 -> s2 when 1
}
";

#[test]
fn validate_exit_codes() {
    let f = Files::new();
    let (sys, _) = f.fixture(&fixtures::two_by_two());
    let ok = csm(&["validate", "--system", &sys]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("ok"));

    let broken = f.write("broken.csm", INCOMPLETE);
    let bad = csm(&["validate", "--system", &broken]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("incomplete"));

    let garbage = f.write("garbage.csm", "system x\nautomaton {\n");
    assert_eq!(csm(&["validate", "--system", &garbage]).status.code(), Some(2));
    assert_eq!(
        csm(&["validate", "--system", s(&f.path("missing"))]).status.code(),
        Some(2)
    );
    assert_eq!(csm(&["validate"]).status.code(), Some(2));
}

const EXTERNAL: &str = "
system button
external { go }
automaton A {
  state idle init
  state busy outputs { p }
  arc idle -> busy when go
  arc idle -> idle when !go
  arc busy -> idle when 1
}
";

#[test]
fn environment_flag() {
    let f = Files::new();
    let sys = f.write("button.csm", EXTERNAL);
    let states = |env: &str| {
        let o = csm(&["build", "--system", &sys, "--env", env]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        stdout(&o).lines().next().unwrap().to_owned()
    };
    assert_eq!(states("closed"), "RG: 1 states, 1 arcs");
    assert_eq!(states("all"), "RG: 2 states, 3 arcs");
    assert_eq!(states("fixed:go"), "RG: 2 states, 2 arcs");
    for bad in ["fixed:nope", "fixed:p", "open"] {
        let o = csm(&["build", "--system", &sys, "--env", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
}

#[test]
fn build_writes_json_and_dot() {
    let f = Files::new();
    let (sys, _) = f.fixture(&fixtures::rhombus());
    let json = f.path("rg.json");
    let dot = f.path("rg.dot");
    let o = csm(&["build", "--system", &sys, "--json", s(&json), "--dot", s(&dot)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("RG-@: 4 states, 6 arcs"), "{out}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["states"].as_array().unwrap().len(), 4);
    assert_eq!(v["arcs"].as_array().unwrap().len(), 6);
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));
}

#[test]
fn build_cap_is_a_semantic_failure() {
    let f = Files::new();
    let (sys, _) = f.fixture(&fixtures::chain(10));
    let o = csm(&["build", "--system", &sys, "--cap", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("cap"));
}

#[test]
fn reduce_explains_rhombus() {
    let f = Files::new();
    let (sys, formula) = f.fixture(&fixtures::rhombus());
    let report = f.path("report.json");
    let graph = f.path("rrg.json");
    let dot = f.path("rrg.dot");
    let o = csm(&[
        "reduce",
        "--system",
        &sys,
        "--formula",
        &formula,
        "--explain",
        "--json",
        s(&report),
        "--graph-json",
        s(&graph),
        "--dot",
        s(&dot),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("after: 2 states, 2 arcs"), "{out}");
    assert!(out.contains("skipped states: 2"));
    assert!(out.contains("skip (rule)"), "{out}");
    assert!(out.contains("keep (ear_i)"), "{out}");

    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["schema"], "csm-reduction-report");
    assert_eq!(r["version"], 1);
    assert_eq!(r["mode"], "offline");
    assert!(!r["decisions"].as_array().unwrap().is_empty());
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&graph).unwrap()).unwrap();
    assert_eq!(g["arcs"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(&dot).unwrap().contains("digraph"));
}

#[test]
fn online_matches_offline_summary() {
    let f = Files::new();
    let (sys, formula) = f.fixture(&fixtures::rhombus_ladder(3));
    let off = csm(&["reduce", "--system", &sys, "--formula", &formula]);
    let on = csm(&["reduce", "--system", &sys, "--formula", &formula, "--online"]);
    assert_eq!(off.status.code(), Some(0));
    assert_eq!(on.status.code(), Some(0));
    let after = |o: &Output| stdout(o).lines().find(|l| l.starts_with("after")).map(str::to_owned);
    assert_eq!(after(&off), after(&on));
}

#[test]
fn nested_next_disables_reduction() {
    let f = Files::new();
    let (sys, _) = f.fixture(&fixtures::chain(4));
    let formula = f.write("nested.qsctl", "AX AX p\n");
    let o = csm(&["reduce", "--system", &sys, "--formula", &formula]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("reduction allowed: no"), "{out}");
    assert!(out.contains("note:"));
    assert!(out.contains("skipped states: 0"));
}

#[test]
fn bad_formula_is_a_usage_error() {
    let f = Files::new();
    let (sys, _) = f.fixture(&fixtures::chain(2));
    let formula = f.write("bad.qsctl", "AG (p &\n");
    assert_eq!(
        csm(&["reduce", "--system", &sys, "--formula", &formula]).status.code(),
        Some(2)
    );
    let unknown = f.write("unknown.qsctl", "AG zz\n");
    assert_eq!(
        csm(&["reduce", "--system", &sys, "--formula", &unknown]).status.code(),
        Some(2)
    );
}

#[test]
fn diff_passes_and_writes_report() {
    let f = Files::new();
    let (sys, formula) = f.fixture(&fixtures::rhombus_ladder(3));
    let json = f.path("diff.json");
    let o = csm(&[
        "diff",
        "--system",
        &sys,
        "--formula",
        &formula,
        "--seed",
        "7",
        "--count",
        "40",
        "--json",
        s(&json),
    ]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("mismatches: 0"), "{out}");
    assert!(out.contains("stuttering bisimulation: ok"));
    assert!(out.contains("audit: clean"));
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(d["schema"], "csm-diff-report");
    assert_eq!(d["verdicts"].as_array().unwrap().len(), 40);
}

#[test]
fn diff_online() {
    let f = Files::new();
    let (sys, formula) = f.fixture(&fixtures::random_system(11));
    let o = csm(&["diff", "--system", &sys, "--formula", &formula, "--online"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn fault_injection_is_caught() {
    let f = Files::new();
    let sys = f.write("fault.csm", FAULT);
    let formula = f.write("fault.qsctl", "AF p\n");
    let clean = csm(&["diff", "--system", &sys, "--formula", &formula]);
    assert_eq!(clean.status.code(), Some(0), "{}", stdout(&clean));
    let o = csm(&["diff", "--system", &sys, "--formula", &formula, "--fault-inject"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{out}");
    assert!(out.contains("mismatch: "), "{out}");
    assert!(out.contains("stuttering bisimulation: FAILED"), "{out}");
}

#[test]
fn hidden_flags_are_hidden() {
    let help = stdout(&csm(&["diff", "--help"]));
    assert!(help.contains("--online"));
    assert!(!help.contains("fault-inject"));
    assert!(!help.contains("bare-rule"));
}

#[test]
fn bench_csv() {
    let empty = csm(&["bench", "--family", "chain", "--sizes", "0"]);
    assert_eq!(empty.status.code(), Some(0));
    assert_eq!(stdout(&empty), "n,states,arcs,reduce_seconds,ratio\n");

    let o = csm(&["bench", "--family", "near-clique", "--sizes", "4,6"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("4,4,12,"), "{out}");
    assert!(rows[2].starts_with("6,6,30,"), "{out}");
}
