use std::path::Path;
use std::process::{Command, Output};

use entrap::formats::{read_instance, write_instance};
use entrap_core::domains::{DomainInstance, DomainKind, DomainMetadata};
use entrap_core::{MdpBuilder, TabularMdp};

fn entrap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entrap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let o = entrap(args, cwd);
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

fn labels(p: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{p}{i}")).collect()
}

fn external(mdp: TabularMdp, traps: &[usize], dir: &Path) {
    let inst = DomainInstance::from_believed(mdp, traps, DomainMetadata::new(DomainKind::External)).unwrap();
    write_instance(dir, &inst).unwrap();
}

/// s0 reaches s1 with probability 0.2 < 1/4: the one-step trajectory tips.
fn tipping_fixture() -> TabularMdp {
    let mut b = MdpBuilder::new(labels("s", 4), labels("a", 1));
    b.add_transition(0, 0, 1, 0.2)
        .add_transition(0, 0, 2, 0.8)
        .add_transition(1, 0, 3, 1.0)
        .add_transition(2, 0, 3, 1.0)
        .set_reward(3, 1.0)
        .set_terminal(3, true)
        .gamma(0.9)
        .initial(0);
    b.build().unwrap()
}

/// s0 -> s1 -> s2 deterministically; s2 is the rewarding goal.
fn corridor() -> TabularMdp {
    let mut b = MdpBuilder::new(labels("s", 3), labels("a", 1));
    b.add_transition(0, 0, 1, 1.0)
        .add_transition(1, 0, 2, 1.0)
        .set_reward(2, 1.0)
        .set_terminal(2, true)
        .gamma(0.9)
        .initial(0);
    b.build().unwrap()
}

#[test]
fn generate_round_trips_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "gridworld", "--n", "4", "--slip", "0.5", "--traps", "2", "--seed", "7"];
    let out = ok(&[&args[..], &["--out", "a"]].concat(), dir.path());
    assert!(out.contains("states"), "{out}");
    assert!(out.contains("goal reachable: yes"), "{out}");
    ok(&[&args[..], &["--out", "b"]].concat(), dir.path());
    for file in ["believed.json", "truth.json", "instance.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let loaded = read_instance(&dir.path().join("a")).unwrap();
    let again = tempfile::tempdir().unwrap();
    write_instance(again.path(), &loaded).unwrap();
    for file in ["believed.json", "truth.json", "instance.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(file)).unwrap(),
            std::fs::read(again.path().join(file)).unwrap()
        );
    }
}

#[test]
fn generate_rejects_bad_delta() {
    let dir = tempfile::tempdir().unwrap();
    let o = entrap(&["generate", "puddle", "--delta", "0.7"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("step size 0.7"), "{err}");
}

#[test]
fn generate_showroom_and_every_family() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["generate", "showroom", "--out", "show"], dir.path());
    assert!(out.contains("instance  showroom"), "{out}");
    for (domain, extra) in [
        ("four-rooms", vec!["--n", "5"]),
        ("rock-sampling", vec!["--n", "4", "--rocks", "2"]),
        ("puddle", vec!["--delta", "0.5"]),
    ] {
        let args: Vec<&str> = [vec!["generate", domain, "--out", domain], extra].concat();
        ok(&args, dir.path());
        read_instance(&dir.path().join(domain)).unwrap();
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["generate", "gridworld", "--size", "4"],
        vec!["generate", "gridworld", "--delta", "0.5"],
        vec!["generate", "maze"],
        vec!["budget"],
        vec!["budget", "--instance", "missing"],
        vec!["frobnicate"],
    ] {
        let o = entrap(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn help_documents_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, flags) in [
        ("generate", &["--n", "--slip", "--traps", "--seed", "--trap-seed", "--delta", "--rocks", "--gamma", "--out"][..]),
        ("budget", &["--instance", "--cap", "--out"][..]),
        (
            "plan",
            &["--instance", "--kappa", "--budget", "--cap", "--traps", "--tolerance", "--max-iterations", "--state-limit", "--out"][..],
        ),
        ("simulate", &["--instance", "--policy", "--kappa", "--episodes", "--seed", "--horizon", "--csv", "--traces"][..]),
        ("bench", &["--config", "--out"][..]),
    ] {
        let help = ok(&[cmd, "--help"], dir.path());
        for f in flags {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn budget_reports_cap_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "showroom", "--out", "show"], dir.path());
    let out = ok(&["budget", "--instance", "show"], dir.path());
    assert!(out.contains("capped at 15"), "{out}");

    external(tipping_fixture(), &[1], &dir.path().join("tip"));
    let out = ok(&["budget", "--instance", "tip", "--out", "b.json"], dir.path());
    assert!(out.contains("K = 1"), "{out}");
    assert!(out.contains("witness s0 a0 s1"), "{out}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(json["k"], 1);
    assert_eq!(json["capped"], false);
    assert_eq!(json["usable"], 0);
}

#[test]
fn plan_on_showroom_entraps_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "showroom", "--out", "show"], dir.path());
    let out = ok(&["plan", "--instance", "show", "--out", "p1.json"], dir.path());
    assert!(out.contains("defender initial value 0\n"), "{out}");
    assert!(out.contains("construction") && out.contains("planning"), "{out}");
    assert!(out.contains("identities ok"), "{out}");
    ok(&["plan", "--instance", "show", "--out", "p2.json"], dir.path());
    assert_eq!(
        std::fs::read(dir.path().join("p1.json")).unwrap(),
        std::fs::read(dir.path().join("p2.json")).unwrap()
    );
    let out = ok(&["plan", "--instance", "show", "--traps", "none", "--out", "p3.json"], dir.path());
    assert!(out.contains("value suppression only"), "{out}");
}

#[test]
fn plan_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "showroom", "--out", "show"], dir.path());
    let o = entrap(&["plan", "--instance", "show", "--state-limit", "3"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = entrap(&["plan", "--instance", "show", "--max-iterations", "1"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = entrap(&["plan", "--instance", "show", "--traps", "1,x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_baseline_and_defended() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "showroom", "--out", "show"], dir.path());
    let out = ok(&["simulate", "--instance", "show", "--episodes", "500"], dir.path());
    assert!(out.contains("undefended return"), "{out}");
    assert!(!out.lines().any(|l| l.starts_with("defended")), "{out}");

    external(corridor(), &[1], &dir.path().join("corr"));
    ok(&["plan", "--instance", "corr", "--out", "cp.json"], dir.path());
    let out = ok(
        &["simulate", "--instance", "corr", "--policy", "cp.json", "--episodes", "200", "--traces", "t.jsonl"],
        dir.path(),
    );
    assert!(out.contains("defended return   0.000000 ± 0.000000, trapped 200/200"), "{out}");
    assert!(out.contains(": ok"), "{out}");
    let traces = entrap::formats::read_traces(&dir.path().join("t.jsonl")).unwrap();
    assert_eq!(traces.len(), 200);
}

#[test]
fn simulate_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "gridworld", "--out", "g"], dir.path());
    ok(&["plan", "--instance", "g", "--out", "p.json"], dir.path());
    for name in ["a.csv", "b.csv"] {
        ok(
            &["simulate", "--instance", "g", "--policy", "p.json", "--episodes", "10000", "--seed", "42", "--csv", name],
            dir.path(),
        );
    }
    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(dir.path().join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 3);
}

#[test]
fn simulate_refuses_foreign_policy() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "showroom", "--out", "show"], dir.path());
    ok(&["generate", "gridworld", "--out", "g"], dir.path());
    ok(&["plan", "--instance", "g", "--out", "p.json"], dir.path());
    let o = entrap(&["simulate", "--instance", "show", "--policy", "p.json"], dir.path());
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn bench_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[run]\nepisodes = 100\ntrap_seeds = [0, 1]\n[[domain]]\nkind = \"four-rooms\"\nsizes = [4]\ntraps = 2\n",
    )
    .unwrap();
    let out = ok(&["bench", "--config", "c.toml", "--out", "res"], dir.path());
    assert!(out.contains("four-rooms-4x4-t1"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("res/metrics.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    for col in [
        "domain",
        "instance",
        "attacker_baseline",
        "defender_value",
        "defender_mc_stderr",
        "budget_k",
        "budget",
        "construction_secs",
        "planning_secs",
    ] {
        assert!(header.contains(&col), "missing {col}");
    }
    assert_eq!(csv.lines().count(), 1 + 2 + 1);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["instances"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["run"]["timeout_secs"], 1800);
}

#[test]
fn bench_rejects_empty_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[run]\nepisodes = 100\n").unwrap();
    let o = entrap(&["bench", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no [[domain]]"));
}
