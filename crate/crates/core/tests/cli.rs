mod common;

use std::path::Path;
use std::process::Command;

use kedge_core::chain::parse_jsonl;
use kedge_core::event::EventKind;
use serde_json::json;

use common::*;

const EMPTY_DIGEST: &str = "4f53cda18c2baa0c0354bb5f9a3ecbe5ed12ab4d8e11ba873c2f11161202b945";

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_into(name: &str, dir: &Path) -> i32 {
    kedge(&["run", "--scenario", s(&scenario_path(name)), "--out", s(dir)]).0
}

fn write_json(path: &Path, v: &serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into("authority_conflict", dir.path()), 0);
    for f in ["log.jsonl", "state.json", "report.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["outcomes"]["i-open"], "Executed");

    let (code, _, err) = kedge(&["run", "--scenario", "/nonexistent/x.json", "--out", s(dir.path())]);
    assert_eq!(code, 3);
    assert!(err.starts_with("error:"));

    let mut wrong: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario_path("authority_conflict")).unwrap()).unwrap();
    wrong["expected"]["outcomes"]["i-open"] = json!("Rejected");
    let path = dir.path().join("wrong.json");
    write_json(&path, &wrong);
    let out = dir.path().join("wrong-out");
    let (code, stdout, _) = kedge(&["run", "--scenario", s(&path), "--out", s(&out)]);
    assert_eq!(code, 1, "{stdout}");
}

#[test]
fn run_seed_flag_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) =
        kedge(&["run", "--scenario", s(&scenario_path("destructive_loop")), "--seed", "11", "--out", s(dir.path())]);
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 11);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    run_into("trust_race", dir.path());
    let log = dir.path().join("log.jsonl");
    let (code, out, _) = kedge(&["verify", "--log", s(&log)]);
    assert_eq!(code, 0);
    assert!(out.starts_with("OK ("));

    let mut bytes = std::fs::read(&log).unwrap();
    let second_line = bytes.iter().position(|b| *b == b'\n').unwrap() + 1;
    let target = second_line + 40;
    bytes[target] ^= 0x04;
    let tampered = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered, &bytes).unwrap();
    let (code, out, _) = kedge(&["--json", "verify", "--log", s(&tampered)]);
    assert_eq!(code, 2);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["status"], "Broken");
    assert!(report["index"].as_u64().unwrap() <= 1, "{out}");

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, b"").unwrap();
    assert_eq!(kedge(&["verify", "--log", s(&empty)]).0, 0);
    assert_eq!(kedge(&["verify", "--log", s(&dir.path().join("missing.jsonl"))]).0, 3);
}

#[test]
fn replay_and_lineage() {
    let dir = tempfile::tempdir().unwrap();
    run_into("authority_conflict", dir.path());
    let log = dir.path().join("log.jsonl");

    let (code, out, _) = kedge(&["replay", "--log", s(&log), "--at", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains(EMPTY_DIGEST), "{out}");
    assert_eq!(kedge(&["replay", "--log", s(&log), "--at", "100000"]).0, 3);

    let (code, out, _) = kedge(&["--json", "lineage", "--log", s(&log), "--intent", "i-close-retry"]);
    assert_eq!(code, 0);
    let entries: Vec<kedge_core::ChainEntry> = serde_json::from_str(&out).unwrap();
    let kinds: Vec<EventKind> = entries.iter().map(|e| e.event.kind()).collect();
    assert_eq!(kinds, vec![EventKind::IntentProposed, EventKind::ContextSnapshotted, EventKind::DecisionRendered]);
    assert_eq!(entries[2].event.as_decision().unwrap().outcome, kedge_core::Outcome::Reject);

    let (code, text, _) = kedge(&["lineage", "--log", s(&log), "--intent", "i-open"]);
    assert_eq!(code, 0);
    assert!(text.contains("ct-i-open (UpdateOperatingStatus, {store-1}, ["), "{text}");
    assert_eq!(kedge(&["lineage", "--log", s(&log), "--intent", "ghost"]).0, 3);
}

fn owner_request(dir: &Path, trust: &str) -> std::path::PathBuf {
    let p = dir.join(format!("req-{trust}.json"));
    write_json(
        &p,
        &json!({
            "principal": {"actor_id": "agent-1", "role": "VerifiedAgent"},
            "action": "UpdateOperatingStatus",
            "resource": {"entity_id": "store-1", "entity_type": "Store"},
            "context": {"time_since_owner_update": 900, "trust_score": {"dec": trust}}
        }),
    );
    p
}

#[test]
fn policy_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let policies = dir.path().join("owner.cedar");
    std::fs::write(&policies, format!("{OWNER_RULE}\npermit (principal, action, resource);\n")).unwrap();

    let (code, out, _) =
        kedge(&["policy", "check", "--policies", s(&policies), "--request", s(&owner_request(dir.path(), "0.9000"))]);
    assert_eq!(code, 0, "{out}");
    let (code, out, _) =
        kedge(&["policy", "check", "--policies", s(&policies), "--request", s(&owner_request(dir.path(), "0.6000"))]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("policy0"), "{out}");

    let broken = dir.path().join("broken.cedar");
    std::fs::write(&broken, "permit (principal").unwrap();
    let (code, _, err) =
        kedge(&["policy", "check", "--policies", s(&broken), "--request", s(&owner_request(dir.path(), "0.9000"))]);
    assert_eq!(code, 3);
    assert!(err.contains("error:"));
}

#[test]
fn submit_appends_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.json");
    write_json(&world, &json!({"version": 1, "resources": [{"id": "store-1", "kind": "Store"}]}));
    let policies = dir.path().join("p.cedar");
    std::fs::write(&policies, format!("{OWNER_RULE}\npermit (principal, action, resource);\n")).unwrap();
    let log = dir.path().join("log.jsonl");
    let batch = |path: &Path, now: u64, id: &str, trust: &str| {
        write_json(
            path,
            &json!({
                "now": now,
                "intents": [{
                    "intent_id": id, "actor": "agent-1", "role": "VerifiedAgent", "trust": trust,
                    "action": "UpdateOperatingStatus", "target": "store-1",
                    "facts": [{"entity_id": "store-1", "key": "operating_status", "value": "closed"}]
                }]
            }),
        );
    };
    let b1 = dir.path().join("b1.json");
    batch(&b1, 10, "i-1", "0.6000");
    let args = |b: &Path| {
        vec![
            "submit".to_string(),
            "--log".into(),
            s(&log).into(),
            "--policies".into(),
            s(&policies).into(),
            "--world".into(),
            s(&world).into(),
            "--intents".into(),
            s(b).into(),
        ]
    };
    let a1 = args(&b1);
    let (code, out, err) = kedge(&a1.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, 0, "{out}{err}");
    let first = std::fs::read(&log).unwrap();
    assert_eq!(parse_jsonl(std::str::from_utf8(&first).unwrap()).unwrap().len(), 3);

    let b2 = dir.path().join("b2.json");
    batch(&b2, 20, "i-2", "0.9000");
    let a2 = args(&b2);
    assert_eq!(kedge(&a2.iter().map(String::as_str).collect::<Vec<_>>()).0, 0);
    let second = std::fs::read(&log).unwrap();
    assert_eq!(&second[..first.len()], &first[..]);
    assert_eq!(parse_jsonl(std::str::from_utf8(&second).unwrap()).unwrap().len(), 6);
    assert_eq!(kedge(&["verify", "--log", s(&log)]).0, 0);

    // Resubmitting a known intent id is refused and leaves the log alone.
    assert_eq!(kedge(&a2.iter().map(String::as_str).collect::<Vec<_>>()).0, 3);
    assert_eq!(std::fs::read(&log).unwrap(), second);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    run_into("orthogonal_merge", dir.path());
    let cfg = dir.path().join("kedge.json");
    write_json(&cfg, &json!({"log_path": dir.path().join("log.jsonl")}));
    let o = Command::new(env!("CARGO_BIN_EXE_kedge")).args(["verify"]).env("KEDGE_CONFIG", &cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    write_json(&cfg, &json!({"log": "typo"}));
    let o = Command::new(env!("CARGO_BIN_EXE_kedge")).args(["verify"]).env("KEDGE_CONFIG", &cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3));

    let o = Command::new(env!("CARGO_BIN_EXE_kedge")).args(["verify"]).env_remove("KEDGE_CONFIG").output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn help_and_usage() {
    let (code, out, _) = kedge(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("Exit codes:"));
    for cmd in ["run", "submit", "verify", "replay", "lineage", "policy"] {
        assert!(out.contains(cmd), "{cmd}");
    }
    assert_eq!(kedge(&["--version"]).0, 0);
    assert_eq!(kedge(&["frobnicate"]).0, 3);
    assert_eq!(kedge(&[]).0, 3);
}
