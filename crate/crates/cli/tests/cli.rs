use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tcrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcrag")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines().filter(|l| !l.is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn write_playbook(path: &Path, steps: &[&str]) {
    let entries: Vec<Value> =
        steps.iter().map(|t| serde_json::json!({"text": t, "probs": [0.95, 0.95, 0.95]})).collect();
    fs::write(path, serde_json::to_string(&entries).unwrap()).unwrap();
}

#[test]
fn tm_check_fixture_reports_every_word() {
    let o = tcrag(&["tm-check", "--fixture", "all-ones", "--max-len", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports = json_lines(&stdout(&o));
    assert_eq!(reports.len(), 31);
    assert!(reports.iter().all(|r| r["success"] == true));
    assert!(String::from_utf8_lossy(&o.stderr).contains("0 commutation failures"));
}

#[test]
fn tm_check_machine_file_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("m.json");
    fs::write(
        &spec,
        r#"{"name": "ends-in-b", "states": ["s", "t", "y", "n"], "input_alphabet": ["a", "b"],
            "tape_alphabet": ["_", "a", "b"], "blank": "_",
            "transitions": [["s","a","s","a","R"], ["s","b","s","b","R"], ["s","_","t","_","L"],
                            ["t","b","y","b","R"], ["t","a","n","a","R"], ["t","_","n","_","R"]],
            "start": "s", "accept": "y", "reject": "n"}"#,
    )
    .unwrap();
    let out = dir.path().join("r.jsonl");
    for extra in [&[][..], &["--sama"][..]] {
        let mut args =
            vec!["tm-check", "--machine", spec.to_str().unwrap(), "--max-len", "3", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = tcrag(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let reports = json_lines(&fs::read_to_string(&out).unwrap());
        assert_eq!(reports.len(), 15);
        let ab = reports.iter().find(|r| r["input"] == "ab").unwrap();
        assert_eq!(ab["native_outcome"], ab["tc_outcome"]);
    }
}

#[test]
fn tm_check_random_machines() {
    let o = tcrag(&["tm-check", "--random", "5", "--seed", "3", "--random-inputs", "4"]);
    assert!(o.status.success());
    assert_eq!(json_lines(&stdout(&o)).len(), 20);
}

#[test]
fn agent_run_writes_a_trace_that_replays() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs");
    fs::create_dir(&docs).unwrap();
    fs::write(docs.join("nile.txt"), "Nile\nThe Nile is the longest river in Africa.").unwrap();
    fs::write(docs.join("alps.txt"), "Alps\nThe Alps are a mountain range in Europe.").unwrap();
    let index = dir.path().join("index.json");
    let o = tcrag(&["corpus", "build", "--in", docs.to_str().unwrap(), "--out", index.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let playbook = dir.path().join("play.json");
    write_playbook(&playbook, &["Tool_Use: DOC_RAG", "Conclusion: The Nile"]);
    let trace = dir.path().join("t.jsonl");
    let generator = format!("scripted:{}", playbook.display());
    let o = tcrag(&[
        "agent-run",
        "--query",
        "Which river is longest in Africa?",
        "--generator",
        &generator,
        "--index",
        index.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "The Nile");
    let lines = json_lines(&fs::read_to_string(&trace).unwrap());
    assert_eq!(lines[0]["type"], "header");
    assert_eq!(lines[1]["tool"], "DOC_RAG");
    assert_eq!(lines[1]["applied"], "Tool_Observation");
    assert_eq!(lines[1]["tool_error"], false);
    assert_eq!(lines.last().unwrap()["status"], "concluded");

    let replay = |book: &Path| {
        tcrag(&[
            "replay",
            "--trace",
            trace.to_str().unwrap(),
            "--playbook",
            book.to_str().unwrap(),
            "--index",
            index.to_str().unwrap(),
        ])
    };
    let o = replay(&playbook);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "true");

    let other = dir.path().join("other.json");
    write_playbook(&other, &["Tool_Use: DOC_RAG", "Conclusion: The Amazon"]);
    let o = replay(&other);
    assert!(!o.status.success());
    assert_eq!(stdout(&o).trim(), "false");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "[engine]\nmax_loop = 2\n").unwrap();
    let playbook = dir.path().join("p.json");
    write_playbook(&playbook, &["Thought: a", "Thought: b", "Thought: c", "Thought: d"]);
    let generator = format!("scripted:{}", playbook.display());
    let trace = dir.path().join("t.jsonl");
    let steps = |extra: &[&str]| {
        let mut args =
            vec!["--config", config.to_str().unwrap(), "agent-run", "--query", "q", "--generator", &generator];
        args.extend_from_slice(&["--trace", trace.to_str().unwrap()]);
        args.extend_from_slice(extra);
        assert!(tcrag(&args).status.success());
        json_lines(&fs::read_to_string(&trace).unwrap()).iter().filter(|l| l["type"] == "step").count()
    };
    assert_eq!(steps(&[]), 2);
    assert_eq!(steps(&["--max-loop", "3"]), 3);
}

#[test]
fn attack_writes_reports_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let traces = dir.path().join("traces");
    let o = tcrag(&[
        "attack",
        "--size",
        "10",
        "--attack",
        "structural",
        "--noise",
        "irrelevant",
        "--out",
        out.to_str().unwrap(),
        "--traces",
        traces.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    assert!(table.lines().next().unwrap().starts_with("Noise Type"));
    assert!(table.contains("Irrelevant Retrieval Noise"));
    let reports = json_lines(&fs::read_to_string(&out).unwrap());
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["cases"], 10);
    assert_eq!(reports[0]["em"], 100.0);
    let sub = fs::read_dir(&traces).unwrap().next().unwrap().unwrap().path();
    assert_eq!(fs::read_dir(sub).unwrap().count(), 10);
}

#[test]
fn unknown_generator_is_an_error() {
    let o = tcrag(&["agent-run", "--query", "q", "--generator", "magic"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown generator"));
}
