use std::path::Path;
use std::process::{Command, Output};
use std::thread;

use serde_json::{json, Value};

fn cothought(args: &[&str], cwd: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cothought"));
    cmd.args(args).current_dir(cwd).env_remove("COTHOUGHT_API_KEY").env_remove("COTHOUGHT_BASE_URL");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fig2_run_reports_census() {
    let dir = tempfile::tempdir().unwrap();
    let o = cothought(
        &["run", "--backend", "synthetic", "--task", "fig2-square-cuts", "--seed", "7", "--out", "runs/a"],
        dir.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("3 triangles"));
    assert!(dir.path().join("runs/a/images/step_0.png").exists());
}

#[test]
fn budget_and_usage_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = cothought(
        &["run", "--backend", "synthetic", "--task", "fig2-square-cuts", "--max-iters", "1", "--fault", "k=2", "--out", "b"],
        dir.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    for bad in [
        vec!["run", "--backend", "synthetic"],
        vec!["run", "--task", "fig2-square-cuts", "--fault", "2"],
        vec!["run", "--task", "no-such-task"],
        vec!["run", "--task", "fig2-square-cuts", "--tau", "0"],
        vec!["run", "--task", "fig2-square-cuts", "--fault", "k=9"],
        vec!["frobnicate"],
    ] {
        let o = cothought(&bad, dir.path(), &[]);
        assert_eq!(o.status.code(), Some(64), "{bad:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
        assert!(stdout(&o).is_empty());
    }
}

#[test]
fn deadlock_exit_code_via_config() {
    // similarity threshold low enough that consecutive fix prompts look alike
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        json!({"task": "fig2-square-cuts", "fault": 3, "loop": {"oscillation_similarity": 0.05}}).to_string(),
    )
    .unwrap();
    let o = cothought(&["run", "--config", "cfg.json", "--out", "d"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = cothought(&["inspect", "d"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().last().unwrap().contains("deadlock"));
}

#[test]
fn inspect_lists_steps_and_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let o = cothought(&["run", "--task", "fig2-square-cuts", "--fault", "k=2", "--seed", "3", "--out", "r"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = cothought(&["inspect", "r"], dir.path(), &[]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    // query line, header, 3 rows, outcome
    assert_eq!(lines.len(), 6, "{text}");
    assert!(lines[5].starts_with("outcome: converged"));
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(cothought(&["inspect", "."], empty.path(), &[]).status.code(), Some(1));
}

#[test]
fn json_output_is_one_object() {
    let dir = tempfile::tempdir().unwrap();
    let o = cothought(&["run", "--task", "stack-a-on-b", "--fault", "k=1", "--json", "--out", "j"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.trim().lines().count(), 1);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["reason"], "converged");
    assert_eq!(v["exit_code"], 0);
    assert!(v["answer"].is_null());
    assert!(v["deliverable"].as_str().unwrap().ends_with("images/step_1.png"));
    assert_eq!(v["steps"].as_array().unwrap().len(), 2);
}

#[test]
fn replay_rescore_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    cothought(&["run", "--task", "square-quarters", "--fault", "k=2", "--seed", "1", "--out", "q"], dir.path(), &[]);
    let o = cothought(&["replay", "q", "--rescore"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("scores match"));

    // tamper with a stored score
    let log = dir.path().join("q/trajectory.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    lines[0]["score"] = json!(0.999);
    let tampered: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&log, tampered).unwrap();
    let o = cothought(&["replay", "q", "--rescore"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("scores differ"));

    std::fs::write(&log, &text[..text.len() - 5]).unwrap();
    let o = cothought(&["replay", "q"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corrupt record at line"));
}

fn strip_timestamps(text: &str) -> Vec<Value> {
    text.lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("timestamp");
            v
        })
        .collect()
}

#[test]
fn seed_makes_runs_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["run", "--task", "fig2-square-cuts", "--fault", "k=3", "--seed", "42", "--out", out]
    };
    cothought(&args("one"), dir.path(), &[]);
    cothought(&args("two"), dir.path(), &[]);
    let read = |d: &str| std::fs::read_to_string(dir.path().join(d).join("trajectory.jsonl")).unwrap();
    assert_eq!(strip_timestamps(&read("one")), strip_timestamps(&read("two")));
    for t in 0..4 {
        let img = |d: &str| std::fs::read(dir.path().join(d).join(format!("images/step_{t}.png"))).unwrap();
        assert_eq!(img("one"), img("two"));
    }
}

fn chat(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn remote_run_against_stub() {
    let png = {
        let img = cothought_core::RasterImage::filled(2, 2, [10, 20, 30]).unwrap();
        img.to_png().unwrap()
    };
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let base = format!("http://{}", server.server_addr().to_ip().unwrap());
    thread::spawn(move || {
        use base64::Engine as _;
        let b64 = base64::engine::general_purpose::STANDARD.encode(&png);
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            std::io::Read::read_to_string(req.as_reader(), &mut body).unwrap();
            let reply = if req.url().ends_with("/images/generations") {
                json!({"data": [{"b64_json": b64}]}).to_string()
            } else if body.contains("strict visual critic") {
                chat(r#"{"score": 1.0, "feedback": null}"#)
            } else if body.contains("plan visual simulations") {
                chat("a red block resting on a blue block")
            } else {
                chat("A is on B")
            };
            let _ = req.respond(tiny_http::Response::from_string(reply));
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let env = [("COTHOUGHT_API_KEY", "sk-cli-secret"), ("COTHOUGHT_BASE_URL", base.as_str())];
    let o = cothought(&["run", "--backend", "remote", "--query", "Is A on B?", "--out", "rem"], dir.path(), &env);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("A is on B"));
    assert!(!stderr(&o).contains("sk-cli-secret"));
    let meta = std::fs::read_to_string(dir.path().join("rem/run.json")).unwrap();
    assert!(!meta.contains("sk-cli-secret"));
    let o = cothought(&["replay", "rem", "--rescore"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("rescore unavailable: no scene metadata"));
}

