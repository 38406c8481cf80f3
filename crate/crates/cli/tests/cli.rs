use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn schemalyze(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_schemalyze"))
        .args(args)
        .env_remove("SCHEMALYZE_DEPTH_CAP")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = schemalyze(args);
    assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    stdout(&out)
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("schemalyze-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const CORPUS: [&str; 6] = ["ancestor", "functions", "mixed", "select_join", "shared", "students"];

/// Set `SCHEMALYZE_BLESS=1` to rewrite the snapshots.
#[test]
fn snapshots_match() {
    let bless = std::env::var_os("SCHEMALYZE_BLESS").is_some();
    let views: [(&str, &[&str]); 4] = [
        ("normalize", &["normalize"]),
        ("facts", &["facts"]),
        ("graph", &["graph"]),
        ("fds", &["fds", "--show-ids", "--potential"]),
    ];
    for stem in CORPUS {
        let input = golden(&format!("{stem}.dl"));
        for (suffix, cmd) in views {
            let mut args = cmd.to_vec();
            args.insert(1, input.to_str().unwrap());
            let actual = ok(&args);
            let snap = golden(&format!("{stem}.{suffix}.txt"));
            if bless {
                std::fs::write(&snap, &actual).unwrap();
            } else {
                let expected = std::fs::read_to_string(&snap).unwrap_or_else(|_| panic!("missing {}", snap.display()));
                assert_eq!(actual, expected, "{stem} {suffix}");
            }
        }
    }
}

#[test]
fn missing_file_is_an_analysis_error() {
    let out = schemalyze(&["fds", "missing.dl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("missing.dl: error: cannot read file"));
    assert!(out.stdout.is_empty());
}

#[test]
fn syntax_errors_carry_positions() {
    let path = scratch("bad.dl", "base s(a).\np(X) :- s(X)\n");
    let out = schemalyze(&["normalize", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with(&format!("{}:3:1: error: syntax error", path.display())), "{err}");
}

#[test]
fn validation_errors_carry_positions() {
    let path = scratch("arity.dl", "base s(a,b).\np(X) :- s(X).\n");
    let out = schemalyze(&["facts", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with(&format!("{}:2:", path.display())), "{err}");
    assert!(err.contains("error: `s` used with 1 arguments"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    let file = golden("select_join.dl");
    let file = file.to_str().unwrap();
    for args in [
        vec!["fds"],
        vec!["frobnicate", file],
        vec!["fds", file, "--depth-cap", "0"],
        vec!["graph", file, "--query", "nope"],
        vec!["graph", file, "--arg", "f1"],
        vec!["fds", file, "--const-ids", "both"],
    ] {
        assert_eq!(schemalyze(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn json_is_one_newline_terminated_document() {
    let file = golden("functions.dl");
    for cmd in ["normalize", "facts", "graph", "fds", "check", "all"] {
        let mut args = vec![cmd, file.to_str().unwrap(), "--json"];
        if matches!(cmd, "check" | "all") {
            args.extend(["--trials", "5"]);
        }
        let out = ok(&args);
        assert!(out.ends_with("}\n"), "{cmd}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v.is_object(), "{cmd}");
    }
}

#[test]
fn fd_records_follow_the_schema() {
    let out = ok(&["fds", golden("select_join.dl").to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let p = v["fds"].as_array().unwrap().iter().find(|r| r["pred"] == "p").unwrap();
    assert_eq!(
        p,
        &serde_json::json!({
            "pred": "p", "lhs": [1], "rhs": 2,
            "id": { "fd": 2, "args": [ { "fd": 1, "args": [ { "col": 1 } ] }, { "const": 2 } ] }
        })
    );
}

#[test]
fn triples_are_collapsed_without_ids() {
    let out = ok(&["fds", golden("select_join.dl").to_str().unwrap()]);
    assert!(out.lines().any(|l| l == "fd(p,{1},2)."));
    assert_eq!(out.lines().count(), 12);
}

#[test]
fn depth_cap_comes_from_flag_config_or_environment() {
    let file = golden("select_join.dl");
    let file = file.to_str().unwrap();
    let full = ok(&["fds", file, "--show-ids"]);

    let env = Command::new(env!("CARGO_BIN_EXE_schemalyze"))
        .args(["fds", file, "--show-ids"])
        .env("SCHEMALYZE_DEPTH_CAP", "1")
        .output()
        .unwrap();
    assert!(env.status.success());
    assert!(stdout(&env).lines().count() < full.lines().count());
    assert!(stderr(&env).starts_with("note: "));

    let flag_wins = Command::new(env!("CARGO_BIN_EXE_schemalyze"))
        .args(["fds", file, "--show-ids", "--depth-cap", "16"])
        .env("SCHEMALYZE_DEPTH_CAP", "1")
        .output()
        .unwrap();
    assert_eq!(stdout(&flag_wins), full);

    let config = scratch("cap.toml", "depth-cap = 1\n");
    let capped = ok(&["fds", file, "--show-ids", "--config", config.to_str().unwrap()]);
    assert_eq!(capped, stdout(&env));
}

#[test]
fn config_file_sets_constant_ids() {
    let config = scratch("cols.toml", "const-ids = \"column\"\nshow-ids = true\n");
    let out = ok(&["fds", golden("select_join.dl").to_str().unwrap(), "--config", config.to_str().unwrap()]);
    assert!(out.contains("fd(p,{1},2,id2[id1[1],'3'])."), "{out}");
    let bad = scratch("bad.toml", "colour = 1\n");
    let out = schemalyze(&["fds", golden("select_join.dl").to_str().unwrap(), "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn normal_form_is_valid_input() {
    for stem in CORPUS {
        let src = golden(&format!("{stem}.dl"));
        let normal = ok(&["normalize", src.to_str().unwrap()]);
        let again = scratch(&format!("{stem}.normal.dl"), &normal);
        let again = again.to_str().unwrap();
        assert_eq!(ok(&["normalize", again]), normal, "{stem}");
        assert_eq!(ok(&["fds", again]), ok(&["fds", src.to_str().unwrap()]), "{stem}");
        for cmd in ["facts", "graph", "check"] {
            ok(&[cmd, again]);
        }
    }
}

#[test]
fn graph_queries_and_dot() {
    let file = golden("functions.dl");
    let file = file.to_str().unwrap();
    assert_eq!(ok(&["graph", file, "--query", "base_changes", "--arg", "f1"]), "base_changes(b3).\n");
    assert_eq!(ok(&["graph", file, "--query", "idb_func_pred"]), "idb_func_pred(v3).\n");
    let tbl = ok(&["graph", file, "--query", "tbl_dep"]);
    assert!(tbl.contains("tbl_dep(b3,b2).\n"));
    let dot = ok(&["graph", file, "--dot"]);
    assert!(dot.starts_with("digraph deps {\n") && dot.contains("\"f2\" -> \"b3\";"));
}

#[test]
fn check_reports_timing_only_on_request() {
    let file = golden("select_join.dl");
    let file = file.to_str().unwrap();
    let plain: serde_json::Value = serde_json::from_str(&ok(&["check", file, "--json", "--trials", "5"])).unwrap();
    assert!(plain.get("timing_ms").is_none());
    assert_eq!(plain["violations"], serde_json::json!([]));
    assert_eq!(plain["trials"], 5);
    let timed: serde_json::Value =
        serde_json::from_str(&ok(&["check", file, "--json", "--trials", "5", "--timing"])).unwrap();
    assert!(timed["timing_ms"].is_u64());
}

#[test]
fn all_bundles_every_view() {
    let out = ok(&["all", golden("ancestor.dl").to_str().unwrap(), "--trials", "5"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for key in ["source", "normalized", "facts", "path", "queries", "fds", "check"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(!v["fds"]["pfds"].as_array().unwrap().is_empty());
}
