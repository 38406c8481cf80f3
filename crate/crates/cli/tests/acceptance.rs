//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use schemalyze_core::oracle::{evaluate, random_instance, random_program, soundness_sweep, SweepConfig};
use schemalyze_core::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(golden(name)).unwrap()
}

fn pipeline(src: &str) -> Result<(ValidatedProgram, NormalProgram, MetaFactBase), String> {
    let program = parse_program(src).map_err(|e| e.to_string())?;
    let vp = validate(program).map_err(|e| e.to_string())?;
    let np = normalize(&vp);
    let mf = extract(&np).map_err(|e| e.to_string())?;
    Ok((vp, np, mf))
}

fn id(i: usize, children: Vec<IdTerm>) -> IdTerm {
    IdTerm::Node {
        origin: Origin::Fd(i),
        children,
    }
}

fn col(c: usize) -> IdTerm {
    IdTerm::Col(c)
}

fn fd(pred: &str, lhs: &[usize], rhs: usize, id: IdTerm) -> Fd {
    Fd {
        pred: pred.into(),
        lhs: lhs.iter().copied().collect(),
        rhs,
        id,
    }
}

fn head_of(np: &NormalProgram, kind: OperatorKind) -> Option<String> {
    np.rules.iter().find(|r| r.kind == kind).map(|r| r.head.predicate.clone())
}

/// Renames generated predicates to the single letters of the worked example.
fn example_name(np: &NormalProgram, p: &str) -> String {
    if Some(p.to_string()) == head_of(np, OperatorKind::Selection) {
        "q".into()
    } else if Some(p.to_string()) == head_of(np, OperatorKind::Join) {
        "r".into()
    } else {
        p.into()
    }
}

fn example_normalization() -> Outcome {
    let start = Instant::now();
    let (vp, np, _) = pipeline(&read("select_join.dl"))?;
    let rules: Vec<String> = np
        .rules
        .iter()
        .map(|r| {
            let mut r = r.to_rule();
            r.head.predicate = example_name(&np, &r.head.predicate);
            for a in &mut r.body {
                a.predicate = example_name(&np, &a.predicate);
            }
            r.to_string()
        })
        .collect();
    let expected = [
        "p(W,Z) :- q(W,X,Y,Z).",
        "q(W,X,Y,Z) :- r(W,X,Y,Z), Y=2.",
        "r(W,X,Y,Z) :- s(W,X), t(X,Y,Z).",
    ];
    ensure!(rules == expected, "normal form {rules:?}");
    let kinds: Vec<OperatorKind> = np.rules.iter().map(|r| r.kind).collect();
    ensure!(
        kinds == [OperatorKind::Projection, OperatorKind::Selection, OperatorKind::Join],
        "kinds {kinds:?}"
    );
    let normal = np.validated();
    let mut nonempty = 0;
    for seed in 0..100 {
        let edb = random_instance(vp.program(), 8, seed);
        let a = evaluate(&vp, &edb);
        let b = evaluate(&normal, &edb);
        ensure!(a.get("p") == b.get("p"), "results differ on instance {seed}");
        nonempty += usize::from(a.get("p").is_some_and(|r| !r.is_empty()));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("3 rules, equal on 100 instances ({nonempty} with nonempty p), {elapsed:.0?}"))
}

fn pos_facts() -> Outcome {
    let (_, np, mf) = pipeline(&read("select_join.dl"))?;
    let pos: BTreeSet<(String, String, usize, usize)> = mf
        .pos
        .iter()
        .map(|(h, b, i, j)| (example_name(&np, h), example_name(&np, b), *i, *j))
        .collect();
    let expected: BTreeSet<(String, String, usize, usize)> = [
        ("p", "q", 1, 1),
        ("p", "q", 2, 4),
        ("r", "s", 1, 1),
        ("r", "s", 2, 2),
        ("r", "t", 2, 1),
        ("r", "t", 3, 2),
        ("r", "t", 4, 3),
    ]
    .iter()
    .map(|(h, b, i, j)| (h.to_string(), b.to_string(), *i, *j))
    .collect();
    ensure!(pos == expected, "pos facts {pos:?}");
    Ok("7 pos facts".into())
}

fn example_table(q: &str, r: &str, constant: i64) -> BTreeSet<Fd> {
    let c = || IdTerm::Const(Constant::Int(constant));
    let id1 = || id(1, vec![col(1)]);
    [
        fd("s", &[1], 2, id1()),
        fd("t", &[1, 2], 3, id(2, vec![col(1), col(2)])),
        fd(r, &[1], 2, id1()),
        fd(r, &[2, 3], 4, id(2, vec![col(2), col(3)])),
        fd(r, &[1, 3], 4, id(2, vec![id1(), col(3)])),
        fd(q, &[1], 2, id1()),
        fd(q, &[2, 3], 4, id(2, vec![col(2), col(3)])),
        fd(q, &[1, 3], 4, id(2, vec![id1(), col(3)])),
        fd(q, &[], 3, c()),
        fd(q, &[2], 4, id(2, vec![col(2), c()])),
        fd(q, &[1], 4, id(2, vec![id1(), c()])),
        fd("p", &[1], 2, id(2, vec![id1(), c()])),
    ]
    .into_iter()
    .collect()
}

fn example_saturation() -> Outcome {
    let (_, np, mf) = pipeline(&read("select_join.dl"))?;
    let q = head_of(&np, OperatorKind::Selection).ok_or("no selection")?;
    let r = head_of(&np, OperatorKind::Join).ok_or("no join")?;
    for (mode, constant) in [(ConstIds::Value, 2), (ConstIds::Column, 3)] {
        let config = EngineConfig {
            const_ids: mode,
            ..EngineConfig::default()
        };
        let out = saturate(&mf, &fd_seeds(&np), &config);
        let expected = example_table(&q, &r, constant);
        let extra: Vec<String> = out.facts.difference(&expected).map(|f| f.to_string()).collect();
        let missing: Vec<String> = expected.difference(&out.facts).map(|f| f.to_string()).collect();
        ensure!(
            extra.is_empty() && missing.is_empty(),
            "{mode:?}: extra {extra:?}, missing {missing:?}"
        );
    }
    let text = run_cli(&["fds", "--json", golden("select_join.dl").to_str().unwrap()])?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let records = doc["fds"].as_array().map_or(0, Vec::len);
    ensure!(records == 12, "cli printed {records} records");
    Ok("12 facts equal to the table under value and column constant ids".into())
}

fn ancestor() -> Outcome {
    let (_, np, mf) = pipeline(&read("ancestor.dl"))?;
    let out = saturate(&mf, &fd_seeds(&np), &EngineConfig::default());
    let star = |c: IdTerm| id(1, vec![c]);
    let on_p: Vec<&Fd> = out.on("p").collect();
    ensure!(on_p == vec![&fd("p", &[1], 2, star(col(1)))], "fds on p: {on_p:?}");
    for f in [
        fd("p", &[1], 2, star(col(1))),
        fd("p", &[1], 3, star(col(1))),
        fd("p3", &[1], 2, star(col(1))),
        fd("p3", &[1], 3, star(col(1))),
        fd("p3", &[2], 4, star(col(2))),
        fd("p3", &[1], 4, star(star(col(1)))),
        fd("p2", &[1], 2, star(col(1))),
        fd("p2", &[2], 3, star(col(2))),
        fd("p2", &[1], 3, star(star(col(1)))),
    ] {
        ensure!(out.potential.contains(&f), "missing potential {f}");
    }
    let promoted = fd("p2", &[1], 3, star(star(col(1))));
    ensure!(!out.facts.contains(&promoted), "{promoted} was promoted");
    Ok(format!("p has only {{1}} -> 2, {} potential facts", out.potential.len()))
}

fn unions() -> Outcome {
    let (vp, np, mf) = pipeline(&read("students.dl"))?;
    let out = saturate(&mf, &fd_seeds(&np), &EngineConfig::default());
    ensure!(out.on("students").count() == 0, "students got fds");
    let mut clash = false;
    for seed in 0..50 {
        let db = evaluate(&vp, &random_instance(vp.program(), 8, seed));
        clash |= !oracle::holds_fd(&db["students"], &BTreeSet::from([1]), 2);
    }
    ensure!(clash, "oracle never broke {{1}} -> 2 on students");

    let (_, np, mf) = pipeline(&read("shared.dl"))?;
    let out = saturate(&mf, &fd_seeds(&np), &EngineConfig::default());
    let both: Vec<String> = out.on("both").map(|f| f.to_string()).collect();
    ensure!(both == ["fd(both,{1},2,id1[1])"], "both: {both:?}");
    Ok("distinct ids blocked, shared origin propagated".into())
}

fn soundness() -> Outcome {
    let start = Instant::now();
    let mut kinds = BTreeSet::new();
    let (mut checked, mut missed) = (0, 0);
    for seed in 0..500u64 {
        let vp = validate(random_program(seed)).map_err(|e| format!("seed {seed}: {e}"))?;
        let np = normalize(&vp);
        ensure!(np.rules.len() <= 5, "seed {seed}: {} normalized rules", np.rules.len());
        ensure!(
            vp.components().iter().all(|c| c.len() == 1 && !vp.is_recursive(&c[0])),
            "seed {seed} is recursive"
        );
        kinds.extend(np.rules.iter().map(|r| r.kind));
        let mf = extract(&np).map_err(|e| e.to_string())?;
        let out = saturate(&mf, &fd_seeds(&np), &EngineConfig::default());
        let config = SweepConfig {
            trials: 20,
            size: 8,
            seed,
            report_missed: seed % 10 == 0,
        };
        let report = soundness_sweep(&np.validated(), &out, &config).map_err(|v| format!("seed {seed}: {v}"))?;
        checked += report.checked;
        missed += report.missed.len();
    }
    ensure!(kinds.len() == 8, "operators reached: {kinds:?}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "500 programs x 20 instances, {checked} dependency checks, 0 violations, {missed} missed (informative), {elapsed:.1?}"
    ))
}

fn dependency_queries() -> Outcome {
    let (_, _, mf) = pipeline(&read("functions.dl"))?;
    let paths = paths(&mf);
    ensure!(paths.contains("b3", "b2"), "no path from b2 to b3");
    let changed = depgraph::query(&mf, &paths, &Query::BaseChanges(Some("f1".into())));
    ensure!(changed == vec![vec!["b3".to_string()]], "base_changes(f1) = {changed:?}");
    let views = depgraph::query(&mf, &paths, &Query::IdbFuncPred);
    ensure!(views.contains(&vec!["v3".to_string()]), "idb_func_pred = {views:?}");
    Ok("path(b3,b2), base_changes(f1) = {b3}, v3 calls a function".into())
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_schemalyze"))
        .args(args)
        .env_remove("SCHEMALYZE_DEPTH_CAP")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "{args:?} exited with {}", out.status);
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let mut files: Vec<PathBuf> = std::fs::read_dir(golden(""))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dl"))
        .collect();
    files.sort();
    let commands: [&[&str]; 12] = [
        &["normalize"],
        &["normalize", "--json"],
        &["facts"],
        &["facts", "--json"],
        &["graph"],
        &["graph", "--dot"],
        &["graph", "--query", "tbl_dep", "--json"],
        &["fds", "--show-ids", "--potential"],
        &["fds", "--json", "--potential"],
        &["check", "--trials", "10"],
        &["check", "--trials", "10", "--json"],
        &["all", "--trials", "10"],
    ];
    let mut runs = 0;
    for file in &files {
        for cmd in commands {
            let mut args: Vec<&str> = cmd.to_vec();
            args.insert(1, file.to_str().unwrap());
            let first = run_cli(&args)?;
            let second = run_cli(&args)?;
            ensure!(first == second, "{args:?} differs between runs");
            runs += 1;
        }
    }
    ensure!(files.len() >= 5, "corpus has {} files", files.len());
    Ok(format!("{runs} invocations over {} files repeated byte-identically", files.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("example rule normalizes into three operators", example_normalization),
        ("position facts of the example", pos_facts),
        ("example saturation table", example_saturation),
        ("ancestor recursion", ancestor),
        ("union needs a common origin", unions),
        ("soundness sweep", soundness),
        ("dependency graph queries", dependency_queries),
        ("deterministic output", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
