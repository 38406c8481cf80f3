//! JSON shapes for every subcommand.

use serde_json::{json, Map, Value};

use schemalyze_core::depgraph::PathRelation;
use schemalyze_core::fd::Diagnostic;
use schemalyze_core::oracle::{SoundnessViolation, SweepReport};
use schemalyze_core::{Constant, Fd, FdSet, IdTerm, MetaFactBase, NormalProgram, Origin, Query};

pub fn constant(c: &Constant) -> Value {
    match c {
        Constant::Int(i) => json!(i),
        Constant::Str(s) => json!(s),
    }
}

pub fn id_term(id: &IdTerm) -> Value {
    match id {
        IdTerm::Node { origin, children } => {
            let args: Vec<Value> = children.iter().map(id_term).collect();
            match origin {
                Origin::Fd(n) => json!({ "fd": n, "args": args }),
                Origin::Func(f) => json!({ "func": f, "args": args }),
            }
        }
        IdTerm::Col(c) => json!({ "col": c }),
        IdTerm::Const(v) => json!({ "const": constant(v) }),
    }
}

pub fn fd(f: &Fd) -> Value {
    json!({ "pred": f.pred, "lhs": f.lhs, "rhs": f.rhs, "id": id_term(&f.id) })
}

fn diagnostic(d: &Diagnostic) -> Value {
    json!({ "pred": d.pred, "lhs": d.lhs, "rhs": d.rhs, "depth": d.depth, "size": d.size })
}

pub fn fd_set(set: &FdSet, potential: bool) -> Value {
    let mut out = Map::new();
    out.insert("fds".into(), set.facts.iter().map(fd).collect());
    if potential {
        out.insert("pfds".into(), set.potential.iter().map(fd).collect());
    }
    out.insert("dropped".into(), set.diagnostics.iter().map(diagnostic).collect());
    Value::Object(out)
}

pub fn normal_program(np: &NormalProgram) -> Value {
    let rules: Vec<Value> = np
        .rules
        .iter()
        .map(|r| {
            let mut o = json!({
                "head": r.head.predicate,
                "kind": r.kind.name(),
                "rule": r.to_string(),
            });
            if let Some(g) = np.generated.get(&r.head.predicate) {
                o["generated_from"] = json!(g.source_head);
            }
            o
        })
        .collect();
    json!({ "rules": rules })
}

/// Each relation as an array of argument tuples.
pub fn meta_facts(mf: &MetaFactBase) -> Value {
    let s = |x: &String| json!(x);
    let mut out = Map::new();
    let mut put = |name: &str, rows: Vec<Value>| {
        out.insert(name.into(), Value::Array(rows));
    };
    put("base", mf.base.iter().map(|(p, a)| json!([p, a])).collect());
    put("derived", mf.derived.iter().map(|(p, a)| json!([p, a])).collect());
    put("attr", mf.attr.iter().map(|(p, i, n)| json!([p, i, n])).collect());
    put("func", mf.func.iter().map(|(f, a)| json!([f, a])).collect());
    put("ftype", mf.ftype.iter().map(|(f, t)| json!([f, t])).collect());
    put(
        "call",
        mf.call
            .iter()
            .map(|c| json!([c.view, c.inputs, c.output, c.function]))
            .collect(),
    );
    put("dep", mf.dep.iter().map(|(t, f)| json!([t, f])).collect());
    put("rel", mf.rel.iter().map(|(h, b, k)| json!([h, b, k.name()])).collect());
    put("neg", mf.neg.iter().map(|(h, b)| json!([s(h), s(b)])).collect());
    put("pos", mf.pos.iter().map(|(h, b, i, j)| json!([h, b, i, j])).collect());
    put("eq", mf.eq.iter().map(|(p, i, j)| json!([p, i, j])).collect());
    put("const", mf.consts.iter().map(|(p, i, v)| json!([p, i, constant(v)])).collect());
    put("rec", mf.rec.iter().map(|(p, q, r)| json!([p, q, r])).collect());
    Value::Object(out)
}

pub fn path_relation(paths: &PathRelation) -> Value {
    paths.closure.iter().map(|(t, f)| json!([t, f])).collect()
}

pub fn query_rows(q: &Query, rows: &[Vec<String>]) -> Value {
    json!({ "query": q.name(), "columns": q.columns(), "rows": rows })
}

pub fn sweep_report(report: &SweepReport) -> Value {
    let missed: Vec<Value> = report
        .missed
        .iter()
        .map(|m| json!({ "pred": m.pred, "lhs": m.lhs, "rhs": m.rhs, "kind": m.kind.name() }))
        .collect();
    json!({
        "trials": report.trials,
        "checked": report.checked,
        "skipped": report.skipped,
        "violations": [],
        "missed": missed,
    })
}

pub fn violation(v: &SoundnessViolation) -> Value {
    let edb: Map<String, Value> = v
        .edb
        .iter()
        .map(|(name, rel)| {
            let rows: Vec<Value> = rel.iter().map(|t| t.iter().map(constant).collect()).collect();
            (name.clone(), Value::Array(rows))
        })
        .collect();
    let derived: Vec<Value> = v.relation.iter().map(|t| t.iter().map(constant).collect()).collect();
    json!({
        "fd": fd(&v.fd),
        "trial": v.trial,
        "seed": v.seed,
        "edb": edb,
        "derived": derived,
    })
}
