//! Reachability over `dep` and the built-in schema queries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::metafacts::MetaFactBase;

/// Non-reflexive transitive closure of `dep`, as (to, from) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathRelation {
    pub closure: BTreeSet<(String, String)>,
}

impl PathRelation {
    pub fn contains(&self, to: &str, from: &str) -> bool {
        self.closure.contains(&(to.to_string(), from.to_string()))
    }

    /// Everything `to` transitively depends on.
    pub fn sources_of<'a>(&'a self, to: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.closure
            .range((to.to_string(), String::new())..)
            .take_while(move |(t, _)| t == to)
            .map(|(_, f)| f.as_str())
    }
}

/// Semi-naive closure of a (to, from) edge set.
pub fn transitive_closure(edges: &BTreeSet<(String, String)>) -> BTreeSet<(String, String)> {
    let mut by_to: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (t, f) in edges {
        by_to.entry(t.as_str()).or_default().push(f.as_str());
    }
    let mut all: BTreeSet<(String, String)> = edges.clone();
    let mut delta: BTreeSet<(String, String)> = edges.clone();
    while !delta.is_empty() {
        let mut next = BTreeSet::new();
        // path(T,F) <- path(T,M), dep(M,F)
        for (t, m) in &delta {
            for f in by_to.get(m.as_str()).into_iter().flatten() {
                let pair = (t.clone(), (*f).to_string());
                if !all.contains(&pair) {
                    next.insert(pair);
                }
            }
        }
        all.extend(next.iter().cloned());
        delta = next;
    }
    all
}

pub fn paths(mf: &MetaFactBase) -> PathRelation {
    PathRelation {
        closure: transitive_closure(&mf.dep),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    AttrDups,
    IdbFuncPred,
    BaseChanges(Option<String>),
    TblDep,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown query `{0}` (expected attr_dups, idb_func_pred, base_changes or tbl_dep)")]
pub struct UnknownQuery(pub String);

impl Query {
    pub fn parse(name: &str, arg: Option<&str>) -> Result<Query, UnknownQuery> {
        match name {
            "attr_dups" => Ok(Query::AttrDups),
            "idb_func_pred" => Ok(Query::IdbFuncPred),
            "base_changes" => Ok(Query::BaseChanges(arg.map(String::from))),
            "tbl_dep" => Ok(Query::TblDep),
            other => Err(UnknownQuery(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Query::AttrDups => "attr_dups",
            Query::IdbFuncPred => "idb_func_pred",
            Query::BaseChanges(_) => "base_changes",
            Query::TblDep => "tbl_dep",
        }
    }

    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Query::AttrDups => &["r1", "r2", "name"],
            Query::IdbFuncPred => &["view"],
            Query::BaseChanges(Some(_)) => &["base"],
            Query::BaseChanges(None) => &["function", "base"],
            Query::TblDep => &["a", "b"],
        }
    }
}

/// Rows of a built-in query, sorted lexicographically.
pub fn query(mf: &MetaFactBase, paths: &PathRelation, q: &Query) -> Vec<Vec<String>> {
    let funcs: BTreeSet<&str> = mf.func.iter().map(|(f, _)| f.as_str()).collect();
    let bases: BTreeSet<&str> = mf.base.iter().map(|(b, _)| b.as_str()).collect();
    let mut rows: BTreeSet<Vec<String>> = BTreeSet::new();
    match q {
        Query::AttrDups => {
            for (r1, _, n1) in &mf.attr {
                for (r2, _, n2) in &mf.attr {
                    if n1 == n2 && r1 != r2 {
                        rows.insert(alloc::vec![r1.clone(), r2.clone(), n1.clone()]);
                    }
                }
            }
        }
        Query::IdbFuncPred => {
            for c in &mf.call {
                if mf.derived.iter().any(|(d, _)| *d == c.view) {
                    rows.insert(alloc::vec![c.view.clone()]);
                }
            }
        }
        Query::BaseChanges(f) => {
            for (b, src) in &paths.closure {
                if bases.contains(b.as_str()) && funcs.contains(src.as_str()) {
                    match f {
                        Some(f) if f == src => {
                            rows.insert(alloc::vec![b.clone()]);
                        }
                        Some(_) => {}
                        None => {
                            rows.insert(alloc::vec![src.clone(), b.clone()]);
                        }
                    }
                }
            }
        }
        Query::TblDep => {
            for (a, f) in &paths.closure {
                if !bases.contains(a.as_str()) || !funcs.contains(f.as_str()) {
                    continue;
                }
                for b in paths.sources_of(f) {
                    if bases.contains(b) {
                        rows.insert(alloc::vec![a.clone(), b.to_string()]);
                    }
                }
            }
        }
    }
    rows.into_iter().collect()
}

/// The dependency graph in DOT syntax, edges pointing from source to dependent.
pub fn to_dot(mf: &MetaFactBase) -> String {
    let mut out = String::from("digraph deps {\n");
    for (b, _) in &mf.base {
        out.push_str(&format!("  \"{b}\" [shape=box];\n"));
    }
    for (f, _) in &mf.func {
        out.push_str(&format!("  \"{f}\" [shape=ellipse, style=dashed];\n"));
    }
    for (t, f) in &mf.dep {
        out.push_str(&format!("  \"{f}\" -> \"{t}\";\n"));
    }
    out.push_str("}\n");
    out
}
