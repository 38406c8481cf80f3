//! Meta-facts describing a normalized program's own structure.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::fd::{Fd, IdTerm, Origin};
use crate::ir::{Condition, Constant};
use crate::normalize::{NormalProgram, OperatorKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetaFactError {
    #[error("recursion through `{predicate}` is not linear: {reason}")]
    NonLinearRecursion { predicate: String, reason: String },
}

/// Call fact: `view` column `output` is computed by `function` from `inputs`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Call {
    pub view: String,
    pub inputs: BTreeSet<usize>,
    pub output: usize,
    pub function: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetaFactBase {
    /// (head, body, operator), one per body atom.
    pub rel: BTreeSet<(String, String, OperatorKind)>,
    /// (head, subtrahend) for every negation rule.
    pub neg: BTreeSet<(String, String)>,
    /// (head, body, head position, body position).
    pub pos: BTreeSet<(String, String, usize, usize)>,
    pub eq: BTreeSet<(String, usize, usize)>,
    pub consts: BTreeSet<(String, usize, Constant)>,
    /// (recursive predicate, base branch, recursive branch).
    pub rec: BTreeSet<(String, String, String)>,
    /// (to, from): `to` depends on `from`.
    pub dep: BTreeSet<(String, String)>,
    pub base: BTreeSet<(String, usize)>,
    pub derived: BTreeSet<(String, usize)>,
    pub attr: BTreeSet<(String, usize, String)>,
    pub func: BTreeSet<(String, usize)>,
    pub ftype: BTreeSet<(String, String)>,
    pub call: BTreeSet<Call>,
}

impl MetaFactBase {
    /// Operator defining `head`, if it is a derived predicate.
    pub fn operator(&self, head: &str) -> Option<OperatorKind> {
        self.rel.iter().find(|(h, _, _)| h == head).map(|(_, _, k)| *k)
    }

    pub fn is_base(&self, pred: &str) -> bool {
        self.base.iter().any(|(b, _)| b == pred)
    }

    pub fn arity(&self, pred: &str) -> Option<usize> {
        self.base
            .iter()
            .chain(&self.derived)
            .find(|(p, _)| p == pred)
            .map(|(_, a)| *a)
    }

    /// Body position to head position map for a position-mapping rule.
    pub fn position_map(&self, head: &str, body: &str) -> BTreeMap<usize, usize> {
        self.pos
            .iter()
            .filter(|(h, b, _, _)| h == head && b == body)
            .map(|(_, _, hp, bp)| (*bp, *hp))
            .collect()
    }

    pub fn union_operands(&self, head: &str) -> Vec<&str> {
        self.rel
            .iter()
            .filter(|(h, _, k)| h == head && *k == OperatorKind::Union)
            .map(|(_, b, _)| b.as_str())
            .collect()
    }

    /// Every fact as a line of Datalog, grouped by relation.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (p, a) in &self.base {
            out.push(format!("base({p},{a})."));
        }
        for (p, a) in &self.derived {
            out.push(format!("derived({p},{a})."));
        }
        for (p, i, n) in &self.attr {
            out.push(format!("attr({p},{i},{}).", Constant::str(n)));
        }
        for (f, a) in &self.func {
            out.push(format!("func({f},{a})."));
        }
        for (f, t) in &self.ftype {
            out.push(format!("ftype({f},{}).", Constant::str(t)));
        }
        for c in &self.call {
            out.push(format!(
                "call({},{},{},{}).",
                c.view,
                set_literal(&c.inputs),
                c.output,
                c.function
            ));
        }
        for (t, f) in &self.dep {
            out.push(format!("dep({t},{f})."));
        }
        for (h, b, k) in &self.rel {
            out.push(format!("rel({h},{b},{k})."));
        }
        for (h, b) in &self.neg {
            out.push(format!("neg({h},{b})."));
        }
        for (h, b, hp, bp) in &self.pos {
            out.push(format!("pos({h},{b},{hp},{bp})."));
        }
        for (p, i, j) in &self.eq {
            out.push(format!("eq({p},{i},{j})."));
        }
        for (p, i, v) in &self.consts {
            out.push(format!("const({p},{i},{v})."));
        }
        for (p, q, r) in &self.rec {
            out.push(format!("rec({p},{q},{r})."));
        }
        out
    }
}

impl fmt::Display for MetaFactBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.lines() {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

pub(crate) fn set_literal(s: &BTreeSet<usize>) -> String {
    let items: Vec<String> = s.iter().map(|i| format!("{i}")).collect();
    format!("{{{}}}", items.join(","))
}

fn position(vars: &[&str], v: &str) -> usize {
    vars.iter().position(|x| *x == v).expect("variable occurs in rule") + 1
}

pub fn extract(np: &NormalProgram) -> Result<MetaFactBase, MetaFactError> {
    let decls = np.declarations();
    let mut mf = MetaFactBase::default();

    for b in &decls.base_decls {
        mf.base.insert((b.name.clone(), b.attributes.len()));
        for (i, n) in b.attributes.iter().enumerate() {
            mf.attr.insert((b.name.clone(), i + 1, n.clone()));
        }
    }
    for r in &np.rules {
        mf.derived.insert((r.head.predicate.clone(), r.head.arity()));
    }
    for (p, a) in &mf.derived {
        let named = decls.view_decls.iter().find(|v| &v.name == p);
        for i in 1..=*a {
            let n = match named {
                Some(v) => v.attributes[i - 1].clone(),
                None => format!("col{i}"),
            };
            mf.attr.insert((p.clone(), i, n));
        }
    }

    for r in &np.rules {
        let head = r.head.predicate.as_str();
        let hv = r.head.var_tuple().expect("normal heads are variable tuples");
        for atom in &r.body {
            mf.rel.insert((head.into(), atom.predicate.clone(), r.kind));
            mf.dep.insert((head.into(), atom.predicate.clone()));
            if atom.negated {
                mf.neg.insert((head.into(), atom.predicate.clone()));
            }
            if r.kind.maps_positions() {
                let bv = atom.var_tuple().expect("normal bodies are variable tuples");
                for (i, v) in hv.iter().enumerate() {
                    if let Some(j) = bv.iter().position(|x| x == v) {
                        mf.pos.insert((head.into(), atom.predicate.clone(), i + 1, j + 1));
                    }
                }
            }
        }
        if matches!(r.kind, OperatorKind::Extension | OperatorKind::Selection) {
            for c in &r.conditions {
                match c {
                    Condition::VarEq(a, b) => {
                        let (pa, pb) = (position(&hv, a), position(&hv, b));
                        // extension: existing column first
                        let (i, j) = if r.kind == OperatorKind::Extension && pa > pb {
                            (pb, pa)
                        } else {
                            (pa, pb)
                        };
                        mf.eq.insert((head.into(), i, j));
                    }
                    Condition::ConstEq(v, k) => {
                        mf.consts.insert((head.into(), position(&hv, v), k.clone()));
                    }
                    Condition::Opaque { .. } => {}
                }
            }
        }
    }

    for f in &decls.func_decls {
        let arity = f.arity.unwrap_or_else(|| {
            decls
                .call_decls
                .iter()
                .find(|c| c.function == f.name)
                .map_or(0, |c| c.inputs.len())
        });
        mf.func.insert((f.name.clone(), arity));
        if let Some(t) = &f.ftype {
            mf.ftype.insert((f.name.clone(), t.clone()));
        }
        for b in &f.writes {
            mf.dep.insert((b.clone(), f.name.clone()));
        }
    }
    for c in &decls.call_decls {
        if !decls.func_decls.iter().any(|f| f.name == c.function) {
            mf.func.insert((c.function.clone(), c.inputs.len()));
        }
        mf.call.insert(Call {
            view: c.view.clone(),
            inputs: c.inputs.clone(),
            output: c.output,
            function: c.function.clone(),
        });
        mf.dep.insert((c.function.clone(), c.view.clone()));
    }
    for d in &decls.dep_decls {
        mf.dep.insert((d.to.clone(), d.from.clone()));
    }

    mf.rec = recursion_facts(np)?;
    Ok(mf)
}

fn recursion_facts(np: &NormalProgram) -> Result<BTreeSet<(String, String, String)>, MetaFactError> {
    let vp = np.validated();
    let mut out = BTreeSet::new();
    for comp in vp.components() {
        if !vp.is_recursive(&comp[0]) {
            continue;
        }
        let inside = |p: &str| comp.iter().any(|c| c == p);
        let rules: Vec<_> = np.rules.iter().filter(|r| inside(&r.head.predicate)).collect();
        if let Some(r) = rules
            .iter()
            .find(|r| r.body.iter().filter(|a| inside(&a.predicate)).count() > 1)
        {
            return Err(MetaFactError::NonLinearRecursion {
                predicate: r.head.predicate.clone(),
                reason: "a rule references the recursive component twice".into(),
            });
        }
        let unions: BTreeSet<&str> = rules
            .iter()
            .filter(|r| r.kind == OperatorKind::Union)
            .map(|r| r.head.predicate.as_str())
            .collect();
        if unions.len() > 1 {
            return Err(MetaFactError::NonLinearRecursion {
                predicate: comp[0].clone(),
                reason: format!("the cycle spans {} unions", unions.len()),
            });
        }
        let Some(p) = unions.first() else { continue };
        let operands: Vec<&str> = rules
            .iter()
            .filter(|r| r.head.predicate == *p)
            .map(|r| r.body[0].predicate.as_str())
            .collect();
        let (rec, base): (Vec<&str>, Vec<&str>) = operands.into_iter().partition(|o| inside(o));
        match (base.as_slice(), rec.as_slice()) {
            ([q], [r]) => {
                out.insert(((*p).into(), (*q).into(), (*r).into()));
            }
            _ => {
                return Err(MetaFactError::NonLinearRecursion {
                    predicate: (*p).into(),
                    reason: "both union operands are recursive".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Seed dependencies from the `fd` declarations, numbered in order from 1.
pub fn fd_seeds(np: &NormalProgram) -> BTreeSet<Fd> {
    np.declarations()
        .fd_decls
        .iter()
        .enumerate()
        .map(|(i, d)| Fd {
            pred: d.predicate.clone(),
            lhs: d.lhs.clone(),
            rhs: d.rhs,
            id: IdTerm::Node {
                origin: Origin::Fd(i + 1),
                children: d.lhs.iter().map(|a| IdTerm::Col(*a)).collect(),
            },
        })
        .collect()
}
