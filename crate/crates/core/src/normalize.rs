//! Rewriting rules into normal form, where each rule applies exactly one
//! relational operator.
//!
//! A general rule is decomposed bottom-up: binary joins (left-associated),
//! one selection carrying every condition already bound by the joins, an
//! extension for columns bound only by equalities, leftover conditions,
//! negated atoms, and finally a projection onto the head. Predicates
//! with several rules become left-associated chains of binary unions, with
//! recursive operands placed last.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::ir::{Atom, Condition, Program, Rule, SourceSpan, Term};
use crate::validate::{validate, ValidatedProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperatorKind {
    Projection,
    Extension,
    Selection,
    Product,
    Join,
    Union,
    Intersection,
    Negation,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 8] = [
        OperatorKind::Projection,
        OperatorKind::Extension,
        OperatorKind::Selection,
        OperatorKind::Product,
        OperatorKind::Join,
        OperatorKind::Union,
        OperatorKind::Intersection,
        OperatorKind::Negation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Projection => "projection",
            OperatorKind::Extension => "extension",
            OperatorKind::Selection => "selection",
            OperatorKind::Product => "product",
            OperatorKind::Join => "join",
            OperatorKind::Union => "union",
            OperatorKind::Intersection => "intersection",
            OperatorKind::Negation => "negation",
        }
    }

    /// Operators whose head columns coincide with the body columns.
    pub fn preserves_positions(self) -> bool {
        matches!(
            self,
            OperatorKind::Selection
                | OperatorKind::Extension
                | OperatorKind::Negation
                | OperatorKind::Intersection
        )
    }

    /// Operators that need `pos` facts to map body columns to head columns.
    pub fn maps_positions(self) -> bool {
        matches!(
            self,
            OperatorKind::Projection | OperatorKind::Product | OperatorKind::Join
        )
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalRule {
    pub kind: OperatorKind,
    pub head: Atom,
    pub body: Vec<Atom>,
    pub conditions: Vec<Condition>,
    pub origin: Option<SourceSpan>,
}

impl NormalRule {
    pub fn to_rule(&self) -> Rule {
        Rule {
            head: self.head.clone(),
            body: self.body.clone(),
            conditions: self.conditions.clone(),
            span: self.origin,
        }
    }
}

impl fmt::Display for NormalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_rule().fmt(f)
    }
}

/// Where a generated predicate came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedFrom {
    pub source_head: String,
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalProgram {
    pub rules: Vec<NormalRule>,
    pub generated: BTreeMap<String, GeneratedFrom>,
    declarations: Program,
    arities: BTreeMap<String, usize>,
}

impl NormalProgram {
    /// The declarations carried over from the source program.
    pub fn declarations(&self) -> &Program {
        &self.declarations
    }

    pub fn arity(&self, predicate: &str) -> Option<usize> {
        self.arities.get(predicate).copied()
    }

    pub fn arities(&self) -> &BTreeMap<String, usize> {
        &self.arities
    }

    pub fn is_generated(&self, predicate: &str) -> bool {
        self.generated.contains_key(predicate)
    }

    /// The normal form as an ordinary program (valid surface syntax).
    pub fn to_program(&self) -> Program {
        Program {
            rules: self.rules.iter().map(NormalRule::to_rule).collect(),
            ..self.declarations.clone()
        }
    }

    /// Validates the normal form; normalization preserves validity.
    pub fn validated(&self) -> ValidatedProgram {
        validate(self.to_program()).expect("normal form of a valid program is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule `{rule}` matches no operator template")]
pub struct UnclassifiableRule {
    pub rule: String,
}

fn distinct_vars(atom: &Atom) -> Option<Vec<&str>> {
    let vars = atom.var_tuple()?;
    let set: BTreeSet<&str> = vars.iter().copied().collect();
    (set.len() == vars.len()).then_some(vars)
}

/// Determines the operator a rule realizes. `rules_for_head` is the number
/// of rules sharing the rule's head predicate; exactly two single-atom
/// rules with identical head and body tuples form a union.
pub fn classify(rule: &Rule, rules_for_head: usize) -> Result<OperatorKind, UnclassifiableRule> {
    let fail = || UnclassifiableRule {
        rule: rule.to_string(),
    };
    if rule.head.negated {
        return Err(fail());
    }
    let head = distinct_vars(&rule.head).ok_or_else(fail)?;
    let body: Vec<Vec<&str>> = rule
        .body
        .iter()
        .map(distinct_vars)
        .collect::<Option<_>>()
        .ok_or_else(fail)?;
    let conds = &rule.conditions;

    match (rule.body.as_slice(), body.as_slice()) {
        ([atom], [vars]) if !atom.negated => {
            let body_set: BTreeSet<&str> = vars.iter().copied().collect();
            if conds.is_empty() {
                if rules_for_head == 2 && head == *vars {
                    return Ok(OperatorKind::Union);
                }
                if rules_for_head == 1 && head.iter().all(|v| body_set.contains(v)) {
                    return Ok(OperatorKind::Projection);
                }
                return Err(fail());
            }
            if rules_for_head != 1 {
                return Err(fail());
            }
            if is_extension(&head, vars, conds) {
                return Ok(OperatorKind::Extension);
            }
            if head == *vars && conds.iter().all(|c| c.vars().iter().all(|v| body_set.contains(v))) {
                return Ok(OperatorKind::Selection);
            }
            Err(fail())
        }
        ([a, b], [va, vb]) => {
            if rules_for_head != 1 || a.negated || !conds.is_empty() || a.predicate == b.predicate {
                return Err(fail());
            }
            if b.negated {
                return if va == vb && head == *va {
                    Ok(OperatorKind::Negation)
                } else {
                    Err(fail())
                };
            }
            if va == vb {
                return if head == *va {
                    Ok(OperatorKind::Intersection)
                } else {
                    Err(fail())
                };
            }
            let sa: BTreeSet<&str> = va.iter().copied().collect();
            let sb: BTreeSet<&str> = vb.iter().copied().collect();
            if sa.is_disjoint(&sb) {
                let concat: Vec<&str> = va.iter().chain(vb.iter()).copied().collect();
                return if head == concat {
                    Ok(OperatorKind::Product)
                } else {
                    Err(fail())
                };
            }
            let union: BTreeSet<&str> = sa.union(&sb).copied().collect();
            let hs: BTreeSet<&str> = head.iter().copied().collect();
            if hs == union {
                Ok(OperatorKind::Join)
            } else {
                Err(fail())
            }
        }
        _ => Err(fail()),
    }
}

fn is_extension(head: &[&str], body: &[&str], conds: &[Condition]) -> bool {
    if head.len() <= body.len() || head[..body.len()] != *body {
        return false;
    }
    let new: BTreeSet<&str> = head[body.len()..].iter().copied().collect();
    let body_set: BTreeSet<&str> = body.iter().copied().collect();
    if conds.len() != new.len() {
        return false;
    }
    let mut bound = BTreeSet::new();
    for c in conds {
        let target = match c {
            Condition::VarEq(a, b) if new.contains(a.as_str()) && body_set.contains(b.as_str()) => a,
            Condition::VarEq(a, b) if new.contains(b.as_str()) && body_set.contains(a.as_str()) => b,
            Condition::ConstEq(v, _) if new.contains(v.as_str()) => v,
            _ => return false,
        };
        if !bound.insert(target.as_str()) {
            return false;
        }
    }
    bound.len() == new.len()
}

/// Generates fresh predicate names `<head>__n<k>` from one global counter.
struct Namer {
    used: BTreeSet<String>,
    counter: usize,
}

impl Namer {
    fn fresh(&mut self, source_head: &str) -> String {
        loop {
            self.counter += 1;
            let name = format!("{source_head}__n{}", self.counter);
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

struct VarGen {
    used: BTreeSet<String>,
    counter: usize,
}

impl VarGen {
    fn for_rule(rule: &Rule) -> Self {
        let mut used = BTreeSet::new();
        for a in core::iter::once(&rule.head).chain(&rule.body) {
            used.extend(a.vars().map(String::from));
        }
        for c in &rule.conditions {
            used.extend(c.vars().into_iter().map(String::from));
        }
        VarGen { used, counter: 0 }
    }

    fn fresh(&mut self) -> String {
        loop {
            self.counter += 1;
            let v = format!("V{}", self.counter);
            if self.used.insert(v.clone()) {
                return v;
            }
        }
    }
}

/// A relation produced so far while decomposing one rule.
#[derive(Clone)]
struct Rel {
    pred: String,
    cols: Vec<String>,
}

impl Rel {
    fn atom(&self) -> Atom {
        Atom::with_vars(&self.pred, &self.cols)
    }
}

const TEMP: char = '#';

/// Decomposes a single rule. Intermediate relations get temporary names
/// that are replaced by global fresh names once the whole rule is built.
struct Builder {
    rules: Vec<NormalRule>,
    temps: usize,
    origin: Option<SourceSpan>,
    vars: VarGen,
}

impl Builder {
    fn temp(&mut self) -> String {
        self.temps += 1;
        format!("{TEMP}{}", self.temps)
    }

    fn emit(&mut self, kind: OperatorKind, cols: Vec<String>, body: Vec<Atom>, conditions: Vec<Condition>) -> Rel {
        let pred = self.temp();
        self.rules.push(NormalRule {
            kind,
            head: Atom::with_vars(&pred, &cols),
            body,
            conditions,
            origin: self.origin,
        });
        Rel { pred, cols }
    }

    /// Copies a relation under a new name (identity projection).
    fn copy(&mut self, rel: &Rel) -> Rel {
        self.emit(OperatorKind::Projection, rel.cols.clone(), alloc::vec![rel.atom()], Vec::new())
    }

    /// Rewrites an atom's arguments into distinct variables, returning the
    /// equalities that restore the original constants and repeats.
    fn flatten(&mut self, atom: &Atom) -> (Vec<String>, Vec<Condition>) {
        let mut cols: Vec<String> = Vec::new();
        let mut conds = Vec::new();
        for t in &atom.args {
            match t {
                Term::Var(v) if !cols.contains(v) => cols.push(v.clone()),
                Term::Var(v) => {
                    let w = self.vars.fresh();
                    conds.push(Condition::VarEq(w.clone(), v.clone()));
                    cols.push(w);
                }
                Term::Const(c) => {
                    let w = self.vars.fresh();
                    conds.push(Condition::ConstEq(w.clone(), c.clone()));
                    cols.push(w);
                }
            }
        }
        (cols, conds)
    }

    fn join(&mut self, cur: Rel, next: Rel) -> Rel {
        let next = if next.pred == cur.pred { self.copy(&next) } else { next };
        if next.cols == cur.cols {
            let cols = cur.cols.clone();
            return self.emit(OperatorKind::Intersection, cols, alloc::vec![cur.atom(), next.atom()], Vec::new());
        }
        let shared = next.cols.iter().any(|v| cur.cols.contains(v));
        let mut cols = cur.cols.clone();
        cols.extend(next.cols.iter().filter(|v| !cur.cols.contains(v)).cloned());
        let kind = if shared { OperatorKind::Join } else { OperatorKind::Product };
        self.emit(kind, cols, alloc::vec![cur.atom(), next.atom()], Vec::new())
    }

    /// `cur` minus the tuples matching `atom` on the shared variables.
    fn subtract(&mut self, cur: Rel, atom: &Atom) -> Rel {
        let (nargs, ext) = self.flatten(atom);
        let target = Atom::with_vars(&atom.predicate, &nargs).negate();
        if ext.is_empty() && nargs == cur.cols {
            let cur = if cur.pred == atom.predicate { self.copy(&cur) } else { cur };
            let cols = cur.cols.clone();
            return self.emit(OperatorKind::Negation, cols, alloc::vec![cur.atom(), target], Vec::new());
        }
        let covers = cur.cols.iter().all(|v| nargs.contains(v));
        let mut side = cur.clone();
        if !ext.is_empty() {
            let mut cols = cur.cols.clone();
            cols.extend(nargs.iter().filter(|v| !cur.cols.contains(v)).cloned());
            side = self.emit(OperatorKind::Extension, cols, alloc::vec![cur.atom()], ext);
        }
        if side.cols != nargs {
            side = self.emit(OperatorKind::Projection, nargs.clone(), alloc::vec![side.atom()], Vec::new());
        }
        let kept = self.emit(OperatorKind::Negation, nargs.clone(), alloc::vec![side.atom(), target], Vec::new());
        if covers {
            kept
        } else {
            let mut cols = cur.cols.clone();
            cols.extend(nargs.iter().filter(|v| !cur.cols.contains(v)).cloned());
            self.emit(OperatorKind::Join, cols, alloc::vec![cur.atom(), kept.atom()], Vec::new())
        }
    }
}

/// Decomposes `rule` so that its final rule defines `target`. Returns the
/// rules with temporary names still in place, the defining rule last.
fn compile(rule: &Rule, target: &str, non_recursive_first: impl Fn(&Atom) -> bool) -> Builder {
    let mut b = Builder {
        rules: Vec::new(),
        temps: 0,
        origin: rule.span,
        vars: VarGen::for_rule(rule),
    };
    let (head_vars, mut pending) = b.flatten(&rule.head);

    let mut positives: Vec<&Atom> = rule.positive_atoms().collect();
    if rule.negative_atoms().next().is_some() {
        // keeps negated parts out of recursive cycles
        positives.sort_by_key(|a| !non_recursive_first(a));
    }
    let mut atoms = positives.into_iter();
    let first = atoms.next().expect("validated rules have a positive atom");
    let mut body_conds = Vec::new();
    let (cols, conds) = b.flatten(first);
    body_conds.extend(conds);
    let mut cur = Rel {
        pred: first.predicate.clone(),
        cols,
    };
    let mut produced = false;
    for atom in atoms {
        let (cols, conds) = b.flatten(atom);
        body_conds.extend(conds);
        cur = b.join(
            cur,
            Rel {
                pred: atom.predicate.clone(),
                cols,
            },
        );
        produced = true;
    }

    // Selection over everything the joins bind.
    let mut remaining: Vec<Condition> = rule.conditions.iter().cloned().chain(body_conds).collect();
    remaining.append(&mut pending);
    let (now, later): (Vec<Condition>, Vec<Condition>) = remaining
        .into_iter()
        .partition(|c| c.vars().iter().all(|v| cur.cols.iter().any(|x| x == v)));
    let remaining = later;
    if !now.is_empty() {
        let cols = cur.cols.clone();
        cur = b.emit(OperatorKind::Selection, cols, alloc::vec![cur.atom()], now);
        produced = true;
    }

    // Extension: bind head-only variables through equality chains.
    let mut binding: BTreeMap<String, Condition> = BTreeMap::new();
    let mut used = alloc::vec![false; remaining.len()];
    loop {
        let mut progress = false;
        for (i, c) in remaining.iter().enumerate() {
            if used[i] {
                continue;
            }
            let known = |v: &str| cur.cols.iter().any(|x| x == v) || binding.contains_key(v);
            let resolve = |v: &str, new: &str| -> Condition {
                match binding.get(v) {
                    Some(Condition::VarEq(_, x)) => Condition::VarEq(new.into(), x.clone()),
                    Some(Condition::ConstEq(_, k)) => Condition::ConstEq(new.into(), k.clone()),
                    _ => Condition::VarEq(new.into(), v.into()),
                }
            };
            let bound = match c {
                Condition::VarEq(a, x) if known(x) && !known(a) => Some((a.clone(), resolve(x, a))),
                Condition::VarEq(x, a) if known(x) && !known(a) => Some((a.clone(), resolve(x, a))),
                Condition::ConstEq(v, k) if !known(v) => Some((v.clone(), Condition::ConstEq(v.clone(), k.clone()))),
                _ => None,
            };
            if let Some((v, cond)) = bound {
                binding.insert(v, cond);
                used[i] = true;
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    let remaining: Vec<Condition> = remaining
        .into_iter()
        .zip(used)
        .filter_map(|(c, u)| (!u).then_some(c))
        .collect();
    let mut needed: Vec<String> = Vec::new();
    for v in head_vars
        .iter()
        .map(String::as_str)
        .chain(remaining.iter().flat_map(|c| c.vars()))
        .chain(rule.negative_atoms().flat_map(Atom::vars))
    {
        if !cur.cols.iter().any(|x| x == v) && !needed.iter().any(|x| x == v) {
            needed.push(v.into());
        }
    }
    if !needed.is_empty() {
        let mut cols = cur.cols.clone();
        cols.extend(needed.iter().cloned());
        let conds = needed
            .iter()
            .map(|v| binding.get(v).cloned().expect("range restriction binds every head variable"))
            .collect();
        cur = b.emit(OperatorKind::Extension, cols, alloc::vec![cur.atom()], conds);
        produced = true;
    }
    if !remaining.is_empty() {
        let cols = cur.cols.clone();
        cur = b.emit(OperatorKind::Selection, cols, alloc::vec![cur.atom()], remaining);
        produced = true;
    }
    for atom in rule.negative_atoms() {
        cur = b.subtract(cur, atom);
        produced = true;
    }

    if head_vars != cur.cols || !produced {
        cur = b.emit(OperatorKind::Projection, head_vars, alloc::vec![cur.atom()], Vec::new());
    }
    let last = b.rules.last_mut().expect("at least one rule");
    debug_assert_eq!(last.head.predicate, cur.pred);
    last.head.predicate = target.into();
    b
}

fn union_operand(rule: &Rule) -> Option<&str> {
    let [atom] = rule.body.as_slice() else {
        return None;
    };
    let vars = distinct_vars(&rule.head)?;
    (rule.conditions.is_empty()
        && !atom.negated
        && atom.predicate != rule.head.predicate
        && atom.var_tuple().as_deref() == Some(vars.as_slice()))
    .then_some(atom.predicate.as_str())
}

/// Rewrites a validated program into normal form.
pub fn normalize(program: &ValidatedProgram) -> NormalProgram {
    let source = program.program();
    let mut namer = Namer {
        used: program.arities().keys().cloned().collect(),
        counter: 0,
    };
    let mut out: Vec<NormalRule> = Vec::new();
    let mut generated: BTreeMap<String, GeneratedFrom> = BTreeMap::new();
    let mut arities = program.arities().clone();

    let in_component = |head: &str, atom: &Atom| program.component_of(head) == program.component_of(&atom.predicate);

    // Names temporaries top-down and appends the rules in that order.
    let finish = |b: Builder,
                      source_head: &str,
                      namer: &mut Namer,
                      out: &mut Vec<NormalRule>,
                      generated: &mut BTreeMap<String, GeneratedFrom>,
                      arities: &mut BTreeMap<String, usize>| {
        let mut names: BTreeMap<String, String> = BTreeMap::new();
        let mut rules = b.rules;
        rules.reverse();
        for r in &rules {
            for a in &r.body {
                if a.predicate.starts_with(TEMP) && !names.contains_key(&a.predicate) {
                    let fresh = namer.fresh(source_head);
                    generated.insert(
                        fresh.clone(),
                        GeneratedFrom {
                            source_head: source_head.into(),
                            span: b.origin,
                        },
                    );
                    names.insert(a.predicate.clone(), fresh);
                }
            }
        }
        for mut r in rules {
            for a in core::iter::once(&mut r.head).chain(r.body.iter_mut()) {
                if let Some(n) = names.get(&a.predicate) {
                    a.predicate = n.clone();
                }
            }
            arities.insert(r.head.predicate.clone(), r.head.arity());
            out.push(r);
        }
    };

    for head in program.derived_predicates() {
        let rules: Vec<&Rule> = source.rules.iter().filter(|r| r.head.predicate == head).collect();
        let non_rec = |a: &Atom| !in_component(head, a);
        if let [rule] = rules.as_slice() {
            let b = compile(rule, head, non_rec);
            finish(b, head, &mut namer, &mut out, &mut generated, &mut arities);
            continue;
        }

        let mut ordered = rules.clone();
        ordered.sort_by_key(|r| r.body.iter().any(|a| in_component(head, a)));

        let arity = program.arity(head).expect("validated arity");
        let canonical: Vec<String> = ordered
            .iter()
            .find_map(|r| union_operand(r).map(|_| r))
            .or_else(|| ordered.iter().find(|r| distinct_vars(&r.head).is_some()))
            .map(|r| r.head.vars().map(String::from).collect())
            .unwrap_or_else(|| (1..=arity).map(|i| format!("V{i}")).collect());

        struct Operand {
            pred: String,
            rule: Option<NormalRule>,
        }
        let mut operands: Vec<Operand> = Vec::new();
        for r in &ordered {
            match union_operand(r) {
                Some(p) if !operands.iter().any(|o| o.pred == p) => operands.push(Operand {
                    pred: p.into(),
                    rule: Some(NormalRule {
                        kind: OperatorKind::Union,
                        head: r.head.clone(),
                        body: r.body.clone(),
                        conditions: Vec::new(),
                        origin: r.span,
                    }),
                }),
                _ => {
                    let name = namer.fresh(head);
                    generated.insert(
                        name.clone(),
                        GeneratedFrom {
                            source_head: head.into(),
                            span: r.span,
                        },
                    );
                    let b = compile(r, &name, non_rec);
                    finish(b, head, &mut namer, &mut out, &mut generated, &mut arities);
                    operands.push(Operand { pred: name, rule: None });
                }
            }
        }

        let union_rule = |h: &str, o: &Operand| -> NormalRule {
            match &o.rule {
                Some(r) if r.head.predicate == h => r.clone(),
                _ => NormalRule {
                    kind: OperatorKind::Union,
                    head: Atom::with_vars(h, &canonical),
                    body: alloc::vec![Atom::with_vars(&o.pred, &canonical)],
                    conditions: Vec::new(),
                    origin: None,
                },
            }
        };
        let mut iter = operands.iter();
        let mut acc = iter.next().expect("two or more rules");
        let rest: Vec<&Operand> = iter.collect();
        let mut chained: Vec<Operand> = Vec::new();
        for (i, o) in rest.iter().enumerate() {
            let h = if i + 1 == rest.len() {
                head.to_string()
            } else {
                let name = namer.fresh(head);
                generated.insert(
                    name.clone(),
                    GeneratedFrom {
                        source_head: head.into(),
                        span: None,
                    },
                );
                arities.insert(name.clone(), arity);
                name
            };
            out.push(union_rule(&h, acc));
            out.push(union_rule(&h, o));
            chained.push(Operand { pred: h, rule: None });
            acc = chained.last().unwrap();
        }
    }

    NormalProgram {
        rules: out,
        generated,
        declarations: source.declarations_only(),
        arities,
    }
}
