//! Structural checks that turn a parsed [`Program`] into a [`ValidatedProgram`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::strongly_connected;
use crate::ir::{Condition, Program, Rule, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("`{predicate}` used with {found} arguments, expected {expected} (in {context})")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
        context: String,
        span: Option<SourceSpan>,
    },
    #[error("variable `{variable}` is not range restricted in `{rule}`")]
    UnrangeRestrictedVariable {
        variable: String,
        rule: String,
        span: Option<SourceSpan>,
    },
    #[error("column {column} is out of bounds for `{predicate}` of arity {arity} (in {context})")]
    FdOutOfBounds {
        predicate: String,
        column: usize,
        arity: usize,
        context: String,
        span: Option<SourceSpan>,
    },
    #[error("invalid dependency declaration `{context}`: {reason}")]
    InvalidFd {
        context: String,
        reason: &'static str,
        span: Option<SourceSpan>,
    },
    #[error("program is not stratifiable: `{predicate}` depends negatively on `{through}` within a recursive cycle")]
    NonStratifiable {
        predicate: String,
        through: String,
        span: Option<SourceSpan>,
    },
    #[error("base table `{predicate}` declared more than once")]
    DuplicateBaseDecl {
        predicate: String,
        span: Option<SourceSpan>,
    },
    #[error("predicate `{predicate}` is neither a base table nor defined by a rule (in {context})")]
    UndefinedPredicate {
        predicate: String,
        context: String,
        span: Option<SourceSpan>,
    },
    #[error("rule `{rule}` defines base table `{predicate}`")]
    BaseHead {
        predicate: String,
        rule: String,
        span: Option<SourceSpan>,
    },
    #[error("rule `{rule}` has no positive body atom")]
    NoPositiveAtom { rule: String, span: Option<SourceSpan> },
    #[error("negated atom without variables in `{rule}`")]
    GroundNegation { rule: String, span: Option<SourceSpan> },
    #[error("invalid condition `{condition}` in `{rule}`")]
    InvalidCondition {
        condition: String,
        rule: String,
        span: Option<SourceSpan>,
    },
    #[error("function `{name}` declared with conflicting arities")]
    ConflictingFuncDecl {
        name: String,
        span: Option<SourceSpan>,
    },
    #[error("invalid declaration `{context}`: {reason}")]
    InvalidDecl {
        context: String,
        reason: &'static str,
        span: Option<SourceSpan>,
    },
}

impl ValidationError {
    pub fn span(&self) -> Option<SourceSpan> {
        use ValidationError::*;
        match self {
            ArityMismatch { span, .. }
            | UnrangeRestrictedVariable { span, .. }
            | FdOutOfBounds { span, .. }
            | InvalidFd { span, .. }
            | NonStratifiable { span, .. }
            | DuplicateBaseDecl { span, .. }
            | UndefinedPredicate { span, .. }
            | BaseHead { span, .. }
            | NoPositiveAtom { span, .. }
            | GroundNegation { span, .. }
            | InvalidCondition { span, .. }
            | ConflictingFuncDecl { span, .. }
            | InvalidDecl { span, .. } => *span,
        }
    }
}

/// A program whose arities, definitions, range restriction and
/// stratification have been checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedProgram {
    program: Program,
    arities: BTreeMap<String, usize>,
    indices: BTreeMap<String, usize>,
    base: BTreeSet<String>,
    strata: BTreeMap<String, usize>,
    components: Vec<Vec<String>>,
    component_of: BTreeMap<String, usize>,
}

impl ValidatedProgram {
    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn into_program(self) -> Program {
        self.program
    }

    pub fn arity(&self, predicate: &str) -> Option<usize> {
        self.arities.get(predicate).copied()
    }

    pub fn arities(&self) -> &BTreeMap<String, usize> {
        &self.arities
    }

    pub fn is_base(&self, predicate: &str) -> bool {
        self.base.contains(predicate)
    }

    pub fn base_predicates(&self) -> impl Iterator<Item = &str> {
        self.program.base_decls.iter().map(|d| d.name.as_str())
    }

    /// Predicates defined by rules, in order of first definition.
    pub fn derived_predicates(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.program.rules {
            if seen.insert(r.head.predicate.as_str()) {
                out.push(r.head.predicate.as_str());
            }
        }
        out
    }

    /// Stable index of a predicate, in order of first appearance.
    pub fn index(&self, predicate: &str) -> Option<usize> {
        self.indices.get(predicate).copied()
    }

    pub fn stratum(&self, predicate: &str) -> Option<usize> {
        self.strata.get(predicate).copied()
    }

    pub fn strata(&self) -> &BTreeMap<String, usize> {
        &self.strata
    }

    /// Strongly connected components of the predicate dependency graph,
    /// dependencies first.
    pub fn components(&self) -> &[Vec<String>] {
        &self.components
    }

    pub fn component_of(&self, predicate: &str) -> Option<usize> {
        self.component_of.get(predicate).copied()
    }

    /// Whether the component of `predicate` contains a cycle.
    pub fn is_recursive(&self, predicate: &str) -> bool {
        let Some(c) = self.component_of(predicate) else {
            return false;
        };
        let comp = &self.components[c];
        comp.len() > 1
            || self.program.rules.iter().any(|r| {
                r.head.predicate == comp[0] && r.body.iter().any(|a| a.predicate == comp[0])
            })
    }
}

fn rule_text(r: &Rule) -> String {
    r.to_string()
}

pub fn validate(program: Program) -> Result<ValidatedProgram, ValidationError> {
    let mut arities: BTreeMap<String, usize> = BTreeMap::new();
    let mut indices: BTreeMap<String, usize> = BTreeMap::new();
    let mut base = BTreeSet::new();

    let note = |indices: &mut BTreeMap<String, usize>, p: &str| {
        if !indices.contains_key(p) {
            let n = indices.len();
            indices.insert(p.into(), n);
        }
    };

    for d in &program.base_decls {
        if !base.insert(d.name.clone()) {
            return Err(ValidationError::DuplicateBaseDecl {
                predicate: d.name.clone(),
                span: d.span,
            });
        }
        if d.attributes.is_empty() {
            return Err(ValidationError::InvalidDecl {
                context: format!("base {}", d.name),
                reason: "base tables need at least one attribute",
                span: d.span,
            });
        }
        arities.insert(d.name.clone(), d.attributes.len());
        note(&mut indices, &d.name);
    }

    let heads: BTreeSet<&str> = program.rules.iter().map(|r| r.head.predicate.as_str()).collect();

    for r in &program.rules {
        let text = rule_text(r);
        if r.head.negated {
            return Err(ValidationError::InvalidDecl {
                context: text,
                reason: "rule heads cannot be negated",
                span: r.span,
            });
        }
        if base.contains(&r.head.predicate) {
            return Err(ValidationError::BaseHead {
                predicate: r.head.predicate.clone(),
                rule: text,
                span: r.span,
            });
        }
        for a in core::iter::once(&r.head).chain(&r.body) {
            if a.args.is_empty() {
                return Err(ValidationError::InvalidDecl {
                    context: text,
                    reason: "atoms need at least one argument",
                    span: r.span,
                });
            }
            if !base.contains(&a.predicate) && !heads.contains(a.predicate.as_str()) {
                return Err(ValidationError::UndefinedPredicate {
                    predicate: a.predicate.clone(),
                    context: text,
                    span: r.span,
                });
            }
            match arities.get(&a.predicate) {
                Some(&n) if n != a.arity() => {
                    return Err(ValidationError::ArityMismatch {
                        predicate: a.predicate.clone(),
                        expected: n,
                        found: a.arity(),
                        context: text,
                        span: r.span,
                    })
                }
                Some(_) => {}
                None => {
                    arities.insert(a.predicate.clone(), a.arity());
                }
            }
            note(&mut indices, &a.predicate);
        }
        check_range_restriction(r)?;
    }

    for d in &program.fd_decls {
        let context = format!("fd {}", d.predicate);
        if !base.contains(&d.predicate) {
            return Err(ValidationError::InvalidFd {
                context,
                reason: "dependencies can only be declared on base tables",
                span: d.span,
            });
        }
        let arity = arities[&d.predicate];
        for &c in d.lhs.iter().chain(core::iter::once(&d.rhs)) {
            if c == 0 || c > arity {
                return Err(ValidationError::FdOutOfBounds {
                    predicate: d.predicate.clone(),
                    column: c,
                    arity,
                    context,
                    span: d.span,
                });
            }
        }
        if d.lhs.contains(&d.rhs) {
            return Err(ValidationError::InvalidFd {
                context,
                reason: "right side column also occurs on the left side",
                span: d.span,
            });
        }
    }

    for d in &program.view_decls {
        let context = format!("view {}", d.name);
        if !heads.contains(d.name.as_str()) {
            return Err(ValidationError::UndefinedPredicate {
                predicate: d.name.clone(),
                context,
                span: d.span,
            });
        }
        let n = arities[&d.name];
        if n != d.attributes.len() {
            return Err(ValidationError::ArityMismatch {
                predicate: d.name.clone(),
                expected: n,
                found: d.attributes.len(),
                context,
                span: d.span,
            });
        }
    }

    let mut func_arity: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &program.func_decls {
        if let Some(n) = d.arity {
            if let Some(&old) = func_arity.get(d.name.as_str()) {
                if old != n {
                    return Err(ValidationError::ConflictingFuncDecl {
                        name: d.name.clone(),
                        span: d.span,
                    });
                }
            }
            func_arity.insert(&d.name, n);
        }
        for b in &d.writes {
            if !base.contains(b) {
                return Err(ValidationError::UndefinedPredicate {
                    predicate: b.clone(),
                    context: format!("func {} writes {}", d.name, b),
                    span: d.span,
                });
            }
        }
    }

    for d in &program.call_decls {
        let context = format!("call {}", d.view);
        if !heads.contains(d.view.as_str()) {
            return Err(ValidationError::UndefinedPredicate {
                predicate: d.view.clone(),
                context,
                span: d.span,
            });
        }
        let arity = arities[&d.view];
        for &c in d.inputs.iter().chain(core::iter::once(&d.output)) {
            if c == 0 || c > arity {
                return Err(ValidationError::FdOutOfBounds {
                    predicate: d.view.clone(),
                    column: c,
                    arity,
                    context,
                    span: d.span,
                });
            }
        }
        if d.inputs.contains(&d.output) {
            return Err(ValidationError::InvalidDecl {
                context,
                reason: "output column also listed as input",
                span: d.span,
            });
        }
    }

    // Stratification over the predicate graph, edges head -> body.
    let nodes: Vec<String> = {
        let mut v: Vec<(usize, &String)> = indices.iter().map(|(k, &i)| (i, k)).collect();
        v.sort();
        v.into_iter().map(|(_, k)| k.clone()).collect()
    };
    let mut edges: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in &program.rules {
        for a in &r.body {
            edges
                .entry(r.head.predicate.clone())
                .or_default()
                .insert(a.predicate.clone());
        }
    }
    let components = strongly_connected(&nodes, &edges);
    let mut component_of = BTreeMap::new();
    for (i, c) in components.iter().enumerate() {
        for p in c {
            component_of.insert(p.clone(), i);
        }
    }
    for r in &program.rules {
        for a in r.negative_atoms() {
            if component_of[&r.head.predicate] == component_of[&a.predicate] {
                return Err(ValidationError::NonStratifiable {
                    predicate: r.head.predicate.clone(),
                    through: a.predicate.clone(),
                    span: r.span,
                });
            }
        }
    }
    // Components arrive dependencies first, so a single pass settles strata.
    let mut comp_stratum = alloc::vec![0usize; components.len()];
    for (i, _) in components.iter().enumerate() {
        let mut s = 0;
        for r in program.rules.iter().filter(|r| component_of[&r.head.predicate] == i) {
            for a in &r.body {
                let j = component_of[&a.predicate];
                if j != i {
                    s = s.max(comp_stratum[j] + usize::from(a.negated));
                }
            }
        }
        comp_stratum[i] = s;
    }
    let strata = component_of
        .iter()
        .map(|(p, &c)| (p.clone(), comp_stratum[c]))
        .collect();

    Ok(ValidatedProgram {
        program,
        arities,
        indices,
        base,
        strata,
        components,
        component_of,
    })
}

fn check_range_restriction(r: &Rule) -> Result<(), ValidationError> {
    if r.positive_atoms().next().is_none() {
        return Err(ValidationError::NoPositiveAtom {
            rule: rule_text(r),
            span: r.span,
        });
    }
    for c in &r.conditions {
        if let Condition::VarEq(a, b) = c {
            if a == b {
                return Err(ValidationError::InvalidCondition {
                    condition: c.to_string(),
                    rule: rule_text(r),
                    span: r.span,
                });
            }
        }
    }
    let mut bound: BTreeSet<&str> = r.positive_atoms().flat_map(|a| a.vars()).collect();
    loop {
        let before = bound.len();
        for c in &r.conditions {
            match c {
                Condition::VarEq(a, b) => {
                    if bound.contains(a.as_str()) || bound.contains(b.as_str()) {
                        bound.insert(a);
                        bound.insert(b);
                    }
                }
                Condition::ConstEq(v, _) => {
                    bound.insert(v);
                }
                Condition::Opaque { .. } => {}
            }
        }
        if bound.len() == before {
            break;
        }
    }
    let unbound = |v: &str| ValidationError::UnrangeRestrictedVariable {
        variable: v.into(),
        rule: rule_text(r),
        span: r.span,
    };
    for v in r.head.vars() {
        if !bound.contains(v) {
            return Err(unbound(v));
        }
    }
    for c in &r.conditions {
        for v in c.vars() {
            if !bound.contains(v) {
                return Err(unbound(v));
            }
        }
    }
    for a in r.negative_atoms() {
        if a.vars().next().is_none() {
            return Err(ValidationError::GroundNegation {
                rule: rule_text(r),
                span: r.span,
            });
        }
        for v in a.vars() {
            if !bound.contains(v) {
                return Err(unbound(v));
            }
        }
    }
    Ok(())
}
