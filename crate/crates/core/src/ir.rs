//! Abstract syntax of an analyzed schema: base tables, declared dependencies,
//! functions, and the rules defining derived relations.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Location of a rule or declaration in its source text. Lines and columns
/// are 1-based and count characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceSpan {
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// A literal value: a numeral or a quoted string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constant {
    Int(i64),
    Str(String),
}

impl Constant {
    pub fn str(s: &str) -> Self {
        Constant::Str(s.into())
    }
}

impl From<i64> for Constant {
    fn from(v: i64) -> Self {
        Constant::Int(v)
    }
}

impl From<&str> for Constant {
    fn from(v: &str) -> Self {
        Constant::Str(v.into())
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Int(v) => write!(f, "{v}"),
            Constant::Str(s) => {
                f.write_str("'")?;
                for c in s.chars() {
                    match c {
                        '\'' => f.write_str("\\'")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("'")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(Constant),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(name.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => c.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
    pub negated: bool,
}

impl Atom {
    pub fn new(predicate: &str, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
            negated: false,
        }
    }

    /// Atom whose arguments are all variables.
    pub fn with_vars<S: AsRef<str>>(predicate: &str, vars: &[S]) -> Self {
        Atom::new(predicate, vars.iter().map(|v| Term::var(v.as_ref())).collect())
    }

    pub fn negate(mut self) -> Self {
        self.negated = true;
        self
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }

    /// The argument list as variable names, if every argument is a variable.
    pub fn var_tuple(&self) -> Option<Vec<&str>> {
        self.args.iter().map(Term::as_var).collect()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            a.fmt(f)?;
        }
        f.write_str(")")
    }
}

/// Comparison operators that are kept but never used for dependency analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Ne => "!=",
        }
    }

    pub fn holds(self, left: &Constant, right: &Constant) -> bool {
        match self {
            CmpOp::Lt => left < right,
            CmpOp::Le => left <= right,
            CmpOp::Gt => left > right,
            CmpOp::Ge => left >= right,
            CmpOp::Ne => left != right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// `X = Y`
    VarEq(String, String),
    /// `X = c`
    ConstEq(String, Constant),
    /// Any other comparison, e.g. `X < Y`.
    Opaque {
        left: String,
        op: CmpOp,
        right: Term,
    },
}

impl Condition {
    pub fn var_eq(left: &str, right: &str) -> Self {
        Condition::VarEq(left.into(), right.into())
    }

    pub fn const_eq(var: &str, value: impl Into<Constant>) -> Self {
        Condition::ConstEq(var.into(), value.into())
    }

    pub fn vars(&self) -> Vec<&str> {
        match self {
            Condition::VarEq(a, b) => alloc::vec![a.as_str(), b.as_str()],
            Condition::ConstEq(v, _) => alloc::vec![v.as_str()],
            Condition::Opaque { left, right, .. } => {
                let mut vs = alloc::vec![left.as_str()];
                if let Term::Var(r) = right {
                    vs.push(r.as_str());
                }
                vs
            }
        }
    }

    /// Applies a variable renaming to every variable in the condition.
    pub fn rename(&self, f: impl Fn(&str) -> String) -> Condition {
        match self {
            Condition::VarEq(a, b) => Condition::VarEq(f(a), f(b)),
            Condition::ConstEq(v, c) => Condition::ConstEq(f(v), c.clone()),
            Condition::Opaque { left, op, right } => Condition::Opaque {
                left: f(left),
                op: *op,
                right: match right {
                    Term::Var(r) => Term::Var(f(r)),
                    t => t.clone(),
                },
            },
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::VarEq(a, b) => write!(f, "{a}={b}"),
            Condition::ConstEq(v, c) => write!(f, "{v}={c}"),
            Condition::Opaque { left, op, right } => write!(f, "{left}{}{right}", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Atom>,
    pub conditions: Vec<Condition>,
    pub span: Option<SourceSpan>,
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Atom>, conditions: Vec<Condition>) -> Self {
        Rule {
            head,
            body,
            conditions,
            span: None,
        }
    }

    pub fn positive_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter(|a| !a.negated)
    }

    pub fn negative_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter(|a| a.negated)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        let mut first = true;
        for a in &self.body {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            a.fmt(f)?;
        }
        for c in &self.conditions {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            c.fmt(f)?;
        }
        f.write_str(".")
    }
}

/// `base b(name, ...)`: a stored table and its attribute names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseDecl {
    pub name: String,
    pub attributes: Vec<String>,
    pub span: Option<SourceSpan>,
}

/// `view v(name, ...)`: attribute names for a derived relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewDecl {
    pub name: String,
    pub attributes: Vec<String>,
    pub span: Option<SourceSpan>,
}

/// `fd p: {1,2} -> 3`: a functional dependency declared on a base table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FdDecl {
    pub predicate: String,
    pub lhs: BTreeSet<usize>,
    pub rhs: usize,
    pub span: Option<SourceSpan>,
}

/// `func f/0 writes b3 type 'auto_trans'`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuncDecl {
    pub name: String,
    pub arity: Option<usize>,
    pub writes: Vec<String>,
    pub ftype: Option<String>,
    pub span: Option<SourceSpan>,
}

/// `call v: {1} -> 2 using f`: column `output` of view `view` is computed by
/// `function` from the `inputs` columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallDecl {
    pub view: String,
    pub inputs: BTreeSet<usize>,
    pub output: usize,
    pub function: String,
    pub span: Option<SourceSpan>,
}

/// `dep t2 -> b3`: a generic dependency edge (triggers and the like).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepDecl {
    pub from: String,
    pub to: String,
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub base_decls: Vec<BaseDecl>,
    pub view_decls: Vec<ViewDecl>,
    pub fd_decls: Vec<FdDecl>,
    pub func_decls: Vec<FuncDecl>,
    pub call_decls: Vec<CallDecl>,
    pub dep_decls: Vec<DepDecl>,
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn is_empty(&self) -> bool {
        self.base_decls.is_empty()
            && self.view_decls.is_empty()
            && self.fd_decls.is_empty()
            && self.func_decls.is_empty()
            && self.call_decls.is_empty()
            && self.dep_decls.is_empty()
            && self.rules.is_empty()
    }

    /// Copy with every source span cleared, for structural comparison.
    pub fn without_spans(&self) -> Program {
        let mut p = self.clone();
        p.base_decls.iter_mut().for_each(|d| d.span = None);
        p.view_decls.iter_mut().for_each(|d| d.span = None);
        p.fd_decls.iter_mut().for_each(|d| d.span = None);
        p.func_decls.iter_mut().for_each(|d| d.span = None);
        p.call_decls.iter_mut().for_each(|d| d.span = None);
        p.dep_decls.iter_mut().for_each(|d| d.span = None);
        p.rules.iter_mut().for_each(|r| r.span = None);
        p
    }

    /// Same declarations, no rules.
    pub fn declarations_only(&self) -> Program {
        Program {
            rules: Vec::new(),
            ..self.clone()
        }
    }

    /// Every constant mentioned in a rule body, head, or condition.
    pub fn constants(&self) -> BTreeSet<Constant> {
        let mut out = BTreeSet::new();
        for r in &self.rules {
            for a in core::iter::once(&r.head).chain(&r.body) {
                for t in &a.args {
                    if let Term::Const(c) = t {
                        out.insert(c.clone());
                    }
                }
            }
            for c in &r.conditions {
                match c {
                    Condition::ConstEq(_, v) => {
                        out.insert(v.clone());
                    }
                    Condition::Opaque {
                        right: Term::Const(v),
                        ..
                    } => {
                        out.insert(v.clone());
                    }
                    _ => {}
                }
            }
        }
        out
    }
}
