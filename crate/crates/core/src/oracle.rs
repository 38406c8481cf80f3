//! Ground truth on concrete instances: bottom-up evaluation, FD checks,
//! random instances and programs, and the soundness sweep.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fd::{Fd, FdSet};
use crate::ir::*;
use crate::metafacts::set_literal;
use crate::validate::ValidatedProgram;

pub type Tuple = Vec<Constant>;
pub type Relation = BTreeSet<Tuple>;
pub type Instance = BTreeMap<String, Relation>;

type Binding = BTreeMap<String, Constant>;

fn match_atom(atom: &Atom, tuple: &Tuple, b: &Binding) -> Option<Binding> {
    let mut b = b.clone();
    for (t, v) in atom.args.iter().zip(tuple) {
        match t {
            Term::Const(c) if c != v => return None,
            Term::Const(_) => {}
            Term::Var(x) => match b.get(x) {
                Some(w) if w != v => return None,
                Some(_) => {}
                None => {
                    b.insert(x.clone(), v.clone());
                }
            },
        }
    }
    Some(b)
}

fn term_value(t: &Term, b: &Binding) -> Option<Constant> {
    match t {
        Term::Var(x) => b.get(x).cloned(),
        Term::Const(c) => Some(c.clone()),
    }
}

/// Applies equalities until nothing new is bound, then checks every condition.
fn close_conditions(conds: &[Condition], mut b: Binding) -> Option<Binding> {
    loop {
        let mut progress = false;
        for c in conds {
            match c {
                Condition::VarEq(x, y) => match (b.get(x).cloned(), b.get(y).cloned()) {
                    (Some(v), None) => {
                        b.insert(y.clone(), v);
                        progress = true;
                    }
                    (None, Some(v)) => {
                        b.insert(x.clone(), v);
                        progress = true;
                    }
                    _ => {}
                },
                Condition::ConstEq(x, k) if !b.contains_key(x) => {
                    b.insert(x.clone(), k.clone());
                    progress = true;
                }
                _ => {}
            }
        }
        if !progress {
            break;
        }
    }
    for c in conds {
        let ok = match c {
            Condition::VarEq(x, y) => b.get(x)? == b.get(y)?,
            Condition::ConstEq(x, k) => b.get(x)? == k,
            Condition::Opaque { left, op, right } => op.holds(b.get(left)?, &term_value(right, &b)?),
        };
        if !ok {
            return None;
        }
    }
    Some(b)
}

fn fire(rule: &Rule, db: &Instance) -> Relation {
    let empty = Relation::new();
    let mut bindings = alloc::vec![Binding::new()];
    for atom in rule.positive_atoms() {
        let rel = db.get(&atom.predicate).unwrap_or(&empty);
        bindings = bindings
            .iter()
            .flat_map(|b| rel.iter().filter_map(move |t| match_atom(atom, t, b)))
            .collect();
    }
    let mut out = Relation::new();
    'next: for b in bindings {
        let Some(b) = close_conditions(&rule.conditions, b) else { continue };
        for atom in rule.negative_atoms() {
            let Some(t) = atom.args.iter().map(|a| term_value(a, &b)).collect::<Option<Tuple>>() else {
                continue 'next;
            };
            if db.get(&atom.predicate).is_some_and(|r| r.contains(&t)) {
                continue 'next;
            }
        }
        if let Some(t) = rule.head.args.iter().map(|a| term_value(a, &b)).collect() {
            out.insert(t);
        }
    }
    out
}

/// Stratified bottom-up evaluation. Base relations come from `edb`; every
/// derived predicate appears in the result, possibly empty.
pub fn evaluate(program: &ValidatedProgram, edb: &Instance) -> Instance {
    let mut db: Instance = BTreeMap::new();
    for b in program.base_predicates() {
        db.insert(b.into(), edb.get(b).cloned().unwrap_or_default());
    }
    let edb_size: usize = db.values().map(BTreeSet::len).sum();
    let cap = core::cmp::max(10 * edb_size, 16);
    let rules = &program.program().rules;
    for comp in program.components() {
        let heads: Vec<&String> = comp.iter().filter(|p| !program.is_base(p)).collect();
        if heads.is_empty() {
            continue;
        }
        for h in &heads {
            db.entry((*h).clone()).or_default();
        }
        let comp_rules: Vec<&Rule> = rules.iter().filter(|r| comp.contains(&r.head.predicate)).collect();
        for _ in 0..cap {
            let mut changed = false;
            for r in &comp_rules {
                let new = fire(r, &db);
                let rel = db.get_mut(&r.head.predicate).expect("head inserted");
                for t in new {
                    changed |= rel.insert(t);
                }
            }
            if !changed {
                break;
            }
        }
    }
    db
}

pub fn holds_fd(rel: &Relation, lhs: &BTreeSet<usize>, rhs: usize) -> bool {
    let mut seen: BTreeMap<Vec<&Constant>, &Constant> = BTreeMap::new();
    for t in rel {
        let key: Vec<&Constant> = lhs.iter().map(|i| &t[i - 1]).collect();
        let v = &t[rhs - 1];
        if let Some(prev) = seen.insert(key, v) {
            if prev != v {
                return false;
            }
        }
    }
    true
}

fn domain(program: &Program, symbols: usize) -> Vec<Constant> {
    let mut d: Vec<Constant> = program.constants().into_iter().take(symbols).collect();
    let mut i = 0;
    while d.len() < symbols {
        i += 1;
        let c = Constant::Int(i);
        if !d.contains(&c) {
            d.push(c);
        }
    }
    d
}

/// Default number of symbols in random instances.
pub const SMALL_DOMAIN: usize = 4;
/// Domain used to tell finite-domain coincidences from structural dependencies.
pub const WIDE_DOMAIN: usize = 64;

/// A random instance of the base tables satisfying every declared FD.
pub fn random_instance(program: &Program, size: usize, seed: u64) -> Instance {
    random_instance_over(program, size, seed, SMALL_DOMAIN)
}

pub fn random_instance_over(program: &Program, size: usize, seed: u64, symbols: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = domain(program, symbols);
    let mut inst = Instance::new();
    for b in &program.base_decls {
        let fds: Vec<_> = program.fd_decls.iter().filter(|f| f.predicate == b.name).collect();
        let mut kept: Vec<Tuple> = Vec::new();
        for _ in 0..size {
            let t: Tuple = (0..b.attributes.len())
                .map(|_| dom.choose(&mut rng).expect("nonempty domain").clone())
                .collect();
            let clash = fds.iter().any(|f| {
                kept.iter()
                    .any(|k| f.lhs.iter().all(|i| k[i - 1] == t[i - 1]) && k[f.rhs - 1] != t[f.rhs - 1])
            });
            if !clash {
                kept.push(t);
            }
        }
        inst.insert(b.name.clone(), kept.into_iter().collect());
    }
    inst
}

/// A saturated dependency that failed on a concrete instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoundnessViolation {
    pub fd: Fd,
    pub trial: usize,
    pub seed: u64,
    pub edb: Instance,
    pub relation: Relation,
}

fn write_relation(f: &mut fmt::Formatter<'_>, name: &str, rel: &Relation) -> fmt::Result {
    for t in rel {
        let vals: Vec<String> = t.iter().map(|c| format!("{c}")).collect();
        writeln!(f, "  {name}({}).", vals.join(","))?;
    }
    Ok(())
}

impl fmt::Display for SoundnessViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} violated in trial {} (seed {})", self.fd, self.trial, self.seed)?;
        writeln!(f, "base instance:")?;
        for (name, rel) in &self.edb {
            write_relation(f, name, rel)?;
        }
        writeln!(f, "derived {}:", self.fd.pred)?;
        write_relation(f, &self.fd.pred, &self.relation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MissKind {
    /// Still holds on the wide domain.
    Structural,
    /// Only holds because the small domain forces coincidences.
    FiniteDomain,
}

impl MissKind {
    pub fn name(self) -> &'static str {
        match self {
            MissKind::Structural => "structural",
            MissKind::FiniteDomain => "finite_domain",
        }
    }
}

/// A dependency observed on every trial but not derived.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MissedFd {
    pub pred: String,
    pub lhs: BTreeSet<usize>,
    pub rhs: usize,
    pub kind: MissKind,
}

impl fmt::Display for MissedFd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {} ({})", self.pred, set_literal(&self.lhs), self.rhs, self.kind.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepConfig {
    pub trials: usize,
    pub size: usize,
    pub seed: u64,
    /// Also search for dependencies that hold but were not derived.
    pub report_missed: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            trials: 100,
            size: 8,
            seed: 0,
            report_missed: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub trials: usize,
    /// Dependencies checked on every trial.
    pub checked: usize,
    /// Dependencies skipped because they stem from function calls.
    pub skipped: usize,
    pub missed: Vec<MissedFd>,
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial as u64)
}

/// Checks every saturated FD (except those produced by function calls) on
/// `trials` random instances of `program`'s base tables.
pub fn soundness_sweep(
    program: &ValidatedProgram,
    fds: &FdSet,
    config: &SweepConfig,
) -> Result<SweepReport, Box<SoundnessViolation>> {
    let (skip, check): (Vec<&Fd>, Vec<&Fd>) = fds.facts.iter().partition(|f| f.id.mentions_function());
    let triples: BTreeSet<(&str, &BTreeSet<usize>, usize)> = check.iter().map(|f| f.triple()).collect();
    let mut instances = Vec::new();
    for trial in 0..config.trials {
        let seed = trial_seed(config.seed, trial);
        let edb = random_instance(program.program(), config.size, seed);
        let db = evaluate(program, &edb);
        for f in &check {
            let rel = db.get(&f.pred).cloned().unwrap_or_default();
            if !holds_fd(&rel, &f.lhs, f.rhs) {
                return Err(Box::new(SoundnessViolation {
                    fd: (*f).clone(),
                    trial,
                    seed,
                    edb,
                    relation: rel,
                }));
            }
        }
        if config.report_missed {
            instances.push(db);
        }
    }
    let mut missed = Vec::new();
    if config.report_missed {
        let wide: Vec<Instance> = (0..config.trials)
            .map(|t| {
                let edb = random_instance_over(program.program(), config.size, trial_seed(config.seed, t), WIDE_DOMAIN);
                evaluate(program, &edb)
            })
            .collect();
        for p in program.derived_predicates() {
            let arity = program.arity(p).unwrap_or(0);
            for (lhs, rhs) in small_candidates(arity) {
                let derived = triples.iter().any(|(q, l, r)| *q == p && *r == rhs && l.is_subset(&lhs));
                if derived || !instances.iter().all(|db| holds_fd(&db[p], &lhs, rhs)) {
                    continue;
                }
                let kind = if wide.iter().all(|db| holds_fd(&db[p], &lhs, rhs)) {
                    MissKind::Structural
                } else {
                    MissKind::FiniteDomain
                };
                missed.push(MissedFd {
                    pred: p.into(),
                    lhs,
                    rhs,
                    kind,
                });
            }
        }
    }
    Ok(SweepReport {
        trials: config.trials,
        checked: check.len(),
        skipped: skip.len(),
        missed,
    })
}

/// Candidate dependencies with at most one left-hand column.
fn small_candidates(arity: usize) -> Vec<(BTreeSet<usize>, usize)> {
    let mut out = Vec::new();
    for rhs in 1..=arity {
        out.push((BTreeSet::new(), rhs));
        for l in (1..=arity).filter(|l| *l != rhs) {
            out.push((BTreeSet::from([l]), rhs));
        }
    }
    out
}

/// A random non-recursive program already in normal form: two or three
/// base tables with acyclic FDs and up to five rules, each realizing one
/// operator picked uniformly.
pub fn random_program(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Program::default();
    let mut preds: Vec<(String, usize)> = Vec::new();
    let tables = rng.gen_range(2..=3);
    let shared_arity = rng.gen_range(1..=3);
    for i in 0..tables {
        let name = format!("b{}", i + 1);
        let arity = if i < 2 { shared_arity } else { rng.gen_range(1..=3) };
        p.base_decls.push(BaseDecl {
            name: name.clone(),
            attributes: (1..=arity).map(|a| format!("a{a}")).collect(),
            span: None,
        });
        for rhs in 1..=arity {
            if rng.gen_bool(0.4) {
                let lhs: BTreeSet<usize> = (1..rhs).filter(|_| rng.gen_bool(0.5)).collect();
                p.fd_decls.push(FdDecl {
                    predicate: name.clone(),
                    lhs,
                    rhs,
                    span: None,
                });
            }
        }
        preds.push((name, arity));
    }

    let vars = |prefix: &str, n: usize| -> Vec<String> { (1..=n).map(|i| format!("{prefix}{i}")).collect() };
    let mut rules = 0;
    let target = rng.gen_range(1..=5);
    let mut k = 0;
    while rules < target {
        k += 1;
        let head = format!("v{k}");
        let (q, qa) = preds.choose(&mut rng).unwrap().clone();
        let xs = vars("X", qa);
        let same: Vec<(String, usize)> = preds.iter().filter(|(n, a)| *a == qa && *n != q).cloned().collect();
        let others: Vec<(String, usize)> = preds.iter().filter(|(n, _)| *n != q).cloned().collect();
        let op = rng.gen_range(0..8);
        let (rs, arity) = match op {
            1 => {
                let extra = rng.gen_range(1..=2usize);
                let ys = vars("Y", extra);
                let mut head_vars = xs.clone();
                head_vars.extend(ys.iter().cloned());
                let conds = ys
                    .iter()
                    .map(|y| {
                        if rng.gen_bool(0.5) {
                            Condition::VarEq(y.clone(), xs.choose(&mut rng).unwrap().clone())
                        } else {
                            Condition::ConstEq(y.clone(), Constant::Int(rng.gen_range(1..=3)))
                        }
                    })
                    .collect();
                (
                    alloc::vec![Rule::new(Atom::with_vars(&head, &head_vars), alloc::vec![Atom::with_vars(&q, &xs)], conds)],
                    qa + extra,
                )
            }
            2 => {
                let x = xs.choose(&mut rng).unwrap().clone();
                let cond = match rng.gen_range(0..3) {
                    0 if qa > 1 => {
                        let y = xs.iter().find(|v| **v != x).unwrap().clone();
                        Condition::VarEq(x, y)
                    }
                    1 => Condition::Opaque {
                        left: x,
                        op: CmpOp::Lt,
                        right: Term::Const(Constant::Int(rng.gen_range(1..=3))),
                    },
                    _ => Condition::ConstEq(x, Constant::Int(rng.gen_range(1..=3))),
                };
                (
                    alloc::vec![Rule::new(Atom::with_vars(&head, &xs), alloc::vec![Atom::with_vars(&q, &xs)], alloc::vec![cond])],
                    qa,
                )
            }
            3 | 4 if !others.is_empty() => {
                let (r, ra) = others.choose(&mut rng).unwrap().clone();
                let mut zs = vars("Z", ra);
                if op == 4 {
                    let i = rng.gen_range(0..ra);
                    zs[i] = xs.choose(&mut rng).unwrap().clone();
                }
                let mut head_vars = xs.clone();
                head_vars.extend(zs.iter().filter(|z| !xs.contains(z)).cloned());
                let n = head_vars.len();
                (
                    alloc::vec![Rule::new(
                        Atom::with_vars(&head, &head_vars),
                        alloc::vec![Atom::with_vars(&q, &xs), Atom::with_vars(&r, &zs)],
                        Vec::new(),
                    )],
                    n,
                )
            }
            5 if !same.is_empty() && rules + 2 <= target.max(2) => {
                let (r, _) = same.choose(&mut rng).unwrap().clone();
                rules += 1;
                (
                    alloc::vec![
                        Rule::new(Atom::with_vars(&head, &xs), alloc::vec![Atom::with_vars(&q, &xs)], Vec::new()),
                        Rule::new(Atom::with_vars(&head, &xs), alloc::vec![Atom::with_vars(&r, &xs)], Vec::new()),
                    ],
                    qa,
                )
            }
            6 | 7 if !same.is_empty() => {
                let (r, _) = same.choose(&mut rng).unwrap().clone();
                let mut second = Atom::with_vars(&r, &xs);
                if op == 7 {
                    second = second.negate();
                }
                (
                    alloc::vec![Rule::new(Atom::with_vars(&head, &xs), alloc::vec![Atom::with_vars(&q, &xs), second], Vec::new())],
                    qa,
                )
            }
            _ => {
                let mut keep: Vec<String> = xs.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
                if keep.is_empty() {
                    keep.push(xs[0].clone());
                }
                keep.shuffle(&mut rng);
                let n = keep.len();
                (
                    alloc::vec![Rule::new(Atom::with_vars(&head, &keep), alloc::vec![Atom::with_vars(&q, &xs)], Vec::new())],
                    n,
                )
            }
        };
        rules += 1;
        p.rules.extend(rs);
        preds.push((head, arity));
    }
    p
}
