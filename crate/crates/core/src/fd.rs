//! Functional dependency propagation with identifier tracking.
//!
//! Every dependency carries an [`IdTerm`] recording which declared
//! dependency (or function call) it came from and how it was rewritten.
//! Union and recursion only accept dependencies whose identifiers agree.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::depgraph::{paths, PathRelation};
use crate::ir::Constant;
use crate::metafacts::{set_literal, MetaFactBase};
use crate::normalize::OperatorKind;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    /// The n-th declared dependency.
    Fd(usize),
    /// A function computing a view column.
    Func(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IdTerm {
    Node { origin: Origin, children: Vec<IdTerm> },
    Col(usize),
    Const(Constant),
}

impl IdTerm {
    pub fn depth(&self) -> usize {
        match self {
            IdTerm::Node { children, .. } => 1 + children.iter().map(IdTerm::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Node count, leaves included.
    pub fn size(&self) -> usize {
        match self {
            IdTerm::Node { children, .. } => 1 + children.iter().map(IdTerm::size).sum::<usize>(),
            _ => 1,
        }
    }

    /// True when no declared dependency or function contributes.
    pub fn is_constraint_only(&self) -> bool {
        !matches!(self, IdTerm::Node { .. })
    }

    pub fn mentions_function(&self) -> bool {
        match self {
            IdTerm::Node { origin: Origin::Func(_), .. } => true,
            IdTerm::Node { children, .. } => children.iter().any(IdTerm::mentions_function),
            _ => false,
        }
    }
}

impl fmt::Display for IdTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdTerm::Node { origin, children } => {
                match origin {
                    Origin::Fd(i) => write!(f, "id{i}[")?,
                    Origin::Func(name) => write!(f, "{name}[")?,
                }
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    c.fmt(f)?;
                }
                f.write_str("]")
            }
            IdTerm::Col(c) => write!(f, "{c}"),
            IdTerm::Const(Constant::Int(v)) => write!(f, "'{v}'"),
            IdTerm::Const(c) => c.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fd {
    pub pred: String,
    pub lhs: BTreeSet<usize>,
    pub rhs: usize,
    pub id: IdTerm,
}

impl Fd {
    pub fn triple(&self) -> (&str, &BTreeSet<usize>, usize) {
        (&self.pred, &self.lhs, self.rhs)
    }
}

impl fmt::Display for Fd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fd({},{},{},{})", self.pred, set_literal(&self.lhs), self.rhs, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("column {0} has no image under the position map")]
pub struct UnmappedColumn(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("identifier of depth {depth} and size {size} exceeds the caps")]
pub struct IdCapExceeded {
    pub depth: usize,
    pub size: usize,
}

/// Renumbers column leaves through `map` (body position to head position).
pub fn remap_id(id: &IdTerm, map: &BTreeMap<usize, usize>) -> Result<IdTerm, UnmappedColumn> {
    Ok(match id {
        IdTerm::Node { origin, children } => IdTerm::Node {
            origin: origin.clone(),
            children: children
                .iter()
                .map(|c| remap_id(c, map))
                .collect::<Result<_, _>>()?,
        },
        IdTerm::Col(c) => IdTerm::Col(*map.get(c).ok_or(UnmappedColumn(*c))?),
        IdTerm::Const(v) => IdTerm::Const(v.clone()),
    })
}

/// Substitutes `by` for every `Col(column)` leaf of `id`.
pub fn replace_in_id(id: &IdTerm, column: usize, by: &IdTerm, config: &EngineConfig) -> Result<IdTerm, IdCapExceeded> {
    fn go(id: &IdTerm, column: usize, by: &IdTerm) -> IdTerm {
        match id {
            IdTerm::Col(c) if *c == column => by.clone(),
            IdTerm::Node { origin, children } => IdTerm::Node {
                origin: origin.clone(),
                children: children.iter().map(|c| go(c, column, by)).collect(),
            },
            other => other.clone(),
        }
    }
    let out = go(id, column, by);
    let (depth, size) = (out.depth(), out.size());
    if depth > config.depth_cap || size > config.size_cap {
        Err(IdCapExceeded { depth, size })
    } else {
        Ok(out)
    }
}

pub const SIZE_CAP: usize = 10;

/// How constant constraints are identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstIds {
    /// The constant's value.
    #[default]
    Value,
    /// The constrained column number, read as a constant.
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub depth_cap: usize,
    /// Maximum node count of an identifier.
    pub size_cap: usize,
    pub const_ids: ConstIds,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            depth_cap: 16,
            size_cap: SIZE_CAP,
            const_ids: ConstIds::Value,
        }
    }
}

/// A derivation dropped because its identifier grew past a cap.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    pub pred: String,
    pub lhs: BTreeSet<usize>,
    pub rhs: usize,
    pub depth: usize,
    pub size: usize,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dropped {}: {} -> {}: identifier depth {} size {} over cap",
            self.pred,
            set_literal(&self.lhs),
            self.rhs,
            self.depth,
            self.size
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FdSet {
    pub facts: BTreeSet<Fd>,
    /// Potential dependencies seeded from recursion base cases.
    pub potential: BTreeSet<Fd>,
    pub diagnostics: BTreeSet<Diagnostic>,
}

impl FdSet {
    pub fn on<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = &'a Fd> + 'a {
        self.facts.iter().filter(move |f| f.pred == pred)
    }

    /// Distinct (pred, lhs, rhs) triples, identifiers ignored.
    pub fn triples(&self) -> BTreeSet<(String, BTreeSet<usize>, usize)> {
        self.facts
            .iter()
            .map(|f| (f.pred.clone(), f.lhs.clone(), f.rhs))
            .collect()
    }
}

/// Predicates where transitive dependencies are computed.
pub fn trans_set(mf: &MetaFactBase) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = mf.base.iter().map(|(b, _)| b.clone()).collect();
    out.extend(
        mf.rel
            .iter()
            .filter(|(_, _, k)| *k == OperatorKind::Join)
            .map(|(h, _, _)| h.clone()),
    );
    out.extend(mf.eq.iter().map(|(p, _, _)| p.clone()));
    out.extend(mf.consts.iter().map(|(p, _, _)| p.clone()));
    out
}

fn by_pred(fds: &BTreeSet<Fd>) -> BTreeMap<&str, Vec<&Fd>> {
    let mut m: BTreeMap<&str, Vec<&Fd>> = BTreeMap::new();
    for f in fds {
        m.entry(f.pred.as_str()).or_default().push(f);
    }
    m
}

pub fn step_position_preserving(fds: &BTreeSet<Fd>, mf: &MetaFactBase) -> BTreeSet<Fd> {
    let from = by_pred(fds);
    let mut out = BTreeSet::new();
    for (p, q, k) in &mf.rel {
        if !k.preserves_positions() || mf.neg.contains(&(p.clone(), q.clone())) {
            continue;
        }
        for f in from.get(q.as_str()).into_iter().flatten() {
            out.insert(Fd {
                pred: p.clone(),
                ..(*f).clone()
            });
        }
    }
    out
}

pub fn step_position_mapped(fds: &BTreeSet<Fd>, mf: &MetaFactBase) -> BTreeSet<Fd> {
    let from = by_pred(fds);
    let mut out = BTreeSet::new();
    for (p, q, k) in &mf.rel {
        if !k.maps_positions() {
            continue;
        }
        let Some(src) = from.get(q.as_str()) else { continue };
        let map = mf.position_map(p, q);
        for f in src {
            let lhs: Option<BTreeSet<usize>> = f.lhs.iter().map(|a| map.get(a).copied()).collect();
            let (Some(lhs), Some(rhs), Ok(id)) = (lhs, map.get(&f.rhs), remap_id(&f.id, &map)) else {
                continue;
            };
            out.insert(Fd {
                pred: p.clone(),
                lhs,
                rhs: *rhs,
                id,
            });
        }
    }
    out
}

pub fn step_constraint_fds(mf: &MetaFactBase, config: &EngineConfig) -> BTreeSet<Fd> {
    let mut out = BTreeSet::new();
    for (r, i, j) in &mf.eq {
        out.insert(Fd {
            pred: r.clone(),
            lhs: BTreeSet::from([*i]),
            rhs: *j,
            id: IdTerm::Col(*i),
        });
        out.insert(Fd {
            pred: r.clone(),
            lhs: BTreeSet::from([*j]),
            rhs: *i,
            id: IdTerm::Col(*j),
        });
    }
    for (r, i, v) in &mf.consts {
        let leaf = match config.const_ids {
            ConstIds::Value => v.clone(),
            ConstIds::Column => Constant::Int(*i as i64),
        };
        out.insert(Fd {
            pred: r.clone(),
            lhs: BTreeSet::new(),
            rhs: *i,
            id: IdTerm::Const(leaf),
        });
    }
    out
}

/// Extended transitivity over pairs drawn from `left` (α → B) and `right` (γ → D).
fn transitive(
    left: &BTreeSet<Fd>,
    right: &BTreeSet<Fd>,
    trans: &BTreeSet<String>,
    config: &EngineConfig,
    out: &mut BTreeSet<Fd>,
    diags: &mut BTreeSet<Diagnostic>,
) {
    let mut rights: BTreeMap<(&str, usize), Vec<&Fd>> = BTreeMap::new();
    for g in right {
        for c in &g.lhs {
            rights.entry((g.pred.as_str(), *c)).or_default().push(g);
        }
    }
    for a in left {
        if !trans.contains(&a.pred) {
            continue;
        }
        for g in rights.get(&(a.pred.as_str(), a.rhs)).into_iter().flatten() {
            if a.lhs.contains(&g.rhs) {
                continue;
            }
            let mut lhs = a.lhs.clone();
            lhs.extend(g.lhs.iter().filter(|c| **c != a.rhs));
            match replace_in_id(&g.id, a.rhs, &a.id, config) {
                Ok(id) => {
                    out.insert(Fd {
                        pred: a.pred.clone(),
                        lhs,
                        rhs: g.rhs,
                        id,
                    });
                }
                Err(e) => {
                    diags.insert(Diagnostic {
                        pred: a.pred.clone(),
                        lhs,
                        rhs: g.rhs,
                        depth: e.depth,
                        size: e.size,
                    });
                }
            }
        }
    }
}

pub fn step_transitive(fds: &BTreeSet<Fd>, trans: &BTreeSet<String>, config: &EngineConfig) -> (BTreeSet<Fd>, BTreeSet<Diagnostic>) {
    let mut out = BTreeSet::new();
    let mut diags = BTreeSet::new();
    transitive(fds, fds, trans, config, &mut out, &mut diags);
    (out, diags)
}

fn equate(left: &BTreeSet<Fd>, right: &BTreeSet<Fd>, trans: &BTreeSet<String>, out: &mut BTreeSet<Fd>) {
    let mut rights: BTreeMap<(&str, &BTreeSet<usize>, &IdTerm), Vec<&Fd>> = BTreeMap::new();
    for b in right {
        rights.entry((b.pred.as_str(), &b.lhs, &b.id)).or_default().push(b);
    }
    for a in left {
        if !trans.contains(&a.pred) {
            continue;
        }
        for b in rights.get(&(a.pred.as_str(), &a.lhs, &a.id)).into_iter().flatten() {
            if a.rhs != b.rhs {
                out.insert(Fd {
                    pred: a.pred.clone(),
                    lhs: BTreeSet::from([a.rhs]),
                    rhs: b.rhs,
                    id: IdTerm::Col(a.rhs),
                });
                out.insert(Fd {
                    pred: a.pred.clone(),
                    lhs: BTreeSet::from([b.rhs]),
                    rhs: a.rhs,
                    id: IdTerm::Col(b.rhs),
                });
            }
        }
    }
}

pub fn step_equate_rhs(fds: &BTreeSet<Fd>, trans: &BTreeSet<String>) -> BTreeSet<Fd> {
    let mut out = BTreeSet::new();
    equate(fds, fds, trans, &mut out);
    out
}

fn common_origin(paths: &PathRelation, p1: &str, p2: &str) -> bool {
    let s1: BTreeSet<&str> = paths.sources_of(p1).collect();
    paths.sources_of(p2).any(|x| s1.contains(x))
}

fn union(left: &BTreeSet<Fd>, right: &BTreeSet<Fd>, mf: &MetaFactBase, paths: &PathRelation, out: &mut BTreeSet<Fd>) {
    let lefts = by_pred(left);
    let mut heads: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (h, b, k) in &mf.rel {
        if *k == OperatorKind::Union {
            heads.entry(h.as_str()).or_default().push(b.as_str());
        }
    }
    for (p, ops) in heads {
        let [p1, p2] = ops.as_slice() else { continue };
        for (x, y) in [(*p1, *p2), (*p2, *p1)] {
            for f in lefts.get(x).into_iter().flatten() {
                let twin = Fd {
                    pred: y.into(),
                    ..(*f).clone()
                };
                if right.contains(&twin) && (f.id.is_constraint_only() || common_origin(paths, x, y)) {
                    out.insert(Fd {
                        pred: p.into(),
                        ..(*f).clone()
                    });
                }
            }
        }
    }
}

pub fn step_union(fds: &BTreeSet<Fd>, mf: &MetaFactBase, paths: &PathRelation) -> BTreeSet<Fd> {
    let mut out = BTreeSet::new();
    union(fds, fds, mf, paths, &mut out);
    out
}

/// Seeds potential dependencies and promotes those surviving the recursion.
pub fn step_recursion(facts: &BTreeSet<Fd>, potential: &BTreeSet<Fd>, mf: &MetaFactBase) -> (BTreeSet<Fd>, BTreeSet<Fd>) {
    let mut pot = BTreeSet::new();
    let mut promoted = BTreeSet::new();
    let real = by_pred(facts);
    for (p, q, r) in &mf.rec {
        for f in real.get(q.as_str()).into_iter().flatten() {
            pot.insert(Fd {
                pred: p.clone(),
                ..(*f).clone()
            });
            let survived = Fd {
                pred: r.clone(),
                ..(*f).clone()
            };
            if potential.contains(&survived) || facts.contains(&survived) {
                promoted.insert(Fd {
                    pred: p.clone(),
                    ..(*f).clone()
                });
            }
        }
    }
    (promoted, pot)
}

pub fn step_udf(mf: &MetaFactBase) -> BTreeSet<Fd> {
    mf.call
        .iter()
        .map(|c| Fd {
            pred: c.view.clone(),
            lhs: c.inputs.clone(),
            rhs: c.output,
            id: IdTerm::Node {
                origin: Origin::Func(c.function.clone()),
                children: c.inputs.iter().map(|i| IdTerm::Col(*i)).collect(),
            },
        })
        .collect()
}

/// The individual rule groups applied during saturation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Step {
    PositionPreserving,
    PositionMapped,
    Constraint,
    Transitive,
    EquateRhs,
    Union,
    Recursion,
    Udf,
}

impl Step {
    pub const ALL: [Step; 8] = [
        Step::PositionPreserving,
        Step::PositionMapped,
        Step::Constraint,
        Step::Transitive,
        Step::EquateRhs,
        Step::Union,
        Step::Recursion,
        Step::Udf,
    ];
}

struct State<'a> {
    mf: &'a MetaFactBase,
    paths: PathRelation,
    trans: BTreeSet<String>,
    config: EngineConfig,
    set: FdSet,
    /// Facts first derived in the previous round.
    delta: BTreeSet<Fd>,
    delta_pot: BTreeSet<Fd>,
    next: BTreeSet<Fd>,
    next_pot: BTreeSet<Fd>,
    first: bool,
}

fn joined(a: &BTreeSet<Fd>, b: &BTreeSet<Fd>) -> BTreeSet<Fd> {
    a.union(b).cloned().collect()
}

impl State<'_> {
    fn add(&mut self, real: BTreeSet<Fd>, pot: BTreeSet<Fd>) {
        for f in real {
            debug_assert!(!f.lhs.contains(&f.rhs));
            if self.set.facts.insert(f.clone()) {
                self.next.insert(f);
            }
        }
        for f in pot {
            debug_assert!(!f.lhs.contains(&f.rhs));
            if self.set.potential.insert(f.clone()) {
                self.next_pot.insert(f);
            }
        }
    }

    /// One semi-naive application of `step` to both universes: only
    /// derivations with a premise from the previous round are recomputed.
    /// A derivation is potential when at least one premise is potential.
    fn apply(&mut self, step: Step) {
        let (facts, pot) = (&self.set.facts, &self.set.potential);
        let (dr, dp) = (&self.delta, &self.delta_pot);
        let mut real_out = BTreeSet::new();
        let mut pot_out = BTreeSet::new();
        let mut diags = BTreeSet::new();
        match step {
            Step::PositionPreserving => {
                real_out = step_position_preserving(dr, self.mf);
                pot_out = step_position_preserving(dp, self.mf);
            }
            Step::PositionMapped => {
                real_out = step_position_mapped(dr, self.mf);
                pot_out = step_position_mapped(dp, self.mf);
            }
            Step::Constraint if self.first => real_out = step_constraint_fds(self.mf, &self.config),
            Step::Udf if self.first => real_out = step_udf(self.mf),
            Step::Constraint | Step::Udf => {}
            Step::Transitive => {
                let cap = &self.config;
                let t = &self.trans;
                transitive(dr, facts, t, cap, &mut real_out, &mut diags);
                transitive(facts, dr, t, cap, &mut real_out, &mut diags);
                if !dp.is_empty() || !pot.is_empty() {
                    let all = joined(facts, pot);
                    transitive(dp, &all, t, cap, &mut pot_out, &mut diags);
                    transitive(&all, dp, t, cap, &mut pot_out, &mut diags);
                    transitive(pot, dr, t, cap, &mut pot_out, &mut diags);
                    transitive(dr, pot, t, cap, &mut pot_out, &mut diags);
                }
            }
            Step::EquateRhs => {
                equate(dr, facts, &self.trans, &mut real_out);
                if !dp.is_empty() || !pot.is_empty() {
                    equate(dp, &joined(facts, pot), &self.trans, &mut pot_out);
                    equate(dr, pot, &self.trans, &mut pot_out);
                }
            }
            Step::Union => {
                let (mf, paths) = (self.mf, &self.paths);
                union(dr, facts, mf, paths, &mut real_out);
                union(facts, dr, mf, paths, &mut real_out);
                if !dp.is_empty() || !pot.is_empty() {
                    let all = joined(facts, pot);
                    union(dp, &all, mf, paths, &mut pot_out);
                    union(&all, dp, mf, paths, &mut pot_out);
                    union(pot, dr, mf, paths, &mut pot_out);
                    union(dr, pot, mf, paths, &mut pot_out);
                }
            }
            Step::Recursion => {
                (real_out, pot_out) = step_recursion(facts, pot, self.mf);
            }
        }
        self.set.diagnostics.extend(diags);
        self.add(real_out, pot_out);
    }
}

/// Least fixpoint of all propagation rules starting from `seeds`.
pub fn saturate(mf: &MetaFactBase, seeds: &BTreeSet<Fd>, config: &EngineConfig) -> FdSet {
    saturate_in_order(mf, seeds, config, &Step::ALL)
}

/// As [`saturate`], applying the rule groups in the given order each round.
pub fn saturate_in_order(mf: &MetaFactBase, seeds: &BTreeSet<Fd>, config: &EngineConfig, order: &[Step]) -> FdSet {
    let mut st = State {
        mf,
        paths: paths(mf),
        trans: trans_set(mf),
        config: *config,
        set: FdSet {
            facts: seeds.clone(),
            ..FdSet::default()
        },
        delta: seeds.clone(),
        delta_pot: BTreeSet::new(),
        next: BTreeSet::new(),
        next_pot: BTreeSet::new(),
        first: true,
    };
    loop {
        for s in order {
            st.apply(*s);
        }
        if st.next.is_empty() && st.next_pot.is_empty() && !st.first {
            break;
        }
        st.first = false;
        st.delta = core::mem::take(&mut st.next);
        st.delta_pot = core::mem::take(&mut st.next_pot);
    }
    st.set
}

pub fn describe(fd: &Fd, show_id: bool) -> String {
    if show_id {
        format!("{fd}.")
    } else {
        format!("fd({},{},{}).", fd.pred, set_literal(&fd.lhs), fd.rhs)
    }
}
