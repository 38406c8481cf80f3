//! Static analysis of rule-defined database schemas.
//!
//! The pipeline runs parse, validate, normalize and extract meta-facts.
//! The dependency graph and the functional dependency engine work on the
//! extracted facts. `oracle` evaluates programs on concrete instances.

#![no_std]

extern crate alloc;

pub mod depgraph;
pub mod fd;
mod graph;
pub mod ir;
pub mod metafacts;
pub mod normalize;
pub mod oracle;
pub mod parser;
pub mod validate;

pub use ir::*;
pub use normalize::{classify, normalize, NormalProgram, NormalRule, OperatorKind, UnclassifiableRule};
pub use parser::{parse_program, render_program, SyntaxError};
pub use validate::{validate, ValidatedProgram, ValidationError};
pub use depgraph::{paths, query, PathRelation, Query};
pub use fd::{saturate, ConstIds, EngineConfig, Fd, FdSet, IdTerm, Origin};
pub use metafacts::{extract, fd_seeds, MetaFactBase, MetaFactError};
