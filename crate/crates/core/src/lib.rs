//! Canonical decision trees for bounded-depth formulae under random
//! restrictions, together with the balancing machinery they rely on,
//! samplers, brute-force oracles, Monte Carlo experiments and an exact
//! model counter built on top of them.
//!
//! Variables are numbered from 1; in bit masks and truth-table indices
//! variable `i` is bit `i - 1`.

pub mod analysis;
pub mod balance;
pub mod cdt;
pub mod dtree;
pub mod error;
pub mod formula;
pub mod gen;
pub mod props;
pub mod restriction;
pub mod satcount;

pub use error::{Error, Result};
pub use formula::{parse_formula, Formula, FormulaStats, NodeId};
pub use restriction::{OrderedRestriction, ProbabilityTree, Restriction, RestrictionTree};
