//! 0-balancing and 1-balancing of decision trees.
//!
//! Balancing with label `b` mirrors the sibling subtree of every `b`-leaf
//! into that leaf, so each `b`-leaf ends up sharing its queried variable
//! sequence with some `!b`-leaf. The `assoc` map records which one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::dtree::{assoc_member_at, DecisionTree, DtNode, NodeRef, TreeBuilder};
use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::restriction::{OrderedRestriction, Restriction};

#[derive(Clone, Debug)]
pub struct BalancedTree {
    pub tree: DecisionTree,
    /// Indexed by node; set for every leaf that has an associated leaf.
    /// Only an all-`label` tree leaves it unset.
    pub assoc: Vec<Option<NodeRef>>,
    /// The label that was balanced (0 for [`zero_balance`]).
    pub label: bool,
}

impl BalancedTree {
    pub fn assoc_of(&self, leaf: NodeRef) -> Option<NodeRef> {
        self.assoc.get(leaf.index()).copied().flatten()
    }

    /// DOT export with associations drawn as dashed arrows.
    pub fn to_dot(&self) -> String {
        let mut extra = Vec::new();
        for (leaf, _) in self.tree.leaves() {
            if self.tree.label(leaf) == Some(self.label) {
                if let Some(to) = self.assoc_of(leaf) {
                    extra.push(format!("n{} -> n{} [style=dashed, color=blue, constraint=false];", leaf.0, to.0));
                }
            }
        }
        self.tree.to_dot_with(|_| None, &extra)
    }

    /// Check the structural invariants: good leaves map to themselves and
    /// every balanced leaf maps to a good leaf with the same variable
    /// sequence.
    pub fn check(&self) -> Result<()> {
        for (leaf, path) in self.tree.leaves() {
            let lab = self.tree.label(leaf).expect("leaf");
            let Some(to) = self.assoc_of(leaf) else {
                if lab == self.label && self.tree.leaf_count() == 1 {
                    continue;
                }
                return Err(Error::InvalidTree(format!("leaf n{} has no association", leaf.0)));
            };
            if lab != self.label && to != leaf {
                return Err(Error::InvalidTree(format!("leaf n{} should map to itself", leaf.0)));
            }
            if self.tree.label(to) != Some(!self.label) {
                return Err(Error::InvalidTree(format!("leaf n{} maps to a non-{} leaf", leaf.0, !self.label as u8)));
            }
            let target = self.tree.path_restriction(to).expect("reachable");
            if !path.same_domain_order(&target) {
                return Err(Error::InvalidTree(format!("leaf n{} and n{} query different variables", leaf.0, to.0)));
            }
        }
        Ok(())
    }
}

/// Replace every maximal subtree whose leaves all carry `label` by one leaf.
pub fn pull_up(t: &DecisionTree, label: bool) -> DecisionTree {
    fn uniform(t: &DecisionTree, r: NodeRef, label: bool, memo: &mut BTreeMap<NodeRef, bool>) -> bool {
        if let Some(&u) = memo.get(&r) {
            return u;
        }
        let u = match t.node(r) {
            DtNode::Leaf(b) => *b == label,
            DtNode::Query { children, .. } => {
                // every child gets a memo entry, so no short-circuiting
                let kids: Vec<bool> = children.iter().flatten().map(|&c| uniform(t, c, label, memo)).collect();
                kids.into_iter().all(|u| u)
            }
        };
        memo.insert(r, u);
        u
    }
    let mut memo = BTreeMap::new();
    uniform(t, t.root(), label, &mut memo);
    let mut b = DecisionTree::builder();
    let root = t.copy_into(&mut b, t.root(), &mut |_, r, b| {
        (memo[&r] && t.label(r).is_none()).then(|| crate::dtree::CopyStep::Replace(b.leaf(label)))
    });
    b.finish(root)
}

pub fn pull_up_zeros(t: &DecisionTree) -> DecisionTree {
    pull_up(t, false)
}

pub fn zero_balance(t: &DecisionTree) -> BalancedTree {
    balance(t, false)
}

pub fn one_balance(t: &DecisionTree) -> BalancedTree {
    balance(t, true)
}

/// Balance with respect to `label`. Leaves are handled deepest first: by the
/// time a `label`-leaf is mirrored its sibling subtree is already balanced,
/// and freshly mirrored leaves are never revisited.
pub fn balance(t: &DecisionTree, label: bool) -> BalancedTree {
    let pulled = pull_up(t, label);
    let mut b = DecisionTree::builder();
    let mut assoc: Vec<Option<NodeRef>> = Vec::new();
    let root = balance_at(&pulled, pulled.root(), label, &mut b, &mut assoc);
    assoc.resize(b.len(), None);
    BalancedTree { tree: b.finish(root), assoc, label }
}

fn set_assoc(assoc: &mut Vec<Option<NodeRef>>, at: NodeRef, to: Option<NodeRef>) {
    if assoc.len() <= at.index() {
        assoc.resize(at.index() + 1, None);
    }
    assoc[at.index()] = to;
}

fn balance_at(t: &DecisionTree, r: NodeRef, label: bool, b: &mut TreeBuilder, assoc: &mut Vec<Option<NodeRef>>) -> NodeRef {
    match t.node(r) {
        DtNode::Leaf(l) => {
            let n = b.leaf(*l);
            if *l != label {
                set_assoc(assoc, n, Some(n));
            }
            n
        }
        DtNode::Query { var, children: [Some(c0), Some(c1)] } => {
            let is_target = |c: NodeRef| t.label(c) == Some(label);
            let (lo, hi) = match (is_target(*c0), is_target(*c1)) {
                (true, false) => {
                    let hi = balance_at(t, *c1, label, b, assoc);
                    (mirror(b, hi, label, assoc), hi)
                }
                (false, true) => {
                    let lo = balance_at(t, *c0, label, b, assoc);
                    (lo, mirror(b, lo, label, assoc))
                }
                _ => (balance_at(t, *c0, label, b, assoc), balance_at(t, *c1, label, b, assoc)),
            };
            b.query(*var, Some(lo), Some(hi))
        }
        DtNode::Query { var, children } => {
            let lo = children[0].map(|c| balance_at(t, c, label, b, assoc));
            let hi = children[1].map(|c| balance_at(t, c, label, b, assoc));
            b.query(*var, lo, hi)
        }
    }
}

/// Copy the already-built subtree at `src`, relabelling every leaf to
/// `label` and inheriting associations.
fn mirror(b: &mut TreeBuilder, src: NodeRef, label: bool, assoc: &mut Vec<Option<NodeRef>>) -> NodeRef {
    match b.node(src).clone() {
        DtNode::Leaf(_) => {
            let n = b.leaf(label);
            let inherited = assoc.get(src.index()).copied().flatten();
            set_assoc(assoc, n, inherited);
            n
        }
        DtNode::Query { var, children } => {
            let lo = children[0].map(|c| mirror(b, c, label, assoc));
            let hi = children[1].map(|c| mirror(b, c, label, assoc));
            b.query(var, lo, hi)
        }
    }
}

/// For every good leaf `w` with path `beta`, the balanced leaves associated
/// with `w` must be exactly the ordered restrictions `alpha != beta` over
/// `beta`'s variable sequence that lie in ASSOC (of the balanced label) for
/// `f` under `rho`. `bt.tree` must compute `f` under `rho`.
pub fn verify_pivot_claim(f: &Formula, rho: &Restriction, bt: &BalancedTree) -> Result<bool> {
    let leaves = bt.tree.leaves();
    let mut by_target: BTreeMap<NodeRef, BTreeSet<Vec<bool>>> = BTreeMap::new();
    for (leaf, path) in &leaves {
        if bt.tree.label(*leaf) == Some(bt.label) {
            if let Some(to) = bt.assoc_of(*leaf) {
                by_target.entry(to).or_default().insert(path.bits());
            }
        }
    }
    for (leaf, beta) in &leaves {
        if bt.tree.label(*leaf) != Some(!bt.label) {
            continue;
        }
        let t = beta.len();
        if t > 20 {
            return Err(Error::Precondition(format!("path of length {t} too long to enumerate")));
        }
        let mut expected = BTreeSet::new();
        for flips in 1u32..(1u32 << t) {
            let entries = beta
                .entries()
                .iter()
                .enumerate()
                .map(|(i, &(v, d))| (v, d ^ ((flips >> i) & 1 == 1)))
                .collect();
            let alpha = OrderedRestriction::from_entries(entries)?;
            if assoc_member_at(f, f.root(), rho, &alpha, beta, bt.label)? {
                expected.insert(alpha.bits());
            }
        }
        let got = by_target.remove(leaf).unwrap_or_default();
        if got != expected {
            return Ok(false);
        }
    }
    Ok(by_target.is_empty())
}

/// Plain-text summary `path -> label (assoc path)` per leaf, for debugging.
pub fn describe(bt: &BalancedTree) -> String {
    let mut out = String::new();
    for (leaf, path) in bt.tree.leaves() {
        let to = bt.assoc_of(leaf).and_then(|a| bt.tree.path_restriction(a));
        let _ = writeln!(
            out,
            "{path} -> {} assoc {}",
            bt.tree.label(leaf).unwrap() as u8,
            to.map(|p| p.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    out
}
