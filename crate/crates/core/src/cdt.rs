//! Canonical decision trees of formulae under restriction trees.
//!
//! The recursion step replaces a 0-leaf `u` by the tree of `F|alpha_u`. That
//! formula is never materialised: `alpha_u` is carried as an overlay that is
//! added to the restriction at every node, which keeps node ids intact.

use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use serde::Serialize;

use crate::balance::balance;
use crate::dtree::{DecisionTree, DtNode, NodeRef, TreeBuilder};
use crate::error::{Error, Result};
use crate::formula::{Formula, NodeId, NodeKind};
use crate::restriction::{OrderedRestriction, Restriction, RestrictionTree};

pub const DEFAULT_NODE_BUDGET: usize = 1 << 22;

#[derive(Clone, Debug)]
pub struct CdtOptions {
    /// Abort once any intermediate tree has more nodes than this.
    pub node_budget: usize,
    pub memoize: bool,
    pub trace: bool,
    /// Decide constancy of a child by enumeration when it has at most this
    /// many free variables; above that, by inspecting the child's own CDT.
    pub enumerate_up_to: u32,
}

impl Default for CdtOptions {
    fn default() -> Self {
        CdtOptions { node_budget: DEFAULT_NODE_BUDGET, memoize: true, trace: false, enumerate_up_to: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Zero,
    One,
    NonConstant,
}

impl Status {
    fn of(c: Option<bool>) -> Status {
        match c {
            Some(false) => Status::Zero,
            Some(true) => Status::One,
            None => Status::NonConstant,
        }
    }

    pub fn constant(self) -> Option<bool> {
        match self {
            Status::Zero => Some(false),
            Status::One => Some(true),
            Status::NonConstant => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Leaf { node: u32, overlay: String, label: bool },
    Expand { node: u32, overlay: String, child: usize, balanced_leaves: usize, grafts: usize },
}

#[derive(Clone, Debug)]
pub struct CdtResult {
    pub tree: DecisionTree,
    pub trace: Vec<TraceEvent>,
}

/// How a gate resolves under its effective restriction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Leaf(bool),
    /// Index (0-based) and id of the first child that is not the gate's
    /// neutral constant; that child is not constant either.
    Child(usize, NodeId),
}

pub struct CdtBuilder<'a> {
    f: &'a Formula,
    rt: &'a RestrictionTree,
    opts: CdtOptions,
    memo: HashMap<(NodeId, u64, u64), Rc<DecisionTree>>,
    trace: Vec<TraceEvent>,
}

impl<'a> CdtBuilder<'a> {
    pub fn new(f: &'a Formula, rt: &'a RestrictionTree, opts: CdtOptions) -> Result<CdtBuilder<'a>> {
        rt.check(f)?;
        Ok(Self::new_unchecked(f, rt, opts))
    }

    pub(crate) fn new_unchecked(f: &'a Formula, rt: &'a RestrictionTree, opts: CdtOptions) -> CdtBuilder<'a> {
        CdtBuilder { f, rt, opts, memo: HashMap::new(), trace: Vec::new() }
    }

    pub fn formula(&self) -> &Formula {
        self.f
    }

    pub fn into_trace(self) -> Vec<TraceEvent> {
        self.trace
    }

    /// Restriction governing node `g` once `overlay` has been applied.
    pub fn effective(&self, g: NodeId, overlay: &Restriction) -> Restriction {
        self.rt.get(g).extended(overlay)
    }

    /// CDT of the subformula at `g` with `overlay` fixed on top of the tree.
    pub fn build(&mut self, g: NodeId, overlay: &Restriction) -> Result<Rc<DecisionTree>> {
        let overlay = overlay.masked(self.f.var_mask(g));
        let key = (g, overlay.set_mask(), overlay.value_mask());
        if self.opts.memoize {
            if let Some(t) = self.memo.get(&key) {
                return Ok(Rc::clone(t));
            }
        }
        let t = Rc::new(self.build_uncached(g, &overlay)?);
        if t.arena_len() > self.opts.node_budget {
            return Err(Error::BudgetExceeded { budget: self.opts.node_budget });
        }
        if self.opts.memoize {
            self.memo.insert(key, Rc::clone(&t));
        }
        Ok(t)
    }

    fn build_uncached(&mut self, g: NodeId, overlay: &Restriction) -> Result<DecisionTree> {
        let eff = self.effective(g, overlay);
        let leaf = |this: &mut Self, label: bool| {
            if this.opts.trace {
                this.trace.push(TraceEvent::Leaf { node: g.0, overlay: overlay.to_string(), label });
            }
            Ok(DecisionTree::leaf(label))
        };
        match self.f.kind(g) {
            NodeKind::Const(b) => leaf(self, *b),
            NodeKind::Lit { var, positive } => match eff.get(*var) {
                Some(x) => leaf(self, x == *positive),
                None => {
                    let mut b = DecisionTree::builder();
                    let lo = b.leaf(!positive);
                    let hi = b.leaf(*positive);
                    let root = b.query(*var, Some(lo), Some(hi));
                    Ok(b.finish(root))
                }
            },
            NodeKind::Gate { gate, .. } => {
                let neutral = gate.neutral();
                let (idx, child) = match self.choose(g, overlay)? {
                    Choice::Leaf(label) => return leaf(self, label),
                    Choice::Child(i, c) => (i, c),
                };
                let gamma = self.build(child, overlay)?;
                let restricted = gamma
                    .apply_restriction(&eff)
                    .ok_or_else(|| Error::InvalidTree("child tree inconsistent with its parent restriction".into()))?;
                let balanced = balance(&restricted, neutral).tree;
                let mut b = DecisionTree::builder();
                let mut grafts = 0;
                let root = self.graft(&balanced, balanced.root(), neutral, g, *overlay, &mut b, &mut grafts)?;
                if self.opts.trace {
                    self.trace.push(TraceEvent::Expand {
                        node: g.0,
                        overlay: overlay.to_string(),
                        child: idx,
                        balanced_leaves: balanced.leaf_count(),
                        grafts,
                    });
                }
                Ok(b.finish(root))
            }
        }
    }

    /// Copy `t` into `b`, replacing every `neutral`-leaf `u` by the CDT of
    /// the gate under `overlay` plus the path to `u`.
    #[allow(clippy::too_many_arguments)]
    fn graft(
        &mut self,
        t: &DecisionTree,
        r: NodeRef,
        neutral: bool,
        g: NodeId,
        path: Restriction,
        b: &mut TreeBuilder,
        grafts: &mut usize,
    ) -> Result<NodeRef> {
        match t.node(r) {
            DtNode::Leaf(l) if *l == neutral => {
                *grafts += 1;
                let sub = self.build(g, &path)?;
                if b.len() + sub.arena_len() > self.opts.node_budget {
                    return Err(Error::BudgetExceeded { budget: self.opts.node_budget });
                }
                Ok(b.graft(&sub))
            }
            DtNode::Leaf(l) => Ok(b.leaf(*l)),
            DtNode::Query { var, children } => {
                let mut next = [None, None];
                for (bit, c) in children.iter().enumerate() {
                    if let Some(c) = c {
                        let mut p = path;
                        p.set(*var, bit == 1);
                        next[bit] = Some(self.graft(t, *c, neutral, g, p, b, grafts)?);
                    }
                }
                Ok(b.query(*var, next[0], next[1]))
            }
        }
    }

    /// Scan the children of gate `g` for the first one that is not the
    /// gate's neutral constant under the effective restriction.
    pub fn choose(&mut self, g: NodeId, overlay: &Restriction) -> Result<Choice> {
        let gate = self.f.gate(g).ok_or_else(|| Error::Precondition("node is not a gate".into()))?;
        let neutral = gate.neutral();
        let eff = self.effective(g, overlay);
        if self.f.var_mask(g) & !eff.set_mask() == 0 {
            return Ok(Choice::Leaf(self.f.eval_node(g, eff.value_mask())));
        }
        for (i, &c) in self.f.children(g).to_vec().iter().enumerate() {
            match self.status_under(c, overlay, &eff)? {
                Status::NonConstant => return Ok(Choice::Child(i, c)),
                s if s.constant() == Some(neutral) => continue,
                _ => return Ok(Choice::Leaf(!neutral)),
            }
        }
        Ok(Choice::Leaf(neutral))
    }

    /// Constancy of the subformula `c` under `rho`, where `rho` refines the
    /// effective restriction of `c`.
    pub fn status_under(&mut self, c: NodeId, overlay: &Restriction, rho: &Restriction) -> Result<Status> {
        let free = self.f.var_mask(c) & !rho.set_mask();
        if free.count_ones() <= self.opts.enumerate_up_to {
            return Ok(Status::of(self.f.const_under(c, rho)));
        }
        let t = self.build(c, overlay)?;
        Ok(match t.labels_under(rho) {
            (true, false) => Status::Zero,
            (false, true) => Status::One,
            _ => Status::NonConstant,
        })
    }
}

pub fn build_cdt(f: &Formula, rt: &RestrictionTree) -> Result<CdtResult> {
    build_cdt_with(f, rt, &Restriction::empty(f.n_vars()), CdtOptions::default())
}

/// CDT of `F|overlay` under `rt`.
pub fn build_cdt_with(f: &Formula, rt: &RestrictionTree, overlay: &Restriction, opts: CdtOptions) -> Result<CdtResult> {
    let mut b = CdtBuilder::new(f, rt, opts)?;
    let tree = b.build(f.root(), overlay)?;
    let tree = Rc::try_unwrap(tree).unwrap_or_else(|rc| (*rc).clone());
    Ok(CdtResult { tree, trace: b.into_trace() })
}

/// Exact constancy of the subformula `node` under `rho`, decided from the
/// node's CDT under `rt` (no enumeration shortcut). `rho` must refine
/// `rt(node)`.
pub fn constant_status(f: &Formula, rt: &RestrictionTree, node: NodeId, rho: &Restriction, memoize: bool) -> Result<Status> {
    if !rho.preceq(rt.get(node), None) {
        return Err(Error::Precondition("restriction does not refine the node's restriction".into()));
    }
    let opts = CdtOptions { memoize, enumerate_up_to: 0, ..CdtOptions::default() };
    let mut b = CdtBuilder::new(f, rt, opts)?;
    let t = b.build(node, &Restriction::empty(f.n_vars()))?;
    Ok(match t.labels_under(rho) {
        (true, false) => Status::Zero,
        (false, true) => Status::One,
        _ => Status::NonConstant,
    })
}

/// Ordered restriction of the node reached by walking `t` with `a`.
pub fn walk_path(t: &DecisionTree, a: &[bool]) -> Option<OrderedRestriction> {
    t.walk(a).map(|n| t.path_restriction(n).expect("walk stays in the tree"))
}

/// As [`walk_path`], but only when the walk ends on a leaf labelled `b`.
pub fn walk_labelled(t: &DecisionTree, a: &[bool], b: bool) -> Option<OrderedRestriction> {
    let n = t.walk(a)?;
    (t.label(n) == Some(b)).then(|| t.path_restriction(n).expect("walk stays in the tree"))
}

pub fn cdt_walk(f: &Formula, rt: &RestrictionTree, a: &[bool]) -> Result<Option<OrderedRestriction>> {
    Ok(walk_path(&build_cdt(f, rt)?.tree, a))
}

pub fn cdt_walk_labelled(f: &Formula, rt: &RestrictionTree, a: &[bool], b: bool) -> Result<Option<OrderedRestriction>> {
    Ok(walk_labelled(&build_cdt(f, rt)?.tree, a, b))
}

/// Decomposition of a walk that ends on a neutral leaf of a gate's CDT.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnpackWitness {
    /// Instruction bits consumed inside the chosen child's balanced tree.
    pub r: usize,
    /// 0-based index of the chosen child.
    pub ell: usize,
    pub t: usize,
    /// Instructions reaching `beta` in the child's own CDT.
    pub b: Vec<bool>,
    /// 1-based positions among the `t` degree-2 nodes on `beta`'s path whose
    /// variable is a star of the root restriction.
    pub q: Vec<usize>,
    #[serde(serialize_with = "ser_display")]
    pub alpha_prime: OrderedRestriction,
    #[serde(serialize_with = "ser_display")]
    pub alpha_second: OrderedRestriction,
    #[serde(serialize_with = "ser_display")]
    pub beta: OrderedRestriction,
}

fn ser_display<S: serde::Serializer>(v: &OrderedRestriction, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn root_gate(f: &Formula) -> Result<bool> {
    f.gate(f.root())
        .map(|g| g.neutral())
        .ok_or_else(|| Error::Precondition("formula must be rooted at a gate".into()))
}

fn degree2_positions(t: &DecisionTree, path: &OrderedRestriction) -> Vec<(usize, bool)> {
    let mut cur = t.root();
    let mut out = Vec::new();
    for &(v, bit) in path.entries() {
        let ch = t.children(cur);
        if ch[0].is_some() && ch[1].is_some() {
            out.push((v, bit));
        }
        cur = ch[bit as usize].expect("path edge exists");
    }
    out
}

/// Extract the witness for the walk `a` (length at least 1) ending on a
/// neutral leaf of `CDT(f, rt)`, or `None` when no such leaf is reached. The
/// neutral label is 0 for OR-rooted and 1 for AND-rooted formulae.
pub fn unpack_witness(f: &Formula, rt: &RestrictionTree, a: &[bool]) -> Result<Option<UnpackWitness>> {
    let neutral = root_gate(f)?;
    if a.is_empty() {
        return Err(Error::Precondition("instruction set must be non-empty".into()));
    }
    let empty = Restriction::empty(f.n_vars());
    let mut b = CdtBuilder::new(f, rt, CdtOptions::default())?;
    let whole = b.build(f.root(), &empty)?;
    if walk_labelled(&whole, a, neutral).is_none() {
        return Ok(None);
    }
    let Choice::Child(ell, child) = b.choose(f.root(), &empty)? else {
        return Err(Error::InvalidTree("walk of length >= 1 on a single-leaf tree".into()));
    };
    let root_rho = *rt.get(f.root());
    let gamma = b.build(child, &empty)?;
    let restricted = gamma.apply_restriction(&root_rho).expect("non-constant child survives");
    let bt = balance(&restricted, neutral);
    let (leaf, r) = bt.tree.walk_until_leaf(a);
    if bt.tree.label(leaf) != Some(neutral) {
        return Err(Error::InvalidTree("walk left the balanced child tree on a non-neutral leaf".into()));
    }
    let alpha_prime = bt.tree.path_restriction(leaf).expect("reachable");
    let target = bt.assoc_of(leaf).ok_or_else(|| Error::InvalidTree("balanced leaf without association".into()))?;
    let beta = bt.tree.path_restriction(target).expect("reachable");
    let steps = degree2_positions(&gamma, &beta);
    let bits: Vec<bool> = steps.iter().map(|&(_, bit)| bit).collect();
    let q = steps
        .iter()
        .enumerate()
        .filter(|(_, &(v, _))| !root_rho.is_set(v))
        .map(|(i, _)| i + 1)
        .collect();
    let rest = b.build(f.root(), &alpha_prime.to_restriction(f.n_vars()))?;
    let alpha_second = walk_labelled(&rest, &a[r..], neutral)
        .ok_or_else(|| Error::InvalidTree("remaining walk does not reach a neutral leaf".into()))?;
    Ok(Some(UnpackWitness { r, ell, t: bits.len(), b: bits, q, alpha_prime, alpha_second, beta }))
}

/// Recheck every condition of a witness against independently computed
/// quantities: constancy by enumeration, ASSOC membership directly, and the
/// tail walk on the explicitly restricted formula.
pub fn verify_witness(f: &Formula, rt: &RestrictionTree, a: &[bool], w: &UnpackWitness) -> Result<bool> {
    let neutral = root_gate(f)?;
    let root_rho = *rt.get(f.root());
    let children = f.children(f.root());
    let Some(&child) = children.get(w.ell) else { return Ok(false) };
    // (i) earlier children are the neutral constant, the chosen one is not constant
    if children[..w.ell].iter().any(|&c| f.const_under(c, &root_rho) != Some(neutral)) {
        return Ok(false);
    }
    if f.const_under(child, &root_rho).is_some() {
        return Ok(false);
    }
    // (ii) b walks the child's CDT to a non-neutral leaf with path beta
    let mut cb = CdtBuilder::new(f, rt, CdtOptions::default())?;
    let gamma = cb.build(child, &Restriction::empty(f.n_vars()))?;
    if w.b.len() != w.t || walk_labelled(&gamma, &w.b, !neutral).as_ref() != Some(&w.beta) {
        return Ok(false);
    }
    // (iii)
    if !w.beta.to_restriction(f.n_vars()).consistent(&root_rho) {
        return Ok(false);
    }
    // (iv) alpha' is where a leaves the balanced tree, and is associated with beta
    let bt = balance(&gamma.apply_restriction(&root_rho).expect("checked non-constant"), neutral);
    let (leaf, r) = bt.tree.walk_until_leaf(a);
    if r != w.r || r == 0 || r > a.len() || bt.tree.path_restriction(leaf).as_ref() != Some(&w.alpha_prime) {
        return Ok(false);
    }
    if w.alpha_prime == w.beta || !crate::dtree::assoc_member_at(f, child, &root_rho, &w.alpha_prime, &w.beta, neutral)? {
        return Ok(false);
    }
    // B: Q marks the positions that stay stars under the root restriction
    let steps = degree2_positions(&gamma, &w.beta);
    let q: Vec<usize> = steps.iter().enumerate().filter(|(_, &(v, _))| !root_rho.is_set(v)).map(|(i, _)| i + 1).collect();
    if q != w.q || q.len() != w.r || w.t < w.r {
        return Ok(false);
    }
    if steps.iter().any(|&(v, _)| rt.get(child).is_set(v)) {
        return Ok(false);
    }
    // C: remaining instructions on F restricted by alpha'
    let restricted = f.restrict(&w.alpha_prime.to_restriction(f.n_vars()));
    let tail = walk_labelled(&build_cdt(&restricted, rt)?.tree, &a[w.r..], neutral);
    if tail.as_ref() != Some(&w.alpha_second) {
        return Ok(false);
    }
    // the whole walk is the concatenation
    let whole = cdt_walk_labelled(f, rt, a, neutral)?;
    Ok(whole == Some(w.alpha_prime.concat(&w.alpha_second)?))
}

/// Whether the neutral-labelled walk `a` is unchanged when `refined`
/// replaces `rt`. Errors when the preconditions (walk exists, node-wise
/// refinement, agreement on the walk's variables) do not hold.
pub fn check_downward_closure(f: &Formula, rt: &RestrictionTree, refined: &RestrictionTree, a: &[bool]) -> Result<bool> {
    let neutral = root_gate(f)?;
    refined.check(f)?;
    let alpha = cdt_walk_labelled(f, rt, a, neutral)?
        .ok_or_else(|| Error::Precondition("walk does not reach a neutral leaf".into()))?;
    if !refined.preceq(rt, None) {
        return Err(Error::Precondition("refinement does not refine node-wise".into()));
    }
    let dom = alpha.var_mask();
    for id in f.node_ids() {
        let (x, y) = (rt.get(id).masked(dom), refined.get(id).masked(dom));
        if x != y {
            return Err(Error::Precondition(format!("refinement changes the walk's variables at node {}", id.0)));
        }
    }
    Ok(cdt_walk_labelled(f, refined, a, neutral)? == Some(alpha))
}

/// A random refinement of `rt` that leaves `keep` untouched: a few variables
/// outside `keep` are fixed on an ancestor-closed set of nodes. Values come
/// from the root restriction when it already fixes the variable.
pub fn random_refinement<R: Rng + ?Sized>(f: &Formula, rt: &RestrictionTree, keep: u64, rng: &mut R) -> RestrictionTree {
    let n = f.n_vars();
    let root_rho = *rt.get(f.root());
    let candidates: Vec<usize> = (1..=n).filter(|&v| keep >> (v - 1) & 1 == 0).collect();
    let mut out = rt.clone();
    if candidates.is_empty() {
        return out;
    }
    let k = rng.gen_range(1..=candidates.len().min(3));
    let mut extra = Restriction::empty(n);
    for _ in 0..k {
        let v = candidates[rng.gen_range(0..candidates.len())];
        extra.set(v, root_rho.get(v).unwrap_or_else(|| rng.gen()));
    }
    let all_nodes = rng.gen_bool(0.5);
    let mut chosen = vec![all_nodes; f.len()];
    if !all_nodes {
        for id in f.node_ids() {
            if rng.gen_bool(0.3) {
                let mut cur = Some(id);
                while let Some(c) = cur {
                    chosen[c.index()] = true;
                    cur = f.parent(c);
                }
            }
        }
    }
    for id in f.node_ids() {
        if chosen[id.index()] {
            let r = out.get_mut(id);
            *r = r.extended(&extra);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    fn empty_tree(f: &Formula) -> RestrictionTree {
        RestrictionTree::constant(f, Restriction::empty(f.n_vars()))
    }

    #[test]
    fn constants_and_literals() {
        let f = parse_formula("0", 2).unwrap();
        let t = build_cdt(&f, &empty_tree(&f)).unwrap().tree;
        assert!(t.same_shape(&DecisionTree::leaf(false)));

        let f = parse_formula("~x2", 2).unwrap();
        let t = build_cdt(&f, &empty_tree(&f)).unwrap().tree;
        assert_eq!(t.depth(), 1);
        assert!(t.computes_under(&f, &Restriction::empty(2)));
    }

    #[test]
    fn clause_all_zero_is_leaf() {
        let f = parse_formula("(x1 | ~x2 | x3)", 3).unwrap();
        let rt = RestrictionTree::constant(&f, "010".parse().unwrap());
        let t = build_cdt(&f, &rt).unwrap().tree;
        assert!(t.same_shape(&DecisionTree::leaf(false)));
    }

    #[test]
    fn term_gives_complete_tree() {
        // on its own the term keeps its optimal tree
        let f = parse_formula("(x1 & x2 & x3)", 3).unwrap();
        let t = build_cdt(&f, &empty_tree(&f)).unwrap().tree;
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(t.depth(), 3);
        // under an OR it is 0-balanced into the complete tree
        let f = parse_formula("((x1 & x2 & x3) |)", 3).unwrap();
        let t = build_cdt(&f, &empty_tree(&f)).unwrap().tree;
        assert_eq!(t.leaf_count(), 8);
        assert_eq!(t.depth(), 3);
        assert!(t.computes_under(&f, &Restriction::empty(3)));
        let ones: Vec<_> = t.leaves().into_iter().filter(|(l, _)| t.label(*l) == Some(true)).collect();
        assert_eq!(ones.len(), 1);
        assert_eq!(ones[0].1.bits(), vec![true, true, true]);
    }

    #[test]
    fn dnf_is_correct_under_restrictions() {
        let f = parse_formula("((x1 & x2) | (~x1 & x3) | (x2 & ~x4))", 4).unwrap();
        for s in ["****", "1***", "*0**", "**1*", "0**1"] {
            let rho: Restriction = s.parse().unwrap();
            let rt = RestrictionTree::constant(&f, rho);
            let t = build_cdt(&f, &rt).unwrap().tree;
            assert!(t.computes_under(&f, &rho), "{s}");
        }
    }

    #[test]
    fn constant_status_fixtures() {
        let f = parse_formula("x1", 1).unwrap();
        let rt = empty_tree(&f);
        assert_eq!(constant_status(&f, &rt, f.root(), &"1".parse().unwrap(), true).unwrap(), Status::One);
        let f = parse_formula("(x1 & x2)", 2).unwrap();
        let rt = empty_tree(&f);
        assert_eq!(constant_status(&f, &rt, f.root(), &"0*".parse().unwrap(), true).unwrap(), Status::Zero);
        assert_eq!(constant_status(&f, &rt, f.root(), &"1*".parse().unwrap(), false).unwrap(), Status::NonConstant);
    }

    #[test]
    fn walks() {
        let f = parse_formula("0", 1).unwrap();
        let rt = empty_tree(&f);
        assert_eq!(cdt_walk_labelled(&f, &rt, &[], false).unwrap(), Some(OrderedRestriction::new()));
        assert_eq!(cdt_walk_labelled(&f, &rt, &[], true).unwrap(), None);
        assert_eq!(cdt_walk(&f, &rt, &[true]).unwrap(), None);

        let f = parse_formula("(x1 & x2)", 2).unwrap();
        let rt = empty_tree(&f);
        let mid = cdt_walk(&f, &rt, &[true]).unwrap().unwrap();
        assert_eq!(mid.len(), 1);
    }

    #[test]
    fn unpack_skips_killed_term() {
        let f = parse_formula("((x1 & x2) | (x3 & x4))", 4).unwrap();
        let rt = RestrictionTree::constant(&f, "0***".parse().unwrap());
        let a = [false, true];
        let w = unpack_witness(&f, &rt, &a).unwrap().unwrap();
        assert_eq!(w.ell, 1);
        assert_eq!((w.r, w.t), (2, 2));
        assert_eq!(w.alpha_second, OrderedRestriction::new());
        assert!(verify_witness(&f, &rt, &a, &w).unwrap());
        assert_eq!(unpack_witness(&f, &rt, &[true, true]).unwrap(), None);
    }

    #[test]
    fn downward_closure_identity() {
        let f = parse_formula("((x1 & x2) | (x3 & ~x4))", 4).unwrap();
        let rt = empty_tree(&f);
        assert!(check_downward_closure(&f, &rt, &rt, &[false; 4]).unwrap());
    }

    #[test]
    fn budget_is_enforced() {
        let f = parse_formula("((x1 & x2 & x3) | (x4 & x5 & x6))", 6).unwrap();
        let opts = CdtOptions { node_budget: 10, ..CdtOptions::default() };
        let err = build_cdt_with(&f, &empty_tree(&f), &Restriction::empty(6), opts).unwrap_err();
        assert_eq!(err, Error::BudgetExceeded { budget: 10 });
    }

    #[test]
    fn trace_records_choices() {
        let f = parse_formula("((x1 & x2) | x3)", 3).unwrap();
        let opts = CdtOptions { trace: true, ..CdtOptions::default() };
        let res = build_cdt_with(&f, &empty_tree(&f), &Restriction::empty(3), opts).unwrap();
        assert!(res.trace.iter().any(|e| matches!(e, TraceEvent::Expand { child: 0, .. })));
        let json = serde_json::to_string(&res.trace).unwrap();
        assert!(json.contains("\"event\":\"expand\""));
    }
}
