//! Decision trees whose internal nodes have one or two children.
//!
//! A degree-1 node records a variable whose value is already forced; it
//! carries a single edge with an explicit bit. Depth counts degree-2 nodes
//! only.

use std::fmt::Write as _;

use crate::analysis::TruthTable;
use crate::error::{Error, Result};
use crate::formula::{Formula, NodeId};
use crate::restriction::{OrderedRestriction, Restriction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef(pub u32);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DtNode {
    Leaf(bool),
    /// `children[b]` is the edge labelled `b`.
    Query { var: usize, children: [Option<NodeRef>; 2] },
}

impl DtNode {
    pub fn degree(&self) -> usize {
        match self {
            DtNode::Leaf(_) => 0,
            DtNode::Query { children, .. } => children.iter().filter(|c| c.is_some()).count(),
        }
    }
}

/// An arena-backed decision tree. Nodes not reachable from the root are
/// ignored by every operation.
#[derive(Clone, Debug)]
pub struct DecisionTree {
    nodes: Vec<DtNode>,
    root: NodeRef,
}

/// Bit sequence steering a walk at degree-2 nodes.
pub type InstructionSet = [bool];

impl DecisionTree {
    pub fn leaf(label: bool) -> DecisionTree {
        DecisionTree { nodes: vec![DtNode::Leaf(label)], root: NodeRef(0) }
    }

    /// Start an empty arena; add nodes bottom-up, then call [`finish`].
    ///
    /// [`finish`]: DecisionTree::finish
    pub fn builder() -> TreeBuilder {
        TreeBuilder { nodes: Vec::new() }
    }

    pub fn root(&self) -> NodeRef {
        self.root
    }

    pub fn node(&self, r: NodeRef) -> &DtNode {
        &self.nodes[r.index()]
    }

    /// Size of the arena (equal to the reachable node count for trees built
    /// by this crate).
    pub fn arena_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn children(&self, r: NodeRef) -> [Option<NodeRef>; 2] {
        match self.node(r) {
            DtNode::Leaf(_) => [None, None],
            DtNode::Query { children, .. } => *children,
        }
    }

    pub fn label(&self, r: NodeRef) -> Option<bool> {
        match self.node(r) {
            DtNode::Leaf(b) => Some(*b),
            _ => None,
        }
    }

    /// Maximum number of degree-2 nodes on a root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth_at(self.root)
    }

    fn depth_at(&self, r: NodeRef) -> usize {
        match self.node(r) {
            DtNode::Leaf(_) => 0,
            DtNode::Query { children, .. } => {
                let here = usize::from(children[0].is_some() && children[1].is_some());
                here + children.iter().flatten().map(|&c| self.depth_at(c)).max().unwrap_or(0)
            }
        }
    }

    /// Longest root-to-leaf path counting every edge.
    pub fn max_path_len(&self) -> usize {
        fn go(t: &DecisionTree, r: NodeRef) -> usize {
            t.children(r).iter().flatten().map(|&c| 1 + go(t, c)).max().unwrap_or(0)
        }
        go(self, self.root)
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _| n += 1);
        n
    }

    pub fn leaf_count(&self) -> usize {
        let mut n = 0;
        self.visit(|t, r| n += usize::from(t.label(r).is_some()));
        n
    }

    fn visit(&self, mut f: impl FnMut(&DecisionTree, NodeRef)) {
        let mut stack = vec![self.root];
        while let Some(r) = stack.pop() {
            f(self, r);
            stack.extend(self.children(r).iter().flatten());
        }
    }

    /// All leaves with their path restrictions, left (0-edge) first.
    pub fn leaves(&self) -> Vec<(NodeRef, OrderedRestriction)> {
        let mut out = Vec::new();
        let mut path = OrderedRestriction::new();
        self.collect_leaves(self.root, &mut path, &mut out);
        out
    }

    fn collect_leaves(&self, r: NodeRef, path: &mut OrderedRestriction, out: &mut Vec<(NodeRef, OrderedRestriction)>) {
        match self.node(r) {
            DtNode::Leaf(_) => out.push((r, path.clone())),
            DtNode::Query { var, children } => {
                for (b, c) in children.iter().enumerate() {
                    if let Some(c) = c {
                        path.push(*var, b == 1);
                        self.collect_leaves(*c, path, out);
                        let keep = path.len() - 1;
                        *path = path.prefix(keep);
                    }
                }
            }
        }
    }

    /// Parent of every node with the bit on the connecting edge.
    pub fn parents(&self) -> Vec<Option<(NodeRef, bool)>> {
        let mut parents = vec![None; self.nodes.len()];
        self.visit(|t, r| {
            for (b, c) in t.children(r).iter().enumerate() {
                if let Some(c) = c {
                    parents[c.index()] = Some((r, b == 1));
                }
            }
        });
        parents
    }

    /// The `(variable, bit)` sequence from the root to `node`, degree-1 steps
    /// included. `None` if the node is not reachable.
    pub fn path_restriction(&self, node: NodeRef) -> Option<OrderedRestriction> {
        let parents = self.parents();
        let mut rev = Vec::new();
        let mut cur = node;
        while cur != self.root {
            let (p, b) = parents.get(cur.index()).copied().flatten()?;
            let DtNode::Query { var, .. } = self.node(p) else { unreachable!("parent is internal") };
            rev.push((*var, b));
            cur = p;
        }
        rev.reverse();
        Some(OrderedRestriction::from_entries(rev).expect("tree paths are duplicate-free"))
    }

    /// Walk from the root using `a` at degree-2 nodes and following degree-1
    /// edges for free. After the last instruction any further degree-1 edges
    /// are still followed. Returns the node where the walk stops, or `None` if
    /// a leaf is reached with instructions left over.
    pub fn walk(&self, a: &InstructionSet) -> Option<NodeRef> {
        let (node, used) = self.walk_until_leaf(a);
        (used == a.len()).then_some(node)
    }

    /// Walk as in [`walk`](Self::walk) but stop at the first leaf; returns the
    /// stopping node and the number of instructions consumed.
    pub fn walk_until_leaf(&self, a: &InstructionSet) -> (NodeRef, usize) {
        let mut cur = self.root;
        let mut used = 0;
        loop {
            match self.node(cur) {
                DtNode::Leaf(_) => return (cur, used),
                DtNode::Query { children: [Some(lo), Some(hi)], .. } => {
                    if used == a.len() {
                        return (cur, used);
                    }
                    cur = if a[used] { *hi } else { *lo };
                    used += 1;
                }
                DtNode::Query { children: [Some(c), None] | [None, Some(c)], .. } => cur = *c,
                DtNode::Query { children: [None, None], .. } => return (cur, used),
            }
        }
    }

    /// Instruction bits consumed at degree-2 nodes along the root-to-node path.
    pub fn instructions_to(&self, node: NodeRef) -> Option<Vec<bool>> {
        let path = self.path_restriction(node)?;
        let mut cur = self.root;
        let mut bits = Vec::new();
        for &(_, b) in path.entries() {
            let ch = self.children(cur);
            if ch[0].is_some() && ch[1].is_some() {
                bits.push(b);
            }
            cur = ch[b as usize].expect("path edge exists");
        }
        Some(bits)
    }

    /// Follow an ordered restriction from the root; `None` if it leaves the tree.
    pub fn follow(&self, path: &OrderedRestriction) -> Option<NodeRef> {
        let mut cur = self.root;
        for &(v, b) in path.entries() {
            match self.node(cur) {
                DtNode::Query { var, children } if *var == v => cur = children[b as usize]?,
                _ => return None,
            }
        }
        Some(cur)
    }

    /// Evaluate on a full assignment. Degree-1 edges that disagree with `x`
    /// put it outside the tree's domain and yield `None`.
    pub fn eval(&self, x: u64) -> Option<bool> {
        let mut cur = self.root;
        loop {
            match self.node(cur) {
                DtNode::Leaf(b) => return Some(*b),
                DtNode::Query { var, children } => {
                    let bit = (x >> (var - 1)) & 1 == 1;
                    cur = children[bit as usize]?;
                }
            }
        }
    }

    /// Remove all degree-1 nodes.
    pub fn contract(&self) -> DecisionTree {
        let mut b = DecisionTree::builder();
        let root = self.copy_into(&mut b, self.root, &mut |t, r, _| {
            let DtNode::Query { children, .. } = t.node(r) else { return None };
            match children {
                [Some(c), None] | [None, Some(c)] => Some(CopyStep::Descend(*c)),
                _ => None,
            }
        });
        b.finish(root)
    }

    /// Swap every leaf label.
    pub fn flip_labels(&self) -> DecisionTree {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                DtNode::Leaf(b) => DtNode::Leaf(!b),
                q => q.clone(),
            })
            .collect();
        DecisionTree { nodes, root: self.root }
    }

    /// Copy the subtree at `r` into `b`, letting `hook` intercept nodes.
    pub(crate) fn copy_into<F>(&self, b: &mut TreeBuilder, r: NodeRef, hook: &mut F) -> NodeRef
    where
        F: FnMut(&DecisionTree, NodeRef, &mut TreeBuilder) -> Option<CopyStep>,
    {
        match hook(self, r, b) {
            Some(CopyStep::Replace(n)) => return n,
            Some(CopyStep::Descend(c)) => return self.copy_into(b, c, hook),
            None => {}
        }
        match self.node(r) {
            DtNode::Leaf(l) => b.leaf(*l),
            DtNode::Query { var, children } => {
                let lo = children[0].map(|c| self.copy_into(b, c, hook));
                let hi = children[1].map(|c| self.copy_into(b, c, hook));
                b.query(*var, lo, hi)
            }
        }
    }

    /// Apply `rho`: degree-2 nodes on `Dom(rho)` keep only the consistent edge;
    /// subtrees hanging off inconsistent degree-1 edges are removed. `None` if
    /// nothing consistent with `rho` remains.
    pub fn apply_restriction(&self, rho: &Restriction) -> Option<DecisionTree> {
        fn go(t: &DecisionTree, r: NodeRef, rho: &Restriction, b: &mut TreeBuilder) -> Option<NodeRef> {
            match t.node(r) {
                DtNode::Leaf(l) => Some(b.leaf(*l)),
                DtNode::Query { var, children } => match rho.get(*var) {
                    Some(v) => {
                        let c = children[v as usize]?;
                        let c = go(t, c, rho, b)?;
                        Some(if v { b.query(*var, None, Some(c)) } else { b.query(*var, Some(c), None) })
                    }
                    None => {
                        let lo = children[0].and_then(|c| go(t, c, rho, b));
                        let hi = children[1].and_then(|c| go(t, c, rho, b));
                        if lo.is_none() && hi.is_none() {
                            None
                        } else {
                            Some(b.query(*var, lo, hi))
                        }
                    }
                },
            }
        }
        let mut b = DecisionTree::builder();
        let root = go(self, self.root, rho, &mut b)?;
        Some(b.finish(root))
    }

    /// Leaf labels reachable by inputs consistent with `rho`, as
    /// `(has_0, has_1)`.
    pub fn labels_under(&self, rho: &Restriction) -> (bool, bool) {
        let mut seen = (false, false);
        let mut stack = vec![self.root];
        while let Some(r) = stack.pop() {
            match self.node(r) {
                DtNode::Leaf(false) => seen.0 = true,
                DtNode::Leaf(true) => seen.1 = true,
                DtNode::Query { var, children } => match rho.get(*var) {
                    Some(v) => stack.extend(children[v as usize]),
                    None => stack.extend(children.iter().flatten()),
                },
            }
            if seen.0 && seen.1 {
                break;
            }
        }
        seen
    }

    /// Check that variables along every root-to-leaf path are distinct and
    /// that every internal node has at least one child.
    pub fn check_well_formed(&self) -> Result<()> {
        fn go(t: &DecisionTree, r: NodeRef, seen: u64) -> Result<()> {
            match t.node(r) {
                DtNode::Leaf(_) => Ok(()),
                DtNode::Query { var, children } => {
                    let bit = 1u64 << (var - 1);
                    if seen & bit != 0 {
                        return Err(Error::InvalidTree(format!("x{var} repeated on a path")));
                    }
                    if children.iter().all(|c| c.is_none()) {
                        return Err(Error::InvalidTree(format!("query on x{var} has no children")));
                    }
                    children.iter().flatten().try_for_each(|&c| go(t, c, seen | bit))
                }
            }
        }
        go(self, self.root, 0)
    }

    /// Structural equality of the reachable trees.
    pub fn same_shape(&self, other: &DecisionTree) -> bool {
        fn go(a: &DecisionTree, ra: NodeRef, b: &DecisionTree, rb: NodeRef) -> bool {
            match (a.node(ra), b.node(rb)) {
                (DtNode::Leaf(x), DtNode::Leaf(y)) => x == y,
                (DtNode::Query { var: va, children: ca }, DtNode::Query { var: vb, children: cb }) => {
                    va == vb
                        && ca.iter().zip(cb).all(|(x, y)| match (x, y) {
                            (None, None) => true,
                            (Some(x), Some(y)) => go(a, *x, b, *y),
                            _ => false,
                        })
                }
                _ => false,
            }
        }
        go(self, self.root, other, other.root)
    }

    /// Whether this tree computes `f` under `rho`: nodes on `Dom(rho)` are
    /// degree-1 with edge `rho(v)`, nodes on `stars(rho)` are degree-2, and
    /// at every leaf `v` the formula restricted by `rho` and the path of `v`
    /// is the constant `label(v)`. Leaf constancy is checked against the full
    /// truth table, so `f` must have at most 24 variables.
    pub fn computes_under(&self, f: &Formula, rho: &Restriction) -> bool {
        match TruthTable::of_formula(f) {
            Ok(tt) => self.computes_table_under(&tt, rho),
            Err(_) => false,
        }
    }

    pub fn computes_table_under(&self, tt: &TruthTable, rho: &Restriction) -> bool {
        let full = crate::formula::full_mask(tt.n_vars());
        self.check_well_formed().is_ok() && self.check_node(self.root, tt, rho, *rho, full)
    }

    fn check_node(&self, r: NodeRef, tt: &TruthTable, rho: &Restriction, path: Restriction, full: u64) -> bool {
        match self.node(r) {
            DtNode::Leaf(label) => {
                // every completion of rho + path must evaluate to `label`
                let free = !path.set_mask() & full;
                let base = path.value_mask();
                let mut sub = free;
                loop {
                    if tt.get(base | sub) != *label {
                        return false;
                    }
                    if sub == 0 {
                        return true;
                    }
                    sub = (sub - 1) & free;
                }
            }
            DtNode::Query { var, children } => match rho.get(*var) {
                Some(v) => match children {
                    [c0, c1] if c0.is_some() != c1.is_some() => {
                        let (bit, c) = if let Some(c) = c0 { (false, *c) } else { (true, c1.unwrap()) };
                        bit == v && self.check_node(c, tt, rho, path, full)
                    }
                    _ => false,
                },
                None => match children {
                    [Some(c0), Some(c1)] => {
                        let mut p0 = path;
                        p0.set(*var, false);
                        let mut p1 = path;
                        p1.set(*var, true);
                        self.check_node(*c0, tt, rho, p0, full) && self.check_node(*c1, tt, rho, p1, full)
                    }
                    _ => false,
                },
            },
        }
    }

    /// Nested JSON: `{"leaf": b}` or `{"var": v, "lo": .., "hi": ..}` with
    /// a missing edge as `null`.
    pub fn to_json(&self) -> serde_json::Value {
        fn go(t: &DecisionTree, r: NodeRef) -> serde_json::Value {
            match t.node(r) {
                DtNode::Leaf(b) => serde_json::json!({ "leaf": *b as u8 }),
                DtNode::Query { var, children } => {
                    let [lo, hi] = children.map(|c| c.map(|c| go(t, c)));
                    serde_json::json!({ "var": var, "lo": lo, "hi": hi })
                }
            }
        }
        go(self, self.root)
    }

    /// Graphviz rendering: degree-2 edges labelled 0/1, degree-1 edges `=b`,
    /// leaves as boxes.
    pub fn to_dot(&self) -> String {
        self.to_dot_with(|_| None, &[])
    }

    /// DOT with optional per-leaf annotations and extra statements appended
    /// inside the graph body.
    pub fn to_dot_with(&self, leaf_note: impl Fn(NodeRef) -> Option<String>, extra: &[String]) -> String {
        let mut out = String::from("digraph dt {\n  node [fontname=\"Helvetica\"];\n");
        let mut stack = vec![self.root];
        while let Some(r) = stack.pop() {
            match self.node(r) {
                DtNode::Leaf(b) => {
                    let note = leaf_note(r).map(|s| format!("\\n{s}")).unwrap_or_default();
                    let _ = writeln!(out, "  n{} [shape=box, label=\"{}{}\"];", r.0, *b as u8, note);
                }
                DtNode::Query { var, children } => {
                    let _ = writeln!(out, "  n{} [shape=circle, label=\"x{}\"];", r.0, var);
                    let degree2 = children.iter().all(|c| c.is_some());
                    for (b, c) in children.iter().enumerate() {
                        if let Some(c) = c {
                            let label = if degree2 { format!("{b}") } else { format!("={b}") };
                            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", r.0, c.0, label);
                            stack.push(*c);
                        }
                    }
                }
            }
        }
        for line in extra {
            let _ = writeln!(out, "  {line}");
        }
        out.push_str("}\n");
        out
    }
}

pub(crate) enum CopyStep {
    /// Use this already-built node instead of copying.
    Replace(NodeRef),
    /// Skip this node and copy the given child in its place.
    Descend(NodeRef),
}

/// Bottom-up node allocator for [`DecisionTree`].
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<DtNode>,
}

impl TreeBuilder {
    pub fn leaf(&mut self, label: bool) -> NodeRef {
        self.push(DtNode::Leaf(label))
    }

    /// Internal node; pass `None` for a missing edge (degree-1 node).
    pub fn query(&mut self, var: usize, lo: Option<NodeRef>, hi: Option<NodeRef>) -> NodeRef {
        debug_assert!(lo.is_some() || hi.is_some());
        self.push(DtNode::Query { var, children: [lo, hi] })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, r: NodeRef) -> &DtNode {
        &self.nodes[r.index()]
    }

    /// Copy the whole of `t` in, returning the new root.
    pub fn graft(&mut self, t: &DecisionTree) -> NodeRef {
        t.copy_into(self, t.root, &mut |_, _, _| None)
    }

    fn push(&mut self, n: DtNode) -> NodeRef {
        self.nodes.push(n);
        NodeRef(self.nodes.len() as u32 - 1)
    }

    pub fn finish(self, root: NodeRef) -> DecisionTree {
        DecisionTree { nodes: self.nodes, root }
    }
}

/// `alpha ∈ ASSOC_b(f, rho, beta)`: at every position `i` where the two
/// disagree, `f` restricted by `rho` and then by `alpha_i` (the first `i-1`
/// entries of `beta` followed by the `i`-th entry of `alpha`) is the
/// constant `target`. `target = false` gives ASSOC_0.
pub fn assoc_member_at(
    f: &Formula,
    node: NodeId,
    rho: &Restriction,
    alpha: &OrderedRestriction,
    beta: &OrderedRestriction,
    target: bool,
) -> Result<bool> {
    if !alpha.same_domain_order(beta) {
        return Err(Error::DomainMismatch);
    }
    let mut prefix = *rho;
    for (&(v, c), &(_, d)) in alpha.entries().iter().zip(beta.entries()) {
        if c != d {
            let mut step = Restriction::empty(rho.n_vars());
            step.set(v, c);
            if f.const_under(node, &prefix.extended(&step)) != Some(target) {
                return Ok(false);
            }
        }
        let mut step = Restriction::empty(rho.n_vars());
        step.set(v, d);
        prefix = prefix.extended(&step);
    }
    Ok(true)
}

/// ASSOC_0 membership for the whole formula.
pub fn assoc0_member(f: &Formula, rho: &Restriction, alpha: &OrderedRestriction, beta: &OrderedRestriction) -> Result<bool> {
    assoc_member_at(f, f.root(), rho, alpha, beta, false)
}

/// ASSOC_1 membership (roles of 0 and 1 reversed).
pub fn assoc1_member(f: &Formula, rho: &Restriction, alpha: &OrderedRestriction, beta: &OrderedRestriction) -> Result<bool> {
    assoc_member_at(f, f.root(), rho, alpha, beta, true)
}
