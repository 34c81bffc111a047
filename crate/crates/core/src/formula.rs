//! Bounded-depth AND/OR formulae.
//!
//! A [`Formula`] is stored as an arena in preorder: the root is node 0 and
//! every child has a larger id than its parent. Adjacent gates of the same
//! kind are merged on construction, so every formula alternates between AND
//! and OR layers and its depth and size follow the usual layered definition
//! (size counts depth-1 subformulae).

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::restriction::Restriction;

/// Largest supported variable count. Assignments and restrictions are packed
/// into `u64` bitmasks with variable `i` at bit `i - 1`.
pub const MAX_VARS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    And,
    Or,
}

impl Gate {
    /// The child value that is skipped over when scanning children: 0 for OR,
    /// 1 for AND. The opposite value decides the gate.
    pub fn neutral(self) -> bool {
        matches!(self, Gate::And)
    }

    pub fn dual(self) -> Gate {
        match self {
            Gate::And => Gate::Or,
            Gate::Or => Gate::And,
        }
    }

    fn symbol(self) -> char {
        match self {
            Gate::And => '&',
            Gate::Or => '|',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Const(bool),
    Lit { var: usize, positive: bool },
    Gate { gate: Gate, children: Vec<NodeId> },
}

/// Unnormalized syntax tree, used by the parser and the generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(bool),
    Lit(usize, bool),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

impl Expr {
    pub fn var(v: usize) -> Expr {
        Expr::Lit(v, true)
    }

    pub fn not_var(v: usize) -> Expr {
        Expr::Lit(v, false)
    }
}

#[derive(Clone, Debug)]
struct Node {
    kind: NodeKind,
    parent: Option<NodeId>,
    depth: u32,
    size: u64,
    vars: u64,
    lambda: f64,
}

#[derive(Clone, Debug)]
pub struct Formula {
    nodes: Vec<Node>,
    n_vars: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FormulaStats {
    pub depth: u32,
    pub size: u64,
    pub lambda: f64,
    pub n_vars: usize,
}

/// `32^(d+1) * (log2(S)/d + 1)^d`, with the `d = 0` case fixed at 32.
pub fn lambda_sd(size: u64, d: u32) -> f64 {
    if d == 0 {
        return 32.0;
    }
    let d_f = d as f64;
    let s = (size.max(1)) as f64;
    32f64.powi(d as i32 + 1) * (s.log2() / d_f + 1.0).powi(d as i32)
}

/// Criticality parameter of a formula with the given depth and size.
///
/// A depth-(d+1) formula of size S gets `lambda_sd(S, d)`. Depth-0 formulae
/// (literals and constants) get 1: a literal survives a p-random restriction
/// as a non-constant with probability exactly p.
pub fn lambda_for(depth: u32, size: u64) -> f64 {
    if depth == 0 {
        1.0
    } else {
        lambda_sd(size, depth - 1)
    }
}

impl Formula {
    pub fn from_expr(expr: &Expr, n_vars: usize) -> Result<Formula> {
        if n_vars > MAX_VARS {
            return Err(Error::TooManyVars { n_vars, max: MAX_VARS });
        }
        let mut nodes = Vec::new();
        push_expr(&mut nodes, expr, None, n_vars)?;
        for i in (0..nodes.len()).rev() {
            let (depth, size, vars) = match &nodes[i].kind {
                NodeKind::Const(_) => (0, 0, 0),
                NodeKind::Lit { var, .. } => (0, 0, 1u64 << (var - 1)),
                NodeKind::Gate { children, .. } => {
                    let depth = 1 + children.iter().map(|c| nodes[c.index()].depth).max().unwrap_or(0);
                    let size = if depth == 1 {
                        1
                    } else {
                        children.iter().map(|c| nodes[c.index()].size).sum()
                    };
                    let vars = children.iter().fold(0, |m, c| m | nodes[c.index()].vars);
                    (depth, size, vars)
                }
            };
            let node = &mut nodes[i];
            node.depth = depth;
            node.size = size;
            node.vars = vars;
            node.lambda = lambda_for(depth, size);
        }
        Ok(Formula { nodes, n_vars })
    }

    pub fn constant(value: bool, n_vars: usize) -> Formula {
        Formula::from_expr(&Expr::Const(value), n_vars).expect("constant formula")
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Number of subformulae.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn kind(&self, id: NodeId) -> &NodeKind {
        &self.nodes[id.index()].kind
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        match &self.nodes[id.index()].kind {
            NodeKind::Gate { children, .. } => children,
            _ => &[],
        }
    }

    pub fn gate(&self, id: NodeId) -> Option<Gate> {
        match &self.nodes[id.index()].kind {
            NodeKind::Gate { gate, .. } => Some(*gate),
            _ => None,
        }
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.index()].parent
    }

    pub fn depth(&self, id: NodeId) -> u32 {
        self.nodes[id.index()].depth
    }

    pub fn size(&self, id: NodeId) -> u64 {
        self.nodes[id.index()].size
    }

    pub fn lambda(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].lambda
    }

    /// Bitmask of the variables occurring in the subformula.
    pub fn var_mask(&self, id: NodeId) -> u64 {
        self.nodes[id.index()].vars
    }

    /// Mask with one bit per variable of the index set `1..=n`.
    pub fn full_mask(&self) -> u64 {
        full_mask(self.n_vars)
    }

    pub fn stats(&self) -> FormulaStats {
        let root = self.root();
        FormulaStats {
            depth: self.depth(root),
            size: self.size(root),
            lambda: self.lambda(root),
            n_vars: self.n_vars,
        }
    }

    /// Parent/child pairs of the formula tree.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.node_ids()
            .filter_map(move |c| self.parent(c).map(|p| (p, c)))
    }

    /// Evaluate on a full assignment (variable `i` is bit `i - 1`).
    pub fn eval(&self, x: u64) -> bool {
        self.eval_node(self.root(), x)
    }

    pub fn eval_node(&self, id: NodeId, x: u64) -> bool {
        match &self.nodes[id.index()].kind {
            NodeKind::Const(b) => *b,
            NodeKind::Lit { var, positive } => ((x >> (var - 1)) & 1 == 1) == *positive,
            NodeKind::Gate { gate: Gate::Or, children } => children.iter().any(|&c| self.eval_node(c, x)),
            NodeKind::Gate { gate: Gate::And, children } => children.iter().all(|&c| self.eval_node(c, x)),
        }
    }

    /// `Some(b)` if the subformula restricted by `rho` is the constant `b`,
    /// decided by enumerating the free variables it mentions.
    pub fn const_under(&self, id: NodeId, rho: &Restriction) -> Option<bool> {
        let free = self.var_mask(id) & !rho.set_mask();
        let base = rho.value_mask();
        let first = self.eval_node(id, base);
        let mut sub = free;
        while sub != 0 {
            if self.eval_node(id, base | sub) != first {
                return None;
            }
            sub = (sub - 1) & free;
        }
        Some(first)
    }

    /// Replace literals on `Dom(rho)` by constants. No other simplification:
    /// node ids, depth and gate structure are preserved.
    pub fn restrict(&self, rho: &Restriction) -> Formula {
        let mut out = self.clone();
        for node in out.nodes.iter_mut() {
            if let NodeKind::Lit { var, positive } = node.kind {
                if let Some(b) = rho.get(var) {
                    node.kind = NodeKind::Const(b == positive);
                    node.vars = 0;
                }
            }
        }
        for i in (0..out.nodes.len()).rev() {
            if let NodeKind::Gate { children, .. } = &out.nodes[i].kind {
                let vars = children.iter().fold(0, |m, c| m | out.nodes[c.index()].vars);
                out.nodes[i].vars = vars;
            }
        }
        out
    }

    /// De Morgan dual computing the negation: gates swapped, literals and
    /// constants negated. Node ids are preserved.
    pub fn negated(&self) -> Formula {
        let mut out = self.clone();
        for node in out.nodes.iter_mut() {
            node.kind = match &node.kind {
                NodeKind::Const(b) => NodeKind::Const(!b),
                NodeKind::Lit { var, positive } => NodeKind::Lit { var: *var, positive: !positive },
                NodeKind::Gate { gate, children } => NodeKind::Gate { gate: gate.dual(), children: children.clone() },
            };
        }
        out
    }

    pub fn to_expr(&self) -> Expr {
        self.expr_at(self.root())
    }

    pub fn expr_at(&self, id: NodeId) -> Expr {
        match self.kind(id) {
            NodeKind::Const(b) => Expr::Const(*b),
            NodeKind::Lit { var, positive } => Expr::Lit(*var, *positive),
            NodeKind::Gate { gate, children } => {
                let ch = children.iter().map(|&c| self.expr_at(c)).collect();
                match gate {
                    Gate::And => Expr::And(ch),
                    Gate::Or => Expr::Or(ch),
                }
            }
        }
    }

    fn write_node(&self, id: NodeId, out: &mut String) {
        match self.kind(id) {
            NodeKind::Const(b) => out.push(if *b { '1' } else { '0' }),
            NodeKind::Lit { var, positive } => {
                if !positive {
                    out.push('~');
                }
                out.push('x');
                out.push_str(&var.to_string());
            }
            NodeKind::Gate { gate, children } => {
                out.push('(');
                for (i, &c) in children.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                        out.push(gate.symbol());
                        out.push(' ');
                    }
                    self.write_node(c, out);
                }
                if children.len() == 1 {
                    out.push(' ');
                    out.push(gate.symbol());
                }
                out.push(')');
            }
        }
    }
}

/// Structural equality: same tree shape, gates, literals and variable count.
impl PartialEq for Formula {
    fn eq(&self, other: &Formula) -> bool {
        self.n_vars == other.n_vars
            && self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| a.kind == b.kind)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_node(self.root(), &mut s);
        f.write_str(&s)
    }
}

pub(crate) fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn push_expr(nodes: &mut Vec<Node>, expr: &Expr, parent: Option<NodeId>, n_vars: usize) -> Result<NodeId> {
    let id = NodeId(nodes.len() as u32);
    let blank = |kind| Node { kind, parent, depth: 0, size: 0, vars: 0, lambda: 0.0 };
    match expr {
        Expr::Const(b) => nodes.push(blank(NodeKind::Const(*b))),
        Expr::Lit(v, positive) => {
            if *v == 0 || *v > n_vars {
                return Err(Error::VarOutOfRange { var: *v, n_vars });
            }
            nodes.push(blank(NodeKind::Lit { var: *v, positive: *positive }));
        }
        Expr::And(children) | Expr::Or(children) => {
            let gate = if matches!(expr, Expr::And(_)) { Gate::And } else { Gate::Or };
            let mut flat = Vec::new();
            flatten(gate, children, &mut flat);
            if flat.is_empty() {
                return Err(Error::EmptyGate);
            }
            nodes.push(blank(NodeKind::Gate { gate, children: Vec::new() }));
            let mut ids = Vec::with_capacity(flat.len());
            for c in flat {
                ids.push(push_expr(nodes, c, Some(id), n_vars)?);
            }
            nodes[id.index()].kind = NodeKind::Gate { gate, children: ids };
        }
    }
    Ok(id)
}

fn flatten<'a>(gate: Gate, children: &'a [Expr], out: &mut Vec<&'a Expr>) {
    for c in children {
        match (gate, c) {
            (Gate::And, Expr::And(inner)) | (Gate::Or, Expr::Or(inner)) => flatten(gate, inner, out),
            _ => out.push(c),
        }
    }
}

/// Parse formula text.
///
/// Grammar: `formula := "0" | "1" | lit | "(" formula (op formula)+ ")"`,
/// `lit := "~"? "x" INT`, one operator kind (`&` or `|`) per group. A group
/// with a single child is written `(f &)` or `(f |)`.
pub fn parse_formula(text: &str, n_vars: usize) -> Result<Formula> {
    let expr = parse_expr(text)?;
    Formula::from_expr(&expr, n_vars)
}

/// Parse without a variable bound; useful to infer `n_vars` from the text.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser { s: text.as_bytes(), pos: 0 };
    let e = p.formula()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

/// Largest variable index mentioned by an expression (0 if none).
pub fn max_var(expr: &Expr) -> usize {
    match expr {
        Expr::Const(_) => 0,
        Expr::Lit(v, _) => *v,
        Expr::And(c) | Expr::Or(c) => c.iter().map(max_var).max().unwrap_or(0),
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Parse { pos: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn formula(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some(b'0') => {
                self.pos += 1;
                Ok(Expr::Const(false))
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(Expr::Const(true))
            }
            Some(b'~') | Some(b'x') => self.literal(),
            Some(b'(') => self.group(),
            Some(_) => Err(self.err("expected '0', '1', a literal or '('")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn literal(&mut self) -> Result<Expr> {
        let positive = if self.peek() == Some(b'~') {
            self.pos += 1;
            self.skip_ws();
            false
        } else {
            true
        };
        if self.peek() != Some(b'x') {
            return Err(self.err("expected 'x'"));
        }
        self.pos += 1;
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected variable index"));
        }
        let digits = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii digits");
        let var = digits
            .parse::<usize>()
            .map_err(|_| Error::Parse { pos: start, message: "variable index too large".into() })?;
        if var == 0 {
            return Err(Error::Parse { pos: start, message: "variable indices start at 1".into() });
        }
        Ok(Expr::Lit(var, positive))
    }

    fn group(&mut self) -> Result<Expr> {
        self.pos += 1;
        let first = self.formula()?;
        self.skip_ws();
        let op = match self.peek() {
            Some(c @ (b'&' | b'|')) => c,
            Some(b')') => return Err(self.err("a group needs an operator")),
            _ => return Err(self.err("expected '&' or '|'")),
        };
        let mut children = vec![first];
        loop {
            // at an operator
            self.pos += 1;
            self.skip_ws();
            if self.peek() == Some(b')') && children.len() == 1 {
                self.pos += 1;
                break;
            }
            children.push(self.formula()?);
            self.skip_ws();
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(c) if c == op => {}
                Some(b'&' | b'|') => return Err(self.err("mixed operators in one group")),
                Some(_) => return Err(self.err("expected operator or ')'")),
                None => return Err(self.err("unclosed '('")),
            }
        }
        Ok(if op == b'&' { Expr::And(children) } else { Expr::Or(children) })
    }
}
