//! Zero-error model counting by compiling a formula into a decision tree.
//!
//! A domain tree picks, for every subformula, a set of variables that are
//! queried up front. Every assignment to the root's set yields a
//! restriction tree, and the CDT under it finishes the job.

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cdt::{CdtBuilder, CdtOptions, DEFAULT_NODE_BUDGET};
use crate::dtree::{DecisionTree, DtNode, NodeRef, TreeBuilder};
use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::restriction::{mask_vars, Restriction, RestrictionTree};

/// One variable set per subformula, stored as a bit mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainTree {
    per_node: Vec<u64>,
}

impl DomainTree {
    /// Node `G` gets `{i : tau_i <= 1 - 1/(8 lambda(G))}`.
    pub fn from_tau(f: &Formula, tau: &[f64]) -> DomainTree {
        let per_node = f
            .node_ids()
            .map(|id| {
                let threshold = 1.0 - 1.0 / (8.0 * f.lambda(id));
                tau.iter().enumerate().filter(|(_, &t)| t <= threshold).fold(0u64, |m, (i, _)| m | 1 << i)
            })
            .collect();
        DomainTree { per_node }
    }

    pub fn sample<R: Rng + ?Sized>(f: &Formula, rng: &mut R) -> DomainTree {
        let tau: Vec<f64> = (0..f.n_vars()).map(|_| rng.gen()).collect();
        Self::from_tau(f, &tau)
    }

    pub fn get(&self, id: crate::formula::NodeId) -> u64 {
        self.per_node[id.index()]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.per_node.iter().map(|m| m.count_ones() as usize).collect()
    }

    /// Sets shrink from every node to its children.
    pub fn is_nested(&self, f: &Formula) -> bool {
        f.edges().all(|(p, c)| self.get(c) & !self.get(p) == 0)
    }

    /// Node `G` fixes `D(G)` according to `sigma` and leaves the rest free.
    pub fn restriction_tree(&self, f: &Formula, sigma: u64) -> RestrictionTree {
        let n = f.n_vars();
        RestrictionTree::new(self.per_node.iter().map(|&m| Restriction::from_masks(n, m, sigma)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountResult {
    pub count: u128,
    /// Leaves of the composed tree after contraction.
    pub tree_leaves: u128,
    pub d_tilde_sizes: Vec<usize>,
    #[serde(serialize_with = "ser_millis")]
    pub elapsed: Duration,
}

fn ser_millis<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}

/// Spread the low bits of `idx` over the positions of `mask`.
fn scatter(idx: u64, mask: u64) -> u64 {
    let mut out = 0;
    let mut m = mask;
    let mut i = 0;
    while m != 0 {
        let low = m & m.wrapping_neg();
        if idx >> i & 1 == 1 {
            out |= low;
        }
        m &= m - 1;
        i += 1;
    }
    out
}

fn cdt_for(f: &Formula, rt: &RestrictionTree, budget: usize) -> Result<std::rc::Rc<DecisionTree>> {
    let opts = CdtOptions { node_budget: budget, ..CdtOptions::default() };
    CdtBuilder::new_unchecked(f, rt, opts).build(f.root(), &Restriction::empty(f.n_vars()))
}

/// Count with a fixed domain tree. The answer is exact for every domain
/// tree; only the running time depends on it.
pub fn count_with_domain(f: &Formula, dt: &DomainTree, node_budget: usize) -> Result<CountResult> {
    let start = Instant::now();
    let n = f.n_vars() as u32;
    let top = dt.get(f.root());
    let k = top.count_ones();
    if k >= 63 {
        return Err(Error::InvalidParameter(format!("{k} up-front variables is too many to enumerate")));
    }
    let (count, leaves) = (0..1u64 << k)
        .into_par_iter()
        .map(|idx| {
            let rt = dt.restriction_tree(f, scatter(idx, top));
            let t = cdt_for(f, &rt, node_budget)?;
            let mut count = 0u128;
            let mut leaves = 0u128;
            for_each_leaf(&t, |label, queried| {
                leaves += 1;
                if label {
                    count += 1u128 << (n - k - queried);
                }
            });
            Ok((count, leaves))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(CountResult { count, tree_leaves: leaves, d_tilde_sizes: dt.sizes(), elapsed: start.elapsed() })
}

/// Visit leaves with the number of degree-2 nodes above them.
fn for_each_leaf(t: &DecisionTree, mut f: impl FnMut(bool, u32)) {
    let mut stack = vec![(t.root(), 0u32)];
    while let Some((r, d)) = stack.pop() {
        match t.node(r) {
            DtNode::Leaf(b) => f(*b, d),
            DtNode::Query { children, .. } => {
                let step = u32::from(children.iter().all(|c| c.is_some()));
                stack.extend(children.iter().flatten().map(|&c| (c, d + step)));
            }
        }
    }
}

/// Sample a domain tree and count.
pub fn count_sat<R: Rng + ?Sized>(f: &Formula, rng: &mut R, node_budget: usize) -> Result<CountResult> {
    let dt = DomainTree::sample(f, rng);
    count_with_domain(f, &dt, node_budget)
}

pub fn count_sat_default<R: Rng + ?Sized>(f: &Formula, rng: &mut R) -> Result<CountResult> {
    count_sat(f, rng, DEFAULT_NODE_BUDGET)
}

/// The composed tree: a complete tree over the root's domain set (in
/// variable order) with the contracted CDT for each branch at its leaves.
pub fn compile_decision_tree(f: &Formula, dt: &DomainTree, node_budget: usize) -> Result<DecisionTree> {
    let top = dt.get(f.root());
    let vars = mask_vars(top);
    let mut b = DecisionTree::builder();
    let root = compose(f, dt, &vars, 0, 0, node_budget, &mut b)?;
    Ok(b.finish(root))
}

fn compose(
    f: &Formula,
    dt: &DomainTree,
    vars: &[usize],
    i: usize,
    sigma: u64,
    budget: usize,
    b: &mut TreeBuilder,
) -> Result<NodeRef> {
    if i == vars.len() {
        let t = cdt_for(f, &dt.restriction_tree(f, sigma), budget)?.contract();
        if b.len() + t.arena_len() > budget {
            return Err(Error::BudgetExceeded { budget });
        }
        return Ok(b.graft(&t));
    }
    let v = vars[i];
    let lo = compose(f, dt, vars, i + 1, sigma, budget, b)?;
    let hi = compose(f, dt, vars, i + 1, sigma | 1 << (v - 1), budget, b)?;
    Ok(b.query(v, Some(lo), Some(hi)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeStats {
    pub repetitions: usize,
    pub mean: f64,
    pub median: f64,
    pub min: u128,
    pub max: u128,
    /// `S * n * 2^((1 - 1/lambda) n)`, for comparison only.
    pub reference: f64,
}

/// Leaf counts of the composed tree over independent domain trees.
pub fn dt_size_stats<R: Rng + ?Sized>(f: &Formula, repetitions: usize, rng: &mut R) -> Result<SizeStats> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("at least one repetition needed".into()));
    }
    let mut sizes = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        sizes.push(count_sat(f, rng, DEFAULT_NODE_BUDGET)?.tree_leaves);
    }
    sizes.sort_unstable();
    let mid = repetitions / 2;
    let median = if repetitions % 2 == 1 { sizes[mid] as f64 } else { (sizes[mid - 1] + sizes[mid]) as f64 / 2.0 };
    let n = f.n_vars() as f64;
    let st = f.stats();
    Ok(SizeStats {
        repetitions,
        mean: sizes.iter().map(|&s| s as f64).sum::<f64>() / repetitions as f64,
        median,
        min: sizes[0],
        max: sizes[repetitions - 1],
        reference: st.size.max(1) as f64 * n * 2f64.powf((1.0 - 1.0 / st.lambda) * n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{brute_count, TruthTable};
    use crate::formula::parse_formula;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tiny_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = parse_formula("x1", 1).unwrap();
        assert_eq!(count_sat_default(&f, &mut rng).unwrap().count, 1);
        let f = parse_formula("(x1 | ~x1)", 1).unwrap();
        assert_eq!(count_sat_default(&f, &mut rng).unwrap().count, 2);
    }

    #[test]
    fn domain_thresholds() {
        let f = parse_formula("(x1 | x2 | x3)", 3).unwrap();
        let dt = DomainTree::from_tau(&f, &[0.5, 1.0 - 1.0 / 256.0, 0.999]);
        assert_eq!(dt.get(f.root()), 0b011);
        let none = DomainTree::from_tau(&f, &[1.0, 1.0, 1.0]);
        assert!(none.sizes().iter().all(|&s| s == 0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = parse_formula("((x1 & x2) | (x3 & (x4 | x5)))", 5).unwrap();
        for _ in 0..200 {
            assert!(DomainTree::sample(&g, &mut rng).is_nested(&g));
        }
    }

    #[test]
    fn degenerate_domains_agree_with_brute_force() {
        let f = parse_formula("((x1 & ~x2) | (x3 & x4) | (~x1 & x5))", 5).unwrap();
        let want = brute_count(&TruthTable::of_formula(&f).unwrap()) as u128;
        let full = DomainTree::from_tau(&f, &[0.0; 5]);
        let empty = DomainTree::from_tau(&f, &[1.0; 5]);
        let mixed = DomainTree::from_tau(&f, &[0.0, 1.0, 0.0, 1.0, 1.0]);
        for dt in [full, empty, mixed] {
            let r = count_with_domain(&f, &dt, DEFAULT_NODE_BUDGET).unwrap();
            assert_eq!(r.count, want);
            let t = compile_decision_tree(&f, &dt, DEFAULT_NODE_BUDGET).unwrap();
            assert_eq!(t.leaf_count() as u128, r.tree_leaves);
            assert!(t.computes_under(&f, &Restriction::empty(5)));
        }
        let full = DomainTree::from_tau(&f, &[0.0; 5]);
        assert_eq!(count_with_domain(&f, &full, DEFAULT_NODE_BUDGET).unwrap().tree_leaves, 32);
    }

    #[test]
    fn scatter_bits() {
        assert_eq!(scatter(0b11, 0b1010), 0b1010);
        assert_eq!(scatter(0b01, 0b1010), 0b0010);
    }
}
