//! Instance generators: formulae, restriction trees and decision trees.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dtree::{DecisionTree, NodeRef, TreeBuilder};
use crate::error::{Error, Result};
use crate::formula::{Expr, Formula, MAX_VARS};
use crate::restriction::{CoupledSample, ProbabilityTree, Restriction, RestrictionTree};

fn literal<R: Rng + ?Sized>(v: usize, rng: &mut R) -> Expr {
    if rng.gen() {
        Expr::var(v)
    } else {
        Expr::not_var(v)
    }
}

/// Formula of the given depth with fixed fanins, listed from the top gate
/// down. Depth-1 gates are ANDs with distinct variables and gate kinds
/// alternate upwards.
pub fn gen_random_formula(depth: usize, fanins: &[usize], n_vars: usize, seed: u64) -> Result<Formula> {
    if depth == 0 || fanins.len() != depth {
        return Err(Error::InvalidParameter(format!("need {depth} fanins for depth {depth}, got {}", fanins.len())));
    }
    if fanins.contains(&0) {
        return Err(Error::InvalidParameter("fanins must be positive".into()));
    }
    let bottom = fanins[depth - 1];
    if bottom > n_vars {
        return Err(Error::InvalidParameter(format!("depth-1 fanin {bottom} exceeds {n_vars} variables")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fn go(level: usize, fanins: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Expr {
        let fanin = fanins[fanins.len() - level];
        if level == 1 {
            let lits = sample(rng, n, fanin).into_iter().map(|i| literal(i + 1, rng)).collect();
            return Expr::And(lits);
        }
        let kids = (0..fanin).map(|_| go(level - 1, fanins, n, rng)).collect();
        if level % 2 == 1 {
            Expr::And(kids)
        } else {
            Expr::Or(kids)
        }
    }
    Formula::from_expr(&go(depth, fanins, n_vars, &mut rng), n_vars)
}

/// Irregular random formula of depth at most `depth`: random fanins in
/// `1..=max_fanin`, a random top gate, occasional literals and constants
/// mixed in above depth 1.
pub fn random_formula<R: Rng + ?Sized>(rng: &mut R, depth: usize, n_vars: usize, max_fanin: usize) -> Formula {
    let top_and: bool = rng.gen();
    let expr = random_expr(rng, depth, top_and, n_vars, max_fanin.max(1));
    Formula::from_expr(&expr, n_vars).expect("generated formula is well formed")
}

fn random_expr<R: Rng + ?Sized>(rng: &mut R, level: usize, and: bool, n: usize, max_fanin: usize) -> Expr {
    if level == 0 {
        return if rng.gen_bool(0.03) { Expr::Const(rng.gen()) } else { literal(rng.gen_range(1..=n), rng) };
    }
    let fanin = rng.gen_range(1..=max_fanin);
    let kids = if level == 1 {
        sample(rng, n, fanin.min(n)).into_iter().map(|i| literal(i + 1, rng)).collect()
    } else {
        (0..fanin)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    random_expr(rng, 0, !and, n, max_fanin)
                } else {
                    random_expr(rng, level - 1, !and, n, max_fanin)
                }
            })
            .collect()
    };
    if and {
        Expr::And(kids)
    } else {
        Expr::Or(kids)
    }
}

/// Formula of depth `d` computing the parity of `n` variables.
///
/// Depth 2 is the canonical DNF. Deeper formulae split the variables into
/// blocks of about `n^(1/(d-1))` and combine the blocks' parities through
/// one more alternation.
pub fn gen_parity_formula(n: usize, d: usize) -> Result<Formula> {
    if n == 0 || d < 2 {
        return Err(Error::InvalidParameter("parity needs n >= 1 and depth >= 2".into()));
    }
    if n > MAX_VARS {
        return Err(Error::TooManyVars { n_vars: n, max: MAX_VARS });
    }
    let vars: Vec<usize> = (1..=n).collect();
    Formula::from_expr(&parity_expr(&vars, true, d, false), n)
}

/// `parity(vars) == odd` at depth `depth`, with an AND top gate when
/// `and_top` is set and OR otherwise.
fn parity_expr(vars: &[usize], odd: bool, depth: usize, and_top: bool) -> Expr {
    let k = vars.len();
    if depth <= 2 {
        // enumerate assignments z of the block with parity(z) == odd (DNF),
        // or forbid each with parity(z) != odd (CNF)
        let mut gates = Vec::new();
        for z in 0u64..1 << k {
            let odd_z = z.count_ones() % 2 == 1;
            if and_top == (odd_z == odd) {
                continue;
            }
            let lits = vars
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let one = (z >> i) & 1 == 1;
                    // a term matches z; a clause excludes it
                    if one != and_top {
                        Expr::var(v)
                    } else {
                        Expr::not_var(v)
                    }
                })
                .collect();
            gates.push(if and_top { Expr::Or(lits) } else { Expr::And(lits) });
        }
        if gates.is_empty() {
            return Expr::Const(and_top);
        }
        return if and_top { Expr::And(gates) } else { Expr::Or(gates) };
    }
    let block = (k as f64).powf(1.0 / (depth as f64 - 1.0)).ceil().max(1.0) as usize;
    let blocks: Vec<&[usize]> = vars.chunks(block).collect();
    let m = blocks.len();
    let mut gates = Vec::new();
    for z in 0u64..1 << m {
        let odd_z = z.count_ones() % 2 == 1;
        let bit = |j: usize| (z >> j) & 1 == 1;
        if !and_top && odd_z == odd {
            // all blocks match z
            let kids = blocks.iter().enumerate().map(|(j, b)| parity_expr(b, bit(j), depth - 1, true)).collect();
            gates.push(Expr::And(kids));
        } else if and_top && odd_z != odd {
            // some block differs from z
            let kids = blocks.iter().enumerate().map(|(j, b)| parity_expr(b, !bit(j), depth - 1, false)).collect();
            gates.push(Expr::Or(kids));
        }
    }
    if and_top {
        Expr::And(gates)
    } else {
        Expr::Or(gates)
    }
}

/// Random valid probability tree: probabilities only grow from the root
/// towards the leaves.
pub fn random_probability_tree<R: Rng + ?Sized>(f: &Formula, root_max: f64, rng: &mut R) -> ProbabilityTree {
    let mut probs = vec![0.0; f.len()];
    for id in f.node_ids() {
        probs[id.index()] = match f.parent(id) {
            None => rng.gen::<f64>() * root_max,
            Some(p) => {
                let q = probs[p.index()];
                q + (1.0 - q) * rng.gen::<f64>() * 0.5
            }
        };
    }
    ProbabilityTree::new(probs)
}

/// Restriction tree with a random valid probability tree behind it.
pub fn random_restriction_tree<R: Rng + ?Sized>(f: &Formula, root_max: f64, rng: &mut R) -> RestrictionTree {
    let probs = random_probability_tree(f, root_max, rng);
    CoupledSample::draw(f.n_vars(), rng).restriction_tree(f, &probs)
}

/// Random restriction: each variable a star with probability `star`.
pub fn random_restriction<R: Rng + ?Sized>(n: usize, star: f64, rng: &mut R) -> Restriction {
    CoupledSample::draw(n, rng).restriction(star)
}

/// A random decision tree computing `f` under `rho`: free variables are
/// queried in random order until the formula is constant, and variables of
/// `Dom(rho)` occasionally appear as degree-1 nodes.
pub fn random_tree_computing<R: Rng + ?Sized>(f: &Formula, rho: &Restriction, rng: &mut R) -> DecisionTree {
    fn go<R: Rng + ?Sized>(f: &Formula, path: Restriction, pending: u64, b: &mut TreeBuilder, rng: &mut R) -> NodeRef {
        if pending != 0 && rng.gen_bool(0.25) {
            let choices = crate::restriction::mask_vars(pending);
            let v = choices[rng.gen_range(0..choices.len())];
            let bit = path.get(v).expect("forced variable");
            let child = go(f, path, pending & !(1u64 << (v - 1)), b, rng);
            return if bit { b.query(v, None, Some(child)) } else { b.query(v, Some(child), None) };
        }
        if let Some(c) = f.const_under(f.root(), &path) {
            return b.leaf(c);
        }
        let free = path.stars();
        let v = free[rng.gen_range(0..free.len())];
        let mut p0 = path;
        p0.set(v, false);
        let mut p1 = path;
        p1.set(v, true);
        let lo = go(f, p0, pending, b, rng);
        let hi = go(f, p1, pending, b, rng);
        b.query(v, Some(lo), Some(hi))
    }
    let mut b = DecisionTree::builder();
    let root = go(f, *rho, rho.set_mask(), &mut b, rng);
    b.finish(root)
}
