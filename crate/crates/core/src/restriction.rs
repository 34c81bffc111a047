//! Restrictions, ordered restrictions, restriction trees and the coupled
//! random-restriction samplers.
//!
//! All samplers go through a [`CoupledSample`]: one uniform bit string
//! `sigma` and one uniform point `tau` in `[0,1]^n`. A variable is a star at
//! probability level `q` iff `tau_v <= q`, otherwise it takes `sigma_v`.
//! Drawing every node of a restriction tree from the same sample is what
//! makes the per-node restrictions refine toward the root.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::formula::{full_mask, Formula, NodeId, MAX_VARS};

/// A partial assignment `V -> {0, 1, *}` over variables `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Restriction {
    n_vars: usize,
    set: u64,
    vals: u64,
}

impl Restriction {
    /// All variables unset.
    pub fn empty(n_vars: usize) -> Restriction {
        assert!(n_vars <= MAX_VARS, "at most {MAX_VARS} variables");
        Restriction { n_vars, set: 0, vals: 0 }
    }

    /// Build from raw masks; bits outside `set` are cleared from `vals`.
    pub fn from_masks(n_vars: usize, set: u64, vals: u64) -> Restriction {
        assert!(n_vars <= MAX_VARS, "at most {MAX_VARS} variables");
        let set = set & full_mask(n_vars);
        Restriction { n_vars, set, vals: vals & set }
    }

    /// Every variable fixed according to `x`.
    pub fn full(n_vars: usize, x: u64) -> Restriction {
        Restriction::from_masks(n_vars, u64::MAX, x)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn get(&self, var: usize) -> Option<bool> {
        let bit = 1u64 << (var - 1);
        (self.set & bit != 0).then_some(self.vals & bit != 0)
    }

    pub fn is_set(&self, var: usize) -> bool {
        self.set & (1u64 << (var - 1)) != 0
    }

    pub fn set(&mut self, var: usize, value: bool) {
        let bit = 1u64 << (var - 1);
        self.set |= bit;
        if value {
            self.vals |= bit;
        } else {
            self.vals &= !bit;
        }
    }

    pub fn unset(&mut self, var: usize) {
        let bit = 1u64 << (var - 1);
        self.set &= !bit;
        self.vals &= !bit;
    }

    /// Bitmask of `Dom(rho)`.
    pub fn set_mask(&self) -> u64 {
        self.set
    }

    /// Values of the set variables (zero outside `Dom(rho)`).
    pub fn value_mask(&self) -> u64 {
        self.vals
    }

    /// Bitmask of `stars(rho)`.
    pub fn star_mask(&self) -> u64 {
        !self.set & full_mask(self.n_vars)
    }

    pub fn domain(&self) -> Vec<usize> {
        mask_vars(self.set)
    }

    pub fn stars(&self) -> Vec<usize> {
        mask_vars(self.star_mask())
    }

    pub fn consistent(&self, other: &Restriction) -> bool {
        let common = self.set & other.set;
        (self.vals ^ other.vals) & common == 0
    }

    /// `self ≼ other`: `self` sets every variable `other` sets (within
    /// `within`, all variables when `None`) and the two are consistent.
    pub fn preceq(&self, other: &Restriction, within: Option<u64>) -> bool {
        let s = within.unwrap_or(u64::MAX);
        (self.star_mask() & s) & !(other.star_mask() & s) == 0 && self.consistent(other)
    }

    /// Union of two consistent restrictions.
    pub fn compose(&self, other: &Restriction) -> Result<Restriction> {
        let clash = (self.vals ^ other.vals) & self.set & other.set;
        if clash != 0 {
            return Err(Error::Inconsistent { var: clash.trailing_zeros() as usize + 1 });
        }
        Ok(Restriction {
            n_vars: self.n_vars.max(other.n_vars),
            set: self.set | other.set,
            vals: self.vals | other.vals,
        })
    }

    /// Add the assignments of `other` on variables `self` leaves unset;
    /// `self` wins wherever both are set.
    pub fn extended(&self, other: &Restriction) -> Restriction {
        let add = other.set & !self.set;
        Restriction { n_vars: self.n_vars, set: self.set | add, vals: self.vals | (other.vals & add) }
    }

    /// Override bits of a full assignment with this restriction's values.
    pub fn merge_into(&self, x: u64) -> u64 {
        (x & !self.set) | self.vals
    }

    /// The restriction limited to the variables in `mask`.
    pub fn masked(&self, mask: u64) -> Restriction {
        Restriction { n_vars: self.n_vars, set: self.set & mask, vals: self.vals & mask }
    }
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (1..=self.n_vars)
            .map(|v| match self.get(v) {
                None => '*',
                Some(false) => '0',
                Some(true) => '1',
            })
            .collect();
        f.write_str(&s)
    }
}

impl FromStr for Restriction {
    type Err = Error;

    /// Parse a string over `{0,1,*}` in variable order, e.g. `"01**1"`.
    fn from_str(s: &str) -> Result<Restriction> {
        let n = s.chars().count();
        if n > MAX_VARS {
            return Err(Error::TooManyVars { n_vars: n, max: MAX_VARS });
        }
        let mut r = Restriction::empty(n);
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => r.set(i + 1, false),
                '1' => r.set(i + 1, true),
                '*' => {}
                _ => {
                    return Err(Error::Parse { pos: i, message: format!("unexpected '{c}' in restriction") })
                }
            }
        }
        Ok(r)
    }
}

pub(crate) fn mask_vars(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect()
}

/// A duplicate-free sequence of `(variable, bit)` pairs, e.g. the path
/// signature of a decision tree node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct OrderedRestriction {
    entries: Vec<(usize, bool)>,
}

impl OrderedRestriction {
    pub fn new() -> OrderedRestriction {
        OrderedRestriction::default()
    }

    pub fn from_entries(entries: Vec<(usize, bool)>) -> Result<OrderedRestriction> {
        let mut seen = 0u64;
        for &(v, _) in &entries {
            if v == 0 || v > MAX_VARS {
                return Err(Error::VarOutOfRange { var: v, n_vars: MAX_VARS });
            }
            let bit = 1u64 << (v - 1);
            if seen & bit != 0 {
                return Err(Error::InvalidParameter(format!("x{v} repeated in ordered restriction")));
            }
            seen |= bit;
        }
        Ok(OrderedRestriction { entries })
    }

    pub fn entries(&self) -> &[(usize, bool)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(v, _)| v)
    }

    pub fn bits(&self) -> Vec<bool> {
        self.entries.iter().map(|&(_, b)| b).collect()
    }

    pub fn var_mask(&self) -> u64 {
        self.vars().fold(0, |m, v| m | 1u64 << (v - 1))
    }

    pub fn same_domain_order(&self, other: &OrderedRestriction) -> bool {
        self.len() == other.len() && self.vars().eq(other.vars())
    }

    pub(crate) fn push(&mut self, var: usize, bit: bool) {
        debug_assert!(self.entries.iter().all(|&(v, _)| v != var));
        self.entries.push((var, bit));
    }

    pub fn prefix(&self, len: usize) -> OrderedRestriction {
        OrderedRestriction { entries: self.entries[..len].to_vec() }
    }

    /// `(self, other)`; fails if a variable would repeat.
    pub fn concat(&self, other: &OrderedRestriction) -> Result<OrderedRestriction> {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        OrderedRestriction::from_entries(entries)
    }

    pub fn to_restriction(&self, n_vars: usize) -> Restriction {
        let mut r = Restriction::empty(n_vars);
        for &(v, b) in &self.entries {
            r.set(v, b);
        }
        r
    }
}

impl fmt::Display for OrderedRestriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, (v, b)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "x{v}={}", *b as u8)?;
        }
        f.write_str(")")
    }
}

/// One restriction per subformula, indexed by [`NodeId`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestrictionTree {
    per_node: Vec<Restriction>,
}

impl RestrictionTree {
    pub fn new(per_node: Vec<Restriction>) -> RestrictionTree {
        RestrictionTree { per_node }
    }

    /// The same restriction at every node.
    pub fn constant(f: &Formula, rho: Restriction) -> RestrictionTree {
        RestrictionTree { per_node: vec![rho; f.len()] }
    }

    pub fn get(&self, id: NodeId) -> &Restriction {
        &self.per_node[id.index()]
    }

    pub fn get_mut(&mut self, id: NodeId) -> &mut Restriction {
        &mut self.per_node[id.index()]
    }

    pub fn len(&self) -> usize {
        self.per_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_node.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Restriction> {
        self.per_node.iter()
    }

    /// True iff the tree covers exactly the subformulae of `f` and every
    /// parent restriction refines its children's.
    pub fn is_valid_for(&self, f: &Formula) -> bool {
        self.check(f).is_ok()
    }

    pub fn check(&self, f: &Formula) -> Result<()> {
        if self.per_node.len() != f.len() {
            return Err(Error::InvalidRestrictionTree(format!(
                "{} restrictions for {} subformulae",
                self.per_node.len(),
                f.len()
            )));
        }
        if let Some(r) = self.per_node.iter().find(|r| r.n_vars() != f.n_vars()) {
            return Err(Error::InvalidRestrictionTree(format!(
                "restriction over {} variables, formula has {}",
                r.n_vars(),
                f.n_vars()
            )));
        }
        for (parent, child) in f.edges() {
            if !self.get(parent).preceq(self.get(child), None) {
                return Err(Error::InvalidRestrictionTree(format!(
                    "node {parent} does not refine its child {child}"
                )));
            }
        }
        Ok(())
    }

    /// Node-wise `self ≼ other`.
    pub fn preceq(&self, other: &RestrictionTree, within: Option<u64>) -> bool {
        self.per_node.len() == other.per_node.len()
            && self.per_node.iter().zip(&other.per_node).all(|(a, b)| a.preceq(b, within))
    }

    /// JSON object `{"node_id": "01**"}`.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, String> =
            self.per_node.iter().enumerate().map(|(i, r)| (i.to_string(), r.to_string())).collect();
        serde_json::to_value(map).expect("string map serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<RestrictionTree> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidRestrictionTree("expected a JSON object".into()))?;
        let mut entries = Vec::with_capacity(obj.len());
        for (k, v) in obj {
            let id: usize =
                k.parse().map_err(|_| Error::InvalidRestrictionTree(format!("bad node id '{k}'")))?;
            let s = v
                .as_str()
                .ok_or_else(|| Error::InvalidRestrictionTree(format!("node {k}: expected a string")))?;
            entries.push((id, s.parse::<Restriction>()?));
        }
        entries.sort_by_key(|&(id, _)| id);
        if entries.iter().enumerate().any(|(i, &(id, _))| i != id) {
            return Err(Error::InvalidRestrictionTree("node ids must be 0..len".into()));
        }
        Ok(RestrictionTree { per_node: entries.into_iter().map(|(_, r)| r).collect() })
    }
}

/// A star probability per subformula.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTree {
    per_node: Vec<f64>,
}

impl ProbabilityTree {
    pub fn new(per_node: Vec<f64>) -> ProbabilityTree {
        ProbabilityTree { per_node }
    }

    pub fn constant(f: &Formula, p: f64) -> ProbabilityTree {
        ProbabilityTree { per_node: vec![p; f.len()] }
    }

    /// Root gets `p`; every other subformula `G` gets `1 / (8 λ(G))`.
    pub fn canonical(f: &Formula, p: f64) -> Result<ProbabilityTree> {
        let lambda = f.lambda(f.root());
        if !(0.0..=1.0 / lambda).contains(&p) {
            return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1/λ(F)] = [0, {}]", 1.0 / lambda)));
        }
        let per_node = f
            .node_ids()
            .map(|id| if id == f.root() { p } else { 1.0 / (8.0 * f.lambda(id)) })
            .collect();
        Ok(ProbabilityTree { per_node })
    }

    pub fn get(&self, id: NodeId) -> f64 {
        self.per_node[id.index()]
    }

    /// Valid iff probabilities are in `[0,1]` and never increase toward the root.
    pub fn is_valid_for(&self, f: &Formula) -> bool {
        self.per_node.len() == f.len()
            && self.per_node.iter().all(|p| (0.0..=1.0).contains(p))
            && f.edges().all(|(parent, child)| self.get(child) >= self.get(parent))
    }
}

/// The shared randomness `(sigma, tau)` behind the coupled samplers.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledSample {
    pub sigma: u64,
    pub tau: Vec<f64>,
}

impl CoupledSample {
    pub fn draw<R: Rng + ?Sized>(n_vars: usize, rng: &mut R) -> CoupledSample {
        let sigma = rng.gen::<u64>() & full_mask(n_vars);
        let tau = (0..n_vars).map(|_| rng.gen::<f64>()).collect();
        CoupledSample { sigma, tau }
    }

    pub fn n_vars(&self) -> usize {
        self.tau.len()
    }

    /// Star iff `tau_v <= q`, otherwise `sigma_v`.
    pub fn restriction(&self, q: f64) -> Restriction {
        let stars = self
            .tau
            .iter()
            .enumerate()
            .filter(|(_, &t)| t <= q)
            .fold(0u64, |m, (i, _)| m | 1u64 << i);
        Restriction::from_masks(self.n_vars(), !stars, self.sigma)
    }

    pub fn restriction_tree(&self, f: &Formula, probs: &ProbabilityTree) -> RestrictionTree {
        RestrictionTree::new(f.node_ids().map(|id| self.restriction(probs.get(id))).collect())
    }
}

/// Draw from `R_p`: each variable independently a star with probability `p`,
/// otherwise a uniform bit.
pub fn sample_p_random<R: Rng + ?Sized>(p: f64, n_vars: usize, rng: &mut R) -> Restriction {
    CoupledSample::draw(n_vars, rng).restriction(p)
}

/// Draw a restriction tree from the coupled distribution defined by `probs`.
pub fn sample_restriction_tree<R: Rng + ?Sized>(
    f: &Formula,
    probs: &ProbabilityTree,
    rng: &mut R,
) -> Result<RestrictionTree> {
    if !probs.is_valid_for(f) {
        return Err(Error::InvalidParameter("probability tree is not valid for this formula".into()));
    }
    Ok(CoupledSample::draw(f.n_vars(), rng).restriction_tree(f, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(s: &str) -> Restriction {
        s.parse().unwrap()
    }

    #[test]
    fn consistency() {
        assert!(r("0*").consistent(&r("*1")));
        assert!(!r("0*").consistent(&r("1*")));
        let x = r("01*1");
        assert!(x.consistent(&x));
    }

    #[test]
    fn preceq_cases() {
        assert!(r("01").preceq(&r("0*"), None));
        assert!(!r("0*").preceq(&r("1*"), None));
        assert!(r("0*").preceq(&r("**"), Some(0b10)));
        assert!(!r("0*").preceq(&r("01"), None));
    }

    #[test]
    fn compose_cases() {
        assert_eq!(r("0*").compose(&r("*1")).unwrap(), r("01"));
        assert_eq!(r("0*1").compose(&r("***")).unwrap(), r("0*1"));
        assert_eq!(r("0*").compose(&r("1*")).unwrap_err(), Error::Inconsistent { var: 1 });
    }

    #[test]
    fn compose_matches_sequential_restriction() {
        let f = parse_formula("((x1 & ~x2) | (x3 & x4) | ~x1)", 4).unwrap();
        let a = r("1***");
        let b = r("**0*");
        let both = f.restrict(&a.compose(&b).unwrap());
        let seq = f.restrict(&a).restrict(&b);
        for x in 0..16 {
            assert_eq!(both.eval(x), seq.eval(x));
        }
    }

    #[test]
    fn display_round_trip() {
        assert_eq!(r("01**1").to_string(), "01**1");
        assert!("01a".parse::<Restriction>().is_err());
    }

    #[test]
    fn sampler_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_p_random(0.0, 20, &mut rng).star_mask(), 0);
        assert_eq!(sample_p_random(1.0, 20, &mut rng).set_mask(), 0);
    }

    #[test]
    fn canonical_probabilities() {
        let f = parse_formula("((x1&x2)|(x3&x4))", 4).unwrap();
        let lam = f.lambda(f.root());
        let pt = ProbabilityTree::canonical(&f, 1.0 / lam).unwrap();
        for &c in f.children(f.root()) {
            assert_eq!(pt.get(c), 1.0 / 256.0);
        }
        assert!(pt.is_valid_for(&f));
        assert!(ProbabilityTree::canonical(&f, 2.0 / lam).is_err());

        let clause = parse_formula("(x1|x2)", 2).unwrap();
        let pt = ProbabilityTree::canonical(&clause, 0.01).unwrap();
        assert_eq!(pt.get(clause.root()), 0.01);
    }

    #[test]
    fn constant_probability_tree_gives_identical_nodes() {
        let f = parse_formula("((x1&x2)|(x3&x4))", 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rt = sample_restriction_tree(&f, &ProbabilityTree::constant(&f, 0.4), &mut rng).unwrap();
        assert!(rt.iter().all(|x| x == rt.get(f.root())));
    }

    #[test]
    fn validation_rejects_bad_trees() {
        let f = parse_formula("(x1|x2)", 2).unwrap();
        // child sets x1, parent stars it
        let bad = RestrictionTree::new(vec![r("**"), r("0*"), r("**")]);
        assert!(!bad.is_valid_for(&f));
        // parent and child disagree
        let bad = RestrictionTree::new(vec![r("1*"), r("0*"), r("**")]);
        assert!(!bad.is_valid_for(&f));
        let good = RestrictionTree::new(vec![r("01"), r("0*"), r("**")]);
        assert!(good.is_valid_for(&f));
    }

    #[test]
    fn json_round_trip() {
        let f = parse_formula("(x1|x2)", 2).unwrap();
        let t = RestrictionTree::new(vec![r("01"), r("0*"), r("**")]);
        let back = RestrictionTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert!(back.is_valid_for(&f));
    }
}
