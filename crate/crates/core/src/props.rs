//! Randomised property suites over the constructions, with greedy
//! counterexample shrinking.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::analysis::{brute_count, trial_rng, TruthTable};
use crate::balance::{balance, verify_pivot_claim};
use crate::cdt::{
    build_cdt, check_downward_closure, constant_status, random_refinement, unpack_witness, verify_witness, walk_labelled,
};
use crate::dtree::{DecisionTree, NodeRef};
use crate::error::Result;
use crate::formula::{Expr, Formula};
use crate::gen::{random_formula, random_restriction, random_tree_computing};
use crate::restriction::{CoupledSample, ProbabilityTree, Restriction, RestrictionTree};
use crate::satcount::count_sat_default;

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub instances: usize,
    pub seed: u64,
    pub max_depth: usize,
    pub max_vars: usize,
    pub max_fanin: usize,
}

impl SuiteConfig {
    pub fn new(instances: usize, seed: u64) -> SuiteConfig {
        SuiteConfig { instances, seed, max_depth: 3, max_vars: 10, max_fanin: 4 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub instance: usize,
    pub seed: u64,
    pub formula: String,
    pub n_vars: usize,
    pub restriction_tree: serde_json::Value,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: String,
    /// Instances on which the property was checked.
    pub checked: usize,
    /// Generated instances skipped because a precondition did not hold.
    pub skipped: usize,
    /// Checked instances that exercised the non-trivial side of the
    /// property (for example, a witness existed).
    pub positive: usize,
    pub counterexample: Option<Counterexample>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// A formula with the randomness that produced its restriction tree. The
/// probability of a node depends only on its distance from the root, so
/// the tree can be regenerated after the formula is shrunk.
#[derive(Clone, Debug)]
pub struct Instance {
    pub formula: Formula,
    pub sample: CoupledSample,
    pub layers: Vec<f64>,
}

impl Instance {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, cfg: &SuiteConfig) -> Instance {
        let depth = rng.gen_range(1..=cfg.max_depth);
        let n = rng.gen_range(1..=cfg.max_vars);
        let formula = random_formula(rng, depth, n, cfg.max_fanin);
        let mut layers = Vec::new();
        let mut q = rng.gen::<f64>() * 0.6;
        for _ in 0..=cfg.max_depth + 1 {
            layers.push(q);
            q += (1.0 - q) * rng.gen::<f64>() * 0.5;
        }
        let sample = CoupledSample::draw(n, rng);
        Instance { formula, sample, layers }
    }

    /// Root probability `1/lambda(F)` and `1/(8 lambda(G))` below.
    pub fn canonical<R: Rng + ?Sized>(rng: &mut R, cfg: &SuiteConfig) -> Instance {
        let mut inst = Self::random(rng, cfg);
        inst.layers.clear();
        inst
    }

    pub fn probabilities(&self) -> ProbabilityTree {
        let f = &self.formula;
        if self.layers.is_empty() {
            return ProbabilityTree::canonical(f, 1.0 / f.lambda(f.root())).expect("p = 1/lambda is in range");
        }
        let mut dist = vec![0usize; f.len()];
        for (p, c) in f.edges() {
            dist[c.index()] = dist[p.index()] + 1;
        }
        ProbabilityTree::new(dist.iter().map(|&d| self.layers[d.min(self.layers.len() - 1)]).collect())
    }

    pub fn restriction_tree(&self) -> RestrictionTree {
        self.sample.restriction_tree(&self.formula, &self.probabilities())
    }

    fn with_formula(&self, formula: Formula) -> Instance {
        Instance { formula, sample: self.sample.clone(), layers: self.layers.clone() }
    }
}

type Check<'a> = dyn Fn(&Formula, &RestrictionTree) -> std::result::Result<(), String> + 'a;

fn run_check(check: &Check, inst: &Instance) -> std::result::Result<(), String> {
    check(&inst.formula, &inst.restriction_tree())
}

/// Every formula obtained by deleting one child of a gate with at least two
/// children.
fn one_smaller(e: &Expr) -> Vec<Expr> {
    let (kids, and) = match e {
        Expr::And(k) => (k, true),
        Expr::Or(k) => (k, false),
        _ => return Vec::new(),
    };
    let rebuild = |k: Vec<Expr>| if and { Expr::And(k) } else { Expr::Or(k) };
    let mut out = Vec::new();
    if kids.len() > 1 {
        for i in 0..kids.len() {
            let mut k = kids.clone();
            k.remove(i);
            out.push(rebuild(k));
        }
    }
    for (i, kid) in kids.iter().enumerate() {
        for smaller in one_smaller(kid) {
            let mut k = kids.clone();
            k[i] = smaller;
            out.push(rebuild(k));
        }
    }
    out
}

/// Greedily delete gate children while the check keeps failing.
pub fn shrink(inst: &Instance, check: &Check) -> (Instance, String) {
    let mut best = inst.clone();
    let mut detail = run_check(check, &best).err().unwrap_or_default();
    'outer: loop {
        for e in one_smaller(&best.formula.to_expr()) {
            let Ok(f) = Formula::from_expr(&e, best.formula.n_vars()) else { continue };
            let cand = best.with_formula(f);
            if let Err(d) = run_check(check, &cand) {
                best = cand;
                detail = d;
                continue 'outer;
            }
        }
        return (best, detail);
    }
}

fn report(name: &str, checked: usize, skipped: usize, fail: Option<(usize, u64, Instance, String)>) -> SuiteReport {
    let counterexample = fail.map(|(instance, seed, inst, detail)| Counterexample {
        instance,
        seed,
        formula: inst.formula.to_string(),
        n_vars: inst.formula.n_vars(),
        restriction_tree: inst.restriction_tree().to_json(),
        detail,
    });
    SuiteReport { name: name.into(), checked, skipped, positive: checked, counterexample }
}

/// Run `check` on generated instances, shrinking the first failure.
fn run_suite(name: &str, cfg: &SuiteConfig, canonical_every: usize, check: &Check) -> SuiteReport {
    for i in 0..cfg.instances {
        let mut rng = trial_rng(cfg.seed, i as u64);
        let inst = if canonical_every > 0 && i % canonical_every == 0 {
            Instance::canonical(&mut rng, cfg)
        } else {
            Instance::random(&mut rng, cfg)
        };
        if run_check(check, &inst).is_err() {
            let (small, detail) = shrink(&inst, check);
            return report(name, i + 1, 0, Some((i, cfg.seed, small, detail)));
        }
    }
    report(name, cfg.instances, 0, None)
}

fn err(e: crate::error::Error) -> String {
    e.to_string()
}

/// The CDT computes the formula under the root restriction; constancy via
/// memoised and fresh CDTs agrees; the negated formula gets the
/// label-flipped tree.
pub fn cdt_correctness(cfg: &SuiteConfig) -> SuiteReport {
    run_suite("cdt_correctness", cfg, 2, &|f, rt| {
        let t = build_cdt(f, rt).map_err(err)?.tree;
        let root = rt.get(f.root());
        if !t.computes_under(f, root) {
            return Err("CDT does not compute the formula under the root restriction".into());
        }
        let neg = build_cdt(&f.negated(), rt).map_err(err)?.tree;
        if !neg.same_shape(&t.flip_labels()) {
            return Err("CDT of the negation is not the label-flipped CDT".into());
        }
        for id in f.node_ids() {
            let rho = rt.get(f.root());
            let a = constant_status(f, rt, id, rho, true).map_err(err)?;
            let b = constant_status(f, rt, id, rho, false).map_err(err)?;
            if a != b || a.constant() != f.const_under(id, rho) {
                return Err(format!("constancy of node {} disagrees", id.0));
            }
        }
        Ok(())
    })
}

/// Balancing a random tree that computes `F` under `rho` keeps it
/// computing `F`, keeps the good leaves and satisfies the pivot
/// characterisation, for both labels.
pub fn balance_pivot(cfg: &SuiteConfig) -> SuiteReport {
    let cfg = SuiteConfig { max_depth: cfg.max_depth.min(2), max_vars: cfg.max_vars.min(8), ..cfg.clone() };
    let mut checked = 0;
    for i in 0..cfg.instances {
        let mut rng = trial_rng(cfg.seed, i as u64);
        let inst = Instance::random(&mut rng, &cfg);
        let f = &inst.formula;
        let rho = random_restriction(f.n_vars(), rng.gen::<f64>(), &mut rng);
        let t = random_tree_computing(f, &rho, &mut rng);
        checked += 1;
        if let Err(detail) = check_balance(f, &rho, &t) {
            let rt = RestrictionTree::constant(f, rho);
            return SuiteReport {
                name: "balance_pivot".into(),
                checked,
                skipped: 0,
                positive: checked,
                counterexample: Some(Counterexample {
                    instance: i,
                    seed: cfg.seed,
                    formula: f.to_string(),
                    n_vars: f.n_vars(),
                    restriction_tree: rt.to_json(),
                    detail,
                }),
            };
        }
    }
    report("balance_pivot", checked, 0, None)
}

pub fn check_balance(f: &Formula, rho: &Restriction, t: &DecisionTree) -> std::result::Result<(), String> {
    for label in [false, true] {
        let bt = balance(t, label);
        bt.check().map_err(err)?;
        if !bt.tree.computes_under(f, rho) {
            return Err(format!("{}-balanced tree no longer computes the formula", label as u8));
        }
        let good = |tree: &DecisionTree| -> Vec<_> {
            tree.leaves().into_iter().filter(|(l, _)| tree.label(*l) == Some(!label)).map(|(_, p)| p).collect()
        };
        if good(t) != good(&bt.tree) {
            return Err(format!("{}-balancing changed the {}-leaves", label as u8, !label as u8));
        }
        if !verify_pivot_claim(f, rho, &bt).map_err(err)? {
            return Err(format!("pivot characterisation fails for {}-balancing", label as u8));
        }
    }
    Ok(())
}

fn gate_rooted(f: &Formula) -> bool {
    f.gate(f.root()).is_some()
}

fn random_instructions<R: Rng + ?Sized>(rng: &mut R, max_len: usize) -> Vec<bool> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| rng.gen()).collect()
}

/// Instructions reaching a random leaf of `t` (labelled `label` if given)
/// through at least one degree-2 node.
fn leaf_instructions<R: Rng + ?Sized>(t: &DecisionTree, label: Option<bool>, rng: &mut R) -> Option<Vec<bool>> {
    let leaves: Vec<NodeRef> = t
        .leaves()
        .into_iter()
        .map(|(l, _)| l)
        .filter(|&l| label.is_none_or(|b| t.label(l) == Some(b)))
        .collect();
    let l = leaves.choose(rng)?;
    t.instructions_to(*l).filter(|a| !a.is_empty())
}

/// A walk ending on a neutral leaf keeps doing so under random refinements
/// that leave the walk's variables alone.
pub fn downward_closure(cfg: &SuiteConfig) -> SuiteReport {
    let mut checked = 0;
    let mut skipped = 0;
    let mut i = 0usize;
    while checked < cfg.instances && i < cfg.instances * 50 {
        let mut rng = trial_rng(cfg.seed, i as u64);
        let inst = Instance::random(&mut rng, cfg);
        i += 1;
        let f = &inst.formula;
        if !gate_rooted(f) {
            skipped += 1;
            continue;
        }
        let neutral = f.gate(f.root()).unwrap().neutral();
        let refine_seed: u64 = rng.gen();
        let rt = inst.restriction_tree();
        let Ok(t) = build_cdt(f, &rt) else {
            skipped += 1;
            continue;
        };
        let Some(a) = leaf_instructions(&t.tree, Some(neutral), &mut rng) else {
            skipped += 1;
            continue;
        };
        checked += 1;
        let check = |f: &Formula, rt: &RestrictionTree| -> std::result::Result<(), String> {
            if !gate_rooted(f) {
                return Ok(());
            }
            let neutral = f.gate(f.root()).unwrap().neutral();
            let Some(alpha) = walk_labelled(&build_cdt(f, rt).map_err(err)?.tree, &a, neutral) else {
                return Ok(());
            };
            let mut r = trial_rng(refine_seed, 0);
            let refined = random_refinement(f, rt, alpha.var_mask(), &mut r);
            match check_downward_closure(f, rt, &refined, &a) {
                Ok(true) => Ok(()),
                Ok(false) => Err(format!("walk {a:?} changed under refinement {}", refined.to_json())),
                Err(e) => Err(e.to_string()),
            }
        };
        if run_check(&check, &inst).is_err() {
            let (small, detail) = shrink(&inst, &check);
            return report("downward_closure", checked, skipped, Some((i - 1, cfg.seed, small, detail)));
        }
    }
    report("downward_closure", checked, skipped, None)
}

/// A witness exists exactly when the walk ends on a neutral leaf, and
/// every witness re-verifies.
pub fn unpacking(cfg: &SuiteConfig) -> SuiteReport {
    let mut witnesses = 0;
    for i in 0..cfg.instances {
        let mut rng = trial_rng(cfg.seed, i as u64);
        let mut inst = Instance::random(&mut rng, cfg);
        inst.formula = or_rooted(&inst.formula);
        let from_leaf = match build_cdt(&inst.formula, &inst.restriction_tree()) {
            Ok(t) if rng.gen_bool(0.7) => leaf_instructions(&t.tree, Some(false), &mut rng),
            _ => None,
        };
        let a = from_leaf.unwrap_or_else(|| random_instructions(&mut rng, 3));
        let check = |f: &Formula, rt: &RestrictionTree| {
            let f = or_rooted(f);
            if gate_rooted(&f) {
                check_unpacking(&f, rt, &a)
            } else {
                Ok(())
            }
        };
        if run_check(&check, &inst).is_err() {
            let (small, detail) = shrink(&inst, &check);
            let mut rep = report("unpacking", i + 1, 0, Some((i, cfg.seed, small, detail)));
            rep.positive = witnesses;
            return rep;
        }
        if let Ok(Some(_)) = unpack_witness(&inst.formula, &inst.restriction_tree(), &a) {
            witnesses += 1;
        }
    }
    let mut rep = report("unpacking", cfg.instances, 0, None);
    rep.positive = witnesses;
    rep
}

/// The negation of an AND-rooted formula is OR-rooted with the same ids.
pub fn or_rooted(f: &Formula) -> Formula {
    match f.gate(f.root()) {
        Some(g) if g.neutral() => f.negated(),
        _ => f.clone(),
    }
}

pub fn check_unpacking(f: &Formula, rt: &RestrictionTree, a: &[bool]) -> std::result::Result<(), String> {
    let neutral = f.gate(f.root()).map(|g| g.neutral()).ok_or("not gate-rooted")?;
    let exists = walk_labelled(&build_cdt(f, rt).map_err(err)?.tree, a, neutral).is_some();
    let w = unpack_witness(f, rt, a).map_err(err)?;
    match (exists, w) {
        (false, None) => Ok(()),
        (true, Some(w)) => {
            if verify_witness(f, rt, a, &w).map_err(err)? {
                Ok(())
            } else {
                Err(format!("witness fails re-verification: {}", serde_json::to_string(&w).unwrap_or_default()))
            }
        }
        (e, w) => Err(format!("walk ends on neutral leaf: {e}, witness found: {}", w.is_some())),
    }
}

/// Counts from the compiled tree equal brute-force counts for several
/// domain-tree seeds.
pub fn satcount_exact(cfg: &SuiteConfig, seeds: u64) -> SuiteReport {
    run_suite("satcount_exact", cfg, 0, &|f, _| {
        let want = brute_count(&TruthTable::of_formula(f).map_err(err)?) as u128;
        for s in 0..seeds {
            let mut rng = trial_rng(s, 0);
            let got = count_sat_default(f, &mut rng).map_err(err)?.count;
            if got != want {
                return Err(format!("seed {s}: counted {got}, expected {want}"));
            }
        }
        Ok(())
    })
}

/// Run every suite with `cfg`.
pub fn run_all(cfg: &SuiteConfig) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        cdt_correctness(cfg),
        balance_pivot(cfg),
        downward_closure(cfg),
        unpacking(cfg),
        satcount_exact(&SuiteConfig { max_vars: cfg.max_vars.max(12), ..cfg.clone() }, 3),
    ])
}
