//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use switchlemma::analysis::{
    brute_count, brute_dt_depth, correlation_with_parity, fourier_coefficients, lemma_main_experiment,
    switching_experiment, ExperimentReport, TruthTable, Verdict,
};
use switchlemma::balance::{balance, verify_pivot_claim, zero_balance};
use switchlemma::cdt::{
    build_cdt, check_downward_closure, random_refinement, unpack_witness, verify_witness, walk_labelled,
};
use switchlemma::dtree::{DecisionTree, DtNode, NodeRef};
use switchlemma::formula::lambda_sd;
use switchlemma::gen::{
    gen_parity_formula, gen_random_formula, random_formula, random_restriction, random_restriction_tree,
    random_tree_computing,
};
use switchlemma::restriction::CoupledSample;
use switchlemma::satcount::count_sat_default;
use switchlemma::{parse_formula, Formula, ProbabilityTree, Restriction, RestrictionTree};

const TRIALS: u64 = 100_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Leaf-by-leaf check by direct evaluation, independent of truth tables:
/// every assignment agreeing with `rho` and a leaf's path gives the leaf's
/// label.
fn leafwise(t: &DecisionTree, f: &Formula, rho: &Restriction) -> bool {
    let mut stack = vec![(t.root(), *rho)];
    while let Some((r, path)) = stack.pop() {
        match t.node(r) {
            DtNode::Leaf(b) => {
                let stars: Vec<usize> = path.stars();
                let base = path.value_mask() & path.set_mask();
                for y in 0u64..1 << stars.len() {
                    let x = stars.iter().enumerate().fold(base, |x, (j, &v)| x | ((y >> j & 1) << (v - 1)));
                    if f.eval(x) != *b {
                        return false;
                    }
                }
            }
            DtNode::Query { var, children } => {
                for (bit, c) in children.iter().enumerate() {
                    if let Some(c) = c {
                        if path.get(*var).is_some_and(|v| v != (bit == 1)) {
                            return false;
                        }
                        let mut p = path;
                        p.set(*var, bit == 1);
                        stack.push((*c, p));
                    }
                }
            }
        }
    }
    true
}

fn canonical_tree(f: &Formula, rng: &mut ChaCha8Rng) -> RestrictionTree {
    let probs = ProbabilityTree::canonical(f, 1.0 / f.lambda(f.root())).unwrap();
    CoupledSample::draw(f.n_vars(), rng).restriction_tree(f, &probs)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut bad = Vec::new();
    let (mut canonical, mut extra, mut nontrivial) = (0, 0, 0);
    // canonical p = 1/lambda, plus randomly drawn valid probability trees
    for i in 0..1000 {
        let depth = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=10);
        let f = random_formula(&mut rng, depth, n, 4);
        let rt = if i < 500 { canonical_tree(&f, &mut rng) } else { random_restriction_tree(&f, 0.8, &mut rng) };
        let rho = rt.get(f.root());
        let t = build_cdt(&f, &rt).unwrap().tree;
        if i < 500 {
            canonical += 1
        } else {
            extra += 1
        }
        nontrivial += (t.depth() > 0) as usize;
        if !(t.computes_under(&f, rho) && leafwise(&t, &f, rho)) {
            bad.push(format!("{f} under {rho}"));
        }
    }
    outcome(
        bad.is_empty(),
        format!("{canonical} canonical + {extra} random-tree instances, {nontrivial} non-constant CDTs, failures {bad:?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut bad = Vec::new();
    let formulas = 300;
    for _ in 0..formulas {
        let depth = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=16);
        let f = random_formula(&mut rng, depth, n, 4);
        let table = brute_count(&TruthTable::of_formula(&f).unwrap()) as u128;
        let direct = (0..1u64 << n).filter(|&x| f.eval(x)).count() as u128;
        if table != direct {
            bad.push(format!("oracles disagree on {f}"));
        }
        for seed in 0..3 {
            let got = count_sat_default(&f, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().count;
            if got != direct {
                bad.push(format!("{f} seed {seed}: {got} vs {direct}"));
            }
        }
    }
    outcome(bad.is_empty(), format!("{formulas} formulae x 3 seeds, mismatches {bad:?}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut bad = Vec::new();
    let cases = 300;
    for _ in 0..cases {
        let depth = rng.gen_range(1..=2);
        let n = rng.gen_range(1..=8);
        let f = random_formula(&mut rng, depth, n, 4);
        let star = rng.gen::<f64>();
        let rho = random_restriction(n, star, &mut rng);
        let t = random_tree_computing(&f, &rho, &mut rng);
        for label in [false, true] {
            if !verify_pivot_claim(&f, &rho, &balance(&t, label)).unwrap() {
                bad.push(format!("{f} under {rho}, label {label}"));
            }
        }
    }
    // term fixture, both through balancing alone and through the CDT
    let term = parse_formula("(x1 & x2 & x3)", 3).unwrap();
    let chain = build_cdt(&term, &RestrictionTree::constant(&term, Restriction::empty(3))).unwrap().tree;
    let dnf = parse_formula("((x1 & x2 & x3) |)", 3).unwrap();
    let cdt = build_cdt(&dnf, &RestrictionTree::constant(&dnf, Restriction::empty(3))).unwrap().tree;
    let mut fixture_ok = true;
    for t in [zero_balance(&chain).tree, cdt] {
        let ones: Vec<_> = t.leaves().into_iter().filter(|(l, _)| t.label(*l) == Some(true)).collect();
        fixture_ok &= t.leaf_count() == 8
            && t.depth() == 3
            && t.max_path_len() == 3
            && ones.len() == 1
            && ones[0].1.bits() == vec![true, true, true];
    }
    outcome(bad.is_empty() && fixture_ok, format!("{cases} random cases x 2 labels, fixture ok {fixture_ok}, failures {bad:?}"))
}

fn neutral_leaf_instructions(t: &DecisionTree, neutral: bool, rng: &mut ChaCha8Rng) -> Option<Vec<bool>> {
    let leaves: Vec<NodeRef> =
        t.leaves().into_iter().map(|(l, _)| l).filter(|&l| t.label(l) == Some(neutral)).collect();
    t.instructions_to(*leaves.choose(rng)?).filter(|a| !a.is_empty())
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut bad = Vec::new();
    let (mut checked, mut drawn) = (0, 0);
    while checked < 1000 && drawn < 100_000 {
        drawn += 1;
        let depth = rng.gen_range(1..=3);
        let n = rng.gen_range(2..=10);
        let f = random_formula(&mut rng, depth, n, 4);
        let Some(gate) = f.gate(f.root()) else { continue };
        let rt = random_restriction_tree(&f, 0.8, &mut rng);
        let t = build_cdt(&f, &rt).unwrap().tree;
        let Some(a) = neutral_leaf_instructions(&t, gate.neutral(), &mut rng) else { continue };
        let alpha = walk_labelled(&t, &a, gate.neutral()).expect("instructions lead to a neutral leaf");
        for _ in 0..2 {
            let refined = random_refinement(&f, &rt, alpha.var_mask(), &mut rng);
            checked += 1;
            if !check_downward_closure(&f, &rt, &refined, &a).unwrap() {
                bad.push(format!("{f}: {a:?} under {}", refined.to_json()));
            }
        }
    }
    outcome(bad.is_empty() && checked >= 1000, format!("{checked} refinements, failures {bad:?}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut bad = Vec::new();
    let (mut checked, mut witnesses) = (0, 0);
    while (checked < 400 || witnesses < 200) && checked < 100_000 {
        let depth = rng.gen_range(1..=3);
        let n = rng.gen_range(2..=10);
        let mut f = random_formula(&mut rng, depth, n, 4);
        match f.gate(f.root()) {
            None => continue,
            Some(g) if g.neutral() => f = f.negated(),
            _ => {}
        }
        let rt = random_restriction_tree(&f, 0.8, &mut rng);
        let t = build_cdt(&f, &rt).unwrap().tree;
        let a = match neutral_leaf_instructions(&t, false, &mut rng) {
            Some(a) if rng.gen_bool(0.6) => a,
            _ => (0..rng.gen_range(1..=3)).map(|_| rng.gen()).collect(),
        };
        checked += 1;
        let exists = walk_labelled(&t, &a, false).is_some();
        match unpack_witness(&f, &rt, &a).unwrap() {
            None if !exists => {}
            Some(w) if exists => {
                witnesses += 1;
                if !verify_witness(&f, &rt, &a, &w).unwrap() {
                    bad.push(format!("{f} {a:?}: witness fails"));
                }
            }
            w => bad.push(format!("{f} {a:?}: walk {exists}, witness {}", w.is_some())),
        }
    }
    outcome(
        bad.is_empty() && witnesses >= 200,
        format!("{checked} OR-rooted instances, {witnesses} with witnesses, failures {bad:?}"),
    )
}

/// A random clause over 8 variables (a negated random term).
fn experiment_formulas() -> Vec<(&'static str, Formula)> {
    vec![
        ("2-DNF, 4 terms, n=12", gen_random_formula(2, &[4, 2], 12, 61).unwrap()),
        ("depth 3, n=12", gen_random_formula(3, &[2, 3, 2], 12, 62).unwrap()),
        ("clause, n=8", gen_random_formula(1, &[4], 8, 63).unwrap().negated()),
    ]
}

fn summarize(rep: &ExperimentReport) -> String {
    let rows: Vec<String> = rep
        .rows
        .iter()
        .map(|r| {
            let tag = if r.a.is_empty() { format!("s={}", r.s) } else { format!("a={}", r.a) };
            format!("{tag}: {}/{} ci<={:.2e} bound {:.2e} {:?}", r.successes, r.trials, r.ci_upper, r.bound, r.verdict)
        })
        .collect();
    rows.join("; ")
}

fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    let mut non_vacuous = 0;
    for (name, f) in experiment_formulas() {
        let lambda = f.lambda(f.root());
        for (pname, p) in [("1/lambda", 1.0 / lambda), ("1/(4 lambda)", 1.0 / (4.0 * lambda))] {
            let rep = switching_experiment(&f, p, 4, TRIALS, 606).unwrap();
            pass &= rep.passed();
            non_vacuous += rep.rows.iter().filter(|r| r.verdict != Verdict::Vacuous).count();
            if f.stats().depth == 1 {
                // base case bound (32 p)^s
                for r in &rep.rows {
                    pass &= Verdict::judge(r.successes, r.ci_upper, (32.0 * p).powi(r.s as i32)).ok();
                }
            }
            lines.push(format!("    {name}, p={pname}: {}", summarize(&rep)));
        }
    }
    outcome(pass && non_vacuous > 0, format!("{non_vacuous} non-vacuous rows\n{}", lines.join("\n")))
}

fn criterion_7() -> Outcome {
    let a = vec![vec![false], vec![true], vec![true, true]];
    let mut pass = true;
    let mut lines = Vec::new();
    let mut non_vacuous = 0;
    for (name, f) in experiment_formulas() {
        let lambda = f.lambda(f.root());
        for (pname, p) in [("1/lambda", 1.0 / lambda), ("1/(4 lambda)", 1.0 / (4.0 * lambda))] {
            let rep = lemma_main_experiment(&f, p, &a, TRIALS, 707).unwrap();
            pass &= rep.passed();
            non_vacuous += rep.rows.iter().filter(|r| r.verdict != Verdict::Vacuous).count();
            lines.push(format!("    {name}, p={pname}: {}", summarize(&rep)));
        }
    }
    outcome(pass && non_vacuous > 0, format!("{non_vacuous} non-vacuous rows\n{}", lines.join("\n")))
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for n in 1..=10 {
        let parity = TruthTable::from_fn(n, |x| x.count_ones() % 2 == 1).unwrap();
        let d = brute_dt_depth(&parity).unwrap();
        if d != n {
            pass = false;
            notes.push(format!("parity {n}: depth {d}"));
        }
    }
    for (n, d) in [(4, 2), (6, 3)] {
        let f = gen_parity_formula(n, d).unwrap();
        let c = correlation_with_parity(&TruthTable::of_formula(&f).unwrap());
        if c != 1.0 || f.stats().depth as usize > d {
            pass = false;
            notes.push(format!("parity formula ({n},{d}): correlation {c}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0f64;
    for i in 0..100 {
        let n = rng.gen_range(1..=12);
        let bits: Vec<bool> = (0..1u64 << n).map(|_| rng.gen()).collect();
        let tt = TruthTable::from_fn(n, |x| bits[x as usize]).unwrap();
        let coeffs = fourier_coefficients(&tt);
        worst = worst.max((coeffs.iter().map(|c| c * c).sum::<f64>() - 1.0).abs());
        if i < 10 && n <= 6 {
            // direct transform for small tables
            for (s, c) in coeffs.iter().enumerate() {
                let direct: f64 = (0..1u64 << n)
                    .map(|x| {
                        let f = if bits[x as usize] { -1.0 } else { 1.0 };
                        let chi = if (x & s as u64).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                        f * chi
                    })
                    .sum::<f64>()
                    / (1u64 << n) as f64;
                worst = worst.max((direct - c).abs());
            }
        }
    }
    pass &= worst <= 1e-9;
    outcome(pass, format!("Parseval/direct worst error {worst:.1e} {notes:?}"))
}

fn criterion_9() -> Outcome {
    let mut pass = true;
    let mut min_ratio = f64::INFINITY;
    for k in 0..=20u32 {
        let s = 1u64 << k;
        for d in 1..=10u32 {
            let ratio = lambda_sd(s, d + 1) / lambda_sd(s, d);
            min_ratio = min_ratio.min(ratio);
            pass &= ratio >= 8.0;
            // exact: 8 (L+d)^d (d+1)^(d+1) <= 32 (L+d+1)^(d+1) d^d
            let (l, d) = (k as u128, d as u128);
            let lhs = 8 * (l + d).pow(d as u32) * (d + 1).pow(d as u32 + 1);
            let rhs = 32 * (l + d + 1).pow(d as u32 + 1) * d.pow(d as u32);
            pass &= lhs <= rhs;
        }
    }
    let depth1 = parse_formula("(x1 & x2)", 2).unwrap().lambda(switchlemma::NodeId(0));
    pass &= depth1 == 32.0;
    outcome(pass, format!("min ratio {min_ratio:.3}, lambda(depth 1) = {depth1}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("CDT correctness", criterion_1),
        ("#SAT exactness", criterion_2),
        ("balancing and pivot characterization", criterion_3),
        ("downward closure", criterion_4),
        ("unpacking equivalence", criterion_5),
        ("switching inequality", criterion_6),
        ("walk inequality", criterion_7),
        ("oracle sanity", criterion_8),
        ("lambda arithmetic", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict} {name} ({:.1}s): {}", i + 1, start.elapsed().as_secs_f64(), o.detail);
        failed += !o.pass as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
