//! Brute-force oracles, Fourier measurements and Monte Carlo experiments.

use bitvec::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cdt::{walk_labelled, CdtBuilder, CdtOptions};
use crate::error::{Error, Result};
use crate::formula::{Formula, NodeKind};
use crate::restriction::{CoupledSample, ProbabilityTree, Restriction, RestrictionTree};

pub const MAX_TABLE_VARS: usize = 24;
pub const MAX_DEPTH_VARS: usize = 13;
/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.5758293035489;

/// Truth table indexed by assignment, variable `i` being bit `i - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthTable {
    n: usize,
    bits: BitVec<u64, Lsb0>,
}

const LOW_PATTERNS: [u64; 6] = [
    0xAAAA_AAAA_AAAA_AAAA,
    0xCCCC_CCCC_CCCC_CCCC,
    0xF0F0_F0F0_F0F0_F0F0,
    0xFF00_FF00_FF00_FF00,
    0xFFFF_0000_FFFF_0000,
    0xFFFF_FFFF_0000_0000,
];

impl TruthTable {
    pub fn of_formula(f: &Formula) -> Result<TruthTable> {
        let n = f.n_vars();
        check_vars(n, MAX_TABLE_VARS)?;
        let words = words_for(n);
        let mut tables: Vec<Option<Vec<u64>>> = vec![None; f.len()];
        // children have larger ids than their parents
        for id in f.node_ids().collect::<Vec<_>>().into_iter().rev() {
            let t = match f.kind(id) {
                NodeKind::Const(b) => vec![if *b { !0 } else { 0 }; words],
                NodeKind::Lit { var, positive } => {
                    let mut t = literal_words(*var, words);
                    if !positive {
                        t.iter_mut().for_each(|w| *w = !*w);
                    }
                    t
                }
                NodeKind::Gate { gate, children } => {
                    let and = gate.neutral();
                    let mut acc = vec![if and { !0 } else { 0 }; words];
                    for c in children {
                        let ct = tables[c.index()].take().expect("child computed first");
                        for (a, w) in acc.iter_mut().zip(ct) {
                            if and {
                                *a &= w
                            } else {
                                *a |= w
                            }
                        }
                    }
                    acc
                }
            };
            tables[id.index()] = Some(t);
        }
        let words = tables[f.root().index()].take().expect("root computed");
        Ok(Self::from_words(n, words))
    }

    fn from_words(n: usize, words: Vec<u64>) -> TruthTable {
        let mut bits = BitVec::from_vec(words);
        bits.truncate(1usize << n);
        TruthTable { n, bits }
    }

    pub fn from_fn(n: usize, f: impl Fn(u64) -> bool) -> Result<TruthTable> {
        check_vars(n, MAX_TABLE_VARS)?;
        let bits = (0..1u64 << n).map(f).collect();
        Ok(TruthTable { n, bits })
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, x: u64) -> bool {
        self.bits[x as usize]
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.count_ones() as u64
    }

    pub fn constant(&self) -> Option<bool> {
        if self.bits.all() {
            Some(true)
        } else if self.bits.not_any() {
            Some(false)
        } else {
            None
        }
    }

    /// The restricted function as a table over `stars(rho)` only, the
    /// `j`-th star becoming variable `j + 1`.
    pub fn restrict_to_stars(&self, rho: &Restriction) -> TruthTable {
        let stars: Vec<u64> = rho.stars().into_iter().map(|v| 1u64 << (v - 1)).collect();
        let base = rho.value_mask() & rho.set_mask();
        let k = stars.len();
        let bits = (0..1u64 << k)
            .map(|y| {
                let x = stars.iter().enumerate().fold(base, |x, (j, &bit)| if y >> j & 1 == 1 { x | bit } else { x });
                self.get(x)
            })
            .collect();
        TruthTable { n: k, bits }
    }

    /// Rendered with assignment 0 first, e.g. `0101` for `x1` over two
    /// variables.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }
}

fn check_vars(n: usize, max: usize) -> Result<()> {
    if n > max {
        Err(Error::TooManyVars { n_vars: n, max })
    } else {
        Ok(())
    }
}

fn words_for(n: usize) -> usize {
    (1usize << n).div_ceil(64)
}

fn literal_words(var: usize, words: usize) -> Vec<u64> {
    let b = var - 1;
    if b < 6 {
        vec![LOW_PATTERNS[b]; words]
    } else {
        (0..words).map(|i| if (i >> (b - 6)) & 1 == 1 { !0 } else { 0 }).collect()
    }
}

/// Minimum decision-tree depth by dynamic programming over the `3^n`
/// subcubes.
pub fn brute_dt_depth(tt: &TruthTable) -> Result<usize> {
    let n = tt.n_vars();
    check_vars(n, MAX_DEPTH_VARS)?;
    if tt.constant().is_some() {
        return Ok(0);
    }
    let pow3: Vec<usize> = (0..=n).map(|i| 3usize.pow(i as u32)).collect();
    let total = pow3[n];
    // per subcube: 0 / 1 constant, 2 non-constant; depth alongside
    let mut konst = vec![0u8; total];
    let mut depth = vec![0u8; total];
    let mut digits = vec![0u8; n];
    for t in 0..total {
        if t > 0 {
            // increment the base-3 counter
            let mut i = 0;
            while digits[i] == 2 {
                digits[i] = 0;
                i += 1;
            }
            digits[i] += 1;
        }
        let mut first_star = None;
        let mut x = 0u64;
        for (i, &d) in digits.iter().enumerate() {
            match d {
                1 => x |= 1 << i,
                2 if first_star.is_none() => first_star = Some(i),
                _ => {}
            }
        }
        let Some(s) = first_star else {
            konst[t] = tt.get(x) as u8;
            continue;
        };
        let (c0, c1) = (konst[t - 2 * pow3[s]], konst[t - pow3[s]]);
        if c0 == c1 && c0 != 2 {
            konst[t] = c0;
            continue;
        }
        konst[t] = 2;
        let mut best = u8::MAX;
        for (i, &d) in digits.iter().enumerate() {
            if d == 2 {
                let worst = depth[t - 2 * pow3[i]].max(depth[t - pow3[i]]);
                best = best.min(worst);
            }
        }
        depth[t] = best + 1;
    }
    Ok(depth[total - 1] as usize)
}

pub fn brute_count(tt: &TruthTable) -> u64 {
    tt.count_ones()
}

/// `|Pr[f = parity] - Pr[f != parity]|` under the uniform distribution.
pub fn correlation_with_parity(tt: &TruthTable) -> f64 {
    let agree: i64 = (0..tt.len() as u64).map(|x| if tt.get(x) == (x.count_ones() % 2 == 1) { 1 } else { -1 }).sum();
    (agree as f64 / tt.len() as f64).abs()
}

/// Fourier coefficients of the `+1/-1` version of `tt` (0 maps to +1),
/// indexed by subset mask. Squares sum to 1.
pub fn fourier_coefficients(tt: &TruthTable) -> Vec<f64> {
    let mut a: Vec<f64> = tt.bits.iter().map(|b| if *b { -1.0 } else { 1.0 }).collect();
    let len = a.len();
    let mut h = 1;
    while h < len {
        for i in (0..len).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
    let norm = len as f64;
    a.iter_mut().for_each(|c| *c /= norm);
    a
}

/// `(sum over |S| >= k of f(S)^2, sum over |S| = k of |f(S)|)`.
pub fn fourier_tails(tt: &TruthTable, k: usize) -> (f64, f64) {
    let coeffs = fourier_coefficients(tt);
    let mut l2 = 0.0;
    let mut l1 = 0.0;
    for (s, c) in coeffs.iter().enumerate() {
        let deg = s.count_ones() as usize;
        if deg >= k {
            l2 += c * c;
        }
        if deg == k {
            l1 += c.abs();
        }
    }
    (l2, l1)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn wilson_upper(successes: u64, trials: u64) -> f64 {
    wilson_interval(successes, trials, Z_99).1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    /// The bound is at least 1, so nothing is being tested.
    Vacuous,
    Fail,
}

impl Verdict {
    /// A zero bound claims the event never happens, which no confidence
    /// interval can certify; it passes exactly when nothing was observed.
    pub fn judge(successes: u64, ci_upper: f64, bound: f64) -> Verdict {
        if bound >= 1.0 {
            Verdict::Vacuous
        } else if bound == 0.0 {
            if successes == 0 {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        } else if ci_upper <= bound {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn ok(self) -> bool {
        self != Verdict::Fail
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub s: usize,
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci_upper: f64,
    pub bound: f64,
    pub verdict: Verdict,
    /// Instruction set for walk experiments, empty otherwise.
    pub a: String,
}

impl ReportRow {
    fn new(s: usize, trials: u64, successes: u64, bound: f64, a: String) -> ReportRow {
        let ci_upper = wilson_upper(successes, trials);
        ReportRow {
            s,
            trials,
            successes,
            p_hat: successes as f64 / trials.max(1) as f64,
            ci_upper,
            bound,
            verdict: Verdict::judge(successes, ci_upper, bound),
            a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub formula: String,
    pub n_vars: usize,
    pub lambda: f64,
    pub p: f64,
    pub trials: u64,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    /// Sampled instances where the CDT was shallower than the optimum
    /// (always 0 unless something is broken).
    pub cdt_depth_violations: u64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.verdict.ok()) && self.cdt_depth_violations == 0
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// RNG for one trial: a fixed seed with the trial index as stream, so
/// results do not depend on how trials are scheduled.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn check_p(f: &Formula, p: f64) -> Result<f64> {
    let lambda = f.lambda(f.root());
    if !(0.0..=1.0).contains(&p) || p > (1.0 / lambda) * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1/lambda] with lambda = {lambda}")));
    }
    Ok(lambda)
}

/// Tail of the optimal decision-tree depth of `f` under `rho ~ R_p`,
/// compared with `(p * lambda)^s`. Every sample also checks that the CDT
/// under the constant restriction tree is no shallower than the optimum.
pub fn switching_experiment(f: &Formula, p: f64, s_max: usize, trials: u64, seed: u64) -> Result<ExperimentReport> {
    let lambda = check_p(f, p)?;
    let tt = TruthTable::of_formula(f)?;
    let n = f.n_vars();
    let outcomes: Vec<Result<(usize, bool)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let rho = CoupledSample::draw(n, &mut rng).restriction(p);
            let depth = brute_dt_depth(&tt.restrict_to_stars(&rho))?;
            let rt = RestrictionTree::constant(f, rho);
            let mut b = CdtBuilder::new_unchecked(f, &rt, CdtOptions::default());
            let cdt = b.build(f.root(), &Restriction::empty(n))?;
            Ok((depth, cdt.depth() < depth))
        })
        .collect();
    let mut depths = Vec::with_capacity(outcomes.len());
    let mut violations = 0;
    for o in outcomes {
        let (d, bad) = o?;
        depths.push(d);
        violations += bad as u64;
    }
    let rows = (1..=s_max)
        .map(|s| {
            let hits = depths.iter().filter(|&&d| d >= s).count() as u64;
            ReportRow::new(s, trials, hits, (p * lambda).powi(s as i32), String::new())
        })
        .collect();
    Ok(ExperimentReport {
        experiment: "switching".into(),
        formula: f.to_string(),
        n_vars: n,
        lambda,
        p,
        trials,
        seed,
        rows,
        cdt_depth_violations: violations,
    })
}

/// Frequency with which each instruction set's walk ends on a neutral leaf
/// of the CDT under `rt ~ R(p~)` (canonical probabilities), compared with
/// `(p * lambda)^|a|`.
pub fn lemma_main_experiment(
    f: &Formula,
    p: f64,
    instructions: &[Vec<bool>],
    trials: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    let lambda = check_p(f, p)?;
    let neutral = f
        .gate(f.root())
        .map(|g| g.neutral())
        .ok_or_else(|| Error::Precondition("formula must be rooted at a gate".into()))?;
    let probs = ProbabilityTree::canonical(f, p)?;
    let n = f.n_vars();
    let hits: Vec<Result<Vec<bool>>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let rt = CoupledSample::draw(n, &mut rng).restriction_tree(f, &probs);
            let mut b = CdtBuilder::new_unchecked(f, &rt, CdtOptions::default());
            let t = b.build(f.root(), &Restriction::empty(n))?;
            Ok(instructions.iter().map(|a| walk_labelled(&t, a, neutral).is_some()).collect())
        })
        .collect();
    let mut counts = vec![0u64; instructions.len()];
    for h in hits {
        for (c, hit) in counts.iter_mut().zip(h?) {
            *c += hit as u64;
        }
    }
    let rows = instructions
        .iter()
        .zip(counts)
        .map(|(a, c)| {
            let label: String = a.iter().map(|&b| if b { '1' } else { '0' }).collect();
            ReportRow::new(a.len(), trials, c, (p * lambda).powi(a.len() as i32), label)
        })
        .collect();
    Ok(ExperimentReport {
        experiment: "lemma".into(),
        formula: f.to_string(),
        n_vars: n,
        lambda,
        p,
        trials,
        seed,
        rows,
        cdt_depth_violations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    fn table(text: &str, n: usize) -> TruthTable {
        TruthTable::of_formula(&parse_formula(text, n).unwrap()).unwrap()
    }

    #[test]
    fn tables() {
        assert_eq!(table("1", 2).to_bit_string(), "1111");
        assert_eq!(table("x1", 2).to_bit_string(), "0101");
        let f = parse_formula("((x1 & ~x7) | (x8 & x3))", 9).unwrap();
        let tt = TruthTable::of_formula(&f).unwrap();
        for x in 0..512 {
            assert_eq!(tt.get(x), f.eval(x));
        }
    }

    #[test]
    fn depth_oracle() {
        assert_eq!(brute_dt_depth(&table("0", 3)).unwrap(), 0);
        assert_eq!(brute_dt_depth(&table("(x1 & x2 & x3)", 3)).unwrap(), 3);
        assert_eq!(brute_dt_depth(&table("(x1 | x2)", 4)).unwrap(), 2);
        for n in 1..=8 {
            let tt = TruthTable::from_fn(n, |x| x.count_ones() % 2 == 1).unwrap();
            assert_eq!(brute_dt_depth(&tt).unwrap(), n);
        }
        // x1 ? x2 : x3 needs depth 2
        assert_eq!(brute_dt_depth(&table("((x1 & x2) | (~x1 & x3))", 3)).unwrap(), 2);
    }

    #[test]
    fn stars_projection() {
        let tt = table("((x1 & x2) | x3)", 3);
        let sub = tt.restrict_to_stars(&"*0*".parse().unwrap());
        assert_eq!(sub.n_vars(), 2);
        // only x3 matters: new var 2
        assert_eq!(sub.to_bit_string(), "0011");
    }

    #[test]
    fn counting_and_correlation() {
        assert_eq!(brute_count(&table("0", 3)), 0);
        assert_eq!(brute_count(&table("(x1 & ~x2)", 5)), 8);
        assert_eq!(correlation_with_parity(&table("0", 1)), 0.0);
        assert_eq!(correlation_with_parity(&table("x1", 2)), 0.0);
        let xor = TruthTable::from_fn(3, |x| x.count_ones() % 2 == 1).unwrap();
        assert_eq!(correlation_with_parity(&xor), 1.0);
    }

    #[test]
    fn fourier() {
        let (t1, l1) = fourier_tails(&table("x1", 3), 1);
        assert!((t1 - 1.0).abs() < 1e-12 && (l1 - 1.0).abs() < 1e-12);
        assert_eq!(fourier_tails(&table("x1", 3), 2).0, 0.0);
        let c = fourier_coefficients(&table("((x1 & x2) | (x3 & ~x4))", 4));
        let total: f64 = c.iter().map(|x| x * x).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wilson() {
        let (lo, hi) = wilson_interval(0, 100, Z_99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.07);
        let (lo, hi) = wilson_interval(50, 100, Z_99);
        assert!(lo < 0.5 && hi > 0.5);
        assert_eq!(Verdict::judge(5, 0.1, 1.0), Verdict::Vacuous);
        assert_eq!(Verdict::judge(5, 0.1, 0.2), Verdict::Pass);
        assert_eq!(Verdict::judge(5, 0.3, 0.2), Verdict::Fail);
        assert_eq!(Verdict::judge(0, 0.05, 0.0), Verdict::Pass);
        assert_eq!(Verdict::judge(1, 0.05, 0.0), Verdict::Fail);
    }

    #[test]
    fn zero_p_switching() {
        let f = parse_formula("((x1 & x2) | (x3 & x4))", 4).unwrap();
        let r = switching_experiment(&f, 0.0, 2, 50, 1).unwrap();
        assert!(r.rows.iter().all(|row| row.successes == 0 && row.verdict == Verdict::Pass));
        assert!(switching_experiment(&f, 0.5, 2, 5, 1).is_err());
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("s,trials,successes,p_hat,ci_upper,bound,verdict"));
    }

    #[test]
    fn experiments_are_deterministic() {
        let f = parse_formula("(x1 | x2 | ~x3)", 6).unwrap();
        let p = 1.0 / 32.0;
        let a = switching_experiment(&f, p, 3, 300, 9).unwrap();
        let b = switching_experiment(&f, p, 3, 300, 9).unwrap();
        assert_eq!(a, b);
        let ins = vec![vec![false], vec![true, true]];
        let a = lemma_main_experiment(&f, p, &ins, 300, 4).unwrap();
        let b = lemma_main_experiment(&f, p, &ins, 300, 4).unwrap();
        assert_eq!(a, b);
    }
}
