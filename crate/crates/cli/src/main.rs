use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use switchlemma::analysis::{lemma_main_experiment, switching_experiment, ExperimentReport};
use switchlemma::cdt::{build_cdt_with, CdtOptions, DEFAULT_NODE_BUDGET};
use switchlemma::formula::{max_var, parse_expr};
use switchlemma::props::{run_all, SuiteConfig};
use switchlemma::restriction::CoupledSample;
use switchlemma::satcount::count_sat;
use switchlemma::{Error, Formula, ProbabilityTree, Restriction, RestrictionTree};

/// Canonical decision trees, restriction sampling, switching experiments
/// and exact model counting for bounded-depth formulae.
#[derive(Parser, Debug)]
#[command(name = "switchlemma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format; each subcommand accepts a subset.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel trials (output does not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Args, Debug)]
struct Source {
    /// Formula text, e.g. "((x1 & ~x2) | x3)".
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    formula: Option<String>,

    /// File holding one formula.
    #[arg(long)]
    file: Option<PathBuf>,

    /// Number of variables; defaults to the largest index used.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Depth, size, lambda and variable count.
    Info {
        #[command(flatten)]
        src: Source,
    },
    /// Build and verify the canonical decision tree.
    Cdt {
        #[command(flatten)]
        src: Source,
        /// Restriction tree as JSON (one string over 0/1/* per node).
        #[arg(long, conflicts_with = "p")]
        restriction_tree: Option<PathBuf>,
        /// Sample the restriction tree with this p instead (needs --seed).
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        budget: usize,
        /// Include the recursion trace in JSON output.
        #[arg(long)]
        trace: bool,
    },
    /// Draw a p-random restriction and the coupled restriction tree.
    Sample {
        #[command(flatten)]
        src: Source,
        /// Defaults to 1/lambda.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        seed: u64,
    },
    /// Tail of the decision-tree depth under p-random restrictions.
    Switch {
        #[command(flatten)]
        src: Source,
        /// Defaults to 1/lambda.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 3)]
        smax: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Frequency of instruction walks ending on a neutral leaf.
    Lemma {
        #[command(flatten)]
        src: Source,
        /// Defaults to 1/lambda.
        #[arg(long)]
        p: Option<f64>,
        /// Comma-separated instruction sets over 0/1.
        #[arg(long, default_value = "0,1,11")]
        a: String,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Exact number of satisfying assignments.
    Count {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        budget: usize,
    },
    /// Randomized property suites; prints a shrunk counterexample on failure.
    Props {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        max_vars: usize,
    },
}

fn caret_diagnostic(text: &str, pos: usize, message: &str) -> String {
    let pos = pos.min(text.len());
    let start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let end = text[pos..].find('\n').map_or(text.len(), |i| pos + i);
    let col = text[start..pos].chars().count();
    format!("parse error: {message}\n  {}\n  {}^", &text[start..end], " ".repeat(col))
}

fn load_formula(src: &Source) -> Result<Formula> {
    let text = match (&src.formula, &src.file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        (None, None) => bail!("one of --formula or --file is required"),
    };
    let text = text.trim_end();
    let parsed = parse_expr(text).and_then(|e| {
        let n = src.n.unwrap_or_else(|| max_var(&e));
        Formula::from_expr(&e, n)
    });
    parsed.map_err(|e| match e {
        Error::Parse { pos, message } => anyhow!(caret_diagnostic(text, pos, &message)),
        other => anyhow!(other),
    })
}

fn default_p(f: &Formula, p: Option<f64>) -> f64 {
    p.unwrap_or_else(|| 1.0 / f.lambda(f.root()))
}

fn parse_instructions(a: &str) -> Result<Vec<Vec<bool>>> {
    a.split(',')
        .map(|s| {
            s.trim()
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(anyhow!("instruction sets are strings over 0/1, got {s:?}")),
                })
                .collect()
        })
        .collect()
}

fn only(format: Option<Format>, allowed: &[Format]) -> Result<Format> {
    let f = format.unwrap_or(allowed[0]);
    if !allowed.contains(&f) {
        bail!("format {f:?} not supported here");
    }
    Ok(f)
}

fn report_output(rep: &ExperimentReport, format: Option<Format>) -> Result<String> {
    Ok(match only(format, &[Format::Json, Format::Csv])? {
        Format::Csv => rep.to_csv()?,
        _ => serde_json::to_string_pretty(&rep.to_json())? + "\n",
    })
}

#[derive(Serialize)]
struct CountOutput {
    count: u128,
    tree_leaves: u128,
    d_tilde_sizes: Vec<usize>,
    seed: u64,
    elapsed_ms: f64,
}

/// Output text and whether the command's check succeeded.
fn run(cli: &Cli) -> Result<(String, bool)> {
    match &cli.command {
        Command::Info { src } => {
            let st = load_formula(src)?.stats();
            let out = match only(cli.format, &[Format::Json, Format::Csv])? {
                Format::Csv => format!("depth,size,lambda,n_vars\n{},{},{},{}\n", st.depth, st.size, st.lambda, st.n_vars),
                _ => serde_json::to_string_pretty(&st)? + "\n",
            };
            Ok((out, true))
        }
        Command::Cdt { src, restriction_tree, p, seed, budget, trace } => {
            let f = load_formula(src)?;
            let rt = match (restriction_tree, p) {
                (Some(path), _) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    RestrictionTree::from_json(&serde_json::from_str(&text)?)?
                }
                (None, Some(p)) => {
                    let seed = seed.ok_or_else(|| anyhow!("--p needs --seed"))?;
                    let probs = ProbabilityTree::canonical(&f, *p)?;
                    CoupledSample::draw(f.n_vars(), &mut ChaCha8Rng::seed_from_u64(seed)).restriction_tree(&f, &probs)
                }
                (None, None) => RestrictionTree::constant(&f, Restriction::empty(f.n_vars())),
            };
            let opts = CdtOptions { node_budget: *budget, trace: *trace, ..CdtOptions::default() };
            let res = build_cdt_with(&f, &rt, &Restriction::empty(f.n_vars()), opts)?;
            let ok = res.tree.computes_under(&f, rt.get(f.root()));
            let out = match only(cli.format, &[Format::Dot, Format::Json])? {
                Format::Json => {
                    let v = serde_json::json!({
                        "formula": f.to_string(),
                        "verified": ok,
                        "depth": res.tree.depth(),
                        "leaves": res.tree.leaf_count(),
                        "restriction_tree": rt.to_json(),
                        "tree": res.tree.to_json(),
                        "trace": res.trace,
                    });
                    serde_json::to_string_pretty(&v)? + "\n"
                }
                _ => res.tree.to_dot_with(|_| None, &[format!("label=\"verified: {ok}\";"), "labelloc=t;".into()]),
            };
            Ok((out, ok))
        }
        Command::Sample { src, p, seed } => {
            only(cli.format, &[Format::Json])?;
            let f = load_formula(src)?;
            let p = default_p(&f, *p);
            let sample = CoupledSample::draw(f.n_vars(), &mut ChaCha8Rng::seed_from_u64(*seed));
            let probs = ProbabilityTree::canonical(&f, p)?;
            let v = serde_json::json!({
                "p": p,
                "seed": seed,
                "restriction": sample.restriction(p).to_string(),
                "restriction_tree": sample.restriction_tree(&f, &probs).to_json(),
            });
            Ok((serde_json::to_string_pretty(&v)? + "\n", true))
        }
        Command::Switch { src, p, smax, trials, seed } => {
            let f = load_formula(src)?;
            let rep = switching_experiment(&f, default_p(&f, *p), *smax, *trials, *seed)?;
            Ok((report_output(&rep, cli.format)?, rep.passed()))
        }
        Command::Lemma { src, p, a, trials, seed } => {
            let f = load_formula(src)?;
            let rep = lemma_main_experiment(&f, default_p(&f, *p), &parse_instructions(a)?, *trials, *seed)?;
            Ok((report_output(&rep, cli.format)?, rep.passed()))
        }
        Command::Count { src, seed, budget } => {
            only(cli.format, &[Format::Json])?;
            let f = load_formula(src)?;
            let r = count_sat(&f, &mut ChaCha8Rng::seed_from_u64(*seed), *budget)?;
            let out = CountOutput {
                count: r.count,
                tree_leaves: r.tree_leaves,
                d_tilde_sizes: r.d_tilde_sizes,
                seed: *seed,
                elapsed_ms: r.elapsed.as_secs_f64() * 1e3,
            };
            Ok((serde_json::to_string_pretty(&out)? + "\n", true))
        }
        Command::Props { instances, seed, max_vars } => {
            only(cli.format, &[Format::Json])?;
            let cfg = SuiteConfig { max_vars: *max_vars, ..SuiteConfig::new(*instances, *seed) };
            let reports = run_all(&cfg)?;
            let ok = reports.iter().all(|r| r.passed());
            for r in reports.iter().filter(|r| !r.passed()) {
                let cx = r.counterexample.as_ref().expect("failed suite has a counterexample");
                eprintln!("{} failed on instance {} (seed {})", r.name, cx.instance, cx.seed);
                eprintln!("  formula: {}", cx.formula);
                eprintln!("  n: {}", cx.n_vars);
                eprintln!("  restriction tree: {}", cx.restriction_tree);
                eprintln!("  {}", cx.detail);
            }
            Ok((serde_json::to_string_pretty(&reports)? + "\n", ok))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let (out, ok) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let written = match &cli.out {
        Some(path) => fs::write(path, &out).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout().write_all(out.as_bytes()).context("writing stdout"),
    };
    if let Err(e) = written {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("check failed");
        ExitCode::FAILURE
    }
}
