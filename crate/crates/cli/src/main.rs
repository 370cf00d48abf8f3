use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use mulmatch::benchgen::{
    gen_long, gen_wallace, parse_aliases, parse_list, GenError, LongSpec, Polarity, WallaceSpec,
};
use mulmatch::eval::{
    check_tautology, enumerate_status, Status, Verdict, DEFAULT_EXHAUSTIVE_LIMIT,
};
use mulmatch::harness::{compare, Cell, SolverSpec, Variant};
use mulmatch::preprocess::{preprocess, PreprocessOptions};
use mulmatch::recovery::DEFAULT_BACKTRACK_CAP;
use mulmatch::smtlib::{parse, print, term_text, Script};

#[derive(Parser)]
#[command(
    name = "mulmatch",
    version,
    about = "Detect decomposed multipliers in QF_BV formulas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Append [x*y = t] equalities for every matched multiplier.
    Preprocess(PreprocessArgs),
    /// Write a synthetic benchmark.
    #[command(subcommand)]
    Generate(Generate),
    /// Check learned assertions with the evaluation oracle.
    Verify(VerifyArgs),
    /// Run solvers on raw and preprocessed variants and write a CSV table.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, conflicts_with = "wallace_only")]
    long_only: bool,
    #[arg(long)]
    wallace_only: bool,
    #[arg(long)]
    allow_single_summand: bool,
    #[arg(long, default_value_t = DEFAULT_BACKTRACK_CAP as u64, value_parser = clap::value_parser!(u64).range(1..))]
    backtrack_cap: u64,
    /// Leave previously learned assertions out of the sweep (default).
    #[arg(long, conflicts_with = "match_learned")]
    no_match_learned: bool,
    /// Also sweep previously learned assertions.
    #[arg(long)]
    match_learned: bool,
    /// Write the match report as JSON.
    #[arg(long, value_name = "JSON")]
    stats: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Generate {
    /// Long multiplication over k blocks of w bits.
    Long(LongArgs),
    /// Wallace-tree multiplier over n-bit operands.
    Wallace(WallaceArgs),
}

#[derive(Args)]
struct LongArgs {
    #[arg(long, required_unless_present = "manifest")]
    blocks: Option<usize>,
    #[arg(long, required_unless_present = "manifest")]
    block_width: Option<u32>,
    /// Blocks fixed to zero, e.g. `x2,y3`.
    #[arg(long, default_value = "")]
    zero: String,
    /// Blocks equal to an earlier block, e.g. `y2=x3`.
    #[arg(long, default_value = "")]
    alias: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sat: bool,
    /// Read the spec from a key=value manifest instead of flags.
    #[arg(long, conflicts_with_all = ["blocks", "block_width"])]
    manifest: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct WallaceArgs {
    #[arg(long)]
    width: u32,
    #[arg(long)]
    sat: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_LIMIT, value_parser = clap::value_parser!(u32).range(0..=40))]
    exhaustive_limit: u32,
    /// Random assignments tried above the exhaustive limit.
    #[arg(long, default_value_t = 1000)]
    random: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// `NAME:COMMAND`, with `{file}` where the benchmark path goes.
    #[arg(long = "solver", required = true)]
    solvers: Vec<String>,
    /// Per-run wall-clock limit in seconds.
    #[arg(long, value_parser = parse_secs)]
    timeout: Duration,
    #[arg(long)]
    csv: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

fn parse_secs(s: &str) -> Result<Duration, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err("timeout must be positive".into());
    }
    Ok(Duration::from_secs_f64(v))
}

/// Failure classes mapped to exit codes.
enum Failure {
    User(anyhow::Error),
    Internal(anyhow::Error),
    Counterexample,
    Degraded(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::User(e)
    }
}

impl From<GenError> for Failure {
    fn from(e: GenError) -> Self {
        Failure::User(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn read_script(path: &Path) -> anyhow::Result<Script> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ensure_distinct(input: &Path, output: &Path) -> anyhow::Result<()> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == output,
    };
    if same {
        bail!("output {} would overwrite the input", output.display());
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run_preprocess(a: PreprocessArgs) -> Outcome {
    ensure_distinct(&a.input, &a.output)?;
    if let Some(stats) = &a.stats {
        ensure_distinct(&a.input, stats)?;
        if stats == &a.output {
            return Err(anyhow!("--stats and -o name the same file").into());
        }
    }
    let opts = PreprocessOptions {
        long: !a.wallace_only,
        wallace: !a.long_only,
        allow_single_summand: a.allow_single_summand,
        backtrack_cap: usize::try_from(a.backtrack_cap).unwrap_or(usize::MAX),
        match_learned: a.match_learned && !a.no_match_learned,
        ..PreprocessOptions::default()
    };
    let script = read_script(&a.input)?;
    let (out, report) = preprocess(script, &opts);
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.into()))?;
    write(&a.output, &print(&out))?;
    if let Some(stats) = &a.stats {
        write(stats, &json)?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "scanned {} subterms, {} matches, {} assertions emitted, {} duplicates",
        report.subterms_scanned,
        report.matches_found,
        report.assertions_emitted,
        report.duplicates_suppressed
    );
    Ok(())
}

fn run_generate(g: Generate) -> Outcome {
    let (text, output) = match g {
        Generate::Long(a) => {
            let spec = match &a.manifest {
                Some(m) => {
                    let text = fs::read_to_string(m)
                        .with_context(|| format!("reading {}", m.display()))?;
                    LongSpec::from_manifest(&text)?
                }
                None => {
                    let k = a.blocks.ok_or_else(|| anyhow!("--blocks is required"))?;
                    let w = a
                        .block_width
                        .ok_or_else(|| anyhow!("--block-width is required"))?;
                    let mut spec = LongSpec::fresh(k, w, a.seed);
                    spec.validate()?;
                    for r in parse_list(&a.zero)? {
                        spec.set_zero(r)?;
                    }
                    for (r, to) in parse_aliases(&a.alias)? {
                        spec.set_alias(r, to)?;
                    }
                    if a.sat {
                        spec.polarity = Polarity::Sat;
                    }
                    spec.validate()?;
                    spec
                }
            };
            (print(&gen_long(&spec)?.script), a.output)
        }
        Generate::Wallace(a) => {
            let spec = WallaceSpec {
                n: a.width,
                polarity: if a.sat {
                    Polarity::Sat
                } else {
                    Polarity::Unsat
                },
                seed: a.seed,
            };
            (print(&gen_wallace(&spec)?.script), a.output)
        }
    };
    write(&output, &text)?;
    Ok(())
}

fn run_verify(a: VerifyArgs) -> Outcome {
    let script = read_script(&a.input)?;
    let store = &script.store;
    let mut failed = false;
    for (i, l) in script.learned.iter().enumerate() {
        let verdict = check_tautology(store, l.term, a.exhaustive_limit, a.random, a.seed);
        match &verdict {
            Verdict::Proved => println!("learned {i}: proved ({})", l.note),
            Verdict::Skipped(why) => println!("learned {i}: not proved: {why}"),
            Verdict::Falsified(cex) => {
                failed = true;
                println!("learned {i}: FALSIFIED ({})", l.note);
                println!("  assertion: {}", term_text(store, l.term));
                println!("  counterexample: {cex}");
            }
        }
    }
    if script.learned.is_empty() {
        println!("no learned assertions");
    }

    let vars: Vec<(String, u32)> = script
        .declarations
        .iter()
        .map(|(n, s)| (n.clone(), s.width()))
        .collect();
    let raw = enumerate_status(store, &script.assertions, &vars, a.exhaustive_limit)
        .map_err(|e| Failure::User(e.into()))?;
    let full = enumerate_status(store, &script.all_assertions(), &vars, a.exhaustive_limit)
        .map_err(|e| Failure::User(e.into()))?;
    match (raw, full) {
        (Some(r), Some(f)) => {
            let label = |s: &Status| if s.is_sat() { "sat" } else { "unsat" };
            println!("status: raw {}, augmented {}", label(&r), label(&f));
            if r.is_sat() != f.is_sat() {
                failed = true;
                if let Status::Sat(m) = &r {
                    println!("  model of the raw script violating the augmented one: {m}");
                }
            }
        }
        _ => println!("status: not enumerated (free bits exceed the exhaustive limit)"),
    }
    if failed {
        Err(Failure::Counterexample)
    } else {
        Ok(())
    }
}

fn bench_name(path: &Path, taken: &mut Vec<String>) -> String {
    let base = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let mut name = base.clone();
    let mut n = 2;
    while taken.contains(&name) {
        name = format!("{base}_{n}");
        n += 1;
    }
    taken.push(name.clone());
    name
}

fn run_bench(a: BenchArgs) -> Outcome {
    let solvers = a
        .solvers
        .iter()
        .map(|s| SolverSpec::parse(s, a.timeout))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::User(e.into()))?;
    for f in &a.files {
        ensure_distinct(f, &a.csv)?;
    }
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(anyhow!("--jobs must be positive").into());
    }
    let dir = tempfile::tempdir().map_err(|e| Failure::Internal(e.into()))?;
    let mut cells = Vec::new();
    let mut names = Vec::new();
    for f in &a.files {
        let script = read_script(f)?;
        let name = bench_name(f, &mut names);
        let (out, report) = preprocess(script, &PreprocessOptions::default());
        let pre = dir.path().join(format!("{name}.pre.smt2"));
        write(&pre, &print(&out)).map_err(Failure::Internal)?;
        println!("{name}: {} learned assertions", report.assertions_emitted);
        cells.push(Cell {
            benchmark: name.clone(),
            variant: Variant::Raw,
            file: f.clone(),
        });
        cells.push(Cell {
            benchmark: name,
            variant: Variant::Preprocessed,
            file: pre,
        });
    }
    let report = compare(&cells, &solvers, jobs).map_err(|e| Failure::Internal(e.into()))?;
    let file = fs::File::create(&a.csv).with_context(|| format!("writing {}", a.csv.display()))?;
    report
        .write_csv(file)
        .with_context(|| format!("writing {}", a.csv.display()))?;
    for r in &report.rows {
        println!(
            "{} {} {} {} {:.3}",
            r.benchmark,
            r.variant,
            r.solver,
            r.verdict.label(),
            r.seconds
        );
    }
    let clashes = report.disagreements();
    if !clashes.is_empty() {
        return Err(Failure::Internal(anyhow!(
            "contradictory verdicts on {}",
            clashes.join(", ")
        )));
    }
    if report.all_errored() {
        return Err(Failure::Degraded("no solver ran successfully".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Preprocess(a) => run_preprocess(a),
        Command::Generate(g) => run_generate(g),
        Command::Verify(a) => run_verify(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Counterexample) => ExitCode::from(3),
        Err(Failure::Degraded(msg)) => {
            eprintln!("degraded run: {msg}");
            ExitCode::from(4)
        }
    }
}
