//! `bychain`: run scenarios, adversary suites, crypto benchmarks, and render
//! run bundles.
//!
//! Exit codes: 0 success, 1 scenario or input error, 2 an attack did not
//! meet its expectation, 64 bad usage.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bychain::bench::{run_bench, BenchOp, BenchStats};
use bychain::sim::scenario::VoteModeSpec;
use bychain::sim::{
    bundle_digest, csv_header, tallies_csv, AdversaryAction, AttackTally, RunReport, Scenario,
    ScenarioError, Simulation, BUNDLE_FILES,
};

const EXIT_SCENARIO: u8 = 1;
const EXIT_EXPECTATION: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Trials for the whole-suite checks that are not single actions.
const TAMPER_TRIALS: usize = 100;
const OWNERSHIP_TRIALS: usize = 10_000;

#[derive(Parser, Debug)]
#[command(name = "bychain", version, about = "Proof-of-location blockchain simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write its report bundle.
    Run(RunArgs),
    /// Run a scenario, then attack its final state.
    Attack(AttackArgs),
    /// Time signing primitives.
    Bench(BenchArgs),
    /// Render a run bundle written by `run` or `attack`.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Text,
    Csv,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario file; the built-in standard scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, env = "BYCHAIN_SEED")]
    seed: Option<u64>,
    /// Overrides the epoch length in blocks.
    #[arg(long)]
    epoch_blocks: Option<u64>,
    /// Elect committees by expected vote counts instead of sampled tickets.
    #[arg(long)]
    deterministic_votes: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<Scenario, ScenarioError> {
        let mut s = match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::standard(),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(e) = self.epoch_blocks {
            s.incentive.epoch_blocks = e;
        }
        if self.deterministic_votes {
            s.consensus.vote_mode = VoteModeSpec::Expected;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: ScenarioArgs,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Every suite action plus the chain tamper, ownership and key-reuse
    /// checks.
    #[arg(long)]
    all: bool,
    /// Suite action by name; repeatable.
    #[arg(long = "action", value_name = "NAME")]
    actions: Vec<String>,
    /// Attempts per action.
    #[arg(long, default_value_t = 100)]
    attempts: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// keygen, sign, verify or hash; every op when omitted.
    #[arg(long)]
    op: Option<BenchOp>,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, env = "BYCHAIN_SEED", default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding a run bundle.
    #[arg(long = "run", value_name = "DIR")]
    run_dir: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Unmet(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Input(format!("scenario error: {e}"))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(&a),
        Command::Attack(a) => attack(&a),
        Command::Bench(a) => bench(&a),
        Command::Report(a) => report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SCENARIO)
        }
        Err(Failure::Unmet(msg)) => {
            eprintln!("expectation not met: {msg}");
            ExitCode::from(EXIT_EXPECTATION)
        }
    }
}

fn run_overview(r: &RunReport, format: Format) -> String {
    let first = r.coverage.first().copied().unwrap_or(0.0);
    let last = r.coverage.last().copied().unwrap_or(0.0);
    match format {
        Format::Text => format!("{}digest: {}\n", r.summary(), r.digest()),
        Format::Csv => {
            let mut out = csv_header(
                "run",
                "seed,rounds,chain_height,tip,converged,coverage_start,coverage_end,digest",
            );
            let _ = writeln!(
                out,
                "{},{},{},{},{},{first:.6},{last:.6},{}",
                r.seed,
                r.rounds,
                r.chain_height,
                r.tip,
                r.converged,
                r.digest()
            );
            out
        }
    }
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let scenario = args.common.scenario()?;
    let report = Simulation::new(scenario)?.run();
    let out = &args.common.out;
    report.write_bundle(out).map_err(io_err(out))?;
    print!("{}", run_overview(&report, args.common.format));
    Ok(())
}

fn selected_actions(args: &AttackArgs) -> Result<Vec<AdversaryAction>, Failure> {
    let suite = AdversaryAction::suite();
    if args.all {
        return Ok(suite);
    }
    if args.actions.is_empty() {
        return Err(Failure::Input("attack needs --all or at least one --action".into()));
    }
    let mut picked = Vec::new();
    for name in &args.actions {
        let matches: Vec<_> = suite.iter().filter(|a| a.name() == name).cloned().collect();
        if matches.is_empty() {
            let known: Vec<_> = suite.iter().map(AdversaryAction::name).collect();
            return Err(Failure::Input(format!(
                "unknown action `{name}` (known: {})",
                known.join(", ")
            )));
        }
        picked.extend(matches);
    }
    Ok(picked)
}

/// Pass/fail checks that are not single-action tallies.
struct SuiteChecks {
    tamper_detected: usize,
    false_accepts: usize,
    duplicate_keys: usize,
}

impl SuiteChecks {
    fn failures(&self) -> Vec<String> {
        let mut f = Vec::new();
        if self.tamper_detected != TAMPER_TRIALS {
            f.push(format!(
                "chain tamper detected {}/{TAMPER_TRIALS}",
                self.tamper_detected
            ));
        }
        if self.false_accepts != 0 {
            f.push(format!(
                "ownership false accepts {}/{OWNERSHIP_TRIALS}",
                self.false_accepts
            ));
        }
        if self.duplicate_keys != 0 {
            f.push(format!("{} duplicate one-use keys on chain", self.duplicate_keys));
        }
        f
    }

    fn csv(&self) -> String {
        let mut out = csv_header("suite_checks", "check,trials,failures");
        let _ = writeln!(
            out,
            "chain_tamper,{TAMPER_TRIALS},{}",
            TAMPER_TRIALS - self.tamper_detected
        );
        let _ = writeln!(out, "ownership_false_accept,{OWNERSHIP_TRIALS},{}", self.false_accepts);
        let _ = writeln!(out, "duplicate_one_use_keys,1,{}", self.duplicate_keys);
        out
    }
}

fn tally_text(tallies: &[AttackTally], checks: Option<&SuiteChecks>) -> String {
    let mut s = String::new();
    for t in tallies {
        let expected = t.expected.map(|e| e.to_string()).unwrap_or_else(|| "none".into());
        let _ = writeln!(
            s,
            "{} {}: detected {}/{} expected {expected}",
            if t.met() { "ok  " } else { "FAIL" },
            t.action,
            t.detected,
            t.attempts
        );
    }
    if let Some(c) = checks {
        let _ = writeln!(s, "chain tamper detected: {}/{TAMPER_TRIALS}", c.tamper_detected);
        let _ = writeln!(s, "ownership false accepts: {}/{OWNERSHIP_TRIALS}", c.false_accepts);
        let _ = writeln!(s, "duplicate one-use keys: {}", c.duplicate_keys);
    }
    s
}

fn attack(args: &AttackArgs) -> Result<(), Failure> {
    let actions = selected_actions(args)?;
    let scenario = args.common.scenario()?;
    let mut sim = Simulation::new(scenario)?;
    while !sim.is_finished() {
        sim.step();
    }
    let tallies: Vec<_> = actions
        .iter()
        .map(|a| sim.inject_repeated(a, args.attempts))
        .collect();
    let checks = args.all.then(|| SuiteChecks {
        tamper_detected: sim.tamper_trials(TAMPER_TRIALS),
        false_accepts: sim.ownership_false_accepts(OWNERSHIP_TRIALS),
        duplicate_keys: sim.duplicate_commitment_keys(),
    });
    let report = sim.finish();

    let out = &args.common.out;
    report.write_bundle(out).map_err(io_err(out))?;
    let tally_path = out.join("attack_tallies.csv");
    std::fs::write(&tally_path, tallies_csv(&tallies)).map_err(io_err(&tally_path))?;
    if let Some(c) = &checks {
        let path = out.join("suite_checks.csv");
        std::fs::write(&path, c.csv()).map_err(io_err(&path))?;
    }

    match args.common.format {
        Format::Text => print!("{}", tally_text(&tallies, checks.as_ref())),
        Format::Csv => {
            print!("{}", tallies_csv(&tallies));
            if let Some(c) = &checks {
                print!("{}", c.csv());
            }
        }
    }

    let mut unmet: Vec<String> = tallies
        .iter()
        .filter(|t| !t.met())
        .map(|t| format!("{} detected {}/{}", t.action, t.detected, t.attempts))
        .collect();
    unmet.extend(report.attacks.iter().filter(|a| !a.met()).map(|a| {
        format!("scripted {} at round {} {}", a.action, a.round, a.verdict)
    }));
    if let Some(c) = &checks {
        unmet.extend(c.failures());
    }
    if unmet.is_empty() {
        Ok(())
    } else {
        Err(Failure::Unmet(unmet.join("; ")))
    }
}

fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let ops = match args.op {
        Some(op) => vec![op],
        None => BenchOp::ALL.to_vec(),
    };
    let stats: Vec<BenchStats> = ops
        .into_iter()
        .map(|op| run_bench(op, args.iters, args.seed))
        .collect();
    let mut csv = csv_header("bench", BenchStats::CSV_COLUMNS);
    for s in &stats {
        csv.push_str(&s.csv_row());
        csv.push('\n');
    }
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let path = args.out.join("bench.csv");
    std::fs::write(&path, &csv).map_err(io_err(&path))?;
    match args.format {
        Format::Text => stats.iter().for_each(|s| println!("{s}")),
        Format::Csv => print!("{csv}"),
    }
    let failed: Vec<String> = stats
        .iter()
        .filter(|s| s.successes != s.iterations)
        .map(|s| format!("{} succeeded {}/{}", s.op, s.successes, s.iterations))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Unmet(failed.join("; ")))
    }
}

/// Checks that a CSV body opens with a schema row this build understands.
fn schema_ok(body: &[u8]) -> bool {
    let expected = format!("# bychain schema_version={}", bychain::sim::SCHEMA_VERSION);
    body.split(|b| *b == b'\n')
        .next()
        .is_some_and(|line| line.starts_with(expected.as_bytes()))
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let dir = &args.run_dir;
    let mut files = Vec::new();
    for name in BUNDLE_FILES {
        let path = dir.join(name);
        let body = std::fs::read(&path).map_err(io_err(&path))?;
        files.push((name, body));
    }
    let digest = bundle_digest(files.iter().map(|(n, b)| (*n, b.as_slice())));
    let bad: Vec<&str> = files
        .iter()
        .filter(|(n, b)| n.ends_with(".csv") && !schema_ok(b))
        .map(|(n, _)| *n)
        .collect();
    if !bad.is_empty() {
        return Err(Failure::Input(format!(
            "unsupported or missing schema row in {}",
            bad.join(", ")
        )));
    }
    match args.format {
        Format::Text => {
            let summary = files
                .iter()
                .find(|(n, _)| *n == "summary.txt")
                .map(|(_, b)| String::from_utf8_lossy(b).into_owned())
                .unwrap_or_default();
            print!("{summary}");
            println!("digest: {digest}");
        }
        Format::Csv => {
            let mut out = csv_header("bundle", "file,bytes,sha256");
            for (name, body) in &files {
                let _ = writeln!(out, "{name},{},{}", body.len(), bychain::crypto::hash(body));
            }
            let _ = writeln!(out, "bundle,,{digest}");
            print!("{out}");
        }
    }
    Ok(())
}
