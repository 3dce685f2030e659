use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};

use scl_core::metrics::{audit, score_episode};
use scl_core::runtime::{replay, CognitionKind, Phase, System, Trace};
use scl_core::scenarios::{generate_suite, GeneratorParams, Scenario, DEFAULT_BUDGET, DEFAULT_NOISE_BOUND};
use scl_core::suite::{load_run, rescore, run_suite, RunManifest, SuiteConfig, SuiteError};
use scl_core::FaultModel;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_GATE: u8 = 3;

#[derive(Parser)]
#[command(name = "scl", version, about = "Run and inspect structured cognitive loop suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write episode specs as JSON.
    Generate {
        #[command(flatten)]
        suite: SuiteArgs,
        /// Directory for one `<key>.json` per episode; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a suite and print the report table.
    Run {
        #[command(flatten)]
        suite: SuiteArgs,
        #[command(flatten)]
        agent: AgentArgs,
        /// Directory for the manifest, traces, snapshots and reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trace's hash chain.
    Verify { trace: PathBuf },
    /// Rebuild memory from a trace and compare with its final snapshot.
    Replay { trace: PathBuf },
    /// Rescore a run directory from its traces.
    Report { dir: PathBuf },
    /// Check a run directory against the acceptance invariants.
    Gate { dir: PathBuf },
}

#[derive(Args)]
struct SuiteArgs {
    /// A, B, C or all; comma-separated lists are accepted.
    #[arg(long, default_value = "all", value_parser = parse_scenarios)]
    scenario: ScenarioList,
    #[arg(long, default_value_t = 12)]
    templates: u32,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Cities in the travel scenario.
    #[arg(long, default_value = "3", value_parser = PossibleValuesParser::new(["3", "5"]))]
    cities: String,
    /// Weather noise bound in °F.
    #[arg(long, default_value_t = DEFAULT_NOISE_BOUND)]
    noise_bound: f64,
    /// Cycle budget per episode.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u32,
}

#[derive(Args)]
struct AgentArgs {
    /// scl, no-mem, no-control, none or all; comma-separated lists are accepted.
    #[arg(long, default_value = "scl", value_parser = parse_systems)]
    system: SystemList,
    /// oracle, faulty or adapter.
    #[arg(long, default_value = "oracle")]
    cognition: CognitionKind,
    /// Run seeds per episode.
    #[arg(long, default_value_t = 3)]
    runs: u64,
    #[arg(long, default_value_t = FaultModel::default().p_redundant, value_parser = probability)]
    fault_redundant: f64,
    #[arg(long, default_value_t = FaultModel::default().p_forget, value_parser = probability)]
    fault_forget: f64,
    #[arg(long, default_value_t = FaultModel::default().p_premature, value_parser = probability)]
    fault_premature: f64,
    #[arg(long, default_value_t = FaultModel::default().p_unsupported, value_parser = probability)]
    fault_unsupported: f64,
    /// Per-attempt probability of an injected transient tool failure.
    #[arg(long, default_value_t = 0.0, value_parser = probability)]
    transient_rate: f64,
    /// Global seed for episode order, fault draws and bootstrap resampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone)]
struct ScenarioList(Vec<Scenario>);

#[derive(Clone)]
struct SystemList(Vec<System>);

fn parse_scenarios(raw: &str) -> Result<ScenarioList, String> {
    if raw.eq_ignore_ascii_case("all") {
        return Ok(ScenarioList(Scenario::ALL.to_vec()));
    }
    raw.split(',')
        .map(|s| s.trim().parse::<Scenario>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map(ScenarioList)
}

fn parse_systems(raw: &str) -> Result<SystemList, String> {
    if raw.eq_ignore_ascii_case("all") {
        return Ok(SystemList(System::ALL.to_vec()));
    }
    raw.split(',')
        .map(|s| s.trim().parse::<System>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map(SystemList)
}

fn probability(raw: &str) -> Result<f64, String> {
    let p: f64 = raw.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("{p} is not a probability in [0, 1]"))
    }
}

impl SuiteArgs {
    fn generator(&self) -> GeneratorParams {
        GeneratorParams {
            city_count: self.cities.parse().expect("validated by clap"),
            noise_bound: self.noise_bound,
            budget: self.budget,
        }
    }
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = match e.downcast_ref::<SuiteError>() {
            Some(SuiteError::Tampered { .. }) => EXIT_VERIFY,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: format!("{e:#}"),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn generate(suite: &SuiteArgs, out: Option<&Path>) -> Result<(), Failure> {
    let specs = generate_suite(&suite.scenario.0, suite.templates, suite.seeds, &suite.generator())
        .context("generating episodes")?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for spec in &specs {
                let path = dir.join(format!("{}.json", spec.key));
                let text = serde_json::to_string_pretty(spec).context("serializing spec")?;
                fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            println!("wrote {} episodes to {}", specs.len(), dir.display());
        }
        None => {
            for spec in &specs {
                println!("{}", serde_json::to_string(spec).context("serializing spec")?);
            }
        }
    }
    Ok(())
}

fn run(suite: &SuiteArgs, agent: &AgentArgs, out: Option<&Path>) -> Result<(), Failure> {
    let config = SuiteConfig {
        scenarios: suite.scenario.0.clone(),
        templates: suite.templates,
        seeds: suite.seeds,
        runs: agent.runs,
        systems: agent.system.0.clone(),
        cognition: agent.cognition,
        fault_model: FaultModel {
            p_redundant: agent.fault_redundant,
            p_forget: agent.fault_forget,
            p_premature: agent.fault_premature,
            p_unsupported: agent.fault_unsupported,
        },
        generator: suite.generator(),
        budget: Some(suite.budget),
        transient_rate: agent.transient_rate,
        global_seed: agent.seed,
    };
    let (manifest, _) = RunManifest::build(config).context("building manifest")?;
    let result = run_suite(&manifest, out).context("running suite")?;
    print!("{}", result.report.to_text());
    if let Some(dir) = out {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<Trace, Failure> {
    let trace = Trace::read_file(path).map_err(|e| {
        let last_good = match e.index() {
            Some(0) => "no valid events".to_string(),
            Some(i) => format!("last good event {}", i - 1),
            None => String::new(),
        };
        fail(EXIT_VERIFY, format!("{}: {e}; {last_good}", path.display()))
    })?;
    match trace.events.last() {
        Some(last) if last.phase == Phase::Terminate => Ok(trace),
        Some(last) => Err(fail(
            EXIT_VERIFY,
            format!(
                "{}: trace ends without a terminate event; last good event {}",
                path.display(),
                last.seq
            ),
        )),
        None => Err(fail(EXIT_VERIFY, format!("{}: empty trace", path.display()))),
    }
}

fn verify(path: &Path) -> Result<(), Failure> {
    let trace = read_trace(path)?;
    println!(
        "ok {} events, episode {}, head {}",
        trace.events.len(),
        trace.episode_id().unwrap_or_default(),
        trace.last_hash()
    );
    Ok(())
}

fn replay_cmd(path: &Path) -> Result<(), Failure> {
    let trace = read_trace(path)?;
    let report = replay(&trace).map_err(|e| fail(EXIT_VERIFY, format!("{}: {e}", path.display())))?;
    println!(
        "episode {}: {} writes replayed\nreplayed {}\nrecorded {}",
        report.episode_id, report.writes, report.replayed_hash, report.recorded_hash
    );
    if report.matches() {
        println!("ok");
        Ok(())
    } else {
        Err(fail(EXIT_VERIFY, format!("{}: replayed memory differs from the final snapshot", path.display())))
    }
}

fn report(dir: &Path) -> Result<(), Failure> {
    let result = rescore(dir).context("rescoring run")?;
    print!("{}", result.report.to_text());
    Ok(())
}

fn gate(dir: &Path) -> Result<(), Failure> {
    let (manifest, specs, episodes) = load_run(dir).context("loading run")?;
    let unreplayable: Vec<String> = episodes
        .iter()
        .filter(|e| !replay(&e.trace).is_ok_and(|r| r.matches()))
        .map(|e| e.trace.episode_id().unwrap_or_default().to_string())
        .collect();
    if let Some(first) = unreplayable.first() {
        return Err(fail(
            EXIT_VERIFY,
            format!("{} traces fail replay, first {first}", unreplayable.len()),
        ));
    }
    let result = rescore(dir).context("rescoring run")?;

    let mut checks: Vec<(bool, String)> = Vec::new();
    checks.push((true, format!("{} traces verify and replay", episodes.len())));
    let systems = &manifest.config.systems;
    if systems.contains(&System::Scl) {
        let scl: Vec<_> = episodes.iter().filter(|e| e.system == System::Scl).collect();
        let duplicates: u32 = result.scores_for(System::Scl).map(|s| s.redundant_calls).sum();
        checks.push((duplicates == 0, format!("scl executed {duplicates} duplicate calls")));
        let violations = scl
            .iter()
            .filter(|e| !audit(&specs[e.spec], &e.trace).ok())
            .count();
        checks.push((violations == 0, format!("{violations} scl episodes fail the audit")));
        let row = result.report.row(System::Scl).expect("scl row");
        if manifest.config.cognition == CognitionKind::Oracle {
            let exact = row.tsr.mean == 100.0 && row.tue.mean == 0.0 && row.mf == 1.0 && row.hallucinations == 0.0;
            checks.push((
                exact,
                format!(
                    "oracle scl TSR {:.1} TUE {:.2} MF {:.3} hallucinations {:.2}",
                    row.tsr.mean, row.tue.mean, row.mf, row.hallucinations
                ),
            ));
        }
        for other in systems.iter().filter(|s| **s != System::Scl) {
            let o = result.report.row(*other).expect("system row");
            checks.push((
                row.tsr.mean >= o.tsr.mean,
                format!("scl TSR {:.1} vs {} {:.1}", row.tsr.mean, other.as_str(), o.tsr.mean),
            ));
        }
    }
    // rescoring is deterministic over the same bytes
    let same = episodes
        .iter()
        .zip(&result.scores)
        .all(|(e, s)| score_episode(&specs[e.spec], &e.trace) == *s);
    checks.push((same, "scores are reproducible from trace bytes".to_string()));

    for (ok, text) in &checks {
        println!("{} {text}", if *ok { "PASS" } else { "FAIL" });
    }
    if checks.iter().all(|(ok, _)| *ok) {
        Ok(())
    } else {
        Err(fail(EXIT_GATE, "gate failed"))
    }
}

fn main() -> ExitCode {
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
    let result = match &cli.command {
        Command::Generate { suite, out } => generate(suite, out.as_deref()),
        Command::Run { suite, agent, out } => run(suite, agent, out.as_deref()),
        Command::Verify { trace } => verify(trace),
        Command::Replay { trace } => replay_cmd(trace),
        Command::Report { dir } => report(dir),
        Command::Gate { dir } => gate(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
