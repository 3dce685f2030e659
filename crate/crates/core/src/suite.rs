//! Suite runner: builds a manifest, runs every (episode, run seed, system)
//! job in a deterministic shuffled order across threads, and writes traces,
//! snapshots and reports.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{canonical_bytes, derive_seed};
use crate::cognition::FaultModel;
use crate::metrics::{aggregate, score_episode, EpisodeScore, SuiteReport};
use crate::runtime::{episode_id, run_episode, AgentConfig, CognitionKind, RuntimeError, System, TamperError, Trace};
use crate::scenarios::{generate_suite, EpisodeSpec, GeneratorParams, Scenario, ScenarioError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub scenarios: Vec<Scenario>,
    pub templates: u32,
    /// Generator seeds per template.
    pub seeds: u64,
    /// Run seeds; each episode is run once per run seed.
    pub runs: u64,
    pub systems: Vec<System>,
    pub cognition: CognitionKind,
    pub fault_model: FaultModel,
    pub generator: GeneratorParams,
    pub budget: Option<u32>,
    pub transient_rate: f64,
    pub global_seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            templates: 12,
            seeds: 10,
            runs: 3,
            systems: vec![System::Scl],
            cognition: CognitionKind::Oracle,
            fault_model: FaultModel::default(),
            generator: GeneratorParams::default(),
            budget: None,
            transient_rate: 0.0,
            global_seed: 0,
        }
    }
}

impl SuiteConfig {
    pub fn agent(&self, system: System) -> AgentConfig {
        AgentConfig {
            fault_model: self.fault_model,
            budget: self.budget,
            transient_rate: self.transient_rate,
            suite_seed: self.global_seed,
            ..AgentConfig::new(system, self.cognition)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scenario: Scenario,
    pub template_id: u32,
    pub seed: u64,
    pub key: String,
    pub spec_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SuiteConfig,
    pub episodes: Vec<ManifestEntry>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite has no episodes (templates={templates}, seeds={seeds})")]
    Empty { templates: u32, seeds: u64 },
    #[error("suite has no run seeds")]
    NoRuns,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("output directory holds a different manifest: {0}")]
    ManifestMismatch(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Tampered { path: PathBuf, source: TamperError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl RunManifest {
    pub fn build(config: SuiteConfig) -> Result<(Self, Vec<EpisodeSpec>), SuiteError> {
        if config.templates == 0 || config.seeds == 0 || config.scenarios.is_empty() {
            return Err(SuiteError::Empty {
                templates: config.templates,
                seeds: config.seeds,
            });
        }
        if config.runs == 0 {
            return Err(SuiteError::NoRuns);
        }
        let specs = generate_suite(&config.scenarios, config.templates, config.seeds, &config.generator)?;
        let episodes = specs
            .iter()
            .map(|s| ManifestEntry {
                scenario: s.scenario,
                template_id: s.template_id,
                seed: s.seed,
                key: s.key.clone(),
                spec_hash: s.spec_hash(),
            })
            .collect();
        Ok((Self { config, episodes }, specs))
    }

    /// Regenerates the specs and checks them against the recorded hashes.
    pub fn specs(&self) -> Result<Vec<EpisodeSpec>, SuiteError> {
        let (fresh, specs) = Self::build(self.config.clone())?;
        if fresh.episodes != self.episodes {
            return Err(SuiteError::Malformed("manifest spec hashes do not match the generator".into()));
        }
        Ok(specs)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        canonical_bytes(self)
    }

    pub fn read(path: &Path) -> Result<Self, SuiteError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes).map_err(|e| SuiteError::Malformed(format!("{}: {e}", path.display())))
    }
}

/// Spec index, run seed and system of one job.
type Job = (usize, u64, System);

/// One finished (episode, run seed, system) job.
#[derive(Clone, Debug)]
pub struct JobResult {
    pub score: EpisodeScore,
    pub trace_hash: String,
}

#[derive(Clone, Debug)]
pub struct SuiteRun {
    pub scores: Vec<EpisodeScore>,
    pub report: SuiteReport,
    /// Last trace hash per `system/episode_id`.
    pub trace_hashes: BTreeMap<String, String>,
}

impl SuiteRun {
    pub fn scores_for(&self, system: System) -> impl Iterator<Item = &EpisodeScore> {
        self.scores.iter().filter(move |s| s.system == system)
    }
}

pub fn trace_path(out: &Path, system: System, id: &str) -> PathBuf {
    out.join(system.as_str()).join("traces").join(format!("{id}.trace"))
}

fn run_job(
    spec: &EpisodeSpec,
    agent: &AgentConfig,
    run_seed: u64,
    out: Option<&Path>,
) -> Result<JobResult, SuiteError> {
    let id = episode_id(spec, run_seed);
    if let Some(dir) = out {
        // resume: a verified trace on disk counts as done
        let path = trace_path(dir, agent.system, &id);
        if let Ok(trace) = Trace::read_file(&path) {
            if trace.events.last().is_some_and(|e| e.phase == crate::runtime::Phase::Terminate) {
                return Ok(JobResult {
                    score: score_episode(spec, &trace),
                    trace_hash: trace.last_hash().to_string(),
                });
            }
        }
    }
    let run = run_episode(spec, agent, run_seed)?;
    if let Some(dir) = out {
        let path = trace_path(dir, agent.system, &id);
        run.trace.write_file(&path).map_err(io_err(&path))?;
        let snaps = dir.join(agent.system.as_str()).join("snapshots");
        fs::create_dir_all(&snaps).map_err(io_err(&snaps))?;
        run.final_snapshot
            .write_to_dir(&snaps)
            .map_err(|e| SuiteError::Malformed(e.to_string()))?;
    }
    Ok(JobResult {
        score: score_episode(spec, &run.trace),
        trace_hash: run.trace.last_hash().to_string(),
    })
}

/// Runs every job of the manifest. With `out`, results are written there and
/// existing traces are reused.
pub fn run_suite(manifest: &RunManifest, out: Option<&Path>) -> Result<SuiteRun, SuiteError> {
    let specs = manifest.specs()?;
    let config = &manifest.config;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mpath = dir.join("manifest.json");
        if mpath.exists() {
            if RunManifest::read(&mpath)? != *manifest {
                return Err(SuiteError::ManifestMismatch(mpath));
            }
        } else {
            fs::write(&mpath, manifest.to_bytes()).map_err(io_err(&mpath))?;
        }
    }

    let mut jobs: Vec<Job> = Vec::new();
    for i in 0..specs.len() {
        for run in 0..config.runs {
            for &system in &config.systems {
                jobs.push((i, run, system));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&["episode-order", &config.global_seed.to_string()]));
    jobs.shuffle(&mut rng);

    let results: Vec<Result<(Job, JobResult), SuiteError>> = jobs
        .par_iter()
        .map(|&(i, run, system)| {
            let agent = config.agent(system);
            run_job(&specs[i], &agent, run, out).map(|r| ((i, run, system), r))
        })
        .collect();
    let mut done = Vec::with_capacity(results.len());
    for r in results {
        done.push(r?);
    }
    done.sort_by_key(|((i, run, system), _)| (*system, *i, *run));

    let mut trace_hashes = BTreeMap::new();
    let mut scores = Vec::with_capacity(done.len());
    for ((_, _, system), job) in done {
        trace_hashes.insert(format!("{}/{}", system.as_str(), job.score.episode_id), job.trace_hash);
        scores.push(job.score);
    }
    let report = aggregate(&scores, derive_seed(&["bootstrap", &config.global_seed.to_string()]));
    if let Some(dir) = out {
        write_json(&dir.join("suite.json"), &scores)?;
        write_json(&dir.join("report.json"), &report)?;
        let rpath = dir.join("report.txt");
        fs::write(&rpath, report.to_text()).map_err(io_err(&rpath))?;
    }
    Ok(SuiteRun {
        scores,
        report,
        trace_hashes,
    })
}

/// A verified trace read back from a run directory.
#[derive(Clone, Debug)]
pub struct StoredEpisode {
    pub system: System,
    /// Index into the manifest's specs.
    pub spec: usize,
    pub run_seed: u64,
    pub trace: Trace,
}

/// Reads the manifest and every trace of a finished run, verifying each chain.
pub fn load_run(out: &Path) -> Result<(RunManifest, Vec<EpisodeSpec>, Vec<StoredEpisode>), SuiteError> {
    let manifest = RunManifest::read(&out.join("manifest.json"))?;
    let specs = manifest.specs()?;
    let mut episodes = Vec::new();
    for &system in &manifest.config.systems {
        for (i, spec) in specs.iter().enumerate() {
            for run_seed in 0..manifest.config.runs {
                let path = trace_path(out, system, &episode_id(spec, run_seed));
                let trace = Trace::read_file(&path).map_err(|source| SuiteError::Tampered { path, source })?;
                episodes.push(StoredEpisode {
                    system,
                    spec: i,
                    run_seed,
                    trace,
                });
            }
        }
    }
    Ok((manifest, specs, episodes))
}

/// Rescores a finished run from its traces and rewrites the report files.
pub fn rescore(out: &Path) -> Result<SuiteRun, SuiteError> {
    let (manifest, specs, episodes) = load_run(out)?;
    let mut trace_hashes = BTreeMap::new();
    let scores: Vec<EpisodeScore> = episodes
        .par_iter()
        .map(|e| score_episode(&specs[e.spec], &e.trace))
        .collect();
    for (e, s) in episodes.iter().zip(&scores) {
        trace_hashes.insert(format!("{}/{}", e.system.as_str(), s.episode_id), e.trace.last_hash().to_string());
    }
    let report = aggregate(&scores, derive_seed(&["bootstrap", &manifest.config.global_seed.to_string()]));
    write_json(&out.join("report.json"), &report)?;
    let rpath = out.join("report.txt");
    fs::write(&rpath, report.to_text()).map_err(io_err(&rpath))?;
    Ok(SuiteRun {
        scores,
        report,
        trace_hashes,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SuiteError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| SuiteError::Malformed(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}
