//! The episode loop: retrieve, propose, evaluate, act, write, check.

mod replay;
mod trace;

pub use replay::{replay, ReplayReport};
pub use trace::{Phase, TamperError, Trace, TraceEvent};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::action::{self, Effect, ToolCall, ToolEnv, ToolRegistry, ToolResult};
use crate::canonical::{canonical_hash, derive_seed};
use crate::cognition::{
    AdapterPolicy, Cognition, FaultModel, FaultyPolicy, OraclePolicy, OracleTransport, Proposal, META_DIRECTIVES_VERSION,
};
use crate::control::{Controller, Decision, Guard, TerminationStatus, DEFAULT_CONFIDENCE_THRESHOLD};
use crate::mem::{EpisodeStore, MemError, MemPath, MemRecord, MemSnapshot, MemoryMode, RecordKind, DEFAULT_WINDOW_SIZE};
use crate::scenarios::EpisodeSpec;

/// The four agent configurations compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    Scl,
    NoMem,
    NoControl,
    None,
}

impl System {
    pub const ALL: [System; 4] = [System::Scl, System::NoMem, System::NoControl, System::None];

    pub fn as_str(self) -> &'static str {
        match self {
            System::Scl => "scl",
            System::NoMem => "no-mem",
            System::NoControl => "no-control",
            System::None => "none",
        }
    }

    pub fn memory_enabled(self) -> bool {
        matches!(self, System::Scl | System::NoControl)
    }

    pub fn control_enabled(self) -> bool {
        matches!(self, System::Scl | System::NoMem)
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        System::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown system {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CognitionKind {
    Oracle,
    Faulty,
    Adapter,
}

impl FromStr for CognitionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(CognitionKind::Oracle),
            "faulty" => Ok(CognitionKind::Faulty),
            "adapter" => Ok(CognitionKind::Adapter),
            other => Err(format!("unknown cognition policy {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub system: System,
    pub cognition: CognitionKind,
    pub fault_model: FaultModel,
    /// Overrides the spec's cycle budget when set.
    pub budget: Option<u32>,
    pub confidence_threshold: f64,
    /// Per-attempt probability of an injected transient tool failure.
    pub transient_rate: f64,
    /// Suite-level seed folded into the cognition fault stream.
    #[serde(default)]
    pub suite_seed: u64,
    /// Cycles before which a context change is registered.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_changes: Vec<u32>,
}

impl AgentConfig {
    pub fn new(system: System, cognition: CognitionKind) -> Self {
        Self {
            system,
            cognition,
            fault_model: FaultModel::default(),
            budget: None,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            transient_rate: 0.0,
            suite_seed: 0,
            context_changes: Vec::new(),
        }
    }

    pub fn oracle(system: System) -> Self {
        Self::new(system, CognitionKind::Oracle)
    }

    pub fn faulty(system: System, faults: FaultModel) -> Self {
        Self {
            fault_model: faults,
            ..Self::new(system, CognitionKind::Faulty)
        }
    }

    pub fn memory_mode(&self) -> MemoryMode {
        if self.system.memory_enabled() {
            MemoryMode::Full
        } else {
            MemoryMode::Window {
                size: DEFAULT_WINDOW_SIZE,
            }
        }
    }
}

pub fn episode_id(spec: &EpisodeSpec, run_seed: u64) -> String {
    format!("{}-r{run_seed}", spec.key)
}

/// A call the action layer ran, as seen by the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutedCall {
    pub cycle: u32,
    pub call: ToolCall,
    pub effect: Effect,
    pub ok: bool,
    pub attempts: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode_id: String,
    pub spec_key: String,
    pub system: System,
    pub cycles: u32,
    pub termination: TerminationStatus,
    pub executed: Vec<ExecutedCall>,
    pub final_hash: String,
}

impl EpisodeOutcome {
    pub fn call_sequence(&self) -> Vec<String> {
        self.executed.iter().map(|c| c.call.to_string()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeRun {
    pub outcome: EpisodeOutcome,
    pub trace: Trace,
    pub final_snapshot: MemSnapshot,
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Mem(#[from] MemError),
    #[error(transparent)]
    Action(#[from] action::ActionError),
}

fn make_cognition(spec: &EpisodeSpec, config: &AgentConfig, run_seed: u64) -> Box<dyn Cognition> {
    match config.cognition {
        CognitionKind::Oracle => Box::new(OraclePolicy::new(spec.rules.clone())),
        CognitionKind::Faulty => {
            // independent of the system so paired configurations see the same faults
            let seed = derive_seed(&["faults", &config.suite_seed.to_string(), &spec.key, &run_seed.to_string()]);
            Box::new(FaultyPolicy::new(spec.rules.clone(), config.fault_model, seed))
        }
        CognitionKind::Adapter => Box::new(AdapterPolicy::new(OracleTransport::new(spec.rules.clone()))),
    }
}

pub fn run_episode(spec: &EpisodeSpec, config: &AgentConfig, run_seed: u64) -> Result<EpisodeRun, RuntimeError> {
    let registry = ToolRegistry::with_builtins();
    let mut cognition = make_cognition(spec, config, run_seed);
    run_episode_with(spec, config, run_seed, &registry, cognition.as_mut())
}

/// Runs one episode with a caller-supplied registry and cognition policy.
pub fn run_episode_with(
    spec: &EpisodeSpec,
    config: &AgentConfig,
    run_seed: u64,
    registry: &ToolRegistry,
    cognition: &mut dyn Cognition,
) -> Result<EpisodeRun, RuntimeError> {
    let id = episode_id(spec, run_seed);
    let budget = config.budget.unwrap_or(spec.budget);
    let mut controller = Controller::new(spec.rules.clone(), registry.clone(), budget)
        .with_confidence_threshold(config.confidence_threshold);
    if !config.system.control_enabled() {
        controller = controller.disabled();
    }
    let env = ToolEnv::new(&id, spec.stream_seed(), run_seed, spec.ground_truth.clone(), spec.noise_bound)
        .with_transient_rate(config.transient_rate);
    let mut ep = Episode {
        id,
        store: EpisodeStore::new(episode_id(spec, run_seed), config.memory_mode()),
        trace: Trace::new(),
        env,
        registry,
        executed: Vec::new(),
        cycle: 0,
        epoch: 0,
    };

    ep.trace.push(
        &ep.id,
        0,
        Phase::Init,
        json!({
            "spec_key": spec.key,
            "spec_hash": spec.spec_hash(),
            "system": config.system,
            "cognition": cognition.name(),
            "memory": config.memory_mode(),
            "control": controller.enabled,
            "budget": budget,
            "run_seed": run_seed,
            "meta_directives": META_DIRECTIVES_VERSION,
        }),
    );
    ep.write(RecordKind::Goal, path("goal"), json!(spec.goal), "task")?;
    for (name, value) in spec.rules.constraints() {
        ep.write(RecordKind::Constraint, path(&format!("constraints.{name}")), value, "task")?;
    }
    ep.write(RecordKind::Termination, path("termination"), TerminationStatus::NOT_READY.to_value(), "control")?;

    let mut status = TerminationStatus::NOT_READY;
    if budget == 0 {
        status = TerminationStatus::ready(Guard::BudgetExhausted);
        ep.write(RecordKind::Termination, path("termination"), status.to_value(), "control")?;
        ep.snapshot();
    }
    while !status.ready {
        ep.cycle += 1;
        let cycle = ep.cycle;
        if config.context_changes.contains(&cycle) {
            let state = ep.store.retrieve_state();
            let (_, note) = controller.register_context_change(&state, "scheduled");
            let slot = ep.store.next_slot(RecordKind::Note);
            ep.write(RecordKind::Note, slot, note, "control")?;
        }

        let state = ep.store.retrieve_state();
        ep.trace.push(
            &ep.id,
            cycle,
            Phase::Retrieve,
            json!({"state_hash": canonical_hash(&state), "records": ep.store.record_count()}),
        );
        let proposal = cognition.propose(&state);
        ep.trace.push(&ep.id, cycle, Phase::Propose, serde_json::to_value(&proposal).expect("serializable"));
        if let Some(why) = &proposal.failure {
            let slot = ep.store.next_slot(RecordKind::FailureEvent);
            ep.write(RecordKind::FailureEvent, slot, json!({"kind": "bad_proposal", "error": why}), "cognition")?;
        }
        let decision = controller.evaluate(&proposal, &state);
        ep.decide(&decision, "proposal");
        ep.apply(&decision, &proposal, &controller)?;

        if let Some(t) = decision.terminate.filter(|_| decision.approved()) {
            status = t;
        } else {
            let now = ep.store.retrieve_state();
            status = controller.check_termination(&now, cycle, None);
            // the loop itself ends only on approved termination or budget
            if status.ready && status.guard != Guard::BudgetExhausted && cycle < budget {
                ep.write(RecordKind::Termination, path("termination"), status.to_value(), "control")?;
                ep.snapshot();
                status = TerminationStatus::NOT_READY;
                continue;
            }
        }
        ep.write(RecordKind::Termination, path("termination"), status.to_value(), "control")?;
        ep.snapshot();
    }

    let final_snapshot = ep.store.snapshot(ep.cycle);
    let outcome = EpisodeOutcome {
        episode_id: ep.id.clone(),
        spec_key: spec.key.clone(),
        system: config.system,
        cycles: ep.cycle,
        termination: status,
        executed: ep.executed.clone(),
        final_hash: final_snapshot.content_hash.clone(),
    };
    ep.trace.push(
        &ep.id,
        ep.cycle,
        Phase::Terminate,
        json!({
            "ready": status.ready,
            "guard": status.guard.as_str(),
            "cycles": ep.cycle,
            "final_hash": outcome.final_hash,
        }),
    );
    Ok(EpisodeRun {
        outcome,
        trace: ep.trace,
        final_snapshot,
    })
}

fn path(raw: &str) -> MemPath {
    MemPath::parse(raw).expect("loop paths are static or validated")
}

struct Episode<'a> {
    id: String,
    store: EpisodeStore,
    trace: Trace,
    env: ToolEnv,
    registry: &'a ToolRegistry,
    executed: Vec<ExecutedCall>,
    cycle: u32,
    epoch: u32,
}

impl Episode<'_> {
    fn write(&mut self, kind: RecordKind, at: MemPath, value: Value, source: &str) -> Result<MemPath, MemError> {
        if kind == RecordKind::Note {
            if let Some(e) = value.get("context_epoch").and_then(Value::as_u64) {
                self.epoch = self.epoch.max(e as u32);
            }
        }
        let epoch = self.epoch;
        let ts = self.store.tick(self.cycle);
        let written = self.store.write(MemRecord::new(at, kind, value, source, ts, epoch))?;
        for rec in self.store.drain_journal() {
            self.trace
                .push(&self.id, self.cycle, Phase::MemWrite, serde_json::to_value(&rec).expect("serializable"));
        }
        Ok(written)
    }

    fn snapshot(&mut self) {
        let snap = self.store.snapshot(self.cycle);
        self.trace.push(
            &self.id,
            self.cycle,
            Phase::Snapshot,
            json!({"content_hash": snap.content_hash, "records": snap.records.len()}),
        );
    }

    fn decide(&mut self, decision: &Decision, source: &str) {
        let mut payload = serde_json::to_value(decision).expect("serializable");
        payload["source"] = json!(source);
        self.trace.push(&self.id, self.cycle, Phase::Decide, payload);
    }

    fn apply(&mut self, decision: &Decision, proposal: &Proposal, controller: &Controller) -> Result<(), RuntimeError> {
        for note in &decision.notes {
            let slot = self.store.next_slot(RecordKind::Note);
            self.write(RecordKind::Note, slot, note.clone(), "control")?;
        }
        if !decision.approved() {
            return Ok(());
        }
        if let Some(j) = &decision.judgment {
            let slot = self.store.next_slot(RecordKind::Judgment);
            let value = json!({"proposition": j.proposition, "evidence": j.evidence, "confidence": proposal.confidence});
            self.write(RecordKind::Judgment, slot, value, "cognition")?;
        }
        let Some(primary) = decision.actions.first().cloned() else {
            return Ok(());
        };
        let mut pending = Vec::new();
        for call in &decision.deferred {
            let slot = self.store.next_slot(RecordKind::PendingAction);
            let value = json!({"name": call.tool, "args": call.args, "status": "pending", "after": primary});
            pending.push((self.write(RecordKind::PendingAction, slot, value.clone(), "control")?, value));
        }
        let mut primary_ok = false;
        for (i, call) in decision.actions.iter().enumerate() {
            let result = self.run_call(call)?;
            if i == 0 {
                primary_ok = result.is_ok();
            }
        }
        if !primary_ok || pending.is_empty() {
            return Ok(());
        }
        let state = self.store.retrieve_state();
        let Some(release) = controller.release(&state, &primary) else {
            return Ok(());
        };
        self.decide(&release, "release");
        if !release.approved() {
            return Ok(());
        }
        for (at, mut value) in pending {
            value["status"] = json!("released");
            self.write(RecordKind::PendingAction, at, value, "control")?;
        }
        for call in &release.actions {
            self.run_call(call)?;
        }
        Ok(())
    }

    fn run_call(&mut self, call: &ToolCall) -> Result<ToolResult, RuntimeError> {
        let spec = self.registry.spec(&call.tool);
        let result = match spec {
            Some(_) => action::execute(self.registry, call, &mut self.env)?,
            None => ToolResult {
                call: call.clone(),
                outcome: action::Outcome::Failed,
                value: Value::Null,
                attempts: 1,
                backoff_ms: Vec::new(),
                error: Some(format!("unknown tool {:?}", call.tool)),
            },
        };
        let effect = spec.as_ref().map(|s| s.effect).unwrap_or(Effect::SideEffect);
        self.trace
            .push(&self.id, self.cycle, Phase::Act, serde_json::to_value(&result).expect("serializable"));
        self.executed.push(ExecutedCall {
            cycle: self.cycle,
            call: call.clone(),
            effect,
            ok: result.is_ok(),
            attempts: result.attempts,
        });

        let status = if result.is_ok() { "executed" } else { "failed" };
        let outcome_value = if result.is_ok() {
            result.value.clone()
        } else {
            json!({"error": result.error})
        };
        let mut record = json!({
            "name": call.tool,
            "args": call.args,
            "status": status,
            "effect": effect,
            "result": outcome_value,
            "attempts": result.attempts,
        });
        if !result.backoff_ms.is_empty() {
            record["backoff_ms"] = json!(result.backoff_ms);
        }
        let slot = self.store.next_slot(RecordKind::ApprovedAction);
        self.write(RecordKind::ApprovedAction, slot, record, &call.tool)?;

        if result.is_ok() {
            if let Some(key) = spec.as_ref().and_then(|s| s.observation_key(&call.args)) {
                self.write(RecordKind::Observation, path(&format!("obs.{key}")), result.value.clone(), &call.tool)?;
            }
        } else {
            let slot = self.store.next_slot(RecordKind::FailureEvent);
            let value = json!({"kind": "tool_failure", "tool": call.tool, "args": call.args, "error": result.error, "attempts": result.attempts});
            self.write(RecordKind::FailureEvent, slot, value, &call.tool)?;
        }
        Ok(result)
    }
}
