//! Episode scoring, trace auditing and suite aggregation.
//!
//! Every measure is computed from the trace alone (plus the episode spec for
//! the expected outcome), never from the loop's in-memory bookkeeping.

mod audit;
mod report;

pub use audit::{audit, AuditReport};
pub use report::{aggregate, bootstrap_mean_ci, paired_diff_ci, Interval, SuiteReport, SystemRow, BOOTSTRAP_RESAMPLES};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::{Effect, ToolCall, ToolRegistry, ToolResult};
use crate::cognition::{Citation, Proposal};
use crate::control::{evidence_citation, Decision, DedupKey};
use crate::mem::{EpisodeStore, MemRecord, MemoryMode, StateView};
use crate::runtime::{Phase, System, Trace, TraceEvent};
use crate::scenarios::{oracle_outcome, Effect as SideEffect, EpisodeSpec, ExpectedOutcome, Rules, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    BadProposal,
    WrongDecision,
    ToolFailure,
    PrematureTermination,
    BudgetExhausted,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 5] = [
        ErrorClass::BadProposal,
        ErrorClass::WrongDecision,
        ErrorClass::ToolFailure,
        ErrorClass::PrematureTermination,
        ErrorClass::BudgetExhausted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::BadProposal => "bad_proposal",
            ErrorClass::WrongDecision => "wrong_decision",
            ErrorClass::ToolFailure => "tool_failure",
            ErrorClass::PrematureTermination => "premature_termination",
            ErrorClass::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub episode_id: String,
    pub spec_key: String,
    pub scenario: Scenario,
    pub city_count: usize,
    pub system: System,
    pub run_seed: u64,
    pub success: bool,
    pub gfs: f64,
    pub redundant_calls: u32,
    pub memory_faithful: bool,
    pub unsupported_assertions: u32,
    pub executed_calls: u32,
    pub cycles: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorClass>,
}

/// One pass over a trace with the memory state rebuilt alongside.
pub(crate) struct Walk<'a> {
    pub events: &'a [TraceEvent],
    store: EpisodeStore,
    next: usize,
}

impl<'a> Walk<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        let mode = trace
            .events
            .first()
            .and_then(|e| serde_json::from_value::<MemoryMode>(e.payload["memory"].clone()).ok())
            .unwrap_or_default();
        let id = trace.episode_id().unwrap_or_default().to_string();
        Self {
            events: &trace.events,
            store: EpisodeStore::new(id, mode),
            next: 0,
        }
    }

    /// Yields the next event with memory as it stood just before it.
    pub fn step(&mut self) -> Option<(usize, &'a TraceEvent, &EpisodeStore)> {
        let index = self.next;
        let ev = self.events.get(index)?;
        if index > 0 {
            let prev = &self.events[index - 1];
            if prev.phase == Phase::MemWrite {
                if let Ok(rec) = serde_json::from_value::<MemRecord>(prev.payload.clone()) {
                    let _ = self.store.write(rec);
                }
            }
        }
        self.next += 1;
        Some((index, ev, &self.store))
    }
}

pub(crate) fn proposal_of(ev: &TraceEvent) -> Option<Proposal> {
    (ev.phase == Phase::Propose)
        .then(|| serde_json::from_value(ev.payload.clone()).ok())
        .flatten()
}

pub(crate) fn decision_of(ev: &TraceEvent) -> Option<Decision> {
    (ev.phase == Phase::Decide)
        .then(|| serde_json::from_value(ev.payload.clone()).ok())
        .flatten()
}

pub(crate) fn result_of(ev: &TraceEvent) -> Option<ToolResult> {
    (ev.phase == Phase::Act)
        .then(|| serde_json::from_value(ev.payload.clone()).ok())
        .flatten()
}

fn effect_of(registry: &ToolRegistry, call: &ToolCall) -> Effect {
    registry.effect(&call.tool).unwrap_or(Effect::SideEffect)
}

/// Executions that repeat an earlier successful execution with the same
/// key: tool, canonical arguments and context epoch.
pub fn redundant_calls(trace: &Trace) -> u32 {
    let mut epoch = 0u32;
    let mut seen = BTreeSet::new();
    let mut redundant = 0;
    for ev in &trace.events {
        match ev.phase {
            Phase::MemWrite => {
                if ev.payload["kind"] == "note" {
                    if let Some(e) = ev.payload["value"]["context_epoch"].as_u64() {
                        epoch = epoch.max(e as u32);
                    }
                }
            }
            Phase::Act => {
                if let Some(r) = result_of(ev).filter(ToolResult::is_ok) {
                    if !seen.insert(DedupKey::new(&r.call, epoch)) {
                        redundant += 1;
                    }
                }
            }
            _ => {}
        }
    }
    redundant
}

/// Side effects that completed, keyed by tool and first argument.
fn completed_effects(trace: &Trace, registry: &ToolRegistry) -> Vec<(SideEffect, ToolResult)> {
    trace
        .events
        .iter()
        .filter_map(result_of)
        .filter(|r| r.is_ok() && effect_of(registry, &r.call) == Effect::SideEffect)
        .map(|r| (SideEffect::new(&r.call.tool, r.call.arg_str(0).unwrap_or_default()), r))
        .collect()
}

/// Task success: the completed side effects are exactly the required ones
/// plus any subset of the optional ones.
pub fn effects_match(expected: &ExpectedOutcome, done: &BTreeSet<SideEffect>) -> bool {
    let required: BTreeSet<&SideEffect> = expected.required.iter().collect();
    let optional: BTreeSet<&SideEffect> = expected.optional.iter().collect();
    required.iter().all(|e| done.contains(*e)) && done.iter().all(|e| required.contains(e) || optional.contains(e))
}

fn rubric_satisfied(
    spec: &EpisodeSpec,
    expected: &ExpectedOutcome,
    trace: &Trace,
    effects: &[(SideEffect, ToolResult)],
) -> BTreeMap<String, bool> {
    let done: BTreeSet<SideEffect> = effects.iter().map(|(e, _)| e.clone()).collect();
    let has = |tool: &str| done.iter().any(|e| e.tool == tool);
    let required_done = expected.required.iter().all(|e| done.contains(e));
    let judged = trace
        .of_phase(Phase::MemWrite)
        .any(|e| e.payload["kind"] == "judgment");
    let mut out = BTreeMap::new();
    match &spec.rules {
        Rules::Chain { .. } | Rules::WarmestAbove { .. } | Rules::HotPair { .. } => {
            let booked: BTreeSet<&str> = done
                .iter()
                .filter(|e| e.tool == "book_flight")
                .map(|e| e.subject.as_str())
                .collect();
            let want: BTreeSet<&str> = expected
                .required
                .iter()
                .filter(|e| e.tool == "book_flight")
                .map(|e| e.subject.as_str())
                .collect();
            let confirmed = effects.iter().any(|(e, r)| {
                expected.required.contains(e)
                    && (r.value.get("confirmation").is_some() || r.value.get("artifact").is_some())
            });
            out.insert("selected_city".into(), booked == want && (want.is_empty() || !has("draft_note")));
            out.insert("booking_confirmed".into(), required_done && confirmed);
            out.insert("decision_recorded".into(), judged);
        }
        Rules::Email {
            recipient,
            topic,
            greeting,
            sign_off,
            ..
        } => {
            let present = spec.ground_truth.contacts.contains_key(recipient);
            let sent = done.iter().any(|e| e.tool == "send_email" && &e.subject == recipient);
            let drafted = has("draft_note");
            out.insert("send_or_withhold".into(), if present { sent } else { !has("send_email") && drafted });
            out.insert("message_delivered_or_drafted".into(), required_done);
            let body = effects
                .iter()
                .find(|(e, _)| expected.required.contains(e))
                .and_then(|(_, r)| r.call.arg_str(1).map(str::to_string))
                .unwrap_or_default();
            out.insert("greeting".into(), body.starts_with(greeting.as_str()));
            out.insert("topic".into(), body.contains(topic.as_str()));
            out.insert("sign_off".into(), body.contains(sign_off.as_str()));
        }
        Rules::ImageGate { score_input, .. } => {
            let should = expected.required.iter().any(|e| e.tool == "generate_image");
            out.insert("gate_respected".into(), has("generate_image") == should);
            out.insert("required_output_present".into(), required_done);
            // generation must come after the score observation
            let score_path = format!("obs.score.{score_input}");
            let mut scored = false;
            let mut premature = false;
            for ev in &trace.events {
                if ev.phase == Phase::MemWrite && ev.payload["path"] == score_path.as_str() {
                    scored = true;
                }
                if let Some(r) = result_of(ev) {
                    if r.call.tool == "generate_image" && r.is_ok() && !scored {
                        premature = true;
                    }
                }
            }
            out.insert("no_premature_generation".into(), !premature);
        }
    }
    out
}

/// Goal-fulfillment score: satisfied rubric weight over total weight.
pub fn goal_fulfillment(spec: &EpisodeSpec, satisfied: &BTreeMap<String, bool>) -> f64 {
    let total: f64 = spec.rubric.iter().map(|r| r.weight).sum();
    let got: f64 = spec
        .rubric
        .iter()
        .filter(|r| satisfied.get(&r.id).copied().unwrap_or(false))
        .map(|r| r.weight)
        .sum();
    if total == 0.0 {
        0.0
    } else {
        got / total
    }
}

/// Whether the decision rests on remembered evidence: the first approved
/// outcome proposal cites every evidence path of the expected outcome, each
/// citation holds, and each cited observation predates the decision cycle.
pub fn memory_fidelity(trace: &Trace, expected: &ExpectedOutcome, registry: &ToolRegistry) -> bool {
    let mut walk = Walk::new(trace);
    let mut last_proposal: Option<(Proposal, StateView)> = None;
    while let Some((_, ev, store)) = walk.step() {
        if let Some(p) = proposal_of(ev) {
            last_proposal = Some((p, store.retrieve_state()));
            continue;
        }
        let Some(d) = decision_of(ev) else { continue };
        if ev.payload["source"] != "proposal" || !d.approved() {
            continue;
        }
        let Some((p, state)) = last_proposal.take() else { continue };
        let outcome = p.is_terminate()
            || p.call()
                .is_some_and(|c| effect_of(registry, &c) == Effect::SideEffect);
        if !outcome {
            continue;
        }
        let citations: Vec<Citation> = p.citations().into_iter().flatten().collect();
        let covered = expected.evidence.iter().all(|path| {
            citations
                .iter()
                .any(|c| c.path.as_str() == path || c.path.as_str().starts_with(&format!("{path}.")))
        });
        let sound = citations.iter().all(|c| {
            if !c.holds(&state) {
                return false;
            }
            if c.path.prefix() != "obs" {
                return true;
            }
            state
                .lookup(&c.path)
                .is_some_and(|(_, ts)| ts.cycle < ev.cycle)
        });
        return covered && sound && !citations.is_empty();
    }
    false
}

/// Assertions carried by approved proposals whose evidence does not hold
/// in memory at proposal time.
pub fn unsupported_assertions(trace: &Trace) -> u32 {
    let mut walk = Walk::new(trace);
    let mut pending: Option<u32> = None;
    let mut total = 0;
    while let Some((_, ev, store)) = walk.step() {
        if let Some(p) = proposal_of(ev) {
            let state = store.retrieve_state();
            let bad = p
                .assertions
                .iter()
                .filter(|a| !evidence_citation(&a.evidence).is_some_and(|c| c.holds(&state)))
                .count() as u32;
            pending = Some(bad);
        } else if let Some(d) = decision_of(ev) {
            if ev.payload["source"] == "proposal" {
                if d.approved() {
                    total += pending.unwrap_or(0);
                }
                pending = None;
            }
        }
    }
    total
}

fn classify(
    trace: &Trace,
    expected: &ExpectedOutcome,
    registry: &ToolRegistry,
) -> ErrorClass {
    let allowed: BTreeSet<&SideEffect> = expected.required.iter().chain(&expected.optional).collect();
    let mut done = BTreeSet::new();
    for ev in &trace.events {
        if proposal_of(ev).is_some_and(|p| p.failure.is_some()) {
            return ErrorClass::BadProposal;
        }
        if let Some(d) = decision_of(ev) {
            let terminating = d.approved() && d.terminate.is_some();
            if terminating && !expected.required.iter().all(|e| done.contains(e)) {
                return ErrorClass::PrematureTermination;
            }
        }
        if let Some(r) = result_of(ev) {
            if effect_of(registry, &r.call) != Effect::SideEffect {
                continue;
            }
            let e = SideEffect::new(&r.call.tool, r.call.arg_str(0).unwrap_or_default());
            if !r.is_ok() {
                if allowed.contains(&e) {
                    return ErrorClass::ToolFailure;
                }
                continue;
            }
            if !allowed.contains(&e) {
                return ErrorClass::WrongDecision;
            }
            done.insert(e);
        }
    }
    let budget_end = trace
        .events
        .last()
        .is_some_and(|e| e.payload["guard"] == "budget_exhausted");
    if budget_end {
        ErrorClass::BudgetExhausted
    } else {
        ErrorClass::BadProposal
    }
}

pub fn score_episode(spec: &EpisodeSpec, trace: &Trace) -> EpisodeScore {
    let registry = ToolRegistry::with_builtins();
    let expected = oracle_outcome(spec);
    let init = trace.events.first().map(|e| &e.payload).cloned().unwrap_or(Value::Null);
    let system: System = serde_json::from_value(init["system"].clone()).unwrap_or(System::Scl);
    let effects = completed_effects(trace, &registry);
    let done: BTreeSet<SideEffect> = effects.iter().map(|(e, _)| e.clone()).collect();
    let success = effects_match(&expected, &done);
    let rubric = rubric_satisfied(spec, &expected, trace, &effects);
    let last = trace.events.last();
    EpisodeScore {
        episode_id: trace.episode_id().unwrap_or_default().to_string(),
        spec_key: spec.key.clone(),
        scenario: spec.scenario,
        city_count: spec.city_count,
        system,
        run_seed: init["run_seed"].as_u64().unwrap_or(0),
        success,
        gfs: goal_fulfillment(spec, &rubric),
        redundant_calls: redundant_calls(trace),
        memory_faithful: memory_fidelity(trace, &expected, &registry),
        unsupported_assertions: unsupported_assertions(trace),
        executed_calls: trace.of_phase(Phase::Act).count() as u32,
        cycles: last.map(|e| e.cycle).unwrap_or(0),
        error: (!success).then(|| classify(trace, &expected, &registry)),
    }
}

/// Hallucinations per 100 executed tool calls.
pub fn hallucination_rate(unsupported: u64, calls: u64) -> f64 {
    if calls == 0 {
        0.0
    } else {
        100.0 * unsupported as f64 / calls as f64
    }
}
