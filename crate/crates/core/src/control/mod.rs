//! Control: evaluates proposals against memory before anything executes.
//!
//! Approval requires every cited precondition to hold, every attached
//! assertion to be backed by a memory fact and no call to repeat an earlier
//! one within the current context epoch.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::action::{Effect, ToolCall, ToolRegistry};
use crate::cognition::{Citation, Judgment, Proposal};
use crate::mem::StateView;
use crate::scenarios::Rules;

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    Defer,
    Query,
    RejectDuplicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    GoalSatisfied,
    ConfidenceThreshold,
    BudgetExhausted,
    /// Termination accepted without checks because control is disabled.
    Unchecked,
    None,
}

impl Guard {
    pub fn as_str(self) -> &'static str {
        match self {
            Guard::GoalSatisfied => "goal_satisfied",
            Guard::ConfidenceThreshold => "confidence_threshold",
            Guard::BudgetExhausted => "budget_exhausted",
            Guard::Unchecked => "unchecked",
            Guard::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminationStatus {
    pub ready: bool,
    pub guard: Guard,
}

impl TerminationStatus {
    pub const NOT_READY: TerminationStatus = TerminationStatus {
        ready: false,
        guard: Guard::None,
    };

    pub fn ready(guard: Guard) -> Self {
        Self { ready: true, guard }
    }

    pub fn to_value(self) -> Value {
        json!({"ready": self.ready, "guard": self.guard.as_str()})
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DedupKey {
    pub tool: String,
    pub args: String,
    pub context_epoch: u32,
}

impl DedupKey {
    pub fn new(call: &ToolCall, context_epoch: u32) -> Self {
        Self {
            tool: call.tool.clone(),
            args: call.canonical_args(),
            context_epoch,
        }
    }
}

/// Calls already satisfied in the current epoch, as recorded in memory.
///
/// A query counts while its observation is still held; a side effect counts
/// once it has executed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DedupCache {
    keys: BTreeSet<DedupKey>,
}

impl DedupCache {
    pub fn from_state(state: &StateView, registry: &ToolRegistry) -> Self {
        let mut keys = BTreeSet::new();
        for a in state.executed_calls() {
            if a.status != "executed" || a.epoch != state.context_epoch {
                continue;
            }
            let call = ToolCall::new_raw(&a.name, a.args.clone());
            let held = match registry.spec(&a.name) {
                Some(spec) if spec.effect == Effect::Query => spec
                    .observation_key(&a.args)
                    .is_some_and(|k| state.fresh_observation(&k).is_some()),
                _ => true,
            };
            if held {
                keys.insert(DedupKey::new(&call, state.context_epoch));
            }
        }
        Self { keys }
    }

    pub fn contains(&self, key: &DedupKey) -> bool {
        self.keys.contains(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// One evaluated precondition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardCheck {
    /// `schema`, `citation`, `assertion`, `dedup` or `termination`.
    pub check: String,
    pub subject: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<Value>,
}

impl GuardCheck {
    fn new(check: &str, subject: impl Into<String>, passed: bool, observed: Option<Value>) -> Self {
        Self {
            check: check.to_string(),
            subject: subject.into(),
            passed,
            observed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    /// Calls to execute now, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<ToolCall>,
    /// Follow-ups to hold as pending until the first action confirms.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deferred: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminate: Option<TerminationStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgment: Option<Judgment>,
    /// Records destined for memory on defer or query.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Value>,
    pub guard_report: Vec<GuardCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dedup_keys: Vec<DedupKey>,
}

impl Decision {
    fn empty(verdict: Verdict) -> Self {
        Self {
            verdict,
            actions: Vec::new(),
            deferred: Vec::new(),
            terminate: None,
            judgment: None,
            notes: Vec::new(),
            guard_report: Vec::new(),
            dedup_keys: Vec::new(),
        }
    }

    pub fn approved(&self) -> bool {
        self.verdict == Verdict::Approve
    }

    pub fn all_guards_passed(&self) -> bool {
        self.guard_report.iter().all(|g| g.passed)
    }
}

/// Parses an assertion's `path=value` evidence into an equality citation.
pub fn evidence_citation(evidence: &str) -> Option<Citation> {
    let c = Citation::parse(evidence).ok()?;
    (c.op == crate::cognition::Comparator::Eq).then_some(c)
}

#[derive(Clone)]
pub struct Controller {
    pub rules: Rules,
    pub registry: ToolRegistry,
    pub enabled: bool,
    pub budget: u32,
    pub confidence_threshold: f64,
}

impl Controller {
    pub fn new(rules: Rules, registry: ToolRegistry, budget: u32) -> Self {
        Self {
            rules,
            registry,
            enabled: true,
            budget,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
        }
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    pub fn with_confidence_threshold(mut self, threshold: f64) -> Self {
        self.confidence_threshold = threshold;
        self
    }

    /// Termination status of `state` after `cycles` completed cycles.
    /// `confidence` is given only when cognition proposed to terminate.
    pub fn check_termination(&self, state: &StateView, cycles: u32, confidence: Option<f64>) -> TerminationStatus {
        if self.rules.goal_satisfied(state) {
            TerminationStatus::ready(Guard::GoalSatisfied)
        } else if confidence.is_some_and(|c| c >= self.confidence_threshold) {
            TerminationStatus::ready(Guard::ConfidenceThreshold)
        } else if cycles >= self.budget {
            TerminationStatus::ready(Guard::BudgetExhausted)
        } else {
            TerminationStatus::NOT_READY
        }
    }

    /// Note recording a context change; identical calls after it are fresh.
    pub fn register_context_change(&self, state: &StateView, reason: &str) -> (u32, Value) {
        let epoch = state.context_epoch + 1;
        (epoch, json!({"kind": "context_change", "context_epoch": epoch, "reason": reason}))
    }

    fn citation_checks(proposal: &Proposal, state: &StateView, report: &mut Vec<GuardCheck>) -> bool {
        let mut parseable = true;
        for raw in &proposal.because {
            match Citation::parse(raw) {
                Ok(c) => {
                    let (ok, observed) = c.evaluate(state);
                    report.push(GuardCheck::new("citation", c.to_string(), ok, observed));
                }
                Err(_) => {
                    parseable = false;
                    report.push(GuardCheck::new("citation", raw.clone(), false, None));
                }
            }
        }
        for a in &proposal.assertions {
            let (ok, observed) = match evidence_citation(&a.evidence) {
                Some(c) => c.evaluate(state),
                None => (false, None),
            };
            report.push(GuardCheck::new("assertion", a.evidence.clone(), ok, observed));
        }
        parseable
    }

    pub fn evaluate(&self, proposal: &Proposal, state: &StateView) -> Decision {
        if let Some(why) = &proposal.failure {
            let mut d = Decision::empty(Verdict::Query);
            d.notes.push(json!({"kind": "query", "question": "restate the proposal", "reason": why}));
            return d;
        }
        if proposal.is_query() {
            let mut d = Decision::empty(Verdict::Query);
            d.notes.push(json!({"kind": "query", "question": proposal.args.first().cloned().unwrap_or(Value::Null)}));
            return d;
        }

        let mut report = Vec::new();
        let parseable = Self::citation_checks(proposal, state, &mut report);

        if proposal.is_terminate() {
            let status = self.check_termination(state, 0, Some(proposal.confidence));
            let passed = status.ready && status.guard != Guard::BudgetExhausted;
            report.push(GuardCheck::new(
                "termination",
                status.guard.as_str(),
                passed,
                Some(json!(proposal.confidence)),
            ));
            let mut d = Decision::empty(Verdict::Approve);
            d.judgment = proposal.judgment.clone();
            if !self.enabled {
                d.terminate = Some(TerminationStatus::ready(Guard::Unchecked));
            } else if !parseable {
                d.verdict = Verdict::Query;
                d.judgment = None;
                d.notes.push(json!({"kind": "query", "question": "citation could not be parsed"}));
            } else if report.iter().all(|g| g.passed) {
                d.terminate = Some(status);
            } else {
                d.verdict = Verdict::Defer;
                d.judgment = None;
                d.notes.push(json!({"kind": "defer", "proposal": "terminate", "reason": "termination guard not met"}));
            }
            d.guard_report = report;
            return d;
        }

        let primary = proposal.call().expect("not terminate or query");
        let calls: Vec<ToolCall> = std::iter::once(primary).chain(proposal.batch.iter().cloned()).collect();
        let cache = DedupCache::from_state(state, &self.registry);
        let mut schema_ok = true;
        let mut duplicate = false;
        let mut keys = Vec::new();
        let mut seen = BTreeSet::new();
        for call in calls.iter().chain(&proposal.followups) {
            let valid = self
                .registry
                .spec(&call.tool)
                .map(|s| s.validate_args(&call.args));
            let ok = matches!(valid, Some(Ok(())));
            schema_ok &= ok;
            report.push(GuardCheck::new("schema", call.to_string(), ok, None));
        }
        for call in &calls {
            let key = DedupKey::new(call, state.context_epoch);
            let fresh = !cache.contains(&key) && seen.insert(key.clone());
            duplicate |= !fresh;
            report.push(GuardCheck::new("dedup", call.to_string(), fresh, None));
            keys.push(key);
        }

        let mut d = Decision::empty(Verdict::Approve);
        let all_passed = report.iter().all(|g| g.passed);
        if self.enabled && !(schema_ok && parseable) {
            d.verdict = Verdict::Query;
            d.notes.push(json!({"kind": "query", "question": "proposal is malformed", "proposal": proposal.propose}));
        } else if self.enabled && duplicate {
            d.verdict = Verdict::RejectDuplicate;
        } else if self.enabled && !all_passed {
            d.verdict = Verdict::Defer;
            d.notes.push(json!({"kind": "defer", "proposal": proposal.propose, "reason": "preconditions not met"}));
        } else {
            d.actions = calls;
            d.deferred = proposal.followups.clone();
            d.judgment = proposal.judgment.clone();
            d.dedup_keys = keys;
        }
        d.guard_report = report;
        d
    }

    /// Approves pending follow-ups of `after` once it has executed.
    pub fn release(&self, state: &StateView, after: &ToolCall) -> Option<Decision> {
        let after_value = serde_json::to_value(after).expect("serializable");
        let ready: Vec<ToolCall> = state
            .pending
            .iter()
            .filter(|p| p.after.as_ref() == Some(&after_value))
            .map(|p| ToolCall::new_raw(&p.name, p.args.clone()))
            .collect();
        if ready.is_empty() {
            return None;
        }
        let mut report = Vec::new();
        let confirmed = crate::scenarios::executed(state, after);
        let subject = match confirmed.and_then(|a| a.path.as_ref()) {
            Some(p) => format!("{p}.status==executed"),
            None => format!("{after} executed"),
        };
        report.push(GuardCheck::new("citation", subject, confirmed.is_some(), None));
        let cache = DedupCache::from_state(state, &self.registry);
        let mut keys = Vec::new();
        for call in &ready {
            let key = DedupKey::new(call, state.context_epoch);
            report.push(GuardCheck::new("dedup", call.to_string(), !cache.contains(&key), None));
            keys.push(key);
        }
        let mut d = Decision::empty(Verdict::Approve);
        if self.enabled && !report.iter().all(|g| g.passed) {
            d.verdict = Verdict::Defer;
        } else {
            d.actions = ready;
            d.dedup_keys = keys;
        }
        d.guard_report = report;
        Some(d)
    }
}
