use serde::{Deserialize, Serialize};

use super::{decision_of, result_of, Walk};
use crate::action::{ToolCall, ToolRegistry};
use crate::cognition::Citation;
use crate::control::{evidence_citation, DedupCache, DedupKey};
use crate::runtime::{Phase, Trace};
use crate::scenarios::EpisodeSpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub episode_id: String,
    pub executed: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-checks guarded execution from the trace alone: each executed call
/// needs a same-cycle approval whose every guard re-evaluates true against
/// memory as it stood at approval time, and the episode must end on a
/// satisfied termination guard.
pub fn audit(spec: &EpisodeSpec, trace: &Trace) -> AuditReport {
    let registry = ToolRegistry::with_builtins();
    let mut report = AuditReport {
        episode_id: trace.episode_id().unwrap_or_default().to_string(),
        ..Default::default()
    };
    let budget = trace
        .events
        .first()
        .and_then(|e| e.payload["budget"].as_u64())
        .unwrap_or(spec.budget as u64) as u32;
    let mut authorized: Vec<ToolCall> = Vec::new();
    let mut authorized_cycle = u32::MAX;
    let mut approved_terminate = None;
    let mut walk = Walk::new(trace);
    while let Some((index, ev, store)) = walk.step() {
        if let Some(d) = decision_of(ev) {
            if !d.approved() {
                continue;
            }
            let state = store.retrieve_state();
            let mut bad = Vec::new();
            for g in &d.guard_report {
                let recheck = match g.check.as_str() {
                    "citation" => Citation::parse(&g.subject).ok().map(|c| c.holds(&state)),
                    "assertion" => Some(evidence_citation(&g.subject).is_some_and(|c| c.holds(&state))),
                    _ => None,
                };
                if !g.passed || recheck == Some(false) {
                    bad.push(format!("{} {}", g.check, g.subject));
                }
            }
            let cache = DedupCache::from_state(&state, &registry);
            let mut keys = std::collections::BTreeSet::new();
            for call in &d.actions {
                let key = DedupKey::new(call, state.context_epoch);
                if cache.contains(&key) || !keys.insert(key) {
                    bad.push(format!("duplicate {call}"));
                }
                let valid = registry.spec(&call.tool).map(|s| s.validate_args(&call.args));
                if !matches!(valid, Some(Ok(()))) {
                    bad.push(format!("schema {call}"));
                }
            }
            if let Some(t) = d.terminate {
                if !spec.rules.goal_satisfied(&state) && t.guard.as_str() == "goal_satisfied" {
                    bad.push("goal_satisfied claimed on unsatisfied state".into());
                }
                approved_terminate = Some(t);
            }
            if !bad.is_empty() {
                report
                    .violations
                    .push(format!("event {index}: approval with failing guards: {}", bad.join("; ")));
            }
            authorized = d.actions.clone();
            authorized_cycle = ev.cycle;
        } else if let Some(r) = result_of(ev) {
            report.executed += 1;
            match authorized.iter().position(|c| *c == r.call) {
                Some(i) if authorized_cycle == ev.cycle => {
                    authorized.remove(i);
                }
                _ => report
                    .violations
                    .push(format!("event {index}: {} executed without a same-cycle approval", r.call)),
            }
        } else if ev.phase == Phase::Terminate {
            let final_goal = spec.rules.goal_satisfied(&store.retrieve_state());
            let guard = ev.payload["guard"].as_str().unwrap_or("none");
            let cycles = ev.payload["cycles"].as_u64().unwrap_or(0) as u32;
            let ok = ev.payload["ready"] == true
                && match guard {
                    "goal_satisfied" => final_goal && (approved_terminate.is_some() || cycles >= budget),
                    "confidence_threshold" => approved_terminate.is_some(),
                    "budget_exhausted" => cycles >= budget,
                    _ => false,
                };
            if !ok {
                report
                    .violations
                    .push(format!("event {index}: terminate on unsatisfied guard {guard}"));
            }
        }
    }
    if trace.events.last().map(|e| e.phase) != Some(Phase::Terminate) {
        report.violations.push("trace does not end with a terminate event".into());
    }
    report
}
