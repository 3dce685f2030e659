use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Assertion, Citation, Cognition, Proposal};
use crate::action::{ToolCall, ToolRegistry};
use crate::mem::{MemPath, StateView};
use crate::scenarios::{executed, Rules, Step};

/// Evidence attached by the unsupported-assertion fault; no scenario has this city.
pub const UNSUPPORTED_EVIDENCE: &str = "obs.Atlantis.temp_f=80";

const FAULTED_CONFIDENCE: f64 = 0.9;

fn cite(raw: &str) -> Citation {
    Citation::parse(raw).expect("static citation")
}

/// Deterministic rule follower: reads the view, gathers what is missing,
/// decides, and terminates once Control has flagged the goal as met.
#[derive(Clone, Debug)]
pub struct OraclePolicy {
    rules: Rules,
}

impl OraclePolicy {
    pub fn new(rules: Rules) -> Self {
        Self { rules }
    }
}

impl Cognition for OraclePolicy {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn propose(&mut self, state: &StateView) -> Proposal {
        let step = self.rules.advance(state);
        if state.termination.ready {
            let mut because = vec![cite("termination.ready==true")];
            if let Step::Decide(plan) = &step {
                because.extend(plan.because.iter().cloned());
            }
            let mut p = Proposal::terminate(because);
            if let Step::Decide(plan) = step {
                if plan.primary.is_none() && state.judgments.is_empty() {
                    p.judgment = Some(plan.judgment);
                    p.assertions = plan.assertions;
                }
            }
            return p;
        }
        match step {
            Step::Gather(mut calls) => {
                let first = calls.remove(0);
                let mut p = Proposal::action(first, vec![Citation::exists(MemPath::parse("goal").expect("valid"))]);
                p.batch = calls;
                p
            }
            Step::Decide(plan) => {
                let next = plan
                    .primary
                    .iter()
                    .chain(&plan.followups)
                    .find(|c| executed(state, c).is_none())
                    .cloned();
                match next {
                    Some(call) if Some(&call) == plan.primary.as_ref() => {
                        let mut p = Proposal::action(call, plan.because);
                        p.followups = plan.followups;
                        p.judgment = Some(plan.judgment);
                        p.assertions = plan.assertions;
                        p
                    }
                    Some(call) => {
                        let primary = plan.primary.as_ref().and_then(|c| executed(state, c));
                        let because = match primary.and_then(|a| a.path.as_ref()) {
                            Some(path) => vec![cite(&format!("{path}.status==executed"))],
                            None => plan.because,
                        };
                        Proposal::action(call, because)
                    }
                    None => {
                        // Nothing left to do but Control has not confirmed yet;
                        // terminating here cites the decision itself.
                        let mut because = vec![Citation::exists(MemPath::parse("goal").expect("valid"))];
                        because.extend(plan.because);
                        let mut p = Proposal::terminate(because);
                        if plan.primary.is_none() && state.judgments.is_empty() {
                            p.judgment = Some(plan.judgment);
                            p.assertions = plan.assertions;
                        }
                        p
                    }
                }
            }
        }
    }
}

/// Per-proposal fault probabilities for the faulty policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    pub p_redundant: f64,
    pub p_forget: f64,
    pub p_premature: f64,
    pub p_unsupported: f64,
}

impl FaultModel {
    pub const NONE: FaultModel = FaultModel {
        p_redundant: 0.0,
        p_forget: 0.0,
        p_premature: 0.0,
        p_unsupported: 0.0,
    };
}

impl Default for FaultModel {
    fn default() -> Self {
        Self {
            p_redundant: 0.3,
            p_forget: 0.2,
            p_premature: 0.1,
            p_unsupported: 0.1,
        }
    }
}

/// Oracle cognition with sampled reasoning faults layered on top.
///
/// Every proposal consumes the same number of draws whether or not a fault
/// fires, so fault streams stay aligned across configurations.
pub struct FaultyPolicy {
    inner: OraclePolicy,
    faults: FaultModel,
    registry: ToolRegistry,
    rng: ChaCha8Rng,
}

impl FaultyPolicy {
    pub fn new(rules: Rules, faults: FaultModel, seed: u64) -> Self {
        Self {
            inner: OraclePolicy::new(rules),
            faults,
            registry: ToolRegistry::with_builtins(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn visible_queries(&self, state: &StateView) -> Vec<ToolCall> {
        state
            .queries
            .iter()
            .filter(|q| q.status == "executed")
            .filter(|q| {
                self.registry
                    .spec(&q.name)
                    .and_then(|s| s.observation_key(&q.args))
                    .is_some_and(|k| state.observation(&k).is_some())
            })
            .map(|q| ToolCall::new_raw(&q.name, q.args.clone()))
            .collect()
    }
}

impl Cognition for FaultyPolicy {
    fn name(&self) -> &'static str {
        "faulty"
    }

    fn propose(&mut self, state: &StateView) -> Proposal {
        let u_premature: f64 = self.rng.gen();
        let u_redundant: f64 = self.rng.gen();
        let u_forget: f64 = self.rng.gen();
        let u_unsupported: f64 = self.rng.gen();
        let pick: usize = self.rng.gen_range(0..1 << 16);

        let mut p = self.inner.propose(state);
        let mut faulted = false;
        if u_premature < self.faults.p_premature && !p.is_terminate() {
            p = Proposal::terminate(vec![cite("termination.ready==true")]);
            faulted = true;
        } else if u_redundant < self.faults.p_redundant && !p.is_terminate() {
            let done: Vec<ToolCall> = state
                .executed_calls()
                .map(|a| ToolCall::new_raw(&a.name, a.args.clone()))
                .collect();
            if !done.is_empty() {
                let call = done[pick % done.len()].clone();
                p = Proposal::action(call, p.citations().into_iter().flatten().collect());
                faulted = true;
            }
        } else if u_forget < self.faults.p_forget && !p.is_terminate() {
            let seen = self.visible_queries(state);
            if !seen.is_empty() {
                let call = seen[pick % seen.len()].clone();
                p = Proposal::action(call, vec![Citation::exists(MemPath::parse("goal").expect("valid"))]);
                faulted = true;
            }
        }
        if u_unsupported < self.faults.p_unsupported {
            p.assertions.push(Assertion {
                claim: "Atlantis is warm enough to matter".into(),
                evidence: UNSUPPORTED_EVIDENCE.into(),
            });
            faulted = true;
        }
        if faulted {
            p.confidence = FAULTED_CONFIDENCE;
        }
        p
    }
}
