//! Incremental evaluation of episode rules over the memory view.
//!
//! Shared by the oracle cognition (what to do next) and the controller's
//! goal check (is the instruction fulfilled by what memory shows).

use serde_json::{json, Value};

use super::{Fallback, Rules};
use crate::action::ToolCall;
use crate::cognition::{Assertion, Citation, Comparator, Judgment};
use crate::mem::{ActionEntry, MemPath, StateView};

/// Next thing the rules need.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// Observations still missing; the calls are independent of each other.
    Gather(Vec<ToolCall>),
    Decide(Plan),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    /// Outcome action; `None` when the decision is to finish without output.
    pub primary: Option<ToolCall>,
    /// Optional follow-ups ordered after the primary action.
    pub followups: Vec<ToolCall>,
    pub because: Vec<Citation>,
    pub judgment: Judgment,
    pub assertions: Vec<Assertion>,
}

enum Reading {
    Known(Value),
    /// The query ran in this context epoch but memory no longer holds it.
    Lost,
    Unknown,
}

fn reading(state: &StateView, key: &str, field: &str, call: &ToolCall) -> Reading {
    if let Some(v) = state.fresh_observation(key).and_then(|o| o.fields.get(field)) {
        return Reading::Known(v.clone());
    }
    let ran = state.queries.iter().any(|q| {
        q.name == call.tool && q.args == call.args && q.status == "executed" && q.epoch == state.context_epoch
    });
    if ran {
        Reading::Lost
    } else {
        Reading::Unknown
    }
}

fn path(raw: &str) -> MemPath {
    MemPath::parse(raw).expect("rule paths are built from validated entity names")
}

fn cite(raw_path: &str, op: Comparator, literal: impl Into<Value>) -> Citation {
    Citation::new(path(raw_path), op, literal.into())
}

/// Evidence string and matching assertion for one observed fact.
struct Evidence {
    facts: Vec<String>,
}

impl Evidence {
    fn new() -> Self {
        Self { facts: Vec::new() }
    }

    fn add(&mut self, raw_path: &str, value: &Value) {
        self.facts.push(format!("{raw_path}={value}"));
    }

    fn finish(self, proposition: String, because: Vec<Citation>, primary: Option<ToolCall>, followups: Vec<ToolCall>) -> Plan {
        let assertions = self
            .facts
            .iter()
            .map(|e| Assertion {
                claim: proposition.clone(),
                evidence: e.clone(),
            })
            .collect();
        Plan {
            primary,
            followups,
            because,
            judgment: Judgment {
                proposition,
                evidence: self.facts,
            },
            assertions,
        }
    }
}

fn temp_key(city: &str) -> String {
    format!("obs.{city}.temp_f")
}

pub fn email_body(greeting: &str, recipient: &str, topic: &str, sign_off: &str, requester: &str) -> String {
    format!("{greeting} {recipient},\n\nA short note about {topic}.\n\n{sign_off},\n{requester}")
}

pub fn withhold_note(greeting: &str, requester: &str, recipient: &str, topic: &str, sign_off: &str) -> String {
    format!(
        "{greeting} {requester},\n\n{recipient} is not in the contact store, so the message about {topic} was not sent.\n\n{sign_off}"
    )
}

impl Rules {
    pub fn advance(&self, state: &StateView) -> Step {
        match self {
            Rules::Chain { checks, default_city } => {
                let mut ev = Evidence::new();
                let mut because = Vec::new();
                let mut parts = Vec::new();
                for check in checks {
                    let call = ToolCall::new("get_weather", [check.city.as_str()]);
                    let key = temp_key(&check.city);
                    match reading(state, &check.city, "temp_f", &call) {
                        Reading::Unknown => return Step::Gather(vec![call]),
                        Reading::Lost => continue,
                        Reading::Known(v) => {
                            ev.add(&key, &v);
                            let t = v.as_i64().unwrap_or(i64::MIN);
                            if t > check.threshold_f {
                                because.push(cite(&key, Comparator::Gt, check.threshold_f));
                                parts.push(format!("{} is above {}°F", check.city, check.threshold_f));
                                let prop = format!("{}; select {}", parts.join("; "), check.city);
                                return Step::Decide(ev.finish(prop, because, Some(ToolCall::new("book_flight", [check.city.as_str()])), Vec::new()));
                            }
                            because.push(cite(&key, Comparator::Le, check.threshold_f));
                            parts.push(format!("{} is not above {}°F", check.city, check.threshold_f));
                        }
                    }
                }
                if because.is_empty() {
                    because.push(Citation::exists(path("goal")));
                }
                parts.push(format!("default to {default_city}"));
                Step::Decide(ev.finish(parts.join("; "), because, Some(ToolCall::new("book_flight", [default_city.as_str()])), Vec::new()))
            }
            Rules::WarmestAbove { cities, threshold_f, default_city } => {
                let mut missing = Vec::new();
                let mut known: Vec<(&String, i64)> = Vec::new();
                let mut ev = Evidence::new();
                for city in cities {
                    let call = ToolCall::new("get_weather", [city.as_str()]);
                    match reading(state, city, "temp_f", &call) {
                        Reading::Unknown => missing.push(call),
                        Reading::Lost => {}
                        Reading::Known(v) => {
                            ev.add(&temp_key(city), &v);
                            known.push((city, v.as_i64().unwrap_or(i64::MIN)));
                        }
                    }
                }
                if !missing.is_empty() {
                    return Step::Gather(missing);
                }
                let best = known
                    .iter()
                    .filter(|(_, t)| *t > *threshold_f)
                    .max_by_key(|(_, t)| *t)
                    .cloned();
                let mut because = Vec::new();
                let (choice, prop) = match best {
                    Some((city, t)) => {
                        because.push(cite(&temp_key(city), Comparator::Gt, *threshold_f));
                        for (other, _) in known.iter().filter(|(c, _)| *c != city) {
                            because.push(cite(&temp_key(other), Comparator::Lt, t));
                        }
                        (city.clone(), format!("{city} is the warmest city above {threshold_f}°F"))
                    }
                    None => {
                        for (c, _) in &known {
                            because.push(cite(&temp_key(c), Comparator::Le, *threshold_f));
                        }
                        if because.is_empty() {
                            because.push(Citation::exists(path("goal")));
                        }
                        (default_city.clone(), format!("No city is above {threshold_f}°F; default to {default_city}"))
                    }
                };
                Step::Decide(ev.finish(prop, because, Some(ToolCall::new("book_flight", [choice.as_str()])), Vec::new()))
            }
            Rules::HotPair { cities, threshold_f, both_city, requester } => {
                let mut missing = Vec::new();
                let mut known: Vec<(&String, i64)> = Vec::new();
                let mut ev = Evidence::new();
                for city in cities {
                    let call = ToolCall::new("get_weather", [city.as_str()]);
                    match reading(state, city, "temp_f", &call) {
                        Reading::Unknown => missing.push(call),
                        Reading::Lost => {}
                        Reading::Known(v) => {
                            ev.add(&temp_key(city), &v);
                            known.push((city, v.as_i64().unwrap_or(i64::MIN)));
                        }
                    }
                }
                if !missing.is_empty() {
                    return Step::Gather(missing);
                }
                let hot: Vec<&String> = known.iter().filter(|(_, t)| *t >= *threshold_f).map(|(c, _)| *c).collect();
                let mut because: Vec<Citation> = known
                    .iter()
                    .map(|(c, t)| {
                        let op = if *t >= *threshold_f { Comparator::Ge } else { Comparator::Lt };
                        cite(&temp_key(c), op, *threshold_f)
                    })
                    .collect();
                // cite the deciding (hot) facts first
                because.sort_by_key(|c| c.op != Comparator::Ge);
                if because.is_empty() {
                    because.push(Citation::exists(path("goal")));
                }
                let (chosen, prop) = match hot.len() {
                    0 => (None, "Neither city is hot".to_string()),
                    1 => (Some(hot[0].clone()), format!("Only {} is hot", hot[0])),
                    _ => (Some(both_city.clone()), "Both cities are hot".to_string()),
                };
                match chosen {
                    Some(city) => {
                        let warmer = known.iter().max_by_key(|(_, t)| *t).map(|(c, _)| (*c).clone()).unwrap_or(city.clone());
                        Step::Decide(ev.finish(
                            prop,
                            because,
                            Some(ToolCall::new("book_flight", [city.as_str()])),
                            vec![ToolCall::new("draw_weather", [warmer.as_str()])],
                        ))
                    }
                    None => {
                        let note = format!("Neither city is above {threshold_f}°F; staying home.");
                        Step::Decide(ev.finish(prop, because, Some(ToolCall::new("draft_note", [requester.as_str(), note.as_str()])), Vec::new()))
                    }
                }
            }
            Rules::Email { recipient, requester, topic, greeting, sign_off } => {
                let call = ToolCall::new("lookup_contact", [recipient.as_str()]);
                let key = format!("obs.contact.{recipient}.found");
                let found = match reading(state, &format!("contact.{recipient}"), "found", &call) {
                    Reading::Unknown => return Step::Gather(vec![call]),
                    Reading::Lost => false,
                    Reading::Known(v) => v.as_bool().unwrap_or(false),
                };
                let mut ev = Evidence::new();
                ev.add(&key, &json!(found));
                let because = vec![cite(&key, Comparator::Eq, found)];
                if found {
                    let body = email_body(greeting, recipient, topic, sign_off, requester);
                    let prop = format!("{recipient} is in the contact store; the draft passes the checklist (greeting, topic, sign-off)");
                    Step::Decide(ev.finish(prop, because, Some(ToolCall::new("send_email", [recipient.as_str(), body.as_str()])), Vec::new()))
                } else {
                    let body = withhold_note(greeting, requester, recipient, topic, sign_off);
                    let prop = format!("{recipient} is not in the contact store; withhold the email and notify {requester}");
                    Step::Decide(ev.finish(prop, because, Some(ToolCall::new("draft_note", [requester.as_str(), body.as_str()])), Vec::new()))
                }
            }
            Rules::ImageGate { subject, score_input, threshold, fallback } => {
                let call = ToolCall::new("compute_score", [score_input.as_str()]);
                let key = format!("obs.score.{score_input}.score");
                let score = match reading(state, &format!("score.{score_input}"), "score", &call) {
                    Reading::Unknown => return Step::Gather(vec![call]),
                    Reading::Lost => None,
                    Reading::Known(v) => v.as_i64(),
                };
                let mut ev = Evidence::new();
                match score {
                    Some(s) if s > *threshold => {
                        ev.add(&key, &json!(s));
                        let prop = format!("Score {s} is above {threshold}; generate the image");
                        Step::Decide(ev.finish(prop, vec![cite(&key, Comparator::Gt, *threshold)], Some(ToolCall::new("generate_image", [subject.as_str()])), Vec::new()))
                    }
                    other => {
                        let because = match other {
                            Some(s) => {
                                ev.add(&key, &json!(s));
                                vec![cite(&key, Comparator::Le, *threshold)]
                            }
                            None => vec![Citation::exists(path("goal"))],
                        };
                        let prop = format!("Score does not exceed {threshold}; no image");
                        let primary = match fallback {
                            Fallback::Note { requester } => {
                                let body = format!("The score for {subject} did not exceed {threshold}; no image was generated.");
                                Some(ToolCall::new("draft_note", [requester.as_str(), body.as_str()]))
                            }
                            Fallback::Exit => None,
                        };
                        Step::Decide(ev.finish(prop, because, primary, Vec::new()))
                    }
                }
            }
        }
    }

    /// True when memory shows the instruction fulfilled: the decided outcome
    /// action and its follow-ups executed and nothing is left pending.
    pub fn goal_satisfied(&self, state: &StateView) -> bool {
        match self.advance(state) {
            Step::Gather(_) => false,
            Step::Decide(plan) => plan_satisfied(&plan, state) && state.pending.is_empty(),
        }
    }
}

pub fn executed<'a>(state: &'a StateView, call: &ToolCall) -> Option<&'a ActionEntry> {
    state
        .approved_actions
        .iter()
        .chain(&state.queries)
        .find(|a| a.status == "executed" && a.name == call.tool && a.args == call.args)
}

pub fn plan_satisfied(plan: &Plan, state: &StateView) -> bool {
    plan.primary.iter().chain(&plan.followups).all(|c| executed(state, c).is_some())
}
