//! Brute-force outcome oracle: evaluates the rule list directly on the
//! hidden ground truth, with no reference to memory, tools or the loop.

use serde::{Deserialize, Serialize};

use super::{EpisodeSpec, Fallback, Rules};

/// A side effect identified by tool and its first argument.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Effect {
    pub tool: String,
    pub subject: String,
}

impl Effect {
    pub fn new(tool: &str, subject: &str) -> Self {
        Self {
            tool: tool.to_string(),
            subject: subject.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resolution {
    Book { city: String },
    StayHome,
    Send { recipient: String },
    Withhold,
    Generate { subject: String },
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    pub resolution: Resolution,
    /// Side effects that must complete.
    pub required: Vec<Effect>,
    /// Side effects that may complete without harming success.
    pub optional: Vec<Effect>,
    /// Memory paths a faithful decision has to rest on.
    pub evidence: Vec<String>,
}

fn temp_path(city: &str) -> String {
    format!("obs.{city}.temp_f")
}

pub fn oracle_outcome(spec: &EpisodeSpec) -> ExpectedOutcome {
    let temps = &spec.ground_truth.temps_f;
    let temp = |c: &str| *temps.get(c).unwrap_or(&i64::MIN);
    let book = |city: &str, evidence: Vec<String>| ExpectedOutcome {
        resolution: Resolution::Book { city: city.to_string() },
        required: vec![Effect::new("book_flight", city)],
        optional: Vec::new(),
        evidence,
    };
    match &spec.rules {
        Rules::Chain { checks, default_city } => {
            let mut evidence = Vec::new();
            for check in checks {
                evidence.push(temp_path(&check.city));
                if temp(&check.city) > check.threshold_f {
                    return book(&check.city, evidence);
                }
            }
            book(default_city, evidence)
        }
        Rules::WarmestAbove { cities, threshold_f, default_city } => {
            let evidence = cities.iter().map(|c| temp_path(c)).collect();
            let best = cities
                .iter()
                .filter(|c| temp(c) > *threshold_f)
                .max_by_key(|c| temp(c));
            book(best.unwrap_or(default_city), evidence)
        }
        Rules::HotPair { cities, threshold_f, both_city, requester } => {
            let evidence: Vec<String> = cities.iter().map(|c| temp_path(c)).collect();
            let hot: Vec<&String> = cities.iter().filter(|c| temp(c) >= *threshold_f).collect();
            let chosen = match hot.len() {
                0 => None,
                1 => Some(hot[0].clone()),
                _ => Some(both_city.clone()),
            };
            match chosen {
                Some(city) => {
                    let warmer = cities.iter().max_by_key(|c| temp(c)).expect("two cities");
                    let mut out = book(&city, evidence);
                    out.optional.push(Effect::new("draw_weather", warmer));
                    out
                }
                None => ExpectedOutcome {
                    resolution: Resolution::StayHome,
                    required: vec![Effect::new("draft_note", requester)],
                    optional: Vec::new(),
                    evidence,
                },
            }
        }
        Rules::Email { recipient, requester, .. } => {
            let evidence = vec![format!("obs.contact.{recipient}.found")];
            if spec.ground_truth.contacts.contains_key(recipient) {
                ExpectedOutcome {
                    resolution: Resolution::Send { recipient: recipient.clone() },
                    required: vec![Effect::new("send_email", recipient)],
                    optional: Vec::new(),
                    evidence,
                }
            } else {
                ExpectedOutcome {
                    resolution: Resolution::Withhold,
                    required: vec![Effect::new("draft_note", requester)],
                    optional: Vec::new(),
                    evidence,
                }
            }
        }
        Rules::ImageGate { subject, score_input, threshold, fallback } => {
            let evidence = vec![format!("obs.score.{score_input}.score")];
            let score: i64 = spec
                .ground_truth
                .score_inputs
                .get(score_input)
                .map(|v| v.iter().sum())
                .unwrap_or(i64::MIN);
            if score > *threshold {
                ExpectedOutcome {
                    resolution: Resolution::Generate { subject: subject.clone() },
                    required: vec![Effect::new("generate_image", subject)],
                    optional: Vec::new(),
                    evidence,
                }
            } else {
                ExpectedOutcome {
                    resolution: Resolution::Fallback,
                    required: match fallback {
                        Fallback::Note { requester } => vec![Effect::new("draft_note", requester)],
                        Fallback::Exit => Vec::new(),
                    },
                    optional: Vec::new(),
                    evidence,
                }
            }
        }
    }
}
