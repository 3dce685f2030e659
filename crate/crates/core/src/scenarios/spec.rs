use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical::{canonical_bytes, canonical_hash};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Conditional travel planning over temperature thresholds.
    A,
    /// Email drafting with a send gated on a contact lookup.
    B,
    /// Image generation gated on a numeric score.
    C,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::A, Scenario::B, Scenario::C];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            "C" | "c" => Ok(Scenario::C),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

/// Hidden environment values the mock tools answer from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub temps_f: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub contacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub score_inputs: BTreeMap<String, Vec<i64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityCheck {
    pub city: String,
    pub threshold_f: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fallback {
    /// Draft a short note to the requester instead of generating.
    Note { requester: String },
    /// Finish without producing any output.
    Exit,
}

/// Instruction of an episode in executable form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Rules {
    /// Ordered checks "if city above threshold select it", stopping at the
    /// first hit, else the default city. Selection is booked.
    Chain {
        checks: Vec<CityCheck>,
        default_city: String,
    },
    /// Check every city and book the warmest one above the threshold, else
    /// the default city.
    WarmestAbove {
        cities: Vec<String>,
        threshold_f: i64,
        default_city: String,
    },
    /// Two-city travel task: both hot books `both_city`, one hot books that
    /// one, neither drafts a stay-home note. Booking is followed by an
    /// optional weather drawing of the warmer city.
    HotPair {
        cities: Vec<String>,
        threshold_f: i64,
        both_city: String,
        requester: String,
    },
    Email {
        recipient: String,
        requester: String,
        topic: String,
        greeting: String,
        sign_off: String,
    },
    ImageGate {
        subject: String,
        score_input: String,
        threshold: i64,
        fallback: Fallback,
    },
}

impl Rules {
    /// Every temperature threshold mentioned by the rules.
    pub fn thresholds(&self) -> Vec<i64> {
        match self {
            Rules::Chain { checks, .. } => checks.iter().map(|c| c.threshold_f).collect(),
            Rules::WarmestAbove { threshold_f, .. } | Rules::HotPair { threshold_f, .. } => {
                vec![*threshold_f]
            }
            _ => Vec::new(),
        }
    }

    pub fn tools(&self) -> Vec<&'static str> {
        match self {
            Rules::Chain { .. } | Rules::WarmestAbove { .. } => vec!["get_weather", "book_flight"],
            Rules::HotPair { .. } => vec!["get_weather", "book_flight", "draw_weather", "draft_note"],
            Rules::Email { .. } => vec!["lookup_contact", "send_email", "draft_note"],
            Rules::ImageGate { fallback, .. } => match fallback {
                Fallback::Note { .. } => vec!["compute_score", "generate_image", "draft_note"],
                Fallback::Exit => vec!["compute_score", "generate_image"],
            },
        }
    }

    /// Constraint records written into memory at episode start.
    pub fn constraints(&self) -> Vec<(String, Value)> {
        match self {
            Rules::Chain { checks, default_city } => {
                let mut out: Vec<(String, Value)> = checks
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (format!("check_{i}"), json!({"city": c.city, "threshold_f": c.threshold_f})))
                    .collect();
                out.push(("default_city".into(), json!(default_city)));
                out
            }
            Rules::WarmestAbove { cities, threshold_f, default_city } => vec![
                ("threshold_hot_f".into(), json!(threshold_f)),
                ("cities".into(), json!(cities)),
                ("default_city".into(), json!(default_city)),
            ],
            Rules::HotPair { threshold_f, .. } => vec![("threshold_hot_f".into(), json!(threshold_f))],
            Rules::Email { recipient, requester, topic, .. } => vec![
                ("recipient".into(), json!(recipient)),
                ("requester".into(), json!(requester)),
                ("topic".into(), json!(topic)),
                ("checklist".into(), json!(["greeting", "topic", "sign_off"])),
            ],
            Rules::ImageGate { subject, score_input, threshold, fallback } => vec![
                ("subject".into(), json!(subject)),
                ("score_input".into(), json!(score_input)),
                ("threshold".into(), json!(threshold)),
                ("fallback".into(), serde_json::to_value(fallback).expect("serializable")),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricCategory {
    Outcome,
    SideEffect,
    Format,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RubricItem {
    pub id: String,
    pub category: RubricCategory,
    pub weight: f64,
}

impl RubricItem {
    pub fn new(id: &str, category: RubricCategory, weight: f64) -> Self {
        Self {
            id: id.to_string(),
            category,
            weight,
        }
    }
}

/// A generated task instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub key: String,
    pub scenario: Scenario,
    pub template_id: u32,
    pub seed: u64,
    pub city_count: usize,
    pub goal: String,
    pub rules: Rules,
    pub ground_truth: GroundTruth,
    pub rubric: Vec<RubricItem>,
    pub budget: u32,
    pub noise_bound: f64,
}

impl EpisodeSpec {
    pub fn spec_hash(&self) -> String {
        canonical_hash(self)
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical_bytes(self)
    }

    /// Seed for per-episode streams, derived from the spec identity.
    pub fn stream_seed(&self) -> u64 {
        crate::canonical::derive_seed(&["spec", &self.key])
    }
}
