//! Deterministic episode generators for the three scenarios.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    CityCheck, EpisodeSpec, Fallback, GroundTruth, RubricCategory, RubricItem, Rules, Scenario, ScenarioError,
};
use crate::canonical::derive_seed;

pub const TEMPLATES_PER_SCENARIO: u32 = 12;
pub const SEEDS_PER_TEMPLATE: u64 = 10;
pub const DEFAULT_BUDGET: u32 = 20;
pub const DEFAULT_NOISE_BOUND: f64 = 1.0;
/// Thresholds used by the travel instances.
pub const THRESHOLD_FAMILY: [i64; 3] = [73, 77, 82];
pub const SCORE_THRESHOLDS: [i64; 4] = [50, 60, 70, 80];

const BASE_CITIES: [&str; 3] = ["San Francisco", "Miami", "New York"];
const EXTRA_CITIES: [&str; 2] = ["Chicago", "Seattle"];
const PEOPLE: [&str; 12] = [
    "Alice", "Bob", "Carol", "Dave", "Erin", "Frank", "Grace", "Heidi", "Ivan", "Judy", "Mallory", "Oscar",
];
const REQUESTERS: [&str; 4] = ["Dana", "Riley", "Sam", "Tess"];
const TOPICS: [&str; 6] = ["budget", "launch", "offsite", "roadmap", "hiring", "review"];
const GREETINGS: [&str; 3] = ["Hi", "Hello", "Dear"];
const SIGN_OFFS: [&str; 3] = ["Best", "Thanks", "Regards"];
const SUBJECTS: [&str; 6] = ["sunset", "harbor", "forest", "skyline", "meadow", "glacier"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Number of cities in Scenario A instances (3 or 5).
    pub city_count: usize,
    pub noise_bound: f64,
    pub budget: u32,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            city_count: 3,
            noise_bound: DEFAULT_NOISE_BOUND,
            budget: DEFAULT_BUDGET,
        }
    }
}

pub fn generate_episode(scenario: Scenario, template_id: u32, seed: u64) -> Result<EpisodeSpec, ScenarioError> {
    generate_episode_with(scenario, template_id, seed, &GeneratorParams::default())
}

pub fn generate_episode_with(
    scenario: Scenario,
    template_id: u32,
    seed: u64,
    params: &GeneratorParams,
) -> Result<EpisodeSpec, ScenarioError> {
    if template_id >= TEMPLATES_PER_SCENARIO {
        return Err(ScenarioError::TemplateOutOfRange(template_id));
    }
    if scenario == Scenario::A && params.city_count != 3 && params.city_count != 5 {
        return Err(ScenarioError::CityCount(params.city_count));
    }
    let city_count = if scenario == Scenario::A { params.city_count } else { 0 };
    let prefix = if city_count == 5 { "A5".to_string() } else { scenario.to_string() };
    let key = format!("{prefix}-t{template_id:02}-s{seed:02}");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        "generate",
        &prefix,
        &template_id.to_string(),
        &seed.to_string(),
    ]));
    let (goal, rules, ground_truth, rubric) = match scenario {
        Scenario::A => travel(template_id, city_count, params.noise_bound, &mut rng),
        Scenario::B => email(template_id, seed, &mut rng),
        Scenario::C => image(template_id, seed, &mut rng),
    };
    Ok(EpisodeSpec {
        key,
        scenario,
        template_id,
        seed,
        city_count,
        goal,
        rules,
        ground_truth,
        rubric,
        budget: params.budget,
        noise_bound: params.noise_bound,
    })
}

/// Every (template, seed) pair for the listed scenarios, in generation order.
pub fn generate_suite(
    scenarios: &[Scenario],
    templates: u32,
    seeds: u64,
    params: &GeneratorParams,
) -> Result<Vec<EpisodeSpec>, ScenarioError> {
    let mut out = Vec::new();
    for &s in scenarios {
        for t in 0..templates {
            for seed in 0..seeds {
                out.push(generate_episode_with(s, t, seed, params)?);
            }
        }
    }
    Ok(out)
}

fn travel_rubric() -> Vec<RubricItem> {
    vec![
        RubricItem::new("selected_city", RubricCategory::Outcome, 0.6),
        RubricItem::new("booking_confirmed", RubricCategory::SideEffect, 0.2),
        RubricItem::new("decision_recorded", RubricCategory::Format, 0.2),
    ]
}

fn cities_for(template_id: u32, city_count: usize) -> Vec<String> {
    let mut cities: Vec<String> = BASE_CITIES.iter().map(|c| c.to_string()).collect();
    if city_count == 5 {
        // keep the default city last
        let default = cities.pop().expect("three base cities");
        cities.extend(EXTRA_CITIES.iter().map(|c| c.to_string()));
        cities.push(default);
    }
    // rotate the checked cities; the default stays put
    let n = cities.len() - 1;
    cities[..n].rotate_left((template_id as usize / 2) % n);
    if template_id % 2 == 1 {
        cities[..n].reverse();
    }
    cities
}

/// Samples a temperature clear of every threshold by more than the noise
/// margin, and away from `taken` by `gap`.
fn clear_temp(rng: &mut ChaCha8Rng, thresholds: &[i64], margin: f64, taken: &[i64], gap: f64) -> i64 {
    loop {
        let t: i64 = rng.gen_range(55..=95);
        let clear = thresholds.iter().all(|&h| ((t - h) as f64).abs() > margin);
        let apart = taken.iter().all(|&o| ((t - o) as f64).abs() > gap);
        if clear && apart {
            return t;
        }
    }
}

fn travel(template_id: u32, city_count: usize, noise: f64, rng: &mut ChaCha8Rng) -> (String, Rules, GroundTruth, Vec<RubricItem>) {
    let cities = cities_for(template_id % 6, city_count);
    let default_city = cities.last().expect("non-empty").clone();
    let checked = &cities[..cities.len() - 1];
    let margin = noise + 0.5;
    let mut truth = GroundTruth::default();
    let (goal, rules) = if template_id < 6 {
        let checks: Vec<CityCheck> = checked
            .iter()
            .enumerate()
            .map(|(i, c)| CityCheck {
                city: c.clone(),
                threshold_f: THRESHOLD_FAMILY[(i + template_id as usize) % THRESHOLD_FAMILY.len()],
            })
            .collect();
        let thresholds: Vec<i64> = checks.iter().map(|c| c.threshold_f).collect();
        for c in &cities {
            truth.temps_f.insert(c.clone(), clear_temp(rng, &thresholds, margin, &[], 0.0));
        }
        let mut clauses: Vec<String> = checks
            .iter()
            .map(|c| format!("if {} is above {}°F select {}", c.city, c.threshold_f, c.city))
            .collect();
        clauses.push(format!("select {default_city}"));
        let goal = format!("{}. Book a flight to the selected city.", clauses.join(", otherwise "));
        (goal, Rules::Chain { checks, default_city })
    } else {
        let threshold_f = THRESHOLD_FAMILY[template_id as usize % THRESHOLD_FAMILY.len()];
        let mut taken = Vec::new();
        for c in &cities {
            let t = clear_temp(rng, &[threshold_f], margin, &taken, 2.0 * noise + 1.0);
            taken.push(t);
            truth.temps_f.insert(c.clone(), t);
        }
        let goal = format!(
            "Check {}. Book a flight to the warmest one above {threshold_f}°F, otherwise to {default_city}.",
            cities.join(", ")
        );
        (
            goal,
            Rules::WarmestAbove {
                cities: cities.clone(),
                threshold_f,
                default_city,
            },
        )
    };
    (goal, rules, truth, travel_rubric())
}

/// Position of `seed` inside its block of ten under a per-template shuffle;
/// the lower half of each block takes the positive branch.
fn balanced_branch(label: &str, template_id: u32, seed: u64) -> bool {
    let block = seed / SEEDS_PER_TEMPLATE;
    let mut order: Vec<u64> = (0..SEEDS_PER_TEMPLATE).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[label, &template_id.to_string(), &block.to_string()]));
    order.shuffle(&mut rng);
    let pos = order.iter().position(|&s| s == seed % SEEDS_PER_TEMPLATE).expect("seed in block");
    pos < (SEEDS_PER_TEMPLATE / 2) as usize
}

fn email(template_id: u32, seed: u64, rng: &mut ChaCha8Rng) -> (String, Rules, GroundTruth, Vec<RubricItem>) {
    let t = template_id as usize;
    let recipient = PEOPLE[t].to_string();
    let requester = REQUESTERS[t % REQUESTERS.len()].to_string();
    let topic = TOPICS[t % TOPICS.len()].to_string();
    let greeting = GREETINGS[t % GREETINGS.len()].to_string();
    let sign_off = SIGN_OFFS[(t / GREETINGS.len()) % SIGN_OFFS.len()].to_string();
    let mut truth = GroundTruth::default();
    for (i, p) in PEOPLE.iter().enumerate() {
        if i != t && rng.gen_bool(0.5) {
            truth.contacts.insert(p.to_string(), format!("{}@example.org", p.to_lowercase()));
        }
    }
    if balanced_branch("email-presence", template_id, seed) {
        truth
            .contacts
            .insert(recipient.clone(), format!("{}@example.org", recipient.to_lowercase()));
    }
    let goal = format!(
        "Email {recipient} about the {topic}. Open with \"{greeting}\" and close with \"{sign_off}\". \
         Send only if {recipient} is in the contact store; otherwise tell {requester} it was not sent."
    );
    let rubric = vec![
        RubricItem::new("send_or_withhold", RubricCategory::Outcome, 0.6),
        RubricItem::new("message_delivered_or_drafted", RubricCategory::SideEffect, 0.2),
        RubricItem::new("greeting", RubricCategory::Format, 0.2 / 3.0),
        RubricItem::new("topic", RubricCategory::Format, 0.2 / 3.0),
        RubricItem::new("sign_off", RubricCategory::Format, 0.2 / 3.0),
    ];
    (
        goal,
        Rules::Email {
            recipient,
            requester,
            topic,
            greeting,
            sign_off,
        },
        truth,
        rubric,
    )
}

fn image(template_id: u32, seed: u64, rng: &mut ChaCha8Rng) -> (String, Rules, GroundTruth, Vec<RubricItem>) {
    let t = template_id as usize;
    let subject = SUBJECTS[t % SUBJECTS.len()].to_string();
    let score_input = format!("input_{t:02}");
    let threshold = SCORE_THRESHOLDS[t % SCORE_THRESHOLDS.len()];
    let holds = balanced_branch("score-gate", template_id, seed);
    let score = if holds {
        threshold + rng.gen_range(1..=20)
    } else {
        threshold - rng.gen_range(0..=20)
    };
    let parts = rng.gen_range(3..=5);
    let mut data = Vec::with_capacity(parts);
    let mut rest = score;
    for _ in 0..parts - 1 {
        let v = rng.gen_range(0..=rest.max(0) / 2);
        data.push(v);
        rest -= v;
    }
    data.push(rest);
    let mut truth = GroundTruth::default();
    truth.score_inputs.insert(score_input.clone(), data);
    let fallback = if t.is_multiple_of(2) {
        Fallback::Note {
            requester: REQUESTERS[t % REQUESTERS.len()].to_string(),
        }
    } else {
        Fallback::Exit
    };
    let otherwise = match &fallback {
        Fallback::Note { requester } => format!("otherwise send {requester} a short note instead"),
        Fallback::Exit => "otherwise finish without generating anything".to_string(),
    };
    let goal = format!("Generate an image of a {subject} only if the score of {score_input} is above {threshold}; {otherwise}.");
    let rubric = vec![
        RubricItem::new("gate_respected", RubricCategory::Outcome, 0.6),
        RubricItem::new("required_output_present", RubricCategory::SideEffect, 0.2),
        RubricItem::new("no_premature_generation", RubricCategory::Format, 0.2),
    ];
    (
        goal,
        Rules::ImageGate {
            subject,
            score_input,
            threshold,
            fallback,
        },
        truth,
        rubric,
    )
}

fn golden(key: &str, goal: &str, rules: Rules, temps: &[(&str, i64)]) -> EpisodeSpec {
    let mut truth = GroundTruth::default();
    for (c, t) in temps {
        truth.temps_f.insert(c.to_string(), *t);
    }
    EpisodeSpec {
        key: key.to_string(),
        scenario: Scenario::A,
        template_id: 0,
        seed: 0,
        city_count: temps.len(),
        goal: goal.to_string(),
        rules,
        ground_truth: truth,
        rubric: travel_rubric(),
        budget: DEFAULT_BUDGET,
        noise_bound: 0.0,
    }
}

/// The two-city travel walkthrough: San Francisco 68°F, Miami 82°F, hot at 77°F.
pub fn walkthrough_episode() -> EpisodeSpec {
    golden(
        "golden-walkthrough",
        "Check San Francisco and Miami. If both are hot (77°F or more), book a flight to Miami. \
         If only one is hot, go there. If neither is hot, send a note saying that I will stay home. \
         Otherwise, draw the weather for the warmer city.",
        Rules::HotPair {
            cities: vec!["San Francisco".into(), "Miami".into()],
            threshold_f: 77,
            both_city: "Miami".into(),
            requester: "Dana".into(),
        },
        &[("San Francisco", 68), ("Miami", 82)],
    )
}

fn chain(checks: &[(&str, i64)], default_city: &str) -> Rules {
    Rules::Chain {
        checks: checks
            .iter()
            .map(|(c, t)| CityCheck {
                city: c.to_string(),
                threshold_f: *t,
            })
            .collect(),
        default_city: default_city.to_string(),
    }
}

/// San Francisco above 77°F, else Miami above 82°F, else New York; the tool
/// reports 74°F and 84°F.
pub fn episode_a_golden() -> EpisodeSpec {
    golden(
        "golden-episode-a",
        "If San Francisco is above 77°F select San Francisco, otherwise if Miami is above 82°F select Miami, \
         otherwise select New York. Book a flight to the selected city.",
        chain(&[("San Francisco", 77), ("Miami", 82)], "New York"),
        &[("San Francisco", 74), ("Miami", 84), ("New York", 70)],
    )
}

/// Miami above 82°F, else San Francisco above 77°F, else New York; the tool
/// reports 81°F and 78°F.
pub fn episode_b_golden() -> EpisodeSpec {
    golden(
        "golden-episode-b",
        "If Miami is above 82°F select Miami, otherwise if San Francisco is above 77°F select San Francisco, \
         otherwise select New York. Book a flight to the selected city.",
        chain(&[("Miami", 82), ("San Francisco", 77)], "New York"),
        &[("Miami", 81), ("San Francisco", 78), ("New York", 70)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{oracle_outcome, Resolution};

    #[test]
    fn template_zero_has_the_published_shape() {
        let spec = generate_episode(Scenario::A, 0, 0).unwrap();
        match &spec.rules {
            Rules::Chain { checks, default_city } => {
                let got: Vec<(&str, i64)> = checks.iter().map(|c| (c.city.as_str(), c.threshold_f)).collect();
                assert_eq!(got, vec![("San Francisco", 73), ("Miami", 77)]);
                assert_eq!(default_city, "New York");
            }
            other => panic!("unexpected rules {other:?}"),
        }
    }

    #[test]
    fn out_of_range_template_is_rejected() {
        assert_eq!(
            generate_episode(Scenario::B, 12, 0),
            Err(ScenarioError::TemplateOutOfRange(12))
        );
    }

    #[test]
    fn generation_is_byte_stable() {
        for s in Scenario::ALL {
            let a = generate_episode(s, 7, 3).unwrap().to_canonical_bytes();
            let b = generate_episode(s, 7, 3).unwrap().to_canonical_bytes();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn margin_guarantee_holds_for_all_travel_specs() {
        for city_count in [3, 5] {
            let params = GeneratorParams {
                city_count,
                ..Default::default()
            };
            for spec in generate_suite(&[Scenario::A], 12, 10, &params).unwrap() {
                let th = spec.rules.thresholds();
                for (c, t) in &spec.ground_truth.temps_f {
                    for h in &th {
                        assert!(((t - h) as f64).abs() > spec.noise_bound, "{} {c} {t} vs {h}", spec.key);
                    }
                }
                assert_eq!(spec.ground_truth.temps_f.len(), city_count);
            }
        }
    }

    #[test]
    fn email_and_image_branches_are_balanced() {
        for t in 0..12 {
            let sends = (0..10)
                .filter(|&s| {
                    let spec = generate_episode(Scenario::B, t, s).unwrap();
                    matches!(oracle_outcome(&spec).resolution, Resolution::Send { .. })
                })
                .count();
            assert_eq!(sends, 5, "template {t}");
            let gens = (0..10)
                .filter(|&s| {
                    let spec = generate_episode(Scenario::C, t, s).unwrap();
                    matches!(oracle_outcome(&spec).resolution, Resolution::Generate { .. })
                })
                .count();
            assert_eq!(gens, 5, "template {t}");
        }
    }

    #[test]
    fn absent_recipient_requires_a_note_and_no_send() {
        let spec = (0..10)
            .map(|s| generate_episode(Scenario::B, 2, s).unwrap())
            .find(|s| match &s.rules {
                Rules::Email { recipient, .. } => !s.ground_truth.contacts.contains_key(recipient),
                _ => false,
            })
            .unwrap();
        let out = oracle_outcome(&spec);
        assert!(out.required.iter().all(|e| e.tool != "send_email"));
        assert!(out.required.iter().any(|e| e.tool == "draft_note"));
    }

    #[test]
    fn golden_outcomes() {
        assert_eq!(
            oracle_outcome(&episode_a_golden()).resolution,
            Resolution::Book { city: "Miami".into() }
        );
        assert_eq!(
            oracle_outcome(&episode_b_golden()).resolution,
            Resolution::Book {
                city: "San Francisco".into()
            }
        );
        assert_eq!(
            oracle_outcome(&walkthrough_episode()).resolution,
            Resolution::Book { city: "Miami".into() }
        );
    }
}
