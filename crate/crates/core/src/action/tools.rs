use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::{ArgSpec, ArgType, Determinism, Effect, Tool, ToolEnv, ToolError, ToolSpec};

fn arg(name: &str, ty: ArgType) -> ArgSpec {
    ArgSpec {
        name: name.to_string(),
        ty,
    }
}

fn spec(
    name: &str,
    args: Vec<ArgSpec>,
    result: &[&str],
    determinism: Determinism,
    effect: Effect,
    observes: Option<&str>,
    failures: &[&str],
) -> ToolSpec {
    ToolSpec {
        name: name.to_string(),
        args,
        result_fields: result.iter().map(|s| s.to_string()).collect(),
        determinism,
        effect,
        observes: observes.map(str::to_string),
        failure_modes: failures.iter().map(|s| s.to_string()).collect(),
    }
}

fn text(args: &[Value], i: usize) -> &str {
    args.get(i).and_then(Value::as_str).unwrap_or_default()
}

/// Brings a raw tool payload to canonical units: temperatures become integer
/// °F (Celsius converted, fractions rounded half away from zero).
pub fn normalize_result(raw: Value) -> Value {
    let Value::Object(mut map) = raw else {
        return raw;
    };
    if let Some(c) = map.remove("temp_c") {
        if !map.contains_key("temp_f") {
            if let Some(c) = c.as_f64() {
                map.insert("temp_f".into(), json!(c * 9.0 / 5.0 + 32.0));
            }
        }
    }
    if let Some(f) = map.get("temp_f").and_then(Value::as_f64) {
        if !map["temp_f"].is_i64() {
            map.insert("temp_f".into(), json!(f.round() as i64));
        }
    }
    Value::Object(map)
}

struct GetWeather;

impl Tool for GetWeather {
    fn spec(&self) -> ToolSpec {
        spec(
            "get_weather",
            vec![arg("city", ArgType::Entity)],
            &["temp_f"],
            Determinism::SeededNoisy,
            Effect::Query,
            Some(""),
            &["unknown_city", "transient"],
        )
    }

    fn invoke(&self, args: &[Value], env: &mut ToolEnv) -> Result<Value, ToolError> {
        let city = text(args, 0);
        let truth = *env
            .truth
            .temps_f
            .get(city)
            .ok_or_else(|| ToolError::Failed(format!("unknown city {city:?}")))?;
        Ok(json!({ "temp_f": truth as f64 + env.noise() }))
    }
}

struct LookupContact;

impl Tool for LookupContact {
    fn spec(&self) -> ToolSpec {
        spec(
            "lookup_contact",
            vec![arg("name", ArgType::Entity)],
            &["found", "address"],
            Determinism::Deterministic,
            Effect::Query,
            Some("contact"),
            &["transient"],
        )
    }

    fn invoke(&self, args: &[Value], env: &mut ToolEnv) -> Result<Value, ToolError> {
        let name = text(args, 0);
        match env.truth.contacts.get(name).cloned() {
            Some(address) => {
                env.resolve(name);
                Ok(json!({"found": true, "address": address}))
            }
            None => Ok(json!({"found": false})),
        }
    }
}

struct SendEmail;

impl Tool for SendEmail {
    fn spec(&self) -> ToolSpec {
        spec(
            "send_email",
            vec![arg("recipient", ArgType::Entity), arg("body", ArgType::Text)],
            &["receipt", "recipient", "body"],
            Determinism::Deterministic,
            Effect::SideEffect,
            None,
            &["recipient_unresolved", "transient"],
        )
    }

    fn invoke(&self, args: &[Value], env: &mut ToolEnv) -> Result<Value, ToolError> {
        let recipient = text(args, 0);
        if !env.is_resolved(recipient) {
            return Err(ToolError::Failed(format!(
                "recipient {recipient:?} was not resolved in the contact store"
            )));
        }
        let receipt = env.next_artifact("send_email");
        Ok(json!({"receipt": receipt, "recipient": recipient, "body": text(args, 1)}))
    }
}

/// Tools whose only product is an opaque artifact handle.
struct ArtifactTool {
    name: &'static str,
    arg_names: [&'static str; 2],
    arity: usize,
}

impl Tool for ArtifactTool {
    fn spec(&self) -> ToolSpec {
        let args = self.arg_names[..self.arity]
            .iter()
            .enumerate()
            .map(|(i, n)| arg(n, if i == 0 { ArgType::Entity } else { ArgType::Text }))
            .collect();
        spec(
            self.name,
            args,
            &["artifact"],
            Determinism::Deterministic,
            Effect::SideEffect,
            None,
            &["transient"],
        )
    }

    fn invoke(&self, args: &[Value], env: &mut ToolEnv) -> Result<Value, ToolError> {
        let mut out = Map::new();
        out.insert("artifact".into(), json!(env.next_artifact(self.name)));
        if self.arity > 1 {
            out.insert("body".into(), json!(text(args, 1)));
        }
        Ok(Value::Object(out))
    }
}

struct BookFlight;

impl Tool for BookFlight {
    fn spec(&self) -> ToolSpec {
        spec(
            "book_flight",
            vec![arg("city", ArgType::Entity)],
            &["confirmation"],
            Determinism::Deterministic,
            Effect::SideEffect,
            None,
            &["transient"],
        )
    }

    fn invoke(&self, args: &[Value], env: &mut ToolEnv) -> Result<Value, ToolError> {
        Ok(json!({"confirmation": env.confirmation_code(text(args, 0))}))
    }
}

struct ComputeScore;

impl Tool for ComputeScore {
    fn spec(&self) -> ToolSpec {
        spec(
            "compute_score",
            vec![arg("input", ArgType::Entity)],
            &["score"],
            Determinism::Deterministic,
            Effect::Query,
            Some("score"),
            &["unknown_input", "transient"],
        )
    }

    fn invoke(&self, args: &[Value], env: &mut ToolEnv) -> Result<Value, ToolError> {
        let input = text(args, 0);
        let data = env
            .truth
            .score_inputs
            .get(input)
            .ok_or_else(|| ToolError::Failed(format!("unknown score input {input:?}")))?;
        Ok(json!({"score": data.iter().sum::<i64>()}))
    }
}

pub fn builtin_tools() -> Vec<Arc<dyn Tool>> {
    vec![
        Arc::new(GetWeather),
        Arc::new(LookupContact),
        Arc::new(SendEmail),
        Arc::new(ArtifactTool {
            name: "draft_note",
            arg_names: ["requester", "body"],
            arity: 2,
        }),
        Arc::new(BookFlight),
        Arc::new(ArtifactTool {
            name: "generate_image",
            arg_names: ["subject", ""],
            arity: 1,
        }),
        Arc::new(ComputeScore),
        Arc::new(ArtifactTool {
            name: "draw_weather",
            arg_names: ["city", ""],
            arity: 1,
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{execute, ActionError, Outcome, ToolCall, ToolRegistry};
    use crate::scenarios::GroundTruth;
    use proptest::prelude::*;

    fn env(noise: f64) -> ToolEnv {
        let mut truth = GroundTruth::default();
        truth.temps_f.insert("Miami".into(), 82);
        truth.temps_f.insert("San Francisco".into(), 68);
        truth.contacts.insert("Alice".into(), "alice@example.org".into());
        truth.score_inputs.insert("reviews".into(), vec![20, 30, 12]);
        ToolEnv::new("ep", 7, 0, truth, noise)
    }

    #[test]
    fn weather_noise_stays_within_rounded_bound() {
        let reg = ToolRegistry::with_builtins();
        let mut e = env(1.5);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..400 {
            let r = execute(&reg, &ToolCall::new("get_weather", ["Miami"]), &mut e).unwrap();
            let t = r.value["temp_f"].as_i64().unwrap();
            assert!((80..=84).contains(&t));
            // [80.5, 83.5] rounds into [81, 84]; 84 only from exactly 83.5
            assert!(t >= 81);
            seen.insert(t);
        }
        assert!(seen.contains(&81) && seen.contains(&83));
    }

    #[test]
    fn noiseless_weather_is_exact() {
        let reg = ToolRegistry::with_builtins();
        let r = execute(&reg, &ToolCall::new("get_weather", ["Miami"]), &mut env(0.0)).unwrap();
        assert_eq!(r.value, json!({"temp_f": 82}));
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn send_requires_resolved_recipient() {
        let reg = ToolRegistry::with_builtins();
        let mut e = env(0.0);
        let body = "Hello Alice";
        let r = execute(&reg, &ToolCall::new("send_email", ["Alice", body]), &mut e).unwrap();
        assert_eq!(r.outcome, Outcome::Failed);
        assert_eq!(r.attempts, 1);
        let miss = execute(&reg, &ToolCall::new("lookup_contact", ["Zed"]), &mut e).unwrap();
        assert_eq!(miss.value, json!({"found": false}));
        execute(&reg, &ToolCall::new("lookup_contact", ["Alice"]), &mut e).unwrap();
        let r = execute(&reg, &ToolCall::new("send_email", ["Alice", body]), &mut e).unwrap();
        assert!(r.is_ok());
        assert_eq!(r.value["receipt"], "send_email:ep:0");
    }

    #[test]
    fn booking_code_shape_and_determinism() {
        let reg = ToolRegistry::with_builtins();
        let a = execute(&reg, &ToolCall::new("book_flight", ["Miami"]), &mut env(0.0)).unwrap();
        let b = execute(&reg, &ToolCall::new("book_flight", ["Miami"]), &mut env(1.0)).unwrap();
        let code = a.value["confirmation"].as_str().unwrap();
        assert_eq!(code.len(), 6);
        assert!(code.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit()));
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn schema_violation_fails_without_retry() {
        let reg = ToolRegistry::with_builtins();
        let mut e = env(0.0).with_transient_rate(1.0);
        let r = execute(&reg, &ToolCall::new("get_weather", ["Mia.mi"]), &mut e).unwrap();
        assert_eq!(r.outcome, Outcome::Failed);
        assert_eq!(r.attempts, 1);
        let r = execute(&reg, &ToolCall { tool: "book_flight".into(), args: vec![] }, &mut e).unwrap();
        assert_eq!(r.outcome, Outcome::Failed);
    }

    #[test]
    fn unknown_tool_is_configuration_error() {
        let reg = ToolRegistry::with_builtins();
        assert!(matches!(
            execute(&reg, &ToolCall::new("teleport", ["Miami"]), &mut env(0.0)),
            Err(ActionError::UnknownTool(_))
        ));
    }

    #[test]
    fn transient_failures_only_change_attempts() {
        let reg = ToolRegistry::with_builtins();
        let call = ToolCall::new("book_flight", ["Miami"]);
        let clean = execute(&reg, &call, &mut env(0.0)).unwrap();
        let mut flaky = env(0.0).with_transient_rate(1.0);
        let r = execute(&reg, &call, &mut flaky).unwrap();
        assert_eq!(r.attempts, 3);
        assert_eq!(r.backoff_ms, vec![100, 200]);
        assert_eq!(r.value, clean.value);
    }

    #[test]
    fn retries_are_deterministic() {
        let reg = ToolRegistry::with_builtins();
        let call = ToolCall::new("get_weather", ["Miami"]);
        let run = || {
            let mut e = env(1.0).with_transient_rate(0.5);
            (0..20).map(|_| execute(&reg, &call, &mut e).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut reg = ToolRegistry::with_builtins();
        assert!(matches!(reg.register(Arc::new(GetWeather)), Err(ActionError::DuplicateTool(_))));
        let mut fresh = ToolRegistry::new();
        fresh.register(Arc::new(GetWeather)).unwrap();
        assert!(execute(&fresh, &ToolCall::new("get_weather", ["Miami"]), &mut env(0.0)).unwrap().is_ok());
    }

    #[test]
    fn observation_paths_invert() {
        let reg = ToolRegistry::with_builtins();
        for (tool, arg, key) in [("get_weather", "San Francisco", "San Francisco"), ("lookup_contact", "Alice", "contact.Alice"), ("compute_score", "reviews", "score.reviews")] {
            let spec = reg.spec(tool).unwrap();
            let call = ToolCall::new(tool, [arg]);
            assert_eq!(spec.observation_key(&call.args).as_deref(), Some(key));
            assert_eq!(spec.call_for_observation(key), Some(call));
        }
        assert_eq!(reg.spec("get_weather").unwrap().call_for_observation("contact.Alice"), None);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(f in -60.0f64..140.0, c in -40.0f64..50.0, use_c: bool) {
            let raw = if use_c { json!({"temp_c": c}) } else { json!({"temp_f": f}) };
            let once = normalize_result(raw);
            prop_assert!(once["temp_f"].is_i64());
            prop_assert_eq!(normalize_result(once.clone()), once);
        }
    }
}
