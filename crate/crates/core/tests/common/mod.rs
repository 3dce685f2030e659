#![allow(dead_code)]

use std::collections::BTreeMap;

use serde_json::{json, Value};

use scl_core::runtime::{Phase, Trace};
use scl_core::ToolCall;

pub const ID: &str = "hand";

pub struct Builder {
    pub trace: Trace,
    cycle: u32,
    seq: u32,
    actions: usize,
}

impl Builder {
    pub fn new() -> Self {
        let mut trace = Trace::new();
        trace.push(ID, 0, Phase::Init, json!({"system": "scl", "memory": {"mode": "full"}, "run_seed": 0, "budget": 20}));
        let mut b = Self {
            trace,
            cycle: 0,
            seq: 0,
            actions: 0,
        };
        b.write("goal", "goal", json!("hand-made"));
        b
    }

    pub fn next_cycle(&mut self) {
        self.cycle += 1;
        self.seq = 0;
    }

    pub fn write(&mut self, kind: &str, path: &str, value: Value) {
        let rec = json!({
            "path": path, "kind": kind, "value": value, "source": "test",
            "timestamp": {"cycle": self.cycle, "seq": self.seq}, "epoch": 0
        });
        self.seq += 1;
        self.trace.push(ID, self.cycle, Phase::MemWrite, rec);
    }

    pub fn propose(&mut self, p: Value) {
        self.trace.push(ID, self.cycle, Phase::Propose, p);
    }

    pub fn approve(&mut self, calls: &[ToolCall]) {
        self.trace.push(
            ID,
            self.cycle,
            Phase::Decide,
            json!({"verdict": "approve", "actions": calls, "guard_report": [], "source": "proposal"}),
        );
    }

    pub fn act(&mut self, tool: &str, arg: &str, value: Value) {
        let call = ToolCall::new(tool, [arg]);
        self.trace.push(
            ID,
            self.cycle,
            Phase::Act,
            json!({"call": call, "outcome": "ok", "value": value, "attempts": 1}),
        );
        let slot = format!("actions.{}", self.actions);
        self.actions += 1;
        let effect = if tool == "get_weather" { "query" } else { "side_effect" };
        self.write(
            "approved_action",
            &slot,
            json!({"name": tool, "args": [arg], "status": "executed", "effect": effect, "result": value}),
        );
        if tool == "get_weather" {
            self.write("observation", &format!("obs.{arg}"), value);
        }
    }

    pub fn finish(mut self, guard: &str) -> Trace {
        self.trace.push(ID, self.cycle, Phase::Terminate, json!({"ready": true, "guard": guard, "cycles": self.cycle}));
        self.trace
    }
}

/// Duplicate successful executions counted straight from act events.
pub fn recount_duplicates(trace: &Trace) -> u32 {
    let mut seen: BTreeMap<String, u32> = BTreeMap::new();
    let mut epoch = 0u64;
    for ev in &trace.events {
        match ev.phase {
            Phase::MemWrite => {
                if let Some(e) = ev.payload["value"]["context_epoch"].as_u64() {
                    epoch = epoch.max(e);
                }
            }
            Phase::Act if ev.payload["outcome"] == "ok" => {
                let call = &ev.payload["call"];
                *seen.entry(format!("{}|{}|{epoch}", call["tool"], call["args"])).or_default() += 1;
            }
            _ => {}
        }
    }
    seen.values().map(|n| n - 1).sum()
}
