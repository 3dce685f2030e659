mod common;

use proptest::prelude::*;

use scl_core::metrics::{redundant_calls, score_episode};
use scl_core::runtime::{replay, run_episode, AgentConfig, Phase, System, Trace};
use scl_core::scenarios::{
    generate_episode, generate_episode_with, oracle_outcome, walkthrough_episode, GeneratorParams, Scenario,
    TEMPLATES_PER_SCENARIO,
};
use scl_core::FaultModel;

use common::recount_duplicates;

fn scenario() -> impl Strategy<Value = Scenario> {
    prop_oneof![Just(Scenario::A), Just(Scenario::B), Just(Scenario::C)]
}

fn system() -> impl Strategy<Value = System> {
    prop::sample::select(System::ALL.to_vec())
}

fn faults() -> impl Strategy<Value = FaultModel> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(r, f, p, u)| FaultModel {
        p_redundant: r,
        p_forget: f,
        p_premature: p,
        p_unsupported: u,
    })
}

fn walkthrough_bytes() -> Vec<u8> {
    let run = run_episode(&walkthrough_episode(), &AgentConfig::oracle(System::Scl), 0).unwrap();
    run.trace.to_lines().into_bytes()
}

/// Index of the line holding byte `pos`.
fn line_of(bytes: &[u8], pos: usize) -> usize {
    bytes[..pos].iter().filter(|&&b| b == b'\n').count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_byte_flip_fails_at_its_event(pos_frac in 0.0..1.0f64, replacement in b'!'..=b'~') {
        let bytes = walkthrough_bytes();
        let mut pos = ((bytes.len() - 1) as f64 * pos_frac) as usize;
        while bytes[pos] == b'\n' || bytes[pos] == replacement {
            pos = (pos + 1) % bytes.len();
        }
        let mut tampered = bytes.clone();
        tampered[pos] = replacement;
        let err = Trace::from_bytes(&tampered).and_then(|t| t.verify()).unwrap_err();
        prop_assert_eq!(err.index(), Some(line_of(&bytes, pos)));
    }

    #[test]
    fn budget_bounds_every_run(
        scenario in scenario(),
        template in 0..TEMPLATES_PER_SCENARIO,
        seed in 0u64..50,
        system in system(),
        faults in faults(),
        budget in 0u32..8,
    ) {
        let spec = generate_episode(scenario, template, seed).unwrap();
        let mut config = AgentConfig::faulty(system, faults);
        config.budget = Some(budget);
        let run = run_episode(&spec, &config, seed).unwrap();
        prop_assert!(run.outcome.cycles <= budget);
        prop_assert_eq!(run.trace.events.last().unwrap().phase, Phase::Terminate);
        prop_assert!(run.trace.verify().is_ok());
        prop_assert!(replay(&run.trace).unwrap().matches());
    }

    #[test]
    fn controlled_runs_never_repeat_a_call(
        scenario in scenario(),
        template in 0..TEMPLATES_PER_SCENARIO,
        seed in 0u64..50,
        run_seed in 0u64..5,
        faults in faults(),
    ) {
        let spec = generate_episode(scenario, template, seed).unwrap();
        let faults = FaultModel { p_redundant: 1.0, ..faults };
        let run = run_episode(&spec, &AgentConfig::faulty(System::Scl, faults), run_seed).unwrap();
        prop_assert_eq!(recount_duplicates(&run.trace), 0);
        prop_assert_eq!(redundant_calls(&run.trace), 0);
    }

    #[test]
    fn duplicate_metric_agrees_with_recount(
        scenario in scenario(),
        template in 0..TEMPLATES_PER_SCENARIO,
        seed in 0u64..50,
        system in system(),
        faults in faults(),
    ) {
        let spec = generate_episode(scenario, template, seed).unwrap();
        let run = run_episode(&spec, &AgentConfig::faulty(system, faults), 1).unwrap();
        prop_assert_eq!(redundant_calls(&run.trace), recount_duplicates(&run.trace));
    }

    #[test]
    fn fault_draws_are_deterministic(
        scenario in scenario(),
        template in 0..TEMPLATES_PER_SCENARIO,
        seed in 0u64..50,
        run_seed in 0u64..5,
        system in system(),
    ) {
        let spec = generate_episode(scenario, template, seed).unwrap();
        let config = AgentConfig::faulty(system, FaultModel::default());
        let a = run_episode(&spec, &config, run_seed).unwrap();
        let b = run_episode(&spec, &config, run_seed).unwrap();
        prop_assert_eq!(a.trace.to_lines(), b.trace.to_lines());
    }

    #[test]
    fn oracle_scl_reaches_the_expected_effects(
        template in 0..TEMPLATES_PER_SCENARIO,
        seed in 0u64..1000,
        five in any::<bool>(),
        run_seed in 0u64..5,
    ) {
        let params = GeneratorParams { city_count: if five { 5 } else { 3 }, ..Default::default() };
        let spec = generate_episode_with(Scenario::A, template, seed, &params).unwrap();
        let run = run_episode(&spec, &AgentConfig::oracle(System::Scl), run_seed).unwrap();
        prop_assert!(score_episode(&spec, &run.trace).success);
    }

    #[test]
    fn noise_within_bound_never_flips_the_outcome(
        template in 0..TEMPLATES_PER_SCENARIO,
        seed in 0u64..10_000,
        five in any::<bool>(),
        shifts in prop::collection::vec(-1i64..=1, 5),
    ) {
        let params = GeneratorParams { city_count: if five { 5 } else { 3 }, ..Default::default() };
        let spec = generate_episode_with(Scenario::A, template, seed, &params).unwrap();
        let mut shifted = spec.clone();
        for (temp, d) in shifted.ground_truth.temps_f.values_mut().zip(&shifts) {
            *temp += d;
        }
        prop_assert_eq!(oracle_outcome(&shifted).resolution, oracle_outcome(&spec).resolution);
    }
}
