use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::canonical::derive_seed;
use crate::scenarios::GroundTruth;

use super::DEFAULT_MAX_RETRIES;

const CODE_ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Per-episode tool environment: hidden ground truth plus the seeded streams
/// for sensor noise and injected transient faults.
#[derive(Clone, Debug)]
pub struct ToolEnv {
    pub episode_id: String,
    pub spec_seed: u64,
    pub truth: GroundTruth,
    /// Symmetric bound on weather noise in °F; 0 disables noise.
    pub noise_bound: f64,
    /// Per-attempt probability of an injected transient failure.
    pub transient_rate: f64,
    pub max_retries: u32,
    resolved: BTreeSet<String>,
    artifact_seq: u64,
    noise_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
}

impl ToolEnv {
    pub fn new(episode_id: &str, spec_seed: u64, run_seed: u64, truth: GroundTruth, noise_bound: f64) -> Self {
        let rs = run_seed.to_string();
        Self {
            episode_id: episode_id.to_string(),
            spec_seed,
            truth,
            noise_bound,
            transient_rate: 0.0,
            max_retries: DEFAULT_MAX_RETRIES,
            resolved: BTreeSet::new(),
            artifact_seq: 0,
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(&["tool-noise", episode_id, &rs])),
            fault_rng: ChaCha8Rng::seed_from_u64(derive_seed(&["tool-faults", episode_id, &rs])),
        }
    }

    pub fn with_transient_rate(mut self, rate: f64) -> Self {
        self.transient_rate = rate;
        self
    }

    pub fn with_max_retries(mut self, retries: u32) -> Self {
        self.max_retries = retries;
        self
    }

    pub(crate) fn inject_transient(&mut self) -> bool {
        self.transient_rate > 0.0 && self.fault_rng.gen::<f64>() < self.transient_rate
    }

    pub(crate) fn noise(&mut self) -> f64 {
        if self.noise_bound <= 0.0 {
            0.0
        } else {
            self.noise_rng.gen_range(-self.noise_bound..=self.noise_bound)
        }
    }

    pub fn next_artifact(&mut self, tool: &str) -> String {
        let handle = format!("{tool}:{}:{}", self.episode_id, self.artifact_seq);
        self.artifact_seq += 1;
        handle
    }

    pub(crate) fn resolve(&mut self, name: &str) {
        self.resolved.insert(name.to_string());
    }

    pub fn is_resolved(&self, name: &str) -> bool {
        self.resolved.contains(name)
    }

    /// Six uppercase alphanumerics, a function of (episode seed, city) only.
    pub fn confirmation_code(&self, city: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
            "confirmation",
            &self.spec_seed.to_string(),
            city,
        ]));
        (0..6)
            .map(|_| CODE_ALPHABET[rng.gen_range(0..CODE_ALPHABET.len())] as char)
            .collect()
    }
}
