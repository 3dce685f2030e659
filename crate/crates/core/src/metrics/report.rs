use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{hallucination_rate, EpisodeScore, ErrorClass};
use crate::runtime::System;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// True when the whole interval lies above zero.
    pub fn positive(&self) -> bool {
        self.lo > 0.0
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Percentile bootstrap 95% interval of the mean.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, seed: u64) -> Interval {
    let m = mean(xs);
    if xs.is_empty() {
        return Interval { mean: 0.0, lo: 0.0, hi: 0.0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]).sum::<f64>() / xs.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Interval {
        mean: m,
        lo: percentile(&means, 0.025),
        hi: percentile(&means, 0.975),
    }
}

/// Paired bootstrap 95% interval of mean(a - b); `a[i]` and `b[i]` must come
/// from the same episode.
pub fn paired_diff_ci(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Interval {
    assert_eq!(a.len(), b.len(), "paired samples must align");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    bootstrap_mean_ci(&diffs, resamples, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub system: System,
    pub episodes: usize,
    pub seeds: usize,
    /// Task success rate in percent.
    pub tsr: Interval,
    pub gfs: f64,
    /// Redundant tool calls per episode.
    pub tue: Interval,
    pub mf: f64,
    /// Unsupported assertions per 100 executed calls.
    pub hallucinations: f64,
    pub errors: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SystemRow>,
}

pub fn aggregate(scores: &[EpisodeScore], seed: u64) -> SuiteReport {
    let mut by_system: BTreeMap<System, Vec<&EpisodeScore>> = BTreeMap::new();
    for s in scores {
        by_system.entry(s.system).or_default().push(s);
    }
    let rows = by_system
        .into_iter()
        .map(|(system, eps)| {
            let success: Vec<f64> = eps.iter().map(|e| if e.success { 100.0 } else { 0.0 }).collect();
            let redundant: Vec<f64> = eps.iter().map(|e| e.redundant_calls as f64).collect();
            let gfs: Vec<f64> = eps.iter().map(|e| e.gfs).collect();
            let mf: Vec<f64> = eps.iter().map(|e| if e.memory_faithful { 1.0 } else { 0.0 }).collect();
            let unsupported: u64 = eps.iter().map(|e| e.unsupported_assertions as u64).sum();
            let calls: u64 = eps.iter().map(|e| e.executed_calls as u64).sum();
            let mut seeds: Vec<u64> = eps.iter().map(|e| e.run_seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let mut errors: BTreeMap<String, usize> =
                ErrorClass::ALL.iter().map(|c| (c.as_str().to_string(), 0)).collect();
            for e in eps.iter().filter_map(|e| e.error) {
                *errors.entry(e.as_str().to_string()).or_default() += 1;
            }
            SystemRow {
                system,
                episodes: eps.len(),
                seeds: seeds.len(),
                tsr: bootstrap_mean_ci(&success, BOOTSTRAP_RESAMPLES, seed),
                gfs: mean(&gfs),
                tue: bootstrap_mean_ci(&redundant, BOOTSTRAP_RESAMPLES, seed ^ 1),
                mf: mean(&mf),
                hallucinations: hallucination_rate(unsupported, calls),
                errors,
            }
        })
        .collect();
    SuiteReport { rows }
}

impl SuiteReport {
    pub fn row(&self, system: System) -> Option<&SystemRow> {
        self.rows.iter().find(|r| r.system == system)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<11} {:>8} {:>5} {:>22} {:>6} {:>18} {:>6} {:>8}",
            "system", "episodes", "seeds", "TSR % [95% CI]", "GFS", "TUE [95% CI]", "MF", "halluc"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<11} {:>8} {:>5} {:>6.1} [{:>5.1}, {:>5.1}] {:>6.3} {:>5.2} [{:.2}, {:.2}] {:>6.3} {:>8.2}",
                r.system.as_str(),
                r.episodes,
                r.seeds,
                r.tsr.mean,
                r.tsr.lo,
                r.tsr.hi,
                r.gfs,
                r.tue.mean,
                r.tue.lo,
                r.tue.hi,
                r.mf,
                r.hallucinations
            );
        }
        let _ = writeln!(out, "\nfailures by first divergent phase");
        for r in &self.rows {
            let parts: Vec<String> = r.errors.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "{:<11} {}", r.system.as_str(), parts.join(" "));
        }
        out
    }
}
