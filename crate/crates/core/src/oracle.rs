//! Brute-force evaluation of the correlation sums bounded in [`crate::bounds`],
//! and randomized sweeps that compare the two.
//!
//! These routines never call the closed-form bounds internally; they
//! enumerate the sums term by term.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{lemma1_bound, lemma2_bound, BoundsError, IndexSet};

/// Relative slack allowed in every brute-force comparison.
pub const RELATIVE_TOLERANCE: f64 = 1e-12;

/// `sum_{n in J} (1 + n)^-gamma`, term by term.
pub fn single_sum(set: &IndexSet, gamma: f64) -> f64 {
    set.iter().map(|n| (1.0 + n as f64).powf(-gamma)).sum()
}

/// Multiplicity of each distance `|m - n|` over ordered pairs of `J^2`.
pub fn pair_distance_counts(set: &IndexSet) -> Vec<u64> {
    let elems = set.as_slice();
    let Some(&max) = elems.last() else {
        return Vec::new();
    };
    let min = elems[0];
    let mut counts = vec![0u64; (max - min + 1) as usize];
    for &m in elems {
        for &n in elems {
            counts[m.abs_diff(n) as usize] += 1;
        }
    }
    counts
}

/// `sum_{(m,n) in J^2} (1 + |m - n|)^-gamma`, grouped by distance.
pub fn double_sum_from_counts(counts: &[u64], gamma: f64) -> f64 {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(d, &c)| c as f64 * (1.0 + d as f64).powf(-gamma))
        .sum()
}

pub fn double_sum(set: &IndexSet, gamma: f64) -> f64 {
    double_sum_from_counts(&pair_distance_counts(set), gamma)
}

/// A uniformly random subset of `{1..universe}` with the given cardinality.
pub fn random_index_set<R: Rng + ?Sized>(rng: &mut R, universe: u64, cardinality: usize) -> IndexSet {
    let picks = index::sample(rng, universe as usize, cardinality);
    IndexSet::new(picks.into_iter().map(|p| p as u64 + 1)).expect("distinct positive indices")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lemma {
    SingleSum,
    DoubleSum,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    pub trials: usize,
    pub universe: u64,
    pub min_cardinality: usize,
    pub max_cardinality: usize,
    pub seed: u64,
    /// Reverse the tested inequality, as a check that the harness can fail.
    pub inject_fault: bool,
}

impl SweepConfig {
    pub fn single_sum_default(seed: u64) -> Self {
        Self {
            gammas: vec![0.3, 0.5, 0.9, 1.0, 1.5, 3.0],
            trials: 10_000,
            universe: 1000,
            min_cardinality: 0,
            max_cardinality: 1000,
            seed,
            inject_fault: false,
        }
    }

    pub fn double_sum_default(seed: u64) -> Self {
        Self {
            min_cardinality: 1,
            max_cardinality: 256,
            ..Self::single_sum_default(seed)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub lemma: Lemma,
    pub gamma: f64,
    pub set: Vec<u64>,
    pub brute_force: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub lemma: Lemma,
    pub comparisons: usize,
    /// Smallest `bound - brute_force` over the sweep.
    pub min_gap: f64,
    pub violations: Vec<Violation>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn trial_rng(seed: u64, lemma: Lemma, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = match lemma {
        Lemma::SingleSum => 0,
        Lemma::DoubleSum => 1u64 << 63,
    };
    rng.set_stream(stream | trial as u64);
    rng
}

fn violates(brute: f64, bound: f64, fault: bool) -> bool {
    if fault {
        brute < bound
    } else {
        brute > bound * (1.0 + RELATIVE_TOLERANCE)
    }
}

/// Compare brute-force sums against their closed-form bound on random sets.
pub fn run_sweep(lemma: Lemma, cfg: &SweepConfig) -> Result<SweepReport, BoundsError> {
    let per_trial: Vec<Result<(f64, Vec<Violation>), BoundsError>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, lemma, trial);
            let card = rng.random_range(cfg.min_cardinality..=cfg.max_cardinality);
            let set = random_index_set(&mut rng, cfg.universe, card);
            let counts = match lemma {
                Lemma::DoubleSum => pair_distance_counts(&set),
                Lemma::SingleSum => Vec::new(),
            };
            let mut min_gap = f64::INFINITY;
            let mut found = Vec::new();
            for &gamma in &cfg.gammas {
                let (brute, bound) = match lemma {
                    Lemma::SingleSum => (single_sum(&set, gamma), lemma1_bound(&set, gamma)?),
                    Lemma::DoubleSum => (
                        double_sum_from_counts(&counts, gamma),
                        lemma2_bound(&set, gamma)?,
                    ),
                };
                min_gap = min_gap.min(bound - brute);
                if violates(brute, bound, cfg.inject_fault) {
                    found.push(Violation {
                        lemma,
                        gamma,
                        set: set.as_slice().to_vec(),
                        brute_force: brute,
                        bound,
                    });
                }
            }
            Ok((min_gap, found))
        })
        .collect();

    let mut min_gap = f64::INFINITY;
    let mut violations = Vec::new();
    for r in per_trial {
        let (gap, found) = r?;
        min_gap = min_gap.min(gap);
        violations.extend(found);
    }
    Ok(SweepReport {
        lemma,
        comparisons: cfg.trials * cfg.gammas.len(),
        min_gap,
        violations,
    })
}
