//! Sub-sampling estimate of poli with a coefficient-of-variation stopping rule.
//!
//! Each round draws `repeats` uniform samples of the pooled users at the
//! current fraction and computes the exact index on each. The round's mean is
//! returned once `std / mean <= epsilon`; otherwise the fraction grows by
//! `step_size`. Reaching a fraction of 1 falls back to the exact index.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingVector, LabeledCohort};
use crate::error::{Error, Result};
use crate::metric::{poli_exact_with, ExactOptions, PoliResult, StatsScope};
use crate::rng::keyed_rng;

/// Attempts per sample before giving up on drawing a contrastable cohort.
pub const MAX_SAMPLE_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    /// Initial sample fraction in (0, 1].
    pub fraction: f64,
    /// CV threshold, as a ratio (0.05 = 5%).
    pub epsilon: f64,
    pub step_size: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            fraction: 0.01,
            epsilon: 0.05,
            step_size: 0.01,
            repeats: 10,
            seed: 0,
        }
    }
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!(
                "fraction must be in (0, 1], got {}",
                self.fraction
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "step_size must be positive and finite, got {}",
                self.step_size
            )));
        }
        if self.repeats < 2 {
            return Err(Error::Config(format!("repeats must be >= 2, got {}", self.repeats)));
        }
        Ok(())
    }

    /// Fraction used in round `round` (0-based). Multiplying avoids drift
    /// from repeated addition.
    pub fn fraction_at(&self, round: usize) -> f64 {
        let f = self.fraction + round as f64 * self.step_size;
        if f >= 1.0 - 1e-12 {
            1.0
        } else {
            f
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxRound {
    pub fraction: f64,
    pub sample_size: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `values`.
    pub std: f64,
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxTrace {
    pub rounds: Vec<ApproxRound>,
    pub final_fraction: f64,
    pub exact_fallback: bool,
}

/// `std / mean`, with zero spread counting as converged even at mean 0.
pub fn coefficient_of_variation(mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else if mean == 0.0 {
        f64::INFINITY
    } else {
        std / mean.abs()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Uniform sample without replacement of `ceil(fraction * n)` pooled users.
///
/// Samples leaving fewer than two groups with two members are redrawn, up to
/// [`MAX_SAMPLE_RETRIES`] times.
pub fn sample_cohort<R: Rng + ?Sized>(
    cohort: &LabeledCohort,
    fraction: f64,
    rng: &mut R,
) -> Result<LabeledCohort> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let pooled: Vec<(&String, &EmbeddingVector)> = cohort
        .groups()
        .iter()
        .flat_map(|(label, members)| members.iter().map(move |v| (label, v)))
        .collect();
    let n = pooled.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    for _ in 0..MAX_SAMPLE_RETRIES {
        let mut picked = index::sample(rng, n, k).into_vec();
        picked.sort_unstable();
        let mut groups: BTreeMap<String, Vec<EmbeddingVector>> = BTreeMap::new();
        for i in picked {
            let (label, v) = pooled[i];
            groups.entry(label.clone()).or_default().push(v.clone());
        }
        let sample = LabeledCohort::new(groups)?;
        if sample.contrastable_groups() >= 2 {
            return Ok(sample);
        }
    }
    Err(Error::Sampling(format!(
        "no sample of {k}/{n} users with two contrastable groups after {MAX_SAMPLE_RETRIES} attempts"
    )))
}

pub fn poli_approx(cohort: &LabeledCohort, config: &ApproxConfig) -> Result<PoliResult> {
    poli_approx_with(cohort, config, 1)
}

/// Runs the estimator; `jobs` parallelizes the repeats of a round.
pub fn poli_approx_with(cohort: &LabeledCohort, config: &ApproxConfig, jobs: usize) -> Result<PoliResult> {
    config.validate()?;
    if cohort.contrastable_groups() < 2 {
        return Err(Error::UndefinedPoli(format!(
            "need at least 2 groups with 2 or more members, found {}",
            cohort.contrastable_groups()
        )));
    }
    let sequential = ExactOptions::default();
    let pool = if jobs > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build().ok()
    } else {
        None
    };

    let mut rounds = Vec::new();
    for round in 0.. {
        let fraction = config.fraction_at(round);
        if fraction >= 1.0 {
            let opts = ExactOptions { jobs: jobs.max(1), ..sequential };
            let mut exact = poli_exact_with(cohort, &opts)?;
            exact.trace = Some(ApproxTrace {
                rounds,
                final_fraction: 1.0,
                exact_fallback: true,
            });
            return Ok(exact);
        }

        let run_repeat = |repeat: usize| -> Result<PoliResult> {
            let mut rng = keyed_rng(config.seed, &[round as u64, repeat as u64]);
            let sample = sample_cohort(cohort, fraction, &mut rng)?;
            poli_exact_with(&sample, &sequential)
        };
        let results: Vec<Result<PoliResult>> = match &pool {
            Some(pool) => pool.install(|| {
                use rayon::prelude::*;
                (0..config.repeats).into_par_iter().map(run_repeat).collect()
            }),
            None => (0..config.repeats).map(run_repeat).collect(),
        };
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = results.iter().map(|r| r.poli).collect();
        let (mean, std) = mean_std(&values);
        let cv = coefficient_of_variation(mean, std);
        let last = results.into_iter().last().expect("repeats >= 2");
        rounds.push(ApproxRound {
            fraction,
            sample_size: last.n_used,
            values,
            mean,
            std,
            cv,
        });
        if cv <= config.epsilon {
            return Ok(PoliResult {
                poli: mean,
                scope: StatsScope::LastSample,
                trace: Some(ApproxTrace {
                    rounds,
                    final_fraction: fraction,
                    exact_fallback: false,
                }),
                ..last
            });
        }
    }
    unreachable!("fraction reaches 1.0 after finitely many rounds")
}
