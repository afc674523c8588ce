//! Rao-Wu rescaled bootstrap for stratified multi-stage samples.
//!
//! Each replicate redraws `n_h - 1` PSUs with replacement inside every
//! stratum and rescales the weights of records in drawn PSUs. Replicate `r`
//! uses its own ChaCha stream (`stream = r`) keyed by the master seed, so the
//! result does not depend on how replicates are scheduled across threads.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of failed replicates above which a group's interval is flagged.
pub const MAX_FAILED_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    pub id: String,
    pub psus: Vec<String>,
}

/// Strata, their PSUs, and the (stratum, PSU) of every record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyDesign {
    strata: Vec<Stratum>,
    record_psu: Vec<(usize, usize)>,
}

impl SurveyDesign {
    /// Builds the design from per-record (stratum, PSU) identifiers. PSU ids
    /// are scoped to their stratum.
    pub fn from_ids<'a>(ids: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut strata: Vec<Stratum> = Vec::new();
        let mut stratum_index: HashMap<String, usize> = HashMap::new();
        let mut psu_index: HashMap<(usize, String), usize> = HashMap::new();
        let mut record_psu = Vec::new();
        for (s, p) in ids {
            let h = *stratum_index.entry(s.to_string()).or_insert_with(|| {
                strata.push(Stratum { id: s.to_string(), psus: Vec::new() });
                strata.len() - 1
            });
            let c = *psu_index.entry((h, p.to_string())).or_insert_with(|| {
                strata[h].psus.push(p.to_string());
                strata[h].psus.len() - 1
            });
            record_psu.push((h, c));
        }
        SurveyDesign { strata, record_psu }
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn n_records(&self) -> usize {
        self.record_psu.len()
    }

    pub fn record_psu(&self, record: usize) -> (usize, usize) {
        self.record_psu[record]
    }

    pub fn check_resamplable(&self) -> Result<()> {
        match self.strata.iter().find(|s| s.psus.len() < 2) {
            Some(s) => Err(Error::SinglePsuStratum(s.id.clone())),
            None => Ok(()),
        }
    }

    /// PSU draw counts for replicate `index`: one vector per stratum, summing
    /// to `n_h - 1`.
    pub fn draw_counts(&self, seed: u64, index: u64) -> Vec<Vec<u32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        self.strata
            .iter()
            .map(|s| {
                let n = s.psus.len();
                let mut counts = vec![0u32; n];
                for _ in 0..n - 1 {
                    counts[rng.random_range(0..n)] += 1;
                }
                counts
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateWeights {
    pub seed: u64,
    /// `weights[r][i]` is the weight of record `i` in replicate `r`.
    pub weights: Vec<Vec<f64>>,
}

impl ReplicateWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn make_replicates(
    design: &SurveyDesign,
    base_weights: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<ReplicateWeights> {
    if replicates == 0 {
        return Err(Error::argument("need at least one replicate"));
    }
    if base_weights.len() != design.n_records() {
        return Err(Error::argument(format!(
            "{} weights for {} design records",
            base_weights.len(),
            design.n_records()
        )));
    }
    design.check_resamplable()?;
    let scale: Vec<f64> = design
        .strata
        .iter()
        .map(|s| {
            let n = s.psus.len() as f64;
            n / (n - 1.0)
        })
        .collect();
    let weights = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let counts = design.draw_counts(seed, r);
            base_weights
                .iter()
                .zip(&design.record_psu)
                .map(|(&w, &(h, c))| w * scale[h] * f64::from(counts[h][c]))
                .collect()
        })
        .collect();
    Ok(ReplicateWeights { seed, weights })
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `(n - 1) p` in the sorted sample).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval at `level` from replicate values.
pub fn percentile_interval(values: &[f64], level: f64) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Some((quantile_sorted(&sorted, alpha), quantile_sorted(&sorted, 1.0 - alpha)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub group: String,
    /// Point estimate from the original weights.
    pub estimate: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub level: f64,
    /// One value per replicate; `None` where the estimator failed.
    pub replicates: Vec<Option<f64>>,
    pub failed_replicates: usize,
    /// Set when more than 10% of replicates failed.
    pub degenerate: bool,
}

/// Runs `estimator` on the original weights and on every replicate, and
/// summarizes each group with a percentile interval.
///
/// `estimator` maps a weight vector to one value per group (`None` when the
/// group cannot be estimated under those weights).
pub fn bootstrap_estimate<F>(
    groups: &[String],
    estimator: F,
    base_weights: &[f64],
    replicates: &ReplicateWeights,
    level: f64,
) -> Result<Vec<EstimateWithCI>>
where
    F: Fn(&[f64]) -> Vec<Option<f64>> + Sync,
{
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::argument(format!("level must be in (0,1), got {level}")));
    }
    let point = estimator(base_weights);
    if point.len() != groups.len() {
        return Err(Error::argument("estimator returned the wrong number of groups"));
    }
    let values: Vec<Vec<Option<f64>>> = replicates.weights.par_iter().map(|w| estimator(w)).collect();
    let r = values.len();
    Ok(groups
        .iter()
        .enumerate()
        .map(|(k, group)| {
            let reps: Vec<Option<f64>> = values.iter().map(|v| v.get(k).copied().flatten()).collect();
            let ok: Vec<f64> = reps.iter().flatten().copied().collect();
            let failed = r - ok.len();
            let degenerate = r == 0 || failed as f64 > MAX_FAILED_SHARE * r as f64;
            let ci = if degenerate { None } else { percentile_interval(&ok, level) };
            EstimateWithCI {
                group: group.clone(),
                estimate: point[k],
                lo: ci.map(|c| c.0),
                hi: ci.map(|c| c.1),
                level,
                replicates: reps,
                failed_replicates: failed,
                degenerate,
            }
        })
        .collect())
}
