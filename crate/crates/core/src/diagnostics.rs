//! Data-quality checks: deaths per interview, known-population hold-outs and
//! leave-one-out degree stability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_exposure, kp_average_degree};
use crate::survey::{FrameTotals, GroupId, GroupScheme, KnownPopulation, KnownPopulationTable, RespondentRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathsPerInterview {
    pub deaths: usize,
    pub interviews: usize,
    pub ratio: f64,
}

/// Unweighted deaths reported per interview, counting incomplete reports.
pub fn deaths_per_interview(records: &[RespondentRecord]) -> Result<DeathsPerInterview> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no interviews".into()));
    }
    let deaths: usize = records.iter().map(|r| r.death_reports.len()).sum();
    Ok(DeathsPerInterview { deaths, interviews: records.len(), ratio: deaths as f64 / records.len() as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutPrediction {
    pub population: String,
    pub predicted: f64,
    pub actual: u64,
}

impl HoldoutPrediction {
    pub fn relative_error(&self) -> f64 {
        self.predicted / self.actual as f64 - 1.0
    }
}

fn without(table: &KnownPopulationTable, name: &str) -> Result<KnownPopulationTable> {
    KnownPopulationTable::new(
        table.entries().iter().filter(|e| e.name != name).cloned().collect::<Vec<KnownPopulation>>(),
    )
}

fn require_two(table: &KnownPopulationTable) -> Result<()> {
    if table.len() < 2 {
        return Err(Error::argument("hold-out diagnostics need at least two known populations"));
    }
    Ok(())
}

/// Predicts each known population's size from a degree estimated on the
/// others: N̂_{A_j} = ŷ_{F,A_j} / (d̄̂ × N̂_F) × N_F, where
/// d̄̂ = ŷ_{F,𝒜∖j} / N_{𝒜∖j} × N_F / N̂_F.
pub fn internal_consistency_holdout(
    records: &[RespondentRecord],
    kp_table: &KnownPopulationTable,
    frame_totals: &FrameTotals,
) -> Result<Vec<HoldoutPrediction>> {
    require_two(kp_table)?;
    let n_f = frame_totals.n_f;
    let n_f_hat: f64 = records.iter().map(|r| r.weight).sum();
    if !(n_f_hat > 0.0 && n_f > 0.0) {
        return Err(Error::EmptyInput("no respondent weight".into()));
    }
    kp_table
        .entries()
        .par_iter()
        .map(|held| {
            let rest = kp_table.total_excluding(&held.name) as f64;
            let y_rest: f64 = records.iter().map(|r| r.kp_total_excluding(&held.name) as f64 * r.weight).sum();
            let y_held: f64 = records.iter().map(|r| f64::from(r.kp(&held.name)) * r.weight).sum();
            let d_bar = (y_rest / rest) * (n_f / n_f_hat);
            if !(d_bar > 0.0) {
                return Err(Error::DegenerateVisibility(format!("hold-out of {}", held.name)));
            }
            Ok(HoldoutPrediction {
                population: held.name.clone(),
                predicted: y_held / (d_bar * n_f_hat) * n_f,
                actual: held.size,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooDegree {
    pub group: GroupId,
    /// `None` for the baseline using every population.
    pub held_out: Option<String>,
    /// `None` when the cell cannot be estimated.
    pub d_bar_hat: Option<f64>,
}

fn degree_or_none(
    records: &[RespondentRecord],
    group: &GroupId,
    scheme: &GroupScheme,
    table: &KnownPopulationTable,
    n_f: f64,
) -> Option<f64> {
    let n_f_alpha = estimate_exposure(records, group, scheme).ok()?;
    kp_average_degree(records, group, scheme, table, n_f, n_f_alpha).ok().map(|d| d.d_bar_hat)
}

/// Group degrees with each known population removed in turn, preceded by
/// the all-population baseline for every group.
pub fn loo_degree(
    records: &[RespondentRecord],
    kp_table: &KnownPopulationTable,
    scheme: &GroupScheme,
    frame_totals: &FrameTotals,
) -> Result<Vec<LooDegree>> {
    require_two(kp_table)?;
    let n_f = frame_totals.n_f;
    let groups = scheme.groups();
    let mut out: Vec<LooDegree> = groups
        .iter()
        .map(|g| LooDegree { group: *g, held_out: None, d_bar_hat: degree_or_none(records, g, scheme, kp_table, n_f) })
        .collect();
    let held: Vec<Vec<LooDegree>> = kp_table
        .entries()
        .par_iter()
        .map(|e| {
            let table = without(kp_table, &e.name)?;
            let stripped: Vec<RespondentRecord> = records
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.kp_connections.remove(&e.name);
                    r
                })
                .collect();
            Ok(groups
                .iter()
                .map(|g| LooDegree {
                    group: *g,
                    held_out: Some(e.name.clone()),
                    d_bar_hat: degree_or_none(&stripped, g, scheme, &table, n_f),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    out.extend(held.into_iter().flatten());
    Ok(out)
}
