//! Network survival point estimators: Horvitz-Thompson totals of death
//! reports, the adapted known-population degree estimator, death counts,
//! exposure and the death rate itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::{FrameTotalSource, FrameTotals, GroupId, GroupScheme, KnownPopulationTable, RespondentRecord};

/// Adapted known-population estimate of the average number of ties from
/// frame members in one group to the whole frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeEstimate {
    pub group: GroupId,
    pub d_bar_hat: f64,
    /// Weighted total of reported connections to the probe alters from the group.
    pub numerator_hat: f64,
    pub n_f_used: f64,
    pub n_f_alpha_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathRateEstimate {
    pub group: GroupId,
    pub y_hat: f64,
    pub kp_hat: f64,
    pub d_bar_hat: f64,
    pub n_hat: f64,
    pub d_hat: f64,
    /// Deaths per person-year.
    pub m_hat: f64,
}

/// Per-group outcome; failed cells carry their own error so the remaining
/// groups stay usable.
pub type GroupEstimates = Vec<(GroupId, Result<DeathRateEstimate>)>;

fn group_index(scheme: &GroupScheme, group: &GroupId) -> Result<usize> {
    scheme.index_of_group(group).ok_or_else(|| Error::argument(format!("group {group} is not part of the scheme")))
}

/// Horvitz-Thompson total of complete death reports attributed to `group`
/// by the decedent's reported age and sex.
pub fn ht_death_reports(records: &[RespondentRecord], group: &GroupId, scheme: &GroupScheme) -> Result<f64> {
    let idx = group_index(scheme, group)?;
    Ok(records.iter().map(|r| r.deaths_in_group(scheme, idx) as f64 * r.weight).sum())
}

pub fn kp_average_degree(
    records: &[RespondentRecord],
    group: &GroupId,
    scheme: &GroupScheme,
    kp_table: &KnownPopulationTable,
    n_f: f64,
    n_f_alpha: f64,
) -> Result<DegreeEstimate> {
    let n_alters = kp_table.total();
    if n_alters == 0 {
        return Err(Error::config("known populations have total size 0"));
    }
    if !(n_f > 0.0 && n_f_alpha > 0.0) {
        return Err(Error::argument("N_F and N_F_alpha must be positive"));
    }
    let idx = group_index(scheme, group)?;
    let mut any = false;
    let mut numerator = 0.0;
    for r in records.iter().filter(|r| scheme.index_of(r.age, r.sex) == Some(idx)) {
        any = true;
        numerator += r.kp_total() as f64 * r.weight;
    }
    if !any {
        return Err(Error::EmptyCell(group.to_string()));
    }
    Ok(DegreeEstimate {
        group: *group,
        d_bar_hat: (numerator / n_alters as f64) * (n_f / n_f_alpha),
        numerator_hat: numerator,
        n_f_used: n_f,
        n_f_alpha_used: n_f_alpha,
    })
}

pub fn estimate_deaths(y_hat: f64, degree: &DegreeEstimate) -> Result<f64> {
    if !(degree.d_bar_hat > 0.0) {
        return Err(Error::DegenerateVisibility(degree.group.to_string()));
    }
    Ok(y_hat / degree.d_bar_hat)
}

/// Weighted count of respondents in `group`, estimating N_{F_α}.
pub fn estimate_exposure(records: &[RespondentRecord], group: &GroupId, scheme: &GroupScheme) -> Result<f64> {
    let idx = group_index(scheme, group)?;
    let mut any = false;
    let total = records
        .iter()
        .filter(|r| scheme.index_of(r.age, r.sex) == Some(idx))
        .inspect(|_| any = true)
        .map(|r| r.weight)
        .sum();
    if !any {
        return Err(Error::EmptyCell(group.to_string()));
    }
    Ok(total)
}

/// General form accepting any visibility estimate.
pub fn network_survival_rate_general(y_hat: f64, visibility_hat: f64, n_hat: f64) -> Result<f64> {
    if !(visibility_hat > 0.0) {
        return Err(Error::argument(format!("visibility must be positive, got {visibility_hat}")));
    }
    if !(n_hat > 0.0) {
        return Err(Error::argument(format!("exposure must be positive, got {n_hat}")));
    }
    Ok(y_hat / (visibility_hat * n_hat))
}

/// Death rate per group from the reduced (ratio-form) estimator.
pub fn network_survival_rate(
    records: &[RespondentRecord],
    kp_table: &KnownPopulationTable,
    scheme: &GroupScheme,
    frame_totals: &FrameTotals,
) -> Result<GroupEstimates> {
    let prepared = PreparedSample::new(records, scheme);
    let weights: Vec<f64> = records.iter().map(|r| r.weight).collect();
    prepared.estimate(&weights, kp_table, frame_totals)
}

/// Weighted per-group sums needed by the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTotals {
    pub y_hat: Vec<f64>,
    pub kp_hat: Vec<f64>,
    pub exposure: Vec<f64>,
    pub respondents: Vec<usize>,
    pub weight_total: f64,
}

/// Records reduced to the numbers the estimator touches, so the same sample
/// can be re-estimated cheaply under many weight vectors.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    groups: Vec<GroupId>,
    record_group: Vec<Option<usize>>,
    kp_totals: Vec<f64>,
    /// (record, group) for every complete death report.
    deaths: Vec<(usize, usize)>,
}

impl PreparedSample {
    pub fn new(records: &[RespondentRecord], scheme: &GroupScheme) -> Self {
        let mut deaths = Vec::new();
        for (i, r) in records.iter().enumerate() {
            deaths.extend(r.death_reports.iter().filter_map(|d| d.group_index(scheme)).map(|g| (i, g)));
        }
        PreparedSample {
            groups: scheme.groups(),
            record_group: records.iter().map(|r| scheme.index_of(r.age, r.sex)).collect(),
            kp_totals: records.iter().map(|r| r.kp_total() as f64).collect(),
            deaths,
        }
    }

    pub fn len(&self) -> usize {
        self.record_group.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_group.is_empty()
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn totals(&self, weights: &[f64]) -> GroupTotals {
        assert_eq!(weights.len(), self.len(), "weight vector does not match the sample");
        let g = self.groups.len();
        let mut t = GroupTotals {
            y_hat: vec![0.0; g],
            kp_hat: vec![0.0; g],
            exposure: vec![0.0; g],
            respondents: vec![0; g],
            weight_total: 0.0,
        };
        for (i, &w) in weights.iter().enumerate() {
            t.weight_total += w;
            if let Some(k) = self.record_group[i] {
                t.kp_hat[k] += self.kp_totals[i] * w;
                t.exposure[k] += w;
                t.respondents[k] += 1;
            }
        }
        for &(i, k) in &self.deaths {
            t.y_hat[k] += weights[i];
        }
        t
    }

    /// Estimates every group under `weights`. When the frame total was
    /// estimated from weights it is re-estimated from these weights.
    pub fn estimate(
        &self,
        weights: &[f64],
        kp_table: &KnownPopulationTable,
        frame_totals: &FrameTotals,
    ) -> Result<GroupEstimates> {
        let n_alters = kp_table.total();
        if n_alters == 0 {
            return Err(Error::config("known populations have total size 0"));
        }
        let n_alters = n_alters as f64;
        let t = self.totals(weights);
        let n_f = match frame_totals.source {
            FrameTotalSource::Config => frame_totals.n_f,
            FrameTotalSource::EstimatedFromWeights => t.weight_total,
        };
        if !(n_f > 0.0) {
            return Err(Error::EmptyInput("frame total is zero".into()));
        }
        Ok(self
            .groups
            .iter()
            .enumerate()
            .map(|(k, &group)| {
                let res = if t.respondents[k] == 0 || !(t.exposure[k] > 0.0) {
                    Err(Error::EmptyCell(group.to_string()))
                } else if !(t.kp_hat[k] > 0.0) {
                    Err(Error::DegenerateVisibility(group.to_string()))
                } else {
                    let n_hat = t.exposure[k];
                    let d_bar_hat = (t.kp_hat[k] / n_alters) * (n_f / n_hat);
                    Ok(DeathRateEstimate {
                        group,
                        y_hat: t.y_hat[k],
                        kp_hat: t.kp_hat[k],
                        d_bar_hat,
                        n_hat,
                        d_hat: t.y_hat[k] / d_bar_hat,
                        m_hat: (t.y_hat[k] / t.kp_hat[k]) * (n_alters / n_f),
                    })
                };
                (group, res)
            })
            .collect())
    }

    /// Death rates only, `None` for failed cells.
    pub fn rates(
        &self,
        weights: &[f64],
        kp_table: &KnownPopulationTable,
        frame_totals: &FrameTotals,
    ) -> Vec<Option<f64>> {
        match self.estimate(weights, kp_table, frame_totals) {
            Ok(est) => est.into_iter().map(|(_, r)| r.ok().map(|e| e.m_hat)).collect(),
            Err(_) => vec![None; self.groups.len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::{DeathReport, Sex};
    use std::collections::BTreeMap;

    fn rec(w: f64, age: u32, sex: Sex, kp: u32, deaths: &[(u32, Sex)]) -> RespondentRecord {
        let mut kp_connections = BTreeMap::new();
        kp_connections.insert("a".to_string(), kp);
        RespondentRecord {
            respondent_id: format!("r{age}{w}"),
            stratum_id: "s".into(),
            psu_id: "p".into(),
            weight: w,
            age,
            sex,
            tie_definition: "meal".into(),
            death_reports: deaths.iter().map(|&(a, s)| DeathReport::complete(a, s, "meal")).collect(),
            kp_connections,
        }
    }

    fn f1525() -> GroupId {
        GroupId { sex: Sex::Female, lower: 15, upper: 25 }
    }

    #[test]
    fn ht_two_respondents() {
        let s = GroupScheme::standard_adult();
        let d = (20, Sex::Female);
        let rs = vec![rec(2.0, 30, Sex::Male, 1, &[d]), rec(4.0, 40, Sex::Female, 1, &[d, d])];
        assert_eq!(ht_death_reports(&rs, &f1525(), &s).unwrap(), 10.0);
        assert_eq!(ht_death_reports(&[], &f1525(), &s).unwrap(), 0.0);
    }

    #[test]
    fn incomplete_reports_do_not_count() {
        let s = GroupScheme::standard_adult();
        let mut r = rec(1.0, 30, Sex::Male, 1, &[]);
        r.death_reports.push(DeathReport { death_age: Some(20), death_sex: None, count_context: "meal".into() });
        assert_eq!(ht_death_reports(&[r], &f1525(), &s).unwrap(), 0.0);
    }

    #[test]
    fn degree_single_respondent() {
        let s = GroupScheme::standard_adult();
        let kp = KnownPopulationTable::from_pairs([("a", 100)]).unwrap();
        let rs = vec![rec(10.0, 20, Sex::Female, 5, &[])];
        let d = kp_average_degree(&rs, &f1525(), &s, &kp, 1000.0, 100.0).unwrap();
        assert_eq!(d.d_bar_hat, 5.0);
        let rs0 = vec![rec(10.0, 20, Sex::Female, 0, &[])];
        assert_eq!(kp_average_degree(&rs0, &f1525(), &s, &kp, 1000.0, 100.0).unwrap().d_bar_hat, 0.0);
        let other = vec![rec(10.0, 40, Sex::Female, 5, &[])];
        assert!(matches!(
            kp_average_degree(&other, &f1525(), &s, &kp, 1000.0, 100.0),
            Err(Error::EmptyCell(g)) if g == "F[15,25)"
        ));
    }

    #[test]
    fn deaths_and_exposure() {
        let deg =
            DegreeEstimate { group: f1525(), d_bar_hat: 5.0, numerator_hat: 0.0, n_f_used: 1.0, n_f_alpha_used: 1.0 };
        assert_eq!(estimate_deaths(100.0, &deg).unwrap(), 20.0);
        assert_eq!(estimate_deaths(0.0, &deg).unwrap(), 0.0);
        let zero = DegreeEstimate { d_bar_hat: 0.0, ..deg };
        assert!(matches!(estimate_deaths(1.0, &zero), Err(Error::DegenerateVisibility(_))));

        let s = GroupScheme::standard_adult();
        let rs: Vec<_> = (0..3).map(|_| rec(100.0, 20, Sex::Female, 1, &[])).collect();
        assert_eq!(estimate_exposure(&rs, &f1525(), &s).unwrap(), 300.0);
        assert!(matches!(estimate_exposure(&[], &f1525(), &s), Err(Error::EmptyCell(_))));
    }

    #[test]
    fn general_form() {
        assert_eq!(network_survival_rate_general(100.0, 5.0, 1000.0).unwrap(), 0.02);
        assert!(network_survival_rate_general(100.0, 0.0, 1000.0).is_err());
        assert!(network_survival_rate_general(100.0, 5.0, -1.0).is_err());
    }

    #[test]
    fn zero_kp_group_fails_alone() {
        let s = GroupScheme::standard_adult();
        let kp = KnownPopulationTable::from_pairs([("a", 100)]).unwrap();
        let rs = vec![rec(1.0, 20, Sex::Female, 0, &[]), rec(1.0, 30, Sex::Female, 3, &[(31, Sex::Female)])];
        let est = network_survival_rate(&rs, &kp, &s, &FrameTotals::from_config(10.0).unwrap()).unwrap();
        assert!(matches!(est[0].1, Err(Error::DegenerateVisibility(_))));
        let ok = est[1].1.as_ref().unwrap();
        assert_eq!(ok.m_hat, (1.0 / 3.0) * (100.0 / 10.0));
        assert!(matches!(est[2].1, Err(Error::EmptyCell(_))));
    }

    #[test]
    fn composition_with_general_form() {
        let s = GroupScheme::standard_adult();
        let kp = KnownPopulationTable::from_pairs([("a", 730)]).unwrap();
        let rs = vec![
            rec(3.7, 20, Sex::Female, 7, &[(22, Sex::Female), (50, Sex::Male)]),
            rec(1.3, 22, Sex::Female, 11, &[(19, Sex::Female)]),
            rec(5.1, 51, Sex::Male, 4, &[]),
        ];
        let totals = FrameTotals::from_config(1234.5).unwrap();
        let est = network_survival_rate(&rs, &kp, &s, &totals).unwrap();
        for (g, e) in est.iter().filter_map(|(g, e)| e.as_ref().ok().map(|e| (g, e))) {
            let n_hat = estimate_exposure(&rs, g, &s).unwrap();
            let deg = kp_average_degree(&rs, g, &s, &kp, totals.n_f, n_hat).unwrap();
            let y = ht_death_reports(&rs, g, &s).unwrap();
            let general = network_survival_rate_general(y, deg.d_bar_hat, n_hat).unwrap();
            assert!((general - e.m_hat).abs() <= 4.0 * f64::EPSILON * e.m_hat.abs());
            assert_eq!(estimate_deaths(y, &deg).unwrap(), e.d_hat);
        }
    }
}
