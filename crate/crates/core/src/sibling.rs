//! Direct sibling survival estimator.
//!
//! Dates are DHS century-month codes (CMC, months since December 1899). All
//! events are placed mid-month, so the half-month offsets cancel and exposure
//! is a whole number of months.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::{GroupId, GroupScheme, Sex};

pub const DEFAULT_WINDOW_MONTHS: u32 = 84;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiblingRecord {
    pub respondent_id: String,
    pub respondent_weight: f64,
    pub stratum_id: String,
    pub psu_id: String,
    pub sibling_index: u32,
    pub sex: Sex,
    pub birth_cmc: i64,
    pub alive: bool,
    pub death_cmc: Option<i64>,
    /// Per-respondent interview date; falls back to the run-level date.
    pub interview_cmc: Option<i64>,
}

impl SiblingRecord {
    fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Validation { id: self.respondent_id.clone(), message };
        match (self.alive, self.death_cmc) {
            (true, Some(_)) => Err(bad(format!("sibling {} is alive but has a death date", self.sibling_index))),
            (false, None) => Err(bad(format!("sibling {} is dead without a death date", self.sibling_index))),
            (false, Some(d)) if d < self.birth_cmc => {
                Err(bad(format!("sibling {} died before birth", self.sibling_index)))
            }
            _ if !(self.respondent_weight.is_finite() && self.respondent_weight > 0.0) => {
                Err(bad(format!("non-positive weight {}", self.respondent_weight)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonPeriod {
    /// Index of the sibling in the input slice.
    pub sibling: usize,
    pub group: GroupId,
    pub exposure_py: f64,
    pub death_indicator: u8,
    pub weight: f64,
}

/// Splits each sibling's life inside the window `(interview - window, interview]`
/// into per-group exposure and at most one death.
pub fn expand_sibling_histories(
    siblings: &[SiblingRecord],
    window_months: u32,
    scheme: &GroupScheme,
    interview_cmc: Option<i64>,
) -> Result<Vec<PersonPeriod>> {
    if window_months == 0 {
        return Err(Error::argument("window must be at least one month"));
    }
    let breaks = scheme.age_breaks();
    let mut out = Vec::new();
    for (idx, s) in siblings.iter().enumerate() {
        s.validate()?;
        let interview = s
            .interview_cmc
            .or(interview_cmc)
            .ok_or_else(|| Error::Validation { id: s.respondent_id.clone(), message: "no interview date".into() })?;
        if let Some(d) = s.death_cmc {
            if d > interview {
                return Err(Error::Validation {
                    id: s.respondent_id.clone(),
                    message: format!("sibling {} died after the interview", s.sibling_index),
                });
            }
        }
        let window_start = interview - i64::from(window_months);
        let start = window_start.max(s.birth_cmc);
        let end = s.death_cmc.map_or(interview, |d| d.min(interview));
        let death_in_window = s.death_cmc.filter(|&d| d > window_start && d <= interview);

        for k in 0..breaks.len() - 1 {
            let bin_lo = s.birth_cmc + 12 * i64::from(breaks[k]);
            let bin_hi = s.birth_cmc + 12 * i64::from(breaks[k + 1]);
            let months = (end.min(bin_hi) - start.max(bin_lo)).max(0);
            let died_here = death_in_window.is_some_and(|d| d >= bin_lo && d < bin_hi);
            if months > 0 || died_here {
                out.push(PersonPeriod {
                    sibling: idx,
                    group: GroupId { sex: s.sex, lower: breaks[k], upper: breaks[k + 1] },
                    exposure_py: months as f64 / 12.0,
                    death_indicator: u8::from(died_here),
                    weight: s.respondent_weight,
                });
            }
        }
    }
    Ok(out)
}

/// Weighted deaths over weighted person-years in `group`.
pub fn sibling_survival_rate(periods: &[PersonPeriod], group: &GroupId) -> Result<f64> {
    sibling_survival_rate_weighted(periods, group, |p| p.weight)
}

/// Same estimator with weights looked up per sibling (used by the bootstrap).
pub fn sibling_survival_rate_weighted(
    periods: &[PersonPeriod],
    group: &GroupId,
    weight: impl Fn(&PersonPeriod) -> f64,
) -> Result<f64> {
    let (deaths, exposure) = periods.iter().filter(|p| p.group == *group).fold((0.0, 0.0), |(d, n), p| {
        let w = weight(p);
        (d + w * f64::from(p.death_indicator), n + w * p.exposure_py)
    });
    if !(exposure > 0.0) {
        return Err(Error::EmptyCell(group.to_string()));
    }
    Ok(deaths / exposure)
}

/// Weighted deaths and person-years per group of the scheme.
pub fn sibling_totals(periods: &[PersonPeriod], scheme: &GroupScheme, weights: &[f64]) -> Vec<(f64, f64)> {
    let mut totals = vec![(0.0, 0.0); scheme.len()];
    for p in periods {
        if let Some(k) = scheme.index_of_group(&p.group) {
            let w = weights[p.sibling];
            totals[k].0 += w * f64::from(p.death_indicator);
            totals[k].1 += w * p.exposure_py;
        }
    }
    totals
}

pub fn load_siblings(path: &Path) -> Result<Vec<SiblingRecord>> {
    read_siblings(File::open(path)?)
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "alive" => Some(true),
        "0" | "false" | "no" | "dead" => Some(false),
        _ => None,
    }
}

pub fn read_siblings<R: Read>(reader: R) -> Result<Vec<SiblingRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let c_id = col("respondent_id")?;
    let c_w = col("respondent_weight")?;
    let c_stratum = col("stratum_id")?;
    let c_psu = col("psu_id")?;
    let c_idx = col("sibling_index")?;
    let c_sex = col("sex")?;
    let c_birth = col("birth_cmc")?;
    let c_alive = col("alive_flag")?;
    let c_death = col("death_cmc")?;
    let c_interview = headers.iter().position(|h| h == "interview_cmc");

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let err = |column: &str| Error::Parse { row, message: format!("cannot parse column `{column}`") };
        let opt_i64 = |v: &str, column: &str| -> Result<Option<i64>> {
            match v.trim() {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| err(column)),
            }
        };
        let s = SiblingRecord {
            respondent_id: rec[c_id].to_string(),
            respondent_weight: rec[c_w].parse().map_err(|_| err("respondent_weight"))?,
            stratum_id: rec[c_stratum].to_string(),
            psu_id: rec[c_psu].to_string(),
            sibling_index: rec[c_idx].parse().map_err(|_| err("sibling_index"))?,
            sex: rec[c_sex].parse().map_err(|_| err("sex"))?,
            birth_cmc: rec[c_birth].parse().map_err(|_| err("birth_cmc"))?,
            alive: parse_flag(&rec[c_alive]).ok_or_else(|| err("alive_flag"))?,
            death_cmc: opt_i64(&rec[c_death], "death_cmc")?,
            interview_cmc: match c_interview {
                Some(c) => opt_i64(&rec[c], "interview_cmc")?,
                None => None,
            },
        };
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INTERVIEW: i64 = 1330;

    fn sib(sex: Sex, age_months: i64, death_months_ago: Option<i64>) -> SiblingRecord {
        SiblingRecord {
            respondent_id: "r".into(),
            respondent_weight: 1.0,
            stratum_id: "s".into(),
            psu_id: "p".into(),
            sibling_index: 1,
            sex,
            birth_cmc: INTERVIEW - age_months,
            alive: death_months_ago.is_none(),
            death_cmc: death_months_ago.map(|m| INTERVIEW - m),
            interview_cmc: None,
        }
    }

    fn bins() -> GroupScheme {
        GroupScheme::standard_adult()
    }

    #[test]
    fn death_six_months_before_interview() {
        let p = expand_sibling_histories(&[sib(Sex::Female, 240, Some(6))], 12, &bins(), Some(INTERVIEW)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].group.to_string(), "F[15,25)");
        assert_eq!(p[0].exposure_py, 0.5);
        assert_eq!(p[0].death_indicator, 1);
    }

    #[test]
    fn alive_without_bin_crossing() {
        let p = expand_sibling_histories(&[sib(Sex::Male, 294, None)], 12, &bins(), Some(INTERVIEW)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].group.to_string(), "M[15,25)");
        assert_eq!(p[0].exposure_py, 1.0);
        assert_eq!(p[0].death_indicator, 0);
    }

    #[test]
    fn birthday_mid_window_splits_exposure() {
        let p = expand_sibling_histories(&[sib(Sex::Female, 25 * 12 + 5, None)], 12, &bins(), Some(INTERVIEW)).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].group.to_string(), "F[15,25)");
        assert_eq!(p[0].exposure_py, 7.0 / 12.0);
        assert_eq!(p[1].group.to_string(), "F[25,35)");
        assert_eq!(p[1].exposure_py, 5.0 / 12.0);
        assert_eq!(p.iter().map(|q| q.exposure_py).sum::<f64>(), 1.0);
    }

    #[test]
    fn death_before_window_contributes_nothing() {
        let p = expand_sibling_histories(&[sib(Sex::Female, 400, Some(30))], 12, &bins(), Some(INTERVIEW)).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn death_after_interview_rejected() {
        let mut s = sib(Sex::Female, 300, Some(1));
        s.death_cmc = Some(INTERVIEW + 2);
        assert!(matches!(expand_sibling_histories(&[s], 12, &bins(), Some(INTERVIEW)), Err(Error::Validation { .. })));
    }

    #[test]
    fn status_and_date_must_agree() {
        let mut s = sib(Sex::Female, 300, None);
        s.death_cmc = Some(INTERVIEW - 3);
        assert!(expand_sibling_histories(&[s], 12, &bins(), Some(INTERVIEW)).is_err());
        let mut s = sib(Sex::Female, 300, Some(3));
        s.death_cmc = None;
        assert!(expand_sibling_histories(&[s], 12, &bins(), Some(INTERVIEW)).is_err());
    }

    #[test]
    fn rate_example() {
        let g: GroupId = "F[15,25)".parse().unwrap();
        let periods = vec![
            PersonPeriod { sibling: 0, group: g, exposure_py: 0.5, death_indicator: 1, weight: 2.0 },
            PersonPeriod { sibling: 1, group: g, exposure_py: 0.5, death_indicator: 0, weight: 2.0 },
        ];
        assert_eq!(sibling_survival_rate(&periods, &g).unwrap(), 1.0);
        let alive: Vec<_> = periods.iter().map(|p| PersonPeriod { death_indicator: 0, ..p.clone() }).collect();
        assert_eq!(sibling_survival_rate(&alive, &g).unwrap(), 0.0);
        let other: GroupId = "M[15,25)".parse().unwrap();
        assert!(matches!(sibling_survival_rate(&periods, &other), Err(Error::EmptyCell(_))));
    }

    #[test]
    fn reads_csv_with_optional_interview_column() {
        let csv =
            "respondent_id,respondent_weight,stratum_id,psu_id,sibling_index,sex,birth_cmc,alive_flag,death_cmc\n\
                   r1,1.5,s1,p1,1,female,1000,1,\n\
                   r1,1.5,s1,p1,2,male,1010,0,1320\n";
        let s = read_siblings(csv.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].alive);
        assert_eq!(s[1].death_cmc, Some(1320));
        let bad = "respondent_id,respondent_weight,stratum_id,psu_id,sibling_index,sex,birth_cmc,alive_flag\n";
        assert!(matches!(read_siblings(bad.as_bytes()), Err(Error::MissingColumn(c)) if c == "death_cmc"));
    }
}
