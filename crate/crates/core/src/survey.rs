//! Survey data model, CSV ingestion and cleaning conventions.
//!
//! Respondents live in one CSV (one row per interview, one `kp_<name>`
//! column per known population); reported deaths live in a long-format CSV
//! keyed by `respondent_id`, one row per reported death.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap applied to known-population connection counts.
pub const DEFAULT_TOPCODE: u32 = 30;

/// Column prefix for known-population connection counts.
pub const KP_PREFIX: &str = "kp_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Female, Sex::Male];

    pub fn code(self) -> char {
        match self {
            Sex::Female => 'F',
            Sex::Male => 'M',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Sex::Female),
            "m" | "male" => Ok(Sex::Male),
            other => Err(Error::argument(format!("unrecognised sex `{other}`"))),
        }
    }
}

/// Half-open age interval `[min, max)` in whole years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeRange {
    pub min: u32,
    pub max: u32,
}

impl AgeRange {
    pub fn new(min: u32, max: u32) -> Self {
        AgeRange { min, max }
    }

    pub fn contains(&self, age: u32) -> bool {
        self.min <= age && age < self.max
    }
}

/// Per-sex age ranges, e.g. the usual DHS frame of women 15-49 and men 15-59.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeSexRule {
    pub female: AgeRange,
    pub male: AgeRange,
}

impl AgeSexRule {
    pub fn uniform(min: u32, max: u32) -> Self {
        AgeSexRule { female: AgeRange::new(min, max), male: AgeRange::new(min, max) }
    }

    /// Women [15,50), men [15,60).
    pub fn dhs() -> Self {
        AgeSexRule { female: AgeRange::new(15, 50), male: AgeRange::new(15, 60) }
    }

    pub fn range(&self, sex: Sex) -> AgeRange {
        match sex {
            Sex::Female => self.female,
            Sex::Male => self.male,
        }
    }

    pub fn contains(&self, age: u32, sex: Sex) -> bool {
        self.range(sex).contains(age)
    }
}

/// A demographic group: one sex and one half-open age bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupId {
    pub sex: Sex,
    pub lower: u32,
    pub upper: u32,
}

impl GroupId {
    pub fn width(&self) -> u32 {
        self.upper - self.lower
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{})", self.sex.code(), self.lower, self.upper)
    }
}

impl FromStr for GroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::argument(format!("malformed group label `{s}`"));
        let s = s.trim();
        let mut chars = s.chars();
        let sex = match chars.next() {
            Some('F') => Sex::Female,
            Some('M') => Sex::Male,
            _ => return Err(bad()),
        };
        let rest = chars.as_str();
        let inner = rest.strip_prefix('[').and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
        let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
        let lower = lo.trim().parse().map_err(|_| bad())?;
        let upper = hi.trim().parse().map_err(|_| bad())?;
        if upper <= lower {
            return Err(bad());
        }
        Ok(GroupId { sex, lower, upper })
    }
}

impl Serialize for GroupId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Partition of (age, sex) into demographic groups, plus the frame rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScheme {
    age_breaks: Vec<u32>,
    frame_age_range: AgeSexRule,
}

impl GroupScheme {
    pub fn new(age_breaks: Vec<u32>, frame_age_range: AgeSexRule) -> Result<Self> {
        if age_breaks.len() < 2 {
            return Err(Error::config("age_breaks needs at least two entries"));
        }
        if age_breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("age_breaks must be strictly increasing"));
        }
        Ok(GroupScheme { age_breaks, frame_age_range })
    }

    /// Breaks with a frame covering exactly the binned range for both sexes.
    pub fn with_breaks(age_breaks: Vec<u32>) -> Result<Self> {
        let lo = age_breaks.first().copied().unwrap_or(0);
        let hi = age_breaks.last().copied().unwrap_or(0);
        Self::new(age_breaks, AgeSexRule::uniform(lo, hi))
    }

    /// Ten-year bins 15..65 for both sexes, frame ages 15..65.
    pub fn standard_adult() -> Self {
        Self::with_breaks(vec![15, 25, 35, 45, 55, 65]).expect("valid breaks")
    }

    pub fn age_breaks(&self) -> &[u32] {
        &self.age_breaks
    }

    pub fn frame_age_range(&self) -> AgeSexRule {
        self.frame_age_range
    }

    pub fn bins_per_sex(&self) -> usize {
        self.age_breaks.len() - 1
    }

    pub fn len(&self) -> usize {
        2 * self.bins_per_sex()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All groups, females first, each sex in ascending age order.
    pub fn groups(&self) -> Vec<GroupId> {
        Sex::ALL
            .iter()
            .flat_map(|&sex| self.age_breaks.windows(2).map(move |w| GroupId { sex, lower: w[0], upper: w[1] }))
            .collect()
    }

    pub fn group_at(&self, index: usize) -> GroupId {
        let bins = self.bins_per_sex();
        let sex = if index < bins { Sex::Female } else { Sex::Male };
        let k = index % bins;
        GroupId { sex, lower: self.age_breaks[k], upper: self.age_breaks[k + 1] }
    }

    /// Position of `age` among the bins, or `None` when outside `[first, last)`.
    pub fn bin_of(&self, age: u32) -> Option<usize> {
        let first = *self.age_breaks.first()?;
        let last = *self.age_breaks.last()?;
        if age < first || age >= last {
            return None;
        }
        Some(self.age_breaks.partition_point(|&b| b <= age) - 1)
    }

    /// Dense index of the group containing (age, sex).
    pub fn index_of(&self, age: u32, sex: Sex) -> Option<usize> {
        let bin = self.bin_of(age)?;
        Some(match sex {
            Sex::Female => bin,
            Sex::Male => self.bins_per_sex() + bin,
        })
    }

    pub fn index_of_group(&self, group: &GroupId) -> Option<usize> {
        let idx = self.index_of(group.lower, group.sex)?;
        (self.group_at(idx) == *group).then_some(idx)
    }

    pub fn assign(&self, age: u32, sex: Sex) -> Option<GroupId> {
        self.index_of(age, sex).map(|i| self.group_at(i))
    }

    pub fn in_frame(&self, age: u32, sex: Sex) -> bool {
        self.frame_age_range.contains(age, sex)
    }
}

/// Assigns (age, sex) to its group; `None` marks an out-of-range input.
pub fn assign_group(age: u32, sex: Sex, scheme: &GroupScheme) -> Option<GroupId> {
    scheme.assign(age, sex)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathReport {
    pub death_age: Option<u32>,
    pub death_sex: Option<Sex>,
    /// Tie definition under which the death was reported.
    pub count_context: String,
}

impl DeathReport {
    pub fn complete(age: u32, sex: Sex, context: impl Into<String>) -> Self {
        DeathReport { death_age: Some(age), death_sex: Some(sex), count_context: context.into() }
    }

    pub fn is_complete(&self) -> bool {
        self.death_age.is_some() && self.death_sex.is_some()
    }

    /// Group of the decedent by reported age and sex; incomplete reports have none.
    pub fn group_index(&self, scheme: &GroupScheme) -> Option<usize> {
        scheme.index_of(self.death_age?, self.death_sex?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentRecord {
    pub respondent_id: String,
    pub stratum_id: String,
    pub psu_id: String,
    pub weight: f64,
    pub age: u32,
    pub sex: Sex,
    pub tie_definition: String,
    pub death_reports: Vec<DeathReport>,
    pub kp_connections: BTreeMap<String, u32>,
}

impl RespondentRecord {
    /// Total reported connections to the probe alters (all known populations).
    pub fn kp_total(&self) -> u64 {
        self.kp_connections.values().map(|&v| u64::from(v)).sum()
    }

    pub fn kp_total_excluding(&self, name: &str) -> u64 {
        self.kp_connections.iter().filter(|(k, _)| k.as_str() != name).map(|(_, &v)| u64::from(v)).sum()
    }

    pub fn kp(&self, name: &str) -> u32 {
        self.kp_connections.get(name).copied().unwrap_or(0)
    }

    /// Complete death reports falling in group `index`.
    pub fn deaths_in_group(&self, scheme: &GroupScheme, index: usize) -> usize {
        self.death_reports.iter().filter(|d| d.group_index(scheme) == Some(index)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownPopulation {
    pub name: String,
    pub size: u64,
}

/// Known populations of known size; together they form the probe-alter multiset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownPopulationTable {
    entries: Vec<KnownPopulation>,
}

impl KnownPopulationTable {
    pub fn new(entries: Vec<KnownPopulation>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::config(format!("duplicate known population `{}`", e.name)));
            }
            if e.size == 0 {
                return Err(Error::config(format!("known population `{}` has size 0", e.name)));
            }
        }
        Ok(KnownPopulationTable { entries })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, u64)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(name, size)| KnownPopulation { name: name.into(), size }).collect())
    }

    pub fn entries(&self) -> &[KnownPopulation] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn size_of(&self, name: &str) -> Option<u64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.size)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// N_𝒜, the size of the probe-alter multiset.
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.size).sum()
    }

    pub fn total_excluding(&self, name: &str) -> u64 {
        self.entries.iter().filter(|e| e.name != name).map(|e| e.size).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTotalSource {
    Config,
    EstimatedFromWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTotals {
    pub n_f: f64,
    pub source: FrameTotalSource,
}

impl FrameTotals {
    pub fn from_config(n_f: f64) -> Result<Self> {
        if !(n_f.is_finite() && n_f > 0.0) {
            return Err(Error::config(format!("N_F must be positive, got {n_f}")));
        }
        Ok(FrameTotals { n_f, source: FrameTotalSource::Config })
    }

    pub fn from_weights(records: &[RespondentRecord]) -> Result<Self> {
        let n_f: f64 = records.iter().map(|r| r.weight).sum();
        if !(n_f > 0.0) {
            return Err(Error::EmptyInput("cannot estimate N_F from an empty sample".into()));
        }
        Ok(FrameTotals { n_f, source: FrameTotalSource::EstimatedFromWeights })
    }
}

/// Counts reported by [`load_respondents`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub rows: usize,
    pub death_reports: usize,
    pub incomplete_reports: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedSurvey {
    pub records: Vec<RespondentRecord>,
    pub summary: LoadSummary,
}

/// Reads the respondent CSV and optional long-format deaths CSV.
pub fn load_respondents(respondents: &Path, deaths: Option<&Path>) -> Result<LoadedSurvey> {
    let mut records = read_respondents(File::open(respondents)?)?;
    let mut summary = LoadSummary { rows: records.len(), ..Default::default() };
    if let Some(path) = deaths {
        let (n, incomplete) = attach_deaths(&mut records, File::open(path)?)?;
        summary.death_reports = n;
        summary.incomplete_reports = incomplete;
    }
    Ok(LoadedSurvey { records, summary })
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_field<T: FromStr>(value: &str, column: &str, row: usize) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse { row, message: format!("cannot parse `{value}` in column `{column}`") })
}

pub fn read_respondents<R: Read>(reader: R) -> Result<Vec<RespondentRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c_id = column(&headers, "respondent_id")?;
    let c_stratum = column(&headers, "stratum_id")?;
    let c_psu = column(&headers, "psu_id")?;
    let c_weight = column(&headers, "weight")?;
    let c_age = column(&headers, "age")?;
    let c_sex = column(&headers, "sex")?;
    let c_tie = column(&headers, "tie_definition")?;
    let kp_cols: Vec<(usize, String)> =
        headers.iter().enumerate().filter_map(|(i, h)| h.strip_prefix(KP_PREFIX).map(|n| (i, n.to_string()))).collect();

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let id = rec[c_id].to_string();
        let weight: f64 = parse_field(&rec[c_weight], "weight", row)?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Validation { id, message: format!("non-positive weight {weight}") });
        }
        let sex = rec[c_sex]
            .parse()
            .map_err(|_| Error::Parse { row, message: format!("cannot parse `{}` in column `sex`", &rec[c_sex]) })?;
        let mut kp_connections = BTreeMap::new();
        for (i, name) in &kp_cols {
            let v: u32 = parse_field(&rec[*i], &format!("{KP_PREFIX}{name}"), row)?;
            kp_connections.insert(name.clone(), v);
        }
        out.push(RespondentRecord {
            respondent_id: id,
            stratum_id: rec[c_stratum].to_string(),
            psu_id: rec[c_psu].to_string(),
            weight,
            age: parse_field(&rec[c_age], "age", row)?,
            sex,
            tie_definition: rec[c_tie].to_string(),
            death_reports: Vec::new(),
            kp_connections,
        });
    }
    Ok(out)
}

/// Attaches death rows to their respondents; returns (reports, incomplete reports).
pub fn attach_deaths<R: Read>(records: &mut [RespondentRecord], reader: R) -> Result<(usize, usize)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c_id = column(&headers, "respondent_id")?;
    let c_age = column(&headers, "death_age")?;
    let c_sex = column(&headers, "death_sex")?;

    let index: HashMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.respondent_id.as_str(), i)).collect();
    let mut pending = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let id = &rec[c_id];
        let &i = index.get(id).ok_or_else(|| Error::Validation {
            id: id.to_string(),
            message: "death report for unknown respondent".into(),
        })?;
        let age = match rec[c_age].trim() {
            "" => None,
            s => Some(parse_field::<u32>(s, "death_age", row)?),
        };
        let sex = match rec[c_sex].trim() {
            "" => None,
            s => Some(
                s.parse::<Sex>()
                    .map_err(|_| Error::Parse { row, message: format!("cannot parse `{s}` in column `death_sex`") })?,
            ),
        };
        pending.push((i, age, sex));
    }
    let mut incomplete = 0;
    let n = pending.len();
    for (i, death_age, death_sex) in pending {
        let report = DeathReport { death_age, death_sex, count_context: records[i].tie_definition.clone() };
        if !report.is_complete() {
            incomplete += 1;
        }
        records[i].death_reports.push(report);
    }
    Ok((n, incomplete))
}

pub fn load_known_populations(path: &Path) -> Result<KnownPopulationTable> {
    read_known_populations(File::open(path)?)
}

pub fn read_known_populations<R: Read>(reader: R) -> Result<KnownPopulationTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c_name = column(&headers, "name")?;
    let c_size = column(&headers, "size")?;
    let mut entries = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        entries
            .push(KnownPopulation { name: rec[c_name].to_string(), size: parse_field(&rec[c_size], "size", row + 2)? });
    }
    KnownPopulationTable::new(entries)
}

/// Checks that every connection column names a known population.
pub fn check_kp_names(records: &[RespondentRecord], table: &KnownPopulationTable) -> Result<()> {
    for r in records {
        if let Some(name) = r.kp_connections.keys().find(|k| table.size_of(k).is_none()) {
            return Err(Error::Validation {
                id: r.respondent_id.clone(),
                message: format!("connection column `{KP_PREFIX}{name}` has no known-population entry"),
            });
        }
    }
    Ok(())
}

pub fn write_respondents<W: Write>(records: &[RespondentRecord], kp_names: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["respondent_id", "stratum_id", "psu_id", "weight", "age", "sex", "tie_definition"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(kp_names.iter().map(|n| format!("{KP_PREFIX}{n}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.respondent_id.clone(),
            r.stratum_id.clone(),
            r.psu_id.clone(),
            r.weight.to_string(),
            r.age.to_string(),
            r.sex.name().to_string(),
            r.tie_definition.clone(),
        ];
        row.extend(kp_names.iter().map(|n| r.kp(n).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_deaths<W: Write>(records: &[RespondentRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["respondent_id", "death_age", "death_sex"])?;
    for r in records {
        for d in &r.death_reports {
            w.write_record([
                r.respondent_id.clone(),
                d.death_age.map(|a| a.to_string()).unwrap_or_default(),
                d.death_sex.map(|s| s.name().to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_known_populations<W: Write>(table: &KnownPopulationTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "size"])?;
    for e in table.entries() {
        w.write_record([e.name.clone(), e.size.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Caps every known-population connection count at `cap`.
pub fn topcode_kp_reports(mut records: Vec<RespondentRecord>, cap: u32) -> Vec<RespondentRecord> {
    for r in &mut records {
        for v in r.kp_connections.values_mut() {
            *v = (*v).min(cap);
        }
    }
    records
}

/// Rescales weights so they sum to `target_n_f`.
pub fn denormalize_weights(mut records: Vec<RespondentRecord>, target_n_f: f64) -> Result<Vec<RespondentRecord>> {
    if !(target_n_f.is_finite() && target_n_f > 0.0) {
        return Err(Error::argument(format!("target N_F must be positive, got {target_n_f}")));
    }
    let total: f64 = records.iter().map(|r| r.weight).sum();
    if !(total > 0.0) {
        return Err(Error::argument("weights sum to zero"));
    }
    if total == target_n_f {
        return Ok(records);
    }
    let factor = target_n_f / total;
    for r in &mut records {
        r.weight *= factor;
    }
    Ok(records)
}

/// Keeps respondents whose (age, sex) passes `rule`. Weights are left untouched.
pub fn truncate_frame(records: Vec<RespondentRecord>, rule: &AgeSexRule) -> Vec<RespondentRecord> {
    records.into_iter().filter(|r| rule.contains(r.age, r.sex)).collect()
}

pub fn filter_tie_definition(records: Vec<RespondentRecord>, tie: &str) -> Vec<RespondentRecord> {
    records.into_iter().filter(|r| r.tie_definition == tie).collect()
}

fn default_topcode() -> Option<u32> {
    Some(DEFAULT_TOPCODE)
}

/// JSON run configuration shared by the CLI subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyConfig {
    pub age_breaks: Vec<u32>,
    #[serde(default)]
    pub frame_age_range: Option<AgeSexRule>,
    /// `null` disables topcoding; absent means the default cap of 30.
    #[serde(default = "default_topcode")]
    pub topcode_cap: Option<u32>,
    #[serde(default)]
    pub n_f: Option<f64>,
    #[serde(default)]
    pub tie_definition: Option<String>,
    /// Average years lived in the interval by decedents, as a fraction of width.
    #[serde(default)]
    pub a_fraction: Option<f64>,
    /// Interview date (century-month code) for sibling histories lacking one.
    #[serde(default)]
    pub interview_cmc: Option<i64>,
    #[serde(default)]
    pub window_months: Option<u32>,
}

impl SurveyConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: SurveyConfig = serde_json::from_reader(File::open(path)?)?;
        cfg.scheme()?;
        Ok(cfg)
    }

    pub fn scheme(&self) -> Result<GroupScheme> {
        match self.frame_age_range {
            Some(rule) => GroupScheme::new(self.age_breaks.clone(), rule),
            None => GroupScheme::with_breaks(self.age_breaks.clone()),
        }
    }

    /// Applies the cleaning conventions (tie filter, frame rule, topcoding,
    /// de-normalization) and returns the records plus the frame total.
    pub fn prepare(&self, records: Vec<RespondentRecord>) -> Result<(Vec<RespondentRecord>, FrameTotals)> {
        let scheme = self.scheme()?;
        let mut records = match &self.tie_definition {
            Some(t) => filter_tie_definition(records, t),
            None => records,
        };
        if self.frame_age_range.is_some() {
            records = truncate_frame(records, &scheme.frame_age_range());
        }
        if let Some(cap) = self.topcode_cap {
            records = topcode_kp_reports(records, cap);
        }
        let totals = match self.n_f {
            Some(n_f) => {
                records = denormalize_weights(records, n_f)?;
                FrameTotals::from_config(n_f)?
            }
            None => FrameTotals::from_weights(&records)?,
        };
        Ok((records, totals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, w: f64, age: u32, sex: Sex) -> RespondentRecord {
        RespondentRecord {
            respondent_id: id.into(),
            stratum_id: "s".into(),
            psu_id: "p".into(),
            weight: w,
            age,
            sex,
            tie_definition: "meal".into(),
            death_reports: vec![],
            kp_connections: BTreeMap::new(),
        }
    }

    #[test]
    fn assigns_half_open_bins() {
        let s = GroupScheme::standard_adult();
        let g = assign_group(27, Sex::Female, &s).unwrap();
        assert_eq!(g.to_string(), "F[25,35)");
        assert_eq!(assign_group(25, Sex::Male, &s).unwrap().to_string(), "M[25,35)");
        assert_eq!(assign_group(15, Sex::Male, &s).unwrap().to_string(), "M[15,25)");
        assert_eq!(assign_group(65, Sex::Female, &s), None);
        assert_eq!(assign_group(14, Sex::Female, &s), None);
    }

    #[test]
    fn group_labels_roundtrip() {
        let s = GroupScheme::standard_adult();
        for (i, g) in s.groups().iter().enumerate() {
            let back: GroupId = g.to_string().parse().unwrap();
            assert_eq!(&back, g);
            assert_eq!(s.index_of_group(g), Some(i));
        }
        assert!("X[1,2)".parse::<GroupId>().is_err());
        assert!("F[5,5)".parse::<GroupId>().is_err());
    }

    #[test]
    fn scheme_rejects_bad_breaks() {
        assert!(GroupScheme::with_breaks(vec![15]).is_err());
        assert!(GroupScheme::with_breaks(vec![15, 15, 25]).is_err());
        assert!(GroupScheme::with_breaks(vec![25, 15]).is_err());
    }

    #[test]
    fn topcode_caps_at_30() {
        let mut r = rec("a", 1.0, 20, Sex::Female);
        r.kp_connections.insert("nurses".into(), 35);
        r.kp_connections.insert("teachers".into(), 12);
        let out = topcode_kp_reports(vec![r], DEFAULT_TOPCODE);
        assert_eq!(out[0].kp("nurses"), 30);
        assert_eq!(out[0].kp("teachers"), 12);
    }

    #[test]
    fn denormalize_examples() {
        let rs = vec![rec("a", 1.0, 20, Sex::Female), rec("b", 1.0, 20, Sex::Female), rec("c", 2.0, 20, Sex::Male)];
        let out = denormalize_weights(rs.clone(), 8.0).unwrap();
        let w: Vec<f64> = out.iter().map(|r| r.weight).collect();
        assert_eq!(w, vec![2.0, 2.0, 4.0]);
        let same = denormalize_weights(rs.clone(), 4.0).unwrap();
        assert_eq!(same, rs);
        assert!(matches!(denormalize_weights(rs.clone(), 0.0), Err(Error::Argument(_))));
        assert!(matches!(denormalize_weights(rs, -1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn truncate_to_dhs_frame() {
        let rs = vec![
            rec("a", 1.0, 49, Sex::Female),
            rec("b", 1.0, 50, Sex::Female),
            rec("c", 1.0, 59, Sex::Male),
            rec("d", 1.0, 60, Sex::Male),
            rec("e", 1.0, 14, Sex::Male),
            rec("f", 1.0, 70, Sex::Female),
        ];
        let out = truncate_frame(rs.clone(), &AgeSexRule::dhs());
        let ids: Vec<&str> = out.iter().map(|r| r.respondent_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert_eq!(truncate_frame(rs.clone(), &AgeSexRule::uniform(0, 200)), rs);
        assert!(truncate_frame(rs, &AgeSexRule::uniform(0, 1)).is_empty());
    }

    const RESP: &str = "respondent_id,stratum_id,psu_id,weight,age,sex,tie_definition,kp_nurses,kp_teachers\n\
                        r1,s1,p1,1.5,30,female,meal,2,3\n\
                        r2,s1,p2,2.0,41,m,meal,0,1\n\
                        r3,s2,p3,1.0,19,F,meal,5,0\n";

    #[test]
    fn reads_respondents_without_deaths() {
        let rs = read_respondents(RESP.as_bytes()).unwrap();
        assert_eq!(rs.len(), 3);
        assert!(rs.iter().all(|r| r.death_reports.is_empty()));
        assert_eq!(rs[1].sex, Sex::Male);
        assert_eq!(rs[0].kp_total(), 5);
    }

    #[test]
    fn blank_death_age_is_incomplete() {
        let mut rs = read_respondents(RESP.as_bytes()).unwrap();
        let deaths = "respondent_id,death_age,death_sex\nr1,44,male\nr1,,female\nr3,22,\n";
        let (n, incomplete) = attach_deaths(&mut rs, deaths.as_bytes()).unwrap();
        assert_eq!((n, incomplete), (3, 2));
        assert_eq!(rs[0].death_reports.len(), 2);
        assert!(rs[0].death_reports[0].is_complete());
        assert_eq!(rs[0].death_reports[0].count_context, "meal");
        let scheme = GroupScheme::standard_adult();
        assert_eq!(rs[0].deaths_in_group(&scheme, scheme.index_of(44, Sex::Male).unwrap()), 1);
    }

    #[test]
    fn zero_weight_names_respondent() {
        let csv = "respondent_id,stratum_id,psu_id,weight,age,sex,tie_definition\nbad7,s,p,0,30,f,meal\n";
        match read_respondents(csv.as_bytes()) {
            Err(Error::Validation { id, .. }) => assert_eq!(id, "bad7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "respondent_id,stratum_id,weight,age,sex,tie_definition\nr,s,1,30,f,meal\n";
        match read_respondents(csv.as_bytes()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "psu_id"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_death_respondent_rejected() {
        let mut rs = read_respondents(RESP.as_bytes()).unwrap();
        let deaths = "respondent_id,death_age,death_sex\nzz,44,male\n";
        assert!(matches!(attach_deaths(&mut rs, deaths.as_bytes()), Err(Error::Validation { .. })));
    }

    #[test]
    fn kp_table_invariants() {
        let t = KnownPopulationTable::from_pairs([("a", 10), ("b", 5)]).unwrap();
        assert_eq!(t.total(), 15);
        assert_eq!(t.total_excluding("a"), 5);
        assert!(KnownPopulationTable::from_pairs([("a", 10), ("a", 5)]).is_err());
        assert!(KnownPopulationTable::from_pairs([("a", 0)]).is_err());
        let rs = read_respondents(RESP.as_bytes()).unwrap();
        assert!(check_kp_names(&rs, &t).is_err());
        let t2 = KnownPopulationTable::from_pairs([("nurses", 10), ("teachers", 5)]).unwrap();
        check_kp_names(&rs, &t2).unwrap();
    }

    #[test]
    fn config_topcode_default_and_null() {
        let c: SurveyConfig = serde_json::from_str(r#"{"age_breaks":[15,25]}"#).unwrap();
        assert_eq!(c.topcode_cap, Some(30));
        let c: SurveyConfig = serde_json::from_str(r#"{"age_breaks":[15,25],"topcode_cap":null}"#).unwrap();
        assert_eq!(c.topcode_cap, None);
    }
}
