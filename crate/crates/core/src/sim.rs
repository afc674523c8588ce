//! Synthetic populations with known networks, deaths and death reports.
//!
//! A world is a population of persons, an undirected multigraph of personal
//! ties, and a bipartite reporting graph of directed reports `i -> j` from
//! living frame members about people they say have died. Every estimand the
//! estimators target can be enumerated exactly from a world.
//!
//! Tie construction: frame members' ties to each other come from a
//! configuration model on their frame degrees; every other person (decedents
//! and living people outside the frame) attaches each of its ties to a
//! uniformly drawn frame member. A person's frame degree is therefore exactly
//! the number it drew, which lets the decedent degree multiplier set the
//! degree ratio directly.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::{
    AgeRange, AgeSexRule, DeathReport, GroupId, GroupScheme, KnownPopulation, KnownPopulationTable, RespondentRecord,
    Sex,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DegreeLaw {
    /// Every person gets the (rounded) mean.
    Constant,
    #[default]
    Poisson,
    /// Gamma-Poisson mixture; smaller `dispersion` means heavier tails.
    NegativeBinomial { dispersion: f64 },
}

/// Values per age bin, one vector per sex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSex<T> {
    pub female: Vec<T>,
    pub male: Vec<T>,
}

impl<T: Clone> PerSex<T> {
    pub fn uniform(value: T, bins: usize) -> Self {
        PerSex { female: vec![value.clone(); bins], male: vec![value; bins] }
    }

    /// Flattened in scheme group order (females first).
    pub fn flatten(&self) -> Vec<T> {
        self.female.iter().chain(&self.male).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownPopulationSpec {
    pub name: String,
    /// Membership probability (independent mode) or relative share (partition mode).
    pub share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MembershipMode {
    /// Each living person joins each known population independently.
    #[default]
    Independent,
    /// Every frame member belongs to exactly one known population and nobody
    /// else belongs to any, so the probe alters are exactly the frame.
    Partition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportingConfig {
    /// Probability that a tie to a decedent goes unreported.
    pub omission_prob: f64,
    /// Probability that a tie to a living person is reported as a death.
    pub false_positive_prob: f64,
    /// Scales decedents' mean degree.
    pub decedent_degree_multiplier: f64,
}

impl Default for ReportingConfig {
    fn default() -> Self {
        ReportingConfig { omission_prob: 0.0, false_positive_prob: 0.0, decedent_degree_multiplier: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsuLayout {
    pub strata: usize,
    pub psus_per_stratum: usize,
}

impl Default for PsuLayout {
    fn default() -> Self {
        PsuLayout { strata: 4, psus_per_stratum: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SampleDesign {
    #[default]
    Census,
    Srs {
        n: usize,
    },
    /// SRS of PSUs within each stratum, then SRS of persons within each PSU.
    TwoStage {
        psus_per_stratum: usize,
        persons_per_psu: usize,
    },
}

fn default_tie() -> String {
    "acquaintance".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub population_size: usize,
    /// Ages are drawn uniformly from this range.
    pub population_age_range: AgeRange,
    pub age_breaks: Vec<u32>,
    /// Defaults to the binned age range for both sexes.
    #[serde(default)]
    pub frame_age_range: Option<AgeSexRule>,
    /// Death probability per group over the reference period.
    pub death_rates: PerSex<f64>,
    pub mean_degree: PerSex<f64>,
    /// Mean degree of people outside every group; defaults to the average group mean.
    #[serde(default)]
    pub other_mean_degree: Option<f64>,
    #[serde(default)]
    pub degree_law: DegreeLaw,
    pub known_populations: Vec<KnownPopulationSpec>,
    #[serde(default)]
    pub membership: MembershipMode,
    /// Exponent tilting independent membership toward high-degree people.
    #[serde(default)]
    pub kp_degree_correlation: f64,
    #[serde(default)]
    pub reporting: ReportingConfig,
    #[serde(default)]
    pub layout: PsuLayout,
    #[serde(default = "default_tie")]
    pub tie_definition: String,
    /// Used by the `simulate` command to draw the survey extract.
    #[serde(default)]
    pub sample: SampleDesign,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn scheme(&self) -> Result<GroupScheme> {
        match self.frame_age_range {
            Some(rule) => GroupScheme::new(self.age_breaks.clone(), rule),
            None => GroupScheme::with_breaks(self.age_breaks.clone()),
        }
    }

    pub fn validate(&self) -> Result<GroupScheme> {
        let scheme = self.scheme()?;
        let bins = scheme.bins_per_sex();
        if self.population_size == 0 {
            return Err(Error::config("population_size must be positive"));
        }
        if self.population_age_range.max <= self.population_age_range.min {
            return Err(Error::config("population_age_range is empty"));
        }
        for (name, v) in [("death_rates", &self.death_rates), ("mean_degree", &self.mean_degree)] {
            if v.female.len() != bins || v.male.len() != bins {
                return Err(Error::config(format!("{name} needs {bins} values per sex")));
            }
        }
        if self.death_rates.flatten().iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("death rates must lie in [0,1]"));
        }
        let r = &self.reporting;
        if !(0.0..=1.0).contains(&r.omission_prob) || !(0.0..=1.0).contains(&r.false_positive_prob) {
            return Err(Error::config("reporting probabilities must lie in [0,1]"));
        }
        if !(r.decedent_degree_multiplier.is_finite() && r.decedent_degree_multiplier > 0.0) {
            return Err(Error::config("decedent_degree_multiplier must be positive"));
        }
        let cap = (self.population_size - 1) as f64;
        let means = self.mean_degree.flatten();
        for (k, &m) in means.iter().enumerate() {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::config(format!("mean degree for {} must be non-negative", scheme.group_at(k))));
            }
            let worst = m * r.decedent_degree_multiplier.max(1.0);
            if worst > cap {
                return Err(Error::config(format!(
                    "mean degree {worst} for {} exceeds population size - 1 = {cap}",
                    scheme.group_at(k)
                )));
            }
        }
        if let Some(m) = self.other_mean_degree {
            if !(m >= 0.0 && m <= cap) {
                return Err(Error::config(format!("other_mean_degree {m} is infeasible")));
            }
        }
        if let DegreeLaw::NegativeBinomial { dispersion } = self.degree_law {
            if !(dispersion > 0.0) {
                return Err(Error::config("negative binomial dispersion must be positive"));
            }
        }
        if self.known_populations.is_empty() {
            return Err(Error::config("at least one known population is required"));
        }
        for kp in &self.known_populations {
            let ok = match self.membership {
                MembershipMode::Independent => (0.0..=1.0).contains(&kp.share),
                MembershipMode::Partition => kp.share > 0.0,
            };
            if !ok {
                return Err(Error::config(format!("invalid share {} for `{}`", kp.share, kp.name)));
            }
        }
        if self.layout.strata == 0 || self.layout.psus_per_stratum == 0 {
            return Err(Error::config("layout needs at least one stratum and one PSU"));
        }
        Ok(scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub age: u32,
    pub sex: Sex,
    pub alive: bool,
    pub in_frame: bool,
    pub group: Option<usize>,
    pub stratum: u32,
    pub psu: u32,
    /// Indices into the world's known-population table.
    pub memberships: Vec<u16>,
}

impl Person {
    pub fn is_decedent(&self) -> bool {
        !self.alive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub reporter: u32,
    pub target: u32,
}

/// Exact per-group quantities of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTruth {
    pub group: GroupId,
    /// D_α
    pub deaths: u64,
    /// N_α: living persons in the group.
    pub exposure: u64,
    /// N_{F_α}
    pub frame_size: u64,
    /// M_α = D_α / N_α
    pub death_rate: Option<f64>,
    /// y_{F,D_α}: reports from the frame landing in the group.
    pub reports_total: u64,
    /// y⁺_{F,D_α}
    pub reports_true: u64,
    /// y⁻_{F,D_α}
    pub reports_false: u64,
    /// v_{D_α,F}: in-reports received by the group's decedents.
    pub visibility: u64,
    /// d_{D_α,F}
    pub decedent_frame_ties: u64,
    /// d_{F_α,F}
    pub frame_ties: u64,
    /// d_{F_α,𝒜}, ties counted once per membership of the alter.
    pub alter_ties: u64,
    /// y_{F_α,𝒜}; reports about known populations are truthful in the simulator.
    pub kp_reports: u64,
    /// N_F
    pub frame_total: u64,
    /// N_𝒜
    pub alters_total: u64,
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

impl GroupTruth {
    /// v̄_{D_α,F}
    pub fn mean_visibility(&self) -> Option<f64> {
        ratio(self.visibility, self.deaths)
    }

    /// d̄_{D_α,F}
    pub fn decedent_degree(&self) -> Option<f64> {
        ratio(self.decedent_frame_ties, self.deaths)
    }

    /// d̄_{F_α,F}
    pub fn frame_degree(&self) -> Option<f64> {
        ratio(self.frame_ties, self.frame_size)
    }

    /// d̄_{F_α,𝒜}
    pub fn alter_degree(&self) -> Option<f64> {
        ratio(self.alter_ties, self.frame_size)
    }

    /// The reduced estimator's census value, y_{F,D_α}/y_{F_α,𝒜} × N_𝒜/N_F.
    pub fn census_estimand(&self) -> Option<f64> {
        (self.kp_reports > 0 && self.frame_total > 0).then(|| {
            (self.reports_total as f64 / self.kp_reports as f64) * (self.alters_total as f64 / self.frame_total as f64)
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub scheme: GroupScheme,
    pub tie_definition: String,
    pub layout: PsuLayout,
    pub persons: Vec<Person>,
    pub ties: Vec<(u32, u32)>,
    pub reports: Vec<Report>,
    /// In-report count per person, tallied independently of `reports`
    /// ordering; [`verify_reporting_identity`] cross-checks the two.
    pub in_reports: Vec<u32>,
    pub known_populations: KnownPopulationTable,
    adjacency_offsets: Vec<usize>,
    adjacency: Vec<u32>,
    report_offsets: Vec<usize>,
    report_targets: Vec<u32>,
    /// Flat `person * J + j` table of connections to known population `j`.
    kp_counts: Vec<u32>,
    frame: Vec<u32>,
    truth: Vec<GroupTruth>,
}

fn csr(n: usize, pairs: impl Iterator<Item = (u32, u32)> + Clone) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; n + 1];
    for (a, _) in pairs.clone() {
        offsets[a as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut items = vec![0u32; offsets[n]];
    for (a, b) in pairs {
        items[fill[a as usize]] = b;
        fill[a as usize] += 1;
    }
    (offsets, items)
}

fn draw_degree(law: DegreeLaw, mean: f64, rng: &mut ChaCha8Rng) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    match law {
        DegreeLaw::Constant => mean.round() as u32,
        DegreeLaw::Poisson => Poisson::new(mean).expect("positive mean").sample(rng) as u32,
        DegreeLaw::NegativeBinomial { dispersion } => {
            let lambda = Gamma::new(dispersion, mean / dispersion).expect("valid gamma").sample(rng);
            if lambda <= 0.0 {
                0
            } else {
                Poisson::new(lambda).expect("positive rate").sample(rng) as u32
            }
        }
    }
}

/// Pairs stubs at random and rewires self-loops with degree-preserving swaps.
fn configuration_model(stubs: &mut [u32], rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    stubs.shuffle(rng);
    let mut edges: Vec<(u32, u32)> = stubs.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let loops: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].0 == edges[e].1).collect();
    let mut dropped = Vec::new();
    for e in loops {
        let u = edges[e].0;
        let mut fixed = false;
        for _ in 0..64 {
            let f = rng.random_range(0..edges.len());
            let (x, y) = edges[f];
            if f != e && x != u && y != u && x != y {
                edges[e] = (u, x);
                edges[f] = (u, y);
                fixed = true;
                break;
            }
        }
        if !fixed {
            dropped.push(e);
        }
    }
    // only reachable in tiny frames where no swap partner exists
    for e in dropped.into_iter().rev() {
        edges.swap_remove(e);
    }
    edges
}

pub fn generate_world(config: &SimConfig) -> Result<SyntheticWorld> {
    let scheme = config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rates = config.death_rates.flatten();
    let means = config.mean_degree.flatten();
    let other_mean = config.other_mean_degree.unwrap_or_else(|| means.iter().sum::<f64>() / means.len() as f64);
    let layout = config.layout;

    let mut persons: Vec<Person> = (0..config.population_size)
        .map(|_| {
            let age = rng.random_range(config.population_age_range.min..config.population_age_range.max);
            let sex = if rng.random_bool(0.5) { Sex::Female } else { Sex::Male };
            let group = scheme.index_of(age, sex);
            let alive = match group {
                Some(g) => !rng.random_bool(rates[g]),
                None => true,
            };
            Person {
                age,
                sex,
                alive,
                in_frame: alive && scheme.in_frame(age, sex),
                group,
                stratum: rng.random_range(0..layout.strata as u32),
                psu: rng.random_range(0..layout.psus_per_stratum as u32),
                memberships: Vec::new(),
            }
        })
        .collect();

    let mult = config.reporting.decedent_degree_multiplier;
    let degrees: Vec<u32> = persons
        .iter()
        .map(|p| {
            let base = p.group.map_or(other_mean, |g| means[g]);
            let mean = if p.alive { base } else { base * mult };
            draw_degree(config.degree_law, mean, &mut rng)
        })
        .collect();

    let frame: Vec<u32> = (0..persons.len() as u32).filter(|&i| persons[i as usize].in_frame).collect();
    let mut stubs: Vec<u32> =
        frame.iter().flat_map(|&i| std::iter::repeat_n(i, degrees[i as usize] as usize)).collect();
    if stubs.len() % 2 == 1 {
        let k = rng.random_range(0..stubs.len());
        stubs.swap_remove(k);
    }
    let mut ties = configuration_model(&mut stubs, &mut rng);
    for (i, p) in persons.iter().enumerate() {
        if p.in_frame || degrees[i] == 0 {
            continue;
        }
        if frame.is_empty() {
            return Err(Error::config("the frame is empty but outside persons need ties to it"));
        }
        for _ in 0..degrees[i] {
            let f = frame[rng.random_range(0..frame.len())];
            ties.push((i as u32, f));
        }
    }

    // Known-population memberships.
    let j_count = config.known_populations.len();
    match config.membership {
        MembershipMode::Partition => {
            let total: f64 = config.known_populations.iter().map(|k| k.share).sum();
            for &i in &frame {
                let mut u = rng.random::<f64>() * total;
                let mut chosen = j_count - 1;
                for (j, kp) in config.known_populations.iter().enumerate() {
                    if u < kp.share {
                        chosen = j;
                        break;
                    }
                    u -= kp.share;
                }
                persons[i as usize].memberships.push(chosen as u16);
            }
        }
        MembershipMode::Independent => {
            let living: Vec<usize> = (0..persons.len()).filter(|&i| persons[i].alive).collect();
            let mean_deg = living.iter().map(|&i| f64::from(degrees[i])).sum::<f64>() / living.len().max(1) as f64;
            for &i in &living {
                let tilt = if config.kp_degree_correlation == 0.0 || mean_deg == 0.0 {
                    1.0
                } else {
                    (f64::from(degrees[i]) / mean_deg).powf(config.kp_degree_correlation)
                };
                for (j, kp) in config.known_populations.iter().enumerate() {
                    if rng.random_bool((kp.share * tilt).clamp(0.0, 1.0)) {
                        persons[i].memberships.push(j as u16);
                    }
                }
            }
        }
    }
    let mut sizes = vec![0u64; j_count];
    for p in &persons {
        for &j in &p.memberships {
            sizes[j as usize] += 1;
        }
    }
    let known_populations = KnownPopulationTable::new(
        config
            .known_populations
            .iter()
            .zip(&sizes)
            .map(|(k, &size)| KnownPopulation { name: k.name.clone(), size })
            .collect(),
    )
    .map_err(|e| Error::config(format!("realized known populations are invalid: {e}")))?;

    // Reports: each frame endpoint of a tie may report the other end.
    let omit = config.reporting.omission_prob;
    let fp = config.reporting.false_positive_prob;
    let mut reports = Vec::new();
    for &(a, b) in &ties {
        for (r, t) in [(a, b), (b, a)] {
            let (rp, tp) = (&persons[r as usize], &persons[t as usize]);
            if !rp.in_frame || r == t {
                continue;
            }
            let report = if tp.is_decedent() {
                omit < 1.0 && (omit == 0.0 || !rng.random_bool(omit))
            } else {
                tp.group.is_some() && fp > 0.0 && rng.random_bool(fp)
            };
            if report {
                reports.push(Report { reporter: r, target: t });
            }
        }
    }
    let mut in_reports = vec![0u32; persons.len()];
    for rep in &reports {
        in_reports[rep.target as usize] += 1;
    }

    let n = persons.len();
    let (adjacency_offsets, adjacency) =
        csr(n, ties.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).filter(|&(a, b)| a != b || a == b));
    let (report_offsets, report_targets) = csr(n, reports.iter().map(|r| (r.reporter, r.target)));

    let mut kp_counts = vec![0u32; n * j_count];
    for &i in &frame {
        let i = i as usize;
        for &nb in &adjacency[adjacency_offsets[i]..adjacency_offsets[i + 1]] {
            for &j in &persons[nb as usize].memberships {
                kp_counts[i * j_count + j as usize] += 1;
            }
        }
    }

    let mut world = SyntheticWorld {
        scheme,
        tie_definition: config.tie_definition.clone(),
        layout,
        persons,
        ties,
        reports,
        in_reports,
        known_populations,
        adjacency_offsets,
        adjacency,
        report_offsets,
        report_targets,
        kp_counts,
        frame,
        truth: Vec::new(),
    };
    world.truth = (0..world.scheme.len()).map(|g| world.enumerate_truth(g)).collect();
    Ok(world)
}

impl SyntheticWorld {
    pub fn frame(&self) -> &[u32] {
        &self.frame
    }

    pub fn frame_total(&self) -> u64 {
        self.frame.len() as u64
    }

    pub fn neighbors(&self, person: usize) -> &[u32] {
        &self.adjacency[self.adjacency_offsets[person]..self.adjacency_offsets[person + 1]]
    }

    pub fn reported_targets(&self, person: usize) -> &[u32] {
        &self.report_targets[self.report_offsets[person]..self.report_offsets[person + 1]]
    }

    pub fn kp_counts(&self, person: usize) -> &[u32] {
        let j = self.known_populations.len();
        &self.kp_counts[person * j..(person + 1) * j]
    }

    /// Ties from `person` to living frame members.
    pub fn frame_degree(&self, person: usize) -> u64 {
        self.neighbors(person).iter().filter(|&&n| self.persons[n as usize].in_frame).count() as u64
    }

    pub fn truth(&self) -> &[GroupTruth] {
        &self.truth
    }

    fn enumerate_truth(&self, g: usize) -> GroupTruth {
        let group = self.scheme.group_at(g);
        let mut t = GroupTruth {
            group,
            deaths: 0,
            exposure: 0,
            frame_size: 0,
            death_rate: None,
            reports_total: 0,
            reports_true: 0,
            reports_false: 0,
            visibility: 0,
            decedent_frame_ties: 0,
            frame_ties: 0,
            alter_ties: 0,
            kp_reports: 0,
            frame_total: self.frame_total(),
            alters_total: self.known_populations.total(),
        };
        for (i, p) in self.persons.iter().enumerate().filter(|(_, p)| p.group == Some(g)) {
            if p.is_decedent() {
                t.deaths += 1;
                t.visibility += u64::from(self.in_reports[i]);
                t.decedent_frame_ties += self.frame_degree(i);
            } else {
                t.exposure += 1;
            }
            if p.in_frame {
                t.frame_size += 1;
                t.frame_ties += self.frame_degree(i);
                let kp: u64 = self.kp_counts(i).iter().map(|&c| u64::from(c)).sum();
                t.alter_ties += kp;
                t.kp_reports += kp;
            }
        }
        for r in &self.reports {
            let target = &self.persons[r.target as usize];
            if target.group == Some(g) {
                t.reports_total += 1;
                if target.is_decedent() {
                    t.reports_true += 1;
                } else {
                    t.reports_false += 1;
                }
            }
        }
        t.death_rate = ratio(t.deaths, t.exposure);
        t
    }
}

/// Exact quantities for one group, enumerated from the world.
pub fn true_quantities(world: &SyntheticWorld, group: &GroupId) -> Result<GroupTruth> {
    let g = world
        .scheme
        .index_of_group(group)
        .ok_or_else(|| Error::argument(format!("group {group} is not part of the scheme")))?;
    Ok(world.enumerate_truth(g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityDiscrepancy {
    pub group: GroupId,
    /// True-positive out-reports counted at their reporters.
    pub true_out_reports: u64,
    /// In-reports counted at the group's decedents.
    pub in_reports: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub holds: bool,
    pub discrepancies: Vec<IdentityDiscrepancy>,
}

/// Recounts true-positive out-reports (walking reporters' report lists) and
/// decedents' in-reports (from the per-person tally) for every group.
pub fn verify_reporting_identity(world: &SyntheticWorld) -> IdentityCheck {
    let groups = world.scheme.len();
    let mut out = vec![0u64; groups];
    let mut inc = vec![0u64; groups];
    for &r in &world.frame {
        for &t in world.reported_targets(r as usize) {
            let p = &world.persons[t as usize];
            if let (true, Some(g)) = (p.is_decedent(), p.group) {
                out[g] += 1;
            }
        }
    }
    for (i, p) in world.persons.iter().enumerate() {
        if let (true, Some(g)) = (p.is_decedent(), p.group) {
            inc[g] += u64::from(world.in_reports[i]);
        }
    }
    let discrepancies: Vec<IdentityDiscrepancy> = (0..groups)
        .filter(|&g| out[g] != inc[g])
        .map(|g| IdentityDiscrepancy { group: world.scheme.group_at(g), true_out_reports: out[g], in_reports: inc[g] })
        .collect();
    IdentityCheck { holds: discrepancies.is_empty(), discrepancies }
}

#[derive(Debug, Clone)]
pub struct SurveySample {
    pub records: Vec<RespondentRecord>,
    /// World index of each respondent.
    pub persons: Vec<usize>,
    /// True design weights 1/π_i (records may carry perturbed weights).
    pub design_weights: Vec<f64>,
}

fn respondent(world: &SyntheticWorld, i: usize, weight: f64) -> RespondentRecord {
    let p = &world.persons[i];
    let names = world.known_populations.entries();
    let counts = world.kp_counts(i);
    RespondentRecord {
        respondent_id: format!("p{i}"),
        stratum_id: format!("s{}", p.stratum),
        psu_id: format!("s{}c{}", p.stratum, p.psu),
        weight,
        age: p.age,
        sex: p.sex,
        tie_definition: world.tie_definition.clone(),
        death_reports: world
            .reported_targets(i)
            .iter()
            .map(|&t| {
                let target = &world.persons[t as usize];
                DeathReport::complete(target.age, target.sex, world.tie_definition.clone())
            })
            .collect(),
        kp_connections: names.iter().zip(counts).map(|(e, &c)| (e.name.clone(), c)).collect::<BTreeMap<_, _>>(),
    }
}

fn select(world: &SyntheticWorld, design: &SampleDesign, seed: u64) -> Result<Vec<(usize, f64)>> {
    let frame = &world.frame;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *design {
        SampleDesign::Census => Ok(frame.iter().map(|&i| (i as usize, 1.0)).collect()),
        SampleDesign::Srs { n } => {
            let big_n = frame.len();
            if n == 0 || n > big_n {
                return Err(Error::argument(format!("SRS size {n} is not within 1..={big_n}")));
            }
            let w = big_n as f64 / n as f64;
            let mut picked: Vec<usize> = index::sample(&mut rng, big_n, n).into_iter().collect();
            picked.sort_unstable();
            Ok(picked.into_iter().map(|k| (frame[k] as usize, w)).collect())
        }
        SampleDesign::TwoStage { psus_per_stratum, persons_per_psu } => {
            let layout = world.layout;
            if psus_per_stratum == 0 || psus_per_stratum > layout.psus_per_stratum || persons_per_psu == 0 {
                return Err(Error::argument(format!(
                    "cannot draw {psus_per_stratum} of {} PSUs with {persons_per_psu} persons each",
                    layout.psus_per_stratum
                )));
            }
            let mut members = vec![Vec::new(); layout.strata * layout.psus_per_stratum];
            for &i in frame {
                let p = &world.persons[i as usize];
                members[p.stratum as usize * layout.psus_per_stratum + p.psu as usize].push(i as usize);
            }
            let mut out = Vec::new();
            for h in 0..layout.strata {
                let mut psus: Vec<usize> =
                    index::sample(&mut rng, layout.psus_per_stratum, psus_per_stratum).into_iter().collect();
                psus.sort_unstable();
                let p1 = psus_per_stratum as f64 / layout.psus_per_stratum as f64;
                for c in psus {
                    let pool = &members[h * layout.psus_per_stratum + c];
                    if pool.is_empty() {
                        continue;
                    }
                    let k = persons_per_psu.min(pool.len());
                    let p2 = k as f64 / pool.len() as f64;
                    let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), k).into_iter().collect();
                    picked.sort_unstable();
                    out.extend(picked.into_iter().map(|q| (pool[q], 1.0 / (p1 * p2))));
                }
            }
            Ok(out)
        }
    }
}

/// Draws a survey of living frame members with their true design weights.
pub fn draw_sample(world: &SyntheticWorld, design: &SampleDesign, seed: u64) -> Result<SurveySample> {
    let picked = select(world, design, seed)?;
    Ok(SurveySample {
        records: picked.iter().map(|&(i, w)| respondent(world, i, w)).collect(),
        persons: picked.iter().map(|&(i, _)| i).collect(),
        design_weights: picked.iter().map(|&(_, w)| w).collect(),
    })
}

/// Like [`draw_sample`], but records carry imperfect weights
/// `w'_i = ε_i w_i` (ε_i = π_i / π'_i), with `epsilon` indexed by person.
pub fn draw_sample_with_weight_error(
    world: &SyntheticWorld,
    design: &SampleDesign,
    seed: u64,
    epsilon: &[f64],
) -> Result<SurveySample> {
    if epsilon.len() != world.persons.len() {
        return Err(Error::argument("epsilon must have one entry per person"));
    }
    if epsilon.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::argument("epsilon values must be positive"));
    }
    let mut sample = draw_sample(world, design, seed)?;
    for (r, &i) in sample.records.iter_mut().zip(&sample.persons) {
        r.weight *= epsilon[i];
    }
    Ok(sample)
}
