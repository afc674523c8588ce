#![allow(dead_code)]

use netsurv::sim::{
    DegreeLaw, KnownPopulationSpec, MembershipMode, PerSex, PsuLayout, ReportingConfig, SampleDesign, SimConfig,
};
use netsurv::survey::AgeRange;

pub const BREAKS: [u32; 6] = [15, 25, 35, 45, 55, 65];

/// Death probabilities per person in the 3 to 20 per 1,000 range.
pub fn adult_rates() -> PerSex<f64> {
    PerSex { female: vec![0.003, 0.004, 0.006, 0.009, 0.014], male: vec![0.004, 0.006, 0.009, 0.013, 0.020] }
}

fn kp_specs(shares: &[f64]) -> Vec<KnownPopulationSpec> {
    shares.iter().enumerate().map(|(j, &share)| KnownPopulationSpec { name: format!("kp{j}"), share }).collect()
}

/// A world in which every condition of the reduced estimator holds exactly:
/// equal even degrees, probe alters that partition the frame, truthful
/// reporting, no degree gap for decedents and a frame covering every group.
pub fn enforced(population: usize, degree: f64, seed: u64) -> SimConfig {
    SimConfig {
        population_size: population,
        population_age_range: AgeRange::new(15, 65),
        age_breaks: BREAKS.to_vec(),
        frame_age_range: None,
        death_rates: adult_rates(),
        mean_degree: PerSex::uniform(degree, 5),
        other_mean_degree: None,
        degree_law: DegreeLaw::Constant,
        known_populations: kp_specs(&[0.1, 0.15, 0.2, 0.25, 0.3]),
        membership: MembershipMode::Partition,
        kp_degree_correlation: 0.0,
        reporting: ReportingConfig::default(),
        layout: PsuLayout { strata: 8, psus_per_stratum: 30 },
        tie_definition: "acquaintance".into(),
        sample: SampleDesign::Census,
        seed,
    }
}

/// A messier world: Poisson degrees, independent memberships, people outside
/// the groups, and the given reporting errors.
pub fn messy(population: usize, seed: u64, mean_degree: f64, reporting: ReportingConfig) -> SimConfig {
    SimConfig {
        population_size: population,
        population_age_range: AgeRange::new(0, 80),
        age_breaks: BREAKS.to_vec(),
        frame_age_range: None,
        death_rates: PerSex { female: vec![0.02, 0.03, 0.04, 0.06, 0.09], male: vec![0.03, 0.04, 0.06, 0.08, 0.12] },
        mean_degree: PerSex { female: vec![mean_degree; 5], male: vec![mean_degree * 1.2; 5] },
        other_mean_degree: Some(mean_degree * 0.5),
        degree_law: DegreeLaw::Poisson,
        known_populations: kp_specs(&[0.05, 0.1, 0.02]),
        membership: MembershipMode::Independent,
        kp_degree_correlation: 0.0,
        reporting,
        layout: PsuLayout { strata: 3, psus_per_stratum: 6 },
        tie_definition: "acquaintance".into(),
        sample: SampleDesign::Census,
        seed,
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
