//! Sensitivity of network survival estimates to the conditions behind them.
//!
//! The estimate is linked to the true rate by a product of adjustment
//! factors: the degree ratio δ, true positive rate τ and precision η for the
//! death reports; c1..c4 for the known-population and frame conditions; and
//! the imperfect sampling indices K1 (death reports) and K2 (probe alter
//! reports). [`apply_sensitivity`] inverts that link.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{GroupTruth, SyntheticWorld};
use crate::survey::GroupId;

/// Grid values used when none are supplied.
pub const DEFAULT_GRID: [f64; 3] = [0.5, 1.0, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentFactors {
    /// d̄_{D_α,F} / d̄_{F_α,F}
    pub delta: f64,
    /// v̄_{D_α,F} / d̄_{D_α,F}
    pub tau: f64,
    /// y⁺_{F,D_α} / y_{F,D_α}
    pub eta: f64,
    /// N̂_𝒜 / N_𝒜
    pub c1: f64,
    /// d̄_{𝒜,F_α} / d̄_{F,F_α}
    pub c2: f64,
    /// y_{F_α,𝒜} / d_{F_α,𝒜}
    pub c3: f64,
    /// N_α / N_{F_α}
    pub c4: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for AdjustmentFactors {
    fn default() -> Self {
        AdjustmentFactors { delta: 1.0, tau: 1.0, eta: 1.0, c1: 1.0, c2: 1.0, c3: 1.0, c4: 1.0, k1: 0.0, k2: 0.0 }
    }
}

impl AdjustmentFactors {
    /// Factors for one cell of a (δ, η/τ) grid. Ratios above one are carried
    /// by τ and ratios below one by η, keeping both within (0, 1].
    pub fn from_grid(delta: f64, eta_over_tau: f64) -> Self {
        let (eta, tau) = if eta_over_tau >= 1.0 { (1.0, 1.0 / eta_over_tau) } else { (eta_over_tau, 1.0) };
        AdjustmentFactors { delta, tau, eta, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta", self.delta),
            ("tau", self.tau),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::argument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau > 1.0 {
            return Err(Error::argument(format!("tau must be at most 1, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::argument(format!("eta must lie in [0,1], got {}", self.eta)));
        }
        for (name, k) in [("K1", self.k1), ("K2", self.k2)] {
            if !(k.is_finite() && k > -1.0) {
                return Err(Error::argument(format!("{name} must exceed -1, got {k}")));
            }
        }
        Ok(())
    }

    /// Factor that turns an estimate into the implied true rate.
    pub fn multiplier(&self) -> Result<f64> {
        self.validate()?;
        Ok((self.c2 * self.c3 / self.c1)
            * (1.0 / self.c4)
            * (self.eta / self.tau / self.delta)
            * ((1.0 + self.k2) / (1.0 + self.k1)))
    }

    /// Componentwise product; the K indices compose through `1 + K`.
    pub fn compose(&self, other: &AdjustmentFactors) -> AdjustmentFactors {
        AdjustmentFactors {
            delta: self.delta * other.delta,
            tau: self.tau * other.tau,
            eta: self.eta * other.eta,
            c1: self.c1 * other.c1,
            c2: self.c2 * other.c2,
            c3: self.c3 * other.c3,
            c4: self.c4 * other.c4,
            k1: (1.0 + self.k1) * (1.0 + other.k1) - 1.0,
            k2: (1.0 + self.k2) * (1.0 + other.k2) - 1.0,
        }
    }
}

/// The true death rate implied by `m_hat` under `factors`.
pub fn apply_sensitivity(m_hat: f64, factors: &AdjustmentFactors) -> Result<f64> {
    Ok(m_hat * factors.multiplier()?)
}

/// Exact factors of one group of a synthetic world. Ratios whose
/// denominator is zero are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueAdjustment {
    pub group: GroupId,
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
}

impl TrueAdjustment {
    /// Names of the factors that are undefined for this group.
    pub fn missing(&self) -> Vec<&'static str> {
        [("delta", self.delta), ("tau", self.tau), ("eta", self.eta), ("c2", self.c2), ("c3", self.c3), ("c4", self.c4)]
            .into_iter()
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| n)
            .collect()
    }

    /// Complete factor set, if every factor is defined and valid.
    pub fn factors(&self) -> Option<AdjustmentFactors> {
        let f = AdjustmentFactors {
            delta: self.delta?,
            tau: self.tau?,
            eta: self.eta?,
            c2: self.c2?,
            c3: self.c3?,
            c4: self.c4?,
            ..Default::default()
        };
        f.validate().ok().map(|_| f)
    }
}

fn div(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| a / b)
}

pub fn adjustment_from_truth(world: &SyntheticWorld, group: &GroupId) -> Result<TrueAdjustment> {
    let t = crate::sim::true_quantities(world, group)?;
    Ok(adjustment_from_group_truth(&t))
}

pub fn adjustment_from_group_truth(t: &GroupTruth) -> TrueAdjustment {
    let n_alters = t.alters_total as f64;
    let n_f = t.frame_total as f64;
    // d̄_{𝒜,F_α} / d̄_{F,F_α}, using d_{𝒜,F_α} = d_{F_α,𝒜} and d_{F,F_α} = d_{F_α,F}
    let c2 = div(t.alter_ties as f64 / n_alters, t.frame_ties as f64 / n_f).filter(|_| n_alters > 0.0 && n_f > 0.0);
    TrueAdjustment {
        group: t.group,
        delta: t.decedent_degree().zip(t.frame_degree()).and_then(|(d, f)| div(d, f)),
        tau: t.mean_visibility().zip(t.decedent_degree()).and_then(|(v, d)| div(v, d)),
        eta: div(t.reports_true as f64, t.reports_total as f64),
        c2,
        c3: div(t.kp_reports as f64, t.alter_ties as f64),
        c4: div(t.exposure as f64, t.frame_size as f64),
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// K = cv(ε)·cv(y)·cor(ε, y) with population standard deviations, which
/// reduces to cov(ε, y) / (mean(ε)·mean(y)).
pub fn imperfect_sampling_index(epsilons: &[f64], values: &[f64]) -> Result<f64> {
    if epsilons.len() != values.len() {
        return Err(Error::argument("epsilons and values differ in length"));
    }
    if epsilons.len() < 2 {
        return Err(Error::argument("need at least two units"));
    }
    let (me, my) = (mean(epsilons), mean(values));
    if !(me > 0.0 && my > 0.0) {
        return Err(Error::argument("epsilons and values need positive means"));
    }
    let n = epsilons.len() as f64;
    let cov = epsilons.iter().zip(values).map(|(e, y)| (e - me) * (y - my)).sum::<f64>() / n;
    Ok(cov / (me * my))
}

/// One (δ, η/τ) cell of a robustness grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub delta: f64,
    pub eta_over_tau: f64,
    pub rates: Vec<(GroupId, f64)>,
}

/// Adjusted rates for every cell of `delta_grid × eta_over_tau_grid`, in
/// row-major order over δ.
pub fn sensitivity_grid(
    rates: &[(GroupId, f64)],
    delta_grid: &[f64],
    eta_over_tau_grid: &[f64],
) -> Result<Vec<GridCell>> {
    for &v in delta_grid.iter().chain(eta_over_tau_grid) {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::argument(format!("grid values must be positive, got {v}")));
        }
    }
    let cells: Vec<(f64, f64)> =
        delta_grid.iter().flat_map(|&d| eta_over_tau_grid.iter().map(move |&r| (d, r))).collect();
    cells
        .into_par_iter()
        .map(|(delta, eta_over_tau)| {
            let f = AdjustmentFactors::from_grid(delta, eta_over_tau);
            let rates = rates.iter().map(|&(g, m)| apply_sensitivity(m, &f).map(|a| (g, a))).collect::<Result<_>>()?;
            Ok(GridCell { delta, eta_over_tau, rates })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::Sex;

    #[test]
    fn defaults_are_identity() {
        assert_eq!(apply_sensitivity(0.0123, &AdjustmentFactors::default()).unwrap(), 0.0123);
    }

    #[test]
    fn worked_example_triples() {
        let f = AdjustmentFactors::from_grid(0.5, 1.5);
        assert_eq!(f.multiplier().unwrap(), 3.0);
    }

    #[test]
    fn invalid_factors_rejected() {
        for f in [
            AdjustmentFactors { tau: 0.0, ..Default::default() },
            AdjustmentFactors { delta: -1.0, ..Default::default() },
            AdjustmentFactors { c3: 0.0, ..Default::default() },
            AdjustmentFactors { k1: -1.0, ..Default::default() },
        ] {
            assert!(matches!(apply_sensitivity(1.0, &f), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn composition_matches_sequential_application() {
        let a = AdjustmentFactors { delta: 0.8, tau: 0.9, eta: 0.95, c2: 1.1, k1: 0.05, ..Default::default() };
        let b = AdjustmentFactors { delta: 1.2, c1: 0.9, c4: 1.05, k2: -0.1, ..Default::default() };
        let seq = apply_sensitivity(apply_sensitivity(0.01, &a).unwrap(), &b).unwrap();
        let once = apply_sensitivity(0.01, &a.compose(&b)).unwrap();
        assert!((seq - once).abs() <= 1e-15 * seq.abs());
    }

    #[test]
    fn k_index_examples() {
        assert_eq!(imperfect_sampling_index(&[2.0, 2.0, 2.0], &[1.0, 5.0, 9.0]).unwrap(), 0.0);
        let k = imperfect_sampling_index(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!((k - 1.0 / 9.0).abs() < 1e-15);
        let k = imperfect_sampling_index(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert!((k + 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(imperfect_sampling_index(&[1.0, 3.0], &[4.0, 4.0]).unwrap(), 0.0);
        assert!(imperfect_sampling_index(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn grid_shape_center_and_corner() {
        let g = GroupId { sex: Sex::Male, lower: 15, upper: 25 };
        let rates = vec![(g, 0.004)];
        let grid = sensitivity_grid(&rates, &DEFAULT_GRID, &DEFAULT_GRID).unwrap();
        assert_eq!(grid.len(), 9);
        let center = grid.iter().find(|c| c.delta == 1.0 && c.eta_over_tau == 1.0).unwrap();
        assert_eq!(center.rates, rates);
        let corner = grid.iter().find(|c| c.delta == 0.5 && c.eta_over_tau == 1.5).unwrap();
        assert_eq!(corner.rates[0].1, 0.004 * 3.0);
        assert!(sensitivity_grid(&rates, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn grid_monotone() {
        let g = GroupId { sex: Sex::Female, lower: 25, upper: 35 };
        let grid = sensitivity_grid(&[(g, 0.01)], &DEFAULT_GRID, &DEFAULT_GRID).unwrap();
        let at = |d: f64, r: f64| grid.iter().find(|c| c.delta == d && c.eta_over_tau == r).unwrap().rates[0].1;
        for &d in &DEFAULT_GRID {
            assert!(at(d, 0.5) < at(d, 1.0) && at(d, 1.0) < at(d, 1.5));
        }
        for &r in &DEFAULT_GRID {
            assert!(at(0.5, r) > at(1.0, r) && at(1.0, r) > at(1.5, r));
        }
    }

    fn truth(deaths: u64, decedent_ties: u64, visibility: u64, y: u64, y_plus: u64) -> GroupTruth {
        GroupTruth {
            group: GroupId { sex: Sex::Female, lower: 15, upper: 25 },
            deaths,
            exposure: 10,
            frame_size: 10,
            death_rate: Some(deaths as f64 / 10.0),
            reports_total: y,
            reports_true: y_plus,
            reports_false: y - y_plus,
            visibility,
            decedent_frame_ties: decedent_ties,
            frame_ties: 20,
            alter_ties: 20,
            kp_reports: 20,
            frame_total: 10,
            alters_total: 10,
        }
    }

    #[test]
    fn hand_graph_decomposition() {
        // one death with two frame ties: one reported, one omitted, plus a false positive
        let t = truth(1, 2, 1, 2, 1);
        let a = adjustment_from_group_truth(&t);
        assert_eq!(a.eta, Some(0.5));
        assert_eq!(a.tau, Some(0.5));
        assert_eq!(a.delta, Some(1.0));
        let d_bar_f = t.frame_degree().unwrap();
        let d = (t.reports_total as f64 / d_bar_f) / a.delta.unwrap() * (a.eta.unwrap() / a.tau.unwrap());
        assert_eq!(d, 1.0);
    }

    #[test]
    fn zero_deaths_leave_factors_missing() {
        let a = adjustment_from_group_truth(&truth(0, 0, 0, 0, 0));
        assert_eq!(a.missing(), vec!["delta", "tau", "eta"]);
        assert!(a.factors().is_none());
    }
}
