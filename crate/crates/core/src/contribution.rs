//! A player's share of a path's flow, how load deviations move that share,
//! and the resulting FTR quantity bounds and risk-adjusted profit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    distribution_factor, slack_distribution_factor, update_slack_factor, DispatchEstimate, FtrPath, NetworkModel,
    SensitivityMatrices, ShiftFactors,
};
use crate::risk::{sign_partition, worst_case_weights, Chance, LoadDeviationModel, LoadEffect, RedispatchResponse, Weights};

/// Generator output changes below this do not move any share, MW.
const PERTURBATION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FtrKind {
    Obligation,
    Option,
}

impl FtrKind {
    pub const ALL: [FtrKind; 2] = [FtrKind::Obligation, FtrKind::Option];

    pub fn label(&self) -> &'static str {
        match self {
            FtrKind::Obligation => "obligation",
            FtrKind::Option => "option",
        }
    }
}

/// MW of `branch` flow attributed to generator `gen`.
pub fn player_share(sens: &SensitivityMatrices, dispatch: &DispatchEstimate, gen: usize, path: &FtrPath) -> f64 {
    distribution_factor(sens, gen, path.branch) * dispatch.gen_output[gen]
}

/// Sensitivity of player `player`'s share on `path` when generator `gen`
/// moves by `delta` MW to serve load `load`, from the finite difference
/// of the slack factor. When the player is the moving generator its own
/// output change is added on top.
#[allow(clippy::too_many_arguments)]
pub fn share_sensitivity(
    net: &NetworkModel,
    shift: &ShiftFactors,
    sens: &SensitivityMatrices,
    dispatch: &DispatchEstimate,
    player: usize,
    gen: usize,
    load: usize,
    path: &FtrPath,
    delta: f64,
) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::ZeroPerturbation);
    }
    let now = slack_distribution_factor(net, shift, dispatch, path.branch)?;
    let next = update_slack_factor(net, shift, dispatch, path.branch, gen, load, delta)?.value;
    let mut eta = (next - now) / delta * dispatch.gen_output[player];
    if player == gen {
        eta += distribution_factor(sens, player, path.branch);
    }
    Ok(eta)
}

/// Expected share changes for one load: per generator, then summed.
#[derive(Debug, Clone, Serialize)]
pub struct ShareChange {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl ShareChange {
    pub fn aggregate(&self) -> LoadEffect {
        LoadEffect {
            up: self.up.iter().sum(),
            down: self.down.iter().sum(),
        }
    }
}

/// `eta_up[j]`/`eta_down[j]` are the sensitivities evaluated at the
/// increment and decrement responses of generator `j`.
pub fn expected_share_change(
    eta_up: &[f64],
    eta_down: &[f64],
    omega_up: f64,
    omega_down: f64,
    response: &RedispatchResponse,
) -> ShareChange {
    ShareChange {
        up: eta_up.iter().zip(&response.up).map(|(e, p)| omega_up * e * p).collect(),
        down: eta_down.iter().zip(&response.down).map(|(e, p)| omega_down * e * p).collect(),
    }
}

/// Same worst-case construction as for line flows, on share changes.
pub fn share_worst_case_weights(changes: &[LoadEffect], share: f64) -> Result<Weights> {
    worst_case_weights(changes, share)
}

/// (forward, reverse) contribution potentials; reverse stays signed.
pub fn contribution_potentials(influence: &[f64]) -> (f64, f64) {
    sign_partition(influence)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtrBounds {
    pub min: f64,
    pub max: f64,
}

pub fn ftr_bounds(share: f64, fcp: f64, rcp: f64) -> FtrBounds {
    FtrBounds {
        min: share - rcp.abs(),
        max: share + fcp,
    }
}

/// Net expected drift of the share: `FCP - |RCP|`.
fn drift(fcp: f64, rcp: f64) -> f64 {
    fcp - rcp.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignedFtr {
    /// Quantity that earns the spread.
    pub positive: f64,
    /// Quantity that is paid for.
    pub negative: f64,
}

pub fn signed_ftrs(ftr: f64, fcp: f64, rcp: f64) -> SignedFtr {
    let g = drift(fcp, rcp);
    SignedFtr {
        positive: ftr - g.max(0.0),
        negative: ftr - g.min(0.0),
    }
}

/// Profit of holding `ftr` MW bought at `price`, charged for expected
/// extra flow when the share drifts up and for unused MW when it drifts
/// down.
pub fn risk_adjusted_profit(ftr: f64, fcp: f64, rcp: f64, spread: f64, price: f64) -> f64 {
    let s = signed_ftrs(ftr, fcp, rcp);
    s.positive * spread - s.negative * price
}

/// Obligations are only worth holding when the flow is more likely to
/// keep its direction than to reverse; exact ties count as "not".
pub fn obligation_allowed(chance: Chance) -> bool {
    chance.forward > chance.reverse
}

/// Path-level data a player's objective needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathTerms {
    pub chance: Chance,
    pub spread: f64,
    pub fcp: f64,
    pub rcp: f64,
}

impl PathTerms {
    /// Value per MW of the positive FTR for the given kind.
    pub fn unit_value(&self, kind: FtrKind) -> f64 {
        match kind {
            FtrKind::Obligation => {
                if obligation_allowed(self.chance) {
                    self.chance.margin * self.spread
                } else {
                    0.0
                }
            }
            FtrKind::Option => self.chance.forward * self.spread,
        }
    }
}

/// One path's term of a player's objective for an awarded quantity.
pub fn path_profit(kind: FtrKind, award: f64, bid: f64, terms: &PathTerms) -> f64 {
    if kind == FtrKind::Obligation && !obligation_allowed(terms.chance) {
        return 0.0;
    }
    let s = signed_ftrs(award, terms.fcp, terms.rcp);
    terms.unit_value(kind) * s.positive - bid * s.negative
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathDecision {
    pub kind: FtrKind,
    pub award: f64,
    pub bid: f64,
}

/// A player's objective summed over paths.
pub fn player_objective(decisions: &[PathDecision], terms: &[PathTerms]) -> f64 {
    decisions
        .iter()
        .zip(terms)
        .map(|(d, t)| path_profit(d.kind, d.award, d.bid, t))
        .sum()
}

/// Contribution pipeline output for one (player, path).
#[derive(Debug, Clone, Serialize)]
pub struct ContributionMetrics {
    pub player: usize,
    pub path: usize,
    pub share: f64,
    /// Aggregated expected share change per load.
    pub changes: Vec<LoadEffect>,
    pub weights: Weights,
    /// Weighted influence per load, MW.
    pub influence: Vec<f64>,
    pub fcp: f64,
    pub rcp: f64,
    pub bounds: FtrBounds,
}

#[allow(clippy::too_many_arguments)]
pub fn assess_contribution(
    net: &NetworkModel,
    shift: &ShiftFactors,
    sens: &SensitivityMatrices,
    dispatch: &DispatchEstimate,
    responses: &[RedispatchResponse],
    model: &LoadDeviationModel,
    player: usize,
    path_index: usize,
    path: &FtrPath,
) -> Result<ContributionMetrics> {
    let share = player_share(sens, dispatch, player, path);
    let ng = net.generators.len();
    let eta_at = |gen: usize, load: usize, delta: f64| -> Result<f64> {
        if delta.abs() < PERTURBATION_FLOOR {
            return Ok(0.0);
        }
        share_sensitivity(net, shift, sens, dispatch, player, gen, load, path, delta)
    };
    let mut changes = Vec::with_capacity(responses.len());
    for resp in responses {
        let d = resp.load;
        let eta_up = (0..ng).map(|j| eta_at(j, d, resp.up[j])).collect::<Result<Vec<_>>>()?;
        let eta_down = (0..ng).map(|j| eta_at(j, d, resp.down[j])).collect::<Result<Vec<_>>>()?;
        let change = expected_share_change(&eta_up, &eta_down, model.omega_up[d], model.omega_down(d), resp);
        changes.push(change.aggregate());
    }
    let weights = share_worst_case_weights(&changes, share)?;
    let influence: Vec<f64> = changes.iter().zip(&weights.values).map(|(c, w)| w * c.total()).collect();
    let (fcp, rcp) = contribution_potentials(&influence);
    Ok(ContributionMetrics {
        player,
        path: path_index,
        share,
        changes,
        weights,
        influence,
        fcp,
        rcp,
        bounds: ftr_bounds(share, fcp, rcp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn expected_change_substitution() {
        let resp = RedispatchResponse {
            load: 0,
            up: vec![2.0],
            down: vec![-2.0],
        };
        let c = expected_share_change(&[0.5], &[0.5], 0.5, 0.5, &resp);
        assert_eq!(c.aggregate().up, 0.5);
        assert_eq!(c.aggregate().down, -0.5);
        let c = expected_share_change(&[0.5], &[0.5], 0.0, 1.0, &resp);
        assert_eq!(c.aggregate().up, 0.0);
    }

    #[test]
    fn share_weights_mirror_line_weights() {
        let w = share_worst_case_weights(&[LoadEffect { up: -1.0, down: 0.2 }, LoadEffect { up: 0.0, down: -3.0 }], 2.0).unwrap();
        assert_abs_diff_eq!(w.values[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(w.values[1], 0.75, epsilon = 1e-15);
        let w = share_worst_case_weights(&[LoadEffect { up: 0.0, down: 0.0 }, LoadEffect { up: 1.0, down: 0.0 }], 2.0).unwrap();
        assert!(w.fallback);
        assert_eq!(w.values, vec![0.5, 0.5]);
        let w = share_worst_case_weights(&[LoadEffect { up: 0.3, down: -0.1 }], 1.0).unwrap();
        assert_eq!(w.values, vec![1.0]);
    }

    #[test]
    fn potentials_partition_influence() {
        assert_eq!(contribution_potentials(&[1.0, -2.0, 0.5]), (1.5, -2.0));
    }

    #[test]
    fn bounds_from_reported_share() {
        let b = ftr_bounds(9.7966, 0.0, -7.9503);
        assert_abs_diff_eq!(b.min, 1.8463, epsilon = 1e-12);
        assert_abs_diff_eq!(b.max, 9.7966, epsilon = 1e-12);
        let b = ftr_bounds(4.0, 0.0, 0.0);
        assert_eq!((b.min, b.max), (4.0, 4.0));
    }

    #[test]
    fn profit_branches() {
        // Balanced drift: frictionless.
        assert_abs_diff_eq!(risk_adjusted_profit(5.0, 1.0, -1.0, 1.0, 0.5), 2.5, epsilon = 1e-15);
        // Upward drift of 2.
        assert_abs_diff_eq!(risk_adjusted_profit(5.0, 2.0, 0.0, 1.0, 0.5), 0.5, epsilon = 1e-15);
        // Downward drift of 2.
        assert_abs_diff_eq!(risk_adjusted_profit(5.0, 0.0, -2.0, 1.0, 0.5), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn signed_quantities() {
        assert_eq!(signed_ftrs(10.0, 1.0, -1.0), SignedFtr { positive: 10.0, negative: 10.0 });
        assert_eq!(signed_ftrs(10.0, 3.0, 0.0), SignedFtr { positive: 7.0, negative: 10.0 });
        assert_eq!(signed_ftrs(10.0, 0.0, -3.0), SignedFtr { positive: 10.0, negative: 13.0 });
    }

    #[test]
    fn reversal_prone_path_suppresses_obligation() {
        let terms = PathTerms {
            chance: Chance::from_forward(0.4947),
            spread: 10.0,
            fcp: 1.0,
            rcp: -0.5,
        };
        assert_eq!(path_profit(FtrKind::Obligation, 5.0, 1.0, &terms), 0.0);
        assert!(path_profit(FtrKind::Option, 5.0, 1.0, &terms) != 0.0);
        let tie = PathTerms {
            chance: Chance::from_forward(0.5),
            ..terms
        };
        assert_eq!(path_profit(FtrKind::Obligation, 5.0, 0.0, &tie), 0.0);
    }

    #[test]
    fn objective_is_zero_without_quantities() {
        let terms = PathTerms {
            chance: Chance::from_forward(0.9),
            spread: 4.0,
            fcp: 0.0,
            rcp: 0.0,
        };
        let d = [PathDecision { kind: FtrKind::Obligation, award: 0.0, bid: 1.0 }, PathDecision { kind: FtrKind::Option, award: 0.0, bid: 2.0 }];
        assert_eq!(player_objective(&d, &[terms, terms]), 0.0);
    }

    #[test]
    fn single_path_objective_composes_decision_function_and_drift() {
        let terms = PathTerms {
            chance: Chance::from_forward(0.8),
            spread: 10.0,
            fcp: 1.5,
            rcp: -0.5,
        };
        let (q, bid) = (4.0, 3.0);
        // Decision-function rent on q, less the unit value of the upward drift.
        let df = crate::risk::decision_function(0.8, 10.0, bid, 0.0, q, 0.0);
        let expected = df - (2.0 * 0.8 - 1.0) * 10.0 * 1.0;
        let got = player_objective(&[PathDecision { kind: FtrKind::Obligation, award: q, bid }], &[terms]);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }
}
