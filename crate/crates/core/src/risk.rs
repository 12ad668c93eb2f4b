//! Per-path congestion risk: how load deviations push a path's flow
//! forward or backward, the chance that the flow keeps its direction, and
//! the resulting bid-price caps for obligations and options.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{run_dcopf, Branch, DispatchEstimate, FtrPath, NetworkModel, ShiftFactors};

/// Output changes below this are re-solve noise, MW.
const RESPONSE_NOISE: f64 = 1e-9;

/// Two-point load deviation model: each load moves by `deviation[d]` MW
/// up with probability `omega_up[d]` or down with `1 - omega_up[d]`.
#[derive(Debug, Clone, Serialize)]
pub struct LoadDeviationModel {
    pub deviation: Vec<f64>,
    pub omega_up: Vec<f64>,
}

impl LoadDeviationModel {
    pub fn new(deviation: Vec<f64>, omega_up: Vec<f64>) -> Result<Self> {
        if deviation.len() != omega_up.len() {
            return Err(Error::Schema("deviation and probability vectors differ in length".into()));
        }
        if let Some(d) = deviation.iter().position(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::Schema(format!("load {d}: deviation must be nonnegative")));
        }
        if let Some(d) = omega_up.iter().position(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::Schema(format!("load {d}: omega_up must lie in [0, 1]")));
        }
        Ok(LoadDeviationModel { deviation, omega_up })
    }

    /// Same fraction of nominal demand and same probabilities on every load.
    pub fn uniform(net: &NetworkModel, fraction: f64, omega_up: f64) -> Result<Self> {
        Self::new(
            net.loads.iter().map(|d| d.demand * fraction).collect(),
            vec![omega_up; net.loads.len()],
        )
    }

    pub fn omega_down(&self, load: usize) -> f64 {
        1.0 - self.omega_up[load]
    }
}

/// Change of every generator's output when one load moves up or down.
#[derive(Debug, Clone, Serialize)]
pub struct RedispatchResponse {
    pub load: usize,
    /// Per generator, load raised by the deviation.
    pub up: Vec<f64>,
    /// Per generator, load lowered by the deviation.
    pub down: Vec<f64>,
}

/// Re-solves the dispatch with load `load` moved by `+delta` and `-delta`.
pub fn redispatch_response(
    net: &NetworkModel,
    shift: &ShiftFactors,
    base: &DispatchEstimate,
    load: usize,
    delta: f64,
) -> Result<RedispatchResponse> {
    let ng = net.generators.len();
    if delta == 0.0 {
        return Ok(RedispatchResponse {
            load,
            up: vec![0.0; ng],
            down: vec![0.0; ng],
        });
    }
    let solve = |sign: f64| -> Result<Vec<f64>> {
        let mut demand = base.demand.clone();
        demand[load] = (demand[load] + sign * delta).max(0.0);
        let d = run_dcopf(net, shift, &demand)?;
        Ok(d.gen_output
            .iter()
            .zip(&base.gen_output)
            .map(|(a, b)| a - b)
            .map(|v| if v.abs() < RESPONSE_NOISE { 0.0 } else { v })
            .collect())
    };
    Ok(RedispatchResponse {
        load,
        up: solve(1.0)?,
        down: solve(-1.0)?,
    })
}

pub fn redispatch_all(
    net: &NetworkModel,
    shift: &ShiftFactors,
    base: &DispatchEstimate,
    model: &LoadDeviationModel,
) -> Result<Vec<RedispatchResponse>> {
    (0..net.loads.len())
        .map(|d| redispatch_response(net, shift, base, d, model.deviation[d]))
        .collect()
}

/// Flow change on `branch` per MW that generator `gen` sends to load `load`.
pub fn line_sensitivity(net: &NetworkModel, shift: &ShiftFactors, branch: Branch, gen: usize, load: usize) -> f64 {
    branch.shift(shift, net.generators[gen].bus) - branch.shift(shift, net.loads[load].bus)
}

/// Expected flow effect of one load's increment (`up`) and decrement (`down`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadEffect {
    pub up: f64,
    pub down: f64,
}

impl LoadEffect {
    pub fn total(&self) -> f64 {
        self.up + self.down
    }
}

/// `sensitivity[j]` is the flow sensitivity of generator `j` serving this load.
pub fn load_effect_terms(sensitivity: &[f64], response: &RedispatchResponse, omega_up: f64, omega_down: f64) -> LoadEffect {
    let up = sensitivity.iter().zip(&response.up).map(|(s, p)| omega_up * s * p).sum();
    let down = sensitivity.iter().zip(&response.down).map(|(s, p)| omega_down * s * p).sum();
    LoadEffect { up, down }
}

/// Expected effect of a single generator on the line for a load deviation
/// under a plain probability weight. Diagnostic only.
pub fn expected_sensitivity_effect(sensitivity: f64, deviation: f64, weight: f64) -> f64 {
    sensitivity * deviation * weight
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weights {
    pub values: Vec<f64>,
    /// No load had an adverse term, so uniform weights were used.
    pub fallback: bool,
}

/// Worst-case load weights: loads whose deviations work against the
/// current direction (`reference`) get proportionally more weight.
/// A zero reference is treated as positive.
pub fn worst_case_weights(effects: &[LoadEffect], reference: f64) -> Result<Weights> {
    if effects.is_empty() {
        return Err(Error::DegenerateWeights("no loads to weight".into()));
    }
    let adverse: Vec<f64> = if reference >= 0.0 {
        effects.iter().map(|e| e.up.min(0.0) + e.down.min(0.0)).collect()
    } else {
        effects.iter().map(|e| e.up.max(0.0) + e.down.max(0.0)).collect()
    };
    let total: f64 = adverse.iter().sum();
    if total.abs() <= 1e-12 {
        log::warn!("no adverse load effects; falling back to uniform weights");
        let n = effects.len() as f64;
        return Ok(Weights {
            values: vec![1.0 / n; effects.len()],
            fallback: true,
        });
    }
    Ok(Weights {
        values: adverse.iter().map(|a| a / total).collect(),
        fallback: false,
    })
}

/// Sum of the positive and of the negative parts (the latter stays signed).
pub fn sign_partition(values: &[f64]) -> (f64, f64) {
    values.iter().fold((0.0, 0.0), |(pos, neg), &v| {
        if v > 0.0 {
            (pos + v, neg)
        } else if v < 0.0 {
            (pos, neg + v)
        } else {
            (pos, neg)
        }
    })
}

/// Forward and reverse potential flows from per-load expected effects.
pub fn potential_flows(effects: &[f64]) -> (f64, f64) {
    sign_partition(effects)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chance {
    /// Probability that the flow keeps its direction.
    pub forward: f64,
    /// Probability that the flow reverses.
    pub reverse: f64,
    /// `forward - reverse`, taken directly from the potentials.
    pub margin: f64,
}

impl Chance {
    pub fn from_forward(forward: f64) -> Self {
        Chance {
            forward,
            reverse: 1.0 - forward,
            margin: 2.0 * forward - 1.0,
        }
    }

    /// Highest prices that keep expected profit above expected loss.
    pub fn caps(&self, spread: f64) -> BidCaps {
        BidCaps {
            obligation: self.margin * spread,
            option: self.forward * spread,
        }
    }
}

pub fn chance_coefficients(flow: f64, forward_potential: f64, reverse_potential: f64) -> Result<Chance> {
    let keep = forward_potential + flow;
    let denom = keep + reverse_potential.abs();
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::DegenerateChance(denom));
    }
    Ok(Chance {
        forward: keep / denom,
        reverse: reverse_potential.abs() / denom,
        margin: (keep - reverse_potential.abs()) / denom,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidCaps {
    pub obligation: f64,
    pub option: f64,
}

pub fn bid_caps(forward: f64, spread: f64) -> BidCaps {
    Chance::from_forward(forward).caps(spread)
}

/// Expected rent of an obligation/option bid pair on one path.
pub fn decision_function(
    forward: f64,
    spread: f64,
    obligation_bid: f64,
    option_bid: f64,
    obligation_qty: f64,
    option_qty: f64,
) -> f64 {
    let caps = bid_caps(forward, spread);
    (caps.obligation - obligation_bid) * obligation_qty + (caps.option - option_bid) * option_qty
}

/// Everything the risk pipeline computes for one path.
#[derive(Debug, Clone, Serialize)]
pub struct PathRisk {
    pub path: FtrPath,
    /// Estimated flow in the path's direction, MW.
    pub flow: f64,
    pub spread: f64,
    pub effects: Vec<LoadEffect>,
    pub weights: Weights,
    /// Weighted expected effect per load, MW.
    pub expected: Vec<f64>,
    pub forward_potential: f64,
    pub reverse_potential: f64,
    pub chance: Chance,
    pub caps: BidCaps,
}

pub fn assess_path(
    net: &NetworkModel,
    shift: &ShiftFactors,
    base: &DispatchEstimate,
    responses: &[RedispatchResponse],
    model: &LoadDeviationModel,
    path: &FtrPath,
) -> Result<PathRisk> {
    let flow = base.flow(path.branch);
    let effects: Vec<LoadEffect> = responses
        .iter()
        .map(|resp| {
            let d = resp.load;
            let sens: Vec<f64> = (0..net.generators.len())
                .map(|j| line_sensitivity(net, shift, path.branch, j, d))
                .collect();
            load_effect_terms(&sens, resp, model.omega_up[d], model.omega_down(d))
        })
        .collect();
    let weights = worst_case_weights(&effects, flow)?;
    let expected: Vec<f64> = effects.iter().zip(&weights.values).map(|(e, w)| w * e.total()).collect();
    let (forward_potential, reverse_potential) = potential_flows(&expected);
    let chance = chance_coefficients(flow, forward_potential, reverse_potential)?;
    let spread = base.spread(path.source, path.sink);
    Ok(PathRisk {
        path: path.clone(),
        flow,
        spread,
        effects,
        weights,
        expected,
        forward_potential,
        reverse_potential,
        chance,
        caps: chance.caps(spread),
    })
}
