//! ISO FTR auction: revenue-maximal awards under simultaneous feasibility.
//! Ties between revenue-optimal awards go to the largest total award.

use serde::{Deserialize, Serialize};

use crate::contribution::FtrKind;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpError, Relation, Sense};
use crate::network::{FtrPath, NetworkModel, ShiftFactors};

/// Duals below this are reported as zero.
const DUAL_FLOOR: f64 = 1e-10;
/// A line row counts as binding within this many MW of its limit.
const BINDING_TOL: f64 = 1e-6;
const QUANTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub kind: FtrKind,
    /// Offer price, currency/MW.
    pub price: f64,
    pub min: f64,
    pub max: f64,
    /// Index into the instance's path list.
    pub path: usize,
}

/// Offers plus the impact of one MW on each path on each limited line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClearingInstance {
    pub offers: Vec<Offer>,
    /// `impact[p][l]`: flow on line `l` per MW of FTR on path `p`.
    pub impact: Vec<Vec<f64>>,
    /// Limit per line, MW; infinite limits add no row.
    pub limits: Vec<f64>,
}

/// PTDF of every path's source-to-sink transfer on every line.
pub fn build_impact_coefficients(shift: &ShiftFactors, paths: &[FtrPath]) -> Vec<Vec<f64>> {
    paths
        .iter()
        .map(|p| (0..shift.num_lines()).map(|l| shift.ptdf(p.source, p.sink, l)).collect())
        .collect()
}

impl ClearingInstance {
    pub fn new(offers: Vec<Offer>, impact: Vec<Vec<f64>>, limits: Vec<f64>) -> Result<Self> {
        let inst = ClearingInstance { offers, impact, limits };
        inst.validate()?;
        Ok(inst)
    }

    pub fn from_network(net: &NetworkModel, shift: &ShiftFactors, paths: &[FtrPath], offers: Vec<Offer>) -> Result<Self> {
        Self::new(
            offers,
            build_impact_coefficients(shift, paths),
            net.lines.iter().map(|l| l.capacity).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let nl = self.limits.len();
        if let Some(p) = self.impact.iter().position(|row| row.len() != nl) {
            return Err(Error::Schema(format!("impact row {p} has the wrong number of lines")));
        }
        for (k, o) in self.offers.iter().enumerate() {
            if o.path >= self.impact.len() {
                return Err(Error::Schema(format!("offer {k} refers to unknown path {}", o.path)));
            }
            if !(o.price.is_finite() && o.min.is_finite() && o.max.is_finite()) {
                return Err(Error::Schema(format!("offer {k} has a non-finite field")));
            }
            if o.min > o.max {
                return Err(Error::InconsistentBounds {
                    player: k,
                    path: o.path,
                    min: o.min,
                    max: o.max,
                });
            }
        }
        if let Some(l) = self.limits.iter().position(|c| c.is_nan() || *c < 0.0) {
            return Err(Error::Schema(format!("line {l} has a negative or undefined limit")));
        }
        Ok(())
    }

    /// Coefficient of offer `k` in line `l`'s row: options never relieve.
    pub fn coefficient(&self, k: usize, l: usize) -> f64 {
        let o = &self.offers[k];
        let m = self.impact[o.path][l];
        match o.kind {
            FtrKind::Obligation => m,
            FtrKind::Option => m.max(0.0),
        }
    }

    pub fn limited_lines(&self) -> impl Iterator<Item = usize> + '_ {
        self.limits.iter().enumerate().filter(|(_, c)| c.is_finite()).map(|(l, _)| l)
    }

    /// Flow per line implied by the given awards.
    pub fn flows(&self, awards: &[f64]) -> Vec<f64> {
        (0..self.limits.len())
            .map(|l| awards.iter().enumerate().map(|(k, x)| self.coefficient(k, l) * x).sum())
            .collect()
    }

    /// Builds the clearing LP; returns it with the (upper, lower) row
    /// index of each limited line.
    pub fn program(&self) -> (LinearProgram, Vec<Option<(usize, usize)>>) {
        let n = self.offers.len();
        let mut lp = LinearProgram::new(Sense::Maximize, n);
        for (k, o) in self.offers.iter().enumerate() {
            lp.set_objective(k, o.price);
            lp.set_bounds(k, o.min, o.max);
        }
        let mut rows = vec![None; self.limits.len()];
        for l in self.limited_lines().collect::<Vec<_>>() {
            let coeffs: Vec<(usize, f64)> = (0..n).map(|k| (k, self.coefficient(k, l))).filter(|&(_, v)| v != 0.0).collect();
            let cap = self.limits[l];
            let up = lp.add_constraint(coeffs.clone(), Relation::Le, cap);
            let lo = lp.add_constraint(coeffs, Relation::Ge, -cap);
            rows[l] = Some((up, lo));
        }
        (lp, rows)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClearingOutcome {
    pub awards: Vec<f64>,
    pub objective: f64,
    /// Signed line price `mu_up - mu_lo` per line.
    pub line_duals: Vec<f64>,
    pub mu_up: Vec<f64>,
    pub mu_lo: Vec<f64>,
    /// Multiplier of each offer's upper quantity bound.
    pub mu_plus: Vec<f64>,
    /// Multiplier of each offer's lower quantity bound.
    pub mu_minus: Vec<f64>,
    pub flows: Vec<f64>,
    pub binding: Vec<bool>,
    /// Line price of each offer's path: `sum_l coefficient * line_dual`.
    pub path_price: Vec<f64>,
    pub degenerate: bool,
}

pub fn clear_market(instance: &ClearingInstance) -> Result<ClearingOutcome> {
    instance.validate()?;
    let (lp, rows) = instance.program();
    let sol = lp.solve().map_err(|e| match e {
        LpError::Infeasible => Error::InfeasibleInstance("offer minimums cannot be awarded together".into()),
        other => Error::from(other),
    })?;
    let nl = instance.limits.len();
    let clean = |v: f64| if v.abs() < DUAL_FLOOR { 0.0 } else { v };
    let mut mu_up = vec![0.0; nl];
    let mut mu_lo = vec![0.0; nl];
    for (l, r) in rows.iter().enumerate() {
        if let Some((up, lo)) = *r {
            mu_up[l] = clean(sol.duals[up].max(0.0));
            mu_lo[l] = clean((-sol.duals[lo]).max(0.0));
        }
    }
    let line_duals: Vec<f64> = mu_up.iter().zip(&mu_lo).map(|(a, b)| a - b).collect();
    let clamp = |x: &[f64]| -> Vec<f64> { x.iter().zip(&instance.offers).map(|(&x, o)| x.clamp(o.min, o.max)).collect() };
    let mut awards = clamp(&sol.x);
    if awards.iter().zip(&instance.offers).any(|(x, o)| *x < o.max - QUANTITY_TOL) {
        // Largest total award on the revenue-optimal face: priced offers
        // stay put and priced lines stay at their limits.
        let mut second = lp.clone();
        for (k, x) in awards.iter().enumerate() {
            second.set_objective(k, 1.0);
            if clean(sol.reduced_costs[k]) != 0.0 {
                second.set_bounds(k, *x, *x);
            }
        }
        for (l, r) in rows.iter().enumerate() {
            if r.is_none() {
                continue;
            }
            let coeffs: Vec<(usize, f64)> =
                (0..awards.len()).map(|k| (k, instance.coefficient(k, l))).filter(|&(_, v)| v != 0.0).collect();
            if mu_up[l] > 0.0 {
                second.add_constraint(coeffs.clone(), Relation::Ge, instance.limits[l]);
            }
            if mu_lo[l] > 0.0 {
                second.add_constraint(coeffs, Relation::Le, -instance.limits[l]);
            }
        }
        match second.solve() {
            Ok(s2) => awards = clamp(&s2.x),
            Err(e) => log::debug!("award tie-break skipped: {e}"),
        }
    }
    let flows = instance.flows(&awards);
    let binding = (0..nl)
        .map(|l| instance.limits[l].is_finite() && (flows[l].abs() - instance.limits[l]).abs() <= BINDING_TOL)
        .collect();
    let path_price: Vec<f64> = (0..instance.offers.len())
        .map(|k| (0..nl).map(|l| instance.coefficient(k, l) * line_duals[l]).sum())
        .collect();
    let mut mu_plus = Vec::with_capacity(awards.len());
    let mut mu_minus = Vec::with_capacity(awards.len());
    for (k, o) in instance.offers.iter().enumerate() {
        let rc = clean(o.price - path_price[k]);
        mu_plus.push(rc.max(0.0));
        mu_minus.push((-rc).max(0.0));
    }
    Ok(ClearingOutcome {
        objective: awards.iter().zip(&instance.offers).map(|(x, o)| x * o.price).sum(),
        awards,
        line_duals,
        mu_up,
        mu_lo,
        mu_plus,
        mu_minus,
        flows,
        binding,
        path_price,
        degenerate: sol.degenerate,
    })
}

/// Largest violation of the clearing optimality conditions at `outcome`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClearingResiduals {
    pub stationarity: f64,
    pub complementarity: f64,
    pub primal: f64,
    pub dual_sign: f64,
}

impl ClearingResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.primal).max(self.dual_sign)
    }
}

pub fn clearing_residuals(instance: &ClearingInstance, outcome: &ClearingOutcome) -> ClearingResiduals {
    let mut r = ClearingResiduals::default();
    let nl = instance.limits.len();
    for (k, o) in instance.offers.iter().enumerate() {
        let x = outcome.awards[k];
        let line_term: f64 = (0..nl)
            .map(|l| instance.coefficient(k, l) * (outcome.mu_up[l] - outcome.mu_lo[l]))
            .sum();
        let stat = o.price - line_term - outcome.mu_plus[k] + outcome.mu_minus[k];
        r.stationarity = r.stationarity.max(stat.abs());
        r.complementarity = r
            .complementarity
            .max((outcome.mu_plus[k] * (o.max - x)).abs())
            .max((outcome.mu_minus[k] * (x - o.min)).abs());
        r.primal = r.primal.max((o.min - x).max(0.0)).max((x - o.max).max(0.0));
        r.dual_sign = r.dual_sign.max((-outcome.mu_plus[k]).max(0.0)).max((-outcome.mu_minus[k]).max(0.0));
    }
    let flows = instance.flows(&outcome.awards);
    for l in instance.limited_lines() {
        let cap = instance.limits[l];
        r.primal = r.primal.max((flows[l] - cap).max(0.0)).max((-cap - flows[l]).max(0.0));
        r.complementarity = r
            .complementarity
            .max((outcome.mu_up[l] * (cap - flows[l])).abs())
            .max((outcome.mu_lo[l] * (cap + flows[l])).abs());
        r.dual_sign = r.dual_sign.max((-outcome.mu_up[l]).max(0.0)).max((-outcome.mu_lo[l]).max(0.0));
    }
    r
}
