//! The bi-level FTR bidding game and its equilibria.

mod barrier;
pub mod game;
pub mod kkt;

use serde::{Deserialize, Serialize};

pub use game::{
    grid, profile_change, BiddingGame, Deviation, Evaluation, IterationOptions, IterationResult, NashReport, Profile,
    RoundRecord, Strategy, TypeRule,
};
pub use kkt::{reduce_bilevel, solve_kkt, KktOptions, KktPoint, KktResiduals, KktSolution, KktStage, KktSystem};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
}

/// A bid profile with its clearing outcome, payoffs and certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub profile: Profile,
    /// `awards[player][path]`.
    pub awards: Vec<Vec<f64>>,
    /// `profits[player][path]`.
    pub profits: Vec<Vec<f64>>,
    /// Sum of all players' objectives.
    pub objective: f64,
    pub multipliers: KktPoint,
    pub residuals: KktResiduals,
    pub status: SolveStatus,
    pub nash: Option<NashReport>,
}

impl EquilibriumSolution {
    /// Wraps a profile cleared by the ISO auction as the players see it.
    pub fn from_profile(game: &BiddingGame, profile: Profile, status: SolveStatus) -> Result<Self> {
        let system = reduce_bilevel(game, &profile)?;
        let eval = game.evaluate(&profile)?;
        let (bids, quantities): (Vec<f64>, Vec<f64>) = profile.iter().flatten().map(|s| (s.bid, s.quantity)).unzip();
        let multipliers = KktPoint::from_clearing(bids, quantities, &eval.outcome);
        Ok(EquilibriumSolution {
            residuals: system.residuals(&multipliers),
            objective: eval.total(),
            awards: eval.awards,
            profits: eval.profits,
            profile,
            multipliers,
            status,
            nash: None,
        })
    }

    /// Wraps a joint single-level solution; awards are its optimistic
    /// lower-level selection.
    pub fn from_kkt(game: &BiddingGame, system: &KktSystem, sol: &KktSolution) -> Self {
        let profile = system.profile(&sol.point);
        let nj = game.num_paths();
        let awards: Vec<Vec<f64>> = (0..game.num_players())
            .map(|i| (0..nj).map(|j| sol.point.awards[i * nj + j]).collect())
            .collect();
        let profits = (0..game.num_players())
            .map(|i| (0..nj).map(|j| game.path_payoff(i, j, &profile[i][j], awards[i][j])).collect())
            .collect();
        EquilibriumSolution {
            profile,
            awards,
            profits,
            objective: sol.objective,
            multipliers: sol.point.clone(),
            residuals: sol.residuals,
            status: if sol.converged { SolveStatus::Converged } else { SolveStatus::NotConverged },
            nash: None,
        }
    }

    pub fn with_nash(mut self, report: NashReport) -> Self {
        self.nash = Some(report);
        self
    }
}

/// How far two solutions of the same game are apart.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub max_bid_gap: f64,
    pub max_award_gap: f64,
    pub objective_gap: f64,
    pub type_mismatches: usize,
}

impl Disagreement {
    pub fn between(a: &EquilibriumSolution, b: &EquilibriumSolution) -> Self {
        let mut d = Disagreement {
            objective_gap: a.objective - b.objective,
            ..Default::default()
        };
        for (ra, rb) in a.profile.iter().zip(&b.profile) {
            for (sa, sb) in ra.iter().zip(rb) {
                if sa.kind != sb.kind {
                    d.type_mismatches += 1;
                }
                d.max_bid_gap = d.max_bid_gap.max((sa.bid - sb.bid).abs());
            }
        }
        for (x, y) in a.awards.iter().flatten().zip(b.awards.iter().flatten()) {
            d.max_award_gap = d.max_award_gap.max((x - y).abs());
        }
        d
    }

    pub fn is_material(&self, tolerance: f64) -> bool {
        self.type_mismatches > 0
            || self.max_bid_gap > tolerance
            || self.max_award_gap > tolerance
            || self.objective_gap.abs() > tolerance
    }
}
