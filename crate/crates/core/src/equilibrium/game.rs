//! The FTR bidding game: strategies, payoff evaluation through the ISO
//! auction, grid best responses and the unilateral-deviation check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clearing::{clear_market, ClearingInstance, ClearingOutcome, Offer};
use crate::config::UpdateRule;
use crate::contribution::{obligation_allowed, path_profit, FtrBounds, FtrKind, PathTerms};
use crate::error::{Error, Result};

/// Smallest profit gain that makes a player switch strategy.
const IMPROVE_TOL: f64 = 1e-7;
/// Coordinate-ascent passes over a player's paths in one best response.
const MAX_PASSES: usize = 4;

/// One player's offer on one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: FtrKind,
    pub bid: f64,
    /// Requested quantity; the ISO may award anything in `[0, quantity]`.
    pub quantity: f64,
}

/// `profile[player][path]`.
pub type Profile = Vec<Vec<Strategy>>;

/// Which FTR types a player may choose from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeRule {
    Free,
    Only(FtrKind),
}

impl TypeRule {
    fn kinds(&self) -> Vec<FtrKind> {
        match self {
            TypeRule::Free => FtrKind::ALL.to_vec(),
            TypeRule::Only(k) => vec![*k],
        }
    }
}

/// Everything the players and the ISO need, per (player, path).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiddingGame {
    pub players: Vec<String>,
    pub paths: Vec<String>,
    /// `impact[path][line]`.
    pub impact: Vec<Vec<f64>>,
    pub limits: Vec<f64>,
    /// `terms[player][path]`.
    pub terms: Vec<Vec<PathTerms>>,
    /// `bounds[player][path]`.
    pub bounds: Vec<Vec<FtrBounds>>,
    pub reserve_price: f64,
}

/// Payoffs of a profile after clearing.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub outcome: ClearingOutcome,
    /// `awards[player][path]`.
    pub awards: Vec<Vec<f64>>,
    /// `profits[player][path]`.
    pub profits: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn player_total(&self, i: usize) -> f64 {
        self.profits[i].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.profits.iter().flatten().sum()
    }
}

/// `n` evenly spaced points over `[lo, hi]`, or `lo` alone for a point.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi - lo <= 1e-12 || n < 2 {
        return vec![lo];
    }
    (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

impl BiddingGame {
    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (np, nj) = (self.num_players(), self.num_paths());
        if self.terms.len() != np || self.bounds.len() != np {
            return Err(Error::Schema("per-player tables do not match the player list".into()));
        }
        if self.impact.len() != nj || self.impact.iter().any(|r| r.len() != self.limits.len()) {
            return Err(Error::Schema("impact matrix does not match paths and lines".into()));
        }
        for i in 0..np {
            if self.terms[i].len() != nj || self.bounds[i].len() != nj {
                return Err(Error::Schema(format!("player {i} does not cover every path")));
            }
            for (j, b) in self.bounds[i].iter().enumerate() {
                if b.min.is_nan() || b.max.is_nan() || b.min > b.max {
                    return Err(Error::InconsistentBounds {
                        player: i,
                        path: j,
                        min: b.min,
                        max: b.max,
                    });
                }
            }
        }
        Ok(())
    }

    /// Admissible bid prices; `None` when the type may not be bid.
    pub fn band(&self, i: usize, j: usize, kind: FtrKind) -> Option<(f64, f64)> {
        let t = &self.terms[i][j];
        let obligation_cap = t.chance.margin * t.spread;
        let (lo, hi) = match kind {
            FtrKind::Obligation => {
                if !obligation_allowed(t.chance) {
                    return None;
                }
                (self.reserve_price, obligation_cap)
            }
            FtrKind::Option => (self.reserve_price.max(obligation_cap), t.chance.forward * t.spread),
        };
        (hi >= lo).then_some((lo, hi))
    }

    /// Quantities a player may request: the FTR bounds, floored at zero.
    pub fn quantity_range(&self, i: usize, j: usize) -> (f64, f64) {
        let b = self.bounds[i][j];
        (b.min.max(0.0), b.max.max(0.0))
    }

    pub fn withheld(&self, kind: FtrKind) -> Strategy {
        Strategy {
            kind,
            bid: self.reserve_price,
            quantity: 0.0,
        }
    }

    /// Whether `s` respects the band and quantity range of its type
    /// (withheld offers always do).
    pub fn is_admissible(&self, i: usize, j: usize, s: &Strategy) -> bool {
        if s.quantity == 0.0 && s.bid == self.reserve_price {
            return true;
        }
        let (qlo, qhi) = self.quantity_range(i, j);
        match self.band(i, j, s.kind) {
            Some((lo, hi)) => s.bid >= lo && s.bid <= hi && s.quantity >= qlo && s.quantity <= qhi,
            None => false,
        }
    }

    /// Band midpoint bids and quantities at the estimated share.
    pub fn initial_profile(&self, rule: TypeRule) -> Profile {
        (0..self.num_players())
            .map(|i| {
                (0..self.num_paths())
                    .map(|j| {
                        let kinds = rule.kinds();
                        let kind = kinds.iter().copied().find(|&k| self.band(i, j, k).is_some());
                        match kind {
                            Some(k) => {
                                let (lo, hi) = self.band(i, j, k).unwrap();
                                let (qlo, qhi) = self.quantity_range(i, j);
                                let share = 0.5 * (self.bounds[i][j].min + self.bounds[i][j].max);
                                Strategy {
                                    kind: k,
                                    bid: 0.5 * (lo + hi),
                                    quantity: share.clamp(qlo, qhi),
                                }
                            }
                            None => self.withheld(kinds[0]),
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn instance(&self, profile: &Profile) -> ClearingInstance {
        let nj = self.num_paths();
        let offers = profile
            .iter()
            .flat_map(|row| {
                row.iter().enumerate().map(|(j, s)| Offer {
                    kind: s.kind,
                    price: s.bid,
                    min: 0.0,
                    max: s.quantity,
                    path: j,
                })
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(offers.len(), self.num_players() * nj);
        ClearingInstance {
            offers,
            impact: self.impact.clone(),
            limits: self.limits.clone(),
        }
    }

    pub fn offer_index(&self, i: usize, j: usize) -> usize {
        i * self.num_paths() + j
    }

    /// Profit of player `i` on path `j` for an award.
    pub fn path_payoff(&self, i: usize, j: usize, s: &Strategy, award: f64) -> f64 {
        path_profit(s.kind, award, s.bid, &self.terms[i][j])
    }

    pub fn evaluate(&self, profile: &Profile) -> Result<Evaluation> {
        let outcome = clear_market(&self.instance(profile))?;
        Ok(self.evaluate_with(profile, outcome))
    }

    /// Payoffs for a profile whose clearing outcome is already known.
    pub fn evaluate_with(&self, profile: &Profile, outcome: ClearingOutcome) -> Evaluation {
        let nj = self.num_paths();
        let awards: Vec<Vec<f64>> = (0..self.num_players())
            .map(|i| (0..nj).map(|j| outcome.awards[self.offer_index(i, j)]).collect())
            .collect();
        let profits = (0..self.num_players())
            .map(|i| (0..nj).map(|j| self.path_payoff(i, j, &profile[i][j], awards[i][j])).collect())
            .collect();
        Evaluation { outcome, awards, profits }
    }

    fn player_profit(&self, profile: &Profile, i: usize) -> Result<f64> {
        Ok(self.evaluate(profile)?.player_total(i))
    }

    /// Grid of strategies player `i` may use on path `j`.
    pub fn candidates(&self, i: usize, j: usize, rule: TypeRule, points: usize) -> Vec<Strategy> {
        let (qlo, qhi) = self.quantity_range(i, j);
        let quantities = grid(qlo, qhi, points);
        let mut out = Vec::new();
        for kind in rule.kinds() {
            if let Some((lo, hi)) = self.band(i, j, kind) {
                for &bid in &grid(lo, hi, points) {
                    for &quantity in &quantities {
                        out.push(Strategy { kind, bid, quantity });
                    }
                }
            }
        }
        if out.is_empty() {
            out.push(self.withheld(rule.kinds()[0]));
        }
        out
    }

    /// Best single-path replacement for player `i` on path `j`, with its
    /// profit. Ties keep the earliest candidate.
    fn best_on_path(&self, profile: &Profile, i: usize, j: usize, rule: TypeRule, points: usize) -> Result<(Strategy, f64)> {
        let cands = self.candidates(i, j, rule, points);
        let values: Vec<Result<f64>> = cands
            .par_iter()
            .map(|s| {
                let mut trial = profile.clone();
                trial[i][j] = *s;
                self.player_profit(&trial, i)
            })
            .collect();
        let mut best: Option<(Strategy, f64)> = None;
        for (s, v) in cands.into_iter().zip(values) {
            let v = v?;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((s, v));
            }
        }
        Ok(best.expect("candidate set is never empty"))
    }

    /// Player `i`'s response to the others' strategies in `profile`:
    /// coordinate ascent over its paths on the strategy grid.
    pub fn best_response(&self, profile: &Profile, i: usize, rule: TypeRule, points: usize) -> Result<Vec<Strategy>> {
        let mut current = profile.clone();
        let mut value = self.player_profit(&current, i)?;
        for _ in 0..MAX_PASSES {
            let mut improved = false;
            for j in 0..self.num_paths() {
                let (s, v) = self.best_on_path(&current, i, j, rule, points)?;
                if v > value + IMPROVE_TOL {
                    current[i][j] = s;
                    value = v;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        Ok(current[i].clone())
    }

    /// Repeated best responses until no strategy moves by more than
    /// `change_tolerance`.
    pub fn iterate(&self, initial: Profile, opts: &IterationOptions) -> Result<IterationResult> {
        self.validate()?;
        let np = self.num_players();
        let mut profile = initial;
        let mut history = Vec::new();
        let mut best: Option<(Profile, f64)> = None;
        for round in 1..=opts.max_rounds {
            let start = profile.clone();
            let mut gain = 0.0f64;
            match opts.update_rule {
                UpdateRule::Sequential => {
                    for i in 0..np {
                        let before = self.player_profit(&profile, i)?;
                        let row = self.best_response(&profile, i, opts.types, opts.grid_points)?;
                        profile[i] = row;
                        gain = gain.max(self.player_profit(&profile, i)? - before);
                    }
                }
                UpdateRule::Simultaneous => {
                    let snapshot = profile.clone();
                    let base = self.evaluate(&snapshot)?;
                    let rows: Vec<Result<Vec<Strategy>>> = (0..np)
                        .into_par_iter()
                        .map(|i| self.best_response(&snapshot, i, opts.types, opts.grid_points))
                        .collect();
                    for (i, row) in rows.into_iter().enumerate() {
                        let row = row?;
                        let mut trial = snapshot.clone();
                        trial[i] = row.clone();
                        gain = gain.max(self.player_profit(&trial, i)? - base.player_total(i));
                        profile[i] = row;
                    }
                }
            }
            let change = profile_change(&start, &profile);
            history.push(RoundRecord { round, change, gain });
            if best.as_ref().is_none_or(|(_, g)| gain < *g) {
                best = Some((start.clone(), gain));
            }
            log::debug!("round {round}: change {change:.3e}, gain {gain:.3e}");
            if change < opts.change_tolerance {
                return Ok(IterationResult {
                    profile,
                    rounds: round,
                    converged: true,
                    history,
                });
            }
        }
        log::warn!("best responses did not settle in {} rounds", opts.max_rounds);
        let profile = best.map(|(p, _)| p).unwrap_or(profile);
        Ok(IterationResult {
            profile,
            rounds: opts.max_rounds,
            converged: false,
            history,
        })
    }

    /// Tries every single-(player, path) grid deviation from `profile`.
    pub fn verify_nash(&self, profile: &Profile, points: usize, tolerance: f64) -> Result<NashReport> {
        let base = self.evaluate(profile)?;
        let tasks: Vec<(usize, usize, Strategy)> = (0..self.num_players())
            .flat_map(|i| {
                (0..self.num_paths()).flat_map(move |j| {
                    self.candidates(i, j, TypeRule::Free, points)
                        .into_iter()
                        .map(move |s| (i, j, s))
                })
            })
            .collect();
        let gains: Vec<Result<f64>> = tasks
            .par_iter()
            .map(|&(i, j, s)| {
                let mut trial = profile.clone();
                trial[i][j] = s;
                Ok(self.player_profit(&trial, i)? - base.player_total(i))
            })
            .collect();
        let mut report = NashReport {
            max_improvement: 0.0,
            worst: None,
            deviations: tasks.len(),
            grid_points: points,
            tolerance,
            certified: true,
        };
        for (&(i, j, s), g) in tasks.iter().zip(gains) {
            let g = g?;
            if g > report.max_improvement {
                report.max_improvement = g;
                report.worst = Some(Deviation { player: i, path: j, strategy: s });
            }
        }
        report.certified = report.max_improvement <= tolerance;
        Ok(report)
    }
}

/// Largest change in bid or quantity between two profiles; a type switch
/// counts as infinite.
pub fn profile_change(a: &Profile, b: &Profile) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| {
            if x.kind != y.kind {
                f64::INFINITY
            } else {
                (x.bid - y.bid).abs().max((x.quantity - y.quantity).abs())
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationOptions {
    pub max_rounds: usize,
    pub change_tolerance: f64,
    pub grid_points: usize,
    pub update_rule: UpdateRule,
    pub types: TypeRule,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions {
            max_rounds: 50,
            change_tolerance: 1e-6,
            grid_points: 10,
            update_rule: UpdateRule::Sequential,
            types: TypeRule::Free,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub change: f64,
    /// Largest profit gain any player found this round.
    pub gain: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationResult {
    /// Final profile, or the round start with the smallest gain when the
    /// iteration did not settle.
    pub profile: Profile,
    pub rounds: usize,
    pub converged: bool,
    pub history: Vec<RoundRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Deviation {
    pub player: usize,
    pub path: usize,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NashReport {
    pub max_improvement: f64,
    pub worst: Option<Deviation>,
    pub deviations: usize,
    pub grid_points: usize,
    pub tolerance: f64,
    pub certified: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::Chance;
    use approx::assert_abs_diff_eq;

    fn terms(forward: f64, spread: f64) -> PathTerms {
        PathTerms {
            chance: Chance::from_forward(forward),
            spread,
            fcp: 0.0,
            rcp: 0.0,
        }
    }

    fn game(players: usize, forward: f64, spread: f64, qmax: f64, limit: f64) -> BiddingGame {
        BiddingGame {
            players: (0..players).map(|i| format!("p{i}")).collect(),
            paths: vec!["a".into()],
            impact: vec![vec![1.0]],
            limits: vec![limit],
            terms: vec![vec![terms(forward, spread)]; players],
            bounds: vec![vec![FtrBounds { min: 0.0, max: qmax }]; players],
            reserve_price: 0.0,
        }
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = grid(0.1, 0.7, 4);
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[3], 0.7);
        assert_eq!(grid(2.0, 2.0, 10), vec![2.0]);
    }

    #[test]
    fn bands_follow_the_caps() {
        let g = game(1, 0.8, 10.0, 5.0, 100.0);
        let (lo, hi) = g.band(0, 0, FtrKind::Obligation).unwrap();
        assert_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 6.0, epsilon = 1e-12);
        let (lo, hi) = g.band(0, 0, FtrKind::Option).unwrap();
        assert_abs_diff_eq!(lo, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 8.0, epsilon = 1e-12);
        let weak = game(1, 0.45, 10.0, 5.0, 100.0);
        assert!(weak.band(0, 0, FtrKind::Obligation).is_none());
        assert_eq!(weak.band(0, 0, FtrKind::Option), Some((0.0, 4.5)));
    }

    #[test]
    fn lone_bidder_with_slack_takes_everything_at_the_floor() {
        let g = game(1, 0.8, 10.0, 5.0, 100.0);
        let p = g.initial_profile(TypeRule::Only(FtrKind::Obligation));
        let row = g.best_response(&p, 0, TypeRule::Only(FtrKind::Obligation), 10).unwrap();
        assert_eq!(row[0].bid, 0.0);
        assert_eq!(row[0].quantity, 5.0);
        let res = g.iterate(p, &IterationOptions { types: TypeRule::Only(FtrKind::Obligation), ..Default::default() }).unwrap();
        assert!(res.converged);
        assert!(res.rounds <= 2);
    }

    #[test]
    fn reversal_prone_path_only_offers_options() {
        let g = game(1, 0.45, 10.0, 5.0, 100.0);
        let c = g.candidates(0, 0, TypeRule::Free, 10);
        assert!(c.iter().all(|s| s.kind == FtrKind::Option));
        let c = g.candidates(0, 0, TypeRule::Only(FtrKind::Obligation), 10);
        assert_eq!(c, vec![g.withheld(FtrKind::Obligation)]);
    }

    #[test]
    fn symmetric_players_reach_a_symmetric_point() {
        let g = game(2, 0.8, 10.0, 5.0, 100.0);
        let res = g.iterate(g.initial_profile(TypeRule::Free), &IterationOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.profile[0][0], res.profile[1][0]);
        let report = g.verify_nash(&res.profile, 10, 1e-3).unwrap();
        assert!(report.certified);
        assert_eq!(report.max_improvement, 0.0);
    }

    #[test]
    fn underbid_is_detected() {
        // Alone on an uncongested line: any bid above the floor is wasted.
        let g = game(1, 0.8, 10.0, 5.0, 100.0);
        let s = Strategy { kind: FtrKind::Obligation, bid: 2.0, quantity: 5.0 };
        let report = g.verify_nash(&vec![vec![s]], 10, 1e-3).unwrap();
        // Dropping the bid to the floor saves 2 per MW on 5 MW.
        assert_abs_diff_eq!(report.max_improvement, 10.0, epsilon = 1e-9);
        assert!(!report.certified);
    }
}
