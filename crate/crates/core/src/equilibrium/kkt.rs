//! Single-level form of the bidding game: the ISO clearing problem is
//! replaced by its optimality conditions inside the players' joint
//! objective, and the complementarity pairs are relaxed to `s * mu <= tau`
//! with `tau` driven to zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::barrier::{Affine, BarrierProblem, Quadratic};
use super::game::{BiddingGame, Profile, Strategy};
use crate::clearing::{clear_market, ClearingInstance, ClearingOutcome, Offer};
use crate::config::SolverOptions;
use crate::contribution::{path_profit, signed_ftrs, FtrKind, PathTerms};
use crate::error::{Error, Result};
use crate::lp::Relation;

/// Barrier weight relative to the relaxation level.
const BARRIER_RATIO: f64 = 0.1;
const MAX_NEWTON: usize = 200;
/// Values this close to a band or range end are snapped onto it.
const SNAP: f64 = 1e-7;

/// One (player, path) offer with its type fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktOffer {
    pub player: usize,
    pub path: usize,
    pub kind: FtrKind,
    /// Bid band; `None` when the offer is withheld.
    pub band: Option<(f64, f64)>,
    pub quantity_range: (f64, f64),
    pub terms: PathTerms,
}

impl KktOffer {
    pub fn is_active(&self) -> bool {
        self.band.is_some() && self.quantity_range.1 > 0.0
    }

    /// Value per MW of the positive FTR.
    fn unit(&self) -> f64 {
        self.terms.unit_value(self.kind)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktSystem {
    pub num_players: usize,
    pub num_paths: usize,
    /// Indexed `player * num_paths + path`.
    pub offers: Vec<KktOffer>,
    /// `coefficients[offer][line]`, options already floored at zero.
    pub coefficients: Vec<Vec<f64>>,
    pub limits: Vec<f64>,
    pub reserve_price: f64,
    impact: Vec<Vec<f64>>,
}

/// Builds the single-level system for the FTR types chosen in `profile`.
pub fn reduce_bilevel(game: &BiddingGame, profile: &Profile) -> Result<KktSystem> {
    game.validate()?;
    let (np, nj) = (game.num_players(), game.num_paths());
    if profile.len() != np || profile.iter().any(|r| r.len() != nj) {
        return Err(Error::Schema("profile does not match the game".into()));
    }
    let mut offers = Vec::with_capacity(np * nj);
    let mut coefficients = Vec::with_capacity(np * nj);
    for i in 0..np {
        for j in 0..nj {
            let kind = profile[i][j].kind;
            offers.push(KktOffer {
                player: i,
                path: j,
                kind,
                band: game.band(i, j, kind),
                quantity_range: game.quantity_range(i, j),
                terms: game.terms[i][j],
            });
            coefficients.push(
                game.impact[j]
                    .iter()
                    .map(|&m| if kind == FtrKind::Option { m.max(0.0) } else { m })
                    .collect(),
            );
        }
    }
    Ok(KktSystem {
        num_players: np,
        num_paths: nj,
        offers,
        coefficients,
        limits: game.limits.clone(),
        reserve_price: game.reserve_price,
        impact: game.impact.clone(),
    })
}

/// Primal and dual values of the single-level system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktPoint {
    pub bids: Vec<f64>,
    pub quantities: Vec<f64>,
    pub awards: Vec<f64>,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub mu_up: Vec<f64>,
    pub mu_lo: Vec<f64>,
}

impl KktPoint {
    pub fn from_clearing(bids: Vec<f64>, quantities: Vec<f64>, outcome: &ClearingOutcome) -> Self {
        KktPoint {
            bids,
            quantities,
            awards: outcome.awards.clone(),
            mu_plus: outcome.mu_plus.clone(),
            mu_minus: outcome.mu_minus.clone(),
            mu_up: outcome.mu_up.clone(),
            mu_lo: outcome.mu_lo.clone(),
        }
    }

    /// Signed line prices `mu_up - mu_lo`.
    pub fn line_prices(&self) -> Vec<f64> {
        self.mu_up.iter().zip(&self.mu_lo).map(|(a, b)| a - b).collect()
    }
}

/// Largest violation of each group of conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub complementarity: f64,
    pub band: f64,
    pub primal: f64,
    pub sign: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [self.stationarity, self.complementarity, self.band, self.primal, self.sign]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

impl KktSystem {
    fn flows(&self, awards: &[f64]) -> Vec<f64> {
        (0..self.limits.len())
            .map(|l| awards.iter().enumerate().map(|(k, x)| self.coefficients[k][l] * x).sum())
            .collect()
    }

    pub fn instance(&self, bids: &[f64], quantities: &[f64]) -> ClearingInstance {
        ClearingInstance {
            offers: self
                .offers
                .iter()
                .enumerate()
                .map(|(k, o)| Offer {
                    kind: o.kind,
                    price: bids[k],
                    min: 0.0,
                    max: quantities[k],
                    path: o.path,
                })
                .collect(),
            impact: self.impact.clone(),
            limits: self.limits.clone(),
        }
    }

    pub fn residuals(&self, p: &KktPoint) -> KktResiduals {
        let mut r = KktResiduals::default();
        let flows = self.flows(&p.awards);
        for (k, o) in self.offers.iter().enumerate() {
            let (rho, q, x) = (p.bids[k], p.quantities[k], p.awards[k]);
            let line: f64 = (0..self.limits.len())
                .map(|l| self.coefficients[k][l] * (p.mu_up[l] - p.mu_lo[l]))
                .sum();
            r.stationarity = r.stationarity.max((rho - line - p.mu_plus[k] + p.mu_minus[k]).abs());
            r.complementarity = r
                .complementarity
                .max((p.mu_plus[k] * (q - x)).abs())
                .max((p.mu_minus[k] * x).abs());
            let band_gap = match o.band {
                Some((lo, hi)) if o.is_active() => (lo - rho).max(rho - hi).max(0.0),
                // A zero-quantity offer's price is immaterial.
                _ => q.abs(),
            };
            r.band = r.band.max(band_gap);
            let (qlo, qhi) = o.quantity_range;
            let q_gap = if o.is_active() { (qlo - q).max(q - qhi).max(0.0) } else { 0.0 };
            r.primal = r.primal.max(q_gap).max((-x).max(0.0)).max((x - q).max(0.0));
            r.sign = r.sign.max((-p.mu_plus[k]).max(0.0)).max((-p.mu_minus[k]).max(0.0));
        }
        for l in 0..self.limits.len() {
            let cap = self.limits[l];
            r.sign = r.sign.max((-p.mu_up[l]).max(0.0)).max((-p.mu_lo[l]).max(0.0));
            if cap.is_finite() {
                r.primal = r.primal.max((flows[l] - cap).max(0.0)).max((-cap - flows[l]).max(0.0));
                r.complementarity = r
                    .complementarity
                    .max((p.mu_up[l] * (cap - flows[l])).abs())
                    .max((p.mu_lo[l] * (cap + flows[l])).abs());
            } else {
                r.complementarity = r.complementarity.max(p.mu_up[l].abs()).max(p.mu_lo[l].abs());
            }
        }
        r
    }

    /// Sum of every player's objective at `p`.
    pub fn joint_objective(&self, p: &KktPoint) -> f64 {
        self.offers
            .iter()
            .enumerate()
            .map(|(k, o)| path_profit(o.kind, p.awards[k], p.bids[k], &o.terms))
            .sum()
    }

    pub fn profile(&self, p: &KktPoint) -> Profile {
        (0..self.num_players)
            .map(|i| {
                (0..self.num_paths)
                    .map(|j| {
                        let k = i * self.num_paths + j;
                        Strategy {
                            kind: self.offers[k].kind,
                            bid: p.bids[k],
                            quantity: p.quantities[k],
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Bids and quantities moved onto the admissible sets.
    fn project(&self, bids: &[f64], quantities: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut b = Vec::with_capacity(bids.len());
        let mut q = Vec::with_capacity(bids.len());
        for (k, o) in self.offers.iter().enumerate() {
            match o.band {
                Some((lo, hi)) if o.is_active() => {
                    b.push(snap(bids[k], lo, hi));
                    let (qlo, qhi) = o.quantity_range;
                    q.push(snap(quantities[k], qlo, qhi));
                }
                _ => {
                    b.push(self.reserve_price);
                    q.push(0.0);
                }
            }
        }
        (b, q)
    }

    /// Exact lower-level solution at the given bids: the ISO optimum that
    /// is best for the players (optimistic selection among ties).
    pub fn polish(&self, bids: &[f64], quantities: &[f64]) -> Result<KktPoint> {
        let (bids, quantities) = self.project(bids, quantities);
        let inst = self.instance(&bids, &quantities);
        let first = clear_market(&inst)?;
        let mut point = KktPoint::from_clearing(bids.clone(), quantities, &first);
        let (mut lp, _) = inst.program();
        for (k, o) in self.offers.iter().enumerate() {
            let unit = if o.is_active() { o.unit() } else { 0.0 };
            lp.set_objective(k, unit - bids[k]);
        }
        let revenue: Vec<(usize, f64)> = bids.iter().enumerate().map(|(k, &b)| (k, b)).collect();
        lp.add_constraint(revenue, Relation::Ge, first.objective - 1e-9 * (1.0 + first.objective.abs()));
        match lp.solve() {
            Ok(sol) => {
                point.awards = sol
                    .x
                    .iter()
                    .zip(&inst.offers)
                    .map(|(&x, o)| x.clamp(o.min, o.max))
                    .collect();
            }
            Err(e) => log::warn!("optimistic re-clear failed ({e}); keeping the first optimum"),
        }
        Ok(point)
    }
}

fn snap(v: f64, lo: f64, hi: f64) -> f64 {
    let v = v.clamp(lo, hi);
    let tol = SNAP * (1.0 + lo.abs().max(hi.abs()));
    if v - lo <= tol {
        lo
    } else if hi - v <= tol {
        hi
    } else {
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktOptions {
    pub tau_start: f64,
    pub tau_end: f64,
    pub tau_factor: f64,
    /// Jitters the starting bids inside their bands.
    pub seed: Option<u64>,
}

impl Default for KktOptions {
    fn default() -> Self {
        KktOptions {
            tau_start: 1e-1,
            tau_end: 1e-8,
            tau_factor: 0.1,
            seed: None,
        }
    }
}

impl KktOptions {
    pub fn from_solver(opts: &SolverOptions, seed: Option<u64>) -> Self {
        KktOptions {
            tau_start: opts.tau_start,
            tau_end: opts.tau_end,
            tau_factor: opts.tau_factor,
            seed,
        }
    }

    fn schedule(&self) -> Result<Vec<f64>> {
        if !(self.tau_start > 0.0 && self.tau_end > 0.0 && self.tau_end <= self.tau_start) {
            return Err(Error::Schema("relaxation schedule needs 0 < tau_end <= tau_start".into()));
        }
        if !(self.tau_factor > 0.0 && self.tau_factor < 1.0) {
            return Err(Error::Schema("tau_factor must lie in (0, 1)".into()));
        }
        let mut out = vec![self.tau_start];
        let mut tau = self.tau_start;
        while tau > self.tau_end * (1.0 + 1e-9) {
            tau = (tau * self.tau_factor).max(self.tau_end);
            out.push(tau);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktStage {
    pub tau: f64,
    pub newton_iterations: usize,
    pub centred: bool,
    /// Joint objective at the relaxed point.
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktSolution {
    pub point: KktPoint,
    /// Joint objective at the exact lower-level solution.
    pub objective: f64,
    pub residuals: KktResiduals,
    pub stages: Vec<KktStage>,
    /// Every relaxation stage centred.
    pub converged: bool,
}

/// Maximizes the joint objective over bids and requested quantities,
/// starting from `start` (band midpoints when `None`).
pub fn solve_kkt(system: &KktSystem, start: Option<&Profile>, opts: &KktOptions) -> Result<KktSolution> {
    let schedule = opts.schedule()?;
    let n = system.offers.len();
    let mut bids = vec![system.reserve_price; n];
    let mut quantities = vec![0.0; n];
    let mut rng = opts.seed.map(ChaCha8Rng::seed_from_u64);
    for (k, o) in system.offers.iter().enumerate() {
        let Some((lo, hi)) = o.band.filter(|_| o.is_active()) else { continue };
        let (qlo, qhi) = o.quantity_range;
        let (b0, q0) = match start {
            Some(p) => {
                let s = p[o.player][o.path];
                (s.bid, s.quantity)
            }
            None => (0.5 * (lo + hi), 0.5 * (qlo + qhi)),
        };
        let (mut fb, mut fq) = (fraction(b0, lo, hi), fraction(q0, qlo, qhi));
        if let Some(r) = rng.as_mut() {
            fb += r.gen_range(-0.05..0.05);
            fq += r.gen_range(-0.05..0.05);
        }
        bids[k] = lo + fb.clamp(0.05, 0.95) * (hi - lo);
        quantities[k] = qlo + fq.clamp(0.05, 0.95) * (qhi - qlo);
    }

    let mut stages = Vec::with_capacity(schedule.len());
    let mut converged = true;
    for &tau in &schedule {
        match relaxed_stage(system, &bids, &quantities, tau) {
            Ok(st) => {
                bids = st.bids;
                quantities = st.quantities;
                converged &= st.centred;
                stages.push(KktStage {
                    tau,
                    newton_iterations: st.iterations,
                    centred: st.centred,
                    objective: st.objective,
                });
            }
            Err(e) => {
                log::warn!("relaxation stage tau = {tau:e} failed: {e}");
                converged = false;
                break;
            }
        }
    }
    let point = system.polish(&bids, &quantities)?;
    Ok(KktSolution {
        objective: system.joint_objective(&point),
        residuals: system.residuals(&point),
        point,
        stages,
        converged,
    })
}

fn fraction(v: f64, lo: f64, hi: f64) -> f64 {
    if hi - lo <= 0.0 {
        0.5
    } else {
        (v - lo) / (hi - lo)
    }
}

struct StageResult {
    bids: Vec<f64>,
    quantities: Vec<f64>,
    objective: f64,
    iterations: usize,
    centred: bool,
}

/// Variable layout of one relaxed problem.
struct Layout {
    rho: Vec<Affine>,
    q: Vec<Affine>,
    x: Vec<Option<usize>>,
    mu_plus: Vec<Option<usize>>,
    /// Limited lines touched by an active offer, with their multiplier slots.
    lines: Vec<(usize, usize, usize)>,
    n: usize,
}

fn relaxed_stage(system: &KktSystem, bids: &[f64], quantities: &[f64], tau: f64) -> Result<StageResult> {
    let n_off = system.offers.len();
    let mut n = 0usize;
    let mut next = || {
        n += 1;
        n - 1
    };
    let mut rho = Vec::with_capacity(n_off);
    let mut q = Vec::with_capacity(n_off);
    let mut x = vec![None; n_off];
    let mut mu_plus = vec![None; n_off];
    for (k, o) in system.offers.iter().enumerate() {
        if !o.is_active() {
            rho.push(Affine::fixed(system.reserve_price));
            q.push(Affine::fixed(0.0));
            continue;
        }
        let (lo, hi) = o.band.unwrap();
        rho.push(if hi - lo > 1e-9 { Affine::var(next()) } else { Affine::fixed(lo) });
        let (qlo, qhi) = o.quantity_range;
        q.push(if qhi - qlo > 1e-9 { Affine::var(next()) } else { Affine::fixed(qhi) });
        x[k] = Some(next());
        mu_plus[k] = Some(next());
    }
    let mut lines = Vec::new();
    for l in 0..system.limits.len() {
        let touched = (0..n_off).any(|k| x[k].is_some() && system.coefficients[k][l] != 0.0);
        if system.limits[l].is_finite() && touched {
            if system.limits[l] <= 0.0 {
                return Err(Error::Solver(format!("line {l} has no capacity for a strictly interior start")));
            }
            let up = next();
            let lo = next();
            lines.push((l, up, lo));
        }
    }
    let layout = Layout { rho, q, x, mu_plus, lines, n };
    if layout.n == 0 {
        return Ok(StageResult {
            bids: bids.to_vec(),
            quantities: quantities.to_vec(),
            objective: 0.0,
            iterations: 0,
            centred: true,
        });
    }
    let problem = build_problem(system, &layout, tau);
    let z0 = interior_start(system, &layout, &problem, bids, quantities)?;
    let t = BARRIER_RATIO * tau;
    let centring = problem.centre(&z0, t, MAX_NEWTON);
    let z = &centring.z;
    let mut new_bids = bids.to_vec();
    let mut new_q = quantities.to_vec();
    let mut objective = 0.0;
    for (k, o) in system.offers.iter().enumerate() {
        if let Some(xi) = layout.x[k] {
            new_bids[k] = layout.rho[k].value(z);
            new_q[k] = layout.q[k].value(z);
            objective += path_profit(o.kind, z[xi], new_bids[k], &o.terms);
        } else {
            objective += path_profit(o.kind, 0.0, system.reserve_price, &o.terms);
        }
    }
    Ok(StageResult {
        bids: new_bids,
        quantities: new_q,
        objective,
        iterations: centring.iterations,
        centred: centring.converged,
    })
}

fn build_problem(system: &KktSystem, lay: &Layout, tau: f64) -> BarrierProblem {
    let mut objective = Quadratic::default();
    let mut cons: Vec<Quadratic> = Vec::new();
    let line_price = |k: usize| -> Affine {
        let mut a = Affine::fixed(0.0);
        for &(l, up, lo) in &lay.lines {
            let c = system.coefficients[k][l];
            if c != 0.0 {
                a = a.plus(&Affine::var(up).scale(c)).minus(&Affine::var(lo).scale(c));
            }
        }
        a
    };
    for (k, o) in system.offers.iter().enumerate() {
        let rho = &lay.rho[k];
        let q = &lay.q[k];
        let Some(xi) = lay.x[k] else {
            objective.constant += path_profit(o.kind, 0.0, system.reserve_price, &o.terms);
            continue;
        };
        let x = Affine::var(xi);
        let mp = Affine::var(lay.mu_plus[k].unwrap());
        // Objective: unit * (x - g+) - rho * (x - g-).
        let s0 = signed_ftrs(0.0, o.terms.fcp, o.terms.rcp);
        let unit = o.unit();
        objective = objective
            .plus(&x.add_constant(s0.positive).scale(unit).to_quadratic())
            .plus(&rho.times(&x.add_constant(s0.negative)).scale(-1.0));
        let (lo, hi) = o.band.unwrap();
        if !rho.terms.is_empty() {
            cons.push(rho.add_constant(-lo).to_quadratic());
            cons.push(Affine::fixed(hi).minus(rho).to_quadratic());
        }
        let (qlo, qhi) = o.quantity_range;
        if !q.terms.is_empty() {
            cons.push(q.add_constant(-qlo).to_quadratic());
            cons.push(Affine::fixed(qhi).minus(q).to_quadratic());
        }
        let s = q.minus(&x);
        let mm = mp.plus(&line_price(k)).minus(rho);
        cons.push(x.to_quadratic());
        cons.push(s.to_quadratic());
        cons.push(mp.to_quadratic());
        cons.push(mm.to_quadratic());
        cons.push(Affine::fixed(tau).to_quadratic().plus(&s.times(&mp).scale(-1.0)));
        cons.push(Affine::fixed(tau).to_quadratic().plus(&x.times(&mm).scale(-1.0)));
    }
    for &(l, up, lo) in &lay.lines {
        let cap = system.limits[l];
        let mut flow = Affine::fixed(0.0);
        for (k, xi) in lay.x.iter().enumerate() {
            if let Some(xi) = *xi {
                let c = system.coefficients[k][l];
                if c != 0.0 {
                    flow = flow.plus(&Affine::var(xi).scale(c));
                }
            }
        }
        let room_up = Affine::fixed(cap).minus(&flow);
        let room_lo = flow.add_constant(cap);
        cons.push(room_up.to_quadratic());
        cons.push(room_lo.to_quadratic());
        cons.push(Affine::var(up).to_quadratic());
        cons.push(Affine::var(lo).to_quadratic());
        cons.push(Affine::fixed(tau).to_quadratic().plus(&room_up.times(&Affine::var(up)).scale(-1.0)));
        cons.push(Affine::fixed(tau).to_quadratic().plus(&room_lo.times(&Affine::var(lo)).scale(-1.0)));
    }
    BarrierProblem {
        n: lay.n,
        objective,
        constraints: cons,
    }
}

/// Strictly feasible point near the exact clearing solution at the given
/// bids: awards pulled toward a small interior point, multipliers lifted.
fn interior_start(
    system: &KktSystem,
    lay: &Layout,
    problem: &BarrierProblem,
    bids: &[f64],
    quantities: &[f64],
) -> Result<Vec<f64>> {
    let outcome = clear_market(&system.instance(bids, quantities))?;
    let mut kappa = 0.5f64;
    for &(l, _, _) in &lay.lines {
        let load: f64 = (0..system.offers.len())
            .filter(|&k| lay.x[k].is_some())
            .map(|k| system.coefficients[k][l].abs() * quantities[k])
            .sum();
        if load > 0.0 {
            kappa = kappa.min(0.5 * system.limits[l] / load);
        }
    }
    let mut theta = 0.1;
    for _ in 0..80 {
        let mut z = vec![0.0; lay.n];
        for (k, _) in system.offers.iter().enumerate() {
            let Some(xi) = lay.x[k] else { continue };
            for (&(i, _), v) in lay.rho[k].terms.iter().zip([bids[k]]) {
                z[i] = v;
            }
            for (&(i, _), v) in lay.q[k].terms.iter().zip([quantities[k]]) {
                z[i] = v;
            }
            z[xi] = (1.0 - theta) * outcome.awards[k] + theta * kappa * quantities[k];
            z[lay.mu_plus[k].unwrap()] = outcome.mu_plus[k] + theta;
        }
        for &(l, up, lo) in &lay.lines {
            z[up] = outcome.mu_up[l] + theta;
            z[lo] = outcome.mu_lo[l] + theta;
        }
        if problem.strictly_feasible(&z) {
            return Ok(z);
        }
        theta *= 0.5;
    }
    Err(Error::Solver("no strictly feasible start for the relaxed system".into()))
}
