//! End-to-end study: dispatch estimate, risk and contribution metrics,
//! the all-obligation and all-option states, per-path type selection, the
//! final equilibrium and its certificates, and the report tables.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clearing::build_impact_coefficients;
use crate::config::{ScenarioDocument, SolverOptions};
use crate::contribution::{assess_contribution, ContributionMetrics, FtrKind, PathTerms};
use crate::equilibrium::{
    reduce_bilevel, solve_kkt, BiddingGame, Disagreement, EquilibriumSolution, IterationOptions, KktOptions,
    NashReport, Profile, RoundRecord, SolveStatus, TypeRule,
};
use crate::error::{Error, Result};
use crate::network::{
    build_network, compute_shift_factors, run_dcopf, DispatchEstimate, FtrPath, NetworkModel, SensitivityMatrices,
    ShiftFactors,
};
use crate::risk::{assess_path, redispatch_all, LoadDeviationModel, PathRisk, RedispatchResponse};

/// A scenario document that passed the run-level checks.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub document: ScenarioDocument,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(document: ScenarioDocument) -> Result<Self> {
        let r = &document.risk;
        if !(r.deviation > 0.0 && r.deviation < 1.0) {
            return Err(Error::Schema(format!("risk.deviation must lie in (0, 1), got {}", r.deviation)));
        }
        if !(0.0..=1.0).contains(&r.omega_up) {
            return Err(Error::Schema(format!("risk.omega_up must lie in [0, 1], got {}", r.omega_up)));
        }
        for d in &document.loads {
            if let Some(f) = d.deviation {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Schema(format!("load {}: deviation must lie in (0, 1)", d.id)));
                }
            }
        }
        for p in &document.paths {
            if !document.lines.iter().any(|l| l.id == p.line) {
                return Err(Error::Schema(format!("monitored path refers to unknown line {}", p.line)));
            }
        }
        for p in &document.players {
            if !document.generators.iter().any(|g| g.id == p.generator) {
                return Err(Error::Schema(format!("player {} refers to unknown generator {}", p.name, p.generator)));
            }
        }
        check_solver(&document.solver)?;
        Ok(ScenarioConfig {
            seed: document.seed,
            output_dir: document.output_dir.as_ref().map(PathBuf::from),
            document,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(ScenarioDocument::from_path(path)?)
    }
}

fn check_solver(s: &SolverOptions) -> Result<()> {
    if s.grid_points < 2 {
        return Err(Error::Schema("solver.grid_points must be at least 2".into()));
    }
    if s.max_rounds == 0 {
        return Err(Error::Schema("solver.max_rounds must be positive".into()));
    }
    if !(s.nash_tolerance > 0.0 && s.change_tolerance > 0.0) {
        return Err(Error::Schema("solver tolerances must be positive".into()));
    }
    if !(s.tau_start >= s.tau_end && s.tau_end > 0.0 && s.tau_factor > 0.0 && s.tau_factor < 1.0) {
        return Err(Error::Schema("solver relaxation schedule is malformed".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Player {
    pub name: String,
    pub generator: usize,
}

/// Everything computed before any bidding happens.
#[derive(Debug, Clone)]
pub struct Market {
    pub network: NetworkModel,
    pub shift: ShiftFactors,
    pub dispatch: DispatchEstimate,
    pub sensitivities: SensitivityMatrices,
    pub model: LoadDeviationModel,
    pub responses: Vec<RedispatchResponse>,
    pub paths: Vec<FtrPath>,
    pub players: Vec<Player>,
    pub risks: Vec<PathRisk>,
    /// `contributions[player][path]`.
    pub contributions: Vec<Vec<ContributionMetrics>>,
    pub game: BiddingGame,
}

/// Metrics at the document's nominal demand.
pub fn prepare_market(doc: &ScenarioDocument) -> Result<Market> {
    prepare_market_scaled(doc, 1.0)
}

/// Metrics with every load scaled by `scale`.
pub fn prepare_market_scaled(doc: &ScenarioDocument, scale: f64) -> Result<Market> {
    let network = build_network(doc).map_err(|e| e.at("network"))?;
    let shift = compute_shift_factors(&network).map_err(|e| e.at("network"))?;
    let demand: Vec<f64> = network.loads.iter().map(|d| d.demand * scale).collect();
    let dispatch = run_dcopf(&network, &shift, &demand).map_err(|e| e.at("dispatch"))?;
    let sensitivities = SensitivityMatrices::new(&network, &shift, &dispatch).map_err(|e| e.at("dispatch"))?;

    let model = LoadDeviationModel::new(
        doc.loads
            .iter()
            .zip(&demand)
            .map(|(d, &dem)| dem * d.deviation.unwrap_or(doc.risk.deviation))
            .collect(),
        doc.loads.iter().map(|d| d.omega_up.unwrap_or(doc.risk.omega_up)).collect(),
    )
    .map_err(|e| e.at("risk"))?;
    let responses = redispatch_all(&network, &shift, &dispatch, &model).map_err(|e| e.at("risk"))?;

    let paths: Vec<FtrPath> = if doc.paths.is_empty() {
        (0..network.lines.len())
            .map(|l| FtrPath::along_flow(&network, &dispatch, l, format!("line {}", network.lines[l].id)))
            .collect()
    } else {
        doc.paths
            .iter()
            .map(|p| {
                let l = network
                    .line_index(p.line)
                    .ok_or_else(|| Error::Schema(format!("unknown line {}", p.line)))?;
                let name = p.name.clone().unwrap_or_else(|| format!("line {}", p.line));
                Ok(FtrPath::along_flow(&network, &dispatch, l, name))
            })
            .collect::<Result<_>>()?
    };
    let players: Vec<Player> = if doc.players.is_empty() {
        network
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| Player {
                name: gen.name.clone(),
                generator: g,
            })
            .collect()
    } else {
        doc.players
            .iter()
            .map(|p| {
                let g = network
                    .generator_index(p.generator)
                    .ok_or_else(|| Error::Schema(format!("unknown generator {}", p.generator)))?;
                Ok(Player {
                    name: p.name.clone(),
                    generator: g,
                })
            })
            .collect::<Result<_>>()?
    };

    let risks = paths
        .iter()
        .map(|p| assess_path(&network, &shift, &dispatch, &responses, &model, p))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at("risk"))?;
    let contributions = players
        .iter()
        .map(|pl| {
            paths
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    assess_contribution(&network, &shift, &sensitivities, &dispatch, &responses, &model, pl.generator, j, p)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at("contribution"))?;

    let game = BiddingGame {
        players: players.iter().map(|p| p.name.clone()).collect(),
        paths: paths.iter().map(|p| p.name.clone()).collect(),
        impact: build_impact_coefficients(&shift, &paths),
        limits: network.lines.iter().map(|l| l.capacity).collect(),
        terms: contributions
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&risks)
                    .map(|(c, r)| PathTerms {
                        chance: r.chance,
                        spread: r.spread,
                        fcp: c.fcp,
                        rcp: c.rcp,
                    })
                    .collect()
            })
            .collect(),
        bounds: contributions.iter().map(|row| row.iter().map(|c| c.bounds).collect()).collect(),
        reserve_price: doc.auction.reserve_price,
    };
    Ok(Market {
        network,
        shift,
        dispatch,
        sensitivities,
        model,
        responses,
        paths,
        players,
        risks,
        contributions,
        game,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZetaRow {
    pub path: String,
    pub line: u32,
    pub source_bus: u32,
    pub sink_bus: u32,
    pub flow: f64,
    pub spread: f64,
    pub forward_potential: f64,
    pub reverse_potential: f64,
    pub zeta_forward: f64,
    pub zeta_reverse: f64,
    pub cap_obligation: f64,
    pub cap_option: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContributionRow {
    pub player: String,
    pub path: String,
    pub share: f64,
    pub fcp: f64,
    pub rcp: f64,
    pub ftr_min: f64,
    pub ftr_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfitRow {
    pub player: String,
    pub path: String,
    pub profit_obligation: f64,
    pub profit_option: f64,
    pub selected: FtrKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BidRow {
    pub player: String,
    pub path: String,
    pub bid_obligation: f64,
    pub bid_option: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McpRow {
    pub path: String,
    /// Line-price value of one MW on the path in the all-obligation state.
    pub obligation_dual_price: f64,
    /// Award-weighted accepted obligation bid.
    pub obligation_weighted_bid: f64,
    pub option_dual_price: f64,
    pub option_weighted_bid: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FtrRow {
    pub player: String,
    pub path: String,
    pub ftr_obligation: f64,
    pub ftr_option: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumRow {
    pub player: String,
    pub path: String,
    #[serde(rename = "type")]
    pub kind: FtrKind,
    pub bid: f64,
    pub quantity: f64,
    pub award: f64,
    pub profit: f64,
    pub joint_bid: f64,
    pub joint_award: f64,
}

/// One scenario state: best-response iteration plus the joint solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateResult {
    pub label: String,
    pub converged: bool,
    pub rounds: usize,
    pub history: Vec<RoundRecord>,
    pub solution: EquilibriumSolution,
    pub joint: Option<EquilibriumSolution>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalResult {
    pub state: StateResult,
    pub nash: NashReport,
    pub disagreement: Option<Disagreement>,
    /// The joint optimum and the best-response point differ materially.
    pub disagrees: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchSummary {
    pub generation: Vec<f64>,
    pub nodal_price: Vec<f64>,
    pub line_flow: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: Option<u64>,
    pub dispatch: DispatchSummary,
    pub table_zeta: Vec<ZetaRow>,
    pub table_fcp_rcp: Vec<ContributionRow>,
    pub table_profits: Vec<ProfitRow>,
    pub table_bids: Vec<BidRow>,
    pub table_mcp: Vec<McpRow>,
    pub table_ftrs: Vec<FtrRow>,
    pub table_equilibrium: Vec<EquilibriumRow>,
    pub obligation_state: Option<StateResult>,
    pub option_state: Option<StateResult>,
    pub equilibrium: Option<FinalResult>,
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    /// The final best-response iteration settled.
    pub fn converged(&self) -> bool {
        self.equilibrium.as_ref().is_none_or(|f| f.state.converged)
    }
}

fn metric_tables(market: &Market) -> (Vec<ZetaRow>, Vec<ContributionRow>) {
    let net = &market.network;
    let zeta = market
        .risks
        .iter()
        .map(|r| ZetaRow {
            path: r.path.name.clone(),
            line: net.lines[r.path.branch.line].id,
            source_bus: net.buses[r.path.source].id,
            sink_bus: net.buses[r.path.sink].id,
            flow: r.flow,
            spread: r.spread,
            forward_potential: r.forward_potential,
            reverse_potential: r.reverse_potential,
            zeta_forward: r.chance.forward,
            zeta_reverse: r.chance.reverse,
            cap_obligation: r.caps.obligation,
            cap_option: r.caps.option,
        })
        .collect();
    let contrib = market
        .contributions
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter().map(move |c| ContributionRow {
                player: market.players[i].name.clone(),
                path: market.paths[c.path].name.clone(),
                share: c.share,
                fcp: c.fcp,
                rcp: c.rcp,
                ftr_min: c.bounds.min,
                ftr_max: c.bounds.max,
            })
        })
        .collect();
    (zeta, contrib)
}

fn dispatch_summary(d: &DispatchEstimate) -> DispatchSummary {
    DispatchSummary {
        generation: d.gen_output.clone(),
        nodal_price: d.nodal_price.clone(),
        line_flow: d.line_flow.clone(),
        cost: d.cost,
    }
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f();
    timings.push(StageTiming {
        stage: stage.to_string(),
        seconds: t0.elapsed().as_secs_f64(),
    });
    out
}

/// Stops after the risk and contribution metrics.
pub fn run_metrics(config: &ScenarioConfig) -> Result<RunReport> {
    let mut timings = Vec::new();
    let market = timed(&mut timings, "metrics", || prepare_market(&config.document))?;
    let (table_zeta, table_fcp_rcp) = metric_tables(&market);
    Ok(RunReport {
        name: config.document.name.clone().unwrap_or_else(|| "scenario".into()),
        seed: config.seed,
        dispatch: dispatch_summary(&market.dispatch),
        table_zeta,
        table_fcp_rcp,
        table_profits: Vec::new(),
        table_bids: Vec::new(),
        table_mcp: Vec::new(),
        table_ftrs: Vec::new(),
        table_equilibrium: Vec::new(),
        obligation_state: None,
        option_state: None,
        equilibrium: None,
        timings,
    })
}

fn iteration_options(opts: &SolverOptions, types: TypeRule) -> IterationOptions {
    IterationOptions {
        max_rounds: opts.max_rounds,
        change_tolerance: opts.change_tolerance,
        grid_points: opts.grid_points,
        update_rule: opts.update_rule,
        types,
    }
}

/// Best responses from `start`, then the joint single-level solve for the
/// resulting types.
pub fn solve_state(
    game: &BiddingGame,
    opts: &SolverOptions,
    seed: Option<u64>,
    label: &str,
    types: TypeRule,
    start: Profile,
) -> Result<StateResult> {
    let it = game.iterate(start, &iteration_options(opts, types))?;
    let status = if it.converged { SolveStatus::Converged } else { SolveStatus::NotConverged };
    let solution = EquilibriumSolution::from_profile(game, it.profile.clone(), status)?;
    let joint = if opts.joint_kkt {
        let system = reduce_bilevel(game, &solution.profile)?;
        let sol = solve_kkt(&system, Some(&solution.profile), &KktOptions::from_solver(opts, seed))?;
        Some(EquilibriumSolution::from_kkt(game, &system, &sol))
    } else {
        None
    };
    Ok(StateResult {
        label: label.to_string(),
        converged: it.converged,
        rounds: it.rounds,
        history: it.history,
        solution,
        joint,
    })
}

/// Per (player, path), the strategy of the more profitable state; ties
/// keep the obligation.
pub fn select_types(obligation: &EquilibriumSolution, option: &EquilibriumSolution) -> Profile {
    obligation
        .profile
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, s)| {
                    if option.profits[i][j] > obligation.profits[i][j] {
                        option.profile[i][j]
                    } else {
                        *s
                    }
                })
                .collect()
        })
        .collect()
}

/// Award-weighted accepted bid and line-price value per path.
fn clearing_prices(game: &BiddingGame, sol: &EquilibriumSolution, kind: FtrKind) -> Vec<(f64, f64)> {
    let prices = sol.multipliers.line_prices();
    (0..game.num_paths())
        .map(|j| {
            let dual: f64 = game.impact[j]
                .iter()
                .zip(&prices)
                .map(|(&m, &p)| if kind == FtrKind::Option { m.max(0.0) * p } else { m * p })
                .sum();
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..game.num_players() {
                let s = sol.profile[i][j];
                if s.kind == kind {
                    num += sol.awards[i][j] * s.bid;
                    den += sol.awards[i][j];
                }
            }
            (dual, if den > 0.0 { num / den } else { 0.0 })
        })
        .collect()
}

/// Runs the full study.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    let opts = &config.document.solver;
    let mut report = run_metrics(config)?;
    let mut timings = std::mem::take(&mut report.timings);
    let market = prepare_market(&config.document)?;
    let game = &market.game;
    let seed = config.seed;

    let obl = timed(&mut timings, "obligation state", || {
        let rule = TypeRule::Only(FtrKind::Obligation);
        solve_state(game, opts, seed, "obligation", rule, game.initial_profile(rule)).map_err(|e| e.at("obligation state"))
    })?;
    let opt = timed(&mut timings, "option state", || {
        let rule = TypeRule::Only(FtrKind::Option);
        solve_state(game, opts, seed, "option", rule, game.initial_profile(rule)).map_err(|e| e.at("option state"))
    })?;
    let selected = select_types(&obl.solution, &opt.solution);
    let fin = timed(&mut timings, "equilibrium", || {
        solve_state(game, opts, seed, "final", TypeRule::Free, selected.clone()).map_err(|e| e.at("equilibrium"))
    })?;
    let nash = timed(&mut timings, "nash check", || {
        game.verify_nash(&fin.solution.profile, opts.grid_points, opts.nash_tolerance)
            .map_err(|e| e.at("nash check"))
    })?;
    if !fin.converged {
        log::warn!("final best-response iteration did not settle; reporting the best iterate");
    }
    if !nash.certified {
        log::warn!("unilateral deviation gains {:.3e} exceed the tolerance", nash.max_improvement);
    }

    let disagreement = fin.joint.as_ref().map(|j| Disagreement::between(&fin.solution, j));
    let disagrees = disagreement.is_some_and(|d| d.is_material(opts.nash_tolerance));
    if disagrees {
        log::info!("joint single-level optimum differs from the best-response equilibrium");
    }

    let names = |i: usize, j: usize| (game.players[i].clone(), game.paths[j].clone());
    let cells: Vec<(usize, usize)> = (0..game.num_players())
        .flat_map(|i| (0..game.num_paths()).map(move |j| (i, j)))
        .collect();
    report.table_profits = cells
        .iter()
        .map(|&(i, j)| {
            let (player, path) = names(i, j);
            ProfitRow {
                player,
                path,
                profit_obligation: obl.solution.profits[i][j],
                profit_option: opt.solution.profits[i][j],
                selected: selected[i][j].kind,
            }
        })
        .collect();
    report.table_bids = cells
        .iter()
        .map(|&(i, j)| {
            let (player, path) = names(i, j);
            BidRow {
                player,
                path,
                bid_obligation: obl.solution.profile[i][j].bid,
                bid_option: opt.solution.profile[i][j].bid,
            }
        })
        .collect();
    let mcp_obl = clearing_prices(game, &obl.solution, FtrKind::Obligation);
    let mcp_opt = clearing_prices(game, &opt.solution, FtrKind::Option);
    report.table_mcp = (0..game.num_paths())
        .map(|j| McpRow {
            path: game.paths[j].clone(),
            obligation_dual_price: mcp_obl[j].0,
            obligation_weighted_bid: mcp_obl[j].1,
            option_dual_price: mcp_opt[j].0,
            option_weighted_bid: mcp_opt[j].1,
        })
        .collect();
    report.table_ftrs = cells
        .iter()
        .map(|&(i, j)| {
            let (player, path) = names(i, j);
            FtrRow {
                player,
                path,
                ftr_obligation: obl.solution.awards[i][j],
                ftr_option: opt.solution.awards[i][j],
            }
        })
        .collect();
    report.table_equilibrium = cells
        .iter()
        .map(|&(i, j)| {
            let (player, path) = names(i, j);
            let s = fin.solution.profile[i][j];
            let (joint_bid, joint_award) = fin
                .joint
                .as_ref()
                .map(|k| (k.profile[i][j].bid, k.awards[i][j]))
                .unwrap_or((f64::NAN, f64::NAN));
            EquilibriumRow {
                player,
                path,
                kind: s.kind,
                bid: s.bid,
                quantity: s.quantity,
                award: fin.solution.awards[i][j],
                profit: fin.solution.profits[i][j],
                joint_bid,
                joint_award,
            }
        })
        .collect();
    let mut state = fin;
    state.solution = state.solution.with_nash(nash.clone());
    report.obligation_state = Some(obl);
    report.option_state = Some(opt);
    report.equilibrium = Some(FinalResult {
        state,
        nash,
        disagreement,
        disagrees,
    });
    report.timings = timings;
    Ok(report)
}

/// Fixed file names written by [`emit_tables`].
pub const TABLE_FILES: [&str; 7] = [
    "table1_zeta.csv",
    "table2_fcp_rcp.csv",
    "table3_profits.csv",
    "table4_bids.csv",
    "table5_mcp.csv",
    "table6_ftrs.csv",
    "equilibrium.csv",
];
pub const SUMMARY_FILE: &str = "summary.json";
pub const SOLUTION_FILE: &str = "solution.json";

fn num(v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one CSV per table (4 decimals), the JSON summary, and the final
/// solution when there is one. Returns the paths written.
pub fn emit_tables(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |file: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let p = dir.join(file);
        write_csv(&p, header, rows)?;
        written.push(p);
        Ok(())
    };
    emit(
        TABLE_FILES[0],
        &[
            "path", "line", "source_bus", "sink_bus", "flow_mw", "spread", "fpf_mw", "rpf_mw", "zeta_f", "zeta_r",
            "cap_obligation", "cap_option",
        ],
        report
            .table_zeta
            .iter()
            .map(|r| {
                vec![
                    r.path.clone(),
                    r.line.to_string(),
                    r.source_bus.to_string(),
                    r.sink_bus.to_string(),
                    num(r.flow),
                    num(r.spread),
                    num(r.forward_potential),
                    num(r.reverse_potential),
                    num(r.zeta_forward),
                    num(r.zeta_reverse),
                    num(r.cap_obligation),
                    num(r.cap_option),
                ]
            })
            .collect(),
    )?;
    emit(
        TABLE_FILES[1],
        &["player", "path", "share_mw", "fcp_mw", "rcp_mw", "ftr_min_mw", "ftr_max_mw"],
        report
            .table_fcp_rcp
            .iter()
            .map(|r| {
                vec![
                    r.player.clone(),
                    r.path.clone(),
                    num(r.share),
                    num(r.fcp),
                    num(r.rcp),
                    num(r.ftr_min),
                    num(r.ftr_max),
                ]
            })
            .collect(),
    )?;
    if report.equilibrium.is_some() {
        emit(
            TABLE_FILES[2],
            &["player", "path", "profit_obligation", "profit_option", "selected"],
            report
                .table_profits
                .iter()
                .map(|r| {
                    vec![
                        r.player.clone(),
                        r.path.clone(),
                        num(r.profit_obligation),
                        num(r.profit_option),
                        r.selected.label().into(),
                    ]
                })
                .collect(),
        )?;
        emit(
            TABLE_FILES[3],
            &["player", "path", "bid_obligation", "bid_option"],
            report
                .table_bids
                .iter()
                .map(|r| vec![r.player.clone(), r.path.clone(), num(r.bid_obligation), num(r.bid_option)])
                .collect(),
        )?;
        emit(
            TABLE_FILES[4],
            &[
                "path",
                "obligation_dual_price",
                "obligation_weighted_bid",
                "option_dual_price",
                "option_weighted_bid",
            ],
            report
                .table_mcp
                .iter()
                .map(|r| {
                    vec![
                        r.path.clone(),
                        num(r.obligation_dual_price),
                        num(r.obligation_weighted_bid),
                        num(r.option_dual_price),
                        num(r.option_weighted_bid),
                    ]
                })
                .collect(),
        )?;
        emit(
            TABLE_FILES[5],
            &["player", "path", "ftr_obligation", "ftr_option"],
            report
                .table_ftrs
                .iter()
                .map(|r| vec![r.player.clone(), r.path.clone(), num(r.ftr_obligation), num(r.ftr_option)])
                .collect(),
        )?;
        emit(
            TABLE_FILES[6],
            &["player", "path", "type", "bid", "quantity", "award", "profit", "joint_bid", "joint_award"],
            report
                .table_equilibrium
                .iter()
                .map(|r| {
                    vec![
                        r.player.clone(),
                        r.path.clone(),
                        r.kind.label().into(),
                        num(r.bid),
                        num(r.quantity),
                        num(r.award),
                        num(r.profit),
                        num(r.joint_bid),
                        num(r.joint_award),
                    ]
                })
                .collect(),
        )?;
    }
    let summary = dir.join(SUMMARY_FILE);
    std::fs::write(&summary, serde_json::to_string_pretty(report)?)?;
    written.push(summary);
    if let Some(f) = &report.equilibrium {
        let p = dir.join(SOLUTION_FILE);
        std::fs::write(&p, serde_json::to_string_pretty(&f.state.solution)?)?;
        written.push(p);
    }
    Ok(written)
}

/// Reads a solution written by [`emit_tables`].
pub fn load_solution(path: impl AsRef<Path>) -> Result<EquilibriumSolution> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
