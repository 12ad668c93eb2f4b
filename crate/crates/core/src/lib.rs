pub mod clearing;
pub mod config;
pub mod contribution;
pub mod equilibrium;
pub mod error;
pub mod lp;
pub mod network;
pub mod risk;
pub mod scenario;

pub use clearing::{clear_market, ClearingInstance, ClearingOutcome, Offer};
pub use config::{ScenarioDocument, SolverOptions, UpdateRule};
pub use contribution::{FtrBounds, FtrKind, PathTerms};
pub use equilibrium::{
    BiddingGame, Disagreement, EquilibriumSolution, NashReport, Profile, SolveStatus, Strategy, TypeRule,
};
pub use error::{Error, Result};
pub use network::{DispatchEstimate, FtrPath, NetworkModel, ShiftFactors};
pub use risk::{BidCaps, Chance, PathRisk};
pub use scenario::{emit_tables, prepare_market, run_metrics, run_scenario, Market, RunReport, ScenarioConfig};
