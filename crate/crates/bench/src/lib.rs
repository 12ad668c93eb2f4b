//! Benchmark fixtures shared by the criterion targets.

use ftrgame::ScenarioDocument;

pub const EIGHT_BUS: &str = include_str!("../../core/fixtures/eight_bus.toml");

pub fn eight_bus() -> ScenarioDocument {
    ScenarioDocument::from_toml(EIGHT_BUS).expect("bundled fixture parses")
}
