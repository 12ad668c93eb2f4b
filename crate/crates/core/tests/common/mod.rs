#![allow(dead_code)]

use std::fmt::Write;
use std::path::PathBuf;

use ftrgame::ScenarioDocument;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_fixture(name: &str) -> ScenarioDocument {
    ScenarioDocument::from_path(fixture(name)).expect("fixture parses")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A connected network with 3 to 8 buses, a few generators and loads, and
/// some finite line limits. Every line is monitored.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(3..=8usize);
    let mut s = String::from("buses = [");
    for b in 1..=n {
        write!(s, "{{ id = {b} }}, ").unwrap();
    }
    s.push_str("]\nlines = [\n");
    let mut pairs: Vec<(usize, usize)> = (2..=n).map(|b| (rng.gen_range(1..b), b)).collect();
    for _ in 0..rng.gen_range(0..n) {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        if a != b && !pairs.contains(&(a.min(b), a.max(b))) {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    for (k, (a, b)) in pairs.iter().enumerate() {
        let cap = if rng.gen_bool(0.3) { rng.gen_range(10.0..60.0) } else { 1000.0 };
        writeln!(
            s,
            "  {{ id = {}, from = {a}, to = {b}, reactance = {:.4}, capacity = {cap:.3} }},",
            k + 1,
            rng.gen_range(0.05..0.3)
        )
        .unwrap();
    }
    s.push_str("]\ngenerators = [\n");
    let ng = rng.gen_range(2..=4);
    for g in 1..=ng {
        writeln!(
            s,
            "  {{ id = {g}, bus = {}, cost = {:.3}, p_max = {:.3} }},",
            rng.gen_range(1..=n),
            rng.gen_range(5.0..50.0),
            rng.gen_range(40.0..120.0)
        )
        .unwrap();
    }
    s.push_str("]\nloads = [\n");
    for d in 1..=rng.gen_range(1..=4) {
        writeln!(
            s,
            "  {{ id = {d}, bus = {}, demand = {:.3} }},",
            rng.gen_range(1..=n),
            rng.gen_range(5.0..25.0)
        )
        .unwrap();
    }
    writeln!(s, "]\n[risk]\ndeviation = 0.1\nomega_up = {:.3}", rng.gen_range(0.3..0.9)).unwrap();
    s
}
