//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::Instant;

use ftrgame::clearing::{clear_market, ClearingInstance, Offer};
use ftrgame::contribution::{risk_adjusted_profit, signed_ftrs, FtrKind};
use ftrgame::network::{build_network, compute_shift_factors, run_dcopf, update_slack_factor, Branch};
use ftrgame::risk::chance_coefficients;
use ftrgame::scenario::{emit_tables, prepare_market, prepare_market_scaled, run_scenario, RunReport, TABLE_FILES};
use ftrgame::{ScenarioConfig, ScenarioDocument, SolveStatus};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const IDENTITY_TOL: f64 = 1e-9;
const SLACK_TOL: f64 = 1e-10;
const ALGEBRA_TOL: f64 = 1e-12;
const CLEARING_TOL: f64 = 1e-6;
const KKT_TOL: f64 = 1e-6;
const NASH_TOL: f64 = 1e-3;
const NASH_GRID: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn coefficient_identities() -> Outcome {
    let mut rng = common::rng(11);
    let (mut networks, mut attempts, mut violations, mut checks) = (0, 0, 0usize, 0usize);
    let mut first = None;
    while networks < 50 && attempts < 500 {
        attempts += 1;
        let Ok(doc) = ScenarioDocument::from_toml(&common::random_scenario(&mut rng)) else {
            continue;
        };
        let Ok(m) = prepare_market(&doc) else {
            continue;
        };
        networks += 1;
        let mut check = |ok: bool, what: &str| {
            checks += 1;
            if !ok {
                violations += 1;
                first.get_or_insert_with(|| format!("network {networks}: {what}"));
            }
        };
        for r in &m.risks {
            check((r.chance.forward + r.chance.reverse - 1.0).abs() <= IDENTITY_TOL, "zeta_f + zeta_r != 1");
            check((r.weights.values.iter().sum::<f64>() - 1.0).abs() <= IDENTITY_TOL, "sum w != 1");
            check(r.forward_potential >= -IDENTITY_TOL, "FPF < 0");
            check(r.reverse_potential <= IDENTITY_TOL, "RPF > 0");
        }
        for c in m.contributions.iter().flatten() {
            check((c.weights.values.iter().sum::<f64>() - 1.0).abs() <= IDENTITY_TOL, "sum w' != 1");
            check(c.fcp >= -IDENTITY_TOL, "FCP < 0");
            check(c.rcp <= IDENTITY_TOL, "RCP > 0");
        }
    }
    let pass = networks == 50 && violations == 0;
    outcome(
        pass,
        format!(
            "{networks} networks ({attempts} drawn), {checks} checks, {violations} violations{}",
            first.map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn slack_factor_oracle() -> Outcome {
    let mut rng = common::rng(23);
    let (mut done, mut capped, mut worst) = (0, 0, 0.0f64);
    while done < 1000 {
        let Ok(doc) = ScenarioDocument::from_toml(&common::random_scenario(&mut rng)) else {
            continue;
        };
        let net = build_network(&doc).unwrap();
        let shift = compute_shift_factors(&net).unwrap();
        let Ok(base) = run_dcopf(&net, &shift, &net.nominal_demand()) else {
            continue;
        };
        for _ in 0..20 {
            let line = rng.gen_range(0..net.lines.len());
            let branch = if rng.gen_bool(0.5) { Branch::along(line) } else { Branch::against(line) };
            let gen = rng.gen_range(0..net.generators.len());
            let load = rng.gen_range(0..net.loads.len());
            let delta = rng.gen_range(0.5..40.0);
            let upd = update_slack_factor(&net, &shift, &base, branch, gen, load, delta).unwrap();

            // Direct evaluation after the move: new outputs, new flow.
            let a = |bus: usize| branch.shift(&shift, bus);
            let mut p = base.gen_output.clone();
            p[gen] += delta;
            let flow = base.flow(branch);
            let moved = flow + (a(net.generators[gen].bus) - a(net.loads[load].bus)) * delta;
            let limit = net.lines[line].capacity;
            let new_flow = if moved - flow - (limit - flow) > 0.0 { limit } else { moved };
            let weighted: f64 = net
                .generators
                .iter()
                .zip(&p)
                .filter(|(g, _)| g.bus != net.slack)
                .map(|(g, v)| a(g.bus) * v)
                .sum();
            let direct = (new_flow - weighted) / p.iter().sum::<f64>();
            worst = worst.max((upd.value - direct).abs());
            capped += usize::from(upd.capped);
            done += 1;
        }
    }
    let pass = worst <= SLACK_TOL && capped > 0 && capped < done;
    outcome(pass, format!("{done} perturbations ({capped} capped), max error {worst:.2e}"))
}

fn profit_algebra() -> Outcome {
    let values = [-7.5, -1.0, 0.0, 0.25, 3.0, 12.0];
    let pairs = [(0.0, 0.0), (2.0, 0.0), (0.0, -2.0), (3.0, -1.0), (1.0, -3.0), (2.5, -2.5), (4.0, -4.0 + 1e-3)];
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &(fcp, rcp) in &pairs {
        for &ftr in &values {
            for &spread in &values {
                for &price in &values {
                    cases += 1;
                    let got = risk_adjusted_profit(ftr, fcp, rcp, spread, price);
                    let g: f64 = fcp - f64::abs(rcp);
                    // The two regimes the combined formula covers.
                    let branch = if g >= 0.0 {
                        (ftr - g) * spread - ftr * price
                    } else {
                        ftr * spread - (ftr + rcp.abs() - fcp) * price
                    };
                    worst = worst.max((got - branch).abs());
                    let s = signed_ftrs(ftr, fcp, rcp);
                    worst = worst.max((s.positive - (ftr - g.max(0.0))).abs());
                    worst = worst.max((s.negative - (ftr - g.min(0.0))).abs());
                    worst = worst.max(((s.negative - s.positive) - g.abs()).abs());
                    worst = worst.max((got - (s.positive * spread - s.negative * price)).abs());
                }
            }
        }
    }
    outcome(worst <= ALGEBRA_TOL, format!("{cases} cases, max error {worst:.2e}"))
}

/// Best objective over all vertices of the clearing polytope.
fn brute_force(inst: &ClearingInstance) -> Option<f64> {
    let n = inst.offers.len();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (k, o) in inst.offers.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        rows.push((e.clone(), o.max));
        rows.push((e.iter().map(|v| -v).collect(), -o.min));
    }
    for l in inst.limited_lines() {
        let c: Vec<f64> = (0..n).map(|k| inst.coefficient(k, l)).collect();
        rows.push((c.clone(), inst.limits[l]));
        rows.push((c.iter().map(|v| -v).collect(), inst.limits[l]));
    }
    let mut best: Option<f64> = None;
    let m = rows.len();
    let mut pick = vec![0usize; n];
    fn next(pick: &mut [usize], m: usize) -> bool {
        let n = pick.len();
        for i in (0..n).rev() {
            if pick[i] < m - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, p) in pick.iter_mut().enumerate() {
        *p = i;
    }
    loop {
        let a = DMatrix::from_fn(n, n, |r, c| rows[pick[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| rows[pick[r]].1);
        if a.determinant().abs() > 1e-12 {
            if let Some(x) = a.lu().solve(&b) {
                let feasible = rows
                    .iter()
                    .all(|(c, rhs)| c.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() <= rhs + 1e-9);
                if feasible {
                    let v: f64 = inst.offers.iter().zip(x.iter()).map(|(o, x)| o.price * x).sum();
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        }
        if !next(&mut pick, m) {
            break;
        }
    }
    best
}

fn clearing_vs_brute_force() -> Outcome {
    let mut rng = common::rng(37);
    let (mut worst, mut infeasible_agree, mut mismatches) = (0.0f64, 0, 0);
    let trials = 400;
    for _ in 0..trials {
        let n = rng.gen_range(1..=3);
        let lines = rng.gen_range(1..=2);
        let impact: Vec<Vec<f64>> = (0..n).map(|_| (0..lines).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let limits: Vec<f64> = (0..lines)
            .map(|_| if rng.gen_bool(0.15) { f64::INFINITY } else { rng.gen_range(2.0..20.0) })
            .collect();
        let offers: Vec<Offer> = (0..n)
            .map(|k| {
                let min = if rng.gen_bool(0.2) { rng.gen_range(0.0..6.0) } else { 0.0 };
                Offer {
                    kind: if rng.gen_bool(0.5) { FtrKind::Obligation } else { FtrKind::Option },
                    price: rng.gen_range(0.0..20.0),
                    min,
                    max: min + rng.gen_range(1.0..30.0),
                    path: k,
                }
            })
            .collect();
        let inst = ClearingInstance::new(offers, impact, limits).unwrap();
        match (clear_market(&inst), brute_force(&inst)) {
            (Ok(out), Some(best)) => worst = worst.max((out.objective - best).abs()),
            (Err(_), None) => infeasible_agree += 1,
            _ => mismatches += 1,
        }
    }

    // Mirrored counter-flow pair: the reverse path relieves the line only
    // when it is an obligation.
    let mirrored = |kind| {
        let offers = vec![
            Offer { kind, price: 10.0, min: 0.0, max: 15.0, path: 0 },
            Offer { kind, price: 2.0, min: 0.0, max: 8.0, path: 1 },
        ];
        let inst = ClearingInstance::new(offers, vec![vec![1.0], vec![-1.0]], vec![10.0]).unwrap();
        clear_market(&inst).unwrap().awards
    };
    let obl = mirrored(FtrKind::Obligation);
    let opt = mirrored(FtrKind::Option);
    let sft = opt.iter().zip(&obl).all(|(a, b)| *a <= b + CLEARING_TOL) && opt[0] < obl[0] - CLEARING_TOL;
    let pass = worst <= CLEARING_TOL && mismatches == 0 && sft;
    outcome(
        pass,
        format!(
            "{trials} instances, max objective gap {worst:.2e}, {infeasible_agree} agreed infeasible, \
             {mismatches} mismatches; counter-flow awards obligation {obl:?} vs option {opt:?}"
        ),
    )
}

fn scenario_config(name: &str) -> ScenarioConfig {
    ScenarioConfig::new(common::load_fixture(name)).unwrap()
}

fn kkt_residuals(reports: &[&RunReport]) -> Outcome {
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    for report in reports {
        let states = [&report.obligation_state, &report.option_state]
            .into_iter()
            .flatten()
            .chain(report.equilibrium.as_ref().map(|e| &e.state));
        for state in states {
            for sol in std::iter::once(&state.solution).chain(state.joint.as_ref()) {
                if sol.status != SolveStatus::Converged {
                    skipped += 1;
                    continue;
                }
                let r = sol.residuals;
                worst = worst.max(r.stationarity).max(r.complementarity).max(r.band);
                checked += 1;
            }
        }
    }
    outcome(
        checked > 0 && worst <= KKT_TOL,
        format!("{checked} accepted equilibria, {skipped} unconverged skipped, max residual {worst:.2e}"),
    )
}

fn nash_certificate(report: &RunReport, seconds: f64) -> Outcome {
    let Some(eq) = &report.equilibrium else {
        return outcome(false, "no equilibrium".into());
    };
    let cfg = scenario_config("eight_bus.toml");
    let market = prepare_market(&cfg.document).unwrap();
    let t = Instant::now();
    let nash = market.game.verify_nash(&eq.state.solution.profile, NASH_GRID, NASH_TOL).unwrap();
    let shape = (market.players.len(), market.paths.len());
    let pass = nash.max_improvement <= NASH_TOL && shape == (6, 5);
    outcome(
        pass,
        format!(
            "{} players x {} paths, max unilateral gain {:.3e} over {} deviations \
             (check {:.1} s, full run {:.1} s)",
            shape.0,
            shape.1,
            nash.max_improvement,
            nash.deviations,
            t.elapsed().as_secs_f64(),
            seconds
        ),
    )
}

fn table_patterns(report: &RunReport) -> Outcome {
    let doc = common::load_fixture("eight_bus.toml");
    let mut notes = Vec::new();

    let mut a_ok = true;
    for z in &report.table_zeta {
        let none = report
            .table_ftrs
            .iter()
            .filter(|r| r.path == z.path)
            .all(|r| r.ftr_obligation.abs() <= 1e-9);
        if none != (z.zeta_forward < 0.5) {
            a_ok = false;
            notes.push(format!("{} zeta {:.4} zero-obligation {none}", z.path, z.zeta_forward));
        }
    }
    let zero: Vec<&str> = report
        .table_zeta
        .iter()
        .filter(|z| z.zeta_forward < 0.5)
        .map(|z| z.path.as_str())
        .collect();

    let b_ok = report.table_bids.iter().all(|r| r.bid_option >= r.bid_obligation - 1e-12);

    let extremes = |scale: f64| -> (String, String) {
        let m = prepare_market_scaled(&doc, scale).unwrap();
        let by = |f: fn(f64, f64) -> bool| {
            let mut best = &m.risks[0];
            for r in &m.risks {
                if f(r.chance.forward, best.chance.forward) {
                    best = r;
                }
            }
            best.path.name.clone()
        };
        (by(|a, b| a > b), by(|a, b| a < b))
    };
    let nominal = extremes(1.0);
    let low = extremes(0.99);
    let high = extremes(1.01);
    let c_ok = low == nominal && high == nominal;
    notes.push(format!("highest {} lowest {} at 0.99/1.00/1.01 -> {:?} {:?}", nominal.0, nominal.1, low, high));

    outcome(
        a_ok && b_ok && c_ok,
        format!(
            "(a) {} [no obligations on {:?}] (b) {} (c) {}; {}",
            if a_ok { "ok" } else { "violated" },
            zero,
            if b_ok { "ok" } else { "violated" },
            if c_ok { "ok" } else { "violated" },
            notes.join("; ")
        ),
    )
}

fn bid_cap_arithmetic() -> Outcome {
    let chance = chance_coefficients(8.0, 0.0, -2.0).unwrap();
    let caps = chance.caps(1.0);
    let pass = chance.forward == 0.8 && caps.obligation == 0.6 && caps.option == 0.8;
    outcome(
        pass,
        format!("zeta_f {}, caps ({}, {})", chance.forward, caps.obligation, caps.option),
    )
}

fn determinism(first: &RunReport) -> Outcome {
    let cfg = scenario_config("eight_bus.toml");
    let second = run_scenario(&cfg).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_tables(first, a.path()).unwrap();
    emit_tables(&second, b.path()).unwrap();
    let differing: Vec<&str> = TABLE_FILES
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).unwrap() != std::fs::read(b.path().join(f)).unwrap())
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} tables compared, differing: {:?}", TABLE_FILES.len(), differing),
    )
}

fn timed(limit: Option<f64>, f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let t = Instant::now();
    let mut o = f();
    let s = t.elapsed().as_secs_f64();
    if let Some(limit) = limit {
        if s > limit {
            o.pass = false;
            o.detail.push_str(&format!("; exceeded {limit} s"));
        }
    }
    (o, s)
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut record = |n, name, (o, s): (Outcome, f64)| results.push((n, name, o, s));

    record(1, "coefficient identities", timed(Some(10.0), coefficient_identities));
    record(2, "slack factor update", timed(Some(5.0), slack_factor_oracle));
    record(3, "profit branch algebra", timed(None, profit_algebra));
    record(4, "clearing vs brute force", timed(None, clearing_vs_brute_force));

    let t = Instant::now();
    let eight = run_scenario(&scenario_config("eight_bus.toml"));
    let run_seconds = t.elapsed().as_secs_f64();
    let two = run_scenario(&scenario_config("two_bus.toml"));
    match (&eight, &two) {
        (Ok(eight), Ok(two)) => {
            record(5, "KKT residuals", timed(None, || kkt_residuals(&[eight, two])));
            record(6, "epsilon-Nash certificate", timed(Some(60.0), || nash_certificate(eight, run_seconds)));
            record(7, "table patterns", timed(None, || table_patterns(eight)));
        }
        (e8, e2) => {
            let msg = format!(
                "scenario run failed: {:?} / {:?}",
                e8.as_ref().err().map(|e| e.to_string()),
                e2.as_ref().err().map(|e| e.to_string())
            );
            for (n, name) in [(5, "KKT residuals"), (6, "epsilon-Nash certificate"), (7, "table patterns")] {
                record(n, name, (outcome(false, msg.clone()), 0.0));
            }
        }
    }
    record(8, "bid cap arithmetic", timed(None, bid_cap_arithmetic));
    match &eight {
        Ok(eight) => record(9, "determinism", timed(None, || determinism(eight))),
        Err(_) => record(9, "determinism", (outcome(false, "scenario run failed".into()), 0.0)),
    }

    let mut failed = 0;
    for (n, name, o, s) in &results {
        println!("{} [{n}] {name}: {} ({s:.2} s)", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
}
