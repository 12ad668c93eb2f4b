//! DC network model, injection shift factors, the DCOPF energy-market
//! estimate and generation distribution factors.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::ScenarioDocument;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpError, Relation, Sense};

#[derive(Debug, Clone, Serialize)]
pub struct Bus {
    pub id: u32,
    pub name: String,
}

/// A transmission line; `from` and `to` are bus indices.
#[derive(Debug, Clone, Serialize)]
pub struct Line {
    pub id: u32,
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Generator {
    pub id: u32,
    pub name: String,
    pub bus: usize,
    pub cost: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Load {
    pub id: u32,
    pub bus: usize,
    pub demand: f64,
}

/// Validated, immutable DC network.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub slack: usize,
}

impl NetworkModel {
    /// Checks references, parameters and connectivity.
    pub fn new(
        buses: Vec<Bus>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
        loads: Vec<Load>,
        slack: usize,
    ) -> Result<Self> {
        let n = buses.len();
        if n == 0 {
            return Err(Error::Topology("network has no buses".into()));
        }
        if generators.is_empty() {
            return Err(Error::Topology("network has no generators".into()));
        }
        if slack >= n {
            return Err(Error::Topology(format!("slack bus index {slack} out of range")));
        }
        for l in &lines {
            if l.from >= n || l.to >= n {
                return Err(Error::Topology(format!("line {} references a missing bus", l.id)));
            }
            if l.from == l.to {
                return Err(Error::Topology(format!("line {} is a self loop", l.id)));
            }
            if !(l.reactance.is_finite() && l.reactance != 0.0) {
                return Err(Error::Schema(format!("line {} reactance must be finite and nonzero", l.id)));
            }
            if l.capacity.is_nan() || l.capacity <= 0.0 {
                return Err(Error::Schema(format!("line {} capacity must be positive", l.id)));
            }
        }
        for g in &generators {
            if g.bus >= n {
                return Err(Error::Topology(format!("generator {} references a missing bus", g.id)));
            }
            if !(g.p_min.is_finite() && g.p_max.is_finite() && g.p_min <= g.p_max) {
                return Err(Error::Schema(format!("generator {} has invalid limits", g.id)));
            }
        }
        for d in &loads {
            if d.bus >= n {
                return Err(Error::Topology(format!("load {} references a missing bus", d.id)));
            }
            if !(d.demand.is_finite() && d.demand >= 0.0) {
                return Err(Error::Schema(format!("load {} demand must be finite and nonnegative", d.id)));
            }
        }

        let mut adj = vec![Vec::new(); n];
        for l in &lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(b) = queue.pop_front() {
            for &nb in &adj[b] {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(Error::Topology(format!("network is disconnected at bus {}", buses[b].id)));
        }

        Ok(NetworkModel {
            buses,
            lines,
            generators,
            loads,
            slack,
        })
    }

    pub fn nominal_demand(&self) -> Vec<f64> {
        self.loads.iter().map(|d| d.demand).collect()
    }

    pub fn line_index(&self, id: u32) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn generator_index(&self, id: u32) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    /// Net injection per bus for a dispatch and demand vector.
    pub fn injections(&self, gen_output: &[f64], demand: &[f64]) -> Vec<f64> {
        let mut inj = vec![0.0; self.buses.len()];
        for (g, p) in self.generators.iter().zip(gen_output) {
            inj[g.bus] += p;
        }
        for (d, q) in self.loads.iter().zip(demand) {
            inj[d.bus] -= q;
        }
        inj
    }
}

/// Builds and validates the network part of a scenario document.
pub fn build_network(doc: &ScenarioDocument) -> Result<NetworkModel> {
    let mut index = HashMap::new();
    for (i, b) in doc.buses.iter().enumerate() {
        if index.insert(b.id, i).is_some() {
            return Err(Error::Schema(format!("duplicate bus id {}", b.id)));
        }
    }
    let bus = |id: u32, what: &str| {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Topology(format!("{what} references unknown bus {id}")))
    };
    let buses = doc
        .buses
        .iter()
        .map(|b| Bus {
            id: b.id,
            name: b.name.clone().unwrap_or_else(|| format!("bus{}", b.id)),
        })
        .collect();
    let mut lines = Vec::with_capacity(doc.lines.len());
    for l in &doc.lines {
        if lines.iter().any(|x: &Line| x.id == l.id) {
            return Err(Error::Schema(format!("duplicate line id {}", l.id)));
        }
        lines.push(Line {
            id: l.id,
            from: bus(l.from, &format!("line {}", l.id))?,
            to: bus(l.to, &format!("line {}", l.id))?,
            reactance: l.reactance,
            capacity: l.capacity,
        });
    }
    let mut generators = Vec::with_capacity(doc.generators.len());
    for g in &doc.generators {
        if generators.iter().any(|x: &Generator| x.id == g.id) {
            return Err(Error::Schema(format!("duplicate generator id {}", g.id)));
        }
        generators.push(Generator {
            id: g.id,
            name: g.name.clone().unwrap_or_else(|| format!("G{}", g.id)),
            bus: bus(g.bus, &format!("generator {}", g.id))?,
            cost: g.cost,
            p_min: g.p_min,
            p_max: g.p_max,
        });
    }
    let mut loads = Vec::with_capacity(doc.loads.len());
    for d in &doc.loads {
        if loads.iter().any(|x: &Load| x.id == d.id) {
            return Err(Error::Schema(format!("duplicate load id {}", d.id)));
        }
        loads.push(Load {
            id: d.id,
            bus: bus(d.bus, &format!("load {}", d.id))?,
            demand: d.demand,
        });
    }
    let slack = match doc.slack_bus {
        Some(id) => bus(id, "slack_bus")?,
        None => generators
            .iter()
            .min_by_key(|g| g.id)
            .map(|g| g.bus)
            .ok_or_else(|| Error::Topology("network has no generators".into()))?,
    };
    NetworkModel::new(buses, lines, generators, loads, slack)
}

/// Injection shift factors: flow on a line per MW injected at a bus and
/// withdrawn at the slack bus.
#[derive(Debug, Clone)]
pub struct ShiftFactors {
    a: DMatrix<f64>,
}

impl ShiftFactors {
    pub fn get(&self, line: usize, bus: usize) -> f64 {
        self.a[(line, bus)]
    }

    pub fn num_lines(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_buses(&self) -> usize {
        self.a.ncols()
    }

    /// Flow on `line` per MW moved from `source` to `sink`.
    pub fn ptdf(&self, source: usize, sink: usize, line: usize) -> f64 {
        self.a[(line, source)] - self.a[(line, sink)]
    }

    /// Line flows for a vector of bus injections.
    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        (0..self.num_lines())
            .map(|l| (0..self.num_buses()).map(|b| self.a[(l, b)] * injections[b]).sum())
            .collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

pub fn compute_shift_factors(net: &NetworkModel) -> Result<ShiftFactors> {
    let n = net.buses.len();
    let mut bbus = DMatrix::<f64>::zeros(n, n);
    for l in &net.lines {
        let y = 1.0 / l.reactance;
        bbus[(l.from, l.from)] += y;
        bbus[(l.to, l.to)] += y;
        bbus[(l.from, l.to)] -= y;
        bbus[(l.to, l.from)] -= y;
    }
    let keep: Vec<usize> = (0..n).filter(|&b| b != net.slack).collect();
    let mut x = DMatrix::<f64>::zeros(n, n);
    if !keep.is_empty() {
        let reduced = DMatrix::from_fn(keep.len(), keep.len(), |i, j| bbus[(keep[i], keep[j])]);
        let inv = reduced.try_inverse().ok_or(Error::SingularNetwork)?;
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularNetwork);
        }
        for (i, &bi) in keep.iter().enumerate() {
            for (j, &bj) in keep.iter().enumerate() {
                x[(bi, bj)] = inv[(i, j)];
            }
        }
    }
    let a = DMatrix::from_fn(net.lines.len(), n, |l, b| {
        let line = &net.lines[l];
        (x[(line.from, b)] - x[(line.to, b)]) / line.reactance
    });
    Ok(ShiftFactors { a })
}

/// A line viewed in a chosen direction: `sign = 1` follows `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Branch {
    pub line: usize,
    pub sign: f64,
}

impl Branch {
    pub fn along(line: usize) -> Self {
        Branch { line, sign: 1.0 }
    }

    pub fn against(line: usize) -> Self {
        Branch { line, sign: -1.0 }
    }

    pub fn reversed(self) -> Self {
        Branch {
            line: self.line,
            sign: -self.sign,
        }
    }

    /// (upstream, downstream) buses in this direction.
    pub fn endpoints(&self, net: &NetworkModel) -> (usize, usize) {
        let l = &net.lines[self.line];
        if self.sign >= 0.0 {
            (l.from, l.to)
        } else {
            (l.to, l.from)
        }
    }

    pub fn shift(&self, shift: &ShiftFactors, bus: usize) -> f64 {
        self.sign * shift.get(self.line, bus)
    }
}

/// A monitored point-to-point FTR path running along one line.
#[derive(Debug, Clone, Serialize)]
pub struct FtrPath {
    pub name: String,
    pub branch: Branch,
    pub source: usize,
    pub sink: usize,
}

impl FtrPath {
    pub fn new(net: &NetworkModel, name: impl Into<String>, branch: Branch) -> Self {
        let (source, sink) = branch.endpoints(net);
        FtrPath {
            name: name.into(),
            branch,
            source,
            sink,
        }
    }

    /// Path along `line`, oriented with its estimated flow (`from -> to`
    /// when the flow is zero).
    pub fn along_flow(net: &NetworkModel, dispatch: &DispatchEstimate, line: usize, name: impl Into<String>) -> Self {
        let branch = if dispatch.line_flow[line] < 0.0 {
            Branch::against(line)
        } else {
            Branch::along(line)
        };
        FtrPath::new(net, name, branch)
    }
}

/// Output of the DCOPF energy-market estimate.
#[derive(Debug, Clone, Serialize)]
pub struct DispatchEstimate {
    /// Demand per load, MW.
    pub demand: Vec<f64>,
    /// Output per generator, MW.
    pub gen_output: Vec<f64>,
    /// Signed flow per line (from -> to positive), MW.
    pub line_flow: Vec<f64>,
    /// Locational marginal price per bus.
    pub nodal_price: Vec<f64>,
    pub cost: f64,
    /// The LP optimum was degenerate, so prices may not be unique.
    pub degenerate: bool,
}

impl DispatchEstimate {
    pub fn total_generation(&self) -> f64 {
        self.gen_output.iter().sum()
    }

    pub fn flow(&self, branch: Branch) -> f64 {
        branch.sign * self.line_flow[branch.line]
    }

    /// Price spread `lambda(sink) - lambda(source)`; positive when a
    /// source-to-sink FTR collects congestion rent.
    pub fn spread(&self, source: usize, sink: usize) -> f64 {
        self.nodal_price[sink] - self.nodal_price[source]
    }
}

/// Least-cost dispatch for the given demand (one value per load).
pub fn run_dcopf(net: &NetworkModel, shift: &ShiftFactors, demand: &[f64]) -> Result<DispatchEstimate> {
    if demand.len() != net.loads.len() {
        return Err(Error::Schema(format!(
            "demand vector has {} entries, network has {} loads",
            demand.len(),
            net.loads.len()
        )));
    }
    if let Some(g) = net.generators.iter().find(|g| !g.cost.is_finite()) {
        return Err(Error::Unbounded(format!("generator {} has a non-finite cost", g.id)));
    }
    let total: f64 = demand.iter().sum();
    let p_max: f64 = net.generators.iter().map(|g| g.p_max).sum();
    let p_min: f64 = net.generators.iter().map(|g| g.p_min).sum();
    if total > p_max + 1e-9 || total < p_min - 1e-9 {
        return Err(Error::InfeasibleDispatch(format!(
            "demand {total:.4} MW outside generation range [{p_min:.4}, {p_max:.4}]"
        )));
    }

    let ng = net.generators.len();
    let mut lp = LinearProgram::new(Sense::Minimize, ng);
    for (j, g) in net.generators.iter().enumerate() {
        lp.set_objective(j, g.cost);
        lp.set_bounds(j, g.p_min, g.p_max);
    }
    let balance = lp.add_constraint((0..ng).map(|j| (j, 1.0)).collect(), Relation::Eq, total);
    let mut line_rows = Vec::new();
    for (l, line) in net.lines.iter().enumerate() {
        if !line.capacity.is_finite() {
            continue;
        }
        let coeffs: Vec<(usize, f64)> = net
            .generators
            .iter()
            .enumerate()
            .map(|(j, g)| (j, shift.get(l, g.bus)))
            .collect();
        let load_flow: f64 = net.loads.iter().zip(demand).map(|(d, q)| shift.get(l, d.bus) * q).sum();
        let up = lp.add_constraint(coeffs.clone(), Relation::Le, line.capacity + load_flow);
        let neg = coeffs.into_iter().map(|(j, v)| (j, -v)).collect();
        let lo = lp.add_constraint(neg, Relation::Le, line.capacity - load_flow);
        line_rows.push((l, up, lo));
    }
    let sol = lp.solve().map_err(|e| match e {
        LpError::Infeasible => Error::InfeasibleDispatch("line limits admit no feasible flow".into()),
        LpError::Unbounded => Error::Unbounded("dispatch LP unbounded".into()),
        other => Error::Solver(other.to_string()),
    })?;

    let nb = net.buses.len();
    let mut nodal_price = vec![sol.duals[balance]; nb];
    for &(l, up, lo) in &line_rows {
        let mu = sol.duals[up] - sol.duals[lo];
        for (b, price) in nodal_price.iter_mut().enumerate() {
            *price += shift.get(l, b) * mu;
        }
    }
    let gen_output = sol.x.clone();
    let line_flow = shift.flows(&net.injections(&gen_output, demand));
    Ok(DispatchEstimate {
        demand: demand.to_vec(),
        gen_output,
        line_flow,
        nodal_price,
        cost: sol.objective,
        degenerate: sol.degenerate,
    })
}

/// Slack generation factor of a branch at the current operating point:
/// `(flow - sum_i A_i p_i) / sum_i p_i`.
pub fn slack_distribution_factor(
    net: &NetworkModel,
    shift: &ShiftFactors,
    dispatch: &DispatchEstimate,
    branch: Branch,
) -> Result<f64> {
    let total = dispatch.total_generation();
    if total.abs() <= 1e-12 {
        return Err(Error::ZeroDispatch);
    }
    let weighted: f64 = net
        .generators
        .iter()
        .zip(&dispatch.gen_output)
        .filter(|(g, _)| g.bus != net.slack)
        .map(|(g, p)| branch.shift(shift, g.bus) * p)
        .sum();
    Ok((dispatch.flow(branch) - weighted) / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackUpdate {
    pub value: f64,
    /// The incremental flow would exceed the line limit, so the flow was
    /// pinned at the limit.
    pub capped: bool,
}

/// Slack factor after generator `gen` raises output by `delta` MW to
/// serve load `load`, without re-solving the dispatch.
pub fn update_slack_factor(
    net: &NetworkModel,
    shift: &ShiftFactors,
    dispatch: &DispatchEstimate,
    branch: Branch,
    gen: usize,
    load: usize,
    delta: f64,
) -> Result<SlackUpdate> {
    let current = slack_distribution_factor(net, shift, dispatch, branch)?;
    let total = dispatch.total_generation();
    let a_gen = branch.shift(shift, net.generators[gen].bus);
    let a_load = branch.shift(shift, net.loads[load].bus);
    let flow = dispatch.flow(branch);
    let limit = net.lines[branch.line].capacity;
    let increment = (a_gen - a_load) * delta;
    let denom = total + delta;
    if denom.abs() <= 1e-12 {
        return Err(Error::ZeroDispatch);
    }
    // At equality both branches give the same value.
    if increment - (limit - flow) <= 0.0 {
        Ok(SlackUpdate {
            value: (current * total - a_load * delta) / denom,
            capped: false,
        })
    } else {
        Ok(SlackUpdate {
            value: (current * total + (limit - flow - a_gen * delta)) / denom,
            capped: true,
        })
    }
}

/// Generation distribution factors for every (line, generator) at one
/// operating point, in each line's own `from -> to` direction.
#[derive(Debug, Clone)]
pub struct SensitivityMatrices {
    pub shift: ShiftFactors,
    /// Per line.
    pub slack_factor: Vec<f64>,
    /// Lines x generators.
    pub distribution: DMatrix<f64>,
}

impl SensitivityMatrices {
    pub fn new(net: &NetworkModel, shift: &ShiftFactors, dispatch: &DispatchEstimate) -> Result<Self> {
        let slack_factor = (0..net.lines.len())
            .map(|l| slack_distribution_factor(net, shift, dispatch, Branch::along(l)))
            .collect::<Result<Vec<_>>>()?;
        let distribution = DMatrix::from_fn(net.lines.len(), net.generators.len(), |l, i| {
            slack_factor[l] + shift.get(l, net.generators[i].bus)
        });
        Ok(SensitivityMatrices {
            shift: shift.clone(),
            slack_factor,
            distribution,
        })
    }
}

/// Generation distribution factor of generator `gen` on `branch`.
pub fn distribution_factor(sens: &SensitivityMatrices, gen: usize, branch: Branch) -> f64 {
    branch.sign * sens.distribution[(branch.line, gen)]
}
