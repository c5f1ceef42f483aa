//! Compact mixed-integer model of the full problem, exported in LP text
//! format, plus a row-level feasibility checker used to certify solutions.
//!
//! Variables:
//!   x_{s}_{i}_{b}      parcel i rides bus b and is unloaded at stop s
//!   y_{s}_{d}_{u}_{v}  drone d of stop s travels node u -> node v
//!                      (nodes are customer indices or `L` for the locker)
//!   z_{s}_{d}          drone d of stop s is launched
//!   h_{i}              locker holding time of parcel i (minutes)
//!   w_{i}              service start time at customer i (minutes)
//!
//! Each stop gets one drone per reachable customer, which is always enough
//! because flights serve disjoint, non-empty customer sets.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::baselines::PlanSolution;
use crate::model::{build_derived, DerivedNetwork, Instance};

/// Feasibility slack allowed when evaluating rows and the cost identity.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }

    fn violated(self, activity: f64, rhs: f64) -> bool {
        match self {
            RowSense::Le => activity > rhs + CHECK_TOL,
            RowSense::Ge => activity < rhs - CHECK_TOL,
            RowSense::Eq => (activity - rhs).abs() > CHECK_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    /// Continuous and nonnegative.
    Continuous,
}

#[derive(Debug, Clone)]
pub struct MilpVar {
    pub name: String,
    pub kind: VarKind,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct MilpRow {
    pub name: String,
    /// (variable index, coefficient) pairs, deterministic order.
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct Milp1Model {
    pub name: String,
    pub vars: Vec<MilpVar>,
    pub rows: Vec<MilpRow>,
    index: HashMap<String, usize>,
}

/// One violated row (or the cost identity) found by the checker.
#[derive(Debug, Clone)]
pub struct MilpViolation {
    pub row: String,
    pub activity: f64,
    pub sense: RowSense,
    pub rhs: f64,
}

impl std::fmt::Display for MilpViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: activity {:.6} violates {} {:.6}",
            self.row,
            self.activity,
            self.sense.symbol(),
            self.rhs
        )
    }
}

/// Big-M for the bus-to-drone start-time link at (stop, customer, bus).
pub fn big_m_start(e_bs: f64, tau_bus: f64, tau_stop: f64, tau_si: f64) -> f64 {
    e_bs + tau_bus + tau_stop + tau_si
}

/// Big-M for the consecutive-service time link at (customer i, customer j, stop).
pub fn big_m_flow(deadline_i: f64, tau_drop: f64, tau_is: f64, tau_stop: f64, tau_sj: f64) -> f64 {
    deadline_i + tau_drop + tau_is + tau_stop + tau_sj
}

/// Big-M for the holding-time definition at (stop, customer, bus).
pub fn big_m_hold(deadline_i: f64, tau_si: f64, tau_stop: f64, tau_bus: f64, e_bs: f64) -> f64 {
    deadline_i - tau_si - tau_stop - tau_bus - e_bs
}

impl Milp1Model {
    fn add_var(&mut self, name: String, kind: VarKind, objective: f64) -> usize {
        let id = self.vars.len();
        self.index.insert(name.clone(), id);
        self.vars.push(MilpVar { name, kind, objective });
        id
    }

    fn add_row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        self.rows.push(MilpRow { name, terms, sense, rhs });
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Objective value at a full variable assignment.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.vars.iter().zip(values).map(|(v, x)| v.objective * x).sum()
    }

    /// Every row violated by the assignment, in model order.
    pub fn violated_rows(&self, values: &[f64]) -> Vec<MilpViolation> {
        let mut out = Vec::new();
        for row in &self.rows {
            let activity: f64 = row.terms.iter().map(|&(j, c)| c * values[j]).sum();
            if row.sense.violated(activity, row.rhs) {
                out.push(MilpViolation {
                    row: row.name.clone(),
                    activity,
                    sense: row.sense,
                    rhs: row.rhs,
                });
            }
        }
        out
    }
}

fn node_token(node: Option<usize>) -> String {
    match node {
        None => "L".to_string(),
        Some(i) => i.to_string(),
    }
}

/// Builds the compact model over the preprocessed network: x variables exist
/// only for (stop, customer, bus) triples some flight can actually serve,
/// which keeps every big-M nonnegative.
pub fn build_milp1(instance: &Instance, net: &DerivedNetwork) -> Milp1Model {
    let p = &instance.params;
    let ns = instance.n_stops();
    let nb = instance.n_buses();
    let nc = instance.n_customers();

    let mut model = Milp1Model {
        name: instance.name.clone(),
        vars: Vec::new(),
        rows: Vec::new(),
        index: HashMap::new(),
    };

    // x variables: assignment cost = bus freight + drone travel.
    let mut x = HashMap::new(); // (s, i, b) -> var
    for s in 0..ns {
        for &i in &net.reach[s] {
            for &b in &net.feas_buses[s][i] {
                let obj = net.c1[b][s] * instance.customers[i].demand + net.c2[s][i];
                let id = model.add_var(format!("x_{s}_{i}_{b}"), VarKind::Binary, obj);
                x.insert((s, i, b), id);
            }
        }
    }

    // One drone per reachable customer; arcs over {locker} ∪ reachable
    // customers, no self-loops (a self-loop would fake the degree rows).
    let mut y = HashMap::new(); // (s, d, from, to) -> var
    let mut z = HashMap::new(); // (s, d) -> var
    for s in 0..ns {
        let nodes: Vec<Option<usize>> = std::iter::once(None)
            .chain(net.reach[s].iter().map(|&i| Some(i)))
            .collect();
        for d in 0..net.reach[s].len() {
            let zid = model.add_var(format!("z_{s}_{d}"), VarKind::Binary, p.f_fixed);
            z.insert((s, d), zid);
            for &u in &nodes {
                for &v in &nodes {
                    if u == v {
                        continue;
                    }
                    let name = format!("y_{s}_{d}_{}_{}", node_token(u), node_token(v));
                    let id = model.add_var(name, VarKind::Binary, 0.0);
                    y.insert((s, d, u, v), id);
                }
            }
        }
    }

    let mut h = Vec::with_capacity(nc);
    let mut w = Vec::with_capacity(nc);
    for i in 0..nc {
        let q = instance.customers[i].demand;
        h.push(model.add_var(format!("h_{i}"), VarKind::Continuous, p.f_hold * q));
    }
    for i in 0..nc {
        w.push(model.add_var(format!("w_{i}"), VarKind::Continuous, 0.0));
    }

    // Each parcel is delivered exactly once.
    for i in 0..nc {
        let terms: Vec<_> = x
            .iter()
            .filter(|((_, xi, _), _)| *xi == i)
            .map(|(_, &id)| (id, 1.0))
            .collect();
        let mut terms = terms;
        terms.sort_by_key(|&(id, _)| id);
        model.add_row(format!("visit_{i}"), terms, RowSense::Eq, 1.0);
    }

    // Bus capacity.
    for b in 0..nb {
        let mut terms = Vec::new();
        for s in 0..ns {
            for &i in &net.reach[s] {
                if let Some(&id) = x.get(&(s, i, b)) {
                    terms.push((id, instance.customers[i].demand));
                }
            }
        }
        terms.sort_by_key(|&(id, _)| id);
        model.add_row(format!("buscap_{b}"), terms, RowSense::Le, p.q_bus);
    }

    // Per-(bus, stop) unloading capacity.
    for b in 0..nb {
        for s in 0..ns {
            let mut terms = Vec::new();
            for &i in &net.reach[s] {
                if let Some(&id) = x.get(&(s, i, b)) {
                    terms.push((id, instance.customers[i].demand));
                }
            }
            if terms.is_empty() {
                continue;
            }
            terms.sort_by_key(|&(id, _)| id);
            model.add_row(format!("stopcap_{b}_{s}"), terms, RowSense::Le, p.q_stop);
        }
    }

    // Degree rows link x and y: a parcel unloaded at s has exactly one
    // predecessor and one successor on some drone tour of s.
    for s in 0..ns {
        let nodes: Vec<Option<usize>> = std::iter::once(None)
            .chain(net.reach[s].iter().map(|&i| Some(i)))
            .collect();
        for &i in &net.reach[s] {
            for (label, incoming) in [("indeg", true), ("outdeg", false)] {
                let mut terms = Vec::new();
                for d in 0..net.reach[s].len() {
                    for &u in &nodes {
                        let key = if incoming { (s, d, u, Some(i)) } else { (s, d, Some(i), u) };
                        if let Some(&id) = y.get(&key) {
                            terms.push((id, 1.0));
                        }
                    }
                }
                for &b in &net.feas_buses[s][i] {
                    terms.push((x[&(s, i, b)], -1.0));
                }
                model.add_row(format!("{label}_{s}_{i}"), terms, RowSense::Eq, 0.0);
            }
        }

        for d in 0..net.reach[s].len() {
            // Launch and return from the same locker, gated by z.
            let mut balance = Vec::new();
            let mut launch = Vec::new();
            for &i in &net.reach[s] {
                balance.push((y[&(s, d, None, Some(i))], 1.0));
                launch.push((y[&(s, d, None, Some(i))], 1.0));
            }
            for &i in &net.reach[s] {
                balance.push((y[&(s, d, Some(i), None)], -1.0));
            }
            launch.push((z[&(s, d)], -1.0));
            model.add_row(format!("samelocker_{s}_{d}"), balance, RowSense::Eq, 0.0);
            model.add_row(format!("launch_{s}_{d}"), launch, RowSense::Le, 0.0);

            // Flow conservation at every customer node.
            for &i in &net.reach[s] {
                let mut terms = Vec::new();
                for &u in &nodes {
                    if let Some(&id) = y.get(&(s, d, u, Some(i))) {
                        terms.push((id, 1.0));
                    }
                    if let Some(&id) = y.get(&(s, d, Some(i), u)) {
                        terms.push((id, -1.0));
                    }
                }
                model.add_row(format!("flow_{s}_{d}_{i}"), terms, RowSense::Eq, 0.0);
            }

            // Total visit durations within the flight cap.
            let mut terms = Vec::new();
            for &i in &net.reach[s] {
                for &v in &nodes {
                    if let Some(&id) = y.get(&(s, d, Some(i), v)) {
                        terms.push((id, net.delta[s][i]));
                    }
                }
            }
            terms.push((z[&(s, d)], -p.delta));
            model.add_row(format!("duration_{s}_{d}"), terms, RowSense::Le, 0.0);
        }
    }

    // Time linking rows.
    for s in 0..ns {
        for &i in &net.reach[s] {
            for &b in &net.feas_buses[s][i] {
                let e = instance.buses[b].arrival[s];
                let m = big_m_start(e, p.tau_bus, p.tau_stop, net.tau[s][i]);
                // e + tauB + tauS + tau_si - w_i <= M (1 - x_sib)
                model.add_row(
                    format!("starttime_{s}_{i}_{b}"),
                    vec![(x[&(s, i, b)], m), (w[i], -1.0)],
                    RowSense::Le,
                    m - (e + p.tau_bus + p.tau_stop + net.tau[s][i]),
                );

                let mh = big_m_hold(instance.customers[i].deadline, net.tau[s][i], p.tau_stop, p.tau_bus, e);
                // w_i - tau_si - tauS - tauB - e - h_i <= M (1 - x_sib)
                model.add_row(
                    format!("holding_{s}_{i}_{b}"),
                    vec![(w[i], 1.0), (h[i], -1.0), (x[&(s, i, b)], mh)],
                    RowSense::Le,
                    mh + net.tau[s][i] + p.tau_stop + p.tau_bus + e,
                );
            }
            for &j in &net.reach[s] {
                if i == j {
                    continue;
                }
                let gap = p.tau_drop + net.tau[s][i] + p.tau_stop + net.tau[s][j];
                let m = big_m_flow(instance.customers[i].deadline, p.tau_drop, net.tau[s][i], p.tau_stop, net.tau[s][j]);
                let mut terms = vec![(w[i], 1.0), (w[j], -1.0)];
                for d in 0..net.reach[s].len() {
                    terms.push((y[&(s, d, Some(i), Some(j))], m));
                }
                // w_i + gap - w_j <= M (1 - sum_d y_ijsd)
                model.add_row(format!("timeflow_{s}_{i}_{j}"), terms, RowSense::Le, m - gap);
            }
        }
    }

    for i in 0..nc {
        model.add_row(
            format!("deadline_{i}"),
            vec![(w[i], 1.0)],
            RowSense::Le,
            instance.customers[i].deadline,
        );
    }

    model
}

fn fmt_coeff(out: &mut String, first: bool, c: f64, name: &str) {
    if first {
        if c < 0.0 {
            let _ = write!(out, "- {} {name}", -c);
        } else {
            let _ = write!(out, "{c} {name}");
        }
    } else if c < 0.0 {
        let _ = write!(out, " - {} {name}", -c);
    } else {
        let _ = write!(out, " + {c} {name}");
    }
}

/// Renders the model in LP text format with deterministic ordering.
pub fn render_lp(model: &Milp1Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    let _ = writeln!(out, "Minimize");
    let mut line = String::from(" obj: ");
    let mut first = true;
    for v in &model.vars {
        if v.objective != 0.0 {
            fmt_coeff(&mut line, first, v.objective, &v.name);
            first = false;
        }
    }
    if first {
        line.push('0');
    }
    out.push_str(&line);
    out.push('\n');

    let _ = writeln!(out, "Subject To");
    for row in &model.rows {
        let mut line = format!(" {}: ", row.name);
        let mut first = true;
        for &(j, c) in &row.terms {
            fmt_coeff(&mut line, first, c, &model.vars[j].name);
            first = false;
        }
        if first {
            line.push('0');
        }
        let _ = write!(line, " {} {}", row.sense.symbol(), row.rhs);
        out.push_str(&line);
        out.push('\n');
    }

    let _ = writeln!(out, "Bounds");
    for v in &model.vars {
        if v.kind == VarKind::Continuous {
            let _ = writeln!(out, " {} >= 0", v.name);
        }
    }

    let _ = writeln!(out, "Binary");
    for v in &model.vars {
        if v.kind == VarKind::Binary {
            let _ = writeln!(out, " {}", v.name);
        }
    }
    let _ = writeln!(out, "End");
    out
}

pub fn export_lp_file(model: &Milp1Model, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_lp(model))
}

/// Parses a file produced by [`export_lp_file`] back into a model; the
/// round trip is exact because coefficients are printed losslessly.
pub fn parse_lp_file(path: &Path) -> std::io::Result<Milp1Model> {
    let text = std::fs::read_to_string(path)?;
    parse_lp(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn parse_terms(
    model: &mut Milp1Model,
    tokens: &[&str],
) -> Result<Vec<(usize, f64)>, String> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut pending: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => {
                if let Ok(v) = tok.parse::<f64>() {
                    if pending.is_some() {
                        return Err(format!("two numbers in a row near '{tok}'"));
                    }
                    pending = Some(v);
                } else {
                    let coeff = sign * pending.take().unwrap_or(1.0);
                    let id = match model.var(tok) {
                        Some(id) => id,
                        None => model.add_var(tok.to_string(), VarKind::Continuous, 0.0),
                    };
                    terms.push((id, coeff));
                    sign = 1.0;
                }
            }
        }
    }
    if let Some(v) = pending {
        if terms.is_empty() && v == 0.0 {
            return Ok(terms); // literal "0" placeholder
        }
        return Err(format!("dangling number {v}"));
    }
    Ok(terms)
}

fn parse_lp(text: &str) -> Result<Milp1Model, String> {
    #[derive(PartialEq)]
    enum Section {
        Preamble,
        Objective,
        Rows,
        Bounds,
        Binary,
        Done,
    }
    let mut model = Milp1Model {
        name: String::new(),
        vars: Vec::new(),
        rows: Vec::new(),
        index: HashMap::new(),
    };
    let mut section = Section::Preamble;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('\\') {
            if model.name.is_empty() {
                model.name = comment.trim().to_string();
            }
            continue;
        }
        match line {
            "Minimize" => {
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Rows;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "Binary" => {
                section = Section::Binary;
                continue;
            }
            "End" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble | Section::Done => {
                return Err(format!("unexpected line outside sections: '{line}'"));
            }
            Section::Objective => {
                let body = line
                    .strip_prefix("obj:")
                    .ok_or_else(|| format!("objective line must start with 'obj:': '{line}'"))?;
                let tokens: Vec<&str> = body.split_whitespace().collect();
                for (id, c) in parse_terms(&mut model, &tokens)? {
                    model.vars[id].objective = c;
                }
            }
            Section::Rows => {
                let (name, body) = line
                    .split_once(':')
                    .ok_or_else(|| format!("row without name: '{line}'"))?;
                let tokens: Vec<&str> = body.split_whitespace().collect();
                let pos = tokens
                    .iter()
                    .position(|t| matches!(*t, "<=" | ">=" | "="))
                    .ok_or_else(|| format!("row without sense: '{line}'"))?;
                let sense = match tokens[pos] {
                    "<=" => RowSense::Le,
                    ">=" => RowSense::Ge,
                    _ => RowSense::Eq,
                };
                let rhs: f64 = tokens[pos + 1..]
                    .join("")
                    .parse()
                    .map_err(|_| format!("bad rhs in '{line}'"))?;
                let terms = parse_terms(&mut model, &tokens[..pos])?;
                model.rows.push(MilpRow { name: name.trim().to_string(), terms, sense, rhs });
            }
            Section::Bounds => {
                // Only ">= 0" bounds are emitted; nothing to record beyond
                // the default continuous kind.
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() != 3 || tokens[1] != ">=" || tokens[2] != "0" {
                    return Err(format!("unsupported bound line: '{line}'"));
                }
                if model.var(tokens[0]).is_none() {
                    model.add_var(tokens[0].to_string(), VarKind::Continuous, 0.0);
                }
            }
            Section::Binary => {
                match model.var(line) {
                    Some(id) => model.vars[id].kind = VarKind::Binary,
                    None => {
                        model.add_var(line.to_string(), VarKind::Binary, 0.0);
                    }
                }
            }
        }
    }
    if section == Section::Done {
        Ok(model)
    } else {
        Err("missing End marker".to_string())
    }
}

/// Maps a delivery plan to a full variable assignment of the model.
/// Returns the values plus any structural problems found while mapping
/// (e.g. an assignment triple the model has no variable for).
pub fn plan_to_values(
    model: &Milp1Model,
    instance: &Instance,
    plan: &PlanSolution,
) -> (Vec<f64>, Vec<MilpViolation>) {
    let mut values = vec![0.0; model.vars.len()];
    let mut problems = Vec::new();
    let mut set = |values: &mut Vec<f64>, name: String, v: f64, problems: &mut Vec<MilpViolation>| {
        match model.var(&name) {
            Some(id) => values[id] = v,
            None => problems.push(MilpViolation {
                row: format!("missing_variable_{name}"),
                activity: v,
                sense: RowSense::Eq,
                rhs: 0.0,
            }),
        }
    };

    for (i, &(b, s)) in plan.assignment.iter().enumerate() {
        set(&mut values, format!("x_{s}_{i}_{b}"), 1.0, &mut problems);
    }

    // Assign drone indices per stop in flight order.
    let mut next_drone = vec![0usize; instance.n_stops()];
    for flight in &plan.flights {
        let s = flight.stop;
        let d = next_drone[s];
        next_drone[s] += 1;
        set(&mut values, format!("z_{s}_{d}"), 1.0, &mut problems);
        let mut prev: Option<usize> = None;
        for trip in &flight.trips {
            let name = format!("y_{s}_{d}_{}_{}", node_token(prev), node_token(Some(trip.customer)));
            set(&mut values, name, 1.0, &mut problems);
            set(&mut values, format!("w_{}", trip.customer), trip.service_start, &mut problems);
            set(&mut values, format!("h_{}", trip.customer), trip.holding, &mut problems);
            prev = Some(trip.customer);
        }
        let name = format!("y_{s}_{d}_{}_L", node_token(prev));
        set(&mut values, name, 1.0, &mut problems);
    }
    (values, problems)
}

/// Certifies a plan against every row of the compact model plus the cost
/// identity. Empty result iff the plan is feasible and its reported total
/// matches the model objective within `CHECK_TOL`.
pub fn check_solution_feasible(plan: &PlanSolution, instance: &Instance) -> Vec<MilpViolation> {
    let net = match build_derived(instance) {
        Ok(net) => net,
        Err(e) => {
            return vec![MilpViolation {
                row: format!("invalid_instance_{e:?}"),
                activity: 0.0,
                sense: RowSense::Eq,
                rhs: 0.0,
            }]
        }
    };
    let model = build_milp1(instance, &net);
    let (values, mut violations) = plan_to_values(&model, instance, plan);
    violations.extend(model.violated_rows(&values));

    let objective = model.objective_value(&values);
    if (objective - plan.total).abs() > CHECK_TOL * (1.0 + plan.total.abs()) {
        violations.push(MilpViolation {
            row: "cost_identity".to_string(),
            activity: plan.total,
            sense: RowSense::Eq,
            rhs: objective,
        });
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::oracle_solve;
    use crate::instance_io::GeneratorConfig;

    fn tiny(seed: u64) -> Instance {
        GeneratorConfig::new(2, 2, 4, seed).generate().unwrap()
    }

    #[test]
    fn single_triple_instance_has_one_assignment_variable() {
        let inst = GeneratorConfig::new(1, 1, 1, 0).generate().unwrap();
        let net = build_derived(&inst).unwrap();
        let model = build_milp1(&inst, &net);
        let x_vars: Vec<_> = model.vars.iter().filter(|v| v.name.starts_with("x_")).collect();
        assert_eq!(x_vars.len(), 1);
        let visit = model.rows.iter().find(|r| r.name == "visit_0").unwrap();
        assert_eq!(visit.terms.len(), 1);
        assert_eq!(visit.sense, RowSense::Eq);
        assert_eq!(visit.rhs, 1.0);
    }

    #[test]
    fn start_time_constant_is_the_sum_of_its_parts() {
        assert_eq!(big_m_start(20.0, 1.0, 1.0, 6.0), 28.0);
    }

    #[test]
    fn oracle_optimum_passes_the_checker() {
        for seed in [0, 1, 2, 3] {
            let inst = tiny(seed);
            let net = build_derived(&inst).unwrap();
            let plan = oracle_solve(&inst, &net).unwrap();
            let violations = check_solution_feasible(&plan, &inst);
            assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        }
    }

    #[test]
    fn lp_file_round_trips() {
        let inst = tiny(0);
        let net = build_derived(&inst).unwrap();
        let model = build_milp1(&inst, &net);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lp");
        export_lp_file(&model, &path).unwrap();
        let parsed = parse_lp_file(&path).unwrap();

        assert_eq!(parsed.vars.len(), model.vars.len());
        assert_eq!(parsed.rows.len(), model.rows.len());
        for (a, b) in model.vars.iter().zip(&parsed.vars) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.objective, b.objective);
        }
        for (a, b) in model.rows.iter().zip(&parsed.rows) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.sense, b.sense);
            assert_eq!(a.rhs, b.rhs);
            let norm = |m: &Milp1Model, r: &MilpRow| {
                let mut t: Vec<(String, f64)> =
                    r.terms.iter().map(|&(j, c)| (m.vars[j].name.clone(), c)).collect();
                t.sort();
                t
            };
            assert_eq!(norm(&model, a), norm(&parsed, b));
        }
    }

    #[test]
    fn late_service_is_reported_as_a_deadline_violation() {
        let inst = tiny(0);
        let net = build_derived(&inst).unwrap();
        let mut plan = oracle_solve(&inst, &net).unwrap();
        let cust = plan.flights[0].trips[0].customer;
        plan.flights[0].trips[0].service_start = inst.customers[cust].deadline + 1.0;
        let violations = check_solution_feasible(&plan, &inst);
        assert!(
            violations.iter().any(|v| v.row == format!("deadline_{cust}")),
            "{violations:?}"
        );
    }

    #[test]
    fn double_assignment_violates_the_visit_row() {
        let inst = tiny(0);
        let net = build_derived(&inst).unwrap();
        let model = build_milp1(&inst, &net);
        let plan = oracle_solve(&inst, &net).unwrap();
        let (mut values, problems) = plan_to_values(&model, &inst, &plan);
        assert!(problems.is_empty());
        // Force a second copy of parcel 0 onto another existing x variable.
        let extra = model.vars.iter().enumerate().find_map(|(id, v)| {
            let parts: Vec<&str> = v.name.split('_').collect();
            (parts.len() == 4 && parts[0] == "x" && parts[2] == "0" && values[id] == 0.0)
                .then_some(id)
        });
        let Some(extra) = extra else {
            // No alternative triple exists for parcel 0 in this instance.
            return;
        };
        values[extra] = 1.0;
        let violations = model.violated_rows(&values);
        assert!(violations.iter().any(|v| v.row == "visit_0"), "{violations:?}");
    }
}
