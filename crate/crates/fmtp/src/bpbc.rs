//! Best-first branch-and-bound over the node relaxation of `benders`,
//! branching on customer-to-stop, customer-to-bus, and flight-arc decisions
//! in that order. Heuristic mode solves the root only and rounds with a
//! pool IP.

use crate::baselines::{assemble_plan, solve_so, PlanSolution};
use crate::benders::{
    initial_inequalities, solve_bmp, ArcDecision, BmpResult, BmpStatus, IterRecord, MasterState,
    NodeRules,
};
use crate::columns::AssignmentColumn;
use crate::lp_core::{solve_ip_pool, Constraint, LpError, Sense};
use crate::model::{build_derived, DerivedNetwork, Instance};
use crate::EPS;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub enum BranchConstraint {
    /// Customer served at this stop (true) or never at this stop (false).
    PiStop { customer: usize, stop: usize, value: bool },
    /// Customer rides this bus (true) or never this bus (false).
    PsiBus { customer: usize, bus: usize, value: bool },
    /// Consecutive-visit arc at a stop used (true) or forbidden (false);
    /// `None` endpoints are the locker.
    LambdaArc { stop: usize, from: Option<usize>, to: Option<usize>, value: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Full branch-and-bound to proven optimality.
    Exact,
    /// Root relaxation plus rounding heuristics only.
    RootOnly,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub mode: SolveMode,
    pub time_limit: Duration,
    pub node_limit: usize,
    /// Seed the root with a greedy solution and singleton columns.
    pub warm_start: bool,
    /// Ban (bus, stop) pairs whose pricing value proves them unusable.
    pub variable_fixing: bool,
    /// Round fractional nodes with a restricted IP over the pool.
    pub primal_heuristics: bool,
    /// Start from the duration-share cuts instead of an empty cut pool.
    pub valid_inequalities: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: SolveMode::Exact,
            time_limit: Duration::from_secs(3600),
            node_limit: usize::MAX,
            warm_start: true,
            variable_fixing: true,
            primal_heuristics: true,
            valid_inequalities: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Incumbent proven optimal (or heuristic mode finished with a plan).
    Optimal,
    Infeasible,
    /// Stopped at the time limit; the incumbent (if any) is feasible.
    TimeLimit,
    NodeLimit,
}

#[derive(Debug)]
pub struct Solution {
    pub status: SolveStatus,
    pub plan: Option<PlanSolution>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub nodes: usize,
    pub cg_iterations: usize,
    pub columns: usize,
    pub cuts: usize,
    /// Per-iteration log of the root relaxation.
    pub root_history: Vec<IterRecord>,
    /// (phi total, subproblem total) at the root, when the root converged.
    pub root_certificate: Option<(f64, f64)>,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("{0}")]
    Lp(#[from] LpError),
}

struct Node {
    id: usize,
    depth: usize,
    lb: f64,
    rules: NodeRules,
    state: MasterState,
}

// Best-first: lowest bound wins, then deeper node, then lower id.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lb
            .total_cmp(&self.lb)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}

pub fn solve(instance: &Instance, config: &SolverConfig) -> Result<Solution, SolveError> {
    let start = Instant::now();
    let net = match build_derived(instance) {
        Ok(net) => net,
        Err(_) => {
            return Ok(empty_solution(SolveStatus::Infeasible));
        }
    };

    let mut incumbent: Option<PlanSolution> = None;
    let mut ub = f64::INFINITY;

    let mut root_state = MasterState::new(instance.n_stops());
    if config.valid_inequalities {
        root_state.cuts = initial_inequalities(instance, &net);
    }
    if config.warm_start {
        warm_start(instance, &net, &mut root_state, &mut incumbent, &mut ub);
    }
    if config.mode == SolveMode::RootOnly {
        // The sequential plan caps the heuristic from above.
        if let Ok(plan) = solve_so(instance, &net) {
            consider(&mut incumbent, &mut ub, plan);
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        depth: 0,
        lb: f64::NEG_INFINITY,
        rules: NodeRules::root(instance),
        state: root_state,
    });

    let mut next_id = 1usize;
    let mut nodes = 0usize;
    let mut cg_iterations = 0usize;
    let mut columns = 0usize;
    let mut cuts = 0usize;
    let mut root_history = Vec::new();
    let mut root_certificate = None;
    let mut best_open_lb = f64::INFINITY;
    let mut status = SolveStatus::Optimal;

    while let Some(mut node) = heap.pop() {
        if node.lb >= ub - EPS {
            continue;
        }
        if start.elapsed() > config.time_limit {
            best_open_lb = best_open_lb.min(node.lb);
            for n in &heap {
                best_open_lb = best_open_lb.min(n.lb);
            }
            status = SolveStatus::TimeLimit;
            break;
        }
        if nodes >= config.node_limit {
            best_open_lb = best_open_lb.min(node.lb);
            status = SolveStatus::NodeLimit;
            break;
        }
        nodes += 1;

        let res = solve_bmp(instance, &net, &mut node.state, &node.rules)?;
        cg_iterations += res.history.len();
        columns = columns.max(node.state.columns.len());
        cuts = cuts.max(node.state.cuts.len());
        if node.id == 0 {
            root_history = res.history.clone();
            if res.status == BmpStatus::Optimal {
                root_certificate =
                    Some((res.phi.iter().sum(), res.bsp_values.iter().sum()));
            }
        }
        if res.status == BmpStatus::Infeasible {
            continue;
        }
        let node_lb = res.lower_bound;
        if node_lb >= ub - EPS {
            continue;
        }

        // Any integral assignment structure yields an incumbent: flights
        // are rescheduled exactly, so the plan is feasible on its own.
        if let Some(assign) = integral_assignment(instance, &node.state.columns, &res.theta) {
            if let Some(plan) = assemble_plan(instance, &net, assign) {
                consider(&mut incumbent, &mut ub, plan);
            }
        }
        if config.primal_heuristics || config.mode == SolveMode::RootOnly {
            if let Some(assign) = restricted_ip(instance, &node.state.columns, &node.rules) {
                if let Some(plan) = assemble_plan(instance, &net, assign) {
                    consider(&mut incumbent, &mut ub, plan);
                }
            }
        }
        if config.mode == SolveMode::RootOnly {
            best_open_lb = best_open_lb.min(node_lb);
            break;
        }
        if node_lb >= ub - EPS {
            continue;
        }

        let Some(branch) = select_branch(instance, &node, &res) else {
            // Fully integral relaxation: the captured incumbent closes it.
            continue;
        };
        for value in [true, false] {
            let mut rules = node.rules.clone();
            apply_branch(&mut rules, &branch, value);
            if config.variable_fixing {
                for b in 0..instance.n_buses() {
                    for s in 0..instance.n_stops() {
                        if res.v[b][s].is_finite() && res.objective + res.v[b][s] >= ub - EPS {
                            rules.pair_banned[b][s] = true;
                        }
                    }
                }
            }
            let state = MasterState {
                columns: node
                    .state
                    .columns
                    .iter()
                    .enumerate()
                    .filter(|&(t, _)| res.theta[t] > 1e-9)
                    .map(|(_, c)| c.clone())
                    .collect(),
                cuts: node.state.cuts.clone(),
                flight_pool: node.state.flight_pool.clone(),
            };
            heap.push(Node { id: next_id, depth: node.depth + 1, lb: node_lb, rules, state });
            next_id += 1;
        }
    }

    let lower_bound = match status {
        SolveStatus::Optimal => {
            if incumbent.is_some() {
                ub
            } else {
                f64::INFINITY
            }
        }
        _ => best_open_lb,
    };
    let status = match (&incumbent, status) {
        (None, SolveStatus::Optimal) => SolveStatus::Infeasible,
        (_, s) => s,
    };
    Ok(Solution {
        status,
        plan: incumbent,
        lower_bound,
        upper_bound: ub,
        nodes,
        cg_iterations,
        columns,
        cuts,
        root_history,
        root_certificate,
    })
}

fn empty_solution(status: SolveStatus) -> Solution {
    Solution {
        status,
        plan: None,
        lower_bound: f64::INFINITY,
        upper_bound: f64::INFINITY,
        nodes: 0,
        cg_iterations: 0,
        columns: 0,
        cuts: 0,
        root_history: Vec::new(),
        root_certificate: None,
    }
}

fn consider(incumbent: &mut Option<PlanSolution>, ub: &mut f64, plan: PlanSolution) {
    if plan.total < *ub - 1e-12 {
        *ub = plan.total;
        *incumbent = Some(plan);
    }
}

/// Greedy warm start: customers in deadline order, each to the cheapest
/// feasible pair with capacity left. Always seeds singleton columns so the
/// first master solve has something real to stand on.
fn warm_start(
    instance: &Instance,
    net: &DerivedNetwork,
    state: &mut MasterState,
    incumbent: &mut Option<PlanSolution>,
    ub: &mut f64,
) {
    for i in 0..instance.n_customers() {
        for s in 0..instance.n_stops() {
            for &b in &net.feas_buses[s][i] {
                let col = AssignmentColumn::new(instance, net, b, s, vec![i]);
                if !state.columns.contains(&col) {
                    state.columns.push(col);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..instance.n_customers()).collect();
    order.sort_by(|&a, &b| instance.customers[a].deadline.total_cmp(&instance.customers[b].deadline));
    let mut pair_load = vec![vec![0.0; instance.n_stops()]; instance.n_buses()];
    let mut bus_load = vec![0.0; instance.n_buses()];
    let mut assign = vec![(usize::MAX, usize::MAX); instance.n_customers()];
    for &i in &order {
        let q = instance.customers[i].demand;
        let mut best: Option<(f64, usize, usize)> = None;
        for s in 0..instance.n_stops() {
            for &b in &net.feas_buses[s][i] {
                if pair_load[b][s] + q > instance.params.q_stop + EPS
                    || bus_load[b] + q > instance.params.q_bus + EPS
                {
                    continue;
                }
                let cost = net.c1[b][s] * q + net.c2[s][i];
                if best.map_or(true, |(c, _, _)| cost < c) {
                    best = Some((cost, b, s));
                }
            }
        }
        let Some((_, b, s)) = best else {
            return; // no greedy plan; singleton columns alone remain
        };
        pair_load[b][s] += q;
        bus_load[b] += q;
        assign[i] = (b, s);
    }

    for b in 0..instance.n_buses() {
        for s in 0..instance.n_stops() {
            let group: Vec<usize> = (0..instance.n_customers())
                .filter(|&i| assign[i] == (b, s))
                .collect();
            if !group.is_empty() {
                let col = AssignmentColumn::new(instance, net, b, s, group);
                if !state.columns.contains(&col) {
                    state.columns.push(col);
                }
            }
        }
    }
    if let Some(plan) = assemble_plan(instance, net, assign) {
        consider(incumbent, ub, plan);
    }
}

/// Reads a (bus, stop) per customer off an integral master solution;
/// `None` when any customer's coverage is fractional.
fn integral_assignment(
    instance: &Instance,
    columns: &[AssignmentColumn],
    theta: &[f64],
) -> Option<Vec<(usize, usize)>> {
    let mut assign = vec![None; instance.n_customers()];
    for (t, col) in columns.iter().enumerate() {
        if theta[t] < 1.0 - crate::lp_core::INT_TOL {
            if theta[t] > crate::lp_core::INT_TOL {
                return None;
            }
            continue;
        }
        for &i in &col.customers {
            assign[i].get_or_insert((col.bus, col.stop));
        }
    }
    assign.into_iter().collect()
}

/// Rounds the node pool: pick one column per pair covering every customer
/// at minimum assignment cost.
fn restricted_ip(
    instance: &Instance,
    columns: &[AssignmentColumn],
    rules: &NodeRules,
) -> Option<Vec<(usize, usize)>> {
    let active: Vec<usize> =
        (0..columns.len()).filter(|&t| rules.column_allowed(&columns[t])).collect();
    if active.is_empty() {
        return None;
    }
    let costs: Vec<f64> = active.iter().map(|&t| columns[t].cost).collect();
    let mut rows = Vec::new();
    for i in 0..instance.n_customers() {
        let coeffs: Vec<(usize, f64)> = active
            .iter()
            .enumerate()
            .filter(|&(_, &t)| columns[t].contains(i))
            .map(|(j, _)| (j, 1.0))
            .collect();
        if coeffs.is_empty() {
            return None;
        }
        rows.push(Constraint { coeffs, sense: Sense::Ge, rhs: 1.0 });
    }
    for b in 0..instance.n_buses() {
        for s in 0..instance.n_stops() {
            let coeffs: Vec<(usize, f64)> = active
                .iter()
                .enumerate()
                .filter(|&(_, &t)| columns[t].bus == b && columns[t].stop == s)
                .map(|(j, _)| (j, 1.0))
                .collect();
            if !coeffs.is_empty() {
                rows.push(Constraint { coeffs, sense: Sense::Le, rhs: 1.0 });
            }
        }
        let coeffs: Vec<(usize, f64)> = active
            .iter()
            .enumerate()
            .filter(|&(_, &t)| columns[t].bus == b)
            .map(|(j, &t)| (j, columns[t].load))
            .collect();
        if !coeffs.is_empty() {
            rows.push(Constraint { coeffs, sense: Sense::Le, rhs: instance.params.q_bus });
        }
    }
    let (inc, _) = solve_ip_pool(&costs, &rows, Duration::from_secs(30)).ok()?;
    let (x, _) = inc?;
    let mut assign = vec![None; instance.n_customers()];
    for (j, &t) in active.iter().enumerate() {
        if x[j] > 0.5 {
            for &i in &columns[t].customers {
                assign[i].get_or_insert((columns[t].bus, columns[t].stop));
            }
        }
    }
    assign.into_iter().collect()
}

/// Most fractional candidate in the hierarchy: customer-to-stop first, then
/// customer-to-bus, then flight arcs.
fn select_branch(instance: &Instance, node: &Node, res: &BmpResult) -> Option<BranchConstraint> {
    let frac_score = |v: f64| -> Option<f64> {
        let f = v - v.floor();
        if f > crate::lp_core::INT_TOL && f < 1.0 - crate::lp_core::INT_TOL {
            Some((f - 0.5).abs())
        } else {
            None
        }
    };

    fn offer(best: &mut Option<(f64, BranchConstraint)>, score: Option<f64>, cand: BranchConstraint) {
        if let Some(s) = score {
            if best.as_ref().map_or(true, |(bs, _)| s < *bs - 1e-12) {
                *best = Some((s, cand));
            }
        }
    }
    let mut best: Option<(f64, BranchConstraint)> = None;

    for i in 0..instance.n_customers() {
        for s in 0..instance.n_stops() {
            let v: f64 = node
                .state
                .columns
                .iter()
                .zip(&res.theta)
                .filter(|(c, _)| c.stop == s && c.contains(i))
                .map(|(_, &t)| t)
                .sum();
            offer(&mut best, frac_score(v), BranchConstraint::PiStop { customer: i, stop: s, value: true });
        }
    }
    if let Some((_, c)) = best {
        return Some(c);
    }

    for i in 0..instance.n_customers() {
        for b in 0..instance.n_buses() {
            let v: f64 = node
                .state
                .columns
                .iter()
                .zip(&res.theta)
                .filter(|(c, _)| c.bus == b && c.contains(i))
                .map(|(_, &t)| t)
                .sum();
            offer(&mut best, frac_score(v), BranchConstraint::PsiBus { customer: i, bus: b, value: true });
        }
    }
    if let Some((_, c)) = best {
        return Some(c);
    }

    for s in 0..instance.n_stops() {
        let mut arc_weight: Vec<((Option<usize>, Option<usize>), f64)> = Vec::new();
        for (flight, w) in &res.bsp_flights[s] {
            for pair in flight.consecutive_pairs() {
                match arc_weight.iter_mut().find(|(a, _)| *a == pair) {
                    Some((_, acc)) => *acc += w,
                    None => arc_weight.push((pair, *w)),
                }
            }
        }
        for ((from, to), w) in arc_weight {
            offer(
                &mut best,
                frac_score(w),
                BranchConstraint::LambdaArc { stop: s, from, to, value: true },
            );
        }
    }
    best.map(|(_, c)| c)
}

fn apply_branch(rules: &mut NodeRules, branch: &BranchConstraint, value: bool) {
    match *branch {
        BranchConstraint::PiStop { customer, stop, .. } => {
            if value {
                for s in 0..rules.stop_allowed.len() {
                    if s != stop {
                        rules.stop_allowed[s][customer] = false;
                    }
                }
            } else {
                rules.stop_allowed[stop][customer] = false;
            }
        }
        BranchConstraint::PsiBus { customer, bus, .. } => {
            if value {
                for b in 0..rules.bus_allowed.len() {
                    if b != bus {
                        rules.bus_allowed[b][customer] = false;
                    }
                }
            } else {
                rules.bus_allowed[bus][customer] = false;
            }
        }
        BranchConstraint::LambdaArc { stop, from, to, .. } => {
            if value {
                // A used arc pins both customer endpoints to this stop and
                // fixes the neighbour on each customer side.
                if let Some(i) = from {
                    rules.arcs[stop].forced_from.insert(Some(i), to);
                    for s in 0..rules.stop_allowed.len() {
                        if s != stop {
                            rules.stop_allowed[s][i] = false;
                        }
                    }
                }
                if let Some(j) = to {
                    rules.arcs[stop].forced_to.insert(Some(j), from);
                    for s in 0..rules.stop_allowed.len() {
                        if s != stop {
                            rules.stop_allowed[s][j] = false;
                        }
                    }
                }
            } else {
                rules.arcs[stop].forbidden.insert((from, to));
            }
            rules.decisions.push(ArcDecision { stop, from, to, keep: value });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::oracle_solve;
    use crate::instance_io::{generate, GeneratorConfig};

    fn exact(instance: &Instance) -> Solution {
        solve(instance, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn matches_oracle_on_small_instances() {
        for seed in 0..15 {
            let inst = generate(&GeneratorConfig::new(2, 2, 4, seed)).unwrap();
            let net = build_derived(&inst).unwrap();
            let sol = exact(&inst);
            match oracle_solve(&inst, &net) {
                Ok(plan) => {
                    assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
                    let got = sol.plan.as_ref().unwrap().total;
                    assert!(
                        (got - plan.total).abs() <= 1e-6 * (1.0 + plan.total),
                        "seed {seed}: bpbc {got} vs oracle {}",
                        plan.total
                    );
                }
                Err(crate::baselines::OracleError::Infeasible) => {
                    assert_eq!(sol.status, SolveStatus::Infeasible, "seed {seed}");
                }
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn heuristic_between_oracle_and_sequential() {
        for seed in 0..15 {
            let inst = generate(&GeneratorConfig::new(2, 2, 4, seed)).unwrap();
            let net = build_derived(&inst).unwrap();
            let cfg = SolverConfig { mode: SolveMode::RootOnly, ..SolverConfig::default() };
            let heur = solve(&inst, &cfg).unwrap();
            let oracle = oracle_solve(&inst, &net);
            let so = solve_so(&inst, &net);
            match (oracle, so) {
                (Ok(o), Ok(s)) => {
                    let h = heur.plan.as_ref().expect("heuristic must find a plan").total;
                    assert!(o.total <= h + 1e-6, "seed {seed}: oracle {} heur {h}", o.total);
                    assert!(h <= s.total + 1e-6, "seed {seed}: heur {h} seq {}", s.total);
                }
                _ => {}
            }
        }
    }

    #[test]
    fn toggles_do_not_change_the_optimum() {
        for seed in [0u64, 2, 3] {
            let inst = generate(&GeneratorConfig::new(2, 2, 4, seed)).unwrap();
            let base = exact(&inst);
            if base.status != SolveStatus::Optimal {
                continue;
            }
            let reference = base.plan.as_ref().unwrap().total;
            for k in 0..4 {
                let cfg = SolverConfig {
                    warm_start: k != 0,
                    variable_fixing: k != 1,
                    primal_heuristics: k != 2,
                    valid_inequalities: k != 3,
                    ..SolverConfig::default()
                };
                let alt = solve(&inst, &cfg).unwrap();
                assert_eq!(alt.status, SolveStatus::Optimal, "seed {seed} toggle {k}");
                let got = alt.plan.as_ref().unwrap().total;
                assert!(
                    (got - reference).abs() <= 1e-6 * (1.0 + reference),
                    "seed {seed} toggle {k}: {got} vs {reference}"
                );
            }
        }
    }
}
