//! Column pricing: labeling algorithms for assignment columns (one per
//! bus/stop pair) and flight columns (one per stop), plus brute-force
//! enumeration references used to cross-check the labeling.

use crate::columns::{schedule_flight, AssignmentColumn, FlightColumn};
use crate::model::{DerivedNetwork, Instance};
use crate::EPS;
use std::collections::{HashMap, HashSet};

/// Negative-reduced-cost threshold below which a column is worth adding.
pub const PRICE_TOL: f64 = 1e-6;
/// Cap on columns returned by one pricing call.
pub const MAX_COLUMNS: usize = 10;

/// Arc-level restrictions on flight structure from branching decisions.
/// Endpoints are customers; `None` is the locker.
#[derive(Debug, Clone, Default)]
pub struct ArcRules {
    pub forbidden: HashSet<(Option<usize>, Option<usize>)>,
    /// Arc forced to 1: the only arc leaving `key` goes to `value`.
    pub forced_from: HashMap<Option<usize>, Option<usize>>,
    /// Arc forced to 1: the only arc entering `key` comes from `value`.
    pub forced_to: HashMap<Option<usize>, Option<usize>>,
}

impl ArcRules {
    pub fn allows(&self, from: Option<usize>, to: Option<usize>) -> bool {
        if self.forbidden.contains(&(from, to)) {
            return false;
        }
        if let Some(&t) = self.forced_from.get(&from) {
            if t != to {
                return false;
            }
        }
        if let Some(&f) = self.forced_to.get(&to) {
            if f != from {
                return false;
            }
        }
        true
    }
}

#[derive(Debug)]
pub struct AssignmentPricingResult {
    /// Up to [`MAX_COLUMNS`] columns with reduced cost below `-PRICE_TOL`.
    pub columns: Vec<AssignmentColumn>,
    /// Exact minimum reduced cost over all nonempty feasible columns
    /// (`f64::INFINITY` when no candidate customer exists).
    pub best: f64,
}

/// Prices assignment columns for one (bus, stop) pair.
///
/// The per-customer reduced-cost contribution is
/// `c1_{bs} q_i + c2_{si} - mu_i - q_i lambda_b + extra_i`,
/// where `extra_i` collects the Benders-cut dual terms for this pair, and a
/// column additionally pays `-pi_bs`. Candidates in `allowed` must already
/// respect branching and bus feasibility; loads are capped by the locker
/// capacity.
pub fn price_assignment(
    instance: &Instance,
    net: &DerivedNetwork,
    bus: usize,
    stop: usize,
    allowed: &[usize],
    mu: &[f64],
    pi_bs: f64,
    lambda_b: f64,
    extra: &[f64],
) -> AssignmentPricingResult {
    let theta = |i: usize| -> f64 {
        net.c1[bus][stop] * instance.customers[i].demand + net.c2[stop][i] - mu[i]
            - instance.customers[i].demand * lambda_b
            + extra[i]
    };

    // Pareto labels over (reduced cost, load); items scanned in id order so
    // every subset is reached exactly once.
    #[derive(Clone)]
    struct Label {
        rc: f64,
        load: f64,
        customers: Vec<usize>,
    }
    // The empty label is kept out of the Pareto pool: it would dominate
    // every nonempty label, yet only nonempty columns are priced.
    let mut labels: Vec<Label> = Vec::new();
    for &i in allowed {
        let q = instance.customers[i].demand;
        let t = theta(i);
        let mut extended: Vec<Label> = Vec::new();
        if q <= instance.params.q_stop + EPS {
            extended.push(Label { rc: t, load: q, customers: vec![i] });
        }
        for l in &labels {
            if l.load + q <= instance.params.q_stop + EPS {
                let mut customers = l.customers.clone();
                customers.push(i);
                extended.push(Label { rc: l.rc + t, load: l.load + q, customers });
            }
        }
        labels.extend(extended);
        labels = prune_pareto(labels, |l| (l.rc, l.load));
    }

    let mut best = f64::INFINITY;
    let mut negatives: Vec<Label> = Vec::new();
    for l in labels {
        let rc = -pi_bs + l.rc;
        best = best.min(rc);
        if rc < -PRICE_TOL {
            negatives.push(Label { rc, ..l });
        }
    }
    negatives.sort_by(|a, b| a.rc.total_cmp(&b.rc));
    negatives.truncate(MAX_COLUMNS);
    let columns = negatives
        .into_iter()
        .map(|l| AssignmentColumn::new(instance, net, bus, stop, l.customers))
        .collect();
    AssignmentPricingResult { columns, best }
}

/// Reference pricing by subset enumeration; only for small candidate sets.
pub fn enumerate_assignment_rc(
    instance: &Instance,
    net: &DerivedNetwork,
    bus: usize,
    stop: usize,
    allowed: &[usize],
    mu: &[f64],
    pi_bs: f64,
    lambda_b: f64,
    extra: &[f64],
) -> f64 {
    assert!(allowed.len() <= 20, "enumeration reference limited to 20 candidates");
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << allowed.len()) {
        let mut load = 0.0;
        let mut rc = -pi_bs;
        for (k, &i) in allowed.iter().enumerate() {
            if mask >> k & 1 == 1 {
                let q = instance.customers[i].demand;
                load += q;
                rc += net.c1[bus][stop] * q + net.c2[stop][i] - mu[i] - q * lambda_b + extra[i];
            }
        }
        if load <= instance.params.q_stop + EPS {
            best = best.min(rc);
        }
    }
    best
}

#[derive(Debug)]
pub struct FlightPricingResult {
    pub columns: Vec<FlightColumn>,
    /// Exact minimum reduced cost over all nonempty feasible flights
    /// (`f64::INFINITY` when none exists).
    pub best: f64,
}

/// Prices flight columns at one stop against trip duals `omega`
/// (parallel to `pairs`, one value per active (customer, bus) pair).
///
/// A flight's reduced cost is
/// `f_fixed + sum_trips (f_hold q_i holding_i - omega_{ib})`.
/// Labels carry (reduced cost, drone availability, used duration, visited
/// set); a label is dropped when another at the same pair is at least as
/// good in all four components.
pub fn price_flight(
    instance: &Instance,
    net: &DerivedNetwork,
    stop: usize,
    pairs: &[(usize, usize)],
    omega: &[f64],
    rules: &ArcRules,
) -> FlightPricingResult {
    assert_eq!(pairs.len(), omega.len());
    assert!(instance.n_customers() <= 64);
    let p = &instance.params;

    #[derive(Clone)]
    struct Label {
        rc: f64,
        avail: f64,
        duration: f64,
        visited: u64,
        trips: Vec<(usize, usize)>,
    }

    // extend label `l` with pair index k; None = infeasible.
    let extend = |l: &Label, k: usize| -> Option<Label> {
        let (j, b) = pairs[k];
        if l.visited >> j & 1 == 1 {
            return None;
        }
        let from = l.trips.last().map(|t| t.0);
        if !rules.allows(from, Some(j)) {
            return None;
        }
        let release = net.release[b][stop];
        let loading = l.avail.max(release);
        let service = loading + p.tau_stop + net.tau[stop][j];
        if service > instance.customers[j].deadline + EPS {
            return None;
        }
        let duration = l.duration + net.delta[stop][j];
        if duration > p.delta + EPS {
            return None;
        }
        let holding = loading - release;
        let rc = l.rc + p.f_hold * instance.customers[j].demand * holding - omega[k];
        let mut trips = l.trips.clone();
        trips.push((j, b));
        Some(Label { rc, avail: loading + net.delta[stop][j], duration, visited: l.visited | 1 << j, trips })
    };

    // Labels per terminal pair index, extended level by level; each level
    // adds one trip, so the process ends after at most n_customers rounds.
    let root = Label { rc: p.f_fixed, avail: 0.0, duration: 0.0, visited: 0, trips: Vec::new() };
    let mut frontier: Vec<Label> = (0..pairs.len()).filter_map(|k| extend(&root, k)).collect();
    let mut settled: Vec<Vec<Label>> = vec![Vec::new(); pairs.len()];
    let mut complete: Vec<Label> = Vec::new();

    while !frontier.is_empty() {
        let mut by_pair: Vec<Vec<Label>> = vec![Vec::new(); pairs.len()];
        for l in frontier.drain(..) {
            let k = pairs.iter().position(|&pr| pr == *l.trips.last().unwrap()).unwrap();
            by_pair[k].push(l);
        }
        let mut next = Vec::new();
        for (k, mut bucket) in by_pair.into_iter().enumerate() {
            if bucket.is_empty() {
                continue;
            }
            // Dominance against both settled labels at this pair and peers.
            bucket.retain(|l| !settled[k].iter().any(|s| dominates(s, l)));
            let bucket = prune_dominated(bucket);
            for l in bucket {
                if rules.allows(Some(pairs[k].0), None) {
                    complete.push(l.clone());
                }
                for k2 in 0..pairs.len() {
                    if let Some(nl) = extend(&l, k2) {
                        next.push(nl);
                    }
                }
                settled[k].push(l);
            }
        }
        frontier = next;
    }

    fn dominates(a: &Label, b: &Label) -> bool {
        a.rc <= b.rc + 1e-12
            && a.avail <= b.avail + 1e-12
            && a.duration <= b.duration + 1e-12
            && a.visited & !b.visited == 0
    }
    fn prune_dominated(labels: Vec<Label>) -> Vec<Label> {
        let mut kept: Vec<Label> = Vec::new();
        for l in labels {
            if kept.iter().any(|k| dominates(k, &l)) {
                continue;
            }
            kept.retain(|k| !dominates(&l, k));
            kept.push(l);
        }
        kept
    }

    let mut best = f64::INFINITY;
    complete.sort_by(|a, b| a.rc.total_cmp(&b.rc));
    let mut columns = Vec::new();
    for l in &complete {
        best = best.min(l.rc);
        if l.rc < -PRICE_TOL && columns.len() < MAX_COLUMNS {
            let col = schedule_flight(instance, net, stop, &l.trips)
                .expect("priced flight must schedule");
            columns.push(col);
        }
    }
    FlightPricingResult { columns, best }
}

/// Reference flight pricing by depth-first enumeration of trip orders.
pub fn enumerate_flight_rc(
    instance: &Instance,
    net: &DerivedNetwork,
    stop: usize,
    pairs: &[(usize, usize)],
    omega: &[f64],
    rules: &ArcRules,
) -> f64 {
    assert!(pairs.len() <= 10, "enumeration reference limited to 10 pairs");
    fn recurse(
        instance: &Instance,
        net: &DerivedNetwork,
        stop: usize,
        pairs: &[(usize, usize)],
        omega: &[f64],
        rules: &ArcRules,
        seq: &mut Vec<(usize, usize)>,
        best: &mut f64,
    ) {
        if !seq.is_empty() && rules.allows(seq.last().map(|t| t.0), None) {
            if let Ok(col) = schedule_flight(instance, net, stop, seq) {
                let rc: f64 = col.cost
                    - seq
                        .iter()
                        .map(|t| omega[pairs.iter().position(|p| p == t).unwrap()])
                        .sum::<f64>();
                *best = best.min(rc);
            }
        }
        for k in 0..pairs.len() {
            let (j, _) = pairs[k];
            if seq.iter().any(|t| t.0 == j) {
                continue;
            }
            if !rules.allows(seq.last().map(|t| t.0), Some(j)) {
                continue;
            }
            seq.push(pairs[k]);
            if schedule_flight(instance, net, stop, seq).is_ok() {
                recurse(instance, net, stop, pairs, omega, rules, seq, best);
            }
            seq.pop();
        }
    }
    let mut best = f64::INFINITY;
    recurse(instance, net, stop, pairs, omega, rules, &mut Vec::new(), &mut best);
    best
}

/// Keeps the Pareto frontier for minimisation over the two keys.
fn prune_pareto<T, F: Fn(&T) -> (f64, f64)>(items: Vec<T>, key: F) -> Vec<T> {
    let dominates = |a: (f64, f64), b: (f64, f64)| a.0 <= b.0 + 1e-12 && a.1 <= b.1 + 1e-12;
    let mut kept: Vec<T> = Vec::new();
    for it in items {
        let k = key(&it);
        if kept.iter().any(|x| dominates(key(x), k)) {
            continue;
        }
        kept.retain(|x| !dominates(k, key(x)));
        kept.push(it);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance_io::{generate, GeneratorConfig};
    use crate::model::build_derived;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_duals(rng: &mut ChaCha8Rng, inst: &Instance) -> (Vec<f64>, f64, f64) {
        let mu: Vec<f64> = (0..inst.n_customers()).map(|_| rng.gen_range(0.0..60.0)).collect();
        let pi = -rng.gen_range(0.0..20.0);
        let lambda = -rng.gen_range(0.0..2.0);
        (mu, pi, lambda)
    }

    #[test]
    fn assignment_labeling_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..60 {
            let inst = generate(&GeneratorConfig::new(3, 2, 6, seed)).unwrap();
            let net = build_derived(&inst).unwrap();
            let (mu, pi, lambda) = random_duals(&mut rng, &inst);
            let extra: Vec<f64> = (0..inst.n_customers()).map(|_| rng.gen_range(0.0..5.0)).collect();
            for s in 0..inst.n_stops() {
                for b in 0..inst.n_buses() {
                    let allowed: Vec<usize> = (0..inst.n_customers())
                        .filter(|&i| net.bus_feasible(s, i, b))
                        .collect();
                    if allowed.is_empty() {
                        continue;
                    }
                    let res = price_assignment(&inst, &net, b, s, &allowed, &mu, pi, lambda, &extra);
                    let oracle = enumerate_assignment_rc(&inst, &net, b, s, &allowed, &mu, pi, lambda, &extra);
                    assert!((res.best - oracle).abs() <= 1e-9, "seed {seed} s{s} b{b}: {} vs {oracle}", res.best);
                    for c in &res.columns {
                        assert!(c.load <= inst.params.q_stop + EPS);
                    }
                }
            }
        }
    }

    #[test]
    fn flight_labeling_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for seed in 0..60 {
            let inst = generate(&GeneratorConfig::new(2, 2, 5, seed)).unwrap();
            let net = build_derived(&inst).unwrap();
            for s in 0..inst.n_stops() {
                let pairs: Vec<(usize, usize)> = (0..inst.n_customers())
                    .flat_map(|i| net.feas_buses[s][i].iter().map(move |&b| (i, b)))
                    .collect();
                if pairs.is_empty() {
                    continue;
                }
                let omega: Vec<f64> = pairs.iter().map(|_| rng.gen_range(0.0..80.0)).collect();
                let rules = ArcRules::default();
                let res = price_flight(&inst, &net, s, &pairs, &omega, &rules);
                let oracle = enumerate_flight_rc(&inst, &net, s, &pairs, &omega, &rules);
                assert!((res.best - oracle).abs() <= 1e-9, "seed {seed} s{s}: {} vs {oracle}", res.best);
                for c in &res.columns {
                    let recomputed = crate::columns::flight_cost(c, &inst);
                    assert!((c.cost - recomputed).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn flight_labeling_respects_arc_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for seed in 0..30 {
            let inst = generate(&GeneratorConfig::new(2, 2, 4, seed)).unwrap();
            let net = build_derived(&inst).unwrap();
            for s in 0..inst.n_stops() {
                let pairs: Vec<(usize, usize)> = (0..inst.n_customers())
                    .flat_map(|i| net.feas_buses[s][i].iter().map(move |&b| (i, b)))
                    .collect();
                if pairs.len() < 2 {
                    continue;
                }
                let omega: Vec<f64> = pairs.iter().map(|_| rng.gen_range(0.0..80.0)).collect();
                let mut rules = ArcRules::default();
                let (i, _) = pairs[rng.gen_range(0..pairs.len())];
                let (j, _) = pairs[rng.gen_range(0..pairs.len())];
                rules.forbidden.insert((Some(i), Some(j)));
                if rng.gen_bool(0.5) {
                    rules.forced_from.insert(None, Some(i));
                }
                let res = price_flight(&inst, &net, s, &pairs, &omega, &rules);
                let oracle = enumerate_flight_rc(&inst, &net, s, &pairs, &omega, &rules);
                assert!((res.best - oracle).abs() <= 1e-9, "seed {seed} s{s}: {} vs {oracle}", res.best);
                for c in &res.columns {
                    for (a, b) in c.consecutive_pairs() {
                        assert!(rules.allows(a, b));
                    }
                }
            }
        }
    }

    #[test]
    fn negative_columns_only_below_threshold() {
        let inst = generate(&GeneratorConfig::new(2, 2, 6, 3)).unwrap();
        let net = build_derived(&inst).unwrap();
        let mu = vec![0.0; 6];
        let allowed: Vec<usize> = (0..6).filter(|&i| net.bus_feasible(0, i, 0)).collect();
        let extra = vec![0.0; 6];
        // No duals: all reduced costs are the positive column costs.
        let res = price_assignment(&inst, &net, 0, 0, &allowed, &mu, 0.0, 0.0, &extra);
        assert!(res.columns.is_empty());
        assert!(res.best > 0.0);
    }
}
