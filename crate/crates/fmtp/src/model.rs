//! Problem data and the derived quantities shared by every solver component.
//!
//! All times are minutes since the start of the planning horizon, all
//! distances are kilometers, and all loads are kilograms.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }

    pub fn distance(&self, other: &Location) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: usize,
    pub loc: Location,
    /// Parcel weight q_i in kg; indivisible.
    pub demand: f64,
    /// Latest feasible service start l_i.
    pub deadline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusStop {
    pub id: usize,
    pub loc: Location,
    /// Cumulative line distance from the terminal; basis for bus costs.
    pub route_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Arrival time e_{bs} at each stop, indexed like `Instance::stops`.
    pub arrival: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Bus parcel capacity Q^B (kg).
    pub q_bus: f64,
    /// Per-stop unload capacity Q^S (kg) for one bus visit.
    pub q_stop: f64,
    /// Drone service radius (km).
    pub radius: f64,
    /// Drone cruise speed (km/h).
    pub speed: f64,
    /// Maximum total operation duration per drone (min).
    pub delta: f64,
    /// Bus unload time tau^B (min).
    pub tau_bus: f64,
    /// Drone loading / battery-swap time tau^S (min).
    pub tau_stop: f64,
    /// Drone drop-off time tau^D (min).
    pub tau_drop: f64,
    /// Bus operation cost ($ per kg per km of line distance).
    pub c_bus: f64,
    /// Drone operation cost ($ per km flown).
    pub c_drone: f64,
    /// Drone fixed cost f^F ($ per launched drone).
    pub f_fixed: f64,
    /// Locker holding cost f^H ($ per kg per minute).
    pub f_hold: f64,
    /// End of the planning horizon l_o (min).
    pub horizon_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub terminal: Location,
    pub stops: Vec<BusStop>,
    pub buses: Vec<Bus>,
    pub customers: Vec<Customer>,
    pub params: Params,
}

impl Instance {
    pub fn n_stops(&self) -> usize {
        self.stops.len()
    }
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }
    pub fn n_customers(&self) -> usize {
        self.customers.len()
    }
}

/// A single rule violation found by `validate_instance`.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStops,
    NoBuses,
    NonPositiveParam(&'static str),
    NonFiniteCoordinate(String),
    NonPositiveDemand(usize),
    DemandExceedsStopCap(usize),
    DeadlineOutOfHorizon(usize),
    NonMonotoneRouteKm(usize),
    NonMonotoneTimetable(usize),
    BusOrderViolated { earlier: usize, later: usize },
    TimetableLengthMismatch(usize),
    CustomerOutOfReach(usize),
    UnservableCustomer(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStops => write!(f, "instance has no bus stops"),
            Violation::NoBuses => write!(f, "instance has no buses"),
            Violation::NonPositiveParam(p) => write!(f, "parameter {p} must be strictly positive"),
            Violation::NonFiniteCoordinate(who) => write!(f, "{who} has a non-finite coordinate"),
            Violation::NonPositiveDemand(i) => write!(f, "customer {i} has non-positive demand"),
            Violation::DemandExceedsStopCap(i) => {
                write!(f, "customer {i} demand exceeds the per-stop unload capacity")
            }
            Violation::DeadlineOutOfHorizon(i) => {
                write!(f, "customer {i} deadline lies outside the planning horizon")
            }
            Violation::NonMonotoneRouteKm(s) => {
                write!(f, "stop {s} breaks the nondecreasing route-km order")
            }
            Violation::NonMonotoneTimetable(b) => {
                write!(f, "bus {b} timetable is not strictly increasing along the line")
            }
            Violation::BusOrderViolated { earlier, later } => write!(
                f,
                "bus {later} does not arrive strictly after bus {earlier} at every stop"
            ),
            Violation::TimetableLengthMismatch(b) => {
                write!(f, "bus {b} timetable length differs from the stop count")
            }
            Violation::CustomerOutOfReach(i) => {
                write!(f, "customer {i} is outside the radius of every stop")
            }
            Violation::UnservableCustomer(i) => {
                write!(f, "customer {i} has no feasible (bus, stop) pair")
            }
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("customer {0} has no feasible (bus, stop) pair")]
    UnservableCustomer(usize),
    #[error("bus {bus} cannot deliver to customer {customer} at stop {stop} in time")]
    InfeasiblePair { bus: usize, stop: usize, customer: usize },
}

/// Precomputed reachability, feasibility, and cost maps.
///
/// Immutable after construction; shared freely across workers.
#[derive(Debug, Clone)]
pub struct DerivedNetwork {
    /// One-way drone travel time tau_si (min), `[stop][customer]`.
    pub tau: Vec<Vec<f64>>,
    /// Round-trip duration delta_si (min), `[stop][customer]`.
    pub delta: Vec<Vec<f64>>,
    /// Customers reachable from each stop (within radius and with a feasible bus).
    pub reach: Vec<Vec<usize>>,
    /// Feasible buses B_s(i), `[stop][customer]`.
    pub feas_buses: Vec<Vec<Vec<usize>>>,
    /// Parcel release time e_i^b = e_{bs} + tau^B, `[bus][stop]` (customer independent).
    pub release: Vec<Vec<f64>>,
    /// Bus cost per kg c1_{bs}, `[bus][stop]`.
    pub c1: Vec<Vec<f64>>,
    /// Drone round-trip cost c2_{si}, `[stop][customer]`.
    pub c2: Vec<Vec<f64>>,
}

impl DerivedNetwork {
    pub fn in_reach(&self, stop: usize, customer: usize) -> bool {
        self.reach[stop].contains(&customer)
    }

    pub fn bus_feasible(&self, stop: usize, customer: usize, bus: usize) -> bool {
        self.feas_buses[stop][customer].contains(&bus)
    }
}

/// Builds every derived map of the network from the raw instance.
///
/// Fails if some customer has no feasible (bus, stop) pair at all.
pub fn build_derived(instance: &Instance) -> Result<DerivedNetwork, ModelError> {
    let p = &instance.params;
    let ns = instance.n_stops();
    let nc = instance.n_customers();
    let nb = instance.n_buses();

    let mut tau = vec![vec![0.0; nc]; ns];
    let mut delta = vec![vec![0.0; nc]; ns];
    let mut reach = vec![Vec::new(); ns];
    let mut feas_buses = vec![vec![Vec::new(); nc]; ns];
    let mut c2 = vec![vec![0.0; nc]; ns];

    for (s, stop) in instance.stops.iter().enumerate() {
        for (i, cust) in instance.customers.iter().enumerate() {
            let dist = stop.loc.distance(&cust.loc);
            let t = dist / p.speed * 60.0;
            tau[s][i] = t;
            delta[s][i] = p.tau_stop + p.tau_drop + 2.0 * t;
            c2[s][i] = p.c_drone * 2.0 * dist;
            // A pair is feasible only if some flight can serve it: within
            // drone radius, round trip under the flight cap, deadline met.
            if dist <= p.radius + crate::EPS && delta[s][i] <= p.delta + crate::EPS {
                for bus in &instance.buses {
                    if bus.arrival[s] + p.tau_bus + p.tau_stop + t <= cust.deadline + crate::EPS {
                        feas_buses[s][i].push(bus.id);
                    }
                }
                if !feas_buses[s][i].is_empty() {
                    reach[s].push(i);
                }
            }
        }
    }

    for i in 0..nc {
        let servable = (0..ns).any(|s| reach[s].contains(&i));
        if !servable {
            return Err(ModelError::UnservableCustomer(i));
        }
    }

    let mut release = vec![vec![0.0; ns]; nb];
    let mut c1 = vec![vec![0.0; ns]; nb];
    for (b, bus) in instance.buses.iter().enumerate() {
        for (s, stop) in instance.stops.iter().enumerate() {
            release[b][s] = bus.arrival[s] + p.tau_bus;
            c1[b][s] = p.c_bus * stop.route_km;
        }
    }

    Ok(DerivedNetwork { tau, delta, reach, feas_buses, release, c1, c2 })
}

/// Earliest feasible service start w_i when bus `b` drops the parcel at stop `s`.
pub fn earliest_service_start(
    instance: &Instance,
    net: &DerivedNetwork,
    customer: usize,
    bus: usize,
    stop: usize,
) -> Result<f64, ModelError> {
    if !net.bus_feasible(stop, customer, bus) {
        return Err(ModelError::InfeasiblePair { bus, stop, customer });
    }
    let p = &instance.params;
    Ok(instance.buses[bus].arrival[stop] + p.tau_bus + p.tau_stop + net.tau[stop][customer])
}

/// Diagnostic validation of every instance invariant; returns all violations found.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let p = &instance.params;

    if instance.stops.is_empty() {
        out.push(Violation::NoStops);
    }
    if instance.buses.is_empty() {
        out.push(Violation::NoBuses);
    }

    for (name, v) in [
        ("q_bus", p.q_bus),
        ("q_stop", p.q_stop),
        ("radius", p.radius),
        ("speed", p.speed),
        ("delta", p.delta),
        ("tau_bus", p.tau_bus),
        ("tau_stop", p.tau_stop),
        ("tau_drop", p.tau_drop),
        ("c_bus", p.c_bus),
        ("c_drone", p.c_drone),
        ("f_fixed", p.f_fixed),
        ("f_hold", p.f_hold),
        ("horizon_end", p.horizon_end),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            out.push(Violation::NonPositiveParam(name));
        }
    }

    if !instance.terminal.x.is_finite() || !instance.terminal.y.is_finite() {
        out.push(Violation::NonFiniteCoordinate("terminal".into()));
    }
    for stop in &instance.stops {
        if !stop.loc.x.is_finite() || !stop.loc.y.is_finite() {
            out.push(Violation::NonFiniteCoordinate(format!("stop {}", stop.id)));
        }
    }
    for w in instance.stops.windows(2) {
        if w[1].route_km < w[0].route_km {
            out.push(Violation::NonMonotoneRouteKm(w[1].id));
        }
    }

    for bus in &instance.buses {
        if bus.arrival.len() != instance.stops.len() {
            out.push(Violation::TimetableLengthMismatch(bus.id));
            continue;
        }
        if bus.arrival.windows(2).any(|w| w[1] <= w[0]) {
            out.push(Violation::NonMonotoneTimetable(bus.id));
        }
    }
    for pair in instance.buses.windows(2) {
        let (b1, b2) = (&pair[0], &pair[1]);
        if b1.arrival.len() == b2.arrival.len()
            && b1.arrival.iter().zip(&b2.arrival).any(|(a1, a2)| a2 <= a1)
        {
            out.push(Violation::BusOrderViolated { earlier: b1.id, later: b2.id });
        }
    }

    for cust in &instance.customers {
        if !cust.loc.x.is_finite() || !cust.loc.y.is_finite() {
            out.push(Violation::NonFiniteCoordinate(format!("customer {}", cust.id)));
        }
        if !(cust.demand > 0.0) {
            out.push(Violation::NonPositiveDemand(cust.id));
        }
        if cust.demand > p.q_stop + crate::EPS {
            out.push(Violation::DemandExceedsStopCap(cust.id));
        }
        if cust.deadline < 0.0 || cust.deadline > p.horizon_end + crate::EPS {
            out.push(Violation::DeadlineOutOfHorizon(cust.id));
        }

        let within_radius = instance
            .stops
            .iter()
            .any(|s| s.loc.distance(&cust.loc) <= p.radius + crate::EPS);
        if !within_radius {
            out.push(Violation::CustomerOutOfReach(cust.id));
            continue;
        }
        // Feasibility check mirrors build_derived without constructing the full network.
        let servable = instance.stops.iter().enumerate().any(|(s, stop)| {
            let dist = stop.loc.distance(&cust.loc);
            dist <= p.radius + crate::EPS
                && instance.buses.iter().any(|b| {
                    b.arrival.len() == instance.stops.len()
                        && b.arrival[s] + p.tau_bus + p.tau_stop + dist / p.speed * 60.0
                            <= cust.deadline + crate::EPS
                })
        });
        if !servable {
            out.push(Violation::UnservableCustomer(cust.id));
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn default_params() -> Params {
        Params {
            q_bus: 50.0,
            q_stop: 10.0,
            radius: 8.0,
            speed: 40.0,
            delta: 120.0,
            tau_bus: 1.0,
            tau_stop: 1.0,
            tau_drop: 1.0,
            c_bus: 1.0,
            c_drone: 2.0,
            f_fixed: 40.0,
            f_hold: 1.0,
            horizon_end: 480.0,
        }
    }

    fn one_customer_instance(deadline: f64) -> Instance {
        Instance {
            name: "tiny".into(),
            terminal: Location::new(0.0, 0.0),
            stops: vec![BusStop { id: 0, loc: Location::new(5.0, 0.0), route_km: 5.0 }],
            buses: vec![Bus { id: 0, arrival: vec![20.0] }],
            customers: vec![Customer {
                id: 0,
                loc: Location::new(5.0, 4.0),
                demand: 2.0,
                deadline,
            }],
            params: default_params(),
        }
    }

    #[test]
    fn derived_travel_and_round_trip_times() {
        // speed 40 km/h over 4 km is 6 min one way, 14 min round trip.
        let inst = one_customer_instance(100.0);
        let net = build_derived(&inst).unwrap();
        assert!((net.tau[0][0] - 6.0).abs() < 1e-9);
        assert!((net.delta[0][0] - 14.0).abs() < 1e-9);
        assert!((net.c2[0][0] - 16.0).abs() < 1e-9);
        assert!((net.c1[0][0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn bus_feasibility_respects_deadline() {
        // 20 + 1 + 1 + 6 = 28 <= 100 feasible; fails once the deadline drops to 27.
        let inst = one_customer_instance(100.0);
        let net = build_derived(&inst).unwrap();
        assert!(net.bus_feasible(0, 0, 0));

        let tight = one_customer_instance(27.0);
        assert_eq!(build_derived(&tight).err(), Some(ModelError::UnservableCustomer(0)));
    }

    #[test]
    fn earliest_service_start_examples() {
        let inst = one_customer_instance(100.0);
        let net = build_derived(&inst).unwrap();
        let w = earliest_service_start(&inst, &net, 0, 0, 0).unwrap();
        assert!((w - 28.0).abs() < 1e-9);

        let mut late = one_customer_instance(100.0);
        late.buses[0].arrival = vec![35.0];
        late.customers[0].loc = Location::new(5.0, 6.0); // 9 min away
        let net = build_derived(&late).unwrap();
        let w = earliest_service_start(&late, &net, 0, 0, 0).unwrap();
        assert!((w - 46.0).abs() < 1e-9);
    }

    #[test]
    fn earliest_service_start_rejects_infeasible_pair() {
        let mut inst = one_customer_instance(100.0);
        inst.buses.push(Bus { id: 1, arrival: vec![99.0] });
        let net = build_derived(&inst).unwrap();
        assert!(matches!(
            earliest_service_start(&inst, &net, 0, 1, 0),
            Err(ModelError::InfeasiblePair { .. })
        ));
    }

    #[test]
    fn validation_flags_named_rules() {
        let inst = one_customer_instance(100.0);
        assert!(validate_instance(&inst).is_empty());

        let mut heavy = inst.clone();
        heavy.customers[0].demand = 12.0;
        assert!(validate_instance(&heavy).contains(&Violation::DemandExceedsStopCap(0)));

        let mut bad = inst.clone();
        bad.stops.push(BusStop { id: 1, loc: Location::new(8.0, 0.0), route_km: 8.0 });
        bad.buses[0].arrival = vec![20.0, 18.0];
        assert!(validate_instance(&bad).contains(&Violation::NonMonotoneTimetable(0)));
    }

    #[test]
    fn tau_is_symmetric_and_delta_has_fixed_floor() {
        let inst = one_customer_instance(100.0);
        let net = build_derived(&inst).unwrap();
        let p = &inst.params;
        for s in 0..inst.n_stops() {
            for i in 0..inst.n_customers() {
                assert!(net.delta[s][i] >= p.tau_stop + p.tau_drop - 1e-12);
                // delta is built from the symmetric one-way time twice.
                assert!(
                    (net.delta[s][i] - (p.tau_stop + p.tau_drop + 2.0 * net.tau[s][i])).abs()
                        < 1e-12
                );
            }
        }
    }

    #[test]
    fn deadline_monotonicity_grows_feasible_buses() {
        let loose = one_customer_instance(200.0);
        let tight = one_customer_instance(30.0);
        let net_loose = build_derived(&loose).unwrap();
        let net_tight = build_derived(&tight).unwrap();
        assert!(net_tight.feas_buses[0][0].len() <= net_loose.feas_buses[0][0].len());
    }
}
