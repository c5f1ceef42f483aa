//! Instance file format (JSON), parser/writer, and the synthetic generator.
//!
//! Generated geometry: stops evenly spaced on a horizontal line through the
//! middle of a 20x16 km region, buses departing the terminal at even
//! intervals over a 6-hour window and traversing the line at 15 km/h,
//! customers uniform over the region within reach of at least one stop.

use crate::model::{validate_instance, Bus, BusStop, Customer, Instance, Location, Params};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Identifier of the portable PRNG written into the instance header.
pub const RNG_ALGORITHM: &str = "chacha8";

const LINE_SPEED_KMH: f64 = 15.0;
const DEPARTURE_WINDOW_MIN: f64 = 360.0;
const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub n_stops: usize,
    pub n_buses: usize,
    pub n_customers: usize,
    pub seed: u64,
    pub region_width: f64,
    pub region_height: f64,
    pub line_trip_minutes: f64,
    pub params: Params,
}

impl GeneratorConfig {
    pub fn new(n_stops: usize, n_buses: usize, n_customers: usize, seed: u64) -> Self {
        GeneratorConfig {
            n_stops,
            n_buses,
            n_customers,
            seed,
            region_width: 20.0,
            region_height: 16.0,
            line_trip_minutes: 93.0,
            params: Params {
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
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("generation exhausted after {MAX_RESAMPLES} resamples for customer {0}")]
    GenerationExhausted(usize),
    #[error("generated instance failed validation: {0}")]
    GeneratedInvalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("instance invalid: {0}")]
    Invalid(String),
}

/// Generates a seeded synthetic instance; identical config and seed yield a
/// byte-identical file through `save`.
pub fn generate(config: &GeneratorConfig) -> Result<Instance, IoError> {
    assert!(config.n_stops >= 1 && config.n_buses >= 1 && config.n_customers >= 1);
    let p = config.params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mid_y = config.region_height / 2.0;
    let terminal = Location::new(0.0, mid_y);
    let line_km = config.line_trip_minutes / 60.0 * LINE_SPEED_KMH;

    let stops: Vec<BusStop> = (0..config.n_stops)
        .map(|k| {
            let frac = (k + 1) as f64 / config.n_stops as f64;
            BusStop {
                id: k,
                loc: Location::new(round9(config.region_width * frac), mid_y),
                route_km: round9(line_km * frac),
            }
        })
        .collect();

    let buses: Vec<Bus> = (0..config.n_buses)
        .map(|b| {
            let depart = DEPARTURE_WINDOW_MIN * b as f64 / config.n_buses as f64;
            Bus {
                id: b,
                arrival: stops
                    .iter()
                    .map(|s| round9(depart + s.route_km / LINE_SPEED_KMH * 60.0))
                    .collect(),
            }
        })
        .collect();

    let mut customers = Vec::with_capacity(config.n_customers);
    for i in 0..config.n_customers {
        let mut placed = None;
        for _ in 0..MAX_RESAMPLES {
            let loc = Location::new(
                round9(rng.gen_range(0.0..config.region_width)),
                round9(rng.gen_range(0.0..config.region_height)),
            );
            if stops.iter().any(|s| s.loc == loc) {
                continue;
            }
            // Earliest feasible service start over all (bus, stop) pairs in radius.
            let est = stops
                .iter()
                .filter(|s| s.loc.distance(&loc) <= p.radius)
                .flat_map(|s| {
                    let tau = s.loc.distance(&loc) / p.speed * 60.0;
                    buses
                        .iter()
                        .map(move |b| b.arrival[s.id] + p.tau_bus + p.tau_stop + tau)
                })
                .fold(f64::INFINITY, f64::min);
            if est + 1.0 > p.horizon_end {
                continue;
            }
            placed = Some((loc, est));
            break;
        }
        let Some((loc, est)) = placed else {
            return Err(IoError::GenerationExhausted(i));
        };
        // Demands in 0.5 kg steps on [0.5, 4.5].
        let demand = 0.5 * rng.gen_range(1..=9) as f64;
        let deadline = (est + 1.0).ceil() + rng.gen_range(0.0..=(p.horizon_end - (est + 1.0).ceil())).floor();
        customers.push(Customer { id: i, loc, demand, deadline });
    }

    let instance = Instance {
        name: format!(
            "fmtp-s{}-b{}-c{}-seed{}",
            config.n_stops, config.n_buses, config.n_customers, config.seed
        ),
        terminal,
        stops,
        buses,
        customers,
        params: p,
    };
    let violations = validate_instance(&instance);
    if !violations.is_empty() {
        return Err(IoError::GeneratedInvalid(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(instance)
}

fn round9(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mag = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(8 - mag);
    (x * factor).round() / factor
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    name: String,
    #[serde(default = "default_rng")]
    rng: String,
    terminal: Location,
    stops: Vec<BusStop>,
    buses: Vec<Bus>,
    customers: Vec<Customer>,
    params: Params,
}

fn default_rng() -> String {
    RNG_ALGORITHM.to_string()
}

pub fn save(instance: &Instance, path: &Path) -> Result<(), IoError> {
    let file = InstanceFile {
        name: instance.name.clone(),
        rng: RNG_ALGORITHM.to_string(),
        terminal: instance.terminal,
        stops: instance.stops.clone(),
        buses: instance.buses.clone(),
        customers: instance.customers.clone(),
        params: instance.params.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| IoError::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Instance, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|e| {
        IoError::Parse(format!("{}:{}: {}", path.display(), e.line(), e))
    })?;
    let instance = Instance {
        name: file.name,
        terminal: file.terminal,
        stops: file.stops,
        buses: file.buses,
        customers: file.customers,
        params: file.params,
    };
    let violations = validate_instance(&instance);
    if !violations.is_empty() {
        return Err(IoError::Invalid(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(instance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_instance_is_valid_and_in_range() {
        let cfg = GeneratorConfig::new(6, 6, 18, 42);
        let inst = generate(&cfg).unwrap();
        assert_eq!(inst.n_customers(), 18);
        for c in &inst.customers {
            assert!(c.demand >= 0.5 && c.demand <= 4.5);
            assert!((c.demand / 0.5).fract().abs() < 1e-12);
            assert!(c.deadline <= 480.0);
        }
        // 36 arrival entries, strictly increasing per bus.
        assert_eq!(inst.buses.iter().map(|b| b.arrival.len()).sum::<usize>(), 36);
        for b in &inst.buses {
            assert!(b.arrival.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = GeneratorConfig::new(3, 3, 6, 7);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let pa = dir.path().join("a.fmtp.json");
        let pb = dir.path().join("b.fmtp.json");
        save(&a, &pa).unwrap();
        save(&b, &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }

    #[test]
    fn round_trip_identity_over_seeds() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..100 {
            let cfg = GeneratorConfig::new(2, 2, 3, seed);
            let inst = generate(&cfg).unwrap();
            let path = dir.path().join(format!("i{seed}.fmtp.json"));
            save(&inst, &path).unwrap();
            let back = load(&path).unwrap();
            assert_eq!(inst, back, "seed {seed}");
        }
    }

    #[test]
    fn generated_customers_always_servable() {
        for seed in 0..100 {
            let cfg = GeneratorConfig::new(3, 2, 5, seed);
            let inst = generate(&cfg).unwrap();
            let net = crate::model::build_derived(&inst).unwrap();
            for i in 0..inst.n_customers() {
                assert!(
                    (0..inst.n_stops()).any(|s| !net.feas_buses[s][i].is_empty()),
                    "seed {seed} customer {i}"
                );
            }
        }
    }

    #[test]
    fn negative_demand_rejected_with_context() {
        let cfg = GeneratorConfig::new(2, 2, 2, 1);
        let mut inst = generate(&cfg).unwrap();
        inst.customers[0].demand = -1.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fmtp.json");
        save(&inst, &path).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("customer 0"), "{err}");
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        let cfg = GeneratorConfig::new(2, 2, 2, 1);
        let inst = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.fmtp.json");
        save(&inst, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let bad = text.replacen("{\n", "{\n  \"mystery\": 1,\n", 1);
        std::fs::write(&path, bad).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("unknown field"), "{err}");
    }
}
