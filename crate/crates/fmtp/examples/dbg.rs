use fmtp::benders::*;
use fmtp::instance_io::{generate, GeneratorConfig};
use fmtp::model::build_derived;

fn main() {
    for seed in 0..10u64 {
        for ineq in [false, true] {
            let inst = generate(&GeneratorConfig::new(2, 2, 4, seed)).unwrap();
            let net = build_derived(&inst).unwrap();
            let mut state = MasterState::new(inst.n_stops());
            if ineq { state.cuts = initial_inequalities(&inst, &net); }
            let rules = NodeRules::root(&inst);
            match solve_bmp(&inst, &net, &mut state, &rules) {
                Ok(res) => println!("seed {seed} ineq {ineq}: {:?} obj {:.4}", res.status, res.objective),
                Err(e) => println!("seed {seed} ineq {ineq}: ERR {e}"),
            }
        }
    }
}
