//! Convergence study for the open-screen problem: the density error should
//! decrease with order 3 under dyadic refinement.

use igabem::experiment::{run_experiment, ExperimentConfig, Problem, CSV_HEADER};

fn main() {
    let mut cfg = ExperimentConfig::defaults(Problem::Screen);
    if let Some(l) = std::env::args().nth(1) {
        cfg.levels = l.parse().expect("levels");
    }
    println!("{CSV_HEADER}");
    for r in run_experiment(&cfg).expect("experiment") {
        println!("{}", r.csv_row());
    }
}
