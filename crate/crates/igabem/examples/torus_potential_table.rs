//! Exterior potential problem on the torus: solves for the unknown density
//! from a point-source Dirichlet datum and evaluates the potential error on
//! a far sphere. Four levels reproduce the published table of degrees of
//! freedom (99, 221, 609, 1961); the default stops at two to stay quick.

use igabem::experiment::{run_experiment, ExperimentConfig, Problem, CSV_HEADER};

fn main() {
    let mut cfg = ExperimentConfig::defaults(Problem::TorusPotential);
    cfg.levels = std::env::args()
        .nth(1)
        .map(|l| l.parse().expect("levels"))
        .unwrap_or(2);
    println!("{CSV_HEADER}");
    for r in run_experiment(&cfg).expect("experiment") {
        println!("{}", r.csv_row());
    }
}
