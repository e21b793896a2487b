//! Torus problem with a known density: refinement study for both the
//! maximum-multiplicity trial space and the C0 variant (which collocates on
//! the larger grid and solves in the least-squares sense).

use igabem::experiment::{run_experiment, Continuity, ExperimentConfig, Problem, CSV_HEADER};

fn main() {
    let levels = std::env::args()
        .nth(1)
        .map(|l| l.parse().expect("levels"))
        .unwrap_or(2);
    for continuity in [Continuity::MaxMult, Continuity::C0] {
        let cfg = ExperimentConfig {
            levels,
            continuity,
            ..ExperimentConfig::defaults(Problem::TorusDensity)
        };
        println!("# {continuity:?}");
        println!("{CSV_HEADER}");
        for r in run_experiment(&cfg).expect("experiment") {
            println!("{}", r.csv_row());
        }
    }
}
