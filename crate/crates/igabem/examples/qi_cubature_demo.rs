//! Quasi-interpolation cubature in isolation: node-count convergence of the
//! 1D rule on a smooth integrand, then one weakly singular collocation entry
//! on the screen checked against a Duffy-transform oracle.

use igabem::assembly::{assemble, collocation_grid, AssemblyConfig, RhsSpec};
use igabem::kernel::laplace_kernel;
use igabem::nurbs::screen;
use igabem::qi::QiOperator;
use igabem::quadrature::duffy_singular_2d;
use igabem::spline::{KnotVector, TensorSplineSpace};

fn main() {
    // integral of exp(x) sin(3x) on [0, 2], degree-4 rule
    // antiderivative e^x (sin 3x - 3 cos 3x) / 10
    let exact = (2.0f64.exp() * (6.0f64.sin() - 3.0 * 6.0f64.cos()) + 3.0) / 10.0;
    println!("1D cubature, f = exp(x) sin(3x) on [0, 2]:");
    for n in [7usize, 13, 25, 49] {
        let q = QiOperator::uniform(0.0, 2.0, n, 4).unwrap();
        let w = q.integration_weights();
        let got: f64 = q
            .nodes()
            .iter()
            .zip(&w)
            .map(|(&x, &wi)| wi * x.exp() * (3.0 * x).sin())
            .sum();
        println!("  {n:3} nodes  error {:.3e}", (got - exact).abs());
    }

    // diagonal entry of the collocation matrix on a coarse screen mesh
    let srf = screen();
    let kv = KnotVector::uniform(-1.0, 1.0, 8, 2);
    let space = TensorSplineSpace::new(kv.clone(), kv.clone());
    let colloc = collocation_grid(&kv, &kv, true, 0.5).unwrap();
    let j = space.flat(4, 4);
    let cfg = AssemblyConfig {
        n_terms: 3,
        qi_nodes_singular: 13,
        ..AssemblyConfig::default()
    };
    let g = |_: [f64; 3]| 1.0;
    let asm = assemble(&srf, &space, &colloc[j..j + 1], &RhsSpec::Pointwise(&g), &cfg).unwrap();
    let x = srf.point(colloc[j]).unwrap();
    let oracle = duffy_singular_2d(
        &|t1, t2| {
            let (p, jac) = srf.point_and_area([t1, t2]).unwrap();
            space.basis_value(j, [t1, t2]) * laplace_kernel(x, p) * jac
        },
        space.support(j),
        colloc[j],
        64,
    );
    let got = asm.matrix[(0, j)];
    println!("singular entry: cubature {got:.12e}");
    println!("         Duffy oracle   {oracle:.12e}");
    println!("         rel deviation  {:.3e}", ((got - oracle) / oracle).abs());
}
