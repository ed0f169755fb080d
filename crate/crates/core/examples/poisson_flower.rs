//! Poisson problem on the five-petal flower domain, uniform and random
//! sampling, with normal-extended boundary values.

use meshless_ops::assembly::{
    assemble_dm, generate_domain_cloud, normal_extension_values, solve_poisson, PoissonProblem, Sampling,
    SolverConfig, StarDomain,
};
use meshless_ops::functions::TestFunction;
use meshless_ops::ghosts::GhostStrategy;
use meshless_ops::stencil::StencilConfig;

fn main() -> meshless_ops::Result<()> {
    let domain = StarDomain::flower();
    let u = TestFunction::PoissonExact;
    let config = StencilConfig {
        ghosts: GhostStrategy::Disc(49),
        neighbors: 60,
        ..Default::default()
    };
    for (sampling, n) in [(Sampling::Uniform, 2677), (Sampling::Random, 2782)] {
        let (interior, boundary) = generate_domain_cloud(&domain, n, sampling, 0.5, 1)?;
        let dm = assemble_dm(&interior, &boundary, &config)?;
        let f: Vec<f64> = interior.points().map(|x| u.laplacian(x, 2)).collect();
        for extend in [false, true] {
            let g = if extend {
                normal_extension_values(&boundary, &domain, |x| u.value(x))?
            } else {
                boundary.points().map(|x| u.value(x)).collect()
            };
            let problem = PoissonProblem::new(interior.clone(), boundary.clone(), f.clone(), g)?;
            let sol = solve_poisson(&dm, &problem, &SolverConfig::default())?;
            let linf = interior
                .points()
                .zip(&sol.u)
                .map(|(x, v)| (v - u.value(x)).abs())
                .fold(0.0, f64::max);
            println!(
                "{sampling:>7} N={} N_b={} normal extension={extend:<5} L_inf={linf:.3e}",
                interior.len(),
                boundary.len()
            );
        }
    }
    Ok(())
}
