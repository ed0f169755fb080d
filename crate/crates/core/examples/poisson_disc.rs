//! Poisson problem on the disc of radius 2 with random sampling and a
//! band of boundary nodes.

use std::time::Instant;

use meshless_ops::assembly::{
    assemble_dm, generate_domain_cloud, solve_poisson, PoissonProblem, Sampling, SolverConfig, StarDomain,
};
use meshless_ops::functions::TestFunction;
use meshless_ops::ghosts::GhostStrategy;
use meshless_ops::stencil::StencilConfig;

fn main() -> meshless_ops::Result<()> {
    let t = Instant::now();
    let domain = StarDomain::disc(2.0);
    let (interior, boundary) = generate_domain_cloud(&domain, 3159, Sampling::Random, 0.5, 1)?;
    let config = StencilConfig {
        ghosts: GhostStrategy::Disc(49),
        neighbors: 60,
        ..Default::default()
    };
    let dm = assemble_dm(&interior, &boundary, &config)?;
    let u = TestFunction::PoissonExact;
    let problem = PoissonProblem::from_functions(interior.clone(), boundary.clone(), |x| u.laplacian(x, 2), |x| u.value(x));
    let sol = solve_poisson(&dm, &problem, &SolverConfig::default())?;
    let linf = interior
        .points()
        .zip(&sol.u)
        .map(|(x, v)| (v - u.value(x)).abs())
        .fold(0.0, f64::max);
    println!(
        "N = {}, N_b = {}, nnz = {}, L_inf = {linf:.3e}, residual = {:.1e}, {:.1} s",
        interior.len(),
        boundary.len(),
        dm.nnz(),
        sol.residual,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
