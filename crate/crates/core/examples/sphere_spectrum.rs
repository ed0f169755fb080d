//! Laplace-Beltrami spectrum of a GBPM-sampled unit sphere.
//!
//! Pass a sampling resolution as the first argument (default 0.2).

use meshless_ops::spectral::{eig_full, sphere_eigen_errors, DEFAULT_EIG_BUDGET};
use meshless_ops::surface::{assemble_lb_dm, gbpm_sample, LbConfig, Surface};

fn main() -> meshless_ops::Result<()> {
    let dx: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.2);
    let cloud = gbpm_sample(&Surface::unit_sphere(), dx, 1.5)?;
    let dm = assemble_lb_dm(&cloud, &LbConfig::default())?;
    let report = eig_full(&dm, DEFAULT_EIG_BUDGET)?;
    println!(
        "dx = {dx}, N = {}, min Re = {:.3e}, max |lambda| = {:.2}, near-zero modes = {}, below 60: {}",
        cloud.len(),
        report.min_real,
        report.max_abs,
        report.near_zero_count(1e-6),
        report.count_below(60.0)
    );
    println!("{:>2} {:>6} {:>10} {:>10}", "m", "exact", "E2", "Einf");
    for row in sphere_eigen_errors(&report, 7)? {
        println!("{:>2} {:>6} {:>10.3e} {:>10.3e}", row.m, row.lambda_exact, row.e2, row.einf);
    }
    Ok(())
}
