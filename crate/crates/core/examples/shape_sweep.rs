//! Error and numerical rank across `c rbar^2 = 10^-8 .. 10^5` for the
//! inverse quadratic kernel.

use meshless_ops::experiments::random_neighborhood;
use meshless_ops::functions::TestFunction;
use meshless_ops::kernels::KernelFamily;
use meshless_ops::spectral::{decade_cr2, run_shape_sweep};
use meshless_ops::stencil::{StencilConfig, StencilMethod};

fn main() -> meshless_ops::Result<()> {
    let nb = random_neighborhood(2, 20, 2)?;
    let u = TestFunction::ShapeSweep;
    let rows = run_shape_sweep(
        &nb,
        &|x: &[f64]| u.value(x),
        u.laplacian(&[0.0, 0.0], 2),
        &[StencilMethod::RbfFd, StencilMethod::ClsGsp],
        &[KernelFamily::Iq],
        &decade_cr2(-8, 5),
        &StencilConfig::default(),
    )?;
    println!("{:>8}  {:>11} {:>4}  {:>11} {:>4}", "cr2", "rbf-fd", "rank", "cls-gsp", "rank");
    let half = rows.len() / 2;
    for (a, b) in rows[..half].iter().zip(&rows[half..]) {
        println!(
            "{:>8.0e}  {:>11.4e} {:>4}  {:>11.4e} {:>4}",
            a.cr2, a.error, a.abs_rank, b.error, b.abs_rank
        );
    }
    Ok(())
}
