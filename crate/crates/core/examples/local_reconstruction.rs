//! One-dimensional reconstructions from ten random samples: CLS-GSP with
//! Gaussian and multiquadric kernels against quadratic least squares.

use meshless_ops::experiments::{reconstruct_local, DEFAULT_RECONSTRUCT_CR2, DEFAULT_RECONSTRUCT_GHOSTS};
use meshless_ops::functions::TestFunction;
use meshless_ops::kernels::KernelFamily;
use meshless_ops::stencil::StencilConfig;

fn main() -> meshless_ops::Result<()> {
    let stencil = StencilConfig {
        ghosts: DEFAULT_RECONSTRUCT_GHOSTS,
        cr2: DEFAULT_RECONSTRUCT_CR2,
        ..Default::default()
    };
    for function in [TestFunction::Cos4x, TestFunction::Kink] {
        let rec = reconstruct_local(function, &[KernelFamily::Ga, KernelFamily::Mq], 10, 21, &stencil, 1)?;
        println!("{function}");
        println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "x", "exact", "cls-ga", "cls-mq", "poly-ls");
        for i in 0..rec.x.len() {
            println!(
                "{:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                rec.x[i], rec.exact[i], rec.cls[0].1[i], rec.cls[1].1[i], rec.poly_ls[i]
            );
        }
        let (near, ls) = rec.near_center_errors(0.25);
        println!("max error on |x| <= 0.25: ga {:.2e}, mq {:.2e}, poly {ls:.2e}\n", near[0].1, near[1].1);
    }
    Ok(())
}
