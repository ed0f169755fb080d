//! Laplacian weights for one random neighborhood with all three methods.
//!
//! Run with `cargo run --example stencil_weights`.

use meshless_ops::experiments::random_neighborhood;
use meshless_ops::functions::TestFunction;
use meshless_ops::stencil::{stencil_weights, StencilConfig, StencilMethod};

fn main() -> meshless_ops::Result<()> {
    let nb = random_neighborhood(7, 20, 2)?;
    let u = TestFunction::U2;
    let exact = u.laplacian(&[0.0, 0.0], 2);
    println!("n = {}, mean radius = {:.4}", nb.len(), nb.mean_radius);
    for method in [StencilMethod::ClsGsp, StencilMethod::LsGsp, StencilMethod::RbfFd] {
        let config = StencilConfig {
            method,
            neighbors: nb.len(),
            ..Default::default()
        };
        let w = stencil_weights(&nb, &config)?;
        let est = w.apply_fn(&nb, |x| u.value(x));
        println!(
            "{method:>7}: rank {:>2}/{:<2} sigma_min {:.2e}  estimate {est:+.6} error {:.2e}",
            w.matrix_rank,
            w.full_rank_expected,
            w.sigma_min(),
            (est - exact).abs()
        );
    }
    let w = stencil_weights(&nb, &StencilConfig::default())?;
    println!("cls-gsp weights:");
    for (i, wi) in w.weights.iter().enumerate() {
        let x = nb.rel(i);
        println!("  ({:+.4}, {:+.4})  {wi:+.6e}", x[0], x[1]);
    }
    Ok(())
}
