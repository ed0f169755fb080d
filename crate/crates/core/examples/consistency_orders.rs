//! Observed order of the Laplacian estimate as the stencil shrinks with
//! `c h^2` fixed.

use meshless_ops::experiments::random_neighborhood;
use meshless_ops::functions::TestFunction;
use meshless_ops::spectral::{dyadic_h, run_consistency_study, ConsistencyConfig};

fn main() -> meshless_ops::Result<()> {
    let nb = random_neighborhood(1, 20, 2)?;
    let h = dyadic_h(2, 6);
    for (u, ch2) in [(TestFunction::U2, 1.0), (TestFunction::U1, 0.1)] {
        let exact = u.laplacian(&[0.0, 0.0], 2);
        for degree in [2, 3, 4] {
            let config = ConsistencyConfig {
                degree,
                ch2,
                ..Default::default()
            };
            let study = run_consistency_study(&|x: &[f64]| u.value(x), exact, &nb, &config, &h)?;
            let errs: Vec<String> = study.errors.iter().map(|e| format!("{e:.2e}")).collect();
            println!("{u} k={degree}: slope {:.2}  [{}]", study.fitted_slope, errs.join(" "));
        }
    }
    Ok(())
}
