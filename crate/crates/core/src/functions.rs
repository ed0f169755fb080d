//! Analytic test functions with closed-form Laplacians.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    /// `exp(-x^2 - y^2)`
    U1,
    /// `3 cos x - 4 sin y`
    U2,
    /// `x^2 + y^2` (or `|x|^2` in any dimension)
    Quadratic,
    /// `exp(-x/4) cos(y/5)`
    ShapeSweep,
    /// `1 + sin 4x + cos 3x + sin 2y`
    PoissonExact,
    /// `cos 4x`, one-dimensional
    Cos4x,
    /// `1 - sgn(x) x`, one-dimensional
    Kink,
    /// constant one
    One,
}

impl TestFunction {
    pub fn value(self, x: &[f64]) -> f64 {
        let c = |i: usize| x.get(i).copied().unwrap_or(0.0);
        match self {
            TestFunction::U1 => (-c(0) * c(0) - c(1) * c(1)).exp(),
            TestFunction::U2 => 3.0 * c(0).cos() - 4.0 * c(1).sin(),
            TestFunction::Quadratic => x.iter().map(|v| v * v).sum(),
            TestFunction::ShapeSweep => (-0.25 * c(0)).exp() * (0.2 * c(1)).cos(),
            TestFunction::PoissonExact => {
                1.0 + (4.0 * c(0)).sin() + (3.0 * c(0)).cos() + (2.0 * c(1)).sin()
            }
            TestFunction::Cos4x => (4.0 * c(0)).cos(),
            TestFunction::Kink => 1.0 - c(0).signum() * c(0),
            TestFunction::One => 1.0,
        }
    }

    /// Laplacian in `dim` dimensions. `Kink` returns 0 away from the origin.
    pub fn laplacian(self, x: &[f64], dim: usize) -> f64 {
        let c = |i: usize| x.get(i).copied().unwrap_or(0.0);
        match self {
            TestFunction::U1 => {
                let r2 = c(0) * c(0) + c(1) * c(1);
                (4.0 * r2 - 4.0) * (-r2).exp()
            }
            TestFunction::U2 => -3.0 * c(0).cos() + 4.0 * c(1).sin(),
            TestFunction::Quadratic => 2.0 * dim as f64,
            TestFunction::ShapeSweep => (0.0625 - 0.04) * self.value(x),
            TestFunction::PoissonExact => {
                -16.0 * (4.0 * c(0)).sin() - 9.0 * (3.0 * c(0)).cos() - 4.0 * (2.0 * c(1)).sin()
            }
            TestFunction::Cos4x => -16.0 * (4.0 * c(0)).cos(),
            TestFunction::Kink | TestFunction::One => 0.0,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestFunction::U1 => "u1",
            TestFunction::U2 => "u2",
            TestFunction::Quadratic => "quadratic",
            TestFunction::ShapeSweep => "shape-sweep",
            TestFunction::PoissonExact => "poisson-exact",
            TestFunction::Cos4x => "cos4x",
            TestFunction::Kink => "kink",
            TestFunction::One => "one",
        })
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "u1" => TestFunction::U1,
            "u2" => TestFunction::U2,
            "quadratic" => TestFunction::Quadratic,
            "shape-sweep" => TestFunction::ShapeSweep,
            "poisson-exact" => TestFunction::PoissonExact,
            "cos4x" => TestFunction::Cos4x,
            "kink" => TestFunction::Kink,
            "one" => TestFunction::One,
            other => return Err(Error::InvalidParameter(format!("unknown function `{other}`"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_laplacian(f: TestFunction, x: &[f64]) -> f64 {
        let h = 1e-4;
        let mut acc = 0.0;
        for i in 0..x.len() {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            acc += (f.value(&p) - 2.0 * f.value(x) + f.value(&m)) / (h * h);
        }
        acc
    }

    #[test]
    fn laplacians_match_finite_differences() {
        let pts = [[0.0, 0.0], [0.3, -0.7], [1.1, 0.4]];
        for f in [
            TestFunction::U1,
            TestFunction::U2,
            TestFunction::Quadratic,
            TestFunction::ShapeSweep,
            TestFunction::PoissonExact,
        ] {
            for p in &pts {
                let fd = fd_laplacian(f, p);
                assert!((fd - f.laplacian(p, 2)).abs() < 1e-5 * fd.abs().max(1.0), "{f} at {p:?}");
            }
        }
        assert!((fd_laplacian(TestFunction::Cos4x, &[0.2]) - TestFunction::Cos4x.laplacian(&[0.2], 1)).abs() < 1e-4);
    }

    #[test]
    fn known_center_values() {
        assert_eq!(TestFunction::U1.laplacian(&[0.0, 0.0], 2), -4.0);
        assert_eq!(TestFunction::U2.laplacian(&[0.0, 0.0], 2), -3.0);
        assert!((TestFunction::ShapeSweep.laplacian(&[0.0, 0.0], 2) - 0.0225).abs() < 1e-15);
        assert_eq!(TestFunction::Kink.value(&[0.0]), 1.0);
        assert_eq!(TestFunction::Kink.value(&[-0.5]), 0.5);
    }

    #[test]
    fn names_round_trip() {
        for f in [TestFunction::U1, TestFunction::Kink, TestFunction::PoissonExact] {
            assert_eq!(f.to_string().parse::<TestFunction>().unwrap(), f);
        }
    }
}
