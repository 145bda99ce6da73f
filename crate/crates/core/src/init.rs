//! Initial configurations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Population;

/// Shape of an initial fitness configuration. `height` is the width `W_0`
/// of the resulting population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialProfile {
    /// Everybody at fitness 0.
    AllZero,
    /// `n - m` individuals at 0 and `m` at `height`.
    TwoPoint { height: i64, top: usize },
    /// `ceil(n/2)` at 0 and `floor(n/2)` at `height`.
    TwoPointBalanced { height: i64 },
    /// `n - 1` at 0 and one individual at `height`.
    TwoPointExtreme { height: i64 },
    /// Individuals spread evenly over `0..=height` (class `k` receives the
    /// individuals `i` with `i * (height + 1) / n == k`).
    Ladder { height: i64 },
}

impl InitialProfile {
    pub fn build(&self, n: usize) -> Result<Population> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("population size {n} < 2")));
        }
        let fitness = match *self {
            InitialProfile::AllZero => vec![0; n],
            InitialProfile::TwoPoint { height, top } => {
                check_height(height)?;
                if top == 0 || top >= n {
                    return Err(Error::InvalidParams(format!(
                        "two-point profile needs 0 < top < n (got top={top}, n={n})"
                    )));
                }
                let mut f = vec![0; n - top];
                f.extend(std::iter::repeat_n(height, top));
                f
            }
            InitialProfile::TwoPointBalanced { height } => {
                return InitialProfile::TwoPoint { height, top: n / 2 }.build(n);
            }
            InitialProfile::TwoPointExtreme { height } => {
                return InitialProfile::TwoPoint { height, top: 1 }.build(n);
            }
            InitialProfile::Ladder { height } => {
                check_height(height)?;
                if (height as u128 + 1) > n as u128 {
                    return Err(Error::InvalidParams(format!(
                        "ladder of height {height} needs at least {} individuals",
                        height + 1
                    )));
                }
                (0..n)
                    .map(|i| (i as i128 * (height as i128 + 1) / n as i128) as i64)
                    .collect()
            }
        };
        Population::new(fitness)
    }

    /// Width of the configuration this profile builds.
    pub fn height(&self) -> i64 {
        match *self {
            InitialProfile::AllZero => 0,
            InitialProfile::TwoPoint { height, .. }
            | InitialProfile::TwoPointBalanced { height }
            | InitialProfile::TwoPointExtreme { height }
            | InitialProfile::Ladder { height } => height,
        }
    }
}

fn check_height(height: i64) -> Result<()> {
    if height < 0 {
        Err(Error::InvalidParams(format!("profile height {height} < 0")))
    } else {
        Ok(())
    }
}
