//! Model parameters shared by the simulator and both semi-analytic solvers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which edges are eligible for selection at each event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Variant {
    /// Only discordant (CD) edges are picked; only C ends rewire.
    #[default]
    #[serde(rename = "cd")]
    CdOnly,
    /// CD and DD edges are picked; either end of a DD edge may rewire.
    #[serde(rename = "cd-dd")]
    CdAndDd,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::CdOnly => "cd",
            Variant::CdAndDd => "cd-dd",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cd" => Ok(Variant::CdOnly),
            "cd-dd" => Ok(Variant::CdAndDd),
            other => Err(Error::Parse(format!("unknown variant `{other}`"))),
        }
    }
}

/// All parameters of one model condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// Cost-benefit ratio (temptation to defect).
    pub u: f64,
    /// Probability that a selected edge triggers a strategy update rather than a rewire.
    pub w: f64,
    /// Selection intensity of the Fermi rule.
    pub alpha: f64,
    /// Initial fraction of defectors.
    pub rho: f64,
    pub variant: Variant,
    /// Number of players.
    pub n: usize,
    /// Number of pairings (edges).
    pub m: usize,
    /// Degree cutoff of the compartment system.
    pub k_max: usize,
}

impl Default for GameParams {
    fn default() -> Self {
        GameParams {
            u: 0.5,
            w: 0.1,
            alpha: 30.0,
            rho: 0.5,
            variant: Variant::CdOnly,
            n: 1000,
            m: 5000,
            k_max: 50,
        }
    }
}

fn unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

/// Largest number of edges a simple graph on `n` nodes can hold.
pub fn max_edges(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl GameParams {
    pub fn validate(&self) -> Result<()> {
        unit("u", self.u)?;
        unit("w", self.w)?;
        unit("rho", self.rho)?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParam {
                name: "alpha",
                value: self.alpha,
                reason: "must be finite and non-negative",
            });
        }
        if self.n == 0 {
            return Err(Error::InvalidParam {
                name: "n",
                value: 0.0,
                reason: "need at least one node",
            });
        }
        let max = max_edges(self.n);
        if self.m > max {
            return Err(Error::TooManyEdges {
                n: self.n,
                m: self.m,
                max,
            });
        }
        if self.k_max < self.min_k_max() {
            return Err(Error::InvalidParam {
                name: "k_max",
                value: self.k_max as f64,
                reason: "must be at least the mean degree 2m/n (rounded up)",
            });
        }
        Ok(())
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.m as f64 / self.n as f64
    }

    fn min_k_max(&self) -> usize {
        (2 * self.m).div_ceil(self.n)
    }

    /// Exact number of initial defectors, `round(rho * n)`.
    pub fn initial_defectors(&self) -> usize {
        (self.rho * self.n as f64).round() as usize
    }
}
