//! Options and results shared by the pair-approximation and
//! master-equation solvers.

use serde::{Deserialize, Serialize};

use crate::ode::IntegratorConfig;
use crate::params::{GameParams, Variant};

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Step control; `atol` is overridden by `atol_per_node * N`.
    pub integrator: IntegratorConfig,
    pub atol_per_node: f64,
    pub t_end: f64,
    pub sample_times: Vec<f64>,
    /// Frozen once the eligible-edge fraction drops below this.
    pub edge_threshold: f64,
    /// Settled once the max-norm of the derivative falls below this times `M`.
    pub rate_threshold: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            integrator: IntegratorConfig {
                rtol: 1e-8,
                h_init: 1e-3,
                max_steps: 2_000_000,
                ..Default::default()
            },
            atol_per_node: 1e-10,
            t_end: 1e4,
            sample_times: Vec::new(),
            edge_threshold: 1e-6,
            rate_threshold: 1e-9,
        }
    }
}

impl SolveOptions {
    /// Steady-state test on normalised quantities. `rate` is the derivative
    /// max-norm divided by `M`.
    ///
    /// The base model freezes when `cd` vanishes. The variant also rewires DD
    /// edges, so it freezes only when both `cd` and `dd` vanish, or when
    /// cooperators are extinct.
    pub fn is_settled(&self, params: &GameParams, c: f64, cd: f64, dd: f64, rate: f64) -> bool {
        let frozen = match params.variant {
            Variant::CdOnly => cd < self.edge_threshold,
            Variant::CdAndDd => cd + dd < self.edge_threshold || c < self.edge_threshold,
        };
        frozen || rate < self.rate_threshold
    }
}

/// Node and edge-type fractions at ODE time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvePoint {
    pub t: f64,
    pub c: f64,
    pub cc: f64,
    pub cd: f64,
    pub dd: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub trajectory: Vec<SolvePoint>,
    pub final_point: SolvePoint,
    /// Whether a steady-state criterion fired before `t_end` or the step cap.
    pub settled: bool,
    pub steps: usize,
    /// Node mass that left the grid through the degree cutoff (AME only).
    pub lost_mass: f64,
}
