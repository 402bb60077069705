//! Pair approximation: three coupled ODEs for the expected cooperator count
//! and the CC and DD edge counts, with triples closed as
//! `N_XXY = 2 N_XX N_XY / N_X`.
//!
//! Only `(N_C, N_CC, N_DD)` are integrated; `N_D = N - N_C` and
//! `N_CD = M - N_CC - N_DD` are derived, so node and edge totals are
//! conserved structurally.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ode::{integrate, IntegratorConfig, OdeTermination};
use crate::params::{GameParams, Variant};
use crate::sim::stable_fermi;
use crate::solve::{SolveOptions, SolvePoint, SolveResult};

/// Populations below this fraction of `N` are treated as extinct.
pub const EXTINCT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaState {
    pub n_c: f64,
    pub n_cc: f64,
    pub n_dd: f64,
}

impl PaState {
    /// Independent strategies on a random graph: `N_C = (1-rho) N`,
    /// `N_CC = (1-rho)^2 M`, `N_DD = rho^2 M`.
    pub fn initial(params: &GameParams) -> Self {
        let (n, m, rho) = (params.n as f64, params.m as f64, params.rho);
        PaState {
            n_c: (1.0 - rho) * n,
            n_cc: (1.0 - rho) * (1.0 - rho) * m,
            n_dd: rho * rho * m,
        }
    }

    pub fn n_d(&self, n: f64) -> f64 {
        n - self.n_c
    }

    pub fn n_cd(&self, m: f64) -> f64 {
        m - self.n_cc - self.n_dd
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.n_c, self.n_cc, self.n_dd]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        PaState {
            n_c: y[0],
            n_cc: y[1],
            n_dd: y[2],
        }
    }
}

/// `x / den`, or 0 when the population `den` is extinct.
fn guarded(x: f64, den: f64, n: f64) -> f64 {
    if den < EXTINCT * n {
        0.0
    } else {
        x / den
    }
}

/// Average utilities `(pi_C, pi_D)` of cooperators and defectors.
pub fn pa_utilities(state: &PaState, params: &GameParams) -> (f64, f64) {
    let (n, m, u) = (params.n as f64, params.m as f64, params.u);
    let n_d = state.n_d(n);
    let n_cd = state.n_cd(m);
    let pi_c = guarded(2.0 * state.n_cc, state.n_c, n);
    let pi_d = guarded((1.0 + u) * n_cd + u * 2.0 * state.n_dd, n_d, n);
    (pi_c, pi_d)
}

/// Fermi factors `(phi_{C->D}, phi_{D->C})` as functions of the utility gap.
///
/// `phi_{C->D} = 1 / (1 + exp[alpha (pi_D - pi_C)])` is the probability that
/// the C strategy spreads across a CD edge; the pair sums to one.
pub fn pa_fermi(pi_c: f64, pi_d: f64, alpha: f64) -> (f64, f64) {
    (
        stable_fermi(pi_d - pi_c, alpha),
        stable_fermi(pi_c - pi_d, alpha),
    )
}

/// Time derivative of `(N_C, N_CC, N_DD)`.
pub fn pa_rhs(state: &PaState, params: &GameParams) -> PaState {
    let (n, m) = (params.n as f64, params.m as f64);
    let (w, alpha) = (params.w, params.alpha);
    let n_d = state.n_d(n);
    let n_cd = state.n_cd(m);
    let (pi_c, pi_d) = pa_utilities(state, params);
    let (phi_cd, phi_dc) = pa_fermi(pi_c, pi_d, alpha);
    let rewire = 1.0 - w;
    let c_frac = state.n_c / n;

    let d_nc = w * n_cd * (0.5 * alpha * (pi_c - pi_d)).tanh();
    let d_ncc = w
        * (n_cd * phi_cd - 2.0 * n_cd * guarded(state.n_cc, state.n_c, n) * phi_dc
            + n_cd * guarded(n_cd, n_d, n) * phi_cd)
        + rewire * c_frac * n_cd;
    let mut d_ndd = w
        * (n_cd * phi_dc - 2.0 * n_cd * guarded(state.n_dd, n_d, n) * phi_cd
            + n_cd * guarded(n_cd, state.n_c, n) * phi_dc);
    if params.variant == Variant::CdAndDd {
        d_ndd -= rewire * c_frac * state.n_dd;
    }
    PaState {
        n_c: d_nc,
        n_cc: d_ncc,
        n_dd: d_ndd,
    }
}

/// Integrates the pair approximation from the independent initial state
/// until the dynamics freeze or settle.
pub fn solve_pa(params: &GameParams, opts: &SolveOptions) -> Result<SolveResult> {
    params.validate()?;
    let (n, m) = (params.n as f64, params.m as f64);
    let config = IntegratorConfig {
        atol: opts.atol_per_node * n,
        sample_times: opts.sample_times.clone(),
        ..opts.integrator.clone()
    };
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let d = pa_rhs(&PaState::from_slice(y), params);
        dy.copy_from_slice(&d.to_array());
    };
    let stop = |_t: f64, y: &[f64], dy: &[f64]| {
        let s = PaState::from_slice(y);
        let rate = dy.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        opts.is_settled(params, s.n_c / n, s.n_cd(m) / m, s.n_dd / m, rate / m)
    };
    let y0 = PaState::initial(params).to_array();
    let sol = integrate(rhs, &y0, (0.0, opts.t_end), &config, stop)?;
    let point = |t: f64, y: &[f64]| {
        let s = PaState::from_slice(y);
        SolvePoint {
            t,
            c: s.n_c / n,
            cc: s.n_cc / m,
            cd: s.n_cd(m) / m,
            dd: s.n_dd / m,
        }
    };
    Ok(SolveResult {
        trajectory: sol.samples.iter().map(|(t, y)| point(*t, y)).collect(),
        final_point: point(sol.t, &sol.y),
        settled: sol.termination == OdeTermination::Stopped,
        steps: sol.accepted,
        lost_mass: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> GameParams {
        GameParams {
            u: 0.5,
            w: 0.1,
            alpha: 30.0,
            ..Default::default()
        }
    }

    #[test]
    fn utilities_hand_values() {
        let s = PaState {
            n_c: 500.0,
            n_cc: 1250.0,
            n_dd: 1250.0,
        };
        let (pc, pd) = pa_utilities(&s, &base());
        assert_eq!(pc, 5.0);
        assert_eq!(pd, 10.0);

        let s = PaState {
            n_c: 500.0,
            n_cc: 0.0,
            n_dd: 5000.0,
        };
        assert_eq!(pa_utilities(&s, &base()).0, 0.0);

        // N_DD = 0, N_CD = x N_D
        let s = PaState {
            n_c: 600.0,
            n_cc: 5000.0 - 1200.0,
            n_dd: 0.0,
        };
        let (_, pd) = pa_utilities(&s, &base());
        assert!((pd - 1.5 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn extinct_populations_are_guarded() {
        let s = PaState {
            n_c: 0.0,
            n_cc: 0.0,
            n_dd: 5000.0,
        };
        let (pc, pd) = pa_utilities(&s, &base());
        assert_eq!(pc, 0.0);
        assert_eq!(pd, 10.0 * 0.5);
        let d = pa_rhs(&s, &base());
        assert!(d.to_array().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn absorbing_without_discordant_edges() {
        let s = PaState {
            n_c: 400.0,
            n_cc: 3000.0,
            n_dd: 2000.0,
        };
        let d = pa_rhs(&s, &base());
        assert_eq!(d.to_array(), [0.0, 0.0, 0.0]);
        // variant keeps rewiring DD edges
        let v = GameParams {
            variant: Variant::CdAndDd,
            ..base()
        };
        let d = pa_rhs(&s, &v);
        assert_eq!(d.n_dd, -(0.9) * 0.4 * 2000.0);
    }

    #[test]
    fn rewiring_only_terms() {
        let p = GameParams { w: 0.0, ..base() };
        let s = PaState {
            n_c: 500.0,
            n_cc: 1250.0,
            n_dd: 1250.0,
        };
        let d = pa_rhs(&s, &p);
        assert_eq!(d.n_c, 0.0);
        assert_eq!(d.n_cc, 0.5 * 2500.0);
        assert_eq!(d.n_dd, 0.0);
    }

    #[test]
    fn drift_hand_value() {
        let s = PaState {
            n_c: 500.0,
            n_cc: 1250.0,
            n_dd: 1250.0,
        };
        let d = pa_rhs(&s, &base());
        let expected = 0.1 * 2500.0 * (15.0f64 * (5.0 - 10.0)).tanh();
        assert_eq!(d.n_c, expected);
        assert!((d.n_c + 250.0).abs() < 1e-9);
    }

    #[test]
    fn tanh_matches_fermi_pair() {
        for (pc, pd, a) in [
            (5.0, 10.0, 30.0),
            (3.2, 3.1, 30.0),
            (1.0, 0.0, 0.7),
            (0.0, 0.0, 5.0),
        ] {
            let (phi_cd, phi_dc) = pa_fermi(pc, pd, a);
            assert_eq!(phi_cd + phi_dc, 1.0);
            let lhs = (0.5 * a * (pc - pd)).tanh();
            assert!((lhs - (phi_cd - phi_dc)).abs() < 1e-12);
        }
    }

    #[test]
    fn variant_differs_only_in_dd() {
        let s = PaState {
            n_c: 450.0,
            n_cc: 1000.0,
            n_dd: 1500.0,
        };
        let a = pa_rhs(&s, &base());
        let b = pa_rhs(
            &s,
            &GameParams {
                variant: Variant::CdAndDd,
                ..base()
            },
        );
        assert_eq!(a.n_c, b.n_c);
        assert_eq!(a.n_cc, b.n_cc);
        assert_eq!(a.n_dd - b.n_dd, 0.9 * 0.45 * 1500.0);
    }
}
