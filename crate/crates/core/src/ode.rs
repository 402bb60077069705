//! Explicit adaptive Runge–Kutta integration with the Dormand–Prince 5(4)
//! pair, dense output and stop-predicate detection.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size {h:e} fell below h_min at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid integrator configuration: {0}")]
    Config(&'static str),
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Output times; any that fall inside the integrated range are filled by
    /// dense interpolation.
    pub sample_times: Vec<f64>,
    /// When false every step is taken with `h_init` and accepted regardless of
    /// the error estimate.
    pub adaptive: bool,
    /// Keep every accepted step in [`OdeSolution::steps`].
    pub record_steps: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            sample_times: Vec::new(),
            adaptive: true,
            record_steps: false,
        }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(IntegrateError::Config("rtol and atol must be positive"));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(IntegrateError::Config("need 0 < h_min <= h_init <= h_max"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdeTermination {
    /// Reached the end of the time span.
    EndTime,
    /// The stop predicate became true.
    Stopped,
    MaxSteps,
}

#[derive(Clone, Debug)]
pub struct OdeSolution {
    /// `(t, y)` at the requested sample times, followed by the terminal point.
    pub samples: Vec<(f64, Vec<f64>)>,
    /// Accepted steps, when requested.
    pub steps: Vec<(f64, Vec<f64>)>,
    pub termination: OdeTermination,
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th minus 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Interpolant over one accepted step.
struct Dense {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Dense {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrates `y' = rhs(t, y)` over `t_span`.
///
/// `stop(t, y, y')` is checked after every accepted step; when it first turns
/// true the crossing is located by bisection on the dense output to within
/// `h_min` and integration ends there.
pub fn integrate<F, S>(
    mut rhs: F,
    y0: &[f64],
    t_span: (f64, f64),
    config: &IntegratorConfig,
    mut stop: S,
) -> Result<OdeSolution, IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64], &[f64]) -> bool,
{
    config.validate()?;
    let dim = y0.len();
    let (t0, t_end) = t_span;
    let mut sol = OdeSolution {
        samples: Vec::new(),
        steps: Vec::new(),
        termination: OdeTermination::EndTime,
        t: t0,
        y: y0.to_vec(),
        accepted: 0,
        rejected: 0,
        rhs_evals: 0,
    };
    let mut sample_times: Vec<f64> = config
        .sample_times
        .iter()
        .copied()
        .filter(|&s| s >= t0 && s <= t_end)
        .collect();
    sample_times.sort_by(f64::total_cmp);
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] == t0 {
        sol.samples.push((t0, y0.to_vec()));
        next_sample += 1;
    }
    if config.record_steps {
        sol.steps.push((t0, y0.to_vec()));
    }
    let zeros = || vec![0.0; dim];
    let mut st = Stages {
        k: [
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
        ],
        tmp: zeros(),
        y_new: zeros(),
    };
    let mut err = zeros();
    let mut y = y0.to_vec();
    let mut t = t0;
    rhs(t, &y, &mut st.k[0]);
    sol.rhs_evals += 1;
    if !finite(&st.k[0]) {
        return Err(IntegrateError::NonFinite { t });
    }
    if stop(t0, y0, &st.k[0]) {
        sol.termination = OdeTermination::Stopped;
        sol.samples.push((t0, y0.to_vec()));
        return Ok(sol);
    }
    let mut h = config.h_init.min(config.h_max);
    let mut last_rejected = false;

    while t < t_end {
        if sol.accepted + sol.rejected >= config.max_steps {
            sol.termination = OdeTermination::MaxSteps;
            break;
        }
        let mut final_step = false;
        if t + h >= t_end {
            h = t_end - t;
            final_step = true;
        }
        stages(&mut rhs, t, h, &y, &mut st);
        sol.rhs_evals += 6;
        if !finite(&st.y_new) || !finite(&st.k[6]) {
            return Err(IntegrateError::NonFinite { t });
        }

        let err_norm = if config.adaptive {
            let k = &st.k;
            for i in 0..dim {
                err[i] = h
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
            }
            let mut worst = 0.0f64;
            for i in 0..dim {
                let scale = config.atol + config.rtol * y[i].abs().max(st.y_new[i].abs());
                worst = worst.max(err[i].abs() / scale);
            }
            worst
        } else {
            0.0
        };

        if err_norm > 1.0 {
            sol.rejected += 1;
            let fac = (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, 1.0);
            h *= fac;
            last_rejected = true;
            if h < config.h_min {
                return Err(IntegrateError::StepUnderflow { t, h });
            }
            continue;
        }

        // Accepted.
        let t_new = if final_step { t_end } else { t + h };
        let dense = dense_output(h, t, &y, &st);
        sol.accepted += 1;

        while next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
            let ts = sample_times[next_sample];
            let mut ys = zeros();
            dense.eval(ts, &mut ys);
            sol.samples.push((ts, ys));
            next_sample += 1;
        }

        if stop(t_new, &st.y_new, &st.k[6]) {
            let (ts, ys) = bisect_stop(&dense, t, t_new, config.h_min, &mut rhs, &mut stop);
            sol.rhs_evals += 1;
            // drop samples past the stop point
            while sol.samples.last().is_some_and(|(s, _)| *s > ts) {
                sol.samples.pop();
            }
            if config.record_steps {
                sol.steps.push((ts, ys.clone()));
            }
            sol.samples.push((ts, ys.clone()));
            sol.t = ts;
            sol.y = ys;
            sol.termination = OdeTermination::Stopped;
            return Ok(sol);
        }

        t = t_new;
        std::mem::swap(&mut y, &mut st.y_new);
        st.k.swap(0, 6);
        if config.record_steps {
            sol.steps.push((t, y.clone()));
        }

        if config.adaptive {
            let mut fac = SAFETY * err_norm.max(1e-10).powf(-0.2);
            fac = fac.clamp(FAC_MIN, if last_rejected { 1.0 } else { FAC_MAX });
            h = (h * fac).min(config.h_max);
        }
        last_rejected = false;
    }

    sol.t = t;
    sol.y = y.clone();
    if sol.samples.last().map(|(s, _)| *s) != Some(t) {
        sol.samples.push((t, y));
    }
    Ok(sol)
}

fn stages<F>(rhs: &mut F, t: f64, h: f64, y: &[f64], st: &mut Stages)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let Stages { k, tmp, y_new } = st;
    let [k1, k2, k3, k4, k5, k6, k7] = k;
    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    rhs(t + C2 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    rhs(t + C3 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    rhs(t + C4 * h, tmp, k4);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    rhs(t + C5 * h, tmp, k5);
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    rhs(t + h, tmp, k6);
    for i in 0..n {
        y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    rhs(t + h, y_new, k7);
}

fn dense_output(h: f64, t: f64, y: &[f64], st: &Stages) -> Dense {
    let n = y.len();
    let k = &st.k;
    let mut r = [
        y.to_vec(),
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    ];
    for i in 0..n {
        let ydiff = st.y_new[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        r[1][i] = ydiff;
        r[2][i] = bspl;
        r[3][i] = ydiff - h * k[6][i] - bspl;
        r[4][i] = h
            * (D1 * k[0][i]
                + D3 * k[2][i]
                + D4 * k[3][i]
                + D5 * k[4][i]
                + D6 * k[5][i]
                + D7 * k[6][i]);
    }
    Dense { t0: t, h, r }
}

/// Narrows `[lo, hi]` (predicate false at `lo`, true at `hi`) to width
/// `tol` and returns the state at the upper end.
fn bisect_stop<F, S>(
    dense: &Dense,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    rhs: &mut F,
    stop: &mut S,
) -> (f64, Vec<f64>)
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64], &[f64]) -> bool,
{
    let dim = dense.r[0].len();
    let mut y_hi = vec![0.0; dim];
    dense.eval(hi, &mut y_hi);
    let mut ym = vec![0.0; dim];
    let mut dm = vec![0.0; dim];
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        dense.eval(mid, &mut ym);
        rhs(mid, &ym, &mut dm);
        if stop(mid, &ym, &dm) {
            hi = mid;
            y_hi.copy_from_slice(&ym);
        } else {
            lo = mid;
        }
    }
    (hi, y_hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -y[0];
    }

    fn never(_: f64, _: &[f64], _: &[f64]) -> bool {
        false
    }

    #[test]
    fn exponential_decay() {
        let cfg = IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-10,
            ..Default::default()
        };
        let sol = integrate(decay, &[1.0], (0.0, 1.0), &cfg, never).unwrap();
        assert_eq!(sol.termination, OdeTermination::EndTime);
        assert_eq!(sol.t, 1.0);
        assert!((sol.y[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let cfg = IntegratorConfig {
            rtol: 1e-9,
            atol: 1e-12,
            ..Default::default()
        };
        let period = 2.0 * std::f64::consts::PI;
        let sol = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[1.0, 0.0],
            (0.0, 10.0 * period),
            &cfg,
            never,
        )
        .unwrap();
        let energy = 0.5 * (sol.y[0] * sol.y[0] + sol.y[1] * sol.y[1]);
        assert!((energy - 0.5).abs() < 1e-6, "energy {energy}");
    }

    #[test]
    fn fixed_step_order_at_least_four() {
        let err_at = |h: f64| {
            let cfg = IntegratorConfig {
                h_init: h,
                h_min: h,
                h_max: h,
                adaptive: false,
                ..Default::default()
            };
            let sol = integrate(decay, &[1.0], (0.0, 1.0), &cfg, never).unwrap();
            (sol.y[0] - (-1.0f64).exp()).abs()
        };
        for h in [0.2, 0.1, 0.05] {
            let ratio = err_at(h) / err_at(h / 2.0);
            assert!(ratio >= 16.0, "h = {h}: error ratio {ratio}");
        }
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        let err_at = |tol: f64| {
            let cfg = IntegratorConfig {
                rtol: tol,
                atol: tol,
                ..Default::default()
            };
            let sol = integrate(decay, &[1.0], (0.0, 5.0), &cfg, never).unwrap();
            (sol.y[0] - (-5.0f64).exp()).abs()
        };
        let mut prev = err_at(1e-4);
        for tol in [1e-6, 1e-8, 1e-10] {
            let e = err_at(tol);
            assert!(e < prev, "tol {tol}: {e} !< {prev}");
            prev = e;
        }
    }

    #[test]
    fn dense_output_matches_step_nodes() {
        let cfg = IntegratorConfig {
            rtol: 1e-8,
            atol: 1e-10,
            record_steps: true,
            ..Default::default()
        };
        let first = integrate(decay, &[1.0], (0.0, 3.0), &cfg, never).unwrap();
        let nodes: Vec<f64> = first.steps.iter().map(|s| s.0).collect();
        let cfg = IntegratorConfig {
            sample_times: nodes.clone(),
            ..cfg
        };
        let second = integrate(decay, &[1.0], (0.0, 3.0), &cfg, never).unwrap();
        for ((ts, ys), (tn, yn)) in second.samples.iter().zip(&first.steps) {
            assert_eq!(ts, tn);
            assert!((ys[0] - yn[0]).abs() < 1e-12);
        }
        assert_eq!(second.samples.len(), nodes.len());
    }

    #[test]
    fn samples_are_interpolated() {
        let cfg = IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-12,
            sample_times: vec![0.0, 0.25, 0.5, 0.75, 1.0, 2.0],
            ..Default::default()
        };
        let sol = integrate(decay, &[1.0], (0.0, 1.0), &cfg, never).unwrap();
        assert_eq!(sol.samples.len(), 5);
        for (t, y) in &sol.samples {
            assert!((y[0] - (-t).exp()).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn stop_predicate_is_bisected() {
        let cfg = IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-12,
            h_min: 1e-10,
            ..Default::default()
        };
        let sol = integrate(decay, &[1.0], (0.0, 100.0), &cfg, |_, y, _| y[0] < 0.5).unwrap();
        assert_eq!(sol.termination, OdeTermination::Stopped);
        assert!((sol.t - 2.0f64.ln()).abs() < 1e-8, "t = {}", sol.t);
        assert!(sol.y[0] < 0.5);
    }

    #[test]
    fn non_finite_rhs_aborts() {
        let cfg = IntegratorConfig::default();
        let err =
            integrate(|_, _, dy| dy[0] = f64::NAN, &[1.0], (0.0, 1.0), &cfg, never).unwrap_err();
        assert!(matches!(err, IntegrateError::NonFinite { .. }));
    }

    #[test]
    fn step_underflow_aborts() {
        let cfg = IntegratorConfig {
            h_init: 1e-3,
            h_min: 1e-3,
            h_max: 1e-3,
            rtol: 1e-14,
            atol: 1e-300,
            ..Default::default()
        };
        let err = integrate(
            |_, y, dy| dy[0] = 50.0 * y[0],
            &[1.0],
            (0.0, 1.0),
            &cfg,
            never,
        )
        .unwrap_err();
        assert!(matches!(err, IntegrateError::StepUnderflow { .. }));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = IntegratorConfig {
            h_min: 1.0,
            h_init: 0.1,
            ..Default::default()
        };
        assert!(integrate(decay, &[1.0], (0.0, 1.0), &cfg, never).is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = IntegratorConfig::default();
        let a = integrate(decay, &[1.0], (0.0, 4.0), &cfg, never).unwrap();
        let b = integrate(decay, &[1.0], (0.0, 4.0), &cfg, never).unwrap();
        assert_eq!(a.y[0].to_bits(), b.y[0].to_bits());
        assert_eq!(a.accepted, b.accepted);
    }
}
