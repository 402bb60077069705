//! Approximate master equations over compartments `C_{k,l}` and `D_{k,l}`:
//! expected numbers of cooperators (defectors) with degree `k` of which `l`
//! neighbours defect.
//!
//! Storage is triangular (`0 <= l <= k <= k_max`). The integrated state is
//! `[C.., D.., lost]`, where the last entry accumulates node mass that leaves
//! the grid through the degree cutoff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, IntegratorConfig, OdeTermination};
use crate::pa::EXTINCT;
use crate::params::{GameParams, Variant};
use crate::sim::stable_fermi;
use crate::solve::{SolveOptions, SolvePoint, SolveResult};

/// Estimators whose denominator is below this are reported as 0.
pub const ESTIMATE_GUARD: f64 = 1e-12;

#[inline]
pub fn idx(k: usize, l: usize) -> usize {
    k * (k + 1) / 2 + l
}

pub fn compartment_count(k_max: usize) -> usize {
    (k_max + 1) * (k_max + 2) / 2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompartmentGrid {
    k_max: usize,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl CompartmentGrid {
    pub fn zeros(k_max: usize) -> Self {
        let len = compartment_count(k_max);
        CompartmentGrid {
            k_max,
            c: vec![0.0; len],
            d: vec![0.0; len],
        }
    }

    /// Builds a grid from flat triangular arrays of equal length.
    pub fn from_parts(k_max: usize, c: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        let len = compartment_count(k_max);
        if c.len() != len || d.len() != len {
            return Err(Error::Parse(format!(
                "grid with k_max {k_max} needs {len} entries per state"
            )));
        }
        Ok(CompartmentGrid { k_max, c, d })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn c(&self, k: usize, l: usize) -> f64 {
        self.c[idx(k, l)]
    }

    pub fn d(&self, k: usize, l: usize) -> f64 {
        self.d[idx(k, l)]
    }

    pub fn set_c(&mut self, k: usize, l: usize, x: f64) {
        self.c[idx(k, l)] = x;
    }

    pub fn set_d(&mut self, k: usize, l: usize, x: f64) {
        self.d[idx(k, l)] = x;
    }

    pub fn c_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn d_slice(&self) -> &[f64] {
        &self.d
    }

    /// Number of integrated compartments (both states).
    pub fn len(&self) -> usize {
        self.c.len() + self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn moments(&self) -> GridMoments {
        grid_moments(self)
    }

    fn from_state(k_max: usize, y: &[f64]) -> Self {
        let len = compartment_count(k_max);
        CompartmentGrid {
            k_max,
            c: y[..len].to_vec(),
            d: y[len..2 * len].to_vec(),
        }
    }
}

/// Iterates `(k, l, flat index)` in storage order.
fn cells(k_max: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..=k_max).flat_map(|k| (0..=k).map(move |l| (k, l, idx(k, l))))
}

/// Zeroth and first moments of a grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridMoments {
    pub n_c: f64,
    pub n_d: f64,
    /// `½ Σ (k-l) C`
    pub n_cc: f64,
    /// `Σ l C`
    pub n_cd: f64,
    /// `½ Σ l D`
    pub n_dd: f64,
    /// `Σ (k-l) D`, the CD count seen from the defector side.
    pub n_dc: f64,
}

impl GridMoments {
    /// Edge total with the CD count averaged over both sides; equals
    /// `½ Σ k (C + D)`.
    pub fn edges(&self) -> f64 {
        self.n_cc + self.cd_symmetric() + self.n_dd
    }

    pub fn cd_symmetric(&self) -> f64 {
        0.5 * (self.n_cd + self.n_dc)
    }
}

pub fn grid_moments(grid: &CompartmentGrid) -> GridMoments {
    let mut m = GridMoments::default();
    for (k, l, i) in cells(grid.k_max) {
        let (c, d) = (grid.c[i], grid.d[i]);
        let (kl, l) = ((k - l) as f64, l as f64);
        m.n_c += c;
        m.n_d += d;
        m.n_cc += kl * c;
        m.n_cd += l * c;
        m.n_dd += l * d;
        m.n_dc += kl * d;
    }
    m.n_cc *= 0.5;
    m.n_dd *= 0.5;
    m
}

/// Expected neighbour counts across edges of a given type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborEstimates {
    pub beta_c: f64,
    pub beta_d: f64,
    pub gamma_c: f64,
    pub gamma_d: f64,
    pub delta_c: f64,
    pub delta_d: f64,
    pub eta_c: f64,
    pub eta_d: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den < ESTIMATE_GUARD {
        0.0
    } else {
        num / den
    }
}

/// Moment sums over the grid with negative entries clamped to zero.
struct ClampedSums {
    n_c: f64,
    n_d: f64,
    /// C sums weighted by (k-l), l, (k-l)l, l^2, (k-l)^2.
    sc: [f64; 5],
    /// D sums with the same weights.
    sd: [f64; 5],
}

fn clamped_sums(grid: &CompartmentGrid) -> ClampedSums {
    let mut out = ClampedSums {
        n_c: 0.0,
        n_d: 0.0,
        sc: [0.0; 5],
        sd: [0.0; 5],
    };
    for (k, l, i) in cells(grid.k_max) {
        let (kl, lf) = ((k - l) as f64, l as f64);
        let w = [kl, lf, kl * lf, lf * lf, kl * kl];
        let c = grid.c[i].max(0.0);
        let d = grid.d[i].max(0.0);
        out.n_c += c;
        out.n_d += d;
        for ((sc, sd), wj) in out.sc.iter_mut().zip(out.sd.iter_mut()).zip(w) {
            *sc += wj * c;
            *sd += wj * d;
        }
    }
    out
}

/// The eight second-neighbour estimators, computed from the grid with
/// negative entries clamped to zero.
pub fn neighbor_estimates(grid: &CompartmentGrid) -> NeighborEstimates {
    let ClampedSums { sc, sd, .. } = clamped_sums(grid);
    NeighborEstimates {
        beta_c: ratio(sc[2], sc[0]),
        beta_d: ratio(sc[3], sc[1]),
        gamma_c: ratio(sd[4], sd[0]),
        gamma_d: ratio(sd[2], sd[1]),
        delta_c: ratio(sd[2], sd[0]),
        delta_d: ratio(sd[3], sd[1]),
        eta_c: ratio(sc[4], sc[0]),
        eta_d: ratio(sc[2], sc[1]),
    }
}

/// Transition factors for centre flips (per compartment) and neighbour flips
/// (one per edge type).
#[derive(Clone, Debug, PartialEq)]
pub struct FermiFactors {
    /// Probability that a `C_{k,l}` centre adopts D across one of its CD edges.
    pub phi_c: Vec<f64>,
    /// Probability that a `D_{k,l}` centre adopts C across one of its DC edges.
    pub phi_d: Vec<f64>,
    /// A D neighbour of a C centre turns C.
    pub cd_from_cc: f64,
    /// A C neighbour of a C centre turns D.
    pub cc_from_cd: f64,
    /// A D neighbour of a D centre turns C.
    pub dd_from_dc: f64,
    /// A C neighbour of a D centre turns D.
    pub dc_from_dd: f64,
}

impl FermiFactors {
    pub fn phi_c_at(&self, k: usize, l: usize) -> f64 {
        self.phi_c[idx(k, l)]
    }

    pub fn phi_d_at(&self, k: usize, l: usize) -> f64 {
        self.phi_d[idx(k, l)]
    }
}

/// Population-average utilities `(pi_C, pi_D)` from clamped grid moments.
pub fn ame_utilities(grid: &CompartmentGrid, params: &GameParams) -> (f64, f64) {
    let s = clamped_sums(grid);
    let (n, u) = (params.n as f64, params.u);
    let guard = EXTINCT * n;
    let (n_cc, n_cd, n_dd) = (0.5 * s.sc[0], s.sc[1], 0.5 * s.sd[1]);
    let pi_c = if s.n_c < guard {
        0.0
    } else {
        2.0 * n_cc / s.n_c
    };
    let pi_d = if s.n_d < guard {
        0.0
    } else {
        ((1.0 + u) * n_cd + u * 2.0 * n_dd) / s.n_d
    };
    (pi_c, pi_d)
}

pub fn fermi_factors(
    grid: &CompartmentGrid,
    params: &GameParams,
    est: &NeighborEstimates,
) -> FermiFactors {
    let (u, alpha) = (params.u, params.alpha);
    let (pi_c, pi_d) = ame_utilities(grid, params);
    // Estimated utility of a D neighbour of a C centre.
    let p_d_of_c = (est.gamma_c + 1.0) * (1.0 + u) + est.delta_c * u;
    let len = compartment_count(grid.k_max);
    // The C centre's payoff is k-l, so phi_c only varies with k-l.
    let by_kl: Vec<f64> = (0..=grid.k_max)
        .map(|kl| stable_fermi(kl as f64 - p_d_of_c, alpha))
        .collect();
    let mut phi_c = vec![0.0; len];
    let mut phi_d = vec![0.0; len];
    for (k, l, i) in cells(grid.k_max) {
        let (kl, lf) = ((k - l) as f64, l as f64);
        phi_c[i] = by_kl[k - l];
        phi_d[i] = stable_fermi(lf * u + kl * (1.0 + u) - est.eta_d, alpha);
    }
    FermiFactors {
        phi_c,
        phi_d,
        cd_from_cc: stable_fermi(p_d_of_c - pi_c, alpha),
        cc_from_cd: stable_fermi(est.eta_c + 1.0 - pi_d, alpha),
        dd_from_dc: stable_fermi(
            est.gamma_d * (1.0 + u) + (est.delta_d + 1.0) * u - pi_c,
            alpha,
        ),
        dc_from_dd: stable_fermi(est.eta_d - pi_d, alpha),
    }
}

/// Time derivative of the grid, plus the rate at which node mass leaves
/// through the degree cutoff.
pub fn ame_rhs(grid: &CompartmentGrid, params: &GameParams) -> (CompartmentGrid, f64) {
    let mut out = CompartmentGrid::zeros(grid.k_max);
    let lost = rhs_into(grid, params, &mut out.c, &mut out.d);
    (out, lost)
}

fn rhs_into(grid: &CompartmentGrid, params: &GameParams, dc: &mut [f64], dd: &mut [f64]) -> f64 {
    let km = grid.k_max;
    let n = params.n as f64;
    let w = params.w;
    let r = 1.0 - w;
    let variant = params.variant == Variant::CdAndDd;
    let est = neighbor_estimates(grid);
    let ff = fermi_factors(grid, params, &est);
    let mom = grid_moments(grid);
    let c_frac = mom.n_c / n;
    // Passive gains use the defector-side CD count so the first-moment
    // balance with active drops is exact.
    let p_cd = mom.n_dc / n;
    let p_dd = mom.n_dd / n;

    let (c, d) = (&grid.c, &grid.d);
    let at = |g: &[f64], k: usize, l: usize| if l <= k && k <= km { g[idx(k, l)] } else { 0.0 };

    let a_c = ff.cd_from_cc * est.gamma_c;
    let b_c = ff.cc_from_cd * est.beta_c;
    let a_d = ff.dd_from_dc * est.gamma_d;
    let b_d = ff.dc_from_dd * est.beta_d;

    for (k, l, i) in cells(km) {
        let (kf, lf) = (k as f64, l as f64);
        let klf = kf - lf;
        let (ci, di) = (c[i], d[i]);
        let c_up = at(c, k, l + 1);
        let c_dn = if l > 0 { at(c, k, l - 1) } else { 0.0 };
        let d_up = at(d, k, l + 1);
        let d_dn = if l > 0 { at(d, k, l - 1) } else { 0.0 };

        let centre = ff.phi_d[i] * klf * di - ff.phi_c[i] * lf * ci;
        let mut gc = w
            * (centre
                + a_c * ((lf + 1.0) * c_up - lf * ci)
                + b_c * ((klf + 1.0) * c_dn - klf * ci));
        let mut gd = w
            * (-centre
                + a_d * ((lf + 1.0) * d_up - lf * di)
                + b_d * ((klf + 1.0) * d_dn - klf * di));

        if r > 0.0 {
            let c_km1 = if k > 0 { at(c, k - 1, l) } else { 0.0 };
            let d_km1 = if k > 0 { at(d, k - 1, l) } else { 0.0 };
            gc += r * (c_frac * ((lf + 1.0) * c_up - lf * ci) + p_cd * (c_km1 - ci));
            gd += r * ((klf + 1.0) * at(d, k + 1, l) - klf * di + p_cd * (d_km1 - di));
            if variant {
                let c_diag = if k > 0 && l > 0 {
                    at(c, k - 1, l - 1)
                } else {
                    0.0
                };
                let d_diag = if k > 0 && l > 0 {
                    at(d, k - 1, l - 1)
                } else {
                    0.0
                };
                gc += r * p_dd * (c_diag - ci);
                gd += r
                    * (0.5 * c_frac * ((lf + 1.0) * d_up - lf * di)
                        + p_dd * (d_diag - di)
                        + 0.5 * ((lf + 1.0) * at(d, k + 1, l + 1) - lf * di));
            }
        }
        dc[i] = gc;
        dd[i] = gd;
    }

    if r == 0.0 {
        return 0.0;
    }
    let edge_mass: f64 = (0..=km).map(|l| c[idx(km, l)] + d[idx(km, l)]).sum();
    let gain = if variant { p_cd + p_dd } else { p_cd };
    r * gain * edge_mass
}

/// Per-state degree histograms `(hist_C, hist_D)` indexed by degree.
pub fn ame_degree_distribution(grid: &CompartmentGrid) -> (Vec<f64>, Vec<f64>) {
    let mut hc = vec![0.0; grid.k_max + 1];
    let mut hd = vec![0.0; grid.k_max + 1];
    for (k, _, i) in cells(grid.k_max) {
        hc[k] += grid.c[i];
        hd[k] += grid.d[i];
    }
    (hc, hd)
}

/// Poisson degrees with mean `2M/N` truncated at `k_max`, independent
/// strategies with defector probability `rho`.
pub fn ame_init(params: &GameParams, k_max: usize) -> Result<CompartmentGrid> {
    let mean = params.mean_degree();
    if (k_max as f64) < mean {
        return Err(Error::InvalidParam {
            name: "k_max",
            value: k_max as f64,
            reason: "must be at least the mean degree",
        });
    }
    let mut pk = Vec::with_capacity(k_max + 1);
    let mut p = (-mean).exp();
    for k in 0..=k_max {
        if k > 0 {
            p *= mean / k as f64;
        }
        pk.push(p);
    }
    let total: f64 = pk.iter().sum();
    let n = params.n as f64;
    let rho = params.rho;
    let mut grid = CompartmentGrid::zeros(k_max);
    for (k, &p_k) in pk.iter().enumerate() {
        let mut binom = 1.0;
        for l in 0..=k {
            if l > 0 {
                binom *= (k - l + 1) as f64 / l as f64;
            }
            let b = binom * rho.powi(l as i32) * (1.0 - rho).powi((k - l) as i32);
            let i = idx(k, l);
            grid.c[i] = n * (1.0 - rho) * p_k / total * b;
            grid.d[i] = n * rho * p_k / total * b;
        }
    }
    Ok(grid)
}

/// Integrated AME solution with the final grid.
#[derive(Clone, Debug)]
pub struct AmeSolution {
    pub result: SolveResult,
    pub grid: CompartmentGrid,
    /// Grids at the requested sample times, in order.
    pub grids: Vec<(f64, CompartmentGrid)>,
}

fn point(t: f64, grid: &CompartmentGrid, params: &GameParams) -> SolvePoint {
    let mom = grid_moments(grid);
    let (n, m) = (params.n as f64, params.m as f64);
    SolvePoint {
        t,
        c: mom.n_c / n,
        cc: mom.n_cc / m,
        cd: mom.cd_symmetric() / m,
        dd: mom.n_dd / m,
    }
}

/// Integrates the AME from the independent Poisson initial grid until the
/// dynamics freeze or settle.
pub fn solve_ame(params: &GameParams, opts: &SolveOptions) -> Result<AmeSolution> {
    params.validate()?;
    let k_max = params.k_max;
    let grid0 = ame_init(params, k_max)?;
    solve_ame_from(params, grid0, opts)
}

/// Integrates the AME from an arbitrary starting grid.
pub fn solve_ame_from(
    params: &GameParams,
    grid0: CompartmentGrid,
    opts: &SolveOptions,
) -> Result<AmeSolution> {
    let k_max = grid0.k_max;
    let len = compartment_count(k_max);
    let (n, m) = (params.n as f64, params.m as f64);
    let config = IntegratorConfig {
        atol: opts.atol_per_node * n,
        sample_times: opts.sample_times.clone(),
        ..opts.integrator.clone()
    };
    let mut y0 = Vec::with_capacity(2 * len + 1);
    y0.extend_from_slice(&grid0.c);
    y0.extend_from_slice(&grid0.d);
    y0.push(0.0);

    let mut scratch = CompartmentGrid::zeros(k_max);
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        scratch.c.copy_from_slice(&y[..len]);
        scratch.d.copy_from_slice(&y[len..2 * len]);
        let (dc, rest) = dy.split_at_mut(len);
        let (dd, dl) = rest.split_at_mut(len);
        dl[0] = rhs_into(&scratch, params, dc, dd);
    };
    // The closure lets the C-side and D-side CD counts differ slightly;
    // freezing requires both to vanish.
    let stop = |_t: f64, y: &[f64], dy: &[f64]| {
        let mom = grid_moments(&CompartmentGrid::from_state(k_max, y));
        let cd = mom.n_cd.max(mom.n_dc) / m;
        let rate = dy[..2 * len].iter().fold(0.0f64, |a, x| a.max(x.abs()));
        opts.is_settled(params, mom.n_c / n, cd, mom.n_dd / m, rate / m)
    };
    let sol = integrate(rhs, &y0, (0.0, opts.t_end), &config, stop)?;
    let grids: Vec<(f64, CompartmentGrid)> = sol
        .samples
        .iter()
        .map(|(t, y)| (*t, CompartmentGrid::from_state(k_max, y)))
        .collect();
    let grid = CompartmentGrid::from_state(k_max, &sol.y);
    Ok(AmeSolution {
        result: SolveResult {
            trajectory: grids.iter().map(|(t, g)| point(*t, g, params)).collect(),
            final_point: point(sol.t, &grid, params),
            settled: sol.termination == OdeTermination::Stopped,
            steps: sol.accepted,
            lost_mass: sol.y[2 * len],
        },
        grid,
        grids,
    })
}
