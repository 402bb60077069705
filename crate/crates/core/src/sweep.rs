//! Replicated runs, parameter grids and trajectory averaging.
//!
//! Replicate `i` of grid point `p` is seeded with
//! `base_seed + p * R + i` (wrapping), so seeds never collide inside a sweep
//! and results do not depend on how rayon schedules the work.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ame::solve_ame;
use crate::error::{Error, Result};
use crate::pa::solve_pa;
use crate::params::{GameParams, Variant};
use crate::sim::{
    run_fresh, RunOptions, RunOutcome, Sample, SamplePolicy, Termination, Trajectory,
};
use crate::solve::{SolveOptions, SolveResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Sim,
    Pa,
    Ame,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sim => "sim",
            Method::Pa => "pa",
            Method::Ame => "ame",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Method::Sim),
            "pa" => Ok(Method::Pa),
            "ame" => Ok(Method::Ame),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

pub fn replicate_seed(base_seed: u64, index: u64) -> u64 {
    base_seed.wrapping_add(index)
}

pub fn replicate_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replicate_seed(base_seed, index))
}

/// Final state of one simulated run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub terminated: Termination,
    pub events: u64,
    pub c: f64,
    pub cc: f64,
    pub cd: f64,
    pub dd: f64,
}

impl RunSummary {
    pub fn from_outcome(seed: u64, outcome: &RunOutcome) -> Self {
        let g = &outcome.graph;
        let s = Sample::from_counts(outcome.events, g.counts(), g.n(), g.m());
        RunSummary {
            seed,
            terminated: outcome.termination,
            events: outcome.events,
            c: s.c,
            cc: s.cc,
            cd: s.cd,
            dd: s.dd,
        }
    }
}

/// Aggregate over the replicates of one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub variant: Variant,
    pub u: f64,
    pub w: f64,
    pub rho: f64,
    #[serde(rename = "R")]
    pub r: usize,
    pub mean_c: f64,
    pub std_c: f64,
    pub mean_cc: f64,
    pub mean_dd: f64,
    pub mean_events: f64,
    pub capped_frac: f64,
}

/// Replicate results for one point. Runs that failed are counted, not kept.
#[derive(Clone, Debug)]
pub struct ReplicateSet {
    pub row: SweepRow,
    pub runs: Vec<RunSummary>,
    pub failed: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (if n == 0 { f64::NAN } else { s / n as f64 }, n)
}

/// Sample standard deviation; 0 for fewer than two values.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

fn aggregate(params: &GameParams, r: usize, runs: &[RunSummary]) -> SweepRow {
    let cs: Vec<f64> = runs.iter().map(|s| s.c).collect();
    SweepRow {
        method: Method::Sim,
        variant: params.variant,
        u: params.u,
        w: params.w,
        rho: params.rho,
        r,
        mean_c: mean(cs.iter().copied()).0,
        std_c: std_dev(&cs),
        mean_cc: mean(runs.iter().map(|s| s.cc)).0,
        mean_dd: mean(runs.iter().map(|s| s.dd)).0,
        mean_events: mean(runs.iter().map(|s| s.events as f64)).0,
        capped_frac: mean(
            runs.iter()
                .map(|s| f64::from(u8::from(s.terminated == Termination::EventCap))),
        )
        .0,
    }
}

/// Runs `r` replicates with seeds `base_seed + i` and aggregates their
/// final fractions.
pub fn run_replicates(
    params: &GameParams,
    r: usize,
    base_seed: u64,
    event_cap: u64,
) -> Result<ReplicateSet> {
    params.validate()?;
    if r == 0 {
        return Err(Error::InvalidParam {
            name: "replicates",
            value: 0.0,
            reason: "need at least one replicate",
        });
    }
    let opts = RunOptions {
        policy: SamplePolicy::EndsOnly,
        event_cap,
    };
    let results: Vec<Option<RunSummary>> = (0..r as u64)
        .into_par_iter()
        .map(|i| {
            let seed = replicate_seed(base_seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_fresh(params, &mut rng, &opts)
                .ok()
                .map(|o| RunSummary::from_outcome(seed, &o))
        })
        .collect();
    let failed = results.iter().filter(|x| x.is_none()).count();
    let runs: Vec<RunSummary> = results.into_iter().flatten().collect();
    Ok(ReplicateSet {
        row: aggregate(params, r, &runs),
        runs,
        failed,
    })
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub rho: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub method: Method,
    /// Supplies `alpha`, `variant`, `n`, `m` and `k_max`; its `u`, `w` and
    /// `rho` are replaced by each grid point.
    pub base: GameParams,
    pub event_cap: u64,
    pub solve: SolveOptions,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            u: vec![0.5],
            w: vec![0.1],
            rho: vec![0.5],
            replicates: 50,
            base_seed: 0,
            method: Method::Sim,
            base: GameParams::default(),
            event_cap: crate::sim::DEFAULT_EVENT_CAP,
            solve: SolveOptions::default(),
        }
    }
}

impl SweepSpec {
    /// Grid points in output order: `u` outermost, then `w`, then `rho`.
    pub fn points(&self) -> Vec<GameParams> {
        let mut out = Vec::with_capacity(self.u.len() * self.w.len() * self.rho.len());
        for &u in &self.u {
            for &w in &self.w {
                for &rho in &self.rho {
                    out.push(GameParams {
                        u,
                        w,
                        rho,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParam {
                name: "replicates",
                value: 0.0,
                reason: "need at least one replicate",
            });
        }
        self.points().iter().try_for_each(GameParams::validate)
    }
}

fn ode_row(params: &GameParams, method: Method, res: &SolveResult) -> SweepRow {
    let f = res.final_point;
    SweepRow {
        method,
        variant: params.variant,
        u: params.u,
        w: params.w,
        rho: params.rho,
        r: 1,
        mean_c: f.c,
        std_c: 0.0,
        mean_cc: f.cc,
        mean_dd: f.dd,
        mean_events: 0.0,
        capped_frac: if res.settled { 0.0 } else { 1.0 },
    }
}

/// Evaluates every grid point. Rows come back in [`SweepSpec::points`] order.
pub fn sweep_grid(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let points = spec.points();
    match spec.method {
        Method::Sim => {
            let r = spec.replicates;
            let opts = RunOptions {
                policy: SamplePolicy::EndsOnly,
                event_cap: spec.event_cap,
            };
            let jobs: Vec<(usize, u64)> = (0..points.len())
                .flat_map(|p| (0..r as u64).map(move |i| (p, i)))
                .collect();
            let results: Vec<Option<RunSummary>> = jobs
                .par_iter()
                .map(|&(p, i)| {
                    let seed = replicate_seed(spec.base_seed, p as u64 * r as u64 + i);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    run_fresh(&points[p], &mut rng, &opts)
                        .ok()
                        .map(|o| RunSummary::from_outcome(seed, &o))
                })
                .collect();
            Ok(points
                .iter()
                .zip(results.chunks(r))
                .map(|(params, chunk)| {
                    let runs: Vec<RunSummary> = chunk.iter().flatten().copied().collect();
                    aggregate(params, r, &runs)
                })
                .collect())
        }
        Method::Pa | Method::Ame => points
            .par_iter()
            .map(|params| {
                let res = if spec.method == Method::Pa {
                    solve_pa(params, &spec.solve)?
                } else {
                    solve_ame(params, &spec.solve)?.result
                };
                Ok(ode_row(params, spec.method, &res))
            })
            .collect(),
    }
}

/// Mean simulated trajectory at the given normalised times (events / M).
///
/// Runs that stop before a checkpoint contribute their terminal state.
pub fn trajectory_average(
    params: &GameParams,
    r: usize,
    base_seed: u64,
    checkpoints: &[f64],
    event_cap: u64,
) -> Result<Trajectory> {
    params.validate()?;
    if r == 0 {
        return Err(Error::InvalidParam {
            name: "replicates",
            value: 0.0,
            reason: "need at least one replicate",
        });
    }
    let m = params.m as f64;
    let mut events: Vec<u64> = checkpoints
        .iter()
        .map(|&t| (t * m).round().max(0.0) as u64)
        .collect();
    events.sort_unstable();
    events.dedup();
    let opts = RunOptions {
        policy: SamplePolicy::AtEvents(events.clone()),
        event_cap,
    };
    let runs: Vec<Trajectory> = (0..r as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(base_seed, i);
            run_fresh(params, &mut rng, &opts).map(|o| o.trajectory)
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(events.len());
    for &e in &events {
        let mut acc = [0.0f64; 4];
        for traj in &runs {
            // Samples are ordered by event; the last one at or before `e` is
            // either the checkpoint itself or the terminal state.
            let pos = traj.partition_point(|s| s.event <= e);
            let s = &traj[pos.saturating_sub(1)];
            acc[0] += s.c;
            acc[1] += s.cc;
            acc[2] += s.cd;
            acc[3] += s.dd;
        }
        let k = runs.len() as f64;
        out.push(Sample {
            event: e,
            t: if params.m == 0 { 0.0 } else { e as f64 / m },
            c: acc[0] / k,
            cc: acc[1] / k,
            cd: acc[2] / k,
            dd: acc[3] / k,
        });
    }
    Ok(out)
}

/// Mean per-state degree histograms of the final networks over `r`
/// replicates, indexed by degree.
pub fn sim_degree_distribution(
    params: &GameParams,
    r: usize,
    base_seed: u64,
    event_cap: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    use crate::graph::NodeState;
    params.validate()?;
    let opts = RunOptions {
        policy: SamplePolicy::EndsOnly,
        event_cap,
    };
    let hists: Vec<(Vec<usize>, Vec<usize>)> = (0..r as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(base_seed, i);
            run_fresh(params, &mut rng, &opts).map(|o| {
                (
                    o.graph.degree_distribution(NodeState::Cooperator),
                    o.graph.degree_distribution(NodeState::Defector),
                )
            })
        })
        .collect::<Result<_>>()?;
    let len = hists
        .iter()
        .map(|(c, d)| c.len().max(d.len()))
        .max()
        .unwrap_or(0);
    let mut hc = vec![0.0; len];
    let mut hd = vec![0.0; len];
    for (c, d) in &hists {
        for (k, &x) in c.iter().enumerate() {
            hc[k] += x as f64;
        }
        for (k, &x) in d.iter().enumerate() {
            hd[k] += x as f64;
        }
    }
    let k = r.max(1) as f64;
    hc.iter_mut().chain(hd.iter_mut()).for_each(|x| *x /= k);
    Ok((hc, hd))
}
