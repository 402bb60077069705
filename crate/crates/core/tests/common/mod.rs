//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use coevo::sim::{Simulation, Step};
use coevo::{GameParams, NodeState, PlayerGraph, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Node states (true = defector) and the sorted edge set.
pub type Config = (Vec<bool>, BTreeSet<(usize, usize)>);

pub fn config_of(graph: &PlayerGraph) -> Config {
    let states = graph
        .states()
        .iter()
        .map(|&s| s == NodeState::Defector)
        .collect();
    let edges = graph.edges().map(|e| (e.lo(), e.hi())).collect();
    (states, edges)
}

pub fn graph_of(defectors: &[bool], edges: &[(usize, usize)], variant: Variant) -> PlayerGraph {
    let states: Vec<NodeState> = defectors
        .iter()
        .map(|&d| {
            if d {
                NodeState::Defector
            } else {
                NodeState::Cooperator
            }
        })
        .collect();
    PlayerGraph::from_parts(&states, edges, variant).unwrap()
}

fn payoff(defectors: &[bool], edges: &BTreeSet<(usize, usize)>, node: usize, u: f64) -> f64 {
    edges
        .iter()
        .filter_map(|&(a, b)| match node {
            x if x == a => Some(b),
            x if x == b => Some(a),
            _ => None,
        })
        .map(|other| match (defectors[node], defectors[other]) {
            (false, false) => 1.0,
            (false, true) => 0.0,
            (true, false) => 1.0 + u,
            (true, true) => u,
        })
        .sum()
}

fn rewired(cfg: &Config, actor: usize, dropped: usize) -> Vec<Config> {
    let (states, edges) = cfg;
    let n = states.len();
    let linked = |z: usize| edges.contains(&(actor.min(z), actor.max(z)));
    (0..n)
        .filter(|&z| z != actor && !linked(z))
        .map(|z| {
            let mut e = edges.clone();
            e.remove(&(actor.min(dropped), actor.max(dropped)));
            e.insert((actor.min(z), actor.max(z)));
            (states.clone(), e)
        })
        .collect()
}

/// Exact law of the configuration after one event, by enumerating the
/// selected edge, the update/rewire branch, the acting end and the new
/// partner. Written independently of the library.
pub fn one_step_law(cfg: &Config, params: &GameParams) -> BTreeMap<Config, f64> {
    let (states, edges) = cfg;
    let variant_dd = params.variant == Variant::CdAndDd;
    let eligible: Vec<(usize, usize)> = edges
        .iter()
        .copied()
        .filter(|&(a, b)| states[a] != states[b] || (variant_dd && states[a] && states[b]))
        .collect();
    let mut law = BTreeMap::new();
    if eligible.is_empty() {
        law.insert(cfg.clone(), 1.0);
        return law;
    }
    let pe = 1.0 / eligible.len() as f64;
    let w = params.w;
    let mut outcomes: Vec<(Config, f64)> = Vec::new();
    let rewire_from = |out: &mut Vec<(Config, f64)>, actor: usize, dropped: usize, p: f64| {
        let targets = rewired(cfg, actor, dropped);
        if targets.is_empty() {
            out.push((cfg.clone(), p));
        } else {
            let q = p / targets.len() as f64;
            out.extend(targets.into_iter().map(|t| (t, q)));
        }
    };
    for &(a, b) in &eligible {
        if states[a] != states[b] {
            let (c, d) = if states[a] { (b, a) } else { (a, b) };
            let delta = payoff(states, edges, c, params.u) - payoff(states, edges, d, params.u);
            let pc = 1.0 / (1.0 + (params.alpha * delta).exp());
            rewire_from(&mut outcomes, c, d, pe * (1.0 - w));
            let mut to_d = states.clone();
            to_d[c] = true;
            let mut to_c = states.clone();
            to_c[d] = false;
            outcomes.push(((to_d, edges.clone()), pe * w * pc));
            outcomes.push(((to_c, edges.clone()), pe * w * (1.0 - pc)));
        } else {
            outcomes.push((cfg.clone(), pe * w));
            rewire_from(&mut outcomes, a, b, pe * (1.0 - w) * 0.5);
            rewire_from(&mut outcomes, b, a, pe * (1.0 - w) * 0.5);
        }
    }
    for (c, p) in outcomes {
        *law.entry(c).or_insert(0.0) += p;
    }
    law
}

/// Empirical law of one `Simulation::step` from `graph`, one fresh seed per trial.
pub fn one_step_counts(
    graph: &PlayerGraph,
    params: &GameParams,
    trials: u64,
    seed: u64,
) -> BTreeMap<Config, u64> {
    let mut counts = BTreeMap::new();
    for t in 0..trials {
        let rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t));
        let mut sim = Simulation::new(graph.clone(), params, rng);
        let _: Step = sim.step();
        *counts.entry(config_of(sim.graph())).or_insert(0) += 1;
    }
    counts
}

/// Largest deviation from the exact law in units of the binomial standard
/// deviation. Outcomes the law forbids count as infinitely far.
pub fn max_sigma(law: &BTreeMap<Config, f64>, counts: &BTreeMap<Config, u64>, trials: u64) -> f64 {
    let n = trials as f64;
    let keys: BTreeSet<&Config> = law.keys().chain(counts.keys()).collect();
    keys.into_iter()
        .map(|k| {
            let p = law.get(k).copied().unwrap_or(0.0);
            let f = counts.get(k).copied().unwrap_or(0) as f64 / n;
            if p <= 0.0 {
                if f > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                (f - p).abs() / (p * (1.0 - p) / n).sqrt().max(f64::MIN_POSITIVE)
            }
        })
        .fold(0.0, f64::max)
}

/// Path C-D-C-D used by the one-step checks.
pub fn path_cdcd() -> (Vec<bool>, Vec<(usize, usize)>) {
    (vec![false, true, false, true], vec![(0, 1), (1, 2), (2, 3)])
}

/// Path C-D-D-D: one CD edge and two DD edges.
pub fn path_cddd() -> (Vec<bool>, Vec<(usize, usize)>) {
    (vec![false, true, true, true], vec![(0, 1), (1, 2), (2, 3)])
}

pub fn micro_params(variant: Variant) -> GameParams {
    GameParams {
        u: 0.5,
        w: 0.5,
        alpha: 1.0,
        rho: 0.5,
        variant,
        n: 4,
        m: 3,
        k_max: 3,
    }
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}
