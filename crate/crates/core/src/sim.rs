//! Exact event-by-event simulation of the partner-switching game.
//!
//! Each event picks an eligible edge uniformly. A discordant (CD) edge
//! triggers a Fermi-rule strategy update with probability `w` and otherwise a
//! rewire by its C end. In the [`Variant::CdAndDd`] model a DD edge does
//! nothing with probability `w` and otherwise one of its ends, chosen
//! uniformly, rewires.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeKind, NodeState, PlayerGraph, TypeCounts};
use crate::params::{GameParams, Variant};

/// Default cap on the number of events per run.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

/// Logistic `1 / (1 + exp(alpha * delta))`, evaluated without overflow.
///
/// This is the probability that a player whose payoff exceeds its partner's
/// by `delta` adopts the partner's strategy.
pub fn stable_fermi(delta: f64, alpha: f64) -> f64 {
    let x = alpha * delta;
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    StrategyFlip,
    RewireCd,
    RewireDd,
    NoopDd,
    /// A rewire was attempted but the actor is already linked to everyone.
    RewireBlocked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: u64,
    pub kind: EventKind,
    /// The selected edge, as it was before the event.
    pub edge: Edge,
    /// Rewiring end, if any.
    pub actor: Option<usize>,
    /// Flipped node for a strategy update, new partner for a rewire.
    pub node: Option<usize>,
}

impl EventRecord {
    fn new(kind: EventKind, edge: Edge) -> Self {
        EventRecord {
            index: 0,
            kind,
            edge,
            actor: None,
            node: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// No eligible edge left.
    Absorbed,
    /// Variant only: every node defects, DD edges would reshuffle forever.
    AllDefectors,
    /// Variant with `w = 1` and no CD edges: every remaining event is a no-op.
    Frozen,
    EventCap,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Absorbed => "absorbed",
            Termination::AllDefectors => "all_defectors",
            Termination::Frozen => "frozen",
            Termination::EventCap => "event_cap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Termination::Absorbed,
            Termination::AllDefectors,
            Termination::Frozen,
            Termination::EventCap,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
    }
}

/// Uniform draw over the graph's eligible edges.
pub fn sample_eligible_edge<R: Rng + ?Sized>(graph: &PlayerGraph, rng: &mut R) -> Option<Edge> {
    graph.sample_eligible(rng)
}

/// Fermi-rule imitation across a CD edge: the C end copies the D end with
/// probability `stable_fermi(P_c - P_d, alpha)`, otherwise the D end copies
/// the C end.
pub fn strategy_update_event<R: Rng + ?Sized>(
    graph: &mut PlayerGraph,
    u: f64,
    alpha: f64,
    edge: Edge,
    rng: &mut R,
) -> Result<EventRecord> {
    let (c, d) = split_cd(graph, edge)?;
    let delta = graph.node_payoff(u, c) - graph.node_payoff(u, d);
    let flipped = if rng.gen::<f64>() < stable_fermi(delta, alpha) {
        c
    } else {
        d
    };
    graph.flip(flipped);
    Ok(EventRecord {
        node: Some(flipped),
        ..EventRecord::new(EventKind::StrategyFlip, edge)
    })
}

/// The C end drops its D partner and links to a uniformly chosen node it is
/// not yet connected to (the dropped partner excluded).
pub fn rewire_cd_event<R: Rng + ?Sized>(
    graph: &mut PlayerGraph,
    edge: Edge,
    rng: &mut R,
) -> Result<EventRecord> {
    let (c, d) = split_cd(graph, edge)?;
    Ok(rewire(graph, edge, c, d, EventKind::RewireCd, rng))
}

/// One end of a DD edge, chosen with probability 1/2, drops the other and
/// links to a uniformly chosen non-neighbour.
pub fn rewire_dd_event<R: Rng + ?Sized>(
    graph: &mut PlayerGraph,
    edge: Edge,
    rng: &mut R,
) -> Result<EventRecord> {
    if !graph.has_edge(edge.lo(), edge.hi()) || graph.edge_kind(edge) != EdgeKind::DD {
        return Err(Error::IneligibleEdge(edge.lo(), edge.hi()));
    }
    let (actor, dropped) = if rng.gen::<bool>() {
        (edge.lo(), edge.hi())
    } else {
        (edge.hi(), edge.lo())
    };
    Ok(rewire(
        graph,
        edge,
        actor,
        dropped,
        EventKind::RewireDd,
        rng,
    ))
}

fn split_cd(graph: &PlayerGraph, edge: Edge) -> Result<(usize, usize)> {
    let (a, b) = (edge.lo(), edge.hi());
    if !graph.has_edge(a, b) || graph.edge_kind(edge) != EdgeKind::CD {
        return Err(Error::IneligibleEdge(a, b));
    }
    Ok(if graph.state(a) == NodeState::Cooperator {
        (a, b)
    } else {
        (b, a)
    })
}

fn rewire<R: Rng + ?Sized>(
    graph: &mut PlayerGraph,
    edge: Edge,
    actor: usize,
    dropped: usize,
    kind: EventKind,
    rng: &mut R,
) -> EventRecord {
    let Some(partner) = pick_partner(graph, actor, rng) else {
        return EventRecord {
            actor: Some(actor),
            ..EventRecord::new(EventKind::RewireBlocked, edge)
        };
    };
    graph.remove_edge(actor, dropped);
    let added = graph.add_edge(actor, partner);
    debug_assert!(added && partner != actor && partner != dropped);
    EventRecord {
        actor: Some(actor),
        node: Some(partner),
        ..EventRecord::new(kind, edge)
    }
}

/// Uniform node outside `actor`'s closed neighbourhood. Called while the
/// dropped edge is still present, so the dropped partner is excluded too.
fn pick_partner<R: Rng + ?Sized>(graph: &PlayerGraph, actor: usize, rng: &mut R) -> Option<usize> {
    let n = graph.n();
    let available = n - 1 - graph.degree(actor);
    if available == 0 {
        return None;
    }
    if 4 * available >= n {
        loop {
            let z = rng.gen_range(0..n);
            if z != actor && !graph.has_edge(actor, z) {
                return Some(z);
            }
        }
    }
    let candidates: Vec<usize> = (0..n)
        .filter(|&z| z != actor && !graph.has_edge(actor, z))
        .collect();
    Some(candidates[rng.gen_range(0..candidates.len())])
}

/// Outcome of one call to [`Simulation::step`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Event(EventRecord),
    Terminal(Termination),
}

/// When to record trajectory samples. The initial and terminal states are
/// always recorded.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum SamplePolicy {
    #[default]
    EndsOnly,
    /// Every `k` events.
    Every(u64),
    /// At the listed event counts (sorted ascending).
    AtEvents(Vec<u64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub event: u64,
    /// Events divided by the edge count.
    pub t: f64,
    pub c: f64,
    pub cc: f64,
    pub cd: f64,
    pub dd: f64,
}

impl Sample {
    pub fn from_counts(event: u64, counts: TypeCounts, n: usize, m: usize) -> Self {
        let per_edge = |x: usize| if m == 0 { 0.0 } else { x as f64 / m as f64 };
        Sample {
            event,
            t: per_edge(event as usize),
            c: counts.n_c as f64 / n as f64,
            cc: per_edge(counts.n_cc),
            cd: per_edge(counts.n_cd),
            dd: per_edge(counts.n_dd),
        }
    }
}

pub type Trajectory = Vec<Sample>;

/// A single run in progress.
pub struct Simulation<R> {
    graph: PlayerGraph,
    u: f64,
    w: f64,
    alpha: f64,
    variant: Variant,
    rng: R,
    events: u64,
    event_cap: u64,
}

impl<R: Rng> Simulation<R> {
    pub fn new(mut graph: PlayerGraph, params: &GameParams, rng: R) -> Self {
        graph.set_variant(params.variant);
        Simulation {
            graph,
            u: params.u,
            w: params.w,
            alpha: params.alpha,
            variant: params.variant,
            rng,
            events: 0,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    pub fn graph(&self) -> &PlayerGraph {
        &self.graph
    }

    pub fn into_graph(self) -> PlayerGraph {
        self.graph
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// The reason the run cannot continue, if any.
    pub fn terminal(&self) -> Option<Termination> {
        let counts = self.graph.counts();
        if self.graph.eligible_len() == 0 {
            return Some(Termination::Absorbed);
        }
        if self.variant == Variant::CdAndDd {
            if counts.n_c == 0 {
                return Some(Termination::AllDefectors);
            }
            if self.w >= 1.0 && counts.n_cd == 0 {
                return Some(Termination::Frozen);
            }
        }
        if self.events >= self.event_cap {
            return Some(Termination::EventCap);
        }
        None
    }

    pub fn step(&mut self) -> Step {
        if let Some(t) = self.terminal() {
            return Step::Terminal(t);
        }
        let edge = self
            .graph
            .sample_eligible(&mut self.rng)
            .expect("eligible set is non-empty");
        let update = self.rng.gen::<f64>() < self.w;
        let g = &mut self.graph;
        let record = match g.edge_kind(edge) {
            EdgeKind::CD if update => {
                strategy_update_event(g, self.u, self.alpha, edge, &mut self.rng)
            }
            EdgeKind::CD => rewire_cd_event(g, edge, &mut self.rng),
            EdgeKind::DD if update => Ok(EventRecord::new(EventKind::NoopDd, edge)),
            EdgeKind::DD => rewire_dd_event(g, edge, &mut self.rng),
            EdgeKind::CC => unreachable!("CC edges are never eligible"),
        }
        .expect("sampled edge satisfies the event precondition");
        let record = EventRecord {
            index: self.events,
            ..record
        };
        self.events += 1;
        Step::Event(record)
    }

    pub fn sample(&self) -> Sample {
        Sample::from_counts(
            self.events,
            self.graph.counts(),
            self.graph.n(),
            self.graph.m(),
        )
    }

    /// Steps until a terminal condition, recording samples per `policy`.
    pub fn run_to_end(&mut self, policy: &SamplePolicy) -> (Trajectory, Termination) {
        let mut traj = vec![self.sample()];
        let mut next_checkpoint = 0usize;
        let checkpoints: &[u64] = match policy {
            SamplePolicy::AtEvents(v) => v,
            _ => &[],
        };
        while next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == 0 {
            next_checkpoint += 1;
        }
        let termination = loop {
            match self.step() {
                Step::Terminal(t) => break t,
                Step::Event(_) => {
                    let record = match policy {
                        SamplePolicy::EndsOnly => false,
                        SamplePolicy::Every(k) => *k > 0 && self.events.is_multiple_of(*k),
                        SamplePolicy::AtEvents(_) => {
                            let mut hit = false;
                            while next_checkpoint < checkpoints.len()
                                && checkpoints[next_checkpoint] <= self.events
                            {
                                hit |= checkpoints[next_checkpoint] == self.events;
                                next_checkpoint += 1;
                            }
                            hit
                        }
                    };
                    if record {
                        traj.push(self.sample());
                    }
                }
            }
        };
        if traj.last().map(|s| s.event) != Some(self.events) {
            traj.push(self.sample());
        }
        (traj, termination)
    }
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub graph: PlayerGraph,
    pub trajectory: Trajectory,
    pub termination: Termination,
    pub events: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub policy: SamplePolicy,
    pub event_cap: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: SamplePolicy::EndsOnly,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

/// Runs the dynamics on `graph` until it stops.
pub fn run<R: Rng>(
    graph: PlayerGraph,
    params: &GameParams,
    rng: &mut R,
    opts: &RunOptions,
) -> RunOutcome {
    let mut sim = Simulation::new(graph, params, rng).with_event_cap(opts.event_cap);
    let (trajectory, termination) = sim.run_to_end(&opts.policy);
    let events = sim.events();
    RunOutcome {
        graph: sim.into_graph(),
        trajectory,
        termination,
        events,
    }
}

/// Builds a fresh G(N, M) graph with `round(rho N)` defectors and runs it.
pub fn run_fresh<R: Rng>(
    params: &GameParams,
    rng: &mut R,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    params.validate()?;
    let mut graph = PlayerGraph::erdos_renyi(params.n, params.m, rng)?;
    graph.assign_states(params.rho, rng);
    Ok(run(graph, params, rng, opts))
}
