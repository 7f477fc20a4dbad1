//! The stochastic scheduler, protocol-layer composition, and the run loop
//! with stability detection and round tracking.
//!
//! Each step samples one edge uniformly at random and lets its endpoints
//! interact. All randomness for step `t` comes from a SplitMix64 stream
//! derived from `(seed, t)`, consumed in a fixed order: edge index (modulo
//! the edge count), `r_u`, `r_v` (53-bit uniforms for the endpoints as
//! stored in the edge list), then layer draws (for the colouring layer:
//! `colour_u`, `colour_v`, shared bit). The initiator is the endpoint with
//! the smaller `r` value.
//!
//! Stability is detected through per-layer *silence predicates*: a layer
//! "holds" when no possible interaction could change its state. The run
//! records, per layer, the first step at which the predicate holds and
//! never fails again; a configurable verification tail of extra steps past
//! the last first-hold guards against false positives.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::apps::{
    self, CountingState, MajorityEffect, MajorityState, Opinion, Token, TokenLedger,
};
use crate::coloring::{
    self, greedy_two_hop, palette_size, ColouringDraw, ColouringState, Colour, Stamp,
    DEFAULT_ALPHA,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDescriptor};
use crate::orientation::{
    self, marker_step, orientation_status, orientation_transition, orient_towards, MarkerState,
    OrientationState, OrientationStatus,
};
use crate::rng::{draw_bit, draw_initiator, draw_uniform_colour, SplitMix64};

// ------------------------------------------------------------- composition

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppKind {
    Leader,
    Majority,
    TwoColouring,
    Counting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Coloring,
    Orientation,
    App(AppKind),
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Coloring => "coloring",
            LayerKind::Orientation => "orientation",
            LayerKind::App(AppKind::Leader) => "leader",
            LayerKind::App(AppKind::Majority) => "majority",
            LayerKind::App(AppKind::TwoColouring) => "two-colour",
            LayerKind::App(AppKind::Counting) => "count",
        }
    }

    fn rank(self) -> u8 {
        match self {
            LayerKind::Coloring => 0,
            LayerKind::Orientation => 1,
            LayerKind::App(_) => 2,
        }
    }
}

/// An ordered list of protocol layers applied within each interaction,
/// lower layers first; upper layers read this step's post-update lower
/// state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolStack {
    pub name: String,
    layers: Vec<LayerKind>,
    pub alpha: usize,
}

impl ProtocolStack {
    /// Validates the wiring: layers in rank order (colouring below
    /// orientation below apps), no duplicates, and apps over a dynamic
    /// colouring require the orientation layer in between.
    pub fn compose(name: impl Into<String>, layers: Vec<LayerKind>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Composition("stack has no layers".into()));
        }
        for w in layers.windows(2) {
            if w[0].rank() > w[1].rank() {
                return Err(Error::Composition(format!(
                    "layer {} cannot read the higher layer {}",
                    w[1].name(),
                    w[0].name()
                )));
            }
        }
        for (i, &a) in layers.iter().enumerate() {
            if layers[i + 1..].contains(&a) {
                return Err(Error::Composition(format!("duplicate layer {}", a.name())));
            }
        }
        let has = |k: LayerKind| layers.contains(&k);
        let has_app = layers.iter().any(|l| matches!(l, LayerKind::App(_)));
        if has(LayerKind::Coloring) && has_app && !has(LayerKind::Orientation) {
            return Err(Error::Composition(
                "apps over a dynamic colouring need the orientation layer".into(),
            ));
        }
        Ok(ProtocolStack {
            name: name.into(),
            layers,
            alpha: DEFAULT_ALPHA,
        })
    }

    /// The named stacks exposed by the CLI. Stacks without the colouring
    /// (resp. orientation) layer run over a fixed greedy 2-hop colouring
    /// (resp. a pre-oriented tree).
    pub fn by_name(name: &str) -> Result<Self> {
        use AppKind::*;
        use LayerKind::*;
        let layers = match name {
            "coloring" => vec![Coloring],
            "orientation" => vec![Orientation],
            "leader" => vec![Orientation, App(Leader)],
            "majority" => vec![App(Majority)],
            "two-colour" => vec![Orientation, App(TwoColouring)],
            "count" => vec![Orientation, App(Counting)],
            "full" => vec![Coloring, Orientation, App(Majority)],
            other => return Err(Error::invalid(format!("unknown stack '{other}'"))),
        };
        Self::compose(name, layers)
    }

    pub fn layers(&self) -> &[LayerKind] {
        &self.layers
    }

    pub fn coloring_active(&self) -> bool {
        self.layers.contains(&LayerKind::Coloring)
    }

    pub fn orientation_active(&self) -> bool {
        self.layers.contains(&LayerKind::Orientation)
    }

    pub fn has_app(&self, app: AppKind) -> bool {
        self.layers.contains(&LayerKind::App(app))
    }

    fn needs_orientation_states(&self) -> bool {
        self.orientation_active() || self.layers.iter().any(|l| matches!(l, LayerKind::App(_)))
    }
}

// -------------------------------------------------------------- initial state

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Protocol-defined fresh states (worst-case colour-1 everywhere for
    /// the colouring layer; empty orientation; app inputs).
    Clean,
    /// Uniformly random states for every active layer (self-stabilisation
    /// starts). App input layers that have no meaningful random state
    /// (counting) start from their inputs.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MajorityInputs {
    AllA,
    AllB,
    /// Nodes alternate A/B by index parity (worst case for annihilation).
    Alternating,
    /// Nodes 0..k get A, the rest B.
    FirstA(usize),
    /// Explicit per-node opinions, indexed by node id.
    Custom(Vec<Opinion>),
}

impl MajorityInputs {
    pub fn opinion(&self, node: u32) -> Opinion {
        match self {
            MajorityInputs::AllA => Opinion::A,
            MajorityInputs::AllB => Opinion::B,
            MajorityInputs::Alternating => {
                if node % 2 == 0 {
                    Opinion::A
                } else {
                    Opinion::B
                }
            }
            MajorityInputs::FirstA(k) => {
                if (node as usize) < *k {
                    Opinion::A
                } else {
                    Opinion::B
                }
            }
            MajorityInputs::Custom(opinions) => opinions[node as usize],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Candidates {
    All,
    Nodes(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitSpec {
    pub mode: InitMode,
    pub majority_inputs: MajorityInputs,
    pub leader_candidates: Candidates,
    /// Root used to pre-orient the tree for stacks without the
    /// orientation layer.
    pub preorient_root: u32,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            mode: InitMode::Clean,
            majority_inputs: MajorityInputs::Alternating,
            leader_candidates: Candidates::All,
            preorient_root: 0,
        }
    }
}

// ------------------------------------------------------------- configuration

/// Full per-node state of a run: one slice per active layer, plus a colour
/// cache kept in sync with the colouring layer when that layer is dynamic.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub palette: usize,
    /// Current colour of every node; equals `colouring[v].colour` when the
    /// colouring layer is active, otherwise a fixed valid 2-hop colouring.
    pub colours: Vec<Colour>,
    pub colouring: Option<Vec<ColouringState>>,
    pub orientation: Option<Vec<OrientationState>>,
    pub leader: Option<Vec<bool>>,
    pub majority: Option<Vec<MajorityState>>,
    pub two_colour: Option<Vec<bool>>,
    pub counting: Option<Vec<CountingState>>,
}

impl Configuration {
    #[inline]
    pub fn colour(&self, v: u32) -> Colour {
        self.colours[v as usize]
    }

    /// Whether node `v` has identical state in both configurations,
    /// across every active layer.
    pub fn node_eq(&self, other: &Configuration, v: usize) -> bool {
        self.colours[v] == other.colours[v]
            && self.colouring.as_ref().map(|s| &s[v]) == other.colouring.as_ref().map(|s| &s[v])
            && self.orientation.as_ref().map(|s| &s[v])
                == other.orientation.as_ref().map(|s| &s[v])
            && self.leader.as_ref().map(|s| s[v]) == other.leader.as_ref().map(|s| s[v])
            && self.majority.as_ref().map(|s| s[v]) == other.majority.as_ref().map(|s| s[v])
            && self.two_colour.as_ref().map(|s| s[v]) == other.two_colour.as_ref().map(|s| s[v])
            && self.counting.as_ref().map(|s| s[v]) == other.counting.as_ref().map(|s| s[v])
    }
}

// -------------------------------------------------------------------- rounds

/// Tracks fair-schedule rounds: round k ends at the first step by which
/// every edge has been sampled at least once since round k−1 ended.
#[derive(Debug, Clone)]
pub struct RoundTracker {
    unseen: Vec<bool>,
    remaining: usize,
    boundaries: Vec<u64>,
}

impl RoundTracker {
    pub fn new(edge_count: usize) -> Self {
        RoundTracker {
            unseen: vec![true; edge_count],
            remaining: edge_count,
            boundaries: Vec::new(),
        }
    }

    pub fn advance(&mut self, edge: usize, t: u64) {
        if self.unseen[edge] {
            self.unseen[edge] = false;
            self.remaining -= 1;
            if self.remaining == 0 {
                self.boundaries.push(t);
                self.unseen.fill(true);
                self.remaining = self.unseen.len();
            }
        }
    }

    /// Number of rounds completed by step `t` inclusive.
    pub fn rounds_at(&self, t: u64) -> u64 {
        self.boundaries.partition_point(|&b| b <= t) as u64
    }

    pub fn completed(&self) -> u64 {
        self.boundaries.len() as u64
    }

    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }
}

// ------------------------------------------------------------------- records

/// Outcome of one run. `steps` maps each layer name to the first step at
/// which its silence predicate held and never failed again (None when the
/// cap was reached before the layer held).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub graph: GraphDescriptor,
    pub stack: String,
    pub seed: u64,
    pub steps: BTreeMap<String, Option<u64>>,
    pub rounds: u64,
    pub capped: bool,
    #[serde(skip)]
    pub wall_ms: u64,
    #[serde(skip)]
    pub summary: String,
}

impl RunRecord {
    /// The step at which the whole stack stabilised (max over layers).
    pub fn steps_to_stable(&self) -> Option<u64> {
        self.steps
            .values()
            .map(|&s| s)
            .collect::<Option<Vec<u64>>>()
            .map(|v| v.into_iter().max().unwrap_or(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// max(10 · n · diameter, 10^5) verification steps past first-hold.
    Default,
    Steps(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub step_cap: u64,
    pub tail: Tail,
}

impl RunSettings {
    pub fn for_graph(graph: &Graph) -> Self {
        RunSettings {
            step_cap: default_step_cap(graph.node_count()),
            tail: Tail::Default,
        }
    }
}

/// Default step cap: 50 · n² · ⌈log2 n⌉.
pub fn default_step_cap(n: usize) -> u64 {
    let n = n as u64;
    50 * n * n * ceil_log2(n)
}

fn ceil_log2(n: u64) -> u64 {
    if n <= 1 {
        1
    } else {
        (u64::BITS - (n - 1).leading_zeros()) as u64
    }
}

// ---------------------------------------------------------------- the runner

/// What one step did.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub t: u64,
    pub edge: usize,
    pub u: u32,
    pub v: u32,
    pub initiator: u32,
    pub recoloured: bool,
    /// Change flags aligned with the stack's layer list.
    pub layers_changed: [bool; MAX_LAYERS],
    pub majority_effect: Option<MajorityEffect>,
}

pub const MAX_LAYERS: usize = 6;

/// Per-layer silence bookkeeping: a cached per-edge quiescence bit plus a
/// count of non-quiescent edges, updated incrementally from the edges
/// whose quiescence can have changed this step.
#[derive(Debug, Clone)]
struct LayerTracker {
    layer: LayerKind,
    edge_ok: Vec<bool>,
    bad: usize,
    first_hold: Option<u64>,
    // orientation-only status census (0 = proper, 1 = weak, 2 = disoriented)
    edge_status: Vec<u8>,
    weak: usize,
    disoriented: usize,
}

pub struct Runner {
    graph: Graph,
    stack: ProtocolStack,
    config: Configuration,
    seed: u64,
    t: u64,
    trackers: Vec<LayerTracker>,
    rounds: RoundTracker,
    markers_enabled: bool,
    markers: Option<MarkerState>,
    ledger: Option<TokenLedger>,
    scratch_edges: Vec<usize>,
}

impl Runner {
    pub fn new(graph: Graph, stack: ProtocolStack, init: &InitSpec, seed: u64) -> Result<Self> {
        if graph.edge_count() == 0 {
            return Err(Error::NoEdges);
        }
        let n = graph.node_count();
        let delta = graph.max_degree();
        let palette = palette_size(stack.alpha, delta);
        let mut rng = SplitMix64::for_init(seed);

        let (colouring, colours) = if stack.coloring_active() {
            let states: Vec<ColouringState> = match init.mode {
                InitMode::Clean => (0..n).map(|_| ColouringState::clean(palette)).collect(),
                InitMode::Random => {
                    (0..n).map(|_| ColouringState::random(palette, &mut rng)).collect()
                }
            };
            let colours = states.iter().map(|s| s.colour).collect();
            (Some(states), colours)
        } else {
            (None, greedy_two_hop(&graph, palette)?)
        };

        let orientation = if stack.orientation_active() {
            Some(match init.mode {
                InitMode::Clean => (0..n).map(|_| OrientationState::clean(palette)).collect(),
                InitMode::Random => (0..n)
                    .map(|_| OrientationState::random(palette, &mut rng))
                    .collect(),
            })
        } else if stack.needs_orientation_states() {
            // pre-oriented tree for app-only stacks
            if init.preorient_root as usize >= n {
                return Err(Error::invalid("preorient root out of range"));
            }
            Some(orient_towards(&graph, &colours, palette, init.preorient_root))
        } else {
            None
        };

        let leader = stack.has_app(AppKind::Leader).then(|| match init.mode {
            InitMode::Clean => match &init.leader_candidates {
                Candidates::All => vec![true; n],
                Candidates::Nodes(nodes) => {
                    let mut v = vec![false; n];
                    for &x in nodes {
                        v[x as usize] = true;
                    }
                    v
                }
            },
            InitMode::Random => {
                let mut v: Vec<bool> = (0..n).map(|_| rng.next_below(2) == 1).collect();
                // the protocol needs at least one candidate to survive
                if !v.iter().any(|&b| b) {
                    v[0] = true;
                }
                v
            }
        });
        if let Some(l) = &leader {
            if !l.iter().any(|&b| b) {
                return Err(Error::invalid("leader election needs at least one candidate"));
            }
        }

        let majority = stack.has_app(AppKind::Majority).then(|| match init.mode {
            InitMode::Clean => (0..n as u32)
                .map(|v| MajorityState::from_input(init.majority_inputs.opinion(v)))
                .collect(),
            InitMode::Random => (0..n).map(|_| MajorityState::random(&mut rng)).collect(),
        });

        let two_colour = stack.has_app(AppKind::TwoColouring).then(|| match init.mode {
            InitMode::Clean => vec![false; n],
            InitMode::Random => (0..n).map(|_| rng.next_below(2) == 1).collect(),
        });

        // counting is only meaningful from its input configuration
        let counting = stack
            .has_app(AppKind::Counting)
            .then(|| vec![CountingState::one(); n]);

        let config = Configuration {
            palette,
            colours,
            colouring,
            orientation,
            leader,
            majority,
            two_colour,
            counting,
        };

        let m = graph.edge_count();
        let mut runner = Runner {
            trackers: stack
                .layers()
                .iter()
                .map(|&layer| LayerTracker {
                    layer,
                    edge_ok: vec![false; m],
                    bad: 0,
                    first_hold: None,
                    edge_status: if layer == LayerKind::Orientation {
                        vec![0; m]
                    } else {
                        Vec::new()
                    },
                    weak: 0,
                    disoriented: 0,
                })
                .collect(),
            rounds: RoundTracker::new(m),
            graph,
            stack,
            config,
            seed,
            t: 0,
            markers_enabled: false,
            markers: None,
            ledger: None,
            scratch_edges: Vec::new(),
        };
        runner.rescan_all();
        Ok(runner)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn stack(&self) -> &ProtocolStack {
        &self.stack
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn rounds(&self) -> &RoundTracker {
        &self.rounds
    }

    pub fn markers(&self) -> Option<&MarkerState> {
        self.markers.as_ref()
    }

    pub fn ledger(&self) -> Option<&TokenLedger> {
        self.ledger.as_ref()
    }

    /// Attach the lazy marker instrumentation: the identity marker/edge
    /// bijection is installed at the first step with no disoriented edge.
    pub fn enable_markers(&mut self) {
        self.markers_enabled = true;
        self.maybe_attach_markers();
    }

    /// Attach the token ledger, seeded from the current majority tokens.
    pub fn attach_ledger(&mut self) -> Result<()> {
        let tokens: Vec<Token> = self
            .config
            .majority
            .as_ref()
            .ok_or_else(|| Error::Instrumentation("no majority layer in stack".into()))?
            .iter()
            .map(|s| s.token)
            .collect();
        self.ledger = Some(TokenLedger::new(&tokens));
        Ok(())
    }

    /// First step at which layer `i`'s silence predicate held and has not
    /// failed since (step 0 = the initial configuration).
    pub fn first_hold(&self, i: usize) -> Option<u64> {
        self.trackers[i].first_hold
    }

    pub fn all_hold(&self) -> bool {
        self.trackers.iter().all(|tr| tr.bad == 0)
    }

    /// (proper, weak, disoriented) edge census, if the orientation layer
    /// is active.
    pub fn orientation_census(&self) -> Option<(usize, usize, usize)> {
        self.trackers
            .iter()
            .find(|tr| tr.layer == LayerKind::Orientation)
            .map(|tr| (self.graph.edge_count() - tr.weak - tr.disoriented, tr.weak, tr.disoriented))
    }

    fn maybe_attach_markers(&mut self) {
        if self.markers_enabled && self.markers.is_none() {
            let disoriented = self
                .config
                .orientation
                .as_ref()
                .map(|states| {
                    self.graph.edges().iter().any(|&e| {
                        orientation_status(&self.config.colours, states, e)
                            == OrientationStatus::Disoriented
                    })
                })
                .unwrap_or(true);
            if !disoriented {
                self.markers = Some(MarkerState::identity(self.graph.edge_count()));
            }
        }
    }

    /// One scheduler step. All randomness comes from the `(seed, t)`
    /// stream; only the sampled edge's endpoints may change.
    pub fn step(&mut self) -> Result<StepInfo> {
        self.t += 1;
        let t = self.t;
        let mut rng = SplitMix64::for_step(self.seed, t);
        let edge = rng.next_below(self.graph.edge_count() as u64) as usize;
        let (u, v) = self.graph.edge(edge);
        let r_u = rng.next_unit();
        let r_v = rng.next_unit();
        let initiator = draw_initiator(r_u, r_v, u, v);
        let draw = self.stack.coloring_active().then(|| ColouringDraw {
            colour_u: Colour(draw_uniform_colour(rng.next_unit(), self.config.palette) as u16),
            colour_v: Colour(draw_uniform_colour(rng.next_unit(), self.config.palette) as u16),
            bit: if draw_bit(rng.next_unit()) == 1 { Stamp::One } else { Stamp::Zero },
        });
        self.rounds.advance(edge, t);

        // marker process reads statuses *before* the orientation update
        self.maybe_attach_markers();
        if let (Some(markers), Some(states)) = (self.markers.as_mut(), &self.config.orientation) {
            marker_step(markers, &self.graph, &self.config.colours, states, edge)?;
        }

        let mut info = StepInfo {
            t,
            edge,
            u,
            v,
            initiator,
            recoloured: false,
            layers_changed: [false; MAX_LAYERS],
            majority_effect: None,
        };

        for (i, &layer) in self.stack.layers().iter().enumerate() {
            let changed = match layer {
                LayerKind::Coloring => {
                    let states = self.config.colouring.as_mut().unwrap();
                    let (su, sv) = pair_mut(states, u as usize, v as usize);
                    let recoloured = coloring::transition(su, sv, draw.unwrap());
                    info.recoloured = recoloured;
                    if recoloured {
                        self.config.colours[u as usize] = states[u as usize].colour;
                        self.config.colours[v as usize] = states[v as usize].colour;
                    }
                    true // stamps always change
                }
                LayerKind::Orientation => {
                    let states = self.config.orientation.as_mut().unwrap();
                    let (resp,) = (if initiator == u { v } else { u },);
                    let (si, sr) = pair_mut(states, initiator as usize, resp as usize);
                    orientation_transition(
                        self.config.colours[initiator as usize],
                        si,
                        self.config.colours[resp as usize],
                        sr,
                    )
                }
                LayerKind::App(app) => {
                    let dir = self.edge_direction(edge);
                    match (app, dir) {
                        (_, None) => false,
                        (AppKind::Leader, Some((c, p))) => {
                            let tokens = self.config.leader.as_mut().unwrap();
                            let (tc, tp) = pair_mut(tokens, c as usize, p as usize);
                            apps::leader_transition(tc, tp)
                        }
                        (AppKind::Majority, Some((c, p))) => {
                            let states = self.config.majority.as_mut().unwrap();
                            let (sc, sp) = pair_mut(states, c as usize, p as usize);
                            let effect = apps::majority_transition(sc, sp);
                            info.majority_effect = Some(effect);
                            if let Some(ledger) = self.ledger.as_mut() {
                                ledger.step(c, p, effect)?;
                            }
                            effect.changed
                        }
                        (AppKind::TwoColouring, Some((c, p))) => {
                            let bits = self.config.two_colour.as_mut().unwrap();
                            let parent_bit = bits[p as usize];
                            apps::two_colouring_transition(&mut bits[c as usize], parent_bit)
                        }
                        (AppKind::Counting, Some((c, p))) => {
                            let states = self.config.counting.as_mut().unwrap();
                            let (sc, sp) = pair_mut(states, c as usize, p as usize);
                            apps::counting_transition(sc, sp)
                        }
                    }
                }
            };
            info.layers_changed[i] = changed;
        }

        self.update_trackers(u, v, t);
        Ok(info)
    }

    /// The child→parent direction of an edge per the current orientation
    /// states; None when the edge is disoriented (apps do nothing then).
    fn edge_direction(&self, edge: usize) -> Option<(u32, u32)> {
        let states = self.config.orientation.as_ref()?;
        match orientation_status(&self.config.colours, states, self.graph.edge(edge)) {
            OrientationStatus::Proper { from, to } | OrientationStatus::Weak { from, to } => {
                Some((from, to))
            }
            OrientationStatus::Disoriented => None,
        }
    }

    /// Quiescence of one edge under one layer: no interaction on this edge
    /// could change that layer's state.
    fn edge_ok(&self, layer: LayerKind, edge: usize) -> (bool, u8) {
        let e = self.graph.edge(edge);
        match layer {
            LayerKind::Coloring => {
                let states = self.config.colouring.as_ref().unwrap();
                (!coloring::classify_edge(&self.graph, states, e).is_conflict(), 0)
            }
            LayerKind::Orientation => {
                let states = self.config.orientation.as_ref().unwrap();
                match orientation_status(&self.config.colours, states, e) {
                    OrientationStatus::Proper { .. } => (true, 0),
                    OrientationStatus::Weak { .. } => (false, 1),
                    OrientationStatus::Disoriented => (false, 2),
                }
            }
            LayerKind::App(app) => {
                let ok = match self.edge_direction(edge) {
                    None => true,
                    Some((c, p)) => match app {
                        AppKind::Leader => !self.config.leader.as_ref().unwrap()[c as usize],
                        AppKind::Majority => {
                            let states = self.config.majority.as_ref().unwrap();
                            let mut sc = states[c as usize];
                            let mut sp = states[p as usize];
                            !apps::majority_transition(&mut sc, &mut sp).changed
                        }
                        AppKind::TwoColouring => {
                            let bits = self.config.two_colour.as_ref().unwrap();
                            bits[c as usize] != bits[p as usize]
                        }
                        AppKind::Counting => {
                            let states = self.config.counting.as_ref().unwrap();
                            let mut sc = states[c as usize];
                            let mut sp = states[p as usize];
                            !apps::counting_transition(&mut sc, &mut sp)
                        }
                    },
                };
                (ok, 0)
            }
        }
    }

    fn rescan_all(&mut self) {
        for i in 0..self.trackers.len() {
            let layer = self.trackers[i].layer;
            let mut bad = 0;
            let (mut weak, mut disoriented) = (0, 0);
            for edge in 0..self.graph.edge_count() {
                let (ok, status) = self.edge_ok(layer, edge);
                self.trackers[i].edge_ok[edge] = ok;
                if !ok {
                    bad += 1;
                }
                if layer == LayerKind::Orientation {
                    self.trackers[i].edge_status[edge] = status;
                    match status {
                        1 => weak += 1,
                        2 => disoriented += 1,
                        _ => {}
                    }
                }
            }
            let tr = &mut self.trackers[i];
            tr.bad = bad;
            tr.weak = weak;
            tr.disoriented = disoriented;
            tr.first_hold = (bad == 0).then_some(self.t);
        }
    }

    /// Re-evaluate quiescence on every edge it can have changed for: edges
    /// incident to the closed neighbourhoods of u and v for the colouring
    /// layer (conflicts look two hops out), edges incident to u or v for
    /// all other layers.
    fn update_trackers(&mut self, u: u32, v: u32, t: u64) {
        let mut narrow = std::mem::take(&mut self.scratch_edges);
        narrow.clear();
        narrow.extend(self.graph.incident_edges(u).iter().map(|&e| e as usize));
        narrow.extend(self.graph.incident_edges(v).iter().map(|&e| e as usize));
        for i in 0..self.trackers.len() {
            let layer = self.trackers[i].layer;
            if layer == LayerKind::Coloring {
                for x in [u, v] {
                    for k in 0..self.graph.neighbours(x).len() {
                        let w = self.graph.neighbours(x)[k];
                        for j in 0..self.graph.incident_edges(w).len() {
                            let edge = self.graph.incident_edges(w)[j] as usize;
                            self.refresh_edge(i, edge, t);
                        }
                    }
                    for k in 0..self.graph.incident_edges(x).len() {
                        let edge = self.graph.incident_edges(x)[k] as usize;
                        self.refresh_edge(i, edge, t);
                    }
                }
            } else {
                for k in 0..narrow.len() {
                    self.refresh_edge(i, narrow[k], t);
                }
            }
            let tr = &mut self.trackers[i];
            if tr.bad == 0 {
                if tr.first_hold.is_none() {
                    tr.first_hold = Some(t);
                }
            } else {
                tr.first_hold = None;
            }
        }
        self.scratch_edges = narrow;
    }

    fn refresh_edge(&mut self, tracker: usize, edge: usize, _t: u64) {
        let layer = self.trackers[tracker].layer;
        let (ok, status) = self.edge_ok(layer, edge);
        let tr = &mut self.trackers[tracker];
        if tr.edge_ok[edge] != ok {
            tr.edge_ok[edge] = ok;
            if ok {
                tr.bad -= 1;
            } else {
                tr.bad += 1;
            }
        }
        if layer == LayerKind::Orientation {
            let old = tr.edge_status[edge];
            if old != status {
                match old {
                    1 => tr.weak -= 1,
                    2 => tr.disoriented -= 1,
                    _ => {}
                }
                match status {
                    1 => tr.weak += 1,
                    2 => tr.disoriented += 1,
                    _ => {}
                }
                tr.edge_status[edge] = status;
            }
        }
    }

    /// Runs until every layer's silence predicate has held for the whole
    /// verification tail, or until `step_cap` pre-hold steps have elapsed.
    pub fn run(&mut self, descriptor: &GraphDescriptor, settings: RunSettings) -> Result<RunRecord> {
        self.run_inner(descriptor, settings, None)
    }

    /// As `run`, writing a JSONL trace line per step (and, at `Full`
    /// level, per-layer summary lines every `sample_every` steps).
    pub fn run_traced(
        &mut self,
        descriptor: &GraphDescriptor,
        settings: RunSettings,
        writer: &mut dyn Write,
        trace: TraceConfig,
    ) -> Result<RunRecord> {
        if trace.level == TraceLevel::Full {
            self.enable_markers();
        }
        self.run_inner(descriptor, settings, Some((writer, trace)))
    }

    fn run_inner(
        &mut self,
        descriptor: &GraphDescriptor,
        settings: RunSettings,
        mut trace: Option<(&mut dyn Write, TraceConfig)>,
    ) -> Result<RunRecord> {
        let started = std::time::Instant::now();
        let tail = match settings.tail {
            Tail::Steps(k) => k,
            Tail::Default => {
                let d = self.graph.diameter()? as u64;
                (10 * self.graph.node_count() as u64 * d).max(100_000)
            }
        };
        let capped = loop {
            if self.all_hold() {
                let h = self
                    .trackers
                    .iter()
                    .map(|tr| tr.first_hold.unwrap())
                    .max()
                    .unwrap_or(0);
                if self.t >= h + tail {
                    break false;
                }
            } else if self.t >= settings.step_cap {
                break true;
            }
            let info = self.step()?;
            if let Some((writer, cfg)) = trace.as_mut() {
                self.write_trace(writer, *cfg, &info)?;
            }
        };

        let steps: BTreeMap<String, Option<u64>> = self
            .stack
            .layers()
            .iter()
            .zip(&self.trackers)
            .map(|(l, tr)| (l.name().to_string(), tr.first_hold))
            .collect();
        let stable_at = steps.values().copied().collect::<Option<Vec<u64>>>();
        let rounds = match &stable_at {
            Some(v) => self.rounds.rounds_at(v.iter().copied().max().unwrap_or(0)),
            None => self.rounds.completed(),
        };
        Ok(RunRecord {
            graph: descriptor.clone(),
            stack: self.stack.name.clone(),
            seed: self.seed,
            steps,
            rounds,
            capped,
            wall_ms: started.elapsed().as_millis() as u64,
            summary: self.summary(),
        })
    }

    fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(states) = &self.config.orientation {
            if let Ok(root) = orientation::root_of(&self.graph, &self.config.colours, states) {
                parts.push(format!("root={root}"));
            }
        }
        if let Some(tokens) = &self.config.leader {
            let held: Vec<String> = tokens
                .iter()
                .enumerate()
                .filter(|(_, &t)| t)
                .map(|(v, _)| v.to_string())
                .collect();
            parts.push(format!("leaders={}", held.join("+")));
        }
        if let Some(states) = &self.config.majority {
            let outs: Vec<&str> = states
                .iter()
                .map(|s| match s.output {
                    Opinion::A => "A",
                    Opinion::B => "B",
                })
                .collect();
            if outs.windows(2).all(|w| w[0] == w[1]) {
                parts.push(format!("output={}", outs[0]));
            } else {
                parts.push("output=mixed".to_string());
            }
        }
        if let Some(states) = &self.config.counting {
            let min_bmax = states.iter().map(|s| s.broadcast_max).min().unwrap_or(0);
            parts.push(format!("count={min_bmax}"));
        }
        parts.join(";")
    }

    fn write_trace(
        &self,
        writer: &mut dyn Write,
        cfg: TraceConfig,
        info: &StepInfo,
    ) -> Result<()> {
        let changed: Vec<&str> = self
            .stack
            .layers()
            .iter()
            .enumerate()
            .filter(|&(i, _)| info.layers_changed[i])
            .map(|(_, l)| l.name())
            .collect();
        writeln!(
            writer,
            "{}",
            serde_json::json!({"t": info.t, "edge": [info.u, info.v], "layers_changed": changed})
        )?;
        if cfg.level == TraceLevel::Full && info.t % cfg.sample_every == 0 {
            self.write_layer_trace(writer, info.t)?;
        }
        Ok(())
    }

    fn write_layer_trace(&self, writer: &mut dyn Write, t: u64) -> Result<()> {
        if let Some((proper, weak, disoriented)) = self.orientation_census() {
            let max_potential = match (&self.markers, &self.config.orientation) {
                (Some(m), Some(states)) if disoriented == 0 => {
                    orientation::potential(&self.graph, &self.config.colours, states, m)?
                        .into_iter()
                        .max()
                        .unwrap_or(0)
                }
                _ => 0,
            };
            writeln!(
                writer,
                "{}",
                serde_json::json!({"t": t, "disoriented": disoriented, "weak": weak,
                    "proper": proper, "max_potential": max_potential})
            )?;
        }
        if let Some(states) = &self.config.majority {
            let count = |tok: Token| states.iter().filter(|s| s.token == tok).count();
            let outputs_a = states.iter().filter(|s| s.output == Opinion::A).count();
            writeln!(
                writer,
                "{}",
                serde_json::json!({"t": t, "tokens_A": count(Token::A), "tokens_B": count(Token::B),
                    "tokens_C": count(Token::C), "outputs_A": outputs_a})
            )?;
        }
        if let Some(tokens) = &self.config.leader {
            let held = tokens.iter().filter(|&&b| b).count();
            writeln!(writer, "{}", serde_json::json!({"t": t, "tokens": held}))?;
        }
        if let Some(states) = &self.config.counting {
            let sum: u64 = states.iter().map(|s| s.counter).sum();
            let min_bmax = states.iter().map(|s| s.broadcast_max).min().unwrap_or(0);
            writeln!(
                writer,
                "{}",
                serde_json::json!({"t": t, "sum": sum, "max_broadcast_min": min_bmax})
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceLevel {
    Light,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceConfig {
    pub level: TraceLevel,
    pub sample_every: u64,
}

/// Convenience wrapper: build the graph from its descriptor, run once.
pub fn run_single(
    descriptor: &GraphDescriptor,
    stack: &ProtocolStack,
    init: &InitSpec,
    seed: u64,
    settings: RunSettings,
) -> Result<RunRecord> {
    let graph = descriptor.build()?;
    let mut runner = Runner::new(graph, stack.clone(), init, seed)?;
    runner.run(descriptor, settings)
}

fn pair_mut<T>(slice: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    debug_assert_ne!(i, j);
    if i < j {
        let (lo, hi) = slice.split_at_mut(j);
        (&mut lo[i], &mut hi[0])
    } else {
        let (lo, hi) = slice.split_at_mut(i);
        (&mut hi[0], &mut lo[j])
    }
}
