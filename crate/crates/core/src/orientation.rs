//! Self-stabilising tree orientation over a 2-hop coloured tree, plus the
//! marker / potential instrumentation used to measure its convergence.
//!
//! Each node stores a `parent` colour (or none) and a set of `children`
//! colours. An edge {u,v} is *oriented* u→v when `parent(v) != colour(u)`,
//! `colour(v) ∉ children(u)` and `colour(u) ∈ children(v)`; it is *properly*
//! oriented when additionally `parent(u) = colour(v)`. The transition repairs
//! any edge that is not properly oriented, and under a valid 2-hop colouring
//! the repaired orientations converge to a single rooted tree.

use crate::coloring::Colour;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::SplitMix64;

/// Set of colours stored as a bitset over the palette.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColourSet {
    bits: Box<[u64]>,
}

impl ColourSet {
    pub fn empty(palette: usize) -> Self {
        ColourSet {
            bits: vec![0; palette.div_ceil(64)].into_boxed_slice(),
        }
    }

    /// Each palette colour included independently with probability 1/2.
    pub fn random(palette: usize, rng: &mut SplitMix64) -> Self {
        let mut set = Self::empty(palette);
        for c in 1..=palette as u16 {
            if rng.next_below(2) == 1 {
                set.insert(Colour(c));
            }
        }
        set
    }

    #[inline]
    pub fn contains(&self, c: Colour) -> bool {
        let i = c.index();
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, c: Colour) {
        let i = c.index();
        self.bits[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, c: Colour) {
        let i = c.index();
        self.bits[i / 64] &= !(1 << (i % 64));
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrientationState {
    pub parent: Option<Colour>,
    pub children: ColourSet,
}

impl OrientationState {
    /// Clean start: no parent, no children.
    pub fn clean(palette: usize) -> Self {
        OrientationState {
            parent: None,
            children: ColourSet::empty(palette),
        }
    }

    /// Arbitrary state for self-stabilisation starts.
    pub fn random(palette: usize, rng: &mut SplitMix64) -> Self {
        let p = rng.next_below(palette as u64 + 1);
        OrientationState {
            parent: (p > 0).then(|| Colour(p as u16)),
            children: ColourSet::random(palette, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrientationStatus {
    Proper { from: u32, to: u32 },
    Weak { from: u32, to: u32 },
    Disoriented,
}

impl OrientationStatus {
    #[inline]
    pub fn is_proper(self) -> bool {
        matches!(self, OrientationStatus::Proper { .. })
    }
}

#[inline]
fn oriented(cu: Colour, su: &OrientationState, cv: Colour, sv: &OrientationState) -> bool {
    sv.parent != Some(cu) && !su.children.contains(cv) && sv.children.contains(cu)
}

/// Classifies edge {u,v}. At most one direction can be oriented because
/// u→v needs colour(v) ∉ children(u) while v→u needs the opposite.
pub fn orientation_status(
    colours: &[Colour],
    states: &[OrientationState],
    edge: (u32, u32),
) -> OrientationStatus {
    let (u, v) = edge;
    let (cu, cv) = (colours[u as usize], colours[v as usize]);
    let (su, sv) = (&states[u as usize], &states[v as usize]);
    if oriented(cu, su, cv, sv) {
        if su.parent == Some(cv) {
            OrientationStatus::Proper { from: u, to: v }
        } else {
            OrientationStatus::Weak { from: u, to: v }
        }
    } else if oriented(cv, sv, cu, su) {
        if sv.parent == Some(cu) {
            OrientationStatus::Proper { from: v, to: u }
        } else {
            OrientationStatus::Weak { from: v, to: u }
        }
    } else {
        OrientationStatus::Disoriented
    }
}

/// Makes x a child of y: after this the edge is properly oriented x→y.
fn set_edge_orientation(
    cx: Colour,
    sx: &mut OrientationState,
    cy: Colour,
    sy: &mut OrientationState,
) {
    sx.parent = Some(cy);
    sx.children.remove(cy);
    sy.children.insert(cx);
    if sy.parent == Some(cx) {
        sy.parent = None;
    }
}

/// One interaction on edge {u,v} with initiator u. Returns whether any
/// state changed (the edge was not already properly oriented).
pub fn orientation_transition(
    colour_u: Colour,
    state_u: &mut OrientationState,
    colour_v: Colour,
    state_v: &mut OrientationState,
) -> bool {
    let proper = (oriented(colour_u, state_u, colour_v, state_v)
        && state_u.parent == Some(colour_v))
        || (oriented(colour_v, state_v, colour_u, state_u) && state_v.parent == Some(colour_u));
    if proper {
        return false;
    }
    if state_u.children.contains(colour_v) {
        set_edge_orientation(colour_u, state_u, colour_v, state_v);
    } else {
        set_edge_orientation(colour_v, state_v, colour_u, state_u);
    }
    true
}

/// True iff every edge is properly oriented; then the parent pointers form
/// a directed tree with a unique root and no interaction changes anything.
pub fn stable_predicate(graph: &Graph, colours: &[Colour], states: &[OrientationState]) -> bool {
    graph
        .edges()
        .iter()
        .all(|&e| orientation_status(colours, states, e).is_proper())
}

/// The unique node with no properly oriented outgoing edge.
pub fn root_of(graph: &Graph, colours: &[Colour], states: &[OrientationState]) -> Result<u32> {
    let mut has_outgoing = vec![false; graph.node_count()];
    for &e in graph.edges() {
        match orientation_status(colours, states, e) {
            OrientationStatus::Proper { from, .. } => has_outgoing[from as usize] = true,
            _ => return Err(Error::UnstableOrientation),
        }
    }
    let mut roots = (0..graph.node_count() as u32).filter(|&v| !has_outgoing[v as usize]);
    match (roots.next(), roots.next()) {
        (Some(r), None) => Ok(r),
        _ => Err(Error::UnstableOrientation),
    }
}

/// Constructs the stable configuration in which every edge points towards
/// `root`. Requires a valid 2-hop colouring for the result to be stable.
pub fn orient_towards(
    graph: &Graph,
    colours: &[Colour],
    palette: usize,
    root: u32,
) -> Vec<OrientationState> {
    let mut states: Vec<OrientationState> = (0..graph.node_count())
        .map(|_| OrientationState::clean(palette))
        .collect();
    let dist = graph.bfs_distances(root);
    for &(a, b) in graph.edges() {
        // child is the endpoint further from the root
        let (child, parent) = if dist[a as usize] > dist[b as usize] {
            (a, b)
        } else {
            (b, a)
        };
        states[child as usize].parent = Some(colours[parent as usize]);
        states[parent as usize].children.insert(colours[child as usize]);
    }
    states
}

/// Marker-to-edge bijection used to track how orientation repairs move
/// through the tree. Marker ids coincide with edge ids initially.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerState {
    marker_to_edge: Vec<usize>,
    edge_to_marker: Vec<usize>,
}

impl MarkerState {
    pub fn identity(edge_count: usize) -> Self {
        MarkerState {
            marker_to_edge: (0..edge_count).collect(),
            edge_to_marker: (0..edge_count).collect(),
        }
    }

    #[inline]
    pub fn edge_of(&self, marker: usize) -> usize {
        self.marker_to_edge[marker]
    }

    #[inline]
    pub fn marker_on(&self, edge: usize) -> usize {
        self.edge_to_marker[edge]
    }

    pub fn marker_count(&self) -> usize {
        self.marker_to_edge.len()
    }

    fn swap_edges(&mut self, e1: usize, e2: usize) {
        let (m1, m2) = (self.edge_to_marker[e1], self.edge_to_marker[e2]);
        self.edge_to_marker.swap(e1, e2);
        self.marker_to_edge[m1] = e2;
        self.marker_to_edge[m2] = e1;
    }
}

/// Advances the marker process for one step. `states` must be the
/// configuration *before* the orientation transition ran on `sampled`:
/// if that edge was weakly oriented u→v and v had a properly oriented
/// outgoing edge e', the markers on the two edges swap; otherwise nothing
/// moves.
pub fn marker_step(
    markers: &mut MarkerState,
    graph: &Graph,
    colours: &[Colour],
    states_before: &[OrientationState],
    sampled: usize,
) -> Result<()> {
    let edge = graph.edge(sampled);
    let (_, head) = match orientation_status(colours, states_before, edge) {
        OrientationStatus::Weak { from, to } => (from, to),
        _ => return Ok(()),
    };
    let mut partner = None;
    for &e in graph.incident_edges(head) {
        let e = e as usize;
        if e == sampled {
            continue;
        }
        if let OrientationStatus::Proper { from, .. } =
            orientation_status(colours, states_before, graph.edge(e))
        {
            if from == head {
                if partner.is_some() {
                    return Err(Error::Instrumentation(format!(
                        "node {head} has two properly oriented outgoing edges"
                    )));
                }
                partner = Some(e);
            }
        }
    }
    if let Some(e) = partner {
        markers.swap_edges(sampled, e);
    }
    Ok(())
}

/// Potential of each marker: 0 on a properly oriented edge, else 1 plus the
/// eccentricity of the weak edge's head within its component of the tree
/// minus that edge. Errors if any edge is disoriented.
pub fn potential(
    graph: &Graph,
    colours: &[Colour],
    states: &[OrientationState],
    markers: &MarkerState,
) -> Result<Vec<u64>> {
    let mut phi = vec![0u64; markers.marker_count()];
    for marker in 0..markers.marker_count() {
        let e = markers.edge_of(marker);
        let head = match orientation_status(colours, states, graph.edge(e)) {
            OrientationStatus::Proper { .. } => continue,
            OrientationStatus::Weak { to, .. } => to,
            OrientationStatus::Disoriented => {
                return Err(Error::Instrumentation(format!("edge {e} is disoriented")))
            }
        };
        phi[marker] = 1 + eccentricity_without_edge(graph, head, e);
    }
    Ok(phi)
}

/// BFS eccentricity of `start` in its component of the graph minus edge
/// `removed`.
fn eccentricity_without_edge(graph: &Graph, start: u32, removed: usize) -> u64 {
    let (a, b) = graph.edge(removed);
    let mut dist = vec![u64::MAX; graph.node_count()];
    dist[start as usize] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    let mut ecc = 0;
    while let Some(x) = queue.pop_front() {
        for &y in graph.neighbours(x) {
            if (x, y) == (a, b) || (x, y) == (b, a) {
                continue;
            }
            if dist[y as usize] == u64::MAX {
                dist[y as usize] = dist[x as usize] + 1;
                ecc = ecc.max(dist[y as usize]);
                queue.push_back(y);
            }
        }
    }
    ecc
}
