//! Self-stabilising 2-hop colouring and its conflict instrumentation.
//!
//! Each node carries a colour from the palette `{1..alpha * delta^2}` and a
//! stamp vector indexed by the palette. An interacting pair with a stamp
//! conflict resamples both colours and clears both stamp vectors; every
//! interaction then writes one shared random bit into the stamp entries at
//! the partner's colour. Once no edge has a stamp or colour conflict, no
//! colour can ever change again.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::SplitMix64;

/// Smallest integer palette factor that keeps the per-recolouring conflict
/// drift positive; exposed as a knob for experiments probing smaller
/// palettes.
pub const DEFAULT_ALPHA: usize = 7;

/// 1-based colour index into the palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Colour(pub u16);

impl Colour {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Stamp {
    Bot,
    Zero,
    One,
}

/// Palette size for a degree bound: `alpha * delta^2`.
pub fn palette_size(alpha: usize, delta: usize) -> usize {
    alpha * delta * delta
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColouringState {
    pub colour: Colour,
    pub stamp: Box<[Stamp]>,
}

impl ColouringState {
    /// Worst-case clean start: colour 1, all stamps cleared.
    pub fn clean(palette: usize) -> Self {
        ColouringState {
            colour: Colour(1),
            stamp: vec![Stamp::Bot; palette].into_boxed_slice(),
        }
    }

    /// Arbitrary state for self-stabilisation starts.
    pub fn random(palette: usize, rng: &mut SplitMix64) -> Self {
        let colour = Colour(rng.next_below(palette as u64) as u16 + 1);
        let stamp = (0..palette)
            .map(|_| match rng.next_below(3) {
                0 => Stamp::Bot,
                1 => Stamp::Zero,
                _ => Stamp::One,
            })
            .collect();
        ColouringState { colour, stamp }
    }

    #[inline]
    pub fn stamp_at(&self, c: Colour) -> Stamp {
        self.stamp[c.index()]
    }
}

/// Random inputs consumed by one colouring interaction, in draw order.
#[derive(Debug, Clone, Copy)]
pub struct ColouringDraw {
    pub colour_u: Colour,
    pub colour_v: Colour,
    pub bit: Stamp,
}

/// Both stamp entries at each other's colour are set and disagree.
#[inline]
pub fn has_stamp_conflict(u: &ColouringState, v: &ColouringState) -> bool {
    let su = u.stamp_at(v.colour);
    let sv = v.stamp_at(u.colour);
    su != Stamp::Bot && sv != Stamp::Bot && su != sv
}

/// One interaction of the colouring protocol. Returns whether the
/// recolouring branch fired.
pub fn transition(u: &mut ColouringState, v: &mut ColouringState, draw: ColouringDraw) -> bool {
    debug_assert!(matches!(draw.bit, Stamp::Zero | Stamp::One));
    let recoloured = has_stamp_conflict(u, v);
    if recoloured {
        u.colour = draw.colour_u;
        v.colour = draw.colour_v;
        u.stamp.fill(Stamp::Bot);
        v.stamp.fill(Stamp::Bot);
    }
    u.stamp[v.colour.index()] = draw.bit;
    v.stamp[u.colour.index()] = draw.bit;
    recoloured
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConflictClassification {
    pub stamp_conflict: bool,
    pub colour_conflict: bool,
}

impl ConflictClassification {
    #[inline]
    pub fn is_conflict(self) -> bool {
        self.stamp_conflict || self.colour_conflict
    }
}

/// An edge has a colour conflict iff it lies on a length-2 path whose
/// endpoints share a colour.
pub fn has_colour_conflict(graph: &Graph, states: &[ColouringState], u: u32, v: u32) -> bool {
    let cu = states[u as usize].colour;
    let cv = states[v as usize].colour;
    graph
        .neighbours(v)
        .iter()
        .any(|&w| w != u && states[w as usize].colour == cu)
        || graph
            .neighbours(u)
            .iter()
            .any(|&w| w != v && states[w as usize].colour == cv)
}

pub fn classify_edge(
    graph: &Graph,
    states: &[ColouringState],
    edge: (u32, u32),
) -> ConflictClassification {
    let (u, v) = edge;
    ConflictClassification {
        stamp_conflict: has_stamp_conflict(&states[u as usize], &states[v as usize]),
        colour_conflict: has_colour_conflict(graph, states, u, v),
    }
}

/// The conflict-edge set as edge ids.
pub fn conflict_edges(graph: &Graph, states: &[ColouringState]) -> BTreeSet<usize> {
    graph
        .edges()
        .iter()
        .enumerate()
        .filter(|&(_, &e)| classify_edge(graph, states, e).is_conflict())
        .map(|(id, _)| id)
        .collect()
}

/// True iff the conflict-edge set is empty. When true, the colour map is a
/// valid 2-hop colouring and no future interaction can change any colour.
pub fn stable_predicate(graph: &Graph, states: &[ColouringState]) -> bool {
    graph
        .edges()
        .iter()
        .all(|&e| !classify_edge(graph, states, e).is_conflict())
}

/// Builds a balanced path-extension function over the colour-conflict
/// edges: each image `f(e)` shares the middle node of a conflict path with
/// `e`, and no edge has more than two preimages.
///
/// Orientation picks the endpoint witnessing a conflict path as the middle
/// node (smaller node id on ties); the extension applies the cyclic
/// successor among the middle node's same-coloured neighbours, ordered by
/// node id.
pub fn build_path_extension(
    graph: &Graph,
    states: &[ColouringState],
) -> BTreeMap<usize, usize> {
    let mut edge_id = BTreeMap::new();
    for (id, &(u, v)) in graph.edges().iter().enumerate() {
        edge_id.insert((u.min(v), u.max(v)), id);
    }
    let witnesses = |tail: u32, mid: u32| -> bool {
        let c = states[tail as usize].colour;
        graph
            .neighbours(mid)
            .iter()
            .any(|&w| w != tail && states[w as usize].colour == c)
    };
    let mut f = BTreeMap::new();
    for (id, &(a, b)) in graph.edges().iter().enumerate() {
        if !has_colour_conflict(graph, states, a, b) {
            continue;
        }
        let via_b = witnesses(a, b);
        let via_a = witnesses(b, a);
        let (tail, mid) = match (via_b, via_a) {
            (true, true) => {
                if a < b {
                    (b, a)
                } else {
                    (a, b)
                }
            }
            (true, false) => (a, b),
            (false, true) => (b, a),
            (false, false) => unreachable!("colour-conflict edge without a conflict path"),
        };
        let c = states[tail as usize].colour;
        let mut same: Vec<u32> = graph
            .neighbours(mid)
            .iter()
            .copied()
            .filter(|&w| states[w as usize].colour == c)
            .collect();
        same.sort_unstable();
        let pos = same.iter().position(|&w| w == tail).expect("tail adjacent to mid");
        let next = same[(pos + 1) % same.len()];
        let image = edge_id[&(mid.min(next), mid.max(next))];
        f.insert(id, image);
    }
    f
}

/// Deterministic valid 2-hop colouring, used as the fixed lower layer when
/// the colouring protocol itself is not part of the stack.
pub fn greedy_two_hop(graph: &Graph, palette: usize) -> Result<Vec<Colour>> {
    let n = graph.node_count();
    let mut colours: Vec<Option<Colour>> = vec![None; n];
    for v in 0..n as u32 {
        let mut taken = BTreeSet::new();
        // colours of the other neighbours of each neighbour of v
        for &u in graph.neighbours(v) {
            for &w in graph.neighbours(u) {
                if w != v {
                    if let Some(c) = colours[w as usize] {
                        taken.insert(c);
                    }
                }
            }
        }
        let c = (1..=palette as u16)
            .map(Colour)
            .find(|c| !taken.contains(c))
            .ok_or_else(|| Error::invalid(format!("palette {palette} too small for graph")))?;
        colours[v as usize] = Some(c);
    }
    Ok(colours.into_iter().map(|c| c.unwrap()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        generate_balanced_binary_tree, generate_path, generate_random_bounded_degree_tree,
        generate_star, is_valid_two_hop_colouring, Graph,
    };

    fn state(palette: usize, colour: u16) -> ColouringState {
        let mut s = ColouringState::clean(palette);
        s.colour = Colour(colour);
        s
    }

    #[test]
    fn recolouring_fires_on_stamp_conflict() {
        let palette = 7;
        let mut u = state(palette, 1);
        let mut v = state(palette, 2);
        u.stamp[Colour(2).index()] = Stamp::Zero;
        v.stamp[Colour(1).index()] = Stamp::One;
        let draw = ColouringDraw {
            colour_u: Colour(5),
            colour_v: Colour(3),
            bit: Stamp::One,
        };
        assert!(transition(&mut u, &mut v, draw));
        assert_eq!(u.colour, Colour(5));
        assert_eq!(v.colour, Colour(3));
        // exactly one non-bot entry each, both holding the shared bit
        let non_bot =
            |s: &ColouringState| s.stamp.iter().filter(|&&x| x != Stamp::Bot).count();
        assert_eq!(non_bot(&u), 1);
        assert_eq!(non_bot(&v), 1);
        assert_eq!(u.stamp_at(Colour(3)), Stamp::One);
        assert_eq!(v.stamp_at(Colour(5)), Stamp::One);
    }

    #[test]
    fn bot_stamp_never_triggers_recolouring() {
        let palette = 7;
        let mut u = state(palette, 1);
        let mut v = state(palette, 2);
        v.stamp[Colour(1).index()] = Stamp::One; // u's entry stays bot
        let draw = ColouringDraw {
            colour_u: Colour(6),
            colour_v: Colour(6),
            bit: Stamp::Zero,
        };
        assert!(!transition(&mut u, &mut v, draw));
        assert_eq!(u.colour, Colour(1));
        assert_eq!(v.colour, Colour(2));
        assert_eq!(u.stamp_at(Colour(2)), Stamp::Zero);
        assert_eq!(v.stamp_at(Colour(1)), Stamp::Zero);
    }

    #[test]
    fn equal_stamps_are_no_conflict() {
        let palette = 7;
        let mut u = state(palette, 1);
        let mut v = state(palette, 2);
        u.stamp[Colour(2).index()] = Stamp::One;
        v.stamp[Colour(1).index()] = Stamp::One;
        let draw = ColouringDraw {
            colour_u: Colour(4),
            colour_v: Colour(4),
            bit: Stamp::Zero,
        };
        assert!(!transition(&mut u, &mut v, draw));
        assert_eq!(u.stamp_at(Colour(2)), Stamp::Zero);
        assert_eq!(v.stamp_at(Colour(1)), Stamp::Zero);
    }

    /// The worked conflict example: u1 and u3 share a colour (a conflict
    /// path through u2), while u2 and u4 disagree on their mutual stamps.
    fn conflict_figure() -> (Graph, Vec<ColouringState>) {
        let g = Graph::from_edges(5, vec![(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)]).unwrap();
        let palette = 7;
        let red = 1u16;
        let blue = 2;
        let green = 3;
        let yellow = 4;
        let mut states = vec![
            state(palette, red),    // u1
            state(palette, blue),   // u2
            state(palette, red),    // u3
            state(palette, green),  // u4
            state(palette, yellow), // u5
        ];
        states[1].stamp[Colour(green).index()] = Stamp::Zero; // stamp(u2, colour(u4))
        states[3].stamp[Colour(blue).index()] = Stamp::One; // stamp(u4, colour(u2))
        (g, states)
    }

    #[test]
    fn conflict_figure_classification() {
        let (g, states) = conflict_figure();
        let cls = |a, b| classify_edge(&g, &states, (a, b));
        // {u2,u4}: stamp conflict only
        assert_eq!(
            cls(1, 3),
            ConflictClassification { stamp_conflict: true, colour_conflict: false }
        );
        // {u1,u2} and {u2,u3}: colour conflict only
        assert_eq!(
            cls(0, 1),
            ConflictClassification { stamp_conflict: false, colour_conflict: true }
        );
        assert_eq!(
            cls(1, 2),
            ConflictClassification { stamp_conflict: false, colour_conflict: true }
        );
        // {u3,u5} and {u4,u5}: no conflict
        assert!(!cls(2, 4).is_conflict());
        assert!(!cls(3, 4).is_conflict());

        let set = conflict_edges(&g, &states);
        assert_eq!(set, BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn injective_colouring_has_no_conflicts() {
        let g = generate_balanced_binary_tree(9).unwrap();
        let states: Vec<_> = (1..=9).map(|c| state(81, c)).collect();
        assert!(stable_predicate(&g, &states));
        for &e in g.edges() {
            assert!(!classify_edge(&g, &states, e).is_conflict());
        }
    }

    #[test]
    fn star_with_two_equal_leaves() {
        let g = generate_star(3).unwrap();
        let states = vec![state(7, 3), state(7, 5), state(7, 5)];
        assert!(classify_edge(&g, &states, (0, 1)).colour_conflict);
        assert!(classify_edge(&g, &states, (0, 2)).colour_conflict);
    }

    #[test]
    fn conflict_edges_agrees_with_per_edge_classification() {
        let mut rng = SplitMix64::new(21);
        for trial in 0..500 {
            let n = 2 + rng.next_below(29) as usize;
            let g =
                generate_random_bounded_degree_tree(n, 2 + rng.next_below(4) as usize, trial)
                    .unwrap();
            let palette = 12;
            let states: Vec<_> =
                (0..n).map(|_| ColouringState::random(palette, &mut rng)).collect();
            let set = conflict_edges(&g, &states);
            for (id, &e) in g.edges().iter().enumerate() {
                assert_eq!(set.contains(&id), classify_edge(&g, &states, e).is_conflict());
            }
        }
    }

    #[test]
    fn path_extension_two_cycle_on_star() {
        // centre 0 with leaves 1, 2 of the same colour
        let g = generate_star(3).unwrap();
        let states = vec![state(7, 1), state(7, 2), state(7, 2)];
        let f = build_path_extension(&g, &states);
        // edges: 0 = {0,1}, 1 = {0,2}
        assert_eq!(f[&0], 1);
        assert_eq!(f[&1], 0);
    }

    #[test]
    fn path_extension_on_three_path() {
        let g = generate_path(3).unwrap();
        let states = vec![state(7, 4), state(7, 1), state(7, 4)];
        let f = build_path_extension(&g, &states);
        assert_eq!(f[&0], 1);
        assert_eq!(f[&1], 0);
    }

    #[test]
    fn path_extension_postconditions_random() {
        let mut rng = SplitMix64::new(33);
        for trial in 0..500 {
            let n = 3 + rng.next_below(28) as usize;
            let g =
                generate_random_bounded_degree_tree(n, 2 + rng.next_below(4) as usize, trial)
                    .unwrap();
            // few colours so conflicts are common
            let states: Vec<_> =
                (0..n).map(|_| state(9, rng.next_below(3) as u16 + 1)).collect();
            check_path_extension(&g, &states);
        }
    }

    /// Brute-force check of both path-extension postconditions.
    fn check_path_extension(g: &Graph, states: &[ColouringState]) {
        let f = build_path_extension(g, states);
        let colour_conflicts: BTreeSet<usize> = g
            .edges()
            .iter()
            .enumerate()
            .filter(|&(_, &(u, v))| has_colour_conflict(g, states, u, v))
            .map(|(id, _)| id)
            .collect();
        assert_eq!(
            f.keys().copied().collect::<BTreeSet<_>>(),
            colour_conflicts,
            "domain must be exactly the colour-conflict set"
        );
        let mut preimages: BTreeMap<usize, usize> = BTreeMap::new();
        for (&e, &fe) in &f {
            assert!(colour_conflicts.contains(&fe), "image must be a colour-conflict edge");
            // nodes of e ∪ f(e) must form a conflict path
            let (a, b) = g.edge(e);
            let (c, d) = g.edge(fe);
            let nodes: BTreeSet<u32> = [a, b, c, d].into_iter().collect();
            assert_eq!(nodes.len(), 3, "edges must share exactly one node");
            let mid = [a, b]
                .into_iter()
                .find(|x| [c, d].contains(x))
                .unwrap();
            let mut ends = nodes.into_iter().filter(|&x| x != mid);
            let (x, y) = (ends.next().unwrap(), ends.next().unwrap());
            assert!(g.neighbours(mid).contains(&x) && g.neighbours(mid).contains(&y));
            assert_eq!(
                states[x as usize].colour, states[y as usize].colour,
                "endpoints of the conflict path must share a colour"
            );
            *preimages.entry(fe).or_default() += 1;
        }
        for (&e, &count) in &preimages {
            assert!(count <= 2, "edge {e} has {count} preimages");
        }
    }

    #[test]
    fn greedy_colouring_is_valid() {
        let mut rng = SplitMix64::new(8);
        for trial in 0..50 {
            let n = 2 + rng.next_below(40) as usize;
            let delta = 2 + rng.next_below(4) as usize;
            let g = generate_random_bounded_degree_tree(n, delta, trial).unwrap();
            let palette = palette_size(DEFAULT_ALPHA, delta);
            let colours = greedy_two_hop(&g, palette).unwrap();
            assert!(is_valid_two_hop_colouring(&g, &colours));
            assert!(colours.iter().all(|c| (1..=palette as u16).contains(&c.0)));
        }
    }
}
