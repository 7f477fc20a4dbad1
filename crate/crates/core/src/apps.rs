//! Token-dynamics application layers running on top of an oriented tree:
//! leader election by token annihilation, exact majority by directed
//! cancellation, 2-colouring, and exact size counting.
//!
//! All transitions are pure functions of the two endpoint states and the
//! edge direction child→parent supplied by the orientation layer. On a
//! disoriented edge the app layers do nothing, so every rule has a
//! well-defined direction even before the orientation stabilises.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::SplitMix64;

// ---------------------------------------------------------------- leader

/// Leader election on an oriented edge u→v (u the child): two tokens
/// annihilate the child's; a lone child token moves to the parent.
/// Returns whether anything changed.
pub fn leader_transition(token_u: &mut bool, token_v: &mut bool) -> bool {
    if !*token_u {
        return false;
    }
    *token_u = false;
    *token_v = true;
    true
}

/// True iff exactly one token remains and it sits on the orientation root,
/// so no rule can ever fire again.
pub fn leader_stable_predicate(tokens: &[bool], root: u32) -> bool {
    tokens.iter().filter(|&&t| t).count() == 1 && tokens[root as usize]
}

// -------------------------------------------------------------- majority

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    A,
    B,
    C,
}

/// Output opinions; ties may settle on either value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opinion {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MajorityState {
    pub token: Token,
    pub output: Opinion,
}

impl MajorityState {
    /// Input configuration: token and output both carry the input opinion.
    pub fn from_input(input: Opinion) -> Self {
        let token = match input {
            Opinion::A => Token::A,
            Opinion::B => Token::B,
        };
        MajorityState { token, output: input }
    }

    /// Arbitrary state for self-stabilisation starts.
    pub fn random(rng: &mut SplitMix64) -> Self {
        let token = match rng.next_below(3) {
            0 => Token::A,
            1 => Token::B,
            _ => Token::C,
        };
        let output = if rng.next_below(2) == 0 { Opinion::A } else { Opinion::B };
        MajorityState { token, output }
    }
}

/// Which majority rules fired during one interaction; consumed by the
/// token ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MajorityEffect {
    pub annihilated: bool,
    pub swapped: bool,
    pub changed: bool,
}

/// Majority rules on an oriented edge u→v (u the child), applied in order
/// to the evolving pair of states:
/// (1) opposite tokens cancel to C on both;
/// (2) the child's A/B token swaps with the parent's C token;
/// (3) a non-C parent token overwrites the parent's output;
/// (4) the child copies the parent's output.
pub fn majority_transition(u: &mut MajorityState, v: &mut MajorityState) -> MajorityEffect {
    let before = (*u, *v);
    let mut effect = MajorityEffect::default();
    if matches!(
        (u.token, v.token),
        (Token::A, Token::B) | (Token::B, Token::A)
    ) {
        u.token = Token::C;
        v.token = Token::C;
        effect.annihilated = true;
    } else if matches!(u.token, Token::A | Token::B) && v.token == Token::C {
        std::mem::swap(&mut u.token, &mut v.token);
        effect.swapped = true;
    }
    if v.token != Token::C {
        v.output = match v.token {
            Token::A => Opinion::A,
            Token::B => Opinion::B,
            Token::C => unreachable!(),
        };
    }
    u.output = v.output;
    effect.changed = (*u, *v) != before;
    effect
}

/// Output-silence test: true iff no properly oriented edge can change any
/// majority state. Callers check orientation stability first.
pub fn majority_stable_predicate(
    states: &[MajorityState],
    proper_edges: impl IntoIterator<Item = (u32, u32)>,
) -> bool {
    proper_edges.into_iter().all(|(u, v)| {
        let (su, sv) = (states[u as usize], states[v as usize]);
        let mut u2 = su;
        let mut v2 = sv;
        majority_transition(&mut u2, &mut v2);
        (u2, v2) == (su, sv)
    })
}

/// The conserved quantity: #A − #B over all tokens.
pub fn majority_balance(states: &[MajorityState]) -> i64 {
    states
        .iter()
        .map(|s| match s.token {
            Token::A => 1,
            Token::B => -1,
            Token::C => 0,
        })
        .sum()
}

/// Tracks token identities through a majority run: annihilation retypes
/// both identities in place, a swap exchanges their positions.
#[derive(Debug, Clone)]
pub struct TokenLedger {
    position: Vec<u32>,  // identity → node
    at_node: Vec<usize>, // node → identity
    types: Vec<Token>,
}

impl TokenLedger {
    /// Identity z starts on node z with that node's token type.
    pub fn new(tokens: &[Token]) -> Self {
        TokenLedger {
            position: (0..tokens.len() as u32).collect(),
            at_node: (0..tokens.len()).collect(),
            types: tokens.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn position(&self, identity: usize) -> u32 {
        self.position[identity]
    }

    pub fn token_type(&self, identity: usize) -> Token {
        self.types[identity]
    }

    pub fn identity_at(&self, node: u32) -> usize {
        self.at_node[node as usize]
    }

    /// Applies the effect of one interaction on oriented edge u→v.
    pub fn step(&mut self, u: u32, v: u32, effect: MajorityEffect) -> Result<()> {
        let (zu, zv) = (self.at_node[u as usize], self.at_node[v as usize]);
        if effect.annihilated {
            self.types[zu] = Token::C;
            self.types[zv] = Token::C;
        } else if effect.swapped {
            self.at_node.swap(u as usize, v as usize);
            self.position[zu] = v;
            self.position[zv] = u;
        }
        self.check_bijection()
    }

    fn check_bijection(&self) -> Result<()> {
        for (node, &z) in self.at_node.iter().enumerate() {
            if self.position[z] != node as u32 {
                return Err(Error::Instrumentation(format!(
                    "token ledger lost its bijection at node {node}"
                )));
            }
        }
        Ok(())
    }

    /// Distance of every identity's position to `root`.
    pub fn depths(&self, graph: &Graph, root: u32) -> Vec<u64> {
        let dist = graph.bfs_distances(root);
        self.position
            .iter()
            .map(|&node| dist[node as usize] as u64)
            .collect()
    }
}

// ---------------------------------------------------------- 2-colouring

/// The child copies and flips the parent's bit. Returns whether it changed.
pub fn two_colouring_transition(bit_u: &mut bool, bit_v: bool) -> bool {
    let new = !bit_v;
    let changed = *bit_u != new;
    *bit_u = new;
    changed
}

/// Adjacent bits differ on every edge.
pub fn two_colouring_stable_predicate(graph: &Graph, bits: &[bool]) -> bool {
    graph
        .edges()
        .iter()
        .all(|&(u, v)| bits[u as usize] != bits[v as usize])
}

// -------------------------------------------------------------- counting

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CountingState {
    pub counter: u64,
    pub broadcast_max: u64,
}

impl CountingState {
    /// Input configuration: every node holds a "1" token.
    pub fn one() -> Self {
        CountingState { counter: 1, broadcast_max: 1 }
    }
}

/// The parent absorbs the child's counter; both learn the running maximum.
/// Returns whether anything changed.
pub fn counting_transition(u: &mut CountingState, v: &mut CountingState) -> bool {
    let before = (*u, *v);
    v.counter += u.counter;
    u.counter = 0;
    let m = u.broadcast_max.max(v.broadcast_max).max(v.counter);
    u.broadcast_max = m;
    v.broadcast_max = m;
    (*u, *v) != before
}

/// No properly oriented edge interaction can change any counting state.
pub fn counting_stable_predicate(
    states: &[CountingState],
    proper_edges: impl IntoIterator<Item = (u32, u32)>,
) -> bool {
    proper_edges.into_iter().all(|(u, v)| {
        let mut c = states[u as usize];
        let mut p = states[v as usize];
        !counting_transition(&mut c, &mut p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_path;

    #[test]
    fn leader_rules() {
        // both tokens: child's annihilated
        let (mut u, mut v) = (true, true);
        assert!(leader_transition(&mut u, &mut v));
        assert_eq!((u, v), (false, true));
        // lone child token moves to parent
        let (mut u, mut v) = (true, false);
        assert!(leader_transition(&mut u, &mut v));
        assert_eq!((u, v), (false, true));
        // parent-only token: unchanged
        let (mut u, mut v) = (false, true);
        assert!(!leader_transition(&mut u, &mut v));
        assert_eq!((u, v), (false, true));
    }

    #[test]
    fn leader_predicate() {
        assert!(leader_stable_predicate(&[false, true, false], 1));
        assert!(!leader_stable_predicate(&[true, true, false], 1));
        assert!(!leader_stable_predicate(&[true, false, false], 1));
        assert!(!leader_stable_predicate(&[false, false, false], 1));
    }

    fn ms(token: Token, output: Opinion) -> MajorityState {
        MajorityState { token, output }
    }

    #[test]
    fn majority_rule_annihilation() {
        let mut u = ms(Token::A, Opinion::A);
        let mut v = ms(Token::B, Opinion::B);
        let eff = majority_transition(&mut u, &mut v);
        assert!(eff.annihilated && !eff.swapped);
        assert_eq!(u.token, Token::C);
        assert_eq!(v.token, Token::C);
        // rule 3 skipped; rule 4 copies parent output
        assert_eq!(v.output, Opinion::B);
        assert_eq!(u.output, Opinion::B);
    }

    #[test]
    fn majority_rule_swap() {
        let mut u = ms(Token::A, Opinion::B);
        let mut v = ms(Token::C, Opinion::B);
        let eff = majority_transition(&mut u, &mut v);
        assert!(eff.swapped && !eff.annihilated);
        assert_eq!(u.token, Token::C);
        assert_eq!(v.token, Token::A);
        assert_eq!(v.output, Opinion::A);
        assert_eq!(u.output, Opinion::A);
    }

    #[test]
    fn majority_rule_broadcast() {
        let mut u = ms(Token::A, Opinion::B);
        let mut v = ms(Token::A, Opinion::B);
        let eff = majority_transition(&mut u, &mut v);
        assert!(!eff.annihilated && !eff.swapped && eff.changed);
        assert_eq!(u.token, Token::A);
        assert_eq!(v.token, Token::A);
        assert_eq!(v.output, Opinion::A);
        assert_eq!(u.output, Opinion::A);
    }

    #[test]
    fn majority_balance_is_conserved_by_every_pair() {
        let tokens = [Token::A, Token::B, Token::C];
        let opinions = [Opinion::A, Opinion::B];
        for &tu in &tokens {
            for &tv in &tokens {
                for &ou in &opinions {
                    for &ov in &opinions {
                        let mut u = ms(tu, ou);
                        let mut v = ms(tv, ov);
                        let before = majority_balance(&[u, v]);
                        majority_transition(&mut u, &mut v);
                        assert_eq!(majority_balance(&[u, v]), before);
                    }
                }
            }
        }
    }

    #[test]
    fn majority_predicate_examples() {
        let proper = [(0u32, 1u32)];
        // all tokens A, outputs A
        assert!(majority_stable_predicate(
            &[ms(Token::A, Opinion::A), ms(Token::A, Opinion::A)],
            proper
        ));
        // tie on n=2: one interaction from (A,B) yields (C,C) with equal outputs
        let mut u = ms(Token::A, Opinion::A);
        let mut v = ms(Token::B, Opinion::B);
        majority_transition(&mut u, &mut v);
        assert!(majority_stable_predicate(&[u, v], proper));
        // pending swap: child A, parent C
        assert!(!majority_stable_predicate(
            &[ms(Token::A, Opinion::A), ms(Token::C, Opinion::A)],
            proper
        ));
    }

    #[test]
    fn majority_silence_is_absorbing() {
        // from any predicate-true pair, repeating the transition is a no-op
        let tokens = [Token::A, Token::B, Token::C];
        let opinions = [Opinion::A, Opinion::B];
        for &tu in &tokens {
            for &tv in &tokens {
                for &ou in &opinions {
                    for &ov in &opinions {
                        let s = [ms(tu, ou), ms(tv, ov)];
                        if majority_stable_predicate(&s, [(0u32, 1u32)]) {
                            let mut u = s[0];
                            let mut v = s[1];
                            for _ in 0..100 {
                                assert!(!majority_transition(&mut u, &mut v).changed);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ledger_follows_rules() {
        let mut ledger = TokenLedger::new(&[Token::A, Token::C, Token::B]);
        // rule 2 on edge 0→1: identities exchange positions
        ledger
            .step(0, 1, MajorityEffect { swapped: true, annihilated: false, changed: true })
            .unwrap();
        assert_eq!(ledger.position(0), 1);
        assert_eq!(ledger.position(1), 0);
        assert_eq!(ledger.identity_at(1), 0);
        // rule 1 on edge 1→2 (identity 0 now at node 1): both retype to C
        ledger
            .step(1, 2, MajorityEffect { annihilated: true, swapped: false, changed: true })
            .unwrap();
        assert_eq!(ledger.token_type(0), Token::C);
        assert_eq!(ledger.token_type(2), Token::C);
        assert_eq!(ledger.position(0), 1);
        // no rule: unchanged
        let before = format!("{ledger:?}");
        ledger.step(0, 1, MajorityEffect::default()).unwrap();
        assert_eq!(format!("{ledger:?}"), before);
    }

    #[test]
    fn ledger_depths() {
        let g = generate_path(4).unwrap();
        let ledger = TokenLedger::new(&[Token::A; 4]);
        assert_eq!(ledger.depths(&g, 0), vec![0, 1, 2, 3]);
        assert_eq!(ledger.depths(&g, 3), vec![3, 2, 1, 0]);
    }

    #[test]
    fn two_colouring_rules() {
        let mut child = false;
        assert!(two_colouring_transition(&mut child, false));
        assert!(child);
        let mut child = false;
        assert!(!two_colouring_transition(&mut child, true));
        assert!(!child);

        let g = generate_path(3).unwrap();
        assert!(two_colouring_stable_predicate(&g, &[true, false, true]));
        assert!(!two_colouring_stable_predicate(&g, &[true, true, false]));
    }

    #[test]
    fn counting_rules() {
        let mut child = CountingState { counter: 3, broadcast_max: 4 };
        let mut parent = CountingState { counter: 5, broadcast_max: 2 };
        assert!(counting_transition(&mut child, &mut parent));
        assert_eq!(child.counter, 0);
        assert_eq!(parent.counter, 8);
        assert_eq!(child.broadcast_max, 8);
        assert_eq!(parent.broadcast_max, 8);
    }

    #[test]
    fn counting_sum_is_conserved() {
        let mut rng = SplitMix64::new(11);
        let n = 12u64;
        let mut states = vec![CountingState::one(); n as usize];
        for _ in 0..10_000 {
            let u = rng.next_below(n) as usize;
            let v = (u + 1 + rng.next_below(n - 1) as usize) % n as usize;
            let mut su = states[u];
            let mut sv = states[v];
            counting_transition(&mut su, &mut sv);
            states[u] = su;
            states[v] = sv;
            assert_eq!(states.iter().map(|s| s.counter).sum::<u64>(), n);
            assert!(states.iter().all(|s| s.counter <= n));
        }
    }

    #[test]
    fn counting_predicate() {
        // path 0–1–2 oriented towards node 1
        let proper = [(0u32, 1u32), (2, 1)];
        let done = CountingState { counter: 0, broadcast_max: 3 };
        let root = CountingState { counter: 3, broadcast_max: 3 };
        assert!(counting_stable_predicate(&[done, root, done], proper));
        assert!(!counting_stable_predicate(&[CountingState::one(); 3], proper));
    }
}
