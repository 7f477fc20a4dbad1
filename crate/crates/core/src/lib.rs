//! Population protocols on bounded-degree trees under the uniform random
//! pairwise scheduler: self-stabilising 2-hop colouring, tree orientation,
//! and token-dynamics applications (leader election, exact majority,
//! 2-colouring, exact counting), with a deterministic seeded simulator and
//! experiment tooling.

pub mod apps;
pub mod coloring;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod orientation;
pub mod rng;

pub use apps::{CountingState, MajorityState, Opinion, Token, TokenLedger};
pub use coloring::{Colour, ColouringState, Stamp};
pub use engine::{
    AppKind, Candidates, Configuration, InitMode, InitSpec, LayerKind, MajorityInputs,
    ProtocolStack, RoundTracker, RunRecord, RunSettings, Runner, Tail,
};
pub use error::{Error, Result};
pub use experiment::{fit_scaling, run_experiment, summarize, ExperimentSpec, ScalingFit};
pub use graph::{Graph, GraphDescriptor};
pub use orientation::{ColourSet, MarkerState, OrientationState, OrientationStatus};
pub use rng::SplitMix64;
