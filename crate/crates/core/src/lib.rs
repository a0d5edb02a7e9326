//! Planted k-CSP instances built from Goldreich-style generators with
//! MDS local functions, and the machinery to study when the local-marginal
//! LP relaxation recovers the hidden input: peeling and stopping sets, exact
//! rational LP feasibility, Markov chains on constraint degrees, and the
//! closed-form threshold analytics.

pub mod analytics;
pub mod chain;
pub mod error;
pub mod experiment;
pub mod field_mds;
pub mod instance;
pub mod lp;
pub mod peeling;
pub mod rng;

pub use error::{Error, Result};
pub use field_mds::{make_rs_local_function, LocalFunction, PrimeField};
pub use instance::{plant, sample_graph, BipartiteInstance, PlantedInstance};
pub use peeling::{is_stopping_set, peel, PeelMode, PeelResult};
pub use rng::{stream, RngStream};
