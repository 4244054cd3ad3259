//! Simulation toolkit for implicit semantic-aware communication.
//!
//! The crate is organised around the pipeline a message goes through:
//!
//! * [`kg`] loads knowledge graphs, assigns abstraction layers by degree,
//!   samples expert reasoning paths and partitions graphs across servers.
//! * [`codec`] trains translation embeddings that double as the channel
//!   constellation and encodes semantics into real-valued signals.
//! * [`channel`] adds fading and Gaussian noise.
//! * [`decoder`] recovers symbols by nearest codeword, path extension, or
//!   reasoning-assisted recovery, and tallies symbol error rates per layer.
//! * [`reasoner`] holds the GCN interpreter policy, occupancy measures, the
//!   semantic distances and the adversarial imitation training loop.
//! * [`federation`] simulates FedAvg across servers, cross-server link
//!   policies and the convergence-bound bookkeeping.
//! * [`synth`] generates seeded stand-in datasets with the shape of the
//!   public benchmarks.

pub mod channel;
pub mod codec;
pub mod decoder;
pub mod federation;
pub mod kg;
mod optim;
pub mod reasoner;
pub mod rng;
pub mod synth;

pub use kg::{EntityId, KnowledgeGraph, RelationId, Triple};
