//! Semantic-entropy-guided encrypted OFDM transmission simulator.
//!
//! The crate models one transmitter, a legitimate receiver and an
//! eavesdropper. The transmitter scores feature maps by task importance,
//! keeps the smallest prefix that stays within the semantic-entropy budget,
//! XOR-encrypts the quantized maps with a keystream seeded by semantic keys
//! and the physical-layer key, and places the most important maps on the
//! strongest OFDM subcarriers.
//!
//! Modules follow the transmission chain:
//!
//! * [`featuremap`] – feature-map sets, the synthetic generator, file I/O and quantization
//! * [`importance`] – the GAP/linear/softmax head and gradient importance scores
//! * [`selector`] – budget-constrained selection of maps
//! * [`keys`] – physical-layer keys, semantic keys, keystreams and search spaces
//! * [`ofdm`] – QAM, framing, multipath channel, MMSE estimation and equalization
//! * [`allocator`] – CSI ranking and importance-ordered subcarrier allocation
//! * [`pipeline`] – configuration, end-to-end runs, sweeps and reports

// NaN-rejecting range checks are written as `!(x >= lo)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod bits;
pub mod error;
pub mod featuremap;
pub mod importance;
pub mod keys;
pub mod ofdm;
pub mod pipeline;
pub mod selector;

pub use error::{Error, Result};
