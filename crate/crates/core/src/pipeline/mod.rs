//! End-to-end runs: configuration, link simulation and experiment sweeps.

mod config;
mod experiments;
mod link;

pub use config::RunConfig;
pub use experiments::*;
pub use link::{
    block_errors, demodulate_frame, frame_rows, receive_eavesdrop, receive_legit, symbols_per_map, transmit,
    Demodulated, LegitReception, SideInfo, Transmission,
};
