//! Multi-energy microgrid dispatch: device models, a scheduling MDP,
//! a small neural-network stack, TD3 training, and GAN-based renewable
//! scenario generation.

pub mod checkpoint;
pub mod config;
pub mod devices;
pub mod environment;
pub mod io;
pub mod neural;
pub mod scengen;
pub mod svg;
pub mod td3;
