//! Time-driven system-level simulator for joint vehicle-to-vehicle
//! communications and radar sensing in an urban street canyon at mmWave and
//! low-THz carriers.
//!
//! The crate models a straight multi-lane street flanked by buildings,
//! traces specular propagation paths between bumper-mounted directional
//! antennas (line of sight, wall/ground reflections, and reflections off
//! tessellated vehicle bodies), and runs slot-level channel access under
//! four schemes: ideal TDMA, radar-aware CSMA with preamble repetition,
//! uncoordinated random access, and adaptive binary-exponential-backoff
//! access. Monte-Carlo experiments aggregate tagged-link SINR, spectral
//! efficiency, access delay and radar reservation outcomes.

pub mod config;
pub mod engine;
pub mod error;
pub mod geom;
pub mod mac;
pub mod materials;
pub mod propagation;
pub mod report;
pub mod runner;
pub mod scene;

pub use error::{Result, SimError};
