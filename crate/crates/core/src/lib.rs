//! Hyperbolic fillings of finite metric measure spaces and the discrete
//! calculus of Besov, Triebel–Lizorkin and Hajłasz–Sobolev quasinorms built on
//! them, together with trace and extension operators onto subsets.

pub mod calculus;
pub mod error;
pub mod filling;
pub mod json;
pub mod norms;
pub mod space;
pub mod trace;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
