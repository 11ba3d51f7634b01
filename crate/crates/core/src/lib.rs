//! Deformed Toda lattices built from kink chains: canonical dynamics, Lax
//! pairs in Flaschka variables, trace invariants, and diagnostics that
//! measure exactly how and where higher-order interaction terms break
//! integrability.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod flaschka;
pub mod lattice;
pub mod moser;
pub mod phi4;
pub mod seed;

pub use error::{Error, Result};
