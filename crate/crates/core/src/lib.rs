//! Fast diffusion on metric graphs whose vertices are semipermeable
//! membranes, and its collapse onto a Markov chain between edges.
//!
//! The crate discretizes the diffusion generator on integrable functions
//! (mass-exact finite volumes, [`fv`]) and on square-integrable functions
//! (Galerkin forms, [`fem`]), builds the limiting chain `e^{tQ}P`
//! ([`chain`]), and runs the experiments comparing the two as the diffusion
//! speed grows ([`evolution`]).

pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod expm;
pub mod fem;
pub mod fv;
pub mod generator;
pub mod graph;
pub mod grid;
pub mod resolvent;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/limit_chain.md")]
    mod limit_chain {}
    #[doc = include_str!("../../../book/src/resolvent.md")]
    mod resolvent {}
    #[doc = include_str!("../../../book/src/finite_volumes.md")]
    mod finite_volumes {}
    #[doc = include_str!("../../../book/src/galerkin.md")]
    mod galerkin {}
    #[doc = include_str!("../../../book/src/evolution.md")]
    mod evolution {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
