//! Attack-defense stochastic games with one-sided partial observability.
//!
//! The pipeline runs from Horn-clause attack models ([`threat_model`]) to
//! symbolic attacker and defender behaviour ([`smdp`]), their composition
//! into turn-based games ([`game`]), the partially observable variant and its
//! perfect-information transformation ([`pogame`]), rPATL model checking and
//! strategy synthesis ([`rpatl`]), and executable soundness checks
//! ([`verify`]).

pub mod bits;
pub mod threat_model;
pub mod smdp;
pub mod game;
pub mod rpatl;
pub mod pogame;
pub mod fixtures;
pub mod verify;
