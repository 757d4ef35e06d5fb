//! Abs-smooth Frank-Wolfe toolkit.
//!
//! Functions built from smooth primitives and `abs` are recorded on a
//! [`tape::Tape`], linearized into piecewise-linear models
//! ([`plmodel::AbsLinearForm`]) and minimized over polyhedra by an active
//! signature method ([`aasm`]) on top of a dense simplex ([`lp`]). The outer
//! conditional-gradient loop lives in [`asfw`].

pub mod aasm;
pub mod asfw;
pub mod bench;
pub mod linalg;
pub mod lp;
pub mod plmodel;
pub mod polyhedron;
pub mod rng;
pub mod selftest;
pub mod tape;
pub mod testgen;

pub use plmodel::{AbsLinearForm, SignatureVector};
pub use polyhedron::{LinearConstraint, Polyhedron};
pub use tape::{abs_linearize, Tape, TapeBuilder};
