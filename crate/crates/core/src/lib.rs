//! Numerical toolkit for symplectic twist maps on the cotangent bundle of
//! the d-torus, defined through generating functions.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`genfun`] — generating functions of uniform twist type (built-in
//!   families with analytic derivatives) and audits of their defining
//!   conditions (diagonal periodicity, uniform twist, coercivity).
//! * [`dynamics`] — the shift map on configuration pairs, the twist map on
//!   phase space, its tangent map, conjugate-point scanning and Green-bundle
//!   slopes.
//! * [`action`] — action sums, fixed-endpoint minimization with a
//!   block-tridiagonal Newton solver, extremal-sequence extension, and the
//!   constancy observable for `x -> A_N(x, x+r)`.
//! * [`weakkam`] — twisted actions, minimizing holonomic value, Mather
//!   alpha function, Mañé potential, Aubry samples and potential audits.
//! * [`invariant_graphs`] — periodic fibers, invariant Lagrangian graphs,
//!   cohomology classes of graphs and the foliation section.
//! * [`oracles`] — independent slow reference computations (dynamic
//!   programming on a discretized circle, derivative-free minimization,
//!   finite differences) used to cross-check the fast paths.

pub mod action;
pub mod dynamics;
pub mod error;
pub mod genfun;
pub mod grid;
pub mod invariant_graphs;
pub mod oracles;
pub mod weakkam;

pub use action::{MinimizeOpts, MinimizeResult, Segment};
pub use dynamics::{ConjugateReport, GreenSlope, PhasePoint, TangentBlock};
pub use error::CoreError;
pub use genfun::{DerivativeBundle, Family, FourierTerm, GeneratingFunction};
pub use grid::TorusGrid;
pub use invariant_graphs::{FoliationSection, LagrangianGraph};
pub use weakkam::{AubrySample, CohomologyClass, WeakKamEstimate};
