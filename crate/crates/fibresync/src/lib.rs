//! Simulation and certification toolkit for skew products `F(x,y) = (bx, f_x(y))`
//! on the torus, where the base map `x -> bx (mod 1)` is expanding.
//!
//! The crate provides:
//!
//! * [`circle`] — exact-semantics circle arithmetic: points mod 1, open arcs
//!   with wraparound, finite arc unions with measure and component count.
//! * [`maps`] — fibre-map descriptors carrying `f`, both partials and a
//!   certified `C^1` bound, plus the built-in families (the explicit
//!   `(7x, g(x) + h(y))` family, a generic additive family, and the
//!   projective action of the Schrödinger cocycle).
//! * [`dynamics`] — orbit iteration driven by an exact base-`b` digit stream
//!   (no accumulated base-map rounding), fibered Lyapunov estimation,
//!   `SL(2,R)` cocycle norm growth and fibre synchronization runs.
//! * [`certify`] — the contraction-region / escape-set machinery that checks
//!   membership in the map class and computes the full constants ledger
//!   `(G, C, s, eps, eps', l, delta, q, b0)`.
//! * [`cylinders`] — base-`b` cylinder intervals, inverse branches, the
//!   reparameterized fibre-image curves with their slope bound, certified
//!   good/bad classification and per-parent bad-children audits.
//! * [`experiments`] — scripted reproductions of the reference figures and
//!   survey runs, emitting CSV data plus a JSON manifest.

pub mod certify;
pub mod circle;
pub mod cylinders;
pub mod dynamics;
pub mod experiments;
pub mod maps;

pub use circle::{Arc, ArcUnion, CirclePoint};
pub use maps::{FibreMap, SkewProduct};
