//! Numeric tolerances shared across the crate.
//!
//! All comparisons against these constants are absolute unless noted
//! otherwise. The two geometric tolerances (`FEASIBILITY`, `VERTEX_DEDUP`)
//! are deliberately far apart: a point is accepted as a vertex only when it
//! satisfies every constraint to `FEASIBILITY`, while two vertices are
//! considered the same point at the much coarser `VERTEX_DEDUP` scale.

/// A probability vector or joint distribution must sum to 1 within this.
pub const DISTRIBUTION_SUM: f64 = 1e-12;

/// Columns of a mechanism matrix must sum to 1 within this.
pub const STOCHASTIC_COLUMN: f64 = 1e-9;

/// Feasibility and tightness tolerance for polytope constraints.
pub const FEASIBILITY: f64 = 1e-9;

/// Two vertices closer than this (max-norm) are treated as duplicates.
/// Also used when merging mechanism outputs with coinciding posteriors.
pub const VERTEX_DEDUP: f64 = 1e-7;

/// Optimality tolerance for the linear-program solver.
pub const LP_OPT: f64 = 1e-9;

/// Default ambient-dimension guard for vertex enumeration.
pub const DEFAULT_MAX_DIM: usize = 30;
