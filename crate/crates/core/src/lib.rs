//! Construction and certification of invariant metrics with positive Ricci
//! curvature on manifolds carrying a cohomogeneity-two torus action.
//!
//! The pipeline starts from the combinatorial orbit data (a legally weighted
//! disk), builds the model manifold `N_m` together with its free subtorus,
//! assembles an explicit piecewise-smooth warped-product metric over a
//! geodesic polygon, tunes the polygon by a Gauss-Bonnet condition, certifies
//! lower bounds for the Ricci curvature on sample grids, and finally smooths
//! the metric by mollification while re-checking positivity.

pub mod cli;
pub mod curvature;
pub mod lattice;
pub mod metric_total;
pub mod mollify;
pub mod numerics;
pub mod orbit_space;
pub mod profile;
pub mod quadrangle;
