//! Galerkin boundary elements for double-sided Laplace boundary value
//! problems on closed triangulated surfaces.
//!
//! The library represents a harmonic field on both sides of a closed surface
//! as the sum of a single-layer and a double-layer potential, assembles the
//! four classical boundary integral operators, and solves the Dirichlet,
//! Neumann, and the two mixed double-sided problems for the layer densities.

pub mod boundary_map;
pub mod bspaces;
pub mod bvp;
pub mod cli;
pub mod mesh;
pub mod oracle;
pub mod potential_ops;
pub mod quadrature;
pub mod solvers;
