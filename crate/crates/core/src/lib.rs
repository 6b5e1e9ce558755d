//! Finite-element laboratory for the two-phase torsion problem
//! `-div(σ∇u) = 1` in Ω, `u = 0` on ∂Ω, with `σ = 1 + (σ_c - 1)χ_D`, and for
//! the Serrin-type stability quantities attached to it.

pub mod diagnostics;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod oracle;

pub use fem::{BoundaryTrace, FemError, Field, FieldLabel, Hessian, SolverConfig};
pub use geometry::{DomainSpec, GeometryError, InclusionSpec, Point, PolygonalBoundary, Shape};
pub use mesh::{Mesh, MeshError, Region};
