//! Quadratic finite element laboratory for the torsion problem
//! `Δu = N` in Ω, `u = 0` on Γ, on smooth star-shaped planar domains.
//!
//! The numerical core is generic over the scalar type ([`real::Real`], for
//! `f32` and `f64`); the aliases below fix it to `f64`, which is what the
//! verification suite needs.
//!
//! ```no_run
//! use torsion_lab::{Domain, Mesh, solve};
//!
//! let domain = Domain::ellipse(2.0, 1.0)?;
//! let sol = solve(Mesh::build(&domain, 4)?)?;
//! println!("tau = {}", sol.tau());
//! # Ok::<(), torsion_lab::Error>(())
//! ```

pub mod domain_io;
pub mod element;
pub mod error;
pub mod geometry;
pub mod identities;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod optimize;
pub mod output;
pub mod quadrature;
pub mod real;
pub mod shapeflow;
pub mod sparse;
pub mod stability;
pub mod torsion;

pub use error::{Category, Error, Result};
pub use real::{Real, Vec2};

pub type Domain = geometry::StarDomain<f64>;
pub type Mesh = mesh::TriMesh<f64>;
pub type Solution = torsion::TorsionSolution<f64>;

pub type DomainF32 = geometry::StarDomain<f32>;
pub type MeshF32 = mesh::TriMesh<f32>;
pub type SolutionF32 = torsion::TorsionSolution<f32>;

/// [`torsion::solve_torsion`] in double precision.
pub fn solve(mesh: Mesh) -> Result<Solution> {
    torsion::solve_torsion(mesh)
}
