//! Boundary-integral and spectral machinery for the three-dimensional Dirac
//! operator with MIT bag boundary conditions.
//!
//! The crate assembles the singular boundary operators of the Dirac transmission
//! problem (Cauchy operator, single layer, `Lambda = beta/2 + C`), builds the
//! interior/exterior Poincaré–Steklov maps, checks their classical and
//! semiclassical principal symbols against wavepacket probes and a half-space
//! Fourier multiplier, and reproduces large-coupling spectral asymptotics
//! (Krein resolvent blocks, Birman–Schwinger eigenvalue scans, `O(1/M)` rate
//! studies) against independent radial oracles on the ball.
//!
//! Entry points:
//! - [`clifford`]: exact Dirac/Pauli matrix algebra and boundary projectors.
//! - [`geometry`]: sphere quadrature meshes, graph charts, metric data.
//! - [`kernels`]: the fundamental solution `phi_m^z` and its singular split.
//! - [`bem`]: Nyström assembly, layer potentials, Poincaré–Steklov operators.
//! - [`symbols`]: principal symbols, the boundary-layer parametrix, flat
//!   quantization, wavepacket comparisons.
//! - [`spectral`]: Krein blocks, eigenvalue scans, radial oracles, resolvents.
//! - [`cli`]: batch front end used by the `steklov` binary.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod bem;
pub mod cli;
pub mod clifford;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod spectral;
pub mod symbols;

pub use clifford::{SpinorMatrix, Vec3};
pub use geometry::SurfaceMesh;
pub use kernels::KernelParams;
