//! Volume grids and resolvent applications.
//!
//! The free resolvent is a singular-aware volume convolution with the
//! fundamental solution; the confined (bag) resolvent subtracts the lifted
//! boundary correction `Phi Lambda^{-1} t (D - z)^{-1}`; the exterior
//! variant mirrors it with the exterior trace identity; the coupled
//! resolvent adds the transmission correction driven by the inverse of
//! `Psi = I - A_int - A_ext`.

use crate::bem::{
    assemble_lambda, invert_dense, BandPotential, BoundaryOperator, TraceField,
};
use crate::clifford::{dirac_beta, Sign, SpinorMatrix, Vec3};
use crate::error::OperatorError;
use crate::geometry::{gauss_legendre, SurfaceMesh};
use crate::kernels::{phi_z_unchecked, KernelParams};
use crate::linalg::{C, C_ZERO};
use rayon::prelude::*;
use std::sync::Arc;

/// Product quadrature grid of a ball or spherical shell.
#[derive(Clone, Debug)]
pub struct VolumeGrid {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// radial interval covered
    pub r_range: (f64, f64),
}

/// Gauss-Legendre x sphere product grid of the ball `|x| <= radius`
/// (`nr` radial nodes, `nt` polar nodes, `2 nt` azimuthal).
pub fn ball_grid(radius: f64, nr: usize, nt: usize) -> VolumeGrid {
    shell_grid(0.0, radius, nr, nt)
}

/// Same structure on the shell `r_in <= |x| <= r_out`.
pub fn shell_grid(r_in: f64, r_out: f64, nr: usize, nt: usize) -> VolumeGrid {
    let (rx, rw) = gauss_legendre(nr);
    let (tx, tw) = gauss_legendre(nt);
    let nphi = 2 * nt;
    let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
    let mut nodes = Vec::with_capacity(nr * nt * nphi);
    let mut weights = Vec::with_capacity(nr * nt * nphi);
    for i in 0..nr {
        let r = 0.5 * (r_in + r_out) + 0.5 * (r_out - r_in) * rx[i];
        let wr = 0.5 * (r_out - r_in) * rw[i] * r * r;
        for j in 0..nt {
            let cos_t = tx[j];
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            for k in 0..nphi {
                let phi = dphi * k as f64;
                nodes.push(Vec3::new(r * sin_t * phi.cos(), r * sin_t * phi.sin(), r * cos_t));
                weights.push(wr * tw[j] * dphi);
            }
        }
    }
    VolumeGrid { nodes, weights, r_range: (r_in, r_out) }
}

impl VolumeGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Equivalent-volume cell radius at node `i`.
    pub fn cell_radius(&self, i: usize) -> f64 {
        (3.0 * self.weights[i] / (4.0 * std::f64::consts::PI)).cbrt()
    }
}

/// Spinor samples on a volume grid.
#[derive(Clone, Debug)]
pub struct VolumeField {
    pub values: Vec<[C; 4]>,
    pub grid: Arc<VolumeGrid>,
}

impl VolumeField {
    pub fn from_fn(grid: &Arc<VolumeGrid>, mut f: impl FnMut(Vec3) -> [C; 4]) -> Self {
        VolumeField { values: grid.nodes.iter().map(|x| f(*x)).collect(), grid: grid.clone() }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.grid.weights)
            .map(|(v, w)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, o: &VolumeField) -> VolumeField {
        VolumeField {
            values: self
                .values
                .iter()
                .zip(&o.values)
                .map(|(a, b)| core::array::from_fn(|c| a[c] - b[c]))
                .collect(),
            grid: self.grid.clone(),
        }
    }
}

/// Exact convolution of the fundamental solution with a constant over the
/// ball `|y| <= R`: `Phi_ball(x) = (z + m beta) I0(|x|) - i (alpha.x_hat)
/// I0'(|x|)` where `I0` is the scalar Helmholtz volume potential of the
/// ball (closed Bessel form via the Wronskian).
fn ball_constant_convolution(radius: f64, p: &KernelParams, x: Vec3) -> SpinorMatrix {
    let s = x.norm();
    let k = p.k;
    let i = C::new(0.0, 1.0);
    let kr = k * radius;
    let (i0, di0) = if s <= radius {
        let ks = k * s;
        let (j0, j1) = if ks.norm() < 1e-8 {
            (C::new(1.0, 0.0) - ks * ks / 6.0, ks / 3.0)
        } else {
            (ks.sin() / ks, ks.sin() / (ks * ks) - ks.cos() / ks)
        };
        let h1r = -(kr + i) * (i * kr).exp() / (kr * kr);
        (
            -1.0 / (k * k) + i * radius * radius * h1r * j0,
            -i * k * radius * radius * h1r * j1,
        )
    } else {
        let ks = k * s;
        let j1r = kr.sin() / (kr * kr) - kr.cos() / kr;
        let h0 = -i * (i * ks).exp() / ks;
        let h1 = -(ks + i) * (i * ks).exp() / (ks * ks);
        (
            i * radius * radius * j1r * h0,
            -i * k * radius * radius * j1r * h1,
        )
    };
    let mut out = dirac_beta().scaled(i0 * p.m);
    for r in 0..4 {
        out[(r, r)] += i0 * p.z;
    }
    if s > 1e-14 {
        out = out + crate::clifford::alpha_dot(x.scaled(1.0 / s)).scaled(-i * di0);
    }
    out
}

/// Free resolvent applied on the grid itself, by constant subtraction
/// around each target: the kernel convolved with the local value is exact
/// (ball closed form), the remainder is integrated by the plain rule.
pub fn free_resolvent_on_grid(grid: &Arc<VolumeGrid>, p: &KernelParams, f: &VolumeField) -> VolumeField {
    let n = grid.len();
    let radius = grid.r_range.1;
    let values: Vec<[C; 4]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = grid.nodes[i];
            let fi = f.values[i];
            let mut acc = ball_constant_convolution(radius, p, xi).mul_vec(&fi);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = xi - grid.nodes[j];
                let r = d.norm();
                let df = core::array::from_fn(|c| f.values[j][c] - fi[c]);
                let v = phi_z_unchecked(d, r, p).mul_vec(&df);
                for c in 0..4 {
                    acc[c] += v[c] * grid.weights[j];
                }
            }
            acc
        })
        .collect();
    VolumeField { values, grid: grid.clone() }
}

/// Free resolvent at arbitrary points, with the same constant subtraction
/// anchored at the nearest grid node (important for near-boundary targets,
/// where the plain sum is noisy).
pub fn free_resolvent_at(points: &[Vec3], grid: &VolumeGrid, p: &KernelParams, f: &VolumeField) -> Vec<[C; 4]> {
    let radius = grid.r_range.1;
    points
        .par_iter()
        .map(|x| {
            let mut nearest = 0usize;
            let mut best = f64::INFINITY;
            for (j, y) in grid.nodes.iter().enumerate() {
                let d = (*x - *y).norm();
                if d < best {
                    best = d;
                    nearest = j;
                }
            }
            let f0 = f.values[nearest];
            let mut acc = ball_constant_convolution(radius, p, *x).mul_vec(&f0);
            for j in 0..grid.len() {
                let d = *x - grid.nodes[j];
                let r = d.norm();
                if r < 1e-13 {
                    continue;
                }
                let df = core::array::from_fn(|c| f.values[j][c] - f0[c]);
                let v = phi_z_unchecked(d, r, p).mul_vec(&df);
                for c in 0..4 {
                    acc[c] += v[c] * grid.weights[j];
                }
            }
            acc
        })
        .collect()
}

/// Shared state for resolvent studies on a ball: the boundary mesh, the
/// interior volume grid, and the factorized boundary operator at `(m, z)`.
pub struct BallResolvent {
    pub mesh: Arc<SurfaceMesh>,
    pub grid: Arc<VolumeGrid>,
    pub params: KernelParams,
    pub lambda_inv: BoundaryOperator,
}

impl BallResolvent {
    pub fn new(mesh: &Arc<SurfaceMesh>, grid: &Arc<VolumeGrid>, p: KernelParams) -> Result<Self, OperatorError> {
        let lambda = assemble_lambda(mesh, p)?;
        let lambda_inv = invert_dense(&lambda)?;
        Ok(BallResolvent { mesh: mesh.clone(), grid: grid.clone(), params: p, lambda_inv })
    }

    /// `(D_m - z)^{-1} e f` on the grid together with its boundary trace.
    pub fn free_apply(&self, f: &VolumeField) -> (VolumeField, TraceField) {
        let vol = free_resolvent_on_grid(&self.grid, &self.params, f);
        let tr = free_resolvent_at(&self.mesh.nodes, &self.grid, &self.params, f);
        (vol, TraceField { values: tr, mesh: self.mesh.clone() })
    }

    /// Confined resolvent: `r (D-z)^{-1} e f - Phi Lambda^{-1} t (D-z)^{-1}
    /// e f`, returned with its boundary trace `P+ beta Lambda^{-1} t w`
    /// (whose `P-` part vanishes identically — the confining boundary
    /// condition).
    pub fn confined_apply(&self, f: &VolumeField) -> Result<(VolumeField, TraceField), OperatorError> {
        let (free_vol, free_tr) = self.free_apply(f);
        let density = TraceField::from_flat(&self.mesh, &self.lambda_inv.matrix.matvec(&free_tr.flat()));
        let pot = BandPotential::new(&self.mesh, &self.params, &density)?;
        let values: Vec<[C; 4]> = self
            .grid
            .nodes
            .par_iter()
            .zip(&free_vol.values)
            .map(|(x, w)| {
                let lift = pot.eval(*x).expect("volume node strictly inside");
                core::array::from_fn(|c| w[c] - lift[c])
            })
            .collect();
        let vol = VolumeField { values, grid: self.grid.clone() };
        let trace = density.apply_matrix(&dirac_beta()).project(Sign::Plus);
        Ok((vol, trace))
    }

    /// Lifted interior field `E[g] = Phi Lambda^{-1} g` sampled on the grid.
    pub fn lift(&self, g: &TraceField) -> Result<VolumeField, OperatorError> {
        let density = TraceField::from_flat(&self.mesh, &self.lambda_inv.matrix.matvec(&g.flat()));
        let pot = BandPotential::new(&self.mesh, &self.params, &density)?;
        let values: Vec<[C; 4]> = self
            .grid
            .nodes
            .par_iter()
            .map(|x| pot.eval(*x).expect("volume node strictly inside"))
            .collect();
        Ok(VolumeField { values, grid: self.grid.clone() })
    }

    /// Near-boundary trace of a confined solution, evaluated independently
    /// of the trace identity: the volume representation is extrapolated to
    /// the surface from two interior offsets.
    pub fn independent_trace(&self, f: &VolumeField) -> Result<TraceField, OperatorError> {
        let (_, free_tr) = self.free_apply(f);
        let density = TraceField::from_flat(&self.mesh, &self.lambda_inv.matrix.matvec(&free_tr.flat()));
        let pot = BandPotential::new(&self.mesh, &self.params, &density)?;
        let eps = 1e-2;
        let values: Vec<[C; 4]> = (0..self.mesh.len())
            .into_par_iter()
            .map(|i| {
                let x0 = self.mesh.nodes[i];
                let n = self.mesh.normals[i];
                let x1 = x0 - n.scaled(eps);
                let x2 = x0 - n.scaled(eps / 2.0);
                // free part at the two offsets
                let w1 = free_resolvent_at(&[x1], &self.grid, &self.params, f)[0];
                let w2 = free_resolvent_at(&[x2], &self.grid, &self.params, f)[0];
                let l1 = pot.eval(x1).unwrap();
                let l2 = pot.eval(x2).unwrap();
                core::array::from_fn(|c| (w2[c] - l2[c]) * 2.0 - (w1[c] - l1[c]))
            })
            .collect();
        Ok(TraceField { values, mesh: self.mesh.clone() })
    }
}

/// Exterior confined resolvent at total mass `m + M`, for data supported in
/// a shell around the obstacle.
pub struct ExteriorResolvent {
    pub mesh: Arc<SurfaceMesh>,
    pub grid: Arc<VolumeGrid>,
    pub params: KernelParams,
    pub lambda_inv: BoundaryOperator,
}

impl ExteriorResolvent {
    pub fn new(mesh: &Arc<SurfaceMesh>, grid: &Arc<VolumeGrid>, total_mass: f64, z: C) -> Result<Self, OperatorError> {
        let p = KernelParams::new(total_mass, z);
        let lambda = assemble_lambda(mesh, p)?;
        let lambda_inv = invert_dense(&lambda)?;
        Ok(ExteriorResolvent { mesh: mesh.clone(), grid: grid.clone(), params: p, lambda_inv })
    }

    /// `r_e (D-z)^{-1} e_e f - Phi Lambda^{-1} t (D-z)^{-1} e_e f` on the
    /// shell grid, with the boundary trace `P- beta Lambda^{-1} t w` (the
    /// `P+` part vanishes identically: the exterior wall condition).
    pub fn apply(&self, f: &VolumeField) -> Result<(VolumeField, TraceField), OperatorError> {
        let vol_free = free_resolvent_on_grid(&self.grid, &self.params, f);
        let tr = free_resolvent_at(&self.mesh.nodes, &self.grid, &self.params, f);
        let free_tr = TraceField { values: tr, mesh: self.mesh.clone() };
        let density = TraceField::from_flat(&self.mesh, &self.lambda_inv.matrix.matvec(&free_tr.flat()));
        let pot = BandPotential::new(&self.mesh, &self.params, &density)?;
        let values: Vec<[C; 4]> = self
            .grid
            .nodes
            .par_iter()
            .zip(&vol_free.values)
            .map(|(x, w)| {
                let lift = pot.eval(*x).expect("shell node strictly outside");
                core::array::from_fn(|c| w[c] - lift[c])
            })
            .collect();
        let vol = VolumeField { values, grid: self.grid.clone() };
        let trace = density.apply_matrix(&dirac_beta()).project(Sign::Minus);
        Ok((vol, trace))
    }

    /// Exterior lifted field `E[h] = Phi Lambda^{-1} h` on the shell grid.
    pub fn lift(&self, h: &TraceField) -> Result<VolumeField, OperatorError> {
        let density = TraceField::from_flat(&self.mesh, &self.lambda_inv.matrix.matvec(&h.flat()));
        let pot = BandPotential::new(&self.mesh, &self.params, &density)?;
        let values: Vec<[C; 4]> = self
            .grid
            .nodes
            .par_iter()
            .map(|x| pot.eval(*x).expect("shell node strictly outside"))
            .collect();
        Ok(VolumeField { values, grid: self.grid.clone() })
    }
}
