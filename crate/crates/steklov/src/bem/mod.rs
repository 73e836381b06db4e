//! Nyström discretization of the boundary operators.
//!
//! The Cauchy operator is assembled from the split `phi = k^z + w`: the
//! strongly singular odd part `w(x) = i alpha·x/(4 pi |x|^3)` is integrated by
//! the punctured symmetric sum (its odd leading term cancels over the
//! angularly symmetric stencils of the product mesh, and the principal value
//! kills the self cell), while the `O(1/r)` even part of `k^z` gets a local
//! polar patch on the equivalent-area disc of the quadrature cell. Kept this
//! way, the discrete operator satisfies the adjoint relation
//! `C(z)^* = C(zbar)` exactly in the weighted inner product, and the accuracy
//! of the principal-value treatment is observable through the
//! `((alpha·n) C)^2 = -I/4` identity.

pub(crate) mod correction;
pub mod harmonics;

use crate::clifford::{
    alpha_dot, dirac_beta, projector_unchecked, Sign, SpinorMatrix, Vec3,
};
use crate::error::{DomainError, OperatorError};
use crate::geometry::SurfaceMesh;
use crate::kernels::{phi_z_unchecked, single_layer_unchecked, KernelParams};
use crate::linalg::{bicgstab, CMat, LinOp, C, C_ONE, C_ZERO};
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

/// What a boundary operator represents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OperatorLabel {
    Cauchy,
    Lambda,
    SingleLayer,
    PsInterior,
    PsExterior,
    Composite(String),
}

/// Dense `(4N) x (4N)` Nyström matrix acting on stacked nodal spinors.
///
/// Block `(i, j)` approximates the kernel action from node `j` to node `i`
/// with the quadrature weight `w_j` folded in, so the matrix acts directly
/// on nodal values. Operators are immutable once assembled.
#[derive(Clone, Debug)]
pub struct BoundaryOperator {
    pub matrix: CMat,
    pub mesh: Arc<SurfaceMesh>,
    pub label: OperatorLabel,
    pub params: KernelParams,
}

/// Spinor-valued samples on mesh nodes; the discrete stand-in for boundary
/// Sobolev data.
#[derive(Clone, Debug)]
pub struct TraceField {
    pub values: Vec<[C; 4]>,
    pub mesh: Arc<SurfaceMesh>,
}

impl TraceField {
    pub fn zeros(mesh: &Arc<SurfaceMesh>) -> Self {
        TraceField { values: vec![[C_ZERO; 4]; mesh.len()], mesh: mesh.clone() }
    }

    pub fn from_flat(mesh: &Arc<SurfaceMesh>, flat: &[C]) -> Self {
        assert_eq!(flat.len(), 4 * mesh.len());
        let values = flat.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        TraceField { values, mesh: mesh.clone() }
    }

    pub fn flat(&self) -> Vec<C> {
        let mut out = Vec::with_capacity(4 * self.values.len());
        for v in &self.values {
            out.extend_from_slice(v);
        }
        out
    }

    /// Weighted `L^2(Sigma)` norm.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.mesh.weights)
            .map(|(v, w)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, other: &TraceField) -> C {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.mesh.weights)
            .map(|((a, b), w)| {
                let mut acc = C_ZERO;
                for c in 0..4 {
                    acc += b[c].conj() * a[c];
                }
                acc * w
            })
            .sum()
    }

    /// Nodewise application of the boundary projector `P±(n_i)`.
    pub fn project(&self, sign: Sign) -> TraceField {
        let values = self
            .values
            .iter()
            .zip(&self.mesh.normals)
            .map(|(v, n)| projector_unchecked(*n, sign).mul_vec(v))
            .collect();
        TraceField { values, mesh: self.mesh.clone() }
    }

    /// Nodewise application of a constant matrix.
    pub fn apply_matrix(&self, m: &SpinorMatrix) -> TraceField {
        let values = self.values.iter().map(|v| m.mul_vec(v)).collect();
        TraceField { values, mesh: self.mesh.clone() }
    }

    pub fn add(&self, o: &TraceField) -> TraceField {
        let values = self
            .values
            .iter()
            .zip(&o.values)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
            .collect();
        TraceField { values, mesh: self.mesh.clone() }
    }

    pub fn sub(&self, o: &TraceField) -> TraceField {
        let values = self
            .values
            .iter()
            .zip(&o.values)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]])
            .collect();
        TraceField { values, mesh: self.mesh.clone() }
    }

    pub fn scaled(&self, s: C) -> TraceField {
        let values = self.values.iter().map(|v| [v[0] * s, v[1] * s, v[2] * s, v[3] * s]).collect();
        TraceField { values, mesh: self.mesh.clone() }
    }
}

impl BoundaryOperator {
    pub fn nodes(&self) -> usize {
        self.mesh.len()
    }

    pub fn dim(&self) -> usize {
        4 * self.mesh.len()
    }

    pub fn apply(&self, f: &TraceField) -> TraceField {
        TraceField::from_flat(&self.mesh, &self.matrix.matvec(&f.flat()))
    }

    pub fn compose(&self, o: &BoundaryOperator, label: OperatorLabel) -> BoundaryOperator {
        BoundaryOperator {
            matrix: self.matrix.matmul(&o.matrix),
            mesh: self.mesh.clone(),
            label,
            params: self.params,
        }
    }

    /// `W^{1/2} A W^{-1/2}`: the matrix of the operator in the weighted
    /// (discrete `L^2`) inner product, where norms and adjoints are honest.
    pub fn weighted_matrix(&self) -> CMat {
        let n = self.nodes();
        let mut m = self.matrix.clone();
        let sw: Vec<f64> = self.mesh.weights.iter().map(|w| w.sqrt()).collect();
        for i in 0..n {
            for r in 0..4 {
                let row = m.row_mut(4 * i + r);
                for (j, swj) in sw.iter().enumerate() {
                    let scale = sw[i] / swj;
                    for c in 0..4 {
                        row[4 * j + c] *= scale;
                    }
                }
            }
        }
        m
    }

    /// Operator norm on discrete `L^2(Sigma)`.
    pub fn l2_operator_norm(&self) -> f64 {
        self.weighted_matrix().norm2()
    }

    /// Relative self-adjointness defect in the weighted inner product.
    pub fn hermiticity_defect(&self) -> f64 {
        let s = self.weighted_matrix();
        let d = s.sub(&s.adjoint());
        d.frobenius() / s.frobenius()
    }

    /// Operator norm on discrete `L^2` restricted to mesh-representable
    /// densities (inputs band-limited to [`representable_degree`]). Nodal
    /// vectors outside that band alias mesh-scale oscillations that no
    /// quadrature rule controls, so operator-norm statements are made on
    /// the band.
    pub fn banded_l2_norm(&self) -> Result<f64, OperatorError> {
        let proj = band_projector(&self.mesh)?;
        let m = BoundaryOperator {
            matrix: self.matrix.matmul(&proj),
            mesh: self.mesh.clone(),
            label: self.label.clone(),
            params: self.params,
        };
        Ok(m.weighted_matrix().norm2())
    }

    /// Self-adjointness defect compressed to the representable band.
    pub fn band_hermiticity_defect(&self) -> Result<f64, OperatorError> {
        let proj = band_projector(&self.mesh)?;
        let w = BoundaryOperator {
            matrix: proj.matmul(&self.matrix).matmul(&proj),
            mesh: self.mesh.clone(),
            label: self.label.clone(),
            params: self.params,
        }
        .weighted_matrix();
        let d = w.sub(&w.adjoint());
        Ok(d.frobenius() / w.frobenius())
    }

    /// Relative band-compressed distance to another operator's weighted
    /// adjoint, for the `A(z)^* = A(zbar)` checks.
    pub fn band_adjoint_distance(&self, other: &BoundaryOperator) -> Result<f64, OperatorError> {
        let proj = band_projector(&self.mesh)?;
        let a = BoundaryOperator {
            matrix: proj.matmul(&self.matrix).matmul(&proj),
            mesh: self.mesh.clone(),
            label: self.label.clone(),
            params: self.params,
        }
        .weighted_matrix();
        let b = BoundaryOperator {
            matrix: proj.matmul(&other.matrix).matmul(&proj),
            mesh: self.mesh.clone(),
            label: other.label.clone(),
            params: other.params,
        }
        .weighted_matrix();
        let d = a.adjoint().sub(&b);
        Ok(d.frobenius() / b.frobenius())
    }
}

/// Highest harmonic degree treated as representable on a sphere mesh: one
/// below the exactness band, leaving headroom for the degree raise from
/// normal-vector multiplication inside operator identities.
pub fn representable_degree(mesh: &SurfaceMesh) -> Result<usize, OperatorError> {
    let (_, order) = mesh.sphere_data().ok_or_else(|| OperatorError::Capability {
        required: "sphere mesh".into(),
        got: format!("{:?}", mesh.kind),
    })?;
    Ok(order - 2)
}

/// Orthogonal projector (in the weighted inner product) onto nodal vectors
/// band-limited to [`representable_degree`].
pub fn band_projector(mesh: &Arc<SurfaceMesh>) -> Result<CMat, OperatorError> {
    let degree = representable_degree(mesh)?;
    let (radius, _) = mesh.sphere_data().unwrap();
    let basis = harmonics::SphereBasis::for_mesh(mesh, degree)?;
    let n = mesh.len();
    let ncoef = basis.coeff_count();
    let mut synth = CMat::zeros(4 * n, 4 * ncoef);
    let mut ana = CMat::zeros(4 * ncoef, 4 * n);
    let r2 = radius * radius;
    for idx in 0..ncoef {
        for j in 0..n {
            let y = basis.value(idx, j);
            for c in 0..4 {
                synth[(4 * j + c, 4 * idx + c)] = y;
                ana[(4 * idx + c, 4 * j + c)] = y.conj() * (mesh.weights[j] / r2);
            }
        }
    }
    Ok(synth.matmul(&ana))
}

fn write_block(rows: &mut [&mut [C]], j: usize, block: &SpinorMatrix) {
    for (r, row) in rows.iter_mut().enumerate() {
        for c in 0..4 {
            row[4 * j + c] = block[(r, c)];
        }
    }
}

fn add_block(rows: &mut [&mut [C]], j: usize, block: &SpinorMatrix) {
    for (r, row) in rows.iter_mut().enumerate() {
        for c in 0..4 {
            row[4 * j + c] += block[(r, c)];
        }
    }
}

/// Shared assembly driver: fills block row `i` with `kernel(i, j) * w_j` for
/// `j != i` and `diag(i)` on the diagonal.
fn assemble_base(
    mesh: &Arc<SurfaceMesh>,
    params: KernelParams,
    label: OperatorLabel,
    kernel: impl Fn(usize, usize, Vec3, f64) -> SpinorMatrix + Sync,
    diag: impl Fn(usize) -> SpinorMatrix + Sync,
) -> Result<BoundaryOperator, OperatorError> {
    let n = mesh.len();
    if n == 0 {
        return Err(OperatorError::Assembly("empty mesh".into()));
    }
    let mut matrix = CMat::zeros(4 * n, 4 * n);
    let degenerate = AtomicBool::new(false);
    let nodes = &mesh.nodes;
    let weights = &mesh.weights;
    matrix.par_fill_rows(4, |row0, chunk| {
        let i = row0 / 4;
        let cols = 4 * n;
        let mut rows: Vec<&mut [C]> = chunk.chunks_mut(cols).collect();
        let xi = nodes[i];
        for j in 0..n {
            if j == i {
                write_block(&mut rows, j, &diag(i));
                continue;
            }
            let d = xi - nodes[j];
            let r = d.norm();
            if r < 1e-14 {
                degenerate.store(true, Ordering::Relaxed);
                continue;
            }
            let block = kernel(i, j, d, r).scaled_re(weights[j]);
            write_block(&mut rows, j, &block);
        }
    });
    if degenerate.load(Ordering::Relaxed) {
        return Err(OperatorError::Assembly("duplicate nodes in mesh".into()));
    }
    Ok(BoundaryOperator { matrix, mesh: mesh.clone(), label, params })
}

/// Self-cell contribution of the smooth-part kernel on the equivalent-area
/// disc: the even singular term `(z + m beta) e^{ikr}/(4 pi r)` integrated in
/// polar coordinates; the odd terms vanish over the symmetric patch.
fn cauchy_diag(p: &KernelParams, rho: f64) -> SpinorMatrix {
    let scalar = single_layer_patch(p, rho);
    let mut d = dirac_beta().scaled(scalar * p.m);
    for r in 0..4 {
        d[(r, r)] += scalar * p.z;
    }
    d
}

/// `int_0^rho e^{ikr}/2 dr = (e^{ik rho} - 1)/(2ik)`, the polar-patch value
/// of the weak `1/(4 pi r)` singularity over the disc of radius `rho`.
fn single_layer_patch(p: &KernelParams, rho: f64) -> C {
    let ik = Complex64::new(0.0, 1.0) * p.k;
    if ik.norm() < 1e-12 {
        Complex64::new(rho / 2.0, 0.0)
    } else {
        ((ik * rho).exp() - C_ONE) / (ik * 2.0)
    }
}

/// Assembles one of the kernels: far field `phi(x_i - x_j) w_j` everywhere;
/// on sphere meshes the near-field error is removed by the full-band
/// correction (the operator then acts exactly on every mesh-representable
/// density); on other meshes the diagonal gets the local polar patch and
/// accuracy is first order only.
fn assemble_corrected(
    mesh: &Arc<SurfaceMesh>,
    p: KernelParams,
    family: correction::KernelFamily,
    label: OperatorLabel,
) -> Result<BoundaryOperator, OperatorError> {
    let on_sphere = mesh.sphere_data().is_some();
    let kernel = |_: usize, _: usize, d: Vec3, r: f64| match family {
        correction::KernelFamily::Cauchy => phi_z_unchecked(d, r, &p),
        correction::KernelFamily::SingleLayer => {
            let v = single_layer_unchecked(r, &p);
            SpinorMatrix::from_fn(|a, b| if a == b { v } else { C_ZERO })
        }
    };
    let diag = |i: usize| {
        if on_sphere {
            SpinorMatrix::zero()
        } else {
            match family {
                correction::KernelFamily::Cauchy => cauchy_diag(&p, mesh.patch_radius(i)),
                correction::KernelFamily::SingleLayer => {
                    let v = single_layer_patch(&p, mesh.patch_radius(i));
                    SpinorMatrix::from_fn(|a, b| if a == b { v } else { C_ZERO })
                }
            }
        }
    };
    let mut op = assemble_base(mesh, p, label, kernel, diag)?;
    if on_sphere {
        let corr = correction::full_band_correction(family, mesh, &p, &op.matrix)?;
        op.matrix = op.matrix.add(&corr);
    }
    Ok(op)
}

/// Raw base matrix (zero diagonal) used by correction assembly diagnostics.
pub fn assemble_base_for_test(mesh: &Arc<SurfaceMesh>, p: &KernelParams) -> CMat {
    let pp = *p;
    assemble_base(mesh, pp, OperatorLabel::Cauchy, |_, _, d, r| phi_z_unchecked(d, r, &pp), |_| SpinorMatrix::zero())
        .unwrap()
        .matrix
}

/// Nyström matrix of the Cauchy operator (principal-value convolution with
/// the fundamental solution).
pub fn assemble_cauchy(mesh: &Arc<SurfaceMesh>, p: KernelParams) -> Result<BoundaryOperator, OperatorError> {
    assemble_corrected(mesh, p, correction::KernelFamily::Cauchy, OperatorLabel::Cauchy)
}

/// `Lambda = beta/2 + C`.
pub fn assemble_lambda(mesh: &Arc<SurfaceMesh>, p: KernelParams) -> Result<BoundaryOperator, OperatorError> {
    let mut op = assemble_cauchy(mesh, p)?;
    let half_beta = dirac_beta().scaled_re(0.5);
    for i in 0..mesh.len() {
        for r in 0..4 {
            for c in 0..4 {
                op.matrix[(4 * i + r, 4 * i + c)] += half_beta[(r, c)];
            }
        }
    }
    op.label = OperatorLabel::Lambda;
    Ok(op)
}

/// Single layer of the Helmholtz operator `-Delta + m^2 - z^2`, acting as a
/// scalar kernel times `I_4`.
pub fn assemble_single_layer(mesh: &Arc<SurfaceMesh>, p: KernelParams) -> Result<BoundaryOperator, OperatorError> {
    assemble_corrected(mesh, p, correction::KernelFamily::SingleLayer, OperatorLabel::SingleLayer)
}

/// Dense LU inverse gated on numerical invertibility; the returned operator
/// carries the label `Composite("inv(..)")` and the product residual is
/// checked against `1e-8`.
pub fn invert_dense(op: &BoundaryOperator) -> Result<BoundaryOperator, OperatorError> {
    let (inv, residual) = op.matrix.inverse_checked(1e-8)?;
    log::debug!("invert_dense: |A A^-1 - I|_max = {residual:.3e}");
    Ok(BoundaryOperator {
        matrix: inv,
        mesh: op.mesh.clone(),
        label: OperatorLabel::Composite(format!("inv({:?})", op.label)),
        params: op.params,
    })
}

/// Block-diagonal matrix of nodewise boundary projectors `P±(n_i)`.
pub fn projector_matrix(mesh: &Arc<SurfaceMesh>, sign: Sign) -> CMat {
    let n = mesh.len();
    let mut m = CMat::zeros(4 * n, 4 * n);
    for i in 0..n {
        let p = projector_unchecked(mesh.normals[i], sign);
        for r in 0..4 {
            for c in 0..4 {
                m[(4 * i + r, 4 * i + c)] = p[(r, c)];
            }
        }
    }
    m
}

/// Block-diagonal matrix of a constant spinor matrix (e.g. `beta`).
pub fn blockdiag(mesh: &Arc<SurfaceMesh>, b: &SpinorMatrix) -> CMat {
    let n = mesh.len();
    let mut m = CMat::zeros(4 * n, 4 * n);
    for i in 0..n {
        for r in 0..4 {
            for c in 0..4 {
                m[(4 * i + r, 4 * i + c)] = b[(r, c)];
            }
        }
    }
    m
}

/// Block-diagonal `alpha · n_i`.
pub fn alpha_normal_matrix(mesh: &Arc<SurfaceMesh>) -> CMat {
    let n = mesh.len();
    let mut m = CMat::zeros(4 * n, 4 * n);
    for i in 0..n {
        let a = alpha_dot(mesh.normals[i]);
        for r in 0..4 {
            for c in 0..4 {
                m[(4 * i + r, 4 * i + c)] = a[(r, c)];
            }
        }
    }
    m
}

/// Interior Poincaré–Steklov operator `-P+ beta Lambda^{-1} P-`, mapping
/// `P-`-range boundary data to the `P+`-trace of the interior solution.
pub fn ps_interior(mesh: &Arc<SurfaceMesh>, p: KernelParams) -> Result<BoundaryOperator, OperatorError> {
    let lambda = assemble_lambda(mesh, p)?;
    ps_from_lambda(&lambda, Sign::Plus)
}

/// Exterior Poincaré–Steklov operator `-P- beta Lambda^{-1} P+` at the given
/// mass (typically `m + M`), mapping `P+`-range data to the `P-`-trace of
/// the decaying exterior solution.
pub fn ps_exterior(mesh: &Arc<SurfaceMesh>, mass: f64, z: Complex64) -> Result<BoundaryOperator, OperatorError> {
    let lambda = assemble_lambda(mesh, KernelParams::new(mass, z))?;
    ps_from_lambda(&lambda, Sign::Minus)
}

fn ps_from_lambda(lambda: &BoundaryOperator, out_range: Sign) -> Result<BoundaryOperator, OperatorError> {
    let inv = invert_dense(lambda)?;
    let mesh = &lambda.mesh;
    let p_out = projector_matrix(mesh, out_range);
    let p_in = projector_matrix(mesh, out_range.flip());
    let beta = blockdiag(mesh, &dirac_beta());
    let m = p_out.matmul(&beta).matmul(&inv.matrix).matmul(&p_in).scaled(C::new(-1.0, 0.0));
    let label = match out_range {
        Sign::Plus => OperatorLabel::PsInterior,
        Sign::Minus => OperatorLabel::PsExterior,
    };
    Ok(BoundaryOperator { matrix: m, mesh: mesh.clone(), label, params: lambda.params })
}

/// Layer potential at a point off the surface: `Phi[g](x) = sum_j
/// phi(x - x_j) g_j w_j`. Close to the surface the plain sum degrades; a
/// warning is logged when `x` is within one node spacing of the mesh.
pub fn potential_eval(
    mesh: &SurfaceMesh,
    p: &KernelParams,
    density: &TraceField,
    x: Vec3,
) -> Result<[C; 4], DomainError> {
    let spacing = mesh.spacing();
    let mut min_dist = f64::INFINITY;
    for node in &mesh.nodes {
        min_dist = min_dist.min((x - *node).norm());
    }
    if min_dist == 0.0 {
        return Err(DomainError::new("potential evaluated on a mesh node"));
    }
    if min_dist < spacing {
        log::warn!(
            "potential_eval: target at distance {min_dist:.3e} from the surface (node spacing {spacing:.3e}); quadrature accuracy degrades"
        );
    }
    let mut acc = [C_ZERO; 4];
    for j in 0..mesh.len() {
        let d = x - mesh.nodes[j];
        let r = d.norm();
        let block = phi_z_unchecked(d, r, p);
        let v = block.mul_vec(&density.values[j]);
        for c in 0..4 {
            acc[c] += v[c] * mesh.weights[j];
        }
    }
    Ok(acc)
}

/// Layer potential of a (band-limited) density on a sphere mesh, evaluated
/// through the harmonic expansion of the density and the closed-form
/// interior/exterior extensions. Spectrally accurate at any distance from
/// the surface, including distances far below the node spacing where the
/// plain quadrature sum breaks down.
pub struct BandPotential {
    radius: f64,
    params: KernelParams,
    max_degree: usize,
    /// analysis coefficients of the four spinor components
    coeffs: Vec<Vec<C>>,
    /// `ik R^2 h_l(kR)` (interior front factors)
    front_in: Vec<C>,
    /// `ik R^2 j_l(kR)` (exterior front factors)
    front_out: Vec<C>,
}

impl BandPotential {
    pub fn new(mesh: &Arc<SurfaceMesh>, p: &KernelParams, density: &TraceField) -> Result<Self, OperatorError> {
        let (radius, order) = mesh.sphere_data().ok_or_else(|| OperatorError::Capability {
            required: "sphere mesh".into(),
            got: format!("{:?}", mesh.kind),
        })?;
        let max_degree = order - 1;
        let basis = harmonics::SphereBasis::for_mesh(mesh, max_degree)?;
        let mut coeffs = Vec::with_capacity(4);
        for comp in 0..4 {
            let samples: Vec<C> = density.values.iter().map(|v| v[comp]).collect();
            coeffs.push(basis.forward(&samples));
        }
        let i_c = Complex64::new(0.0, 1.0);
        let kr = p.k * radius;
        let jl = correction::spherical_jl(max_degree, kr);
        let hl = correction::spherical_hl(max_degree, kr);
        let front: C = i_c * p.k * radius * radius;
        let front_in = hl.iter().map(|h| front * h).collect();
        let front_out = jl.iter().map(|j| front * j).collect();
        Ok(BandPotential { radius, params: *p, max_degree, coeffs, front_in, front_out })
    }

    /// Potential value at `x` strictly off the surface.
    pub fn eval(&self, x: Vec3) -> Result<[C; 4], DomainError> {
        let s = x.norm();
        if (s - self.radius).abs() < 1e-12 {
            return Err(DomainError::new("band potential evaluated on the surface"));
        }
        let interior = s < self.radius;
        let k = self.params.k;
        let dir = if s > 1e-14 { x.scaled(1.0 / s) } else { Vec3::new(0.0, 0.0, 1.0) };
        // radial factors and derivatives at |x|
        let ks = k * s;
        let (rad, drad): (Vec<C>, Vec<C>) = if interior {
            let jl = correction::spherical_jl(self.max_degree + 1, ks);
            let d = (0..=self.max_degree)
                .map(|l| {
                    k * if l == 0 {
                        -jl[1]
                    } else {
                        jl[l - 1] - (l as f64 + 1.0) / ks * jl[l]
                    }
                })
                .collect();
            ((0..=self.max_degree).map(|l| jl[l]).collect(), d)
        } else {
            let hl = correction::spherical_hl(self.max_degree + 1, ks);
            let d = (0..=self.max_degree)
                .map(|l| {
                    k * if l == 0 {
                        -hl[1]
                    } else {
                        hl[l - 1] - (l as f64 + 1.0) / ks * hl[l]
                    }
                })
                .collect();
            ((0..=self.max_degree).map(|l| hl[l]).collect(), d)
        };
        let mut acc = [C_ZERO; 4];
        let i_c = Complex64::new(0.0, 1.0);
        let zmb = {
            let mut b = dirac_beta().scaled(Complex64::new(self.params.m, 0.0));
            for r in 0..4 {
                b[(r, r)] += self.params.z;
            }
            b
        };
        for l in 0..=self.max_degree {
            let front = if interior { self.front_in[l] } else { self.front_out[l] };
            for m in -(l as i64)..=(l as i64) {
                let idx = harmonics::lm_index(l, m);
                let c_in = [
                    self.coeffs[0][idx],
                    self.coeffs[1][idx],
                    self.coeffs[2][idx],
                    self.coeffs[3][idx],
                ];
                if c_in.iter().all(|v| v.norm() < 1e-300) {
                    continue;
                }
                let (y, grad) = harmonics::sph_harm_with_grad(l, m, dir);
                // (z + m beta) F_l(s) Y  - i alpha . grad( F_l(s) Y(x^) )
                let mut e = zmb.scaled(front * rad[l] * y);
                e = e + alpha_dot(dir).scaled(-i_c * front * drad[l] * y);
                let gs = -i_c * front * rad[l] / s;
                e = e + crate::clifford::alpha_dot_c([grad[0] * gs, grad[1] * gs, grad[2] * gs]);
                let v = e.mul_vec(&c_in);
                for r in 0..4 {
                    acc[r] += v[r];
                }
            }
        }
        Ok(acc)
    }
}

/// One-shot band-potential evaluation; see [`BandPotential`].
pub fn potential_eval_subtracted(
    mesh: &Arc<SurfaceMesh>,
    p: &KernelParams,
    density: &TraceField,
    x: Vec3,
) -> Result<[C; 4], OperatorError> {
    Ok(BandPotential::new(mesh, p, density)?.eval(x)?)
}

/// Matrix-free application of `Lambda = beta/2 + C` on a mesh, for sizes
/// where the dense operator does not fit in memory. Applies the same
/// full-band correction as the dense assembly, in factored form: each apply
/// costs two base kernel passes (one on the input, one on its band
/// projection) plus the closed-form action on the band coefficients.
pub struct LambdaMatFree {
    pub mesh: Arc<SurfaceMesh>,
    pub params: KernelParams,
    corr: Option<correction::BandCorrection>,
}

impl LambdaMatFree {
    pub fn new(mesh: &Arc<SurfaceMesh>, params: KernelParams) -> Result<Self, OperatorError> {
        let corr = if mesh.sphere_data().is_some() {
            Some(correction::BandCorrection::new(correction::KernelFamily::Cauchy, mesh, &params)?)
        } else {
            None
        };
        Ok(LambdaMatFree { mesh: mesh.clone(), params, corr })
    }

    /// One pass of the base rule (punctured kernel sums, no diagonal).
    fn base_apply(&self, x: &[C]) -> Vec<C> {
        let n = self.mesh.len();
        let p = self.params;
        let nodes = &self.mesh.nodes;
        let weights = &self.mesh.weights;
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let xi = nodes[i];
                let mut acc = [C_ZERO; 4];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let d = xi - nodes[j];
                    let r = d.norm();
                    let gj = [x[4 * j], x[4 * j + 1], x[4 * j + 2], x[4 * j + 3]];
                    let v = phi_z_unchecked(d, r, &p).mul_vec(&gj);
                    for c in 0..4 {
                        acc[c] += v[c] * weights[j];
                    }
                }
                acc.into_iter()
            })
            .collect()
    }
}

impl LinOp for LambdaMatFree {
    fn dim(&self) -> usize {
        4 * self.mesh.len()
    }

    fn apply(&self, x: &[C]) -> Vec<C> {
        let n = self.mesh.len();
        assert_eq!(x.len(), 4 * n);
        let half_beta = dirac_beta().scaled_re(0.5);
        let mut out = self.base_apply(x);
        if let Some(corr) = &self.corr {
            let (coeffs, low) = corr.analyze(n, x);
            let exact = corr.exact_apply(&self.mesh, &coeffs);
            let base_low = self.base_apply(&low);
            for k in 0..4 * n {
                out[k] += exact[k] - base_low[k];
            }
        } else {
            let p = self.params;
            for i in 0..n {
                let gi = [x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3]];
                let diag = cauchy_diag(&p, self.mesh.patch_radius(i)).mul_vec(&gi);
                for c in 0..4 {
                    out[4 * i + c] += diag[c];
                }
            }
        }
        for i in 0..n {
            let gi = [x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3]];
            let hb = half_beta.mul_vec(&gi);
            for c in 0..4 {
                out[4 * i + c] += hb[c];
            }
        }
        out
    }
}

/// Applies the interior Poincaré–Steklov map `g -> -P+ beta Lambda^{-1} P- g`
/// without assembling the operator, solving `Lambda u = P- g` by BiCGStab.
pub fn ps_interior_apply_matfree(
    mesh: &Arc<SurfaceMesh>,
    p: KernelParams,
    g: &TraceField,
    tol: f64,
) -> Result<TraceField, OperatorError> {
    let op = LambdaMatFree::new(mesh, p)?;
    let rhs = g.project(Sign::Minus).flat();
    let sol = bicgstab(&op, &rhs, tol, 300)?;
    let u = TraceField::from_flat(mesh, &sol);
    Ok(u.apply_matrix(&dirac_beta()).project(Sign::Plus).scaled(C::new(-1.0, 0.0)))
}

/// Discrete Sobolev weighting `(1 - Delta_Sigma)^{s/2}` applied spectrally.
/// Supported on sphere meshes via the spherical-harmonic transform.
pub fn sobolev_weight(field: &TraceField, s: f64) -> Result<TraceField, OperatorError> {
    if s == 0.0 {
        return Ok(field.clone());
    }
    let (radius, order) = field.mesh.sphere_data().ok_or_else(|| OperatorError::Capability {
        required: "sphere mesh (spectral weighting)".into(),
        got: format!("{:?}", field.mesh.kind),
    })?;
    let basis = harmonics::SphereBasis::for_mesh(&field.mesh, order - 1)?;
    let mut out = TraceField::zeros(&field.mesh);
    for comp in 0..4 {
        let samples: Vec<C> = field.values.iter().map(|v| v[comp]).collect();
        let mut coeffs = basis.forward(&samples);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let l = basis.degree_of(idx) as f64;
            let factor = (1.0 + l * (l + 1.0) / (radius * radius)).powf(s / 2.0);
            *c *= factor;
        }
        let back = basis.inverse(&coeffs);
        for (i, v) in back.into_iter().enumerate() {
            out.values[i][comp] = v;
        }
    }
    Ok(out)
}

/// Discrete H^s norm on the sphere: `|| (1 - Delta)^{s/2} f ||_{L^2}`.
pub fn sobolev_norm(field: &TraceField, s: f64) -> Result<f64, OperatorError> {
    Ok(sobolev_weight(field, s)?.l2_norm())
}

/// A band-limited random trace field (degree <= `max_degree`), smooth enough
/// for quadrature identities to hold at their stated tolerances.
pub fn random_smooth_field(
    mesh: &Arc<SurfaceMesh>,
    max_degree: usize,
    rng: &mut impl rand::Rng,
) -> TraceField {
    let mut values = vec![[C_ZERO; 4]; mesh.len()];
    for l in 0..=max_degree {
        for m in -(l as i64)..=(l as i64) {
            let coeff: [C; 4] = core::array::from_fn(|_| {
                C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            for (i, node) in mesh.nodes.iter().enumerate() {
                let dir = node.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
                let y = harmonics::sph_harm(l, m, dir);
                for c in 0..4 {
                    values[i][c] += coeff[c] * y;
                }
            }
        }
    }
    TraceField { values, mesh: mesh.clone() }
}

/// Serializes an operator to the binary dump format: magic `SDOP1`, `N`,
/// label byte, `m`, `z` (two doubles), then row-major complex doubles,
/// little-endian.
pub fn write_operator(op: &BoundaryOperator, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(b"SDOP1")?;
    f.write_all(&(op.nodes() as u64).to_le_bytes())?;
    let label: u8 = match op.label {
        OperatorLabel::Cauchy => 0,
        OperatorLabel::Lambda => 1,
        OperatorLabel::SingleLayer => 2,
        OperatorLabel::PsInterior => 3,
        OperatorLabel::PsExterior => 4,
        OperatorLabel::Composite(_) => 5,
    };
    f.write_all(&[label])?;
    f.write_all(&op.params.m.to_le_bytes())?;
    f.write_all(&op.params.z.re.to_le_bytes())?;
    f.write_all(&op.params.z.im.to_le_bytes())?;
    for v in &op.matrix.data {
        f.write_all(&v.re.to_le_bytes())?;
        f.write_all(&v.im.to_le_bytes())?;
    }
    f.flush()
}

/// Reads an operator dump written by [`write_operator`]. The mesh is not
/// stored; the caller supplies the mesh the operator was assembled on.
pub fn read_operator(
    mesh: &Arc<SurfaceMesh>,
    path: impl AsRef<std::path::Path>,
) -> Result<BoundaryOperator, OperatorError> {
    let bytes = std::fs::read(path).map_err(|e| OperatorError::Assembly(format!("read: {e}")))?;
    if bytes.len() < 5 + 8 + 1 + 24 || &bytes[..5] != b"SDOP1" {
        return Err(OperatorError::Assembly("bad operator dump header".into()));
    }
    let mut off = 5;
    let mut take = |n: usize| {
        let s = &bytes[off..off + n];
        off += n;
        s
    };
    let n = u64::from_le_bytes(take(8).try_into().unwrap()) as usize;
    if n != mesh.len() {
        return Err(OperatorError::MeshMismatch(format!("dump has N={n}, mesh has N={}", mesh.len())));
    }
    let label = match take(1)[0] {
        0 => OperatorLabel::Cauchy,
        1 => OperatorLabel::Lambda,
        2 => OperatorLabel::SingleLayer,
        3 => OperatorLabel::PsInterior,
        4 => OperatorLabel::PsExterior,
        _ => OperatorLabel::Composite("loaded".into()),
    };
    let m = f64::from_le_bytes(take(8).try_into().unwrap());
    let zre = f64::from_le_bytes(take(8).try_into().unwrap());
    let zim = f64::from_le_bytes(take(8).try_into().unwrap());
    let dim = 4 * n;
    if bytes.len() != off + dim * dim * 16 {
        return Err(OperatorError::Assembly("operator dump truncated".into()));
    }
    let mut matrix = CMat::zeros(dim, dim);
    for idx in 0..dim * dim {
        let re = f64::from_le_bytes(bytes[off + 16 * idx..off + 16 * idx + 8].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[off + 16 * idx + 8..off + 16 * idx + 16].try_into().unwrap());
        matrix.data[idx] = C::new(re, im);
    }
    Ok(BoundaryOperator {
        matrix,
        mesh: mesh.clone(),
        label,
        params: KernelParams::new(m, Complex64::new(zre, zim)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sphere_mesh;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_sphere(order: usize) -> Arc<SurfaceMesh> {
        Arc::new(sphere_mesh(1.0, order).unwrap())
    }

    /// || ((alpha n) C)^2 + I/4 ||_2 on representable densities.
    fn cauchy_square_defect(order: usize) -> f64 {
        let mesh = unit_sphere(order);
        let p = KernelParams::real_z(1.0, 0.0);
        let c = assemble_cauchy(&mesh, p).unwrap();
        let an = alpha_normal_matrix(&mesh);
        let anc = an.matmul(&c.matrix);
        let sq = anc.matmul(&anc);
        BoundaryOperator {
            matrix: sq.add(&CMat::identity(sq.rows).scaled(C::new(0.25, 0.0))),
            mesh: mesh.clone(),
            label: OperatorLabel::Composite("defect".into()),
            params: p,
        }
        .banded_l2_norm()
        .unwrap()
    }

    #[test]
    fn cauchy_square_identity_order8() {
        let d = cauchy_square_defect(8);
        assert!(d < 5e-3, "defect at order 8: {d}");
    }

    #[test]
    fn cauchy_weighted_hermitian_at_real_z() {
        let mesh = unit_sphere(8);
        let c = assemble_cauchy(&mesh, KernelParams::real_z(1.0, 0.0)).unwrap();
        let defect = c.band_hermiticity_defect().unwrap();
        assert!(defect < 1e-8, "hermiticity defect {defect}");
    }

    #[test]
    fn cauchy_adjoint_is_conjugate_parameter() {
        let mesh = unit_sphere(8);
        let z = Complex64::new(0.3, 0.1);
        let c = assemble_cauchy(&mesh, KernelParams::new(1.0, z)).unwrap();
        let cbar = assemble_cauchy(&mesh, KernelParams::new(1.0, z.conj())).unwrap();
        let rel = c.band_adjoint_distance(&cbar).unwrap();
        assert!(rel < 1e-8, "C(z)* vs C(zbar): {rel}");
    }

    #[test]
    fn lambda_is_cauchy_plus_half_beta() {
        let mesh = unit_sphere(6);
        let p = KernelParams::real_z(1.0, 0.0);
        let c = assemble_cauchy(&mesh, p).unwrap();
        let l = assemble_lambda(&mesh, p).unwrap();
        let hb = blockdiag(&mesh, &dirac_beta()).scaled(C::new(0.5, 0.0));
        let diff = l.matrix.sub(&c.matrix).sub(&hb);
        assert!(diff.max_abs() < 1e-14);
    }

    #[test]
    fn lambda_invertible_on_sphere() {
        let mesh = unit_sphere(8);
        let l = assemble_lambda(&mesh, KernelParams::real_z(1.0, 0.0)).unwrap();
        let smin = BoundaryOperator {
            matrix: l.weighted_matrix(),
            mesh: mesh.clone(),
            label: OperatorLabel::Composite("w".into()),
            params: l.params,
        }
        .matrix
        .sigma_min();
        assert!(smin > 0.05, "sigma_min(Lambda) = {smin}");
        let inv = invert_dense(&l).unwrap();
        let prod = l.matrix.matmul(&inv.matrix);
        assert!(prod.sub(&CMat::identity(prod.rows)).max_abs() < 1e-8);
    }

    #[test]
    fn lambda_squared_structural_identity_order8() {
        // Lambda^2 = 1/4 + C^2 + (m + z beta) S_z on smooth densities.
        let mesh = unit_sphere(8);
        let p = KernelParams::real_z(1.0, 0.0);
        let c = assemble_cauchy(&mesh, p).unwrap();
        let l = assemble_lambda(&mesh, p).unwrap();
        let s = assemble_single_layer(&mesh, p).unwrap();
        let mzb = {
            let mut b = dirac_beta().scaled(p.z);
            for r in 0..4 {
                b[(r, r)] += C::new(p.m, 0.0);
            }
            b
        };
        let mzb_mat = blockdiag(&mesh, &mzb);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let f = random_smooth_field(&mesh, 2, &mut rng);
            let lhs = l.apply(&l.apply(&f));
            let c2 = c.apply(&c.apply(&f));
            let sz = TraceField::from_flat(&mesh, &mzb_mat.matvec(&s.apply(&f).flat()));
            let rhs = f.scaled(C::new(0.25, 0.0)).add(&c2).add(&sz);
            let rel = lhs.sub(&rhs).l2_norm() / f.l2_norm();
            worst = worst.max(rel);
        }
        assert!(worst < 1e-2, "Lambda^2 identity relative residual {worst}");
    }

    #[test]
    fn single_layer_positive_and_scalar_blocks() {
        let mesh = unit_sphere(8);
        let p = KernelParams::real_z(1.0, 0.0);
        let s = assemble_single_layer(&mesh, p).unwrap();
        // blocks are scalar multiples of I4
        for i in 0..mesh.len() {
            for j in 0..mesh.len() {
                let v = s.matrix[(4 * i, 4 * j)];
                for r in 0..4 {
                    for c in 0..4 {
                        let want = if r == c { v } else { C_ZERO };
                        assert!((s.matrix[(4 * i + r, 4 * j + c)] - want).norm() < 1e-15);
                    }
                }
            }
        }
        // positivity on representable densities
        let proj = band_projector(&mesh).unwrap();
        let w = BoundaryOperator {
            matrix: proj.adjoint().matmul(&s.weighted_matrix()).matmul(&proj),
            mesh: mesh.clone(),
            label: OperatorLabel::SingleLayer,
            params: p,
        }
        .matrix;
        let sym = w.add(&w.adjoint()).scaled(C::new(0.5, 0.0));
        let eig = sym.eigh_values();
        // spectrum = band-compressed single layer plus the kernel of the projector
        let min_nonzero = eig.iter().cloned().filter(|e| e.abs() > 1e-10).fold(f64::INFINITY, f64::min);
        assert!(min_nonzero > 0.0, "min nonzero eigenvalue of S_z: {min_nonzero}");
    }

    #[test]
    fn potential_far_field_decays() {
        let mesh = unit_sphere(8);
        let p = KernelParams::real_z(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_smooth_field(&mesh, 1, &mut rng);
        let far = potential_eval(&mesh, &p, &g, Vec3::new(10.0, 0.0, 0.0)).unwrap();
        let mag: f64 = far.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(mag <= (-9.0f64).exp(), "far field magnitude {mag}");
    }

    #[test]
    fn potential_satisfies_dirac_equation_inside() {
        let mesh = unit_sphere(10);
        let p = KernelParams::real_z(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_smooth_field(&mesh, 1, &mut rng);
        let h = 1e-4;
        let x = Vec3::new(0.21, -0.13, 0.32);
        let col = |y: Vec3| potential_eval(&mesh, &p, &g, y).unwrap();
        let v = col(x);
        let mut dv = [C_ZERO; 4];
        for (axis, e) in [Vec3::new(h, 0.0, 0.0), Vec3::new(0.0, h, 0.0), Vec3::new(0.0, 0.0, h)]
            .iter()
            .enumerate()
        {
            let fp = col(x + *e);
            let fm = col(x - *e);
            let aj = crate::clifford::dirac_alpha(axis + 1).unwrap();
            for r in 0..4 {
                for k in 0..4 {
                    dv[r] += aj[(r, k)] * (fp[k] - fm[k]) / (2.0 * h) * Complex64::new(0.0, -1.0);
                }
            }
        }
        let b = dirac_beta();
        let mut res: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for r in 0..4 {
            let mut bv = C_ZERO;
            for k in 0..4 {
                bv += b[(r, k)] * v[k];
            }
            res = res.max((dv[r] + bv * p.m - v[r] * p.z).norm());
            scale = scale.max(v[r].norm());
        }
        assert!(res / scale.max(1e-30) < 1e-4, "Dirac residual {}", res / scale);
    }

    #[test]
    fn ps_interior_range_and_bound() {
        let mesh = unit_sphere(8);
        let p = KernelParams::real_z(1.0, 0.0);
        let a = ps_interior(&mesh, p).unwrap();
        // range in P+, kernel contains P+
        let pm = projector_matrix(&mesh, Sign::Minus);
        let pp = projector_matrix(&mesh, Sign::Plus);
        assert!(pm.matmul(&a.matrix).max_abs() < 1e-10);
        assert!(a.matrix.matmul(&pp).max_abs() < 1e-10);
        // L2 bound ~ 1 on P- data
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let g = random_smooth_field(&mesh, 2, &mut rng).project(Sign::Minus);
            let out = a.apply(&g);
            assert!(out.l2_norm() <= 1.1 * g.l2_norm(), "PS bound violated");
        }
    }

    #[test]
    fn ps_exterior_range() {
        let mesh = unit_sphere(8);
        let a = ps_exterior(&mesh, 2.0, Complex64::new(0.5, 0.0)).unwrap();
        let pm = projector_matrix(&mesh, Sign::Minus);
        let pp = projector_matrix(&mesh, Sign::Plus);
        assert!(pp.matmul(&a.matrix).max_abs() < 1e-10);
        assert!(a.matrix.matmul(&pm).max_abs() < 1e-10);
    }

    #[test]
    fn interior_trace_of_lifted_solution() {
        // u = Phi Lambda^{-1} g has P- trace g; checked at distance 1e-2
        // inside the sphere with the subtracted near evaluation.
        let mesh = unit_sphere(12);
        let p = KernelParams::real_z(1.0, 0.0);
        let l = assemble_lambda(&mesh, p).unwrap();
        let linv = invert_dense(&l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_smooth_field(&mesh, 1, &mut rng).project(Sign::Minus);
        let dens = TraceField::from_flat(&mesh, &linv.matrix.matvec(&g.flat()));
        let mut num = 0.0;
        let mut den = 0.0;
        for i in (0..mesh.len()).step_by(7) {
            let x0 = mesh.nodes[i];
            let x = x0 - mesh.normals[i].scaled(1e-2);
            let u = potential_eval_subtracted(&mesh, &p, &dens, x).unwrap();
            let pm = projector_unchecked(mesh.normals[i], Sign::Minus);
            let got = pm.mul_vec(&u);
            let want = g.values[i];
            for c in 0..4 {
                num += (got[c] - want[c]).norm_sqr() * mesh.weights[i];
                den += want[c].norm_sqr() * mesh.weights[i];
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 2e-2, "interior lifted trace error {rel}");
    }

    #[test]
    fn jump_formula_difference() {
        // interior minus exterior limit of Phi equals -i (alpha n) g.
        let mesh = unit_sphere(12);
        let p = KernelParams::real_z(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_smooth_field(&mesh, 1, &mut rng);
        let mut num = 0.0;
        let mut den = 0.0;
        let pot = BandPotential::new(&mesh, &p, &g).unwrap();
        // one-sided limits: two offsets, linear extrapolation removes the
        // O(eps) trace offset
        let limit = |x0: Vec3, n: Vec3, side: f64| -> [C; 4] {
            let eps = 1e-2;
            let a = pot.eval(x0 + n.scaled(side * eps)).unwrap();
            let b = pot.eval(x0 + n.scaled(side * eps / 2.0)).unwrap();
            core::array::from_fn(|c| b[c] * 2.0 - a[c])
        };
        for i in (0..mesh.len()).step_by(5) {
            let x0 = mesh.nodes[i];
            let ui = limit(x0, mesh.normals[i], -1.0);
            let ue = limit(x0, mesh.normals[i], 1.0);
            let jump = alpha_dot(mesh.normals[i]).scaled(Complex64::new(0.0, -1.0)).mul_vec(&g.values[i]);
            for c in 0..4 {
                num += (ui[c] - ue[c] - jump[c]).norm_sqr() * mesh.weights[i];
                den += jump[c].norm_sqr() * mesh.weights[i];
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 2e-2, "jump relative error {rel}");
    }

    #[test]
    fn matfree_lambda_matches_dense() {
        let mesh = unit_sphere(6);
        let p = KernelParams::real_z(1.0, 0.0);
        let dense = assemble_lambda(&mesh, p).unwrap();
        let matfree = LambdaMatFree::new(&mesh, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_smooth_field(&mesh, 2, &mut rng);
        let a = dense.matrix.matvec(&g.flat());
        let b = matfree.apply(&g.flat());
        let err: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "matfree mismatch {err}");
    }

    #[test]
    fn matfree_ps_apply_matches_dense() {
        let mesh = unit_sphere(6);
        let p = KernelParams::real_z(1.0, 0.0);
        let a = ps_interior(&mesh, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_smooth_field(&mesh, 2, &mut rng).project(Sign::Minus);
        let dense_out = a.apply(&g);
        let mat_out = ps_interior_apply_matfree(&mesh, p, &g, 1e-11).unwrap();
        let rel = dense_out.sub(&mat_out).l2_norm() / dense_out.l2_norm();
        assert!(rel < 1e-8, "matfree PS mismatch {rel}");
    }

    #[test]
    fn sobolev_weight_basics() {
        let mesh = unit_sphere(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_smooth_field(&mesh, 3, &mut rng);
        let same = sobolev_weight(&f, 0.0).unwrap();
        assert!(f.sub(&same).l2_norm() == 0.0);
        // constant field unchanged for any s
        let ones = TraceField {
            values: vec![[C_ONE, C_ZERO, C_ZERO, C_ONE]; mesh.len()],
            mesh: mesh.clone(),
        };
        let w = sobolev_weight(&ones, 1.3).unwrap();
        assert!(w.sub(&ones).l2_norm() / ones.l2_norm() < 1e-10);
        // pure degree-l harmonic scales by (1 + l(l+1))^{s/2}
        let l = 4usize;
        let vals: Vec<[C; 4]> = mesh
            .nodes
            .iter()
            .map(|x| {
                let y = harmonics::sph_harm(l, 2, x.normalized().unwrap());
                [y, C_ZERO, y * 0.5, C_ZERO]
            })
            .collect();
        let f = TraceField { values: vals, mesh: mesh.clone() };
        let w = sobolev_weight(&f, 1.0).unwrap();
        let factor = (1.0 + (l * (l + 1)) as f64).sqrt();
        let rel = w.sub(&f.scaled(C::new(factor, 0.0))).l2_norm() / w.l2_norm();
        assert!(rel < 1e-10, "sobolev scaling error {rel}");
    }

    #[test]
    fn operator_dump_round_trip() {
        let mesh = unit_sphere(4);
        let p = KernelParams::new(1.0, Complex64::new(0.25, 0.125));
        let c = assemble_cauchy(&mesh, p).unwrap();
        let dir = std::env::temp_dir().join("steklov_test_op.bin");
        write_operator(&c, &dir).unwrap();
        let back = read_operator(&mesh, &dir).unwrap();
        assert_eq!(back.matrix.data, c.matrix.data);
        assert_eq!(back.params, c.params);
        let _ = std::fs::remove_file(&dir);
    }

    #[test]
    fn assembly_rejects_duplicate_nodes() {
        let mut mesh = sphere_mesh(1.0, 4).unwrap();
        mesh.nodes[3] = mesh.nodes[2];
        let mesh = Arc::new(mesh);
        match assemble_cauchy(&mesh, KernelParams::real_z(1.0, 0.0)) {
            Err(OperatorError::Assembly(msg)) => assert!(msg.contains("duplicate")),
            other => panic!("expected assembly error, got {other:?}"),
        }
    }
}
