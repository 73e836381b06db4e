//! Spectral layer: Krein resolvent blocks, Birman-Schwinger eigenvalue
//! scans with refinement, power-law rate fits, radial oracles on the ball,
//! and the first-order eigenvalue-shift coupling matrix.

pub mod oracle;
pub mod resolvent;

pub use oracle::*;
pub use resolvent::*;

use crate::bem::harmonics::SphereBasis;
use crate::bem::{
    invert_dense, ps_exterior, ps_interior, representable_degree, BoundaryOperator, OperatorLabel,
    TraceField,
};
use crate::clifford::{dirac_beta, spin_dot_c, Vec3};
use crate::error::{ArgError, OperatorError, SpectralError};
use crate::geometry::SurfaceMesh;
use crate::kernels::KernelParams;
use crate::linalg::{CMat, C, C_ZERO};
use num_complex::Complex64;
use std::sync::Arc;

/// The boundary blocks of the coupled (transmission) resolvent at
/// `(m, M, z)`: `Psi = I - A_int - A_ext`, the symmetrized inverse factor
/// `Xi = (I - A_int A_ext - A_ext A_int)^{-1}`, and its one-sided
/// restrictions `Xi± = (I - A_int A_ext)^{-1} / (I - A_ext A_int)^{-1}`.
pub struct KreinBlocks {
    pub a_int: BoundaryOperator,
    pub a_ext: BoundaryOperator,
    pub psi: BoundaryOperator,
    pub xi: BoundaryOperator,
    pub xi_plus: BoundaryOperator,
    pub xi_minus: BoundaryOperator,
    pub m: f64,
    pub coupling: f64,
    pub z: C,
}

pub fn krein_blocks(mesh: &Arc<SurfaceMesh>, m: f64, coupling: f64, z: C) -> Result<KreinBlocks, OperatorError> {
    let a_int = ps_interior(mesh, KernelParams::new(m, z))?;
    let a_ext = ps_exterior(mesh, m + coupling, z)?;
    let dim = a_int.dim();
    let id = CMat::identity(dim);
    let psi_mat = id.sub(&a_int.matrix).sub(&a_ext.matrix);
    let ie = a_int.matrix.matmul(&a_ext.matrix);
    let ei = a_ext.matrix.matmul(&a_int.matrix);
    let params = a_int.params;
    let wrap = |matrix: CMat, tag: &str| BoundaryOperator {
        matrix,
        mesh: mesh.clone(),
        label: OperatorLabel::Composite(tag.into()),
        params,
    };
    let xi = invert_dense(&wrap(id.sub(&ie).sub(&ei), "xi_base"))?;
    let xi_plus = invert_dense(&wrap(id.sub(&ie), "xi_plus_base"))?;
    let xi_minus = invert_dense(&wrap(id.sub(&ei), "xi_minus_base"))?;
    Ok(KreinBlocks {
        a_int,
        a_ext,
        psi: wrap(psi_mat, "psi"),
        xi: wrap(xi.matrix, "xi"),
        xi_plus: wrap(xi_plus.matrix, "xi_plus"),
        xi_minus: wrap(xi_minus.matrix, "xi_minus"),
        m,
        coupling,
        z,
    })
}

impl KreinBlocks {
    /// `Psi^{-1}`, for comparison with the factorized form
    /// `Xi (I + A_int + A_ext)`.
    pub fn psi_inverse(&self) -> Result<CMat, OperatorError> {
        Ok(invert_dense(&self.psi)?.matrix)
    }

    /// The factorized inverse `Xi (I + A_int + A_ext)`.
    pub fn factored_inverse(&self) -> CMat {
        let id = CMat::identity(self.psi.matrix.rows);
        self.xi.matrix.matmul(&id.add(&self.a_int.matrix).add(&self.a_ext.matrix))
    }
}

/// Smallest-singular-value scan of `Psi_M(a)` over a real spectral window.
#[derive(Clone, Debug)]
pub struct SpectralScan {
    pub grid: Vec<f64>,
    pub sigma_min: Vec<f64>,
    pub m: f64,
    pub coupling: f64,
}

/// Builds `Psi_M(a)` at a real spectral point and returns its weighted
/// matrix (discrete `L^2` metric).
fn psi_weighted_at(mesh: &Arc<SurfaceMesh>, m: f64, coupling: f64, a: f64) -> Result<CMat, OperatorError> {
    let a_int = ps_interior(mesh, KernelParams::real_z(m, a))?;
    let a_ext = ps_exterior(mesh, m + coupling, Complex64::new(a, 0.0))?;
    let id = CMat::identity(a_int.dim());
    let psi = BoundaryOperator {
        matrix: id.sub(&a_int.matrix).sub(&a_ext.matrix),
        mesh: mesh.clone(),
        label: OperatorLabel::Composite("psi".into()),
        params: a_int.params,
    };
    Ok(psi.weighted_matrix())
}

/// Scans `sigma_min(Psi_M(a))` over a uniform grid in `(a_lo, a_hi)`.
/// Points where the boundary factorization fails are recorded as NaN and
/// the scan continues.
pub fn bs_scan(
    mesh: &Arc<SurfaceMesh>,
    m: f64,
    coupling: f64,
    interval: (f64, f64),
    steps: usize,
) -> Result<SpectralScan, SpectralError> {
    let (lo, hi) = interval;
    if !(hi > lo) || steps < 8 {
        return Err(ArgError::new("scan interval must be increasing with at least 8 steps").into());
    }
    if (lo.abs() - m).abs() < 1e-12 || (hi.abs() - m).abs() < 1e-12 {
        return Err(ArgError::new("scan endpoints must avoid the interior mass threshold").into());
    }
    if hi >= m + coupling || lo <= -(m + coupling) {
        return Err(ArgError::new("scan window must stay inside the coupled spectral gap").into());
    }
    let mut grid = Vec::with_capacity(steps);
    let mut sigma_min = Vec::with_capacity(steps);
    for i in 0..steps {
        let a = lo + (hi - lo) * (i as f64 + 0.5) / steps as f64;
        grid.push(a);
        match psi_weighted_at(mesh, m, coupling, a) {
            Ok(w) => sigma_min.push(w.sigma_min()),
            Err(e) => {
                log::warn!("scan point a = {a:.6} failed: {e}");
                sigma_min.push(f64::NAN);
            }
        }
    }
    Ok(SpectralScan { grid, sigma_min, m, coupling })
}

/// A refined root of the Birman-Schwinger characteristic.
#[derive(Clone, Copy, Debug)]
pub struct EigenResult {
    pub value: f64,
    pub residual: f64,
    pub multiplicity_hint: usize,
}

/// Refines a local minimum of the scan inside `bracket = (i_lo, i_hi)`
/// (grid indices): first a few rounds of subgrid localization (the
/// characteristic may pair a pole with the nearby zero), then golden-section
/// down to width `1e-6 * m`.
pub fn refine_eigenvalue(
    mesh: &Arc<SurfaceMesh>,
    scan: &SpectralScan,
    bracket: (usize, usize),
) -> Result<EigenResult, SpectralError> {
    let (i_lo, i_hi) = bracket;
    if i_hi >= scan.grid.len() || i_lo + 2 > i_hi {
        return Err(SpectralError::Bracket(format!("bracket ({i_lo}, {i_hi}) out of range or too narrow")));
    }
    let interior_min = (i_lo + 1..i_hi).any(|i| {
        scan.sigma_min[i].is_finite()
            && scan.sigma_min[i] < scan.sigma_min[i_lo]
            && scan.sigma_min[i] < scan.sigma_min[i_hi]
    });
    if !interior_min {
        return Err(SpectralError::Bracket("no interior minimum in the bracket".into()));
    }
    let eval = |a: f64| -> Result<f64, SpectralError> {
        Ok(psi_weighted_at(mesh, scan.m, scan.coupling, a)?.sigma_min())
    };
    let mut lo = scan.grid[i_lo];
    let mut hi = scan.grid[i_hi];
    // subgrid localization
    for _ in 0..3 {
        let pts = 9usize;
        let mut best = (f64::INFINITY, 0.5 * (lo + hi));
        for i in 0..pts {
            let a = lo + (hi - lo) * (i as f64 + 0.5) / pts as f64;
            let s = eval(a)?;
            if s < best.0 {
                best = (s, a);
            }
        }
        let w = (hi - lo) / pts as f64;
        lo = (best.1 - w).max(lo);
        hi = (best.1 + w).min(hi);
    }
    // golden section
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let width_target = 1e-6 * scan.m;
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while hi - lo > width_target {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = eval(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = eval(d)?;
        }
    }
    let value = 0.5 * (lo + hi);
    let w = psi_weighted_at(mesh, scan.m, scan.coupling, value)?;
    let svals = w.singular_values();
    let residual = *svals.last().unwrap();
    let multiplicity_hint = svals.iter().filter(|s| **s < 10.0 * residual).count();
    Ok(EigenResult { value, residual, multiplicity_hint })
}

/// Local minima of a scan (finite, below both neighbors and below the
/// given ceiling), as candidate brackets for refinement.
pub fn scan_minima(scan: &SpectralScan, ceiling: f64) -> Vec<(usize, usize)> {
    let n = scan.grid.len();
    let mut out = Vec::new();
    for i in 1..n - 1 {
        let s = scan.sigma_min[i];
        if s.is_finite()
            && s < ceiling
            && s <= scan.sigma_min[i - 1]
            && s <= scan.sigma_min[i + 1]
        {
            out.push((i - 1, i + 1));
        }
    }
    out
}

/// Least-squares power-law fit `log residual = slope * log M + intercept`.
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn rate_fit(pairs: &[(f64, f64)]) -> Result<RateFit, ArgError> {
    if pairs.len() < 3 {
        return Err(ArgError::new(format!("rate fit needs at least 3 points, got {}", pairs.len())));
    }
    if pairs.iter().any(|(m, r)| !(*m > 0.0) || !(*r > 0.0)) {
        return Err(ArgError::new("rate fit requires positive abscissae and residuals"));
    }
    let xs: Vec<f64> = pairs.iter().map(|(m, _)| m.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, r)| r.ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { slope, intercept, r2 })
}

/// First-order tangential coupling operator applied to a trace field:
/// `u -> sum_p S_p [(-i grad_Sigma u) ^ n]_p`, quantized spectrally on the
/// sphere.
pub fn tangential_coupling_apply(field: &TraceField) -> Result<TraceField, OperatorError> {
    let mesh = &field.mesh;
    let degree = representable_degree(mesh)?;
    let basis = SphereBasis::for_mesh(mesh, degree)?;
    let n = mesh.len();
    // surface gradients of the four components
    let mut grads = Vec::with_capacity(4);
    for comp in 0..4 {
        let samples: Vec<C> = field.values.iter().map(|v| v[comp]).collect();
        grads.push(basis.surface_gradient(&samples));
    }
    let mut out = TraceField::zeros(mesh);
    let minus_i = Complex64::new(0.0, -1.0);
    for i in 0..n {
        let nrm = mesh.normals[i];
        // w_p(spinor c) = [(-i grad u_c) ^ n]_p
        let mut w: [[C; 4]; 3] = [[C_ZERO; 4]; 3];
        for c in 0..4 {
            let g = [minus_i * grads[c][i][0], minus_i * grads[c][i][1], minus_i * grads[c][i][2]];
            // g ^ n with n real
            w[0][c] = g[1] * nrm.z - g[2] * nrm.y;
            w[1][c] = g[2] * nrm.x - g[0] * nrm.z;
            w[2][c] = g[0] * nrm.y - g[1] * nrm.x;
        }
        let mut acc = [C_ZERO; 4];
        for p in 0..3 {
            let sp = spin_dot_c([
                if p == 0 { Complex64::new(1.0, 0.0) } else { C_ZERO },
                if p == 1 { Complex64::new(1.0, 0.0) } else { C_ZERO },
                if p == 2 { Complex64::new(1.0, 0.0) } else { C_ZERO },
            ]);
            let v = sp.mul_vec(&[w[p][0], w[p][1], w[p][2], w[p][3]]);
            for r in 0..4 {
                acc[r] += v[r];
            }
        }
        out.values[i] = acc;
    }
    Ok(out)
}

/// Coupling matrix of the first-order eigenvalue shifts:
/// `m_kj = (1/2) < beta Op(S·(xi ^ n)) t_k , t_j >_{L^2(Sigma)}` over the
/// given orthonormalized eigentraces, plus its (real) eigenvalues.
pub fn mkj_matrix(traces: &[TraceField]) -> Result<(CMat, Vec<f64>), OperatorError> {
    if traces.is_empty() {
        return Err(OperatorError::Assembly("mkj matrix needs at least one eigentrace".into()));
    }
    let n = traces.len();
    let beta = dirac_beta();
    let mut m = CMat::zeros(n, n);
    for k in 0..n {
        let op_tk = tangential_coupling_apply(&traces[k])?.apply_matrix(&beta);
        for j in 0..n {
            m[(j, k)] = traces[j].inner(&op_tk).conj() * 0.5;
        }
    }
    // hermitian up to quadrature; eigenvalues of the hermitized matrix
    let herm = m.add(&m.adjoint()).scaled(C::new(0.5, 0.0));
    let eig = herm.eigh_values();
    Ok((m, eig))
}
