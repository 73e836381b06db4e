//! Spherical-harmonic transforms on product sphere meshes.
//!
//! The Gauss-Legendre x trapezoid mesh integrates products of harmonics
//! exactly up to the band limit, so forward/inverse transforms below are
//! exact on band-limited data. Normalization is orthonormal on the unit
//! sphere with the Condon-Shortley phase.

use crate::clifford::Vec3;
use crate::error::OperatorError;
use crate::geometry::SurfaceMesh;
use crate::linalg::{C, C_ZERO};
use num_complex::Complex64;

/// Coefficient index of `(l, m)`: `l^2 + l + m`.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (m + l as i64) as usize
}

/// Normalized associated Legendre values `P~_l^m(cos theta)` for all
/// `0 <= m <= l <= max_degree`, packed as `p[l*(l+1)/2 + m]`, together with
/// their theta-derivatives.
fn legendre_tables(max_degree: usize, cos_t: f64, sin_t: f64) -> (Vec<f64>, Vec<f64>) {
    let count = (max_degree + 1) * (max_degree + 2) / 2;
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut p = vec![0.0; count];
    let mut dp = vec![0.0; count];
    p[0] = (4.0 * std::f64::consts::PI).sqrt().recip();
    for m in 1..=max_degree {
        // sectoral, with the Condon-Shortley sign folded in
        p[idx(m, m)] = -((2.0 * m as f64 + 1.0) / (2.0 * m as f64)).sqrt() * sin_t * p[idx(m - 1, m - 1)];
    }
    for m in 0..max_degree {
        p[idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * cos_t * p[idx(m, m)];
    }
    for m in 0..=max_degree {
        for l in (m + 2)..=max_degree {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[idx(l, m)] = a * (cos_t * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
        }
    }
    // d/dtheta via the l-lowering relation; interior Gauss nodes keep
    // sin_t bounded away from zero.
    for m in 0..=max_degree {
        for l in m..=max_degree {
            let lf = l as f64;
            let mf = m as f64;
            let lower = if l > m {
                ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - mf * mf)).sqrt() * p[idx(l - 1, m)]
            } else {
                0.0
            };
            dp[idx(l, m)] = (lf * cos_t * p[idx(l, m)] - lower) / sin_t;
        }
    }
    (p, dp)
}

/// Single-point spherical harmonic `Y_l^m` at a unit direction.
pub fn sph_harm(l: usize, m: i64, dir: Vec3) -> C {
    let cos_t = dir.z.clamp(-1.0, 1.0);
    let sin_t = (1.0 - cos_t * cos_t).sqrt().max(1e-300);
    let phi = dir.y.atan2(dir.x);
    let (p, _) = legendre_tables(l, cos_t, sin_t);
    let ma = m.unsigned_abs() as usize;
    let base = p[l * (l + 1) / 2 + ma];
    let phase = Complex64::new(0.0, ma as f64 * phi).exp();
    if m >= 0 {
        base * phase
    } else {
        // Y_{l,-m} = (-1)^m conj(Y_{l,m})
        let sgn = if ma % 2 == 0 { 1.0 } else { -1.0 };
        sgn * base * phase.conj()
    }
}

/// Single-point `Y_lm` together with its surface gradient on the unit
/// sphere (ambient coordinates). Inaccurate within ~1e-12 of the poles,
/// where the angular frame degenerates; quadrature nodes never sit there.
pub fn sph_harm_with_grad(l: usize, m: i64, dir: Vec3) -> (C, [C; 3]) {
    let cos_t = dir.z.clamp(-1.0, 1.0);
    let sin_t = (1.0 - cos_t * cos_t).sqrt().max(1e-12);
    let phi = dir.y.atan2(dir.x);
    let (p, dp) = legendre_tables(l, cos_t, sin_t);
    let ma = m.unsigned_abs() as usize;
    let base = p[l * (l + 1) / 2 + ma];
    let dbase = dp[l * (l + 1) / 2 + ma];
    let phase = Complex64::new(0.0, ma as f64 * phi).exp();
    let (y, dth, mphase) = if m >= 0 {
        (base * phase, dbase * phase, Complex64::new(0.0, ma as f64))
    } else {
        let sgn = if ma % 2 == 0 { 1.0 } else { -1.0 };
        (sgn * base * phase.conj(), sgn * dbase * phase.conj(), Complex64::new(0.0, -(ma as f64)))
    };
    let e_theta = Vec3::new(cos_t * phi.cos(), cos_t * phi.sin(), -sin_t);
    let e_phi = Vec3::new(-phi.sin(), phi.cos(), 0.0);
    let dphi_over_sin = y * mphase / sin_t;
    (
        y,
        [
            dth * e_theta.x + dphi_over_sin * e_phi.x,
            dth * e_theta.y + dphi_over_sin * e_phi.y,
            dth * e_theta.z + dphi_over_sin * e_phi.z,
        ],
    )
}

/// Tabulated harmonics on a sphere mesh with transforms and tangential
/// derivatives.
pub struct SphereBasis {
    pub max_degree: usize,
    pub radius: f64,
    node_count: usize,
    /// `Y_lm(x_i)`, row-major `[node][lm_index]`.
    ylm: Vec<C>,
    /// `d(theta) Y_lm(x_i)`.
    dtheta: Vec<C>,
    /// Unit vectors `e_theta`, `e_phi` per node.
    frames: Vec<(Vec3, Vec3)>,
    weights: Vec<f64>,
}

impl SphereBasis {
    pub fn for_mesh(mesh: &SurfaceMesh, max_degree: usize) -> Result<Self, OperatorError> {
        let (radius, order) = mesh.sphere_data().ok_or_else(|| OperatorError::Capability {
            required: "sphere mesh".into(),
            got: format!("{:?}", mesh.kind),
        })?;
        if max_degree + 1 > order {
            return Err(OperatorError::Capability {
                required: format!("mesh order > degree {max_degree}"),
                got: format!("order {order}"),
            });
        }
        let n = mesh.len();
        let ncoef = (max_degree + 1) * (max_degree + 1);
        let mut ylm = vec![C_ZERO; n * ncoef];
        let mut dtheta = vec![C_ZERO; n * ncoef];
        let mut frames = Vec::with_capacity(n);
        for (i, node) in mesh.nodes.iter().enumerate() {
            let dir = node.scaled(1.0 / radius);
            let cos_t = dir.z.clamp(-1.0, 1.0);
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let phi = dir.y.atan2(dir.x);
            let (p, dp) = legendre_tables(max_degree, cos_t, sin_t);
            let e_theta = Vec3::new(cos_t * phi.cos(), cos_t * phi.sin(), -sin_t);
            let e_phi = Vec3::new(-phi.sin(), phi.cos(), 0.0);
            frames.push((e_theta, e_phi));
            for l in 0..=max_degree {
                for m in 0..=(l as i64) {
                    let ma = m as usize;
                    let base = p[l * (l + 1) / 2 + ma];
                    let dbase = dp[l * (l + 1) / 2 + ma];
                    let phase = Complex64::new(0.0, ma as f64 * phi).exp();
                    ylm[i * ncoef + lm_index(l, m)] = base * phase;
                    dtheta[i * ncoef + lm_index(l, m)] = dbase * phase;
                    if m > 0 {
                        let sgn = if ma % 2 == 0 { 1.0 } else { -1.0 };
                        ylm[i * ncoef + lm_index(l, -m)] = sgn * base * phase.conj();
                        dtheta[i * ncoef + lm_index(l, -m)] = sgn * dbase * phase.conj();
                    }
                }
            }
        }
        Ok(SphereBasis {
            max_degree,
            radius,
            node_count: n,
            ylm,
            dtheta,
            frames,
            weights: mesh.weights.clone(),
        })
    }

    pub fn coeff_count(&self) -> usize {
        (self.max_degree + 1) * (self.max_degree + 1)
    }

    /// `Y_lm(x_i)` by coefficient index.
    pub fn value(&self, idx: usize, node: usize) -> C {
        self.ylm[node * self.coeff_count() + idx]
    }

    /// Surface gradient of `Y_lm` at node `i`, on the unit sphere (no radius
    /// scaling), in ambient coordinates.
    pub fn grad_unit_sphere(&self, idx: usize, node: usize) -> [C; 3] {
        let ncoef = self.coeff_count();
        let dth = self.dtheta[node * ncoef + idx];
        let y = self.ylm[node * ncoef + idx];
        let l = self.degree_of(idx);
        let m = idx as i64 - (l * l + l) as i64;
        let (e_theta, e_phi) = self.frames[node];
        let sin_theta = (-e_theta.z).max(1e-300);
        let dphi_over_sin = y * Complex64::new(0.0, m as f64) / sin_theta;
        [
            dth * e_theta.x + dphi_over_sin * e_phi.x,
            dth * e_theta.y + dphi_over_sin * e_phi.y,
            dth * e_theta.z + dphi_over_sin * e_phi.z,
        ]
    }

    pub fn degree_of(&self, idx: usize) -> usize {
        (idx as f64).sqrt() as usize
    }

    /// Forward transform: `c_lm = R^{-2} sum_i w_i conj(Y_lm(x_i)) f_i`.
    pub fn forward(&self, samples: &[C]) -> Vec<C> {
        assert_eq!(samples.len(), self.node_count);
        let ncoef = self.coeff_count();
        let mut coeffs = vec![C_ZERO; ncoef];
        let r2 = self.radius * self.radius;
        for i in 0..self.node_count {
            let scale = self.weights[i] / r2;
            let row = &self.ylm[i * ncoef..(i + 1) * ncoef];
            let f = samples[i] * scale;
            for (c, y) in coeffs.iter_mut().zip(row) {
                *c += y.conj() * f;
            }
        }
        coeffs
    }

    /// Inverse transform (synthesis at the mesh nodes).
    pub fn inverse(&self, coeffs: &[C]) -> Vec<C> {
        let ncoef = self.coeff_count();
        assert_eq!(coeffs.len(), ncoef);
        (0..self.node_count)
            .map(|i| {
                let row = &self.ylm[i * ncoef..(i + 1) * ncoef];
                row.iter().zip(coeffs).map(|(y, c)| y * c).sum()
            })
            .collect()
    }

    /// Surface gradient of a scalar sample vector, returned per node in
    /// ambient coordinates: `grad f = (d_theta f e_theta + (sin
    /// theta)^{-1} d_phi f e_phi)/R`.
    pub fn surface_gradient(&self, samples: &[C]) -> Vec<[C; 3]> {
        let coeffs = self.forward(samples);
        let ncoef = self.coeff_count();
        (0..self.node_count)
            .map(|i| {
                let yrow = &self.ylm[i * ncoef..(i + 1) * ncoef];
                let drow = &self.dtheta[i * ncoef..(i + 1) * ncoef];
                let mut df_dtheta = C_ZERO;
                let mut df_dphi = C_ZERO;
                for l in 0..=self.max_degree {
                    for m in -(l as i64)..=(l as i64) {
                        let idx = lm_index(l, m);
                        df_dtheta += coeffs[idx] * drow[idx];
                        df_dphi += coeffs[idx] * yrow[idx] * Complex64::new(0.0, m as f64);
                    }
                }
                let (e_theta, e_phi) = self.frames[i];
                let sin_theta = -e_theta.z;
                let mut out = [C_ZERO; 3];
                let inv_r = 1.0 / self.radius;
                let phi_term = df_dphi / sin_theta.max(1e-300);
                for (k, (et, ep)) in [
                    (e_theta.x, e_phi.x),
                    (e_theta.y, e_phi.y),
                    (e_theta.z, e_phi.z),
                ]
                .iter()
                .enumerate()
                {
                    out[k] = (df_dtheta * *et + phi_term * *ep) * inv_r;
                }
                out
            })
            .collect()
    }
}
