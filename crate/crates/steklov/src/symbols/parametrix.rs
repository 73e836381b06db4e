//! Boundary-layer parametrix terms.
//!
//! The approximate solution of the half-space system `h d/dtau u = L0(y, h
//! D_y) u + h L1 u` is built termwise: each term has the exponential-
//! polynomial form `A_j(y, xi, tau) = e^{tau rho-(y,xi)/h} sum_k
//! (tau <xi>/h)^k B_{j,k}(y, xi)`. `A_0 = (Pi- P-)/k+ e^{tau rho-/h}`
//! solves the homogeneous system with `P- A_0(0) = P-`; each later term
//! solves the system driven by `L1 A_{j-1} - dL0/dxi . dA_{j-1}/dy` via the
//! closed-form exponential-polynomial primitives, with the growing mode
//! removed and the zero boundary trace restored through the `(P-, Pi+)`
//! reconstruction.

use super::{l0_eigendecomp, L0Decomp};
use crate::clifford::{projector_unchecked, Sign, SpinorMatrix};
use crate::error::OperatorError;
use crate::geometry::{Chart, FD_STEP};
use crate::linalg::C;
use num_complex::Complex64;

/// Pointwise data of one parametrix term: the decay rate and the
/// polynomial coefficients `B_{j,k}`, `k = 0..=2j`.
#[derive(Clone, Debug)]
pub struct TermData {
    pub rho_minus: C,
    pub coeffs: Vec<SpinorMatrix>,
}

impl TermData {
    /// `A_j(y, xi, tau)` reconstructed from the stored form.
    pub fn eval(&self, h: f64, bracket: f64, tau: f64) -> SpinorMatrix {
        let t = tau * bracket / h;
        let mut poly = SpinorMatrix::zero();
        let mut tk = 1.0;
        for b in &self.coeffs {
            poly = poly + b.scaled_re(tk);
            tk *= t;
        }
        poly.scaled((self.rho_minus * tau / h).exp())
    }

    /// `h dA/dtau` of the stored form, analytically.
    pub fn dtau(&self, h: f64, bracket: f64, tau: f64) -> SpinorMatrix {
        let t = tau * bracket / h;
        let mut poly = SpinorMatrix::zero();
        let mut tk = 1.0;
        for (k, b) in self.coeffs.iter().enumerate() {
            poly = poly + b.scaled(self.rho_minus * tk);
            if k + 1 < self.coeffs.len() {
                poly = poly + self.coeffs[k + 1].scaled_re((k as f64 + 1.0) * tk * bracket);
            }
            tk *= t;
        }
        poly.scaled((self.rho_minus * tau / h).exp())
    }
}

/// One term of the parametrix, evaluable at any chart point and frequency.
pub struct ParametrixTerm {
    pub j: usize,
    pub h: f64,
    pub z: C,
    chart: Chart,
}

/// Supported orders: the closed-form primitives are implemented for
/// polynomial degrees up to `2j + 1` with `j <= 2`; higher orders repeat
/// the same recursion step.
pub fn parametrix_term(j: usize, chart: &Chart, h: f64, z: C) -> Result<ParametrixTerm, OperatorError> {
    if j > 2 {
        return Err(OperatorError::Capability {
            required: "parametrix order j <= 2".into(),
            got: format!("j = {j}"),
        });
    }
    if !(h > 0.0 && h <= 1.0) {
        return Err(OperatorError::Assembly(format!("semiclassical parameter h = {h} outside (0, 1]")));
    }
    Ok(ParametrixTerm { j, h, z, chart: chart.clone() })
}

impl ParametrixTerm {
    pub fn data(&self, y: [f64; 2], xi: [f64; 2]) -> TermData {
        term_data(self.j, &self.chart, self.z, y, xi)
    }

    pub fn decomp(&self, y: [f64; 2], xi: [f64; 2]) -> L0Decomp {
        l0_eigendecomp(&self.chart, y, xi, self.z)
    }

    pub fn eval(&self, y: [f64; 2], xi: [f64; 2], tau: f64) -> SpinorMatrix {
        self.data(y, xi).eval(self.h, bracket(xi), tau)
    }

    /// Source coefficients `F_k` of the system this term solves (empty for
    /// the leading term).
    pub fn source(&self, y: [f64; 2], xi: [f64; 2]) -> Vec<SpinorMatrix> {
        if self.j == 0 {
            Vec::new()
        } else {
            source_coeffs(self.j, &self.chart, self.z, y, xi)
        }
    }

    /// Pointwise residual `h dA/dtau - L0 A - F` relative to the term scale.
    pub fn ode_residual(&self, y: [f64; 2], xi: [f64; 2], tau: f64) -> f64 {
        let d = self.data(y, xi);
        let br = bracket(xi);
        let dec = self.decomp(y, xi);
        let lhs = d.dtau(self.h, br, tau);
        let l0a = dec.l0 * d.eval(self.h, br, tau);
        let mut res = lhs - l0a;
        if self.j >= 1 {
            let f = self.source(y, xi);
            let t = tau * br / self.h;
            let mut tk = 1.0;
            let mut ftau = SpinorMatrix::zero();
            for fk in &f {
                ftau = ftau + fk.scaled_re(tk);
                tk *= t;
            }
            res = res - ftau.scaled((d.rho_minus * tau / self.h).exp());
        }
        let scale = d.eval(self.h, br, 0.0).max_abs().max(1e-300);
        res.max_abs() / scale
    }

    /// `P- A_j(y, xi, 0)` minus its required boundary value (`P-` for
    /// `j = 0`, zero for `j >= 1`).
    pub fn boundary_defect(&self, y: [f64; 2], xi: [f64; 2]) -> f64 {
        let d = self.data(y, xi);
        let dec = self.decomp(y, xi);
        let pm = projector_unchecked(dec.normal, Sign::Minus);
        let a0 = d.eval(self.h, bracket(xi), 0.0);
        let target = if self.j == 0 { pm } else { SpinorMatrix::zero() };
        (pm * a0 - target).max_abs()
    }
}

fn bracket(xi: [f64; 2]) -> f64 {
    (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).sqrt()
}

/// `d L0 / d xi_q`, frequency-independent: `(i alpha·n / stretch) alpha_q`.
fn l0_xi_derivatives(dec: &L0Decomp) -> [SpinorMatrix; 2] {
    let i = Complex64::new(0.0, 1.0);
    let an = crate::clifford::alpha_dot(dec.normal).scaled(i / dec.stretch);
    [
        an * crate::clifford::alpha_dot(crate::clifford::Vec3::new(1.0, 0.0, 0.0)),
        an * crate::clifford::alpha_dot(crate::clifford::Vec3::new(0.0, 1.0, 0.0)),
    ]
}

fn term_data(j: usize, chart: &Chart, z: C, y: [f64; 2], xi: [f64; 2]) -> TermData {
    let dec = l0_eigendecomp(chart, y, xi, z);
    if j == 0 {
        let b00 = (dec.pi_minus * projector_unchecked(dec.normal, Sign::Minus)).scaled_re(1.0 / dec.k_plus);
        return TermData { rho_minus: dec.rho_minus, coeffs: vec![b00] };
    }
    let f = source_coeffs(j, chart, z, y, xi);
    let br = bracket(xi);
    let rho_gap = dec.rho_minus - dec.rho_plus;
    let mu = rho_gap / br;
    let mut coeffs = vec![SpinorMatrix::zero(); 2 * j + 1];
    let mut btilde = SpinorMatrix::zero();
    for (k, fk) in f.iter().enumerate() {
        let minus_part = dec.pi_minus * *fk;
        coeffs[k + 1] = coeffs[k + 1] + minus_part.scaled_re(1.0 / ((k as f64 + 1.0) * br));
        let plus_part = dec.pi_plus * *fk;
        // beta_k = <xi>^k / (rho- - rho+)^{k+1}
        let beta_k = Complex64::new(br, 0.0).powu(k as u32) / rho_gap.powu(k as u32 + 1);
        let kfact: f64 = (1..=k).map(|v| v as f64).product();
        let pk0 = if k % 2 == 0 { kfact } else { -kfact };
        btilde = btilde + plus_part.scaled(beta_k * pk0);
        // e^{tau rho-} P_k(mu t) expansion: coefficient of t^i is
        // (-1)^{k-i} (k!/i!) mu^i
        let mut ifact = 1.0;
        for i in 0..=k {
            if i > 0 {
                ifact *= i as f64;
            }
            let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
            let coeff = beta_k * Complex64::new(sign * kfact / ifact, 0.0) * mu.powu(i as u32);
            coeffs[i] = coeffs[i] + plus_part.scaled(coeff);
        }
    }
    // remove the growing mode and restore the zero boundary trace:
    // A_j(0) = (P+ / k+) btilde  (so Pi+ A_j(0) = btilde, P- A_j(0) = 0)
    let a0 = (projector_unchecked(dec.normal, Sign::Plus) * btilde).scaled_re(1.0 / dec.k_plus);
    coeffs[0] = coeffs[0] + dec.pi_minus * a0;
    TermData { rho_minus: dec.rho_minus, coeffs }
}

/// Source `F_k` of the order-`j` system: `L1 A_{j-1} - dL0/dxi . dA_{j-1}/dy`
/// expanded over the exponential-polynomial basis. Chart derivatives of the
/// previous term are taken analytically where the chart provides them and by
/// central differences with step [`FD_STEP`] otherwise.
fn source_coeffs(j: usize, chart: &Chart, z: C, y: [f64; 2], xi: [f64; 2]) -> Vec<SpinorMatrix> {
    let dec = l0_eigendecomp(chart, y, xi, z);
    let prev = term_data(j - 1, chart, z, y, xi);
    let br = bracket(xi);
    let dxi_l0 = l0_xi_derivatives(&dec);
    // central differences of the previous term in y
    let s = FD_STEP;
    let mut dy_coeffs: Vec<[SpinorMatrix; 2]> = vec![[SpinorMatrix::zero(), SpinorMatrix::zero()]; prev.coeffs.len()];
    let mut dy_rho = [Complex64::new(0.0, 0.0); 2];
    for q in 0..2 {
        let mut yp = y;
        let mut ym = y;
        if q == 0 {
            yp[0] += s;
            ym[0] -= s;
        } else {
            yp[1] += s;
            ym[1] -= s;
        }
        let tp = term_data(j - 1, chart, z, yp, xi);
        let tm = term_data(j - 1, chart, z, ym, xi);
        dy_rho[q] = (tp.rho_minus - tm.rho_minus) / (2.0 * s);
        for k in 0..prev.coeffs.len() {
            dy_coeffs[k][q] = (tp.coeffs[k] - tm.coeffs[k]).scaled_re(1.0 / (2.0 * s));
        }
    }
    let kmax = 2 * (j - 1) + 1;
    let mut f = vec![SpinorMatrix::zero(); kmax + 1];
    for k in 0..=kmax {
        let mut fk = SpinorMatrix::zero();
        if k < prev.coeffs.len() {
            fk = fk + dec.l1 * prev.coeffs[k];
            for q in 0..2 {
                fk = fk - dxi_l0[q] * dy_coeffs[k][q];
            }
        }
        if k >= 1 && k - 1 < prev.coeffs.len() {
            for q in 0..2 {
                fk = fk - (dxi_l0[q] * prev.coeffs[k - 1]).scaled(dy_rho[q] / br);
            }
        }
        f[k] = fk;
    }
    f
}
