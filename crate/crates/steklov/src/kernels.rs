//! Pointwise kernels: the fundamental solution of `D_m - z`, its split into
//! a strongly singular odd part and an `O(1/r)` remainder, and the Helmholtz
//! single-layer kernel.

use crate::clifford::{alpha_dot, dirac_beta, SpinorMatrix, Vec3};
use crate::error::DomainError;
use num_complex::Complex64;

/// Mass, spectral parameter, and the branch root `k = sqrt(z^2 - m^2)`.
///
/// The branch is fixed by `Im k >= 0`; for real `z` with `|z| < m` the root
/// is purely imaginary with positive imaginary part, so the kernels decay
/// exponentially. On the boundary of the convention (`z^2 - m^2` real
/// positive) the positive real root is taken, which keeps real `z` with
/// `|z| > m` usable for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub m: f64,
    pub z: Complex64,
    pub k: Complex64,
}

impl KernelParams {
    pub fn new(m: f64, z: Complex64) -> Self {
        KernelParams { m, z, k: branch_sqrt(z, m) }
    }

    pub fn real_z(m: f64, z: f64) -> Self {
        Self::new(m, Complex64::new(z, 0.0))
    }
}

/// `sqrt(z^2 - m^2)` with `Im >= 0`, positive real root on the branch cut.
pub fn branch_sqrt(z: Complex64, m: f64) -> Complex64 {
    let w = z * z - m * m;
    let s = w.sqrt();
    if s.im < 0.0 {
        -s
    } else if s.im == 0.0 {
        Complex64::new(s.re.abs(), 0.0)
    } else {
        s
    }
}

/// Fundamental solution of `D_m - z` at `x != 0`:
/// `e^{ik|x|}/(4 pi |x|) (z + m beta + (1 - ik|x|) i alpha·x / |x|^2)`.
pub fn phi_z(x: Vec3, p: &KernelParams) -> Result<SpinorMatrix, DomainError> {
    let r = x.norm();
    if r == 0.0 {
        return Err(DomainError::new("fundamental solution evaluated at the origin"));
    }
    Ok(phi_z_unchecked(x, r, p))
}

/// [`phi_z`] with `r = |x| > 0` precomputed; the assembly hot path.
#[inline]
pub fn phi_z_unchecked(x: Vec3, r: f64, p: &KernelParams) -> SpinorMatrix {
    let ikr = Complex64::new(0.0, 1.0) * p.k * r;
    let front = ikr.exp() / (4.0 * std::f64::consts::PI * r);
    let radial = (Complex64::new(1.0, 0.0) - ikr) * Complex64::new(0.0, 1.0) / (r * r);
    let mut out = dirac_beta().scaled(front * p.m);
    let scalar = front * p.z;
    for d in 0..4 {
        out[(d, d)] += scalar;
    }
    out + alpha_dot(x).scaled(front * radial)
}

/// The strongly singular odd part `w(x) = i alpha·x / (4 pi |x|^3)`.
pub fn w_part(x: Vec3, r: f64) -> SpinorMatrix {
    alpha_dot(x).scaled(Complex64::new(0.0, 1.0 / (4.0 * std::f64::consts::PI * r * r * r)))
}

/// Splits the fundamental solution as `phi = k_part + w_part` with
/// `w_part = i alpha·x/(4 pi |x|^3)` odd and `k_part = O(1/|x|)` at the
/// origin. The split is exact: the parts sum back to [`phi_z`].
pub fn kernel_split(x: Vec3, p: &KernelParams) -> Result<(SpinorMatrix, SpinorMatrix), DomainError> {
    let r = x.norm();
    if r == 0.0 {
        return Err(DomainError::new("kernel split evaluated at the origin"));
    }
    let w = w_part(x, r);
    let k = phi_z_unchecked(x, r, p) - w;
    Ok((k, w))
}

/// Scalar single-layer kernel `e^{ik|x|}/(4 pi |x|)` of the Helmholtz
/// operator `-Delta + m^2 - z^2`.
pub fn single_layer_kernel(x: Vec3, p: &KernelParams) -> Result<Complex64, DomainError> {
    let r = x.norm();
    if r == 0.0 {
        return Err(DomainError::new("single layer kernel evaluated at the origin"));
    }
    Ok(single_layer_unchecked(r, p))
}

#[inline]
pub fn single_layer_unchecked(r: f64, p: &KernelParams) -> Complex64 {
    (Complex64::new(0.0, 1.0) * p.k * r).exp() / (4.0 * std::f64::consts::PI * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::{dirac_alpha, gamma5};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn branch_examples() {
        let i = Complex64::new(0.0, 1.0);
        assert!((branch_sqrt(Complex64::new(0.0, 0.0), 1.0) - i).norm() < 1e-15);
        assert!((branch_sqrt(i, 1.0) - i * 2f64.sqrt()).norm() < 1e-15);
        assert!((branch_sqrt(Complex64::new(2.0, 0.0), 1.0) - 3f64.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn branch_is_a_square_root_with_positive_imag() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let z = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let m = rng.gen_range(0.1..4.0);
            let k = branch_sqrt(z, m);
            assert!((k * k - (z * z - m * m)).norm() < 1e-12);
            assert!(k.im >= 0.0);
        }
    }

    #[test]
    fn phi_hand_value_at_e3() {
        // m=1, z=0: k=i, and phi(e3) = e^{-1}/(4 pi) (beta + 2 i alpha3).
        let p = KernelParams::real_z(1.0, 0.0);
        let got = phi_z(Vec3::new(0.0, 0.0, 1.0), &p).unwrap();
        let c = (-1f64).exp() / (4.0 * PI);
        let want = (dirac_beta() + dirac_alpha(3).unwrap().scaled(Complex64::new(0.0, 2.0))).scaled_re(c);
        assert!((got - want).max_abs() < 1e-15);
    }

    #[test]
    fn phi_conjugation_symmetry() {
        // phi^z(y-x)^* = phi^{zbar}(x-y)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if x.norm() < 1e-3 {
                continue;
            }
            let z = Complex64::new(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9));
            let p = KernelParams::new(1.0, z);
            let pbar = KernelParams::new(1.0, z.conj());
            let lhs = phi_z(-x, &p).unwrap().adjoint();
            let rhs = phi_z(x, &pbar).unwrap();
            assert!((lhs - rhs).max_abs() <= 1e-13 * (1.0 + rhs.max_abs()));
        }
    }

    #[test]
    fn phi_decays_subcritically() {
        let p = KernelParams::real_z(1.0, 0.0);
        // entries decay like e^{-r}/r along e1
        let v8 = phi_z(Vec3::new(8.0, 0.0, 0.0), &p).unwrap().max_abs();
        let v16 = phi_z(Vec3::new(16.0, 0.0, 0.0), &p).unwrap().max_abs();
        let expected_ratio = ((-16f64).exp() / 16.0) / ((-8f64).exp() / 8.0);
        assert!((v16 / v8 - expected_ratio).abs() / expected_ratio < 0.2);
    }

    #[test]
    fn split_sums_to_phi_and_w_is_odd() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if x.norm() < 1e-2 {
                continue;
            }
            let p = KernelParams::new(1.5, Complex64::new(0.3, 0.2));
            let (k, w) = kernel_split(x, &p).unwrap();
            let phi = phi_z(x, &p).unwrap();
            assert!((k + w - phi).max_abs() <= 1e-14 * phi.max_abs().max(1.0));
            let w_neg = kernel_split(-x, &p).unwrap().1;
            assert!((w_neg + w).max_abs() <= 1e-13 * w.max_abs());
        }
    }

    #[test]
    fn split_asymptotics_near_origin() {
        let p = KernelParams::real_z(1.0, 0.0);
        let eps = 1e-3;
        let x = Vec3::new(eps, 0.0, 0.0);
        let (k, w) = kernel_split(x, &p).unwrap();
        // w ~ 1/(4 pi eps^2), k stays O(1/eps)
        assert!((w.max_abs() * 4.0 * PI * eps * eps - 1.0).abs() < 1e-10);
        assert!(k.max_abs() * eps < 1.0);
    }

    #[test]
    fn single_layer_values() {
        let p = KernelParams::real_z(1.0, 0.0);
        let v = single_layer_kernel(Vec3::new(1.0, 0.0, 0.0), &p).unwrap();
        assert!((v - (-1f64).exp() / (4.0 * PI)).norm() < 1e-15);
        // real and positive for z in the gap
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if x.norm() < 1e-2 {
                continue;
            }
            let v = single_layer_kernel(x, &p).unwrap();
            assert!(v.im.abs() < 1e-16 && v.re > 0.0);
        }
        // half-gap value
        let p = KernelParams::real_z(1.0, 0.5);
        let r = 1.3;
        let v = single_layer_kernel(Vec3::new(r, 0.0, 0.0), &p).unwrap();
        let want = (-(0.75f64).sqrt() * r).exp() / (4.0 * PI * r);
        assert!((v - want).norm() < 1e-15);
    }

    #[test]
    fn kernel_rejects_origin() {
        let p = KernelParams::real_z(1.0, 0.0);
        assert!(phi_z(Vec3::zero(), &p).is_err());
        assert!(kernel_split(Vec3::zero(), &p).is_err());
        assert!(single_layer_kernel(Vec3::zero(), &p).is_err());
    }

    /// Central-difference application of `D_m - z` to the columns of `phi`,
    /// which must vanish away from the origin.
    fn dirac_residual(x: Vec3, p: &KernelParams, h: f64) -> f64 {
        let col = |y: Vec3, c: usize| -> [Complex64; 4] {
            let m = phi_z(y, p).unwrap();
            [m[(0, c)], m[(1, c)], m[(2, c)], m[(3, c)]]
        };
        let mut worst: f64 = 0.0;
        for c in 0..4 {
            let mut dm = SpinorMatrix::zero();
            for (j, e) in [Vec3::new(h, 0.0, 0.0), Vec3::new(0.0, h, 0.0), Vec3::new(0.0, 0.0, h)]
                .iter()
                .enumerate()
            {
                let fp = col(x + *e, c);
                let fm = col(x - *e, c);
                let aj = dirac_alpha(j + 1).unwrap();
                for r in 0..4 {
                    let d = (fp[r] - fm[r]) / (2.0 * h);
                    for rr in 0..4 {
                        dm[(rr, c)] += aj[(rr, r)] * d * Complex64::new(0.0, -1.0);
                    }
                }
            }
            let v = col(x, c);
            let b = dirac_beta();
            let mut res: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for r in 0..4 {
                let mut bv = Complex64::new(0.0, 0.0);
                for k in 0..4 {
                    bv += b[(r, k)] * v[k];
                }
                let total = dm[(r, c)] + bv * p.m - v[r] * p.z;
                res = res.max(total.norm());
                scale = scale.max(v[r].norm());
            }
            worst = worst.max(res / scale.max(1e-30));
        }
        let _ = gamma5();
        worst
    }

    #[test]
    fn phi_solves_dirac_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = KernelParams::new(1.0, Complex64::new(0.2, 0.1));
        for _ in 0..100 {
            let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let Some(u) = dir.normalized() else { continue };
            let x = u.scaled(rng.gen_range(0.5..2.0));
            assert!(dirac_residual(x, &p, 1e-4) <= 1e-5);
        }
    }
}
