//! Classical and semiclassical principal symbols of the boundary operators,
//! the eigenstructure of the boundary-layer symbol `L0`, the half-space
//! Fourier multiplier, flat quantization, and wavepacket probes of the
//! assembled Poincaré–Steklov operators.

mod parametrix;
mod quantize;
mod wavepacket;

pub use parametrix::{parametrix_term, ParametrixTerm, TermData};
pub use quantize::{flat_quantize, SpinorGrid, SymbolField};
pub use wavepacket::{wavepacket_compare, wavepacket_compare_matfree, SymbolKind};

use crate::clifford::{
    alpha_dot, alpha_dot_c, dirac_beta, projector_unchecked, spin_dot, Sign, SpinorMatrix, Vec3,
};
use crate::error::DomainError;
use crate::geometry::{chart_metric, chart_normal, Chart, ChartMetric};
use num_complex::Complex64;

/// Classical principal symbol of the Cauchy operator in a chart:
/// `1/2 alpha · v` with `v = (G^{-1} xi, <grad chi, G^{-1} xi>) / <G^{-1}
/// xi, xi>^{1/2}`; homogeneous of order zero, undefined at `xi = 0`.
pub fn cauchy_principal_symbol(metric: &ChartMetric, xi: [f64; 2]) -> Result<SpinorMatrix, DomainError> {
    if xi[0] == 0.0 && xi[1] == 0.0 {
        return Err(DomainError::new("cauchy symbol is homogeneous of order 0, undefined at xi = 0"));
    }
    let gxi = metric.apply_g_inv(xi);
    let quad = (gxi[0] * xi[0] + gxi[1] * xi[1]).sqrt();
    let v = Vec3::new(
        gxi[0] / quad,
        gxi[1] / quad,
        (metric.grad_chi[0] * gxi[0] + metric.grad_chi[1] * gxi[1]) / quad,
    );
    Ok(alpha_dot(v).scaled_re(0.5))
}

/// Classical principal symbol of the interior Poincaré–Steklov operator:
/// `S·(xi ^ n)/|xi ^ n| P-(n)`, with the planar frequency embedded as
/// `(xi_1, xi_2, 0)`. Undefined when `xi` is parallel to `n`.
pub fn ps_classical_symbol(n: Vec3, xi3: Vec3) -> Result<SpinorMatrix, DomainError> {
    let w = xi3.cross(n);
    let norm = w.norm();
    if norm == 0.0 {
        return Err(DomainError::new("PS symbol undefined for frequency parallel to the normal"));
    }
    Ok(spin_dot(w.scaled(1.0 / norm)) * projector_unchecked(n, Sign::Minus))
}

/// Semiclassical principal symbol of the Poincaré–Steklov operator at
/// rescaled frequency `h xi`: `S·(h xi ^ n)/(sqrt(|h xi ^ n|^2 + 1) + 1)
/// P-(n)`. Regular at zero frequency.
pub fn ps_semiclassical_symbol(n: Vec3, hxi: Vec3) -> SpinorMatrix {
    let w = hxi.cross(n);
    let denom = (w.dot(w) + 1.0).sqrt() + 1.0;
    spin_dot(w.scaled(1.0 / denom)) * projector_unchecked(n, Sign::Minus)
}

/// Eigenstructure of the boundary-layer symbol `L0` at a chart point.
#[derive(Clone, Debug)]
pub struct L0Decomp {
    pub l0: SpinorMatrix,
    pub l1: SpinorMatrix,
    pub lambda: f64,
    pub rho_plus: Complex64,
    pub rho_minus: Complex64,
    pub pi_plus: SpinorMatrix,
    pub pi_minus: SpinorMatrix,
    pub k_plus: f64,
    pub k_minus: f64,
    pub theta: SpinorMatrix,
    /// Pull-back normal `n` and the reduced normal `n / sqrt(1+|grad chi|^2)`.
    pub normal: Vec3,
    pub normal_reduced: Vec3,
    /// `sqrt(1 + |grad chi|^2)`.
    pub stretch: f64,
}

/// Decomposes `L0(y, xi) = (i alpha·n / sqrt(1+|grad chi|^2))(alpha·xi +
/// beta)` into its two double eigenvalues `rho±` and eigenprojections
/// `Pi±`, along with the scalars `k± = (1 ± 1/lambda)/2` and the coupling
/// block `Theta = S·(n ^ xi)/(2 lambda)`.
pub fn l0_eigendecomp(chart: &Chart, y: [f64; 2], xi: [f64; 2], z: Complex64) -> L0Decomp {
    let n = chart_normal(chart, y);
    let grad = chart.gradient(y);
    let stretch = (1.0 + grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
    let xi3 = Vec3::new(xi[0], xi[1], 0.0);
    let i = Complex64::new(0.0, 1.0);
    let l0 = (alpha_dot(n) * (alpha_dot(xi3) + dirac_beta())).scaled(i / stretch);
    let l1 = alpha_dot(n).scaled(-i * z / stretch);
    let w = n.cross(xi3);
    let lambda = (w.dot(w) + 1.0).sqrt();
    let core = spin_dot(w) - (dirac_beta() * alpha_dot(n)).scaled(i);
    let half = Complex64::new(0.5, 0.0);
    let pi_plus = (SpinorMatrix::identity() + core.scaled_re(1.0 / lambda)).scaled(half);
    let pi_minus = (SpinorMatrix::identity() - core.scaled_re(1.0 / lambda)).scaled(half);
    let ndxi = n.dot(xi3);
    let rho_plus = (i * ndxi + lambda) / stretch;
    let rho_minus = (i * ndxi - lambda) / stretch;
    L0Decomp {
        l0,
        l1,
        lambda,
        rho_plus,
        rho_minus,
        pi_plus,
        pi_minus,
        k_plus: 0.5 * (1.0 + 1.0 / lambda),
        k_minus: 0.5 * (1.0 - 1.0 / lambda),
        theta: spin_dot(w).scaled_re(1.0 / (2.0 * lambda)),
        normal: n,
        normal_reduced: n.scaled(1.0 / stretch),
        stretch,
    }
}

/// Half-space Fourier multiplier of the Poincaré–Steklov map on
/// `{x_3 > 0}`: `a_m(xi) = -i alpha_3 (alpha·xi - z) P-(-e3) /
/// (sqrt(|xi|^2 + m^2) + m)`, with `xi` embedded as `(xi_1, xi_2, 0)`.
pub fn halfspace_multiplier(xi: [f64; 2], m: f64, z: Complex64) -> SpinorMatrix {
    let xi3 = Vec3::new(xi[0], xi[1], 0.0);
    let n = Vec3::new(0.0, 0.0, -1.0);
    let p_minus = projector_unchecked(n, Sign::Minus);
    let denom = (xi3.dot(xi3) + m * m).sqrt() + m;
    let mut core = alpha_dot_c([
        Complex64::new(xi[0], 0.0),
        Complex64::new(xi[1], 0.0),
        Complex64::new(0.0, 0.0),
    ]);
    for r in 0..4 {
        core[(r, r)] -= z;
    }
    let alpha3 = alpha_dot(Vec3::new(0.0, 0.0, 1.0));
    (alpha3 * core * p_minus).scaled(Complex64::new(0.0, -1.0 / denom))
}

/// Exact half-space Poincaré–Steklov multiplier from the decaying-mode
/// construction: solve `v' = (M + i z alpha_3) v` on `x_3 > 0` with
/// `M = -i alpha_3 (alpha·xi + m beta)`, keep the decaying eigenspace, and
/// map the `P-` trace to the `P+` trace. `M` and `alpha_3` anticommute and
/// `(M + iz alpha_3)^2 = |xi|^2 + m^2 - z^2`, so the decaying projector is
/// `(I - (M + iz alpha_3)/mu)/2` with `mu` the branch root.
pub fn halfspace_ps_exact(xi: [f64; 2], m: f64, z: Complex64) -> SpinorMatrix {
    let xi3 = Vec3::new(xi[0], xi[1], 0.0);
    let n = Vec3::new(0.0, 0.0, -1.0);
    let alpha3 = alpha_dot(Vec3::new(0.0, 0.0, 1.0));
    let i = Complex64::new(0.0, 1.0);
    let mut core = alpha_dot(xi3) + dirac_beta().scaled_re(m);
    for r in 0..4 {
        core[(r, r)] -= z;
    }
    let generator = (alpha3 * core).scaled(-i);
    let mu = {
        let w = Complex64::new(xi3.dot(xi3) + m * m, 0.0) - z * z;
        let s = w.sqrt();
        if s.re < 0.0 {
            -s
        } else {
            s
        }
    };
    let proj_decay = (SpinorMatrix::identity() - generator.scaled(1.0 / mu)).scaled_re(0.5);
    let p_minus = projector_unchecked(n, Sign::Minus);
    let p_plus = projector_unchecked(n, Sign::Plus);
    // trace map on the decaying eigenspace: g -> P+ w where w in the
    // eigenspace has P- w = g; by the sandwich identities P- proj P- is a
    // positive multiple of P-, so the normalization is scalar.
    let sandwich = p_minus * proj_decay * p_minus;
    // extract the scalar: <P- proj P-> = c P-
    let mut c = Complex64::new(0.0, 0.0);
    let mut norm = 0.0;
    for r in 0..4 {
        for col in 0..4 {
            let pv = p_minus[(r, col)];
            c += sandwich[(r, col)] * pv.conj();
            norm += pv.norm_sqr();
        }
    }
    c /= norm;
    (p_plus * proj_decay * p_minus).scaled(1.0 / c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Chart;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    #[test]
    fn cauchy_symbol_flat_chart() {
        let m = chart_metric(&Chart::flat(), [0.0, 0.0]);
        let s = cauchy_principal_symbol(&m, [1.0, 0.0]).unwrap();
        let want = alpha_dot(Vec3::new(1.0, 0.0, 0.0)).scaled_re(0.5);
        assert!((s - want).max_abs() < TOL);
        let s = cauchy_principal_symbol(&m, [0.6, 0.8]).unwrap();
        let want = alpha_dot(Vec3::new(0.6, 0.8, 0.0)).scaled_re(0.5);
        assert!((s - want).max_abs() < TOL);
        // (2 symbol)^2 = I on the flat chart
        let sq = s.scaled_re(2.0) * s.scaled_re(2.0);
        assert!((sq - SpinorMatrix::identity()).max_abs() < TOL);
        assert!(cauchy_principal_symbol(&m, [0.0, 0.0]).is_err());
    }

    #[test]
    fn cauchy_symbol_tilted_chart() {
        // chi = x1: G^{-1} e2 = e2, <grad chi, e2> = 0
        let chart = Chart::new(|x1, _| x1).with_gradient(|_, _| [1.0, 0.0]);
        let m = chart_metric(&chart, [0.0, 0.0]);
        let s = cauchy_principal_symbol(&m, [0.0, 1.0]).unwrap();
        let want = alpha_dot(Vec3::new(0.0, 1.0, 0.0)).scaled_re(0.5);
        assert!((s - want).max_abs() < TOL);
    }

    #[test]
    fn ps_classical_examples() {
        let e1 = Vec3::new(1.0, 0.0, 0.0);
        let e2 = Vec3::new(0.0, 1.0, 0.0);
        let e3 = Vec3::new(0.0, 0.0, 1.0);
        // e1 ^ e3 = -e2
        let s = ps_classical_symbol(e3, e1).unwrap();
        let want = spin_dot(-e2) * projector_unchecked(e3, Sign::Minus);
        assert!((s - want).max_abs() < TOL);
        // homogeneity
        let s2 = ps_classical_symbol(e3, e1.scaled(2.0)).unwrap();
        assert!((s - s2).max_abs() < TOL);
        // range/kernel: output = P+ . output . P-
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = random_unit(&mut rng);
            let xi = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if xi.cross(n).norm() < 1e-3 {
                continue;
            }
            let s = ps_classical_symbol(n, xi).unwrap();
            let pp = projector_unchecked(n, Sign::Plus);
            let pm = projector_unchecked(n, Sign::Minus);
            assert!((pp * s * pm - s).max_abs() < TOL);
        }
        assert!(ps_classical_symbol(e3, e3).is_err());
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if v.norm() > 1e-2 {
                return v.normalized().unwrap();
            }
        }
    }

    #[test]
    fn ps_semiclassical_examples() {
        let e1 = Vec3::new(1.0, 0.0, 0.0);
        let e2 = Vec3::new(0.0, 1.0, 0.0);
        let e3 = Vec3::new(0.0, 0.0, 1.0);
        assert!(ps_semiclassical_symbol(e3, Vec3::zero()).max_abs() == 0.0);
        let s = ps_semiclassical_symbol(e3, e1);
        let want = (spin_dot(-e2) * projector_unchecked(e3, Sign::Minus)).scaled_re(1.0 / (2f64.sqrt() + 1.0));
        assert!((s - want).max_abs() < TOL);
        // large-frequency limit approaches the classical symbol
        let big = ps_semiclassical_symbol(e3, e1.scaled(1e3));
        let classical = ps_classical_symbol(e3, e1).unwrap();
        let rel = (big - classical).max_abs() / classical.max_abs();
        assert!(rel < 1e-2, "limit ratio error {rel}");
    }

    #[test]
    fn l0_flat_zero_frequency() {
        let d = l0_eigendecomp(&Chart::flat(), [0.0, 0.0], [0.0, 0.0], Complex64::new(0.0, 0.0));
        assert!((d.lambda - 1.0).abs() < TOL);
        assert!((d.rho_plus - Complex64::new(1.0, 0.0)).norm() < TOL);
        assert!((d.rho_minus + Complex64::new(1.0, 0.0)).norm() < TOL);
        let pp = projector_unchecked(d.normal, Sign::Plus);
        let pm = projector_unchecked(d.normal, Sign::Minus);
        assert!((d.pi_plus - pp).max_abs() < TOL);
        assert!((d.pi_minus - pm).max_abs() < TOL);
    }

    #[test]
    fn l0_flat_unit_frequency() {
        let d = l0_eigendecomp(&Chart::flat(), [0.0, 0.0], [1.0, 0.0], Complex64::new(0.0, 0.0));
        assert!((d.lambda - 2f64.sqrt()).abs() < TOL);
        assert!((d.rho_plus - Complex64::new(2f64.sqrt(), 0.0)).norm() < TOL);
        assert!((d.rho_minus + Complex64::new(2f64.sqrt(), 0.0)).norm() < TOL);
        // normal is orthogonal to the planar frequency
        assert!(d.normal.dot(Vec3::new(1.0, 0.0, 0.0)).abs() < TOL);
    }

    #[test]
    fn l0_spectral_relations_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = rng.gen_range(-0.8..0.8);
            let b = rng.gen_range(-0.8..0.8);
            let c = rng.gen_range(-0.5..0.5);
            let chart = Chart::new(move |x, y| a * x + b * y + c * x * y)
                .with_gradient(move |x, y| [a + c * y, b + c * x]);
            let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let xi = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let d = l0_eigendecomp(&chart, y, xi, Complex64::new(0.3, 0.1));
            // L0 = rho+ Pi+ + rho- Pi-
            let rec = d.pi_plus.scaled(d.rho_plus) + d.pi_minus.scaled(d.rho_minus);
            assert!((d.l0 - rec).max_abs() < TOL, "spectral decomposition");
            // projections
            assert!((d.pi_plus + d.pi_minus - SpinorMatrix::identity()).max_abs() < TOL);
            assert!((d.pi_plus * d.pi_plus - d.pi_plus).max_abs() < TOL);
            assert!((d.pi_plus * d.pi_minus).max_abs() < TOL);
            // sandwich identities with the boundary projectors
            let pp = projector_unchecked(d.normal, Sign::Plus);
            let pm = projector_unchecked(d.normal, Sign::Minus);
            assert!((pp * d.pi_plus * pp - pp.scaled_re(d.k_plus)).max_abs() < TOL);
            assert!((pm * d.pi_minus * pm - pm.scaled_re(d.k_plus)).max_abs() < TOL);
            assert!((pp * d.pi_minus * pm + d.theta * pm).max_abs() < TOL);
            assert!((pm * d.pi_plus * pp - d.theta * pp).max_abs() < TOL);
            // ellipticity: ±Re rho± >= c <xi>
            let bracket = (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            assert!(d.rho_plus.re / bracket > 0.2);
            assert!(-d.rho_minus.re / bracket > 0.2);
            // reconstruction: A = (I - P+ Pi+ / k+) P- A + (P+ / k+) Pi+ A
            let a_rand = SpinorMatrix::from_fn(|_, _| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let t1 = (SpinorMatrix::identity() - (pp * d.pi_plus).scaled_re(1.0 / d.k_plus)) * (pm * a_rand);
            let t2 = pp.scaled_re(1.0 / d.k_plus) * (d.pi_plus * a_rand);
            assert!((t1 + t2 - a_rand).max_abs() < 1e-11, "reconstruction identity");
        }
    }

    #[test]
    fn halfspace_multiplier_examples() {
        let m = 1.0;
        let z0 = Complex64::new(0.0, 0.0);
        // xi = 0, general z: (i z /(2m)) alpha3 P-
        let z = Complex64::new(0.37, 0.21);
        let got = halfspace_multiplier([0.0, 0.0], m, z);
        let n = Vec3::new(0.0, 0.0, -1.0);
        let want = (alpha_dot(Vec3::new(0.0, 0.0, 1.0)) * projector_unchecked(n, Sign::Minus))
            .scaled(Complex64::new(0.0, 1.0) * z / (2.0 * m));
        assert!((got - want).max_abs() < TOL);
        // z = 0, xi = e1: -i alpha3 alpha1 P- / (sqrt2 + 1)
        let got = halfspace_multiplier([1.0, 0.0], m, z0);
        let want = (alpha_dot(Vec3::new(0.0, 0.0, 1.0)) * alpha_dot(Vec3::new(1.0, 0.0, 0.0))
            * projector_unchecked(n, Sign::Minus))
        .scaled(Complex64::new(0.0, -1.0 / (2f64.sqrt() + 1.0)));
        assert!((got - want).max_abs() < TOL);
    }

    #[test]
    fn halfspace_matches_semiclassical_symbol_up_to_sign() {
        // The multiplier formula carries an overall sign flip against the
        // semiclassical symbol (and against the first-principles decaying
        // mode construction); the identity holds exactly through the -1
        // bridge.
        let n = Vec3::new(0.0, 0.0, -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let xi = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let m = rng.gen_range(0.5..8.0);
            let a = halfspace_multiplier(xi, m, Complex64::new(0.0, 0.0));
            let b = ps_semiclassical_symbol(n, Vec3::new(xi[0] / m, xi[1] / m, 0.0));
            assert!((a + b).max_abs() < TOL, "halfspace vs semiclassical through the sign bridge");
        }
    }

    #[test]
    fn halfspace_exact_construction_matches_semiclassical_at_z0() {
        let n = Vec3::new(0.0, 0.0, -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let xi = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let m = rng.gen_range(0.5..8.0);
            let exact = halfspace_ps_exact(xi, m, Complex64::new(0.0, 0.0));
            let sym = ps_semiclassical_symbol(n, Vec3::new(xi[0] / m, xi[1] / m, 0.0));
            assert!((exact - sym).max_abs() < 1e-12, "exact half-space PS vs semiclassical symbol");
        }
    }
}
