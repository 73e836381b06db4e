//! Flat (periodic) quantization of matrix symbols for symbol-vs-operator
//! experiments on the torus `[0, L)^2`.

use crate::clifford::SpinorMatrix;
use crate::error::{ArgError, OperatorError};
use crate::linalg::{C, C_ZERO};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::sync::Arc;

/// A matrix-valued symbol `a(y, xi)` with a declared order.
#[derive(Clone)]
pub struct SymbolField {
    pub order: i32,
    pub y_dependent: bool,
    eval: Arc<dyn Fn([f64; 2], [f64; 2]) -> SpinorMatrix + Send + Sync>,
}

impl SymbolField {
    /// A Fourier multiplier `a(xi)`.
    pub fn multiplier(order: i32, f: impl Fn([f64; 2]) -> SpinorMatrix + Send + Sync + 'static) -> Self {
        SymbolField { order, y_dependent: false, eval: Arc::new(move |_, xi| f(xi)) }
    }

    /// A fully `(y, xi)`-dependent symbol.
    pub fn full(order: i32, f: impl Fn([f64; 2], [f64; 2]) -> SpinorMatrix + Send + Sync + 'static) -> Self {
        SymbolField { order, y_dependent: true, eval: Arc::new(f) }
    }

    pub fn eval(&self, y: [f64; 2], xi: [f64; 2]) -> SpinorMatrix {
        (self.eval)(y, xi)
    }

    /// Measured growth exponent of `t -> |a(y, t xi)|` over `t in [1, 100]`,
    /// the spot check that evaluations are consistent with the declared
    /// order.
    pub fn growth_exponent(&self, y: [f64; 2], xi_unit: [f64; 2]) -> f64 {
        let lo = self.eval(y, xi_unit).frobenius().max(1e-300);
        let hi = self
            .eval(y, [100.0 * xi_unit[0], 100.0 * xi_unit[1]])
            .frobenius()
            .max(1e-300);
        (hi / lo).ln() / 100f64.ln()
    }
}

/// Spinor samples on the uniform `n x n` grid of `[0, L)^2`, row-major with
/// `y = (i L/n, j L/n)`.
#[derive(Clone, Debug)]
pub struct SpinorGrid {
    pub n: usize,
    pub len: f64,
    pub values: Vec<[C; 4]>,
}

impl SpinorGrid {
    pub fn zeros(n: usize, len: f64) -> Self {
        SpinorGrid { n, len, values: vec![[C_ZERO; 4]; n * n] }
    }

    pub fn from_fn(n: usize, len: f64, mut f: impl FnMut([f64; 2]) -> [C; 4]) -> Self {
        let mut g = Self::zeros(n, len);
        for i in 0..n {
            for j in 0..n {
                g.values[i * n + j] = f([i as f64 * len / n as f64, j as f64 * len / n as f64]);
            }
        }
        g
    }

    pub fn l2_norm(&self) -> f64 {
        let cell = (self.len / self.n as f64).powi(2);
        (self.values.iter().map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>() * cell).sqrt()
    }

    pub fn sub(&self, o: &SpinorGrid) -> SpinorGrid {
        let mut g = self.clone();
        for (a, b) in g.values.iter_mut().zip(&o.values) {
            for c in 0..4 {
                a[c] -= b[c];
            }
        }
        g
    }
}

/// Signed frequency of DFT index `k` on an `n`-grid of length `L`.
fn frequency(k: usize, n: usize, len: f64) -> f64 {
    let ks = if k < n / 2 { k as isize } else { k as isize - n as isize };
    2.0 * std::f64::consts::PI * ks as f64 / len
}

fn fft_2d(values: &mut [C], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut row: Vec<Complex64> = vec![C_ZERO; n];
    // rows
    for i in 0..n {
        row.copy_from_slice(&values[i * n..(i + 1) * n]);
        fft.process(&mut row);
        values[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    // columns
    for j in 0..n {
        for i in 0..n {
            row[i] = values[i * n + j];
        }
        fft.process(&mut row);
        for i in 0..n {
            values[i * n + j] = row[i];
        }
    }
}

/// Applies `Op^h(a)` on the periodic grid: Fourier transform, multiply by
/// `a(y, h xi)`, inverse transform. Fourier multipliers act diagonally; a
/// `y`-dependent symbol is applied by direct summation over frequencies
/// (kept to coarse grids).
pub fn flat_quantize(symbol: &SymbolField, h: f64, field: &SpinorGrid) -> Result<SpinorGrid, OperatorError> {
    let n = field.n;
    if !n.is_power_of_two() {
        return Err(ArgError::new(format!("grid size {n} is not a power of two")).into());
    }
    // forward transform per component
    let mut hats: Vec<Vec<C>> = (0..4)
        .map(|c| {
            let mut comp: Vec<C> = field.values.iter().map(|v| v[c]).collect();
            fft_2d(&mut comp, n, false);
            comp
        })
        .collect();
    let norm = 1.0 / (n * n) as f64;
    if !symbol.y_dependent {
        for ki in 0..n {
            for kj in 0..n {
                let xi = [frequency(ki, n, field.len), frequency(kj, n, field.len)];
                let a = symbol.eval([0.0, 0.0], [h * xi[0], h * xi[1]]);
                let idx = ki * n + kj;
                let vin = [hats[0][idx], hats[1][idx], hats[2][idx], hats[3][idx]];
                let vout = a.mul_vec(&vin);
                for c in 0..4 {
                    hats[c][idx] = vout[c];
                }
            }
        }
        let mut out = SpinorGrid::zeros(n, field.len);
        for c in 0..4 {
            fft_2d(&mut hats[c], n, true);
            for (i, v) in hats[c].iter().enumerate() {
                out.values[i][c] = v * norm;
            }
        }
        Ok(out)
    } else {
        if n > 64 {
            return Err(OperatorError::Capability {
                required: "coarse grid (n <= 64) for y-dependent symbols".into(),
                got: format!("n = {n}"),
            });
        }
        let mut out = SpinorGrid::zeros(n, field.len);
        for i in 0..n {
            for j in 0..n {
                let y = [i as f64 * field.len / n as f64, j as f64 * field.len / n as f64];
                let mut acc = [C_ZERO; 4];
                for ki in 0..n {
                    for kj in 0..n {
                        let xi = [frequency(ki, n, field.len), frequency(kj, n, field.len)];
                        let a = symbol.eval(y, [h * xi[0], h * xi[1]]);
                        let idx = ki * n + kj;
                        let phase = Complex64::new(0.0, y[0] * xi[0] + y[1] * xi[1]).exp();
                        let vin = [hats[0][idx], hats[1][idx], hats[2][idx], hats[3][idx]];
                        let v = a.mul_vec(&vin);
                        for c in 0..4 {
                            acc[c] += v[c] * phase;
                        }
                    }
                }
                for c in 0..4 {
                    out.values[i * n + j][c] = acc[c] * norm;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::halfspace_multiplier;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_symbol_is_identity() {
        let sym = SymbolField::multiplier(0, |_| SpinorMatrix::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let field = SpinorGrid::from_fn(16, 2.0 * std::f64::consts::PI, |_| {
            core::array::from_fn(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        });
        let out = flat_quantize(&sym, 0.5, &field).unwrap();
        assert!(out.sub(&field).l2_norm() < 1e-12 * field.l2_norm().max(1.0));
    }

    #[test]
    fn derivative_symbol_on_plane_wave() {
        // a(xi) = i xi_1 I4 acts on e^{i y k} as multiplication by i h k_1
        let sym = SymbolField::multiplier(1, |xi| {
            SpinorMatrix::identity().scaled(Complex64::new(0.0, xi[0]))
        });
        let len = 2.0 * std::f64::consts::PI;
        let k = [3.0, -2.0];
        let field = SpinorGrid::from_fn(32, len, |y| {
            let ph = Complex64::new(0.0, y[0] * k[0] + y[1] * k[1]).exp();
            [ph, 0.5 * ph, C_ZERO, -ph]
        });
        let h = 0.25;
        let out = flat_quantize(&sym, h, &field).unwrap();
        let factor = Complex64::new(0.0, h * k[0]);
        let mut worst: f64 = 0.0;
        for (o, f) in out.values.iter().zip(&field.values) {
            for c in 0..4 {
                worst = worst.max((o[c] - f[c] * factor).norm());
            }
        }
        assert!(worst < 1e-10, "plane wave scaling error {worst}");
    }

    #[test]
    fn halfspace_symbol_diagonal_on_plane_waves() {
        let m = 2.0;
        let z = Complex64::new(0.3, 0.0);
        let sym = SymbolField::multiplier(0, move |xi| halfspace_multiplier(xi, m, z));
        let len = 2.0 * std::f64::consts::PI;
        let k = [5.0, 1.0];
        let spin = [C::new(1.0, 0.0), C::new(0.2, -0.3), C::new(0.0, 0.7), C::new(-0.4, 0.1)];
        let field = SpinorGrid::from_fn(32, len, |y| {
            let ph = Complex64::new(0.0, y[0] * k[0] + y[1] * k[1]).exp();
            core::array::from_fn(|c| spin[c] * ph)
        });
        let h = 0.5;
        let out = flat_quantize(&sym, h, &field).unwrap();
        let a = halfspace_multiplier([h * k[0], h * k[1]], m, z);
        let want = a.mul_vec(&spin);
        let mut worst: f64 = 0.0;
        for (idx, o) in out.values.iter().enumerate() {
            let ph = {
                let n = field.n;
                let (i, j) = (idx / n, idx % n);
                let y = [i as f64 * len / n as f64, j as f64 * len / n as f64];
                Complex64::new(0.0, y[0] * k[0] + y[1] * k[1]).exp()
            };
            for c in 0..4 {
                worst = worst.max((o[c] - want[c] * ph).norm());
            }
        }
        assert!(worst < 1e-10, "halfspace multiplier action error {worst}");
    }

    #[test]
    fn rejects_non_power_of_two() {
        let sym = SymbolField::multiplier(0, |_| SpinorMatrix::identity());
        let field = SpinorGrid::zeros(12, 1.0);
        assert!(flat_quantize(&sym, 1.0, &field).is_err());
    }

    #[test]
    fn y_dependent_direct_summation_matches_multiplier_path() {
        // a y-independent symbol pushed through the direct-summation path
        let msym = SymbolField::multiplier(1, |xi| {
            SpinorMatrix::identity().scaled(Complex64::new(xi[1], 0.3 * xi[0]))
        });
        let fsym = SymbolField::full(1, |_, xi| {
            SpinorMatrix::identity().scaled(Complex64::new(xi[1], 0.3 * xi[0]))
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let field = SpinorGrid::from_fn(16, 3.0, |_| {
            core::array::from_fn(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        });
        let a = flat_quantize(&msym, 0.7, &field).unwrap();
        let b = flat_quantize(&fsym, 0.7, &field).unwrap();
        assert!(a.sub(&b).l2_norm() < 1e-10 * a.l2_norm().max(1.0));
    }

    #[test]
    fn growth_exponent_matches_order() {
        let sym = SymbolField::multiplier(1, |xi| {
            SpinorMatrix::identity().scaled(Complex64::new(0.0, (xi[0] * xi[0] + xi[1] * xi[1]).sqrt()))
        });
        let g = sym.growth_exponent([0.0, 0.0], [0.6, 0.8]);
        assert!((g - 1.0).abs() < 0.05, "growth exponent {g}");
    }
}
