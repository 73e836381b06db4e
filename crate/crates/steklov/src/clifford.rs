//! Dirac/Pauli matrix algebra in the Dirac representation.
//!
//! Everything downstream (kernels, boundary operators, symbols) consumes the
//! 4x4 algebra defined here: the `alpha_j` and `beta` matrices, the chirality
//! matrix `gamma5`, the spin vector `S·X = -gamma5 (alpha·X)`, and the
//! boundary projectors `P± = (I ∓ i beta (alpha·n))/2`.

use num_complex::Complex64;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::ArgError;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerance on `|n| - 1` accepted by [`projector`]. Inputs are normalized by
/// the caller; nothing is silently renormalized here.
pub const UNIT_TOL: f64 = 1e-12;

/// A real 3-vector (position, frequency, or normal direction).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn zero() -> Self {
        Vec3::new(0.0, 0.0, 0.0)
    }

    /// Standard basis vector `e_j`, `j = 1..=3`.
    pub fn axis(j: usize) -> Result<Self, ArgError> {
        match j {
            1 => Ok(Vec3::new(1.0, 0.0, 0.0)),
            2 => Ok(Vec3::new(0.0, 1.0, 0.0)),
            3 => Ok(Vec3::new(0.0, 0.0, 1.0)),
            _ => Err(ArgError::new(format!("axis index {j} out of range 1..=3"))),
        }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n == 0.0 {
            None
        } else {
            Some(self.scaled(1.0 / n))
        }
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self.scaled(-1.0)
    }
}

/// Projector sign: `P+` confines to the bag, `P-` is the MIT boundary trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Dense complex 4x4 matrix, row-major. Arithmetic is plain complex
/// arithmetic with no hidden normalization.
#[derive(Clone, Copy, PartialEq)]
pub struct SpinorMatrix {
    pub e: [Complex64; 16],
}

impl SpinorMatrix {
    pub const fn zero() -> Self {
        SpinorMatrix { e: [ZERO; 16] }
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for k in 0..4 {
            m[(k, k)] = ONE;
        }
        m
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zero();
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Block matrix `[[a, b], [c, d]]` from 2x2 blocks (row-major blocks).
    pub fn from_blocks(a: [Complex64; 4], b: [Complex64; 4], c: [Complex64; 4], d: [Complex64; 4]) -> Self {
        let mut m = Self::zero();
        for r in 0..2 {
            for col in 0..2 {
                m[(r, col)] = a[2 * r + col];
                m[(r, col + 2)] = b[2 * r + col];
                m[(r + 2, col)] = c[2 * r + col];
                m[(r + 2, col + 2)] = d[2 * r + col];
            }
        }
        m
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut m = *self;
        for v in m.e.iter_mut() {
            *v *= s;
        }
        m
    }

    pub fn scaled_re(&self, s: f64) -> Self {
        self.scaled(Complex64::new(s, 0.0))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(|r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        self[(0, 0)] + self[(1, 1)] + self[(2, 2)] + self[(3, 3)]
    }

    /// Max entry modulus; the norm used by the exact-algebra tests.
    pub fn max_abs(&self) -> f64 {
        self.e.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[Complex64; 4]) -> [Complex64; 4] {
        let mut out = [ZERO; 4];
        for r in 0..4 {
            let mut acc = ZERO;
            for c in 0..4 {
                acc += self[(r, c)] * v[c];
            }
            out[r] = acc;
        }
        out
    }

    pub fn commutator(&self, o: &Self) -> Self {
        *self * *o - *o * *self
    }

    pub fn anticommutator(&self, o: &Self) -> Self {
        *self * *o + *o * *self
    }
}

impl Index<(usize, usize)> for SpinorMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.e[4 * r + c]
    }
}

impl IndexMut<(usize, usize)> for SpinorMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.e[4 * r + c]
    }
}

impl Add for SpinorMatrix {
    type Output = SpinorMatrix;
    fn add(self, o: SpinorMatrix) -> SpinorMatrix {
        SpinorMatrix::from_fn(|r, c| self[(r, c)] + o[(r, c)])
    }
}

impl Sub for SpinorMatrix {
    type Output = SpinorMatrix;
    fn sub(self, o: SpinorMatrix) -> SpinorMatrix {
        SpinorMatrix::from_fn(|r, c| self[(r, c)] - o[(r, c)])
    }
}

impl Neg for SpinorMatrix {
    type Output = SpinorMatrix;
    fn neg(self) -> SpinorMatrix {
        self.scaled_re(-1.0)
    }
}

impl Mul for SpinorMatrix {
    type Output = SpinorMatrix;
    fn mul(self, o: SpinorMatrix) -> SpinorMatrix {
        let mut m = SpinorMatrix::zero();
        for r in 0..4 {
            for k in 0..4 {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..4 {
                    m[(r, c)] += a * o[(k, c)];
                }
            }
        }
        m
    }
}

impl Mul<Complex64> for SpinorMatrix {
    type Output = SpinorMatrix;
    fn mul(self, s: Complex64) -> SpinorMatrix {
        self.scaled(s)
    }
}

impl fmt::Debug for SpinorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SpinorMatrix [")?;
        for r in 0..4 {
            write!(f, "  ")?;
            for c in 0..4 {
                let z = self[(r, c)];
                write!(f, "{:+.3}{:+.3}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

fn sigma(j: usize) -> [Complex64; 4] {
    match j {
        1 => [ZERO, ONE, ONE, ZERO],
        2 => [ZERO, -I, I, ZERO],
        3 => [ONE, ZERO, ZERO, -ONE],
        _ => unreachable!("sigma index checked by caller"),
    }
}

/// Dirac matrix `alpha_j = [[0, sigma_j], [sigma_j, 0]]`, `j = 1..=3`.
pub fn dirac_alpha(j: usize) -> Result<SpinorMatrix, ArgError> {
    if !(1..=3).contains(&j) {
        return Err(ArgError::new(format!("alpha index {j} out of range 1..=3")));
    }
    let s = sigma(j);
    let z = [ZERO; 4];
    Ok(SpinorMatrix::from_blocks(z, s, s, z))
}

/// `beta = diag(I2, -I2)`.
pub fn dirac_beta() -> SpinorMatrix {
    let id = [ONE, ZERO, ZERO, ONE];
    let z = [ZERO; 4];
    SpinorMatrix::from_blocks(id, z, z, [-ONE, ZERO, ZERO, -ONE])
}

/// `gamma5 = -i alpha1 alpha2 alpha3 = [[0, I2], [I2, 0]]`.
pub fn gamma5() -> SpinorMatrix {
    let id = [ONE, ZERO, ZERO, ONE];
    let z = [ZERO; 4];
    SpinorMatrix::from_blocks(z, id, id, z)
}

/// `alpha · v = sum_j alpha_j v_j` for a real vector.
pub fn alpha_dot(v: Vec3) -> SpinorMatrix {
    alpha_dot_c([
        Complex64::new(v.x, 0.0),
        Complex64::new(v.y, 0.0),
        Complex64::new(v.z, 0.0),
    ])
}

/// `alpha · v` with complex components (used by symbol calculus).
pub fn alpha_dot_c(v: [Complex64; 3]) -> SpinorMatrix {
    let mut m = SpinorMatrix::zero();
    // sigma1 block
    m[(0, 3)] += v[0];
    m[(1, 2)] += v[0];
    m[(2, 1)] += v[0];
    m[(3, 0)] += v[0];
    // sigma2 block
    m[(0, 3)] += -I * v[1];
    m[(1, 2)] += I * v[1];
    m[(2, 1)] += -I * v[1];
    m[(3, 0)] += I * v[1];
    // sigma3 block
    m[(0, 2)] += v[2];
    m[(1, 3)] += -v[2];
    m[(2, 0)] += v[2];
    m[(3, 1)] += -v[2];
    m
}

/// Spin vector `S · v = -gamma5 (alpha · v)`.
pub fn spin_dot(v: Vec3) -> SpinorMatrix {
    -(gamma5() * alpha_dot(v))
}

/// Complex-frequency variant of [`spin_dot`].
pub fn spin_dot_c(v: [Complex64; 3]) -> SpinorMatrix {
    -(gamma5() * alpha_dot_c(v))
}

/// Orthogonal boundary projector `P± = (I ∓ i beta (alpha·n))/2` for a unit
/// outward normal `n`. Fails loudly on a non-unit input.
pub fn projector(n: Vec3, sign: Sign) -> Result<SpinorMatrix, ArgError> {
    if !n.is_unit(UNIT_TOL) {
        return Err(ArgError::new(format!(
            "projector normal must be unit length (|n| = {:.17})",
            n.norm()
        )));
    }
    Ok(projector_unchecked(n, sign))
}

/// [`projector`] without the unit check, for hot paths over mesh normals that
/// were validated at construction time.
pub fn projector_unchecked(n: Vec3, sign: Sign) -> SpinorMatrix {
    let iban = (dirac_beta() * alpha_dot(n)).scaled(I);
    let half = Complex64::new(0.5, 0.0);
    match sign {
        Sign::Plus => (SpinorMatrix::identity() - iban).scaled(half),
        Sign::Minus => (SpinorMatrix::identity() + iban).scaled(half),
    }
}
