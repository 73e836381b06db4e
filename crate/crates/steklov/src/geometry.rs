//! Surface discretizations and chart metric data.
//!
//! Kernel assembly works on quadrature meshes: nodes, outward unit normals,
//! and surface-measure weights. The sphere mesh is a product of Gauss-Legendre
//! (polar) and trapezoid (azimuthal) rules, which is spectrally accurate for
//! smooth integrands. Graph charts `x3 = chi(x1, x2)` carry the first
//! fundamental form and its diagonalizer used by the symbol calculus.

use crate::clifford::Vec3;
use crate::error::{ArgError, MeshLoadError};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

/// Finite-difference step for chart derivatives when no analytic gradient is
/// supplied. Balances truncation against rounding at double precision.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub enum MeshKind {
    /// Product Gauss-Legendre x trapezoid mesh of the sphere `|x| = radius`.
    Sphere { radius: f64, order: usize },
    /// Nodes sampled from a graph chart.
    ChartGraph,
    /// Loaded from a text file.
    File,
}

/// Quadrature discretization of a compact surface.
///
/// Immutable after construction. `sum(weights)` approximates the surface
/// area; normals point out of the enclosed (interior) domain.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    pub nodes: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub kind: MeshKind,
}

impl SurfaceMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Equivalent-area disc radius of node `i`'s quadrature cell, the length
    /// scale used for local singular corrections.
    pub fn patch_radius(&self, i: usize) -> f64 {
        (self.weights[i] / std::f64::consts::PI).sqrt()
    }

    /// A representative node spacing (square root of the mean cell area).
    pub fn spacing(&self) -> f64 {
        (self.area() / self.len() as f64).sqrt()
    }

    pub fn sphere_data(&self) -> Option<(f64, usize)> {
        match self.kind {
            MeshKind::Sphere { radius, order } => Some((radius, order)),
            _ => None,
        }
    }

    fn validate(self) -> Result<Self, ArgError> {
        for (i, n) in self.normals.iter().enumerate() {
            if !n.is_unit(1e-10) {
                return Err(ArgError::new(format!("normal {i} is not unit length")));
            }
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(ArgError::new("all quadrature weights must be positive"));
        }
        Ok(self)
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; accurate to machine
/// precision for the orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Product quadrature mesh of the sphere of radius `R`: `order` Gauss-Legendre
/// nodes in the polar direction times `2*order` uniform azimuthal nodes,
/// `2*order^2` nodes total, with exact outward normals `x/|x|`.
pub fn sphere_mesh(radius: f64, order: usize) -> Result<SurfaceMesh, ArgError> {
    if radius <= 0.0 {
        return Err(ArgError::new("sphere radius must be positive"));
    }
    if order < 4 || order % 2 != 0 {
        return Err(ArgError::new(format!("sphere mesh order must be even and >= 4, got {order}")));
    }
    let (t, wt) = gauss_legendre(order);
    let nphi = 2 * order;
    let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
    let n = order * nphi;
    let mut nodes = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..order {
        let cos_t = t[i];
        let sin_t = (1.0 - cos_t * cos_t).sqrt();
        for j in 0..nphi {
            let phi = dphi * j as f64;
            let dir = Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t);
            nodes.push(dir.scaled(radius));
            normals.push(dir);
            weights.push(radius * radius * wt[i] * dphi);
        }
    }
    SurfaceMesh { nodes, normals, weights, kind: MeshKind::Sphere { radius, order } }.validate()
}

/// A graph chart `x3 = chi(x1, x2)` over an open planar set, with the
/// interior domain locally above the graph.
///
/// The gradient and hessian closures are optional; central differences with
/// step [`FD_STEP`] fill in whatever is missing.
#[derive(Clone)]
pub struct Chart {
    chi: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    grad: Option<Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>>,
    hess: Option<Arc<dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync>>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("analytic_grad", &self.grad.is_some())
            .field("analytic_hess", &self.hess.is_some())
            .finish()
    }
}

impl Chart {
    pub fn new(chi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Chart { chi: Arc::new(chi), grad: None, hess: None }
    }

    pub fn with_gradient(mut self, grad: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_hessian(mut self, hess: impl Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(hess));
        self
    }

    /// The flat chart `chi = 0`.
    pub fn flat() -> Self {
        Chart::new(|_, _| 0.0)
            .with_gradient(|_, _| [0.0, 0.0])
            .with_hessian(|_, _| [[0.0, 0.0], [0.0, 0.0]])
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        (self.chi)(p[0], p[1])
    }

    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        if let Some(g) = &self.grad {
            return g(p[0], p[1]);
        }
        let h = FD_STEP;
        [
            ((self.chi)(p[0] + h, p[1]) - (self.chi)(p[0] - h, p[1])) / (2.0 * h),
            ((self.chi)(p[0], p[1] + h) - (self.chi)(p[0], p[1] - h)) / (2.0 * h),
        ]
    }

    pub fn hessian(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        if let Some(h) = &self.hess {
            return h(p[0], p[1]);
        }
        let s = FD_STEP;
        let gp1 = self.gradient([p[0] + s, p[1]]);
        let gm1 = self.gradient([p[0] - s, p[1]]);
        let gp2 = self.gradient([p[0], p[1] + s]);
        let gm2 = self.gradient([p[0], p[1] - s]);
        [
            [(gp1[0] - gm1[0]) / (2.0 * s), (gp2[0] - gm2[0]) / (2.0 * s)],
            [(gp1[1] - gm1[1]) / (2.0 * s), (gp2[1] - gm2[1]) / (2.0 * s)],
        ]
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }
}

/// First fundamental form data of a chart at a point, plus the matrix `Q`
/// that diagonalizes it: `Q^t G Q = I`, `Q Q^t = G^{-1}`, `det Q = g^{-1/2}`.
#[derive(Clone, Copy, Debug)]
pub struct ChartMetric {
    /// Metric tensor `G = I + grad(chi) grad(chi)^t`.
    pub g_mat: [[f64; 2]; 2],
    /// `det G = 1 + |grad chi|^2`.
    pub g_det: f64,
    pub g_inv: [[f64; 2]; 2],
    pub q: [[f64; 2]; 2],
    pub grad_chi: [f64; 2],
}

impl ChartMetric {
    pub fn apply_g_inv(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.g_inv[0][0] * v[0] + self.g_inv[0][1] * v[1],
            self.g_inv[1][0] * v[0] + self.g_inv[1][1] * v[1],
        ]
    }
}

/// Metric data of `chart` at `point`.
pub fn chart_metric(chart: &Chart, point: [f64; 2]) -> ChartMetric {
    let gr = chart.gradient(point);
    let (d1, d2) = (gr[0], gr[1]);
    let g_mat = [[1.0 + d1 * d1, d1 * d2], [d1 * d2, 1.0 + d2 * d2]];
    let g_det = 1.0 + d1 * d1 + d2 * d2;
    let g_inv = [
        [g_mat[1][1] / g_det, -g_mat[0][1] / g_det],
        [-g_mat[1][0] / g_det, g_mat[0][0] / g_det],
    ];
    let q = metric_diagonalizer(d1, d2, g_det);
    ChartMetric { g_mat, g_det, g_inv, q, grad_chi: gr }
}

/// The rotation-times-scaling `Q`. At points where `d2 -> 0` the rotation
/// column limit is taken with `sign(d2) := +1`, which keeps `Q^t G Q = I`.
fn metric_diagonalizer(d1: f64, d2: f64, g_det: f64) -> [[f64; 2]; 2] {
    let grad_norm = (d1 * d1 + d2 * d2).sqrt();
    let r = if grad_norm == 0.0 {
        [[1.0, 0.0], [0.0, 1.0]]
    } else {
        let s2 = if d2 == 0.0 { 1.0 } else { d2.signum() };
        let c = (d2 * s2) / grad_norm;
        let s = (d1 * s2) / grad_norm;
        [[c, s], [-s, c]]
    };
    let scale = g_det.sqrt().recip();
    [[r[0][0], r[0][1] * scale], [r[1][0], r[1][1] * scale]]
}

/// Pull-back of the outward normal on a graph chart, with the interior
/// domain above the graph: `n = (d1 chi, d2 chi, -1)/sqrt(1 + |grad chi|^2)`.
pub fn chart_normal(chart: &Chart, point: [f64; 2]) -> Vec3 {
    let g = chart.gradient(point);
    let s = (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
    Vec3::new(g[0] / s, g[1] / s, -1.0 / s)
}

/// Loads a mesh from the text format: one node per line,
/// `x y z nx ny nz w`, with `#` comment lines.
pub fn mesh_from_file(path: impl AsRef<Path>) -> Result<SurfaceMesh, MeshLoadError> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

/// Parses the mesh text format; see [`mesh_from_file`].
pub fn parse_mesh(text: &str) -> Result<SurfaceMesh, MeshLoadError> {
    let mut nodes = Vec::new();
    let mut normals = Vec::new();
    let mut weights = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(MeshLoadError::Parse {
                line: line_no,
                msg: format!("expected 7 fields `x y z nx ny nz w`, got {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 7];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f.parse().map_err(|_| MeshLoadError::Parse {
                line: line_no,
                msg: format!("field {} (`{}`) is not a decimal number", k + 1, f),
            })?;
        }
        let n = Vec3::new(vals[3], vals[4], vals[5]);
        if !n.is_unit(1e-10) {
            return Err(MeshLoadError::Parse { line: line_no, msg: "non-unit normal".into() });
        }
        if !(vals[6] > 0.0) {
            return Err(MeshLoadError::Parse { line: line_no, msg: format!("non-positive weight {}", vals[6]) });
        }
        nodes.push(Vec3::new(vals[0], vals[1], vals[2]));
        normals.push(n);
        weights.push(vals[6]);
    }
    Ok(SurfaceMesh { nodes, normals, weights, kind: MeshKind::File })
}

/// Writes a mesh in the text format accepted by [`mesh_from_file`].
pub fn write_mesh(mesh: &SurfaceMesh, path: impl AsRef<Path>) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# x y z nx ny nz w")?;
    for i in 0..mesh.len() {
        let (p, n, w) = (mesh.nodes[i], mesh.normals[i], mesh.weights[i]);
        writeln!(f, "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}", p.x, p.y, p.z, n.x, n.y, n.z, w)?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // degree 15 is exact for the 8-point rule
        for deg in 0..=15usize {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
            let want = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert!((got - want).abs() < 1e-13, "deg {deg}: {got} vs {want}");
        }
    }

    #[test]
    fn sphere_mesh_area() {
        let m = sphere_mesh(1.0, 8).unwrap();
        assert_eq!(m.len(), 128);
        assert!((m.area() - 4.0 * PI).abs() < 1e-10);
        let m2 = sphere_mesh(2.0, 8).unwrap();
        assert!((m2.area() - 16.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn sphere_mesh_normal_moment_vanishes() {
        let m = sphere_mesh(1.0, 16).unwrap();
        let mut s = Vec3::zero();
        for i in 0..m.len() {
            s = s + m.normals[i].scaled(m.weights[i]);
        }
        assert!(s.norm() < 1e-10);
    }

    #[test]
    fn sphere_mesh_rejects_bad_order() {
        assert!(sphere_mesh(1.0, 3).is_err());
        assert!(sphere_mesh(1.0, 7).is_err());
        assert!(sphere_mesh(-1.0, 8).is_err());
    }

    #[test]
    fn flat_chart_metric() {
        let m = chart_metric(&Chart::flat(), [0.3, -0.7]);
        assert_eq!(m.g_mat, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.g_det, 1.0);
        assert_eq!(m.q, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn tilted_plane_metric() {
        // chi(x) = x1 has G = [[2, 0], [0, 1]], g = 2.
        let chart = Chart::new(|x1, _| x1).with_gradient(|_, _| [1.0, 0.0]);
        let m = chart_metric(&chart, [0.0, 0.0]);
        assert_eq!(m.g_mat, [[2.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.g_det, 2.0);
        let r = metric_relations_residual(&m);
        assert!(r < 1e-12, "Q relations residual {r}");
    }

    fn mat2_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    }

    fn metric_relations_residual(m: &ChartMetric) -> f64 {
        let qt = [[m.q[0][0], m.q[1][0]], [m.q[0][1], m.q[1][1]]];
        let qtgq = mat2_mul(mat2_mul(qt, m.g_mat), m.q);
        let qqt = mat2_mul(m.q, qt);
        let det_q = m.q[0][0] * m.q[1][1] - m.q[0][1] * m.q[1][0];
        let mut r: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                r = r.max((qtgq[i][j] - id).abs());
                r = r.max((qqt[i][j] - m.g_inv[i][j]).abs());
            }
        }
        r.max((det_q - m.g_det.sqrt().recip()).abs())
    }

    #[test]
    fn metric_relations_random_cubic_charts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e0);
        for _ in 0..1000 {
            let c: Vec<f64> = (0..10).map(|_| rng.gen_range(-0.8..0.8)).collect();
            let cc = c.clone();
            let chart = Chart::new(move |x, y| {
                cc[0] + cc[1] * x + cc[2] * y + cc[3] * x * x + cc[4] * x * y + cc[5] * y * y
                    + cc[6] * x * x * x + cc[7] * x * x * y + cc[8] * x * y * y + cc[9] * y * y * y
            });
            let cg = c.clone();
            let chart = chart.with_gradient(move |x, y| {
                [
                    cg[1] + 2.0 * cg[3] * x + cg[4] * y + 3.0 * cg[6] * x * x + 2.0 * cg[7] * x * y + cg[8] * y * y,
                    cg[2] + cg[4] * x + 2.0 * cg[5] * y + cg[7] * x * x + 2.0 * cg[8] * x * y + 3.0 * cg[9] * y * y,
                ]
            });
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let m = chart_metric(&chart, p);
            assert!(metric_relations_residual(&m) < 1e-10);
        }
    }

    #[test]
    fn chart_normal_examples() {
        let n = chart_normal(&Chart::flat(), [0.0, 0.0]);
        assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        let chart = Chart::new(|x1, _| x1).with_gradient(|_, _| [1.0, 0.0]);
        let n = chart_normal(&chart, [0.0, 0.0]);
        let s = 2f64.sqrt().recip();
        assert!((n - Vec3::new(s, 0.0, -s)).norm() < 1e-15);
        assert!(n.is_unit(1e-14));
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let chart_fd = Chart::new(|x, y| (x * y).sin() + 0.3 * x);
        let chart_an = Chart::new(|x, y| (x * y).sin() + 0.3 * x)
            .with_gradient(|x, y| [y * (x * y).cos() + 0.3, x * (x * y).cos()]);
        let p = [0.37, -0.61];
        let gf = chart_fd.gradient(p);
        let ga = chart_an.gradient(p);
        assert!((gf[0] - ga[0]).abs() < 1e-9 && (gf[1] - ga[1]).abs() < 1e-9);
        let hf = chart_fd.hessian(p);
        let ha = chart_an.hessian(p);
        for i in 0..2 {
            for j in 0..2 {
                assert!((hf[i][j] - ha[i][j]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn mesh_file_round_trip_and_errors() {
        let good = "# comment\n1 0 0 1 0 0 0.5\n0 1 0 0 1 0 0.5\n";
        let m = parse_mesh(good).unwrap();
        assert_eq!(m.len(), 2);

        let bad_weight = "1 0 0 1 0 0 0.5\n0 1 0 0 1 0 0.5\n0 0 1 0 0 1 -1\n";
        match parse_mesh(bad_weight) {
            Err(MeshLoadError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_normal = "1 0 0 0 0 2 0.5\n";
        match parse_mesh(bad_normal) {
            Err(MeshLoadError::Parse { line, msg }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("non-unit normal"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn six_line_file_parses() {
        let mut text = String::new();
        for k in 0..6 {
            let phi = k as f64;
            text.push_str(&format!(
                "{} {} 0 {} {} 0 1.0\n",
                phi.cos(),
                phi.sin(),
                phi.cos(),
                phi.sin()
            ));
        }
        let m = parse_mesh(&text).unwrap();
        assert_eq!(m.len(), 6);
    }
}
