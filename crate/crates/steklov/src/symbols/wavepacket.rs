//! Wavepacket probes of the assembled Poincaré–Steklov operators.
//!
//! A Gaussian-modulated tangential oscillation of frequency `l` concentrates
//! near one point and one frequency direction, so the operator's action on
//! it is predicted by the principal symbol frozen at the packet center. The
//! relative discrepancy measures the symbol remainder.

use super::{ps_classical_symbol, ps_semiclassical_symbol};
use crate::bem::{ps_interior_apply_matfree, BoundaryOperator, TraceField};
use crate::clifford::{Sign, Vec3};
use crate::error::SpectralError;
use crate::geometry::SurfaceMesh;
use crate::kernels::KernelParams;
use crate::linalg::{C, C_ZERO};
use num_complex::Complex64;
use std::sync::Arc;

/// Which principal symbol the packet is compared with.
#[derive(Clone, Copy, Debug)]
pub enum SymbolKind {
    /// Homogeneous order-zero symbol (fixed mass).
    Classical,
    /// Rescaled-frequency symbol at the operator's mass.
    Semiclassical,
}

/// Gaussian envelope width constant: the packet width is `1.0 * l^{-1/2}`
/// in geodesic angle.
const WIDTH_CONST: f64 = 1.0;

struct Packet {
    field: TraceField,
    center: usize,
    tangent: Vec3,
    support: Vec<usize>,
}

fn build_packet(mesh: &Arc<SurfaceMesh>, l: usize, direction: Option<Vec3>) -> Result<Packet, SpectralError> {
    let (radius, order) = mesh.sphere_data().ok_or_else(|| SpectralError::Resolution("sphere mesh required".into()))?;
    if order < 2 * l {
        return Err(SpectralError::Resolution(format!(
            "packet frequency l = {l} needs mesh order >= {}, got {order}",
            2 * l
        )));
    }
    // center node nearest to the equator point (-R, 0, 0)
    let target = Vec3::new(-radius, 0.0, 0.0);
    let mut center = 0;
    let mut best = f64::INFINITY;
    for (i, x) in mesh.nodes.iter().enumerate() {
        let d = (*x - target).norm();
        if d < best {
            best = d;
            center = i;
        }
    }
    let n0 = mesh.normals[center];
    // oscillation direction: tangential projection of the request (default
    // azimuthal direction at the center)
    let raw = direction.unwrap_or_else(|| Vec3::new(0.0, 1.0, 0.0));
    let tang = raw - n0.scaled(raw.dot(n0));
    let tnorm = tang.norm();
    if tnorm < 1e-10 {
        return Err(SpectralError::Arg(crate::error::ArgError::new(
            "packet frequency has no tangential part (aligned with the normal)",
        )));
    }
    let tangent = tang.scaled(1.0 / tnorm);
    let sigma = WIDTH_CONST / (l as f64).sqrt();
    let x0 = mesh.nodes[center];
    let spin = [
        C::new(1.0, 0.0),
        C::new(0.4, -0.2),
        C::new(-0.1, 0.3),
        C::new(0.2, 0.1),
    ];
    let mut values = vec![[C_ZERO; 4]; mesh.len()];
    let mut support = Vec::new();
    let mut max_env: f64 = 0.0;
    let mut envs = vec![0.0; mesh.len()];
    for (i, x) in mesh.nodes.iter().enumerate() {
        let cosang = (x.dot(x0) / (radius * radius)).clamp(-1.0, 1.0);
        let ang = cosang.acos();
        let env = (-ang * ang / (2.0 * sigma * sigma)).exp();
        envs[i] = env;
        max_env = max_env.max(env);
        // oscillation phase: l times the arc length along the tangent
        // direction (azimuthal coordinate around the axis n0 x tangent)
        let rel = *x - x0;
        let phase = l as f64 * (rel.dot(tangent) / radius);
        let ph = Complex64::new(0.0, phase).exp() * env;
        for c in 0..4 {
            values[i][c] = spin[c] * ph;
        }
    }
    for (i, e) in envs.iter().enumerate() {
        if *e >= 1e-3 * max_env {
            support.push(i);
        }
    }
    let field = TraceField { values, mesh: mesh.clone() }.project(Sign::Minus);
    Ok(Packet { field, center, tangent, support })
}

fn packet_error(
    mesh: &Arc<SurfaceMesh>,
    packet: &Packet,
    out: &TraceField,
    kind: SymbolKind,
    l: usize,
    mass: f64,
) -> Result<f64, SpectralError> {
    let (radius, _) = mesh.sphere_data().unwrap();
    let n0 = mesh.normals[packet.center];
    let symbol = match kind {
        SymbolKind::Classical => ps_classical_symbol(n0, packet.tangent)
            .map_err(|e| SpectralError::Arg(crate::error::ArgError::new(e.msg)))?,
        SymbolKind::Semiclassical => {
            let hxi = packet.tangent.scaled(l as f64 / (mass * radius));
            ps_semiclassical_symbol(n0, hxi)
        }
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &packet.support {
        let w = mesh.weights[i];
        let pred = symbol.mul_vec(&packet.field.values[i]);
        for c in 0..4 {
            num += (out.values[i][c] - pred[c]).norm_sqr() * w;
            den += packet.field.values[i][c].norm_sqr() * w;
        }
    }
    Ok((num / den).sqrt())
}

/// Applies the assembled Poincaré–Steklov operator to a frequency-`l`
/// packet and returns the relative `L^2` discrepancy from the frozen-symbol
/// prediction over the packet support.
pub fn wavepacket_compare(op: &BoundaryOperator, l: usize, kind: SymbolKind) -> Result<f64, SpectralError> {
    wavepacket_compare_with_direction(op, l, kind, None)
}

/// [`wavepacket_compare`] with an explicit oscillation direction (projected
/// onto the tangent plane at the packet center; rejected if the projection
/// vanishes).
pub fn wavepacket_compare_with_direction(
    op: &BoundaryOperator,
    l: usize,
    kind: SymbolKind,
    direction: Option<Vec3>,
) -> Result<f64, SpectralError> {
    let packet = build_packet(&op.mesh, l, direction)?;
    let out = op.apply(&packet.field);
    packet_error(&op.mesh, &packet, &out, kind, l, op.params.m)
}

/// Matrix-free variant for meshes too large to hold the dense operator:
/// the interior Poincaré–Steklov action is computed through an iterative
/// solve at the given tolerance.
pub fn wavepacket_compare_matfree(
    mesh: &Arc<SurfaceMesh>,
    params: KernelParams,
    l: usize,
    kind: SymbolKind,
    tol: f64,
) -> Result<f64, SpectralError> {
    let packet = build_packet(mesh, l, None)?;
    let out = ps_interior_apply_matfree(mesh, params, &packet.field, tol).map_err(SpectralError::Operator)?;
    packet_error(mesh, &packet, &out, kind, l, params.m)
}
