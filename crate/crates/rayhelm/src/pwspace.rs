//! Per-element plane wave bases from ray angles and their L2 best
//! approximation of a wavefield.
//!
//! Each ray direction d at angle theta spans two basis functions
//! p_j(r) e^{i omega tau(r)} with the linear phase
//! tau(r) = sqrt(xi(r0)) d . (r - r0) and the transverse amplitude
//! polynomials p_{1,2} = 1 +- d_perp . (r - r0), d_perp = (sin, -cos).
//! Gradients of tau and p_j are orthogonal by construction and p_j is
//! harmonic, so each basis function solves the frozen-coefficient
//! Helmholtz equation on the element exactly.

use crate::field::Wavefield;
use crate::geom::{Mesh, RayField};
use crate::{dir, Error, Point, Result, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Plane wave basis on one rectangular element.
#[derive(Debug, Clone)]
pub struct PlaneWaveBasis {
    pub center: Point,
    pub omega: f64,
    pub sqrt_xi: f64,
    pub angles: Vec<f64>,
}

impl PlaneWaveBasis {
    /// Number of basis functions: two per ray.
    pub fn len(&self) -> usize {
        2 * self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Value of basis function `b` (ray b/2, polynomial b%2) at r.
    pub fn eval(&self, b: usize, r: Point) -> C64 {
        let theta = self.angles[b / 2];
        let d = dir(theta);
        let dr = [r[0] - self.center[0], r[1] - self.center[1]];
        let tau = self.sqrt_xi * (d[0] * dr[0] + d[1] * dr[1]);
        let perp = theta.sin() * dr[0] - theta.cos() * dr[1];
        let p = if b % 2 == 0 { 1.0 + perp } else { 1.0 - perp };
        C64::new(p, 0.0) * C64::new(0.0, self.omega * tau).exp()
    }

    /// Gradient of basis function `b` at r.
    pub fn grad(&self, b: usize, r: Point) -> [C64; 2] {
        let theta = self.angles[b / 2];
        let d = dir(theta);
        let dr = [r[0] - self.center[0], r[1] - self.center[1]];
        let tau = self.sqrt_xi * (d[0] * dr[0] + d[1] * dr[1]);
        let perp = theta.sin() * dr[0] - theta.cos() * dr[1];
        let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
        let p = 1.0 + sign * perp;
        let dp = [sign * theta.sin(), -sign * theta.cos()];
        let phase = C64::new(0.0, self.omega * tau).exp();
        let iwt = C64::new(0.0, self.omega * self.sqrt_xi);
        [
            (C64::new(dp[0], 0.0) + iwt * d[0] * p) * phase,
            (C64::new(dp[1], 0.0) + iwt * d[1] * p) * phase,
        ]
    }
}

/// Build the basis for an element with barycenter `center`.
pub fn build_basis(
    center: Point,
    ray_angles: &[f64],
    omega: f64,
    xi_at_center: f64,
) -> Result<PlaneWaveBasis> {
    if !(xi_at_center > 0.0) {
        return Err(Error::Domain(format!("xi({center:?}) = {xi_at_center} not positive")));
    }
    for (i, &a) in ray_angles.iter().enumerate() {
        for &b in &ray_angles[i + 1..] {
            if crate::angle_dist(a, b) < 1e-10 {
                return Err(Error::Domain(format!(
                    "duplicate ray angles {a} and {b} on one element"
                )));
            }
        }
    }
    Ok(PlaneWaveBasis {
        center,
        omega,
        sqrt_xi: xi_at_center.sqrt(),
        angles: ray_angles.to_vec(),
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and P'_n(x) by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Quadrature points per axis resolving the oscillation omega * h.
pub fn quad_order_for(omega: f64, h: f64) -> usize {
    (2 * ((omega * h / std::f64::consts::PI).ceil() as usize) + 4).max(4)
}

/// Result of an element-local L2 projection.
#[derive(Debug, Clone)]
pub struct LocalProjection {
    pub coefficients: Vec<C64>,
    /// || u - Pi u ||_{L2(K)}
    pub l2_error: f64,
    /// || u ||_{L2(K)}
    pub l2_norm: f64,
    pub element_measure: f64,
}

/// Best L2 approximation of `u` on the element box by the basis span, via
/// Householder least squares on the quadrature-weighted Vandermonde
/// (avoids squaring the Gram condition number).
pub fn local_l2_project(
    u: &dyn Wavefield,
    basis: &PlaneWaveBasis,
    bbox: (f64, f64, f64, f64),
    quad_per_axis: usize,
) -> Result<LocalProjection> {
    let (x0, x1, y0, y1) = bbox;
    let nb = basis.len();
    if nb == 0 {
        return Err(Error::Domain("empty basis on element".into()));
    }
    let (nodes, weights) = gauss_legendre(quad_per_axis);
    let jac = 0.25 * (x1 - x0) * (y1 - y0);
    let nq = quad_per_axis * quad_per_axis;

    let mut a = DMatrix::<C64>::zeros(nq, nb);
    let mut rhs = nalgebra::DVector::<C64>::zeros(nq);
    let mut norm_sq = 0.0;
    for (qi, (ix, iy)) in (0..quad_per_axis)
        .flat_map(|ix| (0..quad_per_axis).map(move |iy| (ix, iy)))
        .enumerate()
    {
        let x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * nodes[ix];
        let y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * nodes[iy];
        let w = (weights[ix] * weights[iy] * jac).sqrt();
        let uval = u.value([x, y]);
        rhs[qi] = C64::new(w, 0.0) * uval;
        norm_sq += w * w * uval.norm_sqr();
        for b in 0..nb {
            a[(qi, b)] = C64::new(w, 0.0) * basis.eval(b, [x, y]);
        }
    }

    let qr = a.clone().qr();
    let r = qr.r();
    let cond_floor = (0..nb)
        .map(|i| r[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    let cond_ceil = (0..nb).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if cond_floor <= 0.0 || cond_ceil / cond_floor > 1e12 {
        return Err(Error::Solve(format!(
            "near-duplicate directions: projection system condition above 1e12 on element at {:?}",
            basis.center
        )));
    }
    // rectangular least squares: R y = Q^H b with the thin factors
    let qtb = qr.q().adjoint() * &rhs;
    let coeffs = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Solve("projection least-squares solve failed".into()))?;

    let mut err_sq = 0.0;
    let residual = &rhs - &a * &coeffs;
    for v in residual.iter() {
        err_sq += v.norm_sqr();
    }
    Ok(LocalProjection {
        coefficients: coeffs.iter().cloned().collect(),
        l2_error: err_sq.sqrt(),
        l2_norm: norm_sq.sqrt(),
        element_measure: (x1 - x0) * (y1 - y0),
    })
}

/// Global relative L2 projection error of `u` onto the ray-adapted space
/// over the whole mesh: sqrt(sum of squared element errors) over
/// sqrt(sum of squared element norms). Elements run in parallel.
pub fn global_projection_error(
    u: &(dyn Wavefield + Sync),
    mesh: &Mesh,
    rays: &RayField,
    omega: f64,
    xi: &(dyn Fn(Point) -> f64 + Sync),
) -> Result<f64> {
    if rays.mesh != *mesh {
        return Err(Error::Mesh("ray field lives on a different mesh".into()));
    }
    let quad = quad_order_for(omega, mesh.h());
    let results: Vec<Result<(f64, f64)>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let center = mesh.barycenter(e);
            let angles = &rays.elements[e].angles;
            if angles.is_empty() {
                return Err(Error::Domain(format!("element {e} carries no rays")));
            }
            let basis = build_basis(center, angles, omega, xi(center))?;
            let proj = local_l2_project(u, &basis, mesh.element_box(e), quad)?;
            Ok((proj.l2_error * proj.l2_error, proj.l2_norm * proj.l2_norm))
        })
        .collect();
    let mut err_sq = 0.0;
    let mut norm_sq = 0.0;
    for r in results {
        let (e, n) = r?;
        err_sq += e;
        norm_sq += n;
    }
    Ok((err_sq / norm_sq).sqrt())
}
