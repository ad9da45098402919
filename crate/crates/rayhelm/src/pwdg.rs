//! Plane wave discontinuous Galerkin solver for the homogeneous
//! variable-coefficient Helmholtz equation with impedance boundary data.
//!
//! The discretization is the ultra-weak flavored primal DG form: on every
//! element the residual is integrated by parts once, traces are replaced by
//! the classical plane wave numerical fluxes with constant parameters
//! alpha = beta = delta = 1/2, and the adjoint-consistency term
//! (u - u_hat) d_n v is kept, so any field satisfying the equation and the
//! boundary condition is reproduced exactly whenever it lies in the trial
//! space. Basis functions are the per-element geometric-optics plane waves
//! of [`crate::pwspace`]; low-frequency probe solves use a fixed uniform
//! fan of directions per element.

use crate::field::{Medium, Wavefield};
use crate::geom::{Mesh, RayField};
use crate::pwspace::{build_basis, gauss_legendre, quad_order_for, PlaneWaveBasis};
use crate::{Error, Point, Result, C64};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

/// Largest system handed to the dense factorization.
const DENSE_LIMIT: usize = 3500;

/// Boundary data g of the impedance condition (d_n + i kappa) u = g,
/// evaluated at a boundary point with its outward normal.
pub type BoundaryData<'a> = &'a (dyn Fn(Point, [f64; 2]) -> C64 + Sync);

/// The global DG space: a basis on every element plus dof numbering.
pub struct DGSpace {
    pub mesh: Mesh,
    pub omega: f64,
    pub bases: Vec<PlaneWaveBasis>,
    offsets: Vec<usize>,
    pub dofs: usize,
}

impl DGSpace {
    pub fn offset(&self, element: usize) -> usize {
        self.offsets[element]
    }

    /// Hash of the mesh geometry, stored in solution files.
    pub fn mesh_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.mesh.nx.hash(&mut h);
        self.mesh.ny.hash(&mut h);
        for v in [
            self.mesh.domain.x_min,
            self.mesh.domain.x_max,
            self.mesh.domain.y_min,
            self.mesh.domain.y_max,
        ] {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Space with a uniform fan of `p` equally spaced directions per element.
pub fn uniform_fan_space(mesh: &Mesh, omega: f64, medium: &Medium, p: usize) -> Result<DGSpace> {
    if p < 3 {
        return Err(Error::Solve(format!("direction fan of {p} is too small")));
    }
    let angles: Vec<f64> = (0..p).map(|j| std::f64::consts::TAU * j as f64 / p as f64).collect();
    let mut bases = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let c = mesh.barycenter(e);
        bases.push(build_basis(c, &angles, omega, medium.xi(c))?);
    }
    Ok(space_from_bases(mesh.clone(), omega, bases))
}

/// Space spanned by learned ray directions per element.
pub fn ray_space(mesh: &Mesh, omega: f64, medium: &Medium, rays: &RayField) -> Result<DGSpace> {
    if rays.mesh != *mesh {
        return Err(Error::Mesh("ray field lives on a different mesh".into()));
    }
    let mut bases = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let c = mesh.barycenter(e);
        let angles = &rays.elements[e].angles;
        if angles.is_empty() {
            return Err(Error::Solve(format!("element {e} has an empty basis")));
        }
        bases.push(build_basis(c, angles, omega, medium.xi(c))?);
    }
    Ok(space_from_bases(mesh.clone(), omega, bases))
}

fn space_from_bases(mesh: Mesh, omega: f64, bases: Vec<PlaneWaveBasis>) -> DGSpace {
    let mut offsets = Vec::with_capacity(bases.len());
    let mut dofs = 0;
    for b in &bases {
        offsets.push(dofs);
        dofs += b.len();
    }
    DGSpace { mesh, omega, bases, offsets, dofs }
}

/// Assembled system in element-block form.
pub struct DGSystem {
    pub dofs: usize,
    /// Nonzero blocks keyed by (row element, column element); only self and
    /// edge-adjacent pairs appear.
    pub blocks: BTreeMap<(usize, usize), DMatrix<C64>>,
    pub rhs: DVector<C64>,
    offsets: Vec<usize>,
    block_sizes: Vec<usize>,
}

impl DGSystem {
    /// y = A x through the block structure.
    pub fn matvec(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.dofs);
        for ((re, ce), block) in &self.blocks {
            let ro = self.offsets[*re];
            let co = self.offsets[*ce];
            for i in 0..block.nrows() {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..block.ncols() {
                    acc += block[(i, j)] * x[co + j];
                }
                y[ro + i] += acc;
            }
        }
        y
    }

    fn dense(&self) -> DMatrix<C64> {
        let mut a = DMatrix::zeros(self.dofs, self.dofs);
        for ((re, ce), block) in &self.blocks {
            let ro = self.offsets[*re];
            let co = self.offsets[*ce];
            for i in 0..block.nrows() {
                for j in 0..block.ncols() {
                    a[(ro + i, co + j)] = block[(i, j)];
                }
            }
        }
        a
    }
}

struct FaceGeom {
    a: Point,
    b: Point,
    normal: [f64; 2],
    neighbor: Option<usize>,
}

fn faces_of(mesh: &Mesh, e: usize) -> [FaceGeom; 4] {
    let (x0, x1, y0, y1) = mesh.element_box(e);
    let (ix, iy) = (e % mesh.nx, e / mesh.nx);
    [
        FaceGeom {
            a: [x0, y0],
            b: [x0, y1],
            normal: [-1.0, 0.0],
            neighbor: (ix > 0).then(|| mesh.index(ix - 1, iy)),
        },
        FaceGeom {
            a: [x1, y0],
            b: [x1, y1],
            normal: [1.0, 0.0],
            neighbor: (ix + 1 < mesh.nx).then(|| mesh.index(ix + 1, iy)),
        },
        FaceGeom {
            a: [x0, y0],
            b: [x1, y0],
            normal: [0.0, -1.0],
            neighbor: (iy > 0).then(|| mesh.index(ix, iy - 1)),
        },
        FaceGeom {
            a: [x0, y1],
            b: [x1, y1],
            normal: [0.0, 1.0],
            neighbor: (iy + 1 < mesh.ny).then(|| mesh.index(ix, iy + 1)),
        },
    ]
}

/// Assemble the DG system for the homogeneous Helmholtz problem
/// -Delta u - kappa^2(r) u = 0 with (d_n + i kappa) u = g on the boundary.
pub fn assemble(space: &DGSpace, medium: &Medium, g: BoundaryData) -> Result<DGSystem> {
    let mesh = &space.mesh;
    let omega = space.omega;
    let mut blocks: BTreeMap<(usize, usize), DMatrix<C64>> = BTreeMap::new();
    let mut rhs = DVector::<C64>::zeros(space.dofs);
    let block_sizes: Vec<usize> = space.bases.iter().map(|b| b.len()).collect();

    let mut add = |re: usize, ce: usize, i: usize, j: usize, v: C64| {
        let entry = blocks
            .entry((re, ce))
            .or_insert_with(|| DMatrix::zeros(block_sizes[re], block_sizes[ce]));
        entry[(i, j)] += v;
    };

    for e in 0..mesh.n_elements() {
        let basis = &space.bases[e];
        let nb = basis.len();
        let (xa, xb, ya, yb) = mesh.element_box(e);
        // volume term: grad u . grad conj(v) - kappa^2 u conj(v)
        let qv = quad_order_for(2.0 * omega * basis.sqrt_xi.max(medium.xi([xa, ya]).sqrt()), mesh.h()) + 2;
        let (nodes, weights) = gauss_legendre(qv);
        for ix in 0..qv {
            for iy in 0..qv {
                let x = 0.5 * (xa + xb) + 0.5 * (xb - xa) * nodes[ix];
                let y = 0.5 * (ya + yb) + 0.5 * (yb - ya) * nodes[iy];
                let w = weights[ix] * weights[iy] * 0.25 * (xb - xa) * (yb - ya);
                let kap = medium.kappa(omega, [x, y]);
                let vals: Vec<C64> = (0..nb).map(|b| basis.eval(b, [x, y])).collect();
                let grads: Vec<[C64; 2]> = (0..nb).map(|b| basis.grad(b, [x, y])).collect();
                for i in 0..nb {
                    let gi = [grads[i][0].conj(), grads[i][1].conj()];
                    let vi = vals[i].conj();
                    for j in 0..nb {
                        let term = grads[j][0] * gi[0] + grads[j][1] * gi[1]
                            - C64::new(kap * kap, 0.0) * vals[j] * vi;
                        add(e, e, i, j, C64::new(w, 0.0) * term);
                    }
                }
            }
        }

        for face in faces_of(mesh, e) {
            let len = ((face.b[0] - face.a[0]).powi(2) + (face.b[1] - face.a[1]).powi(2)).sqrt();
            let qe = quad_order_for(2.0 * omega * basis.sqrt_xi, len);
            let (enodes, eweights) = gauss_legendre(qe);
            let n = face.normal;
            match face.neighbor {
                Some(ne) => {
                    // assemble each interior face once, from the lower index
                    if ne < e {
                        continue;
                    }
                    let nbasis = &space.bases[ne];
                    let nnb = nbasis.len();
                    for (qnode, qw) in enodes.iter().zip(&eweights) {
                        let t = 0.5 * (1.0 + qnode);
                        let p = [
                            face.a[0] + t * (face.b[0] - face.a[0]),
                            face.a[1] + t * (face.b[1] - face.a[1]),
                        ];
                        let w = 0.5 * len * qw;
                        let kap = medium.kappa(omega, p);
                        let ik = C64::new(0.0, kap);

                        let uv: Vec<C64> = (0..nb).map(|b| basis.eval(b, p)).collect();
                        let un: Vec<C64> = (0..nb)
                            .map(|b| {
                                let gr = basis.grad(b, p);
                                gr[0] * n[0] + gr[1] * n[1]
                            })
                            .collect();
                        let vv: Vec<C64> = (0..nnb).map(|b| nbasis.eval(b, p)).collect();
                        let vn: Vec<C64> = (0..nnb)
                            .map(|b| {
                                let gr = nbasis.grad(b, p);
                                gr[0] * n[0] + gr[1] * n[1]
                            })
                            .collect();

                        // trial trace pairs (value, normal derivative wrt n)
                        // from K (index < nb) and K' (index >= nb)
                        let trial_val = |j: usize| if j < nb { uv[j] } else { vv[j - nb] };
                        let trial_dn = |j: usize| if j < nb { un[j] } else { vn[j - nb] };
                        let side_k = |j: usize| j < nb;

                        for j in 0..nb + nnb {
                            let (tu, tdn) = (trial_val(j), trial_dn(j));
                            let (from_k, col_e) = (side_k(j), if j < nb { e } else { ne });
                            let col_i = if j < nb { j } else { j - nb };
                            // numerical fluxes, written from K's perspective
                            // sigma.n = {grad u}.n - (i k / 2) [u], [u] = u_K - u_K'
                            // u_K - u_hat = [u]/2 + 1/(2 i k) [du/dn]
                            let jump_u = if from_k { tu } else { -tu };
                            let jump_dn = if from_k { tdn } else { -tdn };
                            let sig_n = 0.5 * tdn - 0.5 * ik * jump_u;
                            let uk_minus_hat = 0.5 * jump_u + jump_dn / (2.0 * ik);

                            // tests on K: -(sigma.n) conj(v) - (u_K - u_hat) conj(d_n v)
                            for i in 0..nb {
                                let v = uv[i].conj();
                                let vdn = un[i].conj();
                                add(
                                    e,
                                    col_e,
                                    i,
                                    col_i,
                                    C64::new(w, 0.0) * (-sig_n * v - uk_minus_hat * vdn),
                                );
                            }
                            // tests on K': normal flips, u_K' - u_hat = -[u]/2 + 1/(2 i k)[du/dn]
                            let sig_n_neigh = -sig_n; // sigma . n_{K'}
                            let ukp_minus_hat = -0.5 * jump_u + jump_dn / (2.0 * ik);
                            for i in 0..nnb {
                                let v = vv[i].conj();
                                let vdn = -vn[i].conj(); // d/dn_{K'} = -d/dn
                                add(
                                    ne,
                                    col_e,
                                    i,
                                    col_i,
                                    C64::new(w, 0.0) * (-sig_n_neigh * v - ukp_minus_hat * vdn),
                                );
                            }
                        }
                    }
                }
                None => {
                    // impedance boundary face, delta = 1/2
                    let delta = 0.5;
                    for (qnode, qw) in enodes.iter().zip(&eweights) {
                        let t = 0.5 * (1.0 + qnode);
                        let p = [
                            face.a[0] + t * (face.b[0] - face.a[0]),
                            face.a[1] + t * (face.b[1] - face.a[1]),
                        ];
                        let w = 0.5 * len * qw;
                        let kap = medium.kappa(omega, p);
                        let ik = C64::new(0.0, kap);
                        let gval = g(p, n);

                        let uv: Vec<C64> = (0..nb).map(|b| basis.eval(b, p)).collect();
                        let un: Vec<C64> = (0..nb)
                            .map(|b| {
                                let gr = basis.grad(b, p);
                                gr[0] * n[0] + gr[1] * n[1]
                            })
                            .collect();
                        for j in 0..nb {
                            // sigma.n = (1-d) d_n u - d i k u (+ d g to rhs)
                            let sig_n = (1.0 - delta) * un[j] - delta * ik * uv[j];
                            // u - u_hat = (d / i k)(d_n u + i k u) (- d g / i k)
                            let um_hat = delta / ik * (un[j] + ik * uv[j]);
                            for i in 0..nb {
                                let v = uv[i].conj();
                                let vdn = un[i].conj();
                                add(e, e, i, j, C64::new(w, 0.0) * (-sig_n * v - um_hat * vdn));
                            }
                        }
                        for i in 0..nb {
                            let v = uv[i].conj();
                            let vdn = un[i].conj();
                            rhs[space.offset(e) + i] +=
                                C64::new(w, 0.0) * (delta * gval * v - delta / ik * gval * vdn);
                        }
                    }
                }
            }
        }
    }

    Ok(DGSystem {
        dofs: space.dofs,
        blocks,
        rhs,
        offsets: (0..space.bases.len()).map(|e| space.offset(e)).collect(),
        block_sizes,
    })
}

/// Solve the assembled system: dense LU for moderate sizes, otherwise
/// restarted GMRES with a block-Jacobi preconditioner. The returned
/// coefficients always satisfy ||A x - b|| <= 1e-10 ||b||.
pub fn solve(system: &DGSystem) -> Result<DVector<C64>> {
    let x = if system.dofs <= DENSE_LIMIT {
        let a = system.dense();
        let lu = a.lu();
        lu.solve(&system.rhs)
            .ok_or_else(|| Error::Solve("dense factorization failed".into()))?
    } else {
        gmres(system, 1e-12, 400)?
    };
    let res = (system.matvec(&x) - &system.rhs).norm() / system.rhs.norm().max(1e-300);
    if res > 1e-10 {
        return Err(Error::Solve(format!("solver residual {res} above 1e-10")));
    }
    Ok(x)
}

/// Restarted GMRES(60) preconditioned by inverted diagonal blocks.
fn gmres(system: &DGSystem, tol: f64, max_outer: usize) -> Result<DVector<C64>> {
    let n = system.dofs;
    // block-Jacobi preconditioner
    let mut inv_blocks = Vec::with_capacity(system.block_sizes.len());
    for (e, &bs) in system.block_sizes.iter().enumerate() {
        let block = system
            .blocks
            .get(&(e, e))
            .cloned()
            .unwrap_or_else(|| DMatrix::identity(bs, bs));
        let inv = block
            .try_inverse()
            .ok_or_else(|| Error::Solve("singular diagonal block".into()))?;
        inv_blocks.push(inv);
    }
    let precond = |v: &DVector<C64>| -> DVector<C64> {
        let mut out = DVector::zeros(n);
        for (e, inv) in inv_blocks.iter().enumerate() {
            let off = system.offsets[e];
            let bs = system.block_sizes[e];
            let seg = DVector::from_iterator(bs, (0..bs).map(|i| v[off + i]));
            let r = inv * seg;
            for i in 0..bs {
                out[off + i] = r[i];
            }
        }
        out
    };

    let m = 60usize;
    let bnorm = system.rhs.norm().max(1e-300);
    let mut x = DVector::<C64>::zeros(n);
    for _ in 0..max_outer {
        let r = precond(&(&system.rhs - system.matvec(&x)));
        let beta = r.norm();
        if beta / bnorm < tol {
            return Ok(x);
        }
        let mut v: Vec<DVector<C64>> = vec![r / C64::new(beta, 0.0)];
        let mut h = DMatrix::<C64>::zeros(m + 1, m);
        let mut cs = vec![C64::new(1.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut gvec = DVector::<C64>::zeros(m + 1);
        gvec[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let mut w = precond(&system.matvec(&v[k]));
            for i in 0..=k {
                let hik = v[i].dotc(&w);
                h[(i, k)] = hik;
                w -= &v[i] * hik;
            }
            let hkk = w.norm();
            h[(k + 1, k)] = C64::new(hkk, 0.0);
            // Givens rotations
            for i in 0..k {
                let t = cs[i].conj() * h[(i, k)] + sn[i].conj() * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let denom = (h[(k, k)].norm_sqr() + hkk * hkk).sqrt();
            cs[k] = h[(k, k)] / denom;
            sn[k] = h[(k + 1, k)] / denom;
            h[(k, k)] = cs[k].conj() * h[(k, k)] + sn[k].conj() * h[(k + 1, k)];
            h[(k + 1, k)] = C64::new(0.0, 0.0);
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] = cs[k].conj() * gvec[k];
            k_used = k + 1;
            if hkk < 1e-14 || gvec[k + 1].norm() / bnorm < tol {
                break;
            }
            v.push(w / C64::new(hkk, 0.0));
        }
        // back substitution
        let mut y = DVector::<C64>::zeros(k_used);
        for i in (0..k_used).rev() {
            let mut acc = gvec[i];
            for j in i + 1..k_used {
                acc -= h[(i, j)] * y[j];
            }
            y[i] = acc / h[(i, i)];
        }
        for i in 0..k_used {
            x += &v[i] * y[i];
        }
        let res = (system.matvec(&x) - &system.rhs).norm() / bnorm;
        if res < tol {
            return Ok(x);
        }
    }
    Ok(x)
}

/// A DG solution as an evaluable wavefield: value and gradient come from
/// the plane-wave expansion of the element containing the point (points on
/// element interfaces take the containing half-open box; points outside
/// the domain are clamped onto it).
pub struct DiscreteField {
    pub space: DGSpace,
    pub coefficients: DVector<C64>,
}

impl DiscreteField {
    fn element_at(&self, r: Point) -> (usize, Point) {
        let d = &self.space.mesh.domain;
        let p = [r[0].clamp(d.x_min, d.x_max), r[1].clamp(d.y_min, d.y_max)];
        let e = self.space.mesh.locate(p).expect("clamped point is in the domain");
        (e, p)
    }
}

impl Wavefield for DiscreteField {
    fn omega(&self) -> f64 {
        self.space.omega
    }

    fn value(&self, r: Point) -> C64 {
        let (e, p) = self.element_at(r);
        let basis = &self.space.bases[e];
        let off = self.space.offset(e);
        (0..basis.len())
            .map(|b| self.coefficients[off + b] * basis.eval(b, p))
            .sum()
    }

    fn gradient(&self, r: Point) -> [C64; 2] {
        let (e, p) = self.element_at(r);
        let basis = &self.space.bases[e];
        let off = self.space.offset(e);
        let mut g = [C64::new(0.0, 0.0); 2];
        for b in 0..basis.len() {
            let gb = basis.grad(b, p);
            g[0] += self.coefficients[off + b] * gb[0];
            g[1] += self.coefficients[off + b] * gb[1];
        }
        g
    }
}

/// Relative L2 distance between a discrete solution and a reference field,
/// by element-wise Gauss quadrature.
pub fn relative_l2_error(
    discrete: &DiscreteField,
    reference: &dyn Wavefield,
    quad_per_axis: usize,
) -> f64 {
    let mesh = &discrete.space.mesh;
    let (nodes, weights) = gauss_legendre(quad_per_axis);
    let mut err = 0.0;
    let mut norm = 0.0;
    for e in 0..mesh.n_elements() {
        let (x0, x1, y0, y1) = mesh.element_box(e);
        for ix in 0..quad_per_axis {
            for iy in 0..quad_per_axis {
                let x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * nodes[ix];
                let y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * nodes[iy];
                let w = weights[ix] * weights[iy] * 0.25 * (x1 - x0) * (y1 - y0);
                let d = discrete.value([x, y]) - reference.value([x, y]);
                err += w * d.norm_sqr();
                norm += w * reference.value([x, y]).norm_sqr();
            }
        }
    }
    (err / norm).sqrt()
}

/// Write solution coefficients: header {dofs, omega, mesh hash} as little
/// endian, then the interleaved re/im array.
pub fn write_solution(path: &std::path::Path, field: &DiscreteField) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&(field.coefficients.len() as u64).to_le_bytes())?;
    f.write_all(&field.space.omega.to_le_bytes())?;
    f.write_all(&field.space.mesh_hash().to_le_bytes())?;
    for c in field.coefficients.iter() {
        f.write_all(&c.re.to_le_bytes())?;
        f.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

/// Read solution coefficients back into a space (validates dofs, omega and
/// mesh hash).
pub fn read_solution(path: &std::path::Path, space: DGSpace) -> Result<DiscreteField> {
    let mut f = std::fs::File::open(path)?;
    let mut buf8 = [0u8; 8];
    f.read_exact(&mut buf8)?;
    let dofs = u64::from_le_bytes(buf8) as usize;
    f.read_exact(&mut buf8)?;
    let omega = f64::from_le_bytes(buf8);
    f.read_exact(&mut buf8)?;
    let hash = u64::from_le_bytes(buf8);
    if dofs != space.dofs {
        return Err(Error::Solve(format!(
            "solution file has {dofs} dofs, space has {}",
            space.dofs
        )));
    }
    if (omega - space.omega).abs() > 1e-12 * omega.abs().max(1.0) {
        return Err(Error::Solve("solution file frequency mismatch".into()));
    }
    if hash != space.mesh_hash() {
        return Err(Error::Solve("solution file mesh hash mismatch".into()));
    }
    let mut coeff = DVector::zeros(dofs);
    for i in 0..dofs {
        f.read_exact(&mut buf8)?;
        let re = f64::from_le_bytes(buf8);
        f.read_exact(&mut buf8)?;
        let im = f64::from_le_bytes(buf8);
        coeff[i] = C64::new(re, im);
    }
    Ok(DiscreteField { space, coefficients: coeff })
}
