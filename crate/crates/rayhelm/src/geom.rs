//! Uniform rectangular meshes, nested refinement and per-element ray data.
//!
//! The multi-mesh pipeline works on three nested meshes of the same
//! rectangular domain. Refinement always splits every element into k x k
//! children, so parent lookup reduces to locating a barycenter in the
//! coarse grid (half-open element boxes break boundary ties).

use crate::{wrap_angle, Error, Point, Result, C64};
use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }
}

/// Uniform rectangular mesh of a rectangle; elements are indexed row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl Mesh {
    pub fn dx(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    /// Mesh size: length of the longest element edge.
    pub fn h(&self) -> f64 {
        self.dx().max(self.dy())
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn barycenter(&self, e: usize) -> Point {
        let (ix, iy) = (e % self.nx, e / self.nx);
        [
            self.domain.x_min + (ix as f64 + 0.5) * self.dx(),
            self.domain.y_min + (iy as f64 + 0.5) * self.dy(),
        ]
    }

    /// Element bounds (x0, x1, y0, y1).
    pub fn element_box(&self, e: usize) -> (f64, f64, f64, f64) {
        let (ix, iy) = (e % self.nx, e / self.nx);
        (
            self.domain.x_min + ix as f64 * self.dx(),
            self.domain.x_min + (ix + 1) as f64 * self.dx(),
            self.domain.y_min + iy as f64 * self.dy(),
            self.domain.y_min + (iy + 1) as f64 * self.dy(),
        )
    }

    /// Element whose half-open box [x0,x1) x [y0,y1) contains `p`
    /// (top/right boundary points are clamped into the last row/column).
    pub fn locate(&self, p: Point) -> Option<usize> {
        if !self.domain.contains(p) {
            return None;
        }
        let ix = (((p[0] - self.domain.x_min) / self.dx()).floor() as usize).min(self.nx - 1);
        let iy = (((p[1] - self.domain.y_min) / self.dy()).floor() as usize).min(self.ny - 1);
        Some(self.index(ix, iy))
    }

    /// Distance from a point to the domain boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let d = &self.domain;
        (p[0] - d.x_min)
            .min(d.x_max - p[0])
            .min(p[1] - d.y_min)
            .min(d.y_max - p[1])
    }
}

/// Build a uniform mesh with h <= target_h via the ceiling rule per axis.
pub fn build_mesh(domain: Rect, target_h: f64) -> Result<Mesh> {
    if !(target_h > 0.0) {
        return Err(Error::Mesh(format!("target mesh size {target_h} must be positive")));
    }
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(Error::Mesh("degenerate domain".into()));
    }
    let nx = (domain.width() / target_h).ceil().max(1.0) as usize;
    let ny = (domain.height() / target_h).ceil().max(1.0) as usize;
    Ok(Mesh { domain, nx, ny })
}

/// Uniformly refine `coarse` so the result has mesh size <= target_h.
///
/// Every coarse element splits into k x k children with
/// k = ceil(coarse.h / target_h).
pub fn refine_to(coarse: &Mesh, target_h: f64) -> Result<Mesh> {
    if !(target_h < coarse.h()) {
        return Err(Error::Mesh(format!(
            "refinement target {target_h} not finer than h = {}",
            coarse.h()
        )));
    }
    let k = (coarse.h() / target_h).ceil() as usize;
    Ok(Mesh { domain: coarse.domain, nx: coarse.nx * k, ny: coarse.ny * k })
}

/// Integer refinement factor between two nested meshes, if any.
pub fn refinement_factor(coarse: &Mesh, fine: &Mesh) -> Option<usize> {
    if coarse.domain != fine.domain {
        return None;
    }
    if fine.nx % coarse.nx != 0 || fine.ny % coarse.ny != 0 {
        return None;
    }
    let kx = fine.nx / coarse.nx;
    let ky = fine.ny / coarse.ny;
    (kx == ky && kx >= 1).then_some(kx)
}

/// Parent element of a fine element under nested refinement, located by
/// barycenter containment in the coarse grid.
pub fn parent_of(coarse: &Mesh, fine: &Mesh, fine_element: usize) -> Result<usize> {
    refinement_factor(coarse, fine)
        .ok_or_else(|| Error::Mesh("meshes unrelated by refinement".into()))?;
    coarse
        .locate(fine.barycenter(fine_element))
        .ok_or_else(|| Error::Mesh("fine barycenter escaped the coarse grid".into()))
}

/// Ray data on one element: angles sorted ascending with matching amplitudes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElementRays {
    pub angles: Vec<f64>,
    pub amplitudes: Vec<C64>,
}

impl ElementRays {
    pub fn new(mut angles: Vec<f64>, mut amplitudes: Vec<C64>) -> Self {
        assert_eq!(angles.len(), amplitudes.len());
        let mut idx: Vec<usize> = (0..angles.len()).collect();
        idx.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]));
        let ang: Vec<f64> = idx.iter().map(|&i| wrap_angle(angles[i])).collect();
        let amp: Vec<C64> = idx.iter().map(|&i| amplitudes[i]).collect();
        angles = ang;
        amplitudes = amp;
        Self { angles, amplitudes }
    }

    pub fn ray_count(&self) -> usize {
        self.angles.len()
    }
}

/// Per-element ray estimates over a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct RayField {
    pub mesh: Mesh,
    pub elements: Vec<ElementRays>,
}

impl RayField {
    pub fn new(mesh: Mesh, elements: Vec<ElementRays>) -> Self {
        assert_eq!(mesh.n_elements(), elements.len());
        Self { mesh, elements }
    }

    pub fn max_ray_count(&self) -> usize {
        self.elements.iter().map(|e| e.ray_count()).max().unwrap_or(0)
    }
}

/// Transfer ray data to a nested finer mesh by parent inheritance: every
/// fine element carries its coarse parent's rays verbatim.
pub fn interpolate_ray_field(coarse_field: &RayField, fine: &Mesh) -> Result<RayField> {
    refinement_factor(&coarse_field.mesh, fine)
        .ok_or_else(|| Error::Mesh("meshes unrelated by refinement".into()))?;
    let mut elements = Vec::with_capacity(fine.n_elements());
    for e in 0..fine.n_elements() {
        let p = parent_of(&coarse_field.mesh, fine, e)?;
        elements.push(coarse_field.elements[p].clone());
    }
    Ok(RayField::new(fine.clone(), elements))
}

/// Transfer ray angles to a nested finer mesh by bilinear interpolation of
/// the coarse barycenter samples, per matched ray index.
///
/// Angle fields sampled on a coarse barycenter grid carry an O(h~^2)
/// reconstruction error under bilinear interpolation versus O(h~) under
/// piecewise-constant inheritance; the fine-mesh plane wave spaces need the
/// former to keep their O(omega^-1) budget. Rays of the four surrounding
/// coarse cells are matched to the parent's rays by circular closeness and
/// unwrapped before averaging. Cells whose neighbors disagree on the ray
/// count fall back to parent inheritance.
pub fn interpolate_ray_field_bilinear(coarse_field: &RayField, fine: &Mesh) -> Result<RayField> {
    refinement_factor(&coarse_field.mesh, fine)
        .ok_or_else(|| Error::Mesh("meshes unrelated by refinement".into()))?;
    let cm = &coarse_field.mesh;
    let mut elements = Vec::with_capacity(fine.n_elements());
    for e in 0..fine.n_elements() {
        let p = fine.barycenter(e);
        let parent = parent_of(cm, fine, e)?;
        let pr = &coarse_field.elements[parent];
        let n = pr.ray_count();

        // surrounding coarse barycenter cell (clamped at the boundary)
        let fx = (p[0] - cm.domain.x_min) / cm.dx() - 0.5;
        let fy = (p[1] - cm.domain.y_min) / cm.dy() - 0.5;
        let ix0 = (fx.floor().max(0.0) as usize).min(cm.nx.saturating_sub(2));
        let iy0 = (fy.floor().max(0.0) as usize).min(cm.ny.saturating_sub(2));
        let tx = (fx - ix0 as f64).clamp(0.0, 1.0);
        let ty = (fy - iy0 as f64).clamp(0.0, 1.0);

        let corners = [
            cm.index(ix0, iy0),
            cm.index(ix0 + 1, iy0),
            cm.index(ix0, iy0 + 1),
            cm.index(ix0 + 1, iy0 + 1),
        ];
        let weights = [
            (1.0 - tx) * (1.0 - ty),
            tx * (1.0 - ty),
            (1.0 - tx) * ty,
            tx * ty,
        ];

        if cm.nx < 2 || cm.ny < 2 || corners.iter().any(|&c| coarse_field.elements[c].ray_count() != n) {
            elements.push(pr.clone());
            continue;
        }

        let mut angles = Vec::with_capacity(n);
        let mut amps = Vec::with_capacity(n);
        for ray in 0..n {
            let reference = pr.angles[ray];
            let mut acc = 0.0;
            let mut amp = C64::new(0.0, 0.0);
            for (c, w) in corners.iter().zip(weights) {
                let cell = &coarse_field.elements[*c];
                // match by circular closeness to the parent's ray
                let (best, _) = cell
                    .angles
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| (i, crate::angle_dist(a, reference)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("nonempty by ray-count check");
                // unwrap near the reference before averaging
                let mut a = cell.angles[best];
                while a - reference > std::f64::consts::PI {
                    a -= std::f64::consts::TAU;
                }
                while reference - a > std::f64::consts::PI {
                    a += std::f64::consts::TAU;
                }
                acc += w * a;
                amp += C64::new(w, 0.0) * cell.amplitudes[best];
            }
            angles.push(acc);
            amps.push(amp);
        }
        elements.push(ElementRays::new(angles, amps));
    }
    Ok(RayField::new(fine.clone(), elements))
}

/// JSON record for one element of a [`RayField`].
#[derive(Debug, Serialize, Deserialize)]
struct RayRecord {
    element_index: usize,
    barycenter: [f64; 2],
    angles: Vec<f64>,
    amplitudes: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RayFieldFile {
    mesh: Mesh,
    rays: Vec<RayRecord>,
}

/// Serialize a ray field to the JSON cache format used by the CLI.
pub fn ray_field_to_json(field: &RayField) -> Result<String> {
    let rays = field
        .elements
        .iter()
        .enumerate()
        .map(|(e, rec)| RayRecord {
            element_index: e,
            barycenter: field.mesh.barycenter(e),
            angles: rec.angles.clone(),
            amplitudes: rec.amplitudes.iter().map(|a| [a.re, a.im]).collect(),
        })
        .collect();
    serde_json::to_string_pretty(&RayFieldFile { mesh: field.mesh.clone(), rays })
        .map_err(|e| Error::Serde(e.to_string()))
}

/// Parse the JSON cache format back into a ray field.
pub fn ray_field_from_json(text: &str) -> Result<RayField> {
    let file: RayFieldFile =
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
    let mut elements = vec![ElementRays::default(); file.mesh.n_elements()];
    for rec in file.rays {
        if rec.element_index >= elements.len() {
            return Err(Error::Serde(format!("element index {} out of range", rec.element_index)));
        }
        elements[rec.element_index] = ElementRays::new(
            rec.angles,
            rec.amplitudes.iter().map(|a| C64::new(a[0], a[1])).collect(),
        );
    }
    Ok(RayField::new(file.mesh, elements))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn build_mesh_ceiling_rule() {
        let m = build_mesh(Rect::UNIT, 0.25).unwrap();
        assert_eq!((m.nx, m.ny), (4, 4));
        assert_relative_eq!(m.h(), 0.25);

        let m = build_mesh(Rect::UNIT, 0.3).unwrap();
        assert_eq!((m.nx, m.ny), (4, 4));
        assert_relative_eq!(m.h(), 0.25);

        let m = build_mesh(Rect::UNIT, 1.0 / 20.0).unwrap();
        assert_eq!(m.n_elements(), 400);
    }

    #[test]
    fn degenerate_domain_rejected() {
        let d = Rect { x_min: 0.0, x_max: 0.0, y_min: 0.0, y_max: 1.0 };
        assert!(build_mesh(d, 0.1).is_err());
        assert!(build_mesh(Rect::UNIT, 0.0).is_err());
    }

    #[test]
    fn refine_factors() {
        let m = build_mesh(Rect::UNIT, 0.25).unwrap();
        let f = refine_to(&m, m.h() / 2.0).unwrap();
        assert_eq!((f.nx, f.ny), (8, 8));
        assert_eq!(refinement_factor(&m, &f), Some(2));

        let f3 = refine_to(&m, m.h() / 3.0).unwrap();
        assert_eq!((f3.nx, f3.ny), (12, 12));

        let m20 = build_mesh(Rect::UNIT, 1.0 / 20.0).unwrap();
        let f20 = refine_to(&m20, 1.0 / 400.0).unwrap();
        assert_eq!((f20.nx, f20.ny), (400, 400));

        assert!(refine_to(&m, 0.5).is_err());
    }

    #[test]
    fn barycenters_interior() {
        let m = build_mesh(Rect::UNIT, 0.21).unwrap();
        for e in 0..m.n_elements() {
            let b = m.barycenter(e);
            assert!(b[0] > 0.0 && b[0] < 1.0 && b[1] > 0.0 && b[1] < 1.0);
        }
    }

    #[test]
    fn constant_field_inherits() {
        let coarse = build_mesh(Rect::UNIT, 0.25).unwrap();
        let angle = std::f64::consts::FRAC_PI_4;
        let elems = vec![
            ElementRays::new(vec![angle], vec![C64::new(1.0, 0.0)]);
            coarse.n_elements()
        ];
        let field = RayField::new(coarse.clone(), elems);
        let fine = refine_to(&coarse, 0.125).unwrap();
        let out = interpolate_ray_field(&field, &fine).unwrap();
        assert_eq!(out.elements.len(), 64);
        for e in &out.elements {
            assert_eq!(e.angles, vec![angle]);
        }
    }

    #[test]
    fn two_ray_parent_inherited_verbatim() {
        let coarse = build_mesh(Rect::UNIT, 0.5).unwrap();
        let mut elems = Vec::new();
        for e in 0..coarse.n_elements() {
            let t = e as f64 * 0.3;
            elems.push(ElementRays::new(
                vec![0.4 + t, 2.5 + t],
                vec![C64::new(1.0, 0.0), C64::new(0.5, -0.25)],
            ));
        }
        let field = RayField::new(coarse.clone(), elems);
        let fine = refine_to(&coarse, 0.25).unwrap();
        let out = interpolate_ray_field(&field, &fine).unwrap();
        for e in 0..fine.n_elements() {
            let p = parent_of(&coarse, &fine, e).unwrap();
            assert_eq!(out.elements[e], field.elements[p]);
        }
    }

    #[test]
    fn inheritance_preserves_angle_multiset() {
        let coarse = build_mesh(Rect::UNIT, 0.34).unwrap();
        let mut elems = Vec::new();
        for e in 0..coarse.n_elements() {
            elems.push(ElementRays::new(vec![0.1 * e as f64], vec![C64::new(1.0, 0.0)]));
        }
        let field = RayField::new(coarse.clone(), elems);
        let fine = refine_to(&coarse, 0.1).unwrap();
        let out = interpolate_ray_field(&field, &fine).unwrap();
        use std::collections::BTreeSet;
        let coarse_set: BTreeSet<u64> = field
            .elements
            .iter()
            .flat_map(|e| e.angles.iter().map(|a| a.to_bits()))
            .collect();
        let fine_set: BTreeSet<u64> = out
            .elements
            .iter()
            .flat_map(|e| e.angles.iter().map(|a| a.to_bits()))
            .collect();
        assert_eq!(coarse_set, fine_set);
    }

    #[test]
    fn bilinear_reproduces_linear_angle_fields() {
        // angles linear in (x, y) are reconstructed exactly away from the border
        let coarse = Mesh { domain: Rect::UNIT, nx: 8, ny: 8 };
        let f = |p: Point| 0.3 + 0.8 * p[0] + 0.25 * p[1];
        let elems: Vec<ElementRays> = (0..coarse.n_elements())
            .map(|e| ElementRays::new(vec![f(coarse.barycenter(e))], vec![C64::new(1.0, 0.0)]))
            .collect();
        let field = RayField::new(coarse.clone(), elems);
        let fine = refine_to(&coarse, coarse.h() / 4.0).unwrap();
        let out = interpolate_ray_field_bilinear(&field, &fine).unwrap();
        for e in 0..fine.n_elements() {
            let b = fine.barycenter(e);
            let interior = b[0] > 0.15 && b[0] < 0.85 && b[1] > 0.15 && b[1] < 0.85;
            if interior {
                assert_relative_eq!(out.elements[e].angles[0], f(b), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mesh = build_mesh(Rect::UNIT, 0.5).unwrap();
        let elems: Vec<ElementRays> = (0..mesh.n_elements())
            .map(|e| {
                ElementRays::new(
                    vec![0.3 * e as f64, 1.0 + 0.2 * e as f64],
                    vec![C64::new(e as f64, -1.0), C64::new(0.5, 0.25 * e as f64)],
                )
            })
            .collect();
        let field = RayField::new(mesh, elems);
        let text = ray_field_to_json(&field).unwrap();
        let back = ray_field_from_json(&text).unwrap();
        assert_eq!(back, field);
    }

    #[test]
    fn unrelated_meshes_rejected() {
        let a = Mesh { domain: Rect::UNIT, nx: 3, ny: 3 };
        let b = Mesh { domain: Rect::UNIT, nx: 5, ny: 5 };
        let field = RayField::new(a, vec![ElementRays::default(); 9]);
        assert!(interpolate_ray_field(&field, &b).is_err());
    }

    proptest! {
        #[test]
        fn parent_contains_child_barycenter(nx in 1usize..7, ny in 1usize..7, k in 2usize..5) {
            let coarse = Mesh { domain: Rect::UNIT, nx, ny };
            let fine = Mesh { domain: Rect::UNIT, nx: nx * k, ny: ny * k };
            for e in 0..fine.n_elements() {
                let p = parent_of(&coarse, &fine, e).unwrap();
                let (x0, x1, y0, y1) = coarse.element_box(p);
                let b = fine.barycenter(e);
                prop_assert!(b[0] >= x0 && b[0] <= x1 && b[1] >= y0 && b[1] <= y1);
            }
        }
    }
}
