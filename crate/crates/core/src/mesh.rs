//! Structured square/cube meshes of HC elements.
//!
//! Elements and HC parameters are both indexed lexicographically with the
//! x index running fastest. An element with integer coordinates `c` couples
//! the parameters `c + {0,1,2}^dim` of a grid that carries one extra
//! parameter layer beyond each face, i.e. `(n_e + 2)^dim` parameters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};

/// Integer coordinates of an element or parameter; unused axes are zero.
pub type Coords = [usize; 3];

/// Axis-aligned uniform grid over `[0, side_l]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredMesh {
    dim: usize,
    n_e: usize,
    side_l: f64,
    h: f64,
}

impl StructuredMesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Elements per axis.
    pub fn n_e(&self) -> usize {
        self.n_e
    }

    pub fn side_length(&self) -> f64 {
        self.side_l
    }

    /// Element size.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `|Omega| = side_l^dim`.
    pub fn domain_measure(&self) -> f64 {
        self.side_l.powi(self.dim as i32)
    }

    /// Measure of one element, `h^dim`.
    pub fn element_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn n_elements(&self) -> usize {
        self.n_e.pow(self.dim as u32)
    }

    /// HC parameters per axis, `n_e + 2`.
    pub fn params_per_axis(&self) -> usize {
        self.n_e + 2
    }

    pub fn n_params(&self) -> usize {
        self.params_per_axis().pow(self.dim as u32)
    }

    /// Local parameters per element: 9 in 2-D, 27 in 3-D.
    pub fn params_per_element(&self) -> usize {
        3usize.pow(self.dim as u32)
    }

    /// Largest index distance between two coupled parameters, plus one for
    /// the diagonal.
    pub fn half_bandwidth(&self) -> usize {
        let n = self.params_per_axis();
        (0..self.dim).map(|a| 2 * n.pow(a as u32)).sum::<usize>() + 1
    }

    pub fn element_index(&self, c: Coords) -> usize {
        let n = self.n_e;
        c[0] + n * (c[1] + n * c[2])
    }

    pub fn element_coords(&self, e: usize) -> Coords {
        let n = self.n_e;
        match self.dim {
            2 => [e % n, e / n, 0],
            _ => [e % n, (e / n) % n, e / (n * n)],
        }
    }

    pub fn param_index(&self, c: Coords) -> usize {
        let n = self.params_per_axis();
        c[0] + n * (c[1] + n * c[2])
    }

    pub fn param_coords(&self, p: usize) -> Coords {
        let n = self.params_per_axis();
        match self.dim {
            2 => [p % n, p / n, 0],
            _ => [p % n, (p / n) % n, p / (n * n)],
        }
    }

    pub fn check_element(&self, e: usize) -> Result<()> {
        if e >= self.n_elements() {
            return Err(EitError::ElementOutOfRange {
                index: e,
                count: self.n_elements(),
            });
        }
        Ok(())
    }

    /// Global parameter indices of an element in local order (x fastest).
    pub fn element_params(&self, e: usize) -> Vec<usize> {
        let c = self.element_coords(e);
        let kmax = if self.dim == 3 { 3 } else { 1 };
        let mut out = Vec::with_capacity(self.params_per_element());
        for k in 0..kmax {
            for j in 0..3 {
                for i in 0..3 {
                    out.push(self.param_index([c[0] + i, c[1] + j, c[2] + k]));
                }
            }
        }
        out
    }

    /// Physical lower corner of an element.
    pub fn element_origin(&self, e: usize) -> [f64; 3] {
        let c = self.element_coords(e);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = c[a] as f64 * self.h;
        }
        x
    }

    /// Maps a reference point in `[-1/2, 1/2]^dim` to physical coordinates.
    pub fn to_physical(&self, e: usize, xi: [f64; 3]) -> [f64; 3] {
        let o = self.element_origin(e);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = o[a] + (xi[a] + 0.5) * self.h;
        }
        x
    }

    /// Element containing a physical point (clamped to the grid) and the
    /// matching reference coordinates.
    pub fn locate(&self, x: [f64; 3]) -> (usize, [f64; 3]) {
        let mut c = [0usize; 3];
        let mut xi = [0.0; 3];
        for a in 0..self.dim {
            let t = (x[a] / self.h).clamp(0.0, self.n_e as f64);
            let i = (t.floor() as usize).min(self.n_e - 1);
            c[a] = i;
            xi[a] = t - i as f64 - 0.5;
        }
        (self.element_index(c), xi)
    }

    /// Chebyshev distance, in element layers, from an element to the boundary.
    pub fn layers_to_boundary(&self, e: usize) -> usize {
        let c = self.element_coords(e);
        (0..self.dim)
            .map(|a| c[a].min(self.n_e - 1 - c[a]))
            .min()
            .unwrap_or(0)
    }

    /// Element layers between an element and one face of the domain.
    pub fn layers_to_face(&self, e: usize, axis: usize, high: bool) -> usize {
        let c = self.element_coords(e)[axis];
        if high {
            self.n_e - 1 - c
        } else {
            c
        }
    }

    pub fn is_boundary_element(&self, e: usize) -> bool {
        self.layers_to_boundary(e) == 0
    }

    /// Face-adjacent neighbours of an element.
    pub fn neighbors(&self, e: usize) -> Vec<usize> {
        let c = self.element_coords(e);
        let mut out = Vec::with_capacity(2 * self.dim);
        for a in 0..self.dim {
            if c[a] > 0 {
                let mut d = c;
                d[a] -= 1;
                out.push(self.element_index(d));
            }
            if c[a] + 1 < self.n_e {
                let mut d = c;
                d[a] += 1;
                out.push(self.element_index(d));
            }
        }
        out
    }
}

/// Builds a structured mesh with `n_e` elements per axis on `[0, side_l]^dim`.
pub fn build_mesh(dim: usize, n_e: usize, side_l: f64) -> Result<StructuredMesh> {
    if dim != 2 && dim != 3 {
        return Err(EitError::InvalidMesh(format!("dimension must be 2 or 3, got {dim}")));
    }
    if n_e < 3 {
        return Err(EitError::InvalidMesh(format!("need at least 3 elements per axis, got {n_e}")));
    }
    if !(side_l > 0.0) || !side_l.is_finite() {
        return Err(EitError::InvalidMesh(format!("side length must be positive, got {side_l}")));
    }
    Ok(StructuredMesh {
        dim,
        n_e,
        side_l,
        h: side_l / n_e as f64,
    })
}

/// Minimum element-layer distance from a set of elements to the boundary.
pub fn inclusion_d0(mesh: &StructuredMesh, elements: &[usize]) -> Result<usize> {
    if elements.is_empty() {
        return Err(EitError::EmptyInclusion);
    }
    let mut d0 = usize::MAX;
    for &e in elements {
        mesh.check_element(e)?;
        d0 = d0.min(mesh.layers_to_boundary(e));
    }
    Ok(d0)
}

/// Minimum element-layer distance from a set of elements to one face.
pub fn inclusion_face_distance(
    mesh: &StructuredMesh,
    elements: &[usize],
    axis: usize,
    high: bool,
) -> Result<usize> {
    if elements.is_empty() {
        return Err(EitError::EmptyInclusion);
    }
    if axis >= mesh.dim() {
        return Err(EitError::InvalidArgument(format!("axis {axis} out of range")));
    }
    let mut d = usize::MAX;
    for &e in elements {
        mesh.check_element(e)?;
        d = d.min(mesh.layers_to_face(e, axis, high));
    }
    Ok(d)
}

/// A union of whole elements with conductivity `k` (background is 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionMask {
    elements: Vec<usize>,
    k: f64,
    d0_elems: usize,
}

impl InclusionMask {
    /// Validates and normalizes (sorted, deduplicated) the element set.
    pub fn new(mesh: &StructuredMesh, elements: impl IntoIterator<Item = usize>, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(EitError::InvalidArgument(format!("contrast k must be positive, got {k}")));
        }
        let set: BTreeSet<usize> = elements.into_iter().collect();
        let elements: Vec<usize> = set.into_iter().collect();
        let d0_elems = inclusion_d0(mesh, &elements)?;
        if d0_elems == 0 {
            log::warn!("inclusion touches the boundary (d0 = 0)");
        }
        Ok(Self { elements, k, d0_elems })
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn d0_elems(&self) -> usize {
        self.d0_elems
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `|D|` in physical units.
    pub fn measure(&self, mesh: &StructuredMesh) -> f64 {
        self.elements.len() as f64 * mesh.element_measure()
    }

    /// `|D| / |Omega|`.
    pub fn volume_fraction(&self, mesh: &StructuredMesh) -> f64 {
        self.elements.len() as f64 / mesh.n_elements() as f64
    }

    pub fn contains(&self, e: usize) -> bool {
        self.elements.binary_search(&e).is_ok()
    }

    /// Stable 64-bit FNV-1a hash of the element set.
    pub fn shape_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &e in &self.elements {
            for b in (e as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// One element face lying on the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFace {
    pub element: usize,
    /// `2 * axis + (0 for the low side, 1 for the high side)`.
    pub local_face: usize,
    pub axis: usize,
    /// Outward normal direction along `axis`: -1 or +1.
    pub sign: i8,
    pub centroid: [f64; 3],
}

impl BoundaryFace {
    pub fn is_high(&self) -> bool {
        self.sign > 0
    }

    /// Reference coordinate of the face plane along its normal axis.
    pub fn xi_normal(&self) -> f64 {
        0.5 * self.sign as f64
    }

    /// Tangential axes of the face in increasing order.
    pub fn tangential_axes(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|&a| a != self.axis).collect()
    }
}

/// All boundary faces ordered by axis, then side (low, high), then element.
pub fn boundary_faces(mesh: &StructuredMesh) -> Vec<BoundaryFace> {
    let dim = mesh.dim();
    let n = mesh.n_e();
    let mut faces = Vec::with_capacity(2 * dim * n.pow(dim as u32 - 1));
    for axis in 0..dim {
        for high in [false, true] {
            let sign: i8 = if high { 1 } else { -1 };
            for e in 0..mesh.n_elements() {
                let c = mesh.element_coords(e);
                let on_face = if high { c[axis] == n - 1 } else { c[axis] == 0 };
                if !on_face {
                    continue;
                }
                let mut xi = [0.0; 3];
                xi[axis] = 0.5 * sign as f64;
                faces.push(BoundaryFace {
                    element: e,
                    local_face: 2 * axis + high as usize,
                    axis,
                    sign,
                    centroid: mesh.to_physical(e, xi),
                });
            }
        }
    }
    faces
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_counts() {
        let m = build_mesh(2, 21, 1.0).unwrap();
        assert_eq!(m.n_elements(), 441);
        assert_eq!(m.n_params(), 529);
        let m = build_mesh(3, 20, 1.0).unwrap();
        assert_eq!(m.n_elements(), 8000);
        assert_eq!(m.n_params(), 10648);
        assert_eq!(m.half_bandwidth(), 1015);
        let m = build_mesh(2, 3, 3.0).unwrap();
        assert_eq!(m.n_elements(), 9);
        assert_eq!(m.h(), 1.0);
        assert_eq!(m.n_params(), 25);
    }

    #[test]
    fn mesh_rejects_bad_input() {
        assert!(build_mesh(1, 5, 1.0).is_err());
        assert!(build_mesh(4, 5, 1.0).is_err());
        assert!(build_mesh(2, 2, 1.0).is_err());
        assert!(build_mesh(2, 5, 0.0).is_err());
        assert!(build_mesh(2, 5, -1.0).is_err());
    }

    #[test]
    fn d0_examples() {
        let m = build_mesh(2, 21, 1.0).unwrap();
        assert_eq!(inclusion_d0(&m, &[m.element_index([0, 0, 0])]).unwrap(), 0);
        assert_eq!(inclusion_d0(&m, &[m.element_index([10, 10, 0])]).unwrap(), 10);
        let block: Vec<usize> = (2..4)
            .flat_map(|y| (2..4).map(move |x| [x, y, 0]))
            .map(|c| m.element_index(c))
            .collect();
        assert_eq!(inclusion_d0(&m, &block).unwrap(), 2);
        assert_eq!(inclusion_d0(&m, &[]), Err(EitError::EmptyInclusion));
    }

    #[test]
    fn face_counts_and_normals() {
        for (dim, n, want) in [(2, 21, 84), (3, 20, 2400), (3, 7, 294)] {
            let m = build_mesh(dim, n, 1.0).unwrap();
            let faces = boundary_faces(&m);
            assert_eq!(faces.len(), want);
            for f in &faces {
                let c = f.centroid[f.axis];
                if f.sign > 0 {
                    assert!((c - 1.0).abs() < 1e-14);
                } else {
                    assert!(c.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn element_params_are_local_block() {
        let m = build_mesh(3, 4, 1.0).unwrap();
        let e = m.element_index([1, 2, 3]);
        let p = m.element_params(e);
        assert_eq!(p.len(), 27);
        assert_eq!(p[0], m.param_index([1, 2, 3]));
        assert_eq!(p[26], m.param_index([3, 4, 5]));
        let span = p[26] - p[0] + 1;
        assert_eq!(span, m.half_bandwidth());
    }

    #[test]
    fn every_element_is_interior_or_boundary_adjacent() {
        let m = build_mesh(3, 5, 1.0).unwrap();
        let faces = boundary_faces(&m);
        for e in 0..m.n_elements() {
            let has_face = faces.iter().any(|f| f.element == e);
            assert_eq!(has_face, m.is_boundary_element(e));
        }
    }
}
