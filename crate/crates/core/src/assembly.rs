//! Element matrices and global assembly into symmetric band storage.
//!
//! The homogeneous stiffness is assembled once per mesh; an inclusion is an
//! additive `(k - 1) * sum K_e` update over its elements.

use nalgebra::DMatrix;
use num_bigint::BigUint;

use crate::error::{EitError, Result};
use crate::forward::ElectrodeLayout;
use crate::hc_basis::{element_variants, eval_reference_basis, QuadratureRule, Variant};
use crate::mesh::{boundary_faces, BoundaryFace, InclusionMask, StructuredMesh};

/// Relative tolerance on the boundary integral of Neumann data.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Symmetric matrix in band storage.
///
/// Column `j` of the lower triangle (equivalently row `j` of the upper
/// triangle) occupies `data[j * b .. (j + 1) * b]`, with offset `t` holding
/// `A[j + t, j]`. The half-bandwidth `b` counts the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymmetricMatrix {
    order: usize,
    half_bw: usize,
    data: Vec<f64>,
}

impl BandedSymmetricMatrix {
    pub fn zeros(order: usize, half_bw: usize) -> Self {
        assert!(half_bw >= 1, "half-bandwidth counts the diagonal");
        Self {
            order,
            half_bw,
            data: vec![0.0; order * half_bw],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bw
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let t = hi - lo;
        (hi < self.order && t < self.half_bw).then_some(lo * self.half_bw + t)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.half_bw));
        self.data[s] += v;
    }

    /// Scatters a dense element matrix scaled by `scale`. Only the upper
    /// triangle of `ke` is read.
    pub fn scatter(&mut self, dofs: &[usize], ke: &DMatrix<f64>, scale: f64) {
        let b = self.half_bw;
        for (a, &i) in dofs.iter().enumerate() {
            for (c, &j) in dofs.iter().enumerate().skip(a) {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                self.data[lo * b + (hi - lo)] += scale * ke[(a, c)];
            }
        }
    }

    /// Scatter for dofs `base + offsets[a]` with ascending `offsets`.
    fn scatter_shifted(&mut self, base: usize, offsets: &[usize], ke: &DMatrix<f64>, scale: f64) {
        let b = self.half_bw;
        let n = offsets.len();
        let ke = ke.as_slice();
        for (a, &oa) in offsets.iter().enumerate() {
            let row = &mut self.data[(base + oa) * b..];
            // column a of ke equals row a by symmetry; column-major storage
            let col = &ke[a * n..(a + 1) * n];
            for c in a..n {
                row[offsets[c] - oa] += scale * col[c];
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (m, b) = (self.order, self.half_bw);
        let mut y = vec![0.0; m];
        for j in 0..m {
            let col = &self.data[j * b..(j + 1) * b];
            let mut acc = col[0] * x[j];
            let tmax = b.min(m - j);
            for t in 1..tmax {
                acc += col[t] * x[j + t];
                y[j + t] += col[t] * x[j];
            }
            y[j] += acc;
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.order;
        DMatrix::from_fn(m, m, |i, j| self.get(i, j))
    }

    /// Largest offset actually carrying a nonzero entry, plus one.
    pub fn occupied_bandwidth(&self) -> usize {
        let b = self.half_bw;
        let mut used = 0;
        for j in 0..self.order {
            for t in (0..b).rev() {
                if self.data[j * b + t] != 0.0 {
                    used = used.max(t + 1);
                    break;
                }
            }
        }
        used
    }
}

/// Stiffness `int grad N^T grad N` of one element at unit conductivity.
pub fn element_stiffness(mesh: &StructuredMesh, e: usize, quad: &QuadratureRule) -> Result<DMatrix<f64>> {
    mesh.check_element(e)?;
    Ok(reference_stiffness(mesh.dim(), element_variants(mesh, e), mesh.h(), quad))
}

fn reference_stiffness(dim: usize, variants: [Variant; 3], h: f64, quad: &QuadratureRule) -> DMatrix<f64> {
    let n = 3usize.pow(dim as u32);
    let jac = h.powi(dim as i32);
    let mut ke = DMatrix::zeros(n, n);
    for (xi, w) in quad.tensor(dim) {
        let be = eval_reference_basis(dim, variants, xi, h);
        for a in 0..dim {
            let g = &be.gradients[a * n..(a + 1) * n];
            for i in 0..n {
                let gi = w * jac * g[i];
                for j in i..n {
                    ke[(i, j)] += gi * g[j];
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            ke[(i, j)] = ke[(j, i)];
        }
    }
    ke
}

/// Element stiffness matrices for every combination of per-axis variants.
#[derive(Debug, Clone)]
pub struct StiffnessCache {
    dim: usize,
    matrices: Vec<DMatrix<f64>>,
}

impl StiffnessCache {
    pub fn new(mesh: &StructuredMesh, quad: &QuadratureRule) -> Self {
        let dim = mesh.dim();
        let combos = 3usize.pow(dim as u32);
        let matrices = (0..combos)
            .map(|key| {
                let mut v = [Variant::Interior; 3];
                let mut r = key;
                for slot in v.iter_mut().take(dim) {
                    *slot = Variant::ALL[r % 3];
                    r /= 3;
                }
                reference_stiffness(dim, v, mesh.h(), quad)
            })
            .collect();
        Self { dim, matrices }
    }

    pub fn get(&self, variants: [Variant; 3]) -> &DMatrix<f64> {
        let key = (0..self.dim).rev().fold(0, |acc, a| acc * 3 + variants[a].ordinal());
        &self.matrices[key]
    }

    pub fn for_element(&self, mesh: &StructuredMesh, e: usize) -> &DMatrix<f64> {
        self.get(element_variants(mesh, e))
    }
}

/// Assembles `sum_e sigma(e) K_e` over all elements.
pub fn assemble_stiffness_with<F>(mesh: &StructuredMesh, cache: &StiffnessCache, sigma: F) -> BandedSymmetricMatrix
where
    F: Fn(usize) -> f64,
{
    let mut k = BandedSymmetricMatrix::zeros(mesh.n_params(), mesh.half_bandwidth());
    let offsets = mesh.element_params(0);
    for e in 0..mesh.n_elements() {
        let base = mesh.param_index(mesh.element_coords(e));
        k.scatter_shifted(base, &offsets, cache.for_element(mesh, e), sigma(e));
    }
    k
}

/// Homogeneous (unit conductivity) stiffness matrix.
pub fn assemble_homogeneous(mesh: &StructuredMesh, cache: &StiffnessCache) -> BandedSymmetricMatrix {
    assemble_stiffness_with(mesh, cache, |_| 1.0)
}

/// Adds `(k - 1) K_e` for every element of the inclusion.
pub fn add_inclusion(
    k: &mut BandedSymmetricMatrix,
    mesh: &StructuredMesh,
    cache: &StiffnessCache,
    inclusion: &InclusionMask,
) {
    let scale = inclusion.k() - 1.0;
    if scale == 0.0 {
        return;
    }
    let offsets = mesh.element_params(0);
    for &e in inclusion.elements() {
        let base = mesh.param_index(mesh.element_coords(e));
        k.scatter_shifted(base, &offsets, cache.for_element(mesh, e), scale);
    }
}

/// Computes `K w` element by element, without stored global matrix.
pub fn apply_stiffness(
    mesh: &StructuredMesh,
    cache: &StiffnessCache,
    inclusion: Option<&InclusionMask>,
    w: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; w.len()];
    let offsets = mesh.element_params(0);
    let n = offsets.len();
    let mut local = vec![0.0; n];
    for e in 0..mesh.n_elements() {
        let sigma = match inclusion {
            Some(inc) if inc.contains(e) => inc.k(),
            _ => 1.0,
        };
        let base = mesh.param_index(mesh.element_coords(e));
        // symmetric, so column i is row i
        let ke = cache.for_element(mesh, e).as_slice();
        for (l, &o) in local.iter_mut().zip(&offsets) {
            *l = w[base + o];
        }
        for (col, &o) in ke.chunks_exact(n).zip(&offsets) {
            let acc: f64 = col.iter().zip(&local).map(|(a, b)| a * b).sum();
            y[base + o] += sigma * acc;
        }
    }
    y
}

/// Normal current density prescribed on the boundary.
pub trait BoundaryFlux {
    /// Outward flux at physical point `x` of a boundary face.
    fn flux(&self, mesh: &StructuredMesh, face: &BoundaryFace, x: [f64; 3]) -> f64;
}

/// Basis traces on a boundary face, weighted for integration.
pub(crate) fn face_quadrature(
    mesh: &StructuredMesh,
    face: &BoundaryFace,
    quad: &QuadratureRule,
) -> Vec<([f64; 3], f64, Vec<f64>)> {
    let dim = mesh.dim();
    let area = mesh.h().powi(dim as i32 - 1);
    let variants = element_variants(mesh, face.element);
    quad.face_points(face.axis, face.xi_normal())
        .into_iter()
        .map(|(xi, w)| {
            let be = eval_reference_basis(dim, variants, xi, mesh.h());
            (mesh.to_physical(face.element, xi), w * area, be.values)
        })
        .collect()
}

/// Load vector `p_g = int_{dOmega} phi N_g` with the compatibility check.
pub fn assemble_load<F: BoundaryFlux + ?Sized>(
    mesh: &StructuredMesh,
    flux: &F,
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut p = vec![0.0; mesh.n_params()];
    let mut total = 0.0;
    let mut abs_total = 0.0;
    for face in boundary_faces(mesh) {
        let dofs = mesh.element_params(face.element);
        for (x, w, n) in face_quadrature(mesh, &face, quad) {
            let phi = flux.flux(mesh, &face, x);
            if phi == 0.0 {
                continue;
            }
            total += w * phi;
            abs_total += w * phi.abs();
            for (g, ng) in dofs.iter().zip(&n) {
                p[*g] += w * phi * ng;
            }
        }
    }
    if total.abs() > COMPATIBILITY_TOL * abs_total.max(f64::MIN_POSITIVE) && abs_total > 0.0 {
        return Err(EitError::IncompatibleNeumann {
            integral: total,
            norm: abs_total,
        });
    }
    Ok(p)
}

/// Global stiffness with inclusion and Neumann load.
pub fn assemble_global<F: BoundaryFlux + ?Sized>(
    mesh: &StructuredMesh,
    inclusion: Option<&InclusionMask>,
    flux: &F,
    quad: &QuadratureRule,
) -> Result<(BandedSymmetricMatrix, Vec<f64>)> {
    let p = assemble_load(mesh, flux, quad)?;
    let cache = StiffnessCache::new(mesh, quad);
    let mut k = assemble_homogeneous(mesh, &cache);
    if let Some(inc) = inclusion {
        add_inclusion(&mut k, mesh, &cache, inc);
    }
    Ok((k, p))
}

/// Electrode contributions: `(1/z) int N^T N` into the bulk block,
/// `(1/z) int N^T` coupling columns and `(1/z) |e_l|` diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeBlocks {
    pub coupling: Vec<Vec<f64>>,
    pub diag: Vec<f64>,
}

/// Adds the electrode boundary mass to `k_ww` and returns the coupling blocks.
pub fn electrode_blocks(
    k_ww: &mut BandedSymmetricMatrix,
    mesh: &StructuredMesh,
    layout: &ElectrodeLayout,
    quad: &QuadratureRule,
) -> ElectrodeBlocks {
    let m = mesh.n_params();
    let mut coupling = Vec::with_capacity(layout.len());
    let mut diag = Vec::with_capacity(layout.len());
    for el in layout.electrodes() {
        let inv_z = 1.0 / el.impedance;
        let mut col = vec![0.0; m];
        let mut area = 0.0;
        for face in &el.faces {
            let dofs = mesh.element_params(face.element);
            let nloc = dofs.len();
            let mut kll = DMatrix::zeros(nloc, nloc);
            for (_, w, n) in face_quadrature(mesh, face, quad) {
                area += w;
                for i in 0..nloc {
                    col[dofs[i]] += inv_z * w * n[i];
                    for j in i..nloc {
                        kll[(i, j)] += w * n[i] * n[j];
                    }
                }
            }
            k_ww.scatter(&dofs, &kll, inv_z);
        }
        coupling.push(col);
        diag.push(inv_z * area);
    }
    ElectrodeBlocks { coupling, diag }
}

/// Block system `[K_ww, -K_wU; -K_wU^T, K_UU] [w; U] = [0; I]`.
#[derive(Debug, Clone)]
pub struct CemSystem {
    pub k_ww: BandedSymmetricMatrix,
    /// One column of length `n_params` per electrode.
    pub k_wu: Vec<Vec<f64>>,
    /// Diagonal of `K_UU`.
    pub k_uu: Vec<f64>,
    pub current: Vec<f64>,
}

impl CemSystem {
    pub fn n_electrodes(&self) -> usize {
        self.k_uu.len()
    }

    /// Dense copy of the full block matrix, for small systems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.k_ww.order();
        let l = self.n_electrodes();
        let mut a = DMatrix::zeros(m + l, m + l);
        a.view_mut((0, 0), (m, m)).copy_from(&self.k_ww.to_dense());
        for (c, col) in self.k_wu.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                a[(i, m + c)] = -v;
                a[(m + c, i)] = -v;
            }
            a[(m + c, m + c)] = self.k_uu[c];
        }
        a
    }

    /// Residual blocks `K_ww w - K_wU U` and `-K_wU^T w + K_UU U - I`.
    pub fn residual(&self, w: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut rw = self.k_ww.matvec(w);
        let mut ru = Vec::with_capacity(u.len());
        for (l, col) in self.k_wu.iter().enumerate() {
            let mut dot = 0.0;
            for (i, v) in col.iter().enumerate() {
                rw[i] -= v * u[l];
                dot += v * w[i];
            }
            ru.push(-dot + self.k_uu[l] * u[l] - self.current[l]);
        }
        (rw, ru)
    }
}

/// Assembles the complete-electrode block system.
pub fn assemble_cem(
    mesh: &StructuredMesh,
    inclusion: Option<&InclusionMask>,
    layout: &ElectrodeLayout,
    quad: &QuadratureRule,
) -> Result<CemSystem> {
    layout.validate(mesh)?;
    let cache = StiffnessCache::new(mesh, quad);
    let mut k_ww = assemble_homogeneous(mesh, &cache);
    if let Some(inc) = inclusion {
        add_inclusion(&mut k_ww, mesh, &cache, inc);
    }
    let blocks = electrode_blocks(&mut k_ww, mesh, layout, quad);
    Ok(CemSystem {
        k_ww,
        k_wu: blocks.coupling,
        k_uu: blocks.diag,
        current: layout.currents().to_vec(),
    })
}

/// Number of ways to choose `n_i` of `n_cells` elements, exactly.
pub fn count_inclusions(n_cells: u64, n_i: u64) -> Result<BigUint> {
    if n_i > n_cells {
        return Err(EitError::InvalidArgument(format!("cannot choose {n_i} of {n_cells} cells")));
    }
    let k = n_i.min(n_cells - n_i);
    let mut c = BigUint::from(1u32);
    for i in 0..k {
        c *= n_cells - i;
        c /= i + 1;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hc_basis::make_quadrature;
    use crate::mesh::build_mesh;

    #[test]
    fn element_stiffness_properties() {
        let m = build_mesh(3, 5, 1.0).unwrap();
        let q = make_quadrature(3, 3).unwrap();
        for e in [0, 31, 62, 124] {
            let ke = element_stiffness(&m, e, &q).unwrap();
            for i in 0..27 {
                let row: f64 = (0..27).map(|j| ke[(i, j)]).sum();
                assert!(row.abs() < 1e-13, "row sum {row}");
                for j in 0..27 {
                    assert!((ke[(i, j)] - ke[(j, i)]).abs() < 1e-14);
                }
            }
            let eig = ke.clone().symmetric_eigen();
            let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!(ev[0].abs() < 1e-12);
            assert!(ev[1] > 1e-6, "nullspace larger than constants");
        }
    }

    #[test]
    fn one_dimensional_center_self_energy() {
        // Along one axis, int (phi_2')^2 = int 4 xi^2 = 1/3.
        let q = make_quadrature(1, 3).unwrap();
        let v: f64 = q.points_1d.iter().zip(&q.weights_1d).map(|(x, w)| w * 4.0 * x * x).sum();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        let set = crate::hc_basis::ShapeSet1D::new(Variant::Interior);
        let s: f64 = q
            .points_1d
            .iter()
            .zip(&q.weights_1d)
            .map(|(&x, w)| w * set.derivatives(x)[1].powi(2))
            .sum();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn band_matches_reported_size() {
        let m = build_mesh(3, 20, 1.0).unwrap();
        assert_eq!(m.n_params(), 10648);
        assert_eq!(m.half_bandwidth(), 1015);
    }

    #[test]
    fn occupied_band_is_full() {
        let m = build_mesh(3, 4, 1.0).unwrap();
        let q = make_quadrature(3, 3).unwrap();
        let c = StiffnessCache::new(&m, &q);
        let k = assemble_homogeneous(&m, &c);
        assert_eq!(k.occupied_bandwidth(), m.half_bandwidth());
    }

    #[test]
    fn matvec_matches_dense() {
        let m = build_mesh(2, 4, 1.0).unwrap();
        let q = make_quadrature(2, 3).unwrap();
        let c = StiffnessCache::new(&m, &q);
        let k = assemble_homogeneous(&m, &c);
        let x: Vec<f64> = (0..m.n_params()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = k.matvec(&x);
        let yd = k.to_dense() * nalgebra::DVector::from_vec(x);
        for (a, b) in y.iter().zip(yd.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn incremental_matches_scratch() {
        for (dim, n_e) in [(2, 7), (3, 5)] {
            let m = build_mesh(dim, n_e, 1.0).unwrap();
            let c = StiffnessCache::new(&m, &make_quadrature(dim, 3).unwrap());
            let elems: Vec<usize> = (0..m.n_elements()).filter(|e| e % 3 == 1).collect();
            for k in [0.1, 10.0, 1.0] {
                let inc = InclusionMask::new(&m, elems.iter().copied(), k).unwrap();
                let mut a = assemble_homogeneous(&m, &c);
                add_inclusion(&mut a, &m, &c, &inc);
                let b = assemble_stiffness_with(&m, &c, |e| if inc.contains(e) { k } else { 1.0 });
                for (x, y) in a.data().iter().zip(b.data()) {
                    assert!((x - y).abs() <= 1e-13, "{x} vs {y}");
                }
                let w: Vec<f64> = (0..m.n_params()).map(|i| (i as f64 * 0.61).cos()).collect();
                let y0 = a.matvec(&w);
                let y1 = apply_stiffness(&m, &c, Some(&inc), &w);
                for (x, y) in y0.iter().zip(&y1) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
            }
        }
    }

    #[test]
    fn binomial_counts() {
        assert_eq!(count_inclusions(343, 5).unwrap(), BigUint::from(38_421_292_833u64));
        assert_eq!(count_inclusions(10, 0).unwrap(), BigUint::from(1u32));
        assert_eq!(count_inclusions(10, 10).unwrap(), BigUint::from(1u32));
        assert_eq!(count_inclusions(52, 5).unwrap(), BigUint::from(2_598_960u32));
        assert!(count_inclusions(3, 4).is_err());
    }
}
