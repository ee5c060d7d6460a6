//! Oscillation measure `||phi||_{-1/2} / ||phi||_{-1}` of boundary data,
//! from the eigen-expansion of the Laplace-Beltrami operator on the boundary
//! with piecewise (bi)linear elements on the face grid.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::assembly::BoundaryFlux;
use crate::error::{EitError, Result};
use crate::hc_basis::make_quadrature;
use crate::mesh::{boundary_faces, StructuredMesh};

const LOAD_POINTS: usize = 4;

/// Generalized eigenpairs `S v = lambda M v` of the boundary surface,
/// with `V^T M V = I`.
#[derive(Debug, Clone)]
pub struct BoundarySpectrum {
    mesh: StructuredMesh,
    /// Boundary lattice node -> compact index.
    nodes: BTreeMap<usize, usize>,
    eigenvalues: DVector<f64>,
    /// `L^{-1}` applied to loads is followed by `Q^T`, where `M = L L^T`
    /// and `Q` diagonalizes `L^{-1} S L^{-T}`.
    mass_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    q: DMatrix<f64>,
    mass: DMatrix<f64>,
}

/// Lattice nodes (corners) of a boundary face, in tensor order over the
/// tangential axes.
fn face_nodes(mesh: &StructuredMesh, element: usize, axis: usize, high: bool) -> Vec<usize> {
    let n1 = mesh.n_e() + 1;
    let c = mesh.element_coords(element);
    let tang: Vec<usize> = (0..mesh.dim()).filter(|&a| a != axis).collect();
    let corners = 1usize << tang.len();
    (0..corners)
        .map(|bits| {
            let mut p = c;
            p[axis] += high as usize;
            for (slot, &a) in tang.iter().enumerate() {
                p[a] += (bits >> slot) & 1;
            }
            p[0] + n1 * (p[1] + n1 * p[2])
        })
        .collect()
}

/// Values of the (bi)linear corner functions at tangential reference
/// coordinates `t` in `[-1/2, 1/2]`.
fn corner_values(t: &[f64]) -> Vec<f64> {
    let corners = 1usize << t.len();
    (0..corners)
        .map(|bits| {
            t.iter()
                .enumerate()
                .map(|(slot, &x)| if (bits >> slot) & 1 == 1 { 0.5 + x } else { 0.5 - x })
                .product()
        })
        .collect()
}

fn corner_gradients(t: &[f64], h: f64) -> Vec<Vec<f64>> {
    let corners = 1usize << t.len();
    (0..corners)
        .map(|bits| {
            (0..t.len())
                .map(|d| {
                    t.iter()
                        .enumerate()
                        .map(|(slot, &x)| {
                            let up = (bits >> slot) & 1 == 1;
                            if slot == d {
                                (if up { 1.0 } else { -1.0 }) / h
                            } else if up {
                                0.5 + x
                            } else {
                                0.5 - x
                            }
                        })
                        .product()
                })
                .collect()
        })
        .collect()
}

impl BoundarySpectrum {
    pub fn new(mesh: &StructuredMesh) -> Result<Self> {
        let dim = mesh.dim();
        let faces = boundary_faces(mesh);
        let mut nodes = BTreeMap::new();
        for f in &faces {
            for g in face_nodes(mesh, f.element, f.axis, f.is_high()) {
                let next = nodes.len();
                nodes.entry(g).or_insert(next);
            }
        }
        // renumber in lattice order for a stable basis
        for (i, v) in nodes.values_mut().enumerate() {
            *v = i;
        }
        let nn = nodes.len();
        let h = mesh.h();
        let area = h.powi(dim as i32 - 1);
        let quad = make_quadrature(1, 3)?;
        let tang = dim - 1;
        let mut ks = DMatrix::<f64>::zeros(1 << tang, 1 << tang);
        let mut km = DMatrix::<f64>::zeros(1 << tang, 1 << tang);
        for (t, w) in quad.tensor(tang) {
            let ts = &t[..tang];
            let v = corner_values(ts);
            let g = corner_gradients(ts, h);
            for i in 0..v.len() {
                for j in 0..v.len() {
                    km[(i, j)] += w * area * v[i] * v[j];
                    let gg: f64 = g[i].iter().zip(&g[j]).map(|(a, b)| a * b).sum();
                    ks[(i, j)] += w * area * gg;
                }
            }
        }
        let mut s = DMatrix::zeros(nn, nn);
        let mut m = DMatrix::zeros(nn, nn);
        for f in &faces {
            let idx: Vec<usize> = face_nodes(mesh, f.element, f.axis, f.is_high())
                .iter()
                .map(|g| nodes[g])
                .collect();
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    s[(i, j)] += ks[(a, b)];
                    m[(i, j)] += km[(a, b)];
                }
            }
        }
        let mass_chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| EitError::Degenerate("boundary mass matrix not positive definite".into()))?;
        let l = mass_chol.l();
        let linv_s = l
            .solve_lower_triangular(&s)
            .ok_or_else(|| EitError::Degenerate("singular boundary mass factor".into()))?;
        let c = l
            .solve_lower_triangular(&linv_s.transpose())
            .ok_or_else(|| EitError::Degenerate("singular boundary mass factor".into()))?;
        let c = (&c + c.transpose()) * 0.5;
        let eig = c.symmetric_eigen();
        Ok(Self {
            mesh: mesh.clone(),
            nodes,
            eigenvalues: eig.eigenvalues,
            mass_chol,
            q: eig.eigenvectors,
            mass: m,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    /// M-orthonormal eigenvector `i` as nodal values.
    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        let qi = self.q.column(i).into_owned();
        self.mass_chol
            .l()
            .transpose()
            .solve_upper_triangular(&qi)
            .expect("factor is nonsingular")
    }

    /// Load vector `int phi psi_i` of boundary data.
    pub fn load<F: BoundaryFlux + ?Sized>(&self, flux: &F) -> Result<DVector<f64>> {
        let mesh = &self.mesh;
        let dim = mesh.dim();
        let tang = dim - 1;
        let area = mesh.h().powi(dim as i32 - 1);
        let quad = make_quadrature(1, LOAD_POINTS)?;
        let mut b = DVector::zeros(self.len());
        for f in boundary_faces(mesh) {
            let idx: Vec<usize> = face_nodes(mesh, f.element, f.axis, f.is_high())
                .iter()
                .map(|g| self.nodes[g])
                .collect();
            let axes = f.tangential_axes(dim);
            for (t, w) in quad.tensor(tang) {
                let mut xi = [0.0; 3];
                xi[f.axis] = f.xi_normal();
                for (slot, &a) in axes.iter().enumerate() {
                    xi[a] = t[slot];
                }
                let phi = flux.flux(mesh, &f, mesh.to_physical(f.element, xi));
                if phi == 0.0 {
                    continue;
                }
                for (i, v) in idx.iter().zip(corner_values(&t[..tang])) {
                    b[*i] += w * area * phi * v;
                }
            }
        }
        Ok(b)
    }

    /// Load vector of a nodal boundary function.
    pub fn load_from_nodal(&self, values: &DVector<f64>) -> DVector<f64> {
        &self.mass * values
    }

    /// Expansion coefficients `V^T b`.
    fn coefficients(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .mass_chol
            .l()
            .solve_lower_triangular(b)
            .expect("factor is nonsingular");
        self.q.transpose() * y
    }

    /// `sum (1 + lambda)^s c^2`.
    pub fn sobolev_norm_sq(&self, b: &DVector<f64>, s: f64) -> f64 {
        let c = self.coefficients(b);
        c.iter()
            .zip(self.eigenvalues.iter())
            .map(|(ci, li)| (1.0 + li.max(0.0)).powf(s) * ci * ci)
            .sum()
    }

    /// Frequency of the data with load vector `b`.
    pub fn frequency_of_load(&self, b: &DVector<f64>) -> Result<f64> {
        let hm1 = self.sobolev_norm_sq(b, -1.0);
        if !(hm1 > 0.0) {
            return Err(EitError::Degenerate("boundary data vanishes".into()));
        }
        Ok((self.sobolev_norm_sq(b, -0.5) / hm1).sqrt())
    }

    pub fn frequency<F: BoundaryFlux + ?Sized>(&self, flux: &F) -> Result<f64> {
        self.frequency_of_load(&self.load(flux)?)
    }
}

/// Frequency of boundary data on a mesh's boundary.
pub fn frequency<F: BoundaryFlux + ?Sized>(mesh: &StructuredMesh, flux: &F) -> Result<f64> {
    BoundarySpectrum::new(mesh)?.frequency(flux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::NeumannSpec;
    use crate::mesh::build_mesh;

    #[test]
    fn node_counts() {
        let m3 = build_mesh(3, 4, 1.0).unwrap();
        assert_eq!(BoundarySpectrum::new(&m3).unwrap().len(), 125 - 27);
        let m2 = build_mesh(2, 5, 1.0).unwrap();
        assert_eq!(BoundarySpectrum::new(&m2).unwrap().len(), 20);
    }

    #[test]
    fn lowest_mode_is_constant() {
        let mesh = build_mesh(2, 6, 1.0).unwrap();
        let sp = BoundarySpectrum::new(&mesh).unwrap();
        // eigenvalues come unsorted
        let lmin = sp.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(lmin.abs() < 1e-10, "{lmin}");
        let zeros = sp.eigenvalues().iter().filter(|l| l.abs() < 1e-8).count();
        assert_eq!(zeros, 1);
    }

    #[test]
    fn scale_invariance() {
        let mesh = build_mesh(3, 5, 1.0).unwrap();
        let sp = BoundarySpectrum::new(&mesh).unwrap();
        let f1 = sp.frequency(&NeumannSpec::cosine(1)).unwrap();
        let f2 = sp.frequency(&NeumannSpec::cosine(1).with_amplitude(-3.7)).unwrap();
        assert!((f1 - f2).abs() <= 1e-12 * f1);
        assert!(sp.frequency(&NeumannSpec::cosine(1).with_amplitude(0.0)).is_err());
    }

    #[test]
    fn single_mode_closed_form() {
        let mesh = build_mesh(2, 7, 1.0).unwrap();
        let sp = BoundarySpectrum::new(&mesh).unwrap();
        for i in [1, 5, 17] {
            let v = sp.eigenvector(i);
            let lam = sp.eigenvalues()[i];
            let f = sp.frequency_of_load(&sp.load_from_nodal(&v)).unwrap();
            assert!((f - (1.0 + lam).powf(0.25)).abs() < 1e-9, "mode {i}: {f}");
        }
    }

    #[test]
    fn cosine_family_is_increasing() {
        let mesh = build_mesh(3, 8, 1.0).unwrap();
        let sp = BoundarySpectrum::new(&mesh).unwrap();
        let f: Vec<f64> = (0..3).map(|n| sp.frequency(&NeumannSpec::cosine(n)).unwrap()).collect();
        assert!(f[0] < f[1] && f[1] < f[2], "{f:?}");
    }
}
