//! High-Continuity quadratic shape functions and Gauss quadrature.
//!
//! On interior elements the three 1-D functions are the uniform quadratic
//! B-splines on `[-1/2, 1/2]`. Elements whose side lies on the boundary use
//! modified functions for which the outer parameter is the field value on
//! that side. Tensor products are formed per axis, so corner and edge
//! elements combine the modified set on every axis that touches the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};
use crate::mesh::StructuredMesh;

/// Which 1-D shape set an element uses along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Interior,
    /// Element side at `xi = -1/2` lies on the boundary.
    Left,
    /// Element side at `xi = +1/2` lies on the boundary.
    Right,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Interior, Variant::Left, Variant::Right];

    pub fn ordinal(self) -> usize {
        match self {
            Variant::Interior => 0,
            Variant::Left => 1,
            Variant::Right => 2,
        }
    }

    /// Variant used along an axis by the element at coordinate `c` of `n_e`.
    pub fn for_coordinate(c: usize, n_e: usize) -> Self {
        if c == 0 {
            Variant::Left
        } else if c + 1 == n_e {
            Variant::Right
        } else {
            Variant::Interior
        }
    }
}

/// Coefficients `(a, b, c)` of `a + b xi + c xi^2` for the three 1-D functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSet1D {
    pub variant: Variant,
    pub coeffs: [[f64; 3]; 3],
}

const INTERIOR: [[f64; 3]; 3] = [
    [1.0 / 8.0, -0.5, 0.5],
    [3.0 / 4.0, 0.0, -1.0],
    [1.0 / 8.0, 0.5, 0.5],
];

const LEFT: [[f64; 3]; 3] = [
    [0.25, -1.0, 1.0],
    [5.0 / 8.0, 0.5, -1.5],
    [1.0 / 8.0, 0.5, 0.5],
];

const RIGHT: [[f64; 3]; 3] = [
    [1.0 / 8.0, -0.5, 0.5],
    [5.0 / 8.0, -0.5, -1.5],
    [0.25, 1.0, 1.0],
];

impl ShapeSet1D {
    pub fn new(variant: Variant) -> Self {
        let coeffs = match variant {
            Variant::Interior => INTERIOR,
            Variant::Left => LEFT,
            Variant::Right => RIGHT,
        };
        Self { variant, coeffs }
    }

    #[inline]
    pub fn values(&self, xi: f64) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (out, c) in v.iter_mut().zip(&self.coeffs) {
            *out = c[0] + xi * (c[1] + xi * c[2]);
        }
        v
    }

    #[inline]
    pub fn derivatives(&self, xi: f64) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (out, c) in v.iter_mut().zip(&self.coeffs) {
            *out = c[1] + 2.0 * xi * c[2];
        }
        v
    }
}

fn check_local(i: usize, xi: f64) -> Result<()> {
    if !(1..=3).contains(&i) {
        return Err(EitError::InvalidArgument(format!("shape function index must be 1..=3, got {i}")));
    }
    if !(-0.5 - 1e-12..=0.5 + 1e-12).contains(&xi) {
        return Err(EitError::InvalidArgument(format!("xi = {xi} outside [-1/2, 1/2]")));
    }
    Ok(())
}

/// Value of the 1-based shape function `i` of a variant at `xi`.
pub fn eval_shape(variant: Variant, i: usize, xi: f64) -> Result<f64> {
    check_local(i, xi)?;
    Ok(ShapeSet1D::new(variant).values(xi)[i - 1])
}

/// Derivative with respect to `xi` of shape function `i`.
pub fn eval_shape_derivative(variant: Variant, i: usize, xi: f64) -> Result<f64> {
    check_local(i, xi)?;
    Ok(ShapeSet1D::new(variant).derivatives(xi)[i - 1])
}

/// Per-axis variants of an element (unused axes are `Interior`).
pub fn element_variants(mesh: &StructuredMesh, e: usize) -> [Variant; 3] {
    let c = mesh.element_coords(e);
    let mut v = [Variant::Interior; 3];
    for a in 0..mesh.dim() {
        v[a] = Variant::for_coordinate(c[a], mesh.n_e());
    }
    v
}

/// Basis row `N_e` and gradient rows `grad N_e` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub dim: usize,
    /// Length `3^dim`.
    pub values: Vec<f64>,
    /// Row-major `dim x 3^dim`, physical coordinates.
    pub gradients: Vec<f64>,
}

impl BasisEval {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn grad(&self, axis: usize, j: usize) -> f64 {
        self.gradients[axis * self.values.len() + j]
    }
}

/// Tensor-product basis for given per-axis variants at a reference point,
/// with gradients scaled by `1/h`.
pub fn eval_reference_basis(dim: usize, variants: [Variant; 3], xi: [f64; 3], h: f64) -> BasisEval {
    let n = 3usize.pow(dim as u32);
    let mut vals = [[1.0; 3]; 3];
    let mut ders = [[0.0; 3]; 3];
    for a in 0..dim {
        let set = ShapeSet1D::new(variants[a]);
        vals[a] = set.values(xi[a]);
        ders[a] = set.derivatives(xi[a]).map(|d| d / h);
    }
    let mut values = vec![0.0; n];
    let mut gradients = vec![0.0; dim * n];
    let kmax = if dim == 3 { 3 } else { 1 };
    let mut idx = 0;
    for k in 0..kmax {
        for j in 0..3 {
            for i in 0..3 {
                let (vx, vy, vz) = (vals[0][i], vals[1][j], if dim == 3 { vals[2][k] } else { 1.0 });
                values[idx] = vx * vy * vz;
                gradients[idx] = ders[0][i] * vy * vz;
                gradients[n + idx] = vx * ders[1][j] * vz;
                if dim == 3 {
                    gradients[2 * n + idx] = vx * vy * ders[2][k];
                }
                idx += 1;
            }
        }
    }
    BasisEval { dim, values, gradients }
}

/// Basis of a mesh element at a reference point; variants are chosen from
/// the element position.
pub fn eval_tensor_basis(mesh: &StructuredMesh, e: usize, xi: [f64; 3]) -> Result<BasisEval> {
    mesh.check_element(e)?;
    for &x in xi.iter().take(mesh.dim()) {
        if !(-0.5 - 1e-12..=0.5 + 1e-12).contains(&x) {
            return Err(EitError::InvalidArgument(format!("reference point {xi:?} outside the element")));
        }
    }
    Ok(eval_reference_basis(mesh.dim(), element_variants(mesh, e), xi, mesh.h()))
}

/// Gauss-Legendre rule on `[-1/2, 1/2]`, tensorized to `dim` axes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points_1d: Vec<f64>,
    pub weights_1d: Vec<f64>,
}

impl QuadratureRule {
    /// Highest polynomial degree integrated exactly per axis.
    pub fn degree(&self) -> usize {
        2 * self.points_1d.len() - 1
    }

    /// Tensor points and weights over `dim` axes; unused axes are 0.
    pub fn tensor(&self, dim: usize) -> Vec<([f64; 3], f64)> {
        let q = self.points_1d.len();
        let count = q.pow(dim as u32);
        let mut out = Vec::with_capacity(count);
        for idx in 0..count {
            let mut p = [0.0; 3];
            let mut w = 1.0;
            let mut r = idx;
            for slot in p.iter_mut().take(dim) {
                let i = r % q;
                r /= q;
                *slot = self.points_1d[i];
                w *= self.weights_1d[i];
            }
            out.push((p, w));
        }
        out
    }

    /// Volume rule over the element.
    pub fn volume_points(&self) -> Vec<([f64; 3], f64)> {
        self.tensor(self.dim)
    }

    /// Face rule: `dim - 1` tangential coordinates with the normal axis fixed.
    pub fn face_points(&self, normal_axis: usize, xi_normal: f64) -> Vec<([f64; 3], f64)> {
        let tangential: Vec<usize> = (0..self.dim).filter(|&a| a != normal_axis).collect();
        self.tensor(self.dim - 1)
            .into_iter()
            .map(|(t, w)| {
                let mut p = [0.0; 3];
                p[normal_axis] = xi_normal;
                for (slot, &a) in tangential.iter().enumerate() {
                    p[a] = t[slot];
                }
                (p, w)
            })
            .collect()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to `[-1/2, 1/2]` with weights summing to 1.
pub fn make_quadrature(dim: usize, points_per_axis: usize) -> Result<QuadratureRule> {
    if dim != 2 && dim != 3 && dim != 1 {
        return Err(EitError::InvalidArgument(format!("quadrature dimension {dim}")));
    }
    if points_per_axis < 3 {
        return Err(EitError::InvalidArgument(format!(
            "need at least 3 Gauss points per axis for the degree-4 stiffness integrand, got {points_per_axis}"
        )));
    }
    let (x, w) = gauss_legendre(points_per_axis);
    Ok(QuadratureRule {
        dim,
        points_1d: x.into_iter().map(|p| 0.5 * p).collect(),
        weights_1d: w.into_iter().map(|v| 0.5 * v).collect(),
    })
}
