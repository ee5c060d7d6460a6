//! Forward problems: boundary excitations, paired solves with and without an
//! inclusion, and the powers `W`, `W0` with the normalized gap.

use std::cell::OnceCell;
use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    add_inclusion, apply_stiffness, assemble_homogeneous, assemble_load, electrode_blocks, BoundaryFlux,
    CemSystem, StiffnessCache,
};
use crate::error::{EitError, Result};
use crate::hc_basis::{eval_tensor_basis, make_quadrature, QuadratureRule};
use crate::linsolve::{solve_cem, solve_neumann_with, SolveStats};
use crate::mesh::{boundary_faces, inclusion_face_distance, BoundaryFace, InclusionMask, StructuredMesh};

/// Relative agreement required between the boundary and energy forms of the power.
pub const POWER_TOL: f64 = 1e-9;

/// Gauss points per axis for volume integrals (exact for the stiffness).
const VOLUME_POINTS: usize = 3;
/// Gauss points per axis for boundary loads (cosine data is not polynomial).
const LOAD_POINTS: usize = 6;

/// Square (or segment, in 2-D) patch of boundary faces, in element indices
/// along the tangential axes taken in increasing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacePatch {
    pub start: [usize; 2],
    pub width: [usize; 2],
}

impl FacePatch {
    /// Patch of `width` elements centered on a face.
    pub fn centered(mesh: &StructuredMesh, width: usize) -> Self {
        let n = mesh.n_e();
        let w = width.clamp(1, n);
        let s = (n - w) / 2;
        if mesh.dim() == 2 {
            Self { start: [s, 0], width: [w, 1] }
        } else {
            Self { start: [s, s], width: [w, w] }
        }
    }

    /// Default patch width: a third of the face, rounded up.
    pub fn default_width(mesh: &StructuredMesh) -> usize {
        mesh.n_e().div_ceil(3)
    }

    fn check(&self, mesh: &StructuredMesh) -> Result<()> {
        let tang = mesh.dim() - 1;
        for a in 0..tang {
            if self.width[a] == 0 || self.start[a] + self.width[a] > mesh.n_e() {
                return Err(EitError::InvalidArgument(format!("patch {self:?} outside the face")));
            }
        }
        Ok(())
    }

    fn contains(&self, mesh: &StructuredMesh, face: &BoundaryFace) -> bool {
        let c = mesh.element_coords(face.element);
        face.tangential_axes(mesh.dim())
            .iter()
            .enumerate()
            .all(|(slot, &a)| c[a] >= self.start[slot] && c[a] < self.start[slot] + self.width[slot])
    }

    fn n_faces(&self, dim: usize) -> usize {
        self.width[..dim - 1].iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NeumannKind {
    /// Outward flux `-1` on the low face and `+1` on the high face of `axis`.
    Uniform { axis: usize },
    /// Inflow through a patch of the low face of `axis`, outflow through a
    /// patch of the high face; the outflow density is rescaled so the net
    /// current vanishes.
    TwoPatch {
        axis: usize,
        inflow: FacePatch,
        outflow: FacePatch,
    },
    /// `-cos(n pi x / l)` on the low face and `+cos(n pi x / l)` on the high
    /// face of the last axis, zero elsewhere.
    Cosine { n: u32 },
}

/// Neumann boundary data scaled by `amplitude`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannSpec {
    pub kind: NeumannKind,
    pub amplitude: f64,
}

impl NeumannSpec {
    pub fn uniform(axis: usize) -> Self {
        Self {
            kind: NeumannKind::Uniform { axis },
            amplitude: 1.0,
        }
    }

    pub fn cosine(n: u32) -> Self {
        Self {
            kind: NeumannKind::Cosine { n },
            amplitude: 1.0,
        }
    }

    /// Two centered patches of the default width on opposite faces of `axis`.
    pub fn two_patch_centered(mesh: &StructuredMesh, axis: usize) -> Self {
        let p = FacePatch::centered(mesh, FacePatch::default_width(mesh));
        Self {
            kind: NeumannKind::TwoPatch {
                axis,
                inflow: p,
                outflow: p,
            },
            amplitude: 1.0,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn validate(&self, mesh: &StructuredMesh) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(EitError::InvalidArgument("amplitude must be finite".into()));
        }
        match &self.kind {
            NeumannKind::Uniform { axis } => check_axis(mesh, *axis),
            NeumannKind::TwoPatch { axis, inflow, outflow } => {
                check_axis(mesh, *axis)?;
                inflow.check(mesh)?;
                outflow.check(mesh)
            }
            NeumannKind::Cosine { n } => {
                if *n > 2 {
                    log::warn!("cosine data with n = {n} is experimental");
                }
                Ok(())
            }
        }
    }

    /// Short label used in record files.
    pub fn test_id(&self) -> String {
        match &self.kind {
            NeumannKind::Uniform { .. } => "T1".into(),
            NeumannKind::TwoPatch { .. } => "T2".into(),
            NeumannKind::Cosine { n } => format!("cos{n}"),
        }
    }
}

fn check_axis(mesh: &StructuredMesh, axis: usize) -> Result<()> {
    if axis >= mesh.dim() {
        return Err(EitError::InvalidArgument(format!("axis {axis} out of range for dim {}", mesh.dim())));
    }
    Ok(())
}

impl BoundaryFlux for NeumannSpec {
    fn flux(&self, mesh: &StructuredMesh, face: &BoundaryFace, x: [f64; 3]) -> f64 {
        let a = self.amplitude;
        let s = face.sign as f64;
        match &self.kind {
            NeumannKind::Uniform { axis } => {
                if face.axis == *axis {
                    s * a
                } else {
                    0.0
                }
            }
            NeumannKind::TwoPatch { axis, inflow, outflow } => {
                if face.axis != *axis {
                    0.0
                } else if !face.is_high() && inflow.contains(mesh, face) {
                    -a
                } else if face.is_high() && outflow.contains(mesh, face) {
                    let d = mesh.dim();
                    a * inflow.n_faces(d) as f64 / outflow.n_faces(d) as f64
                } else {
                    0.0
                }
            }
            NeumannKind::Cosine { n } => {
                if face.axis == mesh.dim() - 1 {
                    s * a * (*n as f64 * PI * x[0] / mesh.side_length()).cos()
                } else {
                    0.0
                }
            }
        }
    }
}

/// One electrode: a set of boundary faces with a contact impedance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub faces: Vec<BoundaryFace>,
    /// Contact impedance `z` (resistance times area).
    pub impedance: f64,
}

impl Electrode {
    pub fn area(&self, mesh: &StructuredMesh) -> f64 {
        self.faces.len() as f64 * mesh.h().powi(mesh.dim() as i32 - 1)
    }
}

/// Electrodes with the injected current pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    electrodes: Vec<Electrode>,
    currents: Vec<f64>,
    label: String,
    /// Prescribed minimum electrode separation, kept as metadata.
    pub min_separation: Option<f64>,
    /// Prescribed impedance bounds, kept as metadata.
    pub impedance_bounds: Option<(f64, f64)>,
}

/// Boundary faces on one side of `axis` inside a patch.
pub fn patch_faces(mesh: &StructuredMesh, axis: usize, high: bool, patch: &FacePatch) -> Vec<BoundaryFace> {
    boundary_faces(mesh)
        .into_iter()
        .filter(|f| f.axis == axis && f.is_high() == high && patch.contains(mesh, f))
        .collect()
}

impl ElectrodeLayout {
    pub fn new(electrodes: Vec<Electrode>, currents: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            electrodes,
            currents,
            label: label.into(),
            min_separation: None,
            impedance_bounds: None,
        }
    }

    /// Two electrodes covering the opposite faces of `axis`; current `+1`
    /// enters through the low face.
    pub fn opposite_faces(mesh: &StructuredMesh, axis: usize, impedance: f64) -> Result<Self> {
        check_axis(mesh, axis)?;
        let full = FacePatch::centered(mesh, mesh.n_e());
        let lo = patch_faces(mesh, axis, false, &full);
        let hi = patch_faces(mesh, axis, true, &full);
        Ok(Self::new(
            vec![
                Electrode { faces: lo, impedance },
                Electrode { faces: hi, impedance },
            ],
            vec![1.0, -1.0],
            "T1",
        ))
    }

    /// Full low face of `axis` against a centered `width`-wide square on the
    /// high face.
    pub fn center_patch(mesh: &StructuredMesh, axis: usize, width: usize, impedance: f64) -> Result<Self> {
        check_axis(mesh, axis)?;
        let full = FacePatch::centered(mesh, mesh.n_e());
        let patch = FacePatch::centered(mesh, width);
        patch.check(mesh)?;
        Ok(Self::new(
            vec![
                Electrode {
                    faces: patch_faces(mesh, axis, false, &full),
                    impedance,
                },
                Electrode {
                    faces: patch_faces(mesh, axis, true, &patch),
                    impedance,
                },
            ],
            vec![1.0, -1.0],
            "T2",
        ))
    }

    /// Two `size`-wide squares on the high face of `axis`, symmetric about
    /// the face's middle line and `gap` elements apart along the first
    /// tangential axis.
    pub fn same_face_pair(
        mesh: &StructuredMesh,
        axis: usize,
        size: usize,
        gap: usize,
        impedance: f64,
    ) -> Result<Self> {
        check_axis(mesh, axis)?;
        let n = mesh.n_e();
        let span = 2 * size + gap;
        if size == 0 || span > n {
            return Err(EitError::InvalidElectrodes(format!(
                "two electrodes of {size} elements with gap {gap} do not fit on {n} elements"
            )));
        }
        let s0 = (n - span) / 2;
        let centered = FacePatch::centered(mesh, size);
        let mut a = centered;
        a.start[0] = s0;
        let mut b = centered;
        b.start[0] = s0 + size + gap;
        Ok(Self::new(
            vec![
                Electrode {
                    faces: patch_faces(mesh, axis, true, &a),
                    impedance,
                },
                Electrode {
                    faces: patch_faces(mesh, axis, true, &b),
                    impedance,
                },
            ],
            vec![1.0, -1.0],
            "T3",
        ))
    }

    pub fn with_currents(mut self, currents: Vec<f64>) -> Self {
        self.currents = currents;
        self
    }

    pub fn electrodes(&self) -> &[Electrode] {
        &self.electrodes
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Nondimensional impedances `z sigma / l` (background `sigma = 1`).
    pub fn zetas(&self, mesh: &StructuredMesh) -> Vec<f64> {
        self.electrodes.iter().map(|e| e.impedance / mesh.side_length()).collect()
    }

    pub fn validate(&self, mesh: &StructuredMesh) -> Result<()> {
        let l = self.electrodes.len();
        if l == 0 {
            return Err(EitError::InvalidElectrodes("at least one electrode is required".into()));
        }
        if self.currents.len() != l {
            return Err(EitError::InvalidElectrodes(format!(
                "{} currents for {l} electrodes",
                self.currents.len()
            )));
        }
        let total: f64 = self.currents.iter().sum();
        let scale: f64 = self.currents.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        if total.abs() > 1e-12 * scale || self.currents.iter().any(|c| !c.is_finite()) {
            return Err(EitError::InvalidElectrodes(format!("currents sum to {total:e}")));
        }
        let n = mesh.n_e();
        for (i, el) in self.electrodes.iter().enumerate() {
            if !(el.impedance > 0.0) || !el.impedance.is_finite() {
                return Err(EitError::InvalidElectrodes(format!(
                    "electrode {i} has impedance {}",
                    el.impedance
                )));
            }
            if el.faces.is_empty() {
                return Err(EitError::InvalidElectrodes(format!("electrode {i} has no faces")));
            }
            for f in &el.faces {
                mesh.check_element(f.element)?;
                let c = mesh.element_coords(f.element)[f.axis];
                let on_side = if f.is_high() { c == n - 1 } else { c == 0 };
                if f.axis >= mesh.dim() || !on_side {
                    return Err(EitError::InvalidElectrodes(format!(
                        "electrode {i}: face of element {} is not on the boundary",
                        f.element
                    )));
                }
            }
        }
        for i in 0..l {
            for j in (i + 1)..l {
                for fa in &self.electrodes[i].faces {
                    for fb in &self.electrodes[j].faces {
                        if fa.axis != fb.axis || fa.sign != fb.sign {
                            continue;
                        }
                        let ca = mesh.element_coords(fa.element);
                        let cb = mesh.element_coords(fb.element);
                        let dist = fa
                            .tangential_axes(mesh.dim())
                            .iter()
                            .map(|&a| ca[a].abs_diff(cb[a]))
                            .max()
                            .unwrap_or(0);
                        if dist < 2 {
                            return Err(EitError::InvalidElectrodes(format!(
                                "electrodes {i} and {j} overlap or touch"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Neumann,
    Cem,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Neumann => "neumann",
            ModelKind::Cem => "cem",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excitation {
    Neumann(NeumannSpec),
    Cem(ElectrodeLayout),
}

impl Excitation {
    pub fn model(&self) -> ModelKind {
        match self {
            Excitation::Neumann(_) => ModelKind::Neumann,
            Excitation::Cem(_) => ModelKind::Cem,
        }
    }

    pub fn test_id(&self) -> String {
        match self {
            Excitation::Neumann(s) => s.test_id(),
            Excitation::Cem(l) => l.label().to_string(),
        }
    }

    pub fn validate(&self, mesh: &StructuredMesh) -> Result<()> {
        match self {
            Excitation::Neumann(s) => s.validate(mesh),
            Excitation::Cem(l) => l.validate(mesh),
        }
    }
}

/// Potential parameters and power of one solve.
#[derive(Debug, Clone)]
pub struct PowerSolution {
    pub w: Vec<f64>,
    /// Electrode voltages (empty for the Neumann model).
    pub voltages: Vec<f64>,
    /// `int u phi` or `sum I_l U_l`.
    pub power: f64,
    /// The same power evaluated as the stored energy.
    pub energy: f64,
    pub stats: SolveStats,
}

/// One paired solve, flattened for record files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub test_id: String,
    pub model: ModelKind,
    pub dim: usize,
    pub n_e: usize,
    pub k: f64,
    pub d0_elems: usize,
    /// Element layers between the inclusion and the high face of the last axis.
    pub d03_elems: usize,
    pub n_elements: usize,
    pub shape_hash: u64,
    pub volume_fraction: f64,
    pub w0: f64,
    pub w: f64,
    pub gap: f64,
    pub seed: u64,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl SolveRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// `k > 1` implies `W < W0`, `k < 1` implies `W > W0`.
    pub fn obeys_sign_law(&self) -> bool {
        if self.k > 1.0 {
            self.w < self.w0
        } else if self.k < 1.0 {
            self.w > self.w0
        } else {
            true
        }
    }
}

/// Normalized power gap `|W - W0| / W0`.
pub fn power_gap(w0: f64, w: f64) -> f64 {
    (w - w0).abs() / w0
}

/// A mesh with its excitation, element matrices, and the lazily computed
/// homogeneous solution shared by every paired solve.
#[derive(Debug)]
pub struct ForwardModel {
    mesh: StructuredMesh,
    excitation: Excitation,
    quad: QuadratureRule,
    cache: StiffnessCache,
    load: Vec<f64>,
    homogeneous: OnceLock<Result<PowerSolution>>,
}

impl ForwardModel {
    pub fn new(mesh: StructuredMesh, excitation: Excitation) -> Result<Self> {
        excitation.validate(&mesh)?;
        let quad = make_quadrature(mesh.dim(), VOLUME_POINTS)?;
        let cache = StiffnessCache::new(&mesh, &quad);
        let load = match &excitation {
            Excitation::Neumann(spec) => assemble_load(&mesh, spec, &make_quadrature(mesh.dim(), LOAD_POINTS)?)?,
            Excitation::Cem(_) => Vec::new(),
        };
        Ok(Self {
            mesh,
            excitation,
            quad,
            cache,
            load,
            homogeneous: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn excitation(&self) -> &Excitation {
        &self.excitation
    }

    /// Neumann load vector (empty for the electrode model).
    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Solves with conductivity `1 + (k - 1) chi_D`.
    pub fn solve(&self, inclusion: Option<&InclusionMask>) -> Result<PowerSolution> {
        let mesh = &self.mesh;
        let mut k = assemble_homogeneous(mesh, &self.cache);
        if let Some(inc) = inclusion {
            add_inclusion(&mut k, mesh, &self.cache, inc);
        }
        let sol = match &self.excitation {
            Excitation::Neumann(_) => {
                // the residual check applies K to the returned w; keep it for the energy
                let kw = OnceCell::new();
                let apply = |w: &[f64]| {
                    let y = apply_stiffness(mesh, &self.cache, inclusion, w);
                    let _ = kw.set(y.clone());
                    y
                };
                let (w, stats) = solve_neumann_with(k, &self.load, apply)?;
                let power = dot(&w, &self.load);
                let energy = kw.get().map_or(0.0, |y| dot(&w, y));
                PowerSolution {
                    w,
                    voltages: Vec::new(),
                    power,
                    energy,
                    stats,
                }
            }
            Excitation::Cem(layout) => {
                let blocks = electrode_blocks(&mut k, mesh, layout, &self.quad);
                let sys = CemSystem {
                    k_ww: k,
                    k_wu: blocks.coupling,
                    k_uu: blocks.diag,
                    current: layout.currents().to_vec(),
                };
                let sol = solve_cem(&sys)?;
                let power = dot(&sys.current, &sol.voltages);
                let energy = cem_energy(&sys, &sol.w, &sol.voltages);
                PowerSolution {
                    w: sol.w,
                    voltages: sol.voltages,
                    power,
                    energy,
                    stats: sol.stats,
                }
            }
        };
        let scale = sol.power.abs().max(sol.energy.abs());
        if (sol.power - sol.energy).abs() > POWER_TOL * scale {
            return Err(EitError::PowerMismatch {
                boundary: sol.power,
                energy: sol.energy,
            });
        }
        Ok(sol)
    }

    /// Inclusion-free solution, computed once.
    pub fn homogeneous(&self) -> Result<&PowerSolution> {
        self.homogeneous
            .get_or_init(|| self.solve(None))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Runs the inclusion solve and pairs it with the cached homogeneous power.
    pub fn run_pair(&self, inclusion: &InclusionMask) -> Result<SolveRecord> {
        if inclusion.is_empty() {
            return Err(EitError::EmptyInclusion);
        }
        let w0 = self.homogeneous()?.power;
        let w = self.solve(Some(inclusion))?.power;
        let mut rec = self.blank_record(inclusion)?;
        rec.w0 = w0;
        rec.w = w;
        rec.gap = power_gap(w0, w);
        rec.status = "ok".into();
        Ok(rec)
    }

    /// Record carrying the inclusion descriptor with no powers yet.
    pub fn blank_record(&self, inclusion: &InclusionMask) -> Result<SolveRecord> {
        let mesh = &self.mesh;
        Ok(SolveRecord {
            test_id: self.excitation.test_id(),
            model: self.excitation.model(),
            dim: mesh.dim(),
            n_e: mesh.n_e(),
            k: inclusion.k(),
            d0_elems: inclusion.d0_elems(),
            d03_elems: inclusion_face_distance(mesh, inclusion.elements(), mesh.dim() - 1, true)?,
            n_elements: inclusion.len(),
            shape_hash: inclusion.shape_hash(),
            volume_fraction: inclusion.volume_fraction(mesh),
            w0: f64::NAN,
            w: f64::NAN,
            gap: f64::NAN,
            seed: 0,
            status: "pending".into(),
        })
    }

    /// Local minima of the homogeneous `|grad u0|` for cosine data.
    pub fn critical_points(&self) -> Result<Vec<CriticalPoint>> {
        let n = match &self.excitation {
            Excitation::Neumann(NeumannSpec {
                kind: NeumannKind::Cosine { n },
                ..
            }) => *n,
            _ => return Err(EitError::InvalidArgument("critical points need cosine Neumann data".into())),
        };
        if n == 0 {
            return Err(EitError::Degenerate("gradient of the n = 0 field never vanishes".into()));
        }
        let mesh = &self.mesh;
        let w = &self.homogeneous()?.w;
        let l = mesh.side_length();
        let step = mesh.h() / 2.0;
        let np = 2 * mesh.n_e() - 1;
        let last = mesh.dim() - 1;
        let mut g = vec![0.0; np * np];
        for iz in 0..np {
            for ix in 0..np {
                let mut x = [l / 2.0; 3];
                x[0] = (ix + 1) as f64 * step;
                x[last] = (iz + 1) as f64 * step;
                let gr = field_gradient(mesh, w, x)?;
                g[iz * np + ix] = gr.iter().map(|v| v * v).sum::<f64>().sqrt();
            }
        }
        let mut out = Vec::new();
        for iz in 1..np - 1 {
            for ix in 1..np - 1 {
                let v = g[iz * np + ix];
                let is_min = (-1i64..=1).all(|dz| {
                    (-1i64..=1).all(|dx| {
                        let j = ((iz as i64 + dz) as usize) * np + (ix as i64 + dx) as usize;
                        (dz == 0 && dx == 0) || v <= g[j]
                    })
                });
                if is_min {
                    out.push(CriticalPoint {
                        x: (ix + 1) as f64 * step,
                        z: (iz + 1) as f64 * step,
                        grad_norm: v,
                    });
                }
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `[w; U]^T A [w; U]` for the electrode block matrix `A`.
fn cem_energy(sys: &CemSystem, w: &[f64], u: &[f64]) -> f64 {
    let mut e = dot(w, &sys.k_ww.matvec(w));
    for (l, col) in sys.k_wu.iter().enumerate() {
        e -= 2.0 * u[l] * dot(col, w);
        e += sys.k_uu[l] * u[l] * u[l];
    }
    e
}

/// Sampled location of a small gradient, in the plane through the middle of
/// the axis orthogonal to both `x` and the loaded faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: f64,
    pub z: f64,
    pub grad_norm: f64,
}

/// Lines where the exact gradient vanishes for cosine data of order `n >= 1`:
/// `x = (l / n)(1/2 + i)` at mid-height `z = l / 2`.
pub fn cosine_critical_lines(n: u32, l: f64) -> Vec<(f64, f64)> {
    (0..n).map(|i| (l / n as f64 * (0.5 + i as f64), l / 2.0)).collect()
}

/// Closed-form inclusion-free power of cosine data on the unit-side cube or
/// square: `tanh(n pi / 2) / (n pi)`, and `1` for `n = 0`.
pub fn cosine_power_exact(n: u32) -> f64 {
    if n == 0 {
        1.0
    } else {
        let a = n as f64 * PI;
        (a / 2.0).tanh() / a
    }
}

/// Interpolated potential at a physical point.
pub fn field_value(mesh: &StructuredMesh, w: &[f64], x: [f64; 3]) -> Result<f64> {
    let (e, xi) = mesh.locate(x);
    let be = eval_tensor_basis(mesh, e, xi)?;
    Ok(mesh.element_params(e).iter().zip(&be.values).map(|(g, v)| w[*g] * v).sum())
}

/// Interpolated gradient at a physical point.
pub fn field_gradient(mesh: &StructuredMesh, w: &[f64], x: [f64; 3]) -> Result<[f64; 3]> {
    let (e, xi) = mesh.locate(x);
    let be = eval_tensor_basis(mesh, e, xi)?;
    let dofs = mesh.element_params(e);
    let mut g = [0.0; 3];
    for (a, slot) in g.iter_mut().enumerate().take(mesh.dim()) {
        *slot = dofs.iter().enumerate().map(|(j, &d)| w[d] * be.grad(a, j)).sum();
    }
    Ok(g)
}

/// Power of a Neumann problem, with or without inclusion.
pub fn power_neumann(
    mesh: &StructuredMesh,
    inclusion: Option<&InclusionMask>,
    spec: &NeumannSpec,
) -> Result<PowerSolution> {
    ForwardModel::new(mesh.clone(), Excitation::Neumann(spec.clone()))?.solve(inclusion)
}

/// Power of the electrode model, with or without inclusion.
pub fn power_cem(
    mesh: &StructuredMesh,
    inclusion: Option<&InclusionMask>,
    layout: &ElectrodeLayout,
) -> Result<PowerSolution> {
    ForwardModel::new(mesh.clone(), Excitation::Cem(layout.clone()))?.solve(inclusion)
}

/// Gradient minima of the homogeneous cosine solution.
pub fn critical_points(mesh: &StructuredMesh, spec: &NeumannSpec) -> Result<Vec<CriticalPoint>> {
    ForwardModel::new(mesh.clone(), Excitation::Neumann(spec.clone()))?.critical_points()
}
