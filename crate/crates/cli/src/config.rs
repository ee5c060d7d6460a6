//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use eit_size::experiments::{Generator, MeshSpec, SweepPlan};
use eit_size::forward::{patch_faces, Electrode, FacePatch, NeumannKind};
use eit_size::{ElectrodeLayout, Excitation, InclusionMask, NeumannSpec, StructuredMesh};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Neumann,
    Cem,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub mesh: MeshSpec,
    pub excitation: ExcitationConfig,
    /// Single inclusion for `solve`.
    #[serde(default)]
    pub inclusion: Option<InclusionConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Boundary data. `test` selects the scenario: `T1`, `T2`, `T3`, `cosine`
/// or `electrodes`; the other keys refine it.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub test: String,
    /// Normal axis of the driven faces (default: last axis).
    #[serde(default)]
    pub axis: Option<usize>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// Cosine mode number.
    #[serde(default)]
    pub n: Option<u32>,
    /// Neumann T2 inflow/outflow patches, centered by default.
    #[serde(default)]
    pub inflow: Option<FacePatch>,
    #[serde(default)]
    pub outflow: Option<FacePatch>,
    /// Electrode width in elements (CEM T2, T3).
    #[serde(default)]
    pub width: Option<usize>,
    /// Elements between the two T3 electrodes.
    #[serde(default)]
    pub gap: Option<usize>,
    /// Nondimensional contact impedance of every electrode.
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub currents: Option<Vec<f64>>,
    #[serde(default)]
    pub electrodes: Option<Vec<ElectrodeConfig>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrodeConfig {
    pub axis: usize,
    pub high: bool,
    pub patch: FacePatch,
    #[serde(default)]
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum InclusionShape {
    Elements(Vec<usize>),
    Block { origin: [usize; 3], side: usize },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    pub shape: InclusionShape,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub k_values: Vec<f64>,
    pub generator: Generator,
    #[serde(default = "full_volume")]
    pub volume_cap: f64,
    #[serde(default)]
    pub d03_min: Option<usize>,
}

fn full_volume() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_k(k: f64) -> Result<(), CliError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(config_err(format!("contrast k = {k} must be positive")));
    }
    if k == 1.0 {
        return Err(config_err("contrast k = 1 describes no inclusion"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn build_mesh(&self) -> Result<StructuredMesh, CliError> {
        self.mesh.build().map_err(|e| config_err(e.to_string()))
    }

    /// Checks every physical parameter and builds the excitation.
    pub fn excitation(&self, mesh: &StructuredMesh) -> Result<Excitation, CliError> {
        let ex = &self.excitation;
        let axis = ex.axis.unwrap_or(mesh.dim() - 1);
        let exc = match self.model {
            Model::Neumann => {
                for (key, set) in [
                    ("zeta", ex.zeta.is_some()),
                    ("currents", ex.currents.is_some()),
                    ("electrodes", ex.electrodes.is_some()),
                    ("gap", ex.gap.is_some()),
                    ("width", ex.width.is_some()),
                ] {
                    if set {
                        return Err(config_err(format!("`{key}` applies to the cem model only")));
                    }
                }
                let kind = match ex.test.as_str() {
                    "T1" => NeumannKind::Uniform { axis },
                    "T2" => {
                        let p = FacePatch::centered(mesh, FacePatch::default_width(mesh));
                        NeumannKind::TwoPatch {
                            axis,
                            inflow: ex.inflow.unwrap_or(p),
                            outflow: ex.outflow.unwrap_or(p),
                        }
                    }
                    "cosine" => NeumannKind::Cosine {
                        n: ex.n.ok_or_else(|| config_err("cosine data needs `n`"))?,
                    },
                    other => return Err(config_err(format!("unknown neumann test `{other}`"))),
                };
                let amplitude = ex.amplitude.unwrap_or(1.0);
                if !(amplitude > 0.0) || !amplitude.is_finite() {
                    return Err(config_err(format!("amplitude {amplitude} must be positive")));
                }
                Excitation::Neumann(NeumannSpec { kind, amplitude })
            }
            Model::Cem => {
                for (key, set) in [
                    ("n", ex.n.is_some()),
                    ("inflow", ex.inflow.is_some()),
                    ("outflow", ex.outflow.is_some()),
                    ("amplitude", ex.amplitude.is_some()),
                ] {
                    if set {
                        return Err(config_err(format!("`{key}` applies to the neumann model only")));
                    }
                }
                let zeta = ex.zeta.unwrap_or(0.2);
                if !(zeta > 0.0) || !zeta.is_finite() {
                    return Err(config_err(format!("zeta = {zeta} must be positive")));
                }
                let z = zeta * mesh.side_length();
                let layout = match ex.test.as_str() {
                    "T1" => ElectrodeLayout::opposite_faces(mesh, axis, z),
                    "T2" => ElectrodeLayout::center_patch(mesh, axis, ex.width.unwrap_or(FacePatch::default_width(mesh)), z),
                    "T3" => {
                        let width = ex.width.ok_or_else(|| config_err("T3 needs `width`"))?;
                        let gap = ex.gap.ok_or_else(|| config_err("T3 needs `gap`"))?;
                        ElectrodeLayout::same_face_pair(mesh, axis, width, gap, z)
                    }
                    "electrodes" => {
                        let list = ex
                            .electrodes
                            .as_ref()
                            .ok_or_else(|| config_err("`electrodes` list missing"))?;
                        let mut els = Vec::with_capacity(list.len());
                        for e in list {
                            let ez = e.zeta.unwrap_or(zeta);
                            if !(ez > 0.0) || !ez.is_finite() {
                                return Err(config_err(format!("zeta = {ez} must be positive")));
                            }
                            if e.axis >= mesh.dim() {
                                return Err(config_err(format!("electrode axis {} out of range", e.axis)));
                            }
                            els.push(Electrode {
                                faces: patch_faces(mesh, e.axis, e.high, &e.patch),
                                impedance: ez * mesh.side_length(),
                            });
                        }
                        let l = els.len();
                        let mut currents = vec![0.0; l];
                        if l >= 2 {
                            currents[0] = 1.0;
                            currents[l - 1] = -1.0;
                        }
                        Ok(ElectrodeLayout::new(els, currents, "custom"))
                    }
                    other => return Err(config_err(format!("unknown cem test `{other}`"))),
                }
                .map_err(|e| config_err(e.to_string()))?;
                let layout = match &ex.currents {
                    Some(c) => layout.with_currents(c.clone()),
                    None => layout,
                };
                Excitation::Cem(layout)
            }
        };
        exc.validate(mesh).map_err(|e| config_err(e.to_string()))?;
        Ok(exc)
    }

    pub fn inclusion(&self, mesh: &StructuredMesh) -> Result<Option<InclusionMask>, CliError> {
        let Some(inc) = &self.inclusion else {
            return Ok(None);
        };
        check_k(inc.k)?;
        let elements: Vec<usize> = match &inc.shape {
            InclusionShape::Elements(list) => list.clone(),
            InclusionShape::Block { origin, side } => {
                let dim = mesh.dim();
                if *side == 0 || (0..dim).any(|a| origin[a] + side > mesh.n_e()) {
                    return Err(config_err(format!("block {origin:?} of side {side} leaves the mesh")));
                }
                let mut out = Vec::new();
                let zs = if dim == 3 { *side } else { 1 };
                for z in 0..zs {
                    for y in 0..*side {
                        for x in 0..*side {
                            let mut c = [origin[0] + x, origin[1] + y, 0];
                            if dim == 3 {
                                c[2] = origin[2] + z;
                            }
                            out.push(mesh.element_index(c));
                        }
                    }
                }
                out
            }
        };
        InclusionMask::new(mesh, elements, inc.k)
            .map(Some)
            .map_err(|e| config_err(e.to_string()))
    }

    /// Sweep plan with the seed taken from `seed` when given.
    pub fn sweep_plan(&self, mesh: &StructuredMesh, seed: Option<u64>) -> Result<SweepPlan, CliError> {
        let sw = self
            .sweep
            .as_ref()
            .ok_or_else(|| config_err("config has no `sweep` section"))?;
        for &k in &sw.k_values {
            check_k(k)?;
        }
        let plan = SweepPlan {
            mesh: self.mesh,
            excitation: self.excitation(mesh)?,
            k_values: sw.k_values.clone(),
            generator: sw.generator.clone(),
            volume_cap: sw.volume_cap,
            d03_min: sw.d03_min,
            seed: seed.unwrap_or(self.seed),
        };
        plan.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(model: &str, excitation: &str) -> String {
        format!(r#"{{"model": "{model}", "mesh": {{"dim": 3, "n_e": 4}}, "excitation": {excitation}}}"#)
    }

    #[test]
    fn parses_minimal_neumann() {
        let cfg = ExperimentConfig::from_json(&base("neumann", r#"{"test": "T1"}"#)).unwrap();
        let mesh = cfg.build_mesh().unwrap();
        assert_eq!(cfg.excitation(&mesh).unwrap().test_id(), "T1");
        assert_eq!(cfg.mesh.side_l, 1.0);
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = ExperimentConfig::from_json(&base("neumann", r#"{"test": "T1", "colour": 3}"#)).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let text = r#"{"model": "cem", "mesh": {"dim": 3, "n_e": 4}, "excitation": {"test": "T1"}, "extra": 1}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn rejects_bad_physics() {
        for exc in [r#"{"test": "T1", "zeta": 0.0}"#, r#"{"test": "T1", "zeta": -1.0}"#] {
            let cfg = ExperimentConfig::from_json(&base("cem", exc)).unwrap();
            let mesh = cfg.build_mesh().unwrap();
            assert!(cfg.excitation(&mesh).is_err());
        }
        let overlap = r#"{"test": "electrodes", "electrodes": [
            {"axis": 2, "high": true, "patch": {"start": [0, 0], "width": [2, 2]}},
            {"axis": 2, "high": true, "patch": {"start": [1, 1], "width": [2, 2]}}]}"#;
        let cfg = ExperimentConfig::from_json(&base("cem", overlap)).unwrap();
        let mesh = cfg.build_mesh().unwrap();
        assert!(cfg.excitation(&mesh).is_err());
        for k in ["0.0", "-2.0", "1.0"] {
            let text = format!(
                r#"{{"model": "neumann", "mesh": {{"dim": 2, "n_e": 4}}, "excitation": {{"test": "T1"}},
                "inclusion": {{"shape": {{"elements": [5]}}, "k": {k}}}}}"#
            );
            let cfg = ExperimentConfig::from_json(&text).unwrap();
            let mesh = cfg.build_mesh().unwrap();
            assert!(cfg.inclusion(&mesh).is_err(), "k = {k}");
        }
    }

    #[test]
    fn block_inclusion() {
        let text = r#"{"model": "neumann", "mesh": {"dim": 3, "n_e": 6}, "excitation": {"test": "T1"},
            "inclusion": {"shape": {"block": {"origin": [2, 2, 2], "side": 2}}, "k": 10.0}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let mesh = cfg.build_mesh().unwrap();
        let inc = cfg.inclusion(&mesh).unwrap().unwrap();
        assert_eq!(inc.len(), 8);
        assert_eq!(inc.d0_elems(), 2);
    }
}
