use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use eit_size::bounds::{
    empirical_constants, powerlaw_fit, theoretical_line_cem_uniform, theoretical_line_cosine,
    theoretical_line_uniform, BoundarySpectrum, BoundsLine, PowerLawFit,
};
use eit_size::forward::ModelKind;
use eit_size::{Excitation, ForwardModel, SolveRecord};

use crate::config::ExperimentConfig;
use crate::records::{fmt_f64, read_csv};
use crate::CliError;

/// Homogeneous solve summary, printed when the config has no inclusion.
#[derive(Debug, Clone, Serialize)]
pub struct HomogeneousRecord {
    pub test_id: String,
    pub model: ModelKind,
    pub dim: usize,
    pub n_e: usize,
    pub w0: f64,
    pub order: usize,
    pub half_bandwidth: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum SolveOutput {
    Pair(SolveRecord),
    Homogeneous(HomogeneousRecord),
}

pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<SolveOutput, CliError> {
    let mesh = cfg.build_mesh()?;
    let excitation = cfg.excitation(&mesh)?;
    let inclusion = cfg.inclusion(&mesh)?;
    let model = ForwardModel::new(mesh.clone(), excitation)?;
    match inclusion {
        Some(inc) => {
            let mut rec = model.run_pair(&inc)?;
            rec.seed = cfg.seed;
            Ok(SolveOutput::Pair(rec))
        }
        None => {
            let sol = model.homogeneous()?;
            Ok(SolveOutput::Homogeneous(HomogeneousRecord {
                test_id: model.excitation().test_id(),
                model: model.excitation().model(),
                dim: mesh.dim(),
                n_e: mesh.n_e(),
                w0: sol.power,
                order: sol.stats.order,
                half_bandwidth: sol.stats.half_bandwidth,
                residual: sol.stats.residual,
            }))
        }
    }
}

/// Runs the config's sweep on the current rayon pool.
pub fn cmd_sweep(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Vec<SolveRecord>, CliError> {
    let mesh = cfg.build_mesh()?;
    let plan = cfg.sweep_plan(&mesh, seed)?;
    Ok(eit_size::experiments::run_sweep(&plan)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineScenario {
    Uniform,
    Cosine { n: u32 },
    Cem { zeta: f64 },
}

impl LineScenario {
    pub fn name(&self) -> String {
        match self {
            LineScenario::Uniform => "uniform".into(),
            LineScenario::Cosine { n } => format!("cosine n={n}"),
            LineScenario::Cem { zeta } => format!("cem zeta={zeta}"),
        }
    }
}

pub fn cmd_lines(k: f64, scenario: LineScenario) -> Result<BoundsLine, CliError> {
    let line = match scenario {
        LineScenario::Uniform => theoretical_line_uniform(k),
        LineScenario::Cosine { n } => theoretical_line_cosine(k, n),
        LineScenario::Cem { zeta } => {
            if !(zeta > 0.0) || !zeta.is_finite() {
                return Err(CliError::Config(format!("zeta = {zeta} must be positive")));
            }
            // unit side: z = zeta * l
            theoretical_line_cem_uniform(k, 1.0, zeta)
        }
    };
    Ok(line?)
}

/// Coefficient table followed by gnuplot-ready segment endpoints.
pub fn lines_table(k: f64, scenario: LineScenario, line: &BoundsLine, gap_max: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# scenario: {}", scenario.name());
    let _ = writeln!(s, "# k: {}", fmt_f64(k));
    let _ = writeln!(s, "# regime: {:?}", line.regime);
    let _ = writeln!(s, "# exponent: {}", fmt_f64(line.exponent));
    let _ = writeln!(s, "# lower_coef: {}", fmt_f64(line.lower_coef));
    let _ = writeln!(s, "# upper_coef: {}", fmt_f64(line.upper_coef));
    let _ = writeln!(s, "# gap lower upper");
    let steps = 10;
    for i in 0..=steps {
        let g = gap_max * i as f64 / steps as f64;
        let _ = writeln!(s, "{} {} {}", fmt_f64(g), fmt_f64(line.lower(g)), fmt_f64(line.upper(g)));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub rows: usize,
    pub used: usize,
    pub k: f64,
    pub excitation: String,
    pub c1: f64,
    pub c2: f64,
    pub lower_coef: f64,
    pub upper_coef: f64,
    /// Absent with fewer than three records or a single gap value.
    pub fit: Option<PowerLawFit>,
}

/// Empirical constants and a power-law fit over the successful rows of
/// record files. Without `k`, every row must share one contrast.
pub fn cmd_report<P: AsRef<Path>>(paths: &[P], k: Option<f64>) -> Result<Report, CliError> {
    let mut all = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let file = std::fs::File::open(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        all.extend(read_csv(file, &p.display().to_string())?);
    }
    let rows = all.len();
    let ok: Vec<SolveRecord> = all.into_iter().filter(|r| r.is_ok()).collect();
    let (k, used) = match k {
        Some(k) => (k, ok.into_iter().filter(|r| r.k == k).collect::<Vec<_>>()),
        // mixed contrasts are rejected below
        None => match ok.first() {
            Some(r) => (r.k, ok),
            None => return Err(CliError::Config("no successful records".into())),
        },
    };
    let emp = empirical_constants(&used, k).map_err(|e| CliError::Config(e.to_string()))?;
    let line = emp.line().map_err(|e| CliError::Config(e.to_string()))?;
    let fit = powerlaw_fit(&used).ok();
    Ok(Report {
        rows,
        used: used.len(),
        k,
        excitation: emp.excitation.clone(),
        c1: emp.c1,
        c2: emp.c2,
        lower_coef: line.lower_coef,
        upper_coef: line.upper_coef,
        fit,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyReport {
    pub test_id: String,
    pub boundary_nodes: usize,
    pub frequency: f64,
}

pub fn cmd_freq(cfg: &ExperimentConfig) -> Result<FrequencyReport, CliError> {
    let mesh = cfg.build_mesh()?;
    let spec = match cfg.excitation(&mesh)? {
        Excitation::Neumann(spec) => spec,
        Excitation::Cem(_) => {
            return Err(CliError::Config("frequency is defined for neumann data only".into()));
        }
    };
    let spectrum = BoundarySpectrum::new(&mesh)?;
    Ok(FrequencyReport {
        test_id: spec.test_id(),
        boundary_nodes: spectrum.len(),
        frequency: spectrum.frequency(&spec)?,
    })
}
