//! Size-estimate lines relating the normalized power gap to the volume
//! fraction of an inclusion, and constants extracted from ensembles.

mod frequency;

pub use frequency::{frequency, BoundarySpectrum};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};
use crate::forward::SolveRecord;

/// Whether the inclusion conducts better (`k > 1`) or worse (`k < 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    MoreConducting,
    LessConducting,
}

impl Regime {
    pub fn of(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(EitError::InvalidArgument(format!("contrast k must be positive, got {k}")));
        }
        if k == 1.0 {
            return Err(EitError::InvalidArgument("contrast k = 1 has no bounds".into()));
        }
        Ok(if k > 1.0 {
            Regime::MoreConducting
        } else {
            Regime::LessConducting
        })
    }
}

/// Geometric hypotheses of the estimates. Only `m0` is checked; the other
/// regularity constants are carried along unevaluated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremContext {
    /// Minimum distance from the inclusion to the boundary (physical units).
    pub d0: f64,
    pub domain_measure: f64,
    /// Lower bound on `|D|` for the fat-inclusion form.
    pub m0: Option<f64>,
    pub r0: Option<f64>,
    pub big_m0: Option<f64>,
    pub delta1: Option<f64>,
    pub impedance_min: Option<f64>,
    pub impedance_max: Option<f64>,
}

impl TheoremContext {
    pub fn new(d0: f64, domain_measure: f64) -> Result<Self> {
        if !(d0 >= 0.0) || !(domain_measure > 0.0) {
            return Err(EitError::InvalidArgument(format!(
                "need d0 >= 0 and |Omega| > 0, got {d0} and {domain_measure}"
            )));
        }
        Ok(Self {
            d0,
            domain_measure,
            ..Self::default()
        })
    }

    pub fn with_m0(mut self, m0: f64) -> Result<Self> {
        if !(m0 > 0.0) {
            return Err(EitError::InvalidArgument(format!("m0 must be positive, got {m0}")));
        }
        self.m0 = Some(m0);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LineSource {
    Uniform,
    Cosine { n: u32 },
    CemUniform { zeta: f64 },
    Empirical,
}

/// `lower * gap <= |D|/|Omega| <= upper * gap^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsLine {
    pub lower_coef: f64,
    pub upper_coef: f64,
    pub exponent: f64,
    pub regime: Regime,
    pub source: LineSource,
}

impl BoundsLine {
    pub fn lower(&self, gap: f64) -> f64 {
        self.lower_coef * gap
    }

    pub fn upper(&self, gap: f64) -> f64 {
        self.upper_coef * gap.powf(self.exponent)
    }
}

/// Coefficients with unit constants: `(1/(k-1), k/(k-1))` for `k > 1` and
/// `(k/(1-k), 1/(1-k))` for `k < 1`.
fn unit_factors(k: f64) -> Result<(Regime, f64, f64)> {
    let regime = Regime::of(k)?;
    Ok(match regime {
        Regime::MoreConducting => (regime, 1.0 / (k - 1.0), k / (k - 1.0)),
        Regime::LessConducting => (regime, k / (1.0 - k), 1.0 / (1.0 - k)),
    })
}

/// Line for uniform opposite-face current.
pub fn theoretical_line_uniform(k: f64) -> Result<BoundsLine> {
    let (regime, lo, hi) = unit_factors(k)?;
    Ok(BoundsLine {
        lower_coef: lo,
        upper_coef: hi,
        exponent: 1.0,
        regime,
        source: LineSource::Uniform,
    })
}

/// `sinh x - sin x` by its series, free of cancellation for small `x`.
fn sinh_minus_sin(x: f64) -> f64 {
    let x2 = x * x;
    let x4 = x2 * x2;
    // 2 * sum x^(4j+3) / (4j+3)!
    let mut term = x * x2 / 6.0;
    let mut sum = 0.0;
    for j in 0..20u32 {
        sum += term;
        let a = (4 * j + 4) as f64;
        term *= x4 / (a * (a + 1.0) * (a + 2.0) * (a + 3.0));
    }
    2.0 * sum
}

/// `(10 / (n pi cosh^2(n pi / 2))) (sinh(n pi / 20) - sin(n pi / 20))`, for `n` in 1..=2.
pub fn cosine_constant(n: u32) -> Result<f64> {
    if !(1..=2).contains(&n) {
        return Err(EitError::InvalidArgument(format!("cosine constant defined for n = 1, 2 only, got {n}")));
    }
    let a = n as f64 * PI;
    let c = (a / 2.0).cosh();
    Ok(10.0 / (a * c * c) * sinh_minus_sin(a / 20.0))
}

/// Line for cosine data of order `n`.
pub fn theoretical_line_cosine(k: f64, n: u32) -> Result<BoundsLine> {
    let cn = cosine_constant(n)?;
    let (regime, lo, hi) = unit_factors(k)?;
    let a = n as f64 * PI;
    let t = (a / 2.0).tanh() / a;
    Ok(BoundsLine {
        lower_coef: lo * t,
        upper_coef: hi * t / cn,
        exponent: 1.0,
        regime,
        source: LineSource::Cosine { n },
    })
}

/// Uniform line scaled by `(l + 2 z) / l` for full-face electrodes with
/// contact impedance `z` on a body of side `l`.
pub fn theoretical_line_cem_uniform(k: f64, l: f64, z: f64) -> Result<BoundsLine> {
    if !(l > 0.0) || !(z >= 0.0) || !z.is_finite() {
        return Err(EitError::InvalidArgument(format!("need l > 0 and z >= 0, got l = {l}, z = {z}")));
    }
    let base = theoretical_line_uniform(k)?;
    let f = (l + 2.0 * z) / l;
    Ok(BoundsLine {
        lower_coef: base.lower_coef * f,
        upper_coef: base.upper_coef * f,
        source: LineSource::CemUniform { zeta: z / l },
        ..base
    })
}

/// Outcome of testing one record against a line. Margins are relative:
/// `v / lower - 1` and `1 - v / upper`, nonnegative when inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsCheck {
    pub passed: bool,
    pub lower_margin: f64,
    pub upper_margin: f64,
    /// `false` when a fat-inclusion floor is set and `|D|` falls below it.
    pub hypothesis_ok: bool,
}

fn ratio_margin(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den - 1.0
    }
}

/// Checks `lower * gap <= v <= upper * gap^exponent` exactly.
pub fn check_bounds(record: &SolveRecord, line: &BoundsLine, context: &TheoremContext) -> Result<BoundsCheck> {
    check_bounds_with_slack(record, line, context, 0.0)
}

/// As [`check_bounds`], accepting relative violations up to `slack`.
pub fn check_bounds_with_slack(
    record: &SolveRecord,
    line: &BoundsLine,
    context: &TheoremContext,
    slack: f64,
) -> Result<BoundsCheck> {
    let regime = Regime::of(record.k)?;
    if regime != line.regime {
        return Err(EitError::RegimeMismatch(format!(
            "record with k = {} against a {:?} line",
            record.k, line.regime
        )));
    }
    let v = record.volume_fraction;
    let lower_margin = ratio_margin(v, line.lower(record.gap));
    let upper_margin = -ratio_margin(v, line.upper(record.gap));
    let hypothesis_ok = context.m0.is_none_or(|m0| v * context.domain_measure >= m0);
    Ok(BoundsCheck {
        passed: lower_margin >= -slack && upper_margin >= -slack,
        lower_margin,
        upper_margin,
        hypothesis_ok,
    })
}

/// Constants `C1`, `C2` such that every record of an ensemble lies between
/// the lines `C1 * lower` and `C2 * upper` of the unit-constant form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConstants {
    pub c1: f64,
    pub c2: f64,
    pub samples: usize,
    pub k: f64,
    pub excitation: String,
}

impl EmpiricalConstants {
    pub fn line(&self) -> Result<BoundsLine> {
        let (regime, lo, hi) = unit_factors(self.k)?;
        Ok(BoundsLine {
            lower_coef: self.c1 * lo,
            upper_coef: self.c2 * hi,
            exponent: 1.0,
            regime,
            source: LineSource::Empirical,
        })
    }
}

pub fn empirical_constants(records: &[SolveRecord], k: f64) -> Result<EmpiricalConstants> {
    let (regime, lo, hi) = unit_factors(k)?;
    let first = records
        .first()
        .ok_or_else(|| EitError::InvalidArgument("no records".into()))?;
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0f64;
    for r in records {
        if (r.k - k).abs() > 1e-12 * k {
            let other = Regime::of(r.k)?;
            return Err(EitError::RegimeMismatch(format!(
                "record with k = {} ({other:?}) in a k = {k} ({regime:?}) ensemble",
                r.k
            )));
        }
        if r.test_id != first.test_id || r.model != first.model {
            return Err(EitError::InvalidArgument(format!(
                "mixed excitations {} and {}",
                first.test_id, r.test_id
            )));
        }
        if !(r.gap > 0.0) {
            return Err(EitError::Degenerate(format!("record with gap {}", r.gap)));
        }
        let q = r.volume_fraction / r.gap;
        c1 = c1.min(q / lo);
        c2 = c2.max(q / hi);
    }
    Ok(EmpiricalConstants {
        c1,
        c2,
        samples: records.len(),
        k,
        excitation: first.test_id.clone(),
    })
}

/// Least-squares fit of `log v = log c + exponent * log gap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub c: f64,
    pub exponent: f64,
    pub samples: usize,
}

pub fn powerlaw_fit(records: &[SolveRecord]) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.gap, r.volume_fraction)).collect();
    powerlaw_fit_points(&pts)
}

pub fn powerlaw_fit_points(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(EitError::InvalidArgument(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(g, v)| !(g > 0.0) || !(v > 0.0)) {
        return Err(EitError::InvalidArgument("gaps and volume fractions must be positive".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 * n {
        return Err(EitError::Degenerate("all gaps are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    Ok(PowerLawFit {
        c: (my - exponent * mx).exp(),
        exponent,
        samples: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ModelKind;

    fn record(k: f64, gap: f64, v: f64) -> SolveRecord {
        SolveRecord {
            test_id: "T1".into(),
            model: ModelKind::Neumann,
            dim: 3,
            n_e: 10,
            k,
            d0_elems: 2,
            d03_elems: 2,
            n_elements: 1,
            shape_hash: 0,
            volume_fraction: v,
            w0: 1.0,
            w: if k > 1.0 { 1.0 - gap } else { 1.0 + gap },
            gap,
            seed: 0,
            status: "ok".into(),
        }
    }

    #[test]
    fn uniform_lines() {
        for k in [10.0, 0.1] {
            let l = theoretical_line_uniform(k).unwrap();
            assert!((l.lower_coef - 1.0 / 9.0).abs() < 1e-15);
            assert!((l.upper_coef - 10.0 / 9.0).abs() < 1e-14);
        }
        let l = theoretical_line_uniform(2.0).unwrap();
        assert_eq!((l.lower_coef, l.upper_coef), (1.0, 2.0));
        assert!(theoretical_line_uniform(1.0).is_err());
        assert!(theoretical_line_uniform(0.0).is_err());
        assert!(theoretical_line_uniform(-2.0).is_err());
    }

    #[test]
    fn cosine_lines() {
        let l = theoretical_line_cosine(10.0, 1).unwrap();
        assert!((l.lower_coef - (PI / 2.0).tanh() / (9.0 * PI)).abs() < 1e-15);
        let l = theoretical_line_cosine(0.1, 2).unwrap();
        let expect = 0.1 * PI.tanh() / (2.0 * PI * 0.9);
        assert!((l.lower_coef - expect).abs() < 1e-15);
        assert!(theoretical_line_cosine(10.0, 0).is_err());
        assert!(theoretical_line_cosine(10.0, 3).is_err());
        // near-vertical upper line
        let c1 = cosine_constant(1).unwrap();
        assert!(c1 > 0.0 && c1 < 1e-2, "{c1}");
        let l = theoretical_line_cosine(10.0, 1).unwrap();
        assert!(l.upper_coef > 100.0 * 10.0 / 9.0);
    }

    #[test]
    fn cosine_constant_series_matches_direct_formula() {
        for n in [1u32, 2] {
            let x = n as f64 * PI / 20.0;
            let direct = x.sinh() - x.sin();
            let a = n as f64 * PI;
            let c = 10.0 / (a * (a / 2.0).cosh().powi(2)) * direct;
            let s = cosine_constant(n).unwrap();
            assert!((s - c).abs() <= 1e-12 * s, "{s} vs {c}");
        }
    }

    #[test]
    fn cem_lines() {
        let l = theoretical_line_cem_uniform(10.0, 1.0, 0.2).unwrap();
        assert!((l.lower_coef - 1.4 / 9.0).abs() < 1e-15);
        assert!((l.upper_coef - 14.0 / 9.0).abs() < 1e-14);
        let l01 = theoretical_line_cem_uniform(0.1, 1.0, 0.2).unwrap();
        assert!((l01.lower_coef - l.lower_coef).abs() < 1e-15);
        assert!((l01.upper_coef - l.upper_coef).abs() < 1e-14);
        let z0 = theoretical_line_cem_uniform(10.0, 1.0, 0.0).unwrap();
        let u = theoretical_line_uniform(10.0).unwrap();
        assert_eq!((z0.lower_coef, z0.upper_coef), (u.lower_coef, u.upper_coef));
        assert!(theoretical_line_cem_uniform(10.0, 0.0, 0.2).is_err());
    }

    #[test]
    fn check_bounds_examples() {
        let ctx = TheoremContext::new(0.1, 1.0).unwrap();
        let line = theoretical_line_uniform(10.0).unwrap();
        let inside = record(10.0, 0.05, 0.02);
        assert!(check_bounds(&inside, &line, &ctx).unwrap().passed);
        let zero = record(10.0, 0.0, 0.0);
        let c = check_bounds(&zero, &line, &ctx).unwrap();
        assert!(c.passed && c.lower_margin == 0.0 && c.upper_margin == 0.0);
        let above = record(10.0, 0.01, 0.5);
        assert!(!check_bounds(&above, &line, &ctx).unwrap().passed);
        let wrong = record(0.1, 0.05, 0.02);
        assert!(matches!(check_bounds(&wrong, &line, &ctx), Err(EitError::RegimeMismatch(_))));
        let fat = ctx.clone().with_m0(0.05).unwrap();
        assert!(!check_bounds(&inside, &line, &fat).unwrap().hypothesis_ok);
    }

    #[test]
    fn slack_widens_acceptance() {
        let ctx = TheoremContext::new(0.1, 1.0).unwrap();
        let line = theoretical_line_uniform(10.0).unwrap();
        let r = record(10.0, 0.09, 0.103);
        assert!(!check_bounds(&r, &line, &ctx).unwrap().passed);
        assert!(check_bounds_with_slack(&r, &line, &ctx, 0.05).unwrap().passed);
    }

    #[test]
    fn single_record_constants_pass_through_point() {
        let ctx = TheoremContext::new(0.1, 1.0).unwrap();
        for k in [10.0, 0.1] {
            let r = record(k, 0.03, 0.01);
            let c = empirical_constants(std::slice::from_ref(&r), k).unwrap();
            let line = c.line().unwrap();
            assert!((line.lower(r.gap) - r.volume_fraction).abs() < 1e-15);
            assert!((line.upper(r.gap) - r.volume_fraction).abs() < 1e-15);
            let chk = check_bounds(&r, &line, &ctx).unwrap();
            assert!(chk.lower_margin.abs() < 1e-12 && chk.upper_margin.abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_constants_contain_ensemble_and_scale() {
        let ctx = TheoremContext::new(0.1, 1.0).unwrap();
        let recs: Vec<SolveRecord> = [(0.01, 0.002), (0.05, 0.02), (0.2, 0.03), (0.07, 0.01)]
            .iter()
            .map(|&(g, v)| record(10.0, g, v))
            .collect();
        let c = empirical_constants(&recs, 10.0).unwrap();
        let line = c.line().unwrap();
        assert!(line.lower_coef <= line.upper_coef);
        for r in &recs {
            let chk = check_bounds(r, &line, &ctx).unwrap();
            assert!(chk.lower_margin >= -1e-12 && chk.upper_margin >= -1e-12);
        }
        let doubled: Vec<SolveRecord> = recs.iter().map(|r| record(10.0, 2.0 * r.gap, r.volume_fraction)).collect();
        let d = empirical_constants(&doubled, 10.0).unwrap();
        assert!((d.c1 - c.c1 / 2.0).abs() < 1e-15 && (d.c2 - c.c2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_constants_errors() {
        assert!(empirical_constants(&[], 10.0).is_err());
        assert!(empirical_constants(&[record(10.0, 0.0, 0.01)], 10.0).is_err());
        let mixed = [record(10.0, 0.1, 0.01), record(0.1, 0.1, 0.01)];
        assert!(matches!(empirical_constants(&mixed, 10.0), Err(EitError::RegimeMismatch(_))));
    }

    #[test]
    fn powerlaw_examples() {
        let lin: Vec<(f64, f64)> = [0.01, 0.03, 0.1, 0.4].iter().map(|&g| (g, g)).collect();
        let f = powerlaw_fit_points(&lin).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-9 && (f.c - 1.0).abs() < 1e-9);
        let sq: Vec<(f64, f64)> = [0.01f64, 0.03, 0.1, 0.4].iter().map(|&g| (g, g.sqrt())).collect();
        assert!((powerlaw_fit_points(&sq).unwrap().exponent - 0.5).abs() < 1e-9);
        assert!(powerlaw_fit_points(&[(0.1, 0.1), (0.1, 0.2), (0.1, 0.3)]).is_err());
        assert!(powerlaw_fit_points(&[(0.1, 0.1), (0.2, 0.2)]).is_err());
    }
}
