//! Inclusion generators and the batch runner.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};
use crate::forward::{Excitation, ForwardModel, SolveRecord};
use crate::mesh::{build_mesh, inclusion_face_distance, InclusionMask, StructuredMesh};

/// Largest share of failed solves tolerated by a sweep.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Element set of an axis-aligned block with lower corner `origin`.
fn block(mesh: &StructuredMesh, origin: [usize; 3], s: usize) -> Vec<usize> {
    let zs = if mesh.dim() == 3 { s } else { 1 };
    let mut out = Vec::with_capacity(s.pow(mesh.dim() as u32));
    for k in 0..zs {
        for j in 0..s {
            for i in 0..s {
                out.push(mesh.element_index([origin[0] + i, origin[1] + j, origin[2] + k]));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Visits every lower corner in `ranges` per axis (x fastest).
fn for_each_origin(dim: usize, ranges: [&[usize]; 3], mut f: impl FnMut([usize; 3])) {
    let zs: &[usize] = if dim == 3 { ranges[2] } else { &[0] };
    for &z in zs {
        for &y in ranges[1] {
            for &x in ranges[0] {
                f([x, y, z]);
            }
        }
    }
}

/// All `s^dim` blocks, `s` in `sides`, with at least `d0_min` element layers
/// to the boundary. Ordered by side, then position with x fastest.
pub fn gen_blocks(mesh: &StructuredMesh, sides: std::ops::RangeInclusive<usize>, d0_min: usize) -> Vec<Vec<usize>> {
    let n = mesh.n_e();
    let mut out = Vec::new();
    for s in sides {
        if s == 0 || s + 2 * d0_min > n {
            continue;
        }
        let pos: Vec<usize> = (d0_min..=n - d0_min - s).collect();
        for_each_origin(mesh.dim(), [&pos, &pos, &pos], |o| out.push(block(mesh, o, s)));
    }
    out
}

/// Blocks placed as centrally as the grid allows: one block when `n_e - s`
/// is even, otherwise every block whose offset per axis rounds the center
/// down or up (`2^dim` blocks).
pub fn gen_centered_blocks(mesh: &StructuredMesh, sides: std::ops::RangeInclusive<usize>) -> Vec<Vec<usize>> {
    let n = mesh.n_e();
    let mut out = Vec::new();
    for s in sides {
        if s == 0 || s > n {
            continue;
        }
        let lo = (n - s) / 2;
        let pos: Vec<usize> = if (n - s) % 2 == 0 { vec![lo] } else { vec![lo, lo + 1] };
        for_each_origin(mesh.dim(), [&pos, &pos, &pos], |o| out.push(block(mesh, o, s)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConnectedMode {
    /// Every face-connected set.
    Exhaustive,
    /// Up to `count` distinct sets from random face-adjacent growth. The
    /// growth is not uniform over shapes: compact sets are favoured.
    Sampled { count: usize },
}

/// Whether an element lies in the low octant (first half of every axis,
/// middle layer included for odd `n_e`).
pub fn in_low_octant(mesh: &StructuredMesh, e: usize) -> bool {
    let half = mesh.n_e().div_ceil(2);
    let c = mesh.element_coords(e);
    (0..mesh.dim()).all(|a| c[a] < half)
}

/// Face-connected sets of `n_i` elements, each at least `d0_min` layers from
/// the boundary. With `octant`, only sets touching the low octant are kept
/// (exhaustive) or grown from a seed in it (sampled). Sets are sorted
/// element lists, deduplicated as exact sets.
pub fn gen_connected(
    mesh: &StructuredMesh,
    n_i: usize,
    d0_min: usize,
    mode: ConnectedMode,
    seed: u64,
    octant: bool,
) -> Result<Vec<Vec<usize>>> {
    if n_i == 0 {
        return Err(EitError::InvalidArgument("inclusions need at least one element".into()));
    }
    let allowed: Vec<bool> = (0..mesh.n_elements())
        .map(|e| mesh.layers_to_boundary(e) >= d0_min)
        .collect();
    match mode {
        ConnectedMode::Exhaustive => {
            let mut out = Vec::new();
            enumerate_connected(mesh, &allowed, n_i, |set| {
                if !octant || set.iter().any(|&e| in_low_octant(mesh, e)) {
                    let mut s = set.to_vec();
                    s.sort_unstable();
                    out.push(s);
                }
            });
            out.sort();
            Ok(out)
        }
        ConnectedMode::Sampled { count } => Ok(sample_connected(mesh, &allowed, n_i, count, seed, octant)),
    }
}

/// Redelmeier-style enumeration of the connected induced subsets of the
/// allowed elements; each set is reported once, rooted at its smallest element.
fn enumerate_connected(mesh: &StructuredMesh, allowed: &[bool], n_i: usize, mut emit: impl FnMut(&[usize])) {
    let mut seen = vec![false; allowed.len()];
    let mut set = Vec::with_capacity(n_i);
    for root in 0..allowed.len() {
        if !allowed[root] {
            continue;
        }
        seen[root] = true;
        let untried = vec![root];
        grow(mesh, allowed, root, n_i, untried, &mut seen, &mut set, &mut emit);
        seen[root] = false;
    }
}

#[allow(clippy::too_many_arguments)]
fn grow(
    mesh: &StructuredMesh,
    allowed: &[bool],
    root: usize,
    n_i: usize,
    mut untried: Vec<usize>,
    seen: &mut [bool],
    set: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize]),
) {
    while let Some(v) = untried.pop() {
        set.push(v);
        if set.len() == n_i {
            emit(set);
        } else {
            let fresh: Vec<usize> = mesh
                .neighbors(v)
                .into_iter()
                .filter(|&u| u > root && allowed[u] && !seen[u])
                .collect();
            for &u in &fresh {
                seen[u] = true;
            }
            let mut next = untried.clone();
            next.extend_from_slice(&fresh);
            grow(mesh, allowed, root, n_i, next, seen, set, emit);
            for &u in &fresh {
                seen[u] = false;
            }
        }
        set.pop();
    }
}

fn sample_connected(
    mesh: &StructuredMesh,
    allowed: &[bool],
    n_i: usize,
    count: usize,
    seed: u64,
    octant: bool,
) -> Vec<Vec<usize>> {
    let seeds: Vec<usize> = (0..allowed.len())
        .filter(|&e| allowed[e] && (!octant || in_low_octant(mesh, e)))
        .collect();
    let mut out = Vec::new();
    if seeds.is_empty() || count == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: HashSet<Vec<usize>> = HashSet::new();
    let max_attempts = count.saturating_mul(50).max(1000);
    let mut attempts = 0;
    while out.len() < count && attempts < max_attempts {
        attempts += 1;
        let mut set = vec![seeds[rng.random_range(0..seeds.len())]];
        let mut frontier: Vec<usize> = Vec::new();
        let push_frontier = |frontier: &mut Vec<usize>, set: &[usize], v: usize| {
            for u in mesh.neighbors(v) {
                if allowed[u] && !set.contains(&u) && !frontier.contains(&u) {
                    frontier.push(u);
                }
            }
        };
        push_frontier(&mut frontier, &set, set[0]);
        while set.len() < n_i && !frontier.is_empty() {
            let v = frontier.swap_remove(rng.random_range(0..frontier.len()));
            set.push(v);
            push_frontier(&mut frontier, &set, v);
        }
        if set.len() < n_i {
            continue;
        }
        set.sort_unstable();
        if found.insert(set.clone()) {
            out.push(set);
        }
    }
    if out.len() < count {
        log::warn!(
            "found {} of {count} requested distinct {n_i}-element sets after {attempts} attempts",
            out.len()
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub dim: usize,
    pub n_e: usize,
    #[serde(default = "unit_side")]
    pub side_l: f64,
}

fn unit_side() -> f64 {
    1.0
}

impl MeshSpec {
    pub fn build(&self) -> Result<StructuredMesh> {
        build_mesh(self.dim, self.n_e, self.side_l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Every block of side `min..=max` at distance `d0_min` or more.
    Blocks { min: usize, max: usize, d0_min: usize },
    /// Centered blocks of side `min..=max`.
    CenteredBlocks { min: usize, max: usize },
    /// Face-connected sets of `min..=max` elements; sizes up to
    /// `exhaustive_max` are enumerated, larger ones sampled.
    Connected {
        min: usize,
        max: usize,
        d0_min: usize,
        exhaustive_max: usize,
        samples: usize,
        #[serde(default)]
        octant: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub mesh: MeshSpec,
    pub excitation: Excitation,
    pub k_values: Vec<f64>,
    pub generator: Generator,
    /// Largest admissible `|D| / |Omega|`.
    pub volume_cap: f64,
    /// Minimum element layers to the high face of the last axis.
    pub d03_min: Option<usize>,
    pub seed: u64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.volume_cap > 0.0 && self.volume_cap <= 1.0) {
            return Err(EitError::InvalidArgument(format!("volume cap {} outside (0, 1]", self.volume_cap)));
        }
        let (lo, hi) = match self.generator {
            Generator::Blocks { min, max, .. } | Generator::CenteredBlocks { min, max } => (min, max),
            Generator::Connected { min, max, .. } => (min, max),
        };
        if lo == 0 || lo > hi {
            return Err(EitError::InvalidArgument(format!("empty size range {lo}..={hi}")));
        }
        for &k in &self.k_values {
            if !(k > 0.0) || !k.is_finite() || k == 1.0 {
                return Err(EitError::InvalidArgument(format!("contrast k = {k} not allowed")));
            }
        }
        Ok(())
    }

    /// Element sets of the plan after the volume cap and the `d03` filter.
    pub fn generate(&self, mesh: &StructuredMesh) -> Result<Vec<Vec<usize>>> {
        let sets = match self.generator {
            Generator::Blocks { min, max, d0_min } => gen_blocks(mesh, min..=max, d0_min),
            Generator::CenteredBlocks { min, max } => gen_centered_blocks(mesh, min..=max),
            Generator::Connected {
                min,
                max,
                d0_min,
                exhaustive_max,
                samples,
                octant,
            } => {
                let mut all = Vec::new();
                for n_i in min..=max {
                    let mode = if n_i <= exhaustive_max {
                        ConnectedMode::Exhaustive
                    } else {
                        ConnectedMode::Sampled { count: samples }
                    };
                    let seed = self.seed.wrapping_add(n_i as u64);
                    let sets = gen_connected(mesh, n_i, d0_min, mode, seed, octant)?;
                    log::info!("{} sets of {n_i} elements ({mode:?})", sets.len());
                    all.extend(sets);
                }
                all
            }
        };
        let cell = mesh.element_measure() / mesh.domain_measure();
        let mut out = Vec::with_capacity(sets.len());
        for s in sets {
            if s.len() as f64 * cell > self.volume_cap * (1.0 + 1e-12) {
                continue;
            }
            if let Some(d) = self.d03_min {
                if inclusion_face_distance(mesh, &s, mesh.dim() - 1, true)? < d {
                    continue;
                }
            }
            out.push(s);
        }
        Ok(out)
    }
}

/// Runs every (inclusion, k) pair of a plan on the current rayon pool.
/// Output order follows generation order, then `k_values` order.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SolveRecord>> {
    plan.validate()?;
    let mesh = plan.mesh.build()?;
    let sets = plan.generate(&mesh)?;
    let jobs: Vec<(usize, f64)> = (0..sets.len())
        .flat_map(|i| plan.k_values.iter().map(move |&k| (i, k)))
        .collect();
    if jobs.is_empty() {
        return Ok(Vec::new());
    }
    let model = ForwardModel::new(mesh.clone(), plan.excitation.clone())?;
    model.homogeneous()?;
    log::info!("sweep: {} inclusions x {} contrasts", sets.len(), plan.k_values.len());
    let records: Vec<SolveRecord> = jobs
        .par_iter()
        .map(|&(i, k)| -> Result<SolveRecord> {
            let inc = InclusionMask::new(&mesh, sets[i].iter().copied(), k)?;
            let mut rec = match model.run_pair(&inc) {
                Ok(r) => r,
                Err(err) => {
                    log::warn!("solve {i} (k = {k}) failed: {err}");
                    let mut r = model.blank_record(&inc)?;
                    r.w0 = model.homogeneous()?.power;
                    r.status = format!("failed: {err}");
                    r
                }
            };
            rec.seed = plan.seed;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed as f64 > MAX_FAILURE_RATE * records.len() as f64 {
        return Err(EitError::SweepAborted {
            failed,
            total: records.len(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::NeumannSpec;
    use crate::mesh::inclusion_d0;

    #[test]
    fn block_counts() {
        let m = build_mesh(2, 21, 1.0).unwrap();
        assert_eq!(gen_blocks(&m, 1..=1, 0).len(), 441);
        assert_eq!(gen_blocks(&m, 5..=5, 2).len(), 169);
        assert!(gen_blocks(&m, 18..=18, 2).is_empty());
        for s in gen_blocks(&m, 1..=5, 2) {
            assert!(inclusion_d0(&m, &s).unwrap() >= 2);
        }
    }

    #[test]
    fn block_count_matches_brute_force() {
        let m = build_mesh(2, 21, 1.0).unwrap();
        let mut brute = 0;
        for y in 0..21usize {
            for x in 0..21usize {
                if x + 5 <= 21 && y + 5 <= 21 {
                    let els = block(&m, [x, y, 0], 5);
                    if inclusion_d0(&m, &els).unwrap() >= 2 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(brute, 169);
    }

    #[test]
    fn centered_blocks() {
        let m = build_mesh(3, 12, 1.0).unwrap();
        let b = gen_centered_blocks(&m, 1..=3);
        assert_eq!(b.len(), 8 + 1 + 8);
        let two = &b[8];
        assert_eq!(inclusion_d0(&m, two).unwrap(), 5);
    }

    #[test]
    fn connected_small_counts() {
        let m = build_mesh(3, 7, 1.0).unwrap();
        let one = gen_connected(&m, 1, 1, ConnectedMode::Exhaustive, 0, false).unwrap();
        assert_eq!(one.len(), 125);
        // dominoes in a 5^3 block: 3 axes * 4 * 25
        let two = gen_connected(&m, 2, 1, ConnectedMode::Exhaustive, 0, false).unwrap();
        assert_eq!(two.len(), 300);
    }

    #[test]
    fn sampled_is_deterministic_and_distinct() {
        let m = build_mesh(3, 7, 1.0).unwrap();
        let mode = ConnectedMode::Sampled { count: 40 };
        let a = gen_connected(&m, 6, 1, mode, 42, true).unwrap();
        let b = gen_connected(&m, 6, 1, mode, 42, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        let uniq: HashSet<_> = a.iter().collect();
        assert_eq!(uniq.len(), a.len());
        for s in &a {
            assert_eq!(s.len(), 6);
            assert!(inclusion_d0(&m, s).unwrap() >= 1);
            assert!(s.iter().any(|&e| in_low_octant(&m, e)));
        }
    }

    #[test]
    fn sampling_returns_all_when_exhausted() {
        let m = build_mesh(2, 5, 1.0).unwrap();
        // 3x3 interior: 12 dominoes
        let s = gen_connected(&m, 2, 1, ConnectedMode::Sampled { count: 50 }, 1, false).unwrap();
        assert_eq!(s.len(), 12);
    }

    #[test]
    fn empty_plan_gives_no_records() {
        let plan = SweepPlan {
            mesh: MeshSpec {
                dim: 2,
                n_e: 6,
                side_l: 1.0,
            },
            excitation: Excitation::Neumann(NeumannSpec::uniform(0)),
            k_values: vec![10.0],
            generator: Generator::Blocks {
                min: 5,
                max: 5,
                d0_min: 2,
            },
            volume_cap: 0.06,
            d03_min: None,
            seed: 0,
        };
        assert!(run_sweep(&plan).unwrap().is_empty());
    }

    #[test]
    fn sweep_respects_cap_and_sign_law() {
        let plan = SweepPlan {
            mesh: MeshSpec {
                dim: 2,
                n_e: 9,
                side_l: 1.0,
            },
            excitation: Excitation::Neumann(NeumannSpec::uniform(0)),
            k_values: vec![0.1, 10.0],
            generator: Generator::Blocks {
                min: 1,
                max: 3,
                d0_min: 1,
            },
            volume_cap: 0.06,
            d03_min: None,
            seed: 3,
        };
        let recs = run_sweep(&plan).unwrap();
        // s = 3 exceeds the cap on 81 cells (9/81 > 6%)
        assert_eq!(recs.len(), 2 * (49 + 36));
        for r in &recs {
            assert!(r.is_ok() && r.obeys_sign_law() && r.volume_fraction <= 0.06);
            assert_eq!(r.seed, 3);
        }
        assert_eq!(recs, run_sweep(&plan).unwrap());
    }
}
