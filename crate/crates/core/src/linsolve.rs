//! Band Cholesky factorization and the two singular systems of the model:
//! the pure Neumann problem (constant nullspace) and the complete-electrode
//! block system (nullspace: equal shift of potential and electrode voltages).

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{BandedSymmetricMatrix, CemSystem};
use crate::error::{EitError, Result};

/// Relative residual accepted after every solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Rows processed per panel in the blocked factorization.
const PANEL: usize = 32;

/// Operation counts of a band decomposition plus one solve, as modeled by
/// `m (b - 1)` multiplications and `m b (b - 1)` additions for the
/// decomposition and `m b` multiplications for the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopModel {
    pub decomposition_multiplications: u128,
    pub decomposition_additions: u128,
    pub solve_multiplications: u128,
}

pub fn flop_model(m: u64, b: u64) -> Result<FlopModel> {
    if m == 0 || b == 0 {
        return Err(EitError::InvalidArgument("order and half-bandwidth must be >= 1".into()));
    }
    let (m, b) = (m as u128, b as u128);
    Ok(FlopModel {
        decomposition_multiplications: m * (b - 1),
        decomposition_additions: m * b * (b - 1),
        solve_multiplications: m * b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub order: usize,
    pub half_bandwidth: usize,
    pub flops: FlopModel,
    /// `||K w - p|| / ||p||` measured after the solve (0 for a zero load).
    pub residual: f64,
    pub wall_time: Duration,
}

/// `A = U^T U` with `U` stored row-wise in the band layout of the input.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    order: usize,
    half_bw: usize,
    u: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &BandedSymmetricMatrix) -> Result<Self> {
        Self::factor_owned(a.clone())
    }

    /// Factors in place, reusing the matrix storage.
    pub fn factor_owned(mut a: BandedSymmetricMatrix) -> Result<Self> {
        let m = a.order();
        let b = a.half_bandwidth();
        factor_in_place(a.data_mut(), m, b)?;
        Ok(Self {
            order: m,
            half_bw: b,
            u: a.into_data(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bw
    }

    /// Solves `A x = f`.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let (m, b) = (self.order, self.half_bw);
        assert_eq!(f.len(), m);
        let mut x = f.to_vec();
        // U^T y = f
        for i in 0..m {
            let row = &self.u[i * b..(i + 1) * b];
            let yi = x[i] / row[0];
            x[i] = yi;
            let tmax = b.min(m - i);
            for (xt, ut) in x[i + 1..i + tmax].iter_mut().zip(&row[1..tmax]) {
                *xt -= ut * yi;
            }
        }
        // U x = y
        for i in (0..m).rev() {
            let row = &self.u[i * b..(i + 1) * b];
            let tmax = b.min(m - i);
            let dot: f64 = x[i + 1..i + tmax].iter().zip(&row[1..tmax]).map(|(a, c)| a * c).sum();
            x[i] = (x[i] - dot) / row[0];
        }
        x
    }
}

fn factor_in_place(u: &mut [f64], m: usize, b: usize) -> Result<()> {
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { factor_fma(u, m, b) };
        }
    }
    factor_impl::<false>(u, m, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn factor_fma(u: &mut [f64], m: usize, b: usize) -> Result<()> {
    factor_impl::<true>(u, m, b)
}

#[inline(always)]
fn factor_impl<const FMA: bool>(u: &mut [f64], m: usize, b: usize) -> Result<()> {
    let mut pack = Vec::new();
    let mut j0 = 0;
    while j0 < m {
        let j1 = (j0 + PANEL).min(m);
        factor_panel::<FMA>(u, m, b, j0, j1)?;
        update_trailing_impl::<FMA>(u, &mut pack, m, b, j0, j1);
        j0 = j1;
    }
    Ok(())
}

/// Unblocked factorization of rows `j0..j1`, applying updates only inside
/// the panel.
#[inline(always)]
fn factor_panel<const FMA: bool>(u: &mut [f64], m: usize, b: usize, j0: usize, j1: usize) -> Result<()> {
    for i in j0..j1 {
        let (head, tail) = u.split_at_mut((i + 1) * b);
        let row = &mut head[i * b..];
        let d = row[0];
        if !(d > 0.0) || !d.is_finite() {
            return Err(EitError::NotPositiveDefinite { row: i, pivot: d });
        }
        let d = d.sqrt();
        row[0] = d;
        let tmax = b.min(m - i);
        let inv = 1.0 / d;
        for v in &mut row[1..tmax] {
            *v *= inv;
        }
        let kmax = tmax.min(j1 - i);
        for k in 1..kmax {
            let s = row[k];
            if s == 0.0 {
                continue;
            }
            let target = &mut tail[(k - 1) * b..(k - 1) * b + (tmax - k)];
            for (t, r) in target.iter_mut().zip(&row[k..tmax]) {
                *t = madd::<FMA>(*t, s, *r);
            }
        }
    }
    Ok(())
}

#[inline(always)]
fn madd<const FMA: bool>(t: f64, s: f64, a: f64) -> f64 {
    if FMA {
        (-s).mul_add(a, t)
    } else {
        t - s * a
    }
}

const TILE: usize = 8;

/// Trailing update `A[r, c] -= sum_i U[i, r] U[i, c]` over panel rows
/// `j0..j1`. The panel is first copied into `pack` as dense tiles of `TILE`
/// columns (zeros outside the band), so the kernel reads each tile
/// contiguously and no band-edge cases remain.
#[inline(always)]
fn update_trailing_impl<const FMA: bool>(u: &mut [f64], pack: &mut Vec<f64>, m: usize, b: usize, j0: usize, j1: usize) {
    let end = (j1 - 1 + b).min(m);
    if j1 >= end {
        return;
    }
    let np = j1 - j0;
    let ntiles = (end - j1).div_ceil(TILE);
    let (panel, rest) = u.split_at_mut(j1 * b);
    pack.clear();
    pack.resize(ntiles * np * TILE, 0.0);
    for t in 0..ntiles {
        for q in 0..np {
            let i = j0 + q;
            let dst = &mut pack[(t * np + q) * TILE..][..TILE];
            for (l, v) in dst.iter_mut().enumerate() {
                let c = j1 + t * TILE + l;
                if c < end && c - i < b {
                    *v = panel[i * b + c - i];
                }
            }
        }
    }
    let pack = &pack[..];
    // s[q][rr] = U[j0 + q, r0 + rr]
    let mut s = [[0.0; 4]; PANEL];
    let mut r0 = j1;
    while r0 < end {
        let nr = (end - r0).min(4);
        for (q, sq) in s[..np].iter_mut().enumerate() {
            let i = j0 + q;
            for (rr, v) in sq.iter_mut().enumerate() {
                let off = r0 + rr - i;
                *v = if rr < nr && off < b { panel[i * b + off] } else { 0.0 };
            }
        }
        let block = &mut rest[(r0 - j1) * b..(r0 - j1 + nr) * b];
        for t in (r0 - j1) / TILE..ntiles {
            let c = j1 + t * TILE;
            let tile = &pack[t * np * TILE..(t + 1) * np * TILE];
            if nr == 4 && c >= r0 + 3 && c + TILE <= end {
                let mut acc = [[0.0; TILE]; 4];
                for (rr, a) in acc.iter_mut().enumerate() {
                    a.copy_from_slice(&block[rr * b + c - r0 - rr..][..TILE]);
                }
                tile_kernel::<FMA>(&mut acc, tile, &s, np);
                for (rr, a) in acc.iter().enumerate() {
                    block[rr * b + c - r0 - rr..][..TILE].copy_from_slice(a);
                }
            } else {
                // diagonal or last tile: only stored entries c >= r, c < end
                let owned = |rr: usize, l: usize| rr < nr && c + l >= r0 + rr && c + l < end;
                let mut acc = [[0.0; TILE]; 4];
                for (rr, a) in acc.iter_mut().enumerate() {
                    for (l, v) in a.iter_mut().enumerate() {
                        if owned(rr, l) {
                            *v = block[rr * b + c + l - r0 - rr];
                        }
                    }
                }
                tile_kernel::<FMA>(&mut acc, tile, &s, np);
                for (rr, a) in acc.iter().enumerate() {
                    for (l, v) in a.iter().enumerate() {
                        if owned(rr, l) {
                            block[rr * b + c + l - r0 - rr] = *v;
                        }
                    }
                }
            }
        }
        r0 += nr;
    }
}

#[inline(always)]
fn tile_kernel<const FMA: bool>(acc: &mut [[f64; TILE]; 4], tile: &[f64], s: &[[f64; 4]; PANEL], np: usize) {
    #[cfg(target_arch = "x86_64")]
    if FMA {
        // SAFETY: only reached from `factor_fma`, which runs after avx2 and
        // fma were detected; loads stay inside `TILE`-sized chunks.
        unsafe { tile_kernel_avx(acc, tile, s, np) };
        return;
    }
    for (p, sq) in tile.chunks_exact(TILE).zip(&s[..np]) {
        let p: &[f64; TILE] = p.try_into().unwrap();
        for rr in 0..4 {
            let sv = sq[rr];
            for l in 0..TILE {
                acc[rr][l] = madd::<FMA>(acc[rr][l], sv, p[l]);
            }
        }
    }
}

/// Same as the portable kernel, with the eight accumulators pinned in
/// registers.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tile_kernel_avx(acc: &mut [[f64; TILE]; 4], tile: &[f64], s: &[[f64; 4]; PANEL], np: usize) {
    use std::arch::x86_64::*;
    let a = acc.as_mut_ptr() as *mut f64;
    let mut c00 = _mm256_loadu_pd(a);
    let mut c01 = _mm256_loadu_pd(a.add(4));
    let mut c10 = _mm256_loadu_pd(a.add(8));
    let mut c11 = _mm256_loadu_pd(a.add(12));
    let mut c20 = _mm256_loadu_pd(a.add(16));
    let mut c21 = _mm256_loadu_pd(a.add(20));
    let mut c30 = _mm256_loadu_pd(a.add(24));
    let mut c31 = _mm256_loadu_pd(a.add(28));
    for (pc, sq) in tile.chunks_exact(TILE).zip(&s[..np]) {
        let p = pc.as_ptr();
        let p0 = _mm256_loadu_pd(p);
        let p1 = _mm256_loadu_pd(p.add(4));
        let s0 = _mm256_broadcast_sd(&sq[0]);
        let s1 = _mm256_broadcast_sd(&sq[1]);
        let s2 = _mm256_broadcast_sd(&sq[2]);
        let s3 = _mm256_broadcast_sd(&sq[3]);
        c00 = _mm256_fnmadd_pd(s0, p0, c00);
        c01 = _mm256_fnmadd_pd(s0, p1, c01);
        c10 = _mm256_fnmadd_pd(s1, p0, c10);
        c11 = _mm256_fnmadd_pd(s1, p1, c11);
        c20 = _mm256_fnmadd_pd(s2, p0, c20);
        c21 = _mm256_fnmadd_pd(s2, p1, c21);
        c30 = _mm256_fnmadd_pd(s3, p0, c30);
        c31 = _mm256_fnmadd_pd(s3, p1, c31);
    }
    _mm256_storeu_pd(a, c00);
    _mm256_storeu_pd(a.add(4), c01);
    _mm256_storeu_pd(a.add(8), c10);
    _mm256_storeu_pd(a.add(12), c11);
    _mm256_storeu_pd(a.add(16), c20);
    _mm256_storeu_pd(a.add(20), c21);
    _mm256_storeu_pd(a.add(24), c30);
    _mm256_storeu_pd(a.add(28), c31);
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves the singular Neumann system `K w = p` (nullspace: constants).
///
/// Parameter 0 is pinned to zero during the factorization and the result
/// is shifted to zero mean.
pub fn solve_neumann(k: &BandedSymmetricMatrix, p: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
    solve_neumann_with(k.clone(), p, |w| k.matvec(w))
}

/// As [`solve_neumann`], but factors `k` in place and measures the residual
/// through `apply`, which must compute `K w` for the unmodified matrix.
pub fn solve_neumann_with<F>(k: BandedSymmetricMatrix, p: &[f64], apply: F) -> Result<(Vec<f64>, SolveStats)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let start = Instant::now();
    let m = k.order();
    let b = k.half_bandwidth();
    assert_eq!(p.len(), m);
    let sum: f64 = p.iter().sum();
    let abs: f64 = p.iter().map(|v| v.abs()).sum();
    if sum.abs() > RESIDUAL_TOL * abs {
        return Err(EitError::IncompatibleNeumann { integral: sum, norm: abs });
    }
    let flops = flop_model(m as u64, b as u64)?;
    let pn = norm(p);
    if pn == 0.0 {
        return Ok((
            vec![0.0; m],
            SolveStats {
                order: m,
                half_bandwidth: b,
                flops,
                residual: 0.0,
                wall_time: start.elapsed(),
            },
        ));
    }
    let mut pinned = k;
    for v in &mut pinned.data_mut()[1..b.min(m)] {
        *v = 0.0;
    }
    let chol = BandCholesky::factor_owned(pinned)?;
    let mut rhs = p.to_vec();
    rhs[0] = 0.0;
    let mut w = chol.solve(&rhs);
    drop(chol);
    let mean = w.iter().sum::<f64>() / m as f64;
    for v in &mut w {
        *v -= mean;
    }
    let r = apply(&w);
    let res: Vec<f64> = r.iter().zip(p).map(|(a, c)| a - c).collect();
    let residual = norm(&res) / pn;
    if !(residual <= RESIDUAL_TOL) {
        return Err(EitError::SolverFailure { residual });
    }
    Ok((
        w,
        SolveStats {
            order: m,
            half_bandwidth: b,
            flops,
            residual,
            wall_time: start.elapsed(),
        },
    ))
}

/// Solution of the electrode block system.
#[derive(Debug, Clone)]
pub struct CemSolution {
    pub w: Vec<f64>,
    pub voltages: Vec<f64>,
    pub stats: SolveStats,
}

/// Solves the complete-electrode block system by eliminating `w`:
/// `w = K_ww^{-1} K_wU U` and `(K_UU - K_wU^T K_ww^{-1} K_wU) U = I`.
///
/// The Schur complement is singular along equal voltages; `U_1` is pinned
/// and the pair `(w, U)` is shifted so that `w` has zero mean.
pub fn solve_cem(sys: &CemSystem) -> Result<CemSolution> {
    let start = Instant::now();
    let m = sys.k_ww.order();
    let b = sys.k_ww.half_bandwidth();
    let l = sys.n_electrodes();
    if l == 0 {
        return Err(EitError::InvalidElectrodes("no electrodes".into()));
    }
    let total: f64 = sys.current.iter().sum();
    let inorm = norm(&sys.current);
    if total.abs() > 1e-12 * inorm.max(1.0) {
        return Err(EitError::InvalidElectrodes(format!("current pattern sums to {total:e}")));
    }
    let flops = flop_model(m as u64, b as u64)?;
    if inorm == 0.0 {
        return Ok(CemSolution {
            w: vec![0.0; m],
            voltages: vec![0.0; l],
            stats: SolveStats {
                order: m + l,
                half_bandwidth: b,
                flops,
                residual: 0.0,
                wall_time: start.elapsed(),
            },
        });
    }
    let chol = BandCholesky::factor(&sys.k_ww)?;
    let y: Vec<Vec<f64>> = sys.k_wu.iter().map(|c| chol.solve(c)).collect();
    let mut s = DMatrix::<f64>::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let dot: f64 = sys.k_wu[i].iter().zip(&y[j]).map(|(a, c)| a * c).sum();
            s[(i, j)] = -dot;
        }
        s[(i, i)] += sys.k_uu[i];
    }
    let mut u = vec![0.0; l];
    if l > 1 {
        let sub = s.view((1, 1), (l - 1, l - 1)).into_owned();
        let rhs = DVector::from_iterator(l - 1, sys.current[1..].iter().copied());
        let sol = sub
            .lu()
            .solve(&rhs)
            .ok_or_else(|| EitError::Degenerate("singular electrode Schur complement".into()))?;
        u[1..].copy_from_slice(sol.as_slice());
    }
    let mut w = vec![0.0; m];
    for (yl, ul) in y.iter().zip(&u) {
        for (wi, yi) in w.iter_mut().zip(yl) {
            *wi += ul * yi;
        }
    }
    let mean = w.iter().sum::<f64>() / m as f64;
    for v in &mut w {
        *v -= mean;
    }
    for v in &mut u {
        *v -= mean;
    }
    let (rw, ru) = sys.residual(&w, &u);
    let residual = (norm(&rw).powi(2) + norm(&ru).powi(2)).sqrt() / inorm;
    if !(residual <= RESIDUAL_TOL) {
        return Err(EitError::SolverFailure { residual });
    }
    Ok(CemSolution {
        w,
        voltages: u,
        stats: SolveStats {
            order: m + l,
            half_bandwidth: b,
            flops,
            residual,
            wall_time: start.elapsed(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_band(m: usize, b: usize, seed: u64) -> BandedSymmetricMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandedSymmetricMatrix::zeros(m, b);
        for i in 0..m {
            for t in 1..b.min(m - i) {
                a.add(i, i + t, rng.random_range(-1.0..1.0));
            }
        }
        // diagonal dominance plus epsilon
        for i in 0..m {
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
            a.add(i, i, off + 1e-3);
        }
        a
    }

    #[test]
    fn band_vs_dense_solve() {
        for (m, b, seed) in [(1, 1, 1), (7, 3, 2), (50, 12, 3), (200, 37, 4), (200, 200, 5), (130, 33, 6)] {
            let a = random_band(m, b, seed);
            let f: Vec<f64> = (0..m).map(|i| ((i * 7 + 3) as f64).cos()).collect();
            let x = BandCholesky::factor(&a).unwrap().solve(&f);
            let xd = a.to_dense().lu().solve(&DVector::from_vec(f.clone())).unwrap();
            let err = x.iter().zip(xd.iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(err / xd.norm() < 1e-9, "m={m} b={b}: {err}");
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandedSymmetricMatrix::zeros(3, 2);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(BandCholesky::factor(&a), Err(EitError::NotPositiveDefinite { row: 1, .. })));
    }

    #[test]
    fn flop_examples() {
        assert_eq!(flop_model(10648, 1015).unwrap().solve_multiplications, 10_807_720);
        let f = flop_model(1, 1).unwrap();
        assert_eq!(
            (f.decomposition_multiplications, f.decomposition_additions, f.solve_multiplications),
            (0, 0, 1)
        );
        assert!(flop_model(0, 3).is_err());
    }
}
