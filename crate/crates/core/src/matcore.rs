//! Tolerance-aware dense linear algebra.
//!
//! Every rank, index and symplecticity statement in this crate is an exact
//! integer statement in theory. Numerically they are decided here, against
//! the thresholds carried by [`ToleranceConfig`], so that all other modules
//! classify "zero" the same way.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real dense matrix used throughout the crate.
pub type DenseMat = DMatrix<f64>;

const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceConfig {
    /// Singular values at or below `tol_rank * max(sigma_max, 1)` count as zero.
    pub tol_rank: f64,
    /// Symmetric eigenvalues in `[-tol_eig, tol_eig]` count as zero.
    pub tol_eig: f64,
    /// Max-norm residual allowed in `S^T J S = J`.
    pub tol_symp: f64,
    /// Offset used to evaluate one-sided limits in lambda.
    pub delta_probe: f64,
    /// Assumed minimum separation of rank-jump points.
    pub lambda_min_gap: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            tol_rank: 1e-8,
            tol_eig: 1e-8,
            tol_symp: 1e-10,
            delta_probe: 1e-6,
            lambda_min_gap: 1e-3,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tol_rank", self.tol_rank),
            ("tol_eig", self.tol_eig),
            ("tol_symp", self.tol_symp),
            ("delta_probe", self.delta_probe),
            ("lambda_min_gap", self.lambda_min_gap),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::contract(format!("{name} must be positive, got {v}")));
            }
        }
        if self.delta_probe >= self.lambda_min_gap / 2.0 {
            return Err(Error::contract(format!(
                "delta_probe ({}) must be smaller than lambda_min_gap / 2 ({})",
                self.delta_probe,
                self.lambda_min_gap / 2.0
            )));
        }
        Ok(())
    }
}

/// Counts of negative, zero and positive eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub neg: usize,
    pub zero: usize,
    pub pos: usize,
}

pub fn max_abs(a: &DenseMat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn ensure_finite(a: &DenseMat, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::contract(format!("{what}: matrix has non-finite entries")))
    }
}

/// Thin singular value decomposition `A = U diag(s) V^T` with `s` descending.
///
/// One-sided Jacobi on the columns of `A` (or `A^T` when `A` is wide). Column
/// orthogonality is driven to `rows * f64::EPSILON` relative to the column norms, so
/// tiny singular values keep relative accuracy.
pub struct Svd {
    pub u: DenseMat,
    pub s: Vec<f64>,
    pub v: DenseMat,
}

const MAX_SWEEPS: usize = 80;

pub fn svd(a: &DenseMat) -> Result<Svd> {
    ensure_finite(a, "svd")?;
    let (r, c) = a.shape();
    if r < c {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let mut w = a.clone();
    let mut v = DenseMat::identity(c, c);
    let tol = f64::EPSILON * r as f64;
    // columns below this squared norm are rounding residue of a null direction
    let negligible = (1e-3 * f64::EPSILON * a.norm()).powi(2);
    let mut converged = c < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        converged = true;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for m in [&mut w, &mut v] {
                    for i in 0..m.nrows() {
                        let xp = m[(i, p)];
                        let xq = m[(i, q)];
                        m[(i, p)] = cs * xp - sn * xq;
                        m[(i, q)] = sn * xp + cs * xq;
                    }
                }
            }
        }
    }
    if !converged {
        return Err(Error::NumericFailure("Jacobi SVD did not converge".into()));
    }
    let mut order: Vec<(f64, usize)> = (0..c)
        .map(|j| {
            let norm = w.column(j).norm();
            (if norm * norm <= negligible { 0.0 } else { norm }, j)
        })
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut u = DenseMat::zeros(r, c);
    let mut vs = DenseMat::zeros(c, c);
    let mut s = Vec::with_capacity(c);
    for (dst, &(sigma, src)) in order.iter().enumerate() {
        s.push(sigma);
        if sigma > 0.0 {
            u.set_column(dst, &(w.column(src) / sigma));
        }
        vs.set_column(dst, &v.column(src));
    }
    let filled = s.iter().take_while(|&&x| x > 0.0).count();
    complete_orthonormal(&mut u, filled);
    Ok(Svd { u, s, v: vs })
}

/// Overwrite columns `filled..` of `q` with an orthonormal completion of
/// its first `filled` (orthonormal) columns.
fn complete_orthonormal(q: &mut DenseMat, filled: usize) {
    let (r, c) = q.shape();
    let mut next = filled;
    for e in 0..r {
        if next == c {
            break;
        }
        let mut cand = nalgebra::DVector::<f64>::zeros(r);
        cand[e] = 1.0;
        for _ in 0..2 {
            for j in 0..next {
                let proj = q.column(j).dot(&cand);
                cand -= q.column(j) * proj;
            }
        }
        let norm = cand.norm();
        if norm > 0.5 {
            q.set_column(next, &(cand / norm));
            next += 1;
        }
    }
}

/// Singular values sorted in descending order.
pub fn singular_values(a: &DenseMat) -> Result<Vec<f64>> {
    if a.is_empty() {
        ensure_finite(a, "singular_values")?;
        return Ok(Vec::new());
    }
    Ok(svd(a)?.s)
}

/// Threshold below which a singular value of a matrix with largest singular
/// value `sigma_max` is treated as zero.
pub fn rank_threshold(sigma_max: f64, cfg: &ToleranceConfig) -> f64 {
    cfg.tol_rank * sigma_max.max(1.0)
}

/// Numerical rank from an already computed, descending list of singular values.
pub fn rank_from_singular_values(s: &[f64], cfg: &ToleranceConfig) -> usize {
    let Some(&smax) = s.first() else { return 0 };
    let thr = rank_threshold(smax, cfg);
    s.iter().filter(|&&v| v > thr).count()
}

pub fn rank_tol(a: &DenseMat, cfg: &ToleranceConfig) -> Result<usize> {
    Ok(rank_from_singular_values(&singular_values(a)?, cfg))
}

/// Moore-Penrose pseudoinverse with the same zero threshold as [`rank_tol`].
pub fn pinv(a: &DenseMat, cfg: &ToleranceConfig) -> Result<DenseMat> {
    ensure_finite(a, "pinv")?;
    let (r, c) = a.shape();
    if a.is_empty() {
        return Ok(DenseMat::zeros(c, r));
    }
    let d = svd(a)?;
    let thr = rank_threshold(d.s[0], cfg);
    let mut out = DenseMat::zeros(c, r);
    for (i, &s) in d.s.iter().enumerate() {
        if s > thr {
            out += (d.v.column(i) * d.u.column(i).transpose()) / s;
        }
    }
    Ok(out)
}

/// Max-norm asymmetry `||A - A^T||_max`.
pub fn asymmetry(a: &DenseMat) -> f64 {
    max_abs(&(a - a.transpose()))
}

pub fn symmetrize(a: &DenseMat) -> DenseMat {
    (a + a.transpose()) * 0.5
}

pub fn symmetric_eigenvalues(a: &DenseMat) -> Result<Vec<f64>> {
    ensure_finite(a, "symmetric_eigenvalues")?;
    if !a.is_square() {
        return Err(Error::contract("symmetric_eigenvalues: matrix is not square"));
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::try_new(symmetrize(a), f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::NumericFailure("symmetric eigensolver did not converge".into()))?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

pub fn inertia(a: &DenseMat, cfg: &ToleranceConfig) -> Result<Inertia> {
    if !a.is_square() {
        return Err(Error::contract("inertia: matrix is not square"));
    }
    let asym = asymmetry(a);
    if asym > cfg.tol_symp * max_abs(a) {
        return Err(Error::contract(format!(
            "inertia: matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let ev = symmetric_eigenvalues(a)?;
    let neg = ev.iter().filter(|&&v| v < -cfg.tol_eig).count();
    let pos = ev.iter().filter(|&&v| v > cfg.tol_eig).count();
    Ok(Inertia {
        neg,
        zero: ev.len() - neg - pos,
        pos,
    })
}

/// Inertia of a symmetric matrix with a lower bound `rank` on its rank from
/// elsewhere: eigenvalues outside `[-tol_eig, tol_eig]` are nonzero, and so
/// are at least the `rank` of largest magnitude whose sign is resolvable,
/// i.e. above `dim * eps * max|lambda|`.
pub fn inertia_with_rank_floor(a: &DenseMat, rank: usize, cfg: &ToleranceConfig) -> Result<Inertia> {
    let mut ev = symmetric_eigenvalues(a)?;
    ev.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
    let above = ev.iter().filter(|v| v.abs() > cfg.tol_eig).count();
    let noise = ev.len() as f64 * f64::EPSILON * ev.first().map_or(0.0, |v| v.abs());
    let resolvable = ev.iter().filter(|v| v.abs() > noise).count();
    let top = &ev[..rank.min(resolvable).max(above).min(ev.len())];
    let neg = top.iter().filter(|&&v| v < 0.0).count();
    let pos = top.iter().filter(|&&v| v > 0.0).count();
    Ok(Inertia {
        neg,
        zero: ev.len() - neg - pos,
        pos,
    })
}

/// Index of a symmetric matrix: the number of its negative eigenvalues.
pub fn inertia_neg(a: &DenseMat, cfg: &ToleranceConfig) -> Result<usize> {
    inertia(a, cfg).map(|i| i.neg)
}

/// The skew matrix `J = [[0, I], [-I, 0]]` of size `2n`.
pub fn j_matrix(n: usize) -> DenseMat {
    let mut j = DenseMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// `diag(-I, I)`.
pub fn p3_matrix(n: usize) -> DenseMat {
    let mut p = DenseMat::identity(2 * n, 2 * n);
    for i in 0..n {
        p[(i, i)] = -1.0;
    }
    p
}

/// `[[0, I], [I, 0]]`.
pub fn p1_matrix(n: usize) -> DenseMat {
    let mut p = DenseMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        p[(i, n + i)] = 1.0;
        p[(n + i, i)] = 1.0;
    }
    p
}

/// `diag(I, -I)`.
pub fn p2_matrix(n: usize) -> DenseMat {
    -p3_matrix(n)
}

/// Half dimension of a `2n x 2n` matrix.
pub fn half_dim(s: &DenseMat) -> Result<usize> {
    let (r, c) = s.shape();
    if r != c || r % 2 != 0 || r == 0 {
        return Err(Error::contract(format!(
            "expected a square matrix of even dimension, got {r}x{c}"
        )));
    }
    Ok(r / 2)
}

/// Symplectic residual `||S^T J S - J||_max`.
pub fn symplectic_residual(s: &DenseMat) -> Result<f64> {
    let n = half_dim(s)?;
    let j = j_matrix(n);
    Ok(max_abs(&(s.transpose() * &j * s - j)))
}

/// Whether `S^T J S = J` holds to within `tol_symp`, measured relative to
/// `max(1, ||S||_max^2)` so that well-conditioned products of large
/// symplectic factors are not rejected for rounding alone.
pub fn is_symplectic(s: &DenseMat, cfg: &ToleranceConfig) -> Result<bool> {
    let res = symplectic_residual(s)?;
    let scale = max_abs(s).powi(2).max(1.0);
    Ok(res <= cfg.tol_symp * scale)
}

/// `S^{-1} = -J S^T J`; exact for symplectic `S`.
pub fn symplectic_inverse(s: &DenseMat) -> DenseMat {
    let n = s.nrows() / 2;
    let j = j_matrix(n);
    -(&j * s.transpose() * &j)
}

/// The four `n x n` blocks `(A, B, C, D)` of a `2n x 2n` matrix.
pub fn blocks(s: &DenseMat) -> (DenseMat, DenseMat, DenseMat, DenseMat) {
    let n = s.nrows() / 2;
    (
        s.view((0, 0), (n, n)).into_owned(),
        s.view((0, n), (n, n)).into_owned(),
        s.view((n, 0), (n, n)).into_owned(),
        s.view((n, n), (n, n)).into_owned(),
    )
}

pub fn upper_right(s: &DenseMat) -> DenseMat {
    let n = s.nrows() / 2;
    s.view((0, n), (n, n)).into_owned()
}

/// Assemble `[[a, b], [c, d]]` from four blocks of equal size.
pub fn from_blocks(a: &DenseMat, b: &DenseMat, c: &DenseMat, d: &DenseMat) -> DenseMat {
    let n = a.nrows();
    let mut s = DenseMat::zeros(2 * n, 2 * n);
    s.view_mut((0, 0), (n, n)).copy_from(a);
    s.view_mut((0, n), (n, n)).copy_from(b);
    s.view_mut((n, 0), (n, n)).copy_from(c);
    s.view_mut((n, n), (n, n)).copy_from(d);
    s
}

/// `(0 I)^T`, the `2n x n` initial value of a principal solution.
pub fn lower_identity(n: usize) -> DenseMat {
    let mut y = DenseMat::zeros(2 * n, n);
    for i in 0..n {
        y[(n + i, i)] = 1.0;
    }
    y
}
