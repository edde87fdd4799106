//! Lambda-dependent symplectic systems `y_{k+1} = S_k(lambda) y_k`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    asymmetry, is_symplectic, j_matrix, lower_identity, max_abs, rank_tol, symmetric_eigenvalues,
    symmetrize, symplectic_inverse, DenseMat, ToleranceConfig,
};

/// Which one-parameter matrix family a set of jump hints refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HintTarget {
    /// The block `B_k(lambda)`.
    BBlock { k: usize },
    /// The block `X_{N+1}(lambda)` of the principal solution at 0.
    Eigen,
    /// `S_k(anchor) - S_k(lambda)`.
    Rho { k: usize, anchor: f64 },
    /// The block `B_k` of `R_{k+1}^{-1} S_k(lambda) R_k` where `R` is a
    /// fundamental matrix (anchored at 0 or N+1) evaluated at `beta`.
    RenormalizedB { k: usize, beta: f64 },
}

/// A coefficient sequence `S_k(lambda)`, `k = 0..=N`, of `2n x 2n` symplectic
/// matrices depending on a real parameter.
///
/// `eval` must be a pure function of `(k, lambda)`.
pub trait SymplecticFamily: Send + Sync {
    /// Block size `n`.
    fn n(&self) -> usize;

    /// Last index `N` of the range `k = 0..=N`.
    fn horizon(&self) -> usize;

    fn eval(&self, k: usize, lambda: f64) -> DenseMat;

    /// Fallible evaluation; families whose coefficients can be undefined at
    /// some `(k, lambda)` override this and report the offending point.
    fn try_eval(&self, k: usize, lambda: f64) -> Result<DenseMat> {
        Ok(self.eval(k, lambda))
    }

    /// Derivative in lambda. Defaults to a central difference.
    fn eval_deriv(&self, k: usize, lambda: f64) -> DenseMat {
        central_difference(|l| self.eval(k, l), lambda)
    }

    /// Candidate locations of rank drops of the given target within `(a, b]`.
    /// `None` means no analytic information is available.
    fn jump_hints(&self, _target: HintTarget, _a: f64, _b: f64) -> Option<Vec<f64>> {
        None
    }

    fn label(&self) -> String;
}

/// Central finite difference with step `1e-6 * max(1, |lambda|)`.
pub fn central_difference(f: impl Fn(f64) -> DenseMat, lambda: f64) -> DenseMat {
    let h = 1e-6 * lambda.abs().max(1.0);
    (f(lambda + h) - f(lambda - h)) / (2.0 * h)
}

macro_rules! forward_family {
    ($ty:ty) => {
        impl<F: SymplecticFamily + ?Sized> SymplecticFamily for $ty {
            fn n(&self) -> usize {
                (**self).n()
            }
            fn horizon(&self) -> usize {
                (**self).horizon()
            }
            fn eval(&self, k: usize, lambda: f64) -> DenseMat {
                (**self).eval(k, lambda)
            }
            fn try_eval(&self, k: usize, lambda: f64) -> Result<DenseMat> {
                (**self).try_eval(k, lambda)
            }
            fn eval_deriv(&self, k: usize, lambda: f64) -> DenseMat {
                (**self).eval_deriv(k, lambda)
            }
            fn jump_hints(&self, target: HintTarget, a: f64, b: f64) -> Option<Vec<f64>> {
                (**self).jump_hints(target, a, b)
            }
            fn label(&self) -> String {
                (**self).label()
            }
        }
    };
}

forward_family!(Arc<F>);
forward_family!(&F);
forward_family!(Box<F>);

/// Wrapper that hides the analytic jump hints of a family, forcing generic
/// detection in every scan.
pub struct WithoutHints<F>(pub F);

impl<F: SymplecticFamily> SymplecticFamily for WithoutHints<F> {
    fn n(&self) -> usize {
        self.0.n()
    }
    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn eval(&self, k: usize, lambda: f64) -> DenseMat {
        self.0.eval(k, lambda)
    }
    fn try_eval(&self, k: usize, lambda: f64) -> Result<DenseMat> {
        self.0.try_eval(k, lambda)
    }
    fn eval_deriv(&self, k: usize, lambda: f64) -> DenseMat {
        self.0.eval_deriv(k, lambda)
    }
    fn label(&self) -> String {
        format!("{} (no hints)", self.0.label())
    }
}

/// A `2n x n` matrix `Y = (X; U)` with `rank Y = n` and `X^T U` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjoinedBasis {
    y: DenseMat,
}

impl ConjoinedBasis {
    pub fn new(y: DenseMat, cfg: &ToleranceConfig) -> Result<Self> {
        let (r, c) = y.shape();
        if r != 2 * c || c == 0 {
            return Err(Error::contract(format!(
                "conjoined basis must be 2n x n, got {r}x{c}"
            )));
        }
        let rank = rank_tol(&y, cfg)?;
        if rank != c {
            return Err(Error::contract(format!(
                "conjoined basis has rank {rank}, expected {c}"
            )));
        }
        let basis = Self { y };
        let asym = asymmetry(&(basis.x().transpose() * basis.u()));
        let scale = max_abs(&basis.y).powi(2).max(1.0);
        if asym > cfg.tol_symp * scale * 1e2 {
            return Err(Error::contract(format!(
                "X^T U is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        Ok(basis)
    }

    /// Skips the rank and symmetry checks. Use for matrices that are
    /// conjoined bases by construction.
    pub fn new_unchecked(y: DenseMat) -> Self {
        Self { y }
    }

    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    pub fn y(&self) -> &DenseMat {
        &self.y
    }

    pub fn x(&self) -> DenseMat {
        let n = self.n();
        self.y.rows(0, n).into_owned()
    }

    pub fn u(&self) -> DenseMat {
        let n = self.n();
        self.y.rows(n, n).into_owned()
    }

    pub fn into_inner(self) -> DenseMat {
        self.y
    }
}

/// Wronskian `w(Y, Yhat) = Y^T J Yhat`.
pub fn wronskian(y: &ConjoinedBasis, yhat: &ConjoinedBasis) -> Result<DenseMat> {
    if y.y.shape() != yhat.y.shape() {
        return Err(Error::contract(format!(
            "wronskian: shape mismatch {:?} vs {:?}",
            y.y.shape(),
            yhat.y.shape()
        )));
    }
    let j = j_matrix(y.n());
    Ok(y.y.transpose() * j * &yhat.y)
}

/// Index at which a fundamental matrix equals the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    /// `Z_0 = I`, principal solution at 0.
    Start,
    /// `Z_{N+1} = I`, principal solution at N+1.
    End,
}

/// Fundamental matrices `Z_0, ..., Z_{N+1}` of the system at fixed lambda.
#[derive(Debug, Clone)]
pub struct FundamentalTrajectory {
    pub anchor: Anchor,
    pub lambda: f64,
    pub z: Vec<DenseMat>,
}

impl FundamentalTrajectory {
    pub fn n(&self) -> usize {
        self.z[0].nrows() / 2
    }

    /// `Y_k = Z_k (0 I)^T`.
    pub fn y(&self, k: usize) -> DenseMat {
        let n = self.n();
        self.z[k].columns(n, n).into_owned()
    }

    pub fn basis(&self, k: usize) -> ConjoinedBasis {
        ConjoinedBasis::new_unchecked(self.y(k))
    }

    /// Upper block `X_k`.
    pub fn x(&self, k: usize) -> DenseMat {
        let n = self.n();
        self.z[k].view((0, n), (n, n)).into_owned()
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Evaluates `S_k(lambda)` and rejects non-symplectic output.
pub fn checked_eval(
    fam: &dyn SymplecticFamily,
    k: usize,
    lambda: f64,
    cfg: &ToleranceConfig,
) -> Result<DenseMat> {
    let s = fam.try_eval(k, lambda)?;
    if s.shape() != (2 * fam.n(), 2 * fam.n()) {
        return Err(Error::contract(format!(
            "{}: S_{k}({lambda}) has shape {:?}",
            fam.label(),
            s.shape()
        )));
    }
    if !s.iter().all(|v| v.is_finite()) || !is_symplectic(&s, cfg)? {
        return Err(Error::contract(format!(
            "{}: S_{k}({lambda}) is not symplectic",
            fam.label()
        )));
    }
    Ok(s)
}

/// Solve the system from `Z_l = I`, forward for `l = 0` and backward (with
/// the algebraic inverse `-J S^T J`) for `l = N+1`.
pub fn propagate(
    fam: &dyn SymplecticFamily,
    lambda: f64,
    anchor: Anchor,
    cfg: &ToleranceConfig,
) -> Result<FundamentalTrajectory> {
    if !lambda.is_finite() {
        return Err(Error::contract("propagate: lambda is not finite"));
    }
    let n = fam.n();
    let big_n = fam.horizon();
    let id = DenseMat::identity(2 * n, 2 * n);
    let mut z = vec![id.clone(); big_n + 2];
    match anchor {
        Anchor::Start => {
            for k in 0..=big_n {
                let s = checked_eval(fam, k, lambda, cfg)?;
                z[k + 1] = s * &z[k];
            }
        }
        Anchor::End => {
            for k in (0..=big_n).rev() {
                let s = checked_eval(fam, k, lambda, cfg)?;
                z[k] = symplectic_inverse(&s) * &z[k + 1];
            }
        }
    }
    Ok(FundamentalTrajectory { anchor, lambda, z })
}

/// Session-local memo of trajectories keyed by `(lambda, anchor)`.
pub struct TrajectoryCache<'a> {
    fam: &'a dyn SymplecticFamily,
    cfg: ToleranceConfig,
    map: Mutex<HashMap<(u64, Anchor), Arc<FundamentalTrajectory>>>,
}

impl<'a> TrajectoryCache<'a> {
    pub fn new(fam: &'a dyn SymplecticFamily, cfg: ToleranceConfig) -> Self {
        Self {
            fam,
            cfg,
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn family(&self) -> &'a dyn SymplecticFamily {
        self.fam
    }

    pub fn config(&self) -> &ToleranceConfig {
        &self.cfg
    }

    pub fn get(&self, lambda: f64, anchor: Anchor) -> Result<Arc<FundamentalTrajectory>> {
        let key = (lambda.to_bits(), anchor);
        if let Some(t) = self.map.lock().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(propagate(self.fam, lambda, anchor, &self.cfg)?);
        self.map
            .lock()
            .expect("cache poisoned")
            .insert(key, Arc::clone(&t));
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct PsiValue {
    /// Symmetrized `J^T Sdot S^{-1}`.
    pub psi: DenseMat,
    /// `||Psi_raw - Psi_raw^T||_max` before symmetrization.
    pub raw_asymmetry: f64,
}

/// `Psi(S) = J^T Sdot S^{-1}`, symmetrized.
pub fn psi(s: &DenseMat, sdot: &DenseMat) -> PsiValue {
    let n = s.nrows() / 2;
    let raw = j_matrix(n).transpose() * sdot * symplectic_inverse(s);
    PsiValue {
        raw_asymmetry: asymmetry(&raw),
        psi: symmetrize(&raw),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub pass: bool,
    pub min_eigenvalue: f64,
    /// `(k, lambda)` at which the minimum was attained.
    pub argmin: (usize, f64),
    pub max_asymmetry: f64,
    pub warnings: Vec<String>,
}

/// Smallest eigenvalue of `Psi_k(lambda)` over all `k` and a uniform grid on `[a, b]`.
pub fn certify_monotonicity(
    fam: &dyn SymplecticFamily,
    a: f64,
    b: f64,
    grid_points: usize,
    cfg: &ToleranceConfig,
) -> Result<MonotonicityReport> {
    if !(a < b) || grid_points < 2 {
        return Err(Error::contract(
            "certify_monotonicity needs a < b and at least two grid points",
        ));
    }
    let mut min_ev = f64::INFINITY;
    let mut argmin = (0, a);
    let mut max_asym = 0.0_f64;
    let mut warnings = Vec::new();
    for i in 0..grid_points {
        let lambda = a + (b - a) * i as f64 / (grid_points - 1) as f64;
        for k in 0..=fam.horizon() {
            let s = fam.eval(k, lambda);
            let sdot = fam.eval_deriv(k, lambda);
            let p = psi(&s, &sdot);
            let scale = max_abs(&p.psi).max(1.0);
            if p.raw_asymmetry > 100.0 * cfg.tol_symp * scale && warnings.len() < 8 {
                warnings.push(format!(
                    "Psi_{k}({lambda}) asymmetry {:.3e}",
                    p.raw_asymmetry
                ));
            }
            max_asym = max_asym.max(p.raw_asymmetry);
            let ev = symmetric_eigenvalues(&p.psi)?;
            if let Some(&lo) = ev.first() {
                if lo < min_ev {
                    min_ev = lo;
                    argmin = (k, lambda);
                }
            }
        }
    }
    Ok(MonotonicityReport {
        pass: min_ev >= -cfg.tol_eig,
        min_eigenvalue: min_ev,
        argmin,
        max_asymmetry: max_asym,
        warnings,
    })
}

/// The family `R_{k+1}^{-1} S_k(lambda) R_k` for constant symplectic `R_k`.
pub struct TransformedFamily<F> {
    base: F,
    r: Vec<DenseMat>,
    r_inv: Vec<DenseMat>,
    renormalized_at: Option<f64>,
}

impl<F: SymplecticFamily> TransformedFamily<F> {
    pub fn transformations(&self) -> &[DenseMat] {
        &self.r
    }

    pub fn base(&self) -> &F {
        &self.base
    }

    /// Marks `R_k` as a fundamental matrix evaluated at `beta`, so the base
    /// family's analytic hints for the transformed `B` block can be used.
    pub fn with_renormalization_point(mut self, beta: f64) -> Self {
        self.renormalized_at = Some(beta);
        self
    }
}

/// Build `R_{k+1}^{-1} S_k(lambda) R_k`; `r` holds `R_0, ..., R_{N+1}`.
pub fn transform_family<F: SymplecticFamily>(
    fam: F,
    r: Vec<DenseMat>,
    cfg: &ToleranceConfig,
) -> Result<TransformedFamily<F>> {
    let dim = 2 * fam.n();
    if r.len() != fam.horizon() + 2 {
        return Err(Error::contract(format!(
            "transform_family: expected {} matrices, got {}",
            fam.horizon() + 2,
            r.len()
        )));
    }
    for (k, rk) in r.iter().enumerate() {
        if rk.shape() != (dim, dim) || !is_symplectic(rk, cfg)? {
            return Err(Error::contract(format!(
                "transform_family: R_{k} is not a {dim}x{dim} symplectic matrix"
            )));
        }
    }
    let r_inv = r.iter().map(symplectic_inverse).collect();
    Ok(TransformedFamily {
        base: fam,
        r,
        r_inv,
        renormalized_at: None,
    })
}

impl<F: SymplecticFamily> SymplecticFamily for TransformedFamily<F> {
    fn n(&self) -> usize {
        self.base.n()
    }
    fn horizon(&self) -> usize {
        self.base.horizon()
    }
    fn eval(&self, k: usize, lambda: f64) -> DenseMat {
        &self.r_inv[k + 1] * self.base.eval(k, lambda) * &self.r[k]
    }
    fn try_eval(&self, k: usize, lambda: f64) -> Result<DenseMat> {
        Ok(&self.r_inv[k + 1] * self.base.try_eval(k, lambda)? * &self.r[k])
    }
    fn eval_deriv(&self, k: usize, lambda: f64) -> DenseMat {
        &self.r_inv[k + 1] * self.base.eval_deriv(k, lambda) * &self.r[k]
    }
    fn jump_hints(&self, target: HintTarget, a: f64, b: f64) -> Option<Vec<f64>> {
        match target {
            // rank(S(a) - S(lambda)) is invariant under the transformation
            HintTarget::Rho { .. } => self.base.jump_hints(target, a, b),
            HintTarget::BBlock { k } => {
                let beta = self.renormalized_at?;
                self.base
                    .jump_hints(HintTarget::RenormalizedB { k, beta }, a, b)
            }
            _ => None,
        }
    }
    fn label(&self) -> String {
        format!("transformed {}", self.base.label())
    }
}

/// `Y^{[l]}` principal solution as a list of `2n x n` matrices.
pub fn principal_solution(traj: &FundamentalTrajectory) -> Vec<DenseMat> {
    (0..traj.len()).map(|k| traj.y(k)).collect()
}

/// `(0 I)^T` of the right size for the family.
pub fn initial_basis(n: usize) -> ConjoinedBasis {
    ConjoinedBasis::new_unchecked(lower_identity(n))
}
