//! Built-in system families and random generators.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    from_blocks, inertia_neg, is_symplectic, j_matrix, rank_tol, symmetric_eigenvalues, DenseMat,
    ToleranceConfig,
};
use crate::symplectic::{HintTarget, SymplecticFamily};

/// Points `offset + period * l` in `(a, b]`, with a small snap tolerance at
/// both ends; the scanner makes the final membership decision.
pub fn lattice_points(offset: f64, period: f64, a: f64, b: f64) -> Vec<f64> {
    let slack = 1e-9;
    let lo = ((a - offset) / period - slack).ceil() as i64;
    let hi = ((b - offset) / period + slack).floor() as i64;
    (lo..=hi).map(|l| offset + period * l as f64).collect()
}

/// Rotation system `S_k(lambda) = [[cos, sin], [-sin, cos]](lambda)`, `n = 1`.
#[derive(Debug, Clone)]
pub struct TrigFamily {
    horizon: usize,
}

pub fn trig_family(horizon: usize) -> Result<TrigFamily> {
    if horizon == 0 {
        return Err(Error::contract("trig family needs N >= 1"));
    }
    Ok(TrigFamily { horizon })
}

/// `[[cos t, sin t], [-sin t, cos t]]`.
pub fn rotation(t: f64) -> DenseMat {
    let (s, c) = t.sin_cos();
    DenseMat::from_row_slice(2, 2, &[c, s, -s, c])
}

impl SymplecticFamily for TrigFamily {
    fn n(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn eval(&self, _k: usize, lambda: f64) -> DenseMat {
        rotation(lambda)
    }
    fn eval_deriv(&self, _k: usize, lambda: f64) -> DenseMat {
        let (s, c) = lambda.sin_cos();
        DenseMat::from_row_slice(2, 2, &[-s, c, -c, -s])
    }
    fn jump_hints(&self, target: HintTarget, a: f64, b: f64) -> Option<Vec<f64>> {
        Some(match target {
            HintTarget::BBlock { .. } => lattice_points(0.0, PI, a, b),
            HintTarget::Eigen => {
                let q = (self.horizon + 1) as f64;
                let lo = (a * q / PI).floor() as i64 - 1;
                let hi = (b * q / PI).ceil() as i64 + 1;
                (lo..=hi).map(|p| PI * p as f64 / q).collect()
            }
            HintTarget::Rho { anchor, .. } => lattice_points(anchor, 2.0 * PI, a, b),
            // every fundamental matrix of this system is a rotation, so the
            // renormalized block is sin(lambda - beta)
            HintTarget::RenormalizedB { beta, .. } => lattice_points(beta, PI, a, b),
        })
    }
    fn label(&self) -> String {
        format!("trig(N={})", self.horizon)
    }
}

/// `S_k(lambda) = [[I, 0], [-lambda W_k, I]] S_k`.
#[derive(Debug, Clone)]
pub struct LinearLambdaFamily {
    w: Vec<DenseMat>,
    s: Vec<DenseMat>,
}

pub fn linear_lambda_family(w: Vec<DenseMat>, s: Vec<DenseMat>) -> Result<LinearLambdaFamily> {
    let cfg = ToleranceConfig::default();
    if w.is_empty() || w.len() != s.len() {
        return Err(Error::contract(
            "linear family needs equally many W_k and S_k, at least one",
        ));
    }
    let n = w[0].nrows();
    for (k, (wk, sk)) in w.iter().zip(&s).enumerate() {
        if wk.shape() != (n, n) || sk.shape() != (2 * n, 2 * n) {
            return Err(Error::contract(format!("linear family: bad shapes at k = {k}")));
        }
        if inertia_neg(wk, &cfg)? > 0 {
            return Err(Error::contract(format!("W_{k} is not positive semidefinite")));
        }
        if !is_symplectic(sk, &cfg)? {
            return Err(Error::contract(format!("S_{k} is not symplectic")));
        }
    }
    Ok(LinearLambdaFamily { w, s })
}

fn lower_shear(q: &DenseMat) -> DenseMat {
    let n = q.nrows();
    let i = DenseMat::identity(n, n);
    from_blocks(&i, &DenseMat::zeros(n, n), q, &i)
}

fn upper_shear(q: &DenseMat) -> DenseMat {
    let n = q.nrows();
    let i = DenseMat::identity(n, n);
    from_blocks(&i, q, &DenseMat::zeros(n, n), &i)
}

impl SymplecticFamily for LinearLambdaFamily {
    fn n(&self) -> usize {
        self.w[0].nrows()
    }
    fn horizon(&self) -> usize {
        self.w.len() - 1
    }
    fn eval(&self, k: usize, lambda: f64) -> DenseMat {
        lower_shear(&(&self.w[k] * -lambda)) * &self.s[k]
    }
    fn eval_deriv(&self, k: usize, _lambda: f64) -> DenseMat {
        let n = self.n();
        let z = DenseMat::zeros(n, n);
        from_blocks(&z, &z, &(-&self.w[k]), &z) * &self.s[k]
    }
    fn jump_hints(&self, target: HintTarget, _a: f64, _b: f64) -> Option<Vec<f64>> {
        match target {
            // the upper block row does not depend on lambda
            HintTarget::BBlock { .. } => Some(Vec::new()),
            // S(a) - S(lambda) = (lambda - a) [[0, 0], [W, 0]] S has constant rank
            HintTarget::Rho { .. } => Some(Vec::new()),
            _ => None,
        }
    }
    fn label(&self) -> String {
        format!("linear(n={}, N={})", self.n(), self.horizon())
    }
}

type BlockMap = Arc<dyn Fn(usize, f64) -> DenseMat + Send + Sync>;

/// Discrete Hamiltonian system with `H_k = [[-C, A^T], [A, B]]`.
#[derive(Clone)]
pub struct HamiltonianFamily {
    n: usize,
    horizon: usize,
    a: BlockMap,
    b: BlockMap,
    c: BlockMap,
    label: String,
}

/// Hamiltonian family from block maps `(k, lambda) -> A_k, B_k, C_k`.
pub fn hamiltonian_family(
    n: usize,
    horizon: usize,
    a: impl Fn(usize, f64) -> DenseMat + Send + Sync + 'static,
    b: impl Fn(usize, f64) -> DenseMat + Send + Sync + 'static,
    c: impl Fn(usize, f64) -> DenseMat + Send + Sync + 'static,
) -> Result<HamiltonianFamily> {
    if n == 0 {
        return Err(Error::contract("hamiltonian family needs n >= 1"));
    }
    Ok(HamiltonianFamily {
        n,
        horizon,
        a: Arc::new(a),
        b: Arc::new(b),
        c: Arc::new(c),
        label: format!("hamiltonian(n={n}, N={horizon})"),
    })
}

/// Affine Hamiltonian `H_k(lambda) = H0_k + lambda H1_k` given as `2n x 2n`
/// symmetric matrices in the layout `[[-C, A^T], [A, B]]`.
pub fn affine_hamiltonian_family(h0: Vec<DenseMat>, h1: Vec<DenseMat>) -> Result<HamiltonianFamily> {
    let cfg = ToleranceConfig::default();
    if h0.is_empty() || h0.len() != h1.len() {
        return Err(Error::contract(
            "hamiltonian family needs equally many H0_k and H1_k, at least one",
        ));
    }
    let dim = h0[0].nrows();
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::contract("hamiltonian blocks must be 2n x 2n"));
    }
    for (k, (p, q)) in h0.iter().zip(&h1).enumerate() {
        if p.shape() != (dim, dim) || q.shape() != (dim, dim) {
            return Err(Error::contract(format!("hamiltonian: bad shape at k = {k}")));
        }
        if crate::matcore::asymmetry(p) > 1e-12 || crate::matcore::asymmetry(q) > 1e-12 {
            return Err(Error::contract(format!("H_{k} is not symmetric")));
        }
        if inertia_neg(q, &cfg)? > 0 {
            return Err(Error::contract(format!(
                "derivative of H_{k} is not positive semidefinite"
            )));
        }
    }
    let n = dim / 2;
    let horizon = h1.len() - 1;
    let h0 = Arc::new(h0);
    let h1 = Arc::new(h1);
    let pick = move |r: usize, c: usize, sign: f64| {
        let h0 = Arc::clone(&h0);
        let h1 = Arc::clone(&h1);
        move |k: usize, lambda: f64| {
            let m = &h0[k] + &h1[k] * lambda;
            m.view((r, c), (n, n)).into_owned() * sign
        }
    };
    let mut fam = hamiltonian_family(n, horizon, pick(n, 0, 1.0), pick(n, n, 1.0), pick(0, 0, -1.0))?;
    fam.label = format!("affine hamiltonian(n={n}, N={horizon})");
    Ok(fam)
}

impl HamiltonianFamily {
    /// The Hamiltonian block `B_k(lambda)`.
    pub fn b_block(&self, k: usize, lambda: f64) -> DenseMat {
        (self.b)(k, lambda)
    }

    pub fn a_block(&self, k: usize, lambda: f64) -> DenseMat {
        (self.a)(k, lambda)
    }

    pub fn c_block(&self, k: usize, lambda: f64) -> DenseMat {
        (self.c)(k, lambda)
    }

    /// `H_k(lambda)`.
    pub fn hamiltonian(&self, k: usize, lambda: f64) -> DenseMat {
        let a = self.a_block(k, lambda);
        from_blocks(&(-self.c_block(k, lambda)), &a.transpose(), &a, &self.b_block(k, lambda))
    }
}

impl SymplecticFamily for HamiltonianFamily {
    fn n(&self) -> usize {
        self.n
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn eval(&self, k: usize, lambda: f64) -> DenseMat {
        self.try_eval(k, lambda)
            .unwrap_or_else(|_| DenseMat::from_element(2 * self.n, 2 * self.n, f64::NAN))
    }
    fn try_eval(&self, k: usize, lambda: f64) -> Result<DenseMat> {
        let n = self.n;
        let a = (self.a)(k, lambda);
        let b = (self.b)(k, lambda);
        let c = (self.c)(k, lambda);
        let i = DenseMat::identity(n, n);
        let inv = (&i - &a).try_inverse().filter(|m| m.iter().all(|v| v.is_finite()));
        let Some(e) = inv else {
            return Err(Error::contract(format!(
                "{}: I - A_{k}({lambda}) is singular",
                self.label
            )));
        };
        let top_right = &e * &b;
        let bottom_left = &c * &e;
        let bottom_right = &c * &top_right + &i - a.transpose();
        Ok(from_blocks(&e, &top_right, &bottom_left, &bottom_right))
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Random symmetric `n x n` matrix with entries uniform in `[-1, 1]`.
pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> DenseMat {
    let m = DenseMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

/// Random positive semidefinite `M^T M` with `M` of `r x n`, `r` uniform in
/// `1..=n`, and entries uniform in `[-1, 1]`.
pub fn random_psd(rng: &mut impl Rng, n: usize) -> DenseMat {
    let r = rng.random_range(1..=n);
    let m = DenseMat::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
    m.transpose() * m
}

/// `J` acting on the coordinate pairs `(i, n + i)` with `mask[i]` set.
fn partial_j(mask: &[bool]) -> DenseMat {
    let n = mask.len();
    let mut p = DenseMat::identity(2 * n, 2 * n);
    for (i, &on) in mask.iter().enumerate() {
        if on {
            p[(i, i)] = 0.0;
            p[(n + i, n + i)] = 0.0;
            p[(i, n + i)] = 1.0;
            p[(n + i, i)] = -1.0;
        }
    }
    p
}

fn random_factor(rng: &mut impl Rng, n: usize, sym: impl Fn(&mut dyn FnMut() -> f64) -> DenseMat) -> DenseMat {
    let mut draw = || rng.random_range(0.0..1.0);
    let choice = draw();
    if choice < 0.35 {
        lower_shear(&sym(&mut draw))
    } else if choice < 0.7 {
        upper_shear(&sym(&mut draw))
    } else if choice < 0.85 {
        j_matrix(n)
    } else {
        let mask: Vec<bool> = (0..n).map(|_| draw() < 0.5).collect();
        partial_j(&mask)
    }
}

/// Random symplectic matrix: a product of `m` shears with symmetric
/// parameters, full and partial `J` factors.
pub fn random_symplectic(rng: &mut impl Rng, n: usize, m: usize) -> DenseMat {
    let mut z = DenseMat::identity(2 * n, 2 * n);
    for _ in 0..m {
        let f = random_factor(rng, n, |u| {
            let raw = DenseMat::from_fn(n, n, |_, _| 2.0 * u() - 1.0);
            (&raw + raw.transpose()) * 0.5
        });
        z = f * z;
    }
    z
}

/// Like [`random_symplectic`] but with shear parameters in `{-1, 0, 1}`, so
/// that products are exact and singular blocks occur with positive
/// probability.
pub fn random_integer_symplectic(rng: &mut impl Rng, n: usize, m: usize) -> DenseMat {
    let mut z = DenseMat::identity(2 * n, 2 * n);
    for _ in 0..m {
        let f = random_factor(rng, n, |u| {
            let mut q = DenseMat::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = (3.0 * u()).floor() - 1.0;
                    q[(i, j)] = v;
                    q[(j, i)] = v;
                }
            }
            q
        });
        z = f * z;
    }
    z
}

/// One lambda-dependent factor `[[I, 0], [-lambda W, I]]` or `[[I, lambda V], [0, I]]`.
#[derive(Debug, Clone)]
pub enum MonotoneFactor {
    Lower(DenseMat),
    Upper(DenseMat),
}

impl MonotoneFactor {
    fn eval(&self, lambda: f64) -> DenseMat {
        match self {
            MonotoneFactor::Lower(w) => lower_shear(&(w * -lambda)),
            MonotoneFactor::Upper(v) => upper_shear(&(v * lambda)),
        }
    }

    fn deriv(&self) -> DenseMat {
        let n = match self {
            MonotoneFactor::Lower(w) | MonotoneFactor::Upper(w) => w.nrows(),
        };
        let z = DenseMat::zeros(n, n);
        match self {
            MonotoneFactor::Lower(w) => from_blocks(&z, &z, &(-w), &z),
            MonotoneFactor::Upper(v) => from_blocks(&z, v, &z, &z),
        }
    }
}

/// `S_k(lambda) = G_{k,m} L_m(lambda) ... G_{k,1} L_1(lambda) G_{k,0}`.
#[derive(Debug, Clone)]
pub struct RandomMonotoneFamily {
    n: usize,
    g: Vec<Vec<DenseMat>>,
    factors: Vec<Vec<MonotoneFactor>>,
    label: String,
}

impl RandomMonotoneFamily {
    /// Assemble from explicit parts; `g[k]` has one more entry than `factors[k]`.
    pub fn from_parts(g: Vec<Vec<DenseMat>>, factors: Vec<Vec<MonotoneFactor>>) -> Result<Self> {
        let cfg = ToleranceConfig::default();
        if g.is_empty() || g.len() != factors.len() {
            return Err(Error::contract("monotone family: mismatched part lists"));
        }
        let n = g[0][0].nrows() / 2;
        for (k, (gk, fk)) in g.iter().zip(&factors).enumerate() {
            if gk.len() != fk.len() + 1 {
                return Err(Error::contract(format!(
                    "monotone family: k = {k} needs {} constant factors",
                    fk.len() + 1
                )));
            }
            for m in gk {
                if m.shape() != (2 * n, 2 * n) || !is_symplectic(m, &cfg)? {
                    return Err(Error::contract(format!(
                        "monotone family: constant factor at k = {k} is not symplectic"
                    )));
                }
            }
            for f in fk {
                let (MonotoneFactor::Lower(w) | MonotoneFactor::Upper(w)) = f;
                if w.shape() != (n, n) || symmetric_eigenvalues(w)?.first().copied().unwrap_or(0.0) < -1e-12 {
                    return Err(Error::contract(format!(
                        "monotone family: factor at k = {k} is not positive semidefinite"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            label: format!("monotone(n={n}, N={})", g.len() - 1),
            g,
            factors,
        })
    }
}

/// Deterministic random family with `m` monotone factors per step.
pub fn random_monotone_family(
    seed: u64,
    n: usize,
    horizon: usize,
    m: usize,
) -> Result<RandomMonotoneFamily> {
    if n == 0 || m == 0 {
        return Err(Error::contract("random family needs n >= 1 and m >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Vec::with_capacity(horizon + 1);
    let mut factors = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        g.push((0..=m).map(|_| random_symplectic(&mut rng, n, 2)).collect());
        factors.push(
            (0..m)
                .map(|_| {
                    let w = random_psd(&mut rng, n);
                    if rng.random_bool(0.5) {
                        MonotoneFactor::Lower(w)
                    } else {
                        MonotoneFactor::Upper(w)
                    }
                })
                .collect(),
        );
    }
    let mut fam = RandomMonotoneFamily::from_parts(g, factors)?;
    fam.label = format!("random(seed={seed}, n={n}, N={horizon}, m={m})");
    Ok(fam)
}

impl SymplecticFamily for RandomMonotoneFamily {
    fn n(&self) -> usize {
        self.n
    }
    fn horizon(&self) -> usize {
        self.g.len() - 1
    }
    fn eval(&self, k: usize, lambda: f64) -> DenseMat {
        let g = &self.g[k];
        let mut s = g[0].clone();
        for (j, f) in self.factors[k].iter().enumerate() {
            s = &g[j + 1] * f.eval(lambda) * s;
        }
        s
    }
    fn eval_deriv(&self, k: usize, lambda: f64) -> DenseMat {
        let g = &self.g[k];
        let fs = &self.factors[k];
        let dim = 2 * self.n;
        let mut total = DenseMat::zeros(dim, dim);
        for d in 0..fs.len() {
            let mut s = g[0].clone();
            for (j, f) in fs.iter().enumerate() {
                let l = if j == d { f.deriv() } else { f.eval(lambda) };
                s = &g[j + 1] * l * s;
            }
            total += s;
        }
        total
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Random affine Hamiltonian family with `I - A_k(lambda)` invertible for
/// `|lambda| <= 3`: `||A0||_F <= 0.2` and `||A1||_F <= 0.15`.
pub fn random_hamiltonian_family(seed: u64, n: usize, horizon: usize) -> Result<HamiltonianFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    for _ in 0..=horizon {
        let mut a0 = DenseMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        a0 *= 0.2 / a0.norm().max(1.0);
        let b0 = random_symmetric(&mut rng, n) * 2.0;
        let c0 = random_symmetric(&mut rng, n) * 2.0;
        h0.push(from_blocks(&(-c0), &a0.transpose(), &a0, &b0));

        // t M^T M + (1 - t) diag(P, R) with the off-diagonal block shrunk
        let m = DenseMat::from_fn(2 * n, 2 * n, |_, _| rng.random_range(-1.0..1.0));
        let full = m.transpose() * m;
        let off = full.view((n, 0), (n, n)).norm();
        let t = if off > 0.15 { 0.15 / off } else { 1.0 };
        let mut h = full.clone();
        for i in 0..n {
            for j in 0..n {
                h[(n + i, j)] *= t;
                h[(j, n + i)] *= t;
            }
        }
        h1.push(h);
    }
    let mut fam = affine_hamiltonian_family(h0, h1)?;
    fam.label = format!("random hamiltonian(seed={seed}, n={n}, N={horizon})");
    Ok(fam)
}

/// Serializable description of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilySpec {
    Trig {
        #[serde(rename = "N")]
        horizon: usize,
    },
    Linear {
        /// Row-major `W_k`.
        w: Vec<Vec<Vec<f64>>>,
        /// Row-major constant symplectic `S_k`.
        s: Vec<Vec<Vec<f64>>>,
    },
    Hamiltonian {
        /// Row-major `H0_k` in the layout `[[-C, A^T], [A, B]]`.
        h0: Vec<Vec<Vec<f64>>>,
        h1: Vec<Vec<Vec<f64>>>,
    },
    Random {
        seed: u64,
        n: usize,
        #[serde(rename = "N")]
        horizon: usize,
        #[serde(default = "default_factors")]
        factors: usize,
    },
    RandomHamiltonian {
        seed: u64,
        n: usize,
        #[serde(rename = "N")]
        horizon: usize,
    },
}

fn default_factors() -> usize {
    2
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DenseMat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::contract("matrix rows must be nonempty and of equal length"));
    }
    Ok(DenseMat::from_fn(r, c, |i, j| rows[i][j]))
}

pub(crate) fn matrices(list: &[Vec<Vec<f64>>]) -> Result<Vec<DenseMat>> {
    list.iter().map(|m| matrix_from_rows(m)).collect()
}

impl FamilySpec {
    pub fn build(&self) -> Result<Arc<dyn SymplecticFamily>> {
        Ok(match self {
            FamilySpec::Trig { horizon } => Arc::new(trig_family(*horizon)?),
            FamilySpec::Linear { w, s } => Arc::new(linear_lambda_family(matrices(w)?, matrices(s)?)?),
            FamilySpec::Hamiltonian { h0, h1 } => {
                Arc::new(affine_hamiltonian_family(matrices(h0)?, matrices(h1)?)?)
            }
            FamilySpec::Random {
                seed,
                n,
                horizon,
                factors,
            } => Arc::new(random_monotone_family(*seed, *n, *horizon, *factors)?),
            FamilySpec::RandomHamiltonian { seed, n, horizon } => {
                Arc::new(random_hamiltonian_family(*seed, *n, *horizon)?)
            }
        })
    }
}

/// Rank of the Hamiltonian block `B_k(lambda)` against the `B` block of the
/// assembled symplectic matrix.
pub fn hamiltonian_b_ranks(
    fam: &HamiltonianFamily,
    k: usize,
    lambda: f64,
    cfg: &ToleranceConfig,
) -> Result<(usize, usize)> {
    let s = fam.try_eval(k, lambda)?;
    Ok((
        rank_tol(&fam.b_block(k, lambda), cfg)?,
        rank_tol(&crate::matcore::upper_right(&s), cfg)?,
    ))
}
