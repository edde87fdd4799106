//! Comparative index of two conjoined bases and the `4n x 2n` augmentation
//! of a symplectic matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    asymmetry, blocks, half_dim, inertia_with_rank_floor, is_symplectic, max_abs, pinv, rank_tol,
    symmetrize,
    DenseMat, ToleranceConfig,
};
use crate::symplectic::{wronskian, ConjoinedBasis};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompIndexBreakdown {
    pub rank_m: usize,
    /// `ind D` for the comparative index, `ind(-D)` for the dual one.
    pub ind_d: usize,
    pub mu: usize,
    #[serde(skip)]
    pub m: DenseMat,
    /// Symmetrized `D`.
    #[serde(skip)]
    pub d: DenseMat,
    /// Asymmetry of `D` before symmetrization.
    pub d_asymmetry: f64,
    pub warning: Option<String>,
}

struct Parts {
    m: DenseMat,
    d: DenseMat,
    rank_m: usize,
    /// `rank w - rank M - rank Mswap`, the rank of `D` in exact arithmetic.
    rank_d: usize,
    asym: f64,
}

fn parts(
    y: &ConjoinedBasis,
    yhat: &ConjoinedBasis,
    rank_w_floor: usize,
    cfg: &ToleranceConfig,
) -> Result<Parts> {
    let n = y.n();
    let w = wronskian(y, yhat)?;
    let x = y.x();
    let xhat = yhat.x();
    let x_pinv = pinv(&x, cfg)?;
    let id = DenseMat::identity(n, n);
    let m = (&id - &x * &x_pinv) * &xhat;
    let rank_m = rank_tol(&m, cfg)?;
    let m_swap = (&id - &xhat * pinv(&xhat, cfg)?) * &x;
    let rank_w = rank_tol(&w, cfg)?.max(rank_w_floor);
    let rank_d = rank_w.saturating_sub(rank_m + rank_tol(&m_swap, cfg)?);
    let t = &id - pinv(&m, cfg)? * &m;
    let d_raw = &t * w.transpose() * &x_pinv * &xhat * &t;
    Ok(Parts {
        asym: asymmetry(&d_raw),
        d: symmetrize(&d_raw),
        m,
        rank_m,
        rank_d,
    })
}

/// Negative and positive counts of `D`. Its eigenvalues scale with the
/// conditioning of `X`, so `rank_d` bounds the nonzero ones from below in
/// addition to the `tol_eig` cut.
fn signs(p: &Parts, cfg: &ToleranceConfig) -> Result<(usize, usize)> {
    let i = inertia_with_rank_floor(&p.d, p.rank_d, cfg)?;
    Ok((i.neg, i.pos))
}

fn finish(p: Parts, ind_d: usize) -> CompIndexBreakdown {
    let scale = max_abs(&p.d);
    let warning = (p.asym > 1e-6 * scale.max(f64::MIN_POSITIVE) && p.asym > 1e-12)
        .then(|| format!("D asymmetry {:.3e} relative to ||D|| = {scale:.3e}", p.asym));
    CompIndexBreakdown {
        rank_m: p.rank_m,
        ind_d,
        mu: p.rank_m + ind_d,
        m: p.m,
        d: p.d,
        d_asymmetry: p.asym,
        warning,
    }
}

/// `mu(Y, Yhat) = rank M + ind D` with `M = (I - X X^+) Xhat`,
/// `T = I - M^+ M` and `D = T w^T X^+ Xhat T`.
pub fn comparative_index(
    y: &ConjoinedBasis,
    yhat: &ConjoinedBasis,
    cfg: &ToleranceConfig,
) -> Result<CompIndexBreakdown> {
    let p = parts(y, yhat, 0, cfg)?;
    let (neg, _) = signs(&p, cfg)?;
    Ok(finish(p, neg))
}

/// `mu*(Y, Yhat) = rank M + ind(-D)`.
pub fn dual_comparative_index(
    y: &ConjoinedBasis,
    yhat: &ConjoinedBasis,
    cfg: &ToleranceConfig,
) -> Result<CompIndexBreakdown> {
    let p = parts(y, yhat, 0, cfg)?;
    let (_, pos) = signs(&p, cfg)?;
    Ok(finish(p, pos))
}

/// Comparative index of two `2n x n` matrices known to be conjoined bases.
pub fn mu(y: &DenseMat, yhat: &DenseMat, cfg: &ToleranceConfig) -> Result<usize> {
    comparative_index(
        &ConjoinedBasis::new_unchecked(y.clone()),
        &ConjoinedBasis::new_unchecked(yhat.clone()),
        cfg,
    )
    .map(|b| b.mu)
}

/// Dual comparative index of two `2n x n` matrices known to be conjoined bases.
pub fn mu_star(y: &DenseMat, yhat: &DenseMat, cfg: &ToleranceConfig) -> Result<usize> {
    dual_comparative_index(
        &ConjoinedBasis::new_unchecked(y.clone()),
        &ConjoinedBasis::new_unchecked(yhat.clone()),
        cfg,
    )
    .map(|b| b.mu)
}

/// `<S>`: the `4n x 2n` conjoined basis with upper half `[[I, 0], [A, B]]`
/// and lower half `[[0, -I], [C, D]]`.
pub fn augment(s: &DenseMat, cfg: &ToleranceConfig) -> Result<ConjoinedBasis> {
    half_dim(s)?;
    if !is_symplectic(s, cfg)? {
        return Err(Error::contract("augment: matrix is not symplectic"));
    }
    Ok(augment_unchecked(s))
}

/// [`augment`] without the symplecticity check.
pub fn augment_unchecked(s: &DenseMat) -> ConjoinedBasis {
    let n = s.nrows() / 2;
    let (a, b, c, d) = blocks(s);
    let mut out = DenseMat::zeros(4 * n, 2 * n);
    for i in 0..n {
        out[(i, i)] = 1.0;
        out[(2 * n + i, n + i)] = -1.0;
    }
    out.view_mut((n, 0), (n, n)).copy_from(&a);
    out.view_mut((n, n), (n, n)).copy_from(&b);
    out.view_mut((3 * n, 0), (n, n)).copy_from(&c);
    out.view_mut((3 * n, n), (n, n)).copy_from(&d);
    ConjoinedBasis::new_unchecked(out)
}

/// `mu(<S>, <Shat>)` for two symplectic matrices of equal size.
pub fn mu_augmented(s: &DenseMat, shat: &DenseMat, cfg: &ToleranceConfig) -> Result<usize> {
    mu_augmented_with_rank_floor(s, shat, 0, cfg)
}

/// [`mu_augmented`] given a lower bound `rank_w` on `rank(Shat - S)`, the
/// rank of the Wronskian, taken from a better conditioned product that
/// equals `Shat - S` up to nonsingular factors.
pub fn mu_augmented_with_rank_floor(
    s: &DenseMat,
    shat: &DenseMat,
    rank_w: usize,
    cfg: &ToleranceConfig,
) -> Result<usize> {
    let p = parts(&augment_unchecked(s), &augment_unchecked(shat), rank_w, cfg)?;
    let (neg, _) = signs(&p, cfg)?;
    Ok(finish(p, neg).mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{lower_identity, p3_matrix};
    use crate::systems::{random_integer_symplectic, random_symplectic};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn basis(y: DenseMat) -> ConjoinedBasis {
        ConjoinedBasis::new(y, &cfg()).unwrap()
    }

    fn upper_identity(n: usize) -> DenseMat {
        let mut y = DenseMat::zeros(2 * n, n);
        for i in 0..n {
            y[(i, i)] = 1.0;
        }
        y
    }

    fn q_over_i(q: &DenseMat) -> DenseMat {
        let n = q.nrows();
        let mut y = DenseMat::zeros(2 * n, n);
        y.view_mut((0, 0), (n, n)).copy_from(q);
        for i in 0..n {
            y[(n + i, i)] = 1.0;
        }
        y
    }

    /// A random conjoined basis `Z (0 I)^T E` with integer-valued `Z`, so that
    /// singular upper blocks occur exactly.
    fn random_pair(seed: u64, n: usize) -> (DenseMat, DenseMat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let one = |rng: &mut ChaCha8Rng| {
            let z = if rng.random_bool(0.5) {
                random_integer_symplectic(rng, n, 3)
            } else {
                random_symplectic(rng, n, 3)
            };
            z * lower_identity(n)
        };
        (one(&mut rng), one(&mut rng))
    }

    #[test]
    fn trivial_pairs() {
        let zi = basis(lower_identity(2));
        assert_eq!(comparative_index(&zi, &zi, &cfg()).unwrap().mu, 0);
        assert_eq!(dual_comparative_index(&zi, &zi, &cfg()).unwrap().mu, 0);
    }

    #[test]
    fn upper_identity_against_q_over_identity() {
        let q = DenseMat::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0]));
        let y = basis(upper_identity(2));
        let yhat = basis(q_over_i(&q));
        assert_eq!(comparative_index(&y, &yhat, &cfg()).unwrap().mu, 1);
        assert_eq!(dual_comparative_index(&y, &yhat, &cfg()).unwrap().mu, 1);

        let q = DenseMat::from_row_slice(3, 3, &[-2., 1., 0., 1., -3., 0., 0., 0., 5.]);
        let yhat = basis(q_over_i(&q));
        let y = basis(upper_identity(3));
        assert_eq!(comparative_index(&y, &yhat, &cfg()).unwrap().mu, 2);
        assert_eq!(dual_comparative_index(&y, &yhat, &cfg()).unwrap().mu, 1);
    }

    #[test]
    fn identity_augmentation() {
        let aug = augment(&DenseMat::identity(4, 4), &cfg()).unwrap();
        let mut expect = DenseMat::zeros(8, 4);
        for i in 0..2 {
            expect[(i, i)] = 1.0;
            expect[(2 + i, i)] = 1.0;
            expect[(4 + i, 2 + i)] = -1.0;
            expect[(6 + i, 2 + i)] = 1.0;
        }
        assert_eq!(aug.y(), &expect);
    }

    #[test]
    fn augment_rejects_non_symplectic() {
        assert!(matches!(
            augment(&(DenseMat::identity(2, 2) * 2.0), &cfg()),
            Err(Error::Contract(_))
        ));
        assert!(augment(&DenseMat::identity(3, 3), &cfg()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn swapped_sum_is_wronskian_rank(seed in any::<u64>(), n in 1usize..=3) {
            let (y, yh) = random_pair(seed, n);
            let (y, yh) = (basis(y), basis(yh));
            let c = cfg();
            let a = comparative_index(&y, &yh, &c).unwrap().mu;
            let b = comparative_index(&yh, &y, &c).unwrap().mu;
            let w = rank_tol(&wronskian(&y, &yh).unwrap(), &c).unwrap();
            prop_assert_eq!(a + b, w);
        }

        #[test]
        fn dual_is_reflected_index(seed in any::<u64>(), n in 1usize..=3) {
            let (y, yh) = random_pair(seed, n);
            let c = cfg();
            let p3 = p3_matrix(n);
            let dual = mu_star(&y, &yh, &c).unwrap();
            let refl = mu(&(&p3 * &y), &(&p3 * &yh), &c).unwrap();
            prop_assert_eq!(dual, refl);
        }

        #[test]
        fn bounded_by_ranks(seed in any::<u64>(), n in 1usize..=3) {
            let (y, yh) = random_pair(seed, n);
            let (y, yh) = (basis(y), basis(yh));
            let c = cfg();
            let m = comparative_index(&y, &yh, &c).unwrap();
            let ms = dual_comparative_index(&y, &yh, &c).unwrap();
            prop_assert_eq!(m.mu, m.rank_m + m.ind_d);
            let rx = rank_tol(&yh.x(), &c).unwrap();
            let rw = rank_tol(&wronskian(&y, &yh).unwrap(), &c).unwrap();
            prop_assert!(m.mu.max(ms.mu) <= rx.min(rw));
            prop_assert!(rx.min(rw) <= n);
        }

        #[test]
        fn invariant_under_change_of_basis(seed in any::<u64>(), n in 1usize..=3) {
            let (y, yh) = random_pair(seed, n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
            let mut invertible = || loop {
                let e = DenseMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                if e.determinant().abs() > 0.2 {
                    return e;
                }
            };
            let c = cfg();
            let base = mu(&y, &yh, &c).unwrap();
            let e1 = invertible();
            let e2 = invertible();
            prop_assert_eq!(mu(&(&y * e1), &(&yh * e2), &c).unwrap(), base);
        }

        #[test]
        fn augmentation_wronskian_rank(seed in any::<u64>(), n in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_integer_symplectic(&mut rng, n, 3);
            let shat = if rng.random_bool(0.3) {
                // share a factor so that S_hat - S is rank deficient
                &s * random_integer_symplectic(&mut rng, n, 1)
            } else {
                random_symplectic(&mut rng, n, 3)
            };
            let c = cfg();
            let a = augment(&s, &c).unwrap();
            let ah = augment(&shat, &c).unwrap();
            let w = rank_tol(&wronskian(&a, &ah).unwrap(), &c).unwrap();
            prop_assert_eq!(w, rank_tol(&(&shat - &s), &c).unwrap());
        }

        #[test]
        fn augmentation_is_conjoined(seed in any::<u64>(), n in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_symplectic(&mut rng, n, 4);
            let a = augment(&s, &cfg()).unwrap();
            prop_assert!(ConjoinedBasis::new(a.into_inner(), &cfg()).is_ok());
        }
    }
}

