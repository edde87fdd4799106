//! Multiplicities of forward and backward focal points of conjoined bases
//! and their sums `l_d`, `l_d*` over `k = 0..=N`.

use serde::{Deserialize, Serialize};

use crate::compidx::{mu, mu_star};
use crate::error::{Error, Result};
use crate::matcore::{
    asymmetry, inertia_with_rank_floor, lower_identity, max_abs, pinv, rank_tol, symmetrize,
    symplectic_inverse, upper_right, DenseMat, ToleranceConfig,
};
use crate::symplectic::{checked_eval, propagate, Anchor, FundamentalTrajectory, SymplecticFamily};

/// Forward focal points lie in `(k, k+1]`, backward ones in `[k, k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalBreakdown {
    pub rank_m: usize,
    pub ind_p: usize,
    /// `rank_m + ind_p`; never exceeds `rank B_k`.
    pub m: usize,
    pub direction: Direction,
    /// Asymmetry of `P` before symmetrization.
    pub p_asymmetry: f64,
}

/// Per-`k` multiplicities along a whole solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalCount {
    pub direction: Direction,
    pub total: usize,
    pub terms: Vec<FocalBreakdown>,
}

fn x_block(y: &DenseMat) -> DenseMat {
    let n = y.ncols();
    y.rows(0, n).into_owned()
}

/// `m_d(Y_k)` (forward) or `m_d*(Y_k)` (backward) for `Y_{k+1} = S_k Y_k`.
///
/// Forward: `M = (I - X_{k+1} X_{k+1}^+) B`, `T = I - M^+ M`,
/// `P = T X_k X_{k+1}^+ B T`. Backward: `M = (I - X_k X_k^+) B^T`,
/// `T = I - M^+ M`, `P = T^T X_{k+1} X_k^+ B^T T`.
pub fn focal_multiplicity(
    yk: &DenseMat,
    yk1: &DenseMat,
    sk: &DenseMat,
    direction: Direction,
    cfg: &ToleranceConfig,
) -> Result<FocalBreakdown> {
    let n = yk.ncols();
    if yk.shape() != (2 * n, n) || yk1.shape() != (2 * n, n) || sk.shape() != (2 * n, 2 * n) {
        return Err(Error::contract("focal_multiplicity: inconsistent shapes"));
    }
    let residual = max_abs(&(yk1 - sk * yk));
    let scale = max_abs(yk1).max(2.0 * n as f64 * max_abs(sk) * max_abs(yk)).max(1.0);
    if residual > cfg.tol_rank * scale {
        return Err(Error::contract(format!(
            "focal_multiplicity: Y_(k+1) differs from S_k Y_k by {residual:.3e}"
        )));
    }
    let id = DenseMat::identity(n, n);
    let b = upper_right(sk);
    let x0 = x_block(yk);
    let x1 = x_block(yk1);
    // `rank P = rank w - rank M - rank Mswap` for the pair behind the
    // comparative-index form of the multiplicity, where `rank w` is
    // `rank X_k` (forward) or `rank X_{k+1}` (backward); it bounds the
    // nonzero eigenvalues of `P` from below
    let (m, p_raw, rank_w, m_swap) = match direction {
        Direction::Forward => {
            let x1p = pinv(&x1, cfg)?;
            let m = (&id - &x1 * &x1p) * &b;
            let t = &id - pinv(&m, cfg)? * &m;
            let p = &t * &x0 * &x1p * &b * &t;
            let m_swap = (&id - &b * pinv(&b, cfg)?) * &x1;
            (m, p, rank_tol(&x0, cfg)?, m_swap)
        }
        Direction::Backward => {
            let bt = b.transpose();
            let x0p = pinv(&x0, cfg)?;
            let m = (&id - &x0 * &x0p) * &bt;
            let t = &id - pinv(&m, cfg)? * &m;
            let p = t.transpose() * &x1 * &x0p * &bt * &t;
            let m_swap = (&id - &bt * pinv(&bt, cfg)?) * &x0;
            (m, p, rank_tol(&x1, cfg)?, m_swap)
        }
    };
    let rank_m = rank_tol(&m, cfg)?;
    let rank_p = rank_w.saturating_sub(rank_m + rank_tol(&m_swap, cfg)?);
    let ind_p = inertia_with_rank_floor(&symmetrize(&p_raw), rank_p, cfg)?.neg;
    Ok(FocalBreakdown {
        rank_m,
        ind_p,
        m: rank_m + ind_p,
        direction,
        p_asymmetry: asymmetry(&p_raw),
    })
}

/// `l_d` or `l_d*` of the solution `ys[0..=N+1]` of the system with
/// coefficients `ss[0..=N]`.
pub fn focal_count_along(
    ys: &[DenseMat],
    ss: &[DenseMat],
    direction: Direction,
    cfg: &ToleranceConfig,
) -> Result<FocalCount> {
    if ys.len() != ss.len() + 1 {
        return Err(Error::contract(format!(
            "focal_count_along: {} solution values for {} coefficients",
            ys.len(),
            ss.len()
        )));
    }
    let terms = ss
        .iter()
        .enumerate()
        .map(|(k, s)| focal_multiplicity(&ys[k], &ys[k + 1], s, direction, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FocalCount {
        direction,
        total: terms.iter().map(|t| t.m).sum(),
        terms,
    })
}

/// Coefficients `S_0(lambda), ..., S_N(lambda)`, checked for symplecticity.
pub fn coefficients(
    fam: &dyn SymplecticFamily,
    lambda: f64,
    cfg: &ToleranceConfig,
) -> Result<Vec<DenseMat>> {
    (0..=fam.horizon())
        .map(|k| checked_eval(fam, k, lambda, cfg))
        .collect()
}

/// Focal count of the principal solution stored in `traj`.
pub fn focal_count_of(
    fam: &dyn SymplecticFamily,
    traj: &FundamentalTrajectory,
    direction: Direction,
    cfg: &ToleranceConfig,
) -> Result<FocalCount> {
    let ss = coefficients(fam, traj.lambda, cfg)?;
    let ys: Vec<DenseMat> = (0..traj.len()).map(|k| traj.y(k)).collect();
    focal_count_along(&ys, &ss, direction, cfg)
}

/// `l_d(Y^{[l]}(lambda))` or `l_d*(Y^{[l]}(lambda))` for the principal
/// solution at `l = 0` (`Anchor::Start`) or `l = N+1` (`Anchor::End`).
pub fn focal_count(
    fam: &dyn SymplecticFamily,
    lambda: f64,
    anchor: Anchor,
    direction: Direction,
    cfg: &ToleranceConfig,
) -> Result<FocalCount> {
    let traj = propagate(fam, lambda, anchor, cfg)?;
    focal_count_of(fam, &traj, direction, cfg)
}

/// Multiplicity through the comparative index of `Y_{k+1}` and
/// `S_k (0 I)^T` (forward) or the dual index of `Y_k` and
/// `S_k^{-1} (0 I)^T` (backward).
pub fn focal_multiplicity_by_index(
    yk: &DenseMat,
    yk1: &DenseMat,
    sk: &DenseMat,
    direction: Direction,
    cfg: &ToleranceConfig,
) -> Result<usize> {
    let e = lower_identity(yk.ncols());
    match direction {
        Direction::Forward => mu(yk1, &(sk * &e), cfg),
        Direction::Backward => mu_star(yk, &(symplectic_inverse(sk) * &e), cfg),
    }
}

/// Multiplicity from fundamental matrices with `Y_k = Z_k (0 I)^T`:
/// forward `mu*(Z_{k+1}^{-1} (0 I)^T, Z_k^{-1} (0 I)^T)`, backward
/// `mu(Z_k^{-1} (0 I)^T, Z_{k+1}^{-1} (0 I)^T)`.
pub fn focal_multiplicity_by_fundamental(
    zk: &DenseMat,
    zk1: &DenseMat,
    direction: Direction,
    cfg: &ToleranceConfig,
) -> Result<usize> {
    let e = lower_identity(zk.nrows() / 2);
    let a = symplectic_inverse(zk) * &e;
    let b = symplectic_inverse(zk1) * &e;
    match direction {
        Direction::Forward => mu_star(&b, &a, cfg),
        Direction::Backward => mu(&a, &b, cfg),
    }
}

/// Recomputes every term of [`focal_count_of`] through both comparative-index
/// representations and fails on the first mismatch.
pub fn verify_focal_count(
    fam: &dyn SymplecticFamily,
    traj: &FundamentalTrajectory,
    direction: Direction,
    cfg: &ToleranceConfig,
) -> Result<FocalCount> {
    let count = focal_count_of(fam, traj, direction, cfg)?;
    let ss = coefficients(fam, traj.lambda, cfg)?;
    for (k, term) in count.terms.iter().enumerate() {
        let by_index = focal_multiplicity_by_index(&traj.y(k), &traj.y(k + 1), &ss[k], direction, cfg)?;
        let by_fund = focal_multiplicity_by_fundamental(&traj.z[k], &traj.z[k + 1], direction, cfg)?;
        if by_index != term.m || by_fund != term.m {
            return Err(Error::Disagreement(format!(
                "{} at lambda = {}, k = {k}, {direction:?}: definition {}, index form {by_index}, \
                 fundamental form {by_fund}",
                fam.label(),
                traj.lambda,
                term.m
            )));
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::rank_tol;
    use crate::systems::{random_monotone_family, trig_family};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn near_multiple(x: f64, period: f64) -> bool {
        let r = (x / period).round();
        (x - r * period).abs() < 1e-9
    }

    /// Case table for `m_d(Y_k^{[0]}(lambda))` of the rotation system.
    fn trig_table(k: usize, lambda: f64) -> usize {
        let k1 = (k + 1) as f64;
        if near_multiple(lambda * k1, PI) && !near_multiple(lambda, PI) {
            return 1;
        }
        negative_product(&[lambda.sin(), (k as f64 * lambda).sin(), (k1 * lambda).sin()])
    }

    /// Sign test on exact sine values; rounding residue of a zero counts as zero.
    fn negative_product(f: &[f64]) -> usize {
        usize::from(f.iter().all(|v| v.abs() > 1e-9) && f.iter().product::<f64>() < 0.0)
    }

    #[test]
    fn trig_multiplicities_follow_case_table() {
        let fam = trig_family(7).unwrap();
        let lambdas = (0..97)
            .map(|i| -3.0 + 0.0713 * i as f64)
            .chain((1..=8).map(|p| PI * p as f64 / 8.0))
            .chain((1..=5).map(|p| PI * p as f64 / 3.0));
        for lambda in lambdas {
            let c = focal_count(&fam, lambda, Anchor::Start, Direction::Forward, &cfg()).unwrap();
            for (k, t) in c.terms.iter().enumerate() {
                assert_eq!(t.m, trig_table(k, lambda), "k = {k}, lambda = {lambda}");
            }
        }
    }

    #[test]
    fn trig_staircase_and_period() {
        let big_n = 5;
        let fam = trig_family(big_n).unwrap();
        for j in 0..=big_n {
            for frac in [0.0, 0.3, 0.9] {
                let lambda = PI * (j as f64 + frac) / (big_n + 1) as f64;
                for shift in [-2.0, 0.0, 1.0, 3.0] {
                    let c = focal_count(
                        &fam,
                        lambda + shift * PI,
                        Anchor::Start,
                        Direction::Forward,
                        &cfg(),
                    )
                    .unwrap();
                    assert_eq!(c.total, j, "lambda = {lambda}, shift = {shift}");
                }
            }
        }
    }

    #[test]
    fn zero_b_block_gives_zero() {
        let s = DenseMat::from_row_slice(2, 2, &[2.0, 0.0, 3.0, 0.5]);
        let y = DenseMat::from_row_slice(2, 1, &[1.0, -4.0]);
        let y1 = &s * &y;
        for d in [Direction::Forward, Direction::Backward] {
            assert_eq!(focal_multiplicity(&y, &y1, &s, d, &cfg()).unwrap().m, 0);
        }
    }

    #[test]
    fn mismatched_step_is_rejected() {
        let s = DenseMat::identity(2, 2);
        let y = DenseMat::from_row_slice(2, 1, &[1.0, 0.0]);
        let y1 = DenseMat::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            focal_multiplicity(&y, &y1, &s, Direction::Forward, &cfg()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn transformed_trig_basis_follows_case_table() {
        let big_n = 5;
        let fam = trig_family(big_n).unwrap();
        let c = cfg();
        for (a, b) in [
            (4.0 * PI / 6.0, 5.0 * PI / 6.0),
            (5.0 * PI / 6.0, 7.0 * PI / 6.0),
            (0.3, 1.9),
        ] {
            let za = propagate(&fam, a, Anchor::End, &c).unwrap();
            let yb = propagate(&fam, b, Anchor::Start, &c).unwrap();
            let ys: Vec<DenseMat> = (0..=big_n + 1)
                .map(|k| symplectic_inverse(&za.z[k]) * yb.y(k))
                .collect();
            let ss: Vec<DenseMat> = (0..=big_n)
                .map(|k| symplectic_inverse(&za.z[k + 1]) * fam.eval(k, b) * &za.z[k])
                .collect();
            let count = focal_count_along(&ys, &ss, Direction::Forward, &c).unwrap();
            let beta = |k: usize| (b - a) * k as f64 + (big_n + 1) as f64 * a;
            for (k, t) in count.terms.iter().enumerate() {
                let expected = if near_multiple(beta(k + 1), PI) && !near_multiple(b - a, PI) {
                    1
                } else {
                    negative_product(&[(b - a).sin(), beta(k).sin(), beta(k + 1).sin()])
                };
                assert_eq!(t.m, expected, "a = {a}, b = {b}, k = {k}");
            }
        }
    }

    #[test]
    fn renormalized_interval_counts_on_trig() {
        let fam = trig_family(5).unwrap();
        let c = cfg();
        for (a, b, expected) in [(4.0 * PI / 6.0, 5.0 * PI / 6.0, 1), (5.0 * PI / 6.0, 7.0 * PI / 6.0, 2)] {
            let za = propagate(&fam, a, Anchor::End, &c).unwrap();
            let yb = propagate(&fam, b, Anchor::Start, &c).unwrap();
            let ys: Vec<DenseMat> = (0..7).map(|k| symplectic_inverse(&za.z[k]) * yb.y(k)).collect();
            let ss: Vec<DenseMat> = (0..6)
                .map(|k| symplectic_inverse(&za.z[k + 1]) * fam.eval(k, b) * &za.z[k])
                .collect();
            assert_eq!(focal_count_along(&ys, &ss, Direction::Forward, &c).unwrap().total, expected);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn index_representations_and_bounds(
            seed in 0u64..10_000,
            n in 1usize..=3,
            big_n in 1usize..=5,
            lambda in -2.0f64..2.0,
        ) {
            let c = cfg();
            let fam = random_monotone_family(seed, n, big_n, 2).unwrap();
            for anchor in [Anchor::Start, Anchor::End] {
                let traj = propagate(&fam, lambda, anchor, &c).unwrap();
                for d in [Direction::Forward, Direction::Backward] {
                    let count = verify_focal_count(&fam, &traj, d, &c).unwrap();
                    for (k, t) in count.terms.iter().enumerate() {
                        let rb = rank_tol(&upper_right(&fam.eval(k, lambda)), &c).unwrap();
                        prop_assert!(t.m <= rb && rb <= n);
                    }
                }
            }
            let fwd = focal_count(&fam, lambda, Anchor::Start, Direction::Forward, &c).unwrap();
            let bwd = focal_count(&fam, lambda, Anchor::End, Direction::Backward, &c).unwrap();
            prop_assert_eq!(fwd.total, bwd.total);
        }
    }

    #[test]
    fn principal_counts_agree_on_trig() {
        let fam = trig_family(6).unwrap();
        for i in 0..40 {
            let lambda = -4.0 + 0.21 * i as f64;
            let fwd = focal_count(&fam, lambda, Anchor::Start, Direction::Forward, &cfg()).unwrap();
            let bwd = focal_count(&fam, lambda, Anchor::End, Direction::Backward, &cfg()).unwrap();
            assert_eq!(fwd.total, bwd.total, "lambda = {lambda}");
        }
    }
}
