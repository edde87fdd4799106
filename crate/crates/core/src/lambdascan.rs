//! Left rank drops `rank F(lambda0^-) - rank F(lambda0)` of matrix families
//! `F(lambda)` over half-open intervals `(a, b]`.
//!
//! Families with analytic hints are probed only at the hinted points. Other
//! families go through a generic detector: a grid of step
//! `lambda_min_gap / 4` with bisection wherever neighbouring ranks differ,
//! plus a golden-section search at every local minimum of the critical
//! normalized singular value, since a rank can drop at a single point while
//! both one-sided limits agree.
//!
//! The left-limit rank is the largest rank seen at a few probes strictly
//! inside the constancy interval ending at `lambda0`; the closest probe is
//! `lambda0 - delta_probe`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    asymmetry, inertia_neg, lower_identity, max_abs, rank_from_singular_values, rank_tol,
    singular_values, symmetric_eigenvalues, upper_right, DenseMat, ToleranceConfig,
};
use crate::symplectic::{HintTarget, SymplecticFamily};

/// A continuous matrix-valued function of `lambda`.
pub trait MatrixFamily: Sync {
    fn eval(&self, lambda: f64) -> Result<DenseMat>;

    /// Candidate jump locations in `(a, b]`, a superset of the true ones.
    fn hints(&self, _a: f64, _b: f64) -> Option<Vec<f64>> {
        None
    }

    fn label(&self) -> String;
}

/// [`MatrixFamily`] backed by a closure.
pub struct FnFamily<F> {
    f: F,
    hints: Option<Vec<f64>>,
    label: String,
}

impl<F: Fn(f64) -> DenseMat + Sync> FnFamily<F> {
    pub fn new(label: impl Into<String>, f: F) -> Self {
        Self {
            f,
            hints: None,
            label: label.into(),
        }
    }

    pub fn with_hints(mut self, hints: Vec<f64>) -> Self {
        self.hints = Some(hints);
        self
    }
}

impl<F: Fn(f64) -> DenseMat + Sync> MatrixFamily for FnFamily<F> {
    fn eval(&self, lambda: f64) -> Result<DenseMat> {
        Ok((self.f)(lambda))
    }
    fn hints(&self, a: f64, b: f64) -> Option<Vec<f64>> {
        let h = self.hints.as_ref()?;
        Some(h.iter().copied().filter(|&x| x > a && x <= b).collect())
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub lambda0: f64,
    pub left_rank: usize,
    pub point_rank: usize,
    /// `left_rank - point_rank >= 1`.
    pub multiplicity: usize,
}

/// An event of the `k`-th member of an indexed collection of families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexedEvent {
    pub k: usize,
    #[serde(flatten)]
    pub event: JumpEvent,
}

/// Jump sums of the families `F_0, ..., F_N` over one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSum {
    pub total: usize,
    pub per_k: Vec<usize>,
    /// Sorted by `lambda0`, then `k`.
    pub events: Vec<IndexedEvent>,
}

pub fn total_multiplicity(events: &[JumpEvent]) -> usize {
    events.iter().map(|e| e.multiplicity).sum()
}

struct Scan<'a> {
    fam: &'a dyn MatrixFamily,
    cfg: &'a ToleranceConfig,
}

impl Scan<'_> {
    fn singular_values(&self, lambda: f64) -> Result<Vec<f64>> {
        let m = self.fam.eval(lambda)?;
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericFailure(format!(
                "{}: non-finite value at lambda = {lambda}",
                self.fam.label()
            )));
        }
        singular_values(&m)
    }

    fn rank(&self, lambda: f64) -> Result<usize> {
        Ok(rank_from_singular_values(&self.singular_values(lambda)?, self.cfg))
    }

    /// `sigma_r / max(sigma_1, 1)`: zero exactly when the rank falls below `r`.
    fn profile(s: &[f64], r: usize) -> f64 {
        if r == 0 || s.is_empty() {
            return f64::INFINITY;
        }
        s.get(r - 1).copied().unwrap_or(0.0) / s[0].max(1.0)
    }

    /// First point of `(lo, hi]` whose rank differs from `rank(lo)`.
    fn bisect(&self, mut lo: f64, mut hi: f64, r_lo: usize) -> Result<f64> {
        let tol = 1e-2 * self.cfg.delta_probe;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.rank(mid)? == r_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Minimizer of the profile with fixed `r` on `[lo, hi]`.
    fn golden(&self, mut lo: f64, mut hi: f64, r: usize) -> Result<f64> {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let f = |x: f64| -> Result<f64> { Ok(Self::profile(&self.singular_values(x)?, r)) };
        let mut best = (f(lo)?, lo);
        let fb = f(hi)?;
        if fb < best.0 {
            best = (fb, hi);
        }
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        for _ in 0..200 {
            if f1 < best.0 {
                best = (f1, x1);
            }
            if f2 < best.0 {
                best = (f2, x2);
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
                break;
            }
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = f(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = f(x2)?;
            }
        }
        Ok(best.1)
    }

    fn generic_candidates(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        let step = self.cfg.lambda_min_gap / 4.0;
        let m = ((b - a) / step).ceil().max(1.0) as usize;
        let grid: Vec<f64> = (0..=m)
            .map(|i| if i == m { b } else { a + (b - a) * i as f64 / m as f64 })
            .collect();
        let sv = grid
            .iter()
            .map(|&l| self.singular_values(l))
            .collect::<Result<Vec<_>>>()?;
        let ranks: Vec<usize> = sv
            .iter()
            .map(|s| rank_from_singular_values(s, self.cfg))
            .collect();
        let mut out = Vec::new();
        for i in 1..=m {
            if ranks[i] != ranks[i - 1] {
                out.push(self.bisect(grid[i - 1], grid[i], ranks[i - 1])?);
            }
        }
        for i in 0..=m {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(m);
            let r = *ranks[lo..=hi].iter().max().unwrap_or(&0);
            if r == 0 {
                continue;
            }
            let fi = Self::profile(&sv[i], r);
            let left = i == 0 || fi < Self::profile(&sv[i - 1], r);
            let right = i == m || fi <= Self::profile(&sv[i + 1], r);
            if left && right {
                out.push(self.golden(grid[lo], grid[hi], r)?);
            }
        }
        Ok(out)
    }

    /// Event at `l0` if the rank drops there. Probes within `gap / 2` of
    /// `l0` stay inside its constancy interval; `prev`, the last accepted
    /// event, adds a midpoint probe when it is farther away.
    fn event_at(&self, l0: f64, prev: f64) -> Result<Option<JumpEvent>> {
        let point_rank = self.rank(l0)?;
        let gap = self.cfg.lambda_min_gap;
        let mut probes = vec![l0 - self.cfg.delta_probe, l0 - gap / 4.0, l0 - gap / 2.0];
        if prev.is_finite() && l0 - prev > gap {
            probes.push(0.5 * (prev + l0));
        }
        let mut left_rank = 0;
        for p in probes {
            left_rank = left_rank.max(self.rank(p)?);
        }
        Ok((left_rank > point_rank).then(|| JumpEvent {
            lambda0: l0,
            left_rank,
            point_rank,
            multiplicity: left_rank - point_rank,
        }))
    }

    /// Distance of `F(lambda)` from rank `r - 1`, relative to `max(sigma_1, 1)`.
    fn defect(&self, lambda: f64, r: usize) -> Result<f64> {
        Ok(Self::profile(&self.singular_values(lambda)?, r))
    }

    /// Whether the rank climbs back to `level` somewhere strictly between
    /// `x` and `y`.
    fn recovers_between(&self, x: f64, y: f64, level: usize) -> Result<bool> {
        const SAMPLES: usize = 16;
        for i in 1..SAMPLES {
            if self.rank(x + (y - x) * i as f64 / SAMPLES as f64)? >= level {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// All `lambda0` in `(a, b]` at which the rank of `fam` drops from its left
/// limit, with multiplicities, sorted by `lambda0`.
pub fn scan_rank_jumps(
    fam: &dyn MatrixFamily,
    a: f64,
    b: f64,
    cfg: &ToleranceConfig,
) -> Result<Vec<JumpEvent>> {
    cfg.validate()?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::contract(format!(
            "scan_rank_jumps: need finite a < b, got ({a}, {b}]"
        )));
    }
    let scan = Scan { fam, cfg };
    let snap = 1e-9 * b.abs().max(1.0);
    let lo_cut = a + cfg.delta_probe;
    let raw = match fam.hints(a - snap, b + snap) {
        Some(h) => h,
        None => scan.generic_candidates(a, b)?,
    };
    let mut cands: Vec<f64> = raw
        .into_iter()
        .filter(|x| x.is_finite())
        .map(|x| if (x - b).abs() <= snap.max(cfg.delta_probe * 1e-3) { b } else { x })
        .filter(|&x| x > lo_cut && x <= b)
        .collect();
    cands.push(b);
    cands.sort_by(|x, y| x.total_cmp(y));
    cands.dedup();

    // candidates closer than `merge` describe the same point; keep the one
    // with the largest drop, then the one nearest to exact singularity
    let merge = 10.0 * cfg.delta_probe;
    let mut events: Vec<JumpEvent> = Vec::new();
    let mut best_defect = f64::INFINITY;
    let mut cluster_start = f64::NEG_INFINITY;
    for &c in &cands {
        if c - cluster_start > merge {
            cluster_start = c;
            best_defect = f64::INFINITY;
        }
        let prev = events
            .iter()
            .rev()
            .find(|e| c - e.lambda0 > merge)
            .map_or(a, |e| e.lambda0);
        let Some(e) = scan.event_at(c, prev)? else {
            continue;
        };
        let defect = scan.defect(c, e.left_rank)?;
        match events.last_mut() {
            Some(last) if e.lambda0 - last.lambda0 <= merge => {
                if e.multiplicity > last.multiplicity
                    || (e.multiplicity == last.multiplicity && defect < best_defect)
                {
                    *last = e;
                    best_defect = defect;
                }
            }
            _ => {
                events.push(e);
                best_defect = defect;
            }
        }
    }
    // a drop that persists up to a closer event is the numerical shadow of
    // that event (a singular value crossing the threshold on its way to
    // zero); the pair becomes one drop from the earlier left rank to the
    // later point rank. Drops closer than the gap with a recovery between
    // them are a resolution failure.
    let mut i = 0;
    while i + 1 < events.len() {
        let (e0, e1) = (events[i], events[i + 1]);
        if e1.lambda0 - e0.lambda0 >= cfg.lambda_min_gap {
            i += 1;
        } else if !scan.recovers_between(e0.lambda0, e1.lambda0, e0.point_rank + 1)? {
            let left_rank = e0.left_rank.max(e1.left_rank);
            events[i + 1] = JumpEvent {
                left_rank,
                multiplicity: left_rank - e1.point_rank,
                ..e1
            };
            events.remove(i);
        } else {
            return Err(Error::Resolution {
                first: e0.lambda0,
                second: e1.lambda0,
                gap: cfg.lambda_min_gap,
            });
        }
    }
    Ok(events)
}

fn sum_over_k(
    horizon: usize,
    mut scan_k: impl FnMut(usize) -> Result<Vec<JumpEvent>>,
) -> Result<JumpSum> {
    let mut per_k = Vec::with_capacity(horizon + 1);
    let mut events = Vec::new();
    for k in 0..=horizon {
        let ev = scan_k(k)?;
        per_k.push(total_multiplicity(&ev));
        events.extend(ev.into_iter().map(|event| IndexedEvent { k, event }));
    }
    events.sort_by(|x, y| {
        x.event
            .lambda0
            .total_cmp(&y.event.lambda0)
            .then(x.k.cmp(&y.k))
    });
    Ok(JumpSum {
        total: per_k.iter().sum(),
        per_k,
        events,
    })
}

/// `lambda -> B_k(lambda)`.
pub struct BBlockTarget<'a> {
    pub fam: &'a dyn SymplecticFamily,
    pub k: usize,
}

impl MatrixFamily for BBlockTarget<'_> {
    fn eval(&self, lambda: f64) -> Result<DenseMat> {
        Ok(upper_right(&self.fam.try_eval(self.k, lambda)?))
    }
    fn hints(&self, a: f64, b: f64) -> Option<Vec<f64>> {
        self.fam.jump_hints(HintTarget::BBlock { k: self.k }, a, b)
    }
    fn label(&self) -> String {
        format!("B_{} of {}", self.k, self.fam.label())
    }
}

/// `lambda -> X_{N+1}(lambda)` of the principal solution at 0.
pub struct EigenTarget<'a> {
    pub fam: &'a dyn SymplecticFamily,
}

impl MatrixFamily for EigenTarget<'_> {
    fn eval(&self, lambda: f64) -> Result<DenseMat> {
        let n = self.fam.n();
        let mut y = lower_identity(n);
        for k in 0..=self.fam.horizon() {
            y = self.fam.try_eval(k, lambda)? * y;
        }
        Ok(y.rows(0, n).into_owned())
    }
    fn hints(&self, a: f64, b: f64) -> Option<Vec<f64>> {
        self.fam.jump_hints(HintTarget::Eigen, a, b)
    }
    fn label(&self) -> String {
        format!("X_(N+1) of {}", self.fam.label())
    }
}

/// `lambda -> S_k(anchor) - S_k(lambda)`.
pub struct RhoTarget<'a> {
    pub fam: &'a dyn SymplecticFamily,
    pub k: usize,
    pub anchor: f64,
    s_anchor: DenseMat,
}

impl<'a> RhoTarget<'a> {
    pub fn new(fam: &'a dyn SymplecticFamily, k: usize, anchor: f64) -> Result<Self> {
        Ok(Self {
            s_anchor: fam.try_eval(k, anchor)?,
            fam,
            k,
            anchor,
        })
    }
}

impl MatrixFamily for RhoTarget<'_> {
    fn eval(&self, lambda: f64) -> Result<DenseMat> {
        Ok(&self.s_anchor - self.fam.try_eval(self.k, lambda)?)
    }
    fn hints(&self, a: f64, b: f64) -> Option<Vec<f64>> {
        self.fam.jump_hints(
            HintTarget::Rho {
                k: self.k,
                anchor: self.anchor,
            },
            a,
            b,
        )
    }
    fn label(&self) -> String {
        format!("S_{}({}) - S_{} of {}", self.k, self.anchor, self.k, self.fam.label())
    }
}

/// `sum_{a < nu <= b} sum_k vartheta_k(nu)`: rank drops of the blocks `B_k`.
pub fn vartheta_sum(
    fam: &dyn SymplecticFamily,
    a: f64,
    b: f64,
    cfg: &ToleranceConfig,
) -> Result<JumpSum> {
    sum_over_k(fam.horizon(), |k| {
        scan_rank_jumps(&BBlockTarget { fam, k }, a, b, cfg)
    })
}

/// Finite eigenvalues in `(a, b]`: rank drops of `X_{N+1}` of the principal
/// solution at 0, with algebraic multiplicities.
pub fn theta_jumps(
    fam: &dyn SymplecticFamily,
    a: f64,
    b: f64,
    cfg: &ToleranceConfig,
) -> Result<Vec<JumpEvent>> {
    scan_rank_jumps(&EigenTarget { fam }, a, b, cfg)
}

/// `sum_{a < nu <= b} sum_k rho_k(nu)` with `rho_k` the rank drops of
/// `S_k(a) - S_k(lambda)`.
pub fn rho_sum(fam: &dyn SymplecticFamily, a: f64, b: f64, cfg: &ToleranceConfig) -> Result<JumpSum> {
    rho_sum_anchored(fam, a, a, b, cfg)
}

/// Rank drops of `S_k(anchor) - S_k(lambda)` over `(a, b]`.
pub fn rho_sum_anchored(
    fam: &dyn SymplecticFamily,
    anchor: f64,
    a: f64,
    b: f64,
    cfg: &ToleranceConfig,
) -> Result<JumpSum> {
    sum_over_k(fam.horizon(), |k| {
        scan_rank_jumps(&RhoTarget::new(fam, k, anchor)?, a, b, cfg)
    })
}

/// Rank drops of `What - W(lambda)` over `(a, b]`.
pub fn rho_general(
    w: &dyn MatrixFamily,
    what: &DenseMat,
    a: f64,
    b: f64,
    cfg: &ToleranceConfig,
) -> Result<Vec<JumpEvent>> {
    let target = FnFamily::new(format!("What - {}", w.label()), |l| match w.eval(l) {
        Ok(m) => what - m,
        Err(_) => DenseMat::from_element(what.nrows(), what.ncols(), f64::NAN),
    });
    scan_rank_jumps(&target, a, b, cfg)
}

/// `ind Q(a) - ind Q(b)` for a symmetric nondecreasing family, after a
/// sampled check of symmetry and monotonicity on `[a, b]`.
pub fn monotone_index_jump(
    q: &dyn MatrixFamily,
    a: f64,
    b: f64,
    cfg: &ToleranceConfig,
) -> Result<usize> {
    if !(a < b) {
        return Err(Error::contract("monotone_index_jump: need a < b"));
    }
    const SAMPLES: usize = 64;
    let mut prev = q.eval(a)?;
    for i in 0..=SAMPLES {
        let l = a + (b - a) * i as f64 / SAMPLES as f64;
        let cur = q.eval(l)?;
        let scale = max_abs(&cur).max(1.0);
        if asymmetry(&cur) > 1e2 * cfg.tol_symp * scale {
            return Err(Error::contract(format!(
                "{}: not symmetric at lambda = {l}",
                q.label()
            )));
        }
        let lowest = symmetric_eigenvalues(&(&cur - &prev))?
            .first()
            .copied()
            .unwrap_or(0.0);
        if lowest < -cfg.tol_eig * scale {
            return Err(Error::contract(format!(
                "{}: decreases before lambda = {l} (eigenvalue {lowest:.3e})",
                q.label()
            )));
        }
        prev = cur;
    }
    let ia = inertia_neg(&q.eval(a)?, cfg)?;
    let ib = inertia_neg(&q.eval(b)?, cfg)?;
    ia.checked_sub(ib).ok_or_else(|| {
        Error::contract(format!(
            "{}: index grows from {ia} to {ib} on a nondecreasing family",
            q.label()
        ))
    })
}

/// Rank of a family at one point; convenience for constancy checks.
pub fn rank_at(fam: &dyn MatrixFamily, lambda: f64, cfg: &ToleranceConfig) -> Result<usize> {
    rank_tol(&fam.eval(lambda)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compidx::mu_augmented;
    use crate::symplectic::WithoutHints;
    use crate::systems::{random_monotone_family, random_psd, random_symmetric, random_symplectic, trig_family};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn scalar(v: f64) -> DenseMat {
        DenseMat::from_element(1, 1, v)
    }

    #[test]
    fn sine_drops_once_at_pi() {
        let fam = FnFamily::new("sin", |l: f64| scalar(l.sin()));
        let ev = scan_rank_jumps(&fam, 0.0, 1.5 * PI, &cfg()).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].lambda0 - PI).abs() < 1e-9);
        assert_eq!((ev[0].left_rank, ev[0].point_rank, ev[0].multiplicity), (1, 0, 1));
    }

    #[test]
    fn endpoint_conventions() {
        let fam = FnFamily::new("sin", |l: f64| scalar(l.sin()));
        // jump at a is excluded, jump at b included
        let ev = scan_rank_jumps(&fam, PI, 2.0 * PI, &cfg()).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].lambda0 - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn constant_family_has_no_events() {
        let fam = FnFamily::new("const", |_| DenseMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert!(scan_rank_jumps(&fam, -1.0, 1.0, &cfg()).unwrap().is_empty());
    }

    #[test]
    fn trig_eigenvalues_with_and_without_hints() {
        let fam = trig_family(5).unwrap();
        let c = cfg();
        let hinted = theta_jumps(&fam, 0.0, PI, &c).unwrap();
        let plain = theta_jumps(&WithoutHints(&fam), 0.0, PI, &c).unwrap();
        assert_eq!(hinted.len(), 6);
        assert_eq!(plain.len(), 6);
        for (p, (h, g)) in hinted.iter().zip(&plain).enumerate() {
            let expected = PI * (p + 1) as f64 / 6.0;
            assert!((h.lambda0 - expected).abs() < 1e-9);
            assert!((g.lambda0 - expected).abs() < 1e-9);
            assert_eq!(h.multiplicity, 1);
            assert_eq!(g.multiplicity, 1);
        }
    }

    #[test]
    fn trig_vartheta_examples() {
        let big_n = 5;
        let fam = trig_family(big_n).unwrap();
        let q = (big_n + 1) as f64;
        let c = cfg();
        let s = vartheta_sum(&fam, (big_n as f64 - 1.0) * PI / q, big_n as f64 * PI / q, &c).unwrap();
        assert_eq!(s.total, 0);
        let s = vartheta_sum(&fam, big_n as f64 * PI / q, (big_n as f64 + 2.0) * PI / q, &c).unwrap();
        assert_eq!(s.total, big_n + 1);
        assert!(s.per_k.iter().all(|&v| v == 1));
        let plain = vartheta_sum(&WithoutHints(&fam), big_n as f64 * PI / q, (big_n as f64 + 2.0) * PI / q, &c)
            .unwrap();
        assert_eq!(plain.per_k, s.per_k);
    }

    #[test]
    fn trig_hints_are_exhaustive() {
        let c = cfg();
        for big_n in [1, 3, 4] {
            let fam = trig_family(big_n).unwrap();
            for (a, b) in [(-1.3, 2.2), (0.4, 4.0), (3.0, 7.1)] {
                let h = theta_jumps(&fam, a, b, &c).unwrap();
                let g = theta_jumps(&WithoutHints(&fam), a, b, &c).unwrap();
                assert_eq!(h.len(), g.len());
                for (x, y) in h.iter().zip(&g) {
                    assert!((x.lambda0 - y.lambda0).abs() < 1e-8);
                    assert_eq!(x.multiplicity, y.multiplicity);
                }
                let hr = rho_sum(&fam, a, b, &c).unwrap();
                let gr = rho_sum(&WithoutHints(&fam), a, b, &c).unwrap();
                assert_eq!(hr.per_k, gr.per_k);
                let hv = vartheta_sum(&fam, a, b, &c).unwrap();
                let gv = vartheta_sum(&WithoutHints(&fam), a, b, &c).unwrap();
                assert_eq!(hv.per_k, gv.per_k);
            }
        }
    }

    #[test]
    fn trig_rho_on_short_interval() {
        let fam = trig_family(5).unwrap();
        let s = rho_sum(&fam, 4.0 * PI / 6.0, 5.0 * PI / 6.0, &cfg()).unwrap();
        assert_eq!(s.total, 0);
    }

    #[test]
    fn monotone_index_examples() {
        let c = cfg();
        let q = FnFamily::new("lambda", |l: f64| scalar(l));
        assert_eq!(monotone_index_jump(&q, -1.0, 1.0, &c).unwrap(), 1);
        let ev = scan_rank_jumps(&q, -1.0, 1.0, &c).unwrap();
        assert_eq!(ev.len(), 1);
        assert!(ev[0].lambda0.abs() < 1e-9);

        let q = FnFamily::new("diag", |l: f64| {
            DenseMat::from_diagonal(&nalgebra::DVector::from_vec(vec![l - 1.0, l + 1.0]))
        });
        assert_eq!(monotone_index_jump(&q, -2.0, 2.0, &c).unwrap(), 2);
        assert_eq!(total_multiplicity(&scan_rank_jumps(&q, -2.0, 2.0, &c).unwrap()), 2);

        let q = FnFamily::new("const", |_| scalar(-3.0));
        assert_eq!(monotone_index_jump(&q, -2.0, 2.0, &c).unwrap(), 0);

        let q = FnFamily::new("decreasing", |l: f64| scalar(-l));
        assert!(matches!(monotone_index_jump(&q, -2.0, 2.0, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn close_jumps_are_a_resolution_error() {
        let fam = FnFamily::new("two", |l: f64| scalar(1e2 * l * (l - 7e-4)));
        assert!(matches!(
            scan_rank_jumps(&fam, -1.0, 1.0, &cfg()),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn events_separate_constant_rank_pieces() {
        let c = cfg();
        let fam = random_monotone_family(7, 2, 3, 2).unwrap();
        let (a, b) = (-1.5, 1.5);
        let ev = theta_jumps(&fam, a, b, &c).unwrap();
        let target = EigenTarget { fam: &fam };
        let mut edges = vec![a];
        edges.extend(ev.iter().map(|e| e.lambda0));
        edges.push(b);
        for w in edges.windows(2) {
            let len = w[1] - w[0];
            if len < 4.0 * c.delta_probe {
                continue;
            }
            let r: Vec<usize> = [0.25, 0.5, 0.75]
                .iter()
                .map(|t| rank_at(&target, w[0] + t * len, &c).unwrap())
                .collect();
            assert!(r.iter().all(|&v| v == r[0]), "{w:?}: {r:?}");
        }
        for e in &ev {
            assert!(e.left_rank > e.point_rank && e.lambda0 > a && e.lambda0 <= b);
        }
    }

    fn monotone_q(seed: u64, n: usize) -> impl Fn(f64) -> DenseMat + Sync {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q0 = random_symmetric(&mut rng, n) * 2.0;
        let q1 = random_psd(&mut rng, n);
        let q3 = random_psd(&mut rng, n) * 0.5;
        move |l: f64| &q0 + &q1 * l + &q3 * (l * l * l)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scan_matches_index_jump(seed in 0u64..100_000, n in 1usize..=3) {
            let c = cfg();
            let q = FnFamily::new("Q", monotone_q(seed, n));
            let (a, b) = (-1.5, 1.5);
            let oracle = monotone_index_jump(&q, a, b, &c).unwrap();
            match scan_rank_jumps(&q, a, b, &c) {
                Ok(ev) => prop_assert_eq!(total_multiplicity(&ev), oracle),
                Err(Error::Resolution { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn rho_identities_on_monotone_paths(seed in 0u64..100_000, n in 1usize..=2) {
            let c = cfg();
            let fam = random_monotone_family(seed, n, 0, 2).unwrap();
            let w = FnFamily::new("W", |l| fam.eval(0, l));
            let (a, b) = (-1.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let what = random_symplectic(&mut rng, n, 3);
            let rho = total_multiplicity(&rho_general(&w, &what, a, b, &c).unwrap());
            let theta = vartheta_sum(&fam, a, b, &c).unwrap().total;
            let lhs = rho as i64 - theta as i64;
            let rhs = mu_augmented(&w.eval(a).unwrap(), &what, &c).unwrap() as i64
                - mu_augmented(&w.eval(b).unwrap(), &what, &c).unwrap() as i64;
            prop_assert_eq!(lhs, rhs);

            let wa = w.eval(a).unwrap();
            let wb = w.eval(b).unwrap();
            let ra = total_multiplicity(&rho_general(&w, &wa, a, b, &c).unwrap());
            let rb = total_multiplicity(&rho_general(&w, &wb, a, b, &c).unwrap());
            prop_assert_eq!(rb as i64 - ra as i64, rank_tol(&(&wb - &wa), &c).unwrap() as i64);
        }
    }
}

