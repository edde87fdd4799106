//! Desk-scale invariant suite with a pass/fail matrix.
//!
//! Every trial is seeded from `(seed, check, trial)`, so two runs with the
//! same seed and tolerances produce the same matrix.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compidx::{mu, mu_augmented};
use crate::focal::{focal_count, verify_focal_count, Direction};
use crate::lambdascan::{
    monotone_index_jump, rho_general, scan_rank_jumps, total_multiplicity, vartheta_sum,
    FnFamily, MatrixFamily,
};
use crate::matcore::{inertia_neg, rank_tol, ToleranceConfig};
use crate::osccount::{
    big_l, coefficient_rank_sum, count_eigenvalues, relative_oscillation_numbers, CountMethod,
    CountReport, Pairing,
};
use crate::symplectic::{propagate, wronskian, Anchor, SymplecticFamily};
use crate::systems::{
    random_hamiltonian_family, random_monotone_family, random_psd, random_symmetric,
    random_symplectic, trig_family,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl SelftestReport {
    /// One line per check: status, name, failed/total trials.
    pub fn matrix(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.failures == 0 { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "{status}  {:<44} {:>3}/{:<3}",
                c.name,
                c.trials - c.failures,
                c.trials
            ));
            if let Some(f) = &c.first_failure {
                out.push_str(&format!("  first failure: {f}"));
            }
            out.push('\n');
        }
        out
    }
}

type Trial = std::result::Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Trial {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: crate::Error) -> String {
    e.to_string()
}

fn run(name: &str, trials: usize, f: impl Fn(usize) -> Trial) -> CheckResult {
    let mut failures = 0;
    let mut first_failure = None;
    for t in 0..trials {
        if let Err(msg) = f(t) {
            failures += 1;
            first_failure.get_or_insert(format!("trial {t}: {msg}"));
        }
    }
    CheckResult {
        name: name.into(),
        trials,
        failures,
        first_failure,
    }
}

fn rng_for(seed: u64, check: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (check << 32) ^ trial as u64)
}

fn totals(
    fam: &dyn SymplecticFamily,
    a: f64,
    b: f64,
    methods: &[CountMethod],
    cfg: &ToleranceConfig,
) -> std::result::Result<Vec<CountReport>, String> {
    methods
        .iter()
        .map(|m| count_eigenvalues(fam, a, b, m, cfg).map_err(err))
        .collect()
}

fn all_methods(seed: u64) -> Vec<CountMethod> {
    let mut m = CountMethod::standard();
    for (direction, s) in [(Direction::Forward, seed), (Direction::Backward, seed ^ 1)] {
        m.push(CountMethod::Transformed {
            direction,
            r: None,
            seed: Some(s),
        });
    }
    m
}

fn all_equal(reports: &[CountReport], expected: Option<usize>) -> Trial {
    let want = expected.unwrap_or(reports[0].total);
    ensure(reports.iter().all(|r| r.total == want), || {
        let got: Vec<_> = reports.iter().map(|r| (r.method.as_str(), r.total)).collect();
        format!("expected {want}, got {got:?}")
    })
}

fn term(r: &CountReport, name: &str) -> i64 {
    r.terms.get(name).copied().unwrap_or(i64::MIN)
}

/// Runs the suite with the given tolerances.
pub fn run_selftest(cfg: &ToleranceConfig, seed: u64) -> SelftestReport {
    let mut checks = Vec::new();

    checks.push(run("trig N=5 on (4pi/6, 5pi/6] equals 1", 1, |_| {
        let fam = trig_family(5).map_err(err)?;
        let r = totals(&fam, 4.0 * PI / 6.0, 5.0 * PI / 6.0, &all_methods(seed), cfg)?;
        all_equal(&r, Some(1))
    }));

    checks.push(run("trig N=5 on (5pi/6, 7pi/6] equals 2", 1, |_| {
        let fam = trig_family(5).map_err(err)?;
        let r = totals(&fam, 5.0 * PI / 6.0, 7.0 * PI / 6.0, &all_methods(seed), cfg)?;
        all_equal(&r, Some(2))?;
        let c = &r[0];
        ensure(
            (term(c, "l_d(b)"), term(c, "l_d(a)"), term(c, "vartheta")) == (1, -5, 6),
            || format!("classical terms {:?}", c.terms),
        )?;
        let rn = &r[2];
        ensure((term(rn, "l_d(b)"), term(rn, "n_R")) == (2, 0), || {
            format!("renormalized terms {:?}", rn.terms)
        })
    }));

    checks.push(run("trig N=5 focal staircase and period", 40, |t| {
        let fam = trig_family(5).map_err(err)?;
        let base = PI * ((t % 30) as f64 + 0.37) / 30.0;
        let expected = (6.0 * base / PI).floor() as usize;
        let lambda = if t < 30 { base } else { base + PI * (t as f64 - 34.5).round() };
        let got = focal_count(&fam, lambda, Anchor::Start, Direction::Forward, cfg)
            .map_err(err)?
            .total;
        ensure(got == expected, || format!("l_d at {lambda}: {got}, expected {expected}"))
    }));

    checks.push(run("trig count on (q pi/(N+1), r pi/(N+1)] = r - q", 6, |t| {
        let big_n = [3, 5, 8][t % 3];
        let mut rng = rng_for(seed, 4, t);
        let q: i64 = rng.random_range(-(big_n as i64)..=2 * big_n as i64);
        let r = q + rng.random_range(1..=big_n as i64 + 2);
        let h = PI / (big_n + 1) as f64;
        let fam = trig_family(big_n).map_err(err)?;
        let reports = totals(&fam, q as f64 * h, r as f64 * h, &all_methods(seed + t as u64), cfg)?;
        all_equal(&reports, Some((r - q) as usize))
    }));

    checks.push(run("focal counts of Y[0] and Y[N+1] agree", 12, |t| {
        let (fam, lambda) = random_case(seed, 5, t)?;
        let f = focal_count(&fam, lambda, Anchor::Start, Direction::Forward, cfg).map_err(err)?;
        let b = focal_count(&fam, lambda, Anchor::End, Direction::Backward, cfg).map_err(err)?;
        ensure(f.total == b.total, || format!("{} vs {}", f.total, b.total))
    }));

    checks.push(run("focal multiplicities via comparative index", 12, |t| {
        let (fam, lambda) = random_case(seed, 6, t)?;
        for anchor in [Anchor::Start, Anchor::End] {
            let traj = propagate(&fam, lambda, anchor, cfg).map_err(err)?;
            for d in [Direction::Forward, Direction::Backward] {
                verify_focal_count(&fam, &traj, d, cfg).map_err(err)?;
            }
        }
        Ok(())
    }));

    checks.push(run("mu(Y, Yhat) + mu(Yhat, Y) = rank w", 12, |t| {
        let (fam, lambda) = random_case(seed, 7, t)?;
        let y = propagate(&fam, lambda, Anchor::Start, cfg).map_err(err)?;
        let yh = propagate(&fam, lambda, Anchor::End, cfg).map_err(err)?;
        for k in 0..y.len() {
            let w = wronskian(&y.basis(k), &yh.basis(k)).map_err(err)?;
            let lhs = mu(&y.y(k), &yh.y(k), cfg).map_err(err)? + mu(&yh.y(k), &y.y(k), cfg).map_err(err)?;
            let rhs = rank_tol(&w, cfg).map_err(err)?;
            ensure(lhs == rhs, || format!("k = {k}: {lhs} vs rank w = {rhs}"))?;
        }
        Ok(())
    }));

    checks.push(run("cross-method agreement and L identities", 8, |t| {
        let (fam, _) = random_case(seed, 8, t)?;
        let mut rng = rng_for(seed, 8, t + 1000);
        let a = rng.random_range(-1.0..0.0);
        let b = a + rng.random_range(0.3..1.5);
        let reports = totals(&fam, a, b, &all_methods(seed + t as u64), cfg)?;
        all_equal(&reports, None)?;
        let count = reports[0].total as i64;
        let rel = relative_oscillation_numbers(&fam, a, b, cfg).map_err(err)?;
        let vt = vartheta_sum(&fam, a, b, cfg).map_err(err)?.total as i64;
        ensure(rel.consistent && rel.total + vt == count, || {
            format!("# = {} (consistent {}), vartheta = {vt}, count = {count}", rel.total, rel.consistent)
        })?;
        let c = &reports[0];
        ensure(rel.total == term(c, "l_d(b)") + term(c, "l_d(a)"), || {
            format!("# = {} vs l_d difference {:?}", rel.total, c.terms)
        })?;
        let rank_sum = coefficient_rank_sum(&fam, a, b, cfg).map_err(err)?;
        for p in [Pairing::Principal, Pairing::Swapped] {
            let f = big_l(&fam, a, b, Direction::Forward, p, cfg).map_err(err)?;
            let s = big_l(&fam, a, b, Direction::Backward, p, cfg).map_err(err)?;
            ensure(f.total + s.total == rank_sum, || {
                format!("{p:?}: L_d {} + L_d* {} != {rank_sum}", f.total, s.total)
            })?;
            ensure(
                f.focal + f.transformation == f.total && s.focal + s.transformation == s.total,
                || format!("{p:?}: decomposition {f:?} {s:?}"),
            )?;
        }
        let ls = big_l(&fam, a, b, Direction::Backward, Pairing::Principal, cfg).map_err(err)?;
        let l = big_l(&fam, a, b, Direction::Forward, Pairing::Swapped, cfg).map_err(err)?;
        ensure(ls.total == l.total, || format!("L* = {} vs L = {}", ls.total, l.total))
    }));

    checks.push(run("hamiltonian: rho = 0, L_d = count, vartheta per k", 6, |t| {
        let n = 1 + t % 2;
        let fam = random_hamiltonian_family(seed.wrapping_add(500 + t as u64), n, 3).map_err(err)?;
        let (a, b) = (-0.5, 1.0);
        let oracle = count_eigenvalues(&fam, a, b, &CountMethod::Oracle, cfg).map_err(err)?;
        let inv = count_eigenvalues(&fam, a, b, &CountMethod::Invariant, cfg).map_err(err)?;
        ensure(term(&inv, "rho") == 0, || format!("rho = {}", term(&inv, "rho")))?;
        let l = big_l(&fam, a, b, Direction::Forward, Pairing::Swapped, cfg).map_err(err)?;
        ensure(l.total == oracle.total, || format!("L_d = {}, oracle {}", l.total, oracle.total))?;
        let vt = vartheta_sum(&fam, a, b, cfg).map_err(err)?;
        for k in 0..=fam.horizon() {
            let ia = inertia_neg(&fam.b_block(k, a), cfg).map_err(err)? as i64;
            let ib = inertia_neg(&fam.b_block(k, b), cfg).map_err(err)? as i64;
            let m = mu_augmented(&fam.eval(k, b), &fam.eval(k, a), cfg).map_err(err)? as i64;
            let v = vt.per_k[k] as i64;
            ensure(v == ia - ib && v == m, || {
                format!("k = {k}: vartheta {v}, ind B(a) - ind B(b) = {}, mu = {m}", ia - ib)
            })?;
        }
        Ok(())
    }));

    checks.push(run("monotone Q: scan sum = ind Q(a) - ind Q(b)", 10, |t| {
        let mut rng = rng_for(seed, 10, t);
        let n = 1 + t % 3;
        let q0 = random_symmetric(&mut rng, n) * 2.0;
        let q1 = random_psd(&mut rng, n);
        let q3 = random_psd(&mut rng, n) * 0.5;
        let q = FnFamily::new("Q", move |l: f64| &q0 + &q1 * l + &q3 * (l * l * l));
        let (a, b) = (-1.5, 1.5);
        let jump = monotone_index_jump(&q, a, b, cfg).map_err(err)?;
        let scan = total_multiplicity(&scan_rank_jumps(&q, a, b, cfg).map_err(err)?);
        ensure(scan == jump, || format!("scan {scan}, index jump {jump}"))
    }));

    checks.push(run("rho connection with vartheta and rank identity", 6, |t| {
        let n = 1 + t % 2;
        let fam = random_monotone_family(seed.wrapping_add(700 + t as u64), n, 0, 2).map_err(err)?;
        let w = FnFamily::new("W", |l| fam.eval(0, l));
        let (a, b) = (-1.0, 1.0);
        let mut rng = rng_for(seed, 11, t);
        let what = random_symplectic(&mut rng, n, 3);
        let rho = total_multiplicity(&rho_general(&w, &what, a, b, cfg).map_err(err)?) as i64;
        let theta = vartheta_sum(&fam, a, b, cfg).map_err(err)?.total as i64;
        let wa = w.eval(a).map_err(err)?;
        let wb = w.eval(b).map_err(err)?;
        let rhs = mu_augmented(&wa, &what, cfg).map_err(err)? as i64
            - mu_augmented(&wb, &what, cfg).map_err(err)? as i64;
        ensure(rho - theta == rhs, || format!("rho {rho} - vartheta {theta} != {rhs}"))?;
        let ra = total_multiplicity(&rho_general(&w, &wa, a, b, cfg).map_err(err)?) as i64;
        let rb = total_multiplicity(&rho_general(&w, &wb, a, b, cfg).map_err(err)?) as i64;
        let rk = rank_tol(&(&wb - &wa), cfg).map_err(err)? as i64;
        ensure(rb - ra == rk, || format!("rho(W(b)) {rb} - rho(W(a)) {ra} != rank {rk}"))
    }));

    let passed = checks.iter().all(|c| c.failures == 0);
    SelftestReport {
        seed,
        checks,
        passed,
    }
}

fn random_case(
    seed: u64,
    check: u64,
    trial: usize,
) -> std::result::Result<(impl SymplecticFamily, f64), String> {
    let mut rng = rng_for(seed, check, trial);
    let n = rng.random_range(1..=3);
    let big_n = rng.random_range(1..=4);
    let fam = random_monotone_family(rng.random(), n, big_n, 2).map_err(err)?;
    Ok((fam, rng.random_range(-1.5..1.5)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tolerances_pass_and_repeat() {
        let cfg = ToleranceConfig::default();
        let first = run_selftest(&cfg, 0);
        assert!(first.passed, "\n{}", first.matrix());
        assert_eq!(run_selftest(&cfg, 0), first);
    }

    #[test]
    fn corrupted_rank_tolerance_reports_failures() {
        let cfg = ToleranceConfig {
            tol_rank: 1.0,
            ..ToleranceConfig::default()
        };
        let report = run_selftest(&cfg, 0);
        assert!(!report.passed);
        assert!(report.checks.iter().any(|c| c.failures > 0));
    }
}
