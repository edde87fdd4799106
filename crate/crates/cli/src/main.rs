//! `symposc`: eigenvalue counts, rank-jump scans, monotonicity certificates
//! and the invariant self-test, driven by a JSON config.
//!
//! Exit codes: 0 ok, 1 self-test failure, 2 config error, 3 numeric or
//! contract error (including disagreeing methods).

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use symposc::lambdascan::{scan_rank_jumps, BBlockTarget, EigenTarget, JumpEvent, RhoTarget};
use symposc::osccount::{count_eigenvalues, Agreement, CountMethod, CountReport, ReportEvent};
use symposc::selftest::run_selftest;
use symposc::symplectic::{certify_monotonicity, SymplecticFamily};
use symposc::ToleranceConfig;

use symposc_cli::config::{RunConfig, ScanTarget};
use symposc_cli::output::{self, Format};

#[derive(Parser)]
#[command(name = "symposc", version, about = "Eigenvalue counting for discrete symplectic eigenvalue problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Add the oracle and attach an agreement table to every report.
    #[arg(long, global = true)]
    verify: bool,
    /// Seed for randomized transformations and the self-test trials.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Count eigenvalues in (a, b] with every configured method.
    Count,
    /// List rank-jump events of B-blocks, X_{N+1} or S_k(a) - S_k(lambda).
    Scan {
        /// Overrides `scan_target` in the config.
        #[arg(long, value_enum)]
        target: Option<TargetArg>,
    },
    /// Check Psi_k(lambda) >= 0 on a grid over [a, b].
    Certify,
    /// Run the invariant suite and print the pass/fail matrix.
    Selftest,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TargetArg {
    BBlocks,
    Eigen,
    Rho,
}

enum Failure {
    Selftest,
    Config(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Selftest => 1,
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn numeric(context: &str) -> impl Fn(symposc::Error) -> Failure + '_ {
    move |e| Failure::Numeric(format!("{context}: {e}"))
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required for this command".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(Failure::Config)
}

fn build(cfg: &RunConfig) -> Result<(Arc<dyn SymplecticFamily>, f64, f64), Failure> {
    let fam = cfg
        .family
        .build()
        .map_err(|e| Failure::Config(format!("config: family: {e}")))?;
    let (a, b) = cfg.interval().map_err(Failure::Config)?;
    Ok((fam, a, b))
}

fn emit(cli: &Cli, text: &str) -> Outcome {
    match &cli.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn encode(r: Result<String, String>) -> Result<String, Failure> {
    r.map_err(|e| Failure::Numeric(format!("encoding report: {e}")))
}

fn cmd_count(cli: &Cli) -> Outcome {
    let cfg = load(cli)?;
    let (fam, a, b) = build(&cfg)?;
    let mut methods = cfg.methods(cli.seed).map_err(Failure::Config)?;
    let verify = cli.verify || cfg.verify;
    if verify && !methods.contains(&CountMethod::Oracle) {
        methods.push(CountMethod::Oracle);
    }
    let mut reports = Vec::with_capacity(methods.len());
    for m in &methods {
        let r = count_eigenvalues(&*fam, a, b, m, &cfg.tolerances).map_err(numeric(&m.name()))?;
        reports.push(r);
    }
    if verify {
        let table: Vec<Agreement> = reports
            .iter()
            .map(|r| Agreement {
                method: r.method.clone(),
                total: Some(r.total),
                error: None,
            })
            .collect();
        for r in &mut reports {
            r.agreement = Some(table.clone());
        }
    }
    let text = match cli.format {
        Format::Json => encode(output::to_json(&reports))?,
        Format::Csv => encode(output::reports_to_csv(&reports))?,
    };
    emit(cli, &text)?;
    if reports.iter().any(|r| r.total != reports[0].total) {
        return Err(Failure::Numeric(disagreement(&fam.label(), &reports)));
    }
    Ok(())
}

/// Per-method terms and per-event rows of disagreeing reports.
fn disagreement(label: &str, reports: &[CountReport]) -> String {
    let mut msg = format!("methods disagree for {label}\n");
    for r in reports {
        msg.push_str(&format!("  {:<24} total {:>4}  terms {:?}\n", r.method, r.total, r.terms));
        for e in &r.jump_events {
            msg.push_str(&format!(
                "      {:<6} k={:<4} lambda0={:<22} rank {} -> {}  (+{})\n",
                e.source,
                e.k.map_or("-".into(), |k| k.to_string()),
                e.lambda0,
                e.left_rank,
                e.point_rank,
                e.multiplicity
            ));
        }
    }
    msg
}

fn tag(source: &str, k: Option<usize>, events: Vec<JumpEvent>) -> Vec<ReportEvent> {
    events
        .into_iter()
        .map(|e| ReportEvent {
            source: source.into(),
            k,
            lambda0: e.lambda0,
            left_rank: e.left_rank,
            point_rank: e.point_rank,
            multiplicity: e.multiplicity,
        })
        .collect()
}

fn scan_events(
    fam: &dyn SymplecticFamily,
    target: ScanTarget,
    a: f64,
    b: f64,
    tol: &ToleranceConfig,
) -> Result<Vec<ReportEvent>, Failure> {
    let mut out = Vec::new();
    match target {
        ScanTarget::Eigen => {
            let ev = scan_rank_jumps(&EigenTarget { fam }, a, b, tol).map_err(numeric("X_N+1"))?;
            out.extend(tag("X_N+1", None, ev));
        }
        ScanTarget::BBlocks | ScanTarget::Rho => {
            for k in 0..=fam.horizon() {
                let cell = format!("{target:?} k={k}");
                let ev = if target == ScanTarget::BBlocks {
                    scan_rank_jumps(&BBlockTarget { fam, k }, a, b, tol)
                } else {
                    RhoTarget::new(fam, k, a).and_then(|t| scan_rank_jumps(&t, a, b, tol))
                }
                .map_err(numeric(&cell))?;
                let source = if target == ScanTarget::BBlocks { "B" } else { "rho" };
                out.extend(tag(source, Some(k), ev));
            }
        }
    }
    out.sort_by(|x, y| x.lambda0.total_cmp(&y.lambda0).then(x.k.cmp(&y.k)));
    Ok(out)
}

fn cmd_scan(cli: &Cli, target: Option<TargetArg>) -> Outcome {
    let cfg = load(cli)?;
    let (fam, a, b) = build(&cfg)?;
    let target = match target {
        Some(TargetArg::BBlocks) => ScanTarget::BBlocks,
        Some(TargetArg::Eigen) => ScanTarget::Eigen,
        Some(TargetArg::Rho) => ScanTarget::Rho,
        None => cfg
            .scan_target
            .ok_or_else(|| Failure::Config("scan needs `scan_target` or --target".into()))?,
    };
    let events = scan_events(&*fam, target, a, b, &cfg.tolerances)?;
    let text = match cli.format {
        Format::Json => encode(output::to_json(&events))?,
        Format::Csv => encode(output::events_to_csv(&events))?,
    };
    emit(cli, &text)
}

fn cmd_certify(cli: &Cli) -> Outcome {
    let cfg = load(cli)?;
    let (fam, a, b) = build(&cfg)?;
    let grid = cfg.certify_grid.unwrap_or(symposc::osccount::MONOTONICITY_GRID);
    let report = certify_monotonicity(&*fam, a, b, grid, &cfg.tolerances).map_err(numeric("certify"))?;
    let text = match cli.format {
        Format::Json => encode(output::to_json(&report))?,
        Format::Csv => encode(output::certify_to_csv(&report))?,
    };
    emit(cli, &text)?;
    if !report.pass {
        return Err(Failure::Numeric(format!(
            "Psi_{}({}) has eigenvalue {:.3e}",
            report.argmin.0, report.argmin.1, report.min_eigenvalue
        )));
    }
    Ok(())
}

fn cmd_selftest(cli: &Cli) -> Outcome {
    let tol = match &cli.config {
        Some(_) => load(cli)?.tolerances,
        None => ToleranceConfig::default(),
    };
    let report = run_selftest(&tol, cli.seed);
    if cli.out.is_some() {
        eprint!("{}", report.matrix());
        let text = match cli.format {
            Format::Json => encode(output::to_json(&report))?,
            Format::Csv => encode(output::checks_to_csv(&report.checks))?,
        };
        emit(cli, &text)?;
    } else {
        print!("{}", report.matrix());
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Selftest)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Count => cmd_count(&cli),
        Command::Scan { target } => cmd_scan(&cli, *target),
        Command::Certify => cmd_certify(&cli),
        Command::Selftest => cmd_selftest(&cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Selftest => eprintln!("selftest: failures reported above"),
                Failure::Config(m) | Failure::Numeric(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
