//! The four harness verbs: run, sweep, ineq, carrier-check.

use std::path::Path;

use serde::Serialize;

use outflux::carrier::{build_carrier_2d, verify_flux, verify_lemma_a_estimates, BubbleProbe};
use outflux::diagnostics::{build_series, growth_rate, kappa_fit, DiagnosticsSeries};
use outflux::fem::{FemSystem, PowerLaw};
use outflux::geometry::OutletDomain;
use outflux::ineqlab::{
    bogovskii_constant, korn_constant, monotonicity_ratio, poincare_constant, InequalityReport,
};
use outflux::solver::{
    continuation_run, solve_system_partial, SolverConfig, StageSummary,
};
use outflux::vtk::write_solution_file;

use crate::artifacts::{write_json, write_jsonl, write_text};
use crate::config::{ConfigError, ExperimentConfig};
use crate::CliError;

#[derive(Debug, Serialize)]
struct Verdicts {
    converged: bool,
    y_monotone: bool,
    sandwich_holds: bool,
    superlinear: bool,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    version: u32,
    p: f64,
    flux: f64,
    t_final: f64,
    mesh_h: f64,
    window_t: f64,
    seed: u64,
    converged: bool,
    failure: Option<String>,
    stages: Vec<StageSummary>,
    deltas: Vec<f64>,
    iterations_total: usize,
    final_residual: Option<f64>,
    measured_flux: f64,
    kappa: Option<f64>,
    kappa_max_rel_deviation: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    fit_rel_residual: Option<f64>,
    verdicts: Verdicts,
}

struct Metrics {
    measured_flux: f64,
    kappa: Option<f64>,
    kappa_dev: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    fit_rel_residual: Option<f64>,
    superlinear: bool,
    y_monotone: bool,
    sandwich_holds: bool,
}

/// Post-solve diagnostics shared by run summaries and sweep rows.
fn metrics(
    sys: &FemSystem,
    state: &[f64],
    series: &DiagnosticsSeries,
    domain: &OutletDomain,
    window_t: f64,
) -> Metrics {
    let (lo, hi) = domain.walls(0.0);
    let measured_flux = sys.flux_through(state, 0.0, lo, hi);
    let kappa = kappa_fit(sys, state, 1.0, window_t).ok();
    let y = series.combined();
    let slack = 1e-9 * y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let y_monotone = y.windows(2).all(|w| w[1] >= w[0] - slack);
    // z(eta) averages y over (eta - 1, eta]; monotone y pins it between
    // the endpoint values.
    let per_unit = (1.0 / series.spacing).round() as usize;
    let mut sandwich_holds = true;
    for j in per_unit..y.len() {
        let zj = series.z[j];
        if zj < y[j - per_unit] - slack || zj > y[j] + slack {
            sandwich_holds = false;
        }
    }
    let fit_from = series
        .grid
        .iter()
        .position(|t| *t >= 2.0 - 1e-12)
        .unwrap_or(series.grid.len());
    let growth = growth_rate(&series.grid[fit_from..], &y[fit_from..]).ok();
    Metrics {
        measured_flux,
        kappa: kappa.as_ref().map(|k| k.kappa),
        kappa_dev: kappa.as_ref().map(|k| k.max_rel_deviation),
        c1: growth.as_ref().map(|g| g.c1),
        c2: growth.as_ref().map(|g| g.c2),
        fit_rel_residual: growth.as_ref().map(|g| g.rel_residual),
        superlinear: growth.as_ref().map_or(false, |g| g.superlinear),
        y_monotone,
        sandwich_holds,
    }
}

pub fn cmd_run(
    cfg: &ExperimentConfig,
    domain: &OutletDomain,
    out: &Path,
    seed: u64,
) -> Result<i32, CliError> {
    let alpha = cfg.flux.single("flux")?;
    let p = cfg.law.p.single("law.p")?;
    let schedule = cfg.law.t.values();
    if let Some(bad) = schedule.iter().find(|t| **t < cfg.window_t + 1.0) {
        return Err(ConfigError(format!(
            "window_t: {} requires every stage T >= window + 1, but law.t contains {bad}",
            cfg.window_t
        ))
        .into());
    }
    let t_last = *schedule.last().expect("validated nonempty");
    let law = PowerLaw::new(p, t_last).map_err(|e| ConfigError(format!("law: {e}")))?;
    let scfg = SolverConfig::new(law).with_schedule(schedule);
    let rep = continuation_run(domain, alpha, &scfg, cfg.window_t, cfg.mesh_h)?;
    let converged = rep.failure.is_none();

    // Artifacts come from the last completed stage; a run whose first
    // stage failed reports the rest state.
    let t_final = rep.final_t.unwrap_or_else(|| scfg.schedule[0]);
    let mesh = domain
        .truncate(t_final)
        .and_then(|td| td.mesh(cfg.mesh_h))
        .map_err(|e| ConfigError(format!("mesh_h: {e}")))?;
    let carrier = build_carrier_2d(domain, alpha);
    let final_law = PowerLaw::new(p, t_final).map_err(|e| ConfigError(format!("law: {e}")))?;
    let sys = FemSystem::new(&mesh, final_law, &carrier);
    let state = rep
        .final_state
        .clone()
        .unwrap_or_else(|| vec![0.0; sys.n_dofs()]);

    write_jsonl(&out.join("iterations.jsonl"), &rep.log)?;
    write_solution_file(&out.join("solution.vtk"), &sys, &state)?;
    let series = build_series(&sys, &state, cfg.window_t)
        .map_err(|e| ConfigError(format!("window_t: {e}")))?;
    write_text(&out.join("diagnostics.csv"), &series.csv())?;

    let m = metrics(&sys, &state, &series, domain, cfg.window_t);
    let summary = RunSummary {
        version: 1,
        p,
        flux: alpha,
        t_final,
        mesh_h: cfg.mesh_h,
        window_t: cfg.window_t,
        seed,
        converged,
        failure: rep.failure.clone(),
        deltas: rep.deltas.clone(),
        iterations_total: rep.stages.iter().map(|s| s.iterations).sum(),
        final_residual: rep.stages.last().map(|s| s.final_residual),
        stages: rep.stages,
        measured_flux: m.measured_flux,
        kappa: m.kappa,
        kappa_max_rel_deviation: m.kappa_dev,
        c1: m.c1,
        c2: m.c2,
        fit_rel_residual: m.fit_rel_residual,
        verdicts: Verdicts {
            converged,
            y_monotone: m.y_monotone,
            sandwich_holds: m.sandwich_holds,
            superlinear: m.superlinear,
        },
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(if converged { 0 } else { 2 })
}

struct SweepRow {
    alpha: f64,
    p: f64,
    t: f64,
    converged: bool,
    iterations: Option<usize>,
    residual: Option<f64>,
    kappa: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    measured_flux: Option<f64>,
    error: String,
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Keep in-row failure text from breaking the CSV shape.
fn sanitize(msg: &str) -> String {
    msg.replace(['\n', '\r'], " ").replace([',', '"'], ";")
}

impl SweepRow {
    const HEADER: &'static str = "alpha,p,t,converged,iterations,residual,kappa,c1,c2,measured_flux,error\n";

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            self.alpha,
            self.p,
            self.t,
            self.converged,
            fmt_opt(&self.iterations),
            fmt_opt(&self.residual),
            fmt_opt(&self.kappa),
            fmt_opt(&self.c1),
            fmt_opt(&self.c2),
            fmt_opt(&self.measured_flux),
            self.error
        )
    }

    fn failed(alpha: f64, p: f64, t: f64, msg: &str) -> SweepRow {
        SweepRow {
            alpha,
            p,
            t,
            converged: false,
            iterations: None,
            residual: None,
            kappa: None,
            c1: None,
            c2: None,
            measured_flux: None,
            error: sanitize(msg),
        }
    }
}

fn sweep_point(domain: &OutletDomain, alpha: f64, p: f64, t: f64, h: f64, window: f64) -> SweepRow {
    let solve = || -> Result<SweepRow, String> {
        let law = PowerLaw::new(p, t).map_err(|e| e.to_string())?;
        let mesh = domain
            .truncate(t)
            .and_then(|td| td.mesh(h))
            .map_err(|e| e.to_string())?;
        let carrier = build_carrier_2d(domain, alpha);
        let sys = FemSystem::new(&mesh, law, &carrier);
        let zero = vec![0.0; sys.n_dofs()];
        let scfg = SolverConfig::new(law);
        let rep = solve_system_partial(&sys, &scfg, &zero, 0).map_err(|e| e.to_string())?;
        if !rep.converged {
            let mut row = SweepRow::failed(
                alpha,
                p,
                t,
                &format!(
                    "no convergence after {} iterations (residual {:.3e})",
                    rep.converged_in, rep.final_residual
                ),
            );
            row.iterations = Some(rep.converged_in);
            row.residual = Some(rep.final_residual);
            return Ok(row);
        }
        let state = rep.solution.state;
        let wt = window.min(t);
        let series = build_series(&sys, &state, wt).map_err(|e| e.to_string())?;
        let m = metrics(&sys, &state, &series, domain, wt);
        Ok(SweepRow {
            alpha,
            p,
            t,
            converged: true,
            iterations: Some(rep.converged_in),
            residual: Some(rep.final_residual),
            kappa: m.kappa,
            c1: m.c1,
            c2: m.c2,
            measured_flux: Some(m.measured_flux),
            error: String::new(),
        })
    };
    solve().unwrap_or_else(|msg| SweepRow::failed(alpha, p, t, &msg))
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    domain: &OutletDomain,
    out: &Path,
    threads: usize,
) -> Result<i32, CliError> {
    let mut grid = Vec::new();
    for alpha in cfg.flux.values() {
        for p in cfg.law.p.values() {
            for t in cfg.law.t.values() {
                grid.push((alpha, p, t));
            }
        }
    }
    let h = cfg.mesh_h;
    let window = cfg.window_t;
    let rows: Vec<SweepRow> = if threads > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| ConfigError(format!("threads: {e}")))?;
        pool.install(|| {
            grid.par_iter()
                .map(|(a, p, t)| sweep_point(domain, *a, *p, *t, h, window))
                .collect()
        })
    } else {
        grid.iter()
            .map(|(a, p, t)| sweep_point(domain, *a, *p, *t, h, window))
            .collect()
    };
    let mut csv = String::from(SweepRow::HEADER);
    for row in &rows {
        csv.push_str(&row.csv_line());
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct IneqSummary {
    version: u32,
    seed: u64,
    reports: Vec<InequalityReport>,
}

pub fn cmd_ineq(
    cfg: &ExperimentConfig,
    domain: &OutletDomain,
    out: &Path,
    seed: u64,
) -> Result<i32, CliError> {
    let t = cfg.window_t;
    let mesh = domain
        .truncate(t)
        .and_then(|td| td.mesh(cfg.mesh_h))
        .map_err(|e| ConfigError(format!("mesh_h: {e}")))?;
    let mut reports = Vec::new();
    for p in cfg.law.p.values() {
        reports.push(monotonicity_ratio(p, 100_000, seed)?);
    }
    reports.push(korn_constant(&mesh, 2.0, seed)?);
    // Trace part: the channel walls (cut faces sit at |x1| = t).
    reports.push(poincare_constant(
        &mesh,
        2.0,
        &|x| x[0].abs() < t - 1e-9,
        seed,
    )?);
    reports.push(bogovskii_constant(&mesh, 2.0, 20, seed)?);
    write_json(
        &out.join("inequalities.json"),
        &IneqSummary {
            version: 1,
            seed,
            reports,
        },
    )?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SectionFlux {
    x1: f64,
    value: f64,
    error: f64,
}

#[derive(Debug, Serialize)]
struct CarrierVerdicts {
    flux_ok: bool,
    divergence_ok: bool,
}

#[derive(Debug, Serialize)]
struct CarrierCheckReport {
    version: u32,
    flux: f64,
    p: f64,
    window_t: f64,
    sections: Vec<SectionFlux>,
    max_flux_error: f64,
    max_divergence_fd: f64,
    sup_a_tilde: f64,
    sup_grad_a_tilde: f64,
    distance_k1: f64,
    distance_k2: f64,
    lemma_c_i: Vec<f64>,
    lemma_c_ii: f64,
    lemma_c_iii: f64,
    verdicts: CarrierVerdicts,
}

pub fn cmd_carrier_check(
    cfg: &ExperimentConfig,
    domain: &OutletDomain,
    out: &Path,
) -> Result<i32, CliError> {
    let alpha = cfg.flux.single("flux")?;
    let p = cfg.law.p.single("law.p")?;
    let t = cfg.window_t;
    let carrier = build_carrier_2d(domain, alpha);

    let mut sections = Vec::new();
    let mut max_flux_error = 0.0f64;
    for frac in [-0.75, -0.5, 0.5, 0.75] {
        let x1 = frac * t;
        let est = verify_flux(&carrier, &domain.section_at(x1));
        max_flux_error = max_flux_error.max((est.value - alpha).abs());
        sections.push(SectionFlux {
            x1,
            value: est.value,
            error: est.error,
        });
    }

    let mut max_div = 0.0f64;
    for i in 0..=24 {
        let x1 = -t + 2.0 * t * i as f64 / 24.0;
        let (lo, hi) = domain.walls(x1);
        for k in 1..12 {
            let x2 = lo + (hi - lo) * k as f64 / 12.0;
            max_div = max_div.max(carrier.divergence_fd([x1, x2], 1e-5).abs());
        }
    }

    let bounds = carrier.bounds(t, 96);
    let dist = carrier.distance_bounds(t, 96);
    let mesh = domain
        .truncate(t)
        .and_then(|td| td.mesh(cfg.mesh_h))
        .map_err(|e| ConfigError(format!("mesh_h: {e}")))?;
    let probe_a = BubbleProbe::new(domain, [1.0, 0.0], 1.0);
    let probe_b = BubbleProbe::new(domain, [0.0, 1.0], 2.0);
    let lemma = verify_lemma_a_estimates(&carrier, &mesh, p, t, &[&probe_a, &probe_b]);

    let law = PowerLaw::new(p, t).map_err(|e| ConfigError(format!("law: {e}")))?;
    let sys = FemSystem::new(&mesh, law, &carrier);
    let rest = vec![0.0; sys.n_dofs()];
    write_solution_file(&out.join("carrier.vtk"), &sys, &rest)?;

    let flux_tol = 1e-6 * alpha.abs().max(1.0);
    let div_tol = 1e-6 * alpha.abs() * bounds.sup_grad_a_tilde + 1e-10;
    let report = CarrierCheckReport {
        version: 1,
        flux: alpha,
        p,
        window_t: t,
        sections,
        max_flux_error,
        max_divergence_fd: max_div,
        sup_a_tilde: bounds.sup_a_tilde,
        sup_grad_a_tilde: bounds.sup_grad_a_tilde,
        distance_k1: dist.k1,
        distance_k2: dist.k2,
        lemma_c_i: lemma.c_i.clone(),
        lemma_c_ii: lemma.c_ii,
        lemma_c_iii: lemma.c_iii,
        verdicts: CarrierVerdicts {
            flux_ok: max_flux_error <= flux_tol,
            divergence_ok: max_div <= div_tol,
        },
    };
    write_json(&out.join("carrier.json"), &report)?;
    Ok(0)
}
