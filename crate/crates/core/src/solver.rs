//! Nonlinear solves, domain continuation, and the divergence right-inverse.
//!
//! The outer iteration is backtracked Newton with a damped Picard fallback
//! (freeze the viscosity and the convecting field) for any iteration where
//! no Newton step length decreases the residual. The viscosity floor keeps
//! the Jacobian uniformly elliptic, so the Newton direction is a descent
//! direction for the residual norm from any state; frozen-coefficient
//! iteration alone contracts too slowly to be usable once the flux or the
//! floor's reach grows. Both directions share one linear-algebra path: a
//! quasi-Newton update with the chosen linearization matrix.
//!
//! Continuation re-solves on growing truncations with the viscosity floor
//! tied to the half-length, warm-starting each stage from the previous
//! solution extended by zero.

use std::collections::HashMap;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use serde::Serialize;
use thiserror::Error;

use crate::carrier::{build_carrier_2d, CarrierField};
use crate::fem::{
    element_geometry, p2_basis, BackgroundField, DofMap, FemError, FemSystem, LinearizationKind,
    PowerLaw, Solution, Tensor2,
};
use crate::geometry::{GeometryError, Mesh, OutletDomain};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("right-hand side has nonzero mean: |∫f| = {integral:.3e} vs ‖f‖ = {norm:.3e}")]
    NonZeroMean { integral: f64, norm: f64 },
    #[error("exponent {0} outside (1, ∞)")]
    BadExponent(f64),
    #[error("bad continuation schedule: {0}")]
    BadSchedule(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Iteration controls shared by all solve entry points.
///
/// Invariants: tolerances positive, damping in (0, 1], schedule strictly
/// increasing when present.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub law: PowerLaw,
    pub damping: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    pub schedule: Vec<f64>,
}

impl SolverConfig {
    pub fn new(law: PowerLaw) -> Self {
        SolverConfig {
            law,
            damping: 1.0,
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_iters: 80,
            max_backtracks: 10,
            schedule: Vec::new(),
        }
    }

    pub fn with_schedule(mut self, schedule: Vec<f64>) -> Self {
        self.schedule = schedule;
        self
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(SolverError::BadSchedule("tolerances must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverError::BadSchedule("damping must lie in (0, 1]".into()));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SolverError::BadSchedule(
                "schedule must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// One accepted outer-iteration step, ready for JSON-lines logging.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub stage: usize,
    pub iter: usize,
    pub kind: &'static str,
    pub residual: f64,
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Solution,
    pub iterations: Vec<IterationRecord>,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Accepted outer iterations; on a non-converged report, the iteration
    /// the run stopped at.
    pub converged_in: usize,
    pub converged: bool,
}

/// Per-stage continuation summary.
#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub t_k: f64,
    pub dofs: usize,
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub y2: f64,
    pub yp: f64,
}

#[derive(Debug)]
pub struct ContinuationReport {
    pub window: f64,
    pub stages: Vec<StageSummary>,
    /// Cauchy differences |u^{T_{k+1}} − u^{T_k}|_{1,p} on the fixed window.
    pub deltas: Vec<f64>,
    pub log: Vec<IterationRecord>,
    pub failure: Option<String>,
    pub final_state: Option<Vec<f64>>,
    pub final_t: Option<f64>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn linear_solve(
    n: usize,
    triplets: &[(usize, usize, f64)],
    rhs: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let trips: Vec<Triplet<usize, usize, f64>> = triplets
        .iter()
        .map(|&(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| SolverError::LinearSolveFailure(format!("matrix build: {e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| SolverError::LinearSolveFailure(format!("factorization: {e:?}")))?;
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::LinearSolveFailure(
            "non-finite solution (singular matrix?)".into(),
        ));
    }
    Ok(out)
}

/// Backtracked Newton with Picard fallback, from an admissible initial
/// state, erroring on non-convergence.
///
/// Every accepted step strictly decreases the residual norm; the damping
/// halves on rejection and recovers after acceptance. A Newton step whose
/// backtracking stalls falls back to a Picard step before giving up.
pub fn solve_system(
    sys: &FemSystem,
    cfg: &SolverConfig,
    initial: &[f64],
    stage: usize,
) -> Result<SolveReport, SolverError> {
    let rep = solve_system_partial(sys, cfg, initial, stage)?;
    if rep.converged {
        Ok(rep)
    } else {
        Err(SolverError::NonConvergence {
            iters: rep.converged_in,
            residual: rep.final_residual,
        })
    }
}

/// Same iteration as `solve_system`, but a stalled or exhausted run comes
/// back as an unconverged report (state and log intact) instead of an
/// error. Hard failures (assembly, linear solve) still error.
pub fn solve_system_partial(
    sys: &FemSystem,
    cfg: &SolverConfig,
    initial: &[f64],
    stage: usize,
) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    let n = sys.n_dofs();
    let mut state = initial.to_vec();
    for (dof, &fixed) in sys.dofs().constrained_flags().iter().enumerate() {
        if fixed {
            state[dof] = 0.0;
        }
    }
    let mut residual = sys.assemble_residual(&state)?;
    let r0 = norm2(&residual);
    let mut rnorm = r0;
    let mut log = Vec::new();
    if r0 <= cfg.abs_tol {
        return Ok(SolveReport {
            solution: Solution { state },
            iterations: log,
            initial_residual: r0,
            final_residual: r0,
            converged_in: 0,
            converged: true,
        });
    }
    let mut theta = cfg.damping;
    for iter in 1..=cfg.max_iters {
        let mut accepted = false;
        for kind in [LinearizationKind::Newton, LinearizationKind::Picard] {
            let trips = sys.assemble_matrix(&state, kind)?;
            let neg_r: Vec<f64> = residual.iter().map(|r| -r).collect();
            let step = linear_solve(n, &trips, &neg_r)?;
            let mut th = theta;
            for _ in 0..=cfg.max_backtracks {
                let candidate: Vec<f64> = state
                    .iter()
                    .zip(&step)
                    .map(|(s, d)| s + th * d)
                    .collect();
                let cand_res = sys.assemble_residual(&candidate)?;
                let cand_norm = norm2(&cand_res);
                if cand_norm < rnorm {
                    state = candidate;
                    residual = cand_res;
                    rnorm = cand_norm;
                    theta = (2.0 * th).min(1.0);
                    log.push(IterationRecord {
                        stage,
                        iter,
                        kind: match kind {
                            LinearizationKind::Picard => "picard",
                            LinearizationKind::Newton => "newton",
                        },
                        residual: rnorm,
                        damping: th,
                    });
                    accepted = true;
                    break;
                }
                th *= 0.5;
            }
            if accepted {
                break;
            }
            if kind == LinearizationKind::Picard {
                return Ok(SolveReport {
                    solution: Solution { state },
                    iterations: log,
                    initial_residual: r0,
                    final_residual: rnorm,
                    converged_in: iter,
                    converged: false,
                });
            }
        }
        if rnorm <= cfg.abs_tol || rnorm / r0 <= cfg.rel_tol {
            return Ok(SolveReport {
                solution: Solution { state },
                iterations: log,
                initial_residual: r0,
                final_residual: rnorm,
                converged_in: iter,
                converged: true,
            });
        }
    }
    Ok(SolveReport {
        solution: Solution { state },
        iterations: log,
        initial_residual: r0,
        final_residual: rnorm,
        converged_in: cfg.max_iters,
        converged: false,
    })
}

/// Solve on a fixed truncation, carrier-driven, starting from rest.
pub fn solve_truncated(
    mesh: &Mesh,
    carrier: &CarrierField,
    cfg: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    let sys = FemSystem::new(mesh, cfg.law, carrier);
    let zero = vec![0.0; sys.n_dofs()];
    solve_system(&sys, cfg, &zero, 0)
}

/// ∫ over the window |x₁| < t of (|∇u|², |∇u|^p), the second already the
/// p-th power; the first is scaled by the caller's viscosity floor.
fn window_gradient_integrals(sys: &FemSystem, state: &[f64], t: f64, p: f64) -> (f64, f64) {
    let mut e2 = 0.0;
    let mut ep = 0.0;
    sys.for_each_quad_point(state, |x, w, s| {
        if x[0].abs() < t {
            let g2 = frob2(&s.grad_u);
            e2 += w * g2;
            ep += w * g2.powf(0.5 * p);
        }
    });
    (e2, ep)
}

fn frob2(g: &Tensor2) -> f64 {
    g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]
}

/// |u_new − u_old|_{1,p} over the window, quadrature on the new mesh with
/// the old field evaluated at the same physical points.
fn cross_mesh_delta(
    new_sys: &FemSystem,
    new_state: &[f64],
    old_sys: &FemSystem,
    old_state: &[f64],
    t: f64,
    p: f64,
) -> f64 {
    let mut acc = 0.0;
    new_sys.for_each_quad_point(new_state, |x, w, s| {
        if x[0].abs() < t {
            let (_, old_g) = old_sys
                .eval_velocity_grad(old_state, x)
                .expect("window point must lie inside the previous mesh");
            let mut d2 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let d = s.grad_u[i][j] - old_g[i][j];
                    d2 += d * d;
                }
            }
            acc += w * d2.powf(0.5 * p);
        }
    });
    acc.powf(1.0 / p)
}

fn coord_key(x: [f64; 2]) -> (i64, i64) {
    ((x[0] * 1e8).round() as i64, (x[1] * 1e8).round() as i64)
}

/// Zero-extension warm start: copy nodal values where coordinates match,
/// leave everything else (in particular the new far region) at zero.
fn transfer_state(new_sys: &FemSystem, old_sys: &FemSystem, old_state: &[f64]) -> Vec<f64> {
    let old_dofs = old_sys.dofs();
    let mut by_coord = HashMap::with_capacity(old_dofs.n_scalar_nodes());
    for node in 0..old_dofs.n_scalar_nodes() {
        by_coord.insert(coord_key(old_dofs.node_coords(node)), node);
    }
    let new_dofs = new_sys.dofs();
    let old_nv = old_sys.mesh().num_vertices();
    let new_nv = new_sys.mesh().num_vertices();
    let mut state = vec![0.0; new_sys.n_dofs()];
    for node in 0..new_dofs.n_scalar_nodes() {
        let Some(&old) = by_coord.get(&coord_key(new_dofs.node_coords(node))) else {
            continue;
        };
        for c in 0..2 {
            let dof = DofMap::velocity_dof(node, c);
            if !new_dofs.is_constrained(dof) {
                state[dof] = old_state[DofMap::velocity_dof(old, c)];
            }
        }
        if node < new_nv && old < old_nv {
            state[new_dofs.pressure_dof(node)] = old_state[old_dofs.pressure_dof(old)];
        }
    }
    state[new_dofs.multiplier_dof()] = old_state[old_dofs.multiplier_dof()];
    state
}

/// Run the growing-truncation sequence with floor 1/T_k, T_k from the
/// schedule, reporting Cauchy differences on the fixed window Ω_t.
///
/// Stage failures stop the sequence but keep the partial report.
pub fn continuation_run(
    domain: &OutletDomain,
    alpha: f64,
    cfg: &SolverConfig,
    t: f64,
    h: f64,
) -> Result<ContinuationReport, SolverError> {
    cfg.validate()?;
    if cfg.schedule.is_empty() {
        return Err(SolverError::BadSchedule("empty schedule".into()));
    }
    if let Some(&bad) = cfg.schedule.iter().find(|&&tk| tk < t + 1.0) {
        return Err(SolverError::BadSchedule(format!(
            "stage length {bad} below window + 1 = {}",
            t + 1.0
        )));
    }
    let carrier = build_carrier_2d(domain, alpha);
    let p = cfg.law.p();
    let mut report = ContinuationReport {
        window: t,
        stages: Vec::new(),
        deltas: Vec::new(),
        log: Vec::new(),
        failure: None,
        final_state: None,
        final_t: None,
    };
    let mut prev: Option<(Mesh, Vec<f64>, f64)> = None;
    // On a failed stage the report keeps the last completed stage's state.
    let keep_last = |report: &mut ContinuationReport, prev: &Option<(Mesh, Vec<f64>, f64)>| {
        if let Some((_, state, t_prev)) = prev {
            report.final_state = Some(state.clone());
            report.final_t = Some(*t_prev);
        }
    };
    for (k, &t_k) in cfg.schedule.iter().enumerate() {
        let stage_result = (|| -> Result<(Mesh, Vec<f64>, SolveReport), SolverError> {
            let mesh = domain.truncate(t_k)?.mesh(h)?;
            let law = PowerLaw::new(p, t_k)?;
            let sys = FemSystem::new(&mesh, law, &carrier);
            let init = match &prev {
                None => vec![0.0; sys.n_dofs()],
                Some((old_mesh, old_state, _)) => {
                    let old_sys = FemSystem::new(old_mesh, law, &carrier);
                    transfer_state(&sys, &old_sys, old_state)
                }
            };
            let mut stage_cfg = cfg.clone();
            stage_cfg.law = law;
            let rep = solve_system_partial(&sys, &stage_cfg, &init, k)?;
            Ok((mesh, rep.solution.state.clone(), rep))
        })();
        let (mesh, state, rep) = match stage_result {
            Ok(v) => v,
            Err(e) => {
                report.failure = Some(format!("stage {k} (T = {t_k}): {e}"));
                keep_last(&mut report, &prev);
                return Ok(report);
            }
        };
        if !rep.converged {
            let e = SolverError::NonConvergence {
                iters: rep.converged_in,
                residual: rep.final_residual,
            };
            report.log.extend(rep.iterations);
            report.failure = Some(format!("stage {k} (T = {t_k}): {e}"));
            keep_last(&mut report, &prev);
            return Ok(report);
        }
        let law = PowerLaw::new(p, t_k)?;
        let sys = FemSystem::new(&mesh, law, &carrier);
        let (e2, ep) = window_gradient_integrals(&sys, &state, t, p);
        report.stages.push(StageSummary {
            t_k,
            dofs: sys.n_dofs(),
            iterations: rep.converged_in,
            initial_residual: rep.initial_residual,
            final_residual: rep.final_residual,
            y2: e2 / t_k,
            yp: ep,
        });
        report.log.extend(rep.iterations);
        if let Some((old_mesh, old_state, _)) = &prev {
            let old_sys = FemSystem::new(old_mesh, law, &carrier);
            report
                .deltas
                .push(cross_mesh_delta(&sys, &state, &old_sys, old_state, t, p));
        }
        prev = Some((mesh, state, t_k));
    }
    let (_, state, t_last) = prev.expect("at least one stage ran");
    report.final_state = Some(state);
    report.final_t = Some(t_last);
    Ok(report)
}

/// Divergence right-inverse result. `w` holds P2 vector coefficients in
/// the velocity layout of the mesh's DofMap, zero on the whole boundary.
#[derive(Debug, Clone, Serialize)]
pub struct BogovskiiResult {
    #[serde(skip)]
    pub w: Vec<f64>,
    pub constant: f64,
    pub div_residual: f64,
    pub norm_w: f64,
    pub norm_f: f64,
    pub passes: usize,
}

/// Minimal-norm discrete solution of div w = f with w = 0 on ∂Ω.
///
/// q = 2: one KKT solve minimizing the full W^{1,2} norm subject to the
/// P1-projected divergence constraint. q ≠ 2: iteratively reweighted
/// repeats of the same solve, with weights ((|w|² + |∇w|²)^{1/2} + ε)^{q−2}.
/// The reported constant is ‖w‖_{1,q}/‖f‖_q with the (|w|² + |∇w|²)^{q/2}
/// integrand convention.
pub fn bogovskii_solve(
    mesh: &Mesh,
    f: &dyn Fn([f64; 2]) -> f64,
    q: f64,
) -> Result<BogovskiiResult, SolverError> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(SolverError::BadExponent(q));
    }
    let dofs = DofMap::new(mesh);
    let rule = crate::numerics::TriangleRule::degree6();
    let n = dofs.n_total();
    let nw = dofs.n_velocity_dofs();

    // Zero-mean gate and constraint right-hand side in one sweep.
    let mut integral = 0.0;
    let mut norm_f_2 = 0.0;
    let mut norm_f_q = 0.0;
    let mut rhs = vec![0.0; n];
    for tri in 0..mesh.num_triangles() {
        let verts = mesh.triangles()[tri];
        let coords = mesh.tri_coords(tri);
        let geo = element_geometry(&coords);
        for (lq, wq) in rule.points.iter().zip(&rule.weights) {
            let w = wq * geo.area;
            let x = [
                lq[0] * coords[0][0] + lq[1] * coords[1][0] + lq[2] * coords[2][0],
                lq[0] * coords[0][1] + lq[1] * coords[1][1] + lq[2] * coords[2][1],
            ];
            let fv = f(x);
            integral += w * fv;
            norm_f_2 += w * fv * fv;
            norm_f_q += w * fv.abs().powf(q);
            for j in 0..3 {
                rhs[dofs.pressure_dof(verts[j])] += w * lq[j] * fv;
            }
        }
    }
    let norm_f_2 = norm_f_2.sqrt();
    if integral.abs() > 1e-10 * norm_f_2.max(f64::MIN_POSITIVE) {
        return Err(SolverError::NonZeroMean {
            integral,
            norm: norm_f_2,
        });
    }

    let passes = if q == 2.0 { 1 } else { 6 };
    let mut w_coef = vec![0.0f64; n];
    for pass in 0..passes {
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        for tri in 0..mesh.num_triangles() {
            let verts = mesh.triangles()[tri];
            let coords = mesh.tri_coords(tri);
            let geo = element_geometry(&coords);
            let nodes = dofs.tri_nodes(tri, &verts);
            for (lq, wq) in rule.points.iter().zip(&rule.weights) {
                let w = wq * geo.area;
                let (nb, g) = p2_basis(*lq, &geo.grad_l);
                let weight = if pass == 0 {
                    1.0
                } else {
                    let (wv, wg) = p2_vector_at(&w_coef, &nodes, &nb, &g);
                    let mag2 = wv[0] * wv[0] + wv[1] * wv[1] + frob2(&wg);
                    (mag2.sqrt() + 1e-8).powf(q - 2.0)
                };
                for a in 0..6 {
                    for b in 0..6 {
                        let gram = nb[a] * nb[b] + g[a][0] * g[b][0] + g[a][1] * g[b][1];
                        for c in 0..2 {
                            let (ra, rb) = (
                                DofMap::velocity_dof(nodes[a], c),
                                DofMap::velocity_dof(nodes[b], c),
                            );
                            if !dofs.is_constrained(ra) && !dofs.is_constrained(rb) {
                                trips.push((ra, rb, w * weight * gram));
                            }
                        }
                    }
                }
                for a in 0..6 {
                    for c in 0..2 {
                        let row = DofMap::velocity_dof(nodes[a], c);
                        if dofs.is_constrained(row) {
                            continue;
                        }
                        for j in 0..3 {
                            let mu = dofs.pressure_dof(verts[j]);
                            let val = w * lq[j] * g[a][c];
                            trips.push((row, mu, val));
                            trips.push((mu, row, val));
                        }
                    }
                }
            }
            // Gauge pins the multiplier mean so the bordered system is
            // nonsingular even though the constraint rows sum to ∫div w = 0.
            let m = geo.area / 3.0;
            for j in 0..3 {
                let mu = dofs.pressure_dof(verts[j]);
                trips.push((mu, dofs.multiplier_dof(), m));
                trips.push((dofs.multiplier_dof(), mu, m));
            }
        }
        for (dof, &fixed) in dofs.constrained_flags().iter().enumerate() {
            if fixed {
                trips.push((dof, dof, 1.0));
            }
        }
        w_coef = linear_solve(n, &trips, &rhs)?;
    }

    // Constraint residual ‖Bw − F‖ and the two norms for the constant.
    let mut proj = vec![0.0; dofs.n_pressure_dofs()];
    let mut int_w_q = 0.0;
    for tri in 0..mesh.num_triangles() {
        let verts = mesh.triangles()[tri];
        let coords = mesh.tri_coords(tri);
        let geo = element_geometry(&coords);
        let nodes = dofs.tri_nodes(tri, &verts);
        for (lq, wq) in rule.points.iter().zip(&rule.weights) {
            let w = wq * geo.area;
            let (nb, g) = p2_basis(*lq, &geo.grad_l);
            let (wv, wg) = p2_vector_at(&w_coef, &nodes, &nb, &g);
            let div = wg[0][0] + wg[1][1];
            for j in 0..3 {
                proj[dofs.pressure_dof(verts[j]) - nw] += w * lq[j] * div;
            }
            let mag2 = wv[0] * wv[0] + wv[1] * wv[1] + frob2(&wg);
            int_w_q += w * mag2.powf(0.5 * q);
        }
    }
    let mut div_residual = 0.0;
    for (j, p) in proj.iter().enumerate() {
        let d = p - rhs[nw + j];
        div_residual += d * d;
    }
    let div_residual = div_residual.sqrt();
    let norm_w = int_w_q.powf(1.0 / q);
    let norm_f = norm_f_q.powf(1.0 / q);
    let constant = if norm_f > 0.0 { norm_w / norm_f } else { 0.0 };
    let mut w_out = w_coef;
    w_out.truncate(nw);
    Ok(BogovskiiResult {
        w: w_out,
        constant,
        div_residual,
        norm_w,
        norm_f,
        passes,
    })
}

fn p2_vector_at(
    coef: &[f64],
    nodes: &[usize; 6],
    n: &[f64; 6],
    g: &[[f64; 2]; 6],
) -> ([f64; 2], Tensor2) {
    let mut v = [0.0f64; 2];
    let mut gv = [[0.0f64; 2]; 2];
    for s in 0..6 {
        for c in 0..2 {
            let a = coef[DofMap::velocity_dof(nodes[s], c)];
            v[c] += n[s] * a;
            gv[c][0] += g[s][0] * a;
            gv[c][1] += g[s][1] * a;
        }
    }
    (v, gv)
}

/// Multi-start uniqueness probe: solve from each guess, polish with one
/// full Newton step, and compare pairwise |u_a − u_b|_{1,p}.
#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub threshold: f64,
    pub coincide: bool,
    pub runs: usize,
}

pub fn probe_uniqueness(
    mesh: &Mesh,
    carrier: &CarrierField,
    cfg: &SolverConfig,
    guesses: &[Vec<f64>],
) -> Result<UniquenessReport, SolverError> {
    assert!(guesses.len() >= 2, "need at least two initial guesses");
    let sys = FemSystem::new(mesh, cfg.law, carrier);
    let p = cfg.law.p();
    let mut states = Vec::with_capacity(guesses.len());
    for guess in guesses {
        let rep = solve_system(&sys, cfg, guess, 0)?;
        let mut state = rep.solution.state;
        // One undamped Newton polish pushes each run to the same machine-
        // level root so the pairwise distances sit far below threshold.
        let trips = sys.assemble_matrix(&state, LinearizationKind::Newton)?;
        let res = sys.assemble_residual(&state)?;
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        let step = linear_solve(sys.n_dofs(), &trips, &neg)?;
        for (s, d) in state.iter_mut().zip(&step) {
            *s += d;
        }
        states.push(state);
    }
    let mut distances = Vec::new();
    for a in 0..states.len() {
        for b in (a + 1)..states.len() {
            let diff: Vec<f64> = states[a]
                .iter()
                .zip(&states[b])
                .map(|(x, y)| x - y)
                .collect();
            let (_, ep) = window_gradient_integrals(&sys, &diff, f64::INFINITY, p);
            distances.push(ep.powf(1.0 / p));
        }
    }
    let max_distance = distances.iter().cloned().fold(0.0, f64::max);
    let threshold = 10.0 * cfg.abs_tol;
    Ok(UniquenessReport {
        max_distance,
        threshold,
        coincide: max_distance <= threshold,
        runs: states.len(),
        distances,
    })
}

/// Exact unidirectional profile for the body-force benchmark: the flow
/// ((1/2)^{p′} − |x₂|^{p′})/p′ · e₁ driven by the constant force
/// (2^{−p/2}, 0) in a width-one straight channel.
#[derive(Debug, Clone, Copy)]
pub struct PoiseuilleBackground {
    pprime: f64,
}

impl PoiseuilleBackground {
    pub fn new(p: f64) -> Self {
        assert!(p >= 2.0);
        PoiseuilleBackground {
            pprime: p / (p - 1.0),
        }
    }

    pub fn body_force(p: f64) -> [f64; 2] {
        [0.5f64.powf(0.5 * p), 0.0]
    }

    /// ∫ of the profile across the section: 2(1/2)^{p′+1}/(p′+1).
    pub fn exact_flux(p: f64) -> f64 {
        let pp = p / (p - 1.0);
        2.0 * 0.5f64.powf(pp + 1.0) / (pp + 1.0)
    }

    pub fn profile(&self, x2: f64) -> f64 {
        (0.5f64.powf(self.pprime) - x2.abs().powf(self.pprime)) / self.pprime
    }
}

impl BackgroundField for PoiseuilleBackground {
    fn eval_with_grad(&self, x: [f64; 2]) -> ([f64; 2], Tensor2) {
        let x2 = x[1];
        let dv = -x2.signum() * x2.abs().powf(self.pprime - 1.0);
        ([self.profile(x2), 0.0], [[0.0, dv], [0.0, 0.0]])
    }
}
