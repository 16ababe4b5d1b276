//! Energy-growth measurements on solved states and the comparison-lemma
//! verifier.
//!
//! The central object is the pair y(t) = ((1/T)∫_{Ω_t}|∇u|², ∫_{Ω_t}|∇u|^p)
//! on a uniform t-grid, its unit-window average z(η) = ∫_{η−1}^η y, and the
//! per-outlet unit-slice dissipations of v = u + a. Window membership is
//! decided per quadrature point, so y is nondecreasing at sub-element
//! resolution and the z sandwich holds on every grid point.

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::carrier::ProbeField;
use crate::fem::{strain_rate, tensor_norm, FemSystem, Tensor2};
use crate::geometry::{Outlet, Slice};

/// Fixed sample spacing of the t-grid.
pub const GRID_SPACING: f64 = 0.125;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("window t = {t} exceeds the meshed half-length {limit}")]
    WindowExceedsDomain { t: f64, limit: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("slice ({t} − 1, {t}] lies outside the mesh")]
    SliceOutsideMesh { t: f64 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("Ψ is not strictly increasing on [0, ∞)")]
    NotStrictlyIncreasingPsi,
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error("bad exponent input: {0}")]
    BadExponent(String),
}

fn meshed_half_length(sys: &FemSystem) -> f64 {
    let m = sys.mesh();
    let right = m.x0() + m.dx() * m.nx() as f64;
    (-m.x0()).max(right)
}

fn frob2(g: &Tensor2) -> f64 {
    g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]
}

/// (E₂, E_p) = (∫_{Ω_t}|∇u|², ∫_{Ω_t}|∇u|^p), the raw seminorm powers
/// without the viscosity-floor factor.
pub fn dirichlet_energy(
    sys: &FemSystem,
    state: &[f64],
    t: f64,
) -> Result<(f64, f64), DiagnosticsError> {
    let limit = meshed_half_length(sys);
    if t > limit + 1e-12 {
        return Err(DiagnosticsError::WindowExceedsDomain { t, limit });
    }
    let p = sys.law().p();
    let mut e2 = 0.0;
    let mut ep = 0.0;
    sys.for_each_quad_point(state, |x, w, s| {
        if x[0].abs() < t {
            let g2 = frob2(&s.grad_u);
            e2 += w * g2;
            ep += w * g2.powf(0.5 * p);
        }
    });
    Ok((e2, ep))
}

/// Trapezoid unit-window averages z(η) = ∫_{η−1}^η y and the independent
/// difference z′(η) = y(η) − y(η−1), for η values on the y grid.
pub fn z_series(
    grid: &[f64],
    y: &[f64],
    etas: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), DiagnosticsError> {
    if grid.len() != y.len() {
        return Err(DiagnosticsError::GridMismatch(format!(
            "{} grid points vs {} samples",
            grid.len(),
            y.len()
        )));
    }
    if grid.len() < 2 {
        return Err(DiagnosticsError::GridMismatch("need at least 2 samples".into()));
    }
    let spacing = grid[1] - grid[0];
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - spacing).abs() > 1e-12 {
            return Err(DiagnosticsError::GridMismatch("nonuniform spacing".into()));
        }
    }
    let per_unit = 1.0 / spacing;
    if (per_unit - per_unit.round()).abs() > 1e-9 {
        return Err(DiagnosticsError::GridMismatch(format!(
            "spacing {spacing} does not divide 1"
        )));
    }
    let steps = per_unit.round() as usize;
    let index_of = |t: f64| -> Result<usize, DiagnosticsError> {
        let idx = (t - grid[0]) / spacing;
        if (idx - idx.round()).abs() > 1e-9 || idx < -0.5 {
            return Err(DiagnosticsError::GridMismatch(format!("η = {t} not on grid")));
        }
        let idx = idx.round() as usize;
        if idx >= grid.len() {
            return Err(DiagnosticsError::GridMismatch(format!("η = {t} beyond grid")));
        }
        Ok(idx)
    };
    let mut z = Vec::with_capacity(etas.len());
    let mut zp = Vec::with_capacity(etas.len());
    for &eta in etas {
        let hi = index_of(eta)?;
        if hi < steps {
            return Err(DiagnosticsError::GridMismatch(format!(
                "η = {eta} has no full unit window on the grid"
            )));
        }
        let lo = hi - steps;
        let mut acc = 0.5 * (y[lo] + y[hi]);
        for j in (lo + 1)..hi {
            acc += y[j];
        }
        z.push(acc * spacing);
        zp.push(y[hi] - y[lo]);
    }
    Ok((z, zp))
}

/// ∫ over the unit slice Ω_{outlet, t−1, t} of |∇v|^p, with v = u + a.
pub fn slice_dissipation(
    sys: &FemSystem,
    state: &[f64],
    outlet: Outlet,
    t: f64,
) -> Result<f64, DiagnosticsError> {
    let limit = meshed_half_length(sys);
    if !(t >= 1.0 && t <= limit + 1e-12) {
        return Err(DiagnosticsError::SliceOutsideMesh { t });
    }
    let p = sys.law().p();
    let sign = outlet.sign();
    let mut acc = 0.0;
    sys.for_each_quad_point(state, |x, w, s| {
        let along = x[0] * sign;
        if along > t - 1.0 && along <= t {
            acc += w * frob2(&s.grad_v).powf(0.5 * p);
        }
    });
    Ok(acc)
}

/// Complete sampled record of one solve, CSV-ready. Entries of z, z′ and
/// the slice columns are 0.0 where the quantity is undefined (t < 1).
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsSeries {
    pub spacing: f64,
    pub grid: Vec<f64>,
    pub y2: Vec<f64>,
    pub yp: Vec<f64>,
    pub z: Vec<f64>,
    pub zprime: Vec<f64>,
    pub slice1: Vec<f64>,
    pub slice2: Vec<f64>,
}

impl DiagnosticsSeries {
    /// Combined energy y = (1/T)|u|²_{1,2} + |u|^p_{1,p} at grid index j.
    pub fn y(&self, j: usize) -> f64 {
        self.y2[j] + self.yp[j]
    }

    pub fn combined(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|j| self.y(j)).collect()
    }

    /// CSV with the fixed column set; default float formatting keeps
    /// reruns byte-identical.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,y2,yp,z,zprime,slice1,slice2\n");
        for j in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.grid[j],
                self.y2[j],
                self.yp[j],
                self.z[j],
                self.zprime[j],
                self.slice1[j],
                self.slice2[j]
            ));
        }
        out
    }
}

/// Samples y, z, z′ and both slice-dissipation tracks on the uniform grid
/// 0, 1/8, …, t_max in one quadrature sweep.
pub fn build_series(
    sys: &FemSystem,
    state: &[f64],
    t_max: f64,
) -> Result<DiagnosticsSeries, DiagnosticsError> {
    let limit = meshed_half_length(sys);
    if t_max > limit + 1e-12 {
        return Err(DiagnosticsError::WindowExceedsDomain { t: t_max, limit });
    }
    let n_steps_f = t_max / GRID_SPACING;
    if (n_steps_f - n_steps_f.round()).abs() > 1e-9 {
        return Err(DiagnosticsError::GridMismatch(format!(
            "t_max = {t_max} is not a grid multiple of {GRID_SPACING}"
        )));
    }
    let n_steps = n_steps_f.round() as usize;
    let p = sys.law().p();
    let inv_t = sys.law().floor();
    // Per-interval buckets; prefix sums turn them into window integrals.
    let mut b2 = vec![0.0f64; n_steps];
    let mut bp = vec![0.0f64; n_steps];
    let mut bv = [vec![0.0f64; n_steps], vec![0.0f64; n_steps]];
    sys.for_each_quad_point(state, |x, w, s| {
        let along = x[0].abs();
        if along >= t_max {
            return;
        }
        let idx = ((along / GRID_SPACING).floor() as usize).min(n_steps - 1);
        let g2 = frob2(&s.grad_u);
        b2[idx] += w * g2;
        bp[idx] += w * g2.powf(0.5 * p);
        let side = usize::from(x[0] > 0.0);
        bv[side][idx] += w * frob2(&s.grad_v).powf(0.5 * p);
    });
    let n = n_steps + 1;
    let grid: Vec<f64> = (0..n).map(|j| j as f64 * GRID_SPACING).collect();
    let prefix = |b: &[f64]| {
        let mut out = vec![0.0f64; n];
        for j in 1..n {
            out[j] = out[j - 1] + b[j - 1];
        }
        out
    };
    let y2: Vec<f64> = prefix(&b2).iter().map(|e| inv_t * e).collect();
    let yp = prefix(&bp);
    let pv1 = prefix(&bv[0]);
    let pv2 = prefix(&bv[1]);
    let combined: Vec<f64> = (0..n).map(|j| y2[j] + yp[j]).collect();
    let steps_per_unit = (1.0 / GRID_SPACING) as usize;
    let mut z = vec![0.0f64; n];
    let mut zprime = vec![0.0f64; n];
    let mut slice1 = vec![0.0f64; n];
    let mut slice2 = vec![0.0f64; n];
    for j in steps_per_unit..n {
        let lo = j - steps_per_unit;
        let mut acc = 0.5 * (combined[lo] + combined[j]);
        for k in (lo + 1)..j {
            acc += combined[k];
        }
        z[j] = acc * GRID_SPACING;
        zprime[j] = combined[j] - combined[lo];
        slice1[j] = pv1[j] - pv1[lo];
        slice2[j] = pv2[j] - pv2[lo];
    }
    Ok(DiagnosticsSeries {
        spacing: GRID_SPACING,
        grid,
        y2,
        yp,
        z,
        zprime,
        slice1,
        slice2,
    })
}

/// Linear-growth verdict: the supremum of y/t and a least-squares affine
/// fit with its relative residual.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub sup_ratio: f64,
    pub c1: f64,
    pub c2: f64,
    pub rel_residual: f64,
    pub superlinear: bool,
}

pub fn growth_rate(grid: &[f64], y: &[f64]) -> Result<GrowthReport, DiagnosticsError> {
    if grid.len() != y.len() {
        return Err(DiagnosticsError::GridMismatch(format!(
            "{} grid points vs {} samples",
            grid.len(),
            y.len()
        )));
    }
    if grid.len() < 3 {
        return Err(DiagnosticsError::TooFewSamples {
            got: grid.len(),
            need: 3,
        });
    }
    let sup_ratio = grid
        .iter()
        .zip(y)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| v / t)
        .fold(0.0f64, f64::max);
    // Normal equations for y ≈ c₁ t + c₂.
    let m = grid.len() as f64;
    let st: f64 = grid.iter().sum();
    let stt: f64 = grid.iter().map(|t| t * t).sum();
    let sy: f64 = y.iter().sum();
    let sty: f64 = grid.iter().zip(y).map(|(t, v)| t * v).sum();
    let det = m * stt - st * st;
    let c1 = (m * sty - st * sy) / det;
    let c2 = (stt * sy - st * sty) / det;
    let mut res2 = 0.0;
    let mut norm2 = 0.0;
    for (t, v) in grid.iter().zip(y) {
        res2 += (v - c1 * t - c2) * (v - c1 * t - c2);
        norm2 += v * v;
    }
    let rel_residual = if norm2 > 0.0 {
        (res2 / norm2).sqrt()
    } else {
        0.0
    };
    Ok(GrowthReport {
        sup_ratio,
        c1,
        c2,
        rel_residual,
        superlinear: rel_residual > 0.1,
    })
}

/// Uniform-dissipation constant: constant fit of the interior unit-slice
/// values d_i(t), both outlets, integer t in [t_lo, t_hi].
#[derive(Debug, Clone, Serialize)]
pub struct KappaReport {
    pub kappa: f64,
    pub max_rel_deviation: f64,
    pub samples: usize,
}

pub fn kappa_fit(
    sys: &FemSystem,
    state: &[f64],
    t_lo: f64,
    t_hi: f64,
) -> Result<KappaReport, DiagnosticsError> {
    let mut values = Vec::new();
    let mut t = t_lo.ceil().max(1.0);
    while t <= t_hi + 1e-12 {
        for outlet in [Outlet::One, Outlet::Two] {
            values.push(slice_dissipation(sys, state, outlet, t)?);
        }
        t += 1.0;
    }
    if values.is_empty() {
        return Err(DiagnosticsError::TooFewSamples { got: 0, need: 1 });
    }
    let kappa = values.iter().sum::<f64>() / values.len() as f64;
    let max_rel_deviation = if kappa > 0.0 {
        values
            .iter()
            .map(|v| (v - kappa).abs() / kappa)
            .fold(0.0f64, f64::max)
    } else {
        0.0
    };
    Ok(KappaReport {
        kappa,
        max_rel_deviation,
        samples: values.len(),
    })
}

/// The comparison function Ψ: either the paper-shaped five-term sum or a
/// generic positive combination of powers. Ψ(0) = 0 in both forms.
#[derive(Debug, Clone)]
pub enum PsiSpec {
    /// c₂(τ + τ^{1/2} + τ^{1/p} + τ^{2/p} + τ^{3/p})
    Standard { c2: f64, p: f64 },
    /// Σ coefficient · τ^exponent
    Generic { terms: Vec<(f64, f64)> },
}

impl PsiSpec {
    pub fn eval(&self, tau: f64) -> f64 {
        let tau = tau.max(0.0);
        match self {
            PsiSpec::Standard { c2, p } => {
                c2 * (tau
                    + tau.sqrt()
                    + tau.powf(1.0 / p)
                    + tau.powf(2.0 / p)
                    + tau.powf(3.0 / p))
            }
            PsiSpec::Generic { terms } => {
                terms.iter().map(|&(c, e)| c * tau.powf(e)).sum()
            }
        }
    }

    fn validate(&self) -> Result<(), DiagnosticsError> {
        let ok = match self {
            PsiSpec::Standard { c2, p } => *c2 > 0.0 && *p >= 1.0,
            PsiSpec::Generic { terms } => {
                !terms.is_empty()
                    && terms.iter().all(|&(c, e)| c >= 0.0 && e > 0.0)
                    && terms.iter().any(|&(c, _)| c > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(DiagnosticsError::NotStrictlyIncreasingPsi)
        }
    }
}

/// Outcome of the comparison-lemma verification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ComparisonVerdict {
    Holds,
    HypothesisFailed { which: String, t: f64 },
    ConclusionFailed { t: f64 },
}

/// Checks the lemma's hypotheses on the samples: z ≤ Ψ(z′) + (1−δ)φ,
/// φ ≥ δ⁻¹Ψ(φ′), z(T) ≤ φ(T); then the conclusion z ≤ φ throughout.
/// z′ is taken by central differences (one-sided at the ends).
pub fn comparison_check(
    grid: &[f64],
    z: &[f64],
    psi: &PsiSpec,
    delta: f64,
    phi: (f64, f64),
) -> Result<ComparisonVerdict, DiagnosticsError> {
    assert!(delta > 0.0 && delta < 1.0, "δ must lie in (0, 1)");
    psi.validate()?;
    if grid.len() != z.len() || grid.len() < 3 {
        return Err(DiagnosticsError::GridMismatch(
            "need ≥ 3 matching samples".into(),
        ));
    }
    let spacing = grid[1] - grid[0];
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - spacing).abs() > 1e-12 {
            return Err(DiagnosticsError::GridMismatch("nonuniform spacing".into()));
        }
    }
    let (slope, intercept) = phi;
    let phi_at = |t: f64| slope * t + intercept;
    let n = grid.len();
    let zprime = |j: usize| -> f64 {
        if j == 0 {
            (z[1] - z[0]) / spacing
        } else if j == n - 1 {
            (z[n - 1] - z[n - 2]) / spacing
        } else {
            (z[j + 1] - z[j - 1]) / (2.0 * spacing)
        }
    };
    let slack = |scale: f64| 1e-9 * scale.abs().max(1.0);
    for j in 0..n {
        let t = grid[j];
        let bound = psi.eval(zprime(j)) + (1.0 - delta) * phi_at(t);
        if z[j] > bound + slack(bound) {
            return Ok(ComparisonVerdict::HypothesisFailed {
                which: format!("z ≤ Ψ(z′) + (1−δ)φ (z = {}, bound = {bound})", z[j]),
                t,
            });
        }
        let phi_bound = psi.eval(slope) / delta;
        if phi_at(t) < phi_bound - slack(phi_bound) {
            return Ok(ComparisonVerdict::HypothesisFailed {
                which: format!("φ ≥ δ⁻¹Ψ(φ′) (φ = {}, bound = {phi_bound})", phi_at(t)),
                t,
            });
        }
    }
    let t_end = grid[n - 1];
    if z[n - 1] > phi_at(t_end) + slack(phi_at(t_end)) {
        return Ok(ComparisonVerdict::HypothesisFailed {
            which: "z(T) ≤ φ(T)".into(),
            t: t_end,
        });
    }
    for j in 0..n {
        if z[j] > phi_at(grid[j]) + slack(phi_at(grid[j])) {
            return Ok(ComparisonVerdict::ConclusionFailed { t: grid[j] });
        }
    }
    Ok(ComparisonVerdict::Holds)
}

/// Which growth regime the tail estimate targets.
#[derive(Debug, Clone, Copy)]
pub enum BlowupBound {
    /// Ψ(τ) ≲ τ^m with m > 1: estimate liminf t^{−m/(m−1)} z(t).
    Power { m: f64 },
    /// Ψ(τ) ≲ cτ: estimate liminf e^{−t/c} z(t).
    Linear { c: f64 },
}

/// Minimum of the normalized tail (samples in the upper half of the grid,
/// t > 0 only). Positive values are consistent with the blow-up rate.
pub fn blowup_rate(
    grid: &[f64],
    z: &[f64],
    bound: BlowupBound,
) -> Result<f64, DiagnosticsError> {
    if grid.len() != z.len() || grid.is_empty() {
        return Err(DiagnosticsError::GridMismatch("mismatched samples".into()));
    }
    for w in z.windows(2) {
        if w[1] < w[0] - 1e-12 * w[0].abs().max(1.0) {
            return Err(DiagnosticsError::HypothesisViolated(
                "z must be nondecreasing".into(),
            ));
        }
    }
    if z.iter().all(|&v| v == 0.0) {
        return Err(DiagnosticsError::HypothesisViolated(
            "z is identically zero".into(),
        ));
    }
    match bound {
        BlowupBound::Power { m } if m <= 1.0 => {
            return Err(DiagnosticsError::HypothesisViolated(format!(
                "power bound needs m > 1, got {m}"
            )));
        }
        BlowupBound::Linear { c } if c <= 0.0 => {
            return Err(DiagnosticsError::HypothesisViolated(format!(
                "linear bound needs c > 0, got {c}"
            )));
        }
        _ => {}
    }
    let t_mid = 0.5 * (grid[0] + grid[grid.len() - 1]);
    let mut min = f64::INFINITY;
    for (t, v) in grid.iter().zip(z) {
        if *t <= 0.0 || *t < t_mid {
            continue;
        }
        let scaled = match bound {
            BlowupBound::Power { m } => t.powf(-m / (m - 1.0)) * v,
            BlowupBound::Linear { c } => (-t / c).exp() * v,
        };
        min = min.min(scaled);
    }
    if min.is_finite() {
        Ok(min)
    } else {
        Err(DiagnosticsError::TooFewSamples { got: 0, need: 1 })
    }
}

/// Pointwise lower-bound check |∂v₁/∂x₂| ≥ c|x₂|^{1/(p−1)} on one outlet.
#[derive(Debug, Clone, Serialize)]
pub struct ShearReport {
    /// Largest c for which the bound holds at every checked point.
    pub max_admissible_c: f64,
    /// Area carried by quadrature points violating the requested c.
    pub violation_measure: f64,
    pub checked_points: usize,
}

pub fn shear_bound_check(
    sys: &FemSystem,
    state: &[f64],
    outlet: Outlet,
    c: f64,
) -> ShearReport {
    let p = sys.law().p();
    let expo = 1.0 / (p - 1.0);
    let sign = outlet.sign();
    let mut max_c = f64::INFINITY;
    let mut violation = 0.0;
    let mut count = 0usize;
    sys.for_each_quad_point(state, |x, w, s| {
        if x[0] * sign <= 0.0 {
            return;
        }
        let weight = x[1].abs().powf(expo);
        if weight < 1e-9 {
            return;
        }
        let deriv = s.grad_v[0][1].abs();
        let ratio = deriv / weight;
        max_c = max_c.min(ratio);
        if deriv < c * weight {
            violation += w;
        }
        count += 1;
    });
    ShearReport {
        max_admissible_c: if count == 0 { 0.0 } else { max_c },
        violation_measure: violation,
        checked_points: count,
    }
}

/// ∫_region |D(v)|^{p−2} |D(w)|², the weighted dissipation of a probe
/// field w against the solution field v = u + a.
pub fn weighted_dissipation(
    sys: &FemSystem,
    state: &[f64],
    probe: &dyn ProbeField,
    region: &Slice,
) -> Result<f64, DiagnosticsError> {
    let limit = meshed_half_length(sys);
    if region.t1 > limit + 1e-12 || region.t0 >= region.t1 {
        return Err(DiagnosticsError::RegionMismatch(format!(
            "slice ({}, {}] vs meshed half-length {limit}",
            region.t0, region.t1
        )));
    }
    let p = sys.law().p();
    let mut acc = 0.0;
    sys.for_each_quad_point(state, |x, w, s| {
        if !region.contains(x) {
            return;
        }
        let dv = strain_rate(&s.grad_v);
        let dw = strain_rate(&probe.grad(x));
        let dn = tensor_norm(&dv);
        acc += w * dn.powf(p - 2.0) * tensor_norm(&dw).powi(2);
    });
    Ok(acc)
}

/// Exponent bookkeeping in exact rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum QExponent {
    Fixed(Ratio<i64>),
    /// n = 2: any value in [1, ∞) works.
    AnyAtLeastOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentTable {
    pub p: Ratio<i64>,
    pub p_prime: Ratio<i64>,
    /// None encodes p* = ∞ (p ≥ n).
    pub p_star: Option<Ratio<i64>>,
    pub q: QExponent,
    /// l = 2q/(p + q − 2) for the fixed-q case.
    pub l: Option<Ratio<i64>>,
}

pub fn exponents(p: Ratio<i64>, n: u32) -> Result<ExponentTable, DiagnosticsError> {
    if p < Ratio::new(2, 1) {
        return Err(DiagnosticsError::BadExponent(format!("p = {p} < 2")));
    }
    if n != 2 && n != 3 {
        return Err(DiagnosticsError::BadExponent(format!("n = {n} not in {{2, 3}}")));
    }
    let one = Ratio::new(1, 1);
    let two = Ratio::new(2, 1);
    let nr = Ratio::new(n as i64, 1);
    let p_prime = p / (p - one);
    let p_star = if p < nr { Some(nr * p / (nr - p)) } else { None };
    let (q, l) = if n == 3 {
        let q = two * p + two;
        let l = two * q / (p + q - two);
        (QExponent::Fixed(q), Some(l))
    } else {
        (QExponent::AnyAtLeastOne, None)
    };
    Ok(ExponentTable {
        p,
        p_prime,
        p_star,
        q,
        l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{BackgroundField, DofMap, FemSystem, PowerLaw, ZeroBackground};
    use crate::geometry::{straight_channel, Mesh};
    use crate::solver::PoiseuilleBackground;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_state_has_zero_energy() {
        let mesh = straight_channel().truncate(2.0).unwrap().mesh(0.2).unwrap();
        let bg = ZeroBackground;
        let sys = FemSystem::new(&mesh, PowerLaw::new(3.0, 2.0).unwrap(), &bg);
        let state = vec![0.0; sys.n_dofs()];
        assert_eq!(dirichlet_energy(&sys, &state, 1.5).unwrap(), (0.0, 0.0));
        assert!(matches!(
            dirichlet_energy(&sys, &state, 2.5),
            Err(DiagnosticsError::WindowExceedsDomain { .. })
        ));
    }

    #[test]
    fn unit_shear_field_has_unit_cubed_energy() {
        // u = (x₂, 0) on the unit square: |∇u| ≡ 1, so E_p = area = 1.
        let mesh = Mesh::rectangle(1.0, 1.0, 0.25).unwrap();
        let bg = ZeroBackground;
        let sys = FemSystem::new(&mesh, PowerLaw::unbounded(3.0).unwrap(), &bg);
        let mut state = vec![0.0; sys.n_dofs()];
        for node in 0..sys.dofs().n_scalar_nodes() {
            state[DofMap::velocity_dof(node, 0)] = sys.dofs().node_coords(node)[1];
        }
        let (e2, ep) = dirichlet_energy(&sys, &state, 1.0).unwrap();
        assert_relative_eq!(e2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ep, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn poiseuille_energy_matches_profile_integral() {
        // |∇v_P| = |x₂|^{1/2} at p = 3, so ∫|∇v_P|³ over Ω_t is
        // 2t · 2∫₀^{1/2} s^{3/2} ds = 2t · √2/10.
        let domain = straight_channel();
        let mesh = domain.truncate(2.0).unwrap().mesh(0.05).unwrap();
        let bg = ZeroBackground;
        let sys = FemSystem::new(&mesh, PowerLaw::unbounded(3.0).unwrap(), &bg);
        let profile = PoiseuilleBackground::new(3.0);
        let state = sys.interpolate_velocity(&|x: [f64; 2]| [profile.profile(x[1]), 0.0]);
        let (_, ep) = dirichlet_energy(&sys, &state, 1.0).unwrap();
        let exact = 2.0 * 2.0f64.sqrt() / 10.0;
        assert!(
            (ep - exact).abs() <= 0.01 * exact,
            "E_p = {ep} vs exact {exact}"
        );
    }

    #[test]
    fn z_series_closed_forms() {
        let grid: Vec<f64> = (0..=32).map(|j| j as f64 * 0.125).collect();
        let etas = [1.0, 2.0, 3.5];

        let yc: Vec<f64> = grid.iter().map(|_| 2.5).collect();
        let (z, zp) = z_series(&grid, &yc, &etas).unwrap();
        assert!(z.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        assert!(zp.iter().all(|&v| v.abs() < 1e-12));

        let ylin: Vec<f64> = grid.clone();
        let (z, zp) = z_series(&grid, &ylin, &etas).unwrap();
        for (i, &eta) in etas.iter().enumerate() {
            assert_relative_eq!(z[i], eta - 0.5, epsilon = 1e-12);
            assert_relative_eq!(zp[i], 1.0, epsilon = 1e-12);
        }

        // Trapezoid on t² carries the exact composite error h²/6 per unit
        // window; the closed form holds to that resolution and z′ exactly.
        let ysq: Vec<f64> = grid.iter().map(|t| t * t).collect();
        let (z, zp) = z_series(&grid, &ysq, &etas).unwrap();
        for (i, &eta) in etas.iter().enumerate() {
            let exact = eta * eta - eta + 1.0 / 3.0;
            assert!((z[i] - exact).abs() <= 1.0 / 300.0, "z = {} vs {exact}", z[i]);
            assert_relative_eq!(zp[i], 2.0 * eta - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn z_series_rejects_bad_grids() {
        let grid = [0.0, 0.125, 0.3];
        let y = [0.0, 1.0, 2.0];
        assert!(matches!(
            z_series(&grid, &y, &[1.0]),
            Err(DiagnosticsError::GridMismatch(_))
        ));
        let grid: Vec<f64> = (0..=16).map(|j| j as f64 * 0.3).collect();
        let y = vec![1.0; 17];
        assert!(matches!(
            z_series(&grid, &y, &[3.0]),
            Err(DiagnosticsError::GridMismatch(_))
        ));
    }

    #[test]
    fn sandwich_holds_for_monotone_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let grid: Vec<f64> = (0..=40).map(|j| j as f64 * 0.125).collect();
            let mut y = vec![0.0f64];
            for _ in 1..grid.len() {
                let last = *y.last().unwrap();
                y.push(last + rng.gen_range(0.0..1.0));
            }
            let etas: Vec<f64> = (8..=40).map(|j| j as f64 * 0.125).collect();
            let (z, _) = z_series(&grid, &y, &etas).unwrap();
            for (i, &eta) in etas.iter().enumerate() {
                let hi = (eta / 0.125).round() as usize;
                let lo = hi - 8;
                assert!(y[lo] - 1e-12 <= z[i] && z[i] <= y[hi] + 1e-12);
            }
        }
    }

    #[test]
    fn slice_dissipation_translation_invariance() {
        // Pure profile flow: every unit slice carries the same dissipation.
        let domain = straight_channel();
        let mesh = domain.truncate(4.0).unwrap().mesh(0.2).unwrap();
        let bg = PoiseuilleBackground::new(3.0);
        let sys = FemSystem::new(&mesh, PowerLaw::unbounded(3.0).unwrap(), &bg);
        let state = vec![0.0; sys.n_dofs()];
        let mut values = Vec::new();
        for t in [1.0, 2.0, 3.0, 4.0] {
            values.push(slice_dissipation(&sys, &state, Outlet::Two, t).unwrap());
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in &values {
            assert!((v - mean).abs() <= 0.005 * mean, "slice values {values:?}");
        }
        assert!(matches!(
            slice_dissipation(&sys, &state, Outlet::Two, 0.5),
            Err(DiagnosticsError::SliceOutsideMesh { .. })
        ));
        assert!(matches!(
            slice_dissipation(&sys, &state, Outlet::Two, 4.5),
            Err(DiagnosticsError::SliceOutsideMesh { .. })
        ));
    }

    #[test]
    fn slices_telescope_to_the_window_total() {
        let domain = straight_channel();
        let mesh = domain.truncate(4.0).unwrap().mesh(0.2).unwrap();
        let bg = PoiseuilleBackground::new(3.0);
        let sys = FemSystem::new(&mesh, PowerLaw::unbounded(3.0).unwrap(), &bg);
        // Nontrivial u on top of the profile keeps the test honest.
        let state = sys.interpolate_velocity(&|x: [f64; 2]| {
            [
                0.1 * (x[0] * 0.7).sin() * (x[1] * 2.0).cos(),
                0.05 * (x[0]).cos() * x[1],
            ]
        });
        let sum: f64 = [2.0, 3.0, 4.0]
            .iter()
            .map(|&t| slice_dissipation(&sys, &state, Outlet::One, t).unwrap())
            .sum();
        let p = 3.0;
        let mut total = 0.0;
        sys.for_each_quad_point(&state, |x, w, s| {
            let along = -x[0];
            if along > 1.0 && along <= 4.0 {
                total += w * frob2(&s.grad_v).powf(0.5 * p);
            }
        });
        assert_relative_eq!(sum, total, max_relative = 1e-9);
    }

    #[test]
    fn series_matches_direct_energies_and_slices() {
        let domain = straight_channel();
        let mesh = domain.truncate(3.0).unwrap().mesh(0.2).unwrap();
        let bg = PoiseuilleBackground::new(3.0);
        let sys = FemSystem::new(&mesh, PowerLaw::new(3.0, 3.0).unwrap(), &bg);
        let state = sys.interpolate_velocity(&|x: [f64; 2]| {
            [0.2 * (x[0]).sin() * x[1], 0.1 * x[1] * x[1] * x[0]]
        });
        let series = build_series(&sys, &state, 3.0).unwrap();
        assert_eq!(series.grid.len(), 25);
        for &t in &[1.0, 2.125, 3.0] {
            let j = (t / GRID_SPACING).round() as usize;
            let (e2, ep) = dirichlet_energy(&sys, &state, t).unwrap();
            assert_relative_eq!(series.y2[j], e2 / 3.0, max_relative = 1e-12);
            assert_relative_eq!(series.yp[j], ep, max_relative = 1e-12);
            let d1 = slice_dissipation(&sys, &state, Outlet::One, t).unwrap();
            let d2 = slice_dissipation(&sys, &state, Outlet::Two, t).unwrap();
            assert_relative_eq!(series.slice1[j], d1, max_relative = 1e-12);
            assert_relative_eq!(series.slice2[j], d2, max_relative = 1e-12);
        }
        // Monotone y and the sandwich at sub-element resolution.
        for j in 1..series.grid.len() {
            assert!(series.y(j) >= series.y(j - 1) - 1e-15);
        }
        for j in 8..series.grid.len() {
            assert!(series.y(j - 8) - 1e-12 <= series.z[j]);
            assert!(series.z[j] <= series.y(j) + 1e-12);
        }
        let csv = series.csv();
        assert!(csv.starts_with("t,y2,yp,z,zprime,slice1,slice2\n"));
        assert_eq!(csv.lines().count(), 26);
    }

    #[test]
    fn growth_rate_examples() {
        let grid: Vec<f64> = (1..=20).map(|j| j as f64 * 0.5).collect();
        let y: Vec<f64> = grid.iter().map(|t| 3.0 * t + 1.0).collect();
        let rep = growth_rate(&grid, &y).unwrap();
        assert_relative_eq!(rep.c1, 3.0, epsilon = 1e-9);
        assert_relative_eq!(rep.c2, 1.0, epsilon = 1e-9);
        assert!(rep.rel_residual < 1e-12);
        assert!(!rep.superlinear);
        assert_relative_eq!(rep.sup_ratio, 3.0 + 1.0 / 0.5, epsilon = 1e-12);

        let ysq: Vec<f64> = grid.iter().map(|t| t * t).collect();
        let rep = growth_rate(&grid, &ysq).unwrap();
        assert!(rep.superlinear, "residual {}", rep.rel_residual);

        assert!(matches!(
            growth_rate(&grid[..2], &y[..2]),
            Err(DiagnosticsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn comparison_identity_case() {
        let grid: Vec<f64> = (0..=32).map(|j| j as f64 * 0.125).collect();
        let z: Vec<f64> = grid.iter().map(|t| t * t / 4.0).collect();
        let psi = PsiSpec::Generic {
            terms: vec![(1.0, 2.0)],
        };
        // φ = 2t + 8 dominates t²/4 on [0, 4] and satisfies φ ≥ δ⁻¹Ψ(2).
        let verdict = comparison_check(&grid, &z, &psi, 0.5, (2.0, 8.0)).unwrap();
        assert_eq!(verdict, ComparisonVerdict::Holds);
    }

    #[test]
    fn comparison_zero_case_and_violations() {
        let grid: Vec<f64> = (0..=16).map(|j| j as f64 * 0.25).collect();
        let zero = vec![0.0; grid.len()];
        let psi = PsiSpec::Standard { c2: 1.0, p: 3.0 };
        let verdict = comparison_check(&grid, &zero, &psi, 0.5, (1.0, 10.0)).unwrap();
        assert_eq!(verdict, ComparisonVerdict::Holds);

        // φ too small against δ⁻¹Ψ(φ′) is a reported hypothesis failure.
        let verdict = comparison_check(&grid, &zero, &psi, 0.5, (1.0, 0.0)).unwrap();
        assert!(matches!(verdict, ComparisonVerdict::HypothesisFailed { .. }));

        let bad_psi = PsiSpec::Generic {
            terms: vec![(-1.0, 2.0)],
        };
        assert!(matches!(
            comparison_check(&grid, &zero, &bad_psi, 0.5, (1.0, 10.0)),
            Err(DiagnosticsError::NotStrictlyIncreasingPsi)
        ));
    }

    #[test]
    fn blowup_rate_exact_cases() {
        let grid: Vec<f64> = (1..=64).map(|j| j as f64 * 0.125).collect();
        let z: Vec<f64> = grid.iter().map(|t| t * t / 4.0).collect();
        let r = blowup_rate(&grid, &z, BlowupBound::Power { m: 2.0 }).unwrap();
        assert!((r - 0.25).abs() <= 1e-12, "rate {r}");

        let ze: Vec<f64> = grid.iter().map(|t| t.exp()).collect();
        let r = blowup_rate(&grid, &ze, BlowupBound::Linear { c: 1.0 }).unwrap();
        assert!((r - 1.0).abs() <= 1e-12, "rate {r}");

        let dec: Vec<f64> = grid.iter().map(|t| -t).collect();
        assert!(matches!(
            blowup_rate(&grid, &dec, BlowupBound::Power { m: 2.0 }),
            Err(DiagnosticsError::HypothesisViolated(_))
        ));
        let zeros = vec![0.0; grid.len()];
        assert!(matches!(
            blowup_rate(&grid, &zeros, BlowupBound::Power { m: 2.0 }),
            Err(DiagnosticsError::HypothesisViolated(_))
        ));
    }

    #[test]
    fn shear_bound_on_exact_profile() {
        let domain = straight_channel();
        let mesh = domain.truncate(3.0).unwrap().mesh(0.2).unwrap();
        let bg = PoiseuilleBackground::new(3.0);
        let sys = FemSystem::new(&mesh, PowerLaw::unbounded(3.0).unwrap(), &bg);
        let state = vec![0.0; sys.n_dofs()];
        // |∂v₁/∂x₂| = |x₂|^{1/(p−1)} exactly, so c up to 1 is admissible.
        let rep = shear_bound_check(&sys, &state, Outlet::Two, 0.9);
        assert_relative_eq!(rep.max_admissible_c, 1.0, epsilon = 1e-10);
        assert_eq!(rep.violation_measure, 0.0);
        assert!(rep.checked_points > 0);
        let rep = shear_bound_check(&sys, &state, Outlet::Two, 1.1);
        assert!(rep.violation_measure > 2.5);

        let zbg = ZeroBackground;
        let zero_sys = FemSystem::new(&mesh, PowerLaw::unbounded(3.0).unwrap(), &zbg);
        let rep = shear_bound_check(&zero_sys, &state, Outlet::Two, 0.1);
        assert_eq!(rep.max_admissible_c, 0.0);
    }

    #[test]
    fn weighted_dissipation_identities() {
        struct ProfileProbe(PoiseuilleBackground);
        impl ProbeField for ProfileProbe {
            fn value(&self, x: [f64; 2]) -> [f64; 2] {
                self.0.eval_with_grad(x).0
            }
            fn grad(&self, x: [f64; 2]) -> Tensor2 {
                self.0.eval_with_grad(x).1
            }
        }
        struct ZeroProbe;
        impl ProbeField for ZeroProbe {
            fn value(&self, _: [f64; 2]) -> [f64; 2] {
                [0.0; 2]
            }
            fn grad(&self, _: [f64; 2]) -> Tensor2 {
                [[0.0; 2]; 2]
            }
        }
        let domain = straight_channel();
        let mesh = domain.truncate(3.0).unwrap().mesh(0.1).unwrap();
        let bg = PoiseuilleBackground::new(3.0);
        let region = domain.slice(Outlet::Two, 1.0, 2.0).unwrap();
        let state_len;
        {
            let sys = FemSystem::new(&mesh, PowerLaw::unbounded(3.0).unwrap(), &bg);
            state_len = sys.n_dofs();
            let state = vec![0.0; state_len];
            assert_eq!(
                weighted_dissipation(&sys, &state, &ZeroProbe, &region).unwrap(),
                0.0
            );
            // v = w = profile collapses the weights to |D(v)|^p.
            let wd = weighted_dissipation(&sys, &state, &ProfileProbe(bg), &region).unwrap();
            let mut direct = 0.0;
            sys.for_each_quad_point(&state, |x, w, s| {
                if region.contains(x) {
                    direct += w * tensor_norm(&strain_rate(&s.grad_v)).powi(3);
                }
            });
            assert_relative_eq!(wd, direct, max_relative = 1e-12);
            let bad = domain.slice(Outlet::Two, 1.0, 5.0).unwrap();
            assert!(matches!(
                weighted_dissipation(&sys, &state, &ZeroProbe, &bad),
                Err(DiagnosticsError::RegionMismatch(_))
            ));
        }
        // p = 2: the weight is identically 1.
        let sys = FemSystem::new(&mesh, PowerLaw::unbounded(2.0).unwrap(), &bg);
        let state = vec![0.0; state_len];
        let wd = weighted_dissipation(&sys, &state, &ProfileProbe(bg), &region).unwrap();
        let mut plain = 0.0;
        sys.for_each_quad_point(&state, |x, w, _| {
            if region.contains(x) {
                let dw = strain_rate(&bg.eval_with_grad(x).1);
                plain += w * tensor_norm(&dw).powi(2);
            }
        });
        assert_relative_eq!(wd, plain, max_relative = 1e-12);
    }

    #[test]
    fn exponent_table_is_exact() {
        let t = exponents(Ratio::new(4, 1), 3).unwrap();
        assert_eq!(t.p_prime, Ratio::new(4, 3));
        assert_eq!(t.q, QExponent::Fixed(Ratio::new(10, 1)));
        assert_eq!(t.l, Some(Ratio::new(5, 3)));
        assert_eq!(t.p_star, None);

        let t = exponents(Ratio::new(2, 1), 3).unwrap();
        assert_eq!(t.p_prime, Ratio::new(2, 1));
        assert_eq!(t.q, QExponent::Fixed(Ratio::new(6, 1)));
        assert_eq!(t.l, Some(Ratio::new(2, 1)));
        assert_eq!(t.p_star, Some(Ratio::new(6, 1)));

        let t = exponents(Ratio::new(3, 1), 2).unwrap();
        assert_eq!(t.q, QExponent::AnyAtLeastOne);
        assert_eq!(t.l, None);
        assert_eq!(t.p_star, None);

        assert!(matches!(
            exponents(Ratio::new(3, 2), 3),
            Err(DiagnosticsError::BadExponent(_))
        ));
        assert!(matches!(
            exponents(Ratio::new(2, 1), 4),
            Err(DiagnosticsError::BadExponent(_))
        ));
    }

    #[test]
    fn kappa_zero_for_zero_field() {
        let domain = straight_channel();
        let mesh = domain.truncate(4.0).unwrap().mesh(0.2).unwrap();
        let bg = ZeroBackground;
        let sys = FemSystem::new(&mesh, PowerLaw::new(3.0, 4.0).unwrap(), &bg);
        let state = vec![0.0; sys.n_dofs()];
        let rep = kappa_fit(&sys, &state, 2.0, 3.0).unwrap();
        assert_eq!(rep.kappa, 0.0);
        assert_eq!(rep.max_rel_deviation, 0.0);
        assert_eq!(rep.samples, 4);
    }
}
