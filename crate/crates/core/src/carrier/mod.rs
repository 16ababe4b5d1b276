//! Divergence-free flux carrier fields.
//!
//! The planar carrier is a = α∇⊥ζ with stream function ζ = ψ(x₂/ρ), where ρ
//! is a smooth one-sided surrogate for the wall distance and ψ a C² ramp.
//! By construction div a = 0 identically, a vanishes near both walls and on
//! the whole lower band x₂ < 0, and the flux through every cross-section is
//! exactly α. The axisymmetric 3D variant lives in [`axisym`].

mod axisym;
mod probes;

pub use axisym::{build_carrier_3d, AxisymmetricOutlet, Carrier3d};
pub use probes::{BubbleProbe, ProbeField};

use crate::geometry::{CrossSection, GeometryError, Mesh, OutletDomain};
use crate::numerics::{bisect, integrate_1d_panels, TriangleRule};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CarrierError {
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("cutoff is not constant near the axis at x1 = {x1} (r = {r})")]
    EvaluationTooCloseToAxis { x1: f64, r: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Smooth surrogate ρ for the wall distance of a graph channel.
///
/// ρ is the Boltzmann-weighted mean of the two vertical wall gaps
/// u = f₂ − x₂ and v = x₂ − f₁ with temperature β:
///
///   ρ = (u e^{−u/β} + v e^{−v/β}) / (e^{−u/β} + e^{−v/β}).
///
/// A convex combination of u and v never drops below min(u, v), which in a
/// graph domain dominates the true boundary distance, so d ≤ ρ pointwise.
/// ρ stays strictly positive on the closed channel (≈ l₁ e^{−8} at a wall)
/// and is C^∞ wherever the profiles are.
#[derive(Debug, Clone)]
pub struct RegularizedDistance {
    domain: OutletDomain,
    /// Softmin temperature; fixed at l₁/8 so the wall floor l₁e^{−8} stays
    /// well below any mesh scale of interest.
    beta: f64,
}

/// Value, gradient, and Hessian of ρ at a point.
#[derive(Debug, Clone, Copy)]
pub struct DistanceJet {
    pub rho: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl RegularizedDistance {
    pub fn new(domain: &OutletDomain) -> Self {
        RegularizedDistance {
            beta: domain.l1() / 8.0,
            domain: domain.clone(),
        }
    }

    pub fn domain(&self) -> &OutletDomain {
        &self.domain
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Unchecked evaluation; well-defined for any x with finite profiles,
    /// including points slightly outside the walls (ρ then goes negative).
    pub fn jet(&self, x: [f64; 2]) -> DistanceJet {
        let ((f1, df1, ddf1), (f2, df2, ddf2)) = self.domain.walls2(x[0]);
        let u = f2 - x[1];
        let v = x[1] - f1;
        let b = self.beta;
        // Weights stabilized by the smaller gap; wu + wv = 1.
        let m = u.min(v);
        let (eu, ev) = (((m - u) / b).exp(), ((m - v) / b).exp());
        let z = eu + ev;
        let wu = eu / z;
        let wv = ev / z;
        let g = wu * wv;
        let delta = v - u;
        let rho = wu * u + wv * v;
        // d/du and d/dv of the Boltzmann mean.
        let su = wu + delta * g / b;
        let sv = wv - delta * g / b;
        // Second derivative structure: ρ_uu = ρ_vv = −ρ_uv =: s2.
        let s2 = -2.0 * g / b - delta * (1.0 - 2.0 * wu) * g / (b * b);
        // Chain rule through u(x) and v(x).
        let gu = [df2, -1.0];
        let gv = [-df1, 1.0];
        let grad = [su * gu[0] + sv * gv[0], su * gu[1] + sv * gv[1]];
        let dif = [gu[0] - gv[0], gu[1] - gv[1]];
        let mut hess = [[0.0f64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                hess[i][j] = s2 * dif[i] * dif[j];
            }
        }
        hess[0][0] += su * ddf2 - sv * ddf1;
        DistanceJet { rho, grad, hess }
    }

    pub fn rho(&self, x: [f64; 2]) -> f64 {
        self.jet(x).rho
    }
}

/// Checked regularized-distance evaluation for interior points.
pub fn regularized_distance(
    domain: &OutletDomain,
    x: [f64; 2],
) -> Result<DistanceJet, CarrierError> {
    if !domain.contains(x) {
        return Err(CarrierError::OutsideDomain(x[0], x[1]));
    }
    Ok(RegularizedDistance::new(domain).jet(x))
}

/// C² ramp from 0 to 1 over [s0, s1]: the quintic smoothstep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub s0: f64,
    pub s1: f64,
}

impl Cutoff {
    /// Planar variant: ramp over [0, 1].
    pub fn planar() -> Self {
        Cutoff { s0: 0.0, s1: 1.0 }
    }

    /// Axisymmetric variant: ramp over [1, 2], leaving a dead cone around
    /// the axis where the angle form is singular.
    pub fn axisymmetric() -> Self {
        Cutoff { s0: 1.0, s1: 2.0 }
    }

    /// (ψ, ψ′, ψ″) at s, clamped outside [s0, s1].
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let w = self.s1 - self.s0;
        let t = (s - self.s0) / w;
        if t <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if t >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        let v = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        let d = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        let dd = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
        (v, d / w, dd / (w * w))
    }

    /// sup|ψ′| = 15/(8w), attained at the midpoint.
    pub fn sup_d1(&self) -> f64 {
        1.875 / (self.s1 - self.s0)
    }

    /// sup|ψ″| = 10/√3 / w², attained at t = (3 ± √3)/6.
    pub fn sup_d2(&self) -> f64 {
        10.0 / 3.0f64.sqrt() / (self.s1 - self.s0).powi(2)
    }
}

/// Planar carrier field a = α∇⊥ζ, ζ = ψ(x₂/ρ).
#[derive(Debug, Clone)]
pub struct CarrierField {
    dist: RegularizedDistance,
    psi: Cutoff,
    alpha: f64,
}

/// Measured suprema of the unit carrier and its gradient.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CarrierBounds {
    pub sup_a_tilde: f64,
    pub sup_grad_a_tilde: f64,
    pub samples: usize,
}

/// Measured constants of the distance-derivative bounds
/// |∇ρ| ≤ k₁ and |Hess ρ| ≤ k₂/d.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DistanceBounds {
    pub k1: f64,
    pub k2: f64,
    pub samples: usize,
}

/// Quadrature flux through one cross-section, with a refinement-difference
/// error estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FluxEstimate {
    pub value: f64,
    pub error: f64,
}

/// Measured ratios of the carrier estimates: weighted load per probe (i),
/// worst unit-slice gradient mass (ii), linear-growth gradient mass (iii).
#[derive(Debug, Clone, Serialize)]
pub struct LemmaAReport {
    pub c_i: Vec<f64>,
    pub c_ii: f64,
    pub c_iii: f64,
}

impl LemmaAReport {
    pub fn max_c_i(&self) -> f64 {
        self.c_i.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.c_i.iter().all(|c| c.is_finite()) && self.c_ii.is_finite() && self.c_iii.is_finite()
    }
}

pub fn build_carrier_2d(domain: &OutletDomain, alpha: f64) -> CarrierField {
    CarrierField {
        dist: RegularizedDistance::new(domain),
        psi: Cutoff::planar(),
        alpha,
    }
}

impl CarrierField {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn domain(&self) -> &OutletDomain {
        self.dist.domain()
    }

    pub fn distance(&self) -> &RegularizedDistance {
        &self.dist
    }

    /// Stream-function value α·ζ(x).
    pub fn zeta(&self, x: [f64; 2]) -> f64 {
        let rho = self.dist.rho(x);
        self.alpha * self.psi.eval(x[1] / rho).0
    }

    /// Unit carrier ã and ∇ã (flux-one field; multiply by α for a).
    ///
    /// The divergence ∂₁ã₁ + ∂₂ã₂ cancels exactly in floating point: both
    /// entries are the same mixed value ζ₁₂, stored once.
    pub fn tilde_eval(&self, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let j = self.dist.jet(x);
        let (rho, x2) = (j.rho, x[1]);
        let s = x2 / rho;
        let (_, dpsi, ddpsi) = self.psi.eval(s);
        if dpsi == 0.0 && ddpsi == 0.0 {
            // Outside the ramp band ζ is locally constant.
            return ([0.0; 2], [[0.0; 2]; 2]);
        }
        let r2 = rho * rho;
        let s1 = -x2 * j.grad[0] / r2;
        let s2 = 1.0 / rho - x2 * j.grad[1] / r2;
        let sij = |i: usize, k: usize| {
            let mut v = -x2 * j.hess[i][k] / r2 + 2.0 * x2 * j.grad[i] * j.grad[k] / (rho * r2);
            if i == 1 {
                v -= j.grad[k] / r2;
            }
            if k == 1 {
                v -= j.grad[i] / r2;
            }
            v
        };
        let z1 = dpsi * s1;
        let z2 = dpsi * s2;
        let z11 = ddpsi * s1 * s1 + dpsi * sij(0, 0);
        let z12 = ddpsi * s1 * s2 + dpsi * sij(0, 1);
        let z22 = ddpsi * s2 * s2 + dpsi * sij(1, 1);
        // ã = ∇⊥ζ = (ζ₂, −ζ₁); rows of the gradient are ∇ã₁, ∇ã₂.
        ([z2, -z1], [[z12, z22], [-z11, -z12]])
    }

    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let (a, _) = self.tilde_eval(x);
        [self.alpha * a[0], self.alpha * a[1]]
    }

    pub fn eval_with_grad(&self, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (a, g) = self.tilde_eval(x);
        (
            [self.alpha * a[0], self.alpha * a[1]],
            [
                [self.alpha * g[0][0], self.alpha * g[0][1]],
                [self.alpha * g[1][0], self.alpha * g[1][1]],
            ],
        )
    }

    /// Central-difference divergence, as an independent check on the
    /// analytic construction.
    pub fn divergence_fd(&self, x: [f64; 2], h: f64) -> f64 {
        let d1 = (self.eval([x[0] + h, x[1]])[0] - self.eval([x[0] - h, x[1]])[0]) / (2.0 * h);
        let d2 = (self.eval([x[0], x[1] + h])[1] - self.eval([x[0], x[1] - h])[1]) / (2.0 * h);
        d1 + d2
    }

    /// Suprema of |ã| and |∇ã| over an n×n sample of |x₁| ≤ t.
    pub fn bounds(&self, t: f64, n: usize) -> CarrierBounds {
        let mut sup_a: f64 = 0.0;
        let mut sup_g: f64 = 0.0;
        let mut samples = 0;
        for i in 0..=n {
            let x1 = -t + 2.0 * t * i as f64 / n as f64;
            let (lo, hi) = self.domain().walls(x1);
            for k in 1..n {
                let x2 = lo + (hi - lo) * k as f64 / n as f64;
                let (a, g) = self.tilde_eval([x1, x2]);
                sup_a = sup_a.max((a[0] * a[0] + a[1] * a[1]).sqrt());
                sup_g = sup_g.max(frobenius(&g));
                samples += 1;
            }
        }
        CarrierBounds {
            sup_a_tilde: sup_a,
            sup_grad_a_tilde: sup_g,
            samples,
        }
    }

    /// Measured k₁ = sup|∇ρ| and k₂ = sup d·|Hess ρ| over interior samples,
    /// with d the vertical-gap lower surrogate min(u, v).
    pub fn distance_bounds(&self, t: f64, n: usize) -> DistanceBounds {
        let mut k1: f64 = 0.0;
        let mut k2: f64 = 0.0;
        let mut samples = 0;
        for i in 0..=n {
            let x1 = -t + 2.0 * t * i as f64 / n as f64;
            let (lo, hi) = self.domain().walls(x1);
            for k in 1..n {
                let x2 = lo + (hi - lo) * k as f64 / n as f64;
                let j = self.dist.jet([x1, x2]);
                let d = (hi - x2).min(x2 - lo);
                k1 = k1.max((j.grad[0] * j.grad[0] + j.grad[1] * j.grad[1]).sqrt());
                k2 = k2.max(d * frobenius(&j.hess));
                samples += 1;
            }
        }
        DistanceBounds { k1, k2, samples }
    }
}

fn frobenius(m: &[[f64; 2]; 2]) -> f64 {
    (m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]).sqrt()
}

/// Flux of the carrier through a cross-section, by panel quadrature.
///
/// The integrand x₂ ↦ a·n is C² with third-derivative jumps where the ramp
/// engages (x₂ = 0) and where it saturates (x₂ = ρ(x)); splitting panels at
/// both points restores spectral accuracy.
pub fn verify_flux(carrier: &CarrierField, section: &CrossSection) -> FluxEstimate {
    let x1 = section.x1;
    let integrand = |x2: f64| {
        let a = carrier.eval([x1, x2]);
        a[0] * section.normal[0] + a[1] * section.normal[1]
    };
    let mut breaks = vec![section.lo];
    if section.lo < 0.0 && 0.0 < section.hi {
        breaks.push(0.0);
    }
    // Saturation height: the fixed point x₂ = ρ(x₁, x₂). g(0) < 0 and
    // g(hi) > 0 because ρ stays positive at the wall.
    let g = |x2: f64| x2 - carrier.distance().rho([x1, x2]);
    if g(section.hi) > 0.0 && g(0.0f64.max(section.lo)) < 0.0 {
        breaks.push(bisect(&g, 0.0f64.max(section.lo), section.hi, 200));
    }
    breaks.push(section.hi);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quad = |panels: usize| -> f64 {
        breaks
            .windows(2)
            .map(|w| integrate_1d_panels(&integrand, w[0], w[1], panels, 32))
            .sum()
    };
    let coarse = quad(2);
    let fine = quad(4);
    FluxEstimate {
        value: fine,
        error: (fine - coarse).abs().max(f64::EPSILON * carrier.alpha().abs()),
    }
}

/// Measures the carrier-estimate ratios over a meshed truncation of size t.
///
/// With α = 0 every ratio degenerates to 0/0 and is reported as zero.
pub fn verify_lemma_a_estimates(
    carrier: &CarrierField,
    mesh: &Mesh,
    p: f64,
    t: f64,
    probes: &[&dyn ProbeField],
) -> LemmaAReport {
    assert!(p >= 2.0, "exponent p = {p} out of range");
    if carrier.alpha() == 0.0 {
        return LemmaAReport {
            c_i: vec![0.0; probes.len()],
            c_ii: 0.0,
            c_iii: 0.0,
        };
    }
    let rule = TriangleRule::degree6();
    let pp = p / (p - 1.0);
    let nslabs = t.ceil() as usize;
    // Gradient mass per unit slab, indexed by ⌊|x₁|⌋ over both outlets.
    let mut slab_grad = vec![0.0f64; 2 * nslabs];
    let mut grad_total = 0.0f64;
    let mut num_i = vec![0.0f64; probes.len()];
    let mut probe_semi = vec![0.0f64; probes.len()];
    for tri in 0..mesh.num_triangles() {
        let pcoords = mesh.tri_coords(tri);
        let area = mesh.tri_area(tri);
        for (pt, wt) in rule.points.iter().zip(&rule.weights) {
            let x = [
                pt[0] * pcoords[0][0] + pt[1] * pcoords[1][0] + pt[2] * pcoords[2][0],
                pt[0] * pcoords[0][1] + pt[1] * pcoords[1][1] + pt[2] * pcoords[2][1],
            ];
            let w = wt * area;
            let (a, ga) = carrier.tilde_eval(x);
            let amag = (a[0] * a[0] + a[1] * a[1]).sqrt();
            let gmag = frobenius(&ga);
            grad_total += w * gmag.powf(p);
            let slab = (x[0].abs().floor() as usize).min(nslabs - 1);
            let side = usize::from(x[0] >= 0.0);
            slab_grad[2 * slab + side] += w * gmag.powf(p);
            for (k, probe) in probes.iter().enumerate() {
                let phi = probe.value(x);
                let gphi = probe.grad(x);
                let phimag = (phi[0] * phi[0] + phi[1] * phi[1]).sqrt();
                num_i[k] += w * (amag * phimag).powf(pp);
                probe_semi[k] += w * frobenius(&gphi).powf(p);
            }
        }
    }
    let c_i = num_i
        .iter()
        .zip(&probe_semi)
        .map(|(num, semi)| {
            let denom = t.powf((p - 2.0) / (p - 1.0)) * semi.powf(pp / p);
            num / denom
        })
        .collect();
    let worst_slab = slab_grad.iter().copied().fold(0.0, f64::max);
    LemmaAReport {
        c_i,
        c_ii: worst_slab,
        c_iii: grad_total / (t + 1.0),
    }
}
