//! Mixed finite elements for the regularized shear-thickening system.
//!
//! Velocity is continuous piecewise-quadratic, pressure continuous
//! piecewise-linear (the inf-sup stable Taylor–Hood pair). The momentum
//! residual tests −div{(1/T + |D(v)|^{p−2})D(v)} + (v·∇)v + ∇P − f against
//! quadratic fields vanishing on the whole boundary, with v = u + a for an
//! analytic background a. Convection is assembled in skew-symmetrized form
//! so the discrete energy identities of the continuous problem hold exactly.

mod assembly;
mod dof;

pub use assembly::{BodyForce, FemSystem, LinearizationKind, QuadSample, Solution};
pub(crate) use assembly::{element_geometry, p2_basis};
pub use dof::DofMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FemError {
    #[error("need exponent p >= 2, got {0}")]
    BadExponent(f64),
    #[error("need floor parameter T > 0, got {0}")]
    BadFloor(f64),
    #[error("state has {got} coefficients, system has {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// Constitutive description: stress (1/T + |D|^{p−2})D with p ≥ 2 and
/// viscosity floor 1/T (T = ∞ drops the floor entirely).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    p: f64,
    inv_t: f64,
}

impl PowerLaw {
    pub fn new(p: f64, t: f64) -> Result<Self, FemError> {
        if !(p >= 2.0) {
            return Err(FemError::BadExponent(p));
        }
        if !(t > 0.0) {
            return Err(FemError::BadFloor(t));
        }
        Ok(PowerLaw { p, inv_t: 1.0 / t })
    }

    /// Law without the viscosity floor (the formal T → ∞ limit).
    pub fn unbounded(p: f64) -> Result<Self, FemError> {
        if !(p >= 2.0) {
            return Err(FemError::BadExponent(p));
        }
        Ok(PowerLaw { p, inv_t: 0.0 })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent p′ = p/(p−1).
    pub fn conjugate(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn floor(&self) -> f64 {
        self.inv_t
    }

    /// Scalar viscosity 1/T + |D|^{p−2} at strain magnitude |D| = dn.
    pub fn viscosity(&self, dn: f64) -> f64 {
        if self.p == 2.0 {
            self.inv_t + 1.0
        } else {
            self.inv_t + dn.powf(self.p - 2.0)
        }
    }
}

pub type Tensor2 = [[f64; 2]; 2];

/// Symmetric part of a velocity gradient.
pub fn strain_rate(grad_v: &Tensor2) -> Tensor2 {
    let off = 0.5 * (grad_v[0][1] + grad_v[1][0]);
    [[grad_v[0][0], off], [off, grad_v[1][1]]]
}

pub fn tensor_norm(t: &Tensor2) -> f64 {
    (t[0][0] * t[0][0] + t[0][1] * t[0][1] + t[1][0] * t[1][0] + t[1][1] * t[1][1]).sqrt()
}

pub fn tensor_dot(a: &Tensor2, b: &Tensor2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Stress S_T(D) = (1/T + |D|^{p−2})D.
pub fn stress(d: &Tensor2, law: &PowerLaw) -> Tensor2 {
    let nu = law.viscosity(tensor_norm(d));
    [[nu * d[0][0], nu * d[0][1]], [nu * d[1][0], nu * d[1][1]]]
}

/// Directional derivative dS(D)[E] = ν(|D|)E + (p−2)|D|^{p−4}(D:E)D.
///
/// At D = 0 the power term vanishes for p > 2 (and its coefficient is zero
/// for p = 2), so only the frozen-viscosity part survives.
pub fn stress_derivative(d: &Tensor2, e: &Tensor2, law: &PowerLaw) -> Tensor2 {
    let dn = tensor_norm(d);
    let nu = law.viscosity(dn);
    let mut out = [[nu * e[0][0], nu * e[0][1]], [nu * e[1][0], nu * e[1][1]]];
    if law.p > 2.0 && dn > 1e-12 {
        let c = (law.p - 2.0) * dn.powf(law.p - 4.0) * tensor_dot(d, e);
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += c * d[i][j];
            }
        }
    }
    out
}

/// Analytic background velocity entering v = u + a.
pub trait BackgroundField {
    fn eval_with_grad(&self, x: [f64; 2]) -> ([f64; 2], Tensor2);
}

impl BackgroundField for crate::carrier::CarrierField {
    fn eval_with_grad(&self, x: [f64; 2]) -> ([f64; 2], Tensor2) {
        crate::carrier::CarrierField::eval_with_grad(self, x)
    }
}

/// Zero background: the plain homogeneous problem in u alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroBackground;

impl BackgroundField for ZeroBackground {
    fn eval_with_grad(&self, _x: [f64; 2]) -> ([f64; 2], Tensor2) {
        ([0.0; 2], [[0.0; 2]; 2])
    }
}

/// Sparse coordinate-format export for external inspection.
pub fn write_matrix_market<W: std::io::Write>(
    out: &mut W,
    rows: usize,
    cols: usize,
    triplets: &[(usize, usize, f64)],
) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", rows, cols, triplets.len())?;
    for &(i, j, v) in triplets {
        writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn strain_rate_examples() {
        // Pure shear.
        let d = strain_rate(&[[0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(d, [[0.0, 0.5], [0.5, 0.0]]);
        // Stretch: trace-free diagonal.
        let d = strain_rate(&[[1.0, 0.0], [0.0, -1.0]]);
        assert_eq!(d, [[1.0, 0.0], [0.0, -1.0]]);
        assert_eq!(d[0][0] + d[1][1], 0.0);
        // Rigid rotation is strain-free.
        let d = strain_rate(&[[0.0, -1.0], [1.0, 0.0]]);
        assert_eq!(d, [[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn stress_examples() {
        let law = PowerLaw::new(3.0, 10.0).unwrap();
        assert_eq!(stress(&[[0.0; 2]; 2], &law), [[0.0; 2]; 2]);
        // p = 4 without floor: |D| = √2 gives |D|² = 2.
        let law = PowerLaw::unbounded(4.0).unwrap();
        let s = stress(&[[1.0, 0.0], [0.0, -1.0]], &law);
        assert_relative_eq!(s[0][0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(s[1][1], -2.0, epsilon = 1e-14);
        // p = 2 collapses to Newtonian with floor.
        let law = PowerLaw::new(2.0, 4.0).unwrap();
        let s = stress(&[[0.0, 0.3], [0.3, 0.0]], &law);
        assert_relative_eq!(s[0][1], 1.25 * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn stress_derivative_matches_finite_difference() {
        let law = PowerLaw::new(3.5, 7.0).unwrap();
        let d = [[0.4, -0.1], [-0.1, 0.2]];
        let e = [[0.3, 0.7], [0.7, -0.5]];
        let eps = 1e-7;
        let mut dp = d;
        let mut dm = d;
        for i in 0..2 {
            for j in 0..2 {
                dp[i][j] += eps * e[i][j];
                dm[i][j] -= eps * e[i][j];
            }
        }
        let (sp, sm) = (stress(&dp, &law), stress(&dm, &law));
        let ds = stress_derivative(&d, &e, &law);
        for i in 0..2 {
            for j in 0..2 {
                let fd = (sp[i][j] - sm[i][j]) / (2.0 * eps);
                assert_relative_eq!(ds[i][j], fd, epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn stress_derivative_is_floor_at_zero_strain() {
        let law = PowerLaw::new(3.0, 8.0).unwrap();
        let e = [[1.0, 2.0], [2.0, -1.0]];
        let ds = stress_derivative(&[[0.0; 2]; 2], &e, &law);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(ds[i][j], e[i][j] / 8.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn monotonicity_of_stress_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &p in &[2.0, 2.7, 3.0, 4.5] {
            let law = PowerLaw::new(p, 5.0).unwrap();
            for _ in 0..500 {
                let mut pair = [[[0.0f64; 2]; 2]; 2];
                for t in &mut pair {
                    let (a, b, c) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                    *t = [[a, b], [b, c]];
                }
                let [d1, d2] = pair;
                let (s1, s2) = (stress(&d1, &law), stress(&d2, &law));
                let mut acc = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        acc += (s1[i][j] - s2[i][j]) * (d1[i][j] - d2[i][j]);
                    }
                }
                assert!(acc >= -1e-12, "monotonicity broken at p = {p}: {acc}");
            }
        }
    }

    #[test]
    fn law_validation() {
        assert!(PowerLaw::new(1.5, 1.0).is_err());
        assert!(PowerLaw::new(2.0, 0.0).is_err());
        assert!(PowerLaw::unbounded(2.0).is_ok());
        let law = PowerLaw::new(4.0, 2.0).unwrap();
        assert_relative_eq!(law.conjugate(), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn matrix_market_roundtrip_format() {
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, 2, 2, &[(0, 0, 1.5), (1, 0, -2.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("%%MatrixMarket"));
        assert_eq!(lines.next().unwrap(), "2 2 2");
        assert!(lines.next().unwrap().starts_with("1 1 "));
    }
}
