//! Planar outlet domains with graph walls, their truncations, slices, and
//! cross-sections.
//!
//! A domain is the set {(x1, x2) : f1(x1) < x2 < f2(x1)} for two wall profiles
//! f1 <= -l1/2 and f2 >= l1/2, so it contains the cylinder |x2| < l1/2 and has
//! cross-section width at most l2. Outlet 1 is the half x1 < 0, outlet 2 the
//! half x1 > 0; the core sits around x1 = 0. All profile kinds expose value,
//! slope, and curvature so downstream fields can be differentiated in closed
//! form.

mod mesh;

pub use mesh::{BoundaryTag, Mesh};

use crate::numerics::{integrate_1d_panels, CubicSpline};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of `l1` below which a mesh size no longer resolves the cylinder.
const MESH_H_MAX_FRACTION: f64 = 0.25;
/// Half-length of the default profile-validation window.
const VALIDATION_HALF_LENGTH: f64 = 64.0;
/// Samples per unit length when validating profiles.
const VALIDATION_DENSITY: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("cylinder violation at x1 = {x1}: wall at {value} enters |x2| < l1/2 = {half_l1}")]
    CylinderViolation { x1: f64, value: f64, half_l1: f64 },
    #[error("diameter violation at x1 = {x1}: width {width} exceeds l2 = {l2}")]
    DiameterViolation { x1: f64, width: f64, l2: f64 },
    #[error("length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("bad slice interval [{t0}, {t1}]: need 0 <= t0 < t1")]
    BadInterval { t0: f64, t1: f64 },
    #[error("x1 = {x1} is not on outlet {outlet:?}'s side")]
    WrongSide { x1: f64, outlet: Outlet },
    #[error("mesh failure: {0}")]
    MeshFailure(String),
    #[error("l1 = {l1} must be positive and no larger than l2 = {l2}")]
    BadWidths { l1: f64, l2: f64 },
}

/// Wall profile as a function of x1, with analytic derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// f(x1) = value.
    Constant { value: f64 },
    /// f(x1) = base + amp * sin(freq * x1).
    Sine { base: f64, amp: f64, freq: f64 },
    /// f(x1) = base + amp * exp(-(x1/width)^2), a smooth bulge at the core.
    Bump { base: f64, amp: f64, width: f64 },
    /// Tabulated values with natural-cubic interpolation (linear outside).
    Table { x: Vec<f64>, f: Vec<f64> },
}

impl Profile {
    pub fn value(&self, x1: f64) -> f64 {
        self.eval2(x1).0
    }

    /// Value, first, and second derivative at x1.
    pub fn eval2(&self, x1: f64) -> (f64, f64, f64) {
        match self {
            Profile::Constant { value } => (*value, 0.0, 0.0),
            Profile::Sine { base, amp, freq } => {
                let (s, c) = (freq * x1).sin_cos();
                (base + amp * s, amp * freq * c, -amp * freq * freq * s)
            }
            Profile::Bump { base, amp, width } => {
                let u = x1 / width;
                let e = (-u * u).exp();
                let v = base + amp * e;
                let d = amp * e * (-2.0 * u) / width;
                let dd = amp * e * (4.0 * u * u - 2.0) / (width * width);
                (v, d, dd)
            }
            Profile::Table { x, f } => {
                // Splines are rebuilt lazily per call site via `spline`; the
                // enum stays plain data so configs round-trip through serde.
                CubicSpline::new(x.clone(), f.clone()).eval2(x1)
            }
        }
    }

    /// Negated profile: x1 -> -f(x1). Used for symmetric channels f1 = -f2.
    pub fn negated(&self) -> Profile {
        match self {
            Profile::Constant { value } => Profile::Constant { value: -value },
            Profile::Sine { base, amp, freq } => Profile::Sine {
                base: -base,
                amp: -amp,
                freq: *freq,
            },
            Profile::Bump { base, amp, width } => Profile::Bump {
                base: -base,
                amp: -amp,
                width: *width,
            },
            Profile::Table { x, f } => Profile::Table {
                x: x.clone(),
                f: f.iter().map(|v| -v).collect(),
            },
        }
    }
}

/// Compiled profile with a prebuilt spline for the table kind, so repeated
/// evaluation inside quadrature loops does not re-assemble the spline.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CompiledProfile {
    Analytic(Profile),
    Spline(CubicSpline),
}

impl CompiledProfile {
    fn new(p: &Profile) -> Self {
        match p {
            Profile::Table { x, f } => {
                CompiledProfile::Spline(CubicSpline::new(x.clone(), f.clone()))
            }
            other => CompiledProfile::Analytic(other.clone()),
        }
    }

    pub(crate) fn eval2(&self, x1: f64) -> (f64, f64, f64) {
        match self {
            CompiledProfile::Analytic(p) => p.eval2(x1),
            CompiledProfile::Spline(s) => s.eval2(x1),
        }
    }

    pub(crate) fn value(&self, x1: f64) -> f64 {
        self.eval2(x1).0
    }
}

/// Outlet index; the paper-facing convention is that outlet 1 occupies
/// x1 < 0 and outlet 2 occupies x1 > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outlet {
    One,
    Two,
}

impl Outlet {
    /// Sign s with the outlet occupying s * x1 > 0.
    pub fn sign(self) -> f64 {
        match self {
            Outlet::One => -1.0,
            Outlet::Two => 1.0,
        }
    }

    pub const BOTH: [Outlet; 2] = [Outlet::One, Outlet::Two];
}

/// Planar two-outlet domain bounded by graph walls.
#[derive(Debug, Clone, PartialEq)]
pub struct OutletDomain {
    lower: Profile,
    upper: Profile,
    lower_c: CompiledProfile,
    upper_c: CompiledProfile,
    l1: f64,
    l2: f64,
}

/// Profile descriptors plus the cylinder/diameter widths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Upper wall f2; the lower wall defaults to its mirror image -f2.
    pub profile: Profile,
    /// Explicit lower wall f1 (overrides the mirror default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Profile>,
    pub l1: f64,
    pub l2: f64,
}

/// Builds and validates an outlet domain on a dense sample grid.
pub fn build_outlet_domain(spec: &DomainSpec) -> Result<OutletDomain, GeometryError> {
    let upper = spec.profile.clone();
    let lower = spec.lower.clone().unwrap_or_else(|| upper.negated());
    OutletDomain::new(lower, upper, spec.l1, spec.l2)
}

impl OutletDomain {
    pub fn new(lower: Profile, upper: Profile, l1: f64, l2: f64) -> Result<Self, GeometryError> {
        if !(l1 > 0.0) || l1 > l2 {
            return Err(GeometryError::BadWidths { l1, l2 });
        }
        let dom = OutletDomain {
            lower_c: CompiledProfile::new(&lower),
            upper_c: CompiledProfile::new(&upper),
            lower,
            upper,
            l1,
            l2,
        };
        dom.validate(VALIDATION_HALF_LENGTH)?;
        Ok(dom)
    }

    /// Re-checks the wall invariants on a dense grid over |x1| <= t.
    pub fn validate(&self, t: f64) -> Result<(), GeometryError> {
        let n = ((2.0 * t) * VALIDATION_DENSITY as f64).ceil() as usize;
        let half_l1 = self.l1 / 2.0;
        for i in 0..=n {
            let x1 = -t + 2.0 * t * i as f64 / n as f64;
            let lo = self.lower_c.value(x1);
            let hi = self.upper_c.value(x1);
            if hi < half_l1 {
                return Err(GeometryError::CylinderViolation { x1, value: hi, half_l1 });
            }
            if lo > -half_l1 {
                return Err(GeometryError::CylinderViolation { x1, value: lo, half_l1 });
            }
            let width = hi - lo;
            if width > self.l2 * (1.0 + 1e-12) {
                return Err(GeometryError::DiameterViolation { x1, width, l2: self.l2 });
            }
        }
        Ok(())
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn lower_profile(&self) -> &Profile {
        &self.lower
    }

    pub fn upper_profile(&self) -> &Profile {
        &self.upper
    }

    /// Lower and upper wall heights at x1.
    pub fn walls(&self, x1: f64) -> (f64, f64) {
        (self.lower_c.value(x1), self.upper_c.value(x1))
    }

    /// Wall heights with first and second derivatives, for field assembly.
    pub fn walls2(&self, x1: f64) -> ((f64, f64, f64), (f64, f64, f64)) {
        (self.lower_c.eval2(x1), self.upper_c.eval2(x1))
    }

    pub fn width(&self, x1: f64) -> f64 {
        let (lo, hi) = self.walls(x1);
        hi - lo
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        let (lo, hi) = self.walls(x[0]);
        lo < x[1] && x[1] < hi
    }

    /// True boundary distance, by dense sampling of both walls near x1.
    /// Oracle-grade (slow); production code uses the regularized distance.
    pub fn boundary_distance_sampled(&self, x: [f64; 2], window: f64, n: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let s = x[0] - window + 2.0 * window * i as f64 / n as f64;
            let (lo, hi) = self.walls(s);
            for wall in [lo, hi] {
                let d = ((x[0] - s).powi(2) + (x[1] - wall).powi(2)).sqrt();
                if d < best {
                    best = d;
                }
            }
        }
        best
    }

    pub fn truncate(&self, t: f64) -> Result<TruncatedDomain, GeometryError> {
        if !(t > 0.0) {
            return Err(GeometryError::NonPositiveLength(t));
        }
        if t > VALIDATION_HALF_LENGTH {
            self.validate(t)?;
        }
        Ok(TruncatedDomain {
            domain: self.clone(),
            t,
        })
    }

    /// Region between x1-lengths t0 and t1 along outlet `i`.
    pub fn slice(&self, i: Outlet, t0: f64, t1: f64) -> Result<Slice, GeometryError> {
        if !(0.0 <= t0 && t0 < t1) {
            return Err(GeometryError::BadInterval { t0, t1 });
        }
        Ok(Slice { outlet: i, t0, t1 })
    }

    /// Vertical cross-section of outlet `i` at coordinate x1. The normal
    /// always points from outlet 1 toward outlet 2, i.e. along +x1.
    pub fn cross_section(&self, i: Outlet, x1: f64) -> Result<CrossSection, GeometryError> {
        if x1 * i.sign() <= 0.0 {
            return Err(GeometryError::WrongSide { x1, outlet: i });
        }
        Ok(self.section_at(x1))
    }

    /// Cross-section at arbitrary x1 (no outlet-side check); used internally
    /// for flux certification at many stations.
    pub fn section_at(&self, x1: f64) -> CrossSection {
        let (lo, hi) = self.walls(x1);
        CrossSection {
            x1,
            lo,
            hi,
            normal: [1.0, 0.0],
        }
    }
}

/// Truncation {x in domain : |x1| < t}.
#[derive(Debug, Clone)]
pub struct TruncatedDomain {
    domain: OutletDomain,
    t: f64,
}

impl TruncatedDomain {
    pub fn domain(&self) -> &OutletDomain {
        &self.domain
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0].abs() < self.t && self.domain.contains(x)
    }

    /// Region area by 1D quadrature of the width.
    pub fn area(&self) -> f64 {
        let panels = (2.0 * self.t).ceil() as usize * 4;
        integrate_1d_panels(&|x1| self.domain.width(x1), -self.t, self.t, panels.max(8), 16)
    }

    /// Triangulates the truncation; `h` is the target element size.
    pub fn mesh(&self, h: f64) -> Result<Mesh, GeometryError> {
        if !(h > 0.0) {
            return Err(GeometryError::MeshFailure(format!("nonpositive h = {h}")));
        }
        if h >= self.domain.l1 * MESH_H_MAX_FRACTION {
            return Err(GeometryError::MeshFailure(format!(
                "h = {h} too coarse to resolve the cylinder (need h < l1/4 = {})",
                self.domain.l1 * MESH_H_MAX_FRACTION
            )));
        }
        Mesh::from_truncation(self, h)
    }
}

/// Slab {x in outlet i : t0 < sign_i * x1 < t1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slice {
    pub outlet: Outlet,
    pub t0: f64,
    pub t1: f64,
}

impl Slice {
    /// Membership test in the global chart.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let s = self.outlet.sign() * x[0];
        self.t0 < s && s < self.t1
    }

    /// Area by quadrature of the width over the x1 interval.
    pub fn area(&self, domain: &OutletDomain) -> f64 {
        let sgn = self.outlet.sign();
        let (a, b) = if sgn > 0.0 {
            (self.t0, self.t1)
        } else {
            (-self.t1, -self.t0)
        };
        let panels = ((b - a).ceil() as usize * 8).max(8);
        integrate_1d_panels(&|x1| domain.width(x1), a, b, panels, 16)
    }
}

/// Vertical segment [lo, hi] at station x1 with its flux normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSection {
    pub x1: f64,
    pub lo: f64,
    pub hi: f64,
    pub normal: [f64; 2],
}

impl CrossSection {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Convenience constructor for the constant-wall channel of half-width 1/2.
pub fn straight_channel() -> OutletDomain {
    OutletDomain::new(
        Profile::Constant { value: -0.5 },
        Profile::Constant { value: 0.5 },
        1.0,
        1.0,
    )
    .expect("straight channel is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wavy() -> OutletDomain {
        let upper = Profile::Sine {
            base: 0.75,
            amp: 0.2,
            freq: 1.0,
        };
        OutletDomain::new(upper.negated(), upper, 1.0, 2.0).unwrap()
    }

    #[test]
    fn straight_channel_is_valid() {
        let d = straight_channel();
        assert_eq!(d.walls(3.0), (-0.5, 0.5));
        assert_eq!(d.width(-7.0), 1.0);
    }

    #[test]
    fn wavy_channel_is_valid_and_widths_bounded() {
        let d = wavy();
        for i in 0..200 {
            let x1 = -20.0 + 0.2 * i as f64;
            let w = d.width(x1);
            assert!((1.1..=1.9 + 1e-12).contains(&w), "width {w} at {x1}");
            assert!(w >= d.l1() && w <= d.l2() + 1e-12);
        }
    }

    #[test]
    fn low_wall_is_cylinder_violation() {
        let r = OutletDomain::new(
            Profile::Constant { value: -0.4 },
            Profile::Constant { value: 0.4 },
            1.0,
            1.0,
        );
        assert!(matches!(r, Err(GeometryError::CylinderViolation { .. })));
    }

    #[test]
    fn diameter_violation_detected() {
        let r = OutletDomain::new(
            Profile::Constant { value: -1.5 },
            Profile::Constant { value: 1.5 },
            1.0,
            2.0,
        );
        assert!(matches!(r, Err(GeometryError::DiameterViolation { .. })));
    }

    #[test]
    fn truncation_rectangle_and_containment() {
        let d = straight_channel();
        let t5 = d.truncate(5.0).unwrap();
        assert!(t5.contains([4.9, 0.49]));
        assert!(!t5.contains([5.1, 0.0]));
        assert!(!t5.contains([0.0, 0.6]));
        let t3 = d.truncate(3.0).unwrap();
        for i in 0..100 {
            let x = [-3.0 + 0.06 * i as f64, -0.45 + 0.009 * i as f64];
            if t3.contains(x) {
                assert!(t5.contains(x), "monotone truncation at {x:?}");
            }
        }
        assert!(d.truncate(0.0).is_err());
    }

    #[test]
    fn truncation_area_matches_quadrature() {
        let d = straight_channel();
        assert_relative_eq!(d.truncate(5.0).unwrap().area(), 10.0, epsilon = 1e-12);
        let w = wavy();
        let t = std::f64::consts::TAU;
        // For f2 = 0.75 + 0.2 sin and f1 = -f2 the width integrates to 3 per
        // unit length over a full period.
        assert_relative_eq!(w.truncate(t).unwrap().area(), 2.0 * t * 1.5, epsilon = 1e-10);
    }

    #[test]
    fn slice_area_straight() {
        let d = straight_channel();
        let s = d.slice(Outlet::One, 4.0, 5.0).unwrap();
        assert_relative_eq!(s.area(&d), 1.0, epsilon = 1e-12);
        assert!(s.contains([-4.5, 0.0]));
        assert!(!s.contains([4.5, 0.0]));
        assert!(d.slice(Outlet::One, 4.0, 4.0).is_err());
    }

    #[test]
    fn slice_additivity() {
        let w = wavy();
        for outlet in Outlet::BOTH {
            let whole = w.slice(outlet, 1.0, 4.0).unwrap().area(&w);
            let a = w.slice(outlet, 1.0, 2.5).unwrap().area(&w);
            let b = w.slice(outlet, 2.5, 4.0).unwrap().area(&w);
            assert_relative_eq!(whole, a + b, epsilon = 1e-10);
        }
    }

    #[test]
    fn cross_section_normal_points_downstream() {
        let d = straight_channel();
        let s = d.cross_section(Outlet::Two, 3.0).unwrap();
        assert_eq!(s.normal, [1.0, 0.0]);
        assert_eq!((s.lo, s.hi), (-0.5, 0.5));
        // Outlet 1 sections still carry the +x1 normal.
        let s = d.cross_section(Outlet::One, -3.0).unwrap();
        assert_eq!(s.normal, [1.0, 0.0]);
        assert!(d.cross_section(Outlet::One, 3.0).is_err());
    }

    #[test]
    fn wavy_cross_section_width() {
        let w = wavy();
        let s = w.cross_section(Outlet::Two, std::f64::consts::FRAC_PI_2).unwrap();
        assert_relative_eq!(s.width(), 1.9, epsilon = 1e-12);
    }

    #[test]
    fn bump_profile_derivatives_consistent() {
        let p = Profile::Bump {
            base: 0.75,
            amp: 0.5,
            width: 2.0,
        };
        let eps = 1e-6;
        for &x in &[-3.0, -0.7, 0.0, 1.3, 4.0] {
            let (_, d, dd) = p.eval2(x);
            let fd = (p.value(x + eps) - p.value(x - eps)) / (2.0 * eps);
            let fdd = (p.value(x + eps) - 2.0 * p.value(x) + p.value(x - eps)) / (eps * eps);
            assert_relative_eq!(d, fd, epsilon = 1e-8, max_relative = 1e-8);
            assert!((dd - fdd).abs() < 1e-3);
        }
    }

    #[test]
    fn table_profile_tracks_samples() {
        let xs: Vec<f64> = (0..=80).map(|i| -10.0 + 0.25 * i as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|x| 0.75 + 0.2 * (x).sin()).collect();
        let p = Profile::Table { x: xs, f: fs };
        for &x in &[-5.3, -1.1, 0.0, 2.7, 8.9] {
            assert_relative_eq!(p.value(x), 0.75 + 0.2 * x.sin(), epsilon = 1e-4);
        }
    }

    #[test]
    fn boundary_distance_oracle_straight() {
        let d = straight_channel();
        let dist = d.boundary_distance_sampled([0.0, 0.3], 2.0, 4000);
        assert_relative_eq!(dist, 0.2, epsilon = 1e-6);
    }
}
