//! Small numerical kernels shared across modules: Gauss rules, root
//! bracketing, and cubic-spline interpolation.

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Nodes are Newton-refined to machine precision, so the rule integrates
/// polynomials of degree 2n-1 exactly up to roundoff.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate `f` over [a, b] with an `n`-point Gauss rule.
pub fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Integrate over [a, b] split into `panels` equal panels, Gauss `n` each.
pub fn integrate_1d_panels(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, n: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let dx = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * dx;
        let mid = lo + 0.5 * dx;
        let half = 0.5 * dx;
        for (x, w) in xs.iter().zip(&ws) {
            acc += w * f(mid + half * x);
        }
    }
    acc * 0.5 * dx
}

/// Bisection for a sign change of `f` on [a, b]. Returns the midpoint of the
/// final bracket. Panics if `f(a)` and `f(b)` have the same sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let mut fa = f(a);
    let fb = f(b);
    assert!(
        fa * fb <= 0.0,
        "bisect: no sign change on [{a}, {b}] ({fa} vs {fb})"
    );
    for _ in 0..iters {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fa * fm <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Quadrature rule on the reference triangle {(x, y) : x, y >= 0, x + y <= 1},
/// stored as barycentric coordinates with weights summing to 1. The integral
/// of f over a physical triangle is `area * sum_i w_i f(p_i)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Barycentric coordinates (l0, l1, l2) per point.
    pub points: Vec<[f64; 3]>,
    /// Weights, normalized to sum to 1.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Symmetric 12-point rule, exact for polynomials of degree <= 6.
    pub fn degree6() -> Self {
        let mut points = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        // Two three-point orbits (a, b, b) and one six-point orbit (a, b, c).
        let orbits3 = [
            (0.501_426_509_658_179, 0.249_286_745_170_910, 0.116_786_275_726_379),
            (0.873_821_971_016_996, 0.063_089_014_491_502, 0.050_844_906_370_207),
        ];
        for &(a, b, w) in &orbits3 {
            for perm in [[a, b, b], [b, a, b], [b, b, a]] {
                points.push(perm);
                weights.push(w);
            }
        }
        let (a, b, c) = (0.053_145_049_844_816, 0.310_352_451_033_785, 0.636_502_499_121_399);
        let w = 0.082_851_075_618_374;
        for perm in [
            [a, b, c],
            [a, c, b],
            [b, a, c],
            [b, c, a],
            [c, a, b],
            [c, b, a],
        ] {
            points.push(perm);
            weights.push(w);
        }
        // Renormalize so the weights sum to exactly 1; the published digits
        // are only good to ~1e-15 and downstream tests compare at 1e-12.
        let s: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= s;
        }
        TriangleRule { points, weights }
    }

    /// Centroid rule (degree 1), used only in coarse estimates.
    pub fn centroid() -> Self {
        TriangleRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }
}

/// Natural cubic spline through (x_i, f_i), x strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    f: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, f: Vec<f64>) -> Self {
        assert!(x.len() == f.len() && x.len() >= 2);
        assert!(x.windows(2).all(|w| w[1] > w[0]), "spline knots must increase");
        let n = x.len();
        // Solve the tridiagonal natural-spline system for second derivatives.
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut diag = vec![0.0; n - 2];
            let mut rhs = vec![0.0; n - 2];
            let mut upper = vec![0.0; n - 2];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((f[i + 1] - f[i]) / h1 - (f[i] - f[i - 1]) / h0);
            }
            // Thomas algorithm; subdiagonal equals the previous upper entry.
            for i in 1..n - 2 {
                let l = x[i + 1] - x[i];
                let w = l / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (0..n - 2).rev() {
                let carry = if i + 1 < n - 2 { upper[i] * m[i + 2] } else { 0.0 };
                m[i + 1] = (rhs[i] - carry) / diag[i];
            }
        }
        CubicSpline { x, f, m }
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        }
    }

    /// Value, first and second derivative at x (clamped-linear outside the knots).
    pub fn eval2(&self, x: f64) -> (f64, f64, f64) {
        let n = self.x.len();
        if x <= self.x[0] {
            let d = self.deriv_at_knot(0);
            return (self.f[0] + d * (x - self.x[0]), d, 0.0);
        }
        if x >= self.x[n - 1] {
            let d = self.deriv_at_knot(n - 1);
            return (self.f[n - 1] + d * (x - self.x[n - 1]), d, 0.0);
        }
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - x) / h;
        let b = (x - self.x[i]) / h;
        let val = a * self.f[i]
            + b * self.f[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0;
        let der = (self.f[i + 1] - self.f[i]) / h
            - (3.0 * a * a - 1.0) / 6.0 * h * self.m[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.m[i + 1];
        let dd = a * self.m[i] + b * self.m[i + 1];
        (val, der, dd)
    }

    fn deriv_at_knot(&self, i: usize) -> f64 {
        let n = self.x.len();
        if i == 0 {
            let h = self.x[1] - self.x[0];
            (self.f[1] - self.f[0]) / h - h / 6.0 * (2.0 * self.m[0] + self.m[1])
        } else {
            let h = self.x[n - 1] - self.x[n - 2];
            (self.f[n - 1] - self.f[n - 2]) / h + h / 6.0 * (self.m[n - 2] + 2.0 * self.m[n - 1])
        }
    }
}
