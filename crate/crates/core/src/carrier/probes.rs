//! Analytic probe fields for the carrier-estimate ratios.

use crate::geometry::OutletDomain;

/// A vector field with an analytic gradient, vanishing on the channel walls.
pub trait ProbeField {
    fn value(&self, x: [f64; 2]) -> [f64; 2];
    fn grad(&self, x: [f64; 2]) -> [[f64; 2]; 2];
}

/// φ(x) = cos(freq·x₁)·(x₂ − f₁)(f₂ − x₂)·dir.
///
/// The parabolic factor puts a zero of first order on both walls for any
/// profile pair, so the probe is admissible on every graph channel.
#[derive(Debug, Clone)]
pub struct BubbleProbe {
    domain: OutletDomain,
    dir: [f64; 2],
    freq: f64,
}

impl BubbleProbe {
    pub fn new(domain: &OutletDomain, dir: [f64; 2], freq: f64) -> Self {
        BubbleProbe {
            domain: domain.clone(),
            dir,
            freq,
        }
    }

    /// Scalar envelope m and its gradient.
    fn envelope(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let ((f1, df1, _), (f2, df2, _)) = self.domain.walls2(x[0]);
        let lo = x[1] - f1;
        let hi = f2 - x[1];
        let c = (self.freq * x[0]).cos();
        let dc = -self.freq * (self.freq * x[0]).sin();
        let p = lo * hi;
        let dp1 = -df1 * hi + lo * df2;
        let dp2 = hi - lo;
        (p * c, [dp1 * c + p * dc, dp2 * c])
    }
}

impl ProbeField for BubbleProbe {
    fn value(&self, x: [f64; 2]) -> [f64; 2] {
        let (m, _) = self.envelope(x);
        [m * self.dir[0], m * self.dir[1]]
    }

    fn grad(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (_, g) = self.envelope(x);
        [
            [self.dir[0] * g[0], self.dir[0] * g[1]],
            [self.dir[1] * g[0], self.dir[1] * g[1]],
        ]
    }
}
