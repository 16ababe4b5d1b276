//! Residual, Jacobian, and Picard-matrix assembly.
//!
//! The global unknown vector is [velocity | pressure | gauge multiplier].
//! Dirichlet rows are identity rows with residual u_i (so admissible states
//! keep them at zero); the gauge multiplier ties the pressure mean to zero
//! through an exact ∫q_j column. The saddle structure is [A, −Bᵀ; B, 0]
//! plus the gauge bordering, pattern-symmetric throughout.

use super::dof::DofMap;
use super::{
    strain_rate, stress, stress_derivative, tensor_norm, BackgroundField, FemError, PowerLaw,
    Tensor2,
};
use crate::geometry::Mesh;
use crate::numerics::TriangleRule;

/// Which linearization the assembled matrix realizes.
///
/// `Picard` freezes the viscosity and the convecting field at the current
/// state (monotone fixed-point map); `Newton` adds the strain-direction
/// viscosity derivative and the remaining convection derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearizationKind {
    Picard,
    Newton,
}

/// Coefficients of a discrete state (velocity, pressure, multiplier).
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: Vec<f64>,
}

impl Solution {
    pub fn zeros(n: usize) -> Self {
        Solution { state: vec![0.0; n] }
    }
}

/// All pointwise fields of a state at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct QuadSample {
    pub u: [f64; 2],
    pub grad_u: Tensor2,
    pub v: [f64; 2],
    pub grad_v: Tensor2,
    pub pressure: f64,
}

/// Momentum source term: either a constant vector or a pointwise field.
#[derive(Clone, Copy)]
pub enum BodyForce<'a> {
    Constant([f64; 2]),
    Field(&'a dyn Fn([f64; 2]) -> [f64; 2]),
}

impl BodyForce<'_> {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            BodyForce::Constant(f) => *f,
            BodyForce::Field(f) => f(x),
        }
    }
}

pub struct FemSystem<'a> {
    mesh: &'a Mesh,
    dofs: DofMap,
    law: PowerLaw,
    background: &'a dyn BackgroundField,
    body_force: BodyForce<'a>,
    convection: bool,
    rule: TriangleRule,
}

/// Per-element geometric data: barycentric gradients and area.
pub(crate) struct ElementGeometry {
    pub(crate) grad_l: [[f64; 2]; 3],
    pub(crate) area: f64,
}

pub(crate) fn element_geometry(p: &[[f64; 2]; 3]) -> ElementGeometry {
    let d1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
    let d2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
    let det = d1[0] * d2[1] - d2[0] * d1[1];
    let gxi = [d2[1] / det, -d2[0] / det];
    let geta = [-d1[1] / det, d1[0] / det];
    ElementGeometry {
        grad_l: [
            [-gxi[0] - geta[0], -gxi[1] - geta[1]],
            gxi,
            geta,
        ],
        area: 0.5 * det,
    }
}

/// Quadratic shape values and spatial gradients at barycentric l.
pub(crate) fn p2_basis(l: [f64; 3], gl: &[[f64; 2]; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let n = [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ];
    let mut g = [[0.0f64; 2]; 6];
    for d in 0..2 {
        g[0][d] = (4.0 * l[0] - 1.0) * gl[0][d];
        g[1][d] = (4.0 * l[1] - 1.0) * gl[1][d];
        g[2][d] = (4.0 * l[2] - 1.0) * gl[2][d];
        g[3][d] = 4.0 * (l[0] * gl[1][d] + l[1] * gl[0][d]);
        g[4][d] = 4.0 * (l[1] * gl[2][d] + l[2] * gl[1][d]);
        g[5][d] = 4.0 * (l[2] * gl[0][d] + l[0] * gl[2][d]);
    }
    (n, g)
}

impl<'a> FemSystem<'a> {
    pub fn new(mesh: &'a Mesh, law: PowerLaw, background: &'a dyn BackgroundField) -> Self {
        FemSystem {
            dofs: DofMap::new(mesh),
            mesh,
            law,
            background,
            body_force: BodyForce::Constant([0.0; 2]),
            convection: true,
            rule: TriangleRule::degree6(),
        }
    }

    pub fn with_body_force(mut self, f: [f64; 2]) -> Self {
        self.body_force = BodyForce::Constant(f);
        self
    }

    pub fn with_body_force_field(mut self, f: &'a dyn Fn([f64; 2]) -> [f64; 2]) -> Self {
        self.body_force = BodyForce::Field(f);
        self
    }

    pub fn without_convection(mut self) -> Self {
        self.convection = false;
        self
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn law(&self) -> &PowerLaw {
        &self.law
    }

    pub fn set_law(&mut self, law: PowerLaw) {
        self.law = law;
    }

    pub fn background(&self) -> &dyn BackgroundField {
        self.background
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_total()
    }

    fn check_dims(&self, state: &[f64]) -> Result<(), FemError> {
        if state.len() != self.n_dofs() {
            return Err(FemError::DimensionMismatch {
                got: state.len(),
                want: self.n_dofs(),
            });
        }
        Ok(())
    }

    /// Zero state of the right size.
    pub fn zero_solution(&self) -> Solution {
        Solution::zeros(self.n_dofs())
    }

    pub fn assemble_residual(&self, state: &[f64]) -> Result<Vec<f64>, FemError> {
        self.check_dims(state)?;
        let mut res = vec![0.0; self.n_dofs()];
        let mult = self.dofs.multiplier_dof();
        for tri in 0..self.mesh.num_triangles() {
            let verts = self.mesh.triangles()[tri];
            let coords = self.mesh.tri_coords(tri);
            let geo = element_geometry(&coords);
            let nodes = self.dofs.tri_nodes(tri, &verts);
            let mut local = [0.0f64; 15];
            for (lq, wq) in self.rule.points.iter().zip(&self.rule.weights) {
                let w = wq * geo.area;
                let (n, g) = p2_basis(*lq, &geo.grad_l);
                let x = phys_point(*lq, &coords);
                let (u, gu) = velocity_at(state, &nodes, &n, &g);
                let pres = lq[0] * state[self.dofs.pressure_dof(verts[0])]
                    + lq[1] * state[self.dofs.pressure_dof(verts[1])]
                    + lq[2] * state[self.dofs.pressure_dof(verts[2])];
                let (a, ga) = self.background.eval_with_grad(x);
                let v = [u[0] + a[0], u[1] + a[1]];
                let gv = add_t(&gu, &ga);
                let d = strain_rate(&gv);
                let s = stress(&d, &self.law);
                let force = self.body_force.eval(x);
                for sn in 0..6 {
                    for c in 0..2 {
                        let mut r = s[c][0] * g[sn][0] + s[c][1] * g[sn][1];
                        if self.convection {
                            let vdgv = v[0] * gv[c][0] + v[1] * gv[c][1];
                            let vdgn = v[0] * g[sn][0] + v[1] * g[sn][1];
                            r += 0.5 * (vdgv * n[sn] - vdgn * v[c]);
                        }
                        r -= pres * g[sn][c];
                        r -= force[c] * n[sn];
                        local[2 * sn + c] += w * r;
                    }
                }
                let divu = gu[0][0] + gu[1][1];
                for j in 0..3 {
                    local[12 + j] += w * lq[j] * divu;
                }
            }
            for sn in 0..6 {
                for c in 0..2 {
                    let dof = DofMap::velocity_dof(nodes[sn], c);
                    if !self.dofs.is_constrained(dof) {
                        res[dof] += local[2 * sn + c];
                    }
                }
            }
            // Pressure rows and the exact gauge pairing ∫q_j = area/3.
            let m = geo.area / 3.0;
            for j in 0..3 {
                let pd = self.dofs.pressure_dof(verts[j]);
                res[pd] += local[12 + j] + m * state[mult];
                res[mult] += m * state[pd];
            }
        }
        for (dof, &fixed) in self.dofs.constrained_flags().iter().enumerate() {
            if fixed {
                res[dof] = state[dof];
            }
        }
        Ok(res)
    }

    /// Sparse matrix of the chosen linearization at `state`, as coordinate
    /// triplets with duplicate entries meant to be summed.
    pub fn assemble_matrix(
        &self,
        state: &[f64],
        kind: LinearizationKind,
    ) -> Result<Vec<(usize, usize, f64)>, FemError> {
        self.check_dims(state)?;
        let mut trips: Vec<(usize, usize, f64)> =
            Vec::with_capacity(self.mesh.num_triangles() * 240);
        let mult = self.dofs.multiplier_dof();
        let newton = kind == LinearizationKind::Newton;
        for tri in 0..self.mesh.num_triangles() {
            let verts = self.mesh.triangles()[tri];
            let coords = self.mesh.tri_coords(tri);
            let geo = element_geometry(&coords);
            let nodes = self.dofs.tri_nodes(tri, &verts);
            let mut vv = [[0.0f64; 12]; 12];
            let mut vp = [[0.0f64; 3]; 12];
            for (lq, wq) in self.rule.points.iter().zip(&self.rule.weights) {
                let w = wq * geo.area;
                let (n, g) = p2_basis(*lq, &geo.grad_l);
                let x = phys_point(*lq, &coords);
                let (u, gu) = velocity_at(state, &nodes, &n, &g);
                let (a, ga) = self.background.eval_with_grad(x);
                let v = [u[0] + a[0], u[1] + a[1]];
                let gv = add_t(&gu, &ga);
                let d = strain_rate(&gv);
                let dn = tensor_norm(&d);
                let nu = self.law.viscosity(dn);
                for tn in 0..6 {
                    for e in 0..2 {
                        // Trial strain E = sym(e_e ⊗ ∇N_tn).
                        let mut et = [[0.0f64; 2]; 2];
                        for i in 0..2 {
                            for jj in 0..2 {
                                et[i][jj] = 0.5
                                    * (delta(i, e) * g[tn][jj] + delta(jj, e) * g[tn][i]);
                            }
                        }
                        let ds = if newton {
                            stress_derivative(&d, &et, &self.law)
                        } else {
                            [
                                [nu * et[0][0], nu * et[0][1]],
                                [nu * et[1][0], nu * et[1][1]],
                            ]
                        };
                        for sn in 0..6 {
                            for c in 0..2 {
                                let mut val = ds[c][0] * g[sn][0] + ds[c][1] * g[sn][1];
                                if self.convection {
                                    // Frozen-field part b(v; w, φ).
                                    if c == e {
                                        let vdgt = v[0] * g[tn][0] + v[1] * g[tn][1];
                                        let vdgs = v[0] * g[sn][0] + v[1] * g[sn][1];
                                        val += 0.5 * (vdgt * n[sn] - vdgs * n[tn]);
                                    }
                                    if newton {
                                        // Transport of the state: b(w; v, φ).
                                        val += 0.5
                                            * (n[tn] * n[sn] * gv[c][e]
                                                - n[tn] * g[sn][e] * v[c]);
                                    }
                                }
                                vv[2 * sn + c][2 * tn + e] += w * val;
                            }
                        }
                    }
                }
                for sn in 0..6 {
                    for c in 0..2 {
                        for j in 0..3 {
                            vp[2 * sn + c][j] -= w * lq[j] * g[sn][c];
                        }
                    }
                }
            }
            for sn in 0..6 {
                for c in 0..2 {
                    let row = DofMap::velocity_dof(nodes[sn], c);
                    if self.dofs.is_constrained(row) {
                        continue;
                    }
                    for tn in 0..6 {
                        for e in 0..2 {
                            let col = DofMap::velocity_dof(nodes[tn], e);
                            if !self.dofs.is_constrained(col) {
                                trips.push((row, col, vv[2 * sn + c][2 * tn + e]));
                            }
                        }
                    }
                    for j in 0..3 {
                        let pcol = self.dofs.pressure_dof(verts[j]);
                        let val = vp[2 * sn + c][j];
                        trips.push((row, pcol, val));
                        // Divergence row: +B, the pattern mirror of −Bᵀ.
                        trips.push((pcol, row, -val));
                    }
                }
            }
            let m = geo.area / 3.0;
            for j in 0..3 {
                let pd = self.dofs.pressure_dof(verts[j]);
                trips.push((pd, mult, m));
                trips.push((mult, pd, m));
            }
        }
        for (dof, &fixed) in self.dofs.constrained_flags().iter().enumerate() {
            if fixed {
                trips.push((dof, dof, 1.0));
            }
        }
        Ok(trips)
    }

    /// Visits every quadrature point with its weight and state sample.
    pub fn for_each_quad_point<F: FnMut([f64; 2], f64, &QuadSample)>(
        &self,
        state: &[f64],
        mut f: F,
    ) {
        for tri in 0..self.mesh.num_triangles() {
            let verts = self.mesh.triangles()[tri];
            let coords = self.mesh.tri_coords(tri);
            let geo = element_geometry(&coords);
            let nodes = self.dofs.tri_nodes(tri, &verts);
            for (lq, wq) in self.rule.points.iter().zip(&self.rule.weights) {
                let w = wq * geo.area;
                let (n, g) = p2_basis(*lq, &geo.grad_l);
                let x = phys_point(*lq, &coords);
                let (u, gu) = velocity_at(state, &nodes, &n, &g);
                let (a, ga) = self.background.eval_with_grad(x);
                let pres = lq[0] * state[self.dofs.pressure_dof(verts[0])]
                    + lq[1] * state[self.dofs.pressure_dof(verts[1])]
                    + lq[2] * state[self.dofs.pressure_dof(verts[2])];
                let sample = QuadSample {
                    u,
                    grad_u: gu,
                    v: [u[0] + a[0], u[1] + a[1]],
                    grad_v: add_t(&gu, &ga),
                    pressure: pres,
                };
                f(x, w, &sample);
            }
        }
    }

    /// Nodal interpolation of an analytic velocity field into an admissible
    /// state (boundary nodes forced to zero).
    pub fn interpolate_velocity(&self, f: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut state = vec![0.0; self.n_dofs()];
        for node in 0..self.dofs.n_scalar_nodes() {
            let val = f(self.dofs.node_coords(node));
            for c in 0..2 {
                let dof = DofMap::velocity_dof(node, c);
                if !self.dofs.is_constrained(dof) {
                    state[dof] = val[c];
                }
            }
        }
        state
    }

    /// Point value of the discrete velocity u (background excluded).
    pub fn eval_velocity(&self, state: &[f64], x: [f64; 2]) -> Option<[f64; 2]> {
        self.eval_velocity_grad(state, x).map(|(u, _)| u)
    }

    pub fn eval_velocity_grad(&self, state: &[f64], x: [f64; 2]) -> Option<([f64; 2], Tensor2)> {
        let (tri, l) = self.mesh.locate(x)?;
        let verts = self.mesh.triangles()[tri];
        let coords = self.mesh.tri_coords(tri);
        let geo = element_geometry(&coords);
        let nodes = self.dofs.tri_nodes(tri, &verts);
        let (n, g) = p2_basis(l, &geo.grad_l);
        Some(velocity_at(state, &nodes, &n, &g))
    }

    pub fn eval_pressure(&self, state: &[f64], x: [f64; 2]) -> Option<f64> {
        let (tri, l) = self.mesh.locate(x)?;
        let verts = self.mesh.triangles()[tri];
        Some(
            l[0] * state[self.dofs.pressure_dof(verts[0])]
                + l[1] * state[self.dofs.pressure_dof(verts[1])]
                + l[2] * state[self.dofs.pressure_dof(verts[2])],
        )
    }

    /// Area-weighted mean of the discrete pressure.
    pub fn pressure_mean(&self, state: &[f64]) -> f64 {
        let mut int = 0.0;
        let mut area = 0.0;
        for tri in 0..self.mesh.num_triangles() {
            let verts = self.mesh.triangles()[tri];
            let a = self.mesh.tri_area(tri);
            let s: f64 = verts
                .iter()
                .map(|&v| state[self.dofs.pressure_dof(v)])
                .sum();
            int += a * s / 3.0;
            area += a;
        }
        int / area
    }

    /// L² norm of div u, the discrete-divergence diagnostic.
    pub fn divergence_norm(&self, state: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_quad_point(state, |_, w, s| {
            let d = s.grad_u[0][0] + s.grad_u[1][1];
            acc += w * d * d;
        });
        acc.sqrt()
    }

    /// Flux of v = u + a through the vertical segment [lo, hi] at x₁,
    /// by composite Gauss panels (kinks at element boundaries limit the
    /// per-panel rate, so panels stay fine).
    pub fn flux_through(&self, state: &[f64], x1: f64, lo: f64, hi: f64) -> f64 {
        let integrand = |x2: f64| {
            let x = [x1, x2];
            let u1 = self.eval_velocity(state, x).map_or(0.0, |u| u[0]);
            let (a, _) = self.background.eval_with_grad(x);
            u1 + a[0]
        };
        crate::numerics::integrate_1d_panels(&integrand, lo, hi, 96, 8)
    }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn phys_point(l: [f64; 3], coords: &[[f64; 2]; 3]) -> [f64; 2] {
    [
        l[0] * coords[0][0] + l[1] * coords[1][0] + l[2] * coords[2][0],
        l[0] * coords[0][1] + l[1] * coords[1][1] + l[2] * coords[2][1],
    ]
}

fn velocity_at(
    state: &[f64],
    nodes: &[usize; 6],
    n: &[f64; 6],
    g: &[[f64; 2]; 6],
) -> ([f64; 2], Tensor2) {
    let mut u = [0.0f64; 2];
    let mut gu = [[0.0f64; 2]; 2];
    for sn in 0..6 {
        for c in 0..2 {
            let coef = state[DofMap::velocity_dof(nodes[sn], c)];
            u[c] += n[sn] * coef;
            gu[c][0] += g[sn][0] * coef;
            gu[c][1] += g[sn][1] * coef;
        }
    }
    (u, gu)
}

fn add_t(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}
